use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("row {row}, column {column}: value {value} is not a ternary code (expected 0, 1 or 2)")]
    NonTernary { row: usize, column: usize, value: u8 },

    #[error("row {row}: phenotype {value} is not -1 or +1")]
    InvalidLabel { row: usize, value: i8 },

    #[error("duplicate predictor name {0:?}")]
    DuplicateName(String),

    #[error("{context}: both cases and controls are required")]
    SingleClass { context: String },

    #[error("fold {fold}: {part} set lacks one of the classes")]
    DegenerateFold { fold: usize, part: FoldPart },

    #[error("search needs {required} cell updates, above the cap of {cap}")]
    SearchTooLarge { required: u128, cap: u128 },

    #[error("no legal neighbor move exists for the current forest")]
    NoLegalMove,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldPart {
    Test,
    Training,
}

impl core::fmt::Display for FoldPart {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            FoldPart::Test => "test",
            FoldPart::Training => "training",
        })
    }
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn single_class(context: impl Into<String>) -> Self {
        Error::SingleClass { context: context.into() }
    }
}
