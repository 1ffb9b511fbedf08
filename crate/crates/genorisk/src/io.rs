//! CSV datasets: a header row, one phenotype column and ternary predictor
//! columns.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use genorisk_core::{Dataset, Label, PredictorKind};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhenotypeCoding {
    /// -1 control, 1 case.
    #[default]
    Signed,
    /// 0 control, 1 case.
    Binary,
}

/// Which columns hold what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub phenotype: String,
    #[serde(default)]
    pub phenotype_coding: PhenotypeCoding,
    #[serde(default = "default_separator")]
    pub separator: char,
    /// Predictor columns in order; every other column when absent.
    #[serde(default)]
    pub predictors: Option<Vec<String>>,
    /// Predictor columns tagged as external risk factors.
    #[serde(default)]
    pub external: Vec<String>,
}

fn default_separator() -> char {
    ','
}

impl ColumnSpec {
    pub fn new(phenotype: &str) -> ColumnSpec {
        ColumnSpec {
            phenotype: phenotype.to_string(),
            phenotype_coding: PhenotypeCoding::Signed,
            separator: ',',
            predictors: None,
            external: Vec::new(),
        }
    }

    fn delimiter(&self) -> Result<u8> {
        u8::try_from(self.separator)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| Error::config("dataset.separator", "separator must be a single ASCII character"))
    }
}

pub fn load_dataset(path: &Path, spec: &ColumnSpec) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, spec, &path.display().to_string())
}

/// Parse a dataset; `source_name` labels error messages.
pub fn read_dataset<R: Read>(reader: R, spec: &ColumnSpec, source_name: &str) -> Result<Dataset> {
    let data_err = |line: u64, column: Option<&str>, message: String| Error::Data {
        source_name: source_name.to_string(),
        line,
        column: column.map(str::to_string),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().delimiter(spec.delimiter()?).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| data_err(1, None, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| data_err(1, Some(name), "unknown column".into()))
    };
    let pheno = find(&spec.phenotype)?;
    let predictors: Vec<usize> = match &spec.predictors {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&c| c != pheno).collect(),
    };
    if predictors.is_empty() {
        return Err(data_err(1, None, "no predictor columns".into()));
    }
    if predictors.contains(&pheno) {
        return Err(data_err(1, Some(&spec.phenotype), "phenotype column listed as a predictor".into()));
    }
    let names: Vec<String> = predictors.iter().map(|&c| header[c].clone()).collect();
    for e in &spec.external {
        if !names.contains(e) {
            return Err(data_err(1, Some(e), "external column is not a predictor column".into()));
        }
    }
    let kinds: Vec<PredictorKind> = names
        .iter()
        .map(|n| if spec.external.contains(n) { PredictorKind::External } else { PredictorKind::Genetic })
        .collect();

    let mut cells = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            data_err(line, None, e.to_string())
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        if record.len() != header.len() {
            return Err(data_err(line, None, format!("{} fields, header has {}", record.len(), header.len())));
        }
        let raw = &record[pheno];
        let label = match (spec.phenotype_coding, raw) {
            (PhenotypeCoding::Signed, "-1") | (PhenotypeCoding::Binary, "0") => Label::Control,
            (PhenotypeCoding::Signed, "1" | "+1") | (PhenotypeCoding::Binary, "1") => Label::Case,
            _ => {
                let expected = match spec.phenotype_coding {
                    PhenotypeCoding::Signed => "-1 or 1",
                    PhenotypeCoding::Binary => "0 or 1",
                };
                return Err(data_err(line, Some(&spec.phenotype), format!("phenotype {raw:?} is not {expected}")));
            }
        };
        labels.push(label);
        for (&c, name) in predictors.iter().zip(&names) {
            let v = &record[c];
            if v.is_empty() {
                return Err(data_err(line, Some(name), "missing value".into()));
            }
            match v.parse::<u8>() {
                Ok(x) if x <= 2 => cells.push(x),
                _ => return Err(data_err(line, Some(name), format!("value {v:?} is not a ternary code 0, 1 or 2"))),
            }
        }
    }
    if labels.is_empty() {
        return Err(data_err(1, None, "no data rows".into()));
    }
    Dataset::new(cells, names.len(), labels, names, kinds)
        .map_err(|e| data_err(1, None, e.to_string()))
}

/// Write with the phenotype first, coded -1 / 1.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W, phenotype: &str, separator: char) -> Result<()> {
    let spec = ColumnSpec { separator, ..ColumnSpec::new(phenotype) };
    let mut w = csv::WriterBuilder::new().delimiter(spec.delimiter()?).from_writer(writer);
    let wrap = |e: csv::Error| Error::Data { source_name: "output".into(), line: 0, column: None, message: e.to_string() };
    let mut header = vec![phenotype.to_string()];
    header.extend(ds.names().iter().cloned());
    w.write_record(&header).map_err(wrap)?;
    for j in 0..ds.n_rows() {
        let mut rec = vec![ds.label(j).as_i8().to_string()];
        rec.extend(ds.row(j).iter().map(u8::to_string));
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("output", e))
}

pub fn save_dataset(ds: &Dataset, path: &Path, phenotype: &str, separator: char) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(ds, std::io::BufWriter::new(file), phenotype, separator)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, spec: &ColumnSpec) -> Result<Dataset> {
        read_dataset(text.as_bytes(), spec, "test.csv")
    }

    #[test]
    fn reads_signed_and_binary_phenotypes() {
        let ds = parse("y,a,b\n1,0,2\n-1,1,1\n1,2,0\n-1,0,0\n", &ColumnSpec::new("y")).unwrap();
        assert_eq!(ds.n_rows(), 4);
        assert_eq!(ds.names(), ["a", "b"]);
        assert_eq!(ds.row(0), [0, 2]);
        assert_eq!(ds.label(1), Label::Control);

        let spec = ColumnSpec { phenotype_coding: PhenotypeCoding::Binary, ..ColumnSpec::new("y") };
        let ds = parse("a;y\n2;0\n1;1\n", &ColumnSpec { separator: ';', ..spec }).unwrap();
        assert_eq!(ds.labels(), [Label::Control, Label::Case]);
    }

    #[test]
    fn errors_name_line_and_column() {
        let err = parse("y,a,b\n1,0,2\n-1,3,1\n", &ColumnSpec::new("y")).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("\"a\"") && err.contains("\"3\""), "{err}");
        let err = parse("y,a\n1,0\n2,1\n", &ColumnSpec::new("y")).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("phenotype"), "{err}");
        let err = parse("y,a\n1,\n", &ColumnSpec::new("y")).unwrap_err().to_string();
        assert!(err.contains("missing value"), "{err}");
        let err = parse("y,a\n1,0\n", &ColumnSpec::new("status")).unwrap_err().to_string();
        assert!(err.contains("unknown column") && err.contains("status"), "{err}");
        let err = parse("y,a\n1,0,1\n", &ColumnSpec::new("y")).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(parse("y,a\n", &ColumnSpec::new("y")).is_err());
    }

    #[test]
    fn single_class_file_loads() {
        let ds = parse("y,a\n1,0\n1,2\n", &ColumnSpec::new("y")).unwrap();
        assert!(genorisk_core::metrics::penalty(&ds, &ds.all_rows(), Label::Control).is_err());
    }

    #[test]
    fn column_selection_and_kinds() {
        let spec = ColumnSpec {
            predictors: Some(vec!["c".into(), "a".into()]),
            external: vec!["a".into()],
            ..ColumnSpec::new("y")
        };
        let ds = parse("a,y,b,c\n0,1,2,1\n", &spec).unwrap();
        assert_eq!(ds.names(), ["c", "a"]);
        assert_eq!(ds.row(0), [1, 0]);
        assert_eq!(ds.kinds(), [PredictorKind::Genetic, PredictorKind::External]);
    }
}
