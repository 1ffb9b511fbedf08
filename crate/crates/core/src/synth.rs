//! Synthetic case-control data with planted main effects and interactions.
//!
//! Predictors are drawn independently from per-predictor ternary
//! distributions. Disease probability comes from penetrance tables over
//! planted factor combinations; the phenotype is drawn from it and then
//! flipped with the label-noise probability.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, PredictorKind};
use crate::rng::{self, STREAM_SYNTH, STREAM_SYNTH_RETRY};
use crate::{Error, Result};

/// A planted effect: disease probability per cell of `combo`.
///
/// Cells are indexed with the first predictor most significant, as for
/// MDR: cell = sum_k x[combo[k]] * 3^(r-1-k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Effect {
    pub combo: Vec<usize>,
    pub penetrance: Vec<f64>,
}

impl Effect {
    pub fn cell(&self, x: &[u8]) -> usize {
        self.combo.iter().fold(0, |acc, &i| acc * 3 + x[i] as usize)
    }
}

/// How several planted effects combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    /// Largest penetrance among the effects.
    #[default]
    Max,
    /// baseline + sum of (penetrance - baseline), clipped to [0, 1].
    Additive,
    /// baseline * product of (penetrance / baseline), clipped to [0, 1].
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub rows: usize,
    pub predictors: usize,
    /// Probabilities of 0, 1, 2 per predictor. Empty means uniform for all;
    /// a single entry applies to every predictor.
    pub allele_freqs: Vec<[f64; 3]>,
    pub effects: Vec<Effect>,
    /// Disease probability when no effect is planted.
    pub baseline: f64,
    /// Label-flip probability.
    pub noise: f64,
    pub combine: Combine,
    /// Predictor indices tagged as external factors.
    pub external: Vec<usize>,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            rows: 400,
            predictors: 10,
            allele_freqs: Vec::new(),
            effects: Vec::new(),
            baseline: 0.5,
            noise: 0.0,
            combine: Combine::Max,
            external: Vec::new(),
            seed: 0,
        }
    }
}

const UNIFORM: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

fn unit(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl GenSpec {
    /// Two-factor design with penetrance `high` on cells where x_a + x_b is
    /// even and `low` elsewhere, uniform marginals, no noise.
    pub fn parity_pair(rows: usize, predictors: usize, pair: [usize; 2], high: f64, low: f64, seed: u64) -> GenSpec {
        let penetrance = (0..9).map(|c| if (c / 3 + c % 3) % 2 == 0 { high } else { low }).collect();
        GenSpec {
            rows,
            predictors,
            effects: vec![Effect { combo: pair.to_vec(), penetrance }],
            seed,
            ..GenSpec::default()
        }
    }

    /// Two-factor design with penetrance `high` where (x_a + x_b) mod 3 is 0
    /// and `low` elsewhere. With uniform marginals neither factor shows any
    /// marginal association.
    pub fn mod3_pair(rows: usize, predictors: usize, pair: [usize; 2], high: f64, low: f64, seed: u64) -> GenSpec {
        let penetrance = (0..9).map(|c| if (c / 3 + c % 3) % 3 == 0 { high } else { low }).collect();
        GenSpec {
            rows,
            predictors,
            effects: vec![Effect { combo: pair.to_vec(), penetrance }],
            seed,
            ..GenSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.predictors == 0 {
            return Err(Error::param("rows and predictors must be positive"));
        }
        if !unit(self.baseline) || !unit(self.noise) {
            return Err(Error::param("baseline and noise must be probabilities"));
        }
        if !(self.allele_freqs.len() <= 1 || self.allele_freqs.len() == self.predictors) {
            return Err(Error::param("allele_freqs needs 0, 1 or one entry per predictor"));
        }
        for f in &self.allele_freqs {
            if f.iter().any(|&p| !unit(p)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("allele frequencies {f:?} do not form a distribution")));
            }
        }
        for e in &self.effects {
            let mut sorted = e.combo.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if e.combo.is_empty() || sorted.len() != e.combo.len() || sorted.iter().any(|&i| i >= self.predictors) {
                return Err(Error::param(format!("invalid effect combination {:?}", e.combo)));
            }
            if e.penetrance.len() != 3usize.pow(e.combo.len() as u32) {
                return Err(Error::param("penetrance table must have 3^r entries"));
            }
            if e.penetrance.iter().any(|&p| !unit(p)) {
                return Err(Error::param("penetrance values must be probabilities"));
            }
        }
        if self.external.iter().any(|&i| i >= self.predictors) {
            return Err(Error::param("external predictor index out of range"));
        }
        Ok(())
    }

    fn freqs(&self, i: usize) -> [f64; 3] {
        match self.allele_freqs.len() {
            0 => UNIFORM,
            1 => self.allele_freqs[0],
            _ => self.allele_freqs[i],
        }
    }

    /// Disease probability at `x` before label noise.
    pub fn penetrance(&self, x: &[u8]) -> f64 {
        if self.effects.is_empty() {
            return self.baseline;
        }
        let values = self.effects.iter().map(|e| e.penetrance[e.cell(x)]);
        let p = match self.combine {
            Combine::Max => values.fold(0.0, f64::max),
            Combine::Additive => self.baseline + values.map(|v| v - self.baseline).sum::<f64>(),
            Combine::Multiplicative => {
                if self.baseline == 0.0 {
                    0.0
                } else {
                    self.baseline * values.map(|v| v / self.baseline).product::<f64>()
                }
            }
        };
        p.clamp(0.0, 1.0)
    }

    /// P(Y = +1 | x) after label noise.
    pub fn case_probability(&self, x: &[u8]) -> f64 {
        let p = self.penetrance(x);
        p * (1.0 - self.noise) + (1.0 - p) * self.noise
    }

    fn draw(&self, rng: &mut rng::Rng) -> (Vec<u8>, Vec<Label>) {
        let n = self.predictors;
        let mut cells = vec![0u8; self.rows * n];
        let mut labels = Vec::with_capacity(self.rows);
        for j in 0..self.rows {
            let x = &mut cells[j * n..(j + 1) * n];
            for (i, v) in x.iter_mut().enumerate() {
                let f = self.freqs(i);
                let u: f64 = rng.random();
                *v = if u < f[0] {
                    0
                } else if u < f[0] + f[1] {
                    1
                } else {
                    2
                };
            }
            let mut y = if rng.random::<f64>() < self.penetrance(x) { Label::Case } else { Label::Control };
            if rng.random::<f64>() < self.noise {
                y = y.flip();
            }
            labels.push(y);
        }
        (cells, labels)
    }

    /// Analytic balanced error of the optimal rule (predict +1 iff
    /// P(Y=1|x) > P(Y=1)), enumerating the cells of the planted predictors.
    pub fn bayes_balanced_error(&self) -> Result<f64> {
        self.validate()?;
        let mut involved: Vec<usize> = self.effects.iter().flat_map(|e| e.combo.iter().copied()).collect();
        involved.sort_unstable();
        involved.dedup();
        let cells = 3usize.pow(involved.len() as u32);
        let mut x = vec![0u8; self.predictors];
        let mut table = Vec::with_capacity(cells);
        for c in 0..cells {
            let mut rest = c;
            let mut weight = 1.0;
            for &i in involved.iter().rev() {
                x[i] = (rest % 3) as u8;
                rest /= 3;
                weight *= self.freqs(i)[x[i] as usize];
            }
            table.push((weight, self.case_probability(&x)));
        }
        let prevalence: f64 = table.iter().map(|(w, p)| w * p).sum();
        if prevalence <= 0.0 || prevalence >= 1.0 {
            return Err(Error::single_class("synthetic design"));
        }
        let (mut miss_case, mut miss_control) = (0.0, 0.0);
        for (w, p) in table {
            if p > prevalence {
                miss_control += w * (1.0 - p);
            } else {
                miss_case += w * p;
            }
        }
        Ok(0.5 * miss_control / (1.0 - prevalence) + 0.5 * miss_case / prevalence)
    }
}

/// Draw a dataset. A draw with an empty class is repeated once with a
/// derived seed, then rejected.
pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    let attempt = |stream| {
        let (cells, labels) = spec.draw(&mut rng::derived_rng(spec.seed, stream, 0));
        let both = labels.contains(&Label::Case) && labels.contains(&Label::Control);
        (cells, labels, both)
    };
    let (mut cells, mut labels, both) = attempt(STREAM_SYNTH);
    if !both {
        let retry = attempt(STREAM_SYNTH_RETRY);
        if !retry.2 {
            return Err(Error::single_class("synthetic sample after one redraw"));
        }
        (cells, labels) = (retry.0, retry.1);
    }
    let names: Vec<String> = (1..=spec.predictors).map(|i| format!("x{i}")).collect();
    let kinds = (0..spec.predictors)
        .map(|i| if spec.external.contains(&i) { PredictorKind::External } else { PredictorKind::Genetic })
        .collect();
    Dataset::new(cells, spec.predictors, labels, names, kinds)
}
