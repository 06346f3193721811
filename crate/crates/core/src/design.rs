//! Ordinal design matrix, the predictor transform and admissible cutoffs.
//!
//! Each predictor column holds integer levels `0..=K`. Under the linear form
//! a level `x` enters the model as `x / (2 sd)`; under the threshold form with
//! cutoff `k` it enters as the indicator `x < k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample standard deviation (n - 1 denominator) of an integer column.
pub fn column_sd(column: &[u32]) -> Result<f64> {
    let n = column.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mean = column.iter().map(|&x| f64::from(x)).sum::<f64>() / n as f64;
    let ss: f64 = column
        .iter()
        .map(|&x| {
            let d = f64::from(x) - mean;
            d * d
        })
        .sum();
    if ss <= 0.0 {
        return Err(Error::ConstantColumn {
            column: String::new(),
        });
    }
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Every `k` in `1..=max(column)` that leaves at least `min_cell` observations
/// on both sides of the split `{x < k}` / `{x >= k}`.
pub fn candidate_cutoffs(column: &[u32], min_cell: usize) -> Result<Vec<u32>> {
    if min_cell == 0 {
        return Err(Error::invalid("min_cell", "must be at least 1"));
    }
    let max_level = column.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max_level as usize + 1];
    for &x in column {
        counts[x as usize] += 1;
    }
    let n = column.len();
    let mut below = 0usize;
    let mut cutoffs = Vec::new();
    for k in 1..=max_level {
        below += counts[k as usize - 1];
        if below >= min_cell && n - below >= min_cell {
            cutoffs.push(k);
        }
    }
    if cutoffs.is_empty() {
        return Err(Error::NoAdmissibleCutoff {
            column: String::new(),
            min_cell,
        });
    }
    Ok(cutoffs)
}

/// Functional form of one predictor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformConfig {
    /// `Z = 1`: `x / (2 sd)`.
    Linear,
    /// `Z = 0`: indicator `x < tau`.
    Threshold(u32),
}

impl TransformConfig {
    pub fn is_linear(self) -> bool {
        matches!(self, TransformConfig::Linear)
    }

    /// The `z` indicator as stored in draws.
    pub fn z(self) -> u8 {
        match self {
            TransformConfig::Linear => 1,
            TransformConfig::Threshold(_) => 0,
        }
    }

    /// The threshold, or 0 under the linear form.
    pub fn tau(self) -> u32 {
        match self {
            TransformConfig::Linear => 0,
            TransformConfig::Threshold(k) => k,
        }
    }
}

/// Integer predictor matrix with per-column level counts, standard deviations
/// and admissible cutoffs. Immutable after construction.
#[derive(Clone, Debug)]
pub struct OrdinalDesign {
    names: Vec<String>,
    columns: Vec<Vec<u32>>,
    levels: Vec<u32>,
    sd: Vec<f64>,
    cutoffs: Vec<Vec<u32>>,
    /// `transforms[j][c]`: column j under configuration c, where c = 0 is the
    /// linear form and c = 1.. follow `cutoffs[j]`.
    transforms: Vec<Vec<Vec<f64>>>,
}

impl OrdinalDesign {
    /// Builds a design, deriving each column's cutoffs with [`candidate_cutoffs`].
    pub fn new(names: Vec<String>, columns: Vec<Vec<u32>>, min_cell: usize) -> Result<Self> {
        let mut cutoffs = Vec::with_capacity(columns.len());
        for (name, col) in names.iter().zip(&columns) {
            if !col.is_empty() && col.iter().all(|&v| v == col[0]) {
                return Err(Error::ConstantColumn {
                    column: name.clone(),
                });
            }
            let c = candidate_cutoffs(col, min_cell).map_err(|e| match e {
                Error::NoAdmissibleCutoff { min_cell, .. } => Error::NoAdmissibleCutoff {
                    column: name.clone(),
                    min_cell,
                },
                other => other,
            })?;
            cutoffs.push(c);
        }
        Self::with_cutoffs(names, columns, cutoffs)
    }

    /// Builds a design with explicitly supplied cutoffs.
    pub fn with_cutoffs(
        names: Vec<String>,
        columns: Vec<Vec<u32>>,
        cutoffs: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let j = columns.len();
        if j == 0 {
            return Err(Error::invalid("design", "no predictor columns"));
        }
        if names.len() != j {
            return Err(Error::DimensionMismatch {
                what: "predictor names",
                expected: j,
                got: names.len(),
            });
        }
        if cutoffs.len() != j {
            return Err(Error::DimensionMismatch {
                what: "cutoff lists",
                expected: j,
                got: cutoffs.len(),
            });
        }
        let n = columns[0].len();
        let mut levels = Vec::with_capacity(j);
        let mut sd = Vec::with_capacity(j);
        for (idx, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "column length",
                    expected: n,
                    got: col.len(),
                });
            }
            let s = column_sd(col).map_err(|e| match e {
                Error::ConstantColumn { .. } => Error::ConstantColumn {
                    column: names[idx].clone(),
                },
                other => other,
            })?;
            let max_level = col.iter().copied().max().unwrap_or(0);
            let cuts = &cutoffs[idx];
            if cuts.is_empty() {
                return Err(Error::NoAdmissibleCutoff {
                    column: names[idx].clone(),
                    min_cell: 1,
                });
            }
            if cuts.windows(2).any(|w| w[0] >= w[1])
                || cuts.iter().any(|&k| k == 0 || k > max_level)
            {
                return Err(Error::invalid(
                    "cutoffs",
                    format!(
                        "predictor {}: cutoffs {:?} must be strictly increasing within 1..={}",
                        names[idx], cuts, max_level
                    ),
                ));
            }
            levels.push(max_level);
            sd.push(s);
        }
        let transforms = columns
            .iter()
            .zip(&sd)
            .zip(&cutoffs)
            .map(|((col, &s), cuts)| {
                std::iter::once(TransformConfig::Linear)
                    .chain(cuts.iter().map(|&k| TransformConfig::Threshold(k)))
                    .map(|cfg| transform_column(col, s, cfg))
                    .collect()
            })
            .collect();
        Ok(OrdinalDesign {
            names,
            columns,
            levels,
            sd,
            cutoffs,
            transforms,
        })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_predictors(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[u32] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<u32>] {
        &self.columns
    }

    /// Maximum level `K_j`.
    pub fn levels(&self, j: usize) -> u32 {
        self.levels[j]
    }

    pub fn sd(&self, j: usize) -> f64 {
        self.sd[j]
    }

    pub fn cutoffs(&self, j: usize) -> &[u32] {
        &self.cutoffs[j]
    }

    /// Largest cutoff over all predictors; sizes the `p_tau_k` report columns.
    pub fn max_cutoff(&self) -> u32 {
        self.cutoffs
            .iter()
            .filter_map(|c| c.last().copied())
            .max()
            .unwrap_or(0)
    }

    /// Number of `(z, tau)` configurations of predictor `j`.
    pub fn n_configs(&self, j: usize) -> usize {
        1 + self.cutoffs[j].len()
    }

    /// Configuration with index `c` (0 = linear, then the cutoffs in order).
    pub fn config(&self, j: usize, c: usize) -> TransformConfig {
        if c == 0 {
            TransformConfig::Linear
        } else {
            TransformConfig::Threshold(self.cutoffs[j][c - 1])
        }
    }

    /// Inverse of [`OrdinalDesign::config`].
    pub fn config_index(&self, j: usize, cfg: TransformConfig) -> Option<usize> {
        match cfg {
            TransformConfig::Linear => Some(0),
            TransformConfig::Threshold(k) => {
                self.cutoffs[j].iter().position(|&c| c == k).map(|p| p + 1)
            }
        }
    }

    /// Pre-computed transformed column for configuration index `c`.
    pub fn transformed(&self, j: usize, c: usize) -> &[f64] {
        &self.transforms[j][c]
    }

    /// Checks that `cfg` is admissible for predictor `j`.
    pub fn check_config(&self, j: usize, cfg: TransformConfig) -> Result<()> {
        if j >= self.n_predictors() {
            return Err(Error::DimensionMismatch {
                what: "predictor index",
                expected: self.n_predictors(),
                got: j,
            });
        }
        match self.config_index(j, cfg) {
            Some(_) => Ok(()),
            None => Err(Error::invalid(
                "transform config",
                format!(
                    "cutoff {} is not admissible for predictor {} (cutoffs {:?})",
                    cfg.tau(),
                    self.names[j],
                    self.cutoffs[j]
                ),
            )),
        }
    }
}

fn transform_column(column: &[u32], sd: f64, cfg: TransformConfig) -> Vec<f64> {
    match cfg {
        TransformConfig::Linear => column.iter().map(|&x| f64::from(x) / (2.0 * sd)).collect(),
        TransformConfig::Threshold(k) => column
            .iter()
            .map(|&x| if x < k { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// `f(x_ij)` for every subject.
pub fn transform_predictor(
    design: &OrdinalDesign,
    j: usize,
    cfg: TransformConfig,
) -> Result<Vec<f64>> {
    design.check_config(j, cfg)?;
    Ok(transform_column(design.column(j), design.sd(j), cfg))
}

/// `eta_i = alpha + sum_j beta_j f(x_ij)`.
pub fn linear_predictor(
    design: &OrdinalDesign,
    cfgs: &[TransformConfig],
    alpha: f64,
    beta: &[f64],
) -> Result<Vec<f64>> {
    let j = design.n_predictors();
    if cfgs.len() != j {
        return Err(Error::DimensionMismatch {
            what: "transform configs",
            expected: j,
            got: cfgs.len(),
        });
    }
    if beta.len() != j {
        return Err(Error::DimensionMismatch {
            what: "coefficients",
            expected: j,
            got: beta.len(),
        });
    }
    let mut eta = vec![alpha; design.n()];
    for (idx, (&cfg, &b)) in cfgs.iter().zip(beta).enumerate() {
        let c = design.config_index(idx, cfg).ok_or_else(|| {
            Error::invalid(
                "transform config",
                format!("cutoff {} not admissible for predictor {}", cfg.tau(), idx),
            )
        })?;
        for (e, &f) in eta.iter_mut().zip(design.transformed(idx, c)) {
            *e += b * f;
        }
    }
    Ok(eta)
}

/// Which likelihood family an outcome belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Continuous,
    Binary,
    Survival,
}

/// Response vector, one entry per subject.
#[derive(Clone, Debug, PartialEq)]
pub enum OutcomeData {
    Continuous(Vec<f64>),
    Binary(Vec<bool>),
    /// Right-censored times; `event[i]` is true when the time is an observed
    /// event rather than a censoring time.
    Survival { time: Vec<f64>, event: Vec<bool> },
}

impl OutcomeData {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            OutcomeData::Continuous(_) => OutcomeKind::Continuous,
            OutcomeData::Binary(_) => OutcomeKind::Binary,
            OutcomeData::Survival { .. } => OutcomeKind::Survival,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            OutcomeData::Continuous(y) => y.len(),
            OutcomeData::Binary(y) => y.len(),
            OutcomeData::Survival { time, .. } => time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks length against `n` and value constraints.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch {
                what: "outcome length",
                expected: n,
                got: self.len(),
            });
        }
        match self {
            OutcomeData::Continuous(y) => {
                if let Some(i) = y.iter().position(|v| !v.is_finite()) {
                    return Err(Error::invalid(
                        "outcome",
                        format!("non-finite value at subject {}", i + 1),
                    ));
                }
            }
            OutcomeData::Binary(_) => {}
            OutcomeData::Survival { time, event } => {
                if event.len() != time.len() {
                    return Err(Error::DimensionMismatch {
                        what: "event indicator length",
                        expected: time.len(),
                        got: event.len(),
                    });
                }
                if let Some(i) = time.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
                    return Err(Error::invalid(
                        "survival time",
                        format!("subject {} has non-positive time {}", i + 1, time[i]),
                    ));
                }
                if !event.iter().any(|&e| e) {
                    return Err(Error::invalid("survival outcome", "no observed events"));
                }
            }
        }
        Ok(())
    }
}
