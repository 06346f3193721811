//! Simulation scenarios: data generation and replication summaries.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::{OrdinalDesign, OutcomeData, OutcomeKind};
use crate::diagnostics::{check_convergence, summarize, PosteriorSummary};
use crate::dist;
use crate::error::{Error, Result};
use crate::priors::{default_priors, Penalty, PriorConfig};
use crate::sampler::{run_chains, ChainConfig, Model};
use crate::stats::{mean, variance};

pub const SCHEMA_VERSION: u32 = 1;

/// Censoring proportion the survival scenarios are compared against.
pub const REFERENCE_CENSORING: f64 = 0.199;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthForm {
    /// Effect `beta * x / (2 sd)`.
    Linear,
    /// Effect `beta * I(x < k)`.
    Cutoff(u32),
    /// No effect.
    Null,
}

/// Intercept added to the true linear predictor of continuous and binary
/// outcomes: a number, or `"centered"` for minus the sample mean of the
/// predictor effects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrueIntercept {
    Fixed(f64),
    Named(InterceptRule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterceptRule {
    Centered,
}

impl Default for TrueIntercept {
    fn default() -> Self {
        TrueIntercept::Fixed(0.0)
    }
}

impl TrueIntercept {
    fn value(self, eta: &[f64]) -> f64 {
        match self {
            TrueIntercept::Fixed(a) => a,
            TrueIntercept::Named(InterceptRule::Centered) => {
                -eta.iter().sum::<f64>() / eta.len().max(1) as f64
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorTruth {
    pub beta: f64,
    pub form: TruthForm,
}

impl PredictorTruth {
    /// Label of the true form: `none` (linear), `tau_k` or `null`.
    pub fn label(&self) -> String {
        match self.form {
            TruthForm::Linear => "none".into(),
            TruthForm::Cutoff(k) => format!("tau_{k}"),
            TruthForm::Null => "null".into(),
        }
    }
}

fn default_percentiles() -> Vec<f64> {
    vec![30.0, 60.0, 85.0]
}
fn default_noise_sd() -> f64 {
    0.1
}
fn default_censoring_rate() -> f64 {
    0.1
}
fn default_min_cell() -> usize {
    1
}
fn default_threshold() -> f64 {
    1.1
}

/// One simulation scenario as read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub name: String,
    pub outcome: OutcomeKind,
    pub n: usize,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_percentiles")]
    pub percentiles: Vec<f64>,
    /// Residual sd of the continuous outcome.
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// Exponential censoring rate of the survival outcome.
    #[serde(default = "default_censoring_rate")]
    pub censoring_rate: f64,
    #[serde(default = "default_min_cell")]
    pub min_cell: usize,
    #[serde(default)]
    pub intercept: TrueIntercept,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// R-hat threshold for the per-replication convergence count.
    #[serde(default = "default_threshold")]
    pub rhat_threshold: f64,
    #[serde(default)]
    pub penalty: Option<Penalty>,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(rename = "predictor")]
    pub predictors: Vec<PredictorTruth>,
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Config {
            path: "<scenario>".into(),
            detail: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config { detail, .. } => Error::Config {
                path: path.to_path_buf(),
                detail,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidCorrelation(self.rho));
        }
        if self.percentiles.is_empty()
            || self.percentiles.iter().any(|p| !(*p > 0.0 && *p < 100.0))
            || self.percentiles.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid(
                "percentiles",
                "must be strictly increasing in (0, 100)",
            ));
        }
        if self.predictors.is_empty() {
            return Err(Error::invalid("predictors", "at least one is required"));
        }
        let max_level = self.percentiles.len() as u32;
        for (j, p) in self.predictors.iter().enumerate() {
            if !p.beta.is_finite() {
                return Err(Error::invalid("beta", format!("predictor {j} is not finite")));
            }
            if let TruthForm::Cutoff(k) = p.form {
                if k == 0 || k > max_level {
                    return Err(Error::invalid(
                        "cutoff",
                        format!("predictor {j}: {k} outside 1..={max_level}"),
                    ));
                }
            }
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        if self.n < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: self.n,
            });
        }
        if !(self.noise_sd > 0.0 && self.censoring_rate > 0.0) {
            return Err(Error::invalid(
                "noise_sd / censoring_rate",
                "must be positive",
            ));
        }
        match self.intercept {
            TrueIntercept::Fixed(a) if !a.is_finite() => {
                return Err(Error::invalid("intercept", "must be finite"));
            }
            TrueIntercept::Fixed(a) if a != 0.0 && self.outcome == OutcomeKind::Survival => {
                return Err(Error::invalid(
                    "intercept",
                    "survival scenarios have no intercept",
                ));
            }
            TrueIntercept::Named(_) if self.outcome == OutcomeKind::Survival => {
                return Err(Error::invalid(
                    "intercept",
                    "survival scenarios have no intercept",
                ));
            }
            _ => {}
        }
        self.chain.validate()?;
        self.priors().validate()
    }

    /// Defaults for the outcome, with the scenario's penalty.
    pub fn priors(&self) -> PriorConfig {
        let mut p = default_priors(self.outcome);
        if let Some(pen) = self.penalty {
            p.penalty = pen;
        }
        p
    }
}

/// Equicorrelated standard normals per subject, cut at the standard-normal
/// quantiles of `percentiles`. Returns one column per predictor.
pub fn gen_ordinal_predictors<R: Rng + ?Sized>(
    n: usize,
    j: usize,
    rho: f64,
    percentiles: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<u32>>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidCorrelation(rho));
    }
    let std = Normal::standard();
    let cuts: Vec<f64> = percentiles.iter().map(|p| std.inverse_cdf(p / 100.0)).collect();
    let (shared, own) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut cols = vec![Vec::with_capacity(n); j];
    for _ in 0..n {
        let w = dist::std_normal(rng);
        for col in cols.iter_mut() {
            let z = shared * w + own * dist::std_normal(rng);
            col.push(cuts.partition_point(|&c| c <= z) as u32);
        }
    }
    Ok(cols)
}

/// True linear predictor (intercept 0).
pub fn true_eta(columns: &[Vec<u32>], truth: &[PredictorTruth]) -> Result<Vec<f64>> {
    let n = columns.first().map_or(0, Vec::len);
    let mut eta = vec![0.0; n];
    for (col, t) in columns.iter().zip(truth) {
        match t.form {
            TruthForm::Null => {}
            TruthForm::Linear => {
                let sd = crate::design::column_sd(col)?;
                for (e, &x) in eta.iter_mut().zip(col) {
                    *e += t.beta * f64::from(x) / (2.0 * sd);
                }
            }
            TruthForm::Cutoff(k) => {
                for (e, &x) in eta.iter_mut().zip(col) {
                    if x < k {
                        *e += t.beta;
                    }
                }
            }
        }
    }
    Ok(eta)
}

/// Outcome from the true forms: normal noise, Bernoulli-logit, or
/// exponential event times with exponential censoring.
pub fn gen_outcome<R: Rng + ?Sized>(
    columns: &[Vec<u32>],
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<OutcomeData> {
    let mut eta = true_eta(columns, &spec.predictors)?;
    if spec.outcome != OutcomeKind::Survival {
        let a = spec.intercept.value(&eta);
        eta.iter_mut().for_each(|e| *e += a);
    }
    Ok(match spec.outcome {
        OutcomeKind::Continuous => OutcomeData::Continuous(
            eta.iter()
                .map(|e| e + spec.noise_sd * dist::std_normal(rng))
                .collect(),
        ),
        OutcomeKind::Binary => OutcomeData::Binary(
            eta.iter()
                .map(|e| rng.random::<f64>() < 1.0 / (1.0 + (-e).exp()))
                .collect(),
        ),
        OutcomeKind::Survival => {
            let mut time = Vec::with_capacity(eta.len());
            let mut event = Vec::with_capacity(eta.len());
            for e in &eta {
                let t = exponential(rng, e.exp());
                let c = exponential(rng, spec.censoring_rate);
                time.push(t.min(c));
                event.push(t <= c);
            }
            OutcomeData::Survival { time, event }
        }
    })
}

fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    // 1 - u lies in (0, 1]
    -(1.0 - rng.random::<f64>()).ln() / rate
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for `stream` (0 = data, 1 = chains) of replication `index`:
/// `splitmix64(splitmix64(master) ^ (2 * index + stream))`.
pub fn replication_seed(master: u64, index: usize, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ (2 * index as u64 + stream))
}

/// Data of one replication.
pub struct ReplicationData {
    pub design: OrdinalDesign,
    pub outcome: OutcomeData,
}

pub fn generate_replication(spec: &ScenarioSpec, index: usize) -> Result<ReplicationData> {
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(spec.seed, index, 0));
    let columns = gen_ordinal_predictors(
        spec.n,
        spec.predictors.len(),
        spec.rho,
        &spec.percentiles,
        &mut rng,
    )?;
    let outcome = gen_outcome(&columns, spec, &mut rng)?;
    let names = (1..=columns.len()).map(|j| format!("x{j}")).collect();
    let design = OrdinalDesign::new(names, columns, spec.min_cell)?;
    Ok(ReplicationData { design, outcome })
}

/// Per-replication results kept for the report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationResult {
    pub summary: PosteriorSummary,
    pub censoring: Option<f64>,
    pub converged: bool,
}

pub fn run_replication(spec: &ScenarioSpec, index: usize) -> Result<ReplicationResult> {
    let data = generate_replication(spec, index)?;
    let priors = spec.priors();
    let model = Model::new(&data.design, &data.outcome, &priors)?;
    let config = ChainConfig {
        seed: replication_seed(spec.seed, index, 1),
        ..spec.chain.clone()
    };
    let chains = run_chains(&model, &config)?;
    let summary = summarize(&chains, &data.design, spec.outcome)?;
    let converged = check_convergence(&summary, spec.rhat_threshold).passed();
    let censoring = match &data.outcome {
        OutcomeData::Survival { event, .. } => {
            Some(event.iter().filter(|&&e| !e).count() as f64 / event.len() as f64)
        }
        _ => None,
    };
    Ok(ReplicationResult {
        summary,
        censoring,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimRow {
    pub beta_true: f64,
    pub beta_hat: f64,
    pub sd: f64,
    pub mse: f64,
    pub cp: f64,
    pub selection_prop: f64,
    pub cutoff_true: String,
    pub p_z1: f64,
    pub p_tau_1: f64,
    pub p_tau_2: f64,
    pub p_tau_3: f64,
}

impl SimRow {
    /// Mean posterior probability of the true form; `None` for null effects.
    pub fn p_true_state(&self, form: TruthForm) -> Option<f64> {
        match form {
            TruthForm::Linear => Some(self.p_z1),
            TruthForm::Cutoff(1) => Some(self.p_tau_1),
            TruthForm::Cutoff(2) => Some(self.p_tau_2),
            TruthForm::Cutoff(3) => Some(self.p_tau_3),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub scenario: String,
    pub replications: usize,
    pub rows: Vec<SimRow>,
    /// Mean censoring proportion (survival only).
    pub censoring: Option<f64>,
    /// Replications whose R-hat check did not pass.
    pub not_converged: usize,
}

/// Reduces replication results in index order.
pub fn aggregate(spec: &ScenarioSpec, results: &[ReplicationResult]) -> SimReport {
    let r = results.len() as f64;
    let rows = spec
        .predictors
        .iter()
        .enumerate()
        .map(|(j, truth)| {
            let preds: Vec<_> = results.iter().map(|x| &x.summary.predictors[j]).collect();
            let hats: Vec<f64> = preds.iter().map(|p| p.beta.mean).collect();
            let frac = |f: &dyn Fn(&crate::diagnostics::PredictorSummary) -> bool| {
                preds.iter().filter(|p| f(p)).count() as f64 / r
            };
            let avg = |f: &dyn Fn(&crate::diagnostics::PredictorSummary) -> f64| {
                preds.iter().map(|p| f(p)).sum::<f64>() / r
            };
            SimRow {
                beta_true: truth.beta,
                beta_hat: mean(&hats),
                sd: variance(&hats).sqrt(),
                mse: hats.iter().map(|h| (h - truth.beta).powi(2)).sum::<f64>() / r,
                cp: frac(&|p| p.beta.contains(truth.beta)),
                selection_prop: frac(&|p| p.selected),
                cutoff_true: truth.label(),
                p_z1: avg(&|p| p.p_z1),
                p_tau_1: avg(&|p| p.p_tau(1)),
                p_tau_2: avg(&|p| p.p_tau(2)),
                p_tau_3: avg(&|p| p.p_tau(3)),
            }
        })
        .collect();
    let cens: Vec<f64> = results.iter().filter_map(|x| x.censoring).collect();
    SimReport {
        scenario: spec.name.clone(),
        replications: results.len(),
        rows,
        censoring: (!cens.is_empty()).then(|| mean(&cens)),
        not_converged: results.iter().filter(|x| !x.converged).count(),
    }
}

/// Runs every replication (in parallel) and aggregates in index order. A
/// failed replication aborts the scenario.
pub fn run_replications(spec: &ScenarioSpec) -> Result<SimReport> {
    spec.validate()?;
    let results = (0..spec.replications)
        .into_par_iter()
        .map(|i| {
            run_replication(spec, i).map_err(|e| Error::Replication {
                replication: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(spec, &results))
}

impl SimReport {
    /// Fixed-width table for the terminal.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {} ({} replications)",
            self.scenario, self.replications
        );
        let _ = writeln!(
            out,
            "{:>6} {:>7} {:>6} {:>6} {:>5} {:>6} {:>7} {:>6} {:>6} {:>6} {:>6}",
            "beta", "hat", "sd", "mse", "cp", "sel", "cutoff", "P(Z=1)", "tau1", "tau2", "tau3"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>6.2} {:>7.3} {:>6.3} {:>6.3} {:>5.3} {:>6.3} {:>7} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
                r.beta_true,
                r.beta_hat,
                r.sd,
                r.mse,
                r.cp,
                r.selection_prop,
                r.cutoff_true,
                r.p_z1,
                r.p_tau_1,
                r.p_tau_2,
                r.p_tau_3
            );
        }
        if let Some(c) = self.censoring {
            let _ = writeln!(out, "{}", self.censoring_line(c));
        }
        let _ = writeln!(
            out,
            "replications failing the R-hat check: {}",
            self.not_converged
        );
        out
    }

    pub fn censoring_line(&self, c: f64) -> String {
        let dev = c - REFERENCE_CENSORING;
        let flag = if dev.abs() > 0.05 { " (DEVIATES)" } else { "" };
        format!(
            "censoring proportion: {c:.3} (reference {REFERENCE_CENSORING}, difference {dev:+.3}){flag}"
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(outcome: OutcomeKind, predictors: Vec<PredictorTruth>) -> ScenarioSpec {
        ScenarioSpec {
            schema_version: SCHEMA_VERSION,
            name: "t".into(),
            outcome,
            n: 50,
            rho: 0.0,
            percentiles: default_percentiles(),
            noise_sd: 0.1,
            censoring_rate: 0.1,
            min_cell: 1,
            intercept: TrueIntercept::default(),
            replications: 1,
            seed: 3,
            rhat_threshold: 1.1,
            penalty: None,
            chain: ChainConfig {
                n_iter: 600,
                burn_in: 200,
                ..ChainConfig::default()
            },
            predictors,
        }
    }

    fn null(n: usize) -> Vec<PredictorTruth> {
        vec![
            PredictorTruth {
                beta: 0.0,
                form: TruthForm::Null
            };
            n
        ]
    }

    #[test]
    fn level_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let cols = gen_ordinal_predictors(n, 2, 0.25, &default_percentiles(), &mut rng).unwrap();
        let expected = [0.30, 0.30, 0.25, 0.15];
        for col in &cols {
            for (level, p) in expected.iter().enumerate() {
                let f = col.iter().filter(|&&v| v == level as u32).count() as f64 / n as f64;
                // four binomial standard errors
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((f - p).abs() < 4.0 * se, "level {level}: {f}");
            }
        }
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn correlation_of_levels() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cols = gen_ordinal_predictors(n, 2, 0.0, &default_percentiles(), &mut rng).unwrap();
        let f = |c: &Vec<u32>| c.iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
        assert!(pearson(&f(&cols[0]), &f(&cols[1])).abs() < 0.05);

        // the latent construction itself: correlation of the normals is rho
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho: f64 = 0.25;
        let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let w = dist::std_normal(&mut rng);
            a.push(rho.sqrt() * w + (1.0 - rho).sqrt() * dist::std_normal(&mut rng));
            b.push(rho.sqrt() * w + (1.0 - rho).sqrt() * dist::std_normal(&mut rng));
        }
        assert!((pearson(&a, &b) - 0.25).abs() < 0.01);
        assert!(matches!(
            gen_ordinal_predictors(5, 2, 1.0, &default_percentiles(), &mut rng),
            Err(Error::InvalidCorrelation(_))
        ));
    }

    #[test]
    fn null_outcomes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 4000;
        let cols = gen_ordinal_predictors(n, 3, 0.0, &default_percentiles(), &mut rng).unwrap();
        let s = spec(OutcomeKind::Continuous, null(3));
        let OutcomeData::Continuous(y) = gen_outcome(&cols, &s, &mut rng).unwrap() else {
            unreachable!()
        };
        assert!(mean(&y).abs() < 4.0 * 0.1 / (n as f64).sqrt());
        let s = spec(OutcomeKind::Binary, null(3));
        let OutcomeData::Binary(y) = gen_outcome(&cols, &s, &mut rng).unwrap() else {
            unreachable!()
        };
        let rate = y.iter().filter(|&&v| v).count() as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.03);
    }

    #[test]
    fn survival_censoring_with_null_truth() {
        // T ~ Exp(1), C ~ Exp(0.1): P(C < T) = 0.1 / 1.1
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50_000;
        let cols = gen_ordinal_predictors(n, 1, 0.0, &default_percentiles(), &mut rng).unwrap();
        let s = spec(OutcomeKind::Survival, null(1));
        let OutcomeData::Survival { event, .. } = gen_outcome(&cols, &s, &mut rng).unwrap() else {
            unreachable!()
        };
        let cens = event.iter().filter(|&&e| !e).count() as f64 / n as f64;
        assert!((cens - 0.1 / 1.1).abs() < 0.01, "{cens}");
    }

    #[test]
    fn true_eta_forms() {
        let cols = vec![vec![0, 1, 2, 3], vec![0, 1, 2, 3], vec![3, 2, 1, 0]];
        let truth = vec![
            PredictorTruth { beta: 1.0, form: TruthForm::Linear },
            PredictorTruth { beta: 2.0, form: TruthForm::Cutoff(2) },
            PredictorTruth { beta: 5.0, form: TruthForm::Null },
        ];
        let eta = true_eta(&cols, &truth).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        let expected: Vec<f64> = (0..4)
            .map(|i| i as f64 / (2.0 * sd) + if i < 2 { 2.0 } else { 0.0 })
            .collect();
        for (a, b) in eta.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_replication_report_is_its_summary() {
        let truth = vec![
            PredictorTruth { beta: 0.5, form: TruthForm::Cutoff(2) },
            PredictorTruth { beta: 0.0, form: TruthForm::Null },
        ];
        let s = spec(OutcomeKind::Continuous, truth);
        let rep = run_replications(&s).unwrap();
        let one = run_replication(&s, 0).unwrap();
        let p = &one.summary.predictors[0];
        let row = &rep.rows[0];
        assert_eq!(row.beta_hat, p.beta.mean);
        assert_eq!(row.sd, 0.0);
        assert_eq!(row.mse, (p.beta.mean - 0.5).powi(2));
        assert_eq!(row.cp, f64::from(u8::from(p.beta.contains(0.5))));
        assert_eq!(row.p_tau_2, p.p_tau(2));
        assert_eq!(row.cutoff_true, "tau_2");
    }

    #[test]
    fn replications_reproducible_and_seeded_apart() {
        let truth = vec![PredictorTruth { beta: 0.5, form: TruthForm::Linear }];
        let mut s = spec(OutcomeKind::Continuous, truth);
        s.replications = 3;
        assert_eq!(run_replications(&s).unwrap(), run_replications(&s).unwrap());
        let seeds: Vec<u64> = (0..3)
            .flat_map(|i| [replication_seed(9, i, 0), replication_seed(9, i, 1)])
            .collect();
        let mut uniq = seeds.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), seeds.len());
    }

    #[test]
    fn validation() {
        let mut s = spec(OutcomeKind::Continuous, null(1));
        s.replications = 0;
        assert!(s.validate().is_err());
        let mut s = spec(OutcomeKind::Continuous, null(1));
        s.rho = -0.1;
        assert!(matches!(s.validate(), Err(Error::InvalidCorrelation(_))));
        let mut s = spec(OutcomeKind::Continuous, null(1));
        s.percentiles = vec![60.0, 30.0];
        assert!(s.validate().is_err());
        let mut s = spec(OutcomeKind::Continuous, null(1));
        s.predictors[0].form = TruthForm::Cutoff(4);
        assert!(s.validate().is_err());
        let mut s = spec(OutcomeKind::Survival, null(1));
        s.intercept = TrueIntercept::Named(InterceptRule::Centered);
        assert!(s.validate().is_err());
    }

    #[test]
    fn centered_intercept_balances_binary_outcome() {
        let truth = vec![
            PredictorTruth { beta: 3.0, form: TruthForm::Linear },
            PredictorTruth { beta: 3.0, form: TruthForm::Cutoff(3) },
        ];
        let mut s = spec(OutcomeKind::Binary, truth);
        s.n = 4000;
        let rate = |s: &ScenarioSpec| match generate_replication(s, 0).unwrap().outcome {
            OutcomeData::Binary(y) => y.iter().filter(|&&v| v).count() as f64 / y.len() as f64,
            _ => unreachable!(),
        };
        assert!(rate(&s) > 0.9);
        s.intercept = TrueIntercept::Named(InterceptRule::Centered);
        assert!((rate(&s) - 0.5).abs() < 0.05);
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            schema_version = 1
            name = "demo"
            outcome = "binary"
            n = 100
            rho = 0.25
            replications = 2
            seed = 11
            intercept = "centered"

            [chain]
            n_iter = 500
            burn_in = 100

            [[predictor]]
            beta = 2.0
            form = { cutoff = 1 }

            [[predictor]]
            beta = 0.0
            form = "null"
        "#;
        let s = ScenarioSpec::from_toml(text).unwrap();
        assert_eq!(s.predictors[0].form, TruthForm::Cutoff(1));
        assert_eq!(s.chain.n_chains, 2);
        assert_eq!(s.percentiles, vec![30.0, 60.0, 85.0]);
        assert_eq!(s.intercept, TrueIntercept::Named(InterceptRule::Centered));
        let again = ScenarioSpec::from_toml(&toml::to_string(&s).unwrap()).unwrap();
        assert_eq!(again, s);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn mse_dominates_squared_bias(
                hats in prop::collection::vec(-2.0f64..2.0, 1..30),
                truth in -1.0f64..1.0,
            ) {
                let r = hats.len() as f64;
                let mse = hats.iter().map(|h| (h - truth).powi(2)).sum::<f64>() / r;
                let bias = mean(&hats) - truth;
                prop_assert!(mse + 1e-12 >= bias * bias);
            }
        }
    }
}
