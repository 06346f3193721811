//! Command-line front end: `fit`, `simulate`, `generate` and `verify`.

mod ingest;
mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::design::{OrdinalDesign, OutcomeData, OutcomeKind};
use crate::diagnostics::{check_convergence, summarize, ConvergenceStatus};
use crate::error::{Error, Result};
use crate::oracle::enumerate_posterior;
use crate::priors::{default_priors, Penalty};
use crate::sampler::{run_chains, ChainConfig, Model};
use crate::sim::{generate_replication, run_replications, ScenarioSpec};

pub use ingest::{ingest_csv, write_dataset, write_recodings, Ingested, OutcomeSpec, Recoding};
pub use report::{fmt_g6, write_draws, write_sim_report, write_summary};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_CONVERGENCE: u8 = 3;

/// Version of the fit configuration file layout.
pub const FIT_SCHEMA_VERSION: u32 = 1;

const BUNDLED: &[(&str, &str)] = &[
    ("table1_desk", include_str!("../../scenarios/table1_desk.toml")),
    ("table1_full", include_str!("../../scenarios/table1_full.toml")),
    ("table2_desk", include_str!("../../scenarios/table2_desk.toml")),
    ("table2_full", include_str!("../../scenarios/table2_full.toml")),
    ("table3_desk", include_str!("../../scenarios/table3_desk.toml")),
    ("table3_full", include_str!("../../scenarios/table3_full.toml")),
    ("table4_desk", include_str!("../../scenarios/table4_desk.toml")),
    ("table4_full", include_str!("../../scenarios/table4_full.toml")),
];

/// Text of a bundled scenario by name.
pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// A path to a scenario file, or the name of a bundled scenario.
pub fn load_scenario(arg: &str) -> Result<ScenarioSpec> {
    let path = Path::new(arg);
    if path.exists() {
        return ScenarioSpec::load(path);
    }
    match bundled_scenario(arg) {
        Some(text) => ScenarioSpec::from_toml(text),
        None => Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!(
                    "no such file or bundled scenario (bundled: {})",
                    bundled_names().collect::<Vec<_>>().join(", ")
                ),
            ),
        }),
    }
}

#[derive(Debug, Parser)]
#[command(name = "ordmix", version, about = "Mixture models for ordinal predictors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a CSV file.
    Fit(FitArgs),
    /// Run a simulation scenario and write its report.
    Simulate(SimulateArgs),
    /// Write one simulated dataset as CSV.
    Generate(GenerateArgs),
    /// Compare the sampler against exact enumeration on small instances.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyArg {
    None,
    Lasso,
    Horseshoe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Continuous,
    Binary,
}

#[derive(Debug, Default, Args)]
pub struct FitArgs {
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Outcome column (continuous or binary).
    #[arg(long, conflicts_with_all = ["time", "event"])]
    pub outcome: Option<String>,
    /// Outcome family of `--outcome`; detected from the values when omitted.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long, requires = "event")]
    pub time: Option<String>,
    #[arg(long, requires = "time")]
    pub event: Option<String>,
    /// Comma-separated predictor columns.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Keep every post-burn-in draw (overrides --thin).
    #[arg(long)]
    pub full_draws: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub min_cell: Option<usize>,
    #[arg(long)]
    pub rhat_threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fit options as read from a configuration file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFile {
    pub schema_version: u32,
    pub input: Option<PathBuf>,
    pub outcome: Option<String>,
    pub kind: Option<KindArg>,
    pub time: Option<String>,
    pub event: Option<String>,
    pub predictors: Option<Vec<String>>,
    pub penalty: Option<PenaltyArg>,
    pub lambda: Option<f64>,
    pub chains: Option<usize>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub full_draws: Option<bool>,
    pub seed: Option<u64>,
    pub min_cell: Option<usize>,
    pub rhat_threshold: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Fully resolved fit request.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRequest {
    pub input: PathBuf,
    pub outcome: OutcomeSpec,
    pub predictors: Vec<String>,
    pub penalty: Penalty,
    pub chain: ChainConfig,
    pub min_cell: usize,
    pub rhat_threshold: f64,
    pub out: PathBuf,
}

/// Continuous unless every value is 0 or 1.
fn detect_kind(path: &Path, column: &str) -> Result<KindArg> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let Some(i) = headers.iter().position(|h| h == column) else {
        return Err(Error::MissingColumn {
            path: path.to_path_buf(),
            column: column.into(),
        });
    };
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        if !matches!(rec.get(i), Some("0" | "1")) {
            return Ok(KindArg::Continuous);
        }
    }
    Ok(KindArg::Binary)
}

impl FitArgs {
    /// Merges flags over the optional config file and fills defaults.
    pub fn resolve(self) -> Result<FitRequest> {
        let file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?;
                let f: FitFile = toml::from_str(&text).map_err(|e| Error::Config {
                    path: p.clone(),
                    detail: e.to_string(),
                })?;
                if f.schema_version != FIT_SCHEMA_VERSION {
                    return Err(Error::Config {
                        path: p.clone(),
                        detail: format!(
                            "schema_version {} is not supported (expected {FIT_SCHEMA_VERSION})",
                            f.schema_version
                        ),
                    });
                }
                f
            }
            None => FitFile::default(),
        };
        let input = self
            .input
            .or(file.input)
            .ok_or_else(|| Error::invalid("input", "no input file given"))?;
        let time = self.time.or(file.time);
        let event = self.event.or(file.event);
        let outcome_col = self.outcome.or(file.outcome);
        let outcome = match (outcome_col, time, event) {
            (Some(c), None, None) => match self.kind.or(file.kind) {
                Some(KindArg::Binary) => OutcomeSpec::Binary(c),
                Some(KindArg::Continuous) => OutcomeSpec::Continuous(c),
                None => match detect_kind(&input, &c)? {
                    KindArg::Binary => OutcomeSpec::Binary(c),
                    KindArg::Continuous => OutcomeSpec::Continuous(c),
                },
            },
            (None, Some(time), Some(event)) => OutcomeSpec::Survival { time, event },
            _ => {
                return Err(Error::invalid(
                    "outcome",
                    "give either an outcome column or both time and event columns",
                ))
            }
        };
        let predictors = self
            .predictors
            .or(file.predictors)
            .ok_or_else(|| Error::invalid("predictors", "no predictor columns given"))?;
        let lambda = self.lambda.or(file.lambda);
        let penalty = match self.penalty.or(file.penalty).unwrap_or(PenaltyArg::None) {
            PenaltyArg::None => Penalty::None,
            PenaltyArg::Lasso => Penalty::Lasso {
                lambda: lambda.ok_or_else(|| Error::invalid("lambda", "lasso needs --lambda"))?,
            },
            PenaltyArg::Horseshoe => Penalty::Horseshoe {
                lambda: lambda
                    .ok_or_else(|| Error::invalid("lambda", "horseshoe needs --lambda"))?,
            },
        };
        let defaults = ChainConfig::default();
        let full = self.full_draws || file.full_draws.unwrap_or(false);
        let chain = ChainConfig {
            n_iter: self.iters.or(file.iters).unwrap_or(defaults.n_iter),
            burn_in: self.burnin.or(file.burnin).unwrap_or(defaults.burn_in),
            thin: if full {
                1
            } else {
                self.thin.or(file.thin).unwrap_or(5)
            },
            n_chains: self.chains.or(file.chains).unwrap_or(defaults.n_chains),
            seed: self.seed.or(file.seed).unwrap_or(defaults.seed),
            ..defaults
        };
        chain.validate()?;
        Ok(FitRequest {
            input,
            outcome,
            predictors,
            penalty,
            chain,
            min_cell: self.min_cell.or(file.min_cell).unwrap_or(5),
            rhat_threshold: self.rhat_threshold.or(file.rhat_threshold).unwrap_or(1.1),
            out: self
                .out
                .or(file.out)
                .ok_or_else(|| Error::invalid("out", "no output directory given"))?,
        })
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Runs the fit and writes `summary.csv`, `draws_chain<k>.csv`,
/// `convergence.txt` and, when levels were re-coded, `level_mapping.csv`.
pub fn run_fit(req: &FitRequest) -> Result<ConvergenceStatus> {
    let data = ingest_csv(&req.input, &req.outcome, &req.predictors, req.min_cell)?;
    let kind = data.outcome.kind();
    let mut priors = default_priors(kind);
    priors.penalty = req.penalty;
    let model = Model::new(&data.design, &data.outcome, &priors)?;
    let chains = run_chains(&model, &req.chain)?;
    let summary = summarize(&chains, &data.design, kind)?;
    let conv = check_convergence(&summary, req.rhat_threshold);

    create_dir(&req.out)?;
    write_summary(&req.out.join("summary.csv"), &summary, &data.design)?;
    for (k, c) in chains.iter().enumerate() {
        write_draws(&req.out.join(format!("draws_chain{}.csv", k + 1)), c, &data.design, kind)?;
    }
    if !data.recodings.is_empty() {
        write_recodings(&req.out.join("level_mapping.csv"), &data.recodings)?;
    }
    let mut text = conv.render();
    for p in &summary.predictors {
        let per_chain: Vec<String> = p.p_z1_by_chain.iter().map(|x| fmt_g6(*x)).collect();
        text.push_str(&format!("p_z1 by chain {}: {}\n", p.name, per_chain.join(" ")));
    }
    for (k, c) in chains.iter().enumerate() {
        if !c.acceptance.is_empty() {
            let rates: Vec<String> = c.acceptance.iter().map(|x| fmt_g6(*x)).collect();
            text.push_str(&format!("chain {} acceptance: {}\n", k + 1, rates.join(" ")));
        }
        if let Some(j) = c.joint_acceptance {
            text.push_str(&format!("chain {} joint move acceptance: {}\n", k + 1, fmt_g6(j)));
        }
    }
    write_text(&req.out.join("convergence.txt"), &text)?;
    Ok(conv.status)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario TOML file or bundled scenario name.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Writes `report.csv` and `report.txt`; returns the rendered table.
pub fn run_simulate(args: &SimulateArgs) -> Result<String> {
    let mut spec = load_scenario(&args.scenario)?;
    if let Some(r) = args.replications {
        spec.replications = r;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    spec.validate()?;
    let report = run_replications(&spec)?;
    create_dir(&args.out)?;
    write_sim_report(&args.out.join("report.csv"), &report)?;
    let text = report.render();
    write_text(&args.out.join("report.txt"), &text)?;
    Ok(text)
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub scenario: String,
    /// Replication index whose data to write.
    #[arg(long, default_value_t = 0)]
    pub replication: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_generate(args: &GenerateArgs) -> Result<()> {
    let mut spec = load_scenario(&args.scenario)?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let data = generate_replication(&spec, args.replication)?;
    write_dataset(&args.out, &data.design, &data.outcome)
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 10)]
    pub instances: usize,
    /// Post-burn-in draws per chain.
    #[arg(long, default_value_t = 20_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.02)]
    pub tolerance: f64,
}

/// Random instance with `n` rows and `j` four-level predictors, every level
/// present, and a continuous outcome with random effects.
pub fn verify_instance(seed: u64, n: usize, j: usize) -> Result<(OrdinalDesign, OutcomeData)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<u32>> = (0..j)
        .map(|_| {
            (0..n)
                .map(|i| if i < 4 { i as u32 } else { rng.random_range(0..4) })
                .collect()
        })
        .collect();
    let names = (1..=j).map(|k| format!("x{k}")).collect();
    let design = OrdinalDesign::new(names, columns, 1)?;
    let mut y = vec![0.0; n];
    for k in 0..j {
        let c = rng.random_range(0..design.n_configs(k));
        let b: f64 = rng.random_range(-1.0..1.0);
        for (yi, f) in y.iter_mut().zip(design.transformed(k, c)) {
            *yi += b * f;
        }
    }
    for yi in y.iter_mut() {
        *yi += crate::dist::std_normal(&mut rng);
    }
    Ok((design, OutcomeData::Continuous(y)))
}

/// Largest `|MCMC P(Z=1) - exact P(Z=1)|` per instance.
pub fn run_verify(args: &VerifyArgs) -> Result<Vec<(u64, Vec<(f64, f64)>)>> {
    let priors = default_priors(OutcomeKind::Continuous);
    let mut out = Vec::with_capacity(args.instances);
    for i in 0..args.instances {
        let seed = args.seed.wrapping_add(i as u64);
        let (design, y) = verify_instance(seed, 20, 2)?;
        let exact = enumerate_posterior(&design, &y, &priors)?;
        let model = Model::new(&design, &y, &priors)?;
        let config = ChainConfig {
            n_iter: args.draws + 2_000,
            burn_in: 2_000,
            n_chains: 2,
            seed,
            ..ChainConfig::default()
        };
        let chains = run_chains(&model, &config)?;
        let summary = summarize(&chains, &design, OutcomeKind::Continuous)?;
        out.push((
            seed,
            summary
                .predictors
                .iter()
                .zip(&exact.p_z1)
                .map(|(p, &e)| (p.p_z1, e))
                .collect(),
        ));
    }
    Ok(out)
}

fn report_error(e: &Error) -> u8 {
    eprintln!("error: {e}");
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    match cli.command {
        Command::Fit(args) => {
            let req = match args.resolve() {
                Ok(r) => r,
                Err(e) => return report_error(&e),
            };
            match run_fit(&req) {
                Ok(ConvergenceStatus::Passed) => {
                    println!("fit written to {}", req.out.display());
                    EXIT_OK
                }
                Ok(ConvergenceStatus::NotAssessable) => {
                    eprintln!("warning: convergence not assessable with a single chain");
                    EXIT_CONVERGENCE
                }
                Ok(ConvergenceStatus::Failed { offenders }) => {
                    eprintln!(
                        "warning: {} parameter(s) failed the R-hat check; see {}",
                        offenders.len(),
                        req.out.join("convergence.txt").display()
                    );
                    EXIT_CONVERGENCE
                }
                Err(e) => report_error(&e),
            }
        }
        Command::Simulate(args) => match run_simulate(&args) {
            Ok(text) => {
                print!("{text}");
                EXIT_OK
            }
            Err(e) => report_error(&e),
        },
        Command::Generate(args) => match run_generate(&args) {
            Ok(()) => EXIT_OK,
            Err(e) => report_error(&e),
        },
        Command::Verify(args) => match run_verify(&args) {
            Ok(rows) => {
                let mut ok = true;
                for (seed, preds) in rows {
                    for (j, (m, e)) in preds.iter().enumerate() {
                        let d = (m - e).abs();
                        ok &= d < args.tolerance;
                        println!(
                            "instance {seed} x{}: mcmc {} exact {} diff {}",
                            j + 1,
                            fmt_g6(*m),
                            fmt_g6(*e),
                            fmt_g6(d)
                        );
                    }
                }
                println!("{}", if ok { "verify: ok" } else { "verify: MISMATCH" });
                if ok {
                    EXIT_OK
                } else {
                    EXIT_RUNTIME
                }
            }
            Err(e) => report_error(&e),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for name in bundled_names() {
            let s = ScenarioSpec::from_toml(bundled_scenario(name).unwrap())
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
        let t1 = load_scenario("table1_desk").unwrap();
        assert_eq!(t1.predictors.len(), 13);
        assert_eq!(t1.replications, 50);
        assert_eq!(t1.penalty, Some(Penalty::Lasso { lambda: 0.01 }));
        assert!(load_scenario("no_such_scenario").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("fit.toml");
        std::fs::write(
            &cfg,
            "schema_version = 1\ninput = \"d.csv\"\noutcome = \"y\"\nkind = \"continuous\"\n\
             predictors = [\"a\", \"b\"]\nchains = 3\nseed = 4\nout = \"o\"\n",
        )
        .unwrap();
        let args = FitArgs {
            config: Some(cfg.clone()),
            seed: Some(9),
            ..FitArgs::default()
        };
        let req = args.resolve().unwrap();
        assert_eq!(req.chain.seed, 9);
        assert_eq!(req.chain.n_chains, 3);
        assert_eq!(req.chain.thin, 5);
        assert_eq!(req.min_cell, 5);
        assert_eq!(req.outcome, OutcomeSpec::Continuous("y".into()));

        std::fs::write(&cfg, "schema_version = 2\n").unwrap();
        let args = FitArgs {
            config: Some(cfg),
            ..FitArgs::default()
        };
        assert!(matches!(args.resolve(), Err(Error::Config { .. })));
    }
}
