//! Output files: posterior summaries, raw draws and simulation reports.

use std::path::Path;

use crate::design::{OrdinalDesign, OutcomeKind};
use crate::diagnostics::{ParamSummary, PosteriorSummary};
use crate::error::{Error, Result};
use crate::sampler::DrawStore;
use crate::sim::SimReport;

/// `%g`-style formatting with six significant digits.
pub fn fmt_g6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })
}

fn finish(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_row(path: &Path, w: &mut csv::Writer<std::fs::File>, row: &[String]) -> Result<()> {
    w.write_record(row).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Columns: `parameter, mean, sd, ci_low, ci_high, selected, p_z1,
/// p_tau_1..p_tau_K, rhat`. Fields that do not apply are empty; an R-hat
/// that cannot be computed is `NA`.
pub fn write_summary(path: &Path, summary: &PosteriorSummary, design: &OrdinalDesign) -> Result<()> {
    let k_max = design.max_cutoff() as usize;
    let mut w = writer(path)?;
    let mut header: Vec<String> = ["parameter", "mean", "sd", "ci_low", "ci_high", "selected", "p_z1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k_max).map(|k| format!("p_tau_{k}")));
    header.push("rhat".into());
    write_row(path, &mut w, &header)?;

    let base = |p: &ParamSummary| {
        vec![
            p.name.clone(),
            fmt_g6(p.mean),
            fmt_g6(p.sd),
            fmt_g6(p.ci_low),
            fmt_g6(p.ci_high),
        ]
    };
    let rhat = |p: &ParamSummary| p.rhat.map_or_else(|| "NA".to_string(), fmt_g6);
    let scalar_row = |p: &ParamSummary| {
        let mut row = base(p);
        row.extend(std::iter::repeat_n(String::new(), 2 + k_max));
        row.push(rhat(p));
        row
    };
    if let Some(a) = &summary.alpha {
        write_row(path, &mut w, &scalar_row(a))?;
    }
    for p in &summary.predictors {
        let mut row = base(&p.beta);
        row.push(p.selected.to_string());
        row.push(fmt_g6(p.p_z1));
        row.extend((1..=k_max as u32).map(|k| fmt_g6(p.p_tau(k))));
        row.push(rhat(&p.beta));
        write_row(path, &mut w, &row)?;
    }
    if let Some(s) = &summary.sigma2 {
        write_row(path, &mut w, &scalar_row(s))?;
    }
    finish(path, w)
}

/// One row per stored draw, full precision.
pub fn write_draws(path: &Path, draws: &DrawStore, design: &OrdinalDesign, kind: OutcomeKind) -> Result<()> {
    let mut w = writer(path)?;
    let names = design.names();
    let mut header = vec!["iteration".to_string()];
    if kind != OutcomeKind::Survival {
        header.push("alpha".into());
    }
    header.extend(names.iter().map(|n| format!("beta_{n}")));
    header.extend(names.iter().map(|n| format!("z_{n}")));
    header.extend(names.iter().map(|n| format!("tau_{n}")));
    if kind == OutcomeKind::Continuous {
        header.push("sigma2".into());
    }
    header.push("pz".into());
    let horseshoe = !draws.global_scale.is_empty();
    if horseshoe {
        header.push("global_scale".into());
    }
    let survival = !draws.cumulative_hazard.is_empty();
    if survival {
        header.push("cumulative_hazard".into());
    }
    write_row(path, &mut w, &header)?;
    for d in 0..draws.len() {
        let mut row = vec![draws.iteration[d].to_string()];
        if kind != OutcomeKind::Survival {
            row.push(draws.alpha[d].to_string());
        }
        row.extend(draws.beta.iter().map(|b| b[d].to_string()));
        row.extend(draws.z.iter().map(|z| z[d].to_string()));
        row.extend(draws.tau.iter().map(|t| t[d].to_string()));
        if kind == OutcomeKind::Continuous {
            row.push(draws.sigma2[d].to_string());
        }
        row.push(draws.pz[d].to_string());
        if horseshoe {
            row.push(draws.global_scale[d].to_string());
        }
        if survival {
            row.push(draws.cumulative_hazard[d].to_string());
        }
        write_row(path, &mut w, &row)?;
    }
    finish(path, w)
}

/// Table-shaped simulation report.
pub fn write_sim_report(path: &Path, report: &SimReport) -> Result<()> {
    let mut w = writer(path)?;
    for row in &report.rows {
        w.serialize(row).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    finish(path, w)
}
