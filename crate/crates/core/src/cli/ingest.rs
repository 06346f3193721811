//! CSV ingestion and dataset export.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::design::{OrdinalDesign, OutcomeData, OutcomeKind};
use crate::error::{Error, Result};

/// Which columns hold the outcome.
#[derive(Clone, Debug, PartialEq)]
pub enum OutcomeSpec {
    Continuous(String),
    Binary(String),
    Survival { time: String, event: String },
}

/// Original level to consecutive code for one re-coded predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct Recoding {
    pub predictor: String,
    pub mapping: Vec<(i64, u32)>,
}

pub struct Ingested {
    pub design: OrdinalDesign,
    pub outcome: OutcomeData,
    pub recodings: Vec<Recoding>,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Reads the named columns; rows are numbered from 1 after the header.
/// Predictor levels that are not `0..=K` are re-coded to their ranks.
pub fn ingest_csv(
    path: &Path,
    outcome: &OutcomeSpec,
    predictors: &[String],
    min_cell: usize,
) -> Result<Ingested> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col = |name: &str| {
        index.get(name).copied().ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    if predictors.is_empty() {
        return Err(Error::invalid("predictors", "no predictor columns given"));
    }
    let pred_idx = predictors.iter().map(|p| col(p)).collect::<Result<Vec<_>>>()?;
    let out_idx: Vec<(String, usize)> = match outcome {
        OutcomeSpec::Continuous(c) | OutcomeSpec::Binary(c) => vec![(c.clone(), col(c)?)],
        OutcomeSpec::Survival { time, event } => {
            vec![(time.clone(), col(time)?), (event.clone(), col(event)?)]
        }
    };

    let bad = |row: usize, column: &str, detail: String| Error::BadCell {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        detail,
    };
    let mut raw: Vec<Vec<i64>> = vec![Vec::new(); predictors.len()];
    let mut reals: Vec<f64> = Vec::new();
    let mut flags: Vec<bool> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(csv_err)?;
        let cell = |i: usize, name: &str| -> Result<&str> {
            let v = record.get(i).unwrap_or("");
            if is_missing(v) {
                Err(bad(row, name, "missing value".into()))
            } else {
                Ok(v)
            }
        };
        for (k, (&i, name)) in pred_idx.iter().zip(predictors).enumerate() {
            let v = cell(i, name)?;
            let level: i64 = v
                .parse()
                .map_err(|_| bad(row, name, format!("'{v}' is not an integer")))?;
            raw[k].push(level);
        }
        let parse_real = |i: usize, name: &str| -> Result<f64> {
            let v = cell(i, name)?;
            let x: f64 = v
                .parse()
                .map_err(|_| bad(row, name, format!("'{v}' is not a number")))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(bad(row, name, format!("'{v}' is not finite")))
            }
        };
        let parse_flag = |i: usize, name: &str| -> Result<bool> {
            match cell(i, name)? {
                "0" => Ok(false),
                "1" => Ok(true),
                v => Err(bad(row, name, format!("'{v}' is not 0 or 1"))),
            }
        };
        match outcome {
            OutcomeSpec::Continuous(_) => reals.push(parse_real(out_idx[0].1, &out_idx[0].0)?),
            OutcomeSpec::Binary(_) => flags.push(parse_flag(out_idx[0].1, &out_idx[0].0)?),
            OutcomeSpec::Survival { .. } => {
                let t = parse_real(out_idx[0].1, &out_idx[0].0)?;
                if t <= 0.0 {
                    return Err(bad(row, &out_idx[0].0, format!("survival time {t} is not positive")));
                }
                reals.push(t);
                flags.push(parse_flag(out_idx[1].1, &out_idx[1].0)?);
            }
        }
    }

    let mut columns = Vec::with_capacity(raw.len());
    let mut recodings = Vec::new();
    for (name, values) in predictors.iter().zip(raw) {
        let levels: BTreeSet<i64> = values.iter().copied().collect();
        let consecutive = levels
            .iter()
            .enumerate()
            .all(|(rank, &l)| l == rank as i64);
        if consecutive {
            columns.push(values.iter().map(|&v| v as u32).collect());
        } else {
            let mapping: Vec<(i64, u32)> = levels
                .iter()
                .enumerate()
                .map(|(rank, &l)| (l, rank as u32))
                .collect();
            let lookup: HashMap<i64, u32> = mapping.iter().copied().collect();
            columns.push(values.iter().map(|v| lookup[v]).collect());
            recodings.push(Recoding {
                predictor: name.clone(),
                mapping,
            });
        }
    }
    let outcome = match outcome {
        OutcomeSpec::Continuous(_) => OutcomeData::Continuous(reals),
        OutcomeSpec::Binary(_) => OutcomeData::Binary(flags),
        OutcomeSpec::Survival { .. } => OutcomeData::Survival {
            time: reals,
            event: flags,
        },
    };
    let design = OrdinalDesign::new(predictors.to_vec(), columns, min_cell)?;
    outcome.validate(design.n())?;
    Ok(Ingested {
        design,
        outcome,
        recodings,
    })
}

/// Writes predictors and outcome in the layout `ingest_csv` reads: predictor
/// columns by name, then `y` or `time,event`.
pub fn write_dataset(path: &Path, design: &OrdinalDesign, outcome: &OutcomeData) -> Result<()> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = design.names().to_vec();
    match outcome.kind() {
        OutcomeKind::Continuous | OutcomeKind::Binary => header.push("y".into()),
        OutcomeKind::Survival => header.extend(["time".to_string(), "event".to_string()]),
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..design.n() {
        let mut rec: Vec<String> = (0..design.n_predictors())
            .map(|j| design.column(j)[i].to_string())
            .collect();
        match outcome {
            OutcomeData::Continuous(y) => rec.push(y[i].to_string()),
            OutcomeData::Binary(y) => rec.push(u8::from(y[i]).to_string()),
            OutcomeData::Survival { time, event } => {
                rec.push(time[i].to_string());
                rec.push(u8::from(event[i]).to_string());
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `predictor,original,code` rows for every re-coded predictor.
pub fn write_recodings(path: &Path, recodings: &[Recoding]) -> Result<()> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["predictor", "original", "code"]).map_err(csv_err)?;
    for r in recodings {
        for (orig, code) in &r.mapping {
            w.write_record([r.predictor.clone(), orig.to_string(), code.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
