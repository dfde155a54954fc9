//! CSV output. Floats use Rust's shortest round-trip formatting so values read
//! back from a file are bit-identical to the ones written; missing values are `NA`.

use std::io::Write;
use std::path::Path;

use super::sweep::TradeoffPoint;
use super::train::{IterationRow, LeakSummary, RunRecord};
use crate::error::{Error, Result};

pub const RUN_HEADER: &str = "iter,train_loss,norm_cut,cos_cut,norm_first,cos_first,sum_kl,auc_bound,noise_power";
pub const SUMMARY_HEADER: &str =
    "mechanism,hyperparameter,test_loss,test_auc,norm_cut_q95,cos_cut_q95,norm_first_q95,cos_first_q95,measured_iterations,fallback_iterations";
pub const TRADEOFF_HEADER: &str =
    "mechanism,hyperparameter,test_loss,test_auc,norm_cut_q95,cos_cut_q95,norm_first_q95,cos_first_q95,status";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

pub fn run_csv(record: &RunRecord) -> String {
    let mut out = String::with_capacity(64 * (record.rows.len() + 1));
    out.push_str(RUN_HEADER);
    out.push('\n');
    for r in &record.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            r.train_loss,
            opt(r.norm_cut),
            opt(r.cos_cut),
            opt(r.norm_first),
            opt(r.cos_first),
            opt(r.sum_kl),
            opt(r.auc_bound),
            r.noise_power
        ));
    }
    out
}

fn summary_fields(s: &LeakSummary) -> String {
    format!("{},{},{},{}", opt(s.norm_cut), opt(s.cos_cut), opt(s.norm_first), opt(s.cos_first))
}

pub fn summary_csv(record: &RunRecord) -> String {
    let measured = record.rows.iter().filter(|r| r.norm_cut.is_some()).count();
    format!(
        "{SUMMARY_HEADER}\n{},{},{},{},{},{},{}\n",
        record.mechanism.name(),
        opt(record.mechanism.hyperparameter()),
        record.test_loss,
        opt(record.test_auc),
        summary_fields(&record.summary),
        measured,
        record.fallback_iterations
    )
}

pub fn tradeoff_csv(points: &[TradeoffPoint]) -> String {
    let mut out = String::from(TRADEOFF_HEADER);
    out.push('\n');
    for p in points {
        let (loss, auc, leaks, status) = match &p.outcome {
            Ok(o) => (format!("{}", o.test_loss), opt(o.test_auc), summary_fields(&o.leak), "ok".to_string()),
            Err(msg) => (
                "NA".into(),
                "NA".into(),
                "NA,NA,NA,NA".into(),
                format!("error: {}", msg.replace([',', '\n'], ";")),
            ),
        };
        out.push_str(&format!(
            "{},{},{loss},{auc},{leaks},{status}\n",
            p.mechanism,
            opt(p.hyperparameter)
        ));
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Writes `run.csv` and `summary.csv` into `dir`.
pub fn write_run(record: &RunRecord, dir: &Path) -> Result<()> {
    write_file(&dir.join("run.csv"), &run_csv(record))?;
    write_file(&dir.join("summary.csv"), &summary_csv(record))
}

fn parse_opt(field: &str, line: usize) -> Result<Option<f64>> {
    if field == "NA" {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| Error::Parse {
        path: "run.csv".into(),
        line,
        message: format!("bad float `{field}`"),
    })
}

/// Parses a `run.csv` body back into rows.
pub fn parse_run_csv(text: &str) -> Result<Vec<IterationRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(RUN_HEADER) {
        return Err(Error::Parse {
            path: "run.csv".into(),
            line: 1,
            message: "unexpected header".into(),
        });
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let line = i + 2;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Parse {
                    path: "run.csv".into(),
                    line,
                    message: format!("expected 9 fields, found {}", f.len()),
                });
            }
            let req = |s: &str| parse_opt(s, line)?.ok_or(Error::Parse {
                path: "run.csv".into(),
                line,
                message: "required field is NA".into(),
            });
            Ok(IterationRow {
                iter: f[0].parse().map_err(|_| Error::Parse {
                    path: "run.csv".into(),
                    line,
                    message: "bad iteration".into(),
                })?,
                train_loss: req(f[1])?,
                norm_cut: parse_opt(f[2], line)?,
                cos_cut: parse_opt(f[3], line)?,
                norm_first: parse_opt(f[4], line)?,
                cos_first: parse_opt(f[5], line)?,
                sum_kl: parse_opt(f[6], line)?,
                auc_bound: parse_opt(f[7], line)?,
                noise_power: req(f[8])?,
            })
        })
        .collect()
}
