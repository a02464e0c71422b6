use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::runner::{Aggregate, TrialFailure, TrialReport, TrialRow};
use crate::HarnessError;

pub const CSV_HEADER: &str = "# distfreq-trials v1";
pub const JSON_FORMAT: &str = "distfreq-aggregate v1";
/// Overrides the default output directory when `--out` is not given.
pub const OUT_ENV: &str = "DISTFREQ_OUT";

pub fn write_csv(rows: &[TrialRow], mut w: impl Write) -> Result<(), HarnessError> {
    writeln!(w, "{CSV_HEADER}")?;
    let mut cw = csv::Writer::from_writer(w);
    for r in rows {
        cw.serialize(r)?;
    }
    cw.flush()?;
    Ok(())
}

pub fn csv_bytes(rows: &[TrialRow]) -> Result<Vec<u8>, HarnessError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(buf)
}

pub fn read_csv(r: impl Read) -> Result<Vec<TrialRow>, HarnessError> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    rd.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateFile {
    pub format: String,
    pub run_id: String,
    pub config: ExperimentConfig,
    pub failures: Vec<TrialFailure>,
    pub aggregate: Aggregate,
}

/// First 16 hex digits of SHA-256 over the config echo and the CSV bytes.
pub fn run_id(config: &ExperimentConfig, csv: &[u8]) -> Result<String, HarnessError> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    h.update(csv);
    Ok(h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// `--out` if given, else `$DISTFREQ_OUT`, else `./out`.
pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_report(report: &TrialReport, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let csv = csv_bytes(&report.rows)?;
    let file = AggregateFile {
        format: JSON_FORMAT.into(),
        run_id: run_id(&report.config, &csv)?,
        config: report.config.clone(),
        failures: report.failures.clone(),
        aggregate: report.aggregate.clone(),
    };
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&csv_path, csv)?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok((csv_path, json_path))
}

/// File stem naming one experiment.
pub fn stem(cfg: &ExperimentConfig) -> String {
    format!("{}_k{}_n{}_p{}_eps{}_seed{}", cfg.protocol, cfg.k, cfg.n, cfg.p, cfg.eps, cfg.seed)
}
