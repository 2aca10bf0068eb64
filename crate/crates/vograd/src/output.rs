//! CSV and JSON-lines writers.
//!
//! Every CSV starts with one comment line recording the experiment, the
//! config hash and the master seed, followed by a header row.

use std::io::Write;

use serde::Serialize;
use vograd_core::GradientEstimate;

use crate::config::ExperimentConfig;

pub fn provenance_line(cfg: &ExperimentConfig) -> String {
    format!(
        "# vograd {} config_hash={} seed={}",
        cfg.experiment,
        cfg.hash(),
        cfg.master_seed
    )
}

/// Writes the comment line and header, returning a writer for the rows.
pub fn csv_writer<W: Write>(mut w: W, cfg: &ExperimentConfig, header: &[String]) -> anyhow::Result<csv::Writer<W>> {
    writeln!(w, "{}", provenance_line(cfg))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

/// Shortest representation that parses back to the same bits.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// One JSON-lines dump record.
#[derive(Debug, Serialize)]
pub struct EstimateRecord<'a> {
    pub estimator: &'a str,
    #[serde(rename = "S")]
    pub samples: usize,
    pub sigma: f64,
    pub seed: Option<u64>,
    pub g_hat: &'a [f64],
    pub evals: &'a [f64],
}

impl<'a> From<&'a GradientEstimate> for EstimateRecord<'a> {
    fn from(e: &'a GradientEstimate) -> Self {
        Self {
            estimator: e.kind.name(),
            samples: e.samples,
            sigma: e.sigma,
            seed: e.master_seed,
            g_hat: &e.g_hat,
            evals: &e.evals,
        }
    }
}

pub fn write_jsonl<W: Write>(mut w: W, estimate: &GradientEstimate) -> anyhow::Result<()> {
    serde_json::to_writer(&mut w, &EstimateRecord::from(estimate))?;
    w.write_all(b"\n")?;
    Ok(())
}
