//! End-to-end run of the seed-sharing protocol.

use std::io::Write;

use serde_json::json;
use vograd_core::distributed::{simulate_cluster, ClusterConfig, ClusterReport, FaultPlan, MissingPolicy, ProtocolConfig};
use vograd_core::Executor;

use super::{evaluation_point, Poly};
use crate::config::{ExperimentConfig, Policy};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutput {
    pub objective: &'static str,
    pub report: ClusterReport,
    pub drops: usize,
}

impl ClusterOutput {
    pub fn to_json(&self, cfg: &ExperimentConfig) -> serde_json::Value {
        let r = &self.report;
        json!({
            "experiment": cfg.experiment.name(),
            "config_hash": cfg.hash(),
            "seed": cfg.master_seed,
            "objective": self.objective,
            "dim": r.dim,
            "workers": r.workers,
            "mode": r.mode.name(),
            "sigma": r.sigma,
            "replicas": r.replicas,
            "dropped_messages": self.drops,
            "compression_ratio": r.compression_ratio,
            "replicas_identical": r.all_identical(),
            "final_loss": r.final_loss,
            "rounds": r.rounds.iter().map(|x| json!({
                "round": x.round,
                "loss": x.loss,
                "received": x.received,
                "scalars": x.scalars,
                "payload_bytes": x.payload_bytes,
                "wire_bytes": x.wire_bytes,
                "replicas_identical": x.replicas_identical,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn write_json<W: Write>(&self, cfg: &ExperimentConfig, mut w: W) -> anyhow::Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_json(cfg))?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

pub fn run_cluster<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> anyhow::Result<ClusterOutput> {
    let obj = Poly::from_config(cfg)?;
    let c = &cfg.cluster;
    let plan = c
        .drops
        .iter()
        .fold(FaultPlan::none(), |p, d| p.drop_message(d.round, d.worker));
    let config = ClusterConfig {
        protocol: ProtocolConfig::new(c.mode.0, c.sigma, c.workers)?,
        rounds: c.rounds,
        master_seed: cfg.master_seed,
        replicas: c.replicas,
        baseline: c
            .baseline
            .state(c.baseline_window)?
            .unwrap_or_default(),
        policy: match c.policy {
            Policy::Reject => MissingPolicy::Reject,
            Policy::Renormalize => MissingPolicy::Renormalize,
        },
    };
    let report = simulate_cluster(&obj, evaluation_point(cfg), cfg.optimizer.build()?, &config, &plan, exec)?;
    Ok(ClusterOutput {
        objective: obj.name(),
        report,
        drops: plan.len(),
    })
}
