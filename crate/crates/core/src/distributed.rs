//! Seed-sharing data-parallel SGD.
//!
//! Every worker evaluates one perturbation per round and broadcasts only the
//! resulting scalars. Perturbation `i` of round `r` is regenerated anywhere
//! from `sample_seed(round_seed(master_seed, r), i)`, so every replica can
//! rebuild the full gradient estimate from the message board alone. With the
//! same seed this is exactly the batch [`sample_batch`] draws for
//! `round_seed(master_seed, r)`, which makes the distributed update equal to
//! the local estimator update bit for bit.
//!
//! Lost messages are handled by renormalizing over the workers that were
//! heard from. Every replica sees the same filtered board and so stays in
//! lock step.
//!
//! [`sample_batch`]: crate::estimators::sample_batch

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, ProtocolError, Result};
use crate::estimators::{assemble, perturbation, sample_scalars, weights, BaselineMode, BaselineState, EstimatorKind};
use crate::exec::Executor;
use crate::objectives::Objective;
use crate::optim::Optimizer;
use crate::rng::{round_seed, sample_seed};

/// Bytes of wire header: round (u32), worker (u32), payload count (u8).
pub const HEADER_BYTES: usize = 9;
/// Bytes per payload scalar.
pub const SCALAR_BYTES: usize = 8;

/// Seed of worker `worker`'s perturbation in round `round`.
pub fn worker_seed(master_seed: u64, round: u64, worker: u32) -> u64 {
    sample_seed(round_seed(master_seed, round), worker as u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub mode: EstimatorKind,
    pub sigma: f64,
    pub workers: u32,
}

impl ProtocolConfig {
    pub fn new(mode: EstimatorKind, sigma: f64, workers: u32) -> Result<Self> {
        if workers == 0 {
            return Err(Error::InvalidArgument("cluster needs at least one worker"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument("sigma must be positive and finite"));
        }
        Ok(Self { mode, sigma, workers })
    }

    /// Scalars each worker posts per round.
    pub fn payload_len(&self) -> usize {
        self.mode.scalars_per_sample()
    }

    pub fn payload_bytes(&self) -> usize {
        self.payload_len() * SCALAR_BYTES
    }

    /// Scalars on the board after a complete round.
    pub fn scalars_per_round(&self) -> usize {
        self.workers as usize * self.payload_len()
    }

    /// Bytes of a dense `D`-dimensional gradient over bytes of one payload.
    pub fn compression_ratio(&self, dim: usize) -> f64 {
        (dim * SCALAR_BYTES) as f64 / self.payload_bytes() as f64
    }
}

/// One worker's post for one round. The seed is not transmitted.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerRound {
    pub round: u64,
    pub worker: u32,
    pub seed: u64,
    pub payload: Vec<f64>,
}

impl WorkerRound {
    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES + SCALAR_BYTES * self.payload.len()
    }

    /// Fixed little-endian layout: round u32, worker u32, count u8, payload f64s.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let round = u32::try_from(self.round).map_err(|_| ProtocolError::Malformed("round does not fit in u32"))?;
        let count = u8::try_from(self.payload.len()).map_err(|_| ProtocolError::Malformed("payload too long"))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&round.to_le_bytes());
        out.extend_from_slice(&self.worker.to_le_bytes());
        out.push(count);
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Parses one record, re-deriving the seed from `master_seed`. Returns the
    /// message and the number of bytes consumed.
    pub fn decode(bytes: &[u8], master_seed: u64) -> Result<(Self, usize)> {
        if bytes.len() < HEADER_BYTES {
            return Err(ProtocolError::Malformed("truncated header").into());
        }
        let round = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as u64;
        let worker = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        let count = bytes[8] as usize;
        let len = HEADER_BYTES + SCALAR_BYTES * count;
        if bytes.len() < len {
            return Err(ProtocolError::Malformed("truncated payload").into());
        }
        let payload = bytes[HEADER_BYTES..len]
            .chunks_exact(SCALAR_BYTES)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let msg = Self {
            round,
            worker,
            seed: worker_seed(master_seed, round, worker),
            payload,
        };
        Ok((msg, len))
    }
}

/// What a replica does when some workers are not heard from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Any missing worker is a protocol error.
    Reject,
    /// Average over the received messages only (`1/S` becomes `1/S_received`).
    #[default]
    Renormalize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaState {
    pub x: Vec<f64>,
    pub optimizer: Optimizer,
    pub master_seed: u64,
    pub round_index: u64,
    /// Consulted by GP-baseline only. A moving average is fed the mean of the
    /// received function values each round; current-value mode evaluates
    /// `f(x)` locally.
    pub baseline: BaselineState,
}

impl ReplicaState {
    pub fn new(x: Vec<f64>, optimizer: Optimizer, master_seed: u64) -> Self {
        Self {
            x,
            optimizer,
            master_seed,
            round_index: 0,
            baseline: BaselineState::current_value(),
        }
    }

    pub fn with_baseline(mut self, baseline: BaselineState) -> Self {
        self.baseline = baseline;
        self
    }

    /// Bitwise equality of everything that evolves.
    pub fn bit_identical(&self, other: &Self) -> bool {
        self.round_index == other.round_index
            && self.master_seed == other.master_seed
            && self.x.len() == other.x.len()
            && self.x.iter().zip(&other.x).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.optimizer == other.optimizer
            && self.baseline.history().map(|v| v.to_bits()).eq(other.baseline.history().map(|v| v.to_bits()))
    }
}

/// Worker `worker` evaluates its own perturbation at the replica's `x`.
pub fn worker_compute<O: Objective + ?Sized>(
    replica: &ReplicaState,
    obj: &O,
    config: &ProtocolConfig,
    worker: u32,
) -> Result<WorkerRound> {
    check_dim(obj.dim(), replica.x.len())?;
    if replica.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("replica parameters must be finite"));
    }
    if worker >= config.workers {
        return Err(ProtocolError::UnknownWorker {
            worker,
            workers: config.workers,
        }
        .into());
    }
    let seed = worker_seed(replica.master_seed, replica.round_index, worker);
    let eps = perturbation(obj.dim(), config.sigma, config.mode.distribution(), seed);
    let s = sample_scalars(config.mode, obj, &replica.x, &eps)?;
    Ok(WorkerRound {
        round: replica.round_index,
        worker,
        seed,
        payload: s[..config.payload_len()].to_vec(),
    })
}

/// Mean of the function values among `evals`; `None` for DD, whose scalars
/// are derivatives.
pub fn observed_loss(kind: EstimatorKind, evals: &[f64]) -> Option<f64> {
    if kind == EstimatorKind::DirectionalDerivative || evals.is_empty() {
        return None;
    }
    Some(crate::reduce::pairwise_sum_slice(evals) / evals.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub gradient: Vec<f64>,
    pub received: usize,
    pub baseline: Option<f64>,
    /// See [`observed_loss`].
    pub observed_loss: Option<f64>,
}

/// Rebuilds the round's gradient estimate from `messages` and applies one
/// optimizer step. On error the replica is left untouched.
pub fn replica_apply_round<O: Objective + ?Sized>(
    replica: &mut ReplicaState,
    obj: &O,
    messages: &[WorkerRound],
    config: &ProtocolConfig,
    policy: MissingPolicy,
) -> Result<RoundOutcome> {
    let dim = obj.dim();
    check_dim(dim, replica.x.len())?;
    let mut seen = BTreeSet::new();
    for m in messages {
        if m.round != replica.round_index {
            return Err(Error::StaleRound {
                expected: replica.round_index,
                found: m.round,
            });
        }
        if m.worker >= config.workers {
            return Err(ProtocolError::UnknownWorker {
                worker: m.worker,
                workers: config.workers,
            }
            .into());
        }
        if m.payload.len() != config.payload_len() {
            return Err(ProtocolError::PayloadLength {
                worker: m.worker,
                expected: config.payload_len(),
                found: m.payload.len(),
            }
            .into());
        }
        if !seen.insert(m.worker) {
            return Err(ProtocolError::DuplicateWorker(m.worker).into());
        }
    }
    if policy == MissingPolicy::Reject {
        if let Some(w) = (0..config.workers).find(|w| !seen.contains(w)) {
            return Err(ProtocolError::MissingWorker(w).into());
        }
    }
    if messages.is_empty() {
        return Err(ProtocolError::EmptyRound.into());
    }

    let mut board: Vec<&WorkerRound> = messages.iter().collect();
    board.sort_unstable_by_key(|m| m.worker);
    let evals: Vec<f64> = board.iter().flat_map(|m| m.payload.iter().copied()).collect();
    let baseline = if config.mode == EstimatorKind::GpBaseline {
        Some(replica.baseline.average().unwrap_or_else(|| obj.eval(&replica.x)))
    } else {
        None
    };
    let w = weights(config.mode, &evals, baseline)?;
    let dist = config.mode.distribution();
    let eps: Vec<Vec<f64>> = board
        .iter()
        .map(|m| perturbation(dim, config.sigma, dist, worker_seed(replica.master_seed, replica.round_index, m.worker)))
        .collect();
    let terms: Vec<(&[f64], f64)> = eps.iter().map(Vec::as_slice).zip(w).collect();
    let gradient = assemble(config.mode, dim, config.sigma, &terms)?;

    let mut x = replica.x.clone();
    let mut optimizer = replica.optimizer.clone();
    optimizer.step(&mut x, &gradient)?;
    replica.x = x;
    replica.optimizer = optimizer;
    replica.round_index += 1;
    let loss = observed_loss(config.mode, &evals);
    if let (Some(l), BaselineMode::MovingAverage) = (loss, replica.baseline.mode()) {
        replica.baseline.record(l);
    }
    Ok(RoundOutcome {
        gradient,
        received: board.len(),
        baseline,
        observed_loss: loss,
    })
}

/// Messages to drop, addressed by `(round, worker)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    drops: BTreeSet<(u64, u32)>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn drop_message(mut self, round: u64, worker: u32) -> Self {
        self.drops.insert((round, worker));
        self
    }

    pub fn is_dropped(&self, round: u64, worker: u32) -> bool {
        self.drops.contains(&(round, worker))
    }

    pub fn len(&self) -> usize {
        self.drops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drops.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub protocol: ProtocolConfig,
    pub rounds: u64,
    pub master_seed: u64,
    /// Replicas that independently apply every round and are compared
    /// bitwise. Workers are assigned to them round-robin.
    pub replicas: usize,
    pub baseline: BaselineState,
    pub policy: MissingPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: u64,
    /// `f(x)` at the start of the round, computed outside the protocol for
    /// reporting.
    pub loss: f64,
    pub received: usize,
    pub scalars: usize,
    pub payload_bytes: usize,
    pub wire_bytes: usize,
    pub replicas_identical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub workers: u32,
    pub dim: usize,
    pub mode: EstimatorKind,
    pub sigma: f64,
    pub replicas: usize,
    pub rounds: Vec<RoundReport>,
    pub final_x: Vec<f64>,
    pub final_loss: f64,
    pub compression_ratio: f64,
}

impl ClusterReport {
    pub fn all_identical(&self) -> bool {
        self.rounds.iter().all(|r| r.replicas_identical)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.loss).collect()
    }
}

/// Runs the full protocol in process. Each round, every worker computes its
/// payload, the message is serialized and parsed again, `fault_plan` removes
/// dropped messages, and each replica applies the surviving board.
pub fn simulate_cluster<O: Objective + ?Sized, E: Executor>(
    obj: &O,
    x0: Vec<f64>,
    optimizer: Optimizer,
    config: &ClusterConfig,
    fault_plan: &FaultPlan,
    exec: &E,
) -> Result<ClusterReport> {
    check_dim(obj.dim(), x0.len())?;
    if config.replicas == 0 {
        return Err(Error::InvalidArgument("need at least one replica"));
    }
    let protocol = &config.protocol;
    let init = ReplicaState::new(x0, optimizer, config.master_seed).with_baseline(config.baseline.clone());
    let mut replicas: Vec<ReplicaState> = (0..config.replicas).map(|_| init.clone()).collect();
    let mut rounds = Vec::with_capacity(config.rounds as usize);

    for round in 0..config.rounds {
        let loss = obj.eval(&replicas[0].x);
        let posted: Vec<Result<(WorkerRound, usize)>> = exec.map(protocol.workers as usize, |w| {
            let replica = &replicas[w % replicas.len()];
            let msg = worker_compute(replica, obj, protocol, w as u32)?;
            let bytes = msg.encode()?;
            let (parsed, used) = WorkerRound::decode(&bytes, config.master_seed)?;
            if used != bytes.len() || parsed != msg {
                return Err(ProtocolError::Malformed("wire round trip changed the message").into());
            }
            Ok((parsed, bytes.len()))
        });
        let mut board = Vec::with_capacity(posted.len());
        let mut wire_bytes = 0;
        for p in posted {
            let (msg, len) = p?;
            if !fault_plan.is_dropped(round, msg.worker) {
                wire_bytes += len;
                board.push(msg);
            }
        }
        let outcomes: Vec<Result<(ReplicaState, usize)>> = exec.map(replicas.len(), |r| {
            let mut next = replicas[r].clone();
            let out = replica_apply_round(&mut next, obj, &board, protocol, config.policy)?;
            Ok((next, out.received))
        });
        let mut received = 0;
        for (r, o) in outcomes.into_iter().enumerate() {
            let (state, n) = o?;
            replicas[r] = state;
            received = n;
        }
        let replicas_identical = replicas.iter().all(|r| r.bit_identical(&replicas[0]));
        rounds.push(RoundReport {
            round,
            loss,
            received,
            scalars: received * protocol.payload_len(),
            payload_bytes: received * protocol.payload_bytes(),
            wire_bytes,
            replicas_identical,
        });
    }

    let final_x = replicas[0].x.clone();
    Ok(ClusterReport {
        workers: protocol.workers,
        dim: obj.dim(),
        mode: protocol.mode,
        sigma: protocol.sigma,
        replicas: config.replicas,
        rounds,
        final_loss: obj.eval(&final_x),
        final_x,
        compression_ratio: protocol.compression_ratio(obj.dim()),
    })
}
