//! Quantum-jump trajectories and their walltime and jumptime averages.
//!
//! Between jumps a trajectory follows `e^{−iH_eff τ}|ψ⟩` without
//! renormalization. A jump fires when `‖ψ(τ)‖²` falls to a uniform threshold
//! `r`, located on the exact propagator by bracketing and safeguarded Newton steps. The
//! channel is drawn with weights `‖L_j ψ‖²` and the post-jump state is
//! `L_j ψ` renormalized.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::jumptime::slowest_decay_rate;
use crate::linalg::{self, hermitian_eigen, outer, real, Operator, Propagator, StateVector, I};
use crate::model::{DensityMatrix, LindbladModel};

pub mod rng;
pub mod stats;

pub use rng::{trajectory_rng, trajectory_seed, RNG_STREAM_VERSION};

/// Relative tolerance on located jump times.
pub const TIME_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("state became non-finite at t = {time}")]
    IntegrationFailure { time: f64 },
    #[error("degenerate estimate: {0}")]
    Degenerate(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopCondition {
    pub max_time: f64,
    pub max_jumps: usize,
}

impl StopCondition {
    pub fn time(max_time: f64) -> Self {
        Self { max_time, max_jumps: usize::MAX }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotLabel {
    Time(f64),
    Jumps(usize),
}

/// Requested snapshots: normalized states at clock times and right after
/// given jump counts (`0` is the initial state).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Capture {
    pub times: Vec<f64>,
    pub jump_counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub jump_times: Vec<f64>,
    pub jump_channels: Vec<usize>,
    #[serde(skip)]
    pub snapshots: Vec<(SnapshotLabel, StateVector)>,
    pub terminated_at: f64,
}

impl TrajectoryRecord {
    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn snapshot(&self, label: SnapshotLabel) -> Option<&StateVector> {
        self.snapshots.iter().find(|(l, _)| *l == label).map(|(_, s)| s)
    }
}

/// Initial condition: a pure state, or a mixed state sampled from its
/// eigendecomposition with eigenvalue weights.
#[derive(Clone, Debug)]
pub struct InitialState {
    vectors: Vec<StateVector>,
    cumulative: Vec<f64>,
}

impl InitialState {
    pub fn pure(psi: &StateVector) -> Result<Self, TrajectoryError> {
        let norm = psi.norm();
        if !(norm.is_finite() && (norm - 1.0).abs() < 1e-9) {
            return Err(TrajectoryError::InvalidInput(format!("initial state has norm {norm}")));
        }
        Ok(Self { vectors: vec![psi.clone()], cumulative: vec![1.0] })
    }

    pub fn mixed(rho: &DensityMatrix) -> Result<Self, TrajectoryError> {
        let (values, vecs) = hermitian_eigen(rho.matrix());
        let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
        if total.is_nan() || total <= 0.0 {
            return Err(TrajectoryError::InvalidInput("initial state has zero trace".into()));
        }
        let mut vectors = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (k, &v) in values.iter().enumerate() {
            if v > 0.0 {
                acc += v / total;
                vectors.push(vecs.column(k).into_owned());
                cumulative.push(acc);
            }
        }
        *cumulative.last_mut().expect("non-empty") = 1.0;
        Ok(Self { vectors, cumulative })
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn is_pure(&self) -> bool {
        self.vectors.len() == 1
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> StateVector {
        if self.is_pure() {
            return self.vectors[0].clone();
        }
        let u: f64 = rng.random();
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.vectors.len() - 1);
        self.vectors[k].clone()
    }
}

/// Model data shared by every trajectory of an ensemble.
#[derive(Clone, Debug)]
pub struct TrajectorySampler {
    /// `−iH_eff`
    generator: Operator,
    no_jump: Propagator,
    jump_ops: Vec<Operator>,
    /// Characteristic time used to start the jump-time bracket.
    time_scale: f64,
}

impl TrajectorySampler {
    pub fn new(model: &LindbladModel) -> Self {
        let generator = model.effective_hamiltonian() * (-I);
        let no_jump = Propagator::new(&generator);
        let rate = model.gamma() * linalg::max_abs(&model.effective_potential()).max(1e-300);
        Self { generator, no_jump, jump_ops: model.jump_ops().to_vec(), time_scale: 0.1 / rate }
    }

    pub fn dim(&self) -> usize {
        self.jump_ops[0].nrows()
    }

    /// Runs one trajectory with the stream derived from `seed`.
    pub fn run(
        &self,
        initial: &InitialState,
        stop: StopCondition,
        seed: u64,
        capture: &Capture,
    ) -> Result<TrajectoryRecord, TrajectoryError> {
        if initial.dim() != self.dim() {
            return Err(TrajectoryError::InvalidInput(format!(
                "initial state has dimension {}, model has {}",
                initial.dim(),
                self.dim()
            )));
        }
        if !(stop.max_time.is_finite() && stop.max_time > 0.0) || stop.max_jumps == 0 {
            return Err(TrajectoryError::InvalidInput("stop bounds must be positive".into()));
        }
        let mut rng = trajectory_rng(seed);
        let mut psi = initial.draw(&mut rng);
        let mut times: Vec<f64> = capture.times.iter().copied().filter(|&t| t <= stop.max_time).collect();
        times.sort_by(f64::total_cmp);
        let mut next_capture = 0;
        let mut snapshots = Vec::new();
        if capture.jump_counts.contains(&0) {
            snapshots.push((SnapshotLabel::Jumps(0), psi.clone()));
        }
        let mut record = TrajectoryRecord {
            seed,
            jump_times: Vec::new(),
            jump_channels: Vec::new(),
            snapshots: Vec::new(),
            terminated_at: stop.max_time,
        };
        let mut t = 0.0;
        loop {
            let threshold = 1.0 - rng.random::<f64>();
            let prepared = self.no_jump.prepare(&psi);
            let remaining = stop.max_time - t;
            let wait = self.locate_jump(&|tau| prepared.at(tau), threshold, remaining);

            let segment_end = wait.map_or(stop.max_time, |w| t + w);
            while next_capture < times.len() && times[next_capture] < segment_end
                || (wait.is_none() && next_capture < times.len())
            {
                let tc = times[next_capture];
                let state = prepared.at(tc - t);
                let norm = state.norm();
                if !(norm.is_finite() && norm > 0.0) {
                    return Err(TrajectoryError::IntegrationFailure { time: tc });
                }
                snapshots.push((SnapshotLabel::Time(tc), state / real(norm)));
                next_capture += 1;
            }

            let Some(wait) = wait else { break };
            t += wait;
            let pre = prepared.at(wait);
            let candidates: Vec<StateVector> = self.jump_ops.iter().map(|l| l * &pre).collect();
            let weights: Vec<f64> = candidates.iter().map(|v| v.norm_squared()).collect();
            let total: f64 = weights.iter().sum();
            if !(total.is_finite() && total > 0.0) {
                return Err(TrajectoryError::IntegrationFailure { time: t });
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut channel = weights.len() - 1;
            for (j, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc && *w > 0.0 {
                    channel = j;
                    break;
                }
            }
            let post = &candidates[channel];
            psi = post / real(post.norm());
            record.jump_times.push(t);
            record.jump_channels.push(channel);
            let count = record.jump_times.len();
            if capture.jump_counts.contains(&count) {
                snapshots.push((SnapshotLabel::Jumps(count), psi.clone()));
            }
            if count >= stop.max_jumps {
                record.terminated_at = t;
                break;
            }
        }
        record.snapshots = snapshots;
        Ok(record)
    }

    /// Time until `‖ψ(τ)‖²` reaches `threshold`, or `None` if it stays above
    /// within `remaining`. The crossing is bracketed by doubling, then refined
    /// by Newton steps on the exact derivative `2 Re⟨ψ|Gψ⟩`, falling back to
    /// bisection whenever a step would leave the bracket.
    fn locate_jump(&self, state: &dyn Fn(f64) -> StateVector, threshold: f64, remaining: f64) -> Option<f64> {
        let excess = |tau: f64| state(tau).norm_squared() - threshold;
        if excess(0.0) <= 0.0 {
            return Some(0.0);
        }
        if excess(remaining) > 0.0 {
            return None;
        }
        let mut lo = 0.0;
        let mut hi = self.time_scale.min(remaining);
        while excess(hi) > 0.0 {
            lo = hi;
            hi = (2.0 * hi).min(remaining);
        }
        let mut tau = 0.5 * (lo + hi);
        for _ in 0..200 {
            let psi = state(tau);
            let f = psi.norm_squared() - threshold;
            let slope = 2.0 * psi.dotc(&(&self.generator * &psi)).re;
            if f > 0.0 {
                lo = tau;
            } else {
                hi = tau;
            }
            if hi - lo <= TIME_TOLERANCE * hi {
                return Some(hi);
            }
            let newton = tau - f / slope;
            let next = if slope < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - tau).abs() <= 0.1 * TIME_TOLERANCE * next {
                return Some(next);
            }
            tau = next;
        }
        Some(hi)
    }
}

/// Convenience wrapper for a single pure-state trajectory.
pub fn sample_trajectory(
    model: &LindbladModel,
    psi0: &StateVector,
    stop: StopCondition,
    seed: u64,
    capture: &Capture,
) -> Result<TrajectoryRecord, TrajectoryError> {
    TrajectorySampler::new(model).run(&InitialState::pure(psi0)?, stop, seed, capture)
}

/// Runs `n_samples` trajectories in parallel; trajectory `k` uses
/// `trajectory_seed(seed, k)`. Output order follows `k`.
pub fn sample_ensemble(
    model: &LindbladModel,
    initial: &InitialState,
    stop: StopCondition,
    capture: &Capture,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>, TrajectoryError> {
    let sampler = TrajectorySampler::new(model);
    (0..n_samples as u64)
        .into_par_iter()
        .map(|k| sampler.run(initial, stop, trajectory_seed(seed, k), capture))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageKind {
    Walltime(f64),
    Jumptime(usize),
}

impl AverageKind {
    fn label(self) -> SnapshotLabel {
        match self {
            AverageKind::Walltime(t) => SnapshotLabel::Time(t),
            AverageKind::Jumptime(n) => SnapshotLabel::Jumps(n),
        }
    }
}

/// Per-trajectory normalized states for one average; `None` marks a
/// trajectory that did not reach the requested jump count.
#[derive(Clone, Debug)]
pub struct Contributions {
    pub kind: AverageKind,
    pub states: Vec<Option<StateVector>>,
}

impl Contributions {
    pub fn from_records(records: &[TrajectoryRecord], kind: AverageKind) -> Self {
        let label = kind.label();
        Self { kind, states: records.iter().map(|r| r.snapshot(label).cloned()).collect() }
    }

    pub fn n_contributing(&self) -> usize {
        self.states.iter().filter(|s| s.is_some()).count()
    }

    /// `Σ_k |ψ_k⟩⟨ψ_k| / n_samples` over the selected samples (with repetition).
    fn mean_over(&self, indices: impl Iterator<Item = usize>, dim: usize) -> Operator {
        let mut sum = Operator::zeros(dim, dim);
        let mut n = 0usize;
        for k in indices {
            n += 1;
            if let Some(psi) = &self.states[k] {
                sum += outer(psi);
            }
        }
        sum / real(n as f64)
    }

    pub fn average(&self) -> Result<EnsembleAverage, TrajectoryError> {
        let n_samples = self.states.len();
        let n_contributing = self.n_contributing();
        if n_contributing == 0 {
            return Err(TrajectoryError::Degenerate(format!("no trajectory contributes to {:?}", self.kind)));
        }
        let dim = self.states.iter().flatten().next().expect("contributing").len();
        let mean = self.mean_over(0..n_samples, dim);
        Ok(EnsembleAverage {
            kind: self.kind,
            mean_state: DensityMatrix::from_matrix_unchecked(linalg::hermitian_part(&mean)),
            n_samples,
            n_contributing,
            stderr_scale: 1.0 / (n_samples as f64).sqrt(),
        })
    }

    /// Root-mean-square trace distance between bootstrap resamples and the
    /// full-sample mean.
    pub fn bootstrap_sigma(&self, resamples: usize, seed: u64) -> Result<f64, TrajectoryError> {
        let full = self.average()?;
        let n = self.states.len();
        let dim = full.mean_state.dim();
        let sq: f64 = (0..resamples as u64)
            .into_par_iter()
            .map(|b| {
                let mut rng = trajectory_rng(trajectory_seed(seed, b));
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let m = self.mean_over(idx.into_iter(), dim);
                linalg::trace_distance(&m, full.mean_state.matrix()).powi(2)
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        Ok((sq / resamples as f64).sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleAverage {
    pub kind: AverageKind,
    /// For jumptime averages this is sub-normalized, `Tr = n_contributing / n_samples`.
    pub mean_state: DensityMatrix,
    pub n_samples: usize,
    pub n_contributing: usize,
    pub stderr_scale: f64,
}

/// `60/γ`, stretched to `60/r` when the slowest non-dark decay rate `r` of the
/// no-jump norm is below `γ`.
pub fn default_horizon(model: &LindbladModel) -> f64 {
    let gamma = model.gamma();
    let rate = slowest_decay_rate(model);
    60.0 / if rate.is_finite() && rate < gamma { rate } else { gamma }
}

/// Runs one ensemble and forms every requested average from it. Walltime
/// kinds need trajectories followed to the largest requested time; jumptime
/// kinds stop each trajectory at the largest requested jump count or at
/// `horizon`.
pub fn ensemble_averages(
    model: &LindbladModel,
    initial: &InitialState,
    kinds: &[AverageKind],
    n_samples: usize,
    seed: u64,
    horizon: Option<f64>,
) -> Result<(Vec<TrajectoryRecord>, Vec<EnsembleAverage>), TrajectoryError> {
    if n_samples == 0 {
        return Err(TrajectoryError::InvalidInput("n_samples must be positive".into()));
    }
    let mut capture = Capture::default();
    let mut max_time: f64 = 0.0;
    let mut max_jumps = 0usize;
    let mut any_walltime = false;
    for &kind in kinds {
        match kind {
            AverageKind::Walltime(t) => {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(TrajectoryError::InvalidInput(format!("invalid time {t}")));
                }
                any_walltime = true;
                max_time = max_time.max(t);
                capture.times.push(t);
            }
            AverageKind::Jumptime(n) => {
                max_jumps = max_jumps.max(n);
                max_time = max_time.max(horizon.unwrap_or_else(|| default_horizon(model)));
                capture.jump_counts.push(n);
            }
        }
    }
    if max_time == 0.0 {
        max_time = f64::MIN_POSITIVE;
    }
    let stop = StopCondition {
        max_time,
        max_jumps: if any_walltime || max_jumps == 0 { usize::MAX } else { max_jumps },
    };
    let records = sample_ensemble(model, initial, stop, &capture, n_samples, seed)?;
    let averages = kinds
        .iter()
        .map(|&k| Contributions::from_records(&records, k).average())
        .collect::<Result<_, _>>()?;
    Ok((records, averages))
}

pub fn ensemble_average(
    model: &LindbladModel,
    initial: &InitialState,
    kind: AverageKind,
    n_samples: usize,
    seed: u64,
    horizon: Option<f64>,
) -> Result<EnsembleAverage, TrajectoryError> {
    ensemble_averages(model, initial, &[kind], n_samples, seed, horizon).map(|(_, mut a)| a.remove(0))
}

/// `t_{n+1} − t_n` (with `t_0 = 0`) over trajectories that have `n + 1` jumps.
pub fn empirical_waiting_times(records: &[TrajectoryRecord], n: usize) -> Result<Vec<f64>, TrajectoryError> {
    let waits: Vec<f64> = records
        .iter()
        .filter(|r| r.n_jumps() > n)
        .map(|r| r.jump_times[n] - if n == 0 { 0.0 } else { r.jump_times[n - 1] })
        .collect();
    if waits.is_empty() {
        return Err(TrajectoryError::Degenerate(format!("no trajectory reaches jump {}", n + 1)));
    }
    Ok(waits)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Samples outside the edges.
    pub overflow: u64,
    pub total: u64,
}

impl Histogram {
    /// `bins` equal bins on `[lo, hi)`.
    pub fn new(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let edges: Vec<f64> = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
        let mut counts = vec![0u64; bins];
        let mut overflow = 0;
        for &x in samples {
            if x >= lo && x < hi {
                let k = (((x - lo) / (hi - lo)) * bins as f64) as usize;
                counts[k.min(bins - 1)] += 1;
            } else {
                overflow += 1;
            }
        }
        Self { edges, counts, overflow, total: samples.len() as u64 }
    }

    /// Counts normalized to a probability density.
    pub fn densities(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, e)| c as f64 / (self.total as f64 * (e[1] - e[0])))
            .collect()
    }
}

/// Writes one JSON object per trajectory:
/// `{"seed":…,"jump_times":[…],"jump_channels":[…],"terminated_at":…}`.
pub fn write_trajectory_log(records: &[TrajectoryRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
