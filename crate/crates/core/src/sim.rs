//! Fixed-step stochastic simulation of the individual-level SIS process.
//!
//! Each step of length `dt` freezes every rate at the current state and
//! consumes exactly one uniform draw `r` per node, in node-index order:
//!
//! * a susceptible node becomes infected iff `r < 1 − exp(−rate·dt)`;
//! * an infected node recovers iff `r ≥ exp(−δ·dt)`.
//!
//! Both events have the prescribed probabilities. Infection uses the lower
//! tail of the draw and recovery the upper tail, which makes the scheme
//! monotone: two runs sharing a seed stay ordered node by node whenever their
//! rates are ordered (and `rate·dt` stays moderate), so same-seed comparison
//! tests are meaningful.
//!
//! The integer-severity process `Y` (a linear process that dominates the SIS
//! process for concave kernels) uses the same draw layout.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::step_count;
use crate::model::ContactModel;

/// SplitMix64 finalizer, used to derive independent per-run seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The random stream used by every simulator in this module.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Binary infection state `Xᵢ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStateVector {
    pub x: Vec<u8>,
    pub t: f64,
}

impl NodeStateVector {
    pub fn new(x: Vec<u8>) -> Result<Self> {
        if let Some(i) = x.iter().position(|&v| v > 1) {
            return Err(Error::Domain(format!(
                "state entry {i} is {}, not 0 or 1",
                x[i]
            )));
        }
        Ok(Self { x, t: 0.0 })
    }

    pub fn infected(&self) -> usize {
        self.x.iter().map(|&v| v as usize).sum()
    }
}

/// Each node independently infected with probability `i0`.
pub fn init_bernoulli(n: usize, i0: f64, seed: u64) -> Result<NodeStateVector> {
    if !(0.0..=1.0).contains(&i0) {
        return Err(Error::Domain(format!("i0 must lie in [0, 1], got {i0}")));
    }
    let mut rng = rng_from_seed(seed);
    let x = (0..n).map(|_| u8::from(rng.random::<f64>() < i0)).collect();
    Ok(NodeStateVector { x, t: 0.0 })
}

/// Infection rate `β Σₕ Iᵢₕ f(Σⱼ Xⱼ Iⱼₕ)` of node `i` (whatever its own state).
pub fn node_rate(model: &ContactModel, beta: f64, x: &[u8], i: usize) -> f64 {
    let pressure: f64 = model
        .memberships(i)
        .iter()
        .map(|&h| {
            let count: u32 = model.hyperedges()[h].iter().map(|&j| x[j] as u32).sum();
            model.kernel_of(h).eval_unchecked(count as f64)
        })
        .sum();
    beta * pressure
}

/// Rates and step size of a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub beta: f64,
    pub delta: f64,
    pub dt: f64,
    pub t_end: f64,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.beta) || !ok(self.delta) || !ok(self.t_end) {
            return Err(Error::Domain(
                "beta, delta and t_end must be finite and non-negative".into(),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Reusable stepping state for one model and parameter set.
pub struct Stepper<'a> {
    model: &'a ContactModel,
    beta: f64,
    dt: f64,
    stay_infected: f64,
    counts: Vec<u32>,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a ContactModel, beta: f64, delta: f64, dt: f64) -> Self {
        Self {
            model,
            beta,
            dt,
            stay_infected: (-delta * dt).exp(),
            counts: Vec::new(),
        }
    }

    /// Advances `x` by one synchronous step.
    pub fn step<R: Rng>(&mut self, x: &mut [u8], rng: &mut R) {
        self.model.edge_counts(x, &mut self.counts);
        for (i, xi) in x.iter_mut().enumerate() {
            let r: f64 = rng.random();
            if *xi == 0 {
                let rate = self.beta * self.model.pressure_from_counts(i, &self.counts);
                if rate > 0.0 && r < -(-rate * self.dt).exp_m1() {
                    *xi = 1;
                }
            } else if r >= self.stay_infected {
                *xi = 0;
            }
        }
    }
}

/// One synchronous step from `x`; see the module docs for the draw layout.
pub fn step<R: Rng>(
    model: &ContactModel,
    beta: f64,
    delta: f64,
    x: &NodeStateVector,
    dt: f64,
    rng: &mut R,
) -> NodeStateVector {
    let mut next = x.x.clone();
    Stepper::new(model, beta, delta, dt).step(&mut next, rng);
    NodeStateVector {
        x: next,
        t: x.t + dt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub infected: usize,
}

/// Infected counts at every step until `t_end` or extinction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// First sample time with no infected node.
    pub extinct_at: Option<f64>,
}

impl Trajectory {
    /// Infected count at step `k`, holding the last value past the end.
    pub fn count_at_step(&self, k: usize) -> usize {
        self.samples
            .get(k)
            .or(self.samples.last())
            .map_or(0, |s| s.infected)
    }
}

/// Simulates from `initial` with the stream seeded by `seed`. Stops at
/// `t_end` or at the first all-susceptible state.
pub fn run(
    model: &ContactModel,
    params: SimParams,
    initial: &NodeStateVector,
    seed: u64,
) -> Result<Trajectory> {
    params.validate()?;
    if initial.x.len() != model.n() {
        return Err(Error::Domain(format!(
            "initial state has {} entries for {} nodes",
            initial.x.len(),
            model.n()
        )));
    }
    let steps = step_count(params.dt, params.t_end);
    let mut rng = rng_from_seed(seed);
    let mut stepper = Stepper::new(model, params.beta, params.delta, params.dt);
    let mut x = initial.x.clone();
    let mut infected = initial.infected();
    let mut samples = vec![TrajectorySample {
        t: initial.t,
        infected,
    }];
    let mut extinct_at = (infected == 0).then_some(initial.t);
    for k in 1..=steps {
        if infected == 0 {
            break;
        }
        stepper.step(&mut x, &mut rng);
        infected = x.iter().map(|&v| v as usize).sum();
        let t = initial.t + k as f64 * params.dt;
        samples.push(TrajectorySample { t, infected });
        if infected == 0 {
            extinct_at = Some(t);
        }
    }
    Ok(Trajectory {
        samples,
        extinct_at,
    })
}

/// How runs of an ensemble obtain their initial state.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// The given state for every run.
    Fixed(NodeStateVector),
    /// One Bernoulli(`i0`) draw from the base seed, shared by all runs.
    SharedBernoulli { i0: f64 },
    /// A fresh Bernoulli(`i0`) draw per run.
    ResampledBernoulli { i0: f64 },
}

/// Mean infected fraction over runs plus the per-run extinction times.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub n: usize,
    pub times: Vec<f64>,
    pub mean_fraction: Vec<f64>,
    /// `None` when the run was still alive at the horizon (censored).
    pub extinction_times: Vec<Option<f64>>,
    pub seeds: Vec<u64>,
    pub initial_infected: Vec<usize>,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

/// Runs `runs` simulations, concurrently on the current rayon pool.
///
/// Run `r` uses seed `derive_seed(base_seed, r + 1)`; a shared initial state
/// is drawn from `derive_seed(base_seed, 0)`. The reduction is sequential in
/// run order, so the summary does not depend on scheduling.
pub fn ensemble(
    model: &ContactModel,
    params: SimParams,
    initial: &InitialCondition,
    runs: usize,
    base_seed: u64,
) -> Result<EnsembleSummary> {
    if runs == 0 {
        return Err(Error::Domain("an ensemble needs at least one run".into()));
    }
    params.validate()?;
    let n = model.n();
    let shared = match initial {
        InitialCondition::Fixed(state) => Some(state.clone()),
        InitialCondition::SharedBernoulli { i0 } => {
            Some(init_bernoulli(n, *i0, derive_seed(base_seed, 0))?)
        }
        InitialCondition::ResampledBernoulli { i0 } => {
            init_bernoulli(0, *i0, 0)?;
            None
        }
    };
    let seeds: Vec<u64> = (0..runs as u64)
        .map(|r| derive_seed(base_seed, r + 1))
        .collect();
    let trajectories: Vec<(usize, Trajectory)> = seeds
        .par_iter()
        .map(|&seed| {
            let start = match (&shared, initial) {
                (Some(state), _) => state.clone(),
                (None, InitialCondition::ResampledBernoulli { i0 }) => {
                    init_bernoulli(n, *i0, derive_seed(seed, 0))?
                }
                (None, _) => unreachable!("only resampling leaves no shared state"),
            };
            Ok((start.infected(), run(model, params, &start, seed)?))
        })
        .collect::<Result<_>>()?;

    let steps = step_count(params.dt, params.t_end);
    let t0 = shared.as_ref().map_or(0.0, |s| s.t);
    let times: Vec<f64> = (0..=steps).map(|k| t0 + k as f64 * params.dt).collect();
    let denom = (n.max(1) * runs) as f64;
    let mean_fraction = (0..=steps)
        .map(|k| {
            trajectories
                .iter()
                .map(|(_, tr)| tr.count_at_step(k) as f64)
                .sum::<f64>()
                / denom
        })
        .collect();
    Ok(EnsembleSummary {
        runs,
        n,
        times,
        mean_fraction,
        extinction_times: trajectories.iter().map(|(_, tr)| tr.extinct_at).collect(),
        seeds,
        initial_infected: trajectories.iter().map(|(c, _)| *c).collect(),
        trajectories: trajectories.into_iter().map(|(_, tr)| tr).collect(),
    })
}

/// Non-negative integer severities `Yᵢ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityStateVector {
    pub y: Vec<u32>,
    pub t: f64,
}

impl SeverityStateVector {
    pub fn total(&self) -> u64 {
        self.y.iter().map(|&v| v as u64).sum()
    }
}

impl From<&NodeStateVector> for SeverityStateVector {
    fn from(x: &NodeStateVector) -> Self {
        Self {
            y: x.x.iter().map(|&v| v as u32).collect(),
            t: x.t,
        }
    }
}

/// Downward transition rule of the severity process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityRecovery {
    /// `k → k − 1` at rate `δ` whenever `k ≥ 1`.
    PerNode,
    /// `k → k − 1` at rate `δ k` (each unit recovers independently). The
    /// mean then solves `dQ/dt = (β c W − δ I) Q` exactly.
    PerUnit,
}

/// One step of the severity process: per node, up by one with probability
/// `1 − exp(−β c (W y)ᵢ dt)` (lower tail of the draw), down by one with the
/// recovery probability (upper tail), at most one unit change. Should the two
/// probabilities sum past one, recovery takes precedence.
#[allow(clippy::too_many_arguments)]
pub fn step_severity<R: Rng>(
    w: &DMatrix<f64>,
    slope: f64,
    beta: f64,
    delta: f64,
    recovery: SeverityRecovery,
    y: &SeverityStateVector,
    dt: f64,
    rng: &mut R,
) -> SeverityStateVector {
    let n = y.y.len();
    let yf: Vec<f64> = y.y.iter().map(|&v| v as f64).collect();
    let mut next = y.y.clone();
    for (i, yi) in next.iter_mut().enumerate() {
        let r: f64 = rng.random();
        let pressure: f64 = (0..n).map(|j| w[(i, j)] * yf[j]).sum();
        let p_up = -(-beta * slope * pressure * dt).exp_m1();
        if *yi == 0 {
            if r < p_up {
                *yi = 1;
            }
            continue;
        }
        let units = match recovery {
            SeverityRecovery::PerNode => 1.0,
            SeverityRecovery::PerUnit => *yi as f64,
        };
        let stay = (-delta * units * dt).exp();
        if r >= stay {
            *yi -= 1;
        } else if r < p_up.min(stay) {
            *yi += 1;
        }
    }
    SeverityStateVector {
        y: next,
        t: y.t + dt,
    }
}

/// Severity totals `Σᵢ Yᵢ` at every step up to `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn run_severity(
    w: &DMatrix<f64>,
    slope: f64,
    beta: f64,
    delta: f64,
    recovery: SeverityRecovery,
    initial: &SeverityStateVector,
    dt: f64,
    t_end: f64,
    seed: u64,
) -> Vec<u64> {
    let steps = step_count(dt, t_end);
    let mut rng = rng_from_seed(seed);
    let mut y = initial.clone();
    let mut totals = Vec::with_capacity(steps + 1);
    totals.push(y.total());
    for _ in 0..steps {
        y = step_severity(w, slope, beta, delta, recovery, &y, dt, &mut rng);
        totals.push(y.total());
    }
    totals
}
