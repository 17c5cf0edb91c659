//! Deterministic mean-field dynamics for the per-node infection
//! probabilities `pᵢ(t)`:
//!
//! ```text
//! dpᵢ/dt = gᵢ(P) = β Σₕ Iᵢₕ f_{k(h)}(Σⱼ pⱼ Iⱼₕ) (1 − pᵢ) − δ pᵢ
//! ```

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ContactModel;

/// Default Euler step.
pub const DEFAULT_DT: f64 = 0.05;
/// Default equilibrium tolerance on `‖g(P)‖∞`.
pub const DEFAULT_EQUILIBRIUM_TOL: f64 = 1e-9;
/// Default time cap for equilibrium detection.
pub const DEFAULT_TIME_CAP: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub p: Vec<f64>,
    pub t: f64,
}

impl MeanFieldState {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(i) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!(
                "p[{i}] = {} is outside [0, 1]",
                p[i]
            )));
        }
        Ok(Self { p, t: 0.0 })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn mean(&self) -> f64 {
        mean(&self.p)
    }

    pub fn sup_norm(&self) -> f64 {
        self.p.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn mean(p: &[f64]) -> f64 {
    if p.is_empty() {
        0.0
    } else {
        p.iter().sum::<f64>() / p.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct MeanFieldProblem {
    pub model: ContactModel,
    pub beta: f64,
    pub delta: f64,
}

/// One recorded row of an integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanFieldSample {
    pub t: f64,
    pub mean_p: f64,
    /// Clamp events so far.
    pub clamp_count: u64,
}

#[derive(Debug, Clone)]
pub struct MeanFieldTrajectory {
    pub samples: Vec<MeanFieldSample>,
    pub final_state: MeanFieldState,
    pub clamp_events: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrationOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Clamp each component to `[0, 1]` after every step.
    pub clamp: bool,
    /// Record every `record_every`-th step (the initial state is always
    /// recorded, and so is the final one).
    pub record_every: usize,
}

impl IntegrationOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            clamp: true,
            record_every: 1,
        }
    }
}

/// Number of fixed steps of size `dt` needed to reach `t_end`.
pub(crate) fn step_count(dt: f64, t_end: f64) -> usize {
    let steps = t_end / dt;
    let rounded = steps.round();
    if (steps - rounded).abs() < 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        steps.ceil() as usize
    }
}

/// Outcome of [`MeanFieldProblem::find_equilibrium`].
#[derive(Debug, Clone)]
pub enum Equilibrium {
    Converged {
        state: MeanFieldState,
        is_zero: bool,
    },
    /// The time cap was reached first; carries the last state.
    TimedOut { state: MeanFieldState },
}

impl MeanFieldProblem {
    pub fn new(model: ContactModel, beta: f64, delta: f64) -> Result<Self> {
        if !(beta >= 0.0 && delta >= 0.0) || !beta.is_finite() || !delta.is_finite() {
            return Err(Error::Domain(format!(
                "beta and delta must be finite and non-negative (beta = {beta}, delta = {delta})"
            )));
        }
        Ok(Self { model, beta, delta })
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    fn edge_sums(&self, p: &[f64]) -> Vec<f64> {
        self.model
            .hyperedges()
            .iter()
            .map(|e| e.iter().map(|&j| p[j]).sum())
            .collect()
    }

    /// Evaluates `g(P)`.
    pub fn rhs(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.rhs_into(p, &mut out);
        out
    }

    fn rhs_into(&self, p: &[f64], out: &mut [f64]) {
        let model = &self.model;
        let pressure: Vec<f64> = self
            .edge_sums(p)
            .into_iter()
            .enumerate()
            .map(|(h, s)| model.kernel_of(h).eval_unchecked(s.max(0.0)))
            .collect();
        for (i, gi) in out.iter_mut().enumerate() {
            let infection: f64 = model.memberships(i).iter().map(|&h| pressure[h]).sum();
            *gi = self.beta * infection * (1.0 - p[i]) - self.delta * p[i];
        }
    }

    /// Analytic Jacobian `∂gᵢ/∂pⱼ`:
    ///
    /// ```text
    /// β (1 − pᵢ) Σ_{h∋i,j} f′(sₕ)  −  [i = j] (β Σ_{h∋i} f(sₕ) + δ)
    /// ```
    ///
    /// with `sₕ = Σ_{l∈h} p_l`. At `P = 0` this is `β Σₖ f′ₖ(0) W⁽ᵏ⁾ − δ I`.
    pub fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n();
        let model = &self.model;
        let sums = self.edge_sums(p);
        let mut jac = DMatrix::zeros(n, n);
        let mut value = vec![0.0; sums.len()];
        for (h, edge) in model.hyperedges().iter().enumerate() {
            let kernel = model.kernel_of(h);
            let s = sums[h].max(0.0);
            let slope = kernel.derivative(s)?;
            value[h] = kernel.eval_unchecked(s);
            for &i in edge {
                let factor = self.beta * (1.0 - p[i]) * slope;
                for &j in edge {
                    jac[(i, j)] += factor;
                }
            }
        }
        for i in 0..n {
            let infection: f64 = model.memberships(i).iter().map(|&h| value[h]).sum();
            jac[(i, i)] -= self.beta * infection + self.delta;
        }
        Ok(jac)
    }

    /// Explicit Euler integration `P ← P + dt g(P)` up to `t_end`.
    pub fn integrate(
        &self,
        initial: &MeanFieldState,
        opts: IntegrationOptions,
    ) -> Result<MeanFieldTrajectory> {
        self.integrate_with(initial, opts, |_| {})
    }

    /// [`Self::integrate`], also handing every recorded sample to `recorder`.
    pub fn integrate_with(
        &self,
        initial: &MeanFieldState,
        opts: IntegrationOptions,
        mut recorder: impl FnMut(&MeanFieldSample),
    ) -> Result<MeanFieldTrajectory> {
        if !(opts.dt > 0.0) {
            return Err(Error::Domain(format!(
                "dt must be positive, got {}",
                opts.dt
            )));
        }
        if initial.p.len() != self.n() {
            return Err(Error::Domain(format!(
                "state has {} entries for {} nodes",
                initial.p.len(),
                self.n()
            )));
        }
        MeanFieldState::new(initial.p.clone())?;
        let steps = step_count(opts.dt, opts.t_end);
        let every = opts.record_every.max(1);
        let mut p = initial.p.clone();
        let mut g = vec![0.0; p.len()];
        let mut clamps = 0u64;
        let t0 = initial.t;
        let mut samples = Vec::with_capacity(steps / every + 2);
        let first = MeanFieldSample {
            t: t0,
            mean_p: mean(&p),
            clamp_count: 0,
        };
        recorder(&first);
        samples.push(first);
        for step in 1..=steps {
            self.rhs_into(&p, &mut g);
            for (pi, gi) in p.iter_mut().zip(&g) {
                *pi += opts.dt * gi;
                if !pi.is_finite() {
                    return Err(Error::NonFinite { step });
                }
                if opts.clamp && !(0.0..=1.0).contains(pi) {
                    *pi = pi.clamp(0.0, 1.0);
                    clamps += 1;
                }
            }
            if step % every == 0 || step == steps {
                let sample = MeanFieldSample {
                    t: t0 + step as f64 * opts.dt,
                    mean_p: mean(&p),
                    clamp_count: clamps,
                };
                recorder(&sample);
                samples.push(sample);
            }
        }
        Ok(MeanFieldTrajectory {
            samples,
            final_state: MeanFieldState {
                p,
                t: t0 + steps as f64 * opts.dt,
            },
            clamp_events: clamps,
        })
    }

    /// Integrates with clamped Euler steps until `‖g(P)‖∞ < tol` or the time
    /// exceeds `t_cap`.
    pub fn find_equilibrium(
        &self,
        initial: &MeanFieldState,
        dt: f64,
        tol: f64,
        t_cap: f64,
    ) -> Result<Equilibrium> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        let mut p = initial.p.clone();
        let mut g = vec![0.0; p.len()];
        let max_steps = step_count(dt, t_cap);
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for step in 0..=max_steps {
            self.rhs_into(&p, &mut g);
            if sup(&g) < tol {
                let is_zero = sup(&p) < tol;
                return Ok(Equilibrium::Converged {
                    state: MeanFieldState {
                        p,
                        t: initial.t + step as f64 * dt,
                    },
                    is_zero,
                });
            }
            if step == max_steps {
                break;
            }
            for (pi, gi) in p.iter_mut().zip(&g) {
                *pi = (*pi + dt * gi).clamp(0.0, 1.0);
                if !pi.is_finite() {
                    return Err(Error::NonFinite { step });
                }
            }
        }
        Ok(Equilibrium::TimedOut {
            state: MeanFieldState {
                p,
                t: initial.t + max_steps as f64 * dt,
            },
        })
    }
}
