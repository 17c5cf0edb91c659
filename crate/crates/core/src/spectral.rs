//! Eigenvalue computations and the closed-form extinction and persistence
//! bounds.
//!
//! Every extinction bound has the shape `β c_f λ / δ < 1`: the structure
//! enters only through a largest eigenvalue `λ` of a (weighted)
//! co-membership matrix and the kernel only through a slope `c_f`. The
//! bound functions take `c_f` and `λ` explicitly so that one report can show
//! several variants side by side.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::kernel::InfectionKernel;
use crate::model::ContactModel;

/// Default relative tolerance of [`lambda_max`].
pub const LAMBDA_TOL: f64 = 1e-10;
/// Largest dimension handled by the dense eigensolver paths.
pub const DENSE_EIGEN_CAP: usize = 64;
/// Relative threshold below which a Laplacian eigenvalue counts as zero.
pub const ZERO_EIGENVALUE_REL: f64 = 1e-9;

/// How a largest eigenvalue was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    PowerIteration,
    ShiftedPowerIteration,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenEstimate {
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub method: EigenMethod,
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSymmetric {
            row: 0,
            col: a.ncols().min(n),
        });
    }
    let scale = a.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Largest eigenvalue of a symmetric non-negative matrix, to relative
/// tolerance `tol`.
pub fn lambda_max(a: &DMatrix<f64>, tol: f64) -> Result<f64> {
    lambda_max_detailed(a, tol).map(|e| e.value)
}

/// [`lambda_max`] with diagnostics.
///
/// Power iteration from the deterministic start vector `1 + 0.01 i/n`, with
/// at most `100 n` iterations, stopping once the eigen-residual
/// `‖A v − ρ v‖` drops below `tol · |ρ|` (which places an eigenvalue within
/// `tol` relative of the Rayleigh quotient `ρ`). If that stalls (a spectrum
/// symmetric about zero makes plain power iteration oscillate) the iteration
/// is retried on `A + σ I`; matrices up to [`DENSE_EIGEN_CAP`] finally fall
/// back to a dense symmetric eigensolve.
pub fn lambda_max_detailed(a: &DMatrix<f64>, tol: f64) -> Result<EigenEstimate> {
    check_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenEstimate {
            value: 0.0,
            iterations: 0,
            residual: 0.0,
            method: EigenMethod::PowerIteration,
        });
    }
    let max_iter = 100 * n.max(1);
    let first = power_iteration(a, 0.0, tol, max_iter);
    if let Ok(mut est) = first {
        est.method = EigenMethod::PowerIteration;
        return Ok(est);
    }
    let shift = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        / 2.0;
    let second = power_iteration(a, shift, tol, max_iter);
    match second {
        Ok(mut est) => {
            est.method = EigenMethod::ShiftedPowerIteration;
            Ok(est)
        }
        Err(_) if n <= DENSE_EIGEN_CAP => {
            let value = symmetric_eigenvalues(a)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(EigenEstimate {
                value,
                iterations: 2 * max_iter,
                residual: 0.0,
                method: EigenMethod::Dense,
            })
        }
        Err(err) => Err(err),
    }
}

fn power_iteration(
    a: &DMatrix<f64>,
    shift: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EigenEstimate> {
    let n = a.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64 / n as f64);
    v /= v.norm();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut w = a * &v;
        if shift != 0.0 {
            w.axpy(shift, &v, 1.0);
        }
        let rho = v.dot(&w);
        residual = (&w - rho * &v).norm();
        if residual <= tol * rho.abs() || residual == 0.0 {
            return Ok(EigenEstimate {
                value: rho - shift,
                iterations: it,
                residual,
                method: EigenMethod::PowerIteration,
            });
        }
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Smallest nonzero eigenvalue `λ_c(Δ)` of a Laplacian, by dense eigensolve.
///
/// Eigenvalues below `1e-9` times the largest magnitude count as zero.
/// Refuses matrices larger than [`DENSE_EIGEN_CAP`].
pub fn lambda_c(laplacian: &crate::hypergraph::Laplacian) -> Result<f64> {
    let n = laplacian.n();
    if n > DENSE_EIGEN_CAP {
        return Err(Error::CapExceeded {
            what: "lambda_c dense eigensolve",
            n,
            cap: DENSE_EIGEN_CAP,
        });
    }
    let values = symmetric_eigenvalues(laplacian.matrix());
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = ZERO_EIGENVALUE_REL * scale;
    values
        .into_iter()
        .find(|&v| scale > 0.0 && v > threshold)
        .ok_or(Error::NoNonzeroEigenvalue)
}

/// Summary of a structure, carried in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HypergraphDigest {
    pub n: usize,
    pub m: usize,
    pub e_max: usize,
    pub categories: usize,
}

impl HypergraphDigest {
    pub fn of(model: &ContactModel) -> Self {
        let h = model.hypergraph();
        Self {
            n: h.n(),
            m: h.m(),
            e_max: h.e_max(),
            categories: model.structure().category_count(),
        }
    }
}

/// Largest eigenvalue of `Σₖ f′ₖ(0) W⁽ᵏ⁾` and the critical infection
/// strength `β_c = δ/λ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub lambda_w: f64,
    /// `None` when `λ = 0`: the zero state is stable for every `β`.
    pub beta_c: Option<f64>,
    pub delta: f64,
    pub beta: Option<f64>,
    /// `β λ − δ` once a `β` is attached.
    pub decay_rate: Option<f64>,
    pub kernels: Vec<String>,
    pub structure: HypergraphDigest,
}

impl SpectralReport {
    /// Attaches an infection strength and the resulting linearized rate.
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self.decay_rate = Some(beta * self.lambda_w - self.delta);
        self
    }

    /// Whether `β λ / δ < 1` for the attached `β`.
    pub fn below_threshold(&self) -> Option<bool> {
        self.decay_rate.map(|r| r < 0.0)
    }
}

/// Computes `λ(Σₖ f′ₖ(0) W⁽ᵏ⁾)` and `β_c = δ/λ`.
pub fn critical_beta(model: &ContactModel, delta: f64) -> Result<SpectralReport> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Domain(format!(
            "recovery rate must be positive, got {delta}"
        )));
    }
    let lambda_w = lambda_max(&model.linearized_matrix(), LAMBDA_TOL)?;
    Ok(SpectralReport {
        lambda_w,
        beta_c: (lambda_w > 0.0).then(|| delta / lambda_w),
        delta,
        beta: None,
        decay_rate: None,
        kernels: model
            .kernels()
            .kernels()
            .iter()
            .map(InfectionKernel::describe)
            .collect(),
        structure: HypergraphDigest::of(model),
    })
}

/// `n i₀ exp((β c_f λ − δ) t)`: upper bound on the probability that the
/// infection survives to time `t`.
pub fn decay_bound(
    n: usize,
    i0: f64,
    beta: f64,
    delta: f64,
    c_f: f64,
    lambda_w: f64,
    t: f64,
) -> f64 {
    n as f64 * i0 * ((beta * c_f * lambda_w - delta) * t).exp()
}

/// `(ln n + 1)/(δ − β c_f λ)`: upper bound on the expected extinction time.
/// `None` unless `β c_f λ < δ`.
pub fn extinction_time_bound(
    n: usize,
    beta: f64,
    delta: f64,
    c_f: f64,
    lambda_w: f64,
) -> Option<f64> {
    let gap = delta - beta * c_f * lambda_w;
    (gap > 0.0).then(|| ((n as f64).ln() + 1.0) / gap)
}

/// Which linear upper bound `f(x) ≤ c_f x` a [`DecayCondition`] rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DominationKind {
    /// Concave kernels, `c_f = f′(0)`.
    Tangent,
    /// Any kernel below a line through the origin on `[0, e_max − 1]`.
    Chord,
}

/// Exponential-decay condition `β c_f λ < δ` for a whole model.
///
/// When every category shares one slope, `c_f` is that slope and `lambda`
/// is `λ(W)`; otherwise `c_f = 1` and `lambda = λ(Σₖ c_{fₖ} W⁽ᵏ⁾)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCondition {
    pub kind: DominationKind,
    pub c_f: f64,
    pub lambda: f64,
    /// `β c_f λ − δ`.
    pub rate: f64,
    pub holds: bool,
    pub extinction_time_bound: Option<f64>,
}

impl DecayCondition {
    /// [`decay_bound`] evaluated with this condition's slope and eigenvalue.
    pub fn survival_bound_at(&self, n: usize, i0: f64, beta: f64, delta: f64, t: f64) -> f64 {
        decay_bound(n, i0, beta, delta, self.c_f, self.lambda, t)
    }
}

/// Builds the decay condition of `model` from the kernels' dominating slopes.
pub fn decay_condition(model: &ContactModel, beta: f64, delta: f64) -> Result<DecayCondition> {
    let e_max = model.e_max().max(2);
    let slopes: Vec<f64> = (0..model.hyperedges().len())
        .map(|h| model.kernel_of(h).dominating_slope(e_max))
        .collect();
    let shared = slopes
        .first()
        .copied()
        .filter(|s| slopes.iter().all(|x| x == s));
    let (c_f, lambda) = match shared {
        Some(s) => (
            s,
            lambda_max(&model.co_membership().to_dense(), LAMBDA_TOL)?,
        ),
        None if slopes.is_empty() => (0.0, 0.0),
        None => (1.0, lambda_max(&model.dominating_matrix(), LAMBDA_TOL)?),
    };
    let rate = beta * c_f * lambda - delta;
    Ok(DecayCondition {
        kind: if model.all_concave() {
            DominationKind::Tangent
        } else {
            DominationKind::Chord
        },
        c_f,
        lambda,
        rate,
        holds: rate < 0.0,
        extinction_time_bound: extinction_time_bound(model.n(), beta, delta, c_f, lambda),
    })
}

/// Leading-order lower bound on survival past a long horizon, for concave
/// non-decreasing kernels.
///
/// With `m = ⌊n/2⌋` and `r = (e_max − 1) δ / (f(e_max − 1) β η(H, m))`,
/// survival beyond `⌊r^(1−m)⌋/(2m)` has probability at least
/// `(1 − r)/e` up to a `1 + O(r^m)` factor, provided
/// `λ_c(Δ) > 2 (e_max − 1)/f(e_max − 1) · δ/β`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalBound {
    pub m: usize,
    pub eta: f64,
    pub lambda_c: f64,
    /// Right-hand side of the `λ_c` precondition.
    pub lambda_c_required: f64,
    pub r: f64,
    pub r_pow_m: f64,
    pub horizon: f64,
    pub prob_lower: f64,
    pub applicable: bool,
    pub reasons: Vec<String>,
}

pub fn survival_bound(
    h: &Hypergraph,
    f: &InfectionKernel,
    beta: f64,
    delta: f64,
) -> Result<SurvivalBound> {
    let n = h.n();
    let m = n / 2;
    if m == 0 {
        return Err(Error::Domain(
            "survival bound needs at least two nodes".into(),
        ));
    }
    let lambda_c = lambda_c(&h.co_membership().laplacian())?;
    let eta = h.eta(m, &InfectionKernel::Identity)?;
    let e_max = h.e_max();
    let span = (e_max - 1) as f64;
    let f_span = f.eval_unchecked(span);
    let lambda_c_required = 2.0 * span / f_span * delta / beta;
    let r = span * delta / (f_span * beta * eta);
    let r_pow_m = r.powi(m as i32);
    let horizon = r.powi(1 - m as i32).floor() / (2 * m) as f64;
    let prob_lower = (1.0 - r) / std::f64::consts::E;

    let mut reasons = Vec::new();
    if !f.is_concave() {
        reasons.push("kernel is not concave".to_string());
    }
    if !f.is_nondecreasing() {
        reasons.push("kernel is not non-decreasing".to_string());
    }
    if !(lambda_c > lambda_c_required) {
        reasons.push(format!(
            "lambda_c = {lambda_c} does not exceed the required {lambda_c_required}"
        ));
    }
    if !(r < 1.0) {
        reasons.push(format!("r = {r} is not below 1"));
    }
    Ok(SurvivalBound {
        m,
        eta,
        lambda_c,
        lambda_c_required,
        r,
        r_pow_m,
        horizon,
        prob_lower,
        applicable: reasons.is_empty(),
        reasons,
    })
}
