//! Exact analysis of small instances through the full `2ⁿ`-state
//! continuous-time Markov chain.
//!
//! A state is a bit mask with bit `i` set when node `i` is infected. The
//! all-susceptible state `0` is absorbing. Transient distributions come from
//! uniformization, expected extinction times from the linear absorption
//! equations, and the linear moment bound `Q(t)` from a symmetric
//! eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::ContactModel;

/// Largest node count for which the chain is built (`2^14 = 16384` states).
pub const MAX_ORACLE_NODES: usize = 14;
/// Poisson tail mass discarded by uniformization.
pub const UNIFORMIZATION_TAIL: f64 = 1e-12;
/// Transient-state count up to which absorption times use a dense solve.
const DENSE_SOLVE_CAP: usize = 2048;

/// Sparse transition-rate matrix of the SIS chain.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    n: usize,
    delta: f64,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    rates: Vec<f64>,
    exit: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of states, `2ⁿ`.
    pub fn dim(&self) -> usize {
        self.exit.len()
    }

    /// Outgoing `(target, rate)` pairs of state `s`.
    pub fn transitions(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[s]..self.offsets[s + 1];
        self.targets[range.clone()]
            .iter()
            .zip(&self.rates[range])
            .map(|(&t, &r)| (t as usize, r))
    }

    /// Total exit rate of state `s` (minus the diagonal entry).
    pub fn exit_rate(&self, s: usize) -> f64 {
        self.exit[s]
    }

    /// Dense copy, for tests on tiny chains.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut q = DMatrix::zeros(d, d);
        for s in 0..d {
            q[(s, s)] = -self.exit[s];
            for (t, r) in self.transitions(s) {
                q[(s, t)] += r;
            }
        }
        q
    }
}

/// Builds the exact generator. Refuses more than [`MAX_ORACLE_NODES`] nodes.
pub fn build_generator(model: &ContactModel, beta: f64, delta: f64) -> Result<GeneratorMatrix> {
    let n = model.n();
    if n > MAX_ORACLE_NODES {
        return Err(Error::CapExceeded {
            what: "exact Markov chain",
            n,
            cap: MAX_ORACLE_NODES,
        });
    }
    if !(beta >= 0.0 && delta >= 0.0 && beta.is_finite() && delta.is_finite()) {
        return Err(Error::Domain(
            "beta and delta must be finite and non-negative".into(),
        ));
    }
    let masks: Vec<u32> = model
        .hyperedges()
        .iter()
        .map(|e| e.iter().fold(0u32, |acc, &i| acc | (1 << i)))
        .collect();
    let dim = 1usize << n;
    let mut offsets = Vec::with_capacity(dim + 1);
    let mut targets = Vec::new();
    let mut rates = Vec::new();
    let mut exit = Vec::with_capacity(dim);
    offsets.push(0);
    for s in 0..dim as u32 {
        let mut out = 0.0;
        if s != 0 {
            for i in 0..n {
                let bit = 1u32 << i;
                let rate = if s & bit == 0 {
                    let pressure: f64 = model
                        .memberships(i)
                        .iter()
                        .map(|&h| {
                            let c = (masks[h] & s).count_ones();
                            if c == 0 {
                                0.0
                            } else {
                                model.kernel_of(h).eval_unchecked(c as f64)
                            }
                        })
                        .sum();
                    beta * pressure
                } else {
                    delta
                };
                if rate > 0.0 {
                    targets.push(s ^ bit);
                    rates.push(rate);
                    out += rate;
                }
            }
        }
        exit.push(out);
        offsets.push(targets.len());
    }
    Ok(GeneratorMatrix {
        n,
        delta,
        offsets,
        targets,
        rates,
        exit,
    })
}

/// Product-Bernoulli(`i0`) distribution over the `2ⁿ` states.
pub fn product_bernoulli(n: usize, i0: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&i0) {
        return Err(Error::Domain(format!("i0 must lie in [0, 1], got {i0}")));
    }
    if n > MAX_ORACLE_NODES {
        return Err(Error::CapExceeded {
            what: "exact Markov chain",
            n,
            cap: MAX_ORACLE_NODES,
        });
    }
    Ok((0..1usize << n)
        .map(|s| {
            let k = s.count_ones() as i32;
            i0.powi(k) * (1.0 - i0).powi(n as i32 - k)
        })
        .collect())
}

fn check_distribution(gen: &GeneratorMatrix, dist: &[f64]) -> Result<()> {
    if dist.len() != gen.dim() {
        return Err(Error::Domain(format!(
            "distribution has {} entries for {} states",
            dist.len(),
            gen.dim()
        )));
    }
    let total: f64 = dist.iter().sum();
    if dist.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(
            "initial distribution is not a probability vector".into(),
        ));
    }
    Ok(())
}

/// Distribution at time `t` by uniformization, discarding at most
/// [`UNIFORMIZATION_TAIL`] of Poisson mass.
pub fn transient_distribution(gen: &GeneratorMatrix, initial: &[f64], t: f64) -> Result<Vec<f64>> {
    check_distribution(gen, initial)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    Ok(advance(gen, initial, t))
}

/// Distributions at each of the (ascending) `times`, advancing
/// incrementally.
pub fn transient_at_times(
    gen: &GeneratorMatrix,
    initial: &[f64],
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_distribution(gen, initial)?;
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain(
            "times must be non-negative and ascending".into(),
        ));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut current = initial.to_vec();
    let mut now = 0.0;
    for &t in times {
        current = advance(gen, &current, t - now);
        now = t;
        out.push(current.clone());
    }
    Ok(out)
}

fn advance(gen: &GeneratorMatrix, initial: &[f64], t: f64) -> Vec<f64> {
    let q = gen.exit.iter().copied().fold(0.0, f64::max);
    if t == 0.0 || q == 0.0 {
        return initial.to_vec();
    }
    let lambda = q * t;
    let ln_lambda = lambda.ln();
    let mut result = vec![0.0; initial.len()];
    let mut v = initial.to_vec();
    let mut next = vec![0.0; initial.len()];
    let mut ln_fact = 0.0;
    let mut mass = 0.0;
    let mut k = 0usize;
    loop {
        let weight = (-lambda + k as f64 * ln_lambda - ln_fact).exp();
        if weight > 0.0 {
            for (r, p) in result.iter_mut().zip(&v) {
                *r += weight * p;
            }
            mass += weight;
        }
        // past the mode the tail beyond k is at most w_k (k + 1) / (k + 1 - Λ)
        let kp = k as f64 + 1.0;
        if kp > lambda
            && (1.0 - mass <= UNIFORMIZATION_TAIL
                || weight * kp / (kp - lambda) <= UNIFORMIZATION_TAIL)
        {
            break;
        }
        uniformized_step(gen, q, &v, &mut next);
        std::mem::swap(&mut v, &mut next);
        k += 1;
        ln_fact += (k as f64).ln();
    }
    // spread the discarded tail proportionally so the output sums to one
    for r in &mut result {
        *r /= mass;
    }
    result
}

// next = v (I + Q/q)
fn uniformized_step(gen: &GeneratorMatrix, q: f64, v: &[f64], next: &mut [f64]) {
    for (s, (out, &p)) in next.iter_mut().zip(v).enumerate() {
        *out = p * (1.0 - gen.exit[s] / q);
    }
    for (s, &p) in v.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (t, r) in gen.transitions(s) {
            next[t] += p * r / q;
        }
    }
}

/// Probability of a nonzero state.
pub fn alive_probability(dist: &[f64]) -> f64 {
    dist[1..].iter().sum()
}

/// Expected infected fraction `Σₛ πₛ |s| / n`.
pub fn expected_infected_fraction(n: usize, dist: &[f64]) -> f64 {
    dist.iter()
        .enumerate()
        .map(|(s, p)| p * s.count_ones() as f64)
        .sum::<f64>()
        / n.max(1) as f64
}

/// `P(Σᵢ Xᵢ(t) > 0)` from product-Bernoulli(`i0`) initial conditions.
pub fn survival_probability(
    model: &ContactModel,
    beta: f64,
    delta: f64,
    i0: f64,
    t: f64,
) -> Result<f64> {
    Ok(survival_curve(model, beta, delta, i0, &[t])?[0])
}

/// [`survival_probability`] at several ascending times.
pub fn survival_curve(
    model: &ContactModel,
    beta: f64,
    delta: f64,
    i0: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    let gen = build_generator(model, beta, delta)?;
    let init = product_bernoulli(model.n(), i0)?;
    Ok(transient_at_times(&gen, &init, times)?
        .iter()
        .map(|d| alive_probability(d))
        .collect())
}

/// Mean of the linear dominating process, `Q(t) = exp(t(β c W − δ I)) Q(0)`
/// with `Q(0) = i₀ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentBound {
    pub t: f64,
    pub q: Vec<f64>,
}

impl MomentBound {
    pub fn total(&self) -> f64 {
        self.q.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.q.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Solves `dqᵢ/dt = β c Σⱼ Wᵢⱼ qⱼ − δ qᵢ` from `Q(0) = i₀ 1`, where `w` is
/// a symmetric matrix (`W`, or `Σₖ cₖ W⁽ᵏ⁾` with `slope = 1`).
pub fn moment_bound(
    w: &DMatrix<f64>,
    slope: f64,
    beta: f64,
    delta: f64,
    i0: f64,
    t: f64,
) -> Result<MomentBound> {
    Ok(moment_curve(w, slope, beta, delta, i0, &[t])?.remove(0))
}

/// [`moment_bound`] at several times, sharing one eigendecomposition.
pub fn moment_curve(
    w: &DMatrix<f64>,
    slope: f64,
    beta: f64,
    delta: f64,
    i0: f64,
    times: &[f64],
) -> Result<Vec<MomentBound>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::NotSymmetric { row: 0, col: 0 });
    }
    let a = w * (beta * slope) - DMatrix::identity(n, n) * delta;
    let eig = SymmetricEigen::new(a);
    let q0 = DVector::from_element(n, i0);
    let coeffs = eig.eigenvectors.transpose() * &q0;
    Ok(times
        .iter()
        .map(|&t| {
            let scaled = DVector::from_fn(n, |k, _| coeffs[k] * (eig.eigenvalues[k] * t).exp());
            let q = &eig.eigenvectors * scaled;
            MomentBound {
                t,
                q: q.iter().copied().collect(),
            }
        })
        .collect())
}

/// `E[τ]` for the hitting time of the all-susceptible state, averaged over
/// `initial`.
pub fn exact_expected_extinction_time(gen: &GeneratorMatrix, initial: &[f64]) -> Result<f64> {
    check_distribution(gen, initial)?;
    if gen.n > 0 && !(gen.delta > 0.0) {
        return Err(Error::NonAbsorbing("recovery rate is zero".into()));
    }
    let dim = gen.dim();
    let transient = dim - 1;
    if transient == 0 {
        return Ok(0.0);
    }
    let times = if transient <= DENSE_SOLVE_CAP {
        absorption_dense(gen)?
    } else {
        absorption_gauss_seidel(gen)?
    };
    Ok(initial
        .iter()
        .enumerate()
        .skip(1)
        .map(|(s, p)| p * times[s])
        .sum())
}

// Expected absorption time of every state (index 0 holds 0).
fn absorption_dense(gen: &GeneratorMatrix) -> Result<Vec<f64>> {
    let d = gen.dim() - 1;
    let mut a = DMatrix::zeros(d, d);
    for s in 1..gen.dim() {
        a[(s - 1, s - 1)] = gen.exit[s];
        for (t, r) in gen.transitions(s) {
            if t != 0 {
                a[(s - 1, t - 1)] -= r;
            }
        }
    }
    let b = DVector::from_element(d, 1.0);
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NonAbsorbing("absorption system is singular".into()))?;
    let mut out = vec![0.0];
    out.extend(x.iter().copied());
    Ok(out)
}

fn absorption_gauss_seidel(gen: &GeneratorMatrix) -> Result<Vec<f64>> {
    const MAX_SWEEPS: usize = 200_000;
    let mut x = vec![0.0; gen.dim()];
    let mut change = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        change = 0.0;
        let mut scale = 0.0f64;
        for s in 1..gen.dim() {
            let mut acc = 1.0;
            for (t, r) in gen.transitions(s) {
                acc += r * x[t];
            }
            let new = acc / gen.exit[s];
            change = change.max((new - x[s]).abs());
            scale = scale.max(new.abs());
            x[s] = new;
        }
        if change <= 1e-13 * scale {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_SWEEPS,
        residual: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::Hypergraph;
    use crate::kernel::InfectionKernel;

    fn model(n: usize, edges: Vec<Vec<usize>>, kernel: InfectionKernel) -> ContactModel {
        ContactModel::plain(Hypergraph::new(n, edges).unwrap(), kernel)
    }

    #[test]
    fn single_node_pure_death() {
        let m = model(1, vec![], InfectionKernel::Identity);
        let gen = build_generator(&m, 1.0, 2.0).unwrap();
        assert_eq!(gen.dim(), 2);
        assert_eq!(gen.transitions(1).collect::<Vec<_>>(), vec![(0, 2.0)]);
        assert_eq!(gen.transitions(0).count(), 0);
        for &t in &[0.0, 0.3, 1.0, 4.0] {
            let p = survival_probability(&m, 1.0, 2.0, 1.0, t).unwrap();
            assert!((p - (-2.0 * t).exp()).abs() < 1e-12, "{t}");
        }
        let e = exact_expected_extinction_time(&gen, &[0.0, 1.0]).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn edge_generator_by_hand() {
        let m = model(2, vec![vec![0, 1]], InfectionKernel::Identity);
        let q = build_generator(&m, 0.7, 1.3).unwrap().to_dense();
        // state 0b01: node 0 infected
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 0.0, 0.0, //
                1.3, -2.0, 0.0, 0.7, //
                1.3, 0.0, -2.0, 0.7, //
                0.0, 1.3, 1.3, -2.6,
            ],
        );
        assert!((q - expect).amax() < 1e-15);
    }

    #[test]
    fn rows_sum_to_zero() {
        let m = model(
            5,
            vec![vec![0, 1, 2], vec![2, 3], vec![1, 3, 4]],
            InfectionKernel::Arctan,
        );
        let q = build_generator(&m, 0.9, 1.1).unwrap().to_dense();
        for row in q.row_iter() {
            assert!(row.sum().abs() < 1e-12);
        }
        assert!(q.row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn refuses_large_chains() {
        let m = model(15, vec![], InfectionKernel::Identity);
        assert!(matches!(
            build_generator(&m, 1.0, 1.0),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn distribution_stays_normalized() {
        let m = model(
            6,
            vec![vec![0, 1, 2], vec![2, 3, 4, 5], vec![0, 5]],
            InfectionKernel::Identity,
        );
        let gen = build_generator(&m, 2.0, 1.0).unwrap();
        let init = product_bernoulli(6, 0.4).unwrap();
        assert_eq!(transient_distribution(&gen, &init, 0.0).unwrap(), init);
        for d in transient_at_times(&gen, &init, &[0.5, 3.0, 30.0]).unwrap() {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(d.iter().all(|p| *p >= 0.0));
        }
        assert!(transient_distribution(&gen, &init, -1.0).is_err());
    }

    #[test]
    fn moment_bound_without_infection_decays() {
        let w = Hypergraph::new(3, vec![vec![0, 1, 2]])
            .unwrap()
            .co_membership()
            .to_dense();
        let mb = moment_bound(&w, 1.0, 0.0, 2.0, 0.3, 1.5).unwrap();
        for q in mb.q {
            assert!((q - 0.3 * (-3.0f64).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_recovery_is_not_absorbing() {
        let m = model(2, vec![vec![0, 1]], InfectionKernel::Identity);
        let gen = build_generator(&m, 1.0, 0.0).unwrap();
        assert!(matches!(
            exact_expected_extinction_time(&gen, &product_bernoulli(2, 0.5).unwrap()),
            Err(Error::NonAbsorbing(_))
        ));
    }

    #[test]
    fn gauss_seidel_agrees_with_dense_solve() {
        let m = model(
            7,
            vec![vec![0, 1, 2], vec![2, 3], vec![3, 4, 5, 6], vec![0, 6]],
            InfectionKernel::Arctan,
        );
        let gen = build_generator(&m, 0.6, 1.0).unwrap();
        let a = absorption_dense(&gen).unwrap();
        let b = absorption_gauss_seidel(&gen).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}
