use hypersis::meanfield::{IntegrationOptions, MeanFieldProblem, MeanFieldState};
use hypersis::sim::{self, Stepper};
use hypersis::spectral::{self, decay_bound};
use hypersis::{ContactModel, Hypergraph, InfectionKernel, KernelFamily, PartitionedHypergraph};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn hypergraph(max_n: usize, max_edges: usize) -> impl Strategy<Value = Hypergraph> {
    (2..=max_n).prop_flat_map(move |n| {
        prop::collection::vec(
            prop::collection::btree_set(0..n, 2..=n.min(4)),
            0..=max_edges,
        )
        .prop_map(move |edges| {
            Hypergraph::new(
                n,
                edges.into_iter().map(|e| e.into_iter().collect()).collect(),
            )
            .unwrap()
        })
    })
}

fn concave_kernel() -> impl Strategy<Value = InfectionKernel> {
    prop_oneof![
        Just(InfectionKernel::Identity),
        Just(InfectionKernel::Arctan),
        (0.5f64..4.0).prop_map(|c| InfectionKernel::min_cap(c).unwrap()),
        (0.2f64..3.0).prop_map(|a| InfectionKernel::scaled_log(a).unwrap()),
    ]
}

fn any_kernel() -> impl Strategy<Value = InfectionKernel> {
    prop_oneof![
        concave_kernel(),
        (1.0f64..3.0, 0.2f64..2.0)
            .prop_map(|(c1, c2)| InfectionKernel::threshold_indicator(c1, c2).unwrap()),
        (0.1f64..2.0).prop_map(|c| InfectionKernel::soft_threshold(c).unwrap()),
    ]
}

/// `W` from the incidence structure, written independently of the library.
fn naive_w(h: &Hypergraph) -> DMatrix<f64> {
    let n = h.n();
    DMatrix::from_fn(n, n, |i, j| {
        h.hyperedges()
            .iter()
            .filter(|e| e.contains(&i) && e.contains(&j))
            .count() as f64
    })
}

/// `min_{1 ≤ |S| ≤ m} E(S)/|S|`, with members of `S` exposed to the
/// members of `Sᶜ` sharing each hyperedge.
fn naive_eta(h: &Hypergraph, m: usize, f: &InfectionKernel) -> f64 {
    let n = h.n();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size > m {
            continue;
        }
        let in_s = |i: usize| mask >> i & 1 == 1;
        let mut pressure = 0.0;
        for i in (0..n).filter(|&i| in_s(i)) {
            for e in h.hyperedges().iter().filter(|e| e.contains(&i)) {
                let k = e.iter().filter(|&&j| !in_s(j)).count();
                pressure += f.eval(k as f64).unwrap();
            }
        }
        best = best.min(pressure / size as f64);
    }
    best
}

fn is_connected(h: &Hypergraph) -> bool {
    let n = h.n();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for e in h.hyperedges().iter().filter(|e| e.contains(&i)) {
            for &j in e {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    seen.into_iter().all(|s| s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn co_membership_matches_incidence(h in hypergraph(9, 10)) {
        let w = h.co_membership();
        let expect = naive_w(&h);
        prop_assert_eq!(w.to_dense(), expect.clone());
        prop_assert_eq!(w.to_dense(), w.to_dense().transpose());
        let labels: Vec<usize> = (0..h.m()).map(|e| e % 3).collect();
        let p = PartitionedHypergraph::new(h.clone(), labels, 3).unwrap();
        let sum = p.category_matrices().iter().fold(DMatrix::zeros(h.n(), h.n()), |acc, c| acc + c.to_dense());
        prop_assert_eq!(sum, expect);
    }

    #[test]
    fn laplacian_rows_and_kernel(h in hypergraph(9, 10)) {
        let lap = h.co_membership().laplacian();
        let l = lap.matrix();
        for row in l.row_iter() {
            prop_assert!(row.sum().abs() < 1e-12);
        }
        let eig = SymmetricEigen::new(l.clone());
        let min = eig.eigenvalues.min();
        prop_assert!(min.abs() < 1e-9 * l.amax().max(1.0));
        let ones = nalgebra::DVector::from_element(h.n(), 1.0);
        prop_assert!((l * ones).amax() < 1e-12);
    }

    #[test]
    fn simple_graph_adjacency(n in 2usize..9, pairs in prop::collection::btree_set((0usize..9, 0usize..9), 0..12)) {
        let edges: std::collections::BTreeSet<(usize, usize)> = pairs
            .into_iter()
            .filter(|(a, b)| a < b && *b < n)
            .collect();
        let h = Hypergraph::new(n, edges.iter().map(|&(a, b)| vec![a, b]).collect()).unwrap();
        let w = h.co_membership();
        for i in 0..n {
            for j in 0..n {
                let adj = (edges.contains(&(i.min(j), i.max(j))) && i != j) as u32;
                if i != j {
                    prop_assert_eq!(w.get(i, j), adj);
                }
            }
        }
    }

    #[test]
    fn eta_matches_naive_enumeration(h in hypergraph(8, 8), f in any_kernel(), frac in 0.0f64..1.0) {
        let m = 1 + ((h.n() / 2 - 1) as f64 * frac) as usize;
        let fast = h.eta(m, &f).unwrap();
        let slow = naive_eta(&h, m, &f);
        prop_assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1.0), "{} vs {}", fast, slow);
    }

    #[test]
    fn pressure_vanishes_without_exposure(h in hypergraph(8, 8)) {
        let zero = InfectionKernel::tabulated(vec![0.0; 6], true, true).unwrap();
        let all: Vec<usize> = (0..h.n()).collect();
        prop_assert_eq!(h.infection_pressure(&zero, &all[..1]).unwrap(), 0.0);
        // the complement of the full node set has no members at all
        prop_assert_eq!(h.infection_pressure(&InfectionKernel::Identity, &all).unwrap(), 0.0);
    }

    #[test]
    fn cheeger_on_connected(h in hypergraph(10, 12).prop_filter("connected", is_connected)) {
        let eta = h.eta(h.n() / 2, &InfectionKernel::Identity).unwrap();
        let lc = spectral::lambda_c(&h.co_membership().laplacian()).unwrap();
        prop_assert!(2.0 * eta >= lc - 1e-9, "2 eta = {} < lambda_c = {}", 2.0 * eta, lc);
    }

    #[test]
    fn kernel_monotone_and_dominated(f in any_kernel(), e_max in 2usize..7) {
        let slope = f.dominating_slope(e_max);
        let top = (e_max - 1) as f64;
        let mut prev = 0.0;
        for k in 0..=400 {
            let x = top * k as f64 / 400.0;
            let v = f.eval(x).unwrap();
            prop_assert!(v >= prev - 1e-15);
            prev = v;
            if x > 0.0 {
                prop_assert!(v <= slope * x + 1e-12);
            }
            if f.is_concave() {
                prop_assert!(v <= f.derivative_at_zero() * x + 1e-12);
            }
        }
    }

    #[test]
    fn critical_beta_homogeneity(h in hypergraph(8, 8).prop_filter("has edges", |h| h.m() > 0), s in 0.1f64..10.0, delta in 0.1f64..5.0) {
        let base = spectral::critical_beta(&ContactModel::plain(h.clone(), InfectionKernel::Identity), delta).unwrap();
        let scaled_delta = spectral::critical_beta(&ContactModel::plain(h.clone(), InfectionKernel::Identity), s * delta).unwrap();
        let scaled_kernel = spectral::critical_beta(&ContactModel::plain(h, InfectionKernel::scaled_log(s).unwrap()), delta).unwrap();
        let b = base.beta_c.unwrap();
        prop_assert!((scaled_delta.beta_c.unwrap() - s * b).abs() <= 1e-9 * s * b);
        prop_assert!((scaled_kernel.beta_c.unwrap() - b / s).abs() <= 1e-9 * b / s);
    }

    #[test]
    fn decay_bound_monotonicity(beta in 0.0f64..2.0, delta in 0.01f64..2.0, c_f in 0.0f64..2.0, lambda in 0.0f64..5.0) {
        let rate = beta * c_f * lambda - delta;
        prop_assume!(rate.abs() > 1e-9);
        let a = decay_bound(5, 0.5, beta, delta, c_f, lambda, 1.0);
        let b = decay_bound(5, 0.5, beta, delta, c_f, lambda, 2.0);
        prop_assert_eq!(b < a, rate < 0.0);
    }

    #[test]
    fn meanfield_zero_is_fixed(h in hypergraph(8, 8), f in any_kernel(), beta in 0.0f64..3.0, delta in 0.0f64..3.0) {
        let prob = MeanFieldProblem::new(ContactModel::plain(h.clone(), f), beta, delta).unwrap();
        prop_assert!(prob.rhs(&vec![0.0; h.n()]).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn euler_stays_in_unit_cube(h in hypergraph(8, 8), f in concave_kernel(), beta in 0.0f64..3.0, delta in 0.0f64..3.0, seed in any::<u64>()) {
        let model = ContactModel::plain(h.clone(), f);
        let max_pressure = (0..h.n())
            .map(|i| sim::node_rate(&model, 1.0, &vec![1; h.n()], i) + 1.0)
            .fold(0.0, f64::max);
        let dt = 0.99 / (delta + beta * max_pressure);
        let prob = MeanFieldProblem::new(model, beta, delta).unwrap();
        let p0 = sim::init_bernoulli(h.n(), 0.5, seed).unwrap();
        let mut opts = IntegrationOptions::new(dt, 50.0 * dt);
        opts.clamp = false;
        let traj = prob.integrate(&MeanFieldState::new(p0.x.iter().map(|&v| v as f64 * 0.9 + 0.05).collect()).unwrap(), opts).unwrap();
        prop_assert!(traj.final_state.p.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn dominated_kernels_couple_monotonically(
        h in hypergraph(8, 8),
        cap in 0.5f64..3.0,
        beta in 0.1f64..2.0,
        delta in 0.1f64..2.0,
        seed in any::<u64>(),
    ) {
        // min(x, c) ≤ x pointwise
        let low = ContactModel::plain(h.clone(), InfectionKernel::min_cap(cap).unwrap());
        let high = ContactModel::plain(h.clone(), InfectionKernel::Identity);
        let n = h.n();
        let max_rate = (0..n).map(|i| sim::node_rate(&high, beta, &vec![1; n], i)).fold(0.0, f64::max);
        let dt = 0.9 / (max_rate + delta);
        let x0 = sim::init_bernoulli(n, 0.6, seed).unwrap();
        let (mut a, mut b) = (x0.x.clone(), x0.x.clone());
        let mut ra = sim::rng_from_seed(seed);
        let mut rb = sim::rng_from_seed(seed);
        let mut sa = Stepper::new(&low, beta, delta, dt);
        let mut sb = Stepper::new(&high, beta, delta, dt);
        for _ in 0..200 {
            sa.step(&mut a, &mut ra);
            sb.step(&mut b, &mut rb);
            prop_assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
        }
    }
}

#[test]
fn partitioned_family_uses_weighted_sum() {
    let h = Hypergraph::new(4, vec![vec![0, 1], vec![1, 2, 3]]).unwrap();
    let p = PartitionedHypergraph::new(h.clone(), vec![0, 1], 2).unwrap();
    let fam = KernelFamily::new(vec![
        InfectionKernel::Identity,
        InfectionKernel::scaled_log(2.0).unwrap(),
    ])
    .unwrap();
    let report = spectral::critical_beta(&ContactModel::new(p, fam).unwrap(), 1.0).unwrap();
    let mut m = DMatrix::<f64>::zeros(4, 4);
    for (e, weight) in h.hyperedges().iter().zip([1.0, 2.0]) {
        for &i in e {
            for &j in e {
                m[(i, j)] += weight;
            }
        }
    }
    let expect = SymmetricEigen::new(m).eigenvalues.max();
    assert!((report.lambda_w - expect).abs() < 1e-9 * expect);
}
