use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use hypersis::hypergraph::ETA_BRUTE_FORCE_CAP;
use hypersis::meanfield::{Equilibrium, MeanFieldTrajectory};
use hypersis::oracle::{self, MAX_ORACLE_NODES};
use hypersis::sim::{self, EnsembleSummary, InitialCondition};
use hypersis::spectral::{self, DecayCondition, SpectralReport, SurvivalBound};
use hypersis::{
    ContactModel, IntegrationOptions, MeanFieldProblem, MeanFieldState, SimParams, Structure,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CliError, CliResult, Command, ExperimentConfig};

const DEFAULT_DT: f64 = 0.05;
const DEFAULT_T_END: f64 = 150.0;
const ORACLE_T_END: f64 = 20.0;
const ORACLE_DT: f64 = 1e-3;
const ORACLE_TIMES: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];
/// Allowed excess of the exact infected fraction over the mean-field one.
const MEANFIELD_SLACK: f64 = 1e-3;
/// A mean-field endpoint whose largest component is below this counts as
/// extinct.
const MEANFIELD_EXTINCT: f64 = 1e-6;

pub fn run(command: Command, cfg: &ExperimentConfig) -> CliResult<()> {
    match command {
        Command::Gen => gen(cfg),
        Command::Simulate => simulate(cfg),
        Command::Meanfield => meanfield(cfg),
        Command::Threshold => threshold(cfg),
        Command::Sweep => sweep(cfg),
        Command::Oracle => oracle_report(cfg),
    }
}

fn open(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Config(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> CliResult<()> {
    let mut out = open(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Shortest round-trip form, switching to exponent notation for tiny and
/// huge magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_writer(path: Option<&Path>) -> CliResult<csv::Writer<Box<dyn Write>>> {
    Ok(csv::Writer::from_writer(open(path)?))
}

fn gen(cfg: &ExperimentConfig) -> CliResult<()> {
    let structure = cfg.generate(cfg.generator()?)?;
    let out = cfg.outputs.out.as_deref();
    let mut sink = open(out)?;
    sink.write_all(structure.to_json().as_bytes())?;
    sink.flush()?;
    drop(sink);

    let h = structure.base();
    let lambda = spectral::lambda_max(&h.co_membership().to_dense(), spectral::LAMBDA_TOL)?;
    let digest = format!(
        "n={} m={} e_max={} lambda_w={lambda}",
        h.n(),
        h.m(),
        h.e_max()
    );
    if out.is_some() {
        println!("{digest}");
    } else {
        eprintln!("{digest}");
    }
    Ok(())
}

fn params(cfg: &ExperimentConfig, beta: f64) -> CliResult<SimParams> {
    let params = SimParams {
        beta,
        delta: cfg.delta()?,
        dt: cfg.dt_or(DEFAULT_DT)?,
        t_end: cfg.t_end_or(DEFAULT_T_END)?,
    };
    params.validate()?;
    Ok(params)
}

fn integrate(
    model: &ContactModel,
    params: SimParams,
    initial: &MeanFieldState,
) -> CliResult<MeanFieldTrajectory> {
    let problem = MeanFieldProblem::new(model.clone(), params.beta, params.delta)?;
    Ok(problem.integrate(initial, IntegrationOptions::new(params.dt, params.t_end))?)
}

/// Ensemble initial condition and the matching mean-field start.
fn initial_states(
    cfg: &ExperimentConfig,
    n: usize,
) -> CliResult<(InitialCondition, MeanFieldState)> {
    let i0 = cfg.i0()?;
    if cfg.resample_initial {
        Ok((
            InitialCondition::ResampledBernoulli { i0 },
            MeanFieldState::uniform(n, i0)?,
        ))
    } else {
        // the same draw the ensemble makes for its shared start
        let x0 = sim::init_bernoulli(n, i0, sim::derive_seed(cfg.seed(), 0))?;
        let p0 = MeanFieldState::new(x0.x.iter().map(|&v| v as f64).collect())?;
        Ok((InitialCondition::Fixed(x0), p0))
    }
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    beta: f64,
    delta: f64,
    dt: f64,
    t_end: f64,
    seed: u64,
    resample_initial: bool,
    mf_final_fraction: f64,
    ensemble_final_fraction: f64,
    mf_clamp_events: u64,
    #[serde(flatten)]
    ensemble: &'a EnsembleSummary,
}

fn simulate(cfg: &ExperimentConfig) -> CliResult<()> {
    let model = cfg.model()?;
    let params = params(cfg, cfg.beta()?)?;
    let (initial, p0) = initial_states(cfg, model.n())?;
    let mf = integrate(&model, params, &p0)?;
    let ens = sim::ensemble(&model, params, &initial, cfg.runs()?, cfg.seed())?;

    let mut w = csv_writer(cfg.outputs.out.as_deref())?;
    w.write_record(["t", "mf_fraction", "ensemble_mean_fraction"])?;
    for ((t, m), s) in ens.times.iter().zip(&ens.mean_fraction).zip(&mf.samples) {
        w.write_record([num(*t), num(s.mean_p), num(*m)])?;
    }
    w.flush()?;

    if let Some(path) = cfg.outputs.runs_csv.as_deref() {
        let mut w = csv_writer(Some(path))?;
        w.write_record(["run_id", "t", "infected_count", "fraction"])?;
        let n = model.n().max(1) as f64;
        for (r, tr) in ens.trajectories.iter().enumerate() {
            for s in &tr.samples {
                w.write_record([
                    r.to_string(),
                    num(s.t),
                    s.infected.to_string(),
                    num(s.infected as f64 / n),
                ])?;
            }
        }
        w.flush()?;
    }
    if let Some(path) = cfg.outputs.summary_json.as_deref() {
        let summary = SimulateSummary {
            beta: params.beta,
            delta: params.delta,
            dt: params.dt,
            t_end: params.t_end,
            seed: cfg.seed(),
            resample_initial: cfg.resample_initial,
            mf_final_fraction: mf.final_state.mean(),
            ensemble_final_fraction: ens.mean_fraction.last().copied().unwrap_or(0.0),
            mf_clamp_events: mf.clamp_events,
            ensemble: &ens,
        };
        write_json(Some(path), &summary)?;
    }
    Ok(())
}

fn meanfield(cfg: &ExperimentConfig) -> CliResult<()> {
    let model = cfg.model()?;
    let params = params(cfg, cfg.beta()?)?;
    let p0 = MeanFieldState::uniform(model.n(), cfg.i0()?)?;
    let mf = integrate(&model, params, &p0)?;
    let mut w = csv_writer(cfg.outputs.out.as_deref())?;
    w.write_record(["t", "mean_p", "clamp_count"])?;
    for s in &mf.samples {
        w.write_record([num(s.t), num(s.mean_p), s.clamp_count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ThresholdReport {
    spectral: SpectralReport,
    decay: Option<DecayCondition>,
    survival: Option<SurvivalBound>,
    notes: Vec<String>,
}

fn threshold(cfg: &ExperimentConfig) -> CliResult<()> {
    let model = cfg.model()?;
    let delta = cfg.delta()?;
    let mut spectral = spectral::critical_beta(&model, delta)?;
    let mut notes = Vec::new();
    if spectral.beta_c.is_none() {
        notes.push(
            "beta_c is infinite: the zero state is locally stable for every beta".to_string(),
        );
    }
    let (decay, survival) = match cfg.optional_beta()? {
        None => {
            notes.push("no beta given: decay and survival bounds omitted".to_string());
            (None, None)
        }
        Some(beta) => {
            spectral = spectral.with_beta(beta);
            let decay = spectral::decay_condition(&model, beta, delta)?;
            (Some(decay), survival_for(&model, beta, delta, &mut notes)?)
        }
    };
    write_json(
        cfg.outputs.out.as_deref(),
        &ThresholdReport {
            spectral,
            decay,
            survival,
            notes,
        },
    )
}

fn survival_for(
    model: &ContactModel,
    beta: f64,
    delta: f64,
    notes: &mut Vec<String>,
) -> CliResult<Option<SurvivalBound>> {
    let m = model.hyperedges().len();
    let uniform = (1..m).all(|h| model.kernel_of(h) == model.kernel_of(0));
    let skip = if m == 0 {
        Some("no hyperedges".to_string())
    } else if !uniform {
        Some("categories use different kernels".to_string())
    } else if model.n() > ETA_BRUTE_FORCE_CAP {
        Some(format!(
            "n exceeds the subset-enumeration cap of {ETA_BRUTE_FORCE_CAP}"
        ))
    } else if model.n() < 2 || beta <= 0.0 || delta <= 0.0 {
        Some("needs n >= 2 and positive beta and delta".to_string())
    } else {
        None
    };
    match skip {
        Some(why) => {
            notes.push(format!("survival bound omitted: {why}"));
            Ok(None)
        }
        None => Ok(Some(spectral::survival_bound(
            model.hypergraph(),
            model.kernel_of(0),
            beta,
            delta,
        )?)),
    }
}

struct SweepRow {
    beta: f64,
    mf_fraction: f64,
    mf_extinct: bool,
    mf_settled: &'static str,
    ensemble_fraction: f64,
    runs_extinct: usize,
}

/// Continues the mean field from its endpoint until it settles: `zero`,
/// `endemic`, or `unsettled` if the time cap comes first.
fn settle(
    model: &ContactModel,
    params: SimParams,
    end: &MeanFieldState,
    cfg: &ExperimentConfig,
) -> CliResult<&'static str> {
    let problem = MeanFieldProblem::new(model.clone(), params.beta, params.delta)?;
    let (tol, t_cap) = cfg.equilibrium()?;
    Ok(
        match problem.find_equilibrium(end, params.dt, tol, t_cap)? {
            Equilibrium::Converged { state, .. } if state.sup_norm() < MEANFIELD_EXTINCT => "zero",
            Equilibrium::Converged { .. } => "endemic",
            Equilibrium::TimedOut { .. } => "unsettled",
        },
    )
}

fn sweep(cfg: &ExperimentConfig) -> CliResult<()> {
    let model = cfg.model()?;
    let delta = cfg.delta()?;
    let beta_c = if delta > 0.0 {
        spectral::critical_beta(&model, delta)?.beta_c
    } else {
        Some(0.0)
    };
    let runs = cfg.runs()?;
    let betas = cfg.betas()?;
    let (initial, p0) = initial_states(cfg, model.n())?;
    // every grid point reuses the base seed (common random numbers)
    let rows: Vec<SweepRow> = betas
        .par_iter()
        .map(|&beta| {
            let params = params(cfg, beta)?;
            let mf = integrate(&model, params, &p0)?;
            let ens = sim::ensemble(&model, params, &initial, runs, cfg.seed())?;
            Ok(SweepRow {
                beta,
                mf_fraction: mf.final_state.mean(),
                mf_extinct: mf.final_state.sup_norm() < MEANFIELD_EXTINCT,
                mf_settled: settle(&model, params, &mf.final_state, cfg)?,
                ensemble_fraction: ens.mean_fraction.last().copied().unwrap_or(0.0),
                runs_extinct: ens.extinction_times.iter().filter(|t| t.is_some()).count(),
            })
        })
        .collect::<CliResult<_>>()?;

    let beta_c = beta_c.map_or_else(|| "inf".to_string(), num);
    let mut w = csv_writer(cfg.outputs.out.as_deref())?;
    w.write_record([
        "beta",
        "beta_c",
        "mf_fraction",
        "mf_extinct",
        "mf_settled",
        "ensemble_fraction",
        "runs_extinct",
        "runs",
    ])?;
    for r in rows {
        w.write_record([
            num(r.beta),
            beta_c.clone(),
            num(r.mf_fraction),
            r.mf_extinct.to_string(),
            r.mf_settled.to_string(),
            num(r.ensemble_fraction),
            r.runs_extinct.to_string(),
            runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Comparison {
    t: f64,
    exact: f64,
    bound: f64,
    margin: f64,
    pass: bool,
}

impl Comparison {
    fn new(t: f64, exact: f64, bound: f64) -> Self {
        Comparison {
            t,
            exact,
            bound,
            margin: bound - exact,
            pass: bound - exact >= 0.0,
        }
    }
}

#[derive(Serialize)]
struct ExtinctionCheck {
    exact: f64,
    bound: Option<f64>,
    margin: Option<f64>,
    pass: Option<bool>,
}

#[derive(Serialize)]
struct MeanFieldCheck {
    applicable: bool,
    tolerance: f64,
    dt: f64,
    t_end: f64,
    /// Largest `exact − mean-field` over the sampled times.
    max_excess: f64,
    worst_t: f64,
    pass: Option<bool>,
}

#[derive(Serialize)]
struct OracleReport {
    n: usize,
    beta: f64,
    delta: f64,
    i0: f64,
    decay: DecayCondition,
    survival: Vec<Comparison>,
    moment: Vec<Comparison>,
    extinction_time: Option<ExtinctionCheck>,
    meanfield: MeanFieldCheck,
    all_pass: bool,
}

fn oracle_report(cfg: &ExperimentConfig) -> CliResult<()> {
    let structure: Structure = cfg.structure()?;
    let n = structure.base().n();
    if n > MAX_ORACLE_NODES {
        return Err(hypersis::Error::CapExceeded {
            what: "exact Markov chain",
            n,
            cap: MAX_ORACLE_NODES,
        }
        .into());
    }
    let model = ContactModel::new(structure, cfg.kernels()?)?;
    let beta = cfg.beta()?;
    let delta = cfg.delta()?;
    let i0 = cfg.i0()?;
    let times = cfg.times.clone().unwrap_or_else(|| ORACLE_TIMES.to_vec());
    let decay = spectral::decay_condition(&model, beta, delta)?;

    let gen = oracle::build_generator(&model, beta, delta)?;
    let init = oracle::product_bernoulli(n, i0)?;
    let dists = oracle::transient_at_times(&gen, &init, &times)?;
    let alive: Vec<f64> = dists.iter().map(|d| oracle::alive_probability(d)).collect();

    let survival: Vec<Comparison> = times
        .iter()
        .zip(&alive)
        .map(|(&t, &p)| Comparison::new(t, p, decay.survival_bound_at(n, i0, beta, delta, t)))
        .collect();
    let moments = oracle::moment_curve(&model.dominating_matrix(), 1.0, beta, delta, i0, &times)?;
    let moment: Vec<Comparison> = moments
        .iter()
        .zip(&alive)
        .map(|(q, &p)| Comparison::new(q.t, p, q.total()))
        .collect();

    let extinction_time = if delta > 0.0 {
        let exact = oracle::exact_expected_extinction_time(&gen, &init)?;
        let bound = decay.extinction_time_bound;
        Some(ExtinctionCheck {
            exact,
            bound,
            margin: bound.map(|b| b - exact),
            pass: bound.map(|b| b >= exact),
        })
    } else {
        None
    };

    let meanfield = meanfield_check(cfg, &model, &gen, &init, beta, delta, i0)?;
    let all_pass = survival.iter().chain(&moment).all(|c| c.pass)
        && extinction_time
            .as_ref()
            .and_then(|e| e.pass)
            .unwrap_or(true)
        && meanfield.pass.unwrap_or(true);
    write_json(
        cfg.outputs.out.as_deref(),
        &OracleReport {
            n,
            beta,
            delta,
            i0,
            decay,
            survival,
            moment,
            extinction_time,
            meanfield,
            all_pass,
        },
    )
}

fn meanfield_check(
    cfg: &ExperimentConfig,
    model: &ContactModel,
    gen: &oracle::GeneratorMatrix,
    init: &[f64],
    beta: f64,
    delta: f64,
    i0: f64,
) -> CliResult<MeanFieldCheck> {
    let dt = cfg.dt_or(ORACLE_DT)?;
    let t_end = cfg.t_end_or(ORACLE_T_END)?;
    let applicable = model.all_concave();
    // compare on a 0.1 grid of whole Euler steps
    let every = ((0.1 / dt).round() as usize).max(1);
    let problem = MeanFieldProblem::new(model.clone(), beta, delta)?;
    let mut opts = IntegrationOptions::new(dt, t_end);
    opts.record_every = every;
    let mf = problem.integrate(&MeanFieldState::uniform(model.n(), i0)?, opts)?;
    let times: Vec<f64> = mf.samples.iter().map(|s| s.t).collect();
    let exact = oracle::transient_at_times(gen, init, &times)?;
    let (max_excess, worst_t) = mf
        .samples
        .iter()
        .zip(&exact)
        .map(|(s, d)| {
            (
                oracle::expected_infected_fraction(model.n(), d) - s.mean_p,
                s.t,
            )
        })
        .fold(
            (f64::NEG_INFINITY, 0.0),
            |acc, x| if x.0 > acc.0 { x } else { acc },
        );
    Ok(MeanFieldCheck {
        applicable,
        tolerance: MEANFIELD_SLACK,
        dt,
        t_end,
        max_excess,
        worst_t,
        pass: applicable.then_some(max_excess <= MEANFIELD_SLACK),
    })
}
