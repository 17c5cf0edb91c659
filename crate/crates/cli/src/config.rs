use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use hypersis::{ContactModel, Hypergraph, InfectionKernel, KernelFamily, Structure};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Gen,
    Simulate,
    Meanfield,
    Threshold,
    Sweep,
    Oracle,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Command::Gen => "gen",
            Command::Simulate => "simulate",
            Command::Meanfield => "meanfield",
            Command::Threshold => "threshold",
            Command::Sweep => "sweep",
            Command::Oracle => "oracle",
        };
        f.write_str(name)
    }
}

/// Where the contact structure comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StructureSource {
    /// A hypergraph file, relative to the config file's directory.
    Path(PathBuf),
    Generate(GeneratorSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    /// Hyperedge size to number of hyperedges of that size.
    pub counts: BTreeMap<usize, usize>,
    /// Defaults to the top-level seed.
    pub seed: Option<u64>,
    /// Label each hyperedge with category `size − 2`.
    #[serde(default)]
    pub partition_by_size: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Single(InfectionKernel),
    Family(Vec<InfectionKernel>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Scalar(f64),
    List(Vec<f64>),
    Range { start: f64, step: f64, count: usize },
}

impl From<f64> for BetaSpec {
    fn from(b: f64) -> Self {
        BetaSpec::Scalar(b)
    }
}

impl BetaSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            BetaSpec::Scalar(b) => vec![*b],
            BetaSpec::List(v) => v.clone(),
            BetaSpec::Range { start, step, count } => {
                (0..*count).map(|k| start + k as f64 * step).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub out: Option<PathBuf>,
    /// Long-format per-run trajectories (`simulate`).
    pub runs_csv: Option<PathBuf>,
    /// Run metadata and extinction times (`simulate`).
    pub summary_json: Option<PathBuf>,
}

/// The JSON config document. Every field is optional here; each command
/// checks for what it needs.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub structure: Option<StructureSource>,
    pub kernels: Option<KernelSpec>,
    pub beta: Option<BetaSpec>,
    pub delta: Option<f64>,
    pub i0: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    /// Draw a fresh initial state per run instead of sharing one.
    #[serde(default)]
    pub resample_initial: bool,
    /// Residual `‖g(P)‖∞` at which the mean field counts as settled (`sweep`).
    pub equilibrium_tol: Option<f64>,
    /// Time allowed for settling, measured from `t_end` (`sweep`).
    pub equilibrium_t_cap: Option<f64>,
    /// Sample times for the exact-chain checks (`oracle`).
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Library(hypersis::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Library(e) => e.fmt(f),
        }
    }
}

impl From<hypersis::Error> for CliError {
    fn from(e: hypersis::Error) -> Self {
        CliError::Library(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("I/O: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("CSV output: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("JSON output: {e}"))
    }
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 4 for cap refusal.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Library(e) if e.is_cap_refusal() => 4,
            CliError::Library(e) if e.is_input_error() => 2,
            CliError::Library(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn delta(&self) -> CliResult<f64> {
        let d = self.delta.unwrap_or(1.0);
        if !(d.is_finite() && d >= 0.0) {
            return Err(config_err(format!(
                "delta must be finite and non-negative, got {d}"
            )));
        }
        Ok(d)
    }

    pub fn i0(&self) -> CliResult<f64> {
        let i0 = self.i0.unwrap_or(0.5);
        if !(0.0..=1.0).contains(&i0) {
            return Err(config_err(format!("i0 must lie in [0, 1], got {i0}")));
        }
        Ok(i0)
    }

    pub fn dt_or(&self, default: f64) -> CliResult<f64> {
        let dt = self.dt.unwrap_or(default);
        if !(dt.is_finite() && dt > 0.0) {
            return Err(config_err(format!("dt must be positive, got {dt}")));
        }
        Ok(dt)
    }

    pub fn t_end_or(&self, default: f64) -> CliResult<f64> {
        let t = self.t_end.unwrap_or(default);
        if !(t.is_finite() && t >= 0.0) {
            return Err(config_err(format!(
                "t_end must be finite and non-negative, got {t}"
            )));
        }
        Ok(t)
    }

    pub fn runs(&self) -> CliResult<usize> {
        match self.runs.unwrap_or(10) {
            0 => Err(config_err("runs must be at least 1")),
            r => Ok(r),
        }
    }

    pub fn equilibrium(&self) -> CliResult<(f64, f64)> {
        let tol = self.equilibrium_tol.unwrap_or(1e-10);
        let cap = self.equilibrium_t_cap.unwrap_or(1e4);
        if !(tol > 0.0 && cap.is_finite() && cap >= 0.0) {
            return Err(config_err(format!("equilibrium_tol must be positive and equilibrium_t_cap finite, got {tol} and {cap}")));
        }
        Ok((tol, cap))
    }

    pub fn betas(&self) -> CliResult<Vec<f64>> {
        let spec = self
            .beta
            .as_ref()
            .ok_or_else(|| config_err("missing beta"))?;
        let values = spec.values();
        if values.is_empty() {
            return Err(config_err("beta grid is empty"));
        }
        if let Some(b) = values.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(config_err(format!(
                "beta must be finite and non-negative, got {b}"
            )));
        }
        Ok(values)
    }

    /// The single `β` of commands that take one.
    pub fn beta(&self) -> CliResult<f64> {
        match self.betas()?.as_slice() {
            [b] => Ok(*b),
            _ => Err(config_err("expected a single beta, got a grid")),
        }
    }

    pub fn optional_beta(&self) -> CliResult<Option<f64>> {
        self.beta.as_ref().map(|_| self.beta()).transpose()
    }

    pub fn structure(&self) -> CliResult<Structure> {
        match self
            .structure
            .as_ref()
            .ok_or_else(|| config_err("missing structure"))?
        {
            StructureSource::Path(p) => Ok(Structure::load(self.base_dir.join(p))?),
            StructureSource::Generate(spec) => self.generate(spec),
        }
    }

    pub fn generator(&self) -> CliResult<&GeneratorSpec> {
        match &self.structure {
            Some(StructureSource::Generate(spec)) => Ok(spec),
            _ => Err(config_err(
                "gen needs a \"structure\": {\"generate\": {...}} section",
            )),
        }
    }

    pub fn generate(&self, spec: &GeneratorSpec) -> CliResult<Structure> {
        let h =
            Hypergraph::generate_random(spec.n, &spec.counts, spec.seed.unwrap_or(self.seed()))?;
        Ok(if spec.partition_by_size {
            h.partition_by_size().into()
        } else {
            h.into()
        })
    }

    pub fn kernels(&self) -> CliResult<KernelFamily> {
        match self.kernels.clone() {
            None => Ok(KernelFamily::single(InfectionKernel::Identity)),
            Some(KernelSpec::Single(k)) => Ok(k.into()),
            Some(KernelSpec::Family(ks)) => Ok(KernelFamily::new(ks)?),
        }
    }

    pub fn model(&self) -> CliResult<ContactModel> {
        Ok(ContactModel::new(self.structure()?, self.kernels()?)?)
    }
}
