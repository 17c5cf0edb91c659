//! Infection kernels.
//!
//! A kernel `f` maps the number of infected members of a hyperedge to that
//! hyperedge's contribution to the infection rate of a susceptible member.
//! Every kernel satisfies `f(0) = 0` and is non-decreasing on `[0, ∞)`.
//!
//! Kernels form a closed set of variants so that concavity and the linear
//! dominating slope `c_f` (the smallest implemented `c` with `f(x) <= c x` on
//! the relevant range) are exact metadata. The [`InfectionKernel::Tabulated`]
//! variant is an escape hatch for experimentation; its flags are trusted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonlinear infection function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", try_from = "RawKernel")]
pub enum InfectionKernel {
    /// `f(x) = x`.
    Identity,
    /// `f(x) = min(x, c)`.
    MinCap { c: f64 },
    /// `f(x) = a log(1 + x)`.
    ScaledLog { a: f64 },
    /// `f(x) = arctan(x)`.
    Arctan,
    /// `f(x) = c2 · 1(x >= c1)`.
    ThresholdIndicator { c1: f64, c2: f64 },
    /// `f(x) = max(0, x - c)`.
    SoftThreshold { c: f64 },
    /// Values at the integers `0..values.len()`, linearly interpolated in
    /// between and held constant beyond the last point.
    Tabulated {
        values: Vec<f64>,
        concave: bool,
        nondecreasing: bool,
    },
}

// Deserialization goes through this mirror so parameters are validated.
#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RawKernel {
    Identity,
    MinCap {
        c: f64,
    },
    ScaledLog {
        a: f64,
    },
    Arctan,
    ThresholdIndicator {
        c1: f64,
        c2: f64,
    },
    SoftThreshold {
        c: f64,
    },
    Tabulated {
        values: Vec<f64>,
        concave: bool,
        #[serde(default = "default_true")]
        nondecreasing: bool,
    },
}

fn default_true() -> bool {
    true
}

impl TryFrom<RawKernel> for InfectionKernel {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        match raw {
            RawKernel::Identity => Ok(Self::Identity),
            RawKernel::MinCap { c } => Self::min_cap(c),
            RawKernel::ScaledLog { a } => Self::scaled_log(a),
            RawKernel::Arctan => Ok(Self::Arctan),
            RawKernel::ThresholdIndicator { c1, c2 } => Self::threshold_indicator(c1, c2),
            RawKernel::SoftThreshold { c } => Self::soft_threshold(c),
            RawKernel::Tabulated {
                values,
                concave,
                nondecreasing,
            } => Self::tabulated(values, concave, nondecreasing),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidSpec(format!(
            "{name} must be a positive real, got {v}"
        )))
    }
}

impl InfectionKernel {
    pub fn min_cap(c: f64) -> Result<Self> {
        Ok(Self::MinCap {
            c: positive("c", c)?,
        })
    }

    pub fn scaled_log(a: f64) -> Result<Self> {
        Ok(Self::ScaledLog {
            a: positive("a", a)?,
        })
    }

    pub fn threshold_indicator(c1: f64, c2: f64) -> Result<Self> {
        Ok(Self::ThresholdIndicator {
            c1: positive("c1", c1)?,
            c2: positive("c2", c2)?,
        })
    }

    pub fn soft_threshold(c: f64) -> Result<Self> {
        Ok(Self::SoftThreshold {
            c: positive("c", c)?,
        })
    }

    pub fn tabulated(values: Vec<f64>, concave: bool, nondecreasing: bool) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidSpec(
                "tabulated kernel needs at least the values at 0 and 1".into(),
            ));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidSpec(
                "tabulated kernel must satisfy f(0) = 0".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSpec(
                "tabulated kernel values must be finite and non-negative".into(),
            ));
        }
        Ok(Self::Tabulated {
            values,
            concave,
            nondecreasing,
        })
    }

    /// Short human-readable descriptor, used in reports.
    pub fn describe(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::MinCap { c } => format!("min_cap(c={c})"),
            Self::ScaledLog { a } => format!("scaled_log(a={a})"),
            Self::Arctan => "arctan".into(),
            Self::ThresholdIndicator { c1, c2 } => format!("threshold_indicator(c1={c1}, c2={c2})"),
            Self::SoftThreshold { c } => format!("soft_threshold(c={c})"),
            Self::Tabulated { values, .. } => format!("tabulated({values:?})"),
        }
    }

    pub fn is_concave(&self) -> bool {
        match self {
            Self::Identity | Self::MinCap { .. } | Self::ScaledLog { .. } | Self::Arctan => true,
            Self::ThresholdIndicator { .. } | Self::SoftThreshold { .. } => false,
            Self::Tabulated { concave, .. } => *concave,
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        match self {
            Self::Tabulated { nondecreasing, .. } => *nondecreasing,
            _ => true,
        }
    }

    /// Evaluates `f(x)`. Fails on negative or NaN input.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!(
                "kernel argument must be >= 0, got {x}"
            )));
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluates `f(x)` for `x >= 0` without the domain check. Hot loops use
    /// this; arguments there are sums of non-negative quantities.
    #[inline]
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::MinCap { c } => x.min(*c),
            Self::ScaledLog { a } => a * x.ln_1p(),
            Self::Arctan => x.atan(),
            Self::ThresholdIndicator { c1, c2 } => {
                if x >= *c1 {
                    *c2
                } else {
                    0.0
                }
            }
            Self::SoftThreshold { c } => (x - c).max(0.0),
            Self::Tabulated { values, .. } => {
                let last = values.len() - 1;
                if x >= last as f64 {
                    return values[last];
                }
                let k = x.floor() as usize;
                let frac = x - k as f64;
                values[k] + frac * (values[k + 1] - values[k])
            }
        }
    }

    /// Right derivative `f'(0+)`.
    pub fn derivative_at_zero(&self) -> f64 {
        match self {
            Self::Identity | Self::MinCap { .. } | Self::Arctan => 1.0,
            Self::ScaledLog { a } => *a,
            Self::ThresholdIndicator { .. } | Self::SoftThreshold { .. } => 0.0,
            Self::Tabulated { values, .. } => values[1] - values[0],
        }
    }

    /// `f'(x)` for `x > 0`, and the right derivative at 0. Kinks and jumps
    /// are reported as [`Error::NotDifferentiable`].
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!(
                "kernel argument must be >= 0, got {x}"
            )));
        }
        if x == 0.0 {
            return Ok(self.derivative_at_zero());
        }
        match self {
            Self::Identity => Ok(1.0),
            Self::MinCap { c } => piecewise(x, *c, 1.0, 0.0),
            Self::ScaledLog { a } => Ok(a / (1.0 + x)),
            Self::Arctan => Ok(1.0 / (1.0 + x * x)),
            Self::ThresholdIndicator { c1, .. } => {
                if x == *c1 {
                    Err(Error::NotDifferentiable { x })
                } else {
                    Ok(0.0)
                }
            }
            Self::SoftThreshold { c } => piecewise(x, *c, 0.0, 1.0),
            Self::Tabulated { values, .. } => {
                let last = values.len() - 1;
                let slope = |k: usize| values[k + 1] - values[k];
                if x > last as f64 {
                    return Ok(0.0);
                }
                if x.fract() == 0.0 {
                    let k = x as usize;
                    let left = slope(k - 1);
                    let right = if k == last { 0.0 } else { slope(k) };
                    if left == right {
                        Ok(left)
                    } else {
                        Err(Error::NotDifferentiable { x })
                    }
                } else {
                    Ok(slope(x.floor() as usize))
                }
            }
        }
    }

    /// Smallest implemented constant `c_f` with `f(x) <= c_f x` on
    /// `[0, e_max - 1]`.
    ///
    /// Concave kernels give `f'(0)`; the threshold indicator gives `c2/c1`;
    /// the soft threshold gives `(e_max - 1 - c)/(e_max - 1)` (clamped at 0).
    pub fn dominating_slope(&self, e_max: usize) -> f64 {
        let span = e_max.saturating_sub(1).max(1) as f64;
        match self {
            Self::ThresholdIndicator { c1, c2 } => c2 / c1,
            Self::SoftThreshold { c } => ((span - c) / span).max(0.0),
            // On each linear piece f(x)/x is monotone, so the supremum sits
            // on an integer.
            Self::Tabulated { .. } => (1..=span as usize)
                .map(|k| self.eval_unchecked(k as f64) / k as f64)
                .fold(0.0, f64::max),
            _ => self.derivative_at_zero(),
        }
    }

    /// Checks `f(x) <= c_f x` on a dense grid of `[0, e_max - 1]` (including
    /// every integer), where `c_f` is [`Self::dominating_slope`].
    pub fn check_linear_domination(&self, e_max: usize) -> bool {
        self.check_domination_with_slope(e_max, self.dominating_slope(e_max))
    }

    /// Same as [`Self::check_linear_domination`] with an explicit slope.
    pub fn check_domination_with_slope(&self, e_max: usize, slope: f64) -> bool {
        let upper = e_max.saturating_sub(1).max(1) as f64;
        const STEPS: usize = 20_000;
        let grid = (0..=STEPS)
            .map(|k| upper * k as f64 / STEPS as f64)
            .chain((0..=upper as usize).map(|k| k as f64));
        grid.into_iter().all(|x| {
            let f = self.eval_unchecked(x);
            f <= slope * x * (1.0 + 1e-12) + 1e-12
        })
    }
}

fn piecewise(x: f64, knot: f64, below: f64, above: f64) -> Result<f64> {
    if x < knot {
        Ok(below)
    } else if x > knot {
        Ok(above)
    } else {
        Err(Error::NotDifferentiable { x })
    }
}

/// One kernel per hyperedge category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KernelFamily {
    kernels: Vec<InfectionKernel>,
}

impl KernelFamily {
    pub fn new(kernels: Vec<InfectionKernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidSpec(
                "kernel family must contain at least one kernel".into(),
            ));
        }
        Ok(Self { kernels })
    }

    pub fn single(kernel: InfectionKernel) -> Self {
        Self {
            kernels: vec![kernel],
        }
    }

    pub fn kernels(&self) -> &[InfectionKernel] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn all_concave(&self) -> bool {
        self.kernels.iter().all(InfectionKernel::is_concave)
    }
}

impl From<InfectionKernel> for KernelFamily {
    fn from(kernel: InfectionKernel) -> Self {
        Self::single(kernel)
    }
}
