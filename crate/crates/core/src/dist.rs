//! Nonnegative univariate laws with closed-form moment queries.
//!
//! Every variant here has a closed-form moment generating function, so the
//! constants pipeline never needs quadrature. Sampling is by inversion only:
//! one uniform per variate, which keeps streams aligned across models and
//! makes common-random-number coupling monotone.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};
use thiserror::Error;

use crate::rng::RngStream;

/// Tolerance on the total mass of a finite discrete law.
pub const DISCRETE_MASS_TOL: f64 = 1e-12;

/// Below this `|t (hi - lo)|` the uniform MGF switches to its Taylor series.
const UNIFORM_SERIES_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

impl Atom {
    pub fn new(value: f64, prob: f64) -> Self {
        Self { value, prob }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Deterministic { value: f64 },
    DiscreteFinite { atoms: Vec<Atom> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("{law}: parameter `{name}` = {value} is out of range ({requirement})")]
    BadParameter {
        law: &'static str,
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("discrete law has no atoms")]
    EmptyAtoms,
    #[error("discrete law probabilities sum to {0}, expected 1")]
    MassNotOne(f64),
}

/// `E e^{tX}` is infinite (or too large to represent) at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("moment generating function diverges at t = {t}")]
pub struct MgfDiverges {
    pub t: f64,
}

fn check(
    ok: bool,
    law: &'static str,
    name: &'static str,
    value: f64,
    requirement: &'static str,
) -> Result<(), DistError> {
    if ok {
        Ok(())
    } else {
        Err(DistError::BadParameter {
            law,
            name,
            value,
            requirement,
        })
    }
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Self {
        Self::Exponential { rate }
    }

    pub fn gamma(shape: f64, rate: f64) -> Self {
        Self::Gamma { shape, rate }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::Uniform { lo, hi }
    }

    pub fn deterministic(value: f64) -> Self {
        Self::Deterministic { value }
    }

    pub fn discrete(atoms: &[(f64, f64)]) -> Self {
        Self::DiscreteFinite {
            atoms: atoms.iter().map(|&(v, p)| Atom::new(v, p)).collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Gamma { .. } => "gamma",
            Self::Uniform { .. } => "uniform",
            Self::Deterministic { .. } => "deterministic",
            Self::DiscreteFinite { .. } => "discrete_finite",
        }
    }

    pub fn validate(&self) -> Result<(), DistError> {
        let law = self.name();
        match *self {
            Self::Exponential { rate } => {
                check(rate.is_finite() && rate > 0.0, law, "rate", rate, "finite, > 0")
            }
            Self::Gamma { shape, rate } => {
                check(shape.is_finite() && shape > 0.0, law, "shape", shape, "finite, > 0")?;
                check(rate.is_finite() && rate > 0.0, law, "rate", rate, "finite, > 0")
            }
            Self::Uniform { lo, hi } => {
                check(lo.is_finite() && lo >= 0.0, law, "lo", lo, "finite, >= 0")?;
                check(hi.is_finite() && hi > lo, law, "hi", hi, "finite, > lo")
            }
            Self::Deterministic { value } => {
                check(value.is_finite() && value >= 0.0, law, "value", value, "finite, >= 0")
            }
            Self::DiscreteFinite { ref atoms } => {
                if atoms.is_empty() {
                    return Err(DistError::EmptyAtoms);
                }
                for a in atoms {
                    check(a.value.is_finite() && a.value >= 0.0, law, "value", a.value, "finite, >= 0")?;
                    check(a.prob > 0.0 && a.prob <= 1.0, law, "prob", a.prob, "in (0, 1]")?;
                }
                let total: f64 = atoms.iter().map(|a| a.prob).sum();
                if (total - 1.0).abs() > DISCRETE_MASS_TOL {
                    return Err(DistError::MassNotOne(total));
                }
                Ok(())
            }
        }
    }

    /// `P(X = 0)`.
    pub fn prob_zero(&self) -> f64 {
        match self {
            Self::Exponential { .. } | Self::Gamma { .. } | Self::Uniform { .. } => 0.0,
            Self::Deterministic { value } => {
                if *value == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::DiscreteFinite { atoms } => {
                atoms.iter().filter(|a| a.value == 0.0).map(|a| a.prob).sum()
            }
        }
    }

    /// True when the law puts all of its mass at zero.
    pub fn degenerate_at_zero(&self) -> bool {
        match self {
            Self::Deterministic { value } => *value == 0.0,
            Self::DiscreteFinite { atoms } => atoms.iter().all(|a| a.value == 0.0),
            _ => false,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Gamma { shape, rate } => shape / rate,
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Deterministic { value } => *value,
            Self::DiscreteFinite { atoms } => atoms.iter().map(|a| a.prob * a.value).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::Gamma { shape, rate } => shape / (rate * rate),
            Self::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Self::Deterministic { .. } => 0.0,
            Self::DiscreteFinite { atoms } => {
                let m = self.mean();
                atoms.iter().map(|a| a.prob * (a.value - m) * (a.value - m)).sum()
            }
        }
    }

    /// Supremum of the MGF's convergence domain (`+inf` for bounded support).
    pub fn mgf_boundary(&self) -> f64 {
        match self {
            Self::Exponential { rate } | Self::Gamma { rate, .. } => *rate,
            _ => f64::INFINITY,
        }
    }

    /// `E e^{tX}`.
    pub fn mgf(&self, t: f64) -> Result<f64, MgfDiverges> {
        if t == 0.0 {
            return Ok(1.0);
        }
        let value = match self {
            Self::Exponential { rate } => {
                if t >= *rate {
                    return Err(MgfDiverges { t });
                }
                rate / (rate - t)
            }
            Self::Gamma { shape, rate } => {
                if t >= *rate {
                    return Err(MgfDiverges { t });
                }
                (rate / (rate - t)).powf(*shape)
            }
            Self::Uniform { lo, hi } => {
                let s = t * (hi - lo);
                let ratio = if s.abs() < UNIFORM_SERIES_CUTOFF {
                    1.0 + s / 2.0 + s * s / 6.0
                } else {
                    s.exp_m1() / s
                };
                (t * lo).exp() * ratio
            }
            Self::Deterministic { value } => (t * value).exp(),
            Self::DiscreteFinite { atoms } => {
                atoms.iter().map(|a| a.prob * (t * a.value).exp()).sum()
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(MgfDiverges { t })
        }
    }

    /// `ln E e^{tX}`, finite wherever the MGF converges even if `E e^{tX}`
    /// itself overflows.
    pub fn ln_mgf(&self, t: f64) -> Result<f64, MgfDiverges> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let value = match self {
            Self::Exponential { rate } => {
                if t >= *rate {
                    return Err(MgfDiverges { t });
                }
                -(-t / rate).ln_1p()
            }
            Self::Gamma { shape, rate } => {
                if t >= *rate {
                    return Err(MgfDiverges { t });
                }
                -shape * (-t / rate).ln_1p()
            }
            Self::Uniform { lo, hi } => {
                let s = t * (hi - lo);
                let ln_ratio = if s.abs() < UNIFORM_SERIES_CUTOFF {
                    (s / 2.0 + s * s / 6.0).ln_1p()
                } else if s > 0.0 {
                    // ln((e^s - 1) / s) = s + ln(1 - e^{-s}) - ln s
                    s + (-(-s).exp()).ln_1p() - s.ln()
                } else {
                    (-s.exp_m1()).ln() - (-s).ln()
                };
                t * lo + ln_ratio
            }
            Self::Deterministic { value } => t * value,
            Self::DiscreteFinite { atoms } => {
                let top = atoms.iter().map(|a| t * a.value).fold(f64::NEG_INFINITY, f64::max);
                top + atoms
                    .iter()
                    .map(|a| a.prob * (t * a.value - top).exp())
                    .sum::<f64>()
                    .ln()
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(MgfDiverges { t })
        }
    }

    /// `P(X > u)`.
    pub fn tail_prob(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 1.0;
        }
        match self {
            Self::Exponential { rate } => (-rate * u).exp(),
            Self::Gamma { shape, rate } => {
                if u == 0.0 {
                    1.0
                } else {
                    gamma_ur(*shape, rate * u)
                }
            }
            Self::Uniform { lo, hi } => {
                if u <= *lo {
                    1.0
                } else if u >= *hi {
                    0.0
                } else {
                    (hi - u) / (hi - lo)
                }
            }
            Self::Deterministic { value } => {
                if *value > u {
                    1.0
                } else {
                    0.0
                }
            }
            Self::DiscreteFinite { atoms } => {
                atoms.iter().filter(|a| a.value > u).map(|a| a.prob).sum()
            }
        }
    }

    /// `E(X 1{X > u})`.
    pub fn upper_trunc_mean(&self, u: f64) -> f64 {
        self.trunc_mean(u, false)
    }

    /// `E(X 1{X >= u})`. Differs from [`upper_trunc_mean`](Self::upper_trunc_mean)
    /// only when the law has an atom at `u`.
    pub fn upper_trunc_mean_inclusive(&self, u: f64) -> f64 {
        self.trunc_mean(u, true)
    }

    fn trunc_mean(&self, u: f64, inclusive: bool) -> f64 {
        let keep = |v: f64| if inclusive { v >= u } else { v > u };
        if u <= 0.0 && !matches!(self, Self::Deterministic { .. } | Self::DiscreteFinite { .. }) {
            return self.mean();
        }
        match self {
            Self::Exponential { rate } => (u + 1.0 / rate) * (-rate * u).exp(),
            // E(X 1{X > u}) = (shape / rate) Q(shape + 1, rate u)
            Self::Gamma { shape, rate } => (shape / rate) * gamma_ur(shape + 1.0, rate * u),
            Self::Uniform { lo, hi } => {
                if u <= *lo {
                    self.mean()
                } else if u >= *hi {
                    0.0
                } else {
                    (hi * hi - u * u) / (2.0 * (hi - lo))
                }
            }
            Self::Deterministic { value } => {
                if keep(*value) {
                    *value
                } else {
                    0.0
                }
            }
            Self::DiscreteFinite { atoms } => atoms
                .iter()
                .filter(|a| keep(a.value))
                .map(|a| a.prob * a.value)
                .sum(),
        }
    }

    /// Quantile function, `inf { x : F(x) >= p }` for `p` in `[0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Self::Exponential { rate } => -(-p).ln_1p() / rate,
            Self::Gamma { shape, rate } => gamma_quantile(*shape, p) / rate,
            Self::Uniform { lo, hi } => lo + p * (hi - lo),
            Self::Deterministic { value } => *value,
            Self::DiscreteFinite { atoms } => {
                let mut cum = 0.0;
                for a in atoms {
                    cum += a.prob;
                    if p < cum {
                        return a.value;
                    }
                }
                atoms[atoms.len() - 1].value
            }
        }
    }

    /// Draws one variate by inversion; always consumes exactly one uniform.
    #[inline]
    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        let u = stream.next_uniform();
        self.quantile(u)
    }
}

/// Inverse of the regularized lower incomplete gamma function in `x`, unit rate.
fn gamma_quantile(shape: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0_f64;
    let mut hi = shape.max(1.0);
    while gamma_lr(shape, hi) < p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::MAX;
        }
    }
    // Wilson-Hilferty starting point, clamped into the bracket.
    let z = statrs::function::erf::erfc_inv(2.0 * (1.0 - p)) * std::f64::consts::SQRT_2;
    let k = 1.0 / (9.0 * shape);
    let mut x = shape * (1.0 - k + z * k.sqrt()).powi(3);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    let log_norm = ln_gamma(shape);
    for _ in 0..200 {
        let f = gamma_lr(shape, x) - p;
        if f == 0.0 {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let density = ((shape - 1.0) * x.ln() - x - log_norm).exp();
        let newton = x - f / density;
        let next = if density > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}
