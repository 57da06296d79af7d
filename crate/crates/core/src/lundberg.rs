//! Explicit exponential ruin bounds.
//!
//! Three pieces live here:
//!
//! * the adjustment coefficient of a homogeneous model (root of
//!   `E exp(R (Z - c theta)) = 1`), and its cycle analogue for periodic
//!   schedules;
//! * the constants pipeline that turns a model satisfying the exponential
//!   moment, truncated moment and negative drift conditions into
//!   `P(sup_k S_k > x) <= c3 exp(-c4 x)` for every `x >= 0`;
//! * the final assembly `psi(x) <= exp(-c1 x)` for `x >= c2`.
//!
//! Two bivariate moments of `eta = Z - c theta` enter the pipeline. Both are
//! replaced by univariate upper bounds, which can only shrink `y*` and grow
//! `c3`, so the resulting bound stays valid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::DistributionSpec;
use crate::schedule::{ModelConfig, DRIFT_TOL};

/// `y*` below this is reported as a vacuous bound.
pub const Y_STAR_FLOOR: f64 = 1e-300;
/// Relative bisection tolerance for `y*`.
pub const Y_STAR_REL_TOL: f64 = 1e-9;
/// Absolute bisection tolerance for `c5`.
pub const C5_TOL: f64 = 1e-10;
/// Number of candidate exponents in the `delta` grid search.
pub const DELTA_GRID_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LundbergError {
    #[error("cycle drift {0} is not strictly negative")]
    DriftNotNegative(f64),
    #[error("sup E exp(delta eta) diverges at delta = {0}; choose a smaller delta")]
    MgfDiverges(f64),
    #[error("y* underflowed below {Y_STAR_FLOOR}; the bound is vacuous")]
    VacuousBound,
    #[error("delta = {delta} must lie in (0, gamma] = (0, {gamma}]")]
    BadDelta { delta: f64, gamma: f64 },
    #[error("model conditions fail: {}", .0.join("; "))]
    ConditionsFail(Vec<String>),
    #[error("net profit condition fails: mean increment {0} >= 0")]
    NetProfitViolated(f64),
    #[error("no positive root of the Lundberg equation inside the MGF domain")]
    NoRootInDomain,
    #[error("no delta on the search grid produced a bound")]
    EmptyDeltaGrid,
}

/// `max_i E exp(delta eta_i) = max_i E exp(delta Z_i) E exp(-c delta theta_i)`.
pub fn sup_eta_mgf(m: &ModelConfig, delta: f64) -> Result<f64, LundbergError> {
    let mut sup = 0.0_f64;
    for law in m.schedule.distinct_laws() {
        let z = law
            .claim
            .mgf(delta)
            .map_err(|_| LundbergError::MgfDiverges(delta))?;
        let t = law
            .inter
            .mgf(-m.premium * delta)
            .map_err(|_| LundbergError::MgfDiverges(delta))?;
        sup = sup.max(z * t);
    }
    Ok(sup)
}

/// Smallest `v0 >= 0` with `exp(delta v / 2) >= v^2` for every `v >= v0`.
pub fn c5_of_delta(delta: f64) -> f64 {
    assert!(delta > 0.0, "delta must be positive");
    // phi(v) = ln(e^{delta v/2} / v^2) is minimized at v = 4/delta and increasing after.
    let phi = |v: f64| 0.5 * delta * v - 2.0 * v.ln();
    let lo0 = 4.0 / delta;
    if phi(lo0) > 1e-12 {
        return 0.0;
    }
    let mut lo = lo0;
    let mut hi = 2.0 * lo0;
    while phi(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > C5_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Upper bound for `sup_i E(|eta_i| 1{eta_i < 0})`, via `|eta| 1{eta < 0} <= c theta`.
pub fn neg_part_mean_bound(m: &ModelConfig) -> f64 {
    m.premium
        * m.schedule
            .distinct_laws()
            .iter()
            .map(|l| l.inter.mean())
            .fold(0.0, f64::max)
}

/// Upper bound for `sup_i E(|eta_i| 1{eta_i <= -u})`:
/// `max_i [ E Z_i P(theta_i > u/(2c)) + c E(theta_i 1{theta_i >= u/c}) ]`.
pub fn trunc_surrogate(m: &ModelConfig, u: f64) -> f64 {
    let c = m.premium;
    m.schedule
        .distinct_laws()
        .iter()
        .map(|l| {
            l.claim.mean() * l.inter.tail_prob(u / (2.0 * c))
                + c * l.inter.upper_trunc_mean_inclusive(u / c)
        })
        .fold(0.0, f64::max)
}

/// Constants `alpha(y)` depends on besides the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaInputs {
    pub delta: f64,
    pub c5: f64,
    pub sup_mgf: f64,
    /// Multiplier (>= 1) applied to the truncated-moment surrogate.
    pub surrogate_scale: f64,
}

/// Remainder control function, for `0 < y <= delta / 2`:
/// `2 S(y^{-1/4}) + sqrt(y)/2 + (y/2)(c5^2 + 1) sup E exp(delta eta)`.
pub fn alpha(m: &ModelConfig, k: &AlphaInputs, y: f64) -> f64 {
    let u = y.powf(-0.25);
    2.0 * k.surrogate_scale * trunc_surrogate(m, u)
        + 0.5 * y.sqrt()
        + 0.5 * y * (k.c5 * k.c5 + 1.0) * k.sup_mgf
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub surrogate_scale: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            surrogate_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaConstants {
    pub delta: f64,
    pub c5: f64,
    pub y_hat: f64,
    pub c6: f64,
    #[serde(rename = "M")]
    pub m: u64,
    pub y_star: f64,
    pub big_delta: f64,
    /// `None` when `c3` overflows; `ln_c3` is always present.
    pub c3: Option<f64>,
    pub ln_c3: f64,
    pub c4: f64,
    /// `sup_i E exp(delta eta_i)`.
    pub sup_eta_mgf: f64,
    /// Bound used for `sup_i E(|eta_i| 1{eta_i < 0})`.
    pub neg_part_bound: f64,
    pub surrogate_scale: f64,
    /// `alpha(y_star)` as computed by the pipeline.
    pub alpha_at_y_star: f64,
    /// `B = max_k |S_k - k mbar|`, from one prefix + two cycle unrolling.
    pub drift_deviation_bound: f64,
    /// Last index scanned when certifying `M`.
    pub m_scan_limit: u64,
}

impl LemmaConstants {
    pub fn alpha_inputs(&self) -> AlphaInputs {
        AlphaInputs {
            delta: self.delta,
            c5: self.c5,
            sup_mgf: self.sup_eta_mgf,
            surrogate_scale: self.surrogate_scale,
        }
    }

    /// `min{1, c3 exp(-c4 x)}`, evaluated in log space.
    pub fn bound_at(&self, x: f64) -> f64 {
        let ln = self.ln_c3 - self.c4 * x;
        if ln >= 0.0 {
            1.0
        } else {
            ln.exp()
        }
    }
}

/// `ln(sum_{k=1}^{m} D^k + e^a / (e^a - 1))` with `a = y* c6 / 4`.
pub(crate) fn ln_c3(big_delta: f64, m: u64, a: f64) -> f64 {
    let ld = big_delta.ln();
    // sum_{k=1}^m D^k = D (D^m - 1) / (D - 1)
    let mf = m as f64;
    let ln_geom_head = ld + mf * ld + (-(-mf * ld).exp()).ln_1p() - (big_delta - 1.0).ln();
    // e^a / (e^a - 1) = 1 / (1 - e^{-a})
    let ln_tail = -(-(-a).exp_m1()).ln();
    log_add(ln_geom_head, ln_tail)
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Result of the `M` certification scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCertificate {
    pub m: u64,
    pub deviation_bound: f64,
    pub scan_limit: u64,
}

/// Smallest `M >= 1` with `S_k / k <= -c6/2` for all `k >= M + 1`.
///
/// `|S_k - k mbar|` is periodic past the prefix, so `B` from a short unroll
/// bounds it for every `k`; then `k >= 2B/c6` satisfies the inequality and
/// only finitely many indices need scanning.
pub fn certify_m(m: &ModelConfig, c6: f64) -> MCertificate {
    let mbar = -c6;
    let unroll = m.schedule.prefix.len() + 2 * m.schedule.cycle.len();
    let mut s = 0.0;
    let mut b = 0.0_f64;
    for k in 1..=unroll {
        s += m.step_mean(k);
        b = b.max((s - k as f64 * mbar).abs());
    }
    let cutoff = (2.0 * b / c6).ceil() as u64;
    let scan_limit = cutoff + m.schedule.cycle.len() as u64;
    let mut s = 0.0;
    let mut last_violation = 0;
    for k in 1..=scan_limit {
        s += m.step_mean(k as usize);
        if s / k as f64 > -0.5 * c6 {
            last_violation = k;
        }
    }
    MCertificate {
        m: last_violation.max(1),
        deviation_bound: b,
        scan_limit,
    }
}

/// Largest `y` in `(0, y_hat]` with `alpha(y) <= target`, to relative tolerance.
fn solve_y_star(
    m: &ModelConfig,
    k: &AlphaInputs,
    y_hat: f64,
    target: f64,
) -> Result<(f64, f64), LundbergError> {
    let a_hat = alpha(m, k, y_hat);
    if a_hat <= target {
        return Ok((y_hat, a_hat));
    }
    let mut hi = y_hat;
    let mut lo = 0.5 * y_hat;
    let mut a_lo = alpha(m, k, lo);
    while a_lo > target {
        hi = lo;
        lo *= 0.5;
        if lo < Y_STAR_FLOOR {
            return Err(LundbergError::VacuousBound);
        }
        a_lo = alpha(m, k, lo);
    }
    while hi - lo > Y_STAR_REL_TOL * lo {
        let mid = 0.5 * (lo + hi);
        let a_mid = alpha(m, k, mid);
        if a_mid <= target {
            lo = mid;
            a_lo = a_mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, a_lo))
}

pub fn lemma_constants(m: &ModelConfig, delta: f64) -> Result<LemmaConstants, LundbergError> {
    lemma_constants_with(m, delta, &PipelineOptions::default())
}

pub fn lemma_constants_with(
    m: &ModelConfig,
    delta: f64,
    opts: &PipelineOptions,
) -> Result<LemmaConstants, LundbergError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(LundbergError::BadDelta {
            delta,
            gamma: m.gamma,
        });
    }
    let drift = m.cycle_drift();
    if drift >= -DRIFT_TOL {
        return Err(LundbergError::DriftNotNegative(drift));
    }
    let c6 = -drift;
    let sup_mgf = sup_eta_mgf(m, delta)?;
    let c5 = c5_of_delta(delta);
    let neg_part_bound = neg_part_mean_bound(m);
    let y_hat = (0.5 * delta).min(1.0 / (2.0 * neg_part_bound));

    let inputs = AlphaInputs {
        delta,
        c5,
        sup_mgf,
        surrogate_scale: opts.surrogate_scale,
    };
    let (y_star, alpha_at_y_star) = solve_y_star(m, &inputs, y_hat, 0.25 * c6)?;

    let mc = certify_m(m, c6);
    let big_delta = 1.0 + sup_mgf;
    let ln_c3 = ln_c3(big_delta, mc.m, 0.25 * y_star * c6);
    let c3 = Some(ln_c3.exp()).filter(|v| v.is_finite());

    Ok(LemmaConstants {
        delta,
        c5,
        y_hat,
        c6,
        m: mc.m,
        y_star,
        big_delta,
        c3,
        ln_c3,
        c4: y_star,
        sup_eta_mgf: sup_mgf,
        neg_part_bound,
        surrogate_scale: opts.surrogate_scale,
        alpha_at_y_star,
        drift_deviation_bound: mc.deviation_bound,
        m_scan_limit: mc.scan_limit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuinBound {
    pub c1: f64,
    pub c2: f64,
    /// Lemma prefactor under its ruin-probability name (`c7 = c3`).
    pub c7: Option<f64>,
    /// Lemma rate under its ruin-probability name (`c8 = c4`).
    pub c8: f64,
    pub lemma: LemmaConstants,
}

impl RuinBound {
    pub fn from_lemma(lemma: LemmaConstants) -> Self {
        Self {
            c1: 0.5 * lemma.c4,
            c2: (2.0 * lemma.ln_c3 / lemma.c4).max(0.0),
            c7: lemma.c3,
            c8: lemma.c4,
            lemma,
        }
    }

    /// `exp(-c1 x)` for `x >= c2`, `None` below the applicability threshold.
    pub fn bound_at(&self, x: f64) -> Option<f64> {
        (x >= self.c2).then(|| (-self.c1 * x).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions {
    /// Use this exponent instead of `gamma`; must lie in `(0, gamma]`.
    pub delta: Option<f64>,
    /// Search a grid of exponents in `(0, gamma]` for the largest `c1`.
    pub grid_search: bool,
    pub surrogate_scale: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            delta: None,
            grid_search: false,
            surrogate_scale: 1.0,
        }
    }
}

pub fn ruin_bound(m: &ModelConfig) -> Result<RuinBound, LundbergError> {
    ruin_bound_with(m, &BoundOptions::default())
}

pub fn ruin_bound_with(m: &ModelConfig, opts: &BoundOptions) -> Result<RuinBound, LundbergError> {
    let report = m.check_conditions();
    if !report.all_hold() {
        return Err(LundbergError::ConditionsFail(report.violations));
    }
    let pipeline = PipelineOptions {
        surrogate_scale: opts.surrogate_scale,
    };
    if opts.grid_search {
        return grid_search_delta(m, &pipeline);
    }
    let delta = match opts.delta {
        Some(d) if !(d > 0.0 && d <= m.gamma) => {
            return Err(LundbergError::BadDelta {
                delta: d,
                gamma: m.gamma,
            })
        }
        Some(d) => d,
        None => m.gamma,
    };
    lemma_constants_with(m, delta, &pipeline).map(RuinBound::from_lemma)
}

/// Evaluates `delta = gamma k / n` for `k = 1..=n` and keeps the largest `c1`;
/// ties go to the smaller `delta`.
fn grid_search_delta(m: &ModelConfig, opts: &PipelineOptions) -> Result<RuinBound, LundbergError> {
    let candidates: Vec<Option<RuinBound>> = (1..=DELTA_GRID_POINTS)
        .into_par_iter()
        .map(|k| {
            let delta = m.gamma * k as f64 / DELTA_GRID_POINTS as f64;
            lemma_constants_with(m, delta, opts)
                .ok()
                .map(RuinBound::from_lemma)
        })
        .collect();
    let mut best: Option<RuinBound> = None;
    for cand in candidates.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| cand.c1 > b.c1) {
            best = Some(cand);
        }
    }
    best.ok_or(LundbergError::EmptyDeltaGrid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentCoefficient {
    pub r: f64,
    /// `|E exp(R (Z - c theta)) - 1|` at the returned root.
    pub residual: f64,
    /// Claim MGF blow-up point; `None` when the MGF is entire.
    pub t_max: Option<f64>,
}

/// Root `R > 0` of `E exp(R (Z - c theta)) = 1` for a homogeneous model.
pub fn adjustment_coefficient(
    claim: &DistributionSpec,
    inter: &DistributionSpec,
    c: f64,
) -> Result<AdjustmentCoefficient, LundbergError> {
    let drift = claim.mean() - c * inter.mean();
    if drift >= -DRIFT_TOL {
        return Err(LundbergError::NetProfitViolated(drift));
    }
    let t_max = claim.mgf_boundary();
    // ln E exp(t eta); same sign as E exp(t eta) - 1 and free of overflow
    let g = |t: f64| -> Option<f64> { Some(claim.ln_mgf(t).ok()? + inter.ln_mgf(-c * t).ok()?) };
    let r = convex_root(g, t_max)?;
    Ok(AdjustmentCoefficient {
        r,
        residual: g(r).map(|v| v.exp_m1().abs()).unwrap_or(f64::INFINITY),
        t_max: t_max.is_finite().then_some(t_max),
    })
}

/// Decay rate `R > 0` solving `prod_j E exp(R eta_j) = 1` over one cycle,
/// together with the largest partial product over all cycle rotations and
/// lengths. Past the prefix, `P(sup_k (S_{n+k} - S_n) > a) <= K exp(-R a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleDecay {
    pub r: f64,
    pub max_partial_product: f64,
}

pub fn cycle_decay(m: &ModelConfig) -> Result<CycleDecay, LundbergError> {
    let drift = m.cycle_drift();
    if drift >= -DRIFT_TOL {
        return Err(LundbergError::NetProfitViolated(drift));
    }
    let cycle = &m.schedule.cycle;
    let c = m.premium;
    let step_ln_mgf = |j: usize, t: f64| -> Option<f64> {
        let l = &cycle[j];
        Some(l.claim.ln_mgf(t).ok()? + l.inter.ln_mgf(-c * t).ok()?)
    };
    let t_max = cycle
        .iter()
        .map(|l| l.claim.mgf_boundary())
        .fold(f64::INFINITY, f64::min);
    let g = |t: f64| -> Option<f64> { (0..cycle.len()).map(|j| step_ln_mgf(j, t)).sum() };
    let r = convex_root(g, t_max)?;
    let n = cycle.len();
    let factors: Vec<f64> = (0..n)
        .map(|j| step_ln_mgf(j, r).map(f64::exp).ok_or(LundbergError::NoRootInDomain))
        .collect::<Result<_, _>>()?;
    let mut k_max = 1.0_f64;
    for start in 0..n {
        let mut p = 1.0;
        for len in 0..n {
            p *= factors[(start + len) % n];
            k_max = k_max.max(p);
        }
    }
    Ok(CycleDecay {
        r,
        max_partial_product: k_max,
    })
}

/// Positive root of a convex `f` with `f(0) = 0`, `f'(0) < 0` on `(0, t_max)`.
/// `f` returns `None` where an MGF diverges, treated as `+inf`.
fn convex_root<F>(f: F, t_max: f64) -> Result<f64, LundbergError>
where
    F: Fn(f64) -> Option<f64>,
{
    let positive = |t: f64| f(t).is_none_or(|v| v > 0.0);
    let (mut lo, mut hi);
    if t_max.is_finite() {
        let start = 0.5 * t_max;
        if positive(start) {
            hi = start;
            lo = 0.5 * start;
            let mut n = 0;
            while positive(lo) {
                hi = lo;
                lo *= 0.5;
                n += 1;
                if n > 1100 {
                    return Err(LundbergError::NoRootInDomain);
                }
            }
        } else {
            lo = start;
            let mut gap = 0.5 * (t_max - start);
            hi = t_max - gap;
            let mut n = 0;
            while !positive(hi) {
                lo = hi;
                gap *= 0.5;
                hi = t_max - gap;
                n += 1;
                if n > 60 || hi >= t_max {
                    return Err(LundbergError::NoRootInDomain);
                }
            }
        }
    } else {
        lo = 0.0;
        hi = 1.0;
        let mut n = 0;
        while !positive(hi) {
            lo = hi;
            hi *= 2.0;
            n += 1;
            if n > 1000 {
                return Err(LundbergError::NoRootInDomain);
            }
        }
        if lo == 0.0 {
            lo = 0.5;
            let mut n = 0;
            while positive(lo) {
                hi = lo;
                lo *= 0.5;
                n += 1;
                if n > 1100 {
                    return Err(LundbergError::NoRootInDomain);
                }
            }
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            break;
        }
        if positive(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    if r > 0.0 {
        Ok(r)
    } else {
        Err(LundbergError::NoRootInDomain)
    }
}
