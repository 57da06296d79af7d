//! Exact reference values: forward dynamic programming for first passage of
//! lattice walks, and the classical exponential-claims Poisson closed form.

use serde::Serialize;
use thiserror::Error;

use crate::dist::DistributionSpec;
use crate::schedule::{ModelConfig, StepLaw};

/// Off-grid tolerance for increment atoms.
pub const GRID_TOL: f64 = 1e-12;
/// Target for the dropped mass when the lower cutoff is chosen automatically.
pub const CUTOFF_MASS_TARGET: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("increment atom {value} is not a multiple of the pitch {pitch}")]
    NotLattice { value: f64, pitch: f64 },
    #[error("step law {index} uses a {law} law; lattice models need discrete or deterministic laws")]
    NotDiscrete { index: usize, law: &'static str },
    #[error("grid pitch must be finite and > 0, got {0}")]
    BadPitch(f64),
    #[error("net profit condition fails: lambda / mu = {ratio} >= c = {c}")]
    NetProfitViolated { ratio: f64, c: f64 },
}

/// Increment law on `pitch * Z`: sorted `(multiple, probability)` pairs.
pub type LatticeLaw = Vec<(i64, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    pub pitch: f64,
    pub prefix: Vec<LatticeLaw>,
    pub cycle: Vec<LatticeLaw>,
}

fn atoms(d: &DistributionSpec, index: usize) -> Result<Vec<(f64, f64)>, OracleError> {
    match d {
        DistributionSpec::Deterministic { value } => Ok(vec![(*value, 1.0)]),
        DistributionSpec::DiscreteFinite { atoms } => Ok(atoms.iter().map(|a| (a.value, a.prob)).collect()),
        other => Err(OracleError::NotDiscrete {
            index,
            law: other.name(),
        }),
    }
}

/// Joint atoms of `Z - c theta` (unmerged).
pub fn increment_atoms(law: &StepLaw, c: f64, index: usize) -> Result<Vec<(f64, f64)>, OracleError> {
    let z = atoms(&law.claim, index)?;
    let t = atoms(&law.inter, index)?;
    Ok(z
        .iter()
        .flat_map(|&(zv, zp)| t.iter().map(move |&(tv, tp)| (zv - c * tv, zp * tp)))
        .collect())
}

fn float_gcd(mut a: f64, mut b: f64, tol: f64) -> f64 {
    while b > tol {
        let r = a % b;
        a = b;
        b = if r > b - tol { 0.0 } else { r };
    }
    a
}

impl LatticeModel {
    /// Restricts a model with discrete step laws to the lattice `pitch * Z`.
    /// With `pitch = None` the pitch is inferred as the common divisor of all
    /// increment atoms.
    pub fn from_model(m: &ModelConfig, pitch: Option<f64>) -> Result<Self, OracleError> {
        let c = m.premium;
        let s = &m.schedule;
        let raw: Vec<Vec<(f64, f64)>> = s
            .prefix
            .iter()
            .chain(&s.cycle)
            .enumerate()
            .map(|(i, l)| increment_atoms(l, c, i + 1))
            .collect::<Result<_, _>>()?;
        let pitch = match pitch {
            Some(h) if !(h.is_finite() && h > 0.0) => return Err(OracleError::BadPitch(h)),
            Some(h) => h,
            None => {
                let scale = raw
                    .iter()
                    .flatten()
                    .map(|a| a.0.abs())
                    .fold(0.0, f64::max);
                let g = raw
                    .iter()
                    .flatten()
                    .map(|a| a.0.abs())
                    .filter(|v| *v > 0.0)
                    .fold(0.0, |g, v| if g == 0.0 { v } else { float_gcd(g.max(v), g.min(v), 1e-9 * scale) });
                if g > 0.0 {
                    g
                } else {
                    1.0
                }
            }
        };
        let snap = |law: &Vec<(f64, f64)>| -> Result<LatticeLaw, OracleError> {
            let mut out: LatticeLaw = Vec::new();
            for &(v, p) in law {
                let k = (v / pitch).round();
                if (v - k * pitch).abs() > GRID_TOL * v.abs().max(1.0) {
                    return Err(OracleError::NotLattice { value: v, pitch });
                }
                let k = k as i64;
                match out.iter_mut().find(|e| e.0 == k) {
                    Some(e) => e.1 += p,
                    None => out.push((k, p)),
                }
            }
            out.sort_by_key(|e| e.0);
            Ok(out)
        };
        let laws: Vec<LatticeLaw> = raw.iter().map(snap).collect::<Result<_, _>>()?;
        let (prefix, cycle) = laws.split_at(s.prefix.len());
        Ok(Self {
            pitch,
            prefix: prefix.to_vec(),
            cycle: cycle.to_vec(),
        })
    }

    /// Increment law of step `i` (1-based).
    pub fn step(&self, i: usize) -> &LatticeLaw {
        if i <= self.prefix.len() {
            &self.prefix[i - 1]
        } else {
            &self.cycle[(i - self.prefix.len() - 1) % self.cycle.len()]
        }
    }

    fn laws(&self) -> impl Iterator<Item = &LatticeLaw> {
        self.prefix.iter().chain(&self.cycle)
    }

    /// Largest one-step standard deviation, in units of the pitch.
    fn max_step_sd(&self) -> f64 {
        self.laws()
            .map(|l| {
                let mean: f64 = l.iter().map(|&(k, p)| k as f64 * p).sum();
                l.iter()
                    .map(|&(k, p)| p * (k as f64 - mean).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    fn max_up(&self) -> i64 {
        self.laws().flat_map(|l| l.iter().map(|e| e.0)).max().unwrap_or(0).max(0)
    }

    fn max_down(&self) -> i64 {
        (-self.laws().flat_map(|l| l.iter().map(|e| e.0)).min().unwrap_or(0)).max(0)
    }

    /// Index of the absorbing barrier: the smallest `k` with `k * pitch > x`.
    pub fn barrier_index(&self, x: f64) -> i64 {
        let q = x / self.pitch;
        let r = q.round();
        if (q - r).abs() <= 1e-9 {
            r as i64 + 1
        } else {
            q.floor() as i64 + 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupProb {
    /// `P(max_{n <= n_max} S_n > x)`.
    pub prob: f64,
    /// Mass dropped below the lower cutoff; bounds the error of `prob`.
    pub cutoff_mass: f64,
    /// Cutoff depth actually used, in pitch units.
    pub lower_cutoff: u64,
    /// Largest `|retained + absorbed + dropped - 1|` seen over all steps.
    pub conservation_error: f64,
}

/// Finite-horizon first passage above `x`, exact up to the dropped mass.
///
/// With `lower_cutoff = None` the depth starts at `x + 40 sd sqrt(n_max)` and
/// doubles until the dropped mass is below [`CUTOFF_MASS_TARGET`].
pub fn exact_sup_prob(lm: &LatticeModel, x: f64, n_max: usize, lower_cutoff: Option<u64>) -> SupProb {
    assert!(x >= 0.0, "x must be nonnegative");
    match lower_cutoff {
        Some(l) => sup_prob_dp(lm, x, n_max, l),
        None => {
            let sd = lm.max_step_sd();
            let mut l = ((x / lm.pitch) + 40.0 * sd * (n_max as f64).sqrt()).ceil().max(1.0) as u64;
            loop {
                let r = sup_prob_dp(lm, x, n_max, l);
                if r.cutoff_mass < CUTOFF_MASS_TARGET {
                    return r;
                }
                l *= 2;
            }
        }
    }
}

fn sup_prob_dp(lm: &LatticeModel, x: f64, n_max: usize, lower_cutoff: u64) -> SupProb {
    let barrier = lm.barrier_index(x);
    let reach_up = lm.max_up().saturating_mul(n_max as i64);
    if reach_up < barrier {
        return SupProb {
            prob: 0.0,
            cutoff_mass: 0.0,
            lower_cutoff,
            conservation_error: 0.0,
        };
    }
    // Positions below -reach_down are unreachable; no need to store them.
    let reach_down = lm.max_down().saturating_mul(n_max as i64);
    let floor = -(lower_cutoff as i64).min(reach_down);
    let width = (barrier - floor) as usize;
    let offset = -floor;

    let mut cur = vec![0.0_f64; width];
    let mut next = vec![0.0_f64; width];
    cur[offset as usize] = 1.0;
    let (mut lo, mut hi) = (offset as usize, offset as usize);
    let mut absorbed = 0.0_f64;
    let mut dropped = 0.0_f64;
    let mut conservation_error = 0.0_f64;

    for n in 1..=n_max {
        let law = lm.step(n);
        let (mut nlo, mut nhi) = (usize::MAX, 0usize);
        for (j, slot) in cur.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let mass = std::mem::take(slot);
            if mass == 0.0 {
                continue;
            }
            for &(k, p) in law {
                let target = j as i64 + k;
                if target >= width as i64 {
                    absorbed += mass * p;
                } else if target < 0 {
                    dropped += mass * p;
                } else {
                    let t = target as usize;
                    next[t] += mass * p;
                    nlo = nlo.min(t);
                    nhi = nhi.max(t);
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        if nlo == usize::MAX {
            let total = absorbed + dropped;
            conservation_error = conservation_error.max((total - 1.0).abs());
            break;
        }
        lo = nlo;
        hi = nhi;
        let retained: f64 = cur[lo..=hi].iter().sum();
        conservation_error = conservation_error.max((retained + absorbed + dropped - 1.0).abs());
    }
    SupProb {
        prob: absorbed,
        cutoff_mass: dropped,
        lower_cutoff,
        conservation_error,
    }
}

/// Ruin probability for exponential(`mu`) claims arriving at Poisson rate
/// `lambda` with premium rate `c`: `(lambda / (c mu)) exp(-(mu - lambda / c) x)`.
pub fn closed_form_cramer_lundberg(lambda: f64, mu: f64, c: f64, x: f64) -> Result<f64, OracleError> {
    let ratio = lambda / mu;
    if ratio >= c {
        return Err(OracleError::NetProfitViolated { ratio, c });
    }
    Ok(lambda / (c * mu) * (-(mu - lambda / c) * x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Schedule;
    use DistributionSpec as D;

    fn gamblers() -> ModelConfig {
        ModelConfig::new(
            Schedule::homogeneous(StepLaw::new(
                D::discrete(&[(0.0, 0.6), (2.0, 0.4)]),
                D::deterministic(1.0),
            )),
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn lattice_inference() {
        let lm = LatticeModel::from_model(&gamblers(), None).unwrap();
        assert_eq!(lm.pitch, 1.0);
        assert_eq!(lm.cycle[0], vec![(-1, 0.6), (1, 0.4)]);
    }

    #[test]
    fn off_grid_rejected() {
        let m = gamblers();
        assert!(matches!(
            LatticeModel::from_model(&m, Some(0.7)),
            Err(OracleError::NotLattice { .. })
        ));
        let cont = ModelConfig::new(
            Schedule::homogeneous(StepLaw::new(D::exponential(1.0), D::deterministic(1.0))),
            2.0,
            0.5,
        )
        .unwrap();
        assert!(matches!(
            LatticeModel::from_model(&cont, None),
            Err(OracleError::NotDiscrete { index: 1, .. })
        ));
    }

    #[test]
    fn gamblers_ruin_supremum_law() {
        let lm = LatticeModel::from_model(&gamblers(), None).unwrap();
        let r = exact_sup_prob(&lm, 0.0, 5000, Some(400));
        assert!((r.prob - 2.0 / 3.0).abs() < 1e-3);
        let r = exact_sup_prob(&lm, 2.0, 5000, None);
        assert!((r.prob - 8.0 / 27.0).abs() < 1e-3);
        assert!(r.cutoff_mass < CUTOFF_MASS_TARGET);
        assert!(r.conservation_error < 1e-12);
    }

    #[test]
    fn unreachable_barrier_is_zero() {
        let lm = LatticeModel::from_model(&gamblers(), None).unwrap();
        let r = exact_sup_prob(&lm, 1e9, 100, None);
        assert_eq!(r.prob, 0.0);
    }

    #[test]
    fn barrier_is_strict() {
        let lm = LatticeModel::from_model(&gamblers(), None).unwrap();
        assert_eq!(lm.barrier_index(0.0), 1);
        assert_eq!(lm.barrier_index(2.0), 3);
        assert_eq!(lm.barrier_index(2.5), 3);
        let fine = LatticeModel {
            pitch: 0.1,
            prefix: vec![],
            cycle: vec![vec![(-1, 0.5), (1, 0.5)]],
        };
        assert_eq!(fine.barrier_index(2.0), 21);
    }

    #[test]
    fn one_step_by_hand() {
        let lm = LatticeModel::from_model(&gamblers(), None).unwrap();
        assert!((exact_sup_prob(&lm, 0.0, 1, None).prob - 0.4).abs() < 1e-15);
        // reaching +2 within three steps requires two initial up-steps
        assert!((exact_sup_prob(&lm, 1.0, 3, None).prob - 0.16).abs() < 1e-15);
    }

    #[test]
    fn cramer_lundberg_values() {
        assert_eq!(closed_form_cramer_lundberg(1.0, 1.0, 2.0, 0.0).unwrap(), 0.5);
        let v = closed_form_cramer_lundberg(1.0, 1.0, 2.0, 2.0).unwrap();
        assert!((v - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert!(closed_form_cramer_lundberg(1.0, 1.0, 2.0, 1e4).unwrap() < 1e-300);
        assert!(closed_form_cramer_lundberg(2.0, 1.0, 2.0, 0.0).is_err());
    }
}
