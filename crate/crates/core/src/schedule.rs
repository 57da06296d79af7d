//! Inhomogeneous step laws encoded as a finite prefix followed by a repeating
//! cycle, plus the checks for the three sufficient conditions of the ruin bound.
//!
//! Because the law set is finite, every `sup` over step indices is a maximum
//! over distinct laws and every `limsup` of running averages is the cycle
//! average.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistError, DistributionSpec};

/// C3 must hold with this much room: drift `< -DRIFT_TOL`.
pub const DRIFT_TOL: f64 = 1e-12;

/// Thresholds at which the C2 decay of `E(theta 1{theta > u})` is reported.
pub const C2_DIAGNOSTIC_GRID: [f64; 3] = [1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepLaw {
    /// Law of the claim size `Z_i`.
    pub claim: DistributionSpec,
    /// Law of the interarrival time `theta_i`.
    pub inter: DistributionSpec,
}

impl StepLaw {
    pub fn new(claim: DistributionSpec, inter: DistributionSpec) -> Self {
        Self { claim, inter }
    }

    /// `E Z - c E theta`.
    pub fn mean_increment(&self, premium: f64) -> f64 {
        self.claim.mean() - premium * self.inter.mean()
    }

    fn validate(&self) -> Result<(), ModelError> {
        self.claim.validate().map_err(|source| ModelError::Law {
            role: "claim",
            source,
        })?;
        self.inter.validate().map_err(|source| ModelError::Law {
            role: "inter",
            source,
        })?;
        if self.inter.degenerate_at_zero() {
            return Err(ModelError::DegenerateInterarrival);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default)]
    pub prefix: Vec<StepLaw>,
    pub cycle: Vec<StepLaw>,
}

impl Schedule {
    pub fn homogeneous(law: StepLaw) -> Self {
        Self {
            prefix: Vec::new(),
            cycle: vec![law],
        }
    }

    pub fn new(prefix: Vec<StepLaw>, cycle: Vec<StepLaw>) -> Self {
        Self { prefix, cycle }
    }

    /// The law of step `i` (1-based).
    ///
    /// # Panics
    /// If `i == 0`.
    pub fn law_at(&self, i: usize) -> &StepLaw {
        assert!(i >= 1, "step indices start at 1");
        if i <= self.prefix.len() {
            &self.prefix[i - 1]
        } else {
            &self.cycle[(i - self.prefix.len() - 1) % self.cycle.len()]
        }
    }

    /// Distinct laws among prefix and cycle, in first-appearance order.
    pub fn distinct_laws(&self) -> Vec<&StepLaw> {
        let mut out: Vec<&StepLaw> = Vec::new();
        for law in self.prefix.iter().chain(&self.cycle) {
            if !out.contains(&law) {
                out.push(law);
            }
        }
        out
    }

    pub fn is_homogeneous(&self) -> bool {
        self.distinct_laws().len() == 1
    }

    /// Length of the shortest unrolling that visits every law: prefix plus one cycle.
    pub fn period_span(&self) -> usize {
        self.prefix.len() + self.cycle.len()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("premium rate must be finite and > 0, got {0}")]
    BadPremium(f64),
    #[error("gamma must be finite and > 0, got {0}")]
    BadGamma(f64),
    #[error("schedule cycle must contain at least one step law")]
    EmptyCycle,
    #[error("invalid {role} law: {source}")]
    Law {
        role: &'static str,
        #[source]
        source: DistError,
    },
    #[error("interarrival law is degenerate at zero")]
    DegenerateInterarrival,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub schedule: Schedule,
    /// Premium rate `c`.
    pub premium: f64,
    /// Exponent of the claim exponential-moment condition.
    pub gamma: f64,
}

impl ModelConfig {
    pub fn new(schedule: Schedule, premium: f64, gamma: f64) -> Result<Self, ModelError> {
        let m = Self {
            schedule,
            premium,
            gamma,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.premium.is_finite() && self.premium > 0.0) {
            return Err(ModelError::BadPremium(self.premium));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(ModelError::BadGamma(self.gamma));
        }
        if self.schedule.cycle.is_empty() {
            return Err(ModelError::EmptyCycle);
        }
        for law in self.schedule.prefix.iter().chain(&self.schedule.cycle) {
            law.validate()?;
        }
        Ok(())
    }

    pub fn law_at(&self, i: usize) -> &StepLaw {
        self.schedule.law_at(i)
    }

    /// `E Z_i - c E theta_i`.
    pub fn step_mean(&self, i: usize) -> f64 {
        self.law_at(i).mean_increment(self.premium)
    }

    /// Average step mean over one cycle; the limit of running average drifts.
    pub fn cycle_drift(&self) -> f64 {
        let cycle = &self.schedule.cycle;
        cycle.iter().map(|l| l.mean_increment(self.premium)).sum::<f64>() / cycle.len() as f64
    }

    pub fn check_conditions(&self) -> ConditionReport {
        let laws = self.schedule.distinct_laws();
        let mut violations = Vec::new();

        let mut c1_sup = Some(0.0_f64);
        for law in &laws {
            match law.claim.mgf(self.gamma) {
                Ok(v) => c1_sup = c1_sup.map(|s| s.max(v)),
                Err(_) => {
                    c1_sup = None;
                    violations.push(format!(
                        "C1: E exp(gamma Z) diverges at gamma = {} for claim law {} (MGF boundary {})",
                        self.gamma,
                        law.claim.name(),
                        law.claim.mgf_boundary()
                    ));
                }
            }
        }
        let c1_holds = c1_sup.is_some();

        // Uniformity over i reduces to a max over finitely many laws, each with
        // a finite mean, so the truncated first moment decays to zero.
        let means_finite = laws.iter().all(|l| l.inter.mean().is_finite());
        let c2_decay: Vec<C2Decay> = C2_DIAGNOSTIC_GRID
            .iter()
            .map(|&u| C2Decay {
                u,
                sup_trunc_mean: laws
                    .iter()
                    .map(|l| l.inter.upper_trunc_mean(u))
                    .fold(0.0, f64::max),
            })
            .collect();
        let c2_holds = means_finite;
        if !c2_holds {
            violations.push("C2: an interarrival law has infinite mean".to_string());
        }

        let cycle_drift = self.cycle_drift();
        let c3_holds = cycle_drift < -DRIFT_TOL;
        if !c3_holds {
            violations.push(format!(
                "C3: cycle drift {cycle_drift} is not strictly negative (net profit fails)"
            ));
        }

        ConditionReport {
            c1_holds,
            c1_sup_mgf: c1_sup,
            c2_holds,
            c2_note: format!(
                "{} distinct interarrival laws with finite means; sup E(theta 1{{theta > u}}) -> 0",
                laws.len()
            ),
            c2_decay,
            c3_holds,
            cycle_drift,
            violations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2Decay {
    pub u: f64,
    pub sup_trunc_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub c1_holds: bool,
    /// `max_i E exp(gamma Z_i)`, absent when it diverges.
    pub c1_sup_mgf: Option<f64>,
    pub c2_holds: bool,
    pub c2_note: String,
    pub c2_decay: Vec<C2Decay>,
    pub c3_holds: bool,
    pub cycle_drift: f64,
    pub violations: Vec<String>,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.c1_holds && self.c2_holds && self.c3_holds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DistributionSpec as D;

    fn exp_exp(c: f64, gamma: f64) -> ModelConfig {
        ModelConfig::new(
            Schedule::homogeneous(StepLaw::new(D::exponential(1.0), D::exponential(1.0))),
            c,
            gamma,
        )
        .unwrap()
    }

    fn tagged(v: f64) -> StepLaw {
        StepLaw::new(D::deterministic(v), D::deterministic(1.0))
    }

    #[test]
    fn law_at_examples() {
        let (a, b, c) = (tagged(1.0), tagged(2.0), tagged(3.0));
        let s = Schedule::new(vec![a.clone()], vec![b.clone(), c.clone()]);
        assert_eq!(s.law_at(1), &a);
        assert_eq!(s.law_at(2), &b);
        assert_eq!(s.law_at(3), &c);
        assert_eq!(s.law_at(4), &b);
        let h = Schedule::homogeneous(b.clone());
        for i in 1..20 {
            assert_eq!(h.law_at(i), &b);
        }
    }

    #[test]
    fn step_means_and_drift() {
        let m = exp_exp(2.0, 0.5);
        assert_eq!(m.step_mean(1), -1.0);
        assert_eq!(m.cycle_drift(), -1.0);

        let zero = ModelConfig::new(
            Schedule::homogeneous(StepLaw::new(D::deterministic(0.0), D::exponential(1.0))),
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(zero.step_mean(3), -1.0);

        // per-step means -1 and +0.2 with c = 1
        let alt = ModelConfig::new(
            Schedule::new(
                vec![],
                vec![
                    StepLaw::new(D::deterministic(0.0), D::deterministic(1.0)),
                    StepLaw::new(D::deterministic(1.2), D::deterministic(1.0)),
                ],
            ),
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(alt.step_mean(1), -1.0);
        assert!((alt.step_mean(2) - 0.2).abs() < 1e-15);
        assert!((alt.cycle_drift() + 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_drift_fails_c3() {
        let m = ModelConfig::new(
            Schedule::new(
                vec![],
                vec![
                    StepLaw::new(D::deterministic(2.0), D::deterministic(1.0)),
                    StepLaw::new(D::deterministic(0.0), D::deterministic(1.0)),
                ],
            ),
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(m.cycle_drift(), 0.0);
        let r = m.check_conditions();
        assert!(!r.c3_holds);
        assert!(r.violations.iter().any(|v| v.starts_with("C3")));
    }

    #[test]
    fn c1_examples() {
        let r = exp_exp(2.0, 0.5).check_conditions();
        assert!(r.all_hold());
        assert_eq!(r.c1_sup_mgf, Some(2.0));
        let r = exp_exp(2.0, 1.5).check_conditions();
        assert!(!r.c1_holds);
        assert_eq!(r.c1_sup_mgf, None);
        assert!(r.violations.iter().any(|v| v.starts_with("C1")));
    }

    #[test]
    fn c2_diagnostics_decay() {
        let r = exp_exp(2.0, 0.5).check_conditions();
        assert!(r.c2_holds);
        let v: Vec<f64> = r.c2_decay.iter().map(|d| d.sup_trunc_mean).collect();
        assert!((v[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!(v[0] > v[1] && v[1] > v[2]);
    }

    #[test]
    fn invalid_models() {
        let good = StepLaw::new(D::exponential(1.0), D::exponential(1.0));
        assert_eq!(
            ModelConfig::new(Schedule::homogeneous(good.clone()), 0.0, 1.0),
            Err(ModelError::BadPremium(0.0))
        );
        assert_eq!(
            ModelConfig::new(Schedule::homogeneous(good.clone()), 1.0, -1.0),
            Err(ModelError::BadGamma(-1.0))
        );
        assert_eq!(
            ModelConfig::new(Schedule::new(vec![good], vec![]), 1.0, 1.0),
            Err(ModelError::EmptyCycle)
        );
        let bad = StepLaw::new(D::exponential(1.0), D::deterministic(0.0));
        assert_eq!(
            ModelConfig::new(Schedule::homogeneous(bad), 1.0, 1.0),
            Err(ModelError::DegenerateInterarrival)
        );
    }

    #[test]
    fn distinct_laws_dedup() {
        let (a, b) = (tagged(1.0), tagged(2.0));
        let s = Schedule::new(vec![a.clone(), b.clone()], vec![b.clone(), a.clone(), b]);
        assert_eq!(s.distinct_laws().len(), 2);
    }
}
