//! Serialized bound certificates and their independent recheck.
//!
//! The recheck recomputes each inequality from the model and the stored
//! constants without calling the pipeline: `alpha(y*)` from the distribution
//! queries, `M` by direct scan, and `c3` by explicit summation.

use serde::{Deserialize, Serialize};

use crate::lundberg::RuinBound;
use crate::schedule::ModelConfig;

const REL_TOL: f64 = 1e-9;
const C5_SAMPLES: usize = 1000;
const C5_SPAN: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCertificate {
    pub model: ModelConfig,
    pub bound: RuinBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecheckReport {
    pub checks: Vec<Check>,
}

impl RecheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

/// `ln(e^a + e^b)`.
fn ln_sum(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

impl BoundCertificate {
    pub fn new(model: ModelConfig, bound: RuinBound) -> Self {
        Self { model, bound }
    }

    pub fn recheck(&self) -> RecheckReport {
        let m = &self.model;
        let k = &self.bound.lemma;
        let c = m.premium;
        let laws = m.schedule.distinct_laws();
        let mut checks = Vec::new();
        let mut push = |name: &str, pass: bool, detail: String| {
            checks.push(Check {
                name: name.to_string(),
                pass,
                detail,
            })
        };

        // c6 from the cycle average
        let cycle = &m.schedule.cycle;
        let avg = cycle
            .iter()
            .map(|l| l.claim.mean() - c * l.inter.mean())
            .sum::<f64>()
            / cycle.len() as f64;
        push(
            "c6",
            k.c6 > 0.0 && rel_eq(k.c6, -avg),
            format!("stored {}, cycle average drift {}", k.c6, avg),
        );

        // delta within the exponential-moment domain, and Delta
        let mut sup = 0.0_f64;
        let mut finite = true;
        for l in &laws {
            match (l.claim.mgf(k.delta), l.inter.mgf(-c * k.delta)) {
                (Ok(a), Ok(b)) => sup = sup.max(a * b),
                _ => finite = false,
            }
        }
        push(
            "delta",
            k.delta > 0.0 && k.delta <= m.gamma && finite,
            format!("delta {} with gamma {}", k.delta, m.gamma),
        );
        push(
            "sup_eta_mgf",
            finite && rel_eq(k.sup_eta_mgf, sup),
            format!("stored {}, recomputed {}", k.sup_eta_mgf, sup),
        );
        push(
            "big_delta",
            k.big_delta > 1.0 && rel_eq(k.big_delta, 1.0 + sup),
            format!("stored {}, expected {}", k.big_delta, 1.0 + sup),
        );

        // c5: e^{delta v/2} >= v^2 on a grid of [c5, c5 + 100]
        let bad_v = (0..C5_SAMPLES)
            .map(|j| k.c5 + C5_SPAN * j as f64 / (C5_SAMPLES - 1) as f64)
            .find(|&v| v > 0.0 && 0.5 * k.delta * v < 2.0 * v.ln());
        push(
            "c5",
            k.c5 >= 0.0 && bad_v.is_none(),
            match bad_v {
                Some(v) => format!("inequality fails at v = {v}"),
                None => format!("holds at {C5_SAMPLES} points of [{}, {}]", k.c5, k.c5 + C5_SPAN),
            },
        );

        // y_hat
        let neg = c * laws.iter().map(|l| l.inter.mean()).fold(0.0, f64::max);
        let y_hat = (0.5 * k.delta).min(1.0 / (2.0 * neg));
        push(
            "y_hat",
            rel_eq(k.y_hat, y_hat),
            format!("stored {}, recomputed {}", k.y_hat, y_hat),
        );
        push(
            "y_star_range",
            k.y_star > 0.0 && k.y_star <= k.y_hat,
            format!("y* = {} in (0, {}]", k.y_star, k.y_hat),
        );

        // alpha(y*) <= c6 / 4
        let y = k.y_star;
        let u = 1.0 / y.sqrt().sqrt();
        let surrogate = laws
            .iter()
            .map(|l| {
                let head = l.claim.mean() * l.inter.tail_prob(u / (2.0 * c));
                let tail = c * l.inter.upper_trunc_mean_inclusive(u / c);
                head + tail
            })
            .fold(0.0, f64::max);
        let alpha = 2.0 * k.surrogate_scale * surrogate
            + y.sqrt() / 2.0
            + y / 2.0 * (k.c5 * k.c5 + 1.0) * sup;
        push(
            "alpha_y_star",
            k.surrogate_scale >= 1.0 && alpha <= k.c6 / 4.0,
            format!("alpha(y*) = {alpha}, c6/4 = {}", k.c6 / 4.0),
        );
        let worst = laws
            .iter()
            .map(|l| 1.0 + y * (l.claim.mean() - c * l.inter.mean() + alpha))
            .fold(f64::INFINITY, f64::min);
        push(
            "factor_positivity",
            worst > 0.5,
            format!("min_i 1 + y*(m_i + alpha) = {worst}"),
        );

        // M: direct scan past M, long enough to reach the analytic cutoff
        let unroll = m.schedule.prefix.len() + 2 * cycle.len();
        let mut s = 0.0;
        let mut b = 0.0_f64;
        for i in 1..=unroll {
            s += m.step_mean(i);
            b = b.max((s + i as f64 * k.c6).abs());
        }
        let cutoff = (2.0 * b / k.c6).ceil() as u64;
        let end = k.m + 10 * cycle.len() as u64 + cutoff;
        let mut s = 0.0;
        let mut first_bad = None;
        for i in 1..=end {
            s += m.step_mean(i as usize);
            if i > k.m && s / i as f64 > -k.c6 / 2.0 {
                first_bad = Some(i);
                break;
            }
        }
        push(
            "M",
            k.m >= 1 && first_bad.is_none() && end >= cutoff,
            match first_bad {
                Some(i) => format!("running mean exceeds -c6/2 at k = {i} > M = {}", k.m),
                None => format!("M = {} certified on (M, {end}], analytic cutoff {cutoff}", k.m),
            },
        );

        // c3 by explicit summation of Delta^k and the geometric tail
        let ld = k.big_delta.ln();
        let mut ln_head = f64::NEG_INFINITY;
        for j in 1..=k.m {
            ln_head = ln_sum(ln_head, j as f64 * ld);
        }
        let a = y * k.c6 / 4.0;
        let ln_tail = a - a.exp_m1().ln();
        let ln_c3 = ln_sum(ln_head, ln_tail);
        let stored_c3_ok = match k.c3 {
            Some(v) => rel_eq(v.ln(), ln_c3),
            None => ln_c3 > 709.0,
        };
        push(
            "c3",
            rel_eq(k.ln_c3, ln_c3) && stored_c3_ok && k.ln_c3 >= 0.0,
            format!("stored ln c3 {}, recomputed {}", k.ln_c3, ln_c3),
        );
        push(
            "c4",
            k.c4 == k.y_star,
            format!("c4 = {}, y* = {}", k.c4, k.y_star),
        );

        let rb = &self.bound;
        let c2 = (2.0 * k.ln_c3 / k.c4).max(0.0);
        push(
            "c1",
            rel_eq(rb.c1, k.c4 / 2.0),
            format!("c1 = {}, c4/2 = {}", rb.c1, k.c4 / 2.0),
        );
        push(
            "c2",
            rel_eq(rb.c2, c2),
            format!("c2 = {}, max(0, 2 ln c3 / c4) = {}", rb.c2, c2),
        );
        push(
            "c7_c8",
            rb.c7 == k.c3 && rb.c8 == k.c4,
            format!("c7 = {:?}, c8 = {}", rb.c7, rb.c8),
        );

        RecheckReport { checks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionSpec as D;
    use crate::lundberg::ruin_bound;
    use crate::schedule::{Schedule, StepLaw};

    fn cert() -> BoundCertificate {
        let m = ModelConfig::new(
            Schedule::homogeneous(StepLaw::new(D::exponential(1.0), D::exponential(1.0))),
            2.0,
            0.5,
        )
        .unwrap();
        let b = ruin_bound(&m).unwrap();
        BoundCertificate::new(m, b)
    }

    #[test]
    fn genuine_certificate_passes() {
        let r = cert().recheck();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn doubled_c4_is_caught() {
        let mut c = cert();
        c.bound.lemma.c4 *= 2.0;
        let r = c.recheck();
        assert!(!r.passed());
        assert!(r.failures().any(|f| f.name == "c4"));
    }

    #[test]
    fn shrunk_m_is_caught() {
        let up = StepLaw::new(D::deterministic(2.0), D::deterministic(1.0));
        let down = StepLaw::new(D::exponential(1.0), D::deterministic(2.0));
        let m = ModelConfig::new(Schedule::new(vec![up.clone(), up], vec![down]), 1.0, 0.5).unwrap();
        let b = ruin_bound(&m).unwrap();
        assert!(b.lemma.m > 1);
        let mut c = BoundCertificate::new(m, b);
        assert!(c.recheck().passed());
        c.bound.lemma.m -= 1;
        assert!(c.recheck().failures().any(|f| f.name == "M"));
    }

    #[test]
    fn json_round_trip() {
        let c = cert();
        let s = serde_json::to_string_pretty(&c).unwrap();
        for key in ["delta", "c5", "y_hat", "c6", "\"M\"", "y_star", "big_delta", "c3", "c4", "c1", "c2"] {
            assert!(s.contains(key), "missing {key}");
        }
        let back: BoundCertificate = serde_json::from_str(&s).unwrap();
        assert!(back.recheck().passed());
    }
}
