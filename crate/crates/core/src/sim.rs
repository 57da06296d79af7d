//! Monte Carlo estimation of `psi(x) = P(sup_n S_n > x)`, `S_n = sum_{i<=n} (Z_i - c theta_i)`.
//!
//! Trial `t` always draws from stream `(seed, t)`, and every grid point is
//! evaluated on the same path (common random numbers), so the estimate is
//! exactly nonincreasing in `x` and identical for any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lundberg::{cycle_decay, LundbergError};
use crate::schedule::ModelConfig;

pub use crate::rng::RngStream;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Trials per unit of parallel work; fixed so partitioning never depends on
/// the worker count.
const CHUNK: u64 = 2048;

/// Surplus at claim instants of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: f64,
    /// Claim instants `T_n`, `n = 1..`.
    pub times: Vec<f64>,
    /// `U(T_n) = x + c T_n - sum_{i<=n} Z_i`.
    pub surplus: Vec<f64>,
    pub ruined: bool,
    /// First `n` (1-based) with `U(T_n) < 0`.
    pub ruin_index: Option<usize>,
    pub tau: Option<f64>,
}

/// Draws `(theta_i, Z_i)` for `i = 1..=horizon_n`, theta first, and stops at ruin.
pub fn simulate_path(m: &ModelConfig, x: f64, horizon_n: usize, stream: &mut RngStream) -> Trajectory {
    let c = m.premium;
    let mut t = 0.0;
    let mut claims = 0.0;
    let mut times = Vec::new();
    let mut surplus = Vec::new();
    for n in 1..=horizon_n {
        let law = m.law_at(n);
        let theta = law.inter.sample(stream);
        let z = law.claim.sample(stream);
        t += theta;
        claims += z;
        let u = x + c * t - claims;
        times.push(t);
        surplus.push(u);
        if u < 0.0 {
            return Trajectory {
                x,
                times,
                surplus,
                ruined: true,
                ruin_index: Some(n),
                tau: Some(t),
            };
        }
    }
    Trajectory {
        x,
        times,
        surplus,
        ruined: false,
        ruin_index: None,
        tau: None,
    }
}

/// Certified early exit for paths that have drifted far below every barrier.
///
/// Once past the prefix, a path at `S_n` exceeds `x` later with probability at
/// most `K exp(-R (x - S_n))` (maximal inequality for the exponential
/// martingale at the cycle decay rate `R`). Abandoning paths with
/// `S_n < x_min - depth` therefore lowers every hit probability by at most
/// `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuinFloor {
    pub depth: f64,
    /// Abandonment is only allowed after this many steps (the prefix length).
    pub after_step: usize,
    pub epsilon: f64,
}

impl RuinFloor {
    pub fn certified(m: &ModelConfig, epsilon: f64) -> Result<Self, LundbergError> {
        assert!(epsilon > 0.0 && epsilon < 1.0, "epsilon must be in (0, 1)");
        let d = cycle_decay(m)?;
        Ok(Self {
            depth: (d.max_partial_product.ln() - epsilon.ln()) / d.r,
            after_step: m.schedule.prefix.len(),
            epsilon,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub horizon_n: usize,
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub floor: Option<RuinFloor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuinEstimate {
    pub x: f64,
    pub horizon_n: usize,
    pub trials: u64,
    pub hits: u64,
    pub psi_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub worker_count: usize,
    /// Upper bound on the downward bias from early abandonment, if enabled.
    pub floor_epsilon: Option<f64>,
    /// Paths that survived the full horizon with `S_N > x - buffer`.
    pub near_barrier_at_horizon: u64,
}

impl RuinEstimate {
    /// Fraction of non-ruined paths that ended the horizon close to the barrier.
    pub fn near_barrier_fraction(&self) -> f64 {
        let survivors = self.trials - self.hits;
        if survivors == 0 {
            0.0
        } else {
            self.near_barrier_at_horizon as f64 / survivors as f64
        }
    }
}

/// Wilson score interval at normal quantile `z`.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0);
    if hits == 0 && trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if hits == 0 { 0.0 } else { (center - half).max(0.0).min(p) };
    let hi = if hits == trials { 1.0 } else { (center + half).min(1.0).max(p) };
    (lo, hi)
}

/// Outcome of one path, shared by every grid point.
struct PathSummary {
    running_max: f64,
    terminal: f64,
    completed: bool,
}

fn run_trial(
    m: &ModelConfig,
    trial: u64,
    settings: &SimSettings,
    x_min: f64,
    x_max: f64,
) -> PathSummary {
    let mut stream = RngStream::new(settings.seed, trial);
    let c = m.premium;
    let mut s = 0.0_f64;
    let mut running_max = f64::NEG_INFINITY;
    let floor = settings.floor.map(|f| (f.after_step, x_min - f.depth));
    for n in 1..=settings.horizon_n {
        let law = m.law_at(n);
        let theta = law.inter.sample(&mut stream);
        let z = law.claim.sample(&mut stream);
        s += z - c * theta;
        if s > running_max {
            running_max = s;
            if running_max > x_max {
                return PathSummary {
                    running_max,
                    terminal: s,
                    completed: false,
                };
            }
        }
        if let Some((after, level)) = floor {
            if n >= after && s < level {
                return PathSummary {
                    running_max,
                    terminal: s,
                    completed: false,
                };
            }
        }
    }
    PathSummary {
        running_max,
        terminal: s,
        completed: true,
    }
}

/// Standard deviation buffer used by the horizon diagnostic: ten times the
/// largest one-step standard deviation of `Z - c theta`.
pub fn horizon_buffer(m: &ModelConfig) -> f64 {
    let c = m.premium;
    10.0 * m
        .schedule
        .distinct_laws()
        .iter()
        .map(|l| (l.claim.variance() + c * c * l.inter.variance()).sqrt())
        .fold(0.0, f64::max)
}

pub fn estimate_ruin(
    m: &ModelConfig,
    x_grid: &[f64],
    horizon_n: usize,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Vec<RuinEstimate> {
    estimate_ruin_with(
        m,
        x_grid,
        &SimSettings {
            horizon_n,
            trials,
            seed,
            workers,
            floor: None,
        },
    )
}

pub fn estimate_ruin_with(m: &ModelConfig, x_grid: &[f64], settings: &SimSettings) -> Vec<RuinEstimate> {
    assert!(settings.trials >= 1, "need at least one trial");
    assert!(settings.horizon_n >= 1, "horizon must be at least one step");
    assert!(!x_grid.is_empty(), "x grid must be nonempty");
    assert!(settings.workers >= 1, "need at least one worker");

    let x_min = x_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = x_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let buffer = horizon_buffer(m);
    let g = x_grid.len();

    let chunks: Vec<(u64, u64)> = (0..settings.trials.div_ceil(CHUNK))
        .map(|k| (k * CHUNK, ((k + 1) * CHUNK).min(settings.trials)))
        .collect();

    let count_chunk = |&(start, end): &(u64, u64)| -> Vec<(u64, u64)> {
        let mut counts = vec![(0u64, 0u64); g];
        for trial in start..end {
            let p = run_trial(m, trial, settings, x_min, x_max);
            for (j, &x) in x_grid.iter().enumerate() {
                if p.running_max > x {
                    counts[j].0 += 1;
                } else if p.completed && p.terminal > x - buffer {
                    counts[j].1 += 1;
                }
            }
        }
        counts
    };
    let merge = |mut a: Vec<(u64, u64)>, b: Vec<(u64, u64)>| {
        for (l, r) in a.iter_mut().zip(b) {
            l.0 += r.0;
            l.1 += r.1;
        }
        a
    };

    let totals = if settings.workers == 1 {
        chunks.iter().map(count_chunk).fold(vec![(0, 0); g], merge)
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.workers)
            .build()
            .expect("failed to build worker pool");
        pool.install(|| {
            chunks
                .par_iter()
                .map(count_chunk)
                .reduce(|| vec![(0, 0); g], merge)
        })
    };

    x_grid
        .iter()
        .zip(totals)
        .map(|(&x, (hits, near))| {
            let (ci_low, ci_high) = wilson_interval(hits, settings.trials, Z_95);
            RuinEstimate {
                x,
                horizon_n: settings.horizon_n,
                trials: settings.trials,
                hits,
                psi_hat: hits as f64 / settings.trials as f64,
                ci_low,
                ci_high,
                seed: settings.seed,
                worker_count: settings.workers,
                floor_epsilon: settings.floor.map(|f| f.epsilon),
                near_barrier_at_horizon: near,
            }
        })
        .collect()
}

pub const CSV_HEADER: &str = "x,trials,hits,psi_hat,ci_low,ci_high,horizon_n,seed,workers";

pub fn to_csv(estimates: &[RuinEstimate]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for e in estimates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            e.x, e.trials, e.hits, e.psi_hat, e.ci_low, e.ci_high, e.horizon_n, e.seed, e.worker_count
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionSpec as D;
    use crate::schedule::{Schedule, StepLaw};

    fn model(claim: D, inter: D, c: f64) -> ModelConfig {
        ModelConfig::new(Schedule::homogeneous(StepLaw::new(claim, inter)), c, 0.5).unwrap()
    }

    #[test]
    fn zero_claims_never_ruin() {
        let m = model(D::deterministic(0.0), D::exponential(1.0), 1.0);
        let mut s = RngStream::new(1, 0);
        let t = simulate_path(&m, 0.0, 500, &mut s);
        assert!(!t.ruined);
        assert_eq!(t.surplus.len(), 500);
        assert!(t.times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn deterministic_ruin_at_first_step() {
        let m = model(D::deterministic(2.0), D::deterministic(1.0), 1.0);
        let t = simulate_path(&m, 0.0, 10, &mut RngStream::new(3, 3));
        assert!(t.ruined);
        assert_eq!(t.ruin_index, Some(1));
        assert_eq!(t.tau, Some(1.0));
        assert_eq!(t.surplus, vec![-1.0]);
    }

    #[test]
    fn path_determinism() {
        let m = model(D::exponential(1.0), D::exponential(1.0), 2.0);
        let a = simulate_path(&m, 1.0, 200, &mut RngStream::new(9, 17));
        let b = simulate_path(&m, 1.0, 200, &mut RngStream::new(9, 17));
        assert_eq!(a, b);
    }

    #[test]
    fn ruined_iff_negative_surplus() {
        let m = model(D::exponential(1.0), D::exponential(1.0), 1.2);
        for id in 0..200 {
            let t = simulate_path(&m, 0.5, 100, &mut RngStream::new(4, id));
            assert_eq!(t.ruined, t.surplus.iter().any(|&u| u < 0.0));
            if let Some(n) = t.ruin_index {
                assert!(t.surplus[..n - 1].iter().all(|&u| u >= 0.0));
            }
        }
    }

    #[test]
    fn wilson_edges() {
        let (lo, hi) = wilson_interval(0, 100_000, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 1e-4);
        let (lo, hi) = wilson_interval(10, 10, Z_95);
        assert_eq!(hi, 1.0);
        assert!(lo < 1.0);
        // textbook value: 50/100 -> (0.4038, 0.5962)
        let (lo, hi) = wilson_interval(50, 100, Z_95);
        assert!((lo - 0.40383).abs() < 1e-4 && (hi - 0.59617).abs() < 1e-4);
    }

    #[test]
    fn deep_barrier() {
        let m = model(D::exponential(1.0), D::exponential(1.0), 2.0);
        let floor = RuinFloor::certified(&m, 1e-12).unwrap();
        let est = estimate_ruin_with(
            &m,
            &[1e6],
            &SimSettings {
                horizon_n: 10_000,
                trials: 100_000,
                seed: 5,
                workers: 1,
                floor: Some(floor),
            },
        );
        assert_eq!(est[0].hits, 0);
        assert!(est[0].ci_high < 1e-4);
    }

    #[test]
    fn csv_layout() {
        let m = model(D::exponential(1.0), D::exponential(1.0), 2.0);
        let est = estimate_ruin(&m, &[0.0, 1.0], 20, 50, 7, 1);
        let csv = to_csv(&est);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 9);
    }
}
