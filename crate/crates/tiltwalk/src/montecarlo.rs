//! Seeded path sampling for lattice schedules, rejection-based conditional
//! estimation, and importance sampling from the tilted schedule whose weights
//! undo the tilt exactly.
//!
//! Generators are ChaCha streams: a sweep task derives its generator from the
//! base seed via `seed_from_u64(seed)` plus `set_stream(task_index)`, so
//! concurrent grid evaluation is reproducible regardless of scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::PathConstraint;
use crate::laws::LawError;
use crate::schedule::{solve_tilt_for_mean, StepSchedule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("acceptance {accepted}/{samples} below 1e-5; use the tilted importance sampler")]
    DegenerateAcceptance { accepted: u64, samples: u64 },
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: u64, got: u64 },
    #[error(transparent)]
    Law(#[from] LawError),
}

/// A Monte Carlo estimate with its standard error and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    /// Sample standard deviation divided by sqrt(samples).
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
    /// Fraction of sampled paths that entered the estimate (1 for plain
    /// indicator means, the endpoint hit rate for rejection methods).
    pub accepted_fraction: f64,
}

/// Generator for the given base seed and task index.
pub fn rng_for_task(seed: u64, task_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task_index);
    rng
}

// Per-step cumulative tables for inverse-CDF sampling.
struct SamplingTables {
    atoms: Vec<Vec<i64>>,
    cdfs: Vec<Vec<f64>>,
}

impl SamplingTables {
    fn new(schedule: &StepSchedule) -> Self {
        let mut atoms = Vec::with_capacity(schedule.n());
        let mut cdfs = Vec::with_capacity(schedule.n());
        for law in schedule.laws() {
            atoms.push(law.lattice_atoms().expect("lattice schedule"));
            let mut acc = 0.0;
            let cdf: Vec<f64> = law
                .probs()
                .iter()
                .map(|&p| {
                    acc += p;
                    acc
                })
                .collect();
            cdfs.push(cdf);
        }
        Self { atoms, cdfs }
    }

    fn sample_into(&self, u: i64, rng: &mut ChaCha8Rng, path: &mut Vec<i64>) {
        path.clear();
        path.push(u);
        let mut pos = u;
        for (atoms, cdf) in self.atoms.iter().zip(&self.cdfs) {
            let r: f64 = rng.random();
            let mut idx = cdf.len() - 1;
            for (j, &c) in cdf.iter().enumerate() {
                if r < c {
                    idx = j;
                    break;
                }
            }
            pos += atoms[idx];
            path.push(pos);
        }
    }
}

/// One path of positions at times 0..=n, sampled by per-step inverse CDF.
/// Deterministic given the seed.
pub fn sample_path(schedule: &StepSchedule, u: i64, seed: u64) -> Vec<i64> {
    let tables = SamplingTables::new(schedule);
    let mut rng = rng_for_task(seed, 0);
    let mut path = Vec::with_capacity(schedule.n() + 1);
    tables.sample_into(u, &mut rng, &mut path);
    path
}

/// Indicator-mean estimate of the event probability. When the constraint pins
/// the endpoint this is plain rejection and the endpoint hit rate is reported
/// as the accepted fraction; an acceptance below 1e-5 aborts with advice to
/// switch to the importance sampler.
pub fn estimate_event(
    schedule: &StepSchedule,
    u: i64,
    constraint: &PathConstraint,
    samples: u64,
    seed: u64,
) -> Result<McEstimate, McError> {
    if samples < 1_000 {
        return Err(McError::TooFewSamples { min: 1_000, got: samples });
    }
    let tables = SamplingTables::new(schedule);
    let mut rng = rng_for_task(seed, 0);
    let mut path = Vec::with_capacity(schedule.n() + 1);
    let mut hits = 0u64;
    let mut endpoint_hits = 0u64;
    for _ in 0..samples {
        tables.sample_into(u, &mut rng, &mut path);
        if let Some(v) = constraint.endpoint {
            if *path.last().unwrap() == v {
                endpoint_hits += 1;
            }
        }
        if constraint.accepts(&path) {
            hits += 1;
        }
    }
    let accepted_fraction = if constraint.endpoint.is_some() {
        let frac = endpoint_hits as f64 / samples as f64;
        if frac < 1e-5 {
            return Err(McError::DegenerateAcceptance { accepted: endpoint_hits, samples });
        }
        frac
    } else {
        1.0
    };
    let p = hits as f64 / samples as f64;
    let var = if samples > 1 {
        p * (1.0 - p) * samples as f64 / (samples - 1) as f64
    } else {
        0.0
    };
    Ok(McEstimate {
        value: p,
        stderr: (var / samples as f64).sqrt(),
        samples,
        seed,
        accepted_fraction,
    })
}

/// Rejection-conditioned mean of a path statistic given the event: samples
/// paths, keeps those the constraint accepts, and averages `statistic` over
/// the kept ones.
pub fn estimate_conditional(
    schedule: &StepSchedule,
    u: i64,
    constraint: &PathConstraint,
    statistic: impl Fn(&[i64]) -> f64,
    samples: u64,
    seed: u64,
) -> Result<McEstimate, McError> {
    if samples < 1_000 {
        return Err(McError::TooFewSamples { min: 1_000, got: samples });
    }
    let tables = SamplingTables::new(schedule);
    let mut rng = rng_for_task(seed, 0);
    let mut path = Vec::with_capacity(schedule.n() + 1);
    let mut kept: Vec<f64> = Vec::new();
    for _ in 0..samples {
        tables.sample_into(u, &mut rng, &mut path);
        if constraint.accepts(&path) {
            kept.push(statistic(&path));
        }
    }
    let accepted = kept.len() as u64;
    let frac = accepted as f64 / samples as f64;
    if frac < 1e-5 {
        return Err(McError::DegenerateAcceptance { accepted, samples });
    }
    let mean = kept.iter().sum::<f64>() / accepted as f64;
    let var = if accepted > 1 {
        kept.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (accepted - 1) as f64
    } else {
        0.0
    };
    Ok(McEstimate {
        value: mean,
        stderr: (var / accepted as f64).sqrt(),
        samples,
        seed,
        accepted_fraction: frac,
    })
}

/// Unbiased estimate of a pinned-endpoint event probability by sampling from
/// the lambda-tilted schedule, with lambda solving H_n'(lambda) = y - u.
/// Each path carries the weight e^{H_n(lambda) - lambda (S_n - u)}, which is
/// constant on the endpoint slice, so the variance comes from endpoint
/// randomness alone.
pub fn importance_tilted_estimate(
    schedule: &StepSchedule,
    u: i64,
    constraint: &PathConstraint,
    samples: u64,
    seed: u64,
) -> Result<McEstimate, McError> {
    if samples < 1_000 {
        return Err(McError::TooFewSamples { min: 1_000, got: samples });
    }
    let y = match constraint.endpoint {
        Some(v) => v,
        None => return Err(McError::Law(LawError::DegenerateSchedule)),
    };
    let lambda = solve_tilt_for_mean(schedule, (y - u) as f64, 1e-11)?;
    let tilted = schedule.tilted(lambda);
    let log_norm = schedule.log_mgf_sum(lambda);
    let tables = SamplingTables::new(&tilted);
    let mut rng = rng_for_task(seed, 0);
    let mut path = Vec::with_capacity(schedule.n() + 1);
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    let mut endpoint_hits = 0u64;
    for _ in 0..samples {
        tables.sample_into(u, &mut rng, &mut path);
        let s_n = *path.last().unwrap();
        if s_n == y {
            endpoint_hits += 1;
        }
        let w = if constraint.accepts(&path) {
            (log_norm - lambda * (s_n - u) as f64).exp()
        } else {
            0.0
        };
        sum += w;
        sumsq += w * w;
    }
    let mean = sum / samples as f64;
    let var = if samples > 1 {
        (sumsq - samples as f64 * mean * mean).max(0.0) / (samples - 1) as f64
    } else {
        0.0
    };
    Ok(McEstimate {
        value: mean,
        stderr: (var / samples as f64).sqrt(),
        samples,
        seed,
        accepted_fraction: endpoint_hits as f64 / samples as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{self, PathConstraint};
    use crate::laws::IncrementLaw;

    fn lazy_walk() -> IncrementLaw {
        IncrementLaw::validate(&[-1.0, 0.0, 1.0], &[1.0, 2.0, 1.0], true).unwrap()
    }

    #[test]
    fn sample_path_starts_at_u_and_is_deterministic() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 32).unwrap();
        let a = sample_path(&sched, 5, 12345);
        let b = sample_path(&sched, 5, 12345);
        assert_eq!(a[0], 5);
        assert_eq!(a.len(), 33);
        assert_eq!(a, b);
        let c = sample_path(&sched, 5, 54321);
        assert_ne!(a, c);
    }

    #[test]
    fn endpoint_mean_matches_clt() {
        let tilted = lazy_walk().tilt(0.6);
        let sched = StepSchedule::homogeneous(tilted, 64).unwrap();
        let m = sched.total_mean();
        let sd = sched.total_var().sqrt();
        let reps = 20_000u64;
        let tables = SamplingTables::new(&sched);
        let mut rng = rng_for_task(777, 0);
        let mut path = Vec::new();
        let mut sum = 0.0;
        for _ in 0..reps {
            tables.sample_into(3, &mut rng, &mut path);
            sum += *path.last().unwrap() as f64;
        }
        let mean = sum / reps as f64;
        let tol = 4.0 * sd / (reps as f64).sqrt();
        assert!(
            (mean - (3.0 + m)).abs() <= tol,
            "sample mean {mean} vs {} +- {tol}",
            3.0 + m
        );
    }

    #[test]
    fn estimate_event_always_true_and_impossible() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 8).unwrap();
        let free = estimate_event(&sched, 0, &PathConstraint::unconstrained(), 2_000, 9).unwrap();
        assert_eq!(free.value, 1.0);
        assert_eq!(free.stderr, 0.0);
        let impossible = PathConstraint::tube(8, 100.0, 200.0);
        let est = estimate_event(&sched, 0, &impossible, 2_000, 9).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn estimate_event_agrees_with_dp() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 24).unwrap();
        let c = PathConstraint::floor(24, 0.0, false);
        let exact = engine::event_prob(2, &sched, &c).unwrap();
        let est = estimate_event(&sched, 2, &c, 40_000, 31).unwrap();
        assert!(
            (est.value - exact).abs() <= 4.0 * est.stderr,
            "mc {} vs dp {exact} (se {})",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn importance_matches_dp_with_better_acceptance() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 64).unwrap();
        let c = PathConstraint::unconstrained().with_endpoint(16);
        let exact = engine::event_prob(0, &sched, &c).unwrap();
        let plain = estimate_event(&sched, 0, &c, 40_000, 5).unwrap();
        let tilted = importance_tilted_estimate(&sched, 0, &c, 40_000, 5).unwrap();
        assert!(
            (tilted.value - exact).abs() <= 4.0 * tilted.stderr.max(1e-12),
            "is {} vs dp {exact} (se {})",
            tilted.value,
            tilted.stderr
        );
        assert!(tilted.accepted_fraction >= 10.0 * plain.accepted_fraction);
    }

    #[test]
    fn importance_weights_constant_on_endpoint_slice() {
        // With the endpoint pinned, every accepted path carries the same
        // weight, so the estimator equals weight * acceptance rate exactly.
        let sched = StepSchedule::homogeneous(lazy_walk(), 16).unwrap();
        let y = 6i64;
        let c = PathConstraint::unconstrained().with_endpoint(y);
        let est = importance_tilted_estimate(&sched, 0, &c, 4_000, 11).unwrap();
        let lambda = solve_tilt_for_mean(&sched, y as f64, 1e-11).unwrap();
        let w = (sched.log_mgf_sum(lambda) - lambda * y as f64).exp();
        let expect = w * est.accepted_fraction;
        assert!((est.value - expect).abs() <= 1e-12 * w.max(1.0));
    }

    #[test]
    fn centered_target_reduces_to_plain_rejection() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 16).unwrap();
        let c = PathConstraint::unconstrained().with_endpoint(0);
        let is = importance_tilted_estimate(&sched, 0, &c, 20_000, 21).unwrap();
        let pr = estimate_event(&sched, 0, &c, 20_000, 21).unwrap();
        // lambda = 0: identical sample stream and unit weights.
        assert_eq!(is.value, pr.value);
    }

    #[test]
    fn degenerate_acceptance_detected() {
        let pm = IncrementLaw::validate(&[-1.0, 1.0], &[1.0, 1.0], true).unwrap();
        let sched = StepSchedule::homogeneous(pm, 16).unwrap();
        // Odd endpoint after even steps: impossible, acceptance 0.
        let c = PathConstraint::unconstrained().with_endpoint(1);
        assert!(matches!(
            estimate_event(&sched, 0, &c, 2_000, 3),
            Err(McError::DegenerateAcceptance { .. })
        ));
    }

    #[test]
    fn conditional_estimator_reproduces_forward_backward() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 12).unwrap();
        let c = PathConstraint::floor(12, 0.0, false);
        let k = 6usize;
        let exact = engine::forward_backward(1, &sched, &c, k, |x| x as f64).unwrap();
        let est = estimate_conditional(
            &sched,
            1,
            &c,
            |path| path[k] as f64,
            60_000,
            17,
        )
        .unwrap();
        assert!(
            (est.value - exact).abs() <= 4.0 * est.stderr,
            "mc {} vs exact {exact} (se {})",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn repeated_seeds_stay_within_four_sigma() {
        // Unbiasedness check: across many seeds the |MC - DP| <= 4 se rate
        // should be essentially one.
        let sched = StepSchedule::homogeneous(lazy_walk(), 12).unwrap();
        let c = PathConstraint::floor(12, 0.0, false);
        let exact = engine::event_prob(1, &sched, &c).unwrap();
        let trials = 120;
        let mut failures = 0;
        for seed in 0..trials {
            let est = estimate_event(&sched, 1, &c, 4_000, seed).unwrap();
            if (est.value - exact).abs() > 4.0 * est.stderr.max(1e-12) {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} of {trials} runs outside 4 sigma");
    }
}
