//! Step schedules: an ordered sequence of increment laws for steps 1..n with
//! cached partial means and partial variances, time-dependent tilt schedules,
//! and the safeguarded Newton solver that picks the tilt matching a target
//! total mean.

use serde::{Deserialize, Serialize};

use crate::laws::{IncrementLaw, LawError};

/// Laws for steps 1..n plus cached cumulative means m_i = E(S_{1,i}) and
/// cumulative variances B_i = Var(S_{1,i}), stored for i = 0..=n with the
/// zero entries at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    laws: Vec<IncrementLaw>,
    partial_means: Vec<f64>,
    partial_vars: Vec<f64>,
}

impl StepSchedule {
    pub fn new(laws: Vec<IncrementLaw>) -> Result<Self, LawError> {
        if laws.is_empty() {
            return Err(LawError::EmptySupport);
        }
        let mut partial_means = Vec::with_capacity(laws.len() + 1);
        let mut partial_vars = Vec::with_capacity(laws.len() + 1);
        partial_means.push(0.0);
        partial_vars.push(0.0);
        for law in &laws {
            partial_means.push(partial_means.last().unwrap() + law.mean());
            partial_vars.push(partial_vars.last().unwrap() + law.variance());
        }
        Ok(Self { laws, partial_means, partial_vars })
    }

    /// n identical steps.
    pub fn homogeneous(law: IncrementLaw, n: usize) -> Result<Self, LawError> {
        Self::new(vec![law; n])
    }

    /// Steps taken cyclically from `laws` until length n.
    pub fn cycle(laws: &[IncrementLaw], n: usize) -> Result<Self, LawError> {
        if laws.is_empty() {
            return Err(LawError::EmptySupport);
        }
        Self::new((0..n).map(|i| laws[i % laws.len()].clone()).collect())
    }

    pub fn n(&self) -> usize {
        self.laws.len()
    }

    pub fn laws(&self) -> &[IncrementLaw] {
        &self.laws
    }

    /// Law of step k, 1-based.
    pub fn law(&self, k: usize) -> &IncrementLaw {
        &self.laws[k - 1]
    }

    /// m_i = E(S_{1,i}) for i in 0..=n.
    pub fn partial_mean(&self, i: usize) -> f64 {
        self.partial_means[i]
    }

    /// B_i = Var(S_{1,i}) for i in 0..=n.
    pub fn partial_var(&self, i: usize) -> f64 {
        self.partial_vars[i]
    }

    pub fn partial_vars(&self) -> &[f64] {
        &self.partial_vars
    }

    pub fn total_mean(&self) -> f64 {
        *self.partial_means.last().unwrap()
    }

    pub fn total_var(&self) -> f64 {
        *self.partial_vars.last().unwrap()
    }

    pub fn is_lattice(&self) -> bool {
        self.laws.iter().all(|l| l.lattice())
    }

    /// Sum of the smallest atoms: the lowest reachable displacement.
    pub fn min_displacement(&self) -> f64 {
        self.laws.iter().map(|l| l.min_atom()).sum()
    }

    pub fn max_displacement(&self) -> f64 {
        self.laws.iter().map(|l| l.max_atom()).sum()
    }

    /// The sub-schedule of steps from+1 ..= to of self.
    pub fn segment(&self, from: usize, to: usize) -> StepSchedule {
        StepSchedule::new(self.laws[from..to].to_vec()).unwrap()
    }

    /// Every step tilted by the same lambda.
    pub fn tilted(&self, lambda: f64) -> StepSchedule {
        StepSchedule::new(self.laws.iter().map(|l| l.tilt(lambda)).collect()).unwrap()
    }

    /// The cumulant sum H_n(z) = sum_i H_i(z).
    pub fn log_mgf_sum(&self, z: f64) -> f64 {
        self.laws.iter().map(|l| l.log_mgf(z)).sum()
    }

    /// H_n'(z): total mean of the z-tilted schedule.
    pub fn log_mgf_sum_deriv(&self, z: f64) -> f64 {
        self.laws.iter().map(|l| l.log_mgf_deriv(z)).sum()
    }

    /// H_n''(z): total variance of the z-tilted schedule.
    pub fn log_mgf_sum_second(&self, z: f64) -> f64 {
        self.laws.iter().map(|l| l.log_mgf_second(z)).sum()
    }

    /// Recomputes the cached partials and checks them against recomputation.
    pub fn verify_partials(&self, tol: f64) -> bool {
        let fresh = StepSchedule::new(self.laws.clone()).unwrap();
        self.partial_means
            .iter()
            .zip(&fresh.partial_means)
            .all(|(a, b)| (a - b).abs() <= tol)
            && self
                .partial_vars
                .iter()
                .zip(&fresh.partial_vars)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// JSON literal for schedules: either an explicit list of laws or a base law
/// with a tilt sequence (cycled when shorter than n at expansion time).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleLiteral {
    Tilted { base: IncrementLaw, tilts: Vec<f64> },
    Laws { laws: Vec<IncrementLaw> },
}

impl ScheduleLiteral {
    /// Expands the literal to an n-step schedule. An explicit law list must
    /// have length n; a tilt literal is cycled.
    pub fn expand(&self, n: usize) -> Result<StepSchedule, LawError> {
        match self {
            ScheduleLiteral::Laws { laws } => {
                if laws.len() != n {
                    return Err(LawError::EmptySupport);
                }
                StepSchedule::new(laws.clone())
            }
            ScheduleLiteral::Tilted { base, tilts } => {
                if tilts.is_empty() {
                    return StepSchedule::homogeneous(base.clone(), n);
                }
                let laws = (0..n).map(|i| base.tilt(tilts[i % tilts.len()])).collect();
                StepSchedule::new(laws)
            }
        }
    }
}

/// A base law (or per-step laws) together with per-step tilt parameters, each
/// confined to a stated interval.
#[derive(Debug, Clone)]
pub struct TiltSchedule {
    base: Vec<IncrementLaw>,
    tilts: Vec<f64>,
    range: (f64, f64),
}

impl TiltSchedule {
    /// Single base law tilted step by step. Every tilt must lie in `range`.
    pub fn homogeneous_base(
        base: IncrementLaw,
        tilts: Vec<f64>,
        range: (f64, f64),
    ) -> Result<Self, LawError> {
        let n = tilts.len();
        Self::new(vec![base; n], tilts, range)
    }

    pub fn new(
        base: Vec<IncrementLaw>,
        tilts: Vec<f64>,
        range: (f64, f64),
    ) -> Result<Self, LawError> {
        if base.len() != tilts.len() || base.is_empty() {
            return Err(LawError::EmptySupport);
        }
        for &t in &tilts {
            if !t.is_finite() {
                return Err(LawError::NonFinite { what: "tilt", value: t });
            }
            if t < range.0 || t > range.1 {
                return Err(LawError::TiltOutOfRange { tilt: t, lo: range.0, hi: range.1 });
            }
        }
        Ok(Self { base, tilts, range })
    }

    pub fn tilts(&self) -> &[f64] {
        &self.tilts
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn to_schedule(&self) -> StepSchedule {
        StepSchedule::new(
            self.base
                .iter()
                .zip(&self.tilts)
                .map(|(l, &t)| l.tilt(t))
                .collect(),
        )
        .unwrap()
    }
}

/// Solves H_n'(lambda) = target for lambda by safeguarded Newton iteration
/// with a bisection fallback, exploiting strict monotonicity of H_n'.
///
/// The target must lie strictly between the total min and max displacements.
pub fn solve_tilt_for_mean(
    schedule: &StepSchedule,
    target: f64,
    tol: f64,
) -> Result<f64, LawError> {
    if schedule.laws().iter().all(|l| l.support_len() == 1) {
        return Err(LawError::DegenerateSchedule);
    }
    let lo_reach = schedule.min_displacement();
    let hi_reach = schedule.max_displacement();
    if !(target > lo_reach && target < hi_reach) {
        return Err(LawError::TargetOutOfRange { target, lo: lo_reach, hi: hi_reach });
    }

    let f = |z: f64| schedule.log_mgf_sum_deriv(z) - target;

    // Bracket the root by doubling outward from zero. H_n' approaches the
    // reachability bounds only as |lambda| -> infinity, so give up past a
    // generous cap and report the target as out of range.
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    let f0 = f(0.0);
    if f0 == 0.0 {
        return Ok(0.0);
    }
    if f0 < 0.0 {
        let mut step = 1.0;
        while f(lo + step) < 0.0 {
            lo += step;
            step *= 2.0;
            if step > 1e6 {
                return Err(LawError::TargetOutOfRange {
                    target,
                    lo: lo_reach,
                    hi: hi_reach,
                });
            }
        }
        hi = lo + step;
    } else {
        let mut step = 1.0;
        while f(hi - step) > 0.0 {
            hi -= step;
            step *= 2.0;
            if step > 1e6 {
                return Err(LawError::TargetOutOfRange {
                    target,
                    lo: lo_reach,
                    hi: hi_reach,
                });
            }
        }
        lo = hi - step;
    }

    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fz = f(z);
        if fz.abs() <= tol {
            return Ok(z);
        }
        if fz > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let d = schedule.log_mgf_sum_second(z);
        let newton = z - fz / d;
        z = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let fz = f(z);
    if fz.abs() <= tol {
        Ok(z)
    } else {
        Err(LawError::TargetOutOfRange { target, lo: lo_reach, hi: hi_reach })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lazy_walk() -> IncrementLaw {
        IncrementLaw::validate(&[-1.0, 0.0, 1.0], &[1.0, 2.0, 1.0], true).unwrap()
    }

    #[test]
    fn partials_match_recomputation() {
        let sched = StepSchedule::cycle(
            &[lazy_walk(), lazy_walk().tilt(0.3)],
            7,
        )
        .unwrap();
        assert!(sched.verify_partials(1e-10));
        assert_abs_diff_eq!(sched.partial_var(7), sched.total_var(), epsilon = 0.0);
        assert_eq!(sched.partial_mean(0), 0.0);
    }

    #[test]
    fn solve_tilt_centered_schedule_gives_zero() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 12).unwrap();
        let lambda = solve_tilt_for_mean(&sched, 0.0, 1e-12).unwrap();
        assert_eq!(lambda, 0.0);
    }

    #[test]
    fn solve_tilt_ten_lazy_steps_target_two() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 10).unwrap();
        let lambda = solve_tilt_for_mean(&sched, 2.0, 1e-12).unwrap();
        // Per-step mean tanh(lambda/2) = 0.2, so lambda = 2 artanh(0.2) = ln 1.5.
        assert_abs_diff_eq!(lambda, 1.5f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn solve_tilt_rejects_unreachable_target() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 10).unwrap();
        assert!(matches!(
            solve_tilt_for_mean(&sched, 11.0, 1e-12),
            Err(LawError::TargetOutOfRange { .. })
        ));
        assert!(matches!(
            solve_tilt_for_mean(&sched, 10.0, 1e-12),
            Err(LawError::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn solve_tilt_rejects_degenerate_schedule() {
        let point = IncrementLaw::validate(&[0.0, 2.0], &[0.0, 1.0], true).unwrap();
        let sched = StepSchedule::homogeneous(point, 4).unwrap();
        assert!(matches!(
            solve_tilt_for_mean(&sched, 7.0, 1e-12),
            Err(LawError::DegenerateSchedule)
        ));
    }

    #[test]
    fn solve_then_tilt_round_trips() {
        let laws = vec![
            lazy_walk(),
            lazy_walk().tilt(0.4),
            IncrementLaw::validate(&[-1.0, 0.0, 1.0, 2.0], &[4.0, 2.5, 3.0, 0.5], true).unwrap(),
        ];
        let sched = StepSchedule::cycle(&laws, 9).unwrap();
        for &target in &[-2.5, 0.3, 4.0] {
            let lambda = solve_tilt_for_mean(&sched, target, 1e-12).unwrap();
            let tilted = sched.tilted(lambda);
            assert_abs_diff_eq!(tilted.total_mean(), target, epsilon = 1e-10);
        }
    }

    #[test]
    fn tilt_schedule_enforces_range() {
        let err = TiltSchedule::homogeneous_base(lazy_walk(), vec![0.2, 0.9], (-0.5, 0.5));
        assert!(matches!(err, Err(LawError::TiltOutOfRange { .. })));
        let ok = TiltSchedule::homogeneous_base(lazy_walk(), vec![0.2, -0.1], (-0.5, 0.5))
            .unwrap();
        let sched = ok.to_schedule();
        assert_abs_diff_eq!(
            sched.law(1).mean(),
            lazy_walk().log_mgf_deriv(0.2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn schedule_literal_forms_expand() {
        let tilted: ScheduleLiteral = serde_json::from_str(
            r#"{"base":{"atoms":[-1,0,1],"probs":[0.25,0.5,0.25],"lattice":true},"tilts":[0.1,-0.1]}"#,
        )
        .unwrap();
        let sched = tilted.expand(5).unwrap();
        assert_eq!(sched.n(), 5);
        assert_abs_diff_eq!(
            sched.law(3).mean(),
            lazy_walk().log_mgf_deriv(0.1),
            epsilon = 1e-12
        );

        let listed: ScheduleLiteral = serde_json::from_str(
            r#"{"laws":[{"atoms":[-1,1],"probs":[0.5,0.5],"lattice":true},{"atoms":[-1,0,1],"probs":[0.25,0.5,0.25],"lattice":true}]}"#,
        )
        .unwrap();
        assert!(listed.expand(2).is_ok());
        assert!(listed.expand(3).is_err());
    }
}
