//! Characteristic-function computations: Fourier-inversion point
//! probabilities (independent of the dynamic programming), the tilt identity,
//! Gaussian local approximation with its ratio diagnostics, and the
//! Kolmogorov distance to the normal CDF.

use num_complex::Complex64;
use thiserror::Error;

use crate::engine::{self, EngineError, PathConstraint};
use crate::laws::{IncrementLaw, LawError};
use crate::schedule::{solve_tilt_for_mean, StepSchedule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("quadrature failed to reach the target accuracy (error estimate {err:.3e})")]
    QuadratureNonConvergence { err: f64 },
    #[error("point {y} has probability zero (parity or reachability)")]
    ZeroProbability { y: i64 },
    #[error("point {y} is outside the regime |y - m_n| <= n^alpha (limit {limit})")]
    OutOfRegime { y: i64, limit: f64 },
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Local limit diagnostics at one point: the exact probability, its Gaussian
/// approximation (2 pi B_n)^{-1/2} exp(-(y-m_n)^2 / 2 B_n), and their ratio
/// sqrt(2 pi B_n) e^{(y-m_n)^2/2B_n} P(S_n = y).
#[derive(Debug, Clone, PartialEq)]
pub struct LltReport {
    pub n: usize,
    pub y: i64,
    pub exact_prob: f64,
    pub gauss_approx: f64,
    pub ratio: f64,
    pub alpha: f64,
    /// min(2 - 3 alpha, 1/3): the decay exponent of the envelope on |ln ratio|.
    pub envelope_exponent: f64,
}

/// Product of per-step normalized characteristic functions
/// prod_i M_i(lambda + i theta) / M_i(lambda), accumulated in log-polar form
/// so that n in the thousands cannot underflow the modulus.
pub fn charfn_product(schedule: &StepSchedule, lambda: f64, theta: f64) -> Complex64 {
    let mut log_mag = 0.0f64;
    let mut phase = 0.0f64;
    for law in grouped(schedule) {
        let (law, count) = law;
        let z = step_charfn(law, lambda, theta);
        let m = z.norm();
        if m == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        log_mag += count as f64 * m.ln();
        phase += count as f64 * z.arg();
    }
    Complex64::from_polar(log_mag.exp(), phase)
}

// M(lambda + i theta) / M(lambda) for one law, with exponent shifting.
fn step_charfn(law: &IncrementLaw, lambda: f64, theta: f64) -> Complex64 {
    let shift = law
        .atoms()
        .iter()
        .map(|&a| lambda * a)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0f64;
    for (&a, &p) in law.atoms().iter().zip(law.probs()) {
        let w = p * (lambda * a - shift).exp();
        den += w;
        num += w * Complex64::from_polar(1.0, theta * a);
    }
    num / den
}

// Identical consecutive laws collapse into (law, count) runs; the product
// over steps does not depend on order.
fn grouped(schedule: &StepSchedule) -> Vec<(&IncrementLaw, usize)> {
    let mut runs: Vec<(&IncrementLaw, usize)> = Vec::new();
    'outer: for law in schedule.laws() {
        for run in runs.iter_mut() {
            if run.0 == law {
                run.1 += 1;
                continue 'outer;
            }
        }
        runs.push((law, 1));
    }
    runs
}

/// P(S_{1,n} = y) by Fourier inversion: the integral over [-pi, pi] of
/// e^{-i theta y} prod_i M_i(i theta) / (2 pi), computed by adaptive
/// Gauss-Kronrod quadrature to 1e-12 absolute accuracy. Requires a lattice
/// schedule; tiny negative round-off is clamped to zero.
pub fn fourier_point_prob(schedule: &StepSchedule, y: i64) -> Result<f64, SpectralError> {
    if !schedule.is_lattice() {
        return Err(SpectralError::Engine(EngineError::NonLatticeLaw));
    }
    // The integrand is conjugate-symmetric in theta, so the probability is
    // (1/pi) Int_0^pi Re(e^{-i theta y} prod M_j(i theta)) d theta.
    let f = |theta: f64| {
        let z = charfn_product(schedule, 0.0, theta);
        let rot = Complex64::from_polar(1.0, -theta * y as f64);
        (z * rot).re
    };
    let val = integrate_adaptive(&f, 0.0, std::f64::consts::PI, 1e-13, 4000, y)?;
    Ok((val / std::f64::consts::PI).max(0.0))
}

// Adaptive Gauss-Kronrod (G7, K15) with splitting driven by the widest-error
// panel. Initial panels resolve the e^{-i theta y} oscillation.
fn integrate_adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_panels: usize,
    oscillation: i64,
) -> Result<f64, SpectralError> {
    const XGK: [f64; 8] = [
        0.991455371120813,
        0.949107912342759,
        0.864864423359769,
        0.741531185599394,
        0.586087235467691,
        0.405845151377397,
        0.207784955007898,
        0.000000000000000,
    ];
    const WGK: [f64; 8] = [
        0.022935322010529,
        0.063092092629979,
        0.104790010322250,
        0.140653259715525,
        0.169004726639267,
        0.190350578064785,
        0.204432940075298,
        0.209482141084728,
    ];
    const WG: [f64; 4] = [
        0.129484966168870,
        0.279705391489277,
        0.381830050505119,
        0.417959183673469,
    ];

    let gk15 = |lo: f64, hi: f64| -> (f64, f64) {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        let fc = f(c);
        let mut kron = WGK[7] * fc;
        let mut gauss = WG[3] * fc;
        for j in 0..7 {
            let x = h * XGK[j];
            let s = f(c - x) + f(c + x);
            kron += WGK[j] * s;
            if j % 2 == 1 {
                gauss += WG[j / 2] * s;
            }
        }
        (kron * h, (kron - gauss).abs() * h)
    };

    // About four panels per oscillation period keeps GK15 in its asymptotic
    // regime from the start.
    let initial = ((oscillation.unsigned_abs() as usize) / 2).clamp(8, 1024);
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(initial * 2);
    for i in 0..initial {
        let lo = a + (b - a) * i as f64 / initial as f64;
        let hi = a + (b - a) * (i + 1) as f64 / initial as f64;
        let (v, e) = gk15(lo, hi);
        panels.push((lo, hi, v, e));
    }
    loop {
        let total_err: f64 = panels.iter().map(|p| p.3).sum();
        if total_err <= abs_tol {
            return Ok(panels.iter().map(|p| p.2).sum());
        }
        if panels.len() >= max_panels {
            return Err(SpectralError::QuadratureNonConvergence { err: total_err });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(lo, mid);
        let (v2, e2) = gk15(mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// P(S_{1,n} = y) through the tilt identity: solve H_n'(lambda) = y, invert
/// the Fourier integral on the lambda-tilted schedule, and undo the tilt with
/// the factor e^{H_n(lambda) - lambda y}. Must agree with the direct
/// inversion; the two routes share no schedule values.
pub fn tilt_identity_prob(schedule: &StepSchedule, y: i64) -> Result<f64, SpectralError> {
    let lambda = solve_tilt_for_mean(schedule, y as f64, 1e-11)?;
    let tilted = schedule.tilted(lambda);
    let p_tilted = fourier_point_prob(&tilted, y)?;
    let log_factor = schedule.log_mgf_sum(lambda) - lambda * y as f64;
    Ok(log_factor.exp() * p_tilted)
}

/// Source of the exact probability for [`llt_ratio`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactSource {
    /// Forward dynamic programming (default; exact up to double rounding).
    Dp,
    /// Fourier inversion (cross-check; quadrature-limited).
    Fourier,
}

/// Local-limit diagnostics for P_0(S_n = y) in the regime |y - m_n| <= n^alpha.
pub fn llt_ratio(
    schedule: &StepSchedule,
    y: i64,
    alpha: f64,
    source: ExactSource,
) -> Result<LltReport, SpectralError> {
    let n = schedule.n();
    let m_n = schedule.partial_mean(n);
    let limit = (n as f64).powf(alpha);
    if (y as f64 - m_n).abs() > limit {
        return Err(SpectralError::OutOfRegime { y, limit });
    }
    let exact = match source {
        ExactSource::Dp => {
            let dist =
                engine::endpoint_distribution(0, schedule, &PathConstraint::unconstrained())?;
            dist.prob_at(y)
        }
        ExactSource::Fourier => fourier_point_prob(schedule, y)?,
    };
    if exact <= 0.0 {
        return Err(SpectralError::ZeroProbability { y });
    }
    Ok(report_for(schedule, y, alpha, exact))
}

/// One DP pass, then a report for every admissible y. Points of zero
/// probability are skipped.
pub fn llt_ratio_sweep(
    schedule: &StepSchedule,
    alpha: f64,
) -> Result<Vec<LltReport>, SpectralError> {
    let n = schedule.n();
    let m_n = schedule.partial_mean(n);
    let limit = (n as f64).powf(alpha);
    let dist = engine::endpoint_distribution(0, schedule, &PathConstraint::unconstrained())?;
    let y_lo = (m_n - limit).ceil() as i64;
    let y_hi = (m_n + limit).floor() as i64;
    let mut out = Vec::new();
    for y in y_lo..=y_hi {
        let p = dist.prob_at(y);
        if p > 0.0 {
            out.push(report_for(schedule, y, alpha, p));
        }
    }
    Ok(out)
}

fn report_for(schedule: &StepSchedule, y: i64, alpha: f64, exact: f64) -> LltReport {
    let n = schedule.n();
    let m_n = schedule.partial_mean(n);
    let b_n = schedule.total_var();
    let dev = y as f64 - m_n;
    let gauss = (-dev * dev / (2.0 * b_n)).exp() / (2.0 * std::f64::consts::PI * b_n).sqrt();
    LltReport {
        n,
        y,
        exact_prob: exact,
        gauss_approx: gauss,
        ratio: exact / gauss,
        alpha,
        envelope_exponent: (2.0 - 3.0 * alpha).min(1.0 / 3.0),
    }
}

/// Kolmogorov distance of (S_{1,n} - m_n)/sqrt(B_n) from the standard normal,
/// evaluated at every lattice jump from the exact DP distribution, together
/// with the bound shape C * A * n / B_n^{3/2} for a caller-supplied constant C
/// (A is the largest centered third absolute moment among the steps).
#[derive(Debug, Clone, PartialEq)]
pub struct BerryEsseenReport {
    pub ks_distance: f64,
    pub bound: f64,
    pub third_moment_max: f64,
    pub b_n: f64,
}

pub fn berry_esseen_distance(
    schedule: &StepSchedule,
    c_constant: f64,
) -> Result<BerryEsseenReport, SpectralError> {
    let n = schedule.n();
    let m_n = schedule.partial_mean(n);
    let b_n = schedule.total_var();
    let sd = b_n.sqrt();
    let dist = engine::endpoint_distribution(0, schedule, &PathConstraint::unconstrained())?;
    let mut cdf = 0.0f64;
    let mut ks = 0.0f64;
    for (x, p) in dist.cells() {
        let z = (x as f64 - m_n) / sd;
        let target = std_normal_cdf(z);
        ks = ks.max((cdf - target).abs()); // left limit
        cdf += p;
        ks = ks.max((cdf - target).abs());
    }
    let a_max = schedule
        .laws()
        .iter()
        .map(|l| {
            let mu = l.mean();
            l.atoms()
                .iter()
                .zip(l.probs())
                .map(|(&a, &p)| p * (a - mu).abs().powi(3))
                .sum::<f64>()
        })
        .fold(0.0f64, f64::max);
    Ok(BerryEsseenReport {
        ks_distance: ks,
        bound: c_constant * a_max * n as f64 / b_n.powf(1.5),
        third_moment_max: a_max,
        b_n,
    })
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lazy_walk() -> IncrementLaw {
        IncrementLaw::validate(&[-1.0, 0.0, 1.0], &[1.0, 2.0, 1.0], true).unwrap()
    }

    #[test]
    fn charfn_at_zero_is_one() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 17).unwrap();
        let z = charfn_product(&sched, 0.3, 0.0);
        assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn charfn_single_lazy_step_closed_form() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 1).unwrap();
        for &theta in &[0.1, 0.7, 2.0, 3.0] {
            let z = charfn_product(&sched, 0.0, theta);
            assert_abs_diff_eq!(z.re, 0.5 + 0.5 * theta.cos(), epsilon = 1e-14);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn charfn_modulus_at_most_one() {
        let sched = StepSchedule::cycle(&[lazy_walk(), lazy_walk().tilt(0.4)], 64).unwrap();
        for i in 0..50 {
            let theta = -3.1 + 0.127 * i as f64;
            for &lambda in &[-0.5, 0.0, 0.8] {
                assert!(charfn_product(&sched, lambda, theta).norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn aperiodic_law_has_charfn_bounded_away_from_one() {
        // sup over b <= |theta| <= pi of |M(i theta)| < 1 for aperiodic laws.
        let law = lazy_walk();
        let sched = StepSchedule::homogeneous(law, 1).unwrap();
        let b = 0.3;
        let mut sup: f64 = 0.0;
        for i in 0..=800 {
            let theta = b + (std::f64::consts::PI - b) * i as f64 / 800.0;
            sup = sup.max(charfn_product(&sched, 0.0, theta).norm());
        }
        assert!(sup < 1.0 - 1e-3, "sup = {sup}");
    }

    #[test]
    fn fourier_lazy_short_walks() {
        let one = StepSchedule::homogeneous(lazy_walk(), 1).unwrap();
        assert_abs_diff_eq!(fourier_point_prob(&one, 0).unwrap(), 0.5, epsilon = 1e-12);
        let two = StepSchedule::homogeneous(lazy_walk(), 2).unwrap();
        assert_abs_diff_eq!(fourier_point_prob(&two, 0).unwrap(), 0.375, epsilon = 1e-12);
    }

    #[test]
    fn fourier_matches_dp_on_moderate_walk() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 96).unwrap();
        let dist =
            engine::endpoint_distribution(0, &sched, &PathConstraint::unconstrained()).unwrap();
        for y in [-20i64, -3, 0, 1, 8, 25] {
            let f = fourier_point_prob(&sched, y).unwrap();
            assert_abs_diff_eq!(f, dist.prob_at(y), epsilon = 1e-11);
        }
    }

    #[test]
    fn tilt_identity_equals_direct_inversion() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 64).unwrap();
        for y in [0i64, 4, 8] {
            let direct = fourier_point_prob(&sched, y).unwrap();
            let tilted = tilt_identity_prob(&sched, y).unwrap();
            assert_abs_diff_eq!(direct, tilted, epsilon = 1e-10);
        }
    }

    #[test]
    fn tilt_identity_rejects_boundary_target() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 1).unwrap();
        assert!(matches!(
            tilt_identity_prob(&sched, 1),
            Err(SpectralError::Law(LawError::TargetOutOfRange { .. }))
        ));
    }

    #[test]
    fn llt_ratio_examples() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 4096).unwrap();
        let rep = llt_ratio(&sched, 0, 0.5, ExactSource::Dp).unwrap();
        assert!(rep.ratio > 0.97 && rep.ratio < 1.03, "ratio = {}", rep.ratio);
        assert_abs_diff_eq!(
            rep.gauss_approx,
            1.0 / (2.0 * std::f64::consts::PI * sched.total_var()).sqrt(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(rep.envelope_exponent, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            rep.ratio,
            rep.exact_prob / rep.gauss_approx,
            epsilon = 1e-12
        );
    }

    #[test]
    fn llt_ratio_flags_parity_and_regime() {
        let pm = IncrementLaw::validate(&[-1.0, 1.0], &[1.0, 1.0], true).unwrap();
        let sched = StepSchedule::homogeneous(pm, 16).unwrap();
        assert!(matches!(
            llt_ratio(&sched, 1, 0.5, ExactSource::Dp),
            Err(SpectralError::ZeroProbability { y: 1 })
        ));
        let lazy = StepSchedule::homogeneous(lazy_walk(), 16).unwrap();
        assert!(matches!(
            llt_ratio(&lazy, 9, 0.5, ExactSource::Dp),
            Err(SpectralError::OutOfRegime { .. })
        ));
    }

    #[test]
    fn llt_envelope_exponent_formula() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 64).unwrap();
        for (alpha, want) in [(0.0, 1.0 / 3.0), (0.5, 1.0 / 3.0), (0.6, 0.2)] {
            let rep = llt_ratio(&sched, 0, alpha, ExactSource::Dp).unwrap();
            assert_abs_diff_eq!(rep.envelope_exponent, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn berry_esseen_single_lazy_step() {
        // S_1 / sqrt(0.5) puts mass 1/4, 1/2, 1/4 at +-sqrt 2 and 0; the
        // largest CDF gap sits at the origin jump: |0.75 - 0.5| = 0.25.
        let sched = StepSchedule::homogeneous(lazy_walk(), 1).unwrap();
        let rep = berry_esseen_distance(&sched, 1.0).unwrap();
        assert_abs_diff_eq!(rep.ks_distance, 0.25, epsilon = 1e-12);
        assert!(rep.ks_distance <= 1.0);
    }

    #[test]
    fn berry_esseen_distance_shrinks_with_n() {
        let small = StepSchedule::homogeneous(lazy_walk(), 64).unwrap();
        let large = StepSchedule::homogeneous(lazy_walk(), 1024).unwrap();
        let ks_small = berry_esseen_distance(&small, 1.0).unwrap().ks_distance;
        let ks_large = berry_esseen_distance(&large, 1.0).unwrap().ks_distance;
        assert!(ks_large < ks_small);
        assert!(ks_small < 0.1);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_abs_diff_eq!(std_normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(std_normal_cdf(1.0), 0.8413447460685429, epsilon = 1e-12);
        assert_abs_diff_eq!(std_normal_cdf(-2.0), 0.022750131948179195, epsilon = 1e-12);
    }
}
