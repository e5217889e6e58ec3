//! Closed-form Gaussian references: the Jacobi theta function giving the
//! Brownian-bridge sup law, the Gaussian bridge covariance, checkpoint-event
//! probabilities for Gaussian walks, and an exact sequential sampler for the
//! pinned bridge.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::montecarlo::{rng_for_task, McEstimate};
use crate::spectral::std_normal_cdf;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("theta argument must be positive, got {z}")]
    NonPositiveArgument { z: f64 },
    #[error("step variance {value} invalid (want 0 < variance <= sigma_plus^2)")]
    InvalidVariance { value: f64 },
    #[error("checkpoint specification invalid: {0}")]
    InvalidCheckpoint(String),
    #[error("quadrature failed to converge")]
    QuadratureNonConvergence,
}

const PI: f64 = std::f64::consts::PI;

/// Theta_J(z) = sum_{k in Z} (-1)^k e^{-2 z^2 k^2}: the probability that the
/// standard Brownian bridge stays within [-z, z].
///
/// For z >= 1/2 the alternating series is summed directly until the next term
/// drops below 1e-16. Below 1/2 the alternating terms are of order one while
/// the value is exponentially small, so the Poisson-dual form
/// (sqrt(2 pi)/z) sum_{k>=0} e^{-(2k+1)^2 pi^2 / (8 z^2)} is used instead;
/// the two agree to 1e-14 on the overlap.
pub fn jacobi_theta(z: f64) -> Result<f64, GaussianError> {
    if !(z > 0.0) {
        return Err(GaussianError::NonPositiveArgument { z });
    }
    if z >= 0.5 {
        Ok(jacobi_theta_alternating(z))
    } else {
        Ok(jacobi_theta_dual(z))
    }
}

/// The alternating series 1 + 2 sum_{k>=1} (-1)^k e^{-2 k^2 z^2}, truncated
/// once a term falls below 1e-16. Accurate for z not too small.
pub fn jacobi_theta_alternating(z: f64) -> f64 {
    let mut total = 1.0f64;
    let mut k = 1.0f64;
    loop {
        let term = 2.0 * (-2.0 * k * k * z * z).exp();
        if term < 1e-16 {
            return total;
        }
        if (k as u64) % 2 == 1 {
            total -= term;
        } else {
            total += term;
        }
        k += 1.0;
    }
}

/// The Poisson-summed form (sqrt(2 pi)/z) sum_{k>=0} e^{-(2k+1)^2 pi^2/(8 z^2)}.
/// All terms positive: no cancellation, accurate down to tiny z.
pub fn jacobi_theta_dual(z: f64) -> f64 {
    let c = PI * PI / (8.0 * z * z);
    let mut total = 0.0f64;
    let mut k = 0u64;
    loop {
        let odd = (2 * k + 1) as f64;
        let term = (-odd * odd * c).exp();
        total += term;
        if term < 1e-18 * total.max(1e-300) || term == 0.0 {
            break;
        }
        k += 1;
    }
    (2.0 * PI).sqrt() / z * total
}

/// Whether Theta_J(z) >= exp(-(1 + epsilon) pi^2 / (8 z^2)).
pub fn theta_small_z_check(z: f64, epsilon: f64) -> Result<bool, GaussianError> {
    let theta = jacobi_theta(z)?;
    let bound = (-(1.0 + epsilon) * PI * PI / (8.0 * z * z)).exp();
    Ok(theta >= bound)
}

/// Inverse of the strictly increasing map z -> Theta_J(z) on (0, 1), by
/// bisection to 1e-12 in z.
pub fn jacobi_theta_inverse(p: f64) -> Result<f64, GaussianError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GaussianError::NonPositiveArgument { z: p });
    }
    let mut lo = 1e-3f64;
    let mut hi = 8.0f64;
    while jacobi_theta(lo)? > p {
        lo /= 2.0;
        if lo < 1e-12 {
            return Ok(lo);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if jacobi_theta(mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Covariance of the Gaussian bridge pinned at time n:
/// Cov(S_i, S_j | S_n) = B_i (B_n - B_j) / B_n for i <= j, where the slice
/// holds the cumulative variances B_0 = 0, B_1, ..., B_n.
pub fn bridge_covariance(partial_vars: &[f64], i: usize, j: usize) -> f64 {
    let n = partial_vars.len() - 1;
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let b_n = partial_vars[n];
    partial_vars[i] * (b_n - partial_vars[j]) / b_n
}

/// Step variances sigma_i^2, each positive and at most sigma_plus^2.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSchedule {
    variances: Vec<f64>,
    sigma_plus: f64,
}

impl GaussianSchedule {
    pub fn new(variances: Vec<f64>, sigma_plus: f64) -> Result<Self, GaussianError> {
        if variances.is_empty() {
            return Err(GaussianError::InvalidVariance { value: f64::NAN });
        }
        for &v in &variances {
            if !(v > 0.0) || v > sigma_plus * sigma_plus + 1e-12 {
                return Err(GaussianError::InvalidVariance { value: v });
            }
        }
        Ok(Self { variances, sigma_plus })
    }

    pub fn homogeneous(variance: f64, n: usize) -> Result<Self, GaussianError> {
        Self::new(vec![variance; n], variance.sqrt())
    }

    pub fn n(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn sigma_plus(&self) -> f64 {
        self.sigma_plus
    }

    /// Cumulative variances B_0 = 0, ..., B_n.
    pub fn partial_vars(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n() + 1);
        out.push(0.0);
        for &v in &self.variances {
            out.push(out.last().unwrap() + v);
        }
        out
    }

    pub fn total_var(&self) -> f64 {
        self.variances.iter().sum()
    }
}

/// A checkpoint for the Gaussian walk: at time t the value must fall in one
/// of the closed intervals; optionally the increment from the previous
/// checkpoint (or the start) is capped: |Z_t - Z_prev - shift| <= cap.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussCheckpoint {
    pub t: usize,
    pub intervals: Vec<(f64, f64)>,
    pub cap: Option<f64>,
    pub shift: f64,
}

impl GaussCheckpoint {
    pub fn interval(t: usize, lo: f64, hi: f64) -> Self {
        Self { t, intervals: vec![(lo, hi)], cap: None, shift: 0.0 }
    }

    pub fn with_cap(mut self, cap: f64, shift: f64) -> Self {
        self.cap = Some(cap);
        self.shift = shift;
        self
    }
}

/// Result of a checkpoint-probability computation. The standard error is
/// present only when the Monte Carlo fallback ran.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointProb {
    pub value: f64,
    pub stderr: Option<f64>,
}

/// Probability that the Gaussian walk started at 0 satisfies every checkpoint
/// constraint. Up to 8 checkpoints are chained by numerical integration over
/// the checkpoint values; more fall back to seeded Monte Carlo (2e5 samples,
/// seed 0x6a75).
pub fn gaussian_checkpoint_prob(
    gsched: &GaussianSchedule,
    checkpoints: &[GaussCheckpoint],
) -> Result<CheckpointProb, GaussianError> {
    validate_checkpoints(gsched, checkpoints)?;
    if checkpoints.len() <= 8 {
        quadrature_checkpoint_prob(gsched, checkpoints).map(|v| CheckpointProb {
            value: v,
            stderr: None,
        })
    } else {
        let est = mc_checkpoint_prob(gsched, checkpoints, 200_000, 0x6a75);
        Ok(CheckpointProb { value: est.value, stderr: Some(est.stderr) })
    }
}

fn validate_checkpoints(
    gsched: &GaussianSchedule,
    checkpoints: &[GaussCheckpoint],
) -> Result<(), GaussianError> {
    let mut prev = 0usize;
    for cp in checkpoints {
        if cp.t < 1 || cp.t > gsched.n() || (prev > 0 && cp.t <= prev) {
            return Err(GaussianError::InvalidCheckpoint(format!(
                "times must be strictly increasing within 1..={}",
                gsched.n()
            )));
        }
        if cp.intervals.is_empty() {
            return Err(GaussianError::InvalidCheckpoint("empty interval list".into()));
        }
        for &(lo, hi) in &cp.intervals {
            if !(lo <= hi) {
                return Err(GaussianError::InvalidCheckpoint(format!(
                    "interval [{lo}, {hi}] is empty"
                )));
            }
        }
        prev = cp.t;
    }
    Ok(())
}

// Block variance between consecutive checkpoint times.
fn block_vars(gsched: &GaussianSchedule, checkpoints: &[GaussCheckpoint]) -> Vec<f64> {
    let pv = gsched.partial_vars();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut prev = 0usize;
    for cp in checkpoints {
        out.push(pv[cp.t] - pv[prev]);
        prev = cp.t;
    }
    out
}

// Chained one-dimensional integration: the density over the current
// checkpoint value is tabulated on a trapezoid grid (pitch 1/32) and pushed
// through the Gaussian transition to the next checkpoint. A single
// checkpoint without a cap is evaluated in closed form.
fn quadrature_checkpoint_prob(
    gsched: &GaussianSchedule,
    checkpoints: &[GaussCheckpoint],
) -> Result<f64, GaussianError> {
    if checkpoints.is_empty() {
        return Ok(1.0);
    }
    let vars = block_vars(gsched, checkpoints);
    if checkpoints.len() == 1 && checkpoints[0].cap.is_none() {
        let sd = vars[0].sqrt();
        let mut p = 0.0;
        for &(lo, hi) in &checkpoints[0].intervals {
            p += std_normal_cdf(hi / sd) - std_normal_cdf(lo / sd);
        }
        return Ok(p);
    }

    // Grid over the first checkpoint's intervals; values are density * weight.
    let mut grid = make_grid(&checkpoints[0].intervals);
    let sd0 = vars[0].sqrt();
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&(x, w)| {
            let ok = match checkpoints[0].cap {
                Some(c) => (x - checkpoints[0].shift).abs() <= c,
                None => true,
            };
            if ok {
                w * gauss_pdf(x, sd0)
            } else {
                0.0
            }
        })
        .collect();

    // density[gi] holds mass per node (trapezoid weight folded in), so the
    // push to the next checkpoint and the final reduction are plain sums.
    for (j, cp) in checkpoints.iter().enumerate().skip(1) {
        let sd = vars[j].sqrt();
        let next_grid = make_grid(&cp.intervals);
        let mut next = vec![0.0f64; next_grid.len()];
        for (ni, &(y, wy)) in next_grid.iter().enumerate() {
            let mut acc = 0.0;
            for (gi, &(x, _)) in grid.iter().enumerate() {
                let d = density[gi];
                if d == 0.0 {
                    continue;
                }
                if let Some(c) = cp.cap {
                    if (y - x - cp.shift).abs() > c {
                        continue;
                    }
                }
                acc += d * gauss_pdf(y - x, sd);
            }
            next[ni] = acc * wy;
        }
        grid = next_grid;
        density = next;
    }
    Ok(density.iter().sum())
}

// Trapezoid nodes (position, weight) covering each interval with pitch 1/32.
fn make_grid(intervals: &[(f64, f64)]) -> Vec<(f64, f64)> {
    const H: f64 = 1.0 / 32.0;
    let mut out = Vec::new();
    for &(lo, hi) in intervals {
        let cells = (((hi - lo) / H).ceil() as usize).max(1);
        let h = (hi - lo) / cells as f64;
        for k in 0..=cells {
            let w = if k == 0 || k == cells { 0.5 * h } else { h };
            out.push((lo + h * k as f64, w));
        }
    }
    out
}

fn gauss_pdf(x: f64, sd: f64) -> f64 {
    (-0.5 * (x / sd) * (x / sd)).exp() / (sd * (2.0 * PI).sqrt())
}

/// Monte Carlo estimate of the same checkpoint event (always available; the
/// cross-check for the quadrature path).
pub fn mc_checkpoint_prob(
    gsched: &GaussianSchedule,
    checkpoints: &[GaussCheckpoint],
    samples: u64,
    seed: u64,
) -> McEstimate {
    let vars = block_vars(gsched, checkpoints);
    let mut rng = rng_for_task(seed, 1);
    let mut hits = 0u64;
    for _ in 0..samples {
        let mut prev = 0.0f64;
        let mut ok = true;
        for (j, cp) in checkpoints.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let value = prev + vars[j].sqrt() * z;
            let in_set = cp.intervals.iter().any(|&(lo, hi)| value >= lo && value <= hi);
            let cap_ok = match cp.cap {
                Some(c) => (value - prev - cp.shift).abs() <= c,
                None => true,
            };
            if !(in_set && cap_ok) {
                ok = false;
                break;
            }
            prev = value;
        }
        if ok {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let var = p * (1.0 - p);
    McEstimate {
        value: p,
        stderr: (var / samples as f64).sqrt(),
        samples,
        seed,
        accepted_fraction: p,
    }
}

/// Monte Carlo estimate of the pinned-bridge tube probability
/// P(max_i d(S_i, [0 ^ x, 0 v x]) <= s sqrt(n) | S_n = x) for the Gaussian
/// walk with the given step variances.
///
/// The bridge is sampled exactly by sequential conditioning: given S_{i-1}
/// and the pin S_n = x, the next value is Gaussian with mean interpolated by
/// the remaining variance and variance sigma_i^2 (R_i - sigma_i^2) / R_i
/// where R_i is the variance remaining before step i. Deterministic given the
/// seed.
pub fn mc_gaussian_bridge_smallball(
    gsched: &GaussianSchedule,
    x: f64,
    s: f64,
    samples: u64,
    seed: u64,
) -> McEstimate {
    let n = gsched.n();
    let radius = s * (n as f64).sqrt();
    let lo = x.min(0.0) - radius;
    let hi = x.max(0.0) + radius;
    let total = gsched.total_var();
    let mut rng = rng_for_task(seed, 2);
    let mut hits = 0u64;
    for _ in 0..samples {
        let mut pos = 0.0f64;
        let mut remaining = total;
        let mut inside = true;
        for i in 0..n - 1 {
            let v = gsched.variances[i];
            let mean = pos + (x - pos) * v / remaining;
            let cond_var = v * (remaining - v) / remaining;
            let z: f64 = rng.sample(StandardNormal);
            pos = mean + cond_var.sqrt() * z;
            remaining -= v;
            if pos < lo || pos > hi {
                inside = false;
                break;
            }
        }
        if inside {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let var = p * (1.0 - p);
    McEstimate {
        value: p,
        stderr: (var / samples as f64).sqrt(),
        samples,
        seed,
        accepted_fraction: p,
    }
}

/// Samples the pinned bridge once and returns the positions at times 0..=n
/// (S_0 = 0, S_n = x). Exposed for marginal-variance diagnostics.
pub fn sample_pinned_bridge(
    gsched: &GaussianSchedule,
    x: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<f64> {
    let n = gsched.n();
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut pos = 0.0f64;
    let mut remaining = gsched.total_var();
    for i in 0..n - 1 {
        let v = gsched.variances[i];
        let mean = pos + (x - pos) * v / remaining;
        let cond_var = v * (remaining - v) / remaining;
        let z: f64 = rng.sample(StandardNormal);
        pos = mean + cond_var.sqrt() * z;
        remaining -= v;
        out.push(pos);
    }
    out.push(x);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn theta_large_argument_saturates() {
        assert_abs_diff_eq!(jacobi_theta(10.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn theta_at_one_half() {
        // Frozen from both summation routes; the two agree to 1e-14.
        let v = jacobi_theta(0.5).unwrap();
        assert_abs_diff_eq!(v, 0.036055, epsilon = 1e-6);
        assert_abs_diff_eq!(v, 0.0360547563, epsilon = 1e-9);
        assert_abs_diff_eq!(
            jacobi_theta_alternating(0.5),
            jacobi_theta_dual(0.5),
            epsilon = 1e-14
        );
    }

    #[test]
    fn theta_two_routes_agree_on_overlap() {
        // Absolute agreement: the alternating form loses relative precision
        // below z ~ 0.4 to cancellation, which is why jacobi_theta switches.
        for i in 0..=40 {
            let z = 0.4 + 0.065 * i as f64;
            let a = jacobi_theta_alternating(z);
            let d = jacobi_theta_dual(z);
            assert!((a - d).abs() <= 1e-14, "z={z}: alternating {a} vs dual {d}");
        }
    }

    #[test]
    fn theta_monotone_increasing() {
        let mut prev = 0.0;
        for i in 1..=60 {
            let z = 0.05 * i as f64;
            let v = jacobi_theta(z).unwrap();
            assert!(v >= prev, "theta not monotone at z={z}");
            prev = v;
        }
    }

    #[test]
    fn theta_inverse_round_trips() {
        for &z in &[0.2, 0.45, 0.8, 1.5, 2.5] {
            let p = jacobi_theta(z).unwrap();
            let back = jacobi_theta_inverse(p).unwrap();
            assert_abs_diff_eq!(back, z, epsilon = 1e-9);
        }
        assert!(jacobi_theta_inverse(0.0).is_err());
        assert!(jacobi_theta_inverse(1.0).is_err());
    }

    #[test]
    fn theta_rejects_nonpositive() {
        assert!(matches!(
            jacobi_theta(0.0),
            Err(GaussianError::NonPositiveArgument { .. })
        ));
        assert!(jacobi_theta(-1.0).is_err());
    }

    #[test]
    fn theta_small_z_inequality_examples() {
        // z = 0.5, eps = 1: exp(-2 pi^2 / 2) = 5.18e-5 <= 0.036.
        assert!(theta_small_z_check(0.5, 1.0).unwrap());
        assert!(theta_small_z_check(5.0, 0.3).unwrap());
        assert!(theta_small_z_check(0.05, 0.1).unwrap());
    }

    #[test]
    fn bridge_covariance_formula() {
        // Homogeneous unit variances, n = 4: Cov(S_i, S_i | S_4) = i(4-i)/4.
        let pv = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(bridge_covariance(&pv, 2, 2), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bridge_covariance(&pv, 4, 4), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bridge_covariance(&pv, 1, 3), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(
            bridge_covariance(&pv, 3, 1),
            bridge_covariance(&pv, 1, 3),
            epsilon = 0.0
        );
    }

    #[test]
    fn bridge_covariance_matrix_is_psd() {
        // Smallest eigenvalue of the full covariance matrix stays above -1e-10,
        // checked by the power method on the shifted matrix for n = 24.
        let n = 24usize;
        let mut pv = vec![0.0f64];
        for i in 0..n {
            pv.push(pv[i] + 0.5 + 0.4 * ((i % 3) as f64));
        }
        let dim = n - 1; // interior times 1..n-1
        let mat: Vec<Vec<f64>> = (1..n)
            .map(|i| (1..n).map(|j| bridge_covariance(&pv, i, j)).collect())
            .collect();
        // Gershgorin upper bound, then invert the spectrum via shift.
        let upper: f64 = mat
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut v = vec![1.0f64; dim];
        for _ in 0..600 {
            // w = (upper I - M) v amplifies the smallest eigenvalue of M.
            let mut w = vec![0.0f64; dim];
            for i in 0..dim {
                let mut acc = upper * v[i];
                for j in 0..dim {
                    acc -= mat[i][j] * v[j];
                }
                w[i] = acc;
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            for i in 0..dim {
                v[i] = w[i] / norm;
            }
        }
        let mut rayleigh = 0.0;
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..dim {
                acc += mat[i][j] * v[j];
            }
            rayleigh += v[i] * acc;
        }
        assert!(rayleigh >= -1e-10, "smallest eigenvalue estimate {rayleigh}");
    }

    #[test]
    fn single_checkpoint_closed_form() {
        let gs = GaussianSchedule::homogeneous(0.7, 50).unwrap();
        let b_n = gs.total_var();
        let cp = GaussCheckpoint::interval(50, -0.5, 0.5);
        let got = gaussian_checkpoint_prob(&gs, &[cp]).unwrap();
        let want = std_normal_cdf(0.5 / b_n.sqrt()) - std_normal_cdf(-0.5 / b_n.sqrt());
        assert_abs_diff_eq!(got.value, want, epsilon = 1e-14);
        assert!(got.stderr.is_none());
    }

    #[test]
    fn wide_middle_checkpoint_marginalizes_away() {
        let gs = GaussianSchedule::homogeneous(1.0, 64).unwrap();
        let single = gaussian_checkpoint_prob(&gs, &[GaussCheckpoint::interval(64, -1.0, 1.0)])
            .unwrap();
        let wide = 200.0;
        let two = gaussian_checkpoint_prob(
            &gs,
            &[
                GaussCheckpoint::interval(32, -wide, wide),
                GaussCheckpoint::interval(64, -1.0, 1.0),
            ],
        )
        .unwrap();
        assert_abs_diff_eq!(single.value, two.value, epsilon = 2e-4);
    }

    #[test]
    fn quadrature_matches_mc_on_three_checkpoints() {
        let gs = GaussianSchedule::new(
            (0..96).map(|i| 0.6 + 0.3 * ((i % 2) as f64)).collect(),
            1.0,
        )
        .unwrap();
        let cps = vec![
            GaussCheckpoint::interval(32, -6.0, 6.0).with_cap(7.0, 0.0),
            GaussCheckpoint::interval(64, -8.0, 4.0).with_cap(9.0, 0.0),
            GaussCheckpoint::interval(96, -3.0, 3.0),
        ];
        let quad = gaussian_checkpoint_prob(&gs, &cps).unwrap();
        let mc = mc_checkpoint_prob(&gs, &cps, 400_000, 99);
        assert!(
            (quad.value - mc.value).abs() <= 3.0 * mc.stderr,
            "quad {} vs mc {} (se {})",
            quad.value,
            mc.value,
            mc.stderr
        );
    }

    #[test]
    fn bridge_smallball_huge_radius_is_certain() {
        let gs = GaussianSchedule::homogeneous(1.0, 32).unwrap();
        let est = mc_gaussian_bridge_smallball(&gs, 0.0, 50.0, 10_000, 1);
        assert_eq!(est.value, 1.0);
    }

    #[test]
    fn bridge_smallball_dominates_theta_bound() {
        let gs = GaussianSchedule::new(
            (0..128).map(|i| if i % 2 == 0 { 1.0 } else { 0.49 }).collect(),
            1.0,
        )
        .unwrap();
        for &(x, s) in &[(0.0, 0.5), (4.0, 0.6), (-6.0, 0.8)] {
            let est = mc_gaussian_bridge_smallball(&gs, x, s, 100_000, 7);
            let bound = jacobi_theta(s / gs.sigma_plus()).unwrap();
            assert!(
                est.value + 3.0 * est.stderr >= bound,
                "x={x}, s={s}: {} + 3*{} < {bound}",
                est.value,
                est.stderr
            );
        }
    }

    #[test]
    fn homogeneous_bridge_smallball_matches_theta_limit() {
        // Pinned at 0 with homogeneous steps, the tube probability converges
        // to Theta_J(s sqrt(n / B_n)) from above; the sampling-grid bias
        // decays like 1/sqrt(n), so n = 8192 brings it under the coarse
        // tolerance.
        let n = 8192usize;
        let gs = GaussianSchedule::homogeneous(1.0, n).unwrap();
        let s = 0.8f64;
        let est = mc_gaussian_bridge_smallball(&gs, 0.0, s, 40_000, 3);
        let limit = jacobi_theta(s * (n as f64 / gs.total_var()).sqrt()).unwrap();
        assert!(est.value + 3.0 * est.stderr >= limit, "discrete max must dominate");
        assert!(
            (est.value - limit).abs() <= 0.012 + 3.0 * est.stderr,
            "estimate {} vs limit {limit}",
            est.value
        );
    }

    #[test]
    fn bridge_sampler_marginal_variance_matches_covariance() {
        let n = 64usize;
        let gs = GaussianSchedule::new(
            (0..n).map(|i| 0.5 + 0.5 * ((i % 2) as f64)).collect(),
            1.0,
        )
        .unwrap();
        let pv = gs.partial_vars();
        let x = 3.0f64;
        let reps = 60_000usize;
        let mut rng = rng_for_task(42, 3);
        let k = 24usize;
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for _ in 0..reps {
            let path = sample_pinned_bridge(&gs, x, &mut rng);
            let v = path[k];
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / reps as f64;
        let var = sumsq / reps as f64 - mean * mean;
        let want_mean = x * pv[k] / pv[n];
        let want_var = bridge_covariance(&pv, k, k);
        // 4 standard errors of the variance estimator ~ var sqrt(2/reps).
        let tol = 4.0 * want_var * (2.0 / reps as f64).sqrt();
        assert!((mean - want_mean).abs() <= 4.0 * (want_var / reps as f64).sqrt());
        assert!((var - want_var).abs() <= tol, "var {var} vs {want_var}");
    }

    #[test]
    fn theta_empirical_threshold_for_small_eps() {
        // The harness reports the largest grid z at which the epsilon-slack
        // inequality still holds; for eps = 0.1 it holds over the whole grid.
        let mut z_eps = 0.0;
        for i in 1..=300 {
            let z = 0.02 * i as f64;
            if theta_small_z_check(z, 0.1).unwrap() {
                z_eps = z;
            } else {
                break;
            }
        }
        assert!(z_eps >= 5.9, "inequality failed before z = 6: {z_eps}");
    }
}
