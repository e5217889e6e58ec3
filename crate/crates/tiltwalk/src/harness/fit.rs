//! Envelope fitting: extracting empirical constants for bounds of the shape
//! c_- e^{-r_- w} <= q <= c_+ e^{-r_+ w} from grid data, with separate decay
//! rates for the two sides.
//!
//! The fit is deterministic and order-independent: points are sorted before
//! any reduction. Rates are certified, not regressed: for each side the
//! constant C(rate) that makes the envelope valid over all points is traced
//! along a rate grid, and the chosen rate is the most aggressive one whose
//! constant stays within a small slack of the optimal constant. On clean
//! exponential data this recovers the true rate; on mixed data it yields the
//! slowest (upper side) and fastest (lower side) observed decays. The spread
//! compares the two constants after shifting w to start at the smallest
//! observed value, so it measures the envelope gap at the near edge of the
//! regime rather than an extrapolation to w = 0.

/// A fitted two-sided exponential envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    /// Lower-envelope decay rate: q >= c_minus * exp(-rate_minus * (w - w_min)).
    pub rate_minus: f64,
    /// Upper-envelope decay rate: q <= c_plus * exp(-rate_plus * (w - w_min)).
    pub rate_plus: f64,
    pub c_minus: f64,
    pub c_plus: f64,
    /// c_plus / c_minus.
    pub spread: f64,
    /// Smallest observed w (the envelope anchor).
    pub w_min: f64,
}

const RATE_STEPS: usize = 400;
const SLACK: f64 = 0.02;

/// Fits both envelope sides to (w, ln q) points with rates in [0, rate_max].
/// Returns None on an empty input.
pub fn fit_envelope(points: &[(f64, f64)], rate_max: f64) -> Option<Envelope> {
    if points.is_empty() {
        return None;
    }
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
    });
    let w_min = pts[0].0;
    for p in &mut pts {
        p.0 -= w_min;
    }
    let w_span = pts.last().unwrap().0;

    if w_span < 1e-9 {
        // No decay direction in the data: plain min/max envelope.
        let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        return Some(Envelope {
            rate_minus: 0.0,
            rate_plus: 0.0,
            c_minus: lo.exp(),
            c_plus: hi.exp(),
            spread: (hi - lo).exp(),
            w_min,
        });
    }

    let upper_at = |rate: f64| -> f64 {
        pts.iter()
            .map(|&(w, lq)| lq + rate * w)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let lower_at = |rate: f64| -> f64 {
        pts.iter()
            .map(|&(w, lq)| lq + rate * w)
            .fold(f64::INFINITY, f64::min)
    };

    let base_upper = upper_at(0.0);
    let mut rate_plus = 0.0;
    for k in 0..=RATE_STEPS {
        let rate = rate_max * k as f64 / RATE_STEPS as f64;
        if upper_at(rate) <= base_upper + SLACK {
            rate_plus = rate;
        } else {
            break;
        }
    }
    let base_lower = lower_at(rate_max);
    let mut rate_minus = rate_max;
    for k in (0..=RATE_STEPS).rev() {
        let rate = rate_max * k as f64 / RATE_STEPS as f64;
        if lower_at(rate) >= base_lower - SLACK {
            rate_minus = rate;
        } else {
            break;
        }
    }
    let ln_c_plus = upper_at(rate_plus);
    let ln_c_minus = lower_at(rate_minus);
    Some(Envelope {
        rate_minus,
        rate_plus,
        c_minus: ln_c_minus.exp(),
        c_plus: ln_c_plus.exp(),
        spread: (ln_c_plus - ln_c_minus).exp(),
        w_min,
    })
}

/// Least squares for ln q = coeffs . regressors by normal equations.
/// Returns the coefficient vector; `rows` holds (regressor vector, ln q).
pub fn least_squares(rows: &[(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let dim = rows.first()?.0.len();
    let mut ata = vec![vec![0.0f64; dim]; dim];
    let mut atb = vec![0.0f64; dim];
    let mut sorted: Vec<&(Vec<f64>, f64)> = rows.iter().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (x, y) in sorted {
        for i in 0..dim {
            atb[i] += x[i] * y;
            for j in 0..dim {
                ata[i][j] += x[i] * x[j];
            }
        }
    }
    // Gaussian elimination with partial pivoting.
    let mut m = ata;
    let mut b = atb;
    for col in 0..dim {
        let pivot = (col..dim).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..dim {
            let f = m[row][col] / m[col][col];
            for k in col..dim {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = vec![0.0f64; dim];
    for col in (0..dim).rev() {
        let mut acc = b[col];
        for k in col + 1..dim {
            acc -= m[col][k] * out[k];
        }
        out[col] = acc / m[col][col];
    }
    Some(out)
}
