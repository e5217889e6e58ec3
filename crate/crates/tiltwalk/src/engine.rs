//! Exact dynamic programming for constrained lattice walks.
//!
//! A walk starts at an integer u and takes lattice-law steps; events are
//! expressed as per-step closed bands (with an optional strict floor),
//! checkpoint constraints (allowed sets and capped increments between
//! checkpoints), and an optional pinned endpoint. All probabilities are
//! computed by forward propagation of a position distribution over an integer
//! window, exact up to double rounding, with an explicit log-scale so that
//! masses of order e^{-100000} remain representable.
//!
//! Independent combinatorial oracles (exhaustive path enumeration and the
//! reflection principle for the +-1 walk) live here as well; they share the
//! declarative constraint predicate but none of the propagation code.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::StepSchedule;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("constraint infeasible at time {time}: band is empty")]
    InfeasibleConstraint { time: usize },
    #[error("event has probability zero")]
    ZeroProbabilityEvent,
    #[error("enumeration would visit {paths:.3e} paths, above the 1e8 cap")]
    TooLarge { paths: f64 },
    #[error("parity violation: n + v - u must be even (u={u}, v={v}, n={n})")]
    ParityViolation { u: i64, v: i64, n: usize },
    #[error("engine operations require lattice laws")]
    NonLatticeLaw,
    #[error("unsupported constraint for this operation: {0}")]
    Unsupported(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// A closed interval band; a missing edge means unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Band {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo: Some(lo), hi: Some(hi) }
    }

    pub fn at_least(lo: f64) -> Self {
        Self { lo: Some(lo), hi: None }
    }

    pub fn at_most(hi: f64) -> Self {
        Self { lo: None, hi: Some(hi) }
    }

    fn lo_f(&self) -> f64 {
        self.lo.unwrap_or(f64::NEG_INFINITY)
    }

    fn hi_f(&self) -> f64 {
        self.hi.unwrap_or(f64::INFINITY)
    }

    /// Smallest admissible integer. The strict flag applies to the lower edge
    /// only (floor events are the one place the two conventions differ).
    /// Edges carry the accumulated rounding of partial means, so an edge
    /// within EDGE_FUZZ of a lattice point is treated as sitting on it.
    fn int_lo(&self, strict: bool) -> i64 {
        let lo = self.lo_f();
        if lo == f64::NEG_INFINITY {
            i64::MIN / 4
        } else if strict {
            (lo + EDGE_FUZZ).floor() as i64 + 1
        } else {
            (lo - EDGE_FUZZ).ceil() as i64
        }
    }

    fn int_hi(&self) -> i64 {
        let hi = self.hi_f();
        if hi == f64::INFINITY {
            i64::MAX / 4
        } else {
            (hi + EDGE_FUZZ).floor() as i64
        }
    }

    fn admits(&self, x: i64, strict: bool) -> bool {
        x >= self.int_lo(strict) && x <= self.int_hi()
    }
}

// Tolerance for comparing lattice points against real band edges built from
// accumulated partial means.
const EDGE_FUZZ: f64 = 1e-9;

/// Allowed values at a checkpoint time: an explicit integer set or a closed
/// interval. Omitted means any value (useful for increment caps alone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckpointSet {
    Explicit(Vec<i64>),
    Interval { lo: f64, hi: f64 },
}

/// A constraint at a fixed time: membership of S_t in a set, and optionally a
/// cap |S_t - S_prev - shift| <= cap against the previous checkpoint (or the
/// start when this is the first one). The shift supports centered events whose
/// drift between checkpoints is nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<CheckpointSet>,
    #[serde(rename = "incCap", default, skip_serializing_if = "Option::is_none")]
    pub inc_cap: Option<f64>,
    #[serde(rename = "incShift", default, skip_serializing_if = "shift_is_zero")]
    pub inc_shift: f64,
}

fn shift_is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Checkpoint {
    pub fn in_set(&self, x: i64) -> bool {
        match &self.set {
            None => true,
            Some(CheckpointSet::Explicit(values)) => values.contains(&x),
            Some(CheckpointSet::Interval { lo, hi }) => {
                x >= (lo - EDGE_FUZZ).ceil() as i64 && x <= (hi + EDGE_FUZZ).floor() as i64
            }
        }
    }

    /// Admissible integer increment range [d_lo, d_hi] when a cap is present.
    pub fn cap_bounds(&self) -> Option<(i64, i64)> {
        self.inc_cap.map(|cap| {
            (
                (self.inc_shift - cap - EDGE_FUZZ).ceil() as i64,
                (self.inc_shift + cap + EDGE_FUZZ).floor() as i64,
            )
        })
    }
}

/// Every event the engine can evaluate: per-step bands in absolute (uncentered)
/// coordinates, a strictness flag for lower band edges, checkpoint
/// constraints, and an optional pinned endpoint at time n.
///
/// `bands` may have length n+1 (entry 0 constrains the start) or length n
/// (steps 1..n only); empty means unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PathConstraint {
    #[serde(default)]
    pub bands: Vec<Option<Band>>,
    #[serde(default)]
    pub strict_floor: bool,
    #[serde(default)]
    pub checkpoints: Vec<Checkpoint>,
    #[serde(default)]
    pub endpoint: Option<i64>,
}

impl PathConstraint {
    pub fn unconstrained() -> Self {
        Self::default()
    }

    /// An unconstrained event with a band vector already sized for a walk of
    /// length n (one slot per time 0..=n). Start here when adding bands at
    /// individual times with [`PathConstraint::with_band_at`].
    pub fn sized(n: usize) -> Self {
        Self { bands: vec![None; n + 1], ..Self::default() }
    }

    /// Floor at `level` for every step 1..=n.
    pub fn floor(n: usize, level: f64, strict: bool) -> Self {
        let mut bands = vec![None; n + 1];
        for b in bands.iter_mut().skip(1) {
            *b = Some(Band::at_least(level));
        }
        Self { bands, strict_floor: strict, ..Self::default() }
    }

    /// Two-sided band lo <= S_i <= hi for every step 1..=n.
    pub fn tube(n: usize, lo: f64, hi: f64) -> Self {
        let mut bands = vec![None; n + 1];
        for b in bands.iter_mut().skip(1) {
            *b = Some(Band::new(lo, hi));
        }
        Self { bands, ..Self::default() }
    }

    pub fn with_endpoint(mut self, v: i64) -> Self {
        self.endpoint = Some(v);
        self
    }

    /// Intersects the band at time i with [lo, hi], growing the vector if
    /// needed.
    pub fn with_band_at(mut self, i: usize, band: Band) -> Self {
        if self.bands.len() <= i {
            self.bands.resize(i + 1, None);
        }
        self.bands[i] = Some(match self.bands[i] {
            None => band,
            Some(old) => Band {
                lo: max_opt(old.lo, band.lo),
                hi: min_opt(old.hi, band.hi),
            },
        });
        self
    }

    pub fn with_checkpoint(mut self, cp: Checkpoint) -> Self {
        self.checkpoints.push(cp);
        self
    }

    /// Band applying to time i (0-based), resolving the two accepted layouts
    /// of the band vector for a walk of length n.
    fn band_at(&self, i: usize, n: usize) -> Option<Band> {
        if self.bands.is_empty() {
            return None;
        }
        if self.bands.len() == n + 1 {
            self.bands[i]
        } else if self.bands.len() == n {
            if i == 0 {
                None
            } else {
                self.bands[i - 1]
            }
        } else {
            None
        }
    }

    fn validate(&self, n: usize) -> Result<(), EngineError> {
        if !(self.bands.is_empty() || self.bands.len() == n || self.bands.len() == n + 1) {
            return Err(EngineError::InvalidInput(format!(
                "bands length {} does not match walk length {n} (want 0, n or n+1)",
                self.bands.len()
            )));
        }
        for i in 0..=n {
            if let Some(b) = self.band_at(i, n) {
                if b.lo_f() > b.hi_f() {
                    return Err(EngineError::InfeasibleConstraint { time: i });
                }
            }
        }
        let mut prev = 0usize;
        for cp in &self.checkpoints {
            if cp.t < 1 || cp.t > n || (prev > 0 && cp.t <= prev) {
                return Err(EngineError::InvalidInput(format!(
                    "checkpoint times must be strictly increasing within 1..={n}"
                )));
            }
            if let Some(c) = cp.inc_cap {
                if !(c >= 0.0) {
                    return Err(EngineError::InvalidInput(
                        "increment cap must be nonnegative".into(),
                    ));
                }
            }
            prev = cp.t;
        }
        Ok(())
    }

    /// Whether an explicit path (positions at times 0..=n) satisfies every
    /// component of the constraint. This is the declarative predicate shared
    /// by the Monte Carlo and enumeration oracles.
    pub fn accepts(&self, path: &[i64]) -> bool {
        let n = path.len() - 1;
        for (i, &x) in path.iter().enumerate() {
            if let Some(b) = self.band_at(i, n) {
                if !b.admits(x, self.strict_floor && i > 0) {
                    return false;
                }
            }
        }
        let mut prev_t = 0usize;
        for cp in &self.checkpoints {
            let x = path[cp.t];
            if !cp.in_set(x) {
                return false;
            }
            if let Some((d_lo, d_hi)) = cp.cap_bounds() {
                let inc = x - path[prev_t];
                if inc < d_lo || inc > d_hi {
                    return false;
                }
            }
            prev_t = cp.t;
        }
        if let Some(v) = self.endpoint {
            if path[n] != v {
                return false;
            }
        }
        true
    }
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Floor event for the centered walk: S_i - m_i >= level for every step.
pub fn centered_floor(schedule: &StepSchedule, level: f64, strict: bool) -> PathConstraint {
    let n = schedule.n();
    let mut bands = vec![None; n + 1];
    for i in 1..=n {
        bands[i] = Some(Band::at_least(schedule.partial_mean(i) + level));
    }
    PathConstraint { bands, strict_floor: strict, ..PathConstraint::default() }
}

/// Two-sided band for the centered walk: lo <= S_i - m_i <= hi.
pub fn centered_tube(schedule: &StepSchedule, lo: f64, hi: f64) -> PathConstraint {
    let n = schedule.n();
    let mut bands = vec![None; n + 1];
    for i in 1..=n {
        let m = schedule.partial_mean(i);
        bands[i] = Some(Band::new(m + lo, m + hi));
    }
    PathConstraint { bands, ..PathConstraint::default() }
}

/// Tube around the segment [0 ^ x, 0 v x] for the centered walk:
/// d(S_i - m_i, [min(0,x), max(0,x)]) <= slack.
pub fn centered_segment_tube(schedule: &StepSchedule, x: f64, slack: f64) -> PathConstraint {
    centered_tube(schedule, x.min(0.0) - slack, x.max(0.0) + slack)
}

/// Nearest lattice endpoint to the centered value v: returns the uncentered
/// pin y = round(v + m_n) together with the centered value it realizes.
pub fn snap_centered_endpoint(schedule: &StepSchedule, v: f64) -> (i64, f64) {
    let m = schedule.partial_mean(schedule.n());
    let y = (v + m).round() as i64;
    (y, y as f64 - m)
}

/// A sub-probability vector over a contiguous integer window. The true mass of
/// cell x is `mass[x - offset] * exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct PositionDistribution {
    offset: i64,
    mass: Vec<f64>,
    log_scale: f64,
}

impl PositionDistribution {
    pub fn point(u: i64) -> Self {
        Self { offset: u, mass: vec![1.0], log_scale: 0.0 }
    }

    fn zero() -> Self {
        Self { offset: 0, mass: Vec::new(), log_scale: 0.0 }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn is_zero(&self) -> bool {
        self.mass.is_empty() || self.mass.iter().all(|&m| m == 0.0)
    }

    /// True probability of cell x.
    pub fn prob_at(&self, x: i64) -> f64 {
        self.raw_at(x) * self.log_scale.exp()
    }

    pub fn log_prob_at(&self, x: i64) -> f64 {
        let m = self.raw_at(x);
        if m == 0.0 {
            f64::NEG_INFINITY
        } else {
            m.ln() + self.log_scale
        }
    }

    fn raw_at(&self, x: i64) -> f64 {
        if x < self.offset || x >= self.offset + self.mass.len() as i64 {
            0.0
        } else {
            self.mass[(x - self.offset) as usize]
        }
    }

    /// Total probability carried by the window.
    pub fn total_prob(&self) -> f64 {
        self.log_total().exp()
    }

    pub fn log_total(&self) -> f64 {
        let t: f64 = self.mass.iter().sum();
        if t == 0.0 {
            f64::NEG_INFINITY
        } else {
            t.ln() + self.log_scale
        }
    }

    /// Cells as (position, true probability), skipping zeros.
    pub fn cells(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let scale = self.log_scale.exp();
        self.mass
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m > 0.0)
            .map(move |(i, &m)| (self.offset + i as i64, m * scale))
    }

    // Pull the magnitude into log_scale once the peak drops below the guard.
    fn maybe_rescale(&mut self) {
        let peak = self.mass.iter().cloned().fold(0.0f64, f64::max);
        if peak > 0.0 && peak < 1e-300 {
            for m in &mut self.mass {
                *m /= peak;
            }
            self.log_scale += peak.ln();
        }
    }
}

/// One step of the Markov evolution: convolve with a lattice law, keep only
/// cells admitted by the optional band (strict lower edge when `strict`), and
/// fold underflowing magnitudes into the log scale.
///
/// A fully annihilated distribution comes back as a zero-probability marker,
/// not an error.
pub fn propagate(
    dist: &PositionDistribution,
    law: &crate::laws::IncrementLaw,
    band: Option<Band>,
    strict: bool,
) -> Result<PositionDistribution, EngineError> {
    let atoms = law.lattice_atoms().map_err(|_| EngineError::NonLatticeLaw)?;
    if dist.is_zero() {
        return Ok(PositionDistribution::zero());
    }
    let src_lo = dist.offset;
    let src_hi = dist.offset + dist.mass.len() as i64 - 1;
    let mut w_lo = src_lo + atoms[0];
    let mut w_hi = src_hi + atoms[atoms.len() - 1];
    if let Some(b) = band {
        w_lo = w_lo.max(b.int_lo(strict));
        w_hi = w_hi.min(b.int_hi());
    }
    if w_lo > w_hi {
        return Ok(PositionDistribution::zero());
    }
    let mut out = convolve_into_window(dist, &atoms, law.probs(), (w_lo, w_hi));
    out.maybe_rescale();
    Ok(out)
}

fn convolve_into_window(
    src: &PositionDistribution,
    atoms: &[i64],
    probs: &[f64],
    window: (i64, i64),
) -> PositionDistribution {
    let (w_lo, w_hi) = window;
    let width = (w_hi - w_lo + 1) as usize;
    let mut mass = vec![0.0f64; width];
    let src_lo = src.offset;
    let src_hi = src.offset + src.mass.len() as i64 - 1;
    for (&a, &p) in atoms.iter().zip(probs) {
        let x_lo = src_lo.max(w_lo - a);
        let x_hi = src_hi.min(w_hi - a);
        if x_lo > x_hi {
            continue;
        }
        let si = (x_lo - src_lo) as usize;
        let di = (x_lo + a - w_lo) as usize;
        let len = (x_hi - x_lo + 1) as usize;
        let (s, d) = (&src.mass[si..si + len], &mut mass[di..di + len]);
        for k in 0..len {
            d[k] += p * s[k];
        }
    }
    PositionDistribution { offset: w_lo, mass, log_scale: src.log_scale }
}

// Per-call DP context: integer atoms, windows and checkpoint masks by time.
struct DpCtx<'a> {
    schedule: &'a StepSchedule,
    atoms: Vec<Vec<i64>>,
    windows: Vec<(i64, i64)>,
    masks: Vec<Option<&'a Checkpoint>>,
}

fn build_ctx<'a>(
    u: i64,
    schedule: &'a StepSchedule,
    constraint: &'a PathConstraint,
) -> Result<Option<DpCtx<'a>>, EngineError> {
    let n = schedule.n();
    constraint.validate(n)?;
    if !schedule.is_lattice() {
        return Err(EngineError::NonLatticeLaw);
    }
    let atoms: Vec<Vec<i64>> = schedule
        .laws()
        .iter()
        .map(|l| l.lattice_atoms().unwrap())
        .collect();

    let mut masks: Vec<Option<&Checkpoint>> = vec![None; n + 1];
    for cp in &constraint.checkpoints {
        masks[cp.t] = Some(cp);
    }

    let mut windows = vec![(0i64, -1i64); n + 1];
    // Forward pass: reachability hull cut by bands and checkpoint ranges.
    let mut lo = u;
    let mut hi = u;
    if let Some(b) = constraint.band_at(0, n) {
        if !b.admits(u, false) {
            return Ok(None);
        }
    }
    windows[0] = (u, u);
    for i in 1..=n {
        lo += atoms[i - 1][0];
        hi += atoms[i - 1][atoms[i - 1].len() - 1];
        if let Some(b) = constraint.band_at(i, n) {
            lo = lo.max(b.int_lo(constraint.strict_floor));
            hi = hi.min(b.int_hi());
        }
        if let Some(cp) = masks[i] {
            match &cp.set {
                Some(CheckpointSet::Explicit(values)) => {
                    if values.is_empty() {
                        return Ok(None);
                    }
                    lo = lo.max(*values.iter().min().unwrap());
                    hi = hi.min(*values.iter().max().unwrap());
                }
                Some(CheckpointSet::Interval { lo: slo, hi: shi }) => {
                    lo = lo.max((slo - EDGE_FUZZ).ceil() as i64);
                    hi = hi.min((shi + EDGE_FUZZ).floor() as i64);
                }
                None => {}
            }
        }
        if lo > hi {
            return Ok(None);
        }
        windows[i] = (lo, hi);
    }
    if let Some(v) = constraint.endpoint {
        let (lo_n, hi_n) = windows[n];
        if v < lo_n || v > hi_n {
            return Ok(None);
        }
        windows[n] = (v, v);
    }
    // Backward pass: drop cells that cannot complete the event.
    for i in (0..n).rev() {
        let amin = atoms[i][0];
        let amax = atoms[i][atoms[i].len() - 1];
        let (nlo, nhi) = windows[i + 1];
        let lo = windows[i].0.max(nlo - amax);
        let hi = windows[i].1.min(nhi - amin);
        if lo > hi {
            return Ok(None);
        }
        windows[i] = (lo, hi);
    }
    Ok(Some(DpCtx { schedule, atoms, windows, masks }))
}

impl<'a> DpCtx<'a> {
    // Propagate a distribution through steps from+1 ..= to, applying windows
    // and explicit checkpoint masks.
    fn run_segment(
        &self,
        mut dist: PositionDistribution,
        from: usize,
        to: usize,
    ) -> PositionDistribution {
        for i in from + 1..=to {
            if dist.is_zero() {
                return PositionDistribution::zero();
            }
            dist = convolve_into_window(
                &dist,
                &self.atoms[i - 1],
                self.schedule.law(i).probs(),
                self.windows[i],
            );
            if let Some(cp) = self.masks[i] {
                if let Some(CheckpointSet::Explicit(_)) = &cp.set {
                    for (k, m) in dist.mass.iter_mut().enumerate() {
                        if !cp.in_set(dist.offset + k as i64) {
                            *m = 0.0;
                        }
                    }
                }
            }
            dist.maybe_rescale();
        }
        dist
    }

    // Backward survival weights b_k(x) = P(steps k+1..n satisfy the event | S_k = x),
    // as a log-scaled vector over windows[k].
    fn backward_weights(&self, k: usize) -> PositionDistribution {
        let n = self.schedule.n();
        let (lo, hi) = self.windows[n];
        let mut b = PositionDistribution {
            offset: lo,
            mass: vec![1.0; (hi - lo + 1) as usize],
            log_scale: 0.0,
        };
        self.apply_mask(&mut b, n);
        for i in (k..n).rev() {
            let (lo, hi) = self.windows[i];
            let width = (hi - lo + 1) as usize;
            let mut mass = vec![0.0f64; width];
            let atoms = &self.atoms[i];
            let probs = self.schedule.law(i + 1).probs();
            let b_lo = b.offset;
            let b_hi = b.offset + b.mass.len() as i64 - 1;
            for (&a, &p) in atoms.iter().zip(probs) {
                let x_lo = lo.max(b_lo - a);
                let x_hi = hi.min(b_hi - a);
                if x_lo > x_hi {
                    continue;
                }
                let di = (x_lo - lo) as usize;
                let si = (x_lo + a - b_lo) as usize;
                let len = (x_hi - x_lo + 1) as usize;
                for k2 in 0..len {
                    mass[di + k2] += p * b.mass[si + k2];
                }
            }
            b = PositionDistribution { offset: lo, mass, log_scale: b.log_scale };
            self.apply_mask(&mut b, i);
            b.maybe_rescale();
        }
        b
    }

    fn apply_mask(&self, dist: &mut PositionDistribution, t: usize) {
        if let Some(cp) = self.masks[t] {
            if let Some(CheckpointSet::Explicit(_)) = &cp.set {
                for (k, m) in dist.mass.iter_mut().enumerate() {
                    if !cp.in_set(dist.offset + k as i64) {
                        *m = 0.0;
                    }
                }
            }
        }
    }

    // Chain capped checkpoints block by block: within a block ordinary
    // propagation, across a boundary the increment cap couples the value at
    // the boundary to the value at the previous one.
    fn run_chained(&self, u: i64) -> PositionDistribution {
        let n = self.schedule.n();
        let capped: Vec<&Checkpoint> = (1..=n)
            .filter_map(|t| self.masks[t])
            .filter(|cp| cp.inc_cap.is_some())
            .collect();
        let mut cur = PositionDistribution::point(u);
        let mut from = 0usize;
        for cp in capped {
            let (d_lo, d_hi) = cp.cap_bounds().unwrap();
            let (w_lo, w_hi) = self.windows[cp.t];
            let width = (w_hi - w_lo + 1) as usize;

            // One segment run per admissible start, combined under a common
            // log offset.
            let mut parts: Vec<(i64, f64, PositionDistribution)> = Vec::new();
            let mut top = f64::NEG_INFINITY;
            for (idx, &m) in cur.mass.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let x = cur.offset + idx as i64;
                let r = self.run_segment(PositionDistribution::point(x), from, cp.t);
                if r.is_zero() {
                    continue;
                }
                let ln_w = m.ln() + cur.log_scale + r.log_scale;
                let peak = r.mass.iter().cloned().fold(0.0f64, f64::max);
                top = top.max(ln_w + peak.ln());
                parts.push((x, ln_w, r));
            }
            if parts.is_empty() || top == f64::NEG_INFINITY {
                return PositionDistribution::zero();
            }
            let mut mass = vec![0.0f64; width];
            for (x, ln_w, r) in parts {
                let scale = (ln_w - top).exp();
                if scale == 0.0 {
                    continue;
                }
                let y_lo = (x + d_lo).max(r.offset).max(w_lo);
                let y_hi = (x + d_hi)
                    .min(r.offset + r.mass.len() as i64 - 1)
                    .min(w_hi);
                for y in y_lo..=y_hi {
                    mass[(y - w_lo) as usize] += scale * r.mass[(y - r.offset) as usize];
                }
            }
            cur = PositionDistribution { offset: w_lo, mass, log_scale: top };
            if cur.is_zero() {
                return PositionDistribution::zero();
            }
            from = cp.t;
        }
        self.run_segment(cur, from, n)
    }
}

/// Final-time distribution under bands and checkpoints (endpoint must be
/// unset; pin it by reading a cell of the result instead).
pub fn endpoint_distribution(
    u: i64,
    schedule: &StepSchedule,
    constraint: &PathConstraint,
) -> Result<PositionDistribution, EngineError> {
    if constraint.endpoint.is_some() {
        return Err(EngineError::Unsupported(
            "endpoint_distribution wants a constraint without a pinned endpoint",
        ));
    }
    let ctx = match build_ctx(u, schedule, constraint)? {
        None => return Ok(PositionDistribution::zero()),
        Some(ctx) => ctx,
    };
    let has_caps = constraint.checkpoints.iter().any(|c| c.inc_cap.is_some());
    let dist = if has_caps {
        ctx.run_chained(u)
    } else {
        ctx.run_segment(PositionDistribution::point(u), 0, schedule.n())
    };
    Ok(dist)
}

/// Exact probability of the full event (bands, checkpoints, endpoint) for the
/// walk started at u. Zero-probability events return exactly 0.
pub fn event_prob(
    u: i64,
    schedule: &StepSchedule,
    constraint: &PathConstraint,
) -> Result<f64, EngineError> {
    Ok(event_log_prob(u, schedule, constraint)?.exp())
}

/// ln of [`event_prob`]; -inf when the event has probability zero. Exact on
/// the log scale far below the smallest positive double.
pub fn event_log_prob(
    u: i64,
    schedule: &StepSchedule,
    constraint: &PathConstraint,
) -> Result<f64, EngineError> {
    let ctx = match build_ctx(u, schedule, constraint)? {
        None => return Ok(f64::NEG_INFINITY),
        Some(ctx) => ctx,
    };
    let has_caps = constraint.checkpoints.iter().any(|c| c.inc_cap.is_some());
    let dist = if has_caps {
        ctx.run_chained(u)
    } else {
        ctx.run_segment(PositionDistribution::point(u), 0, schedule.n())
    };
    Ok(dist.log_total())
}

/// Conditional expectation E_u(f(S_k) | event) via one forward pass to time k
/// and backward survival weights from n to k.
pub fn forward_backward(
    u: i64,
    schedule: &StepSchedule,
    constraint: &PathConstraint,
    k: usize,
    f: impl Fn(i64) -> f64,
) -> Result<f64, EngineError> {
    let n = schedule.n();
    if k > n {
        return Err(EngineError::InvalidInput(format!("time {k} beyond horizon {n}")));
    }
    if constraint.checkpoints.iter().any(|c| c.inc_cap.is_some()) {
        return Err(EngineError::Unsupported(
            "forward_backward does not take increment caps",
        ));
    }
    let ctx = match build_ctx(u, schedule, constraint)? {
        None => return Err(EngineError::ZeroProbabilityEvent),
        Some(ctx) => ctx,
    };
    let fwd = ctx.run_segment(PositionDistribution::point(u), 0, k);
    if fwd.is_zero() {
        return Err(EngineError::ZeroProbabilityEvent);
    }
    let bwd = ctx.backward_weights(k);
    let mut num = 0.0;
    let mut den = 0.0;
    for (idx, &m) in fwd.mass.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let x = fwd.offset + idx as i64;
        let b = bwd.raw_at(x);
        if b == 0.0 {
            continue;
        }
        num += f(x) * m * b;
        den += m * b;
    }
    if den == 0.0 {
        return Err(EngineError::ZeroProbabilityEvent);
    }
    Ok(num / den)
}

/// One-step conditional mean E_u(S_{i+1} | S_i = x, event). Requires x to be
/// reachable at time i within the event. Diagnostic for conditional
/// monotonicity checks.
pub fn one_step_conditional_mean(
    u: i64,
    schedule: &StepSchedule,
    constraint: &PathConstraint,
    i: usize,
    x: i64,
) -> Result<f64, EngineError> {
    let n = schedule.n();
    if i >= n {
        return Err(EngineError::InvalidInput(format!("time {i} must be below horizon {n}")));
    }
    if constraint.checkpoints.iter().any(|c| c.inc_cap.is_some()) {
        return Err(EngineError::Unsupported(
            "one_step_conditional_mean does not take increment caps",
        ));
    }
    let ctx = match build_ctx(u, schedule, constraint)? {
        None => return Err(EngineError::ZeroProbabilityEvent),
        Some(ctx) => ctx,
    };
    let fwd = ctx.run_segment(PositionDistribution::point(u), 0, i);
    if fwd.raw_at(x) == 0.0 {
        return Err(EngineError::ZeroProbabilityEvent);
    }
    let bwd = ctx.backward_weights(i + 1);
    let (w_lo, w_hi) = ctx.windows[i + 1];
    let mut num = 0.0;
    let mut den = 0.0;
    for (&a, &p) in ctx.atoms[i].iter().zip(schedule.law(i + 1).probs()) {
        let y = x + a;
        if y < w_lo || y > w_hi {
            continue;
        }
        let b = bwd.raw_at(y);
        if b == 0.0 {
            continue;
        }
        num += p * b * y as f64;
        den += p * b;
    }
    if den == 0.0 {
        return Err(EngineError::ZeroProbabilityEvent);
    }
    Ok(num / den)
}

/// Transition matrix of a schedule segment under its bands:
/// entry (x, y) = P(S_end = y | S_start = x, bands hold within the segment).
#[derive(Debug, Clone)]
pub struct BlockKernel {
    pub x_lo: i64,
    pub y_lo: i64,
    /// rows[xi][yi], row sums at most 1.
    pub rows: Vec<Vec<f64>>,
}

impl BlockKernel {
    pub fn get(&self, x: i64, y: i64) -> f64 {
        let xi = x - self.x_lo;
        let yi = y - self.y_lo;
        if xi < 0 || yi < 0 {
            return 0.0;
        }
        self.rows
            .get(xi as usize)
            .and_then(|r| r.get(yi as usize))
            .copied()
            .unwrap_or(0.0)
    }
}

/// One forward DP per start value over a schedule segment.
pub fn block_kernel(
    segment: &StepSchedule,
    constraint: &PathConstraint,
    x_range: (i64, i64),
    y_range: (i64, i64),
) -> Result<BlockKernel, EngineError> {
    if constraint.endpoint.is_some() || !constraint.checkpoints.is_empty() {
        return Err(EngineError::Unsupported("block_kernel takes bands only"));
    }
    let mut rows = Vec::with_capacity((x_range.1 - x_range.0 + 1).max(0) as usize);
    for x in x_range.0..=x_range.1 {
        let dist = endpoint_distribution(x, segment, constraint)?;
        let row: Vec<f64> = (y_range.0..=y_range.1).map(|y| dist.prob_at(y)).collect();
        rows.push(row);
    }
    Ok(BlockKernel { x_lo: x_range.0, y_lo: y_range.0, rows })
}

/// Exhaustive path enumeration: the independent oracle for the DP. Enforces a
/// 1e8 cap on the number of paths.
pub fn brute_force_prob(
    u: i64,
    schedule: &StepSchedule,
    constraint: &PathConstraint,
) -> Result<f64, EngineError> {
    let n = schedule.n();
    constraint.validate(n)?;
    if !schedule.is_lattice() {
        return Err(EngineError::NonLatticeLaw);
    }
    let mut paths = 1f64;
    for law in schedule.laws() {
        paths *= law.support_len() as f64;
    }
    if paths > 1e8 {
        return Err(EngineError::TooLarge { paths });
    }
    if let Some(b) = constraint.band_at(0, n) {
        if !b.admits(u, false) {
            return Ok(0.0);
        }
    }
    let atoms: Vec<Vec<i64>> = schedule
        .laws()
        .iter()
        .map(|l| l.lattice_atoms().unwrap())
        .collect();
    let mut path = vec![u; 1];
    let mut total = 0.0;
    recurse(&mut path, 1.0, schedule, constraint, &atoms, &mut total);
    return Ok(total);

    fn recurse(
        path: &mut Vec<i64>,
        weight: f64,
        schedule: &StepSchedule,
        constraint: &PathConstraint,
        atoms: &[Vec<i64>],
        total: &mut f64,
    ) {
        let n = schedule.n();
        let i = path.len(); // time index being generated
        if i > n {
            if constraint.accepts(path) {
                *total += weight;
            }
            return;
        }
        let pos = *path.last().unwrap();
        for (&a, &p) in atoms[i - 1].iter().zip(schedule.law(i).probs()) {
            let next = pos + a;
            // Prune on the band at time i; everything else is checked at the leaf.
            if let Some(b) = constraint.band_at(i, n) {
                if !b.admits(next, constraint.strict_floor) {
                    continue;
                }
            }
            path.push(next);
            recurse(path, weight * p, schedule, constraint, atoms, total);
            path.pop();
        }
    }
}

/// Reflection-principle probability for the homogeneous +-1 walk:
/// P_u(S_n = v, min_{1..n} S_i >= 0)
///   = [C(n,(n+v-u)/2) - C(n,(n+v+u+2)/2)] / 2^n,
/// exact in integer arithmetic for n <= 64.
pub fn reflection_oracle(u: i64, v: i64, n: usize) -> Result<f64, EngineError> {
    if u < 0 || v < 0 {
        return Err(EngineError::InvalidInput(
            "reflection oracle wants u, v >= 0".into(),
        ));
    }
    if n > 64 {
        return Err(EngineError::InvalidInput(
            "reflection oracle is exact only for n <= 64".into(),
        ));
    }
    let diff = n as i64 + v - u;
    if diff % 2 != 0 {
        return Err(EngineError::ParityViolation { u, v, n });
    }
    let k1 = diff / 2;
    let k2 = (n as i64 + v + u + 2) / 2;
    let c1 = binomial(n as u64, k1);
    let c2 = binomial(n as u64, k2);
    let num = c1 as f64 - c2 as f64;
    Ok(num / 2f64.powi(n as i32))
}

fn binomial(n: u64, k: i64) -> u128 {
    if k < 0 || k as u64 > n {
        return 0;
    }
    let k = (k as u64).min(n - k as u64);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::IncrementLaw;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lazy_walk() -> IncrementLaw {
        IncrementLaw::validate(&[-1.0, 0.0, 1.0], &[1.0, 2.0, 1.0], true).unwrap()
    }

    fn pm_one() -> IncrementLaw {
        IncrementLaw::validate(&[-1.0, 1.0], &[1.0, 1.0], true).unwrap()
    }

    #[test]
    fn propagate_point_through_lazy_step() {
        let dist = PositionDistribution::point(0);
        let out = propagate(&dist, &lazy_walk(), None, false).unwrap();
        assert_abs_diff_eq!(out.prob_at(-1), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(out.prob_at(0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.prob_at(1), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn propagate_floor_cuts_negative_cell() {
        let dist = PositionDistribution::point(0);
        let out = propagate(&dist, &pm_one(), Some(Band::at_least(0.0)), false).unwrap();
        assert_eq!(out.prob_at(-1), 0.0);
        assert_abs_diff_eq!(out.prob_at(1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.total_prob(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn propagate_twice_equals_two_step_convolution() {
        let dist = PositionDistribution::point(0);
        let one = propagate(&dist, &pm_one(), None, false).unwrap();
        let two = propagate(&one, &pm_one(), None, false).unwrap();
        assert_abs_diff_eq!(two.prob_at(-2), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(two.prob_at(0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(two.prob_at(2), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn event_prob_ballot_two_steps() {
        let sched = StepSchedule::homogeneous(pm_one(), 2).unwrap();
        let c = PathConstraint::floor(2, 0.0, false);
        // Of the four paths from 1 only (-,-) dies.
        assert_abs_diff_eq!(event_prob(1, &sched, &c).unwrap(), 0.75, epsilon = 1e-15);
        let pinned = c.with_endpoint(1);
        assert_abs_diff_eq!(event_prob(1, &sched, &pinned).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn event_prob_single_lazy_step_endpoint() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 1).unwrap();
        let c = PathConstraint::unconstrained().with_endpoint(0);
        assert_abs_diff_eq!(event_prob(0, &sched, &c).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn event_prob_zero_for_parity_infeasible_endpoint() {
        let sched = StepSchedule::homogeneous(pm_one(), 4).unwrap();
        let c = PathConstraint::unconstrained().with_endpoint(1);
        assert_eq!(event_prob(0, &sched, &c).unwrap(), 0.0);
    }

    #[test]
    fn infeasible_band_is_an_error() {
        let sched = StepSchedule::homogeneous(pm_one(), 2).unwrap();
        let c = PathConstraint::sized(2).with_band_at(1, Band::new(3.0, 1.0));
        assert!(matches!(
            event_prob(0, &sched, &c),
            Err(EngineError::InfeasibleConstraint { time: 1 })
        ));
    }

    #[test]
    fn forward_backward_normalizes_and_matches_enumeration() {
        let sched = StepSchedule::homogeneous(pm_one(), 2).unwrap();
        let c = PathConstraint::floor(2, 0.0, false);
        let one = forward_backward(1, &sched, &c, 1, |_| 1.0).unwrap();
        assert_abs_diff_eq!(one, 1.0, epsilon = 1e-15);
        let mean = forward_backward(1, &sched, &c, 1, |x| x as f64).unwrap();
        // From S_1 = 0 one continuation survives, from S_1 = 2 both do.
        assert_abs_diff_eq!(mean, 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn forward_backward_indicator_reproduces_event_ratio() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 6).unwrap();
        let c = PathConstraint::floor(6, 0.0, false);
        let k = 3;
        let a = 2i64;
        let ind = forward_backward(1, &sched, &c, k, |x| if x >= a { 1.0 } else { 0.0 })
            .unwrap();
        let joint = event_prob(
            1,
            &sched,
            &c.clone().with_band_at(k, Band::at_least(a as f64)),
        )
        .unwrap();
        let base = event_prob(1, &sched, &c).unwrap();
        assert_abs_diff_eq!(ind, joint / base, epsilon = 1e-12);
    }

    #[test]
    fn block_kernel_single_step_is_the_law() {
        let seg = StepSchedule::homogeneous(lazy_walk(), 1).unwrap();
        let k = block_kernel(&seg, &PathConstraint::unconstrained(), (0, 0), (-1, 1)).unwrap();
        assert_abs_diff_eq!(k.get(0, -1), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(k.get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(k.get(0, 1), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn block_kernel_two_steps_and_band_monotonicity() {
        let seg = StepSchedule::homogeneous(pm_one(), 2).unwrap();
        let free = block_kernel(&seg, &PathConstraint::unconstrained(), (0, 0), (-2, 2)).unwrap();
        assert_abs_diff_eq!(free.get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(free.get(0, 2), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(free.get(0, -2), 0.25, epsilon = 1e-15);
        let banded = block_kernel(
            &seg,
            &PathConstraint::tube(2, 0.0, 2.0),
            (0, 0),
            (-2, 2),
        )
        .unwrap();
        for y in -2..=2 {
            assert!(banded.get(0, y) <= free.get(0, y) + 1e-15);
        }
    }

    #[test]
    fn brute_force_unconstrained_total_is_one() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 6).unwrap();
        let p = brute_force_prob(0, &sched, &PathConstraint::unconstrained()).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn brute_force_enforces_cap() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 20).unwrap();
        assert!(matches!(
            brute_force_prob(0, &sched, &PathConstraint::unconstrained()),
            Err(EngineError::TooLarge { .. })
        ));
    }

    #[test]
    fn partition_over_endpoints_matches_unpinned_event() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 8).unwrap();
        let c = PathConstraint::floor(8, 0.0, false);
        let total = event_prob(2, &sched, &c).unwrap();
        let dist = endpoint_distribution(2, &sched, &c).unwrap();
        let summed: f64 = dist.cells().map(|(_, p)| p).sum();
        assert_abs_diff_eq!(summed, total, epsilon = 1e-13);
    }

    #[test]
    fn reflection_oracle_examples() {
        assert_abs_diff_eq!(reflection_oracle(1, 1, 2).unwrap(), 0.5, epsilon = 0.0);
        assert_abs_diff_eq!(reflection_oracle(0, 0, 2).unwrap(), 0.25, epsilon = 0.0);
        assert_eq!(reflection_oracle(0, 10, 6).unwrap(), 0.0);
        assert!(matches!(
            reflection_oracle(0, 1, 2),
            Err(EngineError::ParityViolation { .. })
        ));
    }

    #[test]
    fn dp_matches_reflection_for_pm_one_bridges() {
        let law = pm_one();
        for n in [2usize, 5, 8, 13] {
            let sched = StepSchedule::homogeneous(law.clone(), n).unwrap();
            for u in 0..=4i64 {
                for v in 0..=4i64 {
                    if (n as i64 + v - u) % 2 != 0 {
                        continue;
                    }
                    let c = PathConstraint::floor(n, 0.0, false).with_endpoint(v);
                    let dp = event_prob(u, &sched, &c).unwrap();
                    let refl = reflection_oracle(u, v, n).unwrap();
                    assert_abs_diff_eq!(dp, refl, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn strict_floor_differs_from_weak_floor() {
        let sched = StepSchedule::homogeneous(pm_one(), 2).unwrap();
        let weak = PathConstraint::floor(2, 0.0, false);
        let strict = PathConstraint::floor(2, 0.0, true);
        // From u = 1: weak allows touching 0, strict does not.
        assert_abs_diff_eq!(event_prob(1, &sched, &weak).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(event_prob(1, &sched, &strict).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn relaxing_a_band_never_decreases_probability() {
        let sched = StepSchedule::homogeneous(lazy_walk(), 7).unwrap();
        let tight = PathConstraint::tube(7, -2.0, 2.0);
        let loose = PathConstraint::tube(7, -3.0, 2.0);
        let pt = event_prob(0, &sched, &tight).unwrap();
        let pl = event_prob(0, &sched, &loose).unwrap();
        assert!(pl >= pt);
    }

    #[test]
    fn conditioned_walk_is_a_submartingale_under_the_floor() {
        // E_u(S_{i+1} | S_i = x, floor event) >= x for every reachable x.
        let laws = vec![
            lazy_walk(),
            IncrementLaw::validate(&[-1.0, 0.0, 1.0, 2.0], &[4.0, 2.5, 3.0, 0.5], true).unwrap(),
            lazy_walk(),
            pm_one(),
            lazy_walk(),
        ];
        let sched = StepSchedule::new(laws).unwrap();
        let c = PathConstraint::floor(5, 0.0, false);
        for i in 0..5usize {
            for x in 0..=(2 + i as i64) {
                match one_step_conditional_mean(2, &sched, &c, i, x) {
                    Ok(m) => assert!(
                        m >= x as f64 - 1e-12,
                        "submartingale violated at i={i}, x={x}: {m}"
                    ),
                    Err(EngineError::ZeroProbabilityEvent) => continue,
                    Err(e) => panic!("unexpected error {e}"),
                }
            }
        }
    }

    #[test]
    fn floor_conditioning_raises_level_probabilities() {
        // P_u(S_k >= a | floor) >= P_u(S_k >= a): an FKG-type comparison.
        let sched = StepSchedule::homogeneous(lazy_walk(), 8).unwrap();
        let floor = PathConstraint::floor(8, 0.0, false);
        let base = event_prob(1, &sched, &floor).unwrap();
        for k in [2usize, 4, 7] {
            for a in -2..=3i64 {
                let level = PathConstraint::sized(8).with_band_at(k, Band::at_least(a as f64));
                let uncond = event_prob(1, &sched, &level).unwrap();
                let joint = event_prob(
                    1,
                    &sched,
                    &floor.clone().with_band_at(k, Band::at_least(a as f64)),
                )
                .unwrap();
                assert!(
                    joint / base >= uncond - 1e-12,
                    "FKG violated at k={k}, a={a}"
                );
            }
        }
    }

    #[test]
    fn log_scale_tracks_deep_tube_probabilities() {
        // Forcing the lazy walk to sit at 0 for n steps has probability 2^-n,
        // far below the smallest positive double for n = 1600.
        let n = 1600;
        let sched = StepSchedule::homogeneous(lazy_walk(), n).unwrap();
        let c = PathConstraint::tube(n, 0.0, 0.0);
        let lp = event_log_prob(0, &sched, &c).unwrap();
        assert_abs_diff_eq!(lp, n as f64 * 0.5f64.ln(), epsilon = 1e-9 * n as f64);
    }

    #[test]
    fn checkpoint_sets_and_caps_against_brute_force() {
        let laws = vec![lazy_walk(), pm_one(), lazy_walk(), lazy_walk(), pm_one(), lazy_walk()];
        let sched = StepSchedule::new(laws).unwrap();
        let c = PathConstraint {
            bands: Vec::new(),
            strict_floor: false,
            checkpoints: vec![
                Checkpoint {
                    t: 2,
                    set: Some(CheckpointSet::Interval { lo: -1.0, hi: 2.0 }),
                    inc_cap: Some(1.0),
                    inc_shift: 0.0,
                },
                Checkpoint {
                    t: 5,
                    set: Some(CheckpointSet::Explicit(vec![-1, 0, 2])),
                    inc_cap: Some(2.0),
                    inc_shift: 0.0,
                },
            ],
            endpoint: None,
        };
        let dp = event_prob(0, &sched, &c).unwrap();
        let bf = brute_force_prob(0, &sched, &c).unwrap();
        assert_abs_diff_eq!(dp, bf, epsilon = 1e-13);

        let pinned = c.with_endpoint(1);
        let dp = event_prob(0, &sched, &pinned).unwrap();
        let bf = brute_force_prob(0, &sched, &pinned).unwrap();
        assert_abs_diff_eq!(dp, bf, epsilon = 1e-13);
    }

    #[test]
    fn centered_builders_shift_by_partial_means() {
        let tilted = lazy_walk().tilt(0.4);
        let sched = StepSchedule::homogeneous(tilted, 6).unwrap();
        let c = centered_floor(&sched, 0.0, false);
        let m3 = sched.partial_mean(3);
        match c.bands[3] {
            Some(b) => assert_abs_diff_eq!(b.lo.unwrap(), m3, epsilon = 1e-15),
            None => panic!("expected a band"),
        }
        let (y, v) = snap_centered_endpoint(&sched, 2.0);
        assert_abs_diff_eq!(y as f64 - sched.partial_mean(6), v, epsilon = 1e-12);
        assert!((v - 2.0).abs() <= 0.5);
    }

    #[test]
    fn constraint_json_round_trips() {
        let json = r#"{"bands":[null,{"lo":0.0},{"lo":0.0,"hi":4.0}],"strictFloor":false,"checkpoints":[{"t":2,"set":[0,2],"incCap":2.0}],"endpoint":2}"#;
        let c: PathConstraint = serde_json::from_str(json).unwrap();
        assert_eq!(c.endpoint, Some(2));
        assert_eq!(c.checkpoints.len(), 1);
        let back = serde_json::to_string(&c).unwrap();
        let again: PathConstraint = serde_json::from_str(&back).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_unknown_constraint_fields() {
        let json = r#"{"bands":[],"strictCeiling":true}"#;
        assert!(serde_json::from_str::<PathConstraint>(json).is_err());
    }

    fn arb_law() -> impl Strategy<Value = IncrementLaw> {
        (
            proptest::sample::subsequence(vec![-3i64, -2, -1, 0, 1, 2, 3], 2..=3),
            proptest::collection::vec(1u32..=9, 3),
        )
            .prop_map(|(atoms, weights)| {
                let a: Vec<f64> = atoms.iter().map(|&x| x as f64).collect();
                let w: Vec<f64> = weights.iter().take(a.len()).map(|&x| x as f64).collect();
                IncrementLaw::validate(&a, &w, true).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dp_agrees_with_brute_force(
            laws in proptest::collection::vec(arb_law(), 1..=7),
            u in -2i64..=2,
            floor in proptest::option::of(-2i64..=1),
            endpoint in proptest::option::of(-3i64..=3),
            strict in any::<bool>(),
        ) {
            let n = laws.len();
            let sched = StepSchedule::new(laws).unwrap();
            let mut c = match floor {
                Some(f) => PathConstraint::floor(n, f as f64, strict),
                None => PathConstraint::unconstrained(),
            };
            if let Some(v) = endpoint {
                c = c.with_endpoint(v);
            }
            let dp = event_prob(u, &sched, &c).unwrap();
            let bf = brute_force_prob(u, &sched, &c).unwrap();
            prop_assert!((dp - bf).abs() <= 1e-12, "dp={dp} bf={bf}");
        }

        #[test]
        fn endpoint_partition_sums_to_free_event(
            laws in proptest::collection::vec(arb_law(), 1..=6),
            u in -2i64..=2,
        ) {
            let n = laws.len();
            let sched = StepSchedule::new(laws).unwrap();
            let c = PathConstraint::floor(n, -1.0, false);
            let free = event_prob(u, &sched, &c).unwrap();
            let dist = endpoint_distribution(u, &sched, &c).unwrap();
            let summed: f64 = dist.cells().map(|(_, p)| p).sum();
            prop_assert!((free - summed).abs() <= 1e-12);
        }
    }
}
