//! Increment distributions and the operations every other module is built on:
//! exact moments, the log moment generating function H(z) = ln M(z) and its
//! derivatives, exponential tilting, membership in an admissible class
//! (MGF cap on an interval plus a pointwise minorant), periodicity diagnostics,
//! and the mean-zero truncation coupling used to compare a heavy-stepped walk
//! with a bounded-step one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from law construction and law-level operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawError {
    #[error("law has empty support (no atom with positive weight)")]
    EmptySupport,
    #[error("negative weight {weight} at atom {atom}")]
    NegativeWeight { atom: f64, weight: f64 },
    #[error("atom {atom} is not an integer but the lattice flag is set")]
    NonIntegerAtomOnLattice { atom: f64 },
    #[error("duplicate atom {atom}")]
    DuplicateAtom { atom: f64 },
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },
    #[error("law is not centered (mean = {mean})")]
    NotCentered { mean: f64 },
    #[error("moment hypothesis violated: E|X|^{alpha} = {actual} exceeds bound {bound}")]
    MomentHypothesisViolated { alpha: f64, actual: f64, bound: f64 },
    #[error("target mean {target} outside reachable open range ({lo}, {hi})")]
    TargetOutOfRange { target: f64, lo: f64, hi: f64 },
    #[error("schedule is degenerate: every step is a point mass")]
    DegenerateSchedule,
    #[error("tilt {tilt} outside allowed range [{lo}, {hi}]")]
    TiltOutOfRange { tilt: f64, lo: f64, hi: f64 },
    #[error("truncation level K = {k} must be >= 1")]
    TruncationLevelTooSmall { k: f64 },
}

/// A finite-support probability law on the real line, integer-valued when the
/// lattice flag is set. Atoms are strictly increasing, probabilities are
/// normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementLaw {
    atoms: Vec<f64>,
    probs: Vec<f64>,
    lattice: bool,
}

// The JSON literal {"atoms":[...], "probs":[...], "lattice":bool} is validated
// and renormalized on the way in.
impl<'de> Deserialize<'de> for IncrementLaw {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Lit {
            atoms: Vec<f64>,
            probs: Vec<f64>,
            #[serde(default)]
            lattice: bool,
        }
        let lit = Lit::deserialize(deserializer)?;
        IncrementLaw::validate(&lit.atoms, &lit.probs, lit.lattice)
            .map_err(serde::de::Error::custom)
    }
}

/// Moment selector for [`IncrementLaw::moment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Mean,
    Variance,
    /// E|X|^p for real p >= 1.
    AbsPow(f64),
    /// E X^p for integer p >= 1.
    RawPow(u32),
    /// E(X 1_{X>0}).
    PositivePart,
}

impl IncrementLaw {
    /// Validates and normalizes raw (atom, weight) data into a law.
    ///
    /// Weights need not sum to one; they are rescaled. Atoms must be distinct
    /// and finite, weights nonnegative with at least one positive entry, and
    /// integral when `lattice` is set.
    pub fn validate(atoms: &[f64], weights: &[f64], lattice: bool) -> Result<Self, LawError> {
        if atoms.len() != weights.len() {
            return Err(LawError::EmptySupport);
        }
        for &a in atoms {
            if !a.is_finite() {
                return Err(LawError::NonFinite { what: "atom", value: a });
            }
            if lattice && a != a.round() {
                return Err(LawError::NonIntegerAtomOnLattice { atom: a });
            }
        }
        for (&a, &w) in atoms.iter().zip(weights) {
            if !w.is_finite() {
                return Err(LawError::NonFinite { what: "weight", value: w });
            }
            if w < 0.0 {
                return Err(LawError::NegativeWeight { atom: a, weight: w });
            }
        }
        let mut pairs: Vec<(f64, f64)> = atoms
            .iter()
            .zip(weights)
            .filter(|&(_, &w)| w > 0.0)
            .map(|(&a, &w)| (a, w))
            .collect();
        if pairs.is_empty() {
            return Err(LawError::EmptySupport);
        }
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        for pair in pairs.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(LawError::DuplicateAtom { atom: pair[0].0 });
            }
        }
        let total: f64 = pairs.iter().map(|&(_, w)| w).sum();
        let atoms: Vec<f64> = pairs.iter().map(|&(a, _)| a).collect();
        // Keep already-normalized weights bit-exact so a serialized law
        // deserializes to itself.
        let probs: Vec<f64> = if (total - 1.0).abs() <= 1e-12 {
            pairs.iter().map(|&(_, w)| w).collect()
        } else {
            pairs.iter().map(|&(_, w)| w / total).collect()
        };
        Ok(Self { atoms, probs, lattice })
    }

    /// A point mass at `atom`.
    pub fn point(atom: f64, lattice: bool) -> Result<Self, LawError> {
        Self::validate(&[atom], &[1.0], lattice)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn lattice(&self) -> bool {
        self.lattice
    }

    pub fn support_len(&self) -> usize {
        self.atoms.len()
    }

    pub fn min_atom(&self) -> f64 {
        self.atoms[0]
    }

    pub fn max_atom(&self) -> f64 {
        *self.atoms.last().unwrap()
    }

    /// Integer atoms of a lattice law.
    pub fn lattice_atoms(&self) -> Result<Vec<i64>, LawError> {
        if !self.lattice {
            return Err(LawError::NonIntegerAtomOnLattice { atom: self.atoms[0] });
        }
        Ok(self.atoms.iter().map(|&a| a as i64).collect())
    }

    /// P(X = atom), by exact atom match.
    pub fn prob_of(&self, atom: f64) -> f64 {
        match self
            .atoms
            .binary_search_by(|a| a.partial_cmp(&atom).unwrap())
        {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    /// Exact finite-support moment.
    pub fn moment(&self, kind: Moment) -> f64 {
        match kind {
            Moment::Mean => self.sum(|a| a),
            Moment::Variance => {
                let m = self.mean();
                self.sum(|a| (a - m) * (a - m))
            }
            Moment::AbsPow(p) => self.sum(|a| a.abs().powf(p)),
            Moment::RawPow(p) => self.sum(|a| a.powi(p as i32)),
            Moment::PositivePart => self.sum(|a| if a > 0.0 { a } else { 0.0 }),
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(Moment::Mean)
    }

    pub fn variance(&self) -> f64 {
        self.moment(Moment::Variance)
    }

    fn sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.probs)
            .map(|(&a, &p)| p * f(a))
            .sum()
    }

    /// H(z) = ln M(z) = ln E e^{zX}, evaluated with the exponent shifted by
    /// max(z * atom) so no intermediate overflows for |z * atom| <= 700.
    pub fn log_mgf(&self, z: f64) -> f64 {
        let shift = self.shift(z);
        let total: f64 = self
            .atoms
            .iter()
            .zip(&self.probs)
            .map(|(&a, &p)| p * (z * a - shift).exp())
            .sum();
        shift + total.ln()
    }

    /// H'(z): the mean of the z-tilted law.
    pub fn log_mgf_deriv(&self, z: f64) -> f64 {
        let (m1, _) = self.tilted_moments(z);
        m1
    }

    /// H''(z): the variance of the z-tilted law.
    pub fn log_mgf_second(&self, z: f64) -> f64 {
        let (_, v) = self.tilted_moments(z);
        v
    }

    fn shift(&self, z: f64) -> f64 {
        self.atoms
            .iter()
            .map(|&a| z * a)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn tilted_moments(&self, z: f64) -> (f64, f64) {
        let shift = self.shift(z);
        let mut w0 = 0.0;
        let mut w1 = 0.0;
        for (&a, &p) in self.atoms.iter().zip(&self.probs) {
            let e = p * (z * a - shift).exp();
            w0 += e;
            w1 += e * a;
        }
        let mean = w1 / w0;
        let mut w2 = 0.0;
        for (&a, &p) in self.atoms.iter().zip(&self.probs) {
            let e = p * (z * a - shift).exp();
            w2 += e * (a - mean) * (a - mean);
        }
        (mean, w2 / w0)
    }

    /// Exponential tilt: p(a) -> p(a) e^{ta} / M(t). Support is unchanged.
    pub fn tilt(&self, t: f64) -> IncrementLaw {
        let shift = self.shift(t);
        let weights: Vec<f64> = self
            .atoms
            .iter()
            .zip(&self.probs)
            .map(|(&a, &p)| p * (t * a - shift).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        IncrementLaw {
            atoms: self.atoms.clone(),
            probs: weights.into_iter().map(|w| w / total).collect(),
            lattice: self.lattice,
        }
    }

    /// The centered version: atoms shifted by -mean. Leaves the lattice flag
    /// only when the mean happens to be integral.
    pub fn centered(&self) -> IncrementLaw {
        let m = self.mean();
        let atoms: Vec<f64> = self.atoms.iter().map(|&a| a - m).collect();
        let lattice = self.lattice && m == m.round();
        IncrementLaw { atoms, probs: self.probs.clone(), lattice }
    }

    /// Membership in the class with MGF cap `c0` on [-delta0, delta0] and
    /// pointwise minorant `a`. By convexity of t -> M(t) the cap is checked at
    /// the two endpoints only.
    pub fn check_class_membership(&self, params: &ClassParams) -> MembershipVerdict {
        for &t in &[-params.delta0, params.delta0] {
            let mgf = self.log_mgf(t).exp();
            if mgf > params.c0 {
                return MembershipVerdict::MgfCapExceeded { t, mgf, cap: params.c0 };
            }
        }
        for (&atom, &required) in &params.minorant {
            if required <= 0.0 {
                continue;
            }
            let actual = self.prob_of(atom as f64);
            if actual < required {
                return MembershipVerdict::BelowMinorant { atom, required, actual };
            }
        }
        MembershipVerdict::Member
    }

    /// Irreducibility and aperiodicity of the walk with i.i.d. steps of this
    /// law. Irreducible: the support generates all of the integers (atoms of
    /// both signs, gcd one). Aperiodic: the support is not contained in a
    /// proper coset (gcd of atom differences is one).
    pub fn check_periodicity(&self) -> Result<Periodicity, LawError> {
        let atoms = self.lattice_atoms()?;
        let mut g_atoms: i64 = 0;
        let mut has_pos = false;
        let mut has_neg = false;
        for &a in &atoms {
            g_atoms = gcd(g_atoms, a.abs());
            has_pos |= a > 0;
            has_neg |= a < 0;
        }
        let irreducible = has_pos && has_neg && g_atoms == 1;
        let mut g_diff: i64 = 0;
        for &a in &atoms[1..] {
            g_diff = gcd(g_diff, a - atoms[0]);
        }
        let aperiodic = g_diff == 1;
        Ok(Periodicity { irreducible, aperiodic })
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Outcome of a class-membership check, with a witness on failure.
#[derive(Debug, Clone, PartialEq)]
pub enum MembershipVerdict {
    Member,
    MgfCapExceeded { t: f64, mgf: f64, cap: f64 },
    BelowMinorant { atom: i64, required: f64, actual: f64 },
}

impl MembershipVerdict {
    pub fn is_member(&self) -> bool {
        matches!(self, MembershipVerdict::Member)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Periodicity {
    pub irreducible: bool,
    pub aperiodic: bool,
}

/// Parameters of an admissible class: MGF radius `delta0`, MGF cap `c0`, and a
/// finitely supported pointwise minorant (atom -> lower bound on its mass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams {
    pub delta0: f64,
    pub c0: f64,
    pub minorant: BTreeMap<i64, f64>,
}

impl ClassParams {
    pub fn new(delta0: f64, c0: f64, minorant: BTreeMap<i64, f64>) -> Result<Self, LawError> {
        if !(delta0 >= 0.0) || !delta0.is_finite() {
            return Err(LawError::NonFinite { what: "delta0", value: delta0 });
        }
        if !(c0 > 1.0) || !c0.is_finite() {
            return Err(LawError::NonFinite { what: "c0", value: c0 });
        }
        for (&atom, &v) in &minorant {
            if !(0.0..=1.0).contains(&v) {
                return Err(LawError::NonFinite { what: "minorant entry", value: v });
            }
            let _ = atom;
        }
        Ok(Self { delta0, c0, minorant })
    }

    /// Periodicity of the minorant viewed as the support of a sub-probability.
    /// Families that rely on local limit behaviour need this to report
    /// irreducible and aperiodic.
    pub fn minorant_periodicity(&self) -> Periodicity {
        let atoms: Vec<i64> = self
            .minorant
            .iter()
            .filter(|&(_, &v)| v > 0.0)
            .map(|(&a, _)| a)
            .collect();
        let mut g_atoms = 0i64;
        let mut has_pos = false;
        let mut has_neg = false;
        for &a in &atoms {
            g_atoms = gcd(g_atoms, a.abs());
            has_pos |= a > 0;
            has_neg |= a < 0;
        }
        let mut g_diff = 0i64;
        for &a in atoms.iter().skip(1) {
            g_diff = gcd(g_diff, a - atoms[0]);
        }
        Periodicity {
            irreducible: has_pos && has_neg && g_atoms == 1,
            aperiodic: g_diff == 1,
        }
    }
}

/// Result of the mean-zero truncation coupling at level K.
///
/// For a centered X with E|X|^alpha <= A the construction sets
/// x = K^alpha E(X 1_{|X|>K}) and Y = X 1_{|X|<=K} + x * xi with
/// xi ~ Bernoulli(K^-alpha) independent of X. Then Y is centered, bounded by
/// (A+1)K, and the coupling mismatch probability is at most (A+1)/K^alpha.
#[derive(Debug, Clone)]
pub struct TruncationResult {
    /// Exact product law of Y (atoms merged).
    pub truncated: IncrementLaw,
    /// The compensating atom value x.
    pub atom_value: f64,
    /// The Bernoulli parameter K^-alpha.
    pub bernoulli_param: f64,
    /// Bound (A+1)/K^alpha on the mismatch probability.
    pub mismatch_bound: f64,
    /// Exact mismatch probability Q(X != Y) of the product coupling.
    pub mismatch_prob: f64,
}

/// Builds the truncation coupling. Requires a centered law (|mean| <= 1e-12),
/// E|X|^alpha <= A and K >= 1.
pub fn truncate_couple(
    law: &IncrementLaw,
    k: f64,
    alpha: f64,
    a_bound: f64,
) -> Result<TruncationResult, LawError> {
    let mean = law.mean();
    if mean.abs() > 1e-12 {
        return Err(LawError::NotCentered { mean });
    }
    if k < 1.0 {
        return Err(LawError::TruncationLevelTooSmall { k });
    }
    let abs_alpha = law.moment(Moment::AbsPow(alpha));
    if abs_alpha > a_bound {
        return Err(LawError::MomentHypothesisViolated {
            alpha,
            actual: abs_alpha,
            bound: a_bound,
        });
    }
    let tail_mean: f64 = law
        .atoms
        .iter()
        .zip(&law.probs)
        .filter(|&(&a, _)| a.abs() > k)
        .map(|(&a, &p)| p * a)
        .sum();
    let x = k.powf(alpha) * tail_mean;
    let q = k.powf(-alpha);

    // Product law of (X, xi): value = X 1_{|X|<=K} + x * xi.
    let mut cells: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut push = |value: f64, prob: f64| {
        let key = value.to_bits();
        let entry = cells.entry(key).or_insert((value, 0.0));
        entry.1 += prob;
    };
    for (&a, &p) in law.atoms.iter().zip(&law.probs) {
        let base = if a.abs() <= k { a } else { 0.0 };
        push(base, p * (1.0 - q));
        push(base + x, p * q);
    }
    let mut pairs: Vec<(f64, f64)> = cells.into_values().collect();
    pairs.sort_by(|u, v| u.0.partial_cmp(&v.0).unwrap());
    let atoms: Vec<f64> = pairs.iter().map(|&(a, _)| a).collect();
    let weights: Vec<f64> = pairs.iter().map(|&(_, w)| w).collect();
    let truncated = IncrementLaw::validate(&atoms, &weights, false)?;

    let bound = (a_bound + 1.0) * k;
    for &atom in truncated.atoms() {
        if atom.abs() > bound + 1e-9 {
            return Err(LawError::MomentHypothesisViolated {
                alpha,
                actual: atom.abs(),
                bound,
            });
        }
    }
    let ty_mean = truncated.mean();
    if ty_mean.abs() > 1e-12 {
        return Err(LawError::NotCentered { mean: ty_mean });
    }

    // Exact mismatch of the product coupling.
    let mut mismatch = 0.0;
    for (&a, &p) in law.atoms.iter().zip(&law.probs) {
        let base = if a.abs() <= k { a } else { 0.0 };
        if base != a {
            mismatch += p * (1.0 - q);
        }
        if base + x != a {
            mismatch += p * q;
        }
    }

    Ok(TruncationResult {
        truncated,
        atom_value: x,
        bernoulli_param: q,
        mismatch_bound: (a_bound + 1.0) / k.powf(alpha),
        mismatch_prob: mismatch,
    })
}
