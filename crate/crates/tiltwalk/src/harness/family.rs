//! Families of admissible increment schedules: named members (base laws with
//! optional tilt cycles), the class parameters every member must satisfy, and
//! the sweep grids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laws::{ClassParams, IncrementLaw, Moment};
use crate::schedule::StepSchedule;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("unknown theorem id {0:?}; known ids: {1}")]
    UnknownTheorem(String, String),
    #[error("family invalid: {0}")]
    InvalidFamily(String),
}

/// Generator of an n-step schedule for arbitrary n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MemberGen {
    /// Base law tilted by a cycled tilt sequence (empty: the base law i.i.d.).
    Tilted {
        base: IncrementLaw,
        #[serde(default)]
        tilts: Vec<f64>,
    },
    /// Laws taken cyclically.
    Cycle { cycle: Vec<IncrementLaw> },
}

/// A named schedule generator. (No deny_unknown_fields here: serde cannot
/// combine it with the flattened generator enum.)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSpec {
    pub name: String,
    #[serde(flatten)]
    pub gen: MemberGen,
}

impl MemberSpec {
    pub fn schedule(&self, n: usize) -> StepSchedule {
        match &self.gen {
            MemberGen::Tilted { base, tilts } => {
                if tilts.is_empty() {
                    StepSchedule::homogeneous(base.clone(), n).unwrap()
                } else {
                    let laws = (0..n).map(|i| base.tilt(tilts[i % tilts.len()])).collect();
                    StepSchedule::new(laws).unwrap()
                }
            }
            MemberGen::Cycle { cycle } => StepSchedule::cycle(cycle, n).unwrap(),
        }
    }

    /// The distinct step laws this member ever uses.
    pub fn distinct_laws(&self) -> Vec<IncrementLaw> {
        match &self.gen {
            MemberGen::Tilted { base, tilts } => {
                if tilts.is_empty() {
                    vec![base.clone()]
                } else {
                    let mut out: Vec<IncrementLaw> = Vec::new();
                    for &t in tilts {
                        let law = base.tilt(t);
                        if !out.contains(&law) {
                            out.push(law);
                        }
                    }
                    out
                }
            }
            MemberGen::Cycle { cycle } => {
                let mut out = Vec::new();
                for law in cycle {
                    if !out.contains(law) {
                        out.push(law.clone());
                    }
                }
                out
            }
        }
    }

    /// Largest per-step standard deviation.
    pub fn sigma_plus(&self) -> f64 {
        self.distinct_laws()
            .iter()
            .map(|l| l.variance().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Sweep grids. Verifiers clamp these to each bound's stated regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct GridSpec {
    /// Full horizon grid for cheap sweeps.
    pub n_values: Vec<usize>,
    /// Horizons for the heavier bridge-style sweeps.
    pub n_medium: Vec<usize>,
    /// Horizons for local-limit sweeps.
    pub n_llt: Vec<usize>,
    /// Exponents alpha for the local-limit regime |y - m_n| <= n^alpha.
    pub alphas: Vec<f64>,
    /// Smallest tube half-width.
    pub lambda0: f64,
    /// Monte Carlo sample count per estimate.
    pub mc_samples: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_values: vec![64, 128, 256, 512, 1024, 4096],
            n_medium: vec![256, 1024],
            n_llt: vec![256, 1024, 4096],
            alphas: vec![0.0, 0.5, 0.6],
            lambda0: 4.0,
            mc_samples: 100_000,
        }
    }
}

impl GridSpec {
    /// Doubling lambda grid from lambda0 up to sqrt(n).
    pub fn lambdas(&self, n: usize) -> Vec<f64> {
        let cap = (n as f64).sqrt();
        let mut out = Vec::new();
        let mut l = self.lambda0;
        while l <= cap {
            out.push(l);
            l *= 2.0;
        }
        out
    }

    /// Default start/end grid {0, 1, floor(sqrt n / 2), floor(sqrt n),
    /// floor(n^0.6)} clamped to the requested limit exponent.
    pub fn uv_values(&self, n: usize, max_exponent: f64) -> Vec<i64> {
        let root = (n as f64).sqrt();
        let cap = (n as f64).powf(max_exponent);
        let mut vals = vec![
            0i64,
            1,
            (root / 2.0).floor() as i64,
            root.floor() as i64,
            (n as f64).powf(0.6).floor() as i64,
        ];
        vals.retain(|&v| (v as f64) <= cap);
        vals.sort_unstable();
        vals.dedup();
        vals
    }
}

/// A family: class parameters, named members, grids. Every member law must
/// pass the class membership check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FamilySpec {
    pub name: String,
    pub class_params: ClassParams,
    pub members: Vec<MemberSpec>,
    #[serde(default)]
    pub grid: GridSpec,
}

/// Statement-level hypothesis constants realized by a family, computed over
/// the centered versions of all member laws.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyConstants {
    /// min over laws of E(X-bar 1_{X-bar > 0}).
    pub s_min: f64,
    /// max over laws of E(X-bar^4).
    pub a4_max: f64,
    /// max over laws of E|X-bar|^3.
    pub a3_max: f64,
    pub var_min: f64,
    pub var_max: f64,
    /// max per-step standard deviation.
    pub sigma_plus: f64,
}

impl FamilySpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.members.is_empty() {
            return Err(HarnessError::InvalidFamily("no members".into()));
        }
        let period = self.class_params.minorant_periodicity();
        if !(period.irreducible && period.aperiodic) {
            return Err(HarnessError::InvalidFamily(
                "minorant support must be irreducible and aperiodic".into(),
            ));
        }
        for member in &self.members {
            for law in member.distinct_laws() {
                if !law.lattice() {
                    return Err(HarnessError::InvalidFamily(format!(
                        "member {:?} has a non-lattice law",
                        member.name
                    )));
                }
                let verdict = law.check_class_membership(&self.class_params);
                if !verdict.is_member() {
                    return Err(HarnessError::InvalidFamily(format!(
                        "member {:?} fails class membership: {verdict:?}",
                        member.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn constants(&self) -> FamilyConstants {
        let mut s_min = f64::INFINITY;
        let mut a4_max = 0.0f64;
        let mut a3_max = 0.0f64;
        let mut var_min = f64::INFINITY;
        let mut var_max = 0.0f64;
        for member in &self.members {
            for law in member.distinct_laws() {
                let c = law.centered();
                s_min = s_min.min(c.moment(Moment::PositivePart));
                a4_max = a4_max.max(c.moment(Moment::RawPow(4)));
                a3_max = a3_max.max(c.moment(Moment::AbsPow(3.0)));
                var_min = var_min.min(c.variance());
                var_max = var_max.max(c.variance());
            }
        }
        FamilyConstants {
            s_min,
            a4_max,
            a3_max,
            var_min,
            var_max,
            sigma_plus: var_max.sqrt(),
        }
    }

    /// The built-in corpus: four admissible members around the lazy walk,
    /// sharing the minorant {-1: 0.15, 0: 0.2, 1: 0.15} with MGF cap 1.5 on
    /// [-1/2, 1/2].
    pub fn default_corpus() -> FamilySpec {
        let lazy = IncrementLaw::validate(&[-1.0, 0.0, 1.0], &[1.0, 2.0, 1.0], true).unwrap();
        let asym = IncrementLaw::validate(
            &[-1.0, 0.0, 1.0, 2.0],
            &[0.4, 0.25, 0.3, 0.05],
            true,
        )
        .unwrap();
        let wide = IncrementLaw::validate(
            &[-2.0, -1.0, 0.0, 1.0, 2.0],
            &[0.1, 0.2, 0.4, 0.2, 0.1],
            true,
        )
        .unwrap();
        let mut minorant = std::collections::BTreeMap::new();
        minorant.insert(-1, 0.15);
        minorant.insert(0, 0.2);
        minorant.insert(1, 0.15);
        let spec = FamilySpec {
            name: "default-corpus".into(),
            class_params: ClassParams::new(0.5, 1.5, minorant).unwrap(),
            members: vec![
                MemberSpec {
                    name: "lazy".into(),
                    gen: MemberGen::Tilted { base: lazy.clone(), tilts: vec![] },
                },
                MemberSpec {
                    name: "asym".into(),
                    gen: MemberGen::Tilted { base: asym, tilts: vec![] },
                },
                MemberSpec {
                    name: "wide".into(),
                    gen: MemberGen::Tilted { base: wide, tilts: vec![] },
                },
                MemberSpec {
                    name: "tilted-lazy".into(),
                    gen: MemberGen::Tilted { base: lazy, tilts: vec![0.25, 0.1, -0.2] },
                },
            ],
            grid: GridSpec::default(),
        };
        debug_assert!(spec.validate().is_ok());
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_corpus_is_admissible() {
        let fam = FamilySpec::default_corpus();
        fam.validate().unwrap();
        assert_eq!(fam.members.len(), 4);
        let consts = fam.constants();
        assert!(consts.s_min > 0.2);
        assert!(consts.var_min >= 0.45);
        assert!(consts.var_max <= 1.25);
        assert!(consts.a4_max.is_finite());
    }

    #[test]
    fn member_schedules_have_requested_length() {
        let fam = FamilySpec::default_corpus();
        for m in &fam.members {
            let sched = m.schedule(17);
            assert_eq!(sched.n(), 17);
            assert!(sched.is_lattice());
        }
    }

    #[test]
    fn tilt_cycle_distinct_laws() {
        let fam = FamilySpec::default_corpus();
        let tilted = fam.members.iter().find(|m| m.name == "tilted-lazy").unwrap();
        assert_eq!(tilted.distinct_laws().len(), 3);
        assert!(tilted.sigma_plus() <= 0.75);
    }

    #[test]
    fn family_json_round_trips() {
        let fam = FamilySpec::default_corpus();
        let json = serde_json::to_string(&fam).unwrap();
        let back: FamilySpec = serde_json::from_str(&json).unwrap();
        assert_eq!(fam, back);
    }

    #[test]
    fn rejects_member_outside_class() {
        let mut fam = FamilySpec::default_corpus();
        let pm = IncrementLaw::validate(&[-1.0, 1.0], &[1.0, 1.0], true).unwrap();
        fam.members.push(MemberSpec {
            name: "pm-one".into(),
            gen: MemberGen::Tilted { base: pm, tilts: vec![] },
        });
        // The +-1 walk has no mass at 0, so the minorant fails.
        assert!(fam.validate().is_err());
    }

    #[test]
    fn grid_helpers_respect_regimes() {
        let grid = GridSpec::default();
        assert_eq!(grid.lambdas(1024), vec![4.0, 8.0, 16.0, 32.0]);
        let uv = grid.uv_values(256, 0.5);
        assert!(uv.iter().all(|&v| v as f64 <= 16.0));
        assert!(uv.contains(&0) && uv.contains(&16));
        let uv6 = grid.uv_values(256, 0.6);
        assert!(uv6.contains(&27)); // floor(256^0.6)
    }
}
