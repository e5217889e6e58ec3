//! Theorem verifiers over admissible families: the registry, the family and
//! grid types, envelope fitting, and serializable reports.

pub mod family;
pub mod fit;
pub mod report;
pub mod verifiers;

pub use family::{FamilyConstants, FamilySpec, GridSpec, HarnessError, MemberGen, MemberSpec};
pub use fit::{fit_envelope, Envelope};
pub use report::{GridRow, VerificationReport, Verdict};
pub use verifiers::VerifyOptions;

/// Every registered theorem verifier, in the order `verify all` runs them.
pub const REGISTRY: [&str; 14] = [
    "ballot",
    "smallball_free",
    "llt",
    "berry_esseen",
    "bridge_positivity",
    "smallball_bridge",
    "excursion",
    "ceiling",
    "tails",
    "coarse_grain",
    "gaussian_swap",
    "moment_lemmas",
    "truncation",
    "theta",
];

/// Runs one registered verifier over a validated family.
pub fn run_verifier(
    id: &str,
    family: &FamilySpec,
    opts: &VerifyOptions,
) -> Result<VerificationReport, HarnessError> {
    family.validate()?;
    let report = match id {
        "ballot" => verifiers::verify_ballot(family, opts),
        "smallball_free" => verifiers::verify_smallball_free(family, opts),
        "llt" => verifiers::verify_llt(family, opts),
        "berry_esseen" => verifiers::verify_berry_esseen(family, opts),
        "bridge_positivity" => verifiers::verify_bridge_positivity(family, opts),
        "smallball_bridge" => verifiers::verify_smallball_bridge(family, opts),
        "excursion" => verifiers::verify_excursion(family, opts),
        "ceiling" => verifiers::verify_ceiling(family, opts),
        "tails" => verifiers::verify_tails(family, opts),
        "coarse_grain" => verifiers::verify_coarse_grain(family, opts),
        "gaussian_swap" => verifiers::verify_gaussian_swap(family, opts),
        "moment_lemmas" => verifiers::verify_moment_lemmas(family, opts),
        "truncation" => verifiers::verify_truncation(family, opts),
        "theta" => verifiers::verify_theta(family, opts),
        other => {
            return Err(HarnessError::UnknownTheorem(
                other.to_string(),
                REGISTRY.join(", "),
            ))
        }
    };
    Ok(report)
}

/// Runs the whole registry in order.
pub fn run_all(
    family: &FamilySpec,
    opts: &VerifyOptions,
) -> Result<Vec<VerificationReport>, HarnessError> {
    REGISTRY
        .iter()
        .map(|id| run_verifier(id, family, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_rejects_unknown_ids() {
        let family = FamilySpec::default_corpus();
        let opts = VerifyOptions::default();
        assert!(matches!(
            run_verifier("nonsense", &family, &opts),
            Err(HarnessError::UnknownTheorem(..))
        ));
    }

    #[test]
    fn registry_has_no_duplicates() {
        let mut ids: Vec<&str> = REGISTRY.to_vec();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), REGISTRY.len());
    }
}
