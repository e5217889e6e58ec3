//! Verification reports: per-row evidence, fitted constants, and the verdict,
//! serializable as JSON and as fixed-column CSV.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// One grid evaluation: the inputs, the exact (or estimated) value, and the
/// normalized ratio entering the envelope fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub member: String,
    pub inputs: BTreeMap<String, f64>,
    pub exact: f64,
    pub normalized: f64,
}

impl GridRow {
    pub fn new(member: &str, inputs: &[(&str, f64)], exact: f64, normalized: f64) -> Self {
        Self {
            member: member.to_string(),
            inputs: inputs.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            exact,
            normalized,
        }
    }

    fn sort_key(&self) -> (String, Vec<(String, u64)>) {
        (
            self.member.clone(),
            self.inputs
                .iter()
                .map(|(k, v)| (k.clone(), v.to_bits()))
                .collect(),
        )
    }
}

/// Result of one theorem verifier over a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationReport {
    pub theorem_id: String,
    pub family: String,
    pub verdict: Verdict,
    /// Ratio of the upper to the lower fitted envelope constant.
    pub spread: f64,
    pub spread_cap: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub fitted: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub rows: Vec<GridRow>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Rows sorted on (member, inputs) so concurrent evaluation cannot change
    /// the serialized report.
    pub fn sort_rows(&mut self) {
        self.rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }

    /// One pass/fail line for terminal output.
    pub fn summary_line(&self) -> String {
        let verdict = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        };
        format!(
            "{:<18} {} rows={} skipped={} spread={:.4}",
            self.theorem_id, verdict, self.evaluated, self.skipped, self.spread
        )
    }

    /// Fixed-column CSV. Generic verifiers emit
    /// member,<sorted input keys>,exact,normalized; the local-limit verifier
    /// emits the columns n,y,alpha,exactProb,gaussApprox,ratio,logRatio.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.theorem_id == "llt" {
            out.push_str("member,n,y,alpha,exactProb,gaussApprox,ratio,logRatio\n");
            for row in &self.rows {
                let n = row.inputs.get("n").copied().unwrap_or(f64::NAN);
                let y = row.inputs.get("y").copied().unwrap_or(f64::NAN);
                let alpha = row.inputs.get("alpha").copied().unwrap_or(f64::NAN);
                let gauss = row.inputs.get("gaussApprox").copied().unwrap_or(f64::NAN);
                let ratio = row.normalized;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    row.member,
                    n,
                    y,
                    alpha,
                    row.exact,
                    gauss,
                    ratio,
                    ratio.ln()
                ));
            }
            return out;
        }
        let mut keys: Vec<String> = Vec::new();
        for row in &self.rows {
            for k in row.inputs.keys() {
                if !keys.contains(k) {
                    keys.push(k.clone());
                }
            }
        }
        keys.sort();
        out.push_str("member,");
        out.push_str(&keys.join(","));
        out.push_str(",exact,normalized\n");
        for row in &self.rows {
            out.push_str(&row.member);
            for k in &keys {
                out.push(',');
                match row.inputs.get(k) {
                    Some(v) => out.push_str(&format!("{v}")),
                    None => {}
                }
            }
            out.push_str(&format!(",{},{}\n", row.exact, row.normalized));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> VerificationReport {
        let mut fitted = BTreeMap::new();
        fitted.insert("c_minus".to_string(), 0.4);
        VerificationReport {
            theorem_id: "ballot".into(),
            family: "default-corpus".into(),
            verdict: Verdict::Pass,
            spread: 2.5,
            spread_cap: 10.0,
            evaluated: 2,
            skipped: 0,
            fitted,
            warnings: vec![],
            rows: vec![
                GridRow::new("lazy", &[("n", 64.0), ("u", 1.0)], 0.2, 0.8),
                GridRow::new("lazy", &[("n", 64.0), ("u", 0.0)], 0.1, 0.8),
            ],
        }
    }

    #[test]
    fn csv_has_fixed_columns() {
        let rep = sample_report();
        let csv = rep.to_csv();
        assert!(csv.starts_with("member,n,u,exact,normalized\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn sorting_rows_is_stable_and_deterministic() {
        let mut a = sample_report();
        a.sort_rows();
        let mut b = sample_report();
        b.rows.reverse();
        b.sort_rows();
        assert_eq!(a, b);
        let json_a = serde_json::to_string(&a).unwrap();
        let json_b = serde_json::to_string(&b).unwrap();
        assert_eq!(json_a, json_b);
    }

    #[test]
    fn report_json_round_trips() {
        let rep = sample_report();
        let json = serde_json::to_string(&rep).unwrap();
        let back: VerificationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(rep, back);
    }
}
