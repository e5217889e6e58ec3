//! Configuration-driven command line: validate law files, compute constrained
//! path probabilities, run the samplers, execute theorem verifiers, and merge
//! report files.
//!
//! Exit status: 0 when everything passed, 1 when any check failed or an input
//! was semantically rejected, 2 on configuration or I/O errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tiltwalk::config::{OutputFormat, ScenarioConfig};
use tiltwalk::engine;
use tiltwalk::harness::{run_verifier, FamilySpec, VerificationReport, VerifyOptions, REGISTRY};
use tiltwalk::laws::IncrementLaw;
use tiltwalk::montecarlo;

#[derive(Parser)]
#[command(
    name = "tiltwalk",
    about = "Exact estimates and theorem verifiers for time-inhomogeneous lattice walks",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Law utilities.
    Law {
        #[command(subcommand)]
        cmd: LawCmd,
    },
    /// Exact probability of the configured scenario.
    Prob {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo estimate of the configured scenario.
    Sample {
        #[command(flatten)]
        common: Common,
    },
    /// Run one theorem verifier (or `all`) over the configured family.
    Verify {
        /// Theorem id from the registry, or `all`.
        theorem: String,
        #[command(flatten)]
        common: Common,
    },
    /// Merge verification reports into one summary.
    Report {
        /// Report JSON files to merge.
        #[arg(long = "merge", num_args = 1.., required = true)]
        merge: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Common {
    /// Path to the JSON config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (reports) or file (single rows).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Base seed for all randomized work.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for grid evaluation.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Cap on the fitted envelope spread.
    #[arg(long)]
    spread_cap: Option<f64>,
}

#[derive(Subcommand)]
enum LawCmd {
    /// Validate a law literal file and print its summary.
    Check { file: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

type AnyError = Box<dyn std::error::Error>;

struct Resolved {
    config: ScenarioConfig,
    family: FamilySpec,
    seed: u64,
    spread_cap: f64,
    out: Option<PathBuf>,
    format: OutputFormat,
    parallelism: Option<usize>,
}

fn resolve(common: &Common) -> Result<Resolved, AnyError> {
    let config = match &common.config {
        Some(path) => ScenarioConfig::from_path(path)?,
        None => ScenarioConfig {
            family: None,
            task: None,
            theorem_id: None,
            scenario: None,
            output: None,
            seed: None,
            parallelism: None,
            spread_cap: None,
            samples: None,
        },
    };
    let family = config.family_or_default();
    let out = common
        .out
        .clone()
        .or_else(|| config.output.as_ref().and_then(|o| o.path.clone()));
    let format = common
        .format
        .or_else(|| config.output.as_ref().and_then(|o| o.format))
        .unwrap_or_default();
    Ok(Resolved {
        seed: common.seed.or(config.seed).unwrap_or(0x74_69_6c_74),
        spread_cap: common.spread_cap.or(config.spread_cap).unwrap_or(10.0),
        parallelism: common.parallelism.or(config.parallelism),
        family,
        config,
        out,
        format,
    })
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, AnyError> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build()?;
            Ok(pool.install(f))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, AnyError> {
    match cli.cmd {
        Cmd::Law { cmd: LawCmd::Check { file } } => law_check(&file),
        Cmd::Prob { common } => prob(&common),
        Cmd::Sample { common } => sample(&common),
        Cmd::Verify { theorem, common } => verify(&theorem, &common),
        Cmd::Report { merge, out } => report_merge(&merge, out.as_deref()),
    }
}

fn law_check(file: &Path) -> Result<ExitCode, AnyError> {
    let text = std::fs::read_to_string(file)?;
    let parsed: Result<IncrementLaw, _> = serde_json::from_str(&text);
    match parsed {
        Ok(law) => {
            println!("valid law with {} atoms on {}", law.support_len(),
                if law.lattice() { "the integer lattice" } else { "the real line" });
            println!("  mean      {:.12}", law.mean());
            println!("  variance  {:.12}", law.variance());
            if law.lattice() {
                let p = law.check_periodicity()?;
                println!("  irreducible {}   aperiodic {}", p.irreducible, p.aperiodic);
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(err) => {
            // Malformed JSON is a config error; a well-formed but invalid law
            // is a failed check.
            if text.trim().is_empty() || serde_json::from_str::<serde_json::Value>(&text).is_err() {
                Err(err.into())
            } else {
                eprintln!("invalid law: {err}");
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn scenario_parts(r: &Resolved) -> Result<(tiltwalk::StepSchedule, i64, engine::PathConstraint), AnyError> {
    let scenario = r
        .config
        .scenario
        .as_ref()
        .ok_or("config has no scenario section")?;
    let member = r
        .family
        .members
        .iter()
        .find(|m| m.name == scenario.member)
        .ok_or("scenario member missing from family")?;
    Ok((member.schedule(scenario.n), scenario.u, scenario.constraint.clone()))
}

fn emit_row(r: &Resolved, fields: &BTreeMap<String, serde_json::Value>) -> Result<(), AnyError> {
    let text = match r.format {
        OutputFormat::Json => serde_json::to_string_pretty(fields)? + "\n",
        OutputFormat::Csv => {
            let header: Vec<&str> = fields.keys().map(|k| k.as_str()).collect();
            let values: Vec<String> = fields
                .values()
                .map(|v| match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            format!("{}\n{}\n", header.join(","), values.join(","))
        }
    };
    match &r.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn prob(common: &Common) -> Result<ExitCode, AnyError> {
    let r = resolve(common)?;
    let (sched, u, constraint) = scenario_parts(&r)?;
    let p = engine::event_prob(u, &sched, &constraint)?;
    let lp = engine::event_log_prob(u, &sched, &constraint)?;
    let mut fields = BTreeMap::new();
    fields.insert("member".into(), r.config.scenario.as_ref().unwrap().member.clone().into());
    fields.insert("n".into(), sched.n().into());
    fields.insert("u".into(), u.into());
    fields.insert("probability".into(), p.into());
    fields.insert("logProbability".into(), lp.into());
    emit_row(&r, &fields)?;
    Ok(ExitCode::SUCCESS)
}

fn sample(common: &Common) -> Result<ExitCode, AnyError> {
    let r = resolve(common)?;
    let (sched, u, constraint) = scenario_parts(&r)?;
    let samples = r.config.samples.unwrap_or(100_000);
    let est = if constraint.endpoint.is_some() {
        montecarlo::importance_tilted_estimate(&sched, u, &constraint, samples, r.seed)?
    } else {
        montecarlo::estimate_event(&sched, u, &constraint, samples, r.seed)?
    };
    let mut fields = BTreeMap::new();
    fields.insert("member".into(), r.config.scenario.as_ref().unwrap().member.clone().into());
    fields.insert("estimate".into(), est.value.into());
    fields.insert("stderr".into(), est.stderr.into());
    fields.insert("samples".into(), est.samples.into());
    fields.insert("seed".into(), est.seed.into());
    fields.insert("acceptedFraction".into(), est.accepted_fraction.into());
    emit_row(&r, &fields)?;
    Ok(ExitCode::SUCCESS)
}

fn verify(theorem: &str, common: &Common) -> Result<ExitCode, AnyError> {
    let r = resolve(common)?;
    let ids: Vec<&str> = if theorem == "all" {
        REGISTRY.to_vec()
    } else if REGISTRY.contains(&theorem) {
        vec![theorem]
    } else {
        return Err(format!("unknown theorem {theorem:?}; known: all, {}", REGISTRY.join(", ")).into());
    };
    let opts = VerifyOptions { seed: r.seed, spread_cap: r.spread_cap };
    let family = r.family.clone();
    let reports: Vec<VerificationReport> = with_pool(r.parallelism, || {
        ids.iter()
            .map(|id| run_verifier(id, &family, &opts).expect("validated family"))
            .collect()
    })?;
    let mut all_pass = true;
    for report in &reports {
        println!("{}", report.summary_line());
        all_pass &= report.passed();
        if let Some(dir) = &r.out {
            std::fs::create_dir_all(dir)?;
            let json_path = dir.join(format!("{}.json", report.theorem_id));
            std::fs::write(&json_path, serde_json::to_string_pretty(report)? + "\n")?;
            if r.format == OutputFormat::Csv {
                let csv_path = dir.join(format!("{}.csv", report.theorem_id));
                std::fs::write(&csv_path, report.to_csv())?;
            }
        }
    }
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn report_merge(paths: &[PathBuf], out: Option<&Path>) -> Result<ExitCode, AnyError> {
    let mut reports = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path)?;
        let report: VerificationReport = serde_json::from_str(&text)?;
        reports.push(report);
    }
    reports.sort_by(|a, b| a.theorem_id.cmp(&b.theorem_id));
    let mut all_pass = true;
    for report in &reports {
        println!("{}", report.summary_line());
        all_pass &= report.passed();
    }
    println!(
        "merged {} reports: {}",
        reports.len(),
        if all_pass { "all pass" } else { "failures present" }
    );
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, serde_json::to_string_pretty(&reports)? + "\n")?;
    }
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
