//! `darkqubit`: runs scenario files against darkqubit-core.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

mod output;
mod protocols;
mod scenario;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use output::{Format, Summary, Writer};
use protocols::RunError;
use scenario::{Protocol, RawScenario, Scenario, ScenarioError};

const BUNDLED: &[(&str, &str)] = &[
    ("ca40_compact_analyze", include_str!("../scenarios/ca40_compact_analyze.toml")),
    ("headline_error_budget", include_str!("../scenarios/headline_error_budget.toml")),
    ("desk_protocols", include_str!("../scenarios/desk_protocols.toml")),
];

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "darkqubit", version, about = "Protected dressed-state qubits: analysis, budgets, gates and sensing")]
struct Cli {
    /// Scenario file, or `bundled:<name>`
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Master seed; overrides the scenario seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for trajectory averaging
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Format of trace and sweep data
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run every protocol listed in the scenario
    Run,
    /// Protected subspace of the construction
    Analyze,
    /// Time evolution of the protected pair
    Evolve,
    /// Error budget, with the optional sweep
    ErrorBudget,
    /// Effective gate operators
    Gates,
    /// AC sensing report
    Sense,
    /// Bare versus protected coherence under noise
    Compare,
    /// Validate the scenario and print its hash
    Check,
    /// List bundled scenarios
    List,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Check => "check",
            Command::List => "list",
            c => c.protocol().expect("protocol command").name(),
        }
    }

    fn protocol(self) -> Option<Protocol> {
        Some(match self {
            Command::Analyze => Protocol::Analyze,
            Command::Evolve => Protocol::Evolve,
            Command::ErrorBudget => Protocol::ErrorBudget,
            Command::Gates => Protocol::Gates,
            Command::Sense => Protocol::Sense,
            Command::Compare => Protocol::Compare,
            _ => return None,
        })
    }
}

struct Failure {
    code: u8,
    errors: Vec<String>,
}

impl Failure {
    fn validation(errors: Vec<String>) -> Self {
        Failure { code: EXIT_VALIDATION, errors }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Parse(m) => Failure::validation(vec![m]),
            ScenarioError::Invalid(v) => Failure::validation(v),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::Validation(_) => EXIT_VALIDATION,
            RunError::Numerical(_) => EXIT_NUMERICAL,
        };
        Failure { code, errors: vec![e.to_string()] }
    }
}

fn load(spec: &str) -> Result<String, Failure> {
    if let Some(name) = spec.strip_prefix("bundled:") {
        return BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.to_string())
            .ok_or_else(|| Failure::validation(vec![format!("no bundled scenario {name:?}; try `darkqubit list`")]));
    }
    std::fs::read_to_string(spec).map_err(|e| Failure::validation(vec![format!("cannot read {spec}: {e}")]))
}

fn out_dir(cli: &Cli, raw: Option<&RawScenario>) -> Option<PathBuf> {
    cli.out.clone().or_else(|| {
        raw.map(|r| match r.output.as_ref().and_then(|o| o.dir.clone()) {
            Some(d) => PathBuf::from(d),
            None => PathBuf::from("darkqubit-out").join(&r.name),
        })
    })
}

fn execute(cli: &Cli, summary: &mut Summary, raw: &RawScenario, sc: &Scenario) -> Result<Writer, Failure> {
    let protocols: Vec<Protocol> = match cli.command.protocol() {
        Some(p) => vec![p],
        None => sc.protocols.clone(),
    };
    if protocols.is_empty() {
        return Err(Failure::validation(vec!["protocols: empty; list at least one protocol to run".into()]));
    }
    // the subcommand may pick a protocol the file does not list
    let run_sc = if protocols == sc.protocols {
        sc.clone()
    } else {
        let mut r = raw.clone();
        r.protocols = protocols.clone();
        if r.sweep.as_ref().is_some_and(|x| !protocols.contains(&x.parameter.protocol())) {
            r.sweep = None;
        }
        r.validate()?
    };
    let seed = summary.seed.unwrap_or(0);
    let out = out_dir(cli, Some(raw)).expect("scenario gives a default");
    let mut writer =
        Writer::new(&out).map_err(|e| Failure { code: 1, errors: vec![format!("{}: {e}", out.display())] })?;
    for p in protocols {
        let o = protocols::run(p, &run_sc, seed)?;
        summary.results.insert(p.name().to_string(), o.result);
        for t in &o.tables {
            writer
                .table(t, cli.format)
                .map_err(|e| Failure { code: 1, errors: vec![format!("writing {}: {e}", t.name)] })?;
        }
    }
    Ok(writer)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::List = cli.command {
        for (name, _) in BUNDLED {
            println!("bundled:{name}");
        }
        return ExitCode::SUCCESS;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_VALIDATION);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    }
    let mut summary = Summary::new(cli.command.name());
    let Some(spec) = cli.scenario.clone() else {
        eprintln!("error: --scenario <path | bundled:NAME> is required");
        return ExitCode::from(EXIT_VALIDATION);
    };

    let text = match load(&spec) {
        Ok(t) => t,
        Err(f) => return fail(&cli, None, summary, f),
    };
    let raw = match RawScenario::from_toml(&text) {
        Ok(r) => r,
        Err(e) => return fail(&cli, None, summary, e.into()),
    };
    summary.scenario = Some(raw.name.clone());
    summary.seed = Some(cli.seed.unwrap_or(raw.seed));
    let sc = match raw.validate() {
        Ok(s) => s,
        Err(e) => return fail(&cli, Some(&raw), summary, e.into()),
    };
    summary.scenario_hash = Some(sc.hash());

    if let Command::Check = cli.command {
        println!("{} ok, hash {}", sc.name, sc.hash());
        return ExitCode::SUCCESS;
    }

    match execute(&cli, &mut summary, &raw, &sc) {
        Ok(writer) => {
            summary.artifacts = writer.files().to_vec();
            summary.artifacts.push("summary.json".into());
            let out = out_dir(&cli, Some(&raw)).expect("scenario gives a default");
            match writer.commit(&summary) {
                Ok(_) => {
                    println!("{}: {} artifact(s) in {}", sc.name, summary.artifacts.len(), out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {}: {e}", out.display());
                    ExitCode::FAILURE
                }
            }
        }
        Err(f) => fail(&cli, Some(&raw), summary, f),
    }
}

/// Reports the failure and writes a summary carrying it when an output
/// directory is known. No other artifact survives.
fn fail(cli: &Cli, raw: Option<&RawScenario>, mut summary: Summary, f: Failure) -> ExitCode {
    for e in &f.errors {
        eprintln!("error: {e}");
    }
    summary.status = if f.code == EXIT_VALIDATION { "invalid" } else { "failed" };
    summary.errors = f.errors;
    summary.results.clear();
    summary.artifacts = vec!["summary.json".into()];
    if !matches!(cli.command, Command::Check) {
        if let Some(out) = out_dir(cli, raw) {
            if let Err(e) = output::write_summary_only(&out, &summary) {
                eprintln!("error: {}: {e}", out.display());
            }
        }
    }
    ExitCode::from(f.code)
}
