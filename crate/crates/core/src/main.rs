use clap::{Args, Parser, Subcommand};
use csaudit::dataio::{
    export_trajectories, load_contests, load_manifest, synthetic_manifest, Manifest,
};
use csaudit::engine::{
    AssertionStatus, AuditSession, CertificationReport, EngineError, Mode, OverallStatus,
    SessionConfig, StrategyKind,
};
use csaudit::population::ContestResult;
use csaudit::service::{self, AppState};
use csaudit::simulator::{self, Scenario};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

/// Exit status when an audit stops before it is settled.
const EXIT_INTERRUPTED: u8 = 3;
const EXIT_ERROR: u8 = 1;

#[derive(Parser)]
#[command(
    name = "csaudit",
    version,
    about = "Risk-limiting audits and tallies by betting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run or resume an audit, interactively or from a manifest.
    Audit(AuditArgs),
    /// Run a Monte Carlo scenario file.
    Simulate(SimulateArgs),
    /// Write a ballot manifest whose votes match a contest's reported totals.
    Manifest(ManifestArgs),
    /// Validate a contest file and list its contests.
    Contests {
        #[arg(long)]
        contests: PathBuf,
    },
    /// Serve the JSON API.
    Serve(ServeArgs),
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("risk limit must lie in (0, 1), got {a}"))
    }
}

fn parse_null(s: &str) -> Result<f64, String> {
    let m: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&m) {
        Ok(m)
    } else {
        Err(format!("null must lie in [0, 1], got {m}"))
    }
}

#[derive(Args)]
struct AuditArgs {
    /// Contest CSV file.
    #[arg(long, required_unless_present = "resume")]
    contests: Option<PathBuf>,
    /// Contest id; optional when the file holds a single contest.
    #[arg(long)]
    contest: Option<String>,
    #[arg(long, value_parser = parse_alpha, required_unless_present = "resume")]
    alpha: Option<f64>,
    /// apk, dkelly, sqkelly or linkelly.
    #[arg(long, value_parser = |s: &str| s.parse::<StrategyKind>(), default_value = "sqkelly")]
    strategy: StrategyKind,
    /// rla or rlt.
    #[arg(long, value_parser = |s: &str| s.parse::<Mode>(), default_value = "rla")]
    mode: Mode,
    #[arg(long, required_unless_present = "resume")]
    seed: Option<u64>,
    /// Reported winner(s); defaults to the top vote-getter.
    #[arg(long = "winner")]
    winners: Vec<String>,
    /// Extra nulls whose anytime p-values are exported, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_null)]
    nulls: Vec<f64>,
    /// Read votes from this manifest (`ballot_id,vote`) instead of stdin.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Use the synthetic manifest matching the reported totals.
    #[arg(long, conflicts_with = "manifest")]
    synthetic: bool,
    /// Resume from a snapshot written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Directory for snapshot.json, trajectory.csv and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop (and save) after recording this many ballots in this run.
    #[arg(long)]
    max_ballots: Option<u64>,
    /// Keep sampling after the contest is certified.
    #[arg(long)]
    continue_after_certification: bool,
    /// Print only the final summary.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (.toml or .json).
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for report.json, summary.csv, stopping_times.csv and histogram.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario's replication count.
    #[arg(long)]
    replications: Option<usize>,
}

#[derive(Args)]
struct ManifestArgs {
    #[arg(long)]
    contests: PathBuf,
    #[arg(long)]
    contest: Option<String>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Contest CSV files loaded at startup.
    #[arg(long)]
    contests: Vec<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: std::net::SocketAddr,
    /// Persist contests and sessions here.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Allowed CORS origin; any origin when absent.
    #[arg(long)]
    cors_origin: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Audit(args) => audit(args),
        Command::Simulate(args) => simulate(args),
        Command::Manifest(args) => manifest(args),
        Command::Contests { contests } => list_contests(&contests),
        Command::Serve(args) => serve(args),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn pick_contest(path: &Path, id: Option<&str>) -> Result<ContestResult, String> {
    let load = load_contests(path).map_err(|e| e.to_string())?;
    for w in &load.warnings {
        eprintln!("warning: {w}");
    }
    match id {
        Some(id) => load
            .contests
            .into_iter()
            .find(|c| c.contest_id == id)
            .ok_or_else(|| format!("no contest `{id}` in {}", path.display())),
        None if load.contests.len() == 1 => Ok(load.contests.into_iter().next().unwrap()),
        None => Err(format!(
            "{} holds {} contests; pick one with --contest",
            path.display(),
            load.contests.len()
        )),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn status_line(report: &CertificationReport) -> String {
    report
        .assertions
        .iter()
        .map(|a| {
            let mark = match a.status {
                AssertionStatus::Certified => "*",
                AssertionStatus::Exhausted => "x",
                AssertionStatus::Open => "",
            };
            match a.upper {
                Some(u) => format!("{} [{:.4}, {:.4}]{mark}", a.assertion, a.lower, u),
                None => format!("{} L={:.4}{mark}", a.assertion, a.lower),
            }
        })
        .collect::<Vec<_>>()
        .join("  ")
}

fn save_outputs(session: &AuditSession, out: &Path) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    write_file(&out.join("snapshot.json"), &session.snapshot())?;
    write_file(&out.join("trajectory.csv"), &export_trajectories(session))?;
    let report = serde_json::to_string_pretty(&session.status()).expect("report serialises");
    write_file(&out.join("report.json"), &report)
}

enum VoteSource {
    Manifest(Manifest),
    Stdin,
}

impl VoteSource {
    fn vote_for(
        &self,
        session: &AuditSession,
        id: &str,
        lines: &mut impl Iterator<Item = std::io::Result<String>>,
    ) -> Result<Option<String>, String> {
        match self {
            VoteSource::Manifest(m) => m
                .votes()
                .get(id)
                .map(|v| Some(v.to_string()))
                .ok_or_else(|| format!("manifest has no vote for ballot `{id}`")),
            VoteSource::Stdin => {
                eprint!(
                    "ballot {id} [{} | quit]: ",
                    session.vote_tokens().join(" | ")
                );
                let _ = std::io::stderr().flush();
                match lines.next() {
                    None => Ok(None),
                    Some(line) => {
                        let line = line.map_err(|e| e.to_string())?;
                        let line = line.trim().to_string();
                        Ok((line != "quit").then_some(line))
                    }
                }
            }
        }
    }
}

fn audit(args: AuditArgs) -> Result<ExitCode, String> {
    let mut session = match &args.resume {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            AuditSession::restore(&text).map_err(|e| e.to_string())?
        }
        None => {
            let contests = args.contests.as_ref().expect("required by clap");
            let contest = pick_contest(contests, args.contest.as_deref())?;
            let mut config = SessionConfig::new(
                args.alpha.expect("required by clap"),
                args.strategy,
                args.mode,
                args.seed.expect("required by clap"),
            );
            config.winners = (!args.winners.is_empty()).then(|| args.winners.clone());
            config.extra_nulls = args.nulls.clone();
            let ids = match &args.manifest {
                Some(path) => {
                    let m = load_manifest(path).map_err(|e| e.to_string())?;
                    (!m.has_default_ids()).then(|| m.ids())
                }
                None => None,
            };
            AuditSession::create_with_ids(contest, config, ids).map_err(|e| e.to_string())?
        }
    };

    let source = match (&args.manifest, args.synthetic) {
        (Some(path), _) => VoteSource::Manifest(load_manifest(path).map_err(|e| e.to_string())?),
        (None, true) => {
            VoteSource::Manifest(synthetic_manifest(session.contest()).map_err(|e| e.to_string())?)
        }
        (None, false) => VoteSource::Stdin,
    };

    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    let mut recorded_here = 0u64;
    let mut interrupted = false;
    loop {
        let report = session.status();
        let settled = match report.overall {
            OverallStatus::Certified => !args.continue_after_certification,
            OverallStatus::Exhausted => true,
            OverallStatus::Open => false,
        };
        if settled || session.is_exhausted() {
            break;
        }
        if args.max_ballots.is_some_and(|m| recorded_here >= m) {
            interrupted = true;
            break;
        }
        let id = session.draw_next().map_err(|e| e.to_string())?;
        let Some(vote) = source.vote_for(&session, &id, &mut lines)? else {
            interrupted = true;
            break;
        };
        match session.record_ballot(&id, &vote) {
            Ok(report) => {
                recorded_here += 1;
                if !args.quiet {
                    println!(
                        "t={} ballot={id} vote={vote}  {}",
                        report.ballots_recorded,
                        status_line(&report)
                    );
                }
            }
            Err(e @ EngineError::InvalidVote { .. }) if matches!(source, VoteSource::Stdin) => {
                eprintln!("{e}");
            }
            Err(e) => {
                if let Some(out) = &args.out {
                    save_outputs(&session, out)?;
                }
                return Err(e.to_string());
            }
        }
    }

    let report = session.status();
    if let Some(out) = &args.out {
        save_outputs(&session, out)?;
    }
    match report.overall {
        OverallStatus::Certified => println!(
            "CERTIFIED at ballot {} ({} ballots recorded)",
            report.certified_at.unwrap_or(0),
            report.ballots_recorded
        ),
        OverallStatus::Exhausted => println!(
            "NOT CERTIFIED: all {} ballots examined; the full count decides",
            report.population_size
        ),
        OverallStatus::Open => println!(
            "INTERRUPTED after {} ballots; resume with --resume",
            report.ballots_recorded
        ),
    }
    if interrupted && report.overall == OverallStatus::Open {
        return Ok(ExitCode::from(EXIT_INTERRUPTED));
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, String> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| format!("{}: {e}", args.scenario.display()))?;
    let is_json = args.scenario.extension().and_then(|e| e.to_str()) == Some("json");
    let mut scenario = if is_json {
        Scenario::from_json(&text)
    } else {
        Scenario::from_toml(&text)
    }
    .map_err(|e| e.to_string())?;
    if let Some(r) = args.replications {
        scenario.replications = Some(r);
        scenario.validate().map_err(|e| e.to_string())?;
    }
    let report = simulator::simulate(&scenario).map_err(|e| e.to_string())?;
    let summary = simulator::summary_csv(&report);
    print!("{summary}");
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
        write_file(&out.join("report.json"), &report.to_json())?;
        write_file(&out.join("summary.csv"), &summary)?;
        if !report.workload.is_empty() {
            write_file(
                &out.join("stopping_times.csv"),
                &simulator::stopping_times_csv(&report),
            )?;
            write_file(
                &out.join("histogram.csv"),
                &simulator::histogram_csv(&report),
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn manifest(args: ManifestArgs) -> Result<ExitCode, String> {
    let contest = pick_contest(&args.contests, args.contest.as_deref())?;
    let csv = synthetic_manifest(&contest)
        .map_err(|e| e.to_string())?
        .to_csv();
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn list_contests(path: &Path) -> Result<ExitCode, String> {
    let load = load_contests(path).map_err(|e| e.to_string())?;
    for w in &load.warnings {
        eprintln!("warning: {w}");
    }
    for c in &load.contests {
        let leader = c
            .reported_winners(1)
            .map_or_else(|| "-".to_string(), |w| w.join(","));
        println!(
            "{}\t{}\t{} candidates\t{} ballots\tleader: {leader}",
            c.contest_id,
            c.district,
            c.candidates.len(),
            c.total_ballots
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(args: ServeArgs) -> Result<ExitCode, String> {
    let mut contests = Vec::new();
    for path in &args.contests {
        let load = load_contests(path).map_err(|e| e.to_string())?;
        for w in &load.warnings {
            eprintln!("warning: {w}");
        }
        contests.extend(load.contests);
    }
    let state = match &args.data_dir {
        Some(dir) => AppState::with_data_dir(contests, dir)?,
        None => AppState::new(contests),
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    eprintln!("listening on http://{}", args.addr);
    runtime
        .block_on(service::serve(args.addr, Arc::new(state), args.cors_origin))
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}
