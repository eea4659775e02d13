//! Command-line pipeline: synthetic inputs, release, error simulation,
//! population-bucket summaries and budget bookkeeping.
//!
//! Every subcommand that writes files also writes `<out>.manifest.json`,
//! recording the arguments and the SHA-256 of each input and output.
//! [`replay`] reruns a manifest and checks that the outputs come out
//! byte-identical.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use dpcoverage::accountant::{append_journal_entry, BudgetLedger, QueryPlan};
use dpcoverage::errorsim::{self, ErrorStats, SimulationConfig};
use dpcoverage::release::{self, HouseholdRecord, PrivateZipRecord, ReleaseOptions, ZoneId};
use dpcoverage::synth::{self, SynthSpec};
use dpcoverage::table::{self, ReleaseRow};
use dpcoverage::Epsilon;

pub mod manifest;

pub use manifest::{replay, Manifest, ReplayReport};

#[derive(Debug, Parser)]
#[command(name = "dpcoverage", version, about = "Differentially private broadband coverage release")]
pub struct Cli {
    /// Cap on worker threads. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic counts and household tables.
    Synth(SynthArgs),
    /// Privatize counts and compute per-zone coverage.
    Release(ReleaseArgs),
    /// Fill error columns of a release by simulation.
    SimulateError(SimulateArgs),
    /// Average error metrics over household buckets.
    Summarize(SummarizeArgs),
    /// Show or charge a privacy budget ledger.
    Budget(BudgetArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub zones: u64,
    /// Inclusive household range, `low:high`.
    #[arg(long, value_parser = parse_u64_range)]
    pub households: (u64, u64),
    /// Inclusive coverage range within [0, 1], `low:high`.
    #[arg(long, value_parser = parse_f64_range)]
    pub bce: (f64, f64),
    /// Inclusive services share range within (0, 1], `low:high`.
    #[arg(long, value_parser = parse_f64_range)]
    pub services_share: (f64, f64),
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_counts: PathBuf,
    #[arg(long)]
    pub out_households: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReleaseArgs {
    #[arg(long)]
    pub counts: PathBuf,
    #[arg(long)]
    pub households: PathBuf,
    /// Privacy loss of each count query.
    #[arg(long, default_value = "0.1")]
    pub epsilon: Epsilon,
    #[arg(long)]
    pub seed: u64,
    /// Also fill the error columns with this many simulated releases.
    #[arg(long)]
    pub k: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Noisy counts table; defaults to `<out stem>.private.csv`.
    #[arg(long)]
    pub out_private: Option<PathBuf>,
    /// Round noisy counts to integers after clamping.
    #[arg(long)]
    pub round_counts: bool,
    /// Budget journal to charge before releasing.
    #[arg(long, requires = "budget")]
    pub ledger: Option<PathBuf>,
    #[arg(long, requires = "ledger")]
    pub budget: Option<Epsilon>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Release table produced by `release`.
    #[arg(long)]
    pub release: PathBuf,
    /// Noisy counts table; defaults to `<release stem>.private.csv`.
    #[arg(long)]
    pub private: Option<PathBuf>,
    #[arg(long)]
    pub households: PathBuf,
    /// Per-query privacy loss used by the release.
    #[arg(long, default_value = "0.1")]
    pub epsilon: Epsilon,
    #[arg(long, default_value_t = errorsim::DEFAULT_ITERATIONS)]
    pub k: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Release table with error columns.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub households: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,100,1000,10000,100000")]
    pub thresholds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub ledger: PathBuf,
    #[arg(long)]
    pub budget: Epsilon,
    /// Plan expression to charge, e.g. `SEQ(PAR(L:0.1,H:0.1),PAR(M:0.1,O:0.1))`.
    #[arg(long)]
    pub charge: Option<QueryPlan>,
}

/// What a run produced. `log` holds the lines printed to stdout.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub log: Vec<String>,
    pub outputs: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
}

impl RunOutcome {
    fn note(&mut self, line: impl Into<String>) {
        self.log.push(line.into());
    }
}

/// Parses arguments (without the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<RunOutcome>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(std::iter::once(OsString::from("dpcoverage")).chain(args.iter().cloned()))?;
    let recorded: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    execute(cli, recorded)
}

pub fn execute(cli: Cli, recorded_args: Vec<String>) -> Result<RunOutcome> {
    match cli.threads {
        Some(n) => {
            ensure!(n > 0, "--threads must be at least 1");
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| dispatch(cli.command, recorded_args))
        }
        None => dispatch(cli.command, recorded_args),
    }
}

fn dispatch(command: Command, args: Vec<String>) -> Result<RunOutcome> {
    match command {
        Command::Synth(a) => run_synth(a, args),
        Command::Release(a) => run_release(a, args),
        Command::SimulateError(a) => run_simulate(a, args),
        Command::Summarize(a) => run_summarize(a, args),
        Command::Budget(a) => run_budget(a),
    }
}

fn parse_range<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected low:high, got {s:?}"))?;
    let parse = |v: &str| v.parse::<T>().map_err(|_| format!("invalid bound {v:?}"));
    Ok((parse(lo)?, parse(hi)?))
}

fn parse_u64_range(s: &str) -> std::result::Result<(u64, u64), String> {
    parse_range(s)
}

fn parse_f64_range(s: &str) -> std::result::Result<(f64, f64), String> {
    parse_range(s)
}

/// `release.csv` -> `release.private.csv`.
pub fn default_private_path(out: &Path) -> PathBuf {
    out.with_extension("private.csv")
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn read_with<T>(path: &Path, read: impl FnOnce(BufReader<File>) -> dpcoverage::Result<Vec<T>>) -> Result<Vec<T>> {
    read(open(path)?).with_context(|| path.display().to_string())
}

fn write_with(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> dpcoverage::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    write(&mut w).with_context(|| path.display().to_string())?;
    w.flush()?;
    Ok(())
}

fn load_households(path: &Path) -> Result<HashMap<ZoneId, HouseholdRecord>> {
    Ok(table::households_by_zone(read_with(path, table::read_households)?))
}

fn run_synth(a: SynthArgs, args: Vec<String>) -> Result<RunOutcome> {
    let spec = SynthSpec {
        zone_count: a.zones,
        households: a.households,
        true_bce: a.bce,
        services_share: a.services_share,
        seed: a.seed,
    };
    let (counts, households) = synth::generate(&spec)?;
    write_with(&a.out_counts, |w| table::write_counts(w, &counts))?;
    write_with(&a.out_households, |w| table::write_households(w, &households))?;

    let mut out = RunOutcome::default();
    out.note(format!("zones={}", counts.len()));
    out.outputs = vec![a.out_counts.clone(), a.out_households.clone()];
    let params = serde_json::json!({
        "zones": a.zones,
        "households": format!("{}:{}", a.households.0, a.households.1),
        "bce": format!("{}:{}", a.bce.0, a.bce.1),
        "services_share": format!("{}:{}", a.services_share.0, a.services_share.1),
        "seed": a.seed,
    });
    out.manifest = Some(Manifest::record("synth", args, params, &[], &out.outputs)?.write(&manifest_path(&a.out_counts))?);
    Ok(out)
}

fn run_release(a: ReleaseArgs, args: Vec<String>) -> Result<RunOutcome> {
    let counts = read_with(&a.counts, table::read_counts)?;
    let households = load_households(&a.households)?;
    let plan = QueryPlan::coverage_release(a.epsilon);
    let total = plan.total_epsilon()?;
    let options = ReleaseOptions {
        round_counts: a.round_counts,
    };
    let simulation = a
        .k
        .map(|k| SimulationConfig::new(k, a.epsilon, a.seed))
        .transpose()?;

    // Charge before any output exists, so a rejected charge writes nothing.
    let mut ledger_note = None;
    if let (Some(path), Some(budget)) = (&a.ledger, a.budget) {
        let mut ledger = BudgetLedger::open(path, budget).with_context(|| path.display().to_string())?;
        let entry = ledger.charge(&plan, chrono_now())?.clone();
        append_journal_entry(path, &entry)?;
        ledger_note = Some(format!("budget_remaining={}", ledger.remaining()));
    }

    let released = release::release_dataset(&counts, &households, a.epsilon, a.seed, options)?;
    let (private, estimates): (Vec<_>, Vec<_>) = released.into_iter().unzip();
    let errors = match &simulation {
        Some(cfg) => errorsim::estimate_dataset(&private, &households, cfg)
            .into_iter()
            .map(|r| r.and_then(|r| r.stats))
            .collect(),
        None => vec![None; private.len()],
    };
    let rows: Vec<ReleaseRow> = estimates
        .iter()
        .zip(&errors)
        .map(|(est, err)| ReleaseRow {
            zone: est.zone.clone(),
            broadband_usage: est.bce,
            broadband_usage_raw: est.raw_bce,
            errors: *err,
            epsilon: total,
        })
        .collect();

    let private_path = a.out_private.clone().unwrap_or_else(|| default_private_path(&a.out));
    ensure!(private_path != a.out, "--out-private must differ from --out");
    write_with(&a.out, |w| table::write_release(w, &rows))?;
    write_with(&private_path, |w| table::write_private_counts(w, &private))?;

    let mut out = RunOutcome::default();
    out.note(format!("plan={plan}"));
    out.note(format!("total_epsilon={total}"));
    out.note(format!("zones={}", rows.len()));
    out.note(format!("undefined={}", rows.iter().filter(|r| r.broadband_usage.is_none()).count()));
    if let Some(note) = ledger_note {
        out.note(note);
    }
    out.outputs = vec![a.out.clone(), private_path];
    let params = serde_json::json!({
        "epsilon": a.epsilon.to_string(),
        "total_epsilon": total.to_string(),
        "seed": a.seed,
        "k": a.k,
        "round_counts": a.round_counts,
    });
    out.manifest = Some(
        Manifest::record("release", args, params, &[a.counts.clone(), a.households.clone()], &out.outputs)?
            .write(&manifest_path(&a.out))?,
    );
    Ok(out)
}

fn chrono_now() -> chrono::DateTime<chrono::Utc> {
    chrono::Utc::now()
}

fn run_simulate(a: SimulateArgs, args: Vec<String>) -> Result<RunOutcome> {
    let config = SimulationConfig::new(a.k, a.epsilon, a.seed)?;
    let rows = read_with(&a.release, table::read_release)?;
    let private_path = a.private.clone().unwrap_or_else(|| default_private_path(&a.release));
    let private = read_with(&private_path, table::read_private_counts)?;
    let households = load_households(&a.households)?;
    check_consistent(&rows, &private, &households)?;

    let reports = errorsim::estimate_dataset(&private, &households, &config);
    let filled: Vec<ReleaseRow> = rows
        .into_iter()
        .zip(reports)
        .map(|(row, report)| ReleaseRow {
            errors: report.and_then(|r| r.stats),
            ..row
        })
        .collect();
    write_with(&a.out, |w| table::write_release(w, &filled))?;

    let mut out = RunOutcome::default();
    out.note(format!("zones={}", filled.len()));
    out.note(format!("with_errors={}", filled.iter().filter(|r| r.errors.is_some()).count()));
    out.outputs = vec![a.out.clone()];
    let params = serde_json::json!({
        "epsilon": a.epsilon.to_string(),
        "k": a.k,
        "seed": a.seed,
    });
    out.manifest = Some(
        Manifest::record("simulate-error", args, params, &[a.release.clone(), private_path, a.households.clone()], &out.outputs)?
            .write(&manifest_path(&a.out))?,
    );
    Ok(out)
}

/// The release table and the noisy counts must describe the same zones, and
/// the published coverage must follow from the counts.
fn check_consistent(rows: &[ReleaseRow], private: &[PrivateZipRecord], households: &HashMap<ZoneId, HouseholdRecord>) -> Result<()> {
    ensure!(
        rows.len() == private.len(),
        "release has {} zones but noisy counts have {}",
        rows.len(),
        private.len()
    );
    for (row, p) in rows.iter().zip(private) {
        ensure!(row.zone == p.zone, "zone order differs: {} vs {}", row.zone, p.zone);
        ensure!(row.epsilon == p.epsilon_total, "zone {}: epsilon {} vs {}", row.zone, row.epsilon, p.epsilon_total);
        let est = p.coverage(households.get(&p.zone).map(HouseholdRecord::households));
        if est.raw_bce.map(f64::to_bits) != row.broadband_usage_raw.map(f64::to_bits) {
            bail!("zone {}: published coverage does not match the noisy counts and households", row.zone);
        }
    }
    Ok(())
}

fn run_summarize(a: SummarizeArgs, args: Vec<String>) -> Result<RunOutcome> {
    let rows = read_with(&a.input, table::read_release)?;
    let households = load_households(&a.households)?;
    let mut reports: Vec<(ErrorStats, u64)> = Vec::new();
    let mut skipped = 0usize;
    for row in &rows {
        match (row.errors, households.get(&row.zone)) {
            (Some(stats), Some(hh)) => reports.push((stats, hh.households())),
            _ => skipped += 1,
        }
    }
    let buckets = errorsim::bucket_by_households(&reports, &a.thresholds)?;
    write_with(&a.out, |w| table::write_buckets(w, &buckets))?;

    let mut out = RunOutcome::default();
    out.note(format!("zones={}", reports.len()));
    out.note(format!("skipped={skipped}"));
    out.outputs = vec![a.out.clone()];
    let thresholds: Vec<String> = a.thresholds.iter().map(u64::to_string).collect();
    let params = serde_json::json!({ "thresholds": thresholds.join(",") });
    out.manifest = Some(
        Manifest::record("summarize", args, params, &[a.input.clone(), a.households.clone()], &out.outputs)?
            .write(&manifest_path(&a.out))?,
    );
    Ok(out)
}

fn run_budget(a: BudgetArgs) -> Result<RunOutcome> {
    let mut ledger = BudgetLedger::open(&a.ledger, a.budget).with_context(|| a.ledger.display().to_string())?;
    let mut out = RunOutcome::default();
    if let Some(plan) = &a.charge {
        let entry = ledger.charge(plan, chrono_now())?.clone();
        append_journal_entry(&a.ledger, &entry)?;
        out.note(format!("charged={}", entry.epsilon));
        out.outputs.push(a.ledger.clone());
    }
    out.note(format!("budget={}", ledger.budget()));
    out.note(format!("spent={}", ledger.spent()));
    out.note(format!("remaining={}", ledger.remaining()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_paths() {
        assert_eq!(default_private_path(Path::new("out/release.csv")), Path::new("out/release.private.csv"));
        assert_eq!(default_private_path(Path::new("release")), Path::new("release.private.csv"));
        assert_eq!(manifest_path(Path::new("a/b.csv")), Path::new("a/b.csv.manifest.json"));
    }

    #[test]
    fn range_parsing() {
        assert_eq!(parse_u64_range("50:200000"), Ok((50, 200000)));
        assert_eq!(parse_f64_range("0.1:0.95"), Ok((0.1, 0.95)));
        assert!(parse_u64_range("50").is_err());
        assert!(parse_u64_range("a:b").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
