use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpcoverage::table;
use dpcoverage_cli::{replay, run, Manifest};

const COUNTS_HEADER: &str = "zip,low_speed_devices,high_speed_devices,services_devices,non_services_devices\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpcoverage"))
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dpcoverage")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn synth(zones: u64) -> Self {
        let f = Fixture { dir: tempfile::tempdir().unwrap() };
        run([
            "synth", "--zones", &zones.to_string(), "--households", "50:5000", "--bce", "0.1:0.95",
            "--services-share", "0.5:0.9", "--seed", "9", "--out-counts", s(&f.path("counts.csv")),
            "--out-households", s(&f.path("households.csv")),
        ])
        .unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn release(&self, out: &str, extra: &[&str]) -> dpcoverage_cli::RunOutcome {
        let out = self.path(out);
        let mut args = vec![
            "release", "--counts", s(&self.path("counts.csv")), "--households", s(&self.path("households.csv")),
            "--epsilon", "0.1", "--seed", "42", "--out", s(&out),
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        args.extend(extra.iter().map(|a| a.to_string()));
        run(args).unwrap()
    }
}

#[test]
fn release_reports_total_epsilon() {
    let f = Fixture::synth(20);
    let o = exec(&[
        "release", "--counts", s(&f.path("counts.csv")), "--households", s(&f.path("households.csv")),
        "--epsilon", "0.1", "--seed", "1", "--out", s(&f.path("r.csv")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "total_epsilon=0.2"), "{out}");
    assert!(out.lines().any(|l| l == "zones=20"), "{out}");
}

#[test]
fn empty_counts_give_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let hh = dir.path().join("hh.csv");
    let out = dir.path().join("out.csv");
    fs::write(&counts, COUNTS_HEADER).unwrap();
    fs::write(&hh, "zip,households\n").unwrap();
    let o = exec(&["release", "--counts", s(&counts), "--households", s(&hh), "--seed", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "zip,broadband_usage,broadband_usage_raw,error_mae,error_msd,error_p95,epsilon\n"
    );
}

#[test]
fn malformed_row_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let hh = dir.path().join("hh.csv");
    fs::write(&counts, format!("{COUNTS_HEADER}00501,1,2,3,4\n00502,1,x,3,4\n")).unwrap();
    fs::write(&hh, "zip,households\n00501,10\n").unwrap();
    let out = dir.path().join("out.csv");
    let o = exec(&["release", "--counts", s(&counts), "--households", s(&hh), "--seed", "1", "--out", s(&out)]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("line 3"), "{err}");
    assert!(!out.exists());
}

#[test]
fn bad_invocations_fail_with_one_line() {
    let o = exec(&["release", "--bogus"]);
    assert!(!o.status.success());
    assert_eq!(stderr(&o).trim_end().lines().count(), 1, "{}", stderr(&o));

    let o = exec(&["release", "--counts", "/nonexistent/c.csv", "--households", "/nonexistent/h.csv", "--seed", "1", "--out", "/tmp/x.csv"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("/nonexistent/c.csv"), "{err}");

    // seeds are never defaulted
    let o = exec(&["release", "--counts", "c.csv", "--households", "h.csv", "--out", "o.csv"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn budget_charges_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("ledger.txt");
    let plan = "SEQ(PAR(L:0.1,H:0.1),PAR(M:0.1,O:0.1))";

    let o = exec(&["budget", "--ledger", s(&ledger), "--budget", "0.3"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("remaining=0.3"));

    let o = exec(&["budget", "--ledger", s(&ledger), "--budget", "0.3", "--charge", plan]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("remaining=0.1"), "{}", stdout(&o));
    let journal = fs::read_to_string(&ledger).unwrap();
    assert_eq!(journal.lines().count(), 1);
    assert!(journal.ends_with(&format!("\t{plan}\t0.2\n")), "{journal}");

    let o = exec(&["budget", "--ledger", s(&ledger), "--budget", "0.3", "--charge", plan]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("requested 0.2, remaining 0.1"), "{err}");
    assert_eq!(fs::read_to_string(&ledger).unwrap(), journal);
}

#[test]
fn over_budget_release_writes_nothing() {
    let f = Fixture::synth(5);
    let ledger = f.path("ledger.txt");
    let out = f.path("r.csv");
    let (counts, hh) = (f.path("counts.csv"), f.path("households.csv"));
    let base = [
        "release", "--counts", s(&counts), "--households", s(&hh),
        "--seed", "1", "--out", s(&out), "--ledger", s(&ledger), "--budget", "0.3",
    ];
    let o = exec(&base);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("budget_remaining=0.1"));
    fs::remove_file(&out).unwrap();
    let o = exec(&base);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("budget exceeded"));
    assert!(!out.exists());
}

#[test]
fn release_with_k_matches_separate_simulation() {
    let f = Fixture::synth(60);
    f.release("inline.csv", &["--k", "50"]);
    f.release("plain.csv", &[]);
    run([
        "simulate-error", "--release", s(&f.path("plain.csv")), "--households", s(&f.path("households.csv")),
        "--epsilon", "0.1", "--k", "50", "--seed", "42", "--out", s(&f.path("filled.csv")),
    ])
    .unwrap();
    assert_eq!(fs::read(f.path("inline.csv")).unwrap(), fs::read(f.path("filled.csv")).unwrap());
    let plain = table::read_release(fs::File::open(f.path("plain.csv")).unwrap()).unwrap();
    assert!(plain.iter().all(|r| r.errors.is_none()));
}

#[test]
fn outputs_load_with_own_parsers() {
    let f = Fixture::synth(40);
    f.release("r.csv", &["--k", "20"]);
    run([
        "summarize", "--in", s(&f.path("r.csv")), "--households", s(&f.path("households.csv")),
        "--thresholds", "0,100,1000,10000", "--out", s(&f.path("buckets.csv")),
    ])
    .unwrap();
    let open = |n: &str| fs::File::open(f.path(n)).unwrap();
    assert_eq!(table::read_counts(open("counts.csv")).unwrap().len(), 40);
    assert_eq!(table::read_households(open("households.csv")).unwrap().len(), 40);
    let rows = table::read_release(open("r.csv")).unwrap();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r.epsilon.to_string() == "0.2"));
    assert_eq!(table::read_private_counts(open("r.private.csv")).unwrap().len(), 40);
    let buckets = table::read_buckets(open("buckets.csv")).unwrap();
    assert_eq!(buckets.len(), 4);
    assert_eq!(buckets.iter().map(|b| b.zone_count).sum::<u64>(), 40);
    assert_eq!(buckets[3].high, None);
}

#[test]
fn thread_count_does_not_change_output() {
    let f = Fixture::synth(200);
    f.release("one.csv", &["--k", "30", "--threads", "1"]);
    f.release("four.csv", &["--k", "30", "--threads", "4"]);
    assert_eq!(fs::read(f.path("one.csv")).unwrap(), fs::read(f.path("four.csv")).unwrap());
    assert_eq!(
        fs::read(f.path("one.private.csv")).unwrap(),
        fs::read(f.path("four.private.csv")).unwrap()
    );
}

#[test]
fn manifest_replay_is_byte_identical() {
    let f = Fixture::synth(30);
    let outcome = f.release("r.csv", &["--k", "25"]);
    let manifest_path = outcome.manifest.unwrap();
    assert_eq!(manifest_path, f.path("r.csv.manifest.json"));
    let manifest = Manifest::read(&manifest_path).unwrap();
    assert_eq!(manifest.subcommand, "release");
    assert_eq!(manifest.inputs.len(), 2);
    assert_eq!(manifest.outputs.len(), 2);
    assert_eq!(manifest.parameters["total_epsilon"], "0.2");

    let before = fs::read(f.path("r.csv")).unwrap();
    fs::remove_file(f.path("r.csv")).unwrap();
    let report = replay(&manifest_path).unwrap();
    assert!(report.is_identical(), "{report:?}");
    assert_eq!(fs::read(f.path("r.csv")).unwrap(), before);

    // a changed input is refused
    let mut counts = fs::read_to_string(f.path("counts.csv")).unwrap();
    counts.push_str("99999,1,1,1,1\n");
    fs::write(f.path("counts.csv"), counts).unwrap();
    assert!(replay(&manifest_path).is_err());
}

#[test]
fn simulate_rejects_mismatched_counts() {
    let f = Fixture::synth(10);
    f.release("r.csv", &[]);
    let private = fs::read_to_string(f.path("r.private.csv")).unwrap();
    let mut lines: Vec<&str> = private.lines().collect();
    lines.swap(1, 2);
    fs::write(f.path("r.private.csv"), lines.join("\n") + "\n").unwrap();
    let err = run([
        "simulate-error", "--release", s(&f.path("r.csv")), "--households", s(&f.path("households.csv")),
        "--seed", "1", "--k", "5", "--out", s(&f.path("e.csv")),
    ])
    .unwrap_err();
    assert!(format!("{err:#}").contains("zone order"), "{err:#}");
}

#[test]
fn missing_households_are_undefined_not_fatal() {
    let f = Fixture::synth(10);
    let hh = fs::read_to_string(f.path("households.csv")).unwrap();
    let kept: Vec<&str> = hh.lines().take(6).collect();
    fs::write(f.path("households.csv"), kept.join("\n") + "\n").unwrap();
    let outcome = f.release("r.csv", &["--k", "10"]);
    assert!(outcome.log.contains(&"undefined=5".to_string()), "{:?}", outcome.log);
    let rows = table::read_release(fs::File::open(f.path("r.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows[5..].iter().all(|r| r.broadband_usage.is_none() && r.errors.is_none()));
}

#[test]
fn round_counts_flag() {
    let f = Fixture::synth(15);
    f.release("r.csv", &["--round-counts"]);
    let private = table::read_private_counts(fs::File::open(f.path("r.private.csv")).unwrap()).unwrap();
    assert!(private
        .iter()
        .all(|p| [p.low_speed, p.high_speed, p.services, p.non_services].iter().all(|v| v.fract() == 0.0)));
}
