//! Runs the nine acceptance criteria at their full sizes and prints one
//! PASS/FAIL line per criterion. Each criterion passes only if all of its
//! checks pass and it finishes inside its time budget.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chaoslab::rng::StreamKey;
use chaoslab_cli::config::Config;
use chaoslab_cli::experiments::{bounds, breuer_major, neural_net, selftest, spde};
use chaoslab_cli::report::Check;
use chaoslab_cli::{Cli, Command, EXIT_CONFIG};

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

struct Outcome {
    id: u8,
    title: &'static str,
    budget: Duration,
    elapsed: Duration,
    checks: Vec<Check>,
}

impl Outcome {
    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass) && self.elapsed <= self.budget
    }

    fn print(&self) {
        println!(
            "{} {} {} ({:.1} s of {} s, {} checks)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.checks.len()
        );
        for c in self.checks.iter().filter(|c| !c.pass) {
            println!("       failed: {} (value {:e}, limit {:e}) {}", c.name, c.value, c.limit, c.detail);
        }
        if self.elapsed > self.budget {
            println!("       over time budget");
        }
    }
}

fn timed(
    id: u8,
    title: &'static str,
    budget_s: u64,
    f: impl FnOnce() -> chaoslab::Result<Vec<Check>>,
) -> Outcome {
    let start = Instant::now();
    let checks = f().unwrap_or_else(|e| vec![Check::flag(Some(id), format!("error: {e}"), false)]);
    let out = Outcome {
        id,
        title,
        budget: Duration::from_secs(budget_s),
        elapsed: start.elapsed(),
        checks: checks.into_iter().filter(|c| c.criterion == Some(id)).collect(),
    };
    out.print();
    out
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> chaoslab::Result<Vec<Check>> {
    let tmp = tempfile::tempdir().unwrap();
    let run = |tag: &str, threads: usize| {
        let out = tmp.path().join(tag);
        let cli = Cli {
            command: Command::All,
            config: workspace_file("configs/smoke.toml"),
            seed: None,
            threads: Some(threads),
            out: Some(out.clone()),
        };
        let code = chaoslab_cli::run(&cli);
        assert_ne!(code, EXIT_CONFIG);
        csv_files(&out)
    };
    let a = run("a", 1);
    let b = run("b", 1);
    let c = run("c", 4);
    Ok(vec![
        Check::flag(Some(9), "CSV files produced", a.len() >= 5),
        Check::flag(Some(9), "byte-identical CSVs across repeated runs", a == b),
        Check::flag(Some(9), "byte-identical CSVs across 1 and 4 threads", a == c),
    ])
}

#[test]
fn acceptance() {
    let cfg = Config::load(&workspace_file("configs/default.toml")).expect("default config parses");
    let key = StreamKey::new(cfg.seed);
    println!();
    let outcomes = vec![
        timed(1, "operator identities", 5, || selftest::identities(&cfg.selftest, &key)),
        timed(2, "orthogonality and isometry", 30, || selftest::isometry(&cfg.selftest, &key)),
        timed(3, "Gaussian Poincare inequality", 5, || selftest::poincare(&cfg.selftest, &key)),
        timed(4, "Mehler formula", 60, || selftest::mehler(&cfg.selftest, &key)),
        timed(5, "Stein bound ordering", 120, || bounds::run(&cfg.bounds, &key).map(|o| o.checks)),
        timed(6, "Breuer-Major", 300, || {
            breuer_major::run(&cfg.breuer_major, &key).map(|o| o.checks)
        }),
        timed(7, "shallow neural network", 300, || {
            neural_net::run(&cfg.neural_net, &key).map(|o| o.checks)
        }),
        timed(8, "parabolic Anderson model", 300, || spde::run(&cfg.spde, &key).map(|o| o.checks)),
        timed(9, "determinism", 60, determinism),
    ];
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.id).collect();
    println!("{} of {} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
