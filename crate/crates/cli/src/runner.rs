use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use chaoslab::rng::StreamKey;
use clap::{Parser, ValueEnum};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{Config, ConfigError, Threads};
use crate::experiments::{bounds, breuer_major, neural_net, selftest, spde};
use crate::output::{write_csv, write_json, write_svg};
use crate::report::ExperimentOutput;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Read only when `--threads` is absent.
pub const THREADS_ENV: &str = "CHAOSLAB_THREADS";

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Selftest,
    BreuerMajor,
    NeuralNet,
    Spde,
    Bounds,
    All,
}

impl Command {
    fn experiments(self) -> &'static [Command] {
        match self {
            Command::All => &[
                Command::Selftest,
                Command::Bounds,
                Command::BreuerMajor,
                Command::NeuralNet,
                Command::Spde,
            ],
            Command::Selftest => &[Command::Selftest],
            Command::BreuerMajor => &[Command::BreuerMajor],
            Command::NeuralNet => &[Command::NeuralNet],
            Command::Spde => &[Command::Spde],
            Command::Bounds => &[Command::Bounds],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Command::Selftest => "selftest",
            Command::BreuerMajor => "breuer-major",
            Command::NeuralNet => "neural-net",
            Command::Spde => "spde",
            Command::Bounds => "bounds",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "chaoslab", version, about = "Gaussian approximation bounds on truncated Wiener chaos")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to CHAOSLAB_THREADS, then the config.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Worker count, `0` meaning the rayon default.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>, cfg: Threads) -> Result<usize, ConfigError> {
    let bad = |msg: String| ConfigError::Invalid {
        key: "threads".into(),
        msg,
    };
    let n = match (flag, env) {
        (Some(n), _) => n,
        (None, Some(v)) => v
            .trim()
            .parse()
            .map_err(|_| bad(format!("{THREADS_ENV}={v:?} is not a positive integer")))?,
        (None, None) => match cfg {
            Threads::Count(n) => n,
            Threads::Auto => return Ok(0),
        },
    };
    if n == 0 {
        return Err(bad("must be positive".into()));
    }
    Ok(n)
}

/// Runs one experiment on the current rayon pool.
pub fn run_experiment(cfg: &Config, which: Command, seed: u64) -> chaoslab::Result<ExperimentOutput> {
    let key = StreamKey::new(seed);
    match which {
        Command::Selftest => selftest::run(&cfg.selftest, &key),
        Command::Bounds => bounds::run(&cfg.bounds, &key),
        Command::BreuerMajor => breuer_major::run(&cfg.breuer_major, &key),
        Command::NeuralNet => neural_net::run(&cfg.neural_net, &key),
        Command::Spde => spde::run(&cfg.spde, &key),
        Command::All => unreachable!("expanded by the caller"),
    }
}

struct Outcome {
    outputs: Vec<ExperimentOutput>,
    errors: Vec<(String, String)>,
}

fn execute(cfg: &Config, command: Command, seed: u64) -> Outcome {
    let mut outcome = Outcome {
        outputs: Vec::new(),
        errors: Vec::new(),
    };
    for &which in command.experiments() {
        match run_experiment(cfg, which, seed) {
            Ok(o) => outcome.outputs.push(o),
            Err(e) => outcome.errors.push((which.name().to_string(), e.to_string())),
        }
    }
    outcome
}

fn write_outputs(
    dir: &Path,
    outcome: &Outcome,
    manifest_head: Map<String, Value>,
    seed: u64,
    command: Command,
) -> std::io::Result<bool> {
    std::fs::create_dir_all(dir)?;
    let mut experiments = Map::new();
    let mut files = Map::new();
    let mut failures = Vec::new();
    for o in &outcome.outputs {
        let mut written = Vec::new();
        for t in &o.tables {
            written.push(write_csv(dir, t)?);
        }
        for p in &o.plots {
            written.push(write_svg(dir, p)?);
        }
        files.insert(o.name.clone(), json!(written));
        experiments.insert(
            o.name.clone(),
            json!({ "passed": o.passed(), "checks": o.checks, "report": o.report }),
        );
        for c in o.checks.iter().filter(|c| !c.pass) {
            failures.push(json!({ "experiment": o.name, "check": c }));
        }
    }
    for (name, err) in &outcome.errors {
        failures.push(json!({ "experiment": name, "error": err }));
    }
    let passed = failures.is_empty();
    write_json(
        dir,
        "summary.json",
        &json!({
            "schema": SCHEMA,
            "command": command.name(),
            "seed": seed,
            "passed": passed,
            "experiments": experiments,
        }),
    )?;
    let mut common = vec![json!("summary.json"), json!("manifest.json")];
    if !passed {
        write_json(dir, "failures.json", &json!({ "schema": SCHEMA, "failures": failures }))?;
        common.push(json!("failures.json"));
    }
    let mut manifest = manifest_head;
    manifest.insert("outputs".into(), Value::Object(files));
    manifest.insert("files".into(), Value::Array(common));
    write_json(dir, "manifest.json", &Value::Object(manifest))?;
    Ok(passed)
}

pub fn run(cli: &Cli) -> i32 {
    let text = match std::fs::read(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return EXIT_CONFIG;
        }
    };
    let cfg = match std::str::from_utf8(&text)
        .map_err(|e| ConfigError::Invalid {
            key: "<file>".into(),
            msg: e.to_string(),
        })
        .and_then(Config::parse)
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return EXIT_CONFIG;
        }
    };
    let env = std::env::var(THREADS_ENV).ok();
    let threads = match resolve_threads(cli.threads, env.as_deref(), cfg.threads) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_FAILED;
        }
    };
    let outcome = pool.install(|| execute(&cfg, cli.command, seed));

    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut head = Map::new();
    head.insert("schema".into(), json!(SCHEMA));
    head.insert("command".into(), json!(cli.command.name()));
    head.insert("config_path".into(), json!(cli.config.display().to_string()));
    head.insert("config_sha256".into(), json!(hex::encode(Sha256::digest(&text))));
    head.insert("seed".into(), json!(seed));
    head.insert("threads".into(), json!(pool.current_num_threads()));
    head.insert("created_unix".into(), json!(created));
    head.insert(
        "versions".into(),
        json!({ "chaoslab": chaoslab::VERSION, "chaoslab-cli": env!("CARGO_PKG_VERSION") }),
    );

    match write_outputs(&dir, &outcome, head, seed, cli.command) {
        Ok(true) => {
            eprintln!("all checks passed; results in {}", dir.display());
            EXIT_OK
        }
        Ok(false) => {
            for o in &outcome.outputs {
                for c in o.checks.iter().filter(|c| !c.pass) {
                    eprintln!("FAIL {}: {} (value {:e}, limit {:e})", o.name, c.name, c.value, c.limit);
                }
            }
            for (name, err) in &outcome.errors {
                eprintln!("ERROR {name}: {err}");
            }
            EXIT_FAILED
        }
        Err(e) => {
            eprintln!("error: writing results to {}: {e}", dir.display());
            EXIT_FAILED
        }
    }
}
