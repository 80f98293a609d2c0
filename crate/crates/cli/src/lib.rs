//! Command-line harness: configuration loading, seeding, and run output with
//! a hashed manifest.

pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use neurosym::chain::{Chain, Sentence, SlotRead};
use neurosym::codec::{make_alphabet, Alphabet, CodecError};
use neurosym::evolution::{quasispecies_sweep, quasispecies_threshold, QuasispeciesConfig, SweepPoint};
use neurosym::grammar::{derive, derive_spiking, is_member, DerivationTrace};
use neurosym::rules::{check_equivalence, random_case, SeededStream, SpikingEngine};
use neurosym::substrate::Network;
use neurosym::substream_seed;
use neurosym::tasks::{run_grammar_evolution, run_marcus, Artifact, TaskError};

pub use config::{load_config, ConfigError, ExperimentConfig};
pub use manifest::{FileEntry, RunManifest, MANIFEST_NAME};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_EQUIVALENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "neurosym", version, about = "Spiking symbol-system simulator")]
pub struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Directory receiving every output file and the manifest.
    #[arg(long, global = true, value_name = "PATH", default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Oracle,
    Spiking,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an alphabet, or inspect a saved one.
    Alphabet {
        #[arg(long, value_name = "PATH")]
        inspect: Option<PathBuf>,
    },
    /// Write a sentence into a chain and read it back at every stage.
    Simulate {
        #[arg(long)]
        sentence: Option<String>,
    },
    /// Sample derivations from the configured grammar.
    Derive {
        #[arg(long, value_enum, default_value = "oracle")]
        engine: Engine,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Randomized spiking-vs-oracle equivalence suite.
    Equiv {
        #[arg(long)]
        cases: Option<usize>,
    },
    /// Evolve rule sets towards a target language.
    Evolve,
    /// ABA/ABB discrimination with the equality circuit.
    Marcus,
    /// Master-sequence frequency across copy-error rates.
    EigenSweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Alphabet { .. } => "alphabet",
            Command::Simulate { .. } => "simulate",
            Command::Derive { .. } => "derive",
            Command::Equiv { .. } => "equiv",
            Command::Evolve => "evolve",
            Command::Marcus => "marcus",
            Command::EigenSweep => "eigen-sweep",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Infeasible(String),
    Equivalence(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Equivalence(_) => EXIT_EQUIVALENCE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Infeasible(m) => write!(f, "{m}"),
            CliError::Equivalence(m) => write!(f, "equivalence failure: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::Codec(c) => c.into(),
            TaskError::Config(m) => CliError::Config(ConfigError::new("", m)),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime<E: fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Output of one subcommand: files to write and a one-line summary.
struct Outcome {
    artifacts: Vec<Artifact>,
    summary: String,
    failure: Option<CliError>,
}

impl Outcome {
    fn ok(artifacts: Vec<Artifact>, summary: String) -> Self {
        Self {
            artifacts,
            summary,
            failure: None,
        }
    }
}

fn jsonl<T: Serialize>(name: &str, rows: &[T]) -> Result<Artifact, CliError> {
    let mut bytes = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut bytes, r).map_err(runtime)?;
        bytes.push(b'\n');
    }
    Ok(Artifact {
        name: name.into(),
        bytes,
    })
}

fn alphabet_summary(a: &Alphabet) -> serde_json::Value {
    serde_json::json!({
        "symbols": a.symbols().map(|s| s.to_string()).collect::<Vec<_>>(),
        "W": a.width,
        "D": a.duration,
        "eps": a.eps,
        "d_min": a.d_min,
        "m_max": a.m_max,
        "min_pairwise_distance": a.min_pairwise_distance(),
    })
}

fn cmd_alphabet(cfg: &ExperimentConfig, seed: u64, inspect: Option<&Path>) -> Result<Outcome, CliError> {
    let (alphabet, mut artifacts) = match inspect {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| ConfigError::new("", format!("{}: {e}", path.display())))?;
            let a = Alphabet::from_json(&value).map_err(|e| ConfigError::new("", format!("{}: {e}", path.display())))?;
            (a, Vec::new())
        }
        None => {
            let a = make_alphabet(&cfg.alphabet, substream_seed(seed, "alphabet", 0))?;
            let file = Artifact::json("alphabet.json", &a.to_json())?;
            (a, vec![file])
        }
    };
    let summary = alphabet_summary(&alphabet);
    artifacts.push(Artifact::json("summary.json", &summary)?);
    Ok(Outcome::ok(
        artifacts,
        format!(
            "{} symbols, min pairwise distance {:?}",
            alphabet.len(),
            alphabet.min_pairwise_distance()
        ),
    ))
}

fn cmd_simulate(cfg: &ExperimentConfig, seed: u64, sentence: Option<&str>) -> Result<Outcome, CliError> {
    let text = sentence.unwrap_or(&cfg.simulate.sentence);
    let sentence = Sentence::parse(text).map_err(|e| ConfigError::new("/simulate/sentence", e.to_string()))?;
    let alphabet = make_alphabet(&cfg.alphabet, substream_seed(seed, "alphabet", 0))?;
    let mut net = Network::new();
    let chain = Chain::build(cfg.chain_spec(), &mut net).map_err(runtime)?;
    let noise = cfg.simulate.noise;
    if noise.is_zero() {
        chain.write_sentence(&mut net, &alphabet, &sentence, 0).map_err(runtime)?;
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "simulate", 0));
        chain
            .write_sentence_noisy(&mut net, &alphabet, &sentence, 0, &noise, &mut rng)
            .map_err(runtime)?;
    }
    let trace = net.run_to_completion();
    let stages: Vec<Vec<SlotRead>> = (0..chain.spec().stages)
        .map(|k| chain.read_sentence(&trace, &alphabet, k, 0).slots)
        .collect();
    let last = chain.read_sentence(&trace, &alphabet, chain.spec().stages - 1, 0);
    let read = last.to_sentence().ok();
    let pass_through = read.as_ref() == Some(&sentence);
    let report = serde_json::json!({
        "written": sentence,
        "read": read,
        "pass_through": pass_through,
        "stages": stages,
        "spikes": trace.len(),
    });
    let mut raster = String::from("time,neuron\n");
    for e in &trace {
        raster.push_str(&format!("{},{}\n", e.time, e.neuron.0));
    }
    Ok(Outcome::ok(
        vec![
            Artifact::json("readout.json", &report)?,
            Artifact {
                name: "raster.csv".into(),
                bytes: raster.into_bytes(),
            },
            Artifact::json("alphabet.json", &alphabet.to_json())?,
        ],
        format!(
            "wrote [{sentence}], read {}",
            read.map_or("<gap>".to_string(), |s| format!("[{s}]"))
        ),
    ))
}

#[derive(Serialize)]
struct DerivationRow<'a> {
    sample: usize,
    member: Option<bool>,
    trace: &'a DerivationTrace,
}

fn cmd_derive(
    cfg: &ExperimentConfig,
    seed: u64,
    engine: Engine,
    samples: Option<usize>,
) -> Result<Outcome, CliError> {
    let dc = &cfg.derive;
    let rules = dc.rule_set()?;
    let spec = cfg.chain_spec();
    let n = samples.unwrap_or(dc.samples);
    let stream = |i: usize| SeededStream::new(substream_seed(seed, "derivation", i as u64));
    let traces: Vec<DerivationTrace> = match engine {
        Engine::Oracle => (0..n)
            .map(|i| derive(&rules, spec.capacity, dc.max_steps, &mut stream(i)))
            .collect(),
        Engine::Spiking => {
            let alphabet = make_alphabet(&cfg.alphabet, substream_seed(seed, "alphabet", 0))?;
            let mut eng = SpikingEngine::new(alphabet, rules.clone(), spec.clone(), dc.tap).map_err(runtime)?;
            (0..n)
                .map(|i| derive_spiking(&mut eng, dc.max_steps, &mut stream(i)).map_err(runtime))
                .collect::<Result<_, _>>()?
        }
    };
    let rows: Vec<DerivationRow> = traces
        .iter()
        .enumerate()
        .map(|(sample, trace)| DerivationRow {
            sample,
            member: dc
                .target
                .as_ref()
                .map(|t| trace.completed() && is_member(trace.final_sentence(), t)),
            trace,
        })
        .collect();
    let mut terminations: BTreeMap<String, usize> = BTreeMap::new();
    for t in &traces {
        let key = serde_json::to_value(t.terminated_by).map_err(runtime)?["reason"]
            .as_str()
            .unwrap_or("unknown")
            .to_string();
        *terminations.entry(key).or_default() += 1;
    }
    let completed = traces.iter().filter(|t| t.completed()).count();
    let validity = dc
        .target
        .as_ref()
        .map(|_| rows.iter().filter(|r| r.member == Some(true)).count() as f64 / n.max(1) as f64);
    let summary = serde_json::json!({
        "engine": format!("{engine:?}").to_lowercase(),
        "samples": n,
        "completed": completed,
        "validity": validity,
        "terminations": terminations,
    });
    Ok(Outcome::ok(
        vec![jsonl("traces.jsonl", &rows)?, Artifact::json("summary.json", &summary)?],
        format!("{n} derivations, {completed} completed, validity {validity:?}"),
    ))
}

fn cmd_equiv(cfg: &ExperimentConfig, seed: u64, cases: Option<usize>) -> Result<Outcome, CliError> {
    let n = cases.unwrap_or(cfg.equiv.cases);
    let params = cfg.equiv.params;
    let reports = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let case = random_case(&params, substream_seed(seed, "equiv", i))?;
            check_equivalence(&case)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;
    let diverged: Vec<usize> = reports.iter().enumerate().filter(|(_, r)| !r.equal()).map(|(i, _)| i).collect();
    let leaky: Vec<usize> = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.leaked_spikes > 0)
        .map(|(i, _)| i)
        .collect();
    let with_rewrite = reports.iter().filter(|r| !r.trace.is_empty()).count();
    let summary = serde_json::json!({
        "cases": n,
        "equal": n - diverged.len(),
        "with_rewrite": with_rewrite,
        "diverged": diverged,
        "leaked": leaky,
    });
    let mut out = Outcome::ok(
        vec![jsonl("cases.jsonl", &reports)?, Artifact::json("summary.json", &summary)?],
        format!(
            "{}/{n} equal, {with_rewrite} with rewrites, {} with leaked spikes",
            n - diverged.len(),
            leaky.len()
        ),
    );
    if !diverged.is_empty() || !leaky.is_empty() {
        out.failure = Some(CliError::Equivalence(format!(
            "diverged cases {diverged:?}, leaking cases {leaky:?}"
        )));
    }
    Ok(out)
}

fn cmd_evolve(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, CliError> {
    let (report, _, artifacts) = run_grammar_evolution(&cfg.evolve, seed)?;
    Ok(Outcome::ok(
        artifacts,
        format!(
            "best fitness {:.4} with {} rules (generation {}), spiking validity {:.3}",
            report.best_fitness, report.best_rule_count, report.best_reached_at, report.validity_spiking
        ),
    ))
}

fn cmd_marcus(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, CliError> {
    let (report, artifacts) = run_marcus(&cfg.marcus, seed)?;
    Ok(Outcome::ok(
        artifacts,
        format!(
            "train accuracy {:.3}, held-out accuracy {:.3}",
            report.train_accuracy, report.test_accuracy
        ),
    ))
}

fn cmd_eigen_sweep(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, CliError> {
    let q = &cfg.eigen_sweep;
    let mu_star = quasispecies_threshold(q.length, q.sigma).map_err(runtime)?;
    let base = QuasispeciesConfig {
        length: q.length,
        sigma: q.sigma,
        mu: 0.0,
        pop_size: q.pop_size,
        generations: q.generations,
    };
    let mus: Vec<f64> = q.mu_factors.iter().map(|f| (f * mu_star).min(1.0)).collect();
    let points: Vec<SweepPoint> = quasispecies_sweep(&base, &mus, q.replicates, seed).map_err(runtime)?;
    let report = serde_json::json!({
        "mu_threshold": mu_star,
        "mu_factors": q.mu_factors,
        "points": points,
    });
    Ok(Outcome::ok(
        vec![
            Artifact::csv("sweep.csv", &points)?,
            Artifact::json("report.json", &report)?,
        ],
        format!("threshold {mu_star:.4}, {} rates swept", points.len()),
    ))
}

/// Run one parsed command line and return the output directory.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let started = manifest::now_unix_ms();
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).ok_or_else(|| {
        ConfigError::new("/seed", "no seed given: pass --seed or set \"seed\" in the config")
    })?;
    cfg.seed = Some(seed);

    let outcome = match &cli.command {
        Command::Alphabet { inspect } => cmd_alphabet(&cfg, seed, inspect.as_deref())?,
        Command::Simulate { sentence } => cmd_simulate(&cfg, seed, sentence.as_deref())?,
        Command::Derive { engine, samples } => {
            if let Some(n) = samples {
                cfg.derive.samples = *n;
            }
            cmd_derive(&cfg, seed, *engine, *samples)?
        }
        Command::Equiv { cases } => {
            if let Some(n) = cases {
                cfg.equiv.cases = *n;
            }
            cmd_equiv(&cfg, seed, *cases)?
        }
        Command::Evolve => cmd_evolve(&cfg, seed)?,
        Command::Marcus => cmd_marcus(&cfg, seed)?,
        Command::EigenSweep => cmd_eigen_sweep(&cfg, seed)?,
    };

    let dir = &cli.out_dir;
    let files = manifest::write_artifacts(dir, &outcome.artifacts)
        .map_err(|e| CliError::Runtime(format!("writing to {}: {e}", dir.display())))?;
    let m = RunManifest {
        command: cli.command.name().to_string(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config: cfg,
        started_unix_ms: started,
        finished_unix_ms: manifest::now_unix_ms(),
        files,
    };
    m.write(dir)
        .map_err(|e| CliError::Runtime(format!("writing manifest to {}: {e}", dir.display())))?;
    println!("{}: {}", cli.command.name(), outcome.summary);
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(dir.clone()),
    }
}

/// Parse `argv` (program name first), run, and map the result to an exit
/// code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
