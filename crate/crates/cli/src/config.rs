use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use neurosym::chain::ChainSpec;
use neurosym::codec::{AlphabetParams, NoiseModel, SymbolId};
use neurosym::evolution::quasispecies_threshold;
use neurosym::grammar::LanguageSpec;
use neurosym::rules::{AbstractRule, RandomCaseParams, RuleSet};
use neurosym::tasks::{GrammarEvolutionConfig, MarcusConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem, located by a JSON pointer into the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(pointer: &str, message: impl Into<String>) -> Self {
        Self {
            pointer: pointer.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "config error at {at}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Whitespace-separated symbol names.
    pub sentence: String,
    pub noise: NoiseModel,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            sentence: "a b c".into(),
            noise: NoiseModel::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeriveConfig {
    /// Rule list in the rule-set JSON format.
    pub rules: serde_json::Value,
    pub samples: usize,
    pub max_steps: usize,
    pub tap: usize,
    /// Optional language the derived sentences are checked against.
    pub target: Option<LanguageSpec>,
}

/// `S -> a S b | a b`, each with probability 1/2.
pub fn anbn_rules() -> RuleSet {
    let (a, b) = (SymbolId::ordinary(0), SymbolId::ordinary(1));
    RuleSet::new(vec![
        AbstractRule::new(SymbolId::START, vec![a, SymbolId::START, b], 0.5),
        AbstractRule::new(SymbolId::START, vec![a, b], 0.5),
    ])
}

impl Default for DeriveConfig {
    fn default() -> Self {
        Self {
            rules: anbn_rules().to_json(),
            samples: 20,
            max_steps: 30,
            tap: 1,
            target: Some(LanguageSpec::AnBn {
                a: SymbolId::ordinary(0),
                b: SymbolId::ordinary(1),
                max_n: 7,
            }),
        }
    }
}

impl DeriveConfig {
    pub fn rule_set(&self) -> Result<RuleSet, ConfigError> {
        RuleSet::from_json(&self.rules).map_err(|e| ConfigError::new("/derive/rules", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquivConfig {
    pub cases: usize,
    pub params: RandomCaseParams,
}

impl Default for EquivConfig {
    fn default() -> Self {
        Self {
            cases: 100,
            params: RandomCaseParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenSweepConfig {
    pub length: usize,
    pub sigma: f64,
    pub pop_size: usize,
    pub generations: usize,
    /// Copy-error rates as multiples of the analytic threshold.
    pub mu_factors: Vec<f64>,
    pub replicates: usize,
}

impl Default for EigenSweepConfig {
    fn default() -> Self {
        Self {
            length: 10,
            sigma: 10.0,
            pop_size: 1000,
            generations: 500,
            mu_factors: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
            replicates: 5,
        }
    }
}

/// Everything a run needs besides the subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: Option<u64>,
    pub alphabet: AlphabetParams,
    /// Defaults to the standard chain for the alphabet.
    pub chain: Option<ChainSpec>,
    pub simulate: SimulateConfig,
    pub derive: DeriveConfig,
    pub equiv: EquivConfig,
    pub evolve: GrammarEvolutionConfig,
    pub marcus: MarcusConfig,
    pub eigen_sweep: EigenSweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: SCHEMA_VERSION,
            seed: None,
            alphabet: AlphabetParams::default(),
            chain: None,
            simulate: SimulateConfig::default(),
            derive: DeriveConfig::default(),
            equiv: EquivConfig::default(),
            evolve: GrammarEvolutionConfig::default(),
            marcus: MarcusConfig::default(),
            eigen_sweep: EigenSweepConfig::default(),
        }
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        let part = match seg {
            Segment::Seq { index } => index.to_string(),
            Segment::Map { key } => key.replace('~', "~0").replace('/', "~1"),
            Segment::Enum { variant } => variant.clone(),
            Segment::Unknown => "?".into(),
        };
        out.push('/');
        out.push_str(&part);
    }
    out
}

fn chain_for(alphabet: &AlphabetParams, chain: &Option<ChainSpec>) -> ChainSpec {
    chain.clone().unwrap_or_else(|| ChainSpec {
        width: alphabet.width,
        duration: alphabet.duration,
        eps: alphabet.eps,
        ..ChainSpec::default()
    })
}

fn check_chain(at: &str, alphabet: &AlphabetParams, chain: &Option<ChainSpec>) -> Result<(), ConfigError> {
    let spec = chain_for(alphabet, chain);
    spec.validate().map_err(|e| ConfigError::new(at, e.to_string()))?;
    if spec.width != alphabet.width || spec.duration < alphabet.duration {
        return Err(ConfigError::new(
            at,
            format!(
                "chain (width {}, duration {}) does not fit alphabet (width {}, duration {})",
                spec.width, spec.duration, alphabet.width, alphabet.duration
            ),
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
            pointer: pointer(e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The chain used by the top-level subcommands.
    pub fn chain_spec(&self) -> ChainSpec {
        chain_for(&self.alphabet, &self.chain)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != SCHEMA_VERSION {
            return Err(ConfigError::new(
                "/version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version),
            ));
        }
        let alph = |at: &str, p: &AlphabetParams| p.validate().map_err(|e| ConfigError::new(at, e.to_string()));
        alph("/alphabet", &self.alphabet)?;
        check_chain(if self.chain.is_some() { "/chain" } else { "/alphabet" }, &self.alphabet, &self.chain)?;

        self.simulate
            .noise
            .validate()
            .map_err(|e| ConfigError::new("/simulate/noise", e))?;
        neurosym::chain::Sentence::parse(&self.simulate.sentence)
            .map_err(|e| ConfigError::new("/simulate/sentence", e.to_string()))?;

        self.derive.rule_set()?;
        if let Some(t) = &self.derive.target {
            t.validate().map_err(|e| ConfigError::new("/derive/target", e))?;
        }

        if self.equiv.params.symbols < 1 || self.equiv.params.max_len < 1 {
            return Err(ConfigError::new("/equiv/params", "symbols and max_len must be >= 1"));
        }

        let ev = &self.evolve;
        alph("/evolve/alphabet", &ev.alphabet)?;
        check_chain(
            if ev.chain.is_some() { "/evolve/chain" } else { "/evolve/alphabet" },
            &ev.alphabet,
            &ev.chain,
        )?;
        ev.target.validate().map_err(|e| ConfigError::new("/evolve/target", e))?;
        ev.evolution
            .error
            .validate()
            .map_err(|e| ConfigError::new("/evolve/evolution/error", e.to_string()))?;
        if ev.evolution.pop_size <= ev.evolution.selection.elitism {
            return Err(ConfigError::new(
                "/evolve/evolution",
                "pop_size must exceed selection.elitism",
            ));
        }
        if ev.evolution.selection.tournament_k < 1 {
            return Err(ConfigError::new("/evolve/evolution/selection/tournament_k", "must be >= 1"));
        }

        let m = &self.marcus;
        alph("/marcus/alphabet", &m.alphabet)?;
        check_chain(
            if m.chain.is_some() { "/marcus/chain" } else { "/marcus/alphabet" },
            &m.alphabet,
            &m.chain,
        )?;
        if m.repeats < 1 || m.n_sentences < 1 {
            return Err(ConfigError::new("/marcus", "repeats and n_sentences must be >= 1"));
        }

        let q = &self.eigen_sweep;
        quasispecies_threshold(q.length, q.sigma).map_err(|e| ConfigError::new("/eigen_sweep", e.to_string()))?;
        if !(1..=64).contains(&q.length) {
            return Err(ConfigError::new("/eigen_sweep/length", "must be in 1..=64"));
        }
        if q.pop_size < 1 {
            return Err(ConfigError::new("/eigen_sweep/pop_size", "must be >= 1"));
        }
        if let Some(i) = q.mu_factors.iter().position(|f| !(*f >= 0.0)) {
            return Err(ConfigError::new(&format!("/eigen_sweep/mu_factors/{i}"), "must be >= 0"));
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json_str(&text)
}
