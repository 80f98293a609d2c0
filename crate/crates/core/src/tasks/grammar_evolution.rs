use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Artifact, TaskError};
use crate::chain::{ChainSpec, Sentence};
use crate::codec::{make_alphabet, AlphabetParams, SymbolId};
use crate::evolution::{
    evaluate, evolve, fitness_language, mutation_pool, random_rules, EvolutionConfig, Genome, HistoryRow,
    LanguageFitness,
};
use crate::grammar::{derive, derive_spiking, is_member, LanguageSpec};
use crate::rules::{SeededStream, SpikingEngine};
use crate::substream_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrammarEvolutionConfig {
    pub alphabet: AlphabetParams,
    pub chain: Option<ChainSpec>,
    pub tap: usize,
    pub target: LanguageSpec,
    pub evolution: EvolutionConfig,
    pub fitness: LanguageFitness,
    pub init_max_rules: usize,
    /// Derivations used to compare the oracle and the spiking chain on the
    /// best genome.
    pub validation_samples: usize,
}

impl Default for GrammarEvolutionConfig {
    fn default() -> Self {
        Self {
            alphabet: AlphabetParams {
                n: 5,
                ..AlphabetParams::default()
            },
            chain: None,
            tap: 1,
            target: LanguageSpec::Enumerated {
                sentences: [Sentence::new(vec![SymbolId::ordinary(0), SymbolId::ordinary(1)])].into(),
            },
            evolution: EvolutionConfig {
                pop_size: 50,
                generations: 50,
                ..EvolutionConfig::default()
            },
            fitness: LanguageFitness::default(),
            init_max_rules: 3,
            validation_samples: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub best: f64,
    pub mean: f64,
    pub rule_count_mean: f64,
}

impl PopulationStats {
    fn of(pop: &[Genome]) -> Self {
        let n = pop.len() as f64;
        let f = |g: &Genome| g.fitness.unwrap_or(f64::NEG_INFINITY);
        Self {
            best: pop.iter().map(f).fold(f64::NEG_INFINITY, f64::max),
            mean: pop.iter().map(f).sum::<f64>() / n,
            rule_count_mean: pop.iter().map(Genome::trait_value).sum::<f64>() / n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrammarEvolutionReport {
    pub seed: u64,
    pub generations: usize,
    pub initial: PopulationStats,
    #[serde(rename = "final")]
    pub final_stats: PopulationStats,
    pub best_fitness: f64,
    pub best_rule_count: usize,
    /// First generation whose population held the final best fitness.
    pub best_reached_at: usize,
    pub validity_oracle: f64,
    pub validity_spiking: f64,
    /// Validation derivations whose oracle and spiking traces are identical.
    pub trace_agreement: f64,
}

/// Evolve rule sets towards `cfg.target`, then re-run the best one on the
/// spiking chain.
pub fn run_grammar_evolution(
    cfg: &GrammarEvolutionConfig,
    seed: u64,
) -> Result<(GrammarEvolutionReport, Genome, Vec<Artifact>), TaskError> {
    cfg.target.validate().map_err(TaskError::Config)?;
    if cfg.evolution.pop_size < 1 {
        return Err(TaskError::Config("evolution.pop_size must be >= 1".into()));
    }
    let alphabet = make_alphabet(&cfg.alphabet, substream_seed(seed, "alphabet", 0))?;
    let pool = mutation_pool(&alphabet);
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "init", 0));
    let mut initial: Vec<Genome> = (0..cfg.evolution.pop_size as u64)
        .map(|i| Genome::new(i, random_rules(&pool, cfg.init_max_rules, &mut rng)))
        .collect();
    let fitness_seed = substream_seed(seed, "fitness", 0);
    let fitness = |g: &Genome| fitness_language(&g.rules, &cfg.target, &cfg.fitness, fitness_seed);
    evaluate(&mut initial, &fitness);
    let initial_stats = PopulationStats::of(&initial);
    let run = evolve(&cfg.evolution, &alphabet, initial, &fitness, substream_seed(seed, "evolve", 0))?;
    let best = run.best.clone();
    let best_fitness = best.fitness.unwrap_or(f64::NEG_INFINITY);
    let best_reached_at = run
        .history
        .iter()
        .position(|h| h.best >= best_fitness)
        .unwrap_or(run.history.len());

    let spec = cfg.chain.clone().unwrap_or_else(|| ChainSpec::for_alphabet(&alphabet));
    let capacity = spec.capacity;
    let mut engine = SpikingEngine::with_wiring(alphabet.clone(), best.rules.clone(), spec, cfg.tap, &best.wiring)?;
    let n = cfg.validation_samples.max(1);
    let (mut ok_oracle, mut ok_spiking, mut agree) = (0usize, 0usize, 0usize);
    for i in 0..n as u64 {
        let s = substream_seed(seed, "validation", i);
        let o = derive(&best.rules, capacity, cfg.fitness.max_steps, &mut SeededStream::new(s));
        let p = derive_spiking(&mut engine, cfg.fitness.max_steps, &mut SeededStream::new(s))?;
        ok_oracle += usize::from(o.completed() && is_member(o.final_sentence(), &cfg.target));
        ok_spiking += usize::from(p.completed() && is_member(p.final_sentence(), &cfg.target));
        agree += usize::from(o == p);
    }

    let report = GrammarEvolutionReport {
        seed,
        generations: run.history.len(),
        initial: initial_stats,
        final_stats: PopulationStats::of(&run.population),
        best_fitness,
        best_rule_count: best.rules.len(),
        best_reached_at,
        validity_oracle: ok_oracle as f64 / n as f64,
        validity_spiking: ok_spiking as f64 / n as f64,
        trace_agreement: agree as f64 / n as f64,
    };
    let history: &[HistoryRow] = &run.history;
    let artifacts = vec![
        Artifact::json("report.json", &report)?,
        Artifact::csv("history.csv", history)?,
        Artifact::json("best_rules.json", &best.rules.to_json())?,
        Artifact::json("best_genome.json", &best)?,
    ];
    Ok((report, best, artifacts))
}
