//! Rule-set evolution: copying with mutation, tournament selection with
//! elitism, Price-equation bookkeeping and the quasispecies error-threshold
//! experiment.

mod population;
mod quasispecies;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::Sentence;
use crate::codec::{Alphabet, SymbolId};
use crate::grammar::{generation_validity, LanguageSpec};
use crate::rules::{AbstractRule, RuleSet, Wiring, MAX_ACTION_LEN};
use crate::substrate::Tick;

pub use population::{
    evolve, evaluate, price_terms, step_generation, write_history_csv, EvolutionConfig, EvolutionRun,
    GenerationRecord, HistoryRow, Individual, PriceTerms, Selection,
};
pub use quasispecies::{
    late_mean, quasispecies_run, quasispecies_sweep, quasispecies_threshold, write_sweep_csv, QuasispeciesConfig, SweepPoint,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvolutionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("mean fitness is zero")]
    ZeroMeanFitness,
    #[error("empty population")]
    EmptyPopulation,
}

/// Copying error rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorModel {
    /// Per-symbol substitution probability.
    pub mu_sub: f64,
    /// Per-rule deletion probability.
    pub mu_del: f64,
    /// Per-rule duplication probability.
    pub mu_dup: f64,
    /// Half-width of the uniform jitter added to `p`.
    pub mu_p: f64,
    /// Per-offset jitter probability of the detector wiring.
    pub mu_spike: f64,
    pub spike_jitter_max: Tick,
    /// Upper bound on the rule count.
    pub r_max: usize,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            mu_sub: 0.05,
            mu_del: 0.05,
            mu_dup: 0.05,
            mu_p: 0.1,
            mu_spike: 0.0,
            spike_jitter_max: 0,
            r_max: 8,
        }
    }
}

impl ErrorModel {
    pub fn zero() -> Self {
        Self {
            mu_sub: 0.0,
            mu_del: 0.0,
            mu_dup: 0.0,
            mu_p: 0.0,
            mu_spike: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EvolutionError> {
        for (name, v) in [
            ("mu_sub", self.mu_sub),
            ("mu_del", self.mu_del),
            ("mu_dup", self.mu_dup),
            ("mu_spike", self.mu_spike),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EvolutionError::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if !(self.mu_p >= 0.0 && self.mu_p.is_finite()) {
            return Err(EvolutionError::Config("mu_p must be >= 0".into()));
        }
        if self.r_max < 1 {
            return Err(EvolutionError::Config("r_max must be >= 1".into()));
        }
        Ok(())
    }
}

const P_MIN: f64 = 1e-3;

/// A rule set under evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub id: u64,
    pub parent: Option<u64>,
    #[serde(serialize_with = "ser_rules", deserialize_with = "de_rules")]
    pub rules: RuleSet,
    /// Detector templates that deviate from the alphabet.
    #[serde(default, skip_serializing_if = "Wiring::is_empty")]
    pub wiring: Wiring,
    pub fitness: Option<f64>,
}

fn ser_rules<S: serde::Serializer>(r: &RuleSet, s: S) -> Result<S::Ok, S::Error> {
    r.to_json().serialize(s)
}

fn de_rules<'de, D: serde::Deserializer<'de>>(d: D) -> Result<RuleSet, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    RuleSet::from_json(&v).map_err(serde::de::Error::custom)
}

impl Genome {
    pub fn new(id: u64, rules: RuleSet) -> Self {
        Self {
            id,
            parent: None,
            rules,
            wiring: Wiring::new(),
            fitness: None,
        }
    }

    pub fn trait_value(&self) -> f64 {
        self.rules.len() as f64
    }
}

/// Symbols a substitution may produce: every alphabet symbol except the
/// SAME/DIFF control tokens.
pub fn mutation_pool(alphabet: &Alphabet) -> Vec<SymbolId> {
    alphabet.symbols().filter(|s| !s.is_control()).collect()
}

fn substitute<R: Rng + ?Sized>(s: &mut SymbolId, pool: &[SymbolId], mu: f64, rng: &mut R) {
    if mu > 0.0 && rng.gen_bool(mu) {
        let others: Vec<SymbolId> = pool.iter().copied().filter(|x| x != s).collect();
        if let Some(&x) = others.choose(rng) {
            *s = x;
        }
    }
}

/// A mutated copy of `g` with id `id`. With template-level mutation enabled
/// (`mu_spike > 0`), every detector offset of every symbol is jittered with
/// probability `mu_spike`.
pub fn copy_with_mutation<R: Rng + ?Sized>(
    g: &Genome,
    em: &ErrorModel,
    alphabet: &Alphabet,
    id: u64,
    rng: &mut R,
) -> Genome {
    let pool = mutation_pool(alphabet);
    let mut rules: Vec<AbstractRule> = Vec::with_capacity(g.rules.len() + 2);
    for r in &g.rules.rules {
        let mut r = r.clone();
        substitute(&mut r.cond, &pool, em.mu_sub, rng);
        if let Some(ctx) = r.ctx.as_mut() {
            substitute(&mut ctx.sym, &pool, em.mu_sub, rng);
        }
        for a in r.action.iter_mut() {
            substitute(a, &pool, em.mu_sub, rng);
        }
        if em.mu_p > 0.0 {
            r.p = (r.p + rng.gen_range(-em.mu_p..=em.mu_p)).clamp(P_MIN, 1.0);
        }
        let deleted = em.mu_del > 0.0 && rng.gen_bool(em.mu_del);
        let duplicated = em.mu_dup > 0.0 && rng.gen_bool(em.mu_dup);
        if !deleted {
            rules.push(r.clone());
        }
        if duplicated {
            rules.push(r);
        }
    }
    if rules.is_empty() {
        if let Some(r) = g.rules.rules.choose(rng) {
            rules.push(r.clone());
        }
    }
    rules.truncate(em.r_max);

    let mut wiring = g.wiring.clone();
    if em.mu_spike > 0.0 && em.spike_jitter_max > 0 {
        let j = em.spike_jitter_max as i64;
        let top = alphabet.duration as i64 - 1;
        for (s, t) in alphabet.templates() {
            let base = wiring.get(s).unwrap_or(t).clone();
            let mut changed = false;
            let offsets = base
                .offsets
                .iter()
                .map(|&o| {
                    if rng.gen_bool(em.mu_spike) {
                        changed = true;
                        (o as i64 + rng.gen_range(-j..=j)).clamp(0, top) as Tick
                    } else {
                        o
                    }
                })
                .collect();
            if changed {
                wiring.insert(*s, crate::codec::SpikeTemplate::new(offsets));
            }
        }
    }

    Genome {
        id,
        parent: Some(g.id),
        rules: RuleSet {
            start: g.rules.start,
            nonterminals: g.rules.nonterminals.clone(),
            rules,
        },
        wiring,
        fitness: None,
    }
}

/// A random rule set over `pool` with `1..=max_rules` rules; the first rule
/// rewrites the start symbol.
pub fn random_rules<R: Rng + ?Sized>(pool: &[SymbolId], max_rules: usize, rng: &mut R) -> RuleSet {
    let n = rng.gen_range(1..=max_rules.max(1));
    let pick = |rng: &mut R| *pool.choose(rng).expect("non-empty pool");
    let rules = (0..n)
        .map(|i| {
            let cond = if i == 0 { SymbolId::START } else { pick(rng) };
            let len = rng.gen_range(1..=MAX_ACTION_LEN);
            let action = (0..len).map(|_| pick(rng)).collect();
            AbstractRule::new(cond, action, rng.gen_range(0.1..=1.0))
        })
        .collect();
    RuleSet::new(rules)
}

/// Parameters of the language fitness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LanguageFitness {
    pub samples: usize,
    /// Parsimony weight per rule.
    pub lambda: f64,
    pub capacity: usize,
    pub max_steps: usize,
}

impl Default for LanguageFitness {
    fn default() -> Self {
        Self {
            samples: 100,
            lambda: 0.01,
            capacity: 8,
            max_steps: 30,
        }
    }
}

/// Generation validity against `spec` minus `lambda` per rule.
pub fn fitness_language(rules: &RuleSet, spec: &LanguageSpec, cfg: &LanguageFitness, seed: u64) -> f64 {
    generation_validity(rules, spec, cfg.samples, cfg.capacity, cfg.max_steps, seed)
        - cfg.lambda * rules.len() as f64
}

/// Anything that answers a sentence with a verdict token.
pub trait Discriminator {
    fn respond(&mut self, sentence: &Sentence) -> Option<SymbolId>;
}

/// Always gives the same answer.
#[derive(Clone, Copy, Debug)]
pub struct ConstantResponder(pub SymbolId);

impl Discriminator for ConstantResponder {
    fn respond(&mut self, _: &Sentence) -> Option<SymbolId> {
        Some(self.0)
    }
}

/// Fraction of `(sentence, label)` pairs answered with the label.
pub fn fitness_discrimination<D: Discriminator + ?Sized>(
    d: &mut D,
    dataset: &[(Sentence, SymbolId)],
) -> Result<f64, EvolutionError> {
    if dataset.is_empty() {
        return Err(EvolutionError::Config("empty dataset".into()));
    }
    let hits = dataset
        .iter()
        .filter(|(s, label)| d.respond(s) == Some(*label))
        .count();
    Ok(hits as f64 / dataset.len() as f64)
}
