//! Symbolic reference semantics for one rewrite step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Context, Relation, RuleSet};
use crate::chain::Sentence;
use crate::codec::SymbolId;

/// A source of uniform draws in `[0, 1)` that decides which eligible
/// (position, rule) pair is rewritten.
pub trait DecisionStream {
    fn next_unit(&mut self) -> f64;
}

impl<T: DecisionStream + ?Sized> DecisionStream for &mut T {
    fn next_unit(&mut self) -> f64 {
        (**self).next_unit()
    }
}

#[derive(Clone, Debug)]
pub struct SeededStream {
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl DecisionStream for SeededStream {
    fn next_unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

/// Replays recorded draws; once exhausted it yields 0.0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayStream {
    pub values: Vec<f64>,
    #[serde(skip)]
    pos: usize,
}

impl ReplayStream {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, pos: 0 }
    }
}

impl DecisionStream for ReplayStream {
    fn next_unit(&mut self) -> f64 {
        let v = self.values.get(self.pos).copied().unwrap_or(0.0);
        self.pos += 1;
        v
    }
}

/// Wraps a stream and keeps every draw for later replay.
#[derive(Clone, Debug)]
pub struct Recorder<S> {
    inner: S,
    pub log: Vec<f64>,
}

impl<S: DecisionStream> Recorder<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            log: Vec::new(),
        }
    }

    pub fn replay(&self) -> ReplayStream {
        ReplayStream::new(self.log.clone())
    }
}

impl<S: DecisionStream> DecisionStream for Recorder<S> {
    fn next_unit(&mut self) -> f64 {
        let v = self.inner.next_unit();
        self.log.push(v);
        v
    }
}

/// A rule applicable at a sentence position.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub position: usize,
    pub rule: usize,
}

pub fn context_satisfied(ctx: &Context, tokens: &[SymbolId], position: usize) -> bool {
    match ctx.rel {
        Relation::LeftAdjacent => position > 0 && tokens[position - 1] == ctx.sym,
        Relation::AnywhereBefore => tokens[..position].contains(&ctx.sym),
    }
}

/// Every (position, rule) whose condition matches and whose context holds,
/// ordered by position then rule id.
pub fn eligible(rules: &RuleSet, sentence: &Sentence) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (position, &tok) in sentence.tokens.iter().enumerate() {
        for (rule, r) in rules.rules.iter().enumerate() {
            if r.cond == tok
                && r.ctx
                    .as_ref()
                    .is_none_or(|c| context_satisfied(c, &sentence.tokens, position))
            {
                out.push(Candidate { position, rule });
            }
        }
    }
    out
}

/// Draw one candidate with probability proportional to its rule's `p`.
/// A draw whose action would push the sentence past `capacity` is discarded
/// and the next one is drawn from the remaining candidates.
pub fn select<D: DecisionStream + ?Sized>(
    rules: &RuleSet,
    candidates: &[Candidate],
    len: usize,
    capacity: usize,
    stream: &mut D,
) -> Option<Candidate> {
    let mut pool: Vec<Candidate> = candidates.to_vec();
    while !pool.is_empty() {
        let total: f64 = pool.iter().map(|c| rules.rules[c.rule].p).sum();
        let target = stream.next_unit() * total;
        let mut acc = 0.0;
        let mut pick = pool.len() - 1;
        for (i, c) in pool.iter().enumerate() {
            acc += rules.rules[c.rule].p;
            if target < acc {
                pick = i;
                break;
            }
        }
        let cand = pool[pick];
        if len + rules.rules[cand.rule].growth() <= capacity {
            return Some(cand);
        }
        pool.remove(pick);
    }
    None
}

/// Replace the token at the candidate position by the rule's action.
pub fn apply_candidate(rules: &RuleSet, sentence: &Sentence, cand: Candidate) -> Sentence {
    let mut tokens = sentence.tokens.clone();
    tokens.splice(
        cand.position..=cand.position,
        rules.rules[cand.rule].action.iter().copied(),
    );
    Sentence::new(tokens)
}

/// One stochastic rewrite step. Returns the sentence unchanged with `None`
/// when nothing is eligible or every eligible rewrite would overflow.
pub fn apply_oracle<D: DecisionStream + ?Sized>(
    rules: &RuleSet,
    sentence: &Sentence,
    capacity: usize,
    stream: &mut D,
) -> (Sentence, Option<Candidate>) {
    let cands = eligible(rules, sentence);
    match select(rules, &cands, sentence.len(), capacity, stream) {
        Some(c) => (apply_candidate(rules, sentence, c), Some(c)),
        None => (sentence.clone(), None),
    }
}
