//! Derivations from the start symbol, language membership and brute-force
//! language enumeration.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::Sentence;
use crate::codec::SymbolId;
use crate::rules::{apply_candidate, apply_oracle, eligible, DecisionStream, RuleError, RuleSet, SeededStream, SpikingEngine};
use crate::substream_seed;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationStep {
    pub step: usize,
    pub before: Sentence,
    pub rule: usize,
    pub position: usize,
    pub after: Sentence,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    NoRule,
    AllTerminal,
    MaxSteps,
    /// The spiking read-out had an undecodable slot.
    ReadFault { slot: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationTrace {
    pub start: Sentence,
    pub steps: Vec<DerivationStep>,
    pub terminated_by: Termination,
}

impl DerivationTrace {
    pub fn final_sentence(&self) -> &Sentence {
        self.steps.last().map_or(&self.start, |s| &s.after)
    }

    pub fn completed(&self) -> bool {
        self.terminated_by == Termination::AllTerminal
    }

    /// One JSON object per step, then a closing line with the termination.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut out, s)?;
            writeln!(out)?;
        }
        serde_json::to_writer(
            &mut out,
            &serde_json::json!({ "terminated_by": self.terminated_by, "final": self.final_sentence() }),
        )?;
        writeln!(out)
    }
}

/// Derive from `[start]` with the oracle until every token is terminal, no
/// rule applies, or `max_steps` rewrites have been made.
pub fn derive<D: DecisionStream + ?Sized>(
    rules: &RuleSet,
    capacity: usize,
    max_steps: usize,
    stream: &mut D,
) -> DerivationTrace {
    let start = Sentence::new(vec![rules.start]);
    let mut current = start.clone();
    let mut steps = Vec::new();
    let terminated_by = loop {
        if rules.all_terminal(&current.tokens) {
            break Termination::AllTerminal;
        }
        if steps.len() == max_steps {
            break Termination::MaxSteps;
        }
        let (next, applied) = apply_oracle(rules, &current, capacity, stream);
        let Some(c) = applied else {
            break Termination::NoRule;
        };
        steps.push(DerivationStep {
            step: steps.len(),
            before: current,
            rule: c.rule,
            position: c.position,
            after: next.clone(),
        });
        current = next;
    };
    DerivationTrace {
        start,
        steps,
        terminated_by,
    }
}

/// As [`derive`], with every step executed by the spiking chain: the read-out
/// of one pass is written back as the input of the next.
pub fn derive_spiking<D: DecisionStream + ?Sized>(
    engine: &mut SpikingEngine,
    max_steps: usize,
    stream: &mut D,
) -> Result<DerivationTrace, RuleError> {
    let rules = engine.rules().clone();
    let start = Sentence::new(vec![rules.start]);
    let mut current = start.clone();
    let mut steps = Vec::new();
    let terminated_by = loop {
        if rules.all_terminal(&current.tokens) {
            break Termination::AllTerminal;
        }
        if steps.len() == max_steps {
            break Termination::MaxSteps;
        }
        let (next, pass) = match engine.step(&current, stream) {
            Ok(r) => r,
            Err(RuleError::Gap(g)) => break Termination::ReadFault { slot: g.slot },
            Err(e) => return Err(e),
        };
        let Some(c) = pass.applied else {
            break Termination::NoRule;
        };
        steps.push(DerivationStep {
            step: steps.len(),
            before: current,
            rule: c.rule,
            position: c.position,
            after: next.clone(),
        });
        current = next;
    };
    Ok(DerivationTrace {
        start,
        steps,
        terminated_by,
    })
}

/// A target language with a direct structural membership test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LanguageSpec {
    Enumerated {
        sentences: BTreeSet<Sentence>,
    },
    /// `x y x` with `x != y`, optionally drawn from a token class.
    PatternAba {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class: Option<BTreeSet<SymbolId>>,
    },
    /// `x y y` with `x != y`.
    PatternAbb {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class: Option<BTreeSet<SymbolId>>,
    },
    /// `a^n b^n` for `1 <= n <= max_n`.
    AnBn { a: SymbolId, b: SymbolId, max_n: usize },
    /// A named predicate from [`CUSTOM_PREDICATES`].
    Custom { name: String },
}

type Predicate = fn(&[SymbolId]) -> bool;

/// Named membership predicates usable through [`LanguageSpec::Custom`].
pub const CUSTOM_PREDICATES: &[(&str, Predicate)] = &[
    ("palindrome", |t| !t.is_empty() && t.iter().eq(t.iter().rev())),
    ("nonempty", |t| !t.is_empty()),
    ("even_length", |t| !t.is_empty() && t.len() % 2 == 0),
];

fn custom(name: &str) -> Option<Predicate> {
    CUSTOM_PREDICATES.iter().find(|(n, _)| *n == name).map(|(_, p)| *p)
}

impl LanguageSpec {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::Custom { name } if custom(name).is_none() => Err(format!("unknown predicate {name:?}")),
            Self::AnBn { a, b, .. } if a == b => Err("a_n_b_n needs two distinct symbols".into()),
            _ => Ok(()),
        }
    }
}

fn in_class(class: &Option<BTreeSet<SymbolId>>, t: &[SymbolId]) -> bool {
    class.as_ref().is_none_or(|c| t.iter().all(|s| c.contains(s)))
}

pub fn is_member(sentence: &Sentence, spec: &LanguageSpec) -> bool {
    let t = &sentence.tokens[..];
    match spec {
        LanguageSpec::Enumerated { sentences } => sentences.contains(sentence),
        LanguageSpec::PatternAba { class } => {
            t.len() == 3 && t[0] == t[2] && t[0] != t[1] && in_class(class, t)
        }
        LanguageSpec::PatternAbb { class } => {
            t.len() == 3 && t[1] == t[2] && t[0] != t[1] && in_class(class, t)
        }
        LanguageSpec::AnBn { a, b, max_n } => {
            let n = t.len() / 2;
            t.len() % 2 == 0
                && (1..=*max_n).contains(&n)
                && t[..n].iter().all(|s| s == a)
                && t[n..].iter().all(|s| s == b)
        }
        LanguageSpec::Custom { name } => custom(name).is_some_and(|p| p(t)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enumeration {
    pub sentences: BTreeSet<Sentence>,
    /// Set when the node cap stopped the search early.
    pub truncated: bool,
    pub nodes: usize,
}

/// Breadth-first closure over every rule application from `[start]`, up to
/// `max_depth` rewrites and `max_len` tokens, collecting all-terminal
/// sentences.
pub fn enumerate_language(rules: &RuleSet, max_len: usize, max_depth: usize, node_cap: usize) -> Enumeration {
    let start = Sentence::new(vec![rules.start]);
    let mut seen: HashSet<Sentence> = HashSet::from([start.clone()]);
    let mut frontier = vec![start];
    let mut sentences = BTreeSet::new();
    let mut truncated = false;
    'depth: for _ in 0..max_depth {
        let mut next = Vec::new();
        for s in &frontier {
            for cand in eligible(rules, s) {
                if s.len() + rules.rules[cand.rule].growth() > max_len {
                    continue;
                }
                let t = apply_candidate(rules, s, cand);
                if seen.contains(&t) {
                    continue;
                }
                if seen.len() >= node_cap {
                    truncated = true;
                    break 'depth;
                }
                seen.insert(t.clone());
                if rules.all_terminal(&t.tokens) {
                    sentences.insert(t);
                } else {
                    next.push(t);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Enumeration {
        sentences,
        truncated,
        nodes: seen.len(),
    }
}

/// Fraction of `n` independent oracle derivations that end all-terminal in
/// a member of `spec`.
pub fn generation_validity(
    rules: &RuleSet,
    spec: &LanguageSpec,
    n: usize,
    capacity: usize,
    max_steps: usize,
    seed: u64,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let valid = (0..n as u64)
        .into_par_iter()
        .filter(|&i| {
            let mut stream = SeededStream::new(substream_seed(seed, "derivation", i));
            let trace = derive(rules, capacity, max_steps, &mut stream);
            trace.completed() && is_member(trace.final_sentence(), spec)
        })
        .count();
    valid as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{AbstractRule, ReplayStream};

    fn s(t: &str) -> Sentence {
        Sentence::parse(t).unwrap()
    }

    fn sym(t: &str) -> SymbolId {
        t.parse().unwrap()
    }

    fn rule(c: &str, a: &str, p: f64) -> AbstractRule {
        AbstractRule::new(sym(c), s(a).tokens, p)
    }

    fn anbn() -> RuleSet {
        RuleSet::new(vec![rule("S", "a S b", 0.5), rule("S", "a b", 0.5)])
    }

    #[test]
    fn single_step_derivation() {
        let rs = RuleSet::new(vec![rule("S", "a b", 1.0)]);
        let t = derive(&rs, 8, 10, &mut SeededStream::new(0));
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.final_sentence(), &s("a b"));
        assert_eq!(t.terminated_by, Termination::AllTerminal);
    }

    #[test]
    fn empty_rules_stop_immediately() {
        let t = derive(&RuleSet::new(vec![]), 8, 10, &mut SeededStream::new(0));
        assert!(t.steps.is_empty());
        assert_eq!(t.terminated_by, Termination::NoRule);
    }

    #[test]
    fn forced_stream() {
        let mut st = ReplayStream::new(vec![0.25, 0.25, 0.75]);
        let t = derive(&anbn(), 8, 10, &mut st);
        assert_eq!(t.final_sentence(), &s("a a a b b b"));
        assert_eq!(t.steps.len(), 3);
        let steps: Vec<_> = t.steps.iter().map(|x| x.step).collect();
        assert_eq!(steps, vec![0, 1, 2]);
    }

    #[test]
    fn max_steps_termination() {
        let rs = RuleSet::new(vec![rule("S", "S", 1.0)]);
        let t = derive(&rs, 8, 5, &mut SeededStream::new(0));
        assert_eq!(t.steps.len(), 5);
        assert_eq!(t.terminated_by, Termination::MaxSteps);
    }

    #[test]
    fn membership() {
        let aba = LanguageSpec::PatternAba { class: None };
        assert!(is_member(&s("c d c"), &aba));
        assert!(!is_member(&s("c d d"), &aba));
        assert!(!is_member(&s("c c c"), &aba));
        let l = LanguageSpec::AnBn {
            a: sym("a"),
            b: sym("b"),
            max_n: 4,
        };
        assert!(is_member(&s("a a b b"), &l));
        assert!(!is_member(&s("a b a b"), &l));
        assert!(!is_member(&s(""), &l));
    }

    #[test]
    fn enumeration() {
        let e = enumerate_language(&RuleSet::new(vec![rule("S", "a b", 1.0)]), 8, 5, 1000);
        assert_eq!(e.sentences, BTreeSet::from([s("a b")]));
        let e = enumerate_language(&anbn(), 8, 3, 1000);
        assert_eq!(e.sentences, BTreeSet::from([s("a b"), s("a a b b"), s("a a a b b b")]));
        assert!(!e.truncated);
        let explosive = RuleSet::new(vec![
            rule("S", "S S", 1.0),
            rule("S", "a", 1.0),
            rule("S", "b", 1.0),
        ]);
        assert!(enumerate_language(&explosive, 8, 8, 10).truncated);
    }

    #[test]
    fn validity() {
        let l = LanguageSpec::AnBn {
            a: sym("a"),
            b: sym("b"),
            max_n: 8,
        };
        assert_eq!(generation_validity(&anbn(), &l, 200, 8, 50, 1), 1.0);
        let aba = LanguageSpec::PatternAba { class: None };
        assert_eq!(generation_validity(&RuleSet::new(vec![]), &aba, 50, 8, 50, 1), 0.0);
        let mut bad = anbn();
        bad.rules.push(rule("S", "b a", 0.3));
        let v = generation_validity(&bad, &l, 400, 8, 50, 1);
        assert!(v < 1.0 && v > 0.0, "{v}");
    }

    #[test]
    fn jsonl_export() {
        let t = derive(&anbn(), 8, 10, &mut ReplayStream::new(vec![0.75]));
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["after"], serde_json::json!(["a", "b"]));
    }
}
