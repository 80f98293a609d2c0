//! Lock-step comparison of the spiking engine against the oracle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::{leaked_spikes, SpikingEngine};
use super::oracle::{apply_candidate, eligible, select, Candidate, Recorder, SeededStream};
use super::{AbstractRule, Relation, RuleError, RuleSet};
use crate::chain::{ChainSpec, Sentence};
use crate::codec::{make_alphabet, Alphabet, AlphabetParams, NoiseModel, SymbolId};

/// Everything needed to replay one equivalence check.
#[derive(Clone, Debug)]
pub struct EquivalenceCase {
    pub alphabet: Alphabet,
    pub rules: RuleSet,
    pub sentence: Sentence,
    pub spec: ChainSpec,
    pub tap: usize,
    pub seed: u64,
    pub steps: usize,
    pub noise: NoiseModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub applied: Candidate,
    pub oracle: Sentence,
    pub spiking: Sentence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Divergence {
    /// The detectors that fired differ from the oracle's eligible set.
    Eligible {
        step: usize,
        oracle: Vec<Candidate>,
        spiking: Vec<Candidate>,
    },
    /// A slot of the spiking read-out matched no template.
    NoMatch { step: usize, slot: usize },
    Sentence {
        step: usize,
        oracle: Sentence,
        spiking: Sentence,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub seed: u64,
    pub initial: Sentence,
    pub trace: Vec<TraceStep>,
    pub oracle_final: Sentence,
    pub spiking_final: Option<Sentence>,
    pub divergence: Option<Divergence>,
    /// Stray spikes of rewritten tokens at stages after the tap.
    pub leaked_spikes: usize,
    pub decisions: Vec<f64>,
}

impl EquivalenceReport {
    pub fn equal(&self) -> bool {
        self.divergence.is_none() && self.spiking_final.as_ref() == Some(&self.oracle_final)
    }
}

/// Run up to `case.steps` rewrite steps on both engines, drawing every
/// choice once from a stream seeded with `case.seed`.
pub fn check_equivalence(case: &EquivalenceCase) -> Result<EquivalenceReport, RuleError> {
    let mut engine = SpikingEngine::new(
        case.alphabet.clone(),
        case.rules.clone(),
        case.spec.clone(),
        case.tap,
    )?;
    if !case.noise.is_zero() {
        engine.set_noise(case.noise, case.seed ^ 0x9e37_79b9_7f4a_7c15);
    }
    let capacity = case.spec.capacity;
    let mut stream = Recorder::new(SeededStream::new(case.seed));
    let mut oracle = case.sentence.clone();
    let mut spiking = case.sentence.clone();
    let mut trace = Vec::new();
    let mut leaks = 0;
    let mut divergence = None;

    for step in 0..case.steps {
        let input = engine.input_spikes(&spiking)?;
        let probe = engine.probe(&input)?;
        if let Err(gap) = probe.readout.to_sentence() {
            divergence = Some(Divergence::NoMatch { step, slot: gap.slot });
            break;
        }
        let expected = eligible(&case.rules, &oracle);
        if probe.eligible != expected {
            divergence = Some(Divergence::Eligible {
                step,
                oracle: expected,
                spiking: probe.eligible,
            });
            break;
        }
        let Some(choice) = select(&case.rules, &expected, oracle.len(), capacity, &mut stream) else {
            break;
        };
        oracle = apply_candidate(&case.rules, &oracle, choice);
        let pass = engine.rewrite(&input, Some(choice))?;
        let rule = &case.rules.rules[choice.rule];
        let written = case.alphabet.template(rule.action[0])?;
        leaks += leaked_spikes(engine.chain(), &pass.trace, 0, case.tap + 1, choice.position, written);
        match pass.readout.to_sentence() {
            Err(gap) => {
                divergence = Some(Divergence::NoMatch { step, slot: gap.slot });
                spiking = Sentence::default();
                break;
            }
            Ok(s) => spiking = s,
        }
        trace.push(TraceStep {
            step,
            applied: choice,
            oracle: oracle.clone(),
            spiking: spiking.clone(),
        });
        if spiking != oracle {
            divergence = Some(Divergence::Sentence {
                step,
                oracle: oracle.clone(),
                spiking: spiking.clone(),
            });
            break;
        }
    }
    let spiking_final = match divergence {
        Some(Divergence::NoMatch { .. }) | Some(Divergence::Eligible { .. }) => None,
        _ => Some(spiking),
    };
    Ok(EquivalenceReport {
        seed: case.seed,
        initial: case.sentence.clone(),
        trace,
        oracle_final: oracle,
        spiking_final,
        divergence,
        leaked_spikes: leaks,
        decisions: stream.log,
    })
}

/// Bounds for [`random_case`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomCaseParams {
    pub max_rules: usize,
    /// Usable symbols, the start symbol included.
    pub symbols: usize,
    pub max_len: usize,
    pub steps: usize,
}

impl Default for RandomCaseParams {
    fn default() -> Self {
        Self {
            max_rules: 8,
            symbols: 6,
            max_len: 4,
            steps: 6,
        }
    }
}

/// A random rule set, alphabet and start sentence.
pub fn random_case(params: &RandomCaseParams, seed: u64) -> Result<EquivalenceCase, RuleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet = make_alphabet(
        &AlphabetParams {
            n: params.symbols.max(1) + 2,
            ..AlphabetParams::default()
        },
        rng.gen(),
    )
    .map_err(|e| RuleError::Invalid {
        index: 0,
        reason: e.to_string(),
    })?;
    let pool: Vec<SymbolId> = alphabet.symbols().filter(|s| !s.is_control()).collect();
    let pick = |rng: &mut ChaCha8Rng| *pool.choose(rng).expect("non-empty pool");
    let n_rules = rng.gen_range(1..=params.max_rules.max(1));
    let mut rules = Vec::with_capacity(n_rules);
    for _ in 0..n_rules {
        let len = rng.gen_range(1..=super::MAX_ACTION_LEN);
        let action = (0..len).map(|_| pick(&mut rng)).collect();
        let p = rng.gen_range(0.1..=1.0);
        let mut r = AbstractRule::new(pick(&mut rng), action, p);
        match rng.gen_range(0..4) {
            0 => r = r.with_context(pick(&mut rng), Relation::LeftAdjacent),
            1 => r = r.with_context(pick(&mut rng), Relation::AnywhereBefore),
            _ => {}
        }
        rules.push(r);
    }
    let len = rng.gen_range(1..=params.max_len.max(1));
    let sentence = Sentence::new((0..len).map(|_| pick(&mut rng)).collect());
    let spec = ChainSpec::for_alphabet(&alphabet);
    Ok(EquivalenceCase {
        alphabet,
        rules: RuleSet::new(rules),
        sentence,
        spec,
        tap: 1,
        seed: rng.gen(),
        steps: params.steps,
        noise: NoiseModel::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_ruleset_has_empty_traces() {
        let mut case = random_case(&RandomCaseParams::default(), 1).unwrap();
        case.rules = RuleSet::new(vec![]);
        let r = check_equivalence(&case).unwrap();
        assert!(r.trace.is_empty());
        assert!(r.equal());
        assert_eq!(r.oracle_final, case.sentence);
    }

    #[test]
    fn random_cases_agree() {
        for seed in 0..6 {
            let case = random_case(&RandomCaseParams::default(), seed).unwrap();
            let r = check_equivalence(&case).unwrap();
            assert!(r.equal(), "seed {seed}: {:?}", r.divergence);
            assert_eq!(r.leaked_spikes, 0);
        }
    }
}
