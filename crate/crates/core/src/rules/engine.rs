//! Rewrite steps executed by the spiking network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::circuit::{compile_rule_wired, CompiledRule, Wiring};
use super::oracle::{select, Candidate, DecisionStream};
use super::{RuleError, RuleSet};
use crate::chain::{Chain, ChainSpec, Readout, Sentence};
use crate::codec::{Alphabet, NoiseModel, SpikeTemplate};
use crate::substrate::{Network, Spike, SpikeEvent, Tick};

/// Detector firings of a pass without any enable spikes.
#[derive(Clone, Debug)]
pub struct Probe {
    pub eligible: Vec<Candidate>,
    pub readout: Readout,
    pub trace: Vec<SpikeEvent>,
}

/// A pass in which at most one rule was enabled.
#[derive(Clone, Debug)]
pub struct Pass {
    pub applied: Option<Candidate>,
    pub readout: Readout,
    pub trace: Vec<SpikeEvent>,
}

/// A chain with every rule of a rule set compiled on one tap stage.
#[derive(Clone, Debug)]
pub struct SpikingEngine {
    alphabet: Alphabet,
    rules: RuleSet,
    chain: Chain,
    base: Network,
    compiled: Vec<CompiledRule>,
    tap: usize,
    noise: NoiseModel,
    noise_rng: ChaCha8Rng,
}

impl SpikingEngine {
    pub fn new(alphabet: Alphabet, rules: RuleSet, spec: ChainSpec, tap: usize) -> Result<Self, RuleError> {
        Self::with_wiring(alphabet, rules, spec, tap, &Wiring::new())
    }

    /// Detectors laid out from `wiring` where it has an entry for a symbol.
    pub fn with_wiring(
        alphabet: Alphabet,
        rules: RuleSet,
        spec: ChainSpec,
        tap: usize,
        wiring: &Wiring,
    ) -> Result<Self, RuleError> {
        rules.validate()?;
        let mut base = Network::new();
        let mut chain = Chain::build(spec, &mut base)?;
        chain.ensure_frame(&mut base)?;
        let compiled = rules
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| compile_rule_wired(i, r, &mut chain, &mut base, tap, &alphabet, wiring))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            alphabet,
            rules,
            chain,
            base,
            compiled,
            tap,
            noise: NoiseModel::default(),
            noise_rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    /// Perturb every sentence written from now on.
    pub fn set_noise(&mut self, noise: NoiseModel, seed: u64) {
        self.noise = noise;
        self.noise_rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn network(&self) -> &Network {
        &self.base
    }

    pub fn compiled(&self) -> &[CompiledRule] {
        &self.compiled
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn tap(&self) -> usize {
        self.tap
    }

    /// Stage-0 spikes for `sentence`, with the engine's noise applied.
    pub fn input_spikes(&mut self, sentence: &Sentence) -> Result<Vec<Spike>, RuleError> {
        let spikes = if self.noise.is_zero() {
            self.chain.sentence_spikes(&self.alphabet, sentence, 0)?
        } else {
            self.chain
                .sentence_spikes_noisy(&self.alphabet, sentence, 0, &self.noise, &mut self.noise_rng)?
        };
        Ok(spikes)
    }

    fn run(&self, input: &[Spike], extra: &[Spike]) -> Result<(Readout, Vec<SpikeEvent>), RuleError> {
        let mut net = self.base.clone();
        net.inject_spikes(input)?;
        net.inject_spikes(extra)?;
        let trace = net.run_to_completion();
        let last = self.chain.spec().stages - 1;
        let readout = self.chain.read_sentence(&trace, &self.alphabet, last, 0);
        Ok((readout, trace))
    }

    /// Pass without enables; the detectors that fired are the eligible set.
    pub fn probe(&self, input: &[Spike]) -> Result<Probe, RuleError> {
        let (readout, trace) = self.run(input, &[])?;
        let mut eligible = Vec::new();
        for ev in &trace {
            for cr in &self.compiled {
                if ev.neuron == cr.detector {
                    if let Some(position) = cr.timing.slot_of_detection(0, ev.time) {
                        eligible.push(Candidate {
                            position,
                            rule: cr.rule,
                        });
                    }
                }
            }
        }
        eligible.sort();
        eligible.dedup();
        Ok(Probe {
            eligible,
            readout,
            trace,
        })
    }

    /// Pass with the enable spike of `choice`, if any.
    pub fn rewrite(&self, input: &[Spike], choice: Option<Candidate>) -> Result<Pass, RuleError> {
        let extra: Vec<Spike> = choice
            .map(|c| self.compiled[c.rule].enable_spike(0, c.position))
            .into_iter()
            .collect();
        let (readout, trace) = self.run(input, &extra)?;
        Ok(Pass {
            applied: choice,
            readout,
            trace,
        })
    }

    /// One rewrite step driven by `stream`. The returned sentence is decoded
    /// from the last stage.
    pub fn step<D: DecisionStream + ?Sized>(
        &mut self,
        sentence: &Sentence,
        stream: &mut D,
    ) -> Result<(Sentence, Pass), RuleError> {
        let input = self.input_spikes(sentence)?;
        let probe = self.probe(&input)?;
        let len = probe.readout.to_sentence().map_or(sentence.len(), |s| s.len());
        let choice = select(&self.rules, &probe.eligible, len, self.chain.spec().capacity, stream);
        self.finish(&input, choice)
    }

    /// Rewrite pass for a choice already made by the caller.
    pub fn finish(&self, input: &[Spike], choice: Option<Candidate>) -> Result<(Sentence, Pass), RuleError> {
        let pass = self.rewrite(input, choice)?;
        let out = pass.readout.to_sentence()?;
        Ok((out, pass))
    }

    /// A pass in which every slot is enabled for at most one rule, each
    /// rule with its own Bernoulli(p) draw. Slots after the first
    /// multi-token rewrite are left alone.
    pub fn free_run<D: DecisionStream + ?Sized>(
        &mut self,
        sentence: &Sentence,
        stream: &mut D,
    ) -> Result<(Sentence, Pass), RuleError> {
        let input = self.input_spikes(sentence)?;
        let probe = self.probe(&input)?;
        let mut enables = Vec::new();
        let mut armed = Vec::new();
        let mut len = sentence.len();
        let capacity = self.chain.spec().capacity;
        'slots: for position in 0..sentence.len() {
            for cand in probe.eligible.iter().filter(|c| c.position == position) {
                let rule = &self.rules.rules[cand.rule];
                if stream.next_unit() < rule.p && len + rule.growth() <= capacity {
                    enables.push(self.compiled[cand.rule].enable_spike(0, position));
                    armed.push(*cand);
                    len += rule.growth();
                    if rule.growth() > 0 {
                        break 'slots;
                    }
                    break;
                }
            }
        }
        let (readout, trace) = self.run(&input, &enables)?;
        let out = readout.to_sentence()?;
        Ok((
            out,
            Pass {
                applied: armed.first().copied(),
                readout,
                trace,
            },
        ))
    }
}

/// Spikes in the window of `slot` at stages `from_stage..` that are not at
/// the exact positions of `expected`.
pub fn leaked_spikes(
    chain: &Chain,
    trace: &[SpikeEvent],
    t0: Tick,
    from_stage: usize,
    slot: usize,
    expected: &SpikeTemplate,
) -> usize {
    let spec = chain.spec();
    let mut leaks = 0;
    for stage in from_stage..spec.stages {
        let base = spec.slot_base(t0, slot, stage);
        let lo = base.saturating_sub(spec.eps);
        let hi = base + spec.duration + spec.eps;
        for (c, &id) in chain.stage(stage).iter().enumerate() {
            leaks += trace
                .iter()
                .filter(|e| e.neuron == id && e.time >= lo && e.time < hi)
                .filter(|e| e.time != base + expected.offsets[c])
                .count();
        }
    }
    leaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{make_alphabet, AlphabetParams, SymbolId};
    use crate::rules::{AbstractRule, Relation, ReplayStream, SeededStream};

    fn sym(t: &str) -> SymbolId {
        t.parse().unwrap()
    }

    fn s(t: &str) -> Sentence {
        Sentence::parse(t).unwrap()
    }

    fn engine(rules: Vec<AbstractRule>) -> SpikingEngine {
        let a = make_alphabet(
            &AlphabetParams {
                n: 8,
                ..AlphabetParams::default()
            },
            9,
        )
        .unwrap();
        let spec = ChainSpec::for_alphabet(&a);
        SpikingEngine::new(a, RuleSet::new(rules), spec, 1).unwrap()
    }

    fn step(e: &mut SpikingEngine, text: &str) -> Sentence {
        e.step(&s(text), &mut SeededStream::new(3)).unwrap().0
    }

    #[test]
    fn substitution() {
        let mut e = engine(vec![AbstractRule::new(sym("a"), vec![sym("c")], 1.0)]);
        assert_eq!(step(&mut e, "a"), s("c"));
        assert_eq!(step(&mut e, "b"), s("b"));
        assert_eq!(step(&mut e, "b a d"), s("b c d"));
    }

    #[test]
    fn left_adjacent_context() {
        let r = AbstractRule::new(sym("b"), vec![sym("c")], 1.0).with_context(sym("a"), Relation::LeftAdjacent);
        let mut e = engine(vec![r]);
        assert_eq!(step(&mut e, "a b"), s("a c"));
        assert_eq!(step(&mut e, "b b"), s("b b"));
        assert_eq!(step(&mut e, "a d b"), s("a d b"));
    }

    #[test]
    fn anywhere_before_context() {
        let r = AbstractRule::new(sym("b"), vec![sym("c")], 1.0).with_context(sym("a"), Relation::AnywhereBefore);
        let mut e = engine(vec![r]);
        assert_eq!(step(&mut e, "a d b"), s("a d c"));
        assert_eq!(step(&mut e, "b a"), s("b a"));
    }

    #[test]
    fn insertion_shifts_tail() {
        let mut e = engine(vec![AbstractRule::new(sym("S"), vec![sym("a"), sym("S"), sym("b")], 1.0)]);
        assert_eq!(step(&mut e, "S"), s("a S b"));
        assert_eq!(step(&mut e, "a S b"), s("a a S b b"));
        assert_eq!(step(&mut e, "S c d"), s("a S b c d"));
    }

    #[test]
    fn forced_position() {
        let mut e = engine(vec![AbstractRule::new(sym("a"), vec![sym("c")], 1.0)]);
        let (out, pass) = e.step(&s("a a"), &mut ReplayStream::new(vec![0.75])).unwrap();
        assert_eq!(out, s("a c"));
        assert_eq!(pass.applied, Some(Candidate { position: 1, rule: 0 }));
    }

    #[test]
    fn original_is_suppressed() {
        let mut e = engine(vec![AbstractRule::new(sym("a"), vec![sym("c")], 1.0)]);
        let (_, pass) = e.step(&s("b a b"), &mut SeededStream::new(0)).unwrap();
        let c = e.alphabet().template(sym("c")).unwrap().clone();
        assert_eq!(leaked_spikes(e.chain(), &pass.trace, 0, 2, 1, &c), 0);
    }
}
