//! Chain registers: a stage-by-channel lattice of relay neurons that carries
//! a sentence of tokens, one token per time slot.
//!
//! The token in slot `j` written at `t0` reaches stage `k` with base time
//! `t0 + j*slot_pitch + k*stage_delay`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, Alphabet, CodecError, NoiseModel, SlotObservation, SymbolId};
use crate::substrate::{Network, NeuronId, NeuronSpec, Spike, SpikeEvent, SubstrateError, SynapseSpec, Tick};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("chain constraint violated: {0}")]
    Constraint(String),
    #[error("sentence of {len} tokens exceeds slot capacity {capacity}")]
    CapacityExceeded { len: usize, capacity: usize },
    #[error("alphabet does not fit the chain: {0}")]
    AlphabetMismatch(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Substrate(#[from] SubstrateError),
}

/// Geometry and timing of a chain register.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSpec {
    /// Channels per stage (W).
    pub width: usize,
    /// Number of stages (L).
    pub stages: usize,
    /// Relay delay between consecutive stages (Δ).
    pub stage_delay: Tick,
    /// Time between consecutive token slots (Λ).
    pub slot_pitch: Tick,
    /// Maximum tokens per sentence (C).
    pub capacity: usize,
    /// Refractory period of relay neurons (ρ).
    pub refractory: Tick,
    /// Minimum lead of a write-back decision over the token it replaces (δ).
    pub write_lead: Tick,
    /// Token duration (D), copied from the alphabet.
    pub duration: Tick,
    /// Coincidence tolerance (ε), copied from the alphabet.
    pub eps: Tick,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            width: 8,
            stages: 6,
            stage_delay: 100,
            slot_pitch: 120,
            capacity: 8,
            refractory: 58,
            write_lead: 5,
            duration: 50,
            eps: 3,
        }
    }
}

impl ChainSpec {
    /// Default timing with width, duration and tolerance taken from `alphabet`.
    pub fn for_alphabet(alphabet: &Alphabet) -> Self {
        Self {
            width: alphabet.width,
            duration: alphabet.duration,
            eps: alphabet.eps,
            ..Self::default()
        }
    }

    /// Check every timing inequality; the error names the violated one.
    pub fn validate(&self) -> Result<(), ChainError> {
        let fail = |s: String| Err(ChainError::Constraint(s));
        if self.width < 1 {
            return fail("width >= 1".into());
        }
        if self.stages < 1 {
            return fail("stages >= 1".into());
        }
        if self.capacity < 1 {
            return fail("capacity >= 1".into());
        }
        if self.stage_delay < 1 {
            return fail("stage_delay >= 1".into());
        }
        if self.eps >= self.duration {
            return fail(format!(
                "eps < duration ({} < {})",
                self.eps, self.duration
            ));
        }
        if self.slot_pitch < self.duration + self.refractory + self.eps {
            return fail(format!(
                "slot_pitch >= duration + refractory + eps ({} < {} + {} + {})",
                self.slot_pitch, self.duration, self.refractory, self.eps
            ));
        }
        if self.refractory < self.duration + self.write_lead {
            return fail(format!(
                "refractory >= duration + write_lead ({} < {} + {})",
                self.refractory, self.duration, self.write_lead
            ));
        }
        if self.stage_delay < self.duration + self.eps + self.write_lead + 1 {
            return fail(format!(
                "stage_delay >= duration + eps + write_lead + 1 ({} < {} + {} + {} + 1)",
                self.stage_delay, self.duration, self.eps, self.write_lead
            ));
        }
        Ok(())
    }

    pub fn check_alphabet(&self, alphabet: &Alphabet) -> Result<(), ChainError> {
        if alphabet.width != self.width {
            return Err(ChainError::AlphabetMismatch(format!(
                "alphabet width {} != chain width {}",
                alphabet.width, self.width
            )));
        }
        if alphabet.duration > self.duration {
            return Err(ChainError::AlphabetMismatch(format!(
                "alphabet duration {} > chain duration {}",
                alphabet.duration, self.duration
            )));
        }
        Ok(())
    }

    /// Base time of `slot` at `stage` for a sentence written at `t0`.
    pub fn slot_base(&self, t0: Tick, slot: usize, stage: usize) -> Tick {
        t0 + slot as Tick * self.slot_pitch + stage as Tick * self.stage_delay
    }

    /// A tick after which every slot of a sentence written at `t0` has left
    /// the last stage, including any write-back circuitry.
    pub fn settle_time(&self, t0: Tick) -> Tick {
        self.slot_base(t0, self.capacity + 1, self.stages) + self.duration + 2 * self.eps
    }

    /// Recommended spacing between consecutive sentences on one network.
    pub fn sentence_period(&self) -> Tick {
        self.settle_time(0) + self.capacity as Tick * self.slot_pitch
    }
}

/// An ordered sequence of tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sentence {
    pub tokens: Vec<SymbolId>,
}

impl Sentence {
    pub fn new(tokens: Vec<SymbolId>) -> Self {
        Self { tokens }
    }

    pub fn start() -> Self {
        Self::new(vec![SymbolId::START])
    }

    pub fn parse(text: &str) -> Result<Self, CodecError> {
        codec::parse_symbols(text).map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for t in &self.tokens {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl From<Vec<SymbolId>> for Sentence {
    fn from(tokens: Vec<SymbolId>) -> Self {
        Self::new(tokens)
    }
}

/// What one slot decoded to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SlotRead {
    Empty,
    Token { symbol: SymbolId, mismatch: usize },
    /// Spikes present but no unique template matched.
    Gap,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Readout {
    pub slots: Vec<SlotRead>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("slot {slot} could not be decoded")]
pub struct GapError {
    pub slot: usize,
}

impl Readout {
    /// Tokens up to the trailing silent slots. A gap, or a silent slot
    /// followed by a token, is an error.
    pub fn to_sentence(&self) -> Result<Sentence, GapError> {
        let end = self
            .slots
            .iter()
            .rposition(|s| !matches!(s, SlotRead::Empty))
            .map_or(0, |i| i + 1);
        self.slots[..end]
            .iter()
            .enumerate()
            .map(|(slot, s)| match s {
                SlotRead::Token { symbol, .. } => Ok(*symbol),
                _ => Err(GapError { slot }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Sentence::new)
    }

    pub fn gaps(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, SlotRead::Gap)).count()
    }
}

/// Timing reference neurons shared by every classifier on a chain: `clock`
/// fires at the base of every slot, `onset` once at the sentence start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub clock: NeuronId,
    pub onset: NeuronId,
}

/// Gated delay lines that move every token after a multi-token write-back
/// `shift` slots later, attached between `stage` and `stage + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftLane {
    pub stage: usize,
    pub shift: usize,
    /// Fires once per slot and keeps the lane closed unless silenced.
    pub gate: NeuronId,
    pub entry: Vec<NeuronId>,
    /// Vetoes the original spike at `stage + 1`.
    pub veto: Vec<NeuronId>,
    /// Silences the veto when the shifted spike lands on the same tick.
    pub guard: Vec<NeuronId>,
    pub delay: Vec<NeuronId>,
}

/// A chain bound to one network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    spec: ChainSpec,
    grid: Vec<Vec<NeuronId>>,
    frame: Option<Frame>,
    lanes: BTreeMap<(usize, usize), ShiftLane>,
}

impl Chain {
    /// Create `stages * width` relay neurons and wire `(k, c) -> (k+1, c)`
    /// with delay `stage_delay`. Ids are allocated stage-major from the first
    /// free id of `net`.
    pub fn build(spec: ChainSpec, net: &mut Network) -> Result<Self, ChainError> {
        spec.validate()?;
        let mut next = net.fresh_id().0;
        let mut grid = Vec::with_capacity(spec.stages);
        for _ in 0..spec.stages {
            let mut row = Vec::with_capacity(spec.width);
            for _ in 0..spec.width {
                let id = net.add_neuron(NeuronSpec::relay(NeuronId(next), spec.refractory))?;
                row.push(id);
                next += 1;
            }
            grid.push(row);
        }
        for k in 0..spec.stages.saturating_sub(1) {
            for c in 0..spec.width {
                net.add_synapse(SynapseSpec::excitatory(
                    grid[k][c],
                    grid[k + 1][c],
                    spec.stage_delay,
                ))?;
            }
        }
        Ok(Self {
            spec,
            grid,
            frame: None,
            lanes: BTreeMap::new(),
        })
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn stage(&self, k: usize) -> &[NeuronId] {
        &self.grid[k]
    }

    pub fn neuron(&self, stage: usize, channel: usize) -> NeuronId {
        self.grid[stage][channel]
    }

    pub fn frame(&self) -> Option<Frame> {
        self.frame
    }

    pub fn lane(&self, stage: usize, shift: usize) -> Option<&ShiftLane> {
        self.lanes.get(&(stage, shift))
    }

    pub(crate) fn insert_lane(&mut self, lane: ShiftLane) {
        self.lanes.insert((lane.stage, lane.shift), lane);
    }

    /// The frame neurons, created on first use.
    pub fn ensure_frame(&mut self, net: &mut Network) -> Result<Frame, ChainError> {
        if let Some(f) = self.frame {
            return Ok(f);
        }
        let clock = net.add_neuron(NeuronSpec::relay(net.fresh_id(), 1))?;
        let onset = net.add_neuron(NeuronSpec::relay(net.fresh_id(), 1))?;
        let f = Frame { clock, onset };
        self.frame = Some(f);
        Ok(f)
    }

    /// Spikes that write `sentence` onto stage 0 starting at `t0`, plus the
    /// frame spikes when a frame exists.
    pub fn sentence_spikes(
        &self,
        alphabet: &Alphabet,
        sentence: &Sentence,
        t0: Tick,
    ) -> Result<Vec<Spike>, ChainError> {
        self.spec.check_alphabet(alphabet)?;
        if sentence.len() > self.spec.capacity {
            return Err(ChainError::CapacityExceeded {
                len: sentence.len(),
                capacity: self.spec.capacity,
            });
        }
        let mut spikes = Vec::new();
        for (j, &s) in sentence.tokens.iter().enumerate() {
            let base = self.spec.slot_base(t0, j, 0);
            spikes.extend(codec::encode(alphabet, s, base, &self.grid[0])?);
        }
        if let Some(f) = self.frame {
            spikes.push(Spike::new(t0, f.onset));
            for j in 0..self.spec.capacity {
                spikes.push(Spike::new(self.spec.slot_base(t0, j, 0), f.clock));
            }
        }
        spikes.sort();
        Ok(spikes)
    }

    pub fn write_sentence(
        &self,
        net: &mut Network,
        alphabet: &Alphabet,
        sentence: &Sentence,
        t0: Tick,
    ) -> Result<Vec<Spike>, ChainError> {
        let spikes = self.sentence_spikes(alphabet, sentence, t0)?;
        net.inject_spikes(&spikes)?;
        Ok(spikes)
    }

    /// As [`Chain::sentence_spikes`], with each token's spikes passed through
    /// `noise` inside its slot window `[base, base + duration)`. Frame spikes
    /// are not perturbed.
    pub fn sentence_spikes_noisy<R: Rng + ?Sized>(
        &self,
        alphabet: &Alphabet,
        sentence: &Sentence,
        t0: Tick,
        noise: &NoiseModel,
        rng: &mut R,
    ) -> Result<Vec<Spike>, ChainError> {
        let clean = self.sentence_spikes(alphabet, sentence, t0)?;
        let mut spikes: Vec<Spike> = match self.frame {
            Some(f) => clean
                .iter()
                .filter(|s| s.neuron == f.clock || s.neuron == f.onset)
                .copied()
                .collect(),
            None => Vec::new(),
        };
        for (j, &s) in sentence.tokens.iter().enumerate() {
            let base = self.spec.slot_base(t0, j, 0);
            let token = codec::encode(alphabet, s, base, &self.grid[0])?;
            spikes.extend(codec::perturb(
                &token,
                &self.grid[0],
                base,
                base + self.spec.duration,
                noise,
                rng,
            ));
        }
        spikes.sort();
        Ok(spikes)
    }

    pub fn write_sentence_noisy<R: Rng + ?Sized>(
        &self,
        net: &mut Network,
        alphabet: &Alphabet,
        sentence: &Sentence,
        t0: Tick,
        noise: &NoiseModel,
        rng: &mut R,
    ) -> Result<Vec<Spike>, ChainError> {
        let spikes = self.sentence_spikes_noisy(alphabet, sentence, t0, noise, rng)?;
        net.inject_spikes(&spikes)?;
        Ok(spikes)
    }

    /// Spikes of stage `stage` that fall inside the window of `slot`.
    pub fn observe_slot(
        &self,
        trace: &[SpikeEvent],
        stage: usize,
        slot: usize,
        t0: Tick,
    ) -> SlotObservation {
        let base = self.spec.slot_base(t0, slot, stage);
        let spikes: Vec<Spike> = trace
            .iter()
            .map(|e| Spike::new(e.time, e.neuron))
            .collect();
        SlotObservation::collect(
            &spikes,
            &self.grid[stage],
            base,
            self.spec.eps,
            self.spec.duration + self.spec.eps,
        )
    }

    /// Decode every slot of stage `stage` for a sentence written at `t0`.
    pub fn read_sentence(
        &self,
        trace: &[SpikeEvent],
        alphabet: &Alphabet,
        stage: usize,
        t0: Tick,
    ) -> Readout {
        let ids = &self.grid[stage];
        let lo = self.spec.slot_base(t0, 0, stage).saturating_sub(self.spec.eps);
        let spikes: Vec<Spike> = trace
            .iter()
            .filter(|e| e.time >= lo && ids.contains(&e.neuron))
            .map(|e| Spike::new(e.time, e.neuron))
            .collect();
        let slots = (0..self.spec.capacity)
            .map(|j| {
                let base = self.spec.slot_base(t0, j, stage);
                let obs = SlotObservation::collect(
                    &spikes,
                    ids,
                    base,
                    self.spec.eps,
                    self.spec.duration + self.spec.eps,
                );
                if obs.is_silent() {
                    SlotRead::Empty
                } else {
                    match codec::match_token(&obs, alphabet, alphabet.eps, alphabet.m_max) {
                        Some((symbol, mismatch)) => SlotRead::Token { symbol, mismatch },
                        None => SlotRead::Gap,
                    }
                }
            })
            .collect();
        Readout { slots }
    }

    /// Stage-by-channel neuron ids, for raster plots.
    pub fn layout_json(&self) -> serde_json::Value {
        serde_json::json!({
            "stages": self.spec.stages,
            "width": self.spec.width,
            "grid": self.grid,
            "frame": self.frame,
            "shift_lanes": self.lanes.values().collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{make_alphabet, AlphabetParams};

    fn setup() -> (Alphabet, ChainSpec) {
        let a = make_alphabet(&AlphabetParams::default(), 11).unwrap();
        let spec = ChainSpec::for_alphabet(&a);
        (a, spec)
    }

    #[test]
    fn defaults_are_valid() {
        ChainSpec::default().validate().unwrap();
    }

    #[test]
    fn build_counts_neurons_and_relays() {
        let spec = ChainSpec {
            width: 2,
            stages: 3,
            ..ChainSpec::default()
        };
        let mut net = Network::new();
        let chain = Chain::build(spec, &mut net).unwrap();
        assert_eq!(net.len(), 6);
        assert_eq!(net.synapse_count(), 4);
        assert_eq!(chain.stage(2).len(), 2);
    }

    #[test]
    fn slot_pitch_violation_names_constraint() {
        let spec = ChainSpec {
            slot_pitch: 100,
            ..ChainSpec::default()
        };
        let err = Chain::build(spec, &mut Network::new()).unwrap_err();
        assert!(err.to_string().contains("slot_pitch >= duration + refractory + eps"));
        let spec = ChainSpec {
            refractory: 50,
            ..ChainSpec::default()
        };
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("refractory >= duration + write_lead"));
    }

    #[test]
    fn rebuild_is_deterministic() {
        let (_, spec) = setup();
        let a = Chain::build(spec.clone(), &mut Network::new()).unwrap();
        let b = Chain::build(spec, &mut Network::new()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layout_json(), b.layout_json());
    }

    #[test]
    fn write_places_token_bases() {
        let a = make_alphabet(
            &AlphabetParams {
                n: 5,
                duration: 30,
                ..AlphabetParams::default()
            },
            11,
        )
        .unwrap();
        let spec = ChainSpec {
            slot_pitch: 100,
            refractory: 40,
            ..ChainSpec::for_alphabet(&a)
        };
        spec.validate().unwrap();
        let mut net = Network::new();
        let chain = Chain::build(spec, &mut net).unwrap();
        let s = Sentence::new(vec![SymbolId(3), SymbolId(4)]);
        let spikes = chain.write_sentence(&mut net, &a, &s, 1000).unwrap();
        let ta = a.template(SymbolId(3)).unwrap();
        let tb = a.template(SymbolId(4)).unwrap();
        let mut expected: Vec<Spike> = ta
            .offsets
            .iter()
            .zip(chain.stage(0))
            .map(|(&o, &n)| Spike::new(1000 + o, n))
            .chain(
                tb.offsets
                    .iter()
                    .zip(chain.stage(0))
                    .map(|(&o, &n)| Spike::new(1100 + o, n)),
            )
            .collect();
        expected.sort();
        assert_eq!(spikes, expected);
    }

    #[test]
    fn empty_write_and_overflow() {
        let (a, spec) = setup();
        let mut net = Network::new();
        let chain = Chain::build(ChainSpec { capacity: 4, ..spec }, &mut net).unwrap();
        assert!(chain
            .write_sentence(&mut net, &a, &Sentence::default(), 0)
            .unwrap()
            .is_empty());
        net.run_to_completion();
        let read = chain.read_sentence(net.trace(), &a, 5, 0);
        assert_eq!(read.to_sentence().unwrap(), Sentence::default());
        let five = Sentence::new(vec![SymbolId(3); 5]);
        assert_eq!(
            chain.write_sentence(&mut net, &a, &five, 10_000),
            Err(ChainError::CapacityExceeded {
                len: 5,
                capacity: 4
            })
        );
    }

    #[test]
    fn pass_through_two_tokens() {
        let (a, spec) = setup();
        let mut net = Network::new();
        let chain = Chain::build(spec, &mut net).unwrap();
        let s = Sentence::parse("a b").unwrap();
        chain.write_sentence(&mut net, &a, &s, 0).unwrap();
        net.run_to_completion();
        let last = chain.spec().stages - 1;
        assert_eq!(chain.read_sentence(net.trace(), &a, last, 0).to_sentence(), Ok(s));
    }

    #[test]
    fn readout_gap_handling() {
        let r = Readout {
            slots: vec![
                SlotRead::Token {
                    symbol: SymbolId(3),
                    mismatch: 0,
                },
                SlotRead::Empty,
                SlotRead::Token {
                    symbol: SymbolId(3),
                    mismatch: 0,
                },
            ],
        };
        assert_eq!(r.to_sentence(), Err(GapError { slot: 1 }));
        let r = Readout {
            slots: vec![SlotRead::Gap, SlotRead::Empty],
        };
        assert_eq!(r.gaps(), 1);
        assert!(r.to_sentence().is_err());
    }
}
