//! Same/different detector for two slots of a sentence.

use rand::Rng;

use super::RuleError;
use crate::chain::{Chain, SlotRead};
use crate::codec::{Alphabet, NoiseModel, SymbolId};
use crate::chain::Sentence;
use crate::substrate::{Network, NeuronId, NeuronSpec, SynapseSpec, Tick};

/// Neurons of an equality rule comparing `slot_i` with `slot_j` on stage
/// `tap` and writing its verdict into slot `slot_j + 1` of stage `tap + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EqualityCircuit {
    pub tap: usize,
    pub slot_i: usize,
    pub slot_j: usize,
    /// One coincidence unit per channel.
    pub coincidence: Vec<NeuronId>,
    pub and_detector: NeuronId,
    pub default_diff: NeuronId,
    pub out_same: SymbolId,
    pub out_diff: SymbolId,
    /// Largest per-channel offset difference still counted as equal.
    pub tolerance: Tick,
}

fn add(net: &mut Network, spec: NeuronSpec) -> Result<NeuronId, RuleError> {
    Ok(net.add_neuron(spec)?)
}

#[allow(clippy::too_many_arguments)]
pub fn build_equality_rule(
    chain: &mut Chain,
    net: &mut Network,
    alphabet: &Alphabet,
    tap: usize,
    slot_i: usize,
    slot_j: usize,
    out_same: SymbolId,
    out_diff: SymbolId,
    tolerance: Tick,
) -> Result<EqualityCircuit, RuleError> {
    let spec = chain.spec().clone();
    spec.check_alphabet(alphabet)?;
    if slot_i >= slot_j || slot_j + 1 >= spec.capacity {
        return Err(RuleError::SlotRange(format!(
            "need slot_i < slot_j and slot_j + 1 < {}, got {slot_i}, {slot_j}",
            spec.capacity
        )));
    }
    if tap + 1 >= spec.stages {
        return Err(RuleError::TapOutOfRange {
            tap,
            limit: spec.stages.saturating_sub(1),
        });
    }
    for s in [out_same, out_diff] {
        if !alphabet.contains(s) {
            return Err(RuleError::UnknownSymbol(s));
        }
    }
    let frame = chain.ensure_frame(net)?;
    let w = spec.width;
    let d = spec.duration;
    let lambda = spec.slot_pitch;
    let base = slot_j as Tick * lambda + tap as Tick * spec.stage_delay;
    let lag = (slot_j - slot_i) as Tick * lambda;

    let anchor = w + 1;
    let and_id = net.fresh_id();
    let and_detector = add(
        net,
        NeuronSpec::new(and_id, (w + 2 * anchor) as u32, d - 1, d, 0),
    )?;
    let mut coincidence = Vec::with_capacity(w);
    for c in 0..w {
        let id = net.fresh_id();
        let q = add(net, NeuronSpec::new(id, 2, tolerance, 1, 0))?;
        let src = chain.neuron(tap, c);
        net.add_synapse(SynapseSpec::excitatory(src, q, lag + 1))?;
        net.add_synapse(SynapseSpec::excitatory(src, q, 1))?;
        net.add_synapse(SynapseSpec::excitatory(q, and_detector, 1))?;
        coincidence.push(q);
    }
    // the AND can only fire at base + d + 1, with every channel in between
    for delay in [base + 2, base + d + 1] {
        for _ in 0..anchor {
            net.add_synapse(SynapseSpec::excitatory(frame.onset, and_detector, delay))?;
        }
    }
    let df_id = net.fresh_id();
    let default_diff = add(net, NeuronSpec::new(df_id, 1, 0, 1, 0))?;
    net.add_synapse(SynapseSpec::excitatory(frame.onset, default_diff, base + d + 2))?;
    net.add_synapse(SynapseSpec::inhibitory(and_detector, default_diff, 1))?;

    let target = spec.stage_delay + lambda;
    for (src, fire, sym) in [
        (and_detector, d + 1, out_same),
        (default_diff, d + 2, out_diff),
    ] {
        for (c, &y) in alphabet.template(sym)?.offsets.iter().enumerate() {
            net.add_synapse(SynapseSpec::excitatory(
                src,
                chain.neuron(tap + 1, c),
                target + y - fire,
            ))?;
        }
    }

    Ok(EqualityCircuit {
        tap,
        slot_i,
        slot_j,
        coincidence,
        and_detector,
        default_diff,
        out_same,
        out_diff,
        tolerance,
    })
}

impl EqualityCircuit {
    /// Run `sentence` (optionally noisy) through a copy of `net` and decode
    /// the verdict slot at the last stage.
    pub fn classify<R: Rng + ?Sized>(
        &self,
        chain: &Chain,
        net: &Network,
        alphabet: &Alphabet,
        sentence: &Sentence,
        noise: &NoiseModel,
        rng: &mut R,
    ) -> Result<SlotRead, RuleError> {
        let mut run = net.clone();
        if noise.is_zero() {
            chain.write_sentence(&mut run, alphabet, sentence, 0)?;
        } else {
            chain.write_sentence_noisy(&mut run, alphabet, sentence, 0, noise, rng)?;
        }
        let trace = run.run_to_completion();
        let last = chain.spec().stages - 1;
        Ok(chain.read_sentence(&trace, alphabet, last, 0).slots[self.slot_j + 1])
    }
}
