//! Compilation of abstract rules into classifier circuits on a chain.
//!
//! Timing, for a classifier tapping stage `k` and a token in slot `j` with
//! base `B = t0 + j*pitch + k*stage_delay` and alignment constant `A = duration`:
//!
//! * channel `c` of the condition template reaches the detector at `B + A`
//!   through a delay of `A - offset[c]`;
//! * the frame clock reaches the detector at `B + A - eps` and `B + A + eps`,
//!   each through `width + 1` parallel synapses, so the detector can only fire
//!   at `B + A + eps` and only when enough channels arrived inside
//!   `[B + A - eps, B + A + eps]`;
//! * the writer fires one tick later when the detector and the decision
//!   enable coincide, and writes the action tokens into stage `k + 1`.
//!
//! When an action spike leads the original spike on its channel, the relay's
//! refractory period swallows the original. When it lags, the writer vetoes
//! the relay for exactly the tick at which the original arrives.

use std::collections::BTreeMap;

use super::{AbstractRule, Relation, RuleError};
use crate::chain::{Chain, ChainSpec, Frame, ShiftLane};
use crate::codec::{Alphabet, CodecError, SpikeTemplate, SymbolId};
use crate::substrate::{Network, NeuronId, NeuronSpec, Spike, SynapseSpec, Tick};

/// Per-symbol templates that override the alphabet when laying out detector
/// delay lines.
pub type Wiring = BTreeMap<SymbolId, SpikeTemplate>;

/// Delay arithmetic for circuits tapping one stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RuleTiming {
    pub tap: usize,
    pub width: usize,
    pub align: Tick,
    pub eps: Tick,
    pub stage_delay: Tick,
    pub pitch: Tick,
    pub capacity: usize,
}

impl RuleTiming {
    pub fn new(spec: &ChainSpec, tap: usize) -> Self {
        Self {
            tap,
            width: spec.width,
            align: spec.duration,
            eps: spec.eps,
            stage_delay: spec.stage_delay,
            pitch: spec.slot_pitch,
            capacity: spec.capacity,
        }
    }

    fn tap_delay(&self) -> Tick {
        self.tap as Tick * self.stage_delay
    }

    /// Tick at which a detector on this tap fires for `slot`.
    pub fn detect_time(&self, t0: Tick, slot: usize) -> Tick {
        t0 + slot as Tick * self.pitch + self.tap_delay() + self.align + self.eps
    }

    /// Inverse of [`RuleTiming::detect_time`].
    pub fn slot_of_detection(&self, t0: Tick, t: Tick) -> Option<usize> {
        let first = self.detect_time(t0, 0);
        if t < first || (t - first) % self.pitch != 0 {
            return None;
        }
        Some(((t - first) / self.pitch) as usize)
    }

    /// Writer firing time minus the slot base at the tap stage.
    fn writer_offset(&self) -> Tick {
        self.align + self.eps + 1
    }
}

/// The neurons and delays realizing one rule on one tap stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompiledRule {
    pub rule: usize,
    pub tap: usize,
    pub timing: RuleTiming,
    pub detector: NeuronId,
    /// Receives the decision spike for the slot chosen by the harness.
    pub enable: NeuronId,
    pub writer: NeuronId,
    /// Inhibitory gate; silenced by the context detector (context rules only).
    pub gate: Option<NeuronId>,
    pub context_detector: Option<NeuronId>,
    /// Per-channel delay from the tap stage to the detector.
    pub input_delays: Vec<Tick>,
    pub threshold: u32,
    pub condition: SymbolId,
    pub action: Vec<SymbolId>,
}

impl CompiledRule {
    /// The decision spike that lets this rule write at `slot`.
    pub fn enable_spike(&self, t0: Tick, slot: usize) -> Spike {
        Spike::new(self.timing.detect_time(t0, slot), self.enable)
    }

    pub fn growth(&self) -> usize {
        self.action.len() - 1
    }
}

fn add(
    net: &mut Network,
    threshold: u32,
    window: Tick,
    refractory: Tick,
    hold: Tick,
) -> Result<NeuronId, RuleError> {
    let id = net.fresh_id();
    Ok(net.add_neuron(NeuronSpec::new(id, threshold, window, refractory, hold))?)
}

fn excite(net: &mut Network, pre: NeuronId, post: NeuronId, delay: Tick) -> Result<(), RuleError> {
    Ok(net.add_synapse(SynapseSpec::excitatory(pre, post, delay))?)
}

fn inhibit(net: &mut Network, pre: NeuronId, post: NeuronId, delay: Tick) -> Result<(), RuleError> {
    Ok(net.add_synapse(SynapseSpec::inhibitory(pre, post, delay))?)
}

/// `count` parallel excitatory synapses.
fn excite_n(
    net: &mut Network,
    pre: NeuronId,
    post: NeuronId,
    delay: Tick,
    count: usize,
) -> Result<(), RuleError> {
    for _ in 0..count {
        excite(net, pre, post, delay)?;
    }
    Ok(())
}

/// A clock-anchored detector for `template` on the tap stage. Returns the
/// neuron, its per-channel input delays and its threshold.
pub(super) fn build_detector(
    net: &mut Network,
    chain: &Chain,
    frame: Frame,
    timing: &RuleTiming,
    template: &SpikeTemplate,
    m_max: usize,
) -> Result<(NeuronId, Vec<Tick>, u32), RuleError> {
    let w = timing.width;
    let anchor = w + 1;
    let threshold = (w - m_max + 2 * anchor) as u32;
    let det = add(net, threshold, 2 * timing.eps, 2 * timing.eps + 1, 0)?;
    let delays: Vec<Tick> = template.offsets.iter().map(|&o| timing.align - o).collect();
    for (c, &d) in delays.iter().enumerate() {
        excite(net, chain.neuron(timing.tap, c), det, d)?;
    }
    let base = timing.tap_delay() + timing.align;
    excite_n(net, frame.clock, det, base - timing.eps, anchor)?;
    excite_n(net, frame.clock, det, base + timing.eps, anchor)?;
    Ok((det, delays, threshold))
}

/// Shift lane for moving tokens `shift` slots later after a write-back at
/// stage `tap`; built once per (tap, shift) and shared by all rules.
fn ensure_lane(
    chain: &mut Chain,
    net: &mut Network,
    frame: Frame,
    timing: &RuleTiming,
    shift: usize,
) -> Result<ShiftLane, RuleError> {
    if let Some(lane) = chain.lane(timing.tap, shift) {
        return Ok(lane.clone());
    }
    let spec = chain.spec().clone();
    let k = timing.tap;
    let span = shift as Tick * timing.pitch;
    let delta = timing.stage_delay;
    let hold_all = timing.capacity as Tick * timing.pitch;
    // Fires at B + 1 of every slot; while active it closes the entry layer
    // for the slot's whole window.
    let gate = add(net, 1, 0, 1, hold_all)?;
    excite(net, frame.clock, gate, timing.tap_delay() + 1)?;
    let mut lane = ShiftLane {
        stage: k,
        shift,
        gate,
        entry: Vec::new(),
        veto: Vec::new(),
        guard: Vec::new(),
        delay: Vec::new(),
    };
    for c in 0..timing.width {
        let src = chain.neuron(k, c);
        let dst = chain.neuron(k + 1, c);
        let entry = add(net, 1, 0, 1, spec.duration + 2 * timing.eps)?;
        let veto = add(net, 1, 0, 1, 0)?;
        let guard = add(net, 1, 0, 1, 0)?;
        let delay = add(net, 1, 0, 1, 0)?;
        inhibit(net, gate, entry, 1)?;
        // entry fires at src + 3
        excite(net, src, entry, 3)?;
        // veto fires at src + 4 and blocks the original at src + delta
        excite(net, entry, veto, 1)?;
        inhibit(net, veto, dst, delta - 4)?;
        // guard predicts a same-tick shifted spike `shift` slots later
        excite(net, entry, guard, span)?;
        inhibit(net, guard, veto, 1)?;
        // delayed copy lands at src + span + delta
        excite(net, entry, delay, span + delta - 4)?;
        excite(net, delay, dst, 1)?;
        lane.entry.push(entry);
        lane.veto.push(veto);
        lane.guard.push(guard);
        lane.delay.push(delay);
    }
    chain.insert_lane(lane.clone());
    Ok(lane)
}

/// Build the classifier circuit for `rule` reading stage `tap` and writing
/// into stage `tap + 1`.
pub fn compile_rule(
    rule_index: usize,
    rule: &AbstractRule,
    chain: &mut Chain,
    net: &mut Network,
    tap: usize,
    alphabet: &Alphabet,
) -> Result<CompiledRule, RuleError> {
    compile_rule_wired(rule_index, rule, chain, net, tap, alphabet, &Wiring::new())
}

/// As [`compile_rule`], with the detector delay lines of the symbols in
/// `wiring` built from the given templates instead of the alphabet's.
pub fn compile_rule_wired(
    rule_index: usize,
    rule: &AbstractRule,
    chain: &mut Chain,
    net: &mut Network,
    tap: usize,
    alphabet: &Alphabet,
    wiring: &Wiring,
) -> Result<CompiledRule, RuleError> {
    rule.validate(rule_index)?;
    for t in wiring.values() {
        if t.width() != alphabet.width {
            return Err(CodecError::WidthMismatch(t.width(), alphabet.width).into());
        }
    }
    let wired = |s: SymbolId| -> Result<SpikeTemplate, RuleError> {
        match wiring.get(&s) {
            Some(t) => Ok(t.clone()),
            None => Ok(alphabet.template(s)?.clone()),
        }
    };
    let spec = chain.spec().clone();
    spec.check_alphabet(alphabet)?;
    if tap + 1 >= spec.stages {
        return Err(RuleError::TapOutOfRange {
            tap,
            limit: spec.stages.saturating_sub(1),
        });
    }
    if rule.action.len() > spec.capacity {
        return Err(RuleError::ActionOverflow {
            index: rule_index,
            len: rule.action.len(),
            capacity: spec.capacity,
        });
    }
    for s in rule.symbols() {
        if !alphabet.contains(s) {
            return Err(RuleError::UnknownSymbol(s));
        }
    }
    let timing = RuleTiming::new(&spec, tap);
    let frame = chain.ensure_frame(net)?;
    let cond = alphabet.template(rule.cond)?.clone();
    let (detector, input_delays, threshold) =
        build_detector(net, chain, frame, &timing, &wired(rule.cond)?, alphabet.m_max)?;

    let (gate, context_detector) = match rule.ctx {
        None => (None, None),
        Some(ctx) => {
            let hold = match ctx.rel {
                Relation::LeftAdjacent => 0,
                Relation::AnywhereBefore => timing.capacity as Tick * timing.pitch,
            };
            // gate fires one tick before each detection and vetoes it
            let gate = add(net, 1, 0, 1, hold)?;
            excite(
                net,
                frame.clock,
                gate,
                timing.tap_delay() + timing.align + timing.eps - 1,
            )?;
            inhibit(net, gate, detector, 1)?;
            let t_tpl = wired(ctx.sym)?;
            let (ctx_det, _, _) = build_detector(net, chain, frame, &timing, &t_tpl, alphabet.m_max)?;
            // a context detection silences the gate from the next slot on
            inhibit(net, ctx_det, gate, timing.pitch - 1)?;
            (Some(gate), Some(ctx_det))
        }
    };

    let enable = add(net, 1, 0, 1, 0)?;
    let writer = add(net, 2, 0, 1, 0)?;
    excite(net, detector, writer, 1)?;
    excite(net, enable, writer, 1)?;

    let w_off = timing.writer_offset();
    let delta = timing.stage_delay;
    for (i, &sym) in rule.action.iter().enumerate() {
        let tpl = alphabet.template(sym)?;
        let slot_shift = i as Tick * timing.pitch;
        for (c, &y) in tpl.offsets.iter().enumerate() {
            let dst = chain.neuron(tap + 1, c);
            excite(net, writer, dst, delta + slot_shift + y - w_off)?;
            if i == 0 && y > cond.offsets[c] {
                inhibit(net, writer, dst, delta + cond.offsets[c] - w_off)?;
            }
        }
    }
    let growth = rule.growth();
    if growth > 0 {
        let lane = ensure_lane(chain, net, frame, &timing, growth)?;
        inhibit(net, writer, lane.gate, 1)?;
        for (i, &sym) in rule.action.iter().enumerate().skip(1) {
            let tpl = alphabet.template(sym)?;
            for (c, &y) in tpl.offsets.iter().enumerate() {
                // a written spike on the same tick as the original keeps the veto quiet
                inhibit(
                    net,
                    writer,
                    lane.veto[c],
                    i as Tick * timing.pitch + y + 4 - w_off,
                )?;
            }
        }
    }

    Ok(CompiledRule {
        rule: rule_index,
        tap,
        timing,
        detector,
        enable,
        writer,
        gate,
        context_detector,
        input_delays,
        threshold,
        condition: rule.cond,
        action: rule.action.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainSpec, Sentence};
    use crate::codec::{make_alphabet, AlphabetParams};

    fn setup() -> (Alphabet, Chain, Network) {
        let a = make_alphabet(
            &AlphabetParams {
                n: 8,
                ..AlphabetParams::default()
            },
            21,
        )
        .unwrap();
        let mut net = Network::new();
        let chain = Chain::build(ChainSpec::for_alphabet(&a), &mut net).unwrap();
        (a, chain, net)
    }

    fn sym(t: &str) -> SymbolId {
        t.parse().unwrap()
    }

    #[test]
    fn detector_delays_align_template() {
        let (a, mut chain, mut net) = setup();
        let r = AbstractRule::new(sym("a"), vec![sym("c")], 1.0);
        let cr = compile_rule(0, &r, &mut chain, &mut net, 0, &a).unwrap();
        let x = a.template(sym("a")).unwrap();
        for (c, d) in cr.input_delays.iter().enumerate() {
            assert_eq!(d + x.offsets[c], 50);
            assert!(*d > 0);
        }
        assert_eq!(cr.threshold, 8 + 2 * 9);
    }

    #[test]
    fn tap_and_symbol_errors() {
        let (a, mut chain, mut net) = setup();
        let r = AbstractRule::new(sym("a"), vec![sym("c")], 1.0);
        assert!(matches!(
            compile_rule(0, &r, &mut chain, &mut net, 5, &a),
            Err(RuleError::TapOutOfRange { .. })
        ));
        let r = AbstractRule::new(sym("z"), vec![sym("c")], 1.0);
        assert_eq!(
            compile_rule(0, &r, &mut chain, &mut net, 0, &a),
            Err(RuleError::UnknownSymbol(sym("z")))
        );
    }

    #[test]
    fn action_longer_than_capacity() {
        let a = make_alphabet(&AlphabetParams::default(), 21).unwrap();
        let mut net = Network::new();
        let spec = ChainSpec {
            capacity: 2,
            ..ChainSpec::for_alphabet(&a)
        };
        let mut chain = Chain::build(spec, &mut net).unwrap();
        let r = AbstractRule::new(sym("a"), vec![sym("a"), sym("b"), sym("c")], 1.0);
        assert!(matches!(
            compile_rule(0, &r, &mut chain, &mut net, 0, &a),
            Err(RuleError::ActionOverflow { .. })
        ));
    }

    #[test]
    fn detector_fires_only_on_condition_slot() {
        let (a, mut chain, mut net) = setup();
        let r = AbstractRule::new(sym("b"), vec![sym("c")], 1.0);
        let cr = compile_rule(0, &r, &mut chain, &mut net, 1, &a).unwrap();
        chain
            .write_sentence(&mut net, &a, &Sentence::parse("a b a b").unwrap(), 0)
            .unwrap();
        let trace = net.run_to_completion();
        let slots: Vec<_> = trace
            .iter()
            .filter(|e| e.neuron == cr.detector)
            .map(|e| cr.timing.slot_of_detection(0, e.time))
            .collect();
        assert_eq!(slots, vec![Some(1), Some(3)]);
    }
}
