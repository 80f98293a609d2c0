//! Event-driven simulation of coincidence-detector neurons.
//!
//! Time is quantized in integer ticks of 0.1 ms. A neuron fires at tick `t`
//! when the number of excitatory arrivals in `[t - window, t]` reaches its
//! threshold, it is outside its refractory period (`t - last_fire > refractory`)
//! and it is not vetoed (`t > inhibited_until`). An inhibitory arrival at `t`
//! sets `inhibited_until = max(inhibited_until, t + hold)`.
//!
//! All events addressed to one neuron at one tick are handled as a batch:
//! inhibition first, then excitation and forced (injected) spikes, then a
//! single firing decision. A firing clears the arrival buffer.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time in ticks (1 tick = 0.1 ms).
pub type Tick = u64;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeuronId(pub u32);

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubstrateError {
    #[error("neuron {0} already exists")]
    DuplicateNeuron(NeuronId),
    #[error("neuron {0} does not exist")]
    MissingNeuron(NeuronId),
    #[error("synapse {pre}->{post} has zero delay; delays must be >= 1 tick")]
    ZeroDelay { pre: NeuronId, post: NeuronId },
    #[error("invalid neuron spec for {id}: {reason}")]
    InvalidNeuron { id: NeuronId, reason: &'static str },
    #[error("spike at tick {time} is in the past (current tick {now})")]
    SpikeInPast { time: Tick, now: Tick },
    #[error("run_until({t_end}) is before the current tick {now}")]
    EndInPast { t_end: Tick, now: Tick },
}

/// Static parameters of one neuron.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronSpec {
    pub id: NeuronId,
    /// Coincident excitatory arrivals needed to fire.
    pub threshold: u32,
    /// Coincidence window in ticks.
    pub window: Tick,
    /// Refractory period in ticks.
    pub refractory: Tick,
    /// Duration of an inhibitory veto in ticks.
    pub inhibition_hold: Tick,
}

impl NeuronSpec {
    /// A repeater: fires on any single excitatory arrival.
    pub fn relay(id: NeuronId, refractory: Tick) -> Self {
        Self {
            id,
            threshold: 1,
            window: 0,
            refractory,
            inhibition_hold: 0,
        }
    }

    pub fn new(id: NeuronId, threshold: u32, window: Tick, refractory: Tick, hold: Tick) -> Self {
        Self {
            id,
            threshold,
            window,
            refractory,
            inhibition_hold: hold,
        }
    }

    fn validate(&self) -> Result<(), SubstrateError> {
        if self.threshold < 1 {
            return Err(SubstrateError::InvalidNeuron {
                id: self.id,
                reason: "threshold must be >= 1",
            });
        }
        if self.refractory < 1 {
            return Err(SubstrateError::InvalidNeuron {
                id: self.id,
                reason: "refractory period must be >= 1",
            });
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Excitatory,
    Inhibitory,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynapseSpec {
    pub pre: NeuronId,
    pub post: NeuronId,
    pub delay: Tick,
    pub sign: Sign,
}

impl SynapseSpec {
    pub fn excitatory(pre: NeuronId, post: NeuronId, delay: Tick) -> Self {
        Self {
            pre,
            post,
            delay,
            sign: Sign::Excitatory,
        }
    }

    pub fn inhibitory(pre: NeuronId, post: NeuronId, delay: Tick) -> Self {
        Self {
            pre,
            post,
            delay,
            sign: Sign::Inhibitory,
        }
    }
}

/// An externally imposed spike: the named neuron is forced to fire at `time`
/// (still subject to refractoriness and inhibition).
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Spike {
    pub time: Tick,
    pub neuron: NeuronId,
}

impl Spike {
    pub fn new(time: Tick, neuron: NeuronId) -> Self {
        Self { time, neuron }
    }
}

/// One recorded firing. Ordered by `(time, neuron, seq)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub time: Tick,
    pub neuron: NeuronId,
    pub seq: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    Excite,
    Inhibit,
    Forced,
}

#[derive(Clone, Debug)]
struct NeuronState {
    spec: NeuronSpec,
    arrivals: VecDeque<Tick>,
    last_fire: Option<Tick>,
    inhibited_until: Option<Tick>,
}

impl NeuronState {
    fn refractory_at(&self, t: Tick) -> bool {
        self.last_fire
            .is_some_and(|last| t - last <= self.spec.refractory)
    }

    fn inhibited_at(&self, t: Tick) -> bool {
        self.inhibited_until.is_some_and(|until| t <= until)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Edge {
    post: usize,
    delay: Tick,
    sign: Sign,
}

/// A network of neurons, synapses and its pending event queue.
///
/// Owned by a single run; clone it to replay the same wiring from scratch.
#[derive(Clone, Debug, Default)]
pub struct Network {
    neurons: Vec<NeuronState>,
    index: BTreeMap<NeuronId, usize>,
    // Outgoing edges per neuron index, kept sorted so propagation order does
    // not depend on the order synapses were added.
    edges: Vec<Vec<Edge>>,
    queue: BinaryHeap<Reverse<(Tick, NeuronId, u64, Pending)>>,
    now: Tick,
    next_seq: u64,
    fired: u64,
    trace: Vec<SpikeEvent>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn synapse_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// First tick that has not been processed yet.
    pub fn now(&self) -> Tick {
        self.now
    }

    /// The smallest id larger than every id in use.
    pub fn fresh_id(&self) -> NeuronId {
        self.index
            .keys()
            .next_back()
            .map_or(NeuronId(0), |id| NeuronId(id.0 + 1))
    }

    pub fn contains(&self, id: NeuronId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn neuron(&self, id: NeuronId) -> Option<&NeuronSpec> {
        self.index.get(&id).map(|&i| &self.neurons[i].spec)
    }

    pub fn add_neuron(&mut self, spec: NeuronSpec) -> Result<NeuronId, SubstrateError> {
        spec.validate()?;
        if self.index.contains_key(&spec.id) {
            return Err(SubstrateError::DuplicateNeuron(spec.id));
        }
        let id = spec.id;
        self.index.insert(id, self.neurons.len());
        self.neurons.push(NeuronState {
            spec,
            arrivals: VecDeque::new(),
            last_fire: None,
            inhibited_until: None,
        });
        self.edges.push(Vec::new());
        Ok(id)
    }

    pub fn add_synapse(&mut self, spec: SynapseSpec) -> Result<(), SubstrateError> {
        let pre = *self
            .index
            .get(&spec.pre)
            .ok_or(SubstrateError::MissingNeuron(spec.pre))?;
        let post = *self
            .index
            .get(&spec.post)
            .ok_or(SubstrateError::MissingNeuron(spec.post))?;
        if spec.delay == 0 {
            return Err(SubstrateError::ZeroDelay {
                pre: spec.pre,
                post: spec.post,
            });
        }
        let edge = Edge {
            post,
            delay: spec.delay,
            sign: spec.sign,
        };
        let neurons = &self.neurons;
        let key = |e: &Edge| (neurons[e.post].spec.id, e.delay, e.sign);
        let list = &mut self.edges[pre];
        let at = list.partition_point(|e| key(e) <= key(&edge));
        list.insert(at, edge);
        Ok(())
    }

    /// Outgoing synapses of `pre` in canonical order.
    pub fn synapses_from(&self, pre: NeuronId) -> Vec<SynapseSpec> {
        let Some(&i) = self.index.get(&pre) else {
            return Vec::new();
        };
        self.edges[i]
            .iter()
            .map(|e| SynapseSpec {
                pre,
                post: self.neurons[e.post].spec.id,
                delay: e.delay,
                sign: e.sign,
            })
            .collect()
    }

    pub fn inject_spikes(&mut self, spikes: &[Spike]) -> Result<(), SubstrateError> {
        for s in spikes {
            if s.time < self.now {
                return Err(SubstrateError::SpikeInPast {
                    time: s.time,
                    now: self.now,
                });
            }
            if !self.index.contains_key(&s.neuron) {
                return Err(SubstrateError::MissingNeuron(s.neuron));
            }
        }
        for s in spikes {
            self.push(s.time, s.neuron, Pending::Forced);
        }
        Ok(())
    }

    fn push(&mut self, time: Tick, neuron: NeuronId, kind: Pending) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse((time, neuron, seq, kind)));
    }

    /// Process every event up to and including `t_end`; returns the firings
    /// produced by this call in `(time, neuron, seq)` order.
    pub fn run_until(&mut self, t_end: Tick) -> Result<Vec<SpikeEvent>, SubstrateError> {
        if t_end + 1 < self.now {
            return Err(SubstrateError::EndInPast {
                t_end,
                now: self.now,
            });
        }
        let start = self.trace.len();
        while let Some(&Reverse((time, neuron, _, _))) = self.queue.peek() {
            if time > t_end {
                break;
            }
            // Gather the batch for (time, neuron).
            let mut excite = 0u32;
            let mut inhibit = false;
            let mut forced = false;
            while let Some(&Reverse((t, n, _, kind))) = self.queue.peek() {
                if t != time || n != neuron {
                    break;
                }
                self.queue.pop();
                match kind {
                    Pending::Excite => excite += 1,
                    Pending::Inhibit => inhibit = true,
                    Pending::Forced => forced = true,
                }
            }
            self.process(time, neuron, excite, inhibit, forced);
        }
        self.now = self.now.max(t_end + 1);
        Ok(self.trace[start..].to_vec())
    }

    /// Run until the queue is empty.
    pub fn run_to_completion(&mut self) -> Vec<SpikeEvent> {
        let start = self.trace.len();
        while let Some(&Reverse((time, ..))) = self.queue.peek() {
            self.run_until(time).expect("queue times are never in the past");
        }
        self.trace[start..].to_vec()
    }

    fn process(&mut self, t: Tick, neuron: NeuronId, excite: u32, inhibit: bool, forced: bool) {
        let idx = self.index[&neuron];
        let state = &mut self.neurons[idx];
        if inhibit {
            let until = t + state.spec.inhibition_hold;
            state.inhibited_until = Some(state.inhibited_until.map_or(until, |u| u.max(until)));
        }
        let floor = t.saturating_sub(state.spec.window);
        while state.arrivals.front().is_some_and(|&a| a < floor) {
            state.arrivals.pop_front();
        }
        for _ in 0..excite {
            state.arrivals.push_back(t);
        }
        if state.inhibited_at(t) || state.refractory_at(t) {
            return;
        }
        if !forced && (state.arrivals.len() as u32) < state.spec.threshold {
            return;
        }
        state.arrivals.clear();
        state.last_fire = Some(t);
        let seq = self.fired;
        self.fired += 1;
        self.trace.push(SpikeEvent {
            time: t,
            neuron,
            seq,
        });
        for e in 0..self.edges[idx].len() {
            let edge = self.edges[idx][e];
            let post = self.neurons[edge.post].spec.id;
            let kind = match edge.sign {
                Sign::Excitatory => Pending::Excite,
                Sign::Inhibitory => Pending::Inhibit,
            };
            self.push(t + edge.delay, post, kind);
        }
    }

    /// Every firing recorded since the network was built.
    pub fn trace(&self) -> &[SpikeEvent] {
        &self.trace
    }
}

/// Write a firing trace as CSV rows `time_tick,neuron_id` (with header).
pub fn write_trace_csv<W: Write>(out: W, trace: &[SpikeEvent]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_tick", "neuron_id"])?;
    for ev in trace {
        w.write_record([ev.time.to_string(), ev.neuron.0.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
