//! Symbol alphabets as spike templates, token encoding/decoding and channel noise.
//!
//! A token is one spike per channel; its identity is the vector of spike
//! offsets relative to the slot base time. Two templates agree on a channel
//! when their offsets differ by at most `eps` ticks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::substrate::{NeuronId, Spike, Tick};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("alphabet infeasible: could not place symbol {placed} of {requested} after {attempts} attempts")]
    Infeasible {
        requested: usize,
        placed: usize,
        attempts: usize,
    },
    #[error("invalid alphabet parameters: {0}")]
    InvalidParams(String),
    #[error("template width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("unknown symbol {0}")]
    UnknownSymbol(SymbolId),
    #[error("expected {expected} channel neurons, got {got}")]
    ChannelCount { expected: usize, got: usize },
    #[error("cannot parse symbol name {0:?}")]
    BadSymbolName(String),
}

/// Index of a symbol within an alphabet.
///
/// Ids 0, 1 and 2 are reserved for the start symbol and the SAME/DIFF
/// answer tokens of the equality circuit; ordinary symbols start at 3 and are
/// named `a`, `b`, ... in text form.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolId(pub u16);

impl SymbolId {
    pub const START: SymbolId = SymbolId(0);
    pub const SAME: SymbolId = SymbolId(1);
    pub const DIFF: SymbolId = SymbolId(2);
    /// First id available for ordinary symbols.
    pub const FIRST_ORDINARY: u16 = 3;

    /// The n-th ordinary symbol (`a` = 0).
    pub fn ordinary(n: u16) -> Self {
        SymbolId(Self::FIRST_ORDINARY + n)
    }

    /// SAME and DIFF are control tokens; no rule may rewrite them.
    pub fn is_control(self) -> bool {
        self == Self::SAME || self == Self::DIFF
    }

    pub fn is_reserved(self) -> bool {
        self.0 < Self::FIRST_ORDINARY
    }
}

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => f.write_str("S"),
            1 => f.write_str("SAME"),
            2 => f.write_str("DIFF"),
            n if n < Self::FIRST_ORDINARY + 26 => {
                write!(f, "{}", (b'a' + (n - Self::FIRST_ORDINARY) as u8) as char)
            }
            n => write!(f, "t{n}"),
        }
    }
}

impl FromStr for SymbolId {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" => return Ok(Self::START),
            "SAME" => return Ok(Self::SAME),
            "DIFF" => return Ok(Self::DIFF),
            _ => {}
        }
        let bytes = s.as_bytes();
        if bytes.len() == 1 && bytes[0].is_ascii_lowercase() {
            return Ok(Self::ordinary((bytes[0] - b'a') as u16));
        }
        if let Some(num) = s.strip_prefix('t') {
            if let Ok(n) = num.parse::<u16>() {
                if n >= Self::FIRST_ORDINARY + 26 {
                    return Ok(SymbolId(n));
                }
            }
        }
        Err(CodecError::BadSymbolName(s.to_string()))
    }
}

impl Serialize for SymbolId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SymbolId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parse a whitespace- or comma-separated list of symbol names.
pub fn parse_symbols(text: &str) -> Result<Vec<SymbolId>, CodecError> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

/// Spike offsets (ticks from slot base), one per channel.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpikeTemplate {
    pub offsets: Vec<Tick>,
}

impl SpikeTemplate {
    pub fn new(offsets: Vec<Tick>) -> Self {
        Self { offsets }
    }

    pub fn width(&self) -> usize {
        self.offsets.len()
    }

    pub fn max_offset(&self) -> Tick {
        self.offsets.iter().copied().max().unwrap_or(0)
    }
}

/// Number of channels whose offsets differ by more than `eps`.
pub fn distance(a: &SpikeTemplate, b: &SpikeTemplate, eps: Tick) -> Result<usize, CodecError> {
    if a.width() != b.width() {
        return Err(CodecError::WidthMismatch(a.width(), b.width()));
    }
    Ok(a.offsets
        .iter()
        .zip(&b.offsets)
        .filter(|(x, y)| x.abs_diff(**y) > eps)
        .count())
}

/// Construction parameters for [`make_alphabet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphabetParams {
    /// Number of templates, assigned to ids `0..n`.
    pub n: usize,
    /// Channels per token (W).
    pub width: usize,
    /// Token duration in ticks (D); offsets lie in `[0, D)`.
    pub duration: Tick,
    /// Minimum pairwise distance at tolerance `eps`.
    pub d_min: usize,
    pub eps: Tick,
    /// Allowed mismatched channels when decoding.
    pub m_max: usize,
    /// Optional extra requirement: every pair differs by more than this
    /// tolerance on more than `m_max` channels. At `2 * eps` or above, a token
    /// jittered by at most `eps` still decodes to itself.
    pub margin_eps: Option<Tick>,
    /// Sampling attempts per symbol before giving up.
    pub max_attempts: usize,
}

impl Default for AlphabetParams {
    fn default() -> Self {
        Self {
            n: 8,
            width: 8,
            duration: 50,
            d_min: 8,
            eps: 3,
            m_max: 0,
            margin_eps: None,
            max_attempts: 10_000,
        }
    }
}

impl AlphabetParams {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.n < 1 {
            return Err(CodecError::InvalidParams("n must be >= 1".into()));
        }
        if self.width < 1 {
            return Err(CodecError::InvalidParams("width must be >= 1".into()));
        }
        if self.duration < 2 {
            return Err(CodecError::InvalidParams("duration must be >= 2".into()));
        }
        if self.eps >= self.duration {
            return Err(CodecError::InvalidParams("eps must be < duration".into()));
        }
        if self.n > 1 && self.d_min < 1 {
            return Err(CodecError::InvalidParams("d_min must be >= 1".into()));
        }
        if self.m_max >= self.width {
            return Err(CodecError::InvalidParams("m_max must be < width".into()));
        }
        Ok(())
    }
}

/// An immutable set of symbol templates sharing width, duration and tolerance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    pub width: usize,
    pub duration: Tick,
    pub eps: Tick,
    pub d_min: usize,
    pub m_max: usize,
    templates: BTreeMap<SymbolId, SpikeTemplate>,
}

impl Alphabet {
    pub fn from_templates(
        width: usize,
        duration: Tick,
        eps: Tick,
        d_min: usize,
        m_max: usize,
        templates: BTreeMap<SymbolId, SpikeTemplate>,
    ) -> Result<Self, CodecError> {
        for t in templates.values() {
            if t.width() != width {
                return Err(CodecError::WidthMismatch(width, t.width()));
            }
            if t.offsets.iter().any(|&o| o >= duration) {
                return Err(CodecError::InvalidParams(format!(
                    "template offset outside [0, {duration})"
                )));
            }
        }
        Ok(Self {
            width,
            duration,
            eps,
            d_min,
            m_max,
            templates,
        })
    }

    pub fn template(&self, s: SymbolId) -> Result<&SpikeTemplate, CodecError> {
        self.templates.get(&s).ok_or(CodecError::UnknownSymbol(s))
    }

    pub fn contains(&self, s: SymbolId) -> bool {
        self.templates.contains_key(&s)
    }

    pub fn symbols(&self) -> impl Iterator<Item = SymbolId> + '_ {
        self.templates.keys().copied()
    }

    pub fn templates(&self) -> &BTreeMap<SymbolId, SpikeTemplate> {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Smallest pairwise distance at the alphabet tolerance (None for < 2 symbols).
    pub fn min_pairwise_distance(&self) -> Option<usize> {
        let ts: Vec<_> = self.templates.values().collect();
        let mut best = None;
        for i in 0..ts.len() {
            for j in i + 1..ts.len() {
                let d = distance(ts[i], ts[j], self.eps).expect("uniform width");
                best = Some(best.map_or(d, |b: usize| b.min(d)));
            }
        }
        best
    }

    pub fn to_json(&self) -> serde_json::Value {
        let templates: serde_json::Map<_, _> = self
            .templates
            .iter()
            .map(|(k, v)| (k.to_string(), serde_json::json!(v.offsets)))
            .collect();
        serde_json::json!({
            "W": self.width,
            "D": self.duration,
            "eps": self.eps,
            "d_min": self.d_min,
            "m_max": self.m_max,
            "templates": templates,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, CodecError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Wire {
            #[serde(rename = "W")]
            width: usize,
            #[serde(rename = "D")]
            duration: Tick,
            eps: Tick,
            #[serde(default = "one")]
            d_min: usize,
            #[serde(default)]
            m_max: usize,
            templates: BTreeMap<SymbolId, Vec<Tick>>,
        }
        fn one() -> usize {
            1
        }
        let wire: Wire = serde_json::from_value(value.clone())
            .map_err(|e| CodecError::InvalidParams(e.to_string()))?;
        let templates = wire
            .templates
            .into_iter()
            .map(|(k, v)| (k, SpikeTemplate::new(v)))
            .collect();
        Self::from_templates(
            wire.width,
            wire.duration,
            wire.eps,
            wire.d_min,
            wire.m_max,
            templates,
        )
    }
}

fn separated(a: &SpikeTemplate, b: &SpikeTemplate, params: &AlphabetParams) -> bool {
    let ok = distance(a, b, params.eps).expect("same width") >= params.d_min;
    ok && params
        .margin_eps
        .is_none_or(|m| distance(a, b, m).expect("same width") > params.m_max)
}

/// Sample `n` templates, resampling each candidate until it is at distance
/// `>= d_min` from every accepted one. Each channel offset is drawn uniformly
/// from the values in `[0, D)` not within `eps` of an accepted template on
/// that channel, or from all of `[0, D)` when none is left.
pub fn make_alphabet(params: &AlphabetParams, seed: u64) -> Result<Alphabet, CodecError> {
    params.validate()?;
    if params.n > 1 && params.d_min > params.width {
        return Err(CodecError::Infeasible {
            requested: params.n,
            placed: 1,
            attempts: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted: Vec<SpikeTemplate> = Vec::with_capacity(params.n);
    while accepted.len() < params.n {
        let mut placed = false;
        for _ in 0..params.max_attempts {
            let cand = SpikeTemplate::new(
                (0..params.width)
                    .map(|c| {
                        let free: Vec<Tick> = (0..params.duration)
                            .filter(|&v| accepted.iter().all(|t| t.offsets[c].abs_diff(v) > params.eps))
                            .collect();
                        match free.choose(&mut rng) {
                            Some(&v) => v,
                            None => rng.gen_range(0..params.duration),
                        }
                    })
                    .collect(),
            );
            if accepted.iter().all(|t| separated(t, &cand, params)) {
                accepted.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(CodecError::Infeasible {
                requested: params.n,
                placed: accepted.len(),
                attempts: params.max_attempts,
            });
        }
    }
    let templates = accepted
        .into_iter()
        .enumerate()
        .map(|(i, t)| (SymbolId(i as u16), t))
        .collect();
    Alphabet::from_templates(
        params.width,
        params.duration,
        params.eps,
        params.d_min,
        params.m_max,
        templates,
    )
}

/// One spike per channel at `base + offset[c]`.
pub fn encode(
    alphabet: &Alphabet,
    symbol: SymbolId,
    base: Tick,
    channels: &[NeuronId],
) -> Result<Vec<Spike>, CodecError> {
    let t = alphabet.template(symbol)?;
    if channels.len() != t.width() {
        return Err(CodecError::ChannelCount {
            expected: t.width(),
            got: channels.len(),
        });
    }
    Ok(t.offsets
        .iter()
        .zip(channels)
        .map(|(&o, &n)| Spike::new(base + o, n))
        .collect())
}

/// Spike offsets observed in one slot window, grouped by channel. Offsets are
/// relative to the slot base and may be negative.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SlotObservation {
    pub channels: Vec<Vec<i64>>,
}

impl SlotObservation {
    pub fn empty(width: usize) -> Self {
        Self {
            channels: vec![Vec::new(); width],
        }
    }

    /// Collect spikes of `channel_neurons` falling in `[base - lead, base + span)`.
    pub fn collect<'a>(
        spikes: impl IntoIterator<Item = &'a Spike>,
        channel_neurons: &[NeuronId],
        base: Tick,
        lead: Tick,
        span: Tick,
    ) -> Self {
        let mut obs = Self::empty(channel_neurons.len());
        let lo = base.saturating_sub(lead);
        let hi = base + span;
        for s in spikes {
            if s.time < lo || s.time >= hi {
                continue;
            }
            if let Some(c) = channel_neurons.iter().position(|&n| n == s.neuron) {
                obs.channels[c].push(s.time as i64 - base as i64);
            }
        }
        obs
    }

    pub fn is_silent(&self) -> bool {
        self.channels.iter().all(Vec::is_empty)
    }

    /// Channels with no spike within `eps` of the template offset.
    pub fn mismatch(&self, template: &SpikeTemplate, eps: Tick) -> usize {
        template
            .offsets
            .iter()
            .enumerate()
            .filter(|(c, &o)| {
                !self
                    .channels
                    .get(*c)
                    .is_some_and(|ts| ts.iter().any(|&t| t.abs_diff(o as i64) <= eps))
            })
            .count()
    }
}

/// Nearest-template decoding with tie rejection: the unique template with the
/// smallest mismatch count, provided that count is at most `m_max`.
pub fn match_token(
    obs: &SlotObservation,
    alphabet: &Alphabet,
    eps: Tick,
    m_max: usize,
) -> Option<(SymbolId, usize)> {
    let mut best: Option<(SymbolId, usize)> = None;
    let mut tied = false;
    for (&sym, t) in alphabet.templates() {
        let m = obs.mismatch(t, eps);
        match best {
            None => best = Some((sym, m)),
            Some((_, bm)) if m < bm => {
                best = Some((sym, m));
                tied = false;
            }
            Some((_, bm)) if m == bm => tied = true,
            _ => {}
        }
    }
    match best {
        Some((s, m)) if !tied && m <= m_max => Some((s, m)),
        _ => None,
    }
}

/// Transmission noise applied to spikes of one slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Uniform integer jitter in `[-jitter_max, +jitter_max]` per spike.
    pub jitter_max: Tick,
    pub p_delete: f64,
    /// Per-channel probability of one spurious spike at a uniform time.
    pub p_insert: f64,
}

impl NoiseModel {
    pub fn jitter(jitter_max: Tick) -> Self {
        Self {
            jitter_max,
            ..Self::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.jitter_max == 0 && self.p_delete == 0.0 && self.p_insert == 0.0
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("p_delete", self.p_delete), ("p_insert", self.p_insert)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Jitter, delete and insert spikes within the slot window `[start, end)`.
/// Output is sorted by `(time, neuron)`.
pub fn perturb<R: Rng + ?Sized>(
    spikes: &[Spike],
    channels: &[NeuronId],
    start: Tick,
    end: Tick,
    noise: &NoiseModel,
    rng: &mut R,
) -> Vec<Spike> {
    let mut out = Vec::with_capacity(spikes.len());
    let j = noise.jitter_max as i64;
    for s in spikes {
        if noise.p_delete > 0.0 && rng.gen_bool(noise.p_delete) {
            continue;
        }
        let shift = if j > 0 { rng.gen_range(-j..=j) } else { 0 };
        let t = (s.time as i64 + shift).clamp(start as i64, end as i64 - 1) as Tick;
        out.push(Spike::new(t, s.neuron));
    }
    if noise.p_insert > 0.0 {
        for &n in channels {
            if rng.gen_bool(noise.p_insert) {
                out.push(Spike::new(rng.gen_range(start..end), n));
            }
        }
    }
    out.sort();
    out
}


#[cfg(test)]
mod tests {
    use super::*;

    fn tpl(v: &[Tick]) -> SpikeTemplate {
        SpikeTemplate::new(v.to_vec())
    }

    fn alphabet_of(ts: &[&[Tick]], eps: Tick) -> Alphabet {
        let w = ts[0].len();
        let map = ts
            .iter()
            .enumerate()
            .map(|(i, t)| (SymbolId(i as u16), tpl(t)))
            .collect();
        Alphabet::from_templates(w, 50, eps, 1, 0, map).unwrap()
    }

    #[test]
    fn symbol_names_round_trip() {
        for id in [0u16, 1, 2, 3, 4, 28, 29, 500] {
            let s = SymbolId(id);
            assert_eq!(s.to_string().parse::<SymbolId>().unwrap(), s);
        }
        assert_eq!(SymbolId::ordinary(0).to_string(), "a");
        assert!("xyz".parse::<SymbolId>().is_err());
        assert!("t5".parse::<SymbolId>().is_err());
        assert_eq!(
            parse_symbols("a b,S").unwrap(),
            vec![SymbolId::ordinary(0), SymbolId::ordinary(1), SymbolId::START]
        );
    }

    #[test]
    fn distance_definition() {
        let a = tpl(&[0, 10]);
        let b = tpl(&[0, 13]);
        assert_eq!(distance(&a, &a, 0), Ok(0));
        assert_eq!(distance(&a, &b, 3), Ok(0));
        assert_eq!(distance(&a, &b, 2), Ok(1));
        assert_eq!(
            distance(&a, &tpl(&[1]), 0),
            Err(CodecError::WidthMismatch(2, 1))
        );
    }

    #[test]
    fn single_symbol_alphabet() {
        let p = AlphabetParams {
            n: 1,
            d_min: 100,
            ..AlphabetParams::default()
        };
        let a = make_alphabet(&p, 1).unwrap();
        assert_eq!(a.len(), 1);
        assert!(a.min_pairwise_distance().is_none());
    }

    #[test]
    fn pigeonhole_infeasible() {
        let p = AlphabetParams {
            n: 100,
            width: 2,
            duration: 3,
            d_min: 2,
            eps: 0,
            m_max: 0,
            margin_eps: None,
            max_attempts: 10_000,
        };
        assert!(matches!(
            make_alphabet(&p, 3),
            Err(CodecError::Infeasible { requested: 100, .. })
        ));
    }

    #[test]
    fn alphabet_is_seed_deterministic() {
        let p = AlphabetParams::default();
        assert_eq!(make_alphabet(&p, 9).unwrap(), make_alphabet(&p, 9).unwrap());
        assert_ne!(make_alphabet(&p, 9).unwrap(), make_alphabet(&p, 10).unwrap());
    }

    #[test]
    fn encode_places_spikes() {
        let a = alphabet_of(&[&[0, 5, 9]], 3);
        let ch = [NeuronId(7), NeuronId(8), NeuronId(9)];
        let ev = encode(&a, SymbolId(0), 100, &ch).unwrap();
        let times: Vec<_> = ev.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![100, 105, 109]);
        assert_eq!(
            encode(&a, SymbolId(4), 100, &ch),
            Err(CodecError::UnknownSymbol(SymbolId(4)))
        );
        assert!(matches!(
            encode(&a, SymbolId(0), 100, &ch[..2]),
            Err(CodecError::ChannelCount { .. })
        ));
    }

    fn observe(a: &Alphabet, s: SymbolId, shifts: &[i64]) -> SlotObservation {
        let t = a.template(s).unwrap();
        SlotObservation {
            channels: t
                .offsets
                .iter()
                .zip(shifts)
                .map(|(&o, &d)| vec![o as i64 + d])
                .collect(),
        }
    }

    #[test]
    fn match_exact_and_within_tolerance() {
        let p = AlphabetParams::default();
        let a = make_alphabet(&p, 4).unwrap();
        for s in a.symbols() {
            assert_eq!(match_token(&observe(&a, s, &[0; 8]), &a, 3, 0), Some((s, 0)));
            assert_eq!(match_token(&observe(&a, s, &[3; 8]), &a, 3, 0), Some((s, 0)));
            assert_eq!(match_token(&observe(&a, s, &[-3; 8]), &a, 3, 0), Some((s, 0)));
        }
    }

    #[test]
    fn match_rejects_beyond_m_max() {
        let p = AlphabetParams {
            m_max: 1,
            d_min: 8,
            ..AlphabetParams::default()
        };
        let a = make_alphabet(&p, 5).unwrap();
        let s = SymbolId(2);
        // eps+1 jitter on m_max+1 = 2 channels
        let obs = observe(&a, s, &[4, 4, 0, 0, 0, 0, 0, 0]);
        assert_eq!(match_token(&obs, &a, 3, 1), None);
        let obs = observe(&a, s, &[4, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(match_token(&obs, &a, 3, 1), Some((s, 1)));
    }

    #[test]
    fn match_rejects_ties() {
        let a = alphabet_of(&[&[0, 10], &[20, 10]], 0);
        let obs = SlotObservation {
            channels: vec![vec![], vec![10]],
        };
        assert_eq!(match_token(&obs, &a, 0, 1), None);
    }

    #[test]
    fn perturb_zero_noise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ch = [NeuronId(0), NeuronId(1)];
        let spikes = vec![Spike::new(3, ch[0]), Spike::new(7, ch[1])];
        let out = perturb(&spikes, &ch, 0, 50, &NoiseModel::default(), &mut rng);
        assert_eq!(out, spikes);
        let all_gone = NoiseModel {
            p_delete: 1.0,
            ..NoiseModel::default()
        };
        assert!(perturb(&spikes, &ch, 0, 50, &all_gone, &mut rng).is_empty());
    }

    #[test]
    fn perturb_inserts_inside_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = [NeuronId(0), NeuronId(1)];
        let noise = NoiseModel {
            p_insert: 1.0,
            ..NoiseModel::default()
        };
        let out = perturb(&[], &ch, 100, 150, &noise, &mut rng);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|s| (100..150).contains(&s.time)));
    }

    #[test]
    fn jitter_is_uniform_chi_squared() {
        // 10,000 spikes far from the window edges; counts per shift in -2..=2.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let ch = [NeuronId(0)];
        let spikes: Vec<_> = (0..10_000).map(|_| Spike::new(500, ch[0])).collect();
        let out = perturb(&spikes, &ch, 0, 1000, &NoiseModel::jitter(2), &mut rng);
        let mut counts = [0f64; 5];
        for s in &out {
            counts[(s.time as i64 - 500 + 2) as usize] += 1.0;
        }
        let expected = 2000.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // chi-squared, 4 dof, p = 0.001 critical value
        assert!(chi2 < 18.467, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn alphabet_json_round_trip() {
        let a = make_alphabet(&AlphabetParams::default(), 3).unwrap();
        let v = a.to_json();
        assert_eq!(v["W"], 8);
        assert_eq!(Alphabet::from_json(&v).unwrap(), a);
    }
}
