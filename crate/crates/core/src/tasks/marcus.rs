use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Artifact, TaskError};
use crate::chain::{Chain, ChainSpec, Sentence, SlotRead};
use crate::codec::{make_alphabet, Alphabet, AlphabetParams, NoiseModel, SymbolId};
use crate::evolution::{fitness_discrimination, Discriminator};
use crate::rules::{build_equality_rule, EqualityCircuit};
use crate::substrate::{Network, Tick};
use crate::substream_seed;

/// Labelled three-token sentences over two disjoint token sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarcusDataset {
    pub train_tokens: Vec<SymbolId>,
    pub test_tokens: Vec<SymbolId>,
    pub train: Vec<(Sentence, SymbolId)>,
    pub test: Vec<(Sentence, SymbolId)>,
}

fn sentences<R: Rng + ?Sized>(tokens: &[SymbolId], n: usize, rng: &mut R) -> Vec<(Sentence, SymbolId)> {
    (0..n)
        .map(|i| {
            let ab: Vec<SymbolId> = tokens.choose_multiple(rng, 2).copied().collect();
            let (a, b) = (ab[0], ab[1]);
            if i % 2 == 0 {
                (Sentence::new(vec![a, b, a]), SymbolId::SAME)
            } else {
                (Sentence::new(vec![a, b, b]), SymbolId::DIFF)
            }
        })
        .collect()
}

/// Split the ordinary symbols of `alphabet` into disjoint train and test
/// token sets and build `n_sentences` alternating ABA/ABB sentences for each.
pub fn make_marcus_dataset(
    alphabet: &Alphabet,
    n_train_tokens: usize,
    n_test_tokens: usize,
    n_sentences: usize,
    seed: u64,
) -> Result<MarcusDataset, TaskError> {
    if n_train_tokens < 2 || n_test_tokens < 2 {
        return Err(TaskError::Dataset(format!(
            "need at least 2 train and 2 test tokens, got {n_train_tokens} and {n_test_tokens}"
        )));
    }
    let mut pool: Vec<SymbolId> = alphabet.symbols().filter(|s| !s.is_reserved()).collect();
    if pool.len() < n_train_tokens + n_test_tokens {
        return Err(TaskError::Dataset(format!(
            "alphabet has {} ordinary symbols, {} requested",
            pool.len(),
            n_train_tokens + n_test_tokens
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let mut train_tokens = pool[..n_train_tokens].to_vec();
    let mut test_tokens = pool[n_train_tokens..n_train_tokens + n_test_tokens].to_vec();
    train_tokens.sort();
    test_tokens.sort();
    let train = sentences(&train_tokens, n_sentences, &mut rng);
    let test = sentences(&test_tokens, n_sentences, &mut rng);
    Ok(MarcusDataset {
        train_tokens,
        test_tokens,
        train,
        test,
    })
}

/// The equality circuit on its chain, answering with the token it writes.
pub struct EqualityResponder<'a> {
    pub circuit: &'a EqualityCircuit,
    pub chain: &'a Chain,
    pub net: &'a Network,
    pub alphabet: &'a Alphabet,
    pub noise: NoiseModel,
    pub rng: ChaCha8Rng,
}

impl Discriminator for EqualityResponder<'_> {
    fn respond(&mut self, sentence: &Sentence) -> Option<SymbolId> {
        match self
            .circuit
            .classify(self.chain, self.net, self.alphabet, sentence, &self.noise, &mut self.rng)
        {
            Ok(SlotRead::Token { symbol, .. }) => Some(symbol),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarcusConfig {
    pub alphabet: AlphabetParams,
    /// Defaults to the standard chain for the alphabet.
    pub chain: Option<ChainSpec>,
    pub n_train_tokens: usize,
    pub n_test_tokens: usize,
    /// Sentences per split.
    pub n_sentences: usize,
    /// Jitter levels in ticks.
    pub jitter: Vec<Tick>,
    /// Presentations of each sentence per jitter level.
    pub repeats: usize,
    /// Comparator tolerance; defaults to twice the alphabet tolerance.
    pub tolerance: Option<Tick>,
}

impl Default for MarcusConfig {
    fn default() -> Self {
        let eps = AlphabetParams::default().eps;
        Self {
            alphabet: AlphabetParams {
                n: 11,
                d_min: 4,
                margin_eps: Some(4 * eps),
                ..AlphabetParams::default()
            },
            chain: None,
            n_train_tokens: 4,
            n_test_tokens: 4,
            n_sentences: 40,
            jitter: vec![0, eps, 3 * eps, 6 * eps],
            repeats: 5,
            tolerance: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub jitter: Tick,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarcusReport {
    pub seed: u64,
    pub tolerance: Tick,
    pub train_tokens: Vec<SymbolId>,
    pub test_tokens: Vec<SymbolId>,
    /// Zero-noise accuracies.
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub by_noise: Vec<NoisePoint>,
}

/// Build a chain with an equality rule on slots 0 and 2 and score it on the
/// train and held-out sets at every jitter level.
pub fn run_marcus(cfg: &MarcusConfig, seed: u64) -> Result<(MarcusReport, Vec<Artifact>), TaskError> {
    if cfg.repeats < 1 || cfg.n_sentences < 1 {
        return Err(TaskError::Config("repeats and n_sentences must be >= 1".into()));
    }
    let alphabet = make_alphabet(&cfg.alphabet, substream_seed(seed, "alphabet", 0))?;
    let data = make_marcus_dataset(
        &alphabet,
        cfg.n_train_tokens,
        cfg.n_test_tokens,
        cfg.n_sentences,
        substream_seed(seed, "dataset", 0),
    )?;
    let spec = cfg.chain.clone().unwrap_or_else(|| ChainSpec::for_alphabet(&alphabet));
    let tolerance = cfg.tolerance.unwrap_or(2 * alphabet.eps);
    let mut net = Network::new();
    let mut chain = Chain::build(spec, &mut net)?;
    let circuit = build_equality_rule(
        &mut chain,
        &mut net,
        &alphabet,
        0,
        0,
        2,
        SymbolId::SAME,
        SymbolId::DIFF,
        tolerance,
    )?;

    let mut levels: Vec<Tick> = cfg.jitter.clone();
    if !levels.contains(&0) {
        levels.insert(0, 0);
    }
    let mut by_noise = Vec::with_capacity(levels.len());
    for (i, &jitter) in levels.iter().enumerate() {
        let score = |set: &[(Sentence, SymbolId)], name: &str| -> Result<f64, TaskError> {
            let repeats = if jitter == 0 { 1 } else { cfg.repeats };
            let mut responder = EqualityResponder {
                circuit: &circuit,
                chain: &chain,
                net: &net,
                alphabet: &alphabet,
                noise: NoiseModel::jitter(jitter),
                rng: ChaCha8Rng::seed_from_u64(substream_seed(seed, name, i as u64)),
            };
            let mut total = 0.0;
            for _ in 0..repeats {
                total += fitness_discrimination(&mut responder, set)?;
            }
            Ok(total / repeats as f64)
        };
        by_noise.push(NoisePoint {
            jitter,
            train_accuracy: score(&data.train, "marcus-train")?,
            test_accuracy: score(&data.test, "marcus-test")?,
        });
    }
    let clean = by_noise.iter().find(|p| p.jitter == 0).expect("zero level present").clone();
    let report = MarcusReport {
        seed,
        tolerance,
        train_tokens: data.train_tokens.clone(),
        test_tokens: data.test_tokens.clone(),
        train_accuracy: clean.train_accuracy,
        test_accuracy: clean.test_accuracy,
        by_noise: by_noise.clone(),
    };
    let artifacts = vec![
        Artifact::json("report.json", &report)?,
        Artifact::csv("accuracy_by_noise.csv", &by_noise)?,
        Artifact::json("dataset.json", &data)?,
        Artifact::json("alphabet.json", &alphabet.to_json())?,
    ];
    Ok((report, artifacts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alphabet() -> Alphabet {
        make_alphabet(&MarcusConfig::default().alphabet, 3).unwrap()
    }

    #[test]
    fn dataset_balance_and_disjointness() {
        let d = make_marcus_dataset(&alphabet(), 4, 4, 40, 1).unwrap();
        for set in [&d.train, &d.test] {
            let same = set.iter().filter(|(_, l)| *l == SymbolId::SAME).count();
            assert_eq!(same, 20);
        }
        assert!(d.train_tokens.iter().all(|t| !d.test_tokens.contains(t)));
        assert!(d.test.iter().all(|(s, _)| s.tokens.iter().all(|t| d.test_tokens.contains(t))));
        assert_eq!(d, make_marcus_dataset(&alphabet(), 4, 4, 40, 1).unwrap());
    }

    #[test]
    fn dataset_errors() {
        assert!(make_marcus_dataset(&alphabet(), 4, 0, 40, 1).is_err());
        assert!(make_marcus_dataset(&alphabet(), 6, 6, 40, 1).is_err());
    }

    #[test]
    fn zero_noise_is_perfect() {
        let cfg = MarcusConfig {
            jitter: vec![0],
            n_sentences: 10,
            ..MarcusConfig::default()
        };
        let (r, files) = run_marcus(&cfg, 5).unwrap();
        assert_eq!(r.train_accuracy, 1.0);
        assert_eq!(r.test_accuracy, 1.0);
        assert_eq!(files.len(), 4);
    }
}
