use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvolutionError;
use crate::substream_seed;

/// Single-peak landscape over binary sequences of length `length`: the
/// all-zero master sequence has fitness `sigma`, every other sequence 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasispeciesConfig {
    pub length: usize,
    pub sigma: f64,
    pub mu: f64,
    pub pop_size: usize,
    pub generations: usize,
}

impl QuasispeciesConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if !(1..=64).contains(&self.length) {
            return Err(EvolutionError::Config("length must be in 1..=64".into()));
        }
        if !(self.sigma > 1.0) {
            return Err(EvolutionError::Config("sigma must be > 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(EvolutionError::Config("mu must be in [0, 1]".into()));
        }
        if self.pop_size < 1 {
            return Err(EvolutionError::Config("pop_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Copy-error rate above which the master sequence is lost:
/// `1 - sigma^(-1/length)`.
pub fn quasispecies_threshold(length: usize, sigma: f64) -> Result<f64, EvolutionError> {
    if !(sigma > 1.0) {
        return Err(EvolutionError::Config("sigma must be > 1".into()));
    }
    if length < 1 {
        return Err(EvolutionError::Config("length must be >= 1".into()));
    }
    Ok(1.0 - sigma.powf(-1.0 / length as f64))
}

/// Wright-Fisher resampling with per-symbol copy errors, starting from an
/// all-master population. Returns the master frequency after each
/// generation.
pub fn quasispecies_run(cfg: &QuasispeciesConfig, seed: u64) -> Result<Vec<f64>, EvolutionError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pop = vec![0u64; cfg.pop_size];
    let mut next = vec![0u64; cfg.pop_size];
    let mut traj = Vec::with_capacity(cfg.generations);
    for _ in 0..cfg.generations {
        let weights = pop.iter().map(|&s| if s == 0 { cfg.sigma } else { 1.0 });
        let dist = WeightedIndex::new(weights).expect("positive weights");
        for slot in next.iter_mut() {
            let mut s = pop[dist.sample(&mut rng)];
            if cfg.mu > 0.0 {
                for bit in 0..cfg.length {
                    if rng.gen_bool(cfg.mu) {
                        s ^= 1 << bit;
                    }
                }
            }
            *slot = s;
        }
        std::mem::swap(&mut pop, &mut next);
        traj.push(pop.iter().filter(|&&s| s == 0).count() as f64 / cfg.pop_size as f64);
    }
    Ok(traj)
}

/// Mean of the last fifth of a trajectory.
pub fn late_mean(traj: &[f64]) -> f64 {
    if traj.is_empty() {
        return 0.0;
    }
    let from = traj.len() - (traj.len() / 5).max(1);
    traj[from..].iter().sum::<f64>() / (traj.len() - from) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mu: f64,
    pub mean_master_freq: f64,
}

/// Late-run master frequency for each copy-error rate in `mus`, averaged
/// over `replicates` runs.
pub fn quasispecies_sweep(
    base: &QuasispeciesConfig,
    mus: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>, EvolutionError> {
    let replicates = replicates.max(1);
    mus.par_iter()
        .enumerate()
        .map(|(i, &mu)| {
            let cfg = QuasispeciesConfig { mu, ..base.clone() };
            let mut total = 0.0;
            for r in 0..replicates {
                let s = substream_seed(seed, "quasispecies", (i * replicates + r) as u64);
                total += late_mean(&quasispecies_run(&cfg, s)?);
            }
            Ok(SweepPoint {
                mu,
                mean_master_freq: total / replicates as f64,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(out: W, points: &[SweepPoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
