use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{copy_with_mutation, ErrorModel, EvolutionError, Genome};
use crate::codec::Alphabet;
use crate::substream_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Selection {
    pub tournament_k: usize,
    pub elitism: usize,
}

impl Default for Selection {
    fn default() -> Self {
        Self {
            tournament_k: 3,
            elitism: 1,
        }
    }
}

/// One member of a parent generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub parent: Option<u64>,
    pub fitness: f64,
    /// Number of members of the next generation copied from this one.
    pub offspring: usize,
    /// Rule count.
    pub z: f64,
    /// Mean rule count of the offspring, or `z` when there are none.
    pub z_offspring: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub individuals: Vec<Individual>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceTerms {
    pub delta_z: f64,
    pub selection: f64,
    pub transmission: f64,
}

/// Price decomposition of the change in mean rule count, with offspring
/// counts as fitness.
pub fn price_terms(rec: &GenerationRecord) -> Result<PriceTerms, EvolutionError> {
    let n = rec.individuals.len();
    if n == 0 {
        return Err(EvolutionError::EmptyPopulation);
    }
    let nf = n as f64;
    let w: Vec<f64> = rec.individuals.iter().map(|i| i.offspring as f64).collect();
    let z: Vec<f64> = rec.individuals.iter().map(|i| i.z).collect();
    let zp: Vec<f64> = rec.individuals.iter().map(|i| i.z_offspring).collect();
    let w_bar = w.iter().sum::<f64>() / nf;
    if w_bar == 0.0 {
        return Err(EvolutionError::ZeroMeanFitness);
    }
    let z_bar = z.iter().sum::<f64>() / nf;
    let cov = w.iter().zip(&z).map(|(w, z)| (w - w_bar) * (z - z_bar)).sum::<f64>() / nf;
    let trans = w.iter().zip(z.iter().zip(&zp)).map(|(w, (z, zp))| w * (zp - z)).sum::<f64>() / nf;
    let next_mean = w.iter().zip(&zp).map(|(w, zp)| w * zp).sum::<f64>() / w.iter().sum::<f64>();
    Ok(PriceTerms {
        delta_z: next_mean - z_bar,
        selection: cov / w_bar,
        transmission: trans / w_bar,
    })
}

/// Fill in missing fitness values, in parallel.
pub fn evaluate<F>(pop: &mut [Genome], fitness: &F)
where
    F: Fn(&Genome) -> f64 + Sync,
{
    pop.par_iter_mut()
        .filter(|g| g.fitness.is_none())
        .for_each(|g| g.fitness = Some(fitness(g)));
}

fn fit(g: &Genome) -> f64 {
    g.fitness.unwrap_or(f64::NEG_INFINITY)
}

fn tournament<R: Rng + ?Sized>(pop: &[Genome], k: usize, rng: &mut R) -> usize {
    let mut best = rng.gen_range(0..pop.len());
    for _ in 1..k {
        let i = rng.gen_range(0..pop.len());
        if fit(&pop[i]) > fit(&pop[best]) {
            best = i;
        }
    }
    best
}

/// One generation: the `elitism` fittest genomes are kept verbatim, the rest
/// of the next generation are mutated copies of tournament winners.
pub fn step_generation<F, R>(
    mut pop: Vec<Genome>,
    selection: &Selection,
    em: &ErrorModel,
    alphabet: &Alphabet,
    fitness: &F,
    rng: &mut R,
    next_id: &mut u64,
) -> Result<(Vec<Genome>, GenerationRecord), EvolutionError>
where
    F: Fn(&Genome) -> f64 + Sync,
    R: Rng + ?Sized,
{
    if pop.is_empty() {
        return Err(EvolutionError::EmptyPopulation);
    }
    if selection.elitism >= pop.len() {
        return Err(EvolutionError::Config(format!(
            "elitism {} must be < population size {}",
            selection.elitism,
            pop.len()
        )));
    }
    if selection.tournament_k < 1 {
        return Err(EvolutionError::Config("tournament_k must be >= 1".into()));
    }
    em.validate()?;
    evaluate(&mut pop, fitness);

    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| fit(&pop[b]).total_cmp(&fit(&pop[a])));
    let mut next = Vec::with_capacity(pop.len());
    let mut parent_of = Vec::with_capacity(pop.len());
    for &i in order.iter().take(selection.elitism) {
        next.push(pop[i].clone());
        parent_of.push(i);
    }
    while next.len() < pop.len() {
        let p = tournament(&pop, selection.tournament_k, rng);
        next.push(copy_with_mutation(&pop[p], em, alphabet, *next_id, rng));
        *next_id += 1;
        parent_of.push(p);
    }
    evaluate(&mut next, fitness);

    let individuals = pop
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let kids: Vec<f64> = parent_of
                .iter()
                .zip(&next)
                .filter(|(&p, _)| p == i)
                .map(|(_, c)| c.trait_value())
                .collect();
            let z = g.trait_value();
            Individual {
                id: g.id,
                parent: g.parent,
                fitness: fit(g),
                offspring: kids.len(),
                z,
                z_offspring: if kids.is_empty() {
                    z
                } else {
                    kids.iter().sum::<f64>() / kids.len() as f64
                },
            }
        })
        .collect();
    Ok((
        next,
        GenerationRecord {
            generation: 0,
            individuals,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub selection: Selection,
    pub error: ErrorModel,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            pop_size: 40,
            generations: 30,
            selection: Selection::default(),
            error: ErrorModel::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub gen: usize,
    pub best: f64,
    pub mean: f64,
    pub rule_count_mean: f64,
    pub price_cov: f64,
    pub price_trans: f64,
}

#[derive(Clone, Debug)]
pub struct EvolutionRun {
    pub history: Vec<HistoryRow>,
    pub records: Vec<GenerationRecord>,
    pub population: Vec<Genome>,
    pub best: Genome,
}

/// Run `cfg.generations` generations from `initial`. Generation `g` draws
/// from its own stream derived from `seed`, so results do not depend on how
/// fitness evaluation is scheduled.
pub fn evolve<F>(
    cfg: &EvolutionConfig,
    alphabet: &Alphabet,
    initial: Vec<Genome>,
    fitness: &F,
    seed: u64,
) -> Result<EvolutionRun, EvolutionError>
where
    F: Fn(&Genome) -> f64 + Sync,
{
    let mut pop = initial;
    if pop.is_empty() {
        return Err(EvolutionError::EmptyPopulation);
    }
    let mut next_id = pop.iter().map(|g| g.id).max().unwrap_or(0) + 1;
    let mut history = Vec::with_capacity(cfg.generations);
    let mut records = Vec::with_capacity(cfg.generations);
    for gen in 0..cfg.generations {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "generation", gen as u64));
        let (next, mut rec) =
            step_generation(pop, &cfg.selection, &cfg.error, alphabet, fitness, &mut rng, &mut next_id)?;
        rec.generation = gen;
        let price = price_terms(&rec)?;
        let n = rec.individuals.len() as f64;
        history.push(HistoryRow {
            gen,
            best: rec.individuals.iter().map(|i| i.fitness).fold(f64::NEG_INFINITY, f64::max),
            mean: rec.individuals.iter().map(|i| i.fitness).sum::<f64>() / n,
            rule_count_mean: rec.individuals.iter().map(|i| i.z).sum::<f64>() / n,
            price_cov: price.selection,
            price_trans: price.transmission,
        });
        records.push(rec);
        pop = next;
    }
    evaluate(&mut pop, fitness);
    let best = pop
        .iter()
        .max_by(|a, b| fit(a).total_cmp(&fit(b)).then(b.id.cmp(&a.id)))
        .cloned()
        .expect("non-empty population");
    Ok(EvolutionRun {
        history,
        records,
        population: pop,
        best,
    })
}

pub fn write_history_csv<W: Write>(out: W, rows: &[HistoryRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
