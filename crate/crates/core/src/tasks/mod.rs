//! End-to-end experiments: the ABA/ABB discrimination task and grammar-target
//! evolution. Each run returns a report plus the files it would write, so
//! the caller decides where they go.

mod grammar_evolution;
mod marcus;

use serde::Serialize;
use thiserror::Error;

use crate::chain::ChainError;
use crate::codec::CodecError;
use crate::evolution::EvolutionError;
use crate::rules::RuleError;

pub use grammar_evolution::{run_grammar_evolution, GrammarEvolutionConfig, GrammarEvolutionReport, PopulationStats};
pub use marcus::{
    make_marcus_dataset, run_marcus, EqualityResponder, MarcusConfig, MarcusDataset, MarcusReport, NoisePoint,
};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error("serialization: {0}")]
    Serialize(String),
}

/// A named output file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json<T: Serialize + ?Sized>(name: &str, value: &T) -> Result<Self, TaskError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| TaskError::Serialize(e.to_string()))?;
        bytes.push(b'\n');
        Ok(Self {
            name: name.to_string(),
            bytes,
        })
    }

    pub fn csv<T: Serialize>(name: &str, rows: &[T]) -> Result<Self, TaskError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| TaskError::Serialize(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| TaskError::Serialize(e.to_string()))?;
        Ok(Self {
            name: name.to_string(),
            bytes,
        })
    }
}
