//! Event-driven simulation of a spiking-neuron symbol system.
//!
//! Symbols are spatiotemporal spike patterns over a bundle of channels,
//! carried slot by slot along chain registers of relay neurons. Rewrite rules
//! are classifier circuits that detect a token on one stage and write their
//! action into the next, and rule sets are evolved under selection.

pub mod chain;
pub mod codec;
pub mod evolution;
pub mod grammar;
pub mod rules;
pub mod substrate;
pub mod tasks;

mod seed;

pub use seed::substream_seed;
