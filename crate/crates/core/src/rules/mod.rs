//! Rewrite rules: the abstract form, the symbolic reference oracle, their
//! compilation into classifier circuits on a chain, and the harness that
//! checks the two engines against each other.

mod circuit;
mod engine;
mod equality;
mod equivalence;
mod oracle;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, GapError};
use crate::codec::{CodecError, SymbolId};
use crate::substrate::SubstrateError;

pub use circuit::{compile_rule, compile_rule_wired, CompiledRule, RuleTiming, Wiring};
pub use engine::{leaked_spikes, Pass, Probe, SpikingEngine};
pub use equality::{build_equality_rule, EqualityCircuit};
pub use equivalence::{
    check_equivalence, random_case, EquivalenceCase, EquivalenceReport, Divergence, RandomCaseParams,
    TraceStep,
};
pub use oracle::{
    apply_candidate, apply_oracle, context_satisfied, eligible, select, Candidate, DecisionStream,
    Recorder, ReplayStream, SeededStream,
};

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("rule {index}: {reason}")]
    Invalid { index: usize, reason: String },
    #[error("rule {index}: action of {len} tokens exceeds capacity {capacity}")]
    ActionOverflow {
        index: usize,
        len: usize,
        capacity: usize,
    },
    #[error("symbol {0} is not in the alphabet")]
    UnknownSymbol(SymbolId),
    #[error("tap stage {tap} must be < stages - 1 = {limit}")]
    TapOutOfRange { tap: usize, limit: usize },
    #[error("slot indices out of range: {0}")]
    SlotRange(String),
    #[error("spiking read-out has an undecodable slot: {0}")]
    Gap(#[from] GapError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Substrate(#[from] SubstrateError),
    #[error("rule set JSON: {0}")]
    Json(String),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// The context token occupies the slot immediately before.
    LeftAdjacent,
    /// The context token occupies any earlier slot of the sentence.
    AnywhereBefore,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Context {
    pub sym: SymbolId,
    pub rel: Relation,
}

/// Rewrite one condition token into 1-3 action tokens with probability weight `p`,
/// optionally only when a context token stands in the given relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractRule {
    pub cond: SymbolId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ctx: Option<Context>,
    pub action: Vec<SymbolId>,
    pub p: f64,
}

pub const MAX_ACTION_LEN: usize = 3;

impl AbstractRule {
    pub fn new(cond: SymbolId, action: Vec<SymbolId>, p: f64) -> Self {
        Self {
            cond,
            ctx: None,
            action,
            p,
        }
    }

    pub fn with_context(mut self, sym: SymbolId, rel: Relation) -> Self {
        self.ctx = Some(Context { sym, rel });
        self
    }

    /// Extra slots the action occupies beyond the replaced token.
    pub fn growth(&self) -> usize {
        self.action.len().saturating_sub(1)
    }

    pub fn symbols(&self) -> impl Iterator<Item = SymbolId> + '_ {
        std::iter::once(self.cond)
            .chain(self.ctx.map(|c| c.sym))
            .chain(self.action.iter().copied())
    }

    pub fn validate(&self, index: usize) -> Result<(), RuleError> {
        let invalid = |reason: &str| {
            Err(RuleError::Invalid {
                index,
                reason: reason.to_string(),
            })
        };
        if self.action.is_empty() || self.action.len() > MAX_ACTION_LEN {
            return invalid("action must hold 1 to 3 tokens");
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return invalid("p must be in (0, 1]");
        }
        if self.cond.is_control() {
            return invalid("condition must not be a control token");
        }
        Ok(())
    }
}

/// An ordered list of rules with an explicit start symbol and non-terminal set.
/// Rule ids are list indices.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleSet {
    pub start: SymbolId,
    pub nonterminals: BTreeSet<SymbolId>,
    pub rules: Vec<AbstractRule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl RuleSet {
    /// Start symbol `S`, which is also the only non-terminal.
    pub fn new(rules: Vec<AbstractRule>) -> Self {
        Self {
            start: SymbolId::START,
            nonterminals: BTreeSet::from([SymbolId::START]),
            rules,
        }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn is_terminal(&self, s: SymbolId) -> bool {
        !self.nonterminals.contains(&s)
    }

    pub fn all_terminal(&self, tokens: &[SymbolId]) -> bool {
        tokens.iter().all(|&t| self.is_terminal(t))
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        if self.is_terminal(self.start) {
            return Err(RuleError::Invalid {
                index: 0,
                reason: "start symbol must be a non-terminal".into(),
            });
        }
        self.rules
            .iter()
            .enumerate()
            .try_for_each(|(i, r)| r.validate(i))
    }

    pub fn symbols(&self) -> BTreeSet<SymbolId> {
        self.rules.iter().flat_map(AbstractRule::symbols).collect()
    }

    /// A bare JSON list when start and non-terminals are the defaults,
    /// otherwise `{start, nonterminals, rules}`.
    pub fn to_json(&self) -> serde_json::Value {
        let rules = serde_json::to_value(&self.rules).expect("rules serialize");
        if self.start == SymbolId::START && self.nonterminals == BTreeSet::from([SymbolId::START]) {
            rules
        } else {
            serde_json::json!({
                "start": self.start,
                "nonterminals": self.nonterminals,
                "rules": rules,
            })
        }
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, RuleError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Full {
            #[serde(default = "start")]
            start: SymbolId,
            #[serde(default)]
            nonterminals: Option<BTreeSet<SymbolId>>,
            rules: Vec<AbstractRule>,
        }
        fn start() -> SymbolId {
            SymbolId::START
        }
        let set = if value.is_array() {
            let rules: Vec<AbstractRule> =
                serde_json::from_value(value.clone()).map_err(|e| RuleError::Json(e.to_string()))?;
            Self::new(rules)
        } else {
            let full: Full =
                serde_json::from_value(value.clone()).map_err(|e| RuleError::Json(e.to_string()))?;
            Self {
                start: full.start,
                nonterminals: full
                    .nonterminals
                    .unwrap_or_else(|| BTreeSet::from([full.start])),
                rules: full.rules,
            }
        };
        set.validate()?;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(s: &str) -> SymbolId {
        s.parse().unwrap()
    }

    #[test]
    fn json_list_form() {
        let text = r#"[{"cond":"S","action":["a","S","b"],"p":0.5},
                       {"cond":"b","ctx":{"sym":"a","rel":"left_adjacent"},"action":["c"],"p":1.0}]"#;
        let v: serde_json::Value = serde_json::from_str(text).unwrap();
        let rs = RuleSet::from_json(&v).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs.rules[0].action, vec![sym("a"), sym("S"), sym("b")]);
        assert_eq!(
            rs.rules[1].ctx,
            Some(Context {
                sym: sym("a"),
                rel: Relation::LeftAdjacent
            })
        );
        assert_eq!(RuleSet::from_json(&rs.to_json()).unwrap(), rs);
    }

    #[test]
    fn json_object_form_and_rejections() {
        let v = serde_json::json!({"start": "S", "nonterminals": ["S", "a"], "rules": []});
        let rs = RuleSet::from_json(&v).unwrap();
        assert!(!rs.is_terminal(sym("a")));
        assert!(rs.to_json().is_object());
        let bad = serde_json::json!([{"cond": "a", "action": [], "p": 1.0}]);
        assert!(RuleSet::from_json(&bad).is_err());
        let bad = serde_json::json!([{"cond": "a", "action": ["b"], "p": 0.0}]);
        assert!(RuleSet::from_json(&bad).is_err());
        let bad = serde_json::json!([{"cond": "SAME", "action": ["b"], "p": 1.0}]);
        assert!(RuleSet::from_json(&bad).is_err());
        let bad = serde_json::json!([{"cond": "a", "action": ["b"], "p": 1.0, "speling": 1}]);
        assert!(RuleSet::from_json(&bad).is_err());
    }
}
