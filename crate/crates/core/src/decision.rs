//! Proceed/refuse gate between grounding and the 3D stages.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::{InteractionQuery, ParseError};
use crate::types::GroundingResult;

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NON_AFFORDANCE_ACTIONS: [&str; 4] = ["give", "take", "bring", "fetch"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    ObjectNotFound,
    LowConfidence,
    PhysicalAct,
    IncompatiblePair,
    Unparseable,
}

impl ReasonCode {
    pub const ALL: [ReasonCode; 5] = [
        ReasonCode::ObjectNotFound,
        ReasonCode::LowConfidence,
        ReasonCode::PhysicalAct,
        ReasonCode::IncompatiblePair,
        ReasonCode::Unparseable,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReasonCode::ObjectNotFound => "OBJECT_NOT_FOUND",
            ReasonCode::LowConfidence => "LOW_CONFIDENCE",
            ReasonCode::PhysicalAct => "PHYSICAL_ACT",
            ReasonCode::IncompatiblePair => "INCOMPATIBLE_PAIR",
            ReasonCode::Unparseable => "UNPARSEABLE",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "lowercase")]
pub enum DecisionOutcome {
    Proceed { label: String },
    Refuse { reason_code: ReasonCode, message: String },
}

impl DecisionOutcome {
    pub fn is_proceed(&self) -> bool {
        matches!(self, DecisionOutcome::Proceed { .. })
    }

    pub fn reason(&self) -> Option<ReasonCode> {
        match self {
            DecisionOutcome::Refuse { reason_code, .. } => Some(*reason_code),
            DecisionOutcome::Proceed { .. } => None,
        }
    }

    pub fn refuse(code: ReasonCode, action: &str, object: &str) -> Self {
        DecisionOutcome::Refuse {
            reason_code: code,
            message: refusal_message(code, action, object),
        }
    }
}

/// Conversational refusal text for each reason code.
pub fn refusal_message(code: ReasonCode, action: &str, object: &str) -> String {
    let action = if action.is_empty() { "do that to" } else { action };
    let object = if object.is_empty() { "that object" } else { object };
    match code {
        ReasonCode::PhysicalAct => format!(
            "I can analyze and segment, but I cannot physically {action} objects."
        ),
        ReasonCode::ObjectNotFound => {
            format!("I could not find a {object} in this scene, so there is nothing to segment.")
        }
        ReasonCode::LowConfidence => format!(
            "I am not confident enough that I located the {object}; please try another view or rephrase."
        ),
        ReasonCode::IncompatiblePair => {
            format!("A {object} does not support the '{action}' action, so I will not segment it.")
        }
        ReasonCode::Unparseable => {
            "I could not tell which action and object you mean; try e.g. 'open the bottle'.".to_string()
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("object '{object}' lists affordance '{affordance}' outside the vocabulary")]
    UnknownAffordance { object: String, affordance: String },
    #[error("compatibility table is empty")]
    Empty,
}

/// Which affordances each object label supports, plus actions the system
/// never performs physically.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CompatibilityTable {
    pub object_actions: BTreeMap<String, BTreeSet<String>>,
    pub non_affordance_actions: BTreeSet<String>,
}

impl CompatibilityTable {
    pub fn new(
        object_actions: BTreeMap<String, BTreeSet<String>>,
        non_affordance_actions: BTreeSet<String>,
        affordance_vocab: &BTreeSet<String>,
    ) -> Result<Self, TableError> {
        for (object, acts) in &object_actions {
            if let Some(a) = acts.iter().find(|a| !affordance_vocab.contains(*a)) {
                return Err(TableError::UnknownAffordance {
                    object: object.clone(),
                    affordance: a.clone(),
                });
            }
        }
        if object_actions.values().all(BTreeSet::is_empty) {
            return Err(TableError::Empty);
        }
        Ok(Self {
            object_actions,
            non_affordance_actions,
        })
    }

    pub fn supports(&self, object: &str, action: &str) -> bool {
        self.object_actions
            .get(object)
            .is_some_and(|acts| acts.contains(action))
    }

    pub fn is_physical(&self, action: &str) -> bool {
        self.non_affordance_actions.contains(action)
    }

    /// First of `candidates` (in the given order) that supports `action`.
    pub fn first_supporting<'a, I>(&self, action: &str, candidates: I) -> Option<&'a str>
    where
        I: IntoIterator<Item = &'a str>,
    {
        candidates.into_iter().find(|o| self.supports(o, action))
    }

    pub fn pair_count(&self) -> usize {
        self.object_actions.values().map(BTreeSet::len).sum()
    }
}

/// Grounding stage outcome as seen by the gate.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundingOutcome {
    Found(GroundingResult),
    NotFound,
}

/// First matching rule wins:
/// 1. physical action, 2. object not found, 3. confidence below `threshold`,
/// 4. action unsupported by the grounded label; otherwise proceed.
pub fn decide(
    query: &InteractionQuery,
    grounding: &GroundingOutcome,
    table: &CompatibilityTable,
    threshold: f64,
) -> DecisionOutcome {
    let refuse = |code| DecisionOutcome::refuse(code, &query.action, &query.object);
    if table.is_physical(&query.action) {
        return refuse(ReasonCode::PhysicalAct);
    }
    let g = match grounding {
        GroundingOutcome::NotFound => return refuse(ReasonCode::ObjectNotFound),
        GroundingOutcome::Found(g) => g,
    };
    if g.confidence < threshold {
        return refuse(ReasonCode::LowConfidence);
    }
    if !table.supports(&g.label, &query.action) {
        return DecisionOutcome::refuse(ReasonCode::IncompatiblePair, &query.action, &g.label);
    }
    DecisionOutcome::Proceed {
        label: g.label.clone(),
    }
}

/// Outcome for text that did not parse into a full query. A recognised
/// physical action still dominates.
pub fn decide_unparsed(err: &ParseError, table: &CompatibilityTable) -> DecisionOutcome {
    match err.action() {
        Some(a) if table.is_physical(a) => DecisionOutcome::refuse(ReasonCode::PhysicalAct, a, ""),
        _ => DecisionOutcome::refuse(ReasonCode::Unparseable, err.action().unwrap_or(""), ""),
    }
}
