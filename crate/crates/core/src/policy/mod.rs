//! Policy documents and their compiled form.
//!
//! A policy is a JSON document with four parts: the policy `Id`, an `Object`
//! pattern selecting what it protects, a `Condition` block gating access,
//! and an `Action` describing a chain of functions to run over the object
//! body. [`parse_policy`] turns raw text into a [`PolicyDocument`] (syntax
//! only), [`validate_policy`] turns a document into a [`CompiledPolicy`]
//! (semantic checks plus a linearized execution plan). Compiled policies
//! serialize to a versioned JSON form so they can be stored and reloaded
//! without re-validating.

mod condition;
mod matcher;
mod parse;
mod validate;

pub use condition::{evaluate_conditions, RequestContext};
pub use matcher::{match_object, ObjectMatcher, ObjectPath, PatternSegment};
pub use parse::parse_policy;
pub use validate::validate_policy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Version tag embedded in serialized compiled policies.
pub const PLAN_FORMAT_VERSION: u32 = 1;

/// Errors raised while parsing, validating, or evaluating policies.
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("malformed policy JSON: {0}")]
    MalformedJson(String),
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("unknown function `{0}`")]
    UnknownUdf(String),
    #[error("unknown event type `{0}`")]
    UnknownEventType(String),
    #[error("bad predicate `{0}`")]
    BadPredicate(String),
    #[error("step chain contains a cycle")]
    CyclicChain,
    #[error("step `{0}` is unreachable from StartAt")]
    UnreachableStep(String),
    #[error("step `{from}` continues to unknown step `{to}`")]
    UnknownStep { from: String, to: String },
    #[error("event type `{event_type}` requires parameter `{param}`")]
    MissingEventParam { event_type: String, param: String },
    #[error("bad value for `{param}` on event type `{event_type}`: {reason}")]
    InvalidEventParam {
        event_type: String,
        param: String,
        reason: String,
    },
    #[error("bad object pattern `{pattern}`: {reason}")]
    BadObjectPattern { pattern: String, reason: String },
    #[error("condition key `{0}` cannot be resolved for this request")]
    UnresolvableKey(String),
    #[error("unsupported plan format version {0}")]
    UnsupportedPlanVersion(u32),
    #[error("stored plan failed integrity check")]
    CorruptPlan,
}

/// A parsed policy document. Field names mirror the JSON schema; parsing
/// checks syntax only, so a document may still fail [`validate_policy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub id: String,
    pub object: String,
    pub conditions: Vec<ConditionClause>,
    pub start_at: String,
    pub steps: BTreeMap<String, StepSpec>,
}

/// One `{operator: {key: values}}` entry from the `Condition` block.
/// All clauses of a policy must hold for access to be granted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionClause {
    pub operator: ConditionOperator,
    pub key: String,
    pub values: Vec<CondValue>,
}

/// The closed set of condition operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionOperator {
    StringEquals,
    StringNotEquals,
    StringLike,
    NumericEquals,
    NumericLessThan,
    NumericLessThanEquals,
    NumericGreaterThan,
    NumericGreaterThanEquals,
    DateEquals,
    DateNotEquals,
}

impl ConditionOperator {
    pub fn from_name(name: &str) -> Option<Self> {
        use ConditionOperator::*;
        Some(match name {
            "StringEquals" => StringEquals,
            "StringNotEquals" => StringNotEquals,
            "StringLike" => StringLike,
            "NumericEquals" => NumericEquals,
            "NumericLessThan" => NumericLessThan,
            "NumericLessThanEquals" => NumericLessThanEquals,
            "NumericGreaterThan" => NumericGreaterThan,
            "NumericGreaterThanEquals" => NumericGreaterThanEquals,
            "DateEquals" => DateEquals,
            "DateNotEquals" => DateNotEquals,
            _ => return None,
        })
    }
}

/// A literal value appearing in a condition clause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CondValue {
    Str(String),
    Num(f64),
    Bool(bool),
}

impl CondValue {
    /// String form used by the string and date operators.
    pub fn as_text(&self) -> String {
        match self {
            CondValue::Str(s) => s.clone(),
            CondValue::Num(n) => format_num(*n),
            CondValue::Bool(b) => b.to_string(),
        }
    }

    /// Numeric form used by the numeric operators, if the value has one.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            CondValue::Str(s) => s.trim().parse().ok(),
            CondValue::Num(n) => Some(*n),
            CondValue::Bool(_) => None,
        }
    }
}

fn format_num(n: f64) -> String {
    if n == n.trunc() && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

/// One entry of the `Steps` map, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSpec {
    /// Function to run (`Id` inside the step body).
    pub udf_id: String,
    /// Event subscription; a step without one never fires.
    pub event: Option<EventSpec>,
    /// Function parameters: a list of single-purpose objects, order kept.
    pub input: Vec<BTreeMap<String, ParamValue>>,
    pub next: NextStep,
}

/// The `EventType` block of a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub type_name: String,
    pub input: Vec<BTreeMap<String, ParamValue>>,
}

/// Where control flows after a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NextStep {
    Step(String),
    End,
}

/// A parameter value from a policy `Input` list. `Bytes` never appears in a
/// parsed document; the engine substitutes it when it resolves `meta://`
/// references at enforcement time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamValue {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    IntList(Vec<i64>),
    Bytes(Vec<u8>),
}

impl ParamValue {
    /// Text form, treating resolved bytes as UTF-8 when possible.
    pub fn as_text(&self) -> Option<String> {
        match self {
            ParamValue::Str(s) => Some(s.clone()),
            ParamValue::Bytes(b) => String::from_utf8(b.clone()).ok(),
            ParamValue::Int(i) => Some(i.to_string()),
            ParamValue::Float(f) => Some(f.to_string()),
            ParamValue::Bool(b) => Some(b.to_string()),
            ParamValue::IntList(_) => None,
        }
    }
}

/// A validated policy with its linearized execution plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledPolicy {
    pub id: String,
    pub object_matcher: ObjectMatcher,
    pub conditions: Vec<ConditionClause>,
    /// Steps in execution order, `StartAt` first.
    pub plan: Vec<PlanStep>,
    pub compiled_at: chrono::DateTime<chrono::Utc>,
}

/// One step of a compiled plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step_id: String,
    pub udf_id: String,
    /// `None` for steps with no subscription; they are inert placeholders.
    pub event: Option<CompiledEvent>,
    pub params: Vec<BTreeMap<String, ParamValue>>,
}

/// A compiled event subscription. Marker variants carry the object label
/// attached to every event they emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CompiledEvent {
    JsonPath {
        type_name: String,
        matcher: crate::stream::PathMatcher,
        marker: Option<String>,
    },
    Column {
        type_name: String,
        columns: Vec<u32>,
        marker: Option<String>,
    },
}

impl CompiledEvent {
    pub fn type_name(&self) -> &str {
        match self {
            CompiledEvent::JsonPath { type_name, .. } => type_name,
            CompiledEvent::Column { type_name, .. } => type_name,
        }
    }

    pub fn marker(&self) -> Option<&str> {
        match self {
            CompiledEvent::JsonPath { marker, .. } => marker.as_deref(),
            CompiledEvent::Column { marker, .. } => marker.as_deref(),
        }
    }
}

/// Serialized wrapper for stored compiled policies.
#[derive(Serialize, Deserialize)]
struct StoredPlan {
    v: u32,
    #[serde(flatten)]
    policy: CompiledPolicy,
}

impl CompiledPolicy {
    /// Serializes to the versioned storage form: a SHA-256 digest of the
    /// payload followed by the payload itself, so corrupted store entries
    /// are rejected at load instead of enforcing a silently altered plan.
    pub fn to_bytes(&self) -> Vec<u8> {
        let stored = StoredPlan {
            v: PLAN_FORMAT_VERSION,
            policy: self.clone(),
        };
        let payload = serde_json::to_vec(&stored).expect("compiled policy serializes");
        let digest = Sha256::digest(&payload);
        let mut framed = Vec::with_capacity(32 + payload.len());
        framed.extend_from_slice(&digest);
        framed.extend_from_slice(&payload);
        framed
    }

    /// Loads a compiled policy from its storage form, verifying the digest.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyError> {
        if bytes.len() < 32 {
            return Err(PolicyError::CorruptPlan);
        }
        let (digest, payload) = bytes.split_at(32);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(PolicyError::CorruptPlan);
        }
        let stored: StoredPlan = serde_json::from_slice(payload)
            .map_err(|e| PolicyError::MalformedJson(format!("stored plan: {e}")))?;
        if stored.v != PLAN_FORMAT_VERSION {
            return Err(PolicyError::UnsupportedPlanVersion(stored.v));
        }
        Ok(stored.policy)
    }
}
