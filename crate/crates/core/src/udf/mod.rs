//! Transformation functions and the registry that names them.
//!
//! A [`Udf`] consumes events from a stream builder subscription and decides
//! per event whether the matched node passes, is replaced, or is dropped;
//! at end of stream it may emit one appended output. Instances are created
//! per request and never shared. The built-in set is `NOOP`, `CLAC`, `SUM`,
//! `PRE`, and `SEARCH`; [`UdfRegistry::register`] is the extension point
//! for embedding applications (dynamic code loading is out of scope).

mod clac;
mod noop;
mod pre;
mod search;
mod sum;

pub use clac::Clac;
pub use noop::Noop;
pub use pre::ReEncrypt;
pub use search::Search;
pub use sum::EncryptedSum;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::crypto::CryptoError;
use crate::policy::ParamValue;
use crate::stream::{Completion, Event, EventObserver, EventVerdict, ObserverError};

#[derive(Debug, Error)]
pub enum UdfError {
    #[error("step provides no (ulabel, olabel) rules")]
    MissingLabelParams,
    #[error("missing required parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` is unusable: {detail}")]
    BadParam { name: String, detail: String },
    #[error("event at byte {position} carries no usable ciphertext: {detail}")]
    MalformedCiphertext { position: u64, detail: String },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Who is asking, as resolved by the engine.
#[derive(Debug, Clone, Default)]
pub struct RequesterInfo {
    pub user_id: String,
    /// The requester's access label, if one is assigned.
    pub ulabel: Option<String>,
}

/// Cryptographic material the client sent with the request.
#[derive(Debug, Clone, Default)]
pub struct RequestArtifacts {
    /// Decoded re-encryption token bytes.
    pub reenc_token: Option<Vec<u8>>,
    /// Decoded search trapdoor bytes.
    pub trapdoor: Option<Vec<u8>>,
    /// Remaining request headers, lowercased names.
    pub headers: BTreeMap<String, String>,
}

/// The current step's parameters, `meta://` references already resolved.
#[derive(Debug, Clone, Default)]
pub struct StepParams {
    params: Vec<BTreeMap<String, ParamValue>>,
}

impl StepParams {
    pub fn new(params: Vec<BTreeMap<String, ParamValue>>) -> Self {
        StepParams { params }
    }

    /// First value bound to `key`, scanning parameter objects in order.
    pub fn get(&self, key: &str) -> Option<&ParamValue> {
        self.params.iter().find_map(|p| p.get(key))
    }

    pub fn get_text(&self, key: &str) -> Option<String> {
        self.get(key).and_then(ParamValue::as_text)
    }

    pub fn get_bytes(&self, key: &str) -> Option<Vec<u8>> {
        match self.get(key) {
            Some(ParamValue::Bytes(b)) => Some(b.clone()),
            Some(ParamValue::Str(s)) => Some(s.clone().into_bytes()),
            _ => None,
        }
    }

    /// All parameter objects, for multi-valued inputs such as rule lists.
    pub fn objects(&self) -> &[BTreeMap<String, ParamValue>] {
        &self.params
    }
}

/// Per-request execution context handed to every `update`/`complete` call
/// of one step.
#[derive(Debug, Clone, Default)]
pub struct UdfContext {
    pub policy_id: String,
    pub requester: RequesterInfo,
    pub artifacts: RequestArtifacts,
    /// Metadata about the object itself (name, format).
    pub object_meta: BTreeMap<String, String>,
    pub step_params: StepParams,
}

/// A transformation function. `update` runs once per subscribed event;
/// `complete` exactly once per stream, after the last token.
pub trait Udf: Send {
    fn name(&self) -> &'static str;

    fn update(&mut self, event: &Event, ctx: &UdfContext) -> Result<EventVerdict, UdfError>;

    fn complete(&mut self, ctx: &UdfContext) -> Result<Option<Completion>, UdfError>;

    /// Whether `update` may return record-scoped drops.
    fn may_drop_records(&self) -> bool {
        false
    }
}

/// Binds a function instance to its request context so stream builders can
/// drive it through the observer interface.
pub struct BoundUdf {
    udf: Box<dyn Udf>,
    ctx: UdfContext,
}

impl BoundUdf {
    pub fn new(udf: Box<dyn Udf>, ctx: UdfContext) -> Self {
        BoundUdf { udf, ctx }
    }

    fn observer_error(&self, err: UdfError) -> ObserverError {
        ObserverError {
            udf_id: self.udf.name().to_string(),
            detail: err.to_string(),
        }
    }
}

impl EventObserver for BoundUdf {
    fn on_event(&mut self, event: &Event) -> Result<EventVerdict, ObserverError> {
        self.udf
            .update(event, &self.ctx)
            .map_err(|e| self.observer_error(e))
    }

    fn on_complete(&mut self) -> Result<Option<Completion>, ObserverError> {
        self.udf
            .complete(&self.ctx)
            .map_err(|e| self.observer_error(e))
    }

    fn may_drop_records(&self) -> bool {
        self.udf.may_drop_records()
    }
}

type Factory = Box<dyn Fn() -> Box<dyn Udf> + Send + Sync>;

/// Name → factory table consulted at policy compile time and at request
/// time. Compiled-in functions are always present; embedders may add more.
pub struct UdfRegistry {
    factories: BTreeMap<String, Factory>,
}

impl UdfRegistry {
    /// The built-in function set.
    pub fn builtin() -> Self {
        let mut r = UdfRegistry {
            factories: BTreeMap::new(),
        };
        r.register("NOOP", || Box::new(Noop));
        r.register("CLAC", || Box::new(Clac));
        r.register("SUM", || Box::<EncryptedSum>::default());
        r.register("PRE", || Box::new(ReEncrypt));
        r.register("SEARCH", || Box::<Search>::default());
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Box<dyn Udf> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.factories.keys().cloned().collect()
    }

    /// Fresh instance for one enforcement session.
    pub fn instantiate(&self, name: &str) -> Option<Box<dyn Udf>> {
        self.factories.get(name).map(|f| f())
    }
}

impl Default for UdfRegistry {
    fn default() -> Self {
        UdfRegistry::builtin()
    }
}

/// Names of the compiled-in functions.
pub fn builtin_names() -> BTreeSet<String> {
    UdfRegistry::builtin().names()
}
