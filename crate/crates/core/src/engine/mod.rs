//! Per-request enforcement: policy lookup, condition evaluation, chain
//! assembly, and streaming, plus the metadata service and policy cache the
//! gateway shares across requests.
//!
//! A GET runs three tasks in order: load the policy (cache, then store),
//! build the observable for the object's format, and install one observer
//! per plan step with its `meta://` parameters resolved at request time.
//! Objects without a policy stream through untouched. Every error on the
//! policy path denies access rather than leaking the raw object.

mod cache;
mod store;

pub use cache::PolicyCache;
pub use store::MetadataStore;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::crypto::decode_b64;
use crate::policy::{
    evaluate_conditions, match_object, parse_policy, validate_policy, CompiledPolicy,
    ObjectPath, ParamValue, PolicyError, RequestContext,
};
use crate::stream::{registered_event_types, StreamBuilder, StreamError};
use crate::udf::{
    BoundUdf, RequestArtifacts, RequesterInfo, StepParams, UdfContext, UdfRegistry,
};

/// Request header names the engine understands. Tokens and trapdoors are
/// base64 header values; they are request-scoped and never stored.
pub mod headers {
    /// Bearer token checked by the gateway.
    pub const AUTH_TOKEN: &str = "x-auth-token";
    /// Base64 re-encryption token for PRE steps.
    pub const REENC_TOKEN: &str = "x-reenc-token";
    /// Base64 search trapdoor for SEARCH steps.
    pub const TRAPDOOR: &str = "x-search-trapdoor";
    /// Requester label override, honored only with `allow_label_header`.
    pub const USER_LABEL: &str = "x-user-label";
}

#[derive(Debug, Error)]
pub enum EngineError {
    /// The policy path rejected the request. The reason is for logs, not
    /// for response bodies.
    #[error("access denied")]
    AccessDenied { reason: String },
    #[error("metadata key `{0}` not found")]
    KeyNotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),
}

fn denied(reason: impl Into<String>) -> EngineError {
    EngineError::AccessDenied {
        reason: reason.into(),
    }
}

/// Resolves a `meta://` parameter against the store; non-`meta://` text is
/// returned verbatim. Resolution happens per request, so owners can rotate
/// keys or labels without recompiling policies.
pub fn resolve_meta(uri: &str, store: &MetadataStore) -> Result<Vec<u8>, EngineError> {
    match uri.strip_prefix("meta://") {
        Some(key) => store
            .try_get(key)
            .ok_or_else(|| EngineError::KeyNotFound(key.to_string())),
        None => Ok(uri.as_bytes().to_vec()),
    }
}

/// One object GET, as seen by the engine.
#[derive(Debug, Clone)]
pub struct EnforcementRequest {
    pub path: ObjectPath,
    pub user_id: String,
    /// Header names lowercased.
    pub headers: BTreeMap<String, String>,
    pub clock: DateTime<Utc>,
}

impl EnforcementRequest {
    pub fn new(path: ObjectPath, user_id: &str) -> Self {
        EnforcementRequest {
            path,
            user_id: user_id.to_string(),
            headers: BTreeMap::new(),
            clock: Utc::now(),
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers
            .insert(name.to_ascii_lowercase(), value.to_string());
        self
    }

    pub fn at(mut self, clock: DateTime<Utc>) -> Self {
        self.clock = clock;
        self
    }
}

/// Counters and timing for one served view.
#[derive(Debug, Clone, Default)]
pub struct ViewStats {
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub events_emitted: u64,
    /// Number of chain steps installed (0 for passthrough).
    pub steps_run: usize,
    pub transformed: bool,
    pub policy_id: Option<String>,
    /// Time from stream start to the first byte written to the sink.
    pub ttfb_hint: Option<Duration>,
}

#[derive(Debug)]
enum ViewMode {
    Passthrough,
    Transform(Box<StreamBuilder>),
}

/// A request that passed the policy gate and is ready to stream. Splitting
/// preparation from streaming lets callers emit response status before the
/// first body byte.
#[derive(Debug)]
pub struct PreparedView {
    mode: ViewMode,
    policy_id: Option<String>,
    steps: usize,
}

impl PreparedView {
    pub fn is_transformed(&self) -> bool {
        matches!(self.mode, ViewMode::Transform(_))
    }

    pub fn policy_id(&self) -> Option<&str> {
        self.policy_id.as_deref()
    }

    /// Streams the object through the prepared chain (or untouched).
    pub fn run(
        self,
        source: &mut dyn Read,
        sink: &mut dyn Write,
    ) -> Result<ViewStats, EngineError> {
        let started = Instant::now();
        let mut timed = TimingSink {
            inner: sink,
            started,
            first_write: None,
        };
        match self.mode {
            ViewMode::Passthrough => {
                let copied = std::io::copy(source, &mut timed)?;
                timed.flush()?;
                Ok(ViewStats {
                    bytes_in: copied,
                    bytes_out: copied,
                    events_emitted: 0,
                    steps_run: 0,
                    transformed: false,
                    policy_id: self.policy_id,
                    ttfb_hint: timed.first_write,
                })
            }
            ViewMode::Transform(mut builder) => {
                let stats = builder.run(source, &mut timed)?;
                timed.flush()?;
                Ok(ViewStats {
                    bytes_in: stats.bytes_in,
                    bytes_out: stats.bytes_out,
                    events_emitted: stats.events_emitted,
                    steps_run: self.steps,
                    transformed: true,
                    policy_id: self.policy_id,
                    ttfb_hint: timed.first_write,
                })
            }
        }
    }
}

struct TimingSink<'a> {
    inner: &'a mut dyn Write,
    started: Instant,
    first_write: Option<Duration>,
}

impl Write for TimingSink<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        if self.first_write.is_none() && !buf.is_empty() {
            self.first_write = Some(self.started.elapsed());
        }
        self.inner.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Policies the cache holds; 0 disables caching.
    pub cache_capacity: usize,
    /// Honor the `x-user-label` header instead of the stored label. Test
    /// rigs only; defaults off.
    pub allow_label_header: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            cache_capacity: 128,
            allow_label_header: false,
        }
    }
}

/// Outcome of storing a policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySummary {
    pub id: String,
    pub object_pattern: String,
    /// Function names in execution order.
    pub steps: Vec<String>,
}

/// The enforcement core shared by every request.
pub struct Engine {
    store: Arc<MetadataStore>,
    cache: PolicyCache,
    registry: UdfRegistry,
    config: EngineConfig,
}

impl Engine {
    pub fn new(store: Arc<MetadataStore>, config: EngineConfig) -> Self {
        Engine::with_registry(store, config, UdfRegistry::builtin())
    }

    pub fn with_registry(
        store: Arc<MetadataStore>,
        config: EngineConfig,
        registry: UdfRegistry,
    ) -> Self {
        let cache = PolicyCache::new(config.cache_capacity);
        Engine {
            store,
            cache,
            registry,
            config,
        }
    }

    pub fn store(&self) -> &MetadataStore {
        &self.store
    }

    pub fn cache(&self) -> &PolicyCache {
        &self.cache
    }

    /// Parses, validates, stores, and indexes a policy document. The object
    /// binding is exclusive: a later policy for the same object pattern
    /// replaces the earlier one entirely.
    pub fn put_policy(&self, text: &[u8]) -> Result<PolicySummary, EngineError> {
        let doc = parse_policy(text)?;
        if doc.id.contains('/') || doc.id == "by-object" {
            return Err(EngineError::BadRequest(format!(
                "policy id `{}` may not contain `/` or shadow the index",
                doc.id
            )));
        }
        let compiled = validate_policy(&doc, &self.registry.names(), &registered_event_types())?;
        let index_key = format!("policies/by-object/{}", compiled.object_matcher.normalized());

        // Replace any policy previously bound to this object.
        if let Some(old) = self.store.try_get(&index_key) {
            let old_id = String::from_utf8_lossy(&old).to_string();
            if old_id != compiled.id {
                self.store.delete(&format!("policies/{old_id}"));
                self.store.delete(&format!("policies/{old_id}/source"));
                self.cache.invalidate(&old_id);
            }
        }
        // Drop stale bindings if this id moves to a different object.
        for key in self.store.keys_with_prefix("policies/by-object/") {
            if key != index_key
                && self.store.try_get(&key).as_deref() == Some(compiled.id.as_bytes())
            {
                self.store.delete(&key);
            }
        }

        self.store
            .put(&format!("policies/{}", compiled.id), compiled.to_bytes());
        self.store
            .put(&format!("policies/{}/source", compiled.id), text.to_vec());
        self.store.put(&index_key, compiled.id.clone().into_bytes());
        self.cache.invalidate(&compiled.id);

        Ok(PolicySummary {
            id: compiled.id.clone(),
            object_pattern: doc.object.clone(),
            steps: compiled.plan.iter().map(|s| s.udf_id.clone()).collect(),
        })
    }

    /// The policy's original JSON, as uploaded.
    pub fn get_policy_source(&self, id: &str) -> Result<Vec<u8>, EngineError> {
        self.store
            .try_get(&format!("policies/{id}/source"))
            .ok_or_else(|| EngineError::KeyNotFound(format!("policies/{id}")))
    }

    pub fn delete_policy(&self, id: &str) -> Result<(), EngineError> {
        if !self.store.delete(&format!("policies/{id}")) {
            return Err(EngineError::KeyNotFound(format!("policies/{id}")));
        }
        self.store.delete(&format!("policies/{id}/source"));
        for key in self.store.keys_with_prefix("policies/by-object/") {
            if self.store.try_get(&key).as_deref() == Some(id.as_bytes()) {
                self.store.delete(&key);
            }
        }
        self.cache.invalidate(id);
        Ok(())
    }

    pub fn list_policies(&self) -> Vec<String> {
        self.store
            .keys_with_prefix("policies/")
            .into_iter()
            .filter_map(|k| {
                let rest = k.strip_prefix("policies/")?;
                if rest.contains('/') {
                    return None;
                }
                Some(rest.to_string())
            })
            .collect()
    }

    /// Index candidates for a path, most specific first: exact, literal
    /// account with any container, literal container with any account,
    /// fully generic.
    fn index_candidates(path: &ObjectPath) -> [String; 4] {
        let ObjectPath {
            account,
            container,
            object,
        } = path;
        [
            format!("policies/by-object/{account}/{container}/{object}"),
            format!("policies/by-object/{account}/{{container}}/{object}"),
            format!("policies/by-object/{{account}}/{container}/{object}"),
            format!("policies/by-object/{{account}}/{{container}}/{object}"),
        ]
    }

    fn find_policy_id(&self, path: &ObjectPath) -> Option<String> {
        for key in Self::index_candidates(path) {
            if let Some(id) = self.store.try_get(&key) {
                return Some(String::from_utf8_lossy(&id).to_string());
            }
        }
        None
    }

    fn load_policy(&self, id: &str) -> Result<Arc<CompiledPolicy>, EngineError> {
        self.cache.lookup(id, || {
            let bytes = self
                .store
                .try_get(&format!("policies/{id}"))
                .ok_or_else(|| denied(format!("policy `{id}` is indexed but missing")))?;
            CompiledPolicy::from_bytes(&bytes).map_err(EngineError::Policy)
        })
    }

    fn requester_label(&self, req: &EnforcementRequest) -> Option<String> {
        if self.config.allow_label_header {
            if let Some(label) = req.headers.get(headers::USER_LABEL) {
                return Some(label.clone());
            }
        }
        self.store
            .try_get(&format!("labels/{}", req.user_id))
            .and_then(|b| String::from_utf8(b).ok())
    }

    fn decode_artifact(
        headers: &BTreeMap<String, String>,
        name: &str,
    ) -> Result<Option<Vec<u8>>, EngineError> {
        match headers.get(name) {
            None => Ok(None),
            Some(text) => decode_b64(text)
                .map(Some)
                .map_err(|e| EngineError::BadRequest(format!("header `{name}`: {e}"))),
        }
    }

    /// Resolves one step's parameters, fetching `meta://` values.
    fn resolve_params(
        &self,
        params: &[BTreeMap<String, ParamValue>],
    ) -> Result<Vec<BTreeMap<String, ParamValue>>, EngineError> {
        let mut out = Vec::with_capacity(params.len());
        for obj in params {
            let mut resolved = BTreeMap::new();
            for (k, v) in obj {
                let v = match v {
                    ParamValue::Str(s) if s.starts_with("meta://") => {
                        ParamValue::Bytes(resolve_meta(s, &self.store)?)
                    }
                    other => other.clone(),
                };
                resolved.insert(k.clone(), v);
            }
            out.push(resolved);
        }
        Ok(out)
    }

    /// Runs the policy gate for a GET and assembles the transformation
    /// chain. All policy-path failures deny access; only requests for
    /// unprotected objects pass through raw.
    pub fn prepare(&self, req: &EnforcementRequest) -> Result<PreparedView, EngineError> {
        let Some(policy_id) = self.find_policy_id(&req.path) else {
            return Ok(PreparedView {
                mode: ViewMode::Passthrough,
                policy_id: None,
                steps: 0,
            });
        };
        let policy = self.load_policy(&policy_id)?;

        if !match_object(&policy.object_matcher, &req.path) {
            return Err(denied(format!(
                "policy `{policy_id}` is bound to this object but does not match it"
            )));
        }

        let mut ctx = RequestContext::new(req.clock);
        ctx.headers = req.headers.clone();
        ctx.attributes
            .insert("user".to_string(), req.user_id.clone());
        ctx.attributes
            .insert("account".to_string(), req.path.account.clone());
        ctx.attributes
            .insert("container".to_string(), req.path.container.clone());
        ctx.attributes
            .insert("object".to_string(), req.path.object.clone());
        let label = self.requester_label(req);
        if let Some(l) = &label {
            ctx.attributes.insert("ulabel".to_string(), l.clone());
        }
        match evaluate_conditions(&policy, &ctx) {
            Ok(true) => {}
            Ok(false) => return Err(denied("policy conditions are not satisfied")),
            Err(PolicyError::UnresolvableKey(k)) => {
                return Err(denied(format!("condition key `{k}` is unresolvable")))
            }
            Err(e) => return Err(EngineError::Policy(e)),
        }

        let mut builder = match StreamBuilder::for_object_name(&req.path.object) {
            Ok(b) => b,
            Err(StreamError::UnsupportedFormat(f)) => {
                return Err(denied(format!(
                    "object format `{f}` has no stream builder but a policy applies"
                )))
            }
            Err(e) => return Err(EngineError::Stream(e)),
        };

        let artifacts = RequestArtifacts {
            reenc_token: Self::decode_artifact(&req.headers, headers::REENC_TOKEN)?,
            trapdoor: Self::decode_artifact(&req.headers, headers::TRAPDOOR)?,
            headers: req.headers.clone(),
        };
        let requester = RequesterInfo {
            user_id: req.user_id.clone(),
            ulabel: label,
        };
        let mut object_meta = BTreeMap::new();
        object_meta.insert("name".to_string(), req.path.object.clone());
        object_meta.insert("account".to_string(), req.path.account.clone());
        object_meta.insert("container".to_string(), req.path.container.clone());

        let steps = policy.plan.len();
        for step in &policy.plan {
            let Some(event) = &step.event else {
                continue;
            };
            let udf = self
                .registry
                .instantiate(&step.udf_id)
                .ok_or_else(|| denied(format!("function `{}` is not registered", step.udf_id)))?;
            let params = self
                .resolve_params(&step.params)
                .map_err(|e| match e {
                    EngineError::KeyNotFound(k) => {
                        denied(format!("parameter key `{k}` is missing from the store"))
                    }
                    other => other,
                })?;
            let udf_ctx = UdfContext {
                policy_id: policy_id.clone(),
                requester: requester.clone(),
                artifacts: artifacts.clone(),
                object_meta: object_meta.clone(),
                step_params: StepParams::new(params),
            };
            builder
                .install(event, Box::new(BoundUdf::new(udf, udf_ctx)))
                .map_err(|e| denied(format!("cannot subscribe step `{}`: {e}", step.step_id)))?;
        }

        Ok(PreparedView {
            mode: ViewMode::Transform(Box::new(builder)),
            policy_id: Some(policy_id),
            steps,
        })
    }

    /// `prepare` + `run` in one call.
    pub fn enforce_get(
        &self,
        req: &EnforcementRequest,
        source: &mut dyn Read,
        sink: &mut dyn Write,
    ) -> Result<ViewStats, EngineError> {
        self.prepare(req)?.run(source, sink)
    }
}

#[cfg(test)]
mod tests;
