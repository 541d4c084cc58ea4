//! Core engine for a data-protection gateway that sits in front of object
//! storage.
//!
//! Data owners attach declarative JSON policies to stored objects. On every
//! read, the [`engine`] resolves the object's policy, checks its access
//! conditions, and streams the object body through a chain of event-driven
//! functions ([`udf`]) that filter, aggregate, or re-encrypt individual
//! fields while the response is being produced. Readers receive a
//! transformed view; the stored object is never modified.
//!
//! Module map:
//!
//! * [`policy`]: policy document parsing, validation, condition evaluation
//!   and object-pattern matching.
//! * [`stream`]: incremental JSON/CSV tokenizers, path matching, and the
//!   builders that re-serialize a token stream while dispatching events.
//! * [`crypto`]: pairing-based primitives used by the built-in functions
//!   (additively homomorphic encryption, single-hop proxy re-encryption,
//!   multi-user searchable encryption).
//! * [`udf`]: the function trait, verdict types, and the built-in set
//!   (NOOP, CLAC, SUM, PRE, SEARCH).
//! * [`engine`]: metadata store, policy cache, and request enforcement.

pub mod crypto;
pub mod engine;
pub mod policy;
pub mod stream;
pub mod udf;

#[cfg(feature = "testkit")]
pub mod testkit;

pub use engine::{EnforcementRequest, ViewStats};
pub use policy::{CompiledPolicy, PolicyDocument, PolicyError};
pub use stream::{Event, EventVerdict, StreamError, StreamStats};
pub use udf::{Udf, UdfContext, UdfError, UdfRegistry};
