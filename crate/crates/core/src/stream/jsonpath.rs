//! A small JSONPath subset for member subscriptions.
//!
//! Grammar: `$` alone, or `$` followed by `.name` and `.*` steps, e.g.
//! `$.employee.salary` or `$.employee.*`. `$` matches exactly the root
//! value. A dotted path matches the object-member values whose key stack
//! equals the steps; `*` stands for any single key. Array indices are
//! transparent: elements contribute no step, so members of objects inside
//! an array under key `a` still sit at `$.a.<member>`. Bracket syntax,
//! recursive descent, and filters are out of scope.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("bad path expression `{0}`")]
pub struct PathError(pub String);

/// One step of a compiled path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathStep {
    Key(String),
    Wild,
}

impl PathStep {
    fn matches(&self, key: &str) -> bool {
        match self {
            PathStep::Key(k) => k == key,
            PathStep::Wild => true,
        }
    }
}

/// A compiled path expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathMatcher {
    source: String,
    steps: Vec<PathStep>,
}

impl PathMatcher {
    pub fn compile(expr: &str) -> Result<Self, PathError> {
        let err = || PathError(expr.to_string());
        let rest = expr.strip_prefix('$').ok_or_else(err)?;
        let mut steps = Vec::new();
        if !rest.is_empty() {
            if !rest.starts_with('.') {
                return Err(err());
            }
            for part in rest[1..].split('.') {
                if part.is_empty() {
                    return Err(err());
                }
                if part == "*" {
                    steps.push(PathStep::Wild);
                } else if part.contains('*') || part.contains('$') || part.contains('[') {
                    return Err(err());
                } else {
                    steps.push(PathStep::Key(part.to_string()));
                }
            }
        }
        Ok(PathMatcher {
            source: expr.to_string(),
            steps,
        })
    }

    /// Whether the expression matches a node at `path` (member key stack).
    pub fn matches(&self, path: &[String]) -> bool {
        self.steps.len() == path.len()
            && self.steps.iter().zip(path).all(|(s, k)| s.matches(k))
    }

    /// True for the bare `$` expression.
    pub fn is_root(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.steps
    }
}
