//! Object path patterns.
//!
//! Patterns look like `v1/{account}/{container}/employees.json`: an API
//! version prefix, then account, container, and object segments. The
//! `{account}` and `{container}` tokens match any single segment; every
//! other segment is literal text. There is no `{object}` placeholder,
//! policies always name the object they protect.

use serde::{Deserialize, Serialize};

use super::PolicyError;

/// A request path split into its three components. The object component may
/// itself contain `/`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectPath {
    pub account: String,
    pub container: String,
    pub object: String,
}

impl ObjectPath {
    pub fn new(account: &str, container: &str, object: &str) -> Result<Self, PolicyError> {
        if account.is_empty() || container.is_empty() || object.is_empty() {
            return Err(PolicyError::BadObjectPattern {
                pattern: format!("{account}/{container}/{object}"),
                reason: "path segments must be non-empty".into(),
            });
        }
        if account.contains('/') || container.contains('/') {
            return Err(PolicyError::BadObjectPattern {
                pattern: format!("{account}/{container}/{object}"),
                reason: "account and container must be single segments".into(),
            });
        }
        Ok(ObjectPath {
            account: account.to_string(),
            container: container.to_string(),
            object: object.to_string(),
        })
    }

    /// Parses `account/container/object[/more]`, with or without a leading
    /// slash.
    pub fn parse(path: &str) -> Result<Self, PolicyError> {
        let trimmed = path.strip_prefix('/').unwrap_or(path);
        let mut parts = trimmed.splitn(3, '/');
        let account = parts.next().unwrap_or("");
        let container = parts.next().unwrap_or("");
        let object = parts.next().unwrap_or("");
        Self::new(account, container, object)
    }
}

impl std::fmt::Display for ObjectPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.account, self.container, self.object)
    }
}

/// One compiled segment of an object pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternSegment {
    Literal(String),
    AnyAccount,
    AnyContainer,
}

impl PatternSegment {
    fn matches(&self, segment: &str) -> bool {
        match self {
            PatternSegment::Literal(text) => text == segment,
            PatternSegment::AnyAccount | PatternSegment::AnyContainer => true,
        }
    }

    /// Text used when the segment becomes part of a storage key.
    pub fn key_text(&self) -> &str {
        match self {
            PatternSegment::Literal(text) => text,
            PatternSegment::AnyAccount => "{account}",
            PatternSegment::AnyContainer => "{container}",
        }
    }
}

/// A compiled object pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectMatcher {
    pub account: PatternSegment,
    pub container: PatternSegment,
    pub object: PatternSegment,
}

impl ObjectMatcher {
    /// Compiles a pattern of the form `v1/<account>/<container>/<object>`.
    pub fn compile(pattern: &str) -> Result<Self, PolicyError> {
        let bad = |reason: &str| PolicyError::BadObjectPattern {
            pattern: pattern.to_string(),
            reason: reason.to_string(),
        };
        let rest = pattern
            .strip_prefix("v1/")
            .ok_or_else(|| bad("pattern must start with `v1/`"))?;
        let mut parts = rest.splitn(3, '/');
        let account = parts.next().unwrap_or("");
        let container = parts.next().unwrap_or("");
        let object = parts.next().unwrap_or("");
        if account.is_empty() || container.is_empty() || object.is_empty() {
            return Err(bad("pattern needs account, container, and object segments"));
        }
        if object == "{object}" {
            return Err(bad("`{object}` is not a placeholder; name the object"));
        }
        let segment = |text: &str, allow_object: bool| -> Result<PatternSegment, PolicyError> {
            match text {
                "{account}" => Ok(PatternSegment::AnyAccount),
                "{container}" => Ok(PatternSegment::AnyContainer),
                other if other.starts_with('{') && other.ends_with('}') && !allow_object => {
                    Err(bad(&format!("unknown placeholder `{other}`")))
                }
                other => Ok(PatternSegment::Literal(other.to_string())),
            }
        };
        Ok(ObjectMatcher {
            account: segment(account, false)?,
            container: segment(container, false)?,
            object: segment(object, true)?,
        })
    }

    pub fn matches(&self, path: &ObjectPath) -> bool {
        self.account.matches(&path.account)
            && self.container.matches(&path.container)
            && self.object.matches(&path.object)
    }

    /// Normalized text used as the by-object index key.
    pub fn normalized(&self) -> String {
        format!(
            "{}/{}/{}",
            self.account.key_text(),
            self.container.key_text(),
            self.object.key_text()
        )
    }
}

/// Whether `policy`'s pattern covers `path`.
pub fn match_object(matcher: &ObjectMatcher, path: &ObjectPath) -> bool {
    matcher.matches(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_match_any_segment() {
        let m = ObjectMatcher::compile("v1/{account}/{container}/employees.json").unwrap();
        assert!(m.matches(&ObjectPath::parse("/9/c/employees.json").unwrap()));
        assert!(m.matches(&ObjectPath::parse("acct/other/employees.json").unwrap()));
        assert!(!m.matches(&ObjectPath::parse("/9/c/otherfile.json").unwrap()));
    }

    #[test]
    fn literal_segments_match_exactly() {
        let m = ObjectMatcher::compile("v1/9/c/o").unwrap();
        assert!(m.matches(&ObjectPath::parse("/9/c/o").unwrap()));
        assert!(!m.matches(&ObjectPath::parse("/8/c/o").unwrap()));
        assert!(!m.matches(&ObjectPath::parse("/9/d/o").unwrap()));
    }

    #[test]
    fn object_with_slashes_is_literal_matched() {
        let m = ObjectMatcher::compile("v1/a/c/dir/file.json").unwrap();
        assert!(m.matches(&ObjectPath::parse("/a/c/dir/file.json").unwrap()));
        assert!(!m.matches(&ObjectPath::parse("/a/c/dir").unwrap()));
    }

    #[test]
    fn rejects_bad_patterns() {
        assert!(ObjectMatcher::compile("v2/a/c/o").is_err());
        assert!(ObjectMatcher::compile("v1/a/c").is_err());
        assert!(ObjectMatcher::compile("v1/a/c/{object}").is_err());
        assert!(ObjectMatcher::compile("v1/{acct}/c/o").is_err());
        assert!(ObjectMatcher::compile("v1//c/o").is_err());
    }

    #[test]
    fn normalized_key_round_trips_placeholders() {
        let m = ObjectMatcher::compile("v1/{account}/c/o.json").unwrap();
        assert_eq!(m.normalized(), "{account}/c/o.json");
    }

    #[test]
    fn path_parse_validates_shape() {
        assert!(ObjectPath::parse("/a/c").is_err());
        assert!(ObjectPath::parse("//c/o").is_err());
        let p = ObjectPath::parse("/a/c/x/y/z.csv").unwrap();
        assert_eq!(p.object, "x/y/z.csv");
    }
}
