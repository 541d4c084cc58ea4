//! Condition evaluation.
//!
//! All clauses must hold (conjunction). Within a clause the value list is a
//! disjunction for the positive operators (`StringEquals` holds when the
//! resolved value equals any listed value) and a conjunction of exclusions
//! for the negative ones (`DateNotEquals` holds only when the resolved
//! value is absent from the list).
//!
//! Key resolution order: the built-in clock keys `Day` (three-letter UTC
//! weekday), `Hour` (UTC hour, 0-23) and `Date` (UTC `YYYY-MM-DD`) win,
//! then request headers, then requester attributes. Unknown keys raise
//! [`PolicyError::UnresolvableKey`]; callers treat that as a denial.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Timelike, Utc};

use super::{CompiledPolicy, ConditionClause, ConditionOperator, PolicyError};

/// The request-side facts conditions are evaluated against.
#[derive(Debug, Clone)]
pub struct RequestContext {
    pub clock: DateTime<Utc>,
    pub headers: BTreeMap<String, String>,
    pub attributes: BTreeMap<String, String>,
}

impl RequestContext {
    pub fn new(clock: DateTime<Utc>) -> Self {
        RequestContext {
            clock,
            headers: BTreeMap::new(),
            attributes: BTreeMap::new(),
        }
    }

    fn resolve(&self, key: &str) -> Result<String, PolicyError> {
        match key {
            "Day" => Ok(weekday_name(self.clock)),
            "Hour" => Ok(self.clock.hour().to_string()),
            "Date" => Ok(self.clock.format("%Y-%m-%d").to_string()),
            _ => self
                .headers
                .get(key)
                .or_else(|| self.attributes.get(key))
                .cloned()
                .ok_or_else(|| PolicyError::UnresolvableKey(key.to_string())),
        }
    }
}

fn weekday_name(clock: DateTime<Utc>) -> String {
    match clock.weekday() {
        chrono::Weekday::Mon => "Mon",
        chrono::Weekday::Tue => "Tue",
        chrono::Weekday::Wed => "Wed",
        chrono::Weekday::Thu => "Thu",
        chrono::Weekday::Fri => "Fri",
        chrono::Weekday::Sat => "Sat",
        chrono::Weekday::Sun => "Sun",
    }
    .to_string()
}

/// Evaluates every clause of `policy` against `ctx`. True only when all
/// clauses hold.
pub fn evaluate_conditions(
    policy: &CompiledPolicy,
    ctx: &RequestContext,
) -> Result<bool, PolicyError> {
    for clause in &policy.conditions {
        if !evaluate_clause(clause, ctx)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn evaluate_clause(clause: &ConditionClause, ctx: &RequestContext) -> Result<bool, PolicyError> {
    use ConditionOperator::*;
    let resolved = ctx.resolve(&clause.key)?;
    let held = match clause.operator {
        StringEquals | DateEquals => clause.values.iter().any(|v| v.as_text() == resolved),
        StringNotEquals | DateNotEquals => {
            clause.values.iter().all(|v| v.as_text() != resolved)
        }
        StringLike => clause.values.iter().any(|v| glob_match(&v.as_text(), &resolved)),
        NumericEquals => numeric(&resolved, clause, |a, b| a == b),
        NumericLessThan => numeric(&resolved, clause, |a, b| a < b),
        NumericLessThanEquals => numeric(&resolved, clause, |a, b| a <= b),
        NumericGreaterThan => numeric(&resolved, clause, |a, b| a > b),
        NumericGreaterThanEquals => numeric(&resolved, clause, |a, b| a >= b),
    };
    Ok(held)
}

/// Numeric comparison against any listed value. A resolved value or listed
/// value without a numeric form makes the comparison false rather than
/// erroring: a malformed number must never widen access.
fn numeric(resolved: &str, clause: &ConditionClause, cmp: impl Fn(f64, f64) -> bool) -> bool {
    let Ok(lhs) = resolved.trim().parse::<f64>() else {
        return false;
    };
    clause
        .values
        .iter()
        .filter_map(|v| v.as_number())
        .any(|rhs| cmp(lhs, rhs))
}

/// Glob matching with `*` (any run, including empty) and `?` (exactly one
/// character). Iterative two-pointer form with backtracking to the most
/// recent `*`.
fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0usize, 0usize);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}
