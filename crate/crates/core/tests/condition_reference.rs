//! Condition evaluation vs. an independent clause-by-clause evaluator over
//! randomized condition sets and request contexts.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, TimeZone, Timelike, Utc};
use objectlens_core::policy::{
    evaluate_conditions, CompiledPolicy, CondValue, ConditionClause, ConditionOperator,
    ObjectMatcher, PolicyError, RequestContext,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const OPS: &[ConditionOperator] = &[
    ConditionOperator::StringEquals,
    ConditionOperator::StringNotEquals,
    ConditionOperator::StringLike,
    ConditionOperator::NumericEquals,
    ConditionOperator::NumericLessThan,
    ConditionOperator::NumericLessThanEquals,
    ConditionOperator::NumericGreaterThan,
    ConditionOperator::NumericGreaterThanEquals,
    ConditionOperator::DateEquals,
    ConditionOperator::DateNotEquals,
];

const KEYS: &[&str] = &["k0", "k1", "k2", "Day", "Hour"];

#[derive(Debug, Clone)]
enum RefVal {
    Int(i64),
    Text(String),
}

impl RefVal {
    fn text(&self) -> String {
        match self {
            RefVal::Int(i) => i.to_string(),
            RefVal::Text(t) => t.clone(),
        }
    }

    fn number(&self) -> Option<f64> {
        match self {
            RefVal::Int(i) => Some(*i as f64),
            RefVal::Text(t) => t.trim().parse().ok(),
        }
    }

    fn as_cond_value(&self) -> CondValue {
        match self {
            RefVal::Int(i) => CondValue::Num(*i as f64),
            RefVal::Text(t) => CondValue::Str(t.clone()),
        }
    }
}

#[derive(Debug, Clone)]
struct RefClause {
    op: ConditionOperator,
    key: String,
    values: Vec<RefVal>,
}

fn weekday3(clock: DateTime<Utc>) -> String {
    ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]
        [clock.weekday().num_days_from_monday() as usize]
        .to_string()
}

fn ref_resolve(key: &str, clock: DateTime<Utc>, headers: &BTreeMap<String, String>) -> Option<String> {
    match key {
        "Day" => Some(weekday3(clock)),
        "Hour" => Some(clock.hour().to_string()),
        "Date" => Some(format!(
            "{:04}-{:02}-{:02}",
            clock.year(),
            clock.month(),
            clock.day()
        )),
        other => headers.get(other).cloned(),
    }
}

fn ref_glob(p: &[char], t: &[char]) -> bool {
    match p.first() {
        None => t.is_empty(),
        Some('*') => ref_glob(&p[1..], t) || (!t.is_empty() && ref_glob(p, &t[1..])),
        Some('?') => !t.is_empty() && ref_glob(&p[1..], &t[1..]),
        Some(c) => t.first() == Some(c) && ref_glob(&p[1..], &t[1..]),
    }
}

/// Brute-force single-clause evaluation straight from the documented
/// semantics. `Err(())` stands for an unresolvable key.
fn ref_clause(
    clause: &RefClause,
    clock: DateTime<Utc>,
    headers: &BTreeMap<String, String>,
) -> Result<bool, ()> {
    use ConditionOperator::*;
    let resolved = ref_resolve(&clause.key, clock, headers).ok_or(())?;
    let numeric = |cmp: &dyn Fn(f64, f64) -> bool| -> bool {
        match resolved.trim().parse::<f64>() {
            Ok(lhs) => clause
                .values
                .iter()
                .filter_map(RefVal::number)
                .any(|rhs| cmp(lhs, rhs)),
            Err(_) => false,
        }
    };
    Ok(match clause.op {
        StringEquals | DateEquals => clause.values.iter().any(|v| v.text() == resolved),
        StringNotEquals | DateNotEquals => clause.values.iter().all(|v| v.text() != resolved),
        StringLike => {
            let t: Vec<char> = resolved.chars().collect();
            clause
                .values
                .iter()
                .any(|v| ref_glob(&v.text().chars().collect::<Vec<_>>(), &t))
        }
        NumericEquals => numeric(&|a, b| a == b),
        NumericLessThan => numeric(&|a, b| a < b),
        NumericLessThanEquals => numeric(&|a, b| a <= b),
        NumericGreaterThan => numeric(&|a, b| a > b),
        NumericGreaterThanEquals => numeric(&|a, b| a >= b),
    })
}

fn random_value<R: Rng>(rng: &mut R) -> RefVal {
    match rng.gen_range(0..6) {
        0 => RefVal::Text(rng.gen_range(0..50i64).to_string()),
        1 => RefVal::Text("junk".to_string()),
        2 => RefVal::Text(["*", "1?", "4*", "??", "*7", "Mon"][rng.gen_range(0..6)].to_string()),
        _ => RefVal::Int(rng.gen_range(0..50)),
    }
}

#[test]
fn agrees_with_reference_evaluator_on_10k_contexts() {
    let mut rng = ChaCha20Rng::seed_from_u64(121);
    let matcher = ObjectMatcher::compile("v1/{account}/{container}/x.json").unwrap();

    for trial in 0..10_000 {
        let clauses: Vec<RefClause> = (0..rng.gen_range(1..=3))
            .map(|_| RefClause {
                op: OPS[rng.gen_range(0..OPS.len())],
                key: KEYS[rng.gen_range(0..KEYS.len())].to_string(),
                values: (0..rng.gen_range(1..=3)).map(|_| random_value(&mut rng)).collect(),
            })
            .collect();

        let mut headers = BTreeMap::new();
        for key in ["k0", "k1", "k2"] {
            if rng.gen_bool(0.8) {
                let value = if rng.gen_bool(0.85) {
                    rng.gen_range(0..50i64).to_string()
                } else {
                    "not-a-number".to_string()
                };
                headers.insert(key.to_string(), value);
            }
        }
        let clock = Utc
            .with_ymd_and_hms(2026, 8, rng.gen_range(1..=28), rng.gen_range(0..24), 15, 0)
            .unwrap();

        let policy = CompiledPolicy {
            id: "ref".to_string(),
            object_matcher: matcher.clone(),
            conditions: clauses
                .iter()
                .map(|c| ConditionClause {
                    operator: c.op,
                    key: c.key.clone(),
                    values: c.values.iter().map(RefVal::as_cond_value).collect(),
                })
                .collect(),
            plan: Vec::new(),
            compiled_at: Utc::now(),
        };
        let mut ctx = RequestContext::new(clock);
        ctx.headers = headers.clone();

        // Reference: conjunction, first unresolvable key wins as the error.
        let mut want: Result<bool, ()> = Ok(true);
        for clause in &clauses {
            match ref_clause(clause, clock, &headers) {
                Ok(true) => continue,
                Ok(false) => {
                    want = Ok(false);
                    break;
                }
                Err(()) => {
                    want = Err(());
                    break;
                }
            }
        }

        let got = evaluate_conditions(&policy, &ctx);
        match (&got, &want) {
            (Ok(a), Ok(b)) if a == b => {}
            (Err(PolicyError::UnresolvableKey(_)), Err(())) => {}
            _ => panic!("trial {trial}: got {got:?}, want {want:?}\nclauses: {clauses:?}\nheaders: {headers:?}\nclock: {clock}"),
        }
    }
}
