//! Semantic validation and plan compilation.

use std::collections::{BTreeMap, BTreeSet};

use super::{
    CompiledEvent, CompiledPolicy, EventSpec, NextStep, ObjectMatcher, ParamValue, PlanStep,
    PolicyDocument, PolicyError,
};
use crate::stream::PathMatcher;

/// Validates a parsed document against the function registry and the set of
/// registered event types, producing a compiled policy whose plan lists the
/// steps in execution order.
///
/// Checks, in order: the object pattern compiles; `StartAt` names a step;
/// the `Next` chain visits each step at most once and ends at `End`
/// (revisits are [`PolicyError::CyclicChain`], dangling targets are
/// [`PolicyError::UnknownStep`]); every step is reachable; every function
/// and event type is registered; event parameters required by the type are
/// present and well-formed.
pub fn validate_policy(
    doc: &PolicyDocument,
    udf_registry: &BTreeSet<String>,
    event_types: &BTreeSet<String>,
) -> Result<CompiledPolicy, PolicyError> {
    let object_matcher = ObjectMatcher::compile(&doc.object)?;

    let mut visited = BTreeSet::new();
    let mut order = Vec::new();
    let mut cursor = doc.start_at.clone();
    loop {
        if !doc.steps.contains_key(&cursor) {
            let from = order
                .last()
                .cloned()
                .unwrap_or_else(|| "StartAt".to_string());
            return Err(PolicyError::UnknownStep { from, to: cursor });
        }
        if !visited.insert(cursor.clone()) {
            return Err(PolicyError::CyclicChain);
        }
        order.push(cursor.clone());
        match &doc.steps[&cursor].next {
            NextStep::End => break,
            NextStep::Step(next) => cursor = next.clone(),
        }
    }
    for step_id in doc.steps.keys() {
        if !visited.contains(step_id) {
            return Err(PolicyError::UnreachableStep(step_id.clone()));
        }
    }

    let mut plan = Vec::with_capacity(order.len());
    for step_id in order {
        let step = &doc.steps[&step_id];
        if !udf_registry.contains(&step.udf_id) {
            return Err(PolicyError::UnknownUdf(step.udf_id.clone()));
        }
        let event = match &step.event {
            Some(spec) => {
                if !event_types.contains(&spec.type_name) {
                    return Err(PolicyError::UnknownEventType(spec.type_name.clone()));
                }
                Some(compile_event(spec)?)
            }
            None => None,
        };
        plan.push(PlanStep {
            step_id,
            udf_id: step.udf_id.clone(),
            event,
            params: step.input.clone(),
        });
    }

    Ok(CompiledPolicy {
        id: doc.id.clone(),
        object_matcher,
        conditions: doc.conditions.clone(),
        plan,
        compiled_at: chrono::Utc::now(),
    })
}

fn compile_event(spec: &EventSpec) -> Result<CompiledEvent, PolicyError> {
    let type_name = spec.type_name.clone();
    let is_marker = type_name.ends_with("MarkerEvent");
    let marker = if is_marker {
        let olabel = find_param(&spec.input, "olabel")
            .ok_or_else(|| PolicyError::MissingEventParam {
                event_type: type_name.clone(),
                param: "olabel".into(),
            })?
            .as_text()
            .ok_or_else(|| PolicyError::InvalidEventParam {
                event_type: type_name.clone(),
                param: "olabel".into(),
                reason: "must be a string".into(),
            })?;
        Some(olabel)
    } else {
        None
    };

    if type_name.starts_with("JSONPath") {
        let predicate = find_param(&spec.input, "Predicate").ok_or_else(|| {
            PolicyError::MissingEventParam {
                event_type: type_name.clone(),
                param: "Predicate".into(),
            }
        })?;
        let expr = match predicate {
            ParamValue::Str(s) => s.clone(),
            _ => {
                return Err(PolicyError::InvalidEventParam {
                    event_type: type_name,
                    param: "Predicate".into(),
                    reason: "must be a string".into(),
                })
            }
        };
        let matcher =
            PathMatcher::compile(&expr).map_err(|_| PolicyError::BadPredicate(expr.clone()))?;
        Ok(CompiledEvent::JsonPath {
            type_name,
            matcher,
            marker,
        })
    } else {
        let raw = find_param(&spec.input, "columns")
            .or_else(|| find_param(&spec.input, "column"))
            .ok_or_else(|| PolicyError::MissingEventParam {
                event_type: type_name.clone(),
                param: "columns".into(),
            })?;
        let ints: Vec<i64> = match raw {
            ParamValue::Int(i) => vec![*i],
            ParamValue::IntList(list) => list.clone(),
            _ => {
                return Err(PolicyError::InvalidEventParam {
                    event_type: type_name,
                    param: "columns".into(),
                    reason: "must be an integer or a list of integers".into(),
                })
            }
        };
        if ints.is_empty() {
            return Err(PolicyError::InvalidEventParam {
                event_type: type_name,
                param: "columns".into(),
                reason: "must not be empty".into(),
            });
        }
        let mut columns = Vec::with_capacity(ints.len());
        for i in ints {
            let col = u32::try_from(i).map_err(|_| PolicyError::InvalidEventParam {
                event_type: type_name.clone(),
                param: "columns".into(),
                reason: format!("column index {i} is out of range"),
            })?;
            columns.push(col);
        }
        columns.sort_unstable();
        columns.dedup();
        Ok(CompiledEvent::Column {
            type_name,
            columns,
            marker,
        })
    }
}

fn find_param<'a>(
    input: &'a [BTreeMap<String, ParamValue>],
    key: &str,
) -> Option<&'a ParamValue> {
    input.iter().find_map(|obj| obj.get(key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;

    fn registry() -> BTreeSet<String> {
        crate::udf::builtin_names()
    }

    fn events() -> BTreeSet<String> {
        crate::stream::registered_event_types()
    }

    fn doc(steps: &str, start: &str) -> PolicyDocument {
        let text = format!(
            r#"{{
              "Id": "p1",
              "Object": "v1/{{account}}/{{container}}/data.json",
              "Condition": {{"StringEquals": {{"ulabel": ["x"]}}}},
              "Action": {{"StartAt": "{start}", "Steps": {{{steps}}}}}
            }}"#
        );
        parse_policy(text.as_bytes()).unwrap()
    }

    fn noop_step(id: &str, next: &str) -> String {
        format!(
            r#""{id}": {{
              "Id": "NOOP",
              "EventType": {{"Type": "JSONPathEvent", "Input": [{{"Predicate": "$.x"}}]}},
              "Next": "{next}"
            }}"#
        )
    }

    #[test]
    fn linearizes_in_chain_order_not_map_order() {
        let steps = format!(
            "{}, {}, {}",
            noop_step("Alpha", "End"),
            noop_step("Mid", "Alpha"),
            noop_step("Zeta", "Mid")
        );
        let compiled = validate_policy(&doc(&steps, "Zeta"), &registry(), &events()).unwrap();
        let ids: Vec<&str> = compiled.plan.iter().map(|s| s.step_id.as_str()).collect();
        assert_eq!(ids, ["Zeta", "Mid", "Alpha"]);
    }

    #[test]
    fn rejects_cycles() {
        let steps = format!("{}, {}", noop_step("S1", "S2"), noop_step("S2", "S1"));
        assert!(matches!(
            validate_policy(&doc(&steps, "S1"), &registry(), &events()),
            Err(PolicyError::CyclicChain)
        ));
    }

    #[test]
    fn rejects_unreachable_steps() {
        let steps = format!("{}, {}", noop_step("S1", "End"), noop_step("Orphan", "End"));
        match validate_policy(&doc(&steps, "S1"), &registry(), &events()) {
            Err(PolicyError::UnreachableStep(s)) => assert_eq!(s, "Orphan"),
            other => panic!("expected UnreachableStep, got {other:?}"),
        }
    }

    #[test]
    fn rejects_dangling_next() {
        let steps = noop_step("S1", "Ghost");
        match validate_policy(&doc(&steps, "S1"), &registry(), &events()) {
            Err(PolicyError::UnknownStep { from, to }) => {
                assert_eq!(from, "S1");
                assert_eq!(to, "Ghost");
            }
            other => panic!("expected UnknownStep, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_udf_and_event_type() {
        let steps = noop_step("S1", "End").replace("NOOP", "FROB");
        assert!(matches!(
            validate_policy(&doc(&steps, "S1"), &registry(), &events()),
            Err(PolicyError::UnknownUdf(_))
        ));
        let steps = noop_step("S1", "End").replace("JSONPathEvent", "XPathEvent");
        assert!(matches!(
            validate_policy(&doc(&steps, "S1"), &registry(), &events()),
            Err(PolicyError::UnknownEventType(_))
        ));
    }

    #[test]
    fn rejects_bad_predicates() {
        for bad in ["", "x", "$x", "$.", "$..a", "$.a[0]", "$.a.", "$["] {
            let steps = noop_step("S1", "End").replace("$.x", bad);
            let got = validate_policy(&doc(&steps, "S1"), &registry(), &events());
            match got {
                Err(PolicyError::BadPredicate(p)) => assert_eq!(p, bad),
                other => panic!("`{bad}`: expected BadPredicate, got {other:?}"),
            }
        }
    }

    #[test]
    fn marker_event_requires_olabel() {
        let steps = noop_step("S1", "End").replace("JSONPathEvent", "JSONPathMarkerEvent");
        assert!(matches!(
            validate_policy(&doc(&steps, "S1"), &registry(), &events()),
            Err(PolicyError::MissingEventParam { .. })
        ));
    }

    #[test]
    fn column_events_compile_and_validate() {
        let steps = r#""S1": {
          "Id": "NOOP",
          "EventType": {"Type": "ColumnMarkerEvent", "Input": [{"columns": [7, 2, 6, 2]}, {"olabel": "sensitive"}]},
          "Next": "End"
        }"#;
        let compiled = validate_policy(&doc(steps, "S1"), &registry(), &events()).unwrap();
        match compiled.plan[0].event.as_ref().unwrap() {
            CompiledEvent::Column {
                columns, marker, ..
            } => {
                assert_eq!(columns, &[2, 6, 7]);
                assert_eq!(marker.as_deref(), Some("sensitive"));
            }
            other => panic!("expected Column event, got {other:?}"),
        }
        let negative = steps.replace("[7, 2, 6, 2]", "[-1]");
        assert!(matches!(
            validate_policy(&doc(&negative, "S1"), &registry(), &events()),
            Err(PolicyError::InvalidEventParam { .. })
        ));
        let missing = steps.replace("{\"columns\": [7, 2, 6, 2]}, ", "");
        assert!(matches!(
            validate_policy(&doc(&missing, "S1"), &registry(), &events()),
            Err(PolicyError::MissingEventParam { .. })
        ));
    }

    #[test]
    fn step_without_event_compiles_inert() {
        let steps = r#""S1": {"Id": "NOOP", "Next": "End"}"#;
        let compiled = validate_policy(&doc(steps, "S1"), &registry(), &events()).unwrap();
        assert_eq!(compiled.plan.len(), 1);
        assert!(compiled.plan[0].event.is_none());
    }

    #[test]
    fn compiled_policy_round_trips_through_bytes() {
        let steps = noop_step("S1", "End");
        let compiled = validate_policy(&doc(&steps, "S1"), &registry(), &events()).unwrap();
        let bytes = compiled.to_bytes();
        let back = CompiledPolicy::from_bytes(&bytes).unwrap();
        assert_eq!(compiled, back);
    }

    #[test]
    fn stored_plan_version_is_checked() {
        use sha2::{Digest, Sha256};
        let steps = noop_step("S1", "End");
        let compiled = validate_policy(&doc(&steps, "S1"), &registry(), &events()).unwrap();
        let bytes = compiled.to_bytes();
        let mut v: serde_json::Value = serde_json::from_slice(&bytes[32..]).unwrap();
        v["v"] = serde_json::json!(99);
        let payload = serde_json::to_vec(&v).unwrap();
        let mut framed = Sha256::digest(&payload).to_vec();
        framed.extend_from_slice(&payload);
        match CompiledPolicy::from_bytes(&framed) {
            Err(PolicyError::UnsupportedPlanVersion(99)) => {}
            other => panic!("expected UnsupportedPlanVersion, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_stored_plan_is_rejected() {
        let steps = noop_step("S1", "End");
        let compiled = validate_policy(&doc(&steps, "S1"), &registry(), &events()).unwrap();
        let good = compiled.to_bytes();
        for i in 0..good.len() {
            let mut bad = good.clone();
            bad[i] ^= 0x5a;
            match CompiledPolicy::from_bytes(&bad) {
                Err(PolicyError::CorruptPlan) => {}
                other => panic!("flip at {i}: expected CorruptPlan, got {other:?}"),
            }
        }
        let mut short = good.clone();
        short.truncate(good.len() / 2);
        assert!(matches!(
            CompiledPolicy::from_bytes(&short),
            Err(PolicyError::CorruptPlan)
        ));
        assert!(matches!(
            CompiledPolicy::from_bytes(&[]),
            Err(PolicyError::CorruptPlan)
        ));
    }
}
