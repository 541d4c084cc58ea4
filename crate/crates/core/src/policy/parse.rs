//! Syntax-level policy parsing.
//!
//! Field names are case-sensitive and unknown fields are rejected at every
//! level: a misspelled key must fail loudly rather than silently weaken the
//! protection the author intended.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::{
    CondValue, ConditionClause, ConditionOperator, EventSpec, NextStep, ParamValue,
    PolicyDocument, PolicyError, StepSpec,
};

/// Parses policy text into a [`PolicyDocument`]. Structure and types only;
/// chain shape, predicates, and registry membership are checked later by
/// `validate_policy`.
pub fn parse_policy(text: &[u8]) -> Result<PolicyDocument, PolicyError> {
    let root: Value = serde_json::from_slice(text)
        .map_err(|e| PolicyError::MalformedJson(e.to_string()))?;
    let root = as_object(&root, "policy")?;
    check_fields(root, &["Id", "Object", "Condition", "Action"])?;

    let id = req_string(root, "Id")?;
    let object = req_string(root, "Object")?;
    let conditions = match root.get("Condition") {
        Some(block) => parse_conditions(block)?,
        None => Vec::new(),
    };

    let action = as_object(req_field(root, "Action")?, "Action")?;
    check_fields(action, &["StartAt", "Steps"])?;
    let start_at = req_string(action, "StartAt")?;
    let steps_obj = as_object(req_field(action, "Steps")?, "Steps")?;
    if steps_obj.is_empty() {
        return Err(PolicyError::MalformedJson("Steps must not be empty".into()));
    }

    let mut steps = BTreeMap::new();
    for (step_id, body) in steps_obj {
        let body = as_object(body, step_id)?;
        check_fields(body, &["Id", "EventType", "Input", "Next"])?;
        let udf_id = req_string(body, "Id")?;
        let event = body.get("EventType").map(parse_event).transpose()?;
        let input = parse_param_list(body.get("Input"), "Input")?;
        let next = match req_string(body, "Next")?.as_str() {
            "End" => NextStep::End,
            other => NextStep::Step(other.to_string()),
        };
        steps.insert(
            step_id.clone(),
            StepSpec {
                udf_id,
                event,
                input,
                next,
            },
        );
    }

    Ok(PolicyDocument {
        id,
        object,
        conditions,
        start_at,
        steps,
    })
}

fn parse_conditions(value: &Value) -> Result<Vec<ConditionClause>, PolicyError> {
    let map = as_object(value, "Condition")?;
    let mut clauses = Vec::new();
    for (op_name, keys) in map {
        let operator = ConditionOperator::from_name(op_name)
            .ok_or_else(|| PolicyError::UnknownField(op_name.clone()))?;
        let keys = as_object(keys, op_name)?;
        if keys.is_empty() {
            return Err(PolicyError::MalformedJson(format!(
                "operator `{op_name}` has no keys"
            )));
        }
        for (key, values) in keys {
            let values = cond_values(values)?;
            if values.is_empty() {
                return Err(PolicyError::MalformedJson(format!(
                    "condition key `{key}` has an empty value list"
                )));
            }
            clauses.push(ConditionClause {
                operator,
                key: key.clone(),
                values,
            });
        }
    }
    Ok(clauses)
}

fn cond_values(value: &Value) -> Result<Vec<CondValue>, PolicyError> {
    let list: Vec<&Value> = match value {
        Value::Array(items) => items.iter().collect(),
        single => vec![single],
    };
    list.into_iter()
        .map(|v| match v {
            Value::String(s) => Ok(CondValue::Str(s.clone())),
            Value::Number(n) => n
                .as_f64()
                .map(CondValue::Num)
                .ok_or_else(|| PolicyError::MalformedJson(format!("bad number `{n}`"))),
            Value::Bool(b) => Ok(CondValue::Bool(*b)),
            other => Err(PolicyError::MalformedJson(format!(
                "condition values must be scalars, got {other}"
            ))),
        })
        .collect()
}

fn parse_event(value: &Value) -> Result<EventSpec, PolicyError> {
    let map = as_object(value, "EventType")?;
    check_fields(map, &["Type", "Input"])?;
    let type_name = req_string(map, "Type")?;
    let input = parse_param_list(map.get("Input"), "EventType.Input")?;
    Ok(EventSpec { type_name, input })
}

fn parse_param_list(
    value: Option<&Value>,
    what: &str,
) -> Result<Vec<BTreeMap<String, ParamValue>>, PolicyError> {
    let Some(value) = value else {
        return Ok(Vec::new());
    };
    let items = value
        .as_array()
        .ok_or_else(|| PolicyError::MalformedJson(format!("{what} must be a list")))?;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let obj = as_object(item, what)?;
        let mut params = BTreeMap::new();
        for (k, v) in obj {
            params.insert(k.clone(), param_value(k, v)?);
        }
        out.push(params);
    }
    Ok(out)
}

fn param_value(key: &str, value: &Value) -> Result<ParamValue, PolicyError> {
    match value {
        Value::String(s) => Ok(ParamValue::Str(s.clone())),
        Value::Bool(b) => Ok(ParamValue::Bool(*b)),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(ParamValue::Int(i))
            } else {
                n.as_f64().map(ParamValue::Float).ok_or_else(|| {
                    PolicyError::MalformedJson(format!("bad number for `{key}`"))
                })
            }
        }
        Value::Array(items) => {
            let ints = items
                .iter()
                .map(|v| v.as_i64())
                .collect::<Option<Vec<i64>>>()
                .ok_or_else(|| {
                    PolicyError::MalformedJson(format!(
                        "parameter `{key}` lists may contain integers only"
                    ))
                })?;
            Ok(ParamValue::IntList(ints))
        }
        other => Err(PolicyError::MalformedJson(format!(
            "parameter `{key}` has unsupported value {other}"
        ))),
    }
}

fn as_object<'v>(value: &'v Value, what: &str) -> Result<&'v Map<String, Value>, PolicyError> {
    value
        .as_object()
        .ok_or_else(|| PolicyError::MalformedJson(format!("`{what}` must be a JSON object")))
}

fn check_fields(map: &Map<String, Value>, allowed: &[&str]) -> Result<(), PolicyError> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(PolicyError::UnknownField(key.clone()));
        }
    }
    Ok(())
}

fn req_field<'v>(map: &'v Map<String, Value>, name: &str) -> Result<&'v Value, PolicyError> {
    map.get(name)
        .ok_or_else(|| PolicyError::MissingField(name.to_string()))
}

fn req_string(map: &Map<String, Value>, name: &str) -> Result<String, PolicyError> {
    let v = req_field(map, name)?;
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| PolicyError::MalformedJson(format!("`{name}` must be a string")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
          "Id": "policy9000",
          "Object": "v1/{account}/{container}/employees.json",
          "Condition": {
            "StringEquals": {"ulabel": ["treasurer"]},
            "NumericLessThan": {"Hour": [18]}
          },
          "Action": {
            "StartAt": "Filter",
            "Steps": {
              "Filter": {
                "Id": "CLAC",
                "EventType": {
                  "Type": "JSONPathMarkerEvent",
                  "Input": [{"Predicate": "$.employee.salary"}, {"olabel": "sensitive"}]
                },
                "Input": [{"ulabel": "treasurer", "olabel": "sensitive"}],
                "Next": "Add"
              },
              "Add": {
                "Id": "SUM",
                "EventType": {
                  "Type": "JSONPathEvent",
                  "Input": [{"Predicate": "$.employee.salary"}]
                },
                "Input": [{"average": true}, {"keyOwner": "meta://alice/keys/hom"}, {"output": "$.average_salary"}],
                "Next": "End"
              }
            }
          }
        }"#
    }

    #[test]
    fn parses_the_sample_document() {
        let doc = parse_policy(sample().as_bytes()).unwrap();
        assert_eq!(doc.id, "policy9000");
        assert_eq!(doc.object, "v1/{account}/{container}/employees.json");
        assert_eq!(doc.conditions.len(), 2);
        assert_eq!(doc.start_at, "Filter");
        assert_eq!(doc.steps.len(), 2);
        let filter = &doc.steps["Filter"];
        assert_eq!(filter.udf_id, "CLAC");
        let event = filter.event.as_ref().unwrap();
        assert_eq!(event.type_name, "JSONPathMarkerEvent");
        assert_eq!(filter.next, NextStep::Step("Add".into()));
        let add = &doc.steps["Add"];
        assert_eq!(add.next, NextStep::End);
        assert_eq!(
            add.input[1].get("keyOwner"),
            Some(&ParamValue::Str("meta://alice/keys/hom".into()))
        );
        assert_eq!(add.input[0].get("average"), Some(&ParamValue::Bool(true)));
    }

    #[test]
    fn minimal_document_parses_with_empty_conditions() {
        let text = r#"{
          "Id": "tiny",
          "Object": "v1/a/c/o.json",
          "Action": {"StartAt": "S1", "Steps": {"S1": {"Id": "NOOP", "Next": "End"}}}
        }"#;
        let doc = parse_policy(text.as_bytes()).unwrap();
        assert!(doc.conditions.is_empty());
        let step = &doc.steps["S1"];
        assert!(step.event.is_none());
        assert!(step.input.is_empty());
        assert_eq!(step.next, NextStep::End);
    }

    #[test]
    fn rejects_unknown_top_level_field() {
        let text = sample().replacen("\"Object\"", "\"object\"", 1);
        match parse_policy(text.as_bytes()) {
            Err(PolicyError::UnknownField(f)) => assert_eq!(f, "object"),
            other => panic!("expected UnknownField, got {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_action() {
        let doc: serde_json::Value = serde_json::from_str(sample()).unwrap();
        let mut map = doc.as_object().unwrap().clone();
        map.remove("Action");
        let text = serde_json::to_vec(&map).unwrap();
        match parse_policy(&text) {
            Err(PolicyError::MissingField(f)) => assert_eq!(f, "Action"),
            other => panic!("expected MissingField, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_condition_operator() {
        let text = sample().replacen("StringEquals", "StringEqualsIgnoreCase", 1);
        match parse_policy(text.as_bytes()) {
            Err(PolicyError::UnknownField(f)) => assert_eq!(f, "StringEqualsIgnoreCase"),
            other => panic!("expected UnknownField, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_value_list() {
        let text = sample().replacen("[\"treasurer\"]", "[]", 1);
        assert!(matches!(
            parse_policy(text.as_bytes()),
            Err(PolicyError::MalformedJson(_))
        ));
    }

    #[test]
    fn rejects_non_json_text() {
        assert!(matches!(
            parse_policy(b"not json"),
            Err(PolicyError::MalformedJson(_))
        ));
    }

    #[test]
    fn scalar_condition_value_is_accepted_as_singleton() {
        let text = sample().replacen("[\"treasurer\"]", "\"treasurer\"", 1);
        let doc = parse_policy(text.as_bytes()).unwrap();
        let clause = doc
            .conditions
            .iter()
            .find(|c| c.key == "ulabel")
            .unwrap();
        assert_eq!(clause.values, vec![CondValue::Str("treasurer".into())]);
    }

    #[test]
    fn accepted_cycle_is_parse_clean() {
        // A S1 -> S2 -> S1 cycle is fine syntactically; validate rejects it.
        let text = sample()
            .replacen("\"Next\": \"Add\"", "\"Next\": \"Add\"", 1)
            .replacen("\"Next\": \"End\"", "\"Next\": \"Filter\"", 1);
        assert!(parse_policy(text.as_bytes()).is_ok());
    }
}
