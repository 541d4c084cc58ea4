//! Canned policy documents for the benchmark scenarios and walkthroughs.
//! Each builder returns the JSON text ready for `PUT /v1/policies`.

use serde_json::{json, Map, Value};

/// Chain of `len` inert steps, each subscribed to the scalar at
/// `event_path`. Lets chain-length cost be measured without any
/// transformation happening.
pub fn noop_chain(id: &str, object: &str, len: usize, event_path: &str) -> String {
    assert!(len >= 1, "a chain needs at least one step");
    let mut steps = Map::new();
    for i in 1..=len {
        let next = if i == len { "End".to_string() } else { format!("Step{}", i + 1) };
        steps.insert(
            format!("Step{i}"),
            json!({
                "Id": "NOOP",
                "EventType": {
                    "Type": "JSONPathEvent",
                    "Input": [{"Predicate": event_path}]
                },
                "Next": next
            }),
        );
    }
    json!({
        "Id": id,
        "Object": object,
        "Action": { "StartAt": "Step1", "Steps": Value::Object(steps) }
    })
    .to_string()
}

/// Salary-ledger policy: salary fields are gated to the `treasurer`
/// label, an encrypted sum is appended as `average_salary` and
/// re-encrypted to the caller's token. `key_uri` is the metadata
/// reference of the owner's summation key.
pub fn employees(id: &str, object: &str, key_uri: &str, condition: Option<Value>) -> String {
    let mut doc = json!({
        "Id": id,
        "Object": object,
        "Action": {
            "StartAt": "Step1",
            "Steps": {
                "Step1": {
                    "Id": "CLAC",
                    "EventType": {
                        "Type": "JSONPathMarkerEvent",
                        "Input": [{"Predicate": "$.employee.salary", "olabel": "sensitive"}]
                    },
                    "Input": [{"ulabel": "treasurer", "olabel": "sensitive"}],
                    "Next": "Step2"
                },
                "Step2": {
                    "Id": "SUM",
                    "EventType": {
                        "Type": "JSONPathEvent",
                        "Input": [{"Predicate": "$.employee.salary"}]
                    },
                    "Input": [
                        {"average": true},
                        {"keyOwner": key_uri},
                        {"output": "$.average_salary"}
                    ],
                    "Next": "Step3"
                },
                "Step3": {
                    "Id": "PRE",
                    "EventType": {
                        "Type": "JSONPathEvent",
                        "Input": [{"Predicate": "$.average_salary"}]
                    },
                    "Next": "End"
                }
            }
        }
    });
    if let Some(cond) = condition {
        doc.as_object_mut().unwrap().insert("Condition".to_string(), cond);
    }
    doc.to_string()
}

/// Facility-report policy: per-facility bed counts are folded into one
/// encrypted total, re-encrypted for the caller, and every other facility
/// field is label-gated away. The downloaded view carries only the
/// aggregate.
pub fn covid(id: &str, object: &str, key_uri: &str) -> String {
    json!({
        "Id": id,
        "Object": object,
        "Action": {
            "StartAt": "Step1",
            "Steps": {
                "Step1": {
                    "Id": "SUM",
                    "EventType": {
                        "Type": "JSONPathEvent",
                        "Input": [{"Predicate": "$.facility.pediatric_beds"}]
                    },
                    "Input": [
                        {"average": true},
                        {"keyOwner": key_uri},
                        {"output": "$.pediatric_total"}
                    ],
                    "Next": "Step2"
                },
                "Step2": {
                    "Id": "PRE",
                    "EventType": {
                        "Type": "JSONPathEvent",
                        "Input": [{"Predicate": "$.pediatric_total"}]
                    },
                    "Next": "Step3"
                },
                "Step3": {
                    "Id": "CLAC",
                    "EventType": {
                        "Type": "JSONPathMarkerEvent",
                        "Input": [{"Predicate": "$.facility.*", "olabel": "sensitive"}]
                    },
                    "Input": [{"ulabel": "facility-admin", "olabel": "sensitive"}],
                    "Next": "End"
                }
            }
        }
    })
    .to_string()
}

/// Census-table policy: searchable occupation column filters whole rows
/// against the caller's trapdoor, then the sensitive columns (workclass,
/// marital status, occupation; zero-based 1, 5, 6) are blanked for
/// callers without the right label.
pub fn adult(id: &str, object: &str) -> String {
    json!({
        "Id": id,
        "Object": object,
        "Action": {
            "StartAt": "Step1",
            "Steps": {
                "Step1": {
                    "Id": "SEARCH",
                    "EventType": {
                        "Type": "ColumnEvent",
                        "Input": [{"columns": [6]}]
                    },
                    "Next": "Step2"
                },
                "Step2": {
                    "Id": "CLAC",
                    "EventType": {
                        "Type": "ColumnMarkerEvent",
                        "Input": [{"columns": [1, 5, 6]}, {"olabel": "sensitive"}]
                    },
                    "Input": [{"ulabel": "census-officer", "olabel": "sensitive"}],
                    "Next": "End"
                }
            }
        }
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use objectlens_core::policy::{parse_policy, validate_policy, CompiledPolicy};
    use objectlens_core::stream::registered_event_types;
    use objectlens_core::udf::UdfRegistry;

    fn compile(text: &str) -> CompiledPolicy {
        let doc = parse_policy(text.as_bytes()).unwrap();
        validate_policy(&doc, &UdfRegistry::builtin().names(), &registered_event_types()).unwrap()
    }

    #[test]
    fn builders_emit_valid_policies() {
        let docs = [
            noop_chain("bench.noop", "v1/{account}/{container}/x.json", 1, "$.meta"),
            noop_chain("bench.chain", "v1/{account}/{container}/x.json", 10, "$.meta"),
            employees("hr.sal", "v1/{account}/hr/employees.json", "meta://keys/alice/hom", None),
            covid("uc.covid", "v1/{account}/{container}/covid.json", "meta://keys/owner/hom"),
            adult("uc.adult", "v1/{account}/{container}/adult.csv"),
        ];
        for doc in docs {
            compile(&doc);
        }
    }

    #[test]
    fn chain_length_matches_step_count() {
        let compiled = compile(&noop_chain(
            "bench.chain",
            "v1/{account}/{container}/x.json",
            7,
            "$.meta",
        ));
        assert_eq!(compiled.plan.len(), 7);
    }
}
