use std::io::Cursor;
use std::sync::Arc;

use chrono::TimeZone;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::crypto::{
    encode_b64, hom_decrypt, hom_encrypt, hom_keygen, pre_token, HomKeyPair, HomCiphertext,
    DEFAULT_PLAINTEXT_BOUND,
};

fn weekday() -> DateTime<Utc> {
    // 2026-08-17 is a Monday.
    Utc.with_ymd_and_hms(2026, 8, 17, 10, 0, 0).unwrap()
}

fn saturday() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 8, 22, 10, 0, 0).unwrap()
}

fn engine_with_capacity(capacity: usize) -> Engine {
    let config = EngineConfig {
        cache_capacity: capacity,
        ..EngineConfig::default()
    };
    Engine::new(Arc::new(MetadataStore::new()), config)
}

fn employee_policy() -> &'static str {
    r#"{
      "Id": "employee.policy",
      "Object": "v1/{account}/{container}/employees.json",
      "Condition": { "DateNotEquals": { "Day": ["Sat", "Sun"] } },
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
            "Input": [{"average": true},
                      {"keyOwner": "meta://keys/alice/hom"},
                      {"output": "$.average_salary"}],
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
    }"#
}

fn noop_policy(id: &str, object: &str) -> String {
    format!(
        r#"{{
          "Id": "{id}",
          "Object": "{object}",
          "Action": {{
            "StartAt": "S",
            "Steps": {{
              "S": {{
                "Id": "NOOP",
                "EventType": {{"Type": "JSONPathEvent", "Input": [{{"Predicate": "$.x"}}]}},
                "Next": "End"
              }}
            }}
          }}
        }}"#
    )
}

fn employee_doc(owner: &HomKeyPair, rng: &mut ChaCha20Rng, salaries: &[u64]) -> String {
    let rows: Vec<String> = salaries
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let ct = hom_encrypt(&owner.pk, *s, DEFAULT_PLAINTEXT_BOUND, rng).unwrap();
            format!(
                r#"{{"name":"emp{i}","dept":"X","salary":"{}"}}"#,
                encode_b64(&ct.to_bytes())
            )
        })
        .collect();
    format!(r#"{{"employee":[{}]}}"#, rows.join(","))
}

fn get(
    engine: &Engine,
    user: &str,
    clock: DateTime<Utc>,
    doc: &str,
    extra: &[(&str, String)],
) -> Result<(Vec<u8>, ViewStats), EngineError> {
    let path = ObjectPath::new("acct", "hr", "employees.json").unwrap();
    let mut req = EnforcementRequest::new(path, user).at(clock);
    for (name, value) in extra {
        req = req.with_header(name, value);
    }
    let mut out = Vec::new();
    let stats = engine.enforce_get(&req, &mut Cursor::new(doc.as_bytes()), &mut out)?;
    Ok((out, stats))
}

struct EmployeeRig {
    engine: Engine,
    owner: HomKeyPair,
    reader: HomKeyPair,
    doc: String,
}

fn employee_rig() -> EmployeeRig {
    let mut rng = ChaCha20Rng::seed_from_u64(71);
    let owner = hom_keygen(&mut rng);
    let reader = hom_keygen(&mut rng);
    let engine = engine_with_capacity(128);
    engine.put_policy(employee_policy().as_bytes()).unwrap();
    engine
        .store()
        .put("keys/alice/hom", owner.pk.to_bytes());
    engine.store().put("labels/bob", b"treasurer".to_vec());
    let doc = employee_doc(&owner, &mut rng, &[1000, 2000, 3000]);
    EmployeeRig {
        engine,
        owner,
        reader,
        doc,
    }
}

#[test]
fn policy_crud_round_trip() {
    let engine = engine_with_capacity(8);
    let text = noop_policy("p1", "v1/a/c/data.json");
    let summary = engine.put_policy(text.as_bytes()).unwrap();
    assert_eq!(summary.id, "p1");
    assert_eq!(summary.object_pattern, "v1/a/c/data.json");
    assert_eq!(summary.steps, vec!["NOOP".to_string()]);

    assert_eq!(engine.get_policy_source("p1").unwrap(), text.as_bytes());
    assert_eq!(engine.list_policies(), vec!["p1".to_string()]);

    engine.delete_policy("p1").unwrap();
    assert!(engine.list_policies().is_empty());
    assert!(matches!(
        engine.get_policy_source("p1"),
        Err(EngineError::KeyNotFound(_))
    ));
    assert!(matches!(
        engine.delete_policy("p1"),
        Err(EngineError::KeyNotFound(_))
    ));
}

#[test]
fn second_policy_for_same_object_replaces_first() {
    let engine = engine_with_capacity(8);
    engine
        .put_policy(noop_policy("first", "v1/a/c/data.json").as_bytes())
        .unwrap();
    engine
        .put_policy(noop_policy("second", "v1/a/c/data.json").as_bytes())
        .unwrap();
    assert_eq!(engine.list_policies(), vec!["second".to_string()]);

    let path = ObjectPath::new("a", "c", "data.json").unwrap();
    let req = EnforcementRequest::new(path, "any");
    let prepared = engine.prepare(&req).unwrap();
    assert_eq!(prepared.policy_id(), Some("second"));
}

#[test]
fn reusing_an_id_moves_its_binding() {
    let engine = engine_with_capacity(8);
    engine
        .put_policy(noop_policy("p", "v1/a/c/one.json").as_bytes())
        .unwrap();
    engine
        .put_policy(noop_policy("p", "v1/a/c/two.json").as_bytes())
        .unwrap();

    let one = EnforcementRequest::new(ObjectPath::new("a", "c", "one.json").unwrap(), "u");
    assert!(!engine.prepare(&one).unwrap().is_transformed());
    let two = EnforcementRequest::new(ObjectPath::new("a", "c", "two.json").unwrap(), "u");
    assert!(engine.prepare(&two).unwrap().is_transformed());
}

#[test]
fn bad_policy_ids_rejected() {
    let engine = engine_with_capacity(8);
    assert!(matches!(
        engine.put_policy(noop_policy("a/b", "v1/a/c/o.json").as_bytes()),
        Err(EngineError::BadRequest(_))
    ));
    assert!(matches!(
        engine.put_policy(noop_policy("by-object", "v1/a/c/o.json").as_bytes()),
        Err(EngineError::BadRequest(_))
    ));
}

#[test]
fn unprotected_object_passes_through_raw() {
    let engine = engine_with_capacity(8);
    let path = ObjectPath::new("acct", "images", "rose.jpg").unwrap();
    let req = EnforcementRequest::new(path, "anyone");
    let raw = b"\xff\xd8 not even json".to_vec();
    let mut out = Vec::new();
    let stats = engine
        .enforce_get(&req, &mut Cursor::new(raw.clone()), &mut out)
        .unwrap();
    assert_eq!(out, raw);
    assert!(!stats.transformed);
    assert_eq!(stats.bytes_in, raw.len() as u64);
    assert_eq!(stats.bytes_out, raw.len() as u64);
    assert_eq!(stats.steps_run, 0);
    assert!(stats.policy_id.is_none());
    assert!(stats.ttfb_hint.is_some());
}

#[test]
fn weekend_requests_are_denied() {
    let rig = employee_rig();
    let err = get(&rig.engine, "bob", saturday(), &rig.doc, &[]).unwrap_err();
    assert!(matches!(err, EngineError::AccessDenied { .. }));
}

#[test]
fn regular_user_view_lacks_salaries_and_average() {
    let rig = employee_rig();
    let (out, stats) = get(&rig.engine, "carol", weekday(), &rig.doc, &[]).unwrap();
    let view: serde_json::Value = serde_json::from_slice(&out).unwrap();

    let employees = view["employee"].as_array().unwrap();
    assert_eq!(employees.len(), 3);
    for (i, e) in employees.iter().enumerate() {
        assert_eq!(e["name"], format!("emp{i}"));
        assert_eq!(e["dept"], "X");
        assert!(e.get("salary").is_none(), "salary leaked: {e}");
    }
    assert!(view.get("average_salary").is_none());
    assert!(stats.transformed);
    assert_eq!(stats.steps_run, 3);
    assert_eq!(stats.policy_id.as_deref(), Some("employee.policy"));
    assert_eq!(stats.bytes_out, out.len() as u64);
}

#[test]
fn treasurer_view_carries_reencrypted_average() {
    let rig = employee_rig();
    let token = pre_token(&rig.owner.sk, &rig.reader.pk).unwrap();
    let headers = vec![(headers::REENC_TOKEN, encode_b64(&token.to_bytes()))];
    let (out, _) = get(&rig.engine, "bob", weekday(), &rig.doc, &headers).unwrap();
    let view: serde_json::Value = serde_json::from_slice(&out).unwrap();

    for e in view["employee"].as_array().unwrap() {
        assert!(e.get("salary").is_none(), "salary leaked: {e}");
    }
    let avg = &view["average_salary"];
    assert_eq!(avg["count"], 3);
    let sum_bytes = crate::crypto::decode_b64(avg["sum"].as_str().unwrap()).unwrap();
    let sum = HomCiphertext::from_bytes(&sum_bytes).unwrap();
    let total = hom_decrypt(&rig.reader.sk, &sum, DEFAULT_PLAINTEXT_BOUND).unwrap();
    assert_eq!(total, 6000);
    assert_eq!(total / avg["count"].as_u64().unwrap(), 2000);
}

#[test]
fn treasurer_without_token_loses_the_average() {
    let rig = employee_rig();
    let (out, _) = get(&rig.engine, "bob", weekday(), &rig.doc, &[]).unwrap();
    let view: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert!(view.get("average_salary").is_none());
    for e in view["employee"].as_array().unwrap() {
        assert!(e.get("salary").is_none());
    }
}

#[test]
fn events_counted_per_chain_entry() {
    let rig = employee_rig();
    let (_, stats) = get(&rig.engine, "bob", weekday(), &rig.doc, &[]).unwrap();
    // 3 salary events enter the chain, plus the appended average event.
    assert_eq!(stats.events_emitted, 4);
}

#[test]
fn unsupported_format_with_policy_is_denied() {
    let engine = engine_with_capacity(8);
    engine
        .put_policy(noop_policy("p", "v1/a/c/data.bin").as_bytes())
        .unwrap();
    let req = EnforcementRequest::new(ObjectPath::new("a", "c", "data.bin").unwrap(), "u");
    let err = engine.prepare(&req).unwrap_err();
    assert!(matches!(err, EngineError::AccessDenied { .. }));
}

#[test]
fn missing_meta_key_is_denied() {
    let rig = employee_rig();
    rig.engine.store().delete("keys/alice/hom");
    let err = get(&rig.engine, "carol", weekday(), &rig.doc, &[]).unwrap_err();
    match err {
        EngineError::AccessDenied { reason } => {
            assert!(reason.contains("keys/alice/hom"), "{reason}")
        }
        other => panic!("expected denial, got {other:?}"),
    }
}

#[test]
fn incompatible_event_type_is_denied() {
    let engine = engine_with_capacity(8);
    let policy = r#"{
      "Id": "cols",
      "Object": "v1/a/c/data.json",
      "Action": {
        "StartAt": "S",
        "Steps": {
          "S": {
            "Id": "NOOP",
            "EventType": {"Type": "ColumnEvent", "Input": [{"column": 1}]},
            "Next": "End"
          }
        }
      }
    }"#;
    engine.put_policy(policy.as_bytes()).unwrap();
    let req = EnforcementRequest::new(ObjectPath::new("a", "c", "data.json").unwrap(), "u");
    assert!(matches!(
        engine.prepare(&req),
        Err(EngineError::AccessDenied { .. })
    ));
}

#[test]
fn exact_binding_outranks_wildcards() {
    let engine = engine_with_capacity(8);
    engine
        .put_policy(noop_policy("wild", "v1/{account}/{container}/data.json").as_bytes())
        .unwrap();
    engine
        .put_policy(noop_policy("exact", "v1/a/c/data.json").as_bytes())
        .unwrap();

    let here = EnforcementRequest::new(ObjectPath::new("a", "c", "data.json").unwrap(), "u");
    assert_eq!(engine.prepare(&here).unwrap().policy_id(), Some("exact"));
    let elsewhere =
        EnforcementRequest::new(ObjectPath::new("z", "c", "data.json").unwrap(), "u");
    assert_eq!(engine.prepare(&elsewhere).unwrap().policy_id(), Some("wild"));
}

#[test]
fn cache_capacity_does_not_change_views() {
    let doc = r#"{"x": 3, "y": [1, 2], "z": "keep"}"#;
    let mut outputs = Vec::new();
    for capacity in [0usize, 128] {
        let engine = engine_with_capacity(capacity);
        engine
            .put_policy(noop_policy("p", "v1/a/c/data.json").as_bytes())
            .unwrap();
        let req = EnforcementRequest::new(ObjectPath::new("a", "c", "data.json").unwrap(), "u");
        for _ in 0..3 {
            let mut out = Vec::new();
            engine
                .enforce_get(&req, &mut Cursor::new(doc.as_bytes()), &mut out)
                .unwrap();
            outputs.push(out);
        }
    }
    for o in &outputs[1..] {
        assert_eq!(o, &outputs[0]);
    }
}

#[test]
fn warm_cache_skips_the_store() {
    let engine = engine_with_capacity(8);
    engine
        .put_policy(noop_policy("p", "v1/a/c/data.json").as_bytes())
        .unwrap();
    let req = EnforcementRequest::new(ObjectPath::new("a", "c", "data.json").unwrap(), "u");
    let doc = r#"{"x": 1}"#;

    let mut out = Vec::new();
    engine
        .enforce_get(&req, &mut Cursor::new(doc.as_bytes()), &mut out)
        .unwrap();

    // Corrupt the stored plan; the cached policy must keep serving.
    engine.store().put("policies/p", b"garbage".to_vec());
    let mut out2 = Vec::new();
    engine
        .enforce_get(&req, &mut Cursor::new(doc.as_bytes()), &mut out2)
        .unwrap();
    assert_eq!(out, out2);

    // After invalidation the corrupt plan surfaces as an error, not raw data.
    engine.cache().invalidate("p");
    let mut out3 = Vec::new();
    let err = engine
        .enforce_get(&req, &mut Cursor::new(doc.as_bytes()), &mut out3)
        .unwrap_err();
    assert!(matches!(err, EngineError::Policy(_)));
    assert!(out3.is_empty());
}

#[test]
fn label_header_needs_test_mode() {
    // A CLAC-only policy makes the label override's effect visible.
    let policy = r#"{
      "Id": "clac.only",
      "Object": "v1/a/c/labeled.json",
      "Action": {
        "StartAt": "S",
        "Steps": {
          "S": {
            "Id": "CLAC",
            "EventType": {
              "Type": "JSONPathMarkerEvent",
              "Input": [{"Predicate": "$.secret", "olabel": "s"}]
            },
            "Input": [{"ulabel": "t", "olabel": "s"}],
            "Next": "End"
          }
        }
      }
    }"#;
    let doc = r#"{"public": 1, "secret": 2}"#;
    let run = |allow: bool| {
        let config = EngineConfig {
            cache_capacity: 8,
            allow_label_header: allow,
        };
        let engine = Engine::new(Arc::new(MetadataStore::new()), config);
        engine.put_policy(policy.as_bytes()).unwrap();
        let req = EnforcementRequest::new(
            ObjectPath::new("a", "c", "labeled.json").unwrap(),
            "carol",
        )
        .with_header(headers::USER_LABEL, "t");
        let mut out = Vec::new();
        engine
            .enforce_get(&req, &mut Cursor::new(doc.as_bytes()), &mut out)
            .unwrap();
        serde_json::from_slice::<serde_json::Value>(&out).unwrap()
    };
    assert!(run(false).get("secret").is_none());
    assert_eq!(run(true)["secret"], 2);
}

#[test]
fn meta_resolution_is_per_request() {
    // Rotating a stored key changes behavior without re-storing the policy.
    let store = Arc::new(MetadataStore::new());
    store.put("some/key", b"v1".to_vec());
    assert_eq!(resolve_meta("meta://some/key", &store).unwrap(), b"v1");
    store.put("some/key", b"v2".to_vec());
    assert_eq!(resolve_meta("meta://some/key", &store).unwrap(), b"v2");
    assert_eq!(resolve_meta("literal", &store).unwrap(), b"literal");
    assert!(matches!(
        resolve_meta("meta://absent", &store),
        Err(EngineError::KeyNotFound(k)) if k == "absent"
    ));
}

#[test]
fn bad_artifact_headers_are_rejected() {
    let rig = employee_rig();
    let headers = vec![(headers::REENC_TOKEN, "!!!not-base64!!!".to_string())];
    let err = get(&rig.engine, "bob", weekday(), &rig.doc, &headers).unwrap_err();
    assert!(matches!(err, EngineError::BadRequest(_)));
}
