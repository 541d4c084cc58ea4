use crate::crypto::{decode_b64, encode_b64, pre_reencrypt, HomCiphertext, ReEncToken};
use crate::stream::{Completion, Event, EventValue, ScalarValue, EventVerdict};

use super::{Udf, UdfContext, UdfError};

/// Re-encrypts matched second-level ciphertexts with the request's
/// delegation token, turning them into first-level ciphertexts only the
/// token's receiver can decrypt. Without a token the matched field is
/// dropped: the caller asked for data they cannot read.
///
/// Accepts either a bare base64 ciphertext string or an object containing
/// a `"sum"` member (the appended output of the summation step); in the
/// latter case only the `"sum"` value is rewritten. Object key order may
/// be normalized by the rewrite.
pub struct ReEncrypt;

fn reencrypt_b64(token: &ReEncToken, text: &str, position: u64) -> Result<String, UdfError> {
    let bytes = decode_b64(text).map_err(|e| UdfError::MalformedCiphertext {
        position,
        detail: e.to_string(),
    })?;
    let ct = HomCiphertext::from_bytes(&bytes).map_err(|e| UdfError::MalformedCiphertext {
        position,
        detail: e.to_string(),
    })?;
    let translated = pre_reencrypt(token, &ct)?;
    Ok(encode_b64(&translated.to_bytes()))
}

impl Udf for ReEncrypt {
    fn name(&self) -> &'static str {
        "PRE"
    }

    fn update(&mut self, event: &Event, ctx: &UdfContext) -> Result<EventVerdict, UdfError> {
        let Some(token_bytes) = ctx.artifacts.reenc_token.as_deref() else {
            return Ok(EventVerdict::drop_element().halting());
        };
        let token = ReEncToken::from_bytes(token_bytes)?;

        match &event.value {
            EventValue::Scalar(ScalarValue::Str(text)) => {
                let replaced = reencrypt_b64(&token, text, event.position)?;
                Ok(EventVerdict::replace(EventValue::Scalar(ScalarValue::Str(
                    replaced,
                ))))
            }
            EventValue::Subtree(text) => {
                let mut value: serde_json::Value =
                    serde_json::from_str(text).map_err(|e| UdfError::MalformedCiphertext {
                        position: event.position,
                        detail: format!("unparsable subtree: {e}"),
                    })?;
                let Some(obj) = value.as_object_mut() else {
                    return Err(UdfError::MalformedCiphertext {
                        position: event.position,
                        detail: "expected a ciphertext string or object".to_string(),
                    });
                };
                let Some(sum) = obj.get("sum") else {
                    return Ok(EventVerdict::pass());
                };
                let Some(sum_text) = sum.as_str() else {
                    return Err(UdfError::MalformedCiphertext {
                        position: event.position,
                        detail: "`sum` member is not a string".to_string(),
                    });
                };
                let replaced = reencrypt_b64(&token, sum_text, event.position)?;
                obj.insert("sum".to_string(), serde_json::Value::String(replaced));
                Ok(EventVerdict::replace(EventValue::Subtree(
                    serde_json::to_string(&value).expect("JSON value serializes"),
                )))
            }
            _ => Err(UdfError::MalformedCiphertext {
                position: event.position,
                detail: "expected a ciphertext string or object".to_string(),
            }),
        }
    }

    fn complete(&mut self, _ctx: &UdfContext) -> Result<Option<Completion>, UdfError> {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{
        hom_decrypt, hom_encrypt, hom_keygen, pre_token, CiphertextLevel, CryptoError,
    };
    use crate::stream::{DropScope, EventPath, VerdictAction};
    use crate::udf::RequestArtifacts;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const BOUND: u64 = 1 << 20;

    fn event(value: EventValue) -> Event {
        Event {
            type_name: "JSONPathEvent".to_string(),
            path: EventPath::Json(vec!["average_salary".to_string()]),
            value,
            marker: None,
            position: 3,
        }
    }

    fn ctx(token: Option<Vec<u8>>) -> UdfContext {
        UdfContext {
            artifacts: RequestArtifacts {
                reenc_token: token,
                ..RequestArtifacts::default()
            },
            ..UdfContext::default()
        }
    }

    #[test]
    fn replaces_bare_ciphertext() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let owner = hom_keygen(&mut rng);
        let receiver = hom_keygen(&mut rng);
        let token = pre_token(&owner.sk, &receiver.pk).unwrap();
        let ct = hom_encrypt(&owner.pk, 500, BOUND, &mut rng).unwrap();

        let mut udf = ReEncrypt;
        let ctx = ctx(Some(token.to_bytes()));
        let e = event(EventValue::Scalar(ScalarValue::Str(encode_b64(
            &ct.to_bytes(),
        ))));
        let v = udf.update(&e, &ctx).unwrap();
        let VerdictAction::Replace(EventValue::Scalar(ScalarValue::Str(b64))) = v.action else {
            panic!("expected string replacement, got {:?}", v.action);
        };
        let translated = HomCiphertext::from_bytes(&decode_b64(&b64).unwrap()).unwrap();
        assert_eq!(translated.level(), CiphertextLevel::First);
        assert_eq!(hom_decrypt(&receiver.sk, &translated, BOUND).unwrap(), 500);
    }

    #[test]
    fn rewrites_sum_member_only() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let owner = hom_keygen(&mut rng);
        let receiver = hom_keygen(&mut rng);
        let token = pre_token(&owner.sk, &receiver.pk).unwrap();
        let ct = hom_encrypt(&owner.pk, 60, BOUND, &mut rng).unwrap();
        let subtree = format!(
            "{{\"count\":3,\"sum\":\"{}\"}}",
            encode_b64(&ct.to_bytes())
        );

        let mut udf = ReEncrypt;
        let ctx = ctx(Some(token.to_bytes()));
        let v = udf.update(&event(EventValue::Subtree(subtree)), &ctx).unwrap();
        let VerdictAction::Replace(EventValue::Subtree(text)) = v.action else {
            panic!("expected subtree replacement");
        };
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["count"], 3);
        let translated =
            HomCiphertext::from_bytes(&decode_b64(parsed["sum"].as_str().unwrap()).unwrap())
                .unwrap();
        assert_eq!(hom_decrypt(&receiver.sk, &translated, BOUND).unwrap(), 60);
    }

    #[test]
    fn missing_token_drops_field() {
        let mut udf = ReEncrypt;
        let ctx = ctx(None);
        let e = event(EventValue::Scalar(ScalarValue::Str("anything".to_string())));
        let v = udf.update(&e, &ctx).unwrap();
        assert_eq!(v.action, VerdictAction::Drop(DropScope::Element));
        assert!(v.halt_chain);
    }

    #[test]
    fn sum_free_object_passes() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let owner = hom_keygen(&mut rng);
        let receiver = hom_keygen(&mut rng);
        let token = pre_token(&owner.sk, &receiver.pk).unwrap();
        let mut udf = ReEncrypt;
        let ctx = ctx(Some(token.to_bytes()));
        let v = udf
            .update(&event(EventValue::Subtree("{\"count\":0}".to_string())), &ctx)
            .unwrap();
        assert_eq!(v.action, VerdictAction::Pass);
    }

    #[test]
    fn first_level_input_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(44);
        let owner = hom_keygen(&mut rng);
        let receiver = hom_keygen(&mut rng);
        let token = pre_token(&owner.sk, &receiver.pk).unwrap();
        let ct = hom_encrypt(&owner.pk, 7, BOUND, &mut rng).unwrap();
        let first = crate::crypto::pre_reencrypt(&token, &ct).unwrap();

        let mut udf = ReEncrypt;
        let ctx = ctx(Some(token.to_bytes()));
        let e = event(EventValue::Scalar(ScalarValue::Str(encode_b64(
            &first.to_bytes(),
        ))));
        assert!(matches!(
            udf.update(&e, &ctx),
            Err(UdfError::Crypto(CryptoError::LevelMismatch))
        ));
    }

    #[test]
    fn garbage_inputs_error() {
        let mut rng = ChaCha20Rng::seed_from_u64(45);
        let owner = hom_keygen(&mut rng);
        let receiver = hom_keygen(&mut rng);
        let token = pre_token(&owner.sk, &receiver.pk).unwrap();
        let mut udf = ReEncrypt;
        let ctx = ctx(Some(token.to_bytes()));

        let e = event(EventValue::Scalar(ScalarValue::Str("@@".to_string())));
        assert!(matches!(
            udf.update(&e, &ctx),
            Err(UdfError::MalformedCiphertext { .. })
        ));
        let e = event(EventValue::Scalar(ScalarValue::Num("4".to_string())));
        assert!(matches!(
            udf.update(&e, &ctx),
            Err(UdfError::MalformedCiphertext { .. })
        ));
        let e = event(EventValue::Subtree("[1,2]".to_string()));
        assert!(matches!(
            udf.update(&e, &ctx),
            Err(UdfError::MalformedCiphertext { .. })
        ));

        let mut bad_token_ctx = ctx;
        bad_token_ctx.artifacts.reenc_token = Some(vec![1, 2, 3]);
        let e = event(EventValue::Scalar(ScalarValue::Str("AA==".to_string())));
        assert!(matches!(
            udf.update(&e, &bad_token_ctx),
            Err(UdfError::Crypto(_))
        ));
    }
}
