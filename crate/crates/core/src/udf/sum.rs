use serde_json::json;

use crate::crypto::{encode_b64, decode_b64, hom_add, HomCiphertext, HomPublicKey};
use crate::stream::{Completion, Event, EventVerdict};

use super::{Udf, UdfContext, UdfError};

/// Folds every matched ciphertext into one homomorphic sum. Matched
/// elements are consumed (dropped from the view, chain halted); at end of
/// stream the accumulated ciphertext and the plaintext element count are
/// appended as `{"<output>": {"sum": "<base64>", "count": <n>}}`. With no
/// matches the appended object carries only `"count": 0`.
///
/// Required parameters: `keyOwner` (the owner's public key, normally a
/// `meta://` reference) and `output` (the appended field, e.g.
/// `$.average_salary`). Averages are not computed here: the reader divides
/// the decrypted sum by the count, since the ciphertexts only add.
#[derive(Default)]
pub struct EncryptedSum {
    acc: Option<HomCiphertext>,
    count: u64,
    checked: bool,
}

fn output_field(ctx: &UdfContext) -> Result<String, UdfError> {
    let raw = ctx
        .step_params
        .get_text("output")
        .ok_or_else(|| UdfError::MissingParam("output".to_string()))?;
    let name = raw.strip_prefix("$.").unwrap_or(&raw);
    if name.is_empty() || name.contains('.') || name.starts_with('$') {
        return Err(UdfError::BadParam {
            name: "output".to_string(),
            detail: format!("`{raw}` is not a top-level field path"),
        });
    }
    Ok(name.to_string())
}

fn check_params(ctx: &UdfContext) -> Result<(), UdfError> {
    let key_bytes = ctx
        .step_params
        .get_bytes("keyOwner")
        .ok_or_else(|| UdfError::MissingParam("keyOwner".to_string()))?;
    HomPublicKey::from_bytes(&key_bytes).map_err(|e| UdfError::BadParam {
        name: "keyOwner".to_string(),
        detail: e.to_string(),
    })?;
    output_field(ctx)?;
    Ok(())
}

impl Udf for EncryptedSum {
    fn name(&self) -> &'static str {
        "SUM"
    }

    fn update(&mut self, event: &Event, ctx: &UdfContext) -> Result<EventVerdict, UdfError> {
        if !self.checked {
            check_params(ctx)?;
            self.checked = true;
        }
        let text = event.value.as_str().ok_or_else(|| UdfError::MalformedCiphertext {
            position: event.position,
            detail: "expected a base64 string value".to_string(),
        })?;
        let bytes = decode_b64(text).map_err(|e| UdfError::MalformedCiphertext {
            position: event.position,
            detail: e.to_string(),
        })?;
        let ct = HomCiphertext::from_bytes(&bytes).map_err(|e| UdfError::MalformedCiphertext {
            position: event.position,
            detail: e.to_string(),
        })?;
        self.acc = Some(match self.acc.take() {
            None => ct,
            Some(acc) => hom_add(&acc, &ct)?,
        });
        self.count += 1;
        Ok(EventVerdict::drop_element().halting())
    }

    fn complete(&mut self, ctx: &UdfContext) -> Result<Option<Completion>, UdfError> {
        check_params(ctx)?;
        let field = output_field(ctx)?;
        let value = match &self.acc {
            Some(acc) => json!({
                "sum": encode_b64(&acc.to_bytes()),
                "count": self.count,
            }),
            None => json!({ "count": 0 }),
        };
        Ok(Some(Completion { field, value }))
    }
}
