use crate::crypto::{decode_b64, peks_test, SearchCiphertext, Trapdoor};
use crate::stream::{Completion, Event, EventVerdict};

use super::{Udf, UdfContext, UdfError};

/// Keyword filter over searchable ciphertexts. When the request carries a
/// trapdoor, each matched ciphertext is tested against it: a hit keeps the
/// enclosing record, a miss drops it. Requests without a trapdoor are not
/// searching, so everything passes untouched.
#[derive(Default)]
pub struct Search {
    trapdoor: Option<Trapdoor>,
}

impl Udf for Search {
    fn name(&self) -> &'static str {
        "SEARCH"
    }

    fn update(&mut self, event: &Event, ctx: &UdfContext) -> Result<EventVerdict, UdfError> {
        let Some(bytes) = ctx.artifacts.trapdoor.as_deref() else {
            return Ok(EventVerdict::pass());
        };
        if self.trapdoor.is_none() {
            self.trapdoor = Some(Trapdoor::from_bytes(bytes)?);
        }
        let trapdoor = self.trapdoor.as_ref().expect("just set");

        let text = event.value.as_str().ok_or_else(|| UdfError::MalformedCiphertext {
            position: event.position,
            detail: "expected a base64 search ciphertext".to_string(),
        })?;
        let ct_bytes = decode_b64(text).map_err(|e| UdfError::MalformedCiphertext {
            position: event.position,
            detail: e.to_string(),
        })?;
        let ct = SearchCiphertext::from_bytes(&ct_bytes).map_err(|e| {
            UdfError::MalformedCiphertext {
                position: event.position,
                detail: e.to_string(),
            }
        })?;

        if peks_test(&ct, trapdoor)? {
            Ok(EventVerdict::pass())
        } else {
            Ok(EventVerdict::drop_record().halting())
        }
    }

    fn complete(&mut self, _ctx: &UdfContext) -> Result<Option<Completion>, UdfError> {
        Ok(None)
    }

    fn may_drop_records(&self) -> bool {
        true
    }
}
