use crate::stream::{Completion, Event, EventVerdict};

use super::{Udf, UdfContext, UdfError};

/// Identity transformation: every event passes unchanged. Useful for
/// measuring the cost of interception itself.
pub struct Noop;

impl Udf for Noop {
    fn name(&self) -> &'static str {
        "NOOP"
    }

    fn update(&mut self, _event: &Event, _ctx: &UdfContext) -> Result<EventVerdict, UdfError> {
        Ok(EventVerdict::pass())
    }

    fn complete(&mut self, _ctx: &UdfContext) -> Result<Option<Completion>, UdfError> {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{EventPath, EventValue, ScalarValue, VerdictAction};

    #[test]
    fn passes_everything() {
        let mut udf = Noop;
        let ctx = UdfContext::default();
        let event = Event {
            type_name: "JSONPathEvent".to_string(),
            path: EventPath::Json(vec!["x".to_string()]),
            value: EventValue::Scalar(ScalarValue::Num("3".to_string())),
            marker: None,
            position: 5,
        };
        let verdict = udf.update(&event, &ctx).unwrap();
        assert_eq!(verdict.action, VerdictAction::Pass);
        assert!(!verdict.halt_chain);
        assert!(udf.complete(&ctx).unwrap().is_none());
    }
}
