#[cfg(test)]
use crate::policy::ParamValue;
use crate::stream::{Completion, Event, EventVerdict};

use super::{Udf, UdfContext, UdfError};

/// Content-level access control. Step parameters carry `(ulabel, olabel)`
/// rules; an event whose marker label is granted to the requester's label
/// passes, anything else is removed from the view and the rest of the
/// chain is skipped for it. Default is deny: unlabeled events, requesters
/// without a label, and labels no rule covers are all dropped.
pub struct Clac;

fn rules(ctx: &UdfContext) -> Result<Vec<(String, String)>, UdfError> {
    let mut out = Vec::new();
    for obj in ctx.step_params.objects() {
        let (Some(u), Some(o)) = (obj.get("ulabel"), obj.get("olabel")) else {
            continue;
        };
        if let (Some(u), Some(o)) = (u.as_text(), o.as_text()) {
            out.push((u, o));
        }
    }
    if out.is_empty() {
        return Err(UdfError::MissingLabelParams);
    }
    Ok(out)
}

impl Udf for Clac {
    fn name(&self) -> &'static str {
        "CLAC"
    }

    fn update(&mut self, event: &Event, ctx: &UdfContext) -> Result<EventVerdict, UdfError> {
        let rules = rules(ctx)?;
        let deny = Ok(EventVerdict::drop_element().halting());
        let Some(olabel) = event.marker.as_deref() else {
            return deny;
        };
        let Some(ulabel) = ctx.requester.ulabel.as_deref() else {
            return deny;
        };
        if rules.iter().any(|(u, o)| u == ulabel && o == olabel) {
            Ok(EventVerdict::pass())
        } else {
            deny
        }
    }

    fn complete(&mut self, _ctx: &UdfContext) -> Result<Option<Completion>, UdfError> {
        Ok(None)
    }
}

/// Convenience for tests assembling contexts by hand.
#[cfg(test)]
pub(crate) fn rule_params(rules: &[(&str, &str)]) -> Vec<std::collections::BTreeMap<String, ParamValue>> {
    rules
        .iter()
        .map(|(u, o)| {
            let mut m = std::collections::BTreeMap::new();
            m.insert("ulabel".to_string(), ParamValue::Str(u.to_string()));
            m.insert("olabel".to_string(), ParamValue::Str(o.to_string()));
            m
        })
        .collect()
}
