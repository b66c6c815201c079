//! Scripted gateway behaviour, keyed by phone number.
//!
//! The same script drives offline replay and the mock gateway process, so a
//! session run against the mock yields the same attempt outcomes as a
//! replay of its records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::escalation::AttemptOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Deliver,
    #[default]
    Fail,
    /// Never answers; the attempt runs into its timeout.
    NoAnswer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "RuleRepr")]
pub struct Rule {
    pub behavior: Behavior,
    /// Response latency of the mock gateway.
    pub delay_ms: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RuleRepr {
    Bare(Behavior),
    Full {
        behavior: Behavior,
        #[serde(default)]
        delay_ms: u64,
    },
}

impl From<RuleRepr> for Rule {
    fn from(r: RuleRepr) -> Self {
        match r {
            RuleRepr::Bare(behavior) => Rule {
                behavior,
                delay_ms: 0,
            },
            RuleRepr::Full { behavior, delay_ms } => Rule { behavior, delay_ms },
        }
    }
}

impl Rule {
    pub fn new(behavior: Behavior) -> Self {
        Self {
            behavior,
            delay_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayScript {
    pub default: Rule,
    pub numbers: BTreeMap<String, Rule>,
}

impl GatewayScript {
    pub fn uniform(behavior: Behavior) -> Self {
        Self {
            default: Rule::new(behavior),
            numbers: BTreeMap::new(),
        }
    }

    pub fn with_number(mut self, number: &str, rule: Rule) -> Self {
        self.numbers.insert(number.to_string(), rule);
        self
    }

    pub fn rule_for(&self, number: &str) -> Rule {
        self.numbers.get(number).copied().unwrap_or(self.default)
    }

    /// The outcome an offline replay assigns to a request, or `None` when
    /// the gateway would not answer within `timeout_ms`.
    pub fn offline_reply(&self, number: &str, timeout_ms: u64) -> Option<AttemptOutcome> {
        let rule = self.rule_for(number);
        if rule.delay_ms > timeout_ms {
            return None;
        }
        match rule.behavior {
            Behavior::Deliver => Some(AttemptOutcome::Delivered),
            Behavior::Fail => Some(AttemptOutcome::Failed),
            Behavior::NoAnswer => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_accept_short_and_long_forms() {
        let s: GatewayScript = serde_json::from_str(
            r#"{"default":"deliver","numbers":{"+1":"no_answer","+2":{"behavior":"fail","delay_ms":500}}}"#,
        )
        .unwrap();
        assert_eq!(s.rule_for("+9"), Rule::new(Behavior::Deliver));
        assert_eq!(s.rule_for("+1").behavior, Behavior::NoAnswer);
        assert_eq!(s.rule_for("+2").delay_ms, 500);
    }

    #[test]
    fn offline_replies() {
        let s = GatewayScript::uniform(Behavior::Fail)
            .with_number("slow", Rule { behavior: Behavior::Deliver, delay_ms: 31_000 })
            .with_number("ok", Rule::new(Behavior::Deliver))
            .with_number("mute", Rule::new(Behavior::NoAnswer));
        assert_eq!(s.offline_reply("x", 30_000), Some(AttemptOutcome::Failed));
        assert_eq!(s.offline_reply("ok", 30_000), Some(AttemptOutcome::Delivered));
        assert_eq!(s.offline_reply("slow", 30_000), None);
        assert_eq!(s.offline_reply("mute", 30_000), None);
    }
}
