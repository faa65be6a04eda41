use serde_json::{json, Value};

use super::{Decision, DecisionPolicy, PlanningContext, PolicyError};
use crate::remote::ChatClient;

pub fn decision_schema() -> Value {
    json!({
        "type": "object",
        "required": ["reasoning", "terminate"],
        "properties": {
            "reasoning": {"type": "string"},
            "terminate": {"type": "boolean"},
            "action": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["click", "navigate", "search", "add_to_cart", "go_back", "terminate"]},
                    "target_ref": {"type": "integer", "minimum": 1},
                    "args": {"type": "string"}
                }
            }
        }
    })
}

/// Decision policy backed by a chat-completion endpoint.
#[derive(Debug, Clone)]
pub struct RemoteModelPolicy {
    client: ChatClient,
    max_retries: usize,
}

impl RemoteModelPolicy {
    pub fn new(client: ChatClient, max_retries: usize) -> Self {
        Self { client, max_retries }
    }

    pub fn messages(ctx: &PlanningContext<'_>) -> Vec<Value> {
        let system = format!(
            "You are a shopper browsing an online store.\n\n{}\n\n{}\n\nReply with one JSON object \
             holding your reasoning, whether to terminate, and the next action.",
            ctx.persona.prompt, ctx.guardrail_notice
        );
        let user = json!({
            "goal": ctx.goal,
            "step_index": ctx.observation.step_index,
            "url": ctx.observation.url,
            "page": ctx.observation.ax_tree.to_text(),
            "memory": ctx.memory_view,
        });
        vec![
            json!({"role": "system", "content": system}),
            json!({"role": "user", "content": user.to_string()}),
        ]
    }
}

fn parse_decision(reply: Value) -> Result<Decision, String> {
    let d: Decision = serde_json::from_value(reply).map_err(|e| format!("reply does not match the decision schema: {e}"))?;
    d.validate()?;
    Ok(d)
}

impl DecisionPolicy for RemoteModelPolicy {
    fn decide(&self, ctx: &PlanningContext<'_>) -> Result<Decision, PolicyError> {
        let mut messages = Self::messages(ctx);
        let schema = decision_schema();
        let mut last = String::new();
        for _ in 0..=self.max_retries {
            let outcome = self
                .client
                .structured(&messages, &schema)
                .map_err(|e| e.to_string())
                .and_then(parse_decision);
            match outcome {
                Ok(d) => return Ok(d),
                Err(e) => {
                    messages.push(json!({"role": "user", "content": format!("The previous reply failed: {e}")}));
                    last = e;
                }
            }
        }
        Err(PolicyError::Failure {
            attempts: self.max_retries + 1,
            last,
        })
    }
}
