use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use serde_json::Value;

use super::{GatewayError, Provider, Reply, Request, SendError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedReply {
    Text(String),
    /// A non-retryable provider failure.
    Failure(String),
}

/// Replays a fixed queue of replies regardless of the prompt.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<ScriptedReply>>,
}

impl ScriptedProvider {
    pub fn new(replies: Vec<ScriptedReply>) -> Self {
        Self {
            queue: Mutex::new(replies.into()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("script queue poisoned").len()
    }
}

impl Provider for ScriptedProvider {
    fn send(&self, _request: &Request<'_>) -> Result<Reply, SendError> {
        match self
            .queue
            .lock()
            .expect("script queue poisoned")
            .pop_front()
        {
            Some(ScriptedReply::Text(text)) => Ok(Reply { text, usage: None }),
            Some(ScriptedReply::Failure(message)) => Err(SendError::fatal(message)),
            None => Err(SendError::exhausted()),
        }
    }

    fn measures_latency(&self) -> bool {
        false
    }
}

/// Reads a script file: a JSON array whose items are reply strings or
/// `{"error": "..."}` objects.
pub fn load_script(path: &Path) -> Result<Vec<ScriptedReply>, GatewayError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GatewayError::Config(format!("cannot read script {}: {e}", path.display())))?;
    parse_script(&text).map_err(|m| GatewayError::Config(format!("{}: {m}", path.display())))
}

pub(crate) fn parse_script(text: &str) -> Result<Vec<ScriptedReply>, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let items = v.as_array().ok_or("expected a JSON array")?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| match item {
            Value::String(s) => Ok(ScriptedReply::Text(s.clone())),
            Value::Object(o) => match o.get("error") {
                Some(Value::String(m)) => Ok(ScriptedReply::Failure(m.clone())),
                _ => Err(format!(
                    "item {i}: expected a string or {{\"error\": \"...\"}}"
                )),
            },
            _ => Err(format!(
                "item {i}: expected a string or {{\"error\": \"...\"}}"
            )),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_with_failures() {
        let s = parse_script(r#"["a", {"error": "boom"}]"#).unwrap();
        assert_eq!(
            s,
            vec![
                ScriptedReply::Text("a".into()),
                ScriptedReply::Failure("boom".into())
            ]
        );
        assert!(parse_script(r#"[1]"#).is_err());
        assert!(parse_script(r#"{"a": 1}"#).is_err());
    }
}
