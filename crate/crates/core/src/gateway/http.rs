use std::time::Duration;

use serde_json::{json, Value};

use super::{GatewayError, Provider, ProviderConfig, Reply, Request, SendError};

/// Client for the common chat-completion wire shape: a `messages` array
/// with one user turn, answered by `choices[0].message.content`.
pub struct HttpChatProvider {
    agent: ureq::Agent,
    endpoint: String,
    headers: Vec<(String, String)>,
}

impl std::fmt::Debug for HttpChatProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // header values may hold credentials
        f.debug_struct("HttpChatProvider")
            .field("endpoint", &self.endpoint)
            .finish()
    }
}

impl HttpChatProvider {
    /// Reads the API key from the environment variable named in `config`.
    pub fn from_config(config: &ProviderConfig) -> Result<Self, GatewayError> {
        let endpoint = config.endpoint.clone().ok_or_else(|| {
            GatewayError::Config(format!("provider `{}` has no endpoint", config.id))
        })?;
        let mut headers: Vec<(String, String)> = config
            .headers
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if let Some(var) = &config.auth_env {
            let key = std::env::var(var).map_err(|_| GatewayError::MissingAuth(var.clone()))?;
            let header = config
                .auth_header
                .clone()
                .unwrap_or_else(|| "Authorization".into());
            let scheme = match &config.auth_scheme {
                Some(s) => s.clone(),
                None if header.eq_ignore_ascii_case("authorization") => "Bearer".into(),
                None => String::new(),
            };
            let value = if scheme.is_empty() {
                key
            } else {
                format!("{scheme} {key}")
            };
            headers.push((header, value));
        }
        let timeout = Duration::from_secs(config.timeout_secs.unwrap_or(120));
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        Ok(Self {
            agent,
            endpoint,
            headers,
        })
    }
}

fn body(request: &Request<'_>) -> Value {
    let mut b = json!({
        "model": request.model,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": request.temperature,
    });
    if let Some(m) = request.max_tokens {
        b["max_tokens"] = json!(m);
    }
    b
}

fn parse_reply(v: &Value) -> Result<Reply, SendError> {
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| SendError::fatal("response lacks choices[0].message.content"))?;
    let usage = match (
        v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        v.pointer("/usage/completion_tokens")
            .and_then(Value::as_u64),
    ) {
        (Some(i), Some(o)) => Some((i, o)),
        _ => None,
    };
    Ok(Reply {
        text: text.to_string(),
        usage,
    })
}

impl Provider for HttpChatProvider {
    fn send(&self, request: &Request<'_>) -> Result<Reply, SendError> {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        for (k, v) in &self.headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let payload = serde_json::to_vec(&body(request)).expect("request bodies serialize");
        let mut resp = req
            .send(&payload[..])
            .map_err(|e| SendError::transient(format!("transport: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| SendError::transient(format!("reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(SendError::transient(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(SendError::fatal(format!(
                "HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            )));
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| SendError::fatal(format!("invalid JSON: {e}")))?;
        parse_reply(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ProviderHandle, ProviderKindName};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;

    /// Serves `responses` to successive connections and returns the raw
    /// requests it saw.
    fn stub(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                head.push_str(&String::from_utf8_lossy(&buf));
                seen.push(head);
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (url, handle)
    }

    fn config(url: &str, auth_env: Option<&str>) -> ProviderConfig {
        let mut c = ProviderConfig::scripted("stub");
        c.kind = ProviderKindName::HttpChat;
        c.model = "stub-model".into();
        c.endpoint = Some(url.into());
        c.auth_env = auth_env.map(String::from);
        c.retry_base_ms = 1;
        c
    }

    #[test]
    fn returns_stub_body_and_usage() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"fixed body"}}],"usage":{"prompt_tokens":11,"completion_tokens":2}}"#;
        let (url, server) = stub(vec![(200, body.into())]);
        std::env::set_var("VULNPATCH_TEST_KEY", "sekret");
        let c = config(&url, Some("VULNPATCH_TEST_KEY"));
        let p = ProviderHandle::new(
            c.clone(),
            Arc::new(HttpChatProvider::from_config(&c).unwrap()),
        );
        let ex = p.complete("hello there").unwrap();
        assert_eq!(ex.response, "fixed body");
        assert_eq!(
            (ex.input_tokens, ex.output_tokens, ex.estimated),
            (11, 2, false)
        );
        let seen = server.join().unwrap();
        assert!(seen[0].contains("Bearer sekret"));
        assert!(seen[0].contains(r#""content":"hello there""#));
        assert!(seen[0].contains(r#""temperature":0.0"#));
    }

    #[test]
    fn retries_server_errors() {
        let ok = r#"{"choices":[{"message":{"content":"second"}}]}"#;
        let (url, server) = stub(vec![(503, "{}".into()), (200, ok.into())]);
        let c = config(&url, None);
        let p = ProviderHandle::new(
            c.clone(),
            Arc::new(HttpChatProvider::from_config(&c).unwrap()),
        );
        let ex = p.complete("x").unwrap();
        assert_eq!(ex.response, "second");
        assert!(ex.estimated);
        assert_eq!(server.join().unwrap().len(), 2);
    }

    #[test]
    fn missing_key_names_the_variable() {
        let c = config("http://127.0.0.1:1/", Some("VULNPATCH_SURELY_UNSET"));
        assert_eq!(
            HttpChatProvider::from_config(&c).unwrap_err(),
            GatewayError::MissingAuth("VULNPATCH_SURELY_UNSET".into())
        );
    }
}
