//! Remote provider speaking the OpenAI-compatible chat completions protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runtime::{CallKey, ChatTurn, Provider, ProviderReply, RoleConfig, Speaker};

pub const API_KEY_ENV: &str = "RTLSQUAD_API_KEY";
const MAX_ATTEMPTS: u32 = 3;

pub struct HttpProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: String,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpProvider {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            client: reqwest::blocking::Client::new(),
        }
    }

    fn attempt(&self, role: &RoleConfig, transcript: &[ChatTurn]) -> Result<String> {
        let messages = transcript
            .iter()
            .map(|t| WireMessage {
                role: match t.speaker {
                    Speaker::System => "system",
                    Speaker::User => "user",
                    Speaker::Assistant => "assistant",
                },
                content: &t.content,
            })
            .collect();
        let body = ChatRequest {
            model: &self.model,
            messages,
            temperature: role.temperature,
            max_tokens: role.max_reply_tokens,
        };

        let mut request = self
            .client
            .post(format!("{}/chat/completions", self.endpoint))
            .json(&body);
        if let Some(key) = &self.api_key {
            request = request.header("authorization", format!("Bearer {key}"));
        }

        let response = request.send().map_err(|e| Error::Provider {
            detail: e.to_string(),
            retries: 0,
        })?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(Error::Provider {
                detail: format!("HTTP {status}: {text}"),
                retries: 0,
            });
        }
        let parsed: ChatResponse = response.json().map_err(|e| Error::Provider {
            detail: format!("bad response body: {e}"),
            retries: 0,
        })?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .unwrap_or_default();
        Ok(content)
    }
}

impl Provider for HttpProvider {
    /// Issues up to three attempts; transport and server failures are retried,
    /// an empty reply is not.
    fn complete(
        &mut self,
        _key: &CallKey,
        role: &RoleConfig,
        transcript: &[ChatTurn],
    ) -> Result<ProviderReply> {
        let mut last_detail = String::new();
        for attempt in 0..MAX_ATTEMPTS {
            match self.attempt(role, transcript) {
                Ok(text) => {
                    if text.trim().is_empty() {
                        return Err(Error::EmptyReply);
                    }
                    return Ok(ProviderReply {
                        text,
                        retries: attempt,
                    });
                }
                Err(Error::Provider { detail, .. }) => last_detail = detail,
                Err(other) => return Err(other),
            }
        }
        Err(Error::Provider {
            detail: last_detail,
            retries: MAX_ATTEMPTS - 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{RoleId, Stage};
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal canned HTTP server: answers each connection with the next
    /// scripted (status, body) pair.
    fn spawn_server(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut served = 0;
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 8192];
                // read the request (best effort; one read is enough here)
                let _ = stream.read(&mut buf);
                let reason = if status == 200 { "OK" } else { "Server Error" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (format!("http://{addr}"), handle)
    }

    fn ok_body(content: &str) -> String {
        format!(
            "{{\"choices\":[{{\"message\":{{\"role\":\"assistant\",\"content\":\"{content}\"}}}}]}}"
        )
    }

    fn role_cfg() -> RoleConfig {
        RoleConfig {
            role: RoleId::Programmer,
            system_prompt: "sys".into(),
            temperature: 0.8,
            max_reply_tokens: 64,
        }
    }

    fn key() -> CallKey {
        CallKey {
            role: RoleId::Programmer,
            stage: Stage::Implementation,
            round: 1,
        }
    }

    fn turns() -> Vec<ChatTurn> {
        vec![
            ChatTurn {
                speaker: Speaker::System,
                content: "sys".into(),
            },
            ChatTurn {
                speaker: Speaker::User,
                content: "go".into(),
            },
        ]
    }

    #[test]
    fn recovers_after_two_server_errors() {
        let (endpoint, handle) = spawn_server(vec![
            (500, "{}".into()),
            (500, "{}".into()),
            (200, ok_body("hello")),
        ]);
        let mut provider = HttpProvider::new(endpoint, "test-model");
        provider.api_key = Some("k".into());
        let reply = provider.complete(&key(), &role_cfg(), &turns()).unwrap();
        assert_eq!(reply.text, "hello");
        assert_eq!(reply.retries, 2);
        assert_eq!(handle.join().unwrap(), 3);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let (endpoint, handle) = spawn_server(vec![
            (500, "{}".into()),
            (500, "{}".into()),
            (500, "{}".into()),
        ]);
        let mut provider = HttpProvider::new(endpoint, "test-model");
        match provider.complete(&key(), &role_cfg(), &turns()) {
            Err(Error::Provider { retries, .. }) => assert_eq!(retries, 2),
            other => panic!("expected provider error, got {other:?}"),
        }
        assert_eq!(handle.join().unwrap(), 3);
    }

    #[test]
    fn empty_reply_is_not_retried() {
        let (endpoint, handle) = spawn_server(vec![(200, ok_body(""))]);
        let mut provider = HttpProvider::new(endpoint, "test-model");
        assert!(matches!(
            provider.complete(&key(), &role_cfg(), &turns()),
            Err(Error::EmptyReply)
        ));
        assert_eq!(handle.join().unwrap(), 1);
    }
}
