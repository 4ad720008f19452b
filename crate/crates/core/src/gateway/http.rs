//! OpenAI-compatible HTTP provider (`/chat/completions`, `/embeddings`).
//!
//! Reward models are reached through the same chat-completions route with the
//! assistant turn included; the reward is read from a top-level `reward` or
//! `score` number, or from message content of the form `reward:<float>`.

use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, Message, Provider, RewardRequest, Role, Usage};
use crate::error::ProviderError;

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub base_url: String,
    pub api_key: Option<String>,
    pub chat_model: String,
    pub reward_model: String,
    pub embedding_model: String,
    pub timeout: Duration,
}

pub struct HttpProvider {
    settings: HttpSettings,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(settings: HttpSettings) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpProvider { settings, client })
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{route}", self.settings.base_url.trim_end_matches('/'))
    }

    fn post(&self, route: &str, body: &Value) -> Result<Value, ProviderError> {
        let mut req = self.client.post(self.url(route)).json(body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::Decode(e.to_string()))
    }
}

fn wire_messages(system: Option<&str>, messages: &[Message]) -> Vec<Value> {
    let mut out = Vec::with_capacity(messages.len() + 1);
    if let Some(s) = system {
        out.push(json!({"role": "system", "content": s}));
    }
    for m in messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        out.push(json!({"role": role, "content": m.content}));
    }
    out
}

#[derive(Deserialize)]
struct CompletionPayload {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<usize>,
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Decodes a chat-completions payload into completions ordered by choice index.
pub fn decode_chat(payload: Value) -> Result<ChatResponse, ProviderError> {
    let mut p: CompletionPayload =
        serde_json::from_value(payload).map_err(|e| ProviderError::Decode(e.to_string()))?;
    p.choices.sort_by_key(|c| c.index.unwrap_or(usize::MAX));
    let completions = p
        .choices
        .into_iter()
        .map(|c| {
            c.message
                .content
                .ok_or_else(|| ProviderError::Decode("choice without content".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChatResponse {
        completions,
        usage: p.usage,
    })
}

pub fn decode_reward(payload: &Value) -> Result<f64, ProviderError> {
    for key in ["reward", "score"] {
        if let Some(v) = payload.get(key).and_then(Value::as_f64) {
            return Ok(v);
        }
    }
    let content = payload
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Decode("reward payload has no reward field".into()))?;
    let trimmed = content.trim();
    let number = trimmed
        .rsplit_once(':')
        .map(|(_, n)| n.trim())
        .unwrap_or(trimmed);
    number
        .parse::<f64>()
        .map_err(|_| ProviderError::Decode(format!("cannot read reward from {content:?}")))
}

pub fn decode_embeddings(payload: Value) -> Result<Vec<Vec<f64>>, ProviderError> {
    #[derive(Deserialize)]
    struct Item {
        #[serde(default)]
        index: Option<usize>,
        embedding: Vec<f64>,
    }
    #[derive(Deserialize)]
    struct Payload {
        data: Vec<Item>,
    }
    let mut p: Payload =
        serde_json::from_value(payload).map_err(|e| ProviderError::Decode(e.to_string()))?;
    p.data.sort_by_key(|i| i.index.unwrap_or(usize::MAX));
    Ok(p.data.into_iter().map(|i| i.embedding).collect())
}

impl Provider for HttpProvider {
    fn cache_namespace(&self) -> String {
        format!(
            "http:{}:{}:{}:{}",
            self.settings.base_url,
            self.settings.chat_model,
            self.settings.reward_model,
            self.settings.embedding_model
        )
    }

    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let body = json!({
            "model": self.settings.chat_model,
            "messages": wire_messages(request.system.as_deref(), &request.messages),
            "temperature": request.temperature,
            "n": request.n_samples,
            "max_tokens": request.max_tokens,
        });
        decode_chat(self.post("chat/completions", &body)?)
    }

    fn score(&self, request: &RewardRequest) -> Result<f64, ProviderError> {
        let body = json!({
            "model": self.settings.reward_model,
            "messages": wire_messages(None, &request.transcript),
        });
        decode_reward(&self.post("chat/completions", &body)?)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let body = json!({
            "model": self.settings.embedding_model,
            "input": texts,
        });
        decode_embeddings(self.post("embeddings", &body)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_payload_in_index_order() {
        let p = json!({
            "choices": [
                {"index": 1, "message": {"role": "assistant", "content": "b"}},
                {"index": 0, "message": {"role": "assistant", "content": "a"}}
            ],
            "usage": {"prompt_tokens": 7, "completion_tokens": 2, "total_tokens": 9}
        });
        let r = decode_chat(p).unwrap();
        assert_eq!(r.completions, vec!["a", "b"]);
        assert_eq!(r.usage.unwrap().prompt_tokens, 7);
        assert!(decode_chat(json!({"nope": 1})).is_err());
    }

    #[test]
    fn reward_payload_forms() {
        assert_eq!(decode_reward(&json!({"reward": -7.5})).unwrap(), -7.5);
        assert_eq!(decode_reward(&json!({"score": 2})).unwrap(), 2.0);
        let nv = json!({"choices": [{"message": {"content": "reward:-12.25"}}]});
        assert_eq!(decode_reward(&nv).unwrap(), -12.25);
        let bare = json!({"choices": [{"message": {"content": " 3.5 "}}]});
        assert_eq!(decode_reward(&bare).unwrap(), 3.5);
        assert!(decode_reward(&json!({"choices": [{"message": {"content": "great"}}]})).is_err());
    }

    #[test]
    fn embedding_payload() {
        let p = json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]}
        ]});
        assert_eq!(decode_embeddings(p).unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }
}
