//! Chat-completion service contract, the deterministic mock, and the HTTP
//! client used for query enhancement, intent judging and triplet generation.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::tokenize::tokenize;

/// LLM service contract. Returns completion text or a transport error,
/// never a silent empty string.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str, max_tokens: usize, temperature: f64) -> Result<String>;
    fn tag(&self) -> &str;
}

/// Deterministic offline stand-in. Responses are either canned (first rule
/// whose needle occurs in the prompt wins) or derived from the prompt's own
/// tokens, so identical prompts always yield identical output.
pub struct MockLlm {
    rules: Vec<(String, String)>,
    fixed: Option<String>,
    tag: String,
}

impl MockLlm {
    /// Echo mode: answer with a line built from the prompt's salient tokens.
    pub fn echo() -> Self {
        MockLlm {
            rules: Vec::new(),
            fixed: None,
            tag: "mock-llm-echo".into(),
        }
    }

    /// Always answer with the same text.
    pub fn always(text: impl Into<String>) -> Self {
        MockLlm {
            rules: Vec::new(),
            fixed: Some(text.into()),
            tag: "mock-llm-fixed".into(),
        }
    }

    /// Add a canned response triggered when `needle` occurs in the prompt.
    pub fn with_rule(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push((needle.into(), response.into()));
        self
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &str, _max_tokens: usize, _temperature: f64) -> Result<String> {
        for (needle, response) in &self.rules {
            if prompt.contains(needle.as_str()) {
                return Ok(response.clone());
            }
        }
        if let Some(fixed) = &self.fixed {
            return Ok(fixed.clone());
        }
        // Echo: a stable digest of the prompt's trailing tokens. Trailing,
        // because prompts put the variable part (the code) after the template.
        let tokens = tokenize(prompt);
        let tail: Vec<&String> = tokens.iter().rev().take(24).collect();
        let mut words: Vec<&str> = tail.into_iter().rev().map(|s| s.as_str()).collect();
        words.dedup();
        if words.is_empty() {
            return Err(Error::transport("mock-llm", "prompt had no tokens"));
        }
        Ok(format!("INTENT: complete the code using {}", words.join(" ")))
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

/// HTTP JSON chat client. Accepts either `{"text": ...}` or an
/// OpenAI-style `{"choices":[{"message":{"content": ...}}]}` response body.
pub struct HttpLlm {
    endpoint: String,
    tag: String,
    client: reqwest::blocking::Client,
    auth_token: Option<String>,
    max_retries: usize,
}

impl HttpLlm {
    pub fn new(
        endpoint: impl Into<String>,
        auth_env_var: Option<&str>,
        timeout: std::time::Duration,
    ) -> Result<Self> {
        let endpoint = endpoint.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::transport("llm", e.to_string()))?;
        let auth_token = auth_env_var.and_then(|var| std::env::var(var).ok());
        Ok(HttpLlm {
            tag: format!("http:{endpoint}"),
            endpoint,
            client,
            auth_token,
            max_retries: 1,
        })
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &str, max_tokens: usize, temperature: f64) -> Result<String> {
        let body = json!({
            "messages": [ChatMessage { role: "user", content: prompt }],
            "max_tokens": max_tokens,
            "temperature": temperature,
        });
        let mut last_err = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(std::time::Duration::from_millis(200));
            }
            let mut req = self.client.post(&self.endpoint).json(&body);
            if let Some(token) = &self.auth_token {
                req = req.bearer_auth(token);
            }
            match req.send().and_then(|r| r.error_for_status()) {
                Ok(resp) => {
                    let parsed: ChatResponse = resp
                        .json()
                        .map_err(|e| Error::transport("llm", e.to_string()))?;
                    let text = parsed
                        .text
                        .or_else(|| parsed.choices.into_iter().next().map(|c| c.message.content))
                        .unwrap_or_default();
                    if text.is_empty() {
                        return Err(Error::transport("llm", "empty completion"));
                    }
                    return Ok(text);
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(Error::transport("llm", last_err))
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_is_deterministic() {
        let llm = MockLlm::echo();
        let a = llm.complete("describe this: var x = commonGrp.push(y)", 64, 0.0).unwrap();
        let b = llm.complete("describe this: var x = commonGrp.push(y)", 64, 0.0).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("INTENT:"));
    }

    #[test]
    fn rules_take_precedence() {
        let llm = MockLlm::echo().with_rule("task-42", "Yes.");
        assert_eq!(llm.complete("judge task-42 now", 8, 0.0).unwrap(), "Yes.");
        assert!(llm.complete("other", 8, 0.0).unwrap().starts_with("INTENT:"));
    }

    #[test]
    fn empty_prompt_errors_rather_than_silently_empty() {
        let llm = MockLlm::echo();
        assert!(llm.complete("...", 8, 0.0).is_err());
    }
}
