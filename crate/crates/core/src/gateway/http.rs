//! OpenAI-compatible HTTP backends.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, Embedder, EmbeddingVector, GatewayError};

/// Provider settings, normally read from `REFLEXA_*` environment variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub api_key: Option<String>,
    pub api_base: String,
    pub chat_model: String,
    pub embed_model: String,
    pub mock: bool,
    pub temperature: f64,
    pub timeout: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            api_key: None,
            api_base: "https://api.openai.com/v1".to_string(),
            chat_model: "gpt-4o".to_string(),
            embed_model: "text-embedding-ada-002".to_string(),
            mock: false,
            temperature: 0.0,
            timeout: Duration::from_secs(120),
        }
    }
}

impl ProviderConfig {
    pub fn from_env() -> Self {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Self {
        let d = Self::default();
        let nonempty = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        Self {
            api_key: nonempty("REFLEXA_API_KEY"),
            api_base: nonempty("REFLEXA_API_BASE").unwrap_or(d.api_base),
            chat_model: nonempty("REFLEXA_CHAT_MODEL").unwrap_or(d.chat_model),
            embed_model: nonempty("REFLEXA_EMBED_MODEL").unwrap_or(d.embed_model),
            mock: get("REFLEXA_MOCK").as_deref() == Some("1"),
            temperature: nonempty("REFLEXA_TEMPERATURE")
                .and_then(|t| t.parse().ok())
                .unwrap_or(d.temperature),
            timeout: d.timeout,
        }
    }

    fn client(&self) -> Result<(reqwest::blocking::Client, String), GatewayError> {
        let key = self
            .api_key
            .clone()
            .ok_or_else(|| GatewayError::Config("REFLEXA_API_KEY is not set".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok((client, key))
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.api_base.trim_end_matches('/'))
    }
}

fn post(client: &reqwest::blocking::Client, url: &str, key: &str, body: &Value) -> Result<Value, GatewayError> {
    let resp = client
        .post(url)
        .bearer_auth(key)
        .json(body)
        .send()
        .map_err(|e| GatewayError::Provider(e.to_string()))?;
    let status = resp.status();
    let text = resp.text().map_err(|e| GatewayError::Provider(e.to_string()))?;
    if !status.is_success() {
        return Err(GatewayError::Provider(format!("HTTP {status}: {text}")));
    }
    serde_json::from_str(&text).map_err(|e| GatewayError::Provider(format!("bad response body: {e}")))
}

pub struct HttpBackend {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
    key: String,
}

impl HttpBackend {
    pub fn new(config: ProviderConfig) -> Result<Self, GatewayError> {
        let (client, key) = config.client()?;
        Ok(Self { config, client, key })
    }
}

impl ChatBackend for HttpBackend {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, GatewayError> {
        let body = json!({
            "model": request.model,
            "temperature": self.config.temperature,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let resp = post(&self.client, &self.config.url("chat/completions"), &self.key, &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Provider("response has no message content".into()))
    }
}

pub struct HttpEmbedder {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
    key: String,
}

impl HttpEmbedder {
    pub fn new(config: ProviderConfig) -> Result<Self, GatewayError> {
        let (client, key) = config.client()?;
        Ok(Self { config, client, key })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let body = json!({"model": self.config.embed_model, "input": text});
        let resp = post(&self.client, &self.config.url("embeddings"), &self.key, &body)?;
        let values: Vec<f64> = resp
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Provider("response has no embedding".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| GatewayError::Provider("non-numeric embedding".into())))
            .collect::<Result<_, _>>()?;
        EmbeddingVector::new(values)
    }
}
