use std::time::Duration;

use serde_json::{json, Value};

use super::{ClientError, CompletionClient, CompletionRequest, PromptStyle};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "SECKB_API_KEY";
/// Environment variable overriding the API base URL.
pub const API_BASE_ENV: &str = "SECKB_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub max_tokens: u32,
    pub timeout: Duration,
}

impl HttpSettings {
    /// Reads the key and base URL from the environment.
    pub fn from_env(model: &str) -> Result<Self, ClientError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| ClientError::MissingCredentials(API_KEY_ENV.into()))?;
        let base_url = std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_API_BASE.into());
        Ok(HttpSettings {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
            max_tokens: 1024,
            timeout: Duration::from_secs(120),
        })
    }
}

/// Client for OpenAI-compatible `/chat/completions` and `/completions` endpoints.
pub struct HttpClient {
    settings: HttpSettings,
    agent: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(settings: HttpSettings) -> Result<Self, ClientError> {
        let agent = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(HttpClient { settings, agent })
    }

    /// POSTs a JSON body to `<base>/<path>` and returns the parsed reply.
    pub(crate) fn post(
        agent: &reqwest::blocking::Client,
        settings: &HttpSettings,
        path: &str,
        body: &Value,
    ) -> Result<Value, ClientError> {
        let url = format!("{}/{}", settings.base_url, path);
        let resp = agent
            .post(&url)
            .bearer_auth(&settings.api_key)
            .json(body)
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::Malformed(e.to_string()))
    }
}

impl CompletionClient for HttpClient {
    fn model(&self) -> String {
        self.settings.model.clone()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let s = &self.settings;
        let (path, body) = match request.style {
            PromptStyle::Chat => (
                "chat/completions",
                json!({
                    "model": s.model,
                    "messages": [{"role": "user", "content": request.prompt}],
                    "temperature": request.temperature,
                    "max_tokens": s.max_tokens,
                }),
            ),
            PromptStyle::Completion => (
                "completions",
                json!({
                    "model": s.model,
                    "prompt": request.prompt,
                    "temperature": request.temperature,
                    "max_tokens": s.max_tokens,
                }),
            ),
        };
        let reply = Self::post(&self.agent, s, path, &body)?;
        let choice = &reply["choices"][0];
        let text = match request.style {
            PromptStyle::Chat => choice["message"]["content"].as_str(),
            PromptStyle::Completion => choice["text"].as_str(),
        };
        text.map(str::to_string)
            .ok_or_else(|| ClientError::Malformed("reply has no choices[0] text".into()))
    }
}
