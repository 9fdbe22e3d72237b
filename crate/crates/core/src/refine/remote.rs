use std::collections::BTreeMap;
use std::time::Duration;

use num_bigint::BigInt;
use serde::Deserialize;
use serde_json::{json, Value as Json};

use super::{build_prompt, BackendError, Synthesizer, SynthesizerRequest, SynthesizerResponse};
use crate::oracle::{JudgeError, ProfitJudge};
use crate::poc::{Action, PoC, PocMeta};

/// Environment variable read for the bearer token unless configured
/// otherwise.
pub const API_KEY_ENV: &str = "POCFORGE_API_KEY";

const SYSTEM_PROMPT: &str = "You write exploit scripts for a smart-contract test harness. \
Think through the contract before answering, then output only the requested JSON.";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteSettings {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout: Duration,
    pub temperature: f32,
}

impl RemoteSettings {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteSettings {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: API_KEY_ENV.into(),
            timeout: Duration::from_secs(60),
            temperature: 0.2,
        }
    }
}

/// Chat-completion client. Each request carries only the system prompt and
/// the one user prompt, so no conversation state leaks between requests.
pub struct RemoteBackend {
    settings: RemoteSettings,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ScriptReply {
    #[serde(default)]
    setup: Vec<Action>,
    #[serde(default)]
    exploit: Vec<Action>,
    #[serde(default)]
    attacker_fallback: Option<Vec<Action>>,
}

#[derive(Deserialize)]
struct JudgeReply {
    profitable: bool,
    #[serde(default)]
    reason: String,
}

/// Pulls the JSON object out of a reply that may wrap it in prose or a
/// fenced code block.
pub(crate) fn extract_json(text: &str) -> Option<&str> {
    let body = match text.find("```") {
        Some(open) => {
            let after = &text[open + 3..];
            let after = after.find('\n').map_or(after, |nl| &after[nl + 1..]);
            after.find("```").map_or(after, |close| &after[..close])
        }
        None => text,
    };
    let start = body.find('{')?;
    let end = body.rfind('}')?;
    (end > start).then(|| &body[start..=end])
}

impl RemoteBackend {
    pub fn new(settings: RemoteSettings) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(true)
            .build();
        RemoteBackend {
            settings,
            agent: config.into(),
        }
    }

    pub fn settings(&self) -> &RemoteSettings {
        &self.settings
    }

    fn api_key(&self) -> Result<String, BackendError> {
        std::env::var(&self.settings.api_key_env).map_err(|_| {
            BackendError::Unsupported(format!(
                "environment variable {} is not set",
                self.settings.api_key_env
            ))
        })
    }

    /// Sends one prompt and returns the assistant's text.
    pub fn complete(&self, prompt: &str, temperature: f32) -> Result<String, BackendError> {
        let key = self.api_key()?;
        let body = json!({
            "model": self.settings.model,
            "temperature": temperature,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
        });
        let mut resp = self
            .agent
            .post(&self.settings.endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let reply: Json = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::BadResponse("no message content in reply".into()))
    }
}

impl Synthesizer for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn respond(&self, req: &SynthesizerRequest<'_>) -> Result<SynthesizerResponse, BackendError> {
        let prompt = build_prompt(req);
        let raw_text = self.complete(&prompt, self.settings.temperature)?;
        let json = extract_json(&raw_text)
            .ok_or_else(|| BackendError::BadResponse("reply contains no JSON object".into()))?;
        let script: ScriptReply =
            serde_json::from_str(json).map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let meta = req
            .prior
            .map(|p| p.meta.clone())
            .unwrap_or_else(|| PocMeta::seed(req.path.clone()));
        let poc = PoC::new(script.setup, script.exploit, script.attacker_fallback, meta);
        Ok(SynthesizerResponse {
            candidates: vec![poc],
            raw_text,
        })
    }
}

impl ProfitJudge for RemoteBackend {
    fn judge(&self, deltas: &BTreeMap<String, BigInt>) -> Result<(bool, String), JudgeError> {
        let listing: Vec<String> = deltas.iter().map(|(a, d)| format!("{a}: {d}")).collect();
        let prompt = format!(
            "After running an exploit script, the attacker's balances changed by:\n{}\n\
             Did the attacker end up better off? Reply with JSON \
             {{\"profitable\": true|false, \"reason\": \"...\"}}.",
            if listing.is_empty() { "(no change)".to_string() } else { listing.join("\n") }
        );
        let text = self
            .complete(&prompt, 0.0)
            .map_err(|e| JudgeError::Unavailable(e.to_string()))?;
        let json = extract_json(&text).ok_or_else(|| JudgeError::Unavailable("reply contains no JSON".into()))?;
        let reply: JudgeReply =
            serde_json::from_str(json).map_err(|e| JudgeError::Unavailable(e.to_string()))?;
        Ok((reply.profitable, reply.reason))
    }
}
