//! Response generators behind `/chat`.
//!
//! The mock generator replays a script of `(pattern, payload, response)`
//! entries; the proxy forwards to a chat-completions endpoint. Either way the
//! output is only text plus claims: labels are computed afterwards.

use std::time::Duration;

use regex::Regex;
use serde::Deserialize;
use serde_json::value::RawValue;

use pcn_core::{ingest_retriever_payload, ClaimError, ClaimSet};

/// Instruction prepended to every proxied conversation.
pub const CLAIM_TAG_PROMPT: &str = "When you provide any numerical data or values obtained from the tools, \
you must always enclose the numbers within a claim tag in the following format: \
`<claim id=\"claim_id\">\"value\"</claim>`. For example, \"The GDP of the Philippines in 2020 is \
<claim id=\"5e1f\">361,751,145,451.597</claim> USD\". This is mandatory.";

pub const DEFAULT_FALLBACK: &str = "I could not find data to answer that question.";

const DEFAULT_SCRIPT: &str = include_str!("../scripts/gdp_growth.json");

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("invalid script: {0}")]
    Script(String),
    #[error("invalid pattern `{pattern}`: {message}")]
    Pattern { pattern: String, message: String },
    #[error("script entry {index}: {source}")]
    Payload { index: usize, source: ClaimError },
    #[error("generator unavailable: {0}")]
    Unavailable(String),
}

/// Text produced for one user message, with the claims the retriever side
/// supplied alongside it.
#[derive(Debug, Clone, Default)]
pub struct Generation {
    pub text: String,
    pub claims: Option<ClaimSet>,
}

#[derive(Debug, Clone)]
struct ScriptEntry {
    pattern: Regex,
    claims: Option<ClaimSet>,
    response: String,
}

#[derive(Debug, Clone)]
pub struct MockScript {
    entries: Vec<ScriptEntry>,
    fallback: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile<'a> {
    #[serde(borrow)]
    entries: Vec<EntryFile<'a>>,
    #[serde(default)]
    fallback: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile<'a> {
    pattern: String,
    #[serde(borrow, default)]
    payload: Option<&'a RawValue>,
    response: String,
}

impl MockScript {
    /// Parses `{"entries":[{"pattern","payload"?,"response"}],"fallback"?}`.
    /// Payloads are retriever payloads; their numbers keep full precision.
    pub fn from_json(bytes: &[u8]) -> Result<Self, GeneratorError> {
        let file: ScriptFile = serde_json::from_slice(bytes).map_err(|e| GeneratorError::Script(e.to_string()))?;
        let mut entries = Vec::with_capacity(file.entries.len());
        for (index, entry) in file.entries.into_iter().enumerate() {
            let pattern = Regex::new(&entry.pattern).map_err(|e| GeneratorError::Pattern {
                pattern: entry.pattern.clone(),
                message: e.to_string(),
            })?;
            let claims = entry
                .payload
                .map(|raw| ingest_retriever_payload(raw.get().as_bytes()))
                .transpose()
                .map_err(|source| GeneratorError::Payload { index, source })?;
            entries.push(ScriptEntry {
                pattern,
                claims,
                response: entry.response,
            });
        }
        Ok(MockScript {
            entries,
            fallback: file.fallback.unwrap_or_else(|| DEFAULT_FALLBACK.to_string()),
        })
    }

    /// The GDP growth scenario: one claim, one response quoting it rounded.
    pub fn gdp_growth() -> Self {
        MockScript::from_json(DEFAULT_SCRIPT.as_bytes()).expect("bundled script is valid")
    }

    /// First entry whose pattern matches, or the fallback with no claims.
    pub fn reply(&self, message: &str) -> Generation {
        match self.entries.iter().find(|e| e.pattern.is_match(message)) {
            Some(entry) => Generation {
                text: entry.response.clone(),
                claims: entry.claims.clone(),
            },
            None => Generation {
                text: self.fallback.clone(),
                claims: None,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    pub url: String,
    pub model: Option<String>,
    pub timeout: Duration,
}

impl ProxyConfig {
    pub fn new(url: impl Into<String>) -> Self {
        ProxyConfig {
            url: url.into(),
            model: None,
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Generator {
    Mock(MockScript),
    Proxy {
        config: ProxyConfig,
        client: reqwest::Client,
    },
}

impl Generator {
    pub fn proxy(config: ProxyConfig) -> Result<Self, GeneratorError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GeneratorError::Unavailable(e.to_string()))?;
        Ok(Generator::Proxy { config, client })
    }

    pub async fn generate(&self, message: &str) -> Result<Generation, GeneratorError> {
        match self {
            Generator::Mock(script) => Ok(script.reply(message)),
            Generator::Proxy { config, client } => forward(client, config, message).await,
        }
    }
}

/// Upstream reply: the usual `choices[0].message.content`, plus an optional
/// `retriever_payload` for upstreams that ran tools on our behalf.
#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    #[serde(default)]
    retriever_payload: Option<Box<RawValue>>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

async fn forward(client: &reqwest::Client, config: &ProxyConfig, message: &str) -> Result<Generation, GeneratorError> {
    let mut body = serde_json::json!({
        "messages": [
            {"role": "system", "content": CLAIM_TAG_PROMPT},
            {"role": "user", "content": message},
        ],
        "stream": false,
    });
    if let Some(model) = &config.model {
        body["model"] = model.clone().into();
    }
    let unavailable = |e: reqwest::Error| GeneratorError::Unavailable(e.to_string());
    let response = client
        .post(&config.url)
        .json(&body)
        .send()
        .await
        .map_err(unavailable)?
        .error_for_status()
        .map_err(unavailable)?;
    let bytes = response.bytes().await.map_err(unavailable)?;
    let completion: Completion =
        serde_json::from_slice(&bytes).map_err(|e| GeneratorError::Unavailable(format!("unexpected reply: {e}")))?;
    let text = completion
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| GeneratorError::Unavailable("reply carries no message content".to_string()))?;
    if !text.contains("<claim") {
        tracing::info!("upstream reply carries no claim tags");
    }
    let claims = completion
        .retriever_payload
        .map(|raw| ingest_retriever_payload(raw.get().as_bytes()))
        .transpose()
        .map_err(|e| GeneratorError::Unavailable(format!("retriever payload: {e}")))?;
    Ok(Generation { text, claims })
}
