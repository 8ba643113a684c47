//! Skill-label selection: prompt construction, completion clients and a
//! keyword-rule fallback.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grounding::{tokenize, Instruction};
use crate::skills::SkillLabel;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("no label list in completion: {0:?}")]
    ParseFailure(String),
    #[error("unknown skill '{0}'")]
    UnknownSkill(String),
    #[error("completion client: {0}")]
    Client(String),
    #[error("no fixture for prompt {0}")]
    FixtureMissing(String),
    #[error("routing failed for {instruction:?}: {reason}")]
    RoutingFailure { instruction: String, reason: String },
}

pub type Result<T> = std::result::Result<T, RouterError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptExample {
    pub instruction: String,
    pub labels: Vec<SkillLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub examples: Vec<PromptExample>,
    pub stop: String,
}

const STANDARD_EXAMPLES: [(&str, &[SkillLabel]); 9] = {
    use SkillLabel::*;
    [
        ("Pick up the lemon", &[Pick]),
        ("Put the screwdriver away", &[Pick, Place]),
        (
            "Pls grab me the screwdriver and put it away",
            &[Pick, Place],
        ),
        ("Grab the green bowl", &[Pick]),
        ("Put the lemon in the bowl", &[Pick, Place]),
        ("Open the top drawer", &[Open]),
        ("Pls shut the drawer", &[Close]),
        ("put the expo marker away", &[Pick, Place]),
        ("put the Blue lego in the cabinet", &[Pick, Place]),
    ]
};

impl PromptTemplate {
    /// The nine tabletop instruction/label pairs used for in-context routing.
    pub fn standard() -> Self {
        Self {
            examples: STANDARD_EXAMPLES
                .iter()
                .map(|(i, l)| PromptExample {
                    instruction: i.to_string(),
                    labels: l.to_vec(),
                })
                .collect(),
            stop: "\n".to_string(),
        }
    }

    pub fn empty() -> Self {
        Self {
            examples: Vec::new(),
            stop: "\n".to_string(),
        }
    }
}

pub fn format_labels(labels: &[SkillLabel]) -> String {
    let items: Vec<String> = labels.iter().map(|l| format!("\"{l}\"")).collect();
    format!("[{}]", items.join(", "))
}

fn format_example(instruction: &str, labels: &[SkillLabel]) -> String {
    format!(
        "Input: \"{instruction}\"\nOutput: {}\n\n",
        format_labels(labels)
    )
}

fn stanza(instruction: &str) -> String {
    format!("Input: \"{instruction}\"\nOutput:")
}

pub fn build_prompt(instruction: &Instruction, template: &PromptTemplate) -> String {
    let mut out = String::new();
    for ex in &template.examples {
        out.push_str(&format_example(&ex.instruction, &ex.labels));
    }
    out.push_str(&stanza(instruction.as_str()));
    out
}

/// Parses the first bracketed list of quoted labels. Quotes are optional per
/// item and `grasp` is read as `pick`.
pub fn parse_labels(completion: &str) -> Result<Vec<SkillLabel>> {
    let fail = || RouterError::ParseFailure(completion.to_string());
    let start = completion.find('[').ok_or_else(fail)?;
    let len = completion[start..].find(']').ok_or_else(fail)?;
    let inner = &completion[start + 1..start + len];
    let mut labels = Vec::new();
    for item in inner.split(',') {
        let name = item
            .trim()
            .trim_matches(|c| c == '"' || c == '\'')
            .trim()
            .to_lowercase();
        if name.is_empty() {
            return Err(fail());
        }
        let name = if name == "grasp" {
            "pick".to_string()
        } else {
            name
        };
        labels.push(
            name.parse::<SkillLabel>()
                .map_err(|_| RouterError::UnknownSkill(name))?,
        );
    }
    Ok(labels)
}

fn any(tokens: &[String], words: &[&str]) -> bool {
    tokens.iter().any(|t| words.contains(&t.as_str()))
}

/// Keyword-table routing.
pub fn rule_labels(instruction: &str) -> Option<Vec<SkillLabel>> {
    use SkillLabel::*;
    let t = tokenize(instruction);
    let coffee_machine = any(&t, &["keurig", "machine", "reservoir", "coffeemaker"]);
    if any(&t, &["refill"]) || (coffee_machine && any(&t, &["pour", "water", "fill"])) {
        return Some(vec![RefillKeurig]);
    }
    if any(&t, &["pod", "pods", "capsule"]) {
        return Some(vec![LoadPod]);
    }
    if any(&t, &["pour"]) {
        return Some(vec![PourCup]);
    }
    if any(&t, &["upright", "reorient", "flip", "straighten"]) {
        return Some(vec![ReorientMug]);
    }
    if any(&t, &["close", "shut", "push"]) {
        return Some(vec![Close]);
    }
    if any(&t, &["open", "yank", "tug", "peek"]) {
        return Some(vec![Open]);
    }
    if any(&t, &["in", "into", "away", "inside", "onto"])
        || any(&t, &["put", "place", "stow", "drop"])
    {
        return Some(vec![Pick, Place]);
    }
    if any(
        &t,
        &[
            "pick", "grab", "get", "fetch", "pass", "hand", "locate", "grasp", "take", "lift",
        ],
    ) {
        return Some(vec![Pick]);
    }
    None
}

pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Answers the final `Input:` stanza of a prompt with the keyword table.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleClient;

fn final_instruction(prompt: &str) -> Option<&str> {
    let body = prompt.strip_suffix("\nOutput:")?;
    let start = body.rfind("Input: \"")? + "Input: \"".len();
    body[start..].strip_suffix('"')
}

impl CompletionClient for RuleClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let instruction = final_instruction(prompt)
            .ok_or_else(|| RouterError::Client("prompt has no Input stanza".into()))?;
        let labels = rule_labels(instruction)
            .ok_or_else(|| RouterError::Client(format!("no rule matches {instruction:?}")))?;
        Ok(format!(" {}", format_labels(&labels)))
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub prompt: String,
    pub completion: String,
}

/// Recorded completions keyed by the SHA-256 of the prompt.
#[derive(Debug, Clone)]
pub struct FixtureClient {
    dir: PathBuf,
}

impl FixtureClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.json", prompt_hash(prompt)))
    }

    pub fn record(&self, prompt: &str, completion: &str) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path_for(prompt);
        let fixture = Fixture {
            prompt: prompt.to_string(),
            completion: completion.to_string(),
        };
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&fixture).map_err(std::io::Error::other)?,
        )?;
        Ok(path)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl CompletionClient for FixtureClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let path = self.path_for(prompt);
        let text = std::fs::read_to_string(&path)
            .map_err(|_| RouterError::FixtureMissing(prompt_hash(prompt)))?;
        let fixture: Fixture = serde_json::from_str(&text)
            .map_err(|e| RouterError::Client(format!("{}: {e}", path.display())))?;
        Ok(fixture.completion)
    }
}

pub const URL_ENV: &str = "MANIP_LLM_URL";
pub const TOKEN_ENV: &str = "MANIP_LLM_TOKEN";
pub const MODEL_ENV: &str = "MANIP_LLM_MODEL";

/// OpenAI-style `/completions` endpoint. Requests are serialised.
pub struct RemoteClient {
    url: String,
    token: Option<String>,
    model: String,
    stop: String,
    lock: Mutex<()>,
}

impl RemoteClient {
    pub fn new(base_url: &str, token: Option<String>, model: &str) -> Self {
        Self {
            url: format!("{}/completions", base_url.trim_end_matches('/')),
            token,
            model: model.to_string(),
            stop: "\n".to_string(),
            lock: Mutex::new(()),
        }
    }

    /// Reads the endpoint from the environment; `None` when no URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(URL_ENV).ok()?;
        let model = std::env::var(MODEL_ENV).unwrap_or_else(|_| "text-davinci-003".into());
        Some(Self::new(&url, std::env::var(TOKEN_ENV).ok(), &model))
    }
}

impl CompletionClient for RemoteClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let body = serde_json::json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": 32,
            "temperature": 0.0,
            "stop": [self.stop],
        });
        let mut req = ureq::post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| RouterError::Client(e.to_string()))?;
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| RouterError::Client(e.to_string()))?;
        value["choices"][0]["text"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| RouterError::Client("response has no choices[0].text".into()))
    }
}

/// Prompt → client → parse. Client errors fall back to the keyword table;
/// malformed or unknown labels are reported as-is.
pub fn select_skills(
    instruction: &Instruction,
    client: &dyn CompletionClient,
    template: &PromptTemplate,
) -> Result<Vec<SkillLabel>> {
    let prompt = build_prompt(instruction, template);
    let labels = match client.complete(&prompt) {
        Ok(completion) => parse_labels(&completion)?,
        Err(client_err) => {
            rule_labels(instruction.as_str()).ok_or_else(|| RouterError::RoutingFailure {
                instruction: instruction.as_str().to_string(),
                reason: client_err.to_string(),
            })?
        }
    };
    if labels.is_empty() {
        return Err(RouterError::ParseFailure(String::new()));
    }
    Ok(labels)
}
