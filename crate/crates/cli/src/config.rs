//! Optional TOML defaults for `translate`. Command-line flags win over the
//! file. Credentials are never read from here: the backend table only names
//! the environment variable that holds the key.
//!
//! ```toml
//! [prompt]
//! template = "cot_tgt"
//! exemplars = "seen"
//! shots = 3
//! system_name = "gpt-4"
//!
//! [backend]
//! kind = "http_chat"
//! endpoint_url = "https://api.openai.com/v1/chat/completions"
//! credential_env_var = "OPENAI_API_KEY"
//! ```

use std::path::Path;

use anyhow::{Context, Result};
use gnt_core::BackendConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptDefaults {
    pub template: Option<String>,
    pub exemplars: Option<String>,
    pub shots: Option<usize>,
    pub system_name: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub prompt: PromptDefaults,
    pub backend: BackendConfig,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}
