//! Declarative YAML configuration.
//!
//! Every section and key is optional; omitted keys take the defaults written
//! out in [`DEFAULT_CONFIG_YAML`]. Unknown keys are rejected. Bounds are
//! checked by [`PipelineConfig::validate`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::expander::ExpanderParams;
use crate::index::Bm25Params;
use crate::pipeline::PipelineSettings;
use crate::reader::ReaderParams;
use crate::relsnip::RelSnipParams;

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_CONFIG_FILE: &str = "relqa.yaml";

/// The file written when no configuration exists yet.
pub const DEFAULT_CONFIG_YAML: &str = r#"# relqa configuration
version: 1

ui:
  title: "relqa"
  description: "Ask questions against an indexed document collection."
  # panels shown by the web console
  views_visible: [documents, answers, expansion, explanations, timings, advanced]

retriever:
  # binary index written by `relqa index`; relative paths resolve against this file
  index_path: index.bin
  k1: 1.2
  b: 0.75
  # documents passed on to the reader
  max_documents: 5
  relsnip:
    enabled: true
    # fragment size in tokens
    k_frag: 100
    # fragments kept per document
    n: 4
    # fragment BM25 statistics: local (fragments of the document) or global (index)
    statistics: local

expander:
  enabled: false
  provider:
    # native (corpus co-occurrence) or remote (fill-mask HTTP endpoint)
    kind: native
    endpoint: null
    timeout_ms: 2000
    max_in_flight: 8
  k_thresh: 0.5
  top_n: 5
  # BM25 query weight of expansion terms
  term_weight: 1.0

reader:
  backend:
    # lexical (built-in baseline) or remote (reader HTTP endpoint)
    kind: lexical
    endpoint: null
    timeout_ms: 5000
    max_in_flight: 8
  max_tokens: 512
  stride: 384
  top_k: 5
"#;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid configuration at {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub version: u32,
    pub ui: UiConfig,
    pub retriever: RetrieverConfig,
    pub expander: ExpanderConfig,
    pub reader: ReaderConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            ui: UiConfig::default(),
            retriever: RetrieverConfig::default(),
            expander: ExpanderConfig::default(),
            reader: ReaderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UiConfig {
    pub title: String,
    pub description: String,
    pub views_visible: Vec<String>,
}

impl Default for UiConfig {
    fn default() -> Self {
        UiConfig {
            title: "relqa".into(),
            description: "Ask questions against an indexed document collection.".into(),
            views_visible: ["documents", "answers", "expansion", "explanations", "timings", "advanced"]
                .map(String::from)
                .to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrieverConfig {
    pub index_path: PathBuf,
    pub k1: f64,
    pub b: f64,
    pub max_documents: usize,
    pub relsnip: RelSnipParams,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        let bm25 = Bm25Params::default();
        RetrieverConfig {
            index_path: PathBuf::from("index.bin"),
            k1: bm25.k1,
            b: bm25.b,
            max_documents: 5,
            relsnip: RelSnipParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Native,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Lexical,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Native,
            endpoint: None,
            timeout_ms: 2000,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpanderConfig {
    pub enabled: bool,
    pub provider: ProviderConfig,
    pub k_thresh: f64,
    pub top_n: usize,
    pub term_weight: f64,
}

impl Default for ExpanderConfig {
    fn default() -> Self {
        let p = ExpanderParams::default();
        ExpanderConfig {
            enabled: p.enabled,
            provider: ProviderConfig::default(),
            k_thresh: p.k_thresh,
            top_n: p.top_n,
            term_weight: p.term_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Lexical,
            endpoint: None,
            timeout_ms: 5000,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReaderConfig {
    pub backend: BackendConfig,
    pub max_tokens: usize,
    pub stride: usize,
    pub top_k: usize,
}

impl Default for ReaderConfig {
    fn default() -> Self {
        let p = ReaderParams::default();
        ReaderConfig {
            backend: BackendConfig::default(),
            max_tokens: p.max_tokens,
            stride: p.stride,
            top_k: p.top_k,
        }
    }
}

impl PipelineConfig {
    pub fn from_yaml(src: &str) -> Result<Self, ConfigError> {
        let de = serde_yaml::Deserializer::from_str(src);
        let config: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "(root)".to_string() } else { path };
            ConfigError::invalid(field, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_yaml(&src)
    }

    /// The per-request pipeline knobs this configuration starts from.
    pub fn settings(&self) -> PipelineSettings {
        PipelineSettings {
            max_documents: self.retriever.max_documents,
            bm25: Bm25Params {
                k1: self.retriever.k1,
                b: self.retriever.b,
            },
            relsnip: self.retriever.relsnip,
            expander: ExpanderParams {
                enabled: self.expander.enabled,
                k_thresh: self.expander.k_thresh,
                top_n: self.expander.top_n,
                term_weight: self.expander.term_weight,
            },
            reader: ReaderParams {
                max_tokens: self.reader.max_tokens,
                stride: self.reader.stride,
                top_k: self.reader.top_k,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::invalid(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        self.settings().validate().map_err(|(field, reason)| {
            let field = match field.as_str() {
                "max_documents" | "k1" | "b" => format!("retriever.{field}"),
                f if f.starts_with("relsnip.") => format!("retriever.{f}"),
                f if f.starts_with("expander.") || f.starts_with("reader.") => f.to_string(),
                f => f.to_string(),
            };
            ConfigError::invalid(field, reason)
        })?;
        check_remote(
            "expander.provider",
            self.expander.provider.kind == ProviderKind::Remote,
            &self.expander.provider.endpoint,
            self.expander.provider.timeout_ms,
            self.expander.provider.max_in_flight,
        )?;
        check_remote(
            "reader.backend",
            self.reader.backend.kind == BackendKind::Remote,
            &self.reader.backend.endpoint,
            self.reader.backend.timeout_ms,
            self.reader.backend.max_in_flight,
        )?;
        Ok(())
    }

    /// Makes a relative `index_path` relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if self.retriever.index_path.is_relative() {
            self.retriever.index_path = base.join(&self.retriever.index_path);
        }
    }
}

fn check_remote(
    section: &str,
    is_remote: bool,
    endpoint: &Option<String>,
    timeout_ms: u64,
    max_in_flight: usize,
) -> Result<(), ConfigError> {
    if is_remote && endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
        return Err(ConfigError::invalid(
            format!("{section}.endpoint"),
            "required when kind is remote",
        ));
    }
    if timeout_ms == 0 {
        return Err(ConfigError::invalid(format!("{section}.timeout_ms"), "must be >= 1"));
    }
    if max_in_flight == 0 {
        return Err(ConfigError::invalid(format!("{section}.max_in_flight"), "must be >= 1"));
    }
    Ok(())
}

/// Where a configuration came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigSource {
    pub path: PathBuf,
    /// True when the default file was just written.
    pub created: bool,
}

/// Loads the configuration at `path`, else `relqa.yaml` in `cwd`; when
/// neither exists, writes the default file into `cwd` and loads that.
pub fn load_or_create_config(
    path: Option<&Path>,
    cwd: &Path,
) -> Result<(PipelineConfig, ConfigSource), ConfigError> {
    let local = cwd.join(DEFAULT_CONFIG_FILE);
    let (target, created) = match path {
        Some(p) if p.is_file() => (p.to_path_buf(), false),
        _ if local.is_file() => (local, false),
        _ => {
            std::fs::write(&local, DEFAULT_CONFIG_YAML).map_err(|source| ConfigError::Io {
                path: local.display().to_string(),
                source,
            })?;
            tracing::info!("wrote default configuration to {}", local.display());
            (local, true)
        }
    };
    let config = PipelineConfig::load(&target)?;
    Ok((config, ConfigSource { path: target, created }))
}
