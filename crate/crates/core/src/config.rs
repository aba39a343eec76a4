//! Run configuration, read from TOML. Relative paths are resolved against
//! the directory of the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{LanguagePair, DEFAULT_REFERENCE};
use crate::gateway::BackendConfig;
use crate::metrics::{ScorerConfig, TokenizerKind};
use crate::pipeline::{SelectionMetric, Strategy};
use crate::prompts::PromptKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub source: PathBuf,
    /// Reference files by key ("A", "B", ...). May be empty for QE-only runs.
    #[serde(default)]
    pub references: BTreeMap<String, PathBuf>,
    pub source_lang: String,
    pub target_lang: String,
    /// Display names for language codes missing from the built-in table.
    #[serde(default)]
    pub language_names: BTreeMap<String, String>,
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub sample_seed: u64,
}

fn default_iterations() -> u32 {
    Strategy::DEFAULT_ITERATIONS
}

fn default_max_iterations() -> u32 {
    16
}

fn default_strategies() -> Vec<PromptKind> {
    vec![
        PromptKind::Refine,
        PromptKind::RefineContrast,
        PromptKind::RefineRandom,
        PromptKind::Paraphrase,
    ]
}

fn default_reference() -> String {
    DEFAULT_REFERENCE.to_string()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_strategies")]
    pub strategies: Vec<PromptKind>,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    #[serde(default)]
    pub random_target_seed: u64,
    /// Reference used for text metrics, DA and random targets.
    #[serde(default = "default_reference")]
    pub reference: String,
    #[serde(default)]
    pub selection_metric: SelectionMetric,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Optional prompt template overrides.
    pub templates: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            strategies: default_strategies(),
            iterations: default_iterations(),
            max_iterations: default_max_iterations(),
            random_target_seed: 0,
            reference: default_reference(),
            selection_metric: SelectionMetric::default(),
            output_dir: default_output_dir(),
            templates: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Openai,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSection {
    #[serde(default)]
    pub kind: BackendKind,
    /// Mock script name: identity, shuffle or drift.
    pub script: Option<String>,
    #[serde(default)]
    pub script_seed: u64,
    pub cache_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub config: BackendConfig,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Openai,
            script: None,
            script_seed: 0,
            cache_dir: None,
            config: BackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSection {
    /// Reference-based neural scorer.
    pub da: Option<ScorerConfig>,
    /// Reference-free neural scorer, used for iteration selection.
    pub qe: Option<ScorerConfig>,
}

/// Submissions to refine instead of the model's own translations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSection {
    /// System name → hypothesis file, line-aligned with the full test set.
    #[serde(default)]
    pub systems: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub scorers: ScorerSection,
    /// Replaces the built-in tokenizer for text metrics.
    pub tokenizer: Option<TokenizerKind>,
    #[serde(default)]
    pub external: ExternalSection,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus.source);
        for p in self.corpus.references.values_mut() {
            resolve(base, p);
        }
        resolve(base, &mut self.run.output_dir);
        if let Some(p) = &mut self.run.templates {
            resolve(base, p);
        }
        if let Some(p) = &mut self.backend.cache_dir {
            resolve(base, p);
        }
        for p in self.external.systems.values_mut() {
            resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.language_pair()?;
        self.backend.config.validate()?;
        self.strategies()?;
        if self.backend.kind == BackendKind::Mock {
            let name = self.backend.script.as_deref().unwrap_or("identity");
            if crate::gateway::mock::MockScript::by_name(name, 0).is_none() {
                return Err(Error::Config(format!("unknown mock script `{name}`")));
            }
        }
        if let Some(da) = &self.scorers.da {
            if !da.reference_based() {
                return Err(Error::Config(format!("DA scorer `{}` must be reference-based", da.id())));
            }
        }
        if let Some(qe) = &self.scorers.qe {
            if qe.reference_based() {
                return Err(Error::Config(format!("QE scorer `{}` must be reference-free", qe.id())));
            }
        }
        if self.corpus.sample_size == Some(0) {
            return Err(Error::Config("sample_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn language_pair(&self) -> Result<LanguagePair> {
        LanguagePair::new(
            &self.corpus.source_lang,
            &self.corpus.target_lang,
            &self.corpus.language_names,
        )
    }

    /// Configured refinement strategies, each with the configured T.
    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        let mut seen = Vec::new();
        for &kind in &self.run.strategies {
            if kind == PromptKind::Translate {
                return Err(Error::Config(
                    "translate is always run as the base and cannot be listed as a strategy".into(),
                ));
            }
            if seen.iter().any(|s: &Strategy| s.kind == kind) {
                return Err(Error::Config(format!("strategy `{kind}` listed twice")));
            }
            let strategy = Strategy::new(kind, self.run.iterations);
            strategy.validate(self.run.max_iterations)?;
            seen.push(strategy);
        }
        Ok(seen)
    }

    /// Tokenizer for text metrics, or `None` when the target language has
    /// no built-in tokenizer and no hook is configured.
    pub fn text_tokenizer(&self) -> Option<TokenizerKind> {
        TokenizerKind::for_language(&self.corpus.target_lang, self.tokenizer.as_ref()).ok()
    }
}
