//! Line-aligned parallel test sets, deterministic sampling and language
//! metadata.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::{SeededRng, GENERATOR_NAME};
use crate::{Error, Result};

/// Reference key used for scoring unless configured otherwise.
pub const DEFAULT_REFERENCE: &str = "A";

const LANGUAGE_NAMES: &[(&str, &str)] = &[
    ("cs", "Czech"),
    ("de", "German"),
    ("en", "English"),
    ("fr", "French"),
    ("ja", "Japanese"),
    ("ru", "Russian"),
    ("sah", "Yakut"),
    ("uk", "Ukrainian"),
    ("zh", "Chinese"),
];

/// English display name for a language tag, as substituted into prompts.
///
/// Built-in codes resolve from a fixed table; anything else must be present
/// in `overrides`.
pub fn language_display_name(code: &str, overrides: &BTreeMap<String, String>) -> Result<String> {
    if let Some((_, name)) = LANGUAGE_NAMES.iter().find(|(c, _)| *c == code) {
        return Ok((*name).to_string());
    }
    match overrides.get(code) {
        Some(name) => Ok(name.clone()),
        None => Err(Error::Config(format!(
            "unknown language code `{code}` and no display-name override"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguagePair {
    pub source_code: String,
    pub target_code: String,
    pub target_display_name: String,
}

impl LanguagePair {
    pub fn new(source_code: &str, target_code: &str, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let pair = LanguagePair {
            source_code: source_code.to_string(),
            target_code: target_code.to_string(),
            target_display_name: language_display_name(target_code, overrides)?,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_code == self.target_code {
            return Err(Error::Config(format!(
                "source and target language are both `{}`",
                self.source_code
            )));
        }
        let name = &self.target_display_name;
        if name.trim().is_empty() || name.contains("${") {
            return Err(Error::Config(format!("invalid target display name {name:?}")));
        }
        Ok(())
    }

    /// `de-en` style label.
    pub fn label(&self) -> String {
        format!("{}-{}", self.source_code, self.target_code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestInstance {
    pub id: usize,
    pub source: String,
    pub references: BTreeMap<String, String>,
    pub pair: LanguagePair,
}

impl TestInstance {
    pub fn reference(&self, key: &str) -> Option<&str> {
        self.references.get(key).map(String::as_str)
    }
}

/// Reads a UTF-8 file into lines. Only the `\n` terminator is removed; a
/// leading byte-order mark is dropped.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, e.utf8_error()),
        )
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    Ok(body.split('\n').map(str::to_string).collect())
}

/// Loads a source file and one file per reference key into aligned
/// instances with ids `0..n` in file order.
pub fn load_parallel_corpus(
    source_path: &Path,
    reference_paths: &BTreeMap<String, PathBuf>,
    pair: &LanguagePair,
) -> Result<Vec<TestInstance>> {
    pair.validate()?;
    let sources = read_lines(source_path)?;
    let mut refs = BTreeMap::new();
    for (key, path) in reference_paths {
        let lines = read_lines(path)?;
        if lines.len() != sources.len() {
            return Err(Error::Alignment {
                left: source_path.to_path_buf(),
                left_lines: sources.len(),
                right: path.clone(),
                right_lines: lines.len(),
            });
        }
        refs.insert(key.clone(), lines);
    }
    sources
        .into_iter()
        .enumerate()
        .map(|(id, source)| {
            if source.trim().is_empty() {
                return Err(Error::Domain(format!(
                    "{}: line {} is empty",
                    source_path.display(),
                    id + 1
                )));
            }
            let references = refs
                .iter()
                .map(|(key, lines)| (key.clone(), lines[id].clone()))
                .collect();
            Ok(TestInstance {
                id,
                source,
                references,
                pair: pair.clone(),
            })
        })
        .collect()
}

/// Content fingerprint of a full test set; identifies the origin of a
/// sample independently of where the files live.
pub fn fingerprint(instances: &[TestInstance]) -> String {
    let mut hasher = Sha256::new();
    for inst in instances {
        hasher.update((inst.id as u64).to_le_bytes());
        update_field(&mut hasher, &inst.source);
        for (key, text) in &inst.references {
            update_field(&mut hasher, key);
            update_field(&mut hasher, text);
        }
    }
    hex::encode(&hasher.finalize()[..16])
}

fn update_field(hasher: &mut Sha256, text: &str) {
    hasher.update((text.len() as u64).to_le_bytes());
    hasher.update(text.as_bytes());
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledSet {
    pub origin: String,
    /// Number of instances in the origin set.
    pub population: usize,
    pub seed: u64,
    pub size: usize,
    pub instances: Vec<TestInstance>,
}

impl SampledSet {
    pub fn ids(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.id).collect()
    }

    pub fn pair(&self) -> Option<&LanguagePair> {
        self.instances.first().map(|i| &i.pair)
    }

    pub fn get(&self, id: usize) -> Option<&TestInstance> {
        self.instances.iter().find(|i| i.id == id)
    }
}

/// Uniform sample without replacement, in selection order.
pub fn sample_instances(full: &[TestInstance], size: usize, seed: u64) -> Result<SampledSet> {
    if size == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    if size > full.len() {
        return Err(Error::Domain(format!(
            "cannot sample {size} instances from a population of {}",
            full.len()
        )));
    }
    let picks = SeededRng::new(seed).sample_indices(full.len(), size);
    Ok(SampledSet {
        origin: fingerprint(full),
        population: full.len(),
        seed,
        size,
        instances: picks.into_iter().map(|i| full[i].clone()).collect(),
    })
}

/// On-disk description of a sample: enough to redraw it from the original
/// files and the sampled texts themselves for direct reloading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub generator: String,
    pub source_path: PathBuf,
    pub reference_paths: BTreeMap<String, PathBuf>,
    pub ids: Vec<usize>,
    pub set: SampledSet,
}

impl SampleManifest {
    pub fn new(set: &SampledSet, source_path: &Path, reference_paths: &BTreeMap<String, PathBuf>) -> Self {
        SampleManifest {
            generator: GENERATOR_NAME.to_string(),
            source_path: source_path.to_path_buf(),
            reference_paths: reference_paths.clone(),
            ids: set.ids(),
            set: set.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json("sample manifest", e))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: SampleManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if manifest.ids != manifest.set.ids() || manifest.set.size != manifest.set.instances.len() {
            return Err(Error::Domain(format!(
                "{}: manifest ids disagree with the stored sample",
                path.display()
            )));
        }
        Ok(manifest)
    }

    /// Reloads the corpus from the recorded paths and redraws the sample,
    /// failing if the files no longer match the recorded origin.
    pub fn redraw(&self) -> Result<SampledSet> {
        let pair = self
            .set
            .pair()
            .cloned()
            .ok_or_else(|| Error::Domain("empty sample manifest".into()))?;
        let full = load_parallel_corpus(&self.source_path, &self.reference_paths, &pair)?;
        let set = sample_instances(&full, self.set.size, self.set.seed)?;
        if set.origin != self.set.origin {
            return Err(Error::Domain(format!(
                "corpus at {} changed since the sample was drawn",
                self.source_path.display()
            )));
        }
        Ok(set)
    }
}
