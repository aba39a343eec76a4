use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BackendConfig;
use crate::{Error, Result};

/// Digest over everything that can change a completion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(config: &BackendConfig, prompt_text: &str) -> Self {
        let mut h = Sha256::new();
        for field in [config.endpoint.as_str(), config.model.as_str()] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field.as_bytes());
        }
        h.update(config.temperature.to_bits().to_le_bytes());
        h.update(config.max_tokens.to_le_bytes());
        h.update((prompt_text.len() as u64).to_le_bytes());
        h.update(prompt_text.as_bytes());
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    key: CacheKey,
    model: String,
    raw_response: String,
}

/// Append-only key/response store backed by a JSON-lines file.
///
/// The whole file is indexed in memory on open; later records for the same
/// key win. A torn final line (from a crash mid-append) is ignored.
pub struct ResponseCache {
    path: PathBuf,
    index: RwLock<HashMap<CacheKey, String>>,
    writer: Mutex<File>,
}

impl ResponseCache {
    pub const FILE_NAME: &'static str = "responses.jsonl";

    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(Self::FILE_NAME);
        let mut index = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if let Ok(record) = serde_json::from_str::<CacheRecord>(&line) {
                    index.insert(record.key, record.raw_response);
                }
            }
        }
        let mut writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let ends_cleanly = fs::read(&path)
            .map(|b| b.last().is_none_or(|&c| c == b'\n'))
            .map_err(|e| Error::io(&path, e))?;
        if !ends_cleanly {
            writer.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(ResponseCache {
            path,
            index: RwLock::new(index),
            writer: Mutex::new(writer),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        self.index.read().expect("cache index poisoned").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &CacheKey, model: &str, raw_response: &str) -> Result<()> {
        let record = CacheRecord {
            key: key.clone(),
            model: model.to_string(),
            raw_response: raw_response.to_string(),
        };
        let mut line = serde_json::to_string(&record).map_err(|e| Error::json("cache record", e))?;
        line.push('\n');
        {
            let mut file = self.writer.lock().expect("cache writer poisoned");
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| Error::io(&self.path, e))?;
        }
        self.index
            .write()
            .expect("cache index poisoned")
            .insert(key.clone(), raw_response.to_string());
        Ok(())
    }
}
