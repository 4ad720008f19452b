use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    value: serde_json::Value,
}

/// Append-only JSONL response cache keyed by request hash.
pub struct ResponseCache {
    path: PathBuf,
    entries: Mutex<HashMap<String, serde_json::Value>>,
    file: Mutex<File>,
}

impl ResponseCache {
    /// Opens (creating if needed) the cache file and loads existing entries.
    /// Unreadable trailing lines, e.g. from an interrupted write, are skipped.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                match serde_json::from_str::<Entry>(&line) {
                    Ok(e) => {
                        entries.insert(e.key, e.value);
                    }
                    Err(_) if line.trim().is_empty() => {}
                    Err(e) => log::warn!("{}: skipping bad cache line: {e}", path.display()),
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let needs_newline = std::fs::read(path)
            .map(|b| b.last().is_some_and(|&c| c != b'\n'))
            .unwrap_or(false);
        if needs_newline {
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(ResponseCache {
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
            file: Mutex::new(file),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        let entries = self.entries.lock().expect("cache lock");
        entries
            .get(key)
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) -> Result<()> {
        let value = serde_json::to_value(value)?;
        let line = serde_json::to_string(&Entry {
            key: key.to_string(),
            value: value.clone(),
        })?;
        {
            let mut f = self.file.lock().expect("cache lock");
            writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))?;
        }
        self.entries
            .lock()
            .expect("cache lock")
            .insert(key.to_string(), value);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cache.jsonl");
        {
            let c = ResponseCache::open(&path).unwrap();
            c.put("k1", &vec!["a".to_string()]).unwrap();
            c.put("k2", &2.5f64).unwrap();
        }
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get::<Vec<String>>("k1").unwrap(), vec!["a"]);
        assert_eq!(c.get::<f64>("k2"), Some(2.5));
        assert_eq!(c.get::<f64>("missing"), None);
    }

    #[test]
    fn tolerates_truncated_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{\"key\":\"a\",\"value\":1}\n{\"key\":\"b\",\"va").unwrap();
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.len(), 1);
        c.put("c", &3).unwrap();
        drop(c);
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get::<i32>("c"), Some(3));
    }
}
