use std::collections::HashMap;
use std::io;
use std::path::Path;
use std::sync::RwLock;

use crate::crypto::{decode_b64, encode_b64};

/// Embedded key-value metadata service. Keys are UTF-8 strings organized
/// in namespaces (`policies/`, `keys/`, `labels/`); values are bytes with
/// last-write-wins semantics. Optional JSON snapshots give persistence
/// across restarts.
#[derive(Debug, Default)]
pub struct MetadataStore {
    inner: RwLock<HashMap<String, Vec<u8>>>,
}

impl MetadataStore {
    pub fn new() -> Self {
        MetadataStore::default()
    }

    pub fn put(&self, key: &str, value: Vec<u8>) {
        self.inner
            .write()
            .expect("store lock poisoned")
            .insert(key.to_string(), value);
    }

    pub fn try_get(&self, key: &str) -> Option<Vec<u8>> {
        self.inner
            .read()
            .expect("store lock poisoned")
            .get(key)
            .cloned()
    }

    /// Removes a key, reporting whether it existed.
    pub fn delete(&self, key: &str) -> bool {
        self.inner
            .write()
            .expect("store lock poisoned")
            .remove(key)
            .is_some()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.inner
            .read()
            .expect("store lock poisoned")
            .contains_key(key)
    }

    /// All keys under `prefix`, sorted.
    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        let mut keys: Vec<String> = self
            .inner
            .read()
            .expect("store lock poisoned")
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect();
        keys.sort();
        keys
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the whole store as a JSON object with base64 values.
    pub fn save_to(&self, path: &Path) -> io::Result<()> {
        let guard = self.inner.read().expect("store lock poisoned");
        let mut map = serde_json::Map::new();
        for (k, v) in guard.iter() {
            map.insert(k.clone(), serde_json::Value::String(encode_b64(v)));
        }
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(map))?;
        std::fs::write(path, text)
    }

    pub fn load_from(path: &Path) -> io::Result<MetadataStore> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let Some(map) = value.as_object() else {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "snapshot must be a JSON object",
            ));
        };
        let store = MetadataStore::new();
        {
            let mut guard = store.inner.write().expect("store lock poisoned");
            for (k, v) in map {
                let Some(text) = v.as_str() else {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("snapshot value for `{k}` must be a base64 string"),
                    ));
                };
                let bytes = decode_b64(text)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
                guard.insert(k.clone(), bytes);
            }
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_overwrite_delete() {
        let store = MetadataStore::new();
        assert!(store.try_get("k").is_none());
        store.put("k", b"v1".to_vec());
        assert_eq!(store.try_get("k").unwrap(), b"v1");
        store.put("k", b"v2".to_vec());
        assert_eq!(store.try_get("k").unwrap(), b"v2");
        assert!(store.delete("k"));
        assert!(!store.delete("k"));
        assert!(store.try_get("k").is_none());
    }

    #[test]
    fn prefix_listing_is_sorted() {
        let store = MetadataStore::new();
        store.put("policies/b", vec![1]);
        store.put("policies/a", vec![2]);
        store.put("labels/alice", vec![3]);
        assert_eq!(
            store.keys_with_prefix("policies/"),
            vec!["policies/a".to_string(), "policies/b".to_string()]
        );
        assert!(store.keys_with_prefix("missing/").is_empty());
    }

    #[test]
    fn snapshot_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        let store = MetadataStore::new();
        store.put("labels/alice", b"treasurer".to_vec());
        store.put("bin", vec![0, 255, 7]);
        store.save_to(&path).unwrap();

        let loaded = MetadataStore::load_from(&path).unwrap();
        assert_eq!(loaded.try_get("labels/alice").unwrap(), b"treasurer");
        assert_eq!(loaded.try_get("bin").unwrap(), vec![0, 255, 7]);
        assert_eq!(loaded.len(), 2);
    }

    #[test]
    fn bad_snapshots_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        std::fs::write(&path, "[1,2]").unwrap();
        assert!(MetadataStore::load_from(&path).is_err());
        std::fs::write(&path, "{\"k\": \"@@@\"}").unwrap();
        assert!(MetadataStore::load_from(&path).is_err());
    }

    #[test]
    fn concurrent_writers_do_not_lose_keys() {
        use std::sync::Arc;
        let store = Arc::new(MetadataStore::new());
        let mut handles = Vec::new();
        for t in 0..8 {
            let store = Arc::clone(&store);
            handles.push(std::thread::spawn(move || {
                for i in 0..50 {
                    store.put(&format!("k/{t}/{i}"), vec![t as u8, i as u8]);
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(store.keys_with_prefix("k/").len(), 400);
    }
}
