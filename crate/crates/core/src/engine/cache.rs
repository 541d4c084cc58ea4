use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;

use crate::policy::CompiledPolicy;

/// LRU cache of compiled policies keyed by policy id. Capacity 0 disables
/// caching entirely; lookups then always hit the loader, which keeps the
/// cache-on/cache-off behavior byte-identical apart from latency.
pub struct PolicyCache {
    inner: Option<Mutex<LruCache<String, Arc<CompiledPolicy>>>>,
}

impl PolicyCache {
    pub fn new(capacity: usize) -> Self {
        let inner = NonZeroUsize::new(capacity).map(|c| Mutex::new(LruCache::new(c)));
        PolicyCache { inner }
    }

    pub fn capacity(&self) -> usize {
        match &self.inner {
            Some(m) => m.lock().expect("cache lock poisoned").cap().get(),
            None => 0,
        }
    }

    pub fn len(&self) -> usize {
        match &self.inner {
            Some(m) => m.lock().expect("cache lock poisoned").len(),
            None => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the cached policy, or loads, caches, and returns it. A hit
    /// refreshes recency; a loader failure leaves the cache unchanged.
    pub fn lookup<E>(
        &self,
        id: &str,
        loader: impl FnOnce() -> Result<CompiledPolicy, E>,
    ) -> Result<Arc<CompiledPolicy>, E> {
        let Some(m) = &self.inner else {
            return loader().map(Arc::new);
        };
        if let Some(hit) = m.lock().expect("cache lock poisoned").get(id) {
            return Ok(Arc::clone(hit));
        }
        let loaded = Arc::new(loader()?);
        m.lock()
            .expect("cache lock poisoned")
            .push(id.to_string(), Arc::clone(&loaded));
        Ok(loaded)
    }

    /// Drops a cached entry, e.g. after a policy update or delete.
    pub fn invalidate(&self, id: &str) {
        if let Some(m) = &self.inner {
            m.lock().expect("cache lock poisoned").pop(id);
        }
    }

    pub fn clear(&self) {
        if let Some(m) = &self.inner {
            m.lock().expect("cache lock poisoned").clear();
        }
    }

    /// Cached ids, most recently used first.
    pub fn contents(&self) -> Vec<String> {
        match &self.inner {
            Some(m) => m
                .lock()
                .expect("cache lock poisoned")
                .iter()
                .map(|(k, _)| k.clone())
                .collect(),
            None => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{parse_policy, validate_policy};
    use crate::stream::registered_event_types;
    use crate::udf::builtin_names;
    use std::cell::Cell;

    fn policy(id: &str) -> CompiledPolicy {
        let text = format!(
            r#"{{
              "Id": "{id}",
              "Object": "v1/{{account}}/{{container}}/{id}.json",
              "Action": {{
                "StartAt": "S",
                "Steps": {{
                  "S": {{
                    "Id": "NOOP",
                    "EventType": {{"Type": "JSONPathEvent", "Input": [{{"Predicate": "$.x"}}]}},
                    "Next": "End"
                  }}
                }}
              }}
            }}"#
        );
        let doc = parse_policy(text.as_bytes()).unwrap();
        validate_policy(&doc, &builtin_names(), &registered_event_types()).unwrap()
    }

    #[test]
    fn eviction_follows_recency() {
        let cache = PolicyCache::new(2);
        let ok = |id: &str| -> Result<CompiledPolicy, ()> { Ok(policy(id)) };
        cache.lookup("A", || ok("A")).unwrap();
        cache.lookup("B", || ok("B")).unwrap();
        cache.lookup("A", || ok("A")).unwrap();
        cache.lookup("C", || ok("C")).unwrap();
        assert_eq!(cache.contents(), vec!["C".to_string(), "A".to_string()]);
    }

    #[test]
    fn loader_runs_once_per_resident_id() {
        let cache = PolicyCache::new(4);
        let calls = Cell::new(0);
        for _ in 0..5 {
            cache
                .lookup("A", || -> Result<CompiledPolicy, ()> {
                    calls.set(calls.get() + 1);
                    Ok(policy("A"))
                })
                .unwrap();
        }
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn loader_failure_leaves_cache_unchanged() {
        let cache = PolicyCache::new(2);
        let r: Result<_, String> = cache.lookup("A", || Err("boom".to_string()));
        assert_eq!(r.unwrap_err(), "boom");
        assert!(cache.is_empty());
    }

    #[test]
    fn capacity_zero_disables_caching() {
        let cache = PolicyCache::new(0);
        let calls = Cell::new(0);
        for _ in 0..3 {
            cache
                .lookup("A", || -> Result<CompiledPolicy, ()> {
                    calls.set(calls.get() + 1);
                    Ok(policy("A"))
                })
                .unwrap();
        }
        assert_eq!(calls.get(), 3);
        assert_eq!(cache.capacity(), 0);
        assert!(cache.contents().is_empty());
    }

    #[test]
    fn invalidate_forces_reload() {
        let cache = PolicyCache::new(2);
        let calls = Cell::new(0);
        let load = || {
            cache
                .lookup("A", || -> Result<CompiledPolicy, ()> {
                    calls.set(calls.get() + 1);
                    Ok(policy("A"))
                })
                .unwrap()
        };
        load();
        load();
        assert_eq!(calls.get(), 1);
        cache.invalidate("A");
        load();
        assert_eq!(calls.get(), 2);
    }

    #[test]
    fn matches_reference_lru_simulation() {
        // Oracle: a straightforward Vec-based LRU.
        struct RefLru {
            cap: usize,
            entries: Vec<String>,
        }
        impl RefLru {
            fn touch(&mut self, id: &str) {
                if let Some(pos) = self.entries.iter().position(|e| e == id) {
                    let e = self.entries.remove(pos);
                    self.entries.insert(0, e);
                } else {
                    self.entries.insert(0, id.to_string());
                    if self.entries.len() > self.cap {
                        self.entries.pop();
                    }
                }
            }
        }

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(61);
        let cache = PolicyCache::new(10);
        let mut oracle = RefLru {
            cap: 10,
            entries: Vec::new(),
        };
        let compiled = policy("X");
        for _ in 0..10_000 {
            let id = format!("p{}", rng.gen_range(0..100));
            oracle.touch(&id);
            cache
                .lookup(&id, || -> Result<CompiledPolicy, ()> { Ok(compiled.clone()) })
                .unwrap();
            assert_eq!(cache.contents(), oracle.entries);
        }
        assert_eq!(cache.contents(), oracle.entries);
    }
}
