//! Object store backends. The default is a local filesystem tree laid out
//! as `<root>/<account>/<container>/<object>`; anything implementing
//! [`ObjectBackend`] (a remote store client, a test stub) plugs in the same
//! way.

use std::fs::{self, File};
use std::io::{self, BufReader, Read};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use objectlens_core::policy::ObjectPath;

#[derive(Debug, Clone, Copy)]
pub struct ObjectStat {
    pub size: u64,
}

/// Incremental access to stored objects. Reads must stream; `write` persists
/// the body verbatim and atomically (a partial write never becomes visible).
pub trait ObjectBackend: Send + Sync + 'static {
    fn read(&self, path: &ObjectPath) -> io::Result<Box<dyn Read + Send>>;
    fn write(&self, path: &ObjectPath, body: &mut dyn Read) -> io::Result<u64>;
    fn stat(&self, path: &ObjectPath) -> io::Result<ObjectStat>;
}

/// Local filesystem backend.
pub struct FsBackend {
    root: PathBuf,
}

static STAGING_SEQ: AtomicU64 = AtomicU64::new(0);

impl FsBackend {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(FsBackend { root })
    }

    pub fn root(&self) -> &std::path::Path {
        &self.root
    }

    /// Maps an object path onto the tree, refusing any segment that could
    /// escape the root or collide with staging files.
    fn resolve(&self, path: &ObjectPath) -> io::Result<PathBuf> {
        let mut full = self.root.clone();
        for segment in [path.account.as_str(), path.container.as_str()]
            .into_iter()
            .chain(path.object.split('/'))
        {
            if !valid_segment(segment) {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidInput,
                    format!("unacceptable path segment `{segment}`"),
                ));
            }
            full.push(segment);
        }
        Ok(full)
    }
}

fn valid_segment(s: &str) -> bool {
    !s.is_empty()
        && s != "."
        && s != ".."
        && !s.contains(['\\', '\0'])
        && !s.starts_with(".put-")
}

impl ObjectBackend for FsBackend {
    fn read(&self, path: &ObjectPath) -> io::Result<Box<dyn Read + Send>> {
        let file = File::open(self.resolve(path)?)?;
        if !file.metadata()?.is_file() {
            return Err(io::Error::new(io::ErrorKind::NotFound, "not an object"));
        }
        Ok(Box::new(BufReader::with_capacity(64 * 1024, file)))
    }

    fn write(&self, path: &ObjectPath, body: &mut dyn Read) -> io::Result<u64> {
        let full = self.resolve(path)?;
        let dir = full.parent().expect("resolved paths sit under the root");
        fs::create_dir_all(dir)?;
        let staging = dir.join(format!(
            ".put-{}-{}",
            std::process::id(),
            STAGING_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let result = (|| {
            let mut out = File::create(&staging)?;
            let n = io::copy(body, &mut out)?;
            out.sync_all()?;
            fs::rename(&staging, &full)?;
            Ok(n)
        })();
        if result.is_err() {
            let _ = fs::remove_file(&staging);
        }
        result
    }

    fn stat(&self, path: &ObjectPath) -> io::Result<ObjectStat> {
        let meta = fs::metadata(self.resolve(path)?)?;
        if !meta.is_file() {
            return Err(io::Error::new(io::ErrorKind::NotFound, "not an object"));
        }
        Ok(ObjectStat { size: meta.len() })
    }
}
