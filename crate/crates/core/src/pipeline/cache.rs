use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Environment variable that overrides the default cache directory.
pub const CACHE_ENV: &str = "LOADTEX_CACHE";
const DEFAULT_CACHE_DIR: &str = ".loadtex-cache";

/// `$LOADTEX_CACHE` if set and non-empty, otherwise `.loadtex-cache` in the
/// working directory.
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR), PathBuf::from)
}

/// Content-addressed artifact store. Keys are hex SHA-256 digests of
/// everything that determines an artifact, so a hit is always valid.
#[derive(Clone, Debug)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Cache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, kind: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join(kind).join(format!("{key}.{ext}"))
    }
}

/// Digest of a sequence of byte strings. Each part is length-prefixed so
/// different splits of the same bytes hash differently.
pub fn content_key<I, P>(parts: I) -> String
where
    I: IntoIterator<Item = P>,
    P: AsRef<[u8]>,
{
    let mut h = Sha256::new();
    for p in parts {
        let p = p.as_ref();
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}
