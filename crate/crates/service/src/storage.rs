use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use basnet::checkpoint::sha256_hex;

/// Where stored results go. A cloud bucket would implement the same method.
pub trait Storage: Send + Sync {
    /// Persists `bytes` and returns the public URL they can be fetched from.
    fn put(&self, bytes: &[u8], extension: &str) -> io::Result<String>;
}

/// Content-addressed files under a root directory, published under a URL
/// prefix. Writes go to a temporary file that is then renamed into place.
#[derive(Clone, Debug)]
pub struct LocalStorage {
    root: PathBuf,
    url_prefix: String,
}

impl LocalStorage {
    pub fn new(root: impl Into<PathBuf>, url_prefix: impl Into<String>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            url_prefix: url_prefix.into().trim_end_matches('/').to_string(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Keys are `<sha256>.<ext>`; anything else is refused.
    pub fn path_for(&self, key: &str) -> Option<PathBuf> {
        let (hash, ext) = key.split_once('.')?;
        let ok = hash.len() == 64
            && hash.bytes().all(|b| b.is_ascii_hexdigit())
            && !ext.is_empty()
            && ext.bytes().all(|b| b.is_ascii_alphanumeric());
        ok.then(|| self.root.join(key))
    }

    pub fn read(&self, key: &str) -> Option<Vec<u8>> {
        fs::read(self.path_for(key)?).ok()
    }
}

impl Storage for LocalStorage {
    fn put(&self, bytes: &[u8], extension: &str) -> io::Result<String> {
        let key = format!("{}.{extension}", sha256_hex(bytes));
        let path = self.root.join(&key);
        if !path.exists() {
            let tmp = self
                .root
                .join(format!(".{key}.{}.tmp", uuid::Uuid::new_v4()));
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, &path)?;
        }
        Ok(format!("{}/{key}", self.url_prefix))
    }
}
