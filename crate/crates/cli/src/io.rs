use std::fs;
use std::path::Path;

use chainhash_core::chain::{ChainFile, SecretKey};
use tracing::warn;

use crate::fail::{Classify, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).or_validation_ctx(format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).or_validation_ctx(format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).or_validation_ctx(format!("writing {}", path.display()))
}

/// The file's bytes, verbatim, are the key.
pub fn read_key(path: Option<&Path>) -> CliResult<Option<SecretKey>> {
    let Some(path) = path else { return Ok(None) };
    let bytes = fs::read(path).or_validation_ctx(format!("reading key {}", path.display()))?;
    let key = SecretKey::new(bytes);
    if key.is_empty() {
        return Err(crate::fail::Failure::validation(format!("key file {} is empty", path.display())));
    }
    if key.is_weak() {
        warn!(
            "key in {} is shorter than {} bytes",
            path.display(),
            chainhash_core::chain::MIN_KEY_LEN
        );
    }
    Ok(Some(key))
}

pub fn read_chain(path: &Path) -> CliResult<ChainFile> {
    ChainFile::from_json(&read_text(path)?).or_validation_ctx(path.display())
}
