//! Binary container for the interpolation matrix and its inverse.
//!
//! Layout, little endian:
//!
//! ```text
//! magic   8 bytes  "HBOPCACH"
//! version 1 byte
//! hash    32 bytes SHA-256 of the basis encoding
//! n       8 bytes
//! A       n*n f64, column major
//! A^-1    n*n f64, column major
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use hyperbranch::{GaussianBasis, OperatorCache};

use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"HBOPCACH";
pub const VERSION: u8 = 1;
const HEADER: usize = 8 + 1 + 32 + 8;

pub fn basis_hash(basis: &GaussianBasis) -> [u8; 32] {
    Sha256::digest(basis.canonical_bytes()).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// File name for a basis inside a cache directory.
pub fn cache_path(dir: &Path, basis: &GaussianBasis) -> PathBuf {
    dir.join(format!("basis-{}.hbc", &hex(&basis_hash(basis))[..16]))
}

pub fn encode(cache: &OperatorCache) -> Vec<u8> {
    let n = cache.len();
    let mut out = Vec::with_capacity(HEADER + 16 * n * n);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&basis_hash(cache.basis()));
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for m in [cache.interpolation(), cache.inverse()] {
        for v in m.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[derive(Debug)]
pub enum Decoded {
    Ready(Box<OperatorCache>),
    /// Container is intact but belongs to another basis.
    HashMismatch,
}

pub fn decode(bytes: &[u8], basis: Arc<GaussianBasis>, path: &Path) -> Result<Decoded, CliError> {
    let corrupt = |reason: &str| CliError::CorruptCache { path: path.to_path_buf(), reason: reason.into() };
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    if bytes[8] != VERSION {
        return Err(corrupt(&format!("unsupported version {}", bytes[8])));
    }
    let n = u64::from_le_bytes(bytes[41..49].try_into().unwrap()) as usize;
    let body = n.checked_mul(n).and_then(|m| m.checked_mul(16)).ok_or_else(|| corrupt("size overflow"))?;
    if bytes.len() != HEADER + body {
        return Err(corrupt("truncated body"));
    }
    if bytes[9..41] != basis_hash(&basis) {
        return Ok(Decoded::HashMismatch);
    }
    if n != basis.len() {
        return Err(corrupt("dimension disagrees with hash"));
    }
    let read = |start: usize| {
        DMatrix::from_iterator(
            n,
            n,
            bytes[start..start + 8 * n * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())),
        )
    };
    let interp = read(HEADER);
    let inverse = read(HEADER + 8 * n * n);
    Ok(Decoded::Ready(Box::new(OperatorCache::from_parts(basis, interp, inverse)?)))
}

/// Result of a cache lookup.
pub struct Loaded {
    pub cache: OperatorCache,
    pub hit: bool,
    pub path: Option<PathBuf>,
}

/// Loads the cache for `basis` from `dir`, building and persisting it on a
/// miss or hash mismatch.
pub fn load_or_build(dir: Option<&Path>, basis: Arc<GaussianBasis>) -> Result<Loaded, CliError> {
    let Some(dir) = dir else {
        return Ok(Loaded { cache: OperatorCache::build(basis)?, hit: false, path: None });
    };
    let path = cache_path(dir, &basis);
    if path.exists() {
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        match decode(&bytes, basis.clone(), &path)? {
            Decoded::Ready(cache) => {
                info!("operator cache hit {}", path.display());
                return Ok(Loaded { cache: *cache, hit: true, path: Some(path) });
            }
            Decoded::HashMismatch => warn!("cache {} belongs to another basis, rebuilding", path.display()),
        }
    }
    let cache = OperatorCache::build(basis)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    std::fs::write(&path, encode(&cache)).map_err(|e| CliError::io(&path, e))?;
    info!("operator cache written to {}", path.display());
    Ok(Loaded { cache, hit: false, path: Some(path) })
}
