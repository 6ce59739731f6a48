use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

const GIB: f64 = (1u64 << 30) as f64;

/// Bytes on disk per artifact. GB in reports always means GiB (2^30 bytes).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchStorage {
    pub artifacts: Vec<(PathBuf, u64)>,
}

impl BenchStorage {
    pub fn total_bytes(&self) -> u64 {
        self.artifacts.iter().map(|(_, b)| b).sum()
    }

    pub fn total_gb(&self) -> f64 {
        self.total_bytes() as f64 / GIB
    }

    /// Total formatted to three decimals.
    pub fn gb_string(&self) -> String {
        format!("{:.3}", self.total_gb())
    }
}

fn bytes_of(path: &Path) -> Result<u64> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        return Ok(meta.len());
    }
    let mut total = 0;
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        total += bytes_of(&entry.path())?;
    }
    Ok(total)
}

/// Sizes each path (directories recursively). An `.emb` store also counts
/// its `.ids` sidecar.
pub fn storage_report<P: AsRef<Path>>(paths: &[P]) -> Result<BenchStorage> {
    let mut artifacts = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let mut bytes = bytes_of(p)?;
        if p.extension().is_some_and(|e| e == "emb") {
            let ids = p.with_extension("ids");
            if ids.exists() {
                bytes += bytes_of(&ids)?;
            }
        }
        artifacts.push((p.to_path_buf(), bytes));
    }
    Ok(BenchStorage { artifacts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sized(dir: &Path, name: &str, len: u64) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().set_len(len).unwrap();
        p
    }

    #[test]
    fn one_gib() {
        let dir = tempfile::tempdir().unwrap();
        let p = sized(dir.path(), "a.bin", 1 << 30);
        assert_eq!(storage_report(&[p]).unwrap().gb_string(), "1.000");
    }

    #[test]
    fn additive() {
        let dir = tempfile::tempdir().unwrap();
        let a = sized(dir.path(), "a.bin", 512 << 20);
        let b = sized(dir.path(), "b.bin", 512 << 20);
        let both = storage_report(&[&a, &b]).unwrap();
        assert_eq!(both.gb_string(), "1.000");
        let parts = storage_report(&[&a]).unwrap().total_bytes() + storage_report(&[&b]).unwrap().total_bytes();
        assert_eq!(both.total_bytes(), parts);
        assert_eq!(storage_report(&[dir.path()]).unwrap().total_bytes(), parts);
    }

    #[test]
    fn empty_and_missing() {
        let none: [&Path; 0] = [];
        assert_eq!(storage_report(&none).unwrap().gb_string(), "0.000");
        assert!(storage_report(&[Path::new("/definitely/not/here")]).is_err());
    }
}
