use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use crate::error::Result;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageVerdict {
    pub stage: String,
    pub passed: bool,
    pub detail: String,
}

impl StageVerdict {
    pub fn new(stage: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { stage: stage.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub verdicts: Vec<StageVerdict>,
    pub certified_tolerances: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
    /// SHA-256 over the sorted `path  sha256` lines of `files`.
    pub content_digest: String,
    pub exit_code: i32,
}

/// Output directory with the bookkeeping for the manifest.
pub struct Output {
    root: PathBuf,
    pub tolerances: BTreeMap<String, f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Output {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["eigen", "flow", "gap"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self { root: root.to_path_buf(), tolerances: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.root.join(rel), text)?;
        Ok(())
    }

    /// CSV with a header row.
    pub fn write_csv<I, R>(&self, rel: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_path(self.root.join(rel)).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn tolerance(&mut self, key: impl Into<String>, value: f64) {
        self.tolerances.insert(key.into(), value);
    }

    /// Every file under the root except the manifest, sorted by path.
    pub fn scan(&self) -> Result<Vec<FileEntry>> {
        let mut out = Vec::new();
        scan_dir(&self.root, &self.root, &mut out)?;
        out.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(out)
    }
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(std::io::Error::other(e))
}

fn scan_dir(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            scan_dir(root, &path, out)?;
            continue;
        }
        let rel: Vec<String> =
            path.strip_prefix(root).unwrap_or(&path).components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        let rel = rel.join("/");
        if rel == MANIFEST {
            continue;
        }
        let bytes = fs::read(&path)?;
        out.push(FileEntry { path: rel, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
    }
    Ok(())
}

pub fn content_digest(files: &[FileEntry]) -> String {
    let listing: String = files.iter().map(|f| format!("{}  {}\n", f.path, f.sha256)).collect();
    sha256_hex(listing.as_bytes())
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn row(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| num(*v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_lists_everything_but_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = Output::create(dir.path()).unwrap();
        out.write_json("eigen/a.json", &[1.0, 2.5]).unwrap();
        out.write_csv("gap/b.csv", &["x", "y"], vec![row(&[0.5, f64::NAN])]).unwrap();
        fs::write(dir.path().join(MANIFEST), "{}").unwrap();
        let files = out.scan().unwrap();
        let paths: Vec<_> = files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["eigen/a.json", "gap/b.csv"]);
        assert_eq!(fs::read_to_string(dir.path().join("gap/b.csv")).unwrap(), "x,y\n0.5,NaN\n");
        assert_eq!(files[1].sha256, sha256_hex(b"x,y\n0.5,NaN\n"));
        assert_eq!(content_digest(&files), content_digest(&out.scan().unwrap()));
    }
}
