//! Staged output files, committed together with atomic renames.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

impl Outputs {
    pub fn new() -> Self {
        Outputs::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) {
        self.files.push((path.into(), contents.into()));
    }

    pub fn paths(&self) -> Vec<&Path> {
        self.files.iter().map(|(p, _)| p.as_path()).collect()
    }

    /// Writes every file to a temporary sibling first and renames them into
    /// place only once all writes succeeded.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut staged = Vec::with_capacity(self.files.len());
        let result = (|| {
            for (path, contents) in &self.files {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
                }
                let tmp = temp_path(path);
                let mut file = fs::File::create(&tmp).map_err(|e| io_error(&tmp, e))?;
                staged.push(tmp.clone());
                file.write_all(contents).map_err(|e| io_error(&tmp, e))?;
                file.sync_all().map_err(|e| io_error(&tmp, e))?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            for tmp in &staged {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        let mut written = Vec::with_capacity(self.files.len());
        for ((path, _), tmp) in self.files.iter().zip(&staged) {
            fs::rename(tmp, path).map_err(|e| io_error(path, e))?;
            written.push(path.clone());
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_writes_and_leaves_no_temps() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::new();
        out.add(dir.path().join("sub/a.csv"), "a\n");
        out.add(dir.path().join("b.csv"), "b\n");
        out.commit().unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("sub/a.csv")).unwrap(), "a\n");
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert!(names.iter().all(|n| !n.contains(".tmp-")), "{names:?}");
    }

    #[test]
    fn failed_commit_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let mut out = Outputs::new();
        out.add(dir.path().join("ok.csv"), "ok");
        out.add(blocker.join("nested.csv"), "no");
        assert!(out.commit().is_err());
        assert!(!dir.path().join("ok.csv").exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
