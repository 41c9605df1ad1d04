//! Output directories that appear atomically, and the file formats written
//! into them.

use crate::error::Error;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

/// Staging directory next to the final one. [`OutputDir::commit`] renames it
/// into place; dropping it without committing removes it with everything
/// written so far.
pub struct OutputDir {
    staging: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl OutputDir {
    /// Fails if `target` exists and is not an empty directory.
    pub fn create(target: &Path) -> Result<Self, Error> {
        if target.exists() {
            let empty = target.is_dir() && fs::read_dir(target)?.next().is_none();
            if !empty {
                return Err(Error::Config(format!(
                    "output directory {} exists and is not empty",
                    target.display()
                )));
            }
        }
        let name = target
            .file_name()
            .ok_or_else(|| Error::Config(format!("invalid output directory {}", target.display())))?;
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let staging = parent.join(format!(".{}.partial-{}", name.to_string_lossy(), std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging)?;
        Ok(Self { staging, target: target.to_path_buf(), committed: false })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.staging.join(file)
    }

    pub fn write_text(&self, file: &str, text: &str) -> Result<(), Error> {
        fs::write(self.path(file), text)?;
        Ok(())
    }

    /// Pretty JSON with a trailing newline; key order follows the field
    /// order of the serialized types.
    pub fn write_json<T: Serialize>(&self, file: &str, value: &T) -> Result<(), Error> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(file, &text)
    }

    pub fn write_csv(&self, file: &str, table: &Table) -> Result<(), Error> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_path(self.path(file))?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn commit(mut self) -> Result<PathBuf, Error> {
        if self.target.exists() {
            fs::remove_dir(&self.target)?;
        }
        fs::rename(&self.staging, &self.target)?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// A CSV table of already formatted cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip representation; empty for missing values.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_and_abort() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("run");
        {
            let out = OutputDir::create(&target).unwrap();
            out.write_text("a.txt", "x").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
        let out = OutputDir::create(&target).unwrap();
        let mut t = Table::new(&["name", "value"]);
        t.push(vec!["a,b".into(), num(0.1)]);
        out.write_csv("t.csv", &t).unwrap();
        out.commit().unwrap();
        let text = fs::read_to_string(target.join("t.csv")).unwrap();
        assert_eq!(text, "name,value\r\n\"a,b\",0.1\r\n");
        assert!(OutputDir::create(&target).is_err());
    }
}
