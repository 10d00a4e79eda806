//! Collects every artifact of a command, then writes them together once
//! none would clobber an existing file (unless forced).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{0} already exists; pass --force to overwrite")]
    Exists(PathBuf),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn write(self, dir: &Path, force: bool) -> Result<Vec<PathBuf>, OutputError> {
        let paths: Vec<PathBuf> = self.files.iter().map(|(name, _)| dir.join(name)).collect();
        if !force {
            if let Some(p) = paths.iter().find(|p| p.exists()) {
                return Err(OutputError::Exists(p.clone()));
            }
        }
        fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
        for (path, (_, contents)) in paths.iter().zip(&self.files) {
            fs::write(path, contents).map_err(|source| OutputError::Io { path: path.clone(), source })?;
        }
        Ok(paths)
    }
}

/// A CSV document with a header row. Values are written with `Display`,
/// which for floats is the shortest representation that round-trips.
pub struct Csv(String);

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv(header.join(",") + "\n")
    }

    pub fn row(&mut self, values: &[&dyn std::fmt::Display]) {
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.0.push(',');
            }
            write!(self.0, "{v}").unwrap();
        }
        self.0.push('\n');
    }

    pub fn finish(self) -> String {
        self.0
    }
}

/// A float written in positional notation when that is short, and in
/// exponent notation otherwise; both forms round-trip.
pub struct Num(pub f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_in_either_notation() {
        for v in [0.0, 1.0, 0.125, 2.6062896741555818e-9, 1e300, -3.5e-7, 123456.789] {
            let s = Num(v).to_string();
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(Num(0.5).to_string(), "0.5");
        assert_eq!(Num(2.5e-9).to_string(), "2.5e-9");
        assert_eq!(Num(f64::INFINITY).to_string(), "inf");
    }

    #[test]
    fn csv_rows_follow_the_header() {
        let mut csv = Csv::new(&["x", "p"]);
        csv.row(&[&0, &Num(1.0)]);
        csv.row(&[&1, &Num(1e-20)]);
        assert_eq!(csv.finish(), "x,p\n0,1\n1,1e-20\n");
    }

    #[test]
    fn nothing_is_written_when_one_file_exists() {
        let dir = tempfile::TempDir::new().unwrap();
        fs::write(dir.path().join("b.txt"), "old").unwrap();
        let mut out = Artifacts::default();
        out.add("a.txt", "new".into());
        out.add("b.txt", "new".into());
        assert!(matches!(out.write(dir.path(), false), Err(OutputError::Exists(_))));
        assert!(!dir.path().join("a.txt").exists());
        let mut out = Artifacts::default();
        out.add("b.txt", "new".into());
        out.write(dir.path(), true).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("b.txt")).unwrap(), "new");
    }
}
