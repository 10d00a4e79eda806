//! Environment files: `{"model": …, "truncation": …, "sites": [{"omega": […], "deficit": d, …}]}`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EnvModel, Environment, SiteGenerator, TailSequence, Truncation};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct SiteRecord {
    omega: Vec<f64>,
    deficit: f64,
    #[serde(default = "explicit")]
    generator: SiteGenerator,
    #[serde(default)]
    capped: bool,
}

fn explicit() -> SiteGenerator {
    SiteGenerator::Explicit
}

#[derive(Serialize, Deserialize)]
struct EnvRecord {
    model: EnvModel,
    #[serde(default)]
    truncation: Truncation,
    sites: Vec<SiteRecord>,
}

impl Environment {
    pub fn to_json(&self) -> Result<String> {
        let record = EnvRecord {
            model: self.model.clone(),
            truncation: self.truncation,
            sites: self
                .sites()
                .map(|s| SiteRecord {
                    omega: s.values().to_vec(),
                    deficit: s.deficit(),
                    generator: s.generator(),
                    capped: s.capped(),
                })
                .collect(),
        };
        crate::json::to_string(&record)
    }

    /// Parses and validates an environment file. Identical sites share storage.
    pub fn from_json(text: &str) -> Result<Self> {
        let record: EnvRecord = serde_json::from_str(text)?;
        let mut seen: HashMap<(Vec<u64>, u64), Arc<TailSequence>> = HashMap::new();
        let mut sites = Vec::with_capacity(record.sites.len());
        for (x, s) in record.sites.into_iter().enumerate() {
            let key = (s.omega.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), s.deficit.to_bits());
            if let Some(shared) = seen.get(&key) {
                if shared.generator() == s.generator && shared.capped() == s.capped {
                    sites.push(Arc::clone(shared));
                    continue;
                }
            }
            let site = TailSequence::with_cap_flag(s.omega, s.deficit, s.generator, s.capped).map_err(|e| match e {
                Error::InvalidTailSequence(msg) => Error::InvalidTailSequence(format!("site {x}: {msg}")),
                other => other,
            })?;
            let site = Arc::new(site);
            seen.insert(key, Arc::clone(&site));
            sites.push(site);
        }
        Environment::from_sites(record.model, record.truncation, sites)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| with_path(e, path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| with_path(e, path))?)
    }
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::LsvParams;

    #[test]
    fn round_trip_is_exact() {
        let p = LsvParams::from_alpha_c(0.33, 0.5).unwrap();
        let env = Environment::from_lsv(&[p, p], Truncation::new(50, 1e-12).unwrap()).unwrap();
        let text = env.to_json().unwrap();
        let back = Environment::from_json(&text).unwrap();
        assert_eq!(back, env);
        assert_eq!(back.to_json().unwrap(), text);
        assert!(Arc::ptr_eq(back.shared_site(0), back.shared_site(1)));
    }

    #[test]
    fn rejects_invalid_sites() {
        let bad = r#"{"model": {"kind": "per_site"}, "sites": [{"omega": [1.0, 0.5, 0.6], "deficit": 0.0}]}"#;
        let err = Environment::from_json(bad).unwrap_err();
        assert!(err.to_string().contains("site 0"), "{err}");
        let bad = r#"{"model": {"kind": "per_site"}, "sites": [{"omega": [1.0, 0.5], "deficit": 0.7}]}"#;
        assert!(Environment::from_json(bad).is_err());
        let empty = r#"{"model": {"kind": "per_site"}, "sites": []}"#;
        assert!(Environment::from_json(empty).is_err());
    }
}
