use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fastnav::SCHEMA_VERSION;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::CliConfig;
use crate::error::Result;

/// Mean and 95th percentile of a sample, in the sample's unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Timing {
    pub mean: f64,
    pub p95: f64,
}

impl Timing {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
        Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p95: v[rank - 1],
        }
    }
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `out/<command>/<timestamp>/`, created on first use so that a failed
/// validation never leaves an empty directory behind.
pub struct OutputDir {
    path: PathBuf,
    config: Value,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str, config: &CliConfig) -> Result<Self> {
        let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f").to_string();
        let base = root.join(command);
        let mut path = base.join(&stamp);
        let mut n = 1;
        while path.exists() {
            path = base.join(format!("{stamp}-{n}"));
            n += 1;
        }
        std::fs::create_dir_all(&path)?;
        Ok(Self {
            path,
            config: serde_json::to_value(config)?,
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    /// Writes `body` with `schema_version` and the effective config added.
    pub fn write_json(&mut self, name: &str, body: Value) -> Result<PathBuf> {
        let mut doc = json!({ "schema_version": SCHEMA_VERSION, "config": self.config });
        if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
            d.extend(b);
        }
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        self.write_raw(name, text.as_bytes())
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf> {
        let p = self.path.join(name);
        let mut w = BufWriter::new(File::create(&p)?);
        f(&mut w)?;
        w.flush()?;
        self.written.push(name.to_string());
        Ok(p)
    }

    pub fn write_raw(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        self.write_with(name, |w| w.write_all(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p95_is_nearest_rank() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = Timing::of(&xs);
        assert_eq!(t.p95, 95.0);
        assert_eq!(t.mean, 50.5);
        assert_eq!(Timing::of(&[3.0]).p95, 3.0);
        assert_eq!(Timing::of(&[]), Timing::default());
    }
}
