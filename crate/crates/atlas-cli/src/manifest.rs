//! Run manifest: every subcommand writes `manifest.json` listing its outputs,
//! parameters, and the dataset hash. Identical (config, dataset, seed) runs
//! produce identical manifests; output files are written atomically.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub seed: u64,
    pub dataset_hash: Option<String>,
    pub parameters: Value,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            seed,
            dataset_hash: None,
            parameters: Value::Null,
            outputs: vec![],
            warnings: vec![],
        }
    }

    pub fn with_dataset(mut self, ds: &atlas_core::EmbeddingDataset) -> Self {
        self.dataset_hash = Some(format!("{:016x}", ds.content_hash()));
        self
    }

    pub fn with_parameters<T: Serialize>(mut self, params: &T) -> Self {
        self.parameters = serde_json::to_value(params).expect("serializable parameters");
        self
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    /// Write `bytes` into `out_dir/name` atomically (temp file + rename) and
    /// record the output.
    pub fn write_output(&mut self, out_dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(out_dir)?;
        let final_path = out_dir.join(name);
        let tmp_path = out_dir.join(format!(".{name}.tmp"));
        fs::write(&tmp_path, bytes)?;
        fs::rename(&tmp_path, &final_path)?;
        self.outputs.push(name.to_string());
        Ok(final_path)
    }

    /// Finalize: write manifest.json itself (atomically).
    pub fn finish(mut self, out_dir: &Path) -> anyhow::Result<()> {
        self.outputs.sort();
        let bytes = serde_json::to_vec_pretty(&self)?;
        fs::create_dir_all(out_dir)?;
        let tmp = out_dir.join(".manifest.json.tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(tmp, out_dir.join("manifest.json"))?;
        Ok(())
    }
}

/// Small deterministic CSV builder: rows are pushed in order, floats are
/// rendered with Rust's shortest round-trip formatting.
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut buf = String::new();
        buf.push_str(header);
        buf.push('\n');
        Self { buf }
    }

    pub fn row(&mut self, fields: &[CsvField<'_>]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match f {
                CsvField::Str(s) => {
                    if s.contains(',') || s.contains('"') {
                        self.buf.push('"');
                        self.buf.push_str(&s.replace('"', "\"\""));
                        self.buf.push('"');
                    } else {
                        self.buf.push_str(s);
                    }
                }
                CsvField::U(v) => self.buf.push_str(&v.to_string()),
                CsvField::I(v) => self.buf.push_str(&v.to_string()),
                CsvField::F(v) => {
                    if v.is_nan() {
                        self.buf.push_str("nan");
                    } else {
                        self.buf.push_str(&format!("{v}"));
                    }
                }
            }
        }
        self.buf.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf.into_bytes()
    }
}

pub enum CsvField<'a> {
    Str(&'a str),
    U(usize),
    I(i64),
    F(f64),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_commas() {
        let mut csv = Csv::new("a,b");
        csv.row(&[CsvField::Str("x,y"), CsvField::F(1.5)]);
        assert_eq!(String::from_utf8(csv.into_bytes()).unwrap(), "a,b\n\"x,y\",1.5\n");
    }

    #[test]
    fn atomic_write_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("test", 7);
        m.write_output(dir.path(), "out.csv", b"a\n1\n").unwrap();
        m.finish(dir.path()).unwrap();
        assert!(dir.path().join("out.csv").exists());
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["subcommand"], "test");
        assert_eq!(manifest["outputs"][0], "out.csv");
    }
}
