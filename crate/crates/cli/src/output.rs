//! Buffered CSV tables written only once a command has succeeded.

use sha2::{Digest, Sha256};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Shortest decimal that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Table {
    name: &'static str,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Table { name, writer }
    }

    pub fn row<I, T>(&mut self, fields: I)
    where
        I: IntoIterator<Item = T>,
        T: Display,
    {
        let fields: Vec<String> = fields.into_iter().map(|f| f.to_string()).collect();
        self.writer.write_record(&fields).expect("in-memory write");
    }
}

/// Everything one command emits, with the metadata line shared by all files.
pub struct Outputs {
    meta: String,
    tables: Vec<Table>,
}

impl Outputs {
    pub fn new(canonical: &str, seed: Option<u64>) -> Self {
        let seed = seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
        Outputs { meta: format!("# config_sha256={} seed={seed} version={VERSION}\n", config_hash(canonical)), tables: Vec::new() }
    }

    pub fn push(&mut self, table: Table) {
        self.tables.push(table);
    }

    /// Writes each file beside a temporary name and renames it into place.
    pub fn write(self, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut staged = Vec::with_capacity(self.tables.len());
        for table in self.tables {
            let body = table.writer.into_inner().map_err(|e| anyhow::anyhow!("{}: {e}", table.name))?;
            let mut bytes = self.meta.clone().into_bytes();
            bytes.extend_from_slice(&body);
            let target = dir.join(table.name);
            let tmp = dir.join(format!(".{}.partial", table.name));
            fs::write(&tmp, bytes)?;
            staged.push((tmp, target));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, target) in staged {
            fs::rename(&tmp, &target)?;
            written.push(target);
        }
        Ok(written)
    }
}
