//! Atomic file output and run metadata sidecars.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use pfode::spectral::SpectralBasis;

use crate::error::CliError;

pub const BUILD: &str = env!("PFODE_BUILD");

/// Output directory; every file is written to a temp file in the same
/// directory and renamed into place.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write<F>(&self, name: &str, body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let target = self.path(name);
        let tmp = tempfile::NamedTempFile::new_in(&self.root)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            body(&mut w)?;
            w.flush()?;
        }
        tmp.persist(&target).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(w)?;
            Ok(())
        })
    }
}

/// FNV-1a over the eigenvalue and eigenvector bit patterns; identifies the
/// basis a coefficient file refers to.
pub fn basis_hash(basis: &SpectralBasis) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |v: f64| {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for &l in basis.eigenvalues() {
        eat(l);
    }
    for n in 0..basis.truncation() {
        for &v in basis.eigenvector(n) {
            eat(v);
        }
    }
    format!("{h:016x}")
}

/// Sidecar for one sampler run.
#[derive(Debug, Serialize)]
pub struct SampleMeta {
    pub command: &'static str,
    pub experiment: &'static str,
    pub method: String,
    pub nfe: usize,
    pub seed: u64,
    pub t_eps: f64,
    pub count: usize,
    pub antithetic: bool,
    pub score: &'static str,
    pub basis_hash: String,
    pub score_evals: u64,
    pub build: &'static str,
    pub wall_ms: u128,
}

/// Sidecar for a result table; `wall_ms` is kept here so the CSV itself
/// stays byte-identical across runs.
#[derive(Debug, Serialize)]
pub struct ResultMeta {
    pub command: &'static str,
    pub experiment: &'static str,
    pub seed: u64,
    pub reference_seed: u64,
    pub t_eps: f64,
    pub basis_hash: String,
    pub build: &'static str,
    pub rows: Vec<RowTiming>,
}

#[derive(Debug, Serialize)]
pub struct RowTiming {
    pub method: String,
    pub nfe: usize,
    pub metric: String,
    pub wall_ms: u128,
}
