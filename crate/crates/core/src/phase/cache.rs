use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::{parse_phase_table, query_digest, PhaseError, PhaseOracle, PhaseTable, TemperatureGrid};
use crate::chem::Composition;

/// Memoizes another oracle on disk. Entries are phase-table CSV files named by
/// the SHA-256 of `canonical formula | grid hash`; writes go through a
/// temporary file and a rename, serialized per key.
pub struct CachedOracle<O> {
    inner: O,
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl<O: PhaseOracle> CachedOracle<O> {
    pub fn new(inner: O, dir: impl Into<PathBuf>) -> Result<CachedOracle<O>, PhaseError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CachedOracle { inner, dir, locks: Mutex::new(HashMap::new()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, master: &Composition, grid: &TemperatureGrid) -> PathBuf {
        self.dir.join(format!("{}.csv", query_digest(master, grid)))
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(key.to_string()).or_default().clone()
    }

    fn read_entry(path: &Path, grid: &TemperatureGrid) -> Result<PhaseTable, PhaseError> {
        let corrupt = |reason: String| PhaseError::StoreCorrupt { path: path.display().to_string(), reason };
        let bytes = fs::read(path).map_err(|e| corrupt(e.to_string()))?;
        let table = parse_phase_table(bytes.as_slice()).map_err(|e| corrupt(e.to_string()))?;
        if table.grid() != grid {
            return Err(corrupt("grid does not match the query".into()));
        }
        Ok(table)
    }
}

impl<O: PhaseOracle> PhaseOracle for CachedOracle<O> {
    fn equilibrium(&self, master: &Composition, grid: &TemperatureGrid) -> Result<PhaseTable, PhaseError> {
        let path = self.entry_path(master, grid);
        let lock = self.key_lock(&path.display().to_string());
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        if path.exists() {
            return Ok(Self::read_entry(&path, grid)?.with_master(master.clone()));
        }
        let table = self.inner.equilibrium(master, grid)?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            table.write_csv(&mut f)?;
            f.flush()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(table)
    }
}
