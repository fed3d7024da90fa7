//! Client side of the file-exchange protocol used to reach an external
//! CALPHAD process.
//!
//! The client writes a JSON-lines request file into the request directory,
//! one object per line:
//!
//! ```text
//! {"id": "<id>", "master": {"Al": 0.225, "Mo": 0.55, "Ni": 0.225}, "grid_K": [373.0, 398.0, ...]}
//! ```
//!
//! The bridge answers each id with `<id>.csv` (a phase table in the standard
//! CSV schema) or `<id>.err` holding an error message, in the response
//! directory. Both sides write to a temporary name and rename, so a visible
//! file is always complete.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{parse_phase_table, query_digest, PhaseError, PhaseOracle, PhaseTable, TemperatureGrid};
use crate::chem::{Composition, Symbol};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub id: String,
    pub master: BTreeMap<Symbol, f64>,
    #[serde(rename = "grid_K")]
    pub grid_k: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FileBridgeOracle {
    request_dir: PathBuf,
    response_dir: PathBuf,
    poll_interval: Duration,
    timeout: Duration,
}

impl FileBridgeOracle {
    pub fn new(request_dir: impl Into<PathBuf>, response_dir: impl Into<PathBuf>) -> FileBridgeOracle {
        FileBridgeOracle {
            request_dir: request_dir.into(),
            response_dir: response_dir.into(),
            poll_interval: Duration::from_millis(200),
            timeout: Duration::from_secs(600),
        }
    }

    pub fn with_polling(mut self, poll_interval: Duration, timeout: Duration) -> FileBridgeOracle {
        self.poll_interval = poll_interval;
        self.timeout = timeout;
        self
    }

    /// Request id for a query: the first 32 hex digits of the query digest.
    pub fn request_id(master: &Composition, grid: &TemperatureGrid) -> String {
        query_digest(master, grid)[..32].to_string()
    }

    /// Writes several requests into one JSON-lines file and returns their ids.
    pub fn submit(&self, queries: &[(&Composition, &TemperatureGrid)]) -> Result<Vec<String>, PhaseError> {
        fs::create_dir_all(&self.request_dir)?;
        let mut ids = Vec::with_capacity(queries.len());
        let mut body = String::new();
        for (master, grid) in queries {
            let id = Self::request_id(master, grid);
            let req = BridgeRequest {
                id: id.clone(),
                master: master.iter().collect(),
                grid_k: grid.temperatures().to_vec(),
            };
            body.push_str(&serde_json::to_string(&req).map_err(|e| PhaseError::Oracle(e.to_string()))?);
            body.push('\n');
            ids.push(id);
        }
        let name = match ids.as_slice() {
            [single] => single.clone(),
            _ => format!("batch-{}", &query_digest_of_ids(&ids)[..16]),
        };
        write_atomically(&self.request_dir.join(format!("{name}.jsonl")), body.as_bytes())?;
        Ok(ids)
    }

    /// Blocks until the response for `id` appears or the timeout passes.
    pub fn await_response(&self, id: &str) -> Result<PhaseTable, PhaseError> {
        let csv = self.response_dir.join(format!("{id}.csv"));
        let err = self.response_dir.join(format!("{id}.err"));
        let start = Instant::now();
        loop {
            if csv.exists() {
                let bytes = fs::read(&csv)?;
                return parse_phase_table(bytes.as_slice());
            }
            if err.exists() {
                let msg = fs::read_to_string(&err)?;
                return Err(PhaseError::Oracle(format!("bridge reported for {id}: {}", msg.trim())));
            }
            if start.elapsed() >= self.timeout {
                return Err(PhaseError::Oracle(format!("timed out waiting for bridge response {id}")));
            }
            std::thread::sleep(self.poll_interval);
        }
    }
}

fn query_digest_of_ids(ids: &[String]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(ids.join(",").as_bytes()))
}

pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), PhaseError> {
    let tmp = path.with_extension(format!("part{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl PhaseOracle for FileBridgeOracle {
    fn equilibrium(&self, master: &Composition, grid: &TemperatureGrid) -> Result<PhaseTable, PhaseError> {
        let id = Self::request_id(master, grid);
        let csv = self.response_dir.join(format!("{id}.csv"));
        if !csv.exists() {
            self.submit(&[(master, grid)])?;
        }
        let table = self.await_response(&id)?;
        if table.grid() != grid {
            return Err(PhaseError::Oracle(format!("bridge response {id} is on a different grid")));
        }
        Ok(table.with_master(master.clone()))
    }
}
