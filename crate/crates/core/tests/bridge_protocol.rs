//! Drives the file-exchange oracle against an in-process responder that
//! follows the bridge side of the protocol and answers with surrogate tables.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use alloygen::chem::{CandidateTriple, Composition, Symbol};
use alloygen::phase::{
    parse_phase_table, BridgeRequest, CachedOracle, FileBridgeOracle, PhaseOracle, SurrogateOracle, TemperatureGrid,
    CSV_HEADER, DEFAULT_GRID_STEP_K,
};
use alloygen::reward::score_batch;

struct Responder {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<usize>>,
}

impl Responder {
    /// Answers every request line; masters containing `fail_on` get an `.err`.
    fn spawn(req: PathBuf, resp: PathBuf, fail_on: Option<Symbol>) -> Responder {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::spawn(move || {
            let oracle = SurrogateOracle::default();
            let mut seen = HashSet::new();
            let mut answered = 0;
            fs::create_dir_all(&resp).unwrap();
            while !flag.load(Ordering::SeqCst) {
                let mut names: Vec<PathBuf> = fs::read_dir(&req)
                    .map(|d| d.flatten().map(|e| e.path()).collect())
                    .unwrap_or_default();
                names.sort();
                for path in names.into_iter().filter(|p| p.extension().is_some_and(|e| e == "jsonl")) {
                    if !seen.insert(path.clone()) {
                        continue;
                    }
                    for line in fs::read_to_string(&path).unwrap().lines() {
                        let r: BridgeRequest = serde_json::from_str(line).unwrap();
                        let master = Composition::from_amounts(r.master.clone()).unwrap();
                        if fail_on.is_some_and(|s| master.contains(s)) {
                            publish(&resp, &format!("{}.err", r.id), "equilibrium did not converge\n");
                        } else {
                            let grid = TemperatureGrid::new(r.grid_k.clone()).unwrap();
                            let table = oracle.equilibrium(&master, &grid).unwrap();
                            publish(&resp, &format!("{}.csv", r.id), &table.to_csv_string());
                        }
                        answered += 1;
                    }
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            answered
        });
        Responder { stop, handle: Some(handle) }
    }

    fn finish(mut self) -> usize {
        self.stop.store(true, Ordering::SeqCst);
        self.handle.take().unwrap().join().unwrap()
    }
}

fn publish(dir: &Path, name: &str, body: &str) {
    let tmp = dir.join(format!("{name}.tmp"));
    fs::write(&tmp, body).unwrap();
    fs::rename(tmp, dir.join(name)).unwrap();
}

fn client(req: &Path, resp: &Path) -> FileBridgeOracle {
    FileBridgeOracle::new(req, resp).with_polling(Duration::from_millis(2), Duration::from_secs(30))
}

fn triples() -> Vec<CandidateTriple> {
    [
        ("Mo0.5Nb0.5", "Ni0.5Al0.5", 0.3),
        ("Ta0.4V0.6", "Co0.5Ti0.5", 0.45),
        ("W1", "Fe0.5Al0.5", 0.6),
        ("Cr0.5Mo0.25Nb0.25", "Ni0.5Hf0.5", 0.25),
    ]
    .into_iter()
    .map(|(b, c, v)| {
        let table = alloygen::chem::ElementTable::default_table();
        CandidateTriple::new(
            alloygen::chem::parse_formula(b, &table).unwrap(),
            alloygen::chem::parse_formula(c, &table).unwrap(),
            v,
        )
        .unwrap()
    })
    .collect()
}

#[test]
fn bridge_scores_match_the_direct_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (req, resp) = (dir.path().join("req"), dir.path().join("resp"));
    let responder = Responder::spawn(req.clone(), resp.clone(), None);
    let grid = TemperatureGrid::standard(DEFAULT_GRID_STEP_K).unwrap();
    let ts = triples();
    let via_bridge = score_batch(&ts, &client(&req, &resp), &grid, 2);
    let direct = score_batch(&ts, &SurrogateOracle::default(), &grid, 1);
    assert_eq!(responder.finish(), ts.len());
    for (b, d) in via_bridge.into_iter().zip(direct) {
        let (b, d) = (b.unwrap(), d.unwrap());
        assert_eq!(b.criteria.satisfied(), d.criteria.satisfied());
        assert!((b.reward - d.reward).abs() < 1e-9, "{} vs {}", b.reward, d.reward);
        assert_eq!(b.master, d.master);
    }
}

#[test]
fn batched_requests_and_error_files() {
    let dir = tempfile::tempdir().unwrap();
    let (req, resp) = (dir.path().join("req"), dir.path().join("resp"));
    let bridge = client(&req, &resp);
    let grid = TemperatureGrid::standard(50.0).unwrap();
    let masters: Vec<Composition> = triples().iter().map(CandidateTriple::master).collect();
    let queries: Vec<(&Composition, &TemperatureGrid)> = masters.iter().map(|m| (m, &grid)).collect();
    let ids = bridge.submit(&queries).unwrap();
    assert_eq!(fs::read_dir(&req).unwrap().count(), 1, "one request file per batch");
    let line_ids: Vec<String> = fs::read_to_string(fs::read_dir(&req).unwrap().next().unwrap().unwrap().path())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<BridgeRequest>(l).unwrap().id)
        .collect();
    assert_eq!(line_ids, ids);

    let w = Symbol::new("W").unwrap();
    let responder = Responder::spawn(req.clone(), resp.clone(), Some(w));
    for (id, m) in ids.iter().zip(&masters) {
        let result = bridge.await_response(id);
        if m.contains(w) {
            assert!(result.unwrap_err().to_string().contains("did not converge"));
        } else {
            let table = result.unwrap();
            assert_eq!(table.grid(), &grid);
            let csv = fs::read_to_string(resp.join(format!("{id}.csv"))).unwrap();
            assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
            assert_eq!(parse_phase_table(csv.as_bytes()).unwrap(), table);
        }
    }
    responder.finish();
}

#[test]
fn cache_in_front_of_bridge_avoids_repeat_requests() {
    let dir = tempfile::tempdir().unwrap();
    let (req, resp) = (dir.path().join("req"), dir.path().join("resp"));
    let responder = Responder::spawn(req.clone(), resp.clone(), None);
    let grid = TemperatureGrid::standard(DEFAULT_GRID_STEP_K).unwrap();
    let cached = CachedOracle::new(client(&req, &resp), dir.path().join("cache")).unwrap();
    let m = triples()[0].master();
    let first = cached.equilibrium(&m, &grid).unwrap();
    fs::remove_dir_all(&resp).unwrap();
    let second = cached.equilibrium(&m, &grid).unwrap();
    assert_eq!(first, second);
    assert_eq!(responder.finish(), 1);
}
