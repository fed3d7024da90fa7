//! Comparative analyses of scored sample sets: win/draw/loss, objective
//! satisfaction shifts, element frequencies and common BCC combinations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chem::{CandidateTriple, Symbol};
use crate::reward::{ScoredCandidate, CRITERIA_NAMES};

pub const DEFAULT_TIE_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("sample sets differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("report I/O at {path}: {source}")]
    IoError { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnalysisError + '_ {
    move |source| AnalysisError::IoError { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub win_pct: f64,
    pub draw_pct: f64,
    pub loss_pct: f64,
    pub n: usize,
}

/// Index-paired comparison of two reward lists.
pub fn win_draw_loss_rewards(a: &[f64], b: &[f64], tie_eps: f64) -> Result<ComparisonResult, AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AnalysisError::EmptyInput("comparison sets"));
    }
    if !(tie_eps >= 0.0) {
        return Err(AnalysisError::InvalidParameter(format!("tie_eps {tie_eps} must be non-negative")));
    }
    let (mut win, mut loss) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        if d > tie_eps {
            win += 1;
        } else if d < -tie_eps {
            loss += 1;
        }
    }
    let n = a.len();
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    Ok(ComparisonResult { win_pct: pct(win), draw_pct: pct(n - win - loss), loss_pct: pct(loss), n })
}

/// Win when `a` out-scores `b` at the same index by more than `tie_eps`.
pub fn win_draw_loss(a: &[ScoredCandidate], b: &[ScoredCandidate], tie_eps: f64) -> Result<ComparisonResult, AnalysisError> {
    let ra: Vec<f64> = a.iter().map(|s| s.reward).collect();
    let rb: Vec<f64> = b.iter().map(|s| s.reward).collect();
    win_draw_loss_rewards(&ra, &rb, tie_eps)
}

/// Fraction of candidates meeting each criterion, in `CRITERIA_NAMES` order.
pub fn objective_satisfaction(scored: &[ScoredCandidate]) -> Result<[f64; 4], AnalysisError> {
    if scored.is_empty() {
        return Err(AnalysisError::EmptyInput("scored candidates"));
    }
    let mut counts = [0usize; 4];
    for s in scored {
        for (c, ok) in counts.iter_mut().zip(s.criteria.satisfied()) {
            *c += ok as usize;
        }
    }
    Ok(counts.map(|c| c as f64 / scored.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveDelta {
    pub criterion: String,
    pub rate_before: f64,
    pub rate_after: f64,
    /// Relative change in percent; `None` when `rate_before` is zero.
    pub pct_change: Option<f64>,
}

pub fn objective_delta(before: &[f64; 4], after: &[f64; 4]) -> Vec<ObjectiveDelta> {
    CRITERIA_NAMES
        .iter()
        .zip(before.iter().zip(after))
        .map(|(name, (&b, &a))| ObjectiveDelta {
            criterion: name.to_string(),
            rate_before: b,
            rate_after: a,
            pct_change: (b > 0.0).then(|| 100.0 * (a - b) / b),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Bcc,
    B2,
    Both,
}

impl std::str::FromStr for Which {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bcc" => Ok(Which::Bcc),
            "b2" => Ok(Which::B2),
            "both" => Ok(Which::Both),
            other => Err(format!("expected bcc, b2 or both, got {other:?}")),
        }
    }
}

/// Presence counts of each element over the selected compositions,
/// normalized by the total number of occurrences.
pub fn element_frequency(triples: &[CandidateTriple], which: Which) -> Result<BTreeMap<String, f64>, AnalysisError> {
    if triples.is_empty() {
        return Err(AnalysisError::EmptyInput("triples"));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in triples {
        let comps = match which {
            Which::Bcc => vec![&t.bcc],
            Which::B2 => vec![&t.b2],
            Which::Both => vec![&t.bcc, &t.b2],
        };
        for c in comps {
            for s in c.elements() {
                *counts.entry(s.to_string()).or_default() += 1;
            }
        }
    }
    let total: usize = counts.values().sum();
    Ok(counts.into_iter().map(|(k, v)| (k, v as f64 / total as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub elements: Vec<String>,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopCombinations {
    pub combinations: Vec<Combination>,
    pub query: Option<Vec<String>>,
    /// Percent of candidates whose BCC elements are a subset of `query`.
    pub subset_percent: Option<f64>,
}

/// Most frequent BCC element sets (ties in element order), plus the share
/// of candidates whose BCC elements fall inside `query`.
pub fn top_combinations(
    triples: &[CandidateTriple],
    k: usize,
    query: Option<&[Symbol]>,
) -> Result<TopCombinations, AnalysisError> {
    if triples.is_empty() {
        return Err(AnalysisError::EmptyInput("triples"));
    }
    if k == 0 {
        return Err(AnalysisError::InvalidParameter("k must be at least 1".into()));
    }
    let mut counts: HashMap<Vec<Symbol>, usize> = HashMap::new();
    for t in triples {
        *counts.entry(t.bcc.elements().collect()).or_default() += 1;
    }
    let n = triples.len() as f64;
    let mut ranked: Vec<(Vec<Symbol>, usize)> = counts.into_iter().collect();
    ranked.sort_by(|(sa, ca), (sb, cb)| cb.cmp(ca).then_with(|| sa.cmp(sb)));
    let combinations = ranked
        .into_iter()
        .take(k)
        .map(|(set, c)| Combination { elements: set.iter().map(|s| s.to_string()).collect(), percent: 100.0 * c as f64 / n })
        .collect();
    let (query_out, subset_percent) = match query {
        Some(q) => {
            let qs: BTreeSet<Symbol> = q.iter().copied().collect();
            let inside = triples.iter().filter(|t| t.bcc.elements().all(|s| qs.contains(&s))).count();
            (Some(qs.iter().map(|s| s.to_string()).collect()), Some(100.0 * inside as f64 / n))
        }
        None => (None, None),
    };
    Ok(TopCombinations { combinations, query: query_out, subset_percent })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub win_draw_loss: Option<ComparisonResult>,
    pub objectives: Option<Vec<ObjectiveDelta>>,
    pub element_frequency: Option<BTreeMap<String, f64>>,
    pub top_combinations: Option<TopCombinations>,
}

impl AnalysisReport {
    fn is_empty(&self) -> bool {
        self.win_draw_loss.is_none()
            && self.objectives.is_none()
            && self.element_frequency.is_none()
            && self.top_combinations.is_none()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        if let Some(w) = &self.win_draw_loss {
            let _ = writeln!(s, "win/draw/loss over {} pairs: {:.1}% / {:.1}% / {:.1}%", w.n, w.win_pct, w.draw_pct, w.loss_pct);
        }
        if let Some(objs) = &self.objectives {
            let _ = writeln!(s, "objective satisfaction (before -> after):");
            for o in objs {
                let change = o.pct_change.map_or("n/a".to_string(), |c| format!("{c:+.1}%"));
                let _ = writeln!(s, "  {:<20} {:.3} -> {:.3} ({change})", o.criterion, o.rate_before, o.rate_after);
            }
        }
        if let Some(freq) = &self.element_frequency {
            let mut v: Vec<(&String, &f64)> = freq.iter().collect();
            v.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
            let top: Vec<String> = v.iter().take(8).map(|(e, f)| format!("{e} {:.1}%", **f * 100.0)).collect();
            let _ = writeln!(s, "most frequent elements: {}", top.join(", "));
        }
        if let Some(tc) = &self.top_combinations {
            let _ = writeln!(s, "top BCC element sets:");
            for (i, c) in tc.combinations.iter().enumerate() {
                let _ = writeln!(s, "  {}. {} {:.1}%", i + 1, c.elements.join("-"), c.percent);
            }
            if let (Some(q), Some(p)) = (&tc.query, tc.subset_percent) {
                let _ = writeln!(s, "  BCC elements within {{{}}}: {p:.1}%", q.join(","));
            }
        }
        s
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), AnalysisError> {
    fs::write(path, body).map_err(io_err(path))
}

/// Writes `analysis.json`, `summary.txt` and one CSV per present analysis
/// into an existing directory.
pub fn emit_report(dir: &Path, report: &AnalysisReport) -> Result<(), AnalysisError> {
    if report.is_empty() {
        return Err(AnalysisError::EmptyInput("no analyses to report"));
    }
    if !dir.is_dir() {
        return Err(AnalysisError::IoError {
            path: dir.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        });
    }
    if let Some(w) = &report.win_draw_loss {
        write_file(&dir.join("wdl.csv"), &format!("win,draw,loss\n{},{},{}\n", w.win_pct, w.draw_pct, w.loss_pct))?;
    }
    if let Some(objs) = &report.objectives {
        let mut s = String::from("criterion,rate_before,rate_after,pct_change\n");
        for o in objs {
            let change = o.pct_change.map_or(String::new(), |c| c.to_string());
            let _ = writeln!(s, "{},{},{},{}", o.criterion, o.rate_before, o.rate_after, change);
        }
        write_file(&dir.join("objectives.csv"), &s)?;
    }
    if let Some(freq) = &report.element_frequency {
        let mut s = String::from("element,frequency\n");
        for (e, f) in freq {
            let _ = writeln!(s, "{e},{f}");
        }
        write_file(&dir.join("element_freq.csv"), &s)?;
    }
    if let Some(tc) = &report.top_combinations {
        let mut s = String::from("rank,elements,percent\n");
        for (i, c) in tc.combinations.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", i + 1, c.elements.join("-"), c.percent);
        }
        write_file(&dir.join("top_combos.csv"), &s)?;
    }
    write_file(&dir.join("analysis.json"), &(serde_json::to_string_pretty(report)? + "\n"))?;
    write_file(&dir.join("summary.txt"), &report.summary())
}

pub fn read_report(dir: &Path) -> Result<AnalysisReport, AnalysisError> {
    let path = dir.join("analysis.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_str(&text)?)
}
