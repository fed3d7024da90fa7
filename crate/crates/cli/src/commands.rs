use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use alloygen::analysis::{self, AnalysisReport, Which};
use alloygen::baselines::random_search;
use alloygen::chem::{parse_formula, parse_triple, CandidateTriple, Composition, ElementTable, RoleTable, Symbol};
use alloygen::datasets::{
    build_dpo_pairs, build_sft_dataset, enumerate_b2_pool, enumerate_bcc_pool, filter_single_phase, read_jsonl,
    write_jsonl, CompositionPool, PreferencePair, SftExample, TripleRecord, VolumeSampler, CONCENTRATION_GRID,
};
use alloygen::metrics::{metric_report, MetricConfig};
use alloygen::phase::{CachedOracle, FileBridgeOracle, PhaseClass, PhaseOracle, SurrogateOracle, TemperatureGrid};
use alloygen::policy::{
    train_dpo as fit_dpo, train_sft as fit_sft, write_train_log, Checkpoint, DpoConfig, PolicyParams, PolicyShape,
    PreferenceExample, SftConfig, Vocab, BOS_ID, EOS_ID, PAD_ID,
};
use alloygen::reward::{score_batch, ScoredCandidate, ScoredRecord};

use crate::config::{OracleKind, RunConfig};
use crate::{
    AnalyzeArgs, BaselineArgs, BuildDpoArgs, CliError, EvalArgs, GenPoolsArgs, GenSftArgs, SampleArgs, ScoreArgs,
    TrainDpoArgs, TrainSftArgs,
};

struct Ctx {
    elements: ElementTable,
    roles: RoleTable,
    grid: TemperatureGrid,
}

fn context(cfg: &RunConfig) -> Result<Ctx, CliError> {
    let elements = match &cfg.elements_path {
        Some(p) => ElementTable::from_path(p).with_context(|| format!("loading elements from {}", p.display())),
        None => Ok(ElementTable::default_table()),
    }
    .map_err(CliError::Config)?;
    let roles = match &cfg.roles_path {
        Some(p) => RoleTable::from_path(p).with_context(|| format!("loading roles from {}", p.display())),
        None => Ok(RoleTable::default_table()),
    }
    .map_err(CliError::Config)?;
    roles.validate_against(&elements).map_err(|e| CliError::Config(e.into()))?;
    let grid = TemperatureGrid::standard(cfg.grid_step_k).map_err(|e| CliError::Config(e.into()))?;
    Ok(Ctx { elements, roles, grid })
}

fn oracle(cfg: &RunConfig, ctx: &Ctx) -> Result<Box<dyn PhaseOracle>> {
    let base: Box<dyn PhaseOracle> = match cfg.oracle {
        OracleKind::Surrogate => {
            let surrogate_cfg = alloygen::phase::SurrogateConfig { roles: ctx.roles.clone(), ..Default::default() };
            Box::new(SurrogateOracle::new(ctx.elements.clone(), surrogate_cfg))
        }
        OracleKind::FileBridge => {
            let (Some(req), Some(resp)) = (&cfg.bridge_request_dir, &cfg.bridge_response_dir) else {
                bail!("file-bridge oracle needs request and response directories");
            };
            Box::new(FileBridgeOracle::new(req, resp).with_polling(
                Duration::from_millis(cfg.bridge_poll_ms),
                Duration::from_secs(cfg.bridge_timeout_s),
            ))
        }
    };
    Ok(match &cfg.cache_dir {
        Some(dir) => Box::new(CachedOracle::new(base, dir)?),
        None => base,
    })
}

fn path_or(cfg: &RunConfig, given: Option<PathBuf>, default_name: &str) -> PathBuf {
    given.unwrap_or_else(|| cfg.out_dir.join(default_name))
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_records<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_jsonl(items, create(path)?)?;
    Ok(())
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_jsonl(f).with_context(|| format!("reading {}", path.display()))
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T, CliError> {
    r.map_err(|source| CliError::Stage { stage: name, source })
}

fn read_pool(path: &Path, ctx: &Ctx) -> Result<CompositionPool> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    CompositionPool::read_csv(f, &ctx.elements).with_context(|| format!("reading pool {}", path.display()))
}

fn read_triples(path: &Path, ctx: &Ctx) -> Result<Vec<CandidateTriple>> {
    read_records::<TripleRecord>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_triple(&ctx.elements).with_context(|| format!("{} record {}", path.display(), i + 1)))
        .collect()
}

fn read_scored(path: &Path, ctx: &Ctx) -> Result<Vec<ScoredCandidate>> {
    read_records::<ScoredRecord>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_scored(&ctx.elements).with_context(|| format!("{} record {}", path.display(), i + 1)))
        .collect()
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Checkpoint::read(f).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    ck.write(create(path)?)?;
    Ok(())
}

pub fn gen_pools(cfg: &RunConfig, a: GenPoolsArgs) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let out = path_or(cfg, a.out, "pools.csv");
    stage("gen-pools", (|| {
        let bcc = enumerate_bcc_pool(&ctx.roles, &CONCENTRATION_GRID)?;
        let b2 = enumerate_b2_pool(&ctx.roles)?;
        log::info!("enumerated {} BCC and {} B2 compositions", bcc.len(), b2.len());
        let pool = if a.no_filter {
            CompositionPool::from_compositions(bcc, b2, "enumerated")
        } else {
            let oracle = oracle(cfg, &ctx)?;
            let fb = filter_single_phase(&bcc, oracle.as_ref(), &ctx.grid, PhaseClass::Bcc, cfg.filter_min_frac)?;
            let f2 = filter_single_phase(&b2, oracle.as_ref(), &ctx.grid, PhaseClass::B2, cfg.filter_min_frac)?;
            for (c, e) in fb.failed.iter().chain(&f2.failed) {
                log::warn!("oracle failed for {c}: {e}");
            }
            log::info!("kept {} BCC and {} B2 single-phase compositions", fb.kept.len(), f2.kept.len());
            CompositionPool::from_compositions(fb.kept, f2.kept, "enumerated+single-phase")
        };
        pool.write_csv(create(&out)?)?;
        Ok(())
    })())
}

pub fn gen_sft(cfg: &RunConfig, a: GenSftArgs) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let pools = path_or(cfg, a.pools, "pools.csv");
    let out = path_or(cfg, a.out, "sft.jsonl");
    require(&pools)?;
    stage("gen-sft", (|| {
        let pool = read_pool(&pools, &ctx)?;
        let sampler = match cfg.volume_sampler.as_str() {
            "uniform" => VolumeSampler::Uniform,
            _ => VolumeSampler::Normal { mean: cfg.volume_mean, sd: cfg.volume_sd },
        };
        let mut examples = build_sft_dataset(&pool, cfg.volumes_per_pair, sampler, cfg.seed)?;
        if let Some(limit) = a.limit.filter(|l| *l < examples.len()) {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut keep = rand::seq::index::sample(&mut rng, examples.len(), limit).into_vec();
            keep.sort_unstable();
            examples = keep.into_iter().map(|i| examples[i].clone()).collect();
        }
        let pairs: HashSet<&str> = examples.iter().map(|e| e.completion.rsplit_once('/').map_or("", |p| p.0)).collect();
        log::info!("{} SFT examples over {} distinct pairs", examples.len(), pairs.len());
        write_records(&out, &examples)
    })())
}

fn policy_shape(cfg: &RunConfig, vocab: &Vocab) -> PolicyShape {
    PolicyShape { vocab_size: vocab.len(), window: cfg.window, embed_dim: cfg.embed_dim, hidden: cfg.hidden }
}

fn clip(cfg: &RunConfig) -> Option<f64> {
    (cfg.clip_norm > 0.0).then_some(cfg.clip_norm)
}

pub fn train_sft(cfg: &RunConfig, a: TrainSftArgs) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let data = path_or(cfg, a.data, "sft.jsonl");
    let out = path_or(cfg, a.out, "policy_sft.json");
    let log_path = path_or(cfg, a.log, "sft_log.csv");
    require(&data)?;
    stage("train-sft", (|| {
        let examples: Vec<SftExample> = read_records(&data)?;
        let vocab = Vocab::for_elements(&ctx.elements);
        let corpus: Vec<Vec<u32>> = examples.iter().map(|e| vocab.encode_completion(&e.completion)).collect();
        let init = PolicyParams::init(policy_shape(cfg, &vocab), PAD_ID, EOS_ID, cfg.seed)?;
        let sft_cfg = SftConfig {
            lr: cfg.sft_lr,
            momentum: cfg.sft_momentum,
            batch_size: cfg.sft_batch_size,
            epochs: cfg.sft_epochs,
            clip_norm: clip(cfg),
            seed: cfg.seed,
        };
        let (params, losses) = fit_sft(&init, &corpus, &sft_cfg)?;
        write_checkpoint(&out, &Checkpoint::new(vocab, params)?)?;
        let mut w = create(&log_path)?;
        writeln!(w, "epoch,loss")?;
        for (epoch, loss) in losses.iter().enumerate() {
            writeln!(w, "{epoch},{loss}")?;
        }
        w.flush()?;
        Ok(())
    })())
}

pub fn sample(cfg: &RunConfig, a: SampleArgs) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let policy = path_or(cfg, a.policy, "policy_sft.json");
    let out = path_or(cfg, a.out, "samples.jsonl");
    let n = a.n.unwrap_or(cfg.sample_n);
    require(&policy)?;
    stage("sample", (|| {
        let ck = read_checkpoint(&policy)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let cap = n.saturating_mul(cfg.max_attempts_factor.max(1));
        let mut triples = Vec::with_capacity(n);
        let mut attempts = 0;
        while triples.len() < n && attempts < cap {
            attempts += 1;
            let (tokens, _) = ck.params.sample(&[BOS_ID], cfg.temperature, cfg.max_len, &mut rng)?;
            if tokens.last() != Some(&EOS_ID) {
                continue;
            }
            if let Ok(t) = parse_triple(&ck.vocab.detokenize(&tokens), &ctx.elements) {
                triples.push(TripleRecord::from(&t));
            }
        }
        log::info!("{} parseable triples from {attempts} samples", triples.len());
        if triples.is_empty() {
            bail!("no parseable triple in {attempts} samples");
        }
        if triples.len() < n {
            log::warn!("attempt cap reached with {} of {n} triples", triples.len());
        }
        write_records(&out, &triples)
    })())
}

#[derive(Serialize)]
struct ScoreFailure {
    index: usize,
    candidate: String,
    error: String,
}

pub fn score(cfg: &RunConfig, a: ScoreArgs) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let input = path_or(cfg, a.input, "samples.jsonl");
    let out = path_or(cfg, a.out, "scored.jsonl");
    require(&input)?;
    stage("score", (|| {
        let triples = read_triples(&input, &ctx)?;
        let oracle = oracle(cfg, &ctx)?;
        let results = score_batch(&triples, oracle.as_ref(), &ctx.grid, a.workers.unwrap_or(cfg.workers));
        let mut scored = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for (index, (t, r)) in triples.iter().zip(results).enumerate() {
            match r {
                Ok(s) => scored.push(ScoredRecord::from(&s)),
                Err(e) => failures.push(ScoreFailure { index, candidate: t.to_text(), error: e.to_string() }),
            }
        }
        write_records(&out, &scored)?;
        let sidecar = out.with_extension("failures.jsonl");
        if failures.is_empty() {
            if sidecar.exists() {
                fs::remove_file(&sidecar)?;
            }
        } else {
            log::warn!("{} candidates failed to score; see {}", failures.len(), sidecar.display());
            write_records(&sidecar, &failures)?;
        }
        log::info!("scored {} of {} candidates", scored.len(), triples.len());
        Ok(())
    })())
}

pub fn build_dpo(cfg: &RunConfig, a: BuildDpoArgs) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let scored_path = path_or(cfg, a.scored, "scored.jsonl");
    let out = path_or(cfg, a.out, "pairs.jsonl");
    require(&scored_path)?;
    stage("build-dpo", (|| {
        let scored = read_scored(&scored_path, &ctx)?;
        let pairs = build_dpo_pairs(
            &scored,
            a.top_frac.unwrap_or(cfg.top_frac),
            a.rejected_per_chosen.unwrap_or(cfg.rejected_per_chosen),
            cfg.seed,
        )?;
        log::info!("{} preference pairs from {} candidates", pairs.len(), scored.len());
        write_records(&out, &pairs)
    })())
}

pub fn train_dpo(cfg: &RunConfig, a: TrainDpoArgs) -> Result<(), CliError> {
    let policy = path_or(cfg, a.policy, "policy_sft.json");
    let pairs_path = path_or(cfg, a.pairs, "pairs.jsonl");
    let out = path_or(cfg, a.out, "policy_dpo.json");
    let log_path = path_or(cfg, a.log, "dpo_log.csv");
    require(&policy)?;
    require(&pairs_path)?;
    stage("train-dpo", (|| {
        let ck = read_checkpoint(&policy)?;
        let pairs: Vec<PreferencePair> = read_records(&pairs_path)?;
        let examples: Vec<PreferenceExample> = pairs
            .iter()
            .map(|p| PreferenceExample {
                chosen: ck.vocab.encode_completion(&p.chosen),
                rejected: ck.vocab.encode_completion(&p.rejected),
            })
            .collect();
        let dpo_cfg = DpoConfig {
            beta: cfg.beta,
            lr: cfg.dpo_lr,
            momentum: cfg.dpo_momentum,
            batch_size: cfg.dpo_batch_size,
            steps: cfg.dpo_steps,
            clip_norm: clip(cfg),
            seed: cfg.seed,
        };
        let (params, log) = fit_dpo(&ck.params, &examples, &dpo_cfg)?;
        if let Some(last) = log.last() {
            log::info!("final DPO loss {:.5}, reward margin {:.5}", last.loss, last.reward_margin);
        }
        write_checkpoint(&out, &Checkpoint::new(ck.vocab, params)?)?;
        write_train_log(&log, create(&log_path)?)?;
        Ok(())
    })())
}

#[derive(Deserialize)]
struct FormulaRow {
    formula: String,
}

fn read_known(path: &Path, ctx: &Ctx) -> Result<Vec<Composition>> {
    let text = fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = header.iter().position(|h| *h == "formula").ok_or_else(|| anyhow!("{} has no formula column", path.display()))?;
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let row = FormulaRow { formula: l.split(',').nth(col).unwrap_or("").trim().to_string() };
            parse_formula(&row.formula, &ctx.elements).with_context(|| format!("formula {:?}", row.formula))
        })
        .collect()
}

pub fn eval(cfg: &RunConfig, a: EvalArgs) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let samples_path = path_or(cfg, a.samples, "samples.jsonl");
    let pools_path = path_or(cfg, a.pools, "pools.csv");
    let out = path_or(cfg, a.out, "report.json");
    require(&samples_path)?;
    require(&pools_path)?;
    for p in a.scored.iter().chain(&a.known) {
        require(p)?;
    }
    stage("eval", (|| {
        let samples = read_triples(&samples_path, &ctx)?;
        let scored = match &a.scored {
            Some(p) => read_scored(p, &ctx)?,
            None => Vec::new(),
        };
        let pool = read_pool(&pools_path, &ctx)?;
        let mut reference = Vec::with_capacity(pool.bcc.len() * pool.b2.len());
        for b in &pool.bcc {
            for c in &pool.b2 {
                reference.push(CandidateTriple::new(b.composition.clone(), c.composition.clone(), 0.45)?);
            }
        }
        if reference.len() > a.reference_limit {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut keep = rand::seq::index::sample(&mut rng, reference.len(), a.reference_limit).into_vec();
            keep.sort_unstable();
            log::info!("reference design space subsampled from {} to {} pairs", reference.len(), keep.len());
            reference = keep.into_iter().map(|i| reference[i].clone()).collect();
        }
        let known = match &a.known {
            Some(p) => read_known(p, &ctx)?,
            None => pool.bcc.iter().chain(&pool.b2).map(|e| e.composition.clone()).collect(),
        };
        let metric_cfg = MetricConfig { coverage_delta: cfg.coverage_delta, novelty_delta: cfg.novelty_delta, unique_n: cfg.unique_n };
        let report = metric_report(&samples, &scored, &reference, &known, &ctx.elements, &metric_cfg)?;
        let mut w = create(&out)?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()?;
        log::info!(
            "validity {:.3}, coverage {:.3}/{:.3}, unique {:.2}, mean reward {}",
            report.validity_rate,
            report.coverage_recall,
            report.coverage_precision,
            report.unique_pairs,
            report.mean_reward.map_or("n/a".into(), |r| format!("{r:.4}"))
        );
        Ok(())
    })())
}

pub fn baseline(cfg: &RunConfig, a: BaselineArgs) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let out = path_or(cfg, a.out, "baseline.jsonl");
    stage("baseline", (|| {
        let triples = random_search(&ctx.roles, a.n.unwrap_or(cfg.sample_n), cfg.seed)?;
        let records: Vec<TripleRecord> = triples.iter().map(TripleRecord::from).collect();
        write_records(&out, &records)
    })())
}

pub fn analyze(cfg: &RunConfig, a: AnalyzeArgs) -> Result<(), CliError> {
    let ctx = context(cfg)?;
    let out_dir = path_or(cfg, a.out_dir, "analysis");
    require(&a.before)?;
    require(&a.after)?;
    let which: Which = a.which.parse().map_err(|e: String| CliError::Config(anyhow!(e)))?;
    stage("analyze", (|| {
        let before = read_scored(&a.before, &ctx)?;
        let after = read_scored(&a.after, &ctx)?;
        let query: Option<Vec<Symbol>> = a
            .query
            .as_deref()
            .map(|q| q.split(',').map(|s| s.trim().parse::<Symbol>().map_err(|e| anyhow!("{e}"))).collect())
            .transpose()?;
        let after_triples: Vec<CandidateTriple> = after.iter().map(|s| s.triple.clone()).collect();
        let report = AnalysisReport {
            win_draw_loss: (before.len() == after.len())
                .then(|| analysis::win_draw_loss(&after, &before, analysis::DEFAULT_TIE_EPS))
                .transpose()?,
            objectives: Some(analysis::objective_delta(
                &analysis::objective_satisfaction(&before)?,
                &analysis::objective_satisfaction(&after)?,
            )),
            element_frequency: Some(analysis::element_frequency(&after_triples, which)?),
            top_combinations: Some(analysis::top_combinations(&after_triples, a.top_k, query.as_deref())?),
        };
        if report.win_draw_loss.is_none() {
            log::warn!("sets differ in size ({} vs {}); skipping win/draw/loss", before.len(), after.len());
        }
        fs::create_dir_all(&out_dir)?;
        analysis::emit_report(&out_dir, &report)?;
        eprint!("{}", report.summary());
        Ok(())
    })())
}
