//! End-to-end runs and sweeps with their on-disk artifacts.
//!
//! A run directory holds `config.toml`, `manifest.json`, `rejected.tsv`,
//! `split/`, `models/*.ckpt`, `centers.tsv`, `recommendations/<method>.tsv`
//! and the report files. A stage failure leaves a `FAILED` marker naming the
//! stage and cause.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Value};
use stacp_core::{chronological_split, CheckIn, DatasetSplit, TemporalState, TrainReport};

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::dataset::{parse_checkins, write_checkins, write_split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_report, EvalReport, Metric};
use crate::pipeline::{allocate_all, fit_models, prepare, recommend_all, CenterSet, MethodRun, Models, Needs, Prepared};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Split,
    Train,
    Recommend,
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Recommend => "recommend",
            Stage::Evaluate => "evaluate",
        }
    }
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs `f` on a rayon pool bounded by `workers` (0 means the rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))?;
    Ok(pool.install(f))
}

/// What a run produced, kept in memory for callers and tests.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub checkins: Vec<CheckIn>,
    pub split: Option<DatasetSplit>,
    pub report: Option<EvalReport>,
    pub completed: Vec<Stage>,
}

struct Manifest {
    doc: serde_json::Map<String, Value>,
    stages: Vec<&'static str>,
}

impl Manifest {
    fn new(cfg: &ExperimentConfig) -> Manifest {
        let mut doc = serde_json::Map::new();
        doc.insert("config_hash".into(), json!(cfg.hash()));
        doc.insert("seed".into(), json!(cfg.seed));
        doc.insert("methods".into(), json!(cfg.methods));
        Manifest { doc, stages: Vec::new() }
    }

    fn write(&self, dir: &Path, failure: Option<(&str, &Error)>) -> Result<()> {
        let mut doc = self.doc.clone();
        doc.insert("stages_completed".into(), json!(self.stages));
        match failure {
            None => doc.insert("status".into(), json!("ok")),
            Some((stage, e)) => {
                doc.insert("failed_stage".into(), json!(stage));
                doc.insert("error".into(), json!(e.to_string()));
                doc.insert("status".into(), json!("failed"))
            }
        };
        let body = serde_json::to_string_pretty(&Value::Object(doc)).expect("manifest serializes") + "\n";
        write_file(&dir.join("manifest.json"), body)
    }
}

fn report_json(name: &str, state: Option<TemporalState>, r: &TrainReport, empty: bool) -> Value {
    json!({
        "model": name,
        "state": state.map(|s| s.name()),
        "epochs": r.epochs,
        "final_objective": r.final_objective(),
        "rejected_steps": r.rejected_steps,
        "converged": r.converged,
        "empty_matrix": empty,
    })
}

/// Parses the dataset and writes `rejected.tsv`.
fn ingest(cfg: &ExperimentConfig, dir: &Path, manifest: &mut Manifest) -> Result<Vec<CheckIn>> {
    let path = cfg.dataset.path.as_ref().ok_or_else(|| Error::Config("dataset.path: missing".into()))?;
    let report = parse_checkins(path, &cfg.dataset.format()?)?;
    let mut rejected = String::new();
    for r in &report.rejected {
        let _ = writeln!(rejected, "{}\t{}", r.line, r.reason);
    }
    write_file(&dir.join("rejected.tsv"), rejected)?;
    manifest.doc.insert("checkins".into(), json!(report.checkins.len()));
    manifest.doc.insert("rejected_rows".into(), json!(report.rejected.len()));
    Ok(report.checkins)
}

fn export_centers(prep: &Prepared, centers: &CenterSet, path: &Path) -> Result<()> {
    let mut out = String::from("user_id\tstate\tanchor_poi\tlat\tlon\tfreq\tmembers\n");
    for u in 0..prep.n_users() {
        let id = prep.split.users.id(u).unwrap_or_default();
        let rows = centers
            .by_state
            .get(u)
            .into_iter()
            .flat_map(|c| c.working.iter().chain(&c.leisure).map(|a| (a.state.name(), a)))
            .chain(centers.flat.get(u).into_iter().flatten().map(|a| ("all", a)));
        for (state, c) in rows {
            let poi = prep.split.pois.id(c.anchor).unwrap_or_default();
            let _ = writeln!(
                out,
                "{id}\t{state}\t{poi}\t{}\t{}\t{}\t{}",
                c.location.lat,
                c.location.lon,
                c.freq,
                c.member_pois.len()
            );
        }
    }
    write_file(path, out)
}

fn export_recommendations(prep: &Prepared, run: &MethodRun, path: &Path) -> Result<()> {
    let mut out = String::from("user_id\trank\tpoi_id\tscore\n");
    for r in &run.recommendations {
        let id = prep.split.users.id(r.user).unwrap_or_default();
        for (rank, (&l, s)) in r.pois.iter().zip(&r.scores).enumerate() {
            let _ = writeln!(out, "{id}\t{}\t{}\t{s}", rank + 1, prep.split.pois.id(l).unwrap_or_default());
        }
    }
    write_file(path, out)
}

fn fit_and_export(cfg: &ExperimentConfig, prep: &Prepared, dir: &Path, manifest: &mut Manifest) -> Result<(Models, CenterSet)> {
    let models = fit_models(prep, &cfg.methods, &cfg.train_config())?;
    let needs = Needs::of(&cfg.methods);
    let centers = if needs.centers { allocate_all(prep, &cfg.center_config())? } else { CenterSet::default() };
    let model_dir = dir.join("models");
    create_dir(&model_dir)?;
    let mut training = Vec::new();
    if let Some((m, rep)) = &models.static_model {
        checkpoint::save(m, &model_dir.join("static.ckpt"))?;
        training.push(report_json("static", None, rep, prep.train.nnz() == 0));
    }
    if let Some((set, reports)) = &models.temporal {
        for ((state, m), rep) in set.models.iter().zip(reports) {
            checkpoint::save(m, &model_dir.join(format!("{}.ckpt", state.name())))?;
            let empty = prep.state_train.iter().any(|(s, r)| s == state && r.nnz() == 0);
            training.push(report_json("temporal", Some(*state), rep, empty));
        }
    }
    manifest.doc.insert("training".into(), Value::Array(training));
    if let Some(pl) = &models.power_law {
        manifest.doc.insert("power_law".into(), json!({ "a": pl.a, "b": pl.b }));
    }
    if needs.centers {
        export_centers(prep, &centers, &dir.join("centers.tsv"))?;
    }
    Ok((models, centers))
}

fn run_stages(cfg: &ExperimentConfig, until: Stage, dir: &Path, manifest: &mut Manifest, out: &mut RunOutput) -> std::result::Result<(), (Stage, Error)> {
    let at = |stage: Stage| move |e: Error| (stage, e.in_stage(stage.name()));
    out.checkins = ingest(cfg, dir, manifest).map_err(at(Stage::Ingest))?;
    manifest.stages.push(Stage::Ingest.name());
    out.completed.push(Stage::Ingest);
    if until == Stage::Ingest {
        let fmt = cfg.dataset.format().map_err(at(Stage::Ingest))?;
        write_checkins(&dir.join(format!("checkins.{}", fmt.extension())), &out.checkins, &fmt).map_err(at(Stage::Ingest))?;
        return Ok(());
    }

    let split = (|| -> Result<DatasetSplit> {
        let split = chronological_split(&out.checkins, cfg.split_ratios())?;
        let split_dir = dir.join("split");
        create_dir(&split_dir)?;
        write_split(&split_dir, &split, &cfg.dataset.format()?)?;
        Ok(split)
    })()
    .map_err(at(Stage::Split))?;
    manifest.doc.insert("users".into(), json!(split.n_users()));
    manifest.doc.insert("pois".into(), json!(split.n_pois()));
    manifest.doc.insert("flagged_users".into(), json!(split.flagged_users.len()));
    manifest.stages.push(Stage::Split.name());
    out.completed.push(Stage::Split);
    out.split = Some(split.clone());
    if until == Stage::Split {
        return Ok(());
    }

    let policy = cfg.policy.policy().map_err(at(Stage::Train))?;
    let prep = prepare(split, &policy, cfg.train_fraction, cfg.seed).map_err(at(Stage::Train))?;
    let (models, centers) = fit_and_export(cfg, &prep, dir, manifest).map_err(at(Stage::Train))?;
    manifest.stages.push(Stage::Train.name());
    out.completed.push(Stage::Train);
    if until == Stage::Train {
        return Ok(());
    }

    let n = cfg.cutoffs.iter().copied().max().unwrap_or(10);
    let runs = (|| -> Result<Vec<MethodRun>> {
        let rec_dir = dir.join("recommendations");
        create_dir(&rec_dir)?;
        let mut runs = Vec::new();
        for &method in &cfg.methods {
            let run = recommend_all(&prep, &models, &centers, &cfg.context_config(), method, n)?;
            export_recommendations(&prep, &run, &rec_dir.join(format!("{method}.tsv")))?;
            runs.push(run);
        }
        Ok(runs)
    })()
    .map_err(at(Stage::Recommend))?;
    manifest.stages.push(Stage::Recommend.name());
    out.completed.push(Stage::Recommend);
    if until == Stage::Recommend {
        return Ok(());
    }

    let report = (|| -> Result<EvalReport> {
        let report = evaluate(&prep, &runs, &cfg.cutoffs, &cfg.hash(), cfg.seed)?;
        write_report(dir, &report)?;
        Ok(report)
    })()
    .map_err(at(Stage::Evaluate))?;
    manifest.stages.push(Stage::Evaluate.name());
    out.completed.push(Stage::Evaluate);
    out.report = Some(report);
    Ok(())
}

/// Validates `cfg`, then runs every stage up to and including `until`,
/// writing artifacts under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig, until: Stage) -> Result<RunOutput> {
    cfg.validate(true)?;
    let dir = cfg.out.clone();
    create_dir(&dir)?;
    let _ = std::fs::remove_file(dir.join("FAILED"));
    write_file(&dir.join("config.toml"), cfg.to_toml())?;
    let mut manifest = Manifest::new(cfg);
    let mut out = RunOutput::default();
    let result = with_workers(cfg.workers, || run_stages(cfg, until, &dir, &mut manifest, &mut out))?;
    match result {
        Ok(()) => {
            manifest.write(&dir, None)?;
            Ok(out)
        }
        Err((stage, e)) => {
            write_file(&dir.join("FAILED"), format!("stage {}: {e}\n", stage.name()))?;
            manifest.write(&dir, Some((stage.name(), &e)))?;
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    TrainFraction,
    D,
    Alpha,
    Lambda,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TrainFraction => "train-fraction",
            SweepAxis::D => "d",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Lambda => "lambda",
        }
    }

    fn set(self, cfg: &mut ExperimentConfig, v: f64) {
        match self {
            SweepAxis::TrainFraction => cfg.train_fraction = v,
            SweepAxis::D => cfg.centers.d = v,
            SweepAxis::Alpha => cfg.centers.alpha = v,
            SweepAxis::Lambda => cfg.context.lambda = v,
        }
    }
}

/// An axis with its grid, written `axis=v1,v2,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
}

impl FromStr for SweepSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<SweepSpec> {
        let (axis, grid) = s.split_once('=').ok_or_else(|| Error::Config(format!("sweep {s:?}: expected axis=v1,v2,...")))?;
        let axis = match axis.trim() {
            "train-fraction" | "train_fraction" | "fraction" => SweepAxis::TrainFraction,
            "d" => SweepAxis::D,
            "alpha" => SweepAxis::Alpha,
            "lambda" => SweepAxis::Lambda,
            other => return Err(Error::Config(format!("sweep: unknown axis {other:?}"))),
        };
        let grid = grid
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("sweep: bad grid value {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if grid.is_empty() {
            return Err(Error::Config("sweep: empty grid".into()));
        }
        Ok(SweepSpec { axis, grid })
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub report: EvalReport,
}

/// Runs one evaluation per grid point on an already ingested dataset.
///
/// A training-fraction point re-prepares the split and refits every model.
/// Points on the other axes share one set of fitted factor models: those
/// axes do not enter factor training, and training is deterministic under
/// the seed, so a refit would reproduce the same models bit for bit.
pub fn run_sweep(cfg: &ExperimentConfig, sweep: &SweepSpec, checkins: &[CheckIn]) -> Result<Vec<SweepPoint>> {
    cfg.validate(false)?;
    let configs: Vec<ExperimentConfig> = sweep
        .grid
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            sweep.axis.set(&mut c, v);
            c.validate(false).map(|_| c)
        })
        .collect::<Result<_>>()?;
    with_workers(cfg.workers, || {
        let split = chronological_split(checkins, cfg.split_ratios())?;
        let policy = cfg.policy.policy()?;
        let n = cfg.cutoffs.iter().copied().max().unwrap_or(10);
        let needs = Needs::of(&cfg.methods);
        let evaluate_point = |c: &ExperimentConfig, prep: &Prepared, models: &Models| -> Result<EvalReport> {
            let centers = if needs.centers { allocate_all(prep, &c.center_config())? } else { CenterSet::default() };
            let runs = c
                .methods
                .iter()
                .map(|&m| recommend_all(prep, models, &centers, &c.context_config(), m, n))
                .collect::<Result<Vec<_>>>()?;
            evaluate(prep, &runs, &c.cutoffs, &c.hash(), c.seed)
        };
        let mut points = Vec::with_capacity(configs.len());
        if sweep.axis == SweepAxis::TrainFraction {
            for (c, &value) in configs.iter().zip(&sweep.grid) {
                let prep = prepare(split.clone(), &policy, c.train_fraction, c.seed)?;
                let models = fit_models(&prep, &c.methods, &c.train_config())?;
                points.push(SweepPoint { value, report: evaluate_point(c, &prep, &models)? });
            }
        } else {
            let prep = prepare(split, &policy, cfg.train_fraction, cfg.seed)?;
            let models = fit_models(&prep, &cfg.methods, &cfg.train_config())?;
            for (c, &value) in configs.iter().zip(&sweep.grid) {
                points.push(SweepPoint { value, report: evaluate_point(c, &prep, &models)? });
            }
        }
        Ok(points)
    })?
}

/// `axis,value,method,metric,cutoff,mean,users` rows.
pub fn render_sweep_csv(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut out = String::from("axis,value,method,metric,cutoff,mean,users\n");
    for p in points {
        for s in &p.report.series {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                axis.name(),
                p.value,
                s.method,
                s.metric.name(),
                s.cutoff,
                s.mean,
                s.per_user.len()
            );
        }
    }
    out
}

pub fn render_sweep_text(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut out = String::new();
    let Some(first) = points.first() else { return out };
    let _ = write!(out, "{:<16}{:<12}", axis.name(), "method");
    for &n in &first.report.cutoffs {
        for m in Metric::ALL {
            let _ = write!(out, " {:>13}", format!("{}@{n}", m.name()));
        }
    }
    out.push('\n');
    for p in points {
        for &method in &p.report.methods {
            let _ = write!(out, "{:<16}{:<12}", p.value, method.name());
            for &n in &p.report.cutoffs {
                for m in Metric::ALL {
                    let _ = write!(out, " {:>13.6}", p.report.mean(method, m, n).unwrap_or(f64::NAN));
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Ingests the dataset, runs the sweep and writes `sweep.csv` and `sweep.txt`.
pub fn run_sweep_to_disk(cfg: &ExperimentConfig, sweep: &SweepSpec) -> Result<(PathBuf, Vec<SweepPoint>)> {
    cfg.validate(true)?;
    let dir = cfg.out.clone();
    create_dir(&dir)?;
    let path = cfg.dataset.path.as_ref().expect("validated");
    let checkins = parse_checkins(path, &cfg.dataset.format()?).map_err(|e| e.in_stage("ingest"))?;
    let points = run_sweep(cfg, sweep, &checkins.checkins).map_err(|e| e.in_stage("sweep"))?;
    let csv = dir.join("sweep.csv");
    write_file(&csv, render_sweep_csv(sweep.axis, &points))?;
    write_file(&dir.join("sweep.txt"), render_sweep_text(sweep.axis, &points))?;
    Ok((csv, points))
}
