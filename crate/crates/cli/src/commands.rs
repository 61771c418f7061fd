use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use pyroflux_core::coupling::{
    compare_providers, write_snapshots, KineticsMode, KineticsProvider, RunReport, RunStatus, ScenarioConfig,
    Simulation, AUDIT_ENTHALPY_TOL, AUDIT_MASS_TOL,
};
use pyroflux_core::kinetics::ReactionMechanism;
use pyroflux_core::metrics::{r_squared, PairedSeries, Score};
use pyroflux_core::surrogate::{
    load_model, train_mlp, train_rf, write_model, SurrogateError, SurrogateModel, TrainReport,
};
use pyroflux_core::tga::{
    build_dataset, ingest_csv, read_dataset, split, write_csv_to, Provenance, Sample, N_TARGETS, TARGET_NAMES,
};
use serde::Serialize;

use crate::config::{self, *};
use crate::output::{file_sha256, sha256_hex, Check, InputFile, RunDir};
use crate::UsageError;

/// Options shared by every command.
pub struct Globals {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// What a command reports back to `main`.
pub struct Done {
    pub pass: bool,
    pub run_dir: PathBuf,
    pub summary: String,
}

/// Collects everything a run writes and finalizes its manifest.
struct Run {
    dir: RunDir,
    command: &'static str,
    seed: Option<u64>,
    config_digest: String,
    started: chrono::DateTime<chrono::Utc>,
    inputs: Vec<InputFile>,
}

impl Run {
    fn start<T: Serialize>(
        g: &Globals,
        command: &'static str,
        doc: &T,
        seed: Option<u64>,
        inputs: &[&Path],
    ) -> anyhow::Result<Self> {
        let started = chrono::Utc::now();
        let mut config_bytes = serde_json::to_vec_pretty(doc)?;
        config_bytes.push(b'\n');
        let config_digest = sha256_hex(&config_bytes);
        let mut all = vec![g.config.as_path()];
        all.extend_from_slice(inputs);
        let inputs = all
            .iter()
            .map(|p| Ok(InputFile { path: p.display().to_string(), sha256: file_sha256(p)? }))
            .collect::<anyhow::Result<_>>()?;
        let mut dir = RunDir::create(&g.out, &started, &config_digest)?;
        dir.write("config.json", &config_bytes, true)?;
        Ok(Self { dir, command, seed, config_digest, started, inputs })
    }

    fn finish(self, pass: bool, checks: Vec<Check>, summary: String) -> anyhow::Result<Done> {
        let run_dir = self.dir.path.clone();
        let status = if pass { "PASS" } else { "FAILED" };
        self.dir.finish(self.command, self.seed, self.config_digest, self.started, self.inputs, status, checks)?;
        Ok(Done { pass, run_dir, summary })
    }
}

fn mechanism_inputs(source: &str) -> Vec<PathBuf> {
    if source.starts_with("builtin:") {
        Vec::new()
    } else {
        vec![PathBuf::from(source)]
    }
}

fn load_mechanism(source: &str) -> Result<ReactionMechanism, UsageError> {
    ReactionMechanism::load(source).map_err(|e| UsageError(format!("mechanism `{source}`: {e}")))
}

fn dataset_csv(samples: &[Sample]) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv_to(&mut buf, samples)?;
    Ok(buf)
}

pub fn dataset_build(g: &Globals) -> anyhow::Result<Done> {
    let mut doc: DatasetBuildDoc = config::load(&g.config, SCHEMA_DATASET_BUILD)?;
    if let Some(s) = g.seed {
        doc.seed = s;
    }
    doc.mechanism = resolve_mechanism(&g.config, &doc.mechanism);
    let mech = load_mechanism(&doc.mechanism)?;
    let grid = doc.grid.resolve()?;
    if grid.is_empty() {
        return Err(UsageError("dataset grid is empty".into()).into());
    }
    let mech_files = mechanism_inputs(&doc.mechanism);
    let inputs: Vec<&Path> = mech_files.iter().map(|p| p.as_path()).collect();
    let mut run = Run::start(g, "dataset build", &doc, Some(doc.seed), &inputs)?;
    let (samples, report) = build_dataset(&mech, &grid, doc.seed)?;
    for f in &report.failures {
        eprintln!("grid point {} failed: {}", f.index, f.message);
    }
    run.dir.write("dataset.csv", &dataset_csv(&samples)?, true)?;
    run.dir.write_json("build_report.json", &report, true)?;
    let summary =
        format!("{} samples from {} grid points, {} failed", samples.len(), report.points, report.failures.len());
    run.finish(true, Vec::new(), summary)
}

pub fn dataset_ingest(g: &Globals) -> anyhow::Result<Done> {
    let mut doc: DatasetIngestDoc = config::load(&g.config, SCHEMA_DATASET_INGEST)?;
    doc.input = relative_to(&g.config, &doc.input);
    require_file(&doc.input, "input file")?;
    let (samples, report) = ingest_csv(&doc.input).map_err(|e| UsageError(format!("{}: {e}", doc.input.display())))?;
    for issue in &report.issues {
        eprintln!("line {}: {}", issue.line, issue.message);
    }
    let mut run = Run::start(g, "dataset ingest", &doc, None, &[doc.input.as_path()])?;
    run.dir.write("dataset.csv", &dataset_csv(&samples)?, true)?;
    run.dir.write_json("ingest_report.json", &report, true)?;
    run.finish(report.accepted > 0, Vec::new(), report.to_string())
}

fn read_samples(p: &Path) -> Result<Vec<Sample>, UsageError> {
    require_file(p, "dataset")?;
    let (samples, report) = read_dataset(p).map_err(|e| UsageError(format!("dataset {}: {e}", p.display())))?;
    for issue in &report.issues {
        eprintln!("{}: line {}: {}", p.display(), issue.line, issue.message);
    }
    Ok(samples)
}

fn base_name(target: &str) -> &str {
    target.split('[').next().unwrap_or(target)
}

/// Data and hyperparameter problems are the caller's to fix; divergence is not.
fn training_error(e: SurrogateError) -> anyhow::Error {
    match e {
        SurrogateError::EmptyTrainingSet
        | SurrogateError::TooFewSamples { .. }
        | SurrogateError::InvalidHyperparameter(_)
        | SurrogateError::InvalidSample { .. } => UsageError(format!("training: {e}")).into(),
        e => anyhow::Error::new(e).context("training"),
    }
}

/// Scores without stored predictions, for the deterministic output.
#[derive(Serialize)]
struct TrainScores<'a> {
    model_kind: &'a str,
    n_train: usize,
    n_validation: usize,
    components: &'a [pyroflux_core::surrogate::ComponentScore],
    flags: &'a [String],
}

pub fn train(g: &Globals) -> anyhow::Result<Done> {
    let mut doc: TrainDoc = config::load(&g.config, SCHEMA_TRAIN)?;
    if let Some(s) = g.seed {
        doc.seed = s;
    }
    doc.dataset = relative_to(&g.config, &doc.dataset);
    for key in doc.gates.keys() {
        if !TARGET_NAMES.iter().any(|t| t == key || base_name(t) == key) {
            return Err(UsageError(format!("gate `{key}` names no target (known: {})", TARGET_NAMES.join(", "))).into());
        }
    }
    let samples = read_samples(&doc.dataset)?;
    let has_experiments = samples.iter().any(|s| s.provenance == Provenance::Experiment);
    let val_fraction = doc.val_fraction.unwrap_or(if has_experiments { 0.2 } else { 0.0 });
    let (train_set, val_set) = split(&samples, val_fraction, doc.seed)
        .map_err(|e| UsageError(format!("splitting {}: {e}", doc.dataset.display())))?;
    let mut run = Run::start(g, "train", &doc, Some(doc.seed), &[doc.dataset.as_path()])?;
    let (model, report): (SurrogateModel, TrainReport) = match doc.model {
        ModelKind::Rf => {
            let (m, r) = train_rf(&train_set, &val_set, &doc.rf, doc.seed).map_err(training_error)?;
            (SurrogateModel::RandomForest(m), r)
        }
        ModelKind::Mlp => {
            let (m, r) = train_mlp(&train_set, &val_set, &doc.mlp, doc.seed).map_err(training_error)?;
            (SurrogateModel::Mlp(m), r)
        }
    };
    run.dir.write("model.pfx", &write_model(&model), true)?;
    run.dir.write_json("train_report.json", &report, false)?;
    let scores = TrainScores {
        model_kind: &report.model_kind,
        n_train: report.n_train,
        n_validation: report.n_validation,
        components: &report.components,
        flags: &report.flags,
    };
    run.dir.write_json("scores.json", &scores, true)?;

    let mut checks = Vec::new();
    for (key, &limit) in &doc.gates {
        let c = report.components.iter().find(|c| c.target == *key || base_name(&c.target) == key);
        let value = c.and_then(|c| c.validation.as_ref()).and_then(|s| s.r2);
        checks.push(Check {
            name: format!("validation R^2 {key}"),
            value,
            limit,
            pass: value.is_some_and(|v| v >= limit),
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    let summary = report
        .components
        .iter()
        .map(|c| {
            let r2 = |s: Option<f64>| s.map_or("undefined".to_string(), |v| format!("{v:.4}"));
            let val = c.validation.as_ref().map_or("-".to_string(), |s| r2(s.r2));
            format!("{}: train R^2 {} RMSE {:.4e}, validation R^2 {}", c.target, r2(c.train.r2), c.train.rmse, val)
        })
        .collect::<Vec<_>>()
        .join("\n");
    run.finish(pass, checks, summary)
}

#[derive(Serialize)]
struct TargetMetrics {
    target: String,
    r2: Option<f64>,
    /// Why R^2 is missing, e.g. a zero-variance reference.
    r2_error: Option<String>,
    rmse: f64,
    n: usize,
}

pub fn evaluate(g: &Globals) -> anyhow::Result<Done> {
    let mut doc: EvaluateDoc = config::load(&g.config, SCHEMA_EVALUATE)?;
    doc.model = relative_to(&g.config, &doc.model);
    doc.dataset = relative_to(&g.config, &doc.dataset);
    require_file(&doc.model, "model file")?;
    let model = load_model(&doc.model).map_err(|e| UsageError(format!("model {}: {e}", doc.model.display())))?;
    let samples = read_samples(&doc.dataset)?;
    if samples.is_empty() {
        return Err(UsageError(format!("dataset {} has no samples", doc.dataset.display())).into());
    }
    let mut run = Run::start(g, "evaluate", &doc, None, &[doc.model.as_path(), doc.dataset.as_path()])?;
    let mut predicted = vec![Vec::with_capacity(samples.len()); N_TARGETS];
    let mut reference = vec![Vec::with_capacity(samples.len()); N_TARGETS];
    for s in &samples {
        let p = model.predict(&s.features)?.targets.to_array();
        let t = s.targets.to_array();
        for k in 0..N_TARGETS {
            predicted[k].push(p[k]);
            reference[k].push(t[k]);
        }
    }
    let metrics: Vec<TargetMetrics> = (0..N_TARGETS)
        .map(|k| {
            let pair = PairedSeries::new(predicted[k].clone(), reference[k].clone()).expect("equal non-empty series");
            let score = Score::of(&pair);
            TargetMetrics {
                target: TARGET_NAMES[k].into(),
                r2: score.r2,
                r2_error: r_squared(&pair).err().map(|e| e.to_string()),
                rmse: score.rmse,
                n: score.n,
            }
        })
        .collect();
    run.dir.write_json("metrics.json", &metrics, true)?;
    let summary = metrics
        .iter()
        .map(|m| match (&m.r2, &m.r2_error) {
            (Some(r2), _) => format!("{}: R^2 {r2:.6} RMSE {:.6e}", m.target, m.rmse),
            (None, Some(e)) => format!("{}: R^2 error ({e}) RMSE {:.6e}", m.target, m.rmse),
            (None, None) => format!("{}: RMSE {:.6e}", m.target, m.rmse),
        })
        .collect::<Vec<_>>()
        .join("\n");
    run.finish(true, Vec::new(), summary)
}

/// Resolves the scenario's paths and seed and builds its simulation.
fn prepare_scenario(g: &Globals, scenario: &mut ScenarioConfig) -> Result<Simulation, UsageError> {
    if let Some(s) = g.seed {
        scenario.seed = s;
    }
    scenario.mechanism = resolve_mechanism(&g.config, &scenario.mechanism);
    Simulation::new(scenario.clone()).map_err(|e| UsageError(format!("scenario: {e}")))
}

fn load_surrogate(path: &Path) -> Result<Arc<SurrogateModel>, UsageError> {
    require_file(path, "model file")?;
    load_model(path).map(Arc::new).map_err(|e| UsageError(format!("model {}: {e}", path.display())))
}

/// The timing-free part of a run report.
#[derive(Serialize)]
struct RunAudit<'a> {
    mode: KineticsMode,
    status: RunStatus,
    failure: &'a Option<String>,
    steps: u64,
    time: f64,
    ledger: &'a pyroflux_core::coupling::Ledger,
    audits: &'a pyroflux_core::coupling::AuditSummary,
    queries: u64,
    evaluations: u64,
    cache_hits: u64,
    clamps: u64,
    biot: f64,
}

impl<'a> RunAudit<'a> {
    fn of(r: &'a RunReport) -> Self {
        Self {
            mode: r.mode,
            status: r.status,
            failure: &r.failure,
            steps: r.steps,
            time: r.time,
            ledger: &r.ledger,
            audits: &r.audits,
            queries: r.queries.queries,
            evaluations: r.queries.evaluations,
            cache_hits: r.queries.cache_hits,
            clamps: r.queries.clamps,
            biot: r.biot,
        }
    }
}

pub fn simulate(g: &Globals) -> anyhow::Result<Done> {
    let mut doc: SimulateDoc = config::load(&g.config, SCHEMA_SIMULATE)?;
    let sim = prepare_scenario(g, &mut doc.scenario)?;
    doc.model = doc.model.map(|m| relative_to(&g.config, &m));
    let surrogate = match (&doc.model, doc.scenario.kinetics.mode) {
        (Some(p), KineticsMode::Surrogate) => Some(load_surrogate(p)?),
        (None, KineticsMode::Surrogate) => {
            return Err(UsageError("SURROGATE mode needs a `model` file".into()).into());
        }
        (Some(_), KineticsMode::Oracle) => {
            log::warn!("ignoring `model`: the scenario runs in ORACLE mode");
            None
        }
        (None, KineticsMode::Oracle) => None,
    };
    let mut provider = KineticsProvider::new(doc.scenario.kinetics.clone(), sim.mech.clone(), surrogate)
        .map_err(|e| UsageError(e.to_string()))?;
    let mut inputs = mechanism_inputs(&doc.scenario.mechanism);
    inputs.extend(doc.model.iter().cloned());
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let mut run = Run::start(g, "simulate", &doc, Some(doc.scenario.seed), &input_refs)?;
    let mut csv = Vec::new();
    let (report, _) = sim.run(&mut provider, Some(&mut csv)).context("simulation")?;
    run.dir.write("snapshots.csv", &csv, true)?;
    run.dir.write_json("audit.json", &RunAudit::of(&report), true)?;
    run.dir.write_json("run_report.json", &report, false)?;
    let pass = report.status == RunStatus::Pass;
    let a = &report.audits;
    let residual = |name: &str, value: f64, limit: f64| Check {
        name: name.into(),
        value: Some(value),
        limit,
        pass: value <= limit,
    };
    let checks = vec![
        Check {
            name: "every step passed its audits".into(),
            value: Some(report.steps as f64),
            limit: doc.scenario.n_steps() as f64,
            pass,
        },
        residual("gas mass per step", a.max_gas_mass, AUDIT_MASS_TOL),
        residual("gas enthalpy per step", a.max_gas_enthalpy, AUDIT_ENTHALPY_TOL),
        residual("two-phase mass ledger", a.max_two_phase, AUDIT_MASS_TOL),
        residual("volatile ledger", a.max_volatile, AUDIT_MASS_TOL),
    ];
    let summary = match &report.failure {
        None => format!(
            "{} steps, {} mode, volatile released {:.6e} kg, max two-phase residual {:.3e}",
            report.steps,
            report.mode.as_str(),
            report.ledger.volatile_converted,
            report.audits.max_two_phase
        ),
        Some(f) => format!("FAILED after {} steps: {f}", report.steps),
    };
    run.finish(pass, checks, summary)
}

#[derive(Serialize)]
struct Agreement<'a> {
    status: RunStatus,
    outlet: &'a [pyroflux_core::coupling::SpeciesAgreement],
    min_outlet_r2: Option<f64>,
    volatile_rel_l2: f64,
    reference: RunAudit<'a>,
    candidate: RunAudit<'a>,
}

pub fn compare(g: &Globals) -> anyhow::Result<Done> {
    let mut doc: CompareDoc = config::load(&g.config, SCHEMA_COMPARE)?;
    let sim = prepare_scenario(g, &mut doc.scenario)?;
    doc.model = relative_to(&g.config, &doc.model);
    let model = load_surrogate(&doc.model)?;
    let provider = |mode: KineticsMode, m: Option<Arc<SurrogateModel>>| {
        let cfg = pyroflux_core::coupling::ProviderConfig { mode, ..doc.scenario.kinetics.clone() };
        KineticsProvider::new(cfg, sim.mech.clone(), m).map_err(|e| UsageError(e.to_string()))
    };
    let mut oracle = provider(KineticsMode::Oracle, None)?;
    let mut surrogate = provider(KineticsMode::Surrogate, Some(model))?;
    let mut inputs = mechanism_inputs(&doc.scenario.mechanism);
    inputs.push(doc.model.clone());
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let mut run = Run::start(g, "compare", &doc, Some(doc.scenario.seed), &input_refs)?;
    let c = compare_providers(&doc.scenario, &mut oracle, &mut surrogate).context("comparison")?;

    let n_cells = doc.scenario.grid.n_cells;
    for (name, r) in [("oracle_snapshots.csv", &c.reference), ("surrogate_snapshots.csv", &c.candidate)] {
        let mut buf = Vec::new();
        write_snapshots(r, n_cells, &mut buf)?;
        run.dir.write(name, &buf, true)?;
    }
    let agreement = Agreement {
        status: c.status,
        outlet: &c.outlet,
        min_outlet_r2: c.min_outlet_r2,
        volatile_rel_l2: c.volatile_rel_l2,
        reference: RunAudit::of(&c.reference),
        candidate: RunAudit::of(&c.candidate),
    };
    run.dir.write_json("agreement.json", &agreement, true)?;
    run.dir.write_json("comparison.json", &c, false)?;

    let gates = &doc.gates;
    let checks = vec![
        Check { name: "runs pass their audits".into(), value: None, limit: 0.0, pass: c.status == RunStatus::Pass },
        Check {
            name: "outlet history R^2 (min over species)".into(),
            value: c.min_outlet_r2,
            limit: gates.min_outlet_r2,
            pass: c.min_outlet_r2.is_some_and(|v| v >= gates.min_outlet_r2),
        },
        Check {
            name: "cumulative volatile relative L2".into(),
            value: Some(c.volatile_rel_l2),
            limit: gates.max_volatile_rel_l2,
            pass: c.volatile_rel_l2 <= gates.max_volatile_rel_l2,
        },
        Check {
            name: "per-query kinetics cost ratio".into(),
            value: c.cost_ratio,
            limit: gates.min_cost_ratio,
            pass: c.cost_ratio.is_some_and(|v| v >= gates.min_cost_ratio),
        },
        Check {
            name: "end-to-end speedup".into(),
            value: Some(c.speedup),
            limit: 1.0,
            pass: !gates.require_speedup || c.candidate.timings.total < c.reference.timings.total,
        },
    ];
    let pass = checks.iter().all(|k| k.pass);
    let summary = checks
        .iter()
        .map(|k| {
            let v = k.value.map_or("n/a".to_string(), |v| format!("{v:.6}"));
            format!("{} {}: {v} (limit {})", if k.pass { "PASS" } else { "FAIL" }, k.name, k.limit)
        })
        .collect::<Vec<_>>()
        .join("\n");
    run.finish(pass, checks, summary)
}
