use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use pivot_core::controller::{run_episode, AngleEstimator, ClosedLoopConfig, OracleEstimator};
use pivot_core::dataset::{self, generate_plan, CollectConfig, Dataset, SplitStrategy};
use pivot_core::eval::{
    class_transfer_study, closed_loop_suite, episode_table, evaluate_segments, finetune_experiment,
    sequence_error_table, study_table, unseen_object_study, window_ablation, write_trace_csv, FinetuneConfig,
    MetricsReport, ModelSpec, Segment, SegmentMae, StudyRow, SuiteConfig, Table,
};
use pivot_core::nn::{
    self, load_checkpoint, save_checkpoint, Architecture, ModelParams, OutputMode, StreamingEstimator,
};
use pivot_core::rng;
use pivot_core::sim::{catalog_names, lookup, FrictionVariant, Protocol, Scenario};
use serde::Serialize;

use crate::config::{RunConfig, Scale};
use crate::run::Run;
use crate::Globals;

const MAX_SEED: u64 = i64::MAX as u64;

fn seed_parser() -> impl clap::builder::TypedValueParser<Value = u64> {
    clap::value_parser!(u64).range(..=MAX_SEED)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolChoice {
    RotateToStop,
    AngleGoal,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variants {
    Nominal,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Friction {
    Nominal,
    Taped,
}

impl From<Friction> for FrictionVariant {
    fn from(f: Friction) -> Self {
        match f {
            Friction::Nominal => FrictionVariant::Nominal,
            Friction::Taped => FrictionVariant::Taped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchChoice {
    Lstm,
    Gru,
    Rnn,
    Mlp,
}

impl From<ArchChoice> for Architecture {
    fn from(a: ArchChoice) -> Self {
        match a {
            ArchChoice::Lstm => Architecture::Lstm,
            ArchChoice::Gru => Architecture::Gru,
            ArchChoice::Rnn => Architecture::Rnn,
            ArchChoice::Mlp => Architecture::Mlp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeChoice {
    Both,
    AlphaOnly,
    OmegaOnly,
}

impl From<ModeChoice> for OutputMode {
    fn from(m: ModeChoice) -> Self {
        match m {
            ModeChoice::Both => OutputMode::Both,
            ModeChoice::AlphaOnly => OutputMode::AlphaOnly,
            ModeChoice::OmegaOnly => OutputMode::OmegaOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    Oracle,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    ClosedLoop,
    UnseenObject,
    ClassTransfer,
    WindowAblation,
    Finetune,
}

#[derive(Debug, Args, Serialize)]
pub struct CollectArgs {
    #[arg(long, value_enum, default_value = "both")]
    protocol: ProtocolChoice,
    /// `all` or a comma-separated list of object names.
    #[arg(long, default_value = "all")]
    objects: String,
    /// Friction variants; defaults to the configured plans (both).
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    variants: Option<Variants>,
    #[arg(long, value_parser = seed_parser())]
    seed: u64,
    /// Dataset directory [default: <out-root>/collect-<seed>].
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by `collect`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "lstm")]
    arch: ArchChoice,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeChoice,
    /// Input window in frames (MLP only).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[arg(long, value_enum, default_value = "paper")]
    #[serde(serialize_with = "ser_scale")]
    scale: Scale,
    #[arg(long, value_parser = seed_parser())]
    seed: u64,
    /// Output directory [default: <out-root>/train-<arch>-<seed>].
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    study: Study,
    /// Estimator for closed-loop studies [default: model if --checkpoint is given, else oracle].
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    estimator: Option<EstimatorChoice>,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<PathBuf>,
    /// Dataset directory for the offline studies and fine-tuning replay.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    /// Architecture trained by the offline studies.
    #[arg(long, value_enum, default_value = "lstm")]
    arch: ArchChoice,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeChoice,
    #[arg(long, value_enum, default_value = "paper")]
    #[serde(serialize_with = "ser_scale")]
    scale: Scale,
    #[arg(long, default_value_t = 0, value_parser = seed_parser())]
    seed: u64,
    /// Output directory [default: <out-root>/eval-<study>-<seed>].
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ControlArgs {
    /// Goal angle in degrees, (0, 180].
    #[arg(long, allow_negative_numbers = true)]
    goal: f64,
    #[arg(long, default_value = "Toothpaste")]
    object: String,
    /// Gripper yaw at grasp, degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    approach: f64,
    #[arg(long, value_enum, default_value = "nominal")]
    friction: Friction,
    /// [default: model if --checkpoint is given, else oracle]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    estimator: Option<EstimatorChoice>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0, value_parser = seed_parser())]
    seed: u64,
    /// Output directory [default: <out-root>/control-<seed>].
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, value_enum, default_value = "lstm")]
    arch: ArchChoice,
    #[arg(long, value_enum, default_value = "paper")]
    scale: Scale,
}

fn ser_scale<S: serde::Serializer>(s: &Scale, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.serialize_str(match s {
        Scale::Paper => "paper",
        Scale::Toy => "toy",
    })
}

fn resolve(g: &Globals, arch: Architecture, scale: Scale) -> Result<RunConfig> {
    RunConfig::defaults(arch, scale).resolve(g.config.as_deref(), &g.overrides)
}

fn out_dir(g: &Globals, explicit: Option<PathBuf>, default: String) -> PathBuf {
    explicit.unwrap_or_else(|| g.out_root.join(default))
}

fn parse_objects(spec: &str) -> Result<Vec<String>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(catalog_names().iter().map(|s| s.to_string()).collect());
    }
    let mut out = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let canonical = lookup(name)?.name;
        if !out.contains(&canonical) {
            out.push(canonical);
        }
    }
    if out.is_empty() {
        bail!(
            "--objects names no objects; valid names: {}",
            catalog_names().join(", ")
        );
    }
    Ok(out)
}

fn collect_config(cfg: &RunConfig) -> CollectConfig {
    CollectConfig {
        sim: cfg.sim.clone(),
        closed_loop: cfg.closed_loop.clone(),
        kalman: cfg.kalman.clone(),
        goal_tolerance: cfg.collect.goal_tolerance,
        keep_stuck: false,
    }
}

fn suite_config(cfg: &RunConfig) -> SuiteConfig {
    SuiteConfig {
        sim: cfg.sim.clone(),
        closed_loop: cfg.closed_loop.clone(),
    }
}

pub fn collect(g: &Globals, a: CollectArgs) -> Result<()> {
    let cfg = resolve(g, Architecture::Lstm, Scale::Paper)?;
    let objects = parse_objects(&a.objects)?;
    let mut plans = Vec::new();
    if a.protocol != ProtocolChoice::AngleGoal {
        plans.push(cfg.collect.rotate_to_stop.clone());
    }
    if a.protocol != ProtocolChoice::RotateToStop {
        plans.push(cfg.collect.angle_goal.clone());
    }
    if let Some(v) = a.variants {
        for p in &mut plans {
            p.friction_variants = match v {
                Variants::Nominal => vec![FrictionVariant::Nominal],
                Variants::Both => vec![FrictionVariant::Nominal, FrictionVariant::Taped],
            };
        }
    }
    let mut scenarios = Vec::new();
    for p in &plans {
        scenarios.extend(generate_plan(p, &objects, a.seed).with_context(|| format!("{} plan", p.protocol.as_str()))?);
    }
    let out = out_dir(g, a.out.clone(), format!("collect-{}", a.seed));
    let mut run = Run::start(&out, "collect", &a)?.with_config(&cfg);
    run.say(format!(
        "collecting {} scenarios over {} objects",
        scenarios.len(),
        objects.len()
    ));

    let mut ds = dataset::collect(&scenarios, &collect_config(&cfg));
    ds.plans = plans;
    dataset::save(&ds, &out).context("writing dataset")?;

    for (protocol, object, n) in ds.summary() {
        run.say(format!("{protocol:>15} {object:<12} {n:>5}"));
    }
    run.say(format!("kept {} sequences, filtered {}", ds.len(), ds.filtered.len()));
    run.say(format!("dataset written to {}", out.display()));
    run.finish(g.jobs)
}

fn segment_rows(t: &mut Table, split: &str, n: usize, m: &SegmentMae) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for s in Segment::ALL {
        t.push(vec![
            split.to_string(),
            n.to_string(),
            s.as_str().to_string(),
            opt(m.angle(s)),
            opt(m.velocity(s)),
        ])?;
    }
    Ok(())
}

pub fn train(g: &Globals, a: TrainArgs) -> Result<()> {
    let arch: Architecture = a.arch.into();
    let mut cfg = resolve(g, arch, a.scale)?;
    cfg.model.hyper.mode = a.mode.into();
    if let Some(w) = a.window {
        cfg.model.hyper.window_size = w;
    }
    cfg.model.train.seed = a.seed;
    cfg.model.hyper.validate(arch)?;

    let ds = dataset::load(&a.data).with_context(|| format!("loading dataset {}", a.data.display()))?;
    let out = out_dir(g, a.out.clone(), format!("train-{}-{}", arch.as_str(), a.seed));
    let mut run = Run::start(&out, "train", &a)?.with_config(&cfg);

    let split = dataset::split(
        &ds,
        &SplitStrategy::Random80_20 {
            seed: rng::derive(a.seed, "split", 0),
        },
    )?;
    run.say(format!(
        "training {} on {} sequences, {} held out for validation",
        arch.as_str(),
        split.train.len(),
        split.test.len()
    ));
    let train_set = ds.samples(&split.train);
    let val_set = ds.samples(&split.test);
    let (params, history) = nn::train(arch, cfg.model.hyper.clone(), &train_set, &val_set, &cfg.model.train)?;

    save_checkpoint(&params, &run.path("checkpoint"))?;
    std::fs::write(run.path("history.csv"), history.to_csv()).context("writing history")?;

    let header = ["split", "sequences", "segment", "angle_mae", "velocity_mae"];
    let mut t = Table::new(header.iter().map(|s| s.to_string()).collect());
    for (name, idx) in [("train", &split.train), ("validation", &split.test)] {
        if idx.is_empty() {
            continue;
        }
        let seqs: Vec<_> = idx.iter().map(|&i| &ds.sequences[i]).collect();
        let (pooled, _) = evaluate_segments(&params, &seqs)?;
        segment_rows(&mut t, name, seqs.len(), &pooled)?;
        if let Some(dr) = pooled.angle(Segment::Dr) {
            run.say(format!("{name} DR angle MAE {dr:.3} deg"));
        }
    }
    t.write(&run.path("metrics.csv"))?;
    if let Some(last) = history.epochs.last() {
        run.say(format!("final train loss {:.6}", last.train_loss));
    }
    run.say(format!("checkpoint written to {}", run.path("checkpoint").display()));
    run.finish(g.jobs)
}

type Factory = Box<dyn Fn() -> Box<dyn AngleEstimator> + Sync>;

fn estimator_factory(choice: Option<EstimatorChoice>, checkpoint: Option<&Path>) -> Result<(Factory, String)> {
    let choice = choice.unwrap_or(if checkpoint.is_some() {
        EstimatorChoice::Model
    } else {
        EstimatorChoice::Oracle
    });
    match (choice, checkpoint) {
        (EstimatorChoice::Oracle, _) => Ok((Box::new(|| Box::new(OracleEstimator)), "oracle".into())),
        (EstimatorChoice::Model, None) => bail!("--estimator model needs --checkpoint"),
        (EstimatorChoice::Model, Some(dir)) => {
            let params = load_checkpoint(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
            let label = format!("{} {}", params.arch.as_str(), params.hyper.mode.as_str());
            Ok((
                Box::new(move || Box::new(StreamingEstimator::new(params.clone()))),
                label,
            ))
        }
    }
}

fn study_spec(cfg: &RunConfig, arch: Architecture, seed: u64) -> ModelSpec {
    let mut train = cfg.model.train.clone();
    train.seed = seed;
    ModelSpec {
        arch,
        hyper: cfg.model.hyper.clone(),
        train,
        repeats: cfg.eval.repeats,
    }
}

fn load_data(path: Option<&Path>, what: &str) -> Result<Dataset> {
    let Some(p) = path else {
        bail!("{what} needs --data");
    };
    dataset::load(p).with_context(|| format!("loading dataset {}", p.display()))
}

fn report_line(label: &str, r: &MetricsReport) -> String {
    let te = r.target_error.map_or("n/a".to_string(), |m| format!("{m} deg"));
    format!(
        "{label}: TE {te}, FR {:.1}% over {} episodes",
        r.failure_rate, r.episodes
    )
}

fn write_study(run: &mut Run, rows: &[StudyRow]) -> Result<()> {
    study_table(rows)?.write(&run.path("results.csv"))?;
    sequence_error_table(rows)?.write(&run.path("sequences.csv"))?;
    for r in rows {
        let dr = r.report.angle(Segment::Dr).map_or("n/a".to_string(), |m| m.to_string());
        run.say(format!(
            "{:<20} train {:>4} test {:>4}  DR angle MAE {dr}",
            r.label, r.n_train, r.n_test
        ));
    }
    Ok(())
}

pub fn eval(g: &Globals, a: EvalArgs) -> Result<()> {
    let arch: Architecture = match a.study {
        Study::WindowAblation => Architecture::Mlp,
        _ => a.arch.into(),
    };
    let mut cfg = resolve(g, arch, a.scale)?;
    cfg.model.hyper.mode = a.mode.into();
    cfg.model.train.seed = a.seed;
    let name = a
        .study
        .to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string();
    let out = out_dir(g, a.out.clone(), format!("eval-{name}-{}", a.seed));

    match a.study {
        Study::ClosedLoop => {
            let (factory, label) = estimator_factory(a.estimator, a.checkpoint.as_deref())?;
            let scenarios = cfg.eval.grid.scenarios(a.seed)?;
            let mut run = Run::start(&out, "eval", &a)?.with_config(&cfg);
            let result = closed_loop_suite(&scenarios, factory.as_ref(), &suite_config(&cfg))?;
            result.report.table(&label)?.write(&run.path("summary.csv"))?;
            episode_table(&result.episodes)?.write(&run.path("episodes.csv"))?;
            let traces = run.path("traces");
            std::fs::create_dir_all(&traces).context("creating traces directory")?;
            for (i, e) in result.episodes.iter().enumerate() {
                let s = &e.scenario;
                let file = format!(
                    "{i:03}-{}-a{}-g{}.csv",
                    s.object.to_ascii_lowercase(),
                    s.approach_deg,
                    s.stop_deg.unwrap_or_default()
                );
                write_trace_csv(&traces.join(file), &e.trace, &e.bounds)?;
            }
            run.say(report_line(&label, &result.report));
            run.finish(g.jobs)
        }
        Study::UnseenObject | Study::ClassTransfer => {
            let ds = load_data(a.data.as_deref(), &name)?;
            let spec = study_spec(&cfg, arch, a.seed);
            let mut run = Run::start(&out, "eval", &a)?.with_config(&cfg);
            let rows = if a.study == Study::UnseenObject {
                unseen_object_study(&ds, &spec)?
            } else {
                class_transfer_study(&ds, &spec, a.seed)?
            };
            write_study(&mut run, &rows)?;
            run.finish(g.jobs)
        }
        Study::WindowAblation => {
            let ds = load_data(a.data.as_deref(), &name)?;
            let spec = study_spec(&cfg, arch, a.seed);
            let mut run = Run::start(&out, "eval", &a)?.with_config(&cfg);
            let ablation = window_ablation(&ds, &cfg.eval.windows, &spec, a.seed)?;
            for w in &ablation.warnings {
                run.warn(w.clone());
            }
            write_study(&mut run, &ablation.rows)?;
            run.finish(g.jobs)
        }
        Study::Finetune => finetune(g, a, cfg, out),
    }
}

fn finetune(g: &Globals, a: EvalArgs, cfg: RunConfig, out: PathBuf) -> Result<()> {
    let Some(ckpt) = a.checkpoint.as_deref() else {
        bail!("finetune needs --checkpoint");
    };
    if a.estimator == Some(EstimatorChoice::Oracle) {
        bail!("finetune tunes a learned model; --estimator oracle does not apply");
    }
    let base: ModelParams = load_checkpoint(ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let replay_data = if cfg.eval.finetune.replay {
        Some(load_data(a.data.as_deref(), "finetune with replay")?)
    } else {
        None
    };
    let replay = match &replay_data {
        Some(ds) => ds.samples(&(0..ds.len()).collect::<Vec<_>>()),
        None => Vec::new(),
    };
    let collection = cfg
        .eval
        .finetune
        .collection
        .scenarios(rng::derive(a.seed, "collection", 0))?;
    let evaluation = cfg.eval.grid.scenarios(a.seed)?;
    let mut train = cfg.model.train.clone();
    train.seed = a.seed;
    let ft = FinetuneConfig {
        epochs: cfg.eval.finetune.epochs,
        train,
        collect: CollectConfig {
            keep_stuck: true,
            goal_tolerance: f64::INFINITY,
            ..collect_config(&cfg)
        },
        suite: suite_config(&cfg),
    };
    let mut run = Run::start(&out, "eval", &a)?.with_config(&cfg);
    let r = finetune_experiment(&base, &replay, &collection, &evaluation, &ft)?;

    let mut table = r.before.table("before")?;
    table.rows.extend(r.after.table("after")?.rows);
    table.write(&run.path("summary.csv"))?;
    std::fs::write(run.path("history.csv"), r.history.to_csv()).context("writing history")?;
    save_checkpoint(&r.tuned, &run.path("checkpoint"))?;
    dataset::save(&r.in_loop, &run.path("in-loop")).context("writing in-loop dataset")?;
    run.say(format!(
        "in-loop sequences: {} (filtered {})",
        r.in_loop.len(),
        r.in_loop.filtered.len()
    ));
    run.say(report_line("before", &r.before));
    run.say(report_line("after", &r.after));
    run.finish(g.jobs)
}

pub fn control(g: &Globals, a: ControlArgs) -> Result<()> {
    let cfg = resolve(g, Architecture::Lstm, Scale::Paper)?;
    let object = lookup(&a.object)?.name;
    let scenario = Scenario {
        object,
        protocol: Protocol::AngleGoal,
        approach_deg: a.approach,
        perturb_deg: 0.0,
        stop_deg: Some(a.goal),
        friction: a.friction.into(),
        seed: rng::derive(a.seed, "control", 0) >> 1,
        repeat: 0,
    };
    scenario.validate()?;
    let (factory, label) = estimator_factory(a.estimator, a.checkpoint.as_deref())?;
    let out = out_dir(g, a.out.clone(), format!("control-{}", a.seed));
    let mut run = Run::start(&out, "control", &a)?.with_config(&cfg);

    let plant = scenario.plant(&cfg.sim)?;
    let initial = scenario.initial_state(&plant, &cfg.sim)?;
    let mut loop_cfg = ClosedLoopConfig {
        timing: cfg.sim.timing.clone(),
        ..cfg.closed_loop.clone()
    };
    loop_cfg.sensor.seed = rng::derive(scenario.seed, "sensor", 0);
    let mut est = factory();
    let r = run_episode(&plant, initial, est.as_mut(), a.goal, &loop_cfg)?;
    dataset::write_episode_trace(&run.path("trace.csv"), &r)?;
    std::fs::write(run.path("scenario.toml"), scenario.to_toml()).context("writing scenario")?;

    run.say(format!(
        "{} with {label}: goal {} deg, final {:.2} deg, TE {:.2} deg, outcome {}",
        scenario.object,
        a.goal,
        r.final_alpha_gt,
        r.target_error,
        r.failure.as_str()
    ));
    run.finish(g.jobs)
}

pub fn show_config(g: &Globals, a: ConfigArgs) -> Result<()> {
    let cfg = resolve(g, a.arch.into(), a.scale)?;
    print!("{}", cfg.to_toml()?);
    Ok(())
}
