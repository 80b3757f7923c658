//! Subcommand implementations.
//!
//! Every command takes a resolved [`RunConfig`] and an existing output
//! directory and writes its artifacts there. Artifact bytes depend only on
//! the config and seed, except for the wall-clock timing values inside the
//! bench outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use tcfg_core::analysis::{
    alignment_profile, anchored_score_matrices, spread_score_matrices, trajectory_ratio_curve,
    AlignmentStrategy, ScoreChannel, SpectrumReport,
};
use tcfg_core::dataset::{
    embed_isometric, two_moons, LabeledPoint, MoonArc, PlaneEmbedding, TwoMoonsSpec,
};
use tcfg_core::eval::{bench_overhead, frechet_gaussian_2d, mean_manifold_distance};
use tcfg_core::linalg::svd_thin;
use tcfg_core::model::{
    load_checkpoint, save_checkpoint, train, Activation, ModelConfig, ScoreModel, TrainConfig,
};
use tcfg_core::sampler::{
    sample, write_samples_csv, GuidanceConfig, GuidanceMode, ScoreSource, Trajectory,
    TrajectoryFile,
};
use tcfg_core::schedule::{linear_beta_schedule, NoiseSchedule};

use crate::config::RunConfig;
use crate::plot::{emit_plot, PlotKind, PlotSpec, Series};
use crate::CliError;

/// Offset between the per-label sampling seeds in two-label runs. Sample i
/// always draws from stream (seed, i), so reusing one seed for both labels
/// would noise both label sets identically; the offset decorrelates them.
const LABEL_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Number of trajectories drawn in the overlay plot. The recorded JSON keeps
/// every trajectory; the plot caps at the first few to stay readable.
const OVERLAY_LIMIT: usize = 32;

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = dataset(cfg)?;
    write_artifact(out, "data.csv", |w| {
        tcfg_core::dataset::write_points_csv(&data, w).map_err(CliError::from)
    })?;

    let mut by_label: [Vec<[f64; 2]>; 2] = [Vec::new(), Vec::new()];
    for p in &data {
        by_label[p.label as usize].push([p.position[0], p.position[1]]);
    }
    let spec = PlotSpec {
        kind: PlotKind::Scatter,
        title: format!("two moons (n = {}, noise = {})", cfg.data.n_samples, cfg.data.noise_std),
        x_label: "x0".into(),
        y_label: "x1".into(),
        series: vec![
            Series { label: "moon 0".into(), points: by_label[0].clone() },
            Series { label: "moon 1".into(), points: by_label[1].clone() },
        ],
    };
    emit_plot(&spec, &out.join("data.svg"))?;
    println!("wrote {} points to {}", data.len(), out.display());
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = dataset(cfg)?;
    let sched = schedule(cfg)?;
    let model_cfg = ModelConfig {
        hidden_dim: cfg.model.hidden_dim,
        time_freq_pairs: cfg.model.time_freq_pairs,
        label_embed_dim: cfg.model.label_embed_dim,
        activation: Activation::Silu,
    };
    let mut model = ScoreModel::init(2, model_cfg, cfg.seed)?;
    let train_cfg = TrainConfig {
        iterations: cfg.train.iterations,
        learning_rate: cfg.train.learning_rate,
        batch_size: cfg.train.batch_size,
        label_drop_prob: cfg.train.label_drop_prob,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let history = train(&mut model, &data, &sched, &train_cfg)?;

    save_checkpoint(
        &model,
        &sched,
        cfg.schedule.beta_min,
        cfg.schedule.beta_max,
        &out.join("checkpoint.json"),
    )?;
    write_artifact(out, "loss.csv", |w| {
        writeln!(w, "iteration,loss").map_err(io_err)?;
        for (i, loss) in history.iter().enumerate() {
            writeln!(w, "{i},{loss}").map_err(io_err)?;
        }
        Ok(())
    })?;

    let curve: Vec<[f64; 2]> = history.iter().enumerate().map(|(i, l)| [i as f64, *l]).collect();
    let spec = PlotSpec {
        kind: PlotKind::MultiLine,
        title: format!("training loss ({} iterations)", cfg.train.iterations),
        x_label: "iteration".into(),
        y_label: "batch loss".into(),
        series: vec![Series { label: "loss".into(), points: curve }],
    };
    emit_plot(&spec, &out.join("loss.svg"))?;
    let last = history.last().copied().unwrap_or(f64::NAN);
    println!("trained {} iterations, final batch loss {last:.4}", history.len());
    println!("checkpoint: {}", out.join("checkpoint.json").display());
    Ok(())
}

pub fn sample_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let source = resolve_source(cfg)?;
    let guidance = guidance(cfg)?;
    let output = source.with(|src, sched| {
        sample(
            src,
            &guidance,
            cfg.sample.label,
            cfg.sample.count,
            sched,
            cfg.seed,
            cfg.sample.noise,
            cfg.sample.record,
        )
        .map_err(CliError::from)
    })?;

    write_artifact(out, "samples.csv", |w| {
        write_samples_csv(&output.samples, cfg.sample.label, guidance.mode, cfg.seed, w)
            .map_err(CliError::from)
    })?;
    let mut series = vec![Series {
        label: format!("samples ({})", guidance.mode.name()),
        points: output.samples.iter().map(|s| [s[0], s[1]]).collect(),
    }];
    series.extend(arc_series());
    let spec = PlotSpec {
        kind: PlotKind::Scatter,
        title: format!(
            "{} samples, mode {}, w = {}",
            cfg.sample.count,
            guidance.mode.name(),
            guidance.weight
        ),
        x_label: "x0".into(),
        y_label: "x1".into(),
        series,
    };
    emit_plot(&spec, &out.join("samples.svg"))?;

    if let Some(trajs) = &output.trajectories {
        write_trajectory_file(cfg, &guidance, &source, trajs, out)?;
    }
    println!(
        "wrote {} samples from the {} to {}",
        output.samples.len(),
        source.describe(),
        out.display()
    );
    Ok(())
}

pub fn analyze_spectrum(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = dataset(cfg)?;
    let sched = schedule(cfg)?;
    let embedded = embed_isometric(&data, cfg.analysis.embed_dim, cfg.seed)?;
    let embedding = PlaneEmbedding::random(cfg.analysis.embed_dim, cfg.seed)?;
    let arc = arc_for_label(cfg.analysis.anchor_label)?;
    let anchor = embedding.apply(&arc.point_at(cfg.analysis.anchor_theta));
    let t = fraction_to_step(cfg.analysis.spectrum_t_fraction, sched.steps());

    let matrices = anchored_score_matrices(
        &embedded,
        &anchor,
        cfg.analysis.anchor_label,
        t,
        cfg.analysis.n_scores,
        cfg.seed,
        &sched,
    )?;
    let svd = svd_thin(&matrices.uncond)?;
    let report = SpectrumReport::from_singular_values(t, cfg.analysis.n_scores, svd.singular_values)?;

    write_json(out, "spectrum.json", &report)?;
    write_artifact(out, "spectrum.csv", |w| {
        tcfg_core::analysis::write_spectrum_csv(&report, w).map_err(CliError::from)
    })?;
    let points: Vec<[f64; 2]> =
        report.singular_values.iter().enumerate().map(|(i, s)| [(i + 1) as f64, *s]).collect();
    let spec = PlotSpec {
        kind: PlotKind::MultiLine,
        title: format!(
            "unconditional score spectrum, t = {t}, {} probes in R^{}",
            cfg.analysis.n_scores, cfg.analysis.embed_dim
        ),
        x_label: "singular value index".into(),
        y_label: "sigma".into(),
        series: vec![Series { label: "sigma".into(), points }],
    };
    emit_plot(&spec, &out.join("spectrum.svg"))?;
    match report.gap_index {
        Some(k) => println!("spectral gap after index {k} at t = {t}"),
        None => println!("no spectral gap at t = {t}"),
    }
    Ok(())
}

pub fn analyze_alignment(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = dataset(cfg)?;
    let sched = schedule(cfg)?;
    let embedded = embed_isometric(&data, cfg.analysis.embed_dim, cfg.seed)?;

    let mut indexed_blocks: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut greedy_blocks: Vec<(usize, Vec<f64>)> = Vec::new();
    for f in &cfg.analysis.alignment_t_fractions {
        let t = fraction_to_step(*f, sched.steps());
        let matrices = spread_score_matrices(&embedded, t, cfg.seed, &sched)?;
        let svd_uncond = svd_thin(&matrices.uncond)?;
        let svd_cond = svd_thin(&matrices.cond)?;
        indexed_blocks
            .push((t, alignment_profile(&svd_uncond, &svd_cond, AlignmentStrategy::Indexed)?));
        greedy_blocks
            .push((t, alignment_profile(&svd_uncond, &svd_cond, AlignmentStrategy::Greedy)?));
    }

    for (name, blocks) in
        [("alignment_indexed", &indexed_blocks), ("alignment_greedy", &greedy_blocks)]
    {
        write_artifact(out, &format!("{name}.csv"), |w| {
            tcfg_core::analysis::write_alignment_csv(blocks, w).map_err(CliError::from)
        })?;
        let series: Vec<Series> = blocks
            .iter()
            .map(|(t, profile)| Series {
                label: format!("t = {t}"),
                points: profile
                    .iter()
                    .enumerate()
                    .map(|(i, c)| [(i + 1) as f64, *c])
                    .collect(),
            })
            .collect();
        let spec = PlotSpec {
            kind: PlotKind::MultiLine,
            title: format!(
                "|cos| between conditional and unconditional right vectors ({})",
                name.trim_start_matches("alignment_")
            ),
            x_label: "singular vector index".into(),
            y_label: "|cos|".into(),
            series,
        };
        emit_plot(&spec, &out.join(format!("{name}.svg")))?;
    }
    println!(
        "alignment profiles at t = {:?}",
        indexed_blocks.iter().map(|(t, _)| *t).collect::<Vec<_>>()
    );
    Ok(())
}

pub fn analyze_trajectory(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let source = resolve_source(cfg)?;
    let guidance = guidance(cfg)?;
    let (output, steps) = source.with(|src, sched| {
        let output = sample(
            src,
            &guidance,
            cfg.sample.label,
            cfg.sample.count,
            sched,
            cfg.seed,
            cfg.sample.noise,
            true,
        )?;
        Ok::<_, CliError>((output, sched.steps()))
    })?;
    let trajs = output.trajectories.as_ref().expect("recording was requested");

    write_trajectory_file(cfg, &guidance, &source, trajs, out)?;

    let mut ratio_series = Vec::new();
    for (channel, name) in [
        (ScoreChannel::Uncond, "uncond"),
        (ScoreChannel::Cond, "cond"),
        (ScoreChannel::Guided, "guided"),
    ] {
        let curve = trajectory_ratio_curve(trajs, channel, steps)?;
        write_artifact(out, &format!("ratios_{name}.csv"), |w| {
            tcfg_core::analysis::write_ratio_csv(&curve, w).map_err(CliError::from)
        })?;
        ratio_series.push(Series {
            label: name.to_string(),
            points: curve.iter().map(|r| [r.t as f64, r.median]).collect(),
        });
    }
    let spec = PlotSpec {
        kind: PlotKind::MultiLine,
        title: "median tangential/normal score ratio along trajectories".into(),
        x_label: "timestep t".into(),
        y_label: "|s_tan| / |s_norm| (median)".into(),
        series: ratio_series,
    };
    emit_plot(&spec, &out.join("ratio.svg"))?;

    let mut series: Vec<Series> = trajs
        .iter()
        .take(OVERLAY_LIMIT)
        .map(|tr| Series {
            label: format!("stream {}", tr.stream),
            points: tr.states.iter().map(|s| [s[0], s[1]]).collect(),
        })
        .collect();
    series.extend(arc_series());
    let spec = PlotSpec {
        kind: PlotKind::TrajectoryOverlay,
        title: format!("sampling trajectories, mode {}, w = {}", guidance.mode.name(), guidance.weight),
        x_label: "x0".into(),
        y_label: "x1".into(),
        series,
    };
    emit_plot(&spec, &out.join("trajectory.svg"))?;
    println!("recorded {} trajectories over {} steps", trajs.len(), steps);
    Ok(())
}

/// Per-mode rows of the evaluation report.
#[derive(Debug, Clone, Serialize)]
pub struct ModeReport {
    pub mode: String,
    pub count: usize,
    pub mean_distance: f64,
    pub median_distance: f64,
    pub frechet: f64,
    pub frechet_regularized: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub seed: u64,
    pub weight: f64,
    pub count_per_mode: usize,
    pub modes: Vec<ModeReport>,
}

pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    if cfg.eval.count < 2 {
        return Err(CliError::Config(format!(
            "eval.count must be at least 2 to cover both labels, got {}",
            cfg.eval.count
        )));
    }
    let source = resolve_source(cfg)?;
    let reference = dataset(cfg)?;
    let reference_positions: Vec<Vec<f64>> =
        reference.iter().map(|p| p.position.clone()).collect();

    let modes =
        [GuidanceMode::CondOnly, GuidanceMode::Cfg, GuidanceMode::Tcfg, GuidanceMode::TcfgPooled];
    let mut rows = Vec::new();
    let mut plot_series = vec![Series {
        label: "data".into(),
        points: reference.iter().map(|p| [p.position[0], p.position[1]]).collect(),
    }];
    for mode in modes {
        let guidance = GuidanceConfig {
            mode,
            weight: cfg.guidance.scale,
            tie_tolerance: cfg.guidance.tie_tolerance,
        };
        let samples = source.with(|src, sched| {
            two_label_samples(src, &guidance, cfg.eval.count, sched, cfg.seed, cfg.sample.noise)
        })?;
        let dist = mean_manifold_distance(&samples)?;
        let frechet = frechet_gaussian_2d(&samples, &reference_positions)?;
        rows.push(ModeReport {
            mode: mode.name().to_string(),
            count: samples.len(),
            mean_distance: dist.mean,
            median_distance: dist.median,
            frechet: frechet.distance_sq,
            frechet_regularized: frechet.regularized,
        });
        plot_series.push(Series {
            label: mode.name().to_string(),
            points: samples.iter().map(|s| [s[0], s[1]]).collect(),
        });
    }

    let report = EvalReport {
        seed: cfg.seed,
        weight: cfg.guidance.scale,
        count_per_mode: cfg.eval.count,
        modes: rows,
    };
    write_json(out, "report.json", &report)?;
    write_artifact(out, "report.csv", |w| {
        writeln!(w, "mode,count,mean_distance,median_distance,frechet,frechet_regularized")
            .map_err(io_err)?;
        for row in &report.modes {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.mode,
                row.count,
                row.mean_distance,
                row.median_distance,
                row.frechet,
                row.frechet_regularized
            )
            .map_err(io_err)?;
        }
        Ok(())
    })?;
    let spec = PlotSpec {
        kind: PlotKind::Scatter,
        title: format!("guidance modes at w = {} (seed {})", cfg.guidance.scale, cfg.seed),
        x_label: "x0".into(),
        y_label: "x1".into(),
        series: plot_series,
    };
    emit_plot(&spec, &out.join("eval.svg"))?;

    for row in &report.modes {
        println!(
            "{:<12} mean {:.4}  median {:.4}  frechet {:.5}",
            row.mode, row.mean_distance, row.median_distance, row.frechet
        );
    }
    Ok(())
}

pub fn bench(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    if cfg.bench.count == 0 {
        return Err(CliError::Config("bench.count must be at least 1".into()));
    }
    let source = resolve_source(cfg)?;
    let report = source.with(|src, sched| {
        bench_overhead(src, cfg.guidance.scale, cfg.sample.label, cfg.bench.count, sched, cfg.seed)
            .map_err(CliError::from)
    })?;
    write_json(out, "overhead.json", &report)?;
    write_artifact(out, "overhead.csv", |w| {
        tcfg_core::eval::write_overhead_csv(&report, w).map_err(CliError::from)
    })?;
    println!(
        "per-step combine medians over a batch of {}: cfg {:.0} ns, tcfg {:.0} ns, overhead {:.2}%",
        report.count,
        report.median_cfg_nanos,
        report.median_tcfg_nanos,
        report.overhead_fraction * 100.0
    );
    Ok(())
}

pub fn repro(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let stage = |name: &str| -> Result<PathBuf, CliError> {
        let dir = out.join(name);
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    };
    let run = |name: &str,
               cfg: &RunConfig,
               f: &dyn Fn(&RunConfig, &Path) -> Result<(), CliError>|
     -> Result<(), CliError> {
        let dir = stage(name)?;
        echo_config(cfg, &dir)?;
        println!("[repro] {name}");
        f(cfg, &dir)
    };

    run("gen-data", cfg, &gen_data)?;
    run("train", cfg, &train_cmd)?;

    let mut model_cfg = cfg.clone();
    model_cfg.sample.oracle = false;
    model_cfg.sample.checkpoint = out.join("train").join("checkpoint.json").display().to_string();

    run("sample", &model_cfg, &sample_cmd)?;
    run("analyze-spectrum", cfg, &analyze_spectrum)?;
    run("analyze-alignment", cfg, &analyze_alignment)?;

    // Full-count trajectory recording dwarfs every other artifact, so the
    // repro pipeline records at most OVERLAY_LIMIT trajectories; a direct
    // analyze-trajectory run honors sample.count.
    let mut traj_cfg = model_cfg.clone();
    traj_cfg.sample.count = traj_cfg.sample.count.min(OVERLAY_LIMIT);
    run("analyze-trajectory", &traj_cfg, &analyze_trajectory)?;

    run("evaluate", &model_cfg, &evaluate)?;
    run("bench", &model_cfg, &bench)?;
    println!("repro artifacts under {}", out.display());
    Ok(())
}

/// Writes the resolved config into the output directory.
pub fn echo_config(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let path = out.join("config.txt");
    std::fs::write(&path, cfg.serialize())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Score source plus the schedule it must be sampled with. A checkpoint
/// carries the schedule it was trained against; the oracle uses the
/// configured one.
#[derive(Debug)]
enum ResolvedSource {
    Oracle { data: Vec<LabeledPoint>, sched: NoiseSchedule },
    Model { model: Box<ScoreModel>, sched: NoiseSchedule },
}

impl ResolvedSource {
    fn with<T>(
        &self,
        f: impl FnOnce(&ScoreSource, &NoiseSchedule) -> Result<T, CliError>,
    ) -> Result<T, CliError> {
        match self {
            ResolvedSource::Oracle { data, sched } => f(&ScoreSource::Oracle(data), sched),
            ResolvedSource::Model { model, sched } => f(&ScoreSource::Model(model), sched),
        }
    }

    fn describe(&self) -> String {
        match self {
            ResolvedSource::Oracle { data, .. } => format!("analytic oracle over {} points", data.len()),
            ResolvedSource::Model { .. } => "trained model".to_string(),
        }
    }
}

fn resolve_source(cfg: &RunConfig) -> Result<ResolvedSource, CliError> {
    if cfg.sample.oracle {
        return Ok(ResolvedSource::Oracle { data: dataset(cfg)?, sched: schedule(cfg)? });
    }
    if cfg.sample.checkpoint.is_empty() {
        return Err(CliError::Config(
            "no score source: set sample.oracle = true (or --oracle) or point \
             sample.checkpoint (or --checkpoint) at a trained model"
                .into(),
        ));
    }
    let (model, sched) = load_checkpoint(Path::new(&cfg.sample.checkpoint))?;
    Ok(ResolvedSource::Model { model: Box::new(model), sched })
}

fn dataset(cfg: &RunConfig) -> Result<Vec<LabeledPoint>, CliError> {
    Ok(two_moons(&TwoMoonsSpec {
        n_samples: cfg.data.n_samples,
        noise_std: cfg.data.noise_std,
        seed: cfg.seed,
    })?)
}

fn schedule(cfg: &RunConfig) -> Result<NoiseSchedule, CliError> {
    Ok(linear_beta_schedule(cfg.schedule.steps, cfg.schedule.beta_min, cfg.schedule.beta_max)?)
}

fn guidance(cfg: &RunConfig) -> Result<GuidanceConfig, CliError> {
    let mode = GuidanceMode::parse(&cfg.guidance.mode).ok_or_else(|| {
        CliError::Config(format!("invalid guidance mode `{}`", cfg.guidance.mode))
    })?;
    Ok(GuidanceConfig {
        mode,
        weight: cfg.guidance.scale,
        tie_tolerance: cfg.guidance.tie_tolerance,
    })
}

/// Samples `count` points split across both moon labels, label 1 on an
/// offset seed.
fn two_label_samples(
    source: &ScoreSource,
    guidance: &GuidanceConfig,
    count: usize,
    sched: &NoiseSchedule,
    seed: u64,
    noise_on: bool,
) -> Result<Vec<Vec<f64>>, CliError> {
    let half = count / 2;
    let rest = count - half;
    let mut samples =
        sample(source, guidance, 0, half, sched, seed, noise_on, false)?.samples;
    let offset_seed = seed.wrapping_add(LABEL_SEED_STRIDE);
    samples.extend(sample(source, guidance, 1, rest, sched, offset_seed, noise_on, false)?.samples);
    Ok(samples)
}

fn write_trajectory_file(
    cfg: &RunConfig,
    guidance: &GuidanceConfig,
    source: &ResolvedSource,
    trajs: &[Trajectory],
    out: &Path,
) -> Result<(), CliError> {
    let steps = match source {
        ResolvedSource::Oracle { sched, .. } | ResolvedSource::Model { sched, .. } => sched.steps(),
    };
    let file = TrajectoryFile {
        mode: guidance.mode.name().to_string(),
        scale: guidance.weight,
        label: cfg.sample.label,
        seed: cfg.seed,
        noise_on: cfg.sample.noise,
        schedule_steps: steps,
        trajectories: trajs.to_vec(),
    };
    write_json(out, "trajectories.json", &file)
}

fn arc_for_label(label: u8) -> Result<MoonArc, CliError> {
    match label {
        0 => Ok(MoonArc::Outer),
        1 => Ok(MoonArc::Inner),
        _ => Err(CliError::Config(format!("anchor label must be 0 or 1, got {label}"))),
    }
}

/// Reference polylines of both ideal arcs for orientation in scatter and
/// overlay plots.
fn arc_series() -> Vec<Series> {
    let sample_arc = |arc: MoonArc| -> Vec<[f64; 2]> {
        (0..=60)
            .map(|i| {
                let theta = std::f64::consts::PI * i as f64 / 60.0;
                arc.point_at(theta)
            })
            .collect()
    };
    vec![
        Series { label: "arc 0".into(), points: sample_arc(MoonArc::Outer) },
        Series { label: "arc 1".into(), points: sample_arc(MoonArc::Inner) },
    ]
}

/// Maps a fraction of the schedule to a concrete timestep in 1..=steps.
fn fraction_to_step(fraction: f64, steps: usize) -> usize {
    let t = (fraction * steps as f64).round() as usize;
    t.clamp(1, steps)
}

fn write_artifact(
    out: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let path = out.join(name);
    let file = File::create(&path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    f(&mut writer)?;
    writer
        .flush()
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = out.join(name);
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize {name}: {e}")))?;
    std::fs::write(&path, json + "\n")
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(format!("write failed: {e}"))
}
