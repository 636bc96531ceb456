//! Command-line front end. Every command prints `record=<kind> key=value ...`
//! lines on the given writer so runs can be scripted.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::background::BackgroundStrategy;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_heldout, RenderMode};
use crate::field::SceneModel;
use crate::mesh::{chamfer, extract_mesh};
use crate::render::{level_set_stability, min_pairwise};
use crate::sensor::{generate_dataset, Dataset};
use crate::train::{init_fields, march_step, Checkpoint, Objective, Trainer};
use crate::verify::oracle_suite;

#[derive(Debug, Parser)]
#[command(name = "occusurf", version, about = "Surface-like occupancy fields from multi-view images")]
pub struct Cli {
    /// Worker threads; 1 gives the deterministic single-threaded mode.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic scene from the configured rig.
    GenData(GenData),
    /// Optimize a field; writes the final checkpoint and a loss log.
    Train(Train),
    /// Render views of a checkpoint.
    Render(Render),
    /// Extract a level-set mesh (OBJ or PLY by extension).
    Extract(Extract),
    /// Held-out PSNR, Chamfer distance, level-set stability and cost report.
    Eval(Eval),
    /// Run the gradient and sampling self-checks.
    Verify(Verify),
    /// Train the blended, volumetric and relaxed variants on the same data.
    Compare(Compare),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// free-flight, level-set[:t] or color-dep[:c].
    #[arg(long)]
    pub strategy: Option<String>,
    /// Enable the relaxation phase.
    #[arg(long)]
    pub relax: bool,
    /// blended or nerf.
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub iterations: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenData {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Train {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Dataset directory written by `gen-data`; rendered from the config when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Write an extra checkpoint every N iterations.
    #[arg(long)]
    pub snapshot_every: Option<u64>,
    /// Log every N-th step.
    #[arg(long, default_value_t = 1)]
    pub log_every: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Render {
    #[command(flatten)]
    pub common: Common,
    /// Untrained field when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Composite volumetrically instead of stopping at the level set.
    #[arg(long)]
    pub volume: bool,
    /// Camera indices of the rig; held-out views when empty.
    #[arg(long, value_delimiter = ',')]
    pub views: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Extract {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Eval {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Report file; stdout only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Verify {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Compare {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn apply_flags(cfg: &mut ExperimentConfig, f: &TrainFlags) -> Result<()> {
    if let Some(s) = &f.strategy {
        cfg.train.strategy = BackgroundStrategy::parse(s)?;
    }
    if f.relax {
        cfg.train.relax.enabled = true;
    }
    if let Some(o) = &f.objective {
        cfg.train.objective = Objective::parse(o)?;
    }
    if let Some(n) = f.iterations {
        cfg.train.iterations = n;
    }
    cfg.train.validate()
}

fn load_data(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<Dataset> {
    match dir {
        Some(d) => Dataset::load(d),
        None => generate_dataset(&cfg.scene, &cfg.rig),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn check_level(level: f64) -> Result<f64> {
    if level > 0.0 && level < 1.0 {
        Ok(level)
    } else {
        Err(Error::invalid(format!("level {level} outside (0, 1)")))
    }
}

/// Loads a checkpoint and checks that its grid matches the config.
fn load_model(cfg: &ExperimentConfig, path: &Path) -> Result<SceneModel> {
    let ck = Checkpoint::load(path)?;
    let g = ck.model.grid();
    if g.bounds != cfg.bounds || g.resolution != [cfg.train.resolution; 3] {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint grid {:?} over {:?} does not match the config ({} cells over {:?})",
            g.resolution, g.bounds, cfg.train.resolution, cfg.bounds
        )));
    }
    Ok(ck.model)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenData(c) => gen_data(c, out),
        Command::Train(c) => train(c, out),
        Command::Render(c) => render(c, out),
        Command::Extract(c) => extract(c, out),
        Command::Eval(c) => eval(c, out),
        Command::Verify(c) => verify(c, out),
        Command::Compare(c) => compare(c, out),
    }
}

fn emit(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<output>", e))
}

fn gen_data(c: GenData, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&c.common)?;
    let data = generate_dataset(&cfg.scene, &cfg.rig)?;
    data.save(&c.out)?;
    emit(
        out,
        &format!(
            "record=dataset views={} train={} held_out={} dir={}",
            data.cameras.len(),
            data.train_views().len(),
            data.test_views().len(),
            c.out.display()
        ),
    )
}

fn train(c: Train, out: &mut dyn Write) -> Result<()> {
    let mut cfg = load_config(&c.common)?;
    apply_flags(&mut cfg, &c.flags)?;
    if c.snapshot_every == Some(0) || c.log_every == 0 {
        return Err(Error::invalid("snapshot and log intervals must be positive"));
    }
    let data = load_data(&cfg, c.data.as_deref())?;
    create_dir(&c.out)?;
    let log_path = c.out.join("loss.log");
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut trainer = Trainer::new(cfg.train.clone(), cfg.bounds, &data)?;
    let total = cfg.train.iterations;
    trainer.run(&data, |t, rep| {
        let last = rep.iteration + 1 == total;
        if rep.iteration % c.log_every == 0 || last {
            writeln!(log, "{rep}").map_err(|e| Error::io(&log_path, e))?;
        }
        if let Some(n) = c.snapshot_every {
            if (rep.iteration + 1) % n == 0 && !last {
                t.state.save(&c.out.join(format!("checkpoint_{:06}.bin", rep.iteration + 1)))?;
            }
        }
        Ok(())
    })?;
    let path = c.out.join("checkpoint.bin");
    trainer.state.save(&path)?;
    emit(out, &format!("record=train iterations={} checkpoint={}", trainer.iteration(), path.display()))
}

fn render(c: Render, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&c.common)?;
    let model = match &c.checkpoint {
        Some(p) => load_model(&cfg, p)?,
        None => init_fields(&cfg.train, cfg.bounds, cfg.scene.environment()),
    };
    let mode = if c.volume {
        RenderMode::Volume
    } else {
        RenderMode::Surface {
            level: check_level(c.level.unwrap_or(cfg.eval.level))?,
        }
    };
    let cams = cfg.rig.cameras()?;
    let views = if c.views.is_empty() {
        (0..cams.len()).filter(|&i| cfg.rig.is_held_out(i)).collect()
    } else {
        c.views.clone()
    };
    create_dir(&c.out)?;
    let step = march_step(&cfg.train, &cfg.bounds);
    for v in views {
        let cam = cams
            .get(v)
            .ok_or_else(|| Error::invalid(format!("view {v} outside the rig of {} cameras", cams.len())))?;
        let r = mode.render(&model, cam, step)?;
        let stem = c.out.join(format!("view_{v:03}"));
        r.image.save_png(&stem.with_extension("png"))?;
        r.image.save_float(&stem.with_extension("rgbf"))?;
        emit(
            out,
            &format!(
                "record=render view={v} samples_per_ray={:.4} evals_per_ray={:.4} file={}",
                r.stats.samples_per_ray(),
                r.stats.evals_per_ray(),
                stem.with_extension("png").display()
            ),
        )?;
    }
    Ok(())
}

fn extract(c: Extract, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&c.common)?;
    let model = load_model(&cfg, &c.checkpoint)?;
    let level = check_level(c.level.unwrap_or(cfg.eval.level))?;
    let mesh = extract_mesh(&model.occupancy, level)?;
    mesh.save(&c.out)?;
    emit(
        out,
        &format!(
            "record=mesh level={level} vertices={} triangles={} closed={} file={}",
            mesh.vertices.len(),
            mesh.triangles.len(),
            mesh.is_closed_manifold(),
            c.out.display()
        ),
    )
}

/// Report lines shared by `eval` and `compare`.
fn eval_lines(cfg: &ExperimentConfig, model: &SceneModel, data: &Dataset, level: f64, tag: &str) -> Result<Vec<String>> {
    let step = march_step(&cfg.train, &cfg.bounds);
    let surf = evaluate_heldout(model, data, RenderMode::Surface { level }, step)?;
    let vol = evaluate_heldout(model, data, RenderMode::Volume, step)?;
    let mut lines = vec![
        format!(
            "record=psnr{tag} mode=surface level={level} psnr={:.4} mse={:.6e} samples_per_ray={:.4} evals_per_ray={:.4}",
            surf.psnr,
            surf.mse,
            surf.stats.samples_per_ray(),
            surf.stats.evals_per_ray()
        ),
        format!(
            "record=psnr{tag} mode=volume psnr={:.4} mse={:.6e} samples_per_ray={:.4} evals_per_ray={:.4}",
            vol.psnr,
            vol.mse,
            vol.stats.samples_per_ray(),
            vol.stats.evals_per_ray()
        ),
        format!(
            "record=cost{tag} surface_over_volume={:.4}",
            surf.stats.evals_per_ray() / vol.stats.evals_per_ray()
        ),
    ];
    let view = data.test_views()[0];
    let m = level_set_stability(model, &data.cameras[view], &cfg.eval.levels, step)?;
    let levels: Vec<String> = cfg.eval.levels.iter().map(|l| l.to_string()).collect();
    lines.push(format!("record=level_stability{tag} view={view} levels={} min_pairwise_psnr={:.4}", levels.join(","), min_pairwise(&m)));
    if let Some(gt) = cfg.analytic_mesh(5) {
        let mesh = extract_mesh(&model.occupancy, level)?;
        let cell = cfg.bounds.extent().max() / cfg.train.resolution as f64;
        let line = if mesh.is_empty() {
            format!("record=chamfer{tag} level={level} distance=inf cells=inf")
        } else {
            let d = chamfer(&mesh, &gt, cfg.eval.chamfer_points, cfg.eval.chamfer_seed)?;
            format!("record=chamfer{tag} level={level} distance={d:.6} cells={:.4}", d / cell)
        };
        lines.push(line);
    }
    Ok(lines)
}

fn write_report(lines: &[String], path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    for l in lines {
        emit(out, l)?;
    }
    if let Some(p) = path {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        fs::write(p, text).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn eval(c: Eval, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&c.common)?;
    let model = load_model(&cfg, &c.checkpoint)?;
    let data = load_data(&cfg, c.data.as_deref())?;
    let level = check_level(c.level.unwrap_or(cfg.eval.level))?;
    let lines = eval_lines(&cfg, &model, &data, level, "")?;
    write_report(&lines, c.out.as_deref(), out)
}

fn verify(c: Verify, out: &mut dyn Write) -> Result<()> {
    let checks = oracle_suite(c.seed)?;
    let lines: Vec<String> = checks.iter().map(|c| format!("record=verify {c}")).collect();
    write_report(&lines, c.out.as_deref(), out)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Error::invalid(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

fn compare(c: Compare, out: &mut dyn Write) -> Result<()> {
    let mut base = load_config(&c.common)?;
    if let Some(n) = c.iterations {
        base.train.iterations = n;
    }
    let data = load_data(&base, c.data.as_deref())?;
    create_dir(&c.out)?;
    let mut lines = Vec::new();
    for name in ["ours", "nerf", "relaxed"] {
        let mut cfg = base.clone();
        match name {
            "nerf" => cfg.train.objective = Objective::Nerf,
            "relaxed" => cfg.train.relax.enabled = true,
            _ => cfg.train.objective = Objective::Blended,
        }
        cfg.train.validate()?;
        let mut trainer = Trainer::new(cfg.train.clone(), cfg.bounds, &data)?;
        trainer.run(&data, |_, _| Ok(()))?;
        trainer.state.save(&c.out.join(format!("{name}.bin")))?;
        lines.extend(eval_lines(&cfg, trainer.model(), &data, cfg.eval.level, &format!(" method={name}"))?);
    }
    write_report(&lines, Some(&c.out.join("compare.txt")), out)
}
