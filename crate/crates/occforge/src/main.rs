//! Command-line entry point: scene generation, training, evaluation,
//! gradient verification, component ablation, and PLY export.
//!
//! Exit codes: 0 success, 1 usage error, 2 verification/runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use occforge::autodiff::{read_checkpoint, write_checkpoint, ParameterStore};
use occforge::config::{ArchConfig, BranchConfig, Preset, RunConfig};
use occforge::eval::{export_ply, ConfusionMatrix};
use occforge::geometry::{read_svox, write_svox};
use occforge::scenes::{generate_scene, read_scene, write_scene, SceneOptions, CLASS_NAMES, PALETTE};
use occforge::train::{
    ablation_csv, ablation_markdown, curve_csv, predict_voxels, run_ablation, train_branch,
    train_distill, AblationConfig, SceneBundle, TrainSetup,
};
use occforge::verify::{gradcheck_suite, suite_passes, suite_report};
use occforge::{Error, Result};

#[derive(Parser)]
#[command(name = "occforge", version, about = "Toy-scale monocular semantic occupancy prediction")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic scene files.
    GenData(GenDataArgs),
    /// Train the student, the teacher, or both (two-phase distillation).
    Train(TrainArgs),
    /// Score a checkpoint on a scene directory and print per-class IoU.
    Eval(EvalArgs),
    /// Run the finite-difference gradient verification suite.
    Gradcheck(GradcheckArgs),
    /// Train every component-toggle row and report mean mIoU per row.
    Ablate(AblateArgs),
    /// Convert a voxel label grid to an ASCII PLY mesh.
    ExportPly(ExportPlyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Student,
    Teacher,
    Distill,
}

/// Flags shared by train/eval; unset flags fall back to `--config`, then
/// to defaults.
#[derive(Args)]
struct RunOverrides {
    /// JSON run configuration; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Comma-separated student components: `none`, `all`, `aux`, `icca`.
    #[arg(long)]
    toggles: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// 2D auxiliary semantic weight.
    #[arg(long)]
    lambda1: Option<f64>,
    /// Distillation weight.
    #[arg(long)]
    lambda2: Option<f64>,
    /// Voxel cross-entropy weight.
    #[arg(long)]
    lambda3: Option<f64>,
    /// Semantic affinity weight.
    #[arg(long)]
    lambda4: Option<f64>,
    /// Geometric affinity weight.
    #[arg(long)]
    lambda5: Option<f64>,
}

impl RunOverrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::InvalidArg(format!("bad config file: {e}")))?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.preset {
            cfg.preset = p;
        }
        if let Some(t) = &self.toggles {
            apply_toggles(&mut cfg.branch, t)?;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        for (flag, slot) in [
            (self.lambda1, 0),
            (self.lambda2, 1),
            (self.lambda3, 2),
            (self.lambda4, 3),
            (self.lambda5, 4),
        ] {
            if let Some(v) = flag {
                match slot {
                    0 => cfg.weights.sem = v,
                    1 => cfg.weights.distill = v,
                    2 => cfg.weights.ssc = v,
                    3 => cfg.weights.scal_sem = v,
                    _ => cfg.weights.scal_geo = v,
                }
            }
        }
        cfg.weights.validate()?;
        cfg.branch.validate()?;
        cfg.teacher_branch.validate()?;
        Ok(cfg)
    }
}

fn apply_toggles(branch: &mut BranchConfig, list: &str) -> Result<()> {
    for token in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match token {
            "none" => {
                branch.aux_loss = false;
                branch.icca = false;
            }
            "all" => {
                branch.aux_loss = true;
                branch.icca = true;
            }
            "aux" => branch.aux_loss = true,
            "icca" => branch.icca = true,
            other => {
                return Err(Error::InvalidArg(format!(
                    "unknown toggle `{other}` (expected none, all, aux, icca)"
                )))
            }
        }
    }
    Ok(())
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "toy")]
    preset: Preset,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Frames per scene (use >= 2 for teacher/distill training).
    #[arg(long, default_value_t = 2)]
    frames: usize,
    #[arg(long, default_value_t = 0.0)]
    depth_noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "student")]
    mode: Mode,
    /// Directory of `.ocsn` scene files.
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Teacher optimizer steps of the distillation first phase
    /// (defaults to the same epoch count as the student phase).
    #[arg(long)]
    teacher_epochs: Option<usize>,
    #[command(flatten)]
    overrides: RunOverrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scenes: PathBuf,
    /// Branch the checkpoint belongs to.
    #[arg(long, value_enum, default_value = "student")]
    mode: Mode,
    #[command(flatten)]
    overrides: RunOverrides,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scene scale of the end-to-end case.
    #[arg(long, value_enum, default_value = "micro")]
    preset: Preset,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Comma-separated parameter seeds, one training run per seed per row.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    train_scenes: Option<usize>,
    #[arg(long)]
    val_scenes: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    depth_noise: Option<f64>,
}

#[derive(Args)]
struct ExportPlyArgs {
    /// Input `.svox` label grid.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OCCFORGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.cmd {
        Cmd::GenData(a) => gen_data(&a),
        Cmd::Train(a) => train(&a),
        Cmd::Eval(a) => eval(&a),
        Cmd::Gradcheck(a) => gradcheck(&a),
        Cmd::Ablate(a) => ablate(&a),
        Cmd::ExportPly(a) => export(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(Error::InvalidArg(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn gen_data(args: &GenDataArgs) -> Result<ExitCode> {
    std::fs::create_dir_all(&args.out)?;
    let opts = SceneOptions {
        frames: args.frames,
        depth_noise: args.depth_noise,
        ..Default::default()
    };
    for i in 0..args.count {
        let scene = generate_scene(args.seed + i as u64, args.preset, &opts)?;
        let path = args.out.join(format!("scene_{:04}.ocsn", i));
        write_scene(&scene, &path)?;
        // Ground-truth grid alongside, ready for `export-ply`.
        write_svox(&scene.grid, &args.out.join(format!("scene_{:04}.svox", i)))?;
        println!("{}", path.display());
    }
    let resolved = serde_json::json!({
        "seed": args.seed,
        "preset": args.preset,
        "count": args.count,
        "frames": args.frames,
        "depth_noise": args.depth_noise,
    });
    std::fs::write(
        args.out.join("gen_config.json"),
        serde_json::to_string_pretty(&resolved)?,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn load_bundles(dir: &Path) -> Result<Vec<SceneBundle>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ocsn"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArg(format!("no .ocsn scenes in {}", dir.display())));
    }
    paths.iter().map(|p| SceneBundle::from_scene(&read_scene(p)?)).collect()
}

fn write_resolved(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::write(out.join("run_config.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

fn train(args: &TrainArgs) -> Result<ExitCode> {
    let cfg = args.overrides.resolve()?;
    let data = load_bundles(&args.scenes)?;
    std::fs::create_dir_all(&args.out)?;
    write_resolved(&cfg, &args.out)?;
    let setup = TrainSetup {
        arch: ArchConfig::for_preset(cfg.preset),
        weights: cfg.weights,
        lr: cfg.lr,
        epochs: cfg.epochs,
    };
    match args.mode {
        Mode::Student => {
            let mut store = ParameterStore::new(cfg.seed);
            let curve = train_branch(&mut store, &data, &cfg.branch, &setup, None, false)?;
            write_checkpoint(&store, &args.out.join("student.ckpt"))?;
            std::fs::write(args.out.join("loss_curve.csv"), curve_csv(&curve))?;
        }
        Mode::Teacher => {
            let mut store = ParameterStore::new(cfg.seed);
            let curve = train_branch(&mut store, &data, &cfg.teacher_branch, &setup, None, true)?;
            write_checkpoint(&store, &args.out.join("teacher.ckpt"))?;
            std::fs::write(args.out.join("loss_curve.csv"), curve_csv(&curve))?;
        }
        Mode::Distill => {
            let teacher_epochs = args.teacher_epochs.unwrap_or(cfg.epochs);
            let out = train_distill(
                cfg.seed ^ 0x7e5c,
                cfg.seed,
                &data,
                &cfg.branch,
                &cfg.teacher_branch,
                &setup,
                teacher_epochs,
            )?;
            write_checkpoint(&out.teacher, &args.out.join("teacher.ckpt"))?;
            write_checkpoint(&out.student, &args.out.join("student.ckpt"))?;
            std::fs::write(args.out.join("teacher_curve.csv"), curve_csv(&out.teacher_curve))?;
            std::fs::write(args.out.join("loss_curve.csv"), curve_csv(&out.student_curve))?;
        }
    }
    println!("trained {} scenes for {} epochs -> {}", data.len(), cfg.epochs, args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn eval(args: &EvalArgs) -> Result<ExitCode> {
    let cfg = args.overrides.resolve()?;
    let data = load_bundles(&args.scenes)?;
    let mut store = read_checkpoint(&args.checkpoint, cfg.seed)?;
    let arch = ArchConfig::for_preset(cfg.preset);
    let (branch, is_teacher) = match args.mode {
        Mode::Teacher => (cfg.teacher_branch.clone(), true),
        _ => {
            let mut b = cfg.branch.clone();
            b.distill = matches!(args.mode, Mode::Distill);
            (b, false)
        }
    };
    let mut cm = ConfusionMatrix::new(arch.num_classes);
    for bundle in &data {
        let pred = predict_voxels(&mut store, bundle, &arch, &branch, is_teacher)?;
        cm.add(&bundle.voxel_labels, &pred);
    }
    let per_class = cm.per_class_iou();
    println!("class            iou");
    for (c, iou) in per_class.iter().enumerate() {
        match iou {
            Some(v) => println!("{:<16} {:.4}", CLASS_NAMES[c], v),
            None => println!("{:<16} -", CLASS_NAMES[c]),
        }
    }
    let present: Vec<f64> = per_class.iter().skip(1).filter_map(|x| *x).collect();
    let miou = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    println!("miou {miou}");
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(args: &GradcheckArgs) -> Result<ExitCode> {
    let cases = gradcheck_suite(args.seed, args.preset)?;
    print!("{}", suite_report(&cases));
    if suite_passes(&cases) {
        println!("gradcheck: all cases passed");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("gradcheck: FAILED");
        Ok(ExitCode::from(2))
    }
}

fn ablate(args: &AblateArgs) -> Result<ExitCode> {
    let mut cfg = AblationConfig::default();
    if let Some(p) = args.preset {
        cfg.preset = p;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::InvalidArg(format!("bad seed `{t}`")))
            })
            .collect::<Result<Vec<u64>>>()?;
        if cfg.seeds.is_empty() {
            return Err(Error::InvalidArg("need at least one seed".into()));
        }
    }
    if let Some(n) = args.train_scenes {
        cfg.train_scenes = n;
    }
    if let Some(n) = args.val_scenes {
        cfg.val_scenes = n;
    }
    if let Some(n) = args.epochs {
        cfg.epochs = n;
        cfg.teacher_epochs = n;
    }
    if let Some(lr) = args.lr {
        cfg.lr = lr;
    }
    if let Some(d) = args.depth_noise {
        cfg.depth_noise = d;
    }
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(
        args.out.join("ablation_config.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "preset": cfg.preset,
            "seeds": cfg.seeds,
            "train_scenes": cfg.train_scenes,
            "val_scenes": cfg.val_scenes,
            "epochs": cfg.epochs,
            "teacher_epochs": cfg.teacher_epochs,
            "lr": cfg.lr,
            "depth_noise": cfg.depth_noise,
        }))?,
    )?;
    let rows = run_ablation(&cfg)?;
    let md = ablation_markdown(&rows);
    std::fs::write(args.out.join("ablation.csv"), ablation_csv(&rows))?;
    std::fs::write(args.out.join("ablation.md"), &md)?;
    print!("{md}");
    Ok(ExitCode::SUCCESS)
}

fn export(args: &ExportPlyArgs) -> Result<ExitCode> {
    let grid = read_svox(&args.grid)?;
    export_ply(&grid, &PALETTE, &args.out)?;
    println!("{}", args.out.display());
    Ok(ExitCode::SUCCESS)
}
