//! Training loops for both branches, two-phase distillation, scoring of
//! trained models, the single-scene overfit harness, and the component
//! ablation runner.

use crate::autodiff::{Adam, ParamBinder, ParameterStore, Tape};
use crate::config::{ArchConfig, BranchConfig, LossWeights, Preset};
use crate::eval::compute_miou;
use crate::losses::{
    distill_loss, scal_losses, semantic_aux_loss, ssc_loss, total_loss, LossBreakdown, LossTerms,
};
use crate::pipeline::{argmax_labels, run_student, run_teacher, scaled_camera, SceneInput};
use crate::scenes::{generate_scene, project_labels_to_image, SceneOptions, SyntheticScene};
use crate::Result;

/// One training scene with its supervision: dense voxel labels and sparse
/// 2D labels at feature resolution for the current frame.
#[derive(Clone)]
pub struct SceneBundle {
    pub input: SceneInput,
    pub voxel_labels: Vec<u8>,
    pub pix_labels: Vec<u8>,
}

impl SceneBundle {
    pub fn from_scene(scene: &SyntheticScene) -> Result<Self> {
        let frame = scene.current_frame();
        let feat_cam = scaled_camera(&frame.cam, 4)?;
        let pix_labels = project_labels_to_image(&scene.cloud, &feat_cam);
        Ok(SceneBundle {
            input: SceneInput::from(scene),
            voxel_labels: scene.grid.labels.clone(),
            pix_labels,
        })
    }
}

/// Generate `count` scenes seeded `base_seed..base_seed+count`.
pub fn make_dataset(
    base_seed: u64,
    count: usize,
    preset: Preset,
    opts: &SceneOptions,
) -> Result<Vec<SceneBundle>> {
    (0..count)
        .map(|i| SceneBundle::from_scene(&generate_scene(base_seed + i as u64, preset, opts)?))
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct CurveRow {
    pub step: usize,
    /// sem, distill, ssc, scal_sem, scal_geo, total.
    pub values: [f64; 6],
}

/// Loss-curve CSV, one row per optimizer step.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("step,sem,distill,ssc,scal_sem,scal_geo,total\n");
    for r in rows {
        let v = r.values;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step, v[0], v[1], v[2], v[3], v[4], v[5]
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainSetup {
    pub arch: ArchConfig,
    pub weights: LossWeights,
    pub lr: f64,
    pub epochs: usize,
}

fn branch_forward(
    binder: &mut ParamBinder,
    bundle: &SceneBundle,
    arch: &ArchConfig,
    branch: &BranchConfig,
    is_teacher: bool,
) -> Result<(crate::autodiff::Tensor, crate::autodiff::Tensor, Option<crate::autodiff::Tensor>)> {
    if is_teacher {
        let out = run_teacher(binder, &bundle.input, arch, branch)?;
        Ok((out.conditioned, out.voxel_logits, out.sem2d))
    } else {
        let out = run_student(binder, &bundle.input, arch, branch)?;
        Ok((out.conditioned, out.voxel_logits, out.sem2d))
    }
}

/// Forward one scene and assemble the weighted loss respecting the branch
/// toggles. `teacher_target` is the detached `[v, d]` teacher volume.
pub fn scene_loss(
    tape: &Tape,
    binder: &mut ParamBinder,
    bundle: &SceneBundle,
    arch: &ArchConfig,
    branch: &BranchConfig,
    weights: &LossWeights,
    teacher_target: Option<&[f64]>,
    is_teacher: bool,
) -> Result<LossBreakdown> {
    let (conditioned, voxel_logits, sem2d) =
        branch_forward(binder, bundle, arch, branch, is_teacher)?;
    let shape = voxel_logits.shape().to_vec();
    let v = shape[0] * shape[1] * shape[2];
    let logits = voxel_logits.reshape(&[v, arch.num_classes]);
    let (scal_sem, scal_geo) = scal_losses(&logits, &bundle.voxel_labels);
    let distill = match (branch.distill, teacher_target) {
        (true, Some(target)) => {
            let d = conditioned.shape()[3];
            let nv = conditioned.shape().iter().take(3).product::<usize>();
            Some(distill_loss(target, &conditioned.reshape(&[nv, d]))?)
        }
        _ => None,
    };
    let terms = LossTerms {
        sem: sem2d.as_ref().map(|s| semantic_aux_loss(s, &bundle.pix_labels)),
        distill,
        ssc: Some(ssc_loss(&logits, &bundle.voxel_labels)),
        scal_sem: Some(scal_sem),
        scal_geo: Some(scal_geo),
    };
    total_loss(tape, terms, weights)
}

/// One optimizer step per scene per epoch, scenes in dataset order.
/// `teacher_targets` (student only) must align 1:1 with `data`.
pub fn train_branch(
    store: &mut ParameterStore,
    data: &[SceneBundle],
    branch: &BranchConfig,
    setup: &TrainSetup,
    teacher_targets: Option<&[Vec<f64>]>,
    is_teacher: bool,
) -> Result<Vec<CurveRow>> {
    if let Some(ts) = teacher_targets {
        assert_eq!(ts.len(), data.len(), "one teacher target per scene");
    }
    let mut adam = Adam::with_lr(setup.lr)?;
    let mut curve = Vec::with_capacity(setup.epochs * data.len());
    let mut step = 0usize;
    for epoch in 0..setup.epochs {
        for (i, bundle) in data.iter().enumerate() {
            let tape = Tape::new();
            let mut binder = ParamBinder::new(store, &tape, true);
            let target = teacher_targets.map(|ts| &ts[i][..]);
            let bd = scene_loss(
                &tape,
                &mut binder,
                bundle,
                &setup.arch,
                branch,
                &setup.weights,
                target,
                is_teacher,
            )?;
            tape.backward(&bd.total)?;
            let grads = binder.grads();
            let values = bd.values();
            drop(binder);
            adam.step(store, &grads)?;
            curve.push(CurveRow { step, values });
            log::debug!("epoch {epoch} scene {i} total {}", values[5]);
            step += 1;
        }
    }
    Ok(curve)
}

/// Detached conditioned teacher volumes (`[v, d]` row-major data), one per
/// scene, computed with frozen parameters.
pub fn teacher_targets(
    store: &mut ParameterStore,
    data: &[SceneBundle],
    arch: &ArchConfig,
    branch: &BranchConfig,
) -> Result<Vec<Vec<f64>>> {
    data.iter()
        .map(|bundle| {
            let tape = Tape::new();
            let mut binder = ParamBinder::new(store, &tape, false);
            let (conditioned, _, _) = branch_forward(&mut binder, bundle, arch, branch, true)?;
            Ok(conditioned.data())
        })
        .collect()
}

/// Argmax voxel labels from a frozen model.
pub fn predict_voxels(
    store: &mut ParameterStore,
    bundle: &SceneBundle,
    arch: &ArchConfig,
    branch: &BranchConfig,
    is_teacher: bool,
) -> Result<Vec<u8>> {
    let tape = Tape::new();
    let mut binder = ParamBinder::new(store, &tape, false);
    let (_, voxel_logits, _) = branch_forward(&mut binder, bundle, arch, branch, is_teacher)?;
    Ok(argmax_labels(&voxel_logits.data(), arch.num_classes))
}

pub fn voxel_accuracy(pred: &[u8], gt: &[u8]) -> f64 {
    assert_eq!(pred.len(), gt.len());
    let mut hit = 0usize;
    let mut total = 0usize;
    for (&p, &g) in pred.iter().zip(gt) {
        if g == crate::geometry::IGNORE_LABEL {
            continue;
        }
        total += 1;
        hit += (p == g) as usize;
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Mean semantic mIoU of a frozen model over a dataset.
pub fn evaluate_miou(
    store: &mut ParameterStore,
    data: &[SceneBundle],
    arch: &ArchConfig,
    branch: &BranchConfig,
    is_teacher: bool,
) -> Result<f64> {
    let mut acc = 0.0;
    for bundle in data {
        let pred = predict_voxels(store, bundle, arch, branch, is_teacher)?;
        acc += compute_miou(&pred, &bundle.voxel_labels, arch.num_classes).miou;
    }
    Ok(acc / data.len() as f64)
}

pub struct DistillOutcome {
    pub teacher: ParameterStore,
    pub student: ParameterStore,
    pub teacher_curve: Vec<CurveRow>,
    pub student_curve: Vec<CurveRow>,
}

/// Two-phase distillation: train the teacher on temporal inputs, freeze it,
/// record its volumes as targets, then train the student against them.
pub fn train_distill(
    teacher_seed: u64,
    student_seed: u64,
    data: &[SceneBundle],
    student_branch: &BranchConfig,
    teacher_branch: &BranchConfig,
    setup: &TrainSetup,
    teacher_epochs: usize,
) -> Result<DistillOutcome> {
    let mut teacher = ParameterStore::new(teacher_seed);
    let teacher_setup = TrainSetup { epochs: teacher_epochs, ..setup.clone() };
    let teacher_curve =
        train_branch(&mut teacher, data, teacher_branch, &teacher_setup, None, true)?;
    let targets = teacher_targets(&mut teacher, data, &setup.arch, teacher_branch)?;
    let mut student = ParameterStore::new(student_seed);
    let branch = BranchConfig { distill: true, ..student_branch.clone() };
    let student_curve =
        train_branch(&mut student, data, &branch, setup, Some(&targets), false)?;
    Ok(DistillOutcome { teacher, student, teacher_curve, student_curve })
}

/// Single-scene overfit harness: train a student with every component on
/// (including distillation against a briefly trained teacher) and report
/// final labeled-voxel accuracy on that same scene.
pub fn overfit_accuracy(seed: u64, preset: Preset, steps: usize) -> Result<(f64, ParameterStore)> {
    let scene = generate_scene(seed, preset, &SceneOptions { frames: 2, ..Default::default() })?;
    let data = vec![SceneBundle::from_scene(&scene)?];
    let arch = ArchConfig::for_preset(preset);
    let setup = TrainSetup {
        arch: arch.clone(),
        weights: LossWeights::default(),
        lr: 3e-3,
        epochs: steps,
    };
    let out = train_distill(
        seed ^ 0x7e5c,
        seed,
        &data,
        &BranchConfig::student(),
        &BranchConfig::teacher(),
        &setup,
        steps.min(50),
    )?;
    let mut student = out.student;
    let pred = predict_voxels(&mut student, &data[0], &arch, &BranchConfig { distill: true, ..BranchConfig::student() }, false)?;
    Ok((voxel_accuracy(&pred, &data[0].voxel_labels), student))
}

#[derive(Clone, Debug)]
pub struct AblationConfig {
    pub preset: Preset,
    pub seeds: Vec<u64>,
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub epochs: usize,
    pub teacher_epochs: usize,
    pub lr: f64,
    pub weights: LossWeights,
    pub depth_noise: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        // Depth noise is what makes the image-conditioned components (and the
        // privileged teacher) earn their keep: with clean depth the baseline
        // saturates and the component orderings wash out.
        AblationConfig {
            preset: Preset::Toy,
            seeds: vec![0, 1, 2],
            train_scenes: 6,
            val_scenes: 10,
            epochs: 15,
            teacher_epochs: 15,
            lr: 3e-3,
            weights: LossWeights::default(),
            depth_noise: 0.4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub name: &'static str,
    pub aux: bool,
    pub icca: bool,
    pub distill: bool,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

/// Component rows matching the standard ablation layout: a bare baseline,
/// each component alone, both, then everything plus distillation.
pub const ABLATION_ROWS: [(&str, bool, bool, bool); 5] = [
    ("baseline", false, false, false),
    ("+aux", true, false, false),
    ("+icca", false, true, false),
    ("+aux+icca", true, true, false),
    ("all", true, true, true),
];

/// Train every toggle row with every seed on a shared dataset and score
/// mean mIoU on a fixed validation set.
pub fn run_ablation(cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    let opts = SceneOptions { frames: 2, depth_noise: cfg.depth_noise, ..Default::default() };
    let train_data = make_dataset(1_000, cfg.train_scenes, cfg.preset, &opts)?;
    let val_data = make_dataset(777_000, cfg.val_scenes, cfg.preset, &opts)?;
    let arch = ArchConfig::for_preset(cfg.preset);
    let setup = TrainSetup {
        arch: arch.clone(),
        weights: cfg.weights,
        lr: cfg.lr,
        epochs: cfg.epochs,
    };

    // One trained teacher per seed, shared by every distilling row.
    let mut teacher_targets_by_seed = Vec::new();
    if ABLATION_ROWS.iter().any(|r| r.3) {
        for &seed in &cfg.seeds {
            let mut teacher = ParameterStore::new(seed ^ 0x7e5c);
            let tsetup = TrainSetup { epochs: cfg.teacher_epochs, ..setup.clone() };
            train_branch(&mut teacher, &train_data, &BranchConfig::teacher(), &tsetup, None, true)?;
            teacher_targets_by_seed
                .push(teacher_targets(&mut teacher, &train_data, &arch, &BranchConfig::teacher())?);
        }
    }

    let mut rows = Vec::new();
    for &(name, aux, icca, distill) in &ABLATION_ROWS {
        let branch = BranchConfig {
            aux_loss: aux,
            icca,
            distill,
            ..BranchConfig::student()
        };
        let mut per_seed = Vec::new();
        for (si, &seed) in cfg.seeds.iter().enumerate() {
            let mut store = ParameterStore::new(seed);
            let targets = if distill { Some(&teacher_targets_by_seed[si][..]) } else { None };
            train_branch(&mut store, &train_data, &branch, &setup, targets, false)?;
            let miou = evaluate_miou(&mut store, &val_data, &arch, &branch, false)?;
            log::info!("ablation row {name} seed {seed}: mIoU {miou:.4}");
            per_seed.push(miou);
        }
        let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        let var = per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / per_seed.len() as f64;
        rows.push(AblationRow { name, aux, icca, distill, per_seed, mean, sd: var.sqrt() });
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("row,aux,icca,distill,mean_miou,sd,per_seed\n");
    for r in rows {
        let per: Vec<String> = r.per_seed.iter().map(|v| format!("{v}")).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.name,
            r.aux,
            r.icca,
            r.distill,
            r.mean,
            r.sd,
            per.join(";")
        ));
    }
    out
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut out = String::from("| row | aux | icca | distill | mIoU (mean ± sd) |\n|---|---|---|---|---|\n");
    for r in rows {
        let mark = |b: bool| if b { "x" } else { " " };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {:.4} ± {:.4} |\n",
            r.name,
            mark(r.aux),
            mark(r.icca),
            mark(r.distill),
            r.mean,
            r.sd
        ));
    }
    out
}
