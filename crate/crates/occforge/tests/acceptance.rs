//! Acceptance suite: every test here checks one of the project's gate
//! properties end to end, against independent oracles where one exists.

use std::time::Instant;

use nalgebra::Point3;
use occforge::attention::{
    cross_view_transform, deformable_image_attention, deformable_self_attention,
    image_conditioned_cross_attention, sinusoidal_pe, volume_self_refs, DeformableCfg,
};
use occforge::autodiff::{
    read_checkpoint_from, write_checkpoint_to, ParamBinder, ParameterStore, Tape,
};
use occforge::config::{ArchConfig, BranchConfig, LossWeights, Preset};
use occforge::geometry::{
    project_point, read_svox_from, unproject_depth, voxelize, write_svox_to, PointCloud,
    VoxelGridSpec,
};
use occforge::losses::{distill_loss, ssc_loss, total_loss, LossTerms};
use occforge::pipeline::{run_student, run_teacher, SceneInput};
use occforge::reference::{
    brute_force_voxelize, naive_bilinear, naive_deformable_query, naive_dense_attention,
    naive_trilinear, NaiveDeformableWeights,
};
use occforge::scenes::{generate_scene, read_scene_from, write_scene_to, SceneOptions};
use occforge::train::{
    curve_csv, evaluate_miou, make_dataset, overfit_accuracy, run_ablation, train_branch,
    AblationConfig, AblationRow, TrainSetup,
};
use occforge::verify::{gradcheck_suite, suite_passes, suite_report};
use occforge::Error;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------- 1: grads

#[test]
fn gradient_suite_passes_within_budget() {
    let t0 = Instant::now();
    let cases = gradcheck_suite(1, Preset::Micro).unwrap();
    assert!(suite_passes(&cases), "failures:\n{}", suite_report(&cases));
    // Covers elementwise, matmul, softmax, sampling, conv, attention blocks,
    // losses, and the end-to-end student loss.
    assert!(cases.iter().any(|c| c.name == "student_e2e"));
    assert!(cases.len() >= 15);
    assert!(t0.elapsed().as_secs() < 120, "gradcheck took {:?}", t0.elapsed());
}

// ------------------------------------------------------ 2: attention oracles

fn naive_weights<'a>(
    store: &'a ParameterStore,
    prefix: &str,
    cfg: DeformableCfg,
    pdim: usize,
) -> NaiveDeformableWeights<'a> {
    let p = |name: &str| &store.get(&format!("{prefix}/{name}")).unwrap().data[..];
    NaiveDeformableWeights {
        d: cfg.d,
        heads: cfg.heads,
        k: cfg.k,
        pdim,
        offset_w: p("offset_w"),
        offset_b: p("offset_b"),
        offset_scale: p("offset_scale"),
        weight_w: p("weight_w"),
        weight_b: p("weight_b"),
        value_w: p("value_w"),
        value_b: p("value_b"),
        out_w: p("out_w"),
        out_b: p("out_b"),
    }
}

#[test]
fn image_cross_attention_matches_naive_oracle() {
    let cfg = DeformableCfg::new(6, 2, 3, false);
    let (h, w, n) = (5, 7, 8);
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + trial);
        let mut store = ParameterStore::new(trial);
        let tape = Tape::new();
        let qdata = rand_vec(&mut rng, n * cfg.d);
        let fdata = rand_vec(&mut rng, cfg.d * h * w);
        let refs: Vec<([f64; 2], bool)> = (0..n)
            .map(|i| ([rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)], i % 4 != 3))
            .collect();
        let out = {
            let mut binder = ParamBinder::new(&mut store, &tape, true);
            let q = tape.constant(qdata.clone(), &[n, cfg.d]);
            let f = tape.constant(fdata.clone(), &[cfg.d, h, w]);
            deformable_image_attention(&mut binder, "dca", cfg, &q, &f, &refs).data()
        };
        let wt = naive_weights(&store, "dca", cfg, 2);
        for i in 0..n {
            let want = naive_deformable_query(
                &wt,
                &qdata[i * cfg.d..(i + 1) * cfg.d],
                &refs[i].0,
                refs[i].1,
                &|pt| naive_bilinear(&fdata, cfg.d, h, w, [pt[0], pt[1]]),
            );
            for j in 0..cfg.d {
                assert!(
                    (out[i * cfg.d + j] - want[j]).abs() < 1e-10,
                    "trial {trial} query {i} chan {j}"
                );
            }
        }
    }
}

#[test]
fn volume_self_attention_matches_naive_oracle() {
    let cfg = DeformableCfg::new(4, 2, 2, false);
    let dims = [3usize, 4, 2];
    let nvox: usize = dims.iter().product();
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + trial);
        let mut store = ParameterStore::new(trial);
        let tape = Tape::new();
        let vdata = rand_vec(&mut rng, nvox * cfg.d);
        let out = {
            let mut binder = ParamBinder::new(&mut store, &tape, true);
            let vol = tape.constant(vdata.clone(), &[dims[0], dims[1], dims[2], cfg.d]);
            deformable_self_attention(&mut binder, "dsa", cfg, &vol).data()
        };
        let wt = naive_weights(&store, "dsa", cfg, 3);
        let refs = volume_self_refs(dims);
        for i in 0..nvox {
            let attended = naive_deformable_query(
                &wt,
                &vdata[i * cfg.d..(i + 1) * cfg.d],
                &refs[i].0,
                true,
                &|pt| naive_trilinear(&vdata, dims, cfg.d, [pt[0], pt[1], pt[2]]),
            );
            for j in 0..cfg.d {
                let want = vdata[i * cfg.d + j] + attended[j];
                assert!(
                    (out[i * cfg.d + j] - want).abs() < 1e-10,
                    "trial {trial} voxel {i} chan {j}"
                );
            }
        }
    }
}

#[test]
fn image_conditioned_refinement_matches_naive_oracle() {
    let cfg = DeformableCfg::new(4, 2, 2, false);
    let (h, w, n) = (4, 4, 7);
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(30_000 + trial);
        let mut store = ParameterStore::new(trial + 7);
        let tape = Tape::new();
        let feats = rand_vec(&mut rng, n * cfg.d);
        let fdata = rand_vec(&mut rng, cfg.d * h * w);
        let refs: Vec<([f64; 2], bool)> = (0..n)
            .map(|i| ([rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)], i % 3 != 2))
            .collect();
        let out = {
            let mut binder = ParamBinder::new(&mut store, &tape, true);
            let f = tape.constant(feats.clone(), &[n, cfg.d]);
            let fm = tape.constant(fdata.clone(), &[cfg.d, h, w]);
            image_conditioned_cross_attention(&mut binder, "icca", cfg, &f, &fm, &refs).data()
        };
        let wt = naive_weights(&store, "icca", cfg, 2);
        for i in 0..n {
            let attended = naive_deformable_query(
                &wt,
                &feats[i * cfg.d..(i + 1) * cfg.d],
                &refs[i].0,
                refs[i].1,
                &|pt| naive_bilinear(&fdata, cfg.d, h, w, [pt[0], pt[1]]),
            );
            for j in 0..cfg.d {
                let want = feats[i * cfg.d + j] + attended[j];
                assert!(
                    (out[i * cfg.d + j] - want).abs() < 1e-10,
                    "trial {trial} row {i} chan {j}"
                );
            }
        }
    }
}

#[test]
fn cross_view_matches_dense_oracle() {
    let (n, d) = (6usize, 4usize);
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(40_000 + trial);
        let mut store = ParameterStore::new(trial + 11);
        let tape = Tape::new();
        let a = rand_vec(&mut rng, n * d);
        let b = rand_vec(&mut rng, n * d);
        let out = {
            let mut binder = ParamBinder::new(&mut store, &tape, true);
            let fa = tape.constant(a.clone(), &[n, d]);
            let fb = tape.constant(b.clone(), &[n, d]);
            cross_view_transform(&mut binder, "cvt", d, false, &[fa, fb]).unwrap()
        };
        let pe = sinusoidal_pe(&tape, n, d).data();
        let addpe = |x: &[f64]| -> Vec<f64> { x.iter().zip(&pe).map(|(v, p)| v + p).collect() };
        let p = |name: &str| &store.get(&format!("cvt/{name}")).unwrap().data[..];
        let fwd = naive_dense_attention(
            &addpe(&b),
            &addpe(&a),
            &a,
            n,
            d,
            p("wq"),
            p("wk"),
            p("wv"),
            p("wo"),
        );
        let bwd = naive_dense_attention(
            &addpe(&a),
            &addpe(&b),
            &b,
            n,
            d,
            p("wq"),
            p("wk"),
            p("wv"),
            p("wo"),
        );
        let (prev, cur) = (out[0].data(), out[1].data());
        for i in 0..n * d {
            assert!((cur[i] - (b[i] + fwd[i])).abs() < 1e-10, "trial {trial} cur {i}");
            assert!((prev[i] - (a[i] + bwd[i])).abs() < 1e-10, "trial {trial} prev {i}");
        }
    }
}

// ------------------------------------------------------ 3: geometry oracles

#[test]
fn voxelization_matches_brute_force_on_random_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..100 {
        let spec = VoxelGridSpec::new(
            [rng.gen_range(-2.0..0.0), rng.gen_range(-2.0..0.0), rng.gen_range(-1.0..0.0)],
            rng.gen_range(0.3..1.2),
            [rng.gen_range(2..6), rng.gen_range(2..6), rng.gen_range(2..5)],
        );
        let n = rng.gen_range(1..200);
        let points: Vec<Point3<f64>> = (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-3.0..4.0),
                    rng.gen_range(-3.0..4.0),
                    rng.gen_range(-2.0..3.0),
                )
            })
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..8)).collect();
        let cloud = PointCloud::labeled(points, labels);
        let fast = voxelize(&cloud, &spec);
        let slow = brute_force_voxelize(&cloud, &spec);
        assert_eq!(fast.occupied, slow.occupied, "trial {trial}: occupancy differs");
        assert_eq!(fast.labels, slow.labels, "trial {trial}: labels differ");
    }
}

#[test]
fn projection_unprojection_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let cam = occforge::geometry::CameraModel::new(
        40.0,
        38.0,
        23.5,
        15.5,
        (32, 48),
        occforge::scenes::rig_extrinsics(Point3::new(0.4, -0.2, 0.3), 0.05),
    )
    .unwrap();
    let mut checked = 0;
    for _ in 0..500 {
        let p = Point3::new(
            rng.gen_range(0.5..8.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-1.0..2.0),
        );
        let proj = project_point(&p, &cam);
        if !proj.valid {
            continue;
        }
        checked += 1;
        let back = cam.center() + cam.pixel_ray(proj.u, proj.v) * proj.depth;
        for a in 0..3 {
            assert!((back[a] - p[a]).abs() < 1e-9, "{back:?} vs {p:?}");
        }
    }
    assert!(checked > 100, "only {checked} valid projections");
}

#[test]
fn rendered_depth_revoxelizes_onto_occupied_voxels() {
    for seed in [1u64, 2, 3] {
        let scene = generate_scene(seed, Preset::Toy, &SceneOptions::default()).unwrap();
        let frame = scene.current_frame();
        let cloud = unproject_depth(&frame.depth, &frame.cam, 1);
        assert!(!cloud.is_empty());
        let spec = &scene.grid.spec;
        let mut hits = 0;
        for p in &cloud.points {
            // Depth is nudged past the voxel boundary, so every unprojected
            // sample must land inside an occupied ground-truth voxel.
            if let Some(idx) = spec.voxel_index(p) {
                hits += 1;
                assert_ne!(
                    scene.grid.labels[spec.linear(idx)],
                    0,
                    "seed {seed}: depth sample {p:?} landed in a free voxel"
                );
            }
        }
        assert!(hits > 0);
    }
}

// -------------------------------------------------------- 4: loss identities

#[test]
fn loss_identities_hold() {
    let tape = Tape::new();

    // Uniform logits over c classes: cross entropy == ln c.
    let c = 7usize;
    let logits = tape.constant(vec![0.42; 5 * c], &[5, c]);
    let ce = ssc_loss(&logits, &[0, 1, 2, 3, 4]);
    assert!((ce.item() - (c as f64).ln()).abs() < 1e-9);

    // Weighted total composes exactly from its terms.
    let term = |v: f64| tape.constant(vec![v], &[1]);
    let terms = LossTerms {
        sem: Some(term(0.7)),
        distill: Some(term(0.3)),
        ssc: Some(term(1.1)),
        scal_sem: Some(term(0.9)),
        scal_geo: Some(term(0.2)),
    };
    let weights = LossWeights::default();
    let bd = total_loss(&tape, terms, &weights).unwrap();
    let want = ((((0.7 * weights.sem) + 0.3 * weights.distill) + 1.1 * weights.ssc)
        + 0.9 * weights.scal_sem)
        + 0.2 * weights.scal_geo;
    assert_eq!(bd.total.item(), want);

    // Self-distillation is exactly zero.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<f64> = (0..8 * 6).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let student = tape.constant(data.clone(), &[8, 6]);
    assert_eq!(distill_loss(&data, &student).unwrap().item(), 0.0);

    // Two-point example: teacher (0.5, 0.5) vs student (0.25, 0.75).
    let student = tape.constant(vec![0.0, 3f64.ln()], &[1, 2]);
    let kl = distill_loss(&[0.0, 0.0], &student).unwrap().item();
    assert!((kl - 0.14384).abs() < 1e-5);
}

// --------------------------------------------------------------- 5: overfit

#[test]
fn student_overfits_single_scene() {
    let t0 = Instant::now();
    let (acc, _) = overfit_accuracy(100, Preset::Toy, 500).unwrap();
    let elapsed = t0.elapsed();
    assert!(acc >= 0.95, "labeled-voxel accuracy {acc} after 500 steps");
    assert!(elapsed.as_secs() < 600, "overfit took {elapsed:?}");
}

// ------------------------------------------------------- 6: ablation trends

#[test]
fn ablation_orderings_are_directional() {
    let rows = run_ablation(&AblationConfig::default()).unwrap();
    let get = |name: &str| rows.iter().find(|r| r.name == name).unwrap();
    let (baseline, aux, icca, both, all) =
        (get("baseline"), get("+aux"), get("+icca"), get("+aux+icca"), get("all"));

    // `worse` must not beat `better` on mean, with at most one seed-level
    // inversion.
    let check = |worse: &AblationRow, better: &AblationRow| {
        assert!(
            better.mean >= worse.mean,
            "{} (mean {:.4}) should not beat {} (mean {:.4})",
            worse.name,
            worse.mean,
            better.name,
            better.mean
        );
        let inversions = worse
            .per_seed
            .iter()
            .zip(&better.per_seed)
            .filter(|(w, b)| w > b)
            .count();
        assert!(
            inversions <= 1,
            "{} vs {}: {} seed inversions",
            worse.name,
            better.name,
            inversions
        );
    };
    check(baseline, aux);
    check(baseline, icca);
    check(aux, all);
    check(icca, all);
    check(both, all); // distillation on top of both components
}

// ----------------------------------------------------------- 7: determinism

#[test]
fn training_artifacts_are_bitwise_deterministic() {
    let data =
        make_dataset(60, 2, Preset::Micro, &SceneOptions { frames: 2, ..Default::default() })
            .unwrap();
    let arch = ArchConfig::for_preset(Preset::Micro);
    let setup =
        TrainSetup { arch: arch.clone(), weights: LossWeights::default(), lr: 3e-3, epochs: 3 };
    let run = || {
        let mut store = ParameterStore::new(21);
        let curve =
            train_branch(&mut store, &data, &BranchConfig::student(), &setup, None, false)
                .unwrap();
        let mut ckpt = Vec::new();
        write_checkpoint_to(&store, &mut ckpt).unwrap();
        let miou =
            evaluate_miou(&mut store, &data, &arch, &BranchConfig::student(), false).unwrap();
        (ckpt, curve_csv(&curve), miou)
    };
    let (ckpt_a, curve_a, miou_a) = run();
    let (ckpt_b, curve_b, miou_b) = run();
    assert_eq!(ckpt_a, ckpt_b);
    assert_eq!(curve_a, curve_b);
    assert_eq!(miou_a.to_bits(), miou_b.to_bits());
}

// ------------------------------------------------------ 8: identity at init

#[test]
fn residual_stages_are_identity_at_init() {
    let scene = generate_scene(31, Preset::Micro, &SceneOptions::default()).unwrap();
    let input = SceneInput::from(&scene);
    let arch = ArchConfig::for_preset(Preset::Micro);
    let tape = Tape::new();
    let mut store = ParameterStore::new(32);
    let mut binder = ParamBinder::new(&mut store, &tape, true);
    let out = run_student(&mut binder, &input, &arch, &BranchConfig::student()).unwrap();
    // Zero-init residual output projections: the refined volume equals the
    // initial volume bitwise, and conditioning changes nothing either.
    assert_eq!(out.refined.data(), out.initial.data());
    assert_eq!(out.conditioned.data(), out.refined.data());
}

#[test]
fn teacher_cvt_is_identity_at_init() {
    let scene =
        generate_scene(33, Preset::Micro, &SceneOptions { frames: 2, ..Default::default() })
            .unwrap();
    let input = SceneInput::from(&scene);
    let arch = ArchConfig::for_preset(Preset::Micro);
    let on = BranchConfig::teacher();
    let off = BranchConfig { cvt: false, ..on.clone() };
    let run = |branch: &BranchConfig| {
        let tape = Tape::new();
        let mut store = ParameterStore::new(34);
        let mut binder = ParamBinder::new(&mut store, &tape, true);
        let out = run_teacher(&mut binder, &input, &arch, branch).unwrap();
        (out.conditioned.data(), out.voxel_logits.data())
    };
    let (cond_on, logits_on) = run(&on);
    let (cond_off, logits_off) = run(&off);
    assert_eq!(cond_on, cond_off);
    assert_eq!(logits_on, logits_off);
}

// ------------------------------------------------------- 9: format roundtrip

#[test]
fn formats_round_trip_bitwise_with_typed_errors() {
    // Scene file.
    let scene =
        generate_scene(41, Preset::Micro, &SceneOptions { frames: 2, ..Default::default() })
            .unwrap();
    let mut buf = Vec::new();
    write_scene_to(&scene, &mut buf).unwrap();
    let reread = read_scene_from(&mut buf.as_slice()).unwrap();
    let mut buf2 = Vec::new();
    write_scene_to(&reread, &mut buf2).unwrap();
    assert_eq!(buf, buf2);

    // Voxel grid.
    let mut gbuf = Vec::new();
    write_svox_to(&scene.grid, &mut gbuf).unwrap();
    let grid = read_svox_from(&mut gbuf.as_slice()).unwrap();
    let mut gbuf2 = Vec::new();
    write_svox_to(&grid, &mut gbuf2).unwrap();
    assert_eq!(gbuf, gbuf2);

    // Checkpoint.
    let mut store = ParameterStore::new(42);
    {
        let tape = Tape::new();
        let mut binder = ParamBinder::new(&mut store, &tape, true);
        let input = SceneInput::from(&scene);
        let arch = ArchConfig::for_preset(Preset::Micro);
        run_student(&mut binder, &input, &arch, &BranchConfig::student()).unwrap();
    }
    let mut cbuf = Vec::new();
    write_checkpoint_to(&store, &mut cbuf).unwrap();
    let restored = read_checkpoint_from(&mut cbuf.as_slice(), 42).unwrap();
    let mut cbuf2 = Vec::new();
    write_checkpoint_to(&restored, &mut cbuf2).unwrap();
    assert_eq!(cbuf, cbuf2);

    // Corrupted headers produce typed errors.
    let mut bad = gbuf.clone();
    bad[0] = b'X';
    assert!(matches!(read_svox_from(&mut bad.as_slice()), Err(Error::BadMagic { .. })));
    let mut bad_ver = gbuf.clone();
    bad_ver[4] = 0xFF;
    assert!(matches!(read_svox_from(&mut bad_ver.as_slice()), Err(Error::BadVersion(_))));
    let truncated = &gbuf[..gbuf.len() / 2];
    assert!(matches!(
        read_svox_from(&mut &truncated[..]),
        Err(Error::Truncated(_) | Error::Io(_))
    ));

    let mut bad_scene = buf.clone();
    bad_scene[0] = b'Z';
    assert!(matches!(read_scene_from(&mut bad_scene.as_slice()), Err(Error::BadMagic { .. })));

    let mut bad_ckpt = cbuf.clone();
    bad_ckpt[0] = b'Q';
    assert!(matches!(
        read_checkpoint_from(&mut bad_ckpt.as_slice(), 42),
        Err(Error::BadMagic { .. })
    ));
}
