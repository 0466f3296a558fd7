//! Finite-difference verification suite covering every differentiable
//! operation plus the end-to-end student loss, runnable from the CLI.

use crate::attention::{
    cross_view_transform, deformable_image_attention, deformable_self_attention, DeformableCfg,
};
use crate::autodiff::{
    bilinear_sample, conv2d, expand_head_scale, fill_volume, grad_check, head_combine,
    kl_from_log_probs, nll_masked, trilinear_sample, upsample_nn3, GradCheckReport, Init,
    ParamBinder, ParameterStore, Tape, Tensor,
};
use crate::config::{ArchConfig, BranchConfig, LossWeights, Preset};
use crate::losses::scal_losses;
use crate::scenes::SceneOptions;
use crate::train::{scene_loss, SceneBundle};
use crate::Result;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: &'static str,
    pub report: GradCheckReport,
}

pub fn suite_passes(cases: &[SuiteCase]) -> bool {
    cases.iter().all(|c| c.report.all_pass())
}

/// Human-readable per-case report lines.
pub fn suite_report(cases: &[SuiteCase]) -> String {
    let mut out = String::new();
    for c in cases {
        let coords: usize = c.report.entries.iter().map(|e| e.checked_coords).sum();
        out.push_str(&format!(
            "{:<22} {:>4} params {:>5} coords  max err {:.3e}  {}\n",
            c.name,
            c.report.entries.len(),
            coords,
            c.report.max_err(),
            if c.report.all_pass() { "ok" } else { "FAIL" }
        ));
        for e in &c.report.entries {
            if !e.pass {
                out.push_str(&format!("    {}: err {:.3e}\n", e.path, e.max_err));
            }
        }
    }
    out
}

/// Fixed non-uniform weights so a sum is sensitive to every coordinate.
fn weighted_sum(t: &Tensor) -> Tensor {
    let n = t.len();
    let w: Vec<f64> = (0..n)
        .map(|i| ((i as u64).wrapping_mul(2654435761) % 1000) as f64 / 1000.0 - 0.45)
        .collect();
    let shape = t.shape().to_vec();
    t.mul(&t.tape().constant(w, &shape)).sum()
}

fn check<F>(seed: u64, cap: Option<usize>, f: F) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &mut ParamBinder) -> Tensor,
{
    let mut store = ParameterStore::new(seed);
    grad_check(f, &mut store, FD_STEP, FD_TOL, cap)
}

/// Run the whole suite. Every case compares tape gradients against central
/// finite differences (step 1e-5) at relative tolerance 1e-4; `preset`
/// selects the scene scale of the end-to-end case.
pub fn gradcheck_suite(seed: u64, preset: Preset) -> Result<Vec<SuiteCase>> {
    let mut cases = Vec::new();
    let mut push = |name: &'static str, report: GradCheckReport| {
        cases.push(SuiteCase { name, report });
    };

    push(
        "arithmetic",
        check(seed, None, |_, b| {
            let a = b.get("a", &[2, 3], Init::Kaiming { fan_in: 3 });
            let c = b.get("c", &[2, 3], Init::Kaiming { fan_in: 3 });
            let x = a.add(&c).mul(&a).sub(&c.scale(0.7)).neg().add_scalar(0.2);
            let q = a.div(&c.exp().add_scalar(0.5));
            weighted_sum(&x).add(&weighted_sum(&q))
        })?,
    );

    push(
        "pointwise",
        check(seed, None, |_, b| {
            // Fixed values keep the relu kink and FD probes apart.
            let data = vec![0.31, -0.42, 0.77, -0.15, 0.58, -0.93];
            let p = b.get("p", &[6], Init::Data(data));
            weighted_sum(&p.relu())
                .add(&weighted_sum(&p.tanh()))
                .add(&weighted_sum(&p.sigmoid()))
                .add(&weighted_sum(&p.exp()))
                .add(&weighted_sum(&p.sigmoid().add_scalar(0.5).ln()))
                .add(&p.mean())
                .add(&p.sum().scale(0.1))
        })?,
    );

    push(
        "matmul",
        check(seed, None, |_, b| {
            let a = b.get("a", &[3, 4], Init::Kaiming { fan_in: 4 });
            let w = b.get("w", &[4, 2], Init::Kaiming { fan_in: 4 });
            let bias = b.get("bias", &[2], Init::Kaiming { fan_in: 4 });
            let nt = b.get("nt", &[2, 4], Init::Kaiming { fan_in: 4 });
            weighted_sum(&a.matmul(&w).add_row(&bias))
                .add(&weighted_sum(&a.matmul_nt(&nt)))
                .add(&weighted_sum(&a.colsum()))
        })?,
    );

    push(
        "softmax",
        check(seed, None, |_, b| {
            let x = b.get("x", &[3, 4], Init::Kaiming { fan_in: 2 });
            weighted_sum(&x.softmax(1)).add(&weighted_sum(&x.log_softmax(1)))
        })?,
    );

    push(
        "layout",
        check(seed, None, |_, b| {
            let x = b.get("x", &[2, 3, 4], Init::Kaiming { fan_in: 4 });
            let nc = x.chw_to_nc();
            let gathered = nc.gather_rows(&[5, 1, 9, 1]);
            weighted_sum(&gathered.reshape(&[2, 4]))
                .add(&weighted_sum(&nc.nc_to_chw(3, 4)))
        })?,
    );

    push(
        "bilinear_sample",
        check(seed, None, |_, b| {
            let fmap = b.get("fmap", &[2, 4, 5], Init::Kaiming { fan_in: 4 });
            // Points clear of cell boundaries (and one outside the map).
            let pts = b.get(
                "pts",
                &[4, 2],
                Init::Data(vec![0.23, 0.61, 0.87, 0.12, 0.44, 0.39, 1.7, 0.5]),
            );
            weighted_sum(&bilinear_sample(&fmap, &pts))
        })?,
    );

    push(
        "trilinear_sample",
        check(seed, None, |_, b| {
            let vol = b.get("vol", &[3, 3, 2, 2], Init::Kaiming { fan_in: 4 });
            let pts = b.get(
                "pts",
                &[3, 3],
                Init::Data(vec![0.23, 0.61, 0.37, 0.81, 0.12, 0.66, 0.44, 0.39, 0.58]),
            );
            weighted_sum(&trilinear_sample(&vol, &pts))
        })?,
    );

    push(
        "conv2d",
        check(seed, None, |_, b| {
            let x = b.get("x", &[2, 4, 4], Init::Kaiming { fan_in: 4 });
            let w1 = b.get("w1", &[3, 2, 3, 3], Init::Kaiming { fan_in: 18 });
            let b1 = b.get("b1", &[3], Init::Zeros);
            let w2 = b.get("w2", &[2, 3, 3, 3], Init::Kaiming { fan_in: 27 });
            let b2 = b.get("b2", &[2], Init::Zeros);
            let y = conv2d(&x, &w1, &b1, 1, 1).tanh();
            weighted_sum(&conv2d(&y, &w2, &b2, 2, 1))
        })?,
    );

    push(
        "heads",
        check(seed, None, |_, b| {
            let (n, heads, k, d, c) = (2usize, 2usize, 3usize, 4usize, 2usize);
            let values = b.get("values", &[n * heads * k, d], Init::Kaiming { fan_in: d });
            let logits = b.get("logits", &[n * heads, k], Init::Kaiming { fan_in: 2 });
            let scale = b.get("scale", &[heads], Init::Const(0.3));
            let offsets = b.get("offsets", &[n, heads * k * c], Init::Kaiming { fan_in: 4 });
            let combined = head_combine(&values, &logits.softmax(1), heads);
            let scaled = offsets.mul(&expand_head_scale(&scale, n, k, c));
            weighted_sum(&combined).add(&weighted_sum(&scaled))
        })?,
    );

    push(
        "fill_upsample",
        check(seed, None, |_, b| {
            let d = 3usize;
            let feats = b.get("feats", &[3, d], Init::Kaiming { fan_in: d });
            let token = b.get("token", &[d], Init::Kaiming { fan_in: d });
            let vol = fill_volume(&feats, &token, &[1, 4, 6], 8).unwrap().reshape(&[2, 2, 2, d]);
            weighted_sum(&upsample_nn3(&vol, 2))
        })?,
    );

    push(
        "nll_kl",
        check(seed, None, |_, b| {
            let x = b.get("x", &[4, 3], Init::Kaiming { fan_in: 2 });
            let lp = x.log_softmax(1);
            let labels = [0u8, 2, 255, 1];
            let t = [0.6, 0.3, 0.1, 0.2, 0.2, 0.6, 0.1, 0.8, 0.1, 0.3, 0.4, 0.3];
            let tl: Vec<f64> = t.iter().map(|p: &f64| p.ln()).collect();
            nll_masked(&lp, &labels, 255).add(&kl_from_log_probs(&t, &tl, &lp))
        })?,
    );

    push(
        "scal",
        check(seed, None, |_, b| {
            // Clear per-row margins keep argmax stable under FD probes.
            let data = vec![
                2.0, -0.4, 0.1, 0.3, 1.6, -0.2, -0.5, 0.2, 1.9, 0.4, -0.8, 0.6, //
                -0.3, 1.2, 0.2, -0.6, 0.8, -0.1, -1.1, 1.5, 0.5, 0.9, -0.7, 0.3,
            ];
            let logits = b.get("logits", &[6, 4], Init::Data(data));
            let (sem, geo) = scal_losses(&logits, &[0, 1, 2, 1, 255, 3]);
            sem.add(&geo)
        })?,
    );

    push(
        "deformable_image",
        check(seed, None, |_, b| {
            let cfg = DeformableCfg::new(4, 2, 2, false);
            let q = b.get("q", &[3, 4], Init::Kaiming { fan_in: 4 });
            let fmap = b.get("fmap", &[4, 4, 5], Init::Kaiming { fan_in: 4 });
            let refs = [([0.23, 0.61], true), ([0.77, 0.31], true), ([0.5, 0.5], false)];
            weighted_sum(&deformable_image_attention(b, "dca", cfg, &q, &fmap, &refs))
        })?,
    );

    push(
        "deformable_volume",
        check(seed, None, |_, b| {
            let cfg = DeformableCfg::new(4, 2, 2, false);
            let vol = b.get("vol", &[2, 2, 2, 4], Init::Kaiming { fan_in: 4 });
            weighted_sum(&deformable_self_attention(b, "dsa", cfg, &vol))
        })?,
    );

    push(
        "cross_view",
        check(seed, None, |_, b| {
            let f0 = b.get("f0", &[4, 4], Init::Kaiming { fan_in: 4 });
            let f1 = b.get("f1", &[4, 4], Init::Kaiming { fan_in: 4 });
            let out = cross_view_transform(b, "cvt", 4, false, &[f0, f1]).unwrap();
            weighted_sum(&out[0]).add(&weighted_sum(&out[1]))
        })?,
    );

    let scene =
        crate::scenes::generate_scene(seed.wrapping_add(41), preset, &SceneOptions::default())?;
    let bundle = SceneBundle::from_scene(&scene)?;
    let arch = ArchConfig::for_preset(preset);
    let branch = BranchConfig::student();
    let weights = LossWeights::default();
    push(
        "student_e2e",
        check(seed, Some(3), move |tape, b| {
            scene_loss(tape, b, &bundle, &arch, &branch, &weights, None, false)
                .unwrap()
                .total
        })?,
    );

    Ok(cases)
}
