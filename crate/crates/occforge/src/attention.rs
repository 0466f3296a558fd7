//! Attention blocks on the tape: deformable cross/self attention over image
//! maps and voxel volumes, image-conditioned cross attention, and a dense
//! cross-view block mixing temporal frame features.
//!
//! All blocks bind their parameters lazily through a `ParamBinder` under a
//! caller-supplied path prefix, so the same prefix shares weights.

use crate::autodiff::{
    bilinear_sample, expand_head_scale, head_combine, trilinear_sample, Init, ParamBinder, Tensor,
};
use crate::{Error, Result};

/// Shape constants for one deformable attention block.
#[derive(Clone, Copy, Debug)]
pub struct DeformableCfg {
    /// Feature width; must be divisible by `heads`.
    pub d: usize,
    pub heads: usize,
    /// Sample points per head.
    pub k: usize,
    /// Zero-init the output projection so residual blocks start as identity.
    pub zero_init_out: bool,
}

impl DeformableCfg {
    pub fn new(d: usize, heads: usize, k: usize, zero_init_out: bool) -> Self {
        assert!(d % heads == 0, "feature width must be divisible by head count");
        DeformableCfg { d, heads, k, zero_init_out }
    }
}

struct DeformableParams {
    offset_w: Tensor,
    offset_b: Tensor,
    offset_scale: Tensor,
    weight_w: Tensor,
    weight_b: Tensor,
    value_w: Tensor,
    value_b: Tensor,
    out_w: Tensor,
    out_b: Tensor,
}

fn bind_deformable(
    binder: &mut ParamBinder,
    prefix: &str,
    cfg: DeformableCfg,
    pdim: usize,
) -> DeformableParams {
    let (d, hk) = (cfg.d, cfg.heads * cfg.k);
    let kai = || Init::Kaiming { fan_in: d };
    DeformableParams {
        offset_w: binder.get(&format!("{prefix}/offset_w"), &[d, hk * pdim], kai()),
        offset_b: binder.get(&format!("{prefix}/offset_b"), &[hk * pdim], Init::Zeros),
        // Small scale keeps initial samples near the reference point.
        offset_scale: binder.get(&format!("{prefix}/offset_scale"), &[cfg.heads], Init::Const(0.01)),
        weight_w: binder.get(&format!("{prefix}/weight_w"), &[d, hk], kai()),
        weight_b: binder.get(&format!("{prefix}/weight_b"), &[hk], Init::Zeros),
        value_w: binder.get(&format!("{prefix}/value_w"), &[d, d], kai()),
        value_b: binder.get(&format!("{prefix}/value_b"), &[d], Init::Zeros),
        out_w: binder.get(
            &format!("{prefix}/out_w"),
            &[d, d],
            if cfg.zero_init_out { Init::Zeros } else { kai() },
        ),
        out_b: binder.get(&format!("{prefix}/out_b"), &[d], Init::Zeros),
    }
}

/// Core deformable attention: per query and head, predict `k` offsets around
/// its reference point, sample the feature source there, value-project,
/// mix with a per-head softmax, concatenate heads, output-project. Queries
/// with an invalid reference point produce all zeros.
///
/// `refs` gives one normalized reference point (plus validity) per query;
/// `pdim` is 2 when sampling an image map, 3 when sampling a volume.
fn deformable_core(
    queries: &Tensor,
    refs: &[(Vec<f64>, bool)],
    pdim: usize,
    cfg: DeformableCfg,
    params: &DeformableParams,
    sample: impl Fn(&Tensor) -> Tensor,
) -> Tensor {
    let tape = queries.tape().clone();
    let n = queries.shape()[0];
    assert_eq!(refs.len(), n, "one reference point per query");
    let (heads, k, d) = (cfg.heads, cfg.k, cfg.d);
    let hk = heads * k;

    let offsets_raw = queries.matmul(&params.offset_w).add_row(&params.offset_b);
    let scaled = offsets_raw.mul(&expand_head_scale(&params.offset_scale, n, k, pdim));

    // Expand each query's reference point across its heads*k sample slots.
    let mut ref_expand = Vec::with_capacity(n * hk * pdim);
    let mut mask = Vec::with_capacity(n * d);
    for (r, valid) in refs {
        assert_eq!(r.len(), pdim);
        for _ in 0..hk {
            for a in 0..pdim {
                ref_expand.push(if *valid { r[a] } else { 0.0 });
            }
        }
        mask.extend(std::iter::repeat(if *valid { 1.0 } else { 0.0 }).take(d));
    }
    let ref_t = tape.constant(ref_expand, &[n * hk, pdim]);
    let points = scaled.reshape(&[n * hk, pdim]).add(&ref_t);

    let sampled = sample(&points);
    let valued = sampled.matmul(&params.value_w).add_row(&params.value_b);

    let logits = queries.matmul(&params.weight_w).add_row(&params.weight_b);
    let weights = logits.reshape(&[n * heads, k]).softmax(1);

    let combined = head_combine(&valued, &weights, heads);
    let out = combined.matmul(&params.out_w).add_row(&params.out_b);
    out.mul(&tape.constant(mask, &[n, d]))
}

/// Deformable cross attention from volume queries into a `[d, h, w]` image
/// feature map. `refs` are `(u, v)` in [0,1]^2 with a validity flag from
/// projecting each query's voxel centroid.
pub fn deformable_image_attention(
    binder: &mut ParamBinder,
    prefix: &str,
    cfg: DeformableCfg,
    queries: &Tensor,
    feature_map: &Tensor,
    refs: &[([f64; 2], bool)],
) -> Tensor {
    let params = bind_deformable(binder, prefix, cfg, 2);
    let refs: Vec<(Vec<f64>, bool)> = refs.iter().map(|(r, v)| (r.to_vec(), *v)).collect();
    let fmap = feature_map.clone();
    deformable_core(queries, &refs, 2, cfg, &params, move |pts| bilinear_sample(&fmap, pts))
}

/// Temporal aggregation: run image attention against every frame with shared
/// weights and average the results.
pub fn temporal_image_attention(
    binder: &mut ParamBinder,
    prefix: &str,
    cfg: DeformableCfg,
    queries: &Tensor,
    frames: &[(&Tensor, Vec<([f64; 2], bool)>)],
) -> Result<Tensor> {
    if frames.is_empty() {
        return Err(Error::InvalidArg("temporal attention needs at least one frame".into()));
    }
    let mut acc: Option<Tensor> = None;
    for (fmap, refs) in frames {
        let out = deformable_image_attention(binder, prefix, cfg, queries, fmap, refs);
        acc = Some(match acc {
            Some(a) => a.add(&out),
            None => out,
        });
    }
    Ok(acc.unwrap().scale(1.0 / frames.len() as f64))
}

/// Normalized self-reference coordinates of every voxel in an
/// `[dims[0], dims[1], dims[2]]` grid, matching the volume sampling
/// convention (axis extent 1 maps to coordinate 0).
pub fn volume_self_refs(dims: [usize; 3]) -> Vec<(Vec<f64>, bool)> {
    let mut refs = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let norm = |i: usize, n: usize| if n <= 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                refs.push((vec![norm(x, dims[0]), norm(y, dims[1]), norm(z, dims[2])], true));
            }
        }
    }
    refs
}

/// Residual deformable self attention over a `[x, y, z, d]` feature volume:
/// every voxel attends to offset-sampled locations around itself.
pub fn deformable_self_attention(
    binder: &mut ParamBinder,
    prefix: &str,
    cfg: DeformableCfg,
    volume: &Tensor,
) -> Tensor {
    let shape = volume.shape().to_vec();
    assert_eq!(shape.len(), 4, "expected [x, y, z, d] volume");
    let dims = [shape[0], shape[1], shape[2]];
    let n = dims[0] * dims[1] * dims[2];
    let queries = volume.reshape(&[n, shape[3]]);
    let params = bind_deformable(binder, prefix, cfg, 3);
    let refs = volume_self_refs(dims);
    let vol = volume.clone();
    let out =
        deformable_core(&queries, &refs, 3, cfg, &params, move |pts| trilinear_sample(&vol, pts));
    queries.add(&out).reshape(&shape)
}

/// Residual image-conditioned cross attention: voxel features re-query the
/// image map at their projected locations. Voxels projecting outside the
/// image pass through unchanged.
pub fn image_conditioned_cross_attention(
    binder: &mut ParamBinder,
    prefix: &str,
    cfg: DeformableCfg,
    voxel_features: &Tensor,
    feature_map: &Tensor,
    refs: &[([f64; 2], bool)],
) -> Tensor {
    let out = deformable_image_attention(binder, prefix, cfg, voxel_features, feature_map, refs);
    voxel_features.add(&out)
}

/// Fixed sinusoidal position encoding over `n` flattened positions with `d`
/// channels: even channels sine, odd channels cosine, geometric frequencies.
pub fn sinusoidal_pe(tape: &crate::autodiff::Tape, n: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; n * d];
    for pos in 0..n {
        for j in 0..d {
            let freq = 1.0 / 10000f64.powf(2.0 * (j / 2) as f64 / d as f64);
            let angle = pos as f64 * freq;
            data[pos * d + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    tape.constant(data, &[n, d])
}

/// One dense single-head attention pass: queries from `q_in`, keys/values
/// from `kv_in`, all `[n, d]`; returns the output projection (no residual).
fn dense_attention(
    binder: &mut ParamBinder,
    prefix: &str,
    d: usize,
    zero_init_out: bool,
    q_in: &Tensor,
    k_in: &Tensor,
    v_in: &Tensor,
) -> Tensor {
    let kai = || Init::Kaiming { fan_in: d };
    let wq = binder.get(&format!("{prefix}/wq"), &[d, d], kai());
    let wk = binder.get(&format!("{prefix}/wk"), &[d, d], kai());
    let wv = binder.get(&format!("{prefix}/wv"), &[d, d], kai());
    let wo = binder.get(
        &format!("{prefix}/wo"),
        &[d, d],
        if zero_init_out { Init::Zeros } else { kai() },
    );
    let q = q_in.matmul(&wq);
    let k = k_in.matmul(&wk);
    let v = v_in.matmul(&wv);
    let att = q.matmul_nt(&k).scale(1.0 / (d as f64).sqrt()).softmax(1);
    att.matmul(&v).matmul(&wo)
}

/// Cross-view mixing of temporal frame features, each `[n, d]` flattened
/// spatial positions, oldest first. Adjacent frames exchange information
/// bidirectionally (position encoding is added to queries and keys only),
/// updating in place chronologically. A single frame is returned untouched,
/// and the zero-initialized output projection makes the whole block an
/// identity at initialization.
pub fn cross_view_transform(
    binder: &mut ParamBinder,
    prefix: &str,
    d: usize,
    zero_init_out: bool,
    frames: &[Tensor],
) -> Result<Vec<Tensor>> {
    if frames.is_empty() {
        return Err(Error::InvalidArg("cross-view block needs at least one frame".into()));
    }
    let n = frames[0].shape()[0];
    let tape = frames[0].tape().clone();
    let pe = sinusoidal_pe(&tape, n, d);
    let mut out: Vec<Tensor> = frames.to_vec();
    for t in 1..out.len() {
        let (prev, cur) = (out[t - 1].clone(), out[t].clone());
        let prev_pe = prev.add(&pe);
        let cur_pe = cur.add(&pe);
        let fwd = dense_attention(binder, prefix, d, zero_init_out, &cur_pe, &prev_pe, &prev);
        let bwd = dense_attention(binder, prefix, d, zero_init_out, &prev_pe, &cur_pe, &cur);
        out[t] = cur.add(&fwd);
        out[t - 1] = prev.add(&bwd);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, ParameterStore, Tape};
    use crate::reference::{
        naive_bilinear, naive_deformable_query, naive_dense_attention, naive_trilinear,
        NaiveDeformableWeights,
    };
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

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
    fn image_attention_matches_naive_oracle() {
        let cfg = DeformableCfg::new(6, 2, 3, false);
        let (h, w, n) = (5, 7, 9);
        for trial in 0..25u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let mut store = ParameterStore::new(trial);
            let tape = Tape::new();
            let qdata = rand_vec(&mut rng, n * cfg.d);
            let fdata = rand_vec(&mut rng, cfg.d * h * w);
            let refs: Vec<([f64; 2], bool)> = (0..n)
                .map(|i| ([rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)], i % 4 != 3))
                .collect();
            let out = {
                let mut binder = crate::autodiff::ParamBinder::new(&mut store, &tape, true);
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
                        "trial {trial} query {i} chan {j}: {} vs {}",
                        out[i * cfg.d + j],
                        want[j]
                    );
                }
            }
        }
    }

    #[test]
    fn volume_attention_matches_naive_oracle() {
        let cfg = DeformableCfg::new(4, 2, 2, false);
        let dims = [3usize, 4, 2];
        let nvox = dims.iter().product::<usize>();
        for trial in 0..25u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + trial);
            let mut store = ParameterStore::new(trial);
            let tape = Tape::new();
            let vdata = rand_vec(&mut rng, nvox * cfg.d);
            let (input, out) = {
                let mut binder = crate::autodiff::ParamBinder::new(&mut store, &tape, true);
                let vol = tape.constant(vdata.clone(), &[dims[0], dims[1], dims[2], cfg.d]);
                let out = deformable_self_attention(&mut binder, "dsa", cfg, &vol);
                (vdata.clone(), out.data())
            };
            let wt = naive_weights(&store, "dsa", cfg, 3);
            let refs = volume_self_refs(dims);
            for i in 0..nvox {
                let attended = naive_deformable_query(
                    &wt,
                    &input[i * cfg.d..(i + 1) * cfg.d],
                    &refs[i].0,
                    true,
                    &|pt| naive_trilinear(&vdata, dims, cfg.d, [pt[0], pt[1], pt[2]]),
                );
                for j in 0..cfg.d {
                    let want = input[i * cfg.d + j] + attended[j];
                    assert!(
                        (out[i * cfg.d + j] - want).abs() < 1e-10,
                        "trial {trial} voxel {i} chan {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn residual_blocks_are_identity_at_init() {
        let cfg = DeformableCfg::new(4, 2, 2, true);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParameterStore::new(0);
        let tape = Tape::new();
        let mut binder = crate::autodiff::ParamBinder::new(&mut store, &tape, true);
        let vdata = rand_vec(&mut rng, 2 * 2 * 2 * cfg.d);
        let vol = tape.constant(vdata.clone(), &[2, 2, 2, cfg.d]);
        let dsa = deformable_self_attention(&mut binder, "dsa", cfg, &vol);
        assert_eq!(dsa.data(), vdata);

        let fdata = rand_vec(&mut rng, cfg.d * 4 * 4);
        let fmap = tape.constant(fdata, &[cfg.d, 4, 4]);
        let feats = tape.constant(rand_vec(&mut rng, 8 * cfg.d), &[8, cfg.d]);
        let refs: Vec<([f64; 2], bool)> = (0..8).map(|i| ([0.3, 0.6], i % 2 == 0)).collect();
        let icca = image_conditioned_cross_attention(&mut binder, "icca", cfg, &feats, &fmap, &refs);
        assert_eq!(icca.data(), feats.data());
    }

    #[test]
    fn invalid_refs_pass_through_residual_unchanged() {
        // Even with non-zero output projection, masked-out queries keep
        // their input value through the residual.
        let cfg = DeformableCfg::new(4, 2, 2, false);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParameterStore::new(3);
        let tape = Tape::new();
        let mut binder = crate::autodiff::ParamBinder::new(&mut store, &tape, true);
        let fmap = tape.constant(rand_vec(&mut rng, cfg.d * 4 * 4), &[cfg.d, 4, 4]);
        let fdata = rand_vec(&mut rng, 6 * cfg.d);
        let feats = tape.constant(fdata.clone(), &[6, cfg.d]);
        let refs: Vec<([f64; 2], bool)> = (0..6).map(|i| ([0.4, 0.4], i < 3)).collect();
        let out = image_conditioned_cross_attention(&mut binder, "icca", cfg, &feats, &fmap, &refs);
        let out = out.data();
        for i in 3..6 {
            for j in 0..cfg.d {
                assert_eq!(out[i * cfg.d + j], fdata[i * cfg.d + j]);
            }
        }
        assert_ne!(out[..cfg.d], fdata[..cfg.d]);
    }

    #[test]
    fn temporal_attention_averages_frames() {
        let cfg = DeformableCfg::new(4, 2, 2, false);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParameterStore::new(4);
        let tape = Tape::new();
        let q = tape.constant(rand_vec(&mut rng, 5 * cfg.d), &[5, cfg.d]);
        let f1 = tape.constant(rand_vec(&mut rng, cfg.d * 4 * 4), &[cfg.d, 4, 4]);
        let f2 = tape.constant(rand_vec(&mut rng, cfg.d * 4 * 4), &[cfg.d, 4, 4]);
        let refs: Vec<([f64; 2], bool)> =
            (0..5).map(|_| ([rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)], true)).collect();
        let mut binder = crate::autodiff::ParamBinder::new(&mut store, &tape, true);
        let a = deformable_image_attention(&mut binder, "t", cfg, &q, &f1, &refs).data();
        let b = deformable_image_attention(&mut binder, "t", cfg, &q, &f2, &refs).data();
        let frames = vec![(&f1, refs.clone()), (&f2, refs.clone())];
        let avg = temporal_image_attention(&mut binder, "t", cfg, &q, &frames).unwrap().data();
        for i in 0..avg.len() {
            assert!((avg[i] - 0.5 * (a[i] + b[i])).abs() < 1e-12);
        }
        assert!(temporal_image_attention(&mut binder, "t", cfg, &q, &[]).is_err());
    }

    #[test]
    fn cross_view_matches_dense_oracle() {
        let d = 4;
        let n = 6;
        for trial in 0..25u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + trial);
            let mut store = ParameterStore::new(trial + 50);
            let tape = Tape::new();
            let a = rand_vec(&mut rng, n * d);
            let b = rand_vec(&mut rng, n * d);
            let out = {
                let mut binder = crate::autodiff::ParamBinder::new(&mut store, &tape, true);
                let fa = tape.constant(a.clone(), &[n, d]);
                let fb = tape.constant(b.clone(), &[n, d]);
                cross_view_transform(&mut binder, "cvt", d, false, &[fa, fb]).unwrap()
            };
            let pe = sinusoidal_pe(&tape, n, d).data();
            let addpe = |x: &[f64]| -> Vec<f64> {
                x.iter().zip(&pe).map(|(v, p)| v + p).collect()
            };
            let p = |name: &str| &store.get(&format!("cvt/{name}")).unwrap().data[..];
            let fwd = naive_dense_attention(
                &addpe(&b), &addpe(&a), &a, n, d, p("wq"), p("wk"), p("wv"), p("wo"),
            );
            let bwd = naive_dense_attention(
                &addpe(&a), &addpe(&b), &b, n, d, p("wq"), p("wk"), p("wv"), p("wo"),
            );
            let (got_prev, got_cur) = (out[0].data(), out[1].data());
            for i in 0..n * d {
                assert!((got_cur[i] - (b[i] + fwd[i])).abs() < 1e-10, "trial {trial} cur {i}");
                assert!((got_prev[i] - (a[i] + bwd[i])).abs() < 1e-10, "trial {trial} prev {i}");
            }
        }
    }

    #[test]
    fn cross_view_identity_cases() {
        let d = 4;
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut store = ParameterStore::new(7);
        let tape = Tape::new();
        let mut binder = crate::autodiff::ParamBinder::new(&mut store, &tape, true);
        let a = rand_vec(&mut rng, n * d);
        let fa = tape.constant(a.clone(), &[n, d]);
        // Single frame: untouched.
        let single = cross_view_transform(&mut binder, "cvt", d, false, &[fa.clone()]).unwrap();
        assert_eq!(single[0].data(), a);
        // Zero-init output projection: bitwise identity even with two frames.
        let b = rand_vec(&mut rng, n * d);
        let fb = tape.constant(b.clone(), &[n, d]);
        let out = cross_view_transform(&mut binder, "cvt0", d, true, &[fa, fb]).unwrap();
        assert_eq!(out[0].data(), a);
        assert_eq!(out[1].data(), b);
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let cfg = DeformableCfg::new(4, 2, 2, false);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let qdata = rand_vec(&mut rng, 4 * cfg.d);
        let fdata = rand_vec(&mut rng, cfg.d * 5 * 5);
        let refs: Vec<([f64; 2], bool)> = (0..4)
            .map(|i| ([rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)], i != 2))
            .collect();
        let mut store = ParameterStore::new(9);
        let report = grad_check(
            |tape, binder| {
                let q = tape.constant(qdata.clone(), &[4, cfg.d]);
                let f = tape.constant(fdata.clone(), &[cfg.d, 5, 5]);
                deformable_image_attention(binder, "dca", cfg, &q, &f, &refs).sum()
            },
            &mut store,
            1e-5,
            1e-6,
            None,
        )
        .unwrap();
        assert!(report.all_pass(), "max err {}", report.max_err());
    }

    #[test]
    fn cross_view_gradients_match_finite_differences() {
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let a = rand_vec(&mut rng, 3 * d);
        let b = rand_vec(&mut rng, 3 * d);
        let mut store = ParameterStore::new(11);
        let report = grad_check(
            |tape, binder| {
                let fa = tape.constant(a.clone(), &[3, d]);
                let fb = tape.constant(b.clone(), &[3, d]);
                let out = cross_view_transform(binder, "cvt", d, false, &[fa, fb]).unwrap();
                out[0].sum().add(&out[1].sum())
            },
            &mut store,
            1e-5,
            1e-6,
            None,
        )
        .unwrap();
        assert!(report.all_pass(), "max err {}", report.max_err());
    }
}
