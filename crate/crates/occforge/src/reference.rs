//! Slow, obviously-correct reference implementations used only by tests.
//!
//! Everything here trades speed for simplicity: exhaustive loops over plain
//! `f64` slices, no shared code with the fast paths they are checked against.

use nalgebra::{Point3, Vector3};

use crate::geometry::{CameraModel, LabelGrid, OccupancyGrid, PointCloud, VoxelGridSpec, IGNORE_LABEL};

/// Voxelize by scanning every voxel and every point (O(voxels * points)).
pub fn brute_force_voxelize(cloud: &PointCloud, spec: &VoxelGridSpec) -> OccupancyGrid {
    let n = spec.num_voxels();
    let mut occupied = vec![false; n];
    let mut labels = cloud.labels.as_ref().map(|_| vec![IGNORE_LABEL; n]);
    for lin in 0..n {
        let idx = spec.from_linear(lin);
        let lo = [
            spec.origin[0] + idx[0] as f64 * spec.resolution,
            spec.origin[1] + idx[1] as f64 * spec.resolution,
            spec.origin[2] + idx[2] as f64 * spec.resolution,
        ];
        let mut counts = [0usize; 256];
        for (i, p) in cloud.points.iter().enumerate() {
            let inside = (0..3).all(|a| p[a] >= lo[a] && p[a] < lo[a] + spec.resolution);
            if !inside {
                continue;
            }
            occupied[lin] = true;
            if let Some(ls) = cloud.labels.as_ref() {
                counts[ls[i] as usize] += 1;
            }
        }
        if let Some(labels) = labels.as_mut() {
            if occupied[lin] {
                let best = (0..256).max_by_key(|&c| (counts[c], 255 - c)).unwrap();
                if counts[best] > 0 {
                    labels[lin] = best as u8;
                }
            }
        }
    }
    OccupancyGrid { spec: *spec, occupied, labels }
}

/// First occupied voxel along a ray, found by tiny fixed steps instead of
/// exact boundary walking. Returns the ray parameter at which the march
/// first sampled inside the voxel, so it overshoots the true entry by at
/// most one step.
pub fn brute_force_raycast(
    grid: &LabelGrid,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    t_max: f64,
    step: f64,
) -> Option<(f64, [usize; 3])> {
    let mut t = step;
    while t < t_max {
        let p = origin + dir * t;
        if let Some(idx) = grid.spec.voxel_index(&p) {
            if grid.occupied(idx) {
                return Some((t, idx));
            }
        }
        t += step;
    }
    None
}

/// Z-buffered projection of a labeled cloud, one full pass per pixel.
pub fn brute_force_label_image(cloud: &PointCloud, cam: &CameraModel) -> Vec<u8> {
    let labels = cloud.labels.as_ref().expect("cloud must be labeled");
    let mut out = vec![IGNORE_LABEL; cam.height * cam.width];
    for v in 0..cam.height {
        for u in 0..cam.width {
            let mut best = f64::INFINITY;
            for (i, p) in cloud.points.iter().enumerate() {
                let pr = crate::geometry::project_point(p, cam);
                if !pr.valid {
                    continue;
                }
                if pr.u.round() as usize == u && pr.v.round() as usize == v && pr.depth < best {
                    best = pr.depth;
                    out[v * cam.width + u] = labels[i];
                }
            }
        }
    }
    out
}

/// Bilinear lookup into a `[c, h, w]` map at one normalized point, written
/// as the four-corner weighted sum directly. Outside [0,1]^2 returns zeros.
pub fn naive_bilinear(fmap: &[f64], c: usize, h: usize, w: usize, uv: [f64; 2]) -> Vec<f64> {
    let (u, v) = (uv[0], uv[1]);
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return vec![0.0; c];
    }
    let x = u * (w - 1) as f64;
    let y = v * (h - 1) as f64;
    let x0 = (x.floor() as usize).min(w - 2);
    let y0 = (y.floor() as usize).min(h - 2);
    let (dx, dy) = (x - x0 as f64, y - y0 as f64);
    let mut out = vec![0.0; c];
    for ch in 0..c {
        let at = |yy: usize, xx: usize| fmap[(ch * h + yy) * w + xx];
        out[ch] = at(y0, x0) * (1.0 - dx) * (1.0 - dy)
            + at(y0, x0 + 1) * dx * (1.0 - dy)
            + at(y0 + 1, x0) * (1.0 - dx) * dy
            + at(y0 + 1, x0 + 1) * dx * dy;
    }
    out
}

/// Trilinear lookup into a `[x, y, z, c]` volume at one normalized point.
pub fn naive_trilinear(vol: &[f64], dims: [usize; 3], c: usize, uvw: [f64; 3]) -> Vec<f64> {
    if uvw.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return vec![0.0; c];
    }
    let mut i0 = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        if dims[a] == 1 {
            i0[a] = 0;
            frac[a] = 0.0;
        } else {
            let x = uvw[a] * (dims[a] - 1) as f64;
            i0[a] = (x.floor() as usize).min(dims[a] - 2);
            frac[a] = x - i0[a] as f64;
        }
    }
    let mut out = vec![0.0; c];
    for corner in 0..8usize {
        let mut wgt = 1.0;
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let hi = (corner >> a) & 1 == 1;
            if hi {
                if dims[a] == 1 {
                    wgt = 0.0;
                    break;
                }
                idx[a] = i0[a] + 1;
                wgt *= frac[a];
            } else {
                idx[a] = i0[a];
                wgt *= 1.0 - frac[a];
            }
        }
        if wgt == 0.0 {
            continue;
        }
        let base = ((idx[0] * dims[1] + idx[1]) * dims[2] + idx[2]) * c;
        for ch in 0..c {
            out[ch] += wgt * vol[base + ch];
        }
    }
    out
}

fn naive_softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.iter().map(|e| e / s).collect()
}

fn naive_affine(x: &[f64], rows: usize, w: &[f64], b: &[f64], din: usize, dout: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * dout];
    for r in 0..rows {
        for o in 0..dout {
            let mut acc = b[o];
            for i in 0..din {
                acc += x[r * din + i] * w[i * dout + o];
            }
            out[r * dout + o] = acc;
        }
    }
    out
}

/// Plain-`f64` weights for one deformable attention block, extracted from a
/// parameter store by the caller. `d` is the feature width, `heads * k`
/// sample points per query, `pdim` is 2 (image) or 3 (volume).
pub struct NaiveDeformableWeights<'a> {
    pub d: usize,
    pub heads: usize,
    pub k: usize,
    pub pdim: usize,
    pub offset_w: &'a [f64],
    pub offset_b: &'a [f64],
    pub offset_scale: &'a [f64],
    pub weight_w: &'a [f64],
    pub weight_b: &'a [f64],
    pub value_w: &'a [f64],
    pub value_b: &'a [f64],
    pub out_w: &'a [f64],
    pub out_b: &'a [f64],
}

/// Deformable attention over one query, spelled out head by head:
/// predict offsets around the reference point, sample, value-project,
/// softmax-mix per head, concatenate heads, output-project. Queries whose
/// reference point is invalid return all zeros.
pub fn naive_deformable_query(
    wt: &NaiveDeformableWeights,
    query: &[f64],
    refpoint: &[f64],
    valid: bool,
    sample: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let (d, heads, k, pdim) = (wt.d, wt.heads, wt.k, wt.pdim);
    if !valid {
        return vec![0.0; d];
    }
    let dh = d / heads;
    let offsets = naive_affine(query, 1, wt.offset_w, wt.offset_b, d, heads * k * pdim);
    let logits = naive_affine(query, 1, wt.weight_w, wt.weight_b, d, heads * k);
    let mut combined = vec![0.0; d];
    for hd in 0..heads {
        let weights = naive_softmax(&logits[hd * k..(hd + 1) * k]);
        for kk in 0..k {
            let mut pt = vec![0.0; pdim];
            for a in 0..pdim {
                pt[a] = refpoint[a] + wt.offset_scale[hd] * offsets[(hd * k + kk) * pdim + a];
            }
            let sampled = sample(&pt);
            let valued = naive_affine(&sampled, 1, wt.value_w, wt.value_b, d, d);
            for j in 0..dh {
                combined[hd * dh + j] += weights[kk] * valued[hd * dh + j];
            }
        }
    }
    naive_affine(&combined, 1, wt.out_w, wt.out_b, d, d)
}

/// Dense single-head scaled dot-product attention with separate Q/K inputs,
/// the oracle for the cross-view block: out[r] = sum_s softmax_s(q_r.k_s/sqrt(d)) v_s.
#[allow(clippy::too_many_arguments)]
pub fn naive_dense_attention(
    q_in: &[f64],
    k_in: &[f64],
    v_in: &[f64],
    n: usize,
    d: usize,
    wq: &[f64],
    wk: &[f64],
    wv: &[f64],
    wo: &[f64],
) -> Vec<f64> {
    let zeros = vec![0.0; d];
    let q = naive_affine(q_in, n, wq, &zeros, d, d);
    let k = naive_affine(k_in, n, wk, &zeros, d, d);
    let v = naive_affine(v_in, n, wv, &zeros, d, d);
    let scale = 1.0 / (d as f64).sqrt();
    let mut mixed = vec![0.0; n * d];
    for r in 0..n {
        let mut logits = vec![0.0; n];
        for s in 0..n {
            let mut dot = 0.0;
            for j in 0..d {
                dot += q[r * d + j] * k[s * d + j];
            }
            logits[s] = dot * scale;
        }
        let att = naive_softmax(&logits);
        for s in 0..n {
            for j in 0..d {
                mixed[r * d + j] += att[s] * v[s * d + j];
            }
        }
    }
    naive_affine(&mixed, n, wo, &zeros, d, d)
}

/// Soft precision/recall/specificity affinity loss written out with plain
/// loops. `probs` is `[m, c]` row-normalized, `gt` one class id per row;
/// classes absent from both ground truth and argmax prediction are excluded
/// from the average.
pub fn naive_scal(probs: &[f64], m: usize, c: usize, gt: &[u8]) -> f64 {
    const EPS: f64 = 1e-12;
    let mut total = 0.0;
    let mut present = 0usize;
    for cls in 0..c {
        let mut tp = 0.0;
        let mut psum = 0.0;
        let mut gsum = 0.0;
        let mut tn = 0.0;
        let mut fsum = 0.0;
        let mut in_pred = false;
        for r in 0..m {
            let p = probs[r * c + cls];
            let g = (gt[r] as usize == cls) as usize as f64;
            psum += p;
            gsum += g;
            tp += p * g;
            tn += (1.0 - p) * (1.0 - g);
            fsum += 1.0 - g;
            let argmax = (0..c)
                .max_by(|&a, &b| probs[r * c + a].partial_cmp(&probs[r * c + b]).unwrap())
                .unwrap();
            if argmax == cls {
                in_pred = true;
            }
        }
        if gsum == 0.0 && !in_pred {
            continue;
        }
        present += 1;
        let prec = (tp + EPS) / (psum + EPS);
        let rec = (tp + EPS) / (gsum + EPS);
        let spec = (tn + EPS) / (fsum + EPS);
        total -= prec.ln() + rec.ln() + spec.ln();
    }
    if present == 0 {
        0.0
    } else {
        total / present as f64
    }
}
