//! Forward/backward rules for every differentiable operation.
//!
//! Shapes are validated with assertions: a mismatch here is a programming
//! error in the pipeline, not a runtime condition. Non-finite outputs abort
//! with the offending op name (checked in `Tape::record`).

use super::tape::Tensor;
use crate::{Error, Result};

fn gemm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    // a: [m,k], b: [k,n] -> [m,n]
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

fn gemm_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    // a: [m,k], b: [n,k] -> [m,n] = a * b^T
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for l in 0..k {
                acc += arow[l] * brow[l];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

fn gemm_tn(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    // a: [m,k], b: [m,n] -> [k,n] = a^T * b
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for l in 0..k {
            let av = arow[l];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[l * n..(l + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

fn binary_forward(a: &Tensor, b: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(a.shape(), b.shape(), "op `{}` shape mismatch: {:?} vs {:?}", op, a.shape(), b.shape());
    a.with_data(|ad| b.with_data(|bd| ad.iter().zip(bd).map(|(x, y)| f(*x, *y)).collect()))
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Tensor {
        let out = binary_forward(self, other, "add", |x, y| x + y);
        self.tape.record("add", out, self.shape.clone(), &[self, other], |g| {
            vec![g.to_vec(), g.to_vec()]
        })
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        let out = binary_forward(self, other, "sub", |x, y| x - y);
        self.tape.record("sub", out, self.shape.clone(), &[self, other], |g| {
            vec![g.to_vec(), g.iter().map(|v| -v).collect()]
        })
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        let out = binary_forward(self, other, "mul", |x, y| x * y);
        let (ad, bd) = (self.data(), other.data());
        self.tape.record("mul", out, self.shape.clone(), &[self, other], move |g| {
            vec![
                g.iter().zip(&bd).map(|(gv, y)| gv * y).collect(),
                g.iter().zip(&ad).map(|(gv, x)| gv * x).collect(),
            ]
        })
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        let out = binary_forward(self, other, "div", |x, y| x / y);
        let (ad, bd) = (self.data(), other.data());
        self.tape.record("div", out, self.shape.clone(), &[self, other], move |g| {
            vec![
                g.iter().zip(&bd).map(|(gv, y)| gv / y).collect(),
                g.iter()
                    .zip(ad.iter().zip(&bd))
                    .map(|(gv, (x, y))| -gv * x / (y * y))
                    .collect(),
            ]
        })
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let out = self.with_data(|d| d.iter().map(|v| v * c).collect());
        self.tape.record("scale", out, self.shape.clone(), &[self], move |g| {
            vec![g.iter().map(|v| v * c).collect()]
        })
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let out = self.with_data(|d| d.iter().map(|v| v + c).collect());
        self.tape.record("add_scalar", out, self.shape.clone(), &[self], |g| vec![g.to_vec()])
    }

    pub fn sum(&self) -> Tensor {
        let total = self.with_data(|d| d.iter().sum::<f64>());
        let n = self.len();
        self.tape.record("sum", vec![total], vec![1], &[self], move |g| vec![vec![g[0]; n]])
    }

    pub fn mean(&self) -> Tensor {
        self.sum().scale(1.0 / self.len() as f64)
    }

    pub fn relu(&self) -> Tensor {
        let out: Vec<f64> = self.with_data(|d| d.iter().map(|v| v.max(0.0)).collect());
        let mask: Vec<f64> = out.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
        self.tape.record("relu", out, self.shape.clone(), &[self], move |g| {
            vec![g.iter().zip(&mask).map(|(gv, m)| gv * m).collect()]
        })
    }

    pub fn tanh(&self) -> Tensor {
        let out: Vec<f64> = self.with_data(|d| d.iter().map(|v| v.tanh()).collect());
        let y = out.clone();
        self.tape.record("tanh", out, self.shape.clone(), &[self], move |g| {
            vec![g.iter().zip(&y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect()]
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        let out: Vec<f64> = self.with_data(|d| d.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect());
        let y = out.clone();
        self.tape.record("sigmoid", out, self.shape.clone(), &[self], move |g| {
            vec![g.iter().zip(&y).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect()]
        })
    }

    pub fn exp(&self) -> Tensor {
        let out: Vec<f64> = self.with_data(|d| d.iter().map(|v| v.exp()).collect());
        let y = out.clone();
        self.tape.record("exp", out, self.shape.clone(), &[self], move |g| {
            vec![g.iter().zip(&y).map(|(gv, yv)| gv * yv).collect()]
        })
    }

    pub fn ln(&self) -> Tensor {
        let out: Vec<f64> = self.with_data(|d| d.iter().map(|v| v.ln()).collect());
        let x = self.data();
        self.tape.record("ln", out, self.shape.clone(), &[self], move |g| {
            vec![g.iter().zip(&x).map(|(gv, xv)| gv / xv).collect()]
        })
    }

    /// `[m,k] x [k,n] -> [m,n]`
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape.len(), 2, "matmul lhs must be rank 2");
        assert_eq!(other.shape.len(), 2, "matmul rhs must be rank 2");
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        assert_eq!(k, k2, "matmul inner dims {} vs {}", k, k2);
        let out = self.with_data(|a| other.with_data(|b| gemm(a, m, k, b, n)));
        let (ad, bd) = (self.data(), other.data());
        self.tape.record("matmul", out, vec![m, n], &[self, other], move |g| {
            // dA = g * B^T, dB = A^T * g
            vec![gemm_nt(g, m, n, &bd, k), gemm_tn(&ad, m, k, g, n)]
        })
    }

    /// `[m,k] x [n,k]^T -> [m,n]`
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape.len(), 2, "matmul_nt lhs must be rank 2");
        assert_eq!(other.shape.len(), 2, "matmul_nt rhs must be rank 2");
        let (m, k) = (self.shape[0], self.shape[1]);
        let (n, k2) = (other.shape[0], other.shape[1]);
        assert_eq!(k, k2, "matmul_nt inner dims {} vs {}", k, k2);
        let out = self.with_data(|a| other.with_data(|b| gemm_nt(a, m, k, b, n)));
        let (ad, bd) = (self.data(), other.data());
        self.tape.record("matmul_nt", out, vec![m, n], &[self, other], move |g| {
            // dA = g * B, dB = g^T * A
            vec![gemm(g, m, n, &bd, k), gemm_tn(g, m, n, &ad, k)]
        })
    }

    /// Broadcast-add a bias row: `[n,m] + [m]`.
    pub fn add_row(&self, bias: &Tensor) -> Tensor {
        assert_eq!(self.shape.len(), 2, "add_row input must be rank 2");
        assert_eq!(bias.shape(), [self.shape[1]], "add_row bias shape mismatch");
        let (n, m) = (self.shape[0], self.shape[1]);
        let out = self.with_data(|d| {
            bias.with_data(|b| {
                let mut o = d.to_vec();
                for i in 0..n {
                    for j in 0..m {
                        o[i * m + j] += b[j];
                    }
                }
                o
            })
        });
        self.tape.record("add_row", out, self.shape.clone(), &[self, bias], move |g| {
            let mut db = vec![0.0; m];
            for i in 0..n {
                for j in 0..m {
                    db[j] += g[i * m + j];
                }
            }
            vec![g.to_vec(), db]
        })
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Tensor {
        assert!(axis < self.shape.len(), "softmax axis {} out of range for rank {}", axis, self.shape.len());
        let (outer, k, inner) = axis_split(&self.shape, axis);
        let out = self.with_data(|d| {
            let mut o = vec![0.0; d.len()];
            for oi in 0..outer {
                for ii in 0..inner {
                    let idx = |j: usize| (oi * k + j) * inner + ii;
                    let mut mx = f64::NEG_INFINITY;
                    for j in 0..k {
                        mx = mx.max(d[idx(j)]);
                    }
                    let mut z = 0.0;
                    for j in 0..k {
                        let e = (d[idx(j)] - mx).exp();
                        o[idx(j)] = e;
                        z += e;
                    }
                    for j in 0..k {
                        o[idx(j)] /= z;
                    }
                }
            }
            o
        });
        let y = out.clone();
        self.tape.record("softmax", out, self.shape.clone(), &[self], move |g| {
            let mut dx = vec![0.0; g.len()];
            for oi in 0..outer {
                for ii in 0..inner {
                    let idx = |j: usize| (oi * k + j) * inner + ii;
                    let mut dot = 0.0;
                    for j in 0..k {
                        dot += g[idx(j)] * y[idx(j)];
                    }
                    for j in 0..k {
                        dx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                    }
                }
            }
            vec![dx]
        })
    }

    /// log(softmax) along `axis`, computed via the log-sum-exp trick.
    pub fn log_softmax(&self, axis: usize) -> Tensor {
        assert!(axis < self.shape.len(), "log_softmax axis out of range");
        let (outer, k, inner) = axis_split(&self.shape, axis);
        let out = self.with_data(|d| {
            let mut o = vec![0.0; d.len()];
            for oi in 0..outer {
                for ii in 0..inner {
                    let idx = |j: usize| (oi * k + j) * inner + ii;
                    let mut mx = f64::NEG_INFINITY;
                    for j in 0..k {
                        mx = mx.max(d[idx(j)]);
                    }
                    let mut z = 0.0;
                    for j in 0..k {
                        z += (d[idx(j)] - mx).exp();
                    }
                    let lse = mx + z.ln();
                    for j in 0..k {
                        o[idx(j)] = d[idx(j)] - lse;
                    }
                }
            }
            o
        });
        let y = out.clone();
        self.tape.record("log_softmax", out, self.shape.clone(), &[self], move |g| {
            let mut dx = vec![0.0; g.len()];
            for oi in 0..outer {
                for ii in 0..inner {
                    let idx = |j: usize| (oi * k + j) * inner + ii;
                    let mut gsum = 0.0;
                    for j in 0..k {
                        gsum += g[idx(j)];
                    }
                    for j in 0..k {
                        dx[idx(j)] = g[idx(j)] - y[idx(j)].exp() * gsum;
                    }
                }
            }
            vec![dx]
        })
    }

    /// View with a new shape over the same row-major data.
    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.len(),
            "reshape {:?} incompatible with {:?}",
            shape,
            self.shape
        );
        self.tape.record("reshape", self.data(), shape.to_vec(), &[self], |g| vec![g.to_vec()])
    }

    /// Select rows of a `[n,d]` tensor. Repeats allowed.
    pub fn gather_rows(&self, idx: &[usize]) -> Tensor {
        assert_eq!(self.shape.len(), 2, "gather_rows input must be rank 2");
        let (n, d) = (self.shape[0], self.shape[1]);
        for &i in idx {
            assert!(i < n, "gather_rows index {} out of bounds {}", i, n);
        }
        let out = self.with_data(|data| {
            let mut o = Vec::with_capacity(idx.len() * d);
            for &i in idx {
                o.extend_from_slice(&data[i * d..(i + 1) * d]);
            }
            o
        });
        let idx = idx.to_vec();
        let k = idx.len();
        self.tape.record("gather_rows", out, vec![k, d], &[self], move |g| {
            let mut dx = vec![0.0; n * d];
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..d {
                    dx[i * d + j] += g[r * d + j];
                }
            }
            vec![dx]
        })
    }

    /// Column sums of a `[n,c]` tensor -> `[c]`.
    pub fn colsum(&self) -> Tensor {
        assert_eq!(self.shape.len(), 2, "colsum input must be rank 2");
        let (n, c) = (self.shape[0], self.shape[1]);
        let out = self.with_data(|d| {
            let mut o = vec![0.0; c];
            for i in 0..n {
                for j in 0..c {
                    o[j] += d[i * c + j];
                }
            }
            o
        });
        self.tape.record("colsum", out, vec![c], &[self], move |g| {
            let mut dx = vec![0.0; n * c];
            for i in 0..n {
                dx[i * c..(i + 1) * c].copy_from_slice(g);
            }
            vec![dx]
        })
    }

    /// Permute `[c,h,w]` to `[h*w, c]` (one row per spatial position).
    pub fn chw_to_nc(&self) -> Tensor {
        assert_eq!(self.shape.len(), 3, "chw_to_nc input must be rank 3");
        let (c, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        let s = h * w;
        let out = self.with_data(|d| {
            let mut o = vec![0.0; s * c];
            for ch in 0..c {
                for p in 0..s {
                    o[p * c + ch] = d[ch * s + p];
                }
            }
            o
        });
        self.tape.record("chw_to_nc", out, vec![s, c], &[self], move |g| {
            let mut dx = vec![0.0; c * s];
            for ch in 0..c {
                for p in 0..s {
                    dx[ch * s + p] = g[p * c + ch];
                }
            }
            vec![dx]
        })
    }

    /// Inverse of [`chw_to_nc`]: `[h*w, c]` back to `[c,h,w]`.
    pub fn nc_to_chw(&self, h: usize, w: usize) -> Tensor {
        assert_eq!(self.shape.len(), 2, "nc_to_chw input must be rank 2");
        let (s, c) = (self.shape[0], self.shape[1]);
        assert_eq!(s, h * w, "nc_to_chw spatial size mismatch");
        let out = self.with_data(|d| {
            let mut o = vec![0.0; c * s];
            for ch in 0..c {
                for p in 0..s {
                    o[ch * s + p] = d[p * c + ch];
                }
            }
            o
        });
        self.tape.record("nc_to_chw", out, vec![c, h, w], &[self], move |g| {
            let mut dx = vec![0.0; s * c];
            for ch in 0..c {
                for p in 0..s {
                    dx[p * c + ch] = g[ch * s + p];
                }
            }
            vec![dx]
        })
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let k = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, k, inner)
}

/// Bilinear interpolation of `feature_map: [c,h,w]` at `points: [p,2]`
/// with coordinates `(u,v)` normalized to `[0,1]` (`u` along width).
/// Points outside `[0,1]^2` yield the zero vector (zero padding).
/// Differentiable w.r.t. both the feature map and the points.
pub fn bilinear_sample(feature_map: &Tensor, points: &Tensor) -> Tensor {
    assert_eq!(feature_map.shape().len(), 3, "bilinear_sample feature map must be rank 3");
    assert_eq!(points.shape().len(), 2, "bilinear_sample points must be rank 2");
    assert_eq!(points.shape()[1], 2, "bilinear_sample points last extent must be 2");
    let (c, h, w) = (feature_map.shape()[0], feature_map.shape()[1], feature_map.shape()[2]);
    let p = points.shape()[0];
    let fm = feature_map.data();
    let pts = points.data();

    // Per-point interpolation stencil, reused by the backward rule.
    struct Stencil {
        inside: bool,
        x0: usize,
        y0: usize,
        wx: f64,
        wy: f64,
        sx: f64, // d(px)/d(u)
        sy: f64,
    }
    let stencil = move |u: f64, v: f64| -> Stencil {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Stencil { inside: false, x0: 0, y0: 0, wx: 0.0, wy: 0.0, sx: 0.0, sy: 0.0 };
        }
        let (x0, wx, sx) = if w == 1 {
            (0, 0.0, 0.0)
        } else {
            let px = u * (w - 1) as f64;
            let x0 = (px.floor() as usize).min(w - 2);
            (x0, px - x0 as f64, (w - 1) as f64)
        };
        let (y0, wy, sy) = if h == 1 {
            (0, 0.0, 0.0)
        } else {
            let py = v * (h - 1) as f64;
            let y0 = (py.floor() as usize).min(h - 2);
            (y0, py - y0 as f64, (h - 1) as f64)
        };
        Stencil { inside: true, x0, y0, wx, wy, sx, sy }
    };

    let mut out = vec![0.0; p * c];
    for i in 0..p {
        let st = stencil(pts[i * 2], pts[i * 2 + 1]);
        if !st.inside {
            continue;
        }
        let (x1, y1) = ((st.x0 + 1).min(w - 1), (st.y0 + 1).min(h - 1));
        for ch in 0..c {
            let base = ch * h * w;
            let f00 = fm[base + st.y0 * w + st.x0];
            let f01 = fm[base + st.y0 * w + x1];
            let f10 = fm[base + y1 * w + st.x0];
            let f11 = fm[base + y1 * w + x1];
            out[i * c + ch] = (1.0 - st.wy) * ((1.0 - st.wx) * f00 + st.wx * f01)
                + st.wy * ((1.0 - st.wx) * f10 + st.wx * f11);
        }
    }

    let tape = feature_map.tape().clone();
    tape.record("bilinear_sample", out, vec![p, c], &[feature_map, points], move |g| {
        let mut dfm = vec![0.0; c * h * w];
        let mut dpts = vec![0.0; p * 2];
        for i in 0..p {
            let st = stencil(pts[i * 2], pts[i * 2 + 1]);
            if !st.inside {
                continue;
            }
            let (x1, y1) = ((st.x0 + 1).min(w - 1), (st.y0 + 1).min(h - 1));
            let (mut du, mut dv) = (0.0, 0.0);
            for ch in 0..c {
                let gv = g[i * c + ch];
                if gv == 0.0 {
                    continue;
                }
                let base = ch * h * w;
                let (i00, i01) = (base + st.y0 * w + st.x0, base + st.y0 * w + x1);
                let (i10, i11) = (base + y1 * w + st.x0, base + y1 * w + x1);
                dfm[i00] += gv * (1.0 - st.wy) * (1.0 - st.wx);
                dfm[i01] += gv * (1.0 - st.wy) * st.wx;
                dfm[i10] += gv * st.wy * (1.0 - st.wx);
                dfm[i11] += gv * st.wy * st.wx;
                let (f00, f01, f10, f11) = (fm[i00], fm[i01], fm[i10], fm[i11]);
                du += gv * ((1.0 - st.wy) * (f01 - f00) + st.wy * (f11 - f10)) * st.sx;
                dv += gv * ((1.0 - st.wx) * (f10 - f00) + st.wx * (f11 - f01)) * st.sy;
            }
            dpts[i * 2] = du;
            dpts[i * 2 + 1] = dv;
        }
        vec![dfm, dpts]
    })
}

/// Trilinear interpolation of `volume: [x,y,z,c]` at `points: [p,3]`
/// normalized to `[0,1]^3` (axis order matches the volume). Outside points
/// yield the zero vector.
pub fn trilinear_sample(volume: &Tensor, points: &Tensor) -> Tensor {
    assert_eq!(volume.shape().len(), 4, "trilinear_sample volume must be rank 4");
    assert_eq!(points.shape().len(), 2, "trilinear_sample points must be rank 2");
    assert_eq!(points.shape()[1], 3, "trilinear_sample points last extent must be 3");
    let dims = [volume.shape()[0], volume.shape()[1], volume.shape()[2]];
    let c = volume.shape()[3];
    let p = points.shape()[0];
    let vol = volume.data();
    let pts = points.data();

    #[derive(Clone, Copy)]
    struct Axis {
        i0: usize,
        frac: f64,
        scale: f64,
    }
    let axis_stencil = move |t: f64, n: usize| -> Option<Axis> {
        if !(0.0..=1.0).contains(&t) {
            return None;
        }
        if n == 1 {
            return Some(Axis { i0: 0, frac: 0.0, scale: 0.0 });
        }
        let pt = t * (n - 1) as f64;
        let i0 = (pt.floor() as usize).min(n - 2);
        Some(Axis { i0, frac: pt - i0 as f64, scale: (n - 1) as f64 })
    };
    let stencil = move |i: usize| -> Option<[Axis; 3]> {
        let ax = axis_stencil(pts[i * 3], dims[0])?;
        let ay = axis_stencil(pts[i * 3 + 1], dims[1])?;
        let az = axis_stencil(pts[i * 3 + 2], dims[2])?;
        Some([ax, ay, az])
    };
    let lin = move |x: usize, y: usize, z: usize| ((x * dims[1] + y) * dims[2] + z) * c;

    let mut out = vec![0.0; p * c];
    for i in 0..p {
        let Some([ax, ay, az]) = stencil(i) else { continue };
        for dx in 0..2usize {
            for dy in 0..2usize {
                for dz in 0..2usize {
                    let wx = if dx == 0 { 1.0 - ax.frac } else { ax.frac };
                    let wy = if dy == 0 { 1.0 - ay.frac } else { ay.frac };
                    let wz = if dz == 0 { 1.0 - az.frac } else { az.frac };
                    let wgt = wx * wy * wz;
                    if wgt == 0.0 {
                        continue;
                    }
                    let base = lin(
                        (ax.i0 + dx).min(dims[0] - 1),
                        (ay.i0 + dy).min(dims[1] - 1),
                        (az.i0 + dz).min(dims[2] - 1),
                    );
                    for ch in 0..c {
                        out[i * c + ch] += wgt * vol[base + ch];
                    }
                }
            }
        }
    }

    let tape = volume.tape().clone();
    tape.record("trilinear_sample", out, vec![p, c], &[volume, points], move |g| {
        let mut dvol = vec![0.0; vol.len()];
        let mut dpts = vec![0.0; p * 3];
        for i in 0..p {
            let Some([ax, ay, az]) = stencil(i) else { continue };
            let grow = &g[i * c..(i + 1) * c];
            if grow.iter().all(|v| *v == 0.0) {
                continue;
            }
            for dx in 0..2usize {
                for dy in 0..2usize {
                    for dz in 0..2usize {
                        let wx = if dx == 0 { 1.0 - ax.frac } else { ax.frac };
                        let wy = if dy == 0 { 1.0 - ay.frac } else { ay.frac };
                        let wz = if dz == 0 { 1.0 - az.frac } else { az.frac };
                        let swx = if dx == 0 { -1.0 } else { 1.0 } * ax.scale;
                        let swy = if dy == 0 { -1.0 } else { 1.0 } * ay.scale;
                        let swz = if dz == 0 { -1.0 } else { 1.0 } * az.scale;
                        let base = lin(
                            (ax.i0 + dx).min(dims[0] - 1),
                            (ay.i0 + dy).min(dims[1] - 1),
                            (az.i0 + dz).min(dims[2] - 1),
                        );
                        for (ch, gv) in grow.iter().enumerate() {
                            if *gv == 0.0 {
                                continue;
                            }
                            let f = vol[base + ch];
                            dvol[base + ch] += gv * wx * wy * wz;
                            dpts[i * 3] += gv * f * swx * wy * wz;
                            dpts[i * 3 + 1] += gv * f * wx * swy * wz;
                            dpts[i * 3 + 2] += gv * f * wx * wy * swz;
                        }
                    }
                }
            }
        }
        vec![dvol, dpts]
    })
}

/// 2D convolution: `x: [cin,h,w]`, `weight: [cout,cin,kh,kw]`, `bias: [cout]`,
/// zero padding `pad`, stride `stride`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Tensor {
    assert_eq!(x.shape().len(), 3, "conv2d input must be rank 3");
    assert_eq!(weight.shape().len(), 4, "conv2d weight must be rank 4");
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, cin2, kh, kw) = (weight.shape()[0], weight.shape()[1], weight.shape()[2], weight.shape()[3]);
    assert_eq!(cin, cin2, "conv2d channel mismatch");
    assert_eq!(bias.shape(), [cout], "conv2d bias shape mismatch");
    assert!(stride >= 1, "conv2d stride must be >= 1");
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;

    let xd = x.data();
    let wd = weight.data();
    let bd = bias.data();

    let mut out = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = bd[co];
                for ci in 0..cin {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += xd[(ci * h + iy as usize) * w + ix as usize]
                                * wd[((co * cin + ci) * kh + ky) * kw + kx];
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }

    let tape = x.tape().clone();
    tape.record("conv2d", out, vec![cout, ho, wo], &[x, weight, bias], move |g| {
        let mut dx = vec![0.0; cin * h * w];
        let mut dw = vec![0.0; cout * cin * kh * kw];
        let mut db = vec![0.0; cout];
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let gv = g[(co * ho + oy) * wo + ox];
                    if gv == 0.0 {
                        continue;
                    }
                    db[co] += gv;
                    for ci in 0..cin {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xi = (ci * h + iy as usize) * w + ix as usize;
                                let wi = ((co * cin + ci) * kh + ky) * kw + kx;
                                dx[xi] += gv * wd[wi];
                                dw[wi] += gv * xd[xi];
                            }
                        }
                    }
                }
            }
        }
        vec![dx, dw, db]
    })
}

/// Combine per-head attention weights with sampled values.
///
/// `values: [n*heads*k, d]`, `weights: [n*heads, k]` -> `[n, d]` where the
/// output slice for head `h` is the weighted sum of that head's channel
/// slice of its sampled value rows.
pub fn head_combine(values: &Tensor, weights: &Tensor, heads: usize) -> Tensor {
    assert_eq!(values.shape().len(), 2);
    assert_eq!(weights.shape().len(), 2);
    let d = values.shape()[1];
    let k = weights.shape()[1];
    let nh = weights.shape()[0];
    assert_eq!(values.shape()[0], nh * k, "head_combine row count mismatch");
    assert_eq!(nh % heads, 0, "head_combine weight rows not divisible by heads");
    assert_eq!(d % heads, 0, "head_combine dim not divisible by heads");
    let n = nh / heads;
    let dh = d / heads;

    let vd = values.data();
    let wd = weights.data();
    let mut out = vec![0.0; n * d];
    for qi in 0..n {
        for h in 0..heads {
            let wrow = (qi * heads + h) * k;
            for kk in 0..k {
                let wgt = wd[wrow + kk];
                let vrow = (wrow + kk) * d + h * dh;
                let orow = qi * d + h * dh;
                for j in 0..dh {
                    out[orow + j] += wgt * vd[vrow + j];
                }
            }
        }
    }

    let tape = values.tape().clone();
    tape.record("head_combine", out, vec![n, d], &[values, weights], move |g| {
        let mut dv = vec![0.0; vd.len()];
        let mut dw = vec![0.0; wd.len()];
        for qi in 0..n {
            for h in 0..heads {
                let wrow = (qi * heads + h) * k;
                let orow = qi * d + h * dh;
                for kk in 0..k {
                    let vrow = (wrow + kk) * d + h * dh;
                    let mut acc = 0.0;
                    for j in 0..dh {
                        let gv = g[orow + j];
                        dv[vrow + j] += wd[wrow + kk] * gv;
                        acc += vd[vrow + j] * gv;
                    }
                    dw[wrow + kk] += acc;
                }
            }
        }
        vec![dv, dw]
    })
}

/// Expand a per-head scale `[heads]` to `[n, heads*k*c]` so it can multiply
/// a flat offset tensor elementwise.
pub fn expand_head_scale(scale: &Tensor, n: usize, k: usize, c: usize) -> Tensor {
    assert_eq!(scale.shape().len(), 1, "expand_head_scale input must be rank 1");
    let heads = scale.shape()[0];
    let sd = scale.data();
    let cols = heads * k * c;
    let mut out = vec![0.0; n * cols];
    for row in 0..n {
        for h in 0..heads {
            for j in 0..k * c {
                out[row * cols + h * k * c + j] = sd[h];
            }
        }
    }
    let tape = scale.tape().clone();
    tape.record("expand_head_scale", out, vec![n, cols], &[scale], move |g| {
        let mut ds = vec![0.0; heads];
        for row in 0..n {
            for h in 0..heads {
                for j in 0..k * c {
                    ds[h] += g[row * cols + h * k * c + j];
                }
            }
        }
        vec![ds]
    })
}

/// Scatter visible features into a dense voxel volume, filling every other
/// voxel with the shared mask token. `features: [n,d]`, `token: [d]`,
/// `indices`: linear voxel ids, output `[num_voxels, d]`.
pub fn fill_volume(
    features: &Tensor,
    token: &Tensor,
    indices: &[usize],
    num_voxels: usize,
) -> Result<Tensor> {
    assert_eq!(features.shape().len(), 2, "fill_volume features must be rank 2");
    let (n, d) = (features.shape()[0], features.shape()[1]);
    assert_eq!(token.shape(), [d], "fill_volume token dim mismatch");
    if n != indices.len() {
        return Err(Error::Shape(format!(
            "fill_volume: {} feature rows for {} indices",
            n,
            indices.len()
        )));
    }
    let mut seen = vec![false; num_voxels];
    for &i in indices {
        if i >= num_voxels {
            return Err(Error::Shape(format!("fill_volume index {} out of {} voxels", i, num_voxels)));
        }
        if seen[i] {
            return Err(Error::DuplicateIndex(i));
        }
        seen[i] = true;
    }

    let fd = features.data();
    let td = token.data();
    let mut out = vec![0.0; num_voxels * d];
    for v in 0..num_voxels {
        out[v * d..(v + 1) * d].copy_from_slice(&td);
    }
    for (r, &v) in indices.iter().enumerate() {
        out[v * d..(v + 1) * d].copy_from_slice(&fd[r * d..(r + 1) * d]);
    }

    let idx = indices.to_vec();
    let tape = features.tape().clone();
    Ok(tape.record("fill_volume", out, vec![num_voxels, d], &[features, token], move |g| {
        let mut dfeat = vec![0.0; n * d];
        let mut dtok = vec![0.0; d];
        let mut visible = vec![false; num_voxels];
        for &v in &idx {
            visible[v] = true;
        }
        for (r, &v) in idx.iter().enumerate() {
            dfeat[r * d..(r + 1) * d].copy_from_slice(&g[v * d..(v + 1) * d]);
        }
        for v in 0..num_voxels {
            if visible[v] {
                continue;
            }
            for j in 0..d {
                dtok[j] += g[v * d + j];
            }
        }
        vec![dfeat, dtok]
    }))
}

/// Mean negative log-likelihood over labeled rows.
///
/// `log_probs: [n,c]`, `labels[i] == ignore` rows are skipped. All rows
/// ignored yields an exact zero with zero gradient.
pub fn nll_masked(log_probs: &Tensor, labels: &[u8], ignore: u8) -> Tensor {
    assert_eq!(log_probs.shape().len(), 2, "nll_masked input must be rank 2");
    let (n, c) = (log_probs.shape()[0], log_probs.shape()[1]);
    assert_eq!(labels.len(), n, "nll_masked label count mismatch");
    let mut count = 0usize;
    let mut total = 0.0;
    log_probs.with_data(|d| {
        for (i, &l) in labels.iter().enumerate() {
            if l == ignore {
                continue;
            }
            assert!((l as usize) < c, "nll_masked label {} out of {} classes", l, c);
            count += 1;
            total -= d[i * c + l as usize];
        }
    });
    let loss = if count == 0 { 0.0 } else { total / count as f64 };
    let labels = labels.to_vec();
    log_probs.tape().record("nll_masked", vec![loss], vec![1], &[log_probs], move |g| {
        let mut dx = vec![0.0; n * c];
        if count > 0 {
            let gv = g[0] / count as f64;
            for (i, &l) in labels.iter().enumerate() {
                if l == ignore {
                    continue;
                }
                dx[i * c + l as usize] = -gv;
            }
        }
        vec![dx]
    })
}

/// Nearest-neighbor upsampling of a `[x,y,z,d]` volume by integer `factor`.
pub fn upsample_nn3(volume: &Tensor, factor: usize) -> Tensor {
    assert_eq!(volume.shape().len(), 4, "upsample_nn3 volume must be rank 4");
    assert!(factor >= 1, "upsample_nn3 factor must be >= 1");
    let (x, y, z, d) = (volume.shape()[0], volume.shape()[1], volume.shape()[2], volume.shape()[3]);
    let (xo, yo, zo) = (x * factor, y * factor, z * factor);
    let vd = volume.data();
    let src = move |ox: usize, oy: usize, oz: usize| (((ox / factor) * y + oy / factor) * z + oz / factor) * d;
    let mut out = vec![0.0; xo * yo * zo * d];
    for ox in 0..xo {
        for oy in 0..yo {
            for oz in 0..zo {
                let o = ((ox * yo + oy) * zo + oz) * d;
                let s = src(ox, oy, oz);
                out[o..o + d].copy_from_slice(&vd[s..s + d]);
            }
        }
    }
    let tape = volume.tape().clone();
    tape.record("upsample_nn3", out, vec![xo, yo, zo, d], &[volume], move |g| {
        let mut dv = vec![0.0; x * y * z * d];
        for ox in 0..xo {
            for oy in 0..yo {
                for oz in 0..zo {
                    let o = ((ox * yo + oy) * zo + oz) * d;
                    let s = src(ox, oy, oz);
                    for j in 0..d {
                        dv[s + j] += g[o + j];
                    }
                }
            }
        }
        vec![dv]
    })
}

/// Mean KL divergence between a fixed reference distribution and predicted
/// log-probabilities, `mean_rows( sum_i t_i * (ln t_i - log_probs_i) )`.
///
/// `target_probs`/`target_log_probs` are plain data (the detached side);
/// gradient flows only into `log_probs`. When `target_log_probs` equals
/// `log_probs` elementwise the result is exactly zero.
pub fn kl_from_log_probs(target_probs: &[f64], target_log_probs: &[f64], log_probs: &Tensor) -> Tensor {
    assert_eq!(log_probs.shape().len(), 2, "kl_from_log_probs input must be rank 2");
    let (n, c) = (log_probs.shape()[0], log_probs.shape()[1]);
    assert_eq!(target_probs.len(), n * c, "kl_from_log_probs target size mismatch");
    assert_eq!(target_log_probs.len(), n * c, "kl_from_log_probs target size mismatch");
    let total = log_probs.with_data(|d| {
        let mut acc = 0.0;
        for i in 0..n * c {
            acc += target_probs[i] * (target_log_probs[i] - d[i]);
        }
        acc
    });
    let loss = total / n as f64;
    let t = target_probs.to_vec();
    log_probs.tape().record("kl_from_log_probs", vec![loss], vec![1], &[log_probs], move |g| {
        let gv = g[0] / n as f64;
        vec![t.iter().map(|ti| -gv * ti).collect()]
    })
}
