//! Training losses: 2D auxiliary semantics, voxel-wise semantics, soft
//! precision/recall/specificity affinity terms, per-voxel distribution
//! distillation, and their weighted combination.

use crate::autodiff::{kl_from_log_probs, nll_masked, Tape, Tensor};
use crate::config::LossWeights;
use crate::geometry::IGNORE_LABEL;
use crate::{Error, Result};

const EPS: f64 = 1e-12;

/// Scalar tensors for every term plus their weighted total. `total` is
/// exactly the weighted sum of the five terms.
#[derive(Clone)]
pub struct LossBreakdown {
    pub sem: Tensor,
    pub distill: Tensor,
    pub ssc: Tensor,
    pub scal_sem: Tensor,
    pub scal_geo: Tensor,
    pub total: Tensor,
}

impl LossBreakdown {
    pub fn values(&self) -> [f64; 6] {
        [
            self.sem.item(),
            self.distill.item(),
            self.ssc.item(),
            self.scal_sem.item(),
            self.scal_geo.item(),
            self.total.item(),
        ]
    }
}

/// Mean cross-entropy between `[c, h, w]` logits and per-pixel labels
/// (255 = ignore). All pixels ignored gives exactly zero with zero gradient.
pub fn semantic_aux_loss(logits: &Tensor, labels: &[u8]) -> Tensor {
    nll_masked(&logits.chw_to_nc().log_softmax(1), labels, IGNORE_LABEL)
}

/// Mean cross-entropy between `[n, c]` voxel logits and voxel labels
/// (255 = ignore).
pub fn ssc_loss(logits: &Tensor, labels: &[u8]) -> Tensor {
    nll_masked(&logits.log_softmax(1), labels, IGNORE_LABEL)
}

/// Soft affinity loss over class probabilities for the labeled rows:
/// per class, -[ln precision + ln recall + ln specificity] with epsilon
/// guards, averaged over classes present in ground truth or prediction.
fn scal_from_probs(probs: &Tensor, gt: &[u8], c: usize) -> Tensor {
    let tape = probs.tape().clone();
    let m = probs.shape()[0];
    assert_eq!(gt.len(), m);
    if m == 0 {
        return tape.scalar(0.0);
    }
    let mut onehot = vec![0.0; m * c];
    let mut gsum = vec![0.0; c];
    for (r, &l) in gt.iter().enumerate() {
        onehot[r * c + l as usize] = 1.0;
        gsum[l as usize] += 1.0;
    }
    let mut present = vec![false; c];
    for &l in gt {
        present[l as usize] = true;
    }
    probs.with_data(|p| {
        for r in 0..m {
            let row = &p[r * c..(r + 1) * c];
            let argmax = (0..c)
                .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
                .unwrap();
            present[argmax] = true;
        }
    });
    let num_present = present.iter().filter(|&&x| x).count();
    if num_present == 0 {
        return tape.scalar(0.0);
    }

    let g = tape.constant(onehot.clone(), &[m, c]);
    let not_g = tape.constant(onehot.iter().map(|x| 1.0 - x).collect(), &[m, c]);
    let tp = probs.mul(&g).colsum();
    let psum = probs.colsum();
    let tn = probs.neg().add_scalar(1.0).mul(&not_g).colsum();
    let gsum_t = tape.constant(gsum.clone(), &[c]);
    let fsum_t = tape.constant(gsum.iter().map(|s| m as f64 - s).collect(), &[c]);

    let prec = tp.add_scalar(EPS).div(&psum.add_scalar(EPS));
    let rec = tp.add_scalar(EPS).div(&gsum_t.add_scalar(EPS));
    let spec = tn.add_scalar(EPS).div(&fsum_t.add_scalar(EPS));
    let per_class = prec.ln().add(&rec.ln()).add(&spec.ln()).neg();
    let mask = tape.constant(present.iter().map(|&x| x as usize as f64).collect(), &[c]);
    per_class.mul(&mask).sum().scale(1.0 / num_present as f64)
}

/// Both affinity terms from `[n, c]` voxel logits and labels (255 = ignore):
/// the semantic one over all classes and the geometric one over the binary
/// occupied/free split (class 0 = free).
pub fn scal_losses(logits: &Tensor, labels: &[u8]) -> (Tensor, Tensor) {
    let tape = logits.tape().clone();
    let c = logits.shape()[1];
    let rows: Vec<usize> =
        (0..labels.len()).filter(|&i| labels[i] != IGNORE_LABEL).collect();
    if rows.is_empty() {
        return (tape.scalar(0.0), tape.scalar(0.0));
    }
    let gt: Vec<u8> = rows.iter().map(|&i| labels[i]).collect();
    let probs = logits.gather_rows(&rows).softmax(1);
    let scal_sem = scal_from_probs(&probs, &gt, c);

    // Collapse to (free, occupied) columns with a constant selector.
    let mut sel = vec![0.0; c * 2];
    sel[0] = 1.0;
    for cls in 1..c {
        sel[cls * 2 + 1] = 1.0;
    }
    let probs_bin = probs.matmul(&tape.constant(sel, &[c, 2]));
    let gt_bin: Vec<u8> = gt.iter().map(|&l| (l != 0) as u8).collect();
    let scal_geo = scal_from_probs(&probs_bin, &gt_bin, 2);
    (scal_sem, scal_geo)
}

/// Row-wise log-softmax over plain data, the same max-subtracted algorithm
/// as the tape op so detached and on-tape sides agree bitwise.
pub fn log_softmax_rows(data: &[f64], n: usize, c: usize) -> Vec<f64> {
    assert_eq!(data.len(), n * c);
    let mut out = vec![0.0; n * c];
    for r in 0..n {
        let row = &data[r * c..(r + 1) * c];
        let mut mx = f64::NEG_INFINITY;
        for &v in row {
            mx = mx.max(v);
        }
        let mut z = 0.0;
        for &v in row {
            z += (v - mx).exp();
        }
        let lse = mx + z.ln();
        for (j, &v) in row.iter().enumerate() {
            out[r * c + j] = v - lse;
        }
    }
    out
}

/// Per-row KL(teacher || student) between channel-softmaxed feature rows,
/// averaged over rows. The teacher side is plain detached data; equal
/// features give exactly zero.
pub fn distill_loss(teacher_features: &[f64], student_features: &Tensor) -> Result<Tensor> {
    if student_features.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "distillation expects [rows, channels] features, got {:?}",
            student_features.shape()
        )));
    }
    let (n, c) = (student_features.shape()[0], student_features.shape()[1]);
    if teacher_features.len() != n * c {
        return Err(Error::Shape(format!(
            "teacher/student feature size mismatch: {} vs {}",
            teacher_features.len(),
            n * c
        )));
    }
    let t_log = log_softmax_rows(teacher_features, n, c);
    let t_prob: Vec<f64> = t_log.iter().map(|l| l.exp()).collect();
    let s_log = student_features.log_softmax(1);
    Ok(kl_from_log_probs(&t_prob, &t_log, &s_log))
}

/// Optional per-term inputs for the weighted total; `None` means the
/// component is disabled and contributes a constant zero.
#[derive(Default)]
pub struct LossTerms {
    pub sem: Option<Tensor>,
    pub distill: Option<Tensor>,
    pub ssc: Option<Tensor>,
    pub scal_sem: Option<Tensor>,
    pub scal_geo: Option<Tensor>,
}

pub fn total_loss(tape: &Tape, terms: LossTerms, weights: &LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    let zero = |t: Option<Tensor>| t.unwrap_or_else(|| tape.scalar(0.0));
    let sem = zero(terms.sem);
    let distill = zero(terms.distill);
    let ssc = zero(terms.ssc);
    let scal_sem = zero(terms.scal_sem);
    let scal_geo = zero(terms.scal_geo);
    let total = sem
        .scale(weights.sem)
        .add(&distill.scale(weights.distill))
        .add(&ssc.scale(weights.ssc))
        .add(&scal_sem.scale(weights.scal_sem))
        .add(&scal_geo.scale(weights.scal_geo));
    Ok(LossBreakdown { sem, distill, ssc, scal_sem, scal_geo, total })
}
