//! Central finite-difference verification of tape gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::store::{ParamBinder, ParameterStore};
use super::tape::{Tape, Tensor};
use crate::Result;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub path: String,
    /// Worst error over checked coordinates. Relative when the gradient
    /// magnitude supports it, absolute near zero.
    pub max_err: f64,
    pub checked_coords: usize,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tol: f64,
    pub step: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn max_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_err).fold(0.0, f64::max)
    }
}

/// Compare tape gradients of a scalar loss against central differences.
///
/// `f` must be a deterministic function of the store contents. Every
/// parameter bound by `f` is checked; `coord_cap` bounds the number of
/// coordinates probed per parameter (all of them when `None`), with a
/// deterministic per-path selection.
pub fn grad_check<F>(
    f: F,
    store: &mut ParameterStore,
    step: f64,
    tol: f64,
    coord_cap: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &mut ParamBinder) -> Tensor,
{
    assert!(step > 0.0, "grad_check step must be positive");
    let analytic = {
        let tape = Tape::new();
        let mut binder = ParamBinder::new(store, &tape, true);
        let loss = f(&tape, &mut binder);
        tape.backward(&loss)?;
        binder.grads()
    };

    let mut entries = Vec::new();
    for (path, grad) in &analytic {
        let n = grad.len();
        let coords: Vec<usize> = match coord_cap {
            Some(cap) if n > cap => {
                let mut all: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(path));
                all.shuffle(&mut rng);
                all.truncate(cap);
                all
            }
            _ => (0..n).collect(),
        };
        let mut max_err = 0.0f64;
        for &i in &coords {
            let orig = store.get(path).expect("bound parameter must exist").data[i];
            store.get_mut(path).unwrap().data[i] = orig + step;
            let fp = eval_loss(&f, store);
            store.get_mut(path).unwrap().data[i] = orig - step;
            let fm = eval_loss(&f, store);
            store.get_mut(path).unwrap().data[i] = orig;
            let numeric = (fp - fm) / (2.0 * step);
            let a = grad[i];
            // Central differences carry ~eps*|f|/(2*step) of roundoff noise
            // (~1e-8 absolute for losses of order 10), so gradients below
            // 1e-3 are compared absolutely: a relative comparison there
            // would amplify FD noise, not measure gradient correctness.
            let denom = a.abs().max(numeric.abs());
            let err = if denom < 1e-3 { (a - numeric).abs() } else { (a - numeric).abs() / denom };
            max_err = max_err.max(err);
        }
        entries.push(GradCheckEntry {
            path: path.clone(),
            max_err,
            checked_coords: coords.len(),
            pass: max_err < tol,
        });
    }
    Ok(GradCheckReport { tol, step, entries })
}

fn eval_loss<F>(f: &F, store: &mut ParameterStore) -> f64
where
    F: Fn(&Tape, &mut ParamBinder) -> Tensor,
{
    let tape = Tape::new();
    let mut binder = ParamBinder::new(store, &tape, true);
    f(&tape, &mut binder).item()
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
