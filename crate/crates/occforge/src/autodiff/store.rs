//! Named parameter storage with seeded, path-deterministic initialization.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Tensor};

/// How a fresh parameter is filled.
#[derive(Clone, Debug)]
pub enum Init {
    /// Uniform in `(-sqrt(3/fan_in), sqrt(3/fan_in))` — unit-variance-per-input
    /// Kaiming-style fan-in scaling.
    Kaiming { fan_in: usize },
    Zeros,
    Const(f64),
    /// Exact values, e.g. for identity-initialized correctors.
    Data(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Map from parameter path to dense values. Initialization is a pure
/// function of `(path, shape, seed)`: two stores built with the same seed
/// and access pattern are bitwise identical.
#[derive(Clone, Debug)]
pub struct ParameterStore {
    seed: u64,
    params: BTreeMap<String, Param>,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        ParameterStore { seed, params: BTreeMap::new() }
    }

    pub fn from_params(seed: u64, params: impl IntoIterator<Item = (String, Param)>) -> Self {
        ParameterStore { seed, params: params.into_iter().collect() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    pub fn get_or_init(&mut self, path: &str, shape: &[usize], init: Init) -> &Param {
        if !self.params.contains_key(path) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Zeros => vec![0.0; n],
                Init::Const(c) => vec![c; n],
                Init::Data(d) => {
                    assert_eq!(d.len(), n, "Init::Data length mismatch for `{}`", path);
                    d
                }
                Init::Kaiming { fan_in } => {
                    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
                    let mut rng = path_rng(self.seed, path);
                    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
                }
            };
            self.params.insert(path.to_string(), Param { shape: shape.to_vec(), data });
        }
        let p = &self.params[path];
        assert_eq!(p.shape, shape, "parameter `{}` re-requested with different shape", path);
        p
    }

    pub fn get(&self, path: &str) -> Option<&Param> {
        self.params.get(path)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Param> {
        self.params.get_mut(path)
    }

    /// Overwrite values of an existing or new parameter (used by tests to
    /// pin degenerate configurations, and by the checkpoint loader).
    pub fn set(&mut self, path: &str, shape: &[usize], data: Vec<f64>) {
        assert_eq!(data.len(), shape.iter().product::<usize>(), "set: data/shape mismatch for `{}`", path);
        self.params.insert(path.to_string(), Param { shape: shape.to_vec(), data });
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn paths(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn path_rng(seed: u64, path: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ fnv1a(path)))
}

/// Binds store parameters onto one tape as leaves, at most once per path,
/// and collects their gradients after `backward`.
pub struct ParamBinder<'a> {
    store: &'a mut ParameterStore,
    tape: Tape,
    trainable: bool,
    bound: BTreeMap<String, Tensor>,
}

impl<'a> ParamBinder<'a> {
    pub fn new(store: &'a mut ParameterStore, tape: &Tape, trainable: bool) -> Self {
        ParamBinder { store, tape: tape.clone(), trainable, bound: BTreeMap::new() }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn store(&self) -> &ParameterStore {
        self.store
    }

    /// Fetch (initializing if absent) and bind a parameter as a tape leaf.
    pub fn get(&mut self, path: &str, shape: &[usize], init: Init) -> Tensor {
        if let Some(t) = self.bound.get(path) {
            assert_eq!(t.shape(), shape, "parameter `{}` bound with different shape", path);
            return t.clone();
        }
        let p = self.store.get_or_init(path, shape, init);
        let t = self.tape.leaf(p.data.clone(), shape, self.trainable);
        self.bound.insert(path.to_string(), t.clone());
        t
    }

    /// Raw (non-tape) parameter access, for non-differentiated components.
    pub fn get_raw(&mut self, path: &str, shape: &[usize], init: Init) -> Param {
        self.store.get_or_init(path, shape, init).clone()
    }

    /// Gradients of all bound parameters after a backward pass; unbound or
    /// unreached parameters get zeros.
    pub fn grads(&self) -> BTreeMap<String, Vec<f64>> {
        self.bound
            .iter()
            .map(|(path, t)| {
                let g = t.grad().unwrap_or_else(|| vec![0.0; t.len()]);
                (path.clone(), g)
            })
            .collect()
    }

    pub fn bound_paths(&self) -> Vec<String> {
        self.bound.keys().cloned().collect()
    }
}
