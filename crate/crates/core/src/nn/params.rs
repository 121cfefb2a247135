//! Named parameter storage and the per-pass context that turns it into graph leaves.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::autograd::Var;
use crate::nn::conv::{conv2d, ConvSpec};
use crate::nn::norm::{batch_norm_eval, batch_norm_train, BatchStats};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

#[derive(Debug, Clone)]
pub struct Buffer {
    pub name: String,
    pub value: Vec<f64>,
}

/// All learnable tensors and running statistics of a model, in creation order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    buffers: Vec<Buffer>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value,
            trainable: true,
        });
        id
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Vec<f64>) -> BufferId {
        let id = BufferId(self.buffers.len());
        self.buffers.push(Buffer {
            name: name.into(),
            value,
        });
        id
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn buffers(&self) -> &[Buffer] {
        &self.buffers
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn buffer(&self, id: BufferId) -> &[f64] {
        &self.buffers[id.0].value
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Vec<f64> {
        &mut self.buffers[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total scalar count of all parameters (buffers excluded).
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.numel()).sum()
    }

    /// Freezes or unfreezes every parameter whose name starts with `prefix`.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) -> usize {
        let mut n = 0;
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.trainable = trainable;
            n += 1;
        }
        n
    }
}

/// Seeded initialiser for fresh parameters.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// He-normal weights for a conv with `fan_in` inputs per output.
    pub fn he_normal(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(&mut self.rng)).collect())
    }
}

/// A convolution layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        spec: ConvSpec,
        bias: bool,
    ) -> Conv {
        let cin_g = cin / spec.groups;
        let weight = store.add(
            format!("{name}.weight"),
            init.he_normal(&[cout, cin_g, kernel, kernel], cin_g * kernel * kernel),
        );
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[cout])));
        Conv { weight, bias, spec }
    }

    pub fn out_channels(&self, store: &ParamStore) -> usize {
        store.param(self.weight).value.shape()[0]
    }
}

/// Batch-norm affine parameters plus running statistics.
#[derive(Debug, Clone, Copy)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> BatchNorm {
        BatchNorm {
            gamma: store.add(format!("{name}.weight"), Tensor::full(&[channels], 1.0)),
            beta: store.add(format!("{name}.bias"), Tensor::zeros(&[channels])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), vec![0.0; channels]),
            running_var: store.add_buffer(format!("{name}.running_var"), vec![1.0; channels]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One forward pass over a [`ParamStore`]. In training mode it hands out
/// differentiable leaves for trainable parameters and records batch statistics.
pub struct Session<'a> {
    store: &'a ParamStore,
    mode: Mode,
    leaves: RefCell<HashMap<ParamId, Var>>,
    stats: RefCell<Vec<(BatchNorm, BatchStats)>>,
}

impl<'a> Session<'a> {
    pub fn new(store: &'a ParamStore, mode: Mode) -> Self {
        Session {
            store,
            mode,
            leaves: RefCell::new(HashMap::new()),
            stats: RefCell::new(Vec::new()),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn var(&self, id: ParamId) -> Var {
        if let Some(v) = self.leaves.borrow().get(&id) {
            return v.clone();
        }
        let p = self.store.param(id);
        let v = if self.mode == Mode::Train && p.trainable {
            Var::param(p.value.clone(), id.0)
        } else {
            Var::constant(p.value.clone())
        };
        self.leaves.borrow_mut().insert(id, v.clone());
        v
    }

    pub fn conv(&self, layer: &Conv, x: &Var) -> Var {
        let w = self.var(layer.weight);
        let b = layer.bias.map(|b| self.var(b));
        conv2d(x, &w, b.as_ref(), layer.spec)
    }

    pub fn batch_norm(&self, bn: &BatchNorm, x: &Var) -> Var {
        let gamma = self.var(bn.gamma);
        let beta = self.var(bn.beta);
        let (n, _, h, w) = x.value().dims4();
        match self.mode {
            // one value per channel carries no batch statistics
            Mode::Train if n * h * w > 1 => {
                let (y, stats) = batch_norm_train(x, &gamma, &beta);
                self.stats.borrow_mut().push((*bn, stats));
                y
            }
            _ => batch_norm_eval(
                x,
                &gamma,
                &beta,
                self.store.buffer(bn.running_mean),
                self.store.buffer(bn.running_var),
            ),
        }
    }

    /// Batch statistics gathered during a training pass, to be folded into the
    /// running averages after the step.
    pub fn into_stats(self) -> Vec<(BatchNorm, BatchStats)> {
        self.stats.into_inner()
    }
}

/// Applies recorded batch statistics to the store's running buffers.
pub fn apply_batch_stats(store: &mut ParamStore, stats: &[(BatchNorm, BatchStats)]) {
    for (bn, s) in stats {
        let mut mean = std::mem::take(store.buffer_mut(bn.running_mean));
        let mut var = std::mem::take(store.buffer_mut(bn.running_var));
        s.update_running(&mut mean, &mut var);
        *store.buffer_mut(bn.running_mean) = mean;
        *store.buffer_mut(bn.running_var) = var;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn he_init_is_seeded_and_scaled() {
        let a = Init::new(3).he_normal(&[64, 32, 3, 3], 288);
        let b = Init::new(3).he_normal(&[64, 32, 3, 3], 288);
        assert_eq!(a, b);
        let n = a.numel() as f64;
        let var = a.data().iter().map(|v| v * v).sum::<f64>() / n;
        assert!((var - 2.0 / 288.0).abs() < 0.1 * 2.0 / 288.0);
    }

    #[test]
    fn eval_sessions_build_no_graph_and_freezing_works() {
        let mut store = ParamStore::new();
        let mut init = Init::new(0);
        let conv = Conv::new(&mut store, &mut init, "enc.c", 2, 3, 3, ConvSpec::same(3, 1), true);
        assert!(!Session::new(&store, Mode::Eval).var(conv.weight).requires_grad());
        assert!(Session::new(&store, Mode::Train).var(conv.weight).requires_grad());
        assert_eq!(store.set_trainable("enc.", false), 2);
        assert!(!Session::new(&store, Mode::Train).var(conv.weight).requires_grad());
        assert_eq!(store.trainable_count(), 0);
        assert_eq!(store.scalar_count(), 3 * 2 * 9 + 3);
    }
}
