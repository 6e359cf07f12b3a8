//! Minimal neural-network toolkit: tensors, a reverse-mode tape, the layers
//! used by the detector and reconstructor, and the RMSprop optimizer.

mod graph;
mod tensor;

pub use graph::{two_class_probabilities, Graph, Var};
pub use tensor::Tensor;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    /// Buffers such as batch-norm running statistics are not optimized.
    pub trainable: bool,
}

/// Named parameters and buffers of one model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        self.entries.push(ParamEntry {
            name: name.into(),
            tensor,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_trainable(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.len())
            .sum()
    }

    /// Checks that `other` has the same names and shapes, in order.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.tensor.shape == b.tensor.shape)
    }
}

/// One forward pass: a fresh tape plus the model parameters bound into it.
pub struct Session<'a> {
    pub graph: Graph,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
    train: bool,
    rng: Option<&'a mut ChaCha8Rng>,
    bn_updates: Vec<(ParamId, ParamId, Vec<f32>, Vec<f32>)>,
}

impl<'a> Session<'a> {
    pub fn inference(store: &'a ParamStore) -> Self {
        Self {
            graph: Graph::new(),
            store,
            bound: vec![None; store.len()],
            train: false,
            rng: None,
            bn_updates: Vec::new(),
        }
    }

    pub fn training(store: &'a ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            graph: Graph::new(),
            store,
            bound: vec![None; store.len()],
            train: true,
            rng: Some(rng),
            bn_updates: Vec::new(),
        }
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.graph.leaf(self.store.get(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.graph.leaf(t)
    }

    pub fn rng(&mut self) -> Option<&mut ChaCha8Rng> {
        self.rng.as_deref_mut()
    }

    /// Inverted dropout; identity outside training.
    pub fn dropout(&mut self, x: Var, p: f32) -> Var {
        if !self.train || p <= 0.0 {
            return x;
        }
        let n = self.graph.value(x).len();
        let keep = 1.0 - p;
        let rng = self.rng.as_deref_mut().expect("training session has an rng");
        let mask = (0..n)
            .map(|_| if rng.random::<f32>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        self.graph.mask_mul(x, mask)
    }

    /// Gradients of every parameter after `graph.backward`, `None` for
    /// parameters that did not take part in the pass.
    pub fn param_grads(&self) -> Vec<Option<Vec<f32>>> {
        self.bound
            .iter()
            .map(|b| b.and_then(|v| self.graph.grad(v).map(<[f32]>::to_vec)))
            .collect()
    }

    /// Batch statistics collected by training-mode batch norm layers.
    pub fn take_bn_updates(&mut self) -> Vec<(ParamId, ParamId, Vec<f32>, Vec<f32>)> {
        std::mem::take(&mut self.bn_updates)
    }
}

fn uniform(shape: &[usize], bound: f32, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-bound..=bound)).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2d {
    w: ParamId,
    b: ParamId,
}

impl Conv2d {
    /// He-uniform initialised `k x k` convolution.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = (cin * k * k) as f32;
        let bound = (6.0 / fan_in).sqrt();
        let w = store.add(format!("{name}.weight"), uniform(&[cout, cin, k, k], bound, rng), true);
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]), true);
        Self { w, b }
    }

    pub fn forward(&self, s: &mut Session<'_>, x: Var) -> Var {
        let (w, b) = (s.param(self.w), s.param(self.b));
        s.graph.conv2d(x, w, b)
    }

    pub fn bias(&self) -> ParamId {
        self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchNorm2d {
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

pub const BN_EPS: f32 = 1e-3;
pub const BN_MOMENTUM: f32 = 0.1;

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], 1.0), true),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels]), true),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::full(&[channels], 1.0), false),
        }
    }

    pub fn forward(&self, s: &mut Session<'_>, x: Var) -> Var {
        let (g, b) = (s.param(self.gamma), s.param(self.beta));
        if s.train {
            let (y, mean, var) = s.graph.batch_norm(x, g, b, None, BN_EPS);
            s.bn_updates
                .push((self.running_mean, self.running_var, mean, var));
            y
        } else {
            let rm = &s.store.get(self.running_mean).data;
            let rv = &s.store.get(self.running_var).data;
            s.graph.batch_norm(x, g, b, Some((rm, rv)), BN_EPS).0
        }
    }
}

/// Folds collected batch statistics into the running averages.
pub fn apply_bn_updates(store: &mut ParamStore, updates: Vec<(ParamId, ParamId, Vec<f32>, Vec<f32>)>) {
    for (mean_id, var_id, mean, var) in updates {
        for (r, m) in store.get_mut(mean_id).data.iter_mut().zip(&mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        for (r, v) in store.get_mut(var_id).data.iter_mut().zip(&var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (din + dout) as f32).sqrt();
        Self {
            w: store.add(format!("{name}.weight"), uniform(&[din, dout], bound, rng), true),
            b: store.add(format!("{name}.bias"), Tensor::zeros(&[dout]), true),
        }
    }

    pub fn forward(&self, s: &mut Session<'_>, x: Var) -> Var {
        let (w, b) = (s.param(self.w), s.param(self.b));
        s.graph.linear(x, w, b)
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> ParamId {
        self.b
    }
}

/// RMSprop: `v = rho * v + (1 - rho) * g^2; p -= lr * g / (sqrt(v) + eps)`.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub lr: f32,
    pub rho: f32,
    pub eps: f32,
    square_avg: Vec<Vec<f32>>,
}

impl RmsProp {
    pub fn new(lr: f32) -> Self {
        Self {
            lr,
            rho: 0.9,
            eps: 1e-7,
            square_avg: Vec::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Vec<f32>>]) {
        if self.square_avg.is_empty() {
            self.square_avg = store.entries.iter().map(|e| vec![0.0; e.tensor.len()]).collect();
        }
        for ((entry, grad), avg) in store.entries.iter_mut().zip(grads).zip(&mut self.square_avg) {
            let Some(grad) = grad else { continue };
            if !entry.trainable {
                continue;
            }
            for ((p, g), v) in entry.tensor.data.iter_mut().zip(grad).zip(avg.iter_mut()) {
                *v = self.rho * *v + (1.0 - self.rho) * g * g;
                *p -= self.lr * g / (v.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rmsprop_minimises_a_quadratic() {
        let mut store = ParamStore::default();
        let id = store.add("x", Tensor::new(vec![2], vec![3.0, -2.0]), true);
        let mut opt = RmsProp::new(0.05);
        for _ in 0..400 {
            let grad: Vec<f32> = store.get(id).data.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut store, &[Some(grad)]);
        }
        assert!(store.get(id).data.iter().all(|v| v.abs() < 0.1));
    }

    #[test]
    fn dropout_is_identity_at_inference() {
        let store = ParamStore::default();
        let mut s = Session::inference(&store);
        let x = s.input(Tensor::full(&[1, 1, 2, 2], 1.0));
        assert_eq!(s.dropout(x, 0.2), x);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let store = ParamStore::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = Session::training(&store, &mut rng);
        let x = s.input(Tensor::full(&[1, 1, 100, 100], 1.0));
        let y = s.dropout(x, 0.2);
        let mean: f32 = s.graph.value(y).data.iter().sum::<f32>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn buffers_are_not_optimised() {
        let mut store = ParamStore::default();
        let _bn = BatchNorm2d::new(&mut store, "bn", 2);
        let before = store.clone();
        let grads: Vec<_> = store.entries.iter().map(|e| Some(vec![1.0; e.tensor.len()])).collect();
        RmsProp::new(0.1).step(&mut store, &grads);
        assert_eq!(store.entries[2], before.entries[2]);
        assert_ne!(store.entries[0], before.entries[0]);
    }
}
