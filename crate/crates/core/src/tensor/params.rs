use std::collections::HashMap;

use rand::Rng;

use super::{Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, kept in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId, TensorError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    /// Glorot-uniform matrix: `U(-a, a)` with `a = sqrt(6 / (rows + cols))`.
    pub fn add_xavier<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<ParamId, TensorError> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Tensor::matrix(rows, cols, data)?)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId, TensorError> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    /// Like [`ParamStore::id`], but insists on a shape.
    pub fn require(&self, name: &str, shape: &[usize]) -> Result<ParamId, TensorError> {
        let id = self
            .id(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        let actual = self.get(id).shape();
        if actual != shape {
            return Err(TensorError::InvalidArgument(format!(
                "parameter `{name}` has shape {actual:?}, expected {shape:?}"
            )));
        }
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_elements(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Plain SGD with global-norm clipping. Returns the pre-clip norm.
    ///
    /// A non-finite gradient aborts the step before any parameter changes.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64, clip_norm: f64) -> Result<f64, TensorError> {
        if !(lr > 0.0) || !(clip_norm > 0.0) {
            return Err(TensorError::InvalidArgument(format!(
                "sgd needs lr > 0 and clip > 0 (lr={lr}, clip={clip_norm})"
            )));
        }
        if grads.grads.len() != self.values.len() {
            return Err(TensorError::InvalidArgument(
                "gradient set does not match parameter store".into(),
            ));
        }
        for (id, g) in grads.grads.iter().enumerate() {
            if g.shape() != self.values[id].shape() {
                return Err(TensorError::InvalidArgument(format!(
                    "gradient for `{}` has shape {:?}, parameter is {:?}",
                    self.names[id],
                    g.shape(),
                    self.values[id].shape()
                )));
            }
            if !g.is_finite() {
                return Err(TensorError::NonFiniteGradient(self.names[id].clone()));
            }
        }
        let norm = grads.global_norm();
        let factor = if norm > clip_norm { clip_norm / norm } else { 1.0 };
        for (p, g) in self.values.iter_mut().zip(&grads.grads) {
            for (v, d) in p.data_mut().iter_mut().zip(g.data()) {
                *v -= lr * factor * d;
            }
        }
        Ok(norm)
    }
}

/// One dense gradient per parameter of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store.values.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(Tensor::sum_of_squares).sum::<f64>().sqrt()
    }

    /// Rescales in place so the global norm is at most `max_norm`.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(value: f64, grad: f64) -> (ParamStore, Gradients, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::scalar(value)).unwrap();
        let mut grads = Gradients::zeros_like(&store);
        grads.get_mut(id).data_mut()[0] = grad;
        (store, grads, id)
    }

    #[test]
    fn one_plain_step() {
        let (mut store, grads, id) = single(1.0, 0.5);
        store.sgd_step(&grads, 0.1, f64::INFINITY).unwrap();
        assert!((store.get(id).data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn clipping_scales_by_ratio() {
        let (_, mut grads, id) = single(0.0, 0.5);
        grads.clip(0.25);
        assert!((grads.get(id).data()[0] - 0.25).abs() < 1e-15);

        let (_, mut grads, id) = single(0.0, 0.1);
        grads.clip(0.25);
        assert_eq!(grads.get(id).data()[0], 0.1);
    }

    #[test]
    fn sgd_applies_the_clip() {
        let (mut store, grads, id) = single(0.0, 0.5);
        let norm = store.sgd_step(&grads, 1.0, 0.25).unwrap();
        assert_eq!(norm, 0.5);
        assert!((store.get(id).data()[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let (mut store, grads, id) = single(2.0, f64::NAN);
        assert_eq!(
            store.sgd_step(&grads, 0.1, 0.25),
            Err(TensorError::NonFiniteGradient("p".into()))
        );
        assert_eq!(store.get(id).data()[0], 2.0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let (mut store, grads, _) = single(2.0, 1.0);
        assert!(store.sgd_step(&grads, 0.0, 0.25).is_err());
        assert!(store.sgd_step(&grads, 0.1, -1.0).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(1.0)).unwrap();
        assert!(store.add("w", Tensor::scalar(1.0)).is_err());
    }

    proptest! {
        #[test]
        fn post_clip_norm_bounded(values in prop::collection::vec(-100.0f64..100.0, 1..40), clip in 0.01f64..10.0) {
            let mut store = ParamStore::new();
            let id = store.add("w", Tensor::vector(values.clone())).unwrap();
            let mut grads = Gradients::zeros_like(&store);
            grads.get_mut(id).data_mut().copy_from_slice(&values);
            grads.clip(clip);
            prop_assert!(grads.global_norm() <= clip + 1e-12);
        }
    }
}
