//! Named parameter storage shared by every model component.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::optim::sgd_step;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Scalar = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

/// Tape handles for every parameter of a store, valid for one forward pass.
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl std::ops::Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

impl Bound {
    /// Wraps handles that were placed on a tape in store order, e.g. as
    /// gradient-check inputs.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self(vars)
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Registers a trainable tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.insert(name.into(), tensor.with_requires_grad())
    }

    /// Registers a tensor that is stored and checkpointed but never updated.
    pub fn add_frozen(&mut self, name: impl Into<String>, mut tensor: Tensor<T>) -> ParamId {
        tensor.set_requires_grad(false);
        self.insert(name.into(), tensor)
    }

    fn insert(&mut self, name: String, tensor: Tensor<T>) -> ParamId {
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.names.len() - 1)
    }

    /// He-style normal init with variance `2 / fan_in`.
    pub fn add_he<R: Rng + ?Sized>(&mut self, name: impl Into<String>, shape: Vec<usize>, fan_in: usize, rng: &mut R) -> ParamId {
        let std = (2.0 / fan_in as f64).sqrt();
        let t = Tensor::from_fn(shape, |_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z * std)
        });
        self.add(name, t)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub fn num_trainable(&self) -> usize {
        self.tensors.iter().filter(|t| t.requires_grad()).map(Tensor::numel).sum()
    }

    /// Places every parameter on the tape as a leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        let mut vars = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let mut leaf = t.clone();
            leaf.zero_grad();
            vars.push(tape.leaf(leaf));
        }
        Bound(vars)
    }

    /// Adds the tape's leaf gradients into the stored tensors. Parameters the
    /// loss did not reach receive an explicit zero gradient.
    pub fn absorb_grads(&mut self, tape: &Tape<T>, bound: &Bound) -> Result<()> {
        if bound.0.len() != self.tensors.len() {
            return Err(Error::Usage("bound handles belong to a different store".into()));
        }
        for (t, &v) in self.tensors.iter_mut().zip(&bound.0) {
            if !t.requires_grad() {
                continue;
            }
            match tape.grad(v) {
                Some(g) => t.accumulate_grad(g)?,
                None => {
                    let z = vec![T::zero(); t.numel()];
                    t.accumulate_grad(&z)?;
                }
            }
        }
        Ok(())
    }

    /// Euclidean norm of every accumulated gradient taken together.
    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .filter_map(|t| t.grad())
            .flat_map(|g| g.iter().map(|v| v.as_f64() * v.as_f64()))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sgd_step(&mut self, lr: f64) -> Result<()> {
        sgd_step(self.tensors.iter_mut(), lr)
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Overwrites values from `other` by name; shapes must agree.
    pub fn load_values(&mut self, other: &ParamStore<T>) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Consistency(format!(
                "checkpoint has {} tensors, model expects {}",
                other.len(),
                self.len()
            )));
        }
        for (name, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            let src = other
                .by_name(name)
                .ok_or_else(|| Error::Consistency(format!("checkpoint lacks parameter {name}")))?;
            if src.shape() != t.shape() {
                return Err(Error::Consistency(format!(
                    "parameter {name} has shape {:?} in checkpoint, {:?} in model",
                    src.shape(),
                    t.shape()
                )));
            }
            t.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}
