use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
struct Entry<T> {
    tensor: Tensor<T>,
    trainable: bool,
}

/// Named model tensors. Trainable entries are optimized; the rest are
/// buffers such as batch-norm running statistics.
///
/// Iteration order is the lexicographic order of names, which keeps
/// serialization and optimizer updates deterministic.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T = f32> {
    entries: BTreeMap<String, Entry<T>>,
}

/// Graph handles for the trainable tensors of a [`ParamSet`].
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} is not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Gradients keyed by parameter name.
pub type Grads<T> = BTreeMap<String, Vec<T>>;

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.entries.insert(
            name.into(),
            Entry {
                tensor,
                trainable: true,
            },
        );
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.entries.insert(
            name.into(),
            Entry {
                tensor,
                trainable: false,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).map(|e| &e.tensor)
    }

    /// Like [`ParamSet::get`] but panics on a missing name; for model code
    /// whose names are fixed at construction.
    pub fn tensor(&self, name: &str) -> &Tensor<T> {
        self.get(name).unwrap_or_else(|| panic!("missing tensor {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.get_mut(name).map(|e| &mut e.tensor)
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.trainable)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) {
        if let Some(e) = self.entries.get_mut(name) {
            e.trainable = trainable;
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.tensor))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds every trainable tensor to `graph` as a gradient-tracked leaf.
    pub fn bind(&self, graph: &mut Graph<T>) -> Bound {
        let vars = self
            .entries
            .iter()
            .filter(|(_, e)| e.trainable)
            .map(|(name, e)| (name.clone(), graph.param(e.tensor.clone())))
            .collect();
        Bound { vars }
    }

    /// Collects gradients after `graph.backward`. Parameters that did not
    /// take part in the forward pass get zeros.
    pub fn grads(&self, graph: &Graph<T>, bound: &Bound) -> Grads<T> {
        bound
            .iter()
            .map(|(name, var)| {
                let g = graph
                    .grad(var)
                    .map(<[T]>::to_vec)
                    .unwrap_or_else(|| vec![T::zero(); graph.value(var).len()]);
                (name.to_string(), g)
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (
                        k.clone(),
                        Entry {
                            tensor: e.tensor.cast(),
                            trainable: e.trainable,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Checks that every tensor is present with the expected shape.
    pub fn expect_shapes<'a>(&self, expected: impl IntoIterator<Item = (&'a str, Vec<usize>)>) -> Result<()> {
        for (name, shape) in expected {
            match self.get(name) {
                None => return Err(NnError::Config(format!("missing tensor {name}"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(NnError::Shape {
                        op: "parameter",
                        left: t.shape().to_vec(),
                        right: shape,
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Glorot/Xavier uniform initialization.
pub fn xavier_uniform<T: Scalar>(rng: &mut impl Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.gen_range(-limit..limit)))
}

/// Uniform in `[-limit, limit)`.
pub fn uniform<T: Scalar>(rng: &mut impl Rng, shape: &[usize], limit: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.gen_range(-limit..limit)))
}
