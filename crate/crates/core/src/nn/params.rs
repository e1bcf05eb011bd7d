use indexmap::IndexMap;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Named parameter tensors in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T> Default for ParameterSet<T> {
    fn default() -> Self {
        Self {
            tensors: IndexMap::new(),
        }
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::TensorMismatch {
                name,
                msg: "duplicate parameter name".into(),
            });
        }
        self.tensors.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors.get(name).ok_or_else(|| Error::TensorMismatch {
            name: name.to_string(),
            msg: "missing parameter".into(),
        })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors.get_mut(name).ok_or_else(|| Error::TensorMismatch {
            name: name.to_string(),
            msg: "missing parameter".into(),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn accumulate(&mut self, name: &str, values: &[T]) -> Result<()> {
        let t = self.get_mut(name)?;
        if t.len() != values.len() {
            return Err(Error::TensorMismatch {
                name: name.to_string(),
                msg: format!("gradient length {} vs {}", values.len(), t.len()),
            });
        }
        for (d, v) in t.data_mut().iter_mut().zip(values) {
            *d += *v;
        }
        Ok(())
    }
}
