use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Named learnable matrices with gradient accumulators of identical shape.
///
/// Insertion order is preserved; it fixes the serialization order of
/// checkpoints and the traversal order of optimizers.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore<T: Scalar> {
    names: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<Matrix<T>>,
    grads: Vec<Matrix<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            names: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix<T>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.grads.push(Matrix::zeros(value.rows(), value.cols()));
        self.values.push(value);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Result<&Matrix<T>> {
        Ok(&self.values[self.id(name)?])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Matrix<T>> {
        let id = self.id(name)?;
        Ok(&mut self.values[id])
    }

    pub fn value(&self, id: usize) -> &Matrix<T> {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Matrix<T> {
        &mut self.values[id]
    }

    pub fn grad(&self, id: usize) -> &Matrix<T> {
        &self.grads[id]
    }

    pub fn grad_mut(&mut self, id: usize) -> &mut Matrix<T> {
        &mut self.grads[id]
    }

    pub fn grad_by_name(&self, name: &str) -> Result<&Matrix<T>> {
        Ok(&self.grads[self.id(name)?])
    }

    /// Mutable access to a value and its gradient at once.
    pub fn value_and_grad_mut(&mut self, id: usize) -> (&mut Matrix<T>, &Matrix<T>) {
        (&mut self.values[id], &self.grads[id])
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Adds `g` into the accumulator of parameter `id`.
    pub fn accumulate_grad(&mut self, id: usize, g: &Matrix<T>) -> Result<()> {
        let acc = &mut self.grads[id];
        if acc.shape() != g.shape() {
            return Err(Error::dims("accumulate_grad", acc.shape(), g.shape()));
        }
        for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
            *a += b;
        }
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn grad_norm(&self) -> T {
        self.grads
            .iter()
            .fold(T::zero(), |acc, g| acc + g.frobenius_sq())
            .sqrt()
    }

    pub fn scale_grads(&mut self, s: T) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Copy with every value converted to another scalar type; gradients reset.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        let mut out = ParameterStore::new();
        for (name, v) in self.iter() {
            out.insert(name, v.cast()).expect("names are unique");
        }
        out
    }
}
