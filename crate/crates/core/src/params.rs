use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{LtcsError, Result};
use crate::real::Real;
use crate::tensor::Tensor2;

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named parameters, each paired with a gradient buffer of the same shape.
///
/// Iteration through [`ParamStore::iter_named`] is ordered by name, so any
/// traversal (gradient checks, checkpoints, optimizer state) is deterministic.
#[derive(Debug, Clone)]
pub struct ParamStore<F> {
    names: Vec<String>,
    values: Vec<Tensor2<F>>,
    grads: Vec<Tensor2<F>>,
    by_name: BTreeMap<String, ParamId>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new(), grads: Vec::new(), by_name: BTreeMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2<F>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(LtcsError::Config(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.values.len());
        self.grads.push(Tensor2::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.names.push(name.clone());
        self.by_name.insert(name, id);
        Ok(id)
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_scaled_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| F::from_f64(rng.gen_range(-bound..bound))).collect();
        self.add(name, Tensor2::from_vec(rows, cols, data)?)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|t| t.data().len()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Tensor2<F> {
        &self.values[id.0]
    }

    #[inline]
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2<F> {
        &mut self.values[id.0]
    }

    #[inline]
    pub fn grad(&self, id: ParamId) -> &Tensor2<F> {
        &self.grads[id.0]
    }

    #[inline]
    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor2<F> {
        &mut self.grads[id.0]
    }

    /// Value and gradient of one parameter, borrowed together.
    pub fn pair_mut(&mut self, id: ParamId) -> (&mut Tensor2<F>, &Tensor2<F>) {
        (&mut self.values[id.0], &self.grads[id.0])
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(F::zero());
        }
    }

    pub fn iter_named(&self) -> impl Iterator<Item = (&str, ParamId)> + '_ {
        self.by_name.iter().map(|(n, &id)| (n.as_str(), id))
    }

    /// Ids in name order.
    pub fn ids(&self) -> Vec<ParamId> {
        self.by_name.values().copied().collect()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor2::all_finite)
    }
}
