use rand::Rng;

use crate::error::Result;
use crate::nn::activation::{smelu_backward, smelu_tensor};
use crate::nn::linear::Linear;
use crate::params::ParamStore;
use crate::real::Real;
use crate::tensor::Tensor2;

/// Stack of `Linear -> SmeLU` layers. The output is the last activation.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct MlpCache<F> {
    inputs: Vec<Tensor2<F>>,
    pre_activations: Vec<Tensor2<F>>,
}

impl Mlp {
    pub fn new<F: Real, R: Rng>(
        ps: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        widths: &[usize],
        beta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = in_dim;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Linear::new(ps, &format!("{name}.{i}"), prev, w, true, rng)?);
            prev = w;
        }
        Ok(Mlp { layers, beta })
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward<F: Real>(&self, ps: &ParamStore<F>, x: &Tensor2<F>) -> Tensor2<F> {
        let beta = F::from_f64(self.beta);
        let mut h = x.clone();
        for layer in &self.layers {
            h = smelu_tensor(&layer.forward(ps, &h), beta);
        }
        h
    }

    pub fn forward_cached<F: Real>(&self, ps: &ParamStore<F>, x: &Tensor2<F>) -> (Tensor2<F>, MlpCache<F>) {
        let beta = F::from_f64(self.beta);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let pre = layer.forward(ps, &h);
            let next = smelu_tensor(&pre, beta);
            inputs.push(h);
            pre_activations.push(pre);
            h = next;
        }
        (h, MlpCache { inputs, pre_activations })
    }

    /// Backpropagates `dy` (gradient w.r.t. the last activation).
    pub fn backward<F: Real>(
        &self,
        ps: &mut ParamStore<F>,
        cache: &MlpCache<F>,
        dy: &Tensor2<F>,
        need_dx: bool,
    ) -> Option<Tensor2<F>> {
        let beta = F::from_f64(self.beta);
        let mut d = dy.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dpre = smelu_backward(&cache.pre_activations[i], &d, beta);
            let want = i > 0 || need_dx;
            match layer.backward(ps, &cache.inputs[i], &dpre, want) {
                Some(dx) => d = dx,
                None => return None,
            }
        }
        Some(d)
    }
}
