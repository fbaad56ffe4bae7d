use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor2;

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<F> {
    normalized: Tensor2<F>,
    inv_std: Vec<F>,
}

impl LayerNorm {
    pub fn new<F: Real>(ps: &mut ParamStore<F>, name: &str, dim: usize, eps: f64) -> Result<Self> {
        let gain = ps.add(format!("{name}.gain"), Tensor2::filled(1, dim, F::one()))?;
        let bias = ps.add(format!("{name}.bias"), Tensor2::zeros(1, dim))?;
        Ok(LayerNorm { gain, bias, dim, eps })
    }

    pub fn forward<F: Real>(&self, ps: &ParamStore<F>, x: &Tensor2<F>) -> (Tensor2<F>, LayerNormCache<F>) {
        let gain = ps.value(self.gain).data();
        let bias = ps.value(self.bias).data();
        let n = F::from_f64(x.cols() as f64);
        let eps = F::from_f64(self.eps);
        let mut y = Tensor2::zeros(x.rows(), x.cols());
        let mut normalized = Tensor2::zeros(x.rows(), x.cols());
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let inv = F::one() / (var + eps).sqrt();
            inv_std.push(inv);
            let nrow = normalized.row_mut(r);
            for (o, &v) in nrow.iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            let yrow = y.row_mut(r);
            for c in 0..yrow.len() {
                yrow[c] = gain[c] * normalized.get(r, c) + bias[c];
            }
        }
        (y, LayerNormCache { normalized, inv_std })
    }

    pub fn backward<F: Real>(
        &self,
        ps: &mut ParamStore<F>,
        cache: &LayerNormCache<F>,
        dy: &Tensor2<F>,
    ) -> Tensor2<F> {
        let cols = dy.cols();
        let n = F::from_f64(cols as f64);
        let mut dx = Tensor2::zeros(dy.rows(), cols);
        {
            let gain = ps.value(self.gain).data();
            for r in 0..dy.rows() {
                let xhat = cache.normalized.row(r);
                let d = dy.row(r);
                let mut mean_dxhat = F::zero();
                let mut mean_dxhat_xhat = F::zero();
                for c in 0..cols {
                    let dxh = d[c] * gain[c];
                    mean_dxhat += dxh;
                    mean_dxhat_xhat += dxh * xhat[c];
                }
                mean_dxhat /= n;
                mean_dxhat_xhat /= n;
                let inv = cache.inv_std[r];
                let out = dx.row_mut(r);
                for c in 0..cols {
                    let dxh = d[c] * gain[c];
                    out[c] = inv * (dxh - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                }
            }
        }
        let g = ps.grad_mut(self.gain);
        for r in 0..dy.rows() {
            let xhat = cache.normalized.row(r);
            for (c, gg) in g.data_mut().iter_mut().enumerate() {
                *gg += dy.get(r, c) * xhat[c];
            }
        }
        let b = ps.grad_mut(self.bias);
        for r in 0..dy.rows() {
            for (bb, &d) in b.data_mut().iter_mut().zip(dy.row(r)) {
                *bb += d;
            }
        }
        dx
    }
}
