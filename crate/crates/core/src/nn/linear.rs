use rand::Rng;

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor2;

/// `y = x W + b` with `W` stored as `in_dim x out_dim`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<F: Real, R: Rng>(
        ps: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = ps.add_scaled_uniform(format!("{name}.weight"), in_dim, out_dim, in_dim, rng)?;
        let bias = if with_bias {
            Some(ps.add(format!("{name}.bias"), Tensor2::zeros(1, out_dim))?)
        } else {
            None
        };
        Ok(Linear { weight, bias, in_dim, out_dim })
    }

    pub fn forward<F: Real>(&self, ps: &ParamStore<F>, x: &Tensor2<F>) -> Tensor2<F> {
        let mut y = x.matmul(ps.value(self.weight));
        if let Some(b) = self.bias {
            let b = ps.value(b).data();
            for r in 0..y.rows() {
                for (o, &bb) in y.row_mut(r).iter_mut().zip(b) {
                    *o += bb;
                }
            }
        }
        y
    }

    /// Accumulates `dW = xᵀ dy`, `db = Σ dy`; returns `dx = dy Wᵀ` when asked.
    pub fn backward<F: Real>(
        &self,
        ps: &mut ParamStore<F>,
        x: &Tensor2<F>,
        dy: &Tensor2<F>,
        need_dx: bool,
    ) -> Option<Tensor2<F>> {
        let dx = need_dx.then(|| dy.matmul_t(ps.value(self.weight)));
        let dw = x.t_matmul(dy);
        ps.grad_mut(self.weight).add_assign(&dw);
        if let Some(b) = self.bias {
            let g = ps.grad_mut(b);
            for r in 0..dy.rows() {
                for (gb, &d) in g.data_mut().iter_mut().zip(dy.row(r)) {
                    *gb += d;
                }
            }
        }
        dx
    }
}
