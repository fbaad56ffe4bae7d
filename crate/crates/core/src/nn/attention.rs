use rand::Rng;

use crate::error::{LtcsError, Result};
use crate::nn::activation::{smelu_backward, smelu_tensor, softmax_in_place};
use crate::nn::linear::Linear;
use crate::nn::norm::{LayerNorm, LayerNormCache};
use crate::params::ParamStore;
use crate::real::Real;
use crate::tensor::Tensor2;

/// Parameter handles of one encoder layer.
///
/// The query/key/value/output maps are bias-free `width x width`; head `h` owns the column
/// block `[h * width/heads, (h + 1) * width/heads)` of each.
#[derive(Debug, Clone)]
pub struct AttentionLayerParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub attn_norm: LayerNorm,
    pub ff_norm: LayerNorm,
}

/// One pre-norm encoder layer:
///
/// ```text
/// x1 = x  + Attn(LN1(x))
/// y  = x1 + FF(LN2(x1))
/// ```
///
/// No mask and no positional signal, so the layer is permutation-equivariant
/// over its rows.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub params: AttentionLayerParams,
    pub width: usize,
    pub heads: usize,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<F> {
    attn_norm: LayerNormCache<F>,
    normed: Tensor2<F>,
    q: Tensor2<F>,
    k: Tensor2<F>,
    v: Tensor2<F>,
    weights: Vec<Tensor2<F>>,
    heads_out: Tensor2<F>,
    ff_norm: LayerNormCache<F>,
    ff_normed: Tensor2<F>,
    ff_pre: Tensor2<F>,
    ff_act: Tensor2<F>,
}

fn column_block<F: Real>(t: &Tensor2<F>, start: usize, len: usize) -> Tensor2<F> {
    let mut out = Tensor2::zeros(t.rows(), len);
    for r in 0..t.rows() {
        out.row_mut(r).copy_from_slice(&t.row(r)[start..start + len]);
    }
    out
}

fn write_column_block<F: Real>(dst: &mut Tensor2<F>, src: &Tensor2<F>, start: usize) {
    for r in 0..src.rows() {
        let len = src.cols();
        dst.row_mut(r)[start..start + len].copy_from_slice(src.row(r));
    }
}

impl EncoderLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Real, R: Rng>(
        ps: &mut ParamStore<F>,
        name: &str,
        width: usize,
        heads: usize,
        ff_width: usize,
        beta: f64,
        ln_eps: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(LtcsError::Config(format!(
                "attention width {width} is not divisible by head count {heads}"
            )));
        }
        let params = AttentionLayerParams {
            attn_norm: LayerNorm::new(ps, &format!("{name}.attn_norm"), width, ln_eps)?,
            query: Linear::new(ps, &format!("{name}.query"), width, width, false, rng)?,
            key: Linear::new(ps, &format!("{name}.key"), width, width, false, rng)?,
            value: Linear::new(ps, &format!("{name}.value"), width, width, false, rng)?,
            output: Linear::new(ps, &format!("{name}.output"), width, width, false, rng)?,
            ff_norm: LayerNorm::new(ps, &format!("{name}.ff_norm"), width, ln_eps)?,
            ff_in: Linear::new(ps, &format!("{name}.ff_in"), width, ff_width, true, rng)?,
            ff_out: Linear::new(ps, &format!("{name}.ff_out"), ff_width, width, true, rng)?,
        };
        Ok(EncoderLayer { params, width, heads, beta })
    }

    fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    /// Attention-score evaluations for a set of `m` rows.
    pub fn score_count(&self, m: usize) -> u64 {
        (self.heads * m * m) as u64
    }

    pub fn forward<F: Real>(&self, ps: &ParamStore<F>, x: &Tensor2<F>) -> Result<Tensor2<F>> {
        Ok(self.forward_cached(ps, x)?.0)
    }

    pub fn forward_cached<F: Real>(
        &self,
        ps: &ParamStore<F>,
        x: &Tensor2<F>,
    ) -> Result<(Tensor2<F>, EncoderCache<F>)> {
        if x.cols() != self.width {
            return Err(LtcsError::Config(format!(
                "encoder input width {} does not match layer width {}",
                x.cols(),
                self.width
            )));
        }
        if x.rows() == 0 {
            return Err(LtcsError::InvalidArgument("encoder input has no rows".into()));
        }
        let p = &self.params;
        let m = x.rows();
        let dh = self.head_dim();
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());

        let (normed, attn_norm) = p.attn_norm.forward(ps, x);
        let q = p.query.forward(ps, &normed);
        let k = p.key.forward(ps, &normed);
        let v = p.value.forward(ps, &normed);

        let mut heads_out = Tensor2::zeros(m, self.width);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = column_block(&q, h * dh, dh);
            let kh = column_block(&k, h * dh, dh);
            let vh = column_block(&v, h * dh, dh);
            let mut scores = qh.matmul_t(&kh);
            scores.scale(scale);
            for r in 0..m {
                softmax_in_place(scores.row_mut(r));
            }
            let oh = scores.matmul(&vh);
            write_column_block(&mut heads_out, &oh, h * dh);
            weights.push(scores);
        }
        let mut x1 = p.output.forward(ps, &heads_out);
        x1.add_assign(x);

        let (ff_normed, ff_norm) = p.ff_norm.forward(ps, &x1);
        let beta = F::from_f64(self.beta);
        let ff_pre = p.ff_in.forward(ps, &ff_normed);
        let ff_act = smelu_tensor(&ff_pre, beta);
        let mut y = p.ff_out.forward(ps, &ff_act);
        y.add_assign(&x1);

        Ok((
            y,
            EncoderCache { attn_norm, normed, q, k, v, weights, heads_out, ff_norm, ff_normed, ff_pre, ff_act },
        ))
    }

    pub fn backward<F: Real>(
        &self,
        ps: &mut ParamStore<F>,
        cache: &EncoderCache<F>,
        dy: &Tensor2<F>,
    ) -> Tensor2<F> {
        let p = &self.params;
        let m = dy.rows();
        let dh = self.head_dim();
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        let beta = F::from_f64(self.beta);

        // Feed-forward sublayer.
        let d_act = p.ff_out.backward(ps, &cache.ff_act, dy, true).unwrap();
        let d_pre = smelu_backward(&cache.ff_pre, &d_act, beta);
        let d_ff_normed = p.ff_in.backward(ps, &cache.ff_normed, &d_pre, true).unwrap();
        let mut dx1 = p.ff_norm.backward(ps, &cache.ff_norm, &d_ff_normed);
        dx1.add_assign(dy);

        // Attention sublayer.
        let d_heads = p.output.backward(ps, &cache.heads_out, &dx1, true).unwrap();
        let mut dq = Tensor2::zeros(m, self.width);
        let mut dk = Tensor2::zeros(m, self.width);
        let mut dv = Tensor2::zeros(m, self.width);
        for h in 0..self.heads {
            let a = &cache.weights[h];
            let qh = column_block(&cache.q, h * dh, dh);
            let kh = column_block(&cache.k, h * dh, dh);
            let vh = column_block(&cache.v, h * dh, dh);
            let doh = column_block(&d_heads, h * dh, dh);

            let da = doh.matmul_t(&vh);
            let dvh = a.t_matmul(&doh);
            let mut ds = Tensor2::zeros(m, m);
            for r in 0..m {
                let ar = a.row(r);
                let dar = da.row(r);
                let dot: F = ar.iter().zip(dar).map(|(&x, &y)| x * y).sum();
                let out = ds.row_mut(r);
                for c in 0..m {
                    out[c] = ar[c] * (dar[c] - dot) * scale;
                }
            }
            let dqh = ds.matmul(&kh);
            let dkh = ds.t_matmul(&qh);
            write_column_block(&mut dq, &dqh, h * dh);
            write_column_block(&mut dk, &dkh, h * dh);
            write_column_block(&mut dv, &dvh, h * dh);
        }
        let mut d_normed = p.query.backward(ps, &cache.normed, &dq, true).unwrap();
        d_normed.add_assign(&p.key.backward(ps, &cache.normed, &dk, true).unwrap());
        d_normed.add_assign(&p.value.backward(ps, &cache.normed, &dv, true).unwrap());
        let mut dx = p.attn_norm.backward(ps, &cache.attn_norm, &d_normed);
        dx.add_assign(&dx1);
        dx
    }
}

/// Encoder layers followed by a final layer norm.
#[derive(Debug, Clone)]
pub struct EncoderStack {
    pub layers: Vec<EncoderLayer>,
    pub final_norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct EncoderStackCache<F> {
    layers: Vec<EncoderCache<F>>,
    final_norm: LayerNormCache<F>,
}

impl EncoderStack {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Real, R: Rng>(
        ps: &mut ParamStore<F>,
        name: &str,
        depth: usize,
        width: usize,
        heads: usize,
        ff_width: usize,
        beta: f64,
        ln_eps: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let layers = (0..depth)
            .map(|i| EncoderLayer::new(ps, &format!("{name}.layer{i:02}"), width, heads, ff_width, beta, ln_eps, rng))
            .collect::<Result<Vec<_>>>()?;
        let final_norm = LayerNorm::new(ps, &format!("{name}.final_norm"), width, ln_eps)?;
        Ok(EncoderStack { layers, final_norm })
    }

    pub fn score_count(&self, m: usize) -> u64 {
        self.layers.iter().map(|l| l.score_count(m)).sum()
    }

    pub fn forward<F: Real>(&self, ps: &ParamStore<F>, x: &Tensor2<F>) -> Result<Tensor2<F>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(ps, &h)?;
        }
        Ok(self.final_norm.forward(ps, &h).0)
    }

    pub fn forward_cached<F: Real>(
        &self,
        ps: &ParamStore<F>,
        x: &Tensor2<F>,
    ) -> Result<(Tensor2<F>, EncoderStackCache<F>)> {
        let mut h = x.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward_cached(ps, &h)?;
            layers.push(cache);
            h = next;
        }
        let (out, final_norm) = self.final_norm.forward(ps, &h);
        Ok((out, EncoderStackCache { layers, final_norm }))
    }

    pub fn backward<F: Real>(
        &self,
        ps: &mut ParamStore<F>,
        cache: &EncoderStackCache<F>,
        dy: &Tensor2<F>,
    ) -> Tensor2<F> {
        let mut d = self.final_norm.backward(ps, &cache.final_norm, dy);
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            d = layer.backward(ps, c, &d);
        }
        d
    }
}
