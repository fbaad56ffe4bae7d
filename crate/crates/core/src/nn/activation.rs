use crate::error::{LtcsError, Result};
use crate::real::Real;
use crate::tensor::Tensor2;

/// Smooth ReLU: zero below `-beta`, identity above `beta`, and the quadratic
/// `(x + beta)^2 / (4 beta)` joining them.
pub fn smelu(x: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(LtcsError::InvalidParameter(format!("smelu beta must be > 0, got {beta}")));
    }
    Ok(smelu_unchecked(x, beta))
}

#[inline]
pub(crate) fn smelu_unchecked<F: Real>(x: F, beta: F) -> F {
    if x <= -beta {
        F::zero()
    } else if x >= beta {
        x
    } else {
        let s = x + beta;
        s * s / (F::from_f64(4.0) * beta)
    }
}

/// Derivative of [`smelu`] with respect to `x`.
#[inline]
pub fn smelu_grad<F: Real>(x: F, beta: F) -> F {
    if x <= -beta {
        F::zero()
    } else if x >= beta {
        F::one()
    } else {
        (x + beta) / (F::from_f64(2.0) * beta)
    }
}

pub(crate) fn smelu_tensor<F: Real>(pre: &Tensor2<F>, beta: F) -> Tensor2<F> {
    pre.map(|x| smelu_unchecked(x, beta))
}

/// `dy * smelu'(pre)` elementwise.
pub(crate) fn smelu_backward<F: Real>(pre: &Tensor2<F>, dy: &Tensor2<F>, beta: F) -> Tensor2<F> {
    let mut dx = dy.clone();
    for (d, &p) in dx.data_mut().iter_mut().zip(pre.data()) {
        *d *= smelu_grad(p, beta);
    }
    dx
}

/// Max-shifted softmax.
pub fn softmax<F: Real>(v: &[F]) -> Result<Vec<F>> {
    if v.is_empty() {
        return Err(LtcsError::InvalidArgument("softmax of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(LtcsError::InvalidArgument("softmax input is not finite".into()));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place<F: Real>(v: &mut [F]) {
    let max = v.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `log(sum(exp(v)))`, max-shifted.
pub(crate) fn log_sum_exp<F: Real>(v: &[F]) -> F {
    let max = v.iter().copied().fold(F::neg_infinity(), F::max);
    let sum: F = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `gain * (v - mean) / sqrt(var + eps) + bias` with population variance.
pub fn layer_norm<F: Real>(v: &[F], gain: &[F], bias: &[F], eps: F) -> Result<Vec<F>> {
    if gain.len() != v.len() || bias.len() != v.len() {
        return Err(LtcsError::InvalidArgument(format!(
            "layer_norm length mismatch: input {}, gain {}, bias {}",
            v.len(),
            gain.len(),
            bias.len()
        )));
    }
    if v.is_empty() {
        return Err(LtcsError::InvalidArgument("layer_norm of an empty vector".into()));
    }
    let n = F::from_f64(v.len() as f64);
    let mean = v.iter().copied().sum::<F>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<F>() / n;
    let inv = F::one() / (var + eps).sqrt();
    Ok(v.iter()
        .zip(gain)
        .zip(bias)
        .map(|((&x, &g), &b)| g * (x - mean) * inv + b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smelu_regions() {
        assert_eq!(smelu(2.0, 1.0).unwrap(), 2.0);
        assert_eq!(smelu(-2.0, 1.0).unwrap(), 0.0);
        assert_eq!(smelu(0.0, 1.0).unwrap(), 0.25);
        assert!(smelu(0.0, 0.0).is_err());
        assert!(smelu(0.0, -1.0).is_err());
    }

    #[test]
    fn smelu_is_c1_at_the_joins() {
        for beta in [0.5, 1.0, 2.0] {
            for join in [-beta, beta] {
                let h = 1e-7;
                let left = (smelu(join, beta).unwrap() - smelu(join - h, beta).unwrap()) / h;
                let right = (smelu(join + h, beta).unwrap() - smelu(join, beta).unwrap()) / h;
                assert!((left - right).abs() < 1e-6, "beta={beta} join={join}: {left} vs {right}");
                let below = smelu(join - 1e-12, beta).unwrap();
                let above = smelu(join + 1e-12, beta).unwrap();
                assert!((below - above).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0f64, 0.0, 0.0]).unwrap();
        for x in &p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[0.0f64, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        assert!(softmax::<f64>(&[]).is_err());
        assert!(softmax(&[f64::NAN]).is_err());
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0f64, 1000.0, -1000.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
    }

    #[test]
    fn layer_norm_examples() {
        let out = layer_norm(&[3.0f64; 4], &[1.0; 4], &[0.0; 4], 1e-5).unwrap();
        assert!(out.iter().all(|x| x.abs() < 1e-2));
        let out = layer_norm(&[1.0f64, -1.0], &[1.0; 2], &[0.0; 2], 0.0).unwrap();
        assert_eq!(out, vec![1.0, -1.0]);
        let bias = [0.3, -0.7, 1.1];
        let out = layer_norm(&[5.0f64, -2.0, 0.5], &[0.0; 3], &bias, 1e-5).unwrap();
        assert_eq!(out, bias.to_vec());
        assert!(layer_norm(&[1.0f64, 2.0], &[1.0], &[0.0, 0.0], 1e-5).is_err());
    }
}
