//! Primitive operations and their local derivatives.
//!
//! Loss functions return the batch-mean loss together with the gradient with respect to
//! their logits, already scaled by `1/b`.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A scalar loss and its gradient with respect to the loss input.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Tensor,
}

/// KL divergence between two logit batches with gradients for both sides.
#[derive(Debug, Clone)]
pub struct KlGrad {
    pub loss: f64,
    pub grad_p: Tensor,
    pub grad_q: Tensor,
}

/// Row sums of a target distribution may deviate from 1 by at most this much.
pub const TARGET_SUM_TOLERANCE: f64 = 1e-9;

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::shape(
            op,
            format!("expected rank 2, got {:?}", t.shape()),
        ));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// `a · b` for row-major `m×k` and `k×n` operands.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: slices cover m*k, k*n and m*n elements with the row-major strides passed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// `aᵀ · b` where `a` is `m×k` and `b` is `m×n`; result `k×n`.
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: `a` is read through transposed strides; extents match the slices.
    unsafe {
        matrixmultiply::dgemm(
            k,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            k as isize,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// `a · bᵀ` where `a` is `m×n` and `b` is `k×n`; result `m×k`.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: `b` is read through transposed strides; extents match the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            n,
            k,
            1.0,
            a.as_ptr(),
            n as isize,
            1,
            b.as_ptr(),
            1,
            n as isize,
            0.0,
            c.as_mut_ptr(),
            k as isize,
            1,
        );
    }
    c
}

/// Row-wise `x·W + bias`.
pub fn affine(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, m) = require_matrix("affine", x)?;
    let (wm, n) = require_matrix("affine", weight)?;
    if wm != m {
        return Err(Error::shape(
            "affine",
            format!("input width {m} vs weight rows {wm}"),
        ));
    }
    if bias.shape() != [n] {
        return Err(Error::shape(
            "affine",
            format!("bias {:?} vs output width {n}", bias.shape()),
        ));
    }
    let mut out = matmul(x.data(), weight.data(), b, m, n);
    for row in out.chunks_exact_mut(n.max(1)) {
        for (o, bv) in row.iter_mut().zip(bias.data()) {
            *o += bv;
        }
    }
    let out = Tensor::from_parts(vec![b, n], out);
    out.ensure_finite("affine")?;
    Ok(out)
}

/// Gradients of an affine map given the upstream gradient `grad_out` (`b×n`).
/// Returns `(d_input, d_weight, d_bias)`.
pub fn affine_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, m) = require_matrix("affine_backward", x)?;
    let (_, n) = require_matrix("affine_backward", weight)?;
    if grad_out.shape() != [b, n] {
        return Err(Error::shape(
            "affine_backward",
            format!("upstream {:?} vs expected [{b}, {n}]", grad_out.shape()),
        ));
    }
    let dx = matmul_nt(grad_out.data(), weight.data(), b, n, m);
    let dw = matmul_tn(x.data(), grad_out.data(), b, m, n);
    let mut db = vec![0.0; n];
    for row in grad_out.data().chunks_exact(n.max(1)) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    Ok((
        Tensor::from_parts(vec![b, m], dx),
        Tensor::from_parts(vec![m, n], dw),
        Tensor::from_parts(vec![n], db),
    ))
}

/// Input gradient of an affine map: `grad_out · Wᵀ`.
pub fn affine_backward_input(weight: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (m, n) = require_matrix("affine_backward_input", weight)?;
    let (b, gn) = require_matrix("affine_backward_input", grad_out)?;
    if gn != n {
        return Err(Error::shape(
            "affine_backward_input",
            format!("upstream width {gn} vs weight columns {n}"),
        ));
    }
    Ok(Tensor::from_parts(
        vec![b, m],
        matmul_nt(grad_out.data(), weight.data(), b, n, m),
    ))
}

pub fn relu(t: &Tensor) -> Tensor {
    let data = t
        .data()
        .iter()
        .map(|&v| if v > 0.0 { v } else { 0.0 })
        .collect();
    Tensor::from_parts(t.shape().to_vec(), data)
}

pub fn relu_backward(pre: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = pre
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_parts(pre.shape().to_vec(), data)
}

/// Logistic function, branching on sign so that large `|t|` never overflows.
#[inline]
pub fn sigmoid_scalar(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(t: &Tensor) -> Tensor {
    let data = t.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::from_parts(t.shape().to_vec(), data)
}

/// `grad_out ⊙ σ(pre)(1 − σ(pre))`.
pub fn sigmoid_backward(pre: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = pre
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&p, &g)| {
            let s = sigmoid_scalar(p);
            g * s * (1.0 - s)
        })
        .collect();
    Tensor::from_parts(pre.shape().to_vec(), data)
}

/// Log-softmax of one row. The largest entry is computed as `-ln(1 + Σ_{i≠max} e^{z_i - max})`
/// so that confident rows keep full relative precision.
pub fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let (arg, m) = row
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(ai, am), (i, &v)| {
            if v > am {
                (i, v)
            } else {
                (ai, am)
            }
        });
    let rest: f64 = row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, &v)| (v - m).exp())
        .sum();
    let log_norm = rest.ln_1p();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - m) - log_norm;
    }
}

pub fn softmax_row(row: &[f64], out: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row-wise softmax of a `b×c` logit batch.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (b, c) = require_matrix("softmax", logits)?;
    let mut out = vec![0.0; b * c];
    if c > 0 {
        for (row, o) in logits.data().chunks_exact(c).zip(out.chunks_exact_mut(c)) {
            softmax_row(row, o);
        }
    }
    Ok(Tensor::from_parts(vec![b, c], out))
}

/// Checks that each row of `target` is a probability vector.
pub fn validate_distribution(target: &Tensor) -> Result<()> {
    let c = target.cols();
    for (row_idx, row) in target.data().chunks_exact(c.max(1)).enumerate() {
        if let Some(v) = row.iter().find(|&&v| v < 0.0) {
            return Err(Error::InvalidTarget {
                row: row_idx,
                detail: format!("negative entry {v}"),
            });
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > TARGET_SUM_TOLERANCE {
            return Err(Error::InvalidTarget {
                row: row_idx,
                detail: format!("row sums to {sum}"),
            });
        }
    }
    Ok(())
}

/// Batch-mean cross-entropy `-Σ target · log softmax(logits)` against soft targets.
///
/// The gradient with respect to the logits is `(softmax - target) / b`.
pub fn softmax_xent(logits: &Tensor, target: &Tensor) -> Result<LossGrad> {
    let (b, c) = require_matrix("softmax_xent", logits)?;
    if target.shape() != logits.shape() {
        return Err(Error::shape(
            "softmax_xent",
            format!("logits {:?} vs target {:?}", logits.shape(), target.shape()),
        ));
    }
    validate_distribution(target)?;
    if b == 0 {
        return Ok(LossGrad {
            loss: 0.0,
            grad: Tensor::zeros(&[0, c]),
        });
    }
    let inv_b = 1.0 / b as f64;
    let mut logp = vec![0.0; c];
    let mut grad = vec![0.0; b * c];
    let mut loss = 0.0;
    for ((row, t), g) in logits
        .data()
        .chunks_exact(c)
        .zip(target.data().chunks_exact(c))
        .zip(grad.chunks_exact_mut(c))
    {
        log_softmax_row(row, &mut logp);
        for j in 0..c {
            if t[j] != 0.0 {
                loss -= t[j] * logp[j];
            }
            g[j] = (logp[j].exp() - t[j]) * inv_b;
        }
    }
    let loss = loss * inv_b;
    if !loss.is_finite() {
        return Err(Error::NonFinite("softmax_xent"));
    }
    Ok(LossGrad {
        loss,
        grad: Tensor::from_parts(vec![b, c], grad),
    })
}

/// Batch-mean `KL(softmax(p_logits) ‖ softmax(q_logits))` with gradients for both inputs.
pub fn kl_divergence(p_logits: &Tensor, q_logits: &Tensor) -> Result<KlGrad> {
    let (b, c) = require_matrix("kl_divergence", p_logits)?;
    if q_logits.shape() != p_logits.shape() {
        return Err(Error::shape(
            "kl_divergence",
            format!("{:?} vs {:?}", p_logits.shape(), q_logits.shape()),
        ));
    }
    if b == 0 {
        return Ok(KlGrad {
            loss: 0.0,
            grad_p: Tensor::zeros(&[0, c]),
            grad_q: Tensor::zeros(&[0, c]),
        });
    }
    let inv_b = 1.0 / b as f64;
    let mut logp = vec![0.0; c];
    let mut logq = vec![0.0; c];
    let mut grad_p = vec![0.0; b * c];
    let mut grad_q = vec![0.0; b * c];
    let mut total = 0.0;
    for (((pr, qr), gp), gq) in p_logits
        .data()
        .chunks_exact(c)
        .zip(q_logits.data().chunks_exact(c))
        .zip(grad_p.chunks_exact_mut(c))
        .zip(grad_q.chunks_exact_mut(c))
    {
        log_softmax_row(pr, &mut logp);
        log_softmax_row(qr, &mut logq);
        let kl: f64 = (0..c)
            .map(|j| logp[j].exp() * (logp[j] - logq[j]))
            .sum::<f64>()
            .max(0.0);
        for j in 0..c {
            let p = logp[j].exp();
            gp[j] = p * ((logp[j] - logq[j]) - kl) * inv_b;
            gq[j] = (logq[j].exp() - p) * inv_b;
        }
        total += kl;
    }
    let loss = total * inv_b;
    if !loss.is_finite() {
        return Err(Error::NonFinite("kl_divergence"));
    }
    Ok(KlGrad {
        loss,
        grad_p: Tensor::from_parts(vec![b, c], grad_p),
        grad_q: Tensor::from_parts(vec![b, c], grad_q),
    })
}

/// Batch-mean binary cross-entropy of `σ(logit)` against targets in `[0, 1]`.
///
/// Accepts logits of shape `[b]` or `[b, 1]`; the gradient is `(σ - t) / b`.
pub fn bce_with_logits(logits: &Tensor, targets: &[f64]) -> Result<LossGrad> {
    if logits.len() != targets.len() || logits.cols() != 1 {
        return Err(Error::shape(
            "bce_with_logits",
            format!("logits {:?} vs {} targets", logits.shape(), targets.len()),
        ));
    }
    if let Some((row, t)) = targets
        .iter()
        .enumerate()
        .find(|(_, t)| !(0.0..=1.0).contains(*t))
    {
        return Err(Error::InvalidTarget {
            row,
            detail: format!("binary target {t} outside [0, 1]"),
        });
    }
    let b = targets.len();
    if b == 0 {
        return Ok(LossGrad {
            loss: 0.0,
            grad: logits.clone(),
        });
    }
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let grad: Vec<f64> = logits
        .data()
        .iter()
        .zip(targets)
        .map(|(&z, &t)| {
            loss += z.max(0.0) - t * z + (-z.abs()).exp().ln_1p();
            (sigmoid_scalar(z) - t) * inv_b
        })
        .collect();
    Ok(LossGrad {
        loss: loss * inv_b,
        grad: Tensor::from_parts(logits.shape().to_vec(), grad),
    })
}

/// Batch-mean of `½‖pred − target‖²` per row.
pub fn squared_error(pred: &Tensor, target: &Tensor) -> Result<LossGrad> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "squared_error",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let b = pred.rows().max(1) as f64;
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += 0.5 * d * d;
            d / b
        })
        .collect();
    Ok(LossGrad {
        loss: loss / b,
        grad: Tensor::from_parts(pred.shape().to_vec(), grad),
    })
}

/// One-hot rows for class indices.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {classes} classes"
            )));
        }
        data[i * classes + l] = 1.0;
    }
    Ok(Tensor::from_parts(vec![labels.len(), classes], data))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn affine_examples() {
        let out = affine(
            &t(&[&[1.0, 2.0]]),
            &t(&[&[1.0, 0.0], &[0.0, 1.0]]),
            &Tensor::vector(vec![0.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);

        let out = affine(
            &t(&[&[0.0, 0.0]]),
            &t(&[&[0.7, -2.0], &[5.0, 1.5]]),
            &Tensor::vector(vec![3.0, -1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(out.data(), &[3.0, -1.0]);

        // 1*2 + 1*3 - 5
        let out = affine(
            &t(&[&[1.0, 1.0]]),
            &t(&[&[2.0], &[3.0]]),
            &Tensor::vector(vec![-5.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(out.data(), &[0.0]);
    }

    #[test]
    fn affine_shape_mismatch() {
        let err = affine(
            &t(&[&[1.0, 2.0, 3.0]]),
            &t(&[&[1.0], &[1.0]]),
            &Tensor::vector(vec![0.0]).unwrap(),
        );
        assert!(matches!(err, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert_eq!(sigmoid_scalar(800.0), 1.0);
        assert_eq!(sigmoid_scalar(-800.0), 0.0);
        assert_abs_diff_eq!(sigmoid_scalar(3.0_f64.ln()), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn xent_uniform_is_ln_c() {
        for c in 2..12 {
            let logits = Tensor::filled(&[3, c], 0.4);
            let target = Tensor::filled(&[3, c], 1.0 / c as f64);
            let lg = softmax_xent(&logits, &target).unwrap();
            assert_abs_diff_eq!(lg.loss, (c as f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn xent_confident_case_keeps_precision() {
        let lg = softmax_xent(&t(&[&[10.0, -10.0]]), &t(&[&[1.0, 0.0]])).unwrap();
        let expected = (-20.0_f64).exp().ln_1p();
        assert!((lg.loss - expected).abs() / expected < 1e-9);
        assert!((lg.loss - 2.061e-9).abs() < 1e-12);
    }

    #[test]
    fn xent_gradient_against_uniform_target() {
        let logits = t(&[&[1.0, -0.5, 2.0], &[0.0, 0.3, -1.0]]);
        let target = Tensor::filled(&[2, 3], 1.0 / 3.0);
        let lg = softmax_xent(&logits, &target).unwrap();
        let sm = softmax(&logits).unwrap();
        for (g, s) in lg.grad.data().iter().zip(sm.data()) {
            assert_abs_diff_eq!(*g, (s - 1.0 / 3.0) / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn xent_rejects_bad_targets() {
        let logits = Tensor::zeros(&[1, 2]);
        assert!(matches!(
            softmax_xent(&logits, &t(&[&[0.7, 0.7]])),
            Err(Error::InvalidTarget { .. })
        ));
        assert!(matches!(
            softmax_xent(&logits, &t(&[&[1.5, -0.5]])),
            Err(Error::InvalidTarget { .. })
        ));
    }

    #[test]
    fn kl_examples() {
        let a = t(&[&[0.3, -1.2, 2.0]]);
        assert_abs_diff_eq!(kl_divergence(&a, &a).unwrap().loss, 0.0, epsilon = 1e-15);

        // softmax([0,0]) = [1/2, 1/2], softmax([ln 2, 0]) = [2/3, 1/3]
        let kl = kl_divergence(&t(&[&[0.0, 0.0]]), &t(&[&[2.0_f64.ln(), 0.0]])).unwrap();
        let oracle = 0.5 * (0.5_f64 / (2.0 / 3.0)).ln() + 0.5 * (0.5_f64 / (1.0 / 3.0)).ln();
        assert_abs_diff_eq!(kl.loss, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(kl.loss, 0.058_891_517_828_191_4, epsilon = 1e-12);
    }

    #[test]
    fn bce_matches_closed_form() {
        let lg = bce_with_logits(&Tensor::vector(vec![0.0, 2.0]).unwrap(), &[1.0, 0.0]).unwrap();
        let expected = (2.0_f64.ln() + (1.0 + 2.0_f64.exp()).ln()) / 2.0;
        assert_abs_diff_eq!(lg.loss, expected, epsilon = 1e-14);
        assert_abs_diff_eq!(lg.grad.data()[0], (0.5 - 1.0) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let row = [3.0, -1.0, 0.5, 0.5];
        let mut out = [0.0; 4];
        log_softmax_row(&row, &mut out);
        let s: f64 = out.iter().map(|v| v.exp()).sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
