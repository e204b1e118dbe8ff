//! ℓ∞ white-box attacks: FGSM, PGD^K with cross-entropy, CW-margin or KL-vs-natural losses.
//!
//! Every iterate is projected onto the ε-ball around the natural input so that
//! `|x_adv − x| ≤ ε` holds exactly in floating point, then clamped to the optional box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Head, MultiHeadNet};
use crate::numerics::ops::{argmax, sign, softmax, softmax_xent, validate_distribution};
use crate::numerics::{LossGrad, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackLoss {
    CrossEntropy,
    CwMargin,
    /// `KL(p_natural ‖ p_adv)` against a distribution fixed before the first step.
    KlVsNatural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub step: f64,
    pub iters: usize,
    pub loss: AttackLoss,
    pub random_start: bool,
    pub clamp: Option<(f64, f64)>,
}

impl AttackConfig {
    /// Single full-budget step without random start.
    pub fn fgsm(epsilon: f64) -> Self {
        Self {
            epsilon,
            step: epsilon,
            iters: 1,
            loss: AttackLoss::CrossEntropy,
            random_start: false,
            clamp: None,
        }
    }

    /// `iters` steps of size `ε/4` with a random start.
    pub fn pgd(epsilon: f64, iters: usize) -> Self {
        Self {
            epsilon,
            step: epsilon / 4.0,
            iters,
            loss: AttackLoss::CrossEntropy,
            random_start: true,
            clamp: None,
        }
    }

    pub fn with_loss(mut self, loss: AttackLoss) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_random_start(mut self, on: bool) -> Self {
        self.random_start = on;
        self
    }

    pub fn with_clamp(mut self, lo: f64, hi: f64) -> Self {
        self.clamp = Some((lo, hi));
        self
    }

    /// A zero budget is accepted and makes every attack the identity.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        if self.epsilon > 0.0 && !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.iters == 0 {
            return Err(Error::InvalidArgument("iters must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "clamp box [{lo}, {hi}] is empty"
                )));
            }
        }
        Ok(())
    }
}

/// Untargeted margin `max_{j≠y} logit_j − logit_y`, averaged over the batch, with its
/// gradient. The attacker maximizes it.
pub fn cw_margin_loss(logits: &Tensor, labels: &[usize]) -> Result<LossGrad> {
    let (b, c) = (logits.rows(), logits.cols());
    if c < 2 {
        return Err(Error::InvalidArgument(format!(
            "margin needs c ≥ 2, got {c}"
        )));
    }
    if labels.len() != b {
        return Err(Error::shape(
            "cw_margin_loss",
            format!("{} labels for {b} rows", labels.len()),
        ));
    }
    let mut grad = Tensor::zeros(&[b, c]);
    let mut total = 0.0;
    let scale = 1.0 / b as f64;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::InvalidArgument(format!(
                "class index {y} out of range for {c} classes"
            )));
        }
        let row = logits.row(i);
        let rival = (0..c)
            .filter(|&j| j != y)
            .fold(None, |best: Option<usize>, j| match best {
                Some(k) if row[k] >= row[j] => Some(k),
                _ => Some(j),
            })
            .expect("c ≥ 2");
        total += row[rival] - row[y];
        let g = grad.row_mut(i);
        g[rival] = scale;
        g[y] = -scale;
    }
    Ok(LossGrad {
        loss: total * scale,
        grad,
    })
}

/// `mean KL(target ‖ softmax(logits))` with the gradient `(softmax(logits) − target)/b`.
pub fn kl_to_fixed(logits: &Tensor, target: &Tensor) -> Result<LossGrad> {
    if logits.shape() != target.shape() {
        return Err(Error::shape(
            "kl_to_fixed",
            format!("logits {:?} vs target {:?}", logits.shape(), target.shape()),
        ));
    }
    validate_distribution(target)?;
    let xent = softmax_xent(logits, target)?;
    let b = logits.rows().max(1) as f64;
    let neg_entropy: f64 = target
        .data()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum();
    Ok(LossGrad {
        loss: xent.loss + neg_entropy / b,
        grad: xent.grad,
    })
}

/// The primary head's prediction on natural inputs, fixed for a KL-vs-natural attack.
pub fn kl_attack_target(net: &MultiHeadNet, x_natural: &Tensor) -> Result<Tensor> {
    softmax(&net.forward_pri(x_natural)?)
}

/// Attack loss for `kind` at the given logits. For the margin loss the label of each row is
/// the argmax of `target`.
pub fn attack_loss(kind: AttackLoss, logits: &Tensor, target: &Tensor) -> Result<LossGrad> {
    match kind {
        AttackLoss::CrossEntropy => softmax_xent(logits, target),
        AttackLoss::CwMargin => {
            let labels: Vec<usize> = (0..target.rows()).map(|i| argmax(target.row(i))).collect();
            cw_margin_loss(logits, &labels)
        }
        AttackLoss::KlVsNatural => kl_to_fixed(logits, target),
    }
}

/// Smallest-magnitude adjustment of `v` so that `|v − x| ≤ eps` holds exactly.
#[inline]
fn project(v: f64, x: f64, eps: f64) -> f64 {
    let mut p = v.clamp(x - eps, x + eps);
    while p - x > eps {
        p = p.next_down();
    }
    while x - p > eps {
        p = p.next_up();
    }
    p
}

#[inline]
fn finish(v: f64, x: f64, cfg: &AttackConfig) -> f64 {
    let p = project(v, x, cfg.epsilon);
    match cfg.clamp {
        Some((lo, hi)) => p.clamp(lo, hi),
        None => p,
    }
}

/// One signed ascent step from `current`, projected around `natural`.
fn ascend(natural: &Tensor, current: &mut Tensor, grad: &Tensor, step: f64, cfg: &AttackConfig) {
    for ((c, &x), &g) in current
        .data_mut()
        .iter_mut()
        .zip(natural.data())
        .zip(grad.data())
    {
        *c = finish(*c + step * sign(g), x, cfg);
    }
}

fn check(
    net: &MultiHeadNet,
    head: Head,
    x: &Tensor,
    target: &Tensor,
    cfg: &AttackConfig,
) -> Result<()> {
    cfg.validate()?;
    let c = net.architecture().classes(head);
    if x.rank() != 2 || target.shape() != [x.rows(), c] {
        return Err(Error::shape(
            "attack",
            format!(
                "input {:?}, target {:?}, head with {c} classes",
                x.shape(),
                target.shape()
            ),
        ));
    }
    Ok(())
}

fn loss_input_grad(
    net: &MultiHeadNet,
    head: Head,
    x: &Tensor,
    target: &Tensor,
    kind: AttackLoss,
) -> Result<(f64, Tensor)> {
    net.input_grad(head, x, |logits| attack_loss(kind, logits, target))
}

/// `clamp(x + ε·sign(∇_x loss))`.
pub fn fgsm(
    net: &MultiHeadNet,
    head: Head,
    x: &Tensor,
    target: &Tensor,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    check(net, head, x, target, cfg)?;
    let mut adv = x.clone();
    if cfg.epsilon == 0.0 {
        return Ok(adv);
    }
    let (_, g) = loss_input_grad(net, head, x, target, cfg.loss)?;
    ascend(x, &mut adv, &g, cfg.epsilon, cfg);
    Ok(adv)
}

/// Projected gradient ascent on the attack loss for `cfg.iters` steps.
pub fn pgd<R: Rng>(
    net: &MultiHeadNet,
    head: Head,
    x: &Tensor,
    target: &Tensor,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<Tensor> {
    pgd_observed(net, head, x, target, cfg, rng, |_| {})
}

/// [`pgd`] calling `observe` on the starting point and after every step.
pub fn pgd_observed<R: Rng, F: FnMut(&Tensor)>(
    net: &MultiHeadNet,
    head: Head,
    x: &Tensor,
    target: &Tensor,
    cfg: &AttackConfig,
    rng: &mut R,
    mut observe: F,
) -> Result<Tensor> {
    check(net, head, x, target, cfg)?;
    let mut adv = x.clone();
    if cfg.epsilon == 0.0 {
        observe(&adv);
        return Ok(adv);
    }
    if cfg.random_start {
        for (a, &xv) in adv.data_mut().iter_mut().zip(x.data()) {
            let delta = rng.random_range(-cfg.epsilon..=cfg.epsilon);
            *a = finish(xv + delta, xv, cfg);
        }
    }
    observe(&adv);
    for _ in 0..cfg.iters {
        let (_, g) = loss_input_grad(net, head, &adv, target, cfg.loss)?;
        ascend(x, &mut adv, &g, cfg.step, cfg);
        observe(&adv);
    }
    Ok(adv)
}

/// Mean attack loss at `x`; used by tests and diagnostics.
pub fn mean_attack_loss(
    net: &MultiHeadNet,
    head: Head,
    x: &Tensor,
    target: &Tensor,
    kind: AttackLoss,
) -> Result<f64> {
    Ok(attack_loss(kind, &net.forward(head, x)?, target)?.loss)
}
