use rand::Rng;

use crate::attacks::{pgd, AttackConfig, AttackLoss};
use crate::biamat::config::{AuxLoss, PrimaryLoss, TrainConfig};
use crate::biamat::routing::{route_with, RoutingResult, ThresholdState, YerLabel};
use crate::error::{Error, Result};
use crate::models::{Head, MultiHeadNet, NetGrads};
use crate::numerics::ops::{kl_divergence, one_hot, softmax, softmax_xent};
use crate::numerics::{LossGrad, Tensor};

/// A scalar loss with its parameter gradients.
#[derive(Debug, Clone)]
pub struct LossTerm {
    pub loss: f64,
    pub grads: NetGrads,
}

impl LossTerm {
    pub fn zero(net: &MultiHeadNet) -> Self {
        Self {
            loss: 0.0,
            grads: NetGrads::zeros_like(net),
        }
    }

    fn scaled(mut self, factor: f64) -> Self {
        self.loss *= factor;
        for t in self
            .grads
            .trunk
            .iter_mut()
            .chain(&mut self.grads.head_pri)
            .chain(&mut self.grads.head_aux)
        {
            t.scale(factor);
        }
        self
    }
}

/// `CE(nat, target) + β·KL(softmax(nat) ‖ softmax(adv))` over logits stacked as
/// `[natural rows; adversarial rows]`.
fn trades_objective(stacked: &Tensor, target: &Tensor, beta: f64) -> Result<LossGrad> {
    let b = target.rows();
    let nat_idx: Vec<usize> = (0..b).collect();
    let adv_idx: Vec<usize> = (b..2 * b).collect();
    let nat = stacked.select_rows(&nat_idx);
    let adv = stacked.select_rows(&adv_idx);
    let ce = softmax_xent(&nat, target)?;
    let kl = kl_divergence(&nat, &adv)?;
    let mut g_nat = ce.grad;
    g_nat.axpy(beta, &kl.grad_p)?;
    let mut g_adv = kl.grad_q;
    g_adv.scale(beta);
    Ok(LossGrad {
        loss: ce.loss + beta * kl.loss,
        grad: Tensor::concat_rows(&[&g_nat, &g_adv])?,
    })
}

/// Adversarial loss of `head` against a (possibly soft) target.
///
/// AT-CE attacks the cross-entropy and trains on the attacked inputs. TRADES attacks
/// `KL(natural ‖ adversarial)` of the same head and trains on the combined objective.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_loss<R: Rng>(
    net: &MultiHeadNet,
    head: Head,
    x: &Tensor,
    target: &Tensor,
    kind: PrimaryLoss,
    beta: f64,
    attack: &AttackConfig,
    rng: &mut R,
) -> Result<LossTerm> {
    if x.rows() == 0 {
        return Ok(LossTerm::zero(net));
    }
    let g = match kind {
        PrimaryLoss::AtCe => {
            let cfg = attack.clone().with_loss(AttackLoss::CrossEntropy);
            let x_adv = pgd(net, head, x, target, &cfg, rng)?;
            net.loss_grad(head, &x_adv, |l| softmax_xent(l, target))?
        }
        PrimaryLoss::Trades => {
            let natural = softmax(&net.forward(head, x)?)?;
            let cfg = attack.clone().with_loss(AttackLoss::KlVsNatural);
            let x_adv = pgd(net, head, x, &natural, &cfg, rng)?;
            let stacked = Tensor::concat_rows(&[x, &x_adv])?;
            net.loss_grad(head, &stacked, |l| trades_objective(l, target, beta))?
        }
    };
    Ok(LossTerm {
        loss: g.loss,
        grads: g.grads,
    })
}

/// `ℓ = E[ℓ_adv(x, y; h_pri, S)]` over a primary batch with one-hot (or soft) targets.
pub fn primary_adv_loss<R: Rng>(
    net: &MultiHeadNet,
    x: &Tensor,
    target: &Tensor,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossTerm> {
    adversarial_loss(
        net,
        Head::Primary,
        x,
        target,
        cfg.primary_loss,
        cfg.trades_beta,
        &cfg.attack,
        rng,
    )
}

/// The two auxiliary terms, each already normalized by the full auxiliary batch size.
#[derive(Debug, Clone)]
pub struct AuxTerms {
    pub high: LossTerm,
    pub low: LossTerm,
}

impl AuxTerms {
    pub fn loss(&self) -> f64 {
        self.high.loss + self.low.loss
    }

    pub fn grads(&self) -> Result<NetGrads> {
        let mut g = self.high.grads.clone();
        g.axpy(1.0, &self.low.grads)?;
        Ok(g)
    }
}

/// `(1/|B̃|)·[Σ_high ℓ_adv(x̃, ỹ; h_aux) + Σ_low ℓ_adv(x̃, y^ER; h_pri)]`.
pub fn auxiliary_adv_loss<R: Rng>(
    net: &MultiHeadNet,
    x: &Tensor,
    labels: &[usize],
    routing: &RoutingResult,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<AuxTerms> {
    let n = x.rows();
    if labels.len() != n || !routing.is_partition_of(n) {
        return Err(Error::shape(
            "auxiliary_adv_loss",
            format!(
                "{n} inputs, {} labels, routing over {}",
                labels.len(),
                routing.len()
            ),
        ));
    }
    let kind = match cfg.aux_loss {
        AuxLoss::SameAsPrimary => cfg.primary_loss,
        AuxLoss::Ce => PrimaryLoss::AtCe,
    };
    let arch = net.architecture();
    let mut high = LossTerm::zero(net);
    let mut low = LossTerm::zero(net);
    if !routing.high.is_empty() {
        let ys: Vec<usize> = routing.high.iter().map(|&i| labels[i]).collect();
        if let Some(&bad) = ys.iter().find(|&&y| y >= arch.classes_aux) {
            return Err(Error::InvalidArgument(format!(
                "auxiliary label {bad} out of range for {} classes",
                arch.classes_aux
            )));
        }
        let xs = x.select_rows(&routing.high);
        let t = one_hot(&ys, arch.classes_aux)?;
        high = adversarial_loss(
            net,
            Head::Auxiliary,
            &xs,
            &t,
            kind,
            cfg.trades_beta,
            &cfg.attack,
            rng,
        )?
        .scaled(routing.high.len() as f64 / n as f64);
    }
    if !routing.low.is_empty() {
        let xs = x.select_rows(&routing.low);
        let t = YerLabel::new(arch.classes_pri)?.batch(routing.low.len());
        low = adversarial_loss(
            net,
            Head::Primary,
            &xs,
            &t,
            kind,
            cfg.trades_beta,
            &cfg.attack,
            rng,
        )?
        .scaled(routing.low.len() as f64 / n as f64);
    }
    Ok(AuxTerms { high, low })
}

/// Everything one step of the combined loss produces before the parameter update.
#[derive(Debug, Clone)]
pub struct StepGradients {
    pub primary: LossTerm,
    /// Absent when the auxiliary branch is disabled (α = 0 or no auxiliary batch).
    pub aux: Option<(RoutingResult, AuxTerms)>,
    /// `∇ℓ + α·∇ℓ̃`.
    pub total: NetGrads,
}

/// Random streams consumed inside a step; kept separate so that the auxiliary branch
/// never perturbs the primary trajectory.
pub struct StepRngs<'a, R: Rng> {
    pub primary_attack: &'a mut R,
    pub aux_attack: &'a mut R,
}

/// Auxiliary minibatch with its threshold.
pub struct AuxBatch<'a> {
    pub x: &'a Tensor,
    pub labels: &'a [usize],
    pub threshold: &'a ThresholdState,
}

pub fn step_gradients<R: Rng>(
    net: &MultiHeadNet,
    pri_x: &Tensor,
    pri_target: &Tensor,
    aux: Option<AuxBatch<'_>>,
    cfg: &TrainConfig,
    rngs: StepRngs<'_, R>,
) -> Result<StepGradients> {
    let primary = primary_adv_loss(net, pri_x, pri_target, cfg, rngs.primary_attack)?;
    let mut total = primary.grads.clone();
    let aux = match aux {
        Some(batch) if cfg.alpha > 0.0 => {
            let routing = route_with(net, batch.x, batch.threshold, cfg.routing)?;
            let terms =
                auxiliary_adv_loss(net, batch.x, batch.labels, &routing, cfg, rngs.aux_attack)?;
            total.axpy(cfg.alpha, &terms.grads()?)?;
            Some((routing, terms))
        }
        _ => None,
    };
    let loss = primary.loss + aux.as_ref().map_or(0.0, |(_, t)| cfg.alpha * t.loss());
    if !loss.is_finite() {
        return Err(Error::NonFinite("biamat step loss"));
    }
    Ok(StepGradients {
        primary,
        aux,
        total,
    })
}

/// One descent step on `ℓ + α·(ℓ_low + ℓ_high)`; returns the terms it was built from.
#[allow(clippy::too_many_arguments)]
pub fn biamat_step<R: Rng>(
    net: &mut MultiHeadNet,
    opt: &mut Sgd,
    pri_x: &Tensor,
    pri_target: &Tensor,
    aux: Option<AuxBatch<'_>>,
    cfg: &TrainConfig,
    lr: f64,
    rngs: StepRngs<'_, R>,
) -> Result<StepGradients> {
    let sg = step_gradients(net, pri_x, pri_target, aux, cfg, rngs)?;
    opt.step(net, &sg.total, lr)?;
    Ok(sg)
}

/// SGD with heavy-ball momentum and L2 weight decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Option<Vec<Tensor>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: None,
        }
    }

    /// `v ← μv + (∇ + λθ)`, `θ ← θ − τv`.
    pub fn step(&mut self, net: &mut MultiHeadNet, grads: &NetGrads, lr: f64) -> Result<()> {
        let params = net.tensors_mut();
        let velocity = self
            .velocity
            .get_or_insert_with(|| params.iter().map(|p| Tensor::zeros(p.shape())).collect());
        for ((p, g), v) in params
            .into_iter()
            .zip(grads.tensors())
            .zip(velocity.iter_mut())
        {
            v.scale(self.momentum);
            v.axpy(1.0, g)?;
            if self.weight_decay > 0.0 {
                v.axpy(self.weight_decay, p)?;
            }
            p.axpy(-lr, v)?;
            p.ensure_finite("Sgd::step")?;
        }
        Ok(())
    }
}
