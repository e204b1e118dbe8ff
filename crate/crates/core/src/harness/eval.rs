use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{pgd, AttackConfig, AttackLoss};
use crate::data::Dataset;
use crate::error::Result;
use crate::models::{Head, MultiHeadNet};
use crate::numerics::ops::{argmax, one_hot};
use crate::numerics::Tensor;

/// Rows evaluated per forward pass.
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustAccuracy {
    pub attack: String,
    pub accuracy: f64,
}

/// Clean accuracy followed by one robust accuracy per attack, in the order given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub clean: f64,
    pub robust: Vec<RobustAccuracy>,
}

impl AccuracyTable {
    pub fn get(&self, attack: &str) -> Option<f64> {
        self.robust
            .iter()
            .find(|r| r.attack == attack)
            .map(|r| r.accuracy)
    }
}

/// `PGD20`, `CW20`, `FGSM`, ... derived from the loss and iteration count.
pub fn attack_name(cfg: &AttackConfig) -> String {
    match (cfg.loss, cfg.iters, cfg.random_start) {
        (AttackLoss::CrossEntropy, 1, false) => "FGSM".into(),
        (AttackLoss::CrossEntropy, k, _) => format!("PGD{k}"),
        (AttackLoss::CwMargin, k, _) => format!("CW{k}"),
        (AttackLoss::KlVsNatural, k, _) => format!("KL{k}"),
    }
}

fn predictions(net: &MultiHeadNet, x: &Tensor) -> Result<Vec<usize>> {
    let logits = net.forward_pri(x)?;
    Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
}

/// Top-1 accuracy of the primary head on natural inputs.
pub fn clean_accuracy(net: &MultiHeadNet, data: &Dataset) -> Result<f64> {
    Ok(evaluate_robustness(net, data, &[], 0)?.clean)
}

/// A sample counts as robust only when it is classified correctly both at the natural
/// input and at the attacked one, so robust accuracy never exceeds clean accuracy.
pub fn evaluate_robustness(
    net: &MultiHeadNet,
    data: &Dataset,
    attacks: &[AttackConfig],
    seed: u64,
) -> Result<AccuracyTable> {
    let n = data.len();
    let mut clean_hits = 0usize;
    let mut robust_hits = vec![0usize; attacks.len()];
    let mut rngs: Vec<ChaCha8Rng> = (0..attacks.len())
        .map(|k| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k as u64);
            r
        })
        .collect();
    let classes = net.architecture().classes_pri;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let x = data.x().select_rows(&idx);
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
        let correct: Vec<bool> = predictions(net, &x)?
            .iter()
            .zip(&labels)
            .map(|(p, y)| p == y)
            .collect();
        clean_hits += correct.iter().filter(|&&c| c).count();
        let target = one_hot(&labels, classes)?;
        for (k, cfg) in attacks.iter().enumerate() {
            let adv = pgd(net, Head::Primary, &x, &target, cfg, &mut rngs[k])?;
            robust_hits[k] += predictions(net, &adv)?
                .iter()
                .zip(&labels)
                .zip(&correct)
                .filter(|((p, y), &c)| c && p == y)
                .count();
        }
    }
    let frac = |h: usize| if n == 0 { 0.0 } else { h as f64 / n as f64 };
    Ok(AccuracyTable {
        clean: frac(clean_hits),
        robust: attacks
            .iter()
            .zip(robust_hits)
            .map(|(cfg, h)| RobustAccuracy {
                attack: attack_name(cfg),
                accuracy: frac(h),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Architecture;

    fn setup() -> (MultiHeadNet, Dataset) {
        let net = MultiHeadNet::new(
            Architecture {
                input: 2,
                hidden: vec![],
                classes_pri: 2,
                classes_aux: 2,
            },
            3,
        )
        .unwrap();
        let rows: Vec<[f64; 2]> = (0..40)
            .map(|i| [(i as f64 * 0.37).sin() * 2.0, (i as f64 * 0.91).cos() * 2.0])
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let labels = (0..40).map(|i| i % 2).collect();
        (net, Dataset::new(x, labels, 2).unwrap())
    }

    #[test]
    fn zero_budget_matches_clean_and_order_is_preserved() {
        let (net, data) = setup();
        let attacks = [
            AttackConfig::pgd(0.0, 5),
            AttackConfig::pgd(0.0, 5).with_loss(AttackLoss::CwMargin),
        ];
        let t = evaluate_robustness(&net, &data, &attacks, 1).unwrap();
        assert_eq!(t.robust[0].attack, "PGD5");
        assert_eq!(t.robust[1].attack, "CW5");
        assert_eq!(t.robust[0].accuracy, t.clean);
        assert_eq!(t.robust[1].accuracy, t.clean);
    }

    #[test]
    fn attacks_never_help() {
        let (net, data) = setup();
        let attacks = [AttackConfig::pgd(0.5, 10), AttackConfig::fgsm(0.5)];
        let t = evaluate_robustness(&net, &data, &attacks, 2).unwrap();
        assert!(t.robust.iter().all(|r| r.accuracy <= t.clean));
        assert_eq!(t.get("FGSM"), Some(t.robust[1].accuracy));
    }
}
