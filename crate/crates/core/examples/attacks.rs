//! FGSM and PGD against a freshly initialized network, with the ℓ∞ distance of each.

use biamat::attacks::{fgsm, pgd, AttackConfig, AttackLoss};
use biamat::harness::config::toy_params;
use biamat::harness::dataset::{generate_dataset, DatasetKind, DatasetSpec};
use biamat::models::{Architecture, Head, MultiHeadNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> biamat::Result<()> {
    let data = generate_dataset(&DatasetSpec::gauss(
        DatasetKind::GaussPrimary,
        toy_params(),
        8,
        1,
    ))?;
    let net = MultiHeadNet::new(Architecture::desk(data.width()), 0)?;
    let target = data.one_hot()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let eps = 0.25;
    let runs = [
        (
            "FGSM",
            fgsm(
                &net,
                Head::Primary,
                data.x(),
                &target,
                &AttackConfig::fgsm(eps),
            )?,
        ),
        (
            "PGD20",
            pgd(
                &net,
                Head::Primary,
                data.x(),
                &target,
                &AttackConfig::pgd(eps, 20),
                &mut rng,
            )?,
        ),
        (
            "CW20",
            pgd(
                &net,
                Head::Primary,
                data.x(),
                &target,
                &AttackConfig::pgd(eps, 20).with_loss(AttackLoss::CwMargin),
                &mut rng,
            )?,
        ),
    ];
    for (name, adv) in runs {
        println!(
            "{name:>5}: ||x_adv - x||_inf = {:.6}",
            adv.max_abs_diff(data.x())
        );
    }
    Ok(())
}
