//! Monte Carlo verification of the feature-space results against their closed forms.
//!
//! Every verifier is a pure function of `(params, n, seed)`. Samples are streamed, so
//! memory stays at `O(d)` regardless of `n`. Mean checks are stratified by the label `y`.

use crate::error::{Error, Result};
use crate::gaussmodel::classifier::{feature_adversary_into, AttackLabel, LinearClassifier};
use crate::gaussmodel::report::{ReportBuilder, TheoremReport};
use crate::gaussmodel::sampling::{FeatureStream, Role, SampleKind};
use crate::gaussmodel::stats::{
    binomial_se, expected_sigmoid, normal_cdf, normal_pdf, simpson, Frequency, Moments,
};
use crate::gaussmodel::TheoryParams;
use crate::numerics::ops::sign;

/// Empirical frequency that counts as "with high probability".
pub const HIGH_PROBABILITY: f64 = 0.95;

/// Floor on the tolerance of mean checks, in feature units.
pub const MEAN_TOLERANCE_FLOOR: f64 = 0.01;

/// Number of non-robust coordinates sampled by the gradient-equality check.
pub const SAMPLED_COORDINATES: usize = 10;

/// Standard errors allowed between a Monte Carlo frequency and its exact value.
const CLOSED_FORM_SIGMAS: f64 = 4.0;

const STRATA: [i8; 2] = [1, -1];

fn stratum(y: i8) -> usize {
    usize::from(y < 0)
}

fn label_suffix(y: i8) -> &'static str {
    if y > 0 {
        "|y=+1"
    } else {
        "|y=-1"
    }
}

fn derived_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn require_samples(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Precondition(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    Ok(())
}

fn closed_form_tolerance(p: f64, n: u64) -> f64 {
    closed_form_tolerance_se(binomial_se(p, n))
}

fn closed_form_tolerance_se(se: f64) -> f64 {
    (CLOSED_FORM_SIGMAS * se).max(1e-4)
}

/// Non-robust coordinates (1-based feature index `i ≥ 2`, stored at `z[i-1]`) used by the
/// gradient-equality checks: evenly spaced over `2..=d+1`.
pub fn sampled_coordinates(d: usize) -> Vec<usize> {
    let k = SAMPLED_COORDINATES.min(d);
    let mut out: Vec<usize> = (0..k).map(|j| 1 + j * d / k).collect();
    out.dedup();
    out
}

/// Expected adversarial features against the auxiliary head with `w_unif`:
/// `E[z̃_adv_1] = y|γ|` and `E[z̃_adv_i] = (η|γ| − λ)y`.
pub fn verify_lemma2(params: &TheoryParams, n: usize, seed: u64) -> Result<TheoremReport> {
    params.validate()?;
    params.require_unit_correlation("lemma 2")?;
    require_samples(n)?;
    let d = params.d;
    let g = params.gamma.abs();
    let clf = LinearClassifier::uniform(d).scaled(params.gamma);
    let mut stream = FeatureStream::new(*params, SampleKind::Auxiliary, seed)?;

    let mut robust = [Moments::default(); 2];
    let mut pooled = [Moments::default(); 2];
    let mut per_coord = [vec![Moments::default(); d], vec![Moments::default(); d]];
    let mut z = vec![0.0; d + 1];
    let mut adv = vec![0.0; d + 1];
    for _ in 0..n {
        let (y, role) = stream.next_into(&mut z);
        let Role::Auxiliary { label } = role else {
            unreachable!()
        };
        feature_adversary_into(
            &z,
            &clf,
            AttackLabel::Binary(label),
            params.lambda,
            &mut adv,
        );
        let s = stratum(y);
        robust[s].push(adv[0]);
        for (i, &a) in adv[1..].iter().enumerate() {
            pooled[s].push(a);
            per_coord[s][i].push(a);
        }
    }

    let mut b = ReportBuilder::new("lemma2", params, n);
    for y in STRATA {
        let s = stratum(y);
        let yf = f64::from(y);
        let sfx = label_suffix(y);

        let se = robust[s].standard_error();
        b.within(
            &format!("mean_z1_adv{sfx}"),
            robust[s].mean(),
            yf * g,
            se,
            MEAN_TOLERANCE_FLOOR.max(3.0 * se),
        );

        let target = (params.eta * g - params.lambda) * yf;
        let se = pooled[s].standard_error();
        b.within(
            &format!("mean_zi_adv{sfx}"),
            pooled[s].mean(),
            target,
            se,
            MEAN_TOLERANCE_FLOOR.max(3.0 * se),
        );

        let worst = per_coord[s]
            .iter()
            .map(|m| (m.mean() - target).abs())
            .fold(0.0_f64, f64::max);
        let coord_se = per_coord[s]
            .iter()
            .map(Moments::standard_error)
            .fold(0.0_f64, f64::max);
        b.info(
            &format!("max_coordinate_deviation{sfx}"),
            worst,
            None,
            Some(coord_se),
        );
    }
    Ok(b.finish())
}

/// Gradient of the auxiliary loss at the adversarial features versus the primary one.
///
/// With `|γ| = 1` the two means must agree per sampled coordinate within
/// `3·(SE_aux + SE_pri)`; with `|γ| < 1` the sign of the auxiliary mean must be `−y`.
pub fn verify_theorem1(params: &TheoryParams, n: usize, seed: u64) -> Result<TheoremReport> {
    params.validate()?;
    require_samples(n)?;
    let d = params.d;
    let coords = sampled_coordinates(d);
    let strong = params.has_unit_correlation();

    let aux_clf = LinearClassifier::uniform(d).scaled(params.gamma);
    let pri_clf = LinearClassifier::uniform(d);
    let mut aux_stream = FeatureStream::new(*params, SampleKind::Auxiliary, seed)?;
    let mut pri_stream = FeatureStream::new(*params, SampleKind::Primary, derived_seed(seed, 1))?;

    let mut aux_grad = [
        vec![Moments::default(); coords.len()],
        vec![Moments::default(); coords.len()],
    ];
    let mut pri_grad = aux_grad.clone();
    let mut z = vec![0.0; d + 1];
    let mut adv = vec![0.0; d + 1];
    let mut grad = vec![0.0; d + 1];

    for _ in 0..n {
        let (y, role) = aux_stream.next_into(&mut z);
        let Role::Auxiliary { label } = role else {
            unreachable!()
        };
        let target = AttackLabel::Binary(label);
        feature_adversary_into(&z, &aux_clf, target, params.lambda, &mut adv);
        aux_clf.loss_grad_into(&adv, target.target(), &mut grad);
        for (k, &i) in coords.iter().enumerate() {
            aux_grad[stratum(y)][k].push(grad[i]);
        }

        let (y, _) = pri_stream.next_into(&mut z);
        let target = AttackLabel::Binary(y);
        feature_adversary_into(&z, &pri_clf, target, params.lambda, &mut adv);
        pri_clf.loss_grad_into(&adv, target.target(), &mut grad);
        for (k, &i) in coords.iter().enumerate() {
            pri_grad[stratum(y)][k].push(grad[i]);
        }
    }

    let worst_se = aux_grad
        .iter()
        .chain(&pri_grad)
        .flatten()
        .map(Moments::standard_error)
        .fold(0.0_f64, f64::max);
    if worst_se >= 1e-3 {
        return Err(Error::Precondition(format!(
            "n={n} leaves a gradient standard error of {worst_se:.2e} (need < 1e-3)"
        )));
    }

    let name = if strong { "theorem1" } else { "theorem1_weak" };
    let mut b = ReportBuilder::new(name, params, n);
    for y in STRATA {
        let s = stratum(y);
        let yf = f64::from(y);
        let t = (yf + 1.0) / 2.0;
        let sfx = label_suffix(y);
        // wᵀz_adv | y ~ N((η − λ)y, 1/d) for the primary model.
        let closed = (expected_sigmoid((params.eta - params.lambda) * yf, (1.0 / d as f64).sqrt())
            - t)
            / d as f64;
        for (k, &i) in coords.iter().enumerate() {
            let a = &aux_grad[s][k];
            let p = &pri_grad[s][k];
            let coord = i + 1;
            if strong {
                let se = a.standard_error() + p.standard_error();
                b.within(
                    &format!("grad_gap_z{coord}{sfx}"),
                    a.mean() - p.mean(),
                    0.0,
                    se,
                    3.0 * se,
                );
                b.info(
                    &format!("mean_aux_grad_z{coord}{sfx}"),
                    a.mean(),
                    Some(closed),
                    Some(a.standard_error()),
                );
            } else {
                b.sign_equals(
                    &format!("mean_aux_grad_z{coord}{sfx}"),
                    a.mean(),
                    -yf,
                    a.standard_error(),
                );
            }
            b.info(
                &format!("mean_pri_grad_z{coord}{sfx}"),
                p.mean(),
                Some(closed),
                Some(p.standard_error()),
            );
        }
    }
    Ok(b.finish())
}

/// Shuffled labels: `sign(z̃_adv_i) = −γ̂q = sign(∂ℓ̃/∂z̃_adv_i)` with high probability.
pub fn verify_theorem2(params: &TheoryParams, n: usize, seed: u64) -> Result<TheoremReport> {
    verify_theorem2_with_threshold(params, n, seed, HIGH_PROBABILITY)
}

pub fn verify_theorem2_with_threshold(
    params: &TheoryParams,
    n: usize,
    seed: u64,
    threshold: f64,
) -> Result<TheoremReport> {
    params.validate()?;
    require_samples(n)?;
    let d = params.d;
    let gamma_hat = params.gamma_sign();
    let clf = LinearClassifier::uniform(d).scaled(params.gamma);
    let mut stream = FeatureStream::new(*params, SampleKind::Shuffled, seed)?;

    let mut z_sign = Frequency::default();
    let mut block_sign = Frequency::default();
    let mut grad_sign = Frequency::default();
    let mut z = vec![0.0; d + 1];
    let mut adv = vec![0.0; d + 1];
    let mut grad = vec![0.0; d + 1];
    for _ in 0..n {
        let (_, role) = stream.next_into(&mut z);
        let Role::Shuffled { q } = role else {
            unreachable!()
        };
        let expected = -gamma_hat * f64::from(q);
        let label = AttackLabel::Binary(q);
        feature_adversary_into(&z, &clf, label, params.lambda, &mut adv);
        clf.loss_grad_into(&adv, label.target(), &mut grad);
        for i in 1..=d {
            z_sign.record(sign(adv[i]) == expected);
            grad_sign.record(sign(grad[i]) == expected);
        }
        block_sign.record(sign(adv[1..].iter().sum::<f64>()) == expected);
    }

    let m = params.eta * params.gamma.abs();
    let lam = params.lambda;
    let z_exact = 0.5 * (normal_cdf(lam + m) + normal_cdf(lam - m));
    let sd = (d as f64).sqrt();
    let block_exact = 0.5 * (normal_cdf((lam + m) * sd) + normal_cdf((lam - m) * sd));

    let name = if params.has_unit_correlation() {
        "theorem2"
    } else {
        "theorem2_weak"
    };
    let mut b = ReportBuilder::new(name, params, n);
    b.at_least(
        "freq_sign_zi_adv",
        z_sign.rate(),
        threshold,
        z_sign.standard_error(),
    )
    .at_least(
        "freq_sign_grad_zi",
        grad_sign.rate(),
        threshold,
        grad_sign.standard_error(),
    )
    .within(
        "freq_sign_zi_adv_vs_exact",
        z_sign.rate(),
        z_exact,
        z_sign.standard_error(),
        closed_form_tolerance(z_exact, z_sign.total()),
    )
    .within(
        "freq_sign_nonrobust_block",
        block_sign.rate(),
        block_exact,
        block_sign.standard_error(),
        closed_form_tolerance(block_exact, block_sign.total()),
    );
    Ok(b.finish())
}

/// Positive robust weight with shuffled labels: `sign(z̃_adv_1) = y` and
/// `sign(∂ℓ̃/∂z̃_adv_1) = −γ̂q` with high probability, and the unconditioned mean of that
/// gradient vanishes.
pub fn verify_theorem3(
    params: &TheoryParams,
    w1: f64,
    n: usize,
    seed: u64,
) -> Result<TheoremReport> {
    verify_theorem3_with_threshold(params, w1, n, seed, HIGH_PROBABILITY)
}

pub fn verify_theorem3_with_threshold(
    params: &TheoryParams,
    w1: f64,
    n: usize,
    seed: u64,
    threshold: f64,
) -> Result<TheoremReport> {
    if !(w1 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "robust weight must be positive, got {w1}"
        )));
    }
    params.validate()?;
    params.require_unit_correlation("theorem 3")?;
    require_samples(n)?;
    let d = params.d;
    let gamma_hat = params.gamma_sign();
    let clf = LinearClassifier::with_robust_weight(d, w1)?.scaled(params.gamma);
    let mut stream = FeatureStream::new(*params, SampleKind::Shuffled, seed)?;

    let mut robust_sign = Frequency::default();
    let mut grad_sign = Frequency::default();
    let mut grad_mean = Moments::default();
    let mut z = vec![0.0; d + 1];
    let mut adv = vec![0.0; d + 1];
    let mut grad = vec![0.0; d + 1];
    for _ in 0..n {
        let (y, role) = stream.next_into(&mut z);
        let Role::Shuffled { q } = role else {
            unreachable!()
        };
        let label = AttackLabel::Binary(q);
        feature_adversary_into(&z, &clf, label, params.lambda, &mut adv);
        clf.loss_grad_into(&adv, label.target(), &mut grad);
        robust_sign.record(sign(adv[0]) == f64::from(y));
        grad_sign.record(sign(grad[0]) == -gamma_hat * f64::from(q));
        grad_mean.push(grad[0]);
    }

    let g = params.gamma.abs();
    let exact = 0.5
        * (normal_cdf((g - params.lambda) / params.v) + normal_cdf((g + params.lambda) / params.v));

    let mut b = ReportBuilder::new("theorem3", params, n);
    b.at_least(
        "freq_sign_z1_adv",
        robust_sign.rate(),
        threshold,
        robust_sign.standard_error(),
    )
    .at_least(
        "freq_sign_grad_z1",
        grad_sign.rate(),
        threshold,
        grad_sign.standard_error(),
    )
    .within(
        "mean_grad_z1",
        grad_mean.mean(),
        0.0,
        grad_mean.standard_error(),
        3.0 * grad_mean.standard_error(),
    )
    .within(
        "freq_sign_z1_adv_vs_exact",
        robust_sign.rate(),
        exact,
        robust_sign.standard_error(),
        closed_form_tolerance(exact, robust_sign.total()),
    )
    .info("robust_weight", w1, None, None);
    Ok(b.finish())
}

/// Probability that `sign(z̃_i + λ·sign(wᵀz̃)) = y` for the uniform classifier, where
/// `z̃_i ~ N(μy, 1)` and `wᵀz̃` averages all `d` non-robust coordinates.
pub fn yer_feature_sign_probability(d: usize, mu: f64, lambda: f64) -> f64 {
    if d == 1 {
        return normal_cdf(mu);
    }
    let rest = (d - 1) as f64;
    let p_up = |z: f64| normal_cdf((z + rest * mu) / rest.sqrt());
    let hi = mu + 12.0;
    let kept = simpson(|z| normal_pdf(z - mu) * p_up(z), -lambda, hi, 4000);
    let flipped = simpson(|z| normal_pdf(z - mu) * (1.0 - p_up(z)), lambda, hi, 4000);
    kept + flipped
}

/// Uniform (expected random label) target: `sign(z̃_adv_i) = y = sign(∂ℓ̃/∂z̃_adv_i)`
/// with high probability.
pub fn verify_yer(params: &TheoryParams, n: usize, seed: u64) -> Result<TheoremReport> {
    verify_yer_with_threshold(params, n, seed, HIGH_PROBABILITY)
}

pub fn verify_yer_with_threshold(
    params: &TheoryParams,
    n: usize,
    seed: u64,
    threshold: f64,
) -> Result<TheoremReport> {
    params.validate()?;
    params.require_unit_correlation("the uniform-label analysis")?;
    require_samples(n)?;
    let d = params.d;
    let clf = LinearClassifier::uniform(d).scaled(params.gamma);
    let mut stream = FeatureStream::new(*params, SampleKind::Auxiliary, seed)?;

    // The attack direction is shared by a sample's coordinates, so their sign events are
    // correlated: standard errors come from per-sample rates, not from n·d pooled trials.
    let mut z_sign = Moments::default();
    let mut grad_sign = Moments::default();
    let mut magnitude = Moments::default();
    let mut z = vec![0.0; d + 1];
    let mut adv = vec![0.0; d + 1];
    let mut grad = vec![0.0; d + 1];
    for _ in 0..n {
        let (y, _) = stream.next_into(&mut z);
        let yf = f64::from(y);
        feature_adversary_into(&z, &clf, AttackLabel::Uniform, params.lambda, &mut adv);
        clf.loss_grad_into(&adv, AttackLabel::Uniform.target(), &mut grad);
        let rate = |v: &[f64]| v[1..].iter().filter(|&&x| sign(x) == yf).count() as f64 / d as f64;
        z_sign.push(rate(&adv));
        grad_sign.push(rate(&grad));
        magnitude.push(grad[1].abs());
    }

    let mu = params.eta * params.gamma.abs();
    let z_exact = yer_feature_sign_probability(d, mu, params.lambda);
    let grad_exact = normal_cdf(mu * (d as f64).sqrt());

    let mut b = ReportBuilder::new("yer", params, n);
    b.at_least(
        "freq_sign_zi_adv",
        z_sign.mean(),
        threshold,
        z_sign.standard_error(),
    )
    .at_least(
        "freq_sign_grad_zi",
        grad_sign.mean(),
        threshold,
        grad_sign.standard_error(),
    )
    .within(
        "freq_sign_zi_adv_vs_exact",
        z_sign.mean(),
        z_exact,
        z_sign.standard_error(),
        closed_form_tolerance_se(z_sign.standard_error()),
    )
    .within(
        "freq_sign_grad_zi_vs_exact",
        grad_sign.mean(),
        grad_exact,
        grad_sign.standard_error(),
        closed_form_tolerance_se(grad_sign.standard_error()),
    )
    .info(
        "mean_abs_grad_zi",
        magnitude.mean(),
        Some(1.0 / (2.0 * d as f64)),
        Some(magnitude.standard_error()),
    )
    .info(
        "mean_abs_grad_zi_times_2d",
        magnitude.mean() * 2.0 * d as f64,
        None,
        None,
    );
    Ok(b.finish())
}

/// Clean accuracy of `sign(w_unifᵀz)` on primary samples; tends to `Φ(η√d)`.
pub fn standard_accuracy(params: &TheoryParams, n: usize, seed: u64) -> Result<f64> {
    params.validate()?;
    let clf = LinearClassifier::uniform(params.d);
    let mut stream = FeatureStream::new(*params, SampleKind::Primary, seed)?;
    let mut z = vec![0.0; params.d + 1];
    let mut hits = Frequency::default();
    for _ in 0..n {
        let (y, _) = stream.next_into(&mut z);
        hits.record(sign(clf.logit(&z)) == f64::from(y));
    }
    Ok(hits.rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const N: usize = 40_000;

    #[test]
    fn lemma2_targets_come_from_params() {
        let params = TheoryParams {
            eta: 0.05,
            lambda: 0.2,
            ..Default::default()
        };
        let r = verify_lemma2(&params, N, 1).unwrap();
        assert!(r.pass, "{}", r.summary());
        assert_eq!(r.target("mean_z1_adv|y=+1"), Some(1.0));
        assert_abs_diff_eq!(
            r.target("mean_zi_adv|y=+1").unwrap(),
            -0.15,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(r.target("mean_zi_adv|y=-1").unwrap(), 0.15, epsilon = 1e-15);
    }

    #[test]
    fn lemma2_degenerate_lambda_is_legal() {
        let params = TheoryParams {
            lambda: 0.05 + 1e-6,
            ..Default::default()
        };
        let r = verify_lemma2(&params, N, 2).unwrap();
        assert!(r.target("mean_zi_adv|y=+1").unwrap().abs() < 1e-5);
        assert!(r.pass, "{}", r.summary());
    }

    #[test]
    fn lemma2_requires_unit_correlation() {
        let params = TheoryParams::default().with_gamma(0.5);
        assert!(matches!(
            verify_lemma2(&params, N, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn theorem1_agrees_for_both_signs_of_gamma() {
        for gamma in [1.0, -1.0] {
            let params = TheoryParams::default().with_gamma(gamma);
            let r = verify_theorem1(&params, N, 3).unwrap();
            assert!(r.pass, "{}", r.summary());
            assert_eq!(r.theorem, "theorem1");
        }
    }

    #[test]
    fn theorem1_weak_correlation_gradient_points_against_label() {
        let params = TheoryParams::default().with_gamma(0.5);
        let r = verify_theorem1(&params, N, 4).unwrap();
        assert_eq!(r.theorem, "theorem1_weak");
        assert!(r.pass, "{}", r.summary());
        assert!(r.statistic("mean_aux_grad_z2|y=+1").unwrap() < 0.0);
    }

    #[test]
    fn theorem2_gradient_sign_is_exact_and_feature_sign_matches_closed_form() {
        let params = TheoryParams::default().with_lambda(0.5);
        let r = verify_theorem2(&params, N, 5).unwrap();
        assert_eq!(r.statistic("freq_sign_grad_zi"), Some(1.0));
        assert!(
            r.check("freq_sign_zi_adv_vs_exact").unwrap().pass,
            "{}",
            r.summary()
        );
        assert!(
            r.check("freq_sign_nonrobust_block").unwrap().pass,
            "{}",
            r.summary()
        );
        // Per coordinate the flip rate is ½[Φ(λ+η) + Φ(λ−η)] ≈ 0.69 at these parameters.
        let exact = 0.5 * (normal_cdf(0.55) + normal_cdf(0.45));
        assert_abs_diff_eq!(
            r.target("freq_sign_zi_adv_vs_exact").unwrap(),
            exact,
            epsilon = 1e-15
        );
    }

    #[test]
    fn theorem2_labels_already_signs_give_identical_reports() {
        let params = TheoryParams::default().with_lambda(0.5);
        let a = verify_theorem2(&params, 5000, 9).unwrap();
        let b = verify_theorem2(&params, 5000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn theorem2_flip_rate_tends_to_half_near_eta() {
        let params = TheoryParams::default().with_lambda(0.05 + 1e-9);
        let r = verify_theorem2(&params, 5000, 6).unwrap();
        let f = r.statistic("freq_sign_zi_adv").unwrap();
        // ½[Φ(2η) + Φ(0)]: only the label-aligned half keeps any bias.
        let exact = 0.5 * (normal_cdf(0.1) + 0.5);
        assert!((f - exact).abs() < 0.01, "{f}");
        assert!(!r.pass);
    }

    #[test]
    fn theorem3_robust_sign_and_neutral_mean() {
        let params = TheoryParams {
            lambda: 0.5,
            v: 0.25,
            ..Default::default()
        };
        let r = verify_theorem3(&params, 0.5, N, 7).unwrap();
        assert!(r.pass, "{}", r.summary());
        let exact = 0.5 * (normal_cdf(2.0) + normal_cdf(6.0));
        assert_abs_diff_eq!(
            r.target("freq_sign_z1_adv_vs_exact").unwrap(),
            exact,
            epsilon = 1e-15
        );
    }

    #[test]
    fn theorem3_negative_gamma_flips_the_gradient_target() {
        let params = TheoryParams {
            lambda: 0.5,
            gamma: -1.0,
            ..Default::default()
        };
        let r = verify_theorem3(&params, 0.5, 5000, 8).unwrap();
        assert_eq!(r.statistic("freq_sign_grad_z1"), Some(1.0));
    }

    #[test]
    fn theorem3_rejects_nonpositive_weight() {
        let params = TheoryParams::default().with_lambda(0.5);
        assert!(verify_theorem3(&params, 0.0, 100, 1).is_err());
        assert!(verify_theorem3(&params, -0.2, 100, 1).is_err());
    }

    #[test]
    fn yer_frequencies_match_their_exact_values() {
        let params = TheoryParams::default().with_lambda(0.5);
        let r = verify_yer(&params, N, 10).unwrap();
        assert!(
            r.check("freq_sign_zi_adv_vs_exact").unwrap().pass,
            "{}",
            r.summary()
        );
        assert!(
            r.check("freq_sign_grad_zi_vs_exact").unwrap().pass,
            "{}",
            r.summary()
        );
    }

    #[test]
    fn yer_gradient_magnitude_scales_like_one_over_d() {
        let params = TheoryParams::default().with_lambda(0.5);
        let r = verify_yer(&params, N, 11).unwrap();
        let scaled = r.statistic("mean_abs_grad_zi_times_2d").unwrap();
        assert!(scaled > 0.1 && scaled <= 1.0, "{scaled}");

        let doubled = verify_yer(&params.with_d(200), N, 11).unwrap();
        let ratio = r.statistic("mean_abs_grad_zi").unwrap()
            / doubled.statistic("mean_abs_grad_zi").unwrap();
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn yer_feature_sign_closed_form_matches_brute_force_integration() {
        // Independent oracle: direct Monte Carlo over the two Gaussians involved.
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let (d, mu, lambda) = (9usize, 0.3, 0.5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let trials = 400_000;
        let mut hits = 0u64;
        for _ in 0..trials {
            let z: f64 = mu + rng.sample::<f64, _>(StandardNormal);
            let rest: f64 = (d - 1) as f64 * mu
                + ((d - 1) as f64).sqrt() * rng.sample::<f64, _>(StandardNormal);
            let s = sign(z + rest);
            if z + lambda * s > 0.0 {
                hits += 1;
            }
        }
        let mc = hits as f64 / trials as f64;
        let exact = yer_feature_sign_probability(d, mu, lambda);
        assert!(
            (mc - exact).abs() < 4.0 * binomial_se(exact, trials),
            "{mc} vs {exact}"
        );
    }

    #[test]
    fn uniform_classifier_accuracy_grows_with_d() {
        let params = TheoryParams {
            eta: 0.3,
            lambda: 0.5,
            ..Default::default()
        };
        let acc = standard_accuracy(&params, 10_000, 12).unwrap();
        assert!(acc >= 0.99, "{acc}");
        let small = standard_accuracy(&params.with_d(4), 10_000, 12).unwrap();
        assert!(small < acc);
    }

    #[test]
    fn verifiers_are_bitwise_reproducible() {
        let params = TheoryParams::default();
        let a = serde_json::to_string(&verify_theorem1(&params, 3000, 1).unwrap()).unwrap();
        let b = serde_json::to_string(&verify_theorem1(&params, 3000, 1).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_coordinates_are_distinct_nonrobust_indices() {
        assert_eq!(
            sampled_coordinates(100),
            vec![1, 11, 21, 31, 41, 51, 61, 71, 81, 91]
        );
        assert_eq!(sampled_coordinates(3), vec![1, 2, 3]);
    }
}
