//! Central-difference check of the reverse-mode gradients of a small MLP.

use biamat::numerics::{finite_diff_check, softmax_xent, Layer, Stack, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn main() -> biamat::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let stack = Stack::new(vec![
        Layer::affine(random(&mut rng, &[4, 6]), random(&mut rng, &[6]))?,
        Layer::Sigmoid,
        Layer::affine(random(&mut rng, &[6, 3]), random(&mut rng, &[3]))?,
    ]);
    let x = random(&mut rng, &[5, 4]);
    let target = Tensor::from_rows(&[
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.2, 0.3, 0.5],
        [0.0, 1.0, 0.0],
    ])?;
    let err = finite_diff_check(&stack, &x, |logits| softmax_xent(logits, &target), 1e-5)?;
    println!("max relative error {err:.2e}");
    Ok(())
}
