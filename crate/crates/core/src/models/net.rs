use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ops::softmax_row;
use crate::numerics::{Layer, LossGrad, Stack, Tensor};

/// Which prediction head a forward pass or loss goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Primary,
    Auxiliary,
}

/// Layer widths of a [`MultiHeadNet`]. An empty `hidden` list makes the trunk the identity,
/// so both heads become linear models of the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub classes_pri: usize,
    pub classes_aux: usize,
}

impl Architecture {
    /// Two ReLU layers of width 128 and two-way heads.
    pub fn desk(input: usize) -> Self {
        Self {
            input,
            hidden: vec![128, 128],
            classes_pri: 2,
            classes_aux: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be positive: input {}, hidden {:?}",
                self.input, self.hidden
            )));
        }
        if self.classes_pri < 2 || self.classes_aux < 2 {
            return Err(Error::InvalidArgument(format!(
                "heads need at least 2 classes, got {} and {}",
                self.classes_pri, self.classes_aux
            )));
        }
        Ok(())
    }

    /// Width of the shared embedding `g(x)`.
    pub fn embedding(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }

    pub fn classes(&self, head: Head) -> usize {
        match head {
            Head::Primary => self.classes_pri,
            Head::Auxiliary => self.classes_aux,
        }
    }

    /// Contractual parameter names and shapes, in storage order.
    pub fn tensor_manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut width = self.input;
        for (k, &h) in self.hidden.iter().enumerate() {
            out.push((format!("trunk.{k}.weight"), vec![width, h]));
            out.push((format!("trunk.{k}.bias"), vec![h]));
            width = h;
        }
        for (name, c) in [
            ("head_pri", self.classes_pri),
            ("head_aux", self.classes_aux),
        ] {
            out.push((format!("{name}.weight"), vec![width, c]));
            out.push((format!("{name}.bias"), vec![c]));
        }
        out
    }
}

/// Shared trunk `g` with a primary and an auxiliary affine head.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadNet {
    arch: Architecture,
    trunk: Stack,
    head_pri: Stack,
    head_aux: Stack,
}

/// Gradients for every parameter group of a [`MultiHeadNet`], in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub trunk: Vec<Tensor>,
    pub head_pri: Vec<Tensor>,
    pub head_aux: Vec<Tensor>,
}

impl NetGrads {
    pub fn zeros_like(net: &MultiHeadNet) -> Self {
        let z = |s: &Stack| {
            s.params()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect()
        };
        Self {
            trunk: z(&net.trunk),
            head_pri: z(&net.head_pri),
            head_aux: z(&net.head_aux),
        }
    }

    pub fn head(&self, head: Head) -> &[Tensor] {
        match head {
            Head::Primary => &self.head_pri,
            Head::Auxiliary => &self.head_aux,
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.trunk
            .iter()
            .chain(&self.head_pri)
            .chain(&self.head_aux)
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.trunk
            .iter_mut()
            .chain(&mut self.head_pri)
            .chain(&mut self.head_aux)
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &NetGrads) -> Result<()> {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().map(Tensor::max_abs).fold(0.0, f64::max)
    }
}

/// Loss value with gradients for the parameters and the input batch.
#[derive(Debug, Clone)]
pub struct NetGradient {
    pub loss: f64,
    pub grads: NetGrads,
    pub input_grad: Tensor,
}

/// Logits of both heads from a single trunk evaluation.
#[derive(Debug, Clone)]
pub struct BothHeads {
    pub embedding: Tensor,
    pub primary: Tensor,
    pub auxiliary: Tensor,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-a..=a))
        .collect();
    Tensor::from_parts(vec![fan_in, fan_out], data)
}

impl MultiHeadNet {
    /// Glorot-uniform weights and zero biases drawn from `seed`, in manifest order.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut width = arch.input;
        for &h in &arch.hidden {
            layers.push(Layer::affine(
                glorot(&mut rng, width, h),
                Tensor::zeros(&[h]),
            )?);
            layers.push(Layer::Relu);
            width = h;
        }
        let head_pri = Stack::new(vec![Layer::affine(
            glorot(&mut rng, width, arch.classes_pri),
            Tensor::zeros(&[arch.classes_pri]),
        )?]);
        let head_aux = Stack::new(vec![Layer::affine(
            glorot(&mut rng, width, arch.classes_aux),
            Tensor::zeros(&[arch.classes_aux]),
        )?]);
        Ok(Self {
            arch,
            trunk: Stack::new(layers),
            head_pri,
            head_aux,
        })
    }

    /// Rebuilds a network from tensors in manifest order.
    pub fn from_tensors(arch: Architecture, tensors: Vec<Tensor>) -> Result<Self> {
        arch.validate()?;
        let manifest = arch.tensor_manifest();
        if tensors.len() != manifest.len() {
            return Err(Error::shape(
                "MultiHeadNet::from_tensors",
                format!(
                    "{} tensors for {} manifest entries",
                    tensors.len(),
                    manifest.len()
                ),
            ));
        }
        for ((name, shape), t) in manifest.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(
                    "MultiHeadNet::from_tensors",
                    format!("{name}: expected {shape:?}, got {:?}", t.shape()),
                ));
            }
        }
        let mut it = tensors.into_iter();
        let mut pair = || -> Result<Layer> {
            let w = it.next().expect("length checked");
            let b = it.next().expect("length checked");
            Layer::affine(w, b)
        };
        let mut layers = Vec::new();
        for _ in &arch.hidden {
            layers.push(pair()?);
            layers.push(Layer::Relu);
        }
        let head_pri = Stack::new(vec![pair()?]);
        let head_aux = Stack::new(vec![pair()?]);
        Ok(Self {
            arch,
            trunk: Stack::new(layers),
            head_pri,
            head_aux,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn trunk(&self) -> &Stack {
        &self.trunk
    }

    pub fn head(&self, head: Head) -> &Stack {
        match head {
            Head::Primary => &self.head_pri,
            Head::Auxiliary => &self.head_aux,
        }
    }

    /// Sets both heads' weights and biases to zero, making every prediction uniform.
    pub fn zero_heads(&mut self) {
        for t in self
            .head_pri
            .params_mut()
            .into_iter()
            .chain(self.head_aux.params_mut())
        {
            t.data_mut().fill(0.0);
        }
    }

    /// All parameter tensors in manifest order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.trunk.params();
        out.extend(self.head_pri.params());
        out.extend(self.head_aux.params());
        out
    }

    /// Mutable parameter tensors in manifest order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.trunk.params_mut();
        out.extend(self.head_pri.params_mut());
        out.extend(self.head_aux.params_mut());
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 2 || x.cols() != self.arch.input {
            return Err(Error::shape(
                "MultiHeadNet",
                format!("input {:?}, expected [b, {}]", x.shape(), self.arch.input),
            ));
        }
        Ok(())
    }

    /// The shared embedding `g(x)`.
    pub fn embed(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.trunk.forward(x)
    }

    pub fn forward(&self, head: Head, x: &Tensor) -> Result<Tensor> {
        self.head(head).forward(&self.embed(x)?)
    }

    pub fn forward_pri(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(Head::Primary, x)
    }

    pub fn forward_aux(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(Head::Auxiliary, x)
    }

    pub fn forward_both(&self, x: &Tensor) -> Result<BothHeads> {
        let embedding = self.embed(x)?;
        Ok(BothHeads {
            primary: self.head_pri.forward(&embedding)?,
            auxiliary: self.head_aux.forward(&embedding)?,
            embedding,
        })
    }

    /// Maximum softmax probability of the primary head, per sample.
    pub fn confidence(&self, x: &Tensor) -> Result<Vec<f64>> {
        let logits = self.forward_pri(x)?;
        let mut probs = vec![0.0; logits.cols()];
        Ok((0..logits.rows())
            .map(|i| {
                softmax_row(logits.row(i), &mut probs);
                probs.iter().copied().fold(f64::MIN, f64::max)
            })
            .collect())
    }

    /// Loss of `head`'s logits with gradients for every parameter and the input. The
    /// other head's gradients are exactly zero.
    pub fn loss_grad<L>(&self, head: Head, x: &Tensor, loss: L) -> Result<NetGradient>
    where
        L: FnOnce(&Tensor) -> Result<LossGrad>,
    {
        self.check_input(x)?;
        let trunk_trace = self.trunk.forward_traced(x)?;
        let head_trace = self.head(head).forward_traced(trunk_trace.output())?;
        let lg = loss(head_trace.output())?;
        if !lg.loss.is_finite() {
            return Err(Error::NonFinite("MultiHeadNet::loss_grad"));
        }
        let hg = self.head(head).backward(&head_trace, &lg.grad)?;
        let tg = self.trunk.backward(&trunk_trace, &hg.input)?;
        let mut grads = NetGrads::zeros_like(self);
        grads.trunk = tg.params;
        match head {
            Head::Primary => grads.head_pri = hg.params,
            Head::Auxiliary => grads.head_aux = hg.params,
        }
        Ok(NetGradient {
            loss: lg.loss,
            grads,
            input_grad: tg.input,
        })
    }

    /// Loss and input gradient only; the cheap path used inside attacks.
    pub fn input_grad<L>(&self, head: Head, x: &Tensor, loss: L) -> Result<(f64, Tensor)>
    where
        L: FnOnce(&Tensor) -> Result<LossGrad>,
    {
        self.check_input(x)?;
        let trunk_trace = self.trunk.forward_traced(x)?;
        let head_trace = self.head(head).forward_traced(trunk_trace.output())?;
        let lg = loss(head_trace.output())?;
        if !lg.loss.is_finite() {
            return Err(Error::NonFinite("MultiHeadNet::input_grad"));
        }
        let g = self.head(head).backward_input(&head_trace, &lg.grad)?;
        Ok((lg.loss, self.trunk.backward_input(&trunk_trace, &g)?))
    }

    /// Gradient of `0.5·‖g(x) − target‖²` summed over the batch, with respect to `x`.
    /// Returns the per-sample objective values and the input gradient.
    pub fn embedding_match_grad(&self, x: &Tensor, target: &Tensor) -> Result<(Vec<f64>, Tensor)> {
        self.check_input(x)?;
        let trace = self.trunk.forward_traced(x)?;
        let out = trace.output();
        if out.shape() != target.shape() {
            return Err(Error::shape(
                "embedding_match_grad",
                format!("embedding {:?} vs target {:?}", out.shape(), target.shape()),
            ));
        }
        let mut diff = out.clone();
        diff.axpy(-1.0, target)?;
        let objective = (0..diff.rows())
            .map(|i| 0.5 * diff.row(i).iter().map(|v| v * v).sum::<f64>())
            .collect();
        Ok((objective, self.trunk.backward_input(&trace, &diff)?))
    }

    /// `θ ← θ − lr·∇θ`.
    pub fn sgd_step(&mut self, grads: &NetGrads, lr: f64) -> Result<()> {
        for (p, g) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            p.axpy(-lr, g)?;
            p.ensure_finite("MultiHeadNet::sgd_step")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops::{one_hot, softmax, softmax_xent};
    use crate::numerics::{finite_diff_check, Stack};

    fn small() -> Architecture {
        Architecture {
            input: 3,
            hidden: vec![5, 4],
            classes_pri: 3,
            classes_aux: 2,
        }
    }

    fn batch() -> Tensor {
        Tensor::from_rows(&[[0.3, -1.2, 0.5], [1.0, 0.2, -0.7]]).unwrap()
    }

    #[test]
    fn zero_heads_predict_uniformly() {
        let mut net = MultiHeadNet::new(small(), 1).unwrap();
        net.zero_heads();
        let conf = net.confidence(&batch()).unwrap();
        assert!(conf.iter().all(|&c| (c - 1.0 / 3.0).abs() < 1e-15));
        let aux = softmax(&net.forward_aux(&batch()).unwrap()).unwrap();
        assert!(aux.data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn both_heads_share_the_trunk_activations() {
        let net = MultiHeadNet::new(small(), 2).unwrap();
        let both = net.forward_both(&batch()).unwrap();
        assert!(both.embedding.bitwise_eq(&net.embed(&batch()).unwrap()));
        assert!(both.primary.bitwise_eq(&net.forward_pri(&batch()).unwrap()));
        assert!(both
            .auxiliary
            .bitwise_eq(&net.forward_aux(&batch()).unwrap()));
    }

    #[test]
    fn primary_loss_leaves_auxiliary_head_gradient_zero() {
        let net = MultiHeadNet::new(small(), 3).unwrap();
        let t = one_hot(&[0, 2], 3).unwrap();
        let g = net
            .loss_grad(Head::Primary, &batch(), |l| softmax_xent(l, &t))
            .unwrap();
        assert!(g.grads.head_aux.iter().all(|t| t.max_abs() == 0.0));
        assert!(g.grads.head_pri.iter().any(|t| t.max_abs() > 0.0));
        assert!(g.grads.trunk.iter().any(|t| t.max_abs() > 0.0));
    }

    #[test]
    fn net_gradients_match_finite_differences() {
        let net = MultiHeadNet::new(small(), 4).unwrap();
        let t = one_hot(&[1, 0], 2).unwrap();
        let mut layers = net.trunk().layers().to_vec();
        layers.extend(net.head(Head::Auxiliary).layers().to_vec());
        let flat = Stack::new(layers);
        let err = finite_diff_check(&flat, &batch(), |l| softmax_xent(l, &t), 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");

        let g = net
            .loss_grad(Head::Auxiliary, &batch(), |l| softmax_xent(l, &t))
            .unwrap();
        let (loss, input) = net
            .input_grad(Head::Auxiliary, &batch(), |l| softmax_xent(l, &t))
            .unwrap();
        assert_eq!(loss, g.loss);
        assert!(input.bitwise_eq(&g.input_grad));
    }

    #[test]
    fn confidence_matches_softmax_then_max() {
        let net = MultiHeadNet::new(small(), 5).unwrap();
        let p = softmax(&net.forward_pri(&batch()).unwrap()).unwrap();
        let conf = net.confidence(&batch()).unwrap();
        for (i, c) in conf.iter().enumerate() {
            let m = p.row(i).iter().copied().fold(f64::MIN, f64::max);
            assert_eq!(*c, m);
            assert!(*c > 1.0 / 3.0 && *c <= 1.0);
        }
    }

    #[test]
    fn from_tensors_inverts_tensors() {
        let net = MultiHeadNet::new(small(), 6).unwrap();
        let copy =
            MultiHeadNet::from_tensors(small(), net.tensors().into_iter().cloned().collect())
                .unwrap();
        assert_eq!(net, copy);
    }

    #[test]
    fn glorot_bounds_and_zero_biases() {
        let net = MultiHeadNet::new(small(), 7).unwrap();
        for ((name, shape), t) in small().tensor_manifest().iter().zip(net.tensors()) {
            if name.ends_with("bias") {
                assert!(t.data().iter().all(|&v| v == 0.0));
            } else {
                let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                assert!(t.data().iter().all(|v| v.abs() <= a));
            }
        }
    }

    #[test]
    fn identity_trunk_embeds_to_the_input() {
        let arch = Architecture {
            input: 3,
            hidden: vec![],
            classes_pri: 2,
            classes_aux: 2,
        };
        let net = MultiHeadNet::new(arch, 0).unwrap();
        assert!(net.embed(&batch()).unwrap().bitwise_eq(&batch()));
    }

    #[test]
    fn rejects_wrong_input_width() {
        let net = MultiHeadNet::new(small(), 0).unwrap();
        assert!(net.forward_pri(&Tensor::zeros(&[1, 4])).is_err());
    }
}
