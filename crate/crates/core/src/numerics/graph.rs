//! Reverse-mode gradients for sequential compositions of the primitive layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ops::{self, LossGrad};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Affine { weight: Tensor, bias: Tensor },
    Relu,
    Sigmoid,
}

impl Layer {
    pub fn affine(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::shape(
                "Layer::affine",
                format!("weight {:?}, bias {:?}", weight.shape(), bias.shape()),
            ));
        }
        Ok(Layer::Affine { weight, bias })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Affine { weight, bias } => ops::affine(x, weight, bias),
            Layer::Relu => Ok(ops::relu(x)),
            Layer::Sigmoid => Ok(ops::sigmoid(x)),
        }
    }
}

/// A sequential composition of layers; the empty stack is the identity map.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Stack {
    layers: Vec<Layer>,
}

/// Activations recorded by a forward pass: `inputs[k]` is what layer `k` consumed.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Tensor>,
    output: Tensor,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn input(&self) -> &Tensor {
        self.inputs.first().unwrap_or(&self.output)
    }
}

/// Gradients of a stack's parameters (in [`Stack::params`] order) and of its input.
#[derive(Debug, Clone)]
pub struct StackGrad {
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

/// Loss value plus exact gradients with respect to every parameter and the input batch.
#[derive(Debug, Clone)]
pub struct GradientResult {
    pub loss: f64,
    pub param_grads: Vec<Tensor>,
    pub input_grad: Tensor,
}

impl Stack {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Weight and bias tensors, in layer order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Affine { weight, bias } => vec![weight, bias],
                _ => vec![],
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Affine { weight, bias } => vec![weight, bias],
                _ => vec![],
            })
            .collect()
    }

    /// Output width for an input of width `input_width`.
    pub fn output_width(&self, input_width: usize) -> usize {
        self.layers.iter().fold(input_width, |w, l| match l {
            Layer::Affine { weight, .. } => weight.shape()[1],
            _ => w,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward_traced(&self, x: &Tensor) -> Result<Trace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let next = layer.forward(&cur)?;
            inputs.push(cur);
            cur = next;
        }
        Ok(Trace {
            inputs,
            output: cur,
        })
    }

    pub fn backward(&self, trace: &Trace, grad_out: &Tensor) -> Result<StackGrad> {
        let (params, input) = self.backward_impl(trace, grad_out, true)?;
        Ok(StackGrad { params, input })
    }

    /// Gradient with respect to the input only; skips the weight gradients.
    pub fn backward_input(&self, trace: &Trace, grad_out: &Tensor) -> Result<Tensor> {
        Ok(self.backward_impl(trace, grad_out, false)?.1)
    }

    fn backward_impl(
        &self,
        trace: &Trace,
        grad_out: &Tensor,
        want_params: bool,
    ) -> Result<(Vec<Tensor>, Tensor)> {
        if grad_out.shape() != trace.output.shape() {
            return Err(Error::shape(
                "Stack::backward",
                format!(
                    "upstream {:?} vs output {:?}",
                    grad_out.shape(),
                    trace.output.shape()
                ),
            ));
        }
        let mut params_rev = Vec::new();
        let mut g = grad_out.clone();
        for (layer, input) in self.layers.iter().zip(&trace.inputs).rev() {
            g = match layer {
                Layer::Affine { weight, .. } if want_params => {
                    let (dx, dw, db) = ops::affine_backward(input, weight, &g)?;
                    params_rev.push(db);
                    params_rev.push(dw);
                    dx
                }
                Layer::Affine { weight, .. } => ops::affine_backward_input(weight, &g)?,
                Layer::Relu => ops::relu_backward(input, &g),
                Layer::Sigmoid => ops::sigmoid_backward(input, &g),
            };
        }
        params_rev.reverse();
        for p in &params_rev {
            p.ensure_finite("Stack::backward")?;
        }
        g.ensure_finite("Stack::backward")?;
        Ok((params_rev, g))
    }
}

/// Exact gradients of `loss(stack(batch))` with respect to parameters and input.
pub fn grad<L>(stack: &Stack, batch: &Tensor, loss: L) -> Result<GradientResult>
where
    L: Fn(&Tensor) -> Result<LossGrad>,
{
    let trace = stack.forward_traced(batch)?;
    let lg = loss(trace.output())?;
    if !lg.loss.is_finite() {
        return Err(Error::NonFinite("grad"));
    }
    let sg = stack.backward(&trace, &lg.grad)?;
    Ok(GradientResult {
        loss: lg.loss,
        param_grads: sg.params,
        input_grad: sg.input,
    })
}

/// Compares [`grad`] against central differences over every parameter and input
/// coordinate. Returns `max |analytic − numeric| / max(1, |analytic|)`.
pub fn finite_diff_check<L>(stack: &Stack, batch: &Tensor, loss: L, h: f64) -> Result<f64>
where
    L: Fn(&Tensor) -> Result<LossGrad>,
{
    if !(h > 0.0 && h < 1e-2) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {h} outside (0, 1e-2)"
        )));
    }
    let analytic = grad(stack, batch, &loss)?;
    let eval = |s: &Stack, x: &Tensor| -> Result<f64> { Ok(loss(&s.forward(x)?)?.loss) };
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(1.0);

    let mut worst = 0.0_f64;
    let n_params = stack.params().len();
    for p in 0..n_params {
        let len = stack.params()[p].len();
        for k in 0..len {
            let mut plus = stack.clone();
            plus.params_mut()[p].data_mut()[k] += h;
            let mut minus = stack.clone();
            minus.params_mut()[p].data_mut()[k] -= h;
            let numeric = (eval(&plus, batch)? - eval(&minus, batch)?) / (2.0 * h);
            worst = worst.max(rel(analytic.param_grads[p].data()[k], numeric));
        }
    }
    for k in 0..batch.len() {
        let mut plus = batch.clone();
        plus.data_mut()[k] += h;
        let mut minus = batch.clone();
        minus.data_mut()[k] -= h;
        let numeric = (eval(stack, &plus)? - eval(stack, &minus)?) / (2.0 * h);
        worst = worst.max(rel(analytic.input_grad.data()[k], numeric));
    }
    Ok(worst)
}
