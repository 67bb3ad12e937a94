//! Fully-connected networks as small DAGs of dense layers.
//!
//! Every layer reads either the network input or the activation of an
//! earlier layer, so a plain MLP and the branching composite critic share one
//! forward/backward implementation. The network output is the column-wise
//! concatenation of a list of layers.

use std::sync::Arc;

use rand::Rng as _;

use super::matrix::{axpy, dot, Matrix};
use super::params::{Layout, ParamGroup, ParamVector};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const LEAKY_SLOPE: f64 = 0.01;

/// Element-wise activation. At a pre-activation of exactly zero the
/// derivative takes the negative-side slope (0 for relu, 0.01 for leaky).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    /// `bound * tanh(z)`
    TanhScaled(f64),
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Self::Identity => z,
            Self::Relu => z.max(0.0),
            Self::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Self::TanhScaled(b) => b * z.tanh(),
        }
    }

    /// Derivative from the pre-activation `z` and output `y`.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Self::TanhScaled(b) => {
                let t = y / b;
                b * (1.0 - t * t)
            }
        }
    }
}

/// Layer sizes `[input, hidden.., output]` of a plain MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(Error::Config("an MLP needs at least one hidden layer".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if !matches!(self.hidden_activation, Activation::Relu | Activation::LeakyRelu) {
            return Err(Error::Config("hidden activation must be relu or leaky relu".into()));
        }
        match self.output_activation {
            Activation::Identity => Ok(()),
            Activation::TanhScaled(b) if b > 0.0 && b.is_finite() => Ok(()),
            Activation::TanhScaled(b) => Err(Error::Config(format!("tanh bound must be positive, got {b}"))),
            _ => Err(Error::Config("output activation must be identity or scaled tanh".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Layer(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDef {
    pub name: String,
    pub source: Source,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weight_segment: usize,
    pub bias_segment: usize,
}

/// Cached intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub input: Matrix,
    pub pre: Vec<Matrix>,
    pub act: Vec<Matrix>,
    pub output: Matrix,
}

impl Tape {
    pub fn layer_input(&self, layer: &LayerDef) -> &Matrix {
        match layer.source {
            Source::Input => &self.input,
            Source::Layer(j) => &self.act[j],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    input_dim: usize,
    layers: Vec<LayerDef>,
    outputs: Vec<usize>,
    pub params: ParamVector,
}

/// Incremental construction of a [`Net`].
pub struct NetBuilder {
    input_dim: usize,
    layers: Vec<LayerDef>,
    layout: Layout,
}

impl NetBuilder {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            layers: Vec::new(),
            layout: Layout::new(),
        }
    }

    /// Adds a dense layer and returns its index.
    pub fn layer(&mut self, name: &str, group: ParamGroup, source: Source, out_dim: usize, activation: Activation) -> usize {
        let in_dim = match source {
            Source::Input => self.input_dim,
            Source::Layer(j) => self.layers[j].out_dim,
        };
        let weight_segment = self.layout.push(format!("{name}.w"), group, out_dim, in_dim);
        let bias_segment = self.layout.push(format!("{name}.b"), group, 1, out_dim);
        self.layers.push(LayerDef {
            name: name.to_string(),
            source,
            in_dim,
            out_dim,
            activation,
            weight_segment,
            bias_segment,
        });
        self.layers.len() - 1
    }

    pub fn build(self, outputs: Vec<usize>) -> Net {
        let params = ParamVector::zeros(Arc::new(self.layout));
        Net {
            input_dim: self.input_dim,
            layers: self.layers,
            outputs,
            params,
        }
    }
}

impl Net {
    /// Plain MLP; every layer belongs to `group` except that, when
    /// `head_group` is given, the output layer is labelled with it.
    pub fn mlp(spec: &MlpSpec, group: ParamGroup, head_group: Option<ParamGroup>) -> Result<Net> {
        spec.validate()?;
        let sizes = &spec.layer_sizes;
        let mut b = NetBuilder::new(sizes[0]);
        let mut src = Source::Input;
        let last = sizes.len() - 2;
        for (i, &width) in sizes[1..].iter().enumerate() {
            let (name, g, act) = if i == last {
                ("out".to_string(), head_group.unwrap_or(group), spec.output_activation)
            } else {
                (format!("hidden{}", i + 1), group, spec.hidden_activation)
            };
            let idx = b.layer(&name, g, src, width, act);
            src = Source::Layer(idx);
        }
        let out = b.layers.len() - 1;
        Ok(b.build(vec![out]))
    }

    /// Composite critic on `state ⊕ action`: a two-layer trunk feeding the
    /// truncated heads, a middle layer feeding the shifted heads and a tail
    /// layer feeding the full value. Output columns are
    /// `[trunc_1..n, shift_1..n, q]`.
    pub fn composite_critic(input_dim: usize, hidden: usize, n: usize) -> Result<Net> {
        if hidden == 0 || n == 0 || input_dim == 0 {
            return Err(Error::Config("composite critic needs positive sizes".into()));
        }
        let lrelu = Activation::LeakyRelu;
        let mut b = NetBuilder::new(input_dim);
        let t1 = b.layer("trunk1", ParamGroup::Trunk, Source::Input, hidden, lrelu);
        let t2 = b.layer("trunk2", ParamGroup::Trunk, Source::Layer(t1), hidden, lrelu);
        let tr = b.layer("trunc", ParamGroup::TruncHeads, Source::Layer(t2), n, Activation::Identity);
        let mid = b.layer("mid", ParamGroup::Trunk, Source::Layer(t2), hidden, lrelu);
        let sh = b.layer("shift", ParamGroup::ShiftHeads, Source::Layer(mid), n, Activation::Identity);
        let tail = b.layer("tail", ParamGroup::Trunk, Source::Layer(mid), hidden, lrelu);
        let q = b.layer("q", ParamGroup::QHead, Source::Layer(tail), 1, Activation::Identity);
        Ok(b.build(vec![tr, sh, q]))
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.iter().map(|&i| self.layers[i].out_dim).sum()
    }

    pub fn layers(&self) -> &[LayerDef] {
        &self.layers
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`, drawn in storage order.
    pub fn init_uniform(&mut self, rng: &mut Rng) {
        for l in &self.layers {
            let bound = 1.0 / (l.in_dim as f64).sqrt();
            for seg in [l.weight_segment, l.bias_segment] {
                for v in self.params.segment_mut(seg) {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                got: x.cols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_tape(x)?.output)
    }

    pub fn forward_tape(&self, x: &Matrix) -> Result<Tape> {
        self.check_input(x)?;
        let m = x.rows();
        let mut pre: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        let mut act: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let input = match l.source {
                Source::Input => x,
                Source::Layer(j) => &act[j],
            };
            let w = self.params.segment(l.weight_segment);
            let b = self.params.segment(l.bias_segment);
            let mut z = Matrix::zeros(m, l.out_dim);
            let mut y = Matrix::zeros(m, l.out_dim);
            for i in 0..m {
                let xi = input.row(i);
                let zi = z.row_mut(i);
                for o in 0..l.out_dim {
                    zi[o] = b[o] + dot(&w[o * l.in_dim..(o + 1) * l.in_dim], xi);
                }
                let yi = y.row_mut(i);
                for o in 0..l.out_dim {
                    yi[o] = l.activation.apply(z.get(i, o));
                }
            }
            pre.push(z);
            act.push(y);
        }
        let mut output = Matrix::zeros(m, self.output_dim());
        for i in 0..m {
            let row = output.row_mut(i);
            let mut c = 0;
            for &li in &self.outputs {
                let src = act[li].row(i);
                row[c..c + src.len()].copy_from_slice(src);
                c += src.len();
            }
        }
        Ok(Tape {
            input: x.clone(),
            pre,
            act,
            output,
        })
    }

    /// Reverse pass for the cotangent `d_out` of the outputs. Returns the
    /// parameter gradient of `sum(d_out * output)` and the input gradient.
    pub fn backward(&self, tape: &Tape, d_out: &Matrix) -> Result<(ParamVector, Matrix)> {
        let m = tape.input.rows();
        if d_out.rows() != m || d_out.cols() != self.output_dim() {
            return Err(Error::Shape {
                expected: m * self.output_dim(),
                got: d_out.rows() * d_out.cols(),
            });
        }
        let mut d_act: Vec<Option<Matrix>> = vec![None; self.layers.len()];
        let mut c = 0;
        for &li in &self.outputs {
            let w = self.layers[li].out_dim;
            let slot = d_act[li].get_or_insert_with(|| Matrix::zeros(m, w));
            for i in 0..m {
                axpy(1.0, &d_out.row(i)[c..c + w], slot.row_mut(i));
            }
            c += w;
        }

        let mut grad = ParamVector::zeros(self.params.layout().clone());
        let mut d_input = Matrix::zeros(m, self.input_dim);
        for (li, l) in self.layers.iter().enumerate().rev() {
            let Some(mut dz) = d_act[li].take() else {
                continue;
            };
            let (z, y) = (&tape.pre[li], &tape.act[li]);
            for (d, (&zv, &yv)) in dz.data_mut().iter_mut().zip(z.data().iter().zip(y.data())) {
                *d *= l.activation.derivative(zv, yv);
            }
            let input = tape.layer_input(l);
            accumulate_linear(l, input, &dz, 1.0, &mut grad);

            let w = self.params.segment(l.weight_segment);
            let d_src = match l.source {
                Source::Input => &mut d_input,
                Source::Layer(j) => d_act[j].get_or_insert_with(|| Matrix::zeros(m, l.in_dim)),
            };
            for i in 0..m {
                let dzi = dz.row(i);
                let dxi = d_src.row_mut(i);
                for (o, &g) in dzi.iter().enumerate() {
                    if g != 0.0 {
                        axpy(g, &w[o * l.in_dim..(o + 1) * l.in_dim], dxi);
                    }
                }
            }
        }
        Ok((grad, d_input))
    }

    /// Adds `scale * (cot^T x, sum cot)` to the weight and bias gradient of a
    /// single linear layer, without propagating further.
    pub fn add_layer_grad(&self, tape: &Tape, layer: usize, cot: &Matrix, scale: f64, grad: &mut ParamVector) {
        let l = &self.layers[layer];
        debug_assert_eq!(l.activation, Activation::Identity);
        accumulate_linear(l, tape.layer_input(l), cot, scale, grad);
    }
}

fn accumulate_linear(l: &LayerDef, input: &Matrix, dz: &Matrix, scale: f64, grad: &mut ParamVector) {
    let m = input.rows();
    {
        let gw = grad.segment_mut(l.weight_segment);
        for i in 0..m {
            let xi = input.row(i);
            for (o, &g) in dz.row(i).iter().enumerate() {
                if g != 0.0 {
                    axpy(scale * g, xi, &mut gw[o * l.in_dim..(o + 1) * l.in_dim]);
                }
            }
        }
    }
    let gb = grad.segment_mut(l.bias_segment);
    for i in 0..m {
        axpy(scale, dz.row(i), gb);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn lrelu_spec(sizes: &[usize]) -> MlpSpec {
        MlpSpec {
            layer_sizes: sizes.to_vec(),
            hidden_activation: Activation::LeakyRelu,
            output_activation: Activation::Identity,
        }
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let net = Net::composite_critic(4, 8, 3).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5, 3.0]]).unwrap();
        let out = net.forward(&x).unwrap();
        assert_eq!(out.cols(), 7);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_unit_linear() {
        let mut b = NetBuilder::new(1);
        let l = b.layer("w", ParamGroup::QHead, Source::Input, 1, Activation::Identity);
        let mut net = b.build(vec![l]);
        net.params.values_mut()[0] = 2.0;
        let x = Matrix::from_rows(&[vec![3.0]]).unwrap();
        let tape = net.forward_tape(&x).unwrap();
        assert_eq!(tape.output.get(0, 0), 6.0);
        let (g, dx) = net.backward(&tape, &Matrix::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        assert_eq!(g.values(), &[3.0, 1.0]);
        assert_eq!(dx.get(0, 0), 2.0);
    }

    #[test]
    fn forward_is_deterministic_and_checks_shape() {
        let mut net = Net::mlp(&lrelu_spec(&[3, 5, 5, 2]), ParamGroup::Trunk, Some(ParamGroup::QHead)).unwrap();
        net.init_uniform(&mut seeded(0));
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-1.0, 0.0, 2.0]]).unwrap();
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let bad = Matrix::zeros(1, 4);
        assert!(matches!(net.forward(&bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn spec_validation() {
        assert!(lrelu_spec(&[2, 1]).validate().is_err());
        assert!(lrelu_spec(&[2, 0, 1]).validate().is_err());
        let mut s = lrelu_spec(&[2, 3, 1]);
        s.output_activation = Activation::TanhScaled(0.0);
        assert!(s.validate().is_err());
        s.output_activation = Activation::TanhScaled(1.0);
        assert!(s.validate().is_ok());
        s.hidden_activation = Activation::Identity;
        assert!(s.validate().is_err());
    }

    #[test]
    fn kink_uses_negative_side() {
        for (act, left) in [(Activation::LeakyRelu, LEAKY_SLOPE), (Activation::Relu, 0.0)] {
            assert_eq!(act.derivative(0.0, 0.0), left);
            let h = 1e-6;
            let one_sided = (act.apply(0.0) - act.apply(-h)) / h;
            assert!((one_sided - left).abs() < 1e-12);
            assert!(((act.apply(h) - act.apply(0.0)) / h - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn composite_layout_groups() {
        let net = Net::composite_critic(4, 8, 3).unwrap();
        let l = net.params.layout();
        assert_eq!(l.segment("trunc.w").unwrap().group, ParamGroup::TruncHeads);
        assert_eq!(l.segment("shift.w").unwrap().rows, 3);
        assert_eq!(l.segment("q.w").unwrap().group, ParamGroup::QHead);
        assert_eq!(l.segment("mid.w").unwrap().group, ParamGroup::Trunk);
    }
}
