//! Dense feed-forward networks used as discriminator and generator.
//!
//! Weights are stored `(out, in)` and batches row-wise, so a layer computes
//! `act(X · Wᵀ + 1·bᵀ)`. The numeric forward and the taped forward share the
//! same kernels and therefore agree bit-for-bit.

use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{DiffError, Matrix, NodeId, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, m: &Matrix) -> Matrix {
        match self {
            Activation::Linear => m.clone(),
            Activation::Relu => m.map(|x| if x > 0.0 { x } else { 0.0 }),
            Activation::Tanh => m.map(f64::tanh),
        }
    }

    fn apply_on(self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Activation::Linear => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Layer widths (input first), one activation per layer, and an optional
/// output clip factor `M` giving `M·tanh(raw/M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub clip: Option<f64>,
}

impl MlpSpec {
    /// ReLU on every hidden layer and `output` on the last.
    pub fn relu(widths: &[usize], output: Activation) -> Self {
        let n = widths.len().saturating_sub(1);
        let mut activations = vec![Activation::Relu; n];
        if let Some(last) = activations.last_mut() {
            *last = output;
        }
        Self {
            widths: widths.to_vec(),
            activations,
            clip: None,
        }
    }

    pub fn with_clip(mut self, clip: Option<f64>) -> Self {
        self.clip = clip;
        self
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn validate(&self) -> Result<(), DiffError> {
        if self.widths.len() < 2 {
            return Err(DiffError::InvalidSpec("need at least one layer".into()));
        }
        if self.widths.contains(&0) {
            return Err(DiffError::InvalidSpec("zero-width layer".into()));
        }
        if self.activations.len() != self.widths.len() - 1 {
            return Err(DiffError::InvalidSpec(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.widths.len() - 1
            )));
        }
        if let Some(m) = self.clip {
            if !(m > 0.0 && m.is_finite()) {
                return Err(DiffError::InvalidClip(m));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `(out, in)`
    pub weight: Matrix,
    /// `(1, out)`
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    spec: MlpSpec,
    layers: Vec<Dense>,
}

impl MlpParams {
    /// He-uniform for ReLU layers, Xavier-uniform otherwise; zero biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self, DiffError> {
        spec.validate()?;
        let layers = spec
            .widths
            .windows(2)
            .zip(&spec.activations)
            .map(|(w, act)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = match act {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
                Dense {
                    weight: Matrix::from_vec(fan_out, fan_in, data).expect("sized"),
                    bias: Matrix::zeros(1, fan_out),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Dense>) -> Result<Self, DiffError> {
        spec.validate()?;
        if layers.len() != spec.widths.len() - 1 {
            return Err(DiffError::InvalidSpec(format!(
                "{} layers for {} widths",
                layers.len(),
                spec.widths.len()
            )));
        }
        for (i, (layer, w)) in layers.iter().zip(spec.widths.windows(2)).enumerate() {
            if layer.weight.shape() != (w[1], w[0]) {
                return Err(DiffError::Shape {
                    context: format!("layer {i} weight"),
                    expected: (w[1], w[0]),
                    found: layer.weight.shape(),
                });
            }
            if layer.bias.shape() != (1, w[1]) {
                return Err(DiffError::Shape {
                    context: format!("layer {i} bias"),
                    expected: (1, w[1]),
                    found: layer.bias.shape(),
                });
            }
            if !layer.weight.is_finite() || !layer.bias.is_finite() {
                return Err(DiffError::NonFiniteParameter { layer: i });
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), DiffError> {
        if flat.len() != self.num_params() {
            return Err(DiffError::Shape {
                context: "MlpParams::set_flat".into(),
                expected: (self.num_params(), 1),
                found: (flat.len(), 1),
            });
        }
        let mut off = 0;
        for (i, l) in self.layers.iter_mut().enumerate() {
            for m in [&mut l.weight, &mut l.bias] {
                let n = m.len();
                m.as_mut_slice().copy_from_slice(&flat[off..off + n]);
                off += n;
            }
            if !l.weight.is_finite() || !l.bias.is_finite() {
                return Err(DiffError::NonFiniteParameter { layer: i });
            }
        }
        Ok(())
    }

    fn check_input(&self, cols: usize) -> Result<(), DiffError> {
        let expected = self.spec.input_width();
        if cols != expected {
            return Err(DiffError::LayerShape {
                layer: 0,
                expected,
                found: cols,
            });
        }
        Ok(())
    }

    /// Forward pass over a batch (one sample per row).
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix, DiffError> {
        self.check_input(x.cols())?;
        let mut h = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.spec.activations) {
            h = act.apply(&h.matmul_nt(&layer.weight).add_row(&layer.bias));
        }
        if let Some(m) = self.spec.clip {
            h = h.scale(1.0 / m).map(f64::tanh).scale(m);
        }
        Ok(h)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, DiffError> {
        Ok(self.forward_batch(&Matrix::row_vector(x))?.into_vec())
    }

    /// `∇ₓ D(x)` for a scalar-output network.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>, DiffError> {
        let width = self.spec.output_width();
        if width != 1 {
            return Err(DiffError::VectorOutput { width });
        }
        self.check_input(x.len())?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xn = tape.var(Matrix::row_vector(x));
        let out = bound.forward(&mut tape, xn);
        let g = tape.gradient(out, &[xn])?;
        Ok(g.into_iter().next().unwrap().into_vec())
    }

    /// Clamps every weight and bias to `[-c, c]`.
    pub fn weight_clip(&self, c: f64) -> Result<Self, DiffError> {
        if !(c > 0.0) {
            return Err(DiffError::InvalidClip(c));
        }
        let mut out = self.clone();
        for l in &mut out.layers {
            for m in [&mut l.weight, &mut l.bias] {
                for v in m.as_mut_slice() {
                    *v = v.clamp(-c, c);
                }
            }
        }
        Ok(out)
    }

    /// Places the parameters on `tape`, as variables when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let leaf = |tape: &mut Tape, m: &Matrix| {
            if trainable {
                tape.var(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let nodes = self
            .layers
            .iter()
            .map(|l| (leaf(tape, &l.weight), leaf(tape, &l.bias)))
            .collect();
        BoundMlp {
            spec: Rc::new(self.spec.clone()),
            nodes,
        }
    }
}

/// Network parameters living on a [`Tape`].
#[derive(Clone, Debug)]
pub struct BoundMlp {
    spec: Rc<MlpSpec>,
    nodes: Vec<(NodeId, NodeId)>,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        assert_eq!(
            tape.shape(x).1,
            self.spec.input_width(),
            "layer 0: input width"
        );
        let mut h = x;
        for (&(w, b), act) in self.nodes.iter().zip(&self.spec.activations) {
            let z = tape.matmul_nt(h, w);
            let z = tape.add_row(z, b);
            h = act.apply_on(tape, z);
        }
        if let Some(m) = self.spec.clip {
            let s = tape.scale(h, 1.0 / m);
            let t = tape.tanh(s);
            h = tape.scale(t, m);
        }
        h
    }

    /// Parameter nodes in [`MlpParams::to_flat`] order.
    pub fn param_nodes(&self) -> Vec<NodeId> {
        self.nodes.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Concatenates per-node gradients into the flat layout.
    pub fn flatten(grads: &[Matrix]) -> Vec<f64> {
        grads.iter().flat_map(|g| g.as_slice().iter().copied()).collect()
    }
}
