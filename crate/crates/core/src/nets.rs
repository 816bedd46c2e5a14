//! Multilayer perceptrons for the critic and the generator.
//!
//! Networks act on batches: an input is a `B×d` matrix whose rows are
//! points, the output is `B×out`. Weights are stored `out×in` row-major,
//! so a layer computes `H = X·Wᵀ + 1·bᵀ`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Linear,
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_dim: usize,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    /// Scalar critic with a linear head.
    pub fn critic(input_dim: usize, hidden: &[usize], activation: Activation) -> Self {
        MlpSpec {
            input_dim,
            hidden: hidden.to_vec(),
            activation,
            output_dim: 1,
            output_activation: OutputActivation::Linear,
        }
    }

    pub fn generator(noise_dim: usize, hidden: &[usize], data_dim: usize) -> Self {
        MlpSpec {
            input_dim: noise_dim,
            hidden: hidden.to_vec(),
            activation: Activation::Relu,
            output_dim: data_dim,
            output_activation: OutputActivation::Linear,
        }
    }

    /// Three hidden layers of 64 relu units, linear output.
    pub fn default_critic(data_dim: usize) -> Self {
        Self::critic(data_dim, &[64, 64, 64], Activation::Relu)
    }

    pub fn default_generator(data_dim: usize) -> Self {
        let noise_dim = if data_dim == 1 { 1 } else { 2 };
        Self::generator(noise_dim, &[64, 64, 64], data_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("spec", "dimensions must be positive"));
        }
        if self.hidden.is_empty() {
            return Err(Error::config("spec.hidden", "at least one hidden layer"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("spec.hidden", "widths must be positive"));
        }
        Ok(())
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows×cols`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Fan-in scaled normal weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let gain = match spec.activation {
            Activation::Relu => 2.0,
            Activation::Tanh => 1.0,
        };
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(rows, cols)| {
                let std = (gain / cols as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                Layer {
                    rows,
                    cols,
                    w: (0..rows * cols).map(|_| normal.sample(rng)).collect(),
                    b: vec![0.0; rows],
                }
            })
            .collect();
        Ok(MlpParams {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn zeros(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(rows, cols)| Layer {
                rows,
                cols,
                w: vec![0.0; rows * cols],
                b: vec![0.0; rows],
            })
            .collect();
        Ok(MlpParams {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters in `[w0, b0, w1, b1, ...]` order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Size {
                left: self.param_count(),
                right: values.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&values[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&values[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Parameter tensors in flat order, for binding as tape inputs.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    Tensor::new(l.rows, l.cols, l.w.clone()).expect("layer shape"),
                    Tensor::column(&l.b),
                ]
            })
            .collect()
    }

    /// Records every weight and bias as a tape input.
    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        let vars = self
            .tensors()
            .into_iter()
            .map(|t| tape.constant(t))
            .collect::<Vec<_>>();
        BoundMlp {
            spec: self.spec.clone(),
            vars,
        }
    }

    /// Untaped batch evaluation.
    pub fn eval(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let net = self.bind(&mut tape);
        let x = tape.constant(Tensor::from_rows(points)?);
        let y = net.forward(&mut tape, x)?;
        Ok(tape.value(y)?.to_rows())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MlpDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MlpDocument = serde_json::from_str(text)?;
        MlpParams::try_from(doc)
    }
}

/// Network whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    spec: MlpSpec,
    vars: Vec<Var>,
}

impl BoundMlp {
    /// Wraps existing tape variables laid out as `[w0, b0, w1, b1, ...]`.
    pub fn from_vars(spec: &MlpSpec, vars: Vec<Var>) -> Result<Self> {
        let expected = 2 * (spec.hidden.len() + 1);
        if vars.len() != expected {
            return Err(Error::Size {
                left: expected,
                right: vars.len(),
            });
        }
        Ok(BoundMlp {
            spec: spec.clone(),
            vars,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Var] {
        &self.vars
    }

    /// `x` is `B×input_dim`; returns `B×output_dim`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (rows, cols) = tape.value(x)?.shape();
        if cols != self.spec.input_dim {
            return Err(Error::Dimension {
                op: "mlp forward",
                lhs: (rows, cols),
                rhs: (rows, self.spec.input_dim),
            });
        }
        let ones = tape.constant(Tensor::filled(rows, 1, 1.0));
        let n_layers = self.vars.len() / 2;
        let mut h = x;
        for l in 0..n_layers {
            let (w, b) = (self.vars[2 * l], self.vars[2 * l + 1]);
            let z = tape.matmul(h, w, false, true)?;
            let bias = tape.matmul(ones, b, false, true)?;
            let z = tape.add(z, bias)?;
            h = if l + 1 < n_layers {
                match self.spec.activation {
                    Activation::Relu => tape.relu(z)?,
                    Activation::Tanh => tape.tanh(z)?,
                }
            } else {
                match self.spec.output_activation {
                    OutputActivation::Linear => z,
                    OutputActivation::Tanh => tape.tanh(z)?,
                }
            };
        }
        Ok(h)
    }
}

/// A scalar function of points that can be recorded on a tape.
pub trait Critic {
    fn input_dim(&self) -> usize;

    /// `x` is `B×d`; returns the `B×1` column of critic values.
    fn eval(&self, tape: &mut Tape, x: Var) -> Result<Var>;

    /// Rows of the result are `∇ₓD` at the rows of `x`. The gradient stays
    /// on the tape, so it can be differentiated w.r.t. the critic's
    /// parameters.
    fn input_gradient(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let d = self.eval(tape, x)?;
        let s = tape.sum(d)?;
        Ok(tape.backward(s, &[x])?[0])
    }
}

impl Critic for BoundMlp {
    fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn eval(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let out = self.spec.output_dim;
        if out != 1 {
            return Err(Error::NotScalar {
                op: "critic output",
                shape: (1, out),
            });
        }
        self.forward(tape, x)
    }
}

/// `D(x) = w·x`.
#[derive(Clone, Copy, Debug)]
pub struct LinearCritic {
    pub weight: Var,
    pub dim: usize,
}

impl LinearCritic {
    pub fn bind(tape: &mut Tape, weight: &[f64]) -> Self {
        LinearCritic {
            weight: tape.vector(weight),
            dim: weight.len(),
        }
    }
}

impl Critic for LinearCritic {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.matmul(x, self.weight, false, false)
    }
}

/// `D(x) = ‖x‖²/2`.
#[derive(Clone, Copy, Debug)]
pub struct HalfSquaredNorm {
    pub dim: usize,
}

impl Critic for HalfSquaredNorm {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let ones = tape.constant(Tensor::filled(self.dim, 1, 1.0));
        let sq = tape.square(x)?;
        let s = tape.matmul(sq, ones, false, false)?;
        tape.scale(s, 0.5)
    }
}

/// Something that can place a [`Critic`] on a fresh tape.
pub trait CriticModel {
    type Bound: Critic;
    fn bind_critic(&self, tape: &mut Tape) -> Self::Bound;
}

impl CriticModel for MlpParams {
    type Bound = BoundMlp;
    fn bind_critic(&self, tape: &mut Tape) -> BoundMlp {
        self.bind(tape)
    }
}

/// Untaped linear critic model.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel(pub Vec<f64>);

impl CriticModel for LinearModel {
    type Bound = LinearCritic;
    fn bind_critic(&self, tape: &mut Tape) -> LinearCritic {
        LinearCritic::bind(tape, &self.0)
    }
}

/// Critic values at each point.
pub fn critic_values<M: CriticModel>(model: &M, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let critic = model.bind_critic(&mut tape);
    let x = tape.constant(Tensor::from_rows(points)?);
    let d = critic.eval(&mut tape, x)?;
    Ok(tape.value(d)?.data().to_vec())
}

/// `∇ₓD` at each point.
pub fn critic_gradients<M: CriticModel>(model: &M, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let critic = model.bind_critic(&mut tape);
    let x = tape.constant(Tensor::from_rows(points)?);
    let g = critic.input_gradient(&mut tape, x)?;
    Ok(tape.value(g)?.to_rows())
}

#[derive(Serialize, Deserialize)]
struct LayerDocument {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpDocument {
    spec: MlpSpec,
    layers: Vec<LayerDocument>,
}

impl From<&MlpParams> for MlpDocument {
    fn from(p: &MlpParams) -> Self {
        MlpDocument {
            spec: p.spec.clone(),
            layers: p
                .layers
                .iter()
                .map(|l| LayerDocument {
                    w: l.w.chunks(l.cols).map(<[f64]>::to_vec).collect(),
                    b: l.b.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MlpDocument> for MlpParams {
    type Error = Error;

    fn try_from(doc: MlpDocument) -> Result<Self> {
        doc.spec.validate()?;
        let shapes = doc.spec.layer_shapes();
        if shapes.len() != doc.layers.len() {
            return Err(Error::config("layers", "layer count does not match spec"));
        }
        let layers = shapes
            .into_iter()
            .zip(doc.layers)
            .enumerate()
            .map(|(i, ((rows, cols), l))| {
                if l.w.len() != rows || l.w.iter().any(|r| r.len() != cols) || l.b.len() != rows {
                    return Err(Error::config(
                        format!("layers[{i}]"),
                        format!("expected w {rows}×{cols} and b {rows}"),
                    ));
                }
                Ok(Layer {
                    rows,
                    cols,
                    w: l.w.concat(),
                    b: l.b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MlpParams {
            spec: doc.spec,
            layers,
        })
    }
}
