//! The three networks of the prototype generating model:
//!
//! * `F`: visual features → semantics, ReLU + dropout after both layers.
//! * `G`: semantics → visual prototype, tanh hidden layer, ReLU (or linear)
//!   output, no dropout and no noise input.
//! * `D`: critic over `[x ‖ a]`, ReLU + dropout hidden layer, unbounded
//!   scalar output.

use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};

use crate::config::{DOutput, GOutput, TrainConfig};
use crate::error::{Error, Result};
use crate::tensor_core::{dropout, RngStreams, StreamRng, Tape, Tensor, Var};

const CHECKPOINT_MAGIC: &[u8; 5] = b"EPGN1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: &Var) -> Result<Var> {
        match self {
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
            Activation::Linear => Ok(x.clone()),
        }
    }

    fn init_scale(self, fan_in: usize) -> f64 {
        match self {
            Activation::Relu => (2.0 / fan_in as f64).sqrt(),
            Activation::Tanh | Activation::Linear => (1.0 / fan_in as f64).sqrt(),
        }
    }
}

/// One affine layer. `weight` is `[in, out]`, applied as `x · W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    pub dropout: f64,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation, dropout: f64) -> Self {
        Layer {
            weight: Tensor::zeros(&[in_dim, out_dim]),
            bias: Tensor::zeros(&[out_dim]),
            activation,
            dropout,
        }
    }

    fn init(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        dropout: f64,
        rng: &mut StreamRng,
    ) -> Self {
        let scale = activation.init_scale(in_dim);
        let data = (0..in_dim * out_dim)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect::<Vec<f64>>();
        Layer {
            weight: Tensor::matrix(in_dim, out_dim, data).expect("sized above"),
            bias: Tensor::zeros(&[out_dim]),
            activation,
            dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let mlp = MlpParams { layers };
        mlp.validate()?;
        Ok(mlp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::dim("mlp", "no layers"));
        }
        for l in &self.layers {
            if l.weight.rank() != 2 || l.bias.shape() != [l.out_dim()] {
                return Err(Error::dim(
                    "mlp",
                    format!("weight {:?} with bias {:?}", l.weight.shape(), l.bias.shape()),
                ));
            }
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dim(
                    "mlp",
                    format!("layer chain {} -> {}", pair[0].out_dim(), pair[1].in_dim()),
                ));
            }
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.is_finite())
    }

    /// Weight and bias of every layer, in order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Put the parameters on `tape`: leaves on a recording tape, plain
    /// constants on an untracked one.
    pub fn bind(&self, tape: &Tape) -> BoundMlp<'_> {
        let vars = self
            .params()
            .into_iter()
            .map(|p| {
                if tape.is_recording() {
                    tape.leaf(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect();
        BoundMlp { spec: self, vars }
    }

    /// Use `vars`, in [`MlpParams::params`] order, as the parameters.
    pub fn bind_vars(&self, vars: Vec<Var>) -> Result<BoundMlp<'_>> {
        let params = self.params();
        if vars.len() != params.len()
            || vars.iter().zip(&params).any(|(v, p)| v.shape() != p.shape())
        {
            return Err(Error::dim(
                "bind_vars",
                format!("{} vars for {} parameter tensors", vars.len(), params.len()),
            ));
        }
        Ok(BoundMlp { spec: self, vars })
    }
}

/// Parameters of an [`MlpParams`] placed on a tape.
pub struct BoundMlp<'a> {
    spec: &'a MlpParams,
    vars: Vec<Var>,
}

impl BoundMlp<'_> {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Forward pass. `rng` is the dropout stream in training mode; `None`
    /// is evaluation mode and disables dropout.
    pub fn forward(&self, x: &Var, mut rng: Option<&mut StreamRng>) -> Result<Var> {
        if x.value().rank() != 2 || x.value().cols() != self.spec.in_dim() {
            return Err(Error::dim(
                "mlp forward",
                format!("input {:?}, expected width {}", x.shape(), self.spec.in_dim()),
            ));
        }
        let mut h = x.clone();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let (w, b) = (&self.vars[2 * i], &self.vars[2 * i + 1]);
            h = h.matmul(w)?.add_row(b)?;
            h = layer.activation.apply(&h)?;
            h = dropout(&h, layer.dropout, rng.as_deref_mut())?;
        }
        Ok(h)
    }
}

/// Parameters of F, G and the critic D.
#[derive(Clone, Debug, PartialEq)]
pub struct PgnModel {
    pub f: MlpParams,
    pub g: MlpParams,
    pub d: MlpParams,
}

impl PgnModel {
    pub fn new(f: MlpParams, g: MlpParams, d: MlpParams) -> Result<Self> {
        let m = PgnModel { f, g, d };
        m.validate()?;
        Ok(m)
    }

    pub fn feature_dim(&self) -> usize {
        self.f.in_dim()
    }

    pub fn semantic_dim(&self) -> usize {
        self.f.out_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.f.validate()?;
        self.g.validate()?;
        self.d.validate()?;
        let (dim, k) = (self.f.in_dim(), self.f.out_dim());
        if self.g.in_dim() != k || self.g.out_dim() != dim {
            return Err(Error::dim(
                "model",
                format!("G maps {} -> {}, expected {k} -> {dim}", self.g.in_dim(), self.g.out_dim()),
            ));
        }
        if self.d.in_dim() != dim + k || self.d.out_dim() != 1 {
            return Err(Error::dim(
                "model",
                format!(
                    "D maps {} -> {}, expected {} -> 1",
                    self.d.in_dim(),
                    self.d.out_dim(),
                    dim + k
                ),
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.f.is_finite() && self.g.is_finite() && self.d.is_finite()
    }

    pub fn bind(&self, tape: &Tape) -> BoundPgn<'_> {
        BoundPgn {
            f: self.f.bind(tape),
            g: self.g.bind(tape),
            d: self.d.bind(tape),
        }
    }

    /// Evaluation-mode `F(x)` on plain tensors.
    pub fn infer_semantics(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::untracked();
        let out = self.f.bind(&tape).forward(&tape.constant(x.clone()), None)?;
        Ok(out.value().clone())
    }

    /// Evaluation-mode `G(a)` on plain tensors.
    pub fn generate_prototypes(&self, a: &Tensor) -> Result<Tensor> {
        let tape = Tape::untracked();
        let out = self.g.bind(&tape).forward(&tape.constant(a.clone()), None)?;
        Ok(out.value().clone())
    }

    /// Evaluation-mode critic scores on plain tensors.
    pub fn critic_scores(&self, x: &Tensor, a: &Tensor) -> Result<Tensor> {
        let tape = Tape::untracked();
        let b = self.bind(&tape);
        let out = b.d_forward(&tape.constant(x.clone()), &tape.constant(a.clone()), None)?;
        Ok(out.value().clone())
    }

    /// Serialize in the `EPGN1` checkpoint layout: magic, `D` and `K` as
    /// little-endian u32, then for F, G and D in turn each layer's row
    /// count, column count, row-major f64 weights and f64 bias.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(self.feature_dim() as u32).to_le_bytes())?;
        w.write_all(&(self.semantic_dim() as u32).to_le_bytes())?;
        for net in [&self.f, &self.g, &self.d] {
            for l in &net.layers {
                w.write_all(&(l.in_dim() as u32).to_le_bytes())?;
                w.write_all(&(l.out_dim() as u32).to_le_bytes())?;
                for v in l.weight.data().iter().chain(l.bias.data()) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf).expect("writing to a Vec");
        buf
    }

    /// Read a checkpoint. Activations and dropout rates are not stored and
    /// come from `cfg`.
    pub fn read_checkpoint<R: Read>(mut r: R, cfg: &TrainConfig) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let read_u32 = |r: &mut R| -> Result<usize> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
            Ok(u32::from_le_bytes(b) as usize)
        };
        let dim = read_u32(&mut r)?;
        let k = read_u32(&mut r)?;
        let read_f64s = |r: &mut R, n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf).map_err(|_| bad("truncated"))?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let template = PgnModel::shape_template(dim, k, cfg);
        let mut nets = Vec::with_capacity(3);
        for net in [&template.f, &template.g, &template.d] {
            let mut layers = Vec::with_capacity(net.layers.len());
            for tl in &net.layers {
                let rows = read_u32(&mut r)?;
                let cols = read_u32(&mut r)?;
                if rows != tl.in_dim() || cols != tl.out_dim() {
                    return Err(Error::Checkpoint(format!(
                        "layer shape {rows}x{cols} does not match the configured {}x{}",
                        tl.in_dim(),
                        tl.out_dim()
                    )));
                }
                let weight = Tensor::matrix(rows, cols, read_f64s(&mut r, rows * cols)?)?;
                let bias = Tensor::vector(read_f64s(&mut r, cols)?);
                layers.push(Layer {
                    weight,
                    bias,
                    activation: tl.activation,
                    dropout: tl.dropout,
                });
            }
            nets.push(MlpParams::new(layers)?);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|_| bad("read failure"))?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let d = nets.pop().expect("three nets");
        let g = nets.pop().expect("three nets");
        let f = nets.pop().expect("three nets");
        let model = PgnModel::new(f, g, d)?;
        if !model.is_finite() {
            return Err(bad("non-finite parameters"));
        }
        Ok(model)
    }

    /// Zero-valued model with the configured architecture.
    pub fn shape_template(dim: usize, k: usize, cfg: &TrainConfig) -> Self {
        let arch = Architecture::from_config(cfg);
        let build = |spec: &[(usize, usize, Activation, f64)]| MlpParams {
            layers: spec
                .iter()
                .map(|&(i, o, a, p)| Layer::zeros(i, o, a, p))
                .collect(),
        };
        PgnModel {
            f: build(&arch.f_layers(dim, k)),
            g: build(&arch.g_layers(dim, k)),
            d: build(&arch.d_layers(dim, k)),
        }
    }
}

/// F, G and D placed on one tape.
pub struct BoundPgn<'a> {
    pub f: BoundMlp<'a>,
    pub g: BoundMlp<'a>,
    pub d: BoundMlp<'a>,
}

impl BoundPgn<'_> {
    pub fn f_forward(&self, x: &Var, rng: Option<&mut StreamRng>) -> Result<Var> {
        self.f.forward(x, rng)
    }

    pub fn g_forward(&self, a: &Var, rng: Option<&mut StreamRng>) -> Result<Var> {
        self.g.forward(a, rng)
    }

    /// Critic score per row of `[x ‖ a]`, shape `[rows]`.
    pub fn d_forward(&self, x: &Var, a: &Var, rng: Option<&mut StreamRng>) -> Result<Var> {
        if x.value().rows() != a.value().rows() {
            return Err(Error::Batch(format!(
                "critic inputs have {} and {} rows",
                x.value().rows(),
                a.value().rows()
            )));
        }
        let joint = x.concat_cols(a)?;
        let rows = joint.value().rows();
        self.d.forward(&joint, rng)?.reshape(&[rows])
    }

    pub fn f_vars(&self) -> &[Var] {
        self.f.vars()
    }

    pub fn g_vars(&self) -> &[Var] {
        self.g.vars()
    }

    pub fn d_vars(&self) -> &[Var] {
        self.d.vars()
    }
}

struct Architecture {
    f_hidden: usize,
    g_hidden: usize,
    d_hidden: usize,
    dropout: f64,
    g_output: Activation,
    d_output: Activation,
    d_output_dropout: f64,
}

impl Architecture {
    fn from_config(cfg: &TrainConfig) -> Self {
        let (d_output, d_output_dropout) = match cfg.d_output {
            DOutput::Linear => (Activation::Linear, 0.0),
            DOutput::Relu => (Activation::Relu, cfg.dropout),
        };
        Architecture {
            f_hidden: cfg.f_hidden,
            g_hidden: cfg.g_hidden,
            d_hidden: cfg.d_hidden,
            dropout: cfg.dropout,
            g_output: match cfg.g_output {
                GOutput::Relu => Activation::Relu,
                GOutput::Linear => Activation::Linear,
            },
            d_output,
            d_output_dropout,
        }
    }

    fn f_layers(&self, dim: usize, k: usize) -> [(usize, usize, Activation, f64); 2] {
        [
            (dim, self.f_hidden, Activation::Relu, self.dropout),
            (self.f_hidden, k, Activation::Relu, self.dropout),
        ]
    }

    fn g_layers(&self, dim: usize, k: usize) -> [(usize, usize, Activation, f64); 2] {
        [
            (k, self.g_hidden, Activation::Tanh, 0.0),
            (self.g_hidden, dim, self.g_output, 0.0),
        ]
    }

    fn d_layers(&self, dim: usize, k: usize) -> [(usize, usize, Activation, f64); 2] {
        [
            (dim + k, self.d_hidden, Activation::Relu, self.dropout),
            (self.d_hidden, 1, self.d_output, self.d_output_dropout),
        ]
    }
}

/// Fresh model with fan-in scaled Gaussian weights and zero biases, drawn
/// from the `init` stream (F, then G, then D).
pub fn init_model(dim: usize, k: usize, cfg: &TrainConfig, streams: &RngStreams) -> Result<PgnModel> {
    if dim == 0 || k == 0 {
        return Err(Error::dim("init_model", format!("D = {dim}, K = {k}")));
    }
    let arch = Architecture::from_config(cfg);
    let mut rng = streams.stream("init");
    let mut build = |spec: &[(usize, usize, Activation, f64)]| {
        MlpParams::new(
            spec.iter()
                .map(|&(i, o, a, p)| Layer::init(i, o, a, p, &mut rng))
                .collect(),
        )
    };
    let f = build(&arch.f_layers(dim, k))?;
    let g = build(&arch.g_layers(dim, k))?;
    let d = build(&arch.d_layers(dim, k))?;
    PgnModel::new(f, g, d)
}
