//! The eight benchmark architectures assembled from layer primitives.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::{ConvKan, KanLinear};
use crate::layers::{
    sigmoid, square_side, Activation, Conv2d, Dense, Flatten, Lstm, MaxPool2d, RowsAsSequence,
    SquareReshape,
};
use crate::spline::SplineGrid;
use crate::tensor::{Param, Tensor};

const PARAM_MAGIC: &[u8; 8] = b"KANIDSM1";
const KERNEL: usize = 3;
const POOL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "CNN")]
    Cnn,
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "MLP2")]
    Mlp2,
    #[serde(rename = "MLP5")]
    Mlp5,
    #[serde(rename = "KAN2")]
    Kan2,
    #[serde(rename = "KAN5")]
    Kan5,
    #[serde(rename = "ConvKAN")]
    ConvKan,
    #[serde(rename = "KAN_LSTM")]
    KanLstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Cnn,
        ModelKind::Lstm,
        ModelKind::Mlp2,
        ModelKind::Mlp5,
        ModelKind::Kan2,
        ModelKind::Kan5,
        ModelKind::ConvKan,
        ModelKind::KanLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "CNN",
            ModelKind::Lstm => "LSTM",
            ModelKind::Mlp2 => "MLP2",
            ModelKind::Mlp5 => "MLP5",
            ModelKind::Kan2 => "KAN2",
            ModelKind::Kan5 => "KAN5",
            ModelKind::ConvKan => "ConvKAN",
            ModelKind::KanLstm => "KAN_LSTM",
        }
    }

    /// True for architectures that see the input as a square image.
    pub fn is_spatial(self) -> bool {
        matches!(
            self,
            ModelKind::Cnn | ModelKind::Lstm | ModelKind::ConvKan | ModelKind::KanLstm
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_uppercase().replace(['-', ' '], "_");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_uppercase() == norm)
            .ok_or_else(|| Error::UnsupportedKind(s.to_string()))
    }
}

/// Grid settings shared by every spline layer of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub grid_size: usize,
    pub degree: usize,
    pub domain_lo: f64,
    pub domain_hi: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            grid_size: 5,
            degree: 3,
            domain_lo: -1.0,
            domain_hi: 1.0,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<SplineGrid> {
        SplineGrid::new(self.domain_lo, self.domain_hi, self.grid_size, self.degree)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    #[serde(default = "default_width")]
    pub hidden_width: usize,
    #[serde(default)]
    pub kan_grid: GridConfig,
    /// Channel widths of the three convolution stages (KAN-LSTM uses the first two).
    #[serde(default = "default_channels")]
    pub conv_channels: [usize; 3],
    #[serde(default)]
    pub seed: u64,
}

fn default_width() -> usize {
    64
}

fn default_channels() -> [usize; 3] {
    [16, 32, 32]
}

impl ModelSpec {
    pub fn new(kind: ModelKind, input_dim: usize, seed: u64) -> Self {
        Self {
            kind,
            input_dim,
            hidden_width: default_width(),
            kan_grid: GridConfig::default(),
            conv_channels: default_channels(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSize("input_dim must be >= 1".into()));
        }
        if self.hidden_width == 0 || self.conv_channels.contains(&0) {
            return Err(Error::InvalidSize("layer widths must be >= 1".into()));
        }
        self.kan_grid.build().map(|_| ())
    }
}

/// One stage of a sequential model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
    Lstm(Lstm),
    KanLinear(KanLinear),
    ConvKan(ConvKan),
    SquareReshape(SquareReshape),
    Flatten(Flatten),
    RowsAsSequence(RowsAsSequence),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Lstm(_) => "lstm",
            Layer::KanLinear(_) => "kan_linear",
            Layer::ConvKan(_) => "conv_kan",
            Layer::SquareReshape(_) => "square_reshape",
            Layer::Flatten(_) => "flatten",
            Layer::RowsAsSequence(_) => "rows_as_sequence",
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv2d(l) => l.forward(x),
            Layer::MaxPool2d(l) => l.forward(x),
            Layer::Lstm(l) => l.forward(x),
            Layer::KanLinear(l) => l.forward(x),
            Layer::ConvKan(l) => l.forward(x),
            Layer::SquareReshape(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::RowsAsSequence(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.backward(g),
            Layer::Conv2d(l) => l.backward(g),
            Layer::MaxPool2d(l) => l.backward(g),
            Layer::Lstm(l) => l.backward(g),
            Layer::KanLinear(l) => l.backward(g),
            Layer::ConvKan(l) => l.backward(g),
            Layer::SquareReshape(l) => l.backward(g),
            Layer::Flatten(l) => l.backward(g),
            Layer::RowsAsSequence(l) => l.backward(g),
        }
    }

    pub fn params(&self) -> Option<&crate::tensor::LayerParams> {
        match self {
            Layer::Dense(l) => Some(l.params()),
            Layer::Conv2d(l) => Some(l.params()),
            Layer::Lstm(l) => Some(l.params()),
            Layer::KanLinear(l) => Some(l.params()),
            Layer::ConvKan(l) => Some(l.params()),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<&mut crate::tensor::LayerParams> {
        match self {
            Layer::Dense(l) => Some(l.params_mut()),
            Layer::Conv2d(l) => Some(l.params_mut()),
            Layer::Lstm(l) => Some(l.params_mut()),
            Layer::KanLinear(l) => Some(l.params_mut()),
            Layer::ConvKan(l) => Some(l.params_mut()),
            _ => None,
        }
    }
}

/// A sequential stack mapping `(batch, input_dim)` to `(batch, 1)` logits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    layer: usize,
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamHeader {
    spec: ModelSpec,
    manifest: Vec<ManifestEntry>,
}

/// Assembles the architecture named by `spec.kind`; all initial parameters
/// are drawn from a ChaCha8 stream seeded with `spec.seed`.
pub fn build(spec: &ModelSpec) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rng = &mut rng;
    let grid = spec.kan_grid.build()?;
    let (d, h) = (spec.input_dim, spec.hidden_width);
    let [c1, c2, c3] = spec.conv_channels;
    let s = square_side(d);
    let relu = Activation::Relu;
    let pool = || MaxPool2d::new(POOL).expect("nonzero window");
    let pooled = |n: usize| n.div_ceil(POOL);

    let layers = match spec.kind {
        ModelKind::Mlp2 | ModelKind::Mlp5 => {
            let depth = if spec.kind == ModelKind::Mlp2 { 2 } else { 5 };
            let mut v = Vec::new();
            let mut fan_in = d;
            for _ in 0..depth {
                v.push(Layer::Dense(Dense::new(fan_in, h, relu, rng)));
                fan_in = h;
            }
            v.push(Layer::Dense(Dense::new(h, 1, Activation::Identity, rng)));
            v
        }
        ModelKind::Kan2 | ModelKind::Kan5 => {
            let depth = if spec.kind == ModelKind::Kan2 { 2 } else { 5 };
            (0..depth)
                .map(|i| {
                    let fan_in = if i == 0 { d } else { h };
                    let fan_out = if i + 1 == depth { 1 } else { h };
                    Layer::KanLinear(KanLinear::new(fan_in, fan_out, grid.clone(), rng))
                })
                .collect()
        }
        ModelKind::Cnn => {
            let mut v = vec![Layer::SquareReshape(SquareReshape::new(d)?)];
            let mut side = s;
            let mut c_in = 1;
            for c in [c1, c2, c3] {
                v.push(Layer::Conv2d(Conv2d::new(c_in, c, KERNEL, 1, relu, rng)));
                v.push(Layer::MaxPool2d(pool()));
                side = pooled(side);
                c_in = c;
            }
            v.push(Layer::Flatten(Flatten::default()));
            v.push(Layer::Dense(Dense::new(c_in * side * side, h, relu, rng)));
            v.push(Layer::Dense(Dense::new(h, 1, Activation::Identity, rng)));
            v
        }
        ModelKind::Lstm => vec![
            Layer::SquareReshape(SquareReshape::new(d)?),
            Layer::RowsAsSequence(RowsAsSequence::default()),
            Layer::Lstm(Lstm::new(s, h, rng)),
            Layer::Dense(Dense::new(h, h, relu, rng)),
            Layer::Dense(Dense::new(h, 1, Activation::Identity, rng)),
        ],
        ModelKind::ConvKan => {
            let mut v = vec![Layer::SquareReshape(SquareReshape::new(d)?)];
            let mut side = s;
            let mut c_in = 1;
            for c in [c1, c2, c3] {
                v.push(Layer::ConvKan(ConvKan::new(
                    c_in,
                    c,
                    KERNEL,
                    1,
                    grid.clone(),
                    rng,
                )));
                v.push(Layer::MaxPool2d(pool()));
                side = pooled(side);
                c_in = c;
            }
            v.push(Layer::Flatten(Flatten::default()));
            v.push(Layer::KanLinear(KanLinear::new(
                c_in * side * side,
                h,
                grid.clone(),
                rng,
            )));
            v.push(Layer::KanLinear(KanLinear::new(h, h, grid.clone(), rng)));
            v.push(Layer::KanLinear(KanLinear::new(h, 1, grid.clone(), rng)));
            v
        }
        ModelKind::KanLstm => vec![
            Layer::SquareReshape(SquareReshape::new(d)?),
            Layer::Conv2d(Conv2d::new(1, c1, KERNEL, 1, relu, rng)),
            Layer::Conv2d(Conv2d::new(c1, c2, KERNEL, 1, relu, rng)),
            Layer::RowsAsSequence(RowsAsSequence::default()),
            Layer::Lstm(Lstm::new(c2 * s, h, rng)),
            Layer::KanLinear(KanLinear::new(h, h, grid.clone(), rng)),
            Layer::KanLinear(KanLinear::new(h, h, grid.clone(), rng)),
            Layer::Dense(Dense::new(h, 1, Activation::Identity, rng)),
        ],
    };
    Ok(Model {
        spec: spec.clone(),
        layers,
    })
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Logits of shape `(batch, 1)`.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(2, "model input")?;
        if x.shape()[1] != self.spec.input_dim {
            return Err(Error::shape(
                "model input",
                &[x.rows(), self.spec.input_dim],
                x.shape(),
            ));
        }
        let mut cur = self.layers[0].forward(x)?;
        for layer in &mut self.layers[1..] {
            cur = layer.forward(&cur)?;
        }
        if let Some(row) = cur.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLogit(row));
        }
        Ok(cur)
    }

    /// Backpropagates `d loss / d logits`, accumulating parameter gradients.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Tensor> {
        let mut g = grad_logits.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Labels by the `sigmoid(logit) >= threshold` rule.
    pub fn predict(&mut self, x: &Tensor, threshold: f64) -> Result<Vec<u8>> {
        let logits = self.forward(x)?;
        Ok(logits
            .data()
            .iter()
            .map(|&z| u8::from(sigmoid(z) >= threshold))
            .collect())
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .flat_map(|p| p.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.layers
            .iter_mut()
            .filter_map(Layer::params_mut)
            .flat_map(|p| p.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Flat copy of every parameter value in manifest order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    fn manifest(&self) -> Vec<ManifestEntry> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.params().map(|p| (i, p)))
            .flat_map(|(i, ps)| {
                ps.iter().map(move |p| ManifestEntry {
                    layer: i,
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                })
            })
            .collect()
    }

    /// Writes `magic | u32 header length | JSON header | f64 LE values`.
    pub fn save_params<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&ParamHeader {
            spec: self.spec.clone(),
            manifest: self.manifest(),
        })?;
        let len =
            u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;
        w.write_all(PARAM_MAGIC)?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&header)?;
        for v in self.params().flat_map(|p| p.value.data().iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Rebuilds the model from its stored spec, then overwrites every parameter.
    pub fn load_params<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != PARAM_MAGIC {
            return Err(Error::Format("not a model parameter file".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: ParamHeader = serde_json::from_slice(&header)?;
        let mut model = build(&header.spec)?;
        if model.manifest() != header.manifest {
            return Err(Error::Format(
                "parameter manifest does not match the spec".into(),
            ));
        }
        let mut buf = [0u8; 8];
        for p in model.params_mut() {
            for v in p.value.data_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp2_dims_and_count() {
        let m = build(&ModelSpec::new(ModelKind::Mlp2, 41, 0)).unwrap();
        // 41·64+64 + 64·64+64 + 64+1
        assert_eq!(m.param_count(), 6913);
        assert_eq!(m.layers().len(), 3);
    }

    #[test]
    fn kan2_count() {
        let m = build(&ModelSpec::new(ModelKind::Kan2, 41, 0)).unwrap();
        assert_eq!(m.param_count(), 41 * 64 * 10 + 64 * 10);
    }

    #[test]
    fn kan_lstm_order() {
        let m = build(&ModelSpec::new(ModelKind::KanLstm, 41, 0)).unwrap();
        let names: Vec<_> = m.layers().iter().map(Layer::name).collect();
        assert_eq!(
            names,
            [
                "square_reshape",
                "conv2d",
                "conv2d",
                "rows_as_sequence",
                "lstm",
                "kan_linear",
                "kan_linear",
                "dense"
            ]
        );
    }

    #[test]
    fn same_seed_same_parameters() {
        for kind in ModelKind::ALL {
            let spec = ModelSpec::new(kind, 10, 7);
            let a = build(&spec).unwrap();
            let b = build(&spec).unwrap();
            assert_eq!(a.flat_params(), b.flat_params(), "{kind}");
            let c = build(&ModelSpec { seed: 8, ..spec }).unwrap();
            assert_ne!(a.flat_params(), c.flat_params(), "{kind}");
        }
    }

    #[test]
    fn every_kind_gives_finite_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::uniform(&[3, 10], 1.0, &mut rng);
        for kind in ModelKind::ALL {
            let mut spec = ModelSpec::new(kind, 10, 1);
            spec.hidden_width = 8;
            spec.conv_channels = [2, 3, 2];
            let mut m = build(&spec).unwrap();
            let y = m.forward(&x).unwrap();
            assert_eq!(y.shape(), &[3, 1], "{kind}");
            assert!(y.all_finite());
        }
    }

    #[test]
    fn predict_threshold_rule() {
        let w = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let mut m = Model {
            spec: ModelSpec::new(ModelKind::Mlp2, 1, 0),
            layers: vec![Layer::Dense(
                Dense::from_parts(w, Tensor::zeros(&[1]), Activation::Identity).unwrap(),
            )],
        };
        let x = Tensor::new(vec![3, 1], vec![-10.0, 0.0, 10.0]).unwrap();
        assert_eq!(m.predict(&x, 0.5).unwrap(), vec![0, 1, 1]);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert_eq!("kan-lstm".parse::<ModelKind>().unwrap(), ModelKind::KanLstm);
        assert!(matches!(
            "GRU".parse::<ModelKind>(),
            Err(Error::UnsupportedKind(_))
        ));
    }

    #[test]
    fn params_round_trip() {
        let mut spec = ModelSpec::new(ModelKind::KanLstm, 9, 3);
        spec.hidden_width = 4;
        spec.conv_channels = [2, 2, 2];
        let m = build(&spec).unwrap();
        let mut buf = Vec::new();
        m.save_params(&mut buf).unwrap();
        let back = Model::load_params(buf.as_slice()).unwrap();
        assert_eq!(back.flat_params(), m.flat_params());
        assert!(Model::load_params(&buf[1..]).is_err());
    }

    #[test]
    fn shape_errors() {
        let mut m = build(&ModelSpec::new(ModelKind::Mlp2, 4, 0)).unwrap();
        assert!(matches!(
            m.forward(&Tensor::zeros(&[2, 5])),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(build(&ModelSpec::new(ModelKind::Mlp2, 0, 0)).is_err());
    }
}
