//! Shallow convolutional feature extractors with fixed random filters.
//!
//! Filters are drawn once from a seeded normal distribution and never
//! trained. Content and style targets are read from declared tap points:
//! the raw assembled features, the magnitude block alone, or the output of
//! a layer after its nonlinearity.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diff_graph::{expect_arity, GraphBuilder, NodeId, Op, Reshape, Tensor};
use crate::error::{Error, Result};
use crate::spectral::ops::SelectBlockOp;
use crate::spectral::{Component, FeatureLayout, FeatureTensor, FeatureVariant, FrontEndConfig};

pub const PRESET_NAMES: [&str; 3] = ["rim-k3", "mag-updiff-k2", "baseline-ulyanov"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    /// Kernel extent along frames.
    pub time_width: usize,
    /// Kernel extent along the feature-height axis.
    pub height_span: usize,
    pub filters: usize,
    /// (time, height)
    pub stride: (usize, usize),
    pub relu: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TapPoint {
    /// The assembled features before any convolution.
    Features,
    /// The magnitude (or log-magnitude) block alone, bins as channels.
    MagnitudeBlock,
    /// Output of layer `i`, after its nonlinearity if it has one.
    Layer(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Content,
    Style,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tap {
    pub point: TapPoint,
    pub role: Role,
}

impl Tap {
    pub fn content(point: TapPoint) -> Self {
        Tap {
            point,
            role: Role::Content,
        }
    }

    pub fn style(point: TapPoint) -> Self {
        Tap {
            point,
            role: Role::Style,
        }
    }
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            Role::Content => "content",
            Role::Style => "style",
        };
        match self.point {
            TapPoint::Features => write!(f, "{role}@features"),
            TapPoint::MagnitudeBlock => write!(f, "{role}@magnitude"),
            TapPoint::Layer(i) => write!(f, "{role}@layer{i}"),
        }
    }
}

/// Network definition: front-end, layers, filter seed and tap placement.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub front_end: FrontEndConfig,
    /// Feed the features as `[frames, 1, height]` so every bin is an input
    /// channel and convolution runs along time only.
    pub bins_as_channels: bool,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
    pub taps: Vec<Tap>,
    pub preset: Option<String>,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        self.front_end.validate()?;
        for (i, l) in self.layers.iter().enumerate() {
            if l.time_width == 0 || l.height_span == 0 || l.filters == 0 {
                return Err(Error::Parameter(format!("layer {i} has a zero-sized kernel")));
            }
            if l.stride.0 == 0 || l.stride.1 == 0 {
                return Err(Error::Parameter(format!("layer {i} has a zero stride")));
            }
        }
        for tap in &self.taps {
            match tap.point {
                TapPoint::Layer(i) if i >= self.layers.len() => {
                    return Err(Error::Parameter(format!(
                        "tap {tap} refers to a missing layer ({} layers)",
                        self.layers.len()
                    )))
                }
                TapPoint::MagnitudeBlock if self.magnitude_block().is_none() => {
                    return Err(Error::Parameter(format!(
                        "tap {tap} needs a magnitude block, variant {} has none",
                        self.front_end.variant
                    )))
                }
                _ => {}
            }
        }
        if !self.taps.iter().any(|t| t.role == Role::Content) {
            return Err(Error::Parameter("network needs at least one content tap".into()));
        }
        if !self.taps.iter().any(|t| t.role == Role::Style) {
            return Err(Error::Parameter("network needs at least one style tap".into()));
        }
        Ok(())
    }

    fn magnitude_block(&self) -> Option<usize> {
        self.front_end
            .variant
            .components()
            .iter()
            .position(|c| matches!(c, Component::Magnitude | Component::LogMagnitude))
    }

    /// `(height, channels)` of the first layer's input.
    pub fn input_geometry(&self) -> (usize, usize) {
        let height = self.front_end.variant.components().len() * self.front_end.bins();
        if self.bins_as_channels {
            (1, height)
        } else {
            (height, 1)
        }
    }

    /// Repeats the first layer until there are `depth` layers, with a content
    /// and a style tap after each one. Taps on the raw features are kept.
    pub fn with_depth(mut self, depth: usize) -> Result<Self> {
        let first = self
            .layers
            .first()
            .cloned()
            .ok_or_else(|| Error::Parameter("network has no layer to repeat".into()))?;
        if depth == 0 {
            return Err(Error::Parameter("depth must be at least 1".into()));
        }
        self.layers = vec![first; depth];
        self.taps.retain(|t| !matches!(t.point, TapPoint::Layer(_)));
        for i in 0..depth {
            self.taps.push(Tap::content(TapPoint::Layer(i)));
            self.taps.push(Tap::style(TapPoint::Layer(i)));
        }
        Ok(self)
    }

    pub fn with_filters(mut self, filters: usize) -> Self {
        self.layers.iter_mut().for_each(|l| l.filters = filters);
        self
    }

    pub fn with_time_width(mut self, width: usize) -> Self {
        self.layers.iter_mut().for_each(|l| l.time_width = width);
        self
    }

    /// Smallest frame count the layers can consume.
    pub fn min_frames(&self) -> usize {
        let mut need = 1;
        for l in self.layers.iter().rev() {
            need = (need - 1) * l.stride.0 + l.time_width;
        }
        need
    }
}

fn rim_style_taps() -> Vec<Tap> {
    vec![
        Tap::content(TapPoint::Features),
        Tap::style(TapPoint::MagnitudeBlock),
        Tap::content(TapPoint::Layer(0)),
        Tap::style(TapPoint::Layer(0)),
    ]
}

/// Built-in architectures.
///
/// * `rim-k3`: real, imaginary and magnitude blocks stacked along height, one
///   3 (height) × 9 (time) convolution with 128 filters and ReLU. Content is
///   read from the raw features and after the ReLU; style from the magnitude
///   block and after the ReLU.
/// * `mag-updiff-k2`: magnitude and unwrapped phase differential, a 2 × 9
///   kernel, otherwise as `rim-k3`.
/// * `baseline-ulyanov`: log magnitudes with bins as channels, one
///   11-frame convolution with 2048 filters and ReLU; content and style both
///   read after the ReLU.
pub fn load_preset(name: &str) -> Result<NetworkConfig> {
    let conv = |height_span, time_width, filters| LayerSpec {
        time_width,
        height_span,
        filters,
        stride: (1, 1),
        relu: true,
    };
    let cfg = match name {
        "rim-k3" => NetworkConfig {
            front_end: FrontEndConfig {
                variant: FeatureVariant::RealImagMag,
                ..FrontEndConfig::default()
            },
            bins_as_channels: false,
            layers: vec![conv(3, 9, 128)],
            seed: 0,
            taps: rim_style_taps(),
            preset: Some(name.to_string()),
        },
        "mag-updiff-k2" => NetworkConfig {
            front_end: FrontEndConfig {
                variant: FeatureVariant::MagUnwrappedPhaseDiff,
                ..FrontEndConfig::default()
            },
            bins_as_channels: false,
            layers: vec![conv(2, 9, 128)],
            seed: 0,
            taps: rim_style_taps(),
            preset: Some(name.to_string()),
        },
        "baseline-ulyanov" => NetworkConfig {
            front_end: FrontEndConfig {
                variant: FeatureVariant::MagOnly,
                ..FrontEndConfig::default()
            },
            bins_as_channels: true,
            layers: vec![conv(1, 11, 2048)],
            seed: 0,
            taps: vec![Tap::content(TapPoint::Layer(0)), Tap::style(TapPoint::Layer(0))],
            preset: Some(name.to_string()),
        },
        other => {
            return Err(Error::Parameter(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// One realized convolution: kernel `[time, height, in_channels, filters]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel: Tensor,
    pub stride: (usize, usize),
    pub relu: bool,
}

impl ConvLayer {
    pub fn new(kernel: Tensor, stride: (usize, usize), relu: bool) -> Result<Self> {
        if kernel.shape().len() != 4 {
            return Err(Error::Shape(format!("kernel must be 4-D, got {:?}", kernel.shape())));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Parameter("strides must be at least 1".into()));
        }
        if !kernel.is_finite() {
            return Err(Error::Parameter("kernel has non-finite weights".into()));
        }
        Ok(ConvLayer { kernel, stride, relu })
    }

    fn dims(&self) -> [usize; 4] {
        let s = self.kernel.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub fn filters(&self) -> usize {
        self.kernel.shape()[3]
    }

    /// Output shape for a `[time, height, channels]` input.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [kt, kh, kc, k] = self.dims();
        let &[t, h, c] = input else {
            return Err(Error::Shape(format!(
                "conv input must be [time, height, channels], got {input:?}"
            )));
        };
        if c != kc {
            return Err(Error::Shape(format!("conv expects {kc} input channels, got {c}")));
        }
        if t < kt || h < kh {
            return Err(Error::Shape(format!("kernel {kt}×{kh} is larger than input {t}×{h}")));
        }
        Ok(vec![(t - kt) / self.stride.0 + 1, (h - kh) / self.stride.1 + 1, k])
    }
}

/// A network with its filters drawn.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub layers: Vec<Arc<ConvLayer>>,
}

/// Draws every kernel i.i.d. from `N(0, 2/(time·height·in_channels))`,
/// layer by layer in row-major kernel order, from one stream seeded by `cfg.seed`.
pub fn init_filters(cfg: &NetworkConfig) -> Result<Network> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (_, mut channels) = cfg.input_geometry();
    let mut layers = Vec::with_capacity(cfg.layers.len());
    for spec in &cfg.layers {
        let fan_in = spec.time_width * spec.height_span * channels;
        let sigma = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        let shape = vec![spec.time_width, spec.height_span, channels, spec.filters];
        let n = fan_in * spec.filters;
        let data = (0..n).map(|_| normal.sample(&mut rng)).collect();
        layers.push(Arc::new(ConvLayer::new(
            Tensor::from_parts(shape, data),
            spec.stride,
            spec.relu,
        )?));
        channels = spec.filters;
    }
    Ok(Network {
        config: cfg.clone(),
        layers,
    })
}

/// Copies the receptive fields of output row `t` into `cols` (`Ho × kt·kh·C`).
fn im2col_row(x: &[f64], in_shape: [usize; 3], layer: &ConvLayer, t: usize, ho: usize, cols: &mut [f64]) {
    let [_, h, c] = in_shape;
    let [kt, kh, _, _] = layer.dims();
    let (st, sh) = layer.stride;
    let q = kt * kh * c;
    for oh in 0..ho {
        let dst = &mut cols[oh * q..(oh + 1) * q];
        for dt in 0..kt {
            let src_row = (t * st + dt) * h * c;
            let start = src_row + oh * sh * c;
            dst[dt * kh * c..(dt + 1) * kh * c].copy_from_slice(&x[start..start + kh * c]);
        }
    }
}

/// `c (m×n) = a (m×k) · b (k×n)` with arbitrary strides; overwrites `c`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices covering every (row, col) addressed by the given strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Valid (unpadded) strided cross-correlation over (time, height).
///
/// `out[t, h, f] = Σ x[t·st + i, h·sh + j, c] · kernel[i, j, c, f]`
pub fn conv2d_forward(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    let out_shape = layer.output_shape(input.shape())?;
    Ok(conv_forward_unchecked(input, layer, &out_shape))
}

fn conv_forward_unchecked(input: &Tensor, layer: &ConvLayer, out_shape: &[usize]) -> Tensor {
    let s = input.shape();
    let in_shape = [s[0], s[1], s[2]];
    let [kt, kh, c, k] = layer.dims();
    let (to, ho) = (out_shape[0], out_shape[1]);
    let q = kt * kh * c;
    let mut out = vec![0.0; to * ho * k];
    let mut cols = vec![0.0; ho * q];
    for t in 0..to {
        im2col_row(input.data(), in_shape, layer, t, ho, &mut cols);
        let dst = &mut out[t * ho * k..(t + 1) * ho * k];
        gemm(ho, q, k, &cols, q as isize, 1, layer.kernel.data(), k as isize, 1, dst);
    }
    Tensor::from_parts(out_shape.to_vec(), out)
}

/// Adjoint of [`conv2d_forward`] with respect to its input.
pub fn conv2d_backward_input(input_shape: &[usize], layer: &ConvLayer, upstream: &Tensor) -> Tensor {
    let [t_in, h, c] = [input_shape[0], input_shape[1], input_shape[2]];
    let [kt, kh, _, k] = layer.dims();
    let (st, sh) = layer.stride;
    let (to, ho) = (upstream.shape()[0], upstream.shape()[1]);
    let q = kt * kh * c;
    let mut grad = vec![0.0; t_in * h * c];
    let mut cols = vec![0.0; ho * q];
    for t in 0..to {
        let g = &upstream.data()[t * ho * k..(t + 1) * ho * k];
        // cols (ho × q) = g (ho × k) · kernelᵀ (k × q)
        gemm(
            ho,
            k,
            q,
            g,
            k as isize,
            1,
            layer.kernel.data(),
            1,
            k as isize,
            &mut cols,
        );
        for oh in 0..ho {
            let src = &cols[oh * q..(oh + 1) * q];
            for dt in 0..kt {
                let start = (t * st + dt) * h * c + oh * sh * c;
                let dst = &mut grad[start..start + kh * c];
                for (d, s) in dst.iter_mut().zip(&src[dt * kh * c..(dt + 1) * kh * c]) {
                    *d += s;
                }
            }
        }
    }
    Tensor::from_parts(input_shape.to_vec(), grad)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

#[derive(Debug, Clone)]
pub struct Conv2dOp {
    layer: Arc<ConvLayer>,
}

impl Conv2dOp {
    pub fn new(layer: Arc<ConvLayer>) -> Self {
        Conv2dOp { layer }
    }
}

impl Op for Conv2dOp {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, 1)?;
        self.layer.output_shape(inputs[0])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let shape = self
            .layer
            .output_shape(inputs[0].shape())
            .expect("checked at build time");
        conv_forward_unchecked(inputs[0], &self.layer, &shape)
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        vec![conv2d_backward_input(inputs[0].shape(), &self.layer, upstream)]
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        self.forward(tangents)
    }
}

/// `max(0, x)`; the subgradient at exactly 0 is 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReluOp;

impl Op for ReluOp {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, 1)?;
        Ok(inputs[0].to_vec())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        relu(inputs[0])
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        vec![gate(inputs[0], upstream)]
    }

    fn jvp(&self, inputs: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        gate(inputs[0], tangents[0])
    }

    fn smooth_between(&self, a: &[&Tensor], b: &[&Tensor]) -> bool {
        a[0].data()
            .iter()
            .zip(b[0].data())
            .all(|(x, y)| (*x > 0.0) == (*y > 0.0))
    }
}

fn gate(x: &Tensor, v: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(v.data())
        .map(|(x, v)| if *x > 0.0 { *v } else { 0.0 })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

impl Network {
    /// Appends the network after a features node (`[frames, height, 1]`)
    /// and returns the node of every declared tap, in declaration order.
    pub fn attach(&self, b: &mut GraphBuilder, features: NodeId, layout: &FeatureLayout) -> Result<Vec<(Tap, NodeId)>> {
        let [frames, height, 1] = *b.shape(features) else {
            return Err(Error::Shape(format!(
                "features must be [frames, height, 1], got {:?}",
                b.shape(features)
            )));
        };
        let base = if self.config.bins_as_channels {
            b.push(Reshape::new(vec![frames, 1, height]), &[features])?
        } else {
            features
        };
        let mut layer_out = Vec::with_capacity(self.layers.len());
        let mut x = base;
        for layer in &self.layers {
            x = b.push(Conv2dOp::new(layer.clone()), &[x])?;
            if layer.relu {
                x = b.push(ReluOp, &[x])?;
            }
            layer_out.push(x);
        }
        let mut magnitude = None;
        let mut taps = Vec::with_capacity(self.config.taps.len());
        for tap in &self.config.taps {
            let node = match tap.point {
                TapPoint::Features => base,
                TapPoint::MagnitudeBlock => match magnitude {
                    Some(n) => n,
                    None => {
                        let block = layout
                            .components
                            .iter()
                            .position(|c| matches!(c, Component::Magnitude | Component::LogMagnitude))
                            .ok_or_else(|| Error::Parameter("features have no magnitude block".into()))?;
                        let n = b.push(SelectBlockOp::new(layout.clone(), block)?, &[features])?;
                        magnitude = Some(n);
                        n
                    }
                },
                TapPoint::Layer(i) => *layer_out
                    .get(i)
                    .ok_or_else(|| Error::Parameter(format!("tap {tap} refers to a missing layer")))?,
            };
            taps.push((*tap, node));
        }
        Ok(taps)
    }
}

/// Tensors read at each declared tap.
#[derive(Debug, Clone)]
pub struct ActivationSet {
    pub entries: Vec<(Tap, Tensor)>,
}

impl ActivationSet {
    pub fn content(&self) -> impl Iterator<Item = &Tensor> {
        self.by_role(Role::Content)
    }

    pub fn style(&self) -> impl Iterator<Item = &Tensor> {
        self.by_role(Role::Style)
    }

    fn by_role(&self, role: Role) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().filter(move |(t, _)| t.role == role).map(|(_, v)| v)
    }
}

/// Runs the network on ready-made features and returns every tap.
pub fn forward_collect(input: &FeatureTensor, net: &Network) -> Result<ActivationSet> {
    let mut b = GraphBuilder::new(input.values.shape());
    let features = b.input();
    let taps = net.attach(&mut b, features, &input.layout)?;
    let last = taps
        .iter()
        .map(|(_, n)| *n)
        .max_by_key(|n| n.index())
        .unwrap_or(features);
    let out = if last == features {
        b.push(crate::diff_graph::Identity, &[features])?
    } else {
        last
    };
    let mut graph = b.build(out)?;
    graph.forward(&input.values)?;
    let entries = taps
        .into_iter()
        .map(|(tap, node)| (tap, graph.value(node).expect("forward ran").clone()))
        .collect();
    Ok(ActivationSet { entries })
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "content" => Ok(Role::Content),
            "style" => Ok(Role::Style),
            _ => Err(Error::Parameter(format!("unknown tap role '{s}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff_graph::dot_product_test;
    use crate::spectral::{assemble_features, stft, Arrangement};

    fn small_rim(filters: usize) -> NetworkConfig {
        let mut cfg = load_preset("rim-k3").unwrap().with_filters(filters);
        cfg.front_end.n_fft = 16;
        cfg.front_end.hop = 4;
        cfg
    }

    #[test]
    fn presets() {
        assert_eq!(load_preset("rim-k3").unwrap().layers[0].height_span, 3);
        assert_eq!(load_preset("mag-updiff-k2").unwrap().layers[0].height_span, 2);
        let base = load_preset("baseline-ulyanov").unwrap();
        assert!(base.bins_as_channels);
        assert_eq!(base.layers[0].time_width, 11);
        assert_eq!(base.layers[0].filters, 2048);
        assert!(matches!(load_preset("nope"), Err(Error::Parameter(_))));
        for name in PRESET_NAMES {
            load_preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn tap_validation() {
        let mut cfg = small_rim(4);
        cfg.taps.retain(|t| t.role == Role::Content);
        assert!(cfg.validate().is_err());
        let mut cfg = small_rim(4);
        cfg.taps.push(Tap::style(TapPoint::Layer(3)));
        assert!(cfg.validate().is_err());
        let mut cfg = small_rim(4);
        cfg.front_end.variant = FeatureVariant::RealImag;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = small_rim(8);
        let a = init_filters(&cfg).unwrap();
        let b = init_filters(&cfg).unwrap();
        assert_eq!(a.layers[0].kernel, b.layers[0].kernel);
        let c = init_filters(&NetworkConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.layers[0].kernel, c.layers[0].kernel);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let layer = ConvLayer::new(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap(), (1, 1), false).unwrap();
        let x = Tensor::new(vec![3, 4, 1], (0..12).map(f64::from).collect()).unwrap();
        let y = conv2d_forward(&x, &layer).unwrap();
        assert_eq!(y.data(), x.data());
        assert_eq!(y.shape(), &[3, 4, 1]);
    }

    #[test]
    fn conv_shapes() {
        let layer = ConvLayer::new(Tensor::zeros(&[3, 3, 1, 5]), (1, 1), true).unwrap();
        assert_eq!(layer.output_shape(&[4, 9, 1]).unwrap(), vec![2, 7, 5]);
        let strided = ConvLayer::new(Tensor::zeros(&[3, 2, 1, 5]), (2, 3), true).unwrap();
        assert_eq!(strided.output_shape(&[8, 9, 1]).unwrap(), vec![3, 3, 5]);
        assert!(matches!(layer.output_shape(&[2, 9, 1]), Err(Error::Shape(_))));
        assert!(matches!(layer.output_shape(&[4, 9, 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::vector(vec![-1.0, 2.0, 0.0]);
        assert_eq!(relu(&x).data(), &[0.0, 2.0, 0.0]);
        let neg = Tensor::vector(vec![-3.0, -0.5]);
        assert_eq!(relu(&neg).data(), &[0.0, 0.0]);
        assert_eq!(relu(&relu(&x)), relu(&x));
        // subgradient at 0 is 0
        let g = ReluOp.backward(&[&x], &relu(&x), &Tensor::vector(vec![1.0, 1.0, 1.0]));
        assert_eq!(g[0].data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn conv_and_relu_pass_the_adjoint_test() {
        let net = init_filters(&small_rim(6)).unwrap();
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(4);
        let x = crate::diff_graph::check::random_like(&[12, 27, 1], &mut rng);
        let err = dot_product_test(&Conv2dOp::new(net.layers[0].clone()), &[&x], 1);
        assert!(err < 1e-8, "{err}");
        let strided = ConvLayer::new(
            crate::diff_graph::check::random_like(&[2, 3, 2, 4], &mut rng),
            (2, 3),
            false,
        )
        .unwrap();
        let x = crate::diff_graph::check::random_like(&[7, 11, 2], &mut rng);
        let err = dot_product_test(&Conv2dOp::new(Arc::new(strided)), &[&x], 2);
        assert!(err < 1e-8, "{err}");
        let err = dot_product_test(&ReluOp, &[&x], 3);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn rim_taps_on_zero_input() {
        let cfg = small_rim(4);
        let net = init_filters(&cfg).unwrap();
        let fe = &cfg.front_end;
        let spectra = stft(&vec![0.0; 64], fe).unwrap();
        let features = assemble_features(&spectra, fe).unwrap();
        let acts = forward_collect(&features, &net).unwrap();
        assert_eq!(acts.content().count(), 2);
        assert_eq!(acts.style().count(), 2);
        for (tap, v) in &acts.entries {
            match tap.point {
                TapPoint::Layer(_) => assert!(v.data().iter().all(|x| x.is_finite() && *x >= 0.0)),
                // real and imaginary blocks are zero, the magnitude block is sqrt(ε)
                TapPoint::Features => assert!(v.data().iter().all(|x| *x == 0.0 || (*x - 1e-5).abs() < 1e-12)),
                // sqrt(ε) everywhere
                TapPoint::MagnitudeBlock => assert!(v.data().iter().all(|x| (*x - 1e-5).abs() < 1e-12)),
            }
        }
    }

    #[test]
    fn magnitude_tap_reads_the_right_rows() {
        for arrangement in [Arrangement::Block, Arrangement::Interleaved] {
            let mut cfg = small_rim(3);
            cfg.front_end.arrangement = arrangement;
            let net = init_filters(&cfg).unwrap();
            let x: Vec<f64> = (0..64).map(|i| ((i * 7 % 13) as f64 - 6.0) / 6.0).collect();
            let spectra = stft(&x, &cfg.front_end).unwrap();
            let features = assemble_features(&spectra, &cfg.front_end).unwrap();
            let acts = forward_collect(&features, &net).unwrap();
            let (_, mag) = acts
                .entries
                .iter()
                .find(|(t, _)| t.point == TapPoint::MagnitudeBlock)
                .unwrap();
            let direct = crate::spectral::magnitude(&spectra, cfg.front_end.epsilon).unwrap();
            assert_eq!(mag.data(), direct.data());
            assert_eq!(mag.shape(), &[spectra.frames(), 1, spectra.bins()]);
        }
    }

    #[test]
    fn depth_adds_taps_after_each_layer() {
        let cfg = small_rim(4).with_depth(2).unwrap();
        assert_eq!(cfg.layers.len(), 2);
        assert_eq!(cfg.taps.len(), 6);
        assert_eq!(cfg.min_frames(), 17);
        let net = init_filters(&cfg).unwrap();
        assert_eq!(net.layers[1].kernel.shape(), &[9, 3, 4, 4]);
    }
}
