use super::loss::{gram, ContentLossOp, GramMatrix, StyleLossOp};
use crate::diff_graph::{Graph, GraphBuilder, NodeId, Reshape, Tensor, WeightedSum};
use crate::error::{Error, Result};
use crate::network::{forward_collect, Network, Role};
use crate::spectral::ops::push_front_end;
use crate::spectral::{assemble_features, stft, FeatureLayout, FeatureTensor};

/// Precomputed content activations and style Gram matrices, in tap order.
#[derive(Debug, Clone)]
pub struct Targets {
    pub content: Vec<Tensor>,
    pub style: Vec<GramMatrix>,
}

impl Targets {
    pub fn from_features(content: &FeatureTensor, style: &FeatureTensor, net: &Network) -> Result<Self> {
        let content_acts = forward_collect(content, net)?;
        let style_acts = forward_collect(style, net)?;
        Ok(Targets {
            content: content_acts.content().cloned().collect(),
            style: style_acts.style().map(gram).collect::<Result<_>>()?,
        })
    }

    /// Targets for waveform inputs, computed through the direct (non-graph) front-end.
    pub fn from_waveforms(content: &[f64], style: &[f64], net: &Network) -> Result<Self> {
        let fe = &net.config.front_end;
        let c = assemble_features(&stft(content, fe)?, fe)?;
        let s = assemble_features(&stft(style, fe)?, fe)?;
        Targets::from_features(&c, &s, net)
    }
}

/// Loss values at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub total: f64,
    pub content: f64,
    pub style: f64,
}

/// `α·mean(content losses) + β·mean(style losses)` as a differentiable graph
/// over either a waveform or a log-magnitude matrix.
#[derive(Debug)]
pub struct Objective {
    graph: Graph,
    content: NodeId,
    style: NodeId,
}

impl Objective {
    /// Objective over a waveform of `len` samples.
    pub fn for_waveform(net: &Network, targets: &Targets, weights: (f64, f64), len: usize) -> Result<Self> {
        let mut b = GraphBuilder::new(&[len]);
        let input = b.input();
        let (features, layout) = push_front_end(&mut b, input, &net.config.front_end)?;
        Self::finish(b, features, &layout, net, targets, weights)
    }

    /// Objective over a `frames × bins` log-magnitude matrix, for networks
    /// whose front-end variant is `MagOnly`.
    pub fn for_log_magnitudes(net: &Network, targets: &Targets, weights: (f64, f64), frames: usize) -> Result<Self> {
        let fe = &net.config.front_end;
        let layout = FeatureLayout {
            components: fe.variant.components().to_vec(),
            bins: fe.bins(),
            arrangement: fe.arrangement,
        };
        if layout.components.len() != 1 {
            return Err(Error::Parameter(format!(
                "log-magnitude optimization needs a single-block variant, got {}",
                fe.variant
            )));
        }
        let mut b = GraphBuilder::new(&[frames, fe.bins()]);
        let input = b.input();
        let features = b.push(Reshape::new(vec![frames, fe.bins(), 1]), &[input])?;
        Self::finish(b, features, &layout, net, targets, weights)
    }

    fn finish(
        mut b: GraphBuilder,
        features: NodeId,
        layout: &FeatureLayout,
        net: &Network,
        targets: &Targets,
        (alpha, beta): (f64, f64),
    ) -> Result<Self> {
        let taps = net.attach(&mut b, features, layout)?;
        let content_taps: Vec<NodeId> = taps
            .iter()
            .filter(|(t, _)| t.role == Role::Content)
            .map(|(_, n)| *n)
            .collect();
        let style_taps: Vec<NodeId> = taps
            .iter()
            .filter(|(t, _)| t.role == Role::Style)
            .map(|(_, n)| *n)
            .collect();
        if content_taps.len() != targets.content.len() || style_taps.len() != targets.style.len() {
            return Err(Error::Parameter(format!(
                "network has {}/{} content/style taps, targets have {}/{}",
                content_taps.len(),
                style_taps.len(),
                targets.content.len(),
                targets.style.len()
            )));
        }
        let mut content_losses = Vec::new();
        for (node, target) in content_taps.iter().zip(&targets.content) {
            content_losses.push(b.push(ContentLossOp::new(target.clone()), &[*node])?);
        }
        let mut style_losses = Vec::new();
        for (node, target) in style_taps.iter().zip(&targets.style) {
            style_losses.push(b.push(StyleLossOp::new(target.clone()), &[*node])?);
        }
        let mean = |n: usize| vec![1.0 / n as f64; n];
        let content = b.push(WeightedSum::new(mean(content_losses.len())), &content_losses)?;
        let style = b.push(WeightedSum::new(mean(style_losses.len())), &style_losses)?;
        let total = b.push(WeightedSum::new(vec![alpha, beta]), &[content, style])?;
        Ok(Objective {
            graph: b.build(total)?,
            content,
            style,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        self.graph.input_shape()
    }

    /// The underlying graph, e.g. for gradient checking.
    pub fn graph_mut(&mut self) -> &mut Graph {
        &mut self.graph
    }

    /// Loss components at `x` and the gradient of the total with respect to `x`.
    pub fn evaluate(&mut self, x: &[f64]) -> Result<(LossComponents, Vec<f64>)> {
        let input = Tensor::new(self.graph.input_shape().to_vec(), x.to_vec())?;
        let total = self.graph.forward(&input)?.data()[0];
        let read = |n: NodeId| self.graph.value(n).expect("forward ran").data()[0];
        let losses = LossComponents {
            total,
            content: read(self.content),
            style: read(self.style),
        };
        let grad = self.graph.backward(&Tensor::scalar(1.0))?;
        Ok((losses, grad.into_data()))
    }
}
