//! Graph ops for the spectral front-end.
//!
//! Complex spectra travel through graphs as `[2, frames, bins]` tensors
//! (real plane first). Component planes are `[frames, bins]`; assembled
//! features are `[frames, height, 1]`.

use std::f64::consts::PI;

use super::{hann_window, phase_of, stack_blocks, wrap_to_pi, Component, DftPlan, FeatureLayout, FrontEndConfig};
use crate::diff_graph::{expect_arity, GraphBuilder, NodeId, Op, Tensor};
use crate::error::{Error, Result};

/// `[len] → [frames, n_fft]`, Hann-windowed, trailing remainder dropped.
#[derive(Debug, Clone)]
pub struct FrameOp {
    hop: usize,
    window: Vec<f64>,
}

impl FrameOp {
    pub fn new(cfg: &FrontEndConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(FrameOp {
            hop: cfg.hop,
            window: hann_window(cfg.n_fft)?,
        })
    }

    fn frames(&self, len: usize) -> usize {
        (len - self.window.len()) / self.hop + 1
    }
}

impl Op for FrameOp {
    fn name(&self) -> &'static str {
        "frame"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, 1)?;
        let &[len] = inputs[0] else {
            return Err(Error::Shape(format!("frame expects a 1-D signal, got {:?}", inputs[0])));
        };
        if len < self.window.len() {
            return Err(Error::InputTooShort {
                len,
                needed: self.window.len(),
            });
        }
        Ok(vec![self.frames(len), self.window.len()])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let x = inputs[0].data();
        let frames = self.frames(x.len());
        Tensor::from_parts(
            vec![frames, self.window.len()],
            super::frame_into(x, &self.window, self.hop, frames),
        )
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let n = self.window.len();
        let mut grad = vec![0.0; inputs[0].len()];
        for (f, row) in upstream.data().chunks_exact(n).enumerate() {
            let seg = &mut grad[f * self.hop..f * self.hop + n];
            for ((g, u), w) in seg.iter_mut().zip(row).zip(&self.window) {
                *g += u * w;
            }
        }
        vec![Tensor::from_parts(inputs[0].shape().to_vec(), grad)]
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        self.forward(tangents)
    }
}

/// `[frames, n_fft] → [2, frames, n_fft/2 + 1]`.
#[derive(Debug, Clone)]
pub struct DftOp {
    plan: DftPlan,
}

impl DftOp {
    pub fn new(n_fft: usize) -> Self {
        DftOp {
            plan: DftPlan::new(n_fft),
        }
    }
}

impl Op for DftOp {
    fn name(&self) -> &'static str {
        "dft"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, 1)?;
        match *inputs[0] {
            [frames, n] if n == self.plan.n => Ok(vec![2, frames, n / 2 + 1]),
            _ => Err(Error::Shape(format!(
                "dft of size {} cannot take {:?}",
                self.plan.n, inputs[0]
            ))),
        }
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let frames = inputs[0].shape()[0];
        let (mut re, im) = self.plan.forward_rows(inputs[0].data());
        re.extend_from_slice(&im);
        Tensor::from_parts(vec![2, frames, self.plan.n / 2 + 1], re)
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let half = upstream.len() / 2;
        let (gr, gi) = upstream.data().split_at(half);
        vec![Tensor::from_parts(
            inputs[0].shape().to_vec(),
            self.plan.adjoint_rows(gr, gi),
        )]
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        self.forward(tangents)
    }
}

fn planes_shape(op: &str, inputs: &[&[usize]]) -> Result<Vec<usize>> {
    expect_arity(op, inputs, 1)?;
    match *inputs[0] {
        [2, frames, bins] => Ok(vec![frames, bins]),
        _ => Err(Error::Shape(format!(
            "{op} expects [2, frames, bins], got {:?}",
            inputs[0]
        ))),
    }
}

fn same_shape(op: &str, inputs: &[&[usize]]) -> Result<Vec<usize>> {
    expect_arity(op, inputs, 1)?;
    if inputs[0].len() != 2 {
        return Err(Error::Shape(format!(
            "{op} expects [frames, bins], got {:?}",
            inputs[0]
        )));
    }
    Ok(inputs[0].to_vec())
}

fn split_planes(t: &Tensor) -> (&[f64], &[f64]) {
    t.data().split_at(t.len() / 2)
}

/// Selects the real or the imaginary plane.
#[derive(Debug, Clone, Copy)]
pub struct PlaneOp {
    imag: bool,
}

impl PlaneOp {
    pub fn real() -> Self {
        PlaneOp { imag: false }
    }

    pub fn imag() -> Self {
        PlaneOp { imag: true }
    }

    fn pick<'a>(&self, t: &'a Tensor) -> &'a [f64] {
        let (re, im) = split_planes(t);
        if self.imag {
            im
        } else {
            re
        }
    }
}

impl Op for PlaneOp {
    fn name(&self) -> &'static str {
        if self.imag {
            "imag"
        } else {
            "real"
        }
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        planes_shape(self.name(), inputs)
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let shape = inputs[0].shape()[1..].to_vec();
        Tensor::from_parts(shape, self.pick(inputs[0]).to_vec())
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let mut g = Tensor::zeros(inputs[0].shape());
        let half = upstream.len();
        let offset = if self.imag { half } else { 0 };
        g.data_mut()[offset..offset + half].copy_from_slice(upstream.data());
        vec![g]
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        self.forward(tangents)
    }
}

/// `sqrt(re² + im² + ε)`.
#[derive(Debug, Clone, Copy)]
pub struct MagnitudeOp {
    epsilon: f64,
}

impl MagnitudeOp {
    pub fn new(epsilon: f64) -> Self {
        MagnitudeOp { epsilon }
    }
}

impl Op for MagnitudeOp {
    fn name(&self) -> &'static str {
        "magnitude"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        planes_shape(self.name(), inputs)
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let (re, im) = split_planes(inputs[0]);
        let data = re
            .iter()
            .zip(im)
            .map(|(r, i)| (r * r + i * i + self.epsilon).sqrt())
            .collect();
        Tensor::from_parts(inputs[0].shape()[1..].to_vec(), data)
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let (re, im) = split_planes(inputs[0]);
        let m = output.data();
        let u = upstream.data();
        let mut g = Vec::with_capacity(inputs[0].len());
        g.extend((0..m.len()).map(|k| u[k] * re[k] / m[k]));
        g.extend((0..m.len()).map(|k| u[k] * im[k] / m[k]));
        vec![Tensor::from_parts(inputs[0].shape().to_vec(), g)]
    }

    fn jvp(&self, inputs: &[&Tensor], output: &Tensor, tangents: &[&Tensor]) -> Tensor {
        let (re, im) = split_planes(inputs[0]);
        let (dre, dim) = split_planes(tangents[0]);
        let data = output
            .data()
            .iter()
            .enumerate()
            .map(|(k, m)| (re[k] * dre[k] + im[k] * dim[k]) / m)
            .collect();
        Tensor::from_parts(output.shape().to_vec(), data)
    }
}

/// `atan2(im, re)` with zero value and zero gradient at the origin.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseOp;

/// `(∂φ/∂re, ∂φ/∂im)`
fn phase_partials(r: f64, i: f64) -> (f64, f64) {
    let d = r * r + i * i;
    if d == 0.0 {
        (0.0, 0.0)
    } else {
        (-i / d, r / d)
    }
}

impl Op for PhaseOp {
    fn name(&self) -> &'static str {
        "phase"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        planes_shape(self.name(), inputs)
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let (re, im) = split_planes(inputs[0]);
        let data = re.iter().zip(im).map(|(&r, &i)| phase_of(r, i)).collect();
        Tensor::from_parts(inputs[0].shape()[1..].to_vec(), data)
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let (re, im) = split_planes(inputs[0]);
        let u = upstream.data();
        let n = u.len();
        let mut g = vec![0.0; 2 * n];
        for k in 0..n {
            let (dr, di) = phase_partials(re[k], im[k]);
            g[k] = u[k] * dr;
            g[n + k] = u[k] * di;
        }
        vec![Tensor::from_parts(inputs[0].shape().to_vec(), g)]
    }

    fn jvp(&self, inputs: &[&Tensor], output: &Tensor, tangents: &[&Tensor]) -> Tensor {
        let (re, im) = split_planes(inputs[0]);
        let (dre, dim) = split_planes(tangents[0]);
        let data = (0..output.len())
            .map(|k| {
                let (dr, di) = phase_partials(re[k], im[k]);
                dr * dre[k] + di * dim[k]
            })
            .collect();
        Tensor::from_parts(output.shape().to_vec(), data)
    }

    /// Crossing the negative real axis flips the phase by 2π.
    fn smooth_between(&self, a: &[&Tensor], b: &[&Tensor]) -> bool {
        let (ra, ia) = split_planes(a[0]);
        let (rb, ib) = split_planes(b[0]);
        (0..ra.len()).all(|k| (phase_of(ra[k], ia[k]) - phase_of(rb[k], ib[k])).abs() < PI)
    }
}

/// Frame-to-frame difference along axis 0; row 0 passes through.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseDiffOp;

impl Op for PhaseDiffOp {
    fn name(&self) -> &'static str {
        "phase_diff"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        same_shape(self.name(), inputs)
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        super::phase_differential(inputs[0])
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let bins = inputs[0].shape()[1];
        let u = upstream.data();
        let n = u.len();
        let g = (0..n)
            .map(|k| if k + bins < n { u[k] - u[k + bins] } else { u[k] })
            .collect();
        vec![Tensor::from_parts(inputs[0].shape().to_vec(), g)]
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        super::phase_differential(tangents[0])
    }
}

/// Wraps each value into `(−π, π]`. Piecewise a shift, so the derivative is 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnwrapOp;

impl Op for UnwrapOp {
    fn name(&self) -> &'static str {
        "unwrap"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        same_shape(self.name(), inputs)
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        inputs[0].map(wrap_to_pi)
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        vec![upstream.clone()]
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        tangents[0].clone()
    }

    fn smooth_between(&self, a: &[&Tensor], b: &[&Tensor]) -> bool {
        let offset = |x: f64| x - wrap_to_pi(x);
        a[0].data()
            .iter()
            .zip(b[0].data())
            .all(|(x, y)| offset(*x) == offset(*y))
    }
}

/// `ln(x + ε)`.
#[derive(Debug, Clone, Copy)]
pub struct LogOp {
    epsilon: f64,
}

impl LogOp {
    pub fn new(epsilon: f64) -> Self {
        LogOp { epsilon }
    }
}

impl Op for LogOp {
    fn name(&self) -> &'static str {
        "log"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, 1)?;
        Ok(inputs[0].to_vec())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        inputs[0].map(|x| (x + self.epsilon).ln())
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let g = inputs[0]
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(x, u)| u / (x + self.epsilon))
            .collect();
        vec![Tensor::from_parts(inputs[0].shape().to_vec(), g)]
    }

    fn jvp(&self, inputs: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        let d = inputs[0]
            .data()
            .iter()
            .zip(tangents[0].data())
            .map(|(x, t)| t / (x + self.epsilon))
            .collect();
        Tensor::from_parts(inputs[0].shape().to_vec(), d)
    }
}

/// Stacks `[frames, bins]` blocks into `[frames, height, 1]` per a [`FeatureLayout`].
#[derive(Debug, Clone)]
pub struct ConcatOp {
    layout: FeatureLayout,
}

impl ConcatOp {
    pub fn new(layout: FeatureLayout) -> Self {
        ConcatOp { layout }
    }

    fn gather(&self, stacked: &Tensor, block: usize) -> Tensor {
        let frames = stacked.shape()[0];
        let (bins, height) = (self.layout.bins, self.layout.height());
        let src = stacked.data();
        let mut out = Vec::with_capacity(frames * bins);
        for f in 0..frames {
            out.extend((0..bins).map(|b| src[f * height + self.layout.row(block, b)]));
        }
        Tensor::from_parts(vec![frames, bins], out)
    }
}

impl Op for ConcatOp {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, self.layout.components.len())?;
        let frames = inputs[0].first().copied().unwrap_or(0);
        for s in inputs {
            if *s != [frames, self.layout.bins] {
                return Err(Error::Shape(format!(
                    "concat blocks must be [{frames}, {}], got {s:?}",
                    self.layout.bins
                )));
            }
        }
        Ok(vec![frames, self.layout.height(), 1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        stack_blocks(inputs, &self.layout)
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        (0..self.layout.components.len())
            .map(|b| self.gather(upstream, b))
            .collect()
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        stack_blocks(tangents, &self.layout)
    }
}

/// Pulls one block out of assembled features as `[frames, 1, bins]`
/// (bins become channels).
#[derive(Debug, Clone)]
pub struct SelectBlockOp {
    concat: ConcatOp,
    block: usize,
}

impl SelectBlockOp {
    pub fn new(layout: FeatureLayout, block: usize) -> Result<Self> {
        if block >= layout.components.len() {
            return Err(Error::Parameter(format!(
                "block {block} out of range for {} blocks",
                layout.components.len()
            )));
        }
        Ok(SelectBlockOp {
            concat: ConcatOp::new(layout),
            block,
        })
    }
}

impl Op for SelectBlockOp {
    fn name(&self) -> &'static str {
        "select_block"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, 1)?;
        match *inputs[0] {
            [frames, h, 1] if h == self.concat.layout.height() => Ok(vec![frames, 1, self.concat.layout.bins]),
            _ => Err(Error::Shape(format!(
                "select_block expects [frames, {}, 1], got {:?}",
                self.concat.layout.height(),
                inputs[0]
            ))),
        }
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let frames = inputs[0].shape()[0];
        let g = self.concat.gather(inputs[0], self.block);
        Tensor::from_parts(vec![frames, 1, self.concat.layout.bins], g.into_data())
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let layout = &self.concat.layout;
        let (bins, height) = (layout.bins, layout.height());
        let mut g = Tensor::zeros(inputs[0].shape());
        let frames = inputs[0].shape()[0];
        for f in 0..frames {
            for b in 0..bins {
                g.data_mut()[f * height + layout.row(self.block, b)] = upstream.data()[f * bins + b];
            }
        }
        vec![g]
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        self.forward(tangents)
    }
}

/// Appends the ops computing one component plane from a `[2, frames, bins]` node.
pub fn push_component(b: &mut GraphBuilder, spectra: NodeId, component: Component, epsilon: f64) -> Result<NodeId> {
    Ok(match component {
        Component::Real => b.push(PlaneOp::real(), &[spectra])?,
        Component::Imag => b.push(PlaneOp::imag(), &[spectra])?,
        Component::Magnitude => b.push(MagnitudeOp::new(epsilon), &[spectra])?,
        Component::LogMagnitude => {
            let m = b.push(MagnitudeOp::new(epsilon), &[spectra])?;
            b.push(LogOp::new(epsilon), &[m])?
        }
        Component::Phase => b.push(PhaseOp, &[spectra])?,
        Component::PhaseDiff => {
            let p = b.push(PhaseOp, &[spectra])?;
            b.push(PhaseDiffOp, &[p])?
        }
        Component::UnwrappedPhaseDiff => {
            let p = b.push(PhaseOp, &[spectra])?;
            let d = b.push(PhaseDiffOp, &[p])?;
            b.push(UnwrapOp, &[d])?
        }
    })
}

/// Appends framing, DFT and feature assembly after a 1-D waveform node.
/// Returns the features node (`[frames, height, 1]`) and its layout.
pub fn push_front_end(b: &mut GraphBuilder, waveform: NodeId, cfg: &FrontEndConfig) -> Result<(NodeId, FeatureLayout)> {
    let frames = b.push(FrameOp::new(cfg)?, &[waveform])?;
    let spectra = b.push(DftOp::new(cfg.n_fft), &[frames])?;
    let layout = FeatureLayout {
        components: cfg.variant.components().to_vec(),
        bins: cfg.bins(),
        arrangement: cfg.arrangement,
    };
    let blocks = layout
        .components
        .iter()
        .map(|c| push_component(b, spectra, *c, cfg.epsilon))
        .collect::<Result<Vec<_>>>()?;
    let features = b.push(ConcatOp::new(layout.clone()), &blocks)?;
    Ok((features, layout))
}
