//! Short-time spectral front-ends.
//!
//! A waveform is cut into Hann-windowed frames, each frame goes through a
//! real-input DFT, and the resulting real/imaginary planes are turned into
//! the feature blocks a [`FeatureVariant`] asks for. The same pieces exist as
//! differentiable graph ops in [`ops`]; the plain functions here are the
//! direct reference route.
//!
//! Hann windowing with a hop of `n_fft/2` or `n_fft/4` satisfies the
//! constant-overlap-add condition, so [`inverse_dft_overlap_add`] recovers
//! the signal exactly away from the edges.

pub mod ops;

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio_io::{write_atomic, AudioClip};
use crate::diff_graph::Tensor;
use crate::error::{Error, Result};

/// Floor applied to the squared-window envelope before dividing by it.
pub const ENVELOPE_FLOOR: f64 = 1e-8;

/// Which spectral components are stacked into the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureVariant {
    RealImag,
    MagPhase,
    MagPhaseDiff,
    MagUnwrappedPhaseDiff,
    RealImagMag,
    /// Log magnitude only; the magnitude-domain baseline.
    MagOnly,
}

impl FeatureVariant {
    pub const ALL: [FeatureVariant; 6] = [
        FeatureVariant::RealImag,
        FeatureVariant::MagPhase,
        FeatureVariant::MagPhaseDiff,
        FeatureVariant::MagUnwrappedPhaseDiff,
        FeatureVariant::RealImagMag,
        FeatureVariant::MagOnly,
    ];

    /// Blocks in stacking order: real, imaginary, magnitude, then phase-derived.
    pub fn components(self) -> &'static [Component] {
        use Component::*;
        match self {
            FeatureVariant::RealImag => &[Real, Imag],
            FeatureVariant::MagPhase => &[Magnitude, Phase],
            FeatureVariant::MagPhaseDiff => &[Magnitude, PhaseDiff],
            FeatureVariant::MagUnwrappedPhaseDiff => &[Magnitude, UnwrappedPhaseDiff],
            FeatureVariant::RealImagMag => &[Real, Imag, Magnitude],
            FeatureVariant::MagOnly => &[LogMagnitude],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureVariant::RealImag => "real-imag",
            FeatureVariant::MagPhase => "mag-phase",
            FeatureVariant::MagPhaseDiff => "mag-phase-diff",
            FeatureVariant::MagUnwrappedPhaseDiff => "mag-unwrapped-phase-diff",
            FeatureVariant::RealImagMag => "real-imag-mag",
            FeatureVariant::MagOnly => "mag-only",
        }
    }
}

impl fmt::Display for FeatureVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown feature variant '{s}'")))
    }
}

/// One feature block, `frames × bins`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Real,
    Imag,
    Magnitude,
    /// `ln(magnitude + ε)`
    LogMagnitude,
    Phase,
    PhaseDiff,
    UnwrappedPhaseDiff,
}

impl Component {
    /// Linear or log magnitude.
    pub fn is_magnitude(self) -> bool {
        matches!(self, Component::Magnitude | Component::LogMagnitude)
    }
}

/// How blocks share the height axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Arrangement {
    /// Whole blocks one after another: rows `[block·bins, (block+1)·bins)`.
    #[default]
    Block,
    /// Per-bin groups: row `bin·blocks + block`.
    Interleaved,
}

impl FromStr for Arrangement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(Arrangement::Block),
            "interleaved" => Ok(Arrangement::Interleaved),
            _ => Err(Error::Parameter(format!("unknown feature arrangement '{s}'"))),
        }
    }
}

/// Framing, transform and feature settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub variant: FeatureVariant,
    /// Added under the magnitude square root (and inside the log for `MagOnly`).
    pub epsilon: f64,
    pub arrangement: Arrangement,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        FrontEndConfig {
            n_fft: 2048,
            hop: 512,
            variant: FeatureVariant::RealImagMag,
            epsilon: 1e-10,
            arrangement: Arrangement::Block,
        }
    }
}

impl FrontEndConfig {
    pub fn new(n_fft: usize, hop: usize, variant: FeatureVariant) -> Result<Self> {
        let cfg = FrontEndConfig {
            n_fft,
            hop,
            variant,
            ..FrontEndConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || !self.n_fft.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "n_fft must be even and at least 2, got {}",
                self.n_fft
            )));
        }
        let half = self.n_fft / 2;
        let quarter_ok = self.n_fft.is_multiple_of(4) && self.hop == self.n_fft / 4;
        if self.hop != half && !quarter_ok {
            return Err(Error::Parameter(format!(
                "hop must be n_fft/2 or n_fft/4 for Hann overlap-add, got {} with n_fft {}",
                self.hop, self.n_fft
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Parameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced from `len` samples; zero when `len < n_fft`.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.n_fft {
            0
        } else {
            (len - self.n_fft) / self.hop + 1
        }
    }

    /// Number of samples spanned by `frames` frames.
    pub fn span(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.n_fft
        }
    }
}

/// Windowed frames, `frames × n_fft`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub values: Tensor,
}

impl FrameMatrix {
    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_fft(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn row(&self, f: usize) -> &[f64] {
        let n = self.n_fft();
        &self.values.data()[f * n..(f + 1) * n]
    }
}

/// Real and imaginary DFT planes, each `frames × (n_fft/2 + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectra {
    pub real: Tensor,
    pub imag: Tensor,
}

impl ComplexSpectra {
    pub fn frames(&self) -> usize {
        self.real.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.real.shape()[1]
    }

    /// Stacked `[2, frames, bins]` tensor, the layout used inside graphs.
    pub fn to_tensor(&self) -> Tensor {
        let mut data = self.real.data().to_vec();
        data.extend_from_slice(self.imag.data());
        Tensor::from_parts(vec![2, self.frames(), self.bins()], data)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [2, frames, bins] = *t.shape() else {
            return Err(Error::Shape(format!("expected [2, frames, bins], got {:?}", t.shape())));
        };
        let half = frames * bins;
        Ok(ComplexSpectra {
            real: Tensor::from_parts(vec![frames, bins], t.data()[..half].to_vec()),
            imag: Tensor::from_parts(vec![frames, bins], t.data()[half..].to_vec()),
        })
    }
}

/// Which block occupies which rows of a [`FeatureTensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    pub components: Vec<Component>,
    pub bins: usize,
    pub arrangement: Arrangement,
}

impl FeatureLayout {
    pub fn height(&self) -> usize {
        self.components.len() * self.bins
    }

    pub fn row(&self, block: usize, bin: usize) -> usize {
        match self.arrangement {
            Arrangement::Block => block * self.bins + bin,
            Arrangement::Interleaved => bin * self.components.len() + block,
        }
    }

    pub fn block_of(&self, component: Component) -> Option<usize> {
        self.components.iter().position(|c| *c == component)
    }
}

/// Network input, `frames × height × 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub values: Tensor,
    pub layout: FeatureLayout,
}

impl FeatureTensor {
    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Periodic Hann window, `w[k] = 0.5·(1 − cos(2πk/n))`.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "window length must be even and at least 2, got {n}"
        )));
    }
    Ok((0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / n as f64).cos()))
        .collect())
}

pub(crate) fn frame_into(samples: &[f64], window: &[f64], hop: usize, frames: usize) -> Vec<f64> {
    let n = window.len();
    let mut out = Vec::with_capacity(frames * n);
    for f in 0..frames {
        let seg = &samples[f * hop..f * hop + n];
        out.extend(seg.iter().zip(window).map(|(x, w)| x * w));
    }
    out
}

/// Cuts `samples` into windowed frames; trailing samples that do not fill a frame are dropped.
pub fn frame_samples(samples: &[f64], cfg: &FrontEndConfig) -> Result<FrameMatrix> {
    cfg.validate()?;
    if samples.len() < cfg.n_fft {
        return Err(Error::InputTooShort {
            len: samples.len(),
            needed: cfg.n_fft,
        });
    }
    let window = hann_window(cfg.n_fft)?;
    let frames = cfg.frame_count(samples.len());
    let data = frame_into(samples, &window, cfg.hop, frames);
    Ok(FrameMatrix {
        values: Tensor::from_parts(vec![frames, cfg.n_fft], data),
    })
}

pub fn frame_signal(clip: &AudioClip, cfg: &FrontEndConfig) -> Result<FrameMatrix> {
    frame_samples(clip.samples(), cfg)
}

/// Forward and inverse complex FFT plans of one size.
#[derive(Clone)]
pub(crate) struct DftPlan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for DftPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DftPlan({})", self.n)
    }
}

impl DftPlan {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        DftPlan {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Real-input DFT of each row of `frames` (`rows × n`), returning
    /// real and imaginary planes of `rows × (n/2+1)`.
    pub(crate) fn forward_rows(&self, frames: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let bins = n / 2 + 1;
        let rows = frames.len() / n;
        let mut re = Vec::with_capacity(rows * bins);
        let mut im = Vec::with_capacity(rows * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for row in frames.chunks_exact(n) {
            for (b, &x) in buf.iter_mut().zip(row) {
                *b = Complex::new(x, 0.0);
            }
            self.forward.process(&mut buf);
            re.extend(buf[..bins].iter().map(|c| c.re));
            // exact zeros: the DC and Nyquist bins of a real frame carry no imaginary part
            im.extend(
                buf[..bins]
                    .iter()
                    .enumerate()
                    .map(|(b, c)| if b == 0 || b == n / 2 { 0.0 } else { c.im }),
            );
        }
        (re, im)
    }

    /// Adjoint of [`forward_rows`](Self::forward_rows):
    /// `x[k] = Σ_b gr[b]·cos(2πbk/n) − gi[b]·sin(2πbk/n)`.
    pub(crate) fn adjoint_rows(&self, gr: &[f64], gi: &[f64]) -> Vec<f64> {
        let n = self.n;
        let bins = n / 2 + 1;
        let rows = gr.len() / bins;
        let mut out = Vec::with_capacity(rows * n);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for r in 0..rows {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for b in 0..bins {
                let gi_b = if b == 0 || b == n / 2 { 0.0 } else { gi[r * bins + b] };
                buf[b] = Complex::new(gr[r * bins + b], gi_b);
            }
            self.inverse.process(&mut buf);
            out.extend(buf.iter().map(|c| c.re));
        }
        out
    }

    /// Inverse of a real signal's half spectrum (Hermitian symmetry implied), per row.
    pub(crate) fn inverse_rows(&self, re: &[f64], im: &[f64]) -> Vec<f64> {
        let n = self.n;
        let bins = n / 2 + 1;
        let rows = re.len() / bins;
        let mut out = Vec::with_capacity(rows * n);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let scale = 1.0 / n as f64;
        for r in 0..rows {
            for b in 0..bins {
                let mut c = Complex::new(re[r * bins + b], im[r * bins + b]);
                if b == 0 || b == n / 2 {
                    c.im = 0.0;
                }
                buf[b] = c;
                if b != 0 && b != n / 2 {
                    buf[n - b] = c.conj();
                }
            }
            self.inverse.process(&mut buf);
            out.extend(buf.iter().map(|c| c.re * scale));
        }
        out
    }
}

/// Per-frame real DFT: `real[b] = Σ x[k]·cos(2πbk/n)`, `imag[b] = −Σ x[k]·sin(2πbk/n)`,
/// for bins `0..=n/2`.
pub fn dft_forward(frames: &FrameMatrix) -> ComplexSpectra {
    let n = frames.n_fft();
    let (re, im) = DftPlan::new(n).forward_rows(frames.values.data());
    let shape = vec![frames.frames(), n / 2 + 1];
    ComplexSpectra {
        real: Tensor::from_parts(shape.clone(), re),
        imag: Tensor::from_parts(shape, im),
    }
}

/// Short-time transform of a whole signal.
pub fn stft(samples: &[f64], cfg: &FrontEndConfig) -> Result<ComplexSpectra> {
    Ok(dft_forward(&frame_samples(samples, cfg)?))
}

/// Inverse DFT of each frame, Hann synthesis window, overlap-add, then division
/// by the summed squared window (floored at [`ENVELOPE_FLOOR`]).
///
/// This is the least-squares signal for the given (possibly inconsistent) spectra.
pub fn overlap_add_inverse(spectra: &ComplexSpectra, cfg: &FrontEndConfig, out_len: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    if spectra.bins() != cfg.bins() || spectra.imag.shape() != spectra.real.shape() {
        return Err(Error::Parameter(format!(
            "spectra of {} bins do not match n_fft {}",
            spectra.bins(),
            cfg.n_fft
        )));
    }
    let frames = spectra.frames();
    let needed = cfg.span(frames);
    if out_len < needed || cfg.frame_count(out_len) != frames {
        return Err(Error::Parameter(format!(
            "{frames} frames do not fit an output of {out_len} samples"
        )));
    }
    let window = hann_window(cfg.n_fft)?;
    let time = DftPlan::new(cfg.n_fft).inverse_rows(spectra.real.data(), spectra.imag.data());
    let mut out = vec![0.0; out_len];
    let mut envelope = vec![0.0; out_len];
    for f in 0..frames {
        let start = f * cfg.hop;
        let seg = &time[f * cfg.n_fft..(f + 1) * cfg.n_fft];
        for k in 0..cfg.n_fft {
            out[start + k] += seg[k] * window[k];
            envelope[start + k] += window[k] * window[k];
        }
    }
    for (o, e) in out.iter_mut().zip(&envelope) {
        *o /= e.max(ENVELOPE_FLOOR);
    }
    Ok(out)
}

pub fn inverse_dft_overlap_add(
    spectra: &ComplexSpectra,
    cfg: &FrontEndConfig,
    out_len: usize,
    sample_rate: u32,
) -> Result<AudioClip> {
    AudioClip::new(overlap_add_inverse(spectra, cfg, out_len)?, sample_rate)
}

/// `sqrt(real² + imag² + ε)`, smooth at zero.
pub fn magnitude(spectra: &ComplexSpectra, epsilon: f64) -> Result<Tensor> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Parameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(zip_planes(spectra, |r, i| (r * r + i * i + epsilon).sqrt()))
}

/// `atan2(imag, real)` in `(−π, π]`, with the origin mapped to 0.
pub fn phase(spectra: &ComplexSpectra) -> Tensor {
    zip_planes(spectra, phase_of)
}

pub(crate) fn phase_of(r: f64, i: f64) -> f64 {
    if r == 0.0 && i == 0.0 {
        return 0.0;
    }
    let p = i.atan2(r);
    if p <= -PI {
        PI
    } else {
        p
    }
}

fn zip_planes(spectra: &ComplexSpectra, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = spectra
        .real
        .data()
        .iter()
        .zip(spectra.imag.data())
        .map(|(&r, &i)| f(r, i))
        .collect();
    Tensor::from_parts(spectra.real.shape().to_vec(), data)
}

/// Row 0 unchanged, row `f > 0` replaced by `phases[f] − phases[f−1]`.
pub fn phase_differential(phases: &Tensor) -> Tensor {
    let bins = phases.shape()[1];
    let src = phases.data();
    let mut out = src.to_vec();
    for idx in bins..src.len() {
        out[idx] = src[idx] - src[idx - bins];
    }
    Tensor::from_parts(phases.shape().to_vec(), out)
}

/// Maps an angle into `(−π, π]` by adding a multiple of 2π. Values already
/// in range are returned untouched, so the map is idempotent.
pub fn wrap_to_pi(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let r = x.rem_euclid(2.0 * PI);
    let r = if r > PI { r - 2.0 * PI } else { r };
    if r <= -PI {
        PI
    } else {
        r
    }
}

pub fn unwrap(diffs: &Tensor) -> Tensor {
    diffs.map(wrap_to_pi)
}

fn component_plane(spectra: &ComplexSpectra, component: Component, epsilon: f64) -> Result<Tensor> {
    Ok(match component {
        Component::Real => spectra.real.clone(),
        Component::Imag => spectra.imag.clone(),
        Component::Magnitude => magnitude(spectra, epsilon)?,
        Component::LogMagnitude => magnitude(spectra, epsilon)?.map(|m| (m + epsilon).ln()),
        Component::Phase => phase(spectra),
        Component::PhaseDiff => phase_differential(&phase(spectra)),
        Component::UnwrappedPhaseDiff => unwrap(&phase_differential(&phase(spectra))),
    })
}

/// Stacks the variant's blocks along the height axis.
pub fn assemble_features(spectra: &ComplexSpectra, cfg: &FrontEndConfig) -> Result<FeatureTensor> {
    let layout = FeatureLayout {
        components: cfg.variant.components().to_vec(),
        bins: spectra.bins(),
        arrangement: cfg.arrangement,
    };
    let planes = layout
        .components
        .iter()
        .map(|c| component_plane(spectra, *c, cfg.epsilon))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor> = planes.iter().collect();
    let values = stack_blocks(&refs, &layout);
    Ok(FeatureTensor { values, layout })
}

pub(crate) fn stack_blocks(planes: &[&Tensor], layout: &FeatureLayout) -> Tensor {
    let frames = planes[0].shape()[0];
    let bins = layout.bins;
    let height = layout.height();
    let mut out = vec![0.0; frames * height];
    for (block, plane) in planes.iter().enumerate() {
        let src = plane.data();
        for f in 0..frames {
            for b in 0..bins {
                out[f * height + layout.row(block, b)] = src[f * bins + b];
            }
        }
    }
    Tensor::from_parts(vec![frames, height, 1], out)
}

/// Log-magnitude image of `spectra`: `ln(|X| + 1e-6)`, frames × bins.
pub fn log_spectrogram(spectra: &ComplexSpectra) -> Tensor {
    zip_planes(spectra, |r, i| ((r * r + i * i).sqrt() + 1e-6).ln())
}

/// CSV text with a `bin_0,…` header and one CRLF-terminated row per frame.
pub fn spectrogram_csv(spectra: &ComplexSpectra) -> String {
    use std::fmt::Write as _;
    let img = log_spectrogram(spectra);
    let bins = spectra.bins();
    let mut s = String::new();
    let header: Vec<String> = (0..bins).map(|b| format!("bin_{b}")).collect();
    s.push_str(&header.join(","));
    s.push_str("\r\n");
    for row in img.data().chunks_exact(bins.max(1)) {
        for (b, v) in row.iter().enumerate() {
            if b > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push_str("\r\n");
    }
    s
}

/// Binary (P5) PGM: time runs left to right, frequency bottom to top,
/// values min–max scaled to 0..=255. A constant image is all zeros.
pub fn spectrogram_pgm(spectra: &ComplexSpectra) -> Vec<u8> {
    let img = log_spectrogram(spectra);
    let (frames, bins) = (spectra.frames(), spectra.bins());
    let (lo, hi) = img
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let mut out = format!("P5\n{frames} {bins}\n255\n").into_bytes();
    for b in (0..bins).rev() {
        for f in 0..frames {
            let v = img.data()[f * bins + b];
            let level = if range > 0.0 {
                ((v - lo) / range * 255.0).round() as u8
            } else {
                0
            };
            out.push(level);
        }
    }
    out
}

/// Writes `path` as CSV and a PGM image next to it (same stem, `.pgm`).
pub fn export_spectrogram(spectra: &ComplexSpectra, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_path = if path.extension().is_some_and(|e| e == "pgm") {
        path.with_extension("csv")
    } else {
        path.to_path_buf()
    };
    write_atomic(&csv_path, spectrogram_csv(spectra).as_bytes())?;
    write_atomic(&csv_path.with_extension("pgm"), &spectrogram_pgm(spectra))
}
