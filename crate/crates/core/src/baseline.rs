//! Magnitude-domain stylization with Griffin-Lim phase recovery.
//!
//! The optimized variable is a log-magnitude matrix rather than a waveform.
//! After optimization it is exponentiated back to magnitudes and a waveform
//! is recovered by alternating projections between consistent spectra and
//! spectra with the target magnitude.

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{check_same_rate, AudioClip};
use crate::diff_graph::Tensor;
use crate::error::{Error, Result};
use crate::network::{init_filters, NetworkConfig};
use crate::spectral::{assemble_features, overlap_add_inverse, stft, ComplexSpectra, FeatureVariant, FrontEndConfig};
use crate::stylizer::{
    descend, noise, usable_frames, Init, LossEntry, LossReport, Objective, StyleTransferConfig, Targets,
};

/// Starting phase for Griffin-Lim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitPhase {
    #[default]
    Zero,
    /// Uniform phases drawn from the given seed.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GriffinLimConfig {
    pub iterations: usize,
    pub init_phase: InitPhase,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        GriffinLimConfig {
            iterations: 100,
            init_phase: InitPhase::Zero,
        }
    }
}

/// Reconstructed samples plus the spectral distance after each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GriffinLimOutput {
    pub samples: Vec<f64>,
    /// `distances[t]` is the distance of the `t`-th iterate; `distances[0]`
    /// belongs to the signal built from the initial phase.
    pub distances: Vec<f64>,
}

/// Distance between `|X|` and `target`, measured over the full two-sided
/// spectrum. Interior bins appear twice there, DC and Nyquist once. This is
/// the norm in which the overlap-add inverse is an orthogonal projection.
pub fn spectral_distance(spectra: &ComplexSpectra, target: &Tensor) -> f64 {
    let bins = spectra.bins();
    let mut sum = 0.0;
    for (k, ((r, i), t)) in spectra
        .real
        .data()
        .iter()
        .zip(spectra.imag.data())
        .zip(target.data())
        .enumerate()
    {
        let bin = k % bins;
        let weight = if bin == 0 || bin == bins - 1 { 1.0 } else { 2.0 };
        let d = (r * r + i * i).sqrt() - t;
        sum += weight * d * d;
    }
    sum.sqrt()
}

fn with_phase(target: &Tensor, phase_of: impl Fn(usize) -> (f64, f64)) -> ComplexSpectra {
    let shape = target.shape().to_vec();
    let mut re = Vec::with_capacity(target.len());
    let mut im = Vec::with_capacity(target.len());
    for (k, &m) in target.data().iter().enumerate() {
        let (c, s) = phase_of(k);
        re.push(m * c);
        im.push(m * s);
    }
    ComplexSpectra {
        real: Tensor::new(shape.clone(), re).expect("same shape"),
        imag: Tensor::new(shape, im).expect("same shape"),
    }
}

/// Recovers a waveform whose short-time magnitudes approximate
/// `target_mags` (`frames × bins`).
///
/// The output has `(frames − 1)·hop + n_fft` samples. Each iteration keeps
/// the phase of the current signal's transform, substitutes the target
/// magnitudes and inverts by least-squares overlap-add.
pub fn griffin_lim(target_mags: &Tensor, fe: &FrontEndConfig, gl: &GriffinLimConfig) -> Result<GriffinLimOutput> {
    fe.validate()?;
    if gl.iterations == 0 {
        return Err(Error::Parameter("Griffin-Lim needs at least one iteration".into()));
    }
    let shape = target_mags.shape();
    if shape.len() != 2 || shape[1] != fe.bins() || shape[0] == 0 {
        return Err(Error::Parameter(format!(
            "target magnitudes must be frames × {} , got {:?}",
            fe.bins(),
            shape
        )));
    }
    if target_mags.data().iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::Validation(
            "target magnitudes must be finite and non-negative".into(),
        ));
    }
    let len = fe.span(shape[0]);

    let initial = match gl.init_phase {
        InitPhase::Zero => with_phase(target_mags, |_| (1.0, 0.0)),
        InitPhase::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phases: Vec<f64> = (0..target_mags.len()).map(|_| rng.random_range(-PI..PI)).collect();
            with_phase(target_mags, |k| (phases[k].cos(), phases[k].sin()))
        }
    };
    let mut x = overlap_add_inverse(&initial, fe, len)?;
    let mut spectra = stft(&x, fe)?;
    let mut distances = vec![spectral_distance(&spectra, target_mags)];
    for _ in 0..gl.iterations {
        let projected = with_phase(target_mags, |k| {
            let (r, i) = (spectra.real.data()[k], spectra.imag.data()[k]);
            let m = (r * r + i * i).sqrt();
            if m > 0.0 {
                (r / m, i / m)
            } else {
                (1.0, 0.0)
            }
        });
        x = overlap_add_inverse(&projected, fe, len)?;
        spectra = stft(&x, fe)?;
        let d = spectral_distance(&spectra, target_mags);
        debug_assert!(
            d <= distances.last().copied().unwrap_or(f64::INFINITY) + 1e-9,
            "Griffin-Lim distance increased"
        );
        distances.push(d);
    }
    Ok(GriffinLimOutput { samples: x, distances })
}

fn check_baseline_network(net: &NetworkConfig) -> Result<()> {
    if net.front_end.variant != FeatureVariant::MagOnly {
        return Err(Error::Parameter(format!(
            "the magnitude-domain path needs the mag-only variant, got {}",
            net.front_end.variant
        )));
    }
    Ok(())
}

/// Optimizes a `frames × bins` log-magnitude matrix against the content and
/// style targets. Returns the matrix and the loss history.
pub fn optimize_log_magnitudes(
    content: &AudioClip,
    style: &AudioClip,
    net: &NetworkConfig,
    cfg: &StyleTransferConfig,
) -> Result<(Tensor, LossReport)> {
    optimize_log_magnitudes_with(content, style, net, cfg, &mut |_| {})
}

/// [`optimize_log_magnitudes`] with a callback invoked after every iteration.
pub fn optimize_log_magnitudes_with(
    content: &AudioClip,
    style: &AudioClip,
    net: &NetworkConfig,
    cfg: &StyleTransferConfig,
    on_iteration: &mut dyn FnMut(&LossEntry),
) -> Result<(Tensor, LossReport)> {
    check_same_rate(content, style)?;
    cfg.validate()?;
    check_baseline_network(net)?;
    let network = init_filters(net)?;
    let fe = &net.front_end;
    let frames = usable_frames(content.len(), fe, net, "content")?;
    usable_frames(style.len(), fe, net, "style")?;
    let content_samples = &content.samples()[..fe.span(frames)];

    let content_ft = assemble_features(&stft(content_samples, fe)?, fe)?;
    let style_ft = assemble_features(&stft(style.samples(), fe)?, fe)?;
    let targets = Targets::from_features(&content_ft, &style_ft, &network)?;
    let mut objective = Objective::for_log_magnitudes(&network, &targets, cfg.weights(), frames)?;
    let mut x = match cfg.init {
        Init::Noise { sigma } => noise(frames * fe.bins(), sigma, cfg.seed)?,
        Init::ContentCopy => content_ft.values.data().to_vec(),
    };
    let report = descend(&mut objective, &mut x, cfg, on_iteration)?;
    Ok((Tensor::new(vec![frames, fe.bins()], x)?, report))
}

/// `max(exp(L) − ε, 0)`, the inverse of the log-magnitude features.
pub fn magnitudes_from_log(log_mags: &Tensor, epsilon: f64) -> Tensor {
    let data = log_mags.data().iter().map(|l| (l.exp() - epsilon).max(0.0)).collect();
    Tensor::new(log_mags.shape().to_vec(), data).expect("same shape")
}

/// Magnitude-domain stylization followed by Griffin-Lim.
///
/// `net` must use the mag-only variant, as the `baseline-ulyanov` preset does.
pub fn ulyanov_stylize(
    content: &AudioClip,
    style: &AudioClip,
    net: &NetworkConfig,
    cfg: &StyleTransferConfig,
    gl: &GriffinLimConfig,
) -> Result<(AudioClip, LossReport)> {
    ulyanov_stylize_with(content, style, net, cfg, gl, &mut |_| {})
}

/// [`ulyanov_stylize`] with a callback invoked after every optimization iteration.
pub fn ulyanov_stylize_with(
    content: &AudioClip,
    style: &AudioClip,
    net: &NetworkConfig,
    cfg: &StyleTransferConfig,
    gl: &GriffinLimConfig,
    on_iteration: &mut dyn FnMut(&LossEntry),
) -> Result<(AudioClip, LossReport)> {
    let (log_mags, report) = optimize_log_magnitudes_with(content, style, net, cfg, on_iteration)?;
    let mags = magnitudes_from_log(&log_mags, net.front_end.epsilon);
    let out = griffin_lim(&mags, &net.front_end, gl)?;
    Ok((AudioClip::new(out.samples, content.sample_rate())?, report))
}
