//! Direct waveform stylization.
//!
//! The optimized variable is the waveform itself. Its features go through
//! the same fixed random network as the content and style clips; the
//! objective is `α·content + β·style`, where content is the mean squared
//! activation difference and style is the squared Gram-matrix difference
//! divided by `F²`. Both are normalized by element count rather than by
//! the classic `1/(4N²M²)`, so the weights stay comparable across clip
//! lengths. Adam does the descent.

mod adam;
mod loss;
mod objective;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{content_loss, gram, style_loss, ContentLossOp, GramMatrix, StyleLossOp};
pub use objective::{LossComponents, Objective, Targets};

use crate::audio_io::{check_same_rate, write_atomic, AudioClip};
use crate::error::{Error, Result};
use crate::network::{init_filters, Network, NetworkConfig};
use crate::spectral::FrontEndConfig;

/// Starting point of the optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// i.i.d. `N(0, σ²)` samples from the run seed.
    Noise { sigma: f64 },
    /// The content clip itself.
    ContentCopy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleTransferConfig {
    pub content_weight: f64,
    pub style_weight: f64,
    pub iterations: usize,
    pub adam: AdamConfig,
    pub init: Init,
    pub seed: u64,
}

impl Default for StyleTransferConfig {
    fn default() -> Self {
        StyleTransferConfig {
            content_weight: 1.0,
            style_weight: 1e-2,
            iterations: 1000,
            adam: AdamConfig::default(),
            init: Init::Noise { sigma: 1e-3 },
            seed: 0,
        }
    }
}

impl StyleTransferConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.content_weight, self.style_weight);
        if !(a >= 0.0 && b >= 0.0 && a + b > 0.0 && (a + b).is_finite()) {
            return Err(Error::Parameter(format!(
                "weights must be non-negative with a positive sum, got content {a}, style {b}"
            )));
        }
        let adam = &self.adam;
        if !(adam.learning_rate > 0.0 && adam.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning rate must be > 0, got {}",
                adam.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&adam.beta1) || !(0.0..1.0).contains(&adam.beta2) {
            return Err(Error::Parameter("Adam betas must lie in [0, 1)".into()));
        }
        if !(adam.epsilon > 0.0 && adam.epsilon.is_finite()) {
            return Err(Error::Parameter("Adam epsilon must be > 0".into()));
        }
        if let Init::Noise { sigma } = self.init {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Parameter(format!("noise sigma must be >= 0, got {sigma}")));
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.content_weight, self.style_weight)
    }
}

/// Losses before the update of one iteration, and the time the iteration took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEntry {
    pub iteration: usize,
    pub total: f64,
    pub content: f64,
    pub style: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossReport {
    pub entries: Vec<LossEntry>,
}

impl LossReport {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first(&self) -> Option<&LossEntry> {
        self.entries.first()
    }

    pub fn last(&self) -> Option<&LossEntry> {
        self.entries.last()
    }

    /// `iteration,total,content,style,seconds`, CRLF line endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,total,content,style,seconds\r\n");
        for e in &self.entries {
            let _ = write!(
                s,
                "{},{},{},{},{}\r\n",
                e.iteration, e.total, e.content, e.style, e.seconds
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

/// Total loss and its gradient for one waveform. Builds a fresh objective;
/// use [`Objective`] directly inside loops.
pub fn total_loss_and_grad(
    x: &AudioClip,
    targets: &Targets,
    net: &Network,
    cfg: &StyleTransferConfig,
) -> Result<(LossComponents, Vec<f64>)> {
    let mut objective = Objective::for_waveform(net, targets, cfg.weights(), x.len())?;
    let (losses, grad) = objective.evaluate(x.samples())?;
    if !losses.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalFailure {
            iteration: 0,
            report: Box::default(),
        });
    }
    Ok((losses, grad))
}

pub(crate) fn usable_frames(len: usize, fe: &FrontEndConfig, net: &NetworkConfig, what: &str) -> Result<usize> {
    let frames = fe.frame_count(len);
    let needed_frames = net.min_frames();
    if frames < needed_frames {
        return Err(Error::Parameter(format!(
            "{what} clip has {len} samples; this network needs at least {}",
            fe.span(needed_frames)
        )));
    }
    Ok(frames)
}

pub(crate) fn noise(n: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
}

/// Runs Adam on `x` against `objective`, reporting each iteration to `on_iteration`.
pub(crate) fn descend(
    objective: &mut Objective,
    x: &mut [f64],
    cfg: &StyleTransferConfig,
    on_iteration: &mut dyn FnMut(&LossEntry),
) -> Result<LossReport> {
    let mut state = AdamState::new(x.len());
    let mut report = LossReport::default();
    for iteration in 0..cfg.iterations {
        let started = Instant::now();
        let (losses, grad) = objective.evaluate(x)?;
        if !losses.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericalFailure {
                iteration,
                report: Box::new(report),
            });
        }
        adam_step(x, &grad, &mut state, &cfg.adam);
        let entry = LossEntry {
            iteration,
            total: losses.total,
            content: losses.content,
            style: losses.style,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_iteration(&entry);
        report.entries.push(entry);
    }
    Ok(report)
}

/// Optimizes a waveform so its activations match `content` and its Gram
/// matrices match `style`.
///
/// The output spans the whole frames of the content clip. The style clip may
/// have any length the network can consume.
pub fn stylize(
    content: &AudioClip,
    style: &AudioClip,
    net: &NetworkConfig,
    cfg: &StyleTransferConfig,
) -> Result<(AudioClip, LossReport)> {
    stylize_with(content, style, net, cfg, &mut |_| {})
}

/// [`stylize`] with a callback invoked after every iteration.
pub fn stylize_with(
    content: &AudioClip,
    style: &AudioClip,
    net: &NetworkConfig,
    cfg: &StyleTransferConfig,
    on_iteration: &mut dyn FnMut(&LossEntry),
) -> Result<(AudioClip, LossReport)> {
    check_same_rate(content, style)?;
    cfg.validate()?;
    let network = init_filters(net)?;
    let fe = &net.front_end;
    let frames = usable_frames(content.len(), fe, net, "content")?;
    usable_frames(style.len(), fe, net, "style")?;
    let span = fe.span(frames);
    let content_samples = &content.samples()[..span];

    let targets = Targets::from_waveforms(content_samples, style.samples(), &network)?;
    let mut objective = Objective::for_waveform(&network, &targets, cfg.weights(), span)?;
    let mut x = match cfg.init {
        Init::Noise { sigma } => noise(span, sigma, cfg.seed)?,
        Init::ContentCopy => content_samples.to_vec(),
    };
    let report = descend(&mut objective, &mut x, cfg, on_iteration)?;
    Ok((AudioClip::new(x, content.sample_rate())?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::load_preset;

    fn tone(n: usize, rate: u32, freq: f64) -> AudioClip {
        let s = (0..n)
            .map(|k| 0.5 * (2.0 * std::f64::consts::PI * freq * k as f64 / f64::from(rate)).sin())
            .collect();
        AudioClip::new(s, rate).unwrap()
    }

    fn small_net() -> NetworkConfig {
        let mut net = load_preset("rim-k3").unwrap().with_filters(8);
        net.front_end.n_fft = 64;
        net.front_end.hop = 16;
        net
    }

    #[test]
    fn zero_iterations_return_the_initialization() {
        let clip = tone(400, 8000, 440.0);
        let cfg = StyleTransferConfig {
            iterations: 0,
            ..StyleTransferConfig::default()
        };
        let (out, report) = stylize(&clip, &clip, &small_net(), &cfg).unwrap();
        assert!(report.is_empty());
        let span = small_net().front_end.span(small_net().front_end.frame_count(400));
        assert_eq!(out.samples(), noise(span, 1e-3, 0).unwrap().as_slice());
    }

    #[test]
    fn content_copy_is_a_fixed_point_without_style() {
        let clip = tone(400, 8000, 440.0);
        let net = small_net();
        let network = init_filters(&net).unwrap();
        let span = net.front_end.span(net.front_end.frame_count(400));
        let x = AudioClip::new(clip.samples()[..span].to_vec(), 8000).unwrap();
        let targets = Targets::from_waveforms(x.samples(), clip.samples(), &network).unwrap();
        let cfg = StyleTransferConfig {
            content_weight: 1.0,
            style_weight: 0.0,
            ..StyleTransferConfig::default()
        };
        let (losses, grad) = total_loss_and_grad(&x, &targets, &network, &cfg).unwrap();
        assert_eq!(losses.total, 0.0);
        assert!(grad.iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn mismatched_rates_and_short_clips_are_rejected() {
        let a = tone(400, 8000, 440.0);
        let b = tone(400, 16000, 440.0);
        let cfg = StyleTransferConfig::default();
        assert!(matches!(stylize(&a, &b, &small_net(), &cfg), Err(Error::Parameter(_))));
        let short = tone(100, 8000, 440.0);
        assert!(stylize(&short, &a, &small_net(), &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = StyleTransferConfig {
            content_weight: 0.0,
            style_weight: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let mut cfg = StyleTransferConfig::default();
        cfg.adam.beta1 = 1.0;
        assert!(cfg.validate().is_err());
        assert!(StyleTransferConfig::default().validate().is_ok());
    }

    #[test]
    fn report_csv_layout() {
        let report = LossReport {
            entries: vec![LossEntry {
                iteration: 0,
                total: 1.5,
                content: 1.0,
                style: 50.0,
                seconds: 0.25,
            }],
        };
        assert_eq!(
            report.to_csv(),
            "iteration,total,content,style,seconds\r\n0,1.5,1,50,0.25\r\n"
        );
    }
}
