//! Audio style transfer by optimizing a waveform directly.
//!
//! A clip is framed, windowed and transformed into stacked spectral feature
//! blocks, passed through a shallow convolutional network with fixed random
//! filters, and compared against content activations and style Gram matrices.
//! Every step is differentiable, so the waveform itself can be updated by
//! gradient descent. A magnitude-only pipeline with Griffin-Lim phase
//! recovery is included for comparison.
//!
//! ```
//! use wavestyle::audio_io::AudioClip;
//! use wavestyle::network::load_preset;
//! use wavestyle::stylizer::{stylize, StyleTransferConfig};
//!
//! let tone = |f: f64| {
//!     let s = (0..1200).map(|k| (f * k as f64 / 8000.0 * std::f64::consts::TAU).sin() * 0.5);
//!     AudioClip::new(s.collect(), 8000).unwrap()
//! };
//! let mut net = load_preset("rim-k3").unwrap().with_filters(8);
//! net.front_end.n_fft = 128;
//! net.front_end.hop = 32;
//! let cfg = StyleTransferConfig { iterations: 5, ..Default::default() };
//! let (out, report) = stylize(&tone(440.0), &tone(660.0), &net, &cfg).unwrap();
//! assert_eq!(report.len(), 5);
//! assert_eq!(out.sample_rate(), 8000);
//! ```

pub mod audio_io;
pub mod baseline;
pub mod diff_graph;
pub mod error;
pub mod network;
pub mod spectral;
pub mod stylizer;

pub use error::{Error, Result};
