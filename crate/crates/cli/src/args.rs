use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use wavestyle::network::{load_preset, NetworkConfig};
use wavestyle::stylizer::{AdamConfig, Init, StyleTransferConfig};

pub const DEFAULT_PRESET: &str = "rim-k3";
pub const BASELINE_PRESET: &str = "baseline-ulyanov";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Noise,
    Content,
}

/// Audio style transfer by direct waveform optimization.
#[derive(Debug, Parser)]
#[command(name = "wavestyle", version)]
struct Cli {
    /// Content clip (WAV).
    #[arg(long)]
    content: Option<PathBuf>,
    /// Style clip (WAV).
    #[arg(long)]
    style: Option<PathBuf>,
    /// Directory for out.wav, spectrograms, loss.csv and manifest.json.
    #[arg(long, visible_alias = "outdir")]
    output_dir: Option<PathBuf>,
    /// rim-k3, mag-updiff-k2 or baseline-ulyanov.
    #[arg(long)]
    preset: Option<String>,
    /// Optimize log magnitudes and recover phase with Griffin-Lim.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    n_fft: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    kernel_time: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    content_weight: Option<f64>,
    #[arg(long)]
    style_weight: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Seeds both the random filters and the noise initialization.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gl_iterations: Option<usize>,
    /// JSON file with flat keys named like the flags (n_fft, style_weight, ...),
    /// or a manifest.json from an earlier run. Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    init: Option<InitKind>,
}

/// Config-file keys. Every field is optional; absent keys fall back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    content: Option<PathBuf>,
    style: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    preset: Option<String>,
    baseline: Option<bool>,
    n_fft: Option<usize>,
    hop: Option<usize>,
    filters: Option<usize>,
    kernel_time: Option<usize>,
    layers: Option<usize>,
    content_weight: Option<f64>,
    style_weight: Option<f64>,
    iterations: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    gl_iterations: Option<usize>,
    init: Option<InitKind>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub content: PathBuf,
    pub style: PathBuf,
    pub output_dir: PathBuf,
    pub preset: String,
    pub baseline: bool,
    pub n_fft: usize,
    pub hop: usize,
    pub filters: usize,
    pub kernel_time: usize,
    pub layers: usize,
    pub content_weight: f64,
    pub style_weight: f64,
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
    pub gl_iterations: usize,
    pub init: InitKind,
}

#[derive(Debug, thiserror::Error)]
pub enum ArgsError {
    /// Bad flags or values. Also carries `--help` and `--version` output.
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error("reading config: {0:#}")]
    Config(anyhow::Error),
}

impl ArgsError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ArgsError::Usage(e) => e.exit_code(),
            ArgsError::Config(_) => 1,
        }
    }
}

fn usage(kind: ErrorKind, msg: impl std::fmt::Display) -> ArgsError {
    ArgsError::Usage(Cli::command().error(kind, msg))
}

fn read_config(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
    // A manifest nests the resolved configuration under "config".
    let flat = match value.get("config") {
        Some(inner) if value.get("tool").is_some() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(flat).with_context(|| format!("bad keys in {}", path.display()))
}

/// Resolves flags, config file and defaults, in that order of precedence.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, ArgsError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let file = match &cli.config {
        Some(path) => read_config(path).map_err(ArgsError::Config)?,
        None => FileConfig::default(),
    };

    let content = cli
        .content
        .or(file.content)
        .ok_or_else(|| usage(ErrorKind::MissingRequiredArgument, "--content is required"))?;
    let style = cli
        .style
        .or(file.style)
        .ok_or_else(|| usage(ErrorKind::MissingRequiredArgument, "--style is required"))?;

    let baseline = cli.baseline || file.baseline.unwrap_or(false);
    let preset = match cli.preset.or(file.preset) {
        Some(p) => p,
        None if baseline => BASELINE_PRESET.to_string(),
        None => DEFAULT_PRESET.to_string(),
    };
    let base = load_preset(&preset).map_err(|e| usage(ErrorKind::InvalidValue, e))?;
    let baseline = baseline || preset == BASELINE_PRESET;
    if baseline && preset != BASELINE_PRESET {
        return Err(usage(
            ErrorKind::ArgumentConflict,
            format!("--baseline runs the {BASELINE_PRESET} network, not {preset}"),
        ));
    }

    let n_fft = cli.n_fft.or(file.n_fft).unwrap_or(base.front_end.n_fft);
    let defaults = StyleTransferConfig::default();
    let config = RunConfig {
        content,
        style,
        output_dir: cli
            .output_dir
            .or(file.output_dir)
            .unwrap_or_else(|| PathBuf::from("wavestyle-out")),
        preset,
        baseline,
        n_fft,
        hop: cli.hop.or(file.hop).unwrap_or(n_fft / 4),
        filters: cli.filters.or(file.filters).unwrap_or(base.layers[0].filters),
        kernel_time: cli
            .kernel_time
            .or(file.kernel_time)
            .unwrap_or(base.layers[0].time_width),
        layers: cli.layers.or(file.layers).unwrap_or(base.layers.len()),
        content_weight: cli
            .content_weight
            .or(file.content_weight)
            .unwrap_or(defaults.content_weight),
        style_weight: cli.style_weight.or(file.style_weight).unwrap_or(defaults.style_weight),
        iterations: cli.iterations.or(file.iterations).unwrap_or(defaults.iterations),
        lr: cli.lr.or(file.lr).unwrap_or(defaults.adam.learning_rate),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        gl_iterations: cli.gl_iterations.or(file.gl_iterations).unwrap_or(100),
        init: cli.init.or(file.init).unwrap_or(InitKind::Noise),
    };
    config.network().map_err(|e| usage(ErrorKind::InvalidValue, e))?;
    config
        .style_transfer()
        .validate()
        .map_err(|e| usage(ErrorKind::InvalidValue, e))?;
    if config.gl_iterations == 0 {
        return Err(usage(ErrorKind::InvalidValue, "--gl-iterations must be at least 1"));
    }
    Ok(config)
}

impl RunConfig {
    /// The network this configuration describes.
    pub fn network(&self) -> wavestyle::Result<NetworkConfig> {
        let mut net = load_preset(&self.preset)?
            .with_filters(self.filters)
            .with_time_width(self.kernel_time);
        if self.layers != net.layers.len() {
            net = net.with_depth(self.layers)?;
        }
        net.front_end.n_fft = self.n_fft;
        net.front_end.hop = self.hop;
        net.seed = self.seed;
        net.validate()?;
        Ok(net)
    }

    pub fn style_transfer(&self) -> StyleTransferConfig {
        let defaults = StyleTransferConfig::default();
        StyleTransferConfig {
            content_weight: self.content_weight,
            style_weight: self.style_weight,
            iterations: self.iterations,
            adam: AdamConfig {
                learning_rate: self.lr,
                ..AdamConfig::default()
            },
            init: match self.init {
                InitKind::Noise => defaults.init,
                InitKind::Content => Init::ContentCopy,
            },
            seed: self.seed,
        }
    }
}
