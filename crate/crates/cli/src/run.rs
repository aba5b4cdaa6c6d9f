use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use wavestyle::audio_io::{check_same_rate, decode_wav, peak_normalize, save_wav, write_atomic, AudioClip};
use wavestyle::baseline::{ulyanov_stylize_with, GriffinLimConfig, InitPhase};
use wavestyle::spectral::{export_spectrogram, stft, FrontEndConfig};
use wavestyle::stylizer::{stylize_with, LossEntry};

use crate::args::RunConfig;
use crate::manifest::{sha256_hex, InputDigest, RunManifest};

/// Progress lines go out every this many iterations.
pub const PROGRESS_EVERY: usize = 50;
/// Peak level of the written output.
pub const OUTPUT_PEAK: f64 = 0.9;

pub const OUTPUT_FILES: [&str; 9] = [
    "out.wav",
    "content_spectrogram.csv",
    "content_spectrogram.pgm",
    "style_spectrogram.csv",
    "style_spectrogram.pgm",
    "output_spectrogram.csv",
    "output_spectrogram.pgm",
    "loss.csv",
    "manifest.json",
];

/// A failure, tagged with the pipeline stage it came from.
#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source:#}")]
pub struct StageError {
    pub stage: &'static str,
    pub source: anyhow::Error,
}

trait InStage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> InStage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            source: e.into(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub manifest: RunManifest,
}

fn load(path: &Path, role: &str) -> anyhow::Result<(AudioClip, InputDigest)> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {role} clip {}", path.display()))?;
    let clip = decode_wav(&bytes).with_context(|| format!("{role} clip {}", path.display()))?;
    let digest = InputDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        sample_rate: clip.sample_rate(),
        samples: clip.len(),
    };
    Ok((clip, digest))
}

fn spectrogram(clip: &AudioClip, fe: &FrontEndConfig, path: &Path) -> wavestyle::Result<()> {
    export_spectrogram(&stft(clip.samples(), fe)?, path)
}

/// Runs one job and writes its artifacts. Progress lines go to `progress`.
pub fn run(config: &RunConfig, progress: &mut dyn Write) -> Result<RunOutcome, StageError> {
    let mut manifest = RunManifest::new(config.clone());
    let mut timer = Instant::now();
    let mut lap = |manifest: &mut RunManifest, stage: &str| {
        *manifest.stage_seconds.entry(stage.to_string()).or_insert(0.0) += timer.elapsed().as_secs_f64();
        timer = Instant::now();
    };

    let (content, content_digest) = load(&config.content, "content").stage("audio_io")?;
    let (style, style_digest) = load(&config.style, "style").stage("audio_io")?;
    check_same_rate(&content, &style).stage("audio_io")?;
    manifest.inputs = vec![content_digest, style_digest];
    lap(&mut manifest, "audio_io");

    let net = config.network().stage("network")?;
    let cfg = config.style_transfer();
    let mut report_progress = |e: &LossEntry| {
        if e.iteration.is_multiple_of(PROGRESS_EVERY) || e.iteration + 1 == cfg.iterations {
            let _ = writeln!(progress, "iter={} total={}", e.iteration, e.total);
        }
    };
    let (output, report) = if config.baseline {
        let gl = GriffinLimConfig {
            iterations: config.gl_iterations,
            init_phase: InitPhase::Zero,
        };
        let r = ulyanov_stylize_with(&content, &style, &net, &cfg, &gl, &mut report_progress).stage("baseline")?;
        lap(&mut manifest, "baseline");
        r
    } else {
        let r = stylize_with(&content, &style, &net, &cfg, &mut report_progress).stage("stylizer")?;
        lap(&mut manifest, "stylizer");
        r
    };

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .stage("output")?;
    let output = peak_normalize(&output, OUTPUT_PEAK).stage("audio_io")?;
    save_wav(&output, dir.join("out.wav")).stage("audio_io")?;
    lap(&mut manifest, "audio_io");

    let fe = &net.front_end;
    for (name, clip) in [("content", &content), ("style", &style), ("output", &output)] {
        spectrogram(clip, fe, &dir.join(format!("{name}_spectrogram.csv"))).stage("spectral")?;
    }
    lap(&mut manifest, "spectral");

    report.write_csv(dir.join("loss.csv")).stage("output")?;
    manifest.outputs = OUTPUT_FILES.iter().map(|s| s.to_string()).collect();
    lap(&mut manifest, "output");
    write_atomic(&dir.join("manifest.json"), manifest.to_json().as_bytes()).stage("output")?;

    Ok(RunOutcome {
        output_dir: dir.clone(),
        manifest,
    })
}
