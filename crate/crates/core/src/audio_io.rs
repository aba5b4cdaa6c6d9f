//! Reading, writing and conditioning mono audio.
//!
//! Input: RIFF/WAVE with 16-bit PCM (format 1) or 32-bit IEEE float
//! (format 3), mono or stereo. `WAVE_FORMAT_EXTENSIBLE` headers are accepted
//! when their sub-format is one of those two. Stereo is averaged to mono.
//!
//! Output is always a canonical 44-byte-header float WAV:
//!
//! | offset | bytes | value                          |
//! |--------|-------|--------------------------------|
//! | 0      | 4     | `RIFF`                         |
//! | 4      | 4     | `36 + data_len` (u32 LE)       |
//! | 8      | 4     | `WAVE`                         |
//! | 12     | 4     | `fmt `                         |
//! | 16     | 4     | 16 (u32 LE)                    |
//! | 20     | 2     | 3, IEEE float (u16 LE)         |
//! | 22     | 2     | 1 channel                      |
//! | 24     | 4     | sample rate                    |
//! | 28     | 4     | `4 · sample rate` byte rate    |
//! | 32     | 2     | 4, block align                 |
//! | 34     | 2     | 32 bits per sample             |
//! | 36     | 4     | `data`                         |
//! | 40     | 4     | `data_len = 4 · samples`       |
//! | 44     | ...   | samples, f32 LE                |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Fails when the rate is zero or any sample is NaN or infinite.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!("sample {i} is not finite ({})", samples[i])));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }
}

/// Errors unless both clips share a sample rate. Clips are never resampled.
pub fn check_same_rate(a: &AudioClip, b: &AudioClip) -> Result<()> {
    if a.sample_rate != b.sample_rate {
        return Err(Error::Parameter(format!(
            "sample rates differ: {} Hz vs {} Hz (resample one input first)",
            a.sample_rate, b.sample_rate
        )));
    }
    Ok(())
}

struct Format {
    code: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a WAV byte stream into a mono clip.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Parse("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::Parse(format!(
                    "chunk '{}' claims {size} bytes but the file ends early",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => format = Some(parse_fmt(body)?),
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }
    let format = format.ok_or_else(|| Error::Parse("no fmt chunk before data".into()))?;
    let data = data.ok_or_else(|| Error::Parse("no data chunk".into()))?;

    let bytes_per_sample = usize::from(format.bits / 8);
    let frame = bytes_per_sample * usize::from(format.channels);
    if data.len() % frame != 0 {
        return Err(Error::Parse(format!(
            "data chunk of {} bytes is not a whole number of {frame}-byte frames",
            data.len()
        )));
    }
    let decode = |chunk: &[u8]| -> f64 {
        match format.code {
            FORMAT_PCM => f64::from(i16::from_le_bytes([chunk[0], chunk[1]])) / 32768.0,
            _ => f64::from(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]])),
        }
    };
    let channels = usize::from(format.channels);
    let samples: Vec<f64> = data
        .chunks_exact(frame)
        .map(|f| {
            let sum: f64 = f.chunks_exact(bytes_per_sample).map(decode).sum();
            sum / channels as f64
        })
        .collect();
    AudioClip::new(samples, format.sample_rate)
}

fn parse_fmt(body: &[u8]) -> Result<Format> {
    if body.len() < 16 {
        return Err(Error::Parse(format!("fmt chunk too short ({} bytes)", body.len())));
    }
    let mut code = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if code == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID
        if body.len() < 26 {
            return Err(Error::Parse("extensible fmt chunk too short".into()));
        }
        code = u16_at(body, 24);
    }
    match (code, bits) {
        (FORMAT_PCM, 16) | (FORMAT_FLOAT, 32) => {}
        (FORMAT_PCM, b) => return Err(Error::Format(format!("{b}-bit PCM (only 16-bit PCM is read)"))),
        (FORMAT_FLOAT, b) => return Err(Error::Format(format!("{b}-bit float (only 32-bit float is read)"))),
        (c, _) => return Err(Error::Format(format!("format code {c}"))),
    }
    if !(1..=2).contains(&channels) {
        return Err(Error::Format(format!("{channels} channels (mono or stereo only)")));
    }
    if sample_rate == 0 {
        return Err(Error::Parse("sample rate of 0".into()));
    }
    Ok(Format {
        code,
        channels,
        sample_rate,
        bits,
    })
}

/// Reads a WAV file and downmixes it to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Encodes a clip as a mono float32 WAV.
pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>> {
    if let Some(i) = clip.samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::Validation(format!("refusing to write non-finite sample {i}")));
    }
    let data_len = u32::try_from(clip.samples.len() * 4)
        .ok()
        .filter(|n| *n <= u32::MAX - 36)
        .ok_or_else(|| Error::Validation("clip too long for a WAV file".into()))?;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    Ok(out)
}

/// Writes a mono float32 WAV. The file appears atomically: bytes go to a
/// temporary sibling that is renamed over `path` once complete.
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_wav(clip)?;
    write_atomic(path.as_ref(), &bytes)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Scales the clip so its largest magnitude equals `target_peak`. Silent clips
/// come back unchanged.
pub fn peak_normalize(clip: &AudioClip, target_peak: f64) -> Result<AudioClip> {
    if !(target_peak > 0.0 && target_peak <= 1.0) {
        return Err(Error::Parameter(format!(
            "target peak must be in (0, 1], got {target_peak}"
        )));
    }
    let peak = clip.peak();
    if peak == 0.0 {
        return Ok(clip.clone());
    }
    let gain = target_peak / peak;
    let samples = clip
        .samples
        .iter()
        .map(|s| {
            let v = s * gain;
            // pin the peak exactly so normalization is idempotent
            if s.abs() == peak {
                target_peak.copysign(*s)
            } else {
                v
            }
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(code: u16, channels: u16, rate: u32, bits: u16, payload: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(b"RIFF");
        v.extend_from_slice(&(36 + payload.len() as u32).to_le_bytes());
        v.extend_from_slice(b"WAVE");
        v.extend_from_slice(b"fmt ");
        v.extend_from_slice(&16u32.to_le_bytes());
        v.extend_from_slice(&code.to_le_bytes());
        v.extend_from_slice(&channels.to_le_bytes());
        v.extend_from_slice(&rate.to_le_bytes());
        let align = channels * bits / 8;
        v.extend_from_slice(&(rate * u32::from(align)).to_le_bytes());
        v.extend_from_slice(&align.to_le_bytes());
        v.extend_from_slice(&bits.to_le_bytes());
        v.extend_from_slice(b"data");
        v.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn pcm16_is_scaled_by_2_pow_15() {
        let bytes = wav_bytes(1, 1, 8000, 16, &16384i16.to_le_bytes());
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.samples(), &[0.5]);
        assert_eq!(clip.sample_rate(), 8000);
    }

    #[test]
    fn stereo_is_averaged() {
        let mut payload = Vec::new();
        payload.extend_from_slice(&0.2f32.to_le_bytes());
        payload.extend_from_slice(&0.4f32.to_le_bytes());
        let clip = decode_wav(&wav_bytes(3, 2, 8000, 32, &payload)).unwrap();
        let expected = (f64::from(0.2f32) + f64::from(0.4f32)) / 2.0;
        assert_eq!(clip.samples(), &[expected]);
        assert!((clip.samples()[0] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn unsupported_encodings_are_format_errors() {
        let eight_bit = wav_bytes(1, 1, 8000, 8, &[0, 1]);
        assert!(matches!(decode_wav(&eight_bit), Err(Error::Format(_))));
        let alaw = wav_bytes(6, 1, 8000, 8, &[0, 1]);
        assert!(matches!(decode_wav(&alaw), Err(Error::Format(_))));
        let surround = wav_bytes(1, 6, 8000, 16, &[0; 12]);
        assert!(matches!(decode_wav(&surround), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_a_parse_error() {
        let bytes = wav_bytes(1, 1, 8000, 16, &[0, 0, 1, 0]);
        assert!(matches!(decode_wav(&bytes[..bytes.len() - 1]), Err(Error::Parse(_))));
        assert!(matches!(decode_wav(&bytes[..20]), Err(Error::Parse(_))));
        assert!(matches!(decode_wav(b"RIFX0000WAVE"), Err(Error::Parse(_))));
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let plain = wav_bytes(1, 1, 8000, 16, &1000i16.to_le_bytes());
        let mut with_list = plain[..36].to_vec();
        with_list.extend_from_slice(b"LIST");
        with_list.extend_from_slice(&3u32.to_le_bytes());
        with_list.extend_from_slice(b"abc\0");
        with_list.extend_from_slice(&plain[36..]);
        assert_eq!(decode_wav(&with_list).unwrap(), decode_wav(&plain).unwrap());
    }

    #[test]
    fn encode_layout_is_canonical() {
        let clip = AudioClip::new(vec![0.0], 16000).unwrap();
        let bytes = encode_wav(&clip).unwrap();
        assert_eq!(bytes.len(), 48);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(u32_at(&bytes, 4), 40);
        assert_eq!(u16_at(&bytes, 20), 3);
        assert_eq!(u16_at(&bytes, 22), 1);
        assert_eq!(u32_at(&bytes, 24), 16000);
        assert_eq!(u32_at(&bytes, 28), 64000);
        assert_eq!(u16_at(&bytes, 32), 4);
        assert_eq!(u16_at(&bytes, 34), 32);
        assert_eq!(&bytes[36..40], b"data");
        assert_eq!(u32_at(&bytes, 40), 4);
        assert_eq!(&bytes[44..48], &0.0f32.to_le_bytes());
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        assert!(matches!(
            AudioClip::new(vec![0.0, f64::NAN], 8000),
            Err(Error::Validation(_))
        ));
        assert!(matches!(AudioClip::new(vec![0.0], 0), Err(Error::Validation(_))));
        let nan_clip = AudioClip {
            samples: vec![f64::NAN],
            sample_rate: 8000,
        };
        assert!(matches!(encode_wav(&nan_clip), Err(Error::Validation(_))));
    }

    #[test]
    fn peak_normalize_examples() {
        let clip = AudioClip::new(vec![0.2, -0.5], 8000).unwrap();
        assert_eq!(peak_normalize(&clip, 1.0).unwrap().samples(), &[0.4, -1.0]);
        let silent = AudioClip::new(vec![0.0; 4], 8000).unwrap();
        assert_eq!(peak_normalize(&silent, 0.9).unwrap(), silent);
        let loud = AudioClip::new(vec![2.0], 8000).unwrap();
        assert_eq!(peak_normalize(&loud, 0.9).unwrap().samples(), &[0.9]);
        assert!(peak_normalize(&clip, 0.0).is_err());
        assert!(peak_normalize(&clip, 1.5).is_err());
    }

    #[test]
    fn mismatched_rates_are_rejected() {
        let a = AudioClip::new(vec![0.0], 8000).unwrap();
        let b = AudioClip::new(vec![0.0], 16000).unwrap();
        assert!(check_same_rate(&a, &a).is_ok());
        assert!(matches!(check_same_rate(&a, &b), Err(Error::Parameter(_))));
    }
}
