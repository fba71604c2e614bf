//! Box-spectrum noise synthesis and averaged-periodogram spectral estimates.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::NoiseDrive;

/// Magic bytes at the start of an envelope file.
pub const ENVELOPE_MAGIC: [u8; 8] = *b"NCENV001";
pub const ENVELOPE_HEADER_LEN: usize = 32;

/// Uniformly sampled complex baseband waveform, samples in sqrt(photons/s).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEnvelope {
    pub samples: Vec<Complex64>,
    pub dt: f64,
    pub flux_nominal: f64,
    pub seed: u64,
}

impl ComplexEnvelope {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    /// Sample mean of `|xi|^2`, photons/s.
    pub fn mean_power(&self) -> f64 {
        mean_norm_sqr(&self.samples)
    }

    /// Repeats the waveform until it holds at least `len` samples, then truncates.
    pub fn tiled(&self, len: usize) -> ComplexEnvelope {
        let samples = self.samples.iter().copied().cycle().take(len).collect();
        ComplexEnvelope {
            samples,
            ..self.clone()
        }
    }

    /// Little-endian file: 32-byte header (magic, dt, flux, count) followed
    /// by interleaved `(re, im)` f64 pairs.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = [0u8; ENVELOPE_HEADER_LEN];
        header[..8].copy_from_slice(&ENVELOPE_MAGIC);
        header[8..16].copy_from_slice(&self.dt.to_le_bytes());
        header[16..24].copy_from_slice(&self.flux_nominal.to_le_bytes());
        header[24..32].copy_from_slice(&(self.samples.len() as u64).to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(16 * self.samples.len());
        for z in &self.samples {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<ComplexEnvelope> {
        let mut header = [0u8; ENVELOPE_HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| invalid(format!("envelope header: {e}")))?;
        if header[..8] != ENVELOPE_MAGIC {
            return Err(invalid("envelope file has wrong magic"));
        }
        let f64_at = |i: usize| f64::from_le_bytes(header[i..i + 8].try_into().unwrap());
        let dt = f64_at(8);
        let flux_nominal = f64_at(16);
        let count = u64::from_le_bytes(header[24..32].try_into().unwrap()) as usize;
        let mut body = Vec::new();
        r.read_to_end(&mut body)
            .map_err(|e| invalid(format!("envelope body: {e}")))?;
        if body.len() != 16 * count {
            return Err(invalid(format!(
                "envelope body holds {} bytes, header promises {}",
                body.len(),
                16 * count
            )));
        }
        let samples = body
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Ok(ComplexEnvelope {
            samples,
            dt,
            flux_nominal,
            seed: 0,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ComplexEnvelope> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

pub(crate) fn mean_norm_sqr(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    crate::stats::pairwise_sum(&x.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>()) / x.len() as f64
}

/// Angular frequency of DFT bin `k` for a length-`n` transform.
fn bin_frequency(k: usize, n: usize, dt: f64) -> f64 {
    let signed = if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    };
    TAU * signed / (n as f64 * dt)
}

/// Circular complex Gaussian noise with a flat spectrum on
/// `[center - sigma/2, center + sigma/2)` and zero elsewhere.
///
/// Each in-band DFT bin of the run-length grid gets an independent
/// amplitude; the inverse transform is exactly band-limited and periodic
/// over `duration`. The expected mean power equals `drive.flux`.
pub fn synth_box_noise(drive: &NoiseDrive, duration: f64, dt: f64) -> Result<ComplexEnvelope> {
    if !(dt > 0.0) || !(duration > 0.0) {
        return Err(invalid(format!("need dt > 0 and duration > 0, got dt={dt}, duration={duration}")));
    }
    if !(drive.sigma > 0.0) {
        return Err(invalid(format!("sigma must be > 0, got {}", drive.sigma)));
    }
    if !(drive.flux >= 0.0) {
        return Err(invalid(format!("flux must be >= 0, got {}", drive.flux)));
    }
    let dt_max = TAU / (10.0 * (drive.center_detuning.abs() + drive.sigma));
    if dt >= dt_max {
        return Err(invalid(format!(
            "dt = {dt:e} s must be below 2pi/(10(|center|+sigma)) = {dt_max:e} s"
        )));
    }
    let cells = duration * drive.sigma / TAU;
    if cells < 10.0 {
        return Err(invalid(format!(
            "duration*sigma/2pi = {cells:.3} must be >= 10 coherence cells"
        )));
    }

    let n = (duration / dt).round() as usize;
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    if drive.flux > 0.0 {
        let lo = drive.center_detuning - 0.5 * drive.sigma;
        let hi = drive.center_detuning + 0.5 * drive.sigma;
        // Visit bins in ascending frequency so the draw order is independent of n's parity.
        let half = n.div_ceil(2);
        let order = (half..n).chain(0..half);
        let in_band: Vec<usize> = order
            .filter(|&k| {
                let w = bin_frequency(k, n, dt);
                w >= lo && w < hi
            })
            .collect();
        if in_band.is_empty() {
            return Err(invalid("box narrower than one frequency bin"));
        }
        let amp = (drive.flux / (2.0 * in_band.len() as f64)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(drive.seed);
        for k in in_band {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            spectrum[k] = Complex64::new(amp * re, amp * im);
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    }
    Ok(ComplexEnvelope {
        samples: spectrum,
        dt,
        flux_nominal: drive.flux,
        seed: drive.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (TAU * i as f64 / len as f64).cos())
                .collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" | "rect" => Ok(Window::Rectangular),
            "hann" => Ok(Window::Hann),
            other => Err(invalid(format!("unknown window {other:?}"))),
        }
    }
}

/// Power spectral density on an ascending angular-frequency grid. Density
/// is per unit `dω/2π` (i.e. per Hz), so `Σ psd Δω/2π` is the mean-square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    pub n_segments: usize,
    /// Bin spacing, rad/s.
    pub resolution_bandwidth: f64,
}

impl SpectrumEstimate {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() < 2 {
            return self.resolution_bandwidth;
        }
        (self.freqs[self.freqs.len() - 1] - self.freqs[0]) / (self.freqs.len() - 1) as f64
    }

    /// `∫ psd dω/2π` over the grid.
    pub fn integrated_power(&self) -> f64 {
        crate::stats::pairwise_sum(&self.psd) * self.bin_width() / TAU
    }

    pub fn scaled(&self, c: f64) -> SpectrumEstimate {
        SpectrumEstimate {
            psd: self.psd.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Segment-weighted mean of estimates that share a frequency grid.
    pub fn average(parts: &[SpectrumEstimate]) -> Result<SpectrumEstimate> {
        let first = parts.first().ok_or_else(|| invalid("no spectra to average"))?;
        if parts.iter().any(|s| s.freqs.len() != first.freqs.len()) {
            return Err(invalid("spectra have different grids"));
        }
        let total: usize = parts.iter().map(|s| s.n_segments).sum();
        let mut psd = vec![0.0; first.psd.len()];
        for s in parts {
            let w = s.n_segments as f64 / total as f64;
            for (acc, v) in psd.iter_mut().zip(&s.psd) {
                *acc += w * v;
            }
        }
        Ok(SpectrumEstimate {
            freqs: first.freqs.clone(),
            psd,
            n_segments: total,
            resolution_bandwidth: first.resolution_bandwidth,
        })
    }

    /// CSV with columns `freq_hz, psd_per_hz`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["freq_hz", "psd_per_hz"])?;
        for (f, s) in self.freqs.iter().zip(&self.psd) {
            wr.write_record([(f / TAU).to_string(), s.to_string()])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<SpectrumEstimate> {
        let mut rd = csv::Reader::from_reader(r);
        let mut freqs = Vec::new();
        let mut psd = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| invalid("short csv row"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("csv value: {e}")))
            };
            freqs.push(TAU * parse(0)?);
            psd.push(parse(1)?);
        }
        if freqs.len() < 2 {
            return Err(invalid("spectrum csv needs at least two rows"));
        }
        let spacing = (freqs[freqs.len() - 1] - freqs[0]) / (freqs.len() - 1) as f64;
        Ok(SpectrumEstimate {
            freqs,
            psd,
            n_segments: 1,
            resolution_bandwidth: spacing,
        })
    }
}

/// Averaged periodogram of a uniformly sampled complex series.
pub fn welch(
    samples: &[Complex64],
    dt: f64,
    segment_length: usize,
    overlap_fraction: f64,
    window: Window,
) -> Result<SpectrumEstimate> {
    if segment_length < 2 || segment_length > samples.len() {
        return Err(invalid(format!(
            "segment length {segment_length} must lie in [2, {}]",
            samples.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(invalid(format!("overlap fraction {overlap_fraction} must lie in [0, 1)")));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt must be > 0"));
    }
    let len = segment_length;
    let step = ((len as f64 * (1.0 - overlap_fraction)).round() as usize).max(1);
    let n_segments = (samples.len() - len) / step + 1;
    let win = window.coefficients(len);
    let win_power: f64 = win.iter().map(|w| w * w).sum();

    let fft = FftPlanner::new().plan_fft_forward(len);
    let mut acc = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for s in 0..n_segments {
        let seg = &samples[s * step..s * step + len];
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = x * w;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let scale = dt / (win_power * n_segments as f64);
    let half = len.div_ceil(2);
    let order: Vec<usize> = (half..len).chain(0..half).collect();
    Ok(SpectrumEstimate {
        freqs: order.iter().map(|&k| bin_frequency(k, len, dt)).collect(),
        psd: order.iter().map(|&k| acc[k] * scale).collect(),
        n_segments,
        resolution_bandwidth: TAU / (len as f64 * dt),
    })
}

pub fn psd_welch(
    env: &ComplexEnvelope,
    segment_length: usize,
    overlap_fraction: f64,
    window: Window,
) -> Result<SpectrumEstimate> {
    welch(&env.samples, env.dt, segment_length, overlap_fraction, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationTime {
    /// Lag of the first 1/e crossing of the normalized `|autocorrelation|`, s.
    pub tau: f64,
    /// Set when no crossing exists within half the record; `tau` is then the duration.
    pub non_decaying: bool,
}

/// 1/e decay lag of `|<xi*(t) xi(t+tau)>|`, from the unbiased linear
/// autocorrelation.
pub fn autocorrelation_time(env: &ComplexEnvelope) -> CorrelationTime {
    let n = env.samples.len();
    let r0 = env.mean_power();
    if n < 2 || r0 == 0.0 {
        return CorrelationTime {
            tau: 0.0,
            non_decaying: false,
        };
    }
    let padded = (2 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); padded];
    buf[..n].copy_from_slice(&env.samples);
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(padded).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(padded).process(&mut buf);
    let norm = |lag: usize| buf[lag].norm() / (padded as f64 * (n - lag) as f64) / r0;

    let threshold = (-1.0f64).exp();
    let mut prev = 1.0;
    for lag in 1..=n / 2 {
        let c = norm(lag);
        if c < threshold {
            let frac = (prev - threshold) / (prev - c);
            return CorrelationTime {
                tau: (lag as f64 - 1.0 + frac) * env.dt,
                non_decaying: false,
            };
        }
        prev = c;
    }
    CorrelationTime {
        tau: env.duration(),
        non_decaying: true,
    }
}

/// First positive root of `sin(y)/y = 1/e`, so a box of width sigma has
/// correlation time `2 * SINC_INV_E / sigma`.
pub const SINC_INV_E: f64 = 2.199_123_071_161_498;

/// Correlation time of an ideal box spectrum of full width `sigma`.
pub fn box_correlation_time(sigma: f64) -> f64 {
    2.0 * SINC_INV_E / sigma
}
