//! Stochastic integration of the linearized, rotating-wave optomechanical
//! Langevin equations driven by a classical noise envelope.
//!
//! Frames: the classical amplitude `alpha` rotates at the red sideband
//! `omega_c - omega_m`, so the cavity sits at detuning `omega_m` from it; the
//! cavity fluctuation `d` rotates at `omega_c` and the mechanical amplitude
//! `b` at `omega_m`. In these frames the beam-splitter coupling is
//! `g0 (alpha d† b + alpha* d b†)`.
//!
//! Quantum noise enters as symmetrized c-number white noise: vacuum 1/2 for
//! the cavity, `n_th + 1/2` for the mechanical bath. Occupancy is
//! `|b|^2 - 1/2`.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::bandwidth_factor_offset;
use crate::error::{invalid, Error, Result};
use crate::noisegen::{self, SpectrumEstimate, Window};
use crate::params::{self, NoiseDrive, SimConfig, SystemParams};
use crate::stats;

const DRIVE_CHANNEL: u64 = 0;
const BATH_CHANNEL: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub alpha: Complex64,
    pub d: Complex64,
    pub b: Complex64,
}

impl StateVector {
    pub fn is_finite(&self) -> bool {
        (self.alpha.norm_sqr() + self.d.norm_sqr() + self.b.norm_sqr()).is_finite()
    }

    pub fn occupancy(&self) -> f64 {
        self.b.norm_sqr() - 0.5
    }
}

/// Per-step inputs: the drive envelope sample and unit-variance complex
/// normal draws (`E|z|^2 = 1`) for the cavity and mechanical baths.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInputs {
    pub xi: Complex64,
    pub cavity_noise: Complex64,
    pub bath_noise: Complex64,
}

/// What is injected into the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drive {
    /// Box-spectrum noise, synthesized per trajectory.
    Noise(NoiseDrive),
    /// Constant envelope `sqrt(flux)` at the red sideband.
    Coherent { flux: f64 },
}

impl Drive {
    pub fn flux(&self) -> f64 {
        match self {
            Drive::Noise(n) => n.flux,
            Drive::Coherent { flux } => *flux,
        }
    }

    /// Box suppression factor relating `4 g0^2 <|alpha|^2> / kappa` to the damping.
    fn damping_factor(&self, kappa: f64) -> f64 {
        match self {
            Drive::Noise(n) => bandwidth_factor_offset(n.sigma, n.center_detuning, kappa),
            Drive::Coherent { .. } => 1.0,
        }
    }
}

/// Precomputed exponential-Euler factors for one step size.
///
/// Each linear decay is applied exactly; the drive, coupling, and noise
/// terms are held constant over the step and integrated against the same
/// exponential (`phi1(z) = (1 - e^-z)/z`). Bath increments use the exact
/// Ornstein–Uhlenbeck variance `(1 - e^{-rate dt}) (n + 1/2)`.
#[derive(Debug, Clone, Copy)]
pub struct Propagator {
    pub dt: f64,
    g0: f64,
    sqrt_kappa_ext: f64,
    decay_alpha: Complex64,
    gain_alpha: Complex64,
    decay_d: f64,
    gain_d: f64,
    decay_b: f64,
    gain_b: f64,
    noise_d: f64,
    noise_b: f64,
}

impl Propagator {
    /// `detuning` is the cavity detuning seen by `alpha`, normally `omega_m`.
    pub fn new(p: &SystemParams, detuning: f64, dt: f64) -> Self {
        let rate_alpha = Complex64::new(0.5 * p.kappa, detuning);
        let decay_alpha = (-rate_alpha * dt).exp();
        let decay_d = (-0.5 * p.kappa * dt).exp();
        let decay_b = (-0.5 * p.gamma * dt).exp();
        Propagator {
            dt,
            g0: p.g0,
            sqrt_kappa_ext: p.kappa_ext().sqrt(),
            decay_alpha,
            gain_alpha: (1.0 - decay_alpha) / rate_alpha,
            decay_d,
            gain_d: phi1_dt(0.5 * p.kappa, dt),
            decay_b,
            gain_b: phi1_dt(0.5 * p.gamma, dt),
            noise_d: (0.5 * -(-p.kappa * dt).exp_m1()).sqrt(),
            noise_b: ((p.n_th + 0.5) * -(-p.gamma * dt).exp_m1()).sqrt(),
        }
    }
}

// dt * phi1(rate dt) = (1 - e^{-rate dt}) / rate, stable as rate -> 0.
fn phi1_dt(rate: f64, dt: f64) -> f64 {
    let z = rate * dt;
    if z == 0.0 {
        dt
    } else {
        -(-z).exp_m1() / rate
    }
}

/// One explicit exponential-Euler step.
pub fn step_exponential_euler(s: &StateVector, inputs: &StepInputs, prop: &Propagator) -> StateVector {
    let i = Complex64::i();
    let coupling = prop.g0 * s.alpha;
    StateVector {
        alpha: prop.decay_alpha * s.alpha + prop.gain_alpha * prop.sqrt_kappa_ext * inputs.xi,
        d: prop.decay_d * s.d - i * prop.gain_d * coupling * s.b + prop.noise_d * inputs.cavity_noise,
        b: prop.decay_b * s.b - i * prop.gain_b * coupling.conj() * s.d + prop.noise_b * inputs.bath_noise,
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

enum Envelope {
    Samples(Vec<Complex64>),
    Constant(Complex64),
}

impl Envelope {
    #[inline]
    fn at(&self, step: usize) -> Complex64 {
        match self {
            Envelope::Samples(v) => v[step % v.len()],
            Envelope::Constant(c) => *c,
        }
    }
}

fn build_envelope(drive: &Drive, cfg: &SimConfig, seed: u64) -> Result<Envelope> {
    match drive {
        Drive::Coherent { flux } => Ok(Envelope::Constant(Complex64::new(flux.sqrt(), 0.0))),
        Drive::Noise(n) => {
            let noise = NoiseDrive {
                seed: stats::derive_seed(seed, DRIVE_CHANNEL),
                ..*n
            };
            let n_steps = cfg.n_steps();
            let block = match cfg.repeat_period {
                Some(period) => ((period / cfg.dt).round() as usize).clamp(1, n_steps),
                None => n_steps,
            };
            let env = noisegen::synth_box_noise(&noise, block as f64 * cfg.dt, cfg.dt)?;
            Ok(Envelope::Samples(env.samples))
        }
    }
}

fn check_inputs(p: &SystemParams, drive: &Drive, cfg: &SimConfig) -> Result<()> {
    let mut v = params::validate_system(p);
    v.extend(params::validate_config(p, cfg));
    match drive {
        Drive::Noise(n) => v.extend(params::validate_drive(p, n)),
        Drive::Coherent { flux } => {
            if !(*flux >= 0.0) {
                return Err(invalid(format!("flux must be >= 0, got {flux}")));
            }
        }
    }
    params::ensure_valid(v)
}

/// Running results of one integration.
#[derive(Debug, Clone, Copy)]
struct Averages {
    occupancy: f64,
    photons: f64,
}

/// Integrates one realization, calling `observe(step, state)` after every
/// step. Returns time averages over the post-burn-in steps.
fn integrate<F: FnMut(usize, &StateVector)>(
    p: &SystemParams,
    drive: &Drive,
    cfg: &SimConfig,
    seed: u64,
    mut observe: F,
) -> Result<Averages> {
    check_inputs(p, drive, cfg)?;
    let envelope = build_envelope(drive, cfg, seed)?;
    let prop = Propagator::new(p, p.omega_m, cfg.dt);
    let mut rng = ChaCha8Rng::seed_from_u64(stats::derive_seed(seed, BATH_CHANNEL));

    let xi0 = envelope.at(0);
    let mut state = StateVector {
        alpha: p.kappa_ext().sqrt() * xi0 / Complex64::new(0.5 * p.kappa, p.omega_m),
        d: complex_normal(&mut rng) * 0.5f64.sqrt(),
        b: complex_normal(&mut rng) * (p.n_th + 0.5).sqrt(),
    };
    observe(0, &state);

    let n_steps = cfg.n_steps();
    let n_burn = cfg.n_burn();
    let mut occ_blocks = Vec::new();
    let mut photon_blocks = Vec::new();
    let (mut occ_acc, mut photon_acc, mut in_block) = (0.0, 0.0, 0usize);
    for step in 1..=n_steps {
        let inputs = StepInputs {
            xi: envelope.at(step - 1),
            cavity_noise: complex_normal(&mut rng),
            bath_noise: complex_normal(&mut rng),
        };
        state = step_exponential_euler(&state, &inputs, &prop);
        if !state.is_finite() {
            return Err(Error::Diverged { step });
        }
        if step > n_burn {
            occ_acc += state.b.norm_sqr();
            photon_acc += state.alpha.norm_sqr();
            in_block += 1;
            if in_block == 4096 {
                occ_blocks.push(occ_acc);
                photon_blocks.push(photon_acc);
                (occ_acc, photon_acc, in_block) = (0.0, 0.0, 0);
            }
        }
        observe(step, &state);
    }
    occ_blocks.push(occ_acc);
    photon_blocks.push(photon_acc);
    let count = n_steps.saturating_sub(n_burn).max(1) as f64;
    Ok(Averages {
        occupancy: stats::pairwise_sum(&occ_blocks) / count - 0.5,
        photons: stats::pairwise_sum(&photon_blocks) / count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Sample times, s, uniform stride `sample_stride * dt` from 0.
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// `|b|^2 - 1/2` per recorded sample.
    pub occupancy_series: Vec<f64>,
    /// Index of the first recorded sample after the burn-in.
    pub burn_index: usize,
    pub dt_sample: f64,
    /// Occupancy averaged over every post-burn-in step.
    pub mean_occupancy: f64,
    /// `|alpha|^2` averaged over every post-burn-in step.
    pub mean_photons: f64,
}

impl Trajectory {
    pub fn post_burn_b(&self) -> Vec<Complex64> {
        self.states[self.burn_index..].iter().map(|s| s.b).collect()
    }

    /// CSV with columns `t_s, re_alpha, im_alpha, re_d, im_d, re_b, im_b, occupancy`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t_s", "re_alpha", "im_alpha", "re_d", "im_d", "re_b", "im_b", "occupancy"])?;
        for ((t, s), n) in self.times.iter().zip(&self.states).zip(&self.occupancy_series) {
            wr.write_record(
                [*t, s.alpha.re, s.alpha.im, s.d.re, s.d.im, s.b.re, s.b.im, *n].map(|v| v.to_string()),
            )?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Integrates one trajectory and records every `sample_stride`-th state.
/// Deterministic in `seed`: the drive and bath streams are derived from it.
pub fn run_trajectory(p: &SystemParams, drive: &Drive, cfg: &SimConfig, seed: u64) -> Result<Trajectory> {
    let p = p.renormalize_for_probe();
    let stride = cfg.sample_stride.max(1);
    let n_burn = cfg.n_burn();
    let capacity = cfg.n_steps() / stride + 1;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    let mut burn_index = None;
    let averages = integrate(&p, drive, cfg, seed, |step, s| {
        if step % stride == 0 {
            if burn_index.is_none() && step > n_burn {
                burn_index = Some(states.len());
            }
            times.push(step as f64 * cfg.dt);
            states.push(*s);
        }
    })?;
    let occupancy_series = states.iter().map(StateVector::occupancy).collect();
    Ok(Trajectory {
        times,
        burn_index: burn_index.unwrap_or(states.len()),
        states,
        occupancy_series,
        dt_sample: stride as f64 * cfg.dt,
        mean_occupancy: averages.occupancy,
        mean_photons: averages.photons,
    })
}

/// Welch settings for mechanical spectra gathered during an ensemble run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSettings {
    /// Samples (after decimation by `sample_stride`) per segment.
    pub segment_length: usize,
    pub overlap: f64,
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub n_m_mean: f64,
    pub n_m_stderr: f64,
    /// `4 g0^2 <|alpha|^2> / kappa` times the box factor, rad/s.
    pub gamma_opt_empirical: f64,
    pub mean_photons: f64,
    pub n_traj: usize,
    pub per_trajectory: Vec<f64>,
    /// Ensemble-averaged spectrum of `b`, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumEstimate>,
}

/// Runs `cfg.n_traj` trajectories with seeds `derive_seed(master_seed, i)`.
pub fn run_ensemble(
    p: &SystemParams,
    drive: &Drive,
    cfg: &SimConfig,
    master_seed: u64,
    spectrum: Option<SpectrumSettings>,
) -> Result<EnsembleResult> {
    if cfg.n_traj < 2 {
        return Err(invalid(format!("ensemble needs n_traj >= 2, got {}", cfg.n_traj)));
    }
    let seeds: Vec<u64> = (0..cfg.n_traj as u64)
        .map(|i| stats::derive_seed(master_seed, i))
        .collect();
    run_ensemble_seeds(p, drive, cfg, &seeds, spectrum)
}

/// As [`run_ensemble`] with explicit per-trajectory seeds.
pub fn run_ensemble_seeds(
    p: &SystemParams,
    drive: &Drive,
    cfg: &SimConfig,
    seeds: &[u64],
    spectrum: Option<SpectrumSettings>,
) -> Result<EnsembleResult> {
    if seeds.is_empty() {
        return Err(invalid("no trajectory seeds"));
    }
    let p = p.renormalize_for_probe();
    let stride = cfg.sample_stride.max(1);
    let n_burn = cfg.n_burn();

    let runs: Vec<(Averages, Option<SpectrumEstimate>)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut b_series = Vec::new();
            let averages = integrate(&p, drive, cfg, seed, |step, s| {
                if spectrum.is_some() && step > n_burn && step % stride == 0 {
                    b_series.push(s.b);
                }
            })?;
            let spec = match spectrum {
                Some(set) => Some(noisegen::welch(
                    &b_series,
                    stride as f64 * cfg.dt,
                    set.segment_length,
                    set.overlap,
                    set.window,
                )?),
                None => None,
            };
            Ok((averages, spec))
        })
        .collect::<Result<_>>()?;

    let occ: Vec<f64> = runs.iter().map(|(a, _)| a.occupancy).collect();
    let photons: Vec<f64> = runs.iter().map(|(a, _)| a.photons).collect();
    let mean_photons = stats::mean(&photons);
    let spectrum = match spectrum {
        Some(_) => {
            let parts: Vec<SpectrumEstimate> = runs.into_iter().filter_map(|(_, s)| s).collect();
            Some(SpectrumEstimate::average(&parts)?)
        }
        None => None,
    };
    Ok(EnsembleResult {
        n_m_mean: stats::mean(&occ),
        n_m_stderr: stats::stderr(&occ),
        gamma_opt_empirical: 4.0 * p.g0 * p.g0 * mean_photons / p.kappa * drive.damping_factor(p.kappa),
        mean_photons,
        n_traj: seeds.len(),
        per_trajectory: occ,
        spectrum,
    })
}
