//! Mechanical spectra, lineshape fits, and spectral thermometry.

use std::f64::consts::TAU;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{SpectrumSettings, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::noisegen::{self, SpectrumEstimate};

/// Ensemble- and segment-averaged spectrum of `b` over the post-burn-in
/// samples. `∫ S dω/2π = <|b|^2> = n_m + 1/2`.
pub fn mechanical_spectrum(trajectories: &[Trajectory], settings: SpectrumSettings) -> Result<SpectrumEstimate> {
    let first = trajectories.first().ok_or_else(|| invalid("no trajectories"))?;
    let parts = trajectories
        .iter()
        .map(|t| {
            if (t.dt_sample - first.dt_sample).abs() > 1e-12 * first.dt_sample {
                return Err(invalid("trajectories have different sample strides"));
            }
            let b = t.post_burn_b();
            if b.len() < settings.segment_length {
                return Err(invalid(format!(
                    "{} post-burn-in samples, need at least {} per segment",
                    b.len(),
                    settings.segment_length
                )));
            }
            noisegen::welch(&b, t.dt_sample, settings.segment_length, settings.overlap, settings.window)
        })
        .collect::<Result<Vec<_>>>()?;
    SpectrumEstimate::average(&parts)
}

/// Lorentzian plus constant baseline:
/// `baseline + area * fwhm / ((ω - center)^2 + fwhm^2/4)`, so the peak
/// integrates to `area` under `dω/2π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub center: f64,
    pub fwhm: f64,
    pub area: f64,
    pub baseline: f64,
    /// RMS residual divided by the fitted peak height.
    pub residual_norm: f64,
    pub converged: bool,
}

impl LineFit {
    pub fn eval(&self, omega: f64) -> f64 {
        let d = omega - self.center;
        self.baseline + self.area * self.fwhm / (d * d + 0.25 * self.fwhm * self.fwhm)
    }

    pub fn peak_height(&self) -> f64 {
        4.0 * self.area / self.fwhm
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn crossing(x: &[f64], y: &[f64], i_out: usize, i_in: usize, level: f64) -> f64 {
    let t = (y[i_in] - level) / (y[i_in] - y[i_out]);
    x[i_in] + t * (x[i_out] - x[i_in])
}

/// Half-maximum crossings around the global maximum, after removing the
/// median as baseline. Returns `(left, right, peak_index, level)`.
fn half_max_crossings(x: &[f64], y: &[f64], baseline: f64) -> Option<(f64, f64, usize, f64)> {
    let peak = argmax(y);
    let level = baseline + 0.5 * (y[peak] - baseline);
    if !(y[peak] > baseline) {
        return None;
    }
    let left = (0..peak).rev().find(|&i| y[i] < level)?;
    let right = (peak + 1..y.len()).find(|&i| y[i] < level)?;
    Some((
        crossing(x, y, left, left + 1, level),
        crossing(x, y, right, right - 1, level),
        peak,
        level,
    ))
}

/// Width between the half-maximum crossings of the dominant peak, with
/// linear interpolation between grid points.
pub fn fwhm_numeric(spec: &SpectrumEstimate) -> Result<f64> {
    let (x, y) = (&spec.freqs, &spec.psd);
    if x.len() < 3 {
        return Err(invalid("spectrum needs at least three points"));
    }
    let baseline = median(y);
    let (left, right, _, level) = half_max_crossings(x, y, baseline).ok_or(Error::NoPeak)?;
    let width = right - left;
    let bin = spec.bin_width();
    let bins = width / bin;
    if bins < 3.0 {
        return Err(Error::UnderResolved { bins });
    }
    // A second excursion above half maximum, clear of the main lobe.
    let margin = (3.0 * bin).max(0.25 * width);
    let secondary = x
        .iter()
        .zip(y)
        .any(|(&f, &v)| v > level && (f < left - margin || f > right + margin));
    if secondary {
        return Err(Error::AmbiguousPeak);
    }
    Ok(width)
}

/// Levenberg–Marquardt fit of [`LineFit`]'s model. Never fails: a fit that
/// does not settle, or settles on something that is not a resolved peak,
/// comes back with `converged = false` and best-effort values.
pub fn fit_lorentzian(spec: &SpectrumEstimate, init: Option<LineFit>) -> LineFit {
    const MAX_ITER: usize = 200;
    const REL_STEP: f64 = 1e-6;

    let (x, y) = (&spec.freqs, &spec.psd);
    let bin = spec.bin_width();
    let failed = |f: LineFit| LineFit {
        converged: false,
        ..f
    };
    let nan_fit = LineFit {
        center: f64::NAN,
        fwhm: f64::NAN,
        area: f64::NAN,
        baseline: f64::NAN,
        residual_norm: f64::NAN,
        converged: false,
    };
    if x.len() < 5 {
        return nan_fit;
    }

    let start = match init {
        Some(f) => f,
        None => {
            let baseline = median(y);
            let Some((left, right, peak, _)) = half_max_crossings(x, y, baseline) else {
                return LineFit {
                    center: x[argmax(y)],
                    baseline,
                    area: 0.0,
                    fwhm: bin,
                    residual_norm: f64::NAN,
                    converged: false,
                };
            };
            let fwhm = (right - left).max(bin);
            LineFit {
                center: x[peak],
                fwhm,
                area: 0.25 * (y[peak] - baseline) * fwhm,
                baseline,
                residual_norm: f64::NAN,
                converged: false,
            }
        }
    };

    // Work in coordinates centred on the start and scaled by its width and
    // the data range, so the step test is dimensionless.
    let x0 = start.center;
    let xs = start.fwhm.abs().max(bin);
    let ys = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(ys > 0.0) || !ys.is_finite() {
        return failed(start);
    }
    let u: Vec<f64> = x.iter().map(|v| (v - x0) / xs).collect();
    let v: Vec<f64> = y.iter().map(|t| t / ys).collect();
    // theta = [centre, width, area, baseline] in scaled units.
    let mut theta = Vector4::new(
        (start.center - x0) / xs,
        start.fwhm.abs().max(bin) / xs,
        start.area / (xs * ys),
        start.baseline / ys,
    );

    let ssr = |t: &Vector4<f64>| -> f64 {
        u.iter()
            .zip(&v)
            .map(|(&ui, &vi)| {
                let d = ui - t[0];
                let r = vi - (t[3] + t[2] * t[1] / (d * d + 0.25 * t[1] * t[1]));
                r * r
            })
            .sum()
    };

    let mut cost = ssr(&theta);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (&ui, &vi) in u.iter().zip(&v) {
            let (c, w, a, b) = (theta[0], theta[1], theta[2], theta[3]);
            let d = ui - c;
            let den = d * d + 0.25 * w * w;
            let model = b + a * w / den;
            let jac = Vector4::new(
                2.0 * a * w * d / (den * den),
                a * (den - 0.5 * w * w) / (den * den),
                w / den,
                1.0,
            );
            jtj += jac * jac.transpose();
            jtr += jac * (vi - model);
        }
        let mut accepted = None;
        while lambda < 1e12 {
            let mut lhs = jtj;
            for k in 0..4 {
                lhs[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(delta) = lhs.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = theta + delta;
            let trial_cost = ssr(&trial);
            if trial[1] > 0.0 && trial_cost.is_finite() && trial_cost <= cost {
                accepted = Some((trial, trial_cost, delta));
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        let Some((trial, trial_cost, delta)) = accepted else {
            // No downhill step at any damping: a stationary point.
            converged = true;
            break;
        };
        theta = trial;
        cost = trial_cost;
        let height = (4.0 * theta[2] / theta[1]).abs() + theta[3].abs();
        let rel = [
            delta[0].abs() / theta[1],
            delta[1].abs() / theta[1],
            delta[2].abs() / theta[2].abs().max(1e-300),
            delta[3].abs() / height.max(1e-300),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if rel < REL_STEP {
            converged = true;
            break;
        }
    }

    let fit = LineFit {
        center: x0 + theta[0] * xs,
        fwhm: theta[1] * xs,
        area: theta[2] * xs * ys,
        baseline: theta[3] * ys,
        residual_norm: 0.0,
        converged: false,
    };
    let rms = (cost / u.len() as f64).sqrt() * ys;
    let height = fit.peak_height();
    let span = x[x.len() - 1] - x[0];
    let plausible = fit.area > 0.0
        && fit.fwhm >= bin
        && fit.fwhm < span
        && fit.center >= x[0]
        && fit.center <= x[x.len() - 1]
        && height > 5.0 * rms;
    LineFit {
        residual_norm: rms / height.abs(),
        converged: converged && plausible,
        ..fit
    }
}

/// Phonon occupancy from the baseline-subtracted spectral area, minus the
/// symmetrized vacuum contribution 1/2.
pub fn occupancy_from_spectrum(spec: &SpectrumEstimate, fit: &LineFit) -> Result<f64> {
    let baseline = if fit.converged { fit.baseline } else { median(&spec.psd) };
    let scale = spec.bin_width() / TAU;
    let area: f64 = spec.psd.iter().map(|s| (s - baseline) * scale).sum();
    // Each Welch bin fluctuates by ~1/sqrt(segments) of its value.
    let var: f64 = spec.psd.iter().map(|s| (s * scale).powi(2)).sum();
    let stderr = (var / spec.n_segments.max(1) as f64).sqrt();
    let occupancy = area - 0.5;
    if occupancy < -3.0 * stderr {
        return Err(Error::NormalizationFault { occupancy, stderr });
    }
    Ok(occupancy)
}

/// Linewidth chosen for reporting: the Lorentzian width unless the fit is
/// poor (residual above `residual_limit`) or did not converge, in which case
/// the numeric FWHM.
pub fn effective_linewidth(spec: &SpectrumEstimate, fit: &LineFit, residual_limit: f64) -> Result<f64> {
    if fit.converged && fit.residual_norm <= residual_limit {
        Ok(fit.fwhm)
    } else {
        fwhm_numeric(spec)
    }
}
