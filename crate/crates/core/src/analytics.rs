//! Closed-form cooling predictions.
//!
//! Everything here is a pure function of [`SystemParams`] and the drive.
//! Functions take the parameters literally; only [`predict`] applies the
//! probe renormalization itself.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::params::{NoiseDrive, SystemParams};
use crate::quad::{self, Tolerance};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

// Upper cut of the exponential-weight integrals; e^-60 is below f64 resolution
// relative to the O(1) integrands used here.
const EXP_CUTOFF: f64 = 60.0;

/// Suppression factor `(kappa/sigma) atan(sigma/kappa)` of a box drive
/// relative to a coherent tone of the same flux. Equals 1 at `sigma = 0`.
pub fn bandwidth_factor(sigma: f64, kappa: f64) -> f64 {
    let x = sigma / kappa;
    if x.abs() < 1e-4 {
        // atan(x)/x series; the direct quotient loses digits only below this.
        1.0 - x * x / 3.0 + x.powi(4) / 5.0
    } else {
        x.atan() / x
    }
}

/// Generalization of [`bandwidth_factor`] to a box whose centre is offset by
/// `center` from the red sideband.
pub fn bandwidth_factor_offset(sigma: f64, center: f64, kappa: f64) -> f64 {
    if center == 0.0 {
        return bandwidth_factor(sigma, kappa);
    }
    if sigma == 0.0 {
        let u = 2.0 * center / kappa;
        return 1.0 / (1.0 + u * u);
    }
    let hi = ((2.0 * center + sigma) / kappa).atan();
    let lo = ((2.0 * center - sigma) / kappa).atan();
    kappa / (2.0 * sigma) * (hi - lo)
}

/// Time-averaged intracavity photon number for an injected flux `flux` at
/// the red sideband, using the exact detuned cavity response.
pub fn intracavity_photons(flux: f64, p: &SystemParams) -> f64 {
    flux * p.kappa_ext() / (p.omega_m * p.omega_m + 0.25 * p.kappa * p.kappa)
}

/// Inverse of [`intracavity_photons`].
pub fn flux_for_photons(n_bar0: f64, p: &SystemParams) -> f64 {
    n_bar0 * (p.omega_m * p.omega_m + 0.25 * p.kappa * p.kappa) / p.kappa_ext()
}

/// Damping induced by box noise of total flux `flux` and width `sigma`
/// centred on the red sideband.
pub fn gamma_opt_box(flux: f64, sigma: f64, p: &SystemParams) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(coherent_limit(flux, p) * bandwidth_factor(sigma, p.kappa))
}

// 4 g0^2 F0 kappa_ext / (kappa omega_m^2): the sigma -> 0 value of the box damping.
fn coherent_limit(flux: f64, p: &SystemParams) -> f64 {
    4.0 * p.g0 * p.g0 * flux * p.kappa_ext_fraction / (p.omega_m * p.omega_m)
}

/// Photon-number fluctuation spectrum `S(omega)`, frequencies relative to
/// the cavity resonance, normalized so that `g0^2 [S(w_m) - S(-w_m)]` is the
/// optical damping.
pub trait PsdFunction {
    fn density(&self, omega: f64) -> f64;
}

impl<F: Fn(f64) -> f64> PsdFunction for F {
    fn density(&self, omega: f64) -> f64 {
        self(omega)
    }
}

/// Net damping from the asymmetry of the photon-number spectrum at the two
/// mechanical sidebands. Negative values mean anti-damping.
pub fn gamma_opt_from_psd<P: PsdFunction + ?Sized>(psd: &P, p: &SystemParams) -> f64 {
    p.g0 * p.g0 * (psd.density(p.omega_m) - psd.density(-p.omega_m))
}

/// How the drive reaches the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveFilter {
    /// Full detuned-cavity response `1/((omega_m - u)^2 + kappa^2/4)` across the band.
    Exact,
    /// Flat response `1/omega_m^2`, the resolved-sideband approximation.
    FlatResolved,
}

/// Photon-number spectrum of a cavity driven by box noise below resonance.
///
/// Classical drive components at offset `u` from the red sideband scatter
/// off the oscillator into the cavity, weighted by the cavity Lorentzian at
/// the scattered frequency.
#[derive(Debug, Clone, Copy)]
pub struct BoxDrivePsd {
    pub flux: f64,
    pub sigma: f64,
    pub center: f64,
    pub omega_m: f64,
    pub kappa: f64,
    pub kappa_ext: f64,
    pub filter: DriveFilter,
    /// When false, scattering into the far-detuned (negative-frequency)
    /// sideband is dropped, matching the rotating-wave dynamics.
    pub counter_rotating: bool,
    pub rel_tol: f64,
}

impl BoxDrivePsd {
    pub fn new(drive: &NoiseDrive, p: &SystemParams, filter: DriveFilter, counter_rotating: bool) -> Self {
        BoxDrivePsd {
            flux: drive.flux,
            sigma: drive.sigma,
            center: drive.center_detuning,
            omega_m: p.omega_m,
            kappa: p.kappa,
            kappa_ext: p.kappa_ext(),
            filter,
            counter_rotating,
            rel_tol: 1e-10,
        }
    }

    fn drive_response(&self, u: f64) -> f64 {
        match self.filter {
            DriveFilter::Exact => {
                let du = self.omega_m - u;
                1.0 / (du * du + 0.25 * self.kappa * self.kappa)
            }
            DriveFilter::FlatResolved => 1.0 / (self.omega_m * self.omega_m),
        }
    }
}

impl PsdFunction for BoxDrivePsd {
    fn density(&self, omega: f64) -> f64 {
        if self.flux == 0.0 || (!self.counter_rotating && omega < 0.0) {
            return 0.0;
        }
        let lo = self.center - 0.5 * self.sigma;
        let hi = self.center + 0.5 * self.sigma;
        // Scattered-light Lorentzian peaks at u = omega_m - omega.
        let peak = self.omega_m - omega;
        let k = self.kappa;
        let mut pts = vec![lo, hi];
        for x in [peak - k, peak, peak + k] {
            if x > lo && x < hi {
                pts.push(x);
            }
        }
        pts.sort_by(f64::total_cmp);
        let f = |u: f64| {
            let v = u - peak;
            self.drive_response(u) * k / (v * v + 0.25 * k * k)
        };
        let tol = Tolerance {
            abs: 0.0,
            rel: self.rel_tol,
            max_intervals: 4000,
        };
        let integral = quad::integrate_points(f, &pts, tol).value;
        self.kappa_ext * self.flux / self.sigma * integral
    }
}

/// Steady occupancy of the oscillator with extra damping `gamma_opt`
/// towards the optical bath occupancy `n_ba`.
pub fn phonon_number(gamma_opt: f64, p: &SystemParams) -> f64 {
    (p.gamma * p.n_th + gamma_opt * p.n_ba) / (p.gamma + gamma_opt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticOccupancy {
    /// Average over the exponential distribution of instantaneous damping.
    pub exact: f64,
    /// Logarithmic large-damping asymptote.
    pub asymptote: f64,
    /// False when `gamma_opt <= gamma` (INVALID_REGIME for the asymptote).
    pub asymptote_valid: bool,
}

/// Occupancy when the damping follows a slowly varying noise envelope.
///
/// The instantaneous damping `gamma_opt * x` has `x ~ Exp(1)` because the
/// noise-driven cavity amplitude is circular Gaussian.
pub fn adiabatic_occupancy(gamma_opt: f64, p: &SystemParams) -> Result<AdiabaticOccupancy> {
    if !(gamma_opt > 0.0) {
        return Err(invalid(format!("gamma_opt must be > 0, got {gamma_opt}")));
    }
    let r = gamma_opt / p.gamma;
    let f = |x: f64| (-x).exp() * (p.n_th + r * x * p.n_ba) / (1.0 + r * x);
    let exact = quad::integrate_points(
        f,
        &quad::log_breakpoints(1.0 / r, EXP_CUTOFF),
        Tolerance {
            abs: 0.0,
            rel: 1e-12,
            max_intervals: 4000,
        },
    )
    .value;
    let asymptote = p.n_ba + (p.n_th - p.n_ba) / r * (r.ln() - EULER_GAMMA);
    Ok(AdiabaticOccupancy {
        exact,
        asymptote,
        asymptote_valid: r > 1.0,
    })
}

/// Time-averaged mechanical spectrum in the adiabatic limit: a mixture of
/// Lorentzians of width `gamma + gamma_opt x`, each carrying the occupancy
/// reached at that damping. Normalized so `∫ S dω/2π` equals
/// [`AdiabaticOccupancy::exact`].
pub fn adiabatic_lineshape(gamma_opt: f64, p: &SystemParams, omega: f64) -> f64 {
    let r = gamma_opt / p.gamma;
    let f = |x: f64| {
        let width = p.gamma * (1.0 + r * x);
        let weight = p.gamma * (p.n_th + r * x * p.n_ba);
        (-x).exp() * weight / (omega * omega + 0.25 * width * width)
    };
    let mut pts = quad::log_breakpoints(1.0 / r, EXP_CUTOFF);
    // Lorentzian crossover in x where width/2 = |omega|.
    let knee = (2.0 * omega.abs() / p.gamma - 1.0) / r;
    if knee > 0.0 && knee < EXP_CUTOFF {
        pts.push(knee);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
    }
    quad::integrate_points(
        f,
        &pts,
        Tolerance {
            abs: 0.0,
            rel: 1e-11,
            max_intervals: 4000,
        },
    )
    .value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticLinewidth {
    /// Full width at half maximum of [`adiabatic_lineshape`], rad/s.
    pub fwhm_numeric: f64,
    /// `gamma ln(gamma_opt/gamma)`, rad/s.
    pub asymptote: f64,
    pub asymptote_valid: bool,
}

pub fn adiabatic_linewidth(gamma_opt: f64, p: &SystemParams) -> Result<AdiabaticLinewidth> {
    if !(gamma_opt > 0.0) {
        return Err(invalid(format!("gamma_opt must be > 0, got {gamma_opt}")));
    }
    let shape = |w: f64| adiabatic_lineshape(gamma_opt, p, w);
    let half = 0.5 * shape(0.0);
    // Mixture of centred Lorentzians is monotone in |omega|; bracket then bisect.
    let mut lo = 0.0;
    let mut hi = 0.5 * p.gamma;
    while shape(hi) > half {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shape(mid) > half {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let r = gamma_opt / p.gamma;
    Ok(AdiabaticLinewidth {
        fwhm_numeric: lo + hi,
        asymptote: p.gamma * r.ln(),
        asymptote_valid: r > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentCooling {
    /// Optical damping `4 G^2 / kappa`, rad/s.
    pub gamma_opt: f64,
    pub n_m: f64,
}

/// Sideband cooling by a coherent red-detuned tone with effective coupling
/// `coupling` (rad/s), resolved-sideband limit.
pub fn coherent_cooling(coupling: f64, p: &SystemParams) -> CoherentCooling {
    let gamma_opt = 4.0 * coupling * coupling / p.kappa;
    CoherentCooling {
        gamma_opt,
        n_m: phonon_number(gamma_opt, p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    QuantumNoise,
    Crossover,
    Adiabatic,
}

impl Regime {
    pub fn classify(sigma: f64, gamma_opt: f64) -> Self {
        if sigma > 10.0 * gamma_opt {
            Regime::QuantumNoise
        } else if sigma < 0.1 * gamma_opt {
            Regime::Adiabatic
        } else {
            Regime::Crossover
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::QuantumNoise => "QUANTUM_NOISE",
            Regime::Crossover => "CROSSOVER",
            Regime::Adiabatic => "ADIABATIC",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "QUANTUM_NOISE" => Ok(Regime::QuantumNoise),
            "CROSSOVER" => Ok(Regime::Crossover),
            "ADIABATIC" => Ok(Regime::Adiabatic),
            other => Err(invalid(format!("unknown regime {other:?}"))),
        }
    }
}

/// Combined prediction for one operating point. `gamma_eff` and `n_m` are
/// the estimates appropriate to `regime`; in the crossover both brackets are
/// carried and the primary fields hold the quantum-noise values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub n_bar0: f64,
    pub gamma_opt: f64,
    pub gamma_eff: f64,
    pub n_m: f64,
    pub regime: Regime,
    pub gamma_eff_quantum_noise: f64,
    pub n_m_quantum_noise: f64,
    pub gamma_eff_adiabatic: f64,
    pub n_m_adiabatic: f64,
}

/// Evaluates the closed-form predictions for `drive` on probe-renormalized
/// parameters.
pub fn predict(params: &SystemParams, drive: &NoiseDrive) -> Result<Prediction> {
    crate::params::ensure_valid(crate::params::validate_system(params))?;
    crate::params::ensure_valid(crate::params::validate_drive(params, drive))?;
    let p = params.renormalize_for_probe();

    let n_bar0 = intracavity_photons(drive.flux, &p);
    let gamma_opt = coherent_limit(drive.flux, &p)
        * bandwidth_factor_offset(drive.sigma, drive.center_detuning, p.kappa);
    let regime = Regime::classify(drive.sigma, gamma_opt);

    let gamma_eff_qn = p.gamma + gamma_opt;
    let n_m_qn = phonon_number(gamma_opt, &p);
    let (gamma_eff_ad, n_m_ad) = if gamma_opt > 0.0 {
        (
            adiabatic_linewidth(gamma_opt, &p)?.fwhm_numeric,
            adiabatic_occupancy(gamma_opt, &p)?.exact,
        )
    } else {
        (p.gamma, p.n_th)
    };
    let (gamma_eff, n_m) = match regime {
        Regime::Adiabatic => (gamma_eff_ad, n_m_ad),
        Regime::QuantumNoise | Regime::Crossover => (gamma_eff_qn, n_m_qn),
    };
    Ok(Prediction {
        n_bar0,
        gamma_opt,
        gamma_eff,
        n_m,
        regime,
        gamma_eff_quantum_noise: gamma_eff_qn,
        n_m_quantum_noise: n_m_qn,
        gamma_eff_adiabatic: gamma_eff_ad,
        n_m_adiabatic: n_m_ad,
    })
}
