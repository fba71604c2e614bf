//! Physical parameter types shared by every other module.
//!
//! Rates are stored in angular units (rad/s). Files and command-line values
//! are in Hz and converted at the boundary with [`hz`] / [`to_hz`].

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

/// Converts a frequency in Hz to an angular rate in rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    TAU * f
}

/// Converts an angular rate in rad/s to Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// Bose occupancy of a mode at angular frequency `omega_m` in a bath at
/// `temperature` kelvin.
pub fn thermal_occupancy(temperature: f64, omega_m: f64) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(invalid(format!("temperature must be > 0 K, got {temperature}")));
    }
    if !(omega_m > 0.0) || !omega_m.is_finite() {
        return Err(invalid(format!("omega_m must be > 0 rad/s, got {omega_m}")));
    }
    let x = HBAR * omega_m / (K_B * temperature);
    Ok(1.0 / x.exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Mechanical angular frequency, rad/s.
    pub omega_m: f64,
    /// Intrinsic mechanical damping, rad/s.
    pub gamma: f64,
    /// Pump-cavity total decay rate, rad/s.
    pub kappa: f64,
    /// Fraction of `kappa` that is external coupling, in (0, 1].
    pub kappa_ext_fraction: f64,
    /// Single-photon coupling, rad/s.
    pub g0: f64,
    /// Intrinsic bath occupancy.
    pub n_th: f64,
    /// Residual occupancy floor of the optical bath.
    pub n_ba: f64,
    /// Cooperativity of the weak thermometry probe.
    pub probe_cooperativity: f64,
}

impl SystemParams {
    /// Membrane-in-cavity device: omega_m/2pi = 9.22 MHz, kappa/2pi = 1.06 MHz.
    pub fn membrane() -> Self {
        SystemParams {
            omega_m: hz(9.22e6),
            gamma: hz(120.0),
            kappa: hz(1.06e6),
            kappa_ext_fraction: 1.0,
            g0: hz(39.0),
            n_th: 24.0,
            n_ba: 0.0,
            probe_cooperativity: 2.2,
        }
    }

    /// Scaled-down set that keeps the rate hierarchy
    /// (omega_m/kappa = 10, kappa/gamma = 1e3) but simulates in minutes.
    /// `g0` is usually re-chosen per experiment with [`SystemParams::with_g0_for`].
    pub fn desk() -> Self {
        SystemParams {
            omega_m: hz(1.0e6),
            gamma: hz(100.0),
            kappa: hz(1.0e5),
            kappa_ext_fraction: 1.0,
            g0: hz(112.5),
            n_th: 20.0,
            n_ba: 0.0,
            probe_cooperativity: 0.0,
        }
    }

    pub fn kappa_ext(&self) -> f64 {
        self.kappa * self.kappa_ext_fraction
    }

    /// Returns a copy whose `g0` produces coherent-limit damping
    /// `gamma_opt` at `n_bar0` intracavity photons, reduced by the box
    /// bandwidth factor for `sigma` (pass `0.0` for a coherent tone).
    pub fn with_g0_for(&self, gamma_opt: f64, n_bar0: f64, sigma: f64) -> Self {
        let factor = crate::analytics::bandwidth_factor(sigma, self.kappa);
        let g0 = (gamma_opt * self.kappa / (4.0 * n_bar0 * factor)).sqrt();
        SystemParams { g0, ..*self }
    }

    /// Folds the probe's residual sideband cooling into the intrinsic bath:
    /// `gamma -> gamma (1 + C_d)`, `n_th -> n_th / (1 + C_d)`. The returned
    /// value has zero probe cooperativity, so applying this twice is harmless.
    pub fn renormalize_for_probe(&self) -> Self {
        let scale = 1.0 + self.probe_cooperativity;
        SystemParams {
            gamma: self.gamma * scale,
            n_th: self.n_th / scale,
            probe_cooperativity: 0.0,
            ..*self
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Parses the Hz-unit JSON representation (see [`ParamsFile`]).
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(text)?;
        file.into_params()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ParamsFile::from(*self))?)
    }
}

/// On-disk form of [`SystemParams`]: frequencies in Hz, optional bath
/// temperature in mK used when `n_th` is absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub omega_m: f64,
    pub gamma: f64,
    pub kappa: f64,
    #[serde(default = "one")]
    pub kappa_ext_fraction: f64,
    pub g0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_th: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_mk: Option<f64>,
    #[serde(default)]
    pub n_ba: f64,
    #[serde(default)]
    pub probe_cooperativity: f64,
}

fn one() -> f64 {
    1.0
}

impl ParamsFile {
    pub fn into_params(self) -> Result<SystemParams> {
        let omega_m = hz(self.omega_m);
        let n_th = match (self.n_th, self.temperature_mk) {
            (Some(n), _) => n,
            (None, Some(t)) => thermal_occupancy(t * 1e-3, omega_m)?,
            (None, None) => return Err(invalid("parameter file needs n_th or temperature_mk")),
        };
        Ok(SystemParams {
            omega_m,
            gamma: hz(self.gamma),
            kappa: hz(self.kappa),
            kappa_ext_fraction: self.kappa_ext_fraction,
            g0: hz(self.g0),
            n_th,
            n_ba: self.n_ba,
            probe_cooperativity: self.probe_cooperativity,
        })
    }
}

impl From<SystemParams> for ParamsFile {
    fn from(p: SystemParams) -> Self {
        ParamsFile {
            omega_m: to_hz(p.omega_m),
            gamma: to_hz(p.gamma),
            kappa: to_hz(p.kappa),
            kappa_ext_fraction: p.kappa_ext_fraction,
            g0: to_hz(p.g0),
            n_th: Some(p.n_th),
            temperature_mk: None,
            n_ba: p.n_ba,
            probe_cooperativity: p.probe_cooperativity,
        }
    }
}

/// Injected box-spectrum noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDrive {
    /// Photon flux F0, photons/s.
    pub flux: f64,
    /// Full box width, rad/s.
    pub sigma: f64,
    /// Offset of the box centre from the red sideband, rad/s.
    #[serde(default)]
    pub center_detuning: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseDrive {
    pub fn new(flux: f64, sigma: f64) -> Self {
        NoiseDrive {
            flux,
            sigma,
            center_detuning: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseDrive { seed, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integrator step, s.
    pub dt: f64,
    /// Total integration time per trajectory, s.
    pub t_total: f64,
    /// Transient discarded before averaging, s.
    pub t_burn: f64,
    pub n_traj: usize,
    /// Output decimation: one recorded sample every `sample_stride` steps.
    pub sample_stride: usize,
    /// When set, the drive waveform is synthesized for this duration only and
    /// then repeated. Off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat_period: Option<f64>,
}

impl Default for SimConfig {
    /// Desk-scale settings, as in `configs/desk_sim.json`.
    fn default() -> Self {
        SimConfig {
            dt: 1.0e-7,
            t_total: 0.02,
            t_burn: 1.0e-3,
            n_traj: 16,
            sample_stride: 20,
            repeat_period: None,
        }
    }
}

impl SimConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_total / self.dt).round() as usize
    }

    pub fn n_burn(&self) -> usize {
        (self.t_burn / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    NonFinite,
    RateNonpositive,
    CouplingNegative,
    KappaExtFractionOutOfRange,
    OccupancyNegative,
    CooperativityNegative,
    ResolvedSidebandViolated,
    FluxNegative,
    SigmaNonpositive,
    BoxLeaksBlueSideband,
    StepNonpositive,
    StepTooLarge,
    BurnNotBelowTotal,
    EnsembleEmpty,
    StrideZero,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        match s.as_ref().and_then(|v| v.as_str()) {
            Some(name) => f.write_str(name),
            None => write!(f, "{self:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, message: impl Into<String>) -> Self {
        Violation {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

pub fn validate_system(p: &SystemParams) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();
    let fields = [
        ("omega_m", p.omega_m),
        ("gamma", p.gamma),
        ("kappa", p.kappa),
        ("kappa_ext_fraction", p.kappa_ext_fraction),
        ("g0", p.g0),
        ("n_th", p.n_th),
        ("n_ba", p.n_ba),
        ("probe_cooperativity", p.probe_cooperativity),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            out.push(Violation::new(NonFinite, format!("{name} is not finite")));
        }
    }
    for (name, v) in [("omega_m", p.omega_m), ("gamma", p.gamma), ("kappa", p.kappa)] {
        if v <= 0.0 {
            out.push(Violation::new(RateNonpositive, format!("{name} = {v} must be > 0")));
        }
    }
    if p.g0 < 0.0 {
        out.push(Violation::new(CouplingNegative, format!("g0 = {} must be >= 0", p.g0)));
    }
    if !(p.kappa_ext_fraction > 0.0 && p.kappa_ext_fraction <= 1.0) {
        out.push(Violation::new(
            KappaExtFractionOutOfRange,
            format!("kappa_ext_fraction = {} must lie in (0, 1]", p.kappa_ext_fraction),
        ));
    }
    for (name, v) in [("n_th", p.n_th), ("n_ba", p.n_ba)] {
        if v < 0.0 {
            out.push(Violation::new(OccupancyNegative, format!("{name} = {v} must be >= 0")));
        }
    }
    if p.probe_cooperativity < 0.0 {
        out.push(Violation::new(
            CooperativityNegative,
            format!("probe_cooperativity = {} must be >= 0", p.probe_cooperativity),
        ));
    }
    if p.omega_m > 0.0 && p.kappa > 0.0 && p.omega_m / p.kappa <= 1.0 {
        out.push(Violation::new(
            ResolvedSidebandViolated,
            format!("omega_m/kappa = {:.3} must exceed 1", p.omega_m / p.kappa),
        ));
    }
    out
}

pub fn validate_drive(p: &SystemParams, drive: &NoiseDrive) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();
    for (name, v) in [
        ("flux", drive.flux),
        ("sigma", drive.sigma),
        ("center_detuning", drive.center_detuning),
    ] {
        if !v.is_finite() {
            out.push(Violation::new(NonFinite, format!("{name} is not finite")));
        }
    }
    if drive.flux < 0.0 {
        out.push(Violation::new(FluxNegative, format!("flux = {} must be >= 0", drive.flux)));
    }
    if !(drive.sigma > 0.0) {
        out.push(Violation::new(SigmaNonpositive, format!("sigma = {} must be > 0", drive.sigma)));
    }
    let reach = drive.center_detuning.abs() + 0.5 * drive.sigma.max(0.0);
    if reach >= p.omega_m {
        out.push(Violation::new(
            BoxLeaksBlueSideband,
            format!("|center| + sigma/2 = {reach:.6e} rad/s reaches omega_m"),
        ));
    }
    out
}

pub fn validate_config(p: &SystemParams, cfg: &SimConfig) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();
    for (name, v) in [("dt", cfg.dt), ("t_total", cfg.t_total), ("t_burn", cfg.t_burn)] {
        if !v.is_finite() {
            out.push(Violation::new(NonFinite, format!("{name} is not finite")));
        }
    }
    if !(cfg.dt > 0.0) {
        out.push(Violation::new(StepNonpositive, format!("dt = {} must be > 0", cfg.dt)));
    } else if cfg.dt * p.kappa > 0.1 {
        out.push(Violation::new(
            StepTooLarge,
            format!("dt*kappa = {:.4} exceeds 0.1", cfg.dt * p.kappa),
        ));
    }
    if !(cfg.t_burn < cfg.t_total) || cfg.t_burn < 0.0 {
        out.push(Violation::new(
            BurnNotBelowTotal,
            format!("t_burn = {} must lie in [0, t_total = {})", cfg.t_burn, cfg.t_total),
        ));
    }
    if cfg.n_traj == 0 {
        out.push(Violation::new(EnsembleEmpty, "n_traj must be >= 1"));
    }
    if cfg.sample_stride == 0 {
        out.push(Violation::new(StrideZero, "sample_stride must be >= 1"));
    }
    out
}

/// Collects every violated invariant. Never fails; callers decide.
pub fn validate(p: &SystemParams, drive: &NoiseDrive, cfg: &SimConfig) -> Vec<Violation> {
    let mut out = validate_system(p);
    out.extend(validate_drive(p, drive));
    out.extend(validate_config(p, cfg));
    out
}

pub(crate) fn ensure_valid(violations: Vec<Violation>) -> Result<()> {
    if violations.is_empty() {
        return Ok(());
    }
    let msg = violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ");
    Err(invalid(msg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn membrane_cfg() -> SimConfig {
        let p = SystemParams::membrane();
        SimConfig {
            dt: 0.05 / p.kappa,
            t_total: 1e-3,
            t_burn: 1e-4,
            n_traj: 4,
            sample_stride: 10,
            repeat_period: None,
        }
    }

    #[test]
    fn occupancy_at_reference_temperature() {
        let n = thermal_occupancy(10.6e-3, hz(9.22e6)).unwrap();
        assert!((n - 23.5).abs() < 0.1, "{n}");
    }

    #[test]
    fn occupancy_is_one_at_ln2() {
        let omega = 1.0e9;
        let t = HBAR * omega / (K_B * std::f64::consts::LN_2);
        let n = thermal_occupancy(t, omega).unwrap();
        assert!((n - 1.0).abs() < 1e-12, "{n}");
    }

    #[test]
    fn occupancy_high_temperature_asymptote() {
        let omega = hz(1e6);
        for ratio in [100.0, 1e3, 1e5] {
            let t = ratio * HBAR * omega / K_B;
            let n = thermal_occupancy(t, omega).unwrap();
            assert!((n / ratio - 1.0).abs() < 5e-3, "{ratio}: {n}");
        }
    }

    #[test]
    fn occupancy_rejects_nonpositive_inputs() {
        assert!(thermal_occupancy(0.0, 1.0).is_err());
        assert!(thermal_occupancy(1.0, -1.0).is_err());
        assert!(thermal_occupancy(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn occupancy_monotone_on_grid() {
        let temps: Vec<f64> = (1..50).map(|i| i as f64 * 2e-3).collect();
        let omegas: Vec<f64> = (1..50).map(|i| hz(i as f64 * 1e6)).collect();
        for w in temps.windows(2) {
            assert!(thermal_occupancy(w[1], hz(5e6)).unwrap() > thermal_occupancy(w[0], hz(5e6)).unwrap());
        }
        for w in omegas.windows(2) {
            assert!(thermal_occupancy(0.02, w[1]).unwrap() < thermal_occupancy(0.02, w[0]).unwrap());
        }
    }

    #[test]
    fn probe_renormalization() {
        let p = SystemParams {
            probe_cooperativity: 0.0,
            ..SystemParams::membrane()
        };
        assert_eq!(p.renormalize_for_probe(), p);

        let p = SystemParams::membrane();
        let r = p.renormalize_for_probe();
        assert!((r.gamma / p.gamma - 3.2).abs() < 1e-12);
        assert!((r.n_th - 7.5).abs() < 1e-12);
        assert_eq!(r.probe_cooperativity, 0.0);
        assert_eq!(r.renormalize_for_probe(), r);

        let p = SystemParams {
            probe_cooperativity: 1.0,
            ..SystemParams::membrane()
        };
        assert!((to_hz(p.renormalize_for_probe().gamma) - 240.0).abs() < 1e-9);
    }

    #[test]
    fn membrane_set_validates() {
        let p = SystemParams::membrane();
        let drive = NoiseDrive::new(4.86e19, hz(200e3));
        let v = validate(&p, &drive, &membrane_cfg());
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn validation_reports_codes() {
        let p = SystemParams::membrane();
        let bad = SystemParams {
            kappa: 2.0 * p.omega_m,
            ..p
        };
        let codes: Vec<_> = validate_system(&bad).into_iter().map(|v| v.code).collect();
        assert!(codes.contains(&ViolationCode::ResolvedSidebandViolated));

        let drive = NoiseDrive::new(1.0, 0.0);
        let codes: Vec<_> = validate_drive(&p, &drive).into_iter().map(|v| v.code).collect();
        assert_eq!(codes, vec![ViolationCode::SigmaNonpositive]);

        let wide = NoiseDrive::new(1.0, 2.0 * p.omega_m);
        let codes: Vec<_> = validate_drive(&p, &wide).into_iter().map(|v| v.code).collect();
        assert_eq!(codes, vec![ViolationCode::BoxLeaksBlueSideband]);

        let cfg = SimConfig {
            dt: 1.0 / p.kappa,
            t_burn: 2.0,
            t_total: 1.0,
            n_traj: 0,
            sample_stride: 0,
            repeat_period: None,
        };
        let codes: Vec<_> = validate_config(&p, &cfg).into_iter().map(|v| v.code).collect();
        assert_eq!(
            codes,
            vec![
                ViolationCode::StepTooLarge,
                ViolationCode::BurnNotBelowTotal,
                ViolationCode::EnsembleEmpty,
                ViolationCode::StrideZero
            ]
        );
    }

    #[test]
    fn json_round_trip_in_hz() {
        let p = SystemParams::membrane();
        let text = p.to_json().unwrap();
        assert!(text.contains("\"omega_m\": 9220000"));
        let q = SystemParams::from_json(&text).unwrap();
        assert!((q.omega_m - p.omega_m).abs() < 1e-6);
        assert!((q.g0 - p.g0).abs() < 1e-9);
        assert_eq!(q.n_th, p.n_th);
    }

    #[test]
    fn json_temperature_fallback() {
        let text = r#"{"omega_m": 9.22e6, "gamma": 120, "kappa": 1.06e6, "g0": 39, "temperature_mk": 10.6}"#;
        let p = SystemParams::from_json(text).unwrap();
        assert!((p.n_th - 23.5).abs() < 0.1);
        assert_eq!(p.kappa_ext_fraction, 1.0);
        let missing = r#"{"omega_m": 9.22e6, "gamma": 120, "kappa": 1.06e6, "g0": 39}"#;
        assert!(SystemParams::from_json(missing).is_err());
    }

    #[test]
    fn bundled_files_parse() {
        let membrane = SystemParams::from_json(include_str!("../configs/membrane_params.json")).unwrap();
        assert!((membrane.omega_m - SystemParams::membrane().omega_m).abs() < 1e-6);
        assert_eq!(membrane.probe_cooperativity, 2.2);
        let desk = SystemParams::from_json(include_str!("../configs/desk_params.json")).unwrap();
        assert!(validate_system(&desk).is_empty());
    }

    #[test]
    fn bundled_sim_config_is_default() {
        let cfg: SimConfig = serde_json::from_str(include_str!("../configs/desk_sim.json")).unwrap();
        assert_eq!(cfg, SimConfig::default());
    }
}
