//! Acceptance criteria, one test per criterion. Each prints a single
//! PASS/FAIL line with the measured values before asserting.

use std::f64::consts::{PI, TAU};

use noisecool::analytics::{self, BoxDrivePsd, DriveFilter};
use noisecool::dynamics::{self, Drive, SpectrumSettings};
use noisecool::harness::{self, SweepOptions};
use noisecool::noisegen::{self, SpectrumEstimate, Window};
use noisecool::params::{hz, to_hz, NoiseDrive, SimConfig, SystemParams};
use noisecool::spectra;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {verdict} [{name}] {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn criterion_01_bandwidth_factor_limits() {
    let kappa = 1.0;
    let narrow = analytics::bandwidth_factor(1e-3, kappa);
    let equal = analytics::bandwidth_factor(1.0, kappa);
    let wide = analytics::bandwidth_factor(1e3, kappa);
    let wide_limit = PI * kappa / (2.0 * 1e3);
    let pass = (narrow - 1.0).abs() < 1e-6 && (equal - PI / 4.0).abs() < 1e-12 && rel(wide, wide_limit) < 1e-3;
    report(
        1,
        "damping bandwidth factor limits",
        pass,
        &format!(
            "sigma/kappa=1e-3: {narrow:.9}; 1: {equal:.15} (pi/4 {:.15}); 1e3: {wide:.6e} vs {wide_limit:.6e}",
            PI / 4.0
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_membrane_operating_point() {
    let p = SystemParams::membrane();
    let flux = analytics::flux_for_photons(1.53e6, &p.renormalize_for_probe());
    let drive = NoiseDrive::new(flux, hz(200e3));
    let pred = analytics::predict(&p, &drive).unwrap();
    let psd = BoxDrivePsd::new(&drive, &p, DriveFilter::Exact, false);
    let quadrature = analytics::gamma_opt_from_psd(&psd, &p);
    let heated = SystemParams { n_th: 60.0, ..p };
    let n_m = analytics::predict(&heated, &drive).unwrap().n_m;

    let g_hz = to_hz(pred.gamma_opt);
    let pass = rel(g_hz, 8.7e3) < 0.05 && rel(quadrature, pred.gamma_opt) < 0.05 && (0.70..=0.90).contains(&n_m);
    report(
        2,
        "membrane operating point",
        pass,
        &format!(
            "gamma_opt/2pi = {g_hz:.1} Hz (target 8.7 kHz +-5%), quadrature {:.1} Hz, n_m(n_th=60) = {n_m:.3} (target [0.70, 0.90])",
            to_hz(quadrature)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_thermal_equilibrium() {
    let p = SystemParams {
        g0: 0.0,
        ..SystemParams::desk()
    };
    let cfg = SimConfig {
        dt: 1.5e-7,
        t_total: 0.1,
        t_burn: 0.0,
        n_traj: 100,
        sample_stride: 1,
        repeat_period: None,
    };
    let r = dynamics::run_ensemble(&p, &Drive::Coherent { flux: 0.0 }, &cfg, 3, None).unwrap();
    let pass = rel(r.n_m_mean, p.n_th) < 0.05;
    report(
        3,
        "thermal equilibrium",
        pass,
        &format!(
            "n_m = {:.3} +- {:.3} over {} trajectories (target {} +-5%)",
            r.n_m_mean, r.n_m_stderr, r.n_traj, p.n_th
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_coherent_drive() {
    let p = SystemParams::desk();
    let target = 50.0 * p.gamma;
    // Cooperativity 50: 4 G^2 / kappa = 50 gamma with G^2 = g0^2 n.
    let n_bar = target * p.kappa / (4.0 * p.g0 * p.g0);
    let flux = analytics::flux_for_photons(n_bar, &p);
    let cfg = SimConfig {
        dt: 1e-7,
        t_total: 0.02,
        t_burn: 1e-3,
        n_traj: 64,
        sample_stride: 20,
        repeat_period: None,
    };
    let settings = SpectrumSettings {
        segment_length: 1024,
        overlap: 0.5,
        window: Window::Hann,
    };
    let r = dynamics::run_ensemble(&p, &Drive::Coherent { flux }, &cfg, 4, Some(settings)).unwrap();
    let coherent = analytics::coherent_cooling(p.g0 * n_bar.sqrt(), &p);
    let spec = r.spectrum.as_ref().unwrap();
    let fit = spectra::fit_lorentzian(spec, None);
    let width = p.gamma + coherent.gamma_opt;

    let occ_ok = rel(r.n_m_mean, coherent.n_m) < 0.05;
    let fit_ok = fit.converged && rel(fit.fwhm, width) < 0.10;
    report(
        4,
        "coherent-drive equivalence",
        occ_ok && fit_ok,
        &format!(
            "n_m = {:.4} +- {:.4} vs {:.4} ({:+.1}%, tol 5%); FWHM/2pi = {:.1} Hz vs {:.1} Hz ({:+.1}%, tol 10%)",
            r.n_m_mean,
            r.n_m_stderr,
            coherent.n_m,
            100.0 * (r.n_m_mean / coherent.n_m - 1.0),
            to_hz(fit.fwhm),
            to_hz(width),
            100.0 * (fit.fwhm / width - 1.0)
        ),
    );
    assert!(occ_ok && fit_ok);
}

fn desk_sweep_cfg() -> SimConfig {
    SimConfig {
        dt: 1e-7,
        t_total: 0.05,
        t_burn: 1e-3,
        n_traj: 32,
        sample_stride: 20,
        repeat_period: None,
    }
}

#[test]
fn criterion_05_quantum_noise_regime() {
    let p = SystemParams::desk();
    let drive = NoiseDrive::new(0.0, 0.2 * p.kappa);
    let flux = analytics::flux_for_photons(1e4, &p);
    let t = harness::sweep_power(&p, &drive, &[flux], &desk_sweep_cfg(), 5, &SweepOptions::default()).unwrap();
    let row = &t.rows[0];
    let n_sim = row.n_m_sim.unwrap();
    let g_sim = row.gamma_eff_sim.unwrap();
    let pass = row.succeeded() && rel(n_sim, row.n_m_pred_qn) < 0.10 && rel(g_sim, row.gamma_eff_pred_qn) < 0.10;
    report(
        5,
        "quantum-noise regime",
        pass,
        &format!(
            "gamma_opt/gamma = {:.1}, sigma/gamma_opt = {:.2} ({:?}); n_m = {:.4} +- {:.4} vs {:.4} ({:+.1}%, tol 10%); gamma_eff/2pi = {:.1} Hz ({:?}) vs {:.1} Hz ({:+.1}%, tol 10%)",
            row.gamma_opt_pred / p.gamma,
            row.sigma / row.gamma_opt_pred,
            row.regime,
            n_sim,
            row.n_m_stderr.unwrap(),
            row.n_m_pred_qn,
            100.0 * (n_sim / row.n_m_pred_qn - 1.0),
            to_hz(g_sim),
            row.linewidth_source.unwrap(),
            to_hz(row.gamma_eff_pred_qn),
            100.0 * (g_sim / row.gamma_eff_pred_qn - 1.0)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_large_bandwidth_suppression() {
    let p = SystemParams::desk();
    let flux = analytics::flux_for_photons(1e4, &p);
    let drive = NoiseDrive::new(flux, p.kappa);
    let sigmas = [0.2 * p.kappa, 2.0 * p.kappa, 10.0 * p.kappa];
    let cfg = SimConfig {
        dt: 0.9e-7,
        ..desk_sweep_cfg()
    };
    let t = harness::sweep_bandwidth(&p, &drive, &sigmas, &cfg, 6, &SweepOptions::default()).unwrap();
    let optical = |g: f64| g - p.gamma;
    let base = &t.rows[0];
    let mut pass = t.all_succeeded();
    let mut parts = Vec::new();
    for row in &t.rows[1..] {
        let sim = optical(row.gamma_eff_sim.unwrap()) / optical(base.gamma_eff_sim.unwrap());
        let factor =
            analytics::bandwidth_factor(row.sigma, p.kappa) / analytics::bandwidth_factor(base.sigma, p.kappa);
        pass &= rel(sim, factor) < 0.10;
        parts.push(format!(
            "sigma={:.0}kappa ({:?}): ratio {sim:.4} vs {factor:.4} ({:+.1}%)",
            row.sigma / p.kappa,
            row.regime,
            100.0 * (sim / factor - 1.0)
        ));
    }
    let widths: Vec<String> = t
        .rows
        .iter()
        .map(|r| {
            format!(
                "{:.1} vs {:.1}",
                to_hz(r.gamma_eff_sim.unwrap_or(f64::NAN)),
                to_hz(r.gamma_eff_pred_qn)
            )
        })
        .collect();
    report(
        6,
        "large-bandwidth suppression",
        pass,
        &format!(
            "{}; gamma_eff/2pi sim vs quantum-noise prediction = [{}] Hz (tol 10%)",
            parts.join("; "),
            widths.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_adiabatic_regime() {
    let p = SystemParams::desk();
    let sigma = p.gamma;
    let unit = analytics::gamma_opt_box(1.0, sigma, &p).unwrap();
    let gamma_opt = 50.0 * p.gamma;
    let drive = NoiseDrive::new(gamma_opt / unit, sigma);
    let cfg = SimConfig {
        dt: 1e-7,
        t_total: 0.5,
        t_burn: 5e-3,
        n_traj: 64,
        sample_stride: 1000,
        repeat_period: None,
    };
    let oracle = analytics::adiabatic_occupancy(gamma_opt, &p).unwrap().exact;
    let oracle_width = analytics::adiabatic_linewidth(gamma_opt, &p).unwrap().fwhm_numeric;
    let eq1 = analytics::phonon_number(gamma_opt, &p);
    let settings = SpectrumSettings {
        segment_length: 512,
        overlap: 0.5,
        window: Window::Hann,
    };
    let r = dynamics::run_ensemble(&p, &Drive::Noise(drive), &cfg, 7, Some(settings)).unwrap();
    let width = spectra::fwhm_numeric(r.spectrum.as_ref().unwrap()).unwrap();

    let occ_ok = rel(r.n_m_mean, oracle) < 0.15;
    let gap_ok = r.n_m_mean >= 2.0 * eq1;
    let width_ok = rel(width, oracle_width) < 0.25;
    report(
        7,
        "adiabatic regime",
        occ_ok && gap_ok && width_ok,
        &format!(
            "n_m = {:.4} +- {:.4} vs mixture {:.4} ({:+.1}%, tol 15%); quantum-noise value {:.4}, ratio {:.2} (need >= 2); FWHM/2pi = {:.1} Hz vs mixture {:.1} Hz ({:+.1}%, tol 25%)",
            r.n_m_mean,
            r.n_m_stderr,
            oracle,
            100.0 * (r.n_m_mean / oracle - 1.0),
            eq1,
            r.n_m_mean / eq1,
            to_hz(width),
            to_hz(oracle_width),
            100.0 * (width / oracle_width - 1.0)
        ),
    );
    assert!(occ_ok && gap_ok && width_ok);
}

#[test]
fn criterion_08_adiabatic_asymptotes() {
    let p = SystemParams::desk();
    let at = |r: f64| analytics::adiabatic_occupancy(r * p.gamma, &p).unwrap();
    let a3 = at(1e3);
    let a5 = at(1e5);
    let lw = analytics::adiabatic_linewidth(1e4 * p.gamma, &p).unwrap();
    let occ3 = rel(a3.asymptote, a3.exact);
    let occ5 = rel(a5.asymptote, a5.exact);
    let lw_dev = rel(lw.asymptote, lw.fwhm_numeric);
    let pass = occ3 < 0.01 && occ5 < 1e-3 && lw_dev < 0.25;
    report(
        8,
        "adiabatic asymptotes",
        pass,
        &format!(
            "occupancy asymptote error {:.3}% at 1e3 (tol 1%), {:.4}% at 1e5 (tol 0.1%); linewidth asymptote {:.3} gamma vs mixture FWHM {:.3} gamma ({:+.0}%, tol 25%)",
            100.0 * occ3,
            100.0 * occ5,
            lw.asymptote / p.gamma,
            lw.fwhm_numeric / p.gamma,
            100.0 * (lw.asymptote / lw.fwhm_numeric - 1.0)
        ),
    );
    assert!(pass);
}

fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

#[test]
fn criterion_09_noise_synthesis() {
    // Flatness and plateau: Welch with short Hann segments, averaged over seeds.
    let dt = 1.0;
    let sigma = 0.099 * TAU;
    let flux = 5.0;
    let parts: Vec<SpectrumEstimate> = (0..8)
        .map(|s| {
            let env = noisegen::synth_box_noise(&NoiseDrive::new(flux, sigma).with_seed(90 + s), (1 << 22) as f64, dt)
                .unwrap();
            noisegen::psd_welch(&env, 512, 0.5, Window::Hann).unwrap()
        })
        .collect();
    let spec = SpectrumEstimate::average(&parts).unwrap();
    let plateau = TAU * flux / sigma;
    let central: Vec<f64> = spec
        .freqs
        .iter()
        .zip(&spec.psd)
        .filter(|(w, _)| w.abs() <= 0.4 * sigma)
        .map(|(_, s)| *s)
        .collect();
    let level = central.iter().sum::<f64>() / central.len() as f64;
    let flat = central.iter().map(|s| (s / level - 1.0).abs()).fold(0.0, f64::max);

    // Out-of-band rejection: long segments so window leakage is negligible.
    let env = noisegen::synth_box_noise(&NoiseDrive::new(flux, sigma).with_seed(99), (1 << 22) as f64, dt).unwrap();
    let long = noisegen::psd_welch(&env, 8192, 0.5, Window::Hann).unwrap();
    let outside = long
        .freqs
        .iter()
        .zip(&long.psd)
        .filter(|(w, _)| w.abs() > 0.6 * sigma)
        .map(|(_, s)| *s)
        .fold(0.0, f64::max);
    let rejection_db = 10.0 * (level / outside.max(f64::MIN_POSITIVE)).log10();

    // Mean flux over 20 seeds.
    let drive = NoiseDrive::new(1e6, hz(200e3));
    let powers: Vec<f64> = (0..20)
        .map(|s| {
            noisegen::synth_box_noise(&drive.with_seed(s), 10e-3, 2e-7)
                .unwrap()
                .mean_power()
        })
        .collect();
    let mean_flux = powers.iter().sum::<f64>() / powers.len() as f64;

    // Gaussianity and phase uniformity on 2^20 samples. The band is 1/16 of
    // the sampling rate, so every 16th sample is independent.
    let narrow = NoiseDrive::new(1.0, TAU / 16.0).with_seed(123);
    let env = noisegen::synth_box_noise(&narrow, (1 << 24) as f64, 1.0).unwrap();
    let picked: Vec<_> = env.samples.iter().step_by(16).copied().collect();
    let re: Vec<f64> = picked.iter().map(|z| z.re).collect();
    let im: Vec<f64> = picked.iter().map(|z| z.im).collect();
    let (k_re, k_im) = (excess_kurtosis(&re), excess_kurtosis(&im));
    const BINS: usize = 36;
    let mut hist = [0usize; BINS];
    for z in &picked {
        let u = (z.arg() + PI) / TAU;
        hist[((u * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let expect = picked.len() as f64 / BINS as f64;
    let chi2: f64 = hist.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    // Upper 1% point of chi-square with 35 degrees of freedom.
    const CHI2_35_99: f64 = 57.342;

    let checks = [
        flat <= 0.01,
        rejection_db >= 60.0,
        rel(level, plateau) < 0.03,
        rel(mean_flux, 1e6) < 0.03,
        k_re.abs() < 0.1 && k_im.abs() < 0.1,
        chi2 < CHI2_35_99,
    ];
    let pass = checks.iter().all(|&c| c);
    report(
        9,
        "noise synthesis",
        pass,
        &format!(
            "flatness {:.2}% (tol 1%); rejection {rejection_db:.0} dB (need 60); plateau {:+.2}% (tol 3%); mean flux {:+.2}% (tol 3%); excess kurtosis re {k_re:+.4} im {k_im:+.4} (tol 0.1) over {} samples; phase chi2 {chi2:.1} (1% point {CHI2_35_99})",
            100.0 * flat,
            100.0 * (level / plateau - 1.0),
            100.0 * (mean_flux / 1e6 - 1.0),
            picked.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_sweep_determinism() {
    let p = SystemParams::desk();
    let drive = NoiseDrive::new(0.0, 0.2 * p.kappa);
    let grid = harness::log_grid(
        analytics::flux_for_photons(1e3, &p),
        analytics::flux_for_photons(1e4, &p),
        3,
    );
    let cfg = SimConfig {
        t_total: 0.01,
        n_traj: 4,
        ..SimConfig::default()
    };
    let options = SweepOptions::default();
    let a = harness::sweep_power(&p, &drive, &grid, &cfg, 10, &options).unwrap();
    let b = harness::sweep_power(&p, &drive, &grid, &cfg, 10, &options).unwrap();
    let ja = serde_json::to_string(&a).unwrap();
    let jb = serde_json::to_string(&b).unwrap();
    let pass = a == b && ja == jb && a.rows.iter().all(|r| r.n_m_sim.is_some());
    report(
        10,
        "sweep determinism",
        pass,
        &format!("{} rows, serialized tables identical: {}", a.rows.len(), ja == jb),
    );
    assert!(pass);
}
