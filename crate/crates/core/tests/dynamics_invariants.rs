use noisecool::analytics;
use noisecool::dynamics::{self, Drive, SpectrumSettings};
use noisecool::noisegen::Window;
use noisecool::params::{NoiseDrive, SimConfig, SystemParams};
use noisecool::spectra;

fn qn_point() -> (SystemParams, NoiseDrive) {
    let p = SystemParams::desk();
    let flux = analytics::flux_for_photons(1e4, &p);
    (p, NoiseDrive::new(flux, 2.0 * p.kappa))
}

fn cfg(dt: f64) -> SimConfig {
    SimConfig {
        dt,
        t_total: 0.03,
        t_burn: 1e-3,
        n_traj: 48,
        sample_stride: 20,
        repeat_period: None,
    }
}

#[test]
fn quantum_noise_convergence_bracketing_and_parseval() {
    let (p, drive) = qn_point();
    let pred = analytics::predict(&p, &drive).unwrap();
    assert!(drive.sigma / pred.gamma_opt >= 10.0);
    let settings = SpectrumSettings {
        segment_length: 1024,
        overlap: 0.5,
        window: Window::Hann,
    };
    let r = dynamics::run_ensemble(&p, &Drive::Noise(drive), &cfg(1e-7), 21, Some(settings)).unwrap();
    let err = (r.n_m_mean - pred.n_m).abs();
    assert!(err <= (0.10 * pred.n_m).max(3.0 * r.n_m_stderr), "{} vs {}", r.n_m_mean, pred.n_m);

    assert!(r.n_m_mean >= pred.n_m_quantum_noise - 3.0 * r.n_m_stderr);
    assert!(r.n_m_mean <= p.n_th + 3.0 * r.n_m_stderr);

    let spec = r.spectrum.unwrap();
    let fit = spectra::fit_lorentzian(&spec, None);
    assert!(fit.converged);
    let spectral = spectra::occupancy_from_spectrum(&spec, &fit).unwrap();
    let combined = 2f64.sqrt() * r.n_m_stderr;
    assert!((spectral - r.n_m_mean).abs() <= 3.0 * combined, "{spectral} vs {}", r.n_m_mean);

    let photons = analytics::intracavity_photons(drive.flux, &p);
    assert!(r.gamma_opt_empirical > 0.0 && r.mean_photons > 0.5 * photons);
}

#[test]
fn halving_the_step_changes_little() {
    let (p, drive) = qn_point();
    let drive = Drive::Noise(drive);
    let coarse = dynamics::run_ensemble(&p, &drive, &cfg(1e-7), 22, None).unwrap();
    let fine = dynamics::run_ensemble(&p, &drive, &cfg(5e-8), 22, None).unwrap();
    let change = (fine.n_m_mean / coarse.n_m_mean - 1.0).abs();
    assert!(change < 0.02, "{} vs {}", coarse.n_m_mean, fine.n_m_mean);
}

#[test]
fn ensemble_is_bit_reproducible() {
    let (p, drive) = qn_point();
    let c = SimConfig {
        t_total: 5e-3,
        n_traj: 4,
        ..cfg(1e-7)
    };
    let a = dynamics::run_ensemble(&p, &Drive::Noise(drive), &c, 5, None).unwrap();
    let b = dynamics::run_ensemble(&p, &Drive::Noise(drive), &c, 5, None).unwrap();
    assert_eq!(a, b);
}
