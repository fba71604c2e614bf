use std::f64::consts::TAU;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use noisecool::analytics::{self, Regime};
use noisecool::dynamics::{self, Drive};
use noisecool::harness::{self, BathHeating, Format, SweepOptions, SweepTable};
use noisecool::noisegen::{self, ComplexEnvelope, SpectrumEstimate, Window};
use noisecool::params::{hz, NoiseDrive, SimConfig, SystemParams};
use noisecool::spectra::{self, LineFit};
use noisecool::{Error, Result};

#[derive(Parser)]
#[command(name = "noisecool", version, about = "Cooling a mechanical oscillator with band-limited noise")]
struct Cli {
    /// System parameter file (JSON, frequencies in Hz). Defaults to the desk set.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Simulation config file (JSON).
    #[arg(long, global = true)]
    cfg: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output path; stdout when absent (required for binary output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for sweeps.
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
    Svg,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
            OutFormat::Svg => Format::SvgPlot,
        }
    }
}

#[derive(Args, Clone, Copy)]
#[group(required = true, multiple = false)]
struct FluxArg {
    /// Incoming photon flux, photons/s.
    #[arg(long)]
    flux: Option<f64>,
    /// Target intracavity photon number; the flux is derived from it.
    #[arg(long)]
    n_bar0: Option<f64>,
}

impl FluxArg {
    fn resolve(&self, p: &SystemParams) -> f64 {
        match (self.flux, self.n_bar0) {
            (Some(f), _) => f,
            (None, Some(n)) => analytics::flux_for_photons(n, &p.renormalize_for_probe()),
            (None, None) => unreachable!("clap enforces one of --flux/--n-bar0"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form damping, occupancy and regime for one operating point.
    Predict {
        #[command(flatten)]
        flux: FluxArg,
        /// Noise bandwidth, Hz.
        #[arg(long)]
        sigma_hz: f64,
        /// Box centre offset from the red sideband, Hz.
        #[arg(long, default_value_t = 0.0)]
        center_hz: f64,
    },
    /// Synthesize a box-noise envelope into a binary file.
    GenNoise {
        #[arg(long)]
        flux: f64,
        #[arg(long)]
        sigma_hz: f64,
        #[arg(long, default_value_t = 0.0)]
        center_hz: f64,
        /// Duration, s.
        #[arg(long)]
        duration: f64,
        /// Sample interval, s.
        #[arg(long)]
        dt: f64,
    },
    /// Welch PSD of a stored envelope as CSV (freq_hz, psd_per_hz).
    PsdCheck {
        envelope: PathBuf,
        #[arg(long, default_value_t = 4096)]
        segment: usize,
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
        #[arg(long, default_value = "hann")]
        window: String,
    },
    /// Integrate one trajectory (CSV) or an ensemble (JSON).
    Simulate {
        #[command(flatten)]
        flux: FluxArg,
        /// Noise bandwidth, Hz (ignored with --coherent).
        #[arg(long, default_value_t = 0.0)]
        sigma_hz: f64,
        #[arg(long, default_value_t = 0.0)]
        center_hz: f64,
        /// Drive with a constant tone at the red sideband instead of noise.
        #[arg(long)]
        coherent: bool,
        /// Run K trajectories and report the ensemble summary.
        #[arg(long)]
        ensemble: Option<usize>,
    },
    /// Sweep the flux at fixed bandwidth.
    SweepPower {
        #[arg(long)]
        sigma_hz: f64,
        #[arg(long, default_value_t = 0.0)]
        center_hz: f64,
        /// Explicit intracavity photon numbers (comma separated).
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["flux_from", "flux_to"])]
        n_bar0: Option<Vec<f64>>,
        /// Log grid start, photons/s.
        #[arg(long, requires = "flux_to")]
        flux_from: Option<f64>,
        #[arg(long, requires = "flux_from")]
        flux_to: Option<f64>,
        #[arg(long, default_value_t = 8)]
        points: usize,
        #[command(flatten)]
        sweep: SweepFlags,
    },
    /// Sweep the bandwidth at fixed flux.
    SweepBandwidth {
        #[command(flatten)]
        flux: FluxArg,
        #[arg(long, default_value_t = 0.0)]
        center_hz: f64,
        /// Log grid start, Hz.
        #[arg(long)]
        sigma_from_hz: f64,
        #[arg(long)]
        sigma_to_hz: f64,
        #[arg(long, default_value_t = 8)]
        points: usize,
        #[command(flatten)]
        sweep: SweepFlags,
    },
    /// Fit a spectrum CSV (freq_hz, psd_per_hz) and report the line.
    FitSpectrum { spectrum: PathBuf },
}

#[derive(Args, Clone)]
struct SweepFlags {
    /// Analytic columns only.
    #[arg(long)]
    no_sim: bool,
    /// Use the config as given instead of adapting it per row.
    #[arg(long)]
    no_adapt: bool,
    /// JSON bath heating map {"points": [[flux, n_th], ...]}.
    #[arg(long)]
    heating: Option<PathBuf>,
}

impl SweepFlags {
    fn options(&self) -> Result<SweepOptions> {
        Ok(SweepOptions {
            simulate: !self.no_sim,
            adapt: !self.no_adapt,
            heating: self.heating.as_ref().map(BathHeating::load).transpose()?,
            ..SweepOptions::default()
        })
    }
}

#[derive(Serialize)]
struct PredictReport {
    flux: f64,
    n_bar0: f64,
    sigma_hz: f64,
    center_hz: f64,
    regime: Regime,
    gamma_opt_hz: f64,
    gamma_eff_hz: f64,
    n_m: f64,
    gamma_eff_quantum_noise_hz: f64,
    n_m_quantum_noise: f64,
    gamma_eff_adiabatic_hz: f64,
    n_m_adiabatic: f64,
}

#[derive(Serialize)]
struct FitReport {
    center_hz: f64,
    fwhm_hz: f64,
    area: f64,
    baseline: f64,
    residual_norm: f64,
    converged: bool,
    fwhm_numeric_hz: Option<f64>,
    occupancy: Option<f64>,
    line: LineFit,
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(out_name(out), e))
}

fn out_name(out: &Option<PathBuf>) -> &Path {
    out.as_deref().unwrap_or(Path::new("<stdout>"))
}

fn emit_table(table: &SweepTable, cli: &Cli) -> Result<()> {
    match &cli.out {
        Some(path) => harness::emit(table, cli.format.into(), path),
        None => {
            if table.rows.is_empty() {
                return Err(Error::EmptyTable);
            }
            let mut w = std::io::stdout().lock();
            match cli.format {
                OutFormat::Csv => harness::write_csv(&table.rows, &mut w),
                OutFormat::Json => {
                    serde_json::to_writer_pretty(&mut w, table)?;
                    writeln!(w).map_err(|e| Error::io("<stdout>", e))
                }
                OutFormat::Svg => w
                    .write_all(harness::render_svg(table).as_bytes())
                    .map_err(|e| Error::io("<stdout>", e)),
            }
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let params = match &cli.params {
        Some(path) => SystemParams::load(path)?,
        None => SystemParams::desk(),
    };
    let cfg = match &cli.cfg {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };

    match &cli.command {
        Command::Predict {
            flux,
            sigma_hz,
            center_hz,
        } => {
            let drive = NoiseDrive {
                flux: flux.resolve(&params),
                sigma: hz(*sigma_hz),
                center_detuning: hz(*center_hz),
                seed: cli.seed,
            };
            let pr = analytics::predict(&params, &drive)?;
            write_json(
                &cli.out,
                &PredictReport {
                    flux: drive.flux,
                    n_bar0: pr.n_bar0,
                    sigma_hz: *sigma_hz,
                    center_hz: *center_hz,
                    regime: pr.regime,
                    gamma_opt_hz: pr.gamma_opt / TAU,
                    gamma_eff_hz: pr.gamma_eff / TAU,
                    n_m: pr.n_m,
                    gamma_eff_quantum_noise_hz: pr.gamma_eff_quantum_noise / TAU,
                    n_m_quantum_noise: pr.n_m_quantum_noise,
                    gamma_eff_adiabatic_hz: pr.gamma_eff_adiabatic / TAU,
                    n_m_adiabatic: pr.n_m_adiabatic,
                },
            )?;
        }
        Command::GenNoise {
            flux,
            sigma_hz,
            center_hz,
            duration,
            dt,
        } => {
            let Some(path) = &cli.out else {
                return Err(Error::InvalidArgument("gen-noise needs --out".into()));
            };
            let drive = NoiseDrive {
                flux: *flux,
                sigma: hz(*sigma_hz),
                center_detuning: hz(*center_hz),
                seed: cli.seed,
            };
            noisegen::synth_box_noise(&drive, *duration, *dt)?.save(path)?;
        }
        Command::PsdCheck {
            envelope,
            segment,
            overlap,
            window,
        } => {
            let env = ComplexEnvelope::load(envelope)?;
            let window: Window = window.parse()?;
            let spec = noisegen::psd_welch(&env, (*segment).min(env.samples.len()), *overlap, window)?;
            spec.write_csv(open_out(&cli.out)?)?;
        }
        Command::Simulate {
            flux,
            sigma_hz,
            center_hz,
            coherent,
            ensemble,
        } => {
            let flux = flux.resolve(&params);
            let drive = if *coherent {
                Drive::Coherent { flux }
            } else {
                Drive::Noise(NoiseDrive {
                    flux,
                    sigma: hz(*sigma_hz),
                    center_detuning: hz(*center_hz),
                    seed: 0,
                })
            };
            match ensemble {
                Some(k) => {
                    let cfg = SimConfig { n_traj: *k, ..cfg };
                    let result = dynamics::run_ensemble(&params, &drive, &cfg, cli.seed, None)?;
                    write_json(&cli.out, &result)?;
                }
                None => {
                    let traj = dynamics::run_trajectory(&params, &drive, &cfg, cli.seed)?;
                    traj.write_csv(open_out(&cli.out)?)?;
                }
            }
        }
        Command::SweepPower {
            sigma_hz,
            center_hz,
            n_bar0,
            flux_from,
            flux_to,
            points,
            sweep,
        } => {
            let grid = match (n_bar0, flux_from, flux_to) {
                (Some(ns), _, _) => {
                    let p = params.renormalize_for_probe();
                    ns.iter().map(|&n| analytics::flux_for_photons(n, &p)).collect()
                }
                (None, Some(a), Some(b)) => harness::log_grid(*a, *b, *points),
                _ => return Err(Error::InvalidArgument("give --n-bar0 or --flux-from/--flux-to".into())),
            };
            let drive = NoiseDrive {
                flux: 0.0,
                sigma: hz(*sigma_hz),
                center_detuning: hz(*center_hz),
                seed: 0,
            };
            let table = harness::sweep_power(&params, &drive, &grid, &cfg, cli.seed, &sweep.options()?)?;
            emit_table(&table, cli)?;
            return Ok(table.all_succeeded());
        }
        Command::SweepBandwidth {
            flux,
            center_hz,
            sigma_from_hz,
            sigma_to_hz,
            points,
            sweep,
        } => {
            let grid = harness::log_grid(hz(*sigma_from_hz), hz(*sigma_to_hz), *points);
            let drive = NoiseDrive {
                flux: flux.resolve(&params),
                sigma: 1.0,
                center_detuning: hz(*center_hz),
                seed: 0,
            };
            let table = harness::sweep_bandwidth(&params, &drive, &grid, &cfg, cli.seed, &sweep.options()?)?;
            emit_table(&table, cli)?;
            return Ok(table.all_succeeded());
        }
        Command::FitSpectrum { spectrum } => {
            let file = std::fs::File::open(spectrum).map_err(|e| Error::io(spectrum, e))?;
            let spec = SpectrumEstimate::read_csv(std::io::BufReader::new(file))?;
            let line = spectra::fit_lorentzian(&spec, None);
            write_json(
                &cli.out,
                &FitReport {
                    center_hz: line.center / TAU,
                    fwhm_hz: line.fwhm / TAU,
                    area: line.area,
                    baseline: line.baseline,
                    residual_norm: line.residual_norm,
                    converged: line.converged,
                    fwhm_numeric_hz: spectra::fwhm_numeric(&spec).ok().map(|w| w / TAU),
                    occupancy: spectra::occupancy_from_spectrum(&spec, &line).ok(),
                    line,
                },
            )?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some sweep rows failed; see the error column");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}
