//! Power and bandwidth sweeps with analytic overlays, and their CSV, JSON
//! and SVG artifacts.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, Regime};
use crate::dynamics::{self, Drive, SpectrumSettings};
use crate::error::{invalid, Error, Result};
use crate::noisegen::Window;
use crate::params::{NoiseDrive, SimConfig, SystemParams};
use crate::spectra;
use crate::stats;

/// Piecewise-linear bath occupancy as a function of flux, clamped at the
/// ends. Models technical heating of the mechanical bath by the drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathHeating {
    /// `(flux, n_th)` pairs, ascending in flux.
    pub points: Vec<(f64, f64)>,
}

impl BathHeating {
    pub fn n_th_at(&self, flux: f64) -> f64 {
        let pts = &self.points;
        match pts.iter().position(|&(f, _)| f > flux) {
            None => pts.last().map_or(f64::NAN, |p| p.1),
            Some(0) => pts[0].1,
            Some(i) => {
                let (f0, n0) = pts[i - 1];
                let (f1, n1) = pts[i];
                n0 + (n1 - n0) * (flux - f0) / (f1 - f0)
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let h: BathHeating = serde_json::from_str(&text)?;
        h.check()?;
        Ok(h)
    }

    fn check(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(invalid("heating map has no points"));
        }
        if self.points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(invalid("heating map fluxes must be strictly ascending"));
        }
        if self.points.iter().any(|p| !(p.1 >= 0.0)) {
            return Err(invalid("heating map occupancies must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// Run ensembles; when false only the analytic columns are filled.
    pub simulate: bool,
    /// Adapt dt, duration and spectral resolution to each row.
    pub adapt: bool,
    pub heating: Option<BathHeating>,
    /// A fit whose residual exceeds this multiple of the sweep median is
    /// replaced by the numeric FWHM.
    pub residual_factor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            simulate: true,
            adapt: true,
            heating: None,
            residual_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinewidthSource {
    Fit,
    Fwhm,
}

/// One operating point. Rates are in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub flux: f64,
    pub n_bar0: f64,
    pub sigma: f64,
    /// Bath occupancy used for this row (after any heating map).
    pub n_th: f64,
    pub regime: Regime,
    pub gamma_opt_pred: f64,
    pub gamma_eff_pred: f64,
    pub gamma_eff_pred_qn: f64,
    pub gamma_eff_pred_adiabatic: f64,
    pub n_m_pred: f64,
    pub n_m_pred_qn: f64,
    pub n_m_pred_adiabatic: f64,
    pub seed: u64,
    pub n_m_sim: Option<f64>,
    pub n_m_stderr: Option<f64>,
    /// Occupancy from the spectral area.
    pub n_m_spectral: Option<f64>,
    pub gamma_eff_sim: Option<f64>,
    pub gamma_eff_fit: Option<f64>,
    pub gamma_eff_fwhm: Option<f64>,
    pub fit_residual: Option<f64>,
    pub linewidth_source: Option<LinewidthSource>,
    /// Fit and numeric FWHM differ by more than 10%.
    pub linewidth_disagree: Option<bool>,
    pub dt: Option<f64>,
    pub t_total: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Power,
    Bandwidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
    /// Bandwidth sweeps: sigma of the smallest predicted occupancy.
    pub argmin_sigma_pred: Option<f64>,
    /// Bandwidth sweeps: sigma of the smallest simulated occupancy.
    pub argmin_sigma_sim: Option<f64>,
}

impl SweepTable {
    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(SweepRow::succeeded)
    }
}

/// `n` points from `start` to `stop`, evenly spaced in log.
pub fn log_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => {
            let (a, b) = (start.ln(), stop.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Simulation settings for one row: step small enough for the band, a
/// spectral resolution ~1/10 of the expected linewidth, and a run long
/// enough for several segments and many noise coherence cells.
pub fn adapt_config(
    base: &SimConfig,
    drive: &NoiseDrive,
    pred: &analytics::Prediction,
) -> (SimConfig, SpectrumSettings) {
    let reach = drive.center_detuning.abs() + drive.sigma;
    let dt = base.dt.min(0.9 * TAU / (10.0 * reach));
    let linewidth = match pred.regime {
        Regime::Crossover => pred.gamma_eff_quantum_noise.min(pred.gamma_eff_adiabatic),
        _ => pred.gamma_eff,
    };
    let stride = ((PI / (20.0 * linewidth * dt)).floor() as usize).max(1);
    let dt_sample = stride as f64 * dt;
    let segment_time = 20.0 * PI / linewidth;
    let segment_length = ((segment_time / dt_sample).ceil() as usize).next_power_of_two().max(256);
    let t_burn = base.t_burn.max(5.0 / linewidth);
    let t_total = base
        .t_total
        .max(t_burn + 8.0 * segment_length as f64 * dt_sample)
        .max(20.0 * TAU / drive.sigma);
    (
        SimConfig {
            dt,
            t_total,
            t_burn,
            sample_stride: stride,
            ..*base
        },
        SpectrumSettings {
            segment_length,
            overlap: 0.5,
            window: Window::Hann,
        },
    )
}

/// Spectrum settings for an unadapted config: the longest power-of-two
/// segment giving at least eight segments.
fn fixed_spectrum(cfg: &SimConfig) -> SpectrumSettings {
    let samples = (cfg.n_steps() - cfg.n_burn()) / cfg.sample_stride.max(1);
    let mut segment_length = 256;
    while segment_length * 2 * 8 <= samples {
        segment_length *= 2;
    }
    SpectrumSettings {
        segment_length,
        overlap: 0.5,
        window: Window::Hann,
    }
}

struct Point {
    drive: NoiseDrive,
    params: SystemParams,
}

fn analytic_row(index: usize, point: &Point, seed: u64) -> Result<(SweepRow, analytics::Prediction)> {
    let pred = analytics::predict(&point.params, &point.drive)?;
    let row = SweepRow {
        index,
        flux: point.drive.flux,
        n_bar0: pred.n_bar0,
        sigma: point.drive.sigma,
        n_th: point.params.n_th,
        regime: pred.regime,
        gamma_opt_pred: pred.gamma_opt,
        gamma_eff_pred: pred.gamma_eff,
        gamma_eff_pred_qn: pred.gamma_eff_quantum_noise,
        gamma_eff_pred_adiabatic: pred.gamma_eff_adiabatic,
        n_m_pred: pred.n_m,
        n_m_pred_qn: pred.n_m_quantum_noise,
        n_m_pred_adiabatic: pred.n_m_adiabatic,
        seed,
        n_m_sim: None,
        n_m_stderr: None,
        n_m_spectral: None,
        gamma_eff_sim: None,
        gamma_eff_fit: None,
        gamma_eff_fwhm: None,
        fit_residual: None,
        linewidth_source: None,
        linewidth_disagree: None,
        dt: None,
        t_total: None,
        error: None,
    };
    Ok((row, pred))
}

fn simulate_row(row: &mut SweepRow, point: &Point, pred: &analytics::Prediction, cfg: &SimConfig, options: &SweepOptions) {
    let (cfg, settings) = if options.adapt {
        adapt_config(cfg, &point.drive, pred)
    } else {
        (*cfg, fixed_spectrum(cfg))
    };
    row.dt = Some(cfg.dt);
    row.t_total = Some(cfg.t_total);
    let drive = Drive::Noise(point.drive);
    let ens = match dynamics::run_ensemble(&point.params, &drive, &cfg, row.seed, Some(settings)) {
        Ok(e) => e,
        Err(e) => {
            row.error = Some(format!("{}: {e}", e.code()));
            return;
        }
    };
    row.n_m_sim = Some(ens.n_m_mean);
    row.n_m_stderr = Some(ens.n_m_stderr);
    let Some(spec) = ens.spectrum else { return };
    let fit = spectra::fit_lorentzian(&spec, None);
    if fit.converged {
        row.gamma_eff_fit = Some(fit.fwhm);
        row.fit_residual = Some(fit.residual_norm);
    }
    match spectra::fwhm_numeric(&spec) {
        Ok(w) => row.gamma_eff_fwhm = Some(w),
        Err(e) if !fit.converged => row.error = Some(format!("{}: {e}", e.code())),
        Err(_) => {}
    }
    match spectra::occupancy_from_spectrum(&spec, &fit) {
        Ok(n) => row.n_m_spectral = Some(n),
        Err(e) => row.error = Some(format!("{}: {e}", e.code())),
    }
}

/// Chooses each row's reported linewidth from the fit, unless its residual
/// is above `factor` times the sweep median.
fn choose_linewidths(rows: &mut [SweepRow], factor: f64) {
    let mut residuals: Vec<f64> = rows.iter().filter_map(|r| r.fit_residual).collect();
    residuals.sort_by(f64::total_cmp);
    let median = match residuals.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => residuals[n / 2],
        n => 0.5 * (residuals[n / 2 - 1] + residuals[n / 2]),
    };
    for row in rows.iter_mut() {
        let fit_ok = matches!(row.fit_residual, Some(r) if r <= factor * median);
        let (value, source) = match (row.gamma_eff_fit, row.gamma_eff_fwhm) {
            (Some(f), _) if fit_ok => (Some(f), Some(LinewidthSource::Fit)),
            (_, Some(w)) => (Some(w), Some(LinewidthSource::Fwhm)),
            (Some(f), None) => (Some(f), Some(LinewidthSource::Fit)),
            (None, None) => (None, None),
        };
        row.gamma_eff_sim = value;
        row.linewidth_source = source;
        if let (Some(f), Some(w)) = (row.gamma_eff_fit, row.gamma_eff_fwhm) {
            row.linewidth_disagree = Some((f / w - 1.0).abs() > 0.1);
        }
    }
}

fn run_points(points: Vec<Point>, cfg: &SimConfig, master_seed: u64, options: &SweepOptions) -> Result<Vec<SweepRow>> {
    let mut rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, point)| {
            let seed = stats::derive_seed(master_seed, i as u64);
            let (mut row, pred) = analytic_row(i, point, seed)?;
            if options.simulate {
                simulate_row(&mut row, point, &pred, cfg, options);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| r.index);
    if options.simulate {
        choose_linewidths(&mut rows, options.residual_factor);
    }
    Ok(rows)
}

fn check_grid(name: &str, grid: &[f64], strictly_positive: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| !v.is_finite() || *v < 0.0 || (strictly_positive && *v == 0.0)) {
        return Err(invalid(format!("{name} grid has an invalid value")));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid(format!("{name} grid must be strictly ascending")));
    }
    Ok(())
}

fn check_options(options: &SweepOptions) -> Result<()> {
    if let Some(h) = &options.heating {
        h.check()?;
    }
    Ok(())
}

/// One row per flux at fixed bandwidth `drive.sigma` and centre.
pub fn sweep_power(
    params: &SystemParams,
    drive: &NoiseDrive,
    flux_grid: &[f64],
    cfg: &SimConfig,
    master_seed: u64,
    options: &SweepOptions,
) -> Result<SweepTable> {
    check_grid("flux", flux_grid, false)?;
    check_options(options)?;
    let points = flux_grid
        .iter()
        .map(|&flux| Point {
            drive: NoiseDrive { flux, ..*drive },
            params: SystemParams {
                n_th: options.heating.as_ref().map_or(params.n_th, |h| h.n_th_at(flux)),
                ..*params
            },
        })
        .collect();
    Ok(SweepTable {
        kind: SweepKind::Power,
        rows: run_points(points, cfg, master_seed, options)?,
        argmin_sigma_pred: None,
        argmin_sigma_sim: None,
    })
}

/// One row per bandwidth at fixed flux `drive.flux` and centre.
pub fn sweep_bandwidth(
    params: &SystemParams,
    drive: &NoiseDrive,
    sigma_grid: &[f64],
    cfg: &SimConfig,
    master_seed: u64,
    options: &SweepOptions,
) -> Result<SweepTable> {
    check_grid("sigma", sigma_grid, true)?;
    check_options(options)?;
    let params = SystemParams {
        n_th: options.heating.as_ref().map_or(params.n_th, |h| h.n_th_at(drive.flux)),
        ..*params
    };
    let points = sigma_grid
        .iter()
        .map(|&sigma| Point {
            drive: NoiseDrive { sigma, ..*drive },
            params,
        })
        .collect();
    let rows = run_points(points, cfg, master_seed, options)?;
    let argmin = |f: &dyn Fn(&SweepRow) -> Option<f64>| {
        rows.iter()
            .filter_map(|r| f(r).map(|v| (r.sigma, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(s, _)| s)
    };
    let argmin_sigma_pred = argmin(&|r| Some(r.n_m_pred));
    let argmin_sigma_sim = argmin(&|r| r.n_m_sim);
    Ok(SweepTable {
        kind: SweepKind::Bandwidth,
        rows,
        argmin_sigma_pred,
        argmin_sigma_sim,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    SvgPlot,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" | "svg-plot" => Ok(Format::SvgPlot),
            other => Err(invalid(format!("unknown format {other:?}"))),
        }
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes `table` to `path` in the requested format.
pub fn emit(table: &SweepTable, format: Format, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if table.rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    match format {
        Format::Csv => write_csv(&table.rows, &mut out)?,
        Format::Json => serde_json::to_writer_pretty(&mut out, table)?,
        Format::SvgPlot => out.write_all(render_svg(table).as_bytes()).map_err(|e| Error::io(path, e))?,
    }
    out.flush().map_err(|e| Error::io(path, e))
}

struct LogAxis {
    lo: f64,
    hi: f64,
    pix_lo: f64,
    pix_hi: f64,
}

impl LogAxis {
    fn fit(values: impl Iterator<Item = f64>, pix_lo: f64, pix_hi: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| *v > 0.0 && v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (1.0, 10.0);
        }
        let lo = 10f64.powf(lo.log10().floor());
        let mut hi = 10f64.powf(hi.log10().ceil());
        if hi <= lo {
            hi = lo * 10.0;
        }
        LogAxis { lo, hi, pix_lo, pix_hi }
    }

    fn map(&self, v: f64) -> f64 {
        let t = (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10());
        self.pix_lo + t * (self.pix_hi - self.pix_lo)
    }

    fn decades(&self) -> impl Iterator<Item = f64> {
        let (a, b) = (self.lo.log10().round() as i32, self.hi.log10().round() as i32);
        (a..=b).map(|k| 10f64.powi(k))
    }
}

const PALETTE: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

struct Panel<'a> {
    title: &'a str,
    y_label: &'a str,
    predictions: Vec<(&'a str, Vec<(f64, f64)>)>,
    simulated: Vec<(f64, f64, f64)>,
}

fn draw_panel(svg: &mut String, panel: &Panel, x_label: &str, top: f64) {
    let (left, width, height) = (80.0, 560.0, 260.0);
    let xs = panel
        .predictions
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
        .chain(panel.simulated.iter().map(|p| p.0));
    let x = LogAxis::fit(xs, left, left + width);
    let ys = panel
        .predictions
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.1))
        .chain(panel.simulated.iter().flat_map(|p| [p.1 - p.2, p.1 + p.2]));
    let y = LogAxis::fit(ys, top + height, top);

    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{top}" width="{width}" height="{height}" fill="none" stroke="#000"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        left + width / 2.0,
        top - 8.0,
        panel.title
    );
    for v in x.decades() {
        let px = x.map(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#000"/><text x="{px:.2}" y="{:.2}" text-anchor="middle" font-size="11">{v:.0e}</text>"##,
            top + height,
            top + height - 5.0,
            top + height + 16.0
        );
    }
    for v in y.decades() {
        let py = y.map(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#000"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{v:.0e}</text>"##,
            left + 5.0,
            left - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label}</text>"#,
        left + width / 2.0,
        top + height + 36.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{0}" text-anchor="middle" font-size="12" transform="rotate(-90 20 {0})">{1}</text>"#,
        top + height / 2.0,
        panel.y_label
    );

    for (k, (name, pts)) in panel.predictions.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.0 > 0.0 && p.1 > 0.0 && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", x.map(p.0), y.map(p.1)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="prediction" data-series="{name}" fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{name}</text>"#,
            left + width - 150.0,
            top + 16.0 + 14.0 * k as f64
        );
    }
    let _ = writeln!(svg, r#"<g class="simulated" data-series="simulated">"#);
    for &(xv, yv, err) in &panel.simulated {
        if !(xv > 0.0 && yv > 0.0) {
            continue;
        }
        let (px, py) = (x.map(xv), y.map(yv));
        let lo = if yv - err > 0.0 { y.map(yv - err) } else { top + height };
        let hi = y.map(yv + err);
        let _ = writeln!(
            svg,
            r##"<line class="errorbar" x1="{px:.2}" y1="{lo:.2}" x2="{px:.2}" y2="{hi:.2}" stroke="#000"/><circle cx="{px:.2}" cy="{py:.2}" r="3" fill="#000"/>"##
        );
    }
    let _ = writeln!(svg, "</g>");
}

/// Two log-log panels, occupancy and linewidth, against flux (power sweep)
/// or bandwidth in Hz (bandwidth sweep).
pub fn render_svg(table: &SweepTable) -> String {
    let x_of = |r: &SweepRow| match table.kind {
        SweepKind::Power => r.flux,
        SweepKind::Bandwidth => r.sigma / TAU,
    };
    let x_label = match table.kind {
        SweepKind::Power => "flux (photons/s)",
        SweepKind::Bandwidth => "noise bandwidth (Hz)",
    };
    let series = |f: fn(&SweepRow) -> f64| table.rows.iter().map(|r| (x_of(r), f(r))).collect::<Vec<_>>();
    let occupancy = Panel {
        title: "phonon occupancy",
        y_label: "n_m",
        predictions: vec![
            ("quantum noise", series(|r| r.n_m_pred_qn)),
            ("adiabatic", series(|r| r.n_m_pred_adiabatic)),
        ],
        simulated: table
            .rows
            .iter()
            .filter_map(|r| Some((x_of(r), r.n_m_sim?, r.n_m_stderr.unwrap_or(0.0))))
            .collect(),
    };
    let linewidth = Panel {
        title: "effective linewidth",
        y_label: "linewidth (Hz)",
        predictions: vec![
            ("quantum noise", series(|r| r.gamma_eff_pred_qn / TAU)),
            ("adiabatic", series(|r| r.gamma_eff_pred_adiabatic / TAU)),
        ],
        simulated: table
            .rows
            .iter()
            .filter_map(|r| Some((x_of(r), r.gamma_eff_sim? / TAU, 0.0)))
            .collect(),
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="680" height="700" viewBox="0 0 680 700" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<g class="panel" data-panel="occupancy">"#);
    draw_panel(&mut svg, &occupancy, x_label, 40.0);
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g class="panel" data-panel="linewidth">"#);
    draw_panel(&mut svg, &linewidth, x_label, 380.0);
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::hz;

    fn analytic_only() -> SweepOptions {
        SweepOptions {
            simulate: false,
            ..Default::default()
        }
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1.0, 1e4, 5);
        assert_eq!(g.len(), 5);
        assert!((g[2] - 100.0).abs() < 1e-9);
        assert!((g[4] - 1e4).abs() < 1e-8);
    }

    #[test]
    fn heating_map_interpolates_and_clamps() {
        let h = BathHeating {
            points: vec![(0.0, 20.0), (10.0, 60.0)],
        };
        assert_eq!(h.n_th_at(-1.0), 20.0);
        assert_eq!(h.n_th_at(5.0), 40.0);
        assert_eq!(h.n_th_at(50.0), 60.0);
    }

    #[test]
    fn membrane_operating_points() {
        let p = SystemParams::membrane();
        let targets = [24.1e3, 2.43e5, 1.53e6];
        let fluxes: Vec<f64> = targets.iter().map(|&n| analytics::flux_for_photons(n, &p)).collect();
        let drive = NoiseDrive::new(0.0, hz(200e3));
        let t = sweep_power(&p, &drive, &fluxes, &SimConfig::default(), 1, &analytic_only()).unwrap();
        for (row, n) in t.rows.iter().zip(targets) {
            assert!((row.n_bar0 / n - 1.0).abs() < 1e-12);
            assert!(row.n_m_sim.is_none());
        }
        assert_eq!(t.rows[2].regime, Regime::QuantumNoise);
    }

    #[test]
    fn bandwidth_sweep_analytics() {
        let p = SystemParams::membrane();
        let flux = analytics::flux_for_photons(1.57e6, &p);
        // Four decades, capped where the box would reach the blue sideband.
        let sigmas: Vec<f64> = log_grid(1e-3 * p.kappa, 10.0 * p.kappa, 41);
        let drive = NoiseDrive::new(flux, p.kappa);
        let t = sweep_bandwidth(&p, &drive, &sigmas, &SimConfig::default(), 1, &analytic_only()).unwrap();
        let qn: Vec<f64> = t.rows.iter().map(|r| r.n_m_pred_qn).collect();
        // Non-decreasing in sigma, flat below kappa, rising above.
        assert!(qn.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
        assert!(qn[30] / qn[0] < 1.5);
        assert!(qn[40] / qn[30] > 4.0);
        assert!(t.argmin_sigma_pred.unwrap() <= p.kappa);
        assert!(t.argmin_sigma_sim.is_none());

        let at_kappa = sweep_bandwidth(&p, &drive, &[p.kappa], &SimConfig::default(), 1, &analytic_only()).unwrap();
        let narrow = analytics::gamma_opt_box(flux, 1e-9 * p.kappa, &p.renormalize_for_probe()).unwrap();
        assert!((at_kappa.rows[0].gamma_opt_pred / narrow - PI / 4.0).abs() < 1e-9);
    }

    #[test]
    fn analytic_columns_ignore_cfg() {
        let p = SystemParams::desk();
        let drive = NoiseDrive::new(0.0, 0.2 * p.kappa);
        let grid = log_grid(1e10, 1e13, 4);
        let a = sweep_power(&p, &drive, &grid, &SimConfig::default(), 3, &analytic_only()).unwrap();
        let other = SimConfig {
            dt: 3e-8,
            t_total: 1.0,
            ..SimConfig::default()
        };
        let b = sweep_power(&p, &drive, &grid, &other, 3, &analytic_only()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_preconditions() {
        let p = SystemParams::desk();
        let drive = NoiseDrive::new(0.0, 0.2 * p.kappa);
        let cfg = SimConfig::default();
        let o = analytic_only();
        assert!(sweep_power(&p, &drive, &[], &cfg, 0, &o).is_err());
        assert!(sweep_power(&p, &drive, &[2.0, 1.0], &cfg, 0, &o).is_err());
        assert!(sweep_bandwidth(&p, &drive, &[0.0, 1.0], &cfg, 0, &o).is_err());
    }

    #[test]
    fn linewidth_rule_uses_median_residual() {
        let p = SystemParams::desk();
        let drive = NoiseDrive::new(0.0, 0.2 * p.kappa);
        let t = sweep_power(&p, &drive, &[1.0, 2.0, 3.0], &SimConfig::default(), 0, &analytic_only()).unwrap();
        let mut rows = t.rows;
        for (r, res) in rows.iter_mut().zip([0.01, 0.012, 0.05]) {
            r.fit_residual = Some(res);
            r.gamma_eff_fit = Some(100.0);
            r.gamma_eff_fwhm = Some(150.0);
        }
        choose_linewidths(&mut rows, 2.0);
        assert_eq!(rows[0].linewidth_source, Some(LinewidthSource::Fit));
        assert_eq!(rows[1].gamma_eff_sim, Some(100.0));
        assert_eq!(rows[2].linewidth_source, Some(LinewidthSource::Fwhm));
        assert_eq!(rows[2].gamma_eff_sim, Some(150.0));
        assert_eq!(rows[2].linewidth_disagree, Some(true));
    }

    #[test]
    fn adapted_config_resolves_the_line() {
        let p = SystemParams::desk();
        let drive = NoiseDrive::new(analytics::flux_for_photons(1e4, &p), 10.0 * p.kappa);
        let pred = analytics::predict(&p, &drive).unwrap();
        let (cfg, set) = adapt_config(&SimConfig::default(), &drive, &pred);
        assert!(cfg.dt < 1e-7);
        let rbw = TAU / (set.segment_length as f64 * cfg.dt * cfg.sample_stride as f64);
        assert!(rbw <= 0.1 * pred.gamma_eff);
        assert!(crate::params::validate_config(&p, &cfg).is_empty());
    }
}
