//! Eigenvalues of effective matrices, island detection, bulk filtering,
//! Hausdorff distances and the Landau-level and scaling checks.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::HarmonicData;
use crate::effective::{build_effective_matrix, landau_prediction, landau_spacing, torus_spectrum, Geometry, PeierlsMatrix};
use crate::lattice::{norm, Lattice, LatticeSite};
use crate::linalg::{eigh, lanczos_bottom, EigRange, SparseHermitian};
use crate::phase::FieldSpec;
use crate::wannier::HoppingSet;
use crate::{Error, Result, C64};

/// Dense solves are used up to this dimension.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    Auto,
    Dense,
    Lanczos,
}

/// Ascending eigenvalues: all of them, or the `k` smallest.
pub fn eigens(m: &SparseHermitian, k: Option<usize>, method: EigenMethod) -> Result<Vec<f64>> {
    let n = m.dim;
    let k = k.unwrap_or(n).min(n);
    if k == 0 {
        return Ok(Vec::new());
    }
    let iterative = match method {
        EigenMethod::Dense => false,
        EigenMethod::Lanczos => k < n,
        EigenMethod::Auto => k < n && n > DENSE_LIMIT,
    };
    if iterative {
        return Ok(lanczos_bottom(m, k, 1e-11, 0x5eed)?.0);
    }
    let range = if k == n { EigRange::All } else { EigRange::Index(0, k - 1) };
    Ok(eigh(&m.to_dense(), range, false)?.values)
}

/// Eigenpairs with eigenvalue in (lo, hi], vectors as columns.
pub fn eigens_window(m: &SparseHermitian, lo: f64, hi: f64) -> Result<(Vec<f64>, Array2<C64>)> {
    let e = eigh(&m.to_dense(), EigRange::Value(lo, hi), true)?;
    Ok((e.values, e.vectors.expect("vectors requested")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Island {
    pub a: f64,
    pub b: f64,
}

impl Island {
    pub fn center(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpectrumReport {
    pub window: [f64; 2],
    /// Retained eigenvalues inside the window, ascending.
    pub eigenvalues: Vec<f64>,
    pub islands: Vec<Island>,
    /// Open gaps between consecutive islands.
    pub gaps: Vec<[f64; 2]>,
    pub filtered_out: usize,
}

/// Splits the eigenvalues inside `window` wherever consecutive spacing exceeds `gap_threshold`.
pub fn detect_islands(eigs: &[f64], gap_threshold: f64, window: [f64; 2]) -> Result<SpectrumReport> {
    let mut e: Vec<f64> = eigs.iter().copied().filter(|&x| x >= window[0] && x <= window[1]).collect();
    if e.is_empty() {
        return Err(Error::EmptyWindow { lo: window[0], hi: window[1] });
    }
    e.sort_by(f64::total_cmp);
    let mut islands = Vec::new();
    let mut start = e[0];
    for w in e.windows(2) {
        if w[1] - w[0] > gap_threshold {
            islands.push(Island { a: start, b: w[0] });
            start = w[1];
        }
    }
    islands.push(Island { a: start, b: *e.last().unwrap() });
    let gaps = islands.windows(2).map(|p| [p[0].b, p[1].a]).collect();
    Ok(SpectrumReport { window, eigenvalues: e, islands, gaps, filtered_out: 0 })
}

/// Keeps the states whose weight on sites with |pos| > (1 - boundary_frac) R
/// is at most `weight_tol`. Returns retained eigenvalues and the removed count.
pub fn bulk_filter(
    eigs: &[f64],
    vecs: &Array2<C64>,
    sites: &[LatticeSite],
    radius: f64,
    boundary_frac: f64,
    weight_tol: f64,
) -> (Vec<f64>, usize) {
    let cut = (1.0 - boundary_frac) * radius;
    let boundary: Vec<usize> = sites.iter().enumerate().filter(|(_, s)| norm(s.position) > cut).map(|(i, _)| i).collect();
    let mut kept = Vec::new();
    let mut removed = 0;
    for (j, &e) in eigs.iter().enumerate() {
        let col = vecs.column(j);
        let total: f64 = col.iter().map(|z| z.norm_sqr()).sum();
        let w: f64 = boundary.iter().map(|&i| col[i].norm_sqr()).sum::<f64>() / total.max(1e-300);
        if w <= weight_tol {
            kept.push(e);
        } else {
            removed += 1;
        }
    }
    (kept, removed)
}

/// Weight of a normalised state on the boundary layer.
pub fn boundary_weight(state: &[C64], sites: &[LatticeSite], radius: f64, boundary_frac: f64) -> f64 {
    let cut = (1.0 - boundary_frac) * radius;
    let total: f64 = state.iter().map(|z| z.norm_sqr()).sum();
    state.iter().zip(sites).filter(|(_, s)| norm(s.position) > cut).map(|(z, _)| z.norm_sqr()).sum::<f64>() / total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HausdorffResult {
    /// +inf when exactly one of the sets is empty inside the window.
    pub distance: f64,
    pub one_sided_empty: bool,
}

/// Hausdorff distance between the parts of `a` and `b` inside `window`.
pub fn hausdorff(a: &[f64], b: &[f64], window: [f64; 2]) -> HausdorffResult {
    let inside = |v: &[f64]| -> Vec<f64> {
        let mut w: Vec<f64> = v.iter().copied().filter(|&x| x >= window[0] && x <= window[1]).collect();
        w.sort_by(f64::total_cmp);
        w
    };
    let (a, b) = (inside(a), inside(b));
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return HausdorffResult { distance: 0.0, one_sided_empty: false },
        (true, false) | (false, true) => return HausdorffResult { distance: f64::INFINITY, one_sided_empty: true },
        _ => {}
    }
    let directed = |x: &[f64], y: &[f64]| -> f64 {
        // y sorted: nearest neighbour by binary search.
        x.iter()
            .map(|&p| {
                let i = y.partition_point(|&q| q < p);
                let mut d = f64::INFINITY;
                if i < y.len() {
                    d = d.min((y[i] - p).abs());
                }
                if i > 0 {
                    d = d.min((p - y[i - 1]).abs());
                }
                d
            })
            .fold(0.0, f64::max)
    };
    HausdorffResult { distance: directed(&a, &b).max(directed(&b, &a)), one_sided_empty: false }
}

/// |island midpoint - predicted level| / spacing for the bottom islands.
pub fn landau_cluster_check(report: &SpectrumReport, predicted: &[f64], spacing: f64) -> Result<Vec<f64>> {
    if report.islands.len() < predicted.len() {
        return Err(Error::IslandCountMismatch { found: report.islands.len(), expected: predicted.len() });
    }
    Ok(report.islands.iter().zip(predicted).map(|(isl, p)| (isl.center() - p).abs() / spacing).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AnalysisParams {
    /// Number of Landau levels examined.
    #[serde(default = "default_levels", rename = "landauN")]
    pub landau_levels: usize,
    /// Gap threshold as a fraction of the level spacing 2 eps m B0.
    #[serde(default = "default_gap_frac")]
    pub gap_threshold_frac: f64,
    #[serde(default = "default_boundary_frac")]
    pub boundary_frac: f64,
    #[serde(default = "default_weight_tol")]
    pub weight_tol: f64,
    /// Energy window; defaults to the one holding the bottom landauN levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

fn default_levels() -> usize {
    3
}
fn default_gap_frac() -> f64 {
    0.25
}
fn default_boundary_frac() -> f64 {
    0.15
}
fn default_weight_tol() -> f64 {
    1e-5
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            landau_levels: default_levels(),
            gap_threshold_frac: default_gap_frac(),
            boundary_frac: default_boundary_frac(),
            weight_tol: default_weight_tol(),
            window: None,
        }
    }
}

/// Window [min - spacing/2, min + N spacing] holding the bottom N levels.
pub fn landau_window(hd: &HarmonicData, b0: f64, eps: f64, levels: usize) -> [f64; 2] {
    let s = landau_spacing(hd, b0, eps);
    [hd.min_value - 0.5 * s, hd.min_value + levels as f64 * s]
}

fn analysis_window(params: &AnalysisParams, hd: &HarmonicData, b0: f64, eps: f64) -> [f64; 2] {
    params.window.unwrap_or_else(|| landau_window(hd, b0, eps, params.landau_levels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScalingFit {
    pub law: String,
    pub exponent: f64,
    pub prefactor: f64,
    pub residual: f64,
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
}

/// Least-squares fit of log y = log C + p log x over positive finite pairs.
pub fn fit_power_law(law: &str, xs: &[f64], ys: &[f64]) -> ScalingFit {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite()).map(|(x, y)| (x.ln(), y.ln())).collect();
    let (exponent, prefactor, residual) = if pts.len() < 2 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let res = (pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum::<f64>() / k).sqrt();
        (slope, icpt.exp(), res)
    };
    ScalingFit { law: law.to_string(), exponent, prefactor, residual, abscissa: xs.to_vec(), values: ys.to_vec() }
}

/// Spectrum of one (eps, kappa) configuration restricted to a window,
/// bulk-filtered on balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CellSpectrum {
    pub epsilon: f64,
    pub kappa: f64,
    pub report: SpectrumReport,
}

/// Eigenvalues in the Landau window for one configuration.
pub fn cell_spectrum(
    h: &HoppingSet,
    lat: &Lattice,
    field: &FieldSpec,
    eps: f64,
    kappa: f64,
    geom: Geometry,
    window: [f64; 2],
    gap_threshold: f64,
    params: &AnalysisParams,
) -> Result<CellSpectrum> {
    let (eigs, filtered) = match geom {
        Geometry::Torus { q, repeat } => {
            if kappa != 0.0 {
                return Err(Error::KappaOnTorus { kappa });
            }
            (torus_spectrum(h, lat, field, eps, q, repeat)?, 0)
        }
        Geometry::Ball { radius } => {
            let pm: PeierlsMatrix = build_effective_matrix(h, lat, field, eps, kappa, geom)?;
            let (vals, vecs) = eigens_window(&pm.matrix, window[0], window[1])?;
            bulk_filter(&vals, &vecs, &pm.sites, radius, params.boundary_frac, params.weight_tol)
        }
    };
    let mut report = detect_islands(&eigs, gap_threshold, window)?;
    report.filtered_out = filtered;
    Ok(CellSpectrum { epsilon: eps, kappa, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PerturbedCell {
    pub kappa: f64,
    pub beta: f64,
    pub status: String,
    pub error_kind: Option<String>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub deviations: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PerturbedLandauResult {
    pub epsilon: f64,
    pub spacing: f64,
    pub predicted: Vec<f64>,
    pub cells: Vec<PerturbedCell>,
    /// Max island width against beta = kappa * sup|b| over kappa > 0.
    pub width_fit: ScalingFit,
}

/// Islands of the ball spectrum for each kappa, with the width-vs-beta fit.
pub fn perturbed_landau_check(
    h: &HoppingSet,
    lat: &Lattice,
    field: &FieldSpec,
    hd: &HarmonicData,
    eps: f64,
    kappas: &[f64],
    radius: f64,
    params: &AnalysisParams,
) -> Result<PerturbedLandauResult> {
    let spacing = landau_spacing(hd, field.b0, eps);
    let levels = params.landau_levels;
    let predicted = landau_prediction(hd, field.b0, eps, levels.saturating_sub(1));
    let window = analysis_window(params, hd, field.b0, eps);
    let gap = params.gap_threshold_frac * spacing;
    let mut cells = Vec::new();
    for &kappa in kappas {
        let beta = kappa * field.sup_norm();
        let cell = cell_spectrum(h, lat, field, eps, kappa, Geometry::Ball { radius }, window, gap, params);
        let pc = match cell {
            Ok(c) => {
                let isl = &c.report.islands;
                if isl.len() != levels {
                    return Err(Error::ClustersUnresolvable { kappa, found: isl.len(), expected: levels });
                }
                PerturbedCell {
                    kappa,
                    beta,
                    status: "ok".into(),
                    error_kind: None,
                    centers: isl.iter().map(|i| i.center()).collect(),
                    widths: isl.iter().map(|i| i.width()).collect(),
                    deviations: isl.iter().zip(&predicted).map(|(i, p)| (i.center() - p).abs() / spacing).collect(),
                    eigenvalues: c.report.eigenvalues.clone(),
                }
            }
            Err(e) => PerturbedCell {
                kappa,
                beta,
                status: "failed".into(),
                error_kind: Some(e.kind().into()),
                centers: vec![],
                widths: vec![],
                deviations: vec![],
                eigenvalues: vec![],
            },
        };
        cells.push(pc);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .filter(|c| c.status == "ok" && c.kappa > 0.0)
        .map(|c| (c.beta, c.widths.iter().cloned().fold(0.0, f64::max)))
        .unzip();
    let width_fit = fit_power_law("width_vs_beta", &xs, &ys);
    Ok(PerturbedLandauResult { epsilon: eps, spacing, predicted, cells, width_fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepCell {
    pub epsilon: f64,
    pub kappa: f64,
    pub geometry: Option<Geometry>,
    pub status: String,
    pub error_kind: Option<String>,
    pub spacing: f64,
    pub islands: Vec<Island>,
    pub min_gap: Option<f64>,
    pub max_width: Option<f64>,
    /// Hausdorff distance to the kappa = 0 ball spectrum at the same eps.
    pub hausdorff: Option<f64>,
    pub deviations: Vec<f64>,
    /// Retained window eigenvalues; exported as CSV, not in the JSON report.
    #[serde(skip)]
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub fits: Vec<ScalingFit>,
}

/// Hopping data for one eps: the hoppings entering the Peierls matrix and
/// their harmonic data.
pub struct EpsilonModel {
    pub epsilon: f64,
    pub hoppings: HoppingSet,
    pub harmonic: HarmonicData,
}

/// Chooses q for a torus at this eps: the smallest q <= q_max giving
/// rational flux 2 pi p / q.
pub fn torus_q_for(lat: &Lattice, field: &FieldSpec, eps: f64, q_max: usize) -> Option<usize> {
    (1..=q_max).find(|&q| crate::effective::rational_flux_numerator(lat, field, eps, q).is_ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SweepGeometry {
    /// Use tori for kappa = 0 cells when the flux is rational.
    #[serde(default = "default_true")]
    pub torus_for_constant_field: bool,
    #[serde(default = "default_q_max")]
    pub q_max: usize,
    #[serde(default = "one")]
    pub torus_repeat: usize,
    /// Ball radius; defaults to eight magnetic lengths.
    #[serde(default)]
    pub ball_radius: Option<f64>,
}

fn default_true() -> bool {
    true
}
fn default_q_max() -> usize {
    512
}
fn one() -> usize {
    1
}

impl Default for SweepGeometry {
    fn default() -> Self {
        SweepGeometry { torus_for_constant_field: true, q_max: default_q_max(), torus_repeat: 1, ball_radius: None }
    }
}

/// Runs every (eps, kappa) cell and fits the four scaling laws:
/// gap law (min gap vs eps; implied C2 = eps / min gap), kappa = 0 width vs eps,
/// width vs kappa and Hausdorff distance vs kappa at the smallest eps.
/// Cells run in parallel; assembly follows the input order.
pub fn scaling_sweep(
    models: &[EpsilonModel],
    lat: &Lattice,
    field: &FieldSpec,
    kappas: &[f64],
    geom: &SweepGeometry,
    params: &AnalysisParams,
) -> SweepResult {
    let mut kap: Vec<f64> = kappas.to_vec();
    if !kap.contains(&0.0) {
        kap.insert(0, 0.0);
    }
    let levels = params.landau_levels;
    let mut jobs: Vec<(usize, f64, Result<Geometry>)> = Vec::new();
    for (mi, model) in models.iter().enumerate() {
        let eps = model.epsilon;
        let radius = geom.ball_radius.unwrap_or_else(|| crate::effective::default_ball_radius(eps, field.b0));
        for &kappa in &kap {
            if kappa == 0.0 && geom.torus_for_constant_field {
                let g = torus_q_for(lat, field, eps, geom.q_max)
                    .map(|q| Geometry::Torus { q, repeat: geom.torus_repeat })
                    .ok_or(Error::IrrationalFluxOnTorus { flux: crate::effective::flux_per_cell(lat, field, eps), q: geom.q_max });
                jobs.push((mi, kappa, g));
            }
            jobs.push((mi, kappa, Ok(Geometry::Ball { radius })));
        }
    }
    let outcomes: Vec<(SweepCell, Option<Vec<f64>>)> = jobs
        .into_par_iter()
        .map(|(mi, kappa, g)| {
            let model = &models[mi];
            let eps = model.epsilon;
            let hd = &model.harmonic;
            let spacing = landau_spacing(hd, field.b0, eps);
            let predicted = landau_prediction(hd, field.b0, eps, levels.saturating_sub(1));
            let window = analysis_window(params, hd, field.b0, eps);
            let gap = params.gap_threshold_frac * spacing;
            let result = g.and_then(|g| cell_spectrum(&model.hoppings, lat, field, eps, kappa, g, window, gap, params).map(|c| (g, c)));
            match result {
                Ok((g, c)) => {
                    let isl = c.report.islands.clone();
                    let min_gap = c.report.gaps.iter().take(levels.saturating_sub(1)).map(|x| x[1] - x[0]).reduce(f64::min);
                    let max_width = isl.iter().take(levels).map(|i| i.width()).reduce(f64::max);
                    let deviations = landau_cluster_check(&c.report, &predicted, spacing).unwrap_or_default();
                    let ok = isl.len() >= levels;
                    let ball = matches!(g, Geometry::Ball { .. }).then(|| c.report.eigenvalues.clone());
                    let eigenvalues = c.report.eigenvalues;
                    let cell = SweepCell {
                        epsilon: eps,
                        kappa,
                        geometry: Some(g),
                        status: if ok { "ok" } else { "failed" }.into(),
                        error_kind: (!ok).then(|| "IslandCountMismatch".to_string()),
                        spacing,
                        islands: isl,
                        min_gap,
                        max_width,
                        hausdorff: None,
                        deviations,
                        eigenvalues,
                    };
                    (cell, ball)
                }
                Err(e) => {
                    let cell = SweepCell {
                        epsilon: eps,
                        kappa,
                        geometry: None,
                        status: "failed".into(),
                        error_kind: Some(e.kind().into()),
                        spacing,
                        islands: vec![],
                        min_gap: None,
                        max_width: None,
                        hausdorff: None,
                        deviations: vec![],
                        eigenvalues: vec![],
                    };
                    (cell, None)
                }
            }
        })
        .collect();
    // Hausdorff distances against the kappa = 0 ball spectrum at the same eps.
    let base: Vec<Option<Vec<f64>>> = models
        .iter()
        .map(|m| outcomes.iter().find(|(c, b)| c.epsilon == m.epsilon && c.kappa == 0.0 && b.is_some()).and_then(|(_, b)| b.clone()))
        .collect();
    let mut cells = Vec::with_capacity(outcomes.len());
    for (mut c, ball) in outcomes {
        let mi = models.iter().position(|m| m.epsilon == c.epsilon).unwrap();
        if let (Some(s), Some(b)) = (ball.as_ref(), base[mi].as_ref()) {
            if c.status == "ok" {
                let hd = &models[mi].harmonic;
                let window = analysis_window(params, hd, field.b0, c.epsilon);
                c.hausdorff = Some(hausdorff(s, b, window).distance);
            }
        }
        cells.push(c);
    }
    let mut fits = Vec::new();
    let const_cells: Vec<&SweepCell> = pick_constant_field_cells(&cells, geom);
    let (xs, ys): (Vec<f64>, Vec<f64>) = const_cells.iter().filter_map(|c| c.min_gap.map(|g| (c.epsilon, g))).unzip();
    fits.push(fit_power_law("gap_vs_epsilon", &xs, &ys));
    let (xs, ys): (Vec<f64>, Vec<f64>) = const_cells.iter().filter_map(|c| c.max_width.map(|w| (c.epsilon, w))).unzip();
    fits.push(fit_power_law("width_vs_epsilon", &xs, &ys));
    let eps_min = models.iter().map(|m| m.epsilon).fold(f64::INFINITY, f64::min);
    let ball_cells: Vec<&SweepCell> = cells
        .iter()
        .filter(|c| c.epsilon == eps_min && c.kappa > 0.0 && c.status == "ok" && matches!(c.geometry, Some(Geometry::Ball { .. })))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = ball_cells.iter().filter_map(|c| c.max_width.map(|w| (c.kappa, w))).unzip();
    fits.push(fit_power_law("width_vs_kappa", &xs, &ys));
    let (xs, ys): (Vec<f64>, Vec<f64>) = ball_cells.iter().filter_map(|c| c.hausdorff.map(|d| (c.kappa, d))).unzip();
    fits.push(fit_power_law("hausdorff_vs_kappa", &xs, &ys));
    SweepResult { cells, fits }
}

fn pick_constant_field_cells<'a>(cells: &'a [SweepCell], geom: &SweepGeometry) -> Vec<&'a SweepCell> {
    cells
        .iter()
        .filter(|c| c.kappa == 0.0 && c.status == "ok")
        .filter(|c| match c.geometry {
            Some(Geometry::Torus { .. }) => true,
            Some(Geometry::Ball { .. }) => !geom.torus_for_constant_field,
            None => false,
        })
        .collect()
}

/// Implied C2 = eps / min gap per constant-field cell.
pub fn implied_c2(cells: &[SweepCell]) -> Vec<(f64, f64)> {
    cells.iter().filter_map(|c| c.min_gap.map(|g| (c.epsilon, c.epsilon / g))).collect()
}
