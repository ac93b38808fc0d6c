//! Run configuration, stage orchestration, caching and output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bloch::{
    band_minimum_hessian, band_minimum_hessian_fourier, classify_hypothesis, grid_theta, ground_state_bound_check, solve_bands, BandStructure,
    BoundCheck, HarmonicData, Hypothesis, PotentialSpec,
};
use crate::effective::{build_effective_matrix, default_ball_radius, landau_prediction, landau_spacing, Geometry};
use crate::lattice::{norm, Lattice, Vec2};
use crate::phase::FieldSpec;
use crate::report::{columns_csv, coo_csv, emit_report, rows_csv, to_json_bytes, write_atomic, SCHEMA_VERSION};
use crate::spectral::{
    cell_spectrum, implied_c2, landau_cluster_check, landau_window, perturbed_landau_check, scaling_sweep, AnalysisParams, EpsilonModel,
    PerturbedLandauResult, ScalingFit, SpectrumReport, SweepCell, SweepGeometry,
};
use crate::wannier::{
    fix_gauge_with_fallback, hoppings_from_band, magnetic_gramian, magnetic_hoppings, synthesize_wannier, HoppingRecord, HoppingSet,
    WannierFunction,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub e1: Vec2,
    pub e2: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SolverConfig {
    /// Plane waves with |g|_inf <= cutoff.
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    /// theta grid is gridN x gridN; even, at least 8.
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default = "default_nbands")]
    pub nbands: usize,
}

fn default_cutoff() -> usize {
    8
}
fn default_grid_n() -> usize {
    32
}
fn default_nbands() -> usize {
    4
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { cutoff: default_cutoff(), grid_n: default_grid_n(), nbands: default_nbands() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WannierConfig {
    /// Disk radius in length units; defaults to six cell diameters.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Grid spacing in length units; defaults to lattice constant / 16.
    #[serde(default)]
    pub spacing: Option<f64>,
    /// Hoppings below this modulus are dropped.
    #[serde(default = "default_trunc_tol")]
    pub trunc_tol: f64,
}

fn default_trunc_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EffectiveConfig {
    /// Field strength scale eps used by `effective` and `analyze`;
    /// defaults to the first sweep entry.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub kappa: f64,
    /// Defaults to a ball of eight magnetic lengths.
    #[serde(default)]
    pub geometry: Option<Geometry>,
    /// Hoppings with |gamma| > hopRadius (length units) are dropped;
    /// default six lattice constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop_radius: Option<f64>,
    /// Use the eps-dependent hoppings from the magnetic Gramian (kappa = 0 only).
    #[serde(default)]
    pub magnetic_correction: bool,
}


impl Default for EffectiveConfig {
    fn default() -> Self {
        EffectiveConfig { epsilon: None, kappa: 0.0, geometry: None, hop_radius: None, magnetic_correction: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub kappa: Vec<f64>,
    #[serde(default)]
    pub geometry: SweepGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub wannier: WannierConfig,
    #[serde(default)]
    pub effective: EffectiveConfig,
    #[serde(default)]
    pub analysis: AnalysisParams,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Given hoppings replace the band and Wannier stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hoppings: Option<Vec<HoppingRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<bool>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.lattice.e1, self.lattice.e2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if let Err(e) = self.lattice() {
            return bad(e.to_string());
        }
        if let Err(e) = self.field.validate() {
            return bad(e.to_string());
        }
        let s = &self.solver;
        if s.grid_n < 8 || s.grid_n % 2 != 0 {
            return bad(format!("solver.gridN = {} must be even and >= 8", s.grid_n));
        }
        if s.nbands == 0 || s.cutoff == 0 {
            return bad("solver.nbands and solver.cutoff must be positive".into());
        }
        let w = &self.wannier;
        if w.radius.is_some_and(|r| !(r > 0.0)) || w.spacing.is_some_and(|r| !(r > 0.0)) || !(w.trunc_tol >= 0.0) {
            return bad("wannier radius and spacing must be positive, truncTol non-negative".into());
        }
        let eps_ok = |e: f64| e > 0.0 && e.is_finite();
        if self.effective.epsilon.is_some_and(|e| !eps_ok(e)) || self.sweep.epsilon.iter().any(|&e| !eps_ok(e)) {
            return bad("epsilon values must be positive".into());
        }
        if self.sweep.kappa.iter().chain([&self.effective.kappa]).any(|k| !(k.is_finite() && *k >= 0.0)) {
            return bad("kappa values must be non-negative".into());
        }
        if self.effective.hop_radius.is_some_and(|r| !(r > 0.0)) {
            return bad("effective.hopRadius must be positive".into());
        }
        let a = &self.analysis;
        if a.landau_levels == 0 || !(a.gap_threshold_frac > 0.0) || !(0.0..1.0).contains(&a.boundary_frac) || !(a.weight_tol >= 0.0) {
            return bad("analysis parameters out of range".into());
        }
        if let Some(h) = &self.hoppings {
            if let Err(e) = HoppingSet::from_records(&self.lattice()?, h) {
                return bad(e.to_string());
            }
        }
        Ok(())
    }

    pub fn epsilon(&self) -> Result<f64> {
        self.effective
            .epsilon
            .or_else(|| self.sweep.epsilon.first().copied())
            .ok_or_else(|| Error::ConfigInvalid("effective.epsilon or sweep.epsilon required".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Bands,
    Wannier,
    Effective,
    Analyze,
    Sweep,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Bands => "bands",
            Subcommand::Wannier => "wannier",
            Subcommand::Effective => "effective",
            Subcommand::Analyze => "analyze",
            Subcommand::Sweep => "sweep",
        }
    }
}

/// sha256 of the canonical JSON of `v`.
pub fn content_hash<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageRecord {
    pub stage: String,
    pub seconds: f64,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CellStatus {
    pub epsilon: f64,
    pub kappa: f64,
    pub status: String,
    pub error_kind: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub stages: Vec<StageRecord>,
    pub cells: Vec<CellStatus>,
    pub status: String,
    pub failing_stage: Option<String>,
    pub error: Option<ErrorRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub stage: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BandsReport {
    pub grid_n: usize,
    pub cutoff: usize,
    pub nbands: usize,
    pub hypothesis: Hypothesis,
    /// [min, max] of each band over the grid.
    pub band_ranges: Vec<[f64; 2]>,
    pub harmonic: Option<HarmonicData>,
    pub harmonic_error: Option<String>,
    pub bound_check: Option<BoundCheck>,
    pub bound_check_error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BandsCache {
    report: BandsReport,
    /// energies[k * nbands + b].
    energies: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WannierReport {
    pub hypothesis: Hypothesis,
    pub radius: f64,
    pub spacing: f64,
    pub nodes_per_cell: usize,
    pub center: Vec2,
    pub raw_norm: f64,
    pub decay_rate: f64,
    pub decay_prefactor: f64,
    pub fit_residual: f64,
    pub harmonic: HarmonicData,
    pub hoppings: Vec<HoppingRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EffectiveReport {
    pub epsilon: f64,
    pub kappa: f64,
    pub geometry: Geometry,
    pub dimension: usize,
    pub nonzeros: usize,
    pub harmonic: HarmonicData,
    pub spacing: f64,
    pub predicted: Vec<f64>,
    pub deviations: Vec<f64>,
    pub spectrum: SpectrumReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub fits: Vec<ScalingFit>,
    /// (eps, eps / min gap) per constant-field cell.
    pub implied_c2: Vec<(f64, f64)>,
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunOutcome {
    pub report_path: PathBuf,
    pub manifest: RunManifest,
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    lat: Lattice,
    out: PathBuf,
    use_cache: bool,
    stages: Vec<StageRecord>,
    cells: Vec<CellStatus>,
    bands: Option<BandStructure>,
    wannier_fn: Option<WannierFunction>,
    current: Option<&'static str>,
}

#[derive(Serialize)]
struct BandsSlice<'a> {
    lattice: &'a LatticeConfig,
    potential: &'a PotentialSpec,
    solver: &'a SolverConfig,
}

#[derive(Serialize)]
struct WannierSlice<'a> {
    bands: BandsSlice<'a>,
    wannier: &'a WannierConfig,
}

impl<'a> Runner<'a> {
    fn timed<T>(&mut self, stage: &'static str, f: impl FnOnce(&mut Self) -> Result<(T, bool)>) -> Result<T> {
        self.current = Some(stage);
        let t = Instant::now();
        let (v, hit) = f(self)?;
        self.stages.push(StageRecord { stage: stage.into(), seconds: t.elapsed().as_secs_f64(), cache_hit: hit });
        Ok(v)
    }

    fn cache_path(&self, stage: &str, hash: &str) -> PathBuf {
        self.out.join("cache").join(format!("{stage}-{hash}.json"))
    }

    fn cache_load<T: for<'de> Deserialize<'de>>(&self, stage: &str, hash: &str) -> Option<T> {
        if !self.use_cache {
            return None;
        }
        let text = std::fs::read_to_string(self.cache_path(stage, hash)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn cache_store<T: Serialize>(&self, stage: &str, hash: &str, v: &T) -> Result<()> {
        if !self.use_cache {
            return Ok(());
        }
        write_atomic(&self.cache_path(stage, hash), &to_json_bytes(v)?)
    }

    fn band_structure(&mut self) -> Result<BandStructure> {
        if let Some(bs) = &self.bands {
            return Ok(bs.clone());
        }
        let s = self.cfg.solver;
        let bs = solve_bands(&self.cfg.potential, &self.lat, s.grid_n, s.nbands, s.cutoff)?;
        self.bands = Some(bs.clone());
        Ok(bs)
    }

    fn bands_slice(&self) -> BandsSlice<'a> {
        BandsSlice { lattice: &self.cfg.lattice, potential: &self.cfg.potential, solver: &self.cfg.solver }
    }

    fn bands_stage(&mut self) -> Result<BandsCache> {
        self.timed("bands", |r| {
            let hash = content_hash(&r.bands_slice());
            if let Some(c) = r.cache_load::<BandsCache>("bands", &hash) {
                return Ok((c, true));
            }
            let bs = r.band_structure()?;
            let band_ranges = (0..bs.nbands)
                .map(|b| {
                    let v = bs.band(b).values;
                    [v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)]
                })
                .collect();
            let (harmonic, harmonic_error) = split(band_minimum_hessian(&bs.band(0), &r.lat));
            let (bound_check, bound_check_error) = split(ground_state_bound_check(&bs));
            let report = BandsReport {
                grid_n: bs.grid_n,
                cutoff: bs.cutoff,
                nbands: bs.nbands,
                hypothesis: classify_hypothesis(&bs, None),
                band_ranges,
                harmonic,
                harmonic_error,
                bound_check,
                bound_check_error,
            };
            let c = BandsCache { report, energies: bs.energies.clone() };
            r.cache_store("bands", &hash, &c)?;
            Ok((c, false))
        })
    }

    fn wannier_defaults(&self) -> (f64, f64) {
        let lat = &self.lat;
        let diameter = norm(crate::lattice::add(lat.e1, lat.e2)).max(norm(crate::lattice::sub(lat.e1, lat.e2)));
        // The default is capped so the disk fits the gridN-cell supercell.
        let fit = (self.cfg.solver.grid_n as f64 - 2.0) / 2.0 * 2.0 * std::f64::consts::PI / norm(lat.dual1).max(norm(lat.dual2));
        let radius = self.cfg.wannier.radius.unwrap_or((6.0 * diameter).min(fit));
        let spacing = self.cfg.wannier.spacing.unwrap_or(lat.lattice_constant() / 16.0);
        (radius, spacing)
    }

    fn wannier_stage(&mut self, need_grid: bool) -> Result<WannierReport> {
        self.timed("wannier", |r| {
            let hash = content_hash(&WannierSlice { bands: r.bands_slice(), wannier: &r.cfg.wannier });
            if !need_grid {
                if let Some(rep) = r.cache_load::<WannierReport>("wannier", &hash) {
                    return Ok((rep, true));
                }
            }
            let bs = r.band_structure()?;
            let hypothesis = classify_hypothesis(&bs, None);
            if hypothesis == Hypothesis::Crossing {
                return Err(Error::CrossingBandRefused);
            }
            let fixed = fix_gauge_with_fallback(&bs)?;
            let (radius, spacing) = r.wannier_defaults();
            let w = synthesize_wannier(&fixed, radius, spacing)?;
            let h = hoppings_from_band(&bs.band(0), &r.lat, r.cfg.wannier.trunc_tol);
            let harmonic = band_minimum_hessian_fourier(&h, &r.lat, bs.grid_n)?;
            let rep = WannierReport {
                hypothesis,
                radius,
                spacing,
                nodes_per_cell: w.grid.m,
                center: w.center,
                raw_norm: w.raw_norm,
                decay_rate: w.decay_rate,
                decay_prefactor: w.decay_prefactor,
                fit_residual: w.fit_residual,
                harmonic,
                hoppings: h.records(),
            };
            r.cache_store("wannier", &hash, &rep)?;
            r.wannier_fn = Some(w);
            Ok((rep, false))
        })
    }

    /// hopRadius, defaulting to six lattice constants.
    fn hop_radius(&self) -> f64 {
        self.cfg.effective.hop_radius.unwrap_or(6.0 * self.lat.lattice_constant())
    }

    /// Zero-field hoppings restricted to hopRadius, with their harmonic data.
    fn base_hoppings(&mut self) -> Result<(HoppingSet, HarmonicData)> {
        let need_grid = self.cfg.effective.magnetic_correction;
        let (h, hd) = match &self.cfg.hoppings {
            Some(recs) => {
                let h = HoppingSet::from_records(&self.lat, recs)?;
                let hd = band_minimum_hessian_fourier(&h, &self.lat, self.cfg.solver.grid_n)?;
                (h, hd)
            }
            None => {
                let rep = self.wannier_stage(need_grid)?;
                (HoppingSet::from_records(&self.lat, &rep.hoppings)?, rep.harmonic)
            }
        };
        let r = self.hop_radius();
        let kept: BTreeMap<[i64; 2], _> = h.iter().filter(|(g, _)| norm(self.lat.position(**g)) <= r * (1.0 + 1e-12)).map(|(g, v)| (*g, *v)).collect();
        if kept.len() == h.len() {
            return Ok((h, hd));
        }
        let h = HoppingSet::from_map(&self.lat, kept, h.trunc_tol);
        let hd = band_minimum_hessian_fourier(&h, &self.lat, self.cfg.solver.grid_n)?;
        Ok((h, hd))
    }

    /// Hoppings entering the Peierls matrix at this eps.
    fn hoppings_at(&mut self, h0: &HoppingSet, hd0: &HarmonicData, eps: f64) -> Result<(HoppingSet, HarmonicData)> {
        if !self.cfg.effective.magnetic_correction {
            return Ok((h0.clone(), *hd0));
        }
        if self.cfg.hoppings.is_some() {
            return Err(Error::ConfigInvalid("magneticCorrection needs the Wannier stage, not given hoppings".into()));
        }
        let w = self.wannier_fn.clone().ok_or_else(|| Error::InvalidArgument("Wannier grid unavailable".into()))?;
        let hop_radius = self.hop_radius();
        let sites = self.lat.enumerate_sites(hop_radius);
        let gram = magnetic_gramian(&w, &sites, eps, 0.0, &self.cfg.field)?;
        let h = magnetic_hoppings(&w, &gram, &self.cfg.potential, hop_radius, self.cfg.wannier.trunc_tol, Some(h0))?;
        let hd = band_minimum_hessian_fourier(&h, &self.lat, self.cfg.solver.grid_n)?;
        Ok((h, hd))
    }

    fn effective_stage(&mut self) -> Result<(EffectiveReport, String)> {
        let (h0, hd0) = self.base_hoppings()?;
        self.timed("effective", |r| {
            let eps = r.cfg.epsilon()?;
            let kappa = r.cfg.effective.kappa;
            let (h, hd) = r.hoppings_at(&h0, &hd0, eps)?;
            let field = &r.cfg.field;
            let geometry = r.cfg.effective.geometry.unwrap_or(Geometry::Ball { radius: default_ball_radius(eps, field.b0) });
            let pm = build_effective_matrix(&h, &r.lat, field, eps, kappa, geometry)?;
            let params = r.cfg.analysis;
            let spacing = landau_spacing(&hd, field.b0, eps);
            let predicted = landau_prediction(&hd, field.b0, eps, params.landau_levels - 1);
            let window = params.window.unwrap_or_else(|| landau_window(&hd, field.b0, eps, params.landau_levels));
            let cell = cell_spectrum(&h, &r.lat, field, eps, kappa, geometry, window, params.gap_threshold_frac * spacing, &params)?;
            let deviations = landau_cluster_check(&cell.report, &predicted, spacing).unwrap_or_default();
            let rep = EffectiveReport {
                epsilon: eps,
                kappa,
                geometry,
                dimension: pm.matrix.dim,
                nonzeros: pm.matrix.nnz(),
                harmonic: hd,
                spacing,
                predicted,
                deviations,
                spectrum: cell.report,
            };
            Ok(((rep, coo_csv(&pm.matrix)), false))
        })
    }

    fn analyze_stage(&mut self) -> Result<PerturbedLandauResult> {
        let (h0, hd0) = self.base_hoppings()?;
        self.timed("analyze", |r| {
            let eps = r.cfg.epsilon()?;
            let mut kappas = r.cfg.sweep.kappa.clone();
            if kappas.is_empty() {
                kappas.push(r.cfg.effective.kappa);
            }
            let (h, hd) = r.hoppings_at(&h0, &hd0, eps)?;
            let radius = match r.cfg.effective.geometry {
                Some(Geometry::Ball { radius }) => radius,
                Some(Geometry::Torus { .. }) => return Err(Error::ConfigInvalid("analyze runs on a ball geometry".into())),
                None => default_ball_radius(eps, r.cfg.field.b0),
            };
            let res = perturbed_landau_check(&h, &r.lat, &r.cfg.field, &hd, eps, &kappas, radius, &r.cfg.analysis)?;
            for c in &res.cells {
                r.cells.push(CellStatus { epsilon: eps, kappa: c.kappa, status: c.status.clone(), error_kind: c.error_kind.clone() });
            }
            Ok((res, false))
        })
    }

    fn sweep_stage(&mut self) -> Result<SweepReport> {
        let (h0, hd0) = self.base_hoppings()?;
        self.timed("sweep", |r| {
            if r.cfg.sweep.epsilon.is_empty() {
                return Err(Error::ConfigInvalid("sweep.epsilon is empty".into()));
            }
            let mut models = Vec::new();
            for &eps in &r.cfg.sweep.epsilon {
                let (hoppings, harmonic) = r.hoppings_at(&h0, &hd0, eps)?;
                models.push(EpsilonModel { epsilon: eps, hoppings, harmonic });
            }
            let res = scaling_sweep(&models, &r.lat, &r.cfg.field, &r.cfg.sweep.kappa, &r.cfg.sweep.geometry, &r.cfg.analysis);
            for c in &res.cells {
                r.cells.push(CellStatus { epsilon: c.epsilon, kappa: c.kappa, status: c.status.clone(), error_kind: c.error_kind.clone() });
            }
            let implied = implied_c2(res.cells.iter().filter(|c| c.kappa == 0.0).cloned().collect::<Vec<_>>().as_slice());
            Ok((SweepReport { cells: res.cells, fits: res.fits, implied_c2: implied }, false))
        })
    }
}

fn split<T>(r: Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.kind().to_string())),
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_text(out: &Path, name: &str, text: &str) -> Result<()> {
    write_atomic(&out.join(name), text.as_bytes())
}

fn cell_header(c: &SweepCell) -> String {
    let g = match c.geometry {
        Some(Geometry::Torus { q, repeat }) => format!("torus(q={q};repeat={repeat})"),
        Some(Geometry::Ball { radius }) => format!("ball(R={radius})"),
        None => "none".into(),
    };
    format!("eps={};kappa={};{g}", c.epsilon, c.kappa)
}

/// Runs `sub` and its prerequisites, writing report.json, spectra.csv,
/// stage-specific files and manifest.json into `out`. On failure an
/// error.json record and a failing manifest are written before returning.
pub fn run_pipeline(cfg: &RunConfig, sub: Subcommand, out: &Path, use_cache: bool) -> Result<RunOutcome> {
    cfg.validate()?;
    let lat = cfg.lattice()?;
    let started = unix_now();
    let config_hash = content_hash(cfg);
    let mut r = Runner {
        cfg,
        lat,
        out: out.to_path_buf(),
        use_cache,
        stages: Vec::new(),
        cells: Vec::new(),
        bands: None,
        wannier_fn: None,
        current: None,
    };
    let result = execute(&mut r, sub, out, &config_hash);
    let (status, error) = match &result {
        Ok(()) => ("ok", None),
        Err(e) => ("failed", Some(ErrorRecord { kind: e.kind().into(), message: e.to_string(), stage: r.current.map(String::from) })),
    };
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        subcommand: sub.name().into(),
        config_hash,
        started_unix: started,
        finished_unix: unix_now(),
        stages: r.stages,
        cells: r.cells,
        status: status.into(),
        failing_stage: error.as_ref().and_then(|e| e.stage.clone()),
        error: error.clone(),
    };
    match &error {
        Some(e) => write_atomic(&out.join("error.json"), &to_json_bytes(e)?)?,
        None => {
            let _ = std::fs::remove_file(out.join("error.json"));
        }
    }
    write_atomic(&out.join("manifest.json"), &to_json_bytes(&manifest)?)?;
    result.map(|()| RunOutcome { report_path: out.join("report.json"), manifest })
}

fn execute(r: &mut Runner, sub: Subcommand, out: &Path, hash: &str) -> Result<()> {
    let name = sub.name();
    let (report, spectra) = match sub {
        Subcommand::Bands => {
            let c = r.bands_stage()?;
            let rep = &c.report;
            let (n, nb) = (rep.grid_n, rep.nbands);
            let mut header = vec!["k1".to_string(), "k2".into(), "theta1".into(), "theta2".into()];
            header.extend((0..nb).map(|b| format!("E{b}")));
            let lat = r.lat;
            let rows = (0..n * n).map(|k| {
                let t = grid_theta(&lat, n, k / n, k % n);
                let mut row = vec![(k / n) as f64, (k % n) as f64, t[0], t[1]];
                row.extend_from_slice(&c.energies[k * nb..(k + 1) * nb]);
                row
            });
            let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            write_text(out, "bands.csv", &rows_csv(&hdr, rows))?;
            write_atomic(&out.join("bands.json"), &to_json_bytes(rep)?)?;
            let cols: Vec<(String, Vec<f64>)> = (0..nb).map(|b| (format!("band{b}"), (0..n * n).map(|k| c.energies[k * nb + b]).collect())).collect();
            (emit_report(rep, name, hash, SCHEMA_VERSION)?, columns_csv(&cols))
        }
        Subcommand::Wannier => {
            let rep = r.wannier_stage(true)?;
            let w = r.wannier_fn.as_ref().expect("grid computed");
            let rows = w.grid.values.iter().enumerate().filter(|(_, v)| v.norm_sqr() > 0.0).map(|(i, v)| {
                let x = w.grid.position(w.grid.node(i));
                vec![x[0], x[1], v.re, v.im]
            });
            write_text(out, "wannier.csv", &rows_csv(&["x1", "x2", "re", "im"], rows))?;
            #[derive(Serialize)]
            #[serde(rename_all = "camelCase")]
            struct Sidecar<'a> {
                config_hash: String,
                nodes_per_cell: usize,
                half_width: usize,
                e1: Vec2,
                e2: Vec2,
                report: &'a WannierReport,
            }
            let sidecar = Sidecar {
                config_hash: content_hash(&WannierSlice { bands: r.bands_slice(), wannier: &r.cfg.wannier }),
                nodes_per_cell: w.grid.m,
                half_width: w.grid.half,
                e1: r.lat.e1,
                e2: r.lat.e2,
                report: &rep,
            };
            write_atomic(&out.join("wannier.json"), &to_json_bytes(&sidecar)?)?;
            let cols = vec![("hopping_modulus".to_string(), rep.hoppings.iter().map(|h| h.re.hypot(h.im)).collect())];
            (emit_report(&rep, name, hash, SCHEMA_VERSION)?, columns_csv(&cols))
        }
        Subcommand::Effective => {
            let (rep, coo) = r.effective_stage()?;
            write_text(out, "matrix.csv", &coo)?;
            let cols = vec![(format!("eps={};kappa={}", rep.epsilon, rep.kappa), rep.spectrum.eigenvalues.clone())];
            (emit_report(&rep, name, hash, SCHEMA_VERSION)?, columns_csv(&cols))
        }
        Subcommand::Analyze => {
            let rep = r.analyze_stage()?;
            let cols: Vec<(String, Vec<f64>)> =
                rep.cells.iter().map(|c| (format!("eps={};kappa={}", rep.epsilon, c.kappa), c.eigenvalues.clone())).collect();
            (emit_report(&rep, name, hash, SCHEMA_VERSION)?, columns_csv(&cols))
        }
        Subcommand::Sweep => {
            let rep = r.sweep_stage()?;
            let cols: Vec<(String, Vec<f64>)> = rep.cells.iter().map(|c| (cell_header(c), c.eigenvalues.clone())).collect();
            (emit_report(&rep, name, hash, SCHEMA_VERSION)?, columns_csv(&cols))
        }
    };
    write_atomic(&out.join("report.json"), &report)?;
    write_text(out, "spectra.csv", &spectra)
}

/// Process exit code for a run result: 0 ok, 2 invalid config, 1 otherwise.
pub fn exit_code(r: &Result<RunOutcome>) -> i32 {
    match r {
        Ok(_) => 0,
        Err(Error::ConfigInvalid(_)) => 2,
        Err(_) => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_rejected() {
        let t = r#"{"lattice":{"e1":[1,0],"e2":[0,1]},"field":{"B0":1},"bogus":1}"#;
        assert!(matches!(RunConfig::from_json(t), Err(Error::ConfigInvalid(_))));
        let t = r#"{"lattice":{"e1":[1,0],"e2":[0,1]},"field":{"B0":1},"solver":{"gridN":7}}"#;
        assert!(matches!(RunConfig::from_json(t), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn slice_hash_ignores_unrelated_fields() {
        let a = RunConfig::from_json(r#"{"lattice":{"e1":[1,0],"e2":[0,1]},"field":{"B0":1}}"#).unwrap();
        let mut b = a.clone();
        b.field.b0 = 2.0;
        let slice = |c: &RunConfig| content_hash(&BandsSlice { lattice: &c.lattice, potential: &c.potential, solver: &c.solver });
        assert_eq!(slice(&a), slice(&b));
        b.solver.cutoff = 9;
        assert_ne!(slice(&a), slice(&b));
        assert_ne!(content_hash(&a), content_hash(&b));
    }
}
