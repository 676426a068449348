//! Configuration-driven Monte-Carlo experiments.
//!
//! A TOML file describes the radar, the sampling, the waveform, the sweep and
//! the list of pipelines ("runs") to compare. Every trial draws its scene and
//! noise from generators seeded by `(master seed, point, trial)`, so results
//! do not depend on thread count or scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Deserialize;

use crate::dictionaries::{
    build_sampling, doppler_dictionary, mu_profile, mu_profile_fft, welch_bound, KroneckerShape, SamplingIndexSet,
    SamplingScheme, SamplingSpec, DEFAULT_KRONECKER_BUDGET,
};
use crate::ds_codes::{catalog, DifferenceSet};
use crate::error::{Error, Result};
use crate::linalg::{cis_turns, C64};
use crate::metrics::{match_detections, normalized_rmse, prob_detection, separate_detection, NyquistBins, TrialScore};
use crate::recovery::{
    df_recover, doppler_focus, standard_recover, structured_recover, DelayDopplerMap, KroneckerMode, MapEntry,
    MatchMode, RecoveryConfig, Sparsity,
};
use crate::scene_measurement::{
    add_measurement_noise, add_time_noise, fourier_extract, noise_variance, random_scene, synthesize_model,
    synthesize_time_oracle, RadarParams, Scene, SceneOptions, SpillPolicy, Target, TimeBlocks,
};
use crate::waveforms::{Waveform, WaveformKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Detect,
    Rmse,
    Separate,
    PulsesSweep,
    TargetsSweep,
    Coherence,
    Spectrum,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Detect => "detect",
            ExperimentKind::Rmse => "rmse",
            ExperimentKind::Separate => "separate",
            ExperimentKind::PulsesSweep => "pulses-sweep",
            ExperimentKind::TargetsSweep => "targets-sweep",
            ExperimentKind::Coherence => "coherence",
            ExperimentKind::Spectrum => "spectrum",
        }
    }

    fn is_monte_carlo(&self) -> bool {
        !matches!(self, ExperimentKind::Coherence | ExperimentKind::Spectrum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Standard,
    Structured,
    Df,
    ModifiedDf,
    NyquistReference,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Standard => "standard",
            Model::Structured => "structured",
            Model::Df => "df",
            Model::ModifiedDf => "modified-df",
            Model::NyquistReference => "nyquist-reference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Synthesis {
    /// Closed-form measurement model.
    #[default]
    Model,
    /// Nyquist-rate time samples and DFT extraction.
    Oracle,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarSection {
    pub pri_s: f64,
    pub bandwidth_hz: f64,
    pub pulses: usize,
    pub delay_grids: usize,
    pub doppler_grids: usize,
}

impl RadarSection {
    pub fn params(&self) -> RadarParams {
        RadarParams {
            pri_s: self.pri_s,
            bandwidth_hz: self.bandwidth_hz,
            pulses: self.pulses,
            delay_grids: self.delay_grids,
            doppler_grids: self.doppler_grids,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_scheme")]
    pub scheme: SamplingScheme,
    #[serde(default = "default_ds")]
    pub ds: String,
    /// `K`; defaults to the difference-set size.
    pub count: Option<usize>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            scheme: default_scheme(),
            ds: default_ds(),
            count: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSection {
    #[serde(default = "default_waveform")]
    pub kind: WaveformKind,
    /// Defaults: `τ` for DS-FCM and LFM, `1/B_h` for rect.
    pub pulse_width_s: Option<f64>,
}

impl Default for WaveformSection {
    fn default() -> Self {
        Self {
            kind: default_waveform(),
            pulse_width_s: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    #[serde(default = "one")]
    pub targets: usize,
    #[serde(default)]
    pub on_grid: bool,
    #[serde(default)]
    pub distinct_delays: bool,
    #[serde(default)]
    pub synthesis: Synthesis,
    #[serde(default = "default_spill")]
    pub spill: SpillPolicy,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            targets: 1,
            on_grid: false,
            distinct_delays: false,
            synthesis: Synthesis::Model,
            spill: default_spill(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// `inf` means noiseless.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub pulses: Vec<usize>,
    #[serde(default)]
    pub targets: Vec<usize>,
    #[serde(default)]
    pub delay_spacing_bins: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparsityMode {
    #[default]
    Known,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KroneckerChoice {
    #[default]
    Implicit,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchChoice {
    #[default]
    Correlate,
    Fft,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySection {
    #[serde(default)]
    pub sparsity: SparsityMode,
    pub residual_tol: Option<f64>,
    #[serde(default)]
    pub kronecker: KroneckerChoice,
    #[serde(default = "default_budget")]
    pub budget_bytes: u64,
    #[serde(default)]
    pub doppler_match: MatchChoice,
}

impl Default for RecoverySection {
    fn default() -> Self {
        Self {
            sparsity: SparsityMode::Known,
            residual_tol: None,
            kronecker: KroneckerChoice::Implicit,
            budget_bytes: default_budget(),
            doppler_match: MatchChoice::Correlate,
        }
    }
}

/// One pipeline to evaluate. Unset fields fall back to the model's usual
/// pairing: `df` uses consecutive sampling with a rect pulse, `modified-df`
/// uses DS sampling with DS-FCM, and the others use the global sections.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub model: Model,
    pub sampling: Option<SamplingScheme>,
    pub waveform: Option<WaveformKind>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationSection {
    #[serde(default = "two")]
    pub delay_spacing_bins: f64,
    #[serde(default = "onef")]
    pub doppler_spacing_bins: f64,
}

impl Default for SeparationSection {
    fn default() -> Self {
        Self {
            delay_spacing_bins: 2.0,
            doppler_spacing_bins: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceSection {
    #[serde(default = "all_schemes")]
    pub schemes: Vec<SamplingScheme>,
    /// Random index sets drawn for the coherence histogram (0 disables it).
    #[serde(default)]
    pub histogram_trials: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for CoherenceSection {
    fn default() -> Self {
        Self {
            schemes: all_schemes(),
            histogram_trials: 0,
            bins: default_bins(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(default = "all_waveforms")]
    pub waveforms: Vec<WaveformKind>,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Half-width of the frequency axis; defaults to `B_h`.
    pub span_hz: Option<f64>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            waveforms: all_waveforms(),
            points: default_points(),
            span_hz: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    pub radar: RadarSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub waveform: WaveformSection,
    #[serde(default)]
    pub scene: SceneSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub recovery: RecoverySection,
    #[serde(default)]
    pub runs: Vec<RunSpec>,
    #[serde(default)]
    pub separation: SeparationSection,
    #[serde(default)]
    pub coherence: CoherenceSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
}

fn default_scheme() -> SamplingScheme {
    SamplingScheme::DifferenceSet
}
fn default_ds() -> String {
    "91-10-1".into()
}
fn default_waveform() -> WaveformKind {
    WaveformKind::DsFcm
}
fn default_spill() -> SpillPolicy {
    SpillPolicy::SteadyState
}
fn default_budget() -> u64 {
    DEFAULT_KRONECKER_BUDGET as u64
}
fn default_bins() -> usize {
    50
}
fn default_points() -> usize {
    2001
}
fn one() -> usize {
    1
}
fn onef() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn all_schemes() -> Vec<SamplingScheme> {
    vec![
        SamplingScheme::Consecutive,
        SamplingScheme::Random,
        SamplingScheme::DifferenceSet,
    ]
}
fn all_waveforms() -> Vec<WaveformKind> {
    vec![WaveformKind::Rect, WaveformKind::Lfm, WaveformKind::DsFcm]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        self.radar.params().validate()?;
        if self.kind.is_monte_carlo() {
            if self.runs.is_empty() {
                return Err(Error::Config("at least one [[runs]] entry is required".into()));
            }
            if self.sweep.snr_db.is_empty() {
                return Err(Error::Config("sweep.snr_db must list at least one value".into()));
            }
            if self.sweep.snr_db.iter().any(|s| s.is_nan()) {
                return Err(Error::Config("sweep.snr_db contains NaN".into()));
            }
            let needs = |v: bool, what: &str| {
                if v {
                    Err(Error::Config(format!("{} needs sweep.{what}", self.kind.name())))
                } else {
                    Ok(())
                }
            };
            needs(
                self.kind == ExperimentKind::PulsesSweep && self.sweep.pulses.is_empty(),
                "pulses",
            )?;
            needs(
                self.kind == ExperimentKind::TargetsSweep && self.sweep.targets.is_empty(),
                "targets",
            )?;
            for run in &self.runs {
                let pipe = Pipeline::resolve(self, run)?;
                for p in self.points() {
                    pipe.prepare(&p.params)?;
                }
            }
        }
        Ok(())
    }

    fn waveform_for(&self, kind: WaveformKind, ds: &DifferenceSet) -> Result<Waveform> {
        let tau = self.radar.pri_s;
        let b = self.radar.bandwidth_hz;
        let pw = match (self.waveform.pulse_width_s, kind == self.waveform.kind) {
            (Some(pw), true) => pw,
            _ => match kind {
                WaveformKind::Rect => 1.0 / b,
                WaveformKind::Lfm | WaveformKind::DsFcm => tau,
            },
        };
        match kind {
            WaveformKind::Rect => Waveform::rect(pw, tau, b),
            WaveformKind::Lfm => Waveform::lfm(pw, tau, b),
            WaveformKind::DsFcm => Waveform::ds_fcm(ds, pw, tau),
        }
    }

    /// Sweep points in output order.
    fn points(&self) -> Vec<Point> {
        let base = self.radar.params();
        let mut out = Vec::new();
        let snrs = &self.sweep.snr_db;
        let mut push = |sweep: Option<f64>, params: RadarParams, targets: usize, spacing: f64| {
            for &snr_db in snrs {
                out.push(Point {
                    sweep,
                    snr_db,
                    params,
                    targets,
                    spacing_bins: spacing,
                });
            }
        };
        let spacing = self.separation.delay_spacing_bins;
        match self.kind {
            ExperimentKind::PulsesSweep => {
                for &p in &self.sweep.pulses {
                    push(
                        Some(p as f64),
                        RadarParams { pulses: p, ..base },
                        self.scene.targets,
                        spacing,
                    );
                }
            }
            ExperimentKind::TargetsSweep => {
                for &s in &self.sweep.targets {
                    push(Some(s as f64), base, s, spacing);
                }
            }
            ExperimentKind::Separate if !self.sweep.delay_spacing_bins.is_empty() => {
                for &d in &self.sweep.delay_spacing_bins {
                    push(Some(d), base, 2, d);
                }
            }
            ExperimentKind::Separate => push(None, base, 2, spacing),
            _ => push(None, base, self.scene.targets, spacing),
        }
        out
    }

    fn sweep_column(&self) -> Option<&'static str> {
        match self.kind {
            ExperimentKind::PulsesSweep => Some("pulses"),
            ExperimentKind::TargetsSweep => Some("targets"),
            ExperimentKind::Separate if !self.sweep.delay_spacing_bins.is_empty() => Some("delay_spacing_bins"),
            _ => None,
        }
    }

    fn recovery_config(&self, targets: usize) -> RecoveryConfig {
        RecoveryConfig {
            sparsity: match self.recovery.sparsity {
                SparsityMode::Known => Sparsity::Known(targets),
                SparsityMode::Auto => Sparsity::Auto,
            },
            residual_tol: self.recovery.residual_tol,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    sweep: Option<f64>,
    snr_db: f64,
    params: RadarParams,
    targets: usize,
    spacing_bins: f64,
}

/// A run with its sampling and waveform fixed.
#[derive(Debug, Clone)]
struct Pipeline {
    model: Model,
    scheme: Option<SamplingScheme>,
    ds: DifferenceSet,
    count: usize,
    waveform: Waveform,
    sampling_label: &'static str,
}

/// Per-point state shared by every trial of a pipeline.
struct Prepared {
    /// `None` for random sampling, which is redrawn every trial.
    sampling: Option<(SamplingIndexSet, Vec<C64>, Array2<C64>)>,
    psi: Array2<C64>,
}

impl Pipeline {
    fn resolve(cfg: &ExperimentConfig, run: &RunSpec) -> Result<Self> {
        let ds = catalog(&cfg.sampling.ds)?;
        let (scheme, kind) = match run.model {
            Model::Df => (
                run.sampling.unwrap_or(SamplingScheme::Consecutive),
                run.waveform.unwrap_or(WaveformKind::Rect),
            ),
            Model::ModifiedDf => (
                run.sampling.unwrap_or(SamplingScheme::DifferenceSet),
                run.waveform.unwrap_or(WaveformKind::DsFcm),
            ),
            Model::Standard | Model::Structured => (
                run.sampling.unwrap_or(cfg.sampling.scheme),
                run.waveform.unwrap_or(cfg.waveform.kind),
            ),
            Model::NyquistReference => (SamplingScheme::Consecutive, run.waveform.unwrap_or(WaveformKind::Rect)),
        };
        let waveform = cfg.waveform_for(kind, &ds)?;
        let count = cfg.sampling.count.unwrap_or(ds.size());
        let (scheme, sampling_label) = if run.model == Model::NyquistReference {
            (None, "nyquist")
        } else {
            (Some(scheme), scheme.name())
        };
        Ok(Self {
            model: run.model,
            scheme,
            ds,
            count,
            waveform,
            sampling_label,
        })
    }

    fn sampling(&self, params: &RadarParams, seed: u64) -> Result<SamplingIndexSet> {
        let spec = match self.scheme.unwrap_or(SamplingScheme::Consecutive) {
            SamplingScheme::Consecutive => SamplingSpec::Consecutive { count: self.count },
            SamplingScheme::Random => SamplingSpec::Random {
                count: self.count,
                seed,
            },
            SamplingScheme::DifferenceSet => SamplingSpec::DifferenceSet(&self.ds),
        };
        build_sampling(spec, params.delay_grids, params.fourier_range()?)
    }

    fn with_normalizers(&self, s: SamplingIndexSet) -> Result<(SamplingIndexSet, Vec<C64>, Array2<C64>)> {
        let norms = self.waveform.normalizers(&s.indices, s.range)?;
        let phi = s.delay_dictionary()?.matrix;
        Ok((s, norms, phi))
    }

    fn prepare(&self, params: &RadarParams) -> Result<Prepared> {
        let psi = doppler_dictionary(params.pulses, params.doppler_grids, params.pri_s)?.matrix;
        let sampling = match self.scheme {
            None | Some(SamplingScheme::Random) => {
                if self.scheme.is_some() {
                    // Validate once with a fixed draw.
                    self.with_normalizers(self.sampling(params, 0)?)?;
                }
                None
            }
            Some(_) => Some(self.with_normalizers(self.sampling(params, 0)?)?),
        };
        Ok(Prepared { sampling, psi })
    }
}

/// Generator for trial `trial` at point `point`; `stream` separates the
/// scene draw from each pipeline's noise.
pub fn trial_rng(master: u64, point: usize, trial: usize, stream: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&(point as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&(trial as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng
}

fn draw_scene(cfg: &ExperimentConfig, point: &Point, rng: &mut ChaCha8Rng) -> Result<Scene> {
    let params = &point.params;
    if cfg.kind != ExperimentKind::Separate {
        let opts = SceneOptions {
            on_grid: cfg.scene.on_grid,
            distinct_delays: cfg.scene.distinct_delays,
            delay_limit_s: None,
        };
        return random_scene(point.targets, params, opts, rng);
    }
    let dt = point.spacing_bins * params.delay_bin_s();
    let df = cfg.separation.doppler_spacing_bins * params.doppler_bin_hz();
    if dt >= params.pri_s {
        return Err(Error::Config(format!("delay spacing {dt} s exceeds the PRI")));
    }
    let t0 = rng.random::<f64>() * (params.pri_s - dt);
    let f0 = (rng.random::<f64>() - 0.5) / params.pri_s;
    let period = 1.0 / params.pri_s;
    let f1 = (f0 + df + period / 2.0).rem_euclid(period) - period / 2.0;
    Ok(Scene::new(vec![
        Target {
            amplitude: cis_turns(rng.random::<f64>()),
            delay_s: t0,
            doppler_hz: f0,
        },
        Target {
            amplitude: cis_turns(rng.random::<f64>()),
            delay_s: t0 + dt,
            doppler_hz: f1,
        },
    ]))
}

/// Synthesises the noisy measurement matrix for one pipeline.
fn measure(
    cfg: &ExperimentConfig,
    scene: &Scene,
    sampling: &SamplingIndexSet,
    norms: &[C64],
    waveform: &Waveform,
    point: &Point,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<C64>> {
    let params = &point.params;
    let sigma2 = noise_variance(point.snr_db, waveform, params);
    Ok(match cfg.scene.synthesis {
        Synthesis::Model => {
            let mut y = synthesize_model(scene, sampling, params);
            add_measurement_noise(&mut y, sigma2, params.nyquist_samples(), norms, rng);
            y.values
        }
        Synthesis::Oracle => {
            let mut blocks = synthesize_time_oracle(scene, waveform, params, cfg.scene.spill)?;
            add_time_noise(&mut blocks, sigma2, rng);
            fourier_extract(&blocks, sampling, waveform)?.values
        }
    })
}

fn run_trial(
    cfg: &ExperimentConfig,
    pipe: &Pipeline,
    prep: &Prepared,
    point: &Point,
    scene: &Scene,
    rng: &mut ChaCha8Rng,
) -> Result<(DelayDopplerMap, Vec<f64>)> {
    let params = &point.params;
    let rcfg = cfg.recovery_config(point.targets);
    if pipe.model == Model::NyquistReference {
        let map = nyquist_reference(
            scene,
            &pipe.waveform,
            params,
            point.snr_db,
            cfg.scene.spill,
            point.targets,
            rng,
        )?;
        return Ok((map, Vec::new()));
    }
    let drawn;
    let (sampling, norms, phi) = match &prep.sampling {
        Some((s, n, p)) => (s, n, p),
        None => {
            let seed: u64 = rng.random();
            drawn = pipe.with_normalizers(pipe.sampling(params, seed)?)?;
            (&drawn.0, &drawn.1, &drawn.2)
        }
    };
    let y = measure(cfg, scene, sampling, norms, &pipe.waveform, point, rng)?;
    Ok(match pipe.model {
        Model::Structured => {
            let mode = match cfg.recovery.doppler_match {
                MatchChoice::Correlate => MatchMode::Correlate,
                MatchChoice::Fft => MatchMode::Fft,
            };
            let r = structured_recover(&y, phi, &prep.psi, &rcfg, mode)?;
            (r.map, r.residual_history)
        }
        Model::Standard => {
            let mode = match cfg.recovery.kronecker {
                KroneckerChoice::Implicit => KroneckerMode::Implicit,
                KroneckerChoice::Dense => KroneckerMode::Dense {
                    budget_bytes: cfg.recovery.budget_bytes as u128,
                },
            };
            let r = standard_recover(&y, phi, &prep.psi, &rcfg, mode)?;
            (r.map, r.residual_history)
        }
        Model::Df | Model::ModifiedDf => {
            let d = doppler_focus(&y, params.pri_s, &params.doppler_grid());
            (df_recover(&d, phi, &rcfg)?, Vec::new())
        }
        Model::NyquistReference => unreachable!(),
    })
}

/// Scene, recovered map and score of trial 0 at the first sweep point.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub scene: Scene,
    pub map: DelayDopplerMap,
    /// Residual norm after each greedy pick; empty for focusing and Nyquist
    /// pipelines.
    pub residual_history: Vec<f64>,
    pub score: TrialScore,
}

/// Runs trial 0 of the first sweep point for `cfg.runs[run]`, with the same
/// seeds [`run_experiment`] would use.
pub fn single_trial(cfg: &ExperimentConfig, run: usize) -> Result<TrialOutput> {
    cfg.validate()?;
    let spec = cfg
        .runs
        .get(run)
        .ok_or_else(|| Error::Config(format!("run {run} not defined ({} runs)", cfg.runs.len())))?;
    let pipe = Pipeline::resolve(cfg, spec)?;
    let point = cfg.points()[0];
    let prep = pipe.prepare(&point.params)?;
    let scene = draw_scene(cfg, &point, &mut trial_rng(cfg.seed, 0, 0, 0))?;
    let mut rng = trial_rng(cfg.seed, 0, 0, 1 + run as u64);
    let (map, residual_history) = run_trial(cfg, &pipe, &prep, &point, &scene, &mut rng)?;
    let grid = RadarParams {
        delay_grids: map.delay_grids,
        ..point.params
    };
    let score = match_detections(
        &scene,
        &map.to_estimates(&grid),
        NyquistBins::of(&point.params),
        grid.pri_s,
    );
    Ok(TrialOutput {
        scene,
        map,
        residual_history,
        score,
    })
}

/// Index of the first run using `model`.
pub fn run_index(cfg: &ExperimentConfig, model: Model) -> Option<usize> {
    cfg.runs.iter().position(|r| r.model == model)
}

/// Conventional processing at the Nyquist rate: synthesise the sampled
/// echoes, matched-filter every PRI against the pulse, then an `M`-point
/// Doppler transform across pulses. Returns the `count` largest local
/// maxima on the `M×L` grid (`L` Nyquist delay bins).
pub fn nyquist_reference<R: Rng + ?Sized>(
    scene: &Scene,
    waveform: &Waveform,
    params: &RadarParams,
    snr_db: f64,
    spill: SpillPolicy,
    count: usize,
    rng: &mut R,
) -> Result<DelayDopplerMap> {
    let mut blocks = synthesize_time_oracle(scene, waveform, params, spill)?;
    add_time_noise(&mut blocks, noise_variance(snr_db, waveform, params), rng);
    Ok(nyquist_process(&blocks, waveform, params).local_maxima(count))
}

/// Full matched-filter / Doppler map of Nyquist-rate blocks, as a dense
/// [`DelayDopplerMap`] over `M×L`.
pub fn nyquist_process(blocks: &TimeBlocks, waveform: &Waveform, params: &RadarParams) -> DelayDopplerMap {
    let (p_count, l) = blocks.samples.dim();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(l);
    let inv = planner.plan_fft_inverse(l);
    let mut h: Vec<C64> = (0..l)
        .map(|n| waveform.sample(n as f64 * params.pri_s / l as f64))
        .collect();
    fwd.process(&mut h);
    // Matched filter output, L×P (delay bin by pulse).
    let mut mf = Array2::<C64>::zeros((l, p_count));
    let mut buf = vec![C64::new(0.0, 0.0); l];
    for p in 0..p_count {
        buf.iter_mut().zip(blocks.samples.row(p)).for_each(|(b, s)| *b = *s);
        fwd.process(&mut buf);
        buf.iter_mut().zip(&h).for_each(|(b, hk)| *b *= hk.conj());
        inv.process(&mut buf);
        for (n, v) in buf.iter().enumerate() {
            mf[[n, p]] = v / l as f64;
        }
    }
    let z = doppler_focus(&mf, params.pri_s, &params.doppler_grid());
    let entries = z
        .indexed_iter()
        .map(|((n, m), &amplitude)| MapEntry { m, n, amplitude })
        .collect();
    DelayDopplerMap {
        doppler_grids: params.doppler_grids,
        delay_grids: l,
        entries,
    }
}

/// One aggregated `(point, pipeline)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub sweep: Option<f64>,
    pub snr_db: f64,
    pub model: &'static str,
    pub sampling: &'static str,
    pub waveform: &'static str,
    pub trials: usize,
    pub p_detect: f64,
    pub e_t: Option<f64>,
    pub e_f: Option<f64>,
    pub p_separate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceSeries {
    pub scheme: &'static str,
    pub mu_profile: Vec<f64>,
    pub mu: f64,
    pub welch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Coherence of the difference-set dictionary at matched `(N, K)`.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSeries {
    pub waveform: &'static str,
    pub freqs_hz: Vec<f64>,
    pub power_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableData {
    Detection {
        sweep_column: Option<&'static str>,
        rows: Vec<DetectionRow>,
    },
    Coherence {
        series: Vec<CoherenceSeries>,
        histogram: Option<Histogram>,
    },
    Spectrum {
        series: Vec<SpectrumSeries>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub kind: ExperimentKind,
    pub data: TableData,
    /// Wall-clock seconds per `(point, pipeline)`; never part of the CSV.
    pub timings: Vec<(String, f64)>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

impl ResultTable {
    /// Main CSV: `[sweep,]snr_db,model,sampling,waveform,trials,p_detect,e_t,e_f[,p_separate]`
    /// for Monte-Carlo kinds, tidy series otherwise.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.data {
            TableData::Detection { sweep_column, rows } => {
                let separate = self.kind == ExperimentKind::Separate;
                if let Some(col) = sweep_column {
                    out.push_str(col);
                    out.push(',');
                }
                out.push_str("snr_db,model,sampling,waveform,trials,p_detect,e_t,e_f");
                out.push_str(if separate { ",p_separate\n" } else { "\n" });
                for r in rows {
                    if let Some(v) = r.sweep {
                        let _ = write!(out, "{v},");
                    }
                    let _ = write!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        r.snr_db,
                        r.model,
                        r.sampling,
                        r.waveform,
                        r.trials,
                        r.p_detect,
                        fmt_opt(r.e_t),
                        fmt_opt(r.e_f)
                    );
                    if separate {
                        let _ = write!(out, ",{}", fmt_opt(r.p_separate));
                    }
                    out.push('\n');
                }
            }
            TableData::Coherence { series, .. } => {
                out.push_str("scheme,u,mu_of_u\n");
                for s in series {
                    for (i, mu) in s.mu_profile.iter().enumerate() {
                        let _ = writeln!(out, "{},{},{}", s.scheme, i + 1, mu);
                    }
                }
            }
            TableData::Spectrum { series } => {
                out.push_str("waveform,freq_hz,power_db\n");
                for s in series {
                    for (f, p) in s.freqs_hz.iter().zip(&s.power_db) {
                        let _ = writeln!(out, "{},{},{}", s.waveform, f, p);
                    }
                }
            }
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("cell,seconds\n");
        for (label, secs) in &self.timings {
            let _ = writeln!(out, "{label},{secs}");
        }
        out
    }
}

/// Runs every sweep point and pipeline of `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::Coherence => run_coherence(cfg),
        ExperimentKind::Spectrum => run_spectrum(cfg),
        _ => run_monte_carlo(cfg),
    }
}

fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let pipes: Vec<Pipeline> = cfg
        .runs
        .iter()
        .map(|r| Pipeline::resolve(cfg, r))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (pi, point) in cfg.points().iter().enumerate() {
        let scenes: Vec<Scene> = (0..cfg.trials)
            .map(|t| draw_scene(cfg, point, &mut trial_rng(cfg.seed, pi, t, 0)))
            .collect::<Result<_>>()?;
        for (ri, pipe) in pipes.iter().enumerate() {
            let start = Instant::now();
            let prep = pipe.prepare(&point.params)?;
            let scores: Vec<TrialScore> = scenes
                .par_iter()
                .enumerate()
                .map(|(t, scene)| {
                    let mut rng = trial_rng(cfg.seed, pi, t, 1 + ri as u64);
                    score_trial(cfg, pipe, &prep, point, scene, &mut rng).map_err(|e| Error::Trial {
                        point: pi,
                        trial: t,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<_>>()?;
            rows.push(aggregate(cfg, pipe, point, &scores));
            timings.push((
                format!("{}:{}:{}", pi, pipe.model.name(), pipe.waveform.kind().name()),
                start.elapsed().as_secs_f64(),
            ));
        }
    }
    Ok(ResultTable {
        kind: cfg.kind,
        data: TableData::Detection {
            sweep_column: cfg.sweep_column(),
            rows,
        },
        timings,
    })
}

fn score_trial(
    cfg: &ExperimentConfig,
    pipe: &Pipeline,
    prep: &Prepared,
    point: &Point,
    scene: &Scene,
    rng: &mut ChaCha8Rng,
) -> Result<TrialScore> {
    let params = &point.params;
    let (map, _) = run_trial(cfg, pipe, prep, point, scene, rng)?;
    let grid_params = RadarParams {
        delay_grids: map.delay_grids,
        ..*params
    };
    let estimates = map.to_estimates(&grid_params);
    let mut score = match_detections(scene, &estimates, NyquistBins::of(params), params.pri_s);
    if cfg.kind == ExperimentKind::Separate {
        score.separated = Some(separate_detection(
            [&scene.targets[0], &scene.targets[1]],
            &estimates,
            params.pri_s,
        ));
    }
    Ok(score)
}

fn aggregate(cfg: &ExperimentConfig, pipe: &Pipeline, point: &Point, scores: &[TrialScore]) -> DetectionRow {
    let p_detect = prob_detection(scores).unwrap_or(0.0);
    let rmse = normalized_rmse(scores).ok();
    let p_separate = (cfg.kind == ExperimentKind::Separate)
        .then(|| scores.iter().filter(|s| s.separated == Some(true)).count() as f64 / scores.len() as f64);
    DetectionRow {
        sweep: point.sweep,
        snr_db: point.snr_db,
        model: pipe.model.name(),
        sampling: pipe.sampling_label,
        waveform: pipe.waveform.kind().name(),
        trials: scores.len(),
        p_detect,
        e_t: rmse.map(|r| r.0),
        e_f: rmse.map(|r| r.1),
        p_separate,
    }
}

fn run_coherence(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let params = cfg.radar.params();
    let ds = catalog(&cfg.sampling.ds)?;
    let count = cfg.sampling.count.unwrap_or(ds.size());
    let n = params.delay_grids;
    let range = params.fourier_range()?;
    let mut series = Vec::new();
    for &scheme in &cfg.coherence.schemes {
        let spec = match scheme {
            SamplingScheme::Consecutive => SamplingSpec::Consecutive { count },
            SamplingScheme::Random => SamplingSpec::Random { count, seed: cfg.seed },
            SamplingScheme::DifferenceSet => SamplingSpec::DifferenceSet(&ds),
        };
        let s = build_sampling(spec, n, range)?;
        let profile = mu_profile(&s.indices, n);
        series.push(CoherenceSeries {
            scheme: scheme.name(),
            mu: profile.iter().copied().fold(0.0, f64::max),
            welch: welch_bound(n, s.len()),
            mu_profile: profile,
        });
    }
    let histogram = if cfg.coherence.histogram_trials > 0 {
        let draws = random_coherences(n, count, cfg.coherence.histogram_trials, cfg.seed)?;
        let reference = mu_profile(&build_sampling(SamplingSpec::DifferenceSet(&ds), n, range)?.indices, n)
            .into_iter()
            .fold(0.0, f64::max);
        Some(histogram(&draws, cfg.coherence.bins, reference))
    } else {
        None
    };
    Ok(ResultTable {
        kind: cfg.kind,
        data: TableData::Coherence { series, histogram },
        timings: Vec::new(),
    })
}

/// Coherence of `trials` independent random `count`-of-`grid_order` index
/// sets drawn over the centred range of width `grid_order`.
pub fn random_coherences(grid_order: usize, count: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let half = (grid_order / 2) as i64;
    let range = crate::dictionaries::FourierRange::new(-half, grid_order as i64 - 1 - half)?;
    (0..trials)
        .into_par_iter()
        .map_init(FftPlanner::new, |planner, t| {
            let seed: u64 = trial_rng(seed, 0, t, 0).random();
            let s = build_sampling(SamplingSpec::Random { count, seed }, grid_order, range)?;
            Ok(mu_profile_fft(&s.indices, grid_order, planner)
                .into_iter()
                .fold(0.0, f64::max))
        })
        .collect()
}

/// Equal-width histogram of `values` whose span also covers `reference`.
pub fn histogram(values: &[f64], bins: usize, reference: f64) -> Histogram {
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min).min(reference);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(reference);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Histogram {
        edges,
        counts,
        reference,
    }
}

fn run_spectrum(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let ds = catalog(&cfg.sampling.ds)?;
    let span = cfg.spectrum.span_hz.unwrap_or(cfg.radar.bandwidth_hz);
    let points = cfg.spectrum.points.max(2);
    let freqs: Vec<f64> = (0..points)
        .map(|i| -span + 2.0 * span * i as f64 / (points - 1) as f64)
        .collect();
    let series = cfg
        .spectrum
        .waveforms
        .iter()
        .map(|&kind| {
            let w = cfg.waveform_for(kind, &ds)?;
            Ok(SpectrumSeries {
                waveform: kind.name(),
                power_db: power_db(&w, &freqs)?,
                freqs_hz: freqs.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ResultTable {
        kind: cfg.kind,
        data: TableData::Spectrum { series },
        timings: Vec::new(),
    })
}

/// `10 log10(|H(f)|² / T_p)`, floored at -300 dB.
pub fn power_db(w: &Waveform, freqs_hz: &[f64]) -> Result<Vec<f64>> {
    Ok(w.power_spectrum(freqs_hz)?
        .into_iter()
        .map(|p| (10.0 * (p / w.pulse_width_s()).log10()).max(-300.0))
        .collect())
}

/// Figure families that [`emit_plot_data`] can write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Detect,
    Rmse,
    Separate,
    Pulses,
    Targets,
    Coherence,
    Spectrum,
}

impl PlotKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::Detect => "detect",
            PlotKind::Rmse => "rmse",
            PlotKind::Separate => "separate",
            PlotKind::Pulses => "pulses-sweep",
            PlotKind::Targets => "targets-sweep",
            PlotKind::Coherence => "coherence",
            PlotKind::Spectrum => "spectrum",
        }
    }

    pub fn of(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Detect => PlotKind::Detect,
            ExperimentKind::Rmse => PlotKind::Rmse,
            ExperimentKind::Separate => PlotKind::Separate,
            ExperimentKind::PulsesSweep => PlotKind::Pulses,
            ExperimentKind::TargetsSweep => PlotKind::Targets,
            ExperimentKind::Coherence => PlotKind::Coherence,
            ExperimentKind::Spectrum => PlotKind::Spectrum,
        }
    }
}

/// Writes tidy per-figure CSVs into `dir` and returns their paths.
pub fn emit_plot_data(table: &ResultTable, kind: PlotKind, dir: &Path) -> Result<Vec<PathBuf>> {
    // Detection and RMSE views are both available from any detection table.
    let compatible = PlotKind::of(table.kind) == kind
        || (matches!(kind, PlotKind::Detect | PlotKind::Rmse) && matches!(table.data, TableData::Detection { .. }));
    if !compatible {
        return Err(Error::KindMismatch {
            requested: kind.name().into(),
            found: table.kind.name().into(),
        });
    }
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        files.push(path);
        Ok(())
    };
    match &table.data {
        TableData::Detection { sweep_column, rows } => {
            let lead = sweep_column.map(|c| format!("{c},")).unwrap_or_default();
            let (name, cols): (&str, &str) = match kind {
                PlotKind::Rmse => ("rmse.csv", "e_t,e_f"),
                PlotKind::Separate => ("separate.csv", "p_separate"),
                _ => ("detect.csv", "p_detect"),
            };
            let mut body = format!("{lead}snr_db,model,{cols}\n");
            for r in rows {
                if let Some(v) = r.sweep {
                    let _ = write!(body, "{v},");
                }
                let label = format!("{}/{}/{}", r.model, r.sampling, r.waveform);
                let _ = match kind {
                    PlotKind::Rmse => writeln!(body, "{},{label},{},{}", r.snr_db, fmt_opt(r.e_t), fmt_opt(r.e_f)),
                    PlotKind::Separate => writeln!(body, "{},{label},{}", r.snr_db, fmt_opt(r.p_separate)),
                    _ => writeln!(body, "{},{label},{}", r.snr_db, r.p_detect),
                };
            }
            write(name.into(), body)?;
        }
        TableData::Coherence { series, histogram } => {
            for s in series {
                let mut body = String::from("u,mu_of_u\n");
                for (i, mu) in s.mu_profile.iter().enumerate() {
                    let _ = writeln!(body, "{},{}", i + 1, mu);
                }
                write(format!("coherence_{}.csv", s.scheme), body)?;
            }
            if let Some(h) = histogram {
                let mut body = String::from("bin_lo,bin_hi,count\n");
                for (i, c) in h.counts.iter().enumerate() {
                    let _ = writeln!(body, "{},{},{}", h.edges[i], h.edges[i + 1], c);
                }
                write("coherence_histogram.csv".into(), body)?;
            }
        }
        TableData::Spectrum { series } => {
            for s in series {
                let mut body = String::from("freq_hz,power_db\n");
                for (f, p) in s.freqs_hz.iter().zip(&s.power_db) {
                    let _ = writeln!(body, "{f},{p}");
                }
                write(format!("spectrum_{}.csv", s.waveform), body)?;
            }
        }
    }
    Ok(files)
}

/// Validates `cfg` and describes the problem sizes without running it.
pub fn dry_run_summary(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let params = cfg.radar.params();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "kind={} trials={} points={} N={} M={} P={} L={}",
        cfg.kind.name(),
        cfg.trials,
        if cfg.kind.is_monte_carlo() {
            cfg.points().len()
        } else {
            1
        },
        params.delay_grids,
        params.doppler_grids,
        params.pulses,
        params.nyquist_samples()
    );
    for run in &cfg.runs {
        let pipe = Pipeline::resolve(cfg, run)?;
        let head = format!(
            "run model={} sampling={} waveform={}",
            pipe.model.name(),
            pipe.sampling_label,
            pipe.waveform.kind().name()
        );
        if pipe.model == Model::NyquistReference {
            let l = params.nyquist_samples();
            let _ = writeln!(
                out,
                "{head} samples={}x{l} map={}x{l}",
                params.pulses, params.doppler_grids
            );
            continue;
        }
        let shape = KroneckerShape {
            rows: pipe.count * params.pulses,
            cols: params.delay_grids * params.doppler_grids,
        };
        let _ = writeln!(
            out,
            "{head} K={} delay_dictionary={}x{} kronecker={}x{} kronecker_bytes={}",
            pipe.count,
            pipe.count,
            params.delay_grids,
            shape.rows,
            shape.cols,
            shape.bytes()
        );
    }
    Ok(out)
}
