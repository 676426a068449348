//! Detection scoring against ground truth.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::scene_measurement::{RadarParams, Scene, Target};

/// Conventional resolution cell: `δ_t = 1/B_h`, `δ_f = 1/(Pτ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NyquistBins {
    pub delay_s: f64,
    pub doppler_hz: f64,
}

impl NyquistBins {
    pub fn of(params: &RadarParams) -> Self {
        Self {
            delay_s: params.delay_bin_s(),
            doppler_hz: params.doppler_bin_hz(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            delay_s: self.delay_s * factor,
            doppler_hz: self.doppler_hz * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub amplitude: C64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialScore {
    pub targets: usize,
    /// `(Δt/δ_t, Δf/δ_f)` for every true detection.
    pub errors: Vec<(f64, f64)>,
    pub separated: Option<bool>,
}

impl TrialScore {
    pub fn detections(&self) -> usize {
        self.errors.len()
    }
}

/// Doppler difference on the circle of circumference `1/τ`.
pub fn doppler_distance(a_hz: f64, b_hz: f64, pri_s: f64) -> f64 {
    let period = 1.0 / pri_s;
    ((a_hz - b_hz + period / 2.0).rem_euclid(period) - period / 2.0).abs()
}

/// Greedy one-to-one matching by ascending `√((Δt/δ_t)² + (Δf/δ_f)²)`; a
/// matched pair counts when `|Δt| < δ_t` and `|Δf| < δ_f`.
pub fn match_detections(truth: &Scene, estimates: &[Estimate], bins: NyquistBins, pri_s: f64) -> TrialScore {
    let mut pairs: Vec<(f64, f64, f64, usize, usize)> = Vec::new();
    for (i, t) in truth.targets.iter().enumerate() {
        for (j, e) in estimates.iter().enumerate() {
            let dt = (e.delay_s - t.delay_s).abs() / bins.delay_s;
            let df = doppler_distance(e.doppler_hz, t.doppler_hz, pri_s) / bins.doppler_hz;
            pairs.push((dt.hypot(df), dt, df, i, j));
        }
    }
    // Ties fall back to the coordinates so input order never matters.
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| target_key(&truth.targets[a.3]).cmp_key(&target_key(&truth.targets[b.3])))
            .then_with(|| estimate_key(&estimates[a.4]).cmp_key(&estimate_key(&estimates[b.4])))
    });
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; estimates.len()];
    let mut errors = Vec::new();
    for (_, dt, df, i, j) in pairs {
        if used_t[i] || used_e[j] {
            continue;
        }
        used_t[i] = true;
        used_e[j] = true;
        if dt < 1.0 && df < 1.0 {
            errors.push((dt, df));
        }
    }
    TrialScore {
        targets: truth.len(),
        errors,
        separated: None,
    }
}

struct Key([f64; 4]);

impl Key {
    fn cmp_key(&self, other: &Key) -> Ordering {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

fn target_key(t: &Target) -> Key {
    Key([t.delay_s, t.doppler_hz, t.amplitude.re, t.amplitude.im])
}

fn estimate_key(e: &Estimate) -> Key {
    Key([e.delay_s, e.doppler_hz, e.amplitude.re, e.amplitude.im])
}

/// `Σ detections / Σ targets`.
pub fn prob_detection(scores: &[TrialScore]) -> Result<f64> {
    let targets: usize = scores.iter().map(|s| s.targets).sum();
    if targets == 0 {
        return Err(Error::EmptyTrialSet);
    }
    let hits: usize = scores.iter().map(|s| s.detections()).sum();
    Ok(hits as f64 / targets as f64)
}

/// Pooled RMS of the normalised delay and Doppler errors of true detections.
pub fn normalized_rmse(scores: &[TrialScore]) -> Result<(f64, f64)> {
    let all: Vec<&(f64, f64)> = scores.iter().flat_map(|s| &s.errors).collect();
    if all.is_empty() {
        return Err(Error::NoDetections);
    }
    let n = all.len() as f64;
    let et = (all.iter().map(|e| e.0 * e.0).sum::<f64>() / n).sqrt();
    let ef = (all.iter().map(|e| e.1 * e.1).sum::<f64>() / n).sqrt();
    Ok((et, ef))
}

/// Both targets of a close pair resolved by two distinct estimates, each
/// within half the pair's delay spacing and half its Doppler spacing.
pub fn separate_detection(pair: [&Target; 2], estimates: &[Estimate], pri_s: f64) -> bool {
    let t_ij = (pair[0].delay_s - pair[1].delay_s).abs();
    let f_ij = doppler_distance(pair[0].doppler_hz, pair[1].doppler_hz, pri_s);
    let hits = |t: &Target, e: &Estimate| {
        (e.delay_s - t.delay_s).abs() < t_ij / 2.0 && doppler_distance(e.doppler_hz, t.doppler_hz, pri_s) < f_ij / 2.0
    };
    estimates
        .iter()
        .enumerate()
        .any(|(i, a)| hits(pair[0], a) && estimates.iter().enumerate().any(|(j, b)| j != i && hits(pair[1], b)))
}
