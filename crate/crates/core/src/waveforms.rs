//! Baseband pulses: rectangular, linear FM and DS frequency-coded (DS-FCM).
//!
//! Every pulse lives on `[0, T_p)` and is scaled to unit average power over
//! its support. `spectrum` is the continuous-time Fourier transform
//! `H(f) = ∫ h(t) e^{-j2πft} dt`; the per-PRI Fourier-series coefficients
//! are `c_k = H(k/τ) / τ`.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::dictionaries::FourierRange;
use crate::ds_codes::{equivalent_shift, DifferenceSet};
use crate::error::{Error, Result};
use crate::linalg::{cis_turns, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformKind {
    Rect,
    Lfm,
    #[serde(rename = "dsfcm")]
    DsFcm,
}

impl WaveformKind {
    pub fn name(&self) -> &'static str {
        match self {
            WaveformKind::Rect => "rect",
            WaveformKind::Lfm => "lfm",
            WaveformKind::DsFcm => "dsfcm",
        }
    }
}

/// Coefficients below this fraction of the strongest one are treated as
/// carrying no waveform energy.
pub const UNSAMPLED_BIN_GUARD: f64 = 1e-6;

/// Absolute LFM quadrature tolerance, in units of `T_p`.
const QUAD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    kind: WaveformKind,
    pulse_width_s: f64,
    pri_s: f64,
    bandwidth_hz: f64,
    /// Shifted difference-set tones (DS-FCM only).
    tones: Vec<i64>,
    /// Amplitude factor giving unit average power.
    scale: f64,
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}

fn check_timing(pulse_width_s: f64, pri_s: f64) -> Result<()> {
    positive("pulse_width_s", pulse_width_s)?;
    positive("pri_s", pri_s)?;
    if pulse_width_s > pri_s * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "pulse width {pulse_width_s} s exceeds the PRI {pri_s} s"
        )));
    }
    Ok(())
}

/// `sin(πx)/(πx)`.
pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// `∫_0^T e^{j2πνt} dt = T e^{jπνT} sinc(νT)`.
fn tone_integral(nu: f64, width: f64) -> C64 {
    cis_turns(nu * width / 2.0) * (width * sinc(nu * width))
}

impl Waveform {
    pub fn rect(pulse_width_s: f64, pri_s: f64, bandwidth_hz: f64) -> Result<Self> {
        check_timing(pulse_width_s, pri_s)?;
        positive("bandwidth_hz", bandwidth_hz)?;
        Ok(Self {
            kind: WaveformKind::Rect,
            pulse_width_s,
            pri_s,
            bandwidth_hz,
            tones: Vec::new(),
            scale: 1.0,
        })
    }

    /// Chirp sweeping `[-B/2, B/2]` across the pulse.
    pub fn lfm(pulse_width_s: f64, pri_s: f64, bandwidth_hz: f64) -> Result<Self> {
        check_timing(pulse_width_s, pri_s)?;
        positive("bandwidth_hz", bandwidth_hz)?;
        Ok(Self {
            kind: WaveformKind::Lfm,
            pulse_width_s,
            pri_s,
            bandwidth_hz,
            tones: Vec::new(),
            scale: 1.0,
        })
    }

    /// `(1/K) Σ_k e^{j2πkt/τ}` over the shifted difference set, rescaled to
    /// unit power.
    pub fn ds_fcm(ds: &DifferenceSet, pulse_width_s: f64, pri_s: f64) -> Result<Self> {
        check_timing(pulse_width_s, pri_s)?;
        let tones = equivalent_shift(ds);
        let mut w = Self {
            kind: WaveformKind::DsFcm,
            pulse_width_s,
            pri_s,
            bandwidth_hz: 0.0,
            tones,
            scale: 1.0,
        };
        w.bandwidth_hz = w.bandwidth_estimate()?;
        w.scale = 1.0 / w.raw_power().sqrt();
        Ok(w)
    }

    pub fn kind(&self) -> WaveformKind {
        self.kind
    }

    pub fn pulse_width_s(&self) -> f64 {
        self.pulse_width_s
    }

    pub fn pri_s(&self) -> f64 {
        self.pri_s
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn tones(&self) -> &[i64] {
        &self.tones
    }

    /// Average power over `T_p` of the DS-FCM sum before rescaling:
    /// `(1/K²) Σ_{k,l} sinc(dT_p/τ) cos(πdT_p/τ)` with `d = k - l`.
    fn raw_power(&self) -> f64 {
        let k = self.tones.len() as f64;
        let ratio = self.pulse_width_s / self.pri_s;
        let mut acc = 0.0;
        for &a in &self.tones {
            for &b in &self.tones {
                let x = (a - b) as f64 * ratio;
                acc += sinc(x) * (std::f64::consts::PI * x).cos();
            }
        }
        acc / (k * k)
    }

    /// Complex envelope at time `t` (zero outside `[0, T_p)`).
    pub fn sample(&self, t: f64) -> C64 {
        if !(0.0..self.pulse_width_s).contains(&t) {
            return C64::new(0.0, 0.0);
        }
        match self.kind {
            WaveformKind::Rect => C64::new(self.scale, 0.0),
            WaveformKind::Lfm => {
                let u = t - self.pulse_width_s / 2.0;
                cis_turns(0.5 * self.bandwidth_hz / self.pulse_width_s * u * u)
            }
            WaveformKind::DsFcm => {
                let s: C64 = self.tones.iter().map(|&k| cis_turns(k as f64 * t / self.pri_s)).sum();
                s * (self.scale / self.tones.len() as f64)
            }
        }
    }

    /// Continuous-time Fourier transform `H(f)`.
    pub fn spectrum(&self, f: f64) -> Result<C64> {
        let tp = self.pulse_width_s;
        Ok(match self.kind {
            WaveformKind::Rect => tone_integral(-f, tp) * self.scale,
            WaveformKind::DsFcm => {
                let s: C64 = self
                    .tones
                    .iter()
                    .map(|&k| tone_integral(k as f64 / self.pri_s - f, tp))
                    .sum();
                s * (self.scale / self.tones.len() as f64)
            }
            WaveformKind::Lfm => self.lfm_spectrum(f)?,
        })
    }

    fn lfm_spectrum(&self, f: f64) -> Result<C64> {
        let tp = self.pulse_width_s;
        let integrand = |t: f64| self.sample(t) * cis_turns(-f * t);
        let cycles = (self.bandwidth_hz / 2.0 + f.abs()) * tp;
        let panels = (2.0 * cycles).ceil() as usize + 4;
        let coarse = gauss_legendre(integrand, 0.0, tp, panels);
        let fine = gauss_legendre(integrand, 0.0, tp, 2 * panels);
        let difference = (coarse - fine).norm();
        if difference > QUAD_TOL * tp {
            return Err(Error::QuadratureFailure {
                frequency_hz: f,
                difference,
            });
        }
        Ok(fine)
    }

    /// Fourier-series coefficient `c_k = (1/τ) ∫_0^τ h(t) e^{-j2πkt/τ} dt`.
    pub fn fourier_coefficient(&self, k: i64) -> Result<C64> {
        Ok(self.spectrum(k as f64 / self.pri_s)? / self.pri_s)
    }

    pub fn fourier_coefficients(&self, range: FourierRange) -> Result<Vec<C64>> {
        range.iter().map(|k| self.fourier_coefficient(k)).collect()
    }

    /// Coefficients `c_k` at the sampled indices, used to normalise the
    /// measurements. Fails when a sampled bin holds less than
    /// [`UNSAMPLED_BIN_GUARD`] of the peak coefficient magnitude. The peak is
    /// taken over the whole range for the closed-form kinds and over the
    /// sampled bins for LFM.
    pub fn normalizers(&self, indices: &[i64], range: FourierRange) -> Result<Vec<C64>> {
        let coeffs: Vec<C64> = indices
            .iter()
            .map(|&k| self.fourier_coefficient(k))
            .collect::<Result<_>>()?;
        let peak = match self.kind {
            WaveformKind::Lfm => coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max),
            _ => range
                .iter()
                .map(|k| self.fourier_coefficient(k).map(|c| c.norm()))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max),
        };
        for (&k, c) in indices.iter().zip(&coeffs) {
            if c.norm() < UNSAMPLED_BIN_GUARD * peak || c.norm() == 0.0 {
                return Err(Error::NumericallyUnsampledBin {
                    index: k,
                    magnitude: c.norm(),
                });
            }
        }
        Ok(coeffs)
    }

    /// `(k_max - k_min)/τ` over the DS-FCM tones.
    pub fn bandwidth_estimate(&self) -> Result<f64> {
        if self.kind != WaveformKind::DsFcm {
            return Err(Error::WrongKind { expected: "dsfcm" });
        }
        let lo = self.tones.iter().min().copied().unwrap_or(0);
        let hi = self.tones.iter().max().copied().unwrap_or(0);
        Ok((hi - lo) as f64 / self.pri_s)
    }

    /// `|H(f)|²` on the given frequencies.
    pub fn power_spectrum(&self, freqs_hz: &[f64]) -> Result<Vec<f64>> {
        freqs_hz
            .par_iter()
            .map(|&f| self.spectrum(f).map(|h| h.norm_sqr()))
            .collect()
    }
}

fn legendre_nodes() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre_nodes(16))
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// by Newton iteration on `P_n`.
fn gauss_legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    let nf = n as f64;
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let jf = j as f64;
                    let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = nf * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite 16-point Gauss-Legendre quadrature over `panels` equal panels.
pub(crate) fn gauss_legendre(f: impl Fn(f64) -> C64, a: f64, b: f64, panels: usize) -> C64 {
    let nodes = legendre_nodes();
    let h = (b - a) / panels as f64;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..panels {
        let mid = a + (i as f64 + 0.5) * h;
        for &(x, w) in nodes {
            acc += f(mid + 0.5 * h * x) * w;
        }
    }
    acc * (0.5 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionaries::fourier_range;
    use crate::ds_codes::{catalog, verify_difference_set};

    const PRI: f64 = 10e-6;

    fn avg_power(w: &Waveform) -> f64 {
        let tp = w.pulse_width_s();
        gauss_legendre(|t| C64::new(w.sample(t).norm_sqr(), 0.0), 0.0, tp, 400).re / tp
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let v = gauss_legendre(|x| C64::new(x.powi(7) - 3.0 * x * x, 0.0), 0.0, 2.0, 1);
        assert!((v.re - (256.0 / 8.0 - 8.0)).abs() < 1e-12);
        let w: f64 = legendre_nodes().iter().map(|n| n.1).sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sample_examples() {
        let single = verify_difference_set(&[0], 7).unwrap();
        let w = Waveform::ds_fcm(&single, PRI, PRI).unwrap();
        for t in [0.0, 1e-6, 9.9e-6] {
            assert!((w.sample(t) - 1.0).norm() < 1e-15);
        }
        let ds = catalog("91-10-1").unwrap();
        let w = Waveform::ds_fcm(&ds, PRI, PRI).unwrap();
        // Unnormalised value at t = 0 is 1; the unit-power scale is √K here.
        assert!((w.sample(0.0) - 10f64.sqrt()).norm() < 1e-12);
        assert_eq!(w.sample(PRI), C64::new(0.0, 0.0));
        assert_eq!(w.sample(-1e-9), C64::new(0.0, 0.0));
        let r = Waveform::rect(2e-6, PRI, 1e6).unwrap();
        assert_eq!(r.sample(1e-6), r.sample(0.0));
        assert_eq!(r.sample(2e-6), C64::new(0.0, 0.0));
    }

    #[test]
    fn unit_average_power() {
        let ds = catalog("91-10-1").unwrap();
        let waves = [
            Waveform::rect(3e-6, PRI, 1e6).unwrap(),
            Waveform::lfm(PRI, PRI, 9.1e6).unwrap(),
            Waveform::ds_fcm(&ds, PRI, PRI).unwrap(),
            Waveform::ds_fcm(&ds, 0.37 * PRI, PRI).unwrap(),
        ];
        for w in &waves {
            assert!((avg_power(w) - 1.0).abs() < 1e-9, "{:?}", w.kind());
        }
    }

    #[test]
    fn full_pri_coefficients() {
        let range = fourier_range(PRI, 9.1e6).unwrap();
        let ds = catalog("91-10-1").unwrap();
        let w = Waveform::ds_fcm(&ds, PRI, PRI).unwrap();
        let c = w.fourier_coefficients(range).unwrap();
        let want = 1.0 / 10f64.sqrt();
        let mut nonzero = 0;
        for (k, ck) in range.iter().zip(&c) {
            if w.tones().contains(&k) {
                nonzero += 1;
                assert!((ck - want).norm() < 1e-10);
            } else {
                assert!(ck.norm() < 1e-10, "leak {k}: {ck}");
            }
        }
        assert_eq!(nonzero, 10);

        let r = Waveform::rect(PRI, PRI, 9.1e6).unwrap();
        let c = r.fourier_coefficients(range).unwrap();
        for (k, ck) in range.iter().zip(&c) {
            let want = if k == 0 { 1.0 } else { 0.0 };
            assert!((ck - want).norm() < 1e-10);
        }
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let ds = catalog("91-10-1").unwrap();
        for w in [
            Waveform::ds_fcm(&ds, 0.6 * PRI, PRI).unwrap(),
            Waveform::rect(0.3 * PRI, PRI, 1e6).unwrap(),
        ] {
            for k in [-40, -3, 0, 1, 9, 27, 44] {
                let closed = w.fourier_coefficient(k).unwrap();
                let quad = gauss_legendre(
                    |t| w.sample(t) * cis_turns(-(k as f64) * t / PRI),
                    0.0,
                    w.pulse_width_s(),
                    200,
                ) / PRI;
                assert!((closed - quad).norm() < 1e-8, "{k}: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn lfm_quadrature_converges() {
        let w = Waveform::lfm(PRI, PRI, 300e6).unwrap();
        let c0 = w.fourier_coefficient(0).unwrap();
        // Stationary phase: |c_k| ≈ √(T_p/B)/τ inside the band.
        let approx = (PRI / 300e6).sqrt() / PRI;
        assert!((c0.norm() / approx - 1.0).abs() < 0.2);
    }

    #[test]
    fn ds_energy_concentrates_on_ds_bins() {
        let ds = catalog("2863-54-1").unwrap();
        let tp = 0.5 * PRI;
        let range = fourier_range(PRI, 300e6).unwrap();
        let dsw = Waveform::ds_fcm(&ds, tp, PRI).unwrap();
        // Rect occupying the same band.
        let rect = Waveform::rect(1.0 / 300e6, PRI, 300e6).unwrap();
        let frac = |w: &Waveform| {
            let c = w.fourier_coefficients(range).unwrap();
            let total: f64 = c.iter().map(|z| z.norm_sqr()).sum();
            let on: f64 = dsw.tones().iter().map(|&k| c[(k - range.lo) as usize].norm_sqr()).sum();
            on / total
        };
        assert!(frac(&dsw) > frac(&rect) + 0.1);
    }

    #[test]
    fn bandwidth_examples() {
        let w = Waveform::ds_fcm(&catalog("2863-54-1").unwrap(), PRI, PRI).unwrap();
        assert!((w.bandwidth_estimate().unwrap() - 279.2e6).abs() < 1.0);
        let w = Waveform::ds_fcm(&catalog("91-10-1").unwrap(), PRI, PRI).unwrap();
        assert!((w.bandwidth_estimate().unwrap() - 6.9e6).abs() < 1e-3);
        let w = Waveform::ds_fcm(&verify_difference_set(&[0], 5).unwrap(), PRI, PRI).unwrap();
        assert_eq!(w.bandwidth_estimate().unwrap(), 0.0);
        assert!(matches!(
            Waveform::rect(PRI, PRI, 1e6).unwrap().bandwidth_estimate(),
            Err(Error::WrongKind { .. })
        ));
    }

    #[test]
    fn guard_rejects_empty_bins() {
        let range = fourier_range(PRI, 9.1e6).unwrap();
        let r = Waveform::rect(PRI, PRI, 9.1e6).unwrap();
        assert!(matches!(
            r.normalizers(&[-2, 0, 3], range),
            Err(Error::NumericallyUnsampledBin { index: -2, .. })
        ));
        let ds = catalog("91-10-1").unwrap();
        let w = Waveform::ds_fcm(&ds, PRI, PRI).unwrap();
        assert!(w.normalizers(w.tones(), range).is_ok());
        assert!(w.normalizers(&[-42, 2], range).is_err());
    }

    #[test]
    fn parseval_within_one_percent() {
        let ds = catalog("91-10-1").unwrap();
        let waves = [
            Waveform::rect(1e-6, PRI, 1e6).unwrap(),
            Waveform::lfm(PRI, PRI, 9.1e6).unwrap(),
            Waveform::ds_fcm(&ds, PRI, PRI).unwrap(),
        ];
        for w in &waves {
            let tp = w.pulse_width_s();
            let span = match w.kind() {
                WaveformKind::DsFcm => 150.0 / PRI,
                _ => w.bandwidth_hz() / 2.0 + 200.0 / tp,
            };
            let step = 0.25 / tp;
            let n = (2.0 * span / step) as usize;
            let freqs: Vec<f64> = (0..=n).map(|i| -span + i as f64 * step).collect();
            let total: f64 = w.power_spectrum(&freqs).unwrap().iter().sum::<f64>() * step;
            assert!((total / tp - 1.0).abs() < 0.01, "{:?}: {}", w.kind(), total / tp);
        }
    }

    #[test]
    fn validation() {
        assert!(Waveform::rect(0.0, PRI, 1e6).is_err());
        assert!(Waveform::rect(2.0 * PRI, PRI, 1e6).is_err());
        assert!(Waveform::lfm(PRI, PRI, -1.0).is_err());
    }
}
