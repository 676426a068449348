//! Target scenes and the sub-Nyquist measurement matrix `Ȳ` (`K×P`).
//!
//! Two synthesis paths are provided. The fast path evaluates the
//! semi-periodic model `Ȳ_p[k] = Σ_s a_s e^{j2πf_s pτ} e^{-j2πκ_k t_s/τ}`
//! directly. The oracle path builds Nyquist-rate samples of the received
//! pulse train, takes a DFT per PRI and normalises by the waveform
//! coefficients. Bin convention: `c_k = DFT[k mod L] / L`.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::dictionaries::{doppler_grid, fourier_range, snap, FourierRange, SamplingIndexSet};
use crate::error::{Error, Result};
use crate::linalg::{cis_turns, C64};
use crate::waveforms::Waveform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarParams {
    pub pri_s: f64,
    pub bandwidth_hz: f64,
    pub pulses: usize,
    pub delay_grids: usize,
    pub doppler_grids: usize,
}

impl RadarParams {
    pub fn validate(&self) -> Result<()> {
        let range = fourier_range(self.pri_s, self.bandwidth_hz)?;
        for (name, v) in [
            ("pulses", self.pulses),
            ("delay_grids", self.delay_grids),
            ("doppler_grids", self.doppler_grids),
        ] {
            if v == 0 {
                return Err(Error::NonPositiveParameter { name, value: 0.0 });
            }
        }
        if self.delay_grids > range.len() {
            return Err(Error::InvalidParameter(format!(
                "delay grid count {} exceeds the {} available Fourier indices",
                self.delay_grids,
                range.len()
            )));
        }
        Ok(())
    }

    pub fn fourier_range(&self) -> Result<FourierRange> {
        fourier_range(self.pri_s, self.bandwidth_hz)
    }

    /// Nyquist samples per PRI, `L = round(τB_h)`.
    pub fn nyquist_samples(&self) -> usize {
        snap(self.pri_s * self.bandwidth_hz).round().max(1.0) as usize
    }

    /// Delay of grid point `n`, `nτ/N`.
    pub fn delay_of(&self, n: usize) -> f64 {
        n as f64 * self.pri_s / self.delay_grids as f64
    }

    pub fn doppler_grid(&self) -> Vec<f64> {
        doppler_grid(self.doppler_grids, self.pri_s)
    }

    /// Nyquist delay bin `1/B_h`.
    pub fn delay_bin_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Nyquist Doppler bin `1/(Pτ)`.
    pub fn doppler_bin_hz(&self) -> f64 {
        1.0 / (self.pulses as f64 * self.pri_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub amplitude: C64,
    pub delay_s: f64,
    pub doppler_hz: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub targets: Vec<Target>,
}

impl Scene {
    pub fn new(targets: Vec<Target>) -> Self {
        Self { targets }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// `target_id,re_a,im_a,delay_s,doppler_hz`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target_id,re_a,im_a,delay_s,doppler_hz\n");
        for (i, t) in self.targets.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{:e},{}\n",
                t.amplitude.re, t.amplitude.im, t.delay_s, t.doppler_hz
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SceneOptions {
    /// Snap delays and Dopplers to the `N×M` grid.
    pub on_grid: bool,
    /// Forbid two targets on the same delay grid point (on-grid only).
    pub distinct_delays: bool,
    /// Upper end of the delay draw; defaults to `τ`.
    pub delay_limit_s: Option<f64>,
}

/// `S` unit-amplitude targets with uniform random phase, delay and Doppler.
pub fn random_scene<R: Rng + ?Sized>(
    count: usize,
    params: &RadarParams,
    options: SceneOptions,
    rng: &mut R,
) -> Result<Scene> {
    let tau = params.pri_s;
    let limit = options.delay_limit_s.unwrap_or(tau);
    if !(limit > 0.0 && limit <= tau) {
        return Err(Error::InvalidParameter(format!(
            "delay limit {limit} s must lie in (0, {tau}]"
        )));
    }
    let mut targets = Vec::with_capacity(count);
    if options.on_grid {
        let n_max = ((limit / tau * params.delay_grids as f64).ceil() as usize).min(params.delay_grids);
        let delays: Vec<usize> = if options.distinct_delays {
            if count > n_max {
                return Err(Error::InvalidParameter(format!(
                    "{count} distinct delays requested from {n_max} grid points"
                )));
            }
            sample(rng, n_max, count).into_vec()
        } else {
            (0..count).map(|_| rng.random_range(0..n_max)).collect()
        };
        let grid = params.doppler_grid();
        for n in delays {
            let m = rng.random_range(0..params.doppler_grids);
            targets.push(Target {
                amplitude: random_phase(rng),
                delay_s: params.delay_of(n),
                doppler_hz: grid[m],
            });
        }
    } else {
        for _ in 0..count {
            let delay_s = rng.random::<f64>() * limit;
            let doppler_hz = (rng.random::<f64>() - 0.5) / tau;
            targets.push(Target {
                amplitude: random_phase(rng),
                delay_s,
                doppler_hz,
            });
        }
    }
    Ok(Scene { targets })
}

fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    cis_turns(rng.random::<f64>())
}

/// Normalised coefficients `Ȳ_p[κ_k]`, `K×P`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    pub values: Array2<C64>,
    pub indices: Vec<i64>,
    pub noisy: bool,
}

/// Fast path: the semi-periodic model evaluated directly.
pub fn synthesize_model(scene: &Scene, sampling: &SamplingIndexSet, params: &RadarParams) -> MeasurementMatrix {
    let (k_count, p_count) = (sampling.len(), params.pulses);
    let mut values = Array2::<C64>::zeros((k_count, p_count));
    for t in &scene.targets {
        let delay_turns = t.delay_s / params.pri_s;
        let fd = t.doppler_hz * params.pri_s;
        let doppler: Vec<C64> = (0..p_count).map(|p| cis_turns(fd * p as f64)).collect();
        for (k, &kappa) in sampling.indices.iter().enumerate() {
            // Reduce κ·t/τ mod 1 before the trig call.
            let d = t.amplitude * cis_turns(-(kappa as f64 * delay_turns).rem_euclid(1.0));
            for (y, z) in values.row_mut(k).iter_mut().zip(&doppler) {
                *y += d * z;
            }
        }
    }
    MeasurementMatrix {
        values,
        indices: sampling.indices.clone(),
        noisy: false,
    }
}

/// How echoes that cross the PRI boundary are handled by the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpillPolicy {
    /// Refuse targets with `t_s + T_p > τ`.
    #[default]
    Reject,
    /// Continuous pulse train: the tail of pulse `p-1` lands in PRI `p`,
    /// including a pulse before the first one.
    SteadyState,
}

/// Nyquist-rate samples, one row of `L` per PRI (`P×L`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBlocks {
    pub samples: Array2<C64>,
}

/// Oracle path: `Σ_s a_s Σ_q h(t - t_s - qτ) e^{j2πf_s t}` sampled at
/// `t = pτ + nτ/L`.
pub fn synthesize_time_oracle(
    scene: &Scene,
    waveform: &Waveform,
    params: &RadarParams,
    policy: SpillPolicy,
) -> Result<TimeBlocks> {
    let tau = params.pri_s;
    let l = params.nyquist_samples();
    let tp = waveform.pulse_width_s();
    let mut samples = Array2::<C64>::zeros((params.pulses, l));
    for t in &scene.targets {
        if !(0.0..tau).contains(&t.delay_s) {
            return Err(Error::InvalidParameter(format!(
                "target delay {} s outside [0, {tau})",
                t.delay_s
            )));
        }
        let spills = t.delay_s + tp > tau * (1.0 + 1e-12);
        if spills && policy == SpillPolicy::Reject {
            return Err(Error::DelayOverrun {
                delay_s: t.delay_s,
                pulse_width_s: tp,
            });
        }
        let echo: Vec<C64> = (0..l)
            .map(|n| {
                let tn = n as f64 * tau / l as f64;
                let mut h = waveform.sample(tn - t.delay_s);
                if spills {
                    h += waveform.sample(tn + tau - t.delay_s);
                }
                h * cis_turns(t.doppler_hz * tn)
            })
            .collect();
        for (p, mut row) in samples.rows_mut().into_iter().enumerate() {
            let phase = t.amplitude * cis_turns((t.doppler_hz * tau * p as f64).rem_euclid(1.0));
            for (y, e) in row.iter_mut().zip(&echo) {
                *y += phase * e;
            }
        }
    }
    Ok(TimeBlocks { samples })
}

/// Per-PRI DFT, bin selection at the sampled indices and division by the
/// waveform coefficients.
pub fn fourier_extract(
    blocks: &TimeBlocks,
    sampling: &SamplingIndexSet,
    waveform: &Waveform,
) -> Result<MeasurementMatrix> {
    let (p_count, l) = blocks.samples.dim();
    let half = l as i64 / 2;
    if let Some(&k) = sampling.indices.iter().find(|&&k| k < -half || k >= l as i64 - half) {
        return Err(Error::DsOutOfRange {
            index: k,
            lo: -half,
            hi: l as i64 - half - 1,
        });
    }
    let norms = waveform.normalizers(&sampling.indices, sampling.range)?;
    let fft = FftPlanner::new().plan_fft_forward(l);
    let mut values = Array2::<C64>::zeros((sampling.len(), p_count));
    let mut buf = vec![C64::new(0.0, 0.0); l];
    for p in 0..p_count {
        buf.iter_mut().zip(blocks.samples.row(p)).for_each(|(b, s)| *b = *s);
        fft.process(&mut buf);
        for (k, (&kappa, c)) in sampling.indices.iter().zip(&norms).enumerate() {
            let bin = kappa.rem_euclid(l as i64) as usize;
            values[[k, p]] = buf[bin] / (l as f64 * c);
        }
    }
    Ok(MeasurementMatrix {
        values,
        indices: sampling.indices.clone(),
        noisy: false,
    })
}

/// Noise variance per Nyquist sample giving `SNR = ‖h‖² / (L_p σ²)` for a
/// unit-amplitude echo, where `h` holds the Nyquist samples of the pulse and
/// `L_p = ⌊T_p B_h⌋` (at least 1) is their count.
pub fn noise_variance(snr_db: f64, waveform: &Waveform, params: &RadarParams) -> f64 {
    let l = params.nyquist_samples();
    let energy: f64 = (0..l)
        .map(|n| waveform.sample(n as f64 * params.pri_s / l as f64).norm_sqr())
        .sum();
    let pulse_samples = (waveform.pulse_width_s() * params.bandwidth_hz + 1e-9).floor().max(1.0);
    energy / (pulse_samples * 10f64.powf(snr_db / 10.0))
}

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

/// Adds i.i.d. `CN(0, σ²)` to every Nyquist sample.
pub fn add_time_noise<R: Rng + ?Sized>(blocks: &mut TimeBlocks, sigma2: f64, rng: &mut R) {
    if sigma2 > 0.0 {
        blocks
            .samples
            .iter_mut()
            .for_each(|y| *y += complex_gaussian(rng, sigma2));
    }
}

/// Fast-path equivalent of [`add_time_noise`]: a DFT coefficient scaled by
/// `1/L` carries variance `σ²/L`, and the normalisation divides it by `c_k`.
pub fn add_measurement_noise<R: Rng + ?Sized>(
    y: &mut MeasurementMatrix,
    sigma2: f64,
    nyquist_samples: usize,
    normalizers: &[C64],
    rng: &mut R,
) {
    if sigma2 <= 0.0 {
        return;
    }
    for (mut row, c) in y.values.rows_mut().into_iter().zip(normalizers) {
        let var = sigma2 / (nyquist_samples as f64 * c.norm_sqr());
        row.iter_mut().for_each(|v| *v += complex_gaussian(rng, var));
    }
    y.noisy = true;
}
