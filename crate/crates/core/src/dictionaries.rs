//! Sampling index sets and the partial-Fourier delay / Doppler dictionaries.
//!
//! The delay dictionary `Φ` is `K×N` with `Φ[k][n] = exp(-j2π κ_k n / N)`;
//! the Doppler dictionary `Ψ` is `P×M` with `Ψ[p][m] = exp(j2π f_m p τ)` on
//! the left-closed grid `f_m = -1/(2τ) + m/(Mτ)`. Indices are zero based.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::ds_codes::{equivalent_shift, DifferenceSet};
use crate::error::{Error, Result};
use crate::linalg::{check_dims, cis_turns, inner, norm_sqr, LinearOperator, C64};

/// Contiguous Fourier-series indices `lo..=hi` that a band-limited pulse
/// can occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourierRange {
    pub lo: i64,
    pub hi: i64,
}

impl FourierRange {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidParameter(format!("empty Fourier range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: i64) -> bool {
        (self.lo..=self.hi).contains(&k)
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

/// Snaps `x` to the nearest integer when it is within floating-point noise
/// of it, so that e.g. `10e-6 * 300e6` counts as exactly 3000.
pub(crate) fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// `{-⌈τB/2⌉, …, ⌊τB/2⌋}`.
pub fn fourier_range(pri_s: f64, bandwidth_hz: f64) -> Result<FourierRange> {
    if pri_s.is_nan() || pri_s <= 0.0 {
        return Err(Error::NonPositiveParameter {
            name: "pri_s",
            value: pri_s,
        });
    }
    if bandwidth_hz.is_nan() || bandwidth_hz <= 0.0 {
        return Err(Error::NonPositiveParameter {
            name: "bandwidth_hz",
            value: bandwidth_hz,
        });
    }
    let half = snap(pri_s * bandwidth_hz) / 2.0;
    FourierRange::new(-(half.ceil() as i64), half.floor() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingScheme {
    Consecutive,
    Random,
    #[serde(rename = "ds")]
    DifferenceSet,
}

impl SamplingScheme {
    pub fn name(&self) -> &'static str {
        match self {
            SamplingScheme::Consecutive => "consecutive",
            SamplingScheme::Random => "random",
            SamplingScheme::DifferenceSet => "ds",
        }
    }
}

/// How to pick the `K` sampled Fourier indices.
#[derive(Debug, Clone, Copy)]
pub enum SamplingSpec<'a> {
    /// `K` contiguous indices centred on 0.
    Consecutive { count: usize },
    /// `K` distinct indices drawn uniformly from the range.
    Random { count: usize, seed: u64 },
    /// The symmetric representatives of a difference set.
    DifferenceSet(&'a DifferenceSet),
}

/// The `K` sampled Fourier indices `κ_1 < … < κ_K` and the delay-grid
/// order `N` they are paired with.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingIndexSet {
    pub scheme: SamplingScheme,
    pub indices: Vec<i64>,
    pub grid_order: usize,
    pub range: FourierRange,
}

impl SamplingIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn delay_dictionary(&self) -> Result<DelayDictionary> {
        delay_dictionary(&self.indices, self.grid_order)
    }
}

pub fn build_sampling(spec: SamplingSpec<'_>, grid_order: usize, range: FourierRange) -> Result<SamplingIndexSet> {
    let (scheme, indices) = match spec {
        SamplingSpec::Consecutive { count } => {
            check_count(count, range)?;
            let count = count as i64;
            // Centre on 0, then slide inside an asymmetric range if needed.
            let start = (-(count / 2)).min(range.hi - count + 1).max(range.lo);
            (SamplingScheme::Consecutive, (start..start + count).collect())
        }
        SamplingSpec::Random { count, seed } => {
            check_count(count, range)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picks: Vec<i64> = sample(&mut rng, range.len(), count)
                .into_iter()
                .map(|i| range.lo + i as i64)
                .collect();
            picks.sort_unstable();
            (SamplingScheme::Random, picks)
        }
        SamplingSpec::DifferenceSet(ds) => {
            let shifted = equivalent_shift(ds);
            if let Some(&bad) = shifted.iter().find(|&&k| !range.contains(k)) {
                return Err(Error::DsOutOfRange {
                    index: bad,
                    lo: range.lo,
                    hi: range.hi,
                });
            }
            (SamplingScheme::DifferenceSet, shifted)
        }
    };
    Ok(SamplingIndexSet {
        scheme,
        indices,
        grid_order,
        range,
    })
}

fn check_count(count: usize, range: FourierRange) -> Result<()> {
    if count == 0 || count > range.len() {
        return Err(Error::TooManyIndices {
            requested: count,
            available: range.len(),
        });
    }
    Ok(())
}

/// `K×N` partial-Fourier (Vandermonde) delay dictionary.
#[derive(Debug, Clone)]
pub struct DelayDictionary {
    pub matrix: Array2<C64>,
    pub indices: Vec<i64>,
    pub grid_order: usize,
}

pub fn delay_dictionary(indices: &[i64], grid_order: usize) -> Result<DelayDictionary> {
    check_dims(!indices.is_empty() && grid_order >= indices.len(), || {
        format!(
            "delay dictionary needs 1 <= K <= N, got K = {}, N = {grid_order}",
            indices.len()
        )
    })?;
    let n = grid_order as i64;
    let matrix = Array2::from_shape_fn((indices.len(), grid_order), |(k, col)| {
        let r = (indices[k] * col as i64).rem_euclid(n);
        cis_turns(-(r as f64) / n as f64)
    });
    Ok(DelayDictionary {
        matrix,
        indices: indices.to_vec(),
        grid_order,
    })
}

impl DelayDictionary {
    /// Coherence through the circulant structure: the correlation between
    /// columns `l` and `l+u` only depends on `u`.
    pub fn coherence(&self) -> CoherenceReport {
        let mu_profile = mu_profile(&self.indices, self.grid_order);
        let mu = mu_profile.iter().copied().fold(0.0, f64::max);
        CoherenceReport {
            mu,
            welch: welch_bound(self.grid_order, self.indices.len()),
            mu_profile,
        }
    }
}

/// `P×M` Doppler dictionary and its grid.
#[derive(Debug, Clone)]
pub struct DopplerDictionary {
    pub matrix: Array2<C64>,
    pub grid_hz: Vec<f64>,
    pub pri_s: f64,
}

/// `f_m = -1/(2τ) + m/(Mτ)`, `m = 0..M`.
pub fn doppler_grid(doppler_grids: usize, pri_s: f64) -> Vec<f64> {
    (0..doppler_grids)
        .map(|m| (2.0 * m as f64 - doppler_grids as f64) / (2.0 * doppler_grids as f64 * pri_s))
        .collect()
}

pub fn doppler_dictionary(pulses: usize, doppler_grids: usize, pri_s: f64) -> Result<DopplerDictionary> {
    check_dims(pulses >= 1 && doppler_grids >= 1, || {
        format!("Doppler dictionary needs P, M >= 1, got P = {pulses}, M = {doppler_grids}")
    })?;
    // f_m p τ = p (2m - M) / (2M) turns; reduce the integer numerator first.
    let two_m = 2 * doppler_grids as i64;
    let matrix = Array2::from_shape_fn((pulses, doppler_grids), |(p, m)| {
        let num = (p as i64 * (2 * m as i64 - doppler_grids as i64)).rem_euclid(two_m);
        cis_turns(num as f64 / two_m as f64)
    });
    Ok(DopplerDictionary {
        matrix,
        grid_hz: doppler_grid(doppler_grids, pri_s),
        pri_s,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub mu: f64,
    pub welch: f64,
    /// `μ(u)` for `u = 1..N-1`, stored at position `u - 1`.
    pub mu_profile: Vec<f64>,
}

/// `μ(u) = |Σ_k exp(-j2π u κ_k / N)| / K` for `u = 1..N-1`.
pub fn mu_profile(indices: &[i64], grid_order: usize) -> Vec<f64> {
    let n = grid_order as i64;
    let k = indices.len() as f64;
    (1..n)
        .map(|u| {
            let s: C64 = indices
                .iter()
                .map(|&kappa| cis_turns(-((u * kappa).rem_euclid(n) as f64) / n as f64))
                .sum();
            s.norm() / k
        })
        .collect()
}

/// Same profile as [`mu_profile`] from one length-`N` FFT of the index
/// indicator; used when many random index sets are scored.
pub fn mu_profile_fft(indices: &[i64], grid_order: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = grid_order as i64;
    let mut buf = vec![C64::new(0.0, 0.0); grid_order];
    for &kappa in indices {
        buf[kappa.rem_euclid(n) as usize] += 1.0;
    }
    planner.plan_fft_forward(grid_order).process(&mut buf);
    let k = indices.len() as f64;
    buf[1..].iter().map(|z| z.norm() / k).collect()
}

/// Largest normalised inner product between distinct columns, by direct
/// evaluation of every pair.
pub fn mutual_coherence(matrix: &Array2<C64>) -> Result<f64> {
    check_dims(matrix.ncols() >= 2, || "coherence needs at least two columns".into())?;
    let cols: Vec<Vec<C64>> = (0..matrix.ncols()).map(|j| matrix.column(j).to_vec()).collect();
    let norms: Vec<f64> = cols.iter().map(|c| norm_sqr(c).sqrt()).collect();
    if let Some(j) = norms.iter().position(|&x| x == 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let mut mu: f64 = 0.0;
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            mu = mu.max(inner(&cols[i], &cols[j]).norm() / (norms[i] * norms[j]));
        }
    }
    Ok(mu)
}

/// `√((N-K) / (K(N-1)))`.
pub fn welch_bound(grid_order: usize, count: usize) -> f64 {
    let n = grid_order as f64;
    let k = count as f64;
    ((n - k) / (k * (n - 1.0))).max(0.0).sqrt()
}

/// Sparsity level `⌊(1+√K)/2⌋` below which delays are uniquely recoverable.
pub fn sparsity_bound(count: usize) -> usize {
    ((1.0 + (count as f64).sqrt()) / 2.0).floor() as usize
}

/// Target capacity `⌊(P/2)(1+√K)⌋` of Doppler focusing.
pub fn df_capacity(pulses: usize, count: usize) -> usize {
    (pulses as f64 / 2.0 * (1.0 + (count as f64).sqrt())).floor() as usize
}

/// Default memory ceiling for materialising `Φ ⊗ Ψ`.
pub const DEFAULT_KRONECKER_BUDGET: u128 = 512 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KroneckerShape {
    pub rows: usize,
    pub cols: usize,
}

impl KroneckerShape {
    pub fn of(a: &Array2<C64>, b: &Array2<C64>) -> Self {
        Self {
            rows: a.nrows() * b.nrows(),
            cols: a.ncols() * b.ncols(),
        }
    }

    pub fn bytes(&self) -> u128 {
        self.rows as u128 * self.cols as u128 * std::mem::size_of::<C64>() as u128
    }
}

/// Dense `A ⊗ B`: entry `(i·p + k, j·q + l)` is `A[i][j]·B[k][l]`.
pub fn kronecker(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (p, q) = b.dim();
    Array2::from_shape_fn((a.nrows() * p, a.ncols() * q), |(r, c)| {
        a[[r / p, c / q]] * b[[r % p, c % q]]
    })
}

/// `Φ ⊗ Ψ` materialised, refused when above `budget_bytes`.
pub fn kronecker_dictionary(delay: &Array2<C64>, doppler: &Array2<C64>, budget_bytes: u128) -> Result<Array2<C64>> {
    let shape = KroneckerShape::of(delay, doppler);
    if shape.bytes() > budget_bytes {
        return Err(Error::DimensionOverflow {
            rows: shape.rows,
            cols: shape.cols,
            bytes: shape.bytes(),
            budget: budget_bytes,
        });
    }
    Ok(kronecker(delay, doppler))
}

/// `Φ ⊗ Ψ` evaluated on demand. Column `n·M + m` is `φ_n ⊗ ψ_m`; a
/// length-`KP` vector is indexed `k·P + p`, i.e. the row-major flattening of
/// a `K×P` measurement matrix.
#[derive(Debug, Clone, Copy)]
pub struct KroneckerOperator<'a> {
    pub delay: &'a Array2<C64>,
    pub doppler: &'a Array2<C64>,
}

impl LinearOperator for KroneckerOperator<'_> {
    fn shape(&self) -> (usize, usize) {
        (
            self.delay.nrows() * self.doppler.nrows(),
            self.delay.ncols() * self.doppler.ncols(),
        )
    }

    fn atom(&self, j: usize) -> Vec<C64> {
        let m_count = self.doppler.ncols();
        let (n, m) = (j / m_count, j % m_count);
        let phi = self.delay.column(n);
        let psi = self.doppler.column(m);
        phi.iter().flat_map(|&a| psi.iter().map(move |&b| a * b)).collect()
    }

    fn atom_norm_sqr(&self, j: usize) -> f64 {
        let m_count = self.doppler.ncols();
        let phi = self.delay.column(j / m_count);
        let psi = self.doppler.column(j % m_count);
        phi.iter().map(|z| z.norm_sqr()).sum::<f64>() * psi.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// `(Φ ⊗ Ψ)ᴴ r = vec(Φᴴ R conj(Ψ))` with `R` the `K×P` reshaping of `r`.
    fn adjoint_apply(&self, r: &[C64]) -> Vec<C64> {
        let (k_count, n_count) = self.delay.dim();
        let (p_count, m_count) = self.doppler.dim();
        // T = Φᴴ R, N×P.
        let mut t = Array2::<C64>::zeros((n_count, p_count));
        for k in 0..k_count {
            let row_r = &r[k * p_count..(k + 1) * p_count];
            for n in 0..n_count {
                let phi = self.delay[[k, n]].conj();
                for (tp, &rp) in t.row_mut(n).iter_mut().zip(row_r) {
                    *tp += phi * rp;
                }
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); n_count * m_count];
        for n in 0..n_count {
            let row_t = t.row(n);
            for m in 0..m_count {
                out[n * m_count + m] = row_t
                    .iter()
                    .zip(self.doppler.column(m))
                    .map(|(a, b)| a * b.conj())
                    .sum();
            }
        }
        out
    }
}
