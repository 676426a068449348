//! Sparse delay-Doppler recovery.
//!
//! Three pipelines share the greedy machinery here:
//! * `standard_recover`: OMP on the Kronecker dictionary `Φ ⊗ Ψ`.
//! * `structured_recover`: SOMP on `Y = ΦB` for the delays, then a
//!   per-delay Doppler match against `Ψ`.
//! * `doppler_focus` + `df_recover`: coherent summation across pulses for
//!   every Doppler grid point, then OMP per focused column.
//!
//! Greedy ties always go to the lowest column index.

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::dictionaries::{kronecker_dictionary, sparsity_bound, KroneckerOperator};
use crate::error::{Error, Result};
use crate::linalg::{cis_turns, norm_sqr, rank_error, IncrementalQr, LinearOperator, C64};
use crate::metrics::Estimate;
use crate::scene_measurement::RadarParams;

/// Residuals below this fraction of the data norm count as zero.
const ZERO_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sparsity {
    /// Number of targets known in advance.
    Known(usize),
    /// Loop bound `⌊√K⌋`.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryConfig {
    pub sparsity: Sparsity,
    /// Stop once the residual norm drops to this value.
    pub residual_tol: Option<f64>,
}

impl RecoveryConfig {
    pub fn known(s: usize) -> Self {
        Self {
            sparsity: Sparsity::Known(s),
            residual_tol: None,
        }
    }

    /// Iteration cap for a dictionary with `k` rows.
    pub fn cap(&self, k: usize) -> usize {
        match self.sparsity {
            Sparsity::Known(s) => s,
            Sparsity::Auto => (k as f64).sqrt().floor() as usize,
        }
    }

    fn should_stop(&self, residual: f64, data: f64) -> bool {
        residual <= ZERO_RESIDUAL * data || self.residual_tol.is_some_and(|tol| residual <= tol)
    }
}

/// Sparse coefficient vector returned by [`omp`].
#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub support: Vec<usize>,
    pub coefficients: Vec<C64>,
    /// Residual norm before the first pick and after every pick.
    pub residual_history: Vec<f64>,
}

/// Orthogonal matching pursuit with normalised correlation selection.
pub fn omp<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[C64],
    max_picks: usize,
    residual_tol: Option<f64>,
) -> Result<OmpResult> {
    let (rows, cols) = a.shape();
    if y.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "measurement has {} entries, dictionary has {rows} rows",
            y.len()
        )));
    }
    let cfg = RecoveryConfig {
        sparsity: Sparsity::Known(max_picks),
        residual_tol,
    };
    let norms: Vec<f64> = (0..cols).map(|j| a.atom_norm_sqr(j).sqrt()).collect();
    if let Some(j) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let data = norm_sqr(y).sqrt();
    let mut residual = y.to_vec();
    let mut history = vec![data];
    let mut support = Vec::new();
    let mut qr = IncrementalQr::new();
    let mut picked = vec![false; cols];
    while support.len() < max_picks.min(cols) && !cfg.should_stop(*history.last().unwrap(), data) {
        let corr = a.adjoint_apply(&residual);
        let Some(j) = argmax(corr.iter().zip(&norms).map(|(c, n)| c.norm() / n), &picked) else {
            break;
        };
        if !qr.push(&a.atom(j)) {
            support.push(j);
            return Err(rank_error(&support));
        }
        picked[j] = true;
        support.push(j);
        residual = qr.residual(y);
        history.push(norm_sqr(&residual).sqrt());
    }
    Ok(OmpResult {
        coefficients: qr.solve(y),
        support,
        residual_history: history,
    })
}

/// Lowest-index maximiser over unpicked entries; `None` when every score
/// is zero or all entries are taken.
fn argmax(scores: impl Iterator<Item = f64>, picked: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, s) in scores.enumerate() {
        if picked[j] {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best.filter(|&(_, s)| s > 0.0).map(|(j, _)| j)
}

/// `B` (`N×P`) with nonzero rows only on the support.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSparseEstimate {
    pub b: Array2<C64>,
    pub support: Vec<usize>,
    /// Frobenius norm of the residual before and after every pick.
    pub residual_history: Vec<f64>,
}

fn conj_transpose(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Simultaneous OMP for `Y = ΦB`: pick the atom maximising `‖φ_jᴴR‖₂`,
/// refit `B_Ω = Φ_Ω⁺ Y`, update `R = Y - Φ_Ω B_Ω`.
pub fn somp(phi: &Array2<C64>, y: &Array2<C64>, cfg: &RecoveryConfig) -> Result<JointSparseEstimate> {
    let (k, n) = phi.dim();
    let p = y.ncols();
    if y.nrows() != k {
        return Err(Error::DimensionMismatch(format!("Y has {} rows, Φ has {k}", y.nrows())));
    }
    let phi_h = conj_transpose(phi);
    let columns: Vec<Vec<C64>> = y.columns().into_iter().map(|c| c.to_vec()).collect();
    let data = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut r = y.clone();
    let mut history = vec![data];
    let mut support = Vec::new();
    let mut picked = vec![false; n];
    let mut qr = IncrementalQr::new();
    while support.len() < cfg.cap(k).min(n) && !cfg.should_stop(*history.last().unwrap(), data) {
        let g = phi_h.dot(&r);
        let scores = g
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>());
        let Some(j) = argmax(scores, &picked) else {
            break;
        };
        if !qr.push(&phi.column(j).to_vec()) {
            support.push(j);
            return Err(rank_error(&support));
        }
        picked[j] = true;
        support.push(j);
        for (col, data_col) in columns.iter().enumerate() {
            let res = qr.residual(data_col);
            r.column_mut(col).iter_mut().zip(res).for_each(|(a, b)| *a = b);
        }
        history.push(r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
    }
    let mut b = Array2::<C64>::zeros((n, p));
    for (col, data_col) in columns.iter().enumerate() {
        for (&row, v) in support.iter().zip(qr.solve(data_col)) {
            b[[row, col]] = v;
        }
    }
    Ok(JointSparseEstimate {
        b,
        support,
        residual_history: history,
    })
}

/// One recovered atom: Doppler grid index `m`, delay grid index `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEntry {
    pub m: usize,
    pub n: usize,
    pub amplitude: C64,
}

/// Sparse `M×N` delay-Doppler map.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerMap {
    pub doppler_grids: usize,
    pub delay_grids: usize,
    pub entries: Vec<MapEntry>,
}

impl DelayDopplerMap {
    pub fn empty(doppler_grids: usize, delay_grids: usize) -> Self {
        Self {
            doppler_grids,
            delay_grids,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Grid indices converted with `t = nτ/N`, `f_m` from the Doppler grid.
    pub fn to_estimates(&self, params: &RadarParams) -> Vec<Estimate> {
        let grid = params.doppler_grid();
        self.entries
            .iter()
            .map(|e| Estimate {
                delay_s: params.delay_of(e.n),
                doppler_hz: grid[e.m],
                amplitude: e.amplitude,
            })
            .collect()
    }

    /// The `count` entries of largest magnitude, ties to lowest `(m, n)`.
    pub fn strongest(&self, count: usize) -> Self {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| {
            b.amplitude
                .norm()
                .total_cmp(&a.amplitude.norm())
                .then((a.m, a.n).cmp(&(b.m, b.n)))
        });
        entries.truncate(count);
        Self { entries, ..*self }
    }

    /// The `count` largest local maxima of `|X|` over the 8-neighbourhood,
    /// with both axes treated as circular. Equal neighbours are resolved in
    /// favour of the smaller linear index.
    pub fn local_maxima(&self, count: usize) -> Self {
        let (mm, nn) = (self.doppler_grids, self.delay_grids);
        let mut mag = Array2::<f64>::zeros((mm, nn));
        for e in &self.entries {
            mag[[e.m, e.n]] = mag[[e.m, e.n]].max(e.amplitude.norm());
        }
        let beats = |a: (usize, usize), b: (usize, usize)| {
            let (va, vb) = (mag[a], mag[b]);
            va > vb || (va == vb && a <= b)
        };
        let peaks: Vec<MapEntry> = self
            .entries
            .iter()
            .filter(|e| {
                let here = (e.m, e.n);
                e.amplitude.norm() > 0.0
                    && (-1i64..=1).all(|dm| {
                        (-1i64..=1).all(|dn| {
                            let q = (
                                (e.m as i64 + dm).rem_euclid(mm as i64) as usize,
                                (e.n as i64 + dn).rem_euclid(nn as i64) as usize,
                            );
                            q == here || beats(here, q)
                        })
                    })
            })
            .copied()
            .collect();
        Self {
            entries: peaks,
            ..*self
        }
        .strongest(count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    /// Direct correlation `ψ_mᴴ b̃` for every grid point.
    #[default]
    Correlate,
    /// One `M`-point FFT of `b̃_p (-1)^p`; equivalent on the standard grid.
    Fft,
}

/// For every delay in the support, the Doppler grid point maximising
/// `|ψ_mᴴ b̃|`, with amplitude `ψ_mᴴ b̃ / ‖ψ_m‖²`.
pub fn doppler_match(b: &Array2<C64>, support: &[usize], psi: &Array2<C64>, mode: MatchMode) -> DelayDopplerMap {
    let (p, m_count) = psi.dim();
    let col_norms: Vec<f64> = (0..m_count).map(|m| norm_sqr(&psi.column(m).to_vec())).collect();
    let fft = (mode == MatchMode::Fft).then(|| FftPlanner::new().plan_fft_forward(m_count));
    let entries = support
        .iter()
        .map(|&n| {
            let row = b.row(n);
            let corr: Vec<C64> = match &fft {
                None => (0..m_count)
                    .map(|m| psi.column(m).iter().zip(row.iter()).map(|(a, x)| a.conj() * x).sum())
                    .collect(),
                Some(plan) => {
                    // ψ_mᴴ b̃ = Σ_p b̃_p (-1)^p e^{-j2πpm/M}; fold p mod M.
                    let mut buf = vec![C64::new(0.0, 0.0); m_count];
                    for (q, x) in row.iter().enumerate().take(p) {
                        let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
                        buf[q % m_count] += x * sign;
                    }
                    plan.process(&mut buf);
                    buf
                }
            };
            let picked = vec![false; m_count];
            let m = argmax(corr.iter().map(|c| c.norm()), &picked).unwrap_or(0);
            MapEntry {
                m,
                n,
                amplitude: corr[m] / col_norms[m],
            }
        })
        .collect();
    DelayDopplerMap {
        doppler_grids: m_count,
        delay_grids: b.nrows(),
        entries,
    }
}

/// Recovery output together with its residual trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub map: DelayDopplerMap,
    pub residual_history: Vec<f64>,
}

/// SOMP on the delays followed by [`doppler_match`].
pub fn structured_recover(
    y: &Array2<C64>,
    phi: &Array2<C64>,
    psi: &Array2<C64>,
    cfg: &RecoveryConfig,
    mode: MatchMode,
) -> Result<Recovered> {
    if y.ncols() != psi.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Y has {} pulses, Ψ has {} rows",
            y.ncols(),
            psi.nrows()
        )));
    }
    let est = somp(phi, y, cfg)?;
    Ok(Recovered {
        map: doppler_match(&est.b, &est.support, psi, mode),
        residual_history: est.residual_history,
    })
}

/// `D[k][m] = Σ_p Y[k][p] e^{-j2πf_m pτ}` (`K×M`).
pub fn doppler_focus(y: &Array2<C64>, pri_s: f64, grid_hz: &[f64]) -> Array2<C64> {
    let p_count = y.ncols();
    let kernel = Array2::from_shape_fn((p_count, grid_hz.len()), |(p, m)| {
        cis_turns(-(grid_hz[m] * pri_s * p as f64).rem_euclid(1.0))
    });
    y.dot(&kernel)
}

/// Per-column OMP on the focused measurements, then the `S` largest local
/// maxima of the resulting map. Per-column picks are capped at
/// `min(S, ⌊(1+√K)/2⌋)`; amplitudes keep the focusing gain (≈ `P·a`).
pub fn df_recover(d: &Array2<C64>, phi: &Array2<C64>, cfg: &RecoveryConfig) -> Result<DelayDopplerMap> {
    let (k, n) = phi.dim();
    if d.nrows() != k {
        return Err(Error::DimensionMismatch(format!("D has {} rows, Φ has {k}", d.nrows())));
    }
    let per_column = match cfg.sparsity {
        Sparsity::Known(s) => s.min(sparsity_bound(k)),
        Sparsity::Auto => sparsity_bound(k),
    };
    let columns: Vec<OmpResult> = (0..d.ncols())
        .into_par_iter()
        .map(|m| omp(phi, &d.column(m).to_vec(), per_column, cfg.residual_tol))
        .collect::<Result<_>>()?;
    let entries = columns
        .iter()
        .enumerate()
        .flat_map(|(m, r)| {
            r.support
                .iter()
                .zip(&r.coefficients)
                .map(move |(&n, &amplitude)| MapEntry { m, n, amplitude })
        })
        .collect();
    let full = DelayDopplerMap {
        doppler_grids: d.ncols(),
        delay_grids: n,
        entries,
    };
    Ok(match cfg.sparsity {
        Sparsity::Known(s) => full.local_maxima(s),
        Sparsity::Auto => {
            let all = full.len();
            full.local_maxima(all)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KroneckerMode {
    /// Materialise `Φ ⊗ Ψ`, failing above the byte budget.
    Dense { budget_bytes: u128 },
    /// Evaluate columns and adjoint products on demand.
    Implicit,
}

/// OMP on `vec(Y) = (Φ ⊗ Ψ) x`; `x[n·M + m]` lands at map entry `(m, n)`.
pub fn standard_recover(
    y: &Array2<C64>,
    phi: &Array2<C64>,
    psi: &Array2<C64>,
    cfg: &RecoveryConfig,
    mode: KroneckerMode,
) -> Result<Recovered> {
    if y.dim() != (phi.nrows(), psi.nrows()) {
        return Err(Error::DimensionMismatch(format!(
            "Y is {:?}, expected {}x{}",
            y.dim(),
            phi.nrows(),
            psi.nrows()
        )));
    }
    let vec_y: Vec<C64> = y.iter().copied().collect();
    let cap = cfg.cap(phi.nrows());
    let result = match mode {
        KroneckerMode::Dense { budget_bytes } => {
            let a = kronecker_dictionary(phi, psi, budget_bytes)?;
            omp(&a, &vec_y, cap, cfg.residual_tol)?
        }
        KroneckerMode::Implicit => {
            let op = KroneckerOperator {
                delay: phi,
                doppler: psi,
            };
            omp(&op, &vec_y, cap, cfg.residual_tol)?
        }
    };
    let m_count = psi.ncols();
    let entries = result
        .support
        .iter()
        .zip(&result.coefficients)
        .map(|(&j, &amplitude)| MapEntry {
            m: j % m_count,
            n: j / m_count,
            amplitude,
        })
        .collect();
    Ok(Recovered {
        map: DelayDopplerMap {
            doppler_grids: m_count,
            delay_grids: phi.ncols(),
            entries,
        },
        residual_history: result.residual_history,
    })
}

/// `‖B‖_{i,q} = (Σ_n ‖b̃_n‖_i^q)^{1/q}` over the rows of `B`.
pub fn mixed_norm(b: &Array2<C64>, i: f64, q: f64) -> Result<f64> {
    if !(i >= 1.0 && q >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mixed norm needs i, q >= 1, got ({i}, {q})"
        )));
    }
    let total: f64 = b
        .rows()
        .into_iter()
        .map(|row| {
            let ri = row.iter().map(|z| z.norm().powf(i)).sum::<f64>().powf(1.0 / i);
            ri.powf(q)
        })
        .sum();
    Ok(total.powf(1.0 / q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionaries::{build_sampling, doppler_dictionary, SamplingIndexSet, SamplingSpec};
    use crate::ds_codes::catalog;
    use crate::scene_measurement::{random_scene, synthesize_model, Scene, SceneOptions, Target};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn setup(
        name: &str,
        pulses: usize,
        doppler_grids: usize,
    ) -> (RadarParams, SamplingIndexSet, Array2<C64>, Array2<C64>) {
        let ds = catalog(name).unwrap();
        let n = ds.modulus() as usize;
        let params = RadarParams {
            pri_s: 10e-6,
            bandwidth_hz: n as f64 / 10e-6,
            pulses,
            delay_grids: n,
            doppler_grids,
        };
        let s = build_sampling(SamplingSpec::DifferenceSet(&ds), n, params.fourier_range().unwrap()).unwrap();
        let phi = s.delay_dictionary().unwrap().matrix;
        let psi = doppler_dictionary(pulses, doppler_grids, params.pri_s).unwrap().matrix;
        (params, s, phi, psi)
    }

    fn on_grid(count: usize, params: &RadarParams, seed: u64) -> Scene {
        let opts = SceneOptions {
            on_grid: true,
            distinct_delays: true,
            delay_limit_s: None,
        };
        random_scene(count, params, opts, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn grid_pairs(scene: &Scene, params: &RadarParams) -> Vec<(usize, usize)> {
        let grid = params.doppler_grid();
        let mut v: Vec<(usize, usize)> = scene
            .targets
            .iter()
            .map(|t| {
                let n = (t.delay_s / params.pri_s * params.delay_grids as f64).round() as usize;
                let m = grid.iter().position(|&f| f == t.doppler_hz).unwrap();
                (m, n)
            })
            .collect();
        v.sort_unstable();
        v
    }

    fn map_pairs(map: &DelayDopplerMap) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = map.entries.iter().map(|e| (e.m, e.n)).collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn omp_examples() {
        let a = array![[c(1.0), c(0.0), c(0.6)], [c(0.0), c(1.0), c(0.8)]];
        let y: Vec<C64> = a.column(2).to_vec();
        let r = omp(&a, &y, 1, None).unwrap();
        assert_eq!(r.support, vec![2]);
        assert!((r.coefficients[0] - 1.0).norm() < 1e-12);

        let zero = vec![c(0.0); 2];
        let r = omp(&a, &zero, 2, None).unwrap();
        assert!(r.support.is_empty() && r.coefficients.is_empty());

        let bad = array![[c(1.0), c(0.0)], [c(0.0), c(0.0)]];
        assert!(matches!(
            omp(&bad, &[c(1.0), c(0.0)], 1, None),
            Err(Error::ZeroColumn(1))
        ));
    }

    #[test]
    fn omp_reports_rank_deficiency() {
        let nearly_parallel = array![[c(1.0), c(1.0)], [c(1.0), c(1.0 + 1e-14)]];
        assert!(matches!(
            omp(&nearly_parallel, &[c(1.0), c(0.0)], 2, None),
            Err(Error::RankDeficientSupport { .. })
        ));
    }

    #[test]
    fn somp_single_target() {
        let (params, s, phi, _) = setup("91-10-1", 8, 8);
        let scene = Scene::new(vec![Target {
            amplitude: C64::new(0.0, 1.0),
            delay_s: params.delay_of(40),
            doppler_hz: params.doppler_grid()[3],
        }]);
        let y = synthesize_model(&scene, &s, &params).values;
        let est = somp(&phi, &y, &RecoveryConfig::known(1)).unwrap();
        assert_eq!(est.support, vec![40]);

        let zero = Array2::<C64>::zeros(y.dim());
        let est = somp(&phi, &zero, &RecoveryConfig::known(2)).unwrap();
        assert!(est.support.is_empty());
        assert_eq!(est.residual_history, vec![0.0]);
    }

    #[test]
    fn somp_residual_is_orthogonal_and_monotone() {
        let (params, s, phi, _) = setup("91-10-1", 8, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scene = random_scene(3, &params, SceneOptions::default(), &mut rng).unwrap();
        let y = synthesize_model(&scene, &s, &params).values;
        let cfg = RecoveryConfig {
            sparsity: Sparsity::Auto,
            residual_tol: None,
        };
        let est = somp(&phi, &y, &cfg).unwrap();
        assert_eq!(est.support.len(), 3);
        assert!(est.residual_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let r = &y - &phi.dot(&est.b);
        for &j in &est.support {
            let g: C64 = phi.column(j).iter().zip(r.column(0)).map(|(a, b)| a.conj() * b).sum();
            assert!(g.norm() < 1e-8);
        }
    }

    #[test]
    fn doppler_match_examples() {
        let psi = doppler_dictionary(6, 16, 1e-4).unwrap().matrix;
        let mut b = Array2::<C64>::zeros((3, 6));
        b.row_mut(1).assign(&psi.column(11));
        for mode in [MatchMode::Correlate, MatchMode::Fft] {
            let map = doppler_match(&b, &[1], &psi, mode);
            assert_eq!((map.entries[0].m, map.entries[0].n), (11, 1));
            assert!((map.entries[0].amplitude - 1.0).norm() < 1e-12);
        }
        let scale = C64::new(-0.3, 2.0);
        let scaled = b.mapv(|z| z * scale);
        let map = doppler_match(&scaled, &[1], &psi, MatchMode::Correlate);
        assert_eq!(map.entries[0].m, 11);
        assert!((map.entries[0].amplitude - scale).norm() < 1e-12);
    }

    #[test]
    fn fft_match_agrees_with_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (p, m) in [(20, 128), (8, 8), (10, 4)] {
            let psi = doppler_dictionary(p, m, 1e-5).unwrap().matrix;
            let b = Array2::from_shape_fn((1, p), |_| crate::scene_measurement::complex_gaussian(&mut rng, 1.0));
            let x = doppler_match(&b, &[0], &psi, MatchMode::Correlate);
            let y = doppler_match(&b, &[0], &psi, MatchMode::Fft);
            assert_eq!(x.entries[0].m, y.entries[0].m);
            assert!((x.entries[0].amplitude - y.entries[0].amplitude).norm() < 1e-10);
        }
    }

    #[test]
    fn structured_recovers_single_and_empty() {
        let (params, s, phi, psi) = setup("91-10-1", 8, 16);
        let scene = on_grid(1, &params, 9);
        let y = synthesize_model(&scene, &s, &params).values;
        let out = structured_recover(&y, &phi, &psi, &RecoveryConfig::known(1), MatchMode::Correlate).unwrap();
        assert_eq!(map_pairs(&out.map), grid_pairs(&scene, &params));
        assert!((out.map.entries[0].amplitude - scene.targets[0].amplitude).norm() < 1e-10);

        let zero = Array2::<C64>::zeros(y.dim());
        let out = structured_recover(&zero, &phi, &psi, &RecoveryConfig::known(1), MatchMode::Correlate).unwrap();
        assert!(out.map.is_empty());
    }

    #[test]
    fn structured_exact_at_sparsity_bound() {
        let (params, s, phi, psi) = setup("2863-54-1", 20, 128);
        for seed in 0..5 {
            let scene = on_grid(4, &params, seed);
            let y = synthesize_model(&scene, &s, &params).values;
            let out = structured_recover(&y, &phi, &psi, &RecoveryConfig::known(4), MatchMode::Fft).unwrap();
            assert_eq!(map_pairs(&out.map), grid_pairs(&scene, &params), "seed {seed}");
        }
    }

    #[test]
    fn focusing_gain_and_dft_identity() {
        let (params, s, _, psi) = setup("91-10-1", 8, 8);
        let grid = params.doppler_grid();
        let scene = Scene::new(vec![Target {
            amplitude: c(1.0),
            delay_s: params.delay_of(10),
            doppler_hz: grid[5],
        }]);
        let y = synthesize_model(&scene, &s, &params).values;
        let d = doppler_focus(&y, params.pri_s, &grid);
        for k in 0..s.len() {
            assert!((d[[k, 5]].norm() - 8.0 * y[[k, 0]].norm()).abs() < 1e-8);
        }
        // Matches Y·conj(Ψ), which is the P-point DFT up to the grid offset.
        let want = y.dot(&psi.mapv(|z| z.conj()));
        assert!((&d - &want).iter().all(|z| z.norm() < 1e-8));
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(8);
        for k in 0..s.len() {
            let mut row: Vec<C64> = y
                .row(k)
                .iter()
                .enumerate()
                .map(|(p, z)| z * if p % 2 == 0 { 1.0 } else { -1.0 })
                .collect();
            fft.process(&mut row);
            for m in 0..8 {
                assert!((row[m] - d[[k, m]]).norm() < 1e-8);
            }
        }
        let single = y.slice(ndarray::s![.., 0..1]).to_owned();
        let d1 = doppler_focus(&single, params.pri_s, &grid);
        for k in 0..s.len() {
            assert!(d1.row(k).iter().all(|z| (z - single[[k, 0]]).norm() < 1e-15));
        }
    }

    #[test]
    fn focusing_is_linear() {
        let (params, s, _, _) = setup("91-10-1", 8, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_scene(2, &params, SceneOptions::default(), &mut rng).unwrap();
        let b = random_scene(2, &params, SceneOptions::default(), &mut rng).unwrap();
        let both = Scene::new(a.targets.iter().chain(&b.targets).copied().collect());
        let grid = params.doppler_grid();
        let f = |sc: &Scene| doppler_focus(&synthesize_model(sc, &s, &params).values, params.pri_s, &grid);
        assert!((&f(&a) + &f(&b) - &f(&both)).iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn df_matches_structured_on_single_target() {
        let (params, s, phi, psi) = setup("993-32-1", 20, 128);
        for seed in 0..4 {
            let scene = on_grid(1, &params, 100 + seed);
            let y = synthesize_model(&scene, &s, &params).values;
            let d = doppler_focus(&y, params.pri_s, &params.doppler_grid());
            let df = df_recover(&d, &phi, &RecoveryConfig::known(1)).unwrap();
            let st = structured_recover(&y, &phi, &psi, &RecoveryConfig::known(1), MatchMode::Correlate).unwrap();
            assert_eq!(map_pairs(&df), map_pairs(&st.map));
            assert_eq!(map_pairs(&df), grid_pairs(&scene, &params));
            assert!((df.entries[0].amplitude.norm() - 20.0).abs() < 1e-8);
        }
        let empty = Array2::<C64>::zeros((32, 128));
        assert!(df_recover(&empty, &phi, &RecoveryConfig::known(2)).unwrap().is_empty());
    }

    #[test]
    fn df_recovers_targets_on_distinct_dopplers() {
        let (params, s, phi, _) = setup("91-10-1", 16, 16);
        // P = M: focusing columns are orthogonal, two targets per column at most.
        let grid = params.doppler_grid();
        let targets: Vec<Target> = [(3, 2), (40, 2), (70, 9), (11, 13)]
            .iter()
            .map(|&(n, m)| Target {
                amplitude: cis_turns(n as f64 / 17.0),
                delay_s: params.delay_of(n),
                doppler_hz: grid[m],
            })
            .collect();
        let scene = Scene::new(targets);
        let y = synthesize_model(&scene, &s, &params).values;
        let d = doppler_focus(&y, params.pri_s, &grid);
        let map = df_recover(&d, &phi, &RecoveryConfig::known(4)).unwrap();
        assert_eq!(map_pairs(&map), grid_pairs(&scene, &params));
    }

    #[test]
    fn standard_recovery_and_ordering() {
        let (params, s, phi, psi) = setup("91-10-1", 8, 8);
        for seed in 0..5 {
            let scene = on_grid(2, &params, 50 + seed);
            let y = synthesize_model(&scene, &s, &params).values;
            for mode in [KroneckerMode::Implicit, KroneckerMode::Dense { budget_bytes: 1 << 30 }] {
                let out = standard_recover(&y, &phi, &psi, &RecoveryConfig::known(2), mode).unwrap();
                assert_eq!(map_pairs(&out.map), grid_pairs(&scene, &params));
            }
        }
        // vec(Y) index k·P + p against column n·M + m of Φ ⊗ Ψ.
        let a = crate::dictionaries::kronecker(&phi, &psi);
        let (n, m) = (17, 6);
        let scene = Scene::new(vec![Target {
            amplitude: c(1.0),
            delay_s: params.delay_of(n),
            doppler_hz: params.doppler_grid()[m],
        }]);
        let y = synthesize_model(&scene, &s, &params).values;
        for (i, v) in y.iter().enumerate() {
            assert!((v - a[[i, n * 8 + m]]).norm() < 1e-12);
        }
        assert!(matches!(
            standard_recover(
                &y,
                &phi,
                &psi,
                &RecoveryConfig::known(1),
                KroneckerMode::Dense { budget_bytes: 10 }
            ),
            Err(Error::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn local_maxima_prefers_peaks() {
        let e = |m, n, a: f64| MapEntry { m, n, amplitude: c(a) };
        let map = DelayDopplerMap {
            doppler_grids: 8,
            delay_grids: 10,
            entries: vec![e(0, 0, 5.0), e(1, 0, 4.0), e(7, 9, 3.0), e(4, 5, 2.0), e(4, 6, 2.0)],
        };
        let peaks = map.local_maxima(5);
        assert_eq!(map_pairs(&peaks), vec![(0, 0), (4, 5)]);
        assert_eq!(map.strongest(2).entries[1].m, 1);
    }

    #[test]
    fn mixed_norm_examples() {
        let eye = array![[c(1.0), c(0.0)], [c(0.0), c(1.0)]];
        assert!((mixed_norm(&eye, 2.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(mixed_norm(&Array2::zeros((3, 2)), 2.0, 1.0).unwrap(), 0.0);
        let mut one = Array2::<C64>::zeros((3, 2));
        one.row_mut(1).assign(&array![c(3.0), c(4.0)]);
        for q in [1.0, 2.0, 7.0] {
            assert!((mixed_norm(&one, 2.0, q).unwrap() - 5.0).abs() < 1e-12);
        }
        assert!(mixed_norm(&one, 0.5, 1.0).is_err());
    }
}
