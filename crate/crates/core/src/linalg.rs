//! Small dense complex linear-algebra pieces shared by the solvers.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// A dictionary seen as a linear map: column access plus the adjoint
/// product `Aᴴr`, which is all the greedy solvers need.
pub trait LinearOperator: Sync {
    /// `(rows, columns)`.
    fn shape(&self) -> (usize, usize);
    /// Column `j`.
    fn atom(&self, j: usize) -> Vec<C64>;
    /// `Aᴴ r` for a vector with one entry per row.
    fn adjoint_apply(&self, r: &[C64]) -> Vec<C64>;

    fn atom_norm_sqr(&self, j: usize) -> f64 {
        norm_sqr(&self.atom(j))
    }
}

impl LinearOperator for Array2<C64> {
    fn shape(&self) -> (usize, usize) {
        self.dim()
    }

    fn atom(&self, j: usize) -> Vec<C64> {
        self.column(j).to_vec()
    }

    fn adjoint_apply(&self, r: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim().1];
        for (row, &ri) in self.rows().into_iter().zip(r) {
            for (o, a) in out.iter_mut().zip(row.iter()) {
                *o += a.conj() * ri;
            }
        }
        out
    }
}

/// Incremental QR factorisation of a growing set of columns, by modified
/// Gram-Schmidt with one re-orthogonalisation pass.
#[derive(Debug, Clone, Default)]
pub struct IncrementalQr {
    q: Vec<Vec<C64>>,
    // r[j] holds column j of R (length j + 1).
    r: Vec<Vec<C64>>,
}

/// Relative threshold below which a new column counts as linearly dependent.
const RANK_TOL: f64 = 1e-10;

impl IncrementalQr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Appends a column. Returns `false` (and leaves the factorisation
    /// untouched) when the column lies in the span of the current ones.
    pub fn push(&mut self, column: &[C64]) -> bool {
        let scale = norm_sqr(column).sqrt();
        if scale == 0.0 {
            return false;
        }
        let mut v = column.to_vec();
        let mut coeffs = vec![C64::new(0.0, 0.0); self.q.len() + 1];
        for _ in 0..2 {
            for (i, qi) in self.q.iter().enumerate() {
                let c = inner(qi, &v);
                coeffs[i] += c;
                for (vk, qk) in v.iter_mut().zip(qi) {
                    *vk -= c * qk;
                }
            }
        }
        let rest = norm_sqr(&v).sqrt();
        if rest <= RANK_TOL * scale {
            return false;
        }
        v.iter_mut().for_each(|z| *z /= rest);
        coeffs[self.q.len()] = C64::new(rest, 0.0);
        self.q.push(v);
        self.r.push(coeffs);
        true
    }

    /// Least-squares coefficients `argmin ‖A x - y‖` for the stored columns.
    pub fn solve(&self, y: &[C64]) -> Vec<C64> {
        let n = self.q.len();
        let z: Vec<C64> = self.q.iter().map(|qi| inner(qi, y)).collect();
        let mut x = vec![C64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut acc = z[i];
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                acc -= self.r[j][i] * xj;
            }
            x[i] = acc / self.r[i][i];
        }
        x
    }

    /// `y - P y` where `P` projects onto the stored columns.
    pub fn residual(&self, y: &[C64]) -> Vec<C64> {
        let mut out = y.to_vec();
        for qi in &self.q {
            let c = inner(qi, &out);
            for (o, q) in out.iter_mut().zip(qi) {
                *o -= c * q;
            }
        }
        out
    }
}

pub(crate) fn rank_error(support: &[usize]) -> Error {
    Error::RankDeficientSupport {
        support: support.to_vec(),
    }
}

/// `exp(j2π·turns)`.
pub(crate) fn cis_turns(turns: f64) -> C64 {
    C64::from_polar(1.0, std::f64::consts::TAU * turns)
}

pub(crate) fn check_dims(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(what()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn solves_square_system() {
        let a = [vec![c(1.0, 0.0), c(0.0, 1.0)], vec![c(2.0, 0.0), c(1.0, -1.0)]];
        let x_true = [c(0.5, -1.0), c(2.0, 0.25)];
        let y: Vec<C64> = (0..2).map(|i| a[0][i] * x_true[0] + a[1][i] * x_true[1]).collect();
        let mut qr = IncrementalQr::new();
        assert!(qr.push(&a[0]));
        assert!(qr.push(&a[1]));
        let x = qr.solve(&y);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).norm() < 1e-12);
        }
        assert!(norm_sqr(&qr.residual(&y)) < 1e-24);
    }

    #[test]
    fn detects_dependent_column() {
        let mut qr = IncrementalQr::new();
        assert!(qr.push(&[c(1.0, 0.0), c(1.0, 0.0)]));
        assert!(!qr.push(&[c(0.0, 2.0), c(0.0, 2.0)]));
        assert!(!qr.push(&[c(0.0, 0.0), c(0.0, 0.0)]));
        assert_eq!(qr.len(), 1);
    }

    #[test]
    fn adjoint_apply_matches_definition() {
        let a = array![[c(1.0, 1.0), c(0.0, 2.0)], [c(3.0, 0.0), c(-1.0, 0.5)]];
        let r = [c(0.5, 0.0), c(0.0, -1.0)];
        let got = LinearOperator::adjoint_apply(&a, &r);
        for j in 0..2 {
            let want = a[[0, j]].conj() * r[0] + a[[1, j]].conj() * r[1];
            assert!((got[j] - want).norm() < 1e-14);
        }
    }
}
