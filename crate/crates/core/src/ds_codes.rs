//! Cyclic difference sets.
//!
//! A set of `K` residues mod `N` is an `(N, K, λ)` difference set when the
//! `K(K-1)` ordered pairwise differences cover every nonzero residue exactly
//! `λ` times. Used as Fourier sampling indices these give partial-Fourier
//! delay dictionaries whose cross-correlation is flat at the Welch bound, and
//! as tone sets for the DS-FCM waveform.

use crate::error::{Error, Result};

/// A verified `(N, K, λ)` cyclic difference set.
///
/// Construction always goes through [`verify_difference_set`], so holding a
/// value means the difference histogram is flat. The trivial one-element set
/// (`λ = 0`) is accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifferenceSet {
    modulus: u64,
    lambda: u64,
    elements: Vec<u64>,
}

impl DifferenceSet {
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn size(&self) -> usize {
        self.elements.len()
    }

    pub fn lambda(&self) -> u64 {
        self.lambda
    }

    /// Sorted residues in `[0, N)`.
    pub fn elements(&self) -> &[u64] {
        &self.elements
    }

    /// Short `N-K-λ` label, the catalog naming scheme.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.modulus, self.size(), self.lambda)
    }
}

/// Count of each modular difference `d = (a - b) mod N` over ordered pairs
/// `a != b`. `counts[0]` is always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifferenceHistogram {
    pub counts: Vec<u64>,
}

impl DifferenceHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// The common count over `d = 1..N-1` if the histogram is flat there.
    pub fn flat_level(&self) -> Option<u64> {
        let mut nonzero = self.counts.iter().skip(1);
        let first = *nonzero.next()?;
        nonzero.all(|&c| c == first).then_some(first)
    }
}

fn check_residues(elements: &[u64], modulus: u64) -> Result<()> {
    if modulus < 2 {
        return Err(Error::OutOfRange {
            value: modulus as i64,
            range: "modulus >= 2".into(),
        });
    }
    if let Some(&bad) = elements.iter().find(|&&e| e >= modulus) {
        return Err(Error::OutOfRange {
            value: bad as i64,
            range: format!("[0, {modulus})"),
        });
    }
    Ok(())
}

/// Exact histogram of pairwise modular differences by direct enumeration.
pub fn difference_histogram(elements: &[u64], modulus: u64) -> Result<DifferenceHistogram> {
    check_residues(elements, modulus)?;
    let mut counts = vec![0u64; modulus as usize];
    for (i, &a) in elements.iter().enumerate() {
        for (j, &b) in elements.iter().enumerate() {
            if i != j {
                counts[((a + modulus - b) % modulus) as usize] += 1;
            }
        }
    }
    Ok(DifferenceHistogram { counts })
}

/// Checks that `elements` form a cyclic difference set mod `modulus` and
/// infers `λ` from the flat histogram.
pub fn verify_difference_set(elements: &[u64], modulus: u64) -> Result<DifferenceSet> {
    check_residues(elements, modulus)?;
    if elements.is_empty() {
        return Err(Error::OutOfRange {
            value: 0,
            range: "at least one element".into(),
        });
    }
    let mut sorted = elements.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateElements(w[0]));
    }

    let hist = difference_histogram(&sorted, modulus)?;
    let k = sorted.len() as u64;
    let expected = k * (k - 1) / (modulus - 1);
    // Report a missing difference first; it is the more telling defect.
    let bad = |pred: &dyn Fn(u64) -> bool| hist.counts.iter().enumerate().skip(1).find(|(_, &c)| pred(c));
    if let Some((d, &count)) = bad(&|c| c < expected).or_else(|| bad(&|c| c != expected)) {
        return Err(Error::NotADifferenceSet {
            modulus,
            difference: d as u64,
            count,
            expected,
        });
    }
    debug_assert!(parameter_check(modulus, k, expected));

    Ok(DifferenceSet {
        modulus,
        lambda: expected,
        elements: sorted,
    })
}

/// Symmetric representatives: every element above `⌊N/2⌋` is replaced by
/// `κ - N`, so the indices straddle zero. Returned in ascending order.
pub fn equivalent_shift(ds: &DifferenceSet) -> Vec<i64> {
    symmetric_representatives(&ds.elements, ds.modulus)
}

/// The shift rule of [`equivalent_shift`] applied to arbitrary residues.
pub fn symmetric_representatives(elements: &[u64], modulus: u64) -> Vec<i64> {
    let n = modulus as i64;
    let half = n / 2;
    let mut shifted: Vec<i64> = elements
        .iter()
        .map(|&e| {
            let e = e as i64;
            if e > half {
                e - n
            } else {
                e
            }
        })
        .collect();
    shifted.sort_unstable();
    shifted
}

/// Necessary condition `λ(N-1) = K(K-1)`.
pub fn parameter_check(modulus: u64, size: u64, lambda: u64) -> bool {
    modulus >= 1 && lambda * (modulus - 1) == size * size.saturating_sub(1)
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Paley construction: the nonzero squares mod a prime `p ≡ 3 (mod 4)` form
/// a `(p, (p-1)/2, (p-3)/4)` difference set.
pub fn quadratic_residue_ds(p: u64) -> Result<DifferenceSet> {
    if !is_prime(p) {
        return Err(Error::NotPrime(p));
    }
    if p % 4 != 3 {
        return Err(Error::WrongResidueClass(p));
    }
    let mut squares: Vec<u64> = (1..p).map(|x| x * x % p).collect();
    squares.sort_unstable();
    squares.dedup();
    verify_difference_set(&squares, p)
}

const DS_91_10_1: [u64; 10] = [0, 1, 3, 9, 27, 49, 56, 61, 77, 81];

const DS_993_32_1: [u64; 32] = [
    0, 1, 33, 86, 90, 132, 148, 168, 191, 213, 241, 251, 260, 262, 265, 446, 490, 507, 586, 615, 650, 656, 663, 690,
    774, 792, 800, 872, 887, 926, 938, 963,
];

const DS_2863_54_1: [u64; 54] = [
    0, 1, 18, 90, 101, 354, 429, 490, 514, 612, 620, 622, 671, 731, 753, 797, 809, 849, 911, 1054, 1074, 1083, 1087,
    1171, 1178, 1199, 1236, 1306, 1387, 1458, 1622, 1637, 1669, 1672, 1714, 1837, 1843, 1868, 1873, 1916, 1942, 1983,
    2010, 2029, 2063, 2086, 2149, 2213, 2347, 2361, 2516, 2555, 2571, 2609,
];

/// Names accepted by [`catalog`].
pub const CATALOG_NAMES: [&str; 3] = ["91-10-1", "993-32-1", "2863-54-1"];

/// Built-in planar difference sets, re-verified on every load.
pub fn catalog(name: &str) -> Result<DifferenceSet> {
    let (elements, modulus): (&[u64], u64) = match name {
        "91-10-1" => (&DS_91_10_1, 91),
        "993-32-1" => (&DS_993_32_1, 993),
        "2863-54-1" => (&DS_2863_54_1, 2863),
        other => return Err(Error::UnknownName(other.to_string())),
    };
    verify_difference_set(elements, modulus)
}
