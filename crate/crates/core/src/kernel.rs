//! Resonant interaction coefficients and the layered pair-sum table.
//!
//! The quartic coefficient `S(n, j, k, m) = min(n, j, k, m) + 1` counts the
//! layers `l = 0..=min` that all four indices reach. Splitting every quartic
//! contraction by layer turns it into sums of squared pair sums
//!
//! ```text
//! C_l(s) = sum_{k = l}^{s - l} a_k a_{s - k}
//! ```
//!
//! and consecutive layers differ by a single pair of terms,
//! `C_{l+1}(s) = C_l(s) - 2 a_l a_{s-l}`, so the whole table costs `O(N^2)`.

use num_complex::Complex64;

/// `min(n, j, k, m) + 1` for a resonant quartet `n + j = k + m`.
#[inline]
pub fn min_plus_one(n: usize, j: usize, k: usize, m: usize) -> usize {
    debug_assert_eq!(n + j, k + m, "non-resonant quartet ({n},{j},{k},{m})");
    n.min(j).min(k).min(m) + 1
}

/// Direct pairwise evaluation of the layer-0 row `C_0(s)`, `0 <= s <= 2N-2`.
///
/// Each unordered pair `{k, s-k}` is visited once and doubled, so relabelling
/// `k <-> s-k` leaves the result bit-for-bit unchanged.
pub(crate) fn base_row(alpha: &[Complex64]) -> Vec<Complex64> {
    let n = alpha.len();
    if n == 0 {
        return Vec::new();
    }
    let mut row = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
    for (s, out) in row.iter_mut().enumerate() {
        let lo = s.saturating_sub(n - 1);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut k = lo;
        while 2 * k < s {
            acc += alpha[k] * alpha[s - k];
            k += 1;
        }
        acc *= 2.0;
        if 2 * k == s {
            acc += alpha[k] * alpha[k];
        }
        *out = acc;
    }
    row
}

/// Streaming view over the layers: holds one row `C_l(.)` at a time.
#[derive(Debug, Clone)]
pub(crate) struct PairSumRow<'a> {
    alpha: &'a [Complex64],
    layer: usize,
    values: Vec<Complex64>,
}

impl<'a> PairSumRow<'a> {
    pub(crate) fn new(alpha: &'a [Complex64]) -> Self {
        Self {
            alpha,
            layer: 0,
            values: base_row(alpha),
        }
    }

    pub(crate) fn layer(&self) -> usize {
        self.layer
    }

    /// `C_l(s)`; zero for `s < 2l` or `s > 2N-2`.
    #[inline]
    pub(crate) fn get(&self, s: usize) -> Complex64 {
        if s < 2 * self.layer || s >= self.values.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.values[s]
        }
    }

    /// Entries `s >= 2l` of the current row.
    pub(crate) fn active(&self) -> &[Complex64] {
        let start = (2 * self.layer).min(self.values.len());
        &self.values[start..]
    }

    /// Advances `l -> l + 1` in `O(N)`.
    pub(crate) fn advance(&mut self) {
        let l = self.layer;
        let n = self.alpha.len();
        let len = self.values.len();
        for s in (2 * l)..(2 * l + 2).min(len) {
            self.values[s] = Complex64::new(0.0, 0.0);
        }
        let two_al = 2.0 * self.alpha[l.min(n - 1)];
        if l < n {
            for s in (2 * l + 2)..len {
                let m = s - l;
                if m >= n {
                    break;
                }
                self.values[s] -= two_al * self.alpha[m];
            }
        }
        self.layer += 1;
    }
}

/// Dense table of `C_l(s)` for `0 <= l <= max_layer`, `2l <= s <= 2N-2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredPairSums {
    n: usize,
    max_layer: usize,
    offsets: Vec<usize>,
    data: Vec<Complex64>,
}

impl LayeredPairSums {
    /// Builds the table: direct row 0, then the layer recurrence.
    ///
    /// `max_layer` is clamped to `N - 1`.
    pub fn compute(alpha: &[Complex64], max_layer: usize) -> Self {
        let n = alpha.len();
        if n == 0 {
            return Self {
                n,
                max_layer: 0,
                offsets: vec![0],
                data: Vec::new(),
            };
        }
        let max_layer = max_layer.min(n - 1);
        let mut offsets = Vec::with_capacity(max_layer + 2);
        let mut data = Vec::new();
        let mut row = PairSumRow::new(alpha);
        for l in 0..=max_layer {
            offsets.push(data.len());
            data.extend_from_slice(row.active());
            if l < max_layer {
                row.advance();
            }
        }
        offsets.push(data.len());
        Self {
            n,
            max_layer,
            offsets,
            data,
        }
    }

    pub fn truncation(&self) -> usize {
        self.n
    }

    pub fn max_layer(&self) -> usize {
        self.max_layer
    }

    /// Entry `C_l(s)`; absent entries read as zero.
    pub fn get(&self, l: usize, s: usize) -> Complex64 {
        if self.n == 0 || l > self.max_layer || s < 2 * l || s > 2 * self.n - 2 {
            return Complex64::new(0.0, 0.0);
        }
        self.data[self.offsets[l] + (s - 2 * l)]
    }

    /// Row `l` as a slice starting at `s = 2l`.
    pub fn row(&self, l: usize) -> &[Complex64] {
        if l > self.max_layer || self.n == 0 {
            return &[];
        }
        &self.data[self.offsets[l]..self.offsets[l + 1]]
    }
}
