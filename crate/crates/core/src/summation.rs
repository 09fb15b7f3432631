//! Compensated (Neumaier) accumulators.
//!
//! Quartic sums over a few hundred modes lose several digits to rounding when
//! accumulated naively; these accumulators keep a running correction term.

use num_complex::Complex64;

/// Truncation size above which the observables switch to compensated sums.
pub const COMPENSATED_THRESHOLD: usize = 256;

#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    correction: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.correction += (self.sum - t) + x;
        } else {
            self.correction += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.correction
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Complex accumulator: independent compensation of real and imaginary parts.
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexNeumaierSum {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl ComplexNeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Sums `xs`, compensated when `n` exceeds [`COMPENSATED_THRESHOLD`].
pub fn sum_for_size<I: IntoIterator<Item = f64>>(n: usize, xs: I) -> f64 {
    if n > COMPENSATED_THRESHOLD {
        xs.into_iter().collect::<NeumaierSum>().value()
    } else {
        xs.into_iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_small_terms_lost_by_naive_summation() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        let naive: f64 = xs.iter().sum();
        let comp: NeumaierSum = xs.iter().copied().collect();
        assert_eq!(naive, 0.0);
        assert_eq!(comp.value(), 2.0);
    }

    #[test]
    fn complex_parts_are_independent() {
        let mut acc = ComplexNeumaierSum::new();
        acc.add(Complex64::new(1.0, 1e100));
        acc.add(Complex64::new(1e100, 1.0));
        acc.add(Complex64::new(-1e100, -1e100));
        assert_eq!(acc.value(), Complex64::new(1.0, 1.0));
    }
}
