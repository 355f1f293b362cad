//! Truncated binomial probability mass functions.
//!
//! Probabilities are evaluated in log space (populations of several hundred
//! users underflow naive products) and terms below [`TAIL_CUTOFF`] are
//! dropped. The dropped mass is kept so callers can bound the error.

/// Terms smaller than this are discarded.
pub const TAIL_CUTOFF: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct BinomialPmf {
    /// Smallest retained outcome.
    pub lo: usize,
    /// `P(K = lo + i)` for the retained window.
    pub probs: Vec<f64>,
    /// Probability mass of the discarded tails.
    pub dropped: f64,
}

impl BinomialPmf {
    /// `Binomial(n, p)` truncated at [`TAIL_CUTOFF`].
    pub fn new(n: usize, p: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&p), "probability {p} out of range");
        if p <= 0.0 {
            return Self::point(0);
        }
        if p >= 1.0 {
            return Self::point(n);
        }
        let ln_p = p.ln();
        let ln_q = (-p).ln_1p();
        let ln_fact = ln_factorials(n);
        let full: Vec<f64> = (0..=n)
            .map(|k| {
                let ln_c = ln_fact[n] - ln_fact[k] - ln_fact[n - k];
                (ln_c + k as f64 * ln_p + (n - k) as f64 * ln_q).exp()
            })
            .collect();
        let lo = full.iter().position(|&v| v >= TAIL_CUTOFF).unwrap_or(0);
        let hi = full.iter().rposition(|&v| v >= TAIL_CUTOFF).unwrap_or(n);
        let dropped = full[..lo].iter().sum::<f64>() + full[hi + 1..].iter().sum::<f64>();
        Self {
            lo,
            probs: full[lo..=hi].to_vec(),
            dropped,
        }
    }

    fn point(k: usize) -> Self {
        Self {
            lo: k,
            probs: vec![1.0],
            dropped: 0.0,
        }
    }

    /// `P(K = k)`, zero outside the retained window.
    pub fn pmf(&self, k: usize) -> f64 {
        k.checked_sub(self.lo)
            .and_then(|i| self.probs.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().enumerate().map(|(i, &p)| (self.lo + i, p))
    }

    pub fn hi(&self) -> usize {
        self.lo + self.probs.len() - 1
    }
}

/// `ln k!` for `k = 0..=n`.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Exact binomial coefficient as `f64` (small arguments, used by tests and oracles).
pub fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_probabilities() {
        let b = BinomialPmf::new(7, 0.0);
        assert_eq!((b.lo, b.probs.clone()), (0, vec![1.0]));
        let b = BinomialPmf::new(7, 1.0);
        assert_eq!((b.lo, b.probs.clone()), (7, vec![1.0]));
        let b = BinomialPmf::new(0, 0.3);
        assert_eq!(b.pmf(0), 1.0);
    }

    #[test]
    fn matches_direct_formula() {
        let b = BinomialPmf::new(10, 0.3);
        for k in 0..=10 {
            let exact = choose(10, k) * 0.3f64.powi(k as i32) * 0.7f64.powi(10 - k as i32);
            assert!((b.pmf(k) - exact).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn large_population_does_not_underflow() {
        let b = BinomialPmf::new(500, 0.78);
        let mean: f64 = b.iter().map(|(k, p)| k as f64 * p).sum();
        assert!((mean - 390.0).abs() < 1e-9);
        assert!(b.dropped < 1e-12);
    }

    proptest! {
        #[test]
        fn retained_mass_plus_dropped_is_one(n in 0usize..600, p in 0.0f64..=1.0) {
            let b = BinomialPmf::new(n, p);
            let kept: f64 = b.probs.iter().sum();
            prop_assert!((kept + b.dropped - 1.0).abs() < 1e-9);
            prop_assert!(b.dropped < 1e-12);
        }
    }
}
