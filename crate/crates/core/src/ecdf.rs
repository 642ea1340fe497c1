use crate::num::{from_usize, Real};

/// Right-continuous empirical distribution function `x ↦ #{xᵢ ≤ x} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf<T> {
    sorted: Vec<T>,
}

impl<T: Real> Ecdf<T> {
    /// Non-finite values are dropped.
    pub fn new(values: &[T]) -> Self {
        let mut sorted: Vec<T> = values.iter().copied().filter(|v| v.is_finite()).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        Ecdf { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.sorted
    }

    pub fn count_le(&self, x: T) -> usize {
        self.sorted.partition_point(|&v| v <= x)
    }

    /// Empty ECDFs evaluate to 0 everywhere.
    pub fn cdf(&self, x: T) -> T {
        if self.sorted.is_empty() {
            return T::zero();
        }
        from_usize::<T>(self.count_le(x)) / from_usize(self.sorted.len())
    }

    /// Left-continuous inverse: the order statistic of rank `⌈p·n⌉` (rank 1 for `p = 0`).
    pub fn quantile(&self, p: T) -> Option<T> {
        let n = self.sorted.len();
        if n == 0 {
            return None;
        }
        let rank = (p * from_usize(n))
            .ceil()
            .to_usize()
            .unwrap_or(0)
            .clamp(1, n);
        Some(self.sorted[rank - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_function_and_quantile() {
        let e = Ecdf::new(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(e.cdf(0.5), 0.0);
        assert_eq!(e.cdf(2.0), 0.75);
        assert_eq!(e.cdf(10.0), 1.0);
        assert_eq!(e.quantile(0.5), Some(2.0));
        assert_eq!(e.quantile(0.76), Some(3.0));
        assert_eq!(e.quantile(0.0), Some(1.0));
    }

    #[test]
    fn quantile_inverts_cdf() {
        let xs: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64).collect();
        let e = Ecdf::new(&xs);
        for k in 1..20 {
            let p = k as f64 / 20.0;
            let q = e.quantile(p).unwrap();
            assert!(e.cdf(q) >= p);
            let below = e.values().iter().copied().filter(|&v| v < q).count() as f64 / 37.0;
            assert!(below < p);
        }
    }
}
