//! Semi-parametric burnt-area-proportion model: point mass at zero, empirical
//! bulk, and a generalised Pareto tail above an empirical quantile threshold.

use crate::ecdf::Ecdf;
use crate::error::{Error, Result};
use crate::num::{from_usize, lit, Real};
use crate::optim::{nelder_mead, SimplexOptions};

const XI_ZERO: f64 = 1e-8;
const XI_MIN: f64 = -1.0;
const XI_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdParams<T> {
    pub sigma: T,
    pub xi: T,
    pub threshold: T,
}

impl<T: Real> GpdParams<T> {
    /// Finite upper end of the support when `ξ < 0`.
    pub fn upper_endpoint(&self) -> Option<T> {
        (self.xi < -lit::<T>(XI_ZERO)).then(|| self.threshold - self.sigma / self.xi)
    }

    pub fn cdf(&self, x: T) -> Result<T> {
        if x < self.threshold {
            return Err(Error::InvalidInput(format!(
                "GPD evaluated below its threshold ({x} < {})",
                self.threshold
            )));
        }
        Ok(self.cdf_unchecked(x))
    }

    fn cdf_unchecked(&self, x: T) -> T {
        let y = (x - self.threshold) / self.sigma;
        if self.xi.abs() < lit(XI_ZERO) {
            return T::one() - (-y).exp();
        }
        let base = T::one() + self.xi * y;
        if base <= T::zero() {
            // Beyond the finite endpoint (ξ < 0).
            return T::one();
        }
        (T::one() - base.powf(-T::one() / self.xi))
            .max(T::zero())
            .min(T::one())
    }

    /// GPD log-likelihood of values above the threshold.
    pub fn log_likelihood(&self, exceedances: &[T]) -> T {
        -gpd_nll(
            exceedances.iter().map(|&x| x - self.threshold),
            self.sigma,
            self.xi,
        )
    }
}

pub fn gpd_cdf<T: Real>(params: &GpdParams<T>, x: T) -> Result<T> {
    params.cdf(x)
}

fn gpd_nll<T: Real, I: Iterator<Item = T>>(excesses: I, sigma: T, xi: T) -> T {
    if !(sigma > T::zero()) {
        return T::infinity();
    }
    let ln_sigma = sigma.ln();
    let mut acc = T::zero();
    if xi.abs() < lit(XI_ZERO) {
        for y in excesses {
            acc = acc + ln_sigma + y / sigma;
        }
        return acc;
    }
    let coef = T::one() + T::one() / xi;
    for y in excesses {
        let t = T::one() + xi * y / sigma;
        if t <= T::zero() {
            return T::infinity();
        }
        acc = acc + ln_sigma + coef * t.ln();
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpdFit<T> {
    pub params: GpdParams<T>,
    pub log_likelihood: T,
    pub start_log_likelihood: T,
    pub converged: bool,
    pub iterations: usize,
}

/// Probability-weighted-moment estimates `(σ, ξ)` from positive excesses.
pub fn pwm_start<T: Real>(excesses: &[T]) -> (T, T) {
    let mut y = excesses.to_vec();
    y.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = from_usize::<T>(y.len());
    let a0 = y.iter().fold(T::zero(), |a, &b| a + b) / n;
    let a1 = y.iter().enumerate().fold(T::zero(), |acc, (i, &v)| {
        let p = (from_usize::<T>(i + 1) - lit(0.35)) / n;
        acc + (T::one() - p) * v
    }) / n;
    let denom = a0 - lit::<T>(2.0) * a1;
    if !(denom > T::zero()) {
        return (a0.max(lit(1e-12)), T::zero());
    }
    let xi = lit::<T>(2.0) - a0 / denom;
    let sigma = lit::<T>(2.0) * a0 * a1 / denom;
    (sigma, xi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFitOptions {
    pub min_exceed: usize,
    pub max_iter: usize,
    pub ftol: f64,
}

impl Default for GpdFitOptions {
    fn default() -> Self {
        GpdFitOptions {
            min_exceed: 10,
            max_iter: 500,
            ftol: 1e-10,
        }
    }
}

/// Maximum-likelihood GPD fit to values strictly above `threshold`, with
/// `ξ ∈ (−1, 5]`, started from probability-weighted moments.
pub fn fit_gpd<T: Real>(
    exceedances: &[T],
    threshold: T,
    opts: &GpdFitOptions,
) -> Result<GpdFit<T>> {
    if exceedances.len() < opts.min_exceed.max(2) {
        return Err(Error::TooFewExceedances {
            found: exceedances.len(),
            required: opts.min_exceed.max(2),
        });
    }
    let excesses: Vec<T> = exceedances.iter().map(|&x| x - threshold).collect();
    if excesses.iter().any(|&y| !(y > T::zero()) || !y.is_finite()) {
        return Err(Error::InvalidInput(
            "exceedances must lie strictly above the threshold".into(),
        ));
    }
    let first = excesses[0];
    if excesses.iter().all(|&y| y == first) {
        return Err(Error::Degenerate("all exceedances are equal".into()));
    }
    let ymax = excesses.iter().copied().fold(T::zero(), T::max);
    let scale = excesses.iter().fold(T::zero(), |a, &b| a + b) / from_usize(excesses.len());

    let (s0, x0) = pwm_start(&excesses);
    let xi0 = x0.max(lit(-0.9)).min(lit(4.9));
    let mut sigma0 = if s0 > T::zero() && s0.is_finite() {
        s0
    } else {
        scale
    };
    if xi0 < T::zero() {
        // Keep every excess inside the support.
        sigma0 = sigma0.max(-xi0 * ymax * lit(1.01));
    }

    // Optimise over (ln(σ/scale), ξ) so step sizes are unit-free.
    let nll = |p: &[T]| -> T {
        let xi = p[1];
        if !(xi > lit(XI_MIN) && xi <= lit(XI_MAX)) {
            return T::infinity();
        }
        gpd_nll(excesses.iter().copied(), scale * p[0].exp(), xi)
    };
    let start = [(sigma0 / scale).ln(), xi0];
    let start_nll = nll(&start);
    let m = nelder_mead(
        nll,
        &start,
        &SimplexOptions {
            max_iter: opts.max_iter,
            ftol: lit(opts.ftol),
            step: lit(0.2),
            restarts: 2,
        },
    );
    Ok(GpdFit {
        params: GpdParams {
            sigma: scale * m.x[0].exp(),
            xi: m.x[1],
            threshold,
        },
        log_likelihood: -m.value,
        start_log_likelihood: -start_nll,
        converged: m.converged && m.value.is_finite(),
        iterations: m.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureKind {
    Mixture,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureFallback {
    /// Zero mass at or above the non-exceedance level.
    ZeroMassTooHigh,
    TooFewExceedances,
    GpdFailed,
    EmptySample,
}

/// Fitted distribution of a burnt-area proportion.
#[derive(Debug, Clone, PartialEq)]
pub struct BaMixture<T> {
    pub kind: MixtureKind,
    pub z: T,
    pub u: T,
    pub lambda: T,
    /// ECDF of the strictly positive values (`F*`).
    pub bulk: Ecdf<T>,
    /// ECDF of the whole sample, used by the empirical fallback.
    pub full: Ecdf<T>,
    pub gpd: Option<GpdParams<T>>,
    pub exceedances: usize,
    pub converged: bool,
    pub fallback: Option<MixtureFallback>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MixtureOptions {
    pub gpd: GpdFitOptions,
}

/// Fit the zero/bulk/tail mixture with non-exceedance level `k2 = 1 − λ`.
///
/// The threshold is the left-continuous empirical `k2`-quantile; values equal
/// to it belong to the bulk. The empirical CDF is used when the zero mass
/// reaches `k2`, the tail is too thin, or the GPD fit fails.
pub fn fit_mixture<T: Real>(sample: &[T], k2: T, opts: &MixtureOptions) -> BaMixture<T> {
    let full = Ecdf::new(sample);
    let n = full.len();
    let lambda = T::one() - k2;
    let empty = BaMixture {
        kind: MixtureKind::Empirical,
        z: T::zero(),
        u: T::zero(),
        lambda,
        bulk: Ecdf::new(&[]),
        full: full.clone(),
        gpd: None,
        exceedances: 0,
        converged: false,
        fallback: Some(MixtureFallback::EmptySample),
    };
    if n == 0 {
        return empty;
    }
    let zeros = full.count_le(T::zero());
    let z = from_usize::<T>(zeros) / from_usize(n);
    let u = full.quantile(k2).unwrap_or(T::zero());
    let positives: Vec<T> = full.values()[zeros..].to_vec();
    let exceed: Vec<T> = full.values()[full.count_le(u)..].to_vec();
    let mut model = BaMixture {
        z,
        u,
        bulk: Ecdf::new(&positives),
        exceedances: exceed.len(),
        fallback: None,
        ..empty
    };
    if !(z < T::one() - lambda) {
        model.fallback = Some(MixtureFallback::ZeroMassTooHigh);
        return model;
    }
    if exceed.len() < opts.gpd.min_exceed || !(model.bulk.cdf(u) > T::zero()) {
        model.fallback = Some(MixtureFallback::TooFewExceedances);
        return model;
    }
    match fit_gpd(&exceed, u, &opts.gpd) {
        Ok(fit) if fit.log_likelihood.is_finite() => {
            model.kind = MixtureKind::Mixture;
            model.gpd = Some(fit.params);
            model.converged = fit.converged;
        }
        _ => model.fallback = Some(MixtureFallback::GpdFailed),
    }
    model
}

impl<T: Real> BaMixture<T> {
    pub fn cdf(&self, x: T) -> T {
        if x < T::zero() {
            return T::zero();
        }
        match (self.kind, self.gpd) {
            (MixtureKind::Mixture, Some(gpd)) => {
                if x == T::zero() {
                    self.z
                } else if x <= self.u {
                    let scale = (T::one() - self.lambda - self.z) / self.bulk.cdf(self.u);
                    scale * self.bulk.cdf(x) + self.z
                } else {
                    T::one() - self.lambda * (T::one() - gpd.cdf_unchecked(x))
                }
            }
            _ => self.full.cdf(x),
        }
    }

    /// CDF for a variable bounded above by `bound`: 1 at and beyond it.
    pub fn cdf_saturating(&self, x: T, bound: T) -> T {
        if x >= bound {
            T::one()
        } else {
            self.cdf(x)
        }
    }
}

pub fn mixture_cdf<T: Real>(model: &BaMixture<T>, x: T) -> T {
    model.cdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gpd(sigma: f64, xi: f64, u: f64) -> GpdParams<f64> {
        GpdParams {
            sigma,
            xi,
            threshold: u,
        }
    }

    #[test]
    fn gpd_cdf_examples() {
        assert_eq!(gpd(1.0, 0.3, 2.0).cdf(2.0).unwrap(), 0.0);
        assert!((gpd(1.0, 0.0, 2.0).cdf(2.0 + 2f64.ln()).unwrap() - 0.5).abs() < 1e-12);
        assert!((gpd(1.0, 1e-10, 0.0).cdf(2f64.ln()).unwrap() - 0.5).abs() < 1e-9);
        let bounded = gpd(1.0, -0.5, 1.0);
        assert_eq!(bounded.upper_endpoint(), Some(3.0));
        assert_eq!(bounded.cdf(3.0).unwrap(), 1.0);
        assert_eq!(bounded.cdf(10.0).unwrap(), 1.0);
        assert!(gpd(1.0, 0.1, 1.0).cdf(0.5).is_err());
    }

    #[test]
    fn gpd_fit_errors() {
        let few = [1.5, 2.0, 3.0];
        assert!(matches!(
            fit_gpd(&few, 1.0, &GpdFitOptions::default()),
            Err(Error::TooFewExceedances { .. })
        ));
        let opts = GpdFitOptions {
            min_exceed: 2,
            ..Default::default()
        };
        assert!(matches!(
            fit_gpd(&[2.0, 2.0], 1.0, &opts),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn gpd_fit_improves_on_pwm_start() {
        let xs: Vec<f64> = (1..=200)
            .map(|i| {
                let p = i as f64 / 201.0;
                0.5 * ((1.0 - p).powf(-0.3) - 1.0) / 0.3
            })
            .collect();
        let fit = fit_gpd(&xs, 0.0, &GpdFitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.log_likelihood >= fit.start_log_likelihood);
        assert!((fit.params.xi - 0.3).abs() < 0.1, "{:?}", fit.params);
        assert!((fit.params.sigma - 0.5).abs() < 0.1, "{:?}", fit.params);
    }

    #[test]
    fn pwm_recovers_exponential_quantiles() {
        let ys: Vec<f64> = (1..=2000)
            .map(|i| -(1.0 - i as f64 / 2001.0).ln() * 2.0)
            .collect();
        let (s, x) = pwm_start(&ys);
        assert!((s - 2.0).abs() < 0.1 && x.abs() < 0.05, "{s} {x}");
    }

    #[test]
    fn mostly_zero_sample_falls_back() {
        let mut s = vec![0.0; 80];
        s.extend((1..=20).map(|i| i as f64 * 0.01));
        let m = fit_mixture(&s, 0.5, &MixtureOptions::default());
        assert_eq!(m.kind, MixtureKind::Empirical);
        assert_eq!(m.fallback, Some(MixtureFallback::ZeroMassTooHigh));
        assert!((m.z - 0.8).abs() < 1e-12);
        assert!((m.cdf(0.0) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn no_zero_sample_uses_mixture() {
        let s: Vec<f64> = (1..=1000)
            .map(|i| (i as f64 / 1001.0).powi(2) * 0.5)
            .collect();
        let m = fit_mixture(&s, 0.9, &MixtureOptions::default());
        assert_eq!(m.kind, MixtureKind::Mixture);
        assert_eq!(m.u, s[899]);
        assert_eq!(m.exceedances, 100);
        assert_eq!(m.z, 0.0);
    }

    #[test]
    fn all_zero_sample() {
        let m = fit_mixture(&[0.0; 30], 0.5, &MixtureOptions::default());
        assert_eq!(m.kind, MixtureKind::Empirical);
        assert_eq!(m.cdf(0.0), 1.0);
        assert_eq!(m.cdf(0.3), 1.0);
    }

    #[test]
    fn branches_meet_at_threshold() {
        let mut s = vec![0.0; 20];
        s.extend((1..=80).map(|i| (i as f64 * 0.37).sin().abs() * 0.1 + 0.001 * i as f64));
        let m = fit_mixture(&s, 0.6, &MixtureOptions::default());
        assert_eq!(m.kind, MixtureKind::Mixture);
        assert!((m.cdf(0.0) - 0.2).abs() < 1e-12);
        assert!((m.cdf(m.u) - 0.6).abs() < 1e-9);
        let above = m.cdf(m.u + 1e-12);
        assert!((above - 0.6).abs() < 1e-9);
        assert_eq!(m.cdf_saturating(1.0, 1.0), 1.0);
    }

    proptest! {
        #[test]
        fn mixture_monotone_and_continuous(
            zeros in 0usize..40,
            sigma in 0.01..2.0f64,
            xi in -0.4..0.8f64,
            k2 in 0.05..0.95f64,
            seed in 0u64..1000,
        ) {
            // deterministic quasi-random positive sample
            let mut s = vec![0.0; zeros];
            s.extend((1..=120u64).map(|i| {
                let p = ((i * 7919 + seed * 104729) % 1000) as f64 / 1000.0 + 0.0005;
                if xi.abs() < 1e-8 { -sigma * (1.0 - p).ln() } else { sigma * ((1.0 - p).powf(-xi) - 1.0) / xi }
            }));
            let m = fit_mixture(&s, k2, &MixtureOptions::default());
            let grid: Vec<f64> = (0..400).map(|k| k as f64 * 0.02).collect();
            let mut prev = 0.0;
            for &x in &grid {
                let c = m.cdf(x);
                prop_assert!((0.0..=1.0).contains(&c));
                prop_assert!(c >= prev - 1e-15);
                prev = c;
            }
            if m.kind == MixtureKind::Mixture {
                let g = m.gpd.unwrap();
                prop_assert!((m.cdf(m.u) - (1.0 - m.lambda)).abs() <= 1e-9);
                prop_assert!((m.cdf(m.u + 1e-13) - m.cdf(m.u)).abs() <= 1e-9);
                if let Some(end) = g.upper_endpoint() {
                    prop_assert_eq!(m.cdf(end), 1.0);
                }
                // bulk agrees with the within-sample ECDF below u up to 1/n
                let n = s.len() as f64;
                for &x in s.iter().filter(|&&x| x <= m.u) {
                    prop_assert!((m.cdf(x) - m.full.cdf(x)).abs() <= 1.0 / n + 1e-12);
                }
            }
        }
    }
}
