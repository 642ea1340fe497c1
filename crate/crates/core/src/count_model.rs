//! Zero-inflated negative binomial counts: pmf, CDF and maximum-likelihood fit.
//!
//! The negative binomial part uses the mean/size parameterisation
//! `g(j) = Γ(j+r)/(Γ(r) j!) · (r/(r+μ))^r · (μ/(r+μ))^j`, and the zero class
//! receives the extra mass `π`.

use crate::ecdf::Ecdf;
use crate::error::{Error, Result};
use crate::num::{from_usize, lit, ln_gamma, to_f64, Real};
use crate::optim::{nelder_mead, SimplexOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZinbParams<T> {
    pub pi: T,
    pub mu: T,
    pub r: T,
}

impl<T: Real> ZinbParams<T> {
    pub fn new(pi: T, mu: T, r: T) -> Result<Self> {
        let p = ZinbParams { pi, mu, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.pi >= T::zero()
            && self.pi <= T::one()
            && self.mu > T::zero()
            && self.r > T::zero()
            && self.mu.is_finite()
            && self.r.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "ZINB requires pi in [0,1], mu > 0, r > 0 (got {}, {}, {})",
                self.pi, self.mu, self.r
            )))
        }
    }

    pub fn pmf(&self, j: u64) -> T {
        let nb = ln_nb_pmf(j, self.mu, self.r).exp();
        if j == 0 {
            self.pi + (T::one() - self.pi) * nb
        } else {
            (T::one() - self.pi) * nb
        }
    }

    pub fn cdf(&self, u: T) -> T {
        self.cdf_row(&[u])[0]
    }

    /// CDF at every threshold; thresholds need not be sorted.
    pub fn cdf_row(&self, thresholds: &[T]) -> Vec<T> {
        let mut order: Vec<usize> = (0..thresholds.len()).collect();
        order.sort_by(|&a, &b| {
            thresholds[a]
                .partial_cmp(&thresholds[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut out = vec![T::zero(); thresholds.len()];
        let mut acc = T::zero();
        let mut next_j: u64 = 0;
        let mut exhausted = false;
        let tiny = lit::<T>(1e-20);
        for &k in &order {
            let u = thresholds[k];
            if u < T::zero() || u.is_nan() {
                out[k] = T::zero();
                continue;
            }
            let last = if u.is_infinite() {
                u64::MAX
            } else {
                u.floor().to_u64().unwrap_or(u64::MAX)
            };
            while !exhausted && next_j <= last {
                let p = self.pmf(next_j);
                acc = acc + p;
                // Past the mean the terms decay geometrically; stop once negligible.
                if from_u64::<T>(next_j) > self.mu && p < tiny {
                    exhausted = true;
                }
                next_j += 1;
            }
            out[k] = acc.min(T::one());
        }
        out
    }

    pub fn log_likelihood(&self, sample: &[T]) -> T {
        let hist = CountHistogram::new(sample);
        hist.log_likelihood(self.pi, self.mu, self.r)
    }
}

fn from_u64<T: Real>(j: u64) -> T {
    T::from_u64(j).unwrap_or_else(T::infinity)
}

/// Log of the negative binomial pmf with mean `mu` and size `r`.
///
/// Evaluated in `f64` in a form that stays accurate for very large `r`.
pub fn ln_nb_pmf<T: Real>(j: u64, mu: T, r: T) -> T {
    let (mu, r) = (to_f64(mu), to_f64(r));
    let head = -r * (mu / r).ln_1p();
    if j == 0 {
        return lit(head);
    }
    let jf = j as f64;
    let ratio = if j <= 64 {
        (0..j).map(|k| (r + k as f64).ln()).sum::<f64>()
    } else {
        ln_gamma(jf + r) - ln_gamma(r)
    };
    lit(ratio - ln_gamma(jf + 1.0) + head + jf * (mu.ln() - (r + mu).ln()))
}

/// Distinct count values and their multiplicities.
#[derive(Debug, Clone)]
struct CountHistogram<T> {
    values: Vec<(u64, T)>,
    zeros: T,
    positives: T,
}

impl<T: Real> CountHistogram<T> {
    fn new(sample: &[T]) -> Self {
        let mut ints: Vec<u64> = sample
            .iter()
            .map(|v| v.round().to_u64().unwrap_or(0))
            .collect();
        ints.sort_unstable();
        let mut values: Vec<(u64, T)> = Vec::new();
        for v in ints {
            match values.last_mut() {
                Some((last, c)) if *last == v => *c = *c + T::one(),
                _ => values.push((v, T::one())),
            }
        }
        let zeros = values
            .iter()
            .find(|(v, _)| *v == 0)
            .map_or(T::zero(), |&(_, c)| c);
        let positives = from_usize::<T>(sample.len()) - zeros;
        CountHistogram {
            values,
            zeros,
            positives,
        }
    }

    fn log_likelihood(&self, pi: T, mu: T, r: T) -> T {
        let one = T::one();
        let mut ll = T::zero();
        if self.zeros > T::zero() {
            let g0 = ln_nb_pmf(0, mu, r);
            let a = pi.ln();
            let b = (one - pi).ln() + g0;
            let m = a.max(b);
            let lse = if m == T::neg_infinity() {
                m
            } else {
                m + ((a - m).exp() + (b - m).exp()).ln()
            };
            ll = ll + self.zeros * lse;
        }
        if self.positives > T::zero() {
            ll = ll + self.positives * (one - pi).ln();
            for &(v, c) in self.values.iter().filter(|(v, _)| *v > 0) {
                ll = ll + c * ln_nb_pmf(v, mu, r);
            }
        }
        ll
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackReason {
    AllZero,
    TooFew,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CountModelKind<T> {
    Zinb(ZinbParams<T>),
    Empirical(Ecdf<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountModel<T> {
    pub kind: CountModelKind<T>,
    pub sample_size: usize,
    /// Log-likelihood at the fitted parameters (ZINB only).
    pub log_likelihood: Option<T>,
    pub start_log_likelihood: Option<T>,
    pub converged: bool,
    pub fallback: Option<FallbackReason>,
}

impl<T: Real> CountModel<T> {
    pub fn empirical(sample: &[T], reason: FallbackReason) -> Self {
        CountModel {
            kind: CountModelKind::Empirical(Ecdf::new(sample)),
            sample_size: sample.len(),
            log_likelihood: None,
            start_log_likelihood: None,
            converged: false,
            fallback: Some(reason),
        }
    }

    pub fn cdf(&self, u: T) -> T {
        match &self.kind {
            CountModelKind::Zinb(p) => p.cdf(u),
            CountModelKind::Empirical(e) => e.cdf(u),
        }
    }

    pub fn cdf_row(&self, thresholds: &[T]) -> Vec<T> {
        match &self.kind {
            CountModelKind::Zinb(p) => p.cdf_row(thresholds),
            CountModelKind::Empirical(e) => thresholds.iter().map(|&u| e.cdf(u)).collect(),
        }
    }

    pub fn params(&self) -> Option<ZinbParams<T>> {
        match self.kind {
            CountModelKind::Zinb(p) => Some(p),
            CountModelKind::Empirical(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountFitOptions {
    /// Fewer non-missing values than this use the empirical CDF.
    pub min_fit: usize,
    pub max_iter: usize,
    pub ftol: f64,
}

impl Default for CountFitOptions {
    fn default() -> Self {
        CountFitOptions {
            min_fit: 10,
            max_iter: 500,
            ftol: 1e-8,
        }
    }
}

const LOGIT_PI_BOUND: f64 = 30.0;
const LOG_MU_BOUND: f64 = 20.0;
const LOG_R_RANGE: (f64, f64) = (-9.21, 13.82); // r in [1e-4, 1e6]

fn logistic<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Moment-based starting point `(π₀, μ₀, r₀)`.
pub fn moment_start<T: Real>(sample: &[T]) -> ZinbParams<T> {
    let n = from_usize::<T>(sample.len());
    let mean = sample.iter().fold(T::zero(), |a, &b| a + b) / n;
    let var = sample
        .iter()
        .fold(T::zero(), |a, &b| a + (b - mean) * (b - mean))
        / n;
    let positives: Vec<T> = sample.iter().copied().filter(|&v| v > T::zero()).collect();
    let mu0 = if positives.is_empty() {
        T::one()
    } else {
        positives.iter().fold(T::zero(), |a, &b| a + b) / from_usize(positives.len())
    };
    let r0 = if var > mean {
        mean * mean / (var - mean)
    } else {
        lit(1e3)
    };
    let r0 = r0.max(lit(1e-3)).min(lit(1e3));
    let g0 = ln_nb_pmf(0, mu0, r0).exp();
    let zero_frac = from_usize::<T>(sample.len() - positives.len()) / n;
    let pi0 = if g0 < T::one() {
        (zero_frac - g0) / (T::one() - g0)
    } else {
        zero_frac
    };
    ZinbParams {
        pi: pi0.max(lit(0.01)).min(lit(0.99)),
        mu: mu0,
        r: r0,
    }
}

/// Maximum-likelihood ZINB fit over `(logit π, ln μ, ln r)`, falling back to
/// the empirical CDF for all-zero or small samples and for failed optimisation.
pub fn fit_zinb<T: Real>(sample: &[T], opts: &CountFitOptions) -> CountModel<T> {
    if sample.len() < opts.min_fit.max(1) {
        return CountModel::empirical(sample, FallbackReason::TooFew);
    }
    if sample.iter().all(|&v| v == T::zero()) {
        return CountModel::empirical(sample, FallbackReason::AllZero);
    }
    let hist = CountHistogram::new(sample);
    let start = moment_start(sample);
    let x0 = [
        (start.pi / (T::one() - start.pi)).ln(),
        start.mu.ln(),
        start.r.ln(),
    ];
    // Coordinates are projected onto the box, so the objective is flat
    // beyond a bound (e.g. r → ∞ for underdispersed samples).
    let project = |x: &[T]| -> [T; 3] {
        [
            x[0].max(lit(-LOGIT_PI_BOUND)).min(lit(LOGIT_PI_BOUND)),
            x[1].max(lit(-LOG_MU_BOUND)).min(lit(LOG_MU_BOUND)),
            x[2].max(lit(LOG_R_RANGE.0)).min(lit(LOG_R_RANGE.1)),
        ]
    };
    let nll = |x: &[T]| -> T {
        let p = project(x);
        -hist.log_likelihood(logistic(p[0]), p[1].exp(), p[2].exp())
    };
    let start_ll = -nll(&x0);
    let sopts = SimplexOptions {
        max_iter: opts.max_iter,
        ftol: lit(opts.ftol),
        step: lit(0.5),
        restarts: 2,
    };
    let m = nelder_mead(nll, &x0, &sopts);
    if !m.converged || !m.value.is_finite() {
        let mut model = CountModel::empirical(sample, FallbackReason::NotConverged);
        model.start_log_likelihood = Some(start_ll);
        return model;
    }
    let x = project(&m.x);
    let params = ZinbParams {
        pi: logistic(x[0]),
        mu: x[1].exp(),
        r: x[2].exp(),
    };
    CountModel {
        kind: CountModelKind::Zinb(params),
        sample_size: sample.len(),
        log_likelihood: Some(-m.value),
        start_log_likelihood: Some(start_ll),
        converged: true,
        fallback: None,
    }
}
