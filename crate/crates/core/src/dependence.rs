//! Rank-based dependence diagnostics between counts and burnt area.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Dataset, Variable};
use crate::error::{Error, Result};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(())
}

fn tie_pairs<K: PartialEq>(sorted: impl Iterator<Item = K>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<K> = None;
    for k in sorted {
        if prev.as_ref() == Some(&k) {
            run += 1;
        } else {
            total += run * run.saturating_sub(1) / 2;
            run = 1;
        }
        prev = Some(k);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Merge sort that returns the number of strict inversions.
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (a, b) = v.split_at_mut(mid);
        let (ba, bb) = buf.split_at_mut(mid);
        sort_count_swaps(a, ba) + sort_count_swaps(b, bb)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b in O(n log n).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "kendall tau needs at least two pairs".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "kendall tau needs finite values".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let n1 = tie_pairs(idx.iter().map(|&i| x[i].to_bits()));
    let n3 = tie_pairs(idx.iter().map(|&i| (x[i].to_bits(), y[i].to_bits())));
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let n2 = tie_pairs(ys.iter().map(|v| v.to_bits()));
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::Undefined("kendall tau of constant data".into()));
    }
    let s = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Ok((s / denom).clamp(-1.0, 1.0))
}

/// Pseudo-uniform margins `rank / (n + 1)` with average ranks for ties.
pub fn pseudo_uniform(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; n];
    let mut s = 0;
    while s < n {
        let mut e = s + 1;
        while e < n && x[idx[e]] == x[idx[s]] {
            e += 1;
        }
        let rank = (s + 1 + e) as f64 / 2.0;
        for &i in &idx[s..e] {
            out[i] = rank / (n as f64 + 1.0);
        }
        s = e;
    }
    out
}

fn exceedance_counts(x: &[f64], y: &[f64], u: f64) -> Result<(usize, usize, usize, usize)> {
    check_pair(x, y)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidInput(format!("level {u} outside (0, 1)")));
    }
    let fx = pseudo_uniform(x);
    let fy = pseudo_uniform(y);
    let ex = fx.iter().filter(|&&v| v > u).count();
    let ey = fy.iter().filter(|&&v| v > u).count();
    let joint = fx.iter().zip(&fy).filter(|(&a, &b)| a > u && b > u).count();
    Ok((x.len(), ex, ey, joint))
}

/// Empirical `P(F(Y) > u | F(X) > u)`.
pub fn chi_u(x: &[f64], y: &[f64], u: f64) -> Result<f64> {
    let (_, ex, _, joint) = exceedance_counts(x, y, u)?;
    if ex == 0 {
        return Err(Error::Undefined(format!("no exceedances of level {u}")));
    }
    Ok(joint as f64 / ex as f64)
}

/// Plug-in `2 log P(F(Y) > u) / log P(F(Y) > u, F(X) > u) - 1`.
pub fn chibar_u(x: &[f64], y: &[f64], u: f64) -> Result<f64> {
    let (n, _, ey, joint) = exceedance_counts(x, y, u)?;
    if joint == 0 {
        return Err(Error::Undefined(format!(
            "no joint exceedances of level {u}"
        )));
    }
    let py = ey as f64 / n as f64;
    let pj = joint as f64 / n as f64;
    if pj >= 1.0 {
        return Err(Error::Undefined(
            "joint exceedance probability is one".into(),
        ));
    }
    Ok(2.0 * py.ln() / pj.ln() - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

fn replicate_seed(seed: u64, b: usize) -> u64 {
    seed ^ (b as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval from `replicates` resamples of index pairs.
///
/// A resample on which the statistic is undefined is redrawn; at most
/// `replicates` redraws are allowed in total.
pub fn bootstrap_ci<F>(
    statistic: F,
    x: &[f64],
    y: &[f64],
    level: f64,
    replicates: usize,
    seed: u64,
) -> Result<Interval>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    check_pair(x, y)?;
    if replicates < 100 {
        return Err(Error::InvalidInput(
            "bootstrap needs at least 100 replicates".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("bootstrap of an empty sample".into()));
    }
    let n = x.len();
    let draws: Vec<(Option<f64>, usize)> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, b));
            let mut xs = vec![0.0; n];
            let mut ys = vec![0.0; n];
            let mut failed = 0;
            while failed <= replicates {
                for k in 0..n {
                    let j = rng.random_range(0..n);
                    xs[k] = x[j];
                    ys[k] = y[j];
                }
                match statistic(&xs, &ys) {
                    Ok(v) => return (Some(v), failed),
                    Err(_) => failed += 1,
                }
            }
            (None, failed)
        })
        .collect();
    let redraws: usize = draws.iter().map(|d| d.1).sum();
    if redraws > replicates || draws.iter().any(|d| d.0.is_none()) {
        return Err(Error::Undefined(format!(
            "statistic undefined on {redraws} resamples"
        )));
    }
    if redraws > 0 {
        log::warn!("bootstrap redrew {redraws} resamples");
    }
    let mut values: Vec<f64> = draws.into_iter().filter_map(|d| d.0).collect();
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(Interval {
        lo: percentile(&values, alpha),
        hi: percentile(&values, 1.0 - alpha),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Region {
    NorthEast,
    SouthEast,
    SouthWest,
    NorthWest,
}

impl Region {
    pub const ALL: [Region; 4] = [
        Region::NorthEast,
        Region::SouthEast,
        Region::SouthWest,
        Region::NorthWest,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Region::NorthEast => "NE",
            Region::SouthEast => "SE",
            Region::SouthWest => "SW",
            Region::NorthWest => "NW",
        }
    }

    /// North means `lat > 37.5`; east means east of 100W, i.e. `lon > -100`.
    pub fn of(lon: f64, lat: f64) -> Region {
        match (lat > 37.5, lon > -100.0) {
            (true, true) => Region::NorthEast,
            (false, true) => Region::SouthEast,
            (false, false) => Region::SouthWest,
            (true, false) => Region::NorthWest,
        }
    }
}

/// Indices per region, in `Region::ALL` order.
pub fn quadrant_split(dataset: &Dataset) -> [Vec<usize>; 4] {
    let mut out: [Vec<usize>; 4] = Default::default();
    for o in dataset.observations() {
        let r = Region::of(o.lon, o.lat);
        out[Region::ALL.iter().position(|&q| q == r).unwrap()].push(o.index);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: Option<f64>,
    pub ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceReport {
    pub region: String,
    pub n: usize,
    pub u: f64,
    pub tau: Estimate,
    pub chi: Estimate,
    pub chibar: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExploreOptions {
    pub level: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            level: 0.95,
            replicates: 200,
            seed: 1,
        }
    }
}

fn estimate<F>(stat: F, x: &[f64], y: &[f64], opts: &ExploreOptions) -> Estimate
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    let value = stat(x, y).ok();
    let ci =
        value.and_then(|_| bootstrap_ci(&stat, x, y, opts.level, opts.replicates, opts.seed).ok());
    Estimate { value, ci }
}

/// Pairs observed for both variables, per region and level.
pub fn explore(dataset: &Dataset, levels: &[f64], opts: &ExploreOptions) -> Vec<DependenceReport> {
    let regions = quadrant_split(dataset);
    let mut out = Vec::new();
    for (region, idx) in Region::ALL.iter().zip(&regions) {
        let (x, y): (Vec<f64>, Vec<f64>) = idx
            .iter()
            .filter_map(|&i| {
                Some((
                    dataset.observed(Variable::Cnt, i)?,
                    dataset.observed(Variable::Ba, i)?,
                ))
            })
            .unzip();
        let tau = if x.len() >= 2 {
            estimate(kendall_tau, &x, &y, opts)
        } else {
            Estimate {
                value: None,
                ci: None,
            }
        };
        for &u in levels {
            out.push(DependenceReport {
                region: region.label().to_string(),
                n: x.len(),
                u,
                tau: tau.clone(),
                chi: estimate(|a: &[f64], b: &[f64]| chi_u(a, b, u), &x, &y, opts),
                chibar: estimate(|a: &[f64], b: &[f64]| chibar_u(a, b, u), &x, &y, opts),
            });
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn write_reports<W: Write>(reports: &[DependenceReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "region",
        "n",
        "u",
        "tau",
        "tau_lo",
        "tau_hi",
        "chi",
        "chi_lo",
        "chi_hi",
        "chibar",
        "chibar_lo",
        "chibar_hi",
    ])?;
    for r in reports {
        let mut rec = vec![r.region.clone(), r.n.to_string(), r.u.to_string()];
        for e in [&r.tau, &r.chi, &r.chibar] {
            rec.push(opt(e.value));
            rec.push(opt(e.ci.map(|c| c.lo)));
            rec.push(opt(e.ci.map(|c| c.hi)));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<dependence>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trend {
    pub slope: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Least-squares slope of annual means with a two-sided t-test at 5%.
pub fn annual_trend(dataset: &Dataset, var: Variable) -> Result<Trend> {
    let mut sums: std::collections::BTreeMap<i32, (f64, usize)> = Default::default();
    for o in dataset.observations() {
        if let Some(v) = dataset.observed(var, o.index) {
            let e = sums.entry(o.year).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let pts: Vec<(f64, f64)> = sums
        .iter()
        .map(|(&y, &(s, c))| (y as f64, s / c as f64))
        .collect();
    linear_trend(&pts)
}

pub fn linear_trend(pts: &[(f64, f64)]) -> Result<Trend> {
    let n = pts.len();
    if n < 3 {
        return Err(Error::Undefined("trend needs at least three years".into()));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Undefined("trend over a single year".into()));
    }
    let slope = sxy / sxx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    let se = (rss / (nf - 2.0) / sxx).sqrt();
    let (t, p) = if se == 0.0 {
        (
            if slope == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(slope)
            },
            if slope == 0.0 { 1.0 } else { 0.0 },
        )
    } else {
        let t = slope / se;
        let dist = StudentsT::new(0.0, 1.0, nf - 2.0).expect("valid degrees of freedom");
        (t, 2.0 * (1.0 - dist.cdf(t.abs())))
    };
    Ok(Trend {
        slope,
        t_statistic: t,
        p_value: p,
        significant: p < 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut s, mut tx, mut ty) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let a = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
                let b = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
                s += a * b;
                tx += a * a;
                ty += b * b;
            }
        }
        s / (tx * ty).sqrt()
    }

    #[test]
    fn tau_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        let r = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(&x, &r).unwrap(), -1.0);
        let t = kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            kendall_tau(&x, &x[..3]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn tau_matches_quadratic(pairs in prop::collection::vec((0u8..6, 0u8..6), 2..60)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let brute = brute_tau(&x, &y);
            match kendall_tau(&x, &y) {
                Ok(t) => prop_assert!((t - brute).abs() < 1e-12),
                Err(_) => prop_assert!(brute.is_nan()),
            }
        }

        #[test]
        fn rank_invariance(v in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 10..80)) {
            let x: Vec<f64> = v.iter().map(|p| p.0).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1).collect();
            let xt: Vec<f64> = x.iter().map(|a| a.exp()).collect();
            let yt: Vec<f64> = y.iter().map(|a| a * 3.0 + 7.0).collect();
            prop_assert_eq!(kendall_tau(&x, &y).ok(), kendall_tau(&xt, &yt).ok());
            prop_assert_eq!(chi_u(&x, &y, 0.7).ok(), chi_u(&xt, &yt, 0.7).ok());
            if let Ok(c) = chi_u(&x, &y, 0.7) {
                prop_assert!((0.0..=1.0).contains(&c));
            }
            if let Ok(c) = chibar_u(&x, &y, 0.7) {
                prop_assert!(c > -1.0 && c <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn perfect_dependence() {
        let x: Vec<f64> = (0..500).map(|i| i as f64).collect();
        for u in [0.5, 0.9, 0.99] {
            assert_eq!(chi_u(&x, &x, u).unwrap(), 1.0);
            assert!((chibar_u(&x, &x, u).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        for u in [0.9, 0.95] {
            let c = chi_u(&x, &y, u).unwrap();
            let m = (1.0 - u) * n as f64;
            let se = ((1.0 - u) * u / m).sqrt();
            assert!((c - (1.0 - u)).abs() < 3.0 * se, "u={u} chi={c}");
            assert!(chibar_u(&x, &y, u).unwrap().abs() < 0.1);
        }
    }

    #[test]
    fn negative_association() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 1.0 - v + 0.2 * rng.random::<f64>())
            .collect();
        assert!(chibar_u(&x, &y, 0.5).unwrap() < 0.0);
    }

    #[test]
    fn bootstrap_determinism_and_degenerate() {
        let x = vec![1.0; 50];
        let ci = bootstrap_ci(
            |a: &[f64], b: &[f64]| chi_u(a, b, 0.3),
            &x,
            &x,
            0.95,
            100,
            7,
        )
        .unwrap();
        assert_eq!(ci.lo, ci.hi);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let one = bootstrap_ci(kendall_tau, &a, &b, 0.9, 150, 11).unwrap();
        let two = bootstrap_ci(kendall_tau, &a, &b, 0.9, 150, 11).unwrap();
        assert_eq!(one, two);
        assert!(one.lo < one.hi);
        assert!(bootstrap_ci(kendall_tau, &a, &b, 0.9, 50, 11).is_err());
        assert!(bootstrap_ci(kendall_tau, &x, &x, 0.9, 100, 11).is_err());
    }

    #[test]
    fn tau_interval_coverage() {
        let rho: f64 = 0.5;
        let truth = 2.0 / std::f64::consts::PI * rho.asin();
        let experiments = 200;
        let mut covered = 0;
        for e in 0..experiments {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + e);
            let n = 150;
            let mut x = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                x.push(a);
                y.push(rho * a + (1.0 - rho * rho).sqrt() * b);
            }
            let ci = bootstrap_ci(kendall_tau, &x, &y, 0.95, 200, e).unwrap();
            if ci.lo <= truth && truth <= ci.hi {
                covered += 1;
            }
        }
        let rate = covered as f64 / experiments as f64;
        assert!((rate - 0.95).abs() <= 0.03, "coverage {rate}");
    }

    #[test]
    fn quadrants() {
        assert_eq!(Region::of(-80.0, 40.0), Region::NorthEast);
        assert_eq!(Region::of(-110.0, 40.0), Region::NorthWest);
        assert_eq!(Region::of(-110.0, 30.0), Region::SouthWest);
        assert_eq!(Region::of(-100.0, 37.5), Region::SouthWest);
        let corners = [(-120.0, 45.0), (-120.0, 30.0), (-80.0, 30.0), (-80.0, 45.0)];
        let set: std::collections::BTreeSet<Region> =
            corners.iter().map(|&(a, b)| Region::of(a, b)).collect();
        assert_eq!(set.len(), 4);
    }

    #[test]
    fn trend_detects_slope() {
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|k| (2000.0 + k as f64, 2.0 * k as f64 + (k % 3) as f64))
            .collect();
        let t = linear_trend(&pts).unwrap();
        assert!((t.slope - 2.0).abs() < 0.1);
        assert!(t.significant);
        let flat: Vec<(f64, f64)> = (0..20)
            .map(|k| (2000.0 + k as f64, (k % 2) as f64))
            .collect();
        assert!(!linear_trend(&flat).unwrap().significant);
    }
}
