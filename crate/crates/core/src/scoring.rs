//! Threshold-weighted squared CDF error and a pooled empirical benchmark.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PredictionRow, PredictionTable, Variable};
use crate::ecdf::Ecdf;
use crate::error::{Error, Result};
use crate::num::{pairwise_sum, Real};

/// Weight of the k-th of `len` ordered thresholds: rises linearly from 1 to 4.
pub fn default_weights(len: usize) -> Vec<f64> {
    if len <= 1 {
        return vec![1.0; len];
    }
    (0..len)
        .map(|k| 1.0 + 3.0 * k as f64 / (len - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub cnt_weights: Vec<f64>,
    pub ba_weights: Vec<f64>,
}

impl ScoreConfig {
    pub fn new(cnt_weights: Vec<f64>, ba_weights: Vec<f64>) -> Result<Self> {
        for w in [&cnt_weights, &ba_weights] {
            validate_weights(w)?;
        }
        Ok(ScoreConfig {
            cnt_weights,
            ba_weights,
        })
    }

    pub fn for_grids(cnt_len: usize, ba_len: usize) -> Self {
        ScoreConfig {
            cnt_weights: default_weights(cnt_len),
            ba_weights: default_weights(ba_len),
        }
    }

    pub fn weights(&self, var: Variable) -> &[f64] {
        match var {
            Variable::Cnt => &self.cnt_weights,
            Variable::Ba => &self.ba_weights,
        }
    }
}

pub fn validate_weights<T: Real>(w: &[T]) -> Result<()> {
    if w.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
        return Err(Error::InvalidInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    if w.iter().all(|&x| x == T::zero()) {
        return Err(Error::InvalidInput("weights must not all be zero".into()));
    }
    Ok(())
}

/// `Σ_k ω_k (1{observed ≤ u_k} − p_k)²`; lower is better.
pub fn score_one<T: Real>(
    predicted: &[T],
    thresholds: &[T],
    observed: T,
    weights: &[T],
) -> Result<T> {
    if predicted.len() != thresholds.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: thresholds.len(),
        });
    }
    if weights.len() != thresholds.len() {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: thresholds.len(),
        });
    }
    for (k, &p) in predicted.iter().enumerate() {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::InvalidInput(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        if k > 0 && p < predicted[k - 1] {
            return Err(Error::NonMonotone(k));
        }
    }
    Ok(predicted
        .iter()
        .zip(thresholds)
        .zip(weights)
        .fold(T::zero(), |acc, ((&p, &u), &w)| {
            let ind = if observed <= u { T::one() } else { T::zero() };
            acc + w * (ind - p) * (ind - p)
        }))
}

/// Sum of per-row scores in row order (duplicated indices count once per
/// occurrence), combined with a fixed pairwise association.
pub fn score_set(
    table: &PredictionTable,
    truths: &HashMap<usize, f64>,
    weights: &[f64],
) -> Result<f64> {
    Ok(pairwise_sum(&row_scores(table, truths, weights)?))
}

pub fn row_scores(
    table: &PredictionTable,
    truths: &HashMap<usize, f64>,
    weights: &[f64],
) -> Result<Vec<f64>> {
    table
        .rows
        .iter()
        .map(|row| {
            let truth = *truths
                .get(&row.index)
                .ok_or(Error::MissingTruth(row.index))?;
            score_one(&row.probs, &table.thresholds, truth, weights)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLine {
    pub label: String,
    pub n: usize,
    pub total: f64,
}

impl ScoreLine {
    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.total / self.n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub lines: Vec<ScoreLine>,
}

impl ScoreReport {
    /// Per-variable lines followed by a combined line.
    pub fn from_tables(
        tables: &[&PredictionTable],
        truths: &BTreeMap<Variable, HashMap<usize, f64>>,
        config: &ScoreConfig,
    ) -> Result<Self> {
        let mut lines = Vec::new();
        for t in tables {
            let empty = HashMap::new();
            let tr = truths.get(&t.variable).unwrap_or(&empty);
            lines.push(ScoreLine {
                label: t.variable.name().to_string(),
                n: t.rows.len(),
                total: score_set(t, tr, config.weights(t.variable))?,
            });
        }
        let combined = ScoreLine {
            label: "combined".into(),
            n: lines.iter().map(|l| l.n).sum(),
            total: lines.iter().map(|l| l.total).sum(),
        };
        lines.push(combined);
        Ok(ScoreReport { lines })
    }

    pub fn total(&self) -> f64 {
        self.lines.last().map_or(0.0, |l| l.total)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variable", "n", "total", "mean"])?;
        for l in &self.lines {
            w.write_record([
                l.label.clone(),
                l.n.to_string(),
                l.total.to_string(),
                l.mean().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<scores>", e))?;
        Ok(())
    }
}

/// Pooled empirical CDF of all non-missing observations sharing the month,
/// on the variable's raw scale, evaluated at every missing index.
pub fn benchmark_table(dataset: &Dataset, var: Variable) -> PredictionTable {
    let mut by_month: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for o in dataset.observations() {
        if let Some(v) = dataset.observed(var, o.index) {
            by_month.entry(o.month).or_default().push(v);
        }
    }
    let ecdfs: BTreeMap<u32, Ecdf<f64>> = by_month
        .into_iter()
        .map(|(m, v)| (m, Ecdf::new(&v)))
        .collect();
    let thresholds = dataset.thresholds(var).to_vec();
    let mut table = PredictionTable::new(var, thresholds.clone());
    for &i in dataset.missing(var) {
        let month = dataset.get(i).month;
        let probs = match ecdfs.get(&month) {
            Some(e) if !e.is_empty() => thresholds.iter().map(|&u| e.cdf(u)).collect(),
            _ => vec![1.0; thresholds.len()],
        };
        table.rows.push(PredictionRow { index: i, probs });
    }
    table
}

/// Expected score of `forecast` under a discrete truth distribution.
pub fn expected_score<T: Real>(
    forecast: &[T],
    thresholds: &[T],
    weights: &[T],
    support: &[T],
    probs: &[T],
) -> Result<T> {
    let mut acc = T::zero();
    for (&x, &p) in support.iter().zip(probs) {
        acc = acc + p * score_one(forecast, thresholds, x, weights)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_forecast_scores_zero() {
        let u = [0.0, 1.0, 5.0];
        let p = [0.0, 1.0, 1.0];
        assert_eq!(score_one(&p, &u, 1.0, &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_threshold_arithmetic() {
        assert_eq!(score_one(&[0.5], &[1.0], 2.0, &[1.0]).unwrap(), 0.25);
        assert_eq!(score_one(&[0.5f32], &[1.0], 2.0, &[1.0]).unwrap(), 0.25);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(
            score_one(&[0.6, 0.5], &[0.0, 1.0], 0.0, &[1.0, 1.0]),
            Err(Error::NonMonotone(1))
        ));
        assert!(score_one(&[0.5], &[0.0, 1.0], 0.0, &[1.0, 1.0]).is_err());
        assert!(score_one(&[0.5, 0.6], &[0.0, 1.0], 0.0, &[1.0]).is_err());
    }

    #[test]
    fn default_weights_shape() {
        let w = default_weights(28);
        assert_eq!(w[0], 1.0);
        assert_eq!(w[27], 4.0);
        assert!(w.windows(2).all(|p| p[1] > p[0]));
        assert!(validate_weights(&[0.0, 0.0]).is_err());
        assert!(validate_weights(&[0.0, -1.0]).is_err());
    }

    fn table(rows: &[(usize, [f64; 2])]) -> PredictionTable {
        let mut t = PredictionTable::new(Variable::Cnt, vec![0.0, 1.0]);
        for &(index, p) in rows {
            t.rows.push(PredictionRow {
                index,
                probs: p.to_vec(),
            });
        }
        t
    }

    #[test]
    fn set_scores() {
        let truths: HashMap<usize, f64> = [(1, 0.0), (2, 3.0)].into_iter().collect();
        let w = [1.0, 1.0];
        assert_eq!(score_set(&table(&[]), &truths, &w).unwrap(), 0.0);
        let a = table(&[(1, [0.5, 0.5])]);
        let b = table(&[(2, [0.5, 1.0])]);
        let ab = table(&[(1, [0.5, 0.5]), (2, [0.5, 1.0])]);
        let sa = score_set(&a, &truths, &w).unwrap();
        let sb = score_set(&b, &truths, &w).unwrap();
        assert_eq!(score_set(&ab, &truths, &w).unwrap(), sa + sb);
        let dup = table(&[(1, [0.5, 0.5]), (1, [0.5, 0.5])]);
        assert_eq!(score_set(&dup, &truths, &w).unwrap(), 2.0 * sa);
        let missing = table(&[(7, [0.5, 0.5])]);
        assert!(matches!(
            score_set(&missing, &truths, &w),
            Err(Error::MissingTruth(7))
        ));
    }

    #[test]
    fn zero_weight_threshold_is_inert() {
        let s1 = score_one(&[0.2, 0.7], &[1.0, 3.0], 2.0, &[1.0, 2.0]).unwrap();
        let s2 = score_one(&[0.2, 0.4, 0.7], &[1.0, 2.5, 3.0], 2.0, &[1.0, 0.0, 2.0]).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn report_combines_variables() {
        let t = table(&[(1, [0.5, 0.5])]);
        let mut ba = table(&[(2, [0.0, 1.0])]);
        ba.variable = Variable::Ba;
        let mut truths = BTreeMap::new();
        truths.insert(Variable::Cnt, [(1usize, 0.0)].into_iter().collect());
        truths.insert(Variable::Ba, [(2usize, 1.0)].into_iter().collect());
        let cfg = ScoreConfig::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let r = ScoreReport::from_tables(&[&t, &ba], &truths, &cfg).unwrap();
        assert_eq!(r.lines.len(), 3);
        assert_eq!(r.total(), 0.5);
        assert_eq!(r.lines[2].n, 2);
    }
}
