//! Nearest-neighbour cross-validation of the neighbourhood radius and the
//! tail non-exceedance level.
//!
//! Every validation index is represented by its spatially nearest non-missing
//! observation from the same month and year (its surrogate). A candidate
//! parameter setting is scored by predicting each surrogate from its own
//! neighbourhood, with the surrogate itself left out, and summing the scores.

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Variable};
use crate::error::{Error, Result};
use crate::geo::{haversine_unchecked, LonLat};
use crate::neighborhoods::{neighborhood, NeighborhoodSpec};
use crate::num::pairwise_sum;
use crate::pipeline::{predict_row, ModelOptions};
use crate::scoring::score_one;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningGrid {
    pub radii: Vec<f64>,
    pub quantiles: Vec<f64>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        TuningGrid {
            radii: (0..15).map(|k| 50.0 + 25.0 * k as f64).collect(),
            quantiles: (1..20).map(|k| k as f64 / 20.0).collect(),
        }
    }
}

impl TuningGrid {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.quantiles.is_empty() {
            return Err(Error::InvalidInput("tuning grids must be nonempty".into()));
        }
        if self.radii.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::InvalidInput("radii must be >= 0".into()));
        }
        if self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::InvalidInput("quantiles must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvPair {
    pub validation: usize,
    pub surrogate: usize,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub variable: Variable,
    pub pairs: Vec<CvPair>,
    /// Validation indices whose slice has no usable observation.
    pub skipped: Vec<usize>,
}

/// Pair each missing index of `var` with the nearest non-missing observation
/// of the same month and year; ties go to the smallest id.
pub fn build_cv_plan(dataset: &Dataset, var: Variable) -> CvPlan {
    let index = dataset.spatial_index();
    let radius = dataset.geo().earth_radius_km;
    let results: Vec<Option<CvPair>> = dataset
        .missing(var)
        .par_iter()
        .map(|&i| {
            let o = dataset.get(i);
            let at = LonLat::new(o.lon, o.lat);
            let mut best: Option<(f64, usize)> = None;
            for j in index.slice(o.month, o.year) {
                if dataset.observed(var, j).is_none() {
                    continue;
                }
                let c = dataset.get(j);
                let d = haversine_unchecked(at, LonLat::new(c.lon, c.lat), radius);
                // Slice ids ascend, so strict `<` keeps the smallest id on ties.
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            best.map(|(distance_km, surrogate)| CvPair {
                validation: i,
                surrogate,
                distance_km,
            })
        })
        .collect();
    let mut plan = CvPlan {
        variable: var,
        pairs: Vec::with_capacity(results.len()),
        skipped: Vec::new(),
    };
    for (&i, r) in dataset.missing(var).iter().zip(results) {
        match r {
            Some(p) => plan.pairs.push(p),
            None => plan.skipped.push(i),
        }
    }
    if !plan.skipped.is_empty() {
        warn!(
            "{} {} validation indices have no observed neighbour in their slice",
            plan.skipped.len(),
            var
        );
    }
    plan
}

fn score_surrogate(
    dataset: &Dataset,
    var: Variable,
    surrogate: usize,
    sample: &[f64],
    k2: f64,
    weights: &[f64],
    opts: &ModelOptions,
) -> f64 {
    let truth = dataset
        .observed(var, surrogate)
        .expect("surrogate is observed");
    let (row, _) = predict_row(dataset, var, surrogate, sample, k2, opts);
    score_one(&row, dataset.thresholds(var), truth, weights).expect("model rows are valid CDF rows")
}

/// Total CV score of one parameter setting. `k2` is ignored for counts.
pub fn cv_score(
    dataset: &Dataset,
    var: Variable,
    spec: &NeighborhoodSpec,
    k2: Option<f64>,
    plan: &CvPlan,
    weights: &[f64],
    opts: &ModelOptions,
) -> f64 {
    let k2 = k2.unwrap_or(opts.k2_default);
    let scores: Vec<f64> = plan
        .pairs
        .par_iter()
        .map(|p| {
            let nb = neighborhood(dataset, p.surrogate, spec);
            let sample = nb.sample(dataset, var, Some(p.surrogate));
            score_surrogate(dataset, var, p.surrogate, &sample, k2, weights, opts)
        })
        .collect();
    pairwise_sum(&scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub k1: f64,
    pub k2: Option<f64>,
    pub score: f64,
}

/// CV scores over `radii × quantiles` (just `radii` for counts), in grid order.
///
/// Neighbourhoods and fits are reused per surrogate whenever consecutive radii
/// produce the same member set, which leaves every score unchanged.
#[allow(clippy::too_many_arguments)]
pub fn grid_scores(
    dataset: &Dataset,
    var: Variable,
    base: &NeighborhoodSpec,
    radii: &[f64],
    quantiles: &[f64],
    plan: &CvPlan,
    weights: &[f64],
    opts: &ModelOptions,
) -> Vec<GridRow> {
    let ks: Vec<Option<f64>> = match var {
        Variable::Cnt => vec![None],
        Variable::Ba => quantiles.iter().copied().map(Some).collect(),
    };
    let per_pair: Vec<Vec<f64>> = plan
        .pairs
        .par_iter()
        .map(|p| {
            let mut out = Vec::with_capacity(radii.len() * ks.len());
            let mut cache: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
            for &r in radii {
                let nb = neighborhood(dataset, p.surrogate, &base.with_radius(r));
                let hit = cache
                    .iter()
                    .find(|(m, _)| *m == nb.members)
                    .map(|(_, s)| s.clone());
                let scores = match hit {
                    Some(s) => s,
                    None => {
                        let sample = nb.sample(dataset, var, Some(p.surrogate));
                        let s: Vec<f64> = ks
                            .iter()
                            .map(|k| {
                                score_surrogate(
                                    dataset,
                                    var,
                                    p.surrogate,
                                    &sample,
                                    k.unwrap_or(opts.k2_default),
                                    weights,
                                    opts,
                                )
                            })
                            .collect();
                        cache.push((nb.members, s.clone()));
                        s
                    }
                };
                out.extend(scores);
            }
            out
        })
        .collect();

    let mut rows = Vec::with_capacity(radii.len() * ks.len());
    let mut column = vec![0.0; per_pair.len()];
    for (ri, &r) in radii.iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            let pos = ri * ks.len() + ki;
            for (c, scores) in column.iter_mut().zip(&per_pair) {
                *c = scores[pos];
            }
            rows.push(GridRow {
                k1: r,
                k2: k,
                score: pairwise_sum(&column),
            });
        }
    }
    rows
}

/// Lowest score; ties go to the smallest radius, then the smallest quantile.
pub fn argmin(rows: &[GridRow]) -> Option<GridRow> {
    rows.iter().copied().reduce(|best, r| {
        let better = r.score < best.score
            || (r.score == best.score
                && (r.k1 < best.k1
                    || (r.k1 == best.k1 && r.k2.unwrap_or(0.0) < best.k2.unwrap_or(0.0))));
        if better {
            r
        } else {
            best
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub k1_cnt: f64,
    pub k1_ba: f64,
    pub k2_ba: f64,
    pub cnt_rows: Vec<GridRow>,
    pub ba_rows: Vec<GridRow>,
}

/// Exhaustive grid search for `(k1 CNT)` and `(k1 BA, k2 BA)`.
pub fn select_parameters(
    dataset: &Dataset,
    grid: &TuningGrid,
    base: &NeighborhoodSpec,
    cnt_weights: &[f64],
    ba_weights: &[f64],
    opts: &ModelOptions,
) -> Result<Selection> {
    grid.validate()?;
    let cnt_plan = build_cv_plan(dataset, Variable::Cnt);
    let ba_plan = build_cv_plan(dataset, Variable::Ba);
    let cnt_rows = grid_scores(
        dataset,
        Variable::Cnt,
        base,
        &grid.radii,
        &grid.quantiles,
        &cnt_plan,
        cnt_weights,
        opts,
    );
    let ba_rows = grid_scores(
        dataset,
        Variable::Ba,
        base,
        &grid.radii,
        &grid.quantiles,
        &ba_plan,
        ba_weights,
        opts,
    );
    let c = argmin(&cnt_rows).expect("nonempty grid");
    let b = argmin(&ba_rows).expect("nonempty grid");
    Ok(Selection {
        k1_cnt: c.k1,
        k1_ba: b.k1,
        k2_ba: b.k2.unwrap_or(opts.k2_default),
        cnt_rows,
        ba_rows,
    })
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_k2 = rows.iter().any(|r| r.k2.is_some());
    if with_k2 {
        w.write_record(["k1", "k2", "score"])?;
    } else {
        w.write_record(["k1", "score"])?;
    }
    for r in rows {
        match r.k2 {
            Some(k2) if with_k2 => {
                w.write_record([r.k1.to_string(), k2.to_string(), r.score.to_string()])?
            }
            _ => w.write_record([r.k1.to_string(), r.score.to_string()])?,
        }
    }
    w.flush().map_err(|e| Error::io("<tuning>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_thresholds, Observation, Season};
    use crate::geo::GeoConfig;
    use crate::scoring::default_weights;
    use proptest::prelude::*;

    fn obs(lon: f64, lat: f64, year: i32, cnt: Option<u64>) -> Observation {
        Observation {
            index: 0,
            lon,
            lat,
            month: 7,
            year,
            area_fraction: 1.0,
            cnt,
            ba: cnt.map(|c| c as f64 * 10.0),
            land_cover: [0.0; 18],
            climate: vec![],
            altitude: 0.0,
        }
    }

    fn dataset(observations: Vec<Observation>) -> Dataset {
        let (cu, bu) = default_thresholds();
        Dataset::new(
            observations,
            cu,
            bu,
            GeoConfig::default(),
            Season::default(),
        )
        .unwrap()
    }

    #[test]
    fn surrogate_is_nearest_in_slice() {
        let d = dataset(vec![
            obs(-100.0, 40.0, 2001, None),
            obs(-100.0, 40.5, 2001, Some(1)),
            obs(-100.0, 40.1, 2002, Some(2)),
            obs(-100.0, 41.0, 2001, Some(3)),
        ]);
        let plan = build_cv_plan(&d, Variable::Cnt);
        assert_eq!(plan.pairs.len(), 1);
        assert_eq!(plan.pairs[0].surrogate, 1);
        assert!((plan.pairs[0].distance_km - 55.6).abs() < 0.1);
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let d = dataset(vec![
            obs(-100.0, 40.0, 2001, None),
            obs(-100.0, 40.5, 2001, Some(1)),
            obs(-100.0, 39.5, 2001, Some(1)),
        ]);
        assert_eq!(build_cv_plan(&d, Variable::Cnt).pairs[0].surrogate, 1);
    }

    #[test]
    fn empty_slice_is_skipped() {
        let d = dataset(vec![
            obs(-100.0, 40.0, 2001, None),
            obs(-100.0, 40.5, 2002, Some(1)),
        ]);
        let plan = build_cv_plan(&d, Variable::Cnt);
        assert!(plan.pairs.is_empty());
        assert_eq!(plan.skipped, vec![0]);
    }

    #[test]
    fn argmin_breaks_ties_by_radius_then_level() {
        let rows = [
            GridRow {
                k1: 100.0,
                k2: Some(0.7),
                score: 1.0,
            },
            GridRow {
                k1: 50.0,
                k2: Some(0.7),
                score: 1.0,
            },
            GridRow {
                k1: 50.0,
                k2: Some(0.3),
                score: 1.0,
            },
            GridRow {
                k1: 25.0,
                k2: Some(0.1),
                score: 2.0,
            },
        ];
        let best = argmin(&rows).unwrap();
        assert_eq!((best.k1, best.k2), (50.0, Some(0.3)));
        assert!(argmin(&[]).is_none());
    }

    #[test]
    fn grid_validation() {
        assert!(TuningGrid::default().validate().is_ok());
        assert!(TuningGrid {
            radii: vec![],
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TuningGrid {
            quantiles: vec![1.0],
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_eq!(TuningGrid::default().radii.len(), 15);
        assert_eq!(TuningGrid::default().quantiles.len(), 19);
    }

    fn random_dataset(points: &[(f64, f64, bool, u64)]) -> Dataset {
        let mut seen = std::collections::HashSet::new();
        let observations = points
            .iter()
            .filter(|p| seen.insert(((p.0 * 100.0) as i64, (p.1 * 100.0) as i64)))
            .map(|&(lon, lat, missing, c)| {
                let lon = (lon * 100.0).trunc() / 100.0;
                let lat = (lat * 100.0).trunc() / 100.0;
                obs(lon, lat, 2001, if missing { None } else { Some(c) })
            })
            .collect();
        dataset(observations)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn plan_matches_brute_force(points in prop::collection::vec((-102.0..-98.0f64, 38.0..42.0f64, prop::bool::weighted(0.3), 0..20u64), 2..40)) {
            let d = random_dataset(&points);
            let plan = build_cv_plan(&d, Variable::Cnt);
            let r = d.geo().earth_radius_km;
            for p in &plan.pairs {
                let v = d.get(p.validation);
                let mut best = (f64::INFINITY, usize::MAX);
                for o in d.observations().iter().filter(|o| o.cnt.is_some()) {
                    let dist = haversine_unchecked(LonLat::new(v.lon, v.lat), LonLat::new(o.lon, o.lat), r);
                    if dist < best.0 {
                        best = (dist, o.index);
                    }
                }
                prop_assert_eq!(p.surrogate, best.1);
                prop_assert_eq!(p.distance_km, best.0);
            }
            prop_assert_eq!(plan.pairs.len() + plan.skipped.len(), d.missing(Variable::Cnt).len());
        }

        #[test]
        fn cached_grid_equals_direct_scores(points in prop::collection::vec((-101.0..-99.0f64, 39.0..41.0f64, prop::bool::weighted(0.3), 0..20u64), 12..40)) {
            let d = random_dataset(&points);
            let opts = ModelOptions::default();
            let radii = [10.0, 20.0, 50.0, 100.0, 150.0];
            let ks = [0.3, 0.6];
            for var in Variable::BOTH {
                let plan = build_cv_plan(&d, var);
                let w = default_weights(d.thresholds(var).len());
                let base = NeighborhoodSpec::Spatial { radius_km: 0.0 };
                let rows = grid_scores(&d, var, &base, &radii, &ks, &plan, &w, &opts);
                for row in rows {
                    let direct = cv_score(&d, var, &base.with_radius(row.k1), row.k2, &plan, &w, &opts);
                    prop_assert_eq!(row.score, direct);
                }
            }
        }
    }
}
