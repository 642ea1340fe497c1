//! Deterministic deductions for missing values, applied as overrides on top
//! of model predictions.
//!
//! * A known burnt area of zero means no fire was counted, and vice versa; a
//!   known positive value of either means the other is positive too.
//! * Cells almost entirely covered by water never burn.
//! * A burnt-area threshold at or above the cell's capacity has CDF 1.

use log::warn;

use crate::data::{Dataset, Variable};

pub const DEFAULT_WATER_CUT: f64 = 0.94;
pub const DEFAULT_WATER_TARGET: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForcedKind {
    /// Value known to be zero: CDF is 1 at every threshold.
    AllOne,
    /// Value known to be positive: CDF at threshold 0 is 0.
    ZeroAtZero,
    /// Positions of thresholds at or above the upper bound: CDF is 1 there.
    TailOne(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleSource {
    Pair,
    Water,
    Saturation,
}

impl RuleSource {
    pub fn name(self) -> &'static str {
        match self {
            RuleSource::Pair => "pair",
            RuleSource::Water => "water",
            RuleSource::Saturation => "saturation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForcedPrediction {
    pub index: usize,
    pub variable: Variable,
    pub kind: ForcedKind,
    pub source: RuleSource,
}

impl ForcedPrediction {
    /// Overwrite the affected entries of a CDF row evaluated at `thresholds`.
    pub fn apply(&self, row: &mut [f64], thresholds: &[f64]) {
        match &self.kind {
            ForcedKind::AllOne => row.iter_mut().for_each(|p| *p = 1.0),
            ForcedKind::ZeroAtZero => {
                for (p, &u) in row.iter_mut().zip(thresholds) {
                    if u == 0.0 {
                        *p = 0.0;
                    }
                }
            }
            ForcedKind::TailOne(positions) => {
                for &k in positions {
                    if let Some(p) = row.get_mut(k) {
                        *p = 1.0;
                    }
                }
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ForcedKind::AllOne => "ALL_ONE",
            ForcedKind::ZeroAtZero => "ZERO_AT_ZERO",
            ForcedKind::TailOne(_) => "TAIL_ONE",
        }
    }
}

/// Deductions for indices missing exactly one of the two variables.
pub fn deduce_from_pair(dataset: &Dataset) -> Vec<ForcedPrediction> {
    let mut out = Vec::new();
    for &i in dataset.missing(Variable::Cnt) {
        if let Some(bap) = dataset.bap(i) {
            out.push(ForcedPrediction {
                index: i,
                variable: Variable::Cnt,
                kind: if bap == 0.0 {
                    ForcedKind::AllOne
                } else {
                    ForcedKind::ZeroAtZero
                },
                source: RuleSource::Pair,
            });
        }
    }
    for &i in dataset.missing(Variable::Ba) {
        if let Some(cnt) = dataset.get(i).cnt {
            out.push(ForcedPrediction {
                index: i,
                variable: Variable::Ba,
                kind: if cnt == 0 {
                    ForcedKind::AllOne
                } else {
                    ForcedKind::ZeroAtZero
                },
                source: RuleSource::Pair,
            });
        }
    }
    out
}

/// Missing values in cells whose water proportion strictly exceeds `cut`.
pub fn deduce_from_water(dataset: &Dataset, cut: f64) -> Vec<ForcedPrediction> {
    let mut out = Vec::new();
    for var in Variable::BOTH {
        for &i in dataset.missing(var) {
            if dataset.get(i).water() > cut {
                out.push(ForcedPrediction {
                    index: i,
                    variable: var,
                    kind: ForcedKind::AllOne,
                    source: RuleSource::Water,
                });
            }
        }
    }
    out
}

/// Burnt-area thresholds at or above each missing cell's capacity.
pub fn deduce_saturation(dataset: &Dataset) -> Vec<ForcedPrediction> {
    let grid = dataset.ba_thresholds();
    dataset
        .missing(Variable::Ba)
        .iter()
        .filter_map(|&i| {
            let capacity = dataset.capacity(i);
            let positions: Vec<usize> = grid
                .iter()
                .enumerate()
                .filter(|(_, &u)| u > 0.0 && u / capacity >= 1.0)
                .map(|(k, _)| k)
                .collect();
            (!positions.is_empty()).then_some(ForcedPrediction {
                index: i,
                variable: Variable::Ba,
                kind: ForcedKind::TailOne(positions),
                source: RuleSource::Saturation,
            })
        })
        .collect()
}

/// Default search grid for the water cut: 0.50, 0.51, …, 0.99.
pub fn default_water_grid() -> Vec<f64> {
    (50..100).map(|k| k as f64 / 100.0).collect()
}

/// Training rows with a positive count but zero burnt area.
pub fn anomalies(dataset: &Dataset) -> Vec<usize> {
    dataset
        .observations()
        .iter()
        .filter(
            |o| matches!((o.cnt, dataset.bap(o.index)), (Some(c), Some(b)) if c > 0 && b == 0.0),
        )
        .map(|o| o.index)
        .collect()
}

/// Smallest cut on `grid` above which the observed zero fraction exceeds
/// `target` for both variables; [`DEFAULT_WATER_CUT`] when none qualifies.
pub fn calibrate_water_cut(dataset: &Dataset, target: f64, grid: &[f64]) -> f64 {
    let anomalous = anomalies(dataset);
    if !anomalous.is_empty() {
        warn!(
            "{} training rows have a positive count with zero burnt area; excluded from water-cut calibration",
            anomalous.len()
        );
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    for &c in &sorted {
        let mut counts = [(0usize, 0usize); 2];
        for o in dataset.observations() {
            if o.water() <= c || anomalous.binary_search(&o.index).is_ok() {
                continue;
            }
            for (slot, var) in counts.iter_mut().zip(Variable::BOTH) {
                if let Some(v) = dataset.observed(var, o.index) {
                    slot.1 += 1;
                    if v == 0.0 {
                        slot.0 += 1;
                    }
                }
            }
        }
        let qualifies = counts
            .iter()
            .all(|&(zeros, n)| n > 0 && (target <= 0.0 || zeros as f64 / n as f64 > target));
        if qualifies {
            return c;
        }
    }
    DEFAULT_WATER_CUT
}

/// Rule toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RuleSwitches {
    pub pair: bool,
    pub water: bool,
    pub saturation: bool,
}

impl Default for RuleSwitches {
    fn default() -> Self {
        RuleSwitches {
            pair: true,
            water: true,
            saturation: true,
        }
    }
}

impl RuleSwitches {
    pub fn none() -> Self {
        RuleSwitches {
            pair: false,
            water: false,
            saturation: false,
        }
    }
}

/// All enabled deductions. Pair deductions take precedence over the water
/// rule for the same (index, variable), since they use observed data.
pub fn collect(dataset: &Dataset, switches: RuleSwitches, water_cut: f64) -> Vec<ForcedPrediction> {
    let mut out = Vec::new();
    if switches.pair {
        out.extend(deduce_from_pair(dataset));
    }
    if switches.water {
        let taken: std::collections::HashSet<(usize, Variable)> =
            out.iter().map(|f| (f.index, f.variable)).collect();
        out.extend(
            deduce_from_water(dataset, water_cut)
                .into_iter()
                .filter(|f| !taken.contains(&(f.index, f.variable))),
        );
    }
    if switches.saturation {
        out.extend(deduce_saturation(dataset));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_thresholds, Observation, Season};
    use crate::geo::GeoConfig;

    fn obs(k: usize, cnt: Option<u64>, ba: Option<f64>, water: f64) -> Observation {
        let mut lc = [0.0; 18];
        lc[17] = water;
        Observation {
            index: k,
            lon: -100.0 + 0.5 * k as f64,
            lat: 40.0,
            month: 7,
            year: 2001,
            area_fraction: 1.0,
            cnt,
            ba,
            land_cover: lc,
            climate: vec![],
            altitude: 0.0,
        }
    }

    fn ds(v: Vec<Observation>) -> Dataset {
        let (c, b) = default_thresholds();
        Dataset::new(v, c, b, GeoConfig::default(), Season::default()).unwrap()
    }

    #[test]
    fn pair_deductions() {
        let d = ds(vec![
            obs(0, None, Some(0.0), 0.0),
            obs(1, None, Some(25.0), 0.0),
            obs(2, None, None, 0.0),
            obs(3, Some(0), None, 0.0),
            obs(4, Some(4), None, 0.0),
        ]);
        let f = deduce_from_pair(&d);
        let kinds: Vec<(usize, Variable, ForcedKind)> = f
            .iter()
            .map(|x| (x.index, x.variable, x.kind.clone()))
            .collect();
        assert_eq!(
            kinds,
            vec![
                (0, Variable::Cnt, ForcedKind::AllOne),
                (1, Variable::Cnt, ForcedKind::ZeroAtZero),
                (3, Variable::Ba, ForcedKind::AllOne),
                (4, Variable::Ba, ForcedKind::ZeroAtZero),
            ]
        );
        let (cu, _) = default_thresholds();
        let mut row = vec![0.4; cu.len()];
        f[1].apply(&mut row, &cu);
        assert_eq!(row[0], 0.0);
        assert!(row[1..].iter().all(|&p| p == 0.4));
        f[0].apply(&mut row, &cu);
        assert!(row.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn water_rule_is_strict() {
        let d = ds(vec![
            obs(0, None, None, 0.95),
            obs(1, None, None, 0.94),
            obs(2, None, Some(1.0), 0.0),
        ]);
        let f = deduce_from_water(&d, 0.94);
        assert_eq!(f.len(), 2);
        assert!(f
            .iter()
            .all(|x| x.index == 0 && x.kind == ForcedKind::AllOne));
    }

    #[test]
    fn pair_beats_water() {
        let d = ds(vec![obs(0, None, Some(30.0), 0.99)]);
        let f = collect(&d, RuleSwitches::default(), 0.94);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, ForcedKind::ZeroAtZero);
    }

    #[test]
    fn water_cut_calibration() {
        let mut v = Vec::new();
        for k in 0..40 {
            let water = 0.5 + k as f64 * 0.0125;
            let fire = water <= 0.9;
            v.push(obs(
                k,
                Some(if fire { 2 } else { 0 }),
                Some(if fire { 5.0 } else { 0.0 }),
                water,
            ));
        }
        let d = ds(v);
        let grid = default_water_grid();
        let cut = calibrate_water_cut(&d, 0.999, &grid);
        // brute-force scan of the grid
        let expected = grid
            .iter()
            .copied()
            .find(|&c| {
                let above: Vec<_> = d.observations().iter().filter(|o| o.water() > c).collect();
                !above.is_empty() && above.iter().all(|o| o.cnt == Some(0) && o.ba == Some(0.0))
            })
            .unwrap();
        assert_eq!(cut, expected);
        assert!(cut <= 0.9);
        assert_eq!(calibrate_water_cut(&d, 0.0, &grid), 0.5);
        let none = ds(vec![obs(0, Some(3), Some(2.0), 0.99)]);
        assert_eq!(calibrate_water_cut(&none, 0.999, &grid), DEFAULT_WATER_CUT);
    }

    #[test]
    fn anomalies_excluded_from_calibration() {
        let d = ds(vec![
            obs(0, Some(0), Some(0.0), 0.97),
            obs(1, Some(2), Some(0.0), 0.98),
        ]);
        assert_eq!(anomalies(&d), vec![1]);
        assert_eq!(calibrate_water_cut(&d, 0.999, &[0.95]), 0.95);
    }

    #[test]
    fn saturation_flags_trailing_thresholds() {
        let mut small = obs(0, None, None, 0.0);
        small.area_fraction = 0.05;
        let d = ds(vec![small, obs(1, None, None, 0.0)]);
        let f = deduce_saturation(&d);
        assert_eq!(f.len(), 1);
        let ForcedKind::TailOne(pos) = &f[0].kind else {
            panic!()
        };
        let cap = d.capacity(0);
        let grid = d.ba_thresholds();
        assert!(pos.iter().all(|&k| grid[k] >= cap));
        assert_eq!(*pos.last().unwrap(), grid.len() - 1);
        assert!(pos.windows(2).all(|w| w[1] == w[0] + 1));
    }
}
