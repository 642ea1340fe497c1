//! Neighbourhood index sets: spatial balls within one month/year slice,
//! year-window extensions, and covariate-cluster restrictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation, Variable};
use crate::geo::{haversine_unchecked, LonLat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum NeighborhoodSpec {
    Spatial {
        radius_km: f64,
    },
    Temporal {
        radius_km: f64,
        year_half_width: u32,
    },
    /// `covariate` indexes the observation's climate vector.
    Cluster {
        radius_km: f64,
        covariate: usize,
    },
}

impl NeighborhoodSpec {
    pub fn radius_km(&self) -> f64 {
        match *self {
            NeighborhoodSpec::Spatial { radius_km }
            | NeighborhoodSpec::Temporal { radius_km, .. }
            | NeighborhoodSpec::Cluster { radius_km, .. } => radius_km,
        }
    }

    pub fn with_radius(self, radius_km: f64) -> Self {
        match self {
            NeighborhoodSpec::Spatial { .. } => NeighborhoodSpec::Spatial { radius_km },
            NeighborhoodSpec::Temporal {
                year_half_width, ..
            } => NeighborhoodSpec::Temporal {
                radius_km,
                year_half_width,
            },
            NeighborhoodSpec::Cluster { covariate, .. } => NeighborhoodSpec::Cluster {
                radius_km,
                covariate,
            },
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            NeighborhoodSpec::Spatial { .. } => "spatial",
            NeighborhoodSpec::Temporal { .. } => "temporal",
            NeighborhoodSpec::Cluster { .. } => "cluster",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterFlag {
    /// Fewer than two members; nothing to split.
    TooSmall,
    /// Covariate constant over the members; all kept.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub center: usize,
    /// Ascending observation ids; missing-value members are kept.
    pub members: Vec<usize>,
    pub flag: Option<ClusterFlag>,
}

impl Neighborhood {
    /// Non-missing model values of `var` over the members, skipping `exclude`.
    pub fn sample(&self, dataset: &Dataset, var: Variable, exclude: Option<usize>) -> Vec<f64> {
        self.members
            .iter()
            .filter(|&&j| Some(j) != exclude)
            .filter_map(|&j| dataset.model_value(var, j))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    lat: f64,
    lon: f64,
    id: usize,
}

/// Per-(month, year) buckets sorted by latitude; queries prefilter on a
/// latitude band and confirm with the exact haversine distance.
#[derive(Debug, Clone, Default)]
pub struct SpatialIndex {
    buckets: BTreeMap<(u32, i32), Vec<Entry>>,
    radius_km: f64,
}

impl SpatialIndex {
    pub fn build(observations: &[Observation], radius_km: f64) -> Self {
        let mut buckets: BTreeMap<(u32, i32), Vec<Entry>> = BTreeMap::new();
        for o in observations {
            buckets.entry((o.month, o.year)).or_default().push(Entry {
                lat: o.lat,
                lon: o.lon,
                id: o.index,
            });
        }
        for v in buckets.values_mut() {
            v.sort_by(|a, b| a.lat.total_cmp(&b.lat).then(a.id.cmp(&b.id)));
        }
        SpatialIndex { buckets, radius_km }
    }

    pub fn earth_radius_km(&self) -> f64 {
        self.radius_km
    }

    /// Ids in the slice within `max_km` (closed ball), appended unsorted to `out`.
    fn query_slice(
        &self,
        at: LonLat<f64>,
        month: u32,
        year: i32,
        max_km: f64,
        out: &mut Vec<usize>,
    ) {
        let Some(bucket) = self.buckets.get(&(month, year)) else {
            return;
        };
        // Great-circle distance is at least R·|Δφ|.
        let band = (max_km / self.radius_km).to_degrees() + 1e-9;
        let lo = bucket.partition_point(|e| e.lat < at.lat - band);
        let hi = bucket.partition_point(|e| e.lat <= at.lat + band);
        for e in &bucket[lo..hi] {
            if haversine_unchecked(at, LonLat::new(e.lon, e.lat), self.radius_km) <= max_km {
                out.push(e.id);
            }
        }
    }

    /// Ids within `max_km` of `at` in the given month over `years`, ascending.
    pub fn query(
        &self,
        at: LonLat<f64>,
        month: u32,
        years: std::ops::RangeInclusive<i32>,
        max_km: f64,
    ) -> Vec<usize> {
        let mut out = Vec::new();
        for y in years {
            self.query_slice(at, month, y, max_km, &mut out);
        }
        out.sort_unstable();
        out
    }

    /// Ids of the (month, year) slice, ascending.
    pub fn slice(&self, month: u32, year: i32) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .buckets
            .get(&(month, year))
            .map(|b| b.iter().map(|e| e.id).collect())
            .unwrap_or_default();
        ids.sort_unstable();
        ids
    }

    pub fn slices(&self) -> impl Iterator<Item = (u32, i32)> + '_ {
        self.buckets.keys().copied()
    }
}

fn location(o: &Observation) -> LonLat<f64> {
    LonLat::new(o.lon, o.lat)
}

pub fn spatial_neighborhood(dataset: &Dataset, i: usize, radius_km: f64) -> Neighborhood {
    let o = dataset.get(i);
    Neighborhood {
        center: i,
        members: dataset
            .spatial_index()
            .query(location(o), o.month, o.year..=o.year, radius_km),
        flag: None,
    }
}

/// Spatial ball pooled over `year ± year_half_width`, truncated to the years present.
pub fn temporal_neighborhood(
    dataset: &Dataset,
    i: usize,
    radius_km: f64,
    year_half_width: u32,
) -> Neighborhood {
    let o = dataset.get(i);
    let (ymin, ymax) = dataset.year_range().unwrap_or((o.year, o.year));
    let k = year_half_width as i32;
    let years = (o.year - k).max(ymin)..=(o.year + k).min(ymax);
    Neighborhood {
        center: i,
        members: dataset
            .spatial_index()
            .query(location(o), o.month, years, radius_km),
        flag: None,
    }
}

/// Spatial ball restricted to the members sharing the centre's cluster after a
/// two-way split of the standardised covariate.
pub fn cluster_neighborhood(
    dataset: &Dataset,
    i: usize,
    radius_km: f64,
    covariate: usize,
) -> Neighborhood {
    let mut nb = spatial_neighborhood(dataset, i, radius_km);
    if nb.members.len() < 2 {
        nb.flag = Some(ClusterFlag::TooSmall);
        return nb;
    }
    let values: Vec<f64> = nb
        .members
        .iter()
        .map(|&j| {
            dataset
                .get(j)
                .climate
                .get(covariate)
                .copied()
                .unwrap_or(f64::NAN)
        })
        .collect();
    match bisect_standardized(&values) {
        Some(assign) => {
            let center_pos = nb.members.binary_search(&i).ok();
            let center_cluster = match center_pos {
                Some(p) => assign[p],
                None => {
                    // Centre always lies in its own ball; guard against NaN coordinates anyway.
                    nb.flag = Some(ClusterFlag::Degenerate);
                    return nb;
                }
            };
            nb.members = nb
                .members
                .iter()
                .zip(&assign)
                .filter(|(_, &c)| c == center_cluster)
                .map(|(&j, _)| j)
                .collect();
        }
        None => nb.flag = Some(ClusterFlag::Degenerate),
    }
    nb
}

pub fn neighborhood(dataset: &Dataset, i: usize, spec: &NeighborhoodSpec) -> Neighborhood {
    match *spec {
        NeighborhoodSpec::Spatial { radius_km } => spatial_neighborhood(dataset, i, radius_km),
        NeighborhoodSpec::Temporal {
            radius_km,
            year_half_width,
        } => temporal_neighborhood(dataset, i, radius_km, year_half_width),
        NeighborhoodSpec::Cluster {
            radius_km,
            covariate,
        } => cluster_neighborhood(dataset, i, radius_km, covariate),
    }
}

/// Two-cluster split of a 1-D covariate after standardisation.
///
/// Returns `true`/`false` labels (`true` = upper cluster) minimising the total
/// within-cluster sum of squares, found exactly by scanning every cut between
/// distinct sorted values. `None` if the values are constant or non-finite.
pub fn bisect_standardized(values: &[f64]) -> Option<Vec<bool>> {
    let n = values.len();
    if n < 2 || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    if !(sd > 0.0) {
        return None;
    }
    let z: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));

    let total: f64 = z.iter().sum();
    let total_sq: f64 = z.iter().map(|v| v * v).sum();
    let mut left_sum = 0.0;
    let mut left_sq = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for k in 1..n {
        let v = z[order[k - 1]];
        left_sum += v;
        left_sq += v * v;
        if z[order[k]] == v {
            continue;
        }
        let (nl, nr) = (k as f64, (n - k) as f64);
        let right_sum = total - left_sum;
        let right_sq = total_sq - left_sq;
        let sse = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
        if best.is_none_or(|(b, _)| sse < b) {
            best = Some((sse, k));
        }
    }
    let (_, cut) = best?;
    let mut labels = vec![false; n];
    for &idx in &order[cut..] {
        labels[idx] = true;
    }
    Some(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_thresholds, Season};
    use crate::geo::GeoConfig;

    pub(crate) fn obs(
        index: usize,
        lon: f64,
        lat: f64,
        month: u32,
        year: i32,
        clim: f64,
    ) -> Observation {
        Observation {
            index,
            lon,
            lat,
            month,
            year,
            area_fraction: 1.0,
            cnt: Some(index as u64 % 3),
            ba: Some(0.0),
            land_cover: [0.0; 18],
            climate: vec![clim],
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

    fn brute(d: &Dataset, i: usize, r: f64, years: std::ops::RangeInclusive<i32>) -> Vec<usize> {
        let c = d.get(i);
        d.observations()
            .iter()
            .filter(|o| o.month == c.month && years.contains(&o.year))
            .filter(|o| {
                haversine_unchecked(
                    LonLat::new(c.lon, c.lat),
                    LonLat::new(o.lon, o.lat),
                    d.geo().earth_radius_km,
                ) <= r
            })
            .map(|o| o.index)
            .collect()
    }

    /// Regular grid spaced ≈55 km in both directions around 40°N.
    fn grid_55km() -> Dataset {
        let r = GeoConfig::default().earth_radius_km;
        let dlat = (55.0 / r).to_degrees();
        let dlon = dlat / 40f64.to_radians().cos();
        let mut v = Vec::new();
        for a in 0..5 {
            for b in 0..5 {
                v.push(obs(
                    v.len(),
                    -100.0 + a as f64 * dlon,
                    40.0 + (b as f64 - 2.0) * dlat,
                    7,
                    2000,
                    0.0,
                ));
            }
        }
        dataset(v)
    }

    #[test]
    fn zero_radius_is_colocated_only() {
        let d = grid_55km();
        assert_eq!(spatial_neighborhood(&d, 12, 0.0).members, vec![12]);
    }

    #[test]
    fn axial_but_not_diagonal_neighbours() {
        let d = grid_55km();
        let nb = spatial_neighborhood(&d, 12, 60.0);
        assert_eq!(nb.members, brute(&d, 12, 60.0, 2000..=2000));
        assert_eq!(nb.members, vec![7, 11, 12, 13, 17]);
        let c = d.get(12);
        let diag = d.get(18);
        let dd = haversine_unchecked(
            LonLat::new(c.lon, c.lat),
            LonLat::new(diag.lon, diag.lat),
            6378.137,
        );
        assert!(dd > 60.0 && dd < 80.0, "{dd}");
    }

    #[test]
    fn half_circumference_covers_slice() {
        let d = grid_55km();
        assert_eq!(spatial_neighborhood(&d, 0, 20015.0).members.len(), 25);
        assert_eq!(spatial_neighborhood(&d, 0, 20037.6).members.len(), 25);
    }

    fn multi_year() -> Dataset {
        let mut v = Vec::new();
        for year in 1993..=2001 {
            for k in 0..6 {
                v.push(obs(v.len(), -100.0 + 0.5 * k as f64, 40.0, 7, year, 0.0));
                v.push(obs(v.len(), -100.0 + 0.5 * k as f64, 40.0, 8, year, 0.0));
            }
        }
        dataset(v)
    }

    #[test]
    fn temporal_examples() {
        let d = multi_year();
        let centre = d
            .observations()
            .iter()
            .position(|o| o.year == 1997 && o.month == 7)
            .unwrap();
        assert_eq!(
            temporal_neighborhood(&d, centre, 100.0, 0),
            spatial_neighborhood(&d, centre, 100.0)
        );
        let t1 = temporal_neighborhood(&d, centre, 100.0, 1);
        assert_eq!(t1.members, brute(&d, centre, 100.0, 1996..=1998));
        let first = d
            .observations()
            .iter()
            .position(|o| o.year == 1993 && o.month == 7)
            .unwrap();
        let t6 = temporal_neighborhood(&d, first, 1000.0, 6);
        let years: std::collections::BTreeSet<i32> =
            t6.members.iter().map(|&j| d.get(j).year).collect();
        assert_eq!(
            years.into_iter().collect::<Vec<_>>(),
            (1993..=1999).collect::<Vec<_>>()
        );
    }

    /// Exhaustive search over all 2-partitions for the minimum within-cluster SSE.
    fn brute_bisect(values: &[f64]) -> f64 {
        let n = values.len();
        let sse = |idx: &[usize]| {
            if idx.is_empty() {
                return 0.0;
            }
            let m = idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64;
            idx.iter().map(|&i| (values[i] - m).powi(2)).sum::<f64>()
        };
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let (a, b): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| mask & (1 << i) != 0);
            best = best.min(sse(&a) + sse(&b));
        }
        best
    }

    #[test]
    fn bisection_matches_exhaustive_partition() {
        let cases: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0, 0.0, 10.0, 10.0, 10.0],
            vec![1.0, 2.0, 3.5, 7.0, 7.5, 20.0, -3.0],
            vec![5.0, 1.0, 1.0, 1.2, 9.0, 9.5, 9.1, 4.0],
        ];
        for v in cases {
            let labels = bisect_standardized(&v).unwrap();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let sd =
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt();
            let z: Vec<f64> = v.iter().map(|x| (x - mean) / sd).collect();
            let group_sse = |flag: bool| {
                let g: Vec<f64> = z
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == flag)
                    .map(|(x, _)| *x)
                    .collect();
                let m = g.iter().sum::<f64>() / g.len() as f64;
                g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
            };
            let got = group_sse(true) + group_sse(false);
            assert!((got - brute_bisect(&z)).abs() < 1e-9);
        }
        assert!(bisect_standardized(&[3.0, 3.0, 3.0]).is_none());
    }

    #[test]
    fn cluster_examples() {
        let clim = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        let v: Vec<Observation> = clim
            .iter()
            .enumerate()
            .map(|(k, &c)| obs(k, -100.0 + 0.1 * k as f64, 40.0, 7, 2000, c))
            .collect();
        let d = dataset(v);
        let nb = cluster_neighborhood(&d, 1, 200.0, 0);
        assert_eq!(nb.members, vec![0, 1, 2]);
        assert_eq!(nb.flag, None);

        let flat: Vec<Observation> = (0..4)
            .map(|k| obs(k, -100.0 + 0.1 * k as f64, 40.0, 7, 2000, 2.0))
            .collect();
        let d = dataset(flat);
        let nb = cluster_neighborhood(&d, 0, 200.0, 0);
        assert_eq!(nb.members.len(), 4);
        assert_eq!(nb.flag, Some(ClusterFlag::Degenerate));

        let pair = vec![
            obs(0, -100.0, 40.0, 7, 2000, 1.0),
            obs(1, -100.1, 40.0, 7, 2000, 5.0),
        ];
        let d = dataset(pair);
        assert_eq!(cluster_neighborhood(&d, 0, 200.0, 0).members, vec![0]);

        let lone = vec![
            obs(0, -100.0, 40.0, 7, 2000, 1.0),
            obs(1, -90.0, 40.0, 7, 2000, 5.0),
        ];
        let d = dataset(lone);
        let nb = cluster_neighborhood(&d, 0, 10.0, 0);
        assert_eq!(
            (nb.members, nb.flag),
            (vec![0], Some(ClusterFlag::TooSmall))
        );
    }

    #[test]
    fn sample_skips_missing_and_excluded() {
        let mut v: Vec<Observation> = (0..4)
            .map(|k| obs(k, -100.0 + 0.1 * k as f64, 40.0, 7, 2000, 0.0))
            .collect();
        v[2].cnt = None;
        let d = dataset(v);
        let nb = spatial_neighborhood(&d, 0, 100.0);
        assert_eq!(nb.members, vec![0, 1, 2, 3]);
        assert_eq!(nb.sample(&d, Variable::Cnt, Some(3)), vec![0.0, 1.0]);
    }
}
