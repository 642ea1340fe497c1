//! Synthetic wildfire data with planted marginals, for checks against known truth.
//!
//! Every cell of a patch shares one count distribution and one burnt-area
//! distribution per month and year; patches differ from each other. Two
//! layouts are available:
//!
//! * `patches`: discs of diameter `shared_radius_km` on a hexagonal lattice
//!   `patch_spacing_km` apart. With `ring_width_km` below the disc radius only
//!   an annulus at the rim is kept.
//! * `dumbbells`: each patch is two small blobs whose far edges are
//!   `shared_radius_km` apart. Blobs of other patches sit `patch_spacing_km`
//!   away along rows and between rows, so a ball slightly larger than the
//!   shared radius already reaches several foreign blobs.
//!
//! In both, a closed ball of radius `shared_radius_km` around any cell covers
//! its whole patch and nothing else.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::ba_model::GpdParams;
use crate::count_model::ZinbParams;
use crate::data::{default_thresholds, Dataset, Observation, Season, Variable, LAND_COVER_CLASSES};
use crate::error::{Error, Result};
use crate::geo::{bap_thresholds, haversine_unchecked, GeoConfig, LonLat};

const KM_PER_DEGREE: f64 = 111.195;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Layout {
    /// Width of the occupied annulus at the patch rim; half the shared radius fills the disc.
    Patches {
        ring_width_km: f64,
    },
    Dumbbells {
        blob_radius_km: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub patches_lon: usize,
    pub patches_lat: usize,
    pub patch_spacing_km: f64,
    /// Ground-truth neighbourhood radius, equal to the patch diameter.
    pub shared_radius_km: f64,
    pub layout: Layout,
    pub cell_deg: f64,
    pub months: Vec<u32>,
    pub years: Vec<i32>,
    pub zero_inflation: (f64, f64),
    /// Log-uniform range of the negative binomial mean.
    pub count_mean: (f64, f64),
    pub count_size: (f64, f64),
    /// Log-uniform range of the burnt-area proportion scale.
    pub bap_scale: (f64, f64),
    pub bap_shape: (f64, f64),
    /// 0 keeps a patch's parameters fixed across years, 1 redraws them every year.
    pub year_drift: f64,
    pub missing_rate: f64,
    pub mask_cluster_km: f64,
    /// Share of count-missing observations that are also burnt-area-missing.
    pub overlap: f64,
    pub water_rate: f64,
    pub partial_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            origin_lon: -110.0,
            origin_lat: 38.0,
            patches_lon: 3,
            patches_lat: 3,
            patch_spacing_km: 400.0,
            shared_radius_km: 150.0,
            layout: Layout::Patches {
                ring_width_km: 75.0,
            },
            cell_deg: 0.2,
            months: vec![7],
            years: vec![2001, 2002],
            zero_inflation: (0.05, 0.6),
            count_mean: (0.5, 30.0),
            count_size: (0.5, 4.0),
            bap_scale: (2e-4, 5e-3),
            bap_shape: (0.0, 0.4),
            year_drift: 1.0,
            missing_rate: 0.1,
            mask_cluster_km: 40.0,
            overlap: 0.4,
            water_rate: 0.03,
            partial_rate: 0.1,
        }
    }
}

fn check_range(name: &str, r: (f64, f64), lo: f64, hi: f64) -> Result<()> {
    if !(r.0 >= lo && r.1 <= hi && r.0 <= r.1) {
        return Err(Error::InfeasibleSpec(format!(
            "{name} range {r:?} must lie within [{lo}, {hi}]"
        )));
    }
    Ok(())
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if self.patches_lon == 0 || self.patches_lat == 0 {
            return bad("at least one patch is required".into());
        }
        if !(self.shared_radius_km > 0.0) {
            return bad("shared radius must be positive".into());
        }
        let gap = match self.layout {
            Layout::Patches { ring_width_km } => {
                if !(ring_width_km > 0.0) {
                    return bad("ring width must be positive".into());
                }
                self.patch_spacing_km
            }
            Layout::Dumbbells { blob_radius_km } => {
                if !(blob_radius_km > 0.0 && 4.0 * blob_radius_km < self.shared_radius_km) {
                    return bad(format!(
                        "blob radius {blob_radius_km} km must be positive and below a quarter of the shared radius"
                    ));
                }
                self.patch_spacing_km - 2.0 * blob_radius_km
            }
        };
        if !(gap > self.shared_radius_km) {
            return bad(format!(
                "shared radius {} km does not fit between patches {} km apart",
                self.shared_radius_km, self.patch_spacing_km
            ));
        }
        if !(self.cell_deg > 0.0) || self.cell_deg * KM_PER_DEGREE > self.shared_radius_km {
            return bad(format!(
                "cell size {} deg is not below the shared radius",
                self.cell_deg
            ));
        }
        let top =
            self.origin_lat + (self.patches_lat as f64) * self.patch_spacing_km / KM_PER_DEGREE;
        if self.origin_lat < -80.0 || top > 80.0 {
            return bad("patch lattice extends too close to a pole".into());
        }
        if self.months.is_empty() || self.years.is_empty() {
            return bad("months and years must be nonempty".into());
        }
        if self.months.iter().any(|m| !(1..=12).contains(m)) {
            return bad("months must lie in 1..=12".into());
        }
        check_range("zero_inflation", self.zero_inflation, 0.0, 0.999)?;
        check_range("count_mean", self.count_mean, 1e-3, 1e4)?;
        check_range("count_size", self.count_size, 1e-2, 1e4)?;
        check_range("bap_scale", self.bap_scale, 1e-8, 1.0)?;
        check_range("bap_shape", self.bap_shape, -0.5, 1.0)?;
        for (name, v) in [
            ("year_drift", self.year_drift),
            ("overlap", self.overlap),
            ("water_rate", self.water_rate),
            ("partial_rate", self.partial_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(0.0..0.5).contains(&self.missing_rate) {
            return bad(format!(
                "missing rate {} outside [0, 0.5)",
                self.missing_rate
            ));
        }
        if !(self.mask_cluster_km >= 0.0) {
            return bad("mask cluster radius must be >= 0".into());
        }
        Ok(())
    }

    pub fn season(&self) -> Season {
        Season {
            months: (
                *self.months.iter().min().unwrap_or(&1),
                *self.months.iter().max().unwrap_or(&12),
            ),
            years: (
                *self.years.iter().min().unwrap_or(&0),
                *self.years.iter().max().unwrap_or(&0),
            ),
        }
    }

    pub fn geo(&self) -> GeoConfig {
        GeoConfig {
            cell_lon_width: self.cell_deg,
            cell_lat_height: self.cell_deg,
            ..GeoConfig::default()
        }
    }
}

/// Generating parameters of one patch in one month and year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchParams {
    pub count: ZinbParams<f64>,
    /// Burnt-area proportion of a cell with fire; threshold 0.
    pub bap: GpdParams<f64>,
}

impl PatchParams {
    /// Probability of no fire.
    pub fn zero_probability(&self) -> f64 {
        self.count.pmf(0)
    }

    /// One `(count, burnt-area proportion)` draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, f64) {
        let ZinbParams { pi, mu, r } = self.count;
        if rng.random::<f64>() < pi {
            return (0, 0.0);
        }
        let lambda = Gamma::new(r, mu / r).expect("valid gamma").sample(rng);
        let cnt = if lambda > 0.0 {
            Poisson::new(lambda)
                .map(|p| p.sample(rng) as u64)
                .unwrap_or(0)
        } else {
            0
        };
        if cnt == 0 {
            return (0, 0.0);
        }
        let u: f64 = rng.random();
        let GpdParams { sigma, xi, .. } = self.bap;
        let x = if xi.abs() < 1e-8 {
            -sigma * (1.0 - u).ln()
        } else {
            sigma / xi * ((1.0 - u).powf(-xi) - 1.0)
        };
        (cnt, x.clamp(f64::MIN_POSITIVE, 1.0))
    }

    /// Burnt-area proportion CDF.
    pub fn bap_cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            let z = self.zero_probability();
            z + (1.0 - z) * self.bap.cdf(x).unwrap_or(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub shared_radius_km: f64,
    /// Occupied discs and annuli.
    pub sites: Vec<Site>,
    /// Patch of every observation.
    pub patch_of: Vec<usize>,
    pub water: Vec<bool>,
    pub params: BTreeMap<(usize, u32, i32), PatchParams>,
    /// Hidden values of the missing observations, on the raw scale.
    pub hidden: BTreeMap<Variable, HashMap<usize, f64>>,
}

impl GroundTruth {
    pub fn params_of(&self, dataset: &Dataset, i: usize) -> &PatchParams {
        let o = dataset.get(i);
        &self.params[&(self.patch_of[i], o.month, o.year)]
    }

    /// Generating CDF of observation `i` at the dataset's thresholds.
    pub fn true_cdf_row(&self, dataset: &Dataset, var: Variable, i: usize) -> Vec<f64> {
        let thresholds = dataset.thresholds(var);
        if self.water[i] {
            return vec![1.0; thresholds.len()];
        }
        let p = self.params_of(dataset, i);
        match var {
            Variable::Cnt => p.count.cdf_row(thresholds),
            Variable::Ba => {
                bap_thresholds(thresholds, dataset.true_area(i), dataset.geo().unit_scale)
                    .iter()
                    .map(|t| {
                        if t.forced_one {
                            1.0
                        } else {
                            p.bap_cdf(t.value)
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn write_hidden<W: Write>(&self, out: W) -> Result<()> {
        write_truth(&self.hidden, out)
    }
}

/// `variable,index,value` rows.
pub fn write_truth<W: Write>(
    truth: &BTreeMap<Variable, HashMap<usize, f64>>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variable", "index", "value"])?;
    for (var, values) in truth {
        let mut keys: Vec<_> = values.keys().copied().collect();
        keys.sort_unstable();
        for i in keys {
            w.write_record([
                var.name().to_string(),
                i.to_string(),
                values[&i].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<truth>", e))?;
    Ok(())
}

pub fn read_truth<R: std::io::Read>(input: R) -> Result<BTreeMap<Variable, HashMap<usize, f64>>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out: BTreeMap<Variable, HashMap<usize, f64>> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let bad = |m: &str| Error::MalformedRow {
            row,
            message: m.to_string(),
        };
        let var = match rec.get(0) {
            Some("CNT") => Variable::Cnt,
            Some("BA") => Variable::Ba,
            _ => return Err(bad("variable must be CNT or BA")),
        };
        let index: usize = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad index"))?;
        let value: f64 = rec
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad value"))?;
        out.entry(var).or_default().insert(index, value);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

fn uniform<R: Rng>(rng: &mut R, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..=r.1)
    }
}

fn log_uniform<R: Rng>(rng: &mut R, r: (f64, f64)) -> f64 {
    uniform(rng, (r.0.ln(), r.1.ln())).exp()
}

/// Unconstrained coordinates of a parameter set, for blending across years.
fn draw_raw<R: Rng>(rng: &mut R, spec: &SyntheticSpec) -> [f64; 5] {
    let pi = uniform(rng, spec.zero_inflation);
    [
        pi,
        log_uniform(rng, spec.count_mean).ln(),
        uniform(rng, spec.count_size),
        log_uniform(rng, spec.bap_scale).ln(),
        uniform(rng, spec.bap_shape),
    ]
}

fn to_params(raw: [f64; 5]) -> PatchParams {
    PatchParams {
        count: ZinbParams {
            pi: raw[0],
            mu: raw[1].exp(),
            r: raw[2],
        },
        bap: GpdParams {
            sigma: raw[3].exp(),
            xi: raw[4],
            threshold: 0.0,
        },
    }
}

struct Cell {
    lon: f64,
    lat: f64,
    patch: usize,
    water: bool,
    area_fraction: f64,
    land_cover: [f64; LAND_COVER_CLASSES],
    altitude: f64,
}

/// An occupied disc or annulus of a patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub patch: usize,
    pub lon: f64,
    pub lat: f64,
    pub inner_km: f64,
    pub outer_km: f64,
}

/// Longitude step between two points on one parallel that are `d` km apart.
fn parallel_step(d: f64, lat: f64, radius: f64) -> f64 {
    2.0 * ((d / (2.0 * radius)).sin() / lat.to_radians().cos())
        .asin()
        .to_degrees()
}

fn lay_out_sites(spec: &SyntheticSpec) -> Vec<Site> {
    let radius = spec.geo().earth_radius_km;
    let half = spec.shared_radius_km / 2.0;
    match spec.layout {
        Layout::Patches { ring_width_km } => {
            let row = |lat: f64, shift: f64| -> Vec<(f64, f64)> {
                let dlon = parallel_step(spec.patch_spacing_km, lat, radius);
                (0..spec.patches_lon)
                    .map(|b| (spec.origin_lon + (b as f64 + shift) * dlon, lat))
                    .collect()
            };
            let min_gap = |a: &[(f64, f64)], b: &[(f64, f64)]| -> f64 {
                a.iter()
                    .flat_map(|p| {
                        b.iter().map(move |q| {
                            haversine_unchecked(
                                LonLat::new(p.0, p.1),
                                LonLat::new(q.0, q.1),
                                radius,
                            )
                        })
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            let mut centers: Vec<(f64, f64)> = row(spec.origin_lat, 0.0);
            let mut prev = centers.clone();
            for a in 1..spec.patches_lat {
                let shift = if a % 2 == 1 { 0.5 } else { 0.0 };
                // Lowest latitude keeping every centre at least the spacing away from the row below.
                let (mut lo, mut hi) =
                    (prev[0].1, prev[0].1 + spec.patch_spacing_km / KM_PER_DEGREE);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if min_gap(&row(mid, shift), &prev) >= spec.patch_spacing_km {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                prev = row(hi, shift);
                centers.extend_from_slice(&prev);
            }
            centers
                .into_iter()
                .enumerate()
                .map(|(patch, (lon, lat))| Site {
                    patch,
                    lon,
                    lat,
                    inner_km: (half - ring_width_km).max(0.0),
                    outer_km: half,
                })
                .collect()
        }
        Layout::Dumbbells { blob_radius_km } => {
            let partner = spec.shared_radius_km - 2.0 * blob_radius_km;
            let mut sites = Vec::new();
            for a in 0..spec.patches_lat {
                let lat =
                    spec.origin_lat + (a as f64 * spec.patch_spacing_km / radius).to_degrees();
                let mut lon = spec.origin_lon;
                for b in 0..spec.patches_lon {
                    let patch = a * spec.patches_lon + b;
                    for step in [partner, spec.patch_spacing_km] {
                        sites.push(Site {
                            patch,
                            lon,
                            lat,
                            inner_km: 0.0,
                            outer_km: blob_radius_km,
                        });
                        lon += parallel_step(step, lat, radius);
                    }
                }
            }
            sites
        }
    }
}

fn lay_out_cells<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> (Vec<Site>, Vec<Cell>) {
    let radius = spec.geo().earth_radius_km;
    let sites = lay_out_sites(spec);
    let mut cells = Vec::new();
    for site in &sites {
        let (clon, clat, p) = (site.lon, site.lat, site.patch);
        let span_lat = (site.outer_km / KM_PER_DEGREE / spec.cell_deg).ceil() as i64 + 1;
        let span_lon = (site.outer_km / (KM_PER_DEGREE * clat.to_radians().cos()) / spec.cell_deg)
            .ceil() as i64
            + 1;
        // Cells sit on the global grid so that neighbouring cells never overlap.
        let ilat0 = (clat / spec.cell_deg).round() as i64;
        let ilon0 = (clon / spec.cell_deg).round() as i64;
        for i in -span_lat..=span_lat {
            for j in -span_lon..=span_lon {
                let lat = (ilat0 + i) as f64 * spec.cell_deg;
                let lon = (ilon0 + j) as f64 * spec.cell_deg;
                let d = haversine_unchecked(LonLat::new(lon, lat), LonLat::new(clon, clat), radius);
                if d > site.outer_km || d < site.inner_km {
                    continue;
                }
                let water = rng.random::<f64>() < spec.water_rate;
                let area_fraction = if rng.random::<f64>() < spec.partial_rate {
                    rng.random_range(0.02..0.2)
                } else {
                    1.0
                };
                let mut land_cover = [0.0; LAND_COVER_CLASSES];
                let lc18 = if water {
                    rng.random_range(0.97..=1.0)
                } else {
                    rng.random_range(0.0..0.3)
                };
                let mut weights: Vec<f64> = (0..LAND_COVER_CLASSES - 1)
                    .map(|_| rng.random::<f64>())
                    .collect();
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w *= (1.0 - lc18) / total);
                land_cover[..LAND_COVER_CLASSES - 1].copy_from_slice(&weights);
                land_cover[LAND_COVER_CLASSES - 1] = lc18;
                cells.push(Cell {
                    lon,
                    lat,
                    patch: p,
                    water,
                    area_fraction,
                    land_cover,
                    altitude: rng.random_range(0.0..3000.0),
                });
            }
        }
    }
    (sites, cells)
}

/// Marks clustered observations until `target` are marked. Clusters grow
/// around random seeds within one month/year slice, nearest first.
fn clustered_mask<R: Rng>(
    observations: &[Observation],
    slices: &BTreeMap<(u32, i32), Vec<usize>>,
    eligible: &dyn Fn(usize) -> bool,
    target: usize,
    cluster_km: f64,
    radius: f64,
    rng: &mut R,
) -> HashSet<usize> {
    let mut marked = HashSet::with_capacity(target);
    let mut pool: Vec<usize> = (0..observations.len()).filter(|&i| eligible(i)).collect();
    pool.shuffle(rng);
    for seed in pool {
        if marked.len() >= target {
            break;
        }
        if marked.contains(&seed) {
            continue;
        }
        let s = &observations[seed];
        let at = LonLat::new(s.lon, s.lat);
        let mut near: Vec<(f64, usize)> = slices[&(s.month, s.year)]
            .iter()
            .filter(|&&j| eligible(j) && !marked.contains(&j))
            .map(|&j| {
                (
                    haversine_unchecked(
                        at,
                        LonLat::new(observations[j].lon, observations[j].lat),
                        radius,
                    ),
                    j,
                )
            })
            .filter(|(d, _)| *d <= cluster_km)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, j) in near {
            if marked.len() >= target {
                break;
            }
            marked.insert(j);
        }
    }
    marked
}

/// Generate a dataset and the record of how it was generated.
pub fn synth(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geo = spec.geo();
    let (sites, cells) = lay_out_cells(spec, &mut rng);
    let patches = sites.iter().map(|s| s.patch + 1).max().unwrap_or(0);

    let mut params = BTreeMap::new();
    for p in 0..patches {
        for &m in &spec.months {
            let base = draw_raw(&mut rng, spec);
            for &y in &spec.years {
                let fresh = draw_raw(&mut rng, spec);
                let mut raw = [0.0; 5];
                for k in 0..5 {
                    raw[k] = base[k] + spec.year_drift * (fresh[k] - base[k]);
                }
                params.insert((p, m, y), to_params(raw));
            }
        }
    }

    let mut observations = Vec::new();
    let mut patch_of = Vec::new();
    let mut water = Vec::new();
    let mut values = Vec::new();
    for &y in &spec.years {
        for &m in &spec.months {
            for c in &cells {
                let pp = params[&(c.patch, m, y)];
                let (cnt, bap) = if c.water {
                    (0, 0.0)
                } else {
                    pp.sample(&mut rng)
                };
                let idx = observations.len();
                let clim_noise: f64 = rng.random_range(-1.0..1.0);
                observations.push(Observation {
                    index: idx,
                    lon: c.lon,
                    lat: c.lat,
                    month: m,
                    year: y,
                    area_fraction: c.area_fraction,
                    cnt: Some(cnt),
                    ba: None,
                    land_cover: c.land_cover,
                    climate: vec![
                        290.0 - 0.5 * c.lat + 3.0 * clim_noise,
                        rng.random_range(0.0..5.0),
                    ],
                    altitude: c.altitude,
                });
                patch_of.push(c.patch);
                water.push(c.water);
                values.push(bap);
            }
        }
    }
    // Burnt area from the proportion, through the same area computation the dataset uses.
    let full = Dataset::new(
        observations
            .iter()
            .cloned()
            .map(|mut o| {
                o.ba = Some(0.0);
                o
            })
            .collect(),
        vec![0.0],
        vec![0.0],
        geo,
        spec.season(),
    )?;
    for (i, o) in observations.iter_mut().enumerate() {
        o.ba = Some(values[i] * full.capacity(i));
    }

    let mut slices: BTreeMap<(u32, i32), Vec<usize>> = BTreeMap::new();
    for o in &observations {
        slices.entry((o.month, o.year)).or_default().push(o.index);
    }
    let n = observations.len();
    let radius = geo.earth_radius_km;
    let cnt_target = (spec.missing_rate * n as f64).round() as usize;
    let cnt_val = clustered_mask(
        &observations,
        &slices,
        &|_| true,
        cnt_target,
        spec.mask_cluster_km,
        radius,
        &mut rng,
    );
    let mut cnt_sorted: Vec<usize> = cnt_val.iter().copied().collect();
    cnt_sorted.sort_unstable();
    cnt_sorted.shuffle(&mut rng);
    let shared = (spec.overlap * cnt_sorted.len() as f64).round() as usize;
    let mut ba_val: HashSet<usize> = cnt_sorted[..shared].iter().copied().collect();
    let rest = clustered_mask(
        &observations,
        &slices,
        &|i| !cnt_val.contains(&i),
        cnt_sorted.len() - shared,
        spec.mask_cluster_km,
        radius,
        &mut rng,
    );
    ba_val.extend(rest);

    let mut hidden: BTreeMap<Variable, HashMap<usize, f64>> = BTreeMap::new();
    for o in observations.iter_mut() {
        if cnt_val.contains(&o.index) {
            hidden
                .entry(Variable::Cnt)
                .or_default()
                .insert(o.index, o.cnt.take().unwrap() as f64);
        }
        if ba_val.contains(&o.index) {
            hidden
                .entry(Variable::Ba)
                .or_default()
                .insert(o.index, o.ba.take().unwrap());
        }
    }
    let (cnt_thr, ba_thr) = default_thresholds();
    let dataset = Dataset::new(observations, cnt_thr, ba_thr, geo, spec.season())?
        .with_climate_names(vec!["clim1".into(), "clim2".into()]);
    Ok(SyntheticData {
        dataset,
        truth: GroundTruth {
            shared_radius_km: spec.shared_radius_km,
            sites,
            patch_of,
            water,
            params,
            hidden,
        },
    })
}
