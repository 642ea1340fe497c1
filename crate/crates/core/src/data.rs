//! Observations, datasets, threshold grids and CSV input/output.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{self, CellGeometry, GeoConfig};
use crate::neighborhoods::SpatialIndex;

pub const LAND_COVER_CLASSES: usize = 18;
/// Land-cover class holding the proportion of water, 1-based as in the source data.
pub const WATER_CLASS: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    Cnt,
    Ba,
}

impl Variable {
    pub const BOTH: [Variable; 2] = [Variable::Cnt, Variable::Ba];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Cnt => "CNT",
            Variable::Ba => "BA",
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub index: usize,
    pub lon: f64,
    pub lat: f64,
    pub month: u32,
    pub year: i32,
    pub area_fraction: f64,
    pub cnt: Option<u64>,
    pub ba: Option<f64>,
    pub land_cover: [f64; LAND_COVER_CLASSES],
    pub climate: Vec<f64>,
    pub altitude: f64,
}

impl Observation {
    pub fn water(&self) -> f64 {
        self.land_cover[WATER_CLASS - 1]
    }

    pub fn is_missing(&self, var: Variable) -> bool {
        match var {
            Variable::Cnt => self.cnt.is_none(),
            Variable::Ba => self.ba.is_none(),
        }
    }
}

/// Threshold grid of count thresholds: 0..=9, 10..=30 by 2, 40..=100 by 10.
pub fn default_cnt_thresholds() -> Vec<f64> {
    let mut u: Vec<f64> = (0..10).map(f64::from).collect();
    u.extend((10..=30).step_by(2).map(f64::from));
    u.extend((40..=100).step_by(10).map(f64::from));
    u
}

/// Threshold grid of burnt-area thresholds from 0 to 100 000.
pub fn default_ba_thresholds() -> Vec<f64> {
    let mut u = vec![0.0, 1.0];
    u.extend((10..=100).step_by(10).map(f64::from));
    u.extend([
        150.0, 200.0, 250.0, 300.0, 400.0, 500.0, 1000.0, 1500.0, 2000.0, 5000.0,
    ]);
    u.extend([10_000.0, 20_000.0, 30_000.0, 40_000.0, 50_000.0, 100_000.0]);
    u
}

pub fn default_thresholds() -> (Vec<f64>, Vec<f64>) {
    (default_cnt_thresholds(), default_ba_thresholds())
}

fn strictly_increasing(xs: &[f64]) -> bool {
    !xs.is_empty() && xs.windows(2).all(|w| w[0] < w[1])
}

/// Admissible month and year ranges (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Season {
    pub months: (u32, u32),
    pub years: (i32, i32),
}

impl Default for Season {
    fn default() -> Self {
        Season {
            months: (3, 9),
            years: (1993, 2015),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub lon: String,
    pub lat: String,
    pub month: String,
    pub year: String,
    pub area: String,
    pub cnt: String,
    pub ba: String,
    /// Land-cover columns are `<prefix>1` .. `<prefix>18`.
    pub land_cover_prefix: String,
    /// Explicit climate columns; when empty every column starting with `climate_prefix` is used, in file order.
    pub climate: Vec<String>,
    pub climate_prefix: String,
    pub altitude: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            lon: "lon".into(),
            lat: "lat".into(),
            month: "month".into(),
            year: "year".into(),
            area: "area".into(),
            cnt: "cnt".into(),
            ba: "ba".into(),
            land_cover_prefix: "lc".into(),
            climate: Vec::new(),
            climate_prefix: "clim".into(),
            altitude: "altitude".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    pub columns: ColumnMap,
    pub season: Season,
}

/// Immutable, indexed collection of observations.
#[derive(Debug, Clone)]
pub struct Dataset {
    observations: Vec<Observation>,
    cnt_missing: Vec<usize>,
    ba_missing: Vec<usize>,
    cnt_thresholds: Vec<f64>,
    ba_thresholds: Vec<f64>,
    geo: GeoConfig,
    true_area: Vec<f64>,
    bap: Vec<Option<f64>>,
    climate_names: Vec<String>,
    index: SpatialIndex,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.observations == other.observations
            && self.cnt_thresholds == other.cnt_thresholds
            && self.ba_thresholds == other.ba_thresholds
            && self.geo == other.geo
    }
}

impl Dataset {
    /// Validates every observation, derives the missingness sets, true surface
    /// areas and burnt-area proportions, and builds the spatial index.
    pub fn new(
        mut observations: Vec<Observation>,
        cnt_thresholds: Vec<f64>,
        ba_thresholds: Vec<f64>,
        geo: GeoConfig,
        season: Season,
    ) -> Result<Self> {
        if !strictly_increasing(&cnt_thresholds) || !strictly_increasing(&ba_thresholds) {
            return Err(Error::InvalidInput(
                "threshold grids must be strictly increasing".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(observations.len());
        let mut true_area = Vec::with_capacity(observations.len());
        let mut bap = Vec::with_capacity(observations.len());
        for (i, obs) in observations.iter_mut().enumerate() {
            obs.index = i;
            let row = i + 1;
            validate(obs, &season).map_err(|message| Error::MalformedRow { row, message })?;
            let key = (obs.lon.to_bits(), obs.lat.to_bits(), obs.month, obs.year);
            if !seen.insert(key) {
                return Err(Error::DuplicateKey {
                    row,
                    lon: obs.lon,
                    lat: obs.lat,
                    month: obs.month,
                    year: obs.year,
                });
            }
            let cell = CellGeometry {
                lon_center: obs.lon,
                lat_center: obs.lat,
                lon_width: geo.cell_lon_width,
                lat_height: geo.cell_lat_height,
                area_fraction: obs.area_fraction,
            };
            let area =
                cell.true_surface_area(geo.earth_radius_km)
                    .map_err(|e| Error::MalformedRow {
                        row,
                        message: e.to_string(),
                    })?;
            let p = match obs.ba {
                Some(ba) => Some(
                    geo::to_bap(ba, area, geo.unit_scale)
                        .map_err(|e| Error::MalformedRow {
                            row,
                            message: e.to_string(),
                        })?
                        .value(),
                ),
                None => None,
            };
            true_area.push(area);
            bap.push(p);
        }
        let cnt_missing = observations
            .iter()
            .filter(|o| o.cnt.is_none())
            .map(|o| o.index)
            .collect();
        let ba_missing = observations
            .iter()
            .filter(|o| o.ba.is_none())
            .map(|o| o.index)
            .collect();
        let index = SpatialIndex::build(&observations, geo.earth_radius_km);
        Ok(Dataset {
            observations,
            cnt_missing,
            ba_missing,
            cnt_thresholds,
            ba_thresholds,
            geo,
            true_area,
            bap,
            climate_names: Vec::new(),
            index,
        })
    }

    pub fn with_climate_names(mut self, names: Vec<String>) -> Self {
        self.climate_names = names;
        self
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn get(&self, i: usize) -> &Observation {
        &self.observations[i]
    }

    /// Sorted indices whose value of `var` is missing.
    pub fn missing(&self, var: Variable) -> &[usize] {
        match var {
            Variable::Cnt => &self.cnt_missing,
            Variable::Ba => &self.ba_missing,
        }
    }

    pub fn cnt_thresholds(&self) -> &[f64] {
        &self.cnt_thresholds
    }

    pub fn ba_thresholds(&self) -> &[f64] {
        &self.ba_thresholds
    }

    pub fn thresholds(&self, var: Variable) -> &[f64] {
        match var {
            Variable::Cnt => &self.cnt_thresholds,
            Variable::Ba => &self.ba_thresholds,
        }
    }

    pub fn geo(&self) -> &GeoConfig {
        &self.geo
    }

    pub fn climate_names(&self) -> &[String] {
        &self.climate_names
    }

    /// True surface area of observation `i`'s cell, km².
    pub fn true_area(&self, i: usize) -> f64 {
        self.true_area[i]
    }

    /// Burnt area that would cover the whole cell, in burnt-area units.
    pub fn capacity(&self, i: usize) -> f64 {
        self.true_area[i] * self.geo.unit_scale
    }

    pub fn bap(&self, i: usize) -> Option<f64> {
        self.bap[i]
    }

    /// Value used for model fitting: counts as-is, burnt area as a proportion.
    pub fn model_value(&self, var: Variable, i: usize) -> Option<f64> {
        match var {
            Variable::Cnt => self.observations[i].cnt.map(|c| c as f64),
            Variable::Ba => self.bap[i],
        }
    }

    /// Value on the scale predictions are scored on (raw count or raw burnt area).
    pub fn observed(&self, var: Variable, i: usize) -> Option<f64> {
        match var {
            Variable::Cnt => self.observations[i].cnt.map(|c| c as f64),
            Variable::Ba => self.observations[i].ba,
        }
    }

    pub fn spatial_index(&self) -> &SpatialIndex {
        &self.index
    }

    /// Inclusive range of years present in the data.
    pub fn year_range(&self) -> Option<(i32, i32)> {
        let min = self.observations.iter().map(|o| o.year).min()?;
        let max = self.observations.iter().map(|o| o.year).max()?;
        Some((min, max))
    }
}

fn validate(obs: &Observation, season: &Season) -> std::result::Result<(), String> {
    if !obs.lon.is_finite() || !obs.lat.is_finite() {
        return Err("non-finite coordinate".into());
    }
    if !(-90.0..=90.0).contains(&obs.lat) {
        return Err(format!("latitude {} out of range", obs.lat));
    }
    if !(obs.area_fraction > 0.0 && obs.area_fraction <= 1.0) {
        return Err(format!(
            "area fraction {} outside (0, 1]",
            obs.area_fraction
        ));
    }
    if obs.month < season.months.0 || obs.month > season.months.1 {
        return Err(format!("month {} outside season", obs.month));
    }
    if obs.year < season.years.0 || obs.year > season.years.1 {
        return Err(format!("year {} outside configured range", obs.year));
    }
    if let Some(ba) = obs.ba {
        if !(ba >= 0.0 && ba.is_finite()) {
            return Err(format!("burnt area {ba} must be finite and >= 0"));
        }
    }
    if obs.land_cover.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err("land cover proportions must lie in [0, 1]".into());
    }
    Ok(())
}

fn is_missing_field(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "NA"
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

struct Columns {
    lon: usize,
    lat: usize,
    month: usize,
    year: usize,
    area: usize,
    cnt: usize,
    ba: usize,
    land_cover: Vec<usize>,
    climate: Vec<usize>,
    climate_names: Vec<String>,
    altitude: usize,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, map: &ColumnMap) -> Result<Self> {
        let land_cover = (1..=LAND_COVER_CLASSES)
            .map(|k| column(headers, &format!("{}{}", map.land_cover_prefix, k)))
            .collect::<Result<Vec<_>>>()?;
        let (climate, climate_names) = if map.climate.is_empty() {
            headers
                .iter()
                .enumerate()
                .filter(|(_, h)| h.trim().starts_with(&map.climate_prefix))
                .map(|(i, h)| (i, h.trim().to_string()))
                .unzip()
        } else {
            let idx = map
                .climate
                .iter()
                .map(|c| column(headers, c))
                .collect::<Result<Vec<_>>>()?;
            (idx, map.climate.clone())
        };
        Ok(Columns {
            lon: column(headers, &map.lon)?,
            lat: column(headers, &map.lat)?,
            month: column(headers, &map.month)?,
            year: column(headers, &map.year)?,
            area: column(headers, &map.area)?,
            cnt: column(headers, &map.cnt)?,
            ba: column(headers, &map.ba)?,
            land_cover,
            climate,
            climate_names,
            altitude: column(headers, &map.altitude)?,
        })
    }
}

fn parse_field<V: std::str::FromStr>(
    rec: &csv::StringRecord,
    col: usize,
    name: &str,
    row: usize,
) -> Result<V> {
    let raw = rec.get(col).unwrap_or("").trim();
    raw.parse::<V>().map_err(|_| Error::MalformedRow {
        row,
        message: format!("cannot parse {name} from `{raw}`"),
    })
}

fn parse_optional<V: std::str::FromStr>(
    rec: &csv::StringRecord,
    col: usize,
    name: &str,
    row: usize,
) -> Result<Option<V>> {
    let raw = rec.get(col).unwrap_or("");
    if is_missing_field(raw) {
        Ok(None)
    } else {
        parse_field(rec, col, name, row).map(Some)
    }
}

/// Read a dataset from CSV. Empty fields and `NA` mark missing values; the
/// observation index is the data-row order (0-based), errors report 1-based rows.
pub fn ingest_reader<R: Read>(
    reader: R,
    schema: &Schema,
    geo: GeoConfig,
    thresholds: (Vec<f64>, Vec<f64>),
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns::resolve(&headers, &schema.columns)?;
    let mut observations = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let cnt = match parse_optional::<f64>(&rec, cols.cnt, "cnt", row)? {
            Some(c) if c >= 0.0 && c.fract() == 0.0 && c.is_finite() => Some(c as u64),
            Some(c) => {
                return Err(Error::MalformedRow {
                    row,
                    message: format!("count {c} is not a nonnegative integer"),
                })
            }
            None => None,
        };
        let mut land_cover = [0.0; LAND_COVER_CLASSES];
        for (slot, &c) in land_cover.iter_mut().zip(&cols.land_cover) {
            *slot = parse_field(&rec, c, "land cover", row)?;
        }
        let climate = cols
            .climate
            .iter()
            .map(|&c| parse_field(&rec, c, "climate", row))
            .collect::<Result<Vec<f64>>>()?;
        observations.push(Observation {
            index: k,
            lon: parse_field(&rec, cols.lon, "lon", row)?,
            lat: parse_field(&rec, cols.lat, "lat", row)?,
            month: parse_field(&rec, cols.month, "month", row)?,
            year: parse_field(&rec, cols.year, "year", row)?,
            area_fraction: parse_field(&rec, cols.area, "area", row)?,
            cnt,
            ba: parse_optional(&rec, cols.ba, "ba", row)?,
            land_cover,
            climate,
            altitude: parse_field(&rec, cols.altitude, "altitude", row)?,
        });
    }
    let (cu, bu) = thresholds;
    Ok(Dataset::new(observations, cu, bu, geo, schema.season)?
        .with_climate_names(cols.climate_names))
}

pub fn ingest(
    path: &Path,
    schema: &Schema,
    geo: GeoConfig,
    thresholds: (Vec<f64>, Vec<f64>),
) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(std::io::BufReader::new(file), schema, geo, thresholds)
}

/// Write observations in the default column layout, missing values as `NA`.
pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = ColumnMap::default();
    let n_clim = dataset.observations.first().map_or(0, |o| o.climate.len());
    let clim_names: Vec<String> = if dataset.climate_names.len() == n_clim {
        dataset.climate_names.clone()
    } else {
        (1..=n_clim)
            .map(|k| format!("{}{}", map.climate_prefix, k))
            .collect()
    };
    let mut header = vec![
        map.lon, map.lat, map.month, map.year, map.area, map.cnt, map.ba,
    ];
    header.extend((1..=LAND_COVER_CLASSES).map(|k| format!("{}{}", map.land_cover_prefix, k)));
    header.extend(clim_names);
    header.push(map.altitude);
    w.write_record(&header)?;
    for o in &dataset.observations {
        let mut rec = vec![
            o.lon.to_string(),
            o.lat.to_string(),
            o.month.to_string(),
            o.year.to_string(),
            o.area_fraction.to_string(),
            o.cnt.map_or_else(|| "NA".into(), |c| c.to_string()),
            o.ba.map_or_else(|| "NA".into(), |b| b.to_string()),
        ];
        rec.extend(o.land_cover.iter().map(|v| v.to_string()));
        rec.extend(o.climate.iter().map(|v| v.to_string()));
        rec.push(o.altitude.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<dataset>", e))?;
    Ok(())
}

/// Predicted CDF values for one missing observation, aligned with the table's thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub index: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub variable: Variable,
    pub thresholds: Vec<f64>,
    pub rows: Vec<PredictionRow>,
}

impl PredictionTable {
    pub fn new(variable: Variable, thresholds: Vec<f64>) -> Self {
        PredictionTable {
            variable,
            thresholds,
            rows: Vec::new(),
        }
    }

    /// Checks every row is a valid CDF sample: right length, in [0, 1], non-decreasing.
    pub fn validate(&self) -> Result<()> {
        for row in &self.rows {
            check_cdf_row(&row.probs, self.thresholds.len())?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "threshold", "probability"])?;
        for row in &self.rows {
            for (u, p) in self.thresholds.iter().zip(&row.probs) {
                w.write_record([row.index.to_string(), u.to_string(), p.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<predictions>", e))?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv); rows must be grouped by index with thresholds in order.
    pub fn read_csv<R: Read>(variable: Variable, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut table = PredictionTable::new(variable, Vec::new());
        let mut thresholds_done = false;
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 1;
            let rec = rec.map_err(|e| Error::MalformedRow {
                row,
                message: e.to_string(),
            })?;
            let index: usize = parse_field(&rec, 0, "index", row)?;
            let u: f64 = parse_field(&rec, 1, "threshold", row)?;
            let p: f64 = parse_field(&rec, 2, "probability", row)?;
            match table.rows.last_mut() {
                Some(last) if last.index == index => last.probs.push(p),
                _ => {
                    if !table.rows.is_empty() {
                        thresholds_done = true;
                    }
                    table.rows.push(PredictionRow {
                        index,
                        probs: vec![p],
                    });
                }
            }
            if !thresholds_done {
                table.thresholds.push(u);
            }
        }
        table.validate()?;
        Ok(table)
    }
}

pub(crate) fn check_cdf_row(probs: &[f64], expected_len: usize) -> Result<()> {
    if probs.len() != expected_len {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: expected_len,
        });
    }
    for (k, &p) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        if k > 0 && p < probs[k - 1] {
            return Err(Error::NonMonotone(k));
        }
    }
    Ok(())
}
