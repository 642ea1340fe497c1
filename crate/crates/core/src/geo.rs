//! Great-circle distances, spherical grid-cell areas and burnt-area rescaling.
//!
//! Burnt area is only comparable across cells once it is expressed as a
//! proportion of the land actually inside the study region (`BAP`). The cell
//! surface follows from the spherical zone formula `R²·Δλ·(sin φ₂ − sin φ₁)`,
//! scaled by the fraction of the cell that lies in the region.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{lit, Real};

pub const DEFAULT_EARTH_RADIUS_KM: f64 = 6378.137;
/// Acres per square kilometre.
pub const DEFAULT_UNIT_SCALE: f64 = 247.105381;
const BAP_CLAMP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoConfig {
    pub earth_radius_km: f64,
    /// Burnt-area units per km².
    pub unit_scale: f64,
    pub cell_lon_width: f64,
    pub cell_lat_height: f64,
}

impl Default for GeoConfig {
    fn default() -> Self {
        GeoConfig {
            earth_radius_km: DEFAULT_EARTH_RADIUS_KM,
            unit_scale: DEFAULT_UNIT_SCALE,
            cell_lon_width: 0.5,
            cell_lat_height: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LonLat<T> {
    pub lon: T,
    pub lat: T,
}

impl<T: Real> LonLat<T> {
    pub fn new(lon: T, lat: T) -> Self {
        LonLat { lon, lat }
    }
}

/// Haversine distance without input validation; callers guarantee finite degrees.
#[inline]
pub fn haversine_unchecked<T: Real>(a: LonLat<T>, b: LonLat<T>, radius_km: T) -> T {
    let half = lit::<T>(0.5);
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let s1 = (dphi * half).sin();
    let s2 = (dlambda * half).sin();
    let h = s1 * s1 + phi1.cos() * phi2.cos() * s2 * s2;
    let h = h.min(T::one()).max(T::zero());
    lit::<T>(2.0) * radius_km * h.sqrt().asin()
}

pub fn haversine_km<T: Real>(a: LonLat<T>, b: LonLat<T>, radius_km: T) -> Result<T> {
    let all = [a.lon, a.lat, b.lon, b.lat, radius_km];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "non-finite coordinate or radius".into(),
        ));
    }
    if radius_km <= T::zero() {
        return Err(Error::InvalidInput("earth radius must be positive".into()));
    }
    Ok(haversine_unchecked(a, b, radius_km))
}

/// A longitude/latitude grid cell, possibly only partly inside the study region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry<T> {
    pub lon_center: T,
    pub lat_center: T,
    pub lon_width: T,
    pub lat_height: T,
    /// Fraction of the cell inside the region, in (0, 1].
    pub area_fraction: T,
}

impl<T: Real> CellGeometry<T> {
    pub fn total_surface_area(&self, radius_km: T) -> Result<T> {
        zone_area(
            self.lon_center,
            self.lat_center,
            self.lon_width,
            self.lat_height,
            radius_km,
        )
    }

    pub fn true_surface_area(&self, radius_km: T) -> Result<T> {
        if !(self.area_fraction > T::zero() && self.area_fraction <= T::one()) {
            return Err(Error::InvalidInput(format!(
                "area fraction {} outside (0, 1]",
                self.area_fraction
            )));
        }
        Ok(self.total_surface_area(radius_km)? * self.area_fraction)
    }
}

/// Surface of the spherical quadrangle centred at (`lon_center`, `lat_center`), km².
pub fn zone_area<T: Real>(
    _lon_center: T,
    lat_center: T,
    lon_width: T,
    lat_height: T,
    radius_km: T,
) -> Result<T> {
    if !(lon_width > T::zero() && lat_height > T::zero() && radius_km > T::zero()) {
        return Err(Error::InvalidInput(
            "cell widths and radius must be positive".into(),
        ));
    }
    if !lat_center.is_finite() {
        return Err(Error::InvalidInput("non-finite latitude".into()));
    }
    let half = lat_height * lit(0.5);
    let lo = lat_center - half;
    let hi = lat_center + half;
    let ninety = lit::<T>(90.0);
    let eps = lit::<T>(1e-9);
    if lo < -ninety - eps || hi > ninety + eps {
        return Err(Error::InvalidInput(format!(
            "cell spanning latitudes [{lo}, {hi}] crosses a pole"
        )));
    }
    let lo = lo.max(-ninety);
    let hi = hi.min(ninety);
    let dlambda = lon_width.min(lit(360.0)).to_radians();
    Ok(radius_km * radius_km * dlambda * (hi.to_radians().sin() - lo.to_radians().sin()))
}

/// Burnt-area proportion of a cell, in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BapValue<T>(T);

impl<T: Real> BapValue<T> {
    pub fn value(self) -> T {
        self.0
    }
}

/// Convert a burnt area into a proportion of the cell's capacity
/// (`true_area_km2 × unit_scale`, in burnt-area units).
pub fn to_bap<T: Real>(ba: T, true_area_km2: T, unit_scale: T) -> Result<BapValue<T>> {
    if !(ba >= T::zero()) || !ba.is_finite() {
        return Err(Error::InvalidInput(format!(
            "burnt area {ba} must be finite and >= 0"
        )));
    }
    if !(true_area_km2 > T::zero() && unit_scale > T::zero()) {
        return Err(Error::InvalidInput(
            "surface area and unit scale must be positive".into(),
        ));
    }
    let capacity = true_area_km2 * unit_scale;
    let ratio = ba / capacity;
    if ratio <= T::one() {
        return Ok(BapValue(ratio));
    }
    if ratio <= T::one() + lit(BAP_CLAMP_TOLERANCE) {
        warn!("burnt-area proportion {ratio} above 1 from rounding, clamped");
        return Ok(BapValue(T::one()));
    }
    Err(Error::BapOutOfRange {
        ba: crate::num::to_f64(ba),
        capacity: crate::num::to_f64(capacity),
        ratio: crate::num::to_f64(ratio),
    })
}

/// One burnt-area threshold re-expressed on the proportion scale of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BapThreshold<T> {
    pub value: T,
    /// `value ≥ 1`: the proportion can never exceed it, so its CDF is 1.
    pub forced_one: bool,
}

pub fn bap_thresholds<T: Real>(
    ba_grid: &[T],
    true_area_km2: T,
    unit_scale: T,
) -> Vec<BapThreshold<T>> {
    let capacity = true_area_km2 * unit_scale;
    ba_grid
        .iter()
        .map(|&u| {
            let value = u / capacity;
            BapThreshold {
                value,
                forced_one: u > T::zero() && value >= T::one(),
            }
        })
        .collect()
}
