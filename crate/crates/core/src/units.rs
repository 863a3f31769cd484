//! The four unit conversions the pipeline needs.
//!
//! Internal units are mph, feet and seconds. Conversion happens once, at
//! ingestion (km/h from the vehicle feed, meters from the weather station) and
//! at the physics boundary (mph to ft/s).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Miles per hour in one km/h, fixed to 6 decimal places.
pub const MPH_PER_KMH: f64 = 0.621371;
/// Feet in one meter.
pub const FT_PER_M: f64 = 3.28084;
/// Feet per second in one mph.
pub const FT_PER_S_PER_MPH: f64 = 1.466667;

fn non_negative<T: Scalar>(v: T, what: &str) -> Result<T> {
    if v.is_nan() || v < T::zero() {
        return Err(Error::validation(format!("{what} must be >= 0, got {v}")));
    }
    Ok(v)
}

pub fn kmh_to_mph<T: Scalar>(v: T) -> Result<T> {
    Ok(non_negative(v, "speed (km/h)")? * T::lit(MPH_PER_KMH))
}

pub fn mph_to_kmh<T: Scalar>(v: T) -> Result<T> {
    Ok(non_negative(v, "speed (mph)")? / T::lit(MPH_PER_KMH))
}

pub fn m_to_ft<T: Scalar>(d: T) -> Result<T> {
    Ok(non_negative(d, "distance (m)")? * T::lit(FT_PER_M))
}

pub fn mph_to_ft_per_s<T: Scalar>(v: T) -> Result<T> {
    Ok(non_negative(v, "speed (mph)")? * T::lit(FT_PER_S_PER_MPH))
}
