//! Stopping-distance speed cap and interval fusion.
//!
//! Total stopping distance at speed `u` (ft/s) is braking plus reaction plus
//! a time-gap buffer:
//!
//! ```text
//! d(u) = u^2 / (2 mu g) + u * t_reaction + u * k
//! ```
//!
//! The physical cap is the largest speed whose stopping distance fits inside
//! the visible distance, itself capped at the 55 mph design sight distance.
//! `d(u)` is a quadratic with positive coefficients, so the cap has a closed
//! form.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::units::{m_to_ft, mph_to_ft_per_s, FT_PER_S_PER_MPH};

/// Gravitational acceleration, ft/s^2.
pub const G_FT_S2: f64 = 32.174;
/// Stopping sight distance for a 55 mph design speed, ft.
pub const SSD_CAP_FT: f64 = 495.0;
/// Perception-reaction time, s.
pub const DEFAULT_T_REACTION_S: f64 = 2.5;
pub const DEFAULT_V_LAW_MPH: f64 = 55.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams<T> {
    /// Friction coefficient; the station grip reading.
    pub mu: T,
    pub g_ft_s2: T,
    pub t_reaction_s: T,
    /// Extra headway time, s.
    pub k_gap_s: T,
    pub ssd_cap_ft: T,
}

impl<T: Scalar> Default for PhysicsParams<T> {
    fn default() -> Self {
        PhysicsParams {
            mu: T::one(),
            g_ft_s2: T::lit(G_FT_S2),
            t_reaction_s: T::lit(DEFAULT_T_REACTION_S),
            k_gap_s: T::zero(),
            ssd_cap_ft: T::lit(SSD_CAP_FT),
        }
    }
}

impl<T: Scalar> PhysicsParams<T> {
    pub fn with_mu(self, mu: T) -> Self {
        PhysicsParams { mu, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let non_neg = |v: T, what: &str| {
            if v >= T::zero() {
                Ok(())
            } else {
                Err(Error::validation(format!("{what} must be >= 0, got {v}")))
            }
        };
        non_neg(self.mu, "mu")?;
        non_neg(self.t_reaction_s, "t_reaction_s")?;
        non_neg(self.k_gap_s, "k_gap_s")?;
        if !(self.g_ft_s2 > T::zero()) {
            return Err(Error::validation("g must be > 0"));
        }
        if !(self.ssd_cap_ft > T::zero()) {
            return Err(Error::validation("ssd_cap_ft must be > 0"));
        }
        Ok(())
    }
}

/// Total stopping distance in feet from `v` mph.
pub fn stopping_distance_ft<T: Scalar>(v: T, p: &PhysicsParams<T>) -> Result<T> {
    p.validate()?;
    let u = mph_to_ft_per_s(v)?;
    if u == T::zero() {
        return Ok(T::zero());
    }
    if !(p.mu > T::zero()) {
        return Err(Error::Domain(format!(
            "braking distance is unbounded with mu = {} at {v} mph",
            p.mu
        )));
    }
    Ok(u * u / (T::lit(2.0) * p.mu * p.g_ft_s2) + u * p.t_reaction_s + u * p.k_gap_s)
}

/// Station visibility converted to feet and capped.
pub fn visible_distance_ft<T: Scalar>(visibility_m: T, p: &PhysicsParams<T>) -> Result<T> {
    Ok(m_to_ft(visibility_m)?.min(p.ssd_cap_ft))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingConstraint {
    Visibility,
    SsdCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeResult<T> {
    pub v_phys_mph: T,
    pub d_visible_ft: T,
    pub binding_constraint: BindingConstraint,
}

/// Largest speed (mph) that can stop within the visible distance.
///
/// `p.mu` is ignored in favor of `mu`. Zero friction or zero visibility
/// yields a cap of 0.
pub fn solve_v_phys<T: Scalar>(
    mu: T,
    visibility_m: T,
    p: &PhysicsParams<T>,
) -> Result<EnvelopeResult<T>> {
    if !(mu >= T::zero() && mu <= T::one()) {
        return Err(Error::validation(format!("grip {mu} outside [0, 1]")));
    }
    let p = p.with_mu(mu);
    p.validate()?;
    let raw_ft = m_to_ft(visibility_m)?;
    let d = raw_ft.min(p.ssd_cap_ft);
    let binding = if raw_ft < p.ssd_cap_ft {
        BindingConstraint::Visibility
    } else {
        BindingConstraint::SsdCap
    };
    let u = if mu == T::zero() || d == T::zero() {
        T::zero()
    } else {
        // Root of a u^2 + b u - d = 0 with a = 1/(2 mu g), in the
        // cancellation-free form 2d / (b + sqrt(b^2 + 4ad)).
        let a = T::one() / (T::lit(2.0) * mu * p.g_ft_s2);
        let b = p.t_reaction_s + p.k_gap_s;
        T::lit(2.0) * d / (b + (b * b + T::lit(4.0) * a * d).sqrt())
    };
    Ok(EnvelopeResult {
        v_phys_mph: u / T::lit(FT_PER_S_PER_MPH),
        d_visible_ft: d,
        binding_constraint: binding,
    })
}

/// A recommended speed range with the components it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedInterval<T> {
    pub v_low: T,
    pub v_high: T,
    pub q25: T,
    pub q75: T,
    pub v_phys: T,
    pub v_law: T,
}

impl<T: Scalar> SpeedInterval<T> {
    /// True when the lower quantile sat above the cap and the interval
    /// degenerated to a single speed.
    pub fn is_collapsed(&self) -> bool {
        self.q25 > self.v_high
    }

    pub fn width(&self) -> T {
        self.v_high - self.v_low
    }
}

/// Caps the model interquartile range by the physical and legal limits:
/// `v_high = min(q75, v_phys, v_law)`, `v_low = min(q25, v_high)`.
pub fn fuse<T: Scalar>(q25: T, q75: T, v_phys: T, v_law: T) -> Result<SpeedInterval<T>> {
    for (v, name) in [
        (q25, "q25"),
        (q75, "q75"),
        (v_phys, "v_phys"),
        (v_law, "v_law"),
    ] {
        if !(v >= T::zero()) || !v.is_finite() {
            return Err(Error::validation(format!(
                "{name} must be finite and >= 0, got {v}"
            )));
        }
    }
    if q25 > q75 {
        return Err(Error::validation(format!("q25 {q25} exceeds q75 {q75}")));
    }
    let v_high = q75.min(v_phys).min(v_law);
    Ok(SpeedInterval {
        v_low: q25.min(v_high),
        v_high,
        q25,
        q75,
        v_phys,
        v_law,
    })
}
