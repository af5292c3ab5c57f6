//! Microspine/asperity engagement and grip capacity.
//!
//! A spine of tip radius `r_s` catches an asperity of radius `r_a` only when
//! `r_a ≥ r_s` and the asperity's normal angle clears
//! `θ_min = θ_load + arccot μ`. A caught spine carries at most
//! `f_max = κ R²`, `1/R = 1/r_s + 1/r_a`, where the material constant is
//! `κ = (π σ_max / (1 - 2μ))³ / (2 E²)` unless overridden.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::terrain::Asperity;

#[derive(Debug, Error, PartialEq)]
pub enum GripError {
    #[error("invalid spine spec: {0}")]
    InvalidSpine(String),
    #[error("radii must be positive (spine {spine}, asperity {asperity})")]
    NonPositiveRadius { spine: f64, asperity: f64 },
    #[error("spine array is empty")]
    EmptyArray,
    #[error("invalid capacity band [{min}, {max}]")]
    InvalidBand { min: f64, max: f64 },
}

/// Geometry and material of one microspine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpineSpec {
    /// Tip radius `r_s`, m.
    pub tip_radius: f64,
    /// Shaft diameter, m.
    pub shaft_diameter: f64,
    /// Load angle from the wall `θ_load`, rad.
    pub load_angle: f64,
    /// Steel-on-rock friction coefficient `μ`.
    pub friction_coeff: f64,
    /// Hook tensile strength `σ_max`, Pa.
    pub tensile_strength: f64,
    /// Elastic modulus `E`, Pa.
    pub elastic_modulus: f64,
    /// Overrides the derived material constant `κ` (N/m²) when set.
    #[serde(default)]
    pub load_constant: Option<f64>,
}

impl Default for SpineSpec {
    /// A 20 μm stainless hook loaded at 5° with μ = 0.2.
    fn default() -> Self {
        Self {
            tip_radius: 20e-6,
            shaft_diameter: 250e-6,
            load_angle: 5f64.to_radians(),
            friction_coeff: 0.2,
            tensile_strength: 1.0e9,
            elastic_modulus: 200e9,
            load_constant: None,
        }
    }
}

impl SpineSpec {
    pub fn validate(&self) -> Result<(), GripError> {
        let positive = [
            ("tip_radius", self.tip_radius),
            ("shaft_diameter", self.shaft_diameter),
            ("friction_coeff", self.friction_coeff),
            ("tensile_strength", self.tensile_strength),
            ("elastic_modulus", self.elastic_modulus),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(GripError::InvalidSpine(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.load_angle > 0.0 && self.load_angle < std::f64::consts::FRAC_PI_2) {
            return Err(GripError::InvalidSpine(format!(
                "load_angle must lie in (0, π/2), got {}",
                self.load_angle
            )));
        }
        if let Some(k) = self.load_constant {
            if !(k > 0.0) || !k.is_finite() {
                return Err(GripError::InvalidSpine(format!("load_constant must be positive, got {k}")));
            }
        }
        Ok(())
    }

    /// Critical asperity normal angle for this spine, rad.
    pub fn theta_min(&self) -> f64 {
        theta_min(self.load_angle, self.friction_coeff)
    }

    /// Material constant `κ` such that `f_max = κ R²`.
    pub fn load_constant(&self) -> Result<f64, GripError> {
        if let Some(k) = self.load_constant {
            return Ok(k);
        }
        let denom = 1.0 - 2.0 * self.friction_coeff;
        if denom <= 0.0 {
            return Err(GripError::InvalidSpine(
                "derived load constant needs friction_coeff < 0.5; set load_constant explicitly".into(),
            ));
        }
        let s = std::f64::consts::PI * self.tensile_strength / denom;
        Ok(s.powi(3) / (2.0 * self.elastic_modulus.powi(2)))
    }
}

/// Critical asperity normal angle `θ_load + arccot μ`, rad.
///
/// Takes the two inputs directly so it can be used without a full spec;
/// `μ` must be positive.
pub fn theta_min(load_angle: f64, friction_coeff: f64) -> f64 {
    // arccot on (0, ∞) is atan(1/μ) = π/2 - atan(μ)
    load_angle + std::f64::consts::FRAC_PI_2 - friction_coeff.atan()
}

/// Combined radius `R` with `1/R = 1/r_s + 1/r_a`.
pub fn effective_radius(spine_radius: f64, asperity_radius: f64) -> Result<f64, GripError> {
    if !(spine_radius > 0.0) || !(asperity_radius > 0.0) {
        return Err(GripError::NonPositiveRadius {
            spine: spine_radius,
            asperity: asperity_radius,
        });
    }
    Ok(spine_radius * asperity_radius / (spine_radius + asperity_radius))
}

/// Raw single-contact load limit `κ R²`, N.
pub fn max_spine_load(spec: &SpineSpec, asperity: &Asperity) -> Result<f64, GripError> {
    let r = effective_radius(spec.tip_radius, asperity.tip_radius)?;
    Ok(spec.load_constant()? * r * r)
}

/// Whether the spine can hook this asperity.
pub fn can_engage(spec: &SpineSpec, asperity: &Asperity) -> bool {
    asperity.tip_radius >= spec.tip_radius
        && asperity.normal_angle >= theta_min(spec.load_angle, spec.friction_coeff)
}

/// Fraction of `asperities` the spine can hook.
pub fn engagement_fraction(spec: &SpineSpec, asperities: &[Asperity]) -> f64 {
    if asperities.is_empty() {
        return 0.0;
    }
    asperities.iter().filter(|a| can_engage(spec, a)).count() as f64 / asperities.len() as f64
}

/// The spines a robot presents to the wall during one grip event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineArray {
    pub spines: Vec<SpineSpec>,
    /// Spines per square metre of skin.
    pub area_density: f64,
}

impl SpineArray {
    /// `count` copies of `template` whose tip radii step evenly from
    /// `r_min` to `r_max`.
    pub fn uniform(template: SpineSpec, count: usize, r_min: f64, r_max: f64, area_density: f64) -> Result<Self, GripError> {
        if count == 0 {
            return Err(GripError::EmptyArray);
        }
        if !(r_min > 0.0) || !(r_max >= r_min) {
            return Err(GripError::InvalidSpine(format!("tip radius range [{r_min}, {r_max}]")));
        }
        let spines = (0..count)
            .map(|i| {
                let t = if count == 1 { 0.5 } else { i as f64 / (count - 1) as f64 };
                SpineSpec {
                    tip_radius: r_min + t * (r_max - r_min),
                    ..template
                }
            })
            .collect();
        let array = Self { spines, area_density };
        array.validate()?;
        Ok(array)
    }

    pub fn validate(&self) -> Result<(), GripError> {
        if self.spines.is_empty() {
            return Err(GripError::EmptyArray);
        }
        self.spines.iter().try_for_each(SpineSpec::validate)
    }

    pub fn len(&self) -> usize {
        self.spines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spines.is_empty()
    }
}

/// How much load an engaged contact carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CapacityModel {
    /// Uniform draw from an empirical band.
    Uniform { min: f64, max: f64 },
    /// Every contact carries exactly this load.
    Fixed { value: f64 },
    /// Raw `κ R²` for the hooked asperity, clamped into the band.
    ClampedContact { min: f64, max: f64 },
}

impl Default for CapacityModel {
    fn default() -> Self {
        CapacityModel::Uniform { min: 1.0, max: 2.0 }
    }
}

impl CapacityModel {
    pub fn validate(&self) -> Result<(), GripError> {
        let (min, max) = match *self {
            CapacityModel::Uniform { min, max } | CapacityModel::ClampedContact { min, max } => (min, max),
            CapacityModel::Fixed { value } => (value, value),
        };
        if !(min > 0.0) || !(max >= min) || !max.is_finite() {
            return Err(GripError::InvalidBand { min, max });
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, spec: &SpineSpec, asperity: &Asperity, rng: &mut R) -> f64 {
        match *self {
            CapacityModel::Uniform { min, max } => {
                if max > min {
                    rng.random_range(min..max)
                } else {
                    min
                }
            }
            CapacityModel::Fixed { value } => value,
            CapacityModel::ClampedContact { min, max } => max_spine_load(spec, asperity)
                .map(|f| f.clamp(min, max))
                .unwrap_or(min),
        }
    }
}

/// Outcome of one grip event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripState {
    pub engaged_count: usize,
    pub per_contact_capacity: Vec<f64>,
    pub total_capacity: f64,
}

impl GripState {
    pub fn from_contacts(per_contact_capacity: Vec<f64>) -> Self {
        Self {
            engaged_count: per_contact_capacity.len(),
            total_capacity: per_contact_capacity.iter().sum(),
            per_contact_capacity,
        }
    }

    pub fn none() -> Self {
        Self::from_contacts(Vec::new())
    }
}

/// Drags every spine across the wall once.
///
/// Each spine meets one asperity drawn uniformly from the population and
/// engages if [`can_engage`] accepts it, so the engagement probability of a
/// spine equals its [`engagement_fraction`]. Engaged contacts draw their
/// load from `capacity`.
pub fn sample_grip<R: Rng + ?Sized>(
    array: &SpineArray,
    asperities: &[Asperity],
    capacity: &CapacityModel,
    rng: &mut R,
) -> Result<GripState, GripError> {
    array.validate()?;
    capacity.validate()?;
    if asperities.is_empty() {
        return Ok(GripState::none());
    }
    let mut contacts = Vec::new();
    for spine in &array.spines {
        let asperity = &asperities[rng.random_range(0..asperities.len())];
        if can_engage(spine, asperity) {
            contacts.push(capacity.draw(spine, asperity, rng));
        }
    }
    Ok(GripState::from_contacts(contacts))
}
