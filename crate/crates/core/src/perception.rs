//! Pinhole cameras, stereo ranging and hop-target choice.

use std::io::{self, BufRead, Write};

use nalgebra::{Matrix3, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("point has non-positive depth {0} in the camera frame")]
    BehindCamera(f64),
    #[error("bad candidate file: {0}")]
    Parse(String),
}

/// `s m' = A [R | T] M'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub intrinsics: Matrix3<f64>,
    /// World to camera rotation.
    pub rotation: Matrix3<f64>,
    /// World origin in the camera frame, m.
    pub translation: Vector3<f64>,
}

impl CameraModel {
    pub fn new(intrinsics: Matrix3<f64>, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, PerceptionError> {
        let cam = Self {
            intrinsics,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Focal lengths, skew and principal point in pixels.
    pub fn intrinsic_matrix(fx: f64, fy: f64, skew: f64, cx: f64, cy: f64) -> Matrix3<f64> {
        Matrix3::new(fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        let a = &self.intrinsics;
        if a[(1, 0)] != 0.0 || a[(2, 0)] != 0.0 || a[(2, 1)] != 0.0 {
            return Err(PerceptionError::InvalidCamera("intrinsics must be upper triangular".into()));
        }
        if !(a[(0, 0)] > 0.0) || !(a[(1, 1)] > 0.0) || !(a[(2, 2)] > 0.0) {
            return Err(PerceptionError::InvalidCamera("focal terms must be positive".into()));
        }
        let r = &self.rotation;
        if (r.transpose() * r - Matrix3::identity()).amax() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(PerceptionError::InvalidCamera("rotation must be orthonormal with det +1".into()));
        }
        if self.translation.iter().any(|t| !t.is_finite()) {
            return Err(PerceptionError::InvalidCamera("translation must be finite".into()));
        }
        Ok(())
    }

    /// Camera centre in world coordinates, `-Rᵀ T`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Projects a homogeneous world point `(X, Y, Z, W)`.
    pub fn project_homogeneous(&self, point: &Vector4<f64>) -> Result<Vector2<f64>, PerceptionError> {
        let cam = self.rotation * point.xyz() + self.translation * point.w;
        let m = self.intrinsics * cam;
        // W = 0 is a direction; signum(+0) = 1 keeps it
        let depth = cam.z * point.w.signum();
        if !(depth > 0.0) {
            return Err(PerceptionError::BehindCamera(cam.z));
        }
        Ok(Vector2::new(m.x / m.z, m.y / m.z))
    }

    pub fn project(&self, point: &Vector3<f64>) -> Result<Vector2<f64>, PerceptionError> {
        self.project_homogeneous(&point.push(1.0))
    }

    /// Unit world-frame direction of the ray through `pixel`.
    pub fn ray(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let a_inv = self.intrinsics.try_inverse().expect("validated intrinsics are invertible");
        (self.rotation.transpose() * (a_inv * pixel.push(1.0))).normalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoPair {
    pub left: CameraModel,
    pub right: CameraModel,
}

impl StereoPair {
    /// Two identical cameras looking along world `+z`, the right one offset
    /// by `baseline` along `+x`.
    pub fn rectified(intrinsics: Matrix3<f64>, baseline: f64) -> Result<Self, PerceptionError> {
        if !(baseline > 0.0) {
            return Err(PerceptionError::InvalidCamera(format!("baseline must be positive, got {baseline}")));
        }
        Ok(Self {
            left: CameraModel::new(intrinsics, Matrix3::identity(), Vector3::zeros())?,
            right: CameraModel::new(intrinsics, Matrix3::identity(), Vector3::new(-baseline, 0.0, 0.0))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeEstimate {
    /// Midpoint of closest approach of the two rays; `None` when they are
    /// parallel.
    pub point: Option<Vector3<f64>>,
    /// Distance from the left camera centre, m. Infinite for parallel rays.
    pub range: f64,
    /// Angle between the rays, rad.
    pub ray_angle: f64,
    pub low_confidence: bool,
}

/// Rays closer than this to parallel are flagged.
pub const MIN_RAY_ANGLE: f64 = 1e-4;

/// Triangulates a matched pixel pair by the midpoint method.
pub fn obstacle_distance(pair: &StereoPair, left: &Vector2<f64>, right: &Vector2<f64>) -> RangeEstimate {
    let c1 = pair.left.center();
    let c2 = pair.right.center();
    let d1 = pair.left.ray(left);
    let d2 = pair.right.ray(right);
    let ray_angle = d1.cross(&d2).norm().atan2(d1.dot(&d2));
    let w = c1 - c2;
    let b = d1.dot(&d2);
    let denom = 1.0 - b * b;
    if denom <= f64::EPSILON {
        return RangeEstimate {
            point: None,
            range: f64::INFINITY,
            ray_angle,
            low_confidence: true,
        };
    }
    let d = d1.dot(&w);
    let e = d2.dot(&w);
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    let p = ((c1 + d1 * s) + (c2 + d2 * t)) * 0.5;
    RangeEstimate {
        point: Some(p),
        range: (p - c1).norm(),
        ray_angle,
        low_confidence: ray_angle < MIN_RAY_ANGLE || s <= 0.0 || t <= 0.0,
    }
}

/// Index of the nearest candidate above `from` along `up` within `max_range`.
pub fn select_hop_target(
    candidates: &[Vector3<f64>],
    from: &Vector3<f64>,
    up: &Vector3<f64>,
    max_range: f64,
) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let d = *c - from;
            d.dot(up) > 0.0 && d.norm() <= max_range
        })
        .min_by(|(_, a), (_, b)| (*a - from).norm().total_cmp(&(*b - from).norm()))
        .map(|(i, _)| i)
}

/// Writes candidate grip points as `x,y,z`.
pub fn write_candidates_csv<W: Write>(points: &[Vector3<f64>], mut w: W) -> io::Result<()> {
    writeln!(w, "x,y,z")?;
    for p in points {
        writeln!(w, "{},{},{}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn read_candidates_csv<R: BufRead>(r: R) -> Result<Vec<Vector3<f64>>, PerceptionError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| PerceptionError::Parse(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| PerceptionError::Parse(format!("line {}: {e}", n + 1)))?;
        if v.len() != 3 {
            return Err(PerceptionError::Parse(format!("line {}: expected 3 fields", n + 1)));
        }
        out.push(Vector3::new(v[0], v[1], v[2]));
    }
    Ok(out)
}
