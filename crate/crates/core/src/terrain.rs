//! Fractal rough-wall synthesis and asperity extraction.
//!
//! Heights follow the multivariate Weierstrass-Mandelbrot sum in its
//! Ausloos-Berman form:
//!
//! ```text
//! z(x, y) = C Σ_{m=1..M} Σ_{n=0..n_max} γ^{(D-3)n}
//!           [cos φ_{m,n} - cos(2π γ^n r / L · cos(θ - π m / M) + φ_{m,n})]
//! C       = L (G / L)^{D-2} (ln γ / M)^{1/2}
//! ```
//!
//! with `r cos(θ - α) = x cos α + y sin α`, which is how it is evaluated here
//! (no `atan2`, well defined at the origin).
//!
//! Patch coordinates: `x` runs across the wall, `y` runs up-slope and heights
//! are measured out of the wall plane.

use std::f64::consts::PI;
use std::io::{self, BufRead, Write};

use nalgebra::{SMatrix, SVector, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("invalid terrain parameter: {0}")]
    InvalidParams(String),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("patch too small for asperity extraction: {nx}x{ny} (need at least 3x3)")]
    PatchTooSmall { nx: usize, ny: usize },
    #[error("malformed patch data: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parameters of the Weierstrass-Mandelbrot surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainParams {
    /// Fractal dimension `D_s`, strictly between 2 and 3.
    pub fractal_dim: f64,
    /// Roughness amplitude `G` in metres.
    pub roughness_amp: f64,
    /// Sample length `L` in metres.
    pub sample_length: f64,
    /// Frequency density `γ > 1`.
    pub gamma_freq: f64,
    /// Number of superposed ridges `M`.
    pub ridge_count: u32,
    /// Highest frequency index `n_max`.
    pub max_freq_index: u32,
    /// Seed for the phase stream.
    pub phase_seed: u64,
}

impl TerrainParams {
    /// Micrometre-scale wall: `D_s = 2.5`, `γ = 1.5`, `M = 10`, `L = 100 μm`,
    /// `G = 1e-10 m`, with `n_max` cut at the Nyquist limit of a 1 μm lattice.
    pub fn micro_wall(phase_seed: u64) -> Self {
        let mut params = Self {
            fractal_dim: 2.5,
            roughness_amp: 1e-10,
            sample_length: 1e-4,
            gamma_freq: 1.5,
            ridge_count: 10,
            max_freq_index: 0,
            phase_seed,
        };
        params.max_freq_index = params.nyquist_freq_index(1e-6);
        params
    }

    /// Largest `n` with `γ^n · spacing / L ≤ 1`.
    pub fn nyquist_freq_index(&self, spacing: f64) -> u32 {
        let ratio = self.sample_length / spacing;
        if ratio <= 1.0 || self.gamma_freq <= 1.0 {
            return 0;
        }
        // tolerance keeps exact powers (e.g. γ^n == L/spacing) from flooring down
        (ratio.ln() / self.gamma_freq.ln() + 1e-9).floor() as u32
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        let bad = |msg: &str| Err(TerrainError::InvalidParams(msg.to_string()));
        if !(self.fractal_dim > 2.0 && self.fractal_dim < 3.0) {
            return bad("fractal_dim must lie in (2, 3)");
        }
        if !(self.gamma_freq > 1.0) || !self.gamma_freq.is_finite() {
            return bad("gamma_freq must be > 1");
        }
        if !(self.sample_length > 0.0) || !self.sample_length.is_finite() {
            return bad("sample_length must be > 0");
        }
        if !(self.roughness_amp >= 0.0) || !self.roughness_amp.is_finite() {
            return bad("roughness_amp must be >= 0");
        }
        if self.ridge_count == 0 {
            return bad("ridge_count must be >= 1");
        }
        Ok(())
    }

    /// Amplitude constant `C`.
    pub fn amplitude(&self) -> f64 {
        let l = self.sample_length;
        let m = self.ridge_count as f64;
        l * (self.roughness_amp / l).powf(self.fractal_dim - 2.0) * (self.gamma_freq.ln() / m).sqrt()
    }
}

/// One term of the double sum, with its ridge direction folded in.
#[derive(Debug, Clone, Copy)]
struct Mode {
    weight: f64,
    kx: f64,
    ky: f64,
    phase: f64,
    cos_phase: f64,
}

/// A surface with its phases drawn, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct WmSurface {
    params: TerrainParams,
    amplitude: f64,
    modes: Vec<Mode>,
}

impl WmSurface {
    pub fn new(params: TerrainParams) -> Result<Self, TerrainError> {
        params.validate()?;
        let mut phases = rng::stream(params.phase_seed, rng::TERRAIN_PHASES);
        let m_count = params.ridge_count as usize;
        let n_count = params.max_freq_index as usize + 1;
        let mut modes = Vec::with_capacity(m_count * n_count);
        for m in 1..=m_count {
            let alpha = PI * m as f64 / m_count as f64;
            for n in 0..n_count {
                let phase = phases.random::<f64>() * 2.0 * PI;
                let freq = 2.0 * PI * params.gamma_freq.powi(n as i32) / params.sample_length;
                modes.push(Mode {
                    weight: params.gamma_freq.powf((params.fractal_dim - 3.0) * n as f64),
                    kx: freq * alpha.cos(),
                    ky: freq * alpha.sin(),
                    phase,
                    cos_phase: phase.cos(),
                });
            }
        }
        Ok(Self {
            amplitude: params.amplitude(),
            params,
            modes,
        })
    }

    pub fn params(&self) -> &TerrainParams {
        &self.params
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let sum: f64 = self
            .modes
            .iter()
            .map(|md| md.weight * (md.cos_phase - (md.kx * x + md.ky * y + md.phase).cos()))
            .sum();
        self.amplitude * sum
    }
}

/// Height of the surface described by `params` at `(x, y)`.
///
/// Builds the phase table on every call; use [`WmSurface`] for bulk sampling.
pub fn wm_height(params: &TerrainParams, x: f64, y: f64) -> Result<f64, TerrainError> {
    Ok(WmSurface::new(*params)?.height(x, y))
}

/// Sampled heightfield on a square lattice starting at the origin.
///
/// Heights are stored row-major with `y` as the row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainPatch {
    pub params: TerrainParams,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(skip)]
    pub heights: Vec<f64>,
}

impl TerrainPatch {
    pub fn extent_x(&self) -> f64 {
        (self.nx - 1) as f64 * self.spacing
    }

    pub fn extent_y(&self) -> f64 {
        (self.ny - 1) as f64 * self.spacing
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.heights[iy * self.nx + ix]
    }

    pub fn rms(&self) -> f64 {
        if self.heights.is_empty() {
            return 0.0;
        }
        let n = self.heights.len() as f64;
        let mean = self.heights.iter().sum::<f64>() / n;
        (self.heights.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// Writes `x,y,z` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,z")?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let x = ix as f64 * self.spacing;
                let y = iy as f64 * self.spacing;
                writeln!(w, "{},{},{}", x, y, self.at(ix, iy))?;
            }
        }
        Ok(())
    }

    /// JSON header carrying the generating parameters and lattice shape.
    pub fn header_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("patch header serializes")
    }

    /// Rebuilds a patch from its JSON header and `x,y,z` CSV body.
    /// Lines starting with `#` are ignored.
    pub fn from_parts<R: BufRead>(header: &serde_json::Value, csv: R) -> Result<Self, TerrainError> {
        let mut patch: TerrainPatch = serde_json::from_value(header.clone())
            .map_err(|e| TerrainError::Parse(format!("header: {e}")))?;
        let mut heights = Vec::with_capacity(patch.nx * patch.ny);
        let mut saw_header = false;
        for line in csv.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "x,y,z" {
                    return Err(TerrainError::Parse(format!("unexpected csv header {line:?}")));
                }
                saw_header = true;
                continue;
            }
            let z = line
                .rsplit(',')
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| TerrainError::Parse(format!("bad row {line:?}")))?;
            heights.push(z);
        }
        if heights.len() != patch.nx * patch.ny {
            return Err(TerrainError::Parse(format!(
                "expected {} rows, found {}",
                patch.nx * patch.ny,
                heights.len()
            )));
        }
        patch.heights = heights;
        Ok(patch)
    }
}

/// Samples the surface on a square lattice covering `[0, extent]²`.
pub fn generate_patch(params: &TerrainParams, extent: f64, spacing: f64) -> Result<TerrainPatch, TerrainError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(TerrainError::InvalidLattice("spacing must be > 0".into()));
    }
    if !(extent > spacing) || !extent.is_finite() {
        return Err(TerrainError::InvalidLattice("extent must exceed spacing".into()));
    }
    let surface = WmSurface::new(*params)?;
    let n = (extent / spacing + 1e-9).floor() as usize + 1;
    let mut heights = vec![0.0; n * n];
    heights.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
        let y = iy as f64 * spacing;
        for (ix, z) in row.iter_mut().enumerate() {
            *z = surface.height(ix as f64 * spacing, y);
        }
    });
    Ok(TerrainPatch {
        params: *params,
        spacing,
        nx: n,
        ny: n,
        heights,
    })
}

/// A surface bump a spine can catch on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asperity {
    /// Apex lattice point `(x, y, z)` in metres.
    pub position: Vector3<f64>,
    /// Tip radius `r_a` in metres.
    pub tip_radius: f64,
    /// Angle in `[0, π]` between the local surface normal and the in-plane
    /// down-slope direction: `π/2` on a flat patch, `π` on an upward-facing
    /// ledge.
    pub normal_angle: f64,
}

impl Asperity {
    pub fn new(position: Vector3<f64>, tip_radius: f64, normal_angle: f64) -> Self {
        Self {
            position,
            tip_radius,
            normal_angle,
        }
    }
}

/// Least-squares quadric fit `z = a + b u + c v + d u² + e v² + f uv` over a
/// unit-spaced 3×3 stencil, as a 6×9 pseudo-inverse.
fn stencil_pinv() -> SMatrix<f64, 6, 9> {
    let mut design = SMatrix::<f64, 9, 6>::zeros();
    for (k, (du, dv)) in stencil_offsets().enumerate() {
        let (u, v) = (du as f64, dv as f64);
        design.set_row(k, &SMatrix::<f64, 1, 6>::from_row_slice(&[1.0, u, v, u * u, v * v, u * v]));
    }
    let normal = design.transpose() * design;
    normal.try_inverse().expect("3x3 quadric stencil is well posed") * design.transpose()
}

fn stencil_offsets() -> impl Iterator<Item = (isize, isize)> {
    (-1..=1).flat_map(|dv| (-1..=1).map(move |du| (du, dv)))
}

/// One asperity per strict interior local maximum.
///
/// Tip radius is the reciprocal mean curvature of the fitted quadric at the
/// lattice point; maxima whose fit is flat or not cap-shaped are skipped.
pub fn extract_asperities(patch: &TerrainPatch) -> Result<Vec<Asperity>, TerrainError> {
    if patch.nx < 3 || patch.ny < 3 {
        return Err(TerrainError::PatchTooSmall {
            nx: patch.nx,
            ny: patch.ny,
        });
    }
    let pinv = stencil_pinv();
    let h = patch.spacing;
    let mut out = Vec::new();
    for iy in 1..patch.ny - 1 {
        for ix in 1..patch.nx - 1 {
            let center = patch.at(ix, iy);
            let mut samples = SVector::<f64, 9>::zeros();
            let mut strict_max = true;
            for (k, (du, dv)) in stencil_offsets().enumerate() {
                let z = patch.at((ix as isize + du) as usize, (iy as isize + dv) as usize);
                samples[k] = z;
                if (du, dv) != (0, 0) && z >= center {
                    strict_max = false;
                }
            }
            if !strict_max {
                continue;
            }
            let coef = pinv * samples;
            let zx = coef[1] / h;
            let zy = coef[2] / h;
            let zxx = 2.0 * coef[3] / (h * h);
            let zyy = 2.0 * coef[4] / (h * h);
            let zxy = coef[5] / (h * h);
            let grad2 = 1.0 + zx * zx + zy * zy;
            let mean_curvature =
                ((1.0 + zy * zy) * zxx - 2.0 * zx * zy * zxy + (1.0 + zx * zx) * zyy) / (2.0 * grad2.powf(1.5));
            // caps have negative mean curvature in this orientation
            let kappa = -mean_curvature;
            if !(kappa > 0.0) || !kappa.is_finite() {
                continue;
            }
            let tip_radius = 1.0 / kappa;
            let normal_angle = (zy / grad2.sqrt()).clamp(-1.0, 1.0).acos();
            out.push(Asperity {
                position: Vector3::new(ix as f64 * h, iy as f64 * h, center),
                tip_radius,
                normal_angle,
            });
        }
    }
    Ok(out)
}

/// Writes `x,y,z,tip_radius,normal_angle` rows.
pub fn write_asperities_csv<W: Write>(asperities: &[Asperity], mut w: W) -> io::Result<()> {
    writeln!(w, "x,y,z,tip_radius,normal_angle")?;
    for a in asperities {
        writeln!(
            w,
            "{},{},{},{},{}",
            a.position.x, a.position.y, a.position.z, a.tip_radius, a.normal_angle
        )?;
    }
    Ok(())
}

/// Parses the format written by [`write_asperities_csv`].
pub fn read_asperities_csv<R: BufRead>(r: R) -> Result<Vec<Asperity>, TerrainError> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            saw_header = true;
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| TerrainError::Parse(format!("{line:?}: {e}")))?;
        if vals.len() != 5 {
            return Err(TerrainError::Parse(format!("expected 5 columns in {line:?}")));
        }
        out.push(Asperity::new(Vector3::new(vals[0], vals[1], vals[2]), vals[3], vals[4]));
    }
    Ok(out)
}
