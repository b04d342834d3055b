//! Virtual thermocouples: placement, sampling, noise, and total heat.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Point, PatchId, StructuredGrid};
use crate::solvers::{patch_integral, TemperatureField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub points: Vec<Point>,
    /// Measured temperatures T̂ (K), one per point.
    pub values: Vec<f64>,
    /// Measured total heat Ĝ through `S_IN` (W), if available.
    pub total_heat: Option<f64>,
    /// Standard deviation of the noise added to `values` (0 for clean data).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl MeasurementSet {
    pub fn new(points: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("a measurement set needs at least one sensor"));
        }
        if points.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} sensor points but {} values",
                points.len(),
                values.len()
            )));
        }
        Ok(MeasurementSet {
            points,
            values,
            total_heat: None,
            noise_sigma: 0.0,
            seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_total_heat(mut self, g_hat: f64) -> Self {
        self.total_heat = Some(g_hat);
        self
    }

    /// Copy with `N(0, omega²)` noise added to the values.
    pub fn noisy(&self, omega: f64, seed: u64, stream: u64) -> Result<Self> {
        let mut out = self.clone();
        out.values = add_noise_stream(&self.values, omega, seed, stream)?;
        out.noise_sigma = omega;
        out.seed = seed;
        Ok(out)
    }

    /// Every sensor strictly inside the open box.
    pub fn check_inside(&self, grid: &StructuredGrid) -> Result<()> {
        for p in &self.points {
            if !(0..3).all(|a| p[a] > 0.0 && p[a] < grid.lengths[a]) {
                return Err(Error::OutOfDomain {
                    x: p[0],
                    y: p[1],
                    z: p[2],
                });
            }
        }
        Ok(())
    }
}

/// `count_x * count_z` sensors on the plane `y = plane_y`, on a uniform lattice
/// inset half a spacing from the lateral faces. Ordered with `x` fastest.
pub fn place_lattice(plane_y: f64, count_x: usize, count_z: usize, grid: &StructuredGrid) -> Result<Vec<Point>> {
    let [lx, ly, lz] = grid.lengths;
    if !(plane_y > 0.0 && plane_y < ly) {
        return Err(Error::invalid(format!("sensor plane y = {plane_y} is outside (0, {ly})")));
    }
    if count_x == 0 || count_z == 0 {
        return Err(Error::invalid("sensor lattice counts must be positive"));
    }
    let sx = lx / count_x as f64;
    let sz = lz / count_z as f64;
    let mut pts = Vec::with_capacity(count_x * count_z);
    for kz in 0..count_z {
        for ix in 0..count_x {
            pts.push([(ix as f64 + 0.5) * sx, plane_y, (kz as f64 + 0.5) * sz]);
        }
    }
    Ok(pts)
}

/// Evaluate a closed-form temperature at the sensors.
pub fn synthesize_analytic(f: impl Fn(Point) -> f64, points: &[Point]) -> Vec<f64> {
    points.iter().map(|&p| f(p)).collect()
}

/// Sample a computed field at the sensors.
pub fn synthesize_field(field: &TemperatureField, grid: &StructuredGrid, points: &[Point]) -> Result<Vec<f64>> {
    field.sample_points(grid, points)
}

/// Standard normal pairs by the Box–Muller transform.
struct BoxMuller {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl BoxMuller {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        BoxMuller { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite
        let u1: f64 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Add IID `N(0, omega²)` noise from a ChaCha8 generator seeded with `seed`.
pub fn add_noise(values: &[f64], omega: f64, seed: u64) -> Result<Vec<f64>> {
    add_noise_stream(values, omega, seed, 0)
}

/// As [`add_noise`], drawing from an independent stream of the same seed
/// (one stream per repetition of a study).
pub fn add_noise_stream(values: &[f64], omega: f64, seed: u64, stream: u64) -> Result<Vec<f64>> {
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::invalid(format!("noise standard deviation must be non-negative, got {omega}")));
    }
    if omega == 0.0 {
        return Ok(values.to_vec());
    }
    let mut gen = BoxMuller::new(seed, stream);
    Ok(values.iter().map(|v| v + omega * gen.next()).collect())
}

/// Heat picked up by the coolant, `m_dot * cp * (T_out - T_in)`.
pub fn total_heat_from_water(m_dot: f64, cp: f64, t_out: f64, t_in: f64) -> Result<f64> {
    if !(m_dot > 0.0 && cp > 0.0) {
        return Err(Error::invalid(format!(
            "mass flow and heat capacity must be positive, got {m_dot} and {cp}"
        )));
    }
    Ok(m_dot * cp * (t_out - t_in))
}

/// Integral of a flux field over `S_IN`.
pub fn total_heat_of_flux(grid: &StructuredGrid, g: &[f64]) -> Result<f64> {
    if g.len() != grid.patch_face_count(PatchId::SIn) {
        return Err(Error::invalid("flux field does not match S_IN"));
    }
    Ok(patch_integral(grid, PatchId::SIn, g))
}
