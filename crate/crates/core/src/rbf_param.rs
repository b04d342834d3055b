//! Gaussian RBF parameterization of the `S_IN` flux with an offline/online split.
//!
//! Offline, one solve per basis function and one additive solve give the
//! sensor-response matrix `Θ`. Online, the weights come from an `M×M` normal
//! system, so a new set of readings costs a dense solve and nothing else.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fvm::RobinTreatment;
use crate::grid::{PatchId, Point, StructuredGrid};
use crate::linalg::{lu_full_pivot_solve, svd_decompose, tsvd_solve, DEFAULT_RANK_TOL};
use crate::solvers::{solve_additive, solve_direct_with_flux, solve_sensitivity, PhysicalCase};

pub use crate::alifanov::CostMode;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MFLXART\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfBasis {
    pub centers: Vec<Point>,
    /// Shape parameter (1/m).
    pub eta: f64,
}

/// Nearest point of `S_IN` (the `y = 0` face) for each point.
pub fn project_to_boundary(grid: &StructuredGrid, points: &[Point]) -> Vec<Point> {
    let [lx, _, lz] = grid.lengths;
    points.iter().map(|p| [p[0].clamp(0.0, lx), 0.0, p[2].clamp(0.0, lz)]).collect()
}

impl RbfBasis {
    pub fn new(centers: Vec<Point>, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("shape parameter must be positive, got {eta}")));
        }
        if centers.is_empty() {
            return Err(Error::invalid("basis needs at least one center"));
        }
        if let Some(c) = centers.iter().find(|c| c[1].abs() > 1e-12) {
            return Err(Error::invalid(format!("center {c:?} is not on the y = 0 face")));
        }
        for (i, a) in centers.iter().enumerate() {
            if centers[..i].contains(a) {
                log::warn!("duplicate RBF center {a:?}; Θ will have collinear columns");
            }
        }
        Ok(RbfBasis { centers, eta })
    }

    /// One basis function per sensor, centered at its projection.
    pub fn from_sensors(grid: &StructuredGrid, sensors: &[Point], eta: f64) -> Result<Self> {
        Self::new(project_to_boundary(grid, sensors), eta)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// `exp(-(η |x - ξ_j|)²)`.
    pub fn evaluate(&self, j: usize, x: Point) -> f64 {
        let c = self.centers[j];
        let r2: f64 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum();
        (-(self.eta * self.eta) * r2).exp()
    }

    /// `φ_j` at the `S_IN` face midpoints.
    pub fn face_field(&self, grid: &StructuredGrid, j: usize) -> Vec<f64> {
        grid.sample_patch(PatchId::SIn, |p| self.evaluate(j, p))
    }

    /// Midpoint-rule `∫ φ_j dΓ` for every `j`.
    pub fn integrals(&self, grid: &StructuredGrid) -> Vec<f64> {
        let area = grid.patch_face_area(PatchId::SIn);
        (0..self.len()).map(|j| area * self.face_field(grid, j).iter().sum::<f64>()).collect()
    }
}

pub fn rbf_evaluate(basis: &RbfBasis, j: usize, x: Point) -> f64 {
    basis.evaluate(j, x)
}

/// `Σ w_j φ_j` at the `S_IN` face midpoints.
pub fn reconstruct_flux(basis: &RbfBasis, grid: &StructuredGrid, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != basis.len() {
        return Err(Error::invalid(format!("{} weights for {} basis functions", w.len(), basis.len())));
    }
    let centers = grid.patch_face_centers(PatchId::SIn);
    Ok(centers
        .iter()
        .map(|&p| w.iter().enumerate().map(|(j, wj)| wj * basis.evaluate(j, p)).sum())
        .collect())
}

/// How the columns of `Θ` are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaAssembly {
    /// `T[φ_j] + T_ad` as the response to `φ_j` with all other data zero.
    /// Equal to the sum by linearity, without cancelling two large fields.
    #[default]
    Sensitivity,
    /// Literal sum of a direct solve with `g = φ_j` and the additive field.
    DirectPlusAdditive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMetadata {
    pub format_version: u32,
    pub cells: [usize; 3],
    pub lengths: [f64; 3],
    pub conductivity: f64,
    pub heat_transfer_coefficient: f64,
    pub robin_treatment: RobinTreatment,
    pub eta: f64,
    pub centers: Vec<Point>,
    pub sensors: Vec<Point>,
    /// SHA-256 of the full case data (including coolant and exterior flux), basis and sensors.
    pub case_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineArtifact {
    pub metadata: ArtifactMetadata,
    /// Sensors × basis functions.
    pub theta: DMatrix<f64>,
    pub t_ad: Vec<f64>,
    pub phi_integrals: Vec<f64>,
}

fn hash_f64s(h: &mut Sha256, label: &str, v: &[f64]) {
    h.update(label.as_bytes());
    h.update((v.len() as u64).to_le_bytes());
    for x in v {
        h.update(x.to_le_bytes());
    }
}

/// Fingerprint of everything that determines the offline data.
pub fn case_fingerprint(case: &PhysicalCase, basis: &RbfBasis, sensors: &[Point]) -> String {
    let grid = case.grid();
    let mut h = Sha256::new();
    h.update(b"moldflux-offline");
    for n in grid.cells {
        h.update((n as u64).to_le_bytes());
    }
    hash_f64s(&mut h, "lengths", &grid.lengths);
    hash_f64s(&mut h, "physics", &[case.conductivity(), case.heat_transfer_coefficient()]);
    h.update([case.robin_treatment() as u8]);
    hash_f64s(&mut h, "t_f", &case.t_f);
    for q in &case.exterior_flux {
        hash_f64s(&mut h, "q", q);
    }
    hash_f64s(&mut h, "eta", &[basis.eta]);
    hash_f64s(&mut h, "centers", &basis.centers.concat());
    hash_f64s(&mut h, "sensors", &sensors.concat());
    hex::encode(h.finalize())
}

pub fn build_offline(case: &PhysicalCase, basis: &RbfBasis, sensors: &[Point]) -> Result<OfflineArtifact> {
    build_offline_with(case, basis, sensors, ThetaAssembly::default())
}

pub fn build_offline_with(
    case: &PhysicalCase,
    basis: &RbfBasis,
    sensors: &[Point],
    assembly: ThetaAssembly,
) -> Result<OfflineArtifact> {
    let grid = case.grid();
    if sensors.is_empty() {
        return Err(Error::invalid("offline build needs at least one sensor"));
    }
    if let Some(p) = sensors.iter().find(|p| !grid.contains(**p)) {
        return Err(Error::OutOfDomain { x: p[0], y: p[1], z: p[2] });
    }
    let t_ad = solve_additive(case)?.sample_points(grid, sensors)?;
    let columns: Vec<Vec<f64>> = (0..basis.len())
        .into_par_iter()
        .map(|j| {
            let phi = basis.face_field(grid, j);
            match assembly {
                ThetaAssembly::Sensitivity => solve_sensitivity(case, &phi)?.sample_points(grid, sensors),
                ThetaAssembly::DirectPlusAdditive => {
                    let t = solve_direct_with_flux(case, &phi)?.sample_points(grid, sensors)?;
                    Ok(t.iter().zip(&t_ad).map(|(a, b)| a + b).collect())
                }
            }
        })
        .collect::<Result<_>>()?;
    let theta = DMatrix::from_fn(sensors.len(), basis.len(), |i, j| columns[j][i]);
    let metadata = ArtifactMetadata {
        format_version: FORMAT_VERSION,
        cells: grid.cells,
        lengths: grid.lengths,
        conductivity: case.conductivity(),
        heat_transfer_coefficient: case.heat_transfer_coefficient(),
        robin_treatment: case.robin_treatment(),
        eta: basis.eta,
        centers: basis.centers.clone(),
        sensors: sensors.to_vec(),
        case_hash: case_fingerprint(case, basis, sensors),
    };
    Ok(OfflineArtifact {
        metadata,
        theta,
        t_ad,
        phi_integrals: basis.integrals(grid),
    })
}

/// Regularization of the online solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularization {
    Lu,
    /// Truncated SVD keeping `alpha` singular values.
    Tsvd(usize),
}

impl std::str::FromStr for Regularization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "lu" {
            return Ok(Regularization::Lu);
        }
        if let Some(a) = s.strip_prefix("tsvd:") {
            let alpha = a
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad TSVD truncation '{a}'")))?;
            return Ok(Regularization::Tsvd(alpha));
        }
        Err(Error::Config(format!("regularization must be 'lu' or 'tsvd:<alpha>', got '{s}'")))
    }
}

impl std::fmt::Display for Regularization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regularization::Lu => write!(f, "lu"),
            Regularization::Tsvd(a) => write!(f, "tsvd:{a}"),
        }
    }
}

impl OfflineArtifact {
    pub fn basis(&self) -> RbfBasis {
        RbfBasis {
            centers: self.metadata.centers.clone(),
            eta: self.metadata.eta,
        }
    }

    pub fn sensors(&self) -> &[Point] {
        &self.metadata.sensors
    }

    /// Fails with an integrity error unless the artifact was built for exactly this setup.
    pub fn verify_against(&self, case: &PhysicalCase, basis: &RbfBasis, sensors: &[Point]) -> Result<()> {
        let expected = case_fingerprint(case, basis, sensors);
        if expected != self.metadata.case_hash {
            return Err(Error::Integrity(format!(
                "artifact was built for a different case (hash {}, current case {})",
                &self.metadata.case_hash[..12.min(self.metadata.case_hash.len())],
                &expected[..12]
            )));
        }
        Ok(())
    }

    /// `ΘᵀΘ + p_g φφᵀ` and `Θᵀ(T̂ + T_ad) + p_g Ĝ φ`.
    pub fn normal_system(&self, t_hat: &[f64], mode: &CostMode) -> Result<(DMatrix<f64>, DVector<f64>)> {
        mode.validate()?;
        if t_hat.len() != self.theta.nrows() {
            return Err(Error::invalid(format!(
                "{} readings for an artifact with {} sensors",
                t_hat.len(),
                self.theta.nrows()
            )));
        }
        let data = DVector::from_iterator(t_hat.len(), t_hat.iter().zip(&self.t_ad).map(|(a, b)| a + b));
        let mut n = self.theta.tr_mul(&self.theta);
        let mut rhs = self.theta.tr_mul(&data);
        if let Some((p_g, g_hat)) = mode.total_heat_term() {
            let phi = DVector::from_column_slice(&self.phi_integrals);
            n += p_g * &phi * phi.transpose();
            rhs += (p_g * g_hat) * &phi;
        }
        Ok((n, rhs))
    }

    /// Model prediction at the sensors for weights `w`: `Θw - T_ad`.
    pub fn predict(&self, w: &[f64]) -> Vec<f64> {
        let tw = &self.theta * DVector::from_column_slice(w);
        tw.iter().zip(&self.t_ad).map(|(a, b)| a - b).collect()
    }
}

/// Weights for readings `t_hat`.
pub fn online_solve(artifact: &OfflineArtifact, t_hat: &[f64], reg: Regularization, mode: &CostMode) -> Result<Vec<f64>> {
    let (n, rhs) = artifact.normal_system(t_hat, mode)?;
    let w = match reg {
        Regularization::Lu => lu_full_pivot_solve(&n, &rhs)?,
        Regularization::Tsvd(alpha) => {
            let svd = svd_decompose(&n, DEFAULT_RANK_TOL)?;
            tsvd_solve(&svd, &rhs, alpha)?
        }
    };
    Ok(w.iter().copied().collect())
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    metadata: ArtifactMetadata,
    rows: usize,
    cols: usize,
    payload_sha256: String,
}

fn payload(artifact: &OfflineArtifact) -> Vec<u8> {
    let (r, c) = artifact.theta.shape();
    let mut out = Vec::with_capacity(8 * (r * c + r + c));
    for i in 0..r {
        for j in 0..c {
            out.extend_from_slice(&artifact.theta[(i, j)].to_le_bytes());
        }
    }
    for v in artifact.t_ad.iter().chain(&artifact.phi_integrals) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Writes the artifact: magic, header length (u64 LE), JSON header, then
/// `Θ` row-major, `T_ad` and `∫φ` as little-endian f64.
pub fn save_artifact(artifact: &OfflineArtifact, path: &Path) -> Result<()> {
    let data = payload(artifact);
    let header = FileHeader {
        metadata: artifact.metadata.clone(),
        rows: artifact.theta.nrows(),
        cols: artifact.theta.ncols(),
        payload_sha256: hex::encode(Sha256::digest(&data)),
    };
    let json = serde_json::to_vec_pretty(&header)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut write = |b: &[u8]| f.write_all(b).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&(json.len() as u64).to_le_bytes())?;
    write(&json)?;
    write(&data)?;
    Ok(())
}

pub fn load_artifact(path: &Path) -> Result<OfflineArtifact> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_artifact(&bytes)
}

pub fn decode_artifact(bytes: &[u8]) -> Result<OfflineArtifact> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Integrity("not a moldflux artifact (bad magic)".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if hlen > body.len() {
        return Err(Error::Integrity("truncated header".into()));
    }
    let value: serde_json::Value =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Integrity(format!("unreadable header: {e}")))?;
    let found = value
        .pointer("/metadata/format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Integrity("header has no format version".into()))? as u32;
    if found != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found, expected: FORMAT_VERSION });
    }
    let header: FileHeader =
        serde_json::from_value(value).map_err(|e| Error::Integrity(format!("malformed header: {e}")))?;
    let data = &body[hlen..];
    let (r, c) = (header.rows, header.cols);
    if data.len() != 8 * (r * c + r + c) {
        return Err(Error::Integrity(format!(
            "payload has {} bytes, expected {}",
            data.len(),
            8 * (r * c + r + c)
        )));
    }
    if hex::encode(Sha256::digest(data)) != header.payload_sha256 {
        return Err(Error::Integrity("payload checksum mismatch".into()));
    }
    if header.metadata.sensors.len() != r || header.metadata.centers.len() != c {
        return Err(Error::Integrity("matrix shape disagrees with the metadata".into()));
    }
    let vals: Vec<f64> = data
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let theta = DMatrix::from_row_slice(r, c, &vals[..r * c]);
    Ok(OfflineArtifact {
        metadata: header.metadata,
        theta,
        t_ad: vals[r * c..r * c + r].to_vec(),
        phi_integrals: vals[r * c + r..].to_vec(),
    })
}
