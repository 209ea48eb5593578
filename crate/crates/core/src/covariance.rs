//! Point sets, distance matrices, Matérn correlation/covariance matrices,
//! jittered Cholesky factors, Gaussian-process draws and correlation surfaces.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, MaternError, Result};
use crate::export::write_grid_csv;
use crate::kernel::{matern_corr, MaternParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    /// Arc length along the sphere; valid for Matérn only with `nu <= 1/2`.
    GreatCircle,
    /// Straight-line distance through the sphere, `2 R sin(angle / 2)`.
    Chordal,
}

#[derive(Debug, Clone, PartialEq)]
enum Coords {
    Line(Vec<f64>),
    Plane(Vec<[f64; 2]>),
    /// (latitude, longitude) in degrees.
    Sphere { lat_lon: Vec<[f64; 2]>, radius: f64 },
}

/// Locations in R^1, R^2 or on a sphere, together with the metric used between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: Coords,
    metric: Metric,
}

impl PointSet {
    pub fn line(xs: Vec<f64>) -> Result<Self> {
        if let Some(bad) = xs.iter().find(|x| !x.is_finite()) {
            return Err(domain(format!("non-finite coordinate {bad}")));
        }
        Ok(Self { coords: Coords::Line(xs), metric: Metric::Euclidean })
    }

    /// `n` equally spaced points covering `[start, end]`.
    pub fn uniform_line(start: f64, end: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(domain("a point set needs at least one point"));
        }
        let step = if n > 1 { (end - start) / (n - 1) as f64 } else { 0.0 };
        Self::line((0..n).map(|i| start + step * i as f64).collect())
    }

    pub fn plane(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(domain("non-finite planar coordinate"));
        }
        Ok(Self { coords: Coords::Plane(points), metric: Metric::Euclidean })
    }

    /// Points given as `[latitude, longitude]` in degrees on a sphere of `radius`.
    pub fn sphere(lat_lon: Vec<[f64; 2]>, radius: f64, metric: Metric) -> Result<Self> {
        if metric == Metric::Euclidean {
            return Err(domain("sphere points use the great_circle or chordal metric"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(domain(format!("sphere radius must be positive, got {radius}")));
        }
        for &[lat, lon] in &lat_lon {
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(domain(format!("invalid latitude/longitude ({lat}, {lon})")));
            }
        }
        Ok(Self { coords: Coords::Sphere { lat_lon, radius }, metric })
    }

    pub fn len(&self) -> usize {
        match &self.coords {
            Coords::Line(v) => v.len(),
            Coords::Plane(v) => v.len(),
            Coords::Sphere { lat_lon, .. } => lat_lon.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Coordinates of a one-dimensional set.
    pub fn line_coords(&self) -> Option<&[f64]> {
        match &self.coords {
            Coords::Line(v) => Some(v),
            _ => None,
        }
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.coords {
            Coords::Line(v) => (v[i] - v[j]).abs(),
            Coords::Plane(v) => (v[i][0] - v[j][0]).hypot(v[i][1] - v[j][1]),
            Coords::Sphere { lat_lon, radius } => {
                let (phi1, lam1) = (lat_lon[i][0].to_radians(), lat_lon[i][1].to_radians());
                let (phi2, lam2) = (lat_lon[j][0].to_radians(), lat_lon[j][1].to_radians());
                let hav = ((phi2 - phi1) / 2.0).sin().powi(2)
                    + phi1.cos() * phi2.cos() * ((lam2 - lam1) / 2.0).sin().powi(2);
                // sin(angle / 2)
                let half_chord = hav.clamp(0.0, 1.0).sqrt();
                match self.metric {
                    Metric::Chordal => 2.0 * radius * half_chord,
                    _ => 2.0 * radius * half_chord.asin(),
                }
            }
        }
    }
}

/// Symmetric matrix of pairwise distances with an exactly zero diagonal.
pub fn pairwise_distances(points: &PointSet) -> DMatrix<f64> {
    let n = points.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let d = points.distance(i, j);
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Correlation,
    Covariance,
}

/// Dense Matérn matrix over a point set, with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub values: DMatrix<f64>,
    pub kind: MatrixKind,
    pub params: MaternParams,
}

impl CovarianceMatrix {
    /// Scales a correlation matrix by `sigma2`; covariance matrices are returned unchanged.
    pub fn into_covariance(self) -> CovarianceMatrix {
        match self.kind {
            MatrixKind::Covariance => self,
            MatrixKind::Correlation => CovarianceMatrix {
                values: self.values * self.params.sigma2(),
                kind: MatrixKind::Covariance,
                params: self.params,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

/// Correlation matrix `R[i, j] = corr(dist(i, j))`.
///
/// Refuses the great-circle metric for `nu > 1/2`, where the resulting
/// matrix need not be positive definite; see
/// [`correlation_matrix_allowing_invalid`].
pub fn correlation_matrix(params: &MaternParams, points: &PointSet) -> Result<CovarianceMatrix> {
    if points.metric() == Metric::GreatCircle && params.nu() > 0.5 {
        return Err(MaternError::Validity(format!(
            "Matérn with great-circle distance is positive definite on the sphere only for \
             nu <= 1/2 (got nu = {}); use the chordal metric or opt in explicitly",
            params.nu()
        )));
    }
    correlation_matrix_allowing_invalid(params, points)
}

/// As [`correlation_matrix`] without the great-circle validity check.
pub fn correlation_matrix_allowing_invalid(params: &MaternParams, points: &PointSet) -> Result<CovarianceMatrix> {
    let distances = pairwise_distances(points);
    Ok(CovarianceMatrix {
        values: correlation_from_distances(params, &distances)?,
        kind: MatrixKind::Correlation,
        params: *params,
    })
}

/// `sigma2 * R`.
pub fn covariance_matrix(params: &MaternParams, points: &PointSet) -> Result<CovarianceMatrix> {
    correlation_matrix(params, points).map(CovarianceMatrix::into_covariance)
}

/// Applies the correlation entry-wise to a precomputed distance matrix.
pub fn correlation_from_distances(params: &MaternParams, distances: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = distances.nrows();
    let mut out = DMatrix::identity(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let r = matern_corr(params, distances[(i, j)])?;
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    Ok(out)
}

/// Geometric jitter schedule `0, start, 10 start, ...` capped at `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterSchedule {
    pub start: f64,
    pub max: f64,
}

impl JitterSchedule {
    /// `1e-10` up to `1e-4`, both relative to the mean diagonal of `m`.
    pub fn default_for(m: &DMatrix<f64>) -> Self {
        let n = m.nrows().max(1) as f64;
        let mean_diag = (m.trace() / n).abs().max(f64::MIN_POSITIVE);
        Self { start: 1e-10 * mean_diag, max: 1e-4 * mean_diag }
    }

    fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(0.0).chain(
            std::iter::successors(Some(self.start), |j| Some(j * 10.0)).take_while(|&j| j <= self.max * (1.0 + 1e-12)),
        )
    }
}

/// Lower-triangular `L` with `L L^T = M + jitter I`.
#[derive(Debug, Clone, PartialEq)]
pub struct JitteredFactor {
    pub lower: DMatrix<f64>,
    pub jitter: f64,
}

impl JitteredFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// `ln det(L L^T)`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Cholesky factor of `m`, adding the smallest jitter from `schedule` that succeeds.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, schedule: JitterSchedule) -> Result<JitteredFactor> {
    if !m.is_square() {
        return Err(MaternError::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    for jitter in schedule.steps() {
        let mut shifted = m.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::<f64, Dyn>::new(shifted) {
            return Ok(JitteredFactor { lower: chol.unpack(), jitter });
        }
    }
    Err(MaternError::NotPositiveDefinite { max_jitter: schedule.max })
}

/// `n_draws` columns `L z` with `z` standard normal from a ChaCha8 stream seeded by `seed`.
pub fn sample_gaussian_process(factor: &JitteredFactor, seed: u64, n_draws: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = factor.dim();
    // column-major: draw k consumes normals k*n .. (k+1)*n
    let normals: Vec<f64> = (0..n * n_draws).map(|_| StandardNormal.sample(&mut rng)).collect();
    let z = DMatrix::from_vec(n, n_draws, normals);
    &factor.lower * z
}

/// Correlation over a square grid centred at the origin: `z[j][i] = corr(|(x_i, y_j)|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSurface {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row `j` holds the values along `x` at `y[j]`.
    pub z: Vec<Vec<f64>>,
    pub params: MaternParams,
}

pub const DEFAULT_SURFACE_HALF_WIDTH: f64 = 5.0;
pub const DEFAULT_SURFACE_RESOLUTION: usize = 101;

/// `resolution` equally spaced values covering `[-half_width, half_width]`.
pub fn symmetric_grid(half_width: f64, resolution: usize) -> Vec<f64> {
    let step = 2.0 * half_width / (resolution - 1) as f64;
    (0..resolution)
        .map(|i| {
            // mirror so that odd resolutions hit 0 exactly and the grid is symmetric
            let k = i as f64 - (resolution - 1) as f64 / 2.0;
            k * step
        })
        .collect()
}

pub fn surface_grid(params: &MaternParams, half_width: f64, resolution: usize) -> Result<CorrelationSurface> {
    if resolution < 2 {
        return Err(domain(format!("surface resolution must be at least 2, got {resolution}")));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(domain(format!("half width must be positive, got {half_width}")));
    }
    let axis = symmetric_grid(half_width, resolution);
    let z = axis
        .iter()
        .map(|&y| axis.iter().map(|&x| matern_corr(params, x.hypot(y))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationSurface { x: axis.clone(), y: axis, z, params: *params })
}

impl CorrelationSurface {
    pub fn min_max(&self) -> (f64, f64) {
        self.z
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("surface serializes")
    }

    /// Long-format CSV (`x,y,z`) preceded by `#` metadata lines.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let meta = vec![("params".to_string(), serde_json::to_string(&self.params).expect("params serialize"))];
        write_grid_csv(out, &meta, &self.x, &self.y, &self.z)
    }
}
