//! Joint covariance of two processes built conditionally: `Y1` is Matérn, and
//! `Y2 | Y1` has mean `int b(s, v) Y1(v) dv` and Matérn covariance `C_{2|1}`.
//! On a uniform 1-D grid with a tent kernel `b` this gives
//!
//! ```text
//! C11,   C12 = C11 B^T,   C21 = B C11,   C22 = B C11 B^T + C_{2|1}
//! ```
//!
//! which is positive definite whenever `C11` and `C_{2|1}` are.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::covariance::{correlation_from_distances, pairwise_distances, PointSet};
use crate::error::{domain, MaternError, Result};
use crate::export::write_grid_csv;
use crate::kernel::MaternParams;

pub const DEFAULT_TENT_BANDWIDTH: f64 = 0.4;
pub const DEFAULT_TENT_AMPLITUDE: f64 = 1.0;
pub const DEFAULT_GRID_POINTS: usize = 101;

/// Equally spaced locations `start + i * step`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(MaternError::InvalidGrid("grid must contain at least one point".into()));
        }
        if !(step > 0.0 && step.is_finite()) || !start.is_finite() {
            return Err(MaternError::InvalidGrid(format!("invalid start {start} / step {step}")));
        }
        Ok(Self { start, step, len })
    }

    /// `len` points covering `[start, end]`; needs `len >= 2`.
    pub fn spanning(start: f64, end: f64, len: usize) -> Result<Self> {
        if len < 2 || end <= start {
            return Err(MaternError::InvalidGrid(format!(
                "need at least two points on a non-empty interval, got {len} on [{start}, {end}]"
            )));
        }
        Self::new(start, (end - start) / (len - 1) as f64, len)
    }

    /// The default grid: 101 points on `[-1, 1]`.
    pub fn default_unit() -> Self {
        Self::spanning(-1.0, 1.0, DEFAULT_GRID_POINTS).expect("static grid")
    }

    /// Recovers the spacing of a 1-D point set, rejecting non-uniform layouts.
    pub fn from_points(points: &PointSet) -> Result<Self> {
        let xs = points
            .line_coords()
            .ok_or_else(|| MaternError::InvalidGrid("conditional construction needs a 1-D grid".into()))?;
        if xs.len() < 2 {
            return Err(MaternError::InvalidGrid(
                "cell width of a single-point set is undefined; use UniformGrid::new".into(),
            ));
        }
        let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        let tol = 1e-9 * step.abs().max(f64::MIN_POSITIVE);
        if xs.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > tol) {
            return Err(MaternError::InvalidGrid("locations are not equally spaced".into()));
        }
        Self::new(xs[0], step, xs.len())
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.start + self.step * i as f64).collect()
    }

    pub fn points(&self) -> PointSet {
        PointSet::line(self.coords()).expect("finite grid")
    }
}

/// Discretized tent kernel `B[i, j] = beta * max(0, 1 - |s_i - v_j| / h) * cell_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct TentOperator {
    pub matrix: DMatrix<f64>,
    pub bandwidth: f64,
    pub amplitude: f64,
    pub cell_width: f64,
}

pub fn build_tent(grid: &UniformGrid, bandwidth: f64, amplitude: f64) -> Result<TentOperator> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(domain(format!("tent bandwidth must be positive, got {bandwidth}")));
    }
    if !amplitude.is_finite() {
        return Err(domain("tent amplitude must be finite"));
    }
    let s = grid.coords();
    let delta = grid.step;
    let matrix = DMatrix::from_fn(grid.len, grid.len, |i, j| {
        amplitude * (1.0 - (s[i] - s[j]).abs() / bandwidth).max(0.0) * delta
    });
    Ok(TentOperator { matrix, bandwidth, amplitude, cell_width: delta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointCovariance {
    pub c11: DMatrix<f64>,
    pub c12: DMatrix<f64>,
    pub c21: DMatrix<f64>,
    pub c22: DMatrix<f64>,
    /// The conditional covariance `C_{2|1}` added into `c22`.
    pub c2_given_1: DMatrix<f64>,
    pub grid: UniformGrid,
    pub params11: MaternParams,
    pub params2_given_1: MaternParams,
    pub tent: TentOperator,
}

/// Assembles the four blocks and verifies the joint matrix is positive
/// (semi)definite to `-1e-8 * trace`.
pub fn build_joint(
    grid: &UniformGrid,
    params11: &MaternParams,
    params2_given_1: &MaternParams,
    tent: &TentOperator,
) -> Result<JointCovariance> {
    if tent.matrix.nrows() != grid.len {
        return Err(MaternError::DimensionMismatch { expected: grid.len, found: tent.matrix.nrows() });
    }
    let distances = pairwise_distances(&grid.points());
    let c11 = correlation_from_distances(params11, &distances)? * params11.sigma2();
    let c2_given_1 = correlation_from_distances(params2_given_1, &distances)? * params2_given_1.sigma2();

    let b = &tent.matrix;
    let c21 = b * &c11;
    let c12 = c21.transpose();
    let mut c22 = &c21 * b.transpose();
    // B C11 B^T is symmetric in exact arithmetic
    c22 = (&c22 + c22.transpose()) * 0.5 + &c2_given_1;

    let joint = JointCovariance {
        c11,
        c12,
        c21,
        c22,
        c2_given_1,
        grid: *grid,
        params11: *params11,
        params2_given_1: *params2_given_1,
        tent: tent.clone(),
    };
    let (min_eig, trace) = joint.min_eigenvalue_and_trace();
    if min_eig < -1e-8 * trace {
        return Err(MaternError::Internal(format!(
            "joint covariance has eigenvalue {min_eig:e} below -1e-8 * trace ({trace:e})"
        )));
    }
    Ok(joint)
}

impl JointCovariance {
    pub fn n(&self) -> usize {
        self.grid.len
    }

    /// The `2n x 2n` matrix `[[C11, C12], [C21, C22]]`.
    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut full = DMatrix::zeros(2 * n, 2 * n);
        full.view_mut((0, 0), (n, n)).copy_from(&self.c11);
        full.view_mut((0, n), (n, n)).copy_from(&self.c12);
        full.view_mut((n, 0), (n, n)).copy_from(&self.c21);
        full.view_mut((n, n), (n, n)).copy_from(&self.c22);
        full
    }

    pub fn min_eigenvalue_and_trace(&self) -> (f64, f64) {
        let full = self.assemble();
        let trace = full.trace();
        let eig = SymmetricEigen::new(full);
        (eig.eigenvalues.min(), trace)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockLabel {
    pub label: &'static str,
    pub row_offset: usize,
    pub col_offset: usize,
    pub size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockMetadata {
    pub params11: MaternParams,
    pub params2_given_1: MaternParams,
    pub tent_bandwidth: f64,
    pub tent_amplitude: f64,
    pub grid: UniformGrid,
    pub blocks: Vec<BlockLabel>,
}

/// The full block matrix in the shared grid format; `x`/`y` are row/column indices.
#[derive(Debug, Clone, Serialize)]
pub struct BlockHeatmap {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub params: BlockMetadata,
}

pub fn render_blocks(jc: &JointCovariance) -> BlockHeatmap {
    let n = jc.n();
    let full = jc.assemble();
    let index: Vec<f64> = (0..2 * n).map(|i| i as f64).collect();
    let z = (0..2 * n).map(|r| full.row(r).iter().copied().collect()).collect();
    let blocks = vec![
        BlockLabel { label: "C11", row_offset: 0, col_offset: 0, size: n },
        BlockLabel { label: "C12", row_offset: 0, col_offset: n, size: n },
        BlockLabel { label: "C21", row_offset: n, col_offset: 0, size: n },
        BlockLabel { label: "C22", row_offset: n, col_offset: n, size: n },
    ];
    BlockHeatmap {
        x: index.clone(),
        y: index,
        z,
        params: BlockMetadata {
            params11: jc.params11,
            params2_given_1: jc.params2_given_1,
            tent_bandwidth: jc.tent.bandwidth,
            tent_amplitude: jc.tent.amplitude,
            grid: jc.grid,
            blocks,
        },
    }
}

impl BlockHeatmap {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("heatmap serializes")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let meta = vec![("params".to_string(), serde_json::to_string(&self.params).expect("metadata serializes"))];
        write_grid_csv(out, &meta, &self.x, &self.y, &self.z)
    }
}
