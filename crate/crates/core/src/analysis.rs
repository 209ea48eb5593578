//! Quantitative studies: the power-ν MSE band, the (ν, ρ)-swap table, KL
//! probes of measure equivalence, and the likelihood ridge along
//! `sigma2 * kappa^(2 nu) = const`.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::covariance::{
    cholesky_with_jitter, correlation_from_distances, covariance_matrix, pairwise_distances, sample_gaussian_process,
    CovarianceMatrix, JitterSchedule, PointSet,
};
use crate::error::{domain, MaternError, Result};
use crate::kernel::{matern_corr, MaternParams, Parametrization};
use crate::special_functions::power_part;

/// Distances `step, 2 step, ..., max` (the origin is excluded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceGrid {
    pub step: f64,
    pub max: f64,
}

impl DistanceGrid {
    pub fn new(step: f64, max: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && max.is_finite() && max >= step) {
            return Err(MaternError::InvalidGrid(format!("need 0 < step <= max, got step {step}, max {max}")));
        }
        Ok(Self { step, max })
    }

    /// `(0, 10]` step 0.01.
    pub fn power_default() -> Self {
        Self { step: 0.01, max: 10.0 }
    }

    /// `(0, 10]` step 0.05, the default for the swap table.
    pub fn swap_default() -> Self {
        Self { step: 0.05, max: 10.0 }
    }

    pub fn len(&self) -> usize {
        (self.max / self.step + 1e-9).floor() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        // multiply rather than accumulate, so the last point is max itself
        (1..=self.len()).map(move |i| i as f64 * self.step)
    }
}

pub const DEFAULT_POWER_RHO: f64 = 10.0;
pub const DEFAULT_POWER_SLOPE: f64 = 0.1;

/// Mean over the grid of `((d / rho)^nu - slope d)^2`.
pub fn power_curve_mse(nu: f64, rho: f64, slope: f64, grid: &DistanceGrid) -> Result<f64> {
    if grid.is_empty() {
        return Err(MaternError::InvalidGrid("empty distance grid".into()));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(domain(format!("rho must be positive, got {rho}")));
    }
    let mut total = 0.0;
    for d in grid.points() {
        let r = power_part(nu, d / rho)? - slope * d;
        total += r * r;
    }
    Ok(total / grid.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseRow {
    pub nu: f64,
    pub rho: f64,
    pub slope: f64,
    pub mse: f64,
}

pub fn mse_table(nus: &[f64], rho: f64, slope: f64, grid: &DistanceGrid) -> Result<Vec<MseRow>> {
    nus.iter()
        .map(|&nu| Ok(MseRow { nu, rho, slope, mse: power_curve_mse(nu, rho, slope, grid)? }))
        .collect()
}

/// Extremes of `Corr_{nu, rho}(d) - Corr_{rho, nu}(d)` (range parametrization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwapDiffRow {
    pub nu: f64,
    pub rho: f64,
    pub min_diff: f64,
    pub max_diff: f64,
}

pub fn swap_difference(nu: f64, rho: f64, grid: &DistanceGrid) -> Result<SwapDiffRow> {
    let a = MaternParams::range(nu, rho)?;
    let b = MaternParams::range(rho, nu)?;
    let mut min_diff = f64::INFINITY;
    let mut max_diff = f64::NEG_INFINITY;
    for d in grid.points() {
        let diff = matern_corr(&a, d)? - matern_corr(&b, d)?;
        min_diff = min_diff.min(diff);
        max_diff = max_diff.max(diff);
    }
    if grid.is_empty() {
        return Err(MaternError::InvalidGrid("empty distance grid".into()));
    }
    Ok(SwapDiffRow { nu, rho, min_diff, max_diff })
}

/// The sixteen published pairs, then `(1, 1)` and `(5, 40)`.
pub fn default_swap_pairs() -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = [0.1, 0.5, 1.5, 2.5]
        .iter()
        .flat_map(|&nu| [1.0, 5.0, 20.0, 75.0].map(|rho| (nu, rho)))
        .collect();
    pairs.push((1.0, 1.0));
    pairs.push((5.0, 40.0));
    pairs
}

pub fn swap_table(pairs: &[(f64, f64)], grid: &DistanceGrid) -> Result<Vec<SwapDiffRow>> {
    pairs.iter().map(|&(nu, rho)| swap_difference(nu, rho, grid)).collect()
}

/// Writes serializable rows as CSV with `#` metadata lines on top.
pub fn write_rows_csv<W: Write, T: Serialize>(mut out: W, metadata: &[(String, String)], rows: &[T]) -> Result<()> {
    let io = |e: std::io::Error| MaternError::Internal(format!("write failed: {e}"));
    for (k, v) in metadata {
        writeln!(out, "# {k}: {v}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| MaternError::Internal(format!("csv: {e}")))?;
    }
    w.flush().map_err(io)
}

/// `sigma2 * kappa^(2 nu)`.
pub fn microergodic(params: &MaternParams) -> f64 {
    let kappa = params.convert(Parametrization::Decay).scale();
    params.sigma2() * kappa.powf(2.0 * params.nu())
}

fn strict_cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(MaternError::NotPositiveDefinite { max_jitter: 0.0 })
}

fn chol_log_det(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `KL(N(0, sigma1) || N(0, sigma2))`, clamped at 0 against rounding.
pub fn gaussian_kl_matrices(sigma1: &DMatrix<f64>, sigma2: &DMatrix<f64>) -> Result<f64> {
    if sigma1.shape() != sigma2.shape() {
        return Err(MaternError::DimensionMismatch { expected: sigma1.nrows(), found: sigma2.nrows() });
    }
    let n = sigma1.nrows();
    let l1 = strict_cholesky(sigma1)?.unpack();
    let l2 = strict_cholesky(sigma2)?.unpack();
    // tr(S2^-1 S1) = ||L2^-1 L1||_F^2
    let m = l2
        .solve_lower_triangular(&l1)
        .ok_or_else(|| MaternError::Internal("singular Cholesky factor".into()))?;
    let kl = 0.5 * (m.norm_squared() - n as f64 + chol_log_det(&l2) - chol_log_det(&l1));
    Ok(kl.max(0.0))
}

pub fn gaussian_kl(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix) -> Result<f64> {
    gaussian_kl_matrices(&sigma1.values, &sigma2.values)
}

/// `KL(A || B)` between covariance matrices on `n` equally spaced points of
/// `[domain.0, domain.1]`, for each `n` in `sizes`.
pub fn equivalence_growth(a: &MaternParams, b: &MaternParams, domain: (f64, f64), sizes: &[usize]) -> Result<Vec<f64>> {
    sizes
        .iter()
        .map(|&n| {
            let points = PointSet::uniform_line(domain.0, domain.1, n)?;
            gaussian_kl(&covariance_matrix(a, &points)?, &covariance_matrix(b, &points)?)
        })
        .collect()
}

/// Gaussian negative log-likelihood with the pairwise distances cached.
#[derive(Debug, Clone)]
pub struct Likelihood {
    distances: DMatrix<f64>,
    y: DVector<f64>,
}

impl Likelihood {
    pub fn new(y: &[f64], points: &PointSet) -> Result<Self> {
        if y.len() != points.len() {
            return Err(MaternError::DimensionMismatch { expected: points.len(), found: y.len() });
        }
        Ok(Self { distances: pairwise_distances(points), y: DVector::from_column_slice(y) })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `(y^T S^-1 y + ln det S + n ln 2 pi) / 2`.
    pub fn nll(&self, params: &MaternParams) -> Result<f64> {
        let sigma = correlation_from_distances(params, &self.distances)? * params.sigma2();
        let l = strict_cholesky(&sigma)?.unpack();
        let a = l
            .solve_lower_triangular(&self.y)
            .ok_or_else(|| MaternError::Internal("singular Cholesky factor".into()))?;
        let n = self.len() as f64;
        Ok(0.5 * (a.norm_squared() + chol_log_det(&l) + n * (2.0 * std::f64::consts::PI).ln()))
    }
}

pub fn neg_log_likelihood(params: &MaternParams, y: &[f64], points: &PointSet) -> Result<f64> {
    Likelihood::new(y, points)?.nll(params)
}

/// One draw of a zero-mean Matérn process on `points`.
pub fn simulate(params: &MaternParams, points: &PointSet, seed: u64) -> Result<Vec<f64>> {
    let cov = covariance_matrix(params, points)?;
    let factor = cholesky_with_jitter(&cov.values, JitterSchedule::default_for(&cov.values))?;
    Ok(sample_gaussian_process(&factor, seed, 1).column(0).iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RidgePoint {
    pub sigma2: f64,
    pub kappa: f64,
    pub nll: f64,
}

/// The `along` sweep with `c` multiplied by `factor`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeLeg {
    pub factor: f64,
    pub points: Vec<RidgePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeProfile {
    pub nu_fixed: f64,
    pub c: f64,
    pub along: Vec<RidgePoint>,
    pub across: Vec<RidgeLeg>,
}

pub const RIDGE_ACROSS_FACTORS: [f64; 2] = [0.5, 2.0];

/// Log-spaced `kappa` sweep over `[kappa_lo, kappa_hi]` with `sigma2 = c / kappa^(2 nu)`
/// (`along`), repeated with `c` scaled by each of [`RIDGE_ACROSS_FACTORS`]. A single
/// step evaluates at the geometric mean.
pub fn profile_ridge(
    nu_fixed: f64,
    c: f64,
    likelihood: &Likelihood,
    kappa_lo: f64,
    kappa_hi: f64,
    n_steps: usize,
) -> Result<RidgeProfile> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(domain(format!("microergodic value must be positive, got {c}")));
    }
    if !(kappa_lo > 0.0 && kappa_hi >= kappa_lo && kappa_hi.is_finite()) || n_steps == 0 {
        return Err(domain(format!("invalid kappa sweep [{kappa_lo}, {kappa_hi}] with {n_steps} steps")));
    }
    let kappas: Vec<f64> = if n_steps == 1 {
        vec![(kappa_lo * kappa_hi).sqrt()]
    } else {
        let (a, b) = (kappa_lo.ln(), kappa_hi.ln());
        (0..n_steps).map(|i| (a + (b - a) * i as f64 / (n_steps - 1) as f64).exp()).collect()
    };
    let sweep = |target: f64| -> Result<Vec<RidgePoint>> {
        kappas
            .iter()
            .map(|&kappa| {
                let sigma2 = target / kappa.powf(2.0 * nu_fixed);
                let params = MaternParams::decay(nu_fixed, kappa)?.with_sigma2(sigma2)?;
                Ok(RidgePoint { sigma2, kappa, nll: likelihood.nll(&params)? })
            })
            .collect()
    };
    let along = sweep(c)?;
    let across = RIDGE_ACROSS_FACTORS
        .iter()
        .map(|&factor| Ok(RidgeLeg { factor, points: sweep(c * factor)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(RidgeProfile { nu_fixed, c, along, across })
}

impl RidgeProfile {
    /// `max - min` of the nll along the ridge.
    pub fn along_variation(&self) -> f64 {
        let (lo, hi) = self
            .along
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.nll), hi.max(p.nll)));
        hi - lo
    }

    /// Smallest (over legs) mean absolute nll gap between a leg and the ridge.
    pub fn across_variation(&self) -> f64 {
        self.across
            .iter()
            .map(|leg| {
                leg.points.iter().zip(&self.along).map(|(p, q)| (p.nll - q.nll).abs()).sum::<f64>()
                    / self.along.len() as f64
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Along-variation per unit of `ln kappa` over across-variation per unit of
    /// `ln c` (legs are `ln 2` away). Below 1 means the likelihood changes more
    /// slowly along the ridge than off it. Zero for a single-step profile.
    pub fn flatness_ratio(&self) -> f64 {
        if self.along.len() < 2 {
            return 0.0;
        }
        let span = (self.along[self.along.len() - 1].kappa / self.along[0].kappa).ln();
        let offset = self.across.iter().map(|l| l.factor.ln().abs()).fold(f64::INFINITY, f64::min);
        (self.along_variation() / span) / (self.across_variation() / offset)
    }

    /// Long-format CSV: `sigma2,kappa,nll,leg`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            sigma2: f64,
            kappa: f64,
            nll: f64,
            leg: String,
        }
        let mut rows: Vec<Row> = self
            .along
            .iter()
            .map(|p| Row { sigma2: p.sigma2, kappa: p.kappa, nll: p.nll, leg: "along".into() })
            .collect();
        for leg in &self.across {
            rows.extend(leg.points.iter().map(|p| Row {
                sigma2: p.sigma2,
                kappa: p.kappa,
                nll: p.nll,
                leg: format!("across_x{}", leg.factor),
            }));
        }
        let meta = vec![
            ("nu_fixed".to_string(), self.nu_fixed.to_string()),
            ("c".to_string(), self.c.to_string()),
        ];
        write_rows_csv(out, &meta, &rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub params_hat: MaternParams,
    pub nll: f64,
    pub microergodic_hat: f64,
    pub converged: bool,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_evaluations: usize,
    /// Fresh simplices started from the best point after the first convergence.
    pub restarts: usize,
    /// Converged once every vertex is within this distance of the best (log space).
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_evaluations: 4000, restarts: 2, tolerance: 1e-6, initial_step: 0.5 }
    }
}

/// Maximum likelihood over `(ln sigma2, ln kappa)`, plus `ln nu` when `nu_fixed` is
/// `None`, by Nelder–Mead. Parameter sets whose covariance is numerically
/// singular score `+inf`. The result uses the decay parametrization.
pub fn fit_mle(y: &[f64], points: &PointSet, nu_fixed: Option<f64>, init: &MaternParams) -> Result<FitResult> {
    fit_mle_with(&Likelihood::new(y, points)?, nu_fixed, init, FitOptions::default())
}

pub fn fit_mle_with(
    likelihood: &Likelihood,
    nu_fixed: Option<f64>,
    init: &MaternParams,
    options: FitOptions,
) -> Result<FitResult> {
    if let Some(nu) = nu_fixed {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(domain(format!("fixed nu must be positive, got {nu}")));
        }
    }
    let unpack = |theta: &[f64]| -> Result<MaternParams> {
        let nu = nu_fixed.unwrap_or_else(|| theta[2].exp());
        MaternParams::decay(nu, theta[1].exp())?.with_sigma2(theta[0].exp())
    };
    let objective = |theta: &[f64]| unpack(theta).and_then(|p| likelihood.nll(&p)).unwrap_or(f64::INFINITY);

    let mut start = vec![init.sigma2().ln(), init.kappa().ln()];
    if nu_fixed.is_none() {
        start.push(init.nu().ln());
    }
    let mut evaluations = 0;
    let mut run = nelder_mead(&objective, &start, options, options.max_evaluations);
    evaluations += run.evaluations;
    for _ in 0..options.restarts {
        if !run.converged || evaluations >= options.max_evaluations {
            break;
        }
        let next = nelder_mead(&objective, &run.best, options, options.max_evaluations - evaluations);
        evaluations += next.evaluations;
        if next.value <= run.value {
            run = Simplex { evaluations: run.evaluations, ..next };
        } else {
            run.converged = next.converged;
        }
    }
    let params_hat = unpack(&run.best)?;
    Ok(FitResult {
        params_hat,
        nll: run.value,
        microergodic_hat: microergodic(&params_hat),
        converged: run.converged && run.value.is_finite(),
        evaluations,
    })
}

struct Simplex {
    best: Vec<f64>,
    value: f64,
    converged: bool,
    evaluations: usize,
}

/// Standard Nelder–Mead (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: &[f64], options: FitOptions, budget: usize) -> Simplex {
    let dim = start.len();
    let evaluations = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evaluations.set(evaluations.get() + 1);
        f(x)
    };
    let mut vertices: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    vertices.push((start.to_vec(), eval(start)));
    for i in 0..dim {
        let mut x = start.to_vec();
        x[i] += options.initial_step;
        let v = eval(&x);
        vertices.push((x, v));
    }
    let along = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect() };
    let mut converged = false;
    loop {
        vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &vertices[0].0;
        let diameter = vertices[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if diameter < options.tolerance {
            converged = true;
            break;
        }
        if evaluations.get() >= budget {
            break;
        }
        let centroid: Vec<f64> =
            (0..dim).map(|k| vertices[..dim].iter().map(|(x, _)| x[k]).sum::<f64>() / dim as f64).collect();
        let worst = vertices[dim].clone();
        let reflected = along(&centroid, &worst.0, -1.0);
        let fr = eval(&reflected);
        if fr < vertices[0].1 {
            let expanded = along(&centroid, &worst.0, -2.0);
            let fe = eval(&expanded);
            vertices[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < vertices[dim - 1].1 {
            vertices[dim] = (reflected, fr);
        } else {
            let (toward, ft) = if fr < worst.1 { (&reflected, fr) } else { (&worst.0, worst.1) };
            let contracted = along(&centroid, toward, 0.5);
            let fc = eval(&contracted);
            if fc < ft {
                vertices[dim] = (contracted, fc);
            } else {
                let anchor = vertices[0].0.clone();
                for v in vertices.iter_mut().skip(1) {
                    let x = along(&anchor, &v.0, 0.5);
                    let fx = eval(&x);
                    *v = (x, fx);
                }
            }
        }
    }
    let (best, value) = vertices.swap_remove(0);
    Simplex { best, value, converged, evaluations: evaluations.get() }
}
