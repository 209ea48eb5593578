//! Read-only JSON backend for the surface explorer.
//!
//! Every handler is a pure function of its query string, so equal queries give
//! byte-identical bodies and responses are marked cacheable.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use matern_core::analysis::{swap_difference, DistanceGrid, SwapDiffRow};
use matern_core::covariance::{surface_grid, CorrelationSurface};
use matern_core::kernel::{matern_corr, matern_corr_parts};
use matern_core::special_functions::PartValues;
use matern_core::{MaternError, MaternParams, Parametrization};
use serde::Serialize;

use crate::config::{GridDefaults, MAX_RESOLUTION};

pub const CACHE_CONTROL: &str = "public, max-age=3600";

#[derive(Debug)]
pub enum ApiError {
    /// Malformed, missing or out-of-range query parameters.
    BadRequest(String),
    /// Valid input on which the numerics failed.
    Numeric(MaternError),
}

impl From<MaternError> for ApiError {
    fn from(e: MaternError) -> Self {
        if e.is_input_error() {
            ApiError::BadRequest(e.to_string())
        } else {
            ApiError::Numeric(e)
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    kind: &'a str,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "invalid_query", m),
            ApiError::Numeric(e) => (StatusCode::UNPROCESSABLE_ENTITY, "numeric_failure", e.to_string()),
        };
        let body = serde_json::to_string(&ErrorBody { error: ErrorDetail { kind, message } }).expect("error serializes");
        (status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], body).into_response()
    }
}

fn json_ok<T: Serialize>(value: &T) -> Response {
    let body = serde_json::to_string(value).expect("response serializes");
    (
        StatusCode::OK,
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
            (header::CACHE_CONTROL, HeaderValue::from_static(CACHE_CONTROL)),
        ],
        body,
    )
        .into_response()
}

type Params = HashMap<String, String>;

struct QueryArgs(Params);

impl QueryArgs {
    fn from(q: Result<Query<Params>, QueryRejection>) -> Result<Self, ApiError> {
        q.map(|Query(p)| QueryArgs(p)).map_err(|e| ApiError::BadRequest(e.body_text()))
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ApiError> {
        self.raw(key)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ApiError::BadRequest(format!("{key}={v:?} is not a finite number")))
            })
            .transpose()
    }

    fn required_f64(&self, key: &str) -> Result<f64, ApiError> {
        self.f64(key)?.ok_or_else(|| ApiError::BadRequest(format!("missing query parameter {key}")))
    }

    fn positive(&self, key: &str) -> Result<f64, ApiError> {
        let v = self.required_f64(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(ApiError::BadRequest(format!("{key} must be positive, got {v}")))
        }
    }

    fn params(&self) -> Result<MaternParams, ApiError> {
        let nu = self.positive("nu")?;
        let scale = self.positive("scale")?;
        let param = match self.raw("param") {
            None => Parametrization::Range,
            Some(p) => p.parse::<Parametrization>()?,
        };
        Ok(MaternParams::new(nu, scale, param)?)
    }

    fn grid(&self, defaults: &GridDefaults) -> Result<(f64, usize), ApiError> {
        let half_width = self.f64("half_width")?.unwrap_or(defaults.half_width);
        if half_width <= 0.0 {
            return Err(ApiError::BadRequest(format!("half_width must be positive, got {half_width}")));
        }
        let resolution = match self.raw("resolution") {
            None => defaults.resolution,
            Some(v) => v
                .trim()
                .parse::<usize>()
                .map_err(|_| ApiError::BadRequest(format!("resolution={v:?} is not a positive integer")))?,
        };
        if !(2..=MAX_RESOLUTION).contains(&resolution) {
            return Err(ApiError::BadRequest(format!("resolution must be in 2..={MAX_RESOLUTION}, got {resolution}")));
        }
        Ok((half_width, resolution))
    }
}

pub fn router(defaults: GridDefaults) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/surface", get(surface))
        .route("/swapdiff", get(swapdiff))
        .route("/parts", get(parts))
        .with_state(Arc::new(defaults))
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    version: &'static str,
}

async fn health() -> Response {
    json_ok(&Health { status: "ok", version: env!("CARGO_PKG_VERSION") })
}

async fn surface(State(defaults): State<Arc<GridDefaults>>, q: Result<Query<Params>, QueryRejection>) -> Result<Response, ApiError> {
    let q = QueryArgs::from(q)?;
    let params = q.params()?;
    let (half_width, resolution) = q.grid(&defaults)?;
    Ok(json_ok(&surface_grid(&params, half_width, resolution)?))
}

/// Difference surface in the shared grid format.
#[derive(Serialize)]
struct DifferenceSurface {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<Vec<f64>>,
    min: f64,
    max: f64,
}

#[derive(Serialize)]
struct SwapResponse {
    row: SwapDiffRow,
    d_grid: DistanceGrid,
    surface_nu_rho: CorrelationSurface,
    surface_rho_nu: CorrelationSurface,
    difference: DifferenceSurface,
}

async fn swapdiff(State(defaults): State<Arc<GridDefaults>>, q: Result<Query<Params>, QueryRejection>) -> Result<Response, ApiError> {
    let q = QueryArgs::from(q)?;
    let nu = q.positive("nu")?;
    let rho = q.positive("rho")?;
    let (half_width, resolution) = q.grid(&defaults)?;
    let d_grid = DistanceGrid::new(defaults.d_step, DistanceGrid::swap_default().max)?;
    let row = swap_difference(nu, rho, &d_grid)?;
    let a = surface_grid(&MaternParams::range(nu, rho)?, half_width, resolution)?;
    let b = surface_grid(&MaternParams::range(rho, nu)?, half_width, resolution)?;
    let z: Vec<Vec<f64>> = a.z.iter().zip(&b.z).map(|(ra, rb)| ra.iter().zip(rb).map(|(u, v)| u - v).collect()).collect();
    let (min, max) = z
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let difference = DifferenceSurface { x: a.x.clone(), y: a.y.clone(), z, min, max };
    Ok(json_ok(&SwapResponse { row, d_grid, surface_nu_rho: a, surface_rho_nu: b, difference }))
}

#[derive(Serialize)]
struct PartsResponse {
    params: MaternParams,
    d: f64,
    correlation: f64,
    parts: PartValues,
}

async fn parts(q: Result<Query<Params>, QueryRejection>) -> Result<Response, ApiError> {
    let q = QueryArgs::from(q)?;
    let params = q.params()?;
    let d = q.positive("d")?;
    Ok(json_ok(&PartsResponse { params, d, correlation: matern_corr(&params, d)?, parts: matern_corr_parts(&params, d)? }))
}

pub async fn serve(addr: std::net::SocketAddr, defaults: GridDefaults) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(defaults)).await
}
