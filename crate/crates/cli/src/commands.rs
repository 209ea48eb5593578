use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use matern_core::analysis::{
    default_swap_pairs, fit_mle, microergodic, mse_table, profile_ridge, swap_table, write_rows_csv, DistanceGrid,
    Likelihood, DEFAULT_POWER_RHO, DEFAULT_POWER_SLOPE,
};
use matern_core::conditional_joint::{build_joint, build_tent, render_blocks, UniformGrid};
use matern_core::covariance::{
    cholesky_with_jitter, covariance_matrix, sample_gaussian_process, surface_grid, JitterSchedule, PointSet,
};
use matern_core::kernel::{matern_corr, matern_corr_parts};
use matern_core::{MaternError, MaternParams, Parametrization};
use serde::Serialize;

use crate::config::{GridDefaults, MAX_RESOLUTION};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "matern", version, about = "Matérn correlation: evaluation, surfaces, tables, simulation, fitting")]
pub struct Cli {
    /// TOML file with grid defaults (half_width, resolution, d_step, port).
    #[arg(long, global = true, env = "MATERN_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Correlation at one distance, with its three factors.
    Eval(EvalArgs),
    /// Correlation over a square grid centred at the origin.
    Surface(SurfaceArgs),
    #[command(subcommand)]
    Table(TableCommand),
    /// Block covariance of two coupled processes.
    Jointcov(JointArgs),
    /// Draw Gaussian process realizations on a 1-D grid.
    Simulate(SimulateArgs),
    /// Maximum likelihood fit to a data file.
    Fit(FitArgs),
    /// Likelihood along and across the microergodic ridge.
    Ridge(RidgeArgs),
    /// Serve JSON grids over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum TableCommand {
    /// Extremes of Corr(nu, rho) - Corr(rho, nu).
    SwapDiff(SwapArgs),
    /// MSE between (d / rho)^nu and a straight line.
    Mse(MseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    /// Smoothness.
    #[arg(long)]
    pub nu: f64,
    /// Range (Bessel argument d / rho).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Spatial decay (Bessel argument kappa d).
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Length scale (Bessel argument sqrt(2 nu) d / l).
    #[arg(long)]
    pub length_scale: Option<f64>,
    /// Scale interpreted under --param.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, default_value = "range", requires = "scale")]
    pub param: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
}

impl ParamArgs {
    pub fn to_params(&self) -> Result<MaternParams, CliError> {
        let given = [self.rho, self.kappa, self.length_scale, self.scale].iter().filter(|v| v.is_some()).count();
        if given != 1 {
            return Err(CliError::Usage("give exactly one of --rho, --kappa, --length-scale, --scale".into()));
        }
        let (scale, param) = match (self.rho, self.kappa, self.length_scale, self.scale) {
            (Some(r), ..) => (r, Parametrization::Range),
            (_, Some(k), ..) => (k, Parametrization::Decay),
            (_, _, Some(l), _) => (l, Parametrization::LengthScale),
            (.., Some(s)) => (s, self.param.parse().map_err(usage)?),
            _ => unreachable!("exactly one scale flag checked above"),
        };
        MaternParams::new(self.nu, scale, param).and_then(|p| p.with_sigma2(self.sigma2)).map_err(usage)
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub d: f64,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SwapArgs {
    /// `default`, or a list such as `1.5:1,2.5:20`.
    #[arg(long, default_value = "default")]
    pub pairs: String,
    #[arg(long)]
    pub d_step: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub d_max: f64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct MseArgs {
    /// Comma-separated smoothness values; default 0.1, 0.2, ..., 2.0.
    #[arg(long, value_delimiter = ',')]
    pub nus: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_POWER_RHO)]
    pub rho: f64,
    #[arg(long, default_value_t = DEFAULT_POWER_SLOPE)]
    pub slope: f64,
    #[arg(long, default_value_t = 0.01)]
    pub d_step: f64,
    #[arg(long, default_value_t = 10.0)]
    pub d_max: f64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct JointArgs {
    #[arg(long, default_value_t = 1.5)]
    pub nu: f64,
    #[arg(long, default_value_t = 75.0)]
    pub kappa11: f64,
    #[arg(long, default_value_t = 1.5)]
    pub kappa21: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2_11: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2_21: f64,
    /// Tent half-width h.
    #[arg(long, default_value_t = matern_core::conditional_joint::DEFAULT_TENT_BANDWIDTH)]
    pub bandwidth: f64,
    /// Tent amplitude beta.
    #[arg(long, default_value_t = matern_core::conditional_joint::DEFAULT_TENT_AMPLITUDE, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, default_value_t = matern_core::conditional_joint::DEFAULT_GRID_POINTS)]
    pub points: usize,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub start: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub end: f64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub start: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub end: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
    /// Largest diagonal jitter tried, relative to the mean variance; 0 disables it.
    #[arg(long, default_value_t = 1e-4)]
    pub max_jitter: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with locations in the first column (`#` lines are skipped).
    #[arg(long)]
    pub data: PathBuf,
    /// Zero-based column holding the observations.
    #[arg(long, default_value_t = 1)]
    pub column: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Starting point; `--nu` is held fixed with --fix-nu.
    #[command(flatten)]
    pub init: ParamArgs,
    #[arg(long)]
    pub fix_nu: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RidgeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub nu: f64,
    /// Microergodic value sigma2 * kappa^(2 nu) defining the ridge.
    #[arg(long)]
    pub c: f64,
    #[arg(long)]
    pub kappa_min: f64,
    #[arg(long)]
    pub kappa_max: f64,
    #[arg(long, default_value_t = 25)]
    pub steps: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Defaults to $MATERN_PORT, then the config file, then 8080.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
}

/// Runs a parsed command, writing artifacts to `stdout` unless `--output` is given.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let defaults = GridDefaults::load(cli.config.as_deref())?;
    match cli.command {
        Command::Eval(a) => eval(&a, stdout),
        Command::Surface(a) => surface(&a, &defaults, stdout),
        Command::Table(TableCommand::SwapDiff(a)) => swap(&a, &defaults, stdout),
        Command::Table(TableCommand::Mse(a)) => mse(&a, stdout),
        Command::Jointcov(a) => jointcov(&a, stdout),
        Command::Simulate(a) => simulate(&a, stdout),
        Command::Fit(a) => fit(&a, stdout),
        Command::Ridge(a) => ridge(&a, stdout),
        Command::Serve(a) => serve(&a, defaults),
    }
}

fn emit(
    out: &OutputArgs,
    stdout: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    match &out.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => body(stdout),
    }
}

fn write_json<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *w, value).map_err(|e| CliError::Io(e.into()))?;
    writeln!(w)?;
    Ok(())
}

fn eval(a: &EvalArgs, w: &mut dyn Write) -> Result<(), CliError> {
    let params = a.params.to_params()?;
    if !(a.d >= 0.0 && a.d.is_finite()) {
        return Err(CliError::Usage(format!("--d must be non-negative, got {}", a.d)));
    }
    writeln!(w, "{:.7}", matern_corr(&params, a.d)?)?;
    if a.d > 0.0 {
        match matern_corr_parts(&params, a.d) {
            Ok(parts) if parts.log_scale => {
                writeln!(w, "constant (log) {:?}", parts.log_constant)?;
                writeln!(w, "power (log) {:?}", parts.power)?;
                writeln!(w, "bessel (log) {:?}", parts.bessel)?;
            }
            Ok(parts) => {
                writeln!(w, "constant {:?}", parts.constant)?;
                writeln!(w, "power {:?}", parts.power)?;
                writeln!(w, "bessel {:?}", parts.bessel)?;
            }
            // the value itself is a limit; there are no finite factors to show
            Err(MaternError::Overflow { .. }) => writeln!(w, "parts unavailable: kappa * d is out of range")?,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn surface(a: &SurfaceArgs, defaults: &GridDefaults, stdout: &mut dyn Write) -> Result<(), CliError> {
    let params = a.params.to_params()?;
    let half_width = a.half_width.unwrap_or(defaults.half_width);
    let resolution = a.resolution.unwrap_or(defaults.resolution);
    if !(2..=MAX_RESOLUTION).contains(&resolution) || !(half_width > 0.0 && half_width.is_finite()) {
        return Err(CliError::Usage(format!(
            "need half width > 0 and resolution in 2..={MAX_RESOLUTION}, got {half_width}, {resolution}"
        )));
    }
    let grid = surface_grid(&params, half_width, resolution)?;
    emit(&a.out, stdout, |w| match a.format {
        Format::Json => write_json(w, &grid),
        Format::Csv => Ok(grid.write_csv(w)?),
    })
}

pub fn parse_pairs(spec: &str) -> Result<Vec<(f64, f64)>, CliError> {
    if spec.trim() == "default" {
        return Ok(default_swap_pairs());
    }
    spec.split(',')
        .map(|item| {
            let (a, b) = item
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("pair {item:?} is not of the form nu:rho")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| *v > 0.0 && v.is_finite())
                    .ok_or_else(|| CliError::Usage(format!("{s:?} is not a positive number")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

fn swap(a: &SwapArgs, defaults: &GridDefaults, stdout: &mut dyn Write) -> Result<(), CliError> {
    let pairs = parse_pairs(&a.pairs)?;
    let grid = DistanceGrid::new(a.d_step.unwrap_or(defaults.d_step), a.d_max).map_err(usage)?;
    let rows = swap_table(&pairs, &grid)?;
    emit(&a.out, stdout, |w| match a.format {
        Format::Json => write_json(w, &serde_json::json!({ "d_grid": grid, "rows": rows })),
        Format::Csv => {
            let meta = vec![
                ("d_grid".to_string(), format!("(0, {}] step {}", grid.max, grid.step)),
                ("parametrization".to_string(), "range".to_string()),
            ];
            Ok(write_rows_csv(w, &meta, &rows)?)
        }
    })
}

fn mse(a: &MseArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let nus: Vec<f64> = if a.nus.is_empty() { (1..=20).map(|i| i as f64 / 10.0).collect() } else { a.nus.clone() };
    if let Some(bad) = nus.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(CliError::Usage(format!("--nus entries must be positive, got {bad}")));
    }
    let grid = DistanceGrid::new(a.d_step, a.d_max).map_err(usage)?;
    let rows = mse_table(&nus, a.rho, a.slope, &grid).map_err(|e| if e.is_input_error() { usage(e) } else { e.into() })?;
    emit(&a.out, stdout, |w| match a.format {
        Format::Json => write_json(w, &serde_json::json!({ "d_grid": grid, "rows": rows })),
        Format::Csv => {
            let meta = vec![("d_grid".to_string(), format!("(0, {}] step {}", grid.max, grid.step))];
            Ok(write_rows_csv(w, &meta, &rows)?)
        }
    })
}

fn jointcov(a: &JointArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let grid = UniformGrid::spanning(a.start, a.end, a.points).map_err(usage)?;
    let p11 = MaternParams::decay(a.nu, a.kappa11).and_then(|p| p.with_sigma2(a.sigma2_11)).map_err(usage)?;
    let p21 = MaternParams::decay(a.nu, a.kappa21).and_then(|p| p.with_sigma2(a.sigma2_21)).map_err(usage)?;
    let tent = build_tent(&grid, a.bandwidth, a.beta).map_err(usage)?;
    let blocks = render_blocks(&build_joint(&grid, &p11, &p21, &tent)?);
    emit(&a.out, stdout, |w| match a.format {
        Format::Json => write_json(w, &blocks),
        Format::Csv => Ok(blocks.write_csv(w)?),
    })
}

fn simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let params = a.params.to_params()?;
    if a.n == 0 || a.draws == 0 {
        return Err(CliError::Usage("--n and --draws must be positive".into()));
    }
    let points = if a.n == 1 {
        PointSet::line(vec![a.start]).map_err(usage)?
    } else {
        PointSet::uniform_line(a.start, a.end, a.n).map_err(usage)?
    };
    let cov = covariance_matrix(&params, &points)?;
    if !(a.max_jitter >= 0.0 && a.max_jitter.is_finite()) {
        return Err(CliError::Usage(format!("--max-jitter must be non-negative, got {}", a.max_jitter)));
    }
    let mut schedule = JitterSchedule::default_for(&cov.values);
    schedule.max *= a.max_jitter / 1e-4;
    let factor = cholesky_with_jitter(&cov.values, schedule)?;
    let draws = sample_gaussian_process(&factor, a.seed, a.draws);
    let xs = points.line_coords().expect("line points").to_vec();
    emit(&a.out, stdout, |w| {
        writeln!(w, "# params: {}", serde_json::to_string(&params).expect("params serialize"))?;
        writeln!(w, "# seed: {}", a.seed)?;
        writeln!(w, "# jitter: {:e}", factor.jitter)?;
        let mut csv = csv::Writer::from_writer(w);
        let io = |e: csv::Error| CliError::Io(std::io::Error::other(e));
        let header: Vec<String> =
            std::iter::once("x".to_string()).chain((0..a.draws).map(|k| format!("y{k}"))).collect();
        csv.write_record(&header).map_err(io)?;
        for (i, x) in xs.iter().enumerate() {
            let record: Vec<String> =
                std::iter::once(format!("{x:?}")).chain(draws.row(i).iter().map(|v| format!("{v:?}"))).collect();
            csv.write_record(&record).map_err(io)?;
        }
        csv.flush()?;
        Ok(())
    })
}

/// Locations from column 0 and observations from `column`.
pub fn read_data(path: &Path, column: usize) -> Result<(PointSet, Vec<f64>), CliError> {
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> Result<f64, CliError> {
            record
                .get(i)
                .ok_or_else(|| bad(format!("row {} has no column {i}", line + 1)))?
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: column {i} is not a number", line + 1)))
        };
        xs.push(field(0)?);
        ys.push(field(column)?);
    }
    if xs.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok((PointSet::line(xs).map_err(usage)?, ys))
}

fn fit(a: &FitArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let init = a.init.to_params()?;
    let (points, y) = read_data(&a.data.data, a.data.column)?;
    let nu_fixed = a.fix_nu.then_some(init.nu());
    let result = fit_mle(&y, &points, nu_fixed, &init)?;
    emit(&a.out, stdout, |w| {
        write_json(
            w,
            &serde_json::json!({
                "data": a.data.data,
                "init": init,
                "init_microergodic": microergodic(&init),
                "nu_fixed": nu_fixed,
                "fit": result,
            }),
        )
    })
}

fn ridge(a: &RidgeArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (points, y) = read_data(&a.data.data, a.data.column)?;
    let likelihood = Likelihood::new(&y, &points).map_err(usage)?;
    let profile = profile_ridge(a.nu, a.c, &likelihood, a.kappa_min, a.kappa_max, a.steps)
        .map_err(|e| if e.is_input_error() { usage(e) } else { e.into() })?;
    emit(&a.out, stdout, |w| {
        writeln!(w, "# along_variation: {}", profile.along_variation())?;
        writeln!(w, "# across_variation: {}", profile.across_variation())?;
        writeln!(w, "# flatness_ratio: {}", profile.flatness_ratio())?;
        Ok(profile.write_csv(w)?)
    })
}

fn serve(a: &ServeArgs, defaults: GridDefaults) -> Result<(), CliError> {
    let port = defaults.resolve_port(a.port)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(crate::server::serve(SocketAddr::new(a.bind, port), defaults))?;
    Ok(())
}
