mod cache;
mod datum;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tropgamma::local_integrals::{CollisionKind, LocalError, QuadratureSpec};
use tropgamma::period_engine::{PeriodError, PeriodSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<PeriodError> for CliError {
    fn from(e: PeriodError) -> Self {
        match e {
            PeriodError::Polytope(_) | PeriodError::InvalidArgument(_) => CliError::Validation(e.to_string()),
            PeriodError::Series(tropgamma::zeta_series::SeriesError::InvalidArgument(_)) => CliError::Validation(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<LocalError> for CliError {
    fn from(e: LocalError) -> Self {
        match e {
            LocalError::QuadratureNotConverged { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(name = "tropgamma", version, about = "Tropical periods and Gamma classes of Batyrev mirror pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    format: Format,
    /// Also write the report to this file
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct PeriodArgs {
    /// Datum file (JSON: vectors, weights, optional phases or nu)
    #[arg(long)]
    datum: PathBuf,
    /// Phases in radians, overriding the datum's
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "nu")]
    theta: Option<Vec<f64>>,
    /// Integer twist: phases 2*pi*nu
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    nu: Option<Vec<i64>>,
    /// Band width of the chart decomposition [default: 0.1 * min vertex gap, clamped to [0.02, 0.3]]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Relative quadrature tolerance
    #[arg(long, default_value_t = 1e-12)]
    rel_tol: f64,
    /// Absolute quadrature tolerance
    #[arg(long, default_value_t = 1e-12)]
    abs_tol: f64,
    /// Integrand evaluation budget per adaptive integral
    #[arg(long, default_value_t = 20_000_000)]
    max_evals: usize,
    /// Quasi-Monte Carlo directions per replicate for three-dimensional fibres
    #[arg(long, default_value_t = 8192)]
    qmc_points: u64,
    /// Seed of the quasi-Monte Carlo shifts
    #[arg(long, default_value_t = 0x7a9e11)]
    seed: u64,
    /// Intersection cache directory [default: system temp dir]
    #[arg(long, env = cache::CACHE_ENV)]
    cache_dir: Option<PathBuf>,
    /// Disable the intersection cache
    #[arg(long)]
    no_cache: bool,
}

impl PeriodArgs {
    fn spec(&self) -> PeriodSpec {
        let base = PeriodSpec::default();
        PeriodSpec {
            epsilon: self.epsilon,
            quad: QuadratureSpec {
                rel_tol: self.rel_tol,
                abs_tol: self.abs_tol,
                max_evals: self.max_evals,
                qmc_points: self.qmc_points,
                seed: self.seed,
                ..base.quad
            },
            solve: base.solve,
        }
    }

    fn theta(&self, datum: &tropgamma::lattice_polytope::MirrorDatum) -> Vec<f64> {
        if let Some(t) = &self.theta {
            return t.clone();
        }
        if let Some(nu) = &self.nu {
            return nu.iter().map(|k| std::f64::consts::TAU * *k as f64).collect();
        }
        datum.phases().to_vec()
    }

    fn cache_dir(&self) -> Option<PathBuf> {
        (!self.no_cache).then(|| self.cache_dir.clone().unwrap_or_else(cache::default_dir))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Period against the Gamma-class prediction over a sweep of t
    Compare {
        #[command(flatten)]
        args: PeriodArgs,
        /// Decreasing t values in (0, 0.1]
        #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-4,1e-5")]
        t: Vec<f64>,
    },
    /// One period with its per-chart contributions
    Period {
        #[command(flatten)]
        args: PeriodArgs,
        #[arg(long, default_value_t = 1e-3)]
        t: f64,
    },
    /// Relations among local integrals up to a weight
    Relations {
        #[arg(long, default_value_t = 4)]
        weight: u32,
        /// Substitute numeric local integrals and report residuals
        #[arg(long)]
        evaluate: bool,
    },
    /// Local integrals by quadrature against their closed forms
    LocalIntegrals {
        /// Largest weight to list
        #[arg(long, default_value_t = 3)]
        max_weight: u32,
        #[arg(long, default_value_t = 40.0)]
        cutoff: f64,
    },
    /// Tropicalization defects of planar regions and collision models
    Amoeba {
        /// Rectangle x0,x1,y0,y1
        #[arg(long, allow_hyphen_values = true)]
        rect: Option<String>,
        /// Polygon vertices "x,y;x,y;..." in counterclockwise order
        #[arg(long, allow_hyphen_values = true, conflicts_with = "rect")]
        polygon: Option<String>,
        /// Collision model: two-sided:A[:B], slope:K[:B] or conifold:C
        #[arg(long, allow_hyphen_values = true)]
        collision: Option<String>,
        #[arg(long, default_value_t = 1e-4)]
        t: f64,
        /// Skip the check that polygon vertices avoid the tropical line
        #[arg(long)]
        no_margin: bool,
    },
    /// Euler characteristic, Chern classes and intersection table statistics
    Chern {
        #[arg(long)]
        datum: PathBuf,
        #[arg(long, env = cache::CACHE_ENV)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        no_cache: bool,
    },
}

fn parse_collision(s: &str) -> Result<CollisionKind, CliError> {
    let bad = || CliError::Validation(format!("cannot parse collision model {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| parts.get(i).map(|p| p.parse::<f64>().map_err(|_| bad())).transpose();
    let width = num(2)?.unwrap_or(10.0);
    match parts[0] {
        "two-sided" => Ok(CollisionKind::TwoSided { a: num(1)?.ok_or_else(bad)?, half_width: width }),
        "slope" => {
            let k = parts.get(1).ok_or_else(bad)?.parse::<u32>().map_err(|_| bad())?;
            Ok(CollisionKind::Slope { k, half_width: width })
        }
        "conifold" => Ok(CollisionKind::Conifold { c: num(1)?.ok_or_else(bad)? }),
        _ => Err(bad()),
    }
}

fn parse_rect(s: &str) -> Result<[f64; 4], CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Validation(format!("bad rectangle {s:?}")))?;
    v.try_into().map_err(|_| CliError::Validation(format!("rectangle {s:?} needs x0,x1,y0,y1")))
}

fn parse_polygon(s: &str) -> Result<Vec<[f64; 2]>, CliError> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let xy: Vec<f64> = p
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Validation(format!("bad polygon vertex {p:?}")))?;
            match xy[..] {
                [x, y] => Ok([x, y]),
                _ => Err(CliError::Validation(format!("polygon vertex {p:?} needs two coordinates"))),
            }
        })
        .collect()
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), CliError> {
    print!("{text}");
    if let Some(p) = output {
        std::fs::write(p, text).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let format = cli.format;
    let text = match cli.command {
        Command::Compare { args, t } => report::compare(&args, &t, format)?,
        Command::Period { args, t } => report::period(&args, t, format)?,
        Command::Relations { weight, evaluate } => report::relations(weight, evaluate, format)?,
        Command::LocalIntegrals { max_weight, cutoff } => report::local_integrals(max_weight, cutoff, format)?,
        Command::Amoeba { rect, polygon, collision, t, no_margin } => {
            let region = match (rect, polygon) {
                (Some(r), _) => Some(report::Region::Rect(parse_rect(&r)?)),
                (None, Some(p)) => Some(report::Region::Polygon(parse_polygon(&p)?)),
                (None, None) => None,
            };
            let collision = collision.as_deref().map(parse_collision).transpose()?;
            if region.is_none() && collision.is_none() {
                return Err(CliError::Validation("amoeba needs --rect, --polygon or --collision".into()));
            }
            report::amoeba(region, collision, t, no_margin, format)?
        }
        Command::Chern { datum, cache_dir, no_cache } => {
            let dir = (!no_cache).then(|| cache_dir.unwrap_or_else(cache::default_dir));
            report::chern(&datum, dir.as_deref(), format)?
        }
    };
    emit(&text, cli.output.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
