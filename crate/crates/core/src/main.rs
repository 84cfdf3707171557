use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fkwalk::config::{parse_exit_mode, Overrides, RunConfig};
use fkwalk::geometry::ExitMode;
use fkwalk::render::RenderRange;
use fkwalk::{runner, Error, Point2, Result};

/// Random-walk solver for stationary elliptic boundary-value problems.
#[derive(Parser, Debug)]
#[command(name = "fkwalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Configuration file (`key = value` with [sections]).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named domain preset (benchmark).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Walks per grid node.
    #[arg(long)]
    walks: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = one per core (default from FKWALK_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    omega_x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    omega_y: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    source: Option<f64>,
    /// naive | interp
    #[arg(long, value_parser = exit_mode_arg)]
    exit_mode: Option<ExitMode>,
    /// Output prefix; files get .csv/.pgm/.lut appended.
    #[arg(long)]
    out: Option<String>,
    /// Image value range `lo:hi`.
    #[arg(long, allow_hyphen_values = true, value_parser = range_arg)]
    range: Option<RenderRange>,
    /// Also write `<out>.pgm`.
    #[arg(long)]
    image: bool,
}

fn exit_mode_arg(s: &str) -> std::result::Result<ExitMode, String> {
    parse_exit_mode(s).map_err(|e| e.to_string())
}

fn range_arg(s: &str) -> std::result::Result<RenderRange, String> {
    RenderRange::parse(s).map_err(|e| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let ov = Overrides {
            preset: self.preset.clone(),
            nx: self.nx,
            ny: self.ny,
            walks: self.walks,
            dt: self.dt,
            seed: self.seed,
            workers: self.workers,
            alpha: self.alpha,
            omega_x: self.omega_x,
            omega_y: self.omega_y,
            sigma: self.sigma,
            source: self.source,
            exit_mode: self.exit_mode,
            out: self.out.clone(),
            range: self.range,
            image: self.image,
        };
        RunConfig::resolve(self.config.as_deref(), &ov)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo field over the grid.
    SolveMc(Common),
    /// Finite-difference reference field.
    SolveFd {
        #[command(flatten)]
        common: Common,
        /// Relative residual target.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Pointwise difference of two field CSVs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Interpolate the second field onto the first field's lattice.
        #[arg(long)]
        resample: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Exit-time overestimate of the end-of-step boundary check.
    BiasStudy {
        #[command(flatten)]
        common: Common,
        /// Comma-separated, strictly decreasing step sizes.
        #[arg(long, value_delimiter = ',', default_value = "4e-4,2e-4,1e-4")]
        dts: Vec<f64>,
        /// Start point `x,y`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0.9,0.9")]
        start: Vec<f64>,
    },
    /// Write the boundary lookup table.
    MakeLut {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Monte Carlo field with the lookup table as the boundary detector.
    LutSolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lut: PathBuf,
    },
    /// Render a field CSV to a binary graymap.
    Render {
        field: PathBuf,
        /// Image path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, allow_hyphen_values = true, value_parser = range_arg)]
        range: Option<RenderRange>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SolveMc(common) => runner::solve_mc(&common.resolve()?).map(drop),
        Command::SolveFd { common, tol, max_iter } => {
            let mut cfg = common.resolve()?;
            if let Some(t) = tol {
                cfg.fd_tol = t;
            }
            if let Some(m) = max_iter {
                cfg.fd_max_iter = m;
            }
            runner::solve_fd_cmd(&cfg).map(drop)
        }
        Command::Compare { a, b, resample, common } => {
            runner::compare_cmd(&a, &b, resample, &common.resolve()?).map(drop)
        }
        Command::BiasStudy { common, dts, start } => {
            let [x, y] = start[..] else {
                return Err(Error::usage("--start takes two numbers x,y"));
            };
            runner::bias_study(&common.resolve()?, &dts, Point2::new(x, y)).map(drop)
        }
        Command::MakeLut { common, resolution } => runner::make_lut(&common.resolve()?, resolution).map(drop),
        Command::LutSolve { common, lut } => runner::lut_solve(&common.resolve()?, &lut).map(drop),
        Command::Render { field, out, range } => runner::render_cmd(&field, &out, range),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
