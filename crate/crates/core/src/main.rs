use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fch_bilayer::cli::{parse_eps_ladder, RunConfig, Session, Stage};

#[derive(Parser)]
#[command(
    name = "fch",
    version,
    about = "Bilayer profiles, pearling spectra and undulations of the FCH equation"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated eps values for the residual scaling study.
    #[arg(long, global = true)]
    eps_ladder: Option<String>,
    /// Suppress progress output on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    /// Size of the worker pool (defaults to the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Validate the double well.
    Well,
    /// u0, u1 and u_h profiles.
    Profile,
    /// Leading eigenpairs of the linearization.
    Spectrum,
    /// beta0, alpha0, c1 and pencil eigenvalue tracks.
    Pearling,
    /// Green's function of the tangential operator and G * K0.
    Greens,
    /// Assembled undulated field at the first eps.
    Undulate,
    /// Residual scaling over the eps ladder.
    Residual,
    /// Normal-form trajectory.
    Normalform,
    /// profile, spectrum, pearling, greens, undulate, residual in order.
    Pipeline,
}

fn fail(e: impl std::fmt::Display, code: i32) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let Some(path) = args.config.as_ref() else {
        return fail("--config is required", 2);
    };
    let mut cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => return fail(&e, e.exit_code()),
    };
    if let Some(s) = &args.eps_ladder {
        match parse_eps_ladder(s) {
            Ok(l) => cfg.residual.eps_ladder = l,
            Err(e) => return fail(&e, e.exit_code()),
        }
    }
    if let Some(n) = args.workers {
        if n == 0 {
            return fail("--workers must be positive", 2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(e, 3);
        }
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let mut session = Session::new(cfg, out, args.quiet);
    let result = match args.command {
        Command::Pipeline => session.pipeline(),
        Command::Well => session.run(Stage::Well),
        Command::Profile => session.run(Stage::Profile),
        Command::Spectrum => session.run(Stage::Spectrum),
        Command::Pearling => session.run(Stage::Pearling),
        Command::Greens => session.run(Stage::Greens),
        Command::Undulate => session.run(Stage::Undulate),
        Command::Residual => session.run(Stage::Residual),
        Command::Normalform => session.run(Stage::NormalForm),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.error.exit_code();
            fail(e, code)
        }
    }
}
