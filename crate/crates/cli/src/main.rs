mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use run::{run, Command, RunContext};
use semireg::error::Error;
use semireg::scene::parse_scene;

/// Regularized distance functions, partitions of unity and level sets for closed
/// sets with a stratified complement.
#[derive(Parser)]
#[command(name = "semireg", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scene file.
    #[arg(long)]
    scene: PathBuf,
    /// Directory for reports and plots.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Regularity order.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Grid nodes per axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Grid refinement levels for the derivative fit.
    #[arg(long)]
    refine: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write SVG overlays (planar scenes).
    #[arg(long)]
    svg: bool,
}

fn execute(cli: &Cli) -> Result<bool> {
    let text = std::fs::read_to_string(&cli.scene).with_context(|| format!("reading {}", cli.scene.display()))?;
    let mut scene = parse_scene(&text).with_context(|| format!("parsing {}", cli.scene.display()))?;
    if let Some(p) = cli.p {
        if p < 1 {
            return Err(Error::SemanticError("p must be at least 1".into()).into());
        }
        scene.params.p = p;
    }
    if let Some(kappa) = cli.kappa {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::SemanticError("kappa out of range (0, 1)".into()).into());
        }
        scene.params.kappa = kappa;
    }
    if let Some(r) = cli.resolution {
        if r < 2 {
            return Err(Error::SemanticError("grid resolution must be at least 2".into()).into());
        }
        scene.grid.resolution = r;
    }
    if let Some(r) = cli.refine {
        scene.grid.refine = r;
    }
    if cli.seed.is_some() {
        scene.params.seed = cli.seed;
    }
    let dir = cli.scene.parent().map(PathBuf::from).unwrap_or_default();
    let ctx = RunContext::new(scene, &dir, cli.out.clone(), cli.svg)?;
    let report = run(&ctx, cli.command)?;
    for line in &report.lines {
        println!("{line}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some checks did not pass");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<Error>()).map_or(2, Error::exit_code);
            ExitCode::from(code)
        }
    }
}
