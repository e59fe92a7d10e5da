//! Subcommand dispatch: each run builds the stratification from the scene, calls into
//! the library, and collects reports and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;

use semireg::approx::{approximate, fit_derivative_constants, regularized_distance, schedule_offsets, RegularizedDistance};
use semireg::apps::{approach_sequence, flatness_check, hausdorff_convergence, lambda_eps, zero_set_equivalence, zero_set_function};
use semireg::bump::{check_partition, partition_of_unity};
use semireg::field::FieldRef;
use semireg::grid::GridSpec;
use semireg::oracle::Point;
use semireg::report::{fmt_f64, CertificateReport, Status};
use semireg::scene::Scene;
use semireg::strat::{validate_stratification, Stratification};

use crate::svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Partition,
    Approx,
    Regdist,
    Zeroset,
    Levelset,
    Lambda,
    Report,
}

/// Default partition scale when the scene does not set `eta`.
const DEFAULT_ETA: f64 = 0.5;
const DEFAULT_LEVELS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Reports per stage plus the files written.
#[derive(Default)]
pub struct RunReport {
    pub stages: Vec<(String, CertificateReport)>,
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.stages.iter().all(|(_, r)| r.verdict() == Status::Pass)
    }

    fn add(&mut self, stage: &str, report: CertificateReport) {
        self.lines.push(format!("{stage}: {} ({} checks, worst ratio {})", report.verdict(), report.checked(), fmt_f64(report.worst_ratio())));
        self.stages.push((stage.to_string(), report));
    }

    fn merged(&self) -> CertificateReport {
        let mut all = CertificateReport::new();
        for (_, r) in &self.stages {
            all.merge(r.clone());
        }
        all
    }
}

pub struct RunContext {
    pub scene: Scene,
    pub s: Stratification,
    pub grid: GridSpec,
    pub out: PathBuf,
    pub svg: bool,
}

impl RunContext {
    pub fn new(scene: Scene, scene_dir: &Path, out: PathBuf, svg: bool) -> Result<RunContext> {
        let s = scene.build(scene_dir).context("building the stratification")?;
        let grid = scene.grid_spec();
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(RunContext { scene, s, grid, out, svg })
    }

    fn write(&self, report: &mut RunReport, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        report.files.push(path);
        Ok(())
    }

    fn p(&self) -> usize {
        self.scene.params.p
    }

    fn kappa(&self) -> f64 {
        self.scene.params.kappa
    }

    fn levels(&self) -> Vec<f64> {
        if self.scene.params.t_list.is_empty() {
            DEFAULT_LEVELS.to_vec()
        } else {
            self.scene.params.t_list.clone()
        }
    }

    fn w_samples(&self) -> Vec<Point> {
        let spacing = self.grid.pitch() / 4.0;
        self.s.w.sample(&self.grid.bbox, spacing)
    }
}

fn points_csv(points: &[Point]) -> String {
    let n = points.first().map_or(1, Vec::len);
    let header: Vec<String> = ["x", "y"].iter().take(n).map(|s| s.to_string()).collect();
    let mut out = header.join(",") + "\n";
    for p in points {
        let row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn validate(ctx: &RunContext, report: &mut RunReport) -> Result<()> {
    let r = validate_stratification(&ctx.s, ctx.p(), &ctx.grid).context("validate")?;
    ctx.write(report, "validate.csv", &r.to_csv())?;
    report.add("validate", r);
    Ok(())
}

fn partition(ctx: &RunContext, report: &mut RunReport) -> Result<()> {
    let covering = ctx.scene.covering(&ctx.s)?;
    let eta = ctx.scene.params.eta.unwrap_or(DEFAULT_ETA);
    let part = partition_of_unity(&ctx.s, &covering, eta, ctx.p(), &ctx.grid).context("partition")?;
    let r = check_partition(&ctx.s, &part, &covering, &ctx.grid).context("partition")?;
    ctx.write(report, "partition.csv", &r.to_csv())?;
    report.add("partition", r);
    Ok(())
}

fn approx(ctx: &RunContext, report: &mut RunReport) -> Result<()> {
    let (g, a) = ctx.scene.g(&ctx.s)?;
    let ap = approximate(&ctx.s, &g, a, ctx.p(), ctx.kappa(), &ctx.grid).context("approx")?;
    ctx.write(report, "schedule.csv", &ap.schedule.to_csv())?;
    ctx.write(report, "approx.csv", &ap.report.to_csv())?;
    report.add("approx", ap.report);
    Ok(())
}

fn regdist_run(ctx: &RunContext, report: &mut RunReport) -> Result<RegularizedDistance> {
    let mut rd = regularized_distance(&ctx.s, ctx.p(), ctx.kappa(), &ctx.grid).context("regdist")?;
    // Further refinement levels beyond the one built into the run.
    let mut grid = ctx.grid.refined();
    let mut previous = rd.b_hat_refined.clone();
    let offsets = schedule_offsets(&rd.approximation.schedule);
    for level in 2..=ctx.scene.grid.refine {
        grid = grid.refined();
        let fit = fit_derivative_constants(rd.f().field.as_ref(), &ctx.s, &grid, ctx.p(), &offsets).context("regdist")?;
        for q in 1..=ctx.p() {
            let drift = (fit[q] - previous[q]).abs() / previous[q].max(f64::MIN_POSITIVE);
            rd.report.fit(&format!("B_hat_{q}.refined{level}"), fit[q]);
            rd.report.check_le("regdist", &format!("order {q} refinement drift level {level}"), &[], 0.1, drift, 0.0);
        }
        previous = fit;
    }
    let mut constants = String::from("name,value\n");
    let _ = writeln!(constants, "A_hat,{}", fmt_f64(rd.a_hat));
    for q in 1..=ctx.p() {
        let _ = writeln!(constants, "B_hat_{q},{}", fmt_f64(rd.b_hat[q]));
        let _ = writeln!(constants, "B_hat_{q}.refined,{}", fmt_f64(rd.b_hat_refined[q]));
    }
    ctx.write(report, "schedule.csv", &rd.approximation.schedule.to_csv())?;
    ctx.write(report, "constants.csv", &constants)?;
    ctx.write(report, "regdist.csv", &rd.report.to_csv())?;
    report.lines.push(format!("A_hat = {}", fmt_f64(rd.a_hat)));
    report.add("regdist", rd.report.clone());
    Ok(rd)
}

/// Approach sequences toward a few samples of `W` along directions in which the
/// sample is a nearest point.
fn approach_sequences(ctx: &RunContext) -> Vec<Vec<Point>> {
    let w = ctx.s.w.as_ref();
    let bbox = &ctx.grid.bbox;
    let dirs: Vec<Point> = if ctx.s.n == 1 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        (0..16).map(|k| std::f64::consts::PI * k as f64 / 8.0).map(|a| vec![a.cos(), a.sin()]).collect()
    };
    let mut samples = ctx.w_samples();
    samples.retain(|a| bbox.contains(a));
    let stride = (samples.len() / 3).max(1);
    let mut out = Vec::new();
    for a in samples.iter().step_by(stride).take(3) {
        for d in &dirs {
            let probe: Point = a.iter().zip(d).map(|(x, u)| x + 0.1 * u).collect();
            if bbox.contains(&probe) && (w.distance(&probe) - 0.1).abs() < 1e-9 {
                out.push(approach_sequence(a, d, 1e-1, 1e-6, 30));
                break;
            }
        }
    }
    out
}

fn zeroset(ctx: &RunContext, report: &mut RunReport) -> Result<()> {
    let rd = regdist_run(ctx, report)?;
    let probes = ctx.grid.points_off(ctx.s.w.as_ref(), 0.0)?;
    let h = zero_set_function(rd.f().field.clone(), ctx.s.w.clone(), ctx.p(), &probes).context("zeroset")?;
    let mut r = zero_set_equivalence(&h, rd.a_hat, &probes);
    let sequences = approach_sequences(ctx);
    if sequences.is_empty() {
        r.ambiguous("flatness", "no approach direction found", &[]);
    }
    for seq in &sequences {
        r.merge(flatness_check(&h, ctx.s.w.as_ref(), ctx.p(), seq).context("zeroset")?);
    }
    ctx.write(report, "zeroset.csv", &r.to_csv())?;
    report.add("zeroset", r);
    Ok(())
}

fn levelset(ctx: &RunContext, report: &mut RunReport) -> Result<()> {
    let rd = regdist_run(ctx, report)?;
    let samples = ctx.w_samples();
    let f: FieldRef = rd.f().field.clone();
    let levels = ctx.levels();
    let (table, sets) =
        hausdorff_convergence(f.as_ref(), &samples, &levels, &ctx.grid.bbox, ctx.grid.resolution).context("levelset")?;
    for (k, set) in sets.iter().enumerate() {
        ctx.write(report, &format!("levelset_{}.csv", k + 1), &points_csv(&set.points))?;
    }
    ctx.write(report, "convergence.csv", &table.to_csv())?;
    if ctx.svg && ctx.s.n == 2 {
        ctx.write(report, "levelset.svg", &svg::overlay(&ctx.grid.bbox, &samples, &sets))?;
    }
    let mut r = CertificateReport::new();
    let slack = 2.0 * ctx.grid.pitch();
    r.check("levelset", "converging", &[], table.converging(rd.a_hat, slack));
    for w in &table.warnings {
        r.note(w.clone());
    }
    for row in &table.rows {
        report.lines.push(format!("t = {}: d_H = {} ({} points)", fmt_f64(row.t), fmt_f64(row.hausdorff), row.count));
    }
    report.add("levelset", r);
    Ok(())
}

fn lambda(ctx: &RunContext, report: &mut RunReport) -> Result<()> {
    let samples = ctx.w_samples();
    let levels = if ctx.scene.params.t_list.is_empty() { DEFAULT_LEVELS[..3].to_vec() } else { ctx.levels() };
    let mut csv = String::from("eps,lambda,ratio\n");
    let mut r = CertificateReport::new();
    let mut previous: Option<(f64, f64)> = None;
    for eps in levels {
        let l = lambda_eps(&samples, eps, &ctx.grid.bbox, ctx.grid.resolution).context("lambda")?;
        let _ = writeln!(csv, "{},{},{}", fmt_f64(eps), fmt_f64(l), fmt_f64(l / eps));
        report.lines.push(format!("eps = {}: lambda = {}", fmt_f64(eps), fmt_f64(l)));
        if let Some((e0, l0)) = previous {
            let scaling = (l / l0) / (eps / e0);
            r.check_le("lambda", "scales with eps within 20%", &[eps], 0.2, (scaling - 1.0).abs(), 0.0);
        }
        previous = Some((eps, l));
    }
    ctx.write(report, "lambda.csv", &csv)?;
    report.add("lambda", r);
    Ok(())
}

pub fn run(ctx: &RunContext, command: Command) -> Result<RunReport> {
    let mut report = RunReport::default();
    match command {
        Command::Validate => validate(ctx, &mut report)?,
        Command::Partition => partition(ctx, &mut report)?,
        Command::Approx => approx(ctx, &mut report)?,
        Command::Regdist => {
            regdist_run(ctx, &mut report)?;
        }
        Command::Zeroset => zeroset(ctx, &mut report)?,
        Command::Levelset => levelset(ctx, &mut report)?,
        Command::Lambda => lambda(ctx, &mut report)?,
        Command::Report => {
            validate(ctx, &mut report)?;
            partition(ctx, &mut report)?;
            if ctx.s.n == 2 {
                levelset(ctx, &mut report)?;
            } else {
                regdist_run(ctx, &mut report)?;
            }
            let merged = report.merged();
            ctx.write(&mut report, "report.csv", &merged.to_csv())?;
            ctx.write(&mut report, "scene.txt", &ctx.scene.dump())?;
        }
    }
    Ok(report)
}

