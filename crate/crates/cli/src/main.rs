use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ramcell_core::cell::parse_report;
use ramcell_core::config::Config;
use ramcell_core::cure_sim::Measure;
use ramcell_core::gcode;
use ramcell_core::job::{self, PlannedPath, Simulation};
use ramcell_core::shapes::BuiltinShape;
use ramcell_core::JobError;
use thiserror::Error;

/// Offline planner and simulator for a UV-assisted robotic resin printing cell.
#[derive(Parser)]
#[command(name = "ramcell", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the toolpath and write it as g-code plus an oriented path dump.
    Plan(JobArgs),
    /// Plan, check and simulate the job; writes report.txt.
    Simulate(JobArgs),
    /// Write the robot script, step schedule and I/O events of a passing job.
    Emit(JobArgs),
    /// Compare report predictions with the reference specimen dimensions.
    Report {
        /// Report files (default: out/report.txt).
        paths: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct JobArgs {
    #[arg(long, env = "RAMCELL_CONFIG")]
    config: Option<PathBuf>,
    /// Built-in shape, e.g. rectangle-90x60, wall-50x10, square-30x30x8.5.
    #[arg(long, conflicts_with = "gcode")]
    shape: Option<String>,
    #[arg(long)]
    gcode: Option<PathBuf>,
    #[arg(long)]
    material: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit even when elements are flagged as under-cured.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Job(#[from] JobError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Malformed(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 3,
            _ => 2,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    println!("wrote {}", path.display());
    Ok(())
}

struct Job {
    cfg: Config,
    gcode_text: Option<String>,
    out: PathBuf,
}

fn load_job(a: &JobArgs) -> Result<Job, CliError> {
    let (mut cfg, base) = match &a.config {
        Some(p) => {
            let cfg = Config::from_toml(&read(p)?).map_err(JobError::from)?;
            (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (Config::default(), PathBuf::new()),
    };
    let mut gcode_path = cfg.job.gcode.as_ref().map(|g| base.join(g));
    if let Some(s) = &a.shape {
        cfg.job.shape = Some(s.clone());
        cfg.job.gcode = None;
        gcode_path = None;
    }
    if let Some(g) = &a.gcode {
        cfg.job.shape = None;
        cfg.job.gcode = Some(g.display().to_string());
        gcode_path = Some(g.clone());
    }
    if let Some(m) = &a.material {
        cfg.job.material = m.clone();
    }
    if let Some(o) = &a.out {
        cfg.job.output_dir = o.display().to_string();
    }
    cfg.validate().map_err(JobError::from)?;
    let gcode_text = gcode_path.as_deref().map(read).transpose()?;
    let out = PathBuf::from(&cfg.job.output_dir);
    Ok(Job { cfg, gcode_text, out })
}

fn prepare(job: &Job) -> Result<PlannedPath, CliError> {
    Ok(job::prepare_path(&job.cfg, job.gcode_text.as_deref())?)
}

fn out_dir(job: &Job) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&job.out).map_err(|source| CliError::Io { path: job.out.clone(), source })?;
    Ok(&job.out)
}

fn cmd_plan(a: &JobArgs) -> Result<(), CliError> {
    let job = load_job(a)?;
    let p = prepare(&job)?;
    let dir = out_dir(&job)?;
    write(&dir.join("toolpath.gcode"), &gcode::emit(&p.toolpath))?;
    write(&dir.join("toolpath.txt"), &job::toolpath_dump(&p.toolpath))?;
    write(&dir.join("config.toml"), &job.cfg.to_toml())?;
    Ok(())
}

fn failures(sim: &Simulation, force: bool) -> Option<String> {
    let r = &sim.report;
    let mut why = Vec::new();
    if !r.plan_failures.is_empty() {
        why.push(format!("{} planning failure(s)", r.plan_failures.len()));
    }
    if !r.collisions.is_empty() {
        why.push(format!("{} collision(s)", r.collisions.len()));
    }
    if r.undercured() > 0 && !force {
        why.push(format!("{} under-cured element(s)", r.undercured()));
    }
    (!why.is_empty()).then(|| why.join(", "))
}

fn cmd_simulate(a: &JobArgs) -> Result<(), CliError> {
    let job = load_job(a)?;
    let sim = job::simulate(&job.cfg, &prepare(&job)?)?;
    let text = sim.report.to_text();
    write(&out_dir(&job)?.join("report.txt"), &text)?;
    for line in text.lines().filter(|l| l.starts_with("plan_failure.") || l.starts_with("collision.")) {
        eprintln!("{line}");
    }
    match failures(&sim, false) {
        Some(why) => Err(CliError::Failed(format!("checks failed: {why}"))),
        None => Ok(()),
    }
}

fn cmd_emit(a: &JobArgs) -> Result<(), CliError> {
    let job = load_job(a)?;
    let sim = job::simulate(&job.cfg, &prepare(&job)?)?;
    if let Some(why) = failures(&sim, a.force) {
        return Err(CliError::Failed(format!("refusing to emit: {why}")));
    }
    let art = job::emit(&sim).map_err(|e| CliError::Failed(e.to_string()))?;
    let dir = out_dir(&job)?;
    write(&dir.join("program.script"), &art.script)?;
    write(&dir.join("steps.csv"), &art.steps_csv)?;
    write(&dir.join("io_events.csv"), &art.events_csv)?;
    Ok(())
}

fn measure_key(m: Measure) -> &'static str {
    match m {
        Measure::Length => "predicted.length_mm",
        Measure::Width => "predicted.width_mm",
        Measure::Height => "predicted.height_mm",
    }
}

/// Label, measured extent, and reference (mean, tolerance) if known.
type Row = (&'static str, Measure, Option<(f64, f64)>);

/// Table of predicted against reference dimensions for one report.
fn report_table(kv: &[(String, String)], source: &Path) -> Result<String, CliError> {
    let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
    let bad = |msg: String| CliError::Malformed(format!("{}: {msg}", source.display()));
    match get("report_version") {
        Some("1") => {}
        Some(v) => return Err(bad(format!("unsupported report_version {v}"))),
        None => return Err(bad("missing report_version".into())),
    }
    let specimen = get("specimen").ok_or_else(|| bad("missing specimen".into()))?;
    let num = |k: &str| -> Result<Option<f64>, CliError> {
        get(k).map(|v| v.parse::<f64>().map_err(|_| bad(format!("{k} is not a number: {v}")))).transpose()
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{specimen} ({}, printable={}, undercured={})",
        get("material").unwrap_or("?"),
        get("printable").unwrap_or("?"),
        get("cure.undercured").unwrap_or("?")
    );
    let rows: Vec<Row> = match specimen.parse::<BuiltinShape>() {
        Ok(shape) => shape.reference().into_iter().map(|r| (r.label, r.measure, Some((r.mean, r.tol)))).collect(),
        Err(_) => {
            vec![("length", Measure::Length, None), ("width", Measure::Width, None), ("height", Measure::Height, None)]
        }
    };
    let _ = writeln!(
        s,
        "  {:<10} {:>12} {:>16} {:>12}  in_band",
        "dimension", "predicted_mm", "reference_mm", "deviation_mm"
    );
    for (label, m, reference) in rows {
        let pred = num(measure_key(m))?;
        let p = pred.map_or("-".to_string(), |v| format!("{v:.3}"));
        let (r, d, ok) = match (reference, pred) {
            (Some((mean, tol)), Some(v)) => {
                let ok = if tol > 0.0 {
                    if (v - mean).abs() <= tol + 1e-9 {
                        "yes"
                    } else {
                        "no"
                    }
                } else {
                    "nominal"
                };
                (format!("{mean:.2} ± {tol:.2}"), format!("{:+.3}", v - mean), ok)
            }
            (Some((mean, tol)), None) => (format!("{mean:.2} ± {tol:.2}"), "-".into(), "-"),
            (None, _) => ("-".into(), "-".into(), "-"),
        };
        let _ = writeln!(s, "  {label:<10} {p:>12} {r:>16} {d:>12}  {ok}");
    }
    if let Some(lw) = num("predicted.line_width_mm")? {
        let _ = writeln!(s, "  line width {lw:.3} mm, min dose ratio {}", get("dose.min_ratio").unwrap_or("-"));
    }
    Ok(s)
}

fn cmd_report(paths: &[PathBuf]) -> Result<(), CliError> {
    let default = [PathBuf::from("out/report.txt")];
    let paths = if paths.is_empty() { &default[..] } else { paths };
    let mut tables = Vec::new();
    for p in paths {
        let kv = parse_report(&read(p)?).map_err(|e| CliError::Malformed(format!("{}: {e}", p.display())))?;
        if !kv.is_empty() {
            tables.push(report_table(&kv, p)?);
        }
    }
    if tables.is_empty() {
        println!("no specimens");
    } else {
        print!("{}", tables.join("\n"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Plan(a) => cmd_plan(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Emit(a) => cmd_emit(a),
        Cmd::Report { paths } => cmd_report(paths),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ramcell: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
