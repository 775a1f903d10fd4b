//! End-to-end pipeline: path preparation, simulation and program output.

use crate::cell::{
    check_collisions, detect_singularity_traversal, emit_program, plan_trajectory, DoseSummary, PrintedVolume,
    RobotProgram, SimReport,
};
use crate::config::Config;
use crate::cure_sim::{
    accumulate_dose, deposit, flag_undercured, min_dose_ratio, predict_dimensions, spread, update_cure, DepositionMap,
};
use crate::error::{JobError, PlanError};
use crate::extrusion::{schedule, StepSchedule};
use crate::gcode::{self, ToolpathDefaults};
use crate::geometry::Vec3;
use crate::shapes::BuiltinShape;
use crate::toolpath::{add_cure_extensions, assign_orientations, connect_travel, resample, Timeline, Toolpath};

/// Printable path in specimen coordinates: extended, connected and oriented.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub shape: Option<BuiltinShape>,
    pub toolpath: Toolpath,
}

/// Builds the printable path from the configured shape, or from `gcode_text`
/// when the job reads a g-code file.
pub fn prepare_path(cfg: &Config, gcode_text: Option<&str>) -> Result<PlannedPath, JobError> {
    cfg.validate()?;
    let j = &cfg.job;
    let shape = cfg.shape()?;
    let raw = match (shape, gcode_text) {
        (Some(s), _) => s.generate(if s.is_3d() { j.speed_3d } else { j.speed_2d }, j.layer_height),
        (None, Some(text)) => {
            let prog = gcode::parse(text);
            if prog.has_errors() {
                let lines: Vec<String> = prog.diagnostics.iter().map(|d| d.to_string()).collect();
                return Err(JobError::GcodeDiagnostics(lines.join("\n")));
            }
            let defaults = ToolpathDefaults { speed: Some(j.speed_2d), layer_height: j.layer_height };
            gcode::to_toolpath(&prog, &defaults, Vec3::ZERO)?
        }
        (None, None) => return Err(crate::error::ConfigError::Invalid("no g-code text given".into()).into()),
    };
    let mut t = add_cure_extensions(&raw, &cfg.extension_policy());
    t = connect_travel(&t, j.travel_speed);
    t.assign_layers(j.layer_height);
    if !j.uv_enabled {
        for s in &mut t.segments {
            s.uv_on = false;
        }
    }
    let t = assign_orientations(&t, cfg.uv.offset_dir())?;
    t.validate()?;
    Ok(PlannedPath { shape, toolpath: t })
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub resampled: Toolpath,
    pub timeline: Timeline,
    pub schedule: StepSchedule,
    pub program: Option<RobotProgram>,
    pub map: DepositionMap,
    pub report: SimReport,
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Plans the robot trajectory, checks it, and simulates deposition, dose,
/// cure and spreading. Planning failures are recorded in the report.
pub fn simulate(cfg: &Config, planned: &PlannedPath) -> Result<Simulation, JobError> {
    let j = &cfg.job;
    let material = cfg.material()?.clone();
    let robot = cfg.robot();
    let resampled = resample(&planned.toolpath, cfg.model.resolution);
    let timeline = Timeline::new(&resampled, j.reorient_speed);
    let sched = schedule(&resampled, &timeline, &cfg.flow, &cfg.drive)?;

    let mut report = SimReport::default();
    let input = match (&planned.shape, &j.gcode) {
        (Some(s), _) => s.to_string(),
        (None, Some(g)) => g.clone(),
        (None, None) => "gcode".to_string(),
    };
    report.meta = vec![
        ("specimen".into(), input),
        ("material".into(), material.name.clone()),
        ("speed_2d_mm_s".into(), fmt_num(j.speed_2d)),
        ("speed_3d_mm_s".into(), fmt_num(j.speed_3d)),
        ("layer_height_mm".into(), fmt_num(j.layer_height)),
        ("uv_enabled".into(), j.uv_enabled.to_string()),
        (
            "spread_c".into(),
            format!("{} (calibrated to the fumed-silica wall and square)", fmt_num(cfg.model.spread_c)),
        ),
        ("duration_s".into(), format!("{:.3}", timeline.duration())),
    ];

    let program = match plan_trajectory(&resampled, &timeline, &sched, &robot, &cfg.cell) {
        Ok(mut p) => {
            p.meta = report.meta[..2].to_vec();
            Some(p)
        }
        Err(e) => {
            report.plan_failures.push(e.to_string());
            None
        }
    };

    let mut map = deposit(&resampled, &timeline, &cfg.flow, &cfg.nozzle, &material);
    accumulate_dose(&mut map, &resampled, &timeline, &sched, &cfg.uv, cfg.model.dt);
    update_cure(&mut map);
    spread(&mut map, cfg.model.spread_c, cfg.model.max_dwell);

    if let Some(p) = &program {
        let printed = PrintedVolume::from_map(&map, &cfg.cell);
        report.collisions = check_collisions(p, &robot, &cfg.cell, &printed);
        report.singularities = detect_singularity_traversal(p, &robot, robot.singularity_eps);
    }
    if !map.is_empty() {
        let mut doses: Vec<f64> = map.elements.iter().map(|e| e.dose).collect();
        doses.sort_by(f64::total_cmp);
        let n = doses.len();
        let median = if n % 2 == 1 { doses[n / 2] } else { 0.5 * (doses[n / 2 - 1] + doses[n / 2]) };
        let alphas = map.elements.iter().map(|e| e.alpha);
        report.dose = Some(DoseSummary {
            elements: n,
            min_dose: doses[0],
            median_dose: median,
            min_dose_ratio: min_dose_ratio(&map),
            min_alpha: alphas.clone().fold(f64::MAX, f64::min),
            mean_alpha: alphas.sum::<f64>() / n as f64,
            alpha_min: cfg.model.alpha_min,
            undercured: flag_undercured(&map, cfg.model.alpha_min).len(),
        });
        report.dimensions = predict_dimensions(&map).ok();
    }
    Ok(Simulation { resampled, timeline, schedule: sched, program, map, report })
}

/// Files written by the emit step.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitArtifacts {
    pub script: String,
    pub steps_csv: String,
    pub events_csv: String,
}

pub fn emit(sim: &Simulation) -> Result<EmitArtifacts, PlanError> {
    let program = sim.program.as_ref().ok_or(PlanError::NotPrintable)?;
    Ok(EmitArtifacts {
        script: emit_program(program, &sim.report)?,
        steps_csv: sim.schedule.to_steps_csv(),
        events_csv: sim.schedule.to_events_csv(),
    })
}

/// Human-readable dump of an oriented toolpath, one segment per line.
pub fn toolpath_dump(t: &Toolpath) -> String {
    let mut s = String::from("# index layer extruding uv speed_mm_s start_xyz end_xyz yaw_deg\n");
    for (i, seg) in t.segments.iter().enumerate() {
        let x = seg.orientation.rotate(Vec3::X);
        let yaw = x.y.atan2(x.x).to_degrees();
        let yaw = if yaw.abs() < 5e-7 { 0.0 } else { yaw };
        s.push_str(&format!(
            "{i} {} {} {} {:.3} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.3}\n",
            seg.layer,
            u8::from(seg.extruding),
            u8::from(seg.uv_on),
            seg.speed,
            seg.start.x,
            seg.start.y,
            seg.start.z,
            seg.end.x,
            seg.end.y,
            seg.end.z,
            yaw
        ));
    }
    s
}
