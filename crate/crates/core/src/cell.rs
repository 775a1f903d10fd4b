//! Trajectory planning, collision and singularity checks, robot program output.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cure_sim::{DepositionMap, Dimensions};
use crate::error::PlanError;
use crate::extrusion::{Channel, IoEvent, StepSchedule};
use crate::geometry::{compose, Pose, Vec3};
use crate::kinematics::{fk, ik_seeded, manipulability, select_branch, DhParams, JointConfig, JointLimits};
use crate::toolpath::{Timeline, Toolpath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.max[i] > self.min[i])
    }

    pub fn distance(&self, p: Vec3) -> f64 {
        let p = [p.x, p.y, p.z];
        let mut s = 0.0;
        for i in 0..3 {
            let d = (self.min[i] - p[i]).max(0.0).max(p[i] - self.max[i]);
            s += d * d;
        }
        s.sqrt()
    }
}

/// End-effector collision shape: a capsule along the nozzle axis whose lowest
/// point sits `clearance` above the nozzle tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Capsule {
    pub radius: f64,
    /// Overall length including both end caps, mm.
    pub length: f64,
    pub clearance: f64,
}

impl Default for Capsule {
    fn default() -> Self {
        Capsule { radius: 60.0, length: 250.0, clearance: 2.0 }
    }
}

impl Capsule {
    /// Axis segment in world coordinates for a TCP pose.
    pub fn axis(&self, tcp: &Pose) -> (Vec3, Vec3) {
        let up = -tcp.orientation.rotate(Vec3::Z);
        let a = tcp.position + up * (self.clearance + self.radius);
        let b = a + up * (self.length - 2.0 * self.radius).max(0.0);
        (a, b)
    }

    /// Smallest distance from the capsule axis to a box, found by
    /// golden-section search along the axis (the distance is convex there).
    pub fn axis_distance(&self, a: Vec3, b: Vec3, boxed: &Aabb) -> f64 {
        let f = |s: f64| boxed.distance(a.lerp(b, s));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..60 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        f(0.0).min(f(1.0)).min(f(0.5 * (lo + hi)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellEnvironment {
    pub table_z: f64,
    #[serde(default)]
    pub obstacles: Vec<Aabb>,
    /// Robot base position in the world frame; the base is not rotated.
    pub base: [f64; 3],
    /// World position of the specimen origin.
    pub print_origin: [f64; 3],
    pub capsule: Capsule,
}

impl Default for CellEnvironment {
    fn default() -> Self {
        CellEnvironment {
            table_z: 0.0,
            obstacles: Vec::new(),
            base: [0.0, 0.0, 0.0],
            print_origin: [400.0, 0.0, 0.0],
            capsule: Capsule::default(),
        }
    }
}

impl CellEnvironment {
    pub fn base_pose(&self) -> Pose {
        Pose::from_translation(Vec3::new(self.base[0], self.base[1], self.base[2]))
    }

    pub fn origin(&self) -> Vec3 {
        Vec3::new(self.print_origin[0], self.print_origin[1], self.print_origin[2])
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(i) = self.obstacles.iter().position(|o| !o.is_valid()) {
            return Err(format!("obstacle {i} is degenerate"));
        }
        let c = &self.capsule;
        if !(c.radius > 0.0 && c.length >= 2.0 * c.radius && c.clearance >= 0.0) {
            return Err("capsule needs radius > 0, length >= 2 radius, clearance >= 0".into());
        }
        if !self.base.iter().chain(&self.print_origin).all(|v| v.is_finite()) {
            return Err("base and print origin must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub dh: DhParams,
    pub tcp: Pose,
    pub limits: JointLimits,
    /// rad/s, every joint.
    pub max_joint_speed: f64,
    /// Largest joint change allowed between consecutive linear waypoints, rad.
    pub jump_limit: f64,
    /// Manipulability below which a pose counts as singular.
    pub singularity_eps: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        RobotModel {
            dh: DhParams::ur5e(),
            tcp: Pose::from_translation(Vec3::new(0.0, 0.0, 150.0)),
            limits: JointLimits::default(),
            max_joint_speed: std::f64::consts::PI,
            jump_limit: 0.5,
            singularity_eps: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    Joint,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    /// Arrival time, s.
    pub time: f64,
    pub q: JointConfig,
    pub kind: MoveKind,
    /// TCP speed of the move into this waypoint, mm/s; zero for in-place moves.
    pub speed: f64,
    /// Path length travelled up to this waypoint, mm.
    pub path_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RobotProgram {
    pub waypoints: Vec<Waypoint>,
    pub events: Vec<IoEvent>,
    pub meta: Vec<(String, String)>,
}

impl RobotProgram {
    pub fn duration(&self) -> f64 {
        let w = self.waypoints.last().map_or(0.0, |w| w.time);
        let e = self.events.last().map_or(0.0, |e| e.time);
        w.max(e)
    }

    /// Joint configuration and path position at `time`, linear between
    /// waypoints.
    pub fn sample(&self, time: f64) -> Option<(JointConfig, f64)> {
        let w = &self.waypoints;
        let first = w.first()?;
        if time <= first.time {
            return Some((first.q, first.path_s));
        }
        let i = w.partition_point(|p| p.time <= time);
        if i >= w.len() {
            let last = w[w.len() - 1];
            return Some((last.q, last.path_s));
        }
        let (a, b) = (&w[i - 1], &w[i]);
        let f = (time - a.time) / (b.time - a.time);
        let q = JointConfig(std::array::from_fn(|j| a.q.0[j] + f * (b.q.0[j] - a.q.0[j])));
        Some((q, a.path_s + f * (b.path_s - a.path_s)))
    }
}

/// World pose of the TCP for joint configuration `q`.
pub fn tcp_world(q: &JointConfig, robot: &RobotModel, env: &CellEnvironment) -> Pose {
    compose(&env.base_pose(), &fk(q, &robot.dh, &robot.tcp))
}

/// Joint-space program that moves the TCP along `t` on `timeline`. The
/// toolpath is in specimen coordinates; the environment places it in the
/// world.
pub fn plan_trajectory(
    t: &Toolpath,
    timeline: &Timeline,
    schedule: &StepSchedule,
    robot: &RobotModel,
    env: &CellEnvironment,
) -> Result<RobotProgram, PlanError> {
    let mut prog = RobotProgram { events: schedule.events.clone(), ..RobotProgram::default() };
    if t.is_empty() {
        prog.events.clear();
        return Ok(prog);
    }
    let to_base = env.base_pose().inverse();
    let origin = env.origin();
    let mut prev = JointConfig::HOME;
    let mut prev_tag = None;
    let mut path_s = 0.0;
    let mut solve = |pos: Vec3,
                     seg: &crate::toolpath::Segment,
                     time: f64,
                     kind: MoveKind,
                     speed: f64,
                     path_s: f64,
                     prog: &mut RobotProgram| {
        let index = prog.waypoints.len();
        let target = compose(&to_base, &Pose::new(pos + origin, seg.orientation));
        let mut sols = ik_seeded(&target, &robot.dh, &robot.tcp, prev.0[5]);
        // Stay on the current branch so in-place turns only spin the wrist.
        let same: Vec<_> = sols.solutions.iter().copied().filter(|s| Some(s.tag) == prev_tag).collect();
        if !same.is_empty() {
            sols.solutions = same;
        }
        let sol = select_branch(&sols, &prev, &robot.limits)
            .map_err(|_| PlanError::Unreachable { index, distance: path_s })?;
        prev_tag = Some(sol.tag);
        if let Some(last) = prog.waypoints.last() {
            let jump = sol.q.max_distance(&last.q);
            if kind == MoveKind::Linear && jump > robot.jump_limit {
                return Err(PlanError::ConfigurationJump { index, distance: path_s, jump });
            }
            let dt = time - last.time;
            for j in 0..6 {
                if (sol.q.0[j] - last.q.0[j]).abs() > robot.max_joint_speed * dt + 1e-9 {
                    return Err(PlanError::JointSpeed { index, joint: j });
                }
            }
        }
        prog.waypoints.push(Waypoint { time, q: sol.q, kind, speed, path_s });
        prev = sol.q;
        Ok(())
    };
    for (i, (s, tm)) in t.segments.iter().zip(&timeline.timings).enumerate() {
        if i == 0 {
            solve(s.start, s, tm.start, MoveKind::Joint, 0.0, 0.0, &mut prog)?;
        } else if tm.start > tm.dwell_start {
            solve(s.start, s, tm.start, MoveKind::Joint, 0.0, path_s, &mut prog)?;
        }
        path_s += s.length();
        solve(s.end, s, tm.end, MoveKind::Linear, s.speed, path_s, &mut prog)?;
    }
    Ok(prog)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CollisionTarget {
    Table,
    Print,
    Obstacle(usize),
}

impl std::fmt::Display for CollisionTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CollisionTarget::Table => f.write_str("table"),
            CollisionTarget::Print => f.write_str("print"),
            CollisionTarget::Obstacle(i) => write!(f, "obstacle{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub target: CollisionTarget,
    pub time: f64,
    pub path_s: f64,
}

/// Deposited material as world-frame boxes with their deposit times, sorted
/// by time.
#[derive(Debug, Clone, Default)]
pub struct PrintedVolume {
    pub boxes: Vec<(f64, Aabb)>,
}

impl PrintedVolume {
    pub fn from_map(map: &DepositionMap, env: &CellEnvironment) -> PrintedVolume {
        let o = env.origin();
        let mut boxes: Vec<(f64, Aabb)> = map
            .elements
            .iter()
            .map(|e| {
                let (a, b) = e.bounds();
                let (a, b) = (a + o, b + o);
                (e.deposit_time, Aabb { min: [a.x, a.y, a.z], max: [b.x, b.y, b.z] })
            })
            .collect();
        boxes.sort_by(|x, y| x.0.total_cmp(&y.0));
        PrintedVolume { boxes }
    }
}

/// Sample period of collision and singularity checks, s.
pub const SAMPLE_DT: f64 = 0.01;

fn sample_times(p: &RobotProgram) -> impl Iterator<Item = f64> + '_ {
    let end = p.duration();
    let n = (end / SAMPLE_DT).ceil() as usize;
    (0..=n).map(move |k| (k as f64 * SAMPLE_DT).min(end))
}

/// Earliest contact of the end-effector capsule with the table, the material
/// printed so far, and each obstacle.
pub fn check_collisions(
    p: &RobotProgram,
    robot: &RobotModel,
    env: &CellEnvironment,
    printed: &PrintedVolume,
) -> Vec<CollisionEvent> {
    let mut found: Vec<CollisionEvent> = Vec::new();
    let hit = |target, time, path_s, found: &mut Vec<CollisionEvent>| {
        if !found.iter().any(|e| e.target == target) {
            found.push(CollisionEvent { target, time, path_s });
        }
    };
    let cap = env.capsule;
    let mut n_printed = 0;
    let mut top = f64::NEG_INFINITY;
    for time in sample_times(p) {
        let Some((q, path_s)) = p.sample(time) else { break };
        let pose = tcp_world(&q, robot, env);
        let (a, b) = cap.axis(&pose);
        let low = a.z.min(b.z) - cap.radius;
        if low < env.table_z - 1e-9 {
            hit(CollisionTarget::Table, time, path_s, &mut found);
        }
        while n_printed < printed.boxes.len() && printed.boxes[n_printed].0 <= time {
            top = top.max(printed.boxes[n_printed].1.max[2]);
            n_printed += 1;
        }
        if low < top && printed.boxes[..n_printed].iter().any(|(_, bx)| cap.axis_distance(a, b, bx) < cap.radius) {
            hit(CollisionTarget::Print, time, path_s, &mut found);
        }
        for (i, ob) in env.obstacles.iter().enumerate() {
            if cap.axis_distance(a, b, ob) < cap.radius {
                hit(CollisionTarget::Obstacle(i), time, path_s, &mut found);
            }
        }
    }
    found.sort_by(|x, y| x.time.total_cmp(&y.time).then(x.target.cmp(&y.target)));
    found
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityWarning {
    pub entry_time: f64,
    pub exit_time: f64,
    pub entry_path_s: f64,
    pub min_manipulability: f64,
}

/// Contiguous sampled intervals where manipulability drops below `eps`.
pub fn detect_singularity_traversal(p: &RobotProgram, robot: &RobotModel, eps: f64) -> Vec<SingularityWarning> {
    let mut out = Vec::new();
    let mut open: Option<SingularityWarning> = None;
    let mut last_time = 0.0;
    for time in sample_times(p) {
        let Some((q, path_s)) = p.sample(time) else { break };
        let m = manipulability(&q, &robot.dh, &robot.tcp);
        if m < eps {
            let w = open.get_or_insert(SingularityWarning {
                entry_time: time,
                exit_time: time,
                entry_path_s: path_s,
                min_manipulability: m,
            });
            w.exit_time = time;
            w.min_manipulability = w.min_manipulability.min(m);
        } else if let Some(w) = open.take() {
            out.push(SingularityWarning { exit_time: time, ..w });
        }
        last_time = time;
    }
    if let Some(w) = open {
        out.push(SingularityWarning { exit_time: last_time, ..w });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoseSummary {
    pub elements: usize,
    pub min_dose: f64,
    pub median_dose: f64,
    pub min_dose_ratio: f64,
    pub min_alpha: f64,
    pub mean_alpha: f64,
    pub alpha_min: f64,
    pub undercured: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimReport {
    pub meta: Vec<(String, String)>,
    pub plan_failures: Vec<String>,
    pub collisions: Vec<CollisionEvent>,
    pub singularities: Vec<SingularityWarning>,
    pub dose: Option<DoseSummary>,
    pub dimensions: Option<Dimensions>,
}

/// Format version of the report file.
pub const REPORT_VERSION: u32 = 1;

impl SimReport {
    pub fn printable(&self) -> bool {
        self.plan_failures.is_empty() && self.collisions.is_empty()
    }

    pub fn undercured(&self) -> usize {
        self.dose.map_or(0, |d| d.undercured)
    }

    /// Line-oriented `key=value` text; numbers use fixed precision so equal
    /// reports are byte-identical.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("report_version", &REPORT_VERSION);
        for (k, v) in &self.meta {
            kv(k, v);
        }
        kv("printable", &self.printable());
        kv("plan_failures", &self.plan_failures.len());
        for (i, f) in self.plan_failures.iter().enumerate() {
            kv(&format!("plan_failure.{i}"), f);
        }
        kv("collisions", &self.collisions.len());
        for (i, c) in self.collisions.iter().enumerate() {
            kv(&format!("collision.{i}"), &format!("{} at t={:.3} s, path {:.3} mm", c.target, c.time, c.path_s));
        }
        kv("singularity_warnings", &self.singularities.len());
        for (i, w) in self.singularities.iter().enumerate() {
            kv(
                &format!("singularity.{i}"),
                &format!(
                    "t={:.3}..{:.3} s, path {:.3} mm, min manipulability {:.6e}; add a second UV source over this stretch",
                    w.entry_time, w.exit_time, w.entry_path_s, w.min_manipulability
                ),
            );
        }
        if let Some(d) = &self.dose {
            kv("dose.elements", &d.elements);
            kv("dose.min_j_per_mm2", &format!("{:.6}", d.min_dose));
            kv("dose.median_j_per_mm2", &format!("{:.6}", d.median_dose));
            kv("dose.min_ratio", &format!("{:.4}", d.min_dose_ratio));
            kv("cure.min_alpha", &format!("{:.4}", d.min_alpha));
            kv("cure.mean_alpha", &format!("{:.4}", d.mean_alpha));
            kv("cure.alpha_min", &format!("{:.4}", d.alpha_min));
            kv("cure.undercured", &d.undercured);
        }
        if let Some(d) = &self.dimensions {
            kv("predicted.length_mm", &format!("{:.3}", d.length));
            kv("predicted.width_mm", &format!("{:.3}", d.width));
            kv("predicted.height_mm", &format!("{:.3}", d.height));
            kv("predicted.line_width_mm", &format!("{:.3}", d.line_width));
        }
        s
    }
}

/// Parses `key=value` report text. Blank lines and `#` comments are skipped.
pub fn parse_report(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => out.push((k.trim().to_string(), v.trim().to_string())),
            _ => return Err(format!("line {}: expected key=value", n + 1)),
        }
    }
    Ok(out)
}

/// Digital output channel numbers on the robot controller.
pub fn io_channel(c: Channel) -> u8 {
    match c {
        Channel::Extruder => 0,
        Channel::Uv => 1,
    }
}

fn joints(q: &JointConfig) -> String {
    let v: Vec<String> = q.0.iter().map(|x| format!("{:.6}", if *x == 0.0 { 0.0 } else { *x })).collect();
    format!("[{}]", v.join(", "))
}

/// Robot script text. Moves and output switches are merged in time order; an
/// output switch at a waypoint's arrival time follows that waypoint. Outputs
/// still on at the end are switched off.
pub fn emit_program(p: &RobotProgram, report: &SimReport) -> Result<String, PlanError> {
    if !report.printable() {
        return Err(PlanError::NotPrintable);
    }
    let mut s = String::new();
    let _ = writeln!(s, "# ramcell robot script v1");
    let _ = writeln!(s, "# joints in rad, times in s from program start, speeds in mm/s");
    let _ =
        writeln!(s, "# digital outputs: {} extruder, {} uv", io_channel(Channel::Extruder), io_channel(Channel::Uv));
    for (k, v) in &p.meta {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(s, "def ramcell_program():");
    let mut state = [false, false];
    let mut ev = p.events.iter().peekable();
    let out_line = |s: &mut String, e: &IoEvent, state: &mut [bool; 2]| {
        state[e.channel as usize] = e.on;
        let _ = writeln!(s, "  set_digital_out({}, {})", io_channel(e.channel), if e.on { "True" } else { "False" });
    };
    for w in &p.waypoints {
        while let Some(e) = ev.next_if(|e| e.time < w.time) {
            out_line(&mut s, e, &mut state);
        }
        match w.kind {
            MoveKind::Joint => {
                let _ = writeln!(s, "  movej({}, t={:.6})", joints(&w.q), w.time);
            }
            MoveKind::Linear => {
                let _ = writeln!(s, "  movel({}, t={:.6}, v={:.6})", joints(&w.q), w.time, w.speed);
            }
        }
    }
    for e in ev {
        out_line(&mut s, e, &mut state);
    }
    for ch in [Channel::Extruder, Channel::Uv] {
        if state[ch as usize] {
            let _ = writeln!(s, "  set_digital_out({}, False)", io_channel(ch));
        }
    }
    let _ = writeln!(s, "end");
    Ok(s)
}
