//! Volumetric flow, syringe drive-train math and step scheduling.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ExtrusionError;
use crate::toolpath::{Timeline, Toolpath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowModel {
    /// Volumetric rate, mm³/s.
    pub q: f64,
}

impl Default for FlowModel {
    fn default() -> Self {
        FlowModel { q: 5.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Nozzle {
    /// mm
    pub diameter: f64,
    /// Length of the straight bore used by the pressure model, mm.
    pub land_length: f64,
}

impl Default for Nozzle {
    fn default() -> Self {
        Nozzle { diameter: 1.5, land_length: 10.0 }
    }
}

impl Nozzle {
    pub fn area(&self) -> f64 {
        PI * 0.25 * self.diameter * self.diameter
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveTrain {
    /// Syringe inner diameter, mm.
    pub bore_diameter: f64,
    /// mL
    pub capacity_ml: f64,
    /// Usable plunger travel, mm.
    pub plunger_travel: f64,
    /// Lead-screw advance per revolution, mm.
    pub lead: f64,
    pub steps_per_rev: u32,
    pub microstep: u32,
    /// Screw efficiency in (0, 1].
    pub efficiency: f64,
    /// N·m
    pub rated_torque: f64,
    /// steps/s
    pub max_step_rate: f64,
}

impl Default for DriveTrain {
    fn default() -> Self {
        let bore = 40.0;
        DriveTrain {
            bore_diameter: bore,
            capacity_ml: 200.0,
            plunger_travel: 200_000.0 / (PI * 0.25 * bore * bore),
            lead: 8.0,
            steps_per_rev: 200,
            microstep: 8,
            efficiency: 0.5,
            rated_torque: 1.9,
            max_step_rate: 20_000.0,
        }
    }
}

impl DriveTrain {
    pub fn bore_area(&self) -> f64 {
        PI * 0.25 * self.bore_diameter * self.bore_diameter
    }

    /// Microsteps per mm of plunger travel.
    pub fn steps_per_mm(&self) -> f64 {
        f64::from(self.steps_per_rev) * f64::from(self.microstep) / self.lead
    }

    /// Dispensed volume per microstep, mm³.
    pub fn volume_per_step(&self) -> f64 {
        self.bore_area() / self.steps_per_mm()
    }

    pub fn validate(&self) -> Result<(), ExtrusionError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.bore_diameter) {
            return Err(ExtrusionError::InvalidDrive("bore diameter must be positive"));
        }
        if !pos(self.capacity_ml) || !pos(self.plunger_travel) {
            return Err(ExtrusionError::InvalidDrive("capacity and plunger travel must be positive"));
        }
        if !pos(self.lead) || self.steps_per_rev == 0 || self.microstep == 0 {
            return Err(ExtrusionError::InvalidDrive("lead and step counts must be positive"));
        }
        if !pos(self.efficiency) || self.efficiency > 1.0 {
            return Err(ExtrusionError::InvalidDrive("efficiency must be in (0, 1]"));
        }
        if !pos(self.rated_torque) || !pos(self.max_step_rate) {
            return Err(ExtrusionError::InvalidDrive("rated torque and max step rate must be positive"));
        }
        let swept = self.plunger_travel * self.bore_area() / 1000.0;
        if (swept - self.capacity_ml).abs() > 0.05 * self.capacity_ml {
            return Err(ExtrusionError::InvalidDrive("capacity does not match plunger travel times bore area"));
        }
        Ok(())
    }
}

/// Bead cross-section area for flow `q` at travel speed `v`.
pub fn bead_area(q: f64, v: f64) -> Result<f64, ExtrusionError> {
    if !(v > 0.0) {
        return Err(ExtrusionError::NonPositiveSpeed(v));
    }
    Ok(q / v)
}

/// Microstep rate that dispenses `q` mm³/s.
pub fn step_rate(q: f64, d: &DriveTrain) -> f64 {
    q / d.bore_area() * d.steps_per_mm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Extruder,
    Uv,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Extruder => "extruder",
            Channel::Uv => "uv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoEvent {
    pub time: f64,
    pub channel: Channel,
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    /// (time s, cumulative microsteps); fractional steps are kept.
    pub breakpoints: Vec<(f64, f64)>,
    pub events: Vec<IoEvent>,
    pub volume_per_step: f64,
}

impl StepSchedule {
    pub fn total_steps(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |b| b.1)
    }

    pub fn total_volume(&self) -> f64 {
        self.total_steps() * self.volume_per_step
    }

    /// Cumulative steps at `time`, linear between breakpoints.
    pub fn steps_at(&self, time: f64) -> f64 {
        let b = &self.breakpoints;
        if b.is_empty() || time <= b[0].0 {
            return 0.0;
        }
        let i = b.partition_point(|p| p.0 <= time);
        if i >= b.len() {
            return self.total_steps();
        }
        let (t0, s0) = b[i - 1];
        let (t1, s1) = b[i];
        s0 + (s1 - s0) * (time - t0) / (t1 - t0)
    }

    /// Intervals during which `channel` is on.
    pub fn on_intervals(&self, channel: Channel) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut since = None;
        for e in self.events.iter().filter(|e| e.channel == channel) {
            match (e.on, since) {
                (true, None) => since = Some(e.time),
                (false, Some(t0)) => {
                    out.push((t0, e.time));
                    since = None;
                }
                _ => {}
            }
        }
        out
    }

    pub fn to_steps_csv(&self) -> String {
        let mut s = String::from("time_s,cumulative_steps\n");
        for (t, n) in &self.breakpoints {
            s.push_str(&format!("{t:.6},{n:.6}\n"));
        }
        s
    }

    pub fn to_events_csv(&self) -> String {
        let mut s = String::from("time_s,channel,state\n");
        for e in &self.events {
            s.push_str(&format!("{:.6},{},{}\n", e.time, e.channel, if e.on { "on" } else { "off" }));
        }
        s
    }
}

/// Step schedule for a toolpath on its timeline. A channel is on while the
/// tool moves along a segment with that flag set and is switched off during
/// any in-place reorientation, so no material is dispensed while the tool is
/// standing still.
pub fn schedule(
    t: &Toolpath,
    timeline: &Timeline,
    f: &FlowModel,
    d: &DriveTrain,
) -> Result<StepSchedule, ExtrusionError> {
    d.validate()?;
    let rate = step_rate(f.q, d);
    if rate > d.max_step_rate {
        return Err(ExtrusionError::MotorLimit { required: rate, limit: d.max_step_rate });
    }
    let mut events = Vec::new();
    let mut bps = vec![(0.0, 0.0)];
    let mut state = [false, false];
    let mut steps = 0.0;
    let push_bp = |bps: &mut Vec<(f64, f64)>, time: f64, steps: f64| {
        let last = bps.last_mut().expect("seeded");
        if time > last.0 {
            bps.push((time, steps));
        } else {
            last.1 = steps;
        }
    };
    let set = |events: &mut Vec<IoEvent>, state: &mut [bool; 2], ch: Channel, on: bool, time: f64| {
        let k = ch as usize;
        if state[k] != on {
            state[k] = on;
            events.push(IoEvent { time, channel: ch, on });
        }
    };
    for (s, tm) in t.segments.iter().zip(&timeline.timings) {
        if tm.start > tm.dwell_start {
            for ch in [Channel::Extruder, Channel::Uv] {
                set(&mut events, &mut state, ch, false, tm.dwell_start);
            }
        }
        set(&mut events, &mut state, Channel::Extruder, s.extruding, tm.start);
        set(&mut events, &mut state, Channel::Uv, s.uv_on, tm.start);
        if s.extruding {
            push_bp(&mut bps, tm.start, steps);
            steps += rate * (tm.end - tm.start);
            push_bp(&mut bps, tm.end, steps);
        }
    }
    let end = timeline.duration();
    for ch in [Channel::Extruder, Channel::Uv] {
        set(&mut events, &mut state, ch, false, end);
    }
    push_bp(&mut bps, end, steps);
    Ok(StepSchedule { breakpoints: bps, events, volume_per_step: d.volume_per_step() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveLoad {
    /// Pa
    pub pressure: f64,
    /// N
    pub plunger_force: f64,
    /// N·m
    pub required_torque: f64,
    /// rated / required; infinite when nothing is required.
    pub margin: f64,
}

/// Newtonian nozzle pressure drop and the motor torque needed to push it.
pub fn drive_feasibility(mu: f64, n: &Nozzle, d: &DriveTrain, f: &FlowModel) -> Result<DriveLoad, ExtrusionError> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(ExtrusionError::InvalidViscosity(mu));
    }
    d.validate()?;
    let r = n.diameter * 0.5e-3;
    let l = n.land_length * 1e-3;
    let q = f.q * 1e-9;
    let pressure = 8.0 * mu * l * q / (PI * r.powi(4));
    let plunger_force = pressure * d.bore_area() * 1e-6;
    let required_torque = plunger_force * d.lead * 1e-3 / (2.0 * PI * d.efficiency);
    let margin = if required_torque > 0.0 { d.rated_torque / required_torque } else { f64::INFINITY };
    let load = DriveLoad { pressure, plunger_force, required_torque, margin };
    if margin < 1.0 {
        return Err(ExtrusionError::Infeasible { required: required_torque, rated: d.rated_torque });
    }
    Ok(load)
}
