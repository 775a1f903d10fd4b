//! Toolpath model and post-processing: UV-cure lead extensions, tool
//! orientation so the fixed UV spot trails the nozzle, resampling, and the
//! shared motion timeline.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::ToolpathError;
use crate::geometry::{Rotation, Vec3};

/// Distance below which two path points are treated as the same point.
pub const POINT_TOL: f64 = 1e-6;

/// Tool pointing straight down: tool z maps to world -z.
pub fn tool_down() -> Rotation {
    Rotation::about_x(PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Vec3,
    pub end: Vec3,
    /// mm/s
    pub speed: f64,
    pub extruding: bool,
    pub uv_on: bool,
    pub orientation: Rotation,
    pub layer: u32,
}

impl Segment {
    /// Returns `None` for degenerate (zero-length) segments.
    pub fn new(start: Vec3, end: Vec3, speed: f64, extruding: bool, uv_on: bool) -> Option<Segment> {
        if start.distance(end) <= POINT_TOL || !(speed > 0.0) || !speed.is_finite() {
            return None;
        }
        Some(Segment { start, end, speed, extruding, uv_on, orientation: tool_down(), layer: 0 })
    }

    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }

    pub fn duration(&self) -> f64 {
        self.length() / self.speed
    }

    pub fn direction(&self) -> Vec3 {
        (self.end - self.start).normalized().unwrap_or(Vec3::ZERO)
    }

    /// Nozzle axis (tool +z) in world coordinates.
    pub fn nozzle_axis(&self) -> Vec3 {
        self.orientation.rotate(Vec3::Z)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Toolpath {
    pub segments: Vec<Segment>,
}

impl Toolpath {
    pub fn new() -> Self {
        Toolpath::default()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    /// Appends a segment, silently dropping degenerate ones.
    pub fn push(&mut self, seg: Option<Segment>) {
        if let Some(s) = seg {
            self.segments.push(s);
        }
    }

    pub fn end_point(&self) -> Option<Vec3> {
        self.segments.last().map(|s| s.end)
    }

    /// Assigns `floor(z / layer_height)` to every segment, using the higher
    /// endpoint, and keeps indices non-decreasing.
    pub fn assign_layers(&mut self, layer_height: f64) {
        let mut floor = 0u32;
        for s in &mut self.segments {
            let z = s.start.z.max(s.end.z);
            let l = ((z / layer_height) + 1e-9).floor().max(0.0) as u32;
            floor = floor.max(l);
            s.layer = floor;
        }
    }

    pub fn validate(&self) -> Result<(), ToolpathError> {
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.speed > 0.0) || s.length() <= POINT_TOL {
                return Err(ToolpathError::InvalidSegment { index: i });
            }
            let axis = s.nozzle_axis();
            if axis.dot(-Vec3::Z) < (PI / 3.0).cos() - 1e-12 {
                return Err(ToolpathError::Attitude { index: i });
            }
        }
        for (i, w) in self.segments.windows(2).enumerate() {
            if w[1].layer < w[0].layer {
                return Err(ToolpathError::LayerOrder { index: i + 1 });
            }
            if w[0].extruding && w[1].extruding && w[0].layer == w[1].layer && w[0].end.distance(w[1].start) > POINT_TOL
            {
                return Err(ToolpathError::Disconnected { index: i + 1 });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionPolicy {
    /// Overrun length, mm.
    pub lead_length: f64,
    /// Turn angle above which a corner gets an overrun-and-return, rad.
    pub corner_angle: f64,
}

impl Default for ExtensionPolicy {
    fn default() -> Self {
        ExtensionPolicy { lead_length: 25.0, corner_angle: 30f64.to_radians() }
    }
}

fn overrun(from: Vec3, dir: Vec3, len: f64, like: &Segment) -> Option<Segment> {
    let mut s = Segment::new(from, from + dir * len, like.speed, false, true)?;
    s.layer = like.layer;
    s.orientation = like.orientation;
    Some(s)
}

fn already_extended(next: Option<&Segment>, dir: Vec3, len: f64) -> bool {
    match next {
        Some(n) => !n.extruding && n.uv_on && n.direction().distance(dir) < 1e-9 && n.length() >= len - POINT_TOL,
        None => false,
    }
}

fn turn_angle(a: Vec3, b: Vec3) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Adds non-extruding, UV-on overruns so the trailing spot passes over every
/// extruded point: an overrun at each open run end, and an out-and-back at
/// every sharp corner (including the closing corner of a closed loop).
///
/// Extruded segments are copied unchanged. Runs that are already followed by a
/// matching overrun are left alone, so the operation is idempotent.
pub fn add_cure_extensions(t: &Toolpath, p: &ExtensionPolicy) -> Toolpath {
    let len = p.lead_length;
    if len <= 0.0 {
        return t.clone();
    }
    let segs = &t.segments;
    let mut out = Toolpath::new();
    let mut run_start: Option<usize> = None;
    for i in 0..segs.len() {
        let s = segs[i];
        out.segments.push(s);
        if !s.extruding {
            run_start = None;
            continue;
        }
        let first = *run_start.get_or_insert(i);
        let dir = s.direction();
        let next = segs.get(i + 1);
        let continues =
            matches!(next, Some(n) if n.extruding && n.layer == s.layer && n.start.distance(s.end) <= POINT_TOL);
        if continues {
            let n = next.unwrap();
            if turn_angle(dir, n.direction()) > p.corner_angle {
                out.push(overrun(s.end, dir, len, &s));
                out.push(overrun(s.end + dir * len, -dir, len, &s));
            }
            continue;
        }
        if already_extended(next, dir, len) {
            continue;
        }
        let closed = i > first && segs[first].start.distance(s.end) <= POINT_TOL;
        if closed && turn_angle(dir, segs[first].direction()) > p.corner_angle {
            out.push(overrun(s.end, dir, len, &s));
            out.push(overrun(s.end + dir * len, -dir, len, &s));
        } else if !closed {
            out.push(overrun(s.end, dir, len, &s));
        }
    }
    out
}

/// Inserts straight non-extruding, UV-off moves at `speed` wherever a segment
/// does not start where the previous one ended.
pub fn connect_travel(t: &Toolpath, speed: f64) -> Toolpath {
    let mut out = Toolpath::new();
    for s in &t.segments {
        if let Some(prev) = out.segments.last().copied() {
            if prev.end.distance(s.start) > POINT_TOL {
                let mut gap = Segment::new(prev.end, s.start, speed, false, false);
                if let Some(g) = gap.as_mut() {
                    g.layer = prev.layer;
                    g.orientation = prev.orientation;
                }
                out.push(gap);
            }
        }
        out.segments.push(*s);
    }
    out
}

/// Yaw that makes the tool-frame UV offset point against the travel direction.
fn trailing_yaw(travel: Vec3, uv_offset_dir: Vec3) -> f64 {
    // Offset expressed in world axes with yaw = 0.
    let base = tool_down().rotate(uv_offset_dir).horizontal();
    let want = -travel.horizontal();
    want.y.atan2(want.x) - base.y.atan2(base.x)
}

/// Rotates each segment about world z so the UV spot trails the nozzle. The
/// nozzle axis stays aligned with world -z. Non-UV, non-extruding vertical
/// moves keep the previous orientation.
pub fn assign_orientations(t: &Toolpath, uv_offset_dir: Vec3) -> Result<Toolpath, ToolpathError> {
    let offset = uv_offset_dir.horizontal();
    if offset.normalized().is_none() {
        return Err(ToolpathError::OffsetDirection);
    }
    let mut out = t.clone();
    let mut prev = tool_down();
    for (i, s) in out.segments.iter_mut().enumerate() {
        let travel = (s.end - s.start).horizontal();
        if travel.normalized().is_none() {
            if s.extruding || s.uv_on {
                return Err(ToolpathError::NoTravelDirection { index: i });
            }
            s.orientation = prev;
            continue;
        }
        let yaw = trailing_yaw(travel, offset);
        s.orientation = Rotation::about_z(yaw).compose(&tool_down());
        prev = s.orientation;
    }
    Ok(out)
}

/// World-frame offset from the nozzle to the UV spot center for a segment.
pub fn spot_offset(orientation: &Rotation, uv_offset_dir: Vec3, distance: f64) -> Vec3 {
    let d = uv_offset_dir.normalized().unwrap_or(Vec3::X);
    orientation.rotate(d * distance)
}

/// Splits segments so none exceeds `max_len`. Endpoints of the original
/// segments are reproduced exactly.
pub fn resample(t: &Toolpath, max_len: f64) -> Toolpath {
    assert!(max_len > 0.0, "max_len must be positive");
    let mut out = Toolpath::new();
    for s in &t.segments {
        let n = ((s.length() / max_len) - 1e-9).ceil().max(1.0) as usize;
        let mut a = s.start;
        for k in 1..=n {
            let b = if k == n { s.end } else { s.start.lerp(s.end, k as f64 / n as f64) };
            out.segments.push(Segment { start: a, end: b, ..*s });
            a = b;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathStats {
    pub total_length: f64,
    pub extruded_length: f64,
    /// seconds
    pub extrusion_time: f64,
    pub layer_count: usize,
}

pub fn path_stats(t: &Toolpath) -> PathStats {
    let mut st = PathStats::default();
    let mut layers: Vec<u32> = Vec::new();
    for s in &t.segments {
        let l = s.length();
        st.total_length += l;
        if s.extruding {
            st.extruded_length += l;
            st.extrusion_time += l / s.speed;
            layers.push(s.layer);
        }
    }
    if layers.is_empty() {
        layers = t.segments.iter().map(|s| s.layer).collect();
    }
    layers.sort_unstable();
    layers.dedup();
    st.layer_count = layers.len();
    st
}

/// Start and end times of one segment. Between `dwell_start` and `start` the
/// tool reorients in place from the previous segment's orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentTiming {
    pub dwell_start: f64,
    pub start: f64,
    pub end: f64,
}

/// Time parametrization of a toolpath shared by extrusion scheduling, dose
/// simulation and trajectory planning.
#[derive(Debug, Clone)]
pub struct Timeline {
    pub timings: Vec<SegmentTiming>,
    /// rad/s
    pub reorient_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolState {
    pub position: Vec3,
    pub orientation: Rotation,
    pub segment: usize,
    /// True while moving along the segment, false while reorienting before it.
    pub moving: bool,
}

impl Timeline {
    pub fn new(t: &Toolpath, reorient_speed: f64) -> Timeline {
        let mut timings = Vec::with_capacity(t.len());
        let mut clock = 0.0;
        for (i, s) in t.segments.iter().enumerate() {
            let dwell =
                if i == 0 { 0.0 } else { t.segments[i - 1].orientation.angle_to(&s.orientation) / reorient_speed };
            let dwell_start = clock;
            let start = clock + dwell;
            let end = start + s.duration();
            timings.push(SegmentTiming { dwell_start, start, end });
            clock = end;
        }
        Timeline { timings, reorient_speed }
    }

    pub fn duration(&self) -> f64 {
        self.timings.last().map_or(0.0, |t| t.end)
    }

    /// Tool state at time `time`, clamped to the timeline.
    pub fn state_at(&self, t: &Toolpath, time: f64) -> Option<ToolState> {
        if self.timings.is_empty() {
            return None;
        }
        let i = self.timings.partition_point(|s| s.end < time).min(self.timings.len() - 1);
        let tm = self.timings[i];
        let s = &t.segments[i];
        if time < tm.start && i > 0 {
            let prev = t.segments[i - 1].orientation;
            let span = tm.start - tm.dwell_start;
            let f = if span > 0.0 { ((time - tm.dwell_start) / span).clamp(0.0, 1.0) } else { 1.0 };
            return Some(ToolState {
                position: s.start,
                orientation: prev.slerp(&s.orientation, f),
                segment: i,
                moving: false,
            });
        }
        let span = tm.end - tm.start;
        let f = if span > 0.0 { ((time - tm.start) / span).clamp(0.0, 1.0) } else { 1.0 };
        Some(ToolState { position: s.start.lerp(s.end, f), orientation: s.orientation, segment: i, moving: true })
    }
}
