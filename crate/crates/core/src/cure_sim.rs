//! Deposition, trailing-spot UV dose, cure degree and bead spreading.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::extrusion::{Channel, FlowModel, Nozzle, StepSchedule};
use crate::geometry::Vec3;
use crate::toolpath::{spot_offset, Timeline, Toolpath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UvSpot {
    /// Electrical power, W.
    pub power: f64,
    /// Fraction of electrical power delivered as UV at the part.
    pub efficiency: f64,
    /// nm, informational.
    pub wavelength: f64,
    /// Cone half-angle, degrees.
    pub half_angle_deg: f64,
    /// Lamp to part distance, mm.
    pub standoff: f64,
    /// Distance from nozzle to spot center along `offset_dir`, mm.
    pub trail_offset: f64,
    /// Tool-frame direction of the spot relative to the nozzle.
    pub offset_dir: [f64; 3],
}

impl Default for UvSpot {
    fn default() -> Self {
        UvSpot {
            power: 10.0,
            efficiency: 0.3,
            wavelength: 365.0,
            half_angle_deg: 24.0,
            standoff: 30.0,
            trail_offset: 13.5,
            offset_dir: [1.0, 0.0, 0.0],
        }
    }
}

impl UvSpot {
    pub fn footprint_radius(&self) -> f64 {
        self.standoff * self.half_angle_deg.to_radians().tan()
    }

    /// W/mm², uniform over the footprint.
    pub fn irradiance(&self) -> f64 {
        let r = self.footprint_radius();
        self.power * self.efficiency / (std::f64::consts::PI * r * r)
    }

    pub fn offset_dir(&self) -> Vec3 {
        Vec3::new(self.offset_dir[0], self.offset_dir[1], self.offset_dir[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResinBase {
    Acrylic,
    Dlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Filler {
    None,
    MilledGf,
    FumedSilica,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFormulation {
    pub name: String,
    pub base: ResinBase,
    pub filler: Filler,
    pub filler_wt: f64,
    /// Dimensionless viscosity index, ordered like true viscosity.
    pub eta: f64,
    /// Cure rate, mm²/J.
    pub k: f64,
    /// Beer–Lambert attenuation depth, mm.
    pub attenuation_depth: f64,
    /// Cure degree at which a bead stops spreading.
    pub alpha_gel: f64,
    /// Multiplier on `k` for light scattered by filler.
    #[serde(default = "one")]
    pub scatter: f64,
}

fn one() -> f64 {
    1.0
}

impl MaterialFormulation {
    #[allow(clippy::too_many_arguments)]
    fn entry(name: &str, base: ResinBase, filler: Filler, wt: f64, eta: f64, k: f64, depth: f64, gel: f64) -> Self {
        MaterialFormulation {
            name: name.to_string(),
            base,
            filler,
            filler_wt: wt,
            eta,
            k,
            attenuation_depth: depth,
            alpha_gel: gel,
            scatter: 1.0,
        }
    }

    pub fn effective_k(&self) -> f64 {
        self.k * self.scatter
    }

    /// Dose at which α reaches the gel point.
    pub fn gel_dose(&self) -> f64 {
        -(1.0 - self.alpha_gel).ln() / self.effective_k()
    }

    pub fn cure_degree(&self, dose: f64) -> f64 {
        1.0 - (-self.effective_k() * dose).exp()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=100.0).contains(&self.filler_wt) {
            return Err(format!("{}: filler wt% must be in [0, 100]", self.name));
        }
        if !(self.eta > 0.0) {
            return Err(format!("{}: viscosity index must be positive", self.name));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(format!("{}: cure rate must be positive", self.name));
        }
        if !(self.attenuation_depth > 0.0) {
            return Err(format!("{}: attenuation depth must be positive", self.name));
        }
        if !(self.alpha_gel > 0.0 && self.alpha_gel < 1.0) {
            return Err(format!("{}: gel point must be in (0, 1)", self.name));
        }
        if !(self.scatter >= 1.0) {
            return Err(format!("{}: scatter multiplier must be at least 1", self.name));
        }
        Ok(())
    }
}

/// Built-in formulations.
pub fn material_library() -> Vec<MaterialFormulation> {
    use Filler::*;
    use ResinBase::*;
    vec![
        MaterialFormulation::entry("dlp-gf0", Dlp, None, 0.0, 1.0, 30.0, 0.4, 0.15),
        MaterialFormulation::entry("dlp-gf35", Dlp, MilledGf, 35.0, 1.2, 30.0, 0.35, 0.15),
        MaterialFormulation::entry("dlp-gf50", Dlp, MilledGf, 50.0, 4.0, 30.0, 0.3, 0.15),
        MaterialFormulation::entry("dlp-fs2.8", Dlp, FumedSilica, 2.8, 4.0, 30.0, 0.35, 0.15),
        MaterialFormulation::entry("dlp-fs9", Dlp, FumedSilica, 9.0, 6.0, 20.0, 0.35, 0.25),
        MaterialFormulation::entry("acrylic", Acrylic, None, 0.0, 2.0, 200.0, 0.4, 0.2),
    ]
}

pub fn find_material<'a>(lib: &'a [MaterialFormulation], name: &str) -> Option<&'a MaterialFormulation> {
    lib.iter().find(|m| m.name == name)
}

/// Numerical and spreading parameters of the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CureModel {
    /// Width growth per second of uncured dwell at η = 1.
    pub spread_c: f64,
    /// Dose integration step, s.
    pub dt: f64,
    /// Longest dwell counted toward spreading, s.
    pub max_dwell: f64,
    /// Elements below this cure degree are reported as under-cured.
    pub alpha_min: f64,
    /// Deposition element length, mm.
    pub resolution: f64,
}

impl Default for CureModel {
    fn default() -> Self {
        CureModel { spread_c: SPREAD_C, dt: 0.02, max_dwell: 60.0, alpha_min: 0.3, resolution: 1.0 }
    }
}

/// Spread constant fitted to the fumed-silica wall and square measurements.
pub const SPREAD_C: f64 = 0.80;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeadElement {
    pub start: Vec3,
    pub end: Vec3,
    pub centroid: Vec3,
    /// Nozzle height while the element was laid down; the bead bottom.
    pub base_z: f64,
    pub deposit_time: f64,
    pub length: f64,
    pub initial_width: f64,
    pub width: f64,
    pub height: f64,
    pub volume: f64,
    /// J/mm²
    pub dose: f64,
    pub alpha: f64,
    pub layer: u32,
    /// Time at which the dose first reached the gel dose.
    pub gel_time: Option<f64>,
}

impl BeadElement {
    /// Horizontal unit direction along the bead.
    pub fn direction(&self) -> Vec3 {
        (self.end - self.start).horizontal().normalized().unwrap_or(Vec3::X)
    }

    /// Axis-aligned extents of the bead box: (min, max).
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let d = self.direction();
        let hx = 0.5 * (d.x.abs() * self.length + d.y.abs() * self.width);
        let hy = 0.5 * (d.y.abs() * self.length + d.x.abs() * self.width);
        let c = self.centroid;
        (Vec3::new(c.x - hx, c.y - hy, self.base_z), Vec3::new(c.x + hx, c.y + hy, self.base_z + self.height))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepositionMap {
    pub elements: Vec<BeadElement>,
    pub material: MaterialFormulation,
}

impl DepositionMap {
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total_volume(&self) -> f64 {
        self.elements.iter().map(|e| e.volume).sum()
    }

    /// Element indices grouped by layer.
    pub fn layers(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.elements.iter().enumerate() {
            out.entry(e.layer).or_default().push(i);
        }
        out
    }
}

/// One element per extruding segment of `t` on its timeline. Resample the
/// toolpath first to control element length.
pub fn deposit(
    t: &Toolpath,
    timeline: &Timeline,
    f: &FlowModel,
    nozzle: &Nozzle,
    m: &MaterialFormulation,
) -> DepositionMap {
    let mut elements = Vec::new();
    for (s, tm) in t.segments.iter().zip(&timeline.timings) {
        if !s.extruding {
            continue;
        }
        let length = s.length();
        let area = f.q / s.speed;
        let width = nozzle.diameter;
        let height = area / width;
        let centroid = s.start.lerp(s.end, 0.5);
        elements.push(BeadElement {
            start: s.start,
            end: s.end,
            centroid,
            base_z: centroid.z,
            deposit_time: 0.5 * (tm.start + tm.end),
            length,
            initial_width: width,
            width,
            height,
            volume: area * length,
            dose: 0.0,
            alpha: 0.0,
            layer: s.layer,
            gel_time: None,
        });
    }
    DepositionMap { elements, material: m.clone() }
}

/// Uniform grid over element centroids for footprint queries.
struct Grid {
    origin: (f64, f64),
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl Grid {
    fn new(elements: &[BeadElement], cell: f64) -> Grid {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for e in elements {
            x0 = x0.min(e.centroid.x);
            y0 = y0.min(e.centroid.y);
            x1 = x1.max(e.centroid.x);
            y1 = y1.max(e.centroid.y);
        }
        let nx = ((x1 - x0) / cell).floor() as usize + 1;
        let ny = ((y1 - y0) / cell).floor() as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        for (i, e) in elements.iter().enumerate() {
            let ix = ((e.centroid.x - x0) / cell) as usize;
            let iy = ((e.centroid.y - y0) / cell) as usize;
            cells[iy * nx + ix].push(i);
        }
        Grid { origin: (x0, y0), cell, nx, ny, cells }
    }

    fn for_each_near(&self, c: Vec3, r: f64, mut f: impl FnMut(usize)) {
        let lo = |v: f64, o: f64| (((v - r - o) / self.cell).floor().max(0.0)) as usize;
        let hi = |v: f64, o: f64, n: usize| ((((v + r - o) / self.cell).floor()).max(-1.0) as i64).min(n as i64 - 1);
        let (x0, y0) = self.origin;
        let (ix1, iy1) = (hi(c.x, x0, self.nx), hi(c.y, y0, self.ny));
        if ix1 < 0 || iy1 < 0 {
            return;
        }
        for iy in lo(c.y, y0)..=iy1 as usize {
            for ix in lo(c.x, x0)..=ix1 as usize {
                for &i in &self.cells[iy * self.nx + ix] {
                    f(i);
                }
            }
        }
    }
}

/// Sweeps the trailing spot along the timeline while the UV channel is on.
/// Time is cut into fixed steps of `dt`; at each step midpoint, an element
/// whose centroid lies inside the footprint receives irradiance times the
/// step's UV-on time, attenuated by the material above it. Elements not yet
/// deposited receive nothing.
pub fn accumulate_dose(
    map: &mut DepositionMap,
    t: &Toolpath,
    timeline: &Timeline,
    schedule: &StepSchedule,
    spot: &UvSpot,
    dt: f64,
) {
    if map.elements.is_empty() {
        return;
    }
    let r = spot.footprint_radius();
    let e0 = spot.irradiance();
    if !(e0 > 0.0) {
        return;
    }
    let r2 = r * r;
    let gel_dose = map.material.gel_dose();
    let depth = map.material.attenuation_depth;
    let grid = Grid::new(&map.elements, 2.0);
    let dir = spot.offset_dir();
    for (a, b) in schedule.on_intervals(Channel::Uv) {
        let k0 = (a / dt).floor() as u64;
        let k1 = (b / dt).ceil() as u64;
        for k in k0..k1 {
            let s0 = k as f64 * dt;
            let on = b.min(s0 + dt) - a.max(s0);
            if on <= 0.0 {
                continue;
            }
            let tm = s0 + 0.5 * dt;
            let Some(st) = timeline.state_at(t, tm) else { continue };
            let c = st.position + spot_offset(&st.orientation, dir, spot.trail_offset);
            let nz = st.position.z;
            grid.for_each_near(c, r, |i| {
                let el = &mut map.elements[i];
                if el.deposit_time > tm || el.base_z > nz + 1e-6 {
                    return;
                }
                let dx = el.centroid.x - c.x;
                let dy = el.centroid.y - c.y;
                if dx * dx + dy * dy > r2 {
                    return;
                }
                let inc = e0 * on * (-(nz - el.base_z).max(0.0) / depth).exp();
                let before = el.dose;
                el.dose += inc;
                if el.gel_time.is_none() && el.dose >= gel_dose {
                    let frac = ((gel_dose - before) / inc).clamp(0.0, 1.0);
                    el.gel_time = Some(s0 + frac * dt);
                }
            });
        }
    }
}

/// α = 1 − exp(−k·dose) for every element.
pub fn update_cure(map: &mut DepositionMap) {
    let m = map.material.clone();
    for e in &mut map.elements {
        e.alpha = m.cure_degree(e.dose);
    }
}

/// Uncured dwell of an element: time from deposit to gel, capped.
pub fn gel_delay(e: &BeadElement, max_dwell: f64) -> f64 {
    match e.gel_time {
        Some(t) => (t - e.deposit_time).clamp(0.0, max_dwell),
        None => max_dwell,
    }
}

/// Widens each bead by `1 + c·t_gel/η` from its initial width and lowers it
/// to keep its volume.
pub fn spread(map: &mut DepositionMap, c: f64, max_dwell: f64) {
    let eta = map.material.eta;
    for e in &mut map.elements {
        let g = if eta.is_finite() { c * gel_delay(e, max_dwell) / eta } else { 0.0 };
        e.width = e.initial_width * (1.0 + g);
        e.height = e.volume / (e.length * e.width);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimensions {
    /// Extent along world x, mm.
    pub length: f64,
    /// Extent along world y, mm.
    pub width: f64,
    /// Extent along world z, mm.
    pub height: f64,
    /// Mean bead width at the probe location, mm.
    pub line_width: f64,
}

impl Dimensions {
    pub fn get(&self, m: Measure) -> f64 {
        match m {
            Measure::Length => self.length,
            Measure::Width => self.width,
            Measure::Height => self.height,
        }
    }
}

/// Bounding extents of the bead boxes, plus the bead width averaged over
/// elements within 2 mm of the midpoint of the first extruded segment.
pub fn predict_dimensions(map: &DepositionMap) -> Result<Dimensions, SimError> {
    let first = map.elements.first().ok_or(SimError::EmptyMap)?;
    let mut lo = Vec3::new(f64::MAX, f64::MAX, f64::MAX);
    let mut hi = Vec3::new(f64::MIN, f64::MIN, f64::MIN);
    for e in &map.elements {
        let (a, b) = e.bounds();
        lo = Vec3::new(lo.x.min(a.x), lo.y.min(a.y), lo.z.min(a.z));
        hi = Vec3::new(hi.x.max(b.x), hi.y.max(b.y), hi.z.max(b.z));
    }
    // The first element sits at the start of the first extruded segment;
    // walk to the end of that straight run for the probe.
    let dir = first.direction();
    let run_end = map
        .elements
        .iter()
        .take_while(|e| e.layer == first.layer && e.direction().distance(dir) < 1e-9)
        .last()
        .map_or(first.end, |e| e.end);
    let probe = first.start.lerp(run_end, 0.5);
    let near: Vec<f64> = map
        .elements
        .iter()
        .filter(|e| e.layer == first.layer && e.centroid.horizontal().distance(probe.horizontal()) <= 2.0)
        .map(|e| e.width)
        .collect();
    let line_width = if near.is_empty() { first.width } else { near.iter().sum::<f64>() / near.len() as f64 };
    Ok(Dimensions { length: hi.x - lo.x, width: hi.y - lo.y, height: hi.z - lo.z, line_width })
}

/// Indices of elements with α below `alpha_min`, least cured first.
pub fn flag_undercured(map: &DepositionMap, alpha_min: f64) -> Vec<usize> {
    let mut out: Vec<usize> = (0..map.elements.len()).filter(|&i| map.elements[i].alpha < alpha_min).collect();
    out.sort_by(|&a, &b| map.elements[a].alpha.total_cmp(&map.elements[b].alpha));
    out
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Smallest per-layer ratio of minimum to median element dose. A layer's
/// median stands for its interior, since ends and corners are a small share
/// of any bead run. Returns 1 for an unexposed map.
pub fn min_dose_ratio(map: &DepositionMap) -> f64 {
    let mut worst = 1.0f64;
    for idx in map.layers().values() {
        let mut d: Vec<f64> = idx.iter().map(|&i| map.elements[i].dose).collect();
        let min = d.iter().copied().fold(f64::MAX, f64::min);
        let med = median(&mut d);
        if med > 0.0 {
            worst = worst.min(min / med);
        }
    }
    worst
}

/// Elements whose dose is below `ratio` times their layer's median dose,
/// lowest ratio first.
pub fn low_dose_elements(map: &DepositionMap, ratio: f64) -> Vec<usize> {
    let mut hits = Vec::new();
    for idx in map.layers().values() {
        let mut d: Vec<f64> = idx.iter().map(|&i| map.elements[i].dose).collect();
        let med = median(&mut d);
        for &i in idx {
            let q = if med > 0.0 { map.elements[i].dose / med } else { 0.0 };
            if q < ratio {
                hits.push((q, i));
            }
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.into_iter().map(|h| h.1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Length,
    Width,
    Height,
}

/// A measured dimension (mean ± spread) the spread constant is fitted to.
#[derive(Debug, Clone)]
pub struct CalibrationTarget<'a> {
    pub map: &'a DepositionMap,
    pub measure: Measure,
    pub mean: f64,
    pub sigma: f64,
}

/// Sum of squared normalized residuals for spread constant `c`.
pub fn calibration_cost(targets: &[CalibrationTarget], c: f64, max_dwell: f64) -> f64 {
    let mut cost = 0.0;
    for tg in targets {
        let mut m = tg.map.clone();
        spread(&mut m, c, max_dwell);
        let d = predict_dimensions(&m).expect("calibration maps are non-empty");
        let r = (d.get(tg.measure) - tg.mean) / tg.sigma;
        cost += r * r;
    }
    cost
}

/// Least-squares spread constant in `[0, c_max]`: a coarse scan followed by
/// golden-section refinement around the best scan point.
pub fn fit_spread_constant(targets: &[CalibrationTarget], c_max: f64, max_dwell: f64) -> f64 {
    let n = 200;
    let step = c_max / n as f64;
    let best = (0..=n)
        .map(|i| i as f64 * step)
        .min_by(|a, b| calibration_cost(targets, *a, max_dwell).total_cmp(&calibration_cost(targets, *b, max_dwell)))
        .unwrap_or(0.0);
    let (mut a, mut b) = ((best - step).max(0.0), (best + step).min(c_max));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = calibration_cost(targets, x1, max_dwell);
    let mut f2 = calibration_cost(targets, x2, max_dwell);
    while b - a > 1e-6 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = calibration_cost(targets, x1, max_dwell);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = calibration_cost(targets, x2, max_dwell);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extrusion::{schedule, DriveTrain};
    use crate::toolpath::{add_cure_extensions, assign_orientations, resample, ExtensionPolicy, Segment};
    use proptest::prelude::*;

    fn polyline(pts: &[(f64, f64)], z: f64, speed: f64) -> Toolpath {
        let mut t = Toolpath::new();
        for w in pts.windows(2) {
            t.push(Segment::new(Vec3::new(w[0].0, w[0].1, z), Vec3::new(w[1].0, w[1].1, z), speed, true, true));
        }
        t
    }

    fn gf0() -> MaterialFormulation {
        find_material(&material_library(), "dlp-gf0").unwrap().clone()
    }

    fn simulate(t: &Toolpath, lead: f64, spot: &UvSpot, m: &MaterialFormulation) -> DepositionMap {
        let t = add_cure_extensions(t, &ExtensionPolicy { lead_length: lead, ..ExtensionPolicy::default() });
        let t = assign_orientations(&t, spot.offset_dir()).unwrap();
        let t = resample(&t, 1.0);
        let tl = Timeline::new(&t, 1.0);
        let s = schedule(&t, &tl, &FlowModel::default(), &DriveTrain::default()).unwrap();
        let mut map = deposit(&t, &tl, &FlowModel::default(), &Nozzle::default(), m);
        accumulate_dose(&mut map, &t, &tl, &s, spot, 0.02);
        update_cure(&mut map);
        map
    }

    #[test]
    fn spot_geometry() {
        let s = UvSpot::default();
        assert!((s.footprint_radius() - 30.0 * 24f64.to_radians().tan()).abs() < 1e-12);
        assert!((s.footprint_radius() - 13.357).abs() < 1e-3);
        assert!((s.irradiance() - 5.352e-3).abs() < 1e-6);
    }

    #[test]
    fn library_is_valid() {
        let lib = material_library();
        for m in &lib {
            m.validate().unwrap();
        }
        let eta: Vec<f64> =
            ["dlp-gf0", "dlp-gf35", "dlp-gf50"].iter().map(|n| find_material(&lib, n).unwrap().eta).collect();
        assert!(eta[0] < eta[1] && eta[1] < eta[2]);
        assert!(find_material(&lib, "dlp-fs2.8").is_some());
    }

    #[test]
    fn rectangle_deposit_counts() {
        let t = polyline(&[(0.0, 0.0), (90.0, 0.0), (90.0, 60.0), (0.0, 60.0), (0.0, 0.0)], 0.0, 3.0);
        let t = assign_orientations(&t, Vec3::X).unwrap();
        let t = resample(&t, 1.0);
        let tl = Timeline::new(&t, 1.0);
        let map = deposit(&t, &tl, &FlowModel::default(), &Nozzle::default(), &gf0());
        assert_eq!(map.elements.len(), 300);
        assert!((map.total_volume() - 530.0).abs() < 1e-9);
        for e in &map.elements {
            assert!((e.volume - 5.3 * e.length / 3.0).abs() < 1e-12);
            assert!((e.width * e.height * e.length - e.volume).abs() < 1e-9);
        }
        for w in map.elements.windows(2) {
            assert!(w[1].deposit_time >= w[0].deposit_time);
        }
        let none = deposit(
            &Toolpath::new(),
            &Timeline::new(&Toolpath::new(), 1.0),
            &FlowModel::default(),
            &Nozzle::default(),
            &gf0(),
        );
        assert!(none.is_empty());
    }

    #[test]
    fn interior_dose_matches_swept_footprint() {
        let spot = UvSpot::default();
        let map = simulate(&polyline(&[(0.0, 0.0), (50.0, 0.0)], 0.0, 4.0), 25.0, &spot, &gf0());
        let oracle = spot.irradiance() * 2.0 * spot.footprint_radius() / 4.0;
        let mid = &map.elements[25];
        assert!((mid.dose - oracle).abs() / oracle < 0.01, "{} vs {oracle}", mid.dose);
        assert!(min_dose_ratio(&map) >= 0.9);
    }

    #[test]
    fn line_without_overrun_underdoses_its_end() {
        let spot = UvSpot::default();
        let map = simulate(&polyline(&[(0.0, 0.0), (50.0, 0.0)], 0.0, 4.0), 0.0, &spot, &gf0());
        let interior = map.elements[10].dose;
        for e in map.elements.iter().filter(|e| e.centroid.x > 26.0) {
            assert!(e.dose < interior, "x={} dose {} vs {interior}", e.centroid.x, e.dose);
        }
        assert!(min_dose_ratio(&map) < 0.9);
    }

    #[test]
    fn dark_spot_leaves_resin_uncured() {
        let spot = UvSpot { efficiency: 0.0, ..UvSpot::default() };
        let map = simulate(&polyline(&[(0.0, 0.0), (50.0, 0.0)], 0.0, 4.0), 25.0, &spot, &gf0());
        assert!(map.elements.iter().all(|e| e.dose == 0.0 && e.alpha == 0.0));
        assert_eq!(flag_undercured(&map, 0.3).len(), map.elements.len());
    }

    #[test]
    fn cure_degree_examples() {
        let m = gf0();
        assert_eq!(m.cure_degree(0.0), 0.0);
        assert!((m.cure_degree(2f64.ln() / m.k) - 0.5).abs() < 1e-12);
        assert!((m.cure_degree(m.gel_dose()) - m.alpha_gel).abs() < 1e-12);
    }

    #[test]
    fn rectangle_corners_without_overruns_are_low_first() {
        let spot = UvSpot::default();
        let rect = polyline(&[(0.0, 0.0), (90.0, 0.0), (90.0, 60.0), (0.0, 60.0), (0.0, 0.0)], 0.0, 3.0);
        let map = simulate(&rect, 0.0, &spot, &gf0());
        let low = low_dose_elements(&map, 0.9);
        assert!(!low.is_empty());
        let corners = [(0.0, 0.0), (90.0, 0.0), (90.0, 60.0), (0.0, 60.0)];
        let near_corner = |i: usize| {
            let c = map.elements[i].centroid;
            corners.iter().any(|&(x, y)| (c.x - x).abs() + (c.y - y).abs() < 15.0)
        };
        assert!(near_corner(low[0]));
        let all = flag_undercured(&map, 1.0);
        assert!(near_corner(all[0]));
        // The deficit reaches trail offset + footprint radius back from each
        // side's end, short of every side's midpoint.
        let mids = [(45.0, 0.0), (90.0, 30.0), (45.0, 60.0), (0.0, 30.0)];
        for i in low {
            let c = map.elements[i].centroid;
            assert!(mids.iter().all(|&(x, y)| (c.x - x).abs() + (c.y - y).abs() > 2.0));
        }
        let with = simulate(&rect, 25.0, &spot, &gf0());
        assert!(min_dose_ratio(&with) >= 0.9, "{}", min_dose_ratio(&with));
        assert!(flag_undercured(&with, 0.0).is_empty());
    }

    #[test]
    fn buried_layers_keep_curing() {
        let spot = UvSpot::default();
        let m = gf0();
        let sq = [(0.0, 0.0), (30.0, 0.0), (30.0, 30.0), (0.0, 30.0), (0.0, 0.0)];
        let one = simulate(&polyline(&sq, 0.0, 4.0), 25.0, &spot, &m);
        let mut t = Toolpath::new();
        for i in 0..3 {
            t.segments.extend(polyline(&sq, i as f64 * 0.85, 4.0).segments);
        }
        t.assign_layers(0.85);
        let three = simulate(&t, 25.0, &spot, &m);
        let a1: f64 = one.elements.iter().map(|e| e.alpha).sum::<f64>() / one.elements.len() as f64;
        let bottom: Vec<&BeadElement> = three.elements.iter().filter(|e| e.layer == 0).collect();
        let a3: f64 = bottom.iter().map(|e| e.alpha).sum::<f64>() / bottom.len() as f64;
        assert!(a3 > a1, "{a3} vs {a1}");
    }

    #[test]
    fn spread_limits_and_conservation() {
        let spot = UvSpot::default();
        let line = polyline(&[(0.0, 0.0), (50.0, 0.0)], 0.0, 4.0);
        let mut m = gf0();
        let base = simulate(&line, 25.0, &spot, &m);
        let mut a = base.clone();
        spread(&mut a, SPREAD_C, 60.0);
        for (x, y) in a.elements.iter().zip(&base.elements) {
            assert!(x.width > y.width);
            assert!((x.width * x.height * x.length - y.volume).abs() <= 1e-9 * y.volume);
        }
        m.eta = f64::INFINITY;
        let mut b = simulate(&line, 25.0, &spot, &m);
        spread(&mut b, SPREAD_C, 60.0);
        assert!(b.elements.iter().all(|e| e.width == e.initial_width));
        let mut c = base.clone();
        for e in &mut c.elements {
            e.gel_time = Some(e.deposit_time);
        }
        spread(&mut c, SPREAD_C, 60.0);
        assert!(c.elements.iter().all(|e| e.width == e.initial_width));
    }

    #[test]
    fn thicker_resin_spreads_less() {
        let spot = UvSpot::default();
        let line = polyline(&[(0.0, 0.0), (50.0, 0.0)], 0.0, 3.0);
        let thin = gf0();
        let thick = MaterialFormulation { eta: 3.0, ..gf0() };
        let mut a = simulate(&line, 25.0, &spot, &thin);
        let mut b = simulate(&line, 25.0, &spot, &thick);
        spread(&mut a, SPREAD_C, 60.0);
        spread(&mut b, SPREAD_C, 60.0);
        let (da, db) = (predict_dimensions(&a).unwrap(), predict_dimensions(&b).unwrap());
        assert!(db.width <= da.width);
        assert!(db.line_width < da.line_width);
    }

    #[test]
    fn unspread_dimensions_are_nominal_plus_bead() {
        let spot = UvSpot::default();
        let rect = polyline(&[(0.0, 0.0), (90.0, 0.0), (90.0, 60.0), (0.0, 60.0), (0.0, 0.0)], 0.0, 3.0);
        let map = simulate(&rect, 25.0, &spot, &gf0());
        let d = predict_dimensions(&map).unwrap();
        assert!((d.length - 91.5).abs() < 1e-9);
        assert!((d.width - 61.5).abs() < 1e-9);
        assert!((d.height - 5.3 / 3.0 / 1.5).abs() < 1e-9);
        assert!((d.line_width - 1.5).abs() < 1e-12);
        let empty = DepositionMap { elements: vec![], material: gf0() };
        assert_eq!(predict_dimensions(&empty), Err(SimError::EmptyMap));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn switching_uv_off_never_adds_dose(len in 10.0f64..40.0, turn in 0.0f64..3.0, drop in 0usize..3) {
            let spot = UvSpot::default();
            let m = gf0();
            let p1 = (len, 0.0);
            let p2 = (len + 15.0 * turn.cos(), 15.0 * turn.sin());
            let t = polyline(&[(0.0, 0.0), p1, p2, (p2.0 + 10.0, p2.1)], 0.0, 4.0);
            let t = add_cure_extensions(&t, &ExtensionPolicy::default());
            let full = simulate(&t, 0.0, &spot, &m);
            let mut dark = t.clone();
            let k = drop.min(dark.segments.len() - 1);
            dark.segments[k].uv_on = false;
            let part = simulate(&dark, 0.0, &spot, &m);
            prop_assert_eq!(full.elements.len(), part.elements.len());
            for (a, b) in full.elements.iter().zip(&part.elements) {
                prop_assert!(b.dose <= a.dose + 1e-12);
                prop_assert!((0.0..=1.0).contains(&b.alpha));
            }
        }
    }
}
