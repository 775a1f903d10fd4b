//! Built-in test specimens.

use std::fmt;
use std::str::FromStr;

use crate::cure_sim::Measure;
use crate::error::ConfigError;
use crate::geometry::Vec3;
use crate::toolpath::{Segment, Toolpath};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinShape {
    /// Single-layer closed rectangle, `width` along x and `height` along y.
    Rectangle { width: f64, height: f64 },
    /// Single-bead wall along x, printed back and forth.
    Wall { length: f64, height: f64 },
    /// Closed square loops stacked in z, `width` along x and `length` along y.
    Square { width: f64, length: f64, height: f64 },
}

impl BuiltinShape {
    pub const RECTANGLE: BuiltinShape = BuiltinShape::Rectangle { width: 90.0, height: 60.0 };
    pub const WALL: BuiltinShape = BuiltinShape::Wall { length: 50.0, height: 10.0 };
    pub const SQUARE: BuiltinShape = BuiltinShape::Square { width: 30.0, length: 30.0, height: 8.5 };

    pub fn is_3d(&self) -> bool {
        !matches!(self, BuiltinShape::Rectangle { .. })
    }

    pub fn layer_count(&self, layer_height: f64) -> usize {
        match *self {
            BuiltinShape::Rectangle { .. } => 1,
            BuiltinShape::Wall { height, .. } | BuiltinShape::Square { height, .. } => {
                ((height / layer_height) - 1e-9).ceil().max(1.0) as usize
            }
        }
    }

    /// Extruding path centered on the origin, first layer at z = 0. Travel
    /// between layers and cure overruns are added later in the pipeline.
    pub fn generate(&self, speed: f64, layer_height: f64) -> Toolpath {
        let mut t = Toolpath::new();
        let mut line = |pts: &[(f64, f64)], z: f64| {
            for w in pts.windows(2) {
                t.push(Segment::new(Vec3::new(w[0].0, w[0].1, z), Vec3::new(w[1].0, w[1].1, z), speed, true, true));
            }
        };
        let loop_pts = |w: f64, l: f64| {
            let (x, y) = (0.5 * w, 0.5 * l);
            [(-x, -y), (x, -y), (x, y), (-x, y), (-x, -y)]
        };
        let n = self.layer_count(layer_height);
        match *self {
            BuiltinShape::Rectangle { width, height } => line(&loop_pts(width, height), 0.0),
            BuiltinShape::Wall { length, .. } => {
                let x = 0.5 * length;
                for i in 0..n {
                    let pts = if i % 2 == 0 { [(-x, 0.0), (x, 0.0)] } else { [(x, 0.0), (-x, 0.0)] };
                    line(&pts, i as f64 * layer_height);
                }
            }
            BuiltinShape::Square { width, length, .. } => {
                for i in 0..n {
                    let mut pts = loop_pts(width, length);
                    if i % 2 == 1 {
                        pts.reverse();
                    }
                    line(&pts, i as f64 * layer_height);
                }
            }
        }
        t.assign_layers(layer_height);
        t
    }

    /// Measured reference dimensions (mean, tolerance) to compare predictions
    /// with. The rectangle has only its nominal size.
    pub fn reference(&self) -> Vec<ReferenceDim> {
        let r = |label: &'static str, measure, mean, tol| ReferenceDim { label, measure, mean, tol };
        match *self {
            BuiltinShape::Rectangle { width, height } => {
                vec![r("length", Measure::Length, width, 0.0), r("width", Measure::Width, height, 0.0)]
            }
            BuiltinShape::Wall { .. } => {
                vec![r("width", Measure::Length, 49.76, 1.27), r("height", Measure::Height, 11.07, 0.86)]
            }
            BuiltinShape::Square { .. } => vec![
                r("width", Measure::Length, 32.09, 0.11),
                r("length", Measure::Width, 32.01, 0.30),
                r("height", Measure::Height, 8.62, 0.19),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceDim {
    pub label: &'static str,
    pub measure: Measure,
    pub mean: f64,
    pub tol: f64,
}

impl ReferenceDim {
    pub fn contains(&self, v: f64) -> bool {
        (v - self.mean).abs() <= self.tol + 1e-9
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

impl fmt::Display for BuiltinShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BuiltinShape::Rectangle { width, height } => write!(f, "rectangle-{}x{}", num(width), num(height)),
            BuiltinShape::Wall { length, height } => write!(f, "wall-{}x{}", num(length), num(height)),
            BuiltinShape::Square { width, length, height } => {
                write!(f, "square-{}x{}x{}", num(width), num(length), num(height))
            }
        }
    }
}

impl FromStr for BuiltinShape {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError::UnknownShape(s.to_string());
        let (kind, dims) = s.split_once('-').ok_or_else(bad)?;
        let v: Vec<f64> = dims.split('x').map(|d| d.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        if v.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(bad());
        }
        match (kind, v.as_slice()) {
            ("rectangle", [w, h]) => Ok(BuiltinShape::Rectangle { width: *w, height: *h }),
            ("wall", [l, h]) => Ok(BuiltinShape::Wall { length: *l, height: *h }),
            ("square", [w, l, h]) => Ok(BuiltinShape::Square { width: *w, length: *l, height: *h }),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolpath::path_stats;

    #[test]
    fn ids_round_trip() {
        for s in [BuiltinShape::RECTANGLE, BuiltinShape::WALL, BuiltinShape::SQUARE] {
            assert_eq!(s.to_string().parse::<BuiltinShape>().unwrap(), s);
        }
        assert_eq!(BuiltinShape::SQUARE.to_string(), "square-30x30x8.5");
        assert_eq!("wall-80x5".parse::<BuiltinShape>().unwrap(), BuiltinShape::Wall { length: 80.0, height: 5.0 });
        for bad in ["circle-10", "wall-50", "square-1x2", "rectangle-0x5", "rectangle-axb", "wall"] {
            assert!(matches!(bad.parse::<BuiltinShape>(), Err(ConfigError::UnknownShape(_))), "{bad}");
        }
    }

    #[test]
    fn specimen_paths() {
        let r = BuiltinShape::RECTANGLE.generate(3.0, 0.85);
        let st = path_stats(&r);
        assert!((st.extruded_length - 300.0).abs() < 1e-9);
        assert!((st.extrusion_time - 100.0).abs() < 1e-9);
        assert_eq!(r.len(), 4);

        let sq = BuiltinShape::SQUARE.generate(4.0, 0.85);
        assert_eq!(BuiltinShape::SQUARE.layer_count(0.85), 10);
        let st = path_stats(&sq);
        assert!((st.extruded_length - 1200.0).abs() < 1e-9);
        assert_eq!(st.layer_count, 10);
        assert_eq!(sq.segments.last().unwrap().layer, 9);
        assert!((sq.segments.last().unwrap().end.z - 9.0 * 0.85).abs() < 1e-12);

        let w = BuiltinShape::WALL.generate(4.0, 0.85);
        assert_eq!(BuiltinShape::WALL.layer_count(0.85), 12);
        assert_eq!(w.len(), 12);
        assert!(w.segments[1].direction().x < 0.0);
        w.validate().unwrap();
    }
}
