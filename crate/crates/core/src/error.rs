use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolpathError {
    #[error("segment {index}: zero length or non-positive speed")]
    InvalidSegment { index: usize },
    #[error("segment {index}: nozzle axis more than 60 degrees from vertical")]
    Attitude { index: usize },
    #[error("segment {index}: layer index decreases")]
    LayerOrder { index: usize },
    #[error("segment {index}: extruding segment does not start where the previous one ended")]
    Disconnected { index: usize },
    #[error("segment {index}: no horizontal travel direction, cannot orient the UV spot")]
    NoTravelDirection { index: usize },
    #[error("UV offset direction has no horizontal component")]
    OffsetDirection,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcodeError {
    #[error("program has {0} error diagnostic(s)")]
    Diagnostics(usize),
    #[error("line {line}: move without a feed rate and no default speed")]
    MissingFeed { line: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("target is unreachable")]
    Unreachable,
    #[error("DH table must have exactly 6 finite rows")]
    InvalidDh,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtrusionError {
    #[error("travel speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("required step rate {required:.3} steps/s exceeds motor limit {limit:.3} steps/s")]
    MotorLimit { required: f64, limit: f64 },
    #[error("viscosity must be a non-negative finite value, got {0}")]
    InvalidViscosity(f64),
    #[error("drive torque insufficient: requires {required:.4} N·m, rated {rated:.4} N·m")]
    Infeasible { required: f64, rated: f64 },
    #[error("invalid drive train: {0}")]
    InvalidDrive(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("deposition map is empty")]
    EmptyMap,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("waypoint {index} ({distance:.3} mm along path) is unreachable")]
    Unreachable { index: usize, distance: f64 },
    #[error("configuration jump of {jump:.3} rad at waypoint {index} ({distance:.3} mm along path)")]
    ConfigurationJump { index: usize, distance: f64, jump: f64 },
    #[error("joint {joint} exceeds its speed limit at waypoint {index}")]
    JointSpeed { index: usize, joint: usize },
    #[error("program has failures and cannot be emitted")]
    NotPrintable,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown material '{0}'")]
    UnknownMaterial(String),
    #[error("unknown shape '{0}'")]
    UnknownShape(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JobError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("g-code has errors:\n{0}")]
    GcodeDiagnostics(String),
    #[error(transparent)]
    Gcode(#[from] GcodeError),
    #[error(transparent)]
    Toolpath(#[from] ToolpathError),
    #[error(transparent)]
    Extrusion(#[from] ExtrusionError),
}
