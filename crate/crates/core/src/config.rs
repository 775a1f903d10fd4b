//! Job configuration file (TOML).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cell::{CellEnvironment, RobotModel};
use crate::cure_sim::{material_library, CureModel, MaterialFormulation, UvSpot};
use crate::error::ConfigError;
use crate::extrusion::{DriveTrain, FlowModel, Nozzle};
use crate::geometry::{Pose, Vec3};
use crate::kinematics::{DhParams, JointLimits};
use crate::shapes::BuiltinShape;
use crate::toolpath::ExtensionPolicy;

/// Config schema version understood by this build.
pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobSection {
    /// Built-in shape id, e.g. `wall-50x10`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    /// G-code file to read instead of a built-in shape.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gcode: Option<String>,
    pub material: String,
    /// mm/s for single-layer shapes and g-code moves without a feed word.
    pub speed_2d: f64,
    /// mm/s for multi-layer shapes.
    pub speed_3d: f64,
    /// mm/s for connecting moves.
    pub travel_speed: f64,
    pub layer_height: f64,
    /// rad/s for in-place reorientation.
    pub reorient_speed: f64,
    pub lead_length: f64,
    pub corner_angle_deg: f64,
    pub uv_enabled: bool,
    pub output_dir: String,
}

impl Default for JobSection {
    fn default() -> Self {
        JobSection {
            shape: None,
            gcode: None,
            material: "dlp-fs9".to_string(),
            speed_2d: 3.0,
            speed_3d: 4.0,
            travel_speed: 10.0,
            layer_height: 0.85,
            reorient_speed: 1.0,
            lead_length: 25.0,
            corner_angle_deg: 30.0,
            uv_enabled: true,
            output_dir: "out".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsSection {
    /// TCP position in the flange frame, mm.
    pub tcp_offset: [f64; 3],
    pub max_joint_speed: f64,
    pub jump_limit: f64,
    pub singularity_eps: f64,
    pub limits: JointLimits,
    pub dh: DhParams,
}

impl Default for KinematicsSection {
    fn default() -> Self {
        KinematicsSection {
            tcp_offset: [0.0, 0.0, 150.0],
            max_joint_speed: PI,
            jump_limit: 0.5,
            singularity_eps: 1e6,
            limits: JointLimits::default(),
            dh: DhParams::ur5e(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    #[serde(default)]
    pub job: JobSection,
    #[serde(default)]
    pub cell: CellEnvironment,
    #[serde(default)]
    pub kinematics: KinematicsSection,
    #[serde(default)]
    pub drive: DriveTrain,
    #[serde(default)]
    pub nozzle: Nozzle,
    #[serde(default)]
    pub flow: FlowModel,
    #[serde(default)]
    pub uv: UvSpot,
    #[serde(default)]
    pub model: CureModel,
    /// Built-in formulations overlaid with any given in the file.
    #[serde(default, rename = "material")]
    pub materials: Vec<MaterialFormulation>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            schema: SCHEMA,
            job: JobSection::default(),
            cell: CellEnvironment::default(),
            kinematics: KinematicsSection::default(),
            drive: DriveTrain::default(),
            nozzle: Nozzle::default(),
            flow: FlowModel::default(),
            uv: UvSpot::default(),
            model: CureModel::default(),
            materials: material_library(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl Config {
    /// Parses config text; file materials replace built-ins of the same name.
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        let mut c: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if c.schema != SCHEMA {
            return Err(invalid(format!("unsupported schema {} (expected {SCHEMA})", c.schema)));
        }
        let mut lib = material_library();
        for m in c.materials.drain(..) {
            match lib.iter_mut().find(|x| x.name == m.name) {
                Some(slot) => *slot = m,
                None => lib.push(m),
            }
        }
        c.materials = lib;
        Ok(c)
    }

    /// Effective config as TOML; loading it back gives an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn material(&self) -> Result<&MaterialFormulation, ConfigError> {
        self.materials
            .iter()
            .find(|m| m.name == self.job.material)
            .ok_or_else(|| ConfigError::UnknownMaterial(self.job.material.clone()))
    }

    pub fn shape(&self) -> Result<Option<BuiltinShape>, ConfigError> {
        self.job.shape.as_deref().map(str::parse).transpose()
    }

    pub fn extension_policy(&self) -> ExtensionPolicy {
        ExtensionPolicy { lead_length: self.job.lead_length, corner_angle: self.job.corner_angle_deg.to_radians() }
    }

    pub fn robot(&self) -> RobotModel {
        let k = &self.kinematics;
        RobotModel {
            dh: k.dh.clone(),
            tcp: Pose::from_translation(Vec3::new(k.tcp_offset[0], k.tcp_offset[1], k.tcp_offset[2])),
            limits: k.limits,
            max_joint_speed: k.max_joint_speed,
            jump_limit: k.jump_limit,
            singularity_eps: k.singularity_eps,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let j = &self.job;
        match (&j.shape, &j.gcode) {
            (Some(_), Some(_)) => return Err(invalid("give either a shape or a g-code file, not both")),
            (None, None) => return Err(invalid("no input: set a shape or a g-code file")),
            _ => {}
        }
        self.shape()?;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        for (name, v) in [
            ("speed_2d", j.speed_2d),
            ("speed_3d", j.speed_3d),
            ("travel_speed", j.travel_speed),
            ("layer_height", j.layer_height),
            ("reorient_speed", j.reorient_speed),
            ("flow.q", self.flow.q),
            ("nozzle.diameter", self.nozzle.diameter),
            ("nozzle.land_length", self.nozzle.land_length),
            ("model.dt", self.model.dt),
            ("model.resolution", self.model.resolution),
            ("model.max_dwell", self.model.max_dwell),
            ("kinematics.max_joint_speed", self.kinematics.max_joint_speed),
            ("kinematics.jump_limit", self.kinematics.jump_limit),
            ("uv.standoff", self.uv.standoff),
            ("uv.power", self.uv.power),
        ] {
            if !pos(v) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(j.lead_length >= 0.0) || !(0.0..180.0).contains(&j.corner_angle_deg) {
            return Err(invalid("lead_length must be >= 0 and corner_angle_deg in [0, 180)"));
        }
        if !(0.0..=1.0).contains(&self.uv.efficiency)
            || !(self.uv.half_angle_deg > 0.0 && self.uv.half_angle_deg < 90.0)
        {
            return Err(invalid("uv efficiency must be in [0, 1] and half angle in (0, 90) degrees"));
        }
        if !(self.model.spread_c >= 0.0) || !(0.0..=1.0).contains(&self.model.alpha_min) {
            return Err(invalid("model.spread_c must be >= 0 and model.alpha_min in [0, 1]"));
        }
        self.drive.validate().map_err(|e| invalid(e.to_string()))?;
        DhParams::from_slice(&self.kinematics.dh.rows).map_err(|e| invalid(e.to_string()))?;
        self.cell.validate().map_err(invalid)?;
        for m in &self.materials {
            m.validate().map_err(invalid)?;
        }
        self.material()?;
        Ok(())
    }
}
