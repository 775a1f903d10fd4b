//! Shared fixtures for the criterion benches.

use ramcell_core::config::Config;

/// Default job for a built-in shape with the given material.
pub fn job(shape: &str, material: &str) -> Config {
    let mut c = Config::default();
    c.job.shape = Some(shape.into());
    c.job.material = material.into();
    c
}
