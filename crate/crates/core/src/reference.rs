//! Reference configs shipped in `configs/`, embedded so checks run anywhere.

use crate::config::RunConfig;
use crate::error::Result;

pub const REF_EGG: &str = include_str!("../../../configs/ref-egg.json");
pub const REF_GEN: &str = include_str!("../../../configs/ref-gen.json");
pub const REF_SPHERE: &str = include_str!("../../../configs/ref-sphere.json");
pub const REF_ORTHO: &str = include_str!("../../../configs/ref-ortho.json");
pub const EGG_VARIANTS: [&str; 3] = [
    include_str!("../../../configs/egg-tilt-y.json"),
    include_str!("../../../configs/egg-tilt-xy.json"),
    include_str!("../../../configs/egg-strong-swirl.json"),
];
pub const GEN_VARIANTS: [&str; 1] = [include_str!("../../../configs/gen-near-minor.json")];
pub const CENTERED_CUBE: &str = include_str!("../../../configs/centered-cube.json");
pub const OFFSET_CAVITY: &str = include_str!("../../../configs/offset-cavity.json");
pub const FIXED_POINT: &str = include_str!("../../../configs/fixed-point.json");
pub const DRY_RUN: &str = include_str!("../../../configs/dry-run.json");

pub fn load(text: &str) -> Result<RunConfig> {
    RunConfig::from_json(text)
}
