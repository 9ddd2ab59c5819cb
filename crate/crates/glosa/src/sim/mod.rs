//! Microscopic traffic simulation: road and signal geometry, car-following
//! dynamics, the emission model, and the tick-stepped world.

pub mod idm;
pub mod types;
pub mod world;

pub use idm::{idm_acceleration, kinematic_step, stopping_cap, IdmParams, LeaderView};
pub use types::{
    default_cav_class, default_hdv_classes, emission_step, EmissionModel, Phase, RoadConfig,
    SignalConfig, SignalController, VehicleClass, VehicleState,
};
pub use world::{CavDirective, CavTick, World, WorldParams, DEFAULT_SUBSTEPS, TICK};
