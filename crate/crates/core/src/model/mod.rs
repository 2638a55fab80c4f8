//! Vehicle parameters, road description and the space-domain dynamics.

mod dynamics;
mod params;
mod road;
mod trajectory;

pub use dynamics::{
    accel_limits, accel_of, kinetic_energy, resistive_forces, speed_of, time_slope, traction_force, AccelLimits,
    ResistiveForces, TractionLimits,
};
pub use params::VehicleParams;
pub use road::{grade_force, RoadProfile, RoadSample, SyntheticRoute};
pub use trajectory::{Control, State, Trajectory, TrajectoryPoint, CSV_HEADER};
