//! Radio-access-network emulator.

pub mod behavior;
pub mod exec;
pub mod net;
pub mod optimize;
pub mod orchestrator;
pub mod presets;
pub mod radio;
pub mod rng;
pub mod scenario;

pub use exec::Exec;
