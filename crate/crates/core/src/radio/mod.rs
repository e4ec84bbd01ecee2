//! Radio channel: antenna pattern, path loss, shadowing, fading and the
//! complex channel matrix between every beam and every user.

pub mod antenna;
pub mod channel;
pub mod fading;
pub mod pathloss;
pub mod shadow;

pub use antenna::{antenna_gain, relative_angles, AnglePair, INACTIVE_GAIN_DBI};
pub use channel::{ChannelMatrix, LinkBudget, RadioModel};
pub use fading::{small_scale, LinkKey};
pub use pathloss::{empirical, path_loss, Empirical, LearnedConfig, LearnedPathLoss, PathLossModel};
pub use shadow::{unit_field, ShadowField};
