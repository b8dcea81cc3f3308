//! Throughput capacity, bounds, iterative estimates and delay profiles for
//! line networks of packet-erasure links with finite relay buffers.

pub mod alloc;
pub mod amc;
pub mod dbie;
pub mod delay;
pub mod emc;
pub mod error;
pub mod model;
pub mod netcod;
pub mod numeric;
pub mod rbie;
pub mod sim;

pub use error::{Error, Result};
pub use model::{ChannelRealization, NetworkSpec, OccupancyState};
