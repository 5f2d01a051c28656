//! Slot-level simulation and drift-plus-penalty control of a video stream
//! whose receiver enhances compressed chunks with a depth-adjustable
//! super-resolution network.
//!
//! Each slot the controller observes the transmitter backlog `Q`, the
//! receiver processing backlog `Z` and two virtual queues (`W` for average
//! power, `Θ` for average core usage), then chooses how many chunks to send,
//! at which compression rate and power, and how deep and on how many cores
//! the receiver enhances them.

pub mod channel;
pub mod config;
pub mod controller;
pub mod quality;
pub mod queueing;
pub mod sim;

pub use channel::{ChannelModel, ChannelSample};
pub use config::{Config, ConfigError};
pub use controller::{Controller, ControllerConfig, Decision, Mode};
pub use quality::{ChunkSizeModel, ComputeModel, Depth, QualityModel, QualityTable, Rate};
pub use queueing::{ArrivalProcess, QueueParams, SystemState};
pub use sim::{run, Scenario, SimConfig, SlotRecord, SummaryMetrics};
