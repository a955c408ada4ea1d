//! Throughput capacity of random wireless multi-hop networks.
//!
//! Nodes are dropped uniformly on a disk and share a slotted channel under an SIR
//! reception model (`F * d^-alpha` gains, zero noise, threshold `K`). Per slot a medium
//! access scheme (slotted ALOHA, exclusion-distance node coloring or carrier-sense CSMA)
//! elects the transmitters; every node listens to every transmitter. The per-link success
//! ratios feed an all-pairs minimum-expected-transmission computation, from which the
//! network throughput capacity follows.
//!
//! Modules, bottom-up: [`geometry`], [`channel`], [`mac`], [`simulator`], [`capacity`],
//! [`sweep`], and the command-line front end in [`cli`].

pub mod capacity;
pub mod channel;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod mac;
pub mod simulator;
pub mod sweep;

pub use capacity::{CapacityReport, CapacitySummary, Matrix};
pub use channel::{ChannelSpec, Fading, FadingField};
pub use error::{Error, Result};
pub use geometry::{place_nodes, NetworkInstance, Point};
pub use mac::{MacSpec, Scheme, TransmitterSet};
pub use simulator::{LinkStats, Topology};
pub use sweep::{SweepPlan, SweepResult};
