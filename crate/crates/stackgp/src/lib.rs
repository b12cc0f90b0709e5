pub mod acquisition;
pub mod active_loop;
pub mod data;
pub mod ensemble;
pub mod evolution;
pub mod feynman;
pub mod genetics;
pub mod model;
pub(crate) mod optim;
pub mod report;
pub mod rng;
pub mod stats;
