//! Discrete-time microsimulation of two-line treatment sequences, driven by
//! survival curves digitized from published trials.

pub mod cif;
pub mod classify;
pub mod curve;
pub mod ipd;
pub mod step;
pub mod microsim;
pub mod rng;
pub mod calibrate;
pub mod econ;
pub mod fixtures;
pub mod config;
pub mod io;
pub mod pipeline;
