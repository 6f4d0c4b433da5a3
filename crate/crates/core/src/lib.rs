//! Core algorithms for a rain-gauge network forecaster.
//!
//! This crate holds everything that does not need an operating system: the
//! gauge telemetry wire codec, the daily-series transforms, station-graph
//! construction, a small graph convolutional regressor trained with manual
//! backpropagation and Adam, and the evaluation metrics. It is `no_std`
//! (with `alloc`) so the codec and a trained model can later run on gateway
//! hardware. File formats, the HTTP ingest service, and the CLI live in the
//! companion `pluvio` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod data;
pub mod graph;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod telemetry;
