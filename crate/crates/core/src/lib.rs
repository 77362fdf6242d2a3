//! Spatio-temporal graph convolutional forecasting of bike-share demand.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors with a reverse-mode tape and a finite-difference checker
//! - [`graph`]: distance-weighted region graphs and the renormalised propagation matrix
//! - [`data`]: trip/region/POI ingestion, demand aggregation, windowing, normalisation, synthetic data
//! - [`embed`]: text embedding client with a content-addressed local cache
//! - [`model`]: ST-Conv blocks, embedding fusion block and output layer
//! - [`train`]: loss, metrics, Adam and the training/evaluation loop
//! - [`io`]: on-disk containers for datasets, graphs and checkpoints

pub mod data;
pub mod embed;
pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};
