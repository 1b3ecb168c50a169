//! Forecasting river water levels from gridded radar precipitation.
//!
//! The crate covers the whole path from raw inputs to verified forecasts:
//! [`grid_io`] reads and writes precipitation grids and level series,
//! [`preprocess`] turns them into windowed samples, [`model`] holds the
//! convolutional-recurrent forecasters and the persistence baseline,
//! [`metrics`] scores forecasts, and [`synth`] generates reproducible
//! synthetic catchments.

pub mod grid_io;
pub mod metrics;
pub mod preprocess;
pub mod rng;
pub mod synth;
pub mod model;
