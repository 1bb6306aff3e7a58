//! Fréchet regression for responses in metric spaces: local and global
//! Fréchet regression, and a single index model whose index is estimated by
//! minimizing in-sample Fréchet prediction error.

pub mod error;
pub mod fsi;
pub mod geometry;
pub mod index;
pub mod mortality;
pub mod optim;
pub mod regression;
pub mod sim;
pub mod smoothing;

pub use error::{FsiError, Result};
pub use fsi::{fit_fsi, predict, BandwidthGrid, FsiConfig, FsiFit, StartDesign};
pub use geometry::{
    sphere_distance, sphere_exp, sphere_log, wasserstein_distance, weighted_frechet_mean, Euclidean, FittedObject,
    MetricSpace, MetricSpaceKind, QuantileGrid, Sphere, SpherePoint, Wasserstein,
};
pub use index::IndexParam;
pub use regression::RegressionDataset;
pub use smoothing::Kernel;
