//! Mutual information between two dependent time series, estimated in the
//! frequency domain.
//!
//! The pipeline splits paired data into windows, takes the DFT of every
//! window to obtain samples of the spectral-process increments, estimates
//! mutual information between frequency components with the KSG
//! k-nearest-neighbor estimator, gates each frequency pair with a
//! permutation test and finally aggregates the coupled frequencies into a
//! single MI figure.
//!
//! ```no_run
//! use spectral_mi::prelude::*;
//!
//! let (x, y) = load_pair_csv("pair.csv").unwrap();
//! let plan = plan_windows(x.len(), 64, WindowCount::Auto, 0).unwrap();
//! let inc_x = spectral_increments(&x, &plan).unwrap();
//! let inc_y = spectral_increments(&y, &plan).unwrap();
//! let params = KsgParams::default();
//! let grid = GridMode::Half.indices(plan.n_f);
//! let mif = mif_matrix(&inc_x, &inc_y, &grid, &params, MifMode::Cross).unwrap();
//! let mask = significance_mask(&inc_x, &inc_y, &mif, 99, &params, 7).unwrap();
//! let report = auto_method(&mask, &mif, &inc_x, &inc_y, &params, false).unwrap();
//! println!("{} nats", report.mi_nats);
//! ```

pub mod aggregate;
pub mod cli;
pub mod error;
pub mod knn;
pub mod mif;
pub mod models;
pub mod seed;
pub mod spectral;
pub mod timeseries;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::aggregate::{
        auto_method, clustered_mi, coupled_sets, estimate_mi, estimate_mi_linear,
        stack_increments, CouplingSets, Method, MiReport,
    };
    pub use crate::error::{Error, Result};
    pub use crate::knn::{digamma, knn_counts, ksg_mi, KsgParams, NeighborSearch, PointCloud};
    pub use crate::mif::{
        mif_matrix, mif_pair, permutation_test, significance_mask, GridMode, MifMatrix, MifMode,
        SignificanceMask,
    };
    pub use crate::spectral::{
        increment_samples, integrated_spectrum, power_spectrum, spectral_increments,
        PowerSpectrum, SpectralIncrements,
    };
    pub use crate::timeseries::{
        demean, load_pair_csv, plan_windows, TimeSeries, WindowCount, WindowPlan,
    };
}
