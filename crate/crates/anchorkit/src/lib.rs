//! Mapping unknown UWB anchors from ranges collected along a vehicle
//! trajectory, and fusing those ranges into a navigation filter.
//!
//! The toolkit covers the full pipeline:
//!
//! 1. [`coarse`] — linear initialization of anchor position and constant
//!    bias by squared-range differencing against an A-optimal pivot.
//! 2. [`refine`] — Levenberg-Marquardt refinement of position plus both
//!    bias terms, with a parameter covariance estimate.
//! 3. [`waypoint`] — GDOP-optimal waypoint planning inside a flight volume
//!    via a grid-based evolutionary search, and minimum-snap trajectory
//!    synthesis through the chosen waypoints.
//! 4. [`filter`] — a delayed-update EKF that buffers range measurements
//!    between pose updates and replays them in time order.
//! 5. [`sim`] — a scenario-driven Monte-Carlo harness comparing the
//!    initialization stages and demonstrating dropout resilience.
//!
//! ```
//! use anchorkit::geometry::{Rotation, Vec3};
//! use anchorkit::model::{predict_range, Anchor};
//!
//! let anchor = Anchor::new(7, Vec3::new(3.0, 4.0, 0.0), 1.05, 0.2);
//! let z = predict_range(&Vec3::zeros(), &Rotation::identity(), &Vec3::zeros(), &anchor)?;
//! assert!((z - 5.45).abs() < 1e-12);
//! # Ok::<(), anchorkit::Error>(())
//! ```

pub mod coarse;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod model;
pub mod refine;
pub mod sim;
pub mod waypoint;

pub use error::{Error, Result};

/// Doc-tests for the runnable snippets embedded in the guide (`book/src`),
/// so `cargo test` keeps the book in sync with the API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(range_model, "../../../book/src/range-model.md");
    chapter!(coarse_init, "../../../book/src/coarse-init.md");
    chapter!(refinement, "../../../book/src/refinement.md");
    chapter!(waypoints, "../../../book/src/waypoints.md");
    chapter!(fusion, "../../../book/src/fusion.md");
    chapter!(harness, "../../../book/src/harness.md");
}
