//! Bilateral phase correlation (BLPC) optical flow.
//!
//! Frequency-domain translation estimation that stays reliable when a
//! correlation window straddles several motions. The window pair is passed
//! through an asymmetric bilateral prefilter anchored on the intensities
//! around the window centre, so only the region the centre pixel belongs to
//! survives into the cross-power spectrum.
//!
//! Flow convention: x grows rightward, y downward, origin top-left. A flow
//! vector `(dx, dy)` stored at pixel `p` of frame 1 means that the content at
//! `p` appears at `p + (dx, dy)` in frame 2, i.e. `frame1(p) ≈ frame2(p + d)`.

pub mod bench;
pub mod bilateral;
pub mod error;
pub mod estimator;
pub mod framework;
pub mod io;
pub mod metrics;
pub mod raster;
pub mod spectral;
pub mod synth;

pub use bilateral::BilateralParams;
pub use error::{Error, Result};
pub use estimator::{Method, PointEstimate, TriggerPolicy};
pub use framework::{estimate_flow, FrameworkConfig};
pub use raster::{FlowField, FlowVector, Image, Window};
