//! Dynamic Gaussian splatting with per-primitive polynomial motion and a
//! learned skinned correction field, rendered by a deterministic CPU
//! rasterizer and fitted by gradient descent against reference frames.

pub mod deform;
pub mod error;
pub mod img;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod render;
pub mod scene;
pub mod scene_io;
pub mod synth;
pub mod taylor;

pub use error::{Error, Result};
pub use img::ImageBuffer;
pub use math::{Mat2Sym, Mat3, Quat, Vec3};
pub use scene::{Camera, Gaussian4D, ModelOrders, Scene, TaylorCoeffs};
