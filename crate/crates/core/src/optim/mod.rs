//! Parameter flattening, the training loss with image gradient, analytic
//! reverse-mode gradients, a finite-difference reference path, the Adam
//! update and the fitting loop.

pub mod adam;
pub mod backward;
pub mod fd;
pub mod fit;
pub mod loss;
pub mod params;

pub use adam::Adam;
pub use backward::{gradient, GradOutput, Sample};
pub use fd::{agreement_fraction, fd_gradient, loss_at, FD_STEP};
pub use fit::{fit, history_to_csv, FitConfig, FitResult, HistoryRow, LearningRates, TrainSample, TrainSet};
pub use loss::{loss, loss_and_grad_f64, loss_f64};
pub use params::{apply_ablations, AblationFlags, Group, ParamLayout};
