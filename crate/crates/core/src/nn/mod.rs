//! The learnable implicit field and its training.

mod adam;
mod encoder;
mod fit;
mod loss;
mod net;
mod posenc;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use encoder::{encode_pointset, fit_conditioned, PointSetEncoder, CODE_DIM};
pub use fit::{evaluate_sdf_losses, evaluate_udf_loss, fit_sdf, fit_stacked_udf, losses, FitConfig, FitReport};
pub use loss::{sdf_loss_terms, udf_loss_terms, LossTerms, LossWeights, SdfAdjoint};
pub use net::{Activation, ForwardCache, ImplicitNet, NetConfig, OutputAdjoint};
pub use posenc::{posenc, PosEncConfig};
