//! Block-wise strategies: a twin-style global/local blend averaged over
//! thinned blocks, and laGP-style local prediction from a single block.

pub mod ensemble;
pub mod lagp;
pub mod twin;

pub use ensemble::{ensemble_predict, EnsemblePrediction};
pub use lagp::{
    lagp_predict_batch, lagp_single_block_predict, lagp_unthinned_predict, LagpConfig,
    LagpPrediction,
};
pub use twin::{twin_fit, TwinModel, TwinParams, TwinSizes};
