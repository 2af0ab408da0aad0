//! Self-supervised denoiser: residual U-net, neighbour sub-sampling, the
//! N2N and consistency losses, and the training loop.

mod net;
mod params;
mod subsample;
mod train;

pub use net::{DenoiserNet, NetConfig};
pub use params::{decode_params, encode_params, load_params, save_params, ParamEntry, ParamHeader};
pub use subsample::{neighbor_subsample, SubsamplerPair, CELL_PAIRS};
pub use train::{
    loss_n2n, loss_residual, percentile_scales, record_losses, train, LossEval, LossReport, LossTerms, TrainConfig,
    Trainer,
};
