//! Text-guided equalization: a multiband log-gain EQ on STFT magnitudes,
//! optimized so the encoded result approaches a mixed target embedding.

mod curve;
mod optimize;

pub use curve::{apply_eq, gain_curve, EqBasis, EqParams, DEFAULT_BANDS, MAX_LOG_GAIN};
pub use optimize::{
    build_target, eq_loss_and_gradient, optimize_eq, save_params_json, write_trace_csv,
    EqParamsFile, EqRunConfig, EqRunResult,
};
