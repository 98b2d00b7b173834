//! Audio-driven prompt conditioning for an external image generator: a
//! keyword bank, audio-to-keyword weights and weighted prompt matrices.

mod bank;
mod matrices;

pub use bank::{
    build_prompts, condition, effect_series, keyword_weights, write_weights_csv,
    ConditioningResult, PromptBank, WeightingMode, DEFAULT_TEMPERATURE, KEYWORD_PLACEHOLDER,
};
pub use matrices::{PromptMatrixStore, TCPM_MAGIC};
