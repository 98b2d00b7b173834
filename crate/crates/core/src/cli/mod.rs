//! Command-line front end. Every subcommand reads and writes files only and
//! is byte-deterministic for fixed flags and seed.

mod embed;
mod eq;
mod eval;
mod io;
mod preprocess;
mod t2i;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::audio::DatasetStyle;
use crate::error::Error;
use crate::prompt::WeightingMode;
use crate::retrieval::{Direction, QueryMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_EMPTY: i32 = 2;
pub const EXIT_UNRESOLVED: i32 = 3;

/// Prompt value that stands for the source audio's own embedding.
pub const SOURCE_SENTINEL: &str = "<source>";

#[derive(Debug, Parser)]
#[command(name = "timbreclip", version, about = "Audio-text embedding toolkit")]
pub struct Cli {
    /// Seed for every random choice and for the reference encoders.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Log progress at info level
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resample, downmix, normalize and augment a directory of WAV notes.
    Preprocess(PreprocessArgs),
    /// Encode audio files into a TCLP store.
    Embed(EmbedArgs),
    /// Score cross-modal retrieval over a patch manifest.
    Eval(EvalArgs),
    /// Fit an EQ so the source moves toward a text target.
    Eq(EqArgs),
    /// Turn audio into weighted prompt matrices for an image generator.
    T2i(T2iArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StyleArg {
    Nsynth,
    Alv,
}

impl From<StyleArg> for DatasetStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Nsynth => DatasetStyle::Nsynth,
            StyleArg::Alv => DatasetStyle::Alv,
        }
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub style: StyleArg,
    #[arg(long, default_value_t = 16000)]
    pub rate: u32,
    /// Pitch recorded for files whose name carries none.
    #[arg(long, default_value_t = 60)]
    pub pitch_midi: i32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EncoderArg {
    Melstat,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "melstat")]
    pub encoder: EncoderArg,
    #[arg(long, default_value_t = crate::embedding::DEFAULT_DIM)]
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Title,
    Category,
    #[value(name = "title_category", alias = "title-category")]
    TitleCategory,
}

impl From<ModeArg> for QueryMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Title => QueryMode::Title,
            ModeArg::Category => QueryMode::Category,
            ModeArg::TitleCategory => QueryMode::TitleCategory,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    T2p,
    A2t,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::T2p => Direction::TextToPatch,
            DirectionArg::A2t => Direction::AudioToText,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub patches: PathBuf,
    #[arg(long)]
    pub audio_store: PathBuf,
    /// Store keyed by query text. Required unless `--hash-text` is given.
    #[arg(long, required_unless_present = "hash_text")]
    pub text_store: Option<PathBuf>,
    /// Encode query texts with the hashed trigram encoder instead.
    #[arg(long)]
    pub hash_text: bool,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long, value_enum)]
    pub direction: DirectionArg,
    /// Add perfect and random reference rows.
    #[arg(long)]
    pub baselines: bool,
    #[arg(long, default_value_t = crate::retrieval::DEFAULT_RANDOM_RUNS)]
    pub runs: usize,
    /// Label for the model row; defaults to the audio store's sidecar.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EqArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Target prompt; repeatable. `<source>` stands for the source itself.
    #[arg(long = "prompt", required = true)]
    pub prompts: Vec<String>,
    #[arg(long, required_unless_present = "hash_prompts")]
    pub prompt_store: Option<PathBuf>,
    /// Encode prompts with the hashed trigram encoder.
    #[arg(long)]
    pub hash_prompts: bool,
    /// Mixing weights `[source, prompt_1, ...]`; repeatable.
    #[arg(long = "alpha", allow_negative_numbers = true)]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = crate::eq::DEFAULT_BANDS)]
    pub bands: usize,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightingArg {
    Literal,
    Softmax,
}

impl From<WeightingArg> for WeightingMode {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Literal => WeightingMode::LiteralDistance,
            WeightingArg::Softmax => WeightingMode::SoftmaxSimilarity,
        }
    }
}

#[derive(Debug, Args)]
pub struct T2iArgs {
    /// Input audio; repeatable.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Dry reference; switches to effect mode.
    #[arg(long)]
    pub dry: Option<PathBuf>,
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, value_enum, default_value = "softmax")]
    pub mode: WeightingArg,
    #[arg(long, default_value_t = crate::prompt::DEFAULT_TEMPERATURE)]
    pub temperature: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Empty(_) => EXIT_EMPTY,
        Error::Unresolved(_) => EXIT_UNRESOLVED,
        _ => EXIT_INTERNAL,
    }
}

pub fn run(cli: Cli) -> crate::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Preprocess(a) => preprocess::run(&a, seed),
        Command::Embed(a) => embed::run(&a, seed),
        Command::Eval(a) => eval::run(&a, seed),
        Command::Eq(a) => eq::run(&a, seed),
        Command::T2i(a) => t2i::run(&a, seed),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Usage errors exit with 1 so that 2 stays reserved for empty input.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INTERNAL } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}
