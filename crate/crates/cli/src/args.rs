use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pfista::{BoundKind, Density, FilterFamily, ModelKind, PhantomKind, StepRuleKind};

#[derive(Parser, Debug)]
#[command(name = "pfista", version = env!("PFISTA_GIT_DESCRIBE"), about = "pFISTA reconstruction for SENSE and SPIRiT parallel MRI")]
pub struct Cli {
    /// Worker threads (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a multi-coil phantom (truth, coil images, k-space, maps).
    Phantom {
        #[command(flatten)]
        phantom: PhantomArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a Cartesian column mask.
    Mask {
        #[arg(long, default_value_t = 64)]
        rows: usize,
        #[arg(long, default_value_t = 64)]
        cols: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        mask: MaskArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit SPIRiT kernels on the ACS band and save kernels and image weights.
    Calibrate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 5)]
        kernel_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the closed-form SPIRiT bound as JSON.
    Bound {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 5)]
        kernel_size: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda1: f64,
        /// Kernels saved by `calibrate`, used instead of fitting.
        #[arg(long)]
        kernels: Option<PathBuf>,
        /// Compare against a dense eigendecomposition (small grids only).
        #[arg(long)]
        verify_dense: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one reconstruction.
    Recon {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Kernels saved by `calibrate`, used instead of fitting.
        #[arg(long)]
        kernels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one reconstruction per multiple of the recommended step.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1.0")]
        gammas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recommended vs power iteration vs backtracking to a common target.
    CompareSteprules {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct PhantomArgs {
    #[arg(long, default_value = "shepp-logan")]
    pub phantom: PhantomKind,
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long, default_value_t = 4)]
    pub coils: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct MaskArgs {
    #[arg(long, default_value_t = 0.34)]
    pub rate: f64,
    #[arg(long, default_value_t = 12)]
    pub acs_lines: usize,
    #[arg(long, default_value = "gaussian")]
    pub density: Density,
    /// Mask seed; defaults to --seed.
    #[arg(long)]
    pub mask_seed: Option<u64>,
}

/// Either files (`--kspace` and `--mask`, optionally `--maps` and
/// `--truth`) or a synthetic phantom. With no files the defaults give the
/// bundled 64x64, 4-coil, rate-0.34 dataset.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub kspace: Option<PathBuf>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub maps: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub phantom: PhantomArgs,
    #[command(flatten)]
    pub mask_spec: MaskArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value = "sense")]
    pub model: ModelKind,
    /// Sparsity weight; defaults to 1e-3 (SENSE) or 1e-4 (SPIRiT).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda1: f64,
    /// Fixed step, overriding --step-rule.
    #[arg(long, conflicts_with = "gamma_mult")]
    pub gamma: Option<f64>,
    /// Multiple of the recommended step, overriding --step-rule.
    #[arg(long)]
    pub gamma_mult: Option<f64>,
    #[arg(long, default_value = "recommended")]
    pub step_rule: StepRuleKind,
    #[arg(long, default_value = "safe")]
    pub bound: BoundKind,
    #[arg(long, default_value = "db4")]
    pub frame: FilterFamily,
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Leave the coarsest scaling band unthresholded.
    #[arg(long)]
    pub keep_scaling_band: bool,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    /// Stop when ‖x_k − x_{k−1}‖/‖x_{k−1}‖ falls to this value (0 = off).
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    #[arg(long, default_value_t = 5)]
    pub kernel_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma_init: f64,
    #[arg(long, default_value_t = 2.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 100)]
    pub power_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub power_tol: f64,
}
