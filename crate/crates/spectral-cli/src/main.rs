use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spectral_cli::commands::{
    self, cmd_eval, cmd_generate, cmd_grassmann, cmd_oracle, cmd_predict, cmd_shatter, cmd_train,
    GrassmannArgs, OracleArgs, ScaleModeArg, ShatterArgs, TrainArgs,
};
use spectral_core::affinity::{AffinityConfig, DistanceKind};
use spectral_core::datasets::DatasetKind;

/// Spectral clustering with a learned embedding map: generation, training,
/// prediction, evaluation, exact oracles, and the shattering demo.
#[derive(Parser)]
#[command(name = "spectral", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct AffinityArgs {
    /// Neighbors per point in the kNN affinity graph
    #[arg(long, default_value_t = 10)]
    n_neighbors: usize,
    /// Kernel scale heuristic
    #[arg(long, value_enum, default_value_t = ScaleModeArg::GlobalMedianKth)]
    scale_mode: ScaleModeArg,
    /// Neighbor index for the global-median heuristic (1-based)
    #[arg(long, default_value_t = 3)]
    scale_k: usize,
    /// Kernel scale when --scale-mode fixed
    #[arg(long)]
    fixed_sigma: Option<f64>,
}

impl AffinityArgs {
    fn to_config(&self) -> AffinityConfig {
        AffinityConfig {
            n_neighbors: self.n_neighbors,
            scale_mode: self.scale_mode.into(),
            scale_k: self.scale_k,
            fixed_sigma: self.fixed_sigma,
            distance: DistanceKind::Euclidean,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled toy dataset CSV
    Generate {
        /// nested_c | concentric_circles | spirals | moons | blobs | blobs3d
        #[arg(long, value_parser = commands::parse_dataset_kind)]
        kind: DatasetKind,
        /// Number of points
        #[arg(long)]
        n: usize,
        /// Gaussian jitter standard deviation
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the spectral map (and by default a Siamese affinity net)
    Train {
        /// Input dataset CSV
        #[arg(long)]
        data: PathBuf,
        /// Cluster count / embedding dimension (overrides config)
        #[arg(long)]
        k: Option<usize>,
        /// Config file of `key = value` hyperparameters
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed (overrides config)
        #[arg(long)]
        seed: Option<u64>,
        /// Use raw Euclidean distances in the affinity kernel
        #[arg(long)]
        no_siamese: bool,
        /// Semi-supervised: override affinities for this fraction of
        /// labeled points (requires a label column)
        #[arg(long)]
        labels_frac: Option<f64>,
        /// Log the squared Grassmann distance to the exact eigenvectors at
        /// every epoch (costs one dense eigendecomposition upfront)
        #[arg(long)]
        track_grassmann: bool,
        /// Output directory for the model bundle, embeddings, and metrics
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Assign new points to clusters through a trained model
    Predict {
        /// Model bundle directory written by `train`
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output labels CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two labelings; prints `acc=<v> nmi=<v>`
    Eval {
        /// CSV with the reference labels (label column)
        #[arg(long)]
        truth: PathBuf,
        /// CSV with the predicted labels
        #[arg(long)]
        pred: PathBuf,
    },
    /// Exact spectral clustering via dense eigendecomposition
    Oracle {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        affinity: AffinityArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output labels CSV
        #[arg(long)]
        out_labels: PathBuf,
        /// Optional CSV of the bottom-k eigenvectors
        #[arg(long)]
        out_eigenvectors: Option<PathBuf>,
    },
    /// Realize dichotomies of a grid point set by thresholding the second
    /// Laplacian eigenvector; emits a CSV report
    Shatter {
        /// Number of base grid points
        #[arg(long)]
        m: usize,
        /// Try all 2^m dichotomies
        #[arg(long)]
        exhaustive: bool,
        /// Single dichotomy bitmask (bit i = base point i in side S)
        #[arg(long, conflicts_with = "exhaustive")]
        dichotomy: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report CSV path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Squared Grassmann distance between a model's embedding and the
    /// exact bottom-k eigenvectors; prints a single number
    Grassmann {
        /// Model bundle directory
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Subspace dimension (defaults to the bundle's k)
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        affinity: AffinityArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            kind,
            n,
            noise,
            seed,
            out,
        } => cmd_generate(kind, n, noise, seed, &out),
        Command::Train {
            data,
            k,
            config,
            seed,
            no_siamese,
            labels_frac,
            track_grassmann,
            out_dir,
        } => cmd_train(&TrainArgs {
            data,
            k,
            config,
            seed,
            no_siamese,
            labels_frac,
            track_grassmann,
            out_dir,
        }),
        Command::Predict { model, data, out } => cmd_predict(&model, &data, &out),
        Command::Eval { truth, pred } => cmd_eval(&truth, &pred),
        Command::Oracle {
            data,
            k,
            affinity,
            seed,
            out_labels,
            out_eigenvectors,
        } => cmd_oracle(&OracleArgs {
            data,
            k,
            affinity: affinity.to_config(),
            seed,
            out_labels,
            out_eigenvectors,
        }),
        Command::Shatter {
            m,
            exhaustive,
            dichotomy,
            seed,
            out,
        } => cmd_shatter(&ShatterArgs {
            m,
            exhaustive,
            dichotomy,
            seed,
            out,
        }),
        Command::Grassmann {
            model,
            data,
            k,
            affinity,
        } => cmd_grassmann(&GrassmannArgs {
            model_dir: model,
            data,
            k,
            affinity: affinity.to_config(),
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
