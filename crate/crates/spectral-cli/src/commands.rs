//! Implementations behind the `spectral` subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spectral_core::affinity::{AffinityConfig, DistanceKind, ScaleMode};
use spectral_core::cluster::{acc, assign, kmeans, nmi, ClusterModel};
use spectral_core::datasets::{generate, DataMatrix, DatasetKind, DatasetSpec};
use spectral_core::linalg::grassmann_sq;
use spectral_core::nn::MlpModel;
use spectral_core::oracle::{
    bottom_eigenvectors, build_shatter_instance, default_sigma_sweep, exact_spectral_clustering,
    laplacian, separation_certificate, verify_shattering,
};
use spectral_core::siamese::train_siamese;
use spectral_core::spectral::{embed, train_spectral_map, TrainRecord};
use spectral_core::Matrix;

use crate::error::{CliError, Result};
use crate::io::config::{load_config, TrainConfig};
use crate::io::csv::{load_csv, load_labels, save_csv, save_labels};
use crate::io::model::{load_bundle, save_bundle};

pub fn parse_dataset_kind(name: &str) -> Result<DatasetKind> {
    match name {
        "nested_c" => Ok(DatasetKind::NestedC),
        "concentric_circles" => Ok(DatasetKind::ConcentricCircles),
        "spirals" => Ok(DatasetKind::Spirals),
        "moons" => Ok(DatasetKind::Moons),
        "blobs" => Ok(DatasetKind::Blobs),
        "blobs3d" => Ok(DatasetKind::Blobs3d),
        other => Err(CliError::UnknownKind(other.into())),
    }
}

pub fn cmd_generate(kind: DatasetKind, n: usize, noise: f64, seed: u64, out: &Path) -> Result<()> {
    let spec = DatasetSpec {
        kind,
        n,
        noise,
        seed,
    };
    let data = generate(&spec)?;
    save_csv(&data, out)
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub k: Option<usize>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub no_siamese: bool,
    pub labels_frac: Option<f64>,
    pub track_grassmann: bool,
    pub out_dir: PathBuf,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let data = load_csv(&args.data)?;
    let points = &data.features;
    let n = points.rows();
    let d = points.cols();

    let mut cfg: TrainConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => TrainConfig::default(),
    };
    if let Some(k) = args.k {
        cfg.spectral.k = k;
    }
    if let Some(seed) = args.seed {
        cfg.spectral.seed = seed;
    }
    let seed = cfg.spectral.seed;

    // semi-supervised label override on a seeded random fraction
    let label_override: Option<Vec<Option<usize>>> = match args.labels_frac {
        Some(frac) => {
            if !(0.0..=1.0).contains(&frac) {
                return Err(CliError::Invalid(format!(
                    "--labels-frac must be in [0, 1], got {frac}"
                )));
            }
            let truth = data.labels.as_ref().ok_or_else(|| {
                CliError::Invalid(format!(
                    "{}: --labels-frac needs a label column",
                    args.data.display()
                ))
            })?;
            let count = ((frac * n as f64).round() as usize).min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5ab))
                ;
            let mut labels = vec![None; n];
            for i in index::sample(&mut rng, n, count) {
                labels[i] = Some(truth[i]);
            }
            Some(labels)
        }
        None => None,
    };

    let siamese: Option<MlpModel> = if args.no_siamese {
        cfg.spectral.affinity.distance = DistanceKind::Euclidean;
        None
    } else {
        cfg.spectral.affinity.distance = DistanceKind::Siamese;
        let scfg = cfg.siamese_config(d);
        Some(train_siamese(points, &scfg, seed)?)
    };

    // optional oracle eigenvectors for per-epoch Grassmann tracking
    let oracle_vectors: Option<Matrix> = if args.track_grassmann {
        let aff = spectral_core::affinity::gaussian_affinity(
            points,
            &cfg.spectral.affinity,
            None,
            siamese.as_ref(),
        )?;
        let (vecs, _) = bottom_eigenvectors(&laplacian(&aff), cfg.spectral.k)?;
        Some(vecs)
    } else {
        None
    };

    let mut grassmann_log: BTreeMap<usize, f64> = BTreeMap::new();
    let mut observer_err: Option<spectral_core::Error> = None;
    let (map, records) = {
        let mut observer = |model: &MlpModel, record: &TrainRecord| {
            if record.val_loss.is_none() || observer_err.is_some() {
                return;
            }
            if let Some(vecs) = &oracle_vectors {
                match embed(model, points).and_then(|y| grassmann_sq(&y, vecs)) {
                    Ok(g) => {
                        grassmann_log.insert(record.iteration, g);
                    }
                    Err(e) => observer_err = Some(e),
                }
            }
        };
        train_spectral_map(
            points,
            &cfg.spectral,
            siamese.as_ref(),
            label_override.as_deref(),
            Some(&mut observer),
        )?
    };
    if let Some(e) = observer_err {
        return Err(e.into());
    }

    let embeddings = embed(&map, points)?;
    let km = kmeans(&embeddings, cfg.spectral.k, 10, seed)?;
    let cluster = ClusterModel {
        spectral_map: map,
        centroids: km.centroids,
        k: cfg.spectral.k,
    };

    save_bundle(&args.out_dir, &cluster, siamese.as_ref())?;
    save_csv(
        &DataMatrix::unlabeled(embeddings),
        &args.out_dir.join("embeddings.csv"),
    )?;
    save_labels(&km.labels, &args.out_dir.join("labels.csv"))?;
    save_metrics(
        &records,
        args.track_grassmann.then_some(&grassmann_log),
        &args.out_dir.join("metrics.csv"),
    )?;
    println!(
        "trained: n={n} d={d} k={} iterations={} siamese={}",
        cluster.k,
        records.len(),
        !args.no_siamese
    );
    Ok(())
}

fn save_metrics(
    records: &[TrainRecord],
    grassmann: Option<&BTreeMap<usize, f64>>,
    path: &Path,
) -> Result<()> {
    let mut out = String::from("iter,loss,val_loss,lr");
    if grassmann.is_some() {
        out.push_str(",grassmann_sq");
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{:.10e},", r.iteration, r.loss));
        if let Some(v) = r.val_loss {
            out.push_str(&format!("{v:.10e}"));
        }
        out.push_str(&format!(",{:.10e}", r.lr));
        if let Some(g) = grassmann {
            out.push(',');
            if let Some(v) = g.get(&r.iteration) {
                out.push_str(&format!("{v:.10e}"));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn cmd_predict(model_dir: &Path, data: &Path, out: &Path) -> Result<()> {
    let bundle = load_bundle(model_dir)?;
    let points = load_csv(data)?.features;
    let labels = assign(&bundle.cluster, &points)?;
    save_labels(&labels, out)
}

pub fn cmd_eval(truth: &Path, pred: &Path) -> Result<()> {
    let t = load_labels(truth)?;
    let p = load_labels(pred)?;
    let a = acc(&t, &p)?;
    let n = nmi(&t, &p)?;
    println!("acc={a:.6} nmi={n:.6}");
    Ok(())
}

pub struct OracleArgs {
    pub data: PathBuf,
    pub k: usize,
    pub affinity: AffinityConfig,
    pub seed: u64,
    pub out_labels: PathBuf,
    pub out_eigenvectors: Option<PathBuf>,
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<()> {
    let points = load_csv(&args.data)?.features;
    let out = exact_spectral_clustering(&points, args.k, &args.affinity, args.seed)?;
    save_labels(&out.labels, &args.out_labels)?;
    if let Some(path) = &args.out_eigenvectors {
        save_csv(&DataMatrix::unlabeled(out.eigenvectors), path)?;
    }
    Ok(())
}

pub struct ShatterArgs {
    pub m: usize,
    pub exhaustive: bool,
    pub dichotomy: Option<u64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn cmd_shatter(args: &ShatterArgs) -> Result<()> {
    if args.m == 0 || args.m > 16 {
        return Err(CliError::Invalid(format!(
            "--m must be in 1..=16, got {}",
            args.m
        )));
    }
    let masks: Vec<u64> = if args.exhaustive {
        (0..(1u64 << args.m)).collect()
    } else if let Some(mask) = args.dichotomy {
        if mask >> args.m != 0 {
            return Err(CliError::Invalid(format!(
                "--dichotomy {mask} does not fit in {} bits",
                args.m
            )));
        }
        vec![mask]
    } else {
        return Err(CliError::Invalid(
            "pass --exhaustive or --dichotomy <bitmask>".into(),
        ));
    };

    let sweep = default_sigma_sweep();
    let mut report = String::from("dichotomy,sigma,success\n");
    let mut realized = 0usize;
    for &mask in &masks {
        let bits: Vec<bool> = (0..args.m).map(|b| mask >> b & 1 == 1).collect();
        let instance = build_shatter_instance(args.m, &bits, args.seed)?;
        let outcome = verify_shattering(&instance, &sweep)?;
        if outcome.success {
            realized += 1;
            let sigma = outcome.sigma.unwrap();
            let cert = separation_certificate(&instance, sigma);
            if !cert.holds {
                return Err(CliError::Invalid(format!(
                    "separation certificate failed for dichotomy {mask} at sigma {sigma}"
                )));
            }
            report.push_str(&format!("{mask},{sigma:.6e},true\n"));
        } else {
            report.push_str(&format!("{mask},,false\n"));
        }
    }
    match &args.out {
        Some(path) => {
            fs::write(path, &report).map_err(CliError::io(format!("writing {}", path.display())))?
        }
        None => print!("{report}"),
    }
    println!("realized {realized}/{} dichotomies (m={})", masks.len(), args.m);
    Ok(())
}

pub struct GrassmannArgs {
    pub model_dir: PathBuf,
    pub data: PathBuf,
    pub k: Option<usize>,
    pub affinity: AffinityConfig,
}

/// Squared Grassmann distance between the bundle's embedding of the data
/// and the bottom-k eigenvectors of the full-graph Laplacian. Distances in
/// the affinity kernel come from the bundle's Siamese net when it has one.
pub fn cmd_grassmann(args: &GrassmannArgs) -> Result<()> {
    let bundle = load_bundle(&args.model_dir)?;
    let points = load_csv(&args.data)?.features;
    let k = args.k.unwrap_or(bundle.cluster.k);
    let mut cfg = args.affinity.clone();
    cfg.distance = if bundle.siamese.is_some() {
        DistanceKind::Siamese
    } else {
        DistanceKind::Euclidean
    };
    let aff =
        spectral_core::affinity::gaussian_affinity(&points, &cfg, None, bundle.siamese.as_ref())?;
    let (vecs, _) = bottom_eigenvectors(&laplacian(&aff), k)?;
    let y = embed(&bundle.cluster.spectral_map, &points)?;
    let g = grassmann_sq(&y, &vecs)?;
    println!("{g:.6e}");
    Ok(())
}

/// Scale heuristic flag shared by `oracle` and `grassmann`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScaleModeArg {
    PerPointMedianNn,
    GlobalMedianKth,
    Fixed,
}

impl From<ScaleModeArg> for ScaleMode {
    fn from(v: ScaleModeArg) -> Self {
        match v {
            ScaleModeArg::PerPointMedianNn => ScaleMode::PerPointMedianNn,
            ScaleModeArg::GlobalMedianKth => ScaleMode::GlobalMedianKth,
            ScaleModeArg::Fixed => ScaleMode::Fixed,
        }
    }
}
