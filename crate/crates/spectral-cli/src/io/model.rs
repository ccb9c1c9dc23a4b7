//! Versioned plain-text persistence for trained models. Weights are
//! written with 17 significant digits, so save/load round-trips exactly
//! and the files stay diffable.

use std::fs;
use std::path::{Path, PathBuf};

use spectral_core::cluster::ClusterModel;
use spectral_core::nn::{Activation, DenseLayer, LayerSpec, MlpModel};
use spectral_core::Matrix;

use super::fmt_f64;
use crate::error::{CliError, Result};

const MODEL_HEADER: &str = "mlp-model v1";
const BUNDLE_HEADER: &str = "spectral-model-bundle v1";

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
        Activation::Linear => "linear",
    }
}

fn activation_from(name: &str) -> Option<Activation> {
    match name {
        "relu" => Some(Activation::Relu),
        "tanh" => Some(Activation::Tanh),
        "linear" => Some(Activation::Linear),
        _ => None,
    }
}

fn push_matrix_rows(out: &mut String, m: &Matrix) {
    for i in 0..m.rows() {
        let fields: Vec<String> = m.row(i).iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    out.push_str(&format!("input_dim {}\n", model.input_dim()));
    out.push_str(&format!("layers {}\n", model.specs().len()));
    for spec in model.specs() {
        out.push_str(&format!(
            "spec {} {}\n",
            activation_name(spec.activation),
            spec.width
        ));
    }
    for (idx, layer) in model.layers().iter().enumerate() {
        out.push_str(&format!(
            "layer {idx} weights {} {}\n",
            layer.weights.rows(),
            layer.weights.cols()
        ));
        push_matrix_rows(&mut out, &layer.weights);
        out.push_str(&format!("layer {idx} bias {}\n", layer.bias.len()));
        let fields: Vec<String> = layer.bias.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    if let Some(frozen) = model.frozen_output() {
        out.push_str(&format!("frozen {}\n", frozen.rows()));
        push_matrix_rows(&mut out, frozen);
    }
    out.push_str("end\n");
    fs::write(path, out).map_err(CliError::io(format!("writing {}", path.display())))
}

struct Cursor<'a> {
    lines: std::str::Lines<'a>,
    path: String,
    line_no: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, path: &Path) -> Self {
        Self {
            lines: text.lines(),
            path: path.display().to_string(),
            line_no: 0,
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.line_no += 1;
        self.lines.next().ok_or_else(|| CliError::ModelFormat {
            path: self.path.clone(),
            msg: format!("truncated file: expected {what} at line {}", self.line_no),
        })
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(CliError::ModelFormat {
            path: self.path.clone(),
            msg: format!("line {}: {}", self.line_no, msg.into()),
        })
    }

    fn expect(&mut self, literal: &str) -> Result<()> {
        let line = self.next(literal)?;
        if line.trim() != literal {
            return self.fail(format!("expected `{literal}`, found `{line}`"));
        }
        Ok(())
    }

    fn keyed_fields(&mut self, key: &str, count: usize) -> Result<Vec<&'a str>> {
        let line = self.next(key)?;
        let mut parts = line.split_whitespace();
        for expected in key.split_whitespace() {
            if parts.next() != Some(expected) {
                return self.fail(format!("expected `{key} ...`, found `{line}`"));
            }
        }
        let fields: Vec<&str> = parts.collect();
        if fields.len() != count {
            return self.fail(format!(
                "expected {count} fields after `{key}`, found {}",
                fields.len()
            ));
        }
        Ok(fields)
    }

    fn float_row(&mut self, count: usize) -> Result<Vec<f64>> {
        let line = self.next("a row of floats")?;
        let values: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse).collect();
        match values {
            Ok(v) if v.len() == count => Ok(v),
            Ok(v) => self.fail(format!("expected {count} floats, found {}", v.len())),
            Err(_) => self.fail("cannot parse float row"),
        }
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.float_row(cols)?);
        }
        Ok(Matrix::new(rows, cols, data))
    }
}

fn parse_usize(cur: &Cursor<'_>, field: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| CliError::ModelFormat {
            path: cur.path.clone(),
            msg: format!("line {}: `{field}` is not an integer", cur.line_no),
        })
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let text =
        fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    let mut cur = Cursor::new(&text, path);
    cur.expect(MODEL_HEADER)?;
    let fields = cur.keyed_fields("input_dim", 1)?;
    let input_dim = parse_usize(&cur, fields[0])?;
    let fields = cur.keyed_fields("layers", 1)?;
    let n_layers = parse_usize(&cur, fields[0])?;

    let mut specs = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let fields = cur.keyed_fields("spec", 2)?;
        let Some(activation) = activation_from(fields[0]) else {
            return cur.fail(format!("unknown activation `{}`", fields[0]));
        };
        specs.push(LayerSpec::new(parse_usize(&cur, fields[1])?, activation));
    }

    let mut layers = Vec::with_capacity(n_layers);
    for idx in 0..n_layers {
        let fields = cur.keyed_fields(&format!("layer {idx} weights"), 2)?;
        let rows = parse_usize(&cur, fields[0])?;
        let cols = parse_usize(&cur, fields[1])?;
        let weights = cur.matrix(rows, cols)?;
        let fields = cur.keyed_fields(&format!("layer {idx} bias"), 1)?;
        let blen = parse_usize(&cur, fields[0])?;
        let bias = cur.float_row(blen)?;
        layers.push(DenseLayer { weights, bias });
    }

    let line = cur.next("`frozen` or `end`")?;
    let frozen = if let Some(rest) = line.strip_prefix("frozen ") {
        let k = parse_usize(&cur, rest.trim())?;
        let m = cur.matrix(k, k)?;
        cur.expect("end")?;
        Some(m)
    } else if line.trim() == "end" {
        None
    } else {
        return cur.fail(format!("expected `frozen` or `end`, found `{line}`"));
    };

    MlpModel::from_parts(input_dim, specs, layers, frozen).map_err(|e| CliError::ModelFormat {
        path: path.display().to_string(),
        msg: format!("inconsistent model dimensions: {e}"),
    })
}

pub fn save_matrix(m: &Matrix, path: &Path) -> Result<()> {
    let mut out = format!("matrix {} {}\n", m.rows(), m.cols());
    push_matrix_rows(&mut out, m);
    fs::write(path, out).map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let text =
        fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    let mut cur = Cursor::new(&text, path);
    let fields = cur.keyed_fields("matrix", 2)?;
    let rows = parse_usize(&cur, fields[0])?;
    let cols = parse_usize(&cur, fields[1])?;
    cur.matrix(rows, cols)
}

pub const SPECTRAL_MAP_FILE: &str = "spectral_map.txt";
pub const SIAMESE_FILE: &str = "siamese.txt";
pub const CENTROIDS_FILE: &str = "centroids.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub struct ModelBundle {
    pub cluster: ClusterModel,
    pub siamese: Option<MlpModel>,
}

/// Writes the model bundle: spectral map, optional Siamese net, centroids,
/// and a manifest tying them together.
pub fn save_bundle(dir: &Path, cluster: &ClusterModel, siamese: Option<&MlpModel>) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    save_model(&cluster.spectral_map, &dir.join(SPECTRAL_MAP_FILE))?;
    save_matrix(&cluster.centroids, &dir.join(CENTROIDS_FILE))?;
    let mut manifest = format!("{BUNDLE_HEADER}\nk {}\n", cluster.k);
    manifest.push_str(&format!("spectral_map {SPECTRAL_MAP_FILE}\n"));
    manifest.push_str(&format!("centroids {CENTROIDS_FILE}\n"));
    if let Some(model) = siamese {
        save_model(model, &dir.join(SIAMESE_FILE))?;
        manifest.push_str(&format!("siamese {SIAMESE_FILE}\n"));
    }
    fs::write(dir.join(MANIFEST_FILE), manifest)
        .map_err(CliError::io(format!("writing {}", dir.join(MANIFEST_FILE).display())))
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path)
        .map_err(CliError::io(format!("reading {}", manifest_path.display())))?;
    let mut k = None;
    let mut map_file = None;
    let mut centroid_file = None;
    let mut siamese_file: Option<PathBuf> = None;
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != BUNDLE_HEADER {
                return Err(CliError::ModelFormat {
                    path: manifest_path.display().to_string(),
                    msg: format!("unrecognized header `{line}`"),
                });
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some("k"), Some(v)) => k = v.parse().ok(),
            (Some("spectral_map"), Some(f)) => map_file = Some(dir.join(f)),
            (Some("centroids"), Some(f)) => centroid_file = Some(dir.join(f)),
            (Some("siamese"), Some(f)) => siamese_file = Some(dir.join(f)),
            (None, _) => continue,
            _ => {
                return Err(CliError::ModelFormat {
                    path: manifest_path.display().to_string(),
                    msg: format!("unrecognized manifest line `{line}`"),
                })
            }
        }
    }
    let missing = |what: &str| CliError::ModelFormat {
        path: manifest_path.display().to_string(),
        msg: format!("missing `{what}` entry"),
    };
    let k = k.ok_or_else(|| missing("k"))?;
    let spectral_map = load_model(&map_file.ok_or_else(|| missing("spectral_map"))?)?;
    let centroids = load_matrix(&centroid_file.ok_or_else(|| missing("centroids"))?)?;
    let siamese = siamese_file.map(|f| load_model(&f)).transpose()?;
    Ok(ModelBundle {
        cluster: ClusterModel {
            spectral_map,
            centroids,
            k,
        },
        siamese,
    })
}
