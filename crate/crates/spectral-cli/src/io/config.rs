//! Flat `key = value` config files (`:` also accepted, `#` comments).
//! Unspecified keys fall back to desk-scale defaults; unknown keys are
//! errors so typos surface instead of silently using a default.

use std::fs;
use std::path::Path;

use spectral_core::affinity::ScaleMode;
use spectral_core::nn::{Activation, LayerSpec, OptimizerConfig};
use spectral_core::siamese::SiameseConfig;
use spectral_core::spectral::{LossScaling, LossVariant, SpectralConfig};

use crate::error::{CliError, Result};

/// Every hyperparameter of a training run: the spectral trainer's own
/// settings plus the Siamese net's, with the Siamese embedding width
/// resolved against the data dimension at training time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub spectral: SpectralConfig,
    pub siamese_hidden: Vec<usize>,
    /// `None`: use `min(input_dim, 10)`.
    pub siamese_embed_dim: Option<usize>,
    pub siamese_n_pos_neighbors: usize,
    pub siamese_margin: f64,
    pub siamese_batch_size: usize,
    pub siamese_sample_one: bool,
    pub siamese_optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            spectral: SpectralConfig::new(2),
            siamese_hidden: vec![64, 64],
            siamese_embed_dim: None,
            siamese_n_pos_neighbors: 2,
            siamese_margin: 1.0,
            siamese_batch_size: 128,
            siamese_sample_one: false,
            siamese_optimizer: OptimizerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn siamese_config(&self, input_dim: usize) -> SiameseConfig {
        let embed = self.siamese_embed_dim.unwrap_or_else(|| input_dim.min(10));
        let mut architecture: Vec<LayerSpec> = self
            .siamese_hidden
            .iter()
            .map(|&w| LayerSpec::new(w, Activation::Relu))
            .collect();
        architecture.push(LayerSpec::new(embed, Activation::Linear));
        SiameseConfig {
            n_pos_neighbors: self.siamese_n_pos_neighbors,
            margin: self.siamese_margin,
            architecture,
            batch_size: self.siamese_batch_size,
            sample_one: self.siamese_sample_one,
            optimizer: self.siamese_optimizer.clone(),
        }
    }
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text =
        fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

pub fn parse_config(text: &str, path: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = split_key_value(line).ok_or_else(|| CliError::Parse {
            path: path.into(),
            line: line_no,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        apply_key(&mut cfg, key, value, path, line_no)?;
    }
    Ok(cfg)
}

fn split_key_value(line: &str) -> Option<(&str, &str)> {
    let sep = line.find(['=', ':'])?;
    let key = line[..sep].trim();
    let value = line[sep + 1..].trim();
    if key.is_empty() || value.is_empty() {
        return None;
    }
    Some((key, value))
}

fn apply_key(cfg: &mut TrainConfig, key: &str, value: &str, path: &str, line: usize) -> Result<()> {
    let bad = |expected: &'static str| CliError::BadValue {
        path: path.into(),
        line,
        key: key.into(),
        value: value.into(),
        expected,
    };
    macro_rules! parse {
        ($ty:ty, $expected:literal) => {
            value.parse::<$ty>().map_err(|_| bad($expected))?
        };
    }
    macro_rules! positive {
        ($expected:literal) => {{
            let v = value.parse::<f64>().map_err(|_| bad($expected))?;
            if v.is_nan() || v <= 0.0 {
                return Err(bad($expected));
            }
            v
        }};
    }

    match key {
        "seed" => cfg.spectral.seed = parse!(u64, "unsigned integer"),
        "k" => cfg.spectral.k = parse_count(value).ok_or_else(|| bad("positive integer"))?,
        "batch_size" => {
            cfg.spectral.grad_batch = parse_count(value).ok_or_else(|| bad("positive integer"))?
        }
        "ortho_batch_size" => {
            cfg.spectral.ortho_batch = parse_count(value).ok_or_else(|| bad("positive integer"))?
        }
        "loss_variant" => {
            cfg.spectral.loss_variant = match value {
                "unnormalized" => LossVariant::Unnormalized,
                "normalized" => LossVariant::Normalized,
                _ => return Err(bad("`unnormalized` or `normalized`")),
            }
        }
        "loss_scaling" => {
            cfg.spectral.loss_scaling = match value {
                "inverse_m" => LossScaling::InverseM,
                "inverse_m_squared" => LossScaling::InverseMSquared,
                _ => return Err(bad("`inverse_m` or `inverse_m_squared`")),
            }
        }
        "hidden_layers" => {
            cfg.spectral.hidden = parse_widths(value)
                .ok_or_else(|| bad("comma-separated positive integers"))?
                .into_iter()
                .map(|w| LayerSpec::new(w, Activation::Relu))
                .collect()
        }
        "lr" => cfg.spectral.optimizer.lr = positive!("positive float"),
        "lr_decay" => {
            let v = positive!("float in (0, 1)");
            if v >= 1.0 {
                return Err(bad("float in (0, 1)"));
            }
            cfg.spectral.optimizer.lr_decay = v;
        }
        "patience" => {
            cfg.spectral.optimizer.patience =
                parse_count(value).ok_or_else(|| bad("positive integer"))?
        }
        "lr_floor" => cfg.spectral.optimizer.lr_floor = positive!("positive float"),
        "rmsprop_rho" => {
            let v = parse!(f64, "float in [0, 1)");
            if !(0.0..1.0).contains(&v) {
                return Err(bad("float in [0, 1)"));
            }
            cfg.spectral.optimizer.rho = v;
        }
        "rmsprop_epsilon" => cfg.spectral.optimizer.epsilon = positive!("positive float"),
        "max_epochs" => {
            cfg.spectral.optimizer.max_epochs =
                parse_count(value).ok_or_else(|| bad("positive integer"))?
        }
        "n_neighbors" => {
            cfg.spectral.affinity.n_neighbors =
                parse_count(value).ok_or_else(|| bad("positive integer"))?
        }
        "scale_mode" => {
            cfg.spectral.affinity.scale_mode = match value {
                "per_point_median_nn" => ScaleMode::PerPointMedianNn,
                "global_median_kth" => ScaleMode::GlobalMedianKth,
                "fixed" => ScaleMode::Fixed,
                _ => {
                    return Err(bad(
                        "`per_point_median_nn`, `global_median_kth`, or `fixed`",
                    ))
                }
            }
        }
        "scale_k" => {
            cfg.spectral.affinity.scale_k =
                parse_count(value).ok_or_else(|| bad("positive integer"))?
        }
        "fixed_sigma" => cfg.spectral.affinity.fixed_sigma = Some(positive!("positive float")),
        "siamese_hidden_layers" => {
            cfg.siamese_hidden =
                parse_widths(value).ok_or_else(|| bad("comma-separated positive integers"))?
        }
        "siamese_embed_dim" => {
            cfg.siamese_embed_dim = Some(parse_count(value).ok_or_else(|| bad("positive integer"))?)
        }
        "siamese_n_pos_neighbors" => {
            cfg.siamese_n_pos_neighbors =
                parse_count(value).ok_or_else(|| bad("positive integer"))?
        }
        "siamese_margin" => cfg.siamese_margin = positive!("positive float"),
        "siamese_batch_size" => {
            cfg.siamese_batch_size = parse_count(value).ok_or_else(|| bad("positive integer"))?
        }
        "siamese_sample_one" => {
            cfg.siamese_sample_one = parse!(bool, "`true` or `false`");
        }
        "siamese_lr" => cfg.siamese_optimizer.lr = positive!("positive float"),
        "siamese_lr_decay" => {
            let v = positive!("float in (0, 1)");
            if v >= 1.0 {
                return Err(bad("float in (0, 1)"));
            }
            cfg.siamese_optimizer.lr_decay = v;
        }
        "siamese_patience" => {
            cfg.siamese_optimizer.patience =
                parse_count(value).ok_or_else(|| bad("positive integer"))?
        }
        "siamese_lr_floor" => cfg.siamese_optimizer.lr_floor = positive!("positive float"),
        "siamese_max_epochs" => {
            cfg.siamese_optimizer.max_epochs =
                parse_count(value).ok_or_else(|| bad("positive integer"))?
        }
        _ => {
            return Err(CliError::UnknownKey {
                path: path.into(),
                line,
                key: key.into(),
            })
        }
    }
    Ok(())
}

fn parse_count(value: &str) -> Option<usize> {
    value.parse::<usize>().ok().filter(|&v| v >= 1)
}

fn parse_widths(value: &str) -> Option<Vec<usize>> {
    value
        .split(',')
        .map(|part| parse_count(part.trim()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_config("", "test.cfg").unwrap();
        assert_eq!(cfg, TrainConfig::default());
    }

    #[test]
    fn lr_decay_parses_with_either_separator() {
        for text in ["lr_decay = 0.1", "lr_decay: 0.1"] {
            let cfg = parse_config(text, "test.cfg").unwrap();
            assert_eq!(cfg.spectral.optimizer.lr_decay, 0.1);
        }
    }

    #[test]
    fn negative_batch_size_is_a_type_error() {
        let err = parse_config("batch_size = -5", "test.cfg").unwrap_err();
        match err {
            CliError::BadValue { key, value, .. } => {
                assert_eq!(key, "batch_size");
                assert_eq!(value, "-5");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = parse_config("# comment\nlearning_rate = 0.1", "test.cfg").unwrap_err();
        match err {
            CliError::UnknownKey { key, line, .. } => {
                assert_eq!(key, "learning_rate");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn full_config_roundtrip_of_values() {
        let text = "\
k = 3
batch_size = 64
ortho_batch_size = 48
loss_variant = normalized
loss_scaling = inverse_m_squared
hidden_layers = 32,16
lr = 0.01
patience = 4
n_neighbors = 5
scale_mode = fixed
fixed_sigma = 0.4
siamese_hidden_layers = 8,8
siamese_embed_dim = 3
siamese_sample_one = true
";
        let cfg = parse_config(text, "test.cfg").unwrap();
        assert_eq!(cfg.spectral.k, 3);
        assert_eq!(cfg.spectral.grad_batch, 64);
        assert_eq!(cfg.spectral.ortho_batch, 48);
        assert_eq!(cfg.spectral.loss_variant, LossVariant::Normalized);
        assert_eq!(cfg.spectral.loss_scaling, LossScaling::InverseMSquared);
        assert_eq!(cfg.spectral.hidden.len(), 2);
        assert_eq!(cfg.spectral.affinity.fixed_sigma, Some(0.4));
        let s = cfg.siamese_config(2);
        assert_eq!(s.architecture.last().unwrap().width, 3);
        assert!(s.sample_one);
    }

    #[test]
    fn siamese_embed_dim_defaults_to_capped_input_dim() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.siamese_config(2).architecture.last().unwrap().width, 2);
        assert_eq!(
            cfg.siamese_config(784).architecture.last().unwrap().width,
            10
        );
    }
}
