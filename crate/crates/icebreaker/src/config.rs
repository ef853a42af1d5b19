//! Run configuration: built-in defaults, overridden by a `key = value` file,
//! overridden by command-line settings.
//!
//! ```text
//! # comments and blank lines are ignored
//! seed = 7
//! rf.n_trees = 50
//! deeplda.eps_threshold = 0.5
//! ```

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use icebreaker_core::deeplda::{DeepLdaConfig, EmbeddingDistance};
use icebreaker_core::forest::ForestParams;
use icebreaker_core::nn::{LossKind, RegressionNetConfig};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    #[value(name = "rf")]
    Rf,
    #[value(name = "reg_cosine")]
    RegCosine,
    #[value(name = "reg_poisson")]
    RegPoisson,
    #[value(name = "deeplda")]
    DeepLda,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Rf, ModelKind::RegCosine, ModelKind::RegPoisson, ModelKind::DeepLda];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::RegCosine => "reg_cosine",
            ModelKind::RegPoisson => "reg_poisson",
            ModelKind::DeepLda => "deeplda",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::Config(format!("unknown model {s:?}; expected rf, reg_cosine, reg_poisson or deeplda"))
        })
    }
}

/// Hyperparameters for every model variant. Feature dimensions are not
/// settings; they are taken from the data at training time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub model: Option<ModelKind>,
    /// Seed for every model.
    pub seed: u64,
    pub rf: ForestParams,
    pub regression: RegressionNetConfig,
    pub deeplda: DeepLdaConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl Settings {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (k, v) = (key, value);
        match key {
            "model" => self.model = Some(value.parse()?),
            "seed" => self.seed = parse(k, v)?,
            "rf.n_trees" => self.rf.n_trees = parse(k, v)?,
            "rf.max_depth" => self.rf.max_depth = parse(k, v)?,
            "rf.min_samples_leaf" => self.rf.min_samples_leaf = parse(k, v)?,
            "rf.features_per_split" => self.rf.features_per_split = parse(k, v)?,
            "regression.td_dense_units" => self.regression.td_dense_units = parse(k, v)?,
            "regression.lstm_units" => self.regression.lstm_units = parse(k, v)?,
            "regression.dense_units" => self.regression.dense_units = parse_list(k, v)?,
            "regression.max_frames" => self.regression.max_frames = parse(k, v)?,
            "regression.learning_rate" => self.regression.learning_rate = parse(k, v)?,
            "regression.epochs" => self.regression.epochs = parse(k, v)?,
            "regression.batch_size" => self.regression.batch_size = parse(k, v)?,
            "deeplda.hidden" => {
                self.deeplda.hidden = parse_list(k, v)?
                    .try_into()
                    .map_err(|_| Error::Config(format!("{k}: expected two comma-separated widths")))?
            }
            "deeplda.output_dim" => self.deeplda.output_dim = parse(k, v)?,
            "deeplda.eps_threshold" => self.deeplda.eps_threshold = parse(k, v)?,
            "deeplda.s_w_regularizer" => self.deeplda.s_w_regularizer = parse(k, v)?,
            "deeplda.negatives_per_batch" => {
                self.deeplda.negatives_per_batch = if v == "auto" { None } else { Some(parse(k, v)?) }
            }
            "deeplda.learning_rate" => self.deeplda.learning_rate = parse(k, v)?,
            "deeplda.epochs" => self.deeplda.epochs = parse(k, v)?,
            "deeplda.distance" => {
                self.deeplda.distance = match v {
                    "euclidean" => EmbeddingDistance::Euclidean,
                    "cosine" => EmbeddingDistance::Cosine,
                    _ => return Err(Error::Config(format!("{k}: expected euclidean or cosine, got {v:?}"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` command-line override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("config line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// The settings that affect `kind`, in a form [`Settings::apply_text`]
    /// reads back.
    pub fn effective_text(&self, kind: ModelKind) -> String {
        let mut out = format!("model = {kind}\nseed = {}\n", self.seed);
        let mut line = |k: &str, v: &dyn fmt::Display| writeln!(out, "{k} = {v}").expect("string write");
        match kind {
            ModelKind::Rf => {
                let p = &self.rf;
                line("rf.n_trees", &p.n_trees);
                line("rf.max_depth", &p.max_depth);
                line("rf.min_samples_leaf", &p.min_samples_leaf);
                line("rf.features_per_split", &p.features_per_split);
            }
            ModelKind::RegCosine | ModelKind::RegPoisson => {
                let c = &self.regression;
                line("regression.td_dense_units", &c.td_dense_units);
                line("regression.lstm_units", &c.lstm_units);
                line("regression.dense_units", &join(&c.dense_units));
                line("regression.max_frames", &c.max_frames);
                line("regression.learning_rate", &c.learning_rate);
                line("regression.epochs", &c.epochs);
                line("regression.batch_size", &c.batch_size);
            }
            ModelKind::DeepLda => {
                let c = &self.deeplda;
                line("deeplda.hidden", &join(&c.hidden));
                line("deeplda.output_dim", &c.output_dim);
                line("deeplda.eps_threshold", &c.eps_threshold);
                line("deeplda.s_w_regularizer", &c.s_w_regularizer);
                let negatives = c.negatives_per_batch.map_or("auto".to_owned(), |n| n.to_string());
                line("deeplda.negatives_per_batch", &negatives);
                line("deeplda.learning_rate", &c.learning_rate);
                line("deeplda.epochs", &c.epochs);
                let distance = match c.distance {
                    EmbeddingDistance::Euclidean => "euclidean",
                    EmbeddingDistance::Cosine => "cosine",
                };
                line("deeplda.distance", &distance);
            }
        }
        out
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams { seed: self.seed, ..self.rf }
    }

    pub fn regression_config(&self, loss: LossKind, frame_dim: usize, video_dim: usize) -> RegressionNetConfig {
        RegressionNetConfig { loss, frame_dim, video_dim, seed: self.seed, ..self.regression.clone() }
    }

    pub fn deeplda_config(&self, input_dim: usize) -> DeepLdaConfig {
        DeepLdaConfig { input_dim, seed: self.seed, ..self.deeplda.clone() }
    }
}
