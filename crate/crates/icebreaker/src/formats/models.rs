//! Model artifacts: `ICBF` (forest), `ICBR` (regression net), `ICBL`
//! (DeepLDA). Each carries its hyperparameters, a free-text provenance block
//! (the effective run configuration) and the learned parameters.

use icebreaker_core::deeplda::{DeepLdaConfig, DeepLdaModel, EmbeddingDistance};
use icebreaker_core::forest::{ForestModel, ForestParams, Node, Tree};
use icebreaker_core::nn::{AdamState, LossKind, RegressionModel, RegressionNetConfig};

use super::bin::{Reader, Writer};
use crate::{Error, Result};

pub const FOREST_MAGIC: &[u8; 4] = b"ICBF";
pub const REGRESSION_MAGIC: &[u8; 4] = b"ICBR";
pub const DEEPLDA_MAGIC: &[u8; 4] = b"ICBL";
const VERSION: u16 = 1;

/// A model together with the configuration text it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact<M> {
    pub model: M,
    pub provenance: String,
}

const NODE_SPLIT: u8 = 0;
const NODE_LEAF: u8 = 1;
const NODE_BYTES: usize = 14;

pub fn encode_forest(a: &Artifact<ForestModel>) -> Result<Vec<u8>> {
    let p = &a.model.params;
    let mut w = Writer::with_header(FOREST_MAGIC, VERSION);
    w.len32(p.n_trees)?;
    w.len32(p.max_depth)?;
    w.len32(p.min_samples_leaf)?;
    w.len32(p.features_per_split)?;
    w.u64(p.seed);
    w.text(&a.provenance)?;
    for tree in &a.model.trees {
        w.len32(tree.nodes.len())?;
        for node in &tree.nodes {
            match *node {
                Node::Split { feature, threshold, left, right } => {
                    w.u8(NODE_SPLIT);
                    w.u8(feature);
                    w.f32(threshold);
                    w.u32(left);
                    w.u32(right);
                }
                Node::Leaf { value } => {
                    w.u8(NODE_LEAF);
                    w.u8(0);
                    w.f32(value);
                    w.u32(0);
                    w.u32(0);
                }
            }
        }
    }
    Ok(w.into_bytes())
}

pub fn decode_forest(bytes: &[u8]) -> Result<Artifact<ForestModel>> {
    let mut r = Reader::with_header(bytes, FOREST_MAGIC, VERSION, "forest model")?;
    let params = ForestParams {
        n_trees: r.usize()?,
        max_depth: r.usize()?,
        min_samples_leaf: r.usize()?,
        features_per_split: r.usize()?,
        seed: r.u64()?,
    };
    params.validate()?;
    let provenance = r.text()?;
    let mut trees = Vec::with_capacity(params.n_trees.min(1 << 16));
    for _ in 0..params.n_trees {
        let n = r.count(NODE_BYTES)?;
        let nodes = (0..n)
            .map(|_| {
                let (kind, feature, value, left, right) = (r.u8()?, r.u8()?, r.f32()?, r.u32()?, r.u32()?);
                match kind {
                    NODE_SPLIT => Ok(Node::Split { feature, threshold: value, left, right }),
                    NODE_LEAF if feature == 0 && left == 0 && right == 0 => Ok(Node::Leaf { value }),
                    _ => Err(Error::Format(format!("forest model: malformed node kind {kind}"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let tree = Tree { nodes };
        tree.validate()?;
        trees.push(tree);
    }
    r.finish()?;
    Ok(Artifact { model: ForestModel { params, trees }, provenance })
}

fn loss_code(loss: LossKind) -> u8 {
    match loss {
        LossKind::CosineProximity => 0,
        LossKind::Poisson => 1,
    }
}

pub fn encode_regression(a: &Artifact<RegressionModel>) -> Result<Vec<u8>> {
    let m = &a.model;
    let c = &m.config;
    let mut w = Writer::with_header(REGRESSION_MAGIC, VERSION);
    for v in [c.frame_dim, c.video_dim, c.td_dense_units, c.lstm_units] {
        w.len32(v)?;
    }
    w.len32(c.dense_units.len())?;
    for &u in &c.dense_units {
        w.len32(u)?;
    }
    w.len32(c.n_outputs)?;
    w.len32(c.max_frames)?;
    w.u8(loss_code(c.loss));
    w.f64(c.learning_rate);
    w.len32(c.epochs)?;
    w.len32(c.batch_size)?;
    w.u64(c.seed);
    w.text(&a.provenance)?;
    w.len32(m.candidates.len())?;
    for id in &m.candidates {
        w.id(id)?;
    }
    w.u64(m.epochs_trained);
    w.tensors(m.params().into_iter())?;
    w.u64(m.adam.t);
    w.tensors(m.adam.m.iter())?;
    w.tensors(m.adam.v.iter())?;
    Ok(w.into_bytes())
}

pub fn decode_regression(bytes: &[u8]) -> Result<Artifact<RegressionModel>> {
    let mut r = Reader::with_header(bytes, REGRESSION_MAGIC, VERSION, "regression model")?;
    let (frame_dim, video_dim, td_dense_units, lstm_units) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let n_dense = r.count(4)?;
    let dense_units = (0..n_dense).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let config = RegressionNetConfig {
        frame_dim,
        video_dim,
        td_dense_units,
        lstm_units,
        dense_units,
        n_outputs: r.usize()?,
        max_frames: r.usize()?,
        loss: match r.u8()? {
            0 => LossKind::CosineProximity,
            1 => LossKind::Poisson,
            k => return Err(Error::Format(format!("regression model: unknown loss {k}"))),
        },
        learning_rate: r.f64()?,
        epochs: r.usize()?,
        batch_size: r.usize()?,
        seed: r.u64()?,
    };
    let provenance = r.text()?;
    let n = r.count(2)?;
    let candidates = (0..n).map(|_| r.id()).collect::<Result<Vec<_>>>()?;
    let epochs_trained = r.u64()?;
    let params = r.tensors()?;
    let adam = AdamState { t: r.u64()?, m: r.tensors()?, v: r.tensors()? };
    r.finish()?;
    let model = RegressionModel::from_parts(config, candidates, params, adam, epochs_trained)?;
    Ok(Artifact { model, provenance })
}

pub fn encode_deeplda(a: &Artifact<DeepLdaModel>) -> Result<Vec<u8>> {
    let c = &a.model.config;
    let mut w = Writer::with_header(DEEPLDA_MAGIC, VERSION);
    for v in [c.input_dim, c.hidden[0], c.hidden[1], c.output_dim] {
        w.len32(v)?;
    }
    w.f64(c.eps_threshold);
    w.f64(c.s_w_regularizer);
    // 0 = match the relevance list size
    w.len32(c.negatives_per_batch.unwrap_or(0))?;
    w.f64(c.learning_rate);
    w.len32(c.epochs)?;
    w.u64(c.seed);
    w.u8(match c.distance {
        EmbeddingDistance::Euclidean => 0,
        EmbeddingDistance::Cosine => 1,
    });
    w.text(&a.provenance)?;
    w.tensors(a.model.params().into_iter())?;
    Ok(w.into_bytes())
}

pub fn decode_deeplda(bytes: &[u8]) -> Result<Artifact<DeepLdaModel>> {
    let mut r = Reader::with_header(bytes, DEEPLDA_MAGIC, VERSION, "DeepLDA model")?;
    let config = DeepLdaConfig {
        input_dim: r.usize()?,
        hidden: [r.usize()?, r.usize()?],
        output_dim: r.usize()?,
        eps_threshold: r.f64()?,
        s_w_regularizer: r.f64()?,
        negatives_per_batch: Some(r.usize()?).filter(|&n| n != 0),
        learning_rate: r.f64()?,
        epochs: r.usize()?,
        seed: r.u64()?,
        distance: match r.u8()? {
            0 => EmbeddingDistance::Euclidean,
            1 => EmbeddingDistance::Cosine,
            k => return Err(Error::Format(format!("DeepLDA model: unknown distance {k}"))),
        },
    };
    let provenance = r.text()?;
    let params = r.tensors()?;
    r.finish()?;
    Ok(Artifact { model: DeepLdaModel::from_parts(config, params)?, provenance })
}
