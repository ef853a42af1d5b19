//! Dataset directories, model dispatch and the train / predict / evaluate
//! steps behind the command-line tool.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use icebreaker_core::dataset::{DatasetSplit, FeatureKind, FeatureSet, RelevanceTable, SyntheticDataset, VideoId};
use icebreaker_core::deeplda::{rank_candidates_lda, train_deeplda, DeepLdaModel};
use icebreaker_core::evaluation::{evaluate, MetricReport, RankingResult};
use icebreaker_core::forest::{self, sample_pairs, ForestModel, ForestParams, ForestTrainer, PairSet};
use icebreaker_core::nn::{build_and_train_regression, predict_regression, LossKind, RegressionModel};
use icebreaker_core::Error as CoreError;
use rayon::prelude::*;

use crate::config::{ModelKind, Settings};
use crate::formats::{self, models, Artifact};
use crate::{Error, Result};

pub const FRAMES_FILE: &str = "frames.iceb";
pub const VIDEOS_FILE: &str = "videos.iceb";
pub const RELEVANCE_FILE: &str = "relevance.tsv";
pub const SPLIT_FILE: &str = "splits.txt";

/// Everything a run reads from a data directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: FeatureSet,
    pub videos: FeatureSet,
    pub relevance: RelevanceTable,
    pub split: DatasetSplit,
}

impl From<SyntheticDataset> for Dataset {
    fn from(s: SyntheticDataset) -> Self {
        Self { frames: s.frames, videos: s.videos, relevance: s.relevance, split: s.split }
    }
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let frames = formats::load_features(&dir.join(FRAMES_FILE))?;
        let videos = formats::load_features(&dir.join(VIDEOS_FILE))?;
        let relevance = formats::load_relevance(&dir.join(RELEVANCE_FILE))?;
        let split = formats::load_split(&dir.join(SPLIT_FILE))?;
        let data = Self { frames, videos, relevance, split };
        data.check()?;
        Ok(data)
    }

    fn check(&self) -> Result<()> {
        if self.frames.kind() != FeatureKind::FrameLevel || self.videos.kind() != FeatureKind::VideoLevel {
            return Err(
                CoreError::Data(format!("{FRAMES_FILE} must be frame-level and {VIDEOS_FILE} video-level")).into()
            );
        }
        self.relevance.validate_universe(&self.videos)?;
        self.split.check_covers(&self.relevance)?;
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        formats::save_features(&dir.join(FRAMES_FILE), &self.frames)?;
        formats::save_features(&dir.join(VIDEOS_FILE), &self.videos)?;
        formats::save_relevance(&dir.join(RELEVANCE_FILE), &self.relevance)?;
        formats::save_split(&dir.join(SPLIT_FILE), &self.split)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Forest(Artifact<ForestModel>),
    Regression(Artifact<RegressionModel>),
    DeepLda(Artifact<DeepLdaModel>),
}

impl TrainedModel {
    pub fn encode(&self) -> Result<Vec<u8>> {
        match self {
            TrainedModel::Forest(a) => models::encode_forest(a),
            TrainedModel::Regression(a) => models::encode_regression(a),
            TrainedModel::DeepLda(a) => models::encode_deeplda(a),
        }
    }

    /// Dispatches on the magic bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        match bytes.get(..4) {
            Some(m) if m == models::FOREST_MAGIC => models::decode_forest(bytes).map(TrainedModel::Forest),
            Some(m) if m == models::REGRESSION_MAGIC => models::decode_regression(bytes).map(TrainedModel::Regression),
            Some(m) if m == models::DEEPLDA_MAGIC => models::decode_deeplda(bytes).map(TrainedModel::DeepLda),
            _ => Err(Error::Format("not a model file (unknown magic)".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        formats::write_file(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&formats::read_file(path)?)
    }

    pub fn provenance(&self) -> &str {
        match self {
            TrainedModel::Forest(a) => &a.provenance,
            TrainedModel::Regression(a) => &a.provenance,
            TrainedModel::DeepLda(a) => &a.provenance,
        }
    }
}

/// Grows the trees on the rayon pool. Every tree draws from its own stream,
/// so the result equals [`forest::fit_forest`].
pub fn fit_forest_parallel(ps: &PairSet, params: ForestParams) -> Result<ForestModel> {
    let trainer = ForestTrainer::new(ps, params)?;
    let done = AtomicUsize::new(0);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let tree = trainer.fit_tree(i);
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            log::info!("tree {n}/{} grown ({} nodes)", params.n_trees, tree.nodes.len());
            tree
        })
        .collect();
    Ok(trainer.assemble(trees))
}

/// Trains `kind` on the training split only; validation and test videos are
/// never seen.
pub fn train(settings: &Settings, kind: ModelKind, data: &Dataset) -> Result<TrainedModel> {
    let train_ids = &data.split.train;
    let provenance = settings.effective_text(kind);
    match kind {
        ModelKind::Rf => {
            let feats = data.videos.restricted_to(train_ids);
            let params = settings.forest_params();
            params.validate()?;
            let pairs = sample_pairs(&data.relevance, &feats, train_ids, params.seed)?;
            log::info!("sampled {} pairs ({} queries skipped)", pairs.pairs.len(), pairs.skipped.len());
            let model = fit_forest_parallel(&pairs, params)?;
            Ok(TrainedModel::Forest(Artifact { model, provenance }))
        }
        ModelKind::RegCosine | ModelKind::RegPoisson => {
            let loss = if kind == ModelKind::RegCosine { LossKind::CosineProximity } else { LossKind::Poisson };
            let cfg = settings.regression_config(loss, data.frames.dim(), data.videos.dim());
            let (model, history) =
                build_and_train_regression(&cfg, &data.frames, &data.videos, &data.relevance, train_ids)?;
            if !history.skipped.is_empty() {
                log::warn!("{} training queries skipped", history.skipped.len());
            }
            Ok(TrainedModel::Regression(Artifact { model, provenance }))
        }
        ModelKind::DeepLda => {
            let cfg = settings.deeplda_config(data.videos.dim());
            let feats = data.videos.restricted_to(train_ids);
            let (model, history) = train_deeplda(&cfg, &feats, &data.relevance, train_ids)?;
            if !history.skipped.is_empty() {
                log::warn!("{} relevance rows skipped", history.skipped.len());
            }
            Ok(TrainedModel::DeepLda(Artifact { model, provenance }))
        }
    }
}

/// Top-`topk` rankings for every query in `queries`, in id order.
///
/// The forest and DeepLDA rank every other video in the dataset; the
/// regression net ranks its own candidate space (the training videos).
pub fn predict(
    model: &TrainedModel,
    data: &Dataset,
    queries: &BTreeSet<VideoId>,
    topk: usize,
) -> Result<Vec<RankingResult>> {
    if topk == 0 {
        return Err(Error::Config("--topk must be at least 1".into()));
    }
    match model {
        TrainedModel::Regression(a) => {
            let c = &a.model.config;
            if c.frame_dim != data.frames.dim() || c.video_dim != data.videos.dim() {
                return Err(CoreError::Data(format!(
                    "model expects frame/video dims {}/{}, data has {}/{}",
                    c.frame_dim,
                    c.video_dim,
                    data.frames.dim(),
                    data.videos.dim()
                ))
                .into());
            }
        }
        TrainedModel::DeepLda(a) if a.model.config.input_dim != data.videos.dim() => {
            return Err(CoreError::Data(format!(
                "model expects {}-d video features, data has {}",
                a.model.config.input_dim,
                data.videos.dim()
            ))
            .into());
        }
        _ => {}
    }
    let all: BTreeSet<VideoId> = data.videos.ids().cloned().collect();
    let queries: Vec<&VideoId> = queries.iter().collect();
    queries
        .par_iter()
        .map(|&q| {
            let missing = || CoreError::Data(format!("no features for query {q}"));
            let others = || all.iter().filter(|c| *c != q).cloned().collect::<BTreeSet<_>>();
            let mut ranking = match model {
                TrainedModel::Forest(a) => forest::rank_candidates(&a.model, q, &others(), &data.videos)?,
                TrainedModel::DeepLda(a) => rank_candidates_lda(&a.model, q, &others(), &data.videos)?,
                TrainedModel::Regression(a) => {
                    let frames = data.frames.frames(q.as_str()).ok_or_else(missing)?;
                    let video = data.videos.vector(q.as_str()).ok_or_else(missing)?;
                    predict_regression(&a.model, q, &frames, &video, topk)?
                }
            };
            ranking.truncate(topk);
            Ok(ranking)
        })
        .collect()
}

/// Evaluates against the relevance rows of `scope` (all rows when `None`).
/// Strict by default: every in-scope query needs a prediction. `lenient`
/// instead evaluates only the in-scope queries that were predicted.
pub fn evaluate_predictions(
    preds: &[RankingResult],
    rel: &RelevanceTable,
    scope: Option<&BTreeSet<VideoId>>,
    lenient: bool,
    hit_ks: &[usize],
    recall_ks: &[usize],
) -> Result<MetricReport> {
    let mut rel = match scope {
        Some(ids) => rel.restricted_to(ids),
        None => rel.clone(),
    };
    let mut preds = preds.to_vec();
    if lenient {
        let predicted: BTreeSet<VideoId> = preds.iter().map(|p| p.query.clone()).collect();
        let usable: BTreeSet<VideoId> =
            rel.rows().filter(|(q, list)| !list.is_empty() && predicted.contains(*q)).map(|(q, _)| q.clone()).collect();
        rel = rel.restricted_to(&usable);
        preds.retain(|p| usable.contains(&p.query));
    }
    Ok(evaluate(&preds, &rel, hit_ks, recall_ks)?)
}

/// Sizes the global rayon pool from `ICEBREAKER_THREADS` (unset or 0: one
/// thread per core).
pub fn configure_threads() -> Result<()> {
    let threads = match std::env::var("ICEBREAKER_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("ICEBREAKER_THREADS must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}
