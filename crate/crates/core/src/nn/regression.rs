use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{Activation, AdamState, Dense, DenseCache, LossKind, Lstm, LstmCache, Tensor};
use crate::dataset::{FeatureSet, RelevanceTable, VideoId};
use crate::evaluation::{RankingResult, ScoreOrder};
use crate::{rng, Error, Result};

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionNetConfig {
    pub frame_dim: usize,
    pub video_dim: usize,
    pub td_dense_units: usize,
    pub lstm_units: usize,
    /// Widths of the video-level dense stack.
    pub dense_units: Vec<usize>,
    /// Size of the candidate space; filled in from the training ids.
    pub n_outputs: usize,
    /// Frame sequences are truncated (from the end) or masked-padded to this.
    pub max_frames: usize,
    pub loss: LossKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RegressionNetConfig {
    fn default() -> Self {
        Self {
            frame_dim: 2048,
            video_dim: 512,
            td_dense_units: 256,
            lstm_units: 128,
            dense_units: vec![256],
            n_outputs: 2,
            max_frames: 120,
            loss: LossKind::CosineProximity,
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl RegressionNetConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("frame_dim", self.frame_dim),
            ("video_dim", self.video_dim),
            ("td_dense_units", self.td_dense_units),
            ("lstm_units", self.lstm_units),
            ("max_frames", self.max_frames),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.dense_units.is_empty() || self.dense_units.contains(&0) {
            return Err(Error::Config("dense_units must list at least one positive width".into()));
        }
        if self.n_outputs < 2 {
            return Err(Error::Config(format!("need at least 2 outputs, got {}", self.n_outputs)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean training loss and the queries that could not be used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub epoch_losses: Vec<f64>,
    pub skipped: Vec<VideoId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub config: RegressionNetConfig,
    /// Output index → video, in id order.
    pub candidates: Vec<VideoId>,
    pub td: Dense,
    pub lstm: Lstm,
    pub branch: Vec<Dense>,
    pub head: Dense,
    pub adam: AdamState,
    pub epochs_trained: u64,
}

/// One training example: inputs and a multi-hot target over the candidates.
#[derive(Debug, Clone)]
struct Sample {
    frames: Vec<Vec<f64>>,
    video: Vec<f64>,
    target: Vec<f64>,
}

struct Cache {
    td: Vec<Option<DenseCache>>,
    lstm: LstmCache,
    branch: Vec<DenseCache>,
    head: DenseCache,
}

/// Gradient accumulator shaped like the model's layers.
struct Grads {
    td: Dense,
    lstm: Lstm,
    branch: Vec<Dense>,
    head: Dense,
}

impl Grads {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.td.w, &self.td.b, &self.lstm.w, &self.lstm.u, &self.lstm.b];
        for d in &self.branch {
            out.push(&d.w);
            out.push(&d.b);
        }
        out.push(&self.head.w);
        out.push(&self.head.b);
        out
    }

    fn scale(&mut self, s: f64) {
        self.td.w.scale(s);
        self.td.b.scale(s);
        self.lstm.w.scale(s);
        self.lstm.u.scale(s);
        self.lstm.b.scale(s);
        for d in &mut self.branch {
            d.w.scale(s);
            d.b.scale(s);
        }
        self.head.w.scale(s);
        self.head.b.scale(s);
    }
}

impl RegressionModel {
    /// Freshly initialized network over `candidates` (sorted and deduplicated).
    pub fn new(mut config: RegressionNetConfig, candidates: &BTreeSet<VideoId>) -> Result<Self> {
        config.n_outputs = candidates.len();
        config.validate()?;
        let mut rng = rng::derived(config.seed, STREAM_INIT);
        let td = Dense::new(config.frame_dim, config.td_dense_units, Activation::Relu, &mut rng);
        let lstm = Lstm::new(config.td_dense_units, config.lstm_units, &mut rng);
        let mut branch = Vec::with_capacity(config.dense_units.len());
        let mut width = config.video_dim;
        for &units in &config.dense_units {
            branch.push(Dense::new(width, units, Activation::Relu, &mut rng));
            width = units;
        }
        let head = Dense::new(config.lstm_units + width, config.n_outputs, Activation::Sigmoid, &mut rng);
        let mut model = Self {
            config,
            candidates: candidates.iter().cloned().collect(),
            td,
            lstm,
            branch,
            head,
            adam: AdamState { m: Vec::new(), v: Vec::new(), t: 0 },
            epochs_trained: 0,
        };
        model.adam = AdamState::for_params(model.params());
        Ok(model)
    }

    /// Parameter shapes in declaration order.
    pub fn param_shapes(config: &RegressionNetConfig) -> Vec<Vec<usize>> {
        let (td, h) = (config.td_dense_units, config.lstm_units);
        let mut shapes = vec![vec![td, config.frame_dim], vec![td], vec![4 * h, td], vec![4 * h, h], vec![4 * h]];
        let mut width = config.video_dim;
        for &units in &config.dense_units {
            shapes.push(vec![units, width]);
            shapes.push(vec![units]);
            width = units;
        }
        shapes.push(vec![config.n_outputs, h + width]);
        shapes.push(vec![config.n_outputs]);
        shapes
    }

    /// Reassembles a model from tensors in declaration order.
    pub fn from_parts(
        config: RegressionNetConfig,
        candidates: Vec<VideoId>,
        params: Vec<Tensor>,
        adam: AdamState,
        epochs_trained: u64,
    ) -> Result<Self> {
        config.validate()?;
        if candidates.len() != config.n_outputs || candidates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("candidate table must be sorted, unique and match n_outputs".into()));
        }
        let shapes = Self::param_shapes(&config);
        let shape_ok = |ts: &[Tensor]| ts.len() == shapes.len() && ts.iter().zip(&shapes).all(|(t, s)| t.shape() == s);
        if !shape_ok(&params) || !shape_ok(&adam.m) || !shape_ok(&adam.v) {
            return Err(Error::Shape("parameter tensors do not match the configuration".into()));
        }
        let mut it = params.into_iter();
        let mut next = || it.next().expect("count checked");
        let td = Dense::from_parts(next(), next(), Activation::Relu)?;
        let lstm = Lstm::from_parts(next(), next(), next())?;
        let branch = (0..config.dense_units.len())
            .map(|_| Dense::from_parts(next(), next(), Activation::Relu))
            .collect::<Result<Vec<_>>>()?;
        let head = Dense::from_parts(next(), next(), Activation::Sigmoid)?;
        Ok(Self { config, candidates, td, lstm, branch, head, adam, epochs_trained })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.td.w, &self.td.b, &self.lstm.w, &self.lstm.u, &self.lstm.b];
        for d in &self.branch {
            out.push(&d.w);
            out.push(&d.b);
        }
        out.push(&self.head.w);
        out.push(&self.head.b);
        out
    }

    fn grads(&self) -> Grads {
        Grads {
            td: self.td.zeros_like(),
            lstm: self.lstm.zeros_like(),
            branch: self.branch.iter().map(Dense::zeros_like).collect(),
            head: self.head.zeros_like(),
        }
    }

    fn padded(&self, frames: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
        if frames.is_empty() {
            return Err(Error::Shape("empty frame sequence".into()));
        }
        let live = frames.len().min(self.config.max_frames);
        let mut seq: Vec<Vec<f64>> = frames[..live].to_vec();
        seq.resize(self.config.max_frames, vec![0.0; self.config.frame_dim]);
        let mask = (0..self.config.max_frames).map(|t| t < live).collect();
        Ok((seq, mask))
    }

    fn forward_cached(&self, frames: &[Vec<f64>], video: &[f64]) -> Result<(Vec<f64>, Cache)> {
        let (seq, mask) = self.padded(frames)?;
        let mut td_out = Vec::with_capacity(seq.len());
        let mut td_cache = Vec::with_capacity(seq.len());
        for (x, &live) in seq.iter().zip(&mask) {
            if live {
                let (y, c) = self.td.forward_cached(x)?;
                td_out.push(y);
                td_cache.push(Some(c));
            } else {
                td_out.push(vec![0.0; self.config.td_dense_units]);
                td_cache.push(None);
            }
        }
        let (h, lstm_cache) = self.lstm.forward(&td_out, &mask)?;

        let mut x = video.to_vec();
        let mut branch_cache = Vec::with_capacity(self.branch.len());
        for layer in &self.branch {
            let (y, c) = layer.forward_cached(&x)?;
            branch_cache.push(c);
            x = y;
        }
        let mut joined = h;
        joined.extend_from_slice(&x);
        let (out, head_cache) = self.head.forward_cached(&joined)?;
        Ok((out, Cache { td: td_cache, lstm: lstm_cache, branch: branch_cache, head: head_cache }))
    }

    /// Per-candidate relevance probabilities in `(0, 1)`.
    pub fn forward(&self, frames: &[Vec<f64>], video: &[f64]) -> Result<Vec<f64>> {
        self.forward_cached(frames, video).map(|(y, _)| y)
    }

    fn backward(&self, cache: &Cache, d_out: &[f64], grads: &mut Grads) {
        let d_joined = self.head.backward(&cache.head, d_out, &mut grads.head);
        let (dh, d_branch) = d_joined.split_at(self.config.lstm_units);

        let mut dx = d_branch.to_vec();
        for ((layer, c), g) in self.branch.iter().zip(&cache.branch).zip(&mut grads.branch).rev() {
            dx = layer.backward(c, &dx, g);
        }

        let d_td = self.lstm.backward(&cache.lstm, dh, &mut grads.lstm);
        for (c, dy) in cache.td.iter().zip(&d_td) {
            if let Some(c) = c {
                self.td.backward(c, dy, &mut grads.td);
            }
        }
    }

    fn loss_and_backward(&self, sample: &Sample, grads: &mut Grads) -> Result<f64> {
        let (pred, cache) = self.forward_cached(&sample.frames, &sample.video)?;
        let (loss, d_out) = self.config.loss.evaluate(&pred, &sample.target)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(format!("loss became {loss}")));
        }
        self.backward(&cache, &d_out, grads);
        Ok(loss)
    }

    fn apply(&mut self, grads: &Grads) {
        let lr = self.config.learning_rate;
        let Self { td, lstm, branch, head, adam, .. } = self;
        let mut params: Vec<&mut Tensor> = vec![&mut td.w, &mut td.b, &mut lstm.w, &mut lstm.u, &mut lstm.b];
        for d in branch.iter_mut() {
            params.push(&mut d.w);
            params.push(&mut d.b);
        }
        params.push(&mut head.w);
        params.push(&mut head.b);
        adam.step(&mut params, &grads.tensors(), lr);
    }

    /// Runs `epochs` more epochs of minibatch Adam, continuing the optimizer
    /// state and shuffle sequence of earlier calls.
    fn train(&mut self, samples: &[Sample], epochs: usize) -> Result<Vec<f64>> {
        let mut losses = Vec::with_capacity(epochs);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for _ in 0..epochs {
            order.sort_unstable();
            order.shuffle(&mut rng::derived(self.config.seed, STREAM_SHUFFLE + self.epochs_trained));
            let mut total = 0.0;
            for batch in order.chunks(self.config.batch_size) {
                let mut grads = self.grads();
                for &i in batch {
                    total += self.loss_and_backward(&samples[i], &mut grads)?;
                }
                grads.scale(1.0 / batch.len() as f64);
                self.apply(&grads);
            }
            self.epochs_trained += 1;
            let mean = total / samples.len() as f64;
            log::info!("epoch {}: loss {mean:.6}", self.epochs_trained);
            losses.push(mean);
        }
        Ok(losses)
    }
}

/// Builds the candidate space from `train_ids`, then trains on every training
/// query whose relevance list hits that space.
pub fn build_and_train_regression(
    cfg: &RegressionNetConfig,
    frames: &FeatureSet,
    videos: &FeatureSet,
    rel: &RelevanceTable,
    train_ids: &BTreeSet<VideoId>,
) -> Result<(RegressionModel, TrainingHistory)> {
    if frames.dim() != cfg.frame_dim || videos.dim() != cfg.video_dim {
        return Err(Error::Data(format!(
            "feature dims {}/{} do not match configured frame_dim {} / video_dim {}",
            frames.dim(),
            videos.dim(),
            cfg.frame_dim,
            cfg.video_dim
        )));
    }
    let mut model = RegressionModel::new(cfg.clone(), train_ids)?;
    let index: BTreeMap<&VideoId, usize> = model.candidates.iter().enumerate().map(|(i, id)| (id, i)).collect();

    let mut history = TrainingHistory::default();
    let mut samples = Vec::new();
    for query in train_ids {
        let Some(list) = rel.get(query.as_str()) else {
            history.skipped.push(query.clone());
            continue;
        };
        let (Some(f), Some(v)) = (frames.frames(query.as_str()), videos.vector(query.as_str())) else {
            return Err(Error::Data(format!("{query} is missing frame or video features")));
        };
        let mut target = vec![0.0; index.len()];
        for c in list {
            if let Some(&i) = index.get(c) {
                target[i] = 1.0;
            }
        }
        if target.iter().all(|t| *t == 0.0) {
            log::warn!("{query}: no relevant video inside the candidate space, skipped");
            history.skipped.push(query.clone());
            continue;
        }
        samples.push(Sample { frames: f, video: v, target });
    }
    if samples.is_empty() && cfg.epochs > 0 {
        return Err(Error::Data("no usable training queries".into()));
    }
    history.epoch_losses = model.train(&samples, cfg.epochs)?;
    Ok((model, history))
}

/// Top-`k` candidates by predicted probability, excluding the query itself.
pub fn predict_regression(
    model: &RegressionModel,
    query: &VideoId,
    frames: &[Vec<f64>],
    video: &[f64],
    k: usize,
) -> Result<RankingResult> {
    if k == 0 {
        return Err(Error::Config("top-K needs K >= 1".into()));
    }
    if frames.iter().any(|f| f.len() != model.config.frame_dim) {
        return Err(Error::Shape(format!("frame features must have {} components", model.config.frame_dim)));
    }
    let probs = model.forward(frames, video)?;
    let scored =
        model.candidates.iter().zip(probs).filter(|(id, _)| *id != query).map(|(id, p)| (id.clone(), p)).collect();
    let mut ranking = RankingResult::from_scores(query.clone(), scored, ScoreOrder::Descending)?;
    ranking.truncate(k);
    Ok(ranking)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, id, SynthConfig, SyntheticDataset};
    use crate::evaluation::hit_at_k;
    use crate::nn::gradcheck::{assert_gradients_match, random_vec};
    use std::vec::Vec;

    fn tiny_config(loss: LossKind) -> RegressionNetConfig {
        RegressionNetConfig {
            frame_dim: 3,
            video_dim: 4,
            td_dense_units: 3,
            lstm_units: 2,
            dense_units: vec![3, 2],
            n_outputs: 0,
            max_frames: 3,
            loss,
            learning_rate: 0.001,
            epochs: 0,
            batch_size: 4,
            seed: 5,
        }
    }

    fn ids(n: usize) -> BTreeSet<VideoId> {
        (0..n).map(|i| VideoId::new(format!("c{i}")).unwrap()).collect()
    }

    #[test]
    fn whole_network_gradient_matches_finite_differences() {
        for loss in [LossKind::CosineProximity, LossKind::Poisson] {
            let model = RegressionModel::new(tiny_config(loss), &ids(5)).unwrap();
            let mut rng = rng::seeded(17);
            let sample = Sample {
                frames: (0..4).map(|_| random_vec(&mut rng, 3)).collect(),
                video: random_vec(&mut rng, 4),
                target: vec![1.0, 0.0, 1.0, 0.0, 0.0],
            };
            let mut grads = model.grads();
            model.loss_and_backward(&sample, &mut grads).unwrap();
            let analytic = grads.tensors();
            for (p, g) in analytic.iter().enumerate() {
                assert_gradients_match(g.data(), g.len(), 1e-4, |i, h| {
                    let mut m = model.clone();
                    params_mut(&mut m)[p].data_mut()[i] += h;
                    let pred = m.forward(&sample.frames, &sample.video).unwrap();
                    loss.evaluate(&pred, &sample.target).unwrap().0
                });
            }
        }
    }

    fn params_mut(m: &mut RegressionModel) -> Vec<&mut Tensor> {
        let RegressionModel { td, lstm, branch, head, .. } = m;
        let mut out: Vec<&mut Tensor> = vec![&mut td.w, &mut td.b, &mut lstm.w, &mut lstm.u, &mut lstm.b];
        for d in branch.iter_mut() {
            out.push(&mut d.w);
            out.push(&mut d.b);
        }
        out.push(&mut head.w);
        out.push(&mut head.b);
        out
    }

    #[test]
    fn truncation_keeps_leading_frames() {
        let model = RegressionModel::new(tiny_config(LossKind::Poisson), &ids(3)).unwrap();
        let mut rng = rng::seeded(2);
        let frames: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 3)).collect();
        let video = random_vec(&mut rng, 4);
        let full = model.forward(&frames, &video).unwrap();
        let cut = model.forward(&frames[..3], &video).unwrap();
        assert_eq!(full, cut);
        assert!(full.iter().all(|p| *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn prediction_drops_self_and_sorts() {
        let mut model =
            RegressionModel::new(tiny_config(LossKind::Poisson), &[id("a"), id("b"), id("c")].into()).unwrap();
        // zero every weight so the head emits sigmoid(bias)
        for layer in [&mut model.td, &mut model.head].into_iter().chain(model.branch.iter_mut()) {
            layer.w.fill(0.0);
        }
        let logit = |p: f64| (p / (1.0 - p)).ln();
        model.head.b.data_mut().copy_from_slice(&[logit(0.9), logit(0.1), logit(0.5)]);
        let frames = vec![vec![0.0; 3]];
        let video = vec![0.0; 4];
        let r = predict_regression(&model, &id("b"), &frames, &video, 2).unwrap();
        assert_eq!(r.ids().map(VideoId::as_str).collect::<Vec<_>>(), ["a", "c"]);
        let all = predict_regression(&model, &id("b"), &frames, &video, 10).unwrap();
        assert_eq!(all.len(), 2);
        assert!(predict_regression(&model, &id("b"), &[vec![0.0; 2]], &video, 2).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RegressionModel::new(tiny_config(LossKind::Poisson), &ids(1)).is_err());
        let mut cfg = tiny_config(LossKind::Poisson);
        cfg.learning_rate = 0.0;
        assert!(RegressionModel::new(cfg, &ids(3)).is_err());
        let mut cfg = tiny_config(LossKind::Poisson);
        cfg.dense_units.clear();
        assert!(RegressionModel::new(cfg, &ids(3)).is_err());
    }

    fn zero_noise_set() -> SyntheticDataset {
        generate_synthetic(&SynthConfig {
            n_videos: 20,
            n_clusters: 2,
            video_dim: 6,
            frame_dim: 5,
            max_frames: 3,
            relevant_per_query: 3,
            cluster_noise_sigma: 0.0,
            seed: 2,
            split_fractions: [0.6, 0.2, 0.2],
        })
        .unwrap()
    }

    fn small_net(loss: LossKind, epochs: usize) -> RegressionNetConfig {
        RegressionNetConfig {
            frame_dim: 5,
            video_dim: 6,
            td_dense_units: 8,
            lstm_units: 4,
            dense_units: vec![8],
            max_frames: 3,
            loss,
            epochs,
            batch_size: 4,
            seed: 9,
            ..RegressionNetConfig::default()
        }
    }

    #[test]
    fn untrained_model_is_near_uniform_and_deterministic() {
        let ds = zero_noise_set();
        let all: BTreeSet<VideoId> = ds.videos.ids().cloned().collect();
        let (a, h) = build_and_train_regression(
            &small_net(LossKind::CosineProximity, 0),
            &ds.frames,
            &ds.videos,
            &ds.relevance,
            &all,
        )
        .unwrap();
        assert!(h.epoch_losses.is_empty());
        let p = a.forward(&ds.frames.frames("v000").unwrap(), &ds.videos.vector("v000").unwrap()).unwrap();
        assert!(p.iter().all(|v| (v - 0.5).abs() < 0.3));
        let (b, _) = build_and_train_regression(
            &small_net(LossKind::CosineProximity, 0),
            &ds.frames,
            &ds.videos,
            &ds.relevance,
            &all,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn learns_zero_noise_clusters() {
        let ds = zero_noise_set();
        let all: BTreeSet<VideoId> = ds.videos.ids().cloned().collect();
        for loss in [LossKind::CosineProximity, LossKind::Poisson] {
            let cfg = small_net(loss, 200);
            let (model, history) =
                build_and_train_regression(&cfg, &ds.frames, &ds.videos, &ds.relevance, &all).unwrap();
            assert!(history.epoch_losses.last().unwrap() < &history.epoch_losses[0]);
            for q in &all {
                let r = predict_regression(
                    &model,
                    q,
                    &ds.frames.frames(q.as_str()).unwrap(),
                    &ds.videos.vector(q.as_str()).unwrap(),
                    1,
                )
                .unwrap();
                assert_eq!(hit_at_k(&r, ds.relevance.get(q.as_str()).unwrap(), 1).unwrap(), 1, "{loss:?} {q}");
            }
            let (again, _) = build_and_train_regression(&cfg, &ds.frames, &ds.videos, &ds.relevance, &all).unwrap();
            assert_eq!(model, again);
        }
    }

    #[test]
    fn missing_features_is_a_data_error() {
        let ds = zero_noise_set();
        let mut all: BTreeSet<VideoId> = ds.videos.ids().cloned().collect();
        let frames = ds.frames.restricted_to(all.iter().skip(1));
        assert!(matches!(
            build_and_train_regression(&small_net(LossKind::Poisson, 1), &frames, &ds.videos, &ds.relevance, &all),
            Err(Error::Data(_))
        ));
        all.insert(id("zzz"));
        let mut wrong = small_net(LossKind::Poisson, 1);
        wrong.frame_dim = 4;
        assert!(matches!(
            build_and_train_regression(&wrong, &ds.frames, &ds.videos, &ds.relevance, &all),
            Err(Error::Data(_))
        ));
    }
}
