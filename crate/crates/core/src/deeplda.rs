//! Embedding network trained with a thresholded LDA eigenvalue objective.
//!
//! Every relevance row becomes one two-class batch: the query's relevant
//! videos against sampled non-relevant ones. The batch is embedded, scatter
//! matrices are formed, and the generalized problem
//! `S_b e = v (S_w + λI) e` is solved. The objective is the mean of the
//! eigenvalues lying within `ε` of the smallest one; it is maximized by
//! backpropagating the eigenvalue derivatives through the scatter matrices
//! into the network.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};

use crate::dataset::{FeatureSet, RelevanceTable, VideoId};
use crate::evaluation::{RankingResult, ScoreOrder};
use crate::linalg::{cholesky, solve_lower, solve_lower_transpose, symmetric_eigen, Matrix};
use crate::nn::{Activation, AdamState, Dense, DenseCache, Tensor};
use crate::{rng, Error, Result};

/// Number of classes in every batch.
pub const CLASSES: usize = 2;

/// Network outputs for one batch plus their class labels (1 = relevant).
#[derive(Debug, Clone, PartialEq)]
pub struct LdaBatch {
    h: Matrix,
    labels: Vec<u8>,
}

impl LdaBatch {
    pub fn new(h: Matrix, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != h.rows() {
            return Err(Error::Batch(format!("{} labels for {} rows", labels.len(), h.rows())));
        }
        if labels.iter().any(|&c| usize::from(c) >= CLASSES) {
            return Err(Error::Batch("labels must be 0 or 1".into()));
        }
        for c in 0..CLASSES as u8 {
            let n = labels.iter().filter(|&&l| l == c).count();
            if n < 2 {
                return Err(Error::Batch(format!("class {c} has {n} members, need at least 2")));
            }
        }
        Ok(Self { h, labels })
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    fn class_rows(&self, class: u8) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == class).collect()
    }

    fn gather(&self, rows: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(rows.len(), self.h.cols());
        for (dst, &src) in rows.iter().enumerate() {
            m.row_mut(dst).copy_from_slice(self.h.row(src));
        }
        m
    }
}

/// Rows minus their column means.
fn centered(x: &Matrix) -> Matrix {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut c = x.clone();
    for i in 0..c.rows() {
        for (v, m) in c.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    c
}

/// `X̄ᵀX̄ / (n − 1)` on mean-centred rows.
fn covariance(x: &Matrix) -> Result<Matrix> {
    if x.rows() < 2 {
        return Err(Error::Batch(format!("scatter needs at least 2 rows, got {}", x.rows())));
    }
    let c = centered(x);
    Ok(c.t_matmul(&c).scale(1.0 / (x.rows() - 1) as f64).symmetrized())
}

/// Per-class scatter `S_c`.
pub fn scatter_class(hc: &Matrix) -> Result<Matrix> {
    covariance(hc)
}

/// `S_w`, the mean of the per-class scatters.
pub fn scatter_within(batch: &LdaBatch) -> Result<Matrix> {
    let mut sw = Matrix::zeros(batch.h.cols(), batch.h.cols());
    for c in 0..CLASSES as u8 {
        sw = sw.add(&scatter_class(&batch.gather(&batch.class_rows(c)))?);
    }
    Ok(sw.scale(1.0 / CLASSES as f64))
}

/// `S_t` over the whole batch with global centring.
pub fn scatter_total(batch: &LdaBatch) -> Result<Matrix> {
    covariance(&batch.h)
}

/// `S_b = S_t − S_w`. Not necessarily positive semidefinite.
pub fn scatter_between(st: &Matrix, sw: &Matrix) -> Matrix {
    st.sub(sw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSet {
    pub per_class: [Matrix; CLASSES],
    pub within: Matrix,
    pub total: Matrix,
    pub between: Matrix,
}

pub fn scatter(batch: &LdaBatch) -> Result<ScatterSet> {
    let per_class =
        [scatter_class(&batch.gather(&batch.class_rows(0)))?, scatter_class(&batch.gather(&batch.class_rows(1)))?];
    let within = per_class[0].add(&per_class[1]).scale(1.0 / CLASSES as f64);
    let total = scatter_total(batch)?;
    let between = scatter_between(&total, &within);
    Ok(ScatterSet { per_class, within, total, between })
}

/// Solution of `S_b e = v (S_w + λI) e`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// Ascending.
    pub values: Vec<f64>,
    /// Columns normalized so that `eᵀ(S_w + λI)e = 1`.
    pub vectors: Matrix,
}

/// Cholesky-whitens `S_w + λI` and solves the resulting symmetric problem.
pub fn solve_generalized_eigen(sb: &Matrix, sw: &Matrix, lambda: f64) -> Result<EigenResult> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("S_w regularizer must be positive, got {lambda}")));
    }
    if sb.rows() != sw.rows() || sb.cols() != sw.cols() || sb.rows() != sb.cols() {
        return Err(Error::Shape("S_b and S_w must be square and of equal size".into()));
    }
    let l = cholesky(&sw.add_diagonal(lambda))?;
    let half = solve_lower(&l, sb);
    let whitened = solve_lower(&l, &half.transpose()).symmetrized();
    let eig = symmetric_eigen(&whitened)?;
    let vectors = solve_lower_transpose(&l, &eig.vectors);
    if eig.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite generalized eigenvalue".into()));
    }
    Ok(EigenResult { values: eig.values, vectors })
}

/// Negated mean of the eigenvalues below `min + ε`, and the indices of those
/// eigenvalues. The smallest eigenvalue is always active.
pub fn deeplda_loss(values: &[f64], eps: f64) -> (f64, Vec<usize>) {
    let Some(min) = values.iter().copied().reduce(f64::min) else {
        return (0.0, Vec::new());
    };
    let cutoff = min + eps;
    let active: Vec<usize> = (0..values.len()).filter(|&i| values[i] < cutoff || values[i] == min).collect();
    let mean = active.iter().map(|&i| values[i]).sum::<f64>() / active.len() as f64;
    (-mean, active)
}

/// `∂loss/∂H` for the loss of [`deeplda_loss`], holding the active set fixed.
pub fn deeplda_backward(batch: &LdaBatch, eigen: &EigenResult, active: &[usize]) -> Matrix {
    let dim = batch.h.cols();
    let k = active.len() as f64;
    // ∂v/∂S_b = e eᵀ and ∂v/∂(S_w + λI) = −v e eᵀ
    let mut g_between = Matrix::zeros(dim, dim);
    let mut g_within_reg = Matrix::zeros(dim, dim);
    for &i in active {
        let e = eigen.vectors.column(i);
        let v = eigen.values[i];
        for r in 0..dim {
            for c in 0..dim {
                let outer = e[r] * e[c];
                g_between[(r, c)] -= outer / k;
                g_within_reg[(r, c)] += v * outer / k;
            }
        }
    }
    // S_b = S_t − S_w, S_w = mean of the per-class scatters
    let g_total = &g_between;
    let g_class = g_within_reg.sub(&g_between).scale(1.0 / CLASSES as f64);

    let n = batch.h.rows();
    let mut grad = centered(&batch.h).matmul(g_total).scale(2.0 / (n - 1) as f64);
    for c in 0..CLASSES as u8 {
        let rows = batch.class_rows(c);
        let xc = centered(&batch.gather(&rows));
        let gc = xc.matmul(&g_class).scale(2.0 / (rows.len() - 1) as f64);
        for (src, &dst) in rows.iter().enumerate() {
            for (g, v) in grad.row_mut(dst).iter_mut().zip(gc.row(src)) {
                *g += v;
            }
        }
    }
    grad
}

/// Loss, spectrum, active set and `∂loss/∂H` for one batch.
#[derive(Debug, Clone)]
pub struct LdaStep {
    pub loss: f64,
    pub eigen: EigenResult,
    pub active: Vec<usize>,
    pub grad: Matrix,
}

pub fn lda_objective(batch: &LdaBatch, eps: f64, lambda: f64) -> Result<LdaStep> {
    let s = scatter(batch)?;
    let eigen = solve_generalized_eigen(&s.between, &s.within, lambda)?;
    let (loss, active) = deeplda_loss(&eigen.values, eps);
    let grad = deeplda_backward(batch, &eigen, &active);
    Ok(LdaStep { loss, eigen, active, grad })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingDistance {
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepLdaConfig {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub output_dim: usize,
    pub eps_threshold: f64,
    pub s_w_regularizer: f64,
    /// Negatives per batch; `None` matches the number of relevant videos.
    pub negatives_per_batch: Option<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub distance: EmbeddingDistance,
}

impl Default for DeepLdaConfig {
    fn default() -> Self {
        Self {
            input_dim: 512,
            hidden: [256, 256],
            output_dim: 16,
            eps_threshold: 1.0,
            s_w_regularizer: 1e-3,
            negatives_per_batch: None,
            learning_rate: 0.001,
            epochs: 20,
            seed: 0,
            distance: EmbeddingDistance::Euclidean,
        }
    }
}

impl DeepLdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.output_dim < 2 {
            return Err(Error::Config("output_dim must be at least 2".into()));
        }
        if !(self.eps_threshold > 0.0) || !(self.s_w_regularizer > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config("eps_threshold, s_w_regularizer and learning_rate must be positive".into()));
        }
        if matches!(self.negatives_per_batch, Some(n) if n < 2) {
            return Err(Error::Config("negatives_per_batch must be at least 2".into()));
        }
        Ok(())
    }
}

/// Dense-ReLU, dense-ReLU, dense-linear.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLdaModel {
    pub config: DeepLdaConfig,
    pub layers: [Dense; 3],
}

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1 << 32;
const STREAM_NEGATIVES: u64 = 2 << 32;

impl DeepLdaModel {
    pub fn new(config: DeepLdaConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::derived(config.seed, STREAM_INIT);
        let [h1, h2] = config.hidden;
        let layers = [
            Dense::new(config.input_dim, h1, Activation::Relu, &mut rng),
            Dense::new(h1, h2, Activation::Relu, &mut rng),
            Dense::new(h2, config.output_dim, Activation::Identity, &mut rng),
        ];
        Ok(Self { config, layers })
    }

    pub fn param_shapes(config: &DeepLdaConfig) -> Vec<Vec<usize>> {
        let [h1, h2] = config.hidden;
        vec![
            vec![h1, config.input_dim],
            vec![h1],
            vec![h2, h1],
            vec![h2],
            vec![config.output_dim, h2],
            vec![config.output_dim],
        ]
    }

    pub fn from_parts(config: DeepLdaConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = Self::param_shapes(&config);
        if params.len() != shapes.len() || params.iter().zip(&shapes).any(|(t, s)| t.shape() != s) {
            return Err(Error::Shape("parameter tensors do not match the configuration".into()));
        }
        let mut it = params.into_iter();
        let mut next = || it.next().expect("count checked");
        let layers = [
            Dense::from_parts(next(), next(), Activation::Relu)?,
            Dense::from_parts(next(), next(), Activation::Relu)?,
            Dense::from_parts(next(), next(), Activation::Identity)?,
        ];
        Ok(Self { config, layers })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.layers.iter().try_fold(x.to_vec(), |h, layer| layer.forward(&h))
    }

    fn embed_cached(&self, x: &[f64]) -> Result<(Vec<f64>, [DenseCache; 3])> {
        let (h1, c1) = self.layers[0].forward_cached(x)?;
        let (h2, c2) = self.layers[1].forward_cached(&h1)?;
        let (h3, c3) = self.layers[2].forward_cached(&h2)?;
        Ok((h3, [c1, c2, c3]))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeepLdaHistory {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean over batches of the smallest eigenvalue, per epoch.
    pub epoch_min_eigenvalues: Vec<f64>,
    /// Relevance rows that could not form a valid batch.
    pub skipped: Vec<VideoId>,
}

struct Row<'a> {
    query: &'a VideoId,
    positives: Vec<&'a VideoId>,
    pool: Vec<&'a VideoId>,
    negatives: usize,
}

/// Trains on every relevance row of a training query, restricted to videos in
/// `train_ids`.
pub fn train_deeplda(
    cfg: &DeepLdaConfig,
    videos: &FeatureSet,
    rel: &RelevanceTable,
    train_ids: &BTreeSet<VideoId>,
) -> Result<(DeepLdaModel, DeepLdaHistory)> {
    if videos.dim() != cfg.input_dim {
        return Err(Error::Data(format!("video features have {} dims, model expects {}", videos.dim(), cfg.input_dim)));
    }
    let mut model = DeepLdaModel::new(cfg.clone())?;
    let mut history = DeepLdaHistory::default();

    let universe: Vec<&VideoId> = train_ids.iter().filter(|id| videos.contains(id.as_str())).collect();
    let inputs: BTreeMap<&VideoId, Vec<f64>> =
        universe.iter().map(|&id| (id, videos.vector(id.as_str()).expect("filtered"))).collect();

    let mut rows = Vec::new();
    for query in train_ids {
        let Some(list) = rel.get(query.as_str()) else { continue };
        let positives: Vec<&VideoId> = list.iter().filter(|c| inputs.contains_key(c)).collect();
        let listed: BTreeSet<&VideoId> = list.iter().collect();
        let pool: Vec<&VideoId> = universe.iter().copied().filter(|c| *c != query && !listed.contains(c)).collect();
        let negatives = cfg.negatives_per_batch.unwrap_or(positives.len()).max(2);
        if positives.len() < 2 || pool.len() < negatives {
            log::warn!("{query}: {} relevant / {} negative candidates, row skipped", positives.len(), pool.len());
            history.skipped.push(query.clone());
            continue;
        }
        rows.push(Row { query, positives, pool, negatives });
    }
    if rows.is_empty() && cfg.epochs > 0 {
        return Err(Error::Data("no relevance row forms a valid two-class batch".into()));
    }

    let mut adam = AdamState::for_params(model.params());
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for epoch in 0..cfg.epochs as u64 {
        order.sort_unstable();
        order.shuffle(&mut rng::derived(cfg.seed, STREAM_SHUFFLE + epoch));
        let mut neg_rng = rng::derived(cfg.seed, STREAM_NEGATIVES + epoch);
        let (mut loss_sum, mut min_sum) = (0.0, 0.0);
        for &r in &order {
            let row = &rows[r];
            let negatives = index::sample(&mut neg_rng, row.pool.len(), row.negatives);
            let members: Vec<(&VideoId, u8)> =
                row.positives.iter().map(|&id| (id, 1u8)).chain(negatives.iter().map(|i| (row.pool[i], 0u8))).collect();

            let mut h = Matrix::zeros(members.len(), cfg.output_dim);
            let mut caches = Vec::with_capacity(members.len());
            for (i, (id, _)) in members.iter().enumerate() {
                let (out, cache) = model.embed_cached(&inputs[id])?;
                h.row_mut(i).copy_from_slice(&out);
                caches.push(cache);
            }
            let batch = LdaBatch::new(h, members.iter().map(|(_, c)| *c).collect())?;
            let step = lda_objective(&batch, cfg.eps_threshold, cfg.s_w_regularizer)?;
            if !step.loss.is_finite() || !step.grad.data().iter().all(|g| g.is_finite()) {
                return Err(Error::TrainingDiverged(format!("row {}: loss {}", row.query, step.loss)));
            }
            loss_sum += step.loss;
            min_sum += step.eigen.values[0];

            let mut grads: Vec<Dense> = model.layers.iter().map(Dense::zeros_like).collect();
            for (i, cache) in caches.iter().enumerate() {
                let mut d = step.grad.row(i).to_vec();
                for l in (0..3).rev() {
                    d = model.layers[l].backward(&cache[l], &d, &mut grads[l]);
                }
            }
            let [l1, l2, l3] = &mut model.layers;
            let mut params = [&mut l1.w, &mut l1.b, &mut l2.w, &mut l2.b, &mut l3.w, &mut l3.b];
            let grad_refs: Vec<&Tensor> = grads.iter().flat_map(|g| [&g.w, &g.b]).collect();
            adam.step(&mut params, &grad_refs, cfg.learning_rate);
        }
        let n = rows.len().max(1) as f64;
        let (mean_loss, mean_min) = (loss_sum / n, min_sum / n);
        log::info!("epoch {}: loss {mean_loss:.6}, smallest eigenvalue {mean_min:.6}", epoch + 1);
        history.epoch_losses.push(mean_loss);
        history.epoch_min_eigenvalues.push(mean_min);
    }
    Ok((model, history))
}

/// Candidates ordered by embedding distance to the query, closest first.
pub fn rank_candidates_lda(
    model: &DeepLdaModel,
    query: &VideoId,
    candidates: &BTreeSet<VideoId>,
    videos: &FeatureSet,
) -> Result<RankingResult> {
    let embed = |id: &VideoId| -> Result<Vec<f64>> {
        let x = videos.vector(id.as_str()).ok_or_else(|| Error::Data(format!("no video-level features for {id}")))?;
        model.embed(&x)
    };
    let q = embed(query)?;
    let scored = candidates
        .iter()
        .map(|c| {
            let e = embed(c)?;
            Ok((c.clone(), embedding_distance(model.config.distance, &q, &e)))
        })
        .collect::<Result<Vec<_>>>()?;
    RankingResult::from_scores(query.clone(), scored, ScoreOrder::Ascending)
}

fn embedding_distance(kind: EmbeddingDistance, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        EmbeddingDistance::Euclidean => libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()),
        EmbeddingDistance::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum();
            let nb: f64 = b.iter().map(|x| x * x).sum();
            if na == 0.0 || nb == 0.0 {
                // a zero embedding carries no direction; rank it last
                return if a == b { 0.0 } else { 2.0 };
            }
            1.0 - dot / libm::sqrt(na * nb)
        }
    }
}
