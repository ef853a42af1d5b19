//! Balanced pair sampling and a CART random-forest regressor over
//! [`PairFeature`]s.
//!
//! Positive pairs (candidate in the query's relevance list) get target 0,
//! negative pairs target 1, so lower predictions mean more relevant.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;

use crate::dataset::{FeatureSet, RelevanceTable, VideoId};
use crate::distances::{pair_feature, PairFeature, PAIR_FEATURE_DIM};
use crate::evaluation::{RankingResult, ScoreOrder};
use crate::{rng, Error, Result};

pub const POSITIVE_TARGET: f64 = 0.0;
pub const NEGATIVE_TARGET: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub query: VideoId,
    pub candidate: VideoId,
    pub x: PairFeature,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<LabeledPair>,
    pub seed: u64,
    /// Queries left out because they had no usable positives or too few
    /// negatives.
    pub skipped: Vec<VideoId>,
}

impl PairSet {
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.target == POSITIVE_TARGET).count()
    }

    pub fn negatives(&self) -> usize {
        self.pairs.iter().filter(|p| p.target == NEGATIVE_TARGET).count()
    }
}

/// One positive pair per relevance-list entry that has features, and as many
/// negatives drawn without replacement from the other videos in `feats`.
///
/// A query whose negative pool is too small is skipped with a warning; an
/// entirely empty result is a [`Error::Sampling`].
pub fn sample_pairs(
    rel: &RelevanceTable,
    feats: &FeatureSet,
    queries: &BTreeSet<VideoId>,
    seed: u64,
) -> Result<PairSet> {
    let mut rng = rng::seeded(seed);
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    let universe: Vec<&VideoId> = feats.ids().collect();

    for query in queries {
        let (Some(list), Some(qv)) = (rel.get(query.as_str()), feats.vector(query.as_str())) else {
            log::warn!("{query}: no relevance row or features, skipped");
            skipped.push(query.clone());
            continue;
        };
        let positives: Vec<&VideoId> = list.iter().filter(|c| feats.contains(c.as_str())).collect();
        let listed: BTreeSet<&VideoId> = list.iter().collect();
        let pool: Vec<&VideoId> = universe.iter().copied().filter(|c| *c != query && !listed.contains(c)).collect();
        if positives.is_empty() || pool.len() < positives.len() {
            log::warn!("{query}: {} positives against a negative pool of {}, skipped", positives.len(), pool.len());
            skipped.push(query.clone());
            continue;
        }
        let negatives = index::sample(&mut rng, pool.len(), positives.len());

        let mut push = |candidate: &VideoId, target: f64| -> Result<()> {
            let cv = feats.vector(candidate.as_str()).expect("candidate drawn from feature set");
            pairs.push(LabeledPair {
                query: query.clone(),
                candidate: candidate.clone(),
                x: pair_feature(&qv, &cv)?,
                target,
            });
            Ok(())
        };
        for candidate in positives {
            push(candidate, POSITIVE_TARGET)?;
        }
        for i in negatives.iter() {
            push(pool[i], NEGATIVE_TARGET)?;
        }
    }

    if pairs.is_empty() {
        return Err(Error::Sampling("no query produced a balanced set of pairs".into()));
    }
    Ok(PairSet { pairs, seed, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 12, min_samples_leaf: 2, features_per_split: 3, seed: 0 }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config("n_trees, max_depth and min_samples_leaf must be positive".into()));
        }
        if !(1..=PAIR_FEATURE_DIM).contains(&self.features_per_split) {
            return Err(Error::Config(format!(
                "features_per_split must be in 1..={PAIR_FEATURE_DIM}, got {}",
                self.features_per_split
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u8,
        threshold: f32,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f32,
    },
}

/// Nodes in preorder; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &PairFeature) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return f64::from(value),
                Node::Split { feature, threshold, left, right } => {
                    i = if x.0[usize::from(feature)] <= f64::from(threshold) { left } else { right } as usize;
                }
            }
        }
    }

    /// Structural checks for trees read from untrusted sources.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Data("empty tree".into()));
        }
        let n = self.nodes.len() as u32;
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } if !(0.0..=1.0).contains(&value) => {
                    return Err(Error::Data(format!("leaf {i} value {value} outside [0, 1]")));
                }
                Node::Split { feature, threshold, left, right } => {
                    let i = i as u32;
                    if usize::from(feature) >= PAIR_FEATURE_DIM
                        || !threshold.is_finite()
                        || left <= i
                        || right <= i
                        || left >= n
                        || right >= n
                    {
                        return Err(Error::Data(format!("malformed split node {i}")));
                    }
                }
                Node::Leaf { .. } => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn predict(&self, x: &PairFeature) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Training data and hyperparameters, shared by every tree. Trees are
/// independent given `(seed, tree_index)` so they may be grown in any order
/// or in parallel.
#[derive(Debug, Clone)]
pub struct ForestTrainer {
    params: ForestParams,
    xs: Vec<[f64; PAIR_FEATURE_DIM]>,
    ys: Vec<f64>,
}

impl ForestTrainer {
    pub fn new(ps: &PairSet, params: ForestParams) -> Result<Self> {
        params.validate()?;
        if ps.pairs.is_empty() {
            return Err(Error::Config("cannot fit a forest on an empty pair set".into()));
        }
        Ok(Self {
            params,
            xs: ps.pairs.iter().map(|p| p.x.0).collect(),
            ys: ps.pairs.iter().map(|p| p.target).collect(),
        })
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    /// Grows tree `tree_index` on its own bootstrap resample.
    pub fn fit_tree(&self, tree_index: usize) -> Tree {
        let mut rng = rng::derived(self.params.seed, tree_index as u64);
        let n = self.ys.len();
        let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut grower = Grower { trainer: self, rng, nodes: Vec::new() };
        grower.grow(sample, 0);
        Tree { nodes: grower.nodes }
    }

    pub fn assemble(&self, trees: Vec<Tree>) -> ForestModel {
        assert_eq!(trees.len(), self.params.n_trees, "one tree per index");
        ForestModel { params: self.params, trees }
    }
}

struct Grower<'a> {
    trainer: &'a ForestTrainer,
    rng: rng::Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    sse: f64,
    feature: usize,
    threshold: f32,
}

impl Grower<'_> {
    fn leaf(&mut self, sample: &[usize]) -> u32 {
        let ys = &self.trainer.ys;
        let mean = sample.iter().map(|&i| ys[i]).sum::<f64>() / sample.len() as f64;
        self.push(Node::Leaf { value: mean as f32 })
    }

    fn push(&mut self, node: Node) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    fn grow(&mut self, mut sample: Vec<usize>, depth: usize) -> u32 {
        let params = &self.trainer.params;
        let ys = &self.trainer.ys;
        let first = ys[sample[0]];
        if depth >= params.max_depth
            || sample.len() < 2 * params.min_samples_leaf
            || sample.iter().all(|&i| ys[i] == first)
        {
            return self.leaf(&sample);
        }
        let Some(best) = self.best_split(&mut sample) else {
            return self.leaf(&sample);
        };

        let xs = &self.trainer.xs;
        let (left, right): (Vec<usize>, Vec<usize>) =
            sample.iter().partition(|&&i| xs[i][best.feature] <= f64::from(best.threshold));
        let at = self.push(Node::Split { feature: best.feature as u8, threshold: best.threshold, left: 0, right: 0 });
        let left_at = self.grow(left, depth + 1);
        let right_at = self.grow(right, depth + 1);
        self.nodes[at as usize] =
            Node::Split { feature: best.feature as u8, threshold: best.threshold, left: left_at, right: right_at };
        at
    }

    /// Minimum summed squared error over midpoints between consecutive
    /// distinct values of a random feature subset.
    fn best_split(&mut self, sample: &mut [usize]) -> Option<BestSplit> {
        let params = self.trainer.params;
        let xs = &self.trainer.xs;
        let ys = &self.trainer.ys;
        let min_leaf = params.min_samples_leaf;
        let n = sample.len();
        let features = index::sample(&mut self.rng, PAIR_FEATURE_DIM, params.features_per_split);

        let mut best: Option<BestSplit> = None;
        let mut prefix = vec![(0.0f64, 0.0f64); n + 1];
        for feature in features.iter() {
            sample.sort_by(|&a, &b| xs[a][feature].total_cmp(&xs[b][feature]).then(a.cmp(&b)));
            for (k, &i) in sample.iter().enumerate() {
                let (s, s2) = prefix[k];
                prefix[k + 1] = (s + ys[i], s2 + ys[i] * ys[i]);
            }
            let (total, total2) = prefix[n];
            for split in min_leaf..=n - min_leaf {
                let lo = xs[sample[split - 1]][feature];
                let hi = xs[sample[split]][feature];
                if lo == hi {
                    continue;
                }
                let (s, s2) = prefix[split];
                let (nl, nr) = (split as f64, (n - split) as f64);
                let sse = (s2 - s * s / nl) + ((total2 - s2) - (total - s) * (total - s) / nr);
                if best.as_ref().is_some_and(|b| sse >= b.sse) {
                    continue;
                }
                if let Some(threshold) = separating_threshold(lo, hi) {
                    best = Some(BestSplit { sse, feature, threshold });
                }
            }
        }
        best
    }
}

/// An `f32` threshold `t` with `lo <= t < hi`, near the midpoint, if one
/// exists.
fn separating_threshold(lo: f64, hi: f64) -> Option<f32> {
    let mut t = (0.5 * (lo + hi)) as f32;
    if f64::from(t) >= hi {
        t = t.next_down();
    }
    if f64::from(t) < lo {
        t = t.next_up();
    }
    (f64::from(t) >= lo && f64::from(t) < hi && t.is_finite()).then_some(t)
}

pub fn fit_forest(ps: &PairSet, params: ForestParams) -> Result<ForestModel> {
    let trainer = ForestTrainer::new(ps, params)?;
    let trees = (0..params.n_trees)
        .map(|i| {
            let tree = trainer.fit_tree(i);
            log::debug!("tree {}/{}: {} nodes", i + 1, params.n_trees, tree.nodes.len());
            tree
        })
        .collect();
    Ok(trainer.assemble(trees))
}

/// Scores every candidate against `query` and sorts ascending.
pub fn rank_candidates(
    model: &ForestModel,
    query: &VideoId,
    candidates: &BTreeSet<VideoId>,
    feats: &FeatureSet,
) -> Result<RankingResult> {
    let missing = |id: &VideoId| Error::Data(format!("no video-level features for {id}"));
    let qv = feats.vector(query.as_str()).ok_or_else(|| missing(query))?;
    let scored = candidates
        .iter()
        .map(|c| {
            let cv = feats.vector(c.as_str()).ok_or_else(|| missing(c))?;
            Ok((c.clone(), model.predict(&pair_feature(&qv, &cv)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    RankingResult::from_scores(query.clone(), scored, ScoreOrder::Ascending)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, id, FeatureKind, SynthConfig};

    /// Pairs whose target is 1 exactly when `x[0] > 0.5`, the other six
    /// components are noise.
    fn threshold_pairs(n: usize, seed: u64) -> PairSet {
        let mut rng = rng::seeded(seed);
        let pairs = (0..n)
            .map(|i| {
                let mut x = [0.0; PAIR_FEATURE_DIM];
                for v in x.iter_mut() {
                    *v = rng.random_range(0.0..1.0);
                }
                LabeledPair {
                    query: id("q"),
                    candidate: VideoId::new(format!("c{i}")).unwrap(),
                    x: PairFeature(x),
                    target: if x[0] > 0.5 { 1.0 } else { 0.0 },
                }
            })
            .collect();
        PairSet { pairs, seed, skipped: Vec::new() }
    }

    fn leaf_range(model: &ForestModel) -> (f64, f64) {
        let leaves = model.trees.iter().flat_map(|t| &t.nodes).filter_map(|n| match n {
            Node::Leaf { value } => Some(f64::from(*value)),
            Node::Split { .. } => None,
        });
        leaves.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    #[test]
    fn single_threshold_is_learned() {
        let ps = threshold_pairs(200, 3);
        // every node must see feature 0 for a depth-3 tree to isolate it
        let params = ForestParams { n_trees: 10, max_depth: 3, features_per_split: 7, ..ForestParams::default() };
        let model = fit_forest(&ps, params).unwrap();
        let mse = ps.pairs.iter().map(|p| (model.predict(&p.x) - p.target).powi(2)).sum::<f64>() / 200.0;
        assert!(mse < 0.01, "training mse {mse}");
        let mut hi = PairFeature([0.5; 7]);
        hi.0[0] = 0.9;
        let mut lo = hi;
        lo.0[0] = 0.1;
        assert!(model.predict(&hi) > 0.5);
        assert!(model.predict(&lo) < 0.5);
        for t in &model.trees {
            t.validate().unwrap();
        }
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let mut ps = threshold_pairs(20, 1);
        ps.pairs.iter_mut().for_each(|p| p.target = 1.0);
        let params = ForestParams { n_trees: 1, max_depth: 1, ..ForestParams::default() };
        let model = fit_forest(&ps, params).unwrap();
        assert_eq!(model.trees[0].nodes, vec![Node::Leaf { value: 1.0 }]);
        assert_eq!(model.predict(&PairFeature([3.0; 7])), 1.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let ps = threshold_pairs(10, 1);
        for params in [
            ForestParams { n_trees: 1, max_depth: 0, ..ForestParams::default() },
            ForestParams { n_trees: 0, ..ForestParams::default() },
            ForestParams { features_per_split: 8, ..ForestParams::default() },
            ForestParams { features_per_split: 0, ..ForestParams::default() },
            ForestParams { min_samples_leaf: 0, ..ForestParams::default() },
        ] {
            assert!(matches!(fit_forest(&ps, params), Err(Error::Config(_))));
        }
        let empty = PairSet { pairs: Vec::new(), seed: 0, skipped: Vec::new() };
        assert!(fit_forest(&empty, ForestParams::default()).is_err());
    }

    #[test]
    fn degenerate_single_leaf_forest() {
        let model = ForestModel {
            params: ForestParams { n_trees: 1, ..ForestParams::default() },
            trees: vec![Tree { nodes: vec![Node::Leaf { value: 0.0 }] }],
        };
        assert_eq!(model.predict(&PairFeature([7.0; 7])), 0.0);
    }

    #[test]
    fn forest_is_deterministic_and_in_range() {
        let ps = threshold_pairs(150, 9);
        let params = ForestParams { n_trees: 8, seed: 5, ..ForestParams::default() };
        let a = fit_forest(&ps, params).unwrap();
        let b = fit_forest(&ps, params).unwrap();
        assert_eq!(a, b);
        let (lo, hi) = leaf_range(&a);
        for p in &ps.pairs {
            let y = a.predict(&p.x);
            assert!(y >= lo && y <= hi && (0.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn min_samples_leaf_respected() {
        let ps = threshold_pairs(100, 4);
        let trainer =
            ForestTrainer::new(&ps, ForestParams { n_trees: 1, min_samples_leaf: 7, ..Default::default() }).unwrap();
        // every split must leave both sides with at least 7 bootstrap samples,
        // so no tree on 100 samples can exceed floor(100 / 7) leaves
        let tree = trainer.fit_tree(0);
        let leaves = tree.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count();
        assert!(leaves <= 100 / 7);
    }

    #[test]
    fn threshold_separates_neighbours() {
        assert_eq!(separating_threshold(0.0, 1.0), Some(0.5));
        let lo = 1.0f64;
        let hi = lo + 1e-12;
        assert_eq!(separating_threshold(lo, hi), Some(1.0));
        let lo = 1.0f64 + 1e-12;
        assert_eq!(separating_threshold(lo, lo + 1e-12), None);
    }

    fn synth(sigma: f64) -> crate::dataset::SyntheticDataset {
        generate_synthetic(&SynthConfig {
            n_videos: 16,
            n_clusters: 2,
            video_dim: 8,
            frame_dim: 2,
            max_frames: 2,
            relevant_per_query: 3,
            cluster_noise_sigma: sigma,
            seed: 21,
            split_fractions: [0.5, 0.25, 0.25],
        })
        .unwrap()
    }

    #[test]
    fn pairs_are_balanced_and_deterministic() {
        let ds = synth(0.01);
        let queries: BTreeSet<VideoId> = ds.videos.ids().cloned().collect();
        let ps = sample_pairs(&ds.relevance, &ds.videos, &queries, 4).unwrap();
        assert_eq!(ps.positives(), ps.negatives());
        assert_eq!(ps.positives(), 16 * 3);
        assert_eq!(ps, sample_pairs(&ds.relevance, &ds.videos, &queries, 4).unwrap());
        for p in &ps.pairs {
            let listed = ds.relevance.get(p.query.as_str()).unwrap().contains(&p.candidate);
            assert_eq!(listed, p.target == POSITIVE_TARGET);
            assert_ne!(p.query, p.candidate);
        }
    }

    #[test]
    fn per_query_counts() {
        let mut feats = FeatureSet::new(FeatureKind::VideoLevel, 2).unwrap();
        for i in 0..14 {
            feats.insert(VideoId::new(format!("v{i:02}")).unwrap(), vec![i as f32, 1.0 + (i * i) as f32]).unwrap();
        }
        let mut rel = RelevanceTable::new();
        rel.push(id("v00"), vec![id("v01"), id("v02"), id("v03")]).unwrap();
        let queries = [id("v00")].into_iter().collect();
        let ps = sample_pairs(&rel, &feats, &queries, 0).unwrap();
        assert_eq!((ps.positives(), ps.negatives()), (3, 3));

        // pool of 2 cannot balance 3 positives
        let small = feats.restricted_to(&[id("v00"), id("v01"), id("v02"), id("v03"), id("v04"), id("v05")]);
        assert!(matches!(sample_pairs(&rel, &small, &queries, 0), Err(Error::Sampling(_))));
    }

    #[test]
    fn positives_are_closer_in_separated_clusters() {
        let ds = generate_synthetic(&SynthConfig {
            n_videos: 4,
            n_clusters: 2,
            video_dim: 8,
            frame_dim: 2,
            max_frames: 1,
            relevant_per_query: 1,
            cluster_noise_sigma: 0.01,
            seed: 3,
            split_fractions: [0.5, 0.25, 0.25],
        })
        .unwrap();
        let queries: BTreeSet<VideoId> = ds.videos.ids().cloned().collect();
        let ps = sample_pairs(&ds.relevance, &ds.videos, &queries, 1).unwrap();
        let max_pos = ps.pairs.iter().filter(|p| p.target == 0.0).map(|p| p.x.0[0]).fold(0.0, f64::max);
        let min_neg = ps.pairs.iter().filter(|p| p.target == 1.0).map(|p| p.x.0[0]).fold(f64::INFINITY, f64::min);
        assert!(max_pos < min_neg);
    }

    #[test]
    fn ranking_puts_same_cluster_first() {
        let ds = synth(0.0);
        let queries: BTreeSet<VideoId> = ds.videos.ids().cloned().collect();
        let ps = sample_pairs(&ds.relevance, &ds.videos, &queries, 4).unwrap();
        let model = fit_forest(&ps, ForestParams { n_trees: 20, seed: 1, ..Default::default() }).unwrap();
        for q in ds.videos.ids() {
            let candidates: BTreeSet<VideoId> = ds.videos.ids().filter(|c| *c != q).cloned().collect();
            let ranking = rank_candidates(&model, q, &candidates, &ds.videos).unwrap();
            let same: Vec<bool> = ranking.ids().map(|c| ds.clusters[c] == ds.clusters[q]).collect();
            let n_same = same.iter().filter(|s| **s).count();
            assert!(same[..n_same].iter().all(|s| *s), "{q}: {same:?}");
        }
    }

    #[test]
    fn ranking_sort_contract() {
        let model = ForestModel {
            params: ForestParams { n_trees: 1, ..Default::default() },
            trees: vec![Tree {
                nodes: vec![
                    Node::Split { feature: 0, threshold: 1.5, left: 1, right: 2 },
                    Node::Leaf { value: 0.1 },
                    Node::Leaf { value: 0.9 },
                ],
            }],
        };
        let mut feats = FeatureSet::new(FeatureKind::VideoLevel, 2).unwrap();
        feats.insert(id("q"), vec![0.0, 1.0]).unwrap();
        feats.insert(id("near"), vec![1.0, 2.0]).unwrap();
        feats.insert(id("far"), vec![5.0, 1.0]).unwrap();
        feats.insert(id("alsonear"), vec![-1.0, 0.0]).unwrap();
        let cands = [id("far"), id("near"), id("alsonear")].into_iter().collect();
        let r = rank_candidates(&model, &id("q"), &cands, &feats).unwrap();
        let order: Vec<&str> = r.ids().map(VideoId::as_str).collect();
        assert_eq!(order, ["alsonear", "near", "far"]);
        assert_eq!(r.ranked[2].1, f64::from(0.9f32));
    }
}
