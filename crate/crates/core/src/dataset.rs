//! Video identifiers, feature storage, relevance lists, splits and the seeded
//! synthetic generator used in place of private challenge data.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::{rng, Error, Result};

/// Non-empty identifier without whitespace or commas (both are separators in
/// the text formats).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VideoId(String);

impl VideoId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Data("empty video id".into()));
        }
        if id.chars().any(|c| c.is_whitespace() || c == ',') {
            return Err(Error::Data(format!("video id {id:?} contains a separator character")));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VideoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::borrow::Borrow<str> for VideoId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// One vector per video.
    VideoLevel,
    /// A non-empty sequence of per-frame vectors per video.
    FrameLevel,
}

/// Per-video features. Frame sequences are stored flattened, row-major
/// `frames × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    kind: FeatureKind,
    dim: usize,
    entries: BTreeMap<VideoId, Vec<f32>>,
}

impl FeatureSet {
    pub fn new(kind: FeatureKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("feature dimension must be positive".into()));
        }
        Ok(Self { kind, dim, entries: BTreeMap::new() })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, id: VideoId, values: Vec<f32>) -> Result<()> {
        match self.kind {
            FeatureKind::VideoLevel if values.len() != self.dim => {
                return Err(Error::Data(format!("{id}: expected {} components, got {}", self.dim, values.len())));
            }
            FeatureKind::FrameLevel if values.is_empty() || !values.len().is_multiple_of(self.dim) => {
                return Err(Error::Data(format!(
                    "{id}: {} values is not a non-empty multiple of dim {}",
                    values.len(),
                    self.dim
                )));
            }
            _ => {}
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("{id}: non-finite component at {bad}")));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::Data(format!("duplicate video id {id}")));
        }
        self.entries.insert(id, values);
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// Raw flattened values.
    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    /// Video-level vector widened to `f64`.
    pub fn vector(&self, id: &str) -> Option<Vec<f64>> {
        self.get(id).map(|v| v.iter().map(|&x| f64::from(x)).collect())
    }

    pub fn frame_count(&self, id: &str) -> Option<usize> {
        self.get(id).map(|v| v.len() / self.dim)
    }

    /// Frames of one video as `f64` rows.
    pub fn frames(&self, id: &str) -> Option<Vec<Vec<f64>>> {
        self.get(id).map(|v| v.chunks(self.dim).map(|c| c.iter().map(|&x| f64::from(x)).collect()).collect())
    }

    pub fn ids(&self) -> impl Iterator<Item = &VideoId> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VideoId, &[f32])> {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Copy holding only the listed ids that are present.
    pub fn restricted_to<'a>(&self, ids: impl IntoIterator<Item = &'a VideoId>) -> Self {
        let entries = ids.into_iter().filter_map(|id| self.entries.get(id).map(|v| (id.clone(), v.clone()))).collect();
        Self { kind: self.kind, dim: self.dim, entries }
    }
}

/// Ordered ground-truth relevance lists, most relevant first. Row order is the
/// insertion (file) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelevanceTable {
    rows: Vec<(VideoId, Vec<VideoId>)>,
    index: BTreeMap<VideoId, usize>,
}

impl RelevanceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, query: VideoId, candidates: Vec<VideoId>) -> Result<()> {
        if self.index.contains_key(&query) {
            return Err(Error::Data(format!("duplicate relevance row for {query}")));
        }
        if candidates.contains(&query) {
            return Err(Error::Data(format!("{query} is listed as relevant to itself")));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = candidates.iter().find(|c| !seen.insert(*c)) {
            return Err(Error::Data(format!("{query}: candidate {dup} listed twice")));
        }
        self.index.insert(query.clone(), self.rows.len());
        self.rows.push((query, candidates));
        Ok(())
    }

    pub fn get(&self, query: &str) -> Option<&[VideoId]> {
        self.index.get(query).map(|&i| self.rows[i].1.as_slice())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&VideoId, &[VideoId])> {
        self.rows.iter().map(|(q, c)| (q, c.as_slice()))
    }

    pub fn queries(&self) -> impl Iterator<Item = &VideoId> {
        self.rows.iter().map(|(q, _)| q)
    }

    /// Checks every query and candidate against a universe of known ids.
    pub fn validate_universe(&self, universe: &FeatureSet) -> Result<()> {
        for (q, cands) in self.rows() {
            if let Some(missing) = core::iter::once(q).chain(cands).find(|id| !universe.contains(id.as_str())) {
                return Err(Error::Data(format!("relevance row {q}: unknown video {missing}")));
            }
        }
        Ok(())
    }

    /// Rows whose query is in `queries`, in the original order.
    pub fn restricted_to(&self, queries: &BTreeSet<VideoId>) -> Self {
        let mut out = Self::new();
        for (q, c) in self.rows() {
            if queries.contains(q) {
                out.push(q.clone(), c.to_vec()).expect("rows already validated");
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: BTreeSet<VideoId>,
    pub validation: BTreeSet<VideoId>,
    pub test: BTreeSet<VideoId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

impl DatasetSplit {
    pub fn new(train: BTreeSet<VideoId>, validation: BTreeSet<VideoId>, test: BTreeSet<VideoId>) -> Result<Self> {
        let overlap = train
            .intersection(&validation)
            .chain(train.intersection(&test))
            .chain(validation.intersection(&test))
            .next();
        if let Some(id) = overlap {
            return Err(Error::Data(format!("{id} appears in more than one split")));
        }
        Ok(Self { train, validation, test })
    }

    pub fn part(&self, part: SplitPart) -> &BTreeSet<VideoId> {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Validation => &self.validation,
            SplitPart::Test => &self.test,
        }
    }

    /// Every relevance query must belong to some split.
    pub fn check_covers(&self, rel: &RelevanceTable) -> Result<()> {
        match rel
            .queries()
            .find(|q| !self.train.contains(*q) && !self.validation.contains(*q) && !self.test.contains(*q))
        {
            Some(q) => Err(Error::Data(format!("query {q} is in no split"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_videos: usize,
    pub n_clusters: usize,
    pub video_dim: usize,
    pub frame_dim: usize,
    pub max_frames: usize,
    pub relevant_per_query: usize,
    pub cluster_noise_sigma: f64,
    pub seed: u64,
    /// Train, validation, test.
    pub split_fractions: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_videos: 200,
            n_clusters: 4,
            video_dim: 512,
            frame_dim: 2048,
            max_frames: 16,
            relevant_per_query: 10,
            cluster_noise_sigma: 0.3,
            seed: 0,
            split_fractions: [0.6, 0.2, 0.2],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_videos", self.n_videos),
            ("video_dim", self.video_dim),
            ("frame_dim", self.frame_dim),
            ("max_frames", self.max_frames),
            ("relevant_per_query", self.relevant_per_query),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.n_clusters < 2 {
            return Err(Error::Config("n_clusters must be at least 2".into()));
        }
        if !(self.cluster_noise_sigma >= 0.0) || !self.cluster_noise_sigma.is_finite() {
            return Err(Error::Config("cluster_noise_sigma must be finite and non-negative".into()));
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if self.split_fractions.iter().any(|f| !(*f > 0.0)) || libm::fabs(sum - 1.0) > 1e-9 {
            return Err(Error::Config("split fractions must be positive and sum to 1".into()));
        }
        // round-robin assignment: the smallest cluster has floor(n / k) members
        let smallest = self.n_videos / self.n_clusters;
        if smallest == 0 || self.relevant_per_query > smallest - 1 {
            return Err(Error::Config(format!(
                "relevant_per_query = {} but the smallest cluster only has {} peers",
                self.relevant_per_query,
                smallest.saturating_sub(1)
            )));
        }
        Ok(())
    }

    pub fn video_id(&self, index: usize) -> VideoId {
        let width = digits(self.n_videos.saturating_sub(1)).max(3);
        VideoId(format!("v{index:0width$}"))
    }
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub frames: FeatureSet,
    pub videos: FeatureSet,
    pub relevance: RelevanceTable,
    pub split: DatasetSplit,
    /// Cluster of each video, by id.
    pub clusters: BTreeMap<VideoId, usize>,
}

const STREAM_CENTROIDS: u64 = 0;
const STREAM_VIDEO_NOISE: u64 = 1;
const STREAM_FRAMES: u64 = 2;
const STREAM_SPLIT: u64 = 3;

/// Cluster-structured dataset; a pure function of `cfg`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let sigma = cfg.cluster_noise_sigma;

    let mut centroid_rng = rng::derived(cfg.seed, STREAM_CENTROIDS);
    let normals = |rng: &mut rng::Rng, n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(rng)).collect() };
    let centroids: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_clusters)
        .map(|_| {
            let video = normals(&mut centroid_rng, cfg.video_dim);
            let frame = normals(&mut centroid_rng, cfg.frame_dim);
            (video, frame)
        })
        .collect();

    let mut videos = FeatureSet::new(FeatureKind::VideoLevel, cfg.video_dim)?;
    let mut frames = FeatureSet::new(FeatureKind::FrameLevel, cfg.frame_dim)?;
    let mut clusters = BTreeMap::new();
    let mut noise_rng = rng::derived(cfg.seed, STREAM_VIDEO_NOISE);
    let mut frame_rng = rng::derived(cfg.seed, STREAM_FRAMES);

    for i in 0..cfg.n_videos {
        let id = cfg.video_id(i);
        let cluster = i % cfg.n_clusters;
        let (video_centroid, frame_centroid) = &centroids[cluster];

        let vector = video_centroid
            .iter()
            .map(|&c| {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                (c + sigma * z) as f32
            })
            .collect();
        videos.insert(id.clone(), vector)?;

        let len = frame_rng.random_range(1..=cfg.max_frames);
        let mut seq = Vec::with_capacity(len * cfg.frame_dim);
        for _ in 0..len {
            seq.extend(frame_centroid.iter().map(|&c| {
                let z: f64 = StandardNormal.sample(&mut frame_rng);
                (c + sigma * z) as f32
            }));
        }
        frames.insert(id.clone(), seq)?;
        clusters.insert(id, cluster);
    }

    let relevance = nearest_peer_relevance(&videos, &clusters, cfg.relevant_per_query)?;

    let mut ids: Vec<VideoId> = videos.ids().cloned().collect();
    ids.shuffle(&mut rng::derived(cfg.seed, STREAM_SPLIT));
    let n = ids.len();
    let n_train = (libm::round(n as f64 * cfg.split_fractions[0]) as usize).min(n);
    let n_val = (libm::round(n as f64 * cfg.split_fractions[1]) as usize).min(n - n_train);
    let split = DatasetSplit::new(
        ids[..n_train].iter().cloned().collect(),
        ids[n_train..n_train + n_val].iter().cloned().collect(),
        ids[n_train + n_val..].iter().cloned().collect(),
    )?;

    Ok(SyntheticDataset { frames, videos, relevance, split, clusters })
}

/// For every video, the `k` same-cluster peers closest in Euclidean distance,
/// ties broken by id.
fn nearest_peer_relevance(
    videos: &FeatureSet,
    clusters: &BTreeMap<VideoId, usize>,
    k: usize,
) -> Result<RelevanceTable> {
    let vectors: Vec<(&VideoId, Vec<f64>, usize)> =
        videos.ids().map(|id| (id, videos.vector(id.as_str()).expect("id from set"), clusters[id])).collect();
    let mut table = RelevanceTable::new();
    for (qid, qv, qc) in &vectors {
        let mut peers: Vec<(f64, &VideoId)> = vectors
            .iter()
            .filter(|(id, _, c)| c == qc && id != qid)
            .map(|(id, v, _)| {
                let d2: f64 = qv.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (libm::sqrt(d2), *id)
            })
            .collect();
        if peers.len() < k {
            return Err(Error::Config(format!("{qid} has only {} same-cluster peers", peers.len())));
        }
        peers.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        table.push((*qid).clone(), peers.into_iter().take(k).map(|(_, id)| id.clone()).collect())?;
    }
    Ok(table)
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::VideoLevel => "video_level",
            FeatureKind::FrameLevel => "frame_level",
        })
    }
}

impl fmt::Display for SplitPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitPart::Train => "train",
            SplitPart::Validation => "val",
            SplitPart::Test => "test",
        })
    }
}

impl core::str::FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" | "validation" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[cfg(test)]
pub(crate) fn id(s: &str) -> VideoId {
    VideoId::new(String::from(s)).expect("valid literal id")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            n_videos: 12,
            n_clusters: 3,
            video_dim: 6,
            frame_dim: 5,
            max_frames: 4,
            relevant_per_query: 2,
            cluster_noise_sigma: 0.1,
            seed: 11,
            split_fractions: [0.5, 0.25, 0.25],
        }
    }

    #[test]
    fn video_id_rejects_separators() {
        assert!(VideoId::new("").is_err());
        assert!(VideoId::new("a b").is_err());
        assert!(VideoId::new("a\tb").is_err());
        assert!(VideoId::new("a,b").is_err());
        assert!(VideoId::new("show-17").is_ok());
    }

    #[test]
    fn feature_set_validates_entries() {
        let mut fs = FeatureSet::new(FeatureKind::VideoLevel, 2).unwrap();
        fs.insert(id("a"), vec![1.0, 2.0]).unwrap();
        assert!(fs.insert(id("b"), vec![1.0]).is_err());
        assert!(fs.insert(id("c"), vec![1.0, f32::NAN]).is_err());
        assert!(fs.insert(id("a"), vec![0.0, 0.0]).is_err());
        assert_eq!(fs.vector("a"), Some(vec![1.0, 2.0]));

        let mut frames = FeatureSet::new(FeatureKind::FrameLevel, 2).unwrap();
        assert!(frames.insert(id("a"), vec![]).is_err());
        assert!(frames.insert(id("a"), vec![1.0, 2.0, 3.0]).is_err());
        frames.insert(id("a"), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(frames.frame_count("a"), Some(2));
        assert_eq!(frames.frames("a").unwrap()[1], vec![3.0, 4.0]);
    }

    #[test]
    fn relevance_rejects_self_duplicates_and_repeats() {
        let mut rel = RelevanceTable::new();
        rel.push(id("q1"), vec![id("c1"), id("c2")]).unwrap();
        assert!(matches!(rel.push(id("q1"), vec![id("c3")]), Err(Error::Data(_))));
        assert!(matches!(rel.push(id("q2"), vec![id("q2")]), Err(Error::Data(_))));
        assert!(matches!(rel.push(id("q3"), vec![id("c1"), id("c1")]), Err(Error::Data(_))));
        assert_eq!(rel.get("q1").unwrap(), &[id("c1"), id("c2")]);
    }

    #[test]
    fn split_must_be_disjoint() {
        let s = |v: &[&str]| v.iter().map(|x| id(x)).collect::<BTreeSet<_>>();
        assert!(DatasetSplit::new(s(&["a"]), s(&["a"]), s(&[])).is_err());
        assert!(DatasetSplit::new(s(&["a"]), s(&["b"]), s(&["c"])).is_ok());
    }

    #[test]
    fn config_errors() {
        let cfg = SynthConfig { n_videos: 3, n_clusters: 4, ..small_cfg() };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig { relevant_per_query: 4, ..small_cfg() };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig { split_fractions: [0.5, 0.5, 0.1], ..small_cfg() };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig { n_clusters: 1, ..small_cfg() };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn four_videos_two_clusters_pair_up() {
        let cfg = SynthConfig { n_videos: 4, n_clusters: 2, relevant_per_query: 1, ..small_cfg() };
        let ds = generate_synthetic(&cfg).unwrap();
        for (q, list) in ds.relevance.rows() {
            assert_eq!(list.len(), 1);
            assert_eq!(ds.clusters[q], ds.clusters[&list[0]]);
        }
        assert_eq!(ds.relevance.get("v000").unwrap(), &[id("v002")]);
        assert_eq!(ds.relevance.get("v001").unwrap(), &[id("v003")]);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&small_cfg()).unwrap();
        let b = generate_synthetic(&small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig { seed: 12, ..small_cfg() }).unwrap();
        assert_ne!(a.videos, c.videos);
    }

    #[test]
    fn zero_noise_collapses_clusters() {
        let ds = generate_synthetic(&SynthConfig { cluster_noise_sigma: 0.0, ..small_cfg() }).unwrap();
        for (a, va) in ds.videos.iter() {
            for (b, vb) in ds.videos.iter() {
                if ds.clusters[a] == ds.clusters[b] {
                    assert_eq!(va, vb);
                } else {
                    assert_ne!(va, vb);
                }
            }
        }
        // equal distances fall back to id order
        assert_eq!(ds.relevance.get("v000").unwrap(), &[id("v003"), id("v006")]);
    }

    #[test]
    fn shapes_splits_and_relevance_invariants() {
        let cfg = small_cfg();
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.videos.len(), 12);
        for (vid, _) in ds.frames.iter() {
            let t = ds.frames.frame_count(vid.as_str()).unwrap();
            assert!((1..=cfg.max_frames).contains(&t));
        }
        ds.split.check_covers(&ds.relevance).unwrap();
        assert_eq!(ds.split.train.len(), 6);
        assert_eq!(ds.split.validation.len(), 3);
        assert_eq!(ds.split.test.len(), 3);
        ds.relevance.validate_universe(&ds.videos).unwrap();
        for (q, list) in ds.relevance.rows() {
            assert_eq!(list.len(), cfg.relevant_per_query);
            assert!(!list.contains(q));
        }
    }
}
