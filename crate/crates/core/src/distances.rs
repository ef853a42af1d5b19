//! The seven pair distances and the pair feature vector built from them.
//!
//! All seven are oriented smaller-is-more-similar; cosine and correlation are
//! returned as distances (`1 - similarity`).

use core::fmt;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Euclidean,
    Cityblock,
    Chebyshev,
    Correlation,
    SqEuclidean,
    BrayCurtis,
    Cosine,
}

impl Metric {
    /// Canonical order; index `i` is component `i` of a [`PairFeature`].
    pub const ALL: [Metric; 7] = [
        Metric::Euclidean,
        Metric::Cityblock,
        Metric::Chebyshev,
        Metric::Correlation,
        Metric::SqEuclidean,
        Metric::BrayCurtis,
        Metric::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cityblock => "cityblock",
            Metric::Chebyshev => "chebyshev",
            Metric::Correlation => "correlation",
            Metric::SqEuclidean => "sqeuclidean",
            Metric::BrayCurtis => "braycurtis",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const PAIR_FEATURE_DIM: usize = Metric::ALL.len();

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFeature(pub [f64; PAIR_FEATURE_DIM]);

impl PairFeature {
    pub fn get(&self, metric: Metric) -> f64 {
        self.0[metric as usize]
    }
}

pub fn distance(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(alloc::format!("{metric} distance between lengths {} and {}", a.len(), b.len())));
    }
    // identical operands are at distance zero, including the degenerate
    // cases where the ratio metrics are undefined
    if a == b {
        return Ok(0.0);
    }
    let pairs = || a.iter().zip(b);
    let d = match metric {
        Metric::Euclidean => libm::sqrt(pairs().map(|(x, y)| (x - y) * (x - y)).sum()),
        Metric::SqEuclidean => pairs().map(|(x, y)| (x - y) * (x - y)).sum(),
        Metric::Cityblock => pairs().map(|(x, y)| libm::fabs(x - y)).sum(),
        Metric::Chebyshev => pairs().map(|(x, y)| libm::fabs(x - y)).fold(0.0, f64::max),
        Metric::BrayCurtis => {
            let den: f64 = pairs().map(|(x, y)| libm::fabs(x + y)).sum();
            if den == 0.0 {
                return Err(Error::DegenerateInput { metric });
            }
            pairs().map(|(x, y)| libm::fabs(x - y)).sum::<f64>() / den
        }
        Metric::Cosine => cosine_distance(a.iter().copied(), b.iter().copied(), metric)?,
        Metric::Correlation => {
            let n = a.len() as f64;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            cosine_distance(a.iter().map(|x| x - ma), b.iter().map(|y| y - mb), metric)?
        }
    };
    Ok(d)
}

fn cosine_distance(
    a: impl Iterator<Item = f64> + Clone,
    b: impl Iterator<Item = f64> + Clone,
    metric: Metric,
) -> Result<f64> {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput { metric });
    }
    let similarity = (dot / libm::sqrt(na * nb)).clamp(-1.0, 1.0);
    Ok(1.0 - similarity)
}

/// All seven distances in canonical order.
pub fn pair_feature(a: &[f64], b: &[f64]) -> Result<PairFeature> {
    let mut x = [0.0; PAIR_FEATURE_DIM];
    for (slot, metric) in x.iter_mut().zip(Metric::ALL) {
        *slot = distance(metric, a, b)?;
    }
    Ok(PairFeature(x))
}
