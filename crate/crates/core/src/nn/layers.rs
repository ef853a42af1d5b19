use alloc::format;
use alloc::vec::Vec;

use super::Tensor;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + libm::exp(-z)),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// `y = act(W·x + b)` with `W` shaped `[outputs, inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Vec<f64>,
    output: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut rng::Rng) -> Self {
        Self {
            w: Tensor::glorot_uniform(&[outputs, inputs], inputs, outputs, rng),
            b: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    pub fn from_parts(w: Tensor, b: Tensor, activation: Activation) -> Result<Self> {
        if w.shape().len() != 2 || b.shape() != [w.shape()[0]] {
            return Err(Error::Shape(format!("dense weights {:?} with bias {:?}", w.shape(), b.shape())));
        }
        Ok(Self { w, b, activation })
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self { w: Tensor::zeros(self.w.shape()), b: Tensor::zeros(self.b.shape()), activation: self.activation }
    }

    pub fn inputs(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::Shape(format!("dense layer expects {} inputs, got {}", self.inputs(), x.len())));
        }
        Ok((0..self.outputs())
            .map(|o| {
                let z = self.b.data()[o] + self.w.row(o).iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
                self.activation.apply(z)
            })
            .collect())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        let y = self.forward(x)?;
        Ok((y.clone(), DenseCache { input: x.to_vec(), output: y }))
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    pub fn backward(&self, cache: &DenseCache, dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = alloc::vec![0.0; self.inputs()];
        for (o, (&g, &y)) in dy.iter().zip(&cache.output).enumerate() {
            let dz = g * self.activation.derivative_from_output(y);
            if dz == 0.0 {
                continue;
            }
            grad.b.data_mut()[o] += dz;
            for ((gw, &x), (dxi, &w)) in
                grad.w.row_mut(o).iter_mut().zip(&cache.input).zip(dx.iter_mut().zip(self.w.row(o)))
            {
                *gw += dz * x;
                *dxi += dz * w;
            }
        }
        dx
    }
}

/// ReLU dense layer on a single vector.
pub fn dense_forward(w: &Tensor, b: &Tensor, x: &[f64]) -> Result<Vec<f64>> {
    Dense::from_parts(w.clone(), b.clone(), Activation::Relu)?.forward(x)
}

/// The same ReLU dense layer applied to every timestep independently.
pub fn time_distributed_dense(w: &Tensor, b: &Tensor, seq: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let layer = Dense::from_parts(w.clone(), b.clone(), Activation::Relu)?;
    seq.iter().map(|x| layer.forward(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{assert_gradients_match, random_vec};
    use alloc::vec;
    use std::vec::Vec;

    #[test]
    fn identity_relu() {
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[2]);
        assert_eq!(dense_forward(&w, &b, &[1.0, -2.0]).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(dense_forward(&w, &b, &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn time_distributed_is_per_step() {
        let mut rng = rng::seeded(1);
        let layer = Dense::new(3, 4, Activation::Relu, &mut rng);
        let seq: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 3)).collect();
        let td = time_distributed_dense(&layer.w, &layer.b, &seq).unwrap();
        for (x, y) in seq.iter().zip(&td) {
            assert_eq!(&dense_forward(&layer.w, &layer.b, x).unwrap(), y);
        }
    }

    fn check_dense(activation: Activation, seed: u64) {
        let mut rng = rng::seeded(seed);
        let mut layer = Dense::new(5, 4, activation, &mut rng);
        for v in layer.b.data_mut() {
            *v = crate::nn::gradcheck::uniform(&mut rng, -0.5, 0.5);
        }
        let x = random_vec(&mut rng, 5);
        let upstream = random_vec(&mut rng, 4);
        let loss = |l: &Dense, x: &[f64]| l.forward(x).unwrap().iter().zip(&upstream).map(|(y, u)| y * u).sum::<f64>();

        let (_, cache) = layer.forward_cached(&x).unwrap();
        let mut grad = layer.zeros_like();
        let dx = layer.backward(&cache, &upstream, &mut grad);

        assert_gradients_match(grad.w.data(), layer.w.data().len(), 1e-4, |i, h| {
            let mut l = layer.clone();
            l.w.data_mut()[i] += h;
            loss(&l, &x)
        });
        assert_gradients_match(grad.b.data(), 4, 1e-4, |i, h| {
            let mut l = layer.clone();
            l.b.data_mut()[i] += h;
            loss(&l, &x)
        });
        assert_gradients_match(&dx, 5, 1e-4, |i, h| {
            let mut x = x.clone();
            x[i] += h;
            loss(&layer, &x)
        });
    }

    #[test]
    fn dense_gradients() {
        for seed in 0..10 {
            check_dense(Activation::Relu, seed);
            check_dense(Activation::Sigmoid, seed);
            check_dense(Activation::Identity, seed);
        }
    }
}
