use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::{rng, Error, Result};

/// Single-layer LSTM. Gate blocks are stacked in the order input, forget,
/// candidate, output: `W` is `[4H, D]`, `U` is `[4H, H]`, `b` is `[4H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone)]
struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Per-step activations of the unmasked timesteps.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<(usize, Step)>,
    len: usize,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

impl Lstm {
    /// Glorot-uniform weights, zero biases except a forget-gate bias of 1.
    pub fn new(inputs: usize, units: usize, rng: &mut rng::Rng) -> Self {
        let mut b = Tensor::zeros(&[4 * units]);
        b.data_mut()[units..2 * units].iter_mut().for_each(|v| *v = 1.0);
        Self {
            w: Tensor::glorot_uniform(&[4 * units, inputs], inputs, 4 * units, rng),
            u: Tensor::glorot_uniform(&[4 * units, units], units, 4 * units, rng),
            b,
        }
    }

    pub fn from_parts(w: Tensor, u: Tensor, b: Tensor) -> Result<Self> {
        let ok = w.shape().len() == 2
            && w.shape()[0].is_multiple_of(4)
            && u.shape() == [w.shape()[0], w.shape()[0] / 4]
            && b.shape() == [w.shape()[0]];
        if !ok {
            return Err(Error::Shape(format!(
                "lstm weights {:?}, recurrent {:?}, bias {:?}",
                w.shape(),
                u.shape(),
                b.shape()
            )));
        }
        Ok(Self { w, u, b })
    }

    pub fn zeros_like(&self) -> Self {
        Self { w: Tensor::zeros(self.w.shape()), u: Tensor::zeros(self.u.shape()), b: Tensor::zeros(self.b.shape()) }
    }

    pub fn units(&self) -> usize {
        self.u.shape()[1]
    }

    pub fn inputs(&self) -> usize {
        self.w.shape()[1]
    }

    /// Final hidden state from zero initial state. Timesteps whose mask entry
    /// is `false` leave the state untouched.
    pub fn forward(&self, seq: &[Vec<f64>], mask: &[bool]) -> Result<(Vec<f64>, LstmCache)> {
        if seq.is_empty() {
            return Err(Error::Shape("lstm needs at least one timestep".into()));
        }
        if mask.len() != seq.len() {
            return Err(Error::Shape(format!("{} timesteps with a mask of {}", seq.len(), mask.len())));
        }
        let h_units = self.units();
        let mut h = vec![0.0; h_units];
        let mut c = vec![0.0; h_units];
        let mut steps = Vec::new();
        for (t, (x, &live)) in seq.iter().zip(mask).enumerate() {
            if x.len() != self.inputs() {
                return Err(Error::Shape(format!("lstm expects {} inputs, step {t} has {}", self.inputs(), x.len())));
            }
            if !live {
                continue;
            }
            let mut gates = self.b.data().to_vec();
            for (r, z) in gates.iter_mut().enumerate() {
                *z += self.w.row(r).iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
                    + self.u.row(r).iter().zip(&h).map(|(u, h)| u * h).sum::<f64>();
            }
            let i: Vec<f64> = gates[..h_units].iter().map(|&z| sigmoid(z)).collect();
            let f: Vec<f64> = gates[h_units..2 * h_units].iter().map(|&z| sigmoid(z)).collect();
            let g: Vec<f64> = gates[2 * h_units..3 * h_units].iter().map(|&z| libm::tanh(z)).collect();
            let o: Vec<f64> = gates[3 * h_units..].iter().map(|&z| sigmoid(z)).collect();
            let c_new: Vec<f64> = (0..h_units).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c_new.iter().map(|&v| libm::tanh(v)).collect();
            let h_new: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
            steps.push((t, Step { x: x.clone(), h_prev: h, c_prev: c, i, f, g, o, tanh_c }));
            h = h_new;
            c = c_new;
        }
        Ok((h, LstmCache { steps, len: seq.len() }))
    }

    /// Backpropagation through time from `∂L/∂h_T`. Accumulates into `grad`
    /// and returns `∂L/∂x_t` for every timestep (zero for masked ones).
    pub fn backward(&self, cache: &LstmCache, dh_last: &[f64], grad: &mut Lstm) -> Vec<Vec<f64>> {
        let h_units = self.units();
        let mut dx = vec![vec![0.0; self.inputs()]; cache.len];
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; h_units];
        let mut dgates = vec![0.0; 4 * h_units];
        for (t, s) in cache.steps.iter().rev() {
            for k in 0..h_units {
                let do_ = dh[k] * s.tanh_c[k];
                dc[k] += dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                let di = dc[k] * s.g[k];
                let df = dc[k] * s.c_prev[k];
                let dg = dc[k] * s.i[k];
                dgates[k] = di * s.i[k] * (1.0 - s.i[k]);
                dgates[h_units + k] = df * s.f[k] * (1.0 - s.f[k]);
                dgates[2 * h_units + k] = dg * (1.0 - s.g[k] * s.g[k]);
                dgates[3 * h_units + k] = do_ * s.o[k] * (1.0 - s.o[k]);
                dc[k] *= s.f[k];
            }
            let mut dh_prev = vec![0.0; h_units];
            let dx_t = &mut dx[*t];
            for (r, &dz) in dgates.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                grad.b.data_mut()[r] += dz;
                for ((gw, &x), (dxi, &w)) in
                    grad.w.row_mut(r).iter_mut().zip(&s.x).zip(dx_t.iter_mut().zip(self.w.row(r)))
                {
                    *gw += dz * x;
                    *dxi += dz * w;
                }
                for ((gu, &hp), (dhp, &u)) in
                    grad.u.row_mut(r).iter_mut().zip(&s.h_prev).zip(dh_prev.iter_mut().zip(self.u.row(r)))
                {
                    *gu += dz * hp;
                    *dhp += dz * u;
                }
            }
            dh = dh_prev;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{assert_gradients_match, random_vec, uniform};
    use std::vec::Vec;

    fn random_lstm(rng: &mut rng::Rng, inputs: usize, units: usize) -> Lstm {
        let mut l = Lstm::new(inputs, units, rng);
        for v in l.b.data_mut() {
            *v += uniform(rng, -0.5, 0.5);
        }
        l
    }

    #[test]
    fn zero_weights_zero_output() {
        let mut l = Lstm::new(3, 2, &mut rng::seeded(0));
        l.w.fill(0.0);
        l.u.fill(0.0);
        l.b.fill(0.0);
        let seq = vec![vec![1.0, -4.0, 2.0], vec![0.5, 0.5, 9.0]];
        let (h, _) = l.forward(&seq, &[true, true]).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    fn one_step_one_unit_by_hand() {
        let l = Lstm::from_parts(
            Tensor::from_vec(&[4, 1], vec![0.5, -0.3, 0.8, 1.2]).unwrap(),
            Tensor::from_vec(&[4, 1], vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            Tensor::from_vec(&[4], vec![0.05, 1.0, -0.1, 0.2]).unwrap(),
        )
        .unwrap();
        let x = 0.7f64;
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let i = s(0.5 * x + 0.05);
        let g = (0.8 * x - 0.1).tanh();
        let o = s(1.2 * x + 0.2);
        // c0 = 0 so the forget gate drops out
        let h = o * (i * g).tanh();
        let (got, _) = l.forward(&[vec![x]], &[true]).unwrap();
        assert!((got[0] - h).abs() < 1e-12, "{} vs {h}", got[0]);
    }

    #[test]
    fn masked_padding_is_invisible() {
        let mut rng = rng::seeded(4);
        let l = random_lstm(&mut rng, 3, 4);
        let seq: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 3)).collect();
        let (h, _) = l.forward(&seq, &[true; 3]).unwrap();
        let mut padded = seq.clone();
        padded.extend((0..4).map(|_| vec![0.0; 3]));
        let (hp, _) = l.forward(&padded, &[true, true, true, false, false, false, false]).unwrap();
        assert_eq!(h, hp);
    }

    #[test]
    fn shape_errors() {
        let l = Lstm::new(3, 2, &mut rng::seeded(0));
        assert!(matches!(l.forward(&[], &[]), Err(Error::Shape(_))));
        assert!(matches!(l.forward(&[vec![1.0]], &[true]), Err(Error::Shape(_))));
        assert!(matches!(l.forward(&[vec![1.0; 3]], &[true, true]), Err(Error::Shape(_))));
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for seed in 0..10 {
            let mut rng = rng::seeded(100 + seed);
            let l = random_lstm(&mut rng, 2, 3);
            let seq: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 2)).collect();
            let mask = [true, true, false, true];
            let upstream = random_vec(&mut rng, 3);
            let loss = |l: &Lstm, seq: &[Vec<f64>]| {
                l.forward(seq, &mask).unwrap().0.iter().zip(&upstream).map(|(h, u)| h * u).sum::<f64>()
            };
            let (_, cache) = l.forward(&seq, &mask).unwrap();
            let mut grad = l.zeros_like();
            let dx = l.backward(&cache, &upstream, &mut grad);

            for (analytic, pick) in [(&grad.w, 0), (&grad.u, 1), (&grad.b, 2)] {
                assert_gradients_match(analytic.data(), analytic.len(), 1e-4, |i, h| {
                    let mut p = l.clone();
                    [&mut p.w, &mut p.u, &mut p.b][pick].data_mut()[i] += h;
                    loss(&p, &seq)
                });
            }
            let flat_dx: Vec<f64> = dx.concat();
            assert_gradients_match(&flat_dx, 8, 1e-4, |i, h| {
                let mut s = seq.clone();
                s[i / 2][i % 2] += h;
                loss(&l, &s)
            });
            assert!(dx[2].iter().all(|v| *v == 0.0));
        }
    }
}
