//! Batch normalisation over the N, H and W axes of an NCHW tensor.

use crate::nn::autograd::Var;
use crate::nn::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch statistics observed in training mode.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance (biased when only one value per channel was seen).
    pub var: Vec<f64>,
}

impl BatchStats {
    /// Exponential moving-average update of running statistics.
    pub fn update_running(&self, running_mean: &mut [f64], running_var: &mut [f64]) {
        for c in 0..self.mean.len() {
            running_mean[c] = (1.0 - BN_MOMENTUM) * running_mean[c] + BN_MOMENTUM * self.mean[c];
            running_var[c] = (1.0 - BN_MOMENTUM) * running_var[c] + BN_MOMENTUM * self.var[c];
        }
    }
}

fn channel_planes(x: &Tensor) -> (usize, usize, usize) {
    let (n, c, h, w) = x.dims4();
    (n, c, h * w)
}

/// Normalises with the batch's own statistics and returns them.
pub fn batch_norm_train(x: &Var, gamma: &Var, beta: &Var) -> (Var, BatchStats) {
    let (n, c, hw) = channel_planes(x.value());
    let count = (n * hw) as f64;
    let xd = x.value().data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for i in 0..n {
        for ch in 0..c {
            let plane = &xd[(i * c + ch) * hw..(i * c + ch + 1) * hw];
            mean[ch] += plane.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    for i in 0..n {
        for ch in 0..c {
            let plane = &xd[(i * c + ch) * hw..(i * c + ch + 1) * hw];
            var[ch] += plane.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
        }
    }
    let biased: Vec<f64> = var.iter().map(|v| v / count).collect();
    let unbiased: Vec<f64> = if count > 1.0 {
        var.iter().map(|v| v / (count - 1.0)).collect()
    } else {
        biased.clone()
    };
    let inv_std: Vec<f64> = biased.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

    let g = gamma.value().data();
    let b = beta.value().data();
    let mut xhat = vec![0.0; xd.len()];
    let mut out = vec![0.0; xd.len()];
    for i in 0..n {
        for ch in 0..c {
            let range = (i * c + ch) * hw..(i * c + ch + 1) * hw;
            for k in range {
                let h = (xd[k] - mean[ch]) * inv_std[ch];
                xhat[k] = h;
                out[k] = g[ch] * h + b[ch];
            }
        }
    }
    let shape = x.shape().to_vec();
    let gv = gamma.value().clone();
    let out = Var::from_op(
        Tensor::new(shape.clone(), out),
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |grad, needs| {
            let gd = grad.data();
            let mut sum_g = vec![0.0; c];
            let mut sum_gx = vec![0.0; c];
            for i in 0..n {
                for ch in 0..c {
                    let range = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                    for k in range {
                        sum_g[ch] += gd[k];
                        sum_gx[ch] += gd[k] * xhat[k];
                    }
                }
            }
            let gx = needs[0].then(|| {
                let mut gx = vec![0.0; gd.len()];
                for i in 0..n {
                    for ch in 0..c {
                        let k0 = gv.data()[ch] * inv_std[ch] / count;
                        let range = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                        for k in range {
                            gx[k] = k0 * (count * gd[k] - sum_g[ch] - xhat[k] * sum_gx[ch]);
                        }
                    }
                }
                Tensor::new(shape.clone(), gx)
            });
            vec![
                gx,
                needs[1].then(|| Tensor::new(vec![c], sum_gx)),
                needs[2].then(|| Tensor::new(vec![c], sum_g)),
            ]
        }),
    );
    (out, BatchStats { mean, var: unbiased })
}

/// Normalises with fixed running statistics (an affine map per channel).
pub fn batch_norm_eval(x: &Var, gamma: &Var, beta: &Var, running_mean: &[f64], running_var: &[f64]) -> Var {
    let (n, c, hw) = channel_planes(x.value());
    let scale: Vec<f64> = (0..c)
        .map(|ch| gamma.value().data()[ch] / (running_var[ch] + BN_EPS).sqrt())
        .collect();
    let shift: Vec<f64> = (0..c)
        .map(|ch| beta.value().data()[ch] - running_mean[ch] * scale[ch])
        .collect();
    let mut out = x.value().clone();
    for (idx, plane) in out.data_mut().chunks_exact_mut(hw).enumerate() {
        let ch = idx % c;
        plane.iter_mut().for_each(|v| *v = *v * scale[ch] + shift[ch]);
    }
    let xv = x.value().clone();
    let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mean = running_mean.to_vec();
    Var::from_op(
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |grad, needs| {
            let gd = grad.data();
            let gx = needs[0].then(|| {
                let mut g = grad.clone();
                for (idx, plane) in g.data_mut().chunks_exact_mut(hw).enumerate() {
                    let k = scale[idx % c];
                    plane.iter_mut().for_each(|v| *v *= k);
                }
                g
            });
            let mut sum_g = vec![0.0; c];
            let mut sum_gx = vec![0.0; c];
            for i in 0..n {
                for ch in 0..c {
                    let range = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                    for k in range {
                        sum_g[ch] += gd[k];
                        sum_gx[ch] += gd[k] * (xv.data()[k] - mean[ch]) * inv_std[ch];
                    }
                }
            }
            vec![
                gx,
                needs[1].then(|| Tensor::new(vec![c], sum_gx)),
                needs[2].then(|| Tensor::new(vec![c], sum_g)),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::testing::{check_gradients, pseudo};

    #[test]
    fn train_mode_normalises_each_channel() {
        let x = pseudo(&[3, 2, 4, 5], 11).map(|v| v * 7.0 + 3.0);
        let (y, stats) = batch_norm_train(
            &Var::constant(x),
            &Var::constant(Tensor::full(&[2], 1.0)),
            &Var::constant(Tensor::zeros(&[2])),
        );
        let (n, c, h, w) = y.value().dims4();
        for ch in 0..c {
            let vals: Vec<f64> = (0..n)
                .flat_map(|i| y.value().data()[(i * c + ch) * h * w..(i * c + ch + 1) * h * w].to_vec())
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-3);
            assert!(stats.var[ch] > 0.0);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = pseudo(&[2, 3, 3, 2], 12);
        let g = pseudo(&[3], 13).map(|v| v + 1.5);
        let b = pseudo(&[3], 14);
        check_gradients(&[x.clone(), g.clone(), b.clone()], |v| batch_norm_train(&v[0], &v[1], &v[2]).0, 1e-5);
        let rm = [0.1, -0.2, 0.3];
        let rv = [0.5, 1.5, 2.0];
        check_gradients(&[x, g, b], |v| batch_norm_eval(&v[0], &v[1], &v[2], &rm, &rv), 1e-6);
    }

    #[test]
    fn running_stats_follow_momentum() {
        let stats = BatchStats { mean: vec![1.0], var: vec![3.0] };
        let mut m = [0.0];
        let mut v = [1.0];
        stats.update_running(&mut m, &mut v);
        assert!((m[0] - 0.1).abs() < 1e-15);
        assert!((v[0] - 1.2).abs() < 1e-15);
    }
}
