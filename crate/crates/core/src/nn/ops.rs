//! Elementwise, pooling, resampling and loss ops on [`Var`]s.

use crate::nn::autograd::Var;
use crate::nn::tensor::Tensor;

fn unary(x: &Var, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var {
    // df(input, output) is the local derivative
    let out = x.value().map(f);
    let xv = x.value().clone();
    let yv = out.clone();
    Var::from_op(
        out,
        vec![x.clone()],
        Box::new(move |grad, _| {
            let data = grad
                .data()
                .iter()
                .zip(xv.data().iter().zip(yv.data()))
                .map(|(g, (&a, &b))| g * df(a, b))
                .collect();
            vec![Some(Tensor::new(grad.shape().to_vec(), data))]
        }),
    )
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: &Var) -> Var {
    unary(x, |v| v.max(0.0), |a, _| if a > 0.0 { 1.0 } else { 0.0 })
}

pub fn sigmoid(x: &Var) -> Var {
    unary(x, sigmoid_scalar, |_, y| y * (1.0 - y))
}

pub fn silu(x: &Var) -> Var {
    unary(
        x,
        |v| v * sigmoid_scalar(v),
        |a, _| {
            let s = sigmoid_scalar(a);
            s * (1.0 + a * (1.0 - s))
        },
    )
}

pub fn add(a: &Var, b: &Var) -> Var {
    let out = a.value().zip_map(b.value(), |p, q| p + q);
    Var::from_op(
        out,
        vec![a.clone(), b.clone()],
        Box::new(|grad, needs| needs.iter().map(|&n| n.then(|| grad.clone())).collect()),
    )
}

/// `x[n, c, :, :] * s[n, c]` with `s` shaped `[N, C, 1, 1]`.
pub fn scale_channels(x: &Var, s: &Var) -> Var {
    let (n, c, h, w) = x.value().dims4();
    assert_eq!(s.shape(), &[n, c, 1, 1], "scale must be [N, C, 1, 1]");
    let hw = h * w;
    let mut out = x.value().clone();
    for (plane, &k) in out.data_mut().chunks_exact_mut(hw).zip(s.value().data()) {
        plane.iter_mut().for_each(|v| *v *= k);
    }
    let xv = x.value().clone();
    let sv = s.value().clone();
    Var::from_op(
        out,
        vec![x.clone(), s.clone()],
        Box::new(move |grad, needs| {
            let gx = needs[0].then(|| {
                let mut g = grad.clone();
                for (plane, &k) in g.data_mut().chunks_exact_mut(hw).zip(sv.data()) {
                    plane.iter_mut().for_each(|v| *v *= k);
                }
                g
            });
            let gs = needs[1].then(|| {
                let data = grad
                    .data()
                    .chunks_exact(hw)
                    .zip(xv.data().chunks_exact(hw))
                    .map(|(g, x)| g.iter().zip(x).map(|(a, b)| a * b).sum())
                    .collect();
                Tensor::new(vec![n, c, 1, 1], data)
            });
            vec![gx, gs]
        }),
    )
}

/// Mean over the spatial axes, keeping them as `1 x 1`.
pub fn global_avg_pool(x: &Var) -> Var {
    let (n, c, h, w) = x.value().dims4();
    let hw = h * w;
    let data = x.value().data().chunks_exact(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
    Var::from_op(
        Tensor::new(vec![n, c, 1, 1], data),
        vec![x.clone()],
        Box::new(move |grad, _| {
            let mut g = Vec::with_capacity(n * c * hw);
            for &v in grad.data() {
                g.extend(std::iter::repeat_n(v / hw as f64, hw));
            }
            vec![Some(Tensor::new(vec![n, c, h, w], g))]
        }),
    )
}

/// Repeats a `[N, C, 1, 1]` tensor over an `h x w` grid.
pub fn broadcast_spatial(x: &Var, h: usize, w: usize) -> Var {
    let (n, c, one_h, one_w) = x.value().dims4();
    assert!(one_h == 1 && one_w == 1, "broadcast needs a 1x1 input");
    let hw = h * w;
    let mut data = Vec::with_capacity(n * c * hw);
    for &v in x.value().data() {
        data.extend(std::iter::repeat_n(v, hw));
    }
    Var::from_op(
        Tensor::new(vec![n, c, h, w], data),
        vec![x.clone()],
        Box::new(move |grad, _| {
            let data = grad.data().chunks_exact(hw).map(|p| p.iter().sum()).collect();
            vec![Some(Tensor::new(vec![n, c, 1, 1], data))]
        }),
    )
}

/// Source taps for one axis of a half-pixel bilinear resize.
fn taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling with half-pixel centres (corners not aligned).
pub fn resize_bilinear(x: &Var, oh: usize, ow: usize) -> Var {
    let (n, c, h, w) = x.value().dims4();
    if (h, w) == (oh, ow) {
        return x.clone();
    }
    let ty = taps(h, oh);
    let tx = taps(w, ow);
    let mut out = vec![0.0; n * c * oh * ow];
    for (src, dst) in x.value().data().chunks_exact(h * w).zip(out.chunks_exact_mut(oh * ow)) {
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst[oy * ow + ox] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Var::from_op(
        Tensor::new(vec![n, c, oh, ow], out),
        vec![x.clone()],
        Box::new(move |grad, _| {
            let mut g = vec![0.0; n * c * h * w];
            for (gsrc, dst) in grad.data().chunks_exact(oh * ow).zip(g.chunks_exact_mut(h * w)) {
                for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                    for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                        let v = gsrc[oy * ow + ox];
                        dst[y0 * w + x0] += v * (1.0 - fy) * (1.0 - fx);
                        dst[y0 * w + x1] += v * (1.0 - fy) * fx;
                        dst[y1 * w + x0] += v * fy * (1.0 - fx);
                        dst[y1 * w + x1] += v * fy * fx;
                    }
                }
            }
            vec![Some(Tensor::new(vec![n, c, h, w], g))]
        }),
    )
}

/// Concatenates NCHW tensors along the channel axis.
pub fn concat_channels(parts: &[Var]) -> Var {
    assert!(!parts.is_empty(), "nothing to concatenate");
    let (n, _, h, w) = parts[0].value().dims4();
    let hw = h * w;
    let widths: Vec<usize> = parts
        .iter()
        .map(|p| {
            let (pn, pc, ph, pw) = p.value().dims4();
            assert_eq!((pn, ph, pw), (n, h, w), "concatenated tensors must share N, H and W");
            pc
        })
        .collect();
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(n * total * hw);
    for i in 0..n {
        for (p, &pc) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.value().data()[i * pc * hw..(i + 1) * pc * hw]);
        }
    }
    let widths_bw = widths.clone();
    Var::from_op(
        Tensor::new(vec![n, total, h, w], out),
        parts.to_vec(),
        Box::new(move |grad, needs| {
            let mut offset = 0;
            let mut grads = Vec::with_capacity(widths_bw.len());
            for (&pc, &need) in widths_bw.iter().zip(needs) {
                let g = need.then(|| {
                    let mut data = Vec::with_capacity(n * pc * hw);
                    for i in 0..n {
                        let start = (i * total + offset) * hw;
                        data.extend_from_slice(&grad.data()[start..start + pc * hw]);
                    }
                    Tensor::new(vec![n, pc, h, w], data)
                });
                grads.push(g);
                offset += pc;
            }
            grads
        }),
    )
}

/// Mean binary cross-entropy between `sigmoid(logits)` and `targets`, computed
/// from the logits for numerical stability.
pub fn bce_with_logits(logits: &Var, targets: &Tensor) -> Var {
    assert_eq!(logits.shape(), targets.shape(), "logits and targets differ in shape");
    let count = targets.numel() as f64;
    let loss: f64 = logits
        .value()
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
        .sum::<f64>()
        / count;
    let z = logits.value().clone();
    let y = targets.clone();
    Var::from_op(
        Tensor::scalar(loss),
        vec![logits.clone()],
        Box::new(move |grad, _| {
            let k = grad.data()[0] / count;
            vec![Some(z.zip_map(&y, |zv, yv| (sigmoid_scalar(zv) - yv) * k))]
        }),
    )
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::nn::autograd::backward;

    pub fn pseudo(shape: &[usize], seed: u64) -> Tensor {
        let n: usize = shape.iter().product();
        let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
        let data = (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Tensor::new(shape.to_vec(), data)
    }

    /// Compares analytic gradients of `f` (reduced by a fixed random projection)
    /// with central finite differences for each input.
    pub fn check_gradients(inputs: &[Tensor], f: impl Fn(&[Var]) -> Var, tol: f64) {
        let params: Vec<Var> = inputs.iter().enumerate().map(|(i, t)| Var::param(t.clone(), i)).collect();
        let probe_out = f(&params);
        let proj = pseudo(probe_out.shape(), 4242);
        let reduce = |v: &Var| -> f64 { v.value().data().iter().zip(proj.data()).map(|(a, b)| a * b).sum() };
        let projected = {
            let p = Var::constant(proj.clone());
            project(&probe_out, &p)
        };
        let grads = backward(&projected);
        let h = 1e-6;
        for (i, t) in inputs.iter().enumerate() {
            let analytic = grads.get(i).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()));
            for j in 0..t.numel() {
                let mut plus = inputs.to_vec();
                plus[i].data_mut()[j] += h;
                let mut minus = inputs.to_vec();
                minus[i].data_mut()[j] -= h;
                let fp = reduce(&f(&plus.into_iter().map(Var::constant).collect::<Vec<_>>()));
                let fm = reduce(&f(&minus.into_iter().map(Var::constant).collect::<Vec<_>>()));
                let numeric = (fp - fm) / (2.0 * h);
                let a = analytic.data()[j];
                assert!(
                    (numeric - a).abs() <= tol * (1.0 + numeric.abs()),
                    "input {i} element {j}: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    /// `sum(x * p)` as a differentiable scalar.
    fn project(x: &Var, p: &Var) -> Var {
        let value: f64 = x.value().data().iter().zip(p.value().data()).map(|(a, b)| a * b).sum();
        let pv = p.value().clone();
        Var::from_op(
            Tensor::scalar(value),
            vec![x.clone()],
            Box::new(move |grad, _| vec![Some(pv.map(|v| v * grad.data()[0]))]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::testing::{check_gradients, pseudo};
    use super::*;
    use crate::nn::conv::{conv2d, ConvSpec};

    #[test]
    fn activation_gradients() {
        let x = pseudo(&[2, 3, 4, 4], 1).map(|v| v * 3.0 + 0.013);
        check_gradients(std::slice::from_ref(&x), |v| relu(&v[0]), 1e-6);
        check_gradients(std::slice::from_ref(&x), |v| sigmoid(&v[0]), 1e-6);
        check_gradients(&[x], |v| silu(&v[0]), 1e-6);
    }

    #[test]
    fn structural_op_gradients() {
        let x = pseudo(&[2, 3, 5, 4], 2);
        let s = pseudo(&[2, 3, 1, 1], 3);
        check_gradients(&[x.clone(), s.clone()], |v| scale_channels(&v[0], &v[1]), 1e-6);
        check_gradients(std::slice::from_ref(&x), |v| global_avg_pool(&v[0]), 1e-6);
        check_gradients(&[s], |v| broadcast_spatial(&v[0], 3, 2), 1e-6);
        check_gradients(std::slice::from_ref(&x), |v| resize_bilinear(&v[0], 9, 7), 1e-6);
        check_gradients(std::slice::from_ref(&x), |v| resize_bilinear(&v[0], 2, 3), 1e-6);
        let y = pseudo(&[2, 2, 5, 4], 4);
        check_gradients(&[x.clone(), y], |v| concat_channels(&[v[0].clone(), v[1].clone()]), 1e-6);
        check_gradients(&[x.clone(), x.map(|v| v * 0.5)], |v| add(&v[0], &v[1]), 1e-6);
    }

    #[test]
    fn conv_gradients_through_autograd() {
        let x = pseudo(&[1, 2, 6, 5], 5);
        let w = pseudo(&[3, 2, 3, 3], 6);
        let b = pseudo(&[3], 7);
        let spec = ConvSpec::same(3, 2).with_stride(2);
        check_gradients(&[x, w, b], |v| conv2d(&v[0], &v[1], Some(&v[2]), spec), 1e-6);
    }

    #[test]
    fn bce_matches_probability_form_and_gradient() {
        let z = pseudo(&[1, 1, 3, 3], 8).map(|v| v * 4.0);
        let y = pseudo(&[1, 1, 3, 3], 9).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let loss = bce_with_logits(&Var::constant(z.clone()), &y).value().data()[0];
        let expect: f64 = z
            .data()
            .iter()
            .zip(y.data())
            .map(|(&zv, &yv)| {
                let p = 1.0 / (1.0 + (-zv).exp());
                -(yv * p.ln() + (1.0 - yv) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 9.0;
        assert!((loss - expect).abs() < 1e-12);
        check_gradients(&[z], |v| bce_with_logits(&v[0], &y), 1e-6);
    }

    #[test]
    fn resize_identity_and_constant() {
        let x = Var::constant(Tensor::full(&[1, 1, 3, 5], 2.5));
        let y = resize_bilinear(&x, 8, 2);
        assert!(y.value().data().iter().all(|&v| (v - 2.5).abs() < 1e-12));
        let z = resize_bilinear(&x, 3, 5);
        assert_eq!(z.value(), x.value());
    }

    #[test]
    fn constants_do_not_build_a_graph() {
        let x = Var::constant(pseudo(&[1, 1, 2, 2], 1));
        assert!(!relu(&x).requires_grad());
        let p = Var::param(pseudo(&[1, 1, 2, 2], 1), 0);
        assert!(relu(&p).requires_grad());
    }
}
