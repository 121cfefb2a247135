//! 2-D convolution (NCHW) with stride, symmetric zero padding, dilation and groups.
//!
//! Dense groups go through im2col + GEMM; depthwise convolutions (one input and
//! one output channel per group) use direct loops.

use serde::{Deserialize, Serialize};

use crate::nn::autograd::Var;
use crate::nn::gemm::{gemm, MatRef};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// Stride-1 convolution that preserves spatial size for an odd kernel.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        ConvSpec {
            stride: 1,
            padding: dilation * (kernel - 1) / 2,
            dilation,
            groups: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn output_len(&self, input: usize, kernel: usize) -> usize {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        assert!(padded >= span, "kernel span {span} exceeds padded input {padded}");
        (padded - span) / self.stride + 1
    }
}

/// Geometry of one spatial axis: which output positions read a valid input for a given tap.
#[derive(Clone, Copy)]
struct Axis {
    input: usize,
    output: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
}

impl Axis {
    /// Input offset for output 0 at tap `k` (may be negative) and the valid output range.
    fn tap(&self, k: usize) -> (isize, usize, usize) {
        let offset = (k * self.dilation) as isize - self.padding as isize;
        // valid o: 0 <= o*stride + offset < input
        let lo = if offset >= 0 {
            0
        } else {
            ((-offset) as usize).div_ceil(self.stride)
        };
        let hi = if (self.input as isize) <= offset {
            0
        } else {
            let span = (self.input as isize - offset - 1) as usize;
            (span / self.stride + 1).min(self.output)
        };
        (offset, lo.min(hi), hi)
    }
}

struct Geometry {
    rows: Axis,
    cols: Axis,
    kh: usize,
    kw: usize,
}

impl Geometry {
    fn new(h: usize, w: usize, kh: usize, kw: usize, spec: &ConvSpec) -> Self {
        let oh = spec.output_len(h, kh);
        let ow = spec.output_len(w, kw);
        Geometry {
            rows: Axis {
                input: h,
                output: oh,
                stride: spec.stride,
                padding: spec.padding,
                dilation: spec.dilation,
            },
            cols: Axis {
                input: w,
                output: ow,
                stride: spec.stride,
                padding: spec.padding,
                dilation: spec.dilation,
            },
            kh,
            kw,
        }
    }

    fn out_hw(&self) -> usize {
        self.rows.output * self.cols.output
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1
            && self.kw == 1
            && self.rows.stride == 1
            && self.rows.padding == 0
            && self.rows.output == self.rows.input
            && self.cols.output == self.cols.input
    }
}

/// Unfolds `channels` planes of `x` into a `(channels*kh*kw) x (oh*ow)` matrix.
fn im2col(x: &[f64], channels: usize, g: &Geometry, cols: &mut [f64]) {
    let (h, w) = (g.rows.input, g.cols.input);
    let (oh, ow) = (g.rows.output, g.cols.output);
    let s = g.cols.stride;
    for c in 0..channels {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..g.kh {
            let (row_off, oy_lo, oy_hi) = g.rows.tap(ky);
            for kx in 0..g.kw {
                let (col_off, ox_lo, ox_hi) = g.cols.tap(kx);
                let r = (c * g.kh + ky) * g.kw + kx;
                let dst_row = &mut cols[r * oh * ow..(r + 1) * oh * ow];
                for oy in 0..oh {
                    let dst = &mut dst_row[oy * ow..(oy + 1) * ow];
                    if oy < oy_lo || oy >= oy_hi {
                        dst.fill(0.0);
                        continue;
                    }
                    let iy = (oy * g.rows.stride).add_off(row_off);
                    let src = &plane[iy * w..(iy + 1) * w];
                    dst[..ox_lo].fill(0.0);
                    dst[ox_hi.max(ox_lo)..].fill(0.0);
                    for ox in ox_lo..ox_hi {
                        dst[ox] = src[(ox * s).add_off(col_off)];
                    }
                }
            }
        }
    }
}

/// Scatters a column matrix back onto `channels` input planes (accumulating).
fn col2im(cols: &[f64], channels: usize, g: &Geometry, x: &mut [f64]) {
    let (h, w) = (g.rows.input, g.cols.input);
    let (oh, ow) = (g.rows.output, g.cols.output);
    let s = g.cols.stride;
    for c in 0..channels {
        let plane = &mut x[c * h * w..(c + 1) * h * w];
        for ky in 0..g.kh {
            let (row_off, oy_lo, oy_hi) = g.rows.tap(ky);
            for kx in 0..g.kw {
                let (col_off, ox_lo, ox_hi) = g.cols.tap(kx);
                let r = (c * g.kh + ky) * g.kw + kx;
                let src_row = &cols[r * oh * ow..(r + 1) * oh * ow];
                for oy in oy_lo..oy_hi {
                    let iy = (oy * g.rows.stride).add_off(row_off);
                    let src = &src_row[oy * ow..(oy + 1) * ow];
                    let dst = &mut plane[iy * w..(iy + 1) * w];
                    for ox in ox_lo..ox_hi {
                        dst[(ox * s).add_off(col_off)] += src[ox];
                    }
                }
            }
        }
    }
}

// Callers only pass indices inside the valid range, where the sum is non-negative.
trait AddOffset {
    fn add_off(self, off: isize) -> usize;
}

impl AddOffset for usize {
    #[inline]
    fn add_off(self, off: isize) -> usize {
        (self as isize + off) as usize
    }
}

fn depthwise_forward(x: &[f64], w: &[f64], channels: usize, g: &Geometry, out: &mut [f64]) {
    let (h, wi) = (g.rows.input, g.cols.input);
    let (oh, ow) = (g.rows.output, g.cols.output);
    let s = g.cols.stride;
    for c in 0..channels {
        let plane = &x[c * h * wi..(c + 1) * h * wi];
        let dst_plane = &mut out[c * oh * ow..(c + 1) * oh * ow];
        for ky in 0..g.kh {
            let (row_off, oy_lo, oy_hi) = g.rows.tap(ky);
            for kx in 0..g.kw {
                let (col_off, ox_lo, ox_hi) = g.cols.tap(kx);
                if ox_lo >= ox_hi {
                    continue;
                }
                let wv = w[(c * g.kh + ky) * g.kw + kx];
                for oy in oy_lo..oy_hi {
                    let iy = (oy * g.rows.stride).add_off(row_off);
                    let src = &plane[iy * wi..(iy + 1) * wi];
                    let dst = &mut dst_plane[oy * ow..(oy + 1) * ow];
                    if s == 1 {
                        let base = ox_lo.add_off(col_off);
                        for (d, v) in dst[ox_lo..ox_hi].iter_mut().zip(&src[base..base + (ox_hi - ox_lo)]) {
                            *d += wv * v;
                        }
                    } else {
                        for ox in ox_lo..ox_hi {
                            dst[ox] += wv * src[(ox * s).add_off(col_off)];
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_backward(
    x: &[f64],
    w: &[f64],
    grad: &[f64],
    channels: usize,
    g: &Geometry,
    gx: Option<&mut [f64]>,
    gw: Option<&mut [f64]>,
) {
    let (h, wi) = (g.rows.input, g.cols.input);
    let (oh, ow) = (g.rows.output, g.cols.output);
    let s = g.cols.stride;
    let mut gx = gx;
    let mut gw = gw;
    for c in 0..channels {
        let plane = &x[c * h * wi..(c + 1) * h * wi];
        let gplane = &grad[c * oh * ow..(c + 1) * oh * ow];
        for ky in 0..g.kh {
            let (row_off, oy_lo, oy_hi) = g.rows.tap(ky);
            for kx in 0..g.kw {
                let (col_off, ox_lo, ox_hi) = g.cols.tap(kx);
                let widx = (c * g.kh + ky) * g.kw + kx;
                let wv = w[widx];
                let mut acc = 0.0;
                for oy in oy_lo..oy_hi {
                    let iy = (oy * g.rows.stride).add_off(row_off);
                    let gs = &gplane[oy * ow..(oy + 1) * ow];
                    let src = &plane[iy * wi..(iy + 1) * wi];
                    for ox in ox_lo..ox_hi {
                        acc += gs[ox] * src[(ox * s).add_off(col_off)];
                    }
                    if let Some(gx) = gx.as_deref_mut() {
                        let dst = &mut gx[c * h * wi + iy * wi..c * h * wi + (iy + 1) * wi];
                        for ox in ox_lo..ox_hi {
                            dst[(ox * s).add_off(col_off)] += wv * gs[ox];
                        }
                    }
                }
                if let Some(gw) = gw.as_deref_mut() {
                    gw[widx] += acc;
                }
            }
        }
    }
}

/// Convolution on plain tensors; returns the output.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, spec: &ConvSpec) -> Tensor {
    let (n, cin, h, wdt) = x.dims4();
    let (cout, cin_g, kh, kw) = w.dims4();
    let groups = spec.groups;
    assert!(groups >= 1 && cin % groups == 0 && cout % groups == 0, "bad group count");
    assert_eq!(cin / groups, cin_g, "weight expects {cin_g} channels per group, input has {cin}/{groups}");
    let g = Geometry::new(h, wdt, kh, kw, spec);
    let ohw = g.out_hw();
    let cout_g = cout / groups;
    let k = cin_g * kh * kw;
    let mut out = vec![0.0; n * cout * ohw];
    let depthwise = cin_g == 1 && cout_g == 1;
    let mut cols = if depthwise || g.is_pointwise() { Vec::new() } else { vec![0.0; k * ohw] };
    for i in 0..n {
        let xi = &x.data()[i * cin * h * wdt..(i + 1) * cin * h * wdt];
        let oi = &mut out[i * cout * ohw..(i + 1) * cout * ohw];
        if depthwise {
            depthwise_forward(xi, w.data(), cin, &g, oi);
        } else {
            for grp in 0..groups {
                let xg = &xi[grp * cin_g * h * wdt..(grp + 1) * cin_g * h * wdt];
                let rhs = if g.is_pointwise() {
                    MatRef::row_major(xg, k, ohw)
                } else {
                    im2col(xg, cin_g, &g, &mut cols);
                    MatRef::row_major(&cols, k, ohw)
                };
                let wg = &w.data()[grp * cout_g * k..(grp + 1) * cout_g * k];
                gemm(
                    1.0,
                    MatRef::row_major(wg, cout_g, k),
                    rhs,
                    0.0,
                    &mut oi[grp * cout_g * ohw..(grp + 1) * cout_g * ohw],
                );
            }
        }
        if let Some(b) = b {
            for (co, plane) in oi.chunks_exact_mut(ohw).enumerate() {
                let bv = b.data()[co];
                plane.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new(vec![n, cout, g.rows.output, g.cols.output], out)
}

/// Gradients of a convolution with respect to input, weight and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad: &Tensor,
    spec: &ConvSpec,
    need_x: bool,
    need_w: bool,
    need_b: bool,
) -> (Option<Tensor>, Option<Tensor>, Option<Tensor>) {
    let (n, cin, h, wdt) = x.dims4();
    let (cout, cin_g, kh, kw) = w.dims4();
    let groups = spec.groups;
    let g = Geometry::new(h, wdt, kh, kw, spec);
    let ohw = g.out_hw();
    let cout_g = cout / groups;
    let k = cin_g * kh * kw;
    let depthwise = cin_g == 1 && cout_g == 1;
    let mut gx = need_x.then(|| vec![0.0; x.numel()]);
    let mut gw = need_w.then(|| vec![0.0; w.numel()]);
    let gb = need_b.then(|| {
        let mut gb = vec![0.0; cout];
        for i in 0..n {
            for (co, acc) in gb.iter_mut().enumerate() {
                let start = (i * cout + co) * ohw;
                *acc += grad.data()[start..start + ohw].iter().sum::<f64>();
            }
        }
        Tensor::new(vec![cout], gb)
    });
    if need_x || need_w {
        let pointwise = g.is_pointwise();
        let mut cols = if depthwise || pointwise { Vec::new() } else { vec![0.0; k * ohw] };
        let mut gcols = if depthwise || pointwise { Vec::new() } else { vec![0.0; k * ohw] };
        for i in 0..n {
            let xi = &x.data()[i * cin * h * wdt..(i + 1) * cin * h * wdt];
            let gi = &grad.data()[i * cout * ohw..(i + 1) * cout * ohw];
            if depthwise {
                let gxi = gx.as_mut().map(|v| &mut v[i * cin * h * wdt..(i + 1) * cin * h * wdt]);
                depthwise_backward(xi, w.data(), gi, cin, &g, gxi, gw.as_deref_mut());
                continue;
            }
            for grp in 0..groups {
                let xg = &xi[grp * cin_g * h * wdt..(grp + 1) * cin_g * h * wdt];
                let gg = MatRef::row_major(&gi[grp * cout_g * ohw..(grp + 1) * cout_g * ohw], cout_g, ohw);
                let wg = &w.data()[grp * cout_g * k..(grp + 1) * cout_g * k];
                if let Some(gw) = gw.as_mut() {
                    let lhs = if pointwise {
                        MatRef::row_major(xg, k, ohw)
                    } else {
                        im2col(xg, cin_g, &g, &mut cols);
                        MatRef::row_major(&cols, k, ohw)
                    };
                    gemm(1.0, gg, lhs.t(), 1.0, &mut gw[grp * cout_g * k..(grp + 1) * cout_g * k]);
                }
                if let Some(gx) = gx.as_mut() {
                    let gxg = &mut gx[i * cin * h * wdt + grp * cin_g * h * wdt..i * cin * h * wdt + (grp + 1) * cin_g * h * wdt];
                    if pointwise {
                        gemm(1.0, MatRef::row_major(wg, cout_g, k).t(), gg, 1.0, gxg);
                    } else {
                        gemm(1.0, MatRef::row_major(wg, cout_g, k).t(), gg, 0.0, &mut gcols);
                        col2im(&gcols, cin_g, &g, gxg);
                    }
                }
            }
        }
    }
    (
        gx.map(|v| Tensor::new(x.shape().to_vec(), v)),
        gw.map(|v| Tensor::new(w.shape().to_vec(), v)),
        gb,
    )
}

/// Differentiable convolution.
pub fn conv2d(x: &Var, w: &Var, b: Option<&Var>, spec: ConvSpec) -> Var {
    let out = conv2d_forward(x.value(), w.value(), b.map(Var::value), &spec);
    let xv = x.value().clone();
    let wv = w.value().clone();
    let mut parents = vec![x.clone(), w.clone()];
    if let Some(b) = b {
        parents.push(b.clone());
    }
    let has_bias = b.is_some();
    Var::from_op(
        out,
        parents,
        Box::new(move |grad, needs| {
            let need_b = has_bias && needs[2];
            let (gx, gw, gb) = conv2d_backward(&xv, &wv, grad, &spec, needs[0], needs[1], need_b);
            let mut out = vec![gx, gw];
            if has_bias {
                out.push(gb);
            }
            out
        }),
    )
}
