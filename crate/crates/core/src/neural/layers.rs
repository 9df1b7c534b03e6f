//! Forward and backward kernels for the layers used by the estimators.
//!
//! Feature maps are `(channels, height, width)` row-major slices. All kernels
//! work on one sample; batching happens a level up.

/// Same-padded 2-D convolution (zero padding, stride 1, odd `k`).
///
/// `weight` is `(out, in, k, k)`, `bias` is `(out)`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward(
    input: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
    k: usize,
) -> Vec<f64> {
    let pad = k / 2;
    let plane = h * w;
    let mut out = vec![0.0; out_ch * plane];
    for o in 0..out_ch {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..in_ch {
            let src = &input[i * plane..(i + 1) * plane];
            for ky in 0..k {
                let dy = ky as isize - pad as isize;
                let (y0, y1) = valid_range(dy, h);
                for kx in 0..k {
                    let wv = weight[((o * in_ch + i) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - pad as isize;
                    let (x0, x1) = valid_range(dx, w);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let d = &mut dst[y * w + x0..y * w + x1];
                        let s = &src[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
                        for (a, b) in d.iter_mut().zip(s) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output rows/cols `y` for which `y + d` lies inside `0..len`.
#[inline]
fn valid_range(d: isize, len: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).min(len as isize).max(0) as usize;
    (lo.min(hi), hi)
}

/// Accumulates weight and bias gradients of [`conv2d_forward`] and, when
/// `grad_input` is given, the gradient with respect to the input.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    input: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    out_ch: usize,
    k: usize,
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    mut grad_input: Option<&mut [f64]>,
) {
    let pad = k / 2;
    let plane = h * w;
    for o in 0..out_ch {
        let g = &grad_out[o * plane..(o + 1) * plane];
        grad_bias[o] += g.iter().sum::<f64>();
        for i in 0..in_ch {
            let src = &input[i * plane..(i + 1) * plane];
            for ky in 0..k {
                let dy = ky as isize - pad as isize;
                let (y0, y1) = valid_range(dy, h);
                for kx in 0..k {
                    let dx = kx as isize - pad as isize;
                    let (x0, x1) = valid_range(dx, w);
                    let widx = ((o * in_ch + i) * k + ky) * k + kx;
                    let wv = weight[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let sx1 = (x1 as isize + dx) as usize;
                        let gr = &g[y * w + x0..y * w + x1];
                        let s = &src[sy * w + sx0..sy * w + sx1];
                        acc += gr.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(gi) = grad_input.as_deref_mut() {
                            let dst = &mut gi[i * plane + sy * w + sx0..i * plane + sy * w + sx1];
                            for (d, a) in dst.iter_mut().zip(gr) {
                                *d += wv * a;
                            }
                        }
                    }
                    grad_weight[widx] += acc;
                }
            }
        }
    }
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries where the pre-activation was not positive.
pub fn relu_backward(pre: &[f64], grad: &mut [f64]) {
    for (g, p) in grad.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Non-overlapping max pooling with window `p`; trailing rows/cols that do not
/// fill a window are dropped. Returns the pooled map and, per output cell,
/// the flat input index of the winner.
pub fn maxpool_forward(input: &[f64], ch: usize, h: usize, w: usize, p: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / p, w / p);
    let mut out = Vec::with_capacity(ch * oh * ow);
    let mut arg = Vec::with_capacity(ch * oh * ow);
    for c in 0..ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..p {
                    for dx in 0..p {
                        let idx = c * h * w + (oy * p + dy) * w + ox * p + dx;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward(argmax: &[usize], grad_out: &[f64], input_len: usize) -> Vec<f64> {
    let mut g = vec![0.0; input_len];
    for (&idx, &v) in argmax.iter().zip(grad_out) {
        g[idx] += v;
    }
    g
}

/// Global average pooling to one value per channel.
pub fn gap_forward(input: &[f64], ch: usize, plane: usize) -> Vec<f64> {
    (0..ch)
        .map(|c| input[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64)
        .collect()
}

pub fn gap_backward(grad_out: &[f64], plane: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(grad_out.len() * plane);
    for &v in grad_out {
        g.extend(std::iter::repeat_n(v / plane as f64, plane));
    }
    g
}

/// `y = W x + b` with `W` shaped `(out, in)`.
pub fn linear_forward(x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| {
            b + weight[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
        })
        .collect()
}

/// Accumulates parameter gradients and returns the input gradient.
pub fn linear_backward(
    x: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) -> Vec<f64> {
    let n_in = x.len();
    let mut gx = vec![0.0; n_in];
    for (o, &g) in grad_out.iter().enumerate() {
        grad_bias[o] += g;
        if g == 0.0 {
            continue;
        }
        let row = o * n_in..(o + 1) * n_in;
        for ((gw, w), (xi, gxi)) in grad_weight[row.clone()]
            .iter_mut()
            .zip(&weight[row])
            .zip(x.iter().zip(gx.iter_mut()))
        {
            *gw += g * xi;
            *gxi += g * w;
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition of same-padded convolution, used as a reference.
    #[allow(clippy::too_many_arguments)]
    fn conv_reference(
        input: &[f64],
        c_in: usize,
        h: usize,
        w: usize,
        weight: &[f64],
        bias: &[f64],
        c_out: usize,
        k: usize,
    ) -> Vec<f64> {
        let pad = k as isize / 2;
        let mut out = vec![0.0; c_out * h * w];
        for o in 0..c_out {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut s = bias[o];
                    for i in 0..c_in {
                        for ky in 0..k as isize {
                            for kx in 0..k as isize {
                                let (sy, sx) = (y + ky - pad, x + kx - pad);
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    s += weight[((o * c_in + i) * k + ky as usize) * k + kx as usize]
                                        * input[i * h * w + sy as usize * w + sx as usize];
                                }
                            }
                        }
                    }
                    out[o * h * w + y as usize * w + x as usize] = s;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, salt: u64) -> Vec<f64> {
        (0..n)
            .map(|i| (((i as u64 + 1) * 2654435761 + salt * 97) % 1000) as f64 / 500.0 - 1.0)
            .collect()
    }

    #[test]
    fn conv_matches_direct_definition() {
        let (c_in, c_out, h, w, k) = (2, 3, 5, 4, 3);
        let input = pseudo(c_in * h * w, 1);
        let weight = pseudo(c_out * c_in * k * k, 2);
        let bias = pseudo(c_out, 3);
        let fast = conv2d_forward(&input, c_in, h, w, &weight, &bias, c_out, k);
        let slow = conv_reference(&input, c_in, h, w, &weight, &bias, c_out, k);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_input_gradient_is_adjoint() {
        // <conv(x) - b, g> == <x, conv_backward_input(g)>
        let (c_in, c_out, h, w, k) = (2, 2, 4, 6, 3);
        let x = pseudo(c_in * h * w, 4);
        let weight = pseudo(c_out * c_in * k * k, 5);
        let zero_bias = vec![0.0; c_out];
        let g = pseudo(c_out * h * w, 6);
        let y = conv2d_forward(&x, c_in, h, w, &weight, &zero_bias, c_out, k);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut gw = vec![0.0; weight.len()];
        let mut gb = vec![0.0; c_out];
        let mut gx = vec![0.0; x.len()];
        conv2d_backward(&x, c_in, h, w, &weight, c_out, k, &g, &mut gw, &mut gb, Some(&mut gx));
        let rhs: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // and the weight gradient is the adjoint in the weight argument
        let rhs_w: f64 = weight.iter().zip(&gw).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_w).abs() < 1e-10);
    }

    #[test]
    fn pooling_shapes_and_routes() {
        let x = vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 1.0, 0.0];
        let (out, arg) = maxpool_forward(&x, 1, 3, 3, 2);
        assert_eq!(out, [5.0]);
        assert_eq!(arg, [1]);
        let g = maxpool_backward(&arg, &[2.0], 9);
        assert_eq!(g[1], 2.0);
        assert_eq!(g.iter().sum::<f64>(), 2.0);
        assert_eq!(gap_forward(&[1.0, 3.0, 2.0, 2.0], 2, 2), [2.0, 2.0]);
        assert_eq!(gap_backward(&[4.0], 4), [1.0; 4]);
    }

    #[test]
    fn linear_layer() {
        let y = linear_forward(&[1.0, 2.0], &[1.0, 0.0, 0.5, 0.5], &[0.0, 1.0]);
        assert_eq!(y, [1.0, 2.5]);
    }
}
