use rand::Rng;

use super::tensor::{gemm, Tensor};
use super::NnError;

/// He-uniform initialisation for a layer feeding a ReLU.
pub fn he_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let limit = (6.0 / fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}

/// Fully connected layer acting on the rows of an `[n, in]` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl LinearGrads {
    pub fn into_vec(self) -> Vec<Tensor> {
        let mut v = vec![self.weight];
        v.extend(self.bias);
        v
    }
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, output: usize, bias: bool) -> Self {
        Self {
            weight: he_uniform(rng, &[output, input], input),
            bias: bias.then(|| Tensor::zeros(&[output])),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (n, din) = as_matrix(x, "linear input")?;
        if din != self.input_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "linear layer expects {} inputs, got {}",
                self.input_dim(),
                din
            )));
        }
        let dout = self.output_dim();
        let mut y = vec![0.0; n * dout];
        if let Some(b) = &self.bias {
            for row in y.chunks_exact_mut(dout) {
                row.copy_from_slice(b.data());
            }
        }
        gemm(
            n,
            din,
            dout,
            x.data(),
            false,
            self.weight.data(),
            true,
            &mut y,
            1.0,
        );
        Tensor::from_vec(&[n, dout], y)
    }

    /// Returns the input gradient and the parameter gradients.
    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
    ) -> Result<(Tensor, LinearGrads), NnError> {
        let (n, din) = as_matrix(x, "linear input")?;
        let dout = self.output_dim();
        grad_out.expect_shape(&[n, dout], "linear output gradient")?;
        let mut gw = vec![0.0; dout * din];
        gemm(
            dout,
            n,
            din,
            grad_out.data(),
            true,
            x.data(),
            false,
            &mut gw,
            0.0,
        );
        let gb = self.bias.as_ref().map(|_| {
            let mut acc = vec![0.0; dout];
            for row in grad_out.data().chunks_exact(dout) {
                for (a, g) in acc.iter_mut().zip(row) {
                    *a += g;
                }
            }
            Tensor::from_vec(&[dout], acc).expect("bias shape")
        });
        let mut gx = vec![0.0; n * din];
        gemm(
            n,
            dout,
            din,
            grad_out.data(),
            false,
            self.weight.data(),
            false,
            &mut gx,
            0.0,
        );
        Ok((
            Tensor::from_vec(&[n, din], gx)?,
            LinearGrads {
                weight: Tensor::from_vec(&[dout, din], gw)?,
                bias: gb,
            },
        ))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.weight];
        v.extend(self.bias.as_ref());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.weight];
        v.extend(self.bias.as_mut());
        v
    }
}

fn as_matrix(x: &Tensor, what: &str) -> Result<(usize, usize), NnError> {
    match x.shape() {
        [n, d] => Ok((*n, *d)),
        s => Err(NnError::ShapeMismatch(format!(
            "{what}: expected a matrix, got {s:?}"
        ))),
    }
}

/// 2-D convolution over a single `[channels, height, width]` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[out_channels, in_channels * k * k]`
    pub weight: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Values kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    input_shape: [usize; 3],
    out_hw: (usize, usize),
    cols: Option<Vec<f64>>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: he_uniform(rng, &[out_channels, fan_in], fan_in),
            bias: Tensor::zeros(&[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvCache), NnError> {
        let [c, h, w] = as_chw(x, "conv input")?;
        if c != self.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "conv expects {} channels, got {}",
                self.in_channels, c
            )));
        }
        let (ho, wo) = self.output_size(h, w);
        let p = ho * wo;
        let kk = c * self.kernel * self.kernel;
        let cols = if self.is_pointwise() {
            None
        } else {
            Some(im2col(
                x.data(),
                c,
                h,
                w,
                self.kernel,
                self.stride,
                self.padding,
                ho,
                wo,
            ))
        };
        let src = cols.as_deref().unwrap_or(x.data());
        let mut y = vec![0.0; self.out_channels * p];
        for (row, b) in y.chunks_exact_mut(p).zip(self.bias.data()) {
            row.fill(*b);
        }
        gemm(
            self.out_channels,
            kk,
            p,
            self.weight.data(),
            false,
            src,
            false,
            &mut y,
            1.0,
        );
        Ok((
            Tensor::from_vec(&[self.out_channels, ho, wo], y)?,
            ConvCache {
                input_shape: [c, h, w],
                out_hw: (ho, wo),
                cols,
            },
        ))
    }

    /// Returns the input gradient and `[weight, bias]` gradients.
    pub fn backward(
        &self,
        x: &Tensor,
        cache: &ConvCache,
        grad_out: &Tensor,
    ) -> Result<(Tensor, [Tensor; 2]), NnError> {
        let [c, h, w] = cache.input_shape;
        let (ho, wo) = cache.out_hw;
        grad_out.expect_shape(&[self.out_channels, ho, wo], "conv output gradient")?;
        let p = ho * wo;
        let kk = c * self.kernel * self.kernel;
        let src = cache.cols.as_deref().unwrap_or(x.data());
        let mut gw = vec![0.0; self.out_channels * kk];
        gemm(
            self.out_channels,
            p,
            kk,
            grad_out.data(),
            false,
            src,
            true,
            &mut gw,
            0.0,
        );
        let gb: Vec<f64> = grad_out
            .data()
            .chunks_exact(p)
            .map(|r| r.iter().sum())
            .collect();
        let mut gcols = vec![0.0; kk * p];
        gemm(
            kk,
            self.out_channels,
            p,
            self.weight.data(),
            true,
            grad_out.data(),
            false,
            &mut gcols,
            0.0,
        );
        let gx = if self.is_pointwise() {
            gcols
        } else {
            col2im(
                &gcols,
                c,
                h,
                w,
                self.kernel,
                self.stride,
                self.padding,
                ho,
                wo,
            )
        };
        Ok((
            Tensor::from_vec(&[c, h, w], gx)?,
            [
                Tensor::from_vec(&[self.out_channels, kk], gw)?,
                Tensor::from_vec(&[self.out_channels], gb)?,
            ],
        ))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

fn as_chw(x: &Tensor, what: &str) -> Result<[usize; 3], NnError> {
    match x.shape() {
        [c, h, w] => Ok([*c, *h, *w]),
        s => Err(NnError::ShapeMismatch(format!(
            "{what}: expected [C, H, W], got {s:?}"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let p = ho * wo;
    let mut cols = vec![0.0; c * k * k * p];
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..][..w];
                    let dst = &mut row[oy * wo..][..wo];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let p = ho * wo;
    let mut x = vec![0.0; c * h * w];
    for ch in 0..c {
        let plane = &mut x[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..][..w];
                    let src = &row[oy * wo..][..wo];
                    for (ox, s) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
    x
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|v| v.max(0.0)).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Gradient through a ReLU given its *output*.
pub fn relu_backward(out: &Tensor, grad: &Tensor) -> Tensor {
    let data = out
        .data()
        .iter()
        .zip(grad.data())
        .map(|(o, g)| if *o > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor::from_vec(grad.shape(), data).expect("same shape")
}

pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|v| sigmoid_scalar(*v)).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Gradient through a sigmoid given its *output*.
pub fn sigmoid_backward(out: &Tensor, grad: &Tensor) -> Tensor {
    let data = out
        .data()
        .iter()
        .zip(grad.data())
        .map(|(s, g)| g * s * (1.0 - s))
        .collect();
    Tensor::from_vec(grad.shape(), data).expect("same shape")
}

/// Row-wise softmax of an `[n, k]` matrix.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let k = *x.shape().last().unwrap_or(&1);
    let mut out = x.data().to_vec();
    for row in out.chunks_exact_mut(k.max(1)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    Tensor::from_vec(x.shape(), out).expect("same shape")
}

/// Column-wise max over the rows of an `[n, c]` matrix; returns the pooled
/// `[c]` vector and the winning row per column (lowest row on ties).
pub fn max_pool_rows(x: &Tensor) -> (Vec<f64>, Vec<usize>) {
    let c = x.shape()[1];
    let mut best = vec![f64::NEG_INFINITY; c];
    let mut arg = vec![0usize; c];
    for (i, row) in x.rows().enumerate() {
        for j in 0..c {
            if row[j] > best[j] {
                best[j] = row[j];
                arg[j] = i;
            }
        }
    }
    (best, arg)
}

/// Nearest-neighbour upsampling of a `[c, h, w]` map by an integer factor.
pub fn upsample_nearest(x: &Tensor, factor: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ho, wo) = (h * factor, w * factor);
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        for oy in 0..ho {
            let src = &x.data()[(ch * h + oy / factor) * w..][..w];
            let dst = &mut out[(ch * ho + oy) * wo..][..wo];
            for (ox, d) in dst.iter_mut().enumerate() {
                *d = src[ox / factor];
            }
        }
    }
    Tensor::from_vec(&[c, ho, wo], out).expect("shape")
}

pub fn upsample_nearest_backward(grad: &Tensor, factor: usize) -> Tensor {
    let (c, ho, wo) = (grad.shape()[0], grad.shape()[1], grad.shape()[2]);
    let (h, w) = (ho / factor, wo / factor);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for oy in 0..ho {
            let src = &grad.data()[(ch * ho + oy) * wo..][..wo];
            let dst = &mut out[(ch * h + oy / factor) * w..][..w];
            for (ox, g) in src.iter().enumerate() {
                dst[ox / factor] += g;
            }
        }
    }
    Tensor::from_vec(&[c, h, w], out).expect("shape")
}

/// Source taps for one output coordinate of align-corners=false bilinear resampling.
fn bilinear_taps(o: usize, factor: usize, n: usize) -> (usize, usize, f64) {
    let s = ((o as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear upsampling of a `[c, h, w]` map by an integer factor
/// (half-pixel centres, clamped at the border).
pub fn upsample_bilinear(x: &Tensor, factor: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ho, wo) = (h * factor, w * factor);
    let xt: Vec<_> = (0..wo).map(|o| bilinear_taps(o, factor, w)).collect();
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        let plane = &x.data()[ch * h * w..][..h * w];
        for oy in 0..ho {
            let (y0, y1, fy) = bilinear_taps(oy, factor, h);
            let r0 = &plane[y0 * w..][..w];
            let r1 = &plane[y1 * w..][..w];
            let dst = &mut out[(ch * ho + oy) * wo..][..wo];
            for (d, &(x0, x1, fx)) in dst.iter_mut().zip(&xt) {
                let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
                let bot = r1[x0] * (1.0 - fx) + r1[x1] * fx;
                *d = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Tensor::from_vec(&[c, ho, wo], out).expect("shape")
}

pub fn upsample_bilinear_backward(grad: &Tensor, factor: usize) -> Tensor {
    let (c, ho, wo) = (grad.shape()[0], grad.shape()[1], grad.shape()[2]);
    let (h, w) = (ho / factor, wo / factor);
    let xt: Vec<_> = (0..wo).map(|o| bilinear_taps(o, factor, w)).collect();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        let plane = &mut out[ch * h * w..][..h * w];
        for oy in 0..ho {
            let (y0, y1, fy) = bilinear_taps(oy, factor, h);
            let src = &grad.data()[(ch * ho + oy) * wo..][..wo];
            for (g, &(x0, x1, fx)) in src.iter().zip(&xt) {
                plane[y0 * w + x0] += g * (1.0 - fx) * (1.0 - fy);
                plane[y0 * w + x1] += g * fx * (1.0 - fy);
                plane[y1 * w + x0] += g * (1.0 - fx) * fy;
                plane[y1 * w + x1] += g * fx * fy;
            }
        }
    }
    Tensor::from_vec(&[c, h, w], out).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    // Weighted sum of outputs gives a scalar whose gradient is the weight tensor.
    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (k, s, p) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (5, 2, 2)] {
            let conv = Conv2d::new(&mut rng, 2, 3, k, s, p);
            let x = random_tensor(&mut rng, &[2, 7, 9]);
            let (y, _) = conv.forward(&x).unwrap();
            let (ho, wo) = conv.output_size(7, 9);
            for o in 0..3 {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = conv.bias.data()[o];
                        for c in 0..2 {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - p as isize;
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if (0..7).contains(&iy) && (0..9).contains(&ix) {
                                        acc += conv.weight.data()
                                            [o * 2 * k * k + (c * k + ky) * k + kx]
                                            * x.data()[(c * 7 + iy as usize) * 9 + ix as usize];
                                    }
                                }
                            }
                        }
                        let got = y.data()[(o * ho + oy) * wo + ox];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (k, s, p) in [(3, 1, 1), (3, 2, 1), (1, 1, 0)] {
            let conv = Conv2d::new(&mut rng, 2, 3, k, s, p);
            let x = random_tensor(&mut rng, &[2, 6, 5]);
            let (y, cache) = conv.forward(&x).unwrap();
            let wgt = random_tensor(&mut rng, y.shape());
            let (gx, [gw, gb]) = conv.backward(&x, &cache, &wgt).unwrap();
            // input gradient
            let err = grad_check(
                |v| {
                    let xx = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
                    let (yy, _) = conv.forward(&xx).unwrap();
                    (dot(&yy, &wgt), gx.data().to_vec())
                },
                x.data(),
                1e-5,
            );
            assert!(err.max_relative_error < 1e-6, "{err:?}");
            // weight and bias gradients
            let mut flat = conv.weight.data().to_vec();
            flat.extend_from_slice(conv.bias.data());
            let mut analytic = gw.data().to_vec();
            analytic.extend_from_slice(gb.data());
            let err = grad_check(
                |v| {
                    let mut c2 = conv.clone();
                    let nw = c2.weight.len();
                    c2.weight.data_mut().copy_from_slice(&v[..nw]);
                    c2.bias.data_mut().copy_from_slice(&v[nw..]);
                    let (yy, _) = c2.forward(&x).unwrap();
                    (dot(&yy, &wgt), analytic.clone())
                },
                &flat,
                1e-5,
            );
            assert!(err.max_relative_error < 1e-6, "{err:?}");
        }
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lin = Linear::new(&mut rng, 4, 3, true);
        let x = random_tensor(&mut rng, &[5, 4]);
        let wgt = random_tensor(&mut rng, &[5, 3]);
        let (gx, _) = lin.backward(&x, &wgt).unwrap();
        let err = grad_check(
            |v| {
                let xx = Tensor::from_vec(&[5, 4], v.to_vec()).unwrap();
                (dot(&lin.forward(&xx).unwrap(), &wgt), gx.data().to_vec())
            },
            x.data(),
            1e-5,
        );
        assert!(err.max_relative_error < 1e-8);
    }

    #[test]
    fn upsampling_backward_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for factor in [2, 4] {
            let x = random_tensor(&mut rng, &[2, 3, 5]);
            let g = random_tensor(&mut rng, &[2, 3 * factor, 5 * factor]);
            let lhs = dot(&upsample_bilinear(&x, factor), &g);
            let rhs = dot(&x, &upsample_bilinear_backward(&g, factor));
            assert!((lhs - rhs).abs() < 1e-10);
            let lhs = dot(&upsample_nearest(&x, factor), &g);
            let rhs = dot(&x, &upsample_nearest_backward(&g, factor));
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn bilinear_preserves_constants() {
        let x = Tensor::full(&[1, 3, 4], 2.5);
        assert!(upsample_bilinear(&x, 4)
            .data()
            .iter()
            .all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn max_pool_prefers_lowest_row_on_ties() {
        let x = Tensor::from_vec(&[3, 2], vec![1.0, 5.0, 1.0, 2.0, 0.0, 5.0]).unwrap();
        let (v, a) = max_pool_rows(&x);
        assert_eq!(v, vec![1.0, 5.0]);
        assert_eq!(a, vec![0, 0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid_scalar(-1000.0), 0.0);
        assert_eq!(sigmoid_scalar(1000.0), 1.0);
        assert!((sigmoid_scalar(0.0) - 0.5).abs() < 1e-15);
    }
}
