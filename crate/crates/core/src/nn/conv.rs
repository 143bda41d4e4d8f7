//! 2D convolution as `im2col` followed by a single matmul.
//!
//! candle's native CPU convolution backward goes through a direct transposed
//! convolution that is several times slower than the forward pass. Here the
//! patch extraction is a custom op whose backward is the matching `col2im`
//! scatter, and the heavy lifting is left to candle's gemm-backed matmul,
//! which differentiates itself.

use candle_core::{CpuStorage, CustomOp1, DType, Layout, Shape, Tensor};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn out_len(&self, n: usize) -> usize {
        (n + 2 * self.padding - self.kernel) / self.stride + 1
    }

}

/// Patch rows: `dst[(b * L + oy * ow + ox) * C k k + (c * k + ki) * k + kj]`
/// holds the input value under tap `(c, ki, kj)` of output pixel `(oy, ox)`,
/// zero where the tap falls in the padding.
fn im2col<T: Copy + Default>(src: &[T], dims: (usize, usize, usize, usize), g: Geometry) -> Vec<T> {
    let (n, c, h, w) = dims;
    let (oh, ow) = (g.out_len(h), g.out_len(w));
    let k = g.kernel;
    let row_len = c * k * k;
    let mut dst = vec![T::default(); n * oh * ow * row_len];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &mut dst[((b * oh + oy) * ow + ox) * row_len..][..row_len];
                for ch in 0..c {
                    let plane = &src[(b * c + ch) * h * w..][..h * w];
                    for ki in 0..k {
                        let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let line = &plane[iy as usize * w..][..w];
                        let taps = &mut row[(ch * k + ki) * k..][..k];
                        let x0 = (ox * g.stride) as isize - g.padding as isize;
                        if x0 >= 0 && x0 as usize + k <= w {
                            taps.copy_from_slice(&line[x0 as usize..][..k]);
                            continue;
                        }
                        for (kj, tap) in taps.iter_mut().enumerate() {
                            let ix = x0 + kj as isize;
                            if ix >= 0 && ix < w as isize {
                                *tap = line[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    dst
}

/// Adjoint of [`im2col`]: scatter-adds patch rows back onto the image.
fn col2im<T: Copy + Default + std::ops::AddAssign>(
    cols: &[T],
    dims: (usize, usize, usize, usize),
    g: Geometry,
) -> Vec<T> {
    let (n, c, h, w) = dims;
    let (oh, ow) = (g.out_len(h), g.out_len(w));
    let k = g.kernel;
    let row_len = c * k * k;
    let mut dst = vec![T::default(); n * c * h * w];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &cols[((b * oh + oy) * ow + ox) * row_len..][..row_len];
                for ch in 0..c {
                    let plane = &mut dst[(b * c + ch) * h * w..][..h * w];
                    for ki in 0..k {
                        let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let line = &mut plane[iy as usize * w..][..w];
                        let taps = &row[(ch * k + ki) * k..][..k];
                        let x0 = (ox * g.stride) as isize - g.padding as isize;
                        if x0 >= 0 && x0 as usize + k <= w {
                            for (d, tap) in line[x0 as usize..][..k].iter_mut().zip(taps) {
                                *d += *tap;
                            }
                            continue;
                        }
                        for (kj, tap) in taps.iter().enumerate() {
                            let ix = x0 + kj as isize;
                            if ix >= 0 && ix < w as isize {
                                line[ix as usize] += *tap;
                            }
                        }
                    }
                }
            }
        }
    }
    dst
}

fn contiguous<'a, T>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&data[start..end]),
        None => candle_core::bail!("im2col expects a contiguous input"),
    }
}

struct Im2Col(Geometry);

impl CustomOp1 for Im2Col {
    fn name(&self) -> &'static str {
        "im2col"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let dims = layout.shape().dims4()?;
        let (n, c, h, w) = dims;
        let g = self.0;
        let shape = Shape::from((n * g.out_len(h) * g.out_len(w), c * g.kernel * g.kernel));
        let out = match storage {
            CpuStorage::F32(v) => CpuStorage::F32(im2col(contiguous(v, layout)?, dims, g)),
            CpuStorage::F64(v) => CpuStorage::F64(im2col(contiguous(v, layout)?, dims, g)),
            other => candle_core::bail!("im2col: unsupported dtype {:?}", candle_core::backend::BackendStorage::dtype(other)),
        };
        Ok((out, shape))
    }

    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let op = Col2Im { geometry: self.0, dims: arg.dims4()? };
        Ok(Some(grad.contiguous()?.apply_op1_no_bwd(&op)?))
    }
}

struct Col2Im {
    geometry: Geometry,
    dims: (usize, usize, usize, usize),
}

impl CustomOp1 for Col2Im {
    fn name(&self) -> &'static str {
        "col2im"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let (g, dims) = (self.geometry, self.dims);
        let out = match storage {
            CpuStorage::F32(v) => CpuStorage::F32(col2im(contiguous(v, layout)?, dims, g)),
            CpuStorage::F64(v) => CpuStorage::F64(col2im(contiguous(v, layout)?, dims, g)),
            other => candle_core::bail!("col2im: unsupported dtype {:?}", candle_core::backend::BackendStorage::dtype(other)),
        };
        Ok((out, Shape::from(dims)))
    }
}

/// Differentiable 2D convolution of `x: N x C x H x W` with
/// `weight: O x C x k x k` and optional `bias: O`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (o, wc, kh, kw) = weight.dims4()?;
    if wc != c || kh != kw {
        return Err(invalid(format!(
            "conv weight {o}x{wc}x{kh}x{kw} does not fit a {c}-channel input"
        )));
    }
    let g = Geometry { kernel: kh, stride, padding };
    if h + 2 * padding < kh || w + 2 * padding < kh {
        return Err(invalid(format!("{h}x{w} input is smaller than the {kh}x{kh} kernel")));
    }
    let (oh, ow) = (g.out_len(h), g.out_len(w));
    let cols = x.contiguous()?.apply_op1(Im2Col(g))?;
    let y = cols.matmul(&weight.reshape((o, c * kh * kw))?.t()?)?;
    let y = y.reshape((n, oh * ow, o))?.transpose(1, 2)?.reshape((n, o, oh, ow))?;
    Ok(match bias {
        Some(b) => y.broadcast_add(&b.reshape((1, o, 1, 1))?)?,
        None => y,
    })
}

/// A convolution layer holding its parameters.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.weight, self.bias.as_ref(), self.stride, self.padding)
    }

    pub fn to_dtype(&self, dtype: DType) -> Result<Self> {
        Ok(Self {
            weight: self.weight.to_dtype(dtype)?,
            bias: self.bias.as_ref().map(|b| b.to_dtype(dtype)).transpose()?,
            ..*self
        })
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&x.affine(slope, 0.0)?)?)
}

/// 2x2 stride-2 max pooling of `N x C x H x W` as a reshape and two max
/// reductions, dropping a trailing odd row or column.
pub fn max_pool2x2(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (oh, ow) = (h / 2, w / 2);
    let x = x.narrow(2, 0, 2 * oh)?.narrow(3, 0, 2 * ow)?;
    Ok(x.reshape((n, c, oh, 2, ow, 2))?.max(5)?.max(3)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};
    use rand::{Rng, SeedableRng};

    fn random(shape: &[usize], rng: &mut rand_chacha::ChaCha8Rng) -> Tensor {
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    #[test]
    fn max_pool_matches_candle_forward_and_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x = random(&[2, 3, 7, 6], &mut rng);
        let ours = max_pool2x2(&x).unwrap();
        let reference = x.max_pool2d(2).unwrap();
        assert_eq!(ours.dims(), reference.dims());
        let diff = (&ours - &reference).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f64>().unwrap();
        assert_eq!(diff, 0.0);

        let var = Var::from_tensor(&x).unwrap();
        let weights = random(&[2, 3, 3, 3], &mut rng);
        let f = |x: &Tensor| (max_pool2x2(x).unwrap() * &weights).unwrap().sum_all().unwrap();
        let grad = f(var.as_tensor()).backward().unwrap().get(var.as_tensor()).unwrap().flatten_all().unwrap();
        let grad = grad.to_vec1::<f64>().unwrap();
        let base = x.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for i in 0..base.len() {
            let at = |d: f64| {
                let mut p = base.clone();
                p[i] += d;
                f(&Tensor::from_vec(p, x.shape(), &Device::Cpu).unwrap()).to_scalar::<f64>().unwrap()
            };
            let fd = (at(1e-6) - at(-1e-6)) / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-6, "element {i}: autograd {} vs {fd}", grad[i]);
        }
    }

    /// Direct nested-loop convolution.
    fn naive(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
        let (n, c, h, wd) = x.dims4().unwrap();
        let (o, _, k, _) = w.dims4().unwrap();
        let xv = x.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let wv = w.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; n * o * oh * ow];
        for b in 0..n {
            for oc in 0..o {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = 0.0;
                        for ic in 0..c {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (y * stride + ki) as isize - pad as isize;
                                    let ix = (xx * stride + kj) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += xv[((b * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * wv[((oc * c + ic) * k + ki) * k + kj];
                                }
                            }
                        }
                        out[((b * o + oc) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &(k, stride, pad, h, w) in &[(3, 1, 1, 6, 5), (4, 2, 1, 8, 8), (3, 1, 0, 5, 7), (4, 1, 1, 5, 5), (1, 1, 0, 3, 4)] {
            let x = random(&[2, 3, h, w], &mut rng);
            let wt = random(&[4, 3, k, k], &mut rng);
            let got = conv2d(&x, &wt, None, stride, pad).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let want = naive(&x, &wt, stride, pad);
            assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "k={k} s={stride} p={pad}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for &(k, stride, pad) in &[(3, 1, 1), (4, 2, 1)] {
            let x = Var::from_tensor(&random(&[2, 2, 6, 6], &mut rng)).unwrap();
            let wt = Var::from_tensor(&random(&[3, 2, k, k], &mut rng)).unwrap();
            let loss = |x: &Tensor, w: &Tensor| conv2d(x, w, None, stride, pad).unwrap().sqr().unwrap().sum_all().unwrap();
            let grads = loss(x.as_tensor(), wt.as_tensor()).backward().unwrap();
            let gx = grads.get(&x).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let gw = grads.get(&wt).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let check = |base: &Tensor, analytic: &[f64], other: &Tensor, wrt_x: bool| {
                let v = base.flatten_all().unwrap().to_vec1::<f64>().unwrap();
                for i in 0..v.len() {
                    let eval = |d: f64| {
                        let mut p = v.clone();
                        p[i] += d;
                        let t = Tensor::from_vec(p, base.shape(), &Device::Cpu).unwrap();
                        let l = if wrt_x { loss(&t, other) } else { loss(other, &t) };
                        l.to_scalar::<f64>().unwrap()
                    };
                    let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                    assert!((fd - analytic[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{fd} vs {}", analytic[i]);
                }
            };
            check(x.as_tensor(), &gx, wt.as_tensor(), true);
            check(wt.as_tensor(), &gw, x.as_tensor(), false);
        }
    }

    #[test]
    fn rejects_mismatched_channels() {
        let x = Tensor::zeros((1, 3, 8, 8), DType::F32, &Device::Cpu).unwrap();
        let w = Tensor::zeros((4, 2, 3, 3), DType::F32, &Device::Cpu).unwrap();
        assert!(conv2d(&x, &w, None, 1, 1).is_err());
    }
}
