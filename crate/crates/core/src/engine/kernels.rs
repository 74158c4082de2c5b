//! Direct CPU kernels, batch-major and row-major throughout.

use super::scalar::Real;

pub(crate) const BN_EPS: f64 = 1e-5;

/// Geometry of a 2-D sliding window (convolution or pooling).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    pub fn new(kernel: usize, stride: usize, padding: usize, in_h: usize, in_w: usize) -> Option<Self> {
        let span_h = in_h + 2 * padding;
        let span_w = in_w + 2 * padding;
        if kernel == 0 || stride == 0 || span_h < kernel || span_w < kernel {
            return None;
        }
        Some(Window {
            kernel,
            stride,
            padding,
            in_h,
            in_w,
            out_h: (span_h - kernel) / stride + 1,
            out_w: (span_w - kernel) / stride + 1,
        })
    }

    /// Output indices `o` in `[lo, hi)` for which `o·stride + k − padding`
    /// lands inside `[0, len)`.
    #[inline]
    fn valid(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = k as isize - self.padding as isize;
        // o*s + off >= 0  =>  o >= ceil(-off / s)
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // o*s + off <= len-1
        let top = len as isize - 1 - off;
        let hi = if top < 0 { 0 } else { top / s + 1 };
        let lo = lo.clamp(0, out_len as isize) as usize;
        let hi = hi.clamp(0, out_len as isize) as usize;
        (lo, hi.max(lo))
    }

    #[inline]
    fn rows(&self, ky: usize) -> (usize, usize) {
        self.valid(ky, self.in_h, self.out_h)
    }

    #[inline]
    fn cols(&self, kx: usize) -> (usize, usize) {
        self.valid(kx, self.in_w, self.out_w)
    }

    #[inline]
    fn src(&self, o: usize, k: usize) -> usize {
        o * self.stride + k - self.padding
    }
}

pub(crate) fn linear_forward<T: Real>(
    x: &[T],
    w: &[T],
    b: Option<&[T]>,
    batch: usize,
    inp: usize,
    out: usize,
) -> Vec<T> {
    let mut y = vec![T::zero(); batch * out];
    for n in 0..batch {
        let xr = &x[n * inp..(n + 1) * inp];
        for o in 0..out {
            let wr = &w[o * inp..(o + 1) * inp];
            let mut acc = match b {
                Some(b) => b[o],
                None => T::zero(),
            };
            for i in 0..inp {
                acc += wr[i] * xr[i];
            }
            y[n * out + o] = acc;
        }
    }
    y
}

/// Returns `(dx, dw, db)`.
pub(crate) fn linear_backward<T: Real>(
    x: &[T],
    w: &[T],
    gy: &[T],
    batch: usize,
    inp: usize,
    out: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut gx = vec![T::zero(); batch * inp];
    let mut gw = vec![T::zero(); out * inp];
    let mut gb = vec![T::zero(); out];
    for n in 0..batch {
        let xr = &x[n * inp..(n + 1) * inp];
        for o in 0..out {
            let g = gy[n * out + o];
            gb[o] += g;
            let wr = &w[o * inp..(o + 1) * inp];
            let gxr = &mut gx[n * inp..(n + 1) * inp];
            for i in 0..inp {
                gxr[i] += g * wr[i];
            }
            let gwr = &mut gw[o * inp..(o + 1) * inp];
            for i in 0..inp {
                gwr[i] += g * xr[i];
            }
        }
    }
    (gx, gw, gb)
}

pub(crate) fn conv2d_forward<T: Real>(
    x: &[T],
    w: &[T],
    b: Option<&[T]>,
    batch: usize,
    cin: usize,
    cout: usize,
    win: &Window,
) -> Vec<T> {
    let (ih, iw, oh, ow, k) = (win.in_h, win.in_w, win.out_h, win.out_w, win.kernel);
    let mut y = vec![T::zero(); batch * cout * oh * ow];
    for n in 0..batch {
        for o in 0..cout {
            let yp = &mut y[(n * cout + o) * oh * ow..(n * cout + o + 1) * oh * ow];
            if let Some(b) = b {
                for v in yp.iter_mut() {
                    *v = b[o];
                }
            }
            for c in 0..cin {
                let xp = &x[(n * cin + c) * ih * iw..(n * cin + c + 1) * ih * iw];
                for ky in 0..k {
                    let (ylo, yhi) = win.rows(ky);
                    for kx in 0..k {
                        let wv = w[((o * cin + c) * k + ky) * k + kx];
                        let (xlo, xhi) = win.cols(kx);
                        for oy in ylo..yhi {
                            let iy = win.src(oy, ky);
                            let yrow = &mut yp[oy * ow..(oy + 1) * ow];
                            let xrow = &xp[iy * iw..(iy + 1) * iw];
                            for ox in xlo..xhi {
                                yrow[ox] += wv * xrow[win.src(ox, kx)];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns `(dx, dw, db)`.
pub(crate) fn conv2d_backward<T: Real>(
    x: &[T],
    w: &[T],
    gy: &[T],
    batch: usize,
    cin: usize,
    cout: usize,
    win: &Window,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (ih, iw, oh, ow, k) = (win.in_h, win.in_w, win.out_h, win.out_w, win.kernel);
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = vec![T::zero(); cout];
    for n in 0..batch {
        for o in 0..cout {
            let gp = &gy[(n * cout + o) * oh * ow..(n * cout + o + 1) * oh * ow];
            let mut s = T::zero();
            for &g in gp {
                s += g;
            }
            gb[o] += s;
            for c in 0..cin {
                let base = (n * cin + c) * ih * iw;
                for ky in 0..k {
                    let (ylo, yhi) = win.rows(ky);
                    for kx in 0..k {
                        let widx = ((o * cin + c) * k + ky) * k + kx;
                        let wv = w[widx];
                        let (xlo, xhi) = win.cols(kx);
                        let mut acc = T::zero();
                        for oy in ylo..yhi {
                            let iy = win.src(oy, ky);
                            let grow = &gp[oy * ow..(oy + 1) * ow];
                            let row = base + iy * iw;
                            for ox in xlo..xhi {
                                let ix = row + win.src(ox, kx);
                                let g = grow[ox];
                                acc += g * x[ix];
                                gx[ix] += g * wv;
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

/// Average pooling that divides by the number of in-bounds taps.
pub(crate) fn avgpool_forward<T: Real>(x: &[T], planes: usize, win: &Window) -> Vec<T> {
    let (ih, iw, oh, ow) = (win.in_h, win.in_w, win.out_h, win.out_w);
    let mut y = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let xp = &x[p * ih * iw..(p + 1) * ih * iw];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                let mut count = 0usize;
                for ky in 0..win.kernel {
                    let iy = (oy * win.stride + ky) as isize - win.padding as isize;
                    if iy < 0 || iy >= ih as isize {
                        continue;
                    }
                    for kx in 0..win.kernel {
                        let ix = (ox * win.stride + kx) as isize - win.padding as isize;
                        if ix < 0 || ix >= iw as isize {
                            continue;
                        }
                        acc += xp[iy as usize * iw + ix as usize];
                        count += 1;
                    }
                }
                y[(p * oh + oy) * ow + ox] = acc / T::from_f64(count.max(1) as f64);
            }
        }
    }
    y
}

pub(crate) fn avgpool_backward<T: Real>(gy: &[T], planes: usize, win: &Window) -> Vec<T> {
    let (ih, iw, oh, ow) = (win.in_h, win.in_w, win.out_h, win.out_w);
    let mut gx = vec![T::zero(); planes * ih * iw];
    for p in 0..planes {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut taps = Vec::with_capacity(win.kernel * win.kernel);
                for ky in 0..win.kernel {
                    let iy = (oy * win.stride + ky) as isize - win.padding as isize;
                    if iy < 0 || iy >= ih as isize {
                        continue;
                    }
                    for kx in 0..win.kernel {
                        let ix = (ox * win.stride + kx) as isize - win.padding as isize;
                        if ix < 0 || ix >= iw as isize {
                            continue;
                        }
                        taps.push(iy as usize * iw + ix as usize);
                    }
                }
                let g = gy[(p * oh + oy) * ow + ox] / T::from_f64(taps.len().max(1) as f64);
                for t in taps {
                    gx[p * ih * iw + t] += g;
                }
            }
        }
    }
    gx
}

/// Per-channel statistics cached by a batch-statistics normalization.
#[derive(Clone, Debug)]
pub(crate) struct NormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Batch normalization over `(batch, spatial)` for each channel.
pub(crate) fn batchnorm_forward<T: Real>(
    x: &[T],
    gamma: Option<&[T]>,
    beta: Option<&[T]>,
    batch: usize,
    channels: usize,
    spatial: usize,
) -> (Vec<T>, NormCache<T>) {
    let count = T::from_f64((batch * spatial) as f64);
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(channels);
    for c in 0..channels {
        let mut sum = T::zero();
        for n in 0..batch {
            for &v in &x[(n * channels + c) * spatial..(n * channels + c + 1) * spatial] {
                sum += v;
            }
        }
        let mean = sum / count;
        let mut var = T::zero();
        for n in 0..batch {
            for &v in &x[(n * channels + c) * spatial..(n * channels + c + 1) * spatial] {
                let d = v - mean;
                var += d * d;
            }
        }
        let istd = T::one() / (var / count + T::from_f64(BN_EPS)).sqrt();
        inv_std.push(istd);
        let g = gamma.map_or(T::one(), |g| g[c]);
        let b = beta.map_or(T::zero(), |b| b[c]);
        for n in 0..batch {
            let r = (n * channels + c) * spatial..(n * channels + c + 1) * spatial;
            for i in r {
                let h = (x[i] - mean) * istd;
                xhat[i] = h;
                y[i] = g * h + b;
            }
        }
    }
    (y, NormCache { xhat, inv_std })
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn batchnorm_backward<T: Real>(
    gy: &[T],
    cache: &NormCache<T>,
    gamma: Option<&[T]>,
    batch: usize,
    channels: usize,
    spatial: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let m = T::from_f64((batch * spatial) as f64);
    let mut gx = vec![T::zero(); gy.len()];
    let mut ggamma = vec![T::zero(); channels];
    let mut gbeta = vec![T::zero(); channels];
    for c in 0..channels {
        let g = gamma.map_or(T::one(), |g| g[c]);
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for n in 0..batch {
            for i in (n * channels + c) * spatial..(n * channels + c + 1) * spatial {
                sum_g += gy[i];
                sum_gx += gy[i] * cache.xhat[i];
            }
        }
        ggamma[c] = sum_gx;
        gbeta[c] = sum_g;
        let scale = g * cache.inv_std[c] / m;
        for n in 0..batch {
            for i in (n * channels + c) * spatial..(n * channels + c + 1) * spatial {
                gx[i] = scale * (m * gy[i] - sum_g - cache.xhat[i] * sum_gx);
            }
        }
    }
    (gx, ggamma, gbeta)
}

/// Graph convolution `Â · H · Wᵀ (+ b)` applied independently to each of
/// `graphs` node-feature matrices of shape `[nodes, fin]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn graphconv_forward<T: Real>(
    h: &[T],
    adj: &[f64],
    w: &[T],
    b: Option<&[T]>,
    graphs: usize,
    nodes: usize,
    fin: usize,
    fout: usize,
) -> Vec<T> {
    let hw = linear_forward(h, w, None, graphs * nodes, fin, fout);
    let mut y = vec![T::zero(); graphs * nodes * fout];
    for g in 0..graphs {
        for i in 0..nodes {
            let yr = &mut y[(g * nodes + i) * fout..(g * nodes + i + 1) * fout];
            if let Some(b) = b {
                yr.copy_from_slice(b);
            }
            for j in 0..nodes {
                let a = adj[i * nodes + j];
                if a == 0.0 {
                    continue;
                }
                let a = T::from_f64(a);
                let src = &hw[(g * nodes + j) * fout..(g * nodes + j + 1) * fout];
                for o in 0..fout {
                    yr[o] += a * src[o];
                }
            }
        }
    }
    y
}

/// Returns `(dh, dw, db)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn graphconv_backward<T: Real>(
    h: &[T],
    adj: &[f64],
    w: &[T],
    gy: &[T],
    graphs: usize,
    nodes: usize,
    fin: usize,
    fout: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    // y = A·M + b with M = H·Wᵀ; dM = Aᵀ·dy
    let mut gm = vec![T::zero(); graphs * nodes * fout];
    let mut gb = vec![T::zero(); fout];
    for g in 0..graphs {
        for i in 0..nodes {
            let gyr = &gy[(g * nodes + i) * fout..(g * nodes + i + 1) * fout];
            for o in 0..fout {
                gb[o] += gyr[o];
            }
            for j in 0..nodes {
                let a = adj[i * nodes + j];
                if a == 0.0 {
                    continue;
                }
                let a = T::from_f64(a);
                let gmr = &mut gm[(g * nodes + j) * fout..(g * nodes + j + 1) * fout];
                for o in 0..fout {
                    gmr[o] += a * gyr[o];
                }
            }
        }
    }
    let (gh, gw, _) = linear_backward(h, w, &gm, graphs * nodes, fin, fout);
    (gh, gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_ranges_match_bruteforce() {
        for k in 1..=3 {
            for s in 1..=2 {
                for p in 0..=1 {
                    for len in 1..=6 {
                        let Some(win) = Window::new(k, s, p, len, len) else { continue };
                        for kk in 0..k {
                            let (lo, hi) = win.rows(kk);
                            let brute: Vec<usize> = (0..win.out_h)
                                .filter(|&o| {
                                    let i = (o * s + kk) as isize - p as isize;
                                    i >= 0 && i < len as isize
                                })
                                .collect();
                            assert_eq!((lo..hi).collect::<Vec<_>>(), brute, "k={k} s={s} p={p} len={len}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn hand_convolution_all_ones() {
        let win = Window::new(3, 1, 1, 3, 3).unwrap();
        let x = vec![1.0; 9];
        let w = vec![1.0; 9];
        let y = conv2d_forward(&x, &w, None, 1, 1, 1, &win);
        assert_eq!(y, vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn strided_output_size() {
        let win = Window::new(3, 2, 1, 8, 8).unwrap();
        assert_eq!((win.out_h, win.out_w), (4, 4));
        let win = Window::new(3, 2, 1, 5, 5).unwrap();
        assert_eq!((win.out_h, win.out_w), (3, 3));
    }

    #[test]
    fn avgpool_excludes_padding() {
        let win = Window::new(3, 1, 1, 2, 2).unwrap();
        let y = avgpool_forward(&[1.0, 2.0, 3.0, 4.0], 1, &win);
        assert_eq!(y, vec![2.5; 4]);
    }

    #[test]
    fn batchnorm_output_is_standardized() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0];
        let (y, _) = batchnorm_forward(&x, None, None, 2, 1, 4);
        let mean: f64 = y.iter().sum::<f64>() / 8.0;
        let var: f64 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }
}
