//! Per-sample compute kernels. Feature maps are planar `C x H x W`.

use super::tensor::Scalar;

const TILE: usize = 512;

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (o, v) in y.iter_mut().zip(x) {
        *o += alpha * *v;
    }
}

/// `out[M x P] += a[M x K] * x[K x P]`
pub(crate) fn gemm_acc<T: Scalar>(m: usize, k: usize, p: usize, a: &[T], x: &[T], out: &mut [T]) {
    let mut t0 = 0;
    while t0 < p {
        let t1 = (t0 + TILE).min(p);
        for i in 0..m {
            let orow = &mut out[i * p + t0..i * p + t1];
            for kk in 0..k {
                axpy(a[i * k + kk], &x[kk * p + t0..kk * p + t1], orow);
            }
        }
        t0 = t1;
    }
}

/// `out[K x P] += a[M x K]^T * y[M x P]`
pub(crate) fn gemm_tn_acc<T: Scalar>(m: usize, k: usize, p: usize, a: &[T], y: &[T], out: &mut [T]) {
    let mut t0 = 0;
    while t0 < p {
        let t1 = (t0 + TILE).min(p);
        for kk in 0..k {
            let orow = &mut out[kk * p + t0..kk * p + t1];
            for i in 0..m {
                axpy(a[i * k + kk], &y[i * p + t0..i * p + t1], orow);
            }
        }
        t0 = t1;
    }
}

/// `out[M x K] += y[M x P] * x[K x P]^T`
pub(crate) fn gemm_nt_acc<T: Scalar>(m: usize, k: usize, p: usize, y: &[T], x: &[T], out: &mut [T]) {
    let mut t0 = 0;
    while t0 < p {
        let t1 = (t0 + TILE).min(p);
        for i in 0..m {
            let yrow = &y[i * p + t0..i * p + t1];
            for kk in 0..k {
                out[i * k + kk] += dot(yrow, &x[kk * p + t0..kk * p + t1]);
            }
        }
        t0 = t1;
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub s: usize,
    pub p: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn pointwise(&self) -> bool {
        self.k == 1 && self.s == 1 && self.p == 0
    }

    /// Output column range `[lo, hi)` whose input column `ox*s + kx - p`
    /// is in bounds.
    #[inline]
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        let lo = if self.p > kx { (self.p - kx).div_ceil(self.s) } else { 0 };
        let hi = if self.w + self.p > kx {
            ((self.w - 1 + self.p - kx) / self.s + 1).min(self.ow)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    #[inline]
    fn iy(&self, oy: usize, ky: usize) -> Option<usize> {
        let v = (oy * self.s + ky) as isize - self.p as isize;
        (v >= 0 && (v as usize) < self.h).then_some(v as usize)
    }
}

fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], col: &mut Vec<T>) {
    let plane = g.oh * g.ow;
    col.clear();
    col.resize(g.cin * g.k * g.k * plane, T::zero());
    for ci in 0..g.cin {
        let xin = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * plane;
                let (lo, hi) = g.ox_range(kx);
                for oy in 0..g.oh {
                    let Some(iy) = g.iy(oy, ky) else { continue };
                    let dst = &mut col[row + oy * g.ow..row + (oy + 1) * g.ow];
                    let src = &xin[iy * g.w..(iy + 1) * g.w];
                    for ox in lo..hi {
                        dst[ox] = src[ox * g.s + kx - g.p];
                    }
                }
            }
        }
    }
}

fn col2im_acc<T: Scalar>(g: &ConvGeom, col: &[T], dx: &mut [T]) {
    let plane = g.oh * g.ow;
    for ci in 0..g.cin {
        let din = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * plane;
                let (lo, hi) = g.ox_range(kx);
                for oy in 0..g.oh {
                    let Some(iy) = g.iy(oy, ky) else { continue };
                    let src = &col[row + oy * g.ow..row + (oy + 1) * g.ow];
                    let dst = &mut din[iy * g.w..(iy + 1) * g.w];
                    for ox in lo..hi {
                        dst[ox * g.s + kx - g.p] += src[ox];
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward<T: Scalar>(g: &ConvGeom, w: &[T], b: Option<&[T]>, x: &[T], y: &mut [T], col: &mut Vec<T>) {
    let plane = g.oh * g.ow;
    match b {
        Some(b) => {
            for (co, row) in y.chunks_exact_mut(plane).enumerate() {
                row.fill(b[co]);
            }
        }
        None => y.fill(T::zero()),
    }
    let kk = g.cin * g.k * g.k;
    if g.pointwise() {
        gemm_acc(g.cout, kk, plane, w, x, y);
    } else {
        im2col(g, x, col);
        gemm_acc(g.cout, kk, plane, w, col, y);
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    g: &ConvGeom,
    w: &[T],
    x: &[T],
    dy: &[T],
    dw: &mut [T],
    db: Option<&mut [T]>,
    dx: Option<&mut [T]>,
    col: &mut Vec<T>,
) {
    let plane = g.oh * g.ow;
    let kk = g.cin * g.k * g.k;
    if let Some(db) = db {
        for (co, row) in dy.chunks_exact(plane).enumerate() {
            db[co] += row.iter().copied().sum::<T>();
        }
    }
    if g.pointwise() {
        gemm_nt_acc(g.cout, kk, plane, dy, x, dw);
        if let Some(dx) = dx {
            gemm_tn_acc(g.cout, kk, plane, w, dy, dx);
        }
    } else {
        im2col(g, x, col);
        gemm_nt_acc(g.cout, kk, plane, dy, col, dw);
        if let Some(dx) = dx {
            col.iter_mut().for_each(|v| *v = T::zero());
            gemm_tn_acc(g.cout, kk, plane, w, dy, col);
            col2im_acc(g, col, dx);
        }
    }
}

pub(crate) fn depthwise_forward<T: Scalar>(g: &ConvGeom, w: &[T], b: Option<&[T]>, x: &[T], y: &mut [T]) {
    let (hw, ohw, kk) = (g.h * g.w, g.oh * g.ow, g.k * g.k);
    for c in 0..g.cin {
        let xin = &x[c * hw..(c + 1) * hw];
        let yout = &mut y[c * ohw..(c + 1) * ohw];
        yout.fill(b.map_or(T::zero(), |b| b[c]));
        let wc = &w[c * kk..(c + 1) * kk];
        for oy in 0..g.oh {
            let orow = &mut yout[oy * g.ow..(oy + 1) * g.ow];
            for ky in 0..g.k {
                let Some(iy) = g.iy(oy, ky) else { continue };
                let irow = &xin[iy * g.w..(iy + 1) * g.w];
                for kx in 0..g.k {
                    let wv = wc[ky * g.k + kx];
                    let (lo, hi) = g.ox_range(kx);
                    if g.s == 1 {
                        let off = kx as isize - g.p as isize;
                        let src = &irow[(lo as isize + off) as usize..(hi as isize + off) as usize];
                        axpy(wv, src, &mut orow[lo..hi]);
                    } else {
                        for ox in lo..hi {
                            orow[ox] += wv * irow[ox * g.s + kx - g.p];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn depthwise_backward<T: Scalar>(
    g: &ConvGeom,
    w: &[T],
    x: &[T],
    dy: &[T],
    dw: &mut [T],
    db: Option<&mut [T]>,
    mut dx: Option<&mut [T]>,
) {
    let (hw, ohw, kk) = (g.h * g.w, g.oh * g.ow, g.k * g.k);
    if let Some(db) = db {
        for (c, row) in dy.chunks_exact(ohw).enumerate() {
            db[c] += row.iter().copied().sum::<T>();
        }
    }
    for c in 0..g.cin {
        let xin = &x[c * hw..(c + 1) * hw];
        let dyc = &dy[c * ohw..(c + 1) * ohw];
        let wc = &w[c * kk..(c + 1) * kk];
        let dwc = &mut dw[c * kk..(c + 1) * kk];
        for oy in 0..g.oh {
            let drow = &dyc[oy * g.ow..(oy + 1) * g.ow];
            for ky in 0..g.k {
                let Some(iy) = g.iy(oy, ky) else { continue };
                let irow = &xin[iy * g.w..(iy + 1) * g.w];
                for kx in 0..g.k {
                    let (lo, hi) = g.ox_range(kx);
                    if g.s == 1 {
                        let off = kx as isize - g.p as isize;
                        let (a, b) = ((lo as isize + off) as usize, (hi as isize + off) as usize);
                        dwc[ky * g.k + kx] += dot(&drow[lo..hi], &irow[a..b]);
                    } else {
                        let mut acc = T::zero();
                        for ox in lo..hi {
                            acc += drow[ox] * irow[ox * g.s + kx - g.p];
                        }
                        dwc[ky * g.k + kx] += acc;
                    }
                }
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxc = &mut dx[c * hw..(c + 1) * hw];
            for oy in 0..g.oh {
                let drow = &dyc[oy * g.ow..(oy + 1) * g.ow];
                for ky in 0..g.k {
                    let Some(iy) = g.iy(oy, ky) else { continue };
                    let xrow = &mut dxc[iy * g.w..(iy + 1) * g.w];
                    for kx in 0..g.k {
                        let wv = wc[ky * g.k + kx];
                        let (lo, hi) = g.ox_range(kx);
                        if g.s == 1 {
                            let off = kx as isize - g.p as isize;
                            let (a, b) = ((lo as isize + off) as usize, (hi as isize + off) as usize);
                            axpy(wv, &drow[lo..hi], &mut xrow[a..b]);
                        } else {
                            for ox in lo..hi {
                                xrow[ox * g.s + kx - g.p] += wv * drow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn relu6<T: Scalar>(v: T) -> T {
    if v.is_nan() {
        return v;
    }
    v.max(T::zero()).min(T::lit(6.0))
}

/// Logistic function, clamped to stay strictly inside (0, 1) at the
/// working precision.
#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v.is_nan() {
        return v;
    }
    let y = T::one() / (T::one() + (-v).exp());
    let hi = T::one() - T::epsilon() / T::lit(2.0);
    y.max(T::min_positive_value()).min(hi)
}
