//! Raw compute loops shared by the tape's forward and adjoint passes.
//!
//! Everything here works on flat row-major slices; shape bookkeeping lives in
//! the callers.

use crate::tensor::Scalar;

/// `c[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_nn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            c[i * n + j] = c[i * n + j] + dot(a_row, b_row);
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
pub(crate) fn gemm_tn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let c_row = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + av * bv;
            }
        }
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] = acc[l] + a[c * 4 + l] * b[c * 4 + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s = s + a[i] * b[i];
    }
    s
}

/// Row-wise max-subtracted softmax over rows of width `cols`.
pub(crate) fn softmax_rows<T: Scalar>(x: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (src, dst) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = src.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            sum = sum + *d;
        }
        let inv = T::one() / sum;
        dst.iter_mut().for_each(|d| *d = *d * inv);
    }
    out
}

/// Adjoint of a row softmax given its output `y`: `dx = y ⊙ (dy − ⟨dy, y⟩)`.
pub(crate) fn softmax_rows_backward<T: Scalar>(y: &[T], dy: &[T], cols: usize, dx: &mut [T]) {
    for ((yr, dyr), dxr) in y
        .chunks_exact(cols)
        .zip(dy.chunks_exact(cols))
        .zip(dx.chunks_exact_mut(cols))
    {
        let inner = dot(yr, dyr);
        for ((d, &yv), &gv) in dxr.iter_mut().zip(yr).zip(dyr) {
            *d = *d + yv * (gv - inner);
        }
    }
}

/// Geometry of a 3D cross-correlation over `[B, C, D, H, W]` inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: usize,
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    pub fn output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
        let padded = input + 2 * pad;
        if padded < kernel || stride == 0 {
            return None;
        }
        Some((padded - kernel) / stride + 1)
    }
}

/// Output indices `o` in `lo..hi` for which `o*stride + k - pad` lands inside `[0, len)`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    let (k, pad, s) = (k as i64, pad as i64, stride as i64);
    let lo = if pad > k { (pad - k + s - 1) / s } else { 0 };
    let top = in_len as i64 - 1 + pad - k;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top / s + 1).min(out_len as i64);
    (lo as usize, hi.max(lo) as usize)
}

/// Visits every (patch row, output position, input index) triple of the
/// unfolded input for one batch item. Padding taps are never visited.
#[inline]
fn for_each_tap(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize)) {
    let [d_in, h_in, w_in] = g.input;
    let [od, oh, ow] = g.output;
    let [kd, kh, kw] = g.kernel;
    let in_vol = d_in * h_in * w_in;
    for ci in 0..g.c_in {
        for z in 0..kd {
            let (zlo, zhi) = valid_range(od, d_in, g.stride, z, g.pad[0]);
            for y in 0..kh {
                let (ylo, yhi) = valid_range(oh, h_in, g.stride, y, g.pad[1]);
                for xk in 0..kw {
                    let (xlo, xhi) = valid_range(ow, w_in, g.stride, xk, g.pad[2]);
                    let row = ((ci * kd + z) * kh + y) * kw + xk;
                    for pz in zlo..zhi {
                        let iz = pz * g.stride + z - g.pad[0];
                        for py in ylo..yhi {
                            let iy = py * g.stride + y - g.pad[1];
                            let ibase = ci * in_vol + (iz * h_in + iy) * w_in;
                            let obase = (pz * oh + py) * ow;
                            for px in xlo..xhi {
                                f(row, obase + px, ibase + px * g.stride + xk - g.pad[2]);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], col: &mut [T]) {
    let out_vol: usize = g.output.iter().product();
    col.iter_mut().for_each(|v| *v = T::zero());
    for_each_tap(g, |row, p, i| col[row * out_vol + p] = x[i]);
}

fn col2im_add<T: Scalar>(g: &ConvGeom, col: &[T], gx: &mut [T]) {
    let out_vol: usize = g.output.iter().product();
    for_each_tap(g, |row, p, i| gx[i] = gx[i] + col[row * out_vol + p]);
}

pub(crate) fn conv3d_forward<T: Scalar>(g: &ConvGeom, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let in_vol: usize = g.input.iter().product();
    let out_vol: usize = g.output.iter().product();
    let patch = g.c_in * g.kernel.iter().product::<usize>();
    let mut out = vec![T::zero(); g.batch * g.c_out * out_vol];
    let mut col = vec![T::zero(); patch * out_vol];
    for b in 0..g.batch {
        let o = &mut out[b * g.c_out * out_vol..][..g.c_out * out_vol];
        if let Some(bias) = bias {
            for (co, chunk) in o.chunks_exact_mut(out_vol).enumerate() {
                chunk.iter_mut().for_each(|v| *v = bias[co]);
            }
        }
        im2col(g, &x[b * g.c_in * in_vol..][..g.c_in * in_vol], &mut col);
        gemm_nn(w, &col, o, g.c_out, patch, out_vol);
    }
    out
}

/// Accumulates input, weight and bias adjoints of [`conv3d_forward`].
pub(crate) fn conv3d_backward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    gout: &[T],
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    gb: Option<&mut [T]>,
) {
    let in_vol: usize = g.input.iter().product();
    let out_vol: usize = g.output.iter().product();
    let patch = g.c_in * g.kernel.iter().product::<usize>();
    if let Some(gb) = gb {
        for b in 0..g.batch {
            for co in 0..g.c_out {
                let o = &gout[(b * g.c_out + co) * out_vol..][..out_vol];
                gb[co] = gb[co] + o.iter().copied().sum::<T>();
            }
        }
    }
    let mut col = vec![T::zero(); patch * out_vol];
    for b in 0..g.batch {
        let o = &gout[b * g.c_out * out_vol..][..g.c_out * out_vol];
        if let Some(gw) = gw.as_deref_mut() {
            im2col(g, &x[b * g.c_in * in_vol..][..g.c_in * in_vol], &mut col);
            gemm_nt(o, &col, gw, g.c_out, out_vol, patch);
        }
        if let Some(gx) = gx.as_deref_mut() {
            col.iter_mut().for_each(|v| *v = T::zero());
            gemm_tn(w, o, &mut col, g.c_out, patch, out_vol);
            col2im_add(g, &col, &mut gx[b * g.c_in * in_vol..][..g.c_in * in_vol]);
        }
    }
}
