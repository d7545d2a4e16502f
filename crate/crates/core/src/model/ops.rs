//! Dense kernels with hand-written backward passes. All matrices are
//! row-major; feature maps are `[channels][height][width]`.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Scalar type the network runs in: `f32` for training, `f64` for gradient
/// checks.
pub trait Real: Float + Debug + Default + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static {
    /// `C = alpha * op(A) op(B) + beta * C` with explicit strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn to_le(self, out: &mut Vec<u8>);
    const BYTES: usize;
    const DTYPE: &'static str;
    fn from_le(bytes: &[u8]) -> Self;

    /// `tanh`, allowed to trade the last few ulps for speed.
    fn tanh_fast(self) -> Self;
}

macro_rules! impl_real {
    ($t:ty, $gemm:path, $dtype:literal, $tanh:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                debug_assert!(c.len() >= m * n);
                // SAFETY: callers pass slices whose extents cover the strided
                // m x k, k x n and m x n (row-major, rsc = n) regions.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn from_f64(v: f64) -> Self {
                v as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn to_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            const BYTES: usize = std::mem::size_of::<$t>();
            const DTYPE: &'static str = $dtype;

            fn from_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("scalar width"))
            }

            #[inline]
            fn tanh_fast(self) -> Self {
                $tanh(self)
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm, "float32-le", tanh_rational_f32);
impl_real!(f64, matrixmultiply::dgemm, "float64-le", f64::tanh);

/// Odd 13/6 rational fit of `tanh` on the clamped range, within a few ulp of
/// `f32::tanh` and branch-free apart from the clamp, so it vectorises.
#[inline]
fn tanh_rational_f32(x: f32) -> f32 {
    const CLAMP: f32 = 7.905_311;
    const A: [f32; 7] = [
        4.893_524_6e-3,
        6.372_619_3e-4,
        1.485_722_4e-5,
        5.122_297e-8,
        -8.604_672e-11,
        2.000_188e-13,
        -2.760_768_5e-16,
    ];
    const B: [f32; 4] = [4.893_525e-3, 2.268_434_6e-3, 1.185_347e-4, 1.198_258_4e-6];
    let x = x.clamp(-CLAMP, CLAMP);
    let x2 = x * x;
    let mut p = A[6];
    for &a in A[..6].iter().rev() {
        p = p * x2 + a;
    }
    let q = ((B[3] * x2 + B[2]) * x2 + B[1]) * x2 + B[0];
    x * p / q
}

/// `c (+)= a[m x k] * b[k x n]`.
pub fn matmul<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n);
    let beta = if accumulate { T::one() } else { T::zero() };
    T::gemm(m, k, n, T::one(), a, k as isize, 1, b, n as isize, 1, beta, c);
}

/// `c (+)= a[m x k] * b[n x k]^T`.
pub fn matmul_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k);
    let beta = if accumulate { T::one() } else { T::zero() };
    T::gemm(m, k, n, T::one(), a, k as isize, 1, b, 1, k as isize, beta, c);
}

/// `c (+)= a[k x m]^T * b[k x n]`.
pub fn matmul_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n);
    let beta = if accumulate { T::one() } else { T::zero() };
    T::gemm(m, k, n, T::one(), a, 1, m as isize, b, n as isize, 1, beta, c);
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// GeLU, tanh approximation.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    gelu_with_tanh(x).0
}

/// `(gelu(x), tanh(c (x + a x^3)))`.
#[inline]
fn gelu_with_tanh<T: Real>(x: T) -> (T, T) {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let t = (c * (x + a * x * x * x)).tanh_fast();
    (half * x * (T::one() + t), t)
}

/// Derivative given the `tanh` term computed in the forward pass.
#[inline]
fn gelu_grad_from_tanh<T: Real>(x: T, t: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    gelu_grad_from_tanh(x, gelu_with_tanh(x).1)
}

/// Activated values plus the `tanh` terms needed by [`gelu_backward`].
pub fn gelu_forward<T: Real>(x: &[T]) -> (Vec<T>, Vec<T>) {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let t: Vec<T> = x.iter().map(|&v| (c * (v + a * v * v * v)).tanh_fast()).collect();
    let half = T::from_f64(0.5);
    let y = x.iter().zip(&t).map(|(&v, &tv)| half * v * (T::one() + tv)).collect();
    (y, t)
}

/// `dx = dy * gelu'(x)`, with `t` from [`gelu_forward`].
pub fn gelu_backward<T: Real>(x: &[T], t: &[T], dy: &[T]) -> Vec<T> {
    x.iter()
        .zip(t)
        .zip(dy)
        .map(|((&v, &tv), &d)| d * gelu_grad_from_tanh(v, tv))
        .collect()
}

/// 3x3, stride 1, zero padding 1: `[c][h][w]` -> `[c*9][h*w]`.
pub fn im2col3<T: Real>(x: &[T], c: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    debug_assert_eq!(col.len(), c * 9 * hw);
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for oy in 0..h {
                    let iy = oy as isize + ky as isize - 1;
                    let dst = &mut row[oy * w..(oy + 1) * w];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: accumulates `col` back into `dx`.
pub fn col2im3<T: Real>(col: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for oy in 0..h {
                    let Some(iy) = (oy + ky).checked_sub(1).filter(|&iy| iy < h) else {
                        continue;
                    };
                    let src = &row[oy * w..(oy + 1) * w];
                    let dst = &mut plane[iy * w..(iy + 1) * w];
                    let (d, s) = match kx {
                        0 => (&mut dst[..w - 1], &src[1..]),
                        1 => (&mut dst[..], src),
                        _ => (&mut dst[1..], &src[..w - 1]),
                    };
                    for (dv, &sv) in d.iter_mut().zip(s) {
                        *dv += sv;
                    }
                }
            }
        }
    }
}

/// `dst[y][x] += sum k[ky][kx] src[y+ky-1][x+kx-1]` over one zero-padded
/// `h x w` plane.
fn plane_conv3<T: Real>(src: &[T], h: usize, w: usize, k: &[T; 9], dst: &mut [T]) {
    for oy in 0..h {
        let d = &mut dst[oy * w..(oy + 1) * w];
        for ky in 0..3 {
            let Some(iy) = (oy + ky).checked_sub(1).filter(|&iy| iy < h) else {
                continue;
            };
            conv_row(&src[iy * w..(iy + 1) * w], [k[ky * 3], k[ky * 3 + 1], k[ky * 3 + 2]], d);
        }
    }
}

/// `d[x] += k0 s[x-1] + k1 s[x] + k2 s[x+1]` with zero padding.
#[inline(always)]
fn conv_row<T: Real>(s: &[T], [k0, k1, k2]: [T; 3], d: &mut [T]) {
    let w = d.len();
    if w == 1 {
        d[0] += k1 * s[0];
        return;
    }
    d[0] += k1 * s[0] + k2 * s[1];
    d[w - 1] += k0 * s[w - 2] + k1 * s[w - 1];
    let n = w - 2;
    let (left, mid, right) = (&s[..n], &s[1..n + 1], &s[2..n + 2]);
    let inner = &mut d[1..n + 1];
    for j in 0..n {
        inner[j] += k0 * left[j] + k1 * mid[j] + k2 * right[j];
    }
}

/// `out[ky][kx] += sum dy[y][x] src[y+ky-1][x+kx-1]`, with `acc` as
/// `9 x w` scratch so the inner loops are plain element-wise updates.
fn plane_corr3<T: Real>(dy: &[T], src: &[T], h: usize, w: usize, acc: &mut [T], out: &mut [T]) {
    acc.fill(T::zero());
    for oy in 0..h {
        let g = &dy[oy * w..(oy + 1) * w];
        for ky in 0..3 {
            let Some(iy) = (oy + ky).checked_sub(1).filter(|&iy| iy < h) else {
                continue;
            };
            let s = &src[iy * w..(iy + 1) * w];
            let taps = &mut acc[ky * 3 * w..(ky * 3 + 3) * w];
            let (left, rest) = taps.split_at_mut(w);
            let (mid, right) = rest.split_at_mut(w);
            for ((a, &gv), &sv) in mid.iter_mut().zip(g).zip(s) {
                *a += gv * sv;
            }
            for ((a, &gv), &sv) in left[1..].iter_mut().zip(&g[1..]).zip(s) {
                *a += gv * sv;
            }
            for ((a, &gv), &sv) in right.iter_mut().zip(g).zip(&s[1..]) {
                *a += gv * sv;
            }
        }
    }
    for (o, row) in out.iter_mut().zip(acc.chunks_exact(w)) {
        *o += row.iter().copied().sum::<T>();
    }
}

fn kernel<T: Real>(wt: &[T], o: usize, i: usize, inp: usize) -> [T; 9] {
    wt[(o * inp + i) * 9..][..9].try_into().expect("nine taps")
}

/// `y[out][h][w] += conv3x3(x[inp][h][w])`, stride 1, zero padding 1,
/// weights `[out][inp][3][3]`.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_forward<T: Real>(x: &[T], inp: usize, out: usize, h: usize, w: usize, wt: &[T], y: &mut [T]) {
    let hw = h * w;
    for o in 0..out {
        let yo = &mut y[o * hw..(o + 1) * hw];
        for i in 0..inp {
            plane_conv3(&x[i * hw..(i + 1) * hw], h, w, &kernel(wt, o, i, inp), yo);
        }
    }
}

/// `dx += conv3x3^T(dy)`.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward_data<T: Real>(dy: &[T], inp: usize, out: usize, h: usize, w: usize, wt: &[T], dx: &mut [T]) {
    let hw = h * w;
    for i in 0..inp {
        let di = &mut dx[i * hw..(i + 1) * hw];
        for o in 0..out {
            let mut k = kernel(wt, o, i, inp);
            k.reverse();
            plane_conv3(&dy[o * hw..(o + 1) * hw], h, w, &k, di);
        }
    }
}

/// `dwt += d<dy, conv3x3(x)>/dwt`.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward_weights<T: Real>(
    dy: &[T],
    x: &[T],
    inp: usize,
    out: usize,
    h: usize,
    w: usize,
    dwt: &mut [T],
) {
    let hw = h * w;
    let mut acc = vec![T::zero(); 9 * w];
    for o in 0..out {
        for i in 0..inp {
            plane_corr3(
                &dy[o * hw..(o + 1) * hw],
                &x[i * hw..(i + 1) * hw],
                h,
                w,
                &mut acc,
                &mut dwt[(o * inp + i) * 9..][..9],
            );
        }
    }
}

/// Mean over non-overlapping `fy x fx` blocks: `[c][h][w]` -> `[c][h/fy][w/fx]`.
pub fn block_mean<T: Real>(x: &[T], c: usize, h: usize, w: usize, fy: usize, fx: usize) -> Vec<T> {
    let (oh, ow) = (h / fy, w / fx);
    let mut out = vec![T::zero(); c * oh * ow];
    let scale = T::from_f64(1.0 / (fy * fx) as f64);
    for ci in 0..c {
        for y in 0..h {
            let src = &x[(ci * h + y) * w..][..ow * fx];
            let dst = &mut out[(ci * oh + y / fy) * ow..][..ow];
            for (d, block) in dst.iter_mut().zip(src.chunks_exact(fx)) {
                *d += block.iter().copied().sum::<T>();
            }
        }
    }
    for v in &mut out {
        *v *= scale;
    }
    out
}

/// Adds `src[c][h/fy][w/fx]` to every element of the matching block of
/// `dst[c][h][w]`, times `scale`. This is both nearest upsampling and the
/// adjoint of [`block_mean`] (with `scale = 1/(fy*fx)`).
pub fn block_broadcast_add<T: Real>(
    src: &[T],
    c: usize,
    h: usize,
    w: usize,
    fy: usize,
    fx: usize,
    scale: T,
    dst: &mut [T],
) {
    let (oh, ow) = (h / fy, w / fx);
    for ci in 0..c {
        for y in 0..h {
            let s = &src[(ci * oh + y / fy) * ow..][..ow];
            let d = &mut dst[(ci * h + y) * w..][..ow * fx];
            for (block, &sv) in d.chunks_exact_mut(fx).zip(s) {
                let add = scale * sv;
                for v in block {
                    *v += add;
                }
            }
        }
    }
}

/// Row-wise softmax of an `n x n` (or `rows x cols`) matrix, in place.
pub fn softmax_rows<T: Real>(s: &mut [T], cols: usize) {
    for row in s.chunks_mut(cols) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree_with_loops() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut reference = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                reference[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        let mut c = vec![0.0; m * n];
        matmul(m, k, n, &a, &b, &mut c, false);
        assert!(c.iter().zip(&reference).all(|(x, y)| (x - y).abs() < 1e-12));

        let bt: Vec<f64> = (0..n * k).map(|i| b[(i % k) * n + i / k]).collect();
        matmul_nt(m, k, n, &a, &bt, &mut c, false);
        assert!(c.iter().zip(&reference).all(|(x, y)| (x - y).abs() < 1e-12));

        let at: Vec<f64> = (0..k * m).map(|i| a[(i % m) * k + i / m]).collect();
        matmul_tn(m, k, n, &at, &b, &mut c, false);
        assert!(c.iter().zip(&reference).all(|(x, y)| (x - y).abs() < 1e-12));

        matmul(m, k, n, &a, &b, &mut c, true);
        assert!(c.iter().zip(&reference).all(|(x, y)| (x - 2.0 * y).abs() < 1e-12));
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn fast_f32_tanh_tracks_f64() {
        let mut worst = 0.0f64;
        for i in -20_000..=20_000 {
            let x = i as f32 * 1e-3;
            let err = (x.tanh_fast() as f64 - (x as f64).tanh()).abs();
            worst = worst.max(err);
        }
        assert!(worst < 1e-6, "max error {worst}");
        assert_eq!(1e-3f32.tanh_fast().signum(), 1.0);
        assert!((50.0f32.tanh_fast() - 1.0).abs() < 1e-6);
        assert!((-50.0f32.tanh_fast() + 1.0).abs() < 1e-6);
    }

    fn conv_case(inp: usize, out: usize, h: usize, w: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x = (0..inp * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let wt = (0..out * inp * 9).map(|i| (i as f64 * 0.91).cos()).collect();
        let dy = (0..out * h * w).map(|i| (i as f64 * 0.53).sin()).collect();
        (x, wt, dy)
    }

    #[test]
    fn direct_conv_matches_im2col_product() {
        for &(inp, out, h, w) in &[(2, 3, 5, 4), (1, 2, 3, 1), (3, 1, 1, 6), (4, 4, 8, 8)] {
            let (x, wt, _) = conv_case(inp, out, h, w);
            let mut col = vec![0.0; inp * 9 * h * w];
            im2col3(&x, inp, h, w, &mut col);
            let mut reference = vec![0.0; out * h * w];
            matmul(out, inp * 9, h * w, &wt, &col, &mut reference, false);
            let mut y = vec![0.0; out * h * w];
            conv3x3_forward(&x, inp, out, h, w, &wt, &mut y);
            for (a, b) in y.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12, "{inp}x{out} {h}x{w}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_backward_passes_are_adjoint_to_forward() {
        for &(inp, out, h, w) in &[(2, 3, 5, 4), (1, 2, 3, 1), (3, 2, 9, 11)] {
            let (x, wt, dy) = conv_case(inp, out, h, w);
            let mut y = vec![0.0; out * h * w];
            conv3x3_forward(&x, inp, out, h, w, &wt, &mut y);
            let lhs: f64 = y.iter().zip(&dy).map(|(a, b)| a * b).sum();

            let mut dx = vec![0.0; inp * h * w];
            conv3x3_backward_data(&dy, inp, out, h, w, &wt, &mut dx);
            let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

            // Linear in the weights, so <dy, y> = <dwt, wt>.
            let mut dwt = vec![0.0; wt.len()];
            conv3x3_backward_weights(&dy, &x, inp, out, h, w, &mut dwt);
            let rhs: f64 = wt.iter().zip(&dwt).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (c, h, w) = (2, 4, 5);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..c * 9 * h * w).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut col = vec![0.0; c * 9 * h * w];
        im2col3(&x, c, h, w, &mut col);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; c * h * w];
        col2im3(&y, c, h, w, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn block_ops_are_adjoint() {
        let (c, h, w, f) = (2, 4, 6, 2);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..c * (h / f) * (w / f)).map(|i| (i as f64 * 0.7).cos()).collect();
        let pooled = block_mean(&x, c, h, w, f, f);
        let lhs: f64 = pooled.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut up = vec![0.0; x.len()];
        block_broadcast_add(&y, c, h, w, f, f, 0.25, &mut up);
        let rhs: f64 = x.iter().zip(&up).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
