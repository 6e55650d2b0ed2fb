//! Slice-level numeric kernels behind the tape operations.
//!
//! Layouts are row-major: sequences are `[batch, length, channels]` and
//! convolution kernels are `[width, in_channels, out_channels]`.

use crate::Scalar;

/// Zero-padded ("same") geometry of a strided 1-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_len: usize,
    pub out_len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    /// Output length is `ceil(in_len / stride)`; padding is split evenly with
    /// the odd sample going to the right.
    pub fn new(in_len: usize, kernel: usize, stride: usize) -> Self {
        let out_len = in_len.div_ceil(stride);
        let total = ((out_len - 1) * stride + kernel).saturating_sub(in_len);
        Self {
            in_len,
            out_len,
            kernel,
            stride,
            pad_left: total / 2,
        }
    }

    /// Range of kernel taps that land inside the input for output `o`.
    #[inline]
    fn taps(&self, o: usize) -> (isize, usize, usize) {
        let start = (o * self.stride) as isize - self.pad_left as isize;
        let lo = (-start).max(0) as usize;
        let hi = (self.in_len as isize - start).clamp(0, self.kernel as isize) as usize;
        (start, lo, hi.max(lo))
    }
}

/// `[m, k] x [k, n] -> [m, n]`
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// `[rows, cols] -> [cols, rows]` for the flattened `[K * cin, cout]` kernel.
fn kernel_by_output<T: Scalar>(w: &[T], kc: usize, cout: usize) -> Vec<T> {
    transpose(w, kc, cout)
}

/// Dot product with eight independent partial sums in a fixed order.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a * x`
#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + a * xv;
    }
}

/// `y[b, o, co] = sum_{k, ci} x[b, o*s + k - pad, ci] * w[k, ci, co]`
pub fn conv1d_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    batch: usize,
    geom: ConvGeometry,
    cin: usize,
    cout: usize,
) -> Vec<T> {
    let kc = geom.kernel * cin;
    let wt = kernel_by_output(w, kc, cout);
    let mut y = vec![T::zero(); batch * geom.out_len * cout];
    for b in 0..batch {
        let xb = &x[b * geom.in_len * cin..(b + 1) * geom.in_len * cin];
        let yb = &mut y[b * geom.out_len * cout..(b + 1) * geom.out_len * cout];
        for o in 0..geom.out_len {
            let (start, lo, hi) = geom.taps(o);
            let first = (start + lo as isize) as usize;
            let patch = &xb[first * cin..(first + hi - lo) * cin];
            for (co, yv) in yb[o * cout..(o + 1) * cout].iter_mut().enumerate() {
                *yv = dot(patch, &wt[co * kc + lo * cin..co * kc + hi * cin]);
            }
        }
    }
    y
}

/// Adjoint of [`conv1d_forward`] with respect to its input: maps
/// `[batch, out_len, cout]` back to `[batch, in_len, cin]`. This is the
/// transposed convolution.
pub fn conv1d_adjoint<T: Scalar>(
    g: &[T],
    w: &[T],
    batch: usize,
    geom: ConvGeometry,
    cin: usize,
    cout: usize,
) -> Vec<T> {
    let kc = geom.kernel * cin;
    let wt = kernel_by_output(w, kc, cout);
    let mut y = vec![T::zero(); batch * geom.in_len * cin];
    for b in 0..batch {
        let gb = &g[b * geom.out_len * cout..(b + 1) * geom.out_len * cout];
        let yb = &mut y[b * geom.in_len * cin..(b + 1) * geom.in_len * cin];
        for o in 0..geom.out_len {
            let (start, lo, hi) = geom.taps(o);
            let first = (start + lo as isize) as usize;
            let patch = &mut yb[first * cin..(first + hi - lo) * cin];
            for (co, &gv) in gb[o * cout..(o + 1) * cout].iter().enumerate() {
                if gv != T::zero() {
                    axpy(patch, gv, &wt[co * kc + lo * cin..co * kc + hi * cin]);
                }
            }
        }
    }
    y
}

/// Gradient of `<conv1d_forward(x, w), g>` with respect to `w`.
pub fn conv1d_weight_grad<T: Scalar>(
    x: &[T],
    g: &[T],
    batch: usize,
    geom: ConvGeometry,
    cin: usize,
    cout: usize,
) -> Vec<T> {
    let kc = geom.kernel * cin;
    let mut gwt = vec![T::zero(); cout * kc];
    for b in 0..batch {
        let xb = &x[b * geom.in_len * cin..(b + 1) * geom.in_len * cin];
        let gb = &g[b * geom.out_len * cout..(b + 1) * geom.out_len * cout];
        for o in 0..geom.out_len {
            let (start, lo, hi) = geom.taps(o);
            let first = (start + lo as isize) as usize;
            let patch = &xb[first * cin..(first + hi - lo) * cin];
            for (co, &gv) in gb[o * cout..(o + 1) * cout].iter().enumerate() {
                if gv != T::zero() {
                    axpy(&mut gwt[co * kc + lo * cin..co * kc + hi * cin], gv, patch);
                }
            }
        }
    }
    transpose(&gwt, cout, kc)
}
