use std::fmt::{Debug, Display};

use num_traits::Float;

/// Storage element of a [`Tensor`](super::Tensor).
///
/// Implemented for `f32` (fitting) and `f64` (gradient checking). Reductions
/// are accumulated in `f64` regardless of the storage type.
pub trait Scalar: Float + Debug + Display + Default + Send + Sync + 'static {
    /// Raw strided general matrix multiply `C = alpha * A * B + beta * C`.
    ///
    /// # Safety
    /// All strides and dimensions must address memory inside the given buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self;

    fn widen(self) -> f64;
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    #[inline]
    fn lit(v: f64) -> f32 {
        v as f32
    }

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    #[inline]
    fn lit(v: f64) -> f64 {
        v
    }

    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

/// Strided read-only view of a row-major buffer.
#[derive(Clone, Copy)]
pub(crate) struct MatView<'a, T> {
    pub data: &'a [T],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> MatView<'a, T> {
    pub fn normal(data: &'a [T], cols: usize) -> Self {
        MatView { data, row_stride: cols, col_stride: 1 }
    }

    /// The transpose of a row-major `rows x cols` buffer.
    pub fn transposed(data: &'a [T], cols: usize) -> Self {
        MatView { data, row_stride: 1, col_stride: cols }
    }

    fn covers(&self, rows: usize, cols: usize) -> bool {
        rows == 0 || cols == 0 || (rows - 1) * self.row_stride + (cols - 1) * self.col_stride < self.data.len()
    }
}

/// `C[m x n] = A[m x k] * B[k x n] + beta * C`, `C` contiguous row-major.
pub(crate) fn gemm<T: Scalar>(m: usize, k: usize, n: usize, a: MatView<'_, T>, b: MatView<'_, T>, beta: T, c: &mut [T]) {
    assert!(c.len() >= m * n, "gemm output buffer too small");
    assert!(a.covers(m, k) && b.covers(k, n), "gemm operand view out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x = *x * beta);
        return;
    }
    // SAFETY: bounds checked above, output is contiguous m x n.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}
