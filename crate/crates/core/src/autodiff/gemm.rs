/// Row-major matrix view: (rows, cols, row stride, column stride).
#[derive(Clone, Copy)]
pub(crate) struct View {
    pub rows: usize,
    pub cols: usize,
    pub rs: isize,
    pub cs: isize,
}

impl View {
    pub fn row_major(rows: usize, cols: usize) -> Self {
        View {
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        View {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// `c = beta * c + a · b`, where `c` is dense row-major `a.rows × b.cols`.
pub(crate) fn gemm(a: &[f64], av: View, b: &[f64], bv: View, c: &mut [f64], beta: f64) {
    debug_assert_eq!(av.cols, bv.rows);
    let (m, k, n) = (av.rows, av.cols, bv.cols);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: the views describe in-bounds strided reads of `a` and `b`
    // (checked by the callers' shape validation) and `c` is a dense m×n
    // buffer that does not alias either input.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            av.rs,
            av.cs,
            b.as_ptr(),
            bv.rs,
            bv.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
