//! Minimal dense matrix support for the autoencoder.
//!
//! Everything is row-major `Vec`-backed. GEMM dispatches to
//! `matrixmultiply` and is split over a fixed row-block grid so results are
//! bitwise reproducible for any worker-thread count.

/// Floating-point scalar the network can run in. Training uses `f32`;
/// gradient verification instantiates the same code in `f64`.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Default
    + PartialOrd
    + std::fmt::Debug
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;

    /// `c = alpha * a*b + beta * c` over raw row/column strides.
    ///
    /// # Safety
    /// Pointers must cover `m x k`, `k x n` and `m x n` elements under the
    /// given strides.
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
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }

    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }

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
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }

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
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![F::ZERO; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(F::ZERO);
    }

    /// Resize in place, zeroing content. Keeps the allocation when possible.
    pub fn reset(&mut self, rows: usize, cols: usize) {
        self.rows = rows;
        self.cols = cols;
        self.data.clear();
        self.data.resize(rows * cols, F::ZERO);
    }
}

/// Dimension above which a GEMM is split in two for the worker pool. The
/// decomposition depends only on the matrix shape, never on the thread
/// count, so results are bitwise reproducible for any pool size.
const GEMM_SPLIT_MIN: usize = 256;

/// `c = alpha * op(a)*op(b) + beta * c` where `op` optionally transposes.
pub fn gemm<F: Scalar>(
    c: &mut Mat<F>,
    beta: F,
    alpha: F,
    a: &Mat<F>,
    transpose_a: bool,
    b: &Mat<F>,
    transpose_b: bool,
) {
    let (m, ka) = if transpose_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if transpose_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(ka, kb, "inner dimensions disagree");
    assert_eq!(c.rows, m);
    assert_eq!(c.cols, n);
    if m == 0 || n == 0 {
        return;
    }
    let k = ka;
    let (rsa, csa) = if transpose_a { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if transpose_b { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // addresses travel as usize so the closures stay Send + Sync
    let a_addr = a.data.as_ptr() as usize;
    let b_addr = b.data.as_ptr() as usize;
    let c_addr = c.data.as_mut_ptr() as usize;
    let n_isize = n as isize;

    let run = |row0: usize, rows: usize, col0: usize, cols: usize| unsafe {
        let a_block = (a_addr as *const F).offset(row0 as isize * rsa);
        let b_block = (b_addr as *const F).offset(col0 as isize * csb);
        let c_block = (c_addr as *mut F).add(row0 * n + col0);
        F::gemm_raw(
            rows, k, cols, alpha, a_block, rsa, csa, b_block, rsb, csb, beta, c_block, n_isize,
            1,
        );
    };

    if m >= GEMM_SPLIT_MIN {
        let half = m / 2;
        rayon::join(|| run(0, half, 0, n), || run(half, m - half, 0, n));
    } else if n >= 2 * GEMM_SPLIT_MIN {
        let half = n / 2;
        rayon::join(|| run(0, m, 0, half), || run(0, m, half, n - half));
    } else {
        run(0, m, 0, n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat<f64>, ta: bool, b: &Mat<f64>, tb: bool) -> Mat<f64> {
        let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
        let n = if tb { b.rows } else { b.cols };
        let mut c = Mat::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..k {
                    let av = if ta { a.at(l, i) } else { a.at(i, l) };
                    let bv = if tb { b.at(j, l) } else { b.at(l, j) };
                    acc += av * bv;
                }
                c.set(i, j, acc);
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_all_transposes() {
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        let a = Mat::from_vec(7, 5, (0..35).map(|_| next()).collect());
        let b = Mat::from_vec(5, 9, (0..45).map(|_| next()).collect());
        let at = {
            let mut t = Mat::zeros(5, 7);
            for i in 0..7 {
                for j in 0..5 {
                    t.set(j, i, a.at(i, j));
                }
            }
            t
        };
        let bt = {
            let mut t = Mat::zeros(9, 5);
            for i in 0..5 {
                for j in 0..9 {
                    t.set(j, i, b.at(i, j));
                }
            }
            t
        };
        for (a_in, ta, b_in, tb) in [
            (&a, false, &b, false),
            (&at, true, &b, false),
            (&a, false, &bt, true),
            (&at, true, &bt, true),
        ] {
            let mut c = Mat::zeros(7, 9);
            gemm(&mut c, 0.0, 1.0, a_in, ta, b_in, tb);
            let want = naive(a_in, ta, b_in, tb);
            for (x, y) in c.data.iter().zip(&want.data) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gemm_blocks_are_deterministic() {
        // Larger than the split threshold so the parallel path is exercised.
        let rows = GEMM_SPLIT_MIN * 2 + 17;
        let a = Mat::from_vec(
            rows,
            33,
            (0..rows * 33).map(|i| ((i * 2654435761) % 1000) as f32 / 500.0 - 1.0).collect(),
        );
        let b = Mat::from_vec(
            33,
            29,
            (0..33 * 29).map(|i| ((i * 40503) % 997) as f32 / 499.0 - 1.0).collect(),
        );
        let mut c1 = Mat::zeros(rows, 29);
        let mut c2 = Mat::zeros(rows, 29);
        gemm(&mut c1, 0.0, 1.0, &a, false, &b, false);
        gemm(&mut c2, 0.0, 1.0, &a, false, &b, false);
        assert_eq!(c1.data, c2.data);
    }
}
