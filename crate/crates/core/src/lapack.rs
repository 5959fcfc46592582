//! Thin safe wrappers over the handful of LAPACK routines the solvers use,
//! linked from the system OpenBLAS. Matrices are dense column-major, the
//! layout LAPACK expects; `Complex64` is `repr(C)` and layout-compatible
//! with `complex*16`.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LapackError {
    #[error("matrix is singular to working precision (zero pivot at {0})")]
    Singular(i32),
    #[error("invalid argument {0} passed to {1}")]
    BadArgument(i32, &'static str),
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}

extern "C" {
    fn dgetrf_(m: *const i32, n: *const i32, a: *mut f64, lda: *const i32, ipiv: *mut i32, info: *mut i32);
    fn dgetrs_(
        trans: *const u8,
        n: *const i32,
        nrhs: *const i32,
        a: *const f64,
        lda: *const i32,
        ipiv: *const i32,
        b: *mut f64,
        ldb: *const i32,
        info: *mut i32,
    );
    fn dgesdd_(
        jobz: *const u8,
        m: *const i32,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        s: *mut f64,
        u: *mut f64,
        ldu: *const i32,
        vt: *mut f64,
        ldvt: *const i32,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        info: *mut i32,
    );
    fn zgesv_(
        n: *const i32,
        nrhs: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        ipiv: *mut i32,
        b: *mut Complex64,
        ldb: *const i32,
        info: *mut i32,
    );
}

/// Dense real matrix, column-major.
#[derive(Clone)]
pub struct DMat {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DMat {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DMat { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n_rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.n_rows + i] = v;
    }

    /// Mutable view of one column; handy when probing assembles a column at a time.
    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    /// y = A x (no BLAS call; used on small probe matrices in tests).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for j in 0..self.n_cols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let col = self.col(j);
            for i in 0..self.n_rows {
                y[i] += col[i] * xj;
            }
        }
        y
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Grows a square matrix by `pad` rows and columns, keeping the existing
    /// block in the top-left corner and zero-filling the border. Reuses the
    /// buffer: columns are shifted in place from the back, which never
    /// crosses a not-yet-moved column.
    pub fn pad_square(mut self, pad: usize) -> DMat {
        assert_eq!(self.n_rows, self.n_cols, "pad_square needs a square matrix");
        if pad == 0 {
            return self;
        }
        let n = self.n_rows;
        let m = n + pad;
        self.data.resize(m * m, 0.0);
        for j in (1..n).rev() {
            self.data.copy_within(j * n..j * n + n, j * m);
        }
        for j in 0..n {
            self.data[j * m + n..(j + 1) * m].fill(0.0);
        }
        self.n_rows = m;
        self.n_cols = m;
        self
    }
}

/// LU factorization of a square real matrix (dgetrf), reusable for many
/// right-hand sides.
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    ipiv: Vec<i32>,
}

impl LuFactors {
    pub fn factor(mut a: DMat) -> Result<Self, LapackError> {
        assert_eq!(a.n_rows, a.n_cols, "LU factorization needs a square matrix");
        let n = a.n_rows as i32;
        let mut ipiv = vec![0i32; a.n_rows];
        let mut info = 0i32;
        unsafe {
            dgetrf_(&n, &n, a.data.as_mut_ptr(), &n, ipiv.as_mut_ptr(), &mut info);
        }
        match info {
            0 => Ok(LuFactors { n: a.n_rows, lu: a.data, ipiv }),
            i if i > 0 => Err(LapackError::Singular(i)),
            i => Err(LapackError::BadArgument(-i, "dgetrf")),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), LapackError> {
        self.solve_impl(b, b'N')
    }

    /// Solves Aᵀ x = b using the same factorization.
    pub fn solve_transposed_in_place(&self, b: &mut [f64]) -> Result<(), LapackError> {
        self.solve_impl(b, b'T')
    }

    fn solve_impl(&self, b: &mut [f64], trans: u8) -> Result<(), LapackError> {
        assert_eq!(b.len() % self.n, 0);
        let n = self.n as i32;
        let nrhs = (b.len() / self.n) as i32;
        let mut info = 0i32;
        unsafe {
            dgetrs_(
                &trans,
                &n,
                &nrhs,
                self.lu.as_ptr(),
                &n,
                self.ipiv.as_ptr(),
                b.as_mut_ptr(),
                &n,
                &mut info,
            );
        }
        if info == 0 {
            Ok(())
        } else {
            Err(LapackError::BadArgument(-info, "dgetrs"))
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LapackError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

/// Singular values of a dense real matrix, descending (dgesdd with jobz='N').
/// Consumes the matrix: LAPACK destroys its input.
pub fn singular_values(mut a: DMat) -> Result<Vec<f64>, LapackError> {
    let m = a.n_rows as i32;
    let n = a.n_cols as i32;
    let mn = a.n_rows.min(a.n_cols);
    let mut s = vec![0.0f64; mn.max(1)];
    let mut iwork = vec![0i32; 8 * mn.max(1)];
    let jobz = b'N';
    let mut info = 0i32;
    // Workspace query, then the real call.
    let mut work_query = [0.0f64];
    let lwork_query = -1i32;
    unsafe {
        dgesdd_(
            &jobz,
            &m,
            &n,
            a.data.as_mut_ptr(),
            &m,
            s.as_mut_ptr(),
            std::ptr::null_mut(),
            &1,
            std::ptr::null_mut(),
            &1,
            work_query.as_mut_ptr(),
            &lwork_query,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(LapackError::BadArgument(-info, "dgesdd"));
    }
    let lwork = work_query[0] as i32;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    unsafe {
        dgesdd_(
            &jobz,
            &m,
            &n,
            a.data.as_mut_ptr(),
            &m,
            s.as_mut_ptr(),
            std::ptr::null_mut(),
            &1,
            std::ptr::null_mut(),
            &1,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    match info {
        0 => Ok(s),
        i if i > 0 => Err(LapackError::NoConvergence("dgesdd")),
        i => Err(LapackError::BadArgument(-i, "dgesdd")),
    }
}

/// Orthonormal basis of the numerical null space: the right singular vectors
/// whose singular values fall below `tol`. Consumes the matrix (dgesdd
/// overwrites it). Square input only.
pub fn svd_null_space(mut a: DMat, tol: f64) -> Result<Vec<Vec<f64>>, LapackError> {
    assert_eq!(a.n_rows, a.n_cols, "null space extraction needs a square matrix");
    let n = a.n_rows;
    let ni = n as i32;
    let mut s = vec![0.0f64; n.max(1)];
    let mut u = vec![0.0f64; (n * n).max(1)];
    let mut vt = vec![0.0f64; (n * n).max(1)];
    let mut iwork = vec![0i32; 8 * n.max(1)];
    let jobz = b'S';
    let mut info = 0i32;
    let mut work_query = [0.0f64];
    let lwork_query = -1i32;
    unsafe {
        dgesdd_(
            &jobz,
            &ni,
            &ni,
            a.data.as_mut_ptr(),
            &ni,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &ni,
            vt.as_mut_ptr(),
            &ni,
            work_query.as_mut_ptr(),
            &lwork_query,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(LapackError::BadArgument(-info, "dgesdd"));
    }
    let lwork = work_query[0] as i32;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    unsafe {
        dgesdd_(
            &jobz,
            &ni,
            &ni,
            a.data.as_mut_ptr(),
            &ni,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &ni,
            vt.as_mut_ptr(),
            &ni,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info > 0 {
        return Err(LapackError::NoConvergence("dgesdd"));
    }
    if info < 0 {
        return Err(LapackError::BadArgument(-info, "dgesdd"));
    }
    // Row i of VT is the right singular vector for s[i]; s is descending.
    let mut basis = Vec::new();
    for (i, &sigma) in s.iter().enumerate() {
        if sigma < tol {
            basis.push((0..n).map(|j| vt[i + j * n]).collect());
        }
    }
    Ok(basis)
}

/// Dense complex matrix, column-major.
#[derive(Clone)]
pub struct ZMat {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<Complex64>,
}

impl ZMat {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        ZMat { n_rows, n_cols, data: vec![Complex64::new(0.0, 0.0); n_rows * n_cols] }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[j * self.n_rows + i] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[j * self.n_rows + i] += v;
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }
}

/// Solve the square complex system A x = b via zgesv. Consumes A, overwrites
/// b with the solution.
pub fn solve_complex_in_place(mut a: ZMat, b: &mut [Complex64]) -> Result<(), LapackError> {
    assert_eq!(a.n_rows, a.n_cols);
    assert_eq!(b.len() % a.n_rows, 0);
    let n = a.n_rows as i32;
    let nrhs = (b.len() / a.n_rows) as i32;
    let mut ipiv = vec![0i32; a.n_rows];
    let mut info = 0i32;
    unsafe {
        zgesv_(
            &n,
            &nrhs,
            a.data.as_mut_ptr(),
            &n,
            ipiv.as_mut_ptr(),
            b.as_mut_ptr(),
            &n,
            &mut info,
        );
    }
    match info {
        0 => Ok(()),
        i if i > 0 => Err(LapackError::Singular(i)),
        i => Err(LapackError::BadArgument(-i, "zgesv")),
    }
}
