//! Pointwise fiber algebra: small dense complex matrices representing
//! endomorphism values at grid nodes, with the exact operations the field
//! equations need — commutators, Hermitian adjoints, matrix exponentials,
//! characteristic polynomials.

use num_complex::Complex64;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

pub type C64 = Complex64;

pub const ZERO: C64 = Complex64::new(0.0, 0.0);
pub const ONE: C64 = Complex64::new(1.0, 0.0);
pub const I: C64 = Complex64::new(0.0, 1.0);

/// Square complex matrix of small rank (the bundle rank, typically 2 or 3).
/// Entries are stored row-major.
#[derive(Clone, PartialEq)]
pub struct EndMatrix {
    r: usize,
    e: Vec<C64>,
}

impl fmt::Debug for EndMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "EndMatrix r={}", self.r)?;
        for i in 0..self.r {
            write!(f, "  [")?;
            for j in 0..self.r {
                let v = self.get(i, j);
                write!(f, " {:+.6e}{:+.6e}i", v.re, v.im)?;
            }
            writeln!(f, " ]")?;
        }
        Ok(())
    }
}

impl EndMatrix {
    pub fn zeros(r: usize) -> Self {
        assert!(r >= 1);
        EndMatrix { r, e: vec![ZERO; r * r] }
    }

    pub fn identity(r: usize) -> Self {
        let mut m = Self::zeros(r);
        for i in 0..r {
            m.set(i, i, ONE);
        }
        m
    }

    /// Build from row-major entries; `entries.len()` must be `r*r`.
    pub fn from_vec(r: usize, entries: Vec<C64>) -> Self {
        assert_eq!(entries.len(), r * r);
        EndMatrix { r, e: entries }
    }

    pub fn diag(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.e[i * self.r + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.e[i * self.r + j] = v;
    }

    pub fn entries(&self) -> &[C64] {
        &self.e
    }

    pub fn entries_mut(&mut self) -> &mut [C64] {
        &mut self.e
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.r);
        for i in 0..self.r {
            for j in 0..self.r {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    /// Anti-Hermitian part (X - X^dagger)/2.
    pub fn anti_herm_part(&self) -> Self {
        let mut out = Self::zeros(self.r);
        for i in 0..self.r {
            for j in 0..self.r {
                out.set(i, j, (self.get(i, j) - self.get(j, i).conj()) * 0.5);
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.r).map(|i| self.get(i, i)).fold(ZERO, |a, b| a + b)
    }

    /// Largest entry magnitude. The solvers measure everything in this norm
    /// so that tolerances do not drift with rank.
    pub fn sup_norm(&self) -> f64 {
        self.e.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum; drives the exponential's scaling choice.
    fn one_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.r {
            let mut s = 0.0;
            for i in 0..self.r {
                s += self.get(i, j).norm();
            }
            best = best.max(s);
        }
        best
    }

    pub fn is_anti_hermitian(&self, tol: f64) -> bool {
        (self.clone() + self.dagger()).sup_norm() <= tol
    }

    pub fn scale(&self, s: C64) -> Self {
        EndMatrix { r: self.r, e: self.e.iter().map(|v| v * s).collect() }
    }

    /// Solve self * X = rhs by Gaussian elimination with partial pivoting.
    /// Ranks here are tiny, so there is no reason to call LAPACK.
    fn solve_multi(&self, rhs: &EndMatrix) -> EndMatrix {
        let r = self.r;
        assert_eq!(rhs.r, r);
        let mut a = self.e.clone();
        let mut b = rhs.e.clone();
        for col in 0..r {
            let mut piv = col;
            let mut best = a[col * r + col].norm();
            for row in col + 1..r {
                let mag = a[row * r + col].norm();
                if mag > best {
                    best = mag;
                    piv = row;
                }
            }
            assert!(best > 0.0, "singular denominator in small solve");
            if piv != col {
                for k in 0..r {
                    a.swap(col * r + k, piv * r + k);
                    b.swap(col * r + k, piv * r + k);
                }
            }
            let d = a[col * r + col];
            for row in col + 1..r {
                let f = a[row * r + col] / d;
                if f == ZERO {
                    continue;
                }
                for k in col..r {
                    let v = a[col * r + k] * f;
                    a[row * r + k] -= v;
                }
                for k in 0..r {
                    let v = b[col * r + k] * f;
                    b[row * r + k] -= v;
                }
            }
        }
        for col in (0..r).rev() {
            let d = a[col * r + col];
            for k in 0..r {
                b[col * r + k] /= d;
            }
            for row in 0..col {
                let f = a[row * r + col];
                if f == ZERO {
                    continue;
                }
                for k in 0..r {
                    let v = b[col * r + k] * f;
                    b[row * r + k] -= v;
                }
            }
        }
        EndMatrix { r, e: b }
    }

    /// Matrix exponential by scaling-and-squaring with Pade approximants,
    /// following Higham's degree selection. exp(0) is the identity exactly.
    pub fn mat_exp(&self) -> Self {
        const THETA: [(usize, f64); 5] = [
            (3, 1.495_585_217_958_292e-2),
            (5, 2.539_398_330_063_230e-1),
            (7, 9.504_178_996_162_932e-1),
            (9, 2.097_847_961_257_068),
            (13, 5.371_920_351_148_152),
        ];
        let norm = self.one_norm();
        if norm == 0.0 {
            return Self::identity(self.r);
        }
        for &(m, theta) in &THETA[..4] {
            if norm <= theta {
                return self.pade_low(m);
            }
        }
        let theta13 = THETA[4].1;
        let s = if norm > theta13 {
            ((norm / theta13).log2().ceil()) as i32
        } else {
            0
        };
        let scaled = self.scale(C64::new((0.5f64).powi(s), 0.0));
        let mut x = scaled.pade13();
        for _ in 0..s {
            x = &x * &x;
        }
        x
    }

    fn pade_low(&self, m: usize) -> Self {
        let b: &[f64] = match m {
            3 => &[120.0, 60.0, 12.0, 1.0],
            5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
            7 => &[17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1_512.0, 56.0, 1.0],
            9 => &[
                17_643_225_600.0,
                8_821_612_800.0,
                2_075_673_600.0,
                302_702_400.0,
                30_270_240.0,
                2_162_160.0,
                110_880.0,
                3_960.0,
                90.0,
                1.0,
            ],
            _ => unreachable!(),
        };
        let id = Self::identity(self.r);
        let a2 = self * self;
        // Even powers a2^k for k = 0..=(m-1)/2.
        let half = (m - 1) / 2;
        let mut even = Vec::with_capacity(half + 1);
        even.push(id.clone());
        for k in 1..=half {
            even.push(&even[k - 1] * &a2);
        }
        let mut u_inner = Self::zeros(self.r);
        let mut v = Self::zeros(self.r);
        for k in 0..=half {
            u_inner = u_inner + even[k].scale(C64::new(b[2 * k + 1], 0.0));
            v = v + even[k].scale(C64::new(b[2 * k], 0.0));
        }
        let u = self * &u_inner;
        let p = v.clone() + u.clone();
        let q = v - u;
        q.solve_multi(&p)
    }

    fn pade13(&self) -> Self {
        const B: [f64; 14] = [
            64_764_752_532_480_000.0,
            32_382_376_266_240_000.0,
            7_771_770_303_897_600.0,
            1_187_353_796_428_800.0,
            129_060_195_264_000.0,
            10_559_470_521_600.0,
            670_442_572_800.0,
            33_522_128_640.0,
            1_323_241_920.0,
            40_840_800.0,
            960_960.0,
            16_380.0,
            182.0,
            1.0,
        ];
        let id = Self::identity(self.r);
        let a2 = self * self;
        let a4 = &a2 * &a2;
        let a6 = &a2 * &a4;
        let u_hi = &a6
            * &(a6.scale(C64::new(B[13], 0.0))
                + a4.scale(C64::new(B[11], 0.0))
                + a2.scale(C64::new(B[9], 0.0)));
        let u_lo = a6.scale(C64::new(B[7], 0.0))
            + a4.scale(C64::new(B[5], 0.0))
            + a2.scale(C64::new(B[3], 0.0))
            + id.scale(C64::new(B[1], 0.0));
        let u = self * &(u_hi + u_lo);
        let v_hi = &a6
            * &(a6.scale(C64::new(B[12], 0.0))
                + a4.scale(C64::new(B[10], 0.0))
                + a2.scale(C64::new(B[8], 0.0)));
        let v = v_hi
            + a6.scale(C64::new(B[6], 0.0))
            + a4.scale(C64::new(B[4], 0.0))
            + a2.scale(C64::new(B[2], 0.0))
            + id.scale(C64::new(B[0], 0.0));
        let p = v.clone() + u.clone();
        let q = v - u;
        q.solve_multi(&p)
    }

    /// Coefficients of the characteristic polynomial det(eta*I - X), monic:
    /// `[1, c1, ..., cr]`, computed by the Faddeev-LeVerrier recursion.
    ///
    /// ```
    /// use hhlab::linalg::{EndMatrix, C64};
    /// let x = EndMatrix::from_vec(2, vec![
    ///     C64::new(1.0, 0.0), C64::new(2.0, 0.0),
    ///     C64::new(3.0, 0.0), C64::new(4.0, 0.0),
    /// ]);
    /// let c = x.charpoly();
    /// assert!((c[1] - C64::new(-5.0, 0.0)).norm() < 1e-14);
    /// assert!((c[2] - C64::new(-2.0, 0.0)).norm() < 1e-14);
    /// ```
    pub fn charpoly(&self) -> Vec<C64> {
        let r = self.r;
        let mut coeffs = vec![ONE];
        let mut m = Self::identity(r);
        for k in 1..=r {
            let am = self * &m;
            let ck = -am.trace() / (k as f64);
            coeffs.push(ck);
            m = am + Self::identity(r).scale(ck);
        }
        coeffs
    }
}

impl Add for EndMatrix {
    type Output = EndMatrix;
    fn add(mut self, rhs: EndMatrix) -> EndMatrix {
        assert_eq!(self.r, rhs.r);
        for (a, b) in self.e.iter_mut().zip(rhs.e.iter()) {
            *a += *b;
        }
        self
    }
}

impl Sub for EndMatrix {
    type Output = EndMatrix;
    fn sub(mut self, rhs: EndMatrix) -> EndMatrix {
        assert_eq!(self.r, rhs.r);
        for (a, b) in self.e.iter_mut().zip(rhs.e.iter()) {
            *a -= *b;
        }
        self
    }
}

impl Neg for EndMatrix {
    type Output = EndMatrix;
    fn neg(mut self) -> EndMatrix {
        for a in self.e.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Mul for &EndMatrix {
    type Output = EndMatrix;
    fn mul(self, rhs: &EndMatrix) -> EndMatrix {
        let r = self.r;
        assert_eq!(rhs.r, r);
        let mut out = EndMatrix::zeros(r);
        for i in 0..r {
            for k in 0..r {
                let aik = self.e[i * r + k];
                if aik == ZERO {
                    continue;
                }
                for j in 0..r {
                    out.e[i * r + j] += aik * rhs.e[k * r + j];
                }
            }
        }
        out
    }
}

/// [a, b] = ab - ba.
pub fn commutator(a: &EndMatrix, b: &EndMatrix) -> EndMatrix {
    (a * b) - (b * a)
}

/// Multiply-accumulate on raw row-major slices: out += a*b for r x r blocks.
/// The field containers store flat complex slices and call this in the hot
/// loops to avoid round trips through `EndMatrix`.
#[inline]
pub fn mat_mul_acc(r: usize, a: &[C64], b: &[C64], out: &mut [C64]) {
    for i in 0..r {
        for k in 0..r {
            let aik = a[i * r + k];
            if aik == ZERO {
                continue;
            }
            let brow = &b[k * r..(k + 1) * r];
            let orow = &mut out[i * r..(i + 1) * r];
            for j in 0..r {
                orow[j] += aik * brow[j];
            }
        }
    }
}

/// out += [a, b] on raw row-major slices.
#[inline]
pub fn commutator_acc(r: usize, a: &[C64], b: &[C64], out: &mut [C64]) {
    mat_mul_acc(r, a, b, out);
    for i in 0..r {
        for k in 0..r {
            let bik = b[i * r + k];
            if bik == ZERO {
                continue;
            }
            let arow = &a[k * r..(k + 1) * r];
            let orow = &mut out[i * r..(i + 1) * r];
            for j in 0..r {
                orow[j] -= bik * arow[j];
            }
        }
    }
}
