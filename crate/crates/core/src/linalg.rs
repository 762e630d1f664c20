//! Thin wrappers over LAPACK: ordered real generalized Schur decomposition
//! and banded LU solves.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues with modulus below this fraction of one are classed stable.
pub const UNIT_CIRCLE_THRESHOLD: f64 = 1.0 - 1e-8;

/// Ordered real QZ decomposition `S = Qᵀ B Z`, `T = Qᵀ A Z` with the stable
/// generalized eigenvalues `λ = α/β` of the pencil `B - λA` leading.
#[derive(Debug, Clone)]
pub struct OrderedQz {
    pub s: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub n_stable: usize,
    /// Generalized eigenvalues as `(re, im)`; infinite ones carry `inf`.
    pub eigenvalues: Vec<(f64, f64)>,
}

extern "C" fn select_stable(ar: *const f64, ai: *const f64, b: *const f64) -> i32 {
    // SAFETY: LAPACK passes valid pointers to single scalars.
    let (ar, ai, b) = unsafe { (*ar, *ai, *b) };
    i32::from(ar.hypot(ai) < UNIT_CIRCLE_THRESHOLD * b.abs())
}

/// Computes the ordered QZ decomposition of the pencil `(b, a)`.
pub fn qz_ordered(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<OrderedQz> {
    let n = a.nrows();
    assert!(a.is_square() && b.shape() == a.shape());
    let ni = n as i32;
    let mut s = b.clone();
    let mut t = a.clone();
    let mut vsl = DMatrix::<f64>::zeros(n, n);
    let mut vsr = DMatrix::<f64>::zeros(n, n);
    let (mut alphar, mut alphai, mut beta) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut sdim = 0i32;
    let mut info = 0i32;
    let mut bwork = vec![0i32; n];
    let lwork = (8 * n + 16).max(64 * n);
    let mut work = vec![0.0; lwork];
    // SAFETY: all buffers are sized per the LAPACK contract for dgges.
    unsafe {
        lapack::dgges(
            b'N',
            b'V',
            b'S',
            Some(select_stable),
            ni,
            s.as_mut_slice(),
            ni,
            t.as_mut_slice(),
            ni,
            &mut sdim,
            &mut alphar,
            &mut alphai,
            &mut beta,
            vsl.as_mut_slice(),
            ni,
            vsr.as_mut_slice(),
            ni,
            &mut work,
            lwork as i32,
            &mut bwork,
            &mut info,
        );
    }
    if info != 0 {
        let msg = if info == ni + 2 {
            "eigenvalue ordering changed after reordering (near-unit-root ambiguity)".to_string()
        } else if info > 0 && info <= ni {
            format!("QZ iteration failed (info = {info})")
        } else {
            format!("dgges returned info = {info}")
        };
        return Err(Error::LinearAlgebra(msg));
    }
    let eigenvalues = (0..n)
        .map(|i| {
            if beta[i] == 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                (alphar[i] / beta[i], alphai[i] / beta[i])
            }
        })
        .collect();
    Ok(OrderedQz { s, t, z: vsr, n_stable: sdim as usize, eigenvalues })
}

/// Banded matrix in LAPACK `dgbsv` storage with room for LU fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ldab, data: vec![0.0; ldab * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i + self.ku >= j && j + self.kl >= i
    }

    /// Stores `a[i, j]`; panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let row = self.kl + self.ku + i - j;
        self.data[j * self.ldab + row] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if !self.in_band(i, j) {
            return 0.0;
        }
        self.data[j * self.ldab + self.kl + self.ku + i - j]
    }

    /// Solves `A x = rhs` in place, consuming the factorisation storage.
    pub fn solve(mut self, rhs: &mut [f64]) -> Result<()> {
        assert_eq!(rhs.len(), self.n);
        let n = self.n as i32;
        let mut ipiv = vec![0i32; self.n];
        let mut info = 0;
        // SAFETY: storage follows the dgbsv band layout with ldab = 2kl+ku+1.
        unsafe {
            lapack::dgbsv(
                n,
                self.kl as i32,
                self.ku as i32,
                1,
                &mut self.data,
                self.ldab as i32,
                &mut ipiv,
                rhs,
                n,
                &mut info,
            );
        }
        match info {
            0 => Ok(()),
            i if i > 0 => Err(Error::LinearAlgebra(format!("banded system singular at pivot {i}"))),
            i => Err(Error::LinearAlgebra(format!("dgbsv returned info = {i}"))),
        }
    }
}
