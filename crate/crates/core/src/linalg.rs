//! Small dense complex linear-algebra helpers shared by every module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Multi-qubit operators use the
//! big-endian Kronecker convention: the first factor acts on wire 0, which is
//! the most significant bit of a basis-state index.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::PI;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn hadamard() -> CMatrix {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    CMatrix::from_row_slice(2, 2, &[s, s, s, -s])
}

/// Rotation `exp(-i θ/2 n·σ)` about the unit axis `n`.
pub fn rotation(axis: [f64; 3], angle: f64) -> CMatrix {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (nx, ny, nz) = (axis[0] / norm, axis[1] / norm, axis[2] / norm);
    let (s, co) = (angle / 2.0).sin_cos();
    CMatrix::from_row_slice(
        2,
        2,
        &[
            c(co, -s * nz),
            c(-s * ny, -s * nx),
            c(s * ny, -s * nx),
            c(co, s * nz),
        ],
    )
}

pub fn rx(angle: f64) -> CMatrix {
    rotation([1.0, 0.0, 0.0], angle)
}

pub fn ry(angle: f64) -> CMatrix {
    rotation([0.0, 1.0, 0.0], angle)
}

pub fn rz(angle: f64) -> CMatrix {
    rotation([0.0, 0.0, 1.0], angle)
}

pub fn cz() -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_vec(vec![ONE, ONE, ONE, -ONE]))
}

pub fn cnot() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(1, 1)] = ONE;
    m[(2, 3)] = ONE;
    m[(3, 2)] = ONE;
    m
}

pub fn swap() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(1, 2)] = ONE;
    m[(2, 1)] = ONE;
    m[(3, 3)] = ONE;
    m
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all(factors: &[CMatrix]) -> CMatrix {
    factors
        .iter()
        .fold(CMatrix::identity(1, 1), |acc, f| acc.kronecker(f))
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Frobenius distance of `U†U` from the identity.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    frobenius(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    frobenius(&(h - h.adjoint()))
}

/// Eigen-decomposition of a Hermitian matrix, used to build exact propagators.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(h: &CMatrix) -> Self {
        // Symmetrise first so round-off never leaks an anti-Hermitian part.
        let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(sym);
        HermitianEigen {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `exp(-i 2π H t)` for `H` in Hz and `t` in seconds.
    pub fn propagator(&self, t: f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let phase = C64::from_polar(1.0, -2.0 * PI * lambda * t);
            for i in 0..n {
                scaled[(i, j)] *= phase;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// `exp(-i 2π H t)` for a Hermitian generator given in Hz.
pub fn hermitian_propagator(h: &CMatrix, t: f64) -> CMatrix {
    HermitianEigen::new(h).propagator(t)
}

/// `|Tr(A† B)|`.
pub fn trace_overlap(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.conj() * y)
        .sum::<C64>()
        .norm()
}
