//! Group-IV electron–nucleus Hamiltonians in the microwave rotating frame.
//!
//! Everything is in ordinary frequency units (Hz, Hz/T); the factor 2π only
//! enters inside propagators, `U(t) = exp(-i 2π H t)`. The two-qubit ordering
//! is electron ⊗ nucleus.

use crate::error::{Error, Result};
use crate::linalg::{self, c, kron, pauli_x, pauli_y, pauli_z, CMatrix, HermitianEigen};
use crate::state::{QuantumState, Unitary};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Hamiltonian constants. Frequencies in Hz, gyromagnetic ratios in Hz/T,
/// field in tesla with ẑ along the defect symmetry axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystemParams {
    pub a_par: f64,
    pub a_perp: f64,
    pub gamma_e: f64,
    pub gamma_n: f64,
    pub b: [f64; 3],
    pub omega: f64,
    pub omega_mw: f64,
    pub lambda_so: f64,
}

/// ²⁹Si nuclear gyromagnetic ratio in Hz/T.
pub const GAMMA_N_SI29: f64 = -8.465e6;
/// Electron gyromagnetic ratio used when none is given, Hz/T.
pub const GAMMA_E_DEFAULT: f64 = 14.0e9;
/// SiV ground-state spin-orbit splitting, Hz.
pub const LAMBDA_SO_SIV: f64 = 50.0e9;

impl SpinSystemParams {
    /// Isotropic ²⁹Si-like coupling with the microwave drive on resonance
    /// (δ = 0) and no Rabi drive.
    pub fn isotropic(a: f64, bx: f64, bz: f64) -> Self {
        SpinSystemParams {
            a_par: a,
            a_perp: a,
            gamma_e: GAMMA_E_DEFAULT,
            gamma_n: GAMMA_N_SI29,
            b: [bx, 0.0, bz],
            omega: 0.0,
            omega_mw: GAMMA_E_DEFAULT * bz,
            lambda_so: LAMBDA_SO_SIV,
        }
    }

    pub fn with_field(mut self, bx: f64, bz: f64) -> Self {
        self.b = [bx, 0.0, bz];
        self.omega_mw = self.gamma_e * bz;
        self
    }

    pub fn with_a_par(mut self, a_par: f64) -> Self {
        self.a_par = a_par;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a_par,
            self.a_perp,
            self.gamma_e,
            self.gamma_n,
            self.b[0],
            self.b[1],
            self.b[2],
            self.omega,
            self.omega_mw,
            self.lambda_so,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite spin parameter".into()));
        }
        if self.a_par < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "A_par must be non-negative, got {}",
                self.a_par
            )));
        }
        Ok(())
    }

    /// `γe·sqrt(Bx²+By²) < 0.1·λSO`: the electron stays quantised along ẑ.
    pub fn secular_valid(&self) -> bool {
        let transverse = (self.b[0] * self.b[0] + self.b[1] * self.b[1]).sqrt();
        (self.gamma_e * transverse).abs() < 0.1 * self.lambda_so
    }

    /// Electron Zeeman splitting along the symmetry axis, Hz.
    pub fn electron_splitting(&self) -> f64 {
        (self.gamma_e * self.b[2]).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatingFrameParams {
    /// δ = ω − γe·Bz, Hz.
    pub delta: f64,
}

impl RotatingFrameParams {
    pub fn from_params(p: &SpinSystemParams) -> Self {
        RotatingFrameParams {
            delta: p.omega_mw - p.gamma_e * p.b[2],
        }
    }

    pub fn consistent_with(&self, p: &SpinSystemParams) -> bool {
        (self.delta - RotatingFrameParams::from_params(p).delta).abs() <= 1.0
    }
}

#[derive(Debug, Clone)]
pub struct RotatingHamiltonian {
    pub matrix: CMatrix,
    /// False when the transverse field is large enough to tilt the electron
    /// quantisation axis; the matrix is still returned.
    pub secular_valid: bool,
}

pub fn rotating_hamiltonian(
    p: &SpinSystemParams,
    rf: &RotatingFrameParams,
    include_a_perp: bool,
) -> RotatingHamiltonian {
    let half = c(0.5, 0.0);
    let (sx, sy, sz) = (pauli_x() * half, pauli_y() * half, pauli_z() * half);
    let id = linalg::identity(2);
    let field = &sx * c(p.b[0], 0.0) + &sy * c(p.b[1], 0.0) + &sz * c(p.b[2], 0.0);
    let mut h = kron(&sz, &id) * c(rf.delta, 0.0)
        + kron(&sx, &id) * c(p.omega, 0.0)
        + kron(&sz, &sz) * c(p.a_par, 0.0)
        + kron(&id, &field) * c(p.gamma_n, 0.0);
    if include_a_perp {
        h += (kron(&sx, &sx) + kron(&sy, &sy)) * c(p.a_perp, 0.0);
    }
    RotatingHamiltonian {
        matrix: h,
        secular_valid: p.secular_valid(),
    }
}

/// Secular free-precession Hamiltonian used by the gate compiler:
/// on resonance (δ = 0), no drive, A⊥ dropped.
pub fn secular_hamiltonian(p: &SpinSystemParams) -> CMatrix {
    let mut q = *p;
    q.omega = 0.0;
    rotating_hamiltonian(&q, &RotatingFrameParams { delta: 0.0 }, false).matrix
}

/// Lab-frame Hamiltonian without the microwave drive (used to validate the
/// secular approximation: the electron Zeeman term is kept explicitly).
pub fn lab_hamiltonian(p: &SpinSystemParams, include_a_perp: bool) -> CMatrix {
    let mut q = *p;
    q.omega = 0.0;
    rotating_hamiltonian(
        &q,
        &RotatingFrameParams {
            delta: -p.gamma_e * p.b[2],
        },
        include_a_perp,
    )
    .matrix
}

/// Conditional nuclear precession vectors in rad/s for electron `S = ±1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecessionAxes {
    pub omega_plus: [f64; 3],
    pub omega_minus: [f64; 3],
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl PrecessionAxes {
    pub fn plus_magnitude(&self) -> f64 {
        norm3(self.omega_plus)
    }

    pub fn minus_magnitude(&self) -> f64 {
        norm3(self.omega_minus)
    }

    /// `ω̂+ · ω̂−`.
    pub fn unit_dot(&self) -> f64 {
        let (a, b) = (self.omega_plus, self.omega_minus);
        (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (norm3(a) * norm3(b))
    }

    /// The strongly coupled regime where the two axes point roughly
    /// opposite ways.
    pub fn antiparallel_dominated(&self) -> bool {
        self.unit_dot() < 0.0
    }
}

pub fn precession_axes(p: &SpinSystemParams) -> Result<PrecessionAxes> {
    if p.b[1] != 0.0 {
        return Err(Error::FieldNotInXzPlane(p.b[1]));
    }
    let w = 2.0 * PI;
    let x = w * p.gamma_n * p.b[0] / 2.0;
    let z = w * p.gamma_n * p.b[2] / 2.0;
    let hf = w * p.a_par / 4.0;
    Ok(PrecessionAxes {
        omega_plus: [x, 0.0, z + hf],
        omega_minus: [x, 0.0, z - hf],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResonanceKind {
    Conditional,
    Unconditional,
}

/// Interpulse spacing τ (seconds) satisfying `(|ω+| − |ω−|) τ = (2n−1)π`
/// (conditional) or `= 2nπ` (unconditional). A `τf − π − 2τf − π − τf`
/// unit is on resonance when `2τf = τ`.
pub fn resonance_spacing(p: &SpinSystemParams, n: u32, kind: ResonanceKind) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("resonance index must be positive".into()));
    }
    let axes = precession_axes(p)?;
    let (wp, wm) = (axes.plus_magnitude(), axes.minus_magnitude());
    let diff = (wp - wm).abs();
    if diff <= 1e-12 * wp.max(wm) || diff == 0.0 {
        return Err(Error::DegenerateResonance);
    }
    let multiple = match kind {
        ResonanceKind::Conditional => (2 * n - 1) as f64,
        ResonanceKind::Unconditional => (2 * n) as f64,
    };
    Ok(multiple * PI / diff)
}

/// Exact propagator for a time-independent Hermitian `H` (Hz), reusable for
/// many durations.
#[derive(Debug, Clone)]
pub struct FreeEvolution {
    eig: HermitianEigen,
}

impl FreeEvolution {
    pub fn new(h: &CMatrix) -> Result<Self> {
        let defect = linalg::hermiticity_defect(h);
        let scale = linalg::frobenius(h).max(1.0);
        if defect > 1e-12 * scale {
            return Err(Error::NotHermitian(defect));
        }
        Ok(FreeEvolution {
            eig: HermitianEigen::new(h),
        })
    }

    pub fn propagator(&self, t: f64) -> Result<Unitary> {
        if t < 0.0 {
            return Err(Error::InvalidParameter(format!("negative duration {t}")));
        }
        Ok(Unitary::from_trusted(self.eig.propagator(t)))
    }

    /// Same as [`propagator`](Self::propagator) without the sign check, for
    /// hot loops whose durations are already validated.
    pub fn matrix_at(&self, t: f64) -> CMatrix {
        self.eig.propagator(t)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.values
    }
}

/// Applies `exp(-i 2π H t)` to `targets` of `state`.
pub fn evolve(state: &QuantumState, h: &CMatrix, t: f64, targets: &[usize]) -> Result<QuantumState> {
    let u = FreeEvolution::new(h)?.propagator(t)?;
    state.apply_gate(&u, targets)
}

/// Finite-duration electron π pulse about x under the driven rotating-frame
/// Hamiltonian (validation mode only; the compiler uses ideal pulses).
pub fn finite_pi_pulse(p: &SpinSystemParams) -> Result<Unitary> {
    if p.omega <= 0.0 {
        return Err(Error::InvalidParameter("finite pulse needs Ω > 0".into()));
    }
    let h = rotating_hamiltonian(p, &RotatingFrameParams::from_params(p), false).matrix;
    FreeEvolution::new(&h)?.propagator(1.0 / (2.0 * p.omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, identity, rotation};
    use approx::assert_relative_eq;

    fn siv() -> SpinSystemParams {
        SpinSystemParams::isotropic(70e6, 0.6, 0.6)
    }

    #[test]
    fn zero_couplings_give_zero_matrix() {
        let p = SpinSystemParams {
            a_par: 0.0,
            a_perp: 0.0,
            gamma_e: 0.0,
            gamma_n: 0.0,
            b: [0.0; 3],
            omega: 0.0,
            omega_mw: 0.0,
            lambda_so: 1.0,
        };
        let h = rotating_hamiltonian(&p, &RotatingFrameParams::from_params(&p), true);
        assert_eq!(frobenius(&h.matrix), 0.0);
    }

    #[test]
    fn collinear_field_is_diagonal() {
        let p = SpinSystemParams::isotropic(70e6, 0.0, 0.6);
        let h = rotating_hamiltonian(&p, &RotatingFrameParams { delta: 0.0 }, false).matrix;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(h[(i, j)].norm(), 0.0);
                }
            }
        }
        let zn = p.gamma_n * 0.6 / 2.0;
        let expected = [70e6 / 4.0 + zn, -70e6 / 4.0 - zn, -70e6 / 4.0 + zn, 70e6 / 4.0 - zn];
        for (i, e) in expected.iter().enumerate() {
            assert_relative_eq!(h[(i, i)].re, *e, max_relative = 1e-14);
        }
    }

    #[test]
    fn secular_flag() {
        // γe·Bx = 4.2 GHz sits below 0.1·λSO = 5 GHz.
        assert!(siv().with_field(0.3, 0.6).secular_valid());
        // 8.4 GHz at the 0.6 T working point is flagged, not rejected.
        assert!(!siv().secular_valid());
        let strong = siv().with_field(3.0, 0.6);
        assert!(!strong.secular_valid());
        let h = rotating_hamiltonian(&strong, &RotatingFrameParams { delta: 0.0 }, false);
        assert!(!h.secular_valid);
    }

    #[test]
    fn rotating_frame_detuning() {
        let mut p = siv();
        p.omega_mw += 2.5e6;
        let rf = RotatingFrameParams::from_params(&p);
        assert_relative_eq!(rf.delta, 2.5e6, epsilon = 1e-3);
        assert!(rf.consistent_with(&p));
        assert!(!RotatingFrameParams { delta: rf.delta + 5.0 }.consistent_with(&p));
    }

    #[test]
    fn axes_limits() {
        let collinear = precession_axes(&SpinSystemParams::isotropic(70e6, 0.0, 0.6)).unwrap();
        assert_eq!(collinear.omega_plus[0], 0.0);
        assert_eq!(collinear.omega_minus[0], 0.0);
        let free = precession_axes(&SpinSystemParams::isotropic(0.0, 0.6, 0.6)).unwrap();
        assert_eq!(free.omega_plus, free.omega_minus);
        let mut p = siv();
        p.b[1] = 0.1;
        assert!(matches!(precession_axes(&p), Err(Error::FieldNotInXzPlane(_))));
    }

    #[test]
    fn siv_axes_are_antiparallel_dominated() {
        let axes = precession_axes(&siv()).unwrap();
        // Direct evaluation: w± = 2π(γn Bx/2, 0, γn Bz/2 ± A/4).
        let x: f64 = -8.465e6 * 0.3;
        let zp: f64 = -8.465e6 * 0.3 + 17.5e6;
        let zm: f64 = -8.465e6 * 0.3 - 17.5e6;
        let dot = (x * x + zp * zm) / ((x * x + zp * zp).sqrt() * (x * x + zm * zm).sqrt());
        assert_relative_eq!(axes.unit_dot(), dot, epsilon = 1e-14);
        assert!(axes.antiparallel_dominated());
        assert!(axes.unit_dot() < -0.95);
    }

    #[test]
    fn resonance_ratios() {
        let p = siv();
        let c1 = resonance_spacing(&p, 1, ResonanceKind::Conditional).unwrap();
        let c2 = resonance_spacing(&p, 2, ResonanceKind::Conditional).unwrap();
        let u1 = resonance_spacing(&p, 1, ResonanceKind::Unconditional).unwrap();
        assert_relative_eq!(c2 / c1, 3.0, epsilon = 1e-12);
        assert_relative_eq!(u1 / c1, 2.0, epsilon = 1e-12);
        assert!(c1 > 0.0);
        let degenerate = SpinSystemParams::isotropic(0.0, 0.6, 0.6);
        assert!(matches!(
            resonance_spacing(&degenerate, 1, ResonanceKind::Conditional),
            Err(Error::DegenerateResonance)
        ));
    }

    #[test]
    fn evolve_basics() {
        let h = secular_hamiltonian(&siv());
        let fe = FreeEvolution::new(&h).unwrap();
        assert!(frobenius(&(fe.propagator(0.0).unwrap().into_matrix() - identity(4))) < 1e-14);
        let a = fe.propagator(3.1e-8).unwrap();
        let b = fe.propagator(4.7e-8).unwrap();
        let ab = fe.propagator(7.8e-8).unwrap();
        assert!(frobenius(&(a.then(&b).into_matrix() - ab.into_matrix())) < 1e-10);
        assert!(fe.propagator(-1.0).is_err());
        // σz/2 at 1 MHz for 1 μs: phase 2π on each level, identity up to -1.
        let sz2 = pauli_z() * c(0.5e6, 0.0);
        let u = FreeEvolution::new(&sz2).unwrap().propagator(1e-6).unwrap();
        assert!(frobenius(&(u.into_matrix() + identity(2))) < 1e-9);
    }

    #[test]
    fn commutes_with_electron_z_without_drive() {
        let mut p = siv().with_field(0.0, 0.6);
        p.omega_mw += 1.3e6;
        let h = rotating_hamiltonian(&p, &RotatingFrameParams::from_params(&p), false).matrix;
        let zi = kron(&pauli_z(), &identity(2));
        assert!(frobenius(&linalg::commutator(&h, &zi)) < 1e-12 * frobenius(&h));
    }

    #[test]
    fn conditional_blocks_match_axis_rotations() {
        let p = siv();
        let axes = precession_axes(&p).unwrap();
        let h = secular_hamiltonian(&p);
        let t = 37.3e-9;
        let u = FreeEvolution::new(&h).unwrap().matrix_at(t);
        for (block, w) in [(0usize, axes.omega_plus), (2, axes.omega_minus)] {
            // H = (ω/2π)·σ generates a Bloch rotation by 2|ω|t about ω̂.
            let angle = 2.0 * norm3(w) * t;
            let r = rotation(w, angle);
            let sub = u.view((block, block), (2, 2)).into_owned();
            assert!(frobenius(&(sub - r)) < 1e-9);
        }
    }

    #[test]
    fn finite_pulse_flips_electron() {
        let mut p = siv().with_field(0.0, 0.6);
        p.a_par = 0.0;
        p.gamma_n = 0.0;
        p.omega = 50e6;
        let u = finite_pi_pulse(&p).unwrap();
        let expected = kron(&crate::linalg::rx(PI), &identity(2));
        assert!(frobenius(&(u.into_matrix() - expected)) < 1e-9);
    }
}
