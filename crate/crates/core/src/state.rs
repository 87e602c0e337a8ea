//! Dense state-vector and density-matrix engine with role-labelled wires.
//!
//! Wire 0 is the most significant bit of a basis index, so a register
//! `[Electron, Nuclear(0), Photon(0)]` stores `|e n p>` in the usual
//! Kronecker order and appending a photon is `|psi> ⊗ |0>`.

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, HermitianEigen, C64, ONE, ZERO};
use rand::{Rng, RngCore};

pub const NORM_TOL: f64 = 1e-12;
pub const UNITARY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = -1e-10;
pub const MAX_QUBITS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QubitRole {
    Electron,
    Nuclear(usize),
    Photon(usize),
}

impl std::fmt::Display for QubitRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QubitRole::Electron => write!(f, "e"),
            QubitRole::Nuclear(i) => write!(f, "n{i}"),
            QubitRole::Photon(i) => write!(f, "p{i}"),
        }
    }
}

/// At most one electron; nuclear and photon indices unique and contiguous
/// from zero. Photon-only registers (after the spins are measured out) are
/// allowed.
pub fn validate_wires(wires: &[QubitRole]) -> Result<()> {
    let electrons = wires.iter().filter(|w| **w == QubitRole::Electron).count();
    if electrons > 1 {
        return Err(Error::InvalidRegister("more than one electron wire".into()));
    }
    let mut nuclear: Vec<usize> = wires
        .iter()
        .filter_map(|w| match w {
            QubitRole::Nuclear(i) => Some(*i),
            _ => None,
        })
        .collect();
    let mut photons: Vec<usize> = wires
        .iter()
        .filter_map(|w| match w {
            QubitRole::Photon(i) => Some(*i),
            _ => None,
        })
        .collect();
    nuclear.sort_unstable();
    photons.sort_unstable();
    for (label, idx) in [("nuclear", &nuclear), ("photon", &photons)] {
        if idx.iter().enumerate().any(|(k, &i)| k != i) {
            return Err(Error::InvalidRegister(format!(
                "{label} indices must be unique and contiguous from 0: {idx:?}"
            )));
        }
    }
    if wires.len() > MAX_QUBITS {
        return Err(Error::SizeLimit(format!("{} qubits", wires.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Amplitudes {
    Pure(CVector),
    Mixed(CMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    wires: Vec<QubitRole>,
    data: Amplitudes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unitary {
    matrix: CMatrix,
    arity: usize,
}

impl Unitary {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim || !dim.is_power_of_two() || dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: dim.next_power_of_two(),
                got: matrix.ncols(),
            });
        }
        let defect = linalg::unitarity_defect(&matrix);
        if defect > UNITARY_TOL {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Unitary {
            arity: dim.trailing_zeros() as usize,
            matrix,
        })
    }

    /// Wraps a matrix that is unitary by construction (products of
    /// propagators), skipping the check.
    pub fn from_trusted(matrix: CMatrix) -> Self {
        let arity = matrix.nrows().trailing_zeros() as usize;
        Unitary { matrix, arity }
    }

    pub fn identity(arity: usize) -> Self {
        Unitary::from_trusted(linalg::identity(1 << arity))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dagger(&self) -> Unitary {
        Unitary::from_trusted(self.matrix.adjoint())
    }

    /// `self` followed by `next`, i.e. the matrix `next · self`.
    pub fn then(&self, next: &Unitary) -> Unitary {
        Unitary::from_trusted(&next.matrix * &self.matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    /// Eigenvector for outcome `m` (0 ↔ +1 eigenvalue).
    pub fn eigenvector(self, m: u8) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let sign = if m == 0 { 1.0 } else { -1.0 };
        match self {
            Basis::Z if m == 0 => [ONE, ZERO],
            Basis::Z => [ZERO, ONE],
            Basis::X => [C64::new(h, 0.0), C64::new(sign * h, 0.0)],
            Basis::Y => [C64::new(h, 0.0), C64::new(0.0, sign * h)],
        }
    }
}

pub enum Selection<'a> {
    Forced(u8),
    Sampled(&'a mut dyn RngCore),
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub outcome: u8,
    pub state: QuantumState,
    pub probability: f64,
}

fn bit_of(wire: usize, n: usize) -> usize {
    n - 1 - wire
}

fn check_targets(targets: &[usize], n: usize) -> Result<()> {
    for (k, &t) in targets.iter().enumerate() {
        if t >= n {
            return Err(Error::WireOutOfRange { wire: t, count: n });
        }
        if targets[..k].contains(&t) {
            return Err(Error::DuplicateTarget(t));
        }
    }
    Ok(())
}

/// Applies a `2^k × 2^k` operator to the listed wires of a flat amplitude
/// buffer of `n` qubits. `m` need not be unitary.
fn apply_local(amps: &mut [C64], n: usize, m: &CMatrix, targets: &[usize]) {
    let k = targets.len();
    let sub = 1usize << k;
    let offsets: Vec<usize> = (0..sub)
        .map(|s| {
            targets.iter().enumerate().fold(0usize, |acc, (j, &w)| {
                if (s >> (k - 1 - j)) & 1 == 1 {
                    acc | (1 << bit_of(w, n))
                } else {
                    acc
                }
            })
        })
        .collect();
    let mask: usize = offsets[sub - 1];
    let mut gathered = vec![ZERO; sub];
    for base in 0..(1usize << n) {
        if base & mask != 0 {
            continue;
        }
        for (s, off) in offsets.iter().enumerate() {
            gathered[s] = amps[base | off];
        }
        for (r, off) in offsets.iter().enumerate() {
            let mut acc = ZERO;
            for (s, g) in gathered.iter().enumerate() {
                acc += m[(r, s)] * g;
            }
            amps[base | off] = acc;
        }
    }
}

impl QuantumState {
    pub fn from_pure(wires: Vec<QubitRole>, amplitudes: CVector) -> Result<Self> {
        validate_wires(&wires)?;
        let dim = 1usize << wires.len();
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("state norm {norm}")));
        }
        Ok(QuantumState {
            wires,
            data: Amplitudes::Pure(amplitudes),
        })
    }

    pub fn from_density(wires: Vec<QubitRole>, rho: CMatrix) -> Result<Self> {
        validate_wires(&wires)?;
        let dim = 1usize << wires.len();
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: rho.nrows(),
            });
        }
        let herm = linalg::hermiticity_defect(&rho);
        if herm > 1e-9 {
            return Err(Error::NotHermitian(herm));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("trace {tr}")));
        }
        Ok(QuantumState {
            wires,
            data: Amplitudes::Mixed(rho),
        })
    }

    /// Product of computational basis states, one bit per wire.
    pub fn basis(wires: Vec<QubitRole>, bits: &[u8]) -> Result<Self> {
        if bits.len() != wires.len() {
            return Err(Error::DimensionMismatch {
                expected: wires.len(),
                got: bits.len(),
            });
        }
        let n = wires.len();
        let index = bits
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | usize::from(b & 1));
        let mut v = CVector::zeros(1 << n);
        v[index] = ONE;
        QuantumState::from_pure(wires, v)
    }

    pub fn wires(&self) -> &[QubitRole] {
        &self.wires
    }

    pub fn num_qubits(&self) -> usize {
        self.wires.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.wires.len()
    }

    pub fn amplitudes(&self) -> &Amplitudes {
        &self.data
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, Amplitudes::Pure(_))
    }

    pub fn as_pure(&self) -> Option<&CVector> {
        match &self.data {
            Amplitudes::Pure(v) => Some(v),
            Amplitudes::Mixed(_) => None,
        }
    }

    pub fn wire_of(&self, role: QubitRole) -> Option<usize> {
        self.wires.iter().position(|w| *w == role)
    }

    pub fn photon_count(&self) -> usize {
        self.wires
            .iter()
            .filter(|w| matches!(w, QubitRole::Photon(_)))
            .count()
    }

    pub fn density_matrix(&self) -> CMatrix {
        match &self.data {
            Amplitudes::Pure(v) => v * v.adjoint(),
            Amplitudes::Mixed(m) => m.clone(),
        }
    }

    pub fn to_mixed(&self) -> QuantumState {
        QuantumState {
            wires: self.wires.clone(),
            data: Amplitudes::Mixed(self.density_matrix()),
        }
    }

    pub fn trace(&self) -> f64 {
        match &self.data {
            Amplitudes::Pure(v) => v.norm_squared(),
            Amplitudes::Mixed(m) => m.trace().re,
        }
    }

    pub fn apply_gate(&self, u: &Unitary, targets: &[usize]) -> Result<QuantumState> {
        let mut out = self.clone();
        out.apply_gate_mut(u, targets)?;
        Ok(out)
    }

    pub fn apply_gate_mut(&mut self, u: &Unitary, targets: &[usize]) -> Result<()> {
        let n = self.wires.len();
        if u.arity() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: u.arity(),
                got: targets.len(),
            });
        }
        check_targets(targets, n)?;
        self.apply_operator(u.matrix(), targets);
        Ok(())
    }

    /// Applies an arbitrary (possibly non-unitary) local operator without
    /// renormalising. Targets must already be validated.
    fn apply_operator(&mut self, m: &CMatrix, targets: &[usize]) {
        let n = self.wires.len();
        match &mut self.data {
            Amplitudes::Pure(v) => apply_local(v.as_mut_slice(), n, m, targets),
            Amplitudes::Mixed(rho) => {
                // ρ → M ρ M†: act on the ket index of every column, then on
                // the bra index of every row.
                let dim = 1usize << n;
                let mconj = m.map(|z| z.conj());
                for col in 0..dim {
                    let mut column: Vec<C64> = rho.column(col).iter().copied().collect();
                    apply_local(&mut column, n, m, targets);
                    for (r, z) in column.into_iter().enumerate() {
                        rho[(r, col)] = z;
                    }
                }
                for row in 0..dim {
                    let mut r: Vec<C64> = rho.row(row).iter().copied().collect();
                    apply_local(&mut r, n, &mconj, targets);
                    for (cidx, z) in r.into_iter().enumerate() {
                        rho[(row, cidx)] = z;
                    }
                }
            }
        }
    }

    /// Appends a photon wire in the computational state `initial`.
    pub fn add_photon_qubit(&self, initial: u8) -> Result<QuantumState> {
        let v = self.as_pure().ok_or(Error::RequiresPure)?;
        let index = self.photon_count();
        let mut wires = self.wires.clone();
        wires.push(QubitRole::Photon(index));
        validate_wires(&wires)?;
        let mut out = CVector::zeros(v.len() * 2);
        let bit = usize::from(initial & 1);
        for (i, a) in v.iter().enumerate() {
            out[2 * i + bit] = *a;
        }
        Ok(QuantumState {
            wires,
            data: Amplitudes::Pure(out),
        })
    }

    /// Projective single-wire measurement. The collapsed state keeps the
    /// wire, now in the measured basis eigenstate.
    pub fn project_measure(
        &self,
        wire: usize,
        basis: Basis,
        selection: Selection<'_>,
    ) -> Result<Measurement> {
        let n = self.wires.len();
        if wire >= n {
            return Err(Error::WireOutOfRange { wire, count: n });
        }
        let projector = |m: u8| {
            let e = basis.eigenvector(m);
            CMatrix::from_fn(2, 2, |r, c| e[r] * e[c].conj())
        };
        let mut branch0 = self.clone();
        branch0.apply_operator(&projector(0), &[wire]);
        let p0 = branch0.trace().clamp(0.0, 1.0);
        let outcome = match selection {
            Selection::Forced(m) => m & 1,
            Selection::Sampled(rng) => {
                if rng.random::<f64>() < p0 {
                    0
                } else {
                    1
                }
            }
        };
        let (mut collapsed, probability) = if outcome == 0 {
            (branch0, p0)
        } else {
            let mut b = self.clone();
            b.apply_operator(&projector(1), &[wire]);
            let p = b.trace().clamp(0.0, 1.0);
            (b, p)
        };
        if probability < 1e-12 {
            return Err(Error::ZeroProbabilityOutcome {
                outcome,
                probability,
            });
        }
        collapsed.scale_to_unit_trace();
        Ok(Measurement {
            outcome,
            state: collapsed,
            probability,
        })
    }

    fn scale_to_unit_trace(&mut self) {
        match &mut self.data {
            Amplitudes::Pure(v) => {
                let n = v.norm();
                *v /= C64::new(n, 0.0);
            }
            Amplitudes::Mixed(m) => {
                let t = m.trace();
                *m /= t;
            }
        }
    }

    /// For a pure state in which `wire` is the computational basis state
    /// `bit`, removes the wire and returns the remaining (renormalised)
    /// amplitudes. Any weight on the other bit value is discarded.
    pub fn remove_wire_projected(&self, wire: usize, bit: u8) -> Result<(QuantumState, f64)> {
        let v = self.as_pure().ok_or(Error::RequiresPure)?;
        let n = self.wires.len();
        if wire >= n {
            return Err(Error::WireOutOfRange { wire, count: n });
        }
        let b = bit_of(wire, n);
        let low_mask = (1usize << b) - 1;
        let mut out = CVector::zeros(v.len() / 2);
        for (j, slot) in out.iter_mut().enumerate() {
            let i = ((j & !low_mask) << 1) | (usize::from(bit & 1) << b) | (j & low_mask);
            *slot = v[i];
        }
        let p = out.norm_squared();
        if p < 1e-24 {
            return Err(Error::ZeroProbabilityOutcome {
                outcome: bit,
                probability: p,
            });
        }
        out /= C64::new(p.sqrt(), 0.0);
        let mut wires = self.wires.clone();
        wires.remove(wire);
        Ok((
            QuantumState {
                wires,
                data: Amplitudes::Pure(out),
            },
            p,
        ))
    }

    /// Reduced density matrix over `keep` (kept in ascending wire order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<QuantumState> {
        if keep.is_empty() {
            return Err(Error::EmptyKeepSet);
        }
        let n = self.wires.len();
        check_targets(keep, n)?;
        let mut keep: Vec<usize> = keep.to_vec();
        keep.sort_unstable();
        let traced: Vec<usize> = (0..n).filter(|w| !keep.contains(w)).collect();
        let kd = 1usize << keep.len();
        let td = 1usize << traced.len();
        let compose = |k: usize, t: usize| -> usize {
            let mut idx = 0usize;
            for (j, &w) in keep.iter().enumerate() {
                if (k >> (keep.len() - 1 - j)) & 1 == 1 {
                    idx |= 1 << bit_of(w, n);
                }
            }
            for (j, &w) in traced.iter().enumerate() {
                if (t >> (traced.len() - 1 - j)) & 1 == 1 {
                    idx |= 1 << bit_of(w, n);
                }
            }
            idx
        };
        let mut rho = CMatrix::zeros(kd, kd);
        match &self.data {
            Amplitudes::Pure(v) => {
                for t in 0..td {
                    let col: Vec<C64> = (0..kd).map(|k| v[compose(k, t)]).collect();
                    for i in 0..kd {
                        for j in 0..kd {
                            rho[(i, j)] += col[i] * col[j].conj();
                        }
                    }
                }
            }
            Amplitudes::Mixed(m) => {
                for t in 0..td {
                    for i in 0..kd {
                        for j in 0..kd {
                            rho[(i, j)] += m[(compose(i, t), compose(j, t))];
                        }
                    }
                }
            }
        }
        let wires = keep.iter().map(|&w| self.wires[w]).collect();
        Ok(QuantumState {
            wires,
            data: Amplitudes::Mixed(rho),
        })
    }

    /// Von Neumann entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        match &self.data {
            Amplitudes::Pure(_) => 0.0,
            Amplitudes::Mixed(m) => HermitianEigen::new(m)
                .values
                .iter()
                .filter(|&&l| l > 1e-15)
                .map(|&l| -l * l.log2())
                .sum(),
        }
    }

    /// Checks the representation invariants at the stated tolerances.
    pub fn check_invariants(&self) -> Result<()> {
        validate_wires(&self.wires)?;
        match &self.data {
            Amplitudes::Pure(v) => {
                let norm = v.norm();
                if (norm - 1.0).abs() > NORM_TOL {
                    return Err(Error::InvalidParameter(format!("norm {norm}")));
                }
            }
            Amplitudes::Mixed(m) => {
                let herm = linalg::hermiticity_defect(m);
                if herm > NORM_TOL {
                    return Err(Error::NotHermitian(herm));
                }
                let tr = m.trace();
                if (tr.re - 1.0).abs() > NORM_TOL {
                    return Err(Error::InvalidParameter(format!("trace {tr}")));
                }
                let min = HermitianEigen::new(m).min_value();
                if min < PSD_TOL {
                    return Err(Error::InvalidParameter(format!("eigenvalue {min}")));
                }
            }
        }
        Ok(())
    }
}

/// `sqrt(<psi|rho|psi>)`; `rho` may be pure or mixed.
pub fn state_fidelity(rho: &QuantumState, psi: &QuantumState) -> Result<f64> {
    let target = psi.as_pure().ok_or(Error::RequiresPure)?;
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: psi.dim(),
            got: rho.dim(),
        });
    }
    let value = match rho.amplitudes() {
        Amplitudes::Pure(phi) => target.dotc(phi).norm_sqr(),
        Amplitudes::Mixed(m) => target.dotc(&(m * target)).re,
    };
    Ok(value.clamp(0.0, 1.0).sqrt())
}

/// `max_alpha sqrt(<alpha|rho|alpha>) = sqrt(lambda_max(rho))`.
pub fn max_pure_fidelity(rho: &QuantumState) -> Result<f64> {
    match rho.amplitudes() {
        Amplitudes::Pure(_) => Ok(1.0),
        Amplitudes::Mixed(m) => {
            let herm = linalg::hermiticity_defect(m);
            if herm > 1e-9 {
                return Err(Error::NotHermitian(herm));
            }
            Ok(HermitianEigen::new(m).max_value().clamp(0.0, 1.0).sqrt())
        }
    }
}

/// Convenience for tests and callers that build states by hand.
pub fn normalized(v: Vec<C64>) -> CVector {
    let v = CVector::from_vec(v);
    let n = v.norm();
    v / C64::new(n, 0.0)
}

/// Draws a Haar-ish random pure state (normalised complex Gaussian vector).
pub fn random_pure(wires: Vec<QubitRole>, rng: &mut impl Rng) -> Result<QuantumState> {
    use rand_distr::{Distribution, StandardNormal};
    let dim = 1usize << wires.len();
    let v: Vec<C64> = (0..dim)
        .map(|_| {
            C64::new(
                StandardNormal.sample(&mut *rng),
                StandardNormal.sample(&mut *rng),
            )
        })
        .collect();
    QuantumState::from_pure(wires, normalized(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, cz, pauli_x};
    use approx::assert_relative_eq;
    use QubitRole::*;

    fn plus() -> CVector {
        normalized(vec![ONE, ONE])
    }

    #[test]
    fn x_flips_zero() {
        let s = QuantumState::basis(vec![Electron], &[0]).unwrap();
        let out = s
            .apply_gate(&Unitary::new(pauli_x()).unwrap(), &[0])
            .unwrap();
        let v = out.as_pure().unwrap();
        assert_relative_eq!(v[1].re, 1.0);
        assert_relative_eq!(v[0].norm(), 0.0);
    }

    #[test]
    fn identity_leaves_state_alone() {
        let mut rng = rand::rng();
        let s = random_pure(vec![Electron, Nuclear(0)], &mut rng).unwrap();
        let out = s.apply_gate(&Unitary::identity(2), &[0, 1]).unwrap();
        assert!((out.as_pure().unwrap() - s.as_pure().unwrap()).norm() < 1e-15);
    }

    #[test]
    fn cz_on_plus_plus() {
        let v = plus().kronecker(&plus());
        let s = QuantumState::from_pure(vec![Electron, Nuclear(0)], v).unwrap();
        let out = s.apply_gate(&Unitary::new(cz()).unwrap(), &[0, 1]).unwrap();
        let expected = [0.5, 0.5, 0.5, -0.5];
        for (a, e) in out.as_pure().unwrap().iter().zip(expected) {
            assert_relative_eq!(a.re, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn gate_errors() {
        let s = QuantumState::basis(vec![Electron, Nuclear(0)], &[0, 0]).unwrap();
        let x = Unitary::new(pauli_x()).unwrap();
        assert!(matches!(
            s.apply_gate(&x, &[0, 1]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            s.apply_gate(&Unitary::new(cz()).unwrap(), &[1, 1]),
            Err(Error::DuplicateTarget(1))
        ));
        assert!(matches!(
            s.apply_gate(&x, &[2]),
            Err(Error::WireOutOfRange { .. })
        ));
        assert!(Unitary::new(CMatrix::from_element(2, 2, ONE)).is_err());
    }

    #[test]
    fn targets_are_ordered() {
        // CNOT with control on wire 1 and target on wire 0.
        let s = QuantumState::basis(vec![Electron, Nuclear(0)], &[0, 1]).unwrap();
        let out = s
            .apply_gate(&Unitary::new(linalg::cnot()).unwrap(), &[1, 0])
            .unwrap();
        assert_relative_eq!(out.as_pure().unwrap()[3].re, 1.0);
    }

    #[test]
    fn photon_extension() {
        let mut rng = rand::rng();
        let s = random_pure(vec![Electron, Nuclear(0)], &mut rng).unwrap();
        let ext = s.add_photon_qubit(0).unwrap();
        assert_eq!(ext.wires()[2], Photon(0));
        assert_relative_eq!(ext.trace(), 1.0, epsilon = 1e-14);
        let v = ext.as_pure().unwrap();
        for i in 0..4 {
            assert_eq!(v[2 * i], s.as_pure().unwrap()[i]);
            assert_eq!(v[2 * i + 1], ZERO);
        }
        let mut grown = s;
        for _ in 0..4 {
            grown = grown.add_photon_qubit(0).unwrap();
        }
        assert_eq!(grown.num_qubits(), 6);
        assert_eq!(grown.wires()[5], Photon(3));
        assert!(ext.to_mixed().add_photon_qubit(0).is_err());
    }

    #[test]
    fn measure_plus_forced_zero() {
        let s = QuantumState::from_pure(vec![Electron], plus()).unwrap();
        let m = s.project_measure(0, Basis::Z, Selection::Forced(0)).unwrap();
        assert_relative_eq!(m.probability, 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.state.as_pure().unwrap()[0].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn measure_one_is_certain() {
        let s = QuantumState::basis(vec![Electron], &[1]).unwrap();
        let mut rng = rand::rng();
        let m = s
            .project_measure(0, Basis::Z, Selection::Sampled(&mut rng))
            .unwrap();
        assert_eq!(m.outcome, 1);
        assert_relative_eq!(m.probability, 1.0);
        assert!(matches!(
            s.project_measure(0, Basis::Z, Selection::Forced(0)),
            Err(Error::ZeroProbabilityOutcome { .. })
        ));
    }

    #[test]
    fn measuring_electron_collapses_photon() {
        let bell = normalized(vec![ONE, ZERO, ZERO, ONE]);
        let s = QuantumState::from_pure(vec![Electron, Photon(0)], bell).unwrap();
        let m = s.project_measure(0, Basis::Z, Selection::Forced(0)).unwrap();
        let (photon, p) = m.state.remove_wire_projected(0, 0).unwrap();
        assert_relative_eq!(p, 1.0, epsilon = 1e-15);
        assert_relative_eq!(photon.as_pure().unwrap()[0].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        let psi = QuantumState::from_pure(vec![Electron], plus()).unwrap();
        assert_relative_eq!(state_fidelity(&psi.to_mixed(), &psi).unwrap(), 1.0, epsilon = 1e-15);
        let mixed = QuantumState::from_density(vec![Electron], linalg::identity(2) * c(0.5, 0.0)).unwrap();
        assert_relative_eq!(state_fidelity(&mixed, &psi).unwrap(), 0.5f64.sqrt(), epsilon = 1e-15);
        let minus = normalized(vec![ONE, -ONE]);
        let rho = plus() * plus().adjoint() * c(0.9, 0.0) + &minus * minus.adjoint() * c(0.1, 0.0);
        let rho = QuantumState::from_density(vec![Electron], rho).unwrap();
        assert_relative_eq!(state_fidelity(&rho, &psi).unwrap(), 0.9f64.sqrt(), epsilon = 1e-14);
        let two = QuantumState::basis(vec![Electron, Photon(0)], &[0, 0]).unwrap();
        assert!(state_fidelity(&rho, &two).is_err());
    }

    #[test]
    fn max_pure_fidelity_examples() {
        let psi = QuantumState::from_pure(vec![Electron], plus()).unwrap();
        assert_relative_eq!(max_pure_fidelity(&psi.to_mixed()).unwrap(), 1.0, epsilon = 1e-12);
        let half = QuantumState::from_density(vec![Electron], linalg::identity(2) * c(0.5, 0.0)).unwrap();
        assert_relative_eq!(max_pure_fidelity(&half).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        let diag = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.75, 0.0), c(0.25, 0.0)]));
        let rho = QuantumState::from_density(vec![Electron], diag).unwrap();
        assert_relative_eq!(max_pure_fidelity(&rho).unwrap(), 0.75f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn partial_trace_examples() {
        let bell = normalized(vec![ONE, ZERO, ZERO, ONE]);
        let s = QuantumState::from_pure(vec![Electron, Photon(0)], bell).unwrap();
        let r = s.partial_trace(&[1]).unwrap();
        let half = linalg::identity(2) * c(0.5, 0.0);
        assert!(linalg::frobenius(&(r.density_matrix() - half)) < 1e-15);
        assert_relative_eq!(r.entropy_bits(), 1.0, epsilon = 1e-12);
        let full = s.partial_trace(&[0, 1]).unwrap();
        assert!(linalg::frobenius(&(full.density_matrix() - s.density_matrix())) < 1e-15);
        assert!(matches!(s.partial_trace(&[]), Err(Error::EmptyKeepSet)));
        // Mixed input path agrees with the pure path.
        let rm = s.to_mixed().partial_trace(&[0]).unwrap();
        assert!(linalg::frobenius(&(rm.density_matrix() - s.partial_trace(&[0]).unwrap().density_matrix())) < 1e-15);
    }

    #[test]
    fn register_validation() {
        assert!(validate_wires(&[Electron, Electron]).is_err());
        assert!(validate_wires(&[Electron, Nuclear(1)]).is_err());
        assert!(validate_wires(&[Electron, Photon(0), Photon(0)]).is_err());
        assert!(validate_wires(&[Photon(0), Photon(1)]).is_ok());
    }

    #[test]
    fn mixed_gate_matches_pure() {
        let mut rng = rand::rng();
        let s = random_pure(vec![Electron, Nuclear(0), Photon(0)], &mut rng).unwrap();
        let u = Unitary::new(linalg::kron(&linalg::ry(0.3), &linalg::rx(1.1)) * linalg::cz()).unwrap();
        let a = s.apply_gate(&u, &[2, 0]).unwrap().density_matrix();
        let b = s.to_mixed().apply_gate(&u, &[2, 0]).unwrap().density_matrix();
        assert!(linalg::frobenius(&(a - b)) < 1e-13);
    }
}
