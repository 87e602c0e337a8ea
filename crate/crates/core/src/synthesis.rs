//! Dynamical-decoupling gate compiler.
//!
//! A two-qubit gate is built from `k` units `τf − π − 2τf − π − τf` (ideal,
//! instantaneous electron `Rx(π)` pulses) with ideal electron rotations
//! interleaved between units. Each restart draws random rotations and
//! spacings, then sweeps coordinate-wise: every spacing gets a global line
//! scan with golden-section refinement and every rotation slot is re-drawn
//! from the menu. A joint simplex search polishes the result.

use crate::error::{Error, Result};
use crate::hamiltonian::{resonance_spacing, secular_hamiltonian, ResonanceKind, SpinSystemParams};
use crate::linalg::{self, CMatrix, HermitianEigen, C64};
use crate::noise::{trajectory_rng, OuNoise, OuProcess};
use crate::optimize::{nelder_mead_polished, Bounds, NelderMeadOptions};
use crate::state::Unitary;
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub type M4 = Matrix4<C64>;

/// Shortest allowed free-precession time.
pub const MIN_TAU_F: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElectronGate {
    Identity,
    Rx90,
    Ry90,
    Rz90,
    Rx180,
}

impl ElectronGate {
    pub const ALL: [ElectronGate; 5] = [
        ElectronGate::Identity,
        ElectronGate::Rx90,
        ElectronGate::Ry90,
        ElectronGate::Rz90,
        ElectronGate::Rx180,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ElectronGate::Identity => "I",
            ElectronGate::Rx90 => "Rx90",
            ElectronGate::Ry90 => "Ry90",
            ElectronGate::Rz90 => "Rz90",
            ElectronGate::Rx180 => "Rx180",
        }
    }

    pub fn single_qubit(self) -> CMatrix {
        match self {
            ElectronGate::Identity => linalg::identity(2),
            ElectronGate::Rx90 => linalg::rx(PI / 2.0),
            ElectronGate::Ry90 => linalg::ry(PI / 2.0),
            ElectronGate::Rz90 => linalg::rz(PI / 2.0),
            ElectronGate::Rx180 => linalg::rx(PI),
        }
    }

    /// The rotation embedded on the electron of an electron ⊗ nucleus pair.
    pub fn on_pair(self) -> M4 {
        to_m4(&linalg::kron(&self.single_qubit(), &linalg::identity(2)))
    }
}

impl FromStr for ElectronGate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ElectronGate::ALL
            .iter()
            .copied()
            .find(|g| g.label() == s)
            .ok_or_else(|| Error::Parse(format!("unknown electron gate `{s}`")))
    }
}

pub fn to_m4(m: &CMatrix) -> M4 {
    M4::from_fn(|r, c| m[(r, c)])
}

pub fn from_m4(m: &M4) -> CMatrix {
    CMatrix::from_fn(4, 4, |r, c| m[(r, c)])
}

/// Spacings plus the electron rotations around them: `gates[i]` precedes
/// unit `i` and `gates[k]` follows the last unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DdSequence {
    pub tau_f: Vec<f64>,
    pub gates: Vec<ElectronGate>,
}

impl DdSequence {
    pub fn empty() -> Self {
        DdSequence {
            tau_f: Vec::new(),
            gates: vec![ElectronGate::Identity],
        }
    }

    pub fn new(tau_f: Vec<f64>, gates: Vec<ElectronGate>) -> Result<Self> {
        let seq = DdSequence { tau_f, gates };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gates.len() != self.tau_f.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "{} units need {} gate slots, got {}",
                self.tau_f.len(),
                self.tau_f.len() + 1,
                self.gates.len()
            )));
        }
        if let Some(t) = self.tau_f.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-positive spacing {t}")));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.tau_f.len()
    }

    /// `Σ 4·τf`; pulses take no time.
    pub fn total_duration(&self) -> f64 {
        self.tau_f.iter().map(|t| 4.0 * t).sum()
    }

    /// Free-precession segment lengths in time order (three per unit).
    pub fn segments(&self) -> Vec<f64> {
        self.tau_f
            .iter()
            .flat_map(|&t| [t, 2.0 * t, t])
            .collect()
    }

    pub fn shortest_segment(&self) -> Option<f64> {
        self.tau_f.iter().copied().reduce(f64::min)
    }

    /// Splits after `at` units; the second half starts with an identity slot
    /// so the two compose back to `self`.
    pub fn split_at(&self, at: usize) -> (DdSequence, DdSequence) {
        let mut first_gates = self.gates[..at].to_vec();
        first_gates.push(ElectronGate::Identity);
        let first = DdSequence {
            tau_f: self.tau_f[..at].to_vec(),
            gates: first_gates,
        };
        let second = DdSequence {
            tau_f: self.tau_f[at..].to_vec(),
            gates: self.gates[at..].to_vec(),
        };
        (first, second)
    }
}

/// Precomputed free evolution of the secular Hamiltonian for fast unit
/// evaluation.
#[derive(Debug, Clone)]
pub struct UnitKernel {
    vectors: M4,
    vectors_dag: M4,
    values: [f64; 4],
    pi_pulse: M4,
    gates: [M4; 5],
}

impl UnitKernel {
    pub fn new(h: &CMatrix) -> Result<Self> {
        if h.nrows() != 4 || h.ncols() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: h.nrows(),
            });
        }
        let eig = HermitianEigen::new(h);
        let vectors = to_m4(&eig.vectors);
        Ok(UnitKernel {
            vectors_dag: vectors.adjoint(),
            vectors,
            values: [eig.values[0], eig.values[1], eig.values[2], eig.values[3]],
            pi_pulse: ElectronGate::Rx180.on_pair(),
            gates: ElectronGate::ALL.map(|g| g.on_pair()),
        })
    }

    pub fn for_params(p: &SpinSystemParams) -> Result<Self> {
        UnitKernel::new(&secular_hamiltonian(p))
    }

    pub fn free(&self, t: f64) -> M4 {
        let mut scaled = self.vectors;
        for j in 0..4 {
            let phase = C64::from_polar(1.0, -2.0 * PI * self.values[j] * t);
            for i in 0..4 {
                scaled[(i, j)] *= phase;
            }
        }
        scaled * self.vectors_dag
    }

    pub fn unit(&self, tau_f: f64) -> M4 {
        let edge = self.free(tau_f);
        edge * self.pi_pulse * self.free(2.0 * tau_f) * self.pi_pulse * edge
    }

    /// Unit with electron phase kicks `exp(-i φ σz/2)` accumulated during
    /// each of its three free segments (noise that commutes with `H`).
    pub fn unit_with_phases(&self, tau_f: f64, phases: [f64; 3]) -> M4 {
        let kick = |phi: f64| {
            let a = C64::from_polar(1.0, -phi / 2.0);
            let b = C64::from_polar(1.0, phi / 2.0);
            M4::from_diagonal(&nalgebra::Vector4::new(a, a, b, b))
        };
        let edge = self.free(tau_f);
        edge * kick(phases[2])
            * self.pi_pulse
            * self.free(2.0 * tau_f)
            * kick(phases[1])
            * self.pi_pulse
            * edge
            * kick(phases[0])
    }

    pub fn gate(&self, g: ElectronGate) -> &M4 {
        &self.gates[g as usize]
    }

    pub fn sequence(&self, tau_f: &[f64], gates: &[ElectronGate]) -> M4 {
        let mut u = *self.gate(gates[0]);
        for (i, &t) in tau_f.iter().enumerate() {
            u = self.gate(gates[i + 1]) * self.unit(t) * u;
        }
        u
    }

    /// The sequence with bath phases from `process` accumulated over each
    /// free segment in steps of at most `dt`.
    pub fn noisy_sequence(&self, seq: &DdSequence, process: &mut OuProcess, dt: f64) -> M4 {
        let mut u = *self.gate(seq.gates[0]);
        for (i, &t) in seq.tau_f.iter().enumerate() {
            let phases = [
                process.integrate(t, dt),
                process.integrate(2.0 * t, dt),
                process.integrate(t, dt),
            ];
            u = self.gate(seq.gates[i + 1]) * self.unit_with_phases(t, phases) * u;
        }
        u
    }
}

pub fn dd_unit(tau_f: f64, h: &CMatrix) -> Result<Unitary> {
    if !(tau_f > 0.0) {
        return Err(Error::InvalidParameter(format!("tau_f must be positive, got {tau_f}")));
    }
    Ok(Unitary::from_trusted(from_m4(&UnitKernel::new(h)?.unit(tau_f))))
}

pub fn sequence_unitary(seq: &DdSequence, h: &CMatrix) -> Result<Unitary> {
    seq.validate()?;
    let kernel = UnitKernel::new(h)?;
    Ok(Unitary::from_trusted(from_m4(&kernel.sequence(&seq.tau_f, &seq.gates))))
}

/// Phase-blind overlap `|Tr(target† u)| / d`.
pub fn gate_fidelity(u: &Unitary, target: &Unitary) -> Result<f64> {
    if u.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: u.dim(),
        });
    }
    Ok(linalg::trace_overlap(target.matrix(), u.matrix()) / target.dim() as f64)
}

fn fidelity_m4(u: &M4, target_dag: &M4) -> f64 {
    (target_dag * u).trace().norm() / 4.0
}

/// Named two-qubit targets on electron ⊗ nucleus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateTarget {
    Identity,
    Swap,
    Cz,
    Cnot,
    /// Nuclear-only rotations (electron untouched).
    NuclearRx90,
    NuclearRz90,
}

impl GateTarget {
    pub fn name(self) -> &'static str {
        match self {
            GateTarget::Identity => "identity",
            GateTarget::Swap => "swap",
            GateTarget::Cz => "cz",
            GateTarget::Cnot => "cnot",
            GateTarget::NuclearRx90 => "nuclear-rx90",
            GateTarget::NuclearRz90 => "nuclear-rz90",
        }
    }

    pub fn unitary(self) -> Unitary {
        let id = linalg::identity(2);
        let m = match self {
            GateTarget::Identity => linalg::identity(4),
            GateTarget::Swap => linalg::swap(),
            GateTarget::Cz => linalg::cz(),
            GateTarget::Cnot => linalg::cnot(),
            GateTarget::NuclearRx90 => linalg::kron(&id, &linalg::rx(PI / 2.0)),
            GateTarget::NuclearRz90 => linalg::kron(&id, &linalg::rz(PI / 2.0)),
        };
        Unitary::from_trusted(m)
    }
}

impl FromStr for GateTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            GateTarget::Identity,
            GateTarget::Swap,
            GateTarget::Cz,
            GateTarget::Cnot,
            GateTarget::NuclearRx90,
            GateTarget::NuclearRz90,
        ]
        .into_iter()
        .find(|t| t.name() == s.to_ascii_lowercase())
        .ok_or_else(|| Error::Parse(format!("unknown target `{s}`")))
    }
}

impl fmt::Display for GateTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub threshold: f64,
    /// Largest unit count tried.
    pub max_k: usize,
    /// Smallest unit count tried; counts below this cannot express a
    /// generic two-qubit gate and only waste restarts.
    pub min_k: usize,
    /// Fresh random draws (gates and spacings) per unit count.
    pub restarts: usize,
    /// Coordinate sweeps per restart.
    pub sweeps: usize,
    /// Scan points for each spacing's line search.
    pub grid: usize,
    /// Upper end of the spacing scan; defaults to a fraction of the first
    /// conditional resonance spacing. Short caps give short gates.
    pub tau_max: Option<f64>,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            threshold: 0.999,
            max_k: 24,
            min_k: 1,
            restarts: 32,
            sweeps: 60,
            grid: 300,
            tau_max: None,
            seed: 0,
            nelder_mead: NelderMeadOptions {
                max_evals: 6_000,
                f_tol: 1e-13,
                x_tol: 1e-6,
                initial_step: 0.08,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisReport {
    pub target_name: String,
    pub sequence: DdSequence,
    pub unitary_fidelity: f64,
    /// Objective evaluations spent.
    pub iterations: usize,
    pub meets_threshold: bool,
}

const DEFAULT_TAU_MAX_FRACTION: f64 = 0.3;

/// Spacings are optimised in nanoseconds to keep the simplex well scaled.
const NS: f64 = 1e-9;

fn initial_spacing(rng: &mut ChaCha8Rng, resonances: &[f64], tau_max: f64) -> f64 {
    // τf = τ_res / 2 at resonance; fractions of it reach the faster,
    // off-resonant rotations the gates actually need.
    let base = resonances[rng.random_range(0..resonances.len())] / 2.0;
    let fraction = [1.0, 0.5, 0.25][rng.random_range(0..3)];
    let jitter = 1.0 + 0.15 * (rng.random::<f64>() * 2.0 - 1.0);
    (base * fraction * jitter).clamp(2.0 * MIN_TAU_F, tau_max)
}

struct Candidate {
    fidelity: f64,
    tau_f: Vec<f64>,
    gates: Vec<ElectronGate>,
    evals: usize,
}

/// Mutable search state for one restart: spacings, gates and cached unit
/// matrices.
struct Search<'a> {
    kernel: &'a UnitKernel,
    target_dag: &'a M4,
    tau: Vec<f64>,
    gates: Vec<ElectronGate>,
    units: Vec<M4>,
    evals: usize,
}

fn trace_product(m: &M4, u: &M4) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for a in 0..4 {
        for b in 0..4 {
            acc += m[(a, b)] * u[(b, a)];
        }
    }
    acc
}

impl<'a> Search<'a> {
    fn new(kernel: &'a UnitKernel, target_dag: &'a M4, tau: Vec<f64>, gates: Vec<ElectronGate>) -> Self {
        let units = tau.iter().map(|&t| kernel.unit(t)).collect();
        Search {
            kernel,
            target_dag,
            tau,
            gates,
            units,
            evals: 0,
        }
    }

    fn fidelity(&self) -> f64 {
        fidelity_m4(&self.kernel.sequence(&self.tau, &self.gates), self.target_dag)
    }

    /// Product of everything applied before unit `i` (gates[0..=i] and
    /// units[0..i]).
    fn before_unit(&self, i: usize) -> M4 {
        let mut u = *self.kernel.gate(self.gates[0]);
        for j in 0..i {
            u = self.kernel.gate(self.gates[j + 1]) * self.units[j] * u;
        }
        u
    }

    /// Product of everything applied after unit `i`.
    fn after_unit(&self, i: usize) -> M4 {
        let k = self.tau.len();
        let mut u = *self.kernel.gate(self.gates[i + 1]);
        for j in (i + 1)..k {
            u = self.kernel.gate(self.gates[j + 1]) * self.units[j] * u;
        }
        u
    }

    /// Best value of spacing `i` with everything else frozen: a dense scan
    /// over `[MIN_TAU_F, tau_max]` followed by golden-section refinement.
    fn optimise_spacing(&mut self, i: usize, tau_max: f64, grid: usize) -> f64 {
        let m = self.before_unit(i) * self.target_dag * self.after_unit(i);
        let kernel = self.kernel;
        let mut evals = 0usize;
        let mut score = |t: f64| {
            evals += 1;
            trace_product(&m, &kernel.unit(t)).norm() / 4.0
        };
        let step = (tau_max - MIN_TAU_F) / grid as f64;
        let mut best_t = self.tau[i];
        let mut best_f = score(best_t);
        for g in 0..=grid {
            let t = MIN_TAU_F + step * g as f64;
            let f = score(t);
            if f > best_f {
                best_f = f;
                best_t = t;
            }
        }
        let (mut lo, mut hi) = ((best_t - step).max(MIN_TAU_F), best_t + step);
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let (mut f1, mut f2) = (score(x1), score(x2));
        while hi - lo > 1e-15 {
            if f1 > f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = score(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = score(x2);
            }
        }
        let (t, f) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
        if f > best_f {
            best_t = t;
            best_f = f;
        }
        self.evals += evals;
        self.tau[i] = best_t;
        self.units[i] = kernel.unit(best_t);
        best_f
    }

    /// Tries every electron gate in slot `j`, keeping the best.
    fn optimise_gate(&mut self, j: usize) -> f64 {
        let k = self.tau.len();
        let mut before = M4::identity();
        if j > 0 {
            before = *self.kernel.gate(self.gates[0]);
            for q in 0..j {
                let unit = self.units[q];
                before = if q + 1 < j {
                    self.kernel.gate(self.gates[q + 1]) * unit * before
                } else {
                    unit * before
                };
            }
        }
        let mut after = M4::identity();
        for q in j..k {
            after = self.kernel.gate(self.gates[q + 1]) * self.units[q] * after;
        }
        let m = before * self.target_dag * after;
        let mut best = (self.gates[j], -1.0);
        for g in ElectronGate::ALL {
            let f = trace_product(&m, self.kernel.gate(g)).norm() / 4.0;
            if f > best.1 + 1e-15 {
                best = (g, f);
            }
        }
        self.evals += ElectronGate::ALL.len();
        self.gates[j] = best.0;
        best.1
    }
}

fn restart(
    kernel: &UnitKernel,
    target_dag: &M4,
    k: usize,
    resonances: &[f64],
    opts: &SynthesisOptions,
    seed: u64,
) -> Candidate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates: Vec<ElectronGate> = (0..=k)
        .map(|_| ElectronGate::ALL[rng.random_range(0..ElectronGate::ALL.len())])
        .collect();
    let tau_max = opts.tau_max.unwrap_or(resonances[0] * DEFAULT_TAU_MAX_FRACTION);
    let tau: Vec<f64> = (0..k).map(|_| initial_spacing(&mut rng, resonances, tau_max)).collect();
    let mut search = Search::new(kernel, target_dag, tau, gates);
    let mut fid = search.fidelity();
    // Coordinate sweeps in a random order over spacings and gate slots.
    let mut coords: Vec<usize> = (0..(2 * k + 1)).collect();
    for _ in 0..opts.sweeps {
        for i in (1..coords.len()).rev() {
            let j = rng.random_range(0..=i);
            coords.swap(i, j);
        }
        let before = fid;
        for &c in &coords {
            fid = if c < k {
                search.optimise_spacing(c, tau_max, opts.grid)
            } else {
                search.optimise_gate(c - k)
            };
        }
        if fid - before < 1e-10 {
            break;
        }
    }
    // Joint polish of all spacings.
    let gates = search.gates.clone();
    let objective = |x: &[f64]| {
        let taus: Vec<f64> = x.iter().map(|v| v * NS).collect();
        1.0 - fidelity_m4(&kernel.sequence(&taus, &gates), target_dag)
    };
    let bounds = Bounds {
        lower: MIN_TAU_F / NS,
        upper: f64::INFINITY,
    };
    let x0: Vec<f64> = search.tau.iter().map(|t| t / NS).collect();
    let polished = nelder_mead_polished(objective, &x0, bounds, &opts.nelder_mead, 2);
    let mut evals = search.evals + polished.evals;
    let (tau_f, fidelity) = if 1.0 - polished.f > fid {
        (polished.x.iter().map(|v| v * NS).collect(), 1.0 - polished.f)
    } else {
        (search.tau.clone(), fid)
    };
    evals += 1;
    Candidate {
        fidelity,
        tau_f,
        gates,
        evals,
    }
}

/// Compiles `target` for the given spin system. Returns the first unit count
/// whose best restart meets the threshold, or the best sequence found with
/// `meets_threshold = false`.
pub fn synthesize(
    target: &Unitary,
    target_name: &str,
    p: &SpinSystemParams,
    opts: &SynthesisOptions,
) -> Result<SynthesisReport> {
    if !(opts.threshold > 0.0 && opts.threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!("threshold {}", opts.threshold)));
    }
    if opts.max_k == 0 {
        return Err(Error::InvalidParameter("max_k must be at least 1".into()));
    }
    if target.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: target.dim(),
        });
    }
    let empty = DdSequence::empty();
    let kernel = UnitKernel::for_params(p)?;
    let target_dag = to_m4(target.matrix()).adjoint();
    let trivial = fidelity_m4(&kernel.sequence(&empty.tau_f, &empty.gates), &target_dag);
    if trivial >= opts.threshold {
        return Ok(SynthesisReport {
            target_name: target_name.to_string(),
            sequence: empty,
            unitary_fidelity: trivial,
            iterations: 1,
            meets_threshold: true,
        });
    }

    let mut resonances = Vec::new();
    for n in 1..=2 {
        for kind in [ResonanceKind::Conditional, ResonanceKind::Unconditional] {
            if let Ok(t) = resonance_spacing(p, n, kind) {
                resonances.push(t);
            }
        }
    }
    if resonances.is_empty() {
        // Degenerate axes: fall back to the nuclear Larmor scale.
        let larmor = (p.gamma_n * (p.b[0].hypot(p.b[2]))).abs().max(p.a_par / 4.0).max(1e3);
        resonances.push(1.0 / larmor);
    }

    let mut best: Option<(usize, Candidate)> = None;
    let mut iterations = 0usize;
    for k in opts.min_k.max(1)..=opts.max_k {
        let seeds: Vec<u64> = (0..opts.restarts)
            .map(|r| opts.seed ^ ((k as u64) << 32) ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .collect();
        let candidates: Vec<Candidate> = seeds
            .par_iter()
            .map(|&s| restart(&kernel, &target_dag, k, &resonances, opts, s))
            .collect();
        iterations += candidates.iter().map(|c| c.evals).sum::<usize>();
        // Among passing candidates the shortest gate wins.
        let passing = candidates
            .iter()
            .filter(|c| c.fidelity >= opts.threshold)
            .min_by(|a, b| {
                let da: f64 = a.tau_f.iter().sum();
                let db: f64 = b.tau_f.iter().sum();
                da.total_cmp(&db)
            });
        if let Some(c) = passing {
            let sequence = DdSequence::new(c.tau_f.clone(), c.gates.clone())?;
            let fid = fidelity_m4(&kernel.sequence(&sequence.tau_f, &sequence.gates), &target_dag);
            return Ok(SynthesisReport {
                target_name: target_name.to_string(),
                sequence,
                unitary_fidelity: fid,
                iterations,
                meets_threshold: fid >= opts.threshold,
            });
        }
        for c in candidates {
            if best.as_ref().map_or(true, |(_, b)| c.fidelity > b.fidelity) {
                best = Some((k, c));
            }
        }
    }
    let (_, c) = best.ok_or_else(|| Error::SynthesisFailed("no candidates".into()))?;
    let sequence = DdSequence::new(c.tau_f, c.gates)?;
    let fid = fidelity_m4(&kernel.sequence(&sequence.tau_f, &sequence.gates), &target_dag);
    Ok(SynthesisReport {
        target_name: target_name.to_string(),
        sequence,
        unitary_fidelity: fid,
        iterations,
        meets_threshold: false,
    })
}

/// The 16 products of single-qubit Pauli eigenstates used as a tomographic
/// input set for noisy gate fidelities.
pub fn pauli_input_states() -> Vec<nalgebra::Vector4<C64>> {
    let h = FRAC_1_SQRT_2;
    let singles = [
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(h, 0.0), C64::new(h, 0.0)],
        [C64::new(h, 0.0), C64::new(0.0, h)],
    ];
    let mut out = Vec::with_capacity(16);
    for a in &singles {
        for b in &singles {
            out.push(nalgebra::Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]));
        }
    }
    out
}

/// Moves a compiled gate to hyperfine `a_par`, scaling the field by the same
/// factor. The Hamiltonian scales as a whole, so spacings shrink by that
/// factor and the unitary is unchanged.
pub fn rescale_to_hyperfine(
    seq: &DdSequence,
    p: &SpinSystemParams,
    a_par: f64,
) -> Result<(DdSequence, SpinSystemParams)> {
    if !(a_par > 0.0) || !(p.a_par > 0.0) {
        return Err(Error::InvalidParameter(format!("hyperfine {a_par}")));
    }
    let s = a_par / p.a_par;
    let mut q = *p;
    q.a_par = p.a_par * s;
    q.a_perp = p.a_perp * s;
    q.b = [p.b[0] * s, p.b[1] * s, p.b[2] * s];
    q.omega = p.omega * s;
    q.omega_mw = p.omega_mw * s;
    let scaled = DdSequence::new(seq.tau_f.iter().map(|t| t / s).collect(), seq.gates.clone())?;
    Ok((scaled, q))
}

/// Mean and standard error, over bath trajectories, of the squared overlap
/// `|⟨ψ|T†U|ψ⟩|²` averaged over the 16 Pauli product inputs.
pub fn noisy_gate_fidelity(
    seq: &DdSequence,
    target: &Unitary,
    p: &SpinSystemParams,
    noise: &OuNoise,
    trials: usize,
) -> Result<(f64, f64)> {
    seq.validate()?;
    noise.validate()?;
    if trials < 2 {
        return Err(Error::InvalidParameter("need at least two trials".into()));
    }
    let kernel = UnitKernel::for_params(p)?;
    let target_dag = to_m4(target.matrix()).adjoint();
    let inputs = pauli_input_states();
    let per_trial: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut process = OuProcess::new(noise, trajectory_rng(noise.seed, t as u64));
            let u = target_dag * kernel.noisy_sequence(seq, &mut process, noise.dt);
            inputs
                .iter()
                .map(|psi| psi.dotc(&(u * psi)).norm_sqr())
                .sum::<f64>()
                / inputs.len() as f64
        })
        .collect();
    let n = per_trial.len() as f64;
    let mean = per_trial.iter().sum::<f64>() / n;
    let var = per_trial.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// On-disk form of a compiled gate: TOML with the spin system, spacings
/// at full precision, gate labels and the achieved fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateFile {
    pub format_version: u32,
    pub target: String,
    pub unitary_fidelity: f64,
    pub duration: f64,
    pub system: SpinSystemParams,
    pub tau_f: Vec<f64>,
    pub gates: Vec<String>,
}

pub const GATE_FILE_VERSION: u32 = 1;

impl GateFile {
    pub fn new(target: &str, seq: &DdSequence, fidelity: f64, system: &SpinSystemParams) -> Self {
        GateFile {
            format_version: GATE_FILE_VERSION,
            target: target.to_string(),
            unitary_fidelity: fidelity,
            duration: seq.total_duration(),
            system: *system,
            tau_f: seq.tau_f.clone(),
            gates: seq.gates.iter().map(|g| g.label().to_string()).collect(),
        }
    }

    pub fn sequence(&self) -> Result<DdSequence> {
        let gates = self
            .gates
            .iter()
            .map(|g| g.parse())
            .collect::<Result<Vec<ElectronGate>>>()?;
        DdSequence::new(self.tau_f.clone(), gates)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: GateFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.format_version != GATE_FILE_VERSION {
            return Err(Error::Parse(format!(
                "unsupported gate file version {}",
                file.format_version
            )));
        }
        file.sequence()?;
        Ok(file)
    }
}
