//! The cluster-state generation circuit.
//!
//! Rail 0 is the electron (proxy); rail `j ≥ 1` is stored on nuclear wire
//! `j − 1`. Every rail is brought to the electron by SWAP for single-qubit
//! rotations and photon emission. Photons are appended in emission order,
//! so photon `c·M + r` is the one emitted by rail `r` in column `c`.

use crate::error::{Error, Result};
use crate::hamiltonian::SpinSystemParams;
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::noise::{trajectory_rng, OuNoise, OuProcess};
use crate::state::{QuantumState, QubitRole, Unitary};
use crate::synthesis::{from_m4, DdSequence, UnitKernel};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::fmt;

/// Photon qubit encoding. Both are a two-level photon; the choice only
/// changes basis labels in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhotonEncoding {
    #[default]
    Polarisation,
    TimeBin,
}

impl PhotonEncoding {
    /// Label of photon basis state `bit`: `|0⟩ ↔ L`, `|1⟩ ↔ R` for
    /// polarisation, early/late for time bins.
    pub fn label(self, bit: u8) -> &'static str {
        match (self, bit & 1) {
            (PhotonEncoding::Polarisation, 0) => "L",
            (PhotonEncoding::Polarisation, _) => "R",
            (PhotonEncoding::TimeBin, 0) => "e",
            (PhotonEncoding::TimeBin, _) => "l",
        }
    }
}

/// How a two-qubit gate is realised.
#[derive(Debug, Clone, PartialEq)]
pub enum GateImpl {
    /// Exact unitary with a nominal duration for the wall-clock model.
    Ideal { unitary: Unitary, duration: f64 },
    /// Dynamical-decoupling sequence, evolved under the library's spin
    /// system (and noise, when present).
    Dd(DdSequence),
}

impl GateImpl {
    pub fn ideal(unitary: Unitary) -> Self {
        GateImpl::Ideal {
            unitary,
            duration: 0.0,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            GateImpl::Ideal { duration, .. } => *duration,
            GateImpl::Dd(seq) => seq.total_duration(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GateLibrary {
    pub swap: Option<GateImpl>,
    pub cz: Option<GateImpl>,
    /// Electron `Ry(π/2)`; always instantaneous and ideal.
    pub ry: Option<Unitary>,
    /// Needed whenever a gate is a DD sequence.
    pub system: Option<SpinSystemParams>,
}

impl GateLibrary {
    pub fn ideal() -> Self {
        GateLibrary::ideal_with_durations(0.0, 0.0)
    }

    pub fn ideal_with_durations(swap: f64, cz: f64) -> Self {
        GateLibrary {
            swap: Some(GateImpl::Ideal {
                unitary: Unitary::from_trusted(linalg::swap()),
                duration: swap,
            }),
            cz: Some(GateImpl::Ideal {
                unitary: Unitary::from_trusted(linalg::cz()),
                duration: cz,
            }),
            ry: Some(ry_half_pi()),
            system: None,
        }
    }

    pub fn synthesized(system: SpinSystemParams, swap: DdSequence, cz: DdSequence) -> Self {
        GateLibrary {
            swap: Some(GateImpl::Dd(swap)),
            cz: Some(GateImpl::Dd(cz)),
            ry: Some(ry_half_pi()),
            system: Some(system),
        }
    }

    fn has_dd(&self) -> bool {
        matches!(self.swap, Some(GateImpl::Dd(_))) || matches!(self.cz, Some(GateImpl::Dd(_)))
    }
}

pub fn ry_half_pi() -> Unitary {
    Unitary::from_trusted(linalg::ry(PI / 2.0))
}

/// Spin-measurement handling at completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Completion {
    /// Keep only the all-|1⟩ spin outcome.
    PostSelect,
    /// Use every outcome, undoing it with a Z on the rail's last photon.
    #[default]
    Corrected,
}

#[derive(Debug, Clone)]
pub struct ProtocolSpec {
    /// Rails: the electron plus `m − 1` nuclear spins.
    pub m: usize,
    /// Columns.
    pub n: usize,
    pub gate_library: GateLibrary,
    pub photon_encoding: PhotonEncoding,
    pub noise: Option<OuNoise>,
    pub trials: usize,
    pub completion: Completion,
    /// Computational state every spin starts in.
    pub initial_bit: u8,
}

impl ProtocolSpec {
    pub fn ideal(m: usize, n: usize) -> Self {
        ProtocolSpec {
            m,
            n,
            gate_library: GateLibrary::ideal(),
            photon_encoding: PhotonEncoding::Polarisation,
            noise: None,
            trials: 1,
            completion: Completion::Corrected,
            initial_bit: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidParameter(format!("m = {} (need at least 2 rails)", self.m)));
        }
        if self.m + self.m * self.n > crate::state::MAX_QUBITS {
            return Err(Error::SizeLimit(format!(
                "{} spins + {} photons",
                self.m,
                self.m * self.n
            )));
        }
        if self.gate_library.ry.is_none() {
            return Err(Error::MissingGate("Ry(pi/2)".into()));
        }
        if self.gate_library.swap.is_none() {
            return Err(Error::MissingGate("SWAP".into()));
        }
        if self.n > 0 && self.gate_library.cz.is_none() {
            return Err(Error::MissingGate("CZ".into()));
        }
        if self.gate_library.has_dd() && self.gate_library.system.is_none() {
            return Err(Error::Inconsistent("DD gates need spin-system parameters".into()));
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
            if noise.b > 0.0 && !self.gate_library.has_dd() {
                return Err(Error::Inconsistent(
                    "noise acts during free precession and needs DD gates".into(),
                ));
            }
            let ideal = |g: &Option<GateImpl>| matches!(g, Some(GateImpl::Ideal { .. }));
            if noise.b > 0.0 && (ideal(&self.gate_library.swap) || (self.n > 0 && ideal(&self.gate_library.cz))) {
                return Err(Error::Inconsistent(
                    "with noise every two-qubit gate must be a DD sequence".into(),
                ));
            }
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// `Ry(π/2)` on the electron.
    Ry,
    /// SWAP between the electron and nuclear wire `j` (rail `j + 1`).
    Swap(usize),
    /// CZ between the electron and nuclear wire `j`.
    Cz(usize),
    /// Emit a photon from whichever rail currently sits on the electron.
    Emit { rail: usize, column: usize },
    /// z-basis measurement of all spins.
    Measure,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Rails are numbered from 1 in labels, the electron being rail 1.
        match self {
            Step::Ry => write!(f, "Ry"),
            Step::Swap(j) => write!(f, "SWAP_1{}", j + 2),
            Step::Cz(j) => write!(f, "CZ_1{}", j + 2),
            Step::Emit { rail, .. } => write!(f, "EMIT_{}", rail + 1),
            Step::Measure => write!(f, "MEASURE"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Preparation,
    Entanglement,
    Emission,
    Rotation,
    Completion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledStep {
    pub step: Step,
    pub stage: Stage,
    /// `None` for preparation and completion.
    pub column: Option<usize>,
}

fn preparation(m: usize, out: &mut Vec<ScheduledStep>) {
    let mut push = |step| {
        out.push(ScheduledStep {
            step,
            stage: Stage::Preparation,
            column: None,
        })
    };
    push(Step::Ry);
    for j in 0..m - 1 {
        push(Step::Swap(j));
        push(Step::Ry);
        push(Step::Swap(j));
    }
}

fn building_block(m: usize, column: usize, out: &mut Vec<ScheduledStep>) {
    let mut push = |step, stage| {
        out.push(ScheduledStep {
            step,
            stage,
            column: Some(column),
        })
    };
    for j in 0..m - 1 {
        push(Step::Cz(j), Stage::Entanglement);
    }
    // Chained cycling: after SWAP_1j the electron holds rail j and the
    // previous rail is parked on nucleus j − 1.
    push(Step::Emit { rail: 0, column }, Stage::Emission);
    for j in 0..m - 1 {
        push(Step::Swap(j), Stage::Emission);
        push(Step::Emit { rail: j + 1, column }, Stage::Emission);
    }
    for j in (0..m - 1).rev() {
        push(Step::Swap(j), Stage::Emission);
    }
    push(Step::Ry, Stage::Rotation);
    for j in 0..m - 1 {
        push(Step::Swap(j), Stage::Rotation);
        push(Step::Ry, Stage::Rotation);
    }
    for j in (0..m - 1).rev() {
        push(Step::Swap(j), Stage::Rotation);
    }
}

/// Preparation, `n` building blocks and the completion measurement.
pub fn build_schedule(spec: &ProtocolSpec) -> Result<Vec<ScheduledStep>> {
    spec.validate()?;
    let mut out = Vec::new();
    preparation(spec.m, &mut out);
    for c in 0..spec.n {
        building_block(spec.m, c, &mut out);
    }
    if spec.n > 0 {
        out.push(ScheduledStep {
            step: Step::Measure,
            stage: Stage::Completion,
            column: None,
        });
    }
    Ok(out)
}

/// Sum of two-qubit gate durations over a schedule.
pub fn wall_clock(schedule: &[ScheduledStep], lib: &GateLibrary) -> f64 {
    let dur = |g: &Option<GateImpl>| g.as_ref().map_or(0.0, GateImpl::duration);
    schedule
        .iter()
        .map(|s| match s.step {
            Step::Swap(_) => dur(&lib.swap),
            Step::Cz(_) => dur(&lib.cz),
            _ => 0.0,
        })
        .sum()
}

/// Appends a photon in `|0⟩` and entangles it with the electron by CNOT.
pub fn emit_photon(state: &QuantumState) -> Result<QuantumState> {
    let e = state
        .wire_of(QubitRole::Electron)
        .ok_or_else(|| Error::InvalidRegister("no electron wire to emit from".into()))?;
    let mut out = state.add_photon_qubit(0)?;
    let p = out.num_qubits() - 1;
    out.apply_gate_mut(&Unitary::from_trusted(linalg::cnot()), &[e, p])?;
    Ok(out)
}

fn spin_wires(m: usize) -> Vec<QubitRole> {
    let mut wires = vec![QubitRole::Electron];
    wires.extend((0..m - 1).map(QubitRole::Nuclear));
    wires
}

/// Executes steps on one pure trajectory. `process` supplies bath phases
/// for DD free segments.
struct Executor<'a> {
    lib: &'a GateLibrary,
    kernel: Option<UnitKernel>,
    swap: Option<Unitary>,
    cz: Option<Unitary>,
    ry: Unitary,
}

impl<'a> Executor<'a> {
    fn new(lib: &'a GateLibrary) -> Result<Self> {
        let kernel = match &lib.system {
            Some(p) if lib.has_dd() => Some(UnitKernel::for_params(p)?),
            _ => None,
        };
        let fixed = |g: &Option<GateImpl>| -> Result<Option<Unitary>> {
            Ok(match g {
                Some(GateImpl::Ideal { unitary, .. }) => Some(unitary.clone()),
                Some(GateImpl::Dd(seq)) => {
                    let k = kernel.as_ref().ok_or_else(|| Error::Inconsistent("DD gate without spin system".into()))?;
                    Some(Unitary::from_trusted(from_m4(&k.sequence(&seq.tau_f, &seq.gates))))
                }
                None => None,
            })
        };
        Ok(Executor {
            swap: fixed(&lib.swap)?,
            cz: fixed(&lib.cz)?,
            ry: lib.ry.clone().ok_or_else(|| Error::MissingGate("Ry(pi/2)".into()))?,
            kernel,
            lib,
        })
    }

    fn two_qubit(&self, g: &Option<GateImpl>, noiseless: &Option<Unitary>, process: Option<&mut (OuProcess, f64)>) -> Result<Unitary> {
        match (g, process) {
            (Some(GateImpl::Dd(seq)), Some((proc_, dt))) => {
                let kernel = self.kernel.as_ref().ok_or_else(|| Error::Inconsistent("DD gate without spin system".into()))?;
                Ok(Unitary::from_trusted(from_m4(&kernel.noisy_sequence(seq, proc_, *dt))))
            }
            _ => noiseless
                .clone()
                .ok_or_else(|| Error::MissingGate("two-qubit gate".into())),
        }
    }

    fn apply(&self, state: &mut QuantumState, step: Step, process: Option<&mut (OuProcess, f64)>) -> Result<()> {
        match step {
            Step::Ry => state.apply_gate_mut(&self.ry, &[0]),
            Step::Swap(j) => {
                let u = self.two_qubit(&self.lib.swap, &self.swap, process)?;
                state.apply_gate_mut(&u, &[0, j + 1])
            }
            Step::Cz(j) => {
                let u = self.two_qubit(&self.lib.cz, &self.cz, process)?;
                state.apply_gate_mut(&u, &[0, j + 1])
            }
            Step::Emit { .. } => {
                *state = emit_photon(state)?;
                Ok(())
            }
            Step::Measure => Ok(()),
        }
    }
}

fn initial_state(m: usize, bit: u8) -> Result<QuantumState> {
    QuantumState::basis(spin_wires(m), &vec![bit & 1; m])
}

/// Photonic branches after measuring the `m` leading spin wires of a pure
/// state: `(outcome bits as an index, unnormalised photon amplitudes)`.
fn spin_branches(v: &CVector, m: usize) -> Vec<(usize, CVector)> {
    let photon_dim = v.len() >> m;
    (0..1usize << m)
        .map(|s| (s, v.rows(s * photon_dim, photon_dim).into_owned()))
        .collect()
}

/// Applies the outcome correction in place: `Z` on the last photon of each
/// rail whose spin was found in `|0⟩`.
fn correct_branch(amps: &mut CVector, outcome: usize, m: usize, n: usize) {
    let photons = m * n;
    let mut mask = 0usize;
    for r in 0..m {
        // Rail r is bit (m − 1 − r) of the outcome index (electron is MSB).
        let bit = (outcome >> (m - 1 - r)) & 1;
        if bit == 0 {
            let photon = (n - 1) * m + r;
            mask |= 1 << (photons - 1 - photon);
        }
    }
    if mask == 0 {
        return;
    }
    for (i, a) in amps.iter_mut().enumerate() {
        if (i & mask).count_ones() % 2 == 1 {
            *a = -*a;
        }
    }
}

fn photon_wires(count: usize) -> Vec<QubitRole> {
    (0..count).map(QubitRole::Photon).collect()
}

/// Noiseless output of the ideal circuit after completion (all-|1⟩
/// branch), the reference for every fidelity.
pub fn ideal_target(m: usize, n: usize) -> Result<QuantumState> {
    ideal_target_from(m, n, 0)
}

pub fn ideal_target_from(m: usize, n: usize, initial_bit: u8) -> Result<QuantumState> {
    if n == 0 {
        return Err(Error::InvalidParameter("no photons for n = 0".into()));
    }
    if m * n > 12 {
        return Err(Error::SizeLimit(format!("{} photons (max 12)", m * n)));
    }
    let mut spec = ProtocolSpec::ideal(m, n);
    spec.initial_bit = initial_bit;
    let schedule = build_schedule(&spec)?;
    let exec = Executor::new(&spec.gate_library)?;
    let mut state = initial_state(m, initial_bit)?;
    for s in &schedule {
        exec.apply(&mut state, s.step, None)?;
    }
    let v = state.as_pure().ok_or(Error::RequiresPure)?;
    let all_one = (1usize << m) - 1;
    let (_, amps) = spin_branches(v, m).swap_remove(all_one);
    let norm = amps.norm();
    if norm < 1e-12 {
        return Err(Error::ZeroProbabilityOutcome {
            outcome: 1,
            probability: norm * norm,
        });
    }
    QuantumState::from_pure(photon_wires(m * n), amps / C64::new(norm, 0.0))
}

#[derive(Debug, Clone)]
pub struct ProtocolResult {
    /// Trajectory-averaged photonic state after completion; omitted above
    /// ten photons.
    pub photonic_state: Option<QuantumState>,
    pub fidelity: f64,
    pub fidelity_std_err: f64,
    pub prep_fidelity: f64,
    pub block_fidelity: f64,
    /// Sum of scheduled gate durations, seconds.
    pub wall_clock_model: f64,
    /// Mean probability of the kept branches (1 when corrected).
    pub acceptance: f64,
}

/// Squared overlaps per trajectory, in trajectory order.
struct Sampled {
    weights: Vec<f64>,
    overlaps: Vec<f64>,
    density: Option<CMatrix>,
}

const CHUNK: usize = 8;

/// Runs `trials` trajectories of `steps` from `start`, scoring the result
/// with `score` (returns `(weight, weighted squared overlap, kept branch
/// amplitudes)`).
fn sample<F>(
    spec: &ProtocolSpec,
    exec: &Executor<'_>,
    start: &QuantumState,
    steps: &[ScheduledStep],
    seed_offset: u64,
    keep_density: Option<usize>,
    score: F,
) -> Result<Sampled>
where
    F: Fn(&QuantumState) -> Result<(f64, f64, Vec<CVector>)> + Sync,
{
    let noisy = spec.noise.as_ref().filter(|n| n.b > 0.0);
    let trials = if noisy.is_some() { spec.trials } else { 1 };
    let run_one = |t: usize| -> Result<(f64, f64, Vec<CVector>)> {
        let mut state = start.clone();
        let mut process = noisy.map(|n| {
            (
                OuProcess::new(n, trajectory_rng(n.seed.wrapping_add(seed_offset), t as u64)),
                n.dt,
            )
        });
        for s in steps {
            exec.apply(&mut state, s.step, process.as_mut())?;
        }
        score(&state)
    };
    // Fixed-size chunks summed in order keep results independent of the
    // thread count.
    let chunks: Vec<Result<(Vec<f64>, Vec<f64>, Option<CMatrix>)>> = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut weights = Vec::new();
            let mut overlaps = Vec::new();
            let mut density = keep_density.map(|d| CMatrix::zeros(d, d));
            for t in (c * CHUNK)..((c + 1) * CHUNK).min(trials) {
                let (w, o, branches) = run_one(t)?;
                weights.push(w);
                overlaps.push(o);
                if let Some(rho) = density.as_mut() {
                    for b in &branches {
                        *rho += b * b.adjoint();
                    }
                }
            }
            Ok((weights, overlaps, density))
        })
        .collect();
    let mut out = Sampled {
        weights: Vec::with_capacity(trials),
        overlaps: Vec::with_capacity(trials),
        density: keep_density.map(|d| CMatrix::zeros(d, d)),
    };
    for chunk in chunks {
        let (w, o, d) = chunk?;
        out.weights.extend(w);
        out.overlaps.extend(o);
        if let (Some(acc), Some(d)) = (out.density.as_mut(), d) {
            *acc += d;
        }
    }
    Ok(out)
}

/// `(sqrt(Σo/Σw), standard error)` from weighted squared overlaps.
fn summarise(s: &Sampled) -> (f64, f64) {
    let total_w: f64 = s.weights.iter().sum();
    let total_o: f64 = s.overlaps.iter().sum();
    let f2 = (total_o / total_w).clamp(0.0, 1.0);
    let n = s.weights.len();
    let se = if n > 1 {
        let mean_w = total_w / n as f64;
        let ratios: Vec<f64> = s
            .weights
            .iter()
            .zip(&s.overlaps)
            .map(|(w, o)| (o - f2 * w) / mean_w)
            .collect();
        let var = ratios.iter().map(|r| r * r).sum::<f64>() / (n - 1) as f64;
        let se2 = (var / n as f64).sqrt();
        if f2 > 0.0 {
            se2 / (2.0 * f2.sqrt())
        } else {
            se2.sqrt()
        }
    } else {
        0.0
    };
    (f2.sqrt(), se)
}

fn pure_overlap(state: &QuantumState, target: &CVector) -> Result<f64> {
    let v = state.as_pure().ok_or(Error::RequiresPure)?;
    Ok(target.dotc(v).norm_sqr())
}

/// Executes the protocol, averaging noisy trajectories.
pub fn run(spec: &ProtocolSpec) -> Result<ProtocolResult> {
    spec.validate()?;
    if spec.n == 0 {
        return Err(Error::InvalidParameter("run needs at least one column".into()));
    }
    let schedule = build_schedule(spec)?;
    let exec = Executor::new(&spec.gate_library)?;
    let (m, n) = (spec.m, spec.n);
    let photons = m * n;
    let target = ideal_target_from(m, n, spec.initial_bit)?;
    let target_v = target.as_pure().ok_or(Error::RequiresPure)?.clone();
    let start = initial_state(m, spec.initial_bit)?;
    let keep = (photons <= 10).then_some(1usize << photons);
    let completion = spec.completion;
    let full = sample(spec, &exec, &start, &schedule, 0, keep, |state| {
        let v = state.as_pure().ok_or(Error::RequiresPure)?;
        let mut weight = 0.0;
        let mut overlap = 0.0;
        let mut kept = Vec::new();
        for (s, mut amps) in spin_branches(v, m) {
            let use_it = match completion {
                Completion::PostSelect => s == (1 << m) - 1,
                Completion::Corrected => true,
            };
            if !use_it {
                continue;
            }
            if completion == Completion::Corrected {
                correct_branch(&mut amps, s, m, n);
            }
            weight += amps.norm_squared();
            overlap += target_v.dotc(&amps).norm_sqr();
            kept.push(amps);
        }
        Ok((weight, overlap, kept))
    })?;
    let (fidelity, fidelity_std_err) = summarise(&full);
    let total_w: f64 = full.weights.iter().sum();
    let photonic_state = match full.density {
        Some(rho) => Some(QuantumState::from_density(
            photon_wires(photons),
            rho / C64::new(total_w, 0.0),
        )?),
        None => None,
    };
    let acceptance = total_w / full.weights.len() as f64;
    let (prep_fidelity, block_fidelity) = factorised_fidelities(spec, &exec, &schedule)?;
    Ok(ProtocolResult {
        photonic_state,
        fidelity,
        fidelity_std_err,
        prep_fidelity,
        block_fidelity,
        wall_clock_model: wall_clock(&schedule, &spec.gate_library),
        acceptance,
    })
}

/// Preparation alone, and one building block started from the ideal
/// prepared state, each against its noiseless ideal-gate counterpart.
fn factorised_fidelities(
    spec: &ProtocolSpec,
    exec: &Executor<'_>,
    schedule: &[ScheduledStep],
) -> Result<(f64, f64)> {
    let m = spec.m;
    let ideal_lib = GateLibrary::ideal();
    let ideal = Executor::new(&ideal_lib)?;
    let prep: Vec<ScheduledStep> = schedule
        .iter()
        .copied()
        .filter(|s| s.stage == Stage::Preparation)
        .collect();
    let block: Vec<ScheduledStep> = schedule
        .iter()
        .copied()
        .filter(|s| s.column == Some(0))
        .collect();
    let start = initial_state(m, spec.initial_bit)?;
    let mut prepared = start.clone();
    for s in &prep {
        ideal.apply(&mut prepared, s.step, None)?;
    }
    let mut after_block = prepared.clone();
    for s in &block {
        ideal.apply(&mut after_block, s.step, None)?;
    }
    let prep_target = prepared.as_pure().ok_or(Error::RequiresPure)?.clone();
    let block_target = after_block.as_pure().ok_or(Error::RequiresPure)?.clone();

    let p = sample(spec, exec, &start, &prep, 1 << 40, None, |st| {
        Ok((1.0, pure_overlap(st, &prep_target)?, Vec::new()))
    })?;
    let b = sample(spec, exec, &prepared, &block, 2 << 40, None, |st| {
        Ok((1.0, pure_overlap(st, &block_target)?, Vec::new()))
    })?;
    Ok((summarise(&p).0, summarise(&b).0))
}

/// Outcome of a local-unitary equivalence search.
#[derive(Debug, Clone)]
pub struct LuResult {
    pub equivalent: bool,
    pub prefilter_passed: bool,
    /// Single-qubit unitaries mapping `psi1` onto `psi2` (up to phase).
    pub locals: Vec<CMatrix>,
    pub overlap: f64,
    pub residual: f64,
}

pub const LU_TOL: f64 = 1e-6;
pub const LU_MAX_QUBITS: usize = 6;

/// Sorted eigenvalues of every single-qubit reduced state.
pub fn reduced_spectra(psi: &QuantumState) -> Result<Vec<[f64; 2]>> {
    (0..psi.num_qubits())
        .map(|w| {
            let rho = psi.partial_trace(&[w])?.density_matrix();
            let mut ev = crate::linalg::HermitianEigen::new(&rho).values;
            ev.as_mut_slice().sort_by(f64::total_cmp);
            Ok([ev[0], ev[1]])
        })
        .collect()
}

fn apply_local(v: &CVector, n: usize, wire: usize, u: &CMatrix) -> CVector {
    let shift = n - 1 - wire;
    let mut out = v.clone();
    for i in 0..v.len() {
        if (i >> shift) & 1 == 0 {
            let j = i | (1 << shift);
            let (a, b) = (v[i], v[j]);
            out[i] = u[(0, 0)] * a + u[(0, 1)] * b;
            out[j] = u[(1, 0)] * a + u[(1, 1)] * b;
        }
    }
    out
}

fn random_unitary(rng: &mut rand_chacha::ChaCha8Rng) -> CMatrix {
    use rand::Rng;
    let axis = [
        rng.random::<f64>() * 2.0 - 1.0,
        rng.random::<f64>() * 2.0 - 1.0,
        rng.random::<f64>() * 2.0 - 1.0,
    ];
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt().max(1e-9);
    linalg::rotation(
        [axis[0] / norm, axis[1] / norm, axis[2] / norm],
        rng.random::<f64>() * 2.0 * PI,
    )
}

/// Maximises `|⟨ψ2| ⊗ᵢUᵢ |ψ1⟩|` from several random starts. Each sweep
/// replaces one `Uᵢ` at a time by its optimum given the others (the polar
/// factor of the local overlap matrix).
pub fn lu_equivalence(psi1: &QuantumState, psi2: &QuantumState) -> Result<LuResult> {
    use rand::SeedableRng;
    let n = psi1.num_qubits();
    if psi2.num_qubits() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: psi2.num_qubits(),
        });
    }
    if n > LU_MAX_QUBITS {
        return Err(Error::SizeLimit(format!("{n} qubits (max {LU_MAX_QUBITS})")));
    }
    let v1 = psi1.as_pure().ok_or(Error::RequiresPure)?;
    let v2 = psi2.as_pure().ok_or(Error::RequiresPure)?;
    let s1 = reduced_spectra(psi1)?;
    let s2 = reduced_spectra(psi2)?;
    let prefilter_passed = s1
        .iter()
        .zip(&s2)
        .all(|(a, b)| (a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    if !prefilter_passed {
        return Ok(LuResult {
            equivalent: false,
            prefilter_passed,
            locals: vec![linalg::identity(2); n],
            overlap: v2.dotc(v1).norm(),
            residual: 1.0 - v2.dotc(v1).norm(),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x1u64);
    let mut best: Option<(f64, Vec<CMatrix>)> = None;
    for start in 0..16 {
        let mut locals: Vec<CMatrix> = if start == 0 {
            vec![linalg::identity(2); n]
        } else {
            (0..n).map(|_| random_unitary(&mut rng)).collect()
        };
        let mut overlap = 0.0;
        for _ in 0..500 {
            let before = overlap;
            for i in 0..n {
                let mut phi = v1.clone();
                for (j, u) in locals.iter().enumerate() {
                    if j != i {
                        phi = apply_local(&phi, n, j, u);
                    }
                }
                // M[b][a] = Σ_rest φ[rest, b] conj(ψ2[rest, a]); overlap = Tr(U M).
                let shift = n - 1 - i;
                let mut mm = CMatrix::zeros(2, 2);
                for k in 0..phi.len() {
                    let b = (k >> shift) & 1;
                    for a in 0..2 {
                        let idx = (k & !(1 << shift)) | (a << shift);
                        mm[(b, a)] += phi[k] * v2[idx].conj();
                    }
                }
                let svd = mm.svd(true, true);
                let (w, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
                locals[i] = vt.adjoint() * w.adjoint();
                overlap = svd.singular_values.sum();
            }
            if overlap - before < 1e-14 {
                break;
            }
        }
        if best.as_ref().map_or(true, |(o, _)| overlap > *o) {
            best = Some((overlap, locals));
        }
        if best.as_ref().is_some_and(|(o, _)| *o > 1.0 - 1e-12) {
            break;
        }
    }
    let (overlap, locals) = best.expect("at least one start");
    let overlap = overlap.min(1.0);
    Ok(LuResult {
        equivalent: overlap > 1.0 - LU_TOL,
        prefilter_passed,
        locals,
        overlap,
        residual: 1.0 - overlap,
    })
}

/// `∏ CZ` over `edges` applied to `|+⟩^⊗n`.
pub fn graph_state(n: usize, edges: &[(usize, usize)]) -> Result<QuantumState> {
    let dim = 1usize << n;
    let amp = 1.0 / (dim as f64).sqrt();
    let v = CVector::from_fn(dim, |i, _| {
        let bit = |w: usize| (i >> (n - 1 - w)) & 1;
        let sign = edges.iter().filter(|(a, b)| bit(*a) & bit(*b) == 1).count() % 2;
        C64::new(if sign == 1 { -amp } else { amp }, 0.0)
    });
    QuantumState::from_pure(photon_wires(n), v)
}

pub fn linear_cluster(n: usize) -> Result<QuantumState> {
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    graph_state(n, &edges)
}

/// Final three-photon state as transcribed in the reference derivation
/// (|1⟩ ↔ R): minus signs on `RLR`, `RRL`.
pub fn transcribed_appendix_state() -> Result<QuantumState> {
    let signs = [1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0];
    let amp = 1.0 / 8f64.sqrt();
    QuantumState::from_pure(
        photon_wires(3),
        CVector::from_fn(8, |i, _| C64::new(signs[i] * amp, 0.0)),
    )
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub label: String,
    pub state: QuantumState,
}

#[derive(Debug, Clone)]
pub struct AppendixReport {
    pub steps: Vec<StepRecord>,
    pub photonic_state: QuantumState,
    pub all_one_probability: f64,
    pub versus_linear_cluster: LuResult,
    pub versus_transcription: LuResult,
    pub passed: bool,
}

impl AppendixReport {
    /// Non-zero amplitudes after every step, one block per step.
    pub fn amplitude_table(&self, encoding: PhotonEncoding) -> String {
        let mut out = String::new();
        for rec in &self.steps {
            out.push_str(&format!("# {}\n", rec.label));
            out.push_str(&format_amplitudes(&rec.state, encoding));
        }
        out.push_str("# photons (all-|1> branch)\n");
        out.push_str(&format_amplitudes(&self.photonic_state, encoding));
        out
    }
}

fn format_amplitudes(state: &QuantumState, encoding: PhotonEncoding) -> String {
    let mut out = String::new();
    let Some(v) = state.as_pure() else {
        return out;
    };
    let n = state.num_qubits();
    for (i, a) in v.iter().enumerate() {
        if a.norm() < 1e-12 {
            continue;
        }
        let mut ket = String::new();
        for (w, role) in state.wires().iter().enumerate() {
            let bit = ((i >> (n - 1 - w)) & 1) as u8;
            match role {
                QubitRole::Photon(_) => ket.push_str(encoding.label(bit)),
                _ => ket.push(char::from(b'0' + bit)),
            }
        }
        out.push_str(&format!("|{ket}>\t{:+.6}\t{:+.6}\n", a.re, a.im));
    }
    out
}

/// Steps the `M = 3, N = 1` ideal circuit from `|111⟩` and checks the
/// photonic output is LU-equivalent to a linear three-photon cluster.
pub fn verify_appendix_a() -> Result<AppendixReport> {
    let mut spec = ProtocolSpec::ideal(3, 1);
    spec.initial_bit = 1;
    let schedule = build_schedule(&spec)?;
    let exec = Executor::new(&spec.gate_library)?;
    let mut state = initial_state(3, 1)?;
    let mut steps = vec![StepRecord {
        label: "init".into(),
        state: state.clone(),
    }];
    for s in &schedule {
        exec.apply(&mut state, s.step, None)?;
        state.check_invariants()?;
        steps.push(StepRecord {
            label: s.step.to_string(),
            state: state.clone(),
        });
    }
    let v = state.as_pure().ok_or(Error::RequiresPure)?;
    let (_, amps) = spin_branches(v, 3).swap_remove(7);
    let p = amps.norm_squared();
    if p < 1e-12 {
        return Err(Error::ZeroProbabilityOutcome {
            outcome: 1,
            probability: p,
        });
    }
    let photonic = QuantumState::from_pure(photon_wires(3), amps / C64::new(p.sqrt(), 0.0))?;
    let versus_linear_cluster = lu_equivalence(&photonic, &linear_cluster(3)?)?;
    let versus_transcription = lu_equivalence(&photonic, &transcribed_appendix_state()?)?;
    Ok(AppendixReport {
        steps,
        passed: versus_linear_cluster.equivalent,
        photonic_state: photonic,
        all_one_probability: p,
        versus_linear_cluster,
        versus_transcription,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(schedule: &[ScheduledStep], f: impl Fn(&Step) -> bool) -> usize {
        schedule.iter().filter(|s| f(&s.step)).count()
    }

    #[test]
    fn two_rails_one_column_emits_two_photons() {
        let s = build_schedule(&ProtocolSpec::ideal(2, 1)).unwrap();
        assert_eq!(count(&s, |st| matches!(st, Step::Emit { .. })), 2);
    }

    #[test]
    fn zero_columns_is_preparation_only() {
        let s = build_schedule(&ProtocolSpec::ideal(3, 0)).unwrap();
        assert!(s.iter().all(|st| st.stage == Stage::Preparation));
        assert_eq!(count(&s, |st| matches!(st, Step::Emit { .. })), 0);
    }

    #[test]
    fn three_rail_gate_order() {
        let s = build_schedule(&ProtocolSpec::ideal(3, 1)).unwrap();
        let labels: Vec<String> = s.iter().map(|st| st.step.to_string()).collect();
        let expect = [
            "Ry", "SWAP_12", "Ry", "SWAP_12", "SWAP_13", "Ry", "SWAP_13", "CZ_12", "CZ_13", "EMIT_1",
            "SWAP_12", "EMIT_2", "SWAP_13", "EMIT_3", "SWAP_13", "SWAP_12", "Ry", "SWAP_12", "Ry",
            "SWAP_13", "Ry", "SWAP_13", "SWAP_12", "MEASURE",
        ];
        assert_eq!(labels, expect);
    }

    #[test]
    fn emission_maps_basis_and_superposition() {
        let e0 = QuantumState::basis(vec![QubitRole::Electron], &[0]).unwrap();
        let out = emit_photon(&e0).unwrap();
        assert!((out.as_pure().unwrap()[0].norm() - 1.0).abs() < 1e-12);

        let plus = e0.apply_gate(&Unitary::from_trusted(linalg::hadamard()), &[0]).unwrap();
        let out = emit_photon(&plus).unwrap();
        let v = out.as_pure().unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0].re - h).abs() < 1e-12 && (v[3].re - h).abs() < 1e-12);
        assert!(v[1].norm() < 1e-12 && v[2].norm() < 1e-12);
    }

    #[test]
    fn two_emissions_make_ghz() {
        let e0 = QuantumState::basis(vec![QubitRole::Electron], &[0]).unwrap();
        let plus = e0.apply_gate(&Unitary::from_trusted(linalg::hadamard()), &[0]).unwrap();
        let out = emit_photon(&emit_photon(&plus).unwrap()).unwrap();
        let v = out.as_pure().unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0].re - h).abs() < 1e-12 && (v[7].re - h).abs() < 1e-12);
        assert!((v.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_one_target_is_maximally_entangled() {
        let t = ideal_target(2, 1).unwrap();
        let spectra = reduced_spectra(&t).unwrap();
        for s in spectra {
            assert!((s[0] - 0.5).abs() < 1e-12 && (s[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_runs_are_exact() {
        for m in 2..=3 {
            for n in 1..=3 {
                let r = run(&ProtocolSpec::ideal(m, n)).unwrap();
                assert!((r.fidelity - 1.0).abs() < 1e-9, "m={m} n={n}: {}", r.fidelity);
                assert!((r.prep_fidelity - 1.0).abs() < 1e-9);
                assert!((r.block_fidelity - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn corrections_equalise_branches() {
        for (m, n) in [(2, 1), (2, 2), (3, 1), (3, 2)] {
            let spec = ProtocolSpec::ideal(m, n);
            let schedule = build_schedule(&spec).unwrap();
            let exec = Executor::new(&spec.gate_library).unwrap();
            let mut state = initial_state(m, 0).unwrap();
            for s in &schedule {
                exec.apply(&mut state, s.step, None).unwrap();
            }
            let target = ideal_target(m, n).unwrap();
            let tv = target.as_pure().unwrap();
            for (s, mut amps) in spin_branches(state.as_pure().unwrap(), m) {
                correct_branch(&mut amps, s, m, n);
                let p = amps.norm_squared();
                assert!(p > 1e-12, "branch {s} has zero weight");
                let f = tv.dotc(&amps).norm_sqr() / p;
                assert!((f - 1.0).abs() < 1e-9, "m={m} n={n} branch {s}: {f}");
            }
        }
    }

    #[test]
    fn lu_identity_and_paulis() {
        let c = linear_cluster(3).unwrap();
        let r = lu_equivalence(&c, &c).unwrap();
        assert!(r.equivalent && r.residual < 1e-12);
        let xiz = c
            .apply_gate(&Unitary::from_trusted(linalg::pauli_x()), &[0])
            .unwrap()
            .apply_gate(&Unitary::from_trusted(linalg::pauli_z()), &[2])
            .unwrap();
        assert!(lu_equivalence(&xiz, &c).unwrap().equivalent);
    }

    #[test]
    fn ghz_and_linear_cluster_are_lu_equivalent() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = CVector::zeros(8);
        v[0] = C64::new(h, 0.0);
        v[7] = C64::new(h, 0.0);
        let ghz = QuantumState::from_pure(photon_wires(3), v).unwrap();
        let r = lu_equivalence(&ghz, &linear_cluster(3).unwrap()).unwrap();
        assert!(r.prefilter_passed);
        assert!(r.equivalent, "overlap {}", r.overlap);
    }

    #[test]
    fn product_and_cluster_are_not() {
        let product = graph_state(3, &[]).unwrap();
        let r = lu_equivalence(&product, &linear_cluster(3).unwrap()).unwrap();
        assert!(!r.prefilter_passed && !r.equivalent);
    }

    #[test]
    fn appendix_a_holds() {
        let r = verify_appendix_a().unwrap();
        assert!(r.passed, "overlap {}", r.versus_linear_cluster.overlap);
        assert!(r.all_one_probability > 0.0);
        for s in &r.steps {
            assert!((s.state.trace() - 1.0).abs() < 1e-12);
        }
        assert!(r.versus_transcription.equivalent);
    }

    #[test]
    fn noise_requires_dd_gates() {
        let mut spec = ProtocolSpec::ideal(2, 1);
        spec.noise = Some(OuNoise::new(1e6, 1e-3, 1e-6, 0).unwrap());
        assert!(matches!(run(&spec), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn missing_gate_is_reported() {
        let mut spec = ProtocolSpec::ideal(2, 1);
        spec.gate_library.cz = None;
        assert!(matches!(build_schedule(&spec), Err(Error::MissingGate(_))));
    }
}
