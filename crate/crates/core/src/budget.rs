//! Large-cluster fidelity extrapolation, photon-limited generation rate and
//! the field choice that minimises building-block length.

use crate::error::{Error, Result};
use crate::hamiltonian::SpinSystemParams;
use crate::protocol::{build_schedule, ProtocolSpec, Step};
use crate::synthesis::{synthesize, GateTarget, SynthesisOptions, SynthesisReport};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::RwLock;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyBudget {
    pub eta_qe: f64,
    pub eta_dwf: f64,
    pub eta_ce: f64,
    pub eta_de: f64,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")))
    }
}

impl EfficiencyBudget {
    /// A single combined efficiency (the other factors set to one).
    pub fn combined_only(eta: f64) -> Self {
        EfficiencyBudget {
            eta_qe: eta,
            eta_dwf: 1.0,
            eta_ce: 1.0,
            eta_de: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("eta_qe", self.eta_qe)?;
        check_unit("eta_dwf", self.eta_dwf)?;
        check_unit("eta_ce", self.eta_ce)?;
        check_unit("eta_de", self.eta_de)
    }

    pub fn combined(&self) -> f64 {
        self.eta_qe * self.eta_dwf * self.eta_ce * self.eta_de
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityBudget {
    pub f_prep: f64,
    pub f_block: f64,
    /// Spin-photon entanglement fidelity per emitted photon.
    pub f_photon_gate: f64,
    /// Rails.
    pub m: usize,
    /// Columns.
    pub n: usize,
}

impl FidelityBudget {
    pub fn validate(&self) -> Result<()> {
        check_unit("f_prep", self.f_prep)?;
        check_unit("f_block", self.f_block)?;
        check_unit("f_photon_gate", self.f_photon_gate)
    }

    pub fn photons(&self) -> usize {
        self.m * self.n
    }
}

/// `f_prep · f_block^N · f_photon^(M·N)`; spin initialisation and readout
/// count as perfect.
pub fn extrapolated_fidelity(b: &FidelityBudget) -> Result<f64> {
    b.validate()?;
    Ok(b.f_prep * b.f_block.powi(b.n as i32) * b.f_photon_gate.powi(b.photons() as i32))
}

/// `(ηQE·ηDWF·ηCE·ηDE)^photons / duration`, in Hz.
pub fn generation_rate(e: &EfficiencyBudget, photons: usize, scheme_duration: f64) -> Result<f64> {
    e.validate()?;
    if !(scheme_duration > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scheme duration {scheme_duration}"
        )));
    }
    Ok(e.combined().powi(photons as i32) / scheme_duration)
}

/// Extrapolated fidelity against cluster length `n` (columns).
pub fn fidelity_curve(
    f_prep: f64,
    f_block: f64,
    f_photon_gate: f64,
    m: usize,
    lengths: &[usize],
) -> Result<Vec<(usize, f64)>> {
    lengths
        .iter()
        .map(|&n| {
            let b = FidelityBudget {
                f_prep,
                f_block,
                f_photon_gate,
                m,
                n,
            };
            Ok((n, extrapolated_fidelity(&b)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConstraints {
    /// Largest electron splitting the microwave drive can address, Hz.
    pub microwave_ceiling: f64,
    /// Rails used to count gates per building block.
    pub rails: usize,
}

impl Default for FieldConstraints {
    fn default() -> Self {
        FieldConstraints {
            microwave_ceiling: 20e9,
            rails: 2,
        }
    }
}

/// Two-qubit gate counts in one building block.
pub fn gates_per_block(rails: usize) -> Result<(usize, usize)> {
    let schedule = build_schedule(&ProtocolSpec::ideal(rails, 1))?;
    let block = schedule.iter().filter(|s| s.column == Some(0));
    let (mut swaps, mut czs) = (0, 0);
    for s in block {
        match s.step {
            Step::Swap(_) => swaps += 1,
            Step::Cz(_) => czs += 1,
            _ => {}
        }
    }
    Ok((swaps, czs))
}

type CacheKey = (u64, u64, u64, GateTarget);

/// Synthesis results keyed by `(A∥, Bx, Bz, target)`.
#[derive(Default)]
pub struct SynthesisCache {
    map: RwLock<HashMap<CacheKey, SynthesisReport>>,
}

impl SynthesisCache {
    pub fn new() -> Self {
        SynthesisCache::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_synthesize(
        &self,
        p: &SpinSystemParams,
        target: GateTarget,
        opts: &SynthesisOptions,
    ) -> Result<SynthesisReport> {
        let key = (p.a_par.to_bits(), p.b[0].to_bits(), p.b[2].to_bits(), target);
        if let Some(hit) = self.map.read().ok().and_then(|m| m.get(&key).cloned()) {
            return Ok(hit);
        }
        let report = synthesize(&target.unitary(), target.name(), p, opts)?;
        if let Ok(mut m) = self.map.write() {
            m.insert(key, report.clone());
        }
        Ok(report)
    }
}

#[derive(Debug, Clone)]
pub struct FieldPoint {
    pub bx: f64,
    pub bz: f64,
    /// One building block's two-qubit gate time, seconds.
    pub block_time: f64,
    pub swap: SynthesisReport,
    pub cz: SynthesisReport,
}

/// Field grid `(0, max] × (0, max]` in steps of `step` tesla.
pub fn field_grid(step: f64, max: f64) -> Vec<(f64, f64)> {
    let count = (max / step).round() as usize;
    let mut out = Vec::with_capacity(count * count);
    for i in 1..=count {
        for j in 1..=count {
            out.push((i as f64 * step, j as f64 * step));
        }
    }
    out
}

/// Evaluates every admissible grid point and returns them sorted by block
/// time (shortest first). Points whose synthesis misses the threshold are
/// dropped.
pub fn minimize_sequence_field(
    base: &SpinSystemParams,
    field_grid: &[(f64, f64)],
    constraints: &FieldConstraints,
    opts: &SynthesisOptions,
    cache: &SynthesisCache,
) -> Result<Vec<FieldPoint>> {
    if field_grid.is_empty() {
        return Err(Error::InvalidParameter("empty field grid".into()));
    }
    let (swaps, czs) = gates_per_block(constraints.rails)?;
    let admissible: Vec<(f64, f64)> = field_grid
        .iter()
        .copied()
        .filter(|&(bx, bz)| base.with_field(bx, bz).electron_splitting() <= constraints.microwave_ceiling)
        .collect();
    let mut points: Vec<FieldPoint> = admissible
        .par_iter()
        .filter_map(|&(bx, bz)| {
            let p = base.with_field(bx, bz);
            let swap = cache.get_or_synthesize(&p, GateTarget::Swap, opts).ok()?;
            let cz = cache.get_or_synthesize(&p, GateTarget::Cz, opts).ok()?;
            if !(swap.meets_threshold && cz.meets_threshold) {
                return None;
            }
            let block_time = swaps as f64 * swap.sequence.total_duration()
                + czs as f64 * cz.sequence.total_duration();
            Some(FieldPoint {
                bx,
                bz,
                block_time,
                swap,
                cz,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(Error::SynthesisFailed(
            "no admissible field point reached the threshold".into(),
        ));
    }
    points.sort_by(|a, b| a.block_time.total_cmp(&b.block_time));
    Ok(points)
}
