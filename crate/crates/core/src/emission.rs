//! Spin-photon entanglement degraded by spin precession in the excited
//! state.
//!
//! The electron picks up a phase `Δω·t` during the dwell time `t`, drawn from
//! an exponential distribution with mean `τ`. Averaging
//! `(|0γ0⟩ + e^{iφ}|1γ1⟩)/√2` over `t` gives a two-qubit mixed state whose
//! coherence is `1/(2(1 + iΔωτ))`.

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::state::{max_pure_fidelity, QuantumState, QubitRole};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Bohr magneton over ħ, rad s⁻¹ T⁻¹.
pub const MU_B_OVER_HBAR: f64 = 8.794_100_793e10;

/// How a bare `Δω` number is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrequencyConvention {
    /// Angular frequency, used as is.
    #[default]
    RadPerSecond,
    /// Ordinary frequency, multiplied by 2π.
    Hertz,
}

impl FrequencyConvention {
    pub fn to_angular(self, value: f64) -> f64 {
        match self {
            FrequencyConvention::RadPerSecond => value,
            FrequencyConvention::Hertz => 2.0 * PI * value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionParams {
    /// Excited-state lifetime, s.
    pub tau: f64,
    /// Ground/excited precession mismatch, rad/s.
    pub delta_omega: f64,
}

impl EmissionParams {
    pub fn new(tau: f64, delta_omega: f64) -> Result<Self> {
        let p = EmissionParams { tau, delta_omega };
        p.validate()?;
        Ok(p)
    }

    /// `Δω` given in the chosen convention.
    pub fn with_convention(tau: f64, delta_omega: f64, convention: FrequencyConvention) -> Result<Self> {
        EmissionParams::new(tau, convention.to_angular(delta_omega))
    }

    /// `Δω = Δgₑ μ_B |B| / ħ`.
    pub fn from_g_shift(tau: f64, delta_g: f64, b_mag: f64) -> Result<Self> {
        if !(b_mag >= 0.0) {
            return Err(Error::InvalidParameter(format!("|B| = {b_mag}")));
        }
        EmissionParams::new(tau, (delta_g * MU_B_OVER_HBAR * b_mag).abs())
    }

    /// Checks an explicit `Δω` against the `(Δgₑ, |B|)` route.
    pub fn consistent_with(&self, delta_g: f64, b_mag: f64, rel_tol: f64) -> bool {
        let implied = (delta_g * MU_B_OVER_HBAR * b_mag).abs();
        (implied - self.delta_omega).abs() <= rel_tol * implied.max(self.delta_omega).max(1e-300)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("lifetime {}", self.tau)));
        }
        if !(self.delta_omega >= 0.0) {
            return Err(Error::InvalidParameter(format!("Δω = {}", self.delta_omega)));
        }
        Ok(())
    }

    /// The dimensionless product `Δω·τ`.
    pub fn product(&self) -> f64 {
        self.delta_omega * self.tau
    }
}

/// Closed form of the averaged coherence `⟨e^{iφ}⟩ = 1/(1 − iΔωτ)`.
pub fn mean_phase_factor(x: f64) -> C64 {
    C64::new(1.0, 0.0) / C64::new(1.0, -x)
}

/// `∫₀^∞ e^{-u} e^{ixu} du` by adaptive Gauss–Kronrod quadrature.
pub fn mean_phase_factor_numeric(x: f64, tol: f64) -> C64 {
    // e^{-u} is below 1e-30 past u = 70.
    let upper = 70.0;
    let pieces = ((x.abs() * upper / (2.0 * PI)).ceil() as usize).clamp(1, 4096);
    let width = upper / pieces as f64;
    let f = |u: f64| C64::from_polar((-u).exp(), x * u);
    (0..pieces)
        .map(|i| {
            let a = i as f64 * width;
            adaptive_gk(&f, a, a + width, tol / pieces as f64, 40)
        })
        .sum()
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = C64::new(0.0, 0.0);
    let mut gauss = C64::new(0.0, 0.0);
    for (i, &x) in GK_NODES.iter().enumerate() {
        let values = if x == 0.0 {
            [f(mid), C64::new(0.0, 0.0)]
        } else {
            [f(mid - half * x), f(mid + half * x)]
        };
        let sum = values[0] + values[1];
        kronrod += sum * K15_WEIGHTS[i];
        // Gauss nodes are the odd Kronrod indices.
        if i % 2 == 1 {
            gauss += sum * G7_WEIGHTS[i / 2];
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).norm())
}

fn adaptive_gk<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> C64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return value;
    }
    let mid = 0.5 * (a + b);
    adaptive_gk(f, a, mid, tol / 2.0, depth - 1) + adaptive_gk(f, mid, b, tol / 2.0, depth - 1)
}

fn spin_photon_state(coherence: C64) -> Result<QuantumState> {
    let mut rho = CMatrix::zeros(4, 4);
    rho[(0, 0)] = C64::new(0.5, 0.0);
    rho[(3, 3)] = C64::new(0.5, 0.0);
    rho[(3, 0)] = coherence * 0.5;
    rho[(0, 3)] = coherence.conj() * 0.5;
    QuantumState::from_density(vec![QubitRole::Electron, QubitRole::Photon(0)], rho)
}

/// Spin ⊗ photon state averaged over the emission time, integrated
/// numerically (relative error well below 1e-8).
pub fn dephased_state(p: &EmissionParams) -> Result<QuantumState> {
    p.validate()?;
    spin_photon_state(mean_phase_factor_numeric(p.product(), 1e-13))
}

/// The same state from the closed-form coherence.
pub fn dephased_state_closed(p: &EmissionParams) -> Result<QuantumState> {
    p.validate()?;
    spin_photon_state(mean_phase_factor(p.product()))
}

/// `√(½(1 + 1/√(1+(Δωτ)²)))`.
pub fn emission_fidelity_closed(x: f64) -> f64 {
    (0.5 * (1.0 + 1.0 / (1.0 + x * x).sqrt())).sqrt()
}

pub fn emission_fidelity(p: &EmissionParams) -> Result<f64> {
    p.validate()?;
    Ok(emission_fidelity_closed(p.product()))
}

/// Largest pure-state overlap of the numerically integrated state.
pub fn emission_fidelity_numeric(p: &EmissionParams) -> Result<f64> {
    max_pure_fidelity(&dephased_state(p)?)
}

/// Best fidelity for frequency (colour) encoding, which needs `Δωτ ≥ 2π`
/// to resolve the two colours.
pub fn colour_encoding_floor() -> f64 {
    emission_fidelity_closed(2.0 * PI)
}

/// Full-dephasing limit.
pub const FIDELITY_FLOOR: f64 = FRAC_1_SQRT_2;

/// Rows `(τ, Δω, F)` over a rectangular grid.
pub fn fidelity_grid(taus: &[f64], delta_omegas: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut rows = Vec::with_capacity(taus.len() * delta_omegas.len());
    for &tau in taus {
        for &dw in delta_omegas {
            rows.push((tau, dw, emission_fidelity_closed(dw * tau)));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn no_dephasing_is_maximally_entangled() {
        let p = EmissionParams::new(1.7e-9, 0.0).unwrap();
        assert_abs_diff_eq!(emission_fidelity_numeric(&p).unwrap(), 1.0, epsilon = 1e-10);
        let rho = dephased_state(&p).unwrap().density_matrix();
        assert_abs_diff_eq!(rho[(0, 3)].re, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn coherence_magnitude_matches_closed_form() {
        for x in [0.1, 1.0, 5.1, 30.0, 100.0] {
            let p = EmissionParams::new(1.0, x).unwrap();
            let rho = dephased_state(&p).unwrap().density_matrix();
            let expect = 1.0 / (2.0 * (1.0 + x * x).sqrt());
            assert_abs_diff_eq!(rho[(3, 0)].norm(), expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn strong_dephasing_limit() {
        let p = EmissionParams::new(1.0, 1e6).unwrap();
        let f = emission_fidelity(&p).unwrap();
        assert!((f - FIDELITY_FLOOR).abs() < 1e-6);
    }

    #[test]
    fn numeric_matches_closed() {
        for i in 0..=50 {
            let x = 2.0 * i as f64;
            let p = EmissionParams::new(1.0, x).unwrap();
            let a = emission_fidelity(&p).unwrap();
            let b = emission_fidelity_numeric(&p).unwrap();
            assert!((a - b).abs() < 1e-8, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn colour_floor_value() {
        // Independent evaluation at Δωτ = 2π.
        let x: f64 = 2.0 * PI;
        let expect = ((1.0 + 1.0 / (1.0 + x * x).sqrt()) / 2.0).sqrt();
        assert_abs_diff_eq!(colour_encoding_floor(), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(colour_encoding_floor(), 0.760_7, epsilon = 1e-4);
    }

    #[test]
    fn depends_on_product_only() {
        for a in [2.0, 10.0] {
            let p = EmissionParams::new(1.7e-9, 3e9).unwrap();
            let q = EmissionParams::new(1.7e-9 / a, 3e9 * a).unwrap();
            assert!((emission_fidelity(&p).unwrap() - emission_fidelity(&q).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn conventions() {
        let rad = EmissionParams::with_convention(1.7e-9, 3e9, FrequencyConvention::RadPerSecond).unwrap();
        let hz = EmissionParams::with_convention(1.7e-9, 3e9, FrequencyConvention::Hertz).unwrap();
        assert_abs_diff_eq!(emission_fidelity(&rad).unwrap(), 0.7722, epsilon = 1e-4);
        assert_abs_diff_eq!(emission_fidelity(&hz).unwrap(), 0.7180, epsilon = 1e-3);
    }

    #[test]
    fn g_shift_route() {
        let p = EmissionParams::from_g_shift(1.7e-9, 0.01, 1.0).unwrap();
        assert!(p.consistent_with(0.01, 1.0, 1e-12));
        assert!(!p.consistent_with(0.02, 1.0, 1e-3));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(EmissionParams::new(0.0, 1.0).is_err());
        assert!(EmissionParams::new(1.0, -1.0).is_err());
    }
}
