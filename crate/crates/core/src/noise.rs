//! Ornstein–Uhlenbeck dephasing of the electron spin.
//!
//! The bath adds `B(t)·σz/2 ⊗ I` to the Hamiltonian, with `B` in rad/s. `B`
//! is a stationary Gaussian Markov process with correlation time `τc` and
//! stationary standard deviation `b`, which gives a quasi-static free
//! induction decay `exp(-(t/T2*)²)` with `T2* = √2/b` and, for `τc ≫ T2`, a
//! Hahn-echo decay `exp(-(t/T2)³)` with `T2 = (12 τc / b²)^(1/3)`.

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::state::{QuantumState, Unitary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuNoise {
    /// Strength, rad/s. Zero switches the bath off.
    pub b: f64,
    /// Correlation time, seconds.
    pub tau_c: f64,
    /// Integration step, seconds.
    pub dt: f64,
    pub seed: u64,
}

impl OuNoise {
    pub fn new(b: f64, tau_c: f64, dt: f64, seed: u64) -> Result<Self> {
        let n = OuNoise { b, tau_c, dt, seed };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(Error::InvalidParameter(format!("b = {}", self.b)));
        }
        if !(self.tau_c > 0.0) {
            return Err(Error::InvalidParameter(format!("tau_c = {}", self.tau_c)));
        }
        if !(self.dt > 0.0) || self.dt > self.tau_c / 10.0 {
            return Err(Error::InvalidParameter(format!(
                "dt = {} must be positive and at most tau_c/10 = {}",
                self.dt,
                self.tau_c / 10.0
            )));
        }
        Ok(())
    }

    /// Stationary standard deviation of `B`, rad/s.
    pub fn sigma(&self) -> f64 {
        self.b
    }

    pub fn t2_star(&self) -> f64 {
        SQRT_2 / self.b
    }

    pub fn t2_hahn(&self) -> f64 {
        (12.0 * self.tau_c / (self.b * self.b)).cbrt()
    }

    /// `min(τc/50, shortest_segment/20)`.
    pub fn default_dt(tau_c: f64, shortest_segment: Option<f64>) -> f64 {
        let from_bath = tau_c / 50.0;
        shortest_segment.map_or(from_bath, |s| from_bath.min(s / 20.0))
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn noiseless() -> Self {
        OuNoise {
            b: 0.0,
            tau_c: 1.0,
            dt: 1e-3,
            seed: 0,
        }
    }
}

/// Calibrates `(b, τc)` from measured `T2*` and Hahn-echo `T2`.
pub fn ou_from_coherence(t2_star: f64, t2_hahn: f64) -> Result<OuNoise> {
    if !(t2_star > 0.0) {
        return Err(Error::InvalidParameter(format!("T2* = {t2_star}")));
    }
    if !(t2_hahn > t2_star) {
        return Err(Error::InvalidParameter(format!(
            "T2 = {t2_hahn} must exceed T2* = {t2_star}"
        )));
    }
    let b = SQRT_2 / t2_star;
    let tau_c = t2_hahn.powi(3) * b * b / 12.0;
    OuNoise::new(b, tau_c, tau_c / 50.0, 0)
}

/// Independent, reproducible stream for trajectory `index`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Exact-update sampler of a single OU realisation.
#[derive(Debug, Clone)]
pub struct OuProcess {
    sigma: f64,
    tau_c: f64,
    value: f64,
    rng: ChaCha8Rng,
}

impl OuProcess {
    /// Starts from a draw of the stationary distribution.
    pub fn new(noise: &OuNoise, mut rng: ChaCha8Rng) -> Self {
        let xi: f64 = StandardNormal.sample(&mut rng);
        OuProcess {
            sigma: noise.sigma(),
            tau_c: noise.tau_c,
            value: noise.sigma() * xi,
            rng,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// `B(t+h) = B(t) e^{-h/τc} + σ sqrt(1 - e^{-2h/τc}) ξ`.
    pub fn advance(&mut self, h: f64) -> f64 {
        let decay = (-h / self.tau_c).exp();
        let xi: f64 = StandardNormal.sample(&mut self.rng);
        self.value = self.value * decay + self.sigma * (1.0 - decay * decay).max(0.0).sqrt() * xi;
        self.value
    }

    /// Phase `Σ B(t_k) h_k` accumulated over `duration`, holding `B`
    /// constant across steps of at most `dt`.
    pub fn integrate(&mut self, duration: f64, dt: f64) -> f64 {
        if duration <= 0.0 {
            return 0.0;
        }
        let steps = (duration / dt).ceil().max(1.0) as usize;
        let h = duration / steps as f64;
        let mut phase = 0.0;
        for _ in 0..steps {
            phase += self.value * h;
            self.advance(h);
        }
        phase
    }
}

/// `B(t)` sampled every `dt` from `t = 0` up to and including `duration`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.dt * (self.samples.len().saturating_sub(1)) as f64
    }

    /// Samples covering `[start, start + length]`.
    pub fn window(&self, start: f64, length: f64) -> Result<Trajectory> {
        let first = (start / self.dt).round() as usize;
        let count = (length / self.dt).ceil() as usize + 1;
        if first + count > self.samples.len() {
            return Err(Error::TrajectoryTooShort {
                covered: self.duration(),
                required: start + length,
            });
        }
        Ok(Trajectory {
            dt: self.dt,
            samples: self.samples[first..first + count].to_vec(),
        })
    }
}

pub fn sample_trajectory(noise: &OuNoise, duration: f64) -> Result<Trajectory> {
    sample_trajectory_indexed(noise, duration, 0)
}

pub fn sample_trajectory_indexed(noise: &OuNoise, duration: f64, index: u64) -> Result<Trajectory> {
    noise.validate()?;
    if !(duration > 0.0) {
        return Err(Error::InvalidParameter(format!("duration {duration}")));
    }
    // Round-off in the ratio must not add a step.
    let steps = (duration / noise.dt * (1.0 - 1e-12)).ceil() as usize;
    let mut process = OuProcess::new(noise, trajectory_rng(noise.seed, index));
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(process.value());
    for _ in 0..steps {
        samples.push(process.advance(noise.dt));
    }
    Ok(Trajectory {
        dt: noise.dt,
        samples,
    })
}

/// `σz/2` on the first wire of a register with `dim` amplitudes, in Hz per
/// rad/s of bath field.
fn bath_operator(dim: usize) -> CMatrix {
    let half = linalg::pauli_z() * C64::new(0.5 / (2.0 * PI), 0.0);
    linalg::kron(&half, &linalg::identity(dim / 2))
}

/// Evolves `state` on `targets` (first target = electron) for `t` seconds
/// under `H + B(t_k)·σz/2 ⊗ I`, holding `B` piecewise constant over steps of
/// the trajectory's `dt`. `H` is in Hz, `B` in rad/s.
pub fn apply_noise_segment(
    state: &QuantumState,
    trajectory: &Trajectory,
    h: &CMatrix,
    t: f64,
    targets: &[usize],
) -> Result<QuantumState> {
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!("negative duration {t}")));
    }
    let steps = (t / trajectory.dt - 1e-9).ceil().max(0.0) as usize;
    if steps > trajectory.samples.len() {
        return Err(Error::TrajectoryTooShort {
            covered: trajectory.duration(),
            required: t,
        });
    }
    let dim = h.nrows();
    let bath = bath_operator(dim);
    let commuting = linalg::frobenius(&linalg::commutator(h, &bath))
        <= 1e-12 * linalg::frobenius(h).max(1.0);
    let mut out = state.clone();
    if commuting {
        // Noise and H commute: one propagator for H, one phase for the bath.
        let phase: f64 = (0..steps)
            .map(|k| trajectory.samples[k] * (trajectory.dt.min(t - k as f64 * trajectory.dt)))
            .sum();
        let u = linalg::hermitian_propagator(h, t);
        let kick = linalg::kron(&linalg::rz(phase), &linalg::identity(dim / 2));
        out.apply_gate_mut(&Unitary::from_trusted(kick * u), targets)?;
    } else {
        for k in 0..steps {
            let step = trajectory.dt.min(t - k as f64 * trajectory.dt);
            let hk = h + &bath * C64::new(trajectory.samples[k], 0.0);
            let u = linalg::hermitian_propagator(&hk, step);
            out.apply_gate_mut(&Unitary::from_trusted(u), targets)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayPoint {
    pub t: f64,
    pub mean: f64,
    pub std_err: f64,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Electron coherence `<σx>` after free precession from `|+>`, averaged over
/// trajectories. Each trajectory evolves the single-spin state explicitly.
pub fn free_induction_decay(noise: &OuNoise, times: &[f64], trajectories: usize) -> Result<Vec<DecayPoint>> {
    coherence_decay(noise, times, trajectories, false)
}

/// Hahn echo `t/2 − π − t/2`, read out as `<σx>` against `|+>`.
pub fn hahn_echo_decay(noise: &OuNoise, times: &[f64], trajectories: usize) -> Result<Vec<DecayPoint>> {
    coherence_decay(noise, times, trajectories, true)
}

fn coherence_decay(
    noise: &OuNoise,
    times: &[f64],
    trajectories: usize,
    echo: bool,
) -> Result<Vec<DecayPoint>> {
    noise.validate()?;
    let zero = CMatrix::zeros(2, 2);
    let plus = QuantumState::from_pure(
        vec![crate::state::QubitRole::Electron],
        crate::state::normalized(vec![linalg::ONE, linalg::ONE]),
    )?;
    let flip = Unitary::from_trusted(linalg::pauli_x());
    let sx = linalg::pauli_x();
    times
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let dt = noise.dt.min(t / 40.0).max(1e-15);
            let local = OuNoise { dt, ..*noise };
            let values: Result<Vec<f64>> = (0..trajectories)
                .into_par_iter()
                .map(|j| {
                    let index = ((ti as u64) << 40) | j as u64;
                    let traj = sample_trajectory_indexed(&local, t.max(dt), index)?;
                    let state = if echo {
                        let half = t / 2.0;
                        let first = apply_noise_segment(&plus, &traj, &zero, half, &[0])?;
                        let flipped = first.apply_gate(&flip, &[0])?;
                        let rest = traj.window(half, half)?;
                        apply_noise_segment(&flipped, &rest, &zero, half, &[0])?
                    } else {
                        apply_noise_segment(&plus, &traj, &zero, t, &[0])?
                    };
                    // X|+> = |+>, so the echo also reads +1 at t = 0.
                    let v = state.as_pure().expect("pure evolution");
                    Ok(v.dotc(&(&sx * v)).re)
                })
                .collect();
            let values = values?;
            let (mean, std_err) = mean_and_stderr(&values);
            Ok(DecayPoint { t, mean, std_err })
        })
        .collect()
}

/// Fits `S(t) = exp(-(t/T)^p)` with fixed exponent `p` by linear least
/// squares on `ln(-ln S)` over points with `lo < S < hi`.
pub fn fit_decay_time(points: &[DecayPoint], exponent: f64, lo: f64, hi: f64) -> Option<f64> {
    let usable: Vec<f64> = points
        .iter()
        .filter(|p| p.mean > lo && p.mean < hi && p.t > 0.0)
        .map(|p| p.t.ln() - (-(p.mean.ln())).ln() / exponent)
        .collect();
    if usable.len() < 2 {
        return None;
    }
    Some((usable.iter().sum::<f64>() / usable.len() as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn calibration_round_trip() {
        let n = ou_from_coherence(3e-6, 300e-6).unwrap();
        assert_relative_eq!(n.t2_star(), 3e-6, max_relative = 1e-14);
        assert_relative_eq!(n.t2_hahn(), 300e-6, max_relative = 1e-12);
        let doubled = ou_from_coherence(6e-6, 300e-6).unwrap();
        assert_relative_eq!(doubled.b, n.b / 2.0, max_relative = 1e-14);
        assert!(ou_from_coherence(3e-6, 2e-6).is_err());
        assert!(ou_from_coherence(0.0, 2e-6).is_err());
    }

    #[test]
    fn validation() {
        assert!(OuNoise::new(1e6, 1e-3, 1e-3, 0).is_err());
        assert!(OuNoise::new(1e6, 1e-3, 1e-5, 0).is_ok());
        assert!(OuNoise::new(-1.0, 1e-3, 1e-5, 0).is_err());
        assert_relative_eq!(OuNoise::default_dt(1e-3, Some(1e-8)), 5e-10);
        assert_relative_eq!(OuNoise::default_dt(1e-6, None), 2e-8);
    }

    #[test]
    fn reproducible_trajectories() {
        let n = OuNoise::new(1e6, 1e-5, 1e-7, 42).unwrap();
        let a = sample_trajectory(&n, 1e-5).unwrap();
        let b = sample_trajectory(&n, 1e-5).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectory(&n.with_seed(43), 1e-5).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.samples.len(), 101);
    }

    #[test]
    fn zero_noise_matches_free_evolution() {
        let n = OuNoise::new(0.0, 1e-5, 1e-8, 1).unwrap();
        let p = crate::hamiltonian::SpinSystemParams::isotropic(70e6, 0.6, 0.6);
        let h = crate::hamiltonian::secular_hamiltonian(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = crate::state::random_pure(
            vec![crate::state::QubitRole::Electron, crate::state::QubitRole::Nuclear(0)],
            &mut rng,
        )
        .unwrap();
        let traj = sample_trajectory(&n, 2e-7).unwrap();
        let noisy = apply_noise_segment(&s, &traj, &h, 1.7e-7, &[0, 1]).unwrap();
        let clean = crate::hamiltonian::evolve(&s, &h, 1.7e-7, &[0, 1]).unwrap();
        assert!((noisy.as_pure().unwrap() - clean.as_pure().unwrap()).norm() < 1e-9);
    }

    #[test]
    fn populations_survive_pure_dephasing() {
        let n = OuNoise::new(5e7, 1e-6, 1e-9, 9).unwrap();
        let traj = sample_trajectory(&n, 1e-6).unwrap();
        let zero = CMatrix::zeros(2, 2);
        for bit in [0u8, 1] {
            let s = QuantumState::basis(vec![crate::state::QubitRole::Electron], &[bit]).unwrap();
            let out = apply_noise_segment(&s, &traj, &zero, 9e-7, &[0]).unwrap();
            let v = out.as_pure().unwrap();
            assert_relative_eq!(v[bit as usize].norm_sqr(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_commuting_path_agrees_for_commuting_input() {
        // A tiny transverse drive forces the stepwise path; compare with a
        // brute-force product of step propagators.
        let n = OuNoise::new(2e6, 1e-6, 1e-8, 5).unwrap();
        let traj = sample_trajectory(&n, 2e-7).unwrap();
        let h = linalg::pauli_x() * C64::new(1e5, 0.0);
        let s = QuantumState::basis(vec![crate::state::QubitRole::Electron], &[0]).unwrap();
        let out = apply_noise_segment(&s, &traj, &h, 1.5e-7, &[0]).unwrap();
        let mut manual = s.clone();
        for k in 0..15 {
            let hk = &h + bath_operator(2) * C64::new(traj.samples[k], 0.0);
            let u = Unitary::from_trusted(linalg::hermitian_propagator(&hk, 1e-8));
            manual = manual.apply_gate(&u, &[0]).unwrap();
        }
        assert!((out.as_pure().unwrap() - manual.as_pure().unwrap()).norm() < 1e-12);
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let n = OuNoise::new(1e6, 1e-5, 1e-7, 1).unwrap();
        let traj = sample_trajectory(&n, 1e-6).unwrap();
        let s = QuantumState::basis(vec![crate::state::QubitRole::Electron], &[0]).unwrap();
        let r = apply_noise_segment(&s, &traj, &CMatrix::zeros(2, 2), 5e-6, &[0]);
        assert!(matches!(r, Err(Error::TrajectoryTooShort { .. })));
    }

    #[test]
    fn fit_recovers_exact_decay() {
        let pts: Vec<DecayPoint> = (1..30)
            .map(|i| {
                let t = i as f64 * 1e-7;
                DecayPoint {
                    t,
                    mean: (-(t / 1.3e-6f64).powi(3)).exp(),
                    std_err: 0.0,
                }
            })
            .collect();
        assert_relative_eq!(fit_decay_time(&pts, 3.0, 0.05, 0.95).unwrap(), 1.3e-6, max_relative = 1e-10);
    }
}
