//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line; run with `--nocapture --test-threads=1` to read them
//! in order.

use spinclust::budget::{extrapolated_fidelity, generation_rate, EfficiencyBudget, FidelityBudget};
use spinclust::emission::{
    emission_fidelity, emission_fidelity_closed, emission_fidelity_numeric, EmissionParams, FIDELITY_FLOOR,
};
use spinclust::noise::{fit_decay_time, free_induction_decay, hahn_echo_decay, ou_from_coherence};
use spinclust::protocol::{self, build_schedule, verify_appendix_a, wall_clock, GateLibrary, ProtocolSpec};
use spinclust::synthesis::{synthesize, GateTarget, SynthesisOptions};
use spinclust::hamiltonian::SpinSystemParams;
use std::process::Command;
use std::time::{Duration, Instant};

// Tolerances.
const LU_OVERLAP_MIN: f64 = 1.0 - 1e-6;
const NOISELESS_TOL: f64 = 1e-9;
const GATE_THRESHOLD: f64 = 0.999;
const DURATION_FACTOR: f64 = 2.0;
const SWAP_REFERENCE: f64 = 1.6e-6;
const CZ_REFERENCE: f64 = 1.1e-6;
const T2_STAR_REL: f64 = 0.05;
const T2_HAHN_REL: f64 = 0.10;
const TRAJECTORIES: usize = 2000;
const PLATEAU: f64 = 0.999;
const PLATEAU_TOL: f64 = 0.001;
const BUDGET_TOL: f64 = 0.001;
const RATE_TOL_HZ: f64 = 1000.0;
const EMISSION_QUADRATURE_TOL: f64 = 1e-8;
const EMISSION_PAPER: f64 = 0.8;
const EMISSION_TOL: f64 = 0.05;
const WALL_CLOCK_REFERENCE: f64 = 3e-6;

fn report(n: &str, pass: bool, detail: String, elapsed: Duration, limit: Duration) {
    let pass = pass && elapsed <= limit;
    println!(
        "{} criterion {n}: {detail} [{:.1}s, limit {}s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinclust"))
}

#[test]
fn criterion_1_three_photon_equivalence() {
    let t = Instant::now();
    let r = verify_appendix_a().unwrap();
    let o = r.versus_linear_cluster.overlap;
    report(
        "1",
        r.versus_linear_cluster.equivalent && o > LU_OVERLAP_MIN,
        format!("3x1 output vs linear 3-photon cluster, LU overlap {o:.12}"),
        t.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_2_noiseless_self_consistency() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for m in [2, 3] {
        for n in [1, 2, 3] {
            let r = protocol::run(&ProtocolSpec::ideal(m, n)).unwrap();
            worst = worst.max((1.0 - r.fidelity).abs());
        }
    }
    report(
        "2",
        worst <= NOISELESS_TOL,
        format!("ideal gates, (M,N) in {{2,3}}x{{1,2,3}}, max |1-F| = {worst:.1e}"),
        t.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_3_gate_synthesis() {
    let t = Instant::now();
    let p = SpinSystemParams::isotropic(70e6, 0.6, 0.6);
    let mut pass = true;
    let mut parts = Vec::new();
    for (target, min_k, reference) in [(GateTarget::Swap, 14, SWAP_REFERENCE), (GateTarget::Cz, 8, CZ_REFERENCE)] {
        let opts = SynthesisOptions {
            min_k,
            seed: 1,
            ..SynthesisOptions::default()
        };
        let r = synthesize(&target.unitary(), target.name(), &p, &opts).unwrap();
        let d = r.sequence.total_duration();
        let ok = r.unitary_fidelity >= GATE_THRESHOLD
            && d <= reference * DURATION_FACTOR
            && d >= reference / DURATION_FACTOR;
        pass &= ok;
        parts.push(format!(
            "{} k={} F={:.9} T={:.3}us",
            target.name(),
            r.sequence.k(),
            r.unitary_fidelity,
            d * 1e6
        ));
    }
    report("3", pass, parts.join(", "), t.elapsed(), Duration::from_secs(30 * 60));
}

#[test]
fn criterion_4_ou_calibration() {
    let t = Instant::now();
    // Quasi-static regime (τc ≫ T2*), where the closed forms hold.
    let noise = ou_from_coherence(1e-6, 100e-6).unwrap().with_seed(11);
    let fid_times: Vec<f64> = (1..=40).map(|i| i as f64 * 0.075 * noise.t2_star()).collect();
    let echo_times: Vec<f64> = (1..=40).map(|i| i as f64 * 0.05 * noise.t2_hahn()).collect();
    let fid = free_induction_decay(&noise, &fid_times, TRAJECTORIES).unwrap();
    let echo = hahn_echo_decay(&noise, &echo_times, TRAJECTORIES).unwrap();
    let t2s = fit_decay_time(&fid, 2.0, 0.1, 0.9).unwrap();
    let t2 = fit_decay_time(&echo, 3.0, 0.1, 0.9).unwrap();
    let expected_star = std::f64::consts::SQRT_2 / noise.b;
    let expected_hahn = (12.0 * noise.tau_c / (noise.b * noise.b)).cbrt();
    let e1 = (t2s / expected_star - 1.0).abs();
    let e2 = (t2 / expected_hahn - 1.0).abs();
    report(
        "4",
        e1 <= T2_STAR_REL && e2 <= T2_HAHN_REL,
        format!(
            "T2* fit {:.4}us vs {:.4}us ({:.2}%), T2 fit {:.3}us vs {:.3}us ({:.2}%), {TRAJECTORIES} trajectories",
            t2s * 1e6,
            expected_star * 1e6,
            e1 * 100.0,
            t2 * 1e6,
            expected_hahn * 1e6,
            e2 * 100.0
        ),
        t.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_5_fig3a_plateau() {
    let t = Instant::now();
    let out = bin()
        .args(["figure", "fig3a", "--trials", &TRAJECTORIES.to_string(), "--seed", "7"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut at70 = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        rows += 1;
        let a: f64 = rec[0].parse().unwrap();
        let t2: f64 = rec[1].parse().unwrap();
        let f: f64 = rec[4].parse().unwrap();
        if a == 70.0 {
            at70.push((t2, f));
        }
    }
    let f_at = |t2: f64| at70.iter().find(|(x, _)| *x == t2).map(|p| p.1).unwrap();
    let plateau_ok = [8.0, 30.0, 300.0].iter().all(|&t2| (f_at(t2) - PLATEAU).abs() <= PLATEAU_TOL);
    let lower = f_at(2.0) < f_at(8.0);
    report(
        "5",
        rows == 16 && plateau_ok && lower,
        format!(
            "4x4 grid; A=70MHz F(T2=2,8,30,300us) = {:.5}, {:.5}, {:.6}, {:.7}",
            f_at(2.0),
            f_at(8.0),
            f_at(30.0),
            f_at(300.0)
        ),
        t.elapsed(),
        Duration::from_secs(2 * 3600),
    );
}

#[test]
fn criterion_6_extrapolation() {
    let t = Instant::now();
    let b = |f_photon, n| FidelityBudget {
        f_prep: 0.999,
        f_block: 0.998,
        f_photon_gate: f_photon,
        m: 2,
        n,
    };
    let short = extrapolated_fidelity(&b(0.94, 5)).unwrap();
    let long = extrapolated_fidelity(&b(1.0, 50)).unwrap();
    report(
        "6",
        (short - 0.533).abs() <= BUDGET_TOL && short > 0.5 && (long - 0.904).abs() <= BUDGET_TOL && long > 0.90,
        format!("2x5 F={short:.5}, 2x50 F={long:.5}"),
        t.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_7_rate_model() {
    let t = Instant::now();
    let e = EfficiencyBudget::combined_only(0.85);
    let fast = generation_rate(&e, 10, 3e-6).unwrap();
    let slow = generation_rate(&e, 100, 30e-6).unwrap();
    let slow_oracle = 0.85f64.powi(100) / 30e-6;
    report(
        "7",
        (fast - 65.6e3).abs() <= RATE_TOL_HZ && (slow - slow_oracle).abs() < 1e-15,
        format!("2x5: {:.1} Hz; 2x50: {:.2} mHz (formula value, not fitted to 0.6 mHz)", fast, slow * 1e3),
        t.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_8_emission_fidelity() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..=200 {
        let x = i as f64 * 0.5;
        let p = EmissionParams::new(1e-9, x * 1e9).unwrap();
        let numeric = emission_fidelity_numeric(&p).unwrap();
        worst = worst.max((numeric - emission_fidelity_closed(x)).abs());
    }
    let at_point = emission_fidelity(&EmissionParams::new(1.7e-9, 3e9).unwrap()).unwrap();
    let limits = emission_fidelity_closed(0.0) == 1.0 && emission_fidelity_closed(f64::INFINITY) == FIDELITY_FLOOR;
    report(
        "8",
        worst <= EMISSION_QUADRATURE_TOL && (at_point - EMISSION_PAPER).abs() <= EMISSION_TOL && limits,
        format!("max |numeric-closed| = {worst:.1e}; F(1.7ns, 3e9 rad/s) = {at_point:.4}; limits exact: {limits}"),
        t.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_9_property_suite() {
    let t = Instant::now();
    let out = bin().args(["verify", "--trials", "200"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let checks = text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count();
    let failed = text.lines().filter(|l| l.starts_with("FAIL")).count();
    report(
        "9",
        out.status.success() && failed == 0 && checks > 0,
        format!("verify: {checks} checks, {failed} failed"),
        t.elapsed(),
        Duration::from_secs(20 * 60),
    );
}

/// The 2×5 wall clock with the quoted gate times (SWAP 1.6 μs, CZ 1.1 μs)
/// under the schedule that produces the correct state. Four SWAPs and one
/// CZ per block already exceed 3 μs per column, so this cannot pass.
#[test]
#[ignore = "unattainable: the 2x5 schedule with quoted gate times takes ~41 us"]
fn wall_clock_of_two_by_five_near_three_microseconds() {
    let t = Instant::now();
    let lib = GateLibrary::ideal_with_durations(SWAP_REFERENCE, CZ_REFERENCE);
    let schedule = build_schedule(&ProtocolSpec::ideal(2, 5)).unwrap();
    let w = wall_clock(&schedule, &lib);
    report(
        "wall-clock (2x5 about 3us)",
        w <= WALL_CLOCK_REFERENCE * DURATION_FACTOR && w >= WALL_CLOCK_REFERENCE / DURATION_FACTOR,
        format!("2x5 wall clock {:.2}us vs 3us (factor 2)", w * 1e6),
        t.elapsed(),
        Duration::from_secs(1),
    );
}
