//! Three-photon state tracking plus the invariant suite. Output is deterministic
//! (fixed seeds, no timings) so two runs can be diffed.

use crate::commands::{base_settings, dd_library, preset};
use crate::presets::Presets;
use crate::{CheckFailed, Common};
use anyhow::{bail, Result};
use clap::Args;
use spinclust::budget::{extrapolated_fidelity, FidelityBudget};
use spinclust::emission::{emission_fidelity_closed, mean_phase_factor, mean_phase_factor_numeric};
use spinclust::hamiltonian::{resonance_spacing, secular_hamiltonian, ResonanceKind};
use spinclust::linalg::{self, unitarity_defect};
use spinclust::noise::{ou_from_coherence, OuNoise};
use spinclust::protocol::{
    self, graph_state, linear_cluster, lu_equivalence, verify_appendix_a, Completion, GateLibrary,
    PhotonEncoding, ProtocolSpec,
};
use spinclust::state::Unitary;
use spinclust::synthesis::{gate_fidelity, sequence_unitary, GateTarget};

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Print the per-step amplitude table of the 3x1 run.
    #[arg(long)]
    pub dump: bool,
    /// Trajectories for the noisy checks.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overrides the bath strength (rad/s) in the noisy threshold check.
    #[arg(long)]
    pub inject_b: Option<f64>,
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

struct Ctx {
    presets: Presets,
    settings: crate::config::Settings,
    trials: usize,
    seed: u64,
}

impl Ctx {
    fn library(&self) -> Result<GateLibrary> {
        dd_library(&self.settings, &self.presets, preset(&self.settings, &self.presets)?)
    }

    fn noise(&self, t2_us: f64) -> Result<OuNoise> {
        let t2 = t2_us * 1e-6;
        Ok(ou_from_coherence(0.01 * t2, t2)?.with_seed(self.seed))
    }

    fn noisy(&self, n: usize, noise: OuNoise) -> Result<ProtocolSpec> {
        Ok(ProtocolSpec {
            m: 2,
            n,
            gate_library: self.library()?,
            photon_encoding: PhotonEncoding::default(),
            noise: Some(noise),
            trials: self.trials,
            completion: Completion::Corrected,
            initial_bit: 0,
        })
    }
}

fn appendix(dump: bool) -> Result<Check> {
    let r = verify_appendix_a()?;
    if dump {
        eprint!("{}", r.amplitude_table(PhotonEncoding::Polarisation));
    }
    Ok(check(
        "appendix_a",
        r.passed,
        format!(
            "p(all ones)={:.6} linear_cluster_overlap={:.9} transcription_overlap={:.9}",
            r.all_one_probability, r.versus_linear_cluster.overlap, r.versus_transcription.overlap
        ),
    ))
}

fn noiseless() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for m in [2, 3] {
        for n in [1, 2, 3] {
            let r = protocol::run(&ProtocolSpec::ideal(m, n))?;
            out.push(check(
                "noiseless_protocol",
                r.fidelity > 1.0 - 1e-9,
                format!("m={m} n={n} fidelity={:.12}", r.fidelity),
            ));
        }
    }
    Ok(out)
}

fn completion_modes() -> Result<Check> {
    let mut spec = ProtocolSpec::ideal(2, 2);
    let corrected = protocol::run(&spec)?;
    spec.completion = Completion::PostSelect;
    let post = protocol::run(&spec)?;
    Ok(check(
        "completion_modes",
        (corrected.fidelity - post.fidelity).abs() < 1e-9
            && (corrected.acceptance - 1.0).abs() < 1e-12
            && post.acceptance < 1.0,
        format!(
            "corrected={:.12} postselect={:.12} acceptance={:.6}",
            corrected.fidelity, post.fidelity, post.acceptance
        ),
    ))
}

fn unitarity(ctx: &Ctx) -> Result<Check> {
    let lib = ctx.library()?;
    let system = lib.system.expect("DD library carries its system");
    let h = secular_hamiltonian(&system);
    let mut worst: f64 = 0.0;
    for g in [&lib.swap, &lib.cz].into_iter().flatten() {
        if let protocol::GateImpl::Dd(seq) = g {
            worst = worst.max(unitarity_defect(sequence_unitary(seq, &h)?.matrix()));
        }
    }
    Ok(check("norm_preservation", worst < 1e-10, format!("max unitarity defect={worst:.1e}")))
}

fn resonances(ctx: &Ctx) -> Result<Check> {
    let p = preset(&ctx.settings, &ctx.presets)?.working_params()?;
    let c = |n| resonance_spacing(&p, n, ResonanceKind::Conditional);
    let u = |n| resonance_spacing(&p, n, ResonanceKind::Unconditional);
    let (c1, c2, c3, u1, u2) = (c(1)?, c(2)?, c(3)?, u(1)?, u(2)?);
    let ratios = [c2 / c1, c3 / c1, u1 / c1, u2 / c1];
    let expected = [3.0, 5.0, 2.0, 4.0];
    let ok = ratios.iter().zip(expected).all(|(r, e)| (r - e).abs() < 1e-12);
    Ok(check(
        "resonance_ratios",
        ok,
        format!("tau1={:.4}ns ratios={:.6?}", c1 * 1e9, ratios),
    ))
}

fn lu_checks() -> Result<Vec<Check>> {
    let line = linear_cluster(4)?;
    let mut rotated = line.clone();
    for (w, angle) in [0.3, 1.1, -0.7, 2.0].into_iter().enumerate() {
        let u = Unitary::from_trusted(linalg::rotation([0.6, 0.0, 0.8], angle));
        rotated = rotated.apply_gate(&u, &[w])?;
    }
    let star = graph_state(4, &[(0, 1), (0, 2), (0, 3)])?;
    let product = graph_state(4, &[])?;
    let same = lu_equivalence(&line, &rotated)?;
    let different = lu_equivalence(&line, &star)?;
    let rejected = lu_equivalence(&line, &product)?;
    Ok(vec![
        check(
            "lu_equivalent_pair",
            same.equivalent && same.prefilter_passed,
            format!("overlap={:.9}", same.overlap),
        ),
        check(
            "lu_inequivalent_pair",
            !different.equivalent && different.prefilter_passed,
            format!("overlap={:.6}", different.overlap),
        ),
        check(
            "lu_prefilter",
            !rejected.prefilter_passed && !rejected.equivalent,
            "product state rejected by reduced spectra".into(),
        ),
    ])
}

fn emission() -> Check {
    let mut worst: f64 = 0.0;
    for i in 0..=40 {
        let x = i as f64 * 2.5;
        worst = worst.max((mean_phase_factor_numeric(x, 1e-12) - mean_phase_factor(x)).norm());
    }
    let monotone = (0..100).all(|i| {
        emission_fidelity_closed(i as f64 * 0.1) >= emission_fidelity_closed((i + 1) as f64 * 0.1)
    });
    check(
        "emission_closed_form",
        worst < 1e-8 && monotone,
        format!("max |numeric - closed|={worst:.1e}"),
    )
}

fn budget() -> Result<Check> {
    let b = |f_photon, n| FidelityBudget {
        f_prep: 0.999,
        f_block: 0.998,
        f_photon_gate: f_photon,
        m: 2,
        n,
    };
    let short = extrapolated_fidelity(&b(0.94, 5))?;
    let long = extrapolated_fidelity(&b(1.0, 50))?;
    Ok(check(
        "budget_arithmetic",
        (short - 0.533).abs() <= 1e-3 && short > 0.5 && (long - 0.904).abs() <= 1e-3 && long > 0.9,
        format!("2x5={short:.5} 2x50={long:.5}"),
    ))
}

fn gate_replay(ctx: &Ctx) -> Result<Vec<Check>> {
    let sys = preset(&ctx.settings, &ctx.presets)?;
    let wp = sys.working_point.as_ref();
    let mut out = Vec::new();
    for name in [wp.and_then(|w| w.swap_gate.clone()), wp.and_then(|w| w.cz_gate.clone())]
        .into_iter()
        .flatten()
    {
        let file = ctx.presets.gate_file(&name)?;
        let target: GateTarget = file.target.parse()?;
        let u = sequence_unitary(&file.sequence()?, &secular_hamiltonian(&file.system))?;
        let f = gate_fidelity(&u, &target.unitary())?;
        out.push(check(
            "gate_file_replay",
            f >= 0.999 && (f - file.unitary_fidelity).abs() < 1e-9,
            format!("{name} fidelity={f:.9}"),
        ));
    }
    Ok(out)
}

fn noisy_threshold(ctx: &Ctx, inject_b: Option<f64>) -> Result<Check> {
    let mut noise = ctx.noise(300.0)?;
    if let Some(b) = inject_b {
        noise.b = b;
        noise.validate()?;
    }
    let r = protocol::run(&ctx.noisy(2, noise)?)?;
    Ok(check(
        "noisy_2x2_t2_300us",
        r.fidelity >= 0.99,
        format!("fidelity={:.6} se={:.1e}", r.fidelity, r.fidelity_std_err),
    ))
}

fn monotonicity(ctx: &Ctx) -> Result<Vec<Check>> {
    let noise = ctx.noise(2.0)?;
    let f: Vec<(f64, f64)> = (1..=3)
        .map(|n| -> Result<_> {
            let r = protocol::run(&ctx.noisy(n, noise)?)?;
            Ok((r.fidelity, r.fidelity_std_err))
        })
        .collect::<Result<_>>()?;
    let in_n = f.windows(2).all(|w| w[1].0 <= w[0].0 + 2.0 * (w[0].1 + w[1].1));
    let g: Vec<(f64, f64)> = [0.5, 1.0, 2.0]
        .into_iter()
        .map(|s| -> Result<_> {
            let mut nz = noise;
            nz.b *= s;
            let r = protocol::run(&ctx.noisy(1, nz)?)?;
            Ok((r.fidelity, r.fidelity_std_err))
        })
        .collect::<Result<_>>()?;
    let in_b = g.windows(2).all(|w| w[1].0 <= w[0].0 + 2.0 * (w[0].1 + w[1].1));
    let fmt = |v: &[(f64, f64)]| v.iter().map(|x| format!("{:.4}", x.0)).collect::<Vec<_>>().join(",");
    Ok(vec![
        check("fidelity_monotone_in_n", in_n, format!("n=1..3 t2=2us: {}", fmt(&f))),
        check("fidelity_monotone_in_b", in_b, format!("b x0.5,1,2: {}", fmt(&g))),
    ])
}

fn reproducibility(ctx: &Ctx) -> Result<Check> {
    let spec = ctx.noisy(1, ctx.noise(8.0)?)?;
    let a = protocol::run(&spec)?;
    let b = protocol::run(&spec)?;
    Ok(check(
        "seed_reproducibility",
        a.fidelity.to_bits() == b.fidelity.to_bits(),
        format!("fidelity={:.12}", a.fidelity),
    ))
}

pub fn verify(args: VerifyArgs) -> Result<()> {
    let mut settings = base_settings(&args.common)?;
    settings.set("trials", args.trials);
    settings.set("inject_b", args.inject_b);
    settings.default("trials", 100);
    let ctx = Ctx {
        presets: Presets::load()?,
        trials: settings.require("trials")?,
        seed: settings.require("seed")?,
        settings,
    };
    let mut checks = vec![appendix(args.dump)?];
    checks.extend(noiseless()?);
    checks.push(completion_modes()?);
    checks.push(unitarity(&ctx)?);
    checks.push(resonances(&ctx)?);
    checks.extend(lu_checks()?);
    checks.push(emission());
    checks.push(budget()?);
    checks.extend(gate_replay(&ctx)?);
    checks.push(noisy_threshold(&ctx, args.inject_b)?);
    checks.extend(monotonicity(&ctx)?);
    checks.push(reproducibility(&ctx)?);

    let mut text = crate::output::header("verify", &ctx.settings);
    for c in &checks {
        text.push_str(&format!(
            "{} {} {}\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    text.push_str(&format!("{} checks, {} failed\n", checks.len(), failed));
    crate::output::emit(args.common.out.as_deref(), &text)?;
    if failed > 0 {
        bail!(CheckFailed(format!("{failed} check(s) failed")));
    }
    Ok(())
}
