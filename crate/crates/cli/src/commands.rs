use crate::config::Settings;
use crate::output::{self, num, Table};
use crate::presets::{Presets, SystemPreset};
use crate::{Common, CompletionArg, UsageError};
use anyhow::{anyhow, bail, Result};
use clap::Args;
use spinclust::budget::{generation_rate, EfficiencyBudget};
use spinclust::hamiltonian::SpinSystemParams;
use spinclust::noise::{ou_from_coherence, OuNoise};
use spinclust::protocol::{self, Completion, GateLibrary, ProtocolResult, ProtocolSpec};
use spinclust::synthesis::{rescale_to_hyperfine, synthesize as compile, GateFile, GateTarget, SynthesisOptions};
use std::path::PathBuf;

pub const DEFAULT_PRESET: &str = "siv29";

/// Loads the config file (if any) and layers the common flags on top.
pub fn base_settings(common: &Common) -> Result<Settings> {
    let mut s = match &common.config {
        Some(p) => Settings::from_file(p)?,
        None => <Settings as Default>::default(),
    };
    s.set("preset", common.preset.clone());
    s.set("seed", common.seed);
    s.default("preset", DEFAULT_PRESET);
    s.default("seed", 1);
    Ok(s)
}

pub fn preset<'a>(settings: &Settings, presets: &'a Presets) -> Result<&'a SystemPreset> {
    let name: String = settings.require("preset")?;
    Ok(presets.system(&name)?)
}

/// Spin system from the preset with optional `a_mhz`, `bx`, `bz` overrides.
pub fn system(settings: &Settings, sys: &SystemPreset) -> Result<SpinSystemParams> {
    let wp = sys.working_point.as_ref();
    let bx = settings.get::<f64>("bx")?.or(wp.map(|w| w.bx_t));
    let bz = settings.get::<f64>("bz")?.or(wp.map(|w| w.bz_t));
    let (Some(bx), Some(bz)) = (bx, bz) else {
        bail!(UsageError(format!("preset `{}` has no working field; pass --bx and --bz", sys.label)));
    };
    let mut p = sys.params(bx, bz)?;
    if let Some(a) = settings.get::<f64>("a_mhz")? {
        p = p.with_a_par(a * 1e6);
        p.a_perp = a * 1e6;
    }
    p.validate()?;
    Ok(p)
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// swap, cz, cnot, identity, nuclear-rx90, nuclear-rz90.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub a_mhz: Option<f64>,
    #[arg(long)]
    pub bx: Option<f64>,
    #[arg(long)]
    pub bz: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub min_k: Option<usize>,
    #[arg(long)]
    pub max_k: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Upper end of the spacing scan, ns.
    #[arg(long)]
    pub tau_max_ns: Option<f64>,
}

pub fn synthesis_options(settings: &Settings) -> Result<SynthesisOptions> {
    let mut opts = SynthesisOptions::default();
    if let Some(v) = settings.get("threshold")? {
        opts.threshold = v;
    }
    if let Some(v) = settings.get("min_k")? {
        opts.min_k = v;
    }
    if let Some(v) = settings.get("max_k")? {
        opts.max_k = v;
    }
    if let Some(v) = settings.get("restarts")? {
        opts.restarts = v;
    }
    if let Some(v) = settings.get::<f64>("tau_max_ns")? {
        opts.tau_max = Some(v * 1e-9);
    }
    opts.seed = settings.require("seed")?;
    Ok(opts)
}

pub fn synthesize(args: SynthesizeArgs) -> Result<()> {
    let mut s = base_settings(&args.common)?;
    s.set("target", args.target);
    s.set("a_mhz", args.a_mhz);
    s.set("bx", args.bx);
    s.set("bz", args.bz);
    s.set("threshold", args.threshold);
    s.set("min_k", args.min_k);
    s.set("max_k", args.max_k);
    s.set("restarts", args.restarts);
    s.set("tau_max_ns", args.tau_max_ns);
    let target: GateTarget = s
        .require::<String>("target")?
        .parse()
        .map_err(|e: spinclust::Error| anyhow!(UsageError(e.to_string())))?;
    let presets = Presets::load()?;
    let sys = preset(&s, &presets)?;
    let p = system(&s, sys)?;
    let opts = synthesis_options(&s)?;
    let report = compile(&target.unitary(), target.name(), &p, &opts)?;
    let file = GateFile::new(target.name(), &report.sequence, report.unitary_fidelity, &p);
    output::emit(args.common.out.as_deref(), &file.to_toml()?)?;
    eprintln!(
        "target={} k={} duration_us={:.4} fidelity={:.12} evaluations={} meets_threshold={}",
        report.target_name,
        report.sequence.k(),
        report.sequence.total_duration() * 1e6,
        report.unitary_fidelity,
        report.iterations,
        report.meets_threshold
    );
    if !report.meets_threshold {
        bail!(crate::CheckFailed(format!(
            "fidelity {} below threshold {}",
            report.unitary_fidelity, opts.threshold
        )));
    }
    Ok(())
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Rails (electron plus nuclear spins).
    #[arg(long)]
    pub m: Option<usize>,
    /// Columns.
    #[arg(long)]
    pub n: Option<usize>,
    /// Hahn-echo T2 in microseconds.
    #[arg(long)]
    pub t2_us: Option<f64>,
    /// T2*/T2 used to calibrate the bath.
    #[arg(long)]
    pub t2_star_ratio: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum)]
    pub completion: Option<CompletionArg>,
    /// Exact gates instead of DD sequences (implies no noise).
    #[arg(long)]
    pub ideal: bool,
    /// Switch the bath off.
    #[arg(long)]
    pub noiseless: bool,
    /// Gate file overriding the preset's SWAP.
    #[arg(long)]
    pub swap_gate: Option<PathBuf>,
    /// Gate file overriding the preset's CZ.
    #[arg(long)]
    pub cz_gate: Option<PathBuf>,
    /// Hyperfine constant; shipped gates are rescaled to it.
    #[arg(long)]
    pub a_mhz: Option<f64>,
    /// Overrides the calibrated bath strength, rad/s.
    #[arg(long)]
    pub noise_b: Option<f64>,
}

pub fn run_settings(args: &RunArgs) -> Result<Settings> {
    let mut s = base_settings(&args.common)?;
    s.set("m", args.m);
    s.set("n", args.n);
    s.set("t2_us", args.t2_us);
    s.set("t2_star_ratio", args.t2_star_ratio);
    s.set("trials", args.trials);
    s.set(
        "completion",
        args.completion.map(|c| match c {
            CompletionArg::Corrected => "corrected",
            CompletionArg::Postselect => "postselect",
        }),
    );
    s.set("ideal", args.ideal.then_some(true));
    s.set("noiseless", args.noiseless.then_some(true));
    s.set("swap_gate", args.swap_gate.as_ref().map(|p| p.display().to_string()));
    s.set("cz_gate", args.cz_gate.as_ref().map(|p| p.display().to_string()));
    s.set("a_mhz", args.a_mhz);
    s.set("noise_b", args.noise_b);
    s.default("m", 2);
    s.default("n", 2);
    s.default("trials", 200);
    s.default("t2_star_ratio", 0.01);
    s.default("completion", "corrected");
    Ok(s)
}

fn gate_from(settings: &Settings, key: &str, presets: &Presets, fallback: Option<&String>) -> Result<GateFile> {
    if let Some(path) = settings.get::<String>(key)? {
        let text = std::fs::read_to_string(&path)?;
        return Ok(GateFile::from_toml(&text)?);
    }
    let name = fallback.ok_or_else(|| anyhow!(UsageError(format!("no `{key}` given and the preset ships none"))))?;
    presets.gate_file(name)
}

/// DD gate library from gate files, rescaled to `a_mhz` when set.
pub fn dd_library(settings: &Settings, presets: &Presets, sys: &SystemPreset) -> Result<GateLibrary> {
    let wp = sys.working_point.as_ref();
    let swap = gate_from(settings, "swap_gate", presets, wp.and_then(|w| w.swap_gate.as_ref()))?;
    let cz = gate_from(settings, "cz_gate", presets, wp.and_then(|w| w.cz_gate.as_ref()))?;
    if swap.system != cz.system {
        bail!(UsageError("SWAP and CZ gate files were compiled for different systems".into()));
    }
    let (mut swap_seq, mut cz_seq, mut system) = (swap.sequence()?, cz.sequence()?, swap.system);
    if let Some(a) = settings.get::<f64>("a_mhz")? {
        let (s, p) = rescale_to_hyperfine(&swap_seq, &system, a * 1e6)?;
        let (c, _) = rescale_to_hyperfine(&cz_seq, &system, a * 1e6)?;
        swap_seq = s;
        cz_seq = c;
        system = p;
    }
    Ok(GateLibrary::synthesized(system, swap_seq, cz_seq))
}

pub fn noise_model(settings: &Settings, sys: &SystemPreset) -> Result<Option<OuNoise>> {
    if settings.get::<bool>("noiseless")?.unwrap_or(false) || settings.get::<bool>("ideal")?.unwrap_or(false) {
        return Ok(None);
    }
    let t2_us = match settings.get::<f64>("t2_us")? {
        Some(t) => t,
        None => sys
            .working_point
            .as_ref()
            .map(|w| w.t2_us)
            .ok_or_else(|| anyhow!(UsageError("no --t2-us and no preset working T2".into())))?,
    };
    let ratio: f64 = settings.require("t2_star_ratio")?;
    let t2 = t2_us * 1e-6;
    let mut noise = ou_from_coherence(ratio * t2, t2)?.with_seed(settings.require("seed")?);
    if let Some(b) = settings.get::<f64>("noise_b")? {
        noise.b = b;
        noise.validate()?;
    }
    Ok(Some(noise))
}

pub fn protocol_spec(settings: &Settings, presets: &Presets) -> Result<ProtocolSpec> {
    let sys = preset(settings, presets)?;
    let ideal = settings.get::<bool>("ideal")?.unwrap_or(false);
    let library = if ideal {
        GateLibrary::ideal()
    } else {
        dd_library(settings, presets, sys)?
    };
    let completion = match settings.require::<String>("completion")?.as_str() {
        "corrected" => Completion::Corrected,
        "postselect" => Completion::PostSelect,
        other => bail!(UsageError(format!("unknown completion `{other}`"))),
    };
    Ok(ProtocolSpec {
        m: settings.require("m")?,
        n: settings.require("n")?,
        gate_library: library,
        photon_encoding: Default::default(),
        noise: noise_model(settings, sys)?,
        trials: settings.require("trials")?,
        completion,
        initial_bit: 0,
    })
}

pub const RUN_COLUMNS: [&str; 10] = [
    "m",
    "n",
    "t2_us",
    "trials",
    "fidelity",
    "fidelity_std_err",
    "prep_fidelity",
    "block_fidelity",
    "wall_clock_s",
    "acceptance",
];

pub fn run_row(spec: &ProtocolSpec, t2_us: Option<f64>, r: &ProtocolResult) -> Vec<String> {
    vec![
        spec.m.to_string(),
        spec.n.to_string(),
        t2_us.map_or_else(|| "inf".into(), num),
        spec.trials.to_string(),
        num(r.fidelity),
        num(r.fidelity_std_err),
        num(r.prep_fidelity),
        num(r.block_fidelity),
        num(r.wall_clock_model),
        num(r.acceptance),
    ]
}

pub fn run(args: RunArgs) -> Result<()> {
    let s = run_settings(&args)?;
    let presets = Presets::load()?;
    let spec = protocol_spec(&s, &presets)?;
    let result = protocol::run(&spec)?;
    let mut table = Table::new(&RUN_COLUMNS);
    let t2 = spec.noise.map(|n| n.t2_hahn() * 1e6);
    table.push(run_row(&spec, t2, &result));
    output::emit(args.common.out.as_deref(), &output::render("run", &s, &table)?)
}

#[derive(Args, Debug)]
pub struct RateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Combined efficiency; overrides the preset's factors.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Detection efficiency used with preset factors.
    #[arg(long)]
    pub eta_de: Option<f64>,
    #[arg(long)]
    pub photons: Option<usize>,
    #[arg(long)]
    pub duration_us: Option<f64>,
}

pub fn efficiency(settings: &Settings, sys: &SystemPreset) -> Result<EfficiencyBudget> {
    if let Some(eta) = settings.get::<f64>("eta")? {
        return Ok(EfficiencyBudget::combined_only(eta));
    }
    let get = |v: Option<crate::presets::Span>, name: &str| {
        v.map(|s| s.nominal())
            .ok_or_else(|| anyhow!(UsageError(format!("preset `{}` lacks {name}; pass --eta", sys.label))))
    };
    Ok(EfficiencyBudget {
        eta_qe: get(sys.eta_qe, "eta_qe")?,
        eta_dwf: get(sys.eta_dwf, "eta_dwf")?,
        eta_ce: get(sys.eta_ce, "eta_ce")?,
        eta_de: settings.get("eta_de")?.unwrap_or(1.0),
    })
}

pub fn rate(args: RateArgs) -> Result<()> {
    let mut s = base_settings(&args.common)?;
    s.set("eta", args.eta);
    s.set("eta_de", args.eta_de);
    s.set("photons", args.photons);
    s.set("duration_us", args.duration_us);
    s.default("photons", 10);
    s.default("duration_us", 3.0);
    let presets = Presets::load()?;
    let sys = preset(&s, &presets)?;
    let e = efficiency(&s, sys)?;
    let photons: usize = s.require("photons")?;
    let duration = s.require::<f64>("duration_us")? * 1e-6;
    let r = generation_rate(&e, photons, duration)?;
    let mut table = Table::new(&["eta_combined", "photons", "duration_s", "rate_hz"]);
    table.push(vec![num(e.combined()), photons.to_string(), num(duration), num(r)]);
    output::emit(args.common.out.as_deref(), &output::render("rate", &s, &table)?)
}

pub fn list_presets() -> Result<()> {
    let presets = Presets::load()?;
    for name in presets.names() {
        let sys = presets.system(name)?;
        println!("{name}\t{}", sys.label);
    }
    Ok(())
}
