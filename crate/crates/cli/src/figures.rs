use crate::commands::{base_settings, dd_library, preset};
use crate::config::Settings;
use crate::output::{self, num, Table};
use crate::presets::Presets;
use crate::{Common, UsageError};
use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use spinclust::budget::{fidelity_curve, generation_rate, EfficiencyBudget};
use spinclust::emission::{emission_fidelity, EmissionParams, FrequencyConvention};
use spinclust::noise::ou_from_coherence;
use spinclust::protocol::{self, build_schedule, wall_clock, Completion, ProtocolSpec};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureName {
    Fig3a,
    Fig3b,
    Fig3c,
    Rates,
}

impl FigureName {
    fn key(self) -> &'static str {
        match self {
            FigureName::Fig3a => "fig3a",
            FigureName::Fig3b => "fig3b",
            FigureName::Fig3c => "fig3c",
            FigureName::Rates => "rates",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConventionArg {
    RadPerSecond,
    Hertz,
}

#[derive(Args, Debug)]
pub struct FigureArgs {
    pub name: FigureName,
    #[command(flatten)]
    pub common: Common,
    /// Hyperfine grid for fig3a, MHz (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub a_mhz: Vec<f64>,
    /// T2 grid for fig3a and fig3b, microseconds.
    #[arg(long, value_delimiter = ',')]
    pub t2_us: Vec<f64>,
    #[arg(long)]
    pub t2_star_ratio: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Longest cluster in fig3b, columns.
    #[arg(long)]
    pub max_n: Option<usize>,
    /// Lifetime grid for fig3c, ns.
    #[arg(long, value_delimiter = ',')]
    pub tau_ns: Vec<f64>,
    /// Largest Δω in fig3c (units set by --convention).
    #[arg(long)]
    pub delta_omega_max: Option<f64>,
    /// Δω points in fig3c.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, value_enum)]
    pub convention: Option<ConventionArg>,
}

fn joined(v: &[f64]) -> Option<String> {
    (!v.is_empty()).then(|| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
}

pub fn figure(args: FigureArgs) -> Result<()> {
    let mut s = base_settings(&args.common)?;
    s.set("figure", Some(args.name.key()));
    s.set("a_mhz", joined(&args.a_mhz));
    s.set("t2_us", joined(&args.t2_us));
    s.set("t2_star_ratio", args.t2_star_ratio);
    s.set("trials", args.trials);
    s.set("max_n", args.max_n);
    s.set("tau_ns", joined(&args.tau_ns));
    s.set("delta_omega_max", args.delta_omega_max);
    s.set("points", args.points);
    s.set(
        "convention",
        args.convention.map(|c| match c {
            ConventionArg::RadPerSecond => "rad_per_second",
            ConventionArg::Hertz => "hertz",
        }),
    );
    let presets = Presets::load()?;
    let table = match args.name {
        FigureName::Fig3a => fig3a(&mut s, &presets)?,
        FigureName::Fig3b => fig3b(&mut s, &presets)?,
        FigureName::Fig3c => fig3c(&mut s)?,
        FigureName::Rates => rates(&mut s, &presets)?,
    };
    output::emit(args.common.out.as_deref(), &output::render(args.name.key(), &s, &table)?)
}

/// M=2 protocol with the shipped gates rescaled to `a_mhz` and the bath
/// calibrated from `t2_us`.
fn noisy_spec(s: &Settings, presets: &Presets, a_mhz: f64, t2_us: f64, n: usize) -> Result<ProtocolSpec> {
    let sys = preset(s, presets)?;
    let mut local = s.clone();
    local.set("a_mhz", Some(a_mhz));
    let library = dd_library(&local, presets, sys)?;
    let ratio: f64 = s.require("t2_star_ratio")?;
    let t2 = t2_us * 1e-6;
    let noise = ou_from_coherence(ratio * t2, t2)?.with_seed(s.require("seed")?);
    Ok(ProtocolSpec {
        m: 2,
        n,
        gate_library: library,
        photon_encoding: Default::default(),
        noise: Some(noise),
        trials: s.require("trials")?,
        completion: Completion::Corrected,
        initial_bit: 0,
    })
}

fn fig3a(s: &mut Settings, presets: &Presets) -> Result<Table> {
    s.default("a_mhz", "20,45,70,95");
    s.default("t2_us", "2,8,30,300");
    s.default("t2_star_ratio", 0.01);
    s.default("trials", 200);
    let mut table = Table::new(&[
        "a_mhz",
        "t2_us",
        "bx_t",
        "bz_t",
        "fidelity",
        "fidelity_std_err",
        "block_time_us",
    ]);
    for a in s.list::<f64>("a_mhz")? {
        for t2 in s.list::<f64>("t2_us")? {
            let spec = noisy_spec(s, presets, a, t2, 2)?;
            let r = protocol::run(&spec)?;
            let system = spec.gate_library.system.expect("DD library carries its system");
            let schedule = build_schedule(&ProtocolSpec::ideal(2, 1))?;
            let block: Vec<_> = schedule.into_iter().filter(|st| st.column == Some(0)).collect();
            let block_time = wall_clock(&block, &spec.gate_library);
            table.push(vec![
                num(a),
                num(t2),
                num(system.b[0]),
                num(system.b[2]),
                num(r.fidelity),
                num(r.fidelity_std_err),
                num(block_time * 1e6),
            ]);
        }
    }
    Ok(table)
}

fn fig3b(s: &mut Settings, presets: &Presets) -> Result<Table> {
    s.default("t2_us", "2,8,300");
    s.default("t2_star_ratio", 0.01);
    s.default("trials", 200);
    s.default("max_n", 100);
    let sys = preset(s, presets)?;
    let a = sys.params(0.0, 0.0)?.a_par * 1e-6;
    let lengths: Vec<usize> = (1..=s.require::<usize>("max_n")?).collect();
    let mut table = Table::new(&[
        "t2_us",
        "f_prep",
        "f_block",
        "f_photon_gate",
        "n",
        "fidelity",
    ]);
    for t2 in s.list::<f64>("t2_us")? {
        let r = protocol::run(&noisy_spec(s, presets, a, t2, 1)?)?;
        for f_photon in [1.0, 0.94] {
            for (n, f) in fidelity_curve(r.prep_fidelity, r.block_fidelity, f_photon, 2, &lengths)? {
                table.push(vec![
                    num(t2),
                    num(r.prep_fidelity),
                    num(r.block_fidelity),
                    num(f_photon),
                    n.to_string(),
                    num(f),
                ]);
            }
        }
    }
    Ok(table)
}

fn fig3c(s: &mut Settings) -> Result<Table> {
    s.default("tau_ns", "0.5,1,1.7,2.5,5,10");
    s.default("delta_omega_max", 1e10);
    s.default("points", 41);
    s.default("convention", "rad_per_second");
    let convention = match s.require::<String>("convention")?.as_str() {
        "rad_per_second" => FrequencyConvention::RadPerSecond,
        "hertz" => FrequencyConvention::Hertz,
        other => bail!(UsageError(format!("unknown convention `{other}`"))),
    };
    let points: usize = s.require("points")?;
    if points < 2 {
        bail!(UsageError("--points must be at least 2".into()));
    }
    let max: f64 = s.require("delta_omega_max")?;
    let mut table = Table::new(&["tau_ns", "delta_omega", "delta_omega_rad_s", "fidelity"]);
    for tau_ns in s.list::<f64>("tau_ns")? {
        for i in 0..points {
            let dw = max * i as f64 / (points - 1) as f64;
            let p = EmissionParams::with_convention(tau_ns * 1e-9, dw, convention)?;
            table.push(vec![
                num(tau_ns),
                num(dw),
                num(p.delta_omega),
                num(emission_fidelity(&p)?),
            ]);
        }
    }
    Ok(table)
}

fn rates(s: &mut Settings, presets: &Presets) -> Result<Table> {
    let mut table = Table::new(&["case", "eta_combined", "photons", "duration_s", "rate_hz"]);
    let e = EfficiencyBudget::combined_only(0.85);
    for (case, photons, duration) in [("2x5_3us", 10, 3e-6), ("2x50_30us", 100, 30e-6)] {
        table.push(vec![
            case.into(),
            num(e.combined()),
            photons.to_string(),
            num(duration),
            num(generation_rate(&e, photons, duration)?),
        ]);
    }

    // Same photon counts with the wall clock the shipped gates imply.
    let sys = preset(s, presets)?;
    let library = dd_library(s, presets, sys)?;
    // Wall clock is linear in N: preparation plus N identical blocks.
    let one = build_schedule(&ProtocolSpec::ideal(2, 1))?;
    let (block, prep): (Vec<_>, Vec<_>) = one.into_iter().partition(|st| st.column.is_some());
    let (t_prep, t_block) = (wall_clock(&prep, &library), wall_clock(&block, &library));
    for n in [5, 50] {
        let duration = t_prep + n as f64 * t_block;
        table.push(vec![
            format!("2x{n}_gate_model"),
            num(e.combined()),
            (2 * n).to_string(),
            num(duration),
            num(generation_rate(&e, 2 * n, duration)?),
        ]);
    }

    for name in presets.names() {
        let p = presets.system(name)?;
        let (Some(qe), Some(dwf), Some(ce)) = (p.eta_qe, p.eta_dwf, p.eta_ce) else {
            continue;
        };
        let e = EfficiencyBudget {
            eta_qe: qe.nominal(),
            eta_dwf: dwf.nominal(),
            eta_ce: ce.nominal(),
            eta_de: 1.0,
        };
        table.push(vec![
            format!("{name}_2x5_3us"),
            num(e.combined()),
            "10".into(),
            num(3e-6),
            num(generation_rate(&e, 10, 3e-6)?),
        ]);
    }
    Ok(table)
}
