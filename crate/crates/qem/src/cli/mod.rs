//! Command-line front end: seeded experiments writing CSV/PGM files and a
//! manifest per run.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::classical_baselines::{self as cb, BaselineConfig};
use crate::error::{Error, Result};
use crate::fft::C64;
use crate::imaging::{self, AtomList, ElementTable, Figure3Config, NoiseModel, PhaseMapOptions, PixelImage};
use crate::inelastic_sim::{self, EnvelopeOptions};
use crate::isn_analysis::{self, solve_xi};
use crate::physics;
use crate::qsim::{self, PhaseMap, ProtocolOptions};
use crate::{fmt9, rng};

mod config;

pub use config::{describe_keys, parse_config_text, profile_names, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "qem", version, about = "Quantum electron microscopy simulations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Named parameter set.
    #[arg(long, global = true, default_value = "standard")]
    profile: String,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "qem-out")]
    out: PathBuf,
    /// Flat key = value file applied before --set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key (repeatable), e.g. --set E_K=200000.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Physical and numerical constants next to their reference values.
    Constants {
        #[arg(long)]
        json: bool,
    },
    /// Optimal repetition number and dose budget versus β.
    Fig2,
    /// Six simulated images: noise-free, classical and four quantum cases.
    Fig3(Fig3Args),
    /// Measurement rounds on an alternating specimen plus the inelastic sweep.
    Protocol,
    /// Variance table of the conventional reference schemes.
    Baselines,
    /// Analytic μ(β).
    MuCurve,
    /// List configuration keys with their defaults.
    Keys,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Fig3Args {
    /// Atom file: `element x y z [residue]` in nm, or PDB (.pdb/.ent).
    #[arg(long)]
    atoms: Option<PathBuf>,
    /// Phase map as CSV rows (pixel size from the `pixel` key).
    #[arg(long)]
    map: Option<PathBuf>,
    /// Random ellipsoidal specimen of about 3 x 2 x 1.5 nm.
    #[arg(long)]
    synthetic: bool,
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn build_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(&g.profile, g.seed, g.out.clone())?;
    if let Some(p) = &g.config {
        cfg.apply_text(&std::fs::read_to_string(p)?)?;
    }
    for s in &g.set {
        cfg.set_pair(s)?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli.global)?;
    let mut out = Output::new(&cfg.output_dir);
    let name = match &cli.command {
        Command::Constants { json } => {
            cmd_constants(&cfg, *json, &mut out)?;
            "constants"
        }
        Command::Fig2 => {
            cmd_fig2(&cfg, &mut out)?;
            "fig2"
        }
        Command::Fig3(a) => {
            cmd_fig3(&cfg, a, &mut out)?;
            "fig3"
        }
        Command::Protocol => {
            cmd_protocol(&cfg, &mut out)?;
            "protocol"
        }
        Command::Baselines => {
            cmd_baselines(&cfg, &mut out)?;
            "baselines"
        }
        Command::MuCurve => {
            cmd_mu_curve(&cfg, &mut out)?;
            "mu-curve"
        }
        Command::Keys => {
            print!("{}", describe_keys());
            return Ok(());
        }
    };
    out.manifest(name, &cfg)?;
    eprintln!("wrote {} files to {}", out.files.len() + 1, cfg.output_dir.display());
    Ok(())
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new() }
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn manifest(&mut self, command: &str, cfg: &RunConfig) -> Result<()> {
        let m = serde_json::json!({
            "command": command,
            "profile": cfg.profile,
            "seed": cfg.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": cfg.hash(),
            "config": cfg.values(),
            "outputs": self.files,
        });
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Numeric(e.to_string()))?;
        std::fs::create_dir_all(&self.dir)?;
        std::fs::write(self.dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

/// (name, value, reference, unit)
pub fn constants_table(cfg: &RunConfig) -> Result<Vec<(&'static str, f64, f64, &'static str)>> {
    let beam = cfg.beam()?;
    let dose = cfg.dose()?;
    let (beta_opt, zeta) = physics::solve_zeta();
    let xs = solve_xi();
    Ok(vec![
        ("wavelength", beam.wavelength_nm * 1e3, 1.97, "pm"),
        ("lorentz_gamma", beam.gamma, 1.587, ""),
        ("theta_E", physics::theta_e(&beam) * 1e6, 41.0, "urad"),
        ("theta_c", physics::bethe_ridge_angle(&beam) * 1e3, 7.2, "mrad"),
        ("beta_opt", beta_opt, 1.26, ""),
        ("zeta", zeta, 0.064, ""),
        ("xi", xs.xi, 0.86, "rad"),
        ("cos_xi", xs.cos_xi, 0.65, ""),
        ("xi_squared", xs.xi_sq, 0.74, ""),
        ("inv_cos2_xi", 1.0 / (xs.cos_xi * xs.cos_xi), 2.35, ""),
        ("N_sq_sigma_1nm", physics::dose_budget_nsq(1.0, &dose)?, 2.3e3, ""),
        ("classical_noise_1mrad", isn_analysis::classical_noise(1e-3, &beam, &dose), 1.0 / 186.0, "rad"),
    ])
}

fn cmd_constants(cfg: &RunConfig, json: bool, out: &mut Output) -> Result<()> {
    let rows = constants_table(cfg)?;
    let mut csv = String::from("name,value,reference,unit\n");
    let mut obj = serde_json::Map::new();
    for (n, v, r, u) in &rows {
        let _ = writeln!(csv, "{n},{},{},{u}", fmt9(*v), fmt9(*r));
        obj.insert(n.to_string(), serde_json::json!({"value": v, "reference": r, "unit": u}));
    }
    let doc = serde_json::json!({"config": cfg.to_json(), "constants": obj});
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Numeric(e.to_string()))? + "\n";
    if json {
        print!("{text}");
    } else {
        println!("{:<24} {:>16} {:>12}  unit", "name", "value", "reference");
        for (n, v, r, u) in &rows {
            println!("{n:<24} {:>16} {:>12}  {u}", fmt9(*v), fmt9(*r));
        }
    }
    out.write("constants.csv", csv)?;
    out.write("constants.json", text)
}

fn cmd_fig2(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let table = isn_analysis::figure2_curves(
        &isn_analysis::default_figure2_grid(),
        &cfg.list("lambda_over_t"),
        &cfg.beam()?,
        &cfg.dose()?,
    )?;
    out.write("figure2_curves.csv", table.to_csv())
}

fn cmd_fig3(cfg: &RunConfig, a: &Fig3Args, out: &mut Output) -> Result<()> {
    let beam = cfg.beam()?;
    let grid = cfg.image_grid()?;
    let opts = PhaseMapOptions { blur_nm: cfg.num("blur"), water: cfg.flag("water"), ..Default::default() };
    let table = ElementTable::default();
    let map = if let Some(p) = &a.map {
        let m = PixelImage::from_csv(&std::fs::read_to_string(p)?, cfg.num("pixel"))?;
        if m.grid != grid {
            eprintln!("note: map is {}x{}, ignoring the grid key", m.grid.rows, m.grid.cols);
        }
        m
    } else {
        let atoms = match &a.atoms {
            Some(p) => AtomList::load(p)?,
            None => imaging::synthetic_specimen([1.5, 1.0, 0.75], cfg.seed)?,
        };
        imaging::phase_map_from_atoms(&atoms, &table, grid, &beam, &opts)?
    };
    let model = NoiseModel::for_grid(beam, cfg.dose()?, map.grid)?;
    let fcfg = Figure3Config {
        beta_l: cfg.num("beta_L") * 1e-3,
        beta_h: cfg.num("beta_H") * 1e-3,
        k1_high: cfg.num("k1_high"),
        k1_low: cfg.num("k1_low"),
        ..Default::default()
    };
    let panels = imaging::render_figure3(&map, &model, &fcfg, cfg.seed)?;
    out.write("phase_map.csv", map.to_csv())?;
    out.write("phase_map_spectrum.csv", imaging::radial_power_spectrum(&map).to_csv())?;
    for p in &panels {
        let stem = format!("fig3_{}_{}", p.label, p.name);
        out.write(&format!("{stem}.pgm"), p.pgm())?;
        out.write(&format!("{stem}.csv"), p.cropped.to_csv())?;
    }
    Ok(())
}

/// Up/down outcome counts of `rounds` rounds on `map`, one stream per round.
fn count_rounds(map: &PhaseMap, k: usize, rounds: usize, seed: u64, log: bool) -> Result<(Vec<bool>, f64, String)> {
    let opts = ProtocolOptions::default();
    let res = (0..rounds)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, r as u64);
            let (q1, outcomes) = qsim::run_round(map, k, C64::new(0.0, 0.0), &opts, r, &mut g)?;
            let up = qsim::measure_q1_updown(&q1, &mut g);
            let log = if log { qsim::outcomes_csv(&outcomes) } else { String::new() };
            Ok((up, q1.p_up(), log))
        })
        .collect::<Result<Vec<_>>>()?;
    let p_exact = res.first().map(|r| r.1).unwrap_or(0.5);
    let mut text = String::new();
    for (i, r) in res.iter().enumerate() {
        // keep one header
        let body = if i == 0 { r.2.as_str() } else { r.2.split_once('\n').map(|x| x.1).unwrap_or("") };
        text.push_str(body);
    }
    Ok((res.iter().map(|r| r.0).collect(), p_exact, text))
}

fn cmd_protocol(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let m = cfg.int("M");
    let pitch = cfg.num("sigma");
    let tb = cfg.num("theta_bar");
    let k = cfg.int("k");
    let rounds = cfg.int("rounds");
    if rounds == 0 {
        return Err(Error::Config("rounds must be positive".into()));
    }
    let log = cfg.flag("electron_log");
    let specimen = PhaseMap::from_fn(m, pitch, |n, _| if n.rem_euclid(2) == 0 { tb } else { -tb })?;
    let control = PhaseMap::zero(m, pitch)?;

    let mut summary =
        String::from("case,theta_bar,k,rounds,p_up_hat,p_up_statevector,p_up_closed_form,sin_k_delta_hat,std_err,z\n");
    let mut round_log = String::from("case,round,up\n");
    for (case, map, theta, seed) in
        [("specimen", &specimen, tb, cfg.seed), ("control", &control, 0.0, cfg.seed ^ 0x5a5a)]
    {
        let (ups, p_sv, elog) = count_rounds(map, k, rounds, seed, log)?;
        let n_up = ups.iter().filter(|&&u| u).count() as f64;
        let p_hat = n_up / rounds as f64;
        // δ is the odd-minus-even column phase difference, −2θ̄
        let (p_cf, _) = cb::eeem_probabilities(k as u32, -2.0 * theta);
        let se = (p_cf * (1.0 - p_cf) / rounds as f64).sqrt();
        let z = if se > 0.0 { (p_hat - p_cf) / se } else { 0.0 };
        let _ = writeln!(
            summary,
            "{case},{},{k},{rounds},{},{},{},{},{},{}",
            fmt9(theta),
            fmt9(p_hat),
            fmt9(p_sv),
            fmt9(p_cf),
            fmt9(2.0 * p_hat - 1.0),
            fmt9(se),
            fmt9(z)
        );
        for (i, u) in ups.iter().enumerate() {
            let _ = writeln!(round_log, "{case},{i},{}", *u as u8);
        }
        if log {
            out.write(&format!("outcomes_{case}.csv"), elog)?;
        }
        println!("{case}: p_up = {} (expected {}, z = {})", fmt9(p_hat), fmt9(p_cf), fmt9(z));
    }
    out.write("protocol_summary.csv", summary)?;
    out.write("protocol_rounds.csv", round_log)?;

    let trials = cfg.int("isn_trials");
    if trials > 0 {
        let beam = cfg.beam()?;
        let spacing = cfg.num("isn_spacing") * 1e-3;
        let rows = cfg
            .list("isn_betas")
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let beta = b * 1e-3;
                let m = inelastic_sim::isn_grid_size(beta, spacing);
                inelastic_sim::mu_comparison(
                    beta,
                    m,
                    trials,
                    cfg.seed.wrapping_add(1000 + i as u64),
                    &beam,
                    &ProtocolOptions::default(),
                    EnvelopeOptions::default(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        out.write("isn_sweep.csv", inelastic_sim::mu_comparison_csv(&rows))?;
    }
    Ok(())
}

fn cmd_baselines(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let n = cfg.num("N");
    if !(n >= 1.0) || n > u64::MAX as f64 {
        return Err(Error::Config("N must be a positive electron count".into()));
    }
    let bc = BaselineConfig {
        electrons: n.round() as u64,
        alpha: cfg.num("alpha"),
        theta: cfg.num("theta"),
        n_pixels: cfg.int("n_pixels") as u64,
        trials: cfg.int("trials"),
    };
    let rows = cb::baseline_suite(&bc, cfg.seed)?;
    out.write("baselines.csv", cb::variance_csv(&rows))?;
    let mut s = String::from("quantity,value\n");
    if let Some(spread) = cb::equivalence_spread(&rows) {
        let _ = writeln!(s, "equivalence_max_ratio,{}", fmt9(spread));
    }
    let two = cb::MeasurementScheme::new(cb::SchemeKind::DiscreteNPixel, bc.electrons, 2)?;
    let _ = writeln!(s, "discrete_n2_variance,{}", fmt9(cb::variance_analytic(&two, bc.alpha)?));
    let _ = writeln!(s, "one_over_4N,{}", fmt9(0.25 / bc.electrons as f64));
    out.write("baseline_summary.csv", s)
}

fn cmd_mu_curve(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let beam = cfg.beam()?;
    let pts = cfg.int("mu_points");
    let bmax = cfg.num("mu_beta_max") * 1e-3;
    if pts == 0 || !(bmax > 0.0) {
        return Err(Error::Config("mu curve needs points and a positive range".into()));
    }
    let xs = solve_xi();
    let rows = (1..=pts)
        .into_par_iter()
        .map(|i| {
            let beta = bmax * i as f64 / pts as f64;
            isn_analysis::mu_of_beta(beta, &beam).map(|mu| (beta, mu))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s = String::from("beta_mrad,mu,k2_over_k1\n");
    for (b, mu) in rows {
        let _ = writeln!(s, "{},{},{}", fmt9(b * 1e3), fmt9(mu), fmt9(xs.xi_sq / (4.0 * mu * mu)));
    }
    out.write("mu_curve.csv", s)
}
