//! Batch experiment runner.
//!
//! An experiment is a `key = value` file naming a command, a model file, a
//! constants file, seeds and the numerical knobs. Every run writes
//! `manifest.conf` to the output directory; the manifest is itself an
//! experiment file and replays the run.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::acceptance;
use crate::attractor::absorb::{absorbing_radius, AbsorbOptions};
use crate::attractor::calibrate::{calibrate, collect_training, initial_state, validate, Calibration, SampleSpec};
use crate::attractor::ergodic::{birkhoff_check, ensemble_average, time_average};
use crate::attractor::gap::{check_gap_condition, check_gap_condition_beta};
use crate::attractor::pullback::{pullback_estimate, write_report_csv};
use crate::attractor::{apriori_bound, check_solution_bound, BoundConstants, ConstantInputs};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::greedy::{control_w_idx, count_idx};
use crate::gronwall::{singular_gronwall, BoundCurve};
use crate::roughpath::NoiseSpec;
use crate::solver::write_trajectory_csv;
use crate::specfun::{certify_ml_bound, ml_derivative, mittag_leffler, write_certificates_csv};
use crate::spectral::{ModelConfig, SpectralModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

pub const SEED_OFFSET_VAR: &str = "RPDE_LAB_SEED_OFFSET";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample and lift fBm paths; write the paths and their Hölder seminorms.
    Lift,
    /// Greedy counts and controls on unit windows.
    Greedy,
    /// Mittag-Leffler bound certificates.
    SpecfunCert,
    /// Singular Gronwall bound curve for constant forcing.
    Gronwall,
    /// Solve the equation for each seed.
    Solve,
    /// Calibrate and check the short-time and a-priori bounds.
    Bounds,
    /// Noise moments and the gap condition.
    Ergodic,
    /// Absorbing radius per seed.
    Absorb,
    /// Pullback cloud convergence per seed.
    Pullback,
    /// Run the acceptance suite.
    Accept,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Lift => "lift",
            Command::Greedy => "greedy",
            Command::SpecfunCert => "specfun-cert",
            Command::Gronwall => "gronwall",
            Command::Solve => "solve",
            Command::Bounds => "bounds",
            Command::Ergodic => "ergodic",
            Command::Absorb => "absorb",
            Command::Pullback => "pullback",
            Command::Accept => "accept",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        use Command::*;
        [Lift, Greedy, SpecfunCert, Gronwall, Solve, Bounds, Ergodic, Absorb, Pullback, Accept]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command '{s}'")))
    }
}

#[derive(Debug, Parser)]
#[command(name = "rpde-lab", version, about = "Rough PDE attractor laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds, e.g. `1,2,3` or `0..100`; overrides the file.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Output directory; overrides the file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
}

/// Parses `1,2,3`, `0..100` or mixtures such as `0..3, 7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| Error::Config(format!("bad seed range '{part}'")))?;
            let b: u64 = b.trim().parse().map_err(|_| Error::Config(format!("bad seed range '{part}'")))?;
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| Error::Config(format!("bad seed '{part}'")))?);
        }
    }
    Ok(out)
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub command: Command,
    /// Replayable keys (paths absolute, no `manifest.` keys).
    pub kv: KvConfig,
    pub model: Option<SpectralModel<f64>>,
    pub constants: Option<ConstantInputs<f64>>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub verbose: bool,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Experiment {
    /// Builds an experiment from a parsed file whose relative paths are
    /// taken against `base`.
    pub fn from_kv(mut kv: KvConfig, base: &Path, cmd: Option<Command>, seeds: Option<&str>, out: Option<&Path>) -> Result<Self> {
        let file_cmd = kv.get_str("command").map(Command::parse).transpose()?;
        let command = match (cmd, file_cmd) {
            (Some(c), Some(f)) if c != f => {
                return Err(Error::Config(format!("command {} does not match the file's {}", c.name(), f.name())))
            }
            (Some(c), _) | (None, Some(c)) => c,
            (None, None) => return Err(Error::Config("no command given".into())),
        };
        kv.set("command", command.name());
        let expected = kv.get_str("manifest.config_sha256").map(str::to_string);
        let stale: Vec<String> = kv.keys().filter(|k| k.starts_with("manifest.")).map(str::to_string).collect();
        let mut clean = KvConfig::default();
        for k in kv.keys().filter(|k| !stale.contains(&k.to_string())) {
            clean.set(k, kv.get_str(k).unwrap_or_default());
        }
        let mut kv = clean;
        for key in ["model", "constants"] {
            if let Some(p) = kv.get_str(key) {
                let path = resolve(base, p);
                if !path.is_file() {
                    return Err(Error::Config(format!("{key} file {} does not exist", path.display())));
                }
                let abs = fs::canonicalize(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                kv.set(key, abs.display());
            }
        }
        if let Some(s) = seeds {
            kv.set("seeds", s);
        }
        if let Some(o) = out {
            kv.set("out", o.display());
        }
        let mut seed_list = parse_seeds(kv.get_str("seeds").unwrap_or(""))?;
        if seed_list.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        // the offset is frozen into the file so that a replay does not apply it twice
        let offset: u64 = match kv.get("seed_offset")? {
            Some(o) => o,
            None => match std::env::var(SEED_OFFSET_VAR) {
                Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("{SEED_OFFSET_VAR} = '{v}' is not an integer")))?,
                Err(_) => 0,
            },
        };
        kv.set("seed_offset", offset);
        for s in &mut seed_list {
            *s += offset;
        }
        let model = match kv.get_str("model") {
            Some(p) => Some(SpectralModel::new(ModelConfig::from_kv(&KvConfig::load(Path::new(p))?)?)?),
            None => None,
        };
        let constants = match kv.get_str("constants") {
            Some(p) => {
                let ckv = KvConfig::load(Path::new(p))?;
                let inp = ConstantInputs::from_kv(&ckv)?;
                if let Some(m) = &model {
                    BoundConstants::from_kv(m, &ckv)?;
                }
                Some(inp)
            }
            None => None,
        };
        let out = PathBuf::from(kv.get_str("out").unwrap_or("out"));
        kv.set("out", out.display());
        let exp = Self { command, kv, model, constants, seeds: seed_list, out, verbose: false };
        if let Some(h) = expected {
            let now = exp.config_hash()?;
            if h != now {
                return Err(Error::Config(format!("manifest hash {h} does not match the inputs ({now})")));
            }
        }
        Ok(exp)
    }

    pub fn load(path: &Path, cmd: Option<Command>, seeds: Option<&str>, out: Option<&Path>) -> Result<Self> {
        let kv = KvConfig::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_kv(kv, &base, cmd, seeds, out)
    }

    /// SHA-256 over the replay keys (without `out`) and the referenced files.
    pub fn config_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        let mut kv = self.kv.clone();
        kv.set("out", "");
        h.update(kv.render().as_bytes());
        for key in ["model", "constants"] {
            if let Some(p) = self.kv.get_str(key) {
                h.update(fs::read(p)?);
            }
        }
        Ok(hex(&h.finalize()))
    }

    pub(crate) fn get<V: std::str::FromStr>(&self, key: &str, default: V) -> Result<V> {
        self.kv.get_or(key, default)
    }

    pub(crate) fn model(&self) -> Result<&SpectralModel<f64>> {
        self.model.as_ref().ok_or_else(|| Error::Config(format!("{} needs a model file", self.command.name())))
    }

    pub(crate) fn inputs(&self) -> Result<ConstantInputs<f64>> {
        self.constants.ok_or_else(|| Error::Config(format!("{} needs a constants file", self.command.name())))
    }

    pub(crate) fn gamma(&self) -> Result<f64> {
        match self.constants {
            Some(c) => Ok(c.gamma),
            None => self.kv.require("gamma"),
        }
    }

    pub(crate) fn noise(&self) -> Result<NoiseSpec> {
        Ok(NoiseSpec {
            hurst: self.get("hurst", 0.5)?,
            gamma: self.gamma()?,
            scale: self.get("noise_scale", 0.1)?,
            steps_per_unit: self.get("steps_per_unit", 64)?,
        })
    }

    pub(crate) fn sample_spec(&self, units: usize) -> Result<SampleSpec<f64>> {
        Ok(SampleSpec { noise: self.noise()?, units, substeps: self.get("substeps", 2)?, y0_scale: self.get("y0_scale", 1.0)? })
    }

    pub(crate) fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[{}] {}", self.command.name(), msg.as_ref());
        }
    }
}

/// Files written by a run, in order.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<String>,
    pub failed: bool,
}

struct Ctx<'a> {
    exp: &'a Experiment,
    out: Outputs,
}

impl Ctx<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.out.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.exp.out.join(name))?))
    }

    /// Calibrated or file constants, written out as `constants.{csv,conf}`.
    fn constants(&mut self) -> Result<BoundConstants<f64>> {
        let (k, cal) = constants_for(self.exp)?;
        if let Some(cal) = cal {
            let mut w = self.create("calibration.csv")?;
            writeln!(w, "m_tilde,m_big,ln_c")?;
            for c in &cal.candidates {
                writeln!(w, "{},{},{}", c.m_tilde, c.m_big, c.ln_c)?;
            }
        }
        k.write_csv(self.create("constants.csv")?)?;
        let mut w = self.create("constants.conf")?;
        w.write_all(k.to_kv().render().as_bytes())?;
        Ok(k)
    }
}

/// The experiment's constants: calibrated on `training_seeds` when
/// `calibrate = true`, else derived from the constants file.
pub fn constants_for(exp: &Experiment) -> Result<(BoundConstants<f64>, Option<Calibration<f64>>)> {
    let model = exp.model()?;
    let inp = exp.inputs()?;
    if !exp.get("calibrate", false)? {
        return Ok((BoundConstants::derive(model, &inp)?, None));
    }
    let seeds = parse_seeds(exp.kv.get_str("training_seeds").unwrap_or("0..100"))?;
    let spec = exp.sample_spec(exp.get("training_units", 2)?)?;
    exp.log(format!("calibrating on {} training seeds", seeds.len()));
    let data = collect_training(model, &inp, &spec, &seeds)?;
    let cands: Vec<f64> = exp.kv.get_list("m_tilde_candidates")?.unwrap_or_else(|| vec![1e-4, 1e-3, 1e-2]);
    let cal = calibrate(model, &inp, &data, &cands, exp.get("calibration_margin", 1.1)?)?;
    Ok((cal.constants.clone(), Some(cal)))
}

fn run_lift(c: &mut Ctx) -> Result<()> {
    let exp = c.exp;
    let noise = exp.noise()?;
    let horizon: usize = exp.get("horizon", 4)?;
    let spu = noise.steps_per_unit;
    let paths = exp
        .seeds
        .par_iter()
        .map(|&s| noise.sample(0.0f64, horizon, s))
        .collect::<Result<Vec<_>>>()?;
    let mut h = c.create("holder.csv")?;
    writeln!(h, "seed,s,t,seminorm_x,seminorm_xx,rho")?;
    for (&s, rp) in exp.seeds.iter().zip(&paths) {
        rp.write_csv(c.create(&format!("lift_seed{s}.csv"))?)?;
        for l in 0..horizon {
            let r = rp.holder_report_idx(l * spu, (l + 1) * spu);
            writeln!(h, "{s},{},{},{},{},{}", r.interval.0, r.interval.1, r.seminorm_x, r.seminorm_xx, r.rho)?;
        }
    }
    Ok(())
}

fn run_greedy(c: &mut Ctx) -> Result<()> {
    let exp = c.exp;
    let inp = exp.inputs()?;
    let noise = exp.noise()?;
    let horizon: usize = exp.get("horizon", 4)?;
    let spu = noise.steps_per_unit;
    let rows = exp
        .seeds
        .par_iter()
        .map(|&s| {
            let rp = noise.sample(0.0f64, horizon, s)?;
            (0..horizon)
                .map(|l| {
                    let (a, b) = (l * spu, (l + 1) * spu);
                    let n = count_idx(&rp, inp.eta, inp.chi, a, b)?;
                    let w = control_w_idx(&rp, inp.eta, a, b)?;
                    Ok(format!("{s},{},{},{n},{w},{},{}", rp.time(a), rp.time(b), inp.chi, inp.eta))
                })
                .collect::<Result<Vec<String>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = c.create("greedy.csv")?;
    writeln!(w, "seed,s,t,N,W,chi,eta")?;
    for r in rows.iter().flatten() {
        writeln!(w, "{r}")?;
    }
    Ok(())
}

fn run_specfun(c: &mut Ctx) -> Result<()> {
    let exp = c.exp;
    let inp = exp.constants;
    let (z_min, z_max) = inp.map_or((2.0, 50.0), |i| (i.z_min, i.z_max));
    let mut betas: Vec<f64> = exp.kv.get_list("betas")?.unwrap_or_else(|| vec![0.25, 0.5, 0.75, 1.0]);
    if let Some(m) = &exp.model {
        betas.push(1.0 - m.config().sigma_f);
    }
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let certs = betas.iter().map(|&b| certify_ml_bound(b, z_min, z_max)).collect::<Result<Vec<_>>>()?;
    write_certificates_csv(c.create("certificates.csv")?, &certs)?;
    let mut w = c.create("mittag_leffler.csv")?;
    writeln!(w, "beta,z,e_beta_1,e_prime")?;
    for &b in &betas {
        for i in 1..=100 {
            let z = i as f64 * 0.1;
            writeln!(w, "{b},{z},{},{}", mittag_leffler(b, 1.0, z)?, ml_derivative(b, z)?)?;
        }
    }
    Ok(())
}

fn run_gronwall(c: &mut Ctx) -> Result<()> {
    let exp = c.exp;
    let beta: f64 = exp.get("gronwall_beta", 0.5)?;
    let m: f64 = exp.get("gronwall_m", 1.0)?;
    let h: f64 = exp.get("gronwall_h", 1.0)?;
    let t_end: f64 = exp.get("horizon", 2.0)?;
    let n: usize = exp.get("gronwall_steps", 400)?;
    let curve = BoundCurve::sample(t_end, n, |_| h)?;
    singular_gronwall(&curve, m, beta)?.write_csv(c.create("gronwall.csv")?)
}

fn run_solve(c: &mut Ctx) -> Result<()> {
    let exp = c.exp;
    let model = exp.model()?;
    let spec = exp.sample_spec(exp.get("horizon", 4)?)?;
    let paths = exp.seeds.par_iter().map(|&s| spec.run(model, s).map(|r| r.1)).collect::<Result<Vec<_>>>()?;
    for (&s, p) in exp.seeds.iter().zip(&paths) {
        write_trajectory_csv(c.create(&format!("trajectory_seed{s}.csv"))?, model, p)?;
    }
    Ok(())
}

fn run_bounds(c: &mut Ctx) -> Result<()> {
    let k = c.constants()?;
    let exp = c.exp;
    let model = exp.model()?;
    let spec = exp.sample_spec(exp.get("horizon", 3)?)?;
    let times: Vec<f64> = exp.kv.get_list("apriori_times")?.unwrap_or_else(|| vec![1.0, 2.0, 3.0]);
    let spu = spec.noise.steps_per_unit;
    let rows = exp
        .seeds
        .par_iter()
        .map(|&s| {
            let (rp, path) = spec.run(model, s)?;
            let mut out = Vec::new();
            for l in 0..spec.units {
                let b = check_solution_bound(model, &path, &rp, &k, l * spu, (l + 1) * spu)?;
                out.push(format!("solution,{s},{},{},{},{}", l + 1, b.lhs, b.rhs, b.pass));
            }
            for &t in &times {
                let b = apriori_bound(model, &path, &rp, &k, rp.index_of(t)?)?;
                out.push(format!("apriori,{s},{t},{},{},{}", b.lhs, b.rhs, b.pass));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = c.create("bounds.csv")?;
    writeln!(w, "kind,seed,t,lhs,rhs,pass")?;
    for r in rows.iter().flatten() {
        writeln!(w, "{r}")?;
    }
    let v = validate(model, &k, &spec, &exp.seeds, &times)?;
    exp.log(format!("{} solution / {} a-priori violations", v.sol_violations, v.apriori_violations));
    Ok(())
}

fn run_ergodic(c: &mut Ctx) -> Result<()> {
    let k = c.constants()?;
    let exp = c.exp;
    let model = exp.model()?;
    let noise = exp.noise()?;
    let q: f64 = exp.get("q", k.q_moment)?;
    let windows: usize = exp.get("ergodic_windows", 1000)?;
    let long = noise.sample(0.0f64, windows, exp.seeds[0])?;
    let time = time_average(&long, noise.steps_per_unit, q)?;
    let samples = exp.seeds.par_iter().map(|&s| noise.sample(0.0f64, 1, s)).collect::<Result<Vec<_>>>()?;
    let ens = ensemble_average(&samples, noise.steps_per_unit, q)?;
    let b = birkhoff_check(time, ens, 3.0);
    let mut w = c.create("ergodic.csv")?;
    writeln!(w, "estimator,q,n_samples,k_q,kk_q,k_bold,std_err")?;
    for (name, r) in [("time", time), ("ensemble", ens)] {
        writeln!(w, "{name},{},{},{},{},{},{}", r.q, r.n_samples, r.k_q, r.kk_q, r.k_bold, r.std_err)?;
    }
    let mut g = c.create("gap.csv")?;
    writeln!(g, "variant,lhs,rhs,margin,pass")?;
    let gap = check_gap_condition(&k, &time);
    writeln!(g, "base,{},{},{},{}", gap.lhs, gap.rhs, gap.margin(), gap.pass)?;
    if let Some(beta) = exp.kv.get::<f64>("beta")? {
        let gb = check_gap_condition_beta(model, &k, &time, beta)?;
        writeln!(g, "beta={beta},{},{},{},{}", gb.lhs, gb.rhs, gb.margin(), gb.pass)?;
    }
    exp.log(format!("birkhoff z-score {} (agree = {})", b.z_score, b.agree));
    Ok(())
}

fn absorb_opts(exp: &Experiment) -> Result<AbsorbOptions> {
    Ok(AbsorbOptions { truncation_k: exp.get("truncation_k", 40)?, eps_points: exp.get("eps_points", 11)? })
}

fn run_absorb(c: &mut Ctx) -> Result<()> {
    let k = c.constants()?;
    let exp = c.exp;
    let noise = exp.noise()?;
    let opts = absorb_opts(exp)?;
    let units = opts.truncation_k + 2;
    let origin = (opts.truncation_k + 1) * noise.steps_per_unit;
    let reps = exp
        .seeds
        .par_iter()
        .map(|&s| {
            let rp = noise.sample(-((opts.truncation_k + 1) as f64), units, s)?;
            absorbing_radius(&rp, &k, origin, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = c.create("absorb.csv")?;
    writeln!(w, "seed,radius,r_omega,p1,p2,tail_bound,decay_ratio,eps_star")?;
    let mut t = c.create("absorb_terms.csv")?;
    writeln!(t, "seed,k,term")?;
    for (&s, r) in exp.seeds.iter().zip(&reps) {
        writeln!(w, "{s},{},{},{},{},{},{},{}", r.radius, r.r_omega, r.p1_val, r.p2_val, r.tail_bound, r.decay_ratio, r.eps_star)?;
        for (i, v) in r.series_terms.iter().enumerate() {
            writeln!(t, "{s},{},{v}", i + 1)?;
        }
    }
    Ok(())
}

/// The shared initial cloud: `cloud_size` seeded states of scale `cloud_scale`.
pub fn initial_cloud(n_modes: usize, size: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..size).map(|i| initial_state(n_modes, scale, 1_000_000 + i as u64)).collect()
}

fn run_pullback(c: &mut Ctx) -> Result<()> {
    let k = c.constants()?;
    let exp = c.exp;
    let model = exp.model()?;
    let noise = exp.noise()?;
    let opts = absorb_opts(exp)?;
    let t_list: Vec<usize> = exp.kv.get_list("t_list")?.unwrap_or_else(|| vec![2, 4, 8, 16]);
    let cloud = initial_cloud(model.n_modes(), exp.get("cloud_size", 8)?, exp.get("cloud_scale", 5.0)?);
    let substeps: usize = exp.get("substeps", 2)?;
    let back = (*t_list.iter().max().unwrap_or(&1)).max(opts.truncation_k + 1);
    let spu = noise.steps_per_unit;
    let runs = exp
        .seeds
        .par_iter()
        .map(|&s| {
            let rp = noise.sample(-(back as f64), back + 1, s)?;
            let ball = match absorbing_radius(&rp, &k, back * spu, opts) {
                Ok(r) => Some((r.radius, r.delta_bar)),
                Err(e) if e.is_numerical() => None,
                Err(e) => return Err(e),
            };
            pullback_estimate(model, &rp, back * spu, &t_list, &cloud, substeps, ball, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    write_report_csv(c.create("pullback.csv")?, &rows)?;
    let diags: Vec<&String> = runs.iter().flat_map(|r| r.diagnostics.iter()).collect();
    if !diags.is_empty() {
        let mut w = c.create("pullback_diagnostics.txt")?;
        for d in diags {
            writeln!(w, "{d}")?;
        }
    }
    Ok(())
}

fn run_accept(c: &mut Ctx) -> Result<()> {
    let exp = c.exp;
    let wanted: Option<Vec<u8>> = exp.kv.get_list("criteria")?;
    let work = exp.out.join("work");
    let results = acceptance::run_all(&work, wanted.as_deref());
    let mut w = c.create("acceptance.csv")?;
    writeln!(w, "criterion,pass,detail")?;
    for r in &results {
        println!("{r}");
        writeln!(w, "{},{},\"{}\"", r.id, r.pass, r.detail.replace('"', "'"))?;
    }
    c.out.failed = results.iter().any(|r| !r.pass);
    Ok(())
}

/// Runs an experiment and writes its manifest.
pub fn run(exp: &Experiment) -> Result<Outputs> {
    let start = Instant::now();
    fs::create_dir_all(&exp.out)?;
    let mut c = Ctx { exp, out: Outputs::default() };
    match exp.command {
        Command::Lift => run_lift(&mut c),
        Command::Greedy => run_greedy(&mut c),
        Command::SpecfunCert => run_specfun(&mut c),
        Command::Gronwall => run_gronwall(&mut c),
        Command::Solve => run_solve(&mut c),
        Command::Bounds => run_bounds(&mut c),
        Command::Ergodic => run_ergodic(&mut c),
        Command::Absorb => run_absorb(&mut c),
        Command::Pullback => run_pullback(&mut c),
        Command::Accept => run_accept(&mut c),
    }?;
    let mut m = exp.kv.clone();
    m.set("manifest.config_sha256", exp.config_hash()?);
    m.set("manifest.version", env!("CARGO_PKG_VERSION"));
    m.set("manifest.wall_time_s", format!("{:.3}", start.elapsed().as_secs_f64()));
    m.set("manifest.outputs", c.out.files.join(", "));
    let mut w = File::create(exp.out.join("manifest.conf"))?;
    writeln!(w, "# replay with: rpde-lab {} --config <this file>", exp.command.name())?;
    w.write_all(m.render().as_bytes())?;
    Ok(c.out)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::Domain(_) => "domain",
        Error::Range(_) => "range",
        Error::Config(_) => "config",
        Error::InvalidRegularity(_) => "invalid_regularity",
        Error::GridTooCoarse { .. } => "grid_too_coarse",
        Error::BlowUp { .. } => "blow_up",
        Error::NonConvergence(_) => "non_convergence",
        Error::Io(_) => "io",
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let exp = match &cli.config {
        Some(p) => Experiment::load(p, Some(cli.command), cli.seeds.as_deref(), cli.out.as_deref()),
        None => {
            let mut kv = KvConfig::default();
            kv.set("command", cli.command.name());
            kv.set("seeds", "0");
            Experiment::from_kv(kv, Path::new("."), Some(cli.command), cli.seeds.as_deref(), cli.out.as_deref())
        }
    };
    let mut exp = match exp {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error kind={} reason=\"{e}\"", kind(&e));
            return EXIT_CONFIG;
        }
    };
    exp.verbose = cli.verbose;
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error kind=config reason=\"cannot start {} workers: {e}\"", cli.jobs.unwrap_or(0));
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| run(&exp)) {
        Ok(o) if o.failed => EXIT_ACCEPTANCE,
        Ok(o) => {
            exp.log(format!("wrote {} files to {}", o.files.len(), exp.out.display()));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error kind={} reason=\"{e}\"", kind(&e));
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1,2, 3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("0..3, 7").unwrap(), vec![0, 1, 2, 7]);
        assert!(parse_seeds("").unwrap().is_empty());
        assert!(matches!(parse_seeds("a"), Err(Error::Config(_))));
    }

    #[test]
    fn command_names_round_trip() {
        for c in ["lift", "greedy", "specfun-cert", "gronwall", "solve", "bounds", "ergodic", "absorb", "pullback", "accept"] {
            assert_eq!(Command::parse(c).unwrap().name(), c);
        }
        assert!(Command::parse("nope").is_err());
    }

    #[test]
    fn missing_files_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.exp");
        fs::write(&p, "command = bounds\nmodel = nope.model\nseeds = 1\n").unwrap();
        assert!(matches!(Experiment::load(&p, None, None, None), Err(Error::Config(_))));
        let code = main_with(["rpde-lab", "bounds", "--config", p.to_str().unwrap()]);
        assert_eq!(code, EXIT_CONFIG);
        assert_eq!(main_with(["rpde-lab", "nonsense"]), EXIT_CONFIG);
        let code = main_with(["rpde-lab", "lift", "--config", dir.path().join("absent.exp").to_str().unwrap()]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn empty_seeds_rejected_and_offset_frozen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.exp");
        fs::write(&p, "command = gronwall\nseeds = \n").unwrap();
        assert!(matches!(Experiment::load(&p, None, None, None), Err(Error::Config(_))));
        fs::write(&p, "command = gronwall\nseeds = 1, 2\nseed_offset = 10\n").unwrap();
        let e = Experiment::load(&p, None, None, None).unwrap();
        assert_eq!(e.seeds, vec![11, 12]);
    }

    #[test]
    fn gronwall_run_writes_manifest_that_replays() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.exp");
        fs::write(&p, "command = gronwall\nseeds = 0\nhorizon = 1\ngronwall_steps = 50\n").unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        assert_eq!(main_with(["rpde-lab", "gronwall", "--config", p.to_str().unwrap(), "--out", a.to_str().unwrap()]), 0);
        let man = a.join("manifest.conf");
        let m = KvConfig::load(&man).unwrap();
        assert!(m.get_str("manifest.config_sha256").is_some());
        assert_eq!(
            main_with(["rpde-lab", "gronwall", "--config", man.to_str().unwrap(), "--out", b.to_str().unwrap(), "--jobs", "3"]),
            0
        );
        assert_eq!(fs::read(a.join("gronwall.csv")).unwrap(), fs::read(b.join("gronwall.csv")).unwrap());
        // a command that disagrees with the file is refused
        assert_eq!(main_with(["rpde-lab", "lift", "--config", man.to_str().unwrap()]), EXIT_CONFIG);
    }

    #[test]
    fn numerical_errors_get_their_own_code() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("m.model"), "n_modes = 2\nlambda_a = 1\nalpha = 0.5\n").unwrap();
        fs::write(dir.path().join("k.constants"), "gamma = 0.45\neta = 0.05\nchi = 0.01\n").unwrap();
        let p = dir.path().join("e.exp");
        // chi far below the single-cell level: the grid is too coarse for the greedy times
        fs::write(&p, "command = greedy\nmodel = m.model\nconstants = k.constants\nseeds = 1\nhorizon = 1\nnoise_scale = 1\nsteps_per_unit = 8\n").unwrap();
        let out = dir.path().join("o");
        assert_eq!(main_with(["rpde-lab", "greedy", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_NUMERICAL);
    }
}
