//! The `weyl-tensor` command line: job parsing, per-mode drivers, artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::{c, C64};
use crate::oracle::{oracle_tensor, verify_weyl_by_shooting, ShootingVerdict};
use crate::potential::{load_potential, Potential, PotentialSpec};
use crate::unperturbed::{validation_report, ContextSpec, SpectralContext, UnperturbedBasis};
use crate::volterra::{solve_all, RaySolution, SolverOptions, TensorKind};
use crate::weyl::{
    assemble_weyl, beta_decomposition, characteristic_all, g0_membership, hat_psi_correction, CharacteristicProfile, CharacteristicValue,
    WeylOptions, WeylSolutionSet,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Environment variable that supplies the output directory when `--out` is absent.
pub const OUT_ENV: &str = "WEYL_TENSOR_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Validate,
    Tensors,
    Weyl,
    SweepRay,
    SweepSector,
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "weyl-tensor", version, about = "Weyl-type solutions of singular first-order systems")]
pub struct Cli {
    pub mode: Mode,
    /// Context JSON (n, A, B, sector).
    #[arg(long)]
    pub context: PathBuf,
    /// Potential JSON; q = 0 when omitted.
    #[arg(long)]
    pub potential: Option<PathBuf>,
    /// Single spectral value, e.g. "2+0.8i".
    #[arg(long, conflicts_with_all = ["rho_ray", "rho_sector"])]
    pub rho: Option<String>,
    /// Ray "z:t_min:t_max:count", rho = z t with t geometric.
    #[arg(long, conflicts_with = "rho_sector")]
    pub rho_ray: Option<String>,
    /// Sector grid "r_min:r_max:n_r:n_theta" inside the context's sector.
    #[arg(long)]
    pub rho_sector: Option<String>,
    /// "a:b:count:geometric|linear".
    #[arg(long, default_value = "1e-4:50:400:geometric")]
    pub xgrid: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub dz: f64,
    #[arg(long, default_value_t = 0.05)]
    pub base_ratio: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub degeneracy_tol: f64,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RhoSpec {
    Single(#[serde(serialize_with = "crate::io::ser_complex")] C64),
    Ray {
        #[serde(serialize_with = "crate::io::ser_complex")]
        z: C64,
        t_min: f64,
        t_max: f64,
        count: usize,
    },
    Sector {
        r_min: f64,
        r_max: f64,
        n_r: usize,
        n_theta: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Geometric,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XGrid {
    pub a: f64,
    pub b: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl XGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.a];
        }
        let m = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let s = i as f64 / m;
                match self.spacing {
                    Spacing::Geometric => self.a * (self.b / self.a).powf(s),
                    Spacing::Linear => self.a + (self.b - self.a) * s,
                }
            })
            .collect()
    }
}

/// A fully checked job.
#[derive(Debug, Clone, Serialize)]
pub struct JobSpec {
    pub mode: Mode,
    pub context: PathBuf,
    pub potential: Option<PathBuf>,
    pub rho: Option<RhoSpec>,
    pub xgrid: XGrid,
    pub solver: SolverOptions,
    pub weyl: WeylOptions,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub threads: Option<usize>,
}

/// Parses "a+bi", "a-bi", "a", "bi", "-i" and friends.
pub fn parse_complex(s: &str) -> Result<C64> {
    let t: String = s.chars().filter(|ch| !ch.is_whitespace()).collect();
    let bad = || Error::input(format!("cannot parse complex number {s:?}"));
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return t.parse::<f64>().map(|re| c(re, 0.0)).map_err(|_| bad());
    };
    // split at the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let mut split = 0;
    for p in (1..bytes.len()).rev() {
        if (bytes[p] == b'+' || bytes[p] == b'-') && !matches!(bytes[p - 1], b'e' | b'E') {
            split = p;
            break;
        }
    }
    let (re_s, im_s) = body.split_at(split);
    let im = match im_s {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse::<f64>().map_err(|_| bad())?,
    };
    let re = if re_s.is_empty() { 0.0 } else { re_s.parse::<f64>().map_err(|_| bad())? };
    Ok(c(re, im))
}

fn fields<'a>(s: &'a str, count: usize, what: &str) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != count {
        return Err(Error::input(format!("{what} needs {count} ':'-separated fields, got {s:?}")));
    }
    Ok(parts)
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::input(format!("bad {what}: {s:?}")))
}

pub fn parse_ray(s: &str) -> Result<RhoSpec> {
    let p = fields(s, 4, "--rho-ray")?;
    let z = parse_complex(p[0])?;
    let (t_min, t_max): (f64, f64) = (num(p[1], "t_min")?, num(p[2], "t_max")?);
    let count: usize = num(p[3], "count")?;
    if z.norm() == 0.0 || !(t_min > 0.0) || !(t_max >= t_min) || count == 0 {
        return Err(Error::input(format!("ray {s:?} needs z != 0, 0 < t_min <= t_max and count >= 1")));
    }
    Ok(RhoSpec::Ray { z, t_min, t_max, count })
}

pub fn parse_sector(s: &str) -> Result<RhoSpec> {
    let p = fields(s, 4, "--rho-sector")?;
    let (r_min, r_max): (f64, f64) = (num(p[0], "r_min")?, num(p[1], "r_max")?);
    let (n_r, n_theta): (usize, usize) = (num(p[2], "n_r")?, num(p[3], "n_theta")?);
    if !(r_min > 0.0) || !(r_max >= r_min) || n_r == 0 || n_theta == 0 {
        return Err(Error::input(format!("sector grid {s:?} needs 0 < r_min <= r_max and positive counts")));
    }
    Ok(RhoSpec::Sector { r_min, r_max, n_r, n_theta })
}

pub fn parse_xgrid(s: &str) -> Result<XGrid> {
    let p = fields(s, 4, "--xgrid")?;
    let (a, b): (f64, f64) = (num(p[0], "x_min")?, num(p[1], "x_max")?);
    let count: usize = num(p[2], "count")?;
    let spacing = match p[3].trim() {
        "geometric" | "geom" | "log" => Spacing::Geometric,
        "linear" | "lin" => Spacing::Linear,
        other => return Err(Error::input(format!("unknown x spacing {other:?}"))),
    };
    if !(a > 0.0) || !(b > a) || count < 2 {
        return Err(Error::input(format!("x grid {s:?} needs 0 < a < b and count >= 2")));
    }
    Ok(XGrid { a, b, count, spacing })
}

fn geometric_t(t_min: f64, t_max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![t_min];
    }
    (0..count).map(|i| t_min * (t_max / t_min).powf(i as f64 / (count - 1) as f64)).collect()
}

impl RhoSpec {
    /// Sample points; sector grids are theta-major with angles at cell centres.
    pub fn samples(&self, ctx: &SpectralContext) -> Vec<C64> {
        match *self {
            RhoSpec::Single(z) => vec![z],
            RhoSpec::Ray { z, t_min, t_max, count } => geometric_t(t_min, t_max, count).into_iter().map(|t| z * t).collect(),
            RhoSpec::Sector { r_min, r_max, n_r, n_theta } => {
                let (lo, hi) = (ctx.sector.theta_min, ctx.sector.theta_max);
                let mut out = Vec::with_capacity(n_r * n_theta);
                for j in 0..n_theta {
                    let th = lo + (hi - lo) * (j as f64 + 0.5) / n_theta as f64;
                    for r in geometric_t(r_min, r_max, n_r) {
                        out.push(C64::from_polar(r, th));
                    }
                }
                out
            }
        }
    }
}

impl JobSpec {
    pub fn from_cli(cli: &Cli) -> Result<JobSpec> {
        let rho = match (&cli.rho, &cli.rho_ray, &cli.rho_sector) {
            (Some(r), _, _) => Some(RhoSpec::Single(parse_complex(r)?)),
            (_, Some(r), _) => Some(parse_ray(r)?),
            (_, _, Some(r)) => Some(parse_sector(r)?),
            _ => None,
        };
        let needs_rho = cli.mode != Mode::Validate;
        if needs_rho && rho.is_none() {
            return Err(Error::input("this mode needs --rho, --rho-ray or --rho-sector"));
        }
        match (cli.mode, &rho) {
            (Mode::SweepRay, Some(RhoSpec::Ray { .. })) | (Mode::SweepSector, Some(RhoSpec::Sector { .. })) => {}
            (Mode::SweepRay, _) => return Err(Error::input("sweep-ray needs --rho-ray")),
            (Mode::SweepSector, _) => return Err(Error::input("sweep-sector needs --rho-sector")),
            _ => {}
        }
        for (v, name) in [(cli.dz, "--dz"), (cli.base_ratio, "--base-ratio"), (cli.degeneracy_tol, "--degeneracy-tol")] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be positive")));
            }
        }
        if cli.threads == Some(0) {
            return Err(Error::input("--threads must be positive"));
        }
        let out = match &cli.out {
            Some(p) => p.clone(),
            None => std::env::var_os(OUT_ENV).map(PathBuf::from).ok_or_else(|| Error::input(format!("--out or {OUT_ENV} is required")))?,
        };
        Ok(JobSpec {
            mode: cli.mode,
            context: cli.context.clone(),
            potential: cli.potential.clone(),
            rho,
            xgrid: parse_xgrid(&cli.xgrid)?,
            solver: SolverOptions { dz: cli.dz, base_ratio: cli.base_ratio, ..Default::default() },
            weyl: WeylOptions { degeneracy_tol: cli.degeneracy_tol, ..Default::default() },
            out,
            threads: cli.threads,
        })
    }
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Condition { .. } => EXIT_VALIDATION,
        Error::Degenerate { .. } => EXIT_DEGENERATE,
        Error::Numerical(_) | Error::NotDecomposable { .. } => EXIT_NUMERICAL,
        Error::Domain(_) | Error::Input(_) | Error::Io(_) | Error::Json(_) => EXIT_USAGE,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(dir, name, &s)
}

/// One row of plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub x: f64,
    pub rho: C64,
    pub k: usize,
    pub quantity: String,
    pub value: C64,
}

pub const PLOT_HEADER: &str = "x,rho_abs,rho_arg,k,quantity,re,im";

/// Long-format CSV (x, |rho|, arg rho, k, quantity, re, im).
pub fn emit_plot_data(rows: &[PlotRow]) -> String {
    let mut s = String::from(PLOT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:.17e},{:.17e},{:.17e},{},{},{:.17e},{:.17e}",
            r.x,
            r.rho.norm(),
            r.rho.arg(),
            r.k,
            r.quantity,
            r.value.re,
            r.value.im
        );
    }
    s
}

fn weyl_rows(set: &WeylSolutionSet, rows: &mut Vec<PlotRow>) {
    let n = set.n;
    for (name, mats) in [("psit", &set.psi_tilde), ("psihat", &set.psi_hat)] {
        for comp in 1..=n {
            let quantity = format!("{name}_{comp}");
            for (i, &x) in set.xs.iter().enumerate() {
                for k in 1..=n {
                    rows.push(PlotRow { x, rho: set.rho, k, quantity: quantity.clone(), value: mats[i][(comp - 1, k - 1)] });
                }
            }
        }
    }
}

/// Loaded inputs shared by all modes past validation.
pub struct Inputs {
    pub basis: UnperturbedBasis,
    pub q: Potential,
    pub rhos: Vec<C64>,
    pub xs: Vec<f64>,
}

pub fn load_inputs(job: &JobSpec) -> Result<Inputs> {
    let spec: ContextSpec = read_json(&job.context)?;
    let (ctx, _) = SpectralContext::validate(&spec)?;
    let basis = UnperturbedBasis::build(&ctx)?;
    let q = match &job.potential {
        Some(p) => load_potential(&read_json::<PotentialSpec>(p)?, ctx.n)?,
        None => Potential::zero(ctx.n),
    };
    let rhos = job.rho.map(|r| r.samples(&basis.ctx)).unwrap_or_default();
    for &r in &rhos {
        if r.norm() == 0.0 || !basis.ctx.sector.contains_closed(r.arg()) {
            return Err(Error::input(format!("rho = {r} is not in the closed sector")));
        }
    }
    Ok(Inputs { basis, q, rhos, xs: job.xgrid.points() })
}

fn pool(job: &JobSpec) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = job.threads {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Error::numerical(format!("thread pool: {e}")))
}

/// Maps over rho samples in parallel; results come back in sample order.
fn per_rho<T: Send>(job: &JobSpec, rhos: &[C64], f: impl Fn(C64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = pool(job)?.install(|| rhos.par_iter().map(|&r| f(r)).collect());
    results.into_iter().collect()
}

/// Runs a job and returns the process exit status.
pub fn run(job: &JobSpec) -> Result<i32> {
    fs::create_dir_all(&job.out)?;
    match job.mode {
        Mode::Validate => run_validate(job),
        Mode::Tensors => run_tensors(job),
        Mode::Weyl => run_weyl(job),
        Mode::SweepRay => run_sweep_ray(job),
        Mode::SweepSector => run_sweep_sector(job),
        Mode::Verify => run_verify(job),
    }
}

fn run_validate(job: &JobSpec) -> Result<i32> {
    let spec: ContextSpec = read_json(&job.context)?;
    let report = validation_report(&spec)?;
    let mut status = if report.passed() { EXIT_OK } else { EXIT_VALIDATION };
    let basis = if report.passed() {
        let (ctx, _) = SpectralContext::validate(&spec)?;
        match UnperturbedBasis::build(&ctx) {
            Ok(b) => json!({"built": true, "diagnostics": b.diagnostics, "delta0": b.delta0.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()}),
            Err(e) => {
                status = exit_code(&e);
                json!({"built": false, "error": e.to_string()})
            }
        }
    } else {
        json!({"built": false})
    };
    write_json(&job.out, "validation.json", &json!({"job": job, "report": report, "basis": basis, "exit_code": status}))?;
    Ok(status)
}

fn run_tensors(job: &JobSpec) -> Result<i32> {
    let inp = load_inputs(job)?;
    let sols = per_rho(job, &inp.rhos, |r| solve_all(&inp.basis, &inp.q, r, &inp.xs, &job.solver))?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (s, sol) in sols.iter().enumerate() {
        let mut fields = Vec::new();
        for f in sol.t.iter().chain(&sol.f) {
            let label = format!("{}{}", f.kind.label(), f.k);
            write(&job.out, &format!("tensors/rho_{s:04}_{label}.csv"), &f.to_csv())?;
            fields.push(json!({"label": label, "error_estimate": f.error_estimate, "sup_hat": f.sup_hat(), "diagnostics": f.diagnostics}));
            let quantity = match f.kind {
                TensorKind::T => "that_norm",
                TensorKind::F => "fhat_norm",
            };
            for (i, &x) in sol.xs.iter().enumerate() {
                rows.push(PlotRow { x, rho: sol.rho, k: f.k, quantity: quantity.into(), value: c(f.hat[i].norm(), 0.0) });
            }
        }
        summary.push(json!({"index": s, "rho": [sol.rho.re, sol.rho.im], "basis_error": sol.basis_error, "fields": fields}));
    }
    write(&job.out, "plot_data.csv", &emit_plot_data(&rows))?;
    write_json(&job.out, "summary.json", &json!({"job": job, "basis": inp.basis.diagnostics, "samples": summary}))?;
    Ok(EXIT_OK)
}

fn weyl_summary(s: usize, sol: &RaySolution, set: &WeylSolutionSet) -> Result<serde_json::Value> {
    let dec = beta_decomposition(set)?;
    let hat = hat_psi_correction(sol, set)?;
    let sup_hat: Vec<f64> = (1..=set.n).map(|k| set.sup_hat(k)).collect();
    Ok(json!({
        "index": s,
        "rho": [set.rho.re, set.rho.im],
        "delta": set.delta,
        "delta0": set.delta0.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "diagnostics": set.diagnostics,
        "beta_decomposition": dec,
        "hat_psi": hat,
        "sup_psi_hat": sup_hat,
        "tensor_error": sol.max_error(),
    }))
}

fn run_weyl(job: &JobSpec) -> Result<i32> {
    let inp = load_inputs(job)?;
    let pairs = per_rho(job, &inp.rhos, |r| {
        let sol = solve_all(&inp.basis, &inp.q, r, &inp.xs, &job.solver)?;
        let set = assemble_weyl(&sol, &job.weyl)?;
        Ok((sol, set))
    })?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let profile = CharacteristicProfile { rho: pairs.iter().map(|p| p.0.rho).collect(), values: pairs.iter().map(|p| p.1.delta.clone()).collect() };
    for (s, (sol, set)) in pairs.iter().enumerate() {
        write(&job.out, &format!("weyl/rho_{s:04}.csv"), &set.to_csv())?;
        weyl_rows(set, &mut rows);
        summary.push(weyl_summary(s, sol, set)?);
    }
    write(&job.out, "delta_trace.csv", &profile.to_csv())?;
    write(&job.out, "plot_data.csv", &emit_plot_data(&rows))?;
    write_json(&job.out, "summary.json", &json!({"job": job, "basis": inp.basis.diagnostics, "samples": summary}))?;
    Ok(EXIT_OK)
}

/// Psi^ decay along one ray.
#[derive(Debug, Clone, Serialize)]
pub struct RayDecay {
    pub rho_abs: Vec<f64>,
    /// sup_x |Psi^_k| per sample (None where the sample was degenerate), per k.
    pub sup_hat: Vec<Vec<Option<f64>>>,
    /// sup_x of the trapezoidal L2 norm in |rho|, per k.
    pub l2: Vec<f64>,
    /// sup at the largest |rho| over the maximum along the ray, per k.
    pub end_ratio: Vec<f64>,
}

pub fn ray_decay(sets: &[Option<WeylSolutionSet>], rho_abs: &[f64], n: usize) -> RayDecay {
    let mut sup_hat = vec![Vec::with_capacity(sets.len()); n];
    let mut l2 = vec![0.0; n];
    let mut end_ratio = vec![0.0; n];
    for k in 1..=n {
        for s in sets {
            sup_hat[k - 1].push(s.as_ref().map(|w| w.sup_hat(k)));
        }
        let nx = sets.iter().flatten().map(|w| w.xs.len()).next().unwrap_or(0);
        for i in 0..nx {
            let mut acc = 0.0;
            for j in 1..sets.len() {
                if let (Some(a), Some(b)) = (&sets[j - 1], &sets[j]) {
                    let na: f64 = a.psi_hat[i].column(k - 1).iter().map(|z| z.norm()).sum();
                    let nb: f64 = b.psi_hat[i].column(k - 1).iter().map(|z| z.norm()).sum();
                    acc += 0.5 * (na * na + nb * nb) * (rho_abs[j] - rho_abs[j - 1]).abs();
                }
            }
            l2[k - 1] = f64::max(l2[k - 1], acc.sqrt());
        }
        let vals: Vec<f64> = sup_hat[k - 1].iter().flatten().copied().collect();
        let max = vals.iter().copied().fold(0.0, f64::max);
        end_ratio[k - 1] = match (sup_hat[k - 1].last(), max > 0.0) {
            (Some(Some(last)), true) => last / max,
            _ => 0.0,
        };
    }
    RayDecay { rho_abs: rho_abs.to_vec(), sup_hat, l2, end_ratio }
}

impl RayDecay {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho_abs,k,sup_psi_hat\n");
        for (k, col) in self.sup_hat.iter().enumerate() {
            for (r, v) in self.rho_abs.iter().zip(col) {
                match v {
                    Some(v) => {
                        let _ = writeln!(s, "{r:.17e},{},{v:.17e}", k + 1);
                    }
                    None => {
                        let _ = writeln!(s, "{r:.17e},{},nan", k + 1);
                    }
                }
            }
        }
        s
    }
}

fn run_sweep_ray(job: &JobSpec) -> Result<i32> {
    let inp = load_inputs(job)?;
    let n = inp.basis.n();
    let results = per_rho(job, &inp.rhos, |r| {
        let sol = solve_all(&inp.basis, &inp.q, r, &inp.xs, &job.solver)?;
        let delta = characteristic_all(&sol)?;
        let set = match assemble_weyl(&sol, &job.weyl) {
            Ok(set) => Some(set),
            Err(Error::Degenerate { .. }) => None,
            Err(e) => return Err(e),
        };
        let summary = match &set {
            Some(w) => Some(weyl_summary(0, &sol, w)?),
            None => None,
        };
        let tensor_sup: Vec<(String, f64)> = sol.t.iter().chain(&sol.f).map(|f| (format!("{}{}", f.kind.label(), f.k), f.sup_hat())).collect();
        Ok((delta, set, summary, tensor_sup))
    })?;
    let profile = CharacteristicProfile { rho: inp.rhos.clone(), values: results.iter().map(|r| r.0.clone()).collect() };
    let membership = g0_membership(&profile, job.weyl.degeneracy_tol);
    let rho_abs: Vec<f64> = inp.rhos.iter().map(|r| r.norm()).collect();
    let sets: Vec<Option<WeylSolutionSet>> = results.iter().map(|r| r.1.clone()).collect();
    let decay = ray_decay(&sets, &rho_abs, n);
    let mut rows = Vec::new();
    for set in sets.iter().flatten() {
        for (i, &x) in set.xs.iter().enumerate() {
            for k in 1..=n {
                let v: f64 = set.psi_hat[i].column(k - 1).iter().map(|z| z.norm()).sum();
                rows.push(PlotRow { x, rho: set.rho, k, quantity: "psihat_norm".into(), value: c(v, 0.0) });
            }
        }
    }
    let samples: Vec<_> = results
        .iter()
        .enumerate()
        .map(|(s, r)| json!({"index": s, "rho": [inp.rhos[s].re, inp.rhos[s].im], "weyl": r.2, "tensor_sup_hat": r.3}))
        .collect();
    write(&job.out, "delta_trace.csv", &profile.to_csv())?;
    write(&job.out, "decay_profile.csv", &decay.to_csv())?;
    write(&job.out, "plot_data.csv", &emit_plot_data(&rows))?;
    write_json(
        &job.out,
        "summary.json",
        &json!({"job": job, "basis": inp.basis.diagnostics, "delta_consistent": profile.all_consistent(), "membership": membership, "decay": decay, "samples": samples}),
    )?;
    Ok(EXIT_OK)
}

fn run_sweep_sector(job: &JobSpec) -> Result<i32> {
    let inp = load_inputs(job)?;
    let values = per_rho(job, &inp.rhos, |r| characteristic_all(&solve_all(&inp.basis, &inp.q, r, &inp.xs, &job.solver)?))?;
    let profile = CharacteristicProfile { rho: inp.rhos.clone(), values };
    let membership = g0_membership(&profile, job.weyl.degeneracy_tol);
    let mut rows = Vec::new();
    for (rho, vals) in profile.rho.iter().zip(&profile.values) {
        for v in vals {
            rows.push(PlotRow { x: v.x, rho: *rho, k: v.k, quantity: "delta".into(), value: v.value });
        }
    }
    write(&job.out, "delta_trace.csv", &profile.to_csv())?;
    write(&job.out, "plot_data.csv", &emit_plot_data(&rows))?;
    let members = membership.iter().filter(|m| m.member).count();
    write_json(
        &job.out,
        "summary.json",
        &json!({"job": job, "basis": inp.basis.diagnostics, "delta_consistent": profile.all_consistent(), "members": members, "samples": profile.rho.len(), "membership": membership, "profile": profile}),
    )?;
    Ok(EXIT_OK)
}

/// Agreement of one tensor with the oracle on a subset of the grid.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub label: String,
    pub max_error: f64,
    pub allowed: f64,
    pub pass: bool,
}

pub fn oracle_checks(basis: &UnperturbedBasis, q: &Potential, sol: &RaySolution) -> Result<Vec<OracleCheck>> {
    let n = basis.n();
    let stride = (sol.xs.len() / 8).max(1);
    let idx: Vec<usize> = (0..sol.xs.len()).step_by(stride).collect();
    let xs: Vec<f64> = idx.iter().map(|&i| sol.xs[i]).collect();
    let mut out = Vec::new();
    for (kind, fields) in [(TensorKind::T, &sol.t), (TensorKind::F, &sol.f)] {
        for f in fields.iter() {
            if f.degree() == n {
                continue;
            }
            let start = match kind {
                TensorKind::T => 1e-11f64.min(0.1 * xs[0]),
                TensorKind::F => f.diagnostics.x_max.max(*xs.last().unwrap()),
            };
            let or = oracle_tensor(basis, q, kind, f.k, sol.rho, &xs, start)?;
            let max_error = idx.iter().zip(&or).map(|(&i, o)| f.total(i).distance(o) / o.norm()).fold(0.0, f64::max);
            let allowed = f.error_estimate + 1e-9;
            out.push(OracleCheck { label: format!("{}{}", kind.label(), f.k), max_error, allowed, pass: max_error <= allowed });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct VerifySample {
    rho: [f64; 2],
    oracle: Vec<OracleCheck>,
    delta: Vec<CharacteristicValue>,
    slae_ok: bool,
    plucker_ok: bool,
    shooting: Vec<ShootingVerdict>,
    pass: bool,
}

pub const SLAE_TOL: f64 = 1e-8;

fn run_verify(job: &JobSpec) -> Result<i32> {
    let inp = load_inputs(job)?;
    let samples = per_rho(job, &inp.rhos, |r| {
        let sol = solve_all(&inp.basis, &inp.q, r, &inp.xs, &job.solver)?;
        let oracle = oracle_checks(&inp.basis, &inp.q, &sol)?;
        let set = assemble_weyl(&sol, &job.weyl)?;
        let d = &set.diagnostics;
        let slae_ok = d.slae_f_residual <= SLAE_TOL && d.slae_t_residual <= SLAE_TOL;
        let plucker_ok = d.plucker_t <= SLAE_TOL && d.plucker_f <= SLAE_TOL;
        let shooting = (1..=set.n).map(|k| verify_weyl_by_shooting(&inp.basis, &inp.q, &sol, &set, k)).collect::<Result<Vec<_>>>()?;
        let pass = oracle.iter().all(|o| o.pass) && set.delta.iter().all(|v| v.consistent) && slae_ok && plucker_ok && shooting.iter().all(|s| s.pass);
        Ok(VerifySample { rho: [r.re, r.im], oracle, delta: set.delta.clone(), slae_ok, plucker_ok, shooting, pass })
    })?;
    let pass = samples.iter().all(|s| s.pass);
    write_json(&job.out, "verify.json", &json!({"job": job, "basis": inp.basis.diagnostics, "pass": pass, "samples": samples}))?;
    Ok(if pass { EXIT_OK } else { EXIT_NUMERICAL })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        let cases = [
            ("2+0.8i", c(2.0, 0.8)),
            ("0.5-0.5i", c(0.5, -0.5)),
            ("3", c(3.0, 0.0)),
            ("-1.5i", c(0.0, -1.5)),
            ("i", c(0.0, 1.0)),
            ("-i", c(0.0, -1.0)),
            ("1e-3+2e-1i", c(1e-3, 0.2)),
            ("1e+2-3E-1j", c(100.0, -0.3)),
        ];
        for (s, z) in cases {
            assert_eq!(parse_complex(s).unwrap(), z, "{s}");
        }
        assert!(parse_complex("2+").is_err());
        assert!(parse_complex("").is_err());
    }

    #[test]
    fn grids() {
        let g = parse_xgrid("1e-4:50:400:geometric").unwrap();
        let p = g.points();
        assert_eq!(p.len(), 400);
        assert_eq!(p[0], 1e-4);
        assert!((p[399] - 50.0).abs() < 1e-12);
        assert!(parse_xgrid("1:0.5:10:linear").is_err());
        let RhoSpec::Ray { z, count, .. } = parse_ray("0.5+0.5i:0.1:100:64").unwrap() else { panic!() };
        assert_eq!((z, count), (c(0.5, 0.5), 64));
        assert!(parse_ray("0:1:2:3").is_err());
    }

    #[test]
    fn empty_plot_data_is_header_only() {
        assert_eq!(emit_plot_data(&[]), format!("{PLOT_HEADER}\n"));
    }
}
