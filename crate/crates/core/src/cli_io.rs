//! Experiment orchestration behind the `ispec` binary: configuration
//! resolution, the `run` / `sweep` commands, and CSV, JSON and plot-data
//! output.
//!
//! Every command writes `report.json` (deterministic for a fixed config and
//! seed) and `timings.json` (wall-clock, excluded from the report so that
//! reports compare byte-for-byte).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{assemble, subdomain_operators, DiscreteOperator, Side};
use crate::dtn::{self, ContourSpec, NepResult};
use crate::error::{Error, Result};
use crate::krein::{self, HalfPlane};
use crate::problem::{
    builtin_accepts, builtin_problem, config_from_spec, emit_config, load_problem, parse_builtin_expr,
    partition_domain, spec_from_config, validate_ellipticity, ProblemConfig, ProblemSpec,
};
use crate::spectral::{self, EigClass, Spectrum, DENSE_LIMIT};

pub const TOOL: &str = "ispec";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest condensed size for the dense Krein diagnostics.
pub const KREIN_LIMIT: usize = 2000;
/// Largest size for the explicit resolvent-difference rank check.
pub const RANK_LIMIT: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    DtnScan,
    Verify,
    Enclosure,
    Essential,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::DtnScan => "dtn-scan",
            Command::Verify => "verify",
            Command::Enclosure => "enclosure",
            Command::Essential => "essential",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <Self as ValueEnum>::from_str(s, false).map_err(|_| Error::Config(format!("unknown command {s:?}")))
    }
}

/// Optional runner settings, read from the `experiment` object of a config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    /// Search region for `dtn-scan` (upper half-plane; the mirror is added).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour: Option<ContourSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<Heatmap>,
    /// Values of `L` for the truncation study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<f64>>,
    /// Number of sample points per estimate in `enclosure`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

/// Rectangular grid for `σ_min(M(λ))` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heatmap {
    pub re: [f64; 2],
    pub im: [f64; 2],
    pub points: [usize; 2],
}

impl Heatmap {
    fn default_for(dim: usize) -> Self {
        let points = if dim == 1 { [41, 21] } else { [13, 7] };
        Self {
            re: [-50.0, 50.0],
            im: [0.5, 50.0],
            points,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub spec: ProblemSpec,
    pub experiment: Experiment,
}

/// Resolves a config argument: an existing file (JSON), or a builtin
/// expression such as `P2` or `P3(c=20, L=2)`.
pub fn load_config(arg: &str) -> Result<LoadedConfig> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {arg}: {e}")))?;
        let cfg: ProblemConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{arg}: {e}")))?;
        let experiment = match &cfg.experiment {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("{arg}: experiment: {e}")))?,
            None => Experiment::default(),
        };
        return Ok(LoadedConfig {
            spec: spec_from_config(&cfg)?,
            experiment,
        });
    }
    match parse_builtin_expr(arg) {
        Some((name, params)) => Ok(LoadedConfig {
            spec: builtin_problem(&name, &params)?,
            experiment: Experiment::default(),
        }),
        None => Err(Error::Config(format!(
            "{arg:?} is neither a readable config file nor a builtin problem"
        ))),
    }
}

/// One invariant evaluated by a command.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub module: &'static str,
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(module: &'static str, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            module,
            name: name.into(),
            value,
            bound,
            passed: value <= bound,
        }
    }

    fn at_least(module: &'static str, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            module,
            name: name.into(),
            value,
            bound,
            passed: value >= bound,
        }
    }

    fn holds(module: &'static str, name: impl Into<String>, ok: bool) -> Self {
        Self {
            module,
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            bound: 1.0,
            passed: ok,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemEcho {
    pub label: String,
    pub unknowns: usize,
    pub interface_size: usize,
    pub config: ProblemConfig,
}

/// Headline numbers; each command fills what it computes.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub negative_inertia: usize,
    pub nonreal_pairs: Option<usize>,
    pub max_abs_nonreal: Option<f64>,
    pub max_relative_residual: Option<f64>,
    pub contour_count: Option<usize>,
    pub rho_star: Option<f64>,
    pub bound: Option<f64>,
    pub max_sigma_b: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub problem: ProblemEcho,
    pub summary: Summary,
    pub checks: Vec<Check>,
    /// Reported observations that are not invariants.
    pub findings: Vec<String>,
    pub skipped: Vec<String>,
    pub details: serde_json::Value,
}

impl RunReport {
    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Output row shared by all eigenvalue tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenRow {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
    pub class: &'static str,
    pub pair_id: Option<usize>,
}

pub fn spectrum_rows(s: &Spectrum) -> Vec<EigenRow> {
    (0..s.len())
        .map(|i| EigenRow {
            re: s.eigenvalues[i].re,
            im: s.eigenvalues[i].im,
            residual: s.residuals[i],
            class: s.class[i].as_str(),
            pair_id: s.pair_id[i],
        })
        .collect()
}

/// Writes `<stem>.csv` (RFC 4180), `<stem>.json` (rows plus `meta`) and
/// `<stem>.dat` (`re im` per line).
pub fn emit_table(rows: &[EigenRow], dir: &Path, stem: &str, meta: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    w.write_record(["re", "im", "residual", "class", "pair_id"])?;
    for r in rows {
        w.write_record([
            r.re.to_string(),
            r.im.to_string(),
            r.residual.to_string(),
            r.class.to_string(),
            r.pair_id.map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let json = serde_json::json!({ "meta": meta, "rows": rows });
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&json)?)?;
    let mut dat = fs::File::create(dir.join(format!("{stem}.dat")))?;
    for r in rows {
        writeln!(dat, "{} {}", r.re, r.im)?;
    }
    Ok(())
}

pub fn emit_spectrum(s: &Spectrum, dir: &Path, stem: &str) -> Result<()> {
    let meta = serde_json::json!({
        "count": s.len(),
        "nonreal_pairs": s.nonreal_pairs(),
        "tol_im": s.tol_im,
        "norm_k": s.norm_k,
        "residual": "‖Kx − λWx‖ / ‖x‖ on the full pencil",
    });
    emit_table(&spectrum_rows(s), dir, stem, meta)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Timer for the phases of one command.
#[derive(Default)]
struct Timings(BTreeMap<String, f64>);

impl Timings {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.insert(name.to_string(), t.elapsed().as_secs_f64());
        out
    }
}

struct Context<'a> {
    op: &'a DiscreteOperator,
    spec: &'a ProblemSpec,
    experiment: &'a Experiment,
    seed: u64,
    out: &'a Path,
    /// Part of a sweep: the essential probe runs on this spec alone.
    single: bool,
}

/// Runs one command, writes its files into `out`, and returns the report.
/// Failed invariants are recorded in the report, not raised.
pub fn run_command(cfg: &LoadedConfig, cmd: Command, seed: u64, out: &Path, single: bool) -> Result<RunReport> {
    fs::create_dir_all(out)?;
    let mut timings = Timings::default();
    let op = timings.time("assemble", || assemble(&cfg.spec))?;
    let ctx = Context {
        op: &op,
        spec: &cfg.spec,
        experiment: &cfg.experiment,
        seed,
        out,
        single,
    };
    let mut report = RunReport {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        command: cmd,
        seed,
        problem: ProblemEcho {
            label: cfg.spec.label(),
            unknowns: op.n(),
            interface_size: op.gamma.len(),
            config: config_from_spec(&cfg.spec),
        },
        summary: Summary {
            negative_inertia: timings.time("inertia", || spectral::negative_inertia(&op)),
            ..Summary::default()
        },
        checks: Vec::new(),
        findings: Vec::new(),
        skipped: Vec::new(),
        details: serde_json::Value::Null,
    };
    match cmd {
        Command::Spectrum => cmd_spectrum(&ctx, &mut report, &mut timings)?,
        Command::DtnScan => cmd_dtn_scan(&ctx, &mut report, &mut timings)?,
        Command::Verify => cmd_verify(&ctx, &mut report, &mut timings)?,
        Command::Enclosure => cmd_enclosure(&ctx, &mut report, &mut timings)?,
        Command::Essential => cmd_essential(&ctx, &mut report, &mut timings)?,
    }
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timings.json"), &timings.0)?;
    Ok(report)
}

/// [`run_command`] followed by the invariant verdict: any failed check is an
/// [`Error::InvariantViolation`].
pub fn run(cfg_arg: &str, cmd: Command, seed: u64, out: &Path) -> Result<RunReport> {
    let cfg = load_config(cfg_arg)?;
    let report = run_command(&cfg, cmd, seed, out, false)?;
    invariant_verdict(&report)?;
    Ok(report)
}

fn invariant_verdict(report: &RunReport) -> Result<()> {
    let failed = report.failed_checks();
    if failed.is_empty() {
        return Ok(());
    }
    Err(Error::InvariantViolation(
        failed
            .iter()
            .map(|c| format!("{}::{} = {:e} (bound {:e})", c.module, c.name, c.value, c.bound))
            .collect::<Vec<_>>()
            .join("; "),
    ))
}

fn spectrum_checks(s: &Spectrum, negative_inertia: usize, checks: &mut Vec<Check>) {
    checks.push(Check::at_most(
        "spectral_engine",
        "conjugate pairing defect",
        s.pairing_defect(),
        spectral::PAIR_TOL,
    ));
    checks.push(Check::at_most(
        "spectral_engine",
        "nonreal pairs vs negative inertia of K",
        s.nonreal_pairs() as f64,
        negative_inertia as f64,
    ));
    checks.push(Check::at_most(
        "spectral_engine",
        "max residual / ‖K‖",
        s.max_relative_residual(),
        1e-8,
    ));
}

fn fill_spectrum_summary(s: &Spectrum, summary: &mut Summary) {
    summary.nonreal_pairs = Some(s.nonreal_pairs());
    summary.max_abs_nonreal = Some(s.nonreal().iter().map(|z| z.norm()).fold(0.0, f64::max));
    summary.max_relative_residual = Some(s.max_relative_residual());
}

fn cmd_spectrum(ctx: &Context, report: &mut RunReport, t: &mut Timings) -> Result<()> {
    let s = t.time("eigensolve", || spectral::solve_generalized(ctx.op))?;
    t.time("write", || emit_spectrum(&s, ctx.out, "spectrum"))?;
    spectrum_checks(&s, report.summary.negative_inertia, &mut report.checks);
    fill_spectrum_summary(&s, &mut report.summary);
    report.details = serde_json::json!({
        "count": s.len(),
        "nonreal": s.nonreal(),
        "distance_of_zero": s.distance_of_zero(),
    });
    Ok(())
}

/// Eigenvalue rows from the upper contour and its mirror; conjugates share a
/// `pair_id`, and each eigenvalue is repeated by its multiplicity.
fn nep_rows(upper: &NepResult, lower: &NepResult) -> Vec<EigenRow> {
    let mut rows = Vec::new();
    let mut used = vec![false; lower.eigenvalues.len()];
    let mut next = 0;
    let mut lower_ids = vec![None; lower.eigenvalues.len()];
    let push = |rows: &mut Vec<EigenRow>, z: Complex64, res: f64, mult: usize, id: Option<usize>| {
        for _ in 0..mult {
            rows.push(EigenRow {
                re: z.re,
                im: z.im,
                residual: res,
                class: EigClass::Nonreal.as_str(),
                pair_id: id,
            });
        }
    };
    let mut upper_rows = Vec::new();
    for (k, z) in upper.eigenvalues.iter().enumerate() {
        let partner = lower
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(j, w)| !used[*j] && (z.conj() - **w).norm() <= 1e-6 * (1.0 + z.norm()))
            .map(|(j, _)| j)
            .next();
        let id = partner.map(|j| {
            used[j] = true;
            lower_ids[j] = Some(next);
            next += 1;
            next - 1
        });
        upper_rows.push((*z, upper.newton_residuals[k], upper.multiplicities[k], id));
    }
    for (j, z) in lower.eigenvalues.iter().enumerate() {
        push(&mut rows, *z, lower.newton_residuals[j], lower.multiplicities[j], lower_ids[j]);
    }
    for (z, res, mult, id) in upper_rows {
        push(&mut rows, z, res, mult, id);
    }
    rows.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    rows
}

fn cmd_dtn_scan(ctx: &Context, report: &mut RunReport, t: &mut Timings) -> Result<()> {
    let contour = ctx
        .experiment
        .contour
        .clone()
        .unwrap_or_else(ContourSpec::upper_default)
        .with_seed(ctx.seed);
    let upper = t.time("contour_upper", || dtn::nonreal_eigs(ctx.op, &contour))?;
    let lower_contour = contour.mirrored().with_seed(ctx.seed.wrapping_add(1));
    let lower = t.time("contour_lower", || dtn::nonreal_eigs(ctx.op, &lower_contour))?;
    let rows = nep_rows(&upper, &lower);
    let meta = serde_json::json!({
        "contour": contour,
        "residual": "‖M(λ)φ‖ / M_scale(λ), ‖φ‖ = 1",
        "multiplicities": [upper.multiplicities, lower.multiplicities],
        "argument_count": [upper.argument_count, lower.argument_count],
        "quadrature_nodes": [upper.quadrature_nodes, lower.quadrature_nodes],
    });
    t.time("write", || emit_table(&rows, ctx.out, "eigenvalues", meta))?;

    let heat = ctx
        .experiment
        .heatmap
        .clone()
        .unwrap_or_else(|| Heatmap::default_for(ctx.spec.dimension()));
    let samples = t.time("heatmap", || {
        dtn::sigma_min_samples(ctx.op, heat.re, heat.im, heat.points[0], heat.points[1])
    });
    let mut dat = fs::File::create(ctx.out.join("sigma_min.dat"))?;
    for [x, y, s] in &samples {
        writeln!(dat, "{x} {y} {s}")?;
    }

    let total: usize = upper.multiplicities.iter().chain(&lower.multiplicities).sum();
    let paired = rows.iter().all(|r| r.pair_id.is_some());
    report.checks.push(Check::holds("dtn_solver", "contour eigenvalues paired with conjugates", paired));
    report.checks.push(Check::at_most(
        "dtn_solver",
        "max Newton residual",
        rows.iter().map(|r| r.residual).fold(0.0, f64::max),
        1e-10,
    ));
    report.checks.push(Check::at_most(
        "dtn_solver",
        "nonreal count vs negative inertia of K",
        (total / 2) as f64,
        report.summary.negative_inertia as f64,
    ));
    for (k, (z, phi)) in upper.eigenvalues.iter().zip(&upper.kernels).enumerate() {
        let ef = dtn::eigenfunction_from_kernel(ctx.op, *z, phi)?;
        report
            .checks
            .push(Check::at_most("dtn_solver", format!("eigenfunction residual #{k}"), ef.residual, 1e-8));
    }
    report.summary.contour_count = Some(total);
    report.summary.nonreal_pairs = Some(total / 2);
    report.summary.max_abs_nonreal = Some(rows.iter().map(|r| r.re.hypot(r.im)).fold(0.0, f64::max));
    report.details = serde_json::json!({
        "upper": upper.eigenvalues,
        "lower": lower.eigenvalues,
        "heatmap": heat,
        "min_sampled_sigma": samples.iter().map(|s| s[2]).filter(|s| s.is_finite()).fold(f64::INFINITY, f64::min),
    });
    Ok(())
}

fn random_shift(rng: &mut ChaCha8Rng) -> Complex64 {
    let im = rng.random_range(0.5..50.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    Complex64::new(rng.random_range(-50.0..50.0), im)
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn cmd_verify(ctx: &Context, report: &mut RunReport, t: &mut Timings) -> Result<()> {
    let op = ctx.op;
    let spec = ctx.spec;
    let checks = &mut report.checks;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);

    // problem model
    t.time("problem", || -> Result<()> {
        checks.push(Check::at_least("problem_model", "ellipticity constant", validate_ellipticity(spec)?, f64::MIN_POSITIVE));
        checks.push(Check::at_least("problem_model", "essinf |r|", spec.weight_essinf(), 1e-12));
        let part = partition_domain(spec)?;
        checks.push(Check::holds(
            "problem_model",
            "partition covers all cells",
            part.plus_cells.len() + part.minus_cells.len() == spec.n_cells(),
        ));
        let round = load_problem(&emit_config(spec))?;
        checks.push(Check::holds("problem_model", "config round trip", round == *spec));
        Ok(())
    })?;

    // discretization
    t.time("discretization", || {
        checks.push(Check::holds("discretization", "K symmetric", op.k.is_symmetric()));
        let (dk, dw) = op.splitting_defect();
        checks.push(Check::at_most("discretization", "K⁺ + K⁻ − K", dk, 0.0));
        checks.push(Check::at_most("discretization", "W⁺_Γ + W⁻_Γ − W_Γ", dw, 0.0));
        for side in [Side::Plus, Side::Minus] {
            checks.push(Check::at_most(
                "discretization",
                format!("cross-side couplings ({side:?})"),
                op.cross_side_couplings(side) as f64,
                0.0,
            ));
        }
        let signs = op.i_plus.iter().all(|&i| op.w[i] > 0.0) && op.i_minus.iter().all(|&i| op.w[i] < 0.0);
        checks.push(Check::holds("discretization", "weight signs on I±", signs));
        let sub = subdomain_operators(op);
        for (side, s) in [(Side::Plus, 1), (Side::Minus, 2)] {
            checks.push(Check::at_most(
                "discretization",
                format!("B selfadjointness ({side:?})"),
                sub.b_selfadjoint_residual(side, 20, ctx.seed.wrapping_add(s)),
                1e-12,
            ));
        }
    });

    // spectral engine
    let cp = op.condensed()?;
    if cp.n() <= DENSE_LIMIT {
        let s = t.time("spectrum", || spectral::solve_condensed(op, &cp))?;
        spectrum_checks(&s, report.summary.negative_inertia, checks);
        fill_spectrum_summary(&s, &mut report.summary);
        let ks = spectral::krein_structure(op, &cp);
        checks.push(Check::at_most(
            "spectral_engine",
            "Krein selfadjointness / ‖K‖",
            spectral::selfadjoint_residual(&cp, 20, ctx.seed) / cp.norm_k,
            1e-12,
        ));
        checks.push(Check::holds(
            "spectral_engine",
            "condensed inertia equals full inertia",
            ks.negative_inertia_condensed == ks.negative_inertia_k,
        ));
    } else {
        report.skipped.push(format!("spectral_engine: dense eigensolve ({} > {DENSE_LIMIT})", cp.n()));
    }
    if cp.n() <= RANK_LIMIT {
        let lam = random_shift(&mut rng);
        let r = t.time("resolvent_identity", || spectral::resolvent_identity_residual(&cp, lam))?;
        checks.push(Check::at_most("spectral_engine", "resolvent identity", r, 1e-10));
    } else {
        report.skipped.push(format!("spectral_engine: dense resolvent identity ({} > {RANK_LIMIT})", cp.n()));
    }

    // DtN solver
    t.time("dtn", || -> Result<()> {
        let lam = random_shift(&mut rng);
        checks.push(Check::at_most("dtn_solver", "M(λ̄) = conj M(λ)", dtn::conjugate_symmetry_defect(op, lam)?, 1e-12));
        checks.push(Check::at_most("dtn_solver", "Schur columns = conormals", dtn::schur_consistency(op, lam)?, 1e-10));
        let ng = op.gamma.len();
        let mut worst_krein: f64 = 0.0;
        let mut worst_adj: f64 = 0.0;
        let mut worst_green: f64 = 0.0;
        for _ in 0..5 {
            let lam = random_shift(&mut rng);
            let g = random_vector(&mut rng, op.n());
            let phi = random_vector(&mut rng, ng);
            let psi = random_vector(&mut rng, ng);
            worst_krein = worst_krein.max(dtn::krein_resolvent_residual(op, lam, &g)?.residual);
            let lhs = dtn::omega_pairing(op, &dtn::gamma_apply(op, lam, &phi)?, &g)?;
            let rhs = dtn::gamma_pairing(op, &phi, &dtn::gamma_adjoint_apply(op, lam.conj(), &g)?)?;
            worst_adj = worst_adj.max((lhs - rhs).norm() / lhs.norm().max(1.0));
            for side in [Side::Plus, Side::Minus] {
                worst_green = worst_green.max(dtn::green_identity_residual(op, side, lam, &phi, &psi)?);
            }
        }
        checks.push(Check::at_most("dtn_solver", "Krein resolvent formula", worst_krein, 1e-10));
        checks.push(Check::at_most("dtn_solver", "γ adjoint pairing", worst_adj, 1e-12));
        checks.push(Check::at_most("dtn_solver", "Green identity", worst_green, 1e-10));
        Ok(())
    })?;
    if op.n() <= RANK_LIMIT {
        let lam = random_shift(&mut rng);
        let r = t.time("rank", || dtn::resolvent_difference_rank(op, lam))?;
        checks.push(Check::at_most("dtn_solver", "resolvent difference rank − |Γ|", r.numerical_rank as f64 - r.gamma_size as f64, 0.0));
        checks.push(Check::at_most("dtn_solver", "trailing singular value ratio", r.trailing_ratio, 1e-10));
    } else {
        report.skipped.push(format!("dtn_solver: explicit rank check ({} > {RANK_LIMIT})", op.n()));
    }

    // Krein diagnostics
    if cp.n() <= KREIN_LIMIT {
        let an = t.time("krein", || krein::analyze(op))?;
        checks.push(Check::at_most("krein_diagnostics", "projector identities", an.projections.identity_defect, krein::PROJECTOR_TOL));
        checks.push(Check::at_most("krein_diagnostics", "Gram skew part", an.sim.skew_defect, krein::PROJECTOR_TOL));
        checks.push(Check::at_least("krein_diagnostics", "λ_min(G)", 1.0 / an.sim.nu_sim, f64::MIN_POSITIVE));
        if let Some(m) = report.summary.max_abs_nonreal {
            checks.push(Check::at_most("krein_diagnostics", "max |nonreal λ| vs ρ*", m, an.report.rho_star));
        }
        report.summary.rho_star = Some(an.report.rho_star);
    } else {
        report.skipped.push(format!("krein_diagnostics: dense projections ({} > {KREIN_LIMIT})", cp.n()));
    }
    report.details = serde_json::json!({ "checks_run": report.checks.len() });
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct MarginRow {
    mu_re: f64,
    mu_im: f64,
    sigma_min: f64,
    rhs: f64,
    margin: f64,
    holds: bool,
}

fn cmd_enclosure(ctx: &Context, report: &mut RunReport, t: &mut Timings) -> Result<()> {
    let cp = ctx.op.condensed()?;
    if cp.n() > KREIN_LIMIT {
        return Err(Error::Config(format!(
            "enclosure diagnostics are dense; limited to {KREIN_LIMIT} unknowns, problem has {}",
            cp.n()
        )));
    }
    let s = t.time("eigensolve", || spectral::solve_condensed(ctx.op, &cp))?;
    let mut an = t.time("krein", || krein::analyze(ctx.op))?;
    an.report.check(&s.nonreal());
    let rep = &an.report;
    let count = ctx.experiment.samples.unwrap_or(10);
    let mut mus = krein::half_plane_samples(1.5 * rep.plus.tau, HalfPlane::Left, count.div_ceil(2));
    mus.extend(krein::half_plane_samples(1.5 * rep.minus.tau, HalfPlane::Right, count / 2));
    let estimates = t.time("block_estimates", || krein::block_estimates(&an.projections, &mus))?;
    let circle = krein::circle_samples(2.0 * rep.rho_star, count);
    let margins = t.time("resolvent_bound", || krein::resolvent_bound_check(&an.projections, &an.sim, &circle))?;

    let checks = &mut report.checks;
    checks.push(Check::at_most("krein_diagnostics", "projector identities", an.projections.identity_defect, krein::PROJECTOR_TOL));
    checks.push(Check::holds("krein_diagnostics", "nonreal eigenvalues inside ρ*", rep.contained));
    for e in &estimates {
        checks.push(Check::holds(
            "krein_diagnostics",
            format!("block estimates at μ = {}", e.mu),
            e.holds,
        ));
    }
    for m in margins.iter().filter(|m| !m.holds) {
        report.findings.push(format!(
            "resolvent lower bound violated at μ = {}: σ_min = {:e} < {:e}",
            m.mu, m.sigma_min, m.rhs
        ));
    }
    spectrum_checks(&s, report.summary.negative_inertia, checks);
    fill_spectrum_summary(&s, &mut report.summary);
    report.summary.rho_star = Some(rep.rho_star);

    emit_spectrum(&s, ctx.out, "spectrum")?;
    let mut w = csv::Writer::from_path(ctx.out.join("resolvent_margins.csv"))?;
    for m in &margins {
        w.serialize(MarginRow {
            mu_re: m.mu.re,
            mu_im: m.mu.im,
            sigma_min: m.sigma_min,
            rhs: m.rhs,
            margin: m.margin,
            holds: m.holds,
        })?;
    }
    w.flush()?;
    let details = serde_json::json!({
        "enclosure": rep,
        "block_estimates": estimates,
        "resolvent_margins": margins,
    });
    write_json(&ctx.out.join("enclosure.json"), &details)?;
    report.details = details;
    Ok(())
}

/// Specs of the truncation family: `L` from the experiment (or 2, 4, 8),
/// keeping an explicitly given `h/L`.
fn essential_family(ctx: &Context) -> Result<Vec<ProblemSpec>> {
    let origin = match (&ctx.spec.origin, ctx.single) {
        (Some(o), false) if builtin_accepts(&o.name, "L") => o,
        _ => return Ok(vec![ctx.spec.clone()]),
    };
    let base_l = origin.params.get("L").copied();
    let ls = ctx.experiment.family.clone().unwrap_or_else(|| vec![2.0, 4.0, 8.0]);
    ls.iter()
        .map(|&l| {
            let mut p = origin.params.clone();
            if let (Some(h), Some(bl)) = (p.get("h").copied(), base_l) {
                p.insert("h".into(), h * l / bl);
            }
            p.insert("L".into(), l);
            builtin_problem(&origin.name, &p)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct EssentialRow {
    size: f64,
    n_minus: usize,
    nu_minus: f64,
    gamma: f64,
    bound: f64,
    max_sigma_b: f64,
    holds: bool,
    asserted: bool,
    window_count: usize,
}

fn cmd_essential(ctx: &Context, report: &mut RunReport, t: &mut Timings) -> Result<()> {
    let family = essential_family(ctx)?;
    let probe = t.time("probe", || spectral::essential_probe(&family))?;
    let mut w = csv::Writer::from_path(ctx.out.join("essential.csv"))?;
    let mut dat = fs::File::create(ctx.out.join("essential.dat"))?;
    for e in &probe.entries {
        w.serialize(EssentialRow {
            size: e.size,
            n_minus: e.n_minus,
            nu_minus: e.nu_minus,
            gamma: e.gamma,
            bound: e.bound,
            max_sigma_b: e.max_sigma_b,
            holds: e.holds,
            asserted: e.asserted,
            window_count: e.window_count,
        })?;
        writeln!(dat, "{} {}", e.size, e.bound)?;
        if e.asserted {
            report.checks.push(Check::at_most(
                "spectral_engine",
                format!("max σ(B₋) − ν₋/γ at size {}", e.size),
                e.max_sigma_b - e.bound,
                1e-10 * e.bound.abs(),
            ));
        } else if !e.holds {
            report.findings.push(format!("bound not attained at size {} (not asserted)", e.size));
        }
    }
    w.flush()?;
    if probe.entries.len() > 1 {
        report.checks.push(Check::holds("spectral_engine", "|ν₋/γ| decreasing", probe.bound_decreasing));
    }
    if let Some(last) = probe.entries.last() {
        report.summary.bound = Some(last.bound);
        report.summary.max_sigma_b = Some(last.max_sigma_b);
    }
    report.details = serde_json::to_value(&probe)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub unknowns: usize,
    #[serde(flatten)]
    pub summary: Summary,
    pub failed_checks: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub tool: String,
    pub version: String,
    pub base: String,
    pub parameter: String,
    pub command: Command,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

/// Runs `cmd` for each value of a builtin parameter (in parallel) and writes
/// one run directory per value plus `sweep.csv` / `sweep.json`.
pub fn sweep(cfg_arg: &str, param: &str, values: &[f64], cmd: Command, seed: u64, out: &Path) -> Result<SweepReport> {
    let cfg = load_config(cfg_arg)?;
    let origin = cfg
        .spec
        .origin
        .clone()
        .ok_or_else(|| Error::Config("sweeps need a builtin problem (name or `problem` field)".into()))?;
    if !builtin_accepts(&origin.name, param) {
        return Err(Error::UnknownParameter(format!("{} has no parameter {param}", origin.name)));
    }
    if values.is_empty() {
        return Err(Error::Config("no sweep values".into()));
    }
    fs::create_dir_all(out)?;
    let reports: Vec<RunReport> = values
        .par_iter()
        .map(|&v| {
            let mut p = origin.params.clone();
            p.insert(param.to_string(), v);
            let run_cfg = LoadedConfig {
                spec: builtin_problem(&origin.name, &p)?,
                experiment: cfg.experiment.clone(),
            };
            let dir: PathBuf = out.join(format!("{param}={v}"));
            run_command(&run_cfg, cmd, seed, &dir, true)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = values
        .iter()
        .zip(&reports)
        .map(|(&value, r)| SweepRow {
            value,
            unknowns: r.problem.unknowns,
            summary: r.summary.clone(),
            failed_checks: r.failed_checks().len(),
        })
        .collect();
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record([
        param,
        "unknowns",
        "negative_inertia",
        "nonreal_pairs",
        "max_abs_nonreal",
        "rho_star",
        "bound",
        "max_sigma_b",
        "failed_checks",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in &rows {
        w.write_record([
            r.value.to_string(),
            r.unknowns.to_string(),
            r.summary.negative_inertia.to_string(),
            r.summary.nonreal_pairs.map(|v| v.to_string()).unwrap_or_default(),
            opt(r.summary.max_abs_nonreal),
            opt(r.summary.rho_star),
            opt(r.summary.bound),
            opt(r.summary.max_sigma_b),
            r.failed_checks.to_string(),
        ])?;
    }
    w.flush()?;
    let report = SweepReport {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        base: cfg.spec.label(),
        parameter: param.to_string(),
        command: cmd,
        seed,
        rows,
    };
    write_json(&out.join("sweep.json"), &report)?;
    for r in &reports {
        invariant_verdict(r)?;
    }
    Ok(report)
}

/// Builds the global thread pool, honoring `ISPEC_THREADS`.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("ISPEC_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("ISPEC_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}
