//! The five commands. Each writes its CSV files under the output directory
//! and returns either success or a diagnosed failure.

use crate::config::{OrbitMode, RunConfig};
use freetime::critvals::{critical_values, cu_lower, default_form_grid, e0_exact, peierls_scan, AscentOptions, PeierlsOptions};
use freetime::flow::{
    blowup_diagnosis, descend, diagnose_ps, empirical_measure, integrate_el, refine_critical, residuals, DescentOptions,
    PsDiagnosis, RefineOptions, Termination,
};
use freetime::jacobi::{conjugate_scan, hessian_spectrum, linearized_flow};
use freetime::loopspace::{action, mean_energy, node_velocities, read_loop, vertex_energies, write_loop};
use freetime::minimax::{mountain_pass, struwe_sweep, MinimaxOptions, SweepOptions};
use freetime::{Error, FreeTimeLoop, Lagrangian, MetricWeights, Result, TonelliLagrangian};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// How a command ended when it did not fail with an error.
#[derive(Debug)]
pub enum Outcome {
    Ok,
    /// A diagnosed failure: reason code and message.
    Failed(&'static str, String),
}

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub command: &'static str,
}

/// Shortest round-trip formatting, scientific outside `[1e-4, 1e15)`, with
/// `-0` printed as `0`.
fn num(x: f64) -> String {
    let x = x + 0.0;
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// CSV writer whose first line records the command, seed and system.
    fn csv(&self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        std::fs::create_dir_all(&self.out)?;
        let mut f = BufWriter::new(File::create(self.path(name))?);
        writeln!(
            f,
            "# freetime {} seed={} system={}",
            self.command, self.seed, self.cfg.system.kind
        )?;
        Ok(csv::Writer::from_writer(f))
    }

    fn write_loop_file(&self, name: &str, lp: &FreeTimeLoop) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        let mut f = BufWriter::new(File::create(self.path(name))?);
        write_loop(&mut f, lp)?;
        f.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn row<W: Write>(w: &mut csv::Writer<W>, fields: &[String]) -> Result<()> {
    w.write_record(fields).map_err(csv_err)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn system(cfg: &RunConfig) -> Result<TonelliLagrangian> {
    cfg.system.build()
}

fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    let t = &cfg.tolerances;
    SweepOptions {
        minimax: MinimaxOptions {
            gtol: t.gtol,
            refine_nodes: cfg.nodes,
            refine: RefineOptions {
                el_tol: t.el,
                energy_tol: t.energy,
                ..Default::default()
            },
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Checks an orbit against the acceptance thresholds.
struct Verification {
    el_residual: f64,
    energy_error: f64,
    pointwise: f64,
    closure: f64,
    passed: bool,
}

fn verify(l: &TonelliLagrangian, k: f64, lp: &FreeTimeLoop, cfg: &RunConfig) -> Result<Verification> {
    let r = residuals(l, k, lp)?;
    let d = lp.dim();
    let v = node_velocities(lp);
    let t = lp.period();
    let steps = 16 * lp.n();
    let orbit = integrate_el(l, lp.node(0), &v[..d], t, t / steps as f64)?;
    let end = orbit.last_position();
    let closure = (0..d)
        .map(|c| (end[c] - lp.node(0)[c] - lp.winding()[c] as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let tol = &cfg.tolerances;
    let passed = r.el_residual <= tol.accept_el
        && r.energy_error <= tol.accept_energy
        && r.energy_fluctuation <= tol.pointwise_energy
        && closure <= tol.closure;
    Ok(Verification {
        el_residual: r.el_residual,
        energy_error: r.energy_error,
        pointwise: r.energy_fluctuation,
        closure,
        passed,
    })
}

fn write_orbit_csv(ctx: &Context, l: &TonelliLagrangian, lp: &FreeTimeLoop) -> Result<()> {
    let d = lp.dim();
    let v = node_velocities(lp);
    let e = vertex_energies(l, lp)?;
    let mut w = ctx.csv("orbit.csv")?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|c| format!("x{c}")));
    header.extend((1..=d).map(|c| format!("v{c}")));
    header.push("E".into());
    row(&mut w, &header)?;
    for i in 0..=lp.n() {
        let mut r = vec![num(lp.period() * i as f64 / lp.n() as f64)];
        r.extend(lp.node(i).iter().map(|x| num(*x)));
        r.extend(v[i * d..(i + 1) * d].iter().map(|x| num(*x)));
        r.push(num(e[i]));
        row(&mut w, &r)?;
    }
    finish(w)
}

fn class_minimize(l: &TonelliLagrangian, k: f64, cfg: &RunConfig) -> Result<std::result::Result<FreeTimeLoop, (&'static str, String)>> {
    let d = l.dim();
    let class = cfg.class.clone().unwrap_or_else(|| {
        let mut c = vec![0; d];
        c[0] = 1;
        c
    });
    if class.len() != d || class.iter().all(|c| *c == 0) {
        return Err(Error::Config {
            field: "class".into(),
            message: format!("must be a non-zero integer vector of length {d}"),
        });
    }
    let len = class.iter().map(|c| (*c as f64).powi(2)).sum::<f64>().sqrt();
    let period = if k > 0.0 { len / (2.0 * k).sqrt() } else { len };
    let start = FreeTimeLoop::straight(&vec![0.0; d], &class, period, cfg.nodes)?;
    let opts = DescentOptions {
        gtol: 1e-6,
        ..Default::default()
    };
    let state = descend(l, k, &start, &opts)?;
    match state.termination {
        Termination::TCollapse | Termination::TBlowup => {
            let diag = diagnose_ps(l, k, &state)?;
            return Ok(Err(("ps-failure", format!("descent ended in {} ({diag:?})", diag.verdict()))));
        }
        Termination::Converged | Termination::Stalled => {}
    }
    let refine = RefineOptions {
        el_tol: cfg.tolerances.el,
        energy_tol: cfg.tolerances.energy,
        ..Default::default()
    };
    let (lp, _) = refine_critical(l, k, &state.loop_, &refine)?;
    Ok(Ok(lp))
}

pub fn find_orbit(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let l = system(cfg)?;
    let k = cfg.require_k()?;
    let (mode, cu) = match cfg.mode {
        OrbitMode::Auto => {
            let cu = cu_lower(&l, AscentOptions::default().budget)?.value.max(e0_exact(&l, cfg.e0_grid)?);
            (if k > cu { OrbitMode::ClassMin } else { OrbitMode::MountainPass }, Some(cu))
        }
        m => (m, None),
    };
    let mut report: Vec<(&str, String)> = vec![("k", num(k))];
    if let Some(cu) = cu {
        report.push(("cu_estimate", num(cu)));
    }
    let (lp, level, bottom) = match mode {
        OrbitMode::ClassMin => {
            report.push(("mode", "class-min".into()));
            match class_minimize(&l, k, cfg)? {
                Ok(lp) => {
                    let spec = hessian_spectrum(&l, k, &lp, 4, MetricWeights::Completing)?;
                    let a = action(&l, &lp, k)?;
                    (lp, a, Some(spec.bottom()))
                }
                Err((code, msg)) => return Ok(Outcome::Failed(code, msg)),
            }
        }
        _ => {
            report.push(("mode", "mountain-pass".into()));
            let res = mountain_pass(&l, k, &sweep_options(cfg))?;
            match (&res.orbit, res.verified) {
                (Some(orbit), true) => (orbit.clone(), res.level, res.bottom_eigenvalue),
                _ => {
                    let why = res.failure.unwrap_or_else(|| "relaxed path did not yield an orbit".into());
                    return Ok(Outcome::Failed("unverified", why));
                }
            }
        }
    };
    let check = verify(&l, k, &lp, cfg)?;
    report.extend([
        ("period", num(lp.period())),
        ("level", num(level)),
        ("nodes", lp.n().to_string()),
        ("el_residual", num(check.el_residual)),
        ("energy_error", num(check.energy_error)),
        ("pointwise_energy_error", num(check.pointwise)),
        ("closure_error", num(check.closure)),
        ("bottom_eigenvalue", opt(bottom)),
        ("verified", check.passed.to_string()),
    ]);
    ctx.write_loop_file("orbit.loop", &lp)?;
    write_orbit_csv(ctx, &l, &lp)?;
    let mut w = ctx.csv("report.csv")?;
    row(&mut w, &["quantity".into(), "value".into()])?;
    for (q, v) in &report {
        row(&mut w, &[q.to_string(), v.clone()])?;
    }
    finish(w)?;
    if check.passed {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::Failed(
            "unverified",
            format!(
                "orbit misses the acceptance thresholds (EL {:.3e}, energy {:.3e}, pointwise {:.3e}, closure {:.3e})",
                check.el_residual, check.energy_error, check.pointwise, check.closure
            ),
        ))
    }
}

pub fn sweep(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let l = system(cfg)?;
    let range = cfg.require_range()?;
    let records = struwe_sweep(&l, range, cfg.grid, &sweep_options(cfg))?;
    let mut w = ctx.csv("sweep.csv")?;
    row(
        &mut w,
        &[
            "k", "level", "period", "slope", "period_bound", "el_residual", "energy_error", "accepted", "note",
        ]
        .map(String::from),
    )?;
    for r in &records {
        row(
            &mut w,
            &[
                num(r.k),
                opt(r.level),
                opt(r.period),
                opt(r.slope),
                opt(r.period_bound),
                opt(r.el_residual),
                opt(r.energy_error),
                r.accepted.to_string(),
                r.note.clone(),
            ],
        )?;
    }
    finish(w)?;
    let accepted = records.iter().filter(|r| r.accepted).count();
    if accepted == 0 {
        return Ok(Outcome::Failed("no-orbit", "no grid point produced an accepted orbit".into()));
    }
    Ok(Outcome::Ok)
}

pub fn critvals(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let l = system(cfg)?;
    let cv = critical_values(&l, cfg.e0_grid, &AscentOptions::default(), &default_form_grid(l.dim()))?;
    for (name, lp) in [("witness_cu.loop", &cv.cu_witness), ("witness_c0.loop", &cv.c0_witness), ("witness_c.loop", &cv.c_witness)] {
        ctx.write_loop_file(name, lp)?;
    }
    let clamp = |raw: f64, clamped: f64| if clamped > raw { "e0" } else { "" }.to_string();
    let form: Vec<String> = cv.c0_form.iter().map(|x| num(*x)).collect();
    let mut w = ctx.csv("critvals.csv")?;
    row(&mut w, &["quantity", "raw", "clamped", "clamped_to", "witness", "form"].map(String::from))?;
    row(&mut w, &["e0".into(), num(cv.e0), num(cv.e0), String::new(), String::new(), String::new()])?;
    row(
        &mut w,
        &["cu".into(), num(cv.cu_raw), num(cv.cu), clamp(cv.cu_raw, cv.cu), "witness_cu.loop".into(), String::new()],
    )?;
    row(
        &mut w,
        &["c0".into(), num(cv.c0_raw), num(cv.c0), clamp(cv.c0_raw, cv.c0), "witness_c0.loop".into(), form.join(" ")],
    )?;
    row(
        &mut w,
        &["c".into(), num(cv.c_raw), num(cv.c), clamp(cv.c_raw, cv.c), "witness_c.loop".into(), String::new()],
    )?;
    finish(w)?;
    Ok(Outcome::Ok)
}

pub fn conjugate(ctx: &Context, orbit_file: Option<&Path>) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let l = system(cfg)?;
    let file = match orbit_file {
        Some(f) => f,
        None => cfg.require_orbit_file()?,
    };
    let lp = read_loop(BufReader::new(File::open(file).map_err(|e| Error::Config {
        field: "orbit_file".into(),
        message: format!("cannot open {}: {e}", file.display()),
    })?))?;
    if lp.dim() != l.dim() {
        return Err(Error::Config {
            field: "orbit_file".into(),
            message: format!("loop has dimension {}, system has {}", lp.dim(), l.dim()),
        });
    }
    let id = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let d = lp.dim();
    let v = node_velocities(&lp);
    let t = lp.period();
    let orbit = integrate_el(&l, lp.node(0), &v[..d], cfg.periods * t, t / 2000.0)?;
    let mono = linearized_flow(&l, &orbit)?;
    let report = conjugate_scan(&l, &mono)?;
    let mut w = ctx.csv("conjugate.csv")?;
    row(&mut w, &["orbit_id", "time", "multiplicity"].map(String::from))?;
    for (time, m) in report.times.iter().zip(&report.multiplicities) {
        row(&mut w, &[id.clone(), num(*time), m.to_string()])?;
    }
    finish(w)?;
    let k = match cfg.k {
        Some(k) => k,
        None => mean_energy(&l, &lp)?,
    };
    let spec = hessian_spectrum(&l, k, &lp, 6, MetricWeights::Completing)?;
    let mut w = ctx.csv("spectrum.csv")?;
    row(&mut w, &["orbit_id", "index", "value", "reparam_overlap"].map(String::from))?;
    for (i, (e, o)) in spec.eigenvalues.iter().zip(&spec.overlaps).enumerate() {
        row(&mut w, &[id.clone(), i.to_string(), num(*e), num(*o)])?;
    }
    finish(w)?;
    Ok(Outcome::Ok)
}

/// Mass of the measure within `radius` of the vertical circle `x₁ = c`.
fn tube_mass(m: &freetime::flow::EmpiricalMeasure, c: f64, radius: f64) -> f64 {
    m.mass_where(|x| {
        let d = (x[0] - c).rem_euclid(1.0);
        d.min(1.0 - d) <= radius
    })
}

pub fn ps_demo(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let l = system(cfg)?;
    let c = cfg.k.unwrap_or(0.0);
    let q = vec![0.0; l.dim()];
    let mut periods = cfg.ps_periods.clone();
    periods.sort_by(f64::total_cmp);
    let points = peierls_scan(&l, c, &q, &q, &periods, &PeierlsOptions::default())?;
    let mut w = ctx.csv("peierls.csv")?;
    row(&mut w, &["T", "phi", "el_residual"].map(String::from))?;
    for p in &points {
        row(&mut w, &[num(p.period), opt(p.phi), opt(p.el_residual)])?;
    }
    finish(w)?;
    let Some(last) = points.iter().rev().find(|p| p.minimizer.is_some()) else {
        return Ok(Outcome::Failed("no-minimizer", "no period of the barrier scan converged".into()));
    };
    let lp = last.minimizer.as_ref().expect("checked");
    let m = empirical_measure(&l, c, lp, cfg.bins)?;
    let diag = blowup_diagnosis(&l, c, lp)?;
    let cells = m.bins.pow(m.dim as u32);
    let mut w = ctx.csv("measure.csv")?;
    let mut header: Vec<String> = (1..=m.dim).map(|i| format!("cell_x{i}")).collect();
    header.extend(["speed_bin".to_string(), "mass".to_string()]);
    row(&mut w, &header)?;
    for cell in 0..cells {
        let mut idx = vec![0; m.dim];
        let mut rest = cell;
        for j in (0..m.dim).rev() {
            idx[j] = rest % m.bins;
            rest /= m.bins;
        }
        for s in 0..m.bins {
            let mass = m.histogram[cell * m.bins + s];
            let mut r: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            r.extend([s.to_string(), num(mass)]);
            row(&mut w, &r)?;
        }
    }
    finish(w)?;
    let phis: Vec<f64> = points.iter().filter_map(|p| p.phi).collect();
    let (lo, hi) = phis.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    let (energy_gap, mean_velocity_norm) = match &diag {
        PsDiagnosis::TBlowup { energy_gap, mean_velocity_norm, .. } => (*energy_gap, *mean_velocity_norm),
        _ => (f64::NAN, f64::NAN),
    };
    let mut w = ctx.csv("ps_summary.csv")?;
    row(&mut w, &["quantity", "value"].map(String::from))?;
    let summary = [
        ("verdict", diag.verdict().to_string()),
        ("period", num(lp.period())),
        ("action_per_time", num(m.summary.action_per_time)),
        ("mean_energy", num(m.summary.mean_energy)),
        ("energy_gap", num(energy_gap)),
        ("mean_velocity_norm", num(mean_velocity_norm)),
        ("total_mass", num(m.total_mass())),
        ("tube_mass_x1_0", num(tube_mass(&m, 0.0, 0.05))),
        ("tube_mass_x1_half", num(tube_mass(&m, 0.5, 0.05))),
        ("phi_min", num(lo)),
        ("phi_max", num(hi)),
    ];
    for (q, v) in summary {
        row(&mut w, &[q.to_string(), v])?;
    }
    finish(w)?;
    Ok(Outcome::Ok)
}
