use spinheat::cycle::{self, CycleConfig, Stage};
use spinheat::entropy;
use spinheat::oracle::{self, SuiteOptions};
use spinheat::raman::{self, EngineParams, RamanEngine, SpinInverseTemperature};
use spinheat::sweep::{self, EtaGrid, SweepSpec, TimeScan};

use crate::config::Settings;
use crate::error::CliError;
use crate::report::{Report, Table};

pub type CmdResult = Result<Report, CliError>;

const DEFAULT_ETA: f64 = 0.4;
const DEFAULT_KAPPA: usize = 1;
const DEFAULT_NBAR0: f64 = 5.0;
const DEFAULT_TAIL_EPS: f64 = 1e-12;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(format!("--{key} must be finite and > 0, got {v}")))
    }
}

fn engine_params(s: &mut Settings) -> Result<(f64, usize, f64, SpinInverseTemperature, f64), CliError> {
    Ok((
        s.f64("eta", DEFAULT_ETA)?,
        s.usize("kappa", DEFAULT_KAPPA)?,
        s.f64("nbar0", DEFAULT_NBAR0)?,
        s.lambda_s(SpinInverseTemperature::Infinite)?,
        s.f64("tail-eps", DEFAULT_TAIL_EPS)?,
    ))
}

/// `--tmax` fixes the scan window, otherwise the window adapts to the
/// slowest populated sideband frequency.
fn time_scan(s: &mut Settings) -> Result<TimeScan, CliError> {
    let tmax = s.opt_f64("tmax")?;
    let count = s.usize("samples", 4096)?;
    if count < 3 {
        return Err(bad("--samples must be >= 3 for a time scan"));
    }
    Ok(match tmax {
        Some(t) => TimeScan::Fixed { omega_t_max: positive("tmax", t)?, count },
        None => TimeScan::Auto { count },
    })
}

fn eta_grid(s: &mut Settings) -> Result<EtaGrid, CliError> {
    let d = EtaGrid::default();
    Ok(EtaGrid {
        min: s.f64("eta-min", d.min)?,
        max: s.f64("eta-max", d.max)?,
        count: s.usize("eta-count", d.count)?,
    })
}

pub fn dynamics(s: &mut Settings) -> CmdResult {
    let (eta, kappa, nbar0, lambda_s, tail_eps) = engine_params(s)?;
    let tmax = s.opt_f64("tmax")?;
    let samples = s.usize("samples", 401)?;
    s.finish("dynamics")?;
    if samples < 2 {
        return Err(bad("--samples must be >= 2"));
    }
    if let Some(t) = tmax {
        positive("tmax", t)?;
    }
    let engine = RamanEngine::new(EngineParams::new(eta, kappa, nbar0, lambda_s, tail_eps)?)?;

    let t_max = match tmax {
        Some(t) => t,
        None if kappa == 0 => 100.0,
        None => sweep::find_tf(&engine, TimeScan::default(), 1e-9).map_or(100.0, |(t_f, _)| 2.0 * t_f),
    };
    let initial = engine.initial_state();
    let (n0, jz0) = (initial.mean_phonon(), initial.jz());

    let mut report = Report::new("dynamics", s.resolved());
    let mut series = Table::new(
        "trajectory",
        &["omega_t", "nbar_quanta", "p_up", "p_down", "s_spin_nats", "s_vib_nats", "work_hbar_nu", "spinlabour_hbar"],
    );
    let mut last = initial.clone();
    for i in 0..samples {
        let t = t_max * i as f64 / (samples - 1) as f64;
        let st = engine.evolve(t)?;
        let (up, down) = st.spin_populations();
        let nbar = st.mean_phonon();
        series.push(vec![
            t.into(),
            nbar.into(),
            up.into(),
            down.into(),
            entropy::spin_entropy(&st)?.into(),
            entropy::vibrational_entropy(&st)?.into(),
            (n0 - nbar).into(),
            (st.jz() - jz0).into(),
        ]);
        last = st;
    }
    let mut dist = Table::new("phonon_distribution", &["m", "p_m_initial", "p_m_final"]);
    for (m, (a, b)) in initial.phonon_marginal().iter().zip(last.phonon_marginal()).enumerate() {
        dist.push(vec![m.into(), (*a).into(), b.into()]);
    }
    report.summary("tmax_omega_t", t_max);
    report.summary("fock_levels", engine.levels());
    report.summary("work_final_hbar_nu", n0 - last.mean_phonon());
    report.tables.push(series);
    report.tables.push(dist);
    Ok(report)
}

pub fn find_tf(s: &mut Settings) -> CmdResult {
    let (eta, kappa, nbar0, lambda_s, tail_eps) = engine_params(s)?;
    let scan = time_scan(s)?;
    let refine_tol = s.f64("refine-tol", 1e-9)?;
    s.finish("find-tf")?;
    positive("refine-tol", refine_tol)?;
    let params = EngineParams::new(eta, kappa, nbar0, lambda_s, tail_eps)?;
    let engine = RamanEngine::new(params)?;
    let (t_f, nbar_f) = sweep::find_tf(&engine, scan, refine_tol)?;
    let state = engine.evolve(t_f)?;
    let ledger = raman::ledger(&engine.initial_state(), &state, &params)?;
    let mut report = Report::new("find-tf", s.resolved());
    report.summary("t_f_omega_t", t_f);
    report.summary("nbar_tf_quanta", nbar_f);
    report.summary("p_down_tf", state.spin_populations().1);
    report.summary("work_hbar_nu", ledger.work);
    report.summary("spinlabour_hbar", ledger.spinlabour);
    report.summary("w_tilde_v", ledger.w_tilde_v);
    report.summary("w_tilde_s", ledger.w_tilde_s);
    Ok(report)
}

fn sweep_spec(s: &mut Settings, kappa_values: Vec<usize>, nbar0_values: Vec<f64>) -> Result<SweepSpec, CliError> {
    let lambda_s = s.lambda_s(SpinInverseTemperature::Infinite)?;
    let tail_eps = s.f64("tail-eps", DEFAULT_TAIL_EPS)?;
    let eta_grid = eta_grid(s)?;
    let t_scan = time_scan(s)?;
    let refine_tol = s.f64("refine-tol", 1e-9)?;
    Ok(SweepSpec {
        kappa_values,
        nbar0_values,
        eta_grid,
        t_scan,
        refine_tol,
        tail_eps,
        lambda_s,
    })
}

pub fn sweep_eta(s: &mut Settings) -> CmdResult {
    let kappa = s.usize("kappa", DEFAULT_KAPPA)?;
    let nbar0 = s.f64("nbar0", DEFAULT_NBAR0)?;
    let spec = sweep_spec(s, vec![kappa], vec![nbar0])?;
    s.finish("sweep-eta")?;
    spec.validate()?;
    let curve = sweep::sweep_eta(kappa, nbar0, &spec)?;
    let mut report = Report::new("sweep-eta", s.resolved());
    report.summary("eta_opt", curve.eta_opt);
    report.summary("w_opt_hbar_nu", curve.w_opt);
    report.summary("t_f_opt_omega_t", curve.t_f_opt);
    report.summary("bound_w_max_hbar_nu", kappa as f64 * entropy::max_pdown_bound(nbar0, kappa)?);
    let mut t = Table::new("curve", &["eta", "work_hbar_nu", "t_f_omega_t"]);
    for p in &curve.points {
        t.push(vec![p.eta.into(), p.work.into(), p.t_f.into()]);
    }
    report.tables.push(t);
    Ok(report)
}

pub fn sweep_nbar(s: &mut Settings) -> CmdResult {
    let d = SweepSpec::default();
    let kappas = s.usize_list("kappa", &d.kappa_values)?;
    let nbars = s.f64_list("nbar0", &d.nbar0_values)?;
    let spec = sweep_spec(s, kappas, nbars)?;
    let workers = s.usize("workers", 0)?;
    s.finish("sweep-nbar")?;
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    let result = pool.install(|| sweep::sweep_nbar(&spec))?;

    let mut report = Report::new("sweep-nbar", s.resolved());
    report.summary("grid_points", result.rows.len());
    report.summary("bound_violations", result.violations().count());
    let mut opt = Table::new(
        "optimum",
        &[
            "kappa",
            "nbar0_quanta",
            "eta_opt",
            "w_opt_hbar_nu",
            "t_f_opt_omega_t",
            "bound_w_max_hbar_nu",
            "bound_violated",
        ],
    );
    let mut curves = Table::new("curves", &["kappa", "nbar0_quanta", "eta", "work_hbar_nu", "t_f_omega_t"]);
    for r in &result.rows {
        opt.push(vec![
            r.kappa.into(),
            r.nbar0.into(),
            r.eta_opt.into(),
            r.w_opt.into(),
            r.t_f_opt.into(),
            r.bound_w_max.into(),
            r.bound_violated.into(),
        ]);
        for p in &r.curve {
            curves.push(vec![r.kappa.into(), r.nbar0.into(), p.eta.into(), p.work.into(), p.t_f.into()]);
        }
    }
    report.tables.push(opt);
    report.tables.push(curves);
    Ok(report)
}

pub fn bound(s: &mut Settings) -> CmdResult {
    let kappa = s.usize("kappa", DEFAULT_KAPPA)?;
    let nbars = s.f64_list("nbar0", &[1.0, 5.0, 10.0])?;
    let samples = s.usize("samples", 201)?;
    s.finish("bound")?;
    if samples < 2 {
        return Err(bad("--samples must be >= 2"));
    }
    if kappa == 0 {
        return Err(bad("--kappa must be >= 1 for the entropy bound"));
    }
    let mut report = Report::new("bound", s.resolved());
    let mut t = Table::new("lhs", &["nbar0_quanta", "p_down", "lhs_nats"]);
    for &n in &nbars {
        let domain = entropy::pdown_domain(n, kappa);
        report.summary(format!("max_pdown_bound.nbar0={n}"), entropy::max_pdown_bound(n, kappa)?);
        for i in 0..samples {
            let p = domain * i as f64 / (samples - 1) as f64;
            t.push(vec![n.into(), p.into(), entropy::subadd_lhs_thermal(p, n, kappa)?.into()]);
        }
    }
    report.tables.push(t);
    Ok(report)
}

pub fn cycle(s: &mut Settings) -> CmdResult {
    let (eta, kappa, nbar0, lambda_s, tail_eps) = engine_params(s)?;
    let t_extract = s.opt_f64("tmax")?;
    let d = CycleConfig::new(EngineParams::new(DEFAULT_ETA, 1, 1.0, SpinInverseTemperature::Infinite, 1e-6)?);
    let gamma_s = s.f64("gamma-s", d.gamma_s)?;
    let gamma_h = s.f64("gamma-h", d.gamma_h)?;
    let t_reset = s.f64("t-reset", d.t_reset)?;
    let t_therm = s.f64("t-therm", d.t_therm)?;
    let samples = s.usize("samples", d.samples_per_stage)?;
    s.finish("cycle")?;
    if samples < 2 {
        return Err(bad("--samples must be >= 2"));
    }
    let config = CycleConfig {
        t_extract,
        gamma_s,
        gamma_h,
        t_reset,
        t_therm,
        samples_per_stage: samples,
        ..CycleConfig::new(EngineParams::new(eta, kappa, nbar0, lambda_s, tail_eps)?)
    };
    config.validate()?;
    let traj = cycle::run_cycle(&config)?;
    let balance = cycle::balance_report(&traj)?;

    let mut report = Report::new("cycle", s.resolved());
    report.summary("t_extract_omega_t", traj.t_extract);
    for (name, l) in [
        ("extract", &traj.ledgers.extract),
        ("reset", &traj.ledgers.reset),
        ("therm", &traj.ledgers.therm),
    ] {
        report.summary(format!("ledger.{name}.work_hbar_nu"), l.work);
        report.summary(format!("ledger.{name}.spinlabour_hbar"), l.spinlabour);
    }
    report.summary("balance.work_hbar_nu", balance.work);
    report.summary("balance.spinlabour_hbar", balance.spinlabour);
    report.summary("balance.heat_hbar_nu", balance.heat);
    report.summary("balance.spintherm_hbar", balance.spintherm);
    report.summary("balance.heat_mismatch_hbar_nu", balance.heat_mismatch);
    report.summary("balance.spintherm_mismatch_hbar", balance.spintherm_mismatch);
    report.summary("balance.w_tilde_v", balance.w_tilde_v);
    report.summary("balance.w_tilde_s", balance.w_tilde_s);
    report.summary("closure.nbar_error_quanta", traj.closure_error.nbar);
    report.summary("closure.p_down_end", traj.closure_error.p_down);

    let mut t = Table::new(
        "trajectory",
        &["stage", "time_unit", "t_scaled", "nbar_quanta", "p_up", "p_down", "s_spin_nats", "s_vib_nats", "s_joint_nats"],
    );
    for p in &traj.points {
        let unit = match p.stage {
            Stage::Extract => "omega_t",
            Stage::Reset => "gamma_s_t",
            Stage::Therm => "gamma_h_t",
        };
        t.push(vec![
            p.stage.label().into(),
            unit.into(),
            p.t.into(),
            p.nbar.into(),
            p.p_up.into(),
            p.p_down.into(),
            p.s_spin.into(),
            p.s_vib.into(),
            p.s_joint.into(),
        ]);
    }
    report.tables.push(t);
    Ok(report)
}

/// Returns the report and whether every comparison passed.
pub fn oracle_check(s: &mut Settings) -> Result<(Report, bool), CliError> {
    let d = SuiteOptions::default();
    let samples = s.usize("samples", d.time_samples)?;
    let tail_eps = s.f64("tail-eps", d.tail_eps)?;
    let eta_offset = s.f64("inject-eta-mismatch", 0.0)?;
    s.finish("oracle-check")?;
    if samples < 2 {
        return Err(bad("--samples must be >= 2"));
    }
    if !eta_offset.is_finite() {
        return Err(bad("--inject-eta-mismatch must be finite"));
    }
    let checks = oracle::run_default_suite(SuiteOptions { time_samples: samples, eta_offset, tail_eps })?;
    let all = checks.iter().all(|c| c.passed);
    let mut report = Report::new("oracle-check", s.resolved());
    report.summary("checks", checks.len());
    report.summary("failed", checks.iter().filter(|c| !c.passed).count());
    report.summary("all_passed", all);
    let mut t = Table::new("checks", &["name", "max_deviation", "tolerance", "passed"]);
    for c in &checks {
        t.push(vec![c.name.as_str().into(), c.max_deviation.into(), c.tolerance.into(), c.passed.into()]);
    }
    report.tables.push(t);
    Ok((report, all))
}
