//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::time::Instant;

use spinheat::cycle::{self, CycleConfig, Stage};
use spinheat::entropy;
use spinheat::fock;
use spinheat::open_system::{self, ThermParams};
use spinheat::oracle::{self, HermitianPropagator};
use spinheat::raman::{self, EngineParams, RamanEngine, SpinInverseTemperature};
use spinheat::sweep::{self, SweepSpec};

const TAIL_EPS: f64 = 1e-12;
const ETAS: [f64; 2] = [0.05, 0.4];
const KAPPAS: [usize; 2] = [1, 5];
const NBARS: [f64; 2] = [1.0, 5.0];
const TIMES: usize = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn grid() -> Vec<(f64, usize, f64)> {
    let mut out = Vec::new();
    for eta in ETAS {
        for kappa in KAPPAS {
            for nbar0 in NBARS {
                out.push((eta, kappa, nbar0));
            }
        }
    }
    out
}

fn params(eta: f64, kappa: usize, nbar0: f64, lambda_s: SpinInverseTemperature) -> EngineParams {
    EngineParams::new(eta, kappa, nbar0, lambda_s, TAIL_EPS).unwrap()
}

fn times_for(p: &EngineParams) -> Vec<f64> {
    let engine = RamanEngine::new(*p).unwrap();
    oracle::oracle_times(&engine, TIMES)
}

/// Criteria 1 and 2 share the dense runs.
fn oracle_equivalence() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for (eta, kappa, nbar0) in grid() {
        let p = params(eta, kappa, nbar0, SpinInverseTemperature::Infinite);
        let times = times_for(&p);
        let dense = oracle::dense_joint_populations(&p, &times).unwrap();
        let engine = RamanEngine::new(p).unwrap();
        let total0 = engine.initial_state().total();
        for (&t, d) in times.iter().zip(&dense) {
            let c = engine.evolve(t).unwrap();
            for (x, y) in c.p_up.iter().chain(&c.p_down).zip(d.p_up.iter().chain(&d.p_down)) {
                worst = worst.max((x - y).abs());
            }
            drift = drift.max((c.total() - total0).abs()).max((d.total() - total0).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        outcome(
            worst < 1e-9 && secs < 30.0,
            format!("max |closed - dense| = {worst:.3e} (< 1e-9), runtime {secs:.1} s (< 30 s)"),
        ),
        outcome(drift < 1e-12, format!("max population drift = {drift:.3e} (< 1e-12)")),
    )
}

fn work_spinlabour_lock() -> Outcome {
    let mut worst: f64 = 0.0;
    for (eta, kappa, nbar0) in grid() {
        let p = params(eta, kappa, nbar0, SpinInverseTemperature::Infinite);
        let engine = RamanEngine::new(p).unwrap();
        let n0 = engine.initial_state().mean_phonon();
        for t in times_for(&p) {
            let s = engine.evolve(t).unwrap();
            let (_, down) = s.spin_populations();
            worst = worst.max((n0 - s.mean_phonon() - kappa as f64 * down).abs());
        }
    }
    outcome(worst < 1e-10, format!("max |nbar0 - nbar(t) - kappa P_down(t)| = {worst:.3e} (< 1e-10)"))
}

fn unitless_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for lambda in [0.0, 0.5, 2.0] {
        for (eta, kappa, nbar0) in grid() {
            let p = params(eta, kappa, nbar0, SpinInverseTemperature::Finite(lambda));
            let engine = RamanEngine::new(p).unwrap();
            let a = engine.initial_state();
            for t in times_for(&p) {
                let l = raman::ledger(&a, &engine.evolve(t).unwrap(), &p).unwrap();
                worst = worst.max((l.w_tilde_s - l.w_tilde_v).abs());
            }
        }
    }
    outcome(worst < 1e-12, format!("max |W_s - W_v| (unitless) = {worst:.3e} (< 1e-12)"))
}

fn subadditivity() -> Outcome {
    let mut min_lhs = f64::INFINITY;
    let lambdas = [
        SpinInverseTemperature::Infinite,
        SpinInverseTemperature::Finite(0.0),
        SpinInverseTemperature::Finite(0.5),
        SpinInverseTemperature::Finite(2.0),
    ];
    for lambda in lambdas {
        for (eta, kappa, nbar0) in grid() {
            let p = params(eta, kappa, nbar0, lambda);
            let engine = RamanEngine::new(p).unwrap();
            let states: Vec<_> = times_for(&p).iter().map(|&t| engine.evolve(t).unwrap()).collect();
            for s in entropy::entropy_trace(&states).unwrap() {
                min_lhs = min_lhs.min(s.lhs_subadd);
            }
        }
    }
    outcome(min_lhs >= -1e-9, format!("min dS_spin + dS_vib = {min_lhs:.3e} (>= -1e-9)"))
}

/// Von Neumann entropy of a dense density matrix.
fn von_neumann(rho: &nalgebra::DMatrix<num_complex::Complex64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(rho.clone());
    eig.eigenvalues.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

fn free_entropy_saturation() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_dense: f64 = 0.0;
    for lambda in [0.0, 0.5, 2.0] {
        let ls = SpinInverseTemperature::Finite(lambda);
        for (eta, kappa, nbar0) in grid() {
            let p = params(eta, kappa, nbar0, ls);
            let engine = RamanEngine::new(p).unwrap();
            let lv = cycle::lambda_v(nbar0);
            let a = engine.initial_state();
            let s0 = engine.branch_entropy();
            let reference = cycle::free_entropy(&a, s0, ls, lv, kappa, None).unwrap();
            let times = times_for(&p);
            for &t in &times {
                let s = engine.evolve(t).unwrap();
                let acc = cycle::free_entropy(&s, s0, ls, lv, kappa, Some(&reference)).unwrap();
                worst = worst.max(acc.saturation_residual().abs());
            }
            // Joint entropy from the dense density matrix on the small spaces.
            if nbar0 == 1.0 {
                let h = oracle::build_effective_hamiltonian(&p).unwrap();
                let prop = HermitianPropagator::new(&h).unwrap();
                let rho0 = oracle::diag_matrix(&oracle::initial_populations(&p).unwrap());
                let s_init = von_neumann(&rho0);
                let reference = cycle::free_entropy(&a, s_init, ls, lv, kappa, None).unwrap();
                for &t in times.iter().step_by(5) {
                    let rho = prop.evolve(&rho0, t);
                    let s = engine.evolve(t).unwrap();
                    let acc = cycle::free_entropy(&s, von_neumann(&rho), ls, lv, kappa, Some(&reference)).unwrap();
                    worst_dense = worst_dense.max(acc.saturation_residual().abs());
                }
            }
        }
    }
    let w = worst.max(worst_dense);
    outcome(
        w < 1e-9,
        format!("max |lambda_s W_s + lambda_v W_v + dF| = {worst:.3e}, with dense joint entropy {worst_dense:.3e} (< 1e-9)"),
    )
}

fn dissipative_closed_forms() -> Outcome {
    let reset = oracle::check_spin_reset().unwrap();

    let nbar_bath = 5.0;
    let gamma = 0.8;
    let cut = fock::choose_cutoff(nbar_bath, 1, TAIL_EPS).unwrap();
    let levels = cut.levels();
    let start = fock::thermal_distribution(1.0, &cut).unwrap().probs;
    let n_start: f64 = start.iter().enumerate().map(|(m, p)| m as f64 * p).sum();
    let mut worst_rel: f64 = 0.0;
    for tau in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
        let p = open_system::rethermalize(&start, &ThermParams { gamma_h: gamma, nbar_bath, duration: tau / gamma })
            .unwrap();
        let mean: f64 = p.iter().enumerate().map(|(m, q)| m as f64 * q).sum();
        let exact = nbar_bath + (n_start - nbar_bath) * (-tau as f64).exp();
        worst_rel = worst_rel.max(((mean - exact) / exact).abs());
    }
    let end = open_system::rethermalize(&start, &ThermParams { gamma_h: gamma, nbar_bath, duration: 20.0 / gamma })
        .unwrap();
    let target = fock::thermal_distribution(nbar_bath, &cut).unwrap().probs;
    let tv: f64 = 0.5 * end.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let pass = reset.passed && worst_rel < 1e-6 && tv < 1e-6 && levels == target.len();
    outcome(
        pass,
        format!(
            "reset vs Lindblad {:.3e} (< 1e-8); mean relaxation rel. error {worst_rel:.3e} (< 1e-6); TV to thermal at 20/Gamma_H {tv:.3e} (< 1e-6)",
            reset.max_deviation
        ),
    )
}

fn cycle_closure() -> Outcome {
    let start = Instant::now();
    let p = params(0.4, 1, 5.0, SpinInverseTemperature::Infinite);
    let cfg = CycleConfig { t_reset: 10.0, t_therm: 20.0, ..CycleConfig::new(p) };
    let traj = cycle::run_cycle(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let end = traj.corners.last().unwrap();
    let dn = (end.mean_phonon() - 5.0).abs();
    let down_end = end.spin_populations().1;
    let therm: Vec<f64> = traj.stage(Stage::Therm).map(|q| q.s_spin).collect();
    let spread = therm.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - therm.iter().cloned().fold(f64::INFINITY, f64::min);
    let down_tf = traj.corners[1].spin_populations().1;
    let reset: Vec<f64> = traj.stage(Stage::Reset).map(|q| q.s_spin).collect();
    let peak = reset.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rise_fall = peak > reset[0] + 1e-6 && peak > *reset.last().unwrap() + 1e-6;
    let shape_ok = if down_tf > 0.5 { rise_fall } else { true };
    let pass = dn < 1e-3 && down_end < 1e-4 && spread < 1e-12 && shape_ok && secs < 10.0;
    outcome(
        pass,
        format!(
            "|nbar_end - 5| = {dn:.3e} (< 1e-3), P_down_end = {down_end:.3e} (< 1e-4), therm-stage spin entropy spread {spread:.3e} (< 1e-12), P_down(t_f) = {down_tf:.4}, reset entropy rise-then-fall: {rise_fall}, runtime {secs:.2} s (< 10 s)"
        ),
    )
}

fn figure_shapes() -> Outcome {
    let start = Instant::now();
    let spec = SweepSpec::default();
    let result = sweep::sweep_nbar(&spec).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let row = |kappa: usize, nbar0: f64| {
        result.rows.iter().find(|r| r.kappa == kappa && r.nbar0 == nbar0).unwrap()
    };
    let set = [1.0, 2.0, 5.0, 10.0, 20.0];
    let mut notes = Vec::new();

    let interior = set.iter().all(|&n| {
        let r = row(1, n);
        let first = r.curve.first().unwrap().work;
        let last = r.curve.last().unwrap().work;
        r.w_opt > first && r.w_opt > last && r.eta_opt > spec.eta_grid.min && r.eta_opt < spec.eta_grid.max
    });
    notes.push(format!("(a) interior max: {interior}"));

    let etas: Vec<f64> = set.iter().map(|&n| row(1, n).eta_opt).collect();
    let decreasing = etas.windows(2).all(|w| w[1] < w[0]);
    notes.push(format!("(b) eta_opt {etas:.3?} decreasing: {decreasing}"));

    let w: Vec<f64> = set.iter().map(|&n| row(1, n).w_opt).collect();
    let nondecreasing = w.windows(2).all(|p| p[1] >= p[0]);
    let below = w.iter().all(|&x| x < 1.0);
    // Saturation: the gain per unit nbar0 shrinks along the set.
    let slopes: Vec<f64> = (1..set.len()).map(|i| (w[i] - w[i - 1]) / (set[i] - set[i - 1])).collect();
    let saturating = slopes.windows(2).all(|s| s[1] < s[0]);
    let k10: Vec<f64> = [0.5, 1.0].iter().map(|&n| row(10, n).w_opt).collect();
    let k10_small = k10.iter().all(|&x| x < 0.05);
    notes.push(format!(
        "(c) kappa=1 W_opt {w:.4?} nondecreasing: {nondecreasing}, < kappa: {below}, saturating: {saturating}; kappa=10 W_opt(nbar0<=1) {k10:.4?} ~ 0: {k10_small}"
    ));

    let violations = result.violations().count();
    notes.push(format!(
        "(d) {} grid points checked against the entropy bound, {violations} violations flagged",
        result.rows.len()
    ));
    let fast = secs < 300.0;
    notes.push(format!("runtime {secs:.1} s (< 300 s)"));
    outcome(
        interior && decreasing && nondecreasing && below && saturating && k10_small && fast,
        notes.join("; "),
    )
}

fn adiabatic_convergence() -> Outcome {
    let base = params(0.1, 1, 1.0, SpinInverseTemperature::Infinite);
    let (d1, _) = oracle::adiabatic_deviation(&base, 0.01, 60).unwrap();
    let (d2, _) = oracle::adiabatic_deviation(&base, 0.005, 60).unwrap();
    let ratio = d1 / d2;
    outcome(
        d1 < 5e-3 && (3.0..=5.0).contains(&ratio),
        format!("deviation at Omega/nu = 0.01: {d1:.3e} (< 5e-3); halving ratio {ratio:.3} (in [3, 5])"),
    )
}

fn report(id: usize, name: &str, o: Outcome, failed: &mut usize) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id:>2} {name}: {}", o.detail);
    if !o.pass {
        *failed += 1;
    }
}

fn main() {
    let mut failed = 0;
    let (c1, c2) = oracle_equivalence();
    report(1, "oracle equivalence", c1, &mut failed);
    report(2, "population conservation", c2, &mut failed);
    report(3, "work-spinlabour lock", work_spinlabour_lock(), &mut failed);
    report(4, "unitless work identity", unitless_identity(), &mut failed);
    report(5, "entropy sub-additivity", subadditivity(), &mut failed);
    report(6, "free-entropy saturation", free_entropy_saturation(), &mut failed);
    report(7, "dissipative closed forms", dissipative_closed_forms(), &mut failed);
    report(8, "cycle closure", cycle_closure(), &mut failed);
    report(9, "optimization figure shapes", figure_shapes(), &mut failed);
    report(10, "adiabatic-model convergence", adiabatic_convergence(), &mut failed);
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
