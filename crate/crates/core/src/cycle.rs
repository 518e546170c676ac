//! Full engine cycle: work extraction (A -> B), spin reset (B -> C) and
//! re-thermalization (C -> A), with entropy and free-entropy accounting.

use serde::Serialize;

use crate::entropy;
use crate::error::{invalid, Error, Result};
use crate::fock;
use crate::open_system::{self, ResetParams, ThermParams};
use crate::raman::{self, EngineParams, JointPopulations, RamanEngine, SpinInverseTemperature, WorkLedger};
use crate::sweep::{self, TimeScan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Reset,
    Therm,
}

impl Stage {
    pub fn label(&self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Reset => "reset",
            Stage::Therm => "therm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleConfig {
    pub params: EngineParams,
    /// Extraction time `Omega t`; `None` picks the first minimum of `nbar(t)`.
    pub t_extract: Option<f64>,
    /// Reset duration `Gamma_s t`.
    pub t_reset: f64,
    /// Re-thermalization duration `Gamma_H t`.
    pub t_therm: f64,
    pub gamma_s: f64,
    pub gamma_h: f64,
    pub samples_per_stage: usize,
    pub scan: TimeScan,
    pub refine_tol: f64,
}

impl CycleConfig {
    pub fn new(params: EngineParams) -> Self {
        Self {
            params,
            t_extract: None,
            t_reset: 10.0,
            t_therm: 20.0,
            gamma_s: 1.0,
            gamma_h: 1.0,
            samples_per_stage: 200,
            scan: TimeScan::default(),
            refine_tol: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.kappa == 0 {
            return Err(invalid("kappa", "an engine cycle needs kappa >= 1"));
        }
        if let Some(t) = self.t_extract {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("t_extract", "must be finite and > 0"));
            }
        }
        for (name, v) in [
            ("t_reset", self.t_reset),
            ("t_therm", self.t_therm),
            ("gamma_s", self.gamma_s),
            ("gamma_h", self.gamma_h),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be finite and > 0"));
            }
        }
        if self.samples_per_stage < 2 {
            return Err(invalid("samples", "need at least 2 samples per stage"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub stage: Stage,
    /// Stage-local time: `Omega t` (extract), `Gamma_s t` (reset) or
    /// `Gamma_H t` (therm).
    pub t: f64,
    pub nbar: f64,
    pub p_up: f64,
    pub p_down: f64,
    pub s_spin: f64,
    pub s_vib: f64,
    pub s_joint: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageLedgers {
    pub extract: WorkLedger,
    pub reset: WorkLedger,
    pub therm: WorkLedger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosureError {
    pub nbar: f64,
    pub p_down: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleTrajectory {
    pub t_extract: f64,
    pub points: Vec<TrajectoryPoint>,
    pub ledgers: StageLedgers,
    pub closure_error: ClosureError,
    /// States at A, B, C and back at A.
    pub corners: Vec<JointPopulations>,
    /// Joint entropy of the unitary stage (constant).
    pub branch_entropy: f64,
    pub kappa: usize,
}

impl CycleTrajectory {
    pub fn stage(&self, stage: Stage) -> impl Iterator<Item = &TrajectoryPoint> {
        self.points.iter().filter(move |p| p.stage == stage)
    }
}

fn uniform(duration: f64, samples: usize) -> impl Iterator<Item = f64> {
    (0..samples).map(move |i| duration * i as f64 / (samples - 1) as f64)
}

fn point(stage: Stage, t: f64, state: &JointPopulations, s_joint: f64) -> Result<TrajectoryPoint> {
    let (p_up, p_down) = state.spin_populations();
    Ok(TrajectoryPoint {
        stage,
        t,
        nbar: state.mean_phonon(),
        p_up,
        p_down,
        s_spin: entropy::spin_entropy(state)?,
        s_vib: entropy::vibrational_entropy(state)?,
        s_joint,
    })
}

pub fn run_cycle(config: &CycleConfig) -> Result<CycleTrajectory> {
    config.validate()?;
    let engine = RamanEngine::new(config.params)?;
    let t_extract = match config.t_extract {
        Some(t) => t,
        None => sweep::find_tf(&engine, config.scan, config.refine_tol)?.0,
    };
    let n = config.samples_per_stage;
    let kappa = config.params.kappa;
    let mut points = Vec::with_capacity(3 * n);

    let branch_entropy = engine.branch_entropy();
    let a = engine.initial_state();
    for t in uniform(t_extract, n) {
        let s = engine.evolve(t)?;
        points.push(point(Stage::Extract, t, &s, branch_entropy)?);
    }
    let b = engine.evolve(t_extract)?;

    let reset = |tau: f64| {
        open_system::spin_reset(
            &b,
            &ResetParams {
                gamma_s: config.gamma_s,
                duration: tau / config.gamma_s,
            },
        )
    };
    for tau in uniform(config.t_reset, n) {
        let s = reset(tau)?;
        points.push(point(Stage::Reset, tau, &s, entropy::joint_diagonal_entropy(&s)?)?);
    }
    let c = reset(config.t_reset)?;

    let segment = ThermParams {
        gamma_h: config.gamma_h,
        nbar_bath: config.params.nbar0,
        duration: config.t_therm / (n - 1) as f64 / config.gamma_h,
    };
    let mut s = c.clone();
    points.push(point(Stage::Therm, 0.0, &s, entropy::joint_diagonal_entropy(&s)?)?);
    for tau in uniform(config.t_therm, n).skip(1) {
        s = open_system::rethermalize_joint(&s, &segment)?;
        points.push(point(Stage::Therm, tau, &s, entropy::joint_diagonal_entropy(&s)?)?);
    }
    let end = s;

    let ledgers = StageLedgers {
        extract: raman::ledger_with_kappa(&a, &b, kappa)?,
        reset: raman::ledger_with_kappa(&b, &c, kappa)?,
        therm: raman::ledger_with_kappa(&c, &end, kappa)?,
    };
    let closure_error = ClosureError {
        nbar: (end.mean_phonon() - config.params.nbar0).abs(),
        p_down: end.spin_populations().1,
    };
    Ok(CycleTrajectory {
        t_extract,
        points,
        ledgers,
        closure_error,
        corners: vec![a, b, c, end],
        branch_entropy,
        kappa,
    })
}

/// Free-entropy bookkeeping with charges `A_s = -<J_z>/hbar` and
/// `A_v = nbar / kappa`. The unitless works are `-Delta A_i` against the
/// reference account.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeEntropyAccount {
    pub lambda_s: f64,
    pub lambda_v: f64,
    pub a_s: f64,
    pub a_v: f64,
    pub joint_entropy: f64,
    pub f_tilde: f64,
    pub delta_f: f64,
    pub w_tilde_s: f64,
    pub w_tilde_v: f64,
}

impl FreeEntropyAccount {
    /// `lambda_s W_s + lambda_v W_v + Delta F`; zero for unitary evolution.
    pub fn saturation_residual(&self) -> f64 {
        self.lambda_s * self.w_tilde_s + self.lambda_v * self.w_tilde_v + self.delta_f
    }
}

/// Free entropy of `state` given its joint entropy (branch entropy during the
/// unitary stage, diagonal entropy otherwise). With `reference = None` the
/// state is its own reference.
pub fn free_entropy(
    state: &JointPopulations,
    joint_entropy: f64,
    lambda_s: SpinInverseTemperature,
    lambda_v: f64,
    kappa: usize,
    reference: Option<&FreeEntropyAccount>,
) -> Result<FreeEntropyAccount> {
    let Some(lambda_s) = lambda_s.finite() else {
        return Err(Error::Undefined(
            "free entropy diverges for a perfectly polarized spin (lambda_s = inf)".into(),
        ));
    };
    if kappa == 0 {
        return Err(Error::Undefined("energy charge nbar/kappa needs kappa >= 1".into()));
    }
    if !lambda_v.is_finite() {
        return Err(invalid("lambda_v", "must be finite"));
    }
    let a_s = -state.jz();
    let a_v = state.mean_phonon() / kappa as f64;
    let f_tilde = lambda_s * a_s + lambda_v * a_v - joint_entropy;
    let (delta_f, w_tilde_s, w_tilde_v) = match reference {
        Some(r) => (f_tilde - r.f_tilde, r.a_s - a_s, r.a_v - a_v),
        None => (0.0, 0.0, 0.0),
    };
    Ok(FreeEntropyAccount {
        lambda_s,
        lambda_v,
        a_s,
        a_v,
        joint_entropy,
        f_tilde,
        delta_f,
        w_tilde_s,
        w_tilde_v,
    })
}

/// Inverse vibrational temperature `beta hbar nu` of a bath with mean `nbar0`.
pub fn lambda_v(nbar0: f64) -> f64 {
    fock::beta_hnu(nbar0)
}

/// Per-cycle resource balance.
///
/// `work` and `spinlabour` come from the extraction stage; `heat` is the
/// energy drawn back from the hot bath during re-thermalization and
/// `spintherm` the J_z change the spin bath imposes during reset.
/// For a closed cycle `heat = work` and `spintherm = -spinlabour`; the
/// mismatches measure how far the run is from closing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleBalance {
    pub work: f64,
    pub spinlabour: f64,
    pub heat: f64,
    pub spintherm: f64,
    pub heat_mismatch: f64,
    pub spintherm_mismatch: f64,
    pub w_tilde_v: f64,
    pub w_tilde_s: f64,
}

pub fn balance_report(trajectory: &CycleTrajectory) -> Result<CycleBalance> {
    if trajectory.corners.len() != 4 {
        return Err(Error::IncompleteTrajectory(format!(
            "expected 4 stage boundaries, found {}",
            trajectory.corners.len()
        )));
    }
    for stage in [Stage::Extract, Stage::Reset, Stage::Therm] {
        if trajectory.stage(stage).next().is_none() {
            return Err(Error::IncompleteTrajectory(format!("no samples for stage {}", stage.label())));
        }
    }
    let l = &trajectory.ledgers;
    let work = l.extract.work;
    let spinlabour = l.extract.spinlabour;
    let heat = -l.therm.work;
    // The reset undoes the extraction's J_z change; closing the cycle makes it -spinlabour.
    let spintherm = l.reset.spinlabour;
    Ok(CycleBalance {
        work,
        spinlabour,
        heat,
        spintherm,
        heat_mismatch: (heat - work).abs(),
        spintherm_mismatch: (spintherm + spinlabour).abs(),
        w_tilde_v: l.extract.w_tilde_v,
        w_tilde_s: l.extract.w_tilde_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(eta: f64, nbar0: f64) -> CycleConfig {
        let p = EngineParams::new(eta, 1, nbar0, SpinInverseTemperature::Infinite, 1e-12).unwrap();
        CycleConfig {
            samples_per_stage: 40,
            ..CycleConfig::new(p)
        }
    }

    #[test]
    fn stages_in_order_and_times_increase() {
        let traj = run_cycle(&config(0.4, 2.0)).unwrap();
        let labels: Vec<_> = traj.points.iter().map(|p| p.stage).collect();
        let mut dedup = labels.clone();
        dedup.dedup();
        assert_eq!(dedup, vec![Stage::Extract, Stage::Reset, Stage::Therm]);
        for stage in [Stage::Extract, Stage::Reset, Stage::Therm] {
            let ts: Vec<f64> = traj.stage(stage).map(|p| p.t).collect();
            assert!(ts.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn entropy_constancy_per_stage() {
        let traj = run_cycle(&config(0.4, 2.0)).unwrap();
        let vib: Vec<f64> = traj.stage(Stage::Reset).map(|p| p.s_vib).collect();
        assert!(vib.iter().all(|v| (v - vib[0]).abs() < 1e-12));
        let spin: Vec<f64> = traj.stage(Stage::Therm).map(|p| p.s_spin).collect();
        assert!(spin.iter().all(|v| (v - spin[0]).abs() < 1e-12));
        let joint: Vec<f64> = traj.stage(Stage::Extract).map(|p| p.s_joint).collect();
        assert!(joint.iter().all(|v| *v == joint[0]));
    }

    #[test]
    fn null_cycle_has_zero_totals() {
        let mut cfg = config(0.4, 2.0);
        cfg.t_extract = Some(1e-12);
        let b = balance_report(&run_cycle(&cfg).unwrap()).unwrap();
        for v in [b.work, b.spinlabour, b.heat, b.spintherm] {
            assert!(v.abs() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn polarized_cycle_balance() {
        let traj = run_cycle(&config(0.4, 2.0)).unwrap();
        let b = balance_report(&traj).unwrap();
        let down = traj.corners[1].spin_populations().1;
        assert!((b.spinlabour + down).abs() < 1e-12);
        assert!((b.work - down).abs() < 1e-12);
        assert!(b.heat_mismatch < 1e-3);
        assert!(b.spintherm_mismatch < 1e-4, "{b:?}");
    }

    #[test]
    fn closure_improves_with_longer_stages() {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for scale in [0.25, 0.5, 1.0] {
            let mut cfg = config(0.4, 2.0);
            cfg.t_reset *= scale;
            cfg.t_therm *= scale;
            let e = run_cycle(&cfg).unwrap().closure_error;
            assert!(e.nbar < prev.0 && e.p_down < prev.1);
            prev = (e.nbar, e.p_down);
        }
    }

    #[test]
    fn incomplete_trajectory_rejected() {
        let mut traj = run_cycle(&config(0.4, 1.0)).unwrap();
        traj.corners.pop();
        assert!(matches!(balance_report(&traj), Err(Error::IncompleteTrajectory(_))));
    }

    #[test]
    fn free_entropy_needs_finite_lambda() {
        let traj = run_cycle(&config(0.4, 1.0)).unwrap();
        let err = free_entropy(&traj.corners[0], 0.0, SpinInverseTemperature::Infinite, 1.0, 1, None);
        assert!(matches!(err, Err(Error::Undefined(_))));
    }

    #[test]
    fn free_entropy_zero_at_start() {
        let p = EngineParams::new(0.4, 1, 5.0, SpinInverseTemperature::Finite(1.5), 1e-12).unwrap();
        let e = RamanEngine::new(p).unwrap();
        let s0 = e.initial_state();
        let r = free_entropy(&s0, e.branch_entropy(), p.lambda_s, lambda_v(5.0), 1, None).unwrap();
        let again = free_entropy(&s0, e.branch_entropy(), p.lambda_s, lambda_v(5.0), 1, Some(&r)).unwrap();
        assert_eq!(again.delta_f, 0.0);
    }
}
