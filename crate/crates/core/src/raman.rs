//! Closed-form dynamics of the resolved-sideband Raman work-extraction stage.
//!
//! The interaction-picture Hamiltonian only couples `|up, m>` with
//! `|down, m - kappa>`, so a diagonal initial state evolves as an ensemble of
//! independent two-level branches. Each branch is solved exactly with
//! `cos^2 / sin^2 (Omega_m t)` and the joint populations are assembled from
//! them. Times are dimensionless `Omega t` throughout.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fock::{self, CouplingTable, FockCutoff, ThermalDistribution};

/// Inverse spin temperature of the initial spin state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SpinInverseTemperature {
    /// Perfect polarization in `|up>`.
    Infinite,
    Finite(f64),
}

impl SpinInverseTemperature {
    pub fn p_up(&self) -> f64 {
        match *self {
            Self::Infinite => 1.0,
            Self::Finite(l) => 1.0 / (1.0 + (-l).exp()),
        }
    }

    pub fn p_down(&self) -> f64 {
        match *self {
            Self::Infinite => 0.0,
            Self::Finite(l) => {
                let e = (-l).exp();
                e / (1.0 + e)
            }
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Self::Infinite => None,
            Self::Finite(l) => Some(l),
        }
    }
}

impl std::fmt::Display for SpinInverseTemperature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Infinite => write!(f, "inf"),
            Self::Finite(l) => write!(f, "{l}"),
        }
    }
}

impl std::str::FromStr for SpinInverseTemperature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Self::Infinite);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| invalid("lambda_s", format!("expected a number or `inf`, got `{s}`")))?;
        if v.is_nan() {
            return Err(invalid("lambda_s", "NaN"));
        }
        if v == f64::INFINITY {
            Ok(Self::Infinite)
        } else {
            Ok(Self::Finite(v))
        }
    }
}

/// Physical knobs of one extraction run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineParams {
    /// Raman rate `Omega = Omega_1 Omega_2 / Delta`; only used to convert
    /// dimensionless times for reporting.
    pub omega: f64,
    pub eta: f64,
    pub kappa: usize,
    pub nbar0: f64,
    pub lambda_s: SpinInverseTemperature,
    pub cutoff: FockCutoff,
}

impl EngineParams {
    /// Parameters with `Omega = 1` and a cutoff chosen for `tail_eps`.
    pub fn new(
        eta: f64,
        kappa: usize,
        nbar0: f64,
        lambda_s: SpinInverseTemperature,
        tail_eps: f64,
    ) -> Result<Self> {
        let cutoff = fock::choose_cutoff(nbar0, kappa, tail_eps)?;
        let params = Self {
            omega: 1.0,
            eta,
            kappa,
            nbar0,
            lambda_s,
            cutoff,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(invalid("omega", "must be finite and > 0"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", "must be finite and >= 0"));
        }
        if !(self.nbar0 >= 0.0 && self.nbar0.is_finite()) {
            return Err(invalid("nbar0", "must be finite and >= 0"));
        }
        if self.cutoff.levels() < self.kappa + 1 {
            return Err(invalid(
                "cutoff",
                format!(
                    "{} levels cannot hold a kappa = {} sideband pair",
                    self.cutoff.levels(),
                    self.kappa
                ),
            ));
        }
        if let SpinInverseTemperature::Finite(l) = self.lambda_s {
            if l.is_nan() {
                return Err(invalid("lambda_s", "NaN"));
            }
        }
        Ok(())
    }
}

/// Diagonal joint state `{P_up(m), P_down(m)}` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointPopulations {
    pub t: f64,
    pub p_up: Vec<f64>,
    pub p_down: Vec<f64>,
}

impl JointPopulations {
    /// Product of a spin mixture and a phonon distribution.
    pub fn product(p_up: f64, p_down: f64, phonons: &[f64]) -> Self {
        Self {
            t: 0.0,
            p_up: phonons.iter().map(|p| p_up * p).collect(),
            p_down: phonons.iter().map(|p| p_down * p).collect(),
        }
    }

    pub fn levels(&self) -> usize {
        self.p_up.len()
    }

    pub fn total(&self) -> f64 {
        self.p_up.iter().chain(&self.p_down).sum()
    }

    /// Mean phonon number `sum_m m [P_up(m) + P_down(m)]`.
    pub fn mean_phonon(&self) -> f64 {
        self.p_up
            .iter()
            .zip(&self.p_down)
            .enumerate()
            .map(|(m, (u, d))| m as f64 * (u + d))
            .sum()
    }

    /// Spin marginals `(P_up, P_down)`.
    pub fn spin_populations(&self) -> (f64, f64) {
        (self.p_up.iter().sum(), self.p_down.iter().sum())
    }

    pub fn phonon_marginal(&self) -> Vec<f64> {
        self.p_up
            .iter()
            .zip(&self.p_down)
            .map(|(u, d)| u + d)
            .collect()
    }

    /// `<J_z>` in units of hbar.
    pub fn jz(&self) -> f64 {
        let (up, down) = self.spin_populations();
        0.5 * (up - down)
    }
}

pub fn mean_phonon(state: &JointPopulations) -> f64 {
    state.mean_phonon()
}

pub fn spin_populations(state: &JointPopulations) -> (f64, f64) {
    state.spin_populations()
}

/// Work and spin-labour bookkeeping for one stage.
///
/// `work`, `heat` are in units of `hbar nu`; `spinlabour`, `spintherm` in
/// units of `hbar`. The unitless pair follows the thermal-spin convention:
/// `w_tilde_s = P_down(initial) - P_down(final)` and
/// `w_tilde_v = (nbar_final - nbar_initial) / kappa`, which coincide for the
/// sideband dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WorkLedger {
    pub work: f64,
    pub spinlabour: f64,
    pub heat: f64,
    pub spintherm: f64,
    pub w_tilde_v: f64,
    pub w_tilde_s: f64,
}

pub fn ledger(
    initial: &JointPopulations,
    final_state: &JointPopulations,
    params: &EngineParams,
) -> Result<WorkLedger> {
    if params.kappa == 0 {
        return Err(Error::Undefined(
            "unitless work W/(hbar nu kappa) needs kappa >= 1".into(),
        ));
    }
    ledger_with_kappa(initial, final_state, params.kappa)
}

pub(crate) fn ledger_with_kappa(
    initial: &JointPopulations,
    final_state: &JointPopulations,
    kappa: usize,
) -> Result<WorkLedger> {
    if initial.levels() != final_state.levels() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} levels, final state {}",
            initial.levels(),
            final_state.levels()
        )));
    }
    let dn = final_state.mean_phonon() - initial.mean_phonon();
    let work = -dn;
    let spinlabour = final_state.jz() - initial.jz();
    Ok(WorkLedger {
        work,
        spinlabour,
        heat: work,
        spintherm: -spinlabour,
        w_tilde_v: dn / kappa as f64,
        w_tilde_s: initial.spin_populations().1 - final_state.spin_populations().1,
    })
}

/// Precomputed extraction model: thermal weights plus coupling table for one
/// parameter set.
#[derive(Debug, Clone)]
pub struct RamanEngine {
    params: EngineParams,
    thermal: ThermalDistribution,
    table: CouplingTable,
}

impl RamanEngine {
    pub fn new(params: EngineParams) -> Result<Self> {
        params.validate()?;
        let thermal = fock::thermal_distribution(params.nbar0, &params.cutoff)?;
        let table = fock::coupling_table(params.eta, params.kappa, &params.cutoff)?;
        Ok(Self {
            params,
            thermal,
            table,
        })
    }

    /// Assemble from externally built tables; they must agree with `params`.
    pub fn from_parts(
        params: EngineParams,
        thermal: ThermalDistribution,
        table: CouplingTable,
    ) -> Result<Self> {
        params.validate()?;
        let levels = params.cutoff.levels();
        if table.eta != params.eta || table.kappa != params.kappa {
            return Err(Error::TableMismatch(format!(
                "table has (eta, kappa) = ({}, {}), params have ({}, {})",
                table.eta, table.kappa, params.eta, params.kappa
            )));
        }
        if table.levels() != levels || table.f_diag.len() != levels {
            return Err(Error::TableMismatch(format!(
                "table has {} levels, cutoff has {levels}",
                table.levels()
            )));
        }
        if thermal.probs.len() != levels || thermal.nbar0 != params.nbar0 {
            return Err(Error::TableMismatch(format!(
                "thermal distribution (nbar0 = {}, {} levels) does not match params (nbar0 = {}, {levels} levels)",
                thermal.nbar0,
                thermal.probs.len(),
                params.nbar0
            )));
        }
        Ok(Self {
            params,
            thermal,
            table,
        })
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn thermal(&self) -> &ThermalDistribution {
        &self.thermal
    }

    pub fn table(&self) -> &CouplingTable {
        &self.table
    }

    pub fn levels(&self) -> usize {
        self.table.levels()
    }

    pub fn initial_state(&self) -> JointPopulations {
        JointPopulations::product(
            self.params.lambda_s.p_up(),
            self.params.lambda_s.p_down(),
            &self.thermal.probs,
        )
    }

    /// Joint populations at dimensionless time `t = Omega t`.
    ///
    /// Branch `|up, m>` sends `sin^2(Omega_m t)` of its weight to
    /// `|down, m - kappa>`; branch `|down, m>` sends `sin^2(Omega_{m+kappa} t)`
    /// to `|up, m + kappa>`. Branches whose partner lies outside the cutoff
    /// are frozen.
    pub fn evolve(&self, t: f64) -> Result<JointPopulations> {
        check_time(t)?;
        let k = self.params.kappa;
        let levels = self.levels();
        let p_up0 = self.params.lambda_s.p_up();
        let p_down0 = self.params.lambda_s.p_down();
        let probs = &self.thermal.probs;
        let mut p_up = vec![0.0; levels];
        let mut p_down = vec![0.0; levels];

        for m in 0..levels {
            let a = p_up0 * probs[m];
            if m >= k {
                let (s, c) = (self.table.omega_m[m] * t).sin_cos();
                p_up[m] += a * c * c;
                p_down[m - k] += a * s * s;
            } else {
                p_up[m] += a;
            }
        }
        if p_down0 > 0.0 {
            for m in 0..levels {
                let b = p_down0 * probs[m];
                if m + k < levels {
                    let (s, c) = (self.table.omega_m[m + k] * t).sin_cos();
                    p_down[m] += b * c * c;
                    p_up[m + k] += b * s * s;
                } else {
                    p_down[m] += b;
                }
            }
        }
        Ok(JointPopulations { t, p_up, p_down })
    }

    /// Net population moved from spin up to spin down since `t = 0`.
    ///
    /// Each sideband pair `(up, m) <-> (down, m - kappa)` contributes
    /// `sin^2(Omega_m t) [p_up P(m) - p_down P(m - kappa)]`.
    pub fn net_transfer(&self, t: f64) -> f64 {
        let k = self.params.kappa;
        let p_up0 = self.params.lambda_s.p_up();
        let p_down0 = self.params.lambda_s.p_down();
        let probs = &self.thermal.probs;
        (k..self.levels())
            .map(|m| {
                let s = (self.table.omega_m[m] * t).sin();
                s * s * (p_up0 * probs[m] - p_down0 * probs[m - k])
            })
            .sum()
    }

    /// Mean phonon number at `t` without materializing the joint state.
    pub fn mean_phonon_at(&self, t: f64) -> f64 {
        self.thermal.mean() - self.params.kappa as f64 * self.net_transfer(t)
    }

    /// Entropy of the joint state during the unitary stage: every initial
    /// basis state evolves into an orthogonal pure branch, so the joint
    /// spectrum is the initial weights.
    pub fn branch_entropy(&self) -> f64 {
        let p_up0 = self.params.lambda_s.p_up();
        let p_down0 = self.params.lambda_s.p_down();
        self.thermal
            .probs
            .iter()
            .flat_map(|p| [p_up0 * p, p_down0 * p])
            .filter(|w| *w > 0.0)
            .map(|w| -w * w.ln())
            .sum()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// One-shot evolution for a parameter set.
pub fn evolve(params: &EngineParams, t: f64) -> Result<JointPopulations> {
    RamanEngine::new(*params)?.evolve(t)
}
