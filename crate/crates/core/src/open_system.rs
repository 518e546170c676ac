//! Dissipative engine stages.
//!
//! Spin reset against a perfectly polarized spin bath has an exact
//! exponential solution and is applied in closed form. Re-thermalization of
//! the motional mode is the diagonal (birth-death) reduction of the thermal
//! master equation, integrated with fixed-step RK4.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::raman::JointPopulations;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResetParams {
    /// Spin decay rate `Gamma_s`.
    pub gamma_s: f64,
    /// Stage duration in the same time unit as `1 / gamma_s`.
    pub duration: f64,
}

impl ResetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_s > 0.0 && self.gamma_s.is_finite()) {
            return Err(invalid("gamma_s", "must be finite and > 0"));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(invalid("t_reset", "duration must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermParams {
    /// Bath coupling `Gamma_H`.
    pub gamma_h: f64,
    /// Mean occupancy of the hot bath.
    pub nbar_bath: f64,
    /// Stage duration in the same time unit as `1 / gamma_h`.
    pub duration: f64,
}

impl ThermParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_h > 0.0 && self.gamma_h.is_finite()) {
            return Err(invalid("gamma_h", "must be finite and > 0"));
        }
        if !(self.nbar_bath >= 0.0 && self.nbar_bath.is_finite()) {
            return Err(invalid("nbar_bath", "must be finite and >= 0"));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(invalid("t_therm", "duration must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Closed-form solution of `rho' = Gamma_s D[|up><down|] rho` on a diagonal
/// joint state: every `P_down(m)` decays into `P_up(m)`.
pub fn spin_reset(state: &JointPopulations, params: &ResetParams) -> Result<JointPopulations> {
    params.validate()?;
    let keep = (-params.gamma_s * params.duration).exp();
    let mut out = state.clone();
    for (up, down) in out.p_up.iter_mut().zip(out.p_down.iter_mut()) {
        let moved = *down - keep * *down;
        *up += moved;
        *down -= moved;
    }
    out.t = state.t + params.duration;
    Ok(out)
}

/// Diagonal generator of the thermal master equation, reflecting at the top
/// retained level.
#[derive(Debug, Clone, Copy)]
struct BirthDeath {
    gamma_h: f64,
    nbar: f64,
}

impl BirthDeath {
    /// `dP(m)/dt = J(m-1) - J(m)` with the net upward flux
    /// `J(m) = Gamma nbar (m+1) P(m) - Gamma (nbar+1) (m+1) P(m+1)`.
    fn derivative(&self, p: &[f64], out: &mut [f64]) {
        let up = self.gamma_h * self.nbar;
        let down = self.gamma_h * (self.nbar + 1.0);
        out.fill(0.0);
        for m in 0..p.len().saturating_sub(1) {
            let k = (m + 1) as f64;
            let flux = k * (up * p[m] - down * p[m + 1]);
            out[m] -= flux;
            out[m + 1] += flux;
        }
    }

    fn rk4(&self, p: &mut [f64], h: f64, steps: usize) {
        let n = p.len();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for _ in 0..steps {
            self.derivative(p, &mut k1);
            for i in 0..n {
                tmp[i] = p[i] + 0.5 * h * k1[i];
            }
            self.derivative(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = p[i] + 0.5 * h * k2[i];
            }
            self.derivative(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = p[i] + h * k3[i];
            }
            self.derivative(&tmp, &mut k4);
            for i in 0..n {
                p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
}

const HALVING_TOL: f64 = 1e-11;
const MAX_HALVINGS: u32 = 8;

/// Diagnostics of one re-thermalization run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalizationReport {
    pub probs: Vec<f64>,
    pub steps: usize,
    pub step: f64,
    /// Max abs difference between the accepted run and the run at twice the step.
    pub halving_error: f64,
    /// Population left in the top retained level (reflecting boundary).
    pub top_level_mass: f64,
}

/// Base RK4 step `min(0.01/Gamma_H, 0.1/(Gamma_H (nbar+1) n_max))`.
pub fn rk4_step(params: &ThermParams, levels: usize) -> f64 {
    let n_max = levels.saturating_sub(1).max(1) as f64;
    (0.01 / params.gamma_h).min(0.1 / (params.gamma_h * (params.nbar_bath + 1.0) * n_max))
}

/// Integrate several independent population rows through the same
/// re-thermalization stage (rows share the generator).
pub fn rethermalize_rows(rows: &[&[f64]], params: &ThermParams) -> Result<Vec<ThermalizationReport>> {
    params.validate()?;
    let chain = BirthDeath {
        gamma_h: params.gamma_h,
        nbar: params.nbar_bath,
    };
    rows.iter()
        .map(|row| {
            for &p in row.iter() {
                if p < -1e-12 || !p.is_finite() {
                    return Err(invalid("P", format!("invalid population {p}")));
                }
            }
            if params.duration == 0.0 || row.len() < 2 {
                return Ok(ThermalizationReport {
                    probs: row.to_vec(),
                    steps: 0,
                    step: 0.0,
                    halving_error: 0.0,
                    top_level_mass: row.last().copied().unwrap_or(0.0),
                });
            }
            let h0 = rk4_step(params, row.len());
            let mut steps = (params.duration / h0).ceil().max(1.0) as usize;
            let mut coarse = row.to_vec();
            chain.rk4(&mut coarse, params.duration / steps as f64, steps);
            let mut last_err = f64::NAN;
            for _ in 0..MAX_HALVINGS {
                steps *= 2;
                let mut fine = row.to_vec();
                let h = params.duration / steps as f64;
                chain.rk4(&mut fine, h, steps);
                last_err = coarse
                    .iter()
                    .zip(&fine)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if last_err <= HALVING_TOL {
                    let top = *fine.last().unwrap();
                    return Ok(ThermalizationReport {
                        probs: fine,
                        steps,
                        step: h,
                        halving_error: last_err,
                        top_level_mass: top,
                    });
                }
                coarse = fine;
            }
            Err(Error::Convergence(format!(
                "re-thermalization over {} (Gamma_H = {}, nbar = {}, {} levels): halving difference {last_err:e} > {HALVING_TOL:e} after {steps} steps",
                params.duration,
                params.gamma_h,
                params.nbar_bath,
                row.len()
            )))
        })
        .collect()
}

/// Evolve a phonon distribution under the thermal bath for `params.duration`.
pub fn rethermalize(probs: &[f64], params: &ThermParams) -> Result<Vec<f64>> {
    Ok(rethermalize_rows(&[probs], params)?.remove(0).probs)
}

/// Re-thermalize both spin rows of a diagonal joint state; the spin marginal
/// is untouched because the bath acts on the motion only.
pub fn rethermalize_joint(state: &JointPopulations, params: &ThermParams) -> Result<JointPopulations> {
    let mut reports = rethermalize_rows(&[&state.p_up, &state.p_down], params)?;
    let p_down = reports.pop().unwrap().probs;
    let p_up = reports.pop().unwrap().probs;
    Ok(JointPopulations {
        t: state.t + params.duration,
        p_up,
        p_down,
    })
}

/// Lindblad dissipator `L rho L^dag - (L^dag L rho + rho L^dag L) / 2`.
pub fn lindblad_dissipator_apply(
    rho: &DMatrix<Complex64>,
    l: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if !rho.is_square() || !l.is_square() || rho.nrows() != l.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "rho is {}x{}, L is {}x{}",
            rho.nrows(),
            rho.ncols(),
            l.nrows(),
            l.ncols()
        )));
    }
    let l_dag = l.adjoint();
    let ldl = &l_dag * l;
    Ok(l * rho * &l_dag - (&ldl * rho + rho * &ldl) * Complex64::new(0.5, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn state(p_up: Vec<f64>, p_down: Vec<f64>) -> JointPopulations {
        JointPopulations { t: 0.0, p_up, p_down }
    }

    #[test]
    fn reset_zero_duration_is_identity() {
        let s = state(vec![0.1, 0.2], vec![0.3, 0.4]);
        let r = spin_reset(&s, &ResetParams { gamma_s: 2.0, duration: 0.0 }).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn reset_half_life() {
        let s = state(vec![0.1, 0.1], vec![0.5, 0.3]);
        let r = spin_reset(&s, &ResetParams { gamma_s: 1.0, duration: std::f64::consts::LN_2 }).unwrap();
        assert!((r.spin_populations().1 - 0.4).abs() < 1e-15);
        assert_eq!(r.phonon_marginal(), s.phonon_marginal());
        assert!((r.total() - s.total()).abs() < 1e-16);
    }

    #[test]
    fn reset_long_time_factor() {
        let s = state(vec![0.2], vec![0.8]);
        let r = spin_reset(&s, &ResetParams { gamma_s: 3.0, duration: 10.0 / 3.0 }).unwrap();
        assert!((r.p_down[0] / 0.8 - (-10.0f64).exp()).abs() < 1e-15);
        assert!(spin_reset(&s, &ResetParams { gamma_s: 1.0, duration: -1.0 }).is_err());
    }

    #[test]
    fn thermal_state_is_fixed_point() {
        let cut = fock::choose_cutoff(5.0, 1, 1e-12).unwrap();
        let th = fock::thermal_distribution(5.0, &cut).unwrap();
        let out = rethermalize(
            &th.probs,
            &ThermParams { gamma_h: 1.0, nbar_bath: 5.0, duration: 20.0 },
        )
        .unwrap();
        let drift = out.iter().zip(&th.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-9, "drift {drift}");
    }

    #[test]
    fn mean_relaxes_exponentially() {
        let cut = fock::choose_cutoff(5.0, 1, 1e-13).unwrap();
        let th = fock::thermal_distribution(4.0, &cut).unwrap();
        let out = rethermalize(
            &th.probs,
            &ThermParams { gamma_h: 2.0, nbar_bath: 5.0, duration: std::f64::consts::LN_2 / 2.0 },
        )
        .unwrap();
        let mean: f64 = out.iter().enumerate().map(|(m, p)| m as f64 * p).sum();
        assert!((mean - 4.5).abs() < 4.5e-6);
    }

    #[test]
    fn detailed_balance_of_converged_state() {
        let levels = 120;
        let mut p = vec![0.0; levels];
        p[0] = 1.0;
        let out = rethermalize(&p, &ThermParams { gamma_h: 1.0, nbar_bath: 3.0, duration: 40.0 }).unwrap();
        for m in 0..40 {
            let lhs = 4.0 * (m + 1) as f64 * out[m + 1];
            let rhs = 3.0 * (m + 1) as f64 * out[m];
            assert!(((lhs - rhs) / rhs).abs() < 1e-8, "m = {m}");
        }
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(out.iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn joint_rethermalization_keeps_spin_marginal() {
        let cut = fock::choose_cutoff(2.0, 1, 1e-12).unwrap();
        let lev = cut.levels();
        let mut s = JointPopulations::product(0.7, 0.3, &fock::thermal_distribution(0.5, &cut).unwrap().probs);
        s.p_down[lev - 1] = 0.0;
        let before = s.spin_populations();
        let out = rethermalize_joint(&s, &ThermParams { gamma_h: 1.0, nbar_bath: 2.0, duration: 3.0 }).unwrap();
        let after = out.spin_populations();
        assert!((before.0 - after.0).abs() < 1e-14 && (before.1 - after.1).abs() < 1e-14);
    }

    #[test]
    fn dissipator_examples() {
        let rho = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.0), c(1.0)]));
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(lindblad_dissipator_apply(&rho, &zero).unwrap(), DMatrix::zeros(2, 2));

        // basis (up, down); L = |up><down|
        let mut l = DMatrix::zeros(2, 2);
        l[(0, 1)] = c(1.0);
        let d = lindblad_dissipator_apply(&rho, &l).unwrap();
        assert_eq!(d[(0, 0)], c(1.0));
        assert_eq!(d[(1, 1)], c(-1.0));
        assert_eq!(d[(0, 1)], c(0.0));

        assert!(lindblad_dissipator_apply(&DMatrix::zeros(3, 3), &l).is_err());
    }
}
