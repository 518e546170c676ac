//! Von Neumann entropies of the (diagonal) reduced states and the
//! thermal-final-state bound on extractable work. All entropies in nats.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::raman::JointPopulations;

const PROB_TOL: f64 = 1e-12;

fn xlnx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `-p ln p - (1 - p) ln(1 - p)` with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
        return Err(invalid("p", format!("probability outside [0, 1]: {p}")));
    }
    let p = p.clamp(0.0, 1.0);
    Ok(-xlnx(p) - xlnx(1.0 - p))
}

/// Shannon entropy of a population vector (the von Neumann entropy of the
/// corresponding diagonal density matrix).
pub fn distribution_entropy(probs: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    let mut total = 0.0;
    for &p in probs {
        if p < -PROB_TOL || p.is_nan() {
            return Err(invalid("P", format!("negative population {p}")));
        }
        total += p;
        s -= xlnx(p);
    }
    if total > 1.0 + 1e-9 {
        return Err(invalid("P", format!("populations sum to {total} > 1")));
    }
    Ok(s)
}

/// Entropy of a thermal phonon state with mean `nbar`:
/// `(nbar + 1) ln(nbar + 1) - nbar ln nbar`.
pub fn thermal_entropy(nbar: f64) -> Result<f64> {
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(invalid("nbar", format!("must be finite and >= 0, got {nbar}")));
    }
    if nbar == 0.0 {
        return Ok(0.0);
    }
    Ok(nbar.ln_1p() + nbar * (1.0 / nbar).ln_1p())
}

/// Upper end of the physical `P_down` domain, `min(1, nbar0 / kappa)`.
pub fn pdown_domain(nbar0: f64, kappa: usize) -> f64 {
    if kappa == 0 {
        1.0
    } else {
        (nbar0 / kappa as f64).min(1.0)
    }
}

/// `Delta S_spin + Delta S_vib` after extracting `p_down`, assuming the final
/// phonon state is thermal with `nbar0 - kappa p_down`.
pub fn subadd_lhs_thermal(p_down: f64, nbar0: f64, kappa: usize) -> Result<f64> {
    if !(nbar0 >= 0.0 && nbar0.is_finite()) {
        return Err(invalid("nbar0", format!("must be finite and >= 0, got {nbar0}")));
    }
    let upper = pdown_domain(nbar0, kappa);
    if !(0.0..=upper).contains(&p_down) {
        return Err(invalid(
            "p_down",
            format!("{p_down} outside the physical domain [0, {upper}]"),
        ));
    }
    if p_down == 0.0 {
        return Ok(0.0);
    }
    let nbar_f = (nbar0 - kappa as f64 * p_down).max(0.0);
    Ok(binary_entropy(p_down)? + thermal_entropy(nbar_f)? - thermal_entropy(nbar0)?)
}

const BOUND_SCAN_POINTS: usize = 1024;
const BOUND_TOL: f64 = 1e-12;

/// Largest `P_down` allowed by sub-additivity under the thermal-final-state
/// assumption. Returns the domain edge when the left-hand side never turns
/// negative, and 0 when there is no energy to extract.
pub fn max_pdown_bound(nbar0: f64, kappa: usize) -> Result<f64> {
    if !(nbar0 >= 0.0 && nbar0.is_finite()) {
        return Err(invalid("nbar0", format!("must be finite and >= 0, got {nbar0}")));
    }
    if kappa == 0 {
        return Err(invalid("kappa", "the bound needs kappa >= 1"));
    }
    if nbar0 == 0.0 {
        return Ok(0.0);
    }
    let upper = pdown_domain(nbar0, kappa);
    let lhs = |p: f64| subadd_lhs_thermal(p, nbar0, kappa);
    if lhs(upper)? >= 0.0 {
        return Ok(upper);
    }
    // Outermost sign change on a uniform grid, scanning down from the edge.
    let step = upper / BOUND_SCAN_POINTS as f64;
    let mut hi = upper;
    let mut lo = None;
    for i in (1..BOUND_SCAN_POINTS).rev() {
        let p = i as f64 * step;
        if lhs(p)? >= 0.0 {
            lo = Some(p);
            break;
        }
        hi = p;
    }
    let Some(mut lo) = lo else {
        // Negative everywhere on the grid: the root sits below the first node.
        let mut lo = 0.0;
        let mut hi = step;
        while hi - lo > BOUND_TOL {
            let mid = 0.5 * (lo + hi);
            if lhs(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Ok(lo);
    };
    while hi - lo > BOUND_TOL {
        let mid = 0.5 * (lo + hi);
        if lhs(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Marginal and joint entropies of one sampled state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropySample {
    pub t: f64,
    pub s_spin: f64,
    pub s_vib: f64,
    /// `Delta S_spin + Delta S_vib` relative to the first sample.
    pub lhs_subadd: f64,
}

pub fn spin_entropy(state: &JointPopulations) -> Result<f64> {
    let (up, down) = state.spin_populations();
    distribution_entropy(&[up, down])
}

pub fn vibrational_entropy(state: &JointPopulations) -> Result<f64> {
    distribution_entropy(&state.phonon_marginal())
}

/// Entropy of the full diagonal joint distribution. Exact for states without
/// spin-phonon coherences (after the dissipative stages).
pub fn joint_diagonal_entropy(state: &JointPopulations) -> Result<f64> {
    let mut all = state.p_up.clone();
    all.extend_from_slice(&state.p_down);
    distribution_entropy(&all)
}

pub fn entropy_trace(states: &[JointPopulations]) -> Result<Vec<EntropySample>> {
    let Some(first) = states.first() else {
        return Ok(Vec::new());
    };
    let s0 = spin_entropy(first)?;
    let v0 = vibrational_entropy(first)?;
    states
        .iter()
        .map(|st| {
            let s_spin = spin_entropy(st)?;
            let s_vib = vibrational_entropy(st)?;
            Ok(EntropySample {
                t: st.t,
                s_spin,
                s_vib,
                lhs_subadd: (s_spin - s0) + (s_vib - v0),
            })
        })
        .collect()
}
