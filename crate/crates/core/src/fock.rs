//! Truncated Fock-space primitives.
//!
//! Everything downstream works on the phonon levels `|0>, ..., |n_max>` of a
//! single motional mode. This module owns the cutoff policy, the initial
//! thermal distribution, the generalized Laguerre polynomials and the
//! sideband coupling table built from them.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Retained Fock levels `|0>..|n_max>` together with the thermal tail mass
/// that was allowed to fall outside them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FockCutoff {
    levels: usize,
    tail_eps: f64,
}

impl FockCutoff {
    pub fn new(levels: usize, tail_eps: f64) -> Result<Self> {
        if levels == 0 {
            return Err(invalid("levels", "at least one Fock level is required"));
        }
        check_tail_eps(tail_eps)?;
        Ok(Self { levels, tail_eps })
    }

    /// Number of retained levels.
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Highest retained Fock index.
    pub fn n_max(&self) -> usize {
        self.levels - 1
    }

    pub fn tail_eps(&self) -> f64 {
        self.tail_eps
    }
}

fn check_tail_eps(tail_eps: f64) -> Result<()> {
    if !(tail_eps > 0.0 && tail_eps < 1.0) {
        return Err(invalid(
            "tail_eps",
            format!("must lie strictly inside (0, 1), got {tail_eps}"),
        ));
    }
    Ok(())
}

fn check_nbar(nbar: f64) -> Result<()> {
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(invalid(
            "nbar0",
            format!("mean phonon number must be finite and >= 0, got {nbar}"),
        ));
    }
    Ok(())
}

/// Boltzmann ratio `e^{-beta hbar nu} = nbar / (nbar + 1)`.
pub fn boltzmann_ratio(nbar: f64) -> f64 {
    nbar / (nbar + 1.0)
}

/// Smallest number of retained levels whose discarded geometric tail
/// `q^levels` is below `tail_eps`, floored at `kappa + 1` so that at least one
/// pair `(m, m + kappa)` is representable.
pub fn choose_cutoff(nbar0: f64, kappa: usize, tail_eps: f64) -> Result<FockCutoff> {
    check_nbar(nbar0)?;
    check_tail_eps(tail_eps)?;
    let floor = kappa + 1;
    let q = boltzmann_ratio(nbar0);
    if q == 0.0 {
        return FockCutoff::new(floor, tail_eps);
    }
    let ln_q = q.ln();
    let tail = |levels: usize| (levels as f64 * ln_q).exp();
    let mut levels = ((tail_eps.ln() / ln_q).floor() as usize).max(1);
    while levels > 1 && tail(levels - 1) < tail_eps {
        levels -= 1;
    }
    while tail(levels) >= tail_eps {
        levels += 1;
    }
    FockCutoff::new(levels.max(floor), tail_eps)
}

/// Thermal phonon populations on the retained levels.
///
/// Stored without renormalization: the missing mass is the geometric tail and
/// stays below `tail_eps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalDistribution {
    pub nbar0: f64,
    /// `beta hbar nu`; infinite for the ground state.
    pub beta_hnu: f64,
    pub probs: Vec<f64>,
    pub tail_eps: f64,
}

impl ThermalDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(m, p)| m as f64 * p)
            .sum()
    }
}

/// Inverse vibrational temperature `beta hbar nu = ln(1 + 1/nbar)`.
pub fn beta_hnu(nbar: f64) -> f64 {
    if nbar == 0.0 {
        f64::INFINITY
    } else {
        (1.0 / nbar).ln_1p()
    }
}

pub fn thermal_distribution(nbar0: f64, cutoff: &FockCutoff) -> Result<ThermalDistribution> {
    check_nbar(nbar0)?;
    Ok(ThermalDistribution {
        nbar0,
        beta_hnu: beta_hnu(nbar0),
        probs: thermal_probs(nbar0, cutoff.levels()),
        tail_eps: cutoff.tail_eps(),
    })
}

pub(crate) fn thermal_probs(nbar: f64, levels: usize) -> Vec<f64> {
    let q = boltzmann_ratio(nbar);
    let mut probs = Vec::with_capacity(levels);
    let mut p = 1.0 - q;
    for _ in 0..levels {
        probs.push(p);
        p *= q;
    }
    probs
}

/// Generalized Laguerre polynomial `L_n^kappa(x)` by the three-term
/// recurrence in `n`.
pub fn laguerre(n: usize, kappa: usize, x: f64) -> f64 {
    let a = kappa as f64;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + a - x) * cur - (k + a) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `L_0^kappa(x), ..., L_{count-1}^kappa(x)` in one recurrence pass.
pub fn laguerre_sequence(count: usize, kappa: usize, x: f64) -> Vec<f64> {
    let a = kappa as f64;
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(1.0);
    if count == 1 {
        return out;
    }
    out.push(1.0 + a - x);
    for k in 1..count - 1 {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * out[k] - (kf + a) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// `m! / (m - kappa)!` as a running product of `kappa` factors.
pub fn falling_factorial(m: usize, kappa: usize) -> f64 {
    debug_assert!(m >= kappa);
    (0..kappa).map(|j| (m - j) as f64).product()
}

/// Diagonal elements of `f_kappa(a^dag a)` and the effective sideband Rabi
/// frequencies, both on the retained levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingTable {
    pub eta: f64,
    pub kappa: usize,
    /// `f_kappa^{(n)}` for `n = 0..=n_max`.
    pub f_diag: Vec<f64>,
    /// `Omega_m / Omega` for `m = 0..=n_max`; exactly zero below `kappa`.
    pub omega_m: Vec<f64>,
}

impl CouplingTable {
    pub fn levels(&self) -> usize {
        self.omega_m.len()
    }
}

pub fn coupling_table(eta: f64, kappa: usize, cutoff: &FockCutoff) -> Result<CouplingTable> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(invalid("eta", format!("must be finite and >= 0, got {eta}")));
    }
    let levels = cutoff.levels();
    let x = eta * eta;
    let damping = (-0.5 * x).exp();
    let f_diag: Vec<f64> = laguerre_sequence(levels, kappa, x)
        .into_iter()
        .enumerate()
        .map(|(n, lag)| damping * lag / falling_factorial(n + kappa, kappa))
        .collect();
    let eta_k = eta.powi(kappa as i32);
    let omega_m = (0..levels)
        .map(|m| {
            if m < kappa {
                0.0
            } else {
                eta_k * falling_factorial(m, kappa).sqrt() * f_diag[m - kappa]
            }
        })
        .collect();
    Ok(CouplingTable {
        eta,
        kappa,
        f_diag,
        omega_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};

    fn rational(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn factorial(n: usize) -> BigInt {
        (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
    }

    /// Alternating-sum definition evaluated exactly in rationals.
    fn laguerre_exact(n: usize, kappa: usize, x: &BigRational) -> BigRational {
        let mut sum = BigRational::zero();
        let mut x_pow = BigRational::one();
        for l in 0..=n {
            let num = factorial(n + kappa);
            let den = factorial(kappa + l) * factorial(n - l) * factorial(l);
            let term = x_pow.clone() * BigRational::new(num, den);
            if l % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
            x_pow *= x.clone();
        }
        sum
    }

    fn direct_tail(nbar: f64, levels: usize) -> f64 {
        let q = boltzmann_ratio(nbar);
        (levels..levels + 20_000)
            .map(|m| (1.0 - q) * q.powi(m as i32))
            .sum()
    }

    #[test]
    fn cutoff_zero_temperature() {
        let c = choose_cutoff(0.0, 1, 1e-12).unwrap();
        assert_eq!(c.levels(), 2);
        assert_eq!(c.n_max(), 1);
    }

    #[test]
    fn cutoff_matches_direct_tail_summation() {
        let oracle = (1..)
            .find(|&levels| direct_tail(5.0, levels) < 1e-12)
            .unwrap();
        assert_eq!(oracle, 152);
        assert_eq!(choose_cutoff(5.0, 1, 1e-12).unwrap().levels(), 152);
    }

    #[test]
    fn cutoff_degenerate_tolerances() {
        assert_eq!(choose_cutoff(1.0, 1, 0.5).unwrap().levels(), 2);
        assert!(choose_cutoff(1.0, 1, 1.0).is_err());
        assert!(choose_cutoff(1.0, 1, 0.0).is_err());
        assert!(choose_cutoff(-1.0, 1, 1e-3).is_err());
    }

    #[test]
    fn cutoff_respects_kappa_floor() {
        assert_eq!(choose_cutoff(0.01, 10, 1e-3).unwrap().levels(), 11);
    }

    #[test]
    fn thermal_examples() {
        let cut = FockCutoff::new(3, 0.2).unwrap();
        let th = thermal_distribution(1.0, &cut).unwrap();
        assert_eq!(th.probs, vec![0.5, 0.25, 0.125]);

        let th = thermal_distribution(0.0, &cut).unwrap();
        assert_eq!(th.probs, vec![1.0, 0.0, 0.0]);
        assert!(th.beta_hnu.is_infinite());

        let cut = choose_cutoff(5.0, 1, 1e-12).unwrap();
        let th = thermal_distribution(5.0, &cut).unwrap();
        let direct: f64 = (0..cut.levels())
            .map(|m| m as f64 * (1.0 / 6.0) * (5.0f64 / 6.0).powi(m as i32))
            .sum();
        assert!((th.mean() - 5.0).abs() < 1e-12 * cut.n_max() as f64);
        assert!((th.mean() - direct).abs() < 1e-12);
        assert!(1.0 - th.total() < 1e-12);
        assert!(thermal_distribution(-0.1, &cut).is_err());
    }

    #[test]
    fn laguerre_low_orders() {
        for kappa in 0..6 {
            assert_eq!(laguerre(0, kappa, 3.7), 1.0);
        }
        assert_eq!(laguerre(1, 1, 2.0), 0.0);
    }

    #[test]
    fn laguerre_matches_exact_alternating_sum() {
        let x = rational(4, 25);
        let exact = laguerre_exact(20, 1, &x).to_f64().unwrap();
        let got = laguerre(20, 1, 0.16);
        assert!(((got - exact) / exact).abs() < 1e-12, "{got} vs {exact}");

        for (n, kappa, num, den) in [(35, 3, 1, 1), (60, 5, 36, 25), (12, 10, 1, 100)] {
            let exact = laguerre_exact(n, kappa, &rational(num, den)).to_f64().unwrap();
            let got = laguerre(n, kappa, num as f64 / den as f64);
            assert!(
                (got - exact).abs() < 1e-11 * exact.abs().max(1.0),
                "L_{n}^{kappa}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn laguerre_sequence_agrees_with_single_evaluation() {
        let seq = laguerre_sequence(40, 2, 0.81);
        for (n, v) in seq.iter().enumerate() {
            assert_eq!(*v, laguerre(n, 2, 0.81));
        }
    }

    #[test]
    fn coupling_at_zero_eta() {
        let cut = FockCutoff::new(30, 1e-6).unwrap();
        for kappa in 0..5 {
            let t = coupling_table(0.0, kappa, &cut).unwrap();
            let inv_fact = 1.0 / falling_factorial(kappa, kappa);
            for f in &t.f_diag {
                assert!((f - inv_fact).abs() < 1e-13 * inv_fact);
            }
        }
    }

    #[test]
    fn coupling_jaynes_cummings_limit() {
        let cut = FockCutoff::new(11, 1e-6).unwrap();
        let t = coupling_table(0.01, 1, &cut).unwrap();
        assert_eq!(t.omega_m[0], 0.0);
        for m in 1..=10 {
            let jc = 0.01 * (m as f64).sqrt();
            assert!(((t.omega_m[m] - jc) / jc).abs() < 1e-3);
        }
    }

    #[test]
    fn coupling_matches_direct_formula() {
        let cut = FockCutoff::new(8, 1e-6).unwrap();
        let t = coupling_table(0.4, 1, &cut).unwrap();
        // Omega_5 = eta sqrt(5) e^{-eta^2/2} 4!/5! L_4^1(eta^2)
        let lag = laguerre_exact(4, 1, &rational(4, 25)).to_f64().unwrap();
        let direct = 0.4 * 5f64.sqrt() * (-0.08f64).exp() * lag / 5.0;
        assert!(((t.omega_m[5] - direct) / direct).abs() < 1e-12);
    }

    #[test]
    fn coupling_zero_below_kappa_and_sign_follows_laguerre() {
        let cut = FockCutoff::new(200, 1e-6).unwrap();
        for kappa in [1usize, 3, 5, 10] {
            let t = coupling_table(0.9, kappa, &cut).unwrap();
            assert!(t.omega_m[..kappa].iter().all(|&w| w == 0.0));
            for (n, f) in t.f_diag.iter().enumerate() {
                let l = laguerre(n, kappa, 0.81);
                assert_eq!(f.signum(), l.signum());
                assert!(f.is_finite());
            }
        }
    }

    #[test]
    fn large_levels_stay_finite() {
        let cut = FockCutoff::new(900, 1e-12).unwrap();
        let t = coupling_table(1.2, 10, &cut).unwrap();
        assert!(t.omega_m.iter().chain(&t.f_diag).all(|v| v.is_finite()));
    }

    proptest::proptest! {
        #[test]
        fn cutoff_is_monotone(nbar in 0.0f64..40.0, dn in 0.0f64..5.0, e in 1e-14f64..0.5, k in 0usize..12) {
            let base = choose_cutoff(nbar, k, e).unwrap().levels();
            proptest::prop_assert!(choose_cutoff(nbar + dn, k, e).unwrap().levels() >= base);
            proptest::prop_assert!(choose_cutoff(nbar, k, e * 0.1).unwrap().levels() >= base);
        }

        #[test]
        fn thermal_mass_within_tail(nbar in 0.0f64..40.0, e in 1e-13f64..0.1) {
            let cut = choose_cutoff(nbar, 1, e).unwrap();
            let total = thermal_distribution(nbar, &cut).unwrap().total();
            proptest::prop_assert!(total <= 1.0 + 1e-14);
            proptest::prop_assert!(total >= 1.0 - e - 1e-14);
        }
    }
}
