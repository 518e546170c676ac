//! Brute-force reference dynamics on the truncated spin (x) Fock space.
//!
//! Nothing here is used on the engine path. Dense Hamiltonians are built
//! from ladder operators, propagated through a Hermitian eigendecomposition
//! and compared against the closed forms in [`crate::raman`] and
//! [`crate::open_system`]. Basis ordering: index `s * levels + m` with spin
//! `s = 0` for up and `s = 1` for down.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fock::{self, FockCutoff};
use crate::open_system::{self, ResetParams, ThermParams};
use crate::raman::{EngineParams, JointPopulations, RamanEngine, SpinInverseTemperature};
use crate::sweep::{self, TimeScan};

/// Largest Fock space the dense oracle accepts (levels `0..=160`).
pub const MAX_ORACLE_LEVELS: usize = 161;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub matrix: DMatrix<Complex64>,
}

impl DenseOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `max |H - H^dag|`.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }
}

pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |U^dag U - I|`.
pub fn unitarity_error(u: &DMatrix<Complex64>) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - DMatrix::identity(n, n)))
}

pub fn annihilation(levels: usize) -> DMatrix<Complex64> {
    let mut a = DMatrix::zeros(levels, levels);
    for m in 1..levels {
        a[(m - 1, m)] = Complex64::new((m as f64).sqrt(), 0.0);
    }
    a
}

fn check_levels(levels: usize) -> Result<()> {
    if levels > MAX_ORACLE_LEVELS {
        return Err(Error::DimensionMismatch(format!(
            "dense oracle is capped at {MAX_ORACLE_LEVELS} Fock levels, got {levels}"
        )));
    }
    Ok(())
}

/// Place `up_down` at `<up|.|down>` and `down_up` at `<down|.|up>`.
fn spin_offdiag(up_down: &DMatrix<Complex64>, down_up: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let l = up_down.nrows();
    let mut h = DMatrix::zeros(2 * l, 2 * l);
    h.view_mut((0, l), (l, l)).copy_from(up_down);
    h.view_mut((l, 0), (l, l)).copy_from(down_up);
    h
}

/// Sideband operator `d = f_kappa(n) (i eta a)^kappa` on the truncated space.
pub fn sideband_operator(eta: f64, kappa: usize, cutoff: &FockCutoff) -> Result<DMatrix<Complex64>> {
    let levels = cutoff.levels();
    let table = fock::coupling_table(eta, kappa, cutoff)?;
    let a = annihilation(levels);
    let mut a_pow = DMatrix::identity(levels, levels);
    for _ in 0..kappa {
        a_pow = &a_pow * &a;
    }
    let f = DMatrix::from_diagonal(&DVector::from_iterator(
        levels,
        table.f_diag.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    Ok(f * a_pow * (I * eta).powi(kappa as i32))
}

/// `H = -(d^dag |up><down| + d |down><up|)` in units of `hbar Omega`, so that
/// propagation time is `Omega t`.
pub fn build_effective_hamiltonian(params: &EngineParams) -> Result<DenseOperator> {
    params.validate()?;
    check_levels(params.cutoff.levels())?;
    let d = sideband_operator(params.eta, params.kappa, &params.cutoff)?;
    let h = spin_offdiag(&(-d.adjoint()), &(-d));
    Ok(DenseOperator { matrix: h })
}

/// Diagonal initial density matrix `rho_s (x) rho_thermal`.
pub fn initial_populations(params: &EngineParams) -> Result<Vec<f64>> {
    let th = fock::thermal_distribution(params.nbar0, &params.cutoff)?;
    let s = JointPopulations::product(params.lambda_s.p_up(), params.lambda_s.p_down(), &th.probs);
    Ok(s.p_up.into_iter().chain(s.p_down).collect())
}

/// Cached eigendecomposition `H = V diag(E) V^dag`.
pub struct HermitianPropagator {
    energies: Vec<f64>,
    vecs: DMatrix<Complex64>,
    vr_t: DMatrix<f64>,
    vi_t: DMatrix<f64>,
}

impl HermitianPropagator {
    pub fn new(h: &DenseOperator) -> Result<Self> {
        let scale = max_abs(&h.matrix).max(1.0);
        let herm = h.hermiticity_error();
        if herm > 1e-12 * scale {
            return Err(invalid("H", format!("not Hermitian: max |H - H^dag| = {herm:e}")));
        }
        let eig = SymmetricEigen::new(h.matrix.clone());
        let vecs = eig.eigenvectors;
        let vr_t = vecs.map(|z| z.re).transpose();
        let vi_t = vecs.map(|z| z.im).transpose();
        Ok(Self {
            energies: eig.eigenvalues.iter().copied().collect(),
            vecs,
            vr_t,
            vi_t,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Real and imaginary parts of `U(t) = V e^{-iEt} V^dag`, assembled with
    /// real matrix products.
    fn unitary_parts(&self, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim();
        let mut wr = DMatrix::zeros(n, n);
        let mut wi = DMatrix::zeros(n, n);
        for l in 0..n {
            let phase = Complex64::from_polar(1.0, -self.energies[l] * t);
            for k in 0..n {
                let w = self.vecs[(k, l)] * phase;
                wr[(k, l)] = w.re;
                wi[(k, l)] = w.im;
            }
        }
        let ur = &wr * &self.vr_t + &wi * &self.vi_t;
        let ui = &wi * &self.vr_t - &wr * &self.vi_t;
        (ur, ui)
    }

    pub fn unitary(&self, t: f64) -> DMatrix<Complex64> {
        let (ur, ui) = self.unitary_parts(t);
        DMatrix::from_fn(self.dim(), self.dim(), |r, c| Complex64::new(ur[(r, c)], ui[(r, c)]))
    }

    /// `U rho0 U^dag`.
    pub fn evolve(&self, rho0: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
        let u = self.unitary(t);
        &u * rho0 * u.adjoint()
    }

    /// Diagonal of `U diag(p0) U^dag`.
    pub fn populations(&self, p0: &[f64], t: f64) -> Vec<f64> {
        let (ur, ui) = self.unitary_parts(t);
        let n = self.dim();
        (0..n)
            .map(|k| {
                p0.iter()
                    .enumerate()
                    .filter(|(_, p)| **p != 0.0)
                    .map(|(j, p)| p * (ur[(k, j)].powi(2) + ui[(k, j)].powi(2)))
                    .sum()
            })
            .collect()
    }
}

/// `rho(t) = e^{-iHt} rho0 e^{iHt}`.
pub fn evolve_dense(h: &DenseOperator, rho0: &DMatrix<Complex64>, t: f64) -> Result<DMatrix<Complex64>> {
    if rho0.nrows() != h.dim() || rho0.ncols() != h.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rho0 is {}x{}, H is {}x{}",
            rho0.nrows(),
            rho0.ncols(),
            h.dim(),
            h.dim()
        )));
    }
    Ok(HermitianPropagator::new(h)?.evolve(rho0, t))
}

fn split_populations(p: Vec<f64>, t: f64) -> JointPopulations {
    let levels = p.len() / 2;
    let mut p_up = p;
    let p_down = p_up.split_off(levels);
    JointPopulations { t, p_up, p_down }
}

/// Dense-propagated joint populations of the effective model at each time.
pub fn dense_joint_populations(params: &EngineParams, times: &[f64]) -> Result<Vec<JointPopulations>> {
    let h = build_effective_hamiltonian(params)?;
    let prop = HermitianPropagator::new(&h)?;
    let p0 = initial_populations(params)?;
    Ok(times
        .iter()
        .map(|&t| split_populations(prop.populations(&p0, t), t))
        .collect())
}

/// Closed-form propagator `cos(t sqrt(d^dag d))`, `i d^dag sin(...)/sqrt(...)`
/// blocks of the effective model, built from the diagonal operators
/// `d^dag d` and `d d^dag`.
pub fn closed_form_unitary(params: &EngineParams, t: f64) -> Result<DMatrix<Complex64>> {
    let levels = params.cutoff.levels();
    let d = sideband_operator(params.eta, params.kappa, &params.cutoff)?;
    let dd = d.adjoint() * &d;
    let ddag = &d * d.adjoint();
    let cos_of = |m: &DMatrix<Complex64>| {
        DMatrix::from_diagonal(&DVector::from_iterator(
            levels,
            (0..levels).map(|k| Complex64::new((t * m[(k, k)].re.max(0.0).sqrt()).cos(), 0.0)),
        ))
    };
    let sinc_of = |m: &DMatrix<Complex64>| {
        DMatrix::from_diagonal(&DVector::from_iterator(
            levels,
            (0..levels).map(|k| {
                let w = m[(k, k)].re.max(0.0).sqrt();
                let v = if w == 0.0 { t } else { (t * w).sin() / w };
                Complex64::new(v, 0.0)
            }),
        ))
    };
    let up_up = cos_of(&dd);
    let down_down = cos_of(&ddag);
    let up_down = d.adjoint() * sinc_of(&ddag) * I;
    let down_up = &d * sinc_of(&dd) * I;
    let mut u = spin_offdiag(&up_down, &down_up);
    u.view_mut((0, 0), (levels, levels)).copy_from(&up_up);
    u.view_mut((levels, levels), (levels, levels)).copy_from(&down_down);
    Ok(u)
}

/// Parameters of the two-level model after adiabatic elimination of the
/// excited level, in units of the trap frequency `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdiabaticParams {
    pub omega1: f64,
    pub omega2: f64,
    pub delta_big: f64,
    pub delta_small: f64,
    pub nu: f64,
    pub eta: f64,
}

impl AdiabaticParams {
    pub fn raman_rate(&self) -> f64 {
        self.omega1 * self.omega2 / self.delta_big
    }

    /// Stark-shifted two-photon detuning `delta' = delta - Omega1^2/Delta + Omega2^2/Delta`.
    pub fn shifted_detuning(&self) -> f64 {
        self.delta_small - self.omega1.powi(2) / self.delta_big + self.omega2.powi(2) / self.delta_big
    }

    /// Equal beam intensities, `Delta = 1000 nu`, two-photon detuning on the
    /// `kappa`-th red sideband and Raman rate `ratio * nu`. Returns the matched
    /// effective parameters as well.
    pub fn resonant(eff: &EngineParams, nu: f64, ratio: f64) -> (Self, EngineParams) {
        let omega = ratio * nu;
        let delta_big = 1000.0 * nu;
        let beam = (omega * delta_big).sqrt();
        let adia = Self {
            omega1: beam,
            omega2: beam,
            delta_big,
            delta_small: eff.kappa as f64 * nu,
            nu,
            eta: eff.eta,
        };
        (adia, EngineParams { omega, ..*eff })
    }
}

/// Dense `exp(i eta (a + a^dag))` on the truncated space.
pub fn displacement(eta: f64, levels: usize) -> DMatrix<Complex64> {
    let mut x = DMatrix::<f64>::zeros(levels, levels);
    for m in 1..levels {
        let s = (m as f64).sqrt();
        x[(m - 1, m)] = s;
        x[(m, m - 1)] = s;
    }
    let eig = SymmetricEigen::new(x);
    let v = eig.eigenvectors.map(|r| Complex64::new(r, 0.0));
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        levels,
        eig.eigenvalues.iter().map(|&e| Complex64::from_polar(1.0, eta * e)),
    ));
    &v * phases * v.transpose()
}

/// `H_adia` including the trap energy, the Stark shifts and the full
/// displacement coupling, in units of `hbar`.
pub fn build_adiabatic_hamiltonian(params: &AdiabaticParams, cutoff: &FockCutoff) -> Result<DenseOperator> {
    let levels = cutoff.levels();
    check_levels(levels)?;
    let d_plus = displacement(params.eta, levels);
    let coupling = Complex64::new(-params.raman_rate(), 0.0);
    let mut h = spin_offdiag(&(d_plus.adjoint() * coupling), &(d_plus * coupling));
    let stark_down = params.omega1.powi(2) / params.delta_big;
    let stark_up = params.omega2.powi(2) / params.delta_big + params.delta_small;
    for m in 0..levels {
        let trap = params.nu * m as f64;
        h[(m, m)] = Complex64::new(trap - stark_up, 0.0);
        h[(levels + m, levels + m)] = Complex64::new(trap - stark_down, 0.0);
    }
    Ok(DenseOperator { matrix: h })
}

/// Max joint-population deviation `|P^adia(s, m) - P^eff(s, m)|` over the
/// sampled `Omega t` values.
///
/// The adiabatic model is propagated in the frame where its diagonal part
/// (trap energy and Stark-shifted spin energies) is kept in the Hamiltonian;
/// the effective model is its interaction picture with respect to that same
/// diagonal part. Populations are frame independent, so they compare
/// directly.
pub fn compare_adiabatic_vs_effective(
    adia: &AdiabaticParams,
    eff: &EngineParams,
    t_samples: &[f64],
) -> Result<f64> {
    let omega = adia.raman_rate();
    if (adia.eta - eff.eta).abs() > 0.0 {
        return Err(invalid("eta", format!("adiabatic eta {} != effective eta {}", adia.eta, eff.eta)));
    }
    if ((omega - eff.omega) / eff.omega).abs() > 1e-12 {
        return Err(invalid(
            "omega",
            format!("Omega1 Omega2 / Delta = {omega} but effective Omega = {}", eff.omega),
        ));
    }
    let target = eff.kappa as f64 * adia.nu;
    if (adia.shifted_detuning() - target).abs() > 1e-12 * adia.nu.max(1.0) {
        return Err(invalid(
            "delta",
            format!("shifted detuning {} != kappa nu = {target}", adia.shifted_detuning()),
        ));
    }
    if omega == 0.0 {
        return Ok(0.0);
    }
    let h = build_adiabatic_hamiltonian(adia, &eff.cutoff)?;
    let prop = HermitianPropagator::new(&h)?;
    let p0 = initial_populations(eff)?;
    let engine = RamanEngine::new(*eff)?;
    let mut worst: f64 = 0.0;
    for &tau in t_samples {
        let adia_pop = prop.populations(&p0, tau / omega);
        let eff_pop = engine.evolve(tau)?;
        for (a, e) in adia_pop.iter().zip(eff_pop.p_up.iter().chain(&eff_pop.p_down)) {
            worst = worst.max((a - e).abs());
        }
    }
    Ok(worst)
}

/// Dissipator with its rate.
pub struct Dissipator {
    pub rate: f64,
    pub op: DMatrix<Complex64>,
}

fn lindblad_rhs(
    h: &DMatrix<Complex64>,
    diss: &[(f64, DMatrix<Complex64>, DMatrix<Complex64>, DMatrix<Complex64>)],
    rho: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let mut out = (h * rho - rho * h) * (-I);
    for (rate, l, l_dag, ldl) in diss {
        let half = Complex64::new(0.5, 0.0);
        out += (l * rho * l_dag - (ldl * rho + rho * ldl) * half) * Complex64::new(*rate, 0.0);
    }
    out
}

const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Tolerances of the adaptive Lindblad integrator.
#[derive(Debug, Clone, Copy)]
pub struct LindbladTolerance {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
}

impl Default for LindbladTolerance {
    fn default() -> Self {
        Self {
            atol: 1e-13,
            rtol: 1e-11,
            max_steps: 2_000_000,
        }
    }
}

/// Integrate `rho' = -i[H, rho] + sum_k rate_k D[L_k] rho` with an adaptive
/// Dormand-Prince 5(4) scheme. `H` may be `None` for a purely dissipative
/// evolution.
pub fn evolve_lindblad_dense(
    rho0: &DMatrix<Complex64>,
    hamiltonian: Option<&DenseOperator>,
    dissipators: &[Dissipator],
    t: f64,
    tol: LindbladTolerance,
) -> Result<DMatrix<Complex64>> {
    let n = rho0.nrows();
    if !rho0.is_square() {
        return Err(Error::DimensionMismatch("rho0 must be square".into()));
    }
    let h = match hamiltonian {
        Some(h) if h.dim() != n => {
            return Err(Error::DimensionMismatch(format!("H has dim {}, rho {}", h.dim(), n)));
        }
        Some(h) => h.matrix.clone(),
        None => DMatrix::zeros(n, n),
    };
    let mut diss = Vec::with_capacity(dissipators.len());
    for d in dissipators {
        if d.op.nrows() != n || d.op.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "dissipator is {}x{}, rho is {n}x{n}",
                d.op.nrows(),
                d.op.ncols()
            )));
        }
        let l_dag = d.op.adjoint();
        let ldl = &l_dag * &d.op;
        diss.push((d.rate, d.op.clone(), l_dag, ldl));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", "time must be finite and >= 0"));
    }
    let f = |rho: &DMatrix<Complex64>| lindblad_rhs(&h, &diss, rho);

    let mut rho = rho0.clone();
    let mut time = 0.0;
    let scale = max_abs(&f(&rho)).max(1e-300);
    let mut dt = (0.01 / scale).min(t).max(1e-12);
    let mut steps = 0;
    while time < t {
        if steps >= tol.max_steps {
            return Err(Error::Convergence(format!(
                "Lindblad integration stopped at t = {time} of {t} after {steps} steps"
            )));
        }
        steps += 1;
        let h_step = dt.min(t - time);
        let mut k: Vec<DMatrix<Complex64>> = Vec::with_capacity(7);
        for stage in 0..7 {
            let mut y = rho.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = DP_A[stage][j];
                if a != 0.0 {
                    y += kj * Complex64::new(h_step * a, 0.0);
                }
            }
            k.push(f(&y));
        }
        let mut y5 = rho.clone();
        let mut err = DMatrix::zeros(n, n);
        for (j, kj) in k.iter().enumerate() {
            y5 += kj * Complex64::new(h_step * DP_B5[j], 0.0);
            err += kj * Complex64::new(h_step * (DP_B5[j] - DP_B4[j]), 0.0);
        }
        let norm = err
            .iter()
            .zip(y5.iter())
            .map(|(e, y)| e.norm() / (tol.atol + tol.rtol * y.norm()))
            .fold(0.0, f64::max);
        if norm <= 1.0 {
            time += h_step;
            rho = y5;
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        dt = h_step * factor;
    }
    Ok(rho)
}

pub fn diag_matrix(p: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_diagonal(&DVector::from_iterator(p.len(), p.iter().map(|&x| Complex64::new(x, 0.0))))
}

/// `|up><down| (x) 1` on `levels` Fock levels.
pub fn spin_lowering_to_up(levels: usize) -> DMatrix<Complex64> {
    let mut l = DMatrix::zeros(2 * levels, 2 * levels);
    for m in 0..levels {
        l[(m, levels + m)] = ONE;
    }
    l
}

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleCheck {
    fn new(name: impl Into<String>, max_deviation: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_deviation,
            tolerance,
            passed: max_deviation < tolerance,
        }
    }
}

/// Sample times spanning about two transfer periods of the thermally
/// weighted sideband frequency.
pub fn oracle_times(engine: &RamanEngine, count: usize) -> Vec<f64> {
    let probs = &engine.thermal().probs;
    let omega = &engine.table().omega_m;
    let (num, den) = omega
        .iter()
        .zip(probs)
        .filter(|(w, _)| **w != 0.0)
        .fold((0.0, 0.0), |(n, d), (w, p)| (n + p * w.abs(), d + p));
    let reference = if den > 0.0 { num / den } else { 1.0 };
    let t_max = std::f64::consts::PI / reference;
    (0..count).map(|i| t_max * i as f64 / (count - 1).max(1) as f64).collect()
}

/// Closed form vs dense propagation of the effective Hamiltonian. The
/// `eta_offset` perturbs only the dense side (harness sanity checks).
pub fn check_closed_form(params: &EngineParams, times: &[f64], eta_offset: f64) -> Result<(f64, f64)> {
    let engine = RamanEngine::new(*params)?;
    let dense_params = EngineParams { eta: params.eta + eta_offset, ..*params };
    let dense = dense_joint_populations(&dense_params, times)?;
    let total0 = engine.initial_state().total();
    let mut worst: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for (&t, d) in times.iter().zip(&dense) {
        let c = engine.evolve(t)?;
        drift = drift.max((c.total() - total0).abs());
        for (x, y) in c.p_up.iter().chain(&c.p_down).zip(d.p_up.iter().chain(&d.p_down)) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok((worst, drift))
}

/// Options of the default certification suite.
#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub time_samples: usize,
    pub eta_offset: f64,
    pub tail_eps: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            time_samples: 50,
            eta_offset: 0.0,
            tail_eps: 1e-12,
        }
    }
}

/// Every oracle comparison used to certify the closed forms.
pub fn run_default_suite(opts: SuiteOptions) -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    for eta in [0.05, 0.4] {
        for kappa in [1usize, 5] {
            for nbar0 in [1.0, 5.0] {
                let p = EngineParams::new(eta, kappa, nbar0, SpinInverseTemperature::Infinite, opts.tail_eps)?;
                let times = oracle_times(&RamanEngine::new(p)?, opts.time_samples);
                let (worst, drift) = check_closed_form(&p, &times, opts.eta_offset)?;
                out.push(OracleCheck::new(
                    format!("closed-form populations eta={eta} kappa={kappa} nbar0={nbar0}"),
                    worst,
                    1e-9,
                ));
                out.push(OracleCheck::new(
                    format!("normalization drift eta={eta} kappa={kappa} nbar0={nbar0}"),
                    drift,
                    1e-12,
                ));
            }
        }
    }

    let p = EngineParams::new(0.4, 1, 2.0, SpinInverseTemperature::Infinite, 1e-9)?;
    let p = EngineParams { cutoff: FockCutoff::new(41, 1e-9)?, ..p };
    let mut worst: f64 = 0.0;
    for t in [0.0, 0.7, 3.1, 12.0] {
        let dense = HermitianPropagator::new(&build_effective_hamiltonian(&p)?)?.unitary(t);
        worst = worst.max(max_abs(&(dense - closed_form_unitary(&p, t)?)));
    }
    out.push(OracleCheck::new("evolution operator vs cos/sin closed form (n_max=40)", worst, 1e-10));

    out.push(check_spin_reset()?);
    out.push(check_rethermalization()?);

    let base = EngineParams::new(0.1, 1, 1.0, SpinInverseTemperature::Infinite, opts.tail_eps)?;
    let (dev, _) = adiabatic_deviation(&base, 0.01, 40)?;
    out.push(OracleCheck::new("adiabatic vs effective model, Omega/nu = 0.01", dev, 5e-3));
    Ok(out)
}

/// Spin reset closed form vs dense Lindblad integration on spin (x) Fock.
pub fn check_spin_reset() -> Result<OracleCheck> {
    let cut = FockCutoff::new(6, 1e-3)?;
    let levels = cut.levels();
    let th = fock::thermal_distribution(0.7, &cut)?;
    let state = JointPopulations::product(0.25, 0.75, &th.probs);
    let gamma_s = 1.3;
    let duration = std::f64::consts::LN_2 / gamma_s;
    let closed = open_system::spin_reset(&state, &ResetParams { gamma_s, duration })?;
    let rho0 = diag_matrix(&[state.p_up.clone(), state.p_down.clone()].concat());
    let rho = evolve_lindblad_dense(
        &rho0,
        None,
        &[Dissipator { rate: gamma_s, op: spin_lowering_to_up(levels) }],
        duration,
        LindbladTolerance::default(),
    )?;
    let expected: Vec<f64> = closed.p_up.iter().chain(&closed.p_down).copied().collect();
    let dev = (0..2 * levels)
        .map(|k| (rho[(k, k)].re - expected[k]).abs())
        .fold(0.0, f64::max);
    Ok(OracleCheck::new("spin reset vs dense Lindblad", dev, 1e-8))
}

/// Birth-death integrator vs the dense thermal master equation (`n_max = 40`).
pub fn check_rethermalization() -> Result<OracleCheck> {
    let levels = 41;
    let nbar = 2.0;
    let gamma = 1.0;
    let duration = 1.5;
    let mut p0 = fock::thermal_probs(0.6, levels);
    p0[3] += 0.05;
    p0[0] -= 0.05;
    let closed = open_system::rethermalize(&p0, &ThermParams { gamma_h: gamma, nbar_bath: nbar, duration })?;
    // Truncated ladder operators already reflect at the top level.
    let a = annihilation(levels);
    let a_dag = a.adjoint();
    let rho = evolve_lindblad_dense(
        &diag_matrix(&p0),
        None,
        &[
            Dissipator { rate: gamma * (nbar + 1.0), op: a },
            Dissipator { rate: gamma * nbar, op: a_dag },
        ],
        duration,
        LindbladTolerance::default(),
    )?;
    let mut dev: f64 = 0.0;
    let mut off: f64 = 0.0;
    for r in 0..levels {
        for c in 0..levels {
            if r == c {
                dev = dev.max((rho[(r, r)].re - closed[r]).abs());
            } else {
                off = off.max(rho[(r, c)].norm());
            }
        }
    }
    Ok(OracleCheck::new("re-thermalization vs dense Lindblad", dev.max(off), 1e-7))
}

/// Deviation between the adiabatic and effective models over one extraction
/// period at `Omega / nu = ratio`; also returns the period used.
pub fn adiabatic_deviation(base: &EngineParams, ratio: f64, samples: usize) -> Result<(f64, f64)> {
    let engine = RamanEngine::new(*base)?;
    let (t_f, _) = sweep::find_tf(&engine, TimeScan::default(), 1e-9)?;
    let times: Vec<f64> = (0..samples).map(|i| t_f * i as f64 / (samples - 1) as f64).collect();
    let (adia, eff) = AdiabaticParams::resonant(base, 1.0, ratio);
    Ok((compare_adiabatic_vs_effective(&adia, &eff, &times)?, t_f))
}
