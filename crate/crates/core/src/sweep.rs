//! Stage-duration search and grid optimization of the extracted work over
//! the Lamb-Dicke parameter, the bath occupancy and the sideband order.

use rayon::prelude::*;
use serde::Serialize;

use crate::entropy;
use crate::error::{invalid, Error, Result};
use crate::raman::{EngineParams, RamanEngine, SpinInverseTemperature};

/// Thermal weight below which a level does not set the scan window.
const WEIGHT_FLOOR: f64 = 1e-6;
/// Finest scan resolution relative to the fastest relevant sideband period.
const STEPS_PER_HALF_PERIOD: f64 = 16.0;
const MAX_SCAN_STEPS: usize = 1 << 22;
const TIE_TOL: f64 = 1e-12;

/// How the `Omega t` axis is scanned for the first minimum of `nbar(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TimeScan {
    /// Window `4 pi / Omega_min` over `count` points, where `Omega_min` is the
    /// slowest coupled level carrying thermal weight above `1e-6`.
    Auto { count: usize },
    Fixed { omega_t_max: f64, count: usize },
}

impl Default for TimeScan {
    fn default() -> Self {
        TimeScan::Auto { count: 4096 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for EtaGrid {
    fn default() -> Self {
        Self {
            min: 0.01,
            max: 1.2,
            count: 120,
        }
    }
}

impl EtaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub kappa_values: Vec<usize>,
    pub nbar0_values: Vec<f64>,
    pub eta_grid: EtaGrid,
    pub t_scan: TimeScan,
    pub refine_tol: f64,
    pub tail_eps: f64,
    pub lambda_s: SpinInverseTemperature,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            kappa_values: vec![1, 5, 10],
            nbar0_values: vec![0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            eta_grid: EtaGrid::default(),
            t_scan: TimeScan::default(),
            refine_tol: 1e-9,
            tail_eps: 1e-12,
            lambda_s: SpinInverseTemperature::Infinite,
        }
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kappa_values.is_empty() {
            return Err(invalid("kappa", "empty kappa grid"));
        }
        if self.kappa_values.iter().any(|&k| k == 0) {
            return Err(invalid("kappa", "sweeps need kappa >= 1"));
        }
        if !self.kappa_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("kappa", "kappa grid must be strictly increasing"));
        }
        if self.nbar0_values.is_empty() {
            return Err(invalid("nbar0", "empty nbar0 grid"));
        }
        if self.nbar0_values.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(invalid("nbar0", "grid values must be finite and > 0"));
        }
        if !strictly_increasing(&self.nbar0_values) {
            return Err(invalid("nbar0", "nbar0 grid must be strictly increasing"));
        }
        let g = &self.eta_grid;
        if g.count == 0 {
            return Err(invalid("eta_grid", "empty eta grid"));
        }
        if !(g.min > 0.0 && g.max.is_finite() && (g.max > g.min || g.count == 1)) {
            return Err(invalid("eta_grid", "need 0 < eta_min < eta_max"));
        }
        match self.t_scan {
            TimeScan::Auto { count } | TimeScan::Fixed { count, .. } if count < 3 => {
                return Err(invalid("t_scan", "scan needs at least 3 points"));
            }
            TimeScan::Fixed { omega_t_max, .. } if !(omega_t_max > 0.0 && omega_t_max.is_finite()) => {
                return Err(invalid("tmax", "scan window must be finite and > 0"));
            }
            _ => {}
        }
        if !(self.refine_tol > 0.0) {
            return Err(invalid("refine_tol", "must be > 0"));
        }
        if !(self.tail_eps > 0.0 && self.tail_eps < 1.0) {
            return Err(invalid("tail_eps", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Scan window and grid step for `engine`.
pub fn scan_grid(engine: &RamanEngine, scan: TimeScan) -> Result<(f64, f64)> {
    let probs = &engine.thermal().probs;
    let omega = &engine.table().omega_m;
    let relevant = || {
        omega
            .iter()
            .zip(probs)
            .filter(|(w, p)| **p > WEIGHT_FLOOR && w.abs() > 0.0)
            .map(|(w, _)| w.abs())
    };
    let omega_max = relevant().fold(0.0, f64::max);
    match scan {
        TimeScan::Fixed { omega_t_max, count } => Ok((omega_t_max, omega_t_max / (count - 1) as f64)),
        TimeScan::Auto { count } => {
            let omega_min = relevant().fold(f64::INFINITY, f64::min);
            if !omega_min.is_finite() {
                return Err(Error::NoMinimum { window: 0.0 });
            }
            let window = 4.0 * std::f64::consts::PI / omega_min;
            let step = (window / (count - 1) as f64)
                .min(std::f64::consts::FRAC_PI_2 / (STEPS_PER_HALF_PERIOD * omega_max));
            Ok((window, step))
        }
    }
}

/// Time `t_f` of the first local minimum of `nbar(t)` and `nbar(t_f)`.
/// `refine_tol` bounds the bracket width relative to `max(1, t_f)`.
pub fn find_tf(engine: &RamanEngine, scan: TimeScan, refine_tol: f64) -> Result<(f64, f64)> {
    if engine.params().kappa == 0 {
        return Err(invalid("kappa", "kappa = 0 exchanges no quanta; nbar(t) is constant"));
    }
    let (window, step) = scan_grid(engine, scan)?;
    let n_steps = ((window / step).ceil() as usize).min(MAX_SCAN_STEPS);
    let f = |t: f64| engine.mean_phonon_at(t);

    let mut prev = f(0.0);
    let mut cur = f(step);
    for i in 1..n_steps {
        let next = f((i + 1) as f64 * step);
        if cur < prev && next >= cur {
            let (t, v) = golden_min(&f, (i - 1) as f64 * step, (i + 1) as f64 * step, refine_tol);
            return Ok(if v <= cur { (t, v) } else { (i as f64 * step, cur) });
        }
        prev = cur;
        cur = next;
    }
    Err(Error::NoMinimum { window })
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    // Relative tolerance: late minima sit at Omega t ~ 1e11 for high sidebands at small eta.
    let mut iters = 0;
    while (b - a).abs() > tol * a.abs().max(b.abs()).max(1.0) && iters < 200 {
        iters += 1;
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaPoint {
    pub eta: f64,
    /// Extracted work `nbar(0) - nbar(t_f)` in units of `hbar nu`.
    pub work: f64,
    pub t_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaCurve {
    pub kappa: usize,
    pub nbar0: f64,
    pub points: Vec<EtaPoint>,
    pub eta_opt: f64,
    pub w_opt: f64,
    pub t_f_opt: f64,
}

/// Extracted work at the optimal stage duration for one parameter set.
pub fn work_at_tf(eta: f64, kappa: usize, nbar0: f64, spec: &SweepSpec) -> Result<EtaPoint> {
    let params = EngineParams::new(eta, kappa, nbar0, spec.lambda_s, spec.tail_eps)?;
    let engine = RamanEngine::new(params)?;
    let (t_f, nbar_f) = find_tf(&engine, spec.t_scan, spec.refine_tol)?;
    Ok(EtaPoint {
        eta,
        work: engine.thermal().mean() - nbar_f,
        t_f,
    })
}

fn better(a: &EtaPoint, b: &EtaPoint) -> bool {
    a.work > b.work + TIE_TOL || ((a.work - b.work).abs() <= TIE_TOL && a.eta < b.eta)
}

fn parabola_vertex(p: [&EtaPoint; 3]) -> Option<f64> {
    let [a, b, c] = p;
    let num = (b.eta - a.eta).powi(2) * (b.work - c.work) - (b.eta - c.eta).powi(2) * (b.work - a.work);
    let den = (b.eta - a.eta) * (b.work - c.work) - (b.eta - c.eta) * (b.work - a.work);
    if den == 0.0 || !den.is_finite() {
        return None;
    }
    let v = b.eta - 0.5 * num / den;
    (v > a.eta && v < c.eta).then_some(v)
}

/// `W(eta)` on the configured grid with the maximum refined by two
/// parabolic steps through the best three points.
pub fn sweep_eta(kappa: usize, nbar0: f64, spec: &SweepSpec) -> Result<EtaCurve> {
    let points = spec
        .eta_grid
        .values()
        .into_iter()
        .map(|eta| work_at_tf(eta, kappa, nbar0, spec))
        .collect::<Result<Vec<_>>>()?;
    let mut best_idx = 0;
    for (i, p) in points.iter().enumerate() {
        if better(p, &points[best_idx]) {
            best_idx = i;
        }
    }
    let mut best = points[best_idx];
    if best_idx > 0 && best_idx + 1 < points.len() {
        let mut triple = [points[best_idx - 1], best, points[best_idx + 1]];
        for _ in 0..2 {
            let Some(eta) = parabola_vertex([&triple[0], &triple[1], &triple[2]]) else {
                break;
            };
            let cand = work_at_tf(eta, kappa, nbar0, spec)?;
            if !better(&cand, &best) {
                break;
            }
            best = cand;
            triple = if cand.eta < triple[1].eta {
                [triple[0], cand, triple[1]]
            } else {
                [triple[1], cand, triple[2]]
            };
        }
    }
    Ok(EtaCurve {
        kappa,
        nbar0,
        points,
        eta_opt: best.eta,
        w_opt: best.work,
        t_f_opt: best.t_f,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kappa: usize,
    pub nbar0: f64,
    pub eta_opt: f64,
    pub w_opt: f64,
    pub t_f_opt: f64,
    /// `kappa * max_pdown_bound(nbar0, kappa)` in units of `hbar nu`.
    pub bound_w_max: f64,
    pub bound_violated: bool,
    pub curve: Vec<EtaPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn violations(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.bound_violated)
    }
}

/// Full `(kappa, nbar0)` grid. Rows come back in spec order (kappa-major)
/// whatever the number of worker threads.
pub fn sweep_nbar(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let tasks: Vec<(usize, f64)> = spec
        .kappa_values
        .iter()
        .flat_map(|&k| spec.nbar0_values.iter().map(move |&n| (k, n)))
        .collect();
    let rows = tasks
        .par_iter()
        .map(|&(kappa, nbar0)| {
            let curve = sweep_eta(kappa, nbar0, spec)?;
            let bound_w_max = kappa as f64 * entropy::max_pdown_bound(nbar0, kappa)?;
            Ok(SweepRow {
                kappa,
                nbar0,
                eta_opt: curve.eta_opt,
                w_opt: curve.w_opt,
                t_f_opt: curve.t_f_opt,
                bound_w_max,
                bound_violated: curve.w_opt > bound_w_max,
                curve: curve.points,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}
