//! Mean-index estimation: forward/backward upper and lower mean indices, the
//! periodic mean index, and the shifted-window averages behind the dyadic
//! sandwich.
//!
//! The three window functionals on a path segment [a, a + W] are
//!   f = iota anchored at gamma(a),  g = iota anchored at gamma(a + W),
//!   h = average of the omega-indices over a jittered theta grid,
//! and satisfy f >= h >= g >= f - 2d exactly. Averaging h over n consecutive
//! windows of length u 2^k and normalizing pins the upper and lower mean
//! index within the rigorous gap 2d/(u 2^k). The direct scheme instead tracks
//! a_l = i_1(gamma, [0, l]) / l on integer times with a heuristic tail bound.

use crate::error::{Error, Result};
use crate::linalg::{complex_eigenvalues, C64, ScaledMat};
use crate::maslov::{stabilized_window, theta_sweep};
use crate::propagate::{fundamental_solution, Control, SymplecticPath};
use crate::systems::{Structure, SymmetricField};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    /// Sample a_l = i_1(gamma, [0, l]) / l at integer l up to the horizon.
    Direct { horizon: f64 },
    /// Averages over n shifted windows of length u 2^k.
    Dyadic { k: u32, n: usize },
}

/// One window row of the dyadic table.
#[derive(Clone, Debug)]
pub struct DyadicRow {
    pub shift_index: usize,
    pub f: i64,
    pub g: i64,
    pub h: f64,
    pub h_residual: f64,
}

#[derive(Clone, Debug)]
pub struct DyadicTable {
    pub k: u32,
    pub n: usize,
    /// Window step u (1 unless the field declares a torus step).
    pub u: f64,
    pub rows: Vec<DyadicRow>,
    /// Running averages F_{k,m}, H_{k,m}, G_{k,m} for m = 1..n.
    pub f_avg: Vec<f64>,
    pub h_avg: Vec<f64>,
    pub g_avg: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum Trace {
    /// (l, a_l) samples of the direct scheme.
    Direct(Vec<(f64, f64)>),
    Dyadic(DyadicTable),
}

/// Interval estimate of the mean index with scheme metadata.
#[derive(Clone, Debug)]
pub struct MeanIndexEstimate {
    pub lower: f64,
    pub upper: f64,
    pub direction: Direction,
    pub scheme: Scheme,
    pub residual_bound: f64,
    /// True for the dyadic sandwich gap; the direct tail bound is heuristic.
    pub residual_is_rigorous: bool,
    pub trace: Trace,
}

impl MeanIndexEstimate {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

pub(crate) fn index_control(field: &SymmetricField) -> Control {
    // keep the grid dense enough for the crossing scan
    Control::default().with_max_step((0.35 / field.bound().max(0.25)).min(0.1))
}

/// Jittered midpoint grid on [0, 2pi), nudged off the eigenvalue angles of
/// the window endpoint matrix (where the omega-index is ill-conditioned).
fn jittered_thetas(n: usize, endpoint: &ScaledMat) -> Vec<f64> {
    let mut thetas: Vec<f64> = (0..n).map(|j| 2.0 * PI * (j as f64 + 0.5) / n as f64).collect();
    if endpoint.log > 50.0 {
        return thetas; // spectrum far from the unit circle
    }
    let eigs = complex_eigenvalues(&endpoint.m);
    let scale = endpoint.log.exp();
    let angles: Vec<C64> = eigs.iter().map(|&z| z * scale).collect();
    for theta in thetas.iter_mut() {
        for _ in 0..8 {
            let w = C64::new(theta.cos(), theta.sin());
            let close = angles.iter().any(|z| (z - w).norm() < 1e-6);
            if !close {
                break;
            }
            *theta += 2.7e-6;
        }
    }
    thetas
}

/// The window functionals (f, g, h) on [start, start + len] of a propagated
/// path, with anchors transported from the path itself.
pub(crate) fn fgh_window(
    path: &SymplecticPath,
    start: f64,
    len: f64,
    theta_samples: usize,
) -> Result<(i64, i64, f64, f64)> {
    let d = path.dim_half() as i64;
    let window = (start, start + len);
    let anchor_start_inv = path.eval_scaled(start)?.symplectic_inverse();
    let endpoint = path.eval_scaled(start + len)?;
    let anchor_end_inv = endpoint.symplectic_inverse();

    let (_, f, eps_f, _) = stabilized_window(path, &anchor_start_inv, C64::new(1.0, 0.0), window)?;
    let (_, g, _, _) = stabilized_window(path, &anchor_end_inv, C64::new(1.0, 0.0), window)?;

    let transfer = endpoint.mul(&path.eval_scaled(start)?.symplectic_inverse());
    let thetas = jittered_thetas(theta_samples, &transfer);
    let c1 = theta_sweep(path, &anchor_start_inv, window, &thetas, eps_f)?;
    let c2 = theta_sweep(path, &anchor_start_inv, window, &thetas, eps_f * 0.5)?;

    let n = thetas.len() as f64;
    let mut jumps = 0i64;
    let mut eps_gap = 0.0f64;
    for j in 0..c2.len() {
        if c2[j] < g || c2[j] > f {
            return Err(Error::InternalConsistency(format!(
                "omega-index {} at theta {} outside [g, f] = [{g}, {f}]",
                c2[j], thetas[j]
            )));
        }
        jumps += (c2[(j + 1) % c2.len()] - c2[j]).abs();
        eps_gap += (c2[j] - c1[j]).abs() as f64;
    }
    let h: f64 = c2.iter().map(|&c| c as f64).sum::<f64>() / n;
    let h_residual = 2.0 * d as f64 * jumps as f64 / n / n.max(1.0) + eps_gap / n;

    if !(f as f64 >= h - 1e-9 && h >= g as f64 - 1e-9 && g >= f - 2 * d) {
        return Err(Error::InternalConsistency(format!(
            "window inequalities violated: f = {f}, h = {h:.6}, g = {g}, d = {d}"
        )));
    }
    Ok((f, g, h, h_residual))
}

/// f(B, n), g(B, n) and the quadrature mean index h(B, n) on [0, n].
pub fn fgh(field: &SymmetricField, n: u32, theta_samples: usize) -> Result<(i64, i64, f64)> {
    if n < 1 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if theta_samples < 16 {
        return Err(Error::InvalidArgument("theta_samples must be at least 16".into()));
    }
    let path = fundamental_solution(field, (0.0, n as f64), &index_control(field))?;
    let (f, g, h, _) = fgh_window(&path, 0.0, n as f64, theta_samples)?;
    Ok((f, g, h))
}

/// Periodic mean index: the theta quadrature of the omega-indices over one
/// period, per period and per unit time.
#[derive(Clone, Debug)]
pub struct PeriodicMeanIndex {
    pub per_period: f64,
    pub per_time: f64,
    pub quadrature_residual: f64,
    pub period: f64,
}

pub fn mean_index_periodic(
    field: &SymmetricField,
    theta_samples: usize,
) -> Result<PeriodicMeanIndex> {
    let period = match field.structure() {
        Structure::Periodic { period } => *period,
        other => {
            return Err(Error::StructureMismatch(format!(
                "mean_index_periodic requires a periodic field, got {}",
                other.kind()
            )))
        }
    };
    let path = fundamental_solution(field, (0.0, period), &index_control(field))?;
    let (_, _, h, h_res) = fgh_window(&path, 0.0, period, theta_samples.max(16))?;
    Ok(PeriodicMeanIndex {
        per_period: h,
        per_time: h / period,
        quadrature_residual: h_res,
        period,
    })
}

/// Parameters for `mean_index_interval`.
#[derive(Clone, Copy, Debug)]
pub struct EstimatorParams {
    pub theta_samples: usize,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        EstimatorParams { theta_samples: 256 }
    }
}

fn burn_in(horizon: usize) -> usize {
    (horizon / 10).clamp(4, 60).min(horizon.saturating_sub(4))
}

/// Integer-time samples a_l = i_1(gamma, [0, l]) / l from one stabilized
/// crossing ledger over [0, horizon].
pub(crate) fn direct_trace(field: &SymmetricField, horizon: f64) -> Result<Vec<(f64, f64)>> {
    let d = field.dim_half() as i64;
    let path = fundamental_solution(field, (0.0, horizon), &index_control(field))?;
    let anchor_inv = ScaledMat::identity(field.dim());
    let (records, _, _, _) =
        stabilized_window(&path, &anchor_inv, C64::new(1.0, 0.0), (0.0, horizon))?;
    let steps = horizon.floor() as usize;
    let mut trace = Vec::with_capacity(steps);
    let mut acc = 0i64;
    let mut next = 0usize;
    for l in 1..=steps {
        let t = l as f64;
        while next < records.len() && records[next].time < t {
            acc += records[next].signature;
            next += 1;
        }
        trace.push((t, (acc - d) as f64 / t));
    }
    Ok(trace)
}

fn direct_estimate(
    field: &SymmetricField,
    horizon: f64,
) -> Result<(f64, f64, f64, Vec<(f64, f64)>)> {
    if horizon < 10.0 {
        return Err(Error::InsufficientHorizon(
            "direct scheme requires horizon >= 10".into(),
            horizon,
        ));
    }
    let trace = direct_trace(field, horizon)?;
    let start = burn_in(trace.len());
    if trace.len() - start < 4 {
        return Err(Error::InsufficientHorizon(
            format!("only {} samples after burn-in", trace.len() - start),
            horizon,
        ));
    }
    let tail = &trace[start..];
    let lower = tail.iter().map(|&(_, a)| a).fold(f64::INFINITY, f64::min);
    let upper = tail.iter().map(|&(_, a)| a).fold(f64::NEG_INFINITY, f64::max);
    // tail heuristic at the burn-in point: the sample-gap bound
    // (dK/pi + 2d)/l0 + (d l0 K/pi + 2d)/l0^2
    let d = field.dim_half() as f64;
    let k = field.bound();
    let l0 = (start + 1) as f64;
    let residual = (d * k / PI + 2.0 * d) / l0 + (d * l0 * k / PI + 2.0 * d) / (l0 * l0);
    Ok((lower, upper, residual, trace.to_vec()))
}

fn dyadic_estimate(
    field: &SymmetricField,
    k: u32,
    n: usize,
    params: &EstimatorParams,
) -> Result<(f64, f64, f64, DyadicTable)> {
    if k > 12 {
        return Err(Error::InvalidArgument("dyadic scheme requires k <= 12".into()));
    }
    if n < 4 {
        return Err(Error::InvalidArgument("dyadic scheme requires n >= 4".into()));
    }
    let u = match field.structure() {
        Structure::QuasiPeriodic(tf) => tf.step,
        _ => 1.0,
    };
    let w = u * (1u64 << k) as f64;
    let d = field.dim_half() as i64;
    let path = fundamental_solution(field, (0.0, w * n as f64), &index_control(field))?;

    let mut rows = Vec::with_capacity(n);
    let (mut f_sum, mut g_sum, mut h_sum) = (0f64, 0f64, 0f64);
    let (mut f_avg, mut g_avg, mut h_avg) = (Vec::new(), Vec::new(), Vec::new());
    for l in 0..n {
        let (f, g, h, h_res) = fgh_window(&path, w * l as f64, w, params.theta_samples)?;
        if !(f >= g && g >= f - 2 * d) {
            return Err(Error::InternalConsistency(format!(
                "window {l}: f = {f}, g = {g} violate the sandwich"
            )));
        }
        rows.push(DyadicRow { shift_index: l, f, g, h, h_residual: h_res });
        f_sum += f as f64;
        g_sum += g as f64;
        h_sum += h;
        let m = (l + 1) as f64;
        f_avg.push(f_sum / m);
        g_avg.push(g_sum / m);
        h_avg.push(h_sum / m);
        if !(f_avg[l] >= h_avg[l] - 1e-9 && h_avg[l] >= g_avg[l] - 1e-9
            && g_avg[l] >= f_avg[l] - 2.0 * d as f64 - 1e-9)
        {
            return Err(Error::InternalConsistency(format!(
                "running averages violate F >= H >= G >= F - 2d at m = {}",
                l + 1
            )));
        }
    }

    let m0 = (n / 4).max(1) - 1;
    let band = &h_avg[m0..];
    let lower = band.iter().fold(f64::INFINITY, |a, &x| a.min(x)) / w;
    let upper = band.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x)) / w;
    let residual = 2.0 * d as f64 / w;
    let table = DyadicTable { k, n, u, rows, f_avg, g_avg, h_avg };
    Ok((lower, upper, residual, table))
}

/// Estimate the mean-index interval [I_L, I_U] of a field.
pub fn mean_index_interval(
    field: &SymmetricField,
    direction: Direction,
    scheme: Scheme,
    params: &EstimatorParams,
) -> Result<MeanIndexEstimate> {
    if direction == Direction::Backward {
        let fwd = mean_index_interval(&field.reverse(), Direction::Forward, scheme, params)?;
        // I^- flips through h^-(p, n) = -h(p - u n, n): negate and swap
        return Ok(MeanIndexEstimate {
            lower: -fwd.upper,
            upper: -fwd.lower,
            direction: Direction::Backward,
            scheme: fwd.scheme,
            residual_bound: fwd.residual_bound,
            residual_is_rigorous: fwd.residual_is_rigorous,
            trace: negate_trace(fwd.trace),
        });
    }
    let (lower, upper, residual_bound, rigorous, trace) = match scheme {
        Scheme::Direct { horizon } => {
            let (lo, up, res, trace) = direct_estimate(field, horizon)?;
            (lo, up, res, false, Trace::Direct(trace))
        }
        Scheme::Dyadic { k, n } => {
            let (lo, up, res, table) = dyadic_estimate(field, k, n, params)?;
            (lo, up, res, true, Trace::Dyadic(table))
        }
    };
    let est = MeanIndexEstimate {
        lower,
        upper,
        direction: Direction::Forward,
        scheme,
        residual_bound,
        residual_is_rigorous: rigorous,
        trace,
    };
    // Hard bounds: the estimate must stay inside [-dK/pi, dK/pi] inflated by
    // the residual and the sampling slack.
    let d = field.dim_half() as f64;
    let bound = d * field.bound() / PI;
    let slack = est.residual_bound + 4.0 * d / 10.0f64.max(horizon_of(&scheme));
    if est.lower < -bound - slack - 1e-9 || est.upper > bound + slack + 1e-9 {
        return Err(Error::InternalConsistency(format!(
            "estimate [{:.6}, {:.6}] escapes the bound {:.6} + {:.6}",
            est.lower, est.upper, bound, slack
        )));
    }
    Ok(est)
}

fn horizon_of(scheme: &Scheme) -> f64 {
    match scheme {
        Scheme::Direct { horizon } => *horizon,
        Scheme::Dyadic { k, n } => (1u64 << k) as f64 * *n as f64,
    }
}

fn negate_trace(trace: Trace) -> Trace {
    match trace {
        Trace::Direct(samples) => {
            Trace::Direct(samples.into_iter().map(|(l, a)| (l, -a)).collect())
        }
        Trace::Dyadic(mut table) => {
            for row in table.rows.iter_mut() {
                let f = row.f;
                row.f = -row.g;
                row.g = -f;
                row.h = -row.h;
            }
            for v in table.f_avg.iter_mut().chain(table.g_avg.iter_mut()) {
                *v = -*v;
            }
            table.h_avg.iter_mut().for_each(|v| *v = -*v);
            let f_avg = std::mem::take(&mut table.g_avg);
            let g_avg = std::mem::take(&mut table.f_avg);
            table.f_avg = f_avg;
            table.g_avg = g_avg;
            Trace::Dyadic(table)
        }
    }
}

/// Witness times u m_k along which a_t converges to a prescribed value in the
/// mean-index interval.
#[derive(Clone, Debug)]
pub struct WitnessReport {
    pub target: f64,
    pub witnesses: Vec<(u64, f64)>,
    pub achieved_error: f64,
    pub converged: bool,
}

pub fn witness_subsequence(
    field: &SymmetricField,
    v: f64,
    u: f64,
    horizon: f64,
) -> Result<WitnessReport> {
    if !(u > 0.0) {
        return Err(Error::InvalidArgument("witness step u must be positive".into()));
    }
    let est = mean_index_interval(
        field,
        Direction::Forward,
        Scheme::Direct { horizon },
        &EstimatorParams::default(),
    )?;
    let lo = est.lower - est.residual_bound;
    let hi = est.upper + est.residual_bound;
    if v < lo || v > hi {
        return Err(Error::Range { value: v, lo, hi });
    }

    let d = field.dim_half() as i64;
    let path = fundamental_solution(field, (0.0, horizon), &index_control(field))?;
    let anchor_inv = ScaledMat::identity(field.dim());
    let (records, _, _, _) =
        stabilized_window(&path, &anchor_inv, C64::new(1.0, 0.0), (0.0, horizon))?;
    let m_max = (horizon / u).floor() as u64;
    let mut acc = 0i64;
    let mut next = 0usize;
    let mut best = f64::INFINITY;
    let mut witnesses = Vec::new();
    for m in 1..=m_max {
        let t = u * m as f64;
        while next < records.len() && records[next].time < t {
            acc += records[next].signature;
            next += 1;
        }
        let a = (acc - d) as f64 / t;
        let err = (a - v).abs();
        if err < 0.9 * best || (err < best && err < 0.05) {
            best = err;
            witnesses.push((m, a));
        }
    }
    Ok(WitnessReport {
        target: v,
        witnesses,
        achieved_error: best,
        converged: best < 0.05,
    })
}

/// Shift-invariance report: the estimate difference against the displacement
/// bound (2 d K s / pi + 4 d) / L plus both residuals.
#[derive(Clone, Debug)]
pub struct TranslationCheck {
    pub shift: f64,
    pub base: (f64, f64),
    pub shifted: (f64, f64),
    pub allowed: f64,
    pub ok: bool,
}

pub fn translation_invariance_check(
    field: &SymmetricField,
    shifts: &[f64],
    horizon: f64,
) -> Result<Vec<TranslationCheck>> {
    let params = EstimatorParams::default();
    let scheme = Scheme::Direct { horizon };
    let base = mean_index_interval(field, Direction::Forward, scheme, &params)?;
    let d = field.dim_half() as f64;
    let k = field.bound();
    let mut out = Vec::new();
    for &s in shifts {
        let shifted_field = field.shift(s);
        let shifted = mean_index_interval(&shifted_field, Direction::Forward, scheme, &params)?;
        let allowed = (2.0 * d * k * s.abs() / PI + 4.0 * d) / horizon
            + base.residual_bound
            + shifted.residual_bound;
        let ok = (base.lower - shifted.lower).abs() <= allowed
            && (base.upper - shifted.upper).abs() <= allowed;
        out.push(TranslationCheck {
            shift: s,
            base: (base.lower, base.upper),
            shifted: (shifted.lower, shifted.upper),
            allowed,
            ok,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{catalog, Params};

    fn cat(name: &str) -> SymmetricField {
        catalog(name, &Params::new()).unwrap()
    }

    fn cat_k(name: &str, kv: &[(&str, f64)]) -> SymmetricField {
        let p: Params = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        catalog(name, &p).unwrap()
    }

    #[test]
    fn fgh_of_near_zero_field_vanishes() {
        let f = cat_k("constant_k", &[("k", 1e-9)]);
        let (ff, gg, hh) = fgh(&f, 4, 32).unwrap();
        assert_eq!(ff, 0);
        assert_eq!(gg, 0);
        assert!(hh.abs() < 1e-12);
    }

    #[test]
    fn fgh_unit_rotation_mean() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        let (ff, gg, hh) = fgh(&f, 10, 128).unwrap();
        assert!(ff >= gg && gg >= ff - 2);
        assert!((hh / 10.0 - 1.0 / PI).abs() < 0.15, "h/10 = {}", hh / 10.0);
    }

    #[test]
    fn fgh_validates_arguments() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        assert!(fgh(&f, 0, 32).is_err());
        assert!(fgh(&f, 4, 8).is_err());
    }

    #[test]
    fn periodic_mean_index_values() {
        let zero = cat_k("constant_k", &[("k", 1e-9), ("period", 1.0)]);
        let m = mean_index_periodic(&zero, 64).unwrap();
        assert!(m.per_period.abs() < 1e-12);

        let rot = cat_k("constant_k", &[("k", 1.0), ("period", 2.0 * PI)]);
        let m = mean_index_periodic(&rot, 256).unwrap();
        assert!((m.per_period - 2.0).abs() < 0.05, "per period {}", m.per_period);
        assert!((m.per_time - 1.0 / PI).abs() < 0.02, "per time {}", m.per_time);

        let hyp = cat("hyperbolic");
        let m = mean_index_periodic(&hyp, 64).unwrap();
        assert_eq!(m.per_period, 0.0);
    }

    #[test]
    fn direct_scheme_constant_field() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        let est = mean_index_interval(
            &f,
            Direction::Forward,
            Scheme::Direct { horizon: 500.0 },
            &EstimatorParams::default(),
        )
        .unwrap();
        assert!((est.lower - 1.0 / PI).abs() < 0.02, "lower {}", est.lower);
        assert!((est.upper - 1.0 / PI).abs() < 0.02, "upper {}", est.upper);
        assert!(est.lower <= est.upper + est.residual_bound);
    }

    #[test]
    fn insufficient_horizon_rejected() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        let r = mean_index_interval(
            &f,
            Direction::Forward,
            Scheme::Direct { horizon: 5.0 },
            &EstimatorParams::default(),
        );
        assert!(matches!(r, Err(Error::InsufficientHorizon(_, _))));
    }

    #[test]
    fn backward_equals_forward_for_periodic() {
        let f = cat("periodic_demo");
        let params = EstimatorParams::default();
        let fwd = mean_index_interval(
            &f,
            Direction::Forward,
            Scheme::Direct { horizon: 120.0 },
            &params,
        )
        .unwrap();
        let bwd = mean_index_interval(
            &f,
            Direction::Backward,
            Scheme::Direct { horizon: 120.0 },
            &params,
        )
        .unwrap();
        let tol = fwd.residual_bound + bwd.residual_bound;
        assert!((fwd.midpoint() - bwd.midpoint()).abs() <= tol,
            "forward {:?} backward {:?}", (fwd.lower, fwd.upper), (bwd.lower, bwd.upper));
    }

    #[test]
    fn witness_on_constant_field() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        let report = witness_subsequence(&f, 1.0 / PI, 1.0, 200.0).unwrap();
        assert!(report.converged, "error {}", report.achieved_error);
        assert!(report.achieved_error < 0.05);
    }

    #[test]
    fn witness_range_error() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        assert!(matches!(
            witness_subsequence(&f, 2.0, 1.0, 120.0),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn translation_zero_shift_exact() {
        let f = cat("periodic_demo");
        let checks = translation_invariance_check(&f, &[0.0], 80.0).unwrap();
        assert!(checks[0].ok);
        assert_eq!(checks[0].base, checks[0].shifted);
    }

    #[test]
    fn subadditivity_of_f_on_integers() {
        // f(B, n+m) <= f(B, n) + f(S^n B, m) exactly
        let field = cat("periodic_demo");
        for (n, m) in [(3u32, 4u32), (5, 2), (8, 8)] {
            let (f_nm, _, _) = fgh(&field, n + m, 32).unwrap();
            let (f_n, _, _) = fgh(&field, n, 32).unwrap();
            let (f_m_shifted, _, _) = fgh(&field.shift(n as f64), m, 32).unwrap();
            assert!(
                f_nm <= f_n + f_m_shifted,
                "subadditivity broken: f({}) = {f_nm} > {f_n} + {f_m_shifted}",
                n + m
            );
        }
    }

    #[test]
    fn dyadic_scheme_on_quasi_periodic() {
        let f = cat("quasi_periodic_demo");
        let est = mean_index_interval(
            &f,
            Direction::Forward,
            Scheme::Dyadic { k: 4, n: 6 },
            &EstimatorParams { theta_samples: 64 },
        )
        .unwrap();
        // true value: average rotation speed 1.5 over pi
        let expect = 1.5 / PI;
        assert!(
            (est.midpoint() - expect).abs() < 0.1,
            "estimate [{}, {}] vs {expect}",
            est.lower,
            est.upper
        );
        assert!(est.upper - est.lower <= 2.0 / est_window(&est) + 0.1);
        assert!(est.residual_is_rigorous);
    }

    fn est_window(est: &MeanIndexEstimate) -> f64 {
        match &est.trace {
            Trace::Dyadic(t) => t.u * (1u64 << t.k) as f64,
            _ => panic!(),
        }
    }
}
