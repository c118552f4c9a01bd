//! Fredholm tests for the operator -J d/dt - B with (asymptotically)
//! periodic coefficients.
//!
//! Two independent criteria are implemented and cross-checked: the monodromy
//! spectrum test (Fredholm iff no eigenvalue of gamma(T) on the unit circle)
//! and invariance of the mean index of B + lambda I across a symmetric
//! lambda sweep. For asymptotically periodic fields the spectrum test runs
//! on the periodic limit while the sweep runs on the field itself through
//! the mean-index estimators. The exponential-dichotomy inequalities serve
//! as a verification check on the spectral projection.

use crate::error::{Error, Result};
use crate::linalg::{complex_eigenvalues, op_norm, to_complex, C64, CMat, RMat};
use crate::mean_index::{
    mean_index_interval, mean_index_periodic, Direction, EstimatorParams, Scheme,
};
use crate::propagate::{fundamental_solution, monodromy, Control};
use crate::systems::{Structure, SymmetricField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Fredholm,
    NotFredholm,
    Inconclusive,
}

/// Monodromy spectrum relative to the unit circle.
#[derive(Clone, Debug)]
pub struct MonodromyReport {
    pub monodromy: RMat,
    pub spectrum: Vec<C64>,
    pub unit_circle_distance: f64,
    pub verdict: Verdict,
    pub tol_lo: f64,
    pub tol_hi: f64,
}

pub fn monodromy_spectrum_test(
    field: &SymmetricField,
    tol_lo: f64,
    tol_hi: f64,
) -> Result<MonodromyReport> {
    if !(tol_lo < tol_hi) {
        return Err(Error::InvalidArgument("need tol_lo < tol_hi".into()));
    }
    let m = monodromy(field, &Control::default())?;
    let spectrum = complex_eigenvalues(&m);
    // symplectic spectra pair eigenvalues mu with 1/conj(mu)
    for mu in &spectrum {
        let partner = 1.0 / mu.conj();
        let ok = spectrum.iter().any(|nu| (nu - partner).norm() < 1e-6 * (1.0 + partner.norm()));
        if !ok {
            return Err(Error::Integrity(format!(
                "monodromy spectrum not closed under reciprocal pairing: {mu} lacks {partner}"
            )));
        }
    }
    let unit_circle_distance =
        spectrum.iter().map(|mu| (mu.norm() - 1.0).abs()).fold(f64::INFINITY, f64::min);
    let verdict = if unit_circle_distance > tol_hi {
        Verdict::Fredholm
    } else if unit_circle_distance < tol_lo {
        Verdict::NotFredholm
    } else {
        Verdict::Inconclusive
    };
    Ok(MonodromyReport { monodromy: m, spectrum, unit_circle_distance, verdict, tol_lo, tol_hi })
}

/// Per-lambda mean indices across [-lambda_max, lambda_max].
#[derive(Clone, Debug)]
pub struct LambdaSweep {
    pub lambdas: Vec<f64>,
    /// Mean index per period (periodic) or interval midpoint (general).
    pub indices: Vec<f64>,
    pub residuals: Vec<f64>,
    pub constant: bool,
    pub jump_locations: Vec<f64>,
}

/// Options for the sweep estimator on non-periodic fields.
#[derive(Clone, Copy, Debug)]
pub struct SweepParams {
    pub theta_samples: usize,
    /// Horizon of the direct estimator for non-periodic fields.
    pub horizon: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams { theta_samples: 256, horizon: 150.0 }
    }
}

pub fn lambda_sweep(
    field: &SymmetricField,
    lambda_max: f64,
    steps: usize,
    params: &SweepParams,
) -> Result<LambdaSweep> {
    if !(lambda_max > 0.0) || lambda_max > field.bound() / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda_max must lie in (0, K/2] = (0, {}]",
            field.bound() / 2.0
        )));
    }
    if steps < 5 || steps % 2 == 0 {
        return Err(Error::InvalidArgument("steps must be odd and at least 5".into()));
    }
    let periodic = matches!(field.structure(), Structure::Periodic { .. });
    let mut lambdas = Vec::with_capacity(steps);
    let mut indices = Vec::with_capacity(steps);
    let mut residuals = Vec::with_capacity(steps);
    for i in 0..steps {
        let lambda = -lambda_max + 2.0 * lambda_max * i as f64 / (steps - 1) as f64;
        let shifted = field.add_identity(lambda)?;
        let (value, residual) = if periodic {
            let m = mean_index_periodic(&shifted, params.theta_samples)?;
            (m.per_period, m.quadrature_residual)
        } else {
            let est = mean_index_interval(
                &shifted,
                Direction::Forward,
                Scheme::Direct { horizon: params.horizon },
                &EstimatorParams { theta_samples: params.theta_samples },
            )?;
            (est.midpoint(), est.residual_bound + 0.5 * (est.upper - est.lower))
        };
        lambdas.push(lambda);
        indices.push(value);
        residuals.push(residual);
    }
    // monotonicity in lambda, up to residuals
    let mut jump_locations = Vec::new();
    for i in 0..steps - 1 {
        let slack = residuals[i] + residuals[i + 1] + 1e-9;
        if indices[i + 1] < indices[i] - slack {
            return Err(Error::InternalConsistency(format!(
                "mean index decreased across lambda = {}: {} -> {}",
                lambdas[i + 1],
                indices[i],
                indices[i + 1]
            )));
        }
        if indices[i + 1] > indices[i] + slack {
            jump_locations.push(0.5 * (lambdas[i] + lambdas[i + 1]));
        }
    }
    let max = indices.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
    let min = indices.iter().fold(f64::INFINITY, |a, &x| a.min(x));
    let allowed = residuals.iter().fold(0.0f64, |a, &r| a.max(r)) * 2.0 + 1e-9;
    let constant = max - min <= allowed;
    Ok(LambdaSweep { lambdas, indices, residuals, constant, jump_locations })
}

/// Combined report of both criteria.
#[derive(Clone, Debug)]
pub struct FredholmReport {
    pub spectrum: MonodromyReport,
    pub sweep: LambdaSweep,
    pub verdict: Verdict,
    /// True when the two criteria agree (or the spectrum test abstains).
    pub agreement: bool,
}

pub fn fredholm_verdict(
    field: &SymmetricField,
    lambda_max: f64,
    steps: usize,
    params: &SweepParams,
) -> Result<FredholmReport> {
    let (spectrum_field, sweep_field) = match field.structure() {
        Structure::Periodic { .. } => (field.clone(), field.clone()),
        Structure::AsymptoticPeriodic { limit } => (limit.as_ref().clone(), field.clone()),
        other => {
            return Err(Error::StructureMismatch(format!(
                "fredholm_verdict requires periodic or asymptotically periodic fields, got {}",
                other.kind()
            )))
        }
    };
    let spectrum = monodromy_spectrum_test(&spectrum_field, 1e-8, 1e-4)?;
    let sweep = lambda_sweep(&sweep_field, lambda_max, steps, params)?;
    let verdict = spectrum.verdict;
    let agreement = match verdict {
        Verdict::Fredholm => sweep.constant,
        Verdict::NotFredholm => !sweep.constant,
        Verdict::Inconclusive => true,
    };
    if !agreement {
        return Err(Error::EquivalenceViolation(format!(
            "spectrum verdict {verdict:?} (distance {:.3e}) disagrees with sweep constancy {}",
            spectrum.unit_circle_distance, sweep.constant
        )));
    }
    Ok(FredholmReport { spectrum, sweep, verdict, agreement })
}

/// Spectral projection onto the contracting invariant subspace of M, via the
/// resolvent integral over the unit circle. Exact for spectra split off the
/// circle, and conditioning-friendly at 2d <= 8.
pub fn contracting_projection(m: &RMat) -> Result<RMat> {
    let n = m.nrows();
    let quad = 256usize;
    let mc = to_complex(m);
    let mut p = CMat::zeros(n, n);
    for j in 0..quad {
        let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / quad as f64;
        let z = C64::new(theta.cos(), theta.sin());
        let mut a = -mc.clone();
        for i in 0..n {
            a[(i, i)] += z;
        }
        let inv = a.try_inverse().ok_or_else(|| {
            Error::Precondition("monodromy has spectrum on the unit circle".into())
        })?;
        p += inv * z;
    }
    p /= C64::new(quad as f64, 0.0);
    let mut real = RMat::zeros(n, n);
    let mut max_im = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            real[(i, j)] = p[(i, j)].re;
            max_im = max_im.max(p[(i, j)].im.abs());
        }
    }
    let idem = op_norm(&(&real * &real - &real));
    if max_im > 1e-8 || idem > 1e-8 {
        return Err(Error::Precondition(format!(
            "spectral projection ill-defined (im {max_im:.3e}, idempotency defect {idem:.3e}); \
             spectrum too close to the unit circle"
        )));
    }
    Ok(real)
}

/// Exponential-dichotomy verification report.
#[derive(Clone, Debug)]
pub struct DichotomyReport {
    pub projection: RMat,
    pub beta_forward: f64,
    pub beta_backward: f64,
    pub c_forward: f64,
    pub c_backward: f64,
    pub samples: usize,
    pub ok: bool,
}

/// Verify |gamma(t) P gamma(s)^{-1}| <= C e^{-beta (t-s)} for s <= t and the
/// complementary inequality for I - P, on a grid of about `samples` pairs.
pub fn dichotomy_inequality_check(
    field: &SymmetricField,
    beta_guess: f64,
    samples: usize,
) -> Result<DichotomyReport> {
    let report = monodromy_spectrum_test(field, 1e-8, 1e-4)?;
    if report.verdict != Verdict::Fredholm {
        return Err(Error::Precondition(format!(
            "dichotomy check requires the monodromy spectrum off the unit circle \
             (distance {:.3e})",
            report.unit_circle_distance
        )));
    }
    let p = contracting_projection(&report.monodromy)?;
    dichotomy_check_with_projection(field, &p, beta_guess, samples)
}

/// Same check with a caller-supplied projection (lets tests demonstrate that
/// a swapped projection fails).
pub fn dichotomy_check_with_projection(
    field: &SymmetricField,
    p: &RMat,
    beta_guess: f64,
    samples: usize,
) -> Result<DichotomyReport> {
    let period = field.period().ok_or_else(|| {
        Error::StructureMismatch("dichotomy check requires a periodic field".into())
    })?;
    let n = field.dim();
    let span = (4.0 * period).max(6.0);
    let grid = (samples as f64).sqrt().ceil() as usize;
    let path = fundamental_solution(field, (0.0, span), &Control::default())?;

    let q = RMat::identity(n, n) - p;
    let mut fwd: Vec<(f64, f64)> = Vec::new(); // (tau, log norm) for s <= t
    let mut bwd: Vec<(f64, f64)> = Vec::new(); // (tau, log norm) for s >= t
    let mut count = 0usize;
    for i in 0..grid {
        let s = span * i as f64 / (grid - 1) as f64;
        let gs_inv = path.eval_scaled(s)?.symplectic_inverse();
        for j in 0..grid {
            let t = span * j as f64 / (grid - 1) as f64;
            let gt = path.eval_scaled(t)?;
            count += 1;
            if t >= s {
                let prod = gt.mul_plain(p).mul(&gs_inv);
                let log_norm = prod.log + op_norm(&prod.m).max(1e-300).ln();
                fwd.push((t - s, log_norm));
            }
            if s >= t {
                let prod = gt.mul_plain(&q).mul(&gs_inv);
                let log_norm = prod.log + op_norm(&prod.m).max(1e-300).ln();
                bwd.push((s - t, log_norm));
            }
        }
    }
    let fit = |pts: &[(f64, f64)]| -> (f64, f64) {
        // least squares log|..| = log C - beta tau, then C lifted to dominate
        let n = pts.len() as f64;
        let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
        for &(tau, y) in pts {
            st += tau;
            sy += y;
            stt += tau * tau;
            sty += tau * y;
        }
        let denom = n * stt - st * st;
        let slope = if denom.abs() > 1e-12 { (n * sty - st * sy) / denom } else { 0.0 };
        let beta = -slope;
        let log_c = pts.iter().map(|&(tau, y)| y + beta * tau).fold(f64::NEG_INFINITY, f64::max);
        (beta, log_c.exp())
    };
    let (beta_forward, c_forward) = fit(&fwd);
    let (beta_backward, c_backward) = fit(&bwd);
    let ok = beta_forward > 0.05 && beta_backward > 0.05 && c_forward.is_finite()
        && c_backward.is_finite();
    let _ = beta_guess;
    Ok(DichotomyReport {
        projection: p.clone(),
        beta_forward,
        beta_backward,
        c_forward,
        c_backward,
        samples: count,
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{catalog, Params};
    use std::f64::consts::PI;

    fn cat(name: &str) -> SymmetricField {
        catalog(name, &Params::new()).unwrap()
    }

    fn cat_k(name: &str, kv: &[(&str, f64)]) -> SymmetricField {
        let p: Params = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        catalog(name, &p).unwrap()
    }

    #[test]
    fn hyperbolic_spectrum_is_fredholm() {
        let f = cat("hyperbolic");
        let r = monodromy_spectrum_test(&f, 1e-8, 1e-4).unwrap();
        assert_eq!(r.verdict, Verdict::Fredholm);
        let mut mods: Vec<f64> = r.spectrum.iter().map(|z| z.norm()).collect();
        mods.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((mods[0] - (-1.0f64).exp()).abs() < 1e-6);
        assert!((mods[1] - 1.0f64.exp()).abs() < 1e-6);
    }

    #[test]
    fn elliptic_and_zero_fields_not_fredholm() {
        let rot = cat_k("constant_k", &[("k", 1.0), ("period", 2.0 * PI)]);
        let r = monodromy_spectrum_test(&rot, 1e-8, 1e-4).unwrap();
        assert_eq!(r.verdict, Verdict::NotFredholm);
        assert!(r.spectrum.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-6));

        let zero = cat_k("constant_k", &[("k", 1e-9), ("period", 1.0)]);
        let r = monodromy_spectrum_test(&zero, 1e-8, 1e-4).unwrap();
        assert_eq!(r.verdict, Verdict::NotFredholm);
    }

    #[test]
    fn sweep_constant_on_hyperbolic() {
        let f = cat("hyperbolic");
        let sweep = lambda_sweep(&f, 0.1, 5, &SweepParams::default()).unwrap();
        assert!(sweep.constant, "{:?}", sweep.indices);
        assert!(sweep.indices.iter().all(|&v| v.abs() < 0.05));
    }

    #[test]
    fn sweep_increases_on_full_rotation() {
        let f = cat_k("constant_k", &[("k", 1.0), ("period", 2.0 * PI)]);
        let sweep = lambda_sweep(&f, 0.1, 5, &SweepParams::default()).unwrap();
        assert!(!sweep.constant, "{:?}", sweep.indices);
        assert!(sweep.indices.last().unwrap() > sweep.indices.first().unwrap());
    }

    #[test]
    fn sweep_jumps_for_zero_field() {
        let f = cat_k("constant_k", &[("k", 0.25), ("period", 1.0)]);
        let sweep = lambda_sweep(&f, 0.1, 5, &SweepParams::default()).unwrap();
        assert!(!sweep.constant, "{:?}", sweep.indices);
    }

    #[test]
    fn sweep_validates_arguments() {
        let f = cat("hyperbolic");
        assert!(lambda_sweep(&f, 0.8, 5, &SweepParams::default()).is_err());
        assert!(lambda_sweep(&f, 0.1, 4, &SweepParams::default()).is_err());
    }

    #[test]
    fn verdict_agreement_on_catalog_fields() {
        let f = cat("hyperbolic");
        let report = fredholm_verdict(&f, 0.1, 5, &SweepParams::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Fredholm);
        assert!(report.agreement);

        let rot = cat_k("constant_k", &[("k", 1.0), ("period", 2.0 * PI)]);
        let report = fredholm_verdict(&rot, 0.1, 5, &SweepParams::default()).unwrap();
        assert_eq!(report.verdict, Verdict::NotFredholm);
    }

    #[test]
    fn blend_matches_its_periodic_limit() {
        let f = cat("asymptotic_blend");
        let report =
            fredholm_verdict(&f, 0.1, 5, &SweepParams { theta_samples: 128, horizon: 60.0 })
                .unwrap();
        assert_eq!(report.verdict, Verdict::Fredholm);
        assert!(report.agreement);
    }

    #[test]
    fn dichotomy_on_hyperbolic() {
        let f = cat("hyperbolic");
        let report = dichotomy_inequality_check(&f, 1.0, 2500).unwrap();
        assert!(report.ok);
        assert!(report.beta_forward >= 0.9, "beta = {}", report.beta_forward);
        assert!(report.beta_backward >= 0.9);
        // P projects onto the contracting direction (1, -1)/sqrt(2)
        let p = &report.projection;
        let v = nalgebra::DVector::from_vec(vec![1.0, -1.0]);
        let pv = p * &v;
        assert!((pv - v).norm() < 1e-6);
    }

    #[test]
    fn dichotomy_rejects_elliptic_monodromy() {
        let f = cat_k("constant_k", &[("k", 1.0), ("period", 2.0 * PI)]);
        assert!(matches!(
            dichotomy_inequality_check(&f, 1.0, 400),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn swapped_projection_fails() {
        let f = cat("hyperbolic");
        let m = monodromy(&f, &Control::default()).unwrap();
        let p = contracting_projection(&m).unwrap();
        let swapped = RMat::identity(2, 2) - p;
        let report = dichotomy_check_with_projection(&f, &swapped, 1.0, 900).unwrap();
        assert!(!report.ok, "swapped projection should violate the decay");
        assert!(report.beta_forward < 0.0);
    }
}
