//! Rotation numbers of two-dimensional systems by continuous angle lifting.
//!
//! The solution lift tracks the argument of u(t) + i v(t) for a nonzero
//! solution z = (u, v); the polar lift tracks the angle of the orthogonal
//! factor U(t) = gamma (gamma^T gamma)^{-1/2}. Both are computed on grids
//! refined until every increment is below pi/2, which makes unwrapping
//! unambiguous, and their asymptotic slopes agree within 2 pi / horizon.

use crate::error::{Error, Result};
use crate::linalg::{max_norm, RMat};
use crate::propagate::{fundamental_solution, SymplecticPath};
use crate::systems::SymmetricField;
use std::f64::consts::FRAC_PI_2;
#[cfg(test)]
use std::f64::consts::PI;

/// Continuous angle lifts along a path grid.
#[derive(Clone, Debug)]
pub struct AngleLift {
    pub times: Vec<f64>,
    /// Lifted argument of the solution, theta(0) = theta_0.
    pub theta: Vec<f64>,
    /// Lifted polar angle of the orthogonal factor, phi(0) = 0.
    pub phi: Vec<f64>,
}

impl AngleLift {
    pub fn theta_end(&self) -> f64 {
        *self.theta.last().unwrap()
    }

    pub fn phi_end(&self) -> f64 {
        *self.phi.last().unwrap()
    }

    pub fn to_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "t,theta,phi")?;
        for i in 0..self.times.len() {
            writeln!(out, "{},{:e},{:e}", self.times[i], self.theta[i], self.phi[i])?;
        }
        Ok(())
    }
}

/// Direction of the solution gamma(t) z0, scale-free.
fn solution_direction(path: &SymplecticPath, t: f64, z0: (f64, f64)) -> Result<(f64, f64)> {
    let g = path.eval_scaled(t)?;
    let u = g.m[(0, 0)] * z0.0 + g.m[(0, 1)] * z0.1;
    let v = g.m[(1, 0)] * z0.0 + g.m[(1, 1)] * z0.1;
    let n = (u * u + v * v).sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Integrity(format!("solution direction degenerate at t = {t}")));
    }
    Ok((u / n, v / n))
}

/// Orthogonal polar factor of a 2x2 path value. For det A > 0 the factor is
/// exactly (A + det(A) A^{-T}) / tr(S) = (tr(A) I + (A21 - A12) J) normalized
/// (Cayley-Hamilton applied to the positive factor), which is scale-free and
/// keeps orthogonality at machine precision on strongly hyperbolic paths.
fn polar_factor(path: &SymplecticPath, t: f64) -> Result<RMat> {
    let g = &path.eval_scaled(t)?.m;
    let alpha = g[(0, 0)] + g[(1, 1)];
    let beta = g[(1, 0)] - g[(0, 1)];
    // alpha^2 + beta^2 = tr(S)^2 >= sigma_max^2, which is O(1) for the
    // renormalized matrix part of any genuine path value
    let norm = (alpha * alpha + beta * beta).sqrt();
    if !(norm > 1e-9 * g.norm().max(1.0)) {
        return Err(Error::Integrity(format!(
            "gamma^T gamma lost positive definiteness at t = {t}"
        )));
    }
    let (c, s) = (alpha / norm, beta / norm);
    let u = RMat::from_row_slice(2, 2, &[c, -s, s, c]);
    debug_assert!(max_norm(&(u.transpose() * &u - RMat::identity(2, 2))) < 1e-12);
    Ok(u)
}

/// Unwrapped increment between two directions, required below pi/2; on
/// failure the interval is refined through `angle_at`.
fn lift_on_grid(
    times: &[f64],
    mut angle_at: impl FnMut(f64) -> Result<(f64, f64)>,
    start_angle: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ts = vec![times[0]];
    let mut lifted = vec![start_angle];
    let mut prev = angle_at(times[0])?;
    for &t in &times[1..] {
        // refine until each subinterval turns by less than pi/2
        let mut stack = vec![(ts[ts.len() - 1], t, prev, angle_at(t)?, 0usize)];
        while let Some((t0, t1, d0, d1, depth)) = stack.pop() {
            let cross = d0.0 * d1.1 - d0.1 * d1.0;
            let dot = d0.0 * d1.0 + d0.1 * d1.1;
            let delta = cross.atan2(dot);
            if delta.abs() < FRAC_PI_2 || depth >= 24 {
                if delta.abs() >= FRAC_PI_2 {
                    return Err(Error::LiftFailure(t0));
                }
                let top = *lifted.last().unwrap();
                ts.push(t1);
                lifted.push(top + delta);
            } else {
                let tm = 0.5 * (t0 + t1);
                let dm = angle_at(tm)?;
                stack.push((tm, t1, dm, d1, depth + 1));
                stack.push((t0, tm, d0, dm, depth + 1));
            }
        }
        prev = angle_at(t)?;
    }
    Ok((ts, lifted))
}

/// Continuous lifts of the solution angle and the polar angle along the path.
pub fn angle_lift(path: &SymplecticPath, z0: (f64, f64)) -> Result<AngleLift> {
    if path.dim_half() != 1 {
        return Err(Error::Precondition("angle lift is defined for d = 1".into()));
    }
    if z0.0 == 0.0 && z0.1 == 0.0 {
        return Err(Error::InvalidArgument("z0 must be nonzero".into()));
    }
    let times: Vec<f64> = path.times().collect();
    let theta0 = z0.1.atan2(z0.0);
    let (ts_theta, theta) = lift_on_grid(&times, |t| solution_direction(path, t, z0), theta0)?;
    let (ts_phi, phi) = lift_on_grid(
        &times,
        |t| {
            let u = polar_factor(path, t)?;
            Ok((u[(0, 0)], u[(1, 0)]))
        },
        0.0,
    )?;
    // merge onto the common grid (refinements may differ): re-sample both
    // lifts at the path grid only
    let pick = |ts: &[f64], vals: &[f64]| -> Vec<f64> {
        times
            .iter()
            .map(|&t| {
                let i = ts.partition_point(|&x| x <= t + 1e-15).saturating_sub(1);
                vals[i]
            })
            .collect()
    };
    let theta_grid = pick(&ts_theta, &theta);
    let phi_grid = pick(&ts_phi, &phi);

    // comparison inequality from the polar decomposition, with lift slack
    for i in 0..times.len() {
        let gap = (theta_grid[i] - (theta0 + phi_grid[i])).abs();
        if gap > FRAC_PI_2 + 0.2 {
            return Err(Error::Integrity(format!(
                "solution and polar lifts separated by {gap:.4} > pi/2 at t = {}",
                times[i]
            )));
        }
    }
    Ok(AngleLift { times, theta: theta_grid, phi: phi_grid })
}

/// Rotation number estimate with a trend diagnostic.
#[derive(Clone, Debug)]
pub struct RotationNumber {
    pub value: f64,
    /// Slope of theta over the last half of the horizon.
    pub trend: f64,
    pub horizon: f64,
    pub theta_end: f64,
}

pub fn rotation_number(
    field: &SymmetricField,
    horizon: f64,
    z0: (f64, f64),
) -> Result<RotationNumber> {
    if field.dim_half() != 1 {
        return Err(Error::Precondition("rotation number is defined for d = 1".into()));
    }
    if horizon < 10.0 {
        return Err(Error::InsufficientHorizon("rotation number needs horizon >= 10".into(), horizon));
    }
    let path = fundamental_solution(
        field,
        (0.0, horizon),
        &crate::mean_index::index_control(field),
    )?;
    let lift = angle_lift(&path, z0)?;
    let value = lift.theta_end() / horizon;
    let half = horizon / 2.0;
    let i_half = lift.times.partition_point(|&t| t < half).min(lift.times.len() - 1);
    let trend = (lift.theta_end() - lift.theta[i_half])
        / (lift.times.last().unwrap() - lift.times[i_half]).max(1e-12);
    Ok(RotationNumber { value, trend, horizon, theta_end: lift.theta_end() })
}

/// The polar-angle route: R(B) as the asymptotic slope of phi.
pub fn polar_split(path: &SymplecticPath) -> Result<AngleLift> {
    angle_lift(path, (1.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::Control;
    use crate::systems::{catalog, osc_hyperbolic_angle, Params};

    fn cat_k(name: &str, kv: &[(&str, f64)]) -> SymmetricField {
        let p: Params = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        catalog(name, &p).unwrap()
    }

    #[test]
    fn zero_field_angle_constant() {
        let f = cat_k("constant_k", &[("k", 1e-9)]);
        let path = fundamental_solution(&f, (0.0, 8.0), &Control::default()).unwrap();
        let lift = angle_lift(&path, (1.0, 0.0)).unwrap();
        for &th in &lift.theta {
            assert!(th.abs() < 1e-7);
        }
    }

    #[test]
    fn unit_rotation_lifts_linearly() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        let path = fundamental_solution(&f, (0.0, 4.0 * PI), &Control::default()).unwrap();
        let lift = angle_lift(&path, (1.0, 0.0)).unwrap();
        for (i, &t) in lift.times.iter().enumerate() {
            assert!((lift.theta[i] - t).abs() < 1e-7, "theta({t}) = {}", lift.theta[i]);
            assert!((lift.phi[i] - t).abs() < 1e-7);
        }
    }

    #[test]
    fn hyperbolic_angle_stays_bounded() {
        let f = catalog("hyperbolic", &Params::new()).unwrap();
        let path = fundamental_solution(&f, (0.0, 40.0), &Control::default()).unwrap();
        let lift = angle_lift(&path, (1.0, 1.0)).unwrap();
        // solution e^t (1,1)/sqrt(2): direction frozen at pi/4
        assert!((lift.theta_end() - PI / 4.0).abs() < 1e-6);
        // polar angle identically zero: gamma is symmetric positive definite
        assert!(lift.phi.iter().all(|&p| p.abs() < 1e-7));
    }

    #[test]
    fn rejects_zero_vector_and_small_horizons() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        let path = fundamental_solution(&f, (0.0, 12.0), &Control::default()).unwrap();
        assert!(angle_lift(&path, (0.0, 0.0)).is_err());
        assert!(rotation_number(&f, 5.0, (1.0, 0.0)).is_err());
    }

    #[test]
    fn rotation_number_of_unit_field() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        let r = rotation_number(&f, 100.0, (1.0, 0.0)).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "R = {}", r.value);
        assert!((r.trend - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rotation_number_scales_with_k() {
        for k in [0.5, 2.0, -1.3] {
            let f = cat_k("constant_k", &[("k", k)]);
            let r = rotation_number(&f, 60.0, (1.0, 0.0)).unwrap();
            assert!((r.value - k).abs() < 1e-6, "k = {k}, R = {}", r.value);
        }
    }

    #[test]
    fn rotation_number_independent_of_z0() {
        let f = catalog("quasi_periodic_demo", &Params::new()).unwrap();
        let horizon = 120.0;
        let r1 = rotation_number(&f, horizon, (1.0, 0.0)).unwrap().value;
        let r2 = rotation_number(&f, horizon, (0.0, 1.0)).unwrap().value;
        let r3 = rotation_number(&f, horizon, (0.6, -0.8)).unwrap().value;
        let tol = 2.0 * PI / horizon + 1e-6;
        assert!((r1 - r2).abs() <= tol);
        assert!((r1 - r3).abs() <= tol);
    }

    #[test]
    fn quasi_periodic_rotation_near_average_speed() {
        // B = beta(t) I with mean 1.5
        let f = catalog("quasi_periodic_demo", &Params::new()).unwrap();
        let r = rotation_number(&f, 200.0, (1.0, 0.0)).unwrap();
        assert!((r.value - 1.5).abs() < 0.05, "R = {}", r.value);
    }

    #[test]
    fn polar_angle_matches_construction() {
        let f = catalog("example_45", &Params::new()).unwrap();
        let path = fundamental_solution(&f, (0.0, 30.0), &Control::default()).unwrap();
        let lift = polar_split(&path).unwrap();
        for (i, &t) in lift.times.iter().enumerate() {
            let expect = osc_hyperbolic_angle(t);
            assert!(
                (lift.phi[i] - expect).abs() < 1e-6,
                "phi({t}) = {} vs psi = {expect}",
                lift.phi[i]
            );
        }
    }

    #[test]
    fn solution_and_polar_slopes_agree() {
        let f = catalog("quasi_periodic_demo", &Params::new()).unwrap();
        let horizon = 150.0;
        let path = fundamental_solution(
            &f,
            (0.0, horizon),
            &crate::mean_index::index_control(&f),
        )
        .unwrap();
        let lift = angle_lift(&path, (1.0, 0.0)).unwrap();
        let r_theta = lift.theta_end() / horizon;
        let r_phi = lift.phi_end() / horizon;
        assert!((r_theta - r_phi).abs() <= 2.0 * PI / horizon + 1e-6);
    }
}
