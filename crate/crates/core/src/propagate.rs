//! Fundamental symplectic solutions gamma(t) of z' = J B(t) z.
//!
//! Paths are stored as grids of scaled matrices (see `linalg::ScaledMat`) so
//! hyperbolic growth never overflows. Each grid step integrates the transfer
//! matrix from the identity with an adaptive Dormand-Prince 5(4) pair and a
//! symplectic Newton projection, then composes it onto the running product.
//! Dense output re-integrates locally from the nearest grid node; matrices
//! are never interpolated, since interpolants leave Sp(2d) and corrupt
//! kernel dimensions downstream.

use crate::error::{Error, Result};
use crate::linalg::{
    max_norm, std_j, symplectic_defect, symplectic_project, RMat, ScaledMat,
};
use crate::systems::{osc_hyperbolic_angle, ClosedFormPath, Structure, SymmetricField};

/// Step-control parameters for the propagator.
#[derive(Clone, Copy, Debug)]
pub struct Control {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Budget for the symplecticity residual of the whole path.
    pub sympl_tol: f64,
}

impl Default for Control {
    fn default() -> Self {
        Control { rel_tol: 1e-11, abs_tol: 1e-13, max_step: 0.1, sympl_tol: 1e-8 }
    }
}

impl Control {
    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

#[derive(Clone, Debug)]
struct Node {
    t: f64,
    g: ScaledMat,
}

/// A discretized fundamental solution on a time grid, with scaled matrices
/// and residual tracking. Immutable after construction.
#[derive(Clone, Debug)]
pub struct SymplecticPath {
    field: SymmetricField,
    nodes: Vec<Node>,
    anchor: RMat,
    sympl_residual: f64,
    det_drift: f64,
    control: Control,
    closed_form: Option<ClosedFormPath>,
}

const DEEP_SCALE: f64 = 150.0;

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate the transfer matrix U (U(t0) = I, U' = J B(t) U) over a short
/// span with the adaptive embedded pair. Returns (U, accumulated |ln det|).
fn integrate_transfer(field: &SymmetricField, t0: f64, t1: f64, ctl: &Control) -> Result<(RMat, f64)> {
    let n = field.dim();
    let j = std_j(field.dim_half());
    let span = t1 - t0;
    debug_assert!(span >= 0.0);
    if span == 0.0 {
        return Ok((RMat::identity(n, n), 0.0));
    }
    let rhs = |t: f64, y: &RMat| -> RMat { &j * field.eval_unchecked(t) * y };

    let mut u = RMat::identity(n, n);
    let mut t = t0;
    let mut h = span.min(0.25 / field.bound().max(1e-6)).min(ctl.max_step);
    let mut det_drift = 0.0f64;
    let mut rejects_in_a_row = 0usize;
    let done_eps = 1e-13 * (1.0 + t1.abs());
    let mut shrink_failures = 0usize;
    loop {
        if t >= t1 - done_eps {
            break;
        }
        h = h.min(t1 - t);
        if h < 1e-14 * (1.0 + t.abs()) {
            shrink_failures += 1;
            if shrink_failures > 3 {
                return Err(Error::Propagation { residual: h, tolerance: ctl.rel_tol });
            }
            h = done_eps.max(h * 10.0);
        }
        let mut k: Vec<RMat> = Vec::with_capacity(7);
        k.push(rhs(t, &u));
        for i in 0..6 {
            let mut y = u.clone();
            for (l, kl) in k.iter().enumerate() {
                if A[i][l] != 0.0 {
                    y += kl * (A[i][l] * h);
                }
            }
            k.push(rhs(t + C[i + 1] * h, &y));
        }
        let mut y5 = u.clone();
        let mut err = RMat::zeros(n, n);
        for (l, kl) in k.iter().enumerate() {
            if B5[l] != 0.0 {
                y5 += kl * (B5[l] * h);
            }
            let d = B5[l] - B4[l];
            if d != 0.0 {
                err += kl * (d * h);
            }
        }
        let sc = ctl.abs_tol + ctl.rel_tol * max_norm(&y5).max(1.0);
        let ratio = max_norm(&err) / sc;
        if ratio <= 1.0 {
            t += h;
            u = y5;
            rejects_in_a_row = 0;
        } else {
            rejects_in_a_row += 1;
            if rejects_in_a_row > 60 {
                return Err(Error::Propagation { residual: ratio * sc, tolerance: sc });
            }
        }
        let fac = if ratio > 0.0 { 0.9 * ratio.powf(-0.2) } else { 5.0 };
        h *= fac.clamp(0.2, 5.0);
        h = h.min(ctl.max_step);
    }
    // cheap per-step cleanup: the transfer is O(1)-conditioned, so the Newton
    // projection is always valid here
    let defect = symplectic_defect(&ScaledMat::from_parts(u.clone(), 0.0));
    if defect > 1e-13 {
        u = symplectic_project(&u);
    }
    let det = u.clone().determinant();
    if det > 0.0 {
        det_drift += det.ln().abs();
    }
    Ok((u, det_drift))
}

fn closed_form_scaled(kind: ClosedFormPath, t: f64) -> ScaledMat {
    match kind {
        ClosedFormPath::OscillatingHyperbolic => {
            let psi = osc_hyperbolic_angle(t);
            let (s, c) = psi.sin_cos();
            let scale = t.abs();
            let e1 = (t - scale).exp();
            let e2 = (-t - scale).exp();
            // R(psi) * diag(e^t, e^{-t}) * e^{-scale}
            let m = RMat::from_row_slice(2, 2, &[c * e1, -s * e2, s * e1, c * e2]);
            ScaledMat::from_parts(m, scale)
        }
    }
}

/// Transfer gamma(t) gamma(s)^{-1} of a closed-form path, in scaled form.
fn closed_form_transfer(kind: ClosedFormPath, s: f64, t: f64) -> ScaledMat {
    match kind {
        ClosedFormPath::OscillatingHyperbolic => {
            let (sa, ca) = osc_hyperbolic_angle(t).sin_cos();
            let (sb, cb) = osc_hyperbolic_angle(s).sin_cos();
            let dt = t - s;
            let scale = dt.abs();
            let e1 = (dt - scale).exp();
            let e2 = (-dt - scale).exp();
            // R(psi(t)) diag(e^{dt}, e^{-dt}) R(-psi(s)) * e^{-scale}
            let m = RMat::from_row_slice(
                2,
                2,
                &[
                    ca * e1 * cb + sa * e2 * sb,
                    ca * e1 * sb - sa * e2 * cb,
                    sa * e1 * cb - ca * e2 * sb,
                    sa * e1 * sb + ca * e2 * cb,
                ],
            );
            ScaledMat::from_parts(m, scale)
        }
    }
}

/// Fundamental solution with gamma(a) = I.
pub fn fundamental_solution(
    field: &SymmetricField,
    interval: (f64, f64),
    control: &Control,
) -> Result<SymplecticPath> {
    let n = field.dim();
    fundamental_solution_anchored(field, interval, RMat::identity(n, n), control)
}

/// Fundamental solution with a caller-supplied anchor at the start time.
/// A decreasing interval is reparametrized internally: the returned path runs
/// over [0, a-b] and is generated by the reversed, shifted field, so its
/// value at s equals gamma(a-s) gamma(a)^{-1} * anchor.
pub fn fundamental_solution_anchored(
    field: &SymmetricField,
    interval: (f64, f64),
    anchor: RMat,
    control: &Control,
) -> Result<SymplecticPath> {
    let (a, b) = interval;
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument("non-finite interval".into()));
    }
    if b < a {
        let reversed = field.shift(a).reverse();
        return fundamental_solution_anchored(&reversed, (0.0, a - b), anchor, control);
    }

    let node_step = control.max_step.min(0.4 / field.bound().max(1e-6));
    let steps = (((b - a) / node_step).ceil() as usize).max(1);
    let dt = (b - a) / steps as f64;

    let mut nodes = Vec::with_capacity(steps + 1);
    nodes.push(Node { t: a, g: ScaledMat::from_parts(anchor.clone(), 0.0) });

    let closed_form = field.closed_form_path();
    let mut sympl_residual = symplectic_defect(&nodes[0].g);
    let mut det_drift = 0.0f64;

    if let Some(kind) = closed_form {
        let base_inv = closed_form_scaled(kind, a).symplectic_inverse();
        for i in 1..=steps {
            let t = if i == steps { b } else { a + dt * i as f64 };
            let g = closed_form_scaled(kind, t).mul(&base_inv).mul_plain(&anchor);
            if g.log.abs() < DEEP_SCALE {
                sympl_residual = sympl_residual.max(symplectic_defect(&g));
            }
            nodes.push(Node { t, g });
        }
    } else {
        for i in 1..=steps {
            let t_prev = nodes[i - 1].t;
            let t = if i == steps { b } else { a + dt * i as f64 };
            let (u, dd) = integrate_transfer(field, t_prev, t, control)?;
            det_drift += dd;
            let mut g = nodes[i - 1].g.pre_mul(&u);
            let defect = symplectic_defect(&g);
            if defect > 0.5 * control.sympl_tol && g.log.abs() < DEEP_SCALE {
                g = ScaledMat::from_parts(scaled_project(&g), g.log);
            }
            sympl_residual = sympl_residual.max(symplectic_defect(&g));
            nodes.push(Node { t, g });
        }
    }

    if sympl_residual > control.sympl_tol {
        return Err(Error::Propagation { residual: sympl_residual, tolerance: control.sympl_tol });
    }

    Ok(SymplecticPath {
        field: field.clone(),
        nodes,
        anchor,
        sympl_residual,
        det_drift,
        control: *control,
        closed_form,
    })
}

/// Newton projection of the matrix part of a scaled near-symplectic value,
/// targeting Gamma^T J Gamma = e^{-2 log} J.
fn scaled_project(g: &ScaledMat) -> RMat {
    let d = g.m.nrows() / 2;
    let j = std_j(d);
    let jinv = -j.clone();
    let mut m = g.m.clone();
    let back = (2.0 * g.log).exp();
    for _ in 0..2 {
        let e = &jinv * m.transpose() * &j * &m * back - RMat::identity(2 * d, 2 * d);
        m = &m * (RMat::identity(2 * d, 2 * d) - e * 0.5);
    }
    m
}

impl SymplecticPath {
    pub fn field(&self) -> &SymmetricField {
        &self.field
    }

    pub fn dim_half(&self) -> usize {
        self.field.dim_half()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.nodes[0].t, self.nodes.last().unwrap().t)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|n| n.t)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn anchor(&self) -> &RMat {
        &self.anchor
    }

    pub fn sympl_residual(&self) -> f64 {
        self.sympl_residual
    }

    /// Accumulated |ln det| of the step transfers; bounds |det gamma - 1|.
    pub fn det_drift(&self) -> f64 {
        self.det_drift
    }

    pub fn control(&self) -> &Control {
        &self.control
    }

    fn node_index_at_or_before(&self, t: f64) -> usize {
        match self.nodes.binary_search_by(|n| n.t.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// gamma(t) in scaled form, re-integrating locally from the nearest grid
    /// node to the left.
    pub fn eval_scaled(&self, t: f64) -> Result<ScaledMat> {
        let (lo, hi) = self.domain();
        if !(t >= lo - 1e-12 && t <= hi + 1e-12) {
            return Err(Error::Domain { t, lo, hi });
        }
        let t = t.clamp(lo, hi);
        let i = self.node_index_at_or_before(t);
        let node = &self.nodes[i];
        if t == node.t {
            return Ok(node.g.clone());
        }
        if let Some(kind) = self.closed_form {
            let u = closed_form_transfer(kind, node.t, t);
            return Ok(u.mul(&node.g));
        }
        let (u, _) = integrate_transfer(&self.field, node.t, t, &self.control)?;
        Ok(node.g.pre_mul(&u))
    }

    /// gamma(t) as a plain matrix; only valid while the scale is moderate.
    pub fn eval(&self, t: f64) -> Result<RMat> {
        let g = self.eval_scaled(t)?;
        if g.log > 700.0 {
            return Err(Error::Integrity(format!(
                "path value at t = {t} exceeds the representable range (log scale {:.1})",
                g.log
            )));
        }
        Ok(g.to_plain())
    }

    /// The transfer gamma(t) gamma(s)^{-1} in scaled form.
    pub fn transfer(&self, s: f64, t: f64) -> Result<ScaledMat> {
        if let Some(kind) = self.closed_form {
            let (lo, hi) = self.domain();
            if !(s >= lo - 1e-12 && s <= hi + 1e-12 && t >= lo - 1e-12 && t <= hi + 1e-12) {
                return Err(Error::Domain { t: if s < lo || s > hi { s } else { t }, lo, hi });
            }
            return Ok(closed_form_transfer(kind, s, t));
        }
        let gs = self.eval_scaled(s)?;
        let gt = self.eval_scaled(t)?;
        Ok(gt.mul(&gs.symplectic_inverse()))
    }

    /// The restarted path t -> gamma(s + t) gamma(s)^{-1} over the remaining
    /// domain, anchored at the identity.
    pub fn compose_restart(&self, s: f64) -> Result<SymplecticPath> {
        let (lo, hi) = self.domain();
        if !(s >= lo - 1e-12 && s <= hi + 1e-12) {
            return Err(Error::Domain { t: s, lo, hi });
        }
        let gs_inv = self.eval_scaled(s)?.symplectic_inverse();
        let n = self.field.dim();
        let mut nodes = vec![Node { t: 0.0, g: ScaledMat::from_parts(RMat::identity(n, n), 0.0) }];
        let mut residual = 0.0f64;
        for node in self.nodes.iter().filter(|n| n.t > s + 1e-12) {
            let g = node.g.mul(&gs_inv);
            if g.log.abs() < DEEP_SCALE {
                residual = residual.max(symplectic_defect(&g));
            }
            nodes.push(Node { t: node.t - s, g });
        }
        if nodes.len() == 1 {
            nodes.push(Node {
                t: 0.0,
                g: ScaledMat::from_parts(RMat::identity(n, n), 0.0),
            });
            nodes[1].t = 0.0;
            // degenerate restart at the right endpoint keeps a single node
            nodes.pop();
        }
        Ok(SymplecticPath {
            field: self.field.shift(s),
            nodes,
            anchor: RMat::identity(n, n),
            sympl_residual: residual.max(self.sympl_residual),
            det_drift: self.det_drift,
            control: self.control,
            closed_form: None,
        })
    }

    /// Largest log-scale along the grid (log ||gamma||, up to a constant).
    pub fn max_log_scale(&self) -> f64 {
        self.nodes.iter().fold(0.0f64, |a, n| a.max(n.g.log))
    }

    /// Check the Gronwall envelope log||gamma(t)|| <= K (t - t0) + log||anchor|| + slack.
    pub fn gronwall_ok(&self, slack: f64) -> bool {
        let k = self.field.bound();
        let t0 = self.nodes[0].t;
        let anchor_log = crate::linalg::op_norm(&self.anchor).ln();
        self.nodes.iter().all(|n| n.g.log_op_norm() <= k * (n.t - t0) + anchor_log + slack)
    }

    /// Dump the grid as CSV: t, row-major matrix entries, log scale, residual.
    pub fn to_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        let n = self.field.dim();
        write!(out, "t")?;
        for i in 0..n {
            for j in 0..n {
                write!(out, ",g{}{}", i, j)?;
            }
        }
        writeln!(out, ",log_scale,sympl_residual")?;
        for node in &self.nodes {
            write!(out, "{}", node.t)?;
            for i in 0..n {
                for j in 0..n {
                    write!(out, ",{:e}", node.g.m[(i, j)])?;
                }
            }
            writeln!(out, ",{:e},{:e}", node.g.log, self.sympl_residual)?;
        }
        Ok(())
    }
}

/// Monodromy matrix gamma(T) of a periodic field.
pub fn monodromy(field: &SymmetricField, control: &Control) -> Result<RMat> {
    let period = match field.structure() {
        Structure::Periodic { period } => *period,
        other => {
            return Err(Error::StructureMismatch(format!(
                "monodromy requires a periodic field, got {}",
                other.kind()
            )))
        }
    };
    let path = fundamental_solution(field, (0.0, period), control)?;
    path.eval(period)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::exp_j;
    use crate::systems::{catalog, Params};
    use std::f64::consts::PI;

    fn ctl() -> Control {
        Control::default()
    }

    fn cat(name: &str) -> SymmetricField {
        catalog(name, &Params::new()).unwrap()
    }

    fn cat_k(name: &str, kv: &[(&str, f64)]) -> SymmetricField {
        let p: Params = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        catalog(name, &p).unwrap()
    }

    #[test]
    fn zero_field_gives_identity() {
        let f = cat_k("constant_k", &[("k", 1e-12)]);
        let path = fundamental_solution(&f, (0.0, 5.0), &ctl()).unwrap();
        for t in [0.0, 1.7, 5.0] {
            let g = path.eval(t).unwrap();
            assert!(max_norm(&(g - RMat::identity(2, 2))) < 1e-10);
        }
    }

    #[test]
    fn unit_field_rotates_by_quarter_turn() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        let path = fundamental_solution(&f, (0.0, PI / 2.0), &ctl()).unwrap();
        let g = path.eval(PI / 2.0).unwrap();
        assert!(max_norm(&(g - std_j(1))) < 1e-8);
    }

    #[test]
    fn hyperbolic_closed_form_at_one() {
        let f = cat("hyperbolic");
        let path = fundamental_solution(&f, (0.0, 1.0), &ctl()).unwrap();
        let g = path.eval(1.0).unwrap();
        let expect = RMat::identity(2, 2) * 1.0f64.cosh()
            + RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]) * 1.0f64.sinh();
        assert!(max_norm(&(g - expect)) < 1e-8);
    }

    #[test]
    fn monodromy_of_full_rotation_is_identity() {
        let f = cat_k("constant_k", &[("k", 1.0), ("period", 2.0 * PI)]);
        let m = monodromy(&f, &ctl()).unwrap();
        assert!(max_norm(&(m - RMat::identity(2, 2))) < 1e-8);
    }

    #[test]
    fn monodromy_of_hyperbolic_has_exp_eigenvalues() {
        let f = cat("hyperbolic");
        let m = monodromy(&f, &ctl()).unwrap();
        let mut eig: Vec<f64> =
            crate::linalg::complex_eigenvalues(&m).iter().map(|z| z.re).collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eig[0] - (-1.0f64).exp()).abs() < 1e-6);
        assert!((eig[1] - 1.0f64.exp()).abs() < 1e-6);
    }

    #[test]
    fn monodromy_requires_periodic_structure() {
        let f = cat("example_45");
        assert!(matches!(monodromy(&f, &ctl()), Err(Error::StructureMismatch(_))));
    }

    #[test]
    fn compose_restart_group_property() {
        let f = cat_k("constant_k", &[("k", 1.0)]);
        let path = fundamental_solution(&f, (0.0, PI), &ctl()).unwrap();
        let restarted = path.compose_restart(PI / 4.0).unwrap();
        let g = restarted.eval(PI / 4.0).unwrap();
        assert!(max_norm(&(g - exp_j(1, PI / 4.0))) < 1e-8);
    }

    #[test]
    fn compose_restart_at_start_is_identity_reanchor() {
        let f = cat("periodic_demo");
        let path = fundamental_solution(&f, (0.0, 3.0), &ctl()).unwrap();
        let restarted = path.compose_restart(0.0).unwrap();
        for t in [0.5, 1.5, 3.0] {
            let a = path.eval(t).unwrap();
            let b = restarted.eval(t).unwrap();
            assert!(max_norm(&(a - b)) < 1e-9);
        }
    }

    #[test]
    fn cocycle_against_direct_propagation() {
        let f = cat("quasi_periodic_demo");
        let path = fundamental_solution(&f, (0.0, 8.0), &ctl()).unwrap();
        let s = 3.1;
        let restarted = path.compose_restart(s).unwrap();
        let shifted = f.shift(s);
        let direct = fundamental_solution(&shifted, (0.0, 4.0), &ctl()).unwrap();
        for t in [0.0, 1.2, 2.9, 4.0] {
            let a = restarted.eval(t).unwrap();
            let b = direct.eval(t).unwrap();
            assert!(max_norm(&(a - b)) < 1e-7, "cocycle mismatch at t={t}");
        }
    }

    #[test]
    fn double_restart_composes() {
        let f = cat("periodic_demo");
        let path = fundamental_solution(&f, (0.0, 6.0), &ctl()).unwrap();
        let twice = path.compose_restart(1.0).unwrap().compose_restart(1.5).unwrap();
        let once = path.compose_restart(2.5).unwrap();
        for t in [0.5, 2.0, 3.5] {
            assert!(max_norm(&(twice.eval(t).unwrap() - once.eval(t).unwrap())) < 1e-8);
        }
    }

    #[test]
    fn residuals_within_budget() {
        for name in ["periodic_demo", "quasi_periodic_demo", "hyperbolic", "asymptotic_blend"] {
            let f = cat(name);
            let path = fundamental_solution(&f, (0.0, 20.0), &ctl()).unwrap();
            assert!(path.sympl_residual() <= 1e-8, "{name}: {}", path.sympl_residual());
            assert!(path.det_drift() <= 1e-9, "{name}: {}", path.det_drift());
            assert!(path.gronwall_ok(1e-6), "{name} breaks the growth envelope");
        }
    }

    #[test]
    fn closed_form_path_matches_integration() {
        let f = cat("example_45");
        let cf = fundamental_solution(&f, (0.0, 12.0), &ctl()).unwrap();
        assert!(cf.node_count() > 10);
        // force the integrator over the same window by erasing the closed form
        let g_cf = cf.eval_scaled(12.0).unwrap();
        let shifted = f.shift(0.0); // drops the closed-form tag via TimeMap
        assert!(shifted.closed_form_path().is_none());
        let int = fundamental_solution(&shifted, (0.0, 12.0), &ctl()).unwrap();
        let g_int = int.eval_scaled(12.0).unwrap();
        assert!((g_cf.log - g_int.log).abs() < 1e-6);
        assert!(max_norm(&(&g_cf.m - &g_int.m)) < 1e-6);
    }

    #[test]
    fn backward_interval_reparametrizes() {
        // gamma(t) = e^{Jt}; backward from 0 to -pi/2 gives gamma(-s) = e^{-Js}
        let f = cat_k("constant_k", &[("k", 1.0)]);
        let path = fundamental_solution(&f, (0.0, -PI / 2.0), &ctl()).unwrap();
        let g = path.eval(PI / 2.0).unwrap();
        assert!(max_norm(&(g - exp_j(1, -PI / 2.0))) < 1e-8);
    }

    #[test]
    fn deep_hyperbolic_scale_is_tracked() {
        let f = cat("example_45");
        let path = fundamental_solution(&f, (0.0, 500.0), &ctl().with_max_step(0.25)).unwrap();
        let g = path.eval_scaled(500.0).unwrap();
        assert!((g.log - 500.0).abs() < 1.0);
        assert!(path.eval(500.0).is_ok()); // e^500 still representable
        let far = fundamental_solution(&f, (0.0, 1000.0), &ctl().with_max_step(0.25)).unwrap();
        assert!(far.eval(1000.0).is_err()); // e^1000 is not
    }

    #[test]
    fn anchor_is_exact() {
        let f = cat("periodic_demo");
        let anchor = exp_j(1, 0.3);
        let path =
            fundamental_solution_anchored(&f, (1.0, 4.0), anchor.clone(), &ctl()).unwrap();
        let g0 = path.eval(1.0).unwrap();
        assert_eq!(g0, anchor);
    }

    #[test]
    fn field_continuity_estimate() {
        // || gamma_1(1) - gamma_2(1) || <= (1 + K e^K) e^K * delta, margin 2x
        let delta = 1e-3;
        let f1 = cat_k("constant_k", &[("k", 1.0)]);
        let f2 = cat_k("constant_k", &[("k", 1.0 + delta)]);
        let k = 1.0 + delta;
        let g1 = fundamental_solution(&f1, (0.0, 1.0), &ctl()).unwrap().eval(1.0).unwrap();
        let g2 = fundamental_solution(&f2, (0.0, 1.0), &ctl()).unwrap().eval(1.0).unwrap();
        let bound = 2.0 * (1.0 + k * k.exp()) * k.exp() * delta;
        assert!(max_norm(&(g1 - g2)) <= bound);
    }
}
