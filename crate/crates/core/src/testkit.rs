//! Seeded random fixtures shared by the test suites and the CLI selftest:
//! trigonometric coefficient fields, strictly positive fields, and random
//! symplectic anchors.

use crate::linalg::{op_norm, RMat};
use crate::propagate::{fundamental_solution, Control};
use crate::systems::{Mode, Structure, SymmetricField, Term};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> RMat {
    let mut m = RMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let x = rng.gen_range(-scale..scale);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

/// A random trigonometric-sum field with operator norm at most `k_bound`.
/// With a period, all mode frequencies are harmonics of 2 pi / period.
pub fn random_trig_field(
    rng: &mut ChaCha8Rng,
    d: usize,
    k_bound: f64,
    period: Option<f64>,
) -> SymmetricField {
    let n = 2 * d;
    let modes = rng.gen_range(1..=3usize);
    let mut terms = vec![Term {
        coef: random_symmetric(rng, n, 1.0),
        mode: Mode::Constant,
        freq: 0.0,
        phase: 0.0,
    }];
    for m in 1..=modes {
        let freq = match period {
            Some(t) => 2.0 * PI * m as f64 / t,
            None => rng.gen_range(0.3..3.0),
        };
        terms.push(Term {
            coef: random_symmetric(rng, n, 0.8),
            mode: if rng.gen_bool(0.5) { Mode::Cos } else { Mode::Sin },
            freq,
            phase: 0.0,
        });
    }
    // rescale so the sampled operator norm sits just under the declared bound
    let sample_max = (0..512)
        .map(|i| {
            let t = -30.0 + 60.0 * i as f64 / 511.0;
            let b: RMat = terms
                .iter()
                .map(|term| {
                    &term.coef
                        * match term.mode {
                            Mode::Constant => 1.0,
                            Mode::Cos => (term.freq * t).cos(),
                            Mode::Sin => (term.freq * t).sin(),
                        }
                })
                .sum();
            op_norm(&b)
        })
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let scale = 0.95 * k_bound / sample_max;
    for term in terms.iter_mut() {
        term.coef *= scale;
    }
    let structure = match period {
        Some(t) => Structure::Periodic { period: t },
        None => Structure::Generic,
    };
    SymmetricField::new("random_trig", d, k_bound, structure, terms)
        .expect("random field construction")
}

/// A strictly positive field B(t) = Q(t)^T Q(t) + 0.1 I with ||B|| <= k_bound.
pub fn random_positive_field(rng: &mut ChaCha8Rng, d: usize, k_bound: f64) -> SymmetricField {
    let n = 2 * d;
    // Q(t) = Q0 + Q1 cos(nu t) + Q2 sin(mu t); B = Q^T Q + 0.1 I expands into
    // a finite trigonometric sum, assembled here numerically term by term
    let q0 = random_symmetric(rng, n, 0.6);
    let q1 = random_symmetric(rng, n, 0.4);
    let q2 = random_symmetric(rng, n, 0.4);
    let nu = rng.gen_range(0.4..2.0);
    let mu = rng.gen_range(0.4..2.0);

    // expand Q^T Q: products of {1, cos nu, sin mu} give constants and
    // the second harmonics via product-to-sum identities
    let mut terms: Vec<Term> = Vec::new();
    let mut push = |coef: RMat, mode: Mode, freq: f64| {
        if coef.iter().any(|&x| x != 0.0) {
            terms.push(Term { coef, mode, freq, phase: 0.0 });
        }
    };
    let s = |a: &RMat, b: &RMat| -> RMat {
        let p = a.transpose() * b;
        (&p + p.transpose()) * 0.5
    };
    // constant part: Q0^2 + (Q1^2 + Q2^2)/2 + 0.1 I
    push(
        s(&q0, &q0) + s(&q1, &q1) * 0.5 + s(&q2, &q2) * 0.5 + RMat::identity(n, n) * 0.1,
        Mode::Constant,
        0.0,
    );
    push(s(&q0, &q1) * 2.0, Mode::Cos, nu);
    push(s(&q0, &q2) * 2.0, Mode::Sin, mu);
    push(s(&q1, &q1) * 0.5, Mode::Cos, 2.0 * nu);
    push(s(&q2, &q2) * -0.5, Mode::Cos, 2.0 * mu);
    // cross term Q1 Q2 cos nu t sin mu t = (sin(nu+mu) - sin(nu-mu))/2
    push(s(&q1, &q2), Mode::Sin, nu + mu);
    push(s(&q1, &q2) * -1.0, Mode::Sin, nu - mu);

    let sample_max = (0..512)
        .map(|i| {
            let t = -30.0 + 60.0 * i as f64 / 511.0;
            let b: RMat = terms
                .iter()
                .map(|term| {
                    &term.coef
                        * match term.mode {
                            Mode::Constant => 1.0,
                            Mode::Cos => (term.freq * t + term.phase).cos(),
                            Mode::Sin => (term.freq * t + term.phase).sin(),
                        }
                })
                .sum();
            op_norm(&b)
        })
        .fold(0.0f64, f64::max);
    // scaling a Gram matrix keeps positivity; rescale everything but keep the
    // 0.1 I floor by construction (scale <= 1 shrinks it, still positive)
    let scale = (0.95 * k_bound / sample_max).min(1.0);
    for term in terms.iter_mut() {
        term.coef *= scale;
    }
    SymmetricField::new("random_positive", d, k_bound, Structure::Generic, terms)
        .expect("positive field construction")
}

/// A random symplectic matrix e^{J S1} e^{J S2} with moderate norm.
pub fn random_symplectic(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> RMat {
    let n = 2 * d;
    let mut m = RMat::identity(n, n);
    for _ in 0..2 {
        let s = random_symmetric(rng, n, radius);
        let norm = op_norm(&s).max(1e-9);
        let field = SymmetricField::new(
            "anchor_gen",
            d,
            norm * 1.0001 + 1e-9,
            Structure::Generic,
            vec![Term { coef: s, mode: Mode::Constant, freq: 0.0, phase: 0.0 }],
        )
        .expect("anchor generator field");
        let path = fundamental_solution(&field, (0.0, 1.0), &Control::default())
            .expect("anchor propagation");
        m = path.eval(1.0).expect("anchor value") * m;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{std_j, symplectic_defect, ScaledMat};
    use rand::SeedableRng;

    #[test]
    fn positive_fields_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let f = random_positive_field(&mut rng, 1, 2.0);
            for i in 0..100 {
                let t = -20.0 + 0.4 * i as f64;
                let b = f.eval_unchecked(t);
                let min_eig = nalgebra::SymmetricEigen::new(b)
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |m, &x| m.min(x));
                assert!(min_eig > 1e-9, "min eig {min_eig} at t = {t}");
            }
        }
    }

    #[test]
    fn random_symplectic_in_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in [1usize, 2] {
            let m = random_symplectic(&mut rng, d, 0.7);
            let defect = symplectic_defect(&ScaledMat::from_parts(m.clone(), 0.0));
            assert!(defect < 1e-9, "defect {defect}");
            let _ = std_j(d);
        }
    }

    #[test]
    fn periodic_random_fields_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let f = random_trig_field(&mut rng, 2, 2.0, Some(3.0));
            assert_eq!(f.period(), Some(3.0));
            assert!(f.bound() <= 2.0);
        }
    }
}
