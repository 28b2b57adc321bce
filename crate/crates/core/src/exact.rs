//! One-period quantities in any exact ordered field (e.g. `num_rational::Ratio`).

use crate::localutil::UtilityKind;
use num_traits::Num;

fn dot<F: Num + Clone>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// `E[g(λ·ΔR)]` for `P[ΔR = x_j] = m_j`.
pub fn expected_utility<F: Num + PartialOrd + Clone>(
    points: &[Vec<F>],
    masses: &[F],
    lambda: &[F],
    kind: UtilityKind,
) -> F {
    points.iter().zip(masses).fold(F::zero(), |acc, (x, m)| {
        acc + m.clone() * kind.g(dot(lambda, x))
    })
}

/// `E[ΔR g'(λ·ΔR)]`, the gradient of [`expected_utility`].
pub fn utility_gradient<F: Num + PartialOrd + Clone>(
    points: &[Vec<F>],
    masses: &[F],
    lambda: &[F],
    kind: UtilityKind,
) -> Vec<F> {
    let d = lambda.len();
    let mut g = vec![F::zero(); d];
    for (x, m) in points.iter().zip(masses) {
        let w = m.clone() * kind.dg(dot(lambda, x));
        for i in 0..d {
            g[i] = g[i].clone() + w.clone() * x[i].clone();
        }
    }
    g
}

/// `E[X]`, `E[X²]` of a scalar law.
pub fn moments<F: Num + Clone>(points: &[F], masses: &[F]) -> (F, F) {
    points.iter().zip(masses).fold((F::zero(), F::zero()), |(m1, m2), (x, p)| {
        (
            m1 + p.clone() * x.clone(),
            m2 + p.clone() * x.clone() * x.clone(),
        )
    })
}

/// `(λ̂^MV, HR²) = (E[X]/E[X²], E[X]²/E[X²])` of a scalar law.
pub fn mv_optimum<F: Num + Clone>(points: &[F], masses: &[F]) -> (F, F) {
    let (m1, m2) = moments(points, masses);
    (m1.clone() / m2.clone(), m1.clone() * m1 / m2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64 as Q;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    #[test]
    fn example_one_exact() {
        let pts = vec![
            vec![q(-1, 2), q(-1, 2)],
            vec![q(1, 2), q(1, 2)],
            vec![q(1, 1), q(6, 5)],
            vec![q(6, 5), q(1, 1)],
        ];
        let m = vec![q(1, 5), q(3, 5), q(1, 10), q(1, 10)];
        for l in [[q(1, 1), q(0, 1)], [q(0, 1), q(1, 1)], [q(1, 2), q(1, 2)]] {
            assert_eq!(expected_utility(&pts, &m, &l, UtilityKind::Mmv), q(1, 5));
            assert_eq!(utility_gradient(&pts, &m, &l, UtilityKind::Mmv), vec![q(0, 1); 2]);
        }
    }

    #[test]
    fn example_six_hansen_ratio() {
        for n in 2i64..40 {
            let k = n * n * n + 1;
            let pts = [q(-(n + 1), k), q(n * n * n - n, k)];
            let m = [q(n * n * n, k), q(1, k)];
            let (l, hr2) = mv_optimum(&pts, &m);
            assert_eq!(l, q(-k, n * (n + 1)));
            assert_eq!(hr2, q(1, n + 1));
            assert_eq!(moments(&pts, &m).0, q(-n, k));
        }
    }
}
