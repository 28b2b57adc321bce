//! Small dense linear algebra on row-major `d × d` matrices (d ≤ 4).

use crate::scalar::Real;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with eigenvector `k` in column `k`.
pub fn symmetric_eigen<T: Real>(m: &[T], d: usize) -> (Vec<T>, Vec<T>) {
    let mut a = m.to_vec();
    let mut v = vec![T::zero(); d * d];
    for i in 0..d {
        v[i * d + i] = T::one();
    }
    for _sweep in 0..100 {
        let off: T = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum();
        let scale = T::epsilon() * frobenius(&a);
        if off == T::zero() || off <= scale * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..d).map(|i| a[i * d + i]).collect(), v)
}

fn frobenius<T: Real>(a: &[T]) -> T {
    a.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

/// Minimum-norm least-squares solution of `M x = r` for symmetric `M`,
/// discarding eigenvalues below `rel_tol · max|eigenvalue|`.
pub fn pseudo_solve<T: Real>(m: &[T], r: &[T], rel_tol: T) -> Vec<T> {
    let d = r.len();
    let (w, v) = symmetric_eigen(m, d);
    let wmax = w.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    let mut x = vec![T::zero(); d];
    for k in 0..d {
        if w[k].abs() <= rel_tol * wmax || w[k] == T::zero() {
            continue;
        }
        let coef: T = (0..d).map(|i| v[i * d + k] * r[i]).sum::<T>() / w[k];
        for i in 0..d {
            x[i] = x[i] + coef * v[i * d + k];
        }
    }
    x
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant<T: Real>(m: &[T], d: usize) -> T {
    let mut a = m.to_vec();
    let mut det = T::one();
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| a[i * d + col].abs().partial_cmp(&a[j * d + col].abs()).unwrap())
            .unwrap();
        if a[piv * d + col] == T::zero() {
            return T::zero();
        }
        if piv != col {
            for k in 0..d {
                a.swap(piv * d + k, col * d + k);
            }
            det = -det;
        }
        det = det * a[col * d + col];
        for i in col + 1..d {
            let f = a[i * d + col] / a[col * d + col];
            for k in col..d {
                a[i * d + k] = a[i * d + k] - f * a[col * d + k];
            }
        }
    }
    det
}

/// Lower-triangular `L` with `L Lᵀ = M` for PSD `M`; zero pivots give zero columns.
pub fn cholesky_psd<T: Real>(m: &[T], d: usize) -> Vec<T> {
    let mut l = vec![T::zero(); d * d];
    for j in 0..d {
        let mut s = m[j * d + j];
        for k in 0..j {
            s = s - l[j * d + k] * l[j * d + k];
        }
        let pivot = if s > T::zero() { s.sqrt() } else { T::zero() };
        l[j * d + j] = pivot;
        for i in j + 1..d {
            let mut t = m[i * d + j];
            for k in 0..j {
                t = t - l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = if pivot > T::zero() { t / pivot } else { T::zero() };
        }
    }
    l
}
