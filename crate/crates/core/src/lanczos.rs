//! Lanczos iteration for operators that are self-adjoint in a custom inner
//! product, with full reorthogonalization.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Ritz values of the Lanczos tridiagonal matrix, ascending.
#[derive(Clone, Debug)]
pub struct Ritz {
    pub values: Vec<f64>,
    /// `|beta_m s_m|` for each Ritz pair: the residual norm of the Ritz
    /// vector in the chosen inner product.
    pub residuals: Vec<f64>,
    pub steps: usize,
    /// The Krylov space became invariant, so the Ritz values are exact
    /// eigenvalues of the operator restricted to it.
    pub invariant: bool,
}

impl Ritz {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn min_residual(&self) -> f64 {
        self.residuals[0]
    }

    pub fn max_residual(&self) -> f64 {
        *self.residuals.last().unwrap()
    }
}

fn ritz(alpha: &[f64], beta: &[f64], invariant: bool) -> Ritz {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let tail = if invariant { 0.0 } else { beta[m - 1] };
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], (tail * eig.eigenvectors[(m - 1, i)]).abs()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ritz {
        values: pairs.iter().map(|p| p.0).collect(),
        residuals: pairs.iter().map(|p| p.1).collect(),
        steps: m,
        invariant,
    }
}

/// Runs at most `steps` Lanczos steps of `apply` from `start`.
///
/// `inner` must make `apply` self-adjoint and positive semi-definite.
/// `stop` is consulted after every step with the current Ritz values and
/// ends the iteration early when it returns true.
pub fn lanczos<A, I, S>(apply: A, inner: I, start: &[f64], steps: usize, stop: S) -> Result<Ritz>
where
    A: Fn(&[f64]) -> Result<Vec<f64>>,
    I: Fn(&[f64], &[f64]) -> Result<f64>,
    S: Fn(&Ritz) -> bool,
{
    lanczos_in_subspace(apply, inner, |x| Ok(x.to_vec()), start, steps, stop)
}

/// Lanczos restricted to an invariant subspace given by a projection.
///
/// When `apply` is singular on the complement of the subspace, rounding
/// errors in that complement grow geometrically through the three-term
/// recurrence. Each new basis vector is therefore mapped back with
/// `project` and orthogonalized once more.
pub fn lanczos_in_subspace<A, I, P, S>(
    apply: A,
    inner: I,
    project: P,
    start: &[f64],
    steps: usize,
    stop: S,
) -> Result<Ritz>
where
    A: Fn(&[f64]) -> Result<Vec<f64>>,
    I: Fn(&[f64], &[f64]) -> Result<f64>,
    P: Fn(&[f64]) -> Result<Vec<f64>>,
    S: Fn(&Ritz) -> bool,
{
    if steps == 0 {
        return Err(Error::InvalidParameter("Lanczos needs at least one step".into()));
    }
    let norm0 = inner(start, start)?.max(0.0).sqrt();
    if !(norm0 > 0.0) {
        return Err(Error::Breakdown("zero start vector".into()));
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / norm0).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut scale = 0.0f64;
    loop {
        let v = basis.last().unwrap();
        let mut w = apply(v)?;
        let a = inner(&w, v)?;
        alpha.push(a);
        scale = scale.max(a.abs());
        // Gram-Schmidt against the whole basis, twice, with a projection
        // back onto the subspace in between
        for pass in 0..2 {
            if pass == 1 {
                w = project(&w)?;
            }
            for q in &basis {
                let c = inner(&w, q)?;
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let b = inner(&w, &w)?.max(0.0).sqrt();
        let invariant = b <= 1e-12 * scale.max(f64::MIN_POSITIVE);
        beta.push(b);
        let r = ritz(&alpha, &beta, invariant);
        if invariant || alpha.len() >= steps || stop(&r) {
            return Ok(r);
        }
        basis.push(w.iter().map(|x| x / b).collect());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid(a: &[f64], b: &[f64]) -> Result<f64> {
        Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
    }

    #[test]
    fn diagonal_operator_extremes() {
        let d: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let start = vec![1.0; 50];
        let r = lanczos(
            |x| Ok(x.iter().zip(&d).map(|(a, b)| a * b).collect()),
            euclid,
            &start,
            60,
            |_| false,
        )
        .unwrap();
        assert!(r.invariant);
        assert!((r.min() - 1.0).abs() < 1e-9);
        assert!((r.max() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn identity_is_invariant_after_one_step() {
        let r = lanczos(|x| Ok(x.to_vec()), euclid, &[1.0, 2.0, 3.0], 10, |_| false).unwrap();
        assert_eq!(r.steps, 1);
        assert!(r.invariant);
        assert!((r.min() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_inner_product() {
        // A = M^-1 S is self-adjoint in the M inner product
        let m = [2.0, 1.0, 4.0];
        let s = [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]];
        let apply = |x: &[f64]| -> Result<Vec<f64>> {
            Ok((0..3).map(|i| (0..3).map(|j| s[i][j] * x[j]).sum::<f64>() / m[i]).collect())
        };
        let inner = |a: &[f64], b: &[f64]| -> Result<f64> { Ok((0..3).map(|i| m[i] * a[i] * b[i]).sum()) };
        let r = lanczos(apply, inner, &[1.0, -1.0, 0.5], 3, |_| false).unwrap();
        // det(S - lambda M) = 0 by brute-force bisection on a fine grid
        let det = |l: f64| {
            let a = [[s[0][0] - l * m[0], s[0][1], s[0][2]], [s[1][0], s[1][1] - l * m[1], s[1][2]], [
                s[2][0],
                s[2][1],
                s[2][2] - l * m[2],
            ]];
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        };
        for &l in &r.values {
            assert!(det(l).abs() < 1e-10, "{l}");
        }
    }

    #[test]
    fn rejects_zero_start() {
        assert!(lanczos(|x| Ok(x.to_vec()), euclid, &[0.0; 4], 5, |_| false).is_err());
    }
}
