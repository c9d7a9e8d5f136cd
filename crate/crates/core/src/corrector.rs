//! Local subspaces, the additive Schwarz operator and the corrector
//! iterations built from it.
//!
//! For a patch with free fine dofs `D` the local space is the image of
//! `E c = ext(c) - P Q ext(c)`, `c` ranging over coefficient vectors on `D`.
//! `E c` is supported on `S`, the union of `D` and the supports of the coarse
//! hats that `Q ext(c)` can touch, so every patch keeps its own copy of the
//! stiffness matrix restricted to `S` and works in those coordinates.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{axpy, check_len, dot, jacobi_inverse, pcg, SparseOperator};
use crate::lanczos::lanczos_in_subspace;
use crate::mesh::{MeshHierarchy, Patch};
use crate::quasi_interp::QuasiInterpolation;
use crate::rng::SplitMix64;

/// Local dimension up to which patch systems are factorized densely.
pub const DENSE_LIMIT: usize = 400;

#[derive(Clone, Debug)]
enum LocalSolver {
    Dense(Cholesky<f64, Dyn>),
    Iterative,
}

/// One local subspace with everything needed to project onto it.
#[derive(Clone, Debug)]
pub struct PatchProblem {
    pub patch: Patch,
    /// Free fine dofs of the patch, ascending.
    pub local: Vec<usize>,
    /// Fine dofs that `E` can reach, ascending; a superset of `local`.
    pub support: Vec<usize>,
    local_in_support: Vec<usize>,
    q_loc: DMatrix<f64>,
    p_loc: DMatrix<f64>,
    k_ss: SparseOperator,
    /// Local coefficients of the centre hat, the kernel of `E` (interior
    /// patches only), scaled to unit length.
    kernel: Option<DVector<f64>>,
    shift: f64,
    solver: LocalSolver,
}

fn positions(sorted: &[usize], of: &[usize]) -> Vec<usize> {
    of.iter().map(|x| sorted.binary_search(x).unwrap()).collect()
}

impl PatchProblem {
    pub fn build(h: &MeshHierarchy, q: &QuasiInterpolation, k: &SparseOperator, patch: Patch) -> Result<Self> {
        let vertex = patch.center_vertex;
        let local = patch.fine_interior_dofs.clone();
        if local.is_empty() {
            return Err(Error::DegeneratePatch {
                vertex,
                reason: "no free fine dofs inside the patch".into(),
            });
        }
        let mut coarse: Vec<usize> = local
            .iter()
            .flat_map(|&j| q.pi_transpose().row(j).0.iter().copied())
            .collect();
        coarse.sort_unstable();
        coarse.dedup();
        let mut support: Vec<usize> = local.clone();
        for &m in &coarse {
            support.extend_from_slice(q.prolong_transpose().row(m).0);
        }
        support.sort_unstable();
        support.dedup();

        let d = local.len();
        let q_loc = DMatrix::from_fn(coarse.len(), d, |a, b| q.pi_matrix().get(coarse[a], local[b]));
        let p_loc = DMatrix::from_fn(support.len(), coarse.len(), |s, a| q.prolong_matrix().get(support[s], coarse[a]));
        let k_ss = k.principal_submatrix(&support);
        let local_in_support = positions(&support, &local);

        let kernel = match h.coarse_dof(vertex) {
            Some(_) if !patch.on_boundary => {
                let z = DVector::from_iterator(d, h.hat_support(vertex).iter().map(|&(_, v)| v));
                if d == 1 {
                    return Err(Error::DegeneratePatch {
                        vertex,
                        reason: "local space is trivial; the hierarchy needs at least one refinement level".into(),
                    });
                }
                Some(z.normalize())
            }
            _ => None,
        };

        let mut problem = Self {
            patch,
            local,
            support,
            local_in_support,
            q_loc,
            p_loc,
            k_ss,
            kernel,
            shift: 0.0,
            solver: LocalSolver::Iterative,
        };
        if d <= DENSE_LIMIT {
            let e = problem.dense_extension();
            let ke = DMatrix::from_columns(
                &e.column_iter()
                    .map(|c| DVector::from_vec(problem.k_ss.apply(c.as_slice()).unwrap()))
                    .collect::<Vec<_>>(),
            );
            let mut g = e.transpose() * ke;
            g = (&g + g.transpose()) * 0.5;
            problem.shift = g.diagonal().max();
            if let Some(z) = &problem.kernel {
                g += z * z.transpose() * problem.shift;
            }
            let chol = Cholesky::new(g).ok_or_else(|| {
                Error::Singular(format!("local Gram matrix of patch {vertex} is not positive definite"))
            })?;
            problem.solver = LocalSolver::Dense(chol);
        } else {
            let diag_estimate = problem.k_ss.diagonal().into_iter().fold(0.0f64, f64::max);
            problem.shift = diag_estimate;
        }
        Ok(problem)
    }

    pub fn dim(&self) -> usize {
        self.local.len()
    }

    /// `E` as a dense `|S| x d` matrix.
    fn dense_extension(&self) -> DMatrix<f64> {
        let mut e = -(&self.p_loc * &self.q_loc);
        for (col, &row) in self.local_in_support.iter().enumerate() {
            e[(row, col)] += 1.0;
        }
        e
    }

    /// `E c` in support coordinates.
    pub fn extend(&self, c: &[f64]) -> Vec<f64> {
        let coarse = &self.q_loc * DVector::from_column_slice(c);
        let mut out: Vec<f64> = (&self.p_loc * coarse).iter().map(|x| -x).collect();
        for (&s, &x) in self.local_in_support.iter().zip(c) {
            out[s] += x;
        }
        out
    }

    /// `E^T y` for `y` in support coordinates.
    pub fn restrict(&self, y: &[f64]) -> Vec<f64> {
        let pty = self.p_loc.tr_mul(&DVector::from_column_slice(y));
        let qt = self.q_loc.tr_mul(&pty);
        self.local_in_support.iter().zip(qt.iter()).map(|(&s, x)| y[s] - x).collect()
    }

    fn gram_apply(&self, c: &[f64], out: &mut [f64]) {
        let ec = self.extend(c);
        let kec = self.k_ss.apply(&ec).unwrap();
        out.copy_from_slice(&self.restrict(&kec));
        if let Some(z) = &self.kernel {
            let zc = self.shift * z.dot(&DVector::from_column_slice(c));
            out.iter_mut().zip(z.iter()).for_each(|(o, zi)| *o += zc * zi);
        }
    }

    /// Minimum-norm solution of `E^T K E c = rhs` for a consistent `rhs`.
    fn solve_local(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        match &self.solver {
            LocalSolver::Dense(chol) => Ok(chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec()),
            LocalSolver::Iterative => {
                let d = self.dim();
                Ok(pcg(|c, out| self.gram_apply(c, out), None, rhs, tol, 50 * d)?.x)
            }
        }
    }

    /// Local coefficients of the projection of a fine vector whose stiffness
    /// residual `y = K r` is given. `None` when the projection vanishes.
    fn project_from_residual(&self, y: &[f64], tol: f64) -> Result<Option<Vec<f64>>> {
        let ys: Vec<f64> = self.support.iter().map(|&s| y[s]).collect();
        if ys.iter().all(|&v| v == 0.0) {
            return Ok(None);
        }
        let rhs = self.restrict(&ys);
        let c = self.solve_local(&rhs, tol)?;
        Ok(Some(self.extend(&c)))
    }

    fn scatter_add(&self, local: &[f64], out: &mut [f64]) {
        for (&s, &v) in self.support.iter().zip(local) {
            out[s] += v;
        }
    }
}

/// Patch problems for every decomposition patch of the hierarchy.
pub fn build_patch_problems(h: &MeshHierarchy, q: &QuasiInterpolation, k: &SparseOperator) -> Result<Vec<PatchProblem>> {
    if h.levels() == 0 {
        return Err(Error::DegeneratePatch {
            vertex: h.coarse().interior_vertices().first().copied().unwrap_or(0),
            reason: "local spaces are trivial without refinement".into(),
        });
    }
    h.decomposition_patches()
        .into_par_iter()
        .map(|p| PatchProblem::build(h, q, k, p))
        .collect()
}

/// `P_i r`, the energy-orthogonal projection of `r` onto one local space.
pub fn apply_patch_projection(p: &PatchProblem, k: &SparseOperator, r: &[f64], tol: f64) -> Result<Vec<f64>> {
    check_len(k.nrows(), r.len())?;
    let y = k.apply(r)?;
    let mut out = vec![0.0; r.len()];
    if let Some(v) = p.project_from_residual(&y, tol)? {
        p.scatter_add(&v, &mut out);
    }
    Ok(out)
}

/// Spectral bounds of the additive Schwarz operator on the kernel of `Q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub q_cheb: f64,
    pub q_damped: f64,
    /// Largest Ritz residual of the two extreme Ritz pairs.
    pub residual: f64,
    pub steps: usize,
}

impl SpectralEstimate {
    pub fn from_bounds(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_min <= lambda_max && lambda_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "spectral interval [{lambda_min}, {lambda_max}] must satisfy 0 < min <= max"
            )));
        }
        let kappa = lambda_max / lambda_min;
        let s = kappa.sqrt();
        Ok(Self {
            lambda_min,
            lambda_max,
            kappa,
            q_cheb: (s - 1.0) / (s + 1.0),
            q_damped: (kappa - 1.0) / (kappa + 1.0),
            residual: 0.0,
            steps: 0,
        })
    }

    /// `2 q^l / (1 + q^(2 l))`, the Chebyshev contraction after `ell` steps.
    pub fn chebyshev_bound(&self, ell: usize) -> f64 {
        let ql = self.q_cheb.powi(ell as i32);
        2.0 * ql / (1.0 + ql * ql)
    }

    /// `q_damped^l`, the contraction of the optimally damped recursion.
    pub fn damped_bound(&self, ell: usize) -> f64 {
        self.q_damped.powi(ell as i32)
    }

    /// `max |1 - omega lambda|` over the interval: the per-step contraction
    /// of the damped recursion with factor `omega`.
    pub fn damped_rate(&self, omega: f64) -> f64 {
        (1.0 - omega * self.lambda_min).abs().max((1.0 - omega * self.lambda_max).abs())
    }

    /// Damping factor `2 / (lambda_min + lambda_max)`.
    pub fn optimal_omega(&self) -> f64 {
        2.0 / (self.lambda_min + self.lambda_max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Plain,
    Damped,
    Chebyshev,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationConfig {
    pub scheme: Scheme,
    pub ell: usize,
    /// Damping parameter, used by the damped scheme only.
    pub omega: f64,
    /// Relative tolerance of iterative patch solves.
    pub tol: f64,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Chebyshev,
            ell: 1,
            omega: 1.0,
            tol: 1e-12,
        }
    }
}

/// The operator `T = P_1 + ... + P_n` and the iterations built on it.
#[derive(Clone, Debug)]
pub struct AdditiveSchwarz {
    k: Arc<SparseOperator>,
    q: Arc<QuasiInterpolation>,
    patches: Vec<PatchProblem>,
    tol: f64,
}

impl AdditiveSchwarz {
    pub fn new(h: &MeshHierarchy, q: Arc<QuasiInterpolation>, k: Arc<SparseOperator>) -> Result<Self> {
        let patches = build_patch_problems(h, &q, &k)?;
        Ok(Self::from_patches(q, k, patches))
    }

    pub fn from_patches(q: Arc<QuasiInterpolation>, k: Arc<SparseOperator>, patches: Vec<PatchProblem>) -> Self {
        Self { k, q, patches, tol: 1e-12 }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn patches(&self) -> &[PatchProblem] {
        &self.patches
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.k
    }

    pub fn quasi_interpolation(&self) -> &QuasiInterpolation {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    /// `T r`. Patch solves run in parallel; their results are summed in
    /// patch order so the output does not depend on the thread count.
    pub fn apply_t(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), r.len())?;
        let y = self.k.apply(r)?;
        let parts: Vec<Option<Vec<f64>>> = self
            .patches
            .par_iter()
            .map(|p| p.project_from_residual(&y, self.tol))
            .collect::<Result<_>>()?;
        let mut out = vec![0.0; r.len()];
        for (p, part) in self.patches.iter().zip(parts) {
            if let Some(v) = part {
                p.scatter_add(&v, &mut out);
            }
        }
        Ok(out)
    }

    /// `F_1 u, ..., F_nu u` from `F_0 u = 0` and
    /// `F_{k+1} u = F_k u + T (u - F_k u)`.
    pub fn iterate_f(&self, u: &[f64], nu: usize) -> Result<Vec<Vec<f64>>> {
        self.damped_iterates(u, nu, 1.0)
    }

    /// `C_1 u, ..., C_ell u` of the damped recursion, without checking
    /// `omega` against the spectrum.
    pub fn damped_iterates(&self, u: &[f64], ell: usize, omega: f64) -> Result<Vec<Vec<f64>>> {
        check_len(self.dim(), u.len())?;
        let mut x = vec![0.0; u.len()];
        let mut out = Vec::with_capacity(ell);
        for _ in 0..ell {
            let e: Vec<f64> = u.iter().zip(&x).map(|(a, b)| a - b).collect();
            let t = self.apply_t(&e)?;
            if omega == 1.0 {
                x.iter_mut().zip(&t).for_each(|(xi, ti)| *xi += ti);
            } else {
                axpy(omega, &t, &mut x);
            }
            out.push(x.clone());
        }
        Ok(out)
    }

    /// `F_nu u`.
    pub fn f_nu(&self, u: &[f64], nu: usize) -> Result<Vec<f64>> {
        Ok(self.iterate_f(u, nu)?.pop().unwrap_or_else(|| vec![0.0; u.len()]))
    }

    /// `C_ell u` of the damped recursion `C_{k+1} u = C_k u + omega T (u - C_k u)`.
    ///
    /// `lambda_max_bound` is an upper bound for the spectrum of `T`; the
    /// recursion converges for `0 < omega < 2 / lambda_max_bound`.
    pub fn damped_corrector(&self, u: &[f64], ell: usize, omega: f64, lambda_max_bound: f64) -> Result<Vec<f64>> {
        if !(omega > 0.0 && omega * lambda_max_bound < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "damping {omega} outside (0, 2/{lambda_max_bound})"
            )));
        }
        Ok(self
            .damped_iterates(u, ell, omega)?
            .pop()
            .unwrap_or_else(|| vec![0.0; u.len()]))
    }

    /// Chebyshev semi-iteration for `T x = T u` on the interval of `spec`.
    /// Returns the iterates `C_1 u, ..., C_ell u`.
    pub fn chebyshev_iterates(&self, u: &[f64], ell: usize, spec: &SpectralEstimate) -> Result<Vec<Vec<f64>>> {
        check_len(self.dim(), u.len())?;
        if !(spec.lambda_min > 0.0 && spec.lambda_min <= spec.lambda_max) {
            return Err(Error::InvalidParameter(format!(
                "invalid spectral interval [{}, {}]",
                spec.lambda_min, spec.lambda_max
            )));
        }
        let theta = 0.5 * (spec.lambda_max + spec.lambda_min);
        let delta = 0.5 * (spec.lambda_max - spec.lambda_min);
        let mut x = vec![0.0; u.len()];
        let mut out = Vec::with_capacity(ell);
        if ell == 0 {
            return Ok(out);
        }
        let mut r = self.apply_t(u)?;
        if delta <= 1e-14 * theta {
            for k in 0..ell {
                if k > 0 {
                    r = self.residual(u, &x)?;
                }
                axpy(1.0 / theta, &r, &mut x);
                out.push(x.clone());
            }
            return Ok(out);
        }
        let sigma = theta / delta;
        let mut rho = 1.0 / sigma;
        let mut d: Vec<f64> = r.iter().map(|v| v / theta).collect();
        axpy(1.0, &d, &mut x);
        out.push(x.clone());
        for _ in 1..ell {
            r = self.residual(u, &x)?;
            let rho_next = 1.0 / (2.0 * sigma - rho);
            let (a, b) = (rho_next * rho, 2.0 * rho_next / delta);
            d.iter_mut().zip(&r).for_each(|(di, ri)| *di = a * *di + b * ri);
            axpy(1.0, &d, &mut x);
            out.push(x.clone());
            rho = rho_next;
        }
        Ok(out)
    }

    /// `C_ell u` of the Chebyshev semi-iteration.
    pub fn chebyshev_corrector(&self, u: &[f64], ell: usize, spec: &SpectralEstimate) -> Result<Vec<f64>> {
        Ok(self
            .chebyshev_iterates(u, ell, spec)?
            .pop()
            .unwrap_or_else(|| vec![0.0; u.len()]))
    }

    /// Localized corrector selected by `cfg`.
    pub fn localized_corrector(&self, u: &[f64], cfg: &IterationConfig, spec: &SpectralEstimate) -> Result<Vec<f64>> {
        match cfg.scheme {
            Scheme::Plain => self.f_nu(u, cfg.ell),
            Scheme::Damped => self.damped_corrector(u, cfg.ell, cfg.omega, spec.lambda_max),
            Scheme::Chebyshev => self.chebyshev_corrector(u, cfg.ell, spec),
        }
    }

    /// Largest number of local spaces whose functions can be nonzero on one
    /// fine element. It bounds the spectrum of `T` from above.
    pub fn overlap_count(&self, h: &MeshHierarchy) -> usize {
        let mut touching = vec![Vec::new(); self.dim()];
        for (pi, p) in self.patches.iter().enumerate() {
            for &s in &p.support {
                touching[s].push(pi);
            }
        }
        let mut best = 0;
        let mut seen: Vec<usize> = Vec::new();
        for tri in h.fine().triangles() {
            seen.clear();
            for &v in tri {
                if let Some(d) = h.fine_dof(v) {
                    seen.extend_from_slice(&touching[d]);
                }
            }
            seen.sort_unstable();
            seen.dedup();
            best = best.max(seen.len());
        }
        best
    }

    fn residual(&self, u: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let e: Vec<f64> = u.iter().zip(x).map(|(a, b)| a - b).collect();
        self.apply_t(&e)
    }

    /// Extreme eigenvalues of `T` on the kernel of `Q` by Lanczos in the
    /// energy inner product.
    ///
    /// The estimate is accepted when the residuals of both extreme Ritz
    /// pairs are below `tol` relative to the largest Ritz value.
    pub fn estimate_spectrum(&self, steps: usize, tol: f64, seed: u64) -> Result<SpectralEstimate> {
        let start = self.q.kernel_project(&SplitMix64::new(seed).signed_vector(self.dim()))?;
        let k = &self.k;
        let ritz = lanczos_in_subspace(
            |v| self.apply_t(v),
            |a, b| k.bilinear(a, b),
            |v| self.q.kernel_project(v),
            &start,
            steps,
            |r| r.values.len() > 2 && r.min_residual().max(r.max_residual()) <= 1e-10 * r.max(),
        )?;
        let (lmin, lmax) = (ritz.min(), ritz.max());
        let residual = ritz.min_residual().max(ritz.max_residual());
        let converged = ritz.invariant || residual <= tol * lmax;
        if !converged || !(lmin > 0.0) {
            return Err(Error::SpectrumNotConverged {
                lambda_min: lmin,
                lambda_max: lmax,
                residual,
            });
        }
        let mut spec = SpectralEstimate::from_bounds(lmin, lmax)?;
        spec.residual = residual;
        spec.steps = ritz.steps;
        Ok(spec)
    }
}

/// Coefficients `alpha_0, ..., alpha_ell` with `C_ell = sum alpha_nu F_nu`
/// for the Chebyshev semi-iteration on the interval of `spec`. They are the
/// coefficients of the residual polynomial written in powers of `1 - t` and
/// sum to one.
pub fn chebyshev_weights(ell: usize, spec: &SpectralEstimate) -> Vec<f64> {
    let theta = 0.5 * (spec.lambda_max + spec.lambda_min);
    let delta = 0.5 * (spec.lambda_max - spec.lambda_min);
    // residual polynomial p(t), t = 1 - s, as coefficients in s
    let (a, b, norm) = if delta <= 1e-14 * theta {
        ((theta - 1.0) / theta, 1.0 / theta, 1.0)
    } else {
        let sigma = theta / delta;
        // T_ell(sigma)
        let t_ell = if sigma >= 1.0 {
            (ell as f64 * sigma.acosh()).cosh()
        } else {
            (ell as f64 * sigma.acos()).cos()
        };
        ((theta - 1.0) / delta, 1.0 / delta, t_ell)
    };
    if delta <= 1e-14 * theta {
        // (a + b s)^ell
        let mut p = vec![1.0];
        for _ in 0..ell {
            p = mul_linear(&p, a, b);
        }
        return p;
    }
    let mut prev = vec![1.0];
    let mut cur = vec![a, b];
    if ell == 0 {
        return prev;
    }
    for _ in 1..ell {
        let mut next = mul_linear(&cur, 2.0 * a, 2.0 * b);
        for (i, v) in prev.iter().enumerate() {
            next[i] -= v;
        }
        prev = cur;
        cur = next;
    }
    cur.iter().map(|c| c / norm).collect()
}

fn mul_linear(p: &[f64], a: f64, b: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    for (i, &c) in p.iter().enumerate() {
        out[i] += a * c;
        out[i + 1] += b * c;
    }
    out
}

/// The energy-orthogonal projection `C` onto the kernel of `Q`.
///
/// With `Y = K^-1 Q^T` and `S = Q Y`, the projection is
/// `C u = u - Y S^-1 Q u`. The columns of `Y` are computed once.
#[derive(Clone, Debug)]
pub struct ExactCorrector {
    q: Arc<QuasiInterpolation>,
    y: DMatrix<f64>,
    schur: LU<f64, Dyn, Dyn>,
}

impl ExactCorrector {
    pub fn new(q: Arc<QuasiInterpolation>, k: &SparseOperator, tol: f64) -> Result<Self> {
        let (nf, nc) = (q.num_fine(), q.num_coarse());
        if nc == 0 {
            return Err(Error::EmptySystem);
        }
        let inv = jacobi_inverse(k);
        let cols: Vec<Vec<f64>> = (0..nc)
            .into_par_iter()
            .map(|i| {
                let mut rhs = vec![0.0; nf];
                let (idx, vals) = q.pi_matrix().row(i);
                for (&j, &v) in idx.iter().zip(vals) {
                    rhs[j] = v;
                }
                Ok(pcg(|a, b| k.apply_into(a, b), Some(&inv), &rhs, tol, 50 * nf.max(1))?.x)
            })
            .collect::<Result<_>>()?;
        let y = DMatrix::from_fn(nf, nc, |r, c| cols[c][r]);
        let s = DMatrix::from_fn(nc, nc, |r, c| q.pi_matrix().row_dot(r, &cols[c]));
        let schur = s.lu();
        if !schur.is_invertible() {
            return Err(Error::Singular("Schur complement of the constrained problem".into()));
        }
        Ok(Self { q, y, schur })
    }

    /// `C u`.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.y.nrows(), u.len())?;
        let qu = DVector::from_vec(self.q.apply(u)?);
        let mu = self
            .schur
            .solve(&qu)
            .ok_or_else(|| Error::Singular("Schur complement solve".into()))?;
        let corr = &self.y * mu;
        Ok(u.iter().zip(corr.iter()).map(|(a, b)| a - b).collect())
    }
}

/// `C u` for a single vector.
pub fn exact_corrector(q: Arc<QuasiInterpolation>, k: &SparseOperator, u: &[f64]) -> Result<Vec<f64>> {
    ExactCorrector::new(q, k, 1e-12)?.apply(u)
}

/// Energy inner product helper used by the tests and the multiscale layer.
pub fn energy_dot(k: &SparseOperator, a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(k.nrows(), a.len())?;
    Ok(dot(a, &k.apply(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_stiffness, energy_norm, CoefficientField};
    use crate::mesh::{build_structured_mesh, refine_uniform, Triangulation};
    use crate::quasi_interp::build_pi;

    struct Setup {
        h: MeshHierarchy,
        k: Arc<SparseOperator>,
        q: Arc<QuasiInterpolation>,
        t: AdditiveSchwarz,
    }

    fn setup(coarse: Triangulation, levels: u32, seed: u64) -> Setup {
        let h = refine_uniform(&coarse, levels);
        let mut rng = SplitMix64::new(seed);
        let vals: Vec<f64> = (0..h.fine().num_triangles()).map(|_| 1.0 + 9.0 * rng.next_f64()).collect();
        let coeff = CoefficientField::from_scalar(&vals).unwrap();
        let k = Arc::new(assemble_stiffness(&h, &coeff).unwrap());
        let q = Arc::new(build_pi(&h).unwrap());
        let t = AdditiveSchwarz::new(&h, q.clone(), k.clone()).unwrap();
        Setup { h, k, q, t }
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn zero_levels_rejected() {
        let h = refine_uniform(&build_structured_mesh(3).unwrap(), 0);
        let q = build_pi(&h).unwrap();
        let k = assemble_stiffness(&h, &CoefficientField::identity(h.fine().num_triangles())).unwrap();
        assert!(matches!(build_patch_problems(&h, &q, &k), Err(Error::DegeneratePatch { .. })));
    }

    #[test]
    fn extension_lands_in_kernel() {
        let s = setup(build_structured_mesh(4).unwrap(), 2, 3);
        let mut rng = SplitMix64::new(5);
        for p in s.t.patches() {
            let c = rng.signed_vector(p.dim());
            let mut v = vec![0.0; s.q.num_fine()];
            p.scatter_add(&p.extend(&c), &mut v);
            let qv = s.q.apply(&v).unwrap();
            assert!(qv.iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn extension_and_restriction_are_adjoint() {
        let s = setup(build_structured_mesh(4).unwrap(), 1, 3);
        let mut rng = SplitMix64::new(9);
        for p in s.t.patches() {
            let c = rng.signed_vector(p.dim());
            let y = rng.signed_vector(p.support.len());
            let lhs = dot(&p.extend(&c), &y);
            let rhs = dot(&c, &p.restrict(&y));
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn projection_fixes_local_space_and_kills_complement() {
        let s = setup(build_structured_mesh(4).unwrap(), 2, 11);
        let p = s.t.patches().iter().find(|p| p.patch.center_vertex == 12).unwrap();
        let mut rng = SplitMix64::new(2);
        let mut v = vec![0.0; s.q.num_fine()];
        p.scatter_add(&p.extend(&rng.signed_vector(p.dim())), &mut v);
        let pv = apply_patch_projection(p, &s.k, &v, 1e-12).unwrap();
        assert!(max_abs_diff(&pv, &v) < 1e-9);

        // Gram-Schmidt a random vector against a basis of the local space
        let basis: Vec<Vec<f64>> = (0..p.dim())
            .map(|j| {
                let mut c = vec![0.0; p.dim()];
                c[j] = 1.0;
                let mut b = vec![0.0; s.q.num_fine()];
                p.scatter_add(&p.extend(&c), &mut b);
                b
            })
            .collect();
        let mut r = rng.signed_vector(s.q.num_fine());
        let mut ortho: Vec<Vec<f64>> = Vec::new();
        for b in basis {
            let mut b = b;
            for o in &ortho {
                let c = energy_dot(&s.k, &b, o).unwrap();
                axpy(-c, o, &mut b);
            }
            let n = energy_norm(&s.k, &b).unwrap();
            if n > 1e-8 {
                ortho.push(b.iter().map(|x| x / n).collect());
            }
        }
        assert_eq!(ortho.len(), p.dim() - 1);
        for o in &ortho {
            let c = energy_dot(&s.k, &r, o).unwrap();
            axpy(-c, o, &mut r);
        }
        let pr = apply_patch_projection(p, &s.k, &r, 1e-12).unwrap();
        let scale = energy_norm(&s.k, &r).unwrap();
        assert!(energy_norm(&s.k, &pr).unwrap() < 1e-8 * scale);
    }

    #[test]
    fn t_is_symmetric_in_energy() {
        let s = setup(build_structured_mesh(4).unwrap(), 2, 13);
        let mut rng = SplitMix64::new(3);
        for _ in 0..3 {
            let u = rng.signed_vector(s.q.num_fine());
            let v = rng.signed_vector(s.q.num_fine());
            let a = energy_dot(&s.k, &s.t.apply_t(&u).unwrap(), &v).unwrap();
            let b = energy_dot(&s.k, &u, &s.t.apply_t(&v).unwrap()).unwrap();
            assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()), "{a} {b}");
        }
        assert!(s.t.apply_t(&vec![0.0; s.q.num_fine()]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn iterations_agree() {
        let s = setup(build_structured_mesh(4).unwrap(), 1, 17);
        let u = SplitMix64::new(8).signed_vector(s.q.num_fine());
        let f = s.t.iterate_f(&u, 3).unwrap();
        assert_eq!(f[0], s.t.apply_t(&u).unwrap());
        let damped = s.t.damped_corrector(&u, 3, 1.0, 1.5).unwrap();
        assert_eq!(damped, f[2]);
        assert!(s.t.damped_corrector(&u, 3, 1.0, 2.0).is_err());
        assert!(s.t.f_nu(&u, 0).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_patch_mesh() {
        let s = setup(Triangulation::star_unit_square(), 2, 23);
        assert_eq!(s.t.patches().len(), 1);
        let spec = s.t.estimate_spectrum(60, 1e-2, 1).unwrap();
        assert!((spec.lambda_min - 1.0).abs() < 1e-8 && (spec.lambda_max - 1.0).abs() < 1e-8);
        let u = SplitMix64::new(4).signed_vector(s.q.num_fine());
        let exact = ExactCorrector::new(s.q.clone(), &s.k, 1e-13).unwrap();
        let cu = exact.apply(&u).unwrap();
        let one = s.t.chebyshev_corrector(&u, 1, &spec).unwrap();
        assert!(max_abs_diff(&cu, &one) < 1e-8);
        let pv = apply_patch_projection(&s.t.patches()[0], &s.k, &cu, 1e-12).unwrap();
        assert!(max_abs_diff(&cu, &pv) < 1e-8);
    }

    #[test]
    fn exact_corrector_is_a_projection() {
        let s = setup(build_structured_mesh(4).unwrap(), 2, 29);
        let c = ExactCorrector::new(s.q.clone(), &s.k, 1e-12).unwrap();
        let u = SplitMix64::new(6).signed_vector(s.q.num_fine());
        let cu = c.apply(&u).unwrap();
        assert!(s.q.apply(&cu).unwrap().iter().all(|x| x.abs() < 1e-10));
        assert!(max_abs_diff(&c.apply(&cu).unwrap(), &cu) < 1e-9);
        // the complement is energy-orthogonal to the kernel
        let w: Vec<f64> = u.iter().zip(&cu).map(|(a, b)| a - b).collect();
        let v = s.q.kernel_project(&SplitMix64::new(7).signed_vector(s.q.num_fine())).unwrap();
        let scale = energy_norm(&s.k, &w).unwrap() * energy_norm(&s.k, &v).unwrap();
        assert!(energy_dot(&s.k, &w, &v).unwrap().abs() < 1e-9 * scale);
        let _ = s.h;
    }

    #[test]
    fn chebyshev_first_step_is_damped_step() {
        let s = setup(build_structured_mesh(4).unwrap(), 1, 31);
        let spec = SpectralEstimate::from_bounds(0.2, 2.0).unwrap();
        let u = SplitMix64::new(1).signed_vector(s.q.num_fine());
        let one = s.t.chebyshev_corrector(&u, 1, &spec).unwrap();
        let damped = s.t.damped_corrector(&u, 1, spec.optimal_omega(), 2.0).unwrap();
        assert!(max_abs_diff(&one, &damped) < 1e-14);
    }

    #[test]
    fn chebyshev_weights_reproduce_iterates() {
        let s = setup(build_structured_mesh(4).unwrap(), 1, 37);
        let spec = SpectralEstimate::from_bounds(0.3, 2.5).unwrap();
        let u = SplitMix64::new(2).signed_vector(s.q.num_fine());
        let f = s.t.iterate_f(&u, 4).unwrap();
        let cheb = s.t.chebyshev_corrector(&u, 4, &spec).unwrap();
        let alpha = chebyshev_weights(4, &spec);
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut combo = vec![0.0; u.len()];
        for (a, fv) in alpha.iter().skip(1).zip(&f) {
            axpy(*a, fv, &mut combo);
        }
        let scale = cheb.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max_abs_diff(&combo, &cheb) < 1e-10 * scale);
    }

    #[test]
    fn spectral_estimate_arithmetic() {
        let s = SpectralEstimate::from_bounds(1.0, 9.0).unwrap();
        assert!((s.q_cheb - 0.5).abs() < 1e-15);
        assert!((s.q_damped - 0.8).abs() < 1e-15);
        assert!((s.chebyshev_bound(1) - 0.8).abs() < 1e-15);
        assert!(SpectralEstimate::from_bounds(0.0, 1.0).is_err());
        assert!(SpectralEstimate::from_bounds(2.0, 1.0).is_err());
    }
}
