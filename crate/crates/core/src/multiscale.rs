//! Multiscale trial spaces and Galerkin solves on them.
//!
//! Every coarse hat `phi_i` is corrected by subtracting (an approximation
//! of) its energy-orthogonal projection onto the kernel of `Q`. The exact
//! correction gives the ideal space; the localized spaces use the additive
//! Schwarz iterations with `ell` steps, whose supports grow by one layer of
//! coarse elements per step.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::corrector::{AdditiveSchwarz, ExactCorrector, SpectralEstimate};
use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, check_len, energy_norm, CoefficientField, SparseOperator};
use crate::mesh::MeshHierarchy;
use crate::quasi_interp::{build_pi, QuasiInterpolation};

/// Hierarchy, stiffness matrix and quasi-interpolation of one problem.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub hierarchy: Arc<MeshHierarchy>,
    pub coefficient: Arc<CoefficientField>,
    pub stiffness: Arc<SparseOperator>,
    pub quasi: Arc<QuasiInterpolation>,
}

impl Discretization {
    pub fn new(hierarchy: MeshHierarchy, coefficient: CoefficientField) -> Result<Self> {
        coefficient.verify_bounds()?;
        let stiffness = assemble_stiffness(&hierarchy, &coefficient)?;
        let quasi = build_pi(&hierarchy)?;
        Ok(Self {
            hierarchy: Arc::new(hierarchy),
            coefficient: Arc::new(coefficient),
            stiffness: Arc::new(stiffness),
            quasi: Arc::new(quasi),
        })
    }

    pub fn num_fine(&self) -> usize {
        self.stiffness.nrows()
    }

    pub fn num_coarse(&self) -> usize {
        self.quasi.num_coarse()
    }
}

/// Corrector machinery on one discretization. The pieces are optional
/// because the exact corrector and the patch problems are expensive and
/// not every study needs both.
#[derive(Clone, Debug)]
pub struct CorrectorEngine {
    pub disc: Discretization,
    pub schwarz: Option<AdditiveSchwarz>,
    pub exact: Option<ExactCorrector>,
    pub spectrum: Option<SpectralEstimate>,
}

impl CorrectorEngine {
    pub fn new(disc: Discretization) -> Self {
        Self {
            disc,
            schwarz: None,
            exact: None,
            spectrum: None,
        }
    }

    pub fn with_schwarz(mut self) -> Result<Self> {
        let d = &self.disc;
        self.schwarz = Some(AdditiveSchwarz::new(&d.hierarchy, d.quasi.clone(), d.stiffness.clone())?);
        Ok(self)
    }

    /// Builds the exact corrector with inner solves to relative residual `tol`.
    pub fn with_exact(mut self, tol: f64) -> Result<Self> {
        self.exact = Some(ExactCorrector::new(self.disc.quasi.clone(), &self.disc.stiffness, tol)?);
        Ok(self)
    }

    /// Estimates the spectrum of `T`; requires the patch problems.
    pub fn with_spectrum(mut self, steps: usize, tol: f64, seed: u64) -> Result<Self> {
        let spec = self.schwarz()?.estimate_spectrum(steps, tol, seed)?;
        self.spectrum = Some(spec);
        Ok(self)
    }

    pub fn with_spectral_estimate(mut self, spec: SpectralEstimate) -> Self {
        self.spectrum = Some(spec);
        self
    }

    pub fn schwarz(&self) -> Result<&AdditiveSchwarz> {
        self.schwarz
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("patch problems were not built".into()))
    }

    pub fn exact(&self) -> Result<&ExactCorrector> {
        self.exact
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("exact corrector was not built".into()))
    }

    pub fn spectral_estimate(&self) -> Result<&SpectralEstimate> {
        self.spectrum
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("spectrum was not estimated".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpaceMode {
    /// `phi_i - C phi_i`
    Exact,
    /// `phi_i - F_nu phi_i` for `nu = 0..=ell`
    Layered,
    /// `phi_i - C_ell phi_i` with the Chebyshev semi-iteration
    Collapsed,
    /// `phi_i - C_ell phi_i` with the damped recursion and factor `omega`
    Damped { omega: f64 },
}

/// A fine vector stored by its nonzero entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseColumn {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseColumn {
    /// Drops entries below `rel` times the energy norm of the column.
    pub fn from_dense(v: &[f64], k: &SparseOperator, rel: f64) -> Result<Self> {
        let cut = rel * energy_norm(k, v)?;
        let (indices, values) = v
            .iter()
            .enumerate()
            .filter(|(_, x)| x.abs() > cut)
            .map(|(i, &x)| (i, x))
            .unzip();
        Ok(Self { indices, values })
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for (&i, &x) in self.indices.iter().zip(&self.values) {
            v[i] = x;
        }
        v
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dot_dense(&self, v: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, &x)| x * v[i]).sum()
    }
}

/// Storage threshold for basis entries, relative to the column energy norm.
pub const TRUNCATION: f64 = 1e-14;

/// Basis of a multiscale space, columns grouped by coarse dof.
#[derive(Clone, Debug)]
pub struct MultiscaleSpace {
    pub mode: SpaceMode,
    pub ell: usize,
    pub columns: Vec<SparseColumn>,
    /// `groups[i]` lists the columns belonging to coarse dof `i`.
    pub groups: Vec<std::ops::Range<usize>>,
    pub spectrum: Option<SpectralEstimate>,
    pub num_fine: usize,
}

impl MultiscaleSpace {
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.columns[j].to_dense(self.num_fine)
    }

    /// `B c` as a fine vector.
    pub fn combine(&self, c: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), c.len())?;
        let mut out = vec![0.0; self.num_fine];
        for (col, &cj) in self.columns.iter().zip(c) {
            for (&i, &x) in col.indices.iter().zip(&col.values) {
                out[i] += cj * x;
            }
        }
        Ok(out)
    }

    pub fn max_support(&self) -> usize {
        self.columns.iter().map(SparseColumn::nnz).max().unwrap_or(0)
    }
}

/// Corrected basis functions of one coarse hat for the given mode.
pub fn corrected_hat(engine: &CorrectorEngine, k: usize, mode: SpaceMode, ell: usize) -> Result<Vec<Vec<f64>>> {
    let u = engine.disc.quasi.coarse_hat(k);
    let minus = |c: &[f64]| -> Vec<f64> { u.iter().zip(c).map(|(a, b)| a - b).collect() };
    Ok(match mode {
        SpaceMode::Exact => vec![minus(&engine.exact()?.apply(&u)?)],
        SpaceMode::Layered => {
            let mut cols = vec![u.clone()];
            for f in engine.schwarz()?.iterate_f(&u, ell)? {
                cols.push(minus(&f));
            }
            cols
        }
        SpaceMode::Collapsed => {
            let spec = engine.spectral_estimate()?;
            vec![minus(&engine.schwarz()?.chebyshev_corrector(&u, ell, spec)?)]
        }
        SpaceMode::Damped { omega } => {
            let spec = engine.spectral_estimate()?;
            vec![minus(&engine.schwarz()?.damped_corrector(&u, ell, omega, spec.lambda_max)?)]
        }
    })
}

/// Assembles the basis of the requested space, one coarse dof per task.
pub fn build_space(engine: &CorrectorEngine, mode: SpaceMode, ell: usize) -> Result<MultiscaleSpace> {
    let k = &engine.disc.stiffness;
    let per_dof: Vec<Vec<SparseColumn>> = (0..engine.disc.num_coarse())
        .into_par_iter()
        .map(|i| {
            corrected_hat(engine, i, mode, ell)?
                .iter()
                .map(|c| SparseColumn::from_dense(c, k, TRUNCATION))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut columns = Vec::new();
    let mut groups = Vec::new();
    for cols in per_dof {
        let start = columns.len();
        columns.extend(cols);
        groups.push(start..columns.len());
    }
    Ok(MultiscaleSpace {
        mode,
        ell,
        columns,
        groups,
        spectrum: engine.spectrum,
        num_fine: engine.disc.num_fine(),
    })
}

/// Relative eigenvalue threshold below which directions of a rank-deficient
/// layered system are dropped.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Galerkin solution on a multiscale space: coefficients and the fine
/// representation `w = B c`.
pub fn galerkin_solve(space: &MultiscaleSpace, k: &SparseOperator, b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(k.nrows(), b.len())?;
    let n = space.dim();
    if n == 0 {
        return Err(Error::EmptySystem);
    }
    let kb: Vec<Vec<f64>> = space
        .columns
        .par_iter()
        .map(|c| k.apply(&c.to_dense(space.num_fine)))
        .collect::<Result<_>>()?;
    let mut a = DMatrix::zeros(n, n);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| (0..=j).map(|i| space.columns[i].dot_dense(&kb[j])).collect())
        .collect();
    for (j, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let rhs = DVector::from_iterator(n, space.columns.iter().map(|c| c.dot_dense(b)));
    if rhs.iter().all(|&x| x == 0.0) {
        return Ok((vec![0.0; n], vec![0.0; space.num_fine]));
    }
    let coeffs = match space.mode {
        SpaceMode::Layered => pseudo_solve(a, rhs)?,
        _ => a
            .cholesky()
            .ok_or_else(|| Error::Singular("multiscale stiffness matrix".into()))?
            .solve(&rhs),
    };
    let c = coeffs.as_slice().to_vec();
    let w = space.combine(&c)?;
    Ok((c, w))
}

/// Minimum-norm solution in energy-scaled coordinates of a possibly
/// rank-deficient symmetric positive semi-definite system.
fn pseudo_solve(a: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| if a[(i, i)] > 0.0 { 1.0 / a[(i, i)].sqrt() } else { 0.0 })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| scale[i] * a[(i, j)] * scale[j]);
    let srhs = DVector::from_fn(n, |i, _| scale[i] * rhs[i]);
    let eig = SymmetricEigen::new(scaled);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x));
    if !(top > 0.0) {
        return Err(Error::EmptySystem);
    }
    let mut y = DVector::zeros(n);
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > PIVOT_TOLERANCE * top {
            let v = eig.eigenvectors.column(j);
            y += v * (v.dot(&srhs) / lambda);
        }
    }
    Ok(DVector::from_fn(n, |i, _| scale[i] * y[i]))
}

/// Energy-norm errors of one localized solution together with the
/// quantities entering the a priori estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub ell: usize,
    /// `||u_h - w_ell||`
    pub energy_error: f64,
    /// `||u_h - w||` with `w` the ideal solution
    pub ideal_error: f64,
    /// `||u_h - P Q u_h||`
    pub interp_error: f64,
    /// Localization factor `e` bounding `||C - C_ell||`.
    pub factor: f64,
    /// `(1 + e) ||u_h - w|| + e ||u_h - P Q u_h||`
    pub bound_thm33: f64,
    /// `||u_h - w|| / ||H f||_0`
    pub ratio_thm22: f64,
}

impl ErrorReport {
    pub fn bound_satisfied(&self) -> bool {
        self.energy_error <= self.bound_thm33 * (1.0 + 1e-9)
    }
}

/// `2 q^l / (1 + q^(2 l))`
pub fn chebyshev_factor(q: f64, ell: usize) -> f64 {
    let ql = q.powi(ell as i32);
    2.0 * ql / (1.0 + ql * ql)
}

/// Evaluates all error quantities for one localized solution. `factor` is
/// the contraction of the corrector iteration after `ell` steps, e.g.
/// [`chebyshev_factor`].
#[allow(clippy::too_many_arguments)]
pub fn evaluate_errors(
    k: &SparseOperator,
    quasi: &QuasiInterpolation,
    u_ref: &[f64],
    w_ideal: &[f64],
    w_ell: &[f64],
    hf_norm: f64,
    factor: f64,
    ell: usize,
) -> Result<ErrorReport> {
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let energy_error = energy_norm(k, &diff(u_ref, w_ell))?;
    let ideal_error = energy_norm(k, &diff(u_ref, w_ideal))?;
    let interp_error = energy_norm(k, &quasi.kernel_project(u_ref)?)?;
    Ok(ErrorReport {
        ell,
        energy_error,
        ideal_error,
        interp_error,
        factor,
        bound_thm33: (1.0 + factor) * ideal_error + factor * interp_error,
        ratio_thm22: if hf_norm > 0.0 { ideal_error / hf_norm } else { 0.0 },
    })
}
