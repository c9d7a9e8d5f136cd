//! P1 finite elements on the fine mesh.
//!
//! Dofs are the free (interior) fine vertices in creation order, so every
//! vector in this crate carries homogeneous Dirichlet data implicitly.
//! Coefficients and loads are constant per fine element, which makes all
//! element integrals below exact.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::MeshHierarchy;

const PAR_ROWS: usize = 4096;

/// Compressed-row sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Duplicates are summed in insertion order, which keeps assembly
    /// reproducible bit for bit.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        symmetric: bool,
    ) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(r);
        cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.ncols, x.len())?;
        let mut y = vec![0.0; self.nrows];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without dimension checks on the hot path.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(r, yr)| *yr = self.row_dot(r, x));
        } else {
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = self.row_dot(r, x);
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, triplets, self.symmetric)
    }

    /// Principal submatrix on ascending index set `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.ncols];
        for (k, &i) in idx.iter().enumerate() {
            local[i] = k;
        }
        let mut triplets = Vec::new();
        for (k, &i) in idx.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if local[c] != usize::MAX {
                    triplets.push((k, local[c], v));
                }
            }
        }
        Self::from_triplets(idx.len(), idx.len(), triplets, self.symmetric)
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len(self.nrows, x.len())?;
        let ay = self.apply(y)?;
        Ok(dot(x, &ay))
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Symmetric 2x2 tensor `[a11, a12, a22]` per fine element.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    tensors: Vec<[f64; 3]>,
    delta: f64,
    big_m: f64,
}

fn eigen_range(a: &[f64; 3]) -> (f64, f64) {
    let mean = 0.5 * (a[0] + a[2]);
    let rad = (0.25 * (a[0] - a[2]).powi(2) + a[1] * a[1]).sqrt();
    (mean - rad, mean + rad)
}

impl CoefficientField {
    pub fn new(tensors: Vec<[f64; 3]>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::InvalidCoefficient("empty field".into()));
        }
        let mut delta = f64::INFINITY;
        let mut big_m: f64 = 0.0;
        for (t, a) in tensors.iter().enumerate() {
            let (lo, hi) = eigen_range(a);
            if !(lo > 0.0) || !hi.is_finite() {
                return Err(Error::InvalidCoefficient(format!(
                    "element {t} is not positive definite (eigenvalues {lo:e}, {hi:e})"
                )));
            }
            delta = delta.min(lo);
            big_m = big_m.max(hi);
        }
        Ok(Self {
            tensors,
            delta,
            big_m,
        })
    }

    /// Isotropic field `a_t * I`.
    pub fn from_scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&a| [a, 0.0, a]).collect())
    }

    pub fn identity(num_elements: usize) -> Self {
        Self::new(vec![[1.0, 0.0, 1.0]; num_elements]).expect("identity is SPD")
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.tensors.iter().map(|a| a.map(|x| s * x)).collect())
    }

    pub fn tensors(&self) -> &[[f64; 3]] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn contrast(&self) -> f64 {
        self.big_m / self.delta
    }

    /// Re-checks every element against the cached bounds.
    pub fn verify_bounds(&self) -> Result<()> {
        for (t, a) in self.tensors.iter().enumerate() {
            let (lo, hi) = eigen_range(a);
            if lo < self.delta || hi > self.big_m {
                return Err(Error::InvalidCoefficient(format!(
                    "element {t} has eigenvalues [{lo:e}, {hi:e}] outside [{:e}, {:e}]",
                    self.delta, self.big_m
                )));
            }
        }
        Ok(())
    }
}

/// Gradients of the three barycentric coordinates and the element area.
fn p1_gradients(p: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area = crate::mesh::signed_area(p);
    let s = 0.5 / area;
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        g[k] = [(a[1] - b[1]) * s, (b[0] - a[0]) * s];
    }
    (g, area)
}

fn free_dofs_of(h: &MeshHierarchy, e: usize) -> [Option<usize>; 3] {
    h.fine().triangles()[e].map(|v| h.fine_dof(v))
}

/// Stiffness matrix of `a(u, v) = sum_t |t| grad u . A_t grad v` on the free
/// fine dofs. Entries `(i, j)` and `(j, i)` are accumulated from the same
/// element values in the same order, so the result is exactly symmetric.
pub fn assemble_stiffness(h: &MeshHierarchy, coeff: &CoefficientField) -> Result<SparseOperator> {
    check_len(h.fine().num_triangles(), coeff.len())?;
    let mut triplets = Vec::with_capacity(9 * h.fine().num_triangles());
    for (e, a) in coeff.tensors().iter().enumerate() {
        let (g, area) = p1_gradients(&h.fine().corners(e));
        let dofs = free_dofs_of(h, e);
        let ag: Vec<[f64; 2]> = g
            .iter()
            .map(|gi| [a[0] * gi[0] + a[1] * gi[1], a[1] * gi[0] + a[2] * gi[1]])
            .collect();
        for i in 0..3 {
            for j in i..3 {
                let kij = area * (g[i][0] * ag[j][0] + g[i][1] * ag[j][1]);
                if let (Some(di), Some(dj)) = (dofs[i], dofs[j]) {
                    triplets.push((di, dj, kij));
                    if i != j {
                        triplets.push((dj, di, kij));
                    }
                }
            }
        }
    }
    let n = h.num_fine_dofs();
    Ok(SparseOperator::from_triplets(n, n, triplets, true))
}

/// Load vector over all fine vertices, boundary rows included.
pub fn assemble_load_all_vertices(h: &MeshHierarchy, f: &[f64]) -> Result<Vec<f64>> {
    check_len(h.fine().num_triangles(), f.len())?;
    let mut b = vec![0.0; h.fine().num_vertices()];
    for (e, tri) in h.fine().triangles().iter().enumerate() {
        let share = f[e] * h.fine().area(e) / 3.0;
        for &v in tri {
            b[v] += share;
        }
    }
    Ok(b)
}

/// `b_i = sum_t f_t |t| / 3` over fine elements touching free dof `i`.
pub fn assemble_load(h: &MeshHierarchy, f: &[f64]) -> Result<Vec<f64>> {
    let all = assemble_load_all_vertices(h, f)?;
    Ok(h.fine_dof_vertices().iter().map(|&v| all[v]).collect())
}

/// P1 mass matrix with a constant weight per fine element.
pub fn assemble_mass(h: &MeshHierarchy, weight: &[f64]) -> Result<SparseOperator> {
    check_len(h.fine().num_triangles(), weight.len())?;
    let mut triplets = Vec::with_capacity(9 * weight.len());
    for (e, &w) in weight.iter().enumerate() {
        let m = w * h.fine().area(e) / 12.0;
        let dofs = free_dofs_of(h, e);
        for i in 0..3 {
            for j in i..3 {
                if let (Some(di), Some(dj)) = (dofs[i], dofs[j]) {
                    let v = if i == j { 2.0 * m } else { m };
                    triplets.push((di, dj, v));
                    if i != j {
                        triplets.push((dj, di, v));
                    }
                }
            }
        }
    }
    let n = h.num_fine_dofs();
    Ok(SparseOperator::from_triplets(n, n, triplets, true))
}

/// `||v|| = sqrt(v^T K v)`
pub fn energy_norm(k: &SparseOperator, v: &[f64]) -> Result<f64> {
    Ok(k.bilinear(v, v)?.max(0.0).sqrt())
}

/// Norms that do not depend on the coefficient field.
#[derive(Clone, Debug)]
pub struct FineNorms {
    pub laplacian: SparseOperator,
    pub mass: SparseOperator,
    /// Mass matrix weighted by `H_T^-2`, `H_T` the diameter of the coarse
    /// ancestor of each fine element.
    pub inv_h_mass: SparseOperator,
}

impl FineNorms {
    pub fn new(h: &MeshHierarchy) -> Result<Self> {
        let nt = h.fine().num_triangles();
        let laplacian = assemble_stiffness(h, &CoefficientField::identity(nt))?;
        let mass = assemble_mass(h, &vec![1.0; nt])?;
        let diam = h.coarse().element_diameters();
        let w: Vec<f64> = h
            .fine_to_coarse_element()
            .iter()
            .map(|&c| diam[c].powi(-2))
            .collect();
        let inv_h_mass = assemble_mass(h, &w)?;
        Ok(Self {
            laplacian,
            mass,
            inv_h_mass,
        })
    }

    pub fn h1_seminorm(&self, v: &[f64]) -> Result<f64> {
        energy_norm(&self.laplacian, v)
    }

    pub fn l2_norm(&self, v: &[f64]) -> Result<f64> {
        energy_norm(&self.mass, v)
    }

    /// `|| H^-1 v ||_0` with the coarse element diameter as `H`.
    pub fn weighted_l2_inv_h(&self, v: &[f64]) -> Result<f64> {
        energy_norm(&self.inv_h_mass, v)
    }
}

/// `|| H f ||_0` for an elementwise constant `f`, `H` the coarse diameter.
pub fn h_weighted_load_norm(h: &MeshHierarchy, f: &[f64]) -> Result<f64> {
    check_len(h.fine().num_triangles(), f.len())?;
    let diam = h.coarse().element_diameters();
    let s: f64 = f
        .iter()
        .enumerate()
        .map(|(e, fe)| h.fine().area(e) * (diam[h.fine_to_coarse_element()[e]] * fe).powi(2))
        .sum();
    Ok(s.sqrt())
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients from a zero initial guess.
///
/// Stops when `||r|| <= tol ||b||`. Works on consistent semi-definite
/// systems as long as `b` lies in the range of the operator.
pub fn pcg<F>(apply: F, inv_diag: Option<&[f64]>, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let precondition = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((zi, ri), di)| *zi = ri * di),
        None => z.copy_from_slice(r),
    };
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = 1.0;
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Breakdown(format!(
                "non-positive curvature {pap:e} at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        res = norm2(&r) / bnorm;
        if res <= tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                relative_residual: res,
            });
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::IterationCap {
        iterations: max_iter,
        residual: res,
    })
}

pub fn jacobi_inverse(k: &SparseOperator) -> Vec<f64> {
    k.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect()
}

/// Fine-scale Galerkin solution: Jacobi-preconditioned CG, iteration cap
/// `50 * dofs`.
pub fn solve_reference(k: &SparseOperator, b: &[f64], tol: f64) -> Result<CgOutcome> {
    check_len(k.nrows(), b.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let inv = jacobi_inverse(k);
    pcg(|x, y| k.apply_into(x, y), Some(&inv), b, tol, 50 * k.nrows().max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, refine_uniform};
    use crate::rng::SplitMix64;

    fn hierarchy(n: usize, levels: u32) -> MeshHierarchy {
        refine_uniform(&build_structured_mesh(n).unwrap(), levels)
    }

    #[test]
    fn five_point_stencil_on_smallest_mesh() {
        let h = hierarchy(2, 0);
        let k = assemble_stiffness(&h, &CoefficientField::identity(8)).unwrap();
        assert_eq!(k.nrows(), 1);
        assert!((k.get(0, 0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_is_linear_in_coefficient() {
        let h = hierarchy(3, 1);
        let nt = h.fine().num_triangles();
        let mut rng = SplitMix64::new(3);
        let vals: Vec<f64> = (0..nt).map(|_| 1.0 + rng.next_f64()).collect();
        let a = CoefficientField::from_scalar(&vals).unwrap();
        let k1 = assemble_stiffness(&h, &a).unwrap();
        let k2 = assemble_stiffness(&h, &a.scaled(2.0).unwrap()).unwrap();
        for r in 0..k1.nrows() {
            let (c1, v1) = k1.row(r);
            let (c2, v2) = k2.row(r);
            assert_eq!(c1, c2);
            for (x, y) in v1.iter().zip(v2) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn stiffness_symmetric_and_positive() {
        let h = hierarchy(4, 1);
        let nt = h.fine().num_triangles();
        let mut rng = SplitMix64::new(11);
        let tensors: Vec<[f64; 3]> = (0..nt)
            .map(|_| {
                let (a, b, c) = (1.0 + rng.next_f64(), 0.3 * rng.next_signed(), 1.0 + rng.next_f64());
                [a, b, c]
            })
            .collect();
        let k = assemble_stiffness(&h, &CoefficientField::new(tensors).unwrap()).unwrap();
        for r in 0..k.nrows() {
            let (cols, vals) = k.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                assert_eq!(v, k.get(c, r));
            }
        }
        for _ in 0..100 {
            let x = rng.signed_vector(k.nrows());
            assert!(k.bilinear(&x, &x).unwrap() > 0.0);
        }
    }

    #[test]
    fn load_of_unit_source() {
        let h = hierarchy(2, 2);
        let nt = h.fine().num_triangles();
        let ones = vec![1.0; nt];
        let b = assemble_load(&h, &ones).unwrap();
        for (dof, &v) in h.fine_dof_vertices().iter().enumerate() {
            let support: f64 = h.fine().elements_of_vertex(v).iter().map(|&e| h.fine().area(e)).sum();
            assert!((b[dof] - support / 3.0).abs() < 1e-16);
        }
        assert!(b.iter().sum::<f64>() < 1.0);
        let all = assemble_load_all_vertices(&h, &ones).unwrap();
        assert!((all.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(assemble_load(&h, &vec![0.0; nt]).unwrap().iter().all(|&x| x == 0.0));
        assert!(assemble_load(&h, &ones[1..]).is_err());
    }

    #[test]
    fn norms_agree_for_identity_coefficient() {
        let h = hierarchy(3, 2);
        let norms = FineNorms::new(&h).unwrap();
        let k = assemble_stiffness(&h, &CoefficientField::identity(h.fine().num_triangles())).unwrap();
        let mut rng = SplitMix64::new(5);
        assert_eq!(energy_norm(&k, &vec![0.0; k.nrows()]).unwrap(), 0.0);
        for _ in 0..20 {
            let v = rng.signed_vector(k.nrows());
            assert_eq!(energy_norm(&k, &v).unwrap(), norms.h1_seminorm(&v).unwrap());
        }
    }

    #[test]
    fn mass_matrix_integrates_constants() {
        // sum of all entries of the full mass matrix is the area; restricted
        // to interior rows it is the integral of the interior hat sum.
        let h = hierarchy(2, 3);
        let norms = FineNorms::new(&h).unwrap();
        let ones = vec![1.0; h.num_fine_dofs()];
        let b = assemble_load(&h, &vec![1.0; h.fine().num_triangles()]).unwrap();
        let m1 = norms.mass.apply(&ones).unwrap();
        // M * 1 equals the load of f = 1 only away from the boundary layer
        let mut matched = 0;
        for (dof, &v) in h.fine_dof_vertices().iter().enumerate() {
            let near_boundary = h.fine().triangles().iter().any(|t| {
                t.contains(&v) && t.iter().any(|&w| h.fine().is_boundary_vertex(w))
            });
            if !near_boundary {
                assert!((m1[dof] - b[dof]).abs() < 1e-16);
                matched += 1;
            }
        }
        assert!(matched > 0);
    }

    #[test]
    fn energy_bounds_from_coefficient_bounds() {
        let h = hierarchy(4, 1);
        let nt = h.fine().num_triangles();
        let mut rng = SplitMix64::new(8);
        let tensors: Vec<[f64; 3]> = (0..nt)
            .map(|_| [0.5 + 3.0 * rng.next_f64(), 0.2 * rng.next_signed(), 0.5 + 3.0 * rng.next_f64()])
            .collect();
        let a = CoefficientField::new(tensors).unwrap();
        a.verify_bounds().unwrap();
        let k = assemble_stiffness(&h, &a).unwrap();
        let norms = FineNorms::new(&h).unwrap();
        for _ in 0..20 {
            let v = rng.signed_vector(k.nrows());
            let e = energy_norm(&k, &v).unwrap().powi(2);
            let s = norms.h1_seminorm(&v).unwrap().powi(2);
            assert!(a.delta() * s <= e * (1.0 + 1e-12));
            assert!(e <= a.big_m() * s * (1.0 + 1e-12));
        }
    }

    #[test]
    fn coefficient_validation() {
        assert!(CoefficientField::new(vec![[1.0, 2.0, 1.0]]).is_err());
        assert!(CoefficientField::from_scalar(&[0.0]).is_err());
        let a = CoefficientField::from_scalar(&[1.0, 9.0, 4.0]).unwrap();
        assert_eq!((a.delta(), a.big_m()), (1.0, 9.0));
    }

    #[test]
    fn reference_solver_basics() {
        let h = hierarchy(4, 2);
        let k = assemble_stiffness(&h, &CoefficientField::identity(h.fine().num_triangles())).unwrap();
        let zero = solve_reference(&k, &vec![0.0; k.nrows()], 1e-10).unwrap();
        assert_eq!(zero.iterations, 0);
        assert!(zero.x.iter().all(|&x| x == 0.0));

        let mut rng = SplitMix64::new(2);
        let x_exact = rng.signed_vector(k.nrows());
        let b = k.apply(&x_exact).unwrap();
        let sol = solve_reference(&k, &b, 1e-12).unwrap();
        let err = norm2(&sub(&sol.x, &x_exact)) / norm2(&x_exact);
        assert!(err < 1e-8, "{err}");
        assert!(solve_reference(&k, &b, 0.0).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let h = hierarchy(4, 2);
        let k = assemble_stiffness(&h, &CoefficientField::identity(h.fine().num_triangles())).unwrap();
        let b = vec![1.0; k.nrows()];
        let inv = jacobi_inverse(&k);
        let err = pcg(|x, y| k.apply_into(x, y), Some(&inv), &b, 1e-14, 3).unwrap_err();
        assert!(matches!(err, Error::IterationCap { iterations: 3, .. }));
    }
}
