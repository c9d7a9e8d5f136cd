//! Local projection from the fine P1 space onto the coarse P1 space.
//!
//! On every coarse element the fine function is L2-projected onto linear
//! polynomials, ignoring continuity across element boundaries. The value at
//! an interior coarse vertex is then the area-weighted mean of the projected
//! values of the elements around it; boundary vertices get zero. The result
//! is a projection: coarse functions are reproduced exactly.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{check_len, jacobi_inverse, pcg, FineNorms, SparseOperator};
use crate::lanczos::lanczos;
use crate::mesh::{MeshHierarchy, Patch};
use crate::rng::SplitMix64;

/// Quasi-interpolation `Q` (coarse x fine) and prolongation `P` (fine x
/// coarse) on the free dofs, with `Q P = I`.
#[derive(Clone, Debug)]
pub struct QuasiInterpolation {
    pi: SparseOperator,
    prolong: SparseOperator,
    pi_t: SparseOperator,
    prolong_t: SparseOperator,
}

/// `(G^-1)_{ab}` for the barycentric basis on an element of unit area.
const BARY_GRAM_INV: [[f64; 3]; 3] = [[9.0, -3.0, -3.0], [-3.0, 9.0, -3.0], [-3.0, -3.0, 9.0]];

/// For coarse element `c`, the map `fine dof j -> values at the three coarse
/// corners of the L2-best linear fit of the fine hat at j`.
///
/// The load integrals `int_c lambda_a phi_j` are evaluated fine element by
/// fine element with the edge-midpoint rule, which is exact for the
/// quadratic integrand.
pub fn local_projection_weights(h: &MeshHierarchy, c: usize) -> BTreeMap<usize, [f64; 3]> {
    let mut loads: BTreeMap<usize, [f64; 3]> = BTreeMap::new();
    for f in h.fine_elements_of(c) {
        let bary = h.fine_corner_bary(f);
        let w = h.fine().area(f) / 6.0;
        let mid: [[f64; 3]; 3] = std::array::from_fn(|k| {
            let (p, q) = (bary[k], bary[(k + 1) % 3]);
            [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])]
        });
        for (k, &v) in h.fine().triangles()[f].iter().enumerate() {
            let Some(dof) = h.fine_dof(v) else { continue };
            // hat of corner k is 1/2 on the midpoints of its two edges
            let (m1, m2) = (mid[k], mid[(k + 2) % 3]);
            let entry = loads.entry(dof).or_insert([0.0; 3]);
            for a in 0..3 {
                entry[a] += w * (m1[a] + m2[a]);
            }
        }
    }
    let scale = 1.0 / h.coarse().area(c);
    loads
        .into_iter()
        .map(|(dof, b)| {
            let vals = std::array::from_fn(|a| {
                scale * (0..3).map(|k| BARY_GRAM_INV[a][k] * b[k]).sum::<f64>()
            });
            (dof, vals)
        })
        .collect()
}

/// Vertex values of the L2 projection of a fine function onto linear
/// polynomials on coarse element `c`.
pub fn local_projection(h: &MeshHierarchy, c: usize, v: &[f64]) -> Result<[f64; 3]> {
    check_len(h.num_fine_dofs(), v.len())?;
    let mut out = [0.0; 3];
    for (dof, w) in local_projection_weights(h, c) {
        for a in 0..3 {
            out[a] += w[a] * v[dof];
        }
    }
    Ok(out)
}

impl QuasiInterpolation {
    pub fn build(h: &MeshHierarchy) -> Result<Self> {
        let coarse = h.coarse();
        let patch_area: Vec<f64> = (0..coarse.num_vertices())
            .map(|v| coarse.elements_of_vertex(v).iter().map(|&e| coarse.area(e)).sum())
            .collect();
        let mut triplets = Vec::new();
        for c in 0..coarse.num_triangles() {
            let area = coarse.area(c);
            if !(area > 0.0) {
                return Err(Error::Singular(format!("coarse element {c} has area {area:e}")));
            }
            let weights = local_projection_weights(h, c);
            for (a, &vertex) in coarse.triangles()[c].iter().enumerate() {
                let Some(row) = h.coarse_dof(vertex) else { continue };
                let share = area / patch_area[vertex];
                for (&dof, w) in &weights {
                    triplets.push((row, dof, share * w[a]));
                }
            }
        }
        let (nc, nf) = (h.num_coarse_dofs(), h.num_fine_dofs());
        let pi = SparseOperator::from_triplets(nc, nf, triplets, false);

        let mut ptrip = Vec::new();
        for (k, &vertex) in h.coarse_dof_vertices().iter().enumerate() {
            for &(dof, value) in h.hat_support(vertex) {
                ptrip.push((dof, k, value));
            }
        }
        let prolong = SparseOperator::from_triplets(nf, nc, ptrip, false);
        Ok(Self {
            pi_t: pi.transpose(),
            prolong_t: prolong.transpose(),
            pi,
            prolong,
        })
    }

    pub fn pi_matrix(&self) -> &SparseOperator {
        &self.pi
    }

    pub fn prolong_matrix(&self) -> &SparseOperator {
        &self.prolong
    }

    /// Transpose of the quasi-interpolation (fine x coarse).
    pub fn pi_transpose(&self) -> &SparseOperator {
        &self.pi_t
    }

    /// Transpose of the prolongation (coarse x fine); row `k` is the coarse
    /// hat of coarse dof `k` sampled at the fine dofs.
    pub fn prolong_transpose(&self) -> &SparseOperator {
        &self.prolong_t
    }

    pub fn num_coarse(&self) -> usize {
        self.pi.nrows()
    }

    pub fn num_fine(&self) -> usize {
        self.pi.ncols()
    }

    /// Coarse coefficients of the projection of a fine function.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.pi.apply(v)
    }

    pub fn prolongate(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.prolong.apply(c)
    }

    /// Prolongated coarse hat of coarse dof `k`.
    pub fn coarse_hat(&self, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_fine()];
        let (cols, vals) = self.prolong_t.row(k);
        for (&j, &x) in cols.iter().zip(vals) {
            v[j] = x;
        }
        v
    }

    /// `P Q v` as a fine function.
    pub fn coarse_part(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.prolongate(&self.apply(v)?)
    }

    /// `v - P Q v`, which lies in the kernel of `Q`.
    pub fn kernel_project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let pq = self.coarse_part(v)?;
        Ok(v.iter().zip(&pq).map(|(a, b)| a - b).collect())
    }
}

pub fn build_pi(h: &MeshHierarchy) -> Result<QuasiInterpolation> {
    QuasiInterpolation::build(h)
}

/// Nodal interpolant of `phi_i * v` for coarse vertex `i` (boundary vertices
/// allowed; their hats are not in the coarse space but still partition
/// unity).
pub fn nodal_interpolate_product(h: &MeshHierarchy, vertex: usize, v: &[f64]) -> Result<Vec<f64>> {
    check_len(h.num_fine_dofs(), v.len())?;
    if vertex >= h.coarse().num_vertices() {
        return Err(Error::InvalidParameter(format!("no coarse vertex {vertex}")));
    }
    let mut out = vec![0.0; v.len()];
    for &(dof, phi) in h.hat_support(vertex) {
        out[dof] = phi * v[dof];
    }
    Ok(out)
}

/// Splits a kernel function into local pieces, one per decomposition patch:
/// `v_p = (I - P Q) I(phi v)` summed over the patch centre and the boundary
/// vertices it absorbs. The pieces sum to `v`.
pub fn stable_decomposition(
    q: &QuasiInterpolation,
    h: &MeshHierarchy,
    patches: &[Patch],
    v: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_len(h.num_fine_dofs(), v.len())?;
    let qv = q.apply(v)?;
    let defect = qv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if defect > 1e-10 * scale {
        return Err(Error::NotInKernel(defect));
    }
    patches
        .par_iter()
        .map(|p| {
            let mut w = nodal_interpolate_product(h, p.center_vertex, v)?;
            for &b in &p.absorbed {
                for &(dof, phi) in h.hat_support(b) {
                    w[dof] += phi * v[dof];
                }
            }
            q.kernel_project(&w)
        })
        .collect()
}

/// Measured constants of the stability and approximation estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    /// `sup |P Q u|_1 / |u|_1`
    pub c1_estimate: f64,
    /// `sup ||H^-1 (u - P Q u)||_0 / |u|_1`
    pub c2_estimate: f64,
    pub mesh: String,
    pub iterations: usize,
}

/// Largest eigenvalue of `B x = lambda L x`.
///
/// Plain power iteration on `L^-1 B` stalls when the top of the spectrum is
/// clustered, so the iterates are kept and combined by Lanczos in the `L`
/// inner product. The estimate is accepted once the Ritz residual drops
/// below `tol` relative to the eigenvalue.
fn generalized_power<F>(l: &SparseOperator, apply_b: F, steps: usize, tol: f64, seed: u64) -> Result<(f64, usize)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = l.nrows();
    let inv = jacobi_inverse(l);
    let start = SplitMix64::new(seed).signed_vector(n);
    let r = lanczos(
        |x| {
            let bx = apply_b(x)?;
            Ok(pcg(|a, b| l.apply_into(a, b), Some(&inv), &bx, 1e-12, 50 * n.max(1))?.x)
        },
        |a, b| l.bilinear(a, b),
        &start,
        steps,
        |r| r.max_residual() <= tol * r.max().abs(),
    )?;
    let lambda = r.max();
    if r.invariant || r.max_residual() <= tol * lambda.abs() {
        Ok((lambda, r.steps))
    } else {
        Err(Error::NotConverged {
            estimate: lambda,
            change: r.max_residual() / lambda.abs().max(f64::MIN_POSITIVE),
        })
    }
}

/// Estimates of the H1-stability and approximation
/// constants of the quasi-interpolation on one hierarchy.
pub fn estimate_stability_constants(
    h: &MeshHierarchy,
    q: &QuasiInterpolation,
    norms: &FineNorms,
    steps: usize,
    tol: f64,
) -> Result<StabilityReport> {
    let l = &norms.laplacian;
    let (lam1, it1) = generalized_power(
        l,
        |x| {
            let pq = q.coarse_part(x)?;
            let lpq = l.apply(&pq)?;
            q.pi_transpose().apply(&q.prolong_transpose().apply(&lpq)?)
        },
        steps,
        tol,
        0x5eed_0001,
    )?;
    let (lam2, it2) = generalized_power(
        l,
        |x| {
            let e = q.kernel_project(x)?;
            let me = norms.inv_h_mass.apply(&e)?;
            let back = q.pi_transpose().apply(&q.prolong_transpose().apply(&me)?)?;
            Ok(me.iter().zip(&back).map(|(a, b)| a - b).collect())
        },
        steps,
        tol,
        0x5eed_0002,
    )?;
    Ok(StabilityReport {
        c1_estimate: lam1.sqrt(),
        c2_estimate: lam2.sqrt(),
        mesh: format!(
            "coarse {} elements, fine {} elements, levels {}",
            h.coarse().num_triangles(),
            h.fine().num_triangles(),
            h.levels()
        ),
        iterations: it1.max(it2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, refine_uniform, Triangulation};

    fn setup(n: usize, levels: u32) -> (MeshHierarchy, QuasiInterpolation) {
        let h = refine_uniform(&build_structured_mesh(n).unwrap(), levels);
        let q = build_pi(&h).unwrap();
        (h, q)
    }

    #[test]
    fn coarse_hats_map_to_unit_vectors() {
        let (_, q) = setup(4, 2);
        for k in 0..q.num_coarse() {
            let c = q.apply(&q.coarse_hat(k)).unwrap();
            for (j, x) in c.iter().enumerate() {
                let e = if j == k { 1.0 } else { 0.0 };
                assert!((x - e).abs() < 1e-13, "{k} {j} {x}");
            }
        }
    }

    #[test]
    fn prolongation_of_hat_at_midpoints() {
        let (h, q) = setup(4, 1);
        let center = 12; // vertex (2, 2)
        let k = h.coarse_dof(center).unwrap();
        let v = q.coarse_hat(k);
        assert_eq!(v[h.fine_dof(center).unwrap()], 1.0);
        let mut halves = 0;
        for (dof, &x) in v.iter().enumerate() {
            if x != 0.0 && dof != h.fine_dof(center).unwrap() {
                assert_eq!(x, 0.5);
                halves += 1;
            }
        }
        assert_eq!(halves, 6);
        assert!(q.prolongate(&vec![0.0; q.num_coarse()]).unwrap().iter().all(|&x| x == 0.0));
        assert!(q.prolongate(&[1.0]).is_err());
    }

    #[test]
    fn rows_are_local_to_patches() {
        let (h, q) = setup(4, 2);
        for (k, &vertex) in h.coarse_dof_vertices().iter().enumerate() {
            let patch = h.vertex_patch(vertex).unwrap();
            let (cols, _) = q.pi_matrix().row(k);
            for &c in cols {
                let v = h.fine_dof_vertices()[c];
                let (e, _) = h.fine_vertex_location(v);
                // the fine vertex lies in the closure of the patch
                let inside = h.fine().elements_of_vertex(v).iter().any(|&f| {
                    patch.elements.contains(&h.fine_to_coarse_element()[f])
                });
                assert!(inside, "row {k} touches fine vertex {v} in element {e}");
            }
        }
    }

    #[test]
    fn kernel_projection_lands_in_kernel() {
        let (_, q) = setup(4, 2);
        let mut rng = SplitMix64::new(17);
        for _ in 0..10 {
            let v = rng.signed_vector(q.num_fine());
            let k = q.kernel_project(&v).unwrap();
            assert!(q.apply(&k).unwrap().iter().all(|x| x.abs() < 1e-12));
            let again = q.kernel_project(&k).unwrap();
            for (a, b) in again.iter().zip(&k) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let c = rng.signed_vector(q.num_coarse());
        let pc = q.prolongate(&c).unwrap();
        assert!(q.kernel_project(&pc).unwrap().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn nodal_product_support_and_partition_of_unity() {
        let (h, _) = setup(4, 2);
        let mut rng = SplitMix64::new(1);
        let v = rng.signed_vector(h.num_fine_dofs());
        let mut total = vec![0.0; v.len()];
        for vertex in 0..h.coarse().num_vertices() {
            let w = nodal_interpolate_product(&h, vertex, &v).unwrap();
            let support: Vec<usize> = h.hat_support(vertex).iter().map(|&(d, _)| d).collect();
            for (dof, &x) in w.iter().enumerate() {
                if x != 0.0 {
                    assert!(support.binary_search(&dof).is_ok());
                }
                total[dof] += x;
            }
        }
        for (a, b) in total.iter().zip(&v) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn nodal_product_with_one_on_interior_hat() {
        let (h, q) = setup(4, 2);
        let center = 12;
        let w = nodal_interpolate_product(&h, center, &vec![1.0; h.num_fine_dofs()]).unwrap();
        assert_eq!(w, q.coarse_hat(h.coarse_dof(center).unwrap()));
    }

    #[test]
    fn decomposition_of_zero_and_non_kernel_input() {
        let (h, q) = setup(4, 2);
        let patches = h.decomposition_patches();
        let parts = stable_decomposition(&q, &h, &patches, &vec![0.0; h.num_fine_dofs()]).unwrap();
        assert!(parts.iter().all(|p| p.iter().all(|&x| x == 0.0)));
        let bump = q.coarse_hat(0);
        assert!(matches!(
            stable_decomposition(&q, &h, &patches, &bump),
            Err(Error::NotInKernel(_))
        ));
    }

    #[test]
    fn decomposition_on_star_mesh_is_trivial() {
        let h = refine_uniform(&Triangulation::star_unit_square(), 2);
        let q = build_pi(&h).unwrap();
        let patches = h.decomposition_patches();
        let v = q.kernel_project(&SplitMix64::new(4).signed_vector(h.num_fine_dofs())).unwrap();
        let parts = stable_decomposition(&q, &h, &patches, &v).unwrap();
        assert_eq!(parts.len(), 1);
        for (a, b) in parts[0].iter().zip(&v) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn stability_constants_are_sane() {
        let (h, q) = setup(4, 2);
        let norms = FineNorms::new(&h).unwrap();
        let r = estimate_stability_constants(&h, &q, &norms, 200, 1e-6).unwrap();
        assert!(r.c1_estimate >= 1.0 - 1e-9, "{r:?}");
        assert!(r.c2_estimate > 0.0 && r.c2_estimate.is_finite());
    }
}
