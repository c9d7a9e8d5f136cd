//! Conforming triangulations of the unit square and their uniform refinements.
//!
//! A [`MeshHierarchy`] couples a coarse triangulation with its refinement by
//! repeated quadrisection. Coarse vertices keep their indices on every level,
//! new vertices are appended in creation order, and each fine element keeps
//! the barycentric coordinates of its corners with respect to its coarse
//! ancestor. All of this is exact in binary floating point because
//! quadrisection only ever halves barycentric coordinates.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// A conforming, consistently oriented triangle mesh.
#[derive(Clone, Debug)]
pub struct Triangulation {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    element_diameters: Vec<f64>,
    vertex_to_elements: Vec<Vec<usize>>,
}

impl Triangulation {
    /// Validates orientation and conformity and derives adjacency.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let nv = vertices.len();
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        let mut vertex_to_elements = vec![Vec::new(); nv];
        let mut element_diameters = Vec::with_capacity(triangles.len());
        for (e, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {e} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {e} repeats a vertex")));
            }
            let p = tri.map(|v| vertices[v]);
            let area = signed_area(&p);
            if area <= 0.0 {
                return Err(Error::DegenerateElement { element: e, area });
            }
            element_diameters.push(diameter(&p));
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                vertex_to_elements[tri[k]].push(e);
            }
        }
        let mut boundary_vertex = vec![false; nv];
        for (&(a, b), &count) in &edge_count {
            match count {
                1 => {
                    boundary_vertex[a] = true;
                    boundary_vertex[b] = true;
                }
                2 => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({a}, {b}) is shared by {count} triangles"
                    )))
                }
            }
        }
        if let Some(v) = vertex_to_elements.iter().position(Vec::is_empty) {
            return Err(Error::InvalidMesh(format!("vertex {v} belongs to no triangle")));
        }
        Ok(Self {
            vertices,
            triangles,
            boundary_vertex,
            element_diameters,
            vertex_to_elements,
        })
    }

    /// Unit square split into `n x n` cells, each cut along the diagonal from
    /// its lower-left to its upper-right corner. Vertex `(i, j)` has index
    /// `j * (n + 1) + i`.
    pub fn structured_unit_square(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "structured mesh needs n >= 2 to have an interior vertex, got {n}"
            )));
        }
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Self::new(vertices, triangles)
    }

    /// Unit square cut by both diagonals: one interior vertex whose patch is
    /// the whole domain.
    pub fn star_unit_square() -> Self {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let triangles = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        Self::new(vertices, triangles).expect("star mesh is valid")
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary_vertex
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| !self.boundary_vertex[v]).collect()
    }

    pub fn element_diameters(&self) -> &[f64] {
        &self.element_diameters
    }

    pub fn max_diameter(&self) -> f64 {
        self.element_diameters.iter().copied().fold(0.0, f64::max)
    }

    pub fn elements_of_vertex(&self, v: usize) -> &[usize] {
        &self.vertex_to_elements[v]
    }

    pub fn corners(&self, e: usize) -> [[f64; 2]; 3] {
        self.triangles[e].map(|v| self.vertices[v])
    }

    pub fn area(&self, e: usize) -> f64 {
        signed_area(&self.corners(e))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|e| self.area(e)).sum()
    }

    /// Largest ratio of element diameter to inscribed-circle radius
    /// (`2 * sqrt(3)` for an equilateral triangle).
    pub fn shape_regularity(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for e in 0..self.num_triangles() {
            let p = self.corners(e);
            let area = signed_area(&p);
            if area <= 0.0 {
                return Err(Error::DegenerateElement { element: e, area });
            }
            let perimeter: f64 = (0..3).map(|k| dist(p[k], p[(k + 1) % 3])).sum();
            let inradius = 2.0 * area / perimeter;
            worst = worst.max(diameter(&p) / inradius);
        }
        Ok(worst)
    }
}

pub fn build_structured_mesh(n: usize) -> Result<Triangulation> {
    Triangulation::structured_unit_square(n)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub(crate) fn signed_area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

fn diameter(p: &[[f64; 2]; 3]) -> f64 {
    dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[0], p[2]))
}

/// Coarse triangulation, its refinement and the maps between them.
#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    coarse: Triangulation,
    fine: Triangulation,
    levels: u32,
    fine_to_coarse_element: Vec<usize>,
    coarse_vertex_to_fine_vertex: Vec<usize>,
    /// Barycentric coordinates of every fine vertex in `fine_vertex_parent`.
    fine_vertex_bary: Vec<[f64; 3]>,
    fine_vertex_parent: Vec<usize>,
    /// Barycentric coordinates of each fine element's corners in its ancestor.
    fine_corner_bary: Vec<[[f64; 3]; 3]>,
    fine_dof_of_vertex: Vec<Option<usize>>,
    fine_dof_vertices: Vec<usize>,
    coarse_dof_of_vertex: Vec<Option<usize>>,
    coarse_dof_vertices: Vec<usize>,
    /// Per coarse vertex: `(fine dof, hat value)` for every free fine dof
    /// where the coarse hat is positive, ascending in dof.
    hat_support: Vec<Vec<(usize, f64)>>,
}

/// Splits every triangle `levels` times into four congruent children.
pub fn refine_uniform(coarse: &Triangulation, levels: u32) -> MeshHierarchy {
    let mut vertices = coarse.vertices.clone();
    let mut triangles = coarse.triangles.clone();
    let mut ancestor: Vec<usize> = (0..coarse.num_triangles()).collect();
    let unit = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut corner_bary: Vec<[[f64; 3]; 3]> = vec![unit; coarse.num_triangles()];

    for _ in 0..levels {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next_tris = Vec::with_capacity(4 * triangles.len());
        let mut next_ancestor = Vec::with_capacity(4 * triangles.len());
        let mut next_bary = Vec::with_capacity(4 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let (pa, pb) = (vertices[a], vertices[b]);
                    vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                    vertices.len() - 1
                });
            }
            // mid[k] sits on the edge from corner k to corner k+1
            let [a, b, c] = *tri;
            let [mab, mbc, mca] = mid;
            let bc = corner_bary[t];
            let avg = |x: [f64; 3], y: [f64; 3]| [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1]), 0.5 * (x[2] + y[2])];
            let (bab, bbc, bca) = (avg(bc[0], bc[1]), avg(bc[1], bc[2]), avg(bc[2], bc[0]));
            next_tris.push([a, mab, mca]);
            next_bary.push([bc[0], bab, bca]);
            next_tris.push([mab, b, mbc]);
            next_bary.push([bab, bc[1], bbc]);
            next_tris.push([mca, mbc, c]);
            next_bary.push([bca, bbc, bc[2]]);
            next_tris.push([mab, mbc, mca]);
            next_bary.push([bab, bbc, bca]);
            next_ancestor.extend([ancestor[t]; 4]);
        }
        triangles = next_tris;
        ancestor = next_ancestor;
        corner_bary = next_bary;
    }

    let fine = Triangulation::new(vertices, triangles).expect("refinement of a valid mesh is valid");

    let mut fine_vertex_parent = vec![usize::MAX; fine.num_vertices()];
    let mut fine_vertex_bary = vec![[0.0; 3]; fine.num_vertices()];
    for (t, tri) in fine.triangles.iter().enumerate() {
        for k in 0..3 {
            if fine_vertex_parent[tri[k]] == usize::MAX {
                fine_vertex_parent[tri[k]] = ancestor[t];
                fine_vertex_bary[tri[k]] = corner_bary[t][k];
            }
        }
    }

    let (fine_dof_of_vertex, fine_dof_vertices) = number_free(&fine);
    let (coarse_dof_of_vertex, coarse_dof_vertices) = number_free(coarse);

    let mut hat_support = vec![Vec::new(); coarse.num_vertices()];
    for (dof, &v) in fine_dof_vertices.iter().enumerate() {
        let parent = coarse.triangles[fine_vertex_parent[v]];
        for k in 0..3 {
            let value = fine_vertex_bary[v][k];
            if value > 0.0 {
                hat_support[parent[k]].push((dof, value));
            }
        }
    }

    MeshHierarchy {
        coarse: coarse.clone(),
        fine,
        levels,
        fine_to_coarse_element: ancestor,
        coarse_vertex_to_fine_vertex: (0..coarse.num_vertices()).collect(),
        fine_vertex_bary,
        fine_vertex_parent,
        fine_corner_bary: corner_bary,
        fine_dof_of_vertex,
        fine_dof_vertices,
        coarse_dof_of_vertex,
        coarse_dof_vertices,
        hat_support,
    }
}

fn number_free(mesh: &Triangulation) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut of_vertex = vec![None; mesh.num_vertices()];
    let mut vertices = Vec::new();
    for v in 0..mesh.num_vertices() {
        if !mesh.boundary_vertex[v] {
            of_vertex[v] = Some(vertices.len());
            vertices.push(v);
        }
    }
    (of_vertex, vertices)
}

/// Support of a local subspace: the coarse elements around a vertex and the
/// free fine vertices strictly inside their union.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub center_vertex: usize,
    pub elements: Vec<usize>,
    /// Free fine dofs strictly inside the patch, ascending.
    pub fine_interior_dofs: Vec<usize>,
    pub on_boundary: bool,
    /// Boundary vertices whose local space is contained in this one.
    pub absorbed: Vec<usize>,
}

impl MeshHierarchy {
    pub fn coarse(&self) -> &Triangulation {
        &self.coarse
    }

    pub fn fine(&self) -> &Triangulation {
        &self.fine
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn fine_to_coarse_element(&self) -> &[usize] {
        &self.fine_to_coarse_element
    }

    pub fn coarse_vertex_to_fine_vertex(&self) -> &[usize] {
        &self.coarse_vertex_to_fine_vertex
    }

    pub fn num_fine_dofs(&self) -> usize {
        self.fine_dof_vertices.len()
    }

    pub fn num_coarse_dofs(&self) -> usize {
        self.coarse_dof_vertices.len()
    }

    pub fn fine_dof(&self, vertex: usize) -> Option<usize> {
        self.fine_dof_of_vertex[vertex]
    }

    pub fn fine_dof_vertices(&self) -> &[usize] {
        &self.fine_dof_vertices
    }

    pub fn coarse_dof(&self, vertex: usize) -> Option<usize> {
        self.coarse_dof_of_vertex[vertex]
    }

    pub fn coarse_dof_vertices(&self) -> &[usize] {
        &self.coarse_dof_vertices
    }

    /// Coarse element containing a fine vertex and its barycentric
    /// coordinates there.
    pub fn fine_vertex_location(&self, vertex: usize) -> (usize, [f64; 3]) {
        (self.fine_vertex_parent[vertex], self.fine_vertex_bary[vertex])
    }

    /// Barycentric coordinates of the corners of fine element `e` with
    /// respect to its coarse ancestor.
    pub fn fine_corner_bary(&self, e: usize) -> &[[f64; 3]; 3] {
        &self.fine_corner_bary[e]
    }

    /// Fine elements of coarse element `c` (contiguous by construction).
    pub fn fine_elements_of(&self, c: usize) -> std::ops::Range<usize> {
        let k = 1usize << (2 * self.levels);
        c * k..(c + 1) * k
    }

    /// Nonzero nodal values of the coarse hat of `vertex` at free fine dofs.
    pub fn hat_support(&self, vertex: usize) -> &[(usize, f64)] {
        &self.hat_support[vertex]
    }

    /// Patch of an interior coarse vertex.
    pub fn vertex_patch(&self, vertex: usize) -> Result<Patch> {
        self.check_vertex(vertex)?;
        if self.coarse.is_boundary_vertex(vertex) {
            return Err(Error::BoundaryVertex(vertex));
        }
        Ok(self.patch_unchecked(vertex))
    }

    /// Patch of a coarse vertex on the boundary of the domain.
    pub fn boundary_vertex_patch(&self, vertex: usize) -> Result<Patch> {
        self.check_vertex(vertex)?;
        if !self.coarse.is_boundary_vertex(vertex) {
            return Err(Error::InteriorVertex(vertex));
        }
        Ok(self.patch_unchecked(vertex))
    }

    fn check_vertex(&self, vertex: usize) -> Result<()> {
        if vertex >= self.coarse.num_vertices() {
            return Err(Error::InvalidParameter(format!("no coarse vertex {vertex}")));
        }
        Ok(())
    }

    fn patch_unchecked(&self, vertex: usize) -> Patch {
        Patch {
            center_vertex: vertex,
            elements: self.coarse.vertex_to_elements[vertex].clone(),
            fine_interior_dofs: self.hat_support[vertex].iter().map(|&(d, _)| d).collect(),
            on_boundary: self.coarse.is_boundary_vertex(vertex),
            absorbed: Vec::new(),
        }
    }

    /// Patches carrying the local subspaces of the subspace decomposition.
    ///
    /// Every interior vertex gets its patch. A boundary vertex gets its own
    /// patch unless its fine dofs are empty or contained in the dofs of an
    /// interior patch, in which case it is recorded in that patch's
    /// `absorbed` list. Together the patches cover every free fine dof.
    pub fn decomposition_patches(&self) -> Vec<Patch> {
        let mut patches: Vec<Patch> = Vec::new();
        let mut interior_slot = vec![usize::MAX; self.coarse.num_vertices()];
        for v in 0..self.coarse.num_vertices() {
            if !self.coarse.is_boundary_vertex(v) {
                interior_slot[v] = patches.len();
                patches.push(self.patch_unchecked(v));
            }
        }
        let mut boundary = Vec::new();
        for v in 0..self.coarse.num_vertices() {
            if !self.coarse.is_boundary_vertex(v) || self.hat_support[v].is_empty() {
                continue;
            }
            let dofs: Vec<usize> = self.hat_support[v].iter().map(|&(d, _)| d).collect();
            // only interior neighbours can contain the boundary patch
            let mut candidates: Vec<usize> = self.coarse.vertex_to_elements[v]
                .iter()
                .flat_map(|&e| self.coarse.triangles[e])
                .filter(|&k| !self.coarse.is_boundary_vertex(k))
                .collect();
            candidates.sort_unstable();
            candidates.dedup();
            let host = candidates
                .into_iter()
                .find(|&k| is_sorted_subset(&dofs, &patches[interior_slot[k]].fine_interior_dofs));
            match host {
                Some(k) => patches[interior_slot[k]].absorbed.push(v),
                None => boundary.push(self.patch_unchecked(v)),
            }
        }
        patches.extend(boundary);
        patches.sort_by_key(|p| p.center_vertex);
        patches
    }
}

fn is_sorted_subset(small: &[usize], big: &[usize]) -> bool {
    let mut j = 0;
    for &s in small {
        while j < big.len() && big[j] < s {
            j += 1;
        }
        if j == big.len() || big[j] != s {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_counts() {
        let t = build_structured_mesh(2).unwrap();
        assert_eq!(t.num_vertices(), 9);
        assert_eq!(t.num_triangles(), 8);
        assert_eq!(t.interior_vertices(), vec![4]);
        assert_eq!(t.total_area(), 1.0);

        let t = build_structured_mesh(4).unwrap();
        assert_eq!(t.num_vertices(), 25);
        assert_eq!(t.num_triangles(), 32);
        assert_eq!(t.interior_vertices().len(), 9);
    }

    #[test]
    fn rejects_tiny_meshes() {
        assert!(build_structured_mesh(1).is_err());
        assert!(build_structured_mesh(0).is_err());
    }

    #[test]
    fn rejects_bad_orientation_and_nonconforming_edges() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            Triangulation::new(v.clone(), vec![[0, 2, 1]]),
            Err(Error::DegenerateElement { .. })
        ));
        let v4 = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, -1.0]];
        let tris = vec![[0, 1, 2], [1, 3, 2], [0, 1, 2]];
        assert!(Triangulation::new(v4, tris).is_err());
    }

    #[test]
    fn boundary_flags_match_boundary_edges() {
        let t = build_structured_mesh(4).unwrap();
        for (v, p) in t.vertices().iter().enumerate() {
            let on_square = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
            assert_eq!(t.is_boundary_vertex(v), on_square);
        }
    }

    #[test]
    fn refinement_counts_and_diameters() {
        let t = build_structured_mesh(2).unwrap();
        let h1 = refine_uniform(&t, 1);
        assert_eq!(h1.fine().num_triangles(), 32);
        let h3 = refine_uniform(&t, 3);
        assert_eq!(h3.fine().num_triangles(), 512);
        let ratio = t.max_diameter() / h3.fine().max_diameter();
        assert!((ratio - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zero_levels_is_identity() {
        let t = build_structured_mesh(3).unwrap();
        let h = refine_uniform(&t, 0);
        assert_eq!(h.fine_to_coarse_element(), (0..t.num_triangles()).collect::<Vec<_>>());
        assert_eq!(h.fine().num_vertices(), t.num_vertices());
    }

    #[test]
    fn fine_elements_partition_coarse_elements() {
        let t = build_structured_mesh(3).unwrap();
        let h = refine_uniform(&t, 2);
        let mut sums = vec![0.0; t.num_triangles()];
        for (f, &c) in h.fine_to_coarse_element().iter().enumerate() {
            sums[c] += h.fine().area(f);
            // centroid of every child lies inside its ancestor
            let p = h.fine().corners(f);
            let g = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
            let q = t.corners(c);
            for k in 0..3 {
                let tri = [q[k], q[(k + 1) % 3], g];
                assert!(signed_area(&tri) > 0.0);
            }
        }
        for (c, s) in sums.iter().enumerate() {
            assert!((s - t.area(c)).abs() < 1e-15);
        }
    }

    #[test]
    fn coarse_vertices_survive_refinement() {
        let t = build_structured_mesh(4).unwrap();
        let h = refine_uniform(&t, 2);
        for (c, &f) in h.coarse_vertex_to_fine_vertex().iter().enumerate() {
            assert_eq!(t.vertices()[c], h.fine().vertices()[f]);
        }
    }

    #[test]
    fn barycentric_coordinates_reproduce_positions() {
        let t = build_structured_mesh(3).unwrap();
        let h = refine_uniform(&t, 3);
        for v in 0..h.fine().num_vertices() {
            let (e, b) = h.fine_vertex_location(v);
            let q = t.corners(e);
            let x = b[0] * q[0][0] + b[1] * q[1][0] + b[2] * q[2][0];
            let y = b[0] * q[0][1] + b[1] * q[1][1] + b[2] * q[2][1];
            let p = h.fine().vertices()[v];
            assert!((x - p[0]).abs() < 1e-15 && (y - p[1]).abs() < 1e-15);
            assert!((b.iter().sum::<f64>() - 1.0).abs() == 0.0);
        }
    }

    #[test]
    fn center_patch_of_smallest_mesh() {
        let t = build_structured_mesh(2).unwrap();
        let h = refine_uniform(&t, 0);
        let p = h.vertex_patch(4).unwrap();
        assert_eq!(p.elements.len(), 6);
        assert_eq!(p.fine_interior_dofs, vec![h.fine_dof(4).unwrap()]);
        assert!(matches!(h.vertex_patch(0), Err(Error::BoundaryVertex(0))));
        assert!(matches!(h.boundary_vertex_patch(4), Err(Error::InteriorVertex(4))));
    }

    #[test]
    fn each_coarse_element_lies_in_three_patches() {
        let t = build_structured_mesh(4).unwrap();
        let mut count = vec![0; t.num_triangles()];
        for v in 0..t.num_vertices() {
            for &e in t.elements_of_vertex(v) {
                count[e] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 3));
    }

    #[test]
    fn shape_regularity_values() {
        let s3 = 3f64.sqrt();
        let eq = Triangulation::new(vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.5 * s3]], vec![[0, 1, 2]]).unwrap();
        assert!((eq.shape_regularity().unwrap() - 2.0 * s3).abs() < 1e-12);

        let t = build_structured_mesh(4).unwrap();
        let coarse = t.shape_regularity().unwrap();
        // right isosceles triangle: diameter / inradius = 2 + 2 sqrt(2)
        assert!((coarse - (2.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
        let fine = refine_uniform(&t, 3).fine().shape_regularity().unwrap();
        assert!((coarse - fine).abs() < 1e-12);
    }

    #[test]
    fn decomposition_patches_cover_all_fine_dofs() {
        for mesh in [build_structured_mesh(4).unwrap(), Triangulation::star_unit_square()] {
            for levels in 1..=3 {
                let h = refine_uniform(&mesh, levels);
                let mut covered = vec![false; h.num_fine_dofs()];
                for p in h.decomposition_patches() {
                    for &d in &p.fine_interior_dofs {
                        covered[d] = true;
                    }
                }
                assert!(covered.iter().all(|&c| c));
            }
        }
    }

    #[test]
    fn star_mesh_has_one_decomposition_patch() {
        let h = refine_uniform(&Triangulation::star_unit_square(), 2);
        let patches = h.decomposition_patches();
        assert_eq!(patches.len(), 1);
        assert_eq!(patches[0].center_vertex, 4);
        assert_eq!(patches[0].absorbed, vec![0, 1, 2, 3]);
        assert_eq!(patches[0].fine_interior_dofs.len(), h.num_fine_dofs());
    }

    #[test]
    fn structured_mesh_keeps_cut_corner_patches() {
        // Corners (1,0) and (0,1) own a triangle with no interior vertex.
        let t = build_structured_mesh(4).unwrap();
        let h = refine_uniform(&t, 2);
        let centers: Vec<usize> = h
            .decomposition_patches()
            .iter()
            .filter(|p| p.on_boundary)
            .map(|p| p.center_vertex)
            .collect();
        assert!(centers.contains(&4));
        assert!(centers.contains(&20));
        assert!(!centers.contains(&0));
        assert!(!centers.contains(&24));
    }
}
