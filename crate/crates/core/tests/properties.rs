use homog_core::corrector::chebyshev_weights;
use homog_core::fem::SparseOperator;
use homog_core::quasi_interp::stable_decomposition;
use homog_core::{build_pi, build_structured_mesh, refine_uniform, MeshHierarchy, QuasiInterpolation, SpectralEstimate};
use proptest::prelude::*;
use std::sync::OnceLock;

fn setup() -> &'static (MeshHierarchy, QuasiInterpolation) {
    static CELL: OnceLock<(MeshHierarchy, QuasiInterpolation)> = OnceLock::new();
    CELL.get_or_init(|| {
        let h = refine_uniform(&build_structured_mesh(3).unwrap(), 2);
        let q = build_pi(&h).unwrap();
        (h, q)
    })
}

fn fine_vector() -> impl Strategy<Value = Vec<f64>> {
    // 3 * 4 = 12 subdivisions, 11^2 free dofs
    prop::collection::vec(-1.0f64..1.0, 121)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quasi_interpolation_is_a_left_inverse_of_prolongation(v in fine_vector()) {
        let (_, q) = setup();
        let qv = q.apply(&v).unwrap();
        let again = q.apply(&q.prolongate(&qv).unwrap()).unwrap();
        for (a, b) in qv.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_projection_is_idempotent(v in fine_vector()) {
        let (_, q) = setup();
        let w = q.kernel_project(&v).unwrap();
        prop_assert!(max_abs(&q.apply(&w).unwrap()) < 1e-12);
        let ww = q.kernel_project(&w).unwrap();
        for (a, b) in w.iter().zip(&ww) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_pieces_sum_to_input(v in fine_vector()) {
        let (h, q) = setup();
        let w = q.kernel_project(&v).unwrap();
        let parts = stable_decomposition(q, h, &h.decomposition_patches(), &w).unwrap();
        let mut sum = vec![0.0; w.len()];
        for p in &parts {
            prop_assert!(max_abs(&q.apply(p).unwrap()) < 1e-12);
            sum.iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for (a, b) in sum.iter().zip(&w) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn chebyshev_weights_sum_to_one(lo in 0.05f64..2.0, width in 0.0f64..6.0, ell in 0usize..12) {
        let spec = SpectralEstimate::from_bounds(lo, lo + width).unwrap();
        let w = chebyshev_weights(ell, &spec);
        prop_assert_eq!(w.len(), ell + 1);
        let s: f64 = w.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9 * w.iter().map(|x| x.abs()).sum::<f64>().max(1.0));
    }

    #[test]
    fn sparse_apply_matches_dense(
        entries in prop::collection::vec((0usize..6, 0usize..5, -2.0f64..2.0), 0..40),
        x in prop::collection::vec(-1.0f64..1.0, 5),
    ) {
        let mut dense = [[0.0f64; 5]; 6];
        for &(r, c, v) in &entries {
            dense[r][c] += v;
        }
        let a = SparseOperator::from_triplets(6, 5, entries, false);
        let y = a.apply(&x).unwrap();
        for r in 0..6 {
            let want: f64 = (0..5).map(|c| dense[r][c] * x[c]).sum();
            prop_assert!((y[r] - want).abs() < 1e-12);
        }
        let at = a.transpose();
        for r in 0..6 {
            for c in 0..5 {
                prop_assert!((at.get(c, r) - dense[r][c]).abs() < 1e-12);
            }
        }
    }
}
