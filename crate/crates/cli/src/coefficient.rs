//! Coefficient fields of the studies, sampled at fine element centroids.

use std::f64::consts::PI;

use homog_core::{CoefficientField, MeshHierarchy, SplitMix64};

use crate::config::CoefficientSpec;
use crate::error::{CliError, CliResult};

fn centroid(h: &MeshHierarchy, e: usize) -> [f64; 2] {
    let c = h.fine().corners(e);
    [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0]
}

/// Index of the `eps`-cell containing `x` in `[0, 1]`, clamped to `cells - 1`.
fn cell(x: f64, eps: f64, cells: usize) -> usize {
    ((x / eps).floor().max(0.0) as usize).min(cells - 1)
}

fn cells_per_side(eps: f64) -> usize {
    ((1.0 / eps).ceil() as usize).max(1)
}

/// Scalar values of the field, one per fine element.
pub fn scalar_values(spec: &CoefficientSpec, h: &MeshHierarchy) -> Vec<f64> {
    let nt = h.fine().num_triangles();
    match *spec {
        CoefficientSpec::Identity {} => vec![1.0; nt],
        CoefficientSpec::Periodic { epsilon } => (0..nt)
            .map(|e| {
                let [x, y] = centroid(h, e);
                (2.0 + (2.0 * PI * x / epsilon).sin()) * (2.0 + (2.0 * PI * y / epsilon).sin())
            })
            .collect(),
        CoefficientSpec::Checkerboard { epsilon, contrast, seed } => {
            let cells = cells_per_side(epsilon);
            let mut rng = SplitMix64::new(seed);
            // row-major from the bottom-left cell
            let table: Vec<f64> = (0..cells * cells).map(|_| contrast.powf(rng.next_f64())).collect();
            (0..nt)
                .map(|e| {
                    let [x, y] = centroid(h, e);
                    table[cell(y, epsilon, cells) * cells + cell(x, epsilon, cells)]
                })
                .collect()
        }
        CoefficientSpec::Channels { epsilon, contrast, seed } => {
            let bands = cells_per_side(epsilon);
            let is_channel: Vec<bool> = match seed {
                None => (0..bands).map(|b| b % 2 == 1).collect(),
                Some(s) => {
                    let mut rng = SplitMix64::new(s);
                    (0..bands).map(|_| rng.next_f64() < 0.5).collect()
                }
            };
            (0..nt)
                .map(|e| {
                    let [_, y] = centroid(h, e);
                    if is_channel[cell(y, epsilon, bands)] {
                        contrast
                    } else {
                        1.0
                    }
                })
                .collect()
        }
    }
}

/// Builds the field and re-checks the ellipticity bounds elementwise.
pub fn generate_coefficient(spec: &CoefficientSpec, h: &MeshHierarchy) -> CliResult<CoefficientField> {
    // leg length of the right triangles
    let fine_h = h.fine().max_diameter() / 2f64.sqrt();
    let eps = match *spec {
        CoefficientSpec::Identity {} => None,
        CoefficientSpec::Periodic { epsilon }
        | CoefficientSpec::Checkerboard { epsilon, .. }
        | CoefficientSpec::Channels { epsilon, .. } => Some(epsilon),
    };
    if let Some(eps) = eps {
        if !(eps > fine_h) {
            return Err(CliError::Config(format!(
                "epsilon {eps} is not resolved by the fine mesh width {fine_h}"
            )));
        }
    }
    let field = CoefficientField::from_scalar(&scalar_values(spec, h))?;
    field.verify_bounds()?;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use homog_core::{build_structured_mesh, refine_uniform};

    fn hierarchy(n: usize, levels: u32) -> MeshHierarchy {
        refine_uniform(&build_structured_mesh(n).unwrap(), levels)
    }

    #[test]
    fn identity_has_unit_bounds() {
        let f = generate_coefficient(&CoefficientSpec::Identity {}, &hierarchy(2, 1)).unwrap();
        assert_eq!(f.delta(), 1.0);
        assert_eq!(f.big_m(), 1.0);
    }

    #[test]
    fn checkerboard_is_reproducible_and_in_range() {
        let h = hierarchy(4, 2);
        let spec = CoefficientSpec::Checkerboard {
            epsilon: 0.25,
            contrast: 100.0,
            seed: 9,
        };
        let a = scalar_values(&spec, &h);
        let b = scalar_values(&spec, &h);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.iter().all(|&v| (1.0..100.0).contains(&v)));
        // the cells coincide with coarse squares
        let map = h.fine_to_coarse_element();
        for e in 0..a.len() {
            assert_eq!(a[e], a[h.fine_elements_of(map[e]).start]);
        }
        let other = CoefficientSpec::Checkerboard {
            epsilon: 0.25,
            contrast: 100.0,
            seed: 10,
        };
        assert_ne!(a, scalar_values(&other, &h));
    }

    #[test]
    fn alternating_channels() {
        let h = hierarchy(4, 1);
        let spec = CoefficientSpec::Channels {
            epsilon: 0.25,
            contrast: 50.0,
            seed: None,
        };
        let v = scalar_values(&spec, &h);
        for (e, val) in v.iter().enumerate() {
            let [_, y] = centroid(&h, e);
            let want = if (y / 0.25) as usize % 2 == 1 { 50.0 } else { 1.0 };
            assert_eq!(*val, want);
        }
    }

    #[test]
    fn unresolved_epsilon_rejected() {
        let spec = CoefficientSpec::Periodic { epsilon: 0.05 };
        assert!(generate_coefficient(&spec, &hierarchy(4, 1)).is_err());
    }
}
