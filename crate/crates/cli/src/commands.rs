//! The study commands. Each returns its table; sweep points run in parallel
//! and rows come back in configuration order.

use std::time::Instant;

use homog_core::fem::{assemble_load, energy_norm, h_weighted_load_norm, solve_reference};
use homog_core::multiscale::{chebyshev_factor, evaluate_errors};
use homog_core::quasi_interp::stable_decomposition;
use homog_core::{
    build_space, build_structured_mesh, galerkin_solve, refine_uniform, CorrectorEngine, Discretization,
    MeshHierarchy, SpaceMode, SpectralEstimate, SplitMix64, Triangulation,
};
use rayon::prelude::*;

use crate::coefficient::generate_coefficient;
use crate::config::{CoefficientSpec, ExperimentConfig, RhsSpec, SchemeName};
use crate::error::{CliError, CliResult};
use crate::output::{svg_plot, Cell, Series, Table};

/// Relative Ritz residual accepted by the spectrum estimate.
pub const SPECTRUM_TOL: f64 = 1e-2;

/// Tolerance of the PCG solves behind the exact corrector.
const EXACT_TOL: f64 = 1e-12;

/// A finished study: the table, an optional plot and the default file stem.
#[derive(Clone, Debug)]
pub struct Report {
    pub stem: String,
    pub table: Table,
    pub svg: Option<String>,
}

fn stem(cfg: &ExperimentConfig, command: &str) -> String {
    cfg.output.clone().unwrap_or_else(|| command.to_string())
}

fn config_err(m: String) -> CliError {
    CliError::Config(m)
}

fn hierarchy(cfg: &ExperimentConfig, n: usize) -> CliResult<MeshHierarchy> {
    let levels = cfg.levels_for(n).map_err(config_err)?;
    Ok(refine_uniform(&build_structured_mesh(n)?, levels))
}

fn discretization(h: MeshHierarchy, spec: &CoefficientSpec) -> CliResult<Discretization> {
    let a = generate_coefficient(spec, &h)?;
    Ok(Discretization::new(h, a)?)
}

fn rhs_values(rhs: &RhsSpec, num_elements: usize) -> Vec<f64> {
    match *rhs {
        RhsSpec::Constant { value } => vec![value; num_elements],
        RhsSpec::Zero {} => vec![0.0; num_elements],
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn nonzeros(v: &[f64]) -> usize {
    v.iter().filter(|x| **x != 0.0).count()
}

/// Fine reference solution, load vector and `||H f||_0`.
struct Reference {
    u: Vec<f64>,
    b: Vec<f64>,
    hf_norm: f64,
}

fn reference(cfg: &ExperimentConfig, disc: &Discretization) -> CliResult<Reference> {
    let h = &disc.hierarchy;
    let f = rhs_values(&cfg.rhs, h.fine().num_triangles());
    let b = assemble_load(h, &f)?;
    let u = solve_reference(&disc.stiffness, &b, cfg.tol)?.x;
    Ok(Reference {
        u,
        b,
        hf_norm: h_weighted_load_norm(h, &f)?,
    })
}

/// Damping factor of the damped scheme and its per-step contraction.
fn damping(cfg: &ExperimentConfig, spec: &SpectralEstimate) -> CliResult<(f64, f64)> {
    let omega = cfg.omega.unwrap_or_else(|| spec.optimal_omega());
    let rate = spec.damped_rate(omega);
    if rate >= 1.0 {
        return Err(CliError::Config(format!(
            "field `omega`: {omega} does not contract on the estimated spectrum [{}, {}]",
            spec.lambda_min, spec.lambda_max
        )));
    }
    Ok((omega, rate))
}

/// Localization factor after `ell` steps and the per-step rate it is built on.
fn localization(cfg: &ExperimentConfig, spec: &SpectralEstimate, ell: usize) -> CliResult<(f64, f64)> {
    Ok(match cfg.scheme {
        SchemeName::Chebyshev => (chebyshev_factor(spec.q_cheb, ell), spec.q_cheb),
        SchemeName::Damped => {
            let (_, rate) = damping(cfg, spec)?;
            (rate.powi(ell as i32), rate)
        }
    })
}

fn ms(t: Instant) -> usize {
    t.elapsed().as_millis() as usize
}

/// Ideal-method error against `||H f||_0` across the coarse meshes.
pub fn convergence(cfg: &ExperimentConfig) -> CliResult<Report> {
    let hash = cfg.hash();
    let rows: Vec<Vec<Cell>> = cfg
        .coarse_n
        .par_iter()
        .map(|&n| -> CliResult<Vec<Cell>> {
            let t0 = Instant::now();
            let h = hierarchy(cfg, n)?;
            let fine_n = cfg.fine_subdivision(n).map_err(config_err)?;
            let disc = discretization(h, &cfg.coefficient)?;
            let r = reference(cfg, &disc)?;
            let engine = CorrectorEngine::new(disc).with_exact(EXACT_TOL)?;
            let space = build_space(&engine, SpaceMode::Exact, 0)?;
            let (_, w) = galerkin_solve(&space, &engine.disc.stiffness, &r.b)?;
            let err = energy_norm(&engine.disc.stiffness, &diff(&r.u, &w))?;
            let ratio = if r.hf_norm > 0.0 { err / r.hf_norm } else { 0.0 };
            Ok(vec![
                (1.0 / n as f64).into(),
                (1.0 / fine_n as f64).into(),
                engine.disc.num_fine().into(),
                engine.disc.num_coarse().into(),
                err.into(),
                r.hf_norm.into(),
                ratio.into(),
                ms(t0).into(),
                hash.clone().into(),
            ])
        })
        .collect::<CliResult<_>>()?;
    let mut table = Table::new(&[
        "H",
        "h",
        "dof_fine",
        "dof_coarse",
        "ideal_error",
        "hf_norm",
        "ratio",
        "wall_time_ms",
        "config_hash",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    let hs = table.floats("H");
    let pair = |name: &str| Series {
        name: name.to_string(),
        points: hs.iter().copied().zip(table.floats(name)).collect(),
    };
    let svg = svg_plot(
        "Ideal method error",
        "H",
        "energy norm",
        &[pair("ideal_error"), pair("ratio")],
    );
    Ok(Report {
        stem: stem(cfg, "convergence"),
        table,
        svg: Some(svg),
    })
}

fn corrector_engine(cfg: &ExperimentConfig, disc: Discretization) -> CliResult<CorrectorEngine> {
    Ok(CorrectorEngine::new(disc)
        .with_schwarz()?
        .with_exact(EXACT_TOL)?
        .with_spectrum(cfg.lanczos_steps, SPECTRUM_TOL, cfg.seed)?)
}

/// Localized corrector iterates `C_1 u, ..., C_ell u` of the configured scheme.
fn corrector_iterates(
    cfg: &ExperimentConfig,
    engine: &CorrectorEngine,
    u: &[f64],
    ell: usize,
) -> CliResult<Vec<Vec<f64>>> {
    let spec = engine.spectral_estimate()?;
    let schwarz = engine.schwarz()?;
    Ok(match cfg.scheme {
        SchemeName::Chebyshev => schwarz.chebyshev_iterates(u, ell, spec)?,
        SchemeName::Damped => schwarz.damped_iterates(u, ell, damping(cfg, spec)?.0)?,
    })
}

/// Relative localization error of the corrected hat functions per step.
pub fn decay(cfg: &ExperimentConfig) -> CliResult<Report> {
    let hash = cfg.hash();
    let per_mesh: Vec<Vec<Vec<Cell>>> = cfg
        .coarse_n
        .par_iter()
        .map(|&n| -> CliResult<Vec<Vec<Cell>>> {
            let disc = discretization(hierarchy(cfg, n)?, &cfg.coefficient)?;
            let engine = corrector_engine(cfg, disc)?;
            let k = &engine.disc.stiffness;
            let spec = *engine.spectral_estimate()?;
            let ell_max = cfg.ell_max;
            // per vertex: (relative error, support) for ell = 0..=ell_max
            let per_vertex: Vec<Vec<(f64, usize)>> = (0..engine.disc.num_coarse())
                .into_par_iter()
                .map(|i| -> CliResult<Vec<(f64, usize)>> {
                    let u = engine.disc.quasi.coarse_hat(i);
                    let cu = engine.exact()?.apply(&u)?;
                    let norm = energy_norm(k, &cu)?;
                    let mut out = vec![(1.0, nonzeros(&u))];
                    for x in corrector_iterates(cfg, &engine, &u, ell_max)? {
                        let err = energy_norm(k, &diff(&cu, &x))?;
                        out.push((err / norm, nonzeros(&diff(&u, &x))));
                    }
                    Ok(out)
                })
                .collect::<CliResult<_>>()?;
            (cfg.ell_min..=ell_max)
                .map(|ell| {
                    let measured = per_vertex.iter().map(|v| v[ell].0).fold(0.0, f64::max);
                    let support = per_vertex.iter().map(|v| v[ell].1).max().unwrap_or(0);
                    let (bound, q) = localization(cfg, &spec, ell)?;
                    Ok(vec![
                        (1.0 / n as f64).into(),
                        ell.into(),
                        measured.into(),
                        bound.into(),
                        q.into(),
                        support.into(),
                        hash.clone().into(),
                    ])
                })
                .collect()
        })
        .collect::<CliResult<_>>()?;
    let mut table = Table::new(&["H", "ell", "measured_max", "bound", "q_used", "max_support", "config_hash"]);
    let mut series = Vec::new();
    for (n, rows) in cfg.coarse_n.iter().zip(per_mesh) {
        let pts = |col: usize| -> Vec<(f64, f64)> {
            rows.iter()
                .map(|r| (r[1].as_f64().unwrap_or(0.0), r[col].as_f64().unwrap_or(0.0)))
                .collect()
        };
        series.push(Series {
            name: format!("measured H=1/{n}"),
            points: pts(2),
        });
        series.push(Series {
            name: format!("bound H=1/{n}"),
            points: pts(3),
        });
        rows.into_iter().for_each(|r| table.push(r));
    }
    let svg = svg_plot("Localization error", "ell", "relative energy error", &series);
    Ok(Report {
        stem: stem(cfg, "decay"),
        table,
        svg: Some(svg),
    })
}

/// Error of the localized method against the a priori bound, per step.
pub fn theorem33(cfg: &ExperimentConfig) -> CliResult<Report> {
    let hash = cfg.hash();
    let per_mesh: Vec<Vec<Vec<Cell>>> = cfg
        .coarse_n
        .par_iter()
        .map(|&n| -> CliResult<Vec<Vec<Cell>>> {
            let disc = discretization(hierarchy(cfg, n)?, &cfg.coefficient)?;
            let r = reference(cfg, &disc)?;
            let engine = corrector_engine(cfg, disc)?;
            let spec = *engine.spectral_estimate()?;
            let k = &engine.disc.stiffness;
            let (_, w) = galerkin_solve(&build_space(&engine, SpaceMode::Exact, 0)?, k, &r.b)?;
            let mode = match cfg.scheme {
                SchemeName::Chebyshev => SpaceMode::Collapsed,
                SchemeName::Damped => SpaceMode::Damped {
                    omega: damping(cfg, &spec)?.0,
                },
            };
            (cfg.ell_min..=cfg.ell_max)
                .map(|ell| {
                    let (_, wl) = galerkin_solve(&build_space(&engine, mode, ell)?, k, &r.b)?;
                    let (factor, _) = localization(cfg, &spec, ell)?;
                    let e = evaluate_errors(k, &engine.disc.quasi, &r.u, &w, &wl, r.hf_norm, factor, ell)?;
                    Ok(vec![
                        (1.0 / n as f64).into(),
                        ell.into(),
                        e.energy_error.into(),
                        e.ideal_error.into(),
                        e.interp_error.into(),
                        e.factor.into(),
                        e.bound_thm33.into(),
                        e.bound_satisfied().into(),
                        hash.clone().into(),
                    ])
                })
                .collect()
        })
        .collect::<CliResult<_>>()?;
    let mut table = Table::new(&[
        "H",
        "ell",
        "energy_error",
        "ideal_error",
        "interp_error",
        "factor",
        "bound",
        "bound_satisfied",
        "config_hash",
    ]);
    per_mesh.into_iter().flatten().for_each(|r| table.push(r));
    Ok(Report {
        stem: stem(cfg, "theorem33"),
        table,
        svg: None,
    })
}

/// Largest `sum ||v_i||^2 / ||v||^2` over random kernel functions, and the
/// largest relative defect `|sum v_i - v|_inf / |v|_inf`.
pub fn measure_decomposition(engine: &CorrectorEngine, samples: usize, seed: u64) -> CliResult<(f64, f64)> {
    let disc = &engine.disc;
    let k = &disc.stiffness;
    let patches = disc.hierarchy.decomposition_patches();
    let mut rng = SplitMix64::new(seed);
    let mut k1 = 0.0f64;
    let mut defect = 0.0f64;
    for _ in 0..samples {
        let v = disc.quasi.kernel_project(&rng.signed_vector(disc.num_fine()))?;
        let parts = stable_decomposition(&disc.quasi, &disc.hierarchy, &patches, &v)?;
        let mut sum = vec![0.0; v.len()];
        let mut energy = 0.0;
        for p in &parts {
            sum.iter_mut().zip(p).for_each(|(s, x)| *s += x);
            energy += k.bilinear(p, p)?;
        }
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let d = diff(&sum, &v).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        defect = defect.max(d / vmax);
        k1 = k1.max(energy / k.bilinear(&v, &v)?);
    }
    Ok((k1, defect))
}

/// Spectral data of the additive Schwarz operator over the mesh and
/// contrast grid.
pub fn spectrum(cfg: &ExperimentConfig) -> CliResult<Report> {
    let hash = cfg.hash();
    let contrasts = cfg.contrasts.clone().unwrap_or_else(|| vec![cfg.coefficient.contrast()]);
    let mut points = Vec::new();
    for &n in &cfg.coarse_n {
        for &c in &contrasts {
            let spec = match cfg.contrasts {
                Some(_) => cfg.coefficient.with_contrast(c)?,
                None => cfg.coefficient.clone(),
            };
            points.push((n, c, spec));
        }
    }
    let rows: Vec<Vec<Cell>> = points
        .par_iter()
        .map(|(n, c, coeff)| -> CliResult<Vec<Cell>> {
            let h = hierarchy(cfg, *n)?;
            let disc = discretization(h, coeff)?;
            let engine = CorrectorEngine::new(disc)
                .with_schwarz()?
                .with_spectrum(cfg.lanczos_steps, SPECTRUM_TOL, cfg.seed)?;
            let s = *engine.spectral_estimate()?;
            let overlap = engine.schwarz()?.overlap_count(&engine.disc.hierarchy);
            let (k1, defect) = measure_decomposition(&engine, cfg.samples, cfg.seed)?;
            Ok(vec![
                (1.0 / *n as f64).into(),
                (*c).into(),
                s.lambda_min.into(),
                s.lambda_max.into(),
                s.kappa.into(),
                s.q_cheb.into(),
                s.q_damped.into(),
                k1.into(),
                defect.into(),
                overlap.into(),
                s.residual.into(),
                hash.clone().into(),
            ])
        })
        .collect::<CliResult<_>>()?;
    let mut table = Table::new(&[
        "H",
        "contrast",
        "lambda_min",
        "lambda_max",
        "kappa",
        "q_cheb",
        "q_damped",
        "k1",
        "decomposition_defect",
        "overlap",
        "ritz_residual",
        "config_hash",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Report {
        stem: stem(cfg, "spectrum"),
        table,
        svg: None,
    })
}

/// Outcome of one self-test check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    /// `value <= limit` when true, `value >= limit` otherwise.
    pub upper: bool,
}

impl Check {
    pub fn passed(&self) -> bool {
        if self.upper {
            self.value <= self.limit
        } else {
            self.value >= self.limit
        }
    }
}

fn selftest_config(tol: f64) -> ExperimentConfig {
    ExperimentConfig {
        coarse_n: vec![4],
        levels: Some(2),
        fine_n: None,
        coefficient: CoefficientSpec::Periodic { epsilon: 0.25 },
        rhs: RhsSpec::default(),
        scheme: SchemeName::Chebyshev,
        omega: None,
        ell_min: 0,
        ell_max: 4,
        tol,
        lanczos_steps: 60,
        contrasts: None,
        samples: 5,
        seed: 1,
        output: Some("selftest".into()),
    }
}

/// Small fixed problems exercising every estimate. The table has one row
/// per check; the caller decides what a failed check means.
pub fn selftest(tol: Option<f64>) -> CliResult<(Report, Vec<Check>)> {
    let cfg = selftest_config(tol.unwrap_or(1e-12));
    let hash = cfg.hash();
    let mut checks = Vec::new();

    let disc = discretization(hierarchy(&cfg, 4)?, &cfg.coefficient)?;
    let quasi = disc.quasi.clone();
    let mut qp_defect = 0.0f64;
    for i in 0..quasi.num_coarse() {
        let back = quasi.apply(&quasi.coarse_hat(i))?;
        for (j, x) in back.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            qp_defect = qp_defect.max((x - want).abs());
        }
    }
    checks.push(Check {
        name: "projection_identity",
        value: qp_defect,
        limit: 1e-12,
        upper: true,
    });

    let r = reference(&cfg, &disc)?;
    let engine = corrector_engine(&cfg, disc)?;
    let k = &engine.disc.stiffness;
    let spec = *engine.spectral_estimate()?;
    checks.push(Check {
        name: "lambda_min_positive",
        value: spec.lambda_min,
        limit: 1e-3,
        upper: false,
    });

    let (_, w) = galerkin_solve(&build_space(&engine, SpaceMode::Exact, 0)?, k, &r.b)?;
    let pu = quasi.coarse_part(&r.u)?;
    let w2 = diff(&pu, &engine.exact()?.apply(&pu)?);
    checks.push(Check {
        name: "ideal_solution_is_projection",
        value: energy_norm(k, &diff(&w, &w2))? / energy_norm(k, &w)?,
        limit: 1e-7,
        upper: true,
    });

    let u = quasi.coarse_hat(quasi.num_coarse() / 2);
    let cu = engine.exact()?.apply(&u)?;
    let f_u = engine.schwarz()?.f_nu(&u, 2)?;
    let f_cu = engine.schwarz()?.f_nu(&cu, 2)?;
    checks.push(Check {
        name: "f2_invariant_under_c",
        value: energy_norm(k, &diff(&f_u, &f_cu))? / energy_norm(k, &f_u)?,
        limit: 1e-8,
        upper: true,
    });

    let decay = decay(&cfg)?;
    let worst = decay
        .table
        .rows
        .iter()
        .skip(1)
        .map(|row| row[2].as_f64().unwrap_or(f64::INFINITY) / row[3].as_f64().unwrap_or(0.0))
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "decay_within_bound",
        value: worst,
        limit: 1.0,
        upper: true,
    });

    let t33 = theorem33(&cfg)?;
    let worst = t33
        .table
        .rows
        .iter()
        .map(|row| row[2].as_f64().unwrap_or(f64::INFINITY) / row[6].as_f64().unwrap_or(0.0))
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "localized_error_within_bound",
        value: worst,
        limit: 1.0 + 1e-9,
        upper: true,
    });

    let (k1, defect) = measure_decomposition(&engine, cfg.samples, cfg.seed)?;
    checks.push(Check {
        name: "decomposition_sums_to_input",
        value: defect,
        limit: 1e-10,
        upper: true,
    });
    checks.push(Check {
        name: "decomposition_constant_finite",
        value: k1,
        limit: 1e6,
        upper: true,
    });

    let star = refine_uniform(&Triangulation::star_unit_square(), 2);
    let star = CorrectorEngine::new(discretization(star, &CoefficientSpec::Identity {})?)
        .with_schwarz()?
        .with_spectrum(cfg.lanczos_steps, SPECTRUM_TOL, cfg.seed)?;
    let s = star.spectral_estimate()?;
    checks.push(Check {
        name: "single_patch_spectrum",
        value: (s.lambda_min - 1.0).abs().max((s.lambda_max - 1.0).abs()),
        limit: 1e-8,
        upper: true,
    });

    let mut table = Table::new(&["check", "value", "limit", "passed", "config_hash"]);
    for c in &checks {
        table.push(vec![
            c.name.into(),
            c.value.into(),
            c.limit.into(),
            c.passed().into(),
            hash.clone().into(),
        ]);
    }
    Ok((
        Report {
            stem: "selftest".into(),
            table,
            svg: None,
        },
        checks,
    ))
}
