//! The six benchmark problems as data, plus drivers that run them and
//! compare methods.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{analytic_bounds, error_norms, induced_reference, total_variation, ErrorReport, Exact1d, FieldReference, ManufacturedReference, NormOptions};
use crate::assembly::{apply_dirichlet, assemble, SolutionField};
use crate::config::{BoundarySpec, Method, ProblemConfig, Source, Velocity};
use crate::error::{invalid, Error, Result};
use crate::linsolve::{self, SolveReport};
use crate::mesh::{BoundaryKind, Profile, Region, Side, StructuredMesh};

/// One `(Pe, Da)` pair of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubCase {
    pub pe: f64,
    pub da: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub id: String,
    pub description: String,
    /// Template configuration; `pe` and `da` hold the first sub-case.
    pub config: ProblemConfig,
    pub subcases: Vec<SubCase>,
    /// Physical diffusivity when the case is stated in dimensional form.
    pub diffusivity: Option<f64>,
}

/// Dimensional parameters for a unit domain length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParameters {
    pub diffusivity: f64,
    pub speed: f64,
    pub reaction_rate: f64,
}

impl BenchmarkCase {
    /// Configuration for sub-case `index`.
    pub fn config_for(&self, index: usize) -> Result<ProblemConfig> {
        let sc = self.subcases.get(index).ok_or_else(|| {
            invalid(format!("{} has {} sub-cases, index {index} requested", self.id, self.subcases.len()))
        })?;
        Ok(ProblemConfig { pe: sc.pe, da: sc.da, ..self.config.clone() })
    }

    /// Speed `U = Pe D` and reaction rate `B = Da U`, when a diffusivity is
    /// attached to the case.
    pub fn physical(&self, sc: SubCase) -> Option<PhysicalParameters> {
        self.diffusivity.map(|d| {
            let speed = sc.pe * d;
            PhysicalParameters { diffusivity: d, speed, reaction_rate: sc.da * speed }
        })
    }
}

fn sc(pairs: &[(f64, f64)]) -> Vec<SubCase> {
    pairs.iter().map(|&(pe, da)| SubCase { pe, da }).collect()
}

fn dirichlet(region: Region, value: f64) -> BoundarySpec {
    BoundarySpec::dirichlet(region, value)
}

fn segment(from: [f64; 2], to: [f64; 2]) -> Region {
    Region::Segment { from, to, tol: 1e-9 }
}

fn template(mesh: Vec<usize>, velocity: Velocity, f: f64, boundaries: Vec<BoundarySpec>, first: SubCase) -> ProblemConfig {
    ProblemConfig {
        mesh,
        pe: first.pe,
        da: first.da,
        method: Method::Mmad,
        velocity,
        source: Source::Constant(f),
        boundaries,
        mzad_p: None,
        stabilization_h: None,
    }
}

fn case(id: &str, description: &str, mesh: Vec<usize>, velocity: Velocity, f: f64, boundaries: Vec<BoundarySpec>, subcases: Vec<SubCase>) -> BenchmarkCase {
    BenchmarkCase {
        id: id.into(),
        description: description.into(),
        config: template(mesh, velocity, f, boundaries, subcases[0]),
        subcases,
        diffusivity: None,
    }
}

/// Inflow with a unit jump on the left edge at `y = 0.25`.
fn skew_inflow() -> Vec<BoundarySpec> {
    vec![
        dirichlet(Region::Side(Side::Left), 0.0),
        dirichlet(Region::Side(Side::Bottom), 0.0),
        dirichlet(segment([0.0, 0.25], [0.0, 1.0]), 1.0),
    ]
}

const DIAGONAL: f64 = std::f64::consts::FRAC_1_SQRT_2;
const TWO_D_SWEEP: [(f64, f64); 5] = [(1.0, 1e4), (1e2, 1e2), (1e3, 10.0), (1e4, 1.0), (1e6, 1e-2)];

/// The six benchmark problems. Boundary data not fixed by the problem
/// statements follow the classic versions of each test and can be replaced
/// through the configuration.
pub fn catalog() -> Vec<BenchmarkCase> {
    let mut ex2_bc = skew_inflow();
    ex2_bc.push(BoundarySpec::neumann(Region::Side(Side::Top), 0.0));
    ex2_bc.push(BoundarySpec::neumann(Region::Side(Side::Right), 0.0));
    let mut ex3_bc = vec![dirichlet(Region::Boundary, 0.0)];
    ex3_bc.extend(skew_inflow());
    let ex4_bc = vec![
        dirichlet(Region::Boundary, 0.0),
        BoundarySpec {
            kind: BoundaryKind::InteriorConstraint,
            region: Region::Segment { from: [0.5, 0.0], to: [0.5, 0.5], tol: 1e-9 },
            profile: Profile::Sine { amplitude: 1.0, frequency: 1.0, axis: 1 },
        },
    ];
    let ex5_bc = vec![
        dirichlet(Region::Boundary, 0.0),
        dirichlet(Region::Side(Side::Left), 1.0),
        dirichlet(segment([0.0, 0.0], [0.5, 0.0]), 1.0),
    ];
    let mut ex6 = case(
        "ex6",
        "constant source, homogeneous walls, dimensional diffusivity 1e-4",
        vec![40, 40],
        Velocity::Constant(vec![0.5, 3f64.sqrt() / 2.0]),
        1.0,
        vec![dirichlet(Region::Boundary, 0.0)],
        sc(&[(1e4, 1.0), (1.0, 1e4), (1e6, 1e-2)]),
    );
    ex6.diffusivity = Some(1e-4);
    vec![
        case(
            "ex1",
            "1D reaction-convection-diffusion with unit source and homogeneous ends",
            vec![100],
            Velocity::Constant(vec![1.0]),
            1.0,
            vec![dirichlet(Region::Boundary, 0.0)],
            sc(&[(1.0, 1e4), (1e6, 1e-2), (1e2, 1e2), (1e3, 1e2), (1e4, 1e2)]),
        ),
        case(
            "ex2",
            "skew advection of an inflow discontinuity, free outflow",
            vec![40, 40],
            Velocity::Constant(vec![DIAGONAL, DIAGONAL]),
            0.0,
            ex2_bc,
            sc(&TWO_D_SWEEP),
        ),
        case(
            "ex3",
            "skew advection of an inflow discontinuity, Dirichlet on all walls",
            vec![40, 40],
            Velocity::Constant(vec![DIAGONAL, DIAGONAL]),
            0.0,
            ex3_bc,
            sc(&TWO_D_SWEEP),
        ),
        case(
            "ex4",
            "rotating flow carrying a sine hill imposed on an interior segment",
            vec![40, 40],
            Velocity::rotation(),
            0.0,
            ex4_bc,
            sc(&[(1.0, 1e6), (1e3, 1.0), (1e6, 1e-2), (1e6, 1e-4)]),
        ),
        case(
            "ex5",
            "oblique transport of unit data on the left and lower-left walls",
            vec![40, 40],
            Velocity::Constant(vec![0.15, 0.1]),
            0.0,
            ex5_bc,
            sc(&TWO_D_SWEEP),
        ),
        ex6,
    ]
}

pub fn find_case(id: &str) -> Result<BenchmarkCase> {
    catalog()
        .into_iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::UnknownCase(id.to_string()))
}

/// Replacements applied on top of a catalog sub-case.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub subcase: Option<usize>,
    pub pe: Option<f64>,
    pub da: Option<f64>,
    pub mesh: Option<Vec<usize>>,
    pub velocity: Option<Vec<f64>>,
    pub source: Option<f64>,
    pub mzad_p: Option<f64>,
    /// 2D only: refinement factor of the MMAD reference solve used for
    /// error norms. No error norms are computed without it.
    pub reference_refinement: Option<usize>,
}

/// Resolved configuration for `id` with `method` and `overrides`.
pub fn resolve_config(case: &BenchmarkCase, method: Method, overrides: &Overrides) -> Result<ProblemConfig> {
    let mut cfg = case.config_for(overrides.subcase.unwrap_or(0))?;
    cfg.method = method;
    if let Some(pe) = overrides.pe {
        cfg.pe = pe;
    }
    if let Some(da) = overrides.da {
        cfg.da = da;
    }
    if let Some(mesh) = &overrides.mesh {
        if mesh.len() != cfg.mesh.len() {
            return Err(invalid(format!("{} needs {} element counts", case.id, cfg.mesh.len())));
        }
        cfg.mesh = mesh.clone();
    }
    if let Some(u) = &overrides.velocity {
        cfg.velocity = Velocity::Constant(u.clone());
    }
    if let Some(f) = overrides.source {
        cfg.source = Source::Constant(f);
    }
    if overrides.mzad_p.is_some() {
        cfg.mzad_p = overrides.mzad_p;
    }
    if overrides.reference_refinement == Some(0) {
        return Err(invalid("reference refinement must be positive"));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Range, oscillation and variation of nodal values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub min: f64,
    pub max: f64,
    pub bounds: Option<(f64, f64)>,
    pub max_overshoot: f64,
    pub max_undershoot: f64,
    /// Nodal total variation (1D) or sum of horizontal and vertical nodal
    /// jumps (2D).
    pub total_variation: f64,
}

pub fn oscillation(mesh: &StructuredMesh, phi: &[f64], bounds: Option<(f64, f64)>) -> Oscillation {
    let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (max_overshoot, max_undershoot) = bounds.map_or((0.0, 0.0), |(lo, hi)| ((max - hi).max(0.0), (lo - min).max(0.0)));
    let tv = if mesh.dim() == 1 {
        total_variation(phi)
    } else {
        let mut tv = 0.0;
        for j in 0..=mesh.ny() {
            for i in 0..=mesh.nx() {
                let v = phi[mesh.node_id(i, j)];
                if i < mesh.nx() {
                    tv += (phi[mesh.node_id(i + 1, j)] - v).abs();
                }
                if j < mesh.ny() {
                    tv += (phi[mesh.node_id(i, j + 1)] - v).abs();
                }
            }
        }
        tv
    };
    Oscillation { min, max, bounds, max_overshoot, max_undershoot, total_variation: tv }
}

/// Outcome of one benchmark run.
#[derive(Debug, Clone)]
pub struct CaseRun {
    pub id: String,
    pub config: ProblemConfig,
    pub mesh: StructuredMesh,
    pub solution: SolutionField,
    pub solve: SolveReport,
    pub errors: Option<ErrorReport>,
    pub oscillation: Oscillation,
    pub assembly_time: f64,
    pub solve_time: f64,
}

impl CaseRun {
    pub fn wall_time(&self) -> f64 {
        self.assembly_time + self.solve_time
    }
}

/// Solves `config` and measures assembly and solve times separately.
pub fn timed_solve(mesh: &StructuredMesh, config: &ProblemConfig) -> Result<(SolutionField, SolveReport, f64, f64)> {
    let start = Instant::now();
    let mut system = assemble(mesh, config)?;
    apply_dirichlet(&mut system, mesh, &config.regions(mesh)?)?;
    let assembly_time = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let report = linsolve::solve(&system.matrix, &system.rhs, linsolve::DEFAULT_TOL)?;
    let solve_time = start.elapsed().as_secs_f64();
    Ok((SolutionField::from_dofs(&system.dofs, &report.solution), report, assembly_time, solve_time))
}

/// Runs a resolved configuration. Errors are measured against the
/// closed-form solution in 1D, the manufactured solution when there is one,
/// and otherwise against a refined MMAD solve when `reference_refinement`
/// is given.
pub fn run_config(id: &str, config: &ProblemConfig, reference_refinement: Option<usize>) -> Result<CaseRun> {
    let mesh = config.build_mesh()?;
    let (solution, solve, assembly_time, solve_time) = timed_solve(&mesh, config)?;
    let bounds = analytic_bounds(&mesh, config)?;
    let options = NormOptions { subdivisions: 1, bounds };
    let errors = if mesh.dim() == 1 && config.manufactured().is_none() {
        match (&config.velocity, &config.source) {
            (Velocity::Constant(u), &Source::Constant(f)) if is_homogeneous_interval(config) => {
                let exact = Exact1d::new(config.pe, config.da, u[0], f)?;
                let opts = NormOptions { subdivisions: 4, bounds };
                Some(if config.method.has_micromorphic_field() {
                    error_norms(&mesh, &solution, &induced_reference(&mesh, config, exact)?, &opts)?
                } else {
                    error_norms(&mesh, &solution, &exact, &opts)?
                })
            }
            _ => None,
        }
    } else if let Some(m) = config.manufactured() {
        let exact = ManufacturedReference { solution: m, dim: mesh.dim() };
        let opts = NormOptions { subdivisions: 2, bounds };
        Some(if config.method.has_micromorphic_field() {
            error_norms(&mesh, &solution, &induced_reference(&mesh, config, exact)?, &opts)?
        } else {
            error_norms(&mesh, &solution, &exact, &opts)?
        })
    } else if let Some(k) = reference_refinement {
        let mut fine_cfg = config.clone();
        fine_cfg.mesh = config.mesh.iter().map(|n| n * k).collect();
        fine_cfg.method = Method::Mmad;
        let fine_mesh = fine_cfg.build_mesh()?;
        let (fine, _, _, _) = timed_solve(&fine_mesh, &fine_cfg)?;
        let reference = FieldReference { mesh: fine_mesh, field: fine };
        Some(error_norms(&mesh, &solution, &reference, &NormOptions { subdivisions: k, ..options })?)
    } else {
        None
    };
    let oscillation = oscillation(&mesh, &solution.phi, bounds);
    Ok(CaseRun { id: id.into(), config: config.clone(), mesh, solution, solve, errors, oscillation, assembly_time, solve_time })
}

fn is_homogeneous_interval(config: &ProblemConfig) -> bool {
    config.boundaries.iter().all(|b| b.kind == BoundaryKind::Dirichlet && b.profile == Profile::Constant(0.0))
}

/// Runs catalog case `id` with `method` and `overrides`.
pub fn run_case(id: &str, method: Method, overrides: &Overrides) -> Result<CaseRun> {
    let case = find_case(id)?;
    let cfg = resolve_config(&case, method, overrides)?;
    run_config(id, &cfg, overrides.reference_refinement)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub unknowns: usize,
    pub dofs_per_node: usize,
    pub nnz: usize,
    pub assembly_time: f64,
    pub solve_time: f64,
    pub wall_time: f64,
    pub oscillation: Oscillation,
    pub errors: Option<ErrorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub id: String,
    pub pe: f64,
    pub da: f64,
    pub rows: Vec<ComparisonRow>,
    /// MMAD unknowns over Galerkin unknowns.
    pub dof_ratio: f64,
}

impl Comparison {
    pub fn row(&self, method: Method) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Runs Galerkin and MMAD on the same sub-case. Each method is timed
/// `repeats` times and the fastest run is kept.
pub fn compare_methods(id: &str, overrides: &Overrides, repeats: usize) -> Result<Comparison> {
    let case = find_case(id)?;
    let mut rows = Vec::new();
    let mut pe_da = (0.0, 0.0);
    for method in [Method::Galerkin, Method::Mmad] {
        let cfg = resolve_config(&case, method, overrides)?;
        pe_da = (cfg.pe, cfg.da);
        let mut best: Option<CaseRun> = None;
        for _ in 0..repeats.max(1) {
            let run = run_config(id, &cfg, overrides.reference_refinement)?;
            if best.as_ref().is_none_or(|b| run.wall_time() < b.wall_time()) {
                best = Some(run);
            }
        }
        let run = best.expect("at least one run");
        rows.push(ComparisonRow {
            method,
            unknowns: run.solve.unknowns,
            dofs_per_node: run.solve.unknowns / run.mesh.num_nodes(),
            nnz: run.solve.nnz,
            assembly_time: run.assembly_time,
            solve_time: run.solve_time,
            wall_time: run.wall_time(),
            oscillation: run.oscillation,
            errors: run.errors,
        });
    }
    let dof_ratio = rows[1].unknowns as f64 / rows[0].unknowns as f64;
    Ok(Comparison { id: id.into(), pe: pe_da.0, da: pe_da.1, rows, dof_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_cases_with_default_meshes() {
        let cat = catalog();
        assert_eq!(cat.len(), 6);
        let ids: Vec<&str> = cat.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["ex1", "ex2", "ex3", "ex4", "ex5", "ex6"]);
        let ex1 = &cat[0];
        assert_eq!(ex1.config.mesh, vec![100]);
        let mesh = ex1.config.build_mesh().unwrap();
        assert!((mesh.h_dir()[0] - 0.01).abs() < 1e-15);
        for c in &cat[1..] {
            let m = c.config.build_mesh().unwrap();
            assert_eq!(c.config.mesh, vec![40, 40]);
            assert!((m.h_dir()[0] - 0.025).abs() < 1e-15);
        }
    }

    #[test]
    fn printed_subcases_present() {
        let has = |id: &str, pe: Option<f64>, da: f64| {
            find_case(id).unwrap().subcases.iter().any(|s| s.da == da && pe.is_none_or(|p| s.pe == p))
        };
        assert!(has("ex3", Some(1e3), 10.0));
        assert!(has("ex4", None, 1e6));
        assert!(has("ex4", None, 1.0));
        assert!(has("ex4", Some(1e6), 1e-2));
        assert!(has("ex1", Some(1e6), 1e-2));
    }

    #[test]
    fn subcases_are_valid_and_cover_boundary() {
        for c in catalog() {
            for (i, s) in c.subcases.iter().enumerate() {
                assert!(s.pe > 0.0 && s.da >= 0.0);
                let cfg = c.config_for(i).unwrap();
                let mesh = cfg.build_mesh().unwrap();
                cfg.regions(&mesh).unwrap();
            }
        }
    }

    #[test]
    fn ex6_physical_parameters() {
        let c = find_case("ex6").unwrap();
        let p = c.physical(c.subcases[0]).unwrap();
        assert_eq!(p.diffusivity, 1e-4);
        assert!((p.speed - 1.0).abs() < 1e-12);
        assert!((p.reaction_rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_case_and_bad_override() {
        assert!(matches!(run_case("ex9", Method::Mmad, &Overrides::default()), Err(Error::UnknownCase(_))));
        let bad = Overrides { pe: Some(-1.0), ..Default::default() };
        assert!(run_case("ex1", Method::Mmad, &bad).is_err());
        let bad = Overrides { mesh: Some(vec![10, 10]), ..Default::default() };
        assert!(run_case("ex1", Method::Mmad, &bad).is_err());
        let bad = Overrides { subcase: Some(42), ..Default::default() };
        assert!(run_case("ex1", Method::Mmad, &bad).is_err());
    }

    #[test]
    fn ex1_runs_report_errors() {
        let ov = Overrides { subcase: Some(2), ..Default::default() };
        let gal = run_case("ex1", Method::Galerkin, &ov).unwrap();
        let mm = run_case("ex1", Method::Mmad, &ov).unwrap();
        assert!(gal.errors.unwrap().g_norm.is_none());
        assert!(mm.errors.unwrap().g_norm.is_some());
        assert_eq!(gal.oscillation.bounds, Some((0.0, 0.01)));
    }

    #[test]
    fn oscillation_metrics_2d() {
        let mesh = StructuredMesh::grid(2, 1).unwrap();
        let phi = [0.0, 1.0, 0.0, 0.0, 2.0, 0.0];
        let o = oscillation(&mesh, &phi, Some((0.0, 1.0)));
        assert_eq!(o.total_variation, 2.0 + 4.0 + 0.0 + 1.0 + 0.0);
        assert_eq!((o.max_overshoot, o.max_undershoot), (1.0, 0.0));
    }
}
