//! Property checks run by `mmfem verify`: skew-symmetry of the convection
//! form, discrete coercivity, limits of the stabilization parameters, the
//! MZAD projection identity and the unknown counts.

use serde::{Deserialize, Serialize};

use crate::analysis::{check_coercivity, check_skew_symmetry, mzad_projection_gap};
use crate::assembly::DofMap;
use crate::benchmarks::find_case;
use crate::config::{Method, Velocity};
use crate::error::Result;
use crate::mesh::StructuredMesh;
use crate::stabilization::{gamma, kr_bar, kr_from_beta};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: value <= threshold, value, threshold, detail: detail.into() }
    }

    fn at_least(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: value >= threshold, value, threshold, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub trials: usize,
    pub seed: u64,
    /// Elements per direction of the 2D test mesh.
    pub mesh: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { trials: 100, seed: 2024, mesh: 40 }
    }
}

/// `(2/3) b^2 + b^2 / sinh^2 b - 1` at `b = 1e-3`, computed in extended
/// precision.
pub const KR_SMALL_BETA_REFERENCE: f64 = 3.333333999999894e-7;

pub fn run_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let n = opts.mesh;
    let mesh = StructuredMesh::grid(n, n)?;
    let mut checks = Vec::new();

    let diag = std::f64::consts::FRAC_1_SQRT_2;
    let s = check_skew_symmetry(&mesh, &Velocity::Constant(vec![diag, diag]), opts.trials, opts.seed)?;
    checks.push(Check::at_most("skew_constant_velocity", s, 1e-12, "max |v.Cv| / |v|^2, u = (1, 1)/sqrt 2"));
    let s = check_skew_symmetry(&mesh, &Velocity::rotation(), opts.trials, opts.seed + 1)?;
    checks.push(Check::at_most("skew_rotation", s, 1e-12, "max |v.Cv| / |v|^2, u = (-y, x)"));
    let stretch = Velocity::Affine { offset: [0.0; 2], gradient: [[1.0, 0.0], [0.0, 0.0]] };
    let s = check_skew_symmetry(&mesh, &stretch, opts.trials, opts.seed + 2)?;
    checks.push(Check::at_least("skew_negative_control", s, 1e-3, "u = (x, 0) is not divergence-free"));

    let ex3 = find_case("ex3")?;
    let idx = ex3.subcases.iter().position(|s| s.pe == 1e3 && s.da == 10.0).unwrap_or(0);
    let mut cfg = ex3.config_for(idx)?;
    cfg.mesh = vec![n, n];
    cfg.method = Method::Mmad;
    let rep = check_coercivity(&mesh, &cfg, opts.trials, opts.seed + 3, None)?;
    checks.push(Check::at_most(
        "coercivity",
        rep.violations as f64,
        0.0,
        format!("M = {:e}, min B(v,v)/|v|^2 = {:e}", rep.constant, rep.min_ratio),
    ));

    let g1 = gamma(1.0)?;
    checks.push(Check::at_most("gamma_at_one", (g1 - 0.313035).abs(), 1e-6, format!("gamma(1) = {g1}")));
    let kr = kr_bar(1e3, 10.0, 0.025)?;
    checks.push(Check::at_most("kr_reference", (kr - 6.5056e-4).abs(), 1e-8, format!("kr(1e3, 10, 0.025) = {kr:e}")));
    let small = kr_from_beta(1e-3, 1.0);
    let rel = (small - KR_SMALL_BETA_REFERENCE).abs() / KR_SMALL_BETA_REFERENCE;
    checks.push(Check::at_most("kr_small_beta", rel, 1e-10, format!("kr(beta = 1e-3) = {small:e}")));
    // beta = (h/2) sqrt(Da Pe) = 30 with h = 0.025, Pe = 1e3
    let (pe, h) = (1e3f64, 0.025f64);
    let da = (60.0 / h).powi(2) / pe;
    let large = kr_bar(pe, da, h)?;
    let asym = da * h * h / 6.0 - 1.0 / pe;
    checks.push(Check::at_most("kr_large_beta", (large - asym).abs() / asym.abs(), 1e-6, format!("kr(beta = 30) = {large:e}")));

    let mut mz = cfg.clone();
    mz.method = Method::Mzad;
    let gap = mzad_projection_gap(&mesh, &mz)?;
    checks.push(Check::at_most("mzad_projection", gap, 1e-10, "max nodal |g - P grad phi|"));

    let per_1d = DofMap::new(Method::Mmad, 1, 2).dofs_per_node() as f64;
    let per_2d = DofMap::new(Method::Mmad, 2, 4).dofs_per_node() as f64;
    checks.push(Check::at_most("dofs_per_node", (per_1d - 2.0).abs() + (per_2d - 3.0).abs(), 0.0, format!("{per_1d} in 1D, {per_2d} in 2D")));
    Ok(checks)
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_small_mesh() {
        let checks = run_checks(&VerifyOptions { trials: 5, seed: 1, mesh: 8 }).unwrap();
        for c in &checks {
            assert!(c.passed, "{c:?}");
        }
        assert_eq!(checks.len(), 10);
    }
}
