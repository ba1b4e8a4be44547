//! Micromorphic coupling tensors.
//!
//! Per element the coupling tensor is `H = kc * u_hat (x) u_hat + kr * I` with
//! `K = I` and the gradient stiffness acting as the identity on `grad g`.
//! `kc` is the classical optimal upwind diffusion summed over the grid
//! directions, `kr` the reaction counterpart built from
//! `beta = (h / 2) * sqrt(Da * Pe)`.

use crate::error::{invalid, Result};

/// Below this `alpha` the upwind function uses its Taylor series.
pub const GAMMA_SERIES_CUTOFF: f64 = 1e-2;
/// Below this `beta` the reaction parameter uses its Taylor series.
pub const KR_SERIES_CUTOFF: f64 = 0.1;
/// Above this `beta` the term `beta^2 / sinh^2(beta)` is dropped.
pub const KR_ASYMPTOTIC_CUTOFF: f64 = 30.0;
/// Velocities with a smaller norm are treated as zero.
pub const ZERO_VELOCITY: f64 = 1e-14;

/// Upwind function `coth(alpha) - 1 / alpha`, extended by 0 at `alpha = 0`.
pub fn gamma(alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(invalid(format!("upwind argument must be >= 0, got {alpha}")));
    }
    if alpha < GAMMA_SERIES_CUTOFF {
        Ok(gamma_series(alpha))
    } else {
        Ok(1.0 / alpha.tanh() - 1.0 / alpha)
    }
}

/// `alpha/3 - alpha^3/45 + 2 alpha^5/945 - alpha^7/4725`.
pub fn gamma_series(alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    alpha * (1.0 / 3.0 + a2 * (-1.0 / 45.0 + a2 * (2.0 / 945.0 - a2 / 4725.0)))
}

/// Convective stabilization `sum_i |u_i| h_i gamma(Pe h_i / 2) / 2`.
pub fn kc_bar(u: &[f64], h_dir: &[f64], pe: f64) -> Result<f64> {
    check_pe(pe)?;
    if u.len() != h_dir.len() {
        return Err(invalid(format!(
            "velocity has {} components but the mesh has {} directions",
            u.len(),
            h_dir.len()
        )));
    }
    u.iter().zip(h_dir).try_fold(0.0, |acc, (ui, hi)| {
        Ok(acc + ui.abs() * hi * gamma(pe * hi / 2.0)? / 2.0)
    })
}

/// `beta = (h / 2) sqrt(Da Pe)`.
pub fn reaction_beta(pe: f64, da: f64, h: f64) -> f64 {
    0.5 * h * (da * pe).sqrt()
}

/// Reaction stabilization `(1/Pe) [2/3 beta^2 + beta^2 / sinh^2(beta) - 1]`.
pub fn kr_bar(pe: f64, da: f64, h: f64) -> Result<f64> {
    check_pe(pe)?;
    if !(da >= 0.0) {
        return Err(invalid(format!("Damkoehler number must be >= 0, got {da}")));
    }
    if !(h > 0.0) {
        return Err(invalid(format!("element size must be > 0, got {h}")));
    }
    Ok(kr_from_beta(reaction_beta(pe, da, h), pe))
}

/// Reaction stabilization as a function of `beta`, switching between the
/// series, the closed form and the large-`beta` asymptote.
pub fn kr_from_beta(beta: f64, pe: f64) -> f64 {
    if beta < KR_SERIES_CUTOFF {
        kr_series(beta, pe)
    } else if beta > KR_ASYMPTOTIC_CUTOFF {
        (2.0 / 3.0 * beta * beta - 1.0) / pe
    } else {
        kr_closed_form(beta, pe)
    }
}

/// Closed form, accurate away from `beta = 0`.
pub fn kr_closed_form(beta: f64, pe: f64) -> f64 {
    let b2 = beta * beta;
    let s = beta.sinh();
    (2.0 / 3.0 * b2 + b2 / (s * s) - 1.0) / pe
}

/// `(beta^2/3 + beta^4/15 - 2 beta^6/189 + beta^8/675) / Pe`.
pub fn kr_series(beta: f64, pe: f64) -> f64 {
    let b2 = beta * beta;
    b2 * (1.0 / 3.0 + b2 * (1.0 / 15.0 + b2 * (-2.0 / 189.0 + b2 / 675.0))) / pe
}

fn check_pe(pe: f64) -> Result<()> {
    if pe > 0.0 && pe.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("Peclet number must be positive and finite, got {pe}")))
    }
}

pub type Mat2 = [[f64; 2]; 2];

/// Elementwise micromorphic data. Tensors are stored as 2x2 arrays; on 1D
/// meshes only the `[0][0]` entries are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationTensors {
    pub dim: usize,
    pub kc: f64,
    pub kr: f64,
    pub h: Mat2,
    pub k: Mat2,
    /// Scalar multiple of the fourth-order identity acting on `grad g`.
    pub a_coeff: f64,
}

impl StabilizationTensors {
    /// Eigenvalues of `H`, ascending.
    pub fn h_eigenvalues(&self) -> Vec<f64> {
        if self.dim == 1 {
            return vec![self.h[0][0]];
        }
        sym_eigenvalues(&self.h).to_vec()
    }

    /// Largest absolute entry of `H`.
    pub fn h_max_entry(&self) -> f64 {
        max_abs(&self.h, self.dim)
    }

    pub fn k_max_entry(&self) -> f64 {
        max_abs(&self.k, self.dim)
    }

    /// Lower bound of `a . H a / |a|^2`.
    pub fn h_min_eigenvalue(&self) -> f64 {
        self.h_eigenvalues()[0]
    }

    pub fn k_min_eigenvalue(&self) -> f64 {
        if self.dim == 1 {
            self.k[0][0]
        } else {
            sym_eigenvalues(&self.k)[0]
        }
    }
}

fn max_abs(m: &Mat2, dim: usize) -> f64 {
    let mut out = 0.0f64;
    for row in m.iter().take(dim) {
        for v in row.iter().take(dim) {
            out = out.max(v.abs());
        }
    }
    out
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues(m: &Mat2) -> [f64; 2] {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let diff = 0.5 * (m[0][0] - m[1][1]);
    let r = diff.hypot(m[0][1]);
    [mean - r, mean + r]
}

/// Micromorphic tensors for velocity `u`, element sizes `h_dir`.
///
/// The scalar size entering `kr` is `min(h_dir)`.
pub fn build_tensors(u: &[f64], h_dir: &[f64], pe: f64, da: f64) -> Result<StabilizationTensors> {
    let dim = h_dir.len();
    if !(1..=2).contains(&dim) {
        return Err(invalid(format!("unsupported dimension {dim}")));
    }
    let h_min = h_dir.iter().copied().fold(f64::INFINITY, f64::min);
    let kr = kr_bar(pe, da, h_min)?;
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let kc = if norm < ZERO_VELOCITY { 0.0 } else { kc_bar(u, h_dir, pe)? };
    let mut h = [[0.0; 2]; 2];
    let mut k = [[0.0; 2]; 2];
    for i in 0..dim {
        h[i][i] = kr;
        k[i][i] = 1.0;
        if norm >= ZERO_VELOCITY {
            for j in 0..dim {
                h[i][j] += kc * u[i] * u[j] / (norm * norm);
            }
        }
    }
    Ok(StabilizationTensors { dim, kc, kr, h, k, a_coeff: 1.0 })
}

/// Degenerate tensors `H = p I`, `K = 0`, no gradient stiffness.
pub fn build_tensors_mzad(p: f64, dim: usize) -> Result<StabilizationTensors> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid(format!("projection weight must be positive, got {p}")));
    }
    if !(1..=2).contains(&dim) {
        return Err(invalid(format!("unsupported dimension {dim}")));
    }
    let mut h = [[0.0; 2]; 2];
    for (i, row) in h.iter_mut().enumerate().take(dim) {
        row[i] = p;
    }
    Ok(StabilizationTensors { dim, kc: 0.0, kr: 0.0, h, k: [[0.0; 2]; 2], a_coeff: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(0.0).unwrap(), 0.0);
        assert!((gamma(1e-8).unwrap() - 1e-8 / 3.0).abs() < 1e-24);
        assert!((gamma(1.0).unwrap() - 0.313_035_285_499_331_3).abs() < 1e-15);
        assert!((gamma(50.0).unwrap() - 0.98).abs() < 1e-15);
        assert!(gamma(-1.0).is_err());
        assert!(gamma(f64::NAN).is_err());
    }

    #[test]
    fn gamma_branches_agree_at_cutoff() {
        let a = GAMMA_SERIES_CUTOFF;
        let closed = 1.0 / a.tanh() - 1.0 / a;
        assert!((gamma_series(a) - closed).abs() / closed < 1e-11);
    }

    #[test]
    fn kc_examples() {
        assert_eq!(kc_bar(&[0.0], &[0.01], 1e4).unwrap(), 0.0);
        assert!((kc_bar(&[1.0], &[0.01], 1e4).unwrap() - 4.9e-3).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let kc = kc_bar(&[s, s], &[0.025, 0.025], 1e3).unwrap();
        assert!((kc - 0.016_263_455_967_781_6).abs() < 1e-15);
        assert!(kc_bar(&[1.0], &[0.01], 0.0).is_err());
        assert!(kc_bar(&[1.0, 0.0], &[0.01], 1.0).is_err());
    }

    #[test]
    fn kr_examples() {
        assert_eq!(kr_bar(10.0, 0.0, 0.025).unwrap(), 0.0);
        let kr = kr_bar(1e3, 10.0, 0.025).unwrap();
        assert!((kr - 6.505_567_170_783_94e-4).abs() < 1e-15);
        let kr = kr_bar(1.0, 1e6, 0.025).unwrap();
        assert!((kr - 103.166_666_675_346_6).abs() < 1e-9);
        assert!((kr - (1e6 * 0.025f64.powi(2) / 6.0 - 1.0)).abs() < 1e-7);
        assert!(kr_bar(0.0, 1.0, 0.1).is_err());
        assert!(kr_bar(1.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn kr_branches_continuous() {
        for b in [KR_SERIES_CUTOFF, KR_ASYMPTOTIC_CUTOFF] {
            let lo = kr_from_beta(b * (1.0 - 1e-12), 1.0);
            let hi = kr_from_beta(b * (1.0 + 1e-12), 1.0);
            assert!((lo - hi).abs() <= 1e-10 * hi.abs());
        }
    }

    #[test]
    fn tensors_axis_aligned() {
        let t = build_tensors(&[1.0, 0.0], &[0.025, 0.025], 1e3, 10.0).unwrap();
        assert!((t.h[0][0] - (t.kc + t.kr)).abs() < 1e-16);
        assert!((t.h[1][1] - t.kr).abs() < 1e-16);
        assert_eq!(t.h[0][1], 0.0);
        assert_eq!(t.k, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(t.a_coeff, 1.0);
    }

    #[test]
    fn tensors_diagonal_flow() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let t = build_tensors(&[s, s], &[0.025, 0.025], 1e3, 10.0).unwrap();
        let kc = 0.016_263_455_967_781_6;
        let kr = 6.505_567_170_783_94e-4;
        assert!((t.h[0][0] - (0.5 * kc + kr)).abs() < 1e-14);
        assert!((t.h[0][1] - 0.5 * kc).abs() < 1e-14);
        assert!((t.h[1][0] - t.h[0][1]).abs() == 0.0);
    }

    #[test]
    fn tensors_reaction_only() {
        let t = build_tensors(&[0.0, 0.0], &[0.025, 0.025], 1.0, 1e6).unwrap();
        assert_eq!(t.kc, 0.0);
        assert!((t.h[0][0] - 103.166_666_675).abs() < 1e-6);
        assert_eq!(t.h[0][1], 0.0);
        assert_eq!(t.h[0][0], t.h[1][1]);
    }

    #[test]
    fn mzad_tensors() {
        let t = build_tensors_mzad(0.3, 2).unwrap();
        assert_eq!(t.h, [[0.3, 0.0], [0.0, 0.3]]);
        assert_eq!(t.k, [[0.0; 2]; 2]);
        assert_eq!(t.a_coeff, 0.0);
        assert!(build_tensors_mzad(0.0, 2).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gamma_increasing_and_bounded(a in 0.0..200.0f64, d in 1e-6..5.0f64) {
                let g0 = gamma(a).unwrap();
                let g1 = gamma(a + d).unwrap();
                prop_assert!(g0 >= 0.0 && g1 < 1.0);
                prop_assert!(g1 > g0 || g1 == g0 && g0 > 0.999);
            }

            #[test]
            fn gamma_series_cross_check(a in 1e-6..1e-2f64) {
                let two_terms = a / 3.0 - a.powi(3) / 45.0;
                prop_assert!((gamma(a).unwrap() - two_terms).abs() < 1e-10);
            }

            #[test]
            fn kc_homogeneous_in_velocity(ux in -3.0..3.0f64, uy in -3.0..3.0f64, pe in 1.0..1e6f64) {
                let h = [0.025, 0.05];
                let k1 = kc_bar(&[ux, uy], &h, pe).unwrap();
                let k2 = kc_bar(&[2.0 * ux, 2.0 * uy], &h, pe).unwrap();
                prop_assert!((k2 - 2.0 * k1).abs() <= 1e-14 * k2.abs().max(1e-300));
                prop_assert!(k1 >= 0.0);
            }

            #[test]
            fn kr_monotone_in_da(pe in 1e-2..1e6f64, da in 0.0..1e6f64, dd in 0.0..1e3f64, h in 1e-3..0.5f64) {
                let k0 = kr_bar(pe, da, h).unwrap();
                let k1 = kr_bar(pe, da + dd, h).unwrap();
                prop_assert!(k0 >= 0.0);
                prop_assert!(k1 >= k0 * (1.0 - 1e-12));
            }

            #[test]
            fn h_eigen_structure(ux in -2.0..2.0f64, uy in -2.0..2.0f64, pe in 1.0..1e5f64, da in 0.0..1e3f64) {
                prop_assume!(ux.hypot(uy) > 1e-3);
                let t = build_tensors(&[ux, uy], &[0.025, 0.025], pe, da).unwrap();
                let n = ux.hypot(uy);
                let u_hat = [ux / n, uy / n];
                let perp = [-u_hat[1], u_hat[0]];
                let apply = |v: [f64; 2]| [t.h[0][0] * v[0] + t.h[0][1] * v[1], t.h[1][0] * v[0] + t.h[1][1] * v[1]];
                let hu = apply(u_hat);
                let hp = apply(perp);
                for i in 0..2 {
                    prop_assert!((hu[i] - (t.kc + t.kr) * u_hat[i]).abs() < 1e-12);
                    prop_assert!((hp[i] - t.kr * perp[i]).abs() < 1e-12);
                }
                let ev = t.h_eigenvalues();
                prop_assert!((ev[0] - t.kr).abs() < 1e-12 && (ev[1] - t.kc - t.kr).abs() < 1e-12);
            }
        }
    }
}
