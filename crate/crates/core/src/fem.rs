//! Linear line elements and bilinear quads: Gauss rules, shape functions and
//! the isoparametric map.

use crate::error::{invalid, Error, Result};
use crate::mesh::Point;

/// Tensor-product Gauss-Legendre rule on the reference element `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Two points per direction: exact for polynomials of degree 3 per direction.
pub fn gauss_rule(dim: usize) -> Result<QuadratureRule> {
    let g = 1.0 / 3f64.sqrt();
    match dim {
        1 => Ok(QuadratureRule {
            points: vec![[-g, 0.0], [g, 0.0]],
            weights: vec![1.0, 1.0],
        }),
        2 => Ok(QuadratureRule {
            points: vec![[-g, -g], [g, -g], [g, g], [-g, g]],
            weights: vec![1.0; 4],
        }),
        d => Err(invalid(format!("no quadrature rule for dimension {d}"))),
    }
}

/// Shape function values, physical gradients and Jacobian determinant at one
/// natural point. Only the first `len` entries are meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeEval {
    pub len: usize,
    pub n: [f64; 4],
    pub grad: [[f64; 2]; 4],
    pub det_j: f64,
}

impl ShapeEval {
    pub fn values(&self) -> &[f64] {
        &self.n[..self.len]
    }

    pub fn grads(&self) -> &[[f64; 2]] {
        &self.grad[..self.len]
    }

    /// Maps nodal values to the value at the point.
    pub fn interpolate(&self, nodal: &[f64]) -> f64 {
        self.values().iter().zip(nodal).map(|(n, v)| n * v).sum()
    }

    /// Gradient of the interpolated nodal field.
    pub fn interpolate_grad(&self, nodal: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (dn, v) in self.grads().iter().zip(nodal) {
            g[0] += dn[0] * v;
            g[1] += dn[1] * v;
        }
        g
    }

    pub fn physical_point(&self, coords: &[Point]) -> Point {
        let mut x = [0.0; 2];
        for (n, c) in self.values().iter().zip(coords) {
            x[0] += n * c[0];
            x[1] += n * c[1];
        }
        x
    }
}

const QUAD_XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const QUAD_ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Evaluates the element basis at `natural`. The element is a 2-node line
/// when `coords.len() == 2` and a counterclockwise quad when it is 4.
pub fn shape_eval(coords: &[Point], natural: Point) -> Result<ShapeEval> {
    match coords.len() {
        2 => {
            let xi = natural[0];
            let det_j = 0.5 * (coords[1][0] - coords[0][0]);
            if !(det_j > 0.0) {
                return Err(Error::DegenerateElement { element: usize::MAX, det_j });
            }
            let inv = 1.0 / det_j;
            Ok(ShapeEval {
                len: 2,
                n: [0.5 * (1.0 - xi), 0.5 * (1.0 + xi), 0.0, 0.0],
                grad: [[-0.5 * inv, 0.0], [0.5 * inv, 0.0], [0.0; 2], [0.0; 2]],
                det_j,
            })
        }
        4 => {
            let [xi, eta] = natural;
            let mut n = [0.0; 4];
            let mut dxi = [0.0; 4];
            let mut deta = [0.0; 4];
            for a in 0..4 {
                n[a] = 0.25 * (1.0 + QUAD_XI[a] * xi) * (1.0 + QUAD_ETA[a] * eta);
                dxi[a] = 0.25 * QUAD_XI[a] * (1.0 + QUAD_ETA[a] * eta);
                deta[a] = 0.25 * QUAD_ETA[a] * (1.0 + QUAD_XI[a] * xi);
            }
            // J = d(x, y) / d(xi, eta)
            let mut j = [[0.0; 2]; 2];
            for a in 0..4 {
                j[0][0] += dxi[a] * coords[a][0];
                j[0][1] += deta[a] * coords[a][0];
                j[1][0] += dxi[a] * coords[a][1];
                j[1][1] += deta[a] * coords[a][1];
            }
            let det_j = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if !(det_j > 0.0) {
                return Err(Error::DegenerateElement { element: usize::MAX, det_j });
            }
            let inv = 1.0 / det_j;
            let mut grad = [[0.0; 2]; 4];
            for a in 0..4 {
                // J^{-T} [dN/dxi, dN/deta]
                grad[a][0] = inv * (j[1][1] * dxi[a] - j[1][0] * deta[a]);
                grad[a][1] = inv * (-j[0][1] * dxi[a] + j[0][0] * deta[a]);
            }
            Ok(ShapeEval { len: 4, n, grad, det_j })
        }
        k => Err(invalid(format!("unsupported element with {k} nodes"))),
    }
}

/// Shape evaluations at every Gauss point of an element, paired with the
/// quadrature weight times `det_j`.
pub fn element_points(coords: &[Point], rule: &QuadratureRule) -> Result<Vec<(ShapeEval, f64)>> {
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| shape_eval(coords, *p).map(|s| (s, w * s.det_j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_quad(h: f64) -> Vec<Point> {
        vec![[0.0, 0.0], [h, 0.0], [h, h], [0.0, h]]
    }

    #[test]
    fn gauss_1d_nodes_and_exactness() {
        let r = gauss_rule(1).unwrap();
        assert!((r.points[0][0] + 0.5773502692).abs() < 1e-10);
        assert!((r.points[1][0] - 0.5773502692).abs() < 1e-10);
        assert_eq!(r.weights, vec![1.0, 1.0]);
        let quad = |f: &dyn Fn(f64) -> f64| -> f64 {
            r.points.iter().zip(&r.weights).map(|(p, w)| w * f(p[0])).sum()
        };
        assert!((quad(&|x| x * x) - 2.0 / 3.0).abs() < 1e-15);
        assert!(quad(&|x| x * x * x).abs() < 1e-15);
    }

    #[test]
    fn gauss_2d_measure() {
        let r = gauss_rule(2).unwrap();
        assert_eq!(r.points.len(), 4);
        assert_eq!(r.weights.iter().sum::<f64>(), 4.0);
        assert!(gauss_rule(3).is_err());
    }

    #[test]
    fn line_element_center() {
        let s = shape_eval(&[[0.0, 0.0], [0.01, 0.0]], [0.0, 0.0]).unwrap();
        assert_eq!(s.values(), &[0.5, 0.5]);
        assert!((s.grad[0][0] + 100.0).abs() < 1e-10);
        assert!((s.grad[1][0] - 100.0).abs() < 1e-10);
        assert!((s.det_j - 0.005).abs() < 1e-16);
    }

    #[test]
    fn unit_square_origin() {
        let s = shape_eval(&unit_quad(1.0), [0.0, 0.0]).unwrap();
        assert!(s.values().iter().all(|&n| n == 0.25));
        assert_eq!(s.det_j, 0.25);
    }

    #[test]
    fn degenerate_elements_rejected() {
        let flipped = vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]];
        assert!(matches!(shape_eval(&flipped, [0.0, 0.0]), Err(Error::DegenerateElement { .. })));
        assert!(shape_eval(&[[1.0, 0.0], [1.0, 0.0]], [0.0, 0.0]).is_err());
    }

    #[test]
    fn gradient_sum_zero_small_quad() {
        let c = unit_quad(0.025);
        for p in [[-1.0, -1.0], [0.3, -0.7], [0.9, 0.2], [1.0, 1.0]] {
            let s = shape_eval(&c, p).unwrap();
            let gx: f64 = s.grads().iter().map(|g| g[0]).sum();
            let gy: f64 = s.grads().iter().map(|g| g[1]).sum();
            assert!(gx.abs() < 1e-13 && gy.abs() < 1e-13);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn quad_strategy() -> impl Strategy<Value = Vec<Point>> {
            (0.0..1.0f64, 0.0..1.0f64, 0.01..1.0f64, 0.01..1.0f64)
                .prop_map(|(x0, y0, hx, hy)| vec![[x0, y0], [x0 + hx, y0], [x0 + hx, y0 + hy], [x0, y0 + hy]])
        }

        proptest! {
            #[test]
            fn partition_of_unity(c in quad_strategy()) {
                for (s, _) in element_points(&c, &gauss_rule(2).unwrap()).unwrap() {
                    prop_assert!((s.values().iter().sum::<f64>() - 1.0).abs() < 1e-13);
                    let gx: f64 = s.grads().iter().map(|g| g[0]).sum();
                    let gy: f64 = s.grads().iter().map(|g| g[1]).sum();
                    let scale = 1.0 / s.det_j.sqrt();
                    prop_assert!(gx.abs() < 1e-13 * scale && gy.abs() < 1e-13 * scale);
                    prop_assert!(s.det_j > 0.0);
                }
            }

            #[test]
            fn reproduces_linear_fields(c in quad_strategy(), a in -2.0..2.0f64, b in -2.0..2.0f64, d in -2.0..2.0f64) {
                let nodal: Vec<f64> = c.iter().map(|p| a + b * p[0] + d * p[1]).collect();
                for (s, _) in element_points(&c, &gauss_rule(2).unwrap()).unwrap() {
                    let x = s.physical_point(&c);
                    prop_assert!((s.interpolate(&nodal) - (a + b * x[0] + d * x[1])).abs() < 1e-12);
                    let g = s.interpolate_grad(&nodal);
                    prop_assert!((g[0] - b).abs() < 1e-10 && (g[1] - d).abs() < 1e-10);
                }
            }
        }
    }
}
