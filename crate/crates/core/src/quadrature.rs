//! Triangle quadrature rules in barycentric coordinates.
//!
//! The edge-midpoint rule is exact for quadratics, which covers every
//! bilinear form among P1 functions in the scheme; the six-point rule is
//! used when projecting analytic initial data; the twelve-point rule is
//! for high-accuracy checks.

/// A quadrature node: barycentric coordinates and a weight that already sums
//  to one over the rule (multiply by the triangle area).
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Edge midpoints, degree-2 exact.
pub const EDGE_MIDPOINT: [QuadPoint; 3] = [
    QuadPoint { bary: [0.5, 0.5, 0.0], weight: 1.0 / 3.0 },
    QuadPoint { bary: [0.0, 0.5, 0.5], weight: 1.0 / 3.0 },
    QuadPoint { bary: [0.5, 0.0, 0.5], weight: 1.0 / 3.0 },
];

/// Six-point rule, degree-4 exact (Dunavant).
pub fn six_point() -> Vec<QuadPoint> {
    let a1 = 0.816_847_572_980_459;
    let b1 = 0.091_576_213_509_771;
    let w1 = 0.109_951_743_655_322;
    let a2 = 0.108_103_018_168_070;
    let b2 = 0.445_948_490_915_965;
    let w2 = 0.223_381_589_678_011;
    vec![
        QuadPoint { bary: [a1, b1, b1], weight: w1 },
        QuadPoint { bary: [b1, a1, b1], weight: w1 },
        QuadPoint { bary: [b1, b1, a1], weight: w1 },
        QuadPoint { bary: [a2, b2, b2], weight: w2 },
        QuadPoint { bary: [b2, a2, b2], weight: w2 },
        QuadPoint { bary: [b2, b2, a2], weight: w2 },
    ]
}

/// Twelve-point rule, degree-6 exact (Dunavant).
pub fn twelve_point() -> Vec<QuadPoint> {
    let a1 = 0.873_821_971_016_996;
    let b1 = 0.063_089_014_491_502;
    let w1 = 0.050_844_906_370_207;
    let a2 = 0.501_426_509_658_179;
    let b2 = 0.249_286_745_170_910;
    let w2 = 0.116_786_275_726_379;
    let a3 = 0.636_502_499_121_399;
    let b3 = 0.310_352_451_033_785;
    let c3 = 0.053_145_049_844_816;
    let w3 = 0.082_851_075_618_374;
    vec![
        QuadPoint { bary: [a1, b1, b1], weight: w1 },
        QuadPoint { bary: [b1, a1, b1], weight: w1 },
        QuadPoint { bary: [b1, b1, a1], weight: w1 },
        QuadPoint { bary: [a2, b2, b2], weight: w2 },
        QuadPoint { bary: [b2, a2, b2], weight: w2 },
        QuadPoint { bary: [b2, b2, a2], weight: w2 },
        QuadPoint { bary: [a3, b3, c3], weight: w3 },
        QuadPoint { bary: [a3, c3, b3], weight: w3 },
        QuadPoint { bary: [b3, a3, c3], weight: w3 },
        QuadPoint { bary: [b3, c3, a3], weight: w3 },
        QuadPoint { bary: [c3, a3, b3], weight: w3 },
        QuadPoint { bary: [c3, b3, a3], weight: w3 },
    ]
}

/// Physical coordinates of a quadrature node on a triangle.
pub fn physical_point(corners: &[[f64; 2]; 3], bary: [f64; 3]) -> [f64; 2] {
    [
        bary[0] * corners[0][0] + bary[1] * corners[1][0] + bary[2] * corners[2][0],
        bary[0] * corners[0][1] + bary[1] * corners[1][1] + bary[2] * corners[2][1],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate_monomial(rule: &[QuadPoint], px: u32, py: u32) -> f64 {
        // unit reference triangle (0,0)-(1,0)-(0,1), area 1/2
        let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        rule.iter()
            .map(|q| {
                let p = physical_point(&corners, q.bary);
                0.5 * q.weight * p[0].powi(px as i32) * p[1].powi(py as i32)
            })
            .sum()
    }

    fn exact_monomial(px: u32, py: u32) -> f64 {
        // int over the unit triangle of x^p y^q = p! q! / (p+q+2)!
        let fact = |k: u32| (1..=k).map(|v| v as f64).product::<f64>().max(1.0);
        fact(px) * fact(py) / fact(px + py + 2)
    }

    #[test]
    fn rules_integrate_their_degree_exactly() {
        let rules: [(&[QuadPoint], u32); 3] = [
            (&EDGE_MIDPOINT, 2),
            (&six_point(), 4),
            (&twelve_point(), 6),
        ];
        for (rule, degree) in rules {
            for px in 0..=degree {
                for py in 0..=(degree - px) {
                    let got = integrate_monomial(rule, px, py);
                    let want = exact_monomial(px, py);
                    assert!(
                        (got - want).abs() < 1e-14,
                        "degree {degree} rule failed on x^{px} y^{py}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for rule in [EDGE_MIDPOINT.to_vec(), six_point(), twelve_point()] {
            let s: f64 = rule.iter().map(|q| q.weight).sum();
            assert!((s - 1.0).abs() < 1e-13);
        }
    }
}
