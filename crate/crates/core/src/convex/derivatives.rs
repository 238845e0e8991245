use super::ConvexError;

/// Gradient and Hessian of `x² / r` at `(x, r)`.
///
/// The Hessian is `(2/r) · [1, -x/r]ᵀ[1, -x/r]`, positive semidefinite for
/// every `r > 0` and singular along the ray `x ∝ r`.
pub fn ratio_term_derivatives(x: f64, r: f64) -> Result<([f64; 2], [[f64; 2]; 2]), ConvexError> {
    if !(r > 0.0) {
        return Err(ConvexError::Domain(r));
    }
    let q = x / r;
    let grad = [2.0 * q, -q * q];
    let hess = [[2.0 / r, -2.0 * q / r], [-2.0 * q / r, 2.0 * q * q / r]];
    Ok((grad, hess))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(h: &[[f64; 2]; 2], v: [f64; 2]) -> f64 {
        v[0] * (h[0][0] * v[0] + h[0][1] * v[1]) + v[1] * (h[1][0] * v[0] + h[1][1] * v[1])
    }

    #[test]
    fn unit_point() {
        let (g, _) = ratio_term_derivatives(1.0, 1.0).unwrap();
        assert_eq!(g, [2.0, -1.0]);
    }

    #[test]
    fn zero_numerator() {
        let (g, h) = ratio_term_derivatives(0.0, 3.0).unwrap();
        assert_eq!(g, [0.0, 0.0]);
        let v = [1.5, -2.0];
        assert!((quad(&h, v) - 2.0 * v[0] * v[0] / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hessian_quadratic_form() {
        let (_, h) = ratio_term_derivatives(2.0, 1.0).unwrap();
        assert!((quad(&h, [2.0, 4.0]) - 72.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_denominator() {
        assert!(ratio_term_derivatives(1.0, 0.0).is_err());
        assert!(ratio_term_derivatives(1.0, -2.0).is_err());
    }
}
