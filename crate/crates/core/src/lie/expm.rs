//! Dense 4×4 matrix exponential and principal logarithm.
//!
//! The exponential uses scaling-and-squaring around a diagonal Padé
//! approximant. The logarithm uses inverse scaling-and-squaring: repeated
//! principal square roots (product-form Denman–Beavers) until the argument is
//! close to the identity, a Mercator series there, and a final multiplication
//! by `2^k`.

use nalgebra::{Complex, Matrix4, Schur};

use super::LieError;

/// Degree of the diagonal Padé approximant.
const PADE_DEGREE: usize = 8;
/// The scaled argument of the Padé core has 1-norm at most this.
const EXP_NORM_TARGET: f64 = 0.5;
/// Square roots are taken until `‖X − I‖_F` falls below this.
const LOG_SERIES_RADIUS: f64 = 0.25;
const MAX_SQUARE_ROOTS: usize = 64;
const MAX_DB_ITERATIONS: usize = 100;
const MERCATOR_MAX_TERMS: usize = 200;

pub(crate) fn one_norm(a: &Matrix4<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential of an arbitrary real 4×4 matrix.
pub fn expm(a: &Matrix4<f64>) -> Matrix4<f64> {
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Matrix4::from_element(f64::NAN);
    }
    // past this many squarings every finite entry has overflowed anyway
    let squarings = if norm > EXP_NORM_TARGET {
        (norm / EXP_NORM_TARGET).log2().ceil().min(2100.0) as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);

    // c_k = c_{k-1} (q - k + 1) / (k (2q - k + 1))
    let q = PADE_DEGREE;
    let mut coeff = 1.0;
    let mut power = Matrix4::identity();
    let mut numer = Matrix4::identity();
    let mut denom = Matrix4::identity();
    for k in 1..=q {
        coeff *= (q - k + 1) as f64 / (k * (2 * q - k + 1)) as f64;
        power *= scaled;
        let term = power * coeff;
        numer += term;
        if k % 2 == 0 {
            denom += term;
        } else {
            denom -= term;
        }
    }
    // denom = D(A) is well conditioned for ‖A‖ ≤ 0.5.
    let mut result = denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is nonsingular for a scaled argument");
    for _ in 0..squarings {
        result = result * result;
    }
    result
}

/// QR sweeps allowed in the Schur decomposition before giving up.
const SCHUR_MAX_ITERATIONS: usize = 1000;

/// Eigenvalues of `a`, or `None` when the Schur iteration stalls.
///
/// The shifted matrix `a − I` is tried as a fallback because near-identity
/// inputs occasionally fail to deflate.
fn eigenvalues(a: &Matrix4<f64>) -> Option<Vec<Complex<f64>>> {
    let identity = Matrix4::identity();
    if let Some(s) = Schur::try_new(*a, f64::EPSILON, SCHUR_MAX_ITERATIONS) {
        return Some(s.complex_eigenvalues().iter().copied().collect());
    }
    Schur::try_new(a - identity, f64::EPSILON, SCHUR_MAX_ITERATIONS).map(|s| {
        s.complex_eigenvalues()
            .iter()
            .map(|ev| ev + Complex::new(1.0, 0.0))
            .collect()
    })
}

/// True when some eigenvalue of `a` lies on (or numerically touches) the
/// closed negative real axis, where no real principal logarithm exists.
/// Undecidable cases return false and are left to the square-root iteration.
fn has_nonpositive_real_eigenvalue(a: &Matrix4<f64>) -> bool {
    let scale = a.norm().max(1.0);
    eigenvalues(a).is_some_and(|evs| {
        evs.iter().any(|ev| {
            let on_axis = ev.im.abs() <= 1e-10 * scale.max(ev.norm());
            on_axis && ev.re <= 1e-14 * scale
        })
    })
}

/// Principal square root by the product form of the Denman–Beavers iteration.
pub(crate) fn sqrtm(a: &Matrix4<f64>) -> Result<Matrix4<f64>, LieError> {
    let identity = Matrix4::identity();
    let mut m = *a;
    let mut y = *a;
    for _ in 0..MAX_DB_ITERATIONS {
        let m_inv = m
            .try_inverse()
            .ok_or_else(|| LieError::LogDomain("singular iterate in square root".into()))?;
        y = y * (identity + m_inv) * 0.5;
        m = (identity + (m + m_inv) * 0.5) * 0.5;
        let delta = (m - identity).norm();
        if !delta.is_finite() {
            break;
        }
        if delta < 1e-15 {
            return Ok(y);
        }
    }
    Err(LieError::LogDomain(
        "square-root iteration did not converge".into(),
    ))
}

/// Principal logarithm of a real 4×4 matrix.
///
/// Fails with [`LieError::LogDomain`] when an eigenvalue lies on the closed
/// negative real axis or the square-root iteration does not converge.
pub fn logm(a: &Matrix4<f64>) -> Result<Matrix4<f64>, LieError> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LieError::LogDomain("non-finite entries".into()));
    }
    if has_nonpositive_real_eigenvalue(a) {
        return Err(LieError::LogDomain(
            "eigenvalue on the closed negative real axis".into(),
        ));
    }
    let identity = Matrix4::<f64>::identity();
    let mut x = *a;
    let mut roots = 0usize;
    while (x - identity).norm() >= LOG_SERIES_RADIUS {
        if roots == MAX_SQUARE_ROOTS {
            return Err(LieError::LogDomain("too many square roots".into()));
        }
        x = sqrtm(&x)?;
        roots += 1;
    }

    // log(I + E) = E - E²/2 + E³/3 - ...
    let e = x - identity;
    let mut power = e;
    let mut sum = e;
    for n in 2..=MERCATOR_MAX_TERMS {
        power *= e;
        let term = power / n as f64;
        if n % 2 == 0 {
            sum -= term;
        } else {
            sum += term;
        }
        if term.norm() <= 1e-18 * sum.norm().max(1e-300) {
            break;
        }
    }
    Ok(sum * 2f64.powi(roots as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor(a: &Matrix4<f64>, terms: usize) -> Matrix4<f64> {
        let mut sum = Matrix4::identity();
        let mut term = Matrix4::identity();
        for k in 1..terms {
            term = term * a / k as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(expm(&Matrix4::zeros()), Matrix4::identity());
    }

    #[test]
    fn exp_matches_long_taylor_series_for_moderate_arguments() {
        let a = Matrix4::new(
            0.3, -1.2, 0.4, 0.0, 0.9, -0.1, 0.2, 0.7, -0.5, 0.3, 0.2, 0.1, 0.0, 0.6, -0.8, -0.4,
        );
        // 60 terms is converged to machine precision for ‖A‖ ≈ 2.
        let reference = taylor(&a, 60);
        assert!((expm(&a) - reference).norm() < 1e-12 * reference.norm());
    }

    #[test]
    fn sqrt_squares_back() {
        let a = Matrix4::new(
            2.0, 0.3, 0.0, 0.1, 0.0, 1.5, 0.2, 0.0, 0.1, 0.0, 0.8, 0.3, 0.0, 0.2, 0.0, 1.1,
        );
        let r = sqrtm(&a).unwrap();
        assert!((r * r - a).norm() < 1e-13);
    }

    #[test]
    fn log_inverts_exp_for_rotation_like_blocks() {
        // 2x2 rotation block by 2.5 rad plus a scaling block.
        let mut a = Matrix4::zeros();
        a[(0, 1)] = -2.5;
        a[(1, 0)] = 2.5;
        a[(2, 2)] = 0.7;
        a[(3, 3)] = -0.7;
        let back = logm(&expm(&a)).unwrap();
        assert!((back - a).norm() < 1e-10);
    }

    #[test]
    fn log_rejects_negative_real_eigenvalues() {
        let m = Matrix4::from_diagonal(&nalgebra::Vector4::new(-1.0, -1.0, 1.0, 1.0));
        assert!(matches!(logm(&m), Err(LieError::LogDomain(_))));
        let singular = Matrix4::from_diagonal(&nalgebra::Vector4::new(0.0, 1.0, 1.0, 1.0));
        assert!(logm(&singular).is_err());
    }
}
