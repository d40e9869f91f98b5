//! Small numerical kernels: compensated products, 2x2 matrix helpers.

/// `a*b - c*d` with one fused-multiply-add compensation (Kahan). Removes the
/// catastrophic cancellation of the naive expression; the result is accurate
/// to a couple of ulps of the true value given exact inputs.
#[inline]
pub fn diff_of_products(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let cd = c * d;
    let err = c.mul_add(d, -cd); // exact: c*d = cd + err
    let dop = a.mul_add(b, -cd);
    dop - err
}

pub type Mat2 = [[f64; 2]; 2];

#[inline]
pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

#[inline]
pub fn mat_vec(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [
        a[0][0] * v[0] + a[0][1] * v[1],
        a[1][0] * v[0] + a[1][1] * v[1],
    ]
}

#[inline]
pub fn det2(a: &Mat2) -> f64 {
    diff_of_products(a[0][0], a[1][1], a[0][1], a[1][0])
}

/// Largest singular value of a 2x2 matrix.
pub fn sigma_max(a: &Mat2) -> f64 {
    // For A^T A with trace q and determinant det(A)^2, the singular values
    // satisfy sigma^2 = (q +- sqrt(q^2 - 4 det^2)) / 2.
    let q = a[0][0] * a[0][0] + a[0][1] * a[0][1] + a[1][0] * a[1][0] + a[1][1] * a[1][1];
    let d = det2(a);
    let disc = diff_of_products(q, q, 2.0 * d, 2.0 * d).max(0.0);
    (0.5 * (q + disc.sqrt())).sqrt()
}
