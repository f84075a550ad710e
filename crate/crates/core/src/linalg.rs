//! Small dense vector helpers. Every reduction runs in index order so results
//! are bit-reproducible.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Radial projection onto the Euclidean ball of radius `radius`.
pub fn project_ball(w: &mut [f64], radius: f64) {
    let n = norm(w);
    if n > radius && n > 0.0 {
        let s = radius / n;
        for wi in w.iter_mut() {
            *wi *= s;
        }
    }
}
