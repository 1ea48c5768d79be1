//! Small numerical building blocks shared by the physics modules.

pub mod quad;
pub mod spline;

pub use quad::{adaptive_gauss_kronrod, trapezoid};
pub use spline::CubicSpline;

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// Linear interpolation on an ascending grid; `None` outside.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let i = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        k if k >= xs.len() => xs.len() - 2,
        k => k - 1,
    };
    if xs.len() == 1 {
        return Some(ys[0]);
    }
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    Some(ys[i] + t * (ys[i + 1] - ys[i]))
}
