//! Per-dimension integrand factors of the separable kernel representations,
//! plus the closed-form reference potentials the experiments compare against.
//!
//! Conventions for the factor functions: every scalar that is shared by all n
//! dimensions (the global 1/4 or 1/2, reaction damping e^{-ct/2}, substitution
//! Jacobians) belongs to the quadrature weight, never to a factor. The only
//! n-dependent power that a factor carries is one (1+t)^{-1/2} share per
//! dimension, applied by the kernel builder — that keeps factors O(1) in n.

use num_complex::Complex64;

use crate::specfun::{self, laguerre_weighted_sum};
use crate::{Error, Result};

/// Parameters of a cubature formula of order 2M on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubatureParams {
    /// Space dimension.
    pub n: usize,
    /// Grid step.
    pub h: f64,
    /// Scaling parameter of the generating function. With d >= 3 the formula
    /// behaves like a high-order one (the saturation term is below rounding).
    pub d: f64,
    /// Half-order M; the approximation order is 2M. Supported up to M = 8.
    pub m: usize,
}

impl CubatureParams {
    pub fn new(n: usize, h: f64, d: f64, m: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParams("dimension n must be >= 1".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParams(format!(
                "grid step h must be > 0, got {h}"
            )));
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidParams(format!(
                "scaling D must be > 0, got {d}"
            )));
        }
        if !(1..=8).contains(&m) {
            return Err(Error::InvalidParams(format!(
                "half-order M must be in 1..=8, got {m} (the Laguerre recurrence is only \
                 validated up to M = 8)"
            )));
        }
        Ok(Self { n, h, d, m })
    }
}

/// Drift and reaction coefficients of the operator -Δ + 2b·∇ + c.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvectionDiffusionParams {
    pub b: Vec<f64>,
    pub c: f64,
}

impl AdvectionDiffusionParams {
    /// Requires c + |b|² ≥ 0; for n < 3 the integral representation needs
    /// strict positivity.
    pub fn new(b: Vec<f64>, c: f64, n: usize) -> Result<Self> {
        if b.len() != n {
            return Err(Error::InvalidParams(format!(
                "drift vector has length {}, expected n = {n}",
                b.len()
            )));
        }
        let lambda2 = c + b.iter().map(|v| v * v).sum::<f64>();
        if lambda2 < 0.0 || (n < 3 && lambda2 <= 0.0) {
            return Err(Error::InvalidParams(format!(
                "c + |b|^2 = {lambda2} outside the validity region (needs >= 0, > 0 for n < 3)"
            )));
        }
        Ok(Self { b, c })
    }

    pub fn lambda_squared(&self) -> f64 {
        self.c + self.b.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Newton potential of the Gaussian e^{-|y|²} in n >= 3 dimensions,
/// γ(n/2-1, r²) / (4 r^{n-2}), as a function of the radius r.
///
/// Evaluated through the scaled incomplete gamma, so the r -> 0 limit
/// 1/(2(n-2)) and very large n are handled without over/underflow.
pub fn newton_gaussian_exact(n: usize, r: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain(format!(
            "newton potential needs n >= 3, got {n}"
        )));
    }
    let a = n as f64 / 2.0 - 1.0;
    Ok(specfun::lower_gamma_scaled(a, r * r)? / 4.0)
}

/// Newton potential of the radial generating function of order 2M,
/// (4π^{n/2} r^{n-2})^{-1} γ(n/2-1, r²)
///   + π^{-n/2} e^{-r²} Σ_{j=0}^{M-2} L_j^{(n/2-1)}(r²) / (4(j+1)).
pub fn newton_eta_radial_exact(m: usize, n: usize, r: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain(format!(
            "newton potential needs n >= 3, got {n}"
        )));
    }
    let pi_pow = std::f64::consts::PI.powf(-(n as f64) / 2.0);
    let mut value = pi_pow * newton_gaussian_exact(n, r)?;
    if m >= 2 {
        let r2 = r * r;
        let alpha = n as f64 / 2.0 - 1.0;
        let mut sum = 0.0;
        for j in 0..=(m - 2) {
            sum += specfun::laguerre(j, alpha, r2)? / (4.0 * (j as f64 + 1.0));
        }
        value += pi_pow * (-r2).exp() * sum;
    }
    Ok(value)
}

/// Per-dimension factor of the separable Newton integrand:
/// e^{-x²/(1+t)} Σ_{k=0}^{M-1} (1+t)^{-k} L_k^{(-1/2)}(x²/(1+t)).
///
/// The shared (1+t)^{-n/2} and the prefactor 1/4 are owned by the caller.
pub fn g_newton(m: usize, x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    let inv = 1.0 / (1.0 + t);
    let y = x * x * inv;
    laguerre_weighted_sum(m, y, inv) * (-y).exp()
}

/// Per-dimension factor of the advection-diffusion integrand,
/// g_M(2t, x - t·b_j). The shared e^{-ct/2} (1+2t)^{-n/2} / 2 stays with the
/// quadrature weight.
pub fn advdiff_factor(m: usize, x: f64, t: f64, b_j: f64) -> f64 {
    g_newton(m, x - t * b_j, 2.0 * t)
}

/// Potential of e^{-|y|²} for the operator -Δ + 2b·∇ + c in n = 3, via the
/// scaled complementary error function:
/// (√π/4) e^{-|x|²}/s [w(i(λ-s)/2) - w(i(λ+s)/2)], s = |2x+b|, λ = √(c+|b|²).
///
/// Both w-arguments are purely imaginary; each product e^{-|x|²} w(i·/2) is
/// assembled cancellation-free, so the value stays accurate out to large |x|
/// where direct evaluation of the two factors overflows.
pub fn advdiff_exact_n3(b: &[f64; 3], c: f64, x: &[f64; 3]) -> Result<f64> {
    let lambda2 = c + b.iter().map(|v| v * v).sum::<f64>();
    if lambda2 <= 0.0 {
        return Err(Error::Domain(format!(
            "advdiff_exact_n3 needs c + |b|^2 > 0, got {lambda2}"
        )));
    }
    let lambda = lambda2.sqrt();
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let s = {
        let mut acc = 0.0;
        for j in 0..3 {
            let v = 2.0 * x[j] + b[j];
            acc += v * v;
        }
        acc.sqrt()
    };

    // e^{-|x|²} w(i y) for y = (λ ∓ s)/2 without overflow. For y >= 0 use
    // erfcx directly; for y < 0 split off the dominant 2 e^{y²} analytically:
    // e^{-r²} w(iy) = 2 e^{y² - r²} - e^{-r²} erfcx(-y).
    let scaled_w = |y: f64| -> f64 {
        if y >= 0.0 {
            (-r2).exp() * specfun::erfcx(y)
        } else {
            2.0 * (y * y - r2).exp() - (-r2).exp() * specfun::erfcx(-y)
        }
    };

    if s > 1e-6 * lambda.max(1.0) {
        let diff = scaled_w((lambda - s) / 2.0) - scaled_w((lambda + s) / 2.0);
        Ok(std::f64::consts::PI.sqrt() / 4.0 * diff / s)
    } else {
        // s -> 0 limit by the odd Taylor expansion of G(σ) = erfcx(σ/2):
        // [G(λ-s) - G(λ+s)]/s = -2G'(λ) - s²G'''(λ)/3 + O(s⁴).
        let e = specfun::erfcx(lambda / 2.0);
        // erfcx' = 2t·erfcx - 2/√π, chain rule for the /2 argument
        let t = lambda / 2.0;
        let d1 = 2.0 * t * e - 2.0 / std::f64::consts::PI.sqrt();
        let d2 = 2.0 * e + 2.0 * t * d1;
        let d3 = 4.0 * d1 + 2.0 * t * d2;
        let g1 = d1 / 2.0;
        let g3 = d3 / 8.0;
        let diff_over_s = -2.0 * g1 - s * s * g3 / 3.0;
        Ok(std::f64::consts::PI.sqrt() / 4.0 * (-r2).exp() * diff_over_s)
    }
}

/// Same value through the complex Faddeeva function; kept as the uniform code
/// path the exact formula is stated with, and cross-checked against
/// [`advdiff_exact_n3`] in tests.
pub fn advdiff_exact_n3_faddeeva(b: &[f64; 3], c: f64, x: &[f64; 3]) -> Result<f64> {
    let lambda2 = c + b.iter().map(|v| v * v).sum::<f64>();
    if lambda2 <= 0.0 {
        return Err(Error::Domain("c + |b|^2 must be > 0".into()));
    }
    let lambda = lambda2.sqrt();
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let mut s2 = 0.0;
    for j in 0..3 {
        let v = 2.0 * x[j] + b[j];
        s2 += v * v;
    }
    let s = s2.sqrt();
    if s < 1e-6 {
        return advdiff_exact_n3(b, c, x);
    }
    let wm = specfun::faddeeva(Complex64::new(0.0, (lambda - s) / 2.0));
    let wp = specfun::faddeeva(Complex64::new(0.0, (lambda + s) / 2.0));
    Ok(std::f64::consts::PI.sqrt() / 4.0 * (-r2).exp() / s * (wm.re - wp.re))
}

/// Per-dimension factor of the heat-potential integrand:
/// e^{-x²/(Dh²+4νλ)} Σ_{l<M} (Dh²)^l (Dh²+4νλ)^{-l-1/2} L_l^{(-1/2)}(x²/(Dh²+4νλ)).
///
/// Unlike the elliptic factors this one carries its own (·)^{-1/2} share, so
/// the product over dimensions reproduces the full (Dh²+4νλ)^{-n/2}.
pub fn heat_factor(m: usize, x: f64, lambda: f64, d: f64, h: f64, nu: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    let dh2 = d * h * h;
    let sigma2 = dh2 + 4.0 * nu * lambda;
    let y = x * x / sigma2;
    laguerre_weighted_sum(m, y, dh2 / sigma2) * (-y).exp() / sigma2.sqrt()
}

/// Test density e^{-r²}.
pub fn gaussian_density(r: f64) -> f64 {
    (-r * r).exp()
}

/// Test density (4r² - 2n) e^{-r²} = Δ e^{-|y|²}; its Newton potential is
/// -e^{-r²} in every dimension.
pub fn laplacian_gaussian_density(n: usize, r: f64) -> f64 {
    (4.0 * r * r - 2.0 * n as f64) * (-r * r).exp()
}

/// Newton potential of [`laplacian_gaussian_density`].
pub fn laplacian_gaussian_potential(r: f64) -> f64 {
    -(-r * r).exp()
}
