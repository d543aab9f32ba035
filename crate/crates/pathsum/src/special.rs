//! Bessel functions of the first kind, the Struve function H1 and a
//! bracketing root finder.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;

/// `J_0(x), ..., J_nmax(x)` by Miller's downward recurrence normalized with
/// `J_0 + 2 Σ J_2k = 1`.
pub fn bessel_j_all(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = nmax.max(ax as usize);
    let mut start = top + 30 + (50.0 * (top as f64 + 1.0)).sqrt() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        // J_{k-1} = (2k/x) J_k - J_{k+1}
        let prev = 2.0 * k as f64 / ax * cur - next;
        next = cur;
        cur = prev;
        let idx = k - 1;
        if idx <= nmax {
            out[idx] = cur;
        }
        if idx + 1 <= nmax {
            out[idx + 1] = next;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    if x < 0.0 {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

pub fn bessel_j(n: usize, x: f64) -> f64 {
    bessel_j_all(n, x)[n]
}

/// `J_n` from the integral `(1/π) ∫_0^π cos(nθ - x sin θ) dθ`; the
/// trapezoid rule converges geometrically for this periodic integrand.
pub fn bessel_j_integral(n: usize, x: f64) -> f64 {
    let m = 400 + 4 * (x.abs() as usize + n);
    let h = PI / m as f64;
    let f = |th: f64| (n as f64 * th - x * th.sin()).cos();
    let mut s = 0.5 * (f(0.0) + f(PI));
    for k in 1..m {
        s += f(k as f64 * h);
    }
    s * h / PI
}

/// Struve function `H_1(x) = (2x/π) ∫_0^{π/2} sin(x sin θ) cos²θ dθ`, by
/// composite Gauss-Legendre quadrature of the smooth integrand.
pub fn struve_h1(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let gl = GaussLegendre::new(20);
    let panels = 2 + (x.abs() / 4.0).ceil() as usize;
    let v = gl.composite(|th| (x * th.sin()).sin() * th.cos().powi(2), 0.0, PI / 2.0, panels);
    2.0 * x / PI * v
}

/// Power series `H_1(x) = Σ (-1)^k (x/2)^{2k+2} / (Γ(k+3/2) Γ(k+5/2))`,
/// accurate for moderate `x` only (cancellation grows like e^x).
pub fn struve_h1_series(x: f64) -> f64 {
    let z = x / 2.0;
    // Γ(3/2) Γ(5/2) = 3π/8
    let mut term = z * z / (3.0 * PI / 8.0);
    let mut sum = term;
    for k in 0..200 {
        let kf = k as f64;
        term *= -z * z / ((kf + 1.5) * (kf + 2.5));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Roots of `f` on `[a, b]`: sign changes on a lattice of step `step`, each
/// refined by bisection to `tol`.
pub fn bracket_roots<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, step: f64, tol: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let n = ((b - a) / step).ceil().max(1.0) as usize;
    let mut x0 = a;
    let mut f0 = f(x0);
    for k in 1..=n {
        let x1 = (a + k as f64 * step).min(b);
        let f1 = f(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// First `count` positive zeros of `J_0`.
pub fn bessel_j0_zeros(count: usize) -> Vec<f64> {
    let b = (count as f64 + 1.0) * PI;
    let z = bracket_roots(|x| bessel_j(0, x), 0.5, b, 0.05, 1e-13);
    z.into_iter().take(count).collect()
}

/// First root of `f` in `[a, b]`, or an error when there is none.
pub fn first_root<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, step: f64, tol: f64) -> Result<f64> {
    bracket_roots(f, a, b, step, tol)
        .into_iter()
        .next()
        .ok_or(Error::NoRoot(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recurrence_matches_integral_representation() {
        for &x in &[0.1, 1.0, 2.404825557695773, 7.3, 19.9, 33.0, 40.0] {
            let all = bessel_j_all(12, x);
            for n in 0..=12 {
                let r = bessel_j_integral(n, x);
                assert!((all[n] - r).abs() < 1e-12, "J_{n}({x}): {} vs {r}", all[n]);
            }
        }
    }

    #[test]
    fn j0_first_zero() {
        let z = bessel_j0_zeros(3);
        assert!((z[0] - 2.404825557695773).abs() < 1e-12);
        assert!((z[1] - 5.520078110286311).abs() < 1e-12);
        assert!((z[2] - 8.653727912911013).abs() < 1e-12);
    }

    #[test]
    fn odd_orders_flip_sign_for_negative_argument() {
        assert!((bessel_j(3, -2.5) + bessel_j(3, 2.5)).abs() < 1e-15);
        assert!((bessel_j(2, -2.5) - bessel_j(2, 2.5)).abs() < 1e-15);
    }

    #[test]
    fn struve_quadrature_matches_series() {
        for &x in &[0.3, 1.0, 4.0, 9.5, 14.88] {
            let a = struve_h1(x);
            let b = struve_h1_series(x);
            assert!((a - b).abs() < 1e-10, "H1({x}): {a} vs {b}");
        }
    }

    #[test]
    fn struve_large_argument_tends_to_two_over_pi_plus_y1() {
        // H1(x) - Y1(x) -> 2/π; at x = 40 the difference from 2/π is below 1e-3
        let x: f64 = 40.0;
        let y1 = (2.0 / (PI * x)).sqrt() * (x - 3.0 * PI / 4.0).sin();
        assert!((struve_h1(x) - y1 - 2.0 / PI).abs() < 3e-3);
    }
}
