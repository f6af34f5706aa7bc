//! Quadrature and root-finding helpers shared by the solvers.

/// Composite Simpson rule on `[a, b]` with `panels` subintervals (rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = panels.max(2).next_multiple_of(2);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Simpson on each piece of `[a, b]` cut at the interior `breaks`.
///
/// Panels are distributed in proportion to piece length, at least two per piece.
pub fn simpson_with_breaks<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&z| z > a && z < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let width = b - a;
    pts.windows(2)
        .map(|w| {
            let share = ((w[1] - w[0]) / width * panels as f64).ceil() as usize;
            simpson(&f, w[0], w[1], share.max(2))
        })
        .sum()
}

/// Simpson weights for an odd number of equally spaced samples.
pub fn simpson_samples(ys: &[f64], h: f64) -> f64 {
    let n = ys.len();
    assert!(n >= 3 && n % 2 == 1, "simpson_samples needs an odd count >= 3");
    let mut acc = ys[0] + ys[n - 1];
    for (i, y) in ys.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * y;
    }
    acc * h / 3.0
}

/// Running trapezoid integral; the first entry is zero.
pub fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
        out.push(acc);
    }
    out
}

/// Bisection for a sign change of `g` on `[lo, hi]`, run to full precision.
///
/// Assumes `g(lo)` and `g(hi)` have opposite signs (or one is zero).
/// Returns whichever final bracket end has the smaller residual.
pub fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    let mut ghi = g(hi);
    if glo == 0.0 {
        return lo;
    }
    if ghi == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
            ghi = gm;
        }
    }
    if glo.abs() <= ghi.abs() {
        lo
    } else {
        hi
    }
}

/// `n` equally spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 2);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn breaks_handle_kinks() {
        let f = |x: f64| (x - 0.3).abs();
        let v = simpson_with_breaks(f, 0.0, 1.0, &[0.3], 10);
        assert_abs_diff_eq!(v, 0.5 * 0.09 + 0.5 * 0.49, epsilon = 1e-14);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0);
        assert_abs_diff_eq!(r, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn trapezoid_of_line() {
        let xs = linspace(0.0, 1.0, 11);
        let c = cumulative_trapezoid(&xs, &xs);
        assert_abs_diff_eq!(c[10], 0.5, epsilon = 1e-14);
    }
}
