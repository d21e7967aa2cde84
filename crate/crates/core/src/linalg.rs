//! Dense helpers for the small square systems that appear on every inner
//! step (σ⁻¹b). Row-major storage throughout.

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is `n×n` row-major and is overwritten. Returns `false` when a pivot
/// falls below `tol` in magnitude.
pub fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize, tol: f64) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    if n == 1 {
        if !(a[0].abs() > tol) {
            return false;
        }
        b[0] /= a[0];
        return true;
    }
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if !(a[piv * n + col].abs() > tol) {
            return false;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for c in col + 1..n {
            s -= a[col * n + c] * b[c];
        }
        b[col] = s / a[col * n + col];
    }
    true
}

/// `out = m v` for an `n×n` row-major `m`.
pub fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = m[r * n..(r + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_pivoting_system() {
        let mut a = vec![0.0, 2.0, 1.0, 1.0];
        let mut b = vec![4.0, 3.0];
        assert!(solve_in_place(&mut a, &mut b, 2, 1e-14));
        assert!((b[0] - 1.0).abs() < 1e-14);
        assert!((b[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_singular() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 1.0];
        assert!(!solve_in_place(&mut a, &mut b, 2, 1e-14));
    }
}
