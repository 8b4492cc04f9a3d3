//! Dense LU factorization with partial pivoting, sized for MNA systems of a
//! few dozen unknowns.

/// Factorization failed: no usable pivot in this column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular {
    pub column: usize,
}

/// Solves `a·x = b` in place. `a` is row-major `n×n` and is overwritten by
/// its LU factors; `b` is overwritten by `x`.
pub fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<(), Singular> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = scale * 1e-20;
    for k in 0..n {
        let (mut p, mut best) = (k, a[k * n + k].abs());
        for r in k + 1..n {
            let v = a[r * n + k].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if !(best > tiny) {
            return Err(Singular { column: k });
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        let pivot = a[k * n + k];
        for r in k + 1..n {
            let f = a[r * n + k] / pivot;
            if f == 0.0 {
                continue;
            }
            a[r * n + k] = f;
            for c in k + 1..n {
                a[r * n + c] -= f * a[k * n + c];
            }
            b[r] -= f * b[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in k + 1..n {
            s -= a[k * n + c] * b[c];
        }
        b[k] = s / a[k * n + k];
    }
    Ok(())
}

/// Numerical rank by Gaussian elimination with full pivoting.
pub fn rank(a: &[f64], n: usize, rel_tol: f64) -> usize {
    let mut m = a.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut rank = 0;
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    while rank < n {
        let mut best = (0.0, rank, rank);
        for (ri, &r) in rows.iter().enumerate().skip(rank) {
            for (ci, &c) in cols.iter().enumerate().skip(rank) {
                let v = m[r * n + c].abs();
                if v > best.0 {
                    best = (v, ri, ci);
                }
            }
        }
        if best.0 <= rel_tol * scale {
            break;
        }
        rows.swap(rank, best.1);
        cols.swap(rank, best.2);
        let (pr, pc) = (rows[rank], cols[rank]);
        let pivot = m[pr * n + pc];
        for &r in &rows[rank + 1..] {
            let f = m[r * n + pc] / pivot;
            for &c in &cols[rank..] {
                m[r * n + c] -= f * m[pr * n + c];
            }
        }
        rank += 1;
    }
    rank
}
