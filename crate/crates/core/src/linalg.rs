//! Dense elimination helpers used for null spaces and ranks of small
//! coefficient matrices.

/// Reduced row echelon form with partial pivoting. Returns the pivot column
/// of every nonzero row; `m` is reduced in place.
pub fn rref(m: &mut [Vec<f64>], tol: f64) -> Vec<usize> {
    let rows = m.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = m[0].len();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let (best, best_abs) = (row..rows)
            .map(|r| (r, m[r][col].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_abs <= tol {
            continue;
        }
        m.swap(row, best);
        let inv = 1.0 / m[row][col];
        for v in m[row].iter_mut() {
            *v *= inv;
        }
        let pivot_row = m[row].clone();
        for (r, other) in m.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = other[col];
            if f != 0.0 {
                for (o, p) in other.iter_mut().zip(&pivot_row) {
                    *o -= f * p;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

/// Basis of the null space of `m` (one vector per free column).
pub fn null_space(m: &[Vec<f64>], cols: usize, tol: f64) -> Vec<Vec<f64>> {
    let mut a = m.to_vec();
    let pivots = rref(&mut a, tol);
    let mut is_pivot = vec![false; cols];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    (0..cols)
        .filter(|&c| !is_pivot[c])
        .map(|free| {
            let mut v = vec![0.0; cols];
            v[free] = 1.0;
            for (r, &p) in pivots.iter().enumerate() {
                v[p] = -a[r][free];
            }
            v
        })
        .collect()
}

/// Numerical rank by elimination with full pivoting. Entries are first
/// scaled so the largest has unit magnitude.
pub fn rank(m: &[Vec<f64>], tol: f64) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .map(|r| r.iter().map(|v| v / scale).collect())
        .collect();
    let mut rank = 0;
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    loop {
        let mut best = (0, 0, 0.0f64);
        for r in (0..rows).filter(|&r| !row_used[r]) {
            for c in (0..cols).filter(|&c| !col_used[c]) {
                if a[r][c].abs() > best.2 {
                    best = (r, c, a[r][c].abs());
                }
            }
        }
        if best.2 <= tol {
            break;
        }
        let (pr, pc, _) = best;
        row_used[pr] = true;
        col_used[pc] = true;
        rank += 1;
        let pivot_row = a[pr].clone();
        for r in (0..rows).filter(|&r| !row_used[r]) {
            let f = a[r][pc] / pivot_row[pc];
            for c in 0..cols {
                a[r][c] -= f * pivot_row[c];
            }
        }
    }
    rank
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 && sxx > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_dependent_rows() {
        let m = vec![
            vec![1.0, 2.0, 3.0],
            vec![2.0, 4.0, 6.0],
            vec![0.0, 1.0, 1.0],
        ];
        assert_eq!(rank(&m, 1e-10), 2);
    }

    #[test]
    fn null_space_is_annihilated() {
        let m = vec![vec![1.0, 1.0, 0.0, -2.0], vec![0.0, 1.0, 1.0, 1.0]];
        let ns = null_space(&m, 4, 1e-12);
        assert_eq!(ns.len(), 2);
        for v in ns {
            for row in &m {
                let dot: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (s, b, r2) = linear_fit(&x, &y);
        assert!((s - 2.0).abs() < 1e-14 && (b + 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
