//! Brute-force references for small problems.
//!
//! Everything here is deliberately naive: grid scans, exhaustive vertex
//! enumeration, central differences. The crate has no dependency on the
//! solver crate so that a bug there cannot leak into the expected values
//! the tests compare against.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    TooLarge { what: &'static str, size: usize, cap: usize },
    BadGrid(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::TooLarge { what, size, cap } => {
                write!(f, "{what} size {size} exceeds brute-force cap {cap}")
            }
            OracleError::BadGrid(msg) => write!(f, "bad grid: {msg}"),
        }
    }
}

impl std::error::Error for OracleError {}

/// A regular grid over a box. For simplex scans only `points_per_dim` is
/// used; `lo`/`hi` describe the box for general scans.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub dims: usize,
    pub lo: f64,
    pub hi: f64,
    pub points_per_dim: usize,
}

impl GridSpec {
    pub fn simplex(dims: usize, points_per_dim: usize) -> Self {
        GridSpec { dims, lo: 0.0, hi: 1.0, points_per_dim }
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.points_per_dim - 1) as f64
    }

    fn validate(&self) -> Result<(), OracleError> {
        if self.points_per_dim < 3 {
            return Err(OracleError::BadGrid(format!(
                "points_per_dim = {} < 3",
                self.points_per_dim
            )));
        }
        if !(self.hi > self.lo) {
            return Err(OracleError::BadGrid("empty interval".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GridMin {
    pub lambda: Vec<f64>,
    pub value: f64,
    /// Upper bound on `value - true_min` implied by the grid resolution.
    pub value_error_bound: f64,
    /// Max distance from the true minimizer to the nearest grid point.
    pub point_error_bound: f64,
}

fn quad(m: &[Vec<f64>], d: &[f64], lam: &[f64]) -> f64 {
    let mut v = 0.0;
    for i in 0..lam.len() {
        let mut row = 0.0;
        for j in 0..lam.len() {
            row += m[i][j] * lam[j];
        }
        v += 0.5 * lam[i] * row + d[i] * lam[i];
    }
    v
}

/// Minimizes `½λᵀMλ + dᵀλ` over the unit simplex by scanning a regular
/// lattice. At most three simplex dimensions.
pub fn brute_simplex_qp(m: &[Vec<f64>], d: &[f64], grid: &GridSpec) -> Result<GridMin, OracleError> {
    grid.validate()?;
    let k = d.len();
    if k > 3 {
        return Err(OracleError::TooLarge { what: "simplex", size: k, cap: 3 });
    }
    if k == 0 || m.len() != k || m.iter().any(|r| r.len() != k) || grid.dims != k {
        return Err(OracleError::BadGrid("dimension mismatch".into()));
    }
    let steps = grid.points_per_dim - 1;
    let h = 1.0 / steps as f64;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |lam: Vec<f64>| {
        let val = quad(m, d, &lam);
        if best.as_ref().map_or(true, |(_, b)| val < *b) {
            best = Some((lam, val));
        }
    };
    match k {
        1 => consider(vec![1.0]),
        2 => {
            for i in 0..=steps {
                let a = i as f64 * h;
                consider(vec![a, 1.0 - a]);
            }
        }
        _ => {
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let a = i as f64 * h;
                    let b = j as f64 * h;
                    consider(vec![a, b, (1.0 - a - b).max(0.0)]);
                }
            }
        }
    }
    let (lambda, value) = best.expect("grid is nonempty");

    // Gradient bound over the simplex and curvature bound for the error estimate.
    let m_fro: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let d_norm: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dist = h * (k as f64).sqrt();
    Ok(GridMin {
        lambda,
        value,
        value_error_bound: (m_fro + d_norm) * dist + 0.5 * m_fro * dist * dist,
        point_error_bound: dist,
    })
}

/// Central finite differences, componentwise.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], h: f64) -> Vec<f64> {
    let mut zp = z.to_vec();
    (0..z.len())
        .map(|i| {
            let orig = zp[i];
            zp[i] = orig + h;
            let fp = f(&zp);
            zp[i] = orig - h;
            let fm = f(&zp);
            zp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Euclidean projection onto the unit simplex (sort-based).
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|yi| (yi - theta).max(0.0)).collect()
}

/// Projected gradient on `½λᵀMλ + dᵀλ` over the simplex with step `1/L`,
/// `L` the Frobenius norm of `M`. Slow but simple.
pub fn projected_gradient_simplex_qp(m: &[Vec<f64>], d: &[f64], iters: usize) -> (Vec<f64>, f64) {
    let k = d.len();
    let l: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let mut lam = vec![1.0 / k as f64; k];
    for _ in 0..iters {
        let grad: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| m[i][j] * lam[j]).sum::<f64>() + d[i])
            .collect();
        let y: Vec<f64> = lam.iter().zip(&grad).map(|(l0, g)| l0 - g / l).collect();
        lam = project_simplex(&y);
    }
    let val = quad(m, d, &lam);
    (lam, val)
}

/// Max of `vᵀx + b` over an explicit list, scanned in order.
pub fn max_affine(cuts: &[(Vec<f64>, f64)], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, (v, b)) in cuts.iter().enumerate() {
        let val = v.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b;
        if val > best.1 {
            best = (i, val);
        }
    }
    best
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-11 {
            return None;
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    rhs[r] -= f * rhs[col];
                }
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / a[i][i]).collect())
}

fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < total - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// All vertices of `{z : Az ≤ b, lower ≤ z ≤ upper}` by trying every set of
/// `p` tight constraints. At most eight variables.
pub fn enumerate_polytope_vertices(
    a: &[Vec<f64>],
    b: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<Vec<Vec<f64>>, OracleError> {
    let p = lower.len();
    if p > 8 {
        return Err(OracleError::TooLarge { what: "polytope", size: p, cap: 8 });
    }
    // Every constraint as (row, rhs) with row·z ≤ rhs.
    let mut cons: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().cloned()).collect();
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        cons.push((e.clone(), upper[j]));
        e[j] = -1.0;
        cons.push((e, -lower[j]));
    }
    let total = cons.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    if p == 0 || total < p {
        return Ok(out);
    }
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        let mat: Vec<Vec<f64>> = idx.iter().map(|&i| cons[i].0.clone()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| cons[i].1).collect();
        if let Some(z) = solve_dense(mat, rhs) {
            let feasible = cons.iter().all(|(row, r)| {
                row.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>() <= r + 1e-9
            });
            let dup = out
                .iter()
                .any(|v| v.iter().zip(&z).all(|(x, y)| (x - y).abs() <= 1e-9));
            if feasible && !dup {
                out.push(z);
            }
        }
        if !next_combination(&mut idx, total) {
            break;
        }
    }
    Ok(out)
}

/// Max of `cᵀz` over the enumerated vertices; `None` when the polytope is empty.
pub fn lp_by_enumeration(
    c: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<Option<(Vec<f64>, f64)>, OracleError> {
    let verts = enumerate_polytope_vertices(a, b, lower, upper)?;
    Ok(verts
        .into_iter()
        .map(|z| {
            let v = c.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>();
            (z, v)
        })
        .fold(None, |acc: Option<(Vec<f64>, f64)>, cur| match acc {
            Some(best) if best.1 >= cur.1 => Some(best),
            _ => Some(cur),
        }))
}
