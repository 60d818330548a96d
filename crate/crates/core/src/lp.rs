//! Dense bounded-variable primal simplex.
//!
//! Solves `max cᵀz  s.t.  Az ≤ b_up,  lower ≤ z ≤ upper` with an explicit
//! basis inverse (refactored every [`REFACTOR_EVERY`] pivots), a two-phase
//! start using artificials only on rows the initial point violates.
//! Dantzig pricing; after [`DEGENERATE_RUN`] consecutive degenerate pivots
//! it falls back to Bland's rule until progress resumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REFACTOR_EVERY: usize = 50;
const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;
const DEGENERATE_RUN: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub c: Vec<f64>,
    /// Row-major `m × p`.
    pub a: Vec<Vec<f64>>,
    pub b_up: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub z: Vec<f64>,
    pub value: f64,
    /// Basic variable per row. Indices `< p` are structural, `p..p+m` slacks,
    /// and larger ones artificials left basic on redundant rows.
    pub basis: Vec<usize>,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.c.len();
        if self.lower.len() != p || self.upper.len() != p {
            return Err(Error::Dimension("bounds length differs from objective length".into()));
        }
        if self.b_up.len() != self.a.len() || self.a.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("constraint matrix shape mismatch".into()));
        }
        let finite = self
            .c
            .iter()
            .chain(&self.b_up)
            .chain(&self.lower)
            .chain(&self.upper)
            .chain(self.a.iter().flatten())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Invalid("LP data must be finite".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u) {
            return Err(Error::Invalid("lower bound exceeds upper bound".into()));
        }
        Ok(())
    }
}

struct Simplex<'a> {
    prob: &'a LpProblem,
    /// `A` column-major.
    cols: Vec<f64>,
    p: usize,
    m: usize,
    /// Row index of each artificial variable.
    art_rows: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    /// `basic_row[j]` is the row where `j` is basic.
    basic_row: Vec<Option<usize>>,
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    total_pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl<'a> Simplex<'a> {
    fn nvars(&self) -> usize {
        self.p + self.m + self.art_rows.len()
    }

    /// Column `j` of `[A I -E]` as a dense vector.
    fn column(&self, j: usize) -> Vec<f64> {
        let mut col = vec![0.0; self.m];
        self.add_column(j, 1.0, &mut col);
        col
    }

    fn add_column(&self, j: usize, scale: f64, out: &mut [f64]) {
        if j < self.p {
            for (o, a) in out.iter_mut().zip(&self.cols[j * self.m..(j + 1) * self.m]) {
                *o += scale * a;
            }
        } else if j < self.p + self.m {
            out[j - self.p] += scale;
        } else {
            out[self.art_rows[j - self.p - self.m]] -= scale;
        }
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.p {
            self.cols[j * self.m..(j + 1) * self.m].iter().zip(y).map(|(a, yi)| a * yi).sum()
        } else if j < self.p + self.m {
            y[j - self.p]
        } else {
            -y[self.art_rows[j - self.p - self.m]]
        }
    }

    fn binv_mul(&self, v: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m).map(|i| (0..m).map(|k| self.binv[i * m + k] * v[k]).sum()).collect()
    }

    /// Recomputes the basis inverse by Gauss-Jordan and the basic values
    /// from the nonbasic ones.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        for (r, &j) in self.basis.iter().enumerate() {
            let col = self.column(j);
            for i in 0..m {
                bmat[i * m + r] = col[i];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&i, &k| bmat[i * m + col].abs().partial_cmp(&bmat[k * m + col].abs()).unwrap())
                .unwrap();
            if bmat[piv * m + col].abs() < 1e-13 {
                return Err(Error::Invalid("singular simplex basis".into()));
            }
            if piv != col {
                for k in 0..m {
                    bmat.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let d = bmat[col * m + col];
            for k in 0..m {
                bmat[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for r in 0..m {
                if r != col {
                    let f = bmat[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            bmat[r * m + k] -= f * bmat[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.pivots_since_refactor = 0;

        let mut rhs = self.prob.b_up.clone();
        for j in 0..self.nvars() {
            if self.basic_row[j].is_none() && self.x[j] != 0.0 {
                self.add_column(j, -self.x[j], &mut rhs);
            }
        }
        let xb = self.binv_mul(&rhs);
        for (r, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[r];
        }
        Ok(())
    }

    fn run(&mut self, cost: &[f64]) -> Result<Outcome> {
        let m = self.m;
        let mut degenerate_run = 0usize;
        loop {
            if self.total_pivots >= MAX_PIVOTS {
                return Err(Error::Invalid(format!("simplex exceeded {MAX_PIVOTS} pivots")));
            }
            let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
            let y: Vec<f64> = (0..m).map(|k| (0..m).map(|i| cb[i] * self.binv[i * m + k]).sum()).collect();

            let bland = degenerate_run >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = 0.0;
            for j in 0..self.nvars() {
                if self.basic_row[j].is_some() || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = cost[j] - self.col_dot(j, &y);
                let at_lower = self.x[j] <= self.lo[j];
                let cand = if d > COST_TOL && (at_lower || self.x[j] < self.hi[j]) {
                    Some(1.0)
                } else if d < -COST_TOL && !at_lower {
                    Some(-1.0)
                } else {
                    None
                };
                if let Some(dir) = cand {
                    if bland {
                        entering = Some((j, dir));
                        break;
                    }
                    if d.abs() > best {
                        best = d.abs();
                        entering = Some((j, dir));
                    }
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(Outcome::Optimal);
            };

            let alpha = self.binv_mul(&self.column(q));
            let mut step = self.hi[q] - self.lo[q];
            let mut leave: Option<(usize, f64)> = None;
            for (r, &j) in self.basis.iter().enumerate() {
                let rate = -dir * alpha[r];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let (limit, bound) = if rate < 0.0 {
                    ((self.x[j] - self.lo[j]) / -rate, self.lo[j])
                } else if self.hi[j].is_finite() {
                    ((self.hi[j] - self.x[j]) / rate, self.hi[j])
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = match leave {
                    None => limit < step,
                    Some((r0, _)) => {
                        limit < step - 1e-12 || (limit <= step + 1e-12 && j < self.basis[r0])
                    }
                };
                if better {
                    step = limit;
                    leave = Some((r, bound));
                }
            }
            if !step.is_finite() {
                return Ok(Outcome::Unbounded);
            }

            if step > 1e-12 {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
            self.x[q] += dir * step;
            for (r, &j) in self.basis.iter().enumerate() {
                self.x[j] -= dir * step * alpha[r];
            }
            match leave {
                None => {
                    // Bound flip; snap to the bound exactly.
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some((r, bound)) => {
                    let out = self.basis[r];
                    self.x[out] = bound;
                    self.basic_row[out] = None;
                    self.basic_row[q] = Some(r);
                    self.basis[r] = q;
                    let piv = alpha[r];
                    for k in 0..m {
                        self.binv[r * m + k] /= piv;
                    }
                    for i in 0..m {
                        if i != r && alpha[i] != 0.0 {
                            let f = alpha[i];
                            for k in 0..m {
                                self.binv[i * m + k] -= f * self.binv[r * m + k];
                            }
                        }
                    }
                    self.pivots_since_refactor += 1;
                    self.total_pivots += 1;
                    if self.pivots_since_refactor >= REFACTOR_EVERY {
                        self.refactor()?;
                    }
                }
            }
        }
    }
}

/// Solves the LP. Infeasible and unbounded problems are reported through
/// [`LpSolution::status`]; only malformed input is an error.
pub fn solve_lp(prob: &LpProblem) -> Result<LpSolution> {
    prob.validate()?;
    let p = prob.num_vars();
    let m = prob.num_rows();

    // Nonbasic structurals start at the bound favoured by the objective.
    let mut x0: Vec<f64> = (0..p)
        .map(|j| if prob.c[j] > 0.0 { prob.upper[j] } else { prob.lower[j] })
        .collect();
    let resid: Vec<f64> = (0..m)
        .map(|i| prob.b_up[i] - prob.a[i].iter().zip(&x0).map(|(a, z)| a * z).sum::<f64>())
        .collect();
    let art_rows: Vec<usize> = (0..m).filter(|&i| resid[i] < 0.0).collect();
    let nv = p + m + art_rows.len();

    let mut lo = prob.lower.clone();
    let mut hi = prob.upper.clone();
    lo.extend(std::iter::repeat(0.0).take(m + art_rows.len()));
    hi.extend(std::iter::repeat(f64::INFINITY).take(m + art_rows.len()));
    x0.extend(std::iter::repeat(0.0).take(m + art_rows.len()));

    let mut basis = vec![0; m];
    let mut basic_row = vec![None; nv];
    let mut art_of_row = vec![None; m];
    for (k, &i) in art_rows.iter().enumerate() {
        art_of_row[i] = Some(p + m + k);
    }
    for i in 0..m {
        let j = art_of_row[i].unwrap_or(p + i);
        basis[i] = j;
        basic_row[j] = Some(i);
    }

    let mut cols = vec![0.0; p * m];
    for (i, row) in prob.a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            cols[j * m + i] = *v;
        }
    }
    let mut s = Simplex {
        prob,
        cols,
        p,
        m,
        art_rows: art_rows.clone(),
        lo,
        hi,
        x: x0,
        basis,
        basic_row,
        binv: Vec::new(),
        pivots_since_refactor: 0,
        total_pivots: 0,
    };
    s.refactor()?;

    if !art_rows.is_empty() {
        let mut cost = vec![0.0; nv];
        for c in cost.iter_mut().skip(p + m) {
            *c = -1.0;
        }
        s.run(&cost)?;
        let infeas: f64 = (p + m..nv).map(|j| s.x[j].max(0.0)).sum();
        let scale = 1.0 + prob.b_up.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeas > FEAS_TOL * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                z: s.x[..p].to_vec(),
                value: f64::NAN,
                basis: s.basis.clone(),
            });
        }
        // Fix artificials at zero and pivot basic ones out where possible.
        for j in p + m..nv {
            s.hi[j] = 0.0;
            s.x[j] = 0.0;
        }
        for r in 0..m {
            let j = s.basis[r];
            if j < p + m {
                continue;
            }
            let row: Vec<f64> = s.binv[r * m..(r + 1) * m].to_vec();
            let candidate = (0..p + m).find(|&k| s.basic_row[k].is_none() && s.col_dot(k, &row).abs() > 1e-7);
            if let Some(k) = candidate {
                s.basic_row[j] = None;
                s.basic_row[k] = Some(r);
                s.basis[r] = k;
                s.refactor()?;
            }
        }
        s.refactor()?;
    }

    let mut cost = vec![0.0; nv];
    cost[..p].copy_from_slice(&prob.c);
    let outcome = s.run(&cost)?;
    let z = s.x[..p].to_vec();
    let value = prob.c.iter().zip(&z).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: match outcome {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Unbounded => LpStatus::Unbounded,
        },
        z,
        value,
        basis: s.basis,
    })
}

/// True iff the polytope `{Az ≤ b_up, lower ≤ z ≤ upper}` is nonempty.
pub fn feasibility_check(prob: &LpProblem) -> bool {
    let zero = LpProblem { c: vec![0.0; prob.num_vars()], ..prob.clone() };
    matches!(solve_lp(&zero), Ok(sol) if sol.status != LpStatus::Infeasible)
}
