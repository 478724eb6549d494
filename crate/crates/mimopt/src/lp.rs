//! Dense linear-program solver with dual recovery.
//!
//! Problems are `min c'x  s.t.  A x <= b, x >= 0` with dense `A`. The solver
//! is a two-phase primal simplex on the slack form `A x + s = b`:
//!
//! * rows with negative rhs are negated and given an artificial variable;
//!   phase 1 minimizes the artificial sum and certifies infeasibility when
//!   its optimum exceeds [`TOL_INFEASIBLE`] (on equilibrated data);
//! * basic artificials are pivoted out (rows that cannot be cleared are
//!   redundant and dropped) before phase 2 minimizes the true objective.
//!
//! Pivoting is deterministic: Dantzig pricing (most negative reduced cost,
//! then lowest column index) with a ratio test that prefers, among tied rows,
//! first rows still holding an artificial, then the largest pivot magnitude,
//! then the lowest basis index. After [`BLAND_AFTER`] times (m+n) iterations
//! pricing permanently switches to Bland's rule (lowest eligible index),
//! which guarantees termination; a hard iteration cap turns any remaining
//! stall into an error instead of a hang.
//!
//! The tableau is used only to *choose* the final basis: the reported `x` and
//! duals `y` are recomputed from the original (unscaled) data by LU-solving
//! `B x_B = b` and `B' y = c_B` with one step of iterative refinement, so
//! accumulated pivot roundoff never reaches the results. Row/column
//! equilibration conditions the pivoting itself.
//!
//! Dual convention: the dual of `min {c'x : Ax <= b, x >= 0}` is taken as
//! `max {b'y : A'y <= c, y <= 0}`, so reported duals are nonpositive and
//! `-y_i` is the conventional nonnegative multiplier of row i. Every optimal
//! solve is post-validated (primal/dual feasibility, complementary
//! slackness, duality gap) and a violation is an error, never a silent
//! return.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Primal feasibility tolerance: max(Ax - b) <= TOL_PRIMAL * (1 + max|b|).
pub const TOL_PRIMAL: f64 = 1e-9;
/// Dual feasibility tolerance: max(A'y - c) <= TOL_DUAL * (1 + max|c|).
pub const TOL_DUAL: f64 = 1e-9;
/// Complementary slackness tolerance, scaled by (1 + |objective|).
pub const TOL_COMP: f64 = 1e-8;
/// Duality gap tolerance: |c'x - b'y| <= TOL_GAP * (1 + |c'x|).
pub const TOL_GAP: f64 = 1e-8;
/// Phase-1 optimum above this (equilibrated scale) certifies infeasibility.
pub const TOL_INFEASIBLE: f64 = 1e-9;

const TOL_REDUCED_COST: f64 = 1e-11;
const TOL_PIVOT: f64 = 1e-9;
const TOL_DRIVE_OUT: f64 = 1e-7;
const BLAND_AFTER: usize = 10;
const ITER_CAP_FACTOR: usize = 200;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed program: {0}")]
    BadProgram(String),

    #[error("iteration limit reached after {0} pivots")]
    IterationLimit(usize),

    #[error("numerically singular basis at recovery: {0}")]
    SingularBasis(String),

    #[error("optimality certificate violated: {0}")]
    Certificate(String),
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearProgram {
    pub fn new(c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, LpError> {
        if a.nrows() != b.len() || a.ncols() != c.len() {
            return Err(LpError::BadProgram(format!(
                "dimension mismatch: A is {}x{}, b has {}, c has {}",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len()
            )));
        }
        if c.iter().chain(a.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(LpError::BadProgram("non-finite entry".into()));
        }
        Ok(LinearProgram { c, a, b })
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_vars(&self) -> usize {
        self.a.ncols()
    }

    /// Plain-text dump for cross-checking against external solvers.
    /// Line 1: `min c_1 ... c_n`; then one `a_1 ... a_n <= b_i` line per row.
    pub fn dump_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("min");
        for v in self.c.iter() {
            write!(out, " {v:.17e}").unwrap();
        }
        out.push('\n');
        for i in 0..self.num_rows() {
            let mut line = String::new();
            for j in 0..self.num_vars() {
                write!(line, "{}{:.17e}", if j == 0 { "" } else { " " }, self.a[(i, j)]).unwrap();
            }
            write!(line, " <= {:.17e}", self.b[i]).unwrap();
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Post-solve residuals, all on the original problem data.
#[derive(Debug, Clone, Copy, Default)]
pub struct LpCertificate {
    /// max(0, max_i (Ax - b)_i), absolute.
    pub primal_residual: f64,
    /// max(0, max_j (A'y - c)_j), absolute.
    pub dual_residual: f64,
    /// max over |y_i (b - Ax)_i| and |x_j (c - A'y)_j|.
    pub comp_slackness: f64,
    /// |c'x - b'y|.
    pub duality_gap: f64,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal solution (empty unless optimal).
    pub x: DVector<f64>,
    /// c'x (NaN unless optimal).
    pub objective_value: f64,
    /// Row duals, y <= 0 convention (empty unless optimal).
    pub duals: DVector<f64>,
    pub certificate: LpCertificate,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn non_optimal(status: LpStatus) -> Self {
        LpSolution {
            status,
            x: DVector::zeros(0),
            objective_value: f64::NAN,
            duals: DVector::zeros(0),
            certificate: LpCertificate::default(),
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    if lp.num_vars() == 0 {
        return Err(LpError::BadProgram("no variables".into()));
    }

    let (a_s, b_s, c_s) = equilibrate(lp);
    let mut spx = Simplex::new(&a_s, &b_s, &c_s);

    if spx.n_art > 0 {
        match spx.run_phase(Phase::One)? {
            PhaseOutcome::Optimal => {}
            PhaseOutcome::Unbounded => {
                return Err(LpError::Certificate("phase-1 objective unbounded below".into()))
            }
        }
        let z1 = -spx.d1[spx.rhs_col()];
        let b_norm = b_s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if z1 > TOL_INFEASIBLE * (1.0 + b_norm) {
            return Ok(LpSolution::non_optimal(LpStatus::Infeasible));
        }
        spx.drive_out_artificials();
    }

    match spx.run_phase(Phase::Two)? {
        PhaseOutcome::Optimal => {}
        PhaseOutcome::Unbounded => return Ok(LpSolution::non_optimal(LpStatus::Unbounded)),
    }

    let (x, y) = recover(lp, &spx)?;
    let objective_value = lp.c.dot(&x);
    let certificate = certify(lp, &x, &y, objective_value)?;
    Ok(LpSolution { status: LpStatus::Optimal, x, objective_value, duals: y, certificate })
}

/// One pass of row max-scaling followed by column max-scaling, plus unit
/// objective scale. Only pivoting sees scaled data; results are recomputed
/// on the originals.
fn equilibrate(lp: &LinearProgram) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let (m, n) = (lp.num_rows(), lp.num_vars());
    let mut a = lp.a.clone();
    let mut b = lp.b.clone();
    let mut c = lp.c.clone();
    for i in 0..m {
        let mx = (0..n).fold(0.0f64, |acc, j| acc.max(a[(i, j)].abs()));
        if mx > 0.0 {
            for j in 0..n {
                a[(i, j)] /= mx;
            }
            b[i] /= mx;
        }
    }
    for j in 0..n {
        let mx = (0..m).fold(0.0f64, |acc, i| acc.max(a[(i, j)].abs()));
        if mx > 0.0 {
            for i in 0..m {
                a[(i, j)] /= mx;
            }
            c[j] /= mx;
        }
    }
    let cmx = c.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if cmx > 0.0 {
        c /= cmx;
    }
    (a, b, c)
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    One,
    Two,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

struct Simplex {
    m: usize,
    n: usize,
    n_art: usize,
    /// Column layout: [0, n) structural, [n, n+m) slacks, then artificials,
    /// rhs last.
    t: Vec<Vec<f64>>,
    /// Phase-1 and phase-2 reduced-cost rows (last entry = -objective).
    d1: Vec<f64>,
    d2: Vec<f64>,
    basis: Vec<usize>,
    active: Vec<bool>,
    /// Columns banned from entering (slacks of dropped rows).
    banned: Vec<bool>,
    iters: usize,
}

impl Simplex {
    fn new(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Self {
        let (m, n) = (a.nrows(), a.ncols());
        let neg_rows: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
        let n_art = neg_rows.len();
        let ncols = n + m + n_art;
        let rhs = ncols;

        let mut t = vec![vec![0.0; ncols + 1]; m];
        let mut basis = vec![0usize; m];
        let mut art = n + m;
        for i in 0..m {
            let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                t[i][j] = flip * a[(i, j)];
            }
            t[i][n + i] = flip;
            t[i][rhs] = flip * b[i];
            if flip < 0.0 {
                t[i][art] = 1.0;
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = n + i;
            }
        }

        // Phase-1 reduced costs: cost 1 on artificials, so subtract every
        // artificial-basic row. Phase-2 reduced costs start at c (slack and
        // artificial costs are zero).
        let mut d1 = vec![0.0; ncols + 1];
        for &i in &neg_rows {
            for j in 0..=ncols {
                d1[j] -= t[i][j];
            }
        }
        for &i in &neg_rows {
            d1[basis[i]] = 0.0;
        }
        let mut d2 = vec![0.0; ncols + 1];
        d2[..n].copy_from_slice(c.as_slice());

        Simplex {
            m,
            n,
            n_art,
            t,
            d1,
            d2,
            basis,
            active: vec![true; m],
            banned: vec![false; ncols],
            iters: 0,
        }
    }

    fn rhs_col(&self) -> usize {
        self.n + self.m + self.n_art
    }

    fn enterable(&self, j: usize) -> bool {
        j < self.n + self.m && !self.banned[j]
    }

    fn run_phase(&mut self, phase: Phase) -> Result<PhaseOutcome, LpError> {
        let ncols = self.n + self.m + if phase == Phase::One { self.n_art } else { 0 };
        let cap = ITER_CAP_FACTOR * (self.m + self.n) + 2000;
        let bland_from = BLAND_AFTER * (self.m + self.n) + 50;
        loop {
            let d: &Vec<f64> = match phase {
                Phase::One => &self.d1,
                Phase::Two => &self.d2,
            };
            // Entering column. Artificials never enter: a nonbasic artificial
            // stays out (its phase-1 reduced cost only matters while basic).
            let mut enter: Option<usize> = None;
            if self.iters < bland_from {
                let mut best = -TOL_REDUCED_COST;
                for (j, &dj) in d.iter().enumerate().take(ncols) {
                    if self.enterable(j) && dj < best {
                        best = dj;
                        enter = Some(j);
                    }
                }
            } else {
                for (j, &dj) in d.iter().enumerate().take(ncols) {
                    if self.enterable(j) && dj < -TOL_REDUCED_COST {
                        enter = Some(j);
                        break;
                    }
                }
            }
            let Some(col) = enter else { return Ok(PhaseOutcome::Optimal) };

            let Some(row) = self.ratio_test(col) else {
                return match phase {
                    Phase::One => Err(LpError::Certificate(
                        "phase-1 ratio test failed on a bounded objective".into(),
                    )),
                    Phase::Two => Ok(PhaseOutcome::Unbounded),
                };
            };

            self.pivot(row, col);
            self.iters += 1;
            if self.iters > cap {
                return Err(LpError::IterationLimit(self.iters));
            }
        }
    }

    /// Min-ratio rows, then prefer artificial-basic rows, then the largest
    /// pivot, then the smallest basis index.
    fn ratio_test(&self, col: usize) -> Option<usize> {
        let rhs = self.rhs_col();
        let mut theta = f64::INFINITY;
        for i in 0..self.m {
            if self.active[i] && self.t[i][col] > TOL_PIVOT {
                theta = theta.min(self.t[i][rhs] / self.t[i][col]);
            }
        }
        if !theta.is_finite() {
            return None;
        }
        let slack = 1e-9 * (1.0 + theta.abs()) + 1e-12;
        let art_start = self.n + self.m;
        let mut best: Option<usize> = None;
        for i in 0..self.m {
            if !self.active[i] || self.t[i][col] <= TOL_PIVOT {
                continue;
            }
            if self.t[i][rhs] / self.t[i][col] > theta + slack {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(p) => {
                    let (ap, ai) =
                        (self.basis[p] >= art_start, self.basis[i] >= art_start);
                    if ai != ap {
                        Some(if ai { i } else { p })
                    } else if (self.t[i][col].abs() - self.t[p][col].abs()).abs() > 1e-12 {
                        Some(if self.t[i][col].abs() > self.t[p][col].abs() { i } else { p })
                    } else {
                        Some(if self.basis[i] < self.basis[p] { i } else { p })
                    }
                }
            };
        }
        best
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let rhs = self.rhs_col();
        let piv = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= piv;
        }
        let prow = self.t[row].clone();
        for i in 0..self.m {
            if i != row && self.active[i] {
                let f = self.t[i][col];
                if f != 0.0 {
                    for (j, &pj) in prow.iter().enumerate().take(rhs + 1) {
                        self.t[i][j] -= f * pj;
                    }
                    self.t[i][col] = 0.0;
                }
            }
        }
        for d in [&mut self.d1, &mut self.d2] {
            let f = d[col];
            if f != 0.0 {
                for j in 0..=rhs {
                    d[j] -= f * prow[j];
                }
                d[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Pivot leftover basic artificials onto structural/slack columns; rows
    /// with no eligible pivot are redundant and get dropped (their slack is
    /// banned from entering afterwards, since the row no longer constrains).
    fn drive_out_artificials(&mut self) {
        let art_start = self.n + self.m;
        for row in 0..self.m {
            if self.basis[row] < art_start {
                continue;
            }
            let mut best: Option<usize> = None;
            for j in 0..art_start {
                if self.banned[j] || self.basis.contains(&j) {
                    continue;
                }
                let mag = self.t[row][j].abs();
                if mag > TOL_DRIVE_OUT
                    && best.is_none_or(|b| mag > self.t[row][b].abs())
                {
                    best = Some(j);
                }
            }
            match best {
                Some(j) => self.pivot(row, j),
                None => {
                    self.active[row] = false;
                    self.banned[self.n + row] = true;
                }
            }
        }
    }
}

/// Re-derive x and y from the final basis on the original data via LU with
/// one refinement step.
fn recover(lp: &LinearProgram, spx: &Simplex) -> Result<(DVector<f64>, DVector<f64>), LpError> {
    let n = lp.num_vars();
    let rows: Vec<usize> = (0..spx.m).filter(|&i| spx.active[i]).collect();
    let cols: Vec<usize> = rows.iter().map(|&i| spx.basis[i]).collect();
    let k = rows.len();

    let basis_col = |j: usize, out: &mut DVector<f64>| {
        for (p, &i) in rows.iter().enumerate() {
            out[p] = if j < n { lp.a[(i, j)] } else if j - n == i { 1.0 } else { 0.0 };
        }
    };

    let mut bmat = DMatrix::zeros(k, k);
    let mut col = DVector::zeros(k);
    for (q, &j) in cols.iter().enumerate() {
        basis_col(j, &mut col);
        bmat.set_column(q, &col);
    }
    let lu = bmat.clone().lu();
    let b_act = DVector::from_fn(k, |p, _| lp.b[rows[p]]);
    let mut xb = lu
        .solve(&b_act)
        .ok_or_else(|| LpError::SingularBasis(format!("primal basis of size {k}")))?;
    if let Some(dx) = lu.solve(&(&b_act - &bmat * &xb)) {
        xb += dx;
    }

    let c_b = DVector::from_fn(k, |q, _| if cols[q] < n { lp.c[cols[q]] } else { 0.0 });
    let lut = bmat.transpose().lu();
    let mut y_act = lut
        .solve(&c_b)
        .ok_or_else(|| LpError::SingularBasis(format!("dual basis of size {k}")))?;
    if let Some(dy) = lut.solve(&(&c_b - bmat.transpose() * &y_act)) {
        y_act += dy;
    }

    let mut x = DVector::zeros(n);
    for (q, &j) in cols.iter().enumerate() {
        if j < n {
            x[j] = xb[q];
        }
    }
    let xmax = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for v in x.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-11 * xmax {
                return Err(LpError::Certificate(format!("negative basic variable {v}")));
            }
            *v = 0.0;
        }
    }

    let mut y = DVector::zeros(spx.m);
    for (p, &i) in rows.iter().enumerate() {
        y[i] = y_act[p];
    }
    let ymax = y.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for v in y.iter_mut() {
        if *v > 0.0 {
            if *v > 1e-11 * ymax {
                return Err(LpError::Certificate(format!("positive dual {v}")));
            }
            *v = 0.0;
        }
    }

    Ok((x, y))
}

fn certify(
    lp: &LinearProgram,
    x: &DVector<f64>,
    y: &DVector<f64>,
    objective: f64,
) -> Result<LpCertificate, LpError> {
    let slack = &lp.b - &lp.a * x;
    let rc = &lp.c - lp.a.transpose() * y;

    let primal_residual = slack.iter().fold(0.0f64, |acc, v| acc.max(-v));
    let dual_residual = rc.iter().fold(0.0f64, |acc, v| acc.max(-v));
    let comp_y = y.iter().zip(slack.iter()).fold(0.0f64, |acc, (yi, si)| acc.max((yi * si).abs()));
    let comp_x = x.iter().zip(rc.iter()).fold(0.0f64, |acc, (xj, rj)| acc.max((xj * rj).abs()));
    let comp_slackness = comp_x.max(comp_y);
    let duality_gap = (objective - lp.b.dot(y)).abs();

    let cert = LpCertificate { primal_residual, dual_residual, comp_slackness, duality_gap };
    let b_norm = lp.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let c_norm = lp.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let obj_scale = 1.0 + objective.abs();
    if primal_residual > TOL_PRIMAL * (1.0 + b_norm) {
        return Err(LpError::Certificate(format!(
            "primal residual {primal_residual:.3e} over {:.3e}",
            TOL_PRIMAL * (1.0 + b_norm)
        )));
    }
    if dual_residual > TOL_DUAL * (1.0 + c_norm) {
        return Err(LpError::Certificate(format!(
            "dual residual {dual_residual:.3e} over {:.3e}",
            TOL_DUAL * (1.0 + c_norm)
        )));
    }
    if comp_slackness > TOL_COMP * obj_scale {
        return Err(LpError::Certificate(format!(
            "complementary slackness {comp_slackness:.3e} over {:.3e}",
            TOL_COMP * obj_scale
        )));
    }
    if duality_gap > TOL_GAP * obj_scale {
        return Err(LpError::Certificate(format!(
            "duality gap {duality_gap:.3e} over {:.3e}",
            TOL_GAP * obj_scale
        )));
    }
    Ok(cert)
}

/// Brute-force reference for small programs: enumerates basic solutions of
/// `[A | I]` by depth-first Gaussian elimination (elimination work shared
/// across the combination tree) and returns the best feasible vertex.
/// Exponential; intended as a test oracle up to roughly 10x20.
pub fn brute_force_reference(lp: &LinearProgram, tol: f64) -> Option<(f64, DVector<f64>)> {
    let (m, n) = (lp.num_rows(), lp.num_vars());
    let mut cost_ext = vec![0.0; n + m];
    cost_ext[..n].copy_from_slice(lp.c.as_slice());

    struct Dfs<'a> {
        m: usize,
        cost: &'a [f64],
        tol: f64,
        best: Option<(f64, Vec<usize>, Vec<f64>)>,
        chosen: Vec<usize>,
        /// Reduced pivot column per level.
        pivcols: Vec<Vec<f64>>,
    }

    impl Dfs<'_> {
        /// `cands`: (column index, reduced column) still available;
        /// `rhs`: reduced right-hand side; `depth`: pivots done so far.
        fn go(&mut self, cands: &[(usize, Vec<f64>)], rhs: &[f64], depth: usize) {
            if depth == self.m {
                self.finish(rhs);
                return;
            }
            for (pos, (j, col)) in cands.iter().enumerate() {
                if cands.len() - pos < self.m - depth {
                    break;
                }
                // The pivot must come from the untouched rows depth..m; take
                // the largest for stability, skip dependent columns.
                let (mut prow, mut pmag) = (depth, col[depth].abs());
                for (r, &c) in col.iter().enumerate().take(self.m).skip(depth + 1) {
                    if c.abs() > pmag {
                        prow = r;
                        pmag = c.abs();
                    }
                }
                if pmag < 1e-11 {
                    continue;
                }
                let mut piv = col.clone();
                piv.swap(depth, prow);
                let mut new_rhs = rhs.to_vec();
                new_rhs.swap(depth, prow);
                for r in depth + 1..self.m {
                    new_rhs[r] -= piv[r] / piv[depth] * new_rhs[depth];
                }
                let new_cands: Vec<(usize, Vec<f64>)> = cands[pos + 1..]
                    .iter()
                    .map(|(jj, cc)| {
                        let mut v = cc.clone();
                        v.swap(depth, prow);
                        for r in depth + 1..self.m {
                            v[r] -= piv[r] / piv[depth] * v[depth];
                        }
                        (*jj, v)
                    })
                    .collect();
                self.chosen.push(*j);
                self.pivcols.push(piv);
                self.go(&new_cands, &new_rhs, depth + 1);
                self.chosen.pop();
                self.pivcols.pop();
            }
        }

        fn finish(&mut self, rhs: &[f64]) {
            let m = self.m;
            let mut xb = vec![0.0; m];
            for r in (0..m).rev() {
                let mut v = rhs[r];
                for (pc, &x) in self.pivcols[r + 1..m].iter().zip(&xb[r + 1..m]) {
                    v -= pc[r] * x;
                }
                xb[r] = v / self.pivcols[r][r];
            }
            if xb.iter().any(|&v| v < -self.tol || !v.is_finite()) {
                return;
            }
            let obj: f64 =
                self.chosen.iter().zip(&xb).map(|(&j, &v)| self.cost[j] * v).sum();
            if self.best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
                self.best = Some((obj, self.chosen.clone(), xb));
            }
        }
    }

    let cands: Vec<(usize, Vec<f64>)> = (0..n + m)
        .map(|j| {
            let col = (0..m)
                .map(|i| if j < n { lp.a[(i, j)] } else if j - n == i { 1.0 } else { 0.0 })
                .collect();
            (j, col)
        })
        .collect();
    let rhs: Vec<f64> = lp.b.iter().copied().collect();
    let mut dfs = Dfs {
        m,
        cost: &cost_ext,
        tol,
        best: None,
        chosen: Vec::with_capacity(m),
        pivcols: Vec::with_capacity(m),
    };
    dfs.go(&cands, &rhs, 0);

    dfs.best.map(|(obj, chosen, xb)| {
        let mut x = DVector::zeros(n);
        for (&j, &v) in chosen.iter().zip(&xb) {
            if j < n {
                x[j] = v.max(0.0);
            }
        }
        (obj, x)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn lp(c: &[f64], a: &[&[f64]], b: &[f64]) -> LinearProgram {
        let m = a.len();
        let n = c.len();
        LinearProgram::new(
            DVector::from_row_slice(c),
            DMatrix::from_fn(m, n, |i, j| a[i][j]),
            DVector::from_row_slice(b),
        )
        .unwrap()
    }

    #[test]
    fn one_variable_bound() {
        // min x s.t. x >= 3.
        let p = lp(&[1.0], &[&[-1.0]], &[-3.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_relative_eq!(s.x[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(s.objective_value, 3.0, max_relative = 1e-12);
        assert_relative_eq!(s.duals[0], -1.0, max_relative = 1e-12);
    }

    #[test]
    fn infeasible_pair() {
        let p = lp(&[1.0], &[&[1.0], &[-1.0]], &[1.0, -2.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction() {
        // min -x with only -x <= 0.
        let p = lp(&[-1.0], &[&[-1.0]], &[0.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn forced_equality_degenerate() {
        // x1 + x2 = 1 encoded as a <=, >= pair; min x1 + 2 x2 -> (1, 0).
        let p = lp(&[1.0, 2.0], &[&[1.0, 1.0], &[-1.0, -1.0]], &[1.0, -1.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_relative_eq!(s.objective_value, 1.0, max_relative = 1e-10);
        assert_relative_eq!(s.x[0], 1.0, max_relative = 1e-10);
    }

    #[test]
    fn redundant_duplicate_rows() {
        let p = lp(
            &[1.0, 1.0],
            &[&[-1.0, -1.0], &[-1.0, -1.0], &[-2.0, -2.0]],
            &[-1.0, -1.0, -2.0],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_relative_eq!(s.objective_value, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn deterministic_resolve() {
        let p = lp(
            &[3.0, 1.0, 4.0],
            &[&[-1.0, -2.0, 0.5], &[2.0, -1.0, -1.0], &[-1.0, 0.0, -1.0]],
            &[-4.0, -1.0, -2.0],
        );
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.duals, b.duals);
    }

    #[test]
    fn badly_scaled_rows_still_certify() {
        // Rows spanning ~12 orders of magnitude, like QoS rows in watts.
        let p = lp(
            &[1.0, 1.0],
            &[&[-2e-9, 1e-10], &[1e-10, -3e-9], &[1.0, 1.0]],
            &[-2.5e-13, -2.5e-13, 40.0],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.x.iter().all(|&v| v >= 0.0));
        // Certificates were already enforced inside solve_lp; sanity-check scale.
        assert!(s.objective_value > 0.0 && s.objective_value < 1e-2);
    }

    fn random_feasible_lp(rng: &mut StdRng, m: usize, n: usize) -> LinearProgram {
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let margin = DVector::from_fn(m, |_, _| rng.random_range(0.0..0.5));
        let b = &a * &x0 + margin;
        let c = DVector::from_fn(n, |_, _| rng.random_range(0.1..2.0));
        LinearProgram::new(c, a, b).unwrap()
    }

    #[test]
    fn random_programs_match_brute_force() {
        let mut rng = StdRng::seed_from_u64(2024);
        for case in 0..12 {
            let p = random_feasible_lp(&mut rng, 5, 8);
            let s = solve_lp(&p).unwrap();
            assert_eq!(s.status, LpStatus::Optimal, "case {case}");
            let (obj, _) = brute_force_reference(&p, 1e-9).expect("oracle found no vertex");
            assert!(
                (s.objective_value - obj).abs() <= 1e-8 * (1.0 + obj.abs()),
                "case {case}: simplex {} vs oracle {obj}",
                s.objective_value
            );
        }
    }

    #[test]
    fn negative_rhs_random_programs() {
        // Force phase 1: shift half the rows to negative rhs while keeping
        // feasibility (x0 interior).
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..12 {
            let m = 6;
            let n = 9;
            let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let x0 = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
            let b = &a * &x0
                + DVector::from_fn(m, |_, _| rng.random_range(0.05..0.3));
            let c = DVector::from_fn(n, |_, _| rng.random_range(0.1..2.0));
            let p = LinearProgram::new(c, a, b).unwrap();
            let s = solve_lp(&p).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            let (obj, _) = brute_force_reference(&p, 1e-9).unwrap();
            assert!((s.objective_value - obj).abs() <= 1e-8 * (1.0 + obj.abs()));
        }
    }

    #[test]
    fn dump_text_round_readable() {
        let p = lp(&[1.0, 2.0], &[&[1.0, -1.0]], &[0.5]);
        let txt = p.dump_text();
        let mut lines = txt.lines();
        assert!(lines.next().unwrap().starts_with("min 1"));
        assert!(lines.next().unwrap().contains("<="));
    }
}
