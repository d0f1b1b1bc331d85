//! Exact rational linear programming.
//!
//! A dense two-phase tableau simplex over `BigRational` with Bland's rule, so
//! every feasibility question asked by the cone and transversality code is
//! decided exactly, and infeasibility comes with a Farkas certificate. Problem
//! sizes here are tiny (dimensions ≤ 16, ≤ 64 generators), which makes exact
//! arithmetic affordable and removes all tolerance tuning from the decision
//! procedures.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

/// Exact conversion; every finite f64 is a rational.
pub fn rat(x: f64) -> Rat {
    BigRational::from_float(x).expect("finite float required")
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    let num = r.numer();
    let den = r.denom();
    // Scale down so both parts fit in f64 without overflow.
    let bits = num.bits().max(den.bits());
    if bits <= 52 {
        to_f64_lossy(num) / to_f64_lossy(den)
    } else {
        let shift = bits - 52;
        let n = num >> shift;
        let d = den >> shift;
        if d.is_zero() {
            if num.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        } else {
            to_f64_lossy(&n) / to_f64_lossy(&d)
        }
    }
}

fn to_f64_lossy(i: &BigInt) -> f64 {
    let (sign, digits) = i.to_u64_digits();
    let mut v = 0.0;
    for d in digits.iter().rev() {
        v = v * 18446744073709551616.0 + *d as f64;
    }
    match sign {
        num_bigint::Sign::Minus => -v,
        _ => v,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rel {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<Rat>,
    pub rel: Rel,
    pub rhs: Rat,
}

impl Constraint {
    pub fn new(coeffs: Vec<Rat>, rel: Rel, rhs: Rat) -> Self {
        Constraint { coeffs, rel, rhs }
    }
}

/// min c·x subject to the constraint list; variables are nonnegative unless
/// flagged free.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<Rat>,
    pub constraints: Vec<Constraint>,
    pub free: Vec<bool>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![Rat::zero(); num_vars],
            constraints: Vec::new(),
            free: vec![false; num_vars],
        }
    }

    pub fn set_objective(&mut self, c: Vec<Rat>) {
        assert_eq!(c.len(), self.num_vars);
        self.objective = c;
    }

    pub fn mark_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn add(&mut self, coeffs: Vec<Rat>, rel: Rel, rhs: Rat) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.constraints.push(Constraint::new(coeffs, rel, rhs));
    }
}

#[derive(Clone, Debug)]
pub enum LpOutcome {
    Optimal {
        x: Vec<Rat>,
        objective: Rat,
    },
    /// Row multipliers certifying infeasibility of the original system:
    /// y_i ≤ 0 for Le rows, y_i ≥ 0 for Ge rows, free for Eq rows, with
    /// Σ y_i a_i ≤ 0 on nonnegative variables, = 0 on free variables, and
    /// Σ y_i b_i > 0.
    Infeasible {
        farkas: Vec<Rat>,
    },
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize,
    a: Vec<Vec<Rat>>,
    b: Vec<Rat>,
    basis: Vec<usize>,
    /// Original row index and flip sign, for the Farkas certificate.
    row_origin: Vec<(usize, bool)>,
}

/// Solve the program exactly.
pub fn solve(lp: &LinearProgram) -> LpOutcome {
    let n = lp.num_vars;
    // Column layout: for each variable one column, plus a companion negative
    // column for free variables; then one slack column per inequality; then
    // one artificial per row.
    let mut col_of_var = Vec::with_capacity(n);
    let mut neg_col_of_var = vec![None; n];
    let mut ncols = 0;
    for v in 0..n {
        col_of_var.push(ncols);
        ncols += 1;
        if lp.free[v] {
            neg_col_of_var[v] = Some(ncols);
            ncols += 1;
        }
    }
    let mut slack_col = vec![None; lp.constraints.len()];
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.rel != Rel::Eq {
            slack_col[i] = Some(ncols);
            ncols += 1;
        }
    }
    let art_start = ncols;
    ncols += lp.constraints.len();

    let rows = lp.constraints.len();
    let mut a = vec![vec![Rat::zero(); ncols]; rows];
    let mut b = vec![Rat::zero(); rows];
    let mut row_origin = Vec::with_capacity(rows);
    for (i, c) in lp.constraints.iter().enumerate() {
        let flip = c.rhs.is_negative();
        let sign = if flip { -Rat::one() } else { Rat::one() };
        for v in 0..n {
            a[i][col_of_var[v]] = &sign * &c.coeffs[v];
            if let Some(nc) = neg_col_of_var[v] {
                a[i][nc] = -&a[i][col_of_var[v]];
            }
        }
        if let Some(sc) = slack_col[i] {
            let slack_sign = match c.rel {
                Rel::Le => Rat::one(),
                Rel::Ge => -Rat::one(),
                Rel::Eq => unreachable!(),
            };
            a[i][sc] = &sign * &slack_sign;
        }
        a[i][art_start + i] = Rat::one();
        b[i] = &sign * &c.rhs;
        row_origin.push((i, flip));
    }

    let mut t = Tableau {
        rows,
        cols: ncols,
        a,
        b,
        basis: (0..rows).map(|i| art_start + i).collect(),
        row_origin,
    };

    // Phase 1: minimize the sum of artificials.
    let mut cost1 = vec![Rat::zero(); ncols];
    for c in cost1.iter_mut().skip(art_start) {
        *c = Rat::one();
    }
    let SimplexEnd::Optimal {
        obj: opt1,
        duals: y,
    } = run_simplex(&mut t, &cost1, art_start)
    else {
        unreachable!("phase 1 objective is bounded below by zero")
    };
    if opt1.is_positive() {
        // Map simplex duals back to original-row multipliers. Phase-1 duals y
        // satisfy yᵀA' ≤ 0 columnwise and yᵀb' = opt1 > 0 on the (possibly
        // sign-flipped) rows; un-flip to express them on the original rows.
        let mut farkas = vec![Rat::zero(); rows];
        for (i, &(orig, flip)) in t.row_origin.iter().enumerate() {
            farkas[orig] = if flip { -y[i].clone() } else { y[i].clone() };
        }
        return LpOutcome::Infeasible { farkas };
    }

    // Drive any residual artificial out of the basis (degenerate rows).
    for r in 0..t.rows {
        if t.basis[r] >= art_start {
            if let Some(j) = (0..art_start).find(|&j| !t.a[r][j].is_zero()) {
                pivot(&mut t, r, j);
            }
        }
    }

    // Phase 2: original objective; artificials barred from entering.
    let mut cost2 = vec![Rat::zero(); ncols];
    for v in 0..n {
        cost2[col_of_var[v]] = lp.objective[v].clone();
        if let Some(nc) = neg_col_of_var[v] {
            cost2[nc] = -lp.objective[v].clone();
        }
    }
    if let SimplexEnd::Unbounded = run_simplex(&mut t, &cost2, art_start) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![Rat::zero(); n];
    for r in 0..t.rows {
        let j = t.basis[r];
        for v in 0..n {
            if j == col_of_var[v] {
                x[v] += t.b[r].clone();
            } else if Some(j) == neg_col_of_var[v] {
                x[v] -= t.b[r].clone();
            }
        }
    }
    let objective = lp
        .objective
        .iter()
        .zip(x.iter())
        .map(|(c, xi)| c * xi)
        .fold(Rat::zero(), |acc, v| acc + v);
    LpOutcome::Optimal { x, objective }
}

enum SimplexEnd {
    Optimal { obj: Rat, duals: Vec<Rat> },
    Unbounded,
}

/// Run simplex to optimality with Bland's rule. Columns at or past `art_bar`
/// with zero cost (phase-2 artificials) may not enter.
fn run_simplex(t: &mut Tableau, cost: &[Rat], art_bar: usize) -> SimplexEnd {
    let barred = |j: usize| -> bool {
        // Artificials may re-enter during phase 1 (their own phase); during
        // phase 2 they carry zero cost but must stay out. Barring them in
        // both phases is harmless for phase 1 since they start basic.
        j >= art_bar && cost[j].is_zero()
    };
    // z-row: reduced costs relative to current basis.
    loop {
        // Compute duals y via basis costs: y solves yᵀB = c_B; with an
        // explicit tableau the reduced cost of column j is c_j − yᵀA_j, which
        // we can get directly as c_j − Σ_r c_{B r} a_{rj} because the tableau
        // is kept in basis-inverse form.
        let cb: Vec<Rat> = t.basis.iter().map(|&j| cost[j].clone()).collect();
        let mut entering = None;
        for j in 0..t.cols {
            if t.basis.contains(&j) || barred(j) {
                continue;
            }
            let mut rc = cost[j].clone();
            for r in 0..t.rows {
                if !cb[r].is_zero() && !t.a[r][j].is_zero() {
                    rc -= &cb[r] * &t.a[r][j];
                }
            }
            if rc.is_negative() {
                entering = Some(j);
                break; // Bland: first negative reduced cost.
            }
        }
        let Some(j) = entering else {
            // Optimal. Objective and duals.
            let mut obj = Rat::zero();
            for r in 0..t.rows {
                if !cb[r].is_zero() {
                    obj += &cb[r] * &t.b[r];
                }
            }
            // Duals from the artificial columns (they formed the identity).
            let art_start = t.cols - t.rows;
            let mut y = vec![Rat::zero(); t.rows];
            for (i, yi) in y.iter_mut().enumerate() {
                let col = art_start + i;
                let mut acc = Rat::zero();
                for r in 0..t.rows {
                    if !cb[r].is_zero() && !t.a[r][col].is_zero() {
                        acc += &cb[r] * &t.a[r][col];
                    }
                }
                *yi = acc;
            }
            return SimplexEnd::Optimal { obj, duals: y };
        };
        // Ratio test, Bland tie-break on basis variable index.
        let mut leave: Option<usize> = None;
        let mut best: Option<Rat> = None;
        for r in 0..t.rows {
            if t.a[r][j].is_positive() {
                let ratio = &t.b[r] / &t.a[r][j];
                let better = match &best {
                    None => true,
                    Some(b) => ratio < *b || (ratio == *b && t.basis[r] < t.basis[leave.unwrap()]),
                };
                if better {
                    best = Some(ratio);
                    leave = Some(r);
                }
            }
        }
        let Some(r) = leave else {
            return SimplexEnd::Unbounded;
        };
        pivot(t, r, j);
    }
}

fn pivot(t: &mut Tableau, r: usize, j: usize) {
    let piv = t.a[r][j].clone();
    for v in t.a[r].iter_mut() {
        *v /= &piv;
    }
    t.b[r] /= &piv;
    for i in 0..t.rows {
        if i != r && !t.a[i][j].is_zero() {
            let factor = t.a[i][j].clone();
            for c in 0..t.cols {
                if !t.a[r][c].is_zero() {
                    let delta = &factor * &t.a[r][c];
                    t.a[i][c] -= delta;
                }
            }
            let delta = &factor * &t.b[r];
            t.b[i] -= delta;
        }
    }
    t.basis[r] = j;
}

/// Feasibility of the system (zero objective); returns a point if feasible.
pub fn feasible_point(lp: &LinearProgram) -> Option<Vec<Rat>> {
    let mut probe = lp.clone();
    probe.objective = vec![Rat::zero(); lp.num_vars];
    match solve(&probe) {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}
