//! Expression language for piecewise-smooth scalar functions and vector
//! fields.
//!
//! Expressions are trees over the coordinates `t, s, w0, x1..xn, u1..um,
//! a1..aq` with `+ - * / ^k`, unary negation, and `abs`. `min`/`max` are
//! desugared at parse time via `min(a,b) = (a+b-|a-b|)/2`, so `abs` is the
//! only kink mechanism. Differentiation is forward-mode on the tree with the
//! a.e. rule `abs'(z) = sign(z)`; at kinks (`|z| ≤ κ`) the caller either gets
//! a kink report or supplies per-node sign overrides, which is how the
//! sign-pattern enumeration and the adjoint selection policies are built.

mod parse;

pub use parse::parse_expr;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::lp::{self, LinearProgram, LpOutcome, Rel};
use crate::rng;

/// Coordinate kinds. Indices are zero-based internally; surface syntax is
/// one-based (`x1` is `X(0)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    /// Time of the original problem.
    T,
    /// Parameter of the extended problem.
    S,
    /// Rate variable of the recession function.
    W0,
    /// State coordinate.
    X(usize),
    /// Unbounded control coordinate.
    U(usize),
    /// Bounded control coordinate.
    A(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::S => write!(f, "s"),
            Var::W0 => write!(f, "w0"),
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::U(i) => write!(f, "u{}", i + 1),
            Var::A(i) => write!(f, "a{}", i + 1),
        }
    }
}

/// Declared dimensions of the owning problem: state n, unbounded controls m,
/// bounded controls q.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub q: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, q: usize) -> Self {
        Dims { n, m, q }
    }

    pub fn contains(&self, v: Var) -> bool {
        match v {
            Var::T | Var::S | Var::W0 => true,
            Var::X(i) => i < self.n,
            Var::U(i) => i < self.m,
            Var::A(i) => i < self.q,
        }
    }
}

/// Expression tree. `Pow` exponents are integer constants by construction.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("zero raised to negative exponent {0}")]
    ZeroToNegativePower(i32),
    #[error("variable {0} is not assigned")]
    Unassigned(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown variable `{name}` at position {pos}")]
    UnknownVariable { pos: usize, name: String },
    #[error("exponent at position {pos} must be an integer constant")]
    NonIntegerExponent { pos: usize },
    #[error("`{name}` at position {pos} takes {expected} argument(s), got {got}")]
    WrongArity {
        pos: usize,
        name: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("sign-pattern cap exceeded: {active} active kinks, cap {cap}")]
    CapExceeded { active: usize, cap: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Variable assignment for evaluation. Missing slices/fields yield
/// `EvalError::Unassigned` when the expression actually uses the variable.
#[derive(Clone, Copy, Default)]
pub struct Env<'a> {
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub w0: Option<f64>,
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub a: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn state(x: &'a [f64]) -> Self {
        Env {
            x,
            ..Default::default()
        }
    }

    pub fn with_t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    pub fn with_s(mut self, s: f64) -> Self {
        self.s = Some(s);
        self
    }

    pub fn with_w0(mut self, w0: f64) -> Self {
        self.w0 = Some(w0);
        self
    }

    pub fn with_u(mut self, u: &'a [f64]) -> Self {
        self.u = u;
        self
    }

    pub fn with_a(mut self, a: &'a [f64]) -> Self {
        self.a = a;
        self
    }

    fn get(&self, v: Var) -> Result<f64, EvalError> {
        let val = match v {
            Var::T => self.t,
            Var::S => self.s,
            Var::W0 => self.w0,
            Var::X(i) => self.x.get(i).copied(),
            Var::U(i) => self.u.get(i).copied(),
            Var::A(i) => self.a.get(i).copied(),
        };
        val.ok_or_else(|| EvalError::Unassigned(v.to_string()))
    }
}

fn sign(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }

    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }

    pub fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }

    pub fn pow(self, k: i32) -> Expr {
        Expr::Pow(Box::new(self), k)
    }

    pub fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }

    pub fn abs(self) -> Expr {
        Expr::Abs(Box::new(self))
    }

    /// Scale by a constant, folding the trivial cases.
    pub fn scaled(self, c: f64) -> Expr {
        if c == 1.0 {
            self
        } else if c == 0.0 {
            Expr::Const(0.0)
        } else {
            Expr::Const(c).mul(self)
        }
    }

    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => env.get(*v)?,
            Expr::Add(l, r) => l.eval(env)? + r.eval(env)?,
            Expr::Sub(l, r) => l.eval(env)? - r.eval(env)?,
            Expr::Mul(l, r) => l.eval(env)? * r.eval(env)?,
            Expr::Div(l, r) => {
                let den = r.eval(env)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                l.eval(env)? / den
            }
            Expr::Pow(e, k) => {
                let base = e.eval(env)?;
                if base == 0.0 && *k < 0 {
                    return Err(EvalError::ZeroToNegativePower(*k));
                }
                base.powi(*k)
            }
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Abs(e) => e.eval(env)?.abs(),
        })
    }

    /// Forward-mode value/derivative with respect to `seed`. `sign_of` may
    /// override the slope of `abs` nodes by their pre-order index; nodes
    /// without an override use `sign(argument)`.
    pub fn eval_dual(
        &self,
        env: &Env,
        seed: Var,
        sign_of: &dyn Fn(usize) -> Option<f64>,
    ) -> Result<(f64, f64), EvalError> {
        let mut next_abs = 0usize;
        self.eval_dual_inner(env, seed, sign_of, &mut next_abs)
    }

    fn eval_dual_inner(
        &self,
        env: &Env,
        seed: Var,
        sign_of: &dyn Fn(usize) -> Option<f64>,
        next_abs: &mut usize,
    ) -> Result<(f64, f64), EvalError> {
        Ok(match self {
            Expr::Const(c) => (*c, 0.0),
            Expr::Var(v) => (env.get(*v)?, if *v == seed { 1.0 } else { 0.0 }),
            Expr::Add(l, r) => {
                let (lv, ld) = l.eval_dual_inner(env, seed, sign_of, next_abs)?;
                let (rv, rd) = r.eval_dual_inner(env, seed, sign_of, next_abs)?;
                (lv + rv, ld + rd)
            }
            Expr::Sub(l, r) => {
                let (lv, ld) = l.eval_dual_inner(env, seed, sign_of, next_abs)?;
                let (rv, rd) = r.eval_dual_inner(env, seed, sign_of, next_abs)?;
                (lv - rv, ld - rd)
            }
            Expr::Mul(l, r) => {
                let (lv, ld) = l.eval_dual_inner(env, seed, sign_of, next_abs)?;
                let (rv, rd) = r.eval_dual_inner(env, seed, sign_of, next_abs)?;
                (lv * rv, ld * rv + lv * rd)
            }
            Expr::Div(l, r) => {
                let (lv, ld) = l.eval_dual_inner(env, seed, sign_of, next_abs)?;
                let (rv, rd) = r.eval_dual_inner(env, seed, sign_of, next_abs)?;
                if rv == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                (lv / rv, (ld * rv - lv * rd) / (rv * rv))
            }
            Expr::Pow(e, k) => {
                let (v, d) = e.eval_dual_inner(env, seed, sign_of, next_abs)?;
                if v == 0.0 && *k < 0 {
                    return Err(EvalError::ZeroToNegativePower(*k));
                }
                let val = v.powi(*k);
                let deriv = if *k == 0 {
                    0.0
                } else {
                    if v == 0.0 && *k - 1 < 0 {
                        return Err(EvalError::ZeroToNegativePower(*k - 1));
                    }
                    *k as f64 * v.powi(*k - 1) * d
                };
                (val, deriv)
            }
            Expr::Neg(e) => {
                let (v, d) = e.eval_dual_inner(env, seed, sign_of, next_abs)?;
                (-v, -d)
            }
            Expr::Abs(e) => {
                let id = *next_abs;
                *next_abs += 1;
                let (v, d) = e.eval_dual_inner(env, seed, sign_of, next_abs)?;
                let slope = sign_of(id).unwrap_or_else(|| sign(v));
                (v.abs(), slope * d)
            }
        })
    }

    /// Argument values of all `abs` nodes, in pre-order.
    pub fn abs_arguments(&self, env: &Env) -> Result<Vec<f64>, EvalError> {
        let mut out = Vec::new();
        self.abs_arguments_inner(env, &mut out)?;
        Ok(out)
    }

    fn abs_arguments_inner(&self, env: &Env, out: &mut Vec<f64>) -> Result<(), EvalError> {
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.abs_arguments_inner(env, out)?;
                r.abs_arguments_inner(env, out)?;
            }
            Expr::Pow(e, _) | Expr::Neg(e) => e.abs_arguments_inner(env, out)?,
            Expr::Abs(e) => {
                out.push(e.eval(env)?);
                e.abs_arguments_inner(env, out)?;
            }
        }
        Ok(())
    }

    /// The `abs` argument subexpressions, in pre-order.
    pub fn abs_argument_exprs(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        self.abs_argument_exprs_inner(&mut out);
        out
    }

    fn abs_argument_exprs_inner<'e>(&'e self, out: &mut Vec<&'e Expr>) {
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.abs_argument_exprs_inner(out);
                r.abs_argument_exprs_inner(out);
            }
            Expr::Pow(e, _) | Expr::Neg(e) => e.abs_argument_exprs_inner(out),
            Expr::Abs(e) => {
                out.push(e);
                e.abs_argument_exprs_inner(out);
            }
        }
    }

    pub fn abs_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 0,
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.abs_count() + r.abs_count()
            }
            Expr::Pow(e, _) | Expr::Neg(e) => e.abs_count(),
            Expr::Abs(e) => 1 + e.abs_count(),
        }
    }

    pub fn depends_on(&self, pred: &dyn Fn(Var) -> bool) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => pred(*v),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.depends_on(pred) || r.depends_on(pred)
            }
            Expr::Pow(e, _) | Expr::Neg(e) | Expr::Abs(e) => e.depends_on(pred),
        }
    }

    /// True if the expression is affine in the given variables (other
    /// variables act as constants).
    pub fn affine_in(&self, vars: &[Var]) -> bool {
        let pred = |v: Var| vars.contains(&v);
        match self {
            Expr::Const(_) | Expr::Var(_) => true,
            Expr::Add(l, r) | Expr::Sub(l, r) => l.affine_in(vars) && r.affine_in(vars),
            Expr::Mul(l, r) => {
                (!l.depends_on(&pred) && r.affine_in(vars))
                    || (!r.depends_on(&pred) && l.affine_in(vars))
            }
            Expr::Div(l, r) => !r.depends_on(&pred) && l.affine_in(vars),
            Expr::Pow(e, k) => match k {
                0 => true,
                1 => e.affine_in(vars),
                _ => !e.depends_on(&pred),
            },
            Expr::Neg(e) => e.affine_in(vars),
            Expr::Abs(e) => !e.depends_on(&pred),
        }
    }

    /// Replace variables by expressions; `None` keeps the variable.
    pub fn substitute(&self, map: &dyn Fn(Var) -> Option<Expr>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => map(*v).unwrap_or(Expr::Var(*v)),
            Expr::Add(l, r) => Expr::Add(Box::new(l.substitute(map)), Box::new(r.substitute(map))),
            Expr::Sub(l, r) => Expr::Sub(Box::new(l.substitute(map)), Box::new(r.substitute(map))),
            Expr::Mul(l, r) => Expr::Mul(Box::new(l.substitute(map)), Box::new(r.substitute(map))),
            Expr::Div(l, r) => Expr::Div(Box::new(l.substitute(map)), Box::new(r.substitute(map))),
            Expr::Pow(e, k) => Expr::Pow(Box::new(e.substitute(map)), *k),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(map))),
            Expr::Abs(e) => Expr::Abs(Box::new(e.substitute(map))),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Pow(..) => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Parenthesization preserves tree structure exactly: a right child at
        // the same precedence level is parenthesized so that reparsing the
        // printed form rebuilds the identical (left-associated) tree.
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "(")?;
                write!(f, "{e}")?;
                write!(f, ")")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            // Negative literals are not in the grammar; print them in the
            // unary form so the output always reparses.
            Expr::Const(c) if *c == 0.0 => write!(f, "0"),
            Expr::Const(c) if *c < 0.0 => write!(f, "-({})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(l, r) => {
                child(f, l, 1)?;
                write!(f, " + ")?;
                child(f, r, 2)
            }
            Expr::Sub(l, r) => {
                child(f, l, 1)?;
                write!(f, " - ")?;
                child(f, r, 2)
            }
            Expr::Mul(l, r) => {
                child(f, l, 2)?;
                write!(f, " * ")?;
                child(f, r, 3)
            }
            Expr::Div(l, r) => {
                child(f, l, 2)?;
                write!(f, " / ")?;
                child(f, r, 3)
            }
            Expr::Pow(e, k) => {
                child(f, e, 4)?;
                write!(f, "^{k}")
            }
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Abs(e) => write!(f, "abs({e})"),
        }
    }
}

/// A kink node of a field whose argument vanishes at the evaluation point.
#[derive(Clone, Debug)]
pub struct KinkSite {
    /// Field-global pre-order index of the `abs` node.
    pub id: usize,
    /// Component the node lives in.
    pub component: usize,
    /// Argument value at the point (within the kink tolerance of zero).
    pub arg_value: f64,
    /// The argument subexpression, for cross-field sign grouping.
    pub arg_expr: Expr,
}

/// Report returned instead of a Jacobian when kink nodes are active.
#[derive(Clone, Debug)]
pub struct KinkReport {
    pub sites: Vec<KinkSite>,
}

/// Result of the almost-everywhere Jacobian: either the classical Jacobian or
/// the list of kink nodes preventing it.
#[derive(Clone, Debug)]
pub enum JacobianAe {
    Smooth(DMatrix<f64>),
    Kinked(KinkReport),
}

/// Sign assignment for the active kink nodes, with the radius at which the
/// assignment was certified realizable.
#[derive(Clone, Debug, PartialEq)]
pub struct SignPattern {
    /// `(field-global abs id, sign)` pairs, ascending by id.
    pub signs: Vec<(usize, i8)>,
    pub feasibility_radius: f64,
}

/// Configuration for sign-pattern enumeration.
#[derive(Clone, Debug)]
pub struct PatternConfig {
    /// Kink tolerance κ: a node is active when `|argument| ≤ κ`.
    pub kappa: f64,
    /// Maximum number of simultaneously active kinks.
    pub cap: usize,
    /// Samples drawn per pattern for the realizability test.
    pub samples: usize,
    pub seed: u64,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            kappa: 1e-9,
            cap: 16,
            samples: 64,
            seed: 0,
        }
    }
}

/// A vector field (or scalar function, when one component) given by
/// expression trees. Values are immutable after construction and all
/// operations are pure, so fields can be shared across threads freely.
#[derive(Clone, Debug, PartialEq)]
pub struct NonsmoothField {
    pub dims: Dims,
    pub components: Vec<Expr>,
    /// Declared Lipschitz bound, when known.
    pub lipschitz: Option<f64>,
}

impl NonsmoothField {
    pub fn new(dims: Dims, components: Vec<Expr>) -> Self {
        NonsmoothField {
            dims,
            components,
            lipschitz: None,
        }
    }

    pub fn n_out(&self) -> usize {
        self.components.len()
    }

    /// Evaluate all components.
    pub fn eval(&self, env: &Env) -> Result<Vec<f64>, EvalError> {
        self.components.iter().map(|c| c.eval(env)).collect()
    }

    /// Per-component `abs` node counts; global ids are offsets into the
    /// concatenation.
    fn abs_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.components.len() + 1);
        let mut acc = 0;
        for c in &self.components {
            offsets.push(acc);
            acc += c.abs_count();
        }
        offsets.push(acc);
        offsets
    }

    /// Kink nodes whose argument both vanishes (within `kappa`) and depends
    /// on one of the `wrt` variables.
    pub fn kink_sites(
        &self,
        env: &Env,
        wrt: &[Var],
        kappa: f64,
    ) -> Result<Vec<KinkSite>, EvalError> {
        let offsets = self.abs_offsets();
        let mut out = Vec::new();
        for (ci, comp) in self.components.iter().enumerate() {
            let args = comp.abs_arguments(env)?;
            let exprs = comp.abs_argument_exprs();
            for (local, (val, expr)) in args.iter().zip(exprs.iter()).enumerate() {
                let relevant = expr.depends_on(&|v| wrt.contains(&v));
                if val.abs() <= kappa && relevant {
                    out.push(KinkSite {
                        id: offsets[ci] + local,
                        component: ci,
                        arg_value: *val,
                        arg_expr: (*expr).clone(),
                    });
                }
            }
        }
        Ok(out)
    }

    /// Jacobian with per-node slope overrides (`sign_of` keyed by the
    /// field-global abs id). Rows are components, columns follow `wrt`.
    pub fn jacobian_with_signs(
        &self,
        env: &Env,
        wrt: &[Var],
        sign_of: &dyn Fn(usize) -> Option<f64>,
    ) -> Result<DMatrix<f64>, EvalError> {
        let offsets = self.abs_offsets();
        let mut jac = DMatrix::zeros(self.components.len(), wrt.len());
        for (ci, comp) in self.components.iter().enumerate() {
            let base = offsets[ci];
            for (vi, v) in wrt.iter().enumerate() {
                let local_sign = |local: usize| sign_of(base + local);
                let (_, d) = comp.eval_dual(env, *v, &local_sign)?;
                jac[(ci, vi)] = d;
            }
        }
        Ok(jac)
    }

    /// Classical Jacobian where it exists; the kink report otherwise.
    pub fn jacobian_ae(&self, env: &Env, wrt: &[Var], kappa: f64) -> Result<JacobianAe, EvalError> {
        let sites = self.kink_sites(env, wrt, kappa)?;
        if sites.is_empty() {
            Ok(JacobianAe::Smooth(self.jacobian_with_signs(
                env,
                wrt,
                &|_| None,
            )?))
        } else {
            Ok(JacobianAe::Kinked(KinkReport { sites }))
        }
    }

    /// The state coordinates, the default differentiation variables.
    pub fn state_vars(&self) -> Vec<Var> {
        (0..self.dims.n).map(Var::X).collect()
    }

    /// Enumerate feasible sign assignments of the active kink nodes together
    /// with the limit Jacobian under each assignment.
    pub fn sign_patterns(
        &self,
        env: &Env,
        wrt: &[Var],
        radius: f64,
        cfg: &PatternConfig,
    ) -> Result<Vec<(SignPattern, DMatrix<f64>)>, PatternError> {
        let sites = self.kink_sites(env, wrt, cfg.kappa)?;
        enumerate_patterns(&[self], env, wrt, &sites_tagged(&sites, 0), radius, cfg)?
            .into_iter()
            .map(|(pattern, jacs)| Ok((pattern, jacs.into_iter().next().unwrap())))
            .collect()
    }
}

pub(crate) fn sites_tagged(sites: &[KinkSite], field_idx: usize) -> Vec<(usize, KinkSite)> {
    sites.iter().map(|s| (field_idx, s.clone())).collect()
}

/// Joint sign-pattern enumeration over one or more fields sharing the same
/// evaluation point. Sites whose argument expressions are structurally equal
/// share one sign, which is what makes `[f,f]_set = {0}` exact. Returns, per
/// feasible pattern, the Jacobian of every field under that pattern.
pub(crate) fn enumerate_patterns(
    fields: &[&NonsmoothField],
    env: &Env,
    wrt: &[Var],
    tagged_sites: &[(usize, KinkSite)],
    radius: f64,
    cfg: &PatternConfig,
) -> Result<Vec<(SignPattern, Vec<DMatrix<f64>>)>, PatternError> {
    // Group sites by structurally equal argument expression.
    let mut groups: Vec<(Expr, Vec<(usize, usize)>)> = Vec::new();
    for (fi, site) in tagged_sites {
        match groups.iter_mut().find(|(e, _)| *e == site.arg_expr) {
            Some((_, members)) => members.push((*fi, site.id)),
            None => groups.push((site.arg_expr.clone(), vec![(*fi, site.id)])),
        }
    }
    let k = groups.len();
    if k > cfg.cap {
        return Err(PatternError::CapExceeded {
            active: k,
            cap: cfg.cap,
        });
    }

    let x: Vec<f64> = env.x.to_vec();
    let mut out = Vec::new();
    for mask in 0..(1u64 << k) {
        let group_signs: Vec<f64> = (0..k)
            .map(|g| if mask >> g & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        if k > 0 && !pattern_feasible(&groups, &group_signs, env, wrt, &x, radius, cfg)? {
            continue;
        }
        // Per-field override tables.
        let mut overrides: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); fields.len()];
        let mut pattern_signs = Vec::new();
        for (g, (_, members)) in groups.iter().enumerate() {
            for (fi, id) in members {
                overrides[*fi].insert(*id, group_signs[g]);
                pattern_signs.push((*id, group_signs[g] as i8));
            }
        }
        pattern_signs.sort_unstable();
        let mut jacs = Vec::with_capacity(fields.len());
        for (fi, field) in fields.iter().enumerate() {
            let table = &overrides[fi];
            jacs.push(field.jacobian_with_signs(env, wrt, &|id| table.get(&id).copied())?);
        }
        out.push((
            SignPattern {
                signs: pattern_signs,
                feasibility_radius: radius,
            },
            jacs,
        ));
    }
    Ok(out)
}

/// Realizability of a sign assignment in the ball `B(x, radius)`: accept if a
/// drawn sample realizes all signs, or, when every argument is affine in the
/// `wrt` variables, if the exact LP over the inscribed box is feasible.
fn pattern_feasible(
    groups: &[(Expr, Vec<(usize, usize)>)],
    signs: &[f64],
    env: &Env,
    wrt: &[Var],
    x: &[f64],
    radius: f64,
    cfg: &PatternConfig,
) -> Result<bool, EvalError> {
    // Sampling test.
    let sig = signs
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, s)| acc ^ ((*s > 0.0) as u64) << i);
    for i in 0..cfg.samples {
        let mut rng = rng::sample_rng(cfg.seed, 0x5f30 ^ sig, i as u64);
        let y = rng::uniform_in_ball(&mut rng, x, radius);
        let env_y = Env { x: &y, ..*env };
        let mut ok = true;
        for ((arg, _), want) in groups.iter().zip(signs.iter()) {
            let v = arg.eval(&env_y)?;
            if v * want <= 0.0 {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(true);
        }
    }
    // Exact affine test over the inscribed box.
    if groups.iter().all(|(arg, _)| arg.affine_in(wrt)) && !wrt.is_empty() {
        let d = wrt.len();
        let half = radius / (d as f64).sqrt();
        // Variables: y (free, d of them) and the margin tau.
        let mut lpr = LinearProgram::new(d + 1);
        for vi in 0..d {
            lpr.mark_free(vi);
        }
        let mut obj = vec![lp::rat(0.0); d + 1];
        obj[d] = lp::rat(-1.0); // maximize tau
        lpr.set_objective(obj);
        for ((arg, _), want) in groups.iter().zip(signs.iter()) {
            // sigma * (a·y + b) ≥ tau, with coefficients from forward mode.
            let mut coeffs = vec![lp::rat(0.0); d + 1];
            let mut b = arg.eval(env)?;
            for (vi, v) in wrt.iter().enumerate() {
                let (_, a_i) = arg.eval_dual(env, *v, &|_| None)?;
                coeffs[vi] = lp::rat(want * a_i);
                let base = env.get(*v)?;
                b -= a_i * base;
            }
            coeffs[d] = lp::rat(-1.0);
            lpr.add(coeffs, Rel::Ge, lp::rat(-want * b));
        }
        // Box around the evaluation point.
        for (vi, v) in wrt.iter().enumerate() {
            let base = env.get(*v)?;
            let mut up = vec![lp::rat(0.0); d + 1];
            up[vi] = lp::rat(1.0);
            lpr.add(up.clone(), Rel::Le, lp::rat(base + half));
            lpr.add(up, Rel::Ge, lp::rat(base - half));
        }
        // Tau bounded to keep the LP bounded.
        let mut tau_bound = vec![lp::rat(0.0); d + 1];
        tau_bound[d] = lp::rat(1.0);
        lpr.add(tau_bound, Rel::Le, lp::rat(1.0));
        if let LpOutcome::Optimal { objective, .. } = lp::solve(&lpr) {
            let tau = -lp::rat_to_f64(&objective);
            return Ok(tau > 0.0);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims23() -> Dims {
        Dims::new(2, 2, 0)
    }

    fn sec5_g1() -> NonsmoothField {
        let dims = Dims::new(3, 2, 0);
        NonsmoothField::new(
            dims,
            vec![
                parse_expr("1", dims).unwrap(),
                parse_expr("0", dims).unwrap(),
                parse_expr("x2 - abs(x2)", dims).unwrap(),
            ],
        )
    }

    #[test]
    fn eval_examples() {
        let d = dims23();
        let e = parse_expr("x1 + abs(x2)", d).unwrap();
        assert_eq!(e.eval(&Env::state(&[1.0, -2.0])).unwrap(), 3.0);
        let e = parse_expr("x2 - abs(x2)", d).unwrap();
        assert_eq!(e.eval(&Env::state(&[0.0, -0.1])).unwrap(), -0.2);
        let e = parse_expr("x1 + abs(x1)", d).unwrap();
        assert_eq!(e.eval(&Env::state(&[1.0, 0.0])).unwrap(), 2.0);
    }

    #[test]
    fn eval_error_paths() {
        let d = dims23();
        let e = parse_expr("x1 / x2", d).unwrap();
        assert_eq!(
            e.eval(&Env::state(&[1.0, 0.0])),
            Err(EvalError::DivisionByZero)
        );
        let e = parse_expr("t + x1", d).unwrap();
        assert!(matches!(
            e.eval(&Env::state(&[1.0, 0.0])),
            Err(EvalError::Unassigned(_))
        ));
    }

    #[test]
    fn jacobian_ae_on_sec5_field() {
        let g1 = sec5_g1();
        let wrt = g1.state_vars();
        // Away from the kink, on the positive side: d(x2 - |x2|)/dx2 = 0.
        match g1
            .jacobian_ae(&Env::state(&[1.0, 0.1, 0.0]), &wrt, 1e-9)
            .unwrap()
        {
            JacobianAe::Smooth(j) => {
                assert_eq!(j[(2, 1)], 0.0);
                assert_eq!(j.iter().map(|v| v.abs()).sum::<f64>(), 0.0);
            }
            other => panic!("expected smooth, got {other:?}"),
        }
        // Negative side: slope 2.
        match g1
            .jacobian_ae(&Env::state(&[1.0, -0.1, 0.0]), &wrt, 1e-9)
            .unwrap()
        {
            JacobianAe::Smooth(j) => assert_eq!(j[(2, 1)], 2.0),
            other => panic!("expected smooth, got {other:?}"),
        }
        // On the kink: report names the abs node.
        match g1
            .jacobian_ae(&Env::state(&[1.0, 0.0, 0.0]), &wrt, 1e-9)
            .unwrap()
        {
            JacobianAe::Kinked(report) => {
                assert_eq!(report.sites.len(), 1);
                assert_eq!(report.sites[0].component, 2);
            }
            other => panic!("expected kink report, got {other:?}"),
        }
    }

    #[test]
    fn sign_patterns_on_sec5_field() {
        let g1 = sec5_g1();
        let wrt = g1.state_vars();
        let cfg = PatternConfig::default();
        let pats = g1
            .sign_patterns(&Env::state(&[1.0, 0.0, 0.0]), &wrt, 1e-3, &cfg)
            .unwrap();
        assert_eq!(pats.len(), 2);
        let mut slopes: Vec<f64> = pats.iter().map(|(_, j)| j[(2, 1)]).collect();
        slopes.sort_by(f64::total_cmp);
        assert_eq!(slopes, vec![0.0, 2.0]);
    }

    #[test]
    fn sign_patterns_smooth_field_single() {
        let d = dims23();
        let f = NonsmoothField::new(
            d,
            vec![
                parse_expr("x1^2 + x2", d).unwrap(),
                parse_expr("x1 * x2", d).unwrap(),
            ],
        );
        let wrt = f.state_vars();
        let pats = f
            .sign_patterns(
                &Env::state(&[0.5, 2.0]),
                &wrt,
                1e-3,
                &PatternConfig::default(),
            )
            .unwrap();
        assert_eq!(pats.len(), 1);
        assert!(pats[0].0.signs.is_empty());
        let j = &pats[0].1;
        assert_eq!(j[(0, 0)], 1.0);
        assert_eq!(j[(0, 1)], 1.0);
        assert_eq!(j[(1, 0)], 2.0);
        assert_eq!(j[(1, 1)], 0.5);
    }

    #[test]
    fn two_independent_kinks_give_four_patterns() {
        let d = dims23();
        let f = NonsmoothField::new(d, vec![parse_expr("abs(x1) + abs(x2)", d).unwrap()]);
        let wrt = f.state_vars();
        let pats = f
            .sign_patterns(
                &Env::state(&[0.0, 0.0]),
                &wrt,
                1e-3,
                &PatternConfig::default(),
            )
            .unwrap();
        assert_eq!(pats.len(), 4);
    }

    #[test]
    fn infeasible_patterns_are_dropped() {
        // abs(x1) + abs(2*x1): signs of x1 and 2 x1 must agree, so only two
        // of the four assignments are realizable.
        let d = dims23();
        let f = NonsmoothField::new(d, vec![parse_expr("abs(x1) + abs(2 * x1)", d).unwrap()]);
        let wrt = f.state_vars();
        let pats = f
            .sign_patterns(
                &Env::state(&[0.0, 0.0]),
                &wrt,
                1e-3,
                &PatternConfig::default(),
            )
            .unwrap();
        assert_eq!(pats.len(), 2);
        let mut slopes: Vec<f64> = pats.iter().map(|(_, j)| j[(0, 0)]).collect();
        slopes.sort_by(f64::total_cmp);
        assert_eq!(slopes, vec![-3.0, 3.0]);
    }

    #[test]
    fn pattern_cap() {
        let d = Dims::new(1, 0, 0);
        let f = NonsmoothField::new(
            d,
            vec![parse_expr("abs(x1) + abs(2*x1) + abs(3*x1) + abs(5*x1)", d).unwrap()],
        );
        let cfg = PatternConfig {
            cap: 2,
            ..Default::default()
        };
        let err = f
            .sign_patterns(&Env::state(&[0.0]), &[Var::X(0)], 1e-3, &cfg)
            .unwrap_err();
        assert!(matches!(
            err,
            PatternError::CapExceeded { active: 4, cap: 2 }
        ));
    }

    #[test]
    fn dual_derivative_matches_central_difference() {
        let d = Dims::new(3, 1, 0);
        let cases = [
            "x1^3 - 2 * x2 * x3 + x3^2",
            "x1 / (1 + x2^2)",
            "(x1 + x2) * (x2 - x3) + u1 * x1",
            "x1^2 * x2 + 4",
        ];
        for text in cases {
            let e = parse_expr(text, d).unwrap();
            for i in 0..3 {
                for trial in 0..10 {
                    let base = [
                        0.3 + 0.17 * trial as f64,
                        -0.7 + 0.05 * trial as f64,
                        1.1 - 0.02 * trial as f64,
                    ];
                    let u = [0.4];
                    let env = Env::state(&base).with_u(&u);
                    let (_, sym) = e.eval_dual(&env, Var::X(i), &|_| None).unwrap();
                    let h = 1e-6;
                    let mut xp = base;
                    xp[i] += h;
                    let mut xm = base;
                    xm[i] -= h;
                    let fp = e.eval(&Env::state(&xp).with_u(&u)).unwrap();
                    let fm = e.eval(&Env::state(&xm).with_u(&u)).unwrap();
                    let fd = (fp - fm) / (2.0 * h);
                    let scale = 1.0 + sym.abs();
                    assert!(
                        (sym - fd).abs() <= 1e-6 * scale,
                        "{text} d/dx{} sym {sym} fd {fd}",
                        i + 1
                    );
                }
            }
        }
    }

    #[test]
    fn min_max_desugar_to_abs() {
        let d = dims23();
        let e = parse_expr("min(x1, x2)", d).unwrap();
        assert_eq!(e.abs_count(), 1);
        assert_eq!(e.eval(&Env::state(&[3.0, -1.0])).unwrap(), -1.0);
        let e = parse_expr("max(x1, x2)", d).unwrap();
        assert_eq!(e.eval(&Env::state(&[3.0, -1.0])).unwrap(), 3.0);
    }

    #[test]
    fn print_parse_print_fixed_point_corpus() {
        let d = Dims::new(3, 2, 1);
        let corpus = [
            "x1",
            "x1 + x2",
            "x1 - x2 - x3",
            "x1 * x2 * x3",
            "x1 / x2 / x3",
            "x1 - (x2 - x3)",
            "x1 / (x2 / x3)",
            "(x1 + x2) * x3",
            "x1 + x2 * x3",
            "x1^2",
            "(x1 + x2)^3",
            "x1^-2",
            "abs(x1)",
            "abs(x1 + x2)",
            "-(x1)",
            "-(x1 + x2)",
            "min(x1, x2)",
            "max(x1, x2 + x3)",
            "abs(abs(x1) - x2)",
            "1",
            "0.5",
            "2.25 * x1",
            "t + s",
            "u1 * x1 + u2 * x2",
            "a1 * x3",
            "w0 * u1",
            "x1 * (x2 + x3)",
            "(x1 - x2) / (x2 + x3)",
            "x1 + (x2 + x3)",
            "x1 * x2 + x2 * x3 - x3 * x1",
            "abs(x1) * abs(x2)",
            "(x1^2 + x2^2)^2",
            "x1 - abs(x2)",
            "x2 - abs(x2)",
            "x1 + abs(x1)",
            "1 - x1^2",
            "3 * x1^2 - 2 * x2^3",
            "abs(min(x1, x2))",
            "max(abs(x1), abs(x2))",
            "x1 / 2",
            "(x1 + 1) * (x2 - 1)",
            "0 - x1",
            "abs(u1) + abs(u2)",
            "t^2 - 2 * t + 1",
            "s * x1 - s^2",
            "min(x1 + x2, x3 - 1)",
            "abs(x1 - 1) + abs(x1 + 1)",
            "((x1))",
            "x1^2 * x2^2",
            "2 / x1",
        ];
        assert_eq!(corpus.len(), 50);
        for text in corpus {
            let once = parse_expr(text, d).unwrap().to_string();
            let twice = parse_expr(&once, d).unwrap().to_string();
            assert_eq!(once, twice, "not a fixed point for {text:?}");
            // And print∘parse is the identity on the printed form.
            assert_eq!(
                parse_expr(&once, d).unwrap(),
                parse_expr(&twice, d).unwrap()
            );
        }
    }
}
