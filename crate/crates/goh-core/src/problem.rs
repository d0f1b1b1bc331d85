//! The strict-sense problem, its space-time extension, and the Hamiltonian.
//!
//! A strict process controls `dx/dt = f(x,a) + Σ g_i(x) uⁱ` with an L¹ budget
//! on `u`. The extension reparametrizes time by `t(s) = ∫ w⁰` and controls
//! `(w⁰, w)`, allowing impulsive subintervals where `w⁰ ≡ 0`; the canonical
//! parametrization normalizes `w⁰ + |w| = 1`. The recession function extends
//! the Lagrangian's cost rate to those impulsive arcs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cones::{ConeError, Multicone, PolyhedralCone};
use crate::integrate::SelectionPolicy;
use crate::nsfield::{Dims, Env, EvalError, Expr, NonsmoothField, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error("recession limit diverges for l1 at w0 = 0 (estimates {0} and {1})")]
    RecessionDiverged(f64, f64),
    #[error("explicit recession expression required: {0}")]
    NeedsExplicitRecession(String),
    #[error("validation: {0}")]
    Validation(String),
}

/// Norm applied to the unbounded control in `β' = |w|` and in the canonical
/// constraint `w⁰ + |w| = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ControlNorm {
    #[default]
    Euclidean,
    L1,
}

impl ControlNorm {
    pub fn eval(&self, w: &[f64]) -> f64 {
        match self {
            ControlNorm::Euclidean => w.iter().map(|x| x * x).sum::<f64>().sqrt(),
            ControlNorm::L1 => w.iter().map(|x| x.abs()).sum(),
        }
    }
}

/// Geometric description of the target set, used for feasibility checks.
/// The time component is an interval; the state component one of ball, box,
/// or point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct TargetSet {
    pub t_range: Option<(f64, f64)>,
    pub ball: Option<(Vec<f64>, f64)>,
    #[serde(rename = "box")]
    pub box_bounds: Option<Vec<(f64, f64)>>,
    pub point: Option<Vec<f64>>,
}

impl TargetSet {
    pub fn contains(&self, t: f64, x: &[f64], tol: f64) -> bool {
        if let Some((lo, hi)) = self.t_range {
            if t < lo - tol || t > hi + tol {
                return false;
            }
        }
        if let Some((center, radius)) = &self.ball {
            let d: f64 = x
                .iter()
                .zip(center.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d > radius + tol {
                return false;
            }
        }
        if let Some(bounds) = &self.box_bounds {
            for (xi, (lo, hi)) in x.iter().zip(bounds.iter()) {
                if *xi < lo - tol || *xi > hi + tol {
                    return false;
                }
            }
        }
        if let Some(p) = &self.point {
            let d: f64 = x
                .iter()
                .zip(p.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d > tol {
                return false;
            }
        }
        true
    }
}

/// The strict-sense problem data.
#[derive(Clone, Debug, PartialEq)]
pub struct StrictProblem {
    pub dims: Dims,
    /// Coordinates `u1..u_m1` are the ones entering bracket variations;
    /// `C = C1 × C2` with C1 containing the coordinate axes.
    pub m1: usize,
    pub drift: NonsmoothField,
    pub fields: Vec<NonsmoothField>,
    /// Alternate `g` fields used only by bracket computations when the
    /// variant flag is set.
    pub variant_fields: Option<Vec<NonsmoothField>>,
    pub l0: Option<Expr>,
    pub l1: Option<Expr>,
    pub recession: Option<Expr>,
    pub psi: Expr,
    pub x0: Vec<f64>,
    /// L¹ budget K; `f64::INFINITY` means unconstrained.
    pub budget: f64,
    pub control_cone: PolyhedralCone,
    pub a_box: Vec<(f64, f64)>,
    pub target: Multicone,
    pub target_set: Option<TargetSet>,
    pub norm: ControlNorm,
    /// Bound on the ζ rescaling control.
    pub rho: f64,
}

impl StrictProblem {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let Dims { n, m, q } = self.dims;
        if self.m1 > m {
            return Err(ProblemError::Validation(format!(
                "m1 = {} exceeds m = {m}",
                self.m1
            )));
        }
        if !(self.budget > 0.0) {
            return Err(ProblemError::Validation("K must be positive".into()));
        }
        if self.x0.len() != n || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::Validation(
                "x0 must be finite of length n".into(),
            ));
        }
        if self.drift.n_out() != n {
            return Err(ProblemError::Validation(
                "drift must have n components".into(),
            ));
        }
        if self.fields.len() != m || self.fields.iter().any(|g| g.n_out() != n) {
            return Err(ProblemError::Validation(
                "need m control fields with n components each".into(),
            ));
        }
        if let Some(vf) = &self.variant_fields {
            if vf.len() != m || vf.iter().any(|g| g.n_out() != n) {
                return Err(ProblemError::Validation(
                    "variant fields must match the g list in shape".into(),
                ));
            }
        }
        if self.a_box.len() != q {
            return Err(ProblemError::Validation("A box must have q bounds".into()));
        }
        if self.control_cone.dim() != m {
            return Err(ProblemError::Validation(
                "control cone must live in R^m".into(),
            ));
        }
        if self.target.dim() != 1 + n {
            return Err(ProblemError::Validation(
                "target multicone must live in R^(1+n)".into(),
            ));
        }
        if !(self.rho > 0.0) {
            return Err(ProblemError::Validation("rho must be positive".into()));
        }
        // C1 must contain the coordinate axes of R^{m1}.
        for i in 0..self.m1 {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; m];
                e[i] = sign;
                if !self.control_cone.contains(&e)? {
                    return Err(ProblemError::Validation(format!(
                        "control cone must contain the ±e{} axis",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fields feeding the bracket computations, honoring the variant flag.
    pub fn bracket_fields(&self, variant: bool) -> Result<&[NonsmoothField], ProblemError> {
        if variant {
            self.variant_fields.as_deref().ok_or_else(|| {
                ProblemError::Validation(
                    "variant fields requested but the problem declares none".into(),
                )
            })
        } else {
            Ok(&self.fields)
        }
    }

    /// Extended-state dimension `1 + n + 1 + 1` of `(y⁰, y, yˡ, β)`.
    pub fn extended_dim(&self) -> usize {
        self.dims.n + 3
    }
}

/// One constant piece of a strict control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrictPiece {
    pub duration: f64,
    pub u: Vec<f64>,
    pub a: Vec<f64>,
}

/// Piecewise-constant strict-sense control schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct StrictProcess {
    pub pieces: Vec<StrictPiece>,
}

impl StrictProcess {
    pub fn horizon(&self) -> f64 {
        self.pieces.iter().map(|p| p.duration).sum()
    }
}

/// One constant piece of an extended control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtPiece {
    pub duration: f64,
    pub w0: f64,
    pub w: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub zeta: f64,
}

/// Trajectory samples of the extended state `(y⁰, y, yˡ, β)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub s: Vec<f64>,
    pub y0: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub yl: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Trajectory {
    pub fn endpoint(&self) -> (f64, &[f64], f64, f64) {
        let k = self.s.len() - 1;
        (self.y0[k], &self.y[k], self.yl[k], self.beta[k])
    }

    /// Index of the sample at `s`, if one was recorded there.
    pub fn index_at(&self, s: f64, tol: f64) -> Option<usize> {
        // Samples are sorted; binary search with tolerance.
        let mut lo = 0usize;
        let mut hi = self.s.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.s[mid] < s - tol {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo < self.s.len() && (self.s[lo] - s).abs() <= tol {
            Some(lo)
        } else {
            None
        }
    }

    /// State at `s` by linear interpolation between samples.
    pub fn state_at(&self, s: f64) -> (f64, Vec<f64>, f64, f64) {
        let k = self.s.partition_point(|&v| v <= s).min(self.s.len() - 1);
        if k == 0 {
            return (self.y0[0], self.y[0].clone(), self.yl[0], self.beta[0]);
        }
        let (a, b) = (k - 1, k);
        let span = self.s[b] - self.s[a];
        let t = if span > 0.0 {
            ((s - self.s[a]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let lerp = |p: f64, q: f64| p + t * (q - p);
        (
            lerp(self.y0[a], self.y0[b]),
            self.y[a]
                .iter()
                .zip(self.y[b].iter())
                .map(|(p, q)| lerp(*p, *q))
                .collect(),
            lerp(self.yl[a], self.yl[b]),
            lerp(self.beta[a], self.beta[b]),
        )
    }
}

/// Extended (space-time) process: control pieces plus trajectory samples once
/// integrated.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedProcess {
    pub pieces: Vec<ExtPiece>,
    pub canonical: bool,
    pub samples: Option<Trajectory>,
}

impl ExtendedProcess {
    pub fn from_pieces(pieces: Vec<ExtPiece>) -> Self {
        let canonical = pieces
            .iter()
            .all(|p| (p.w0 + ControlNorm::Euclidean.eval(&p.w) - 1.0).abs() <= 1e-9);
        ExtendedProcess {
            pieces,
            canonical,
            samples: None,
        }
    }

    pub fn s_end(&self) -> f64 {
        self.pieces.iter().map(|p| p.duration).sum()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.pieces.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for p in &self.pieces {
            acc += p.duration;
            out.push(acc);
        }
        out
    }

    /// The piece active at `s` (right-continuous; the end time maps to the
    /// last piece).
    pub fn piece_at(&self, s: f64) -> &ExtPiece {
        let mut acc = 0.0;
        for p in &self.pieces {
            acc += p.duration;
            if s < acc {
                return p;
            }
        }
        self.pieces.last().expect("process has no pieces")
    }

    pub fn essinf_rate(&self, norm: ControlNorm) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.w0 + norm.eval(&p.w))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self, problem: &StrictProblem) -> Result<(), ProblemError> {
        if self.pieces.is_empty() {
            return Err(ProblemError::Validation("process has no pieces".into()));
        }
        for (k, p) in self.pieces.iter().enumerate() {
            if !(p.duration > 0.0) {
                return Err(ProblemError::Validation(format!(
                    "piece {k} has nonpositive duration"
                )));
            }
            if p.w0 < 0.0 {
                return Err(ProblemError::Validation(format!("piece {k} has w0 < 0")));
            }
            if p.w.len() != problem.dims.m || p.alpha.len() != problem.dims.q {
                return Err(ProblemError::Validation(format!(
                    "piece {k} has wrong control dimensions"
                )));
            }
            if p.zeta.abs() > problem.rho + 1e-12 {
                return Err(ProblemError::Validation(format!(
                    "piece {k} has |zeta| > rho"
                )));
            }
            if !problem.control_cone.contains(&p.w)? {
                return Err(ProblemError::Validation(format!(
                    "piece {k} control w is outside the cone"
                )));
            }
            for (ai, (lo, hi)) in p.alpha.iter().zip(problem.a_box.iter()) {
                if *ai < lo - 1e-12 || *ai > hi + 1e-12 {
                    return Err(ProblemError::Validation(format!(
                        "piece {k} control a is outside the box"
                    )));
                }
            }
        }
        if self.essinf_rate(problem.norm) <= 0.0 {
            return Err(ProblemError::Validation(
                "essinf(w0 + |w|) must be positive".into(),
            ));
        }
        if self.canonical {
            for (k, p) in self.pieces.iter().enumerate() {
                if (p.w0 + problem.norm.eval(&p.w) - 1.0).abs() > 1e-9 {
                    return Err(ProblemError::Validation(format!(
                        "piece {k} violates the canonical constraint"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Costate data: an expression vector in `s`, a sampled backward path, or a
/// terminal value to integrate under a selection policy.
#[derive(Clone, Debug, PartialEq)]
pub enum CostatePath {
    Expr(Vec<Expr>),
    Sampled {
        s: Vec<f64>,
        p: Vec<Vec<f64>>,
        pdot: Vec<Vec<f64>>,
    },
    Terminal {
        p_end: Vec<f64>,
        policy: SelectionPolicy,
    },
}

/// Multiplier tuple `(p0, p, λ, π)` of the maximum principle.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers {
    pub p0: f64,
    pub lambda: f64,
    pub pi: f64,
    pub p: CostatePath,
}

impl Multipliers {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.lambda < 0.0 {
            return Err(ProblemError::Validation("lambda must be >= 0".into()));
        }
        if self.pi > 0.0 {
            return Err(ProblemError::Validation("pi must be <= 0".into()));
        }
        Ok(())
    }

    /// Costate value at `s` for expression paths; sampled paths interpolate.
    pub fn p_at(&self, s: f64, n: usize) -> Result<Vec<f64>, ProblemError> {
        match &self.p {
            CostatePath::Expr(components) => {
                let env = Env::default().with_s(s);
                let mut out = Vec::with_capacity(n);
                for c in components {
                    out.push(c.eval(&env)?);
                }
                Ok(out)
            }
            CostatePath::Sampled { s: grid, p, .. } => {
                let k = grid.partition_point(|&v| v <= s).min(grid.len() - 1);
                if k == 0 {
                    return Ok(p[0].clone());
                }
                let (a, b) = (k - 1, k);
                let span = grid[b] - grid[a];
                let t = if span > 0.0 {
                    ((s - grid[a]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                Ok(p[a]
                    .iter()
                    .zip(p[b].iter())
                    .map(|(x, y)| x + t * (y - x))
                    .collect())
            }
            CostatePath::Terminal { .. } => Err(ProblemError::Validation(
                "terminal costate not yet integrated".into(),
            )),
        }
    }
}

/// Rate profile for the strict-to-extended embedding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateProfile {
    /// Solve `w⁰ (1 + |u|) = 1` per piece, producing a canonical process.
    Uniform,
    /// Constant `w⁰ > 0` on every piece.
    Constant(f64),
}

/// Space-time embedding of a strict process: `w = u·w⁰`, time rescaled by
/// `dt/ds = w⁰`.
pub fn extend_process(
    problem: &StrictProblem,
    sp: &StrictProcess,
    rate: RateProfile,
) -> Result<ExtendedProcess, ProblemError> {
    if sp.pieces.is_empty() {
        return Err(ProblemError::Validation(
            "strict process has no pieces".into(),
        ));
    }
    let mut pieces = Vec::with_capacity(sp.pieces.len());
    for piece in &sp.pieces {
        let unorm = problem.norm.eval(&piece.u);
        if !unorm.is_finite() {
            return Err(ProblemError::Validation("unbounded |u| on a piece".into()));
        }
        let w0 = match rate {
            RateProfile::Uniform => 1.0 / (1.0 + unorm),
            RateProfile::Constant(w0) => {
                if !(w0 > 0.0) {
                    return Err(ProblemError::Validation("rate w0 must be positive".into()));
                }
                w0
            }
        };
        pieces.push(ExtPiece {
            duration: piece.duration / w0,
            w0,
            w: piece.u.iter().map(|ui| ui * w0).collect(),
            alpha: piece.a.clone(),
            zeta: 0.0,
        });
    }
    let mut ep = ExtendedProcess::from_pieces(pieces);
    if matches!(rate, RateProfile::Uniform) {
        ep.canonical = true;
    }
    Ok(ep)
}

/// Reparametrize onto the canonical slice `w⁰ + |w| = 1` (piecewise exact for
/// piecewise-constant controls). An already-canonical process is returned
/// grid-identical.
pub fn canonicalize(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
) -> Result<ExtendedProcess, ProblemError> {
    if ep.essinf_rate(problem.norm) <= 0.0 {
        return Err(ProblemError::Validation(
            "essinf(w0 + |w|) must be positive".into(),
        ));
    }
    let already = ep
        .pieces
        .iter()
        .all(|p| (p.w0 + problem.norm.eval(&p.w) - 1.0).abs() <= 1e-9);
    if already {
        let mut out = ep.clone();
        out.canonical = true;
        return Ok(out);
    }
    let pieces = ep
        .pieces
        .iter()
        .map(|p| {
            let c = p.w0 + problem.norm.eval(&p.w);
            ExtPiece {
                duration: p.duration * c,
                w0: p.w0 / c,
                w: p.w.iter().map(|wi| wi / c).collect(),
                alpha: p.alpha.clone(),
                zeta: p.zeta,
            }
        })
        .collect();
    let mut out = ExtendedProcess::from_pieces(pieces);
    out.canonical = true;
    out.samples = None;
    Ok(out)
}

/// Recession Lagrangian `l̂₁(x, w⁰, w) = lim_{r→w⁰} r·l₁(x, w/r)`.
pub fn recession_l1(
    problem: &StrictProblem,
    x: &[f64],
    w0: f64,
    w: &[f64],
) -> Result<f64, ProblemError> {
    if let Some(rec) = &problem.recession {
        let env = Env::state(x).with_w0(w0).with_u(w);
        return Ok(rec.eval(&env)?);
    }
    let Some(l1) = &problem.l1 else {
        return Ok(0.0);
    };
    let eval_at = |r: f64| -> Result<f64, ProblemError> {
        let scaled: Vec<f64> = w.iter().map(|wi| wi / r).collect();
        let env = Env::state(x).with_u(&scaled);
        Ok(r * l1.eval(&env)?)
    };
    if w0 > 0.0 {
        return eval_at(w0);
    }
    // Numeric limit over r = 1e-2 .. 1e-8 with a convergence check and
    // Aitken extrapolation.
    let mut values = Vec::new();
    let mut r = 1e-2;
    while r >= 1e-8 {
        values.push(eval_at(r)?);
        r /= 10.0;
    }
    let k = values.len();
    let (last, prev) = (values[k - 1], values[k - 2]);
    if (last - prev).abs() > 1e-6 * (1.0 + last.abs()) {
        return Err(ProblemError::RecessionDiverged(prev, last));
    }
    let d1 = values[k - 1] - values[k - 2];
    let d2 = values[k - 1] - 2.0 * values[k - 2] + values[k - 3];
    if d2.abs() > 1e-300 {
        let aitken = values[k - 1] - d1 * d1 / d2;
        if (aitken - last).abs() <= 1e-6 * (1.0 + last.abs()) {
            return Ok(aitken);
        }
    }
    Ok(last)
}

/// Extended Lagrangian rate `lᵉ = l₀(x,a)·w⁰ + l̂₁(x, w⁰, w)`.
pub fn lagrangian_rate(
    problem: &StrictProblem,
    y: &[f64],
    w0: f64,
    w: &[f64],
    a: &[f64],
) -> Result<f64, ProblemError> {
    let mut total = recession_l1(problem, y, w0, w)?;
    if let Some(l0) = &problem.l0 {
        if w0 != 0.0 {
            let env = Env::state(y).with_a(a);
            total += l0.eval(&env)? * w0;
        }
    }
    Ok(total)
}

/// Right-hand side of the extended system: `(ẏ⁰, ẏ, ẏˡ, β̇)`.
pub fn extended_dynamics(
    problem: &StrictProblem,
    y: &[f64],
    w0: f64,
    w: &[f64],
    a: &[f64],
) -> Result<(f64, Vec<f64>, f64, f64), ProblemError> {
    let n = problem.dims.n;
    let env = Env::state(y).with_a(a);
    let mut ydot = vec![0.0; n];
    if w0 != 0.0 {
        let f = problem.drift.eval(&env)?;
        for (yd, fi) in ydot.iter_mut().zip(f.iter()) {
            *yd += fi * w0;
        }
    }
    for (gi, wi) in problem.fields.iter().zip(w.iter()) {
        if *wi != 0.0 {
            let g = gi.eval(&env)?;
            for (yd, gv) in ydot.iter_mut().zip(g.iter()) {
                *yd += gv * wi;
            }
        }
    }
    let yl_dot = lagrangian_rate(problem, y, w0, w, a)?;
    Ok((w0, ydot, yl_dot, problem.norm.eval(w)))
}

/// The Hamiltonian `H = p₀w⁰ + p·Fᵉ − λ·lᵉ + π|w|`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian(
    problem: &StrictProblem,
    y: &[f64],
    p0: f64,
    p: &[f64],
    lambda: f64,
    pi: f64,
    w0: f64,
    w: &[f64],
    a: &[f64],
) -> Result<f64, ProblemError> {
    let (_, ydot, _, _) = extended_dynamics(problem, y, w0, w, a)?;
    let le = lagrangian_rate(problem, y, w0, w, a)?;
    let pf: f64 = p.iter().zip(ydot.iter()).map(|(pi_, yi)| pi_ * yi).sum();
    Ok(p0 * w0 + pf - lambda * le + pi * problem.norm.eval(w))
}

/// The state-dependent part of H as a one-component field in `x`, for Clarke
/// hulls: `x ↦ Σ p_i Fᵉ_i(x, w̄) − λ lᵉ(x, w̄)`. Controls enter as folded
/// constants; `a` stays a bound variable.
pub fn hamiltonian_state_field(
    problem: &StrictProblem,
    p: &[f64],
    lambda: f64,
    w0: f64,
    w: &[f64],
) -> Result<NonsmoothField, ProblemError> {
    let n = problem.dims.n;
    let mut terms: Vec<Expr> = Vec::new();
    for i in 0..n {
        if p[i] == 0.0 {
            continue;
        }
        if w0 != 0.0 {
            terms.push(problem.drift.components[i].clone().scaled(w0 * p[i]));
        }
        for (g, wi) in problem.fields.iter().zip(w.iter()) {
            if *wi != 0.0 {
                terms.push(g.components[i].clone().scaled(wi * p[i]));
            }
        }
    }
    if lambda != 0.0 {
        if let Some(l0) = &problem.l0 {
            if w0 != 0.0 {
                terms.push(l0.clone().scaled(-lambda * w0));
            }
        }
        if let Some(rec) = &problem.recession {
            let substituted = rec.substitute(&|v| match v {
                Var::W0 => Some(Expr::Const(w0)),
                Var::U(j) => Some(Expr::Const(w[j])),
                _ => None,
            });
            terms.push(substituted.scaled(-lambda));
        } else if let Some(l1) = &problem.l1 {
            if w0 > 0.0 {
                let substituted = l1.substitute(&|v| match v {
                    Var::U(j) => Some(Expr::Const(w[j] / w0)),
                    _ => None,
                });
                terms.push(substituted.scaled(-lambda * w0));
            } else if w.iter().any(|wi| *wi != 0.0) {
                return Err(ProblemError::NeedsExplicitRecession(
                    "impulsive piece with a Lagrangian: declare an explicit recession \
                     expression to differentiate it"
                        .into(),
                ));
            }
        }
    }
    let combined = terms
        .into_iter()
        .reduce(|acc, t| acc.add(t))
        .unwrap_or(Expr::Const(0.0));
    Ok(NonsmoothField::new(problem.dims, vec![combined]))
}
