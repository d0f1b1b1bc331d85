//! Trajectory integration and adjoint machinery.
//!
//! Forward integration is classical fixed-step RK4 within each constant
//! control piece, with exact restarts at breakpoints and optional exact
//! sample alignment at requested times. The dynamics are single-valued even
//! when the trajectory rides a kink surface; only the adjoint needs
//! selections, which a [`SelectionPolicy`] resolves per kink node. The
//! backward adjoint integrates `ṗ = −p·M(s) + λ·ω(s)` for the selected
//! `(M, ω) ∈ ∂ᶜ_y(Fᵉ, lᵉ)` and reports, per grid point, the distance of `ṗ`
//! from the full set `−∂ᶜ_y H`, which is zero exactly when the policy is a
//! valid selection.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genjac::{clarke_jacobian, GenJacConfig, GenJacError, Method};
use crate::nsfield::{Env, EvalError, NonsmoothField, Var};
use crate::problem::{
    extended_dynamics, hamiltonian_state_field, CostatePath, ExtendedProcess, Multipliers,
    ProblemError, StrictProblem, Trajectory,
};

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    GenJac(#[from] GenJacError),
    #[error("state blew up at s = {0} (|y| > {1:e})")]
    BlowUp(f64, f64),
    #[error("the process has no trajectory samples; run solve_forward first")]
    NoSamples,
    #[error("costate path kind not supported here: {0}")]
    UnsupportedCostate(&'static str),
}

/// Branch choice for one kink node: the sign of the abs argument, or the
/// midpoint of the two limit slopes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KinkSign {
    Neg,
    Pos,
    #[default]
    Mid,
}

impl KinkSign {
    pub fn slope(&self) -> f64 {
        match self {
            KinkSign::Neg => -1.0,
            KinkSign::Pos => 1.0,
            KinkSign::Mid => 0.0,
        }
    }
}

/// Which problem field a policy entry applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldRef {
    Drift,
    /// `g_i`, zero-based.
    G(usize),
    L0,
    Recession,
}

/// Selection policy for the adjoint inclusion: a sign choice per kink node
/// encountered along the trajectory, with a default for unlisted nodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelectionPolicy {
    pub default: KinkSign,
    pub overrides: BTreeMap<(FieldRef, usize), KinkSign>,
}

impl SelectionPolicy {
    pub fn uniform(sign: KinkSign) -> Self {
        SelectionPolicy {
            default: sign,
            ..Default::default()
        }
    }

    pub fn sign_for(&self, field: FieldRef, node: usize) -> KinkSign {
        self.overrides
            .get(&(field, node))
            .copied()
            .unwrap_or(self.default)
    }
}

/// Step-size and recording configuration.
#[derive(Clone, Debug)]
pub struct StepConfig {
    /// Step bound relative to the piece length.
    pub h_rel: f64,
    /// Absolute step bound.
    pub h_abs: f64,
    /// Blow-up threshold on the state norm.
    pub blowup: f64,
    /// Extra sample times that the stepper must hit exactly.
    pub record_at: Vec<f64>,
    /// Rough cap on recorded samples per piece (stride-thinned).
    pub samples_per_piece: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            h_rel: 1e-4,
            h_abs: 1e-3,
            blowup: 1e12,
            record_at: Vec::new(),
            samples_per_piece: 2048,
        }
    }
}

impl StepConfig {
    pub fn with_record_at(mut self, times: Vec<f64>) -> Self {
        self.record_at = times;
        self
    }

    fn step_for(&self, piece_len: f64) -> f64 {
        (self.h_rel * piece_len).min(self.h_abs)
    }
}

/// Carathéodory forward integration of the rescaled extended system
/// `d/ds (y⁰, y, yˡ, β) = (Fᵉ, lᵉ, |w|) · (1 + ζ)`.
pub fn solve_forward(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    y_init: Option<(f64, Vec<f64>, f64, f64)>,
    cfg: &StepConfig,
) -> Result<ExtendedProcess, IntegrateError> {
    let n = problem.dims.n;
    let (y0, x, yl, beta) = y_init.unwrap_or_else(|| (0.0, problem.x0.clone(), 0.0, 0.0));
    let mut state = vec![y0];
    state.extend_from_slice(&x);
    state.push(yl);
    state.push(beta);

    let mut tr = Trajectory::default();
    let mut record = |s: f64, z: &[f64]| {
        tr.s.push(s);
        tr.y0.push(z[0]);
        tr.y.push(z[1..1 + n].to_vec());
        tr.yl.push(z[1 + n]);
        tr.beta.push(z[2 + n]);
    };
    record(0.0, &state);

    let mut s = 0.0;
    for piece in &ep.pieces {
        let end = s + piece.duration;
        let rhs = |z: &[f64]| -> Result<Vec<f64>, IntegrateError> {
            let (y0d, yd, yld, bd) =
                extended_dynamics(problem, &z[1..1 + n], piece.w0, &piece.w, &piece.alpha)?;
            let rate = 1.0 + piece.zeta;
            let mut out = Vec::with_capacity(n + 3);
            out.push(y0d * rate);
            out.extend(yd.iter().map(|v| v * rate));
            out.push(yld * rate);
            out.push(bd * rate);
            Ok(out)
        };
        // Split the piece at requested sample times so they are hit exactly.
        let mut cuts: Vec<f64> = cfg
            .record_at
            .iter()
            .copied()
            .filter(|t| *t > s + 1e-15 && *t < end - 1e-15)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.push(end);
        let h_piece = cfg.step_for(piece.duration);
        let mut seg_start = s;
        for cut in cuts {
            let span = cut - seg_start;
            if span <= 0.0 {
                continue;
            }
            let steps = (span / h_piece).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            let stride = (steps / cfg.samples_per_piece).max(1);
            for k in 0..steps {
                state = rk4_step(&state, h, &rhs)?;
                let here = seg_start + (k + 1) as f64 * h;
                let norm: f64 = state.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !norm.is_finite() || norm > cfg.blowup {
                    return Err(IntegrateError::BlowUp(here, cfg.blowup));
                }
                if (k + 1) % stride == 0 || k + 1 == steps {
                    record(here, &state);
                }
            }
            seg_start = cut;
        }
        s = end;
    }
    let mut out = ep.clone();
    out.samples = Some(tr);
    Ok(out)
}

fn rk4_step(
    z: &[f64],
    h: f64,
    rhs: &impl Fn(&[f64]) -> Result<Vec<f64>, IntegrateError>,
) -> Result<Vec<f64>, IntegrateError> {
    let add = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> {
        a.iter().zip(b.iter()).map(|(x, y)| x + c * y).collect()
    };
    let k1 = rhs(z)?;
    let k2 = rhs(&add(z, &k1, h / 2.0))?;
    let k3 = rhs(&add(z, &k2, h / 2.0))?;
    let k4 = rhs(&add(z, &k3, h))?;
    Ok(z.iter()
        .enumerate()
        .map(|(i, zi)| zi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Fundamental matrix solution of `V̇ = M(s)·V`, `V(s1) = I`, returning
/// `V(s2)`.
pub fn fundamental_matrix(
    m: &dyn Fn(f64) -> DMatrix<f64>,
    s1: f64,
    s2: f64,
    h: f64,
) -> DMatrix<f64> {
    let n = m(s1).nrows();
    let mut v = DMatrix::<f64>::identity(n, n);
    let span = s2 - s1;
    if span == 0.0 {
        return v;
    }
    let steps = (span.abs() / h).ceil().max(1.0) as usize;
    let dt = span / steps as f64;
    let mut s = s1;
    for _ in 0..steps {
        let k1 = m(s) * &v;
        let k2 = m(s + dt / 2.0) * (&v + &k1 * (dt / 2.0));
        let k3 = m(s + dt / 2.0) * (&v + &k2 * (dt / 2.0));
        let k4 = m(s + dt) * (&v + &k3 * dt);
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        s += dt;
    }
    v
}

/// Policy-selected Jacobian `M = ∂_y Fᵉ` of the extended dynamics' state
/// block at a point of the trajectory.
pub fn selected_dynamics_jacobian(
    problem: &StrictProblem,
    y: &[f64],
    w0: f64,
    w: &[f64],
    a: &[f64],
    policy: &SelectionPolicy,
    kappa: f64,
) -> Result<DMatrix<f64>, IntegrateError> {
    let n = problem.dims.n;
    let wrt: Vec<Var> = (0..n).map(Var::X).collect();
    let env = Env::state(y).with_a(a);
    let mut total = DMatrix::<f64>::zeros(n, n);
    let mut add_field =
        |field: &NonsmoothField, fref: FieldRef, weight: f64| -> Result<(), IntegrateError> {
            if weight == 0.0 {
                return Ok(());
            }
            let overrides = policy_overrides(field, &env, &wrt, kappa, policy, fref)?;
            let jac = field.jacobian_with_signs(&env, &wrt, &|id| overrides.get(&id).copied())?;
            total += jac * weight;
            Ok(())
        };
    add_field(&problem.drift, FieldRef::Drift, w0)?;
    for (i, g) in problem.fields.iter().enumerate() {
        add_field(g, FieldRef::G(i), w[i])?;
    }
    Ok(total)
}

/// Policy-selected gradient `ω = ∂_y lᵉ` (a row vector), or zeros when the
/// problem has no Lagrangian.
pub fn selected_lagrangian_gradient(
    problem: &StrictProblem,
    y: &[f64],
    w0: f64,
    w: &[f64],
    a: &[f64],
    policy: &SelectionPolicy,
    kappa: f64,
) -> Result<Vec<f64>, IntegrateError> {
    let n = problem.dims.n;
    let wrt: Vec<Var> = (0..n).map(Var::X).collect();
    let env = Env::state(y).with_a(a).with_w0(w0).with_u(w);
    let mut total = vec![0.0; n];
    if let Some(l0) = &problem.l0 {
        if w0 != 0.0 {
            let field = NonsmoothField::new(problem.dims, vec![l0.clone()]);
            let overrides = policy_overrides(&field, &env, &wrt, kappa, policy, FieldRef::L0)?;
            let jac = field.jacobian_with_signs(&env, &wrt, &|id| overrides.get(&id).copied())?;
            for (t, j) in total.iter_mut().zip(jac.row(0).iter()) {
                *t += w0 * j;
            }
        }
    }
    // Recession part: explicit expression, or l1 substitution when w0 > 0.
    let rec_field = if let Some(rec) = &problem.recession {
        Some(NonsmoothField::new(problem.dims, vec![rec.clone()]))
    } else if let Some(l1) = &problem.l1 {
        if w0 > 0.0 {
            let subs = l1.substitute(&|v| match v {
                Var::U(j) => Some(crate::nsfield::Expr::Const(w[j] / w0)),
                _ => None,
            });
            Some(NonsmoothField::new(problem.dims, vec![subs.scaled(w0)]))
        } else if w.iter().any(|wi| *wi != 0.0) {
            return Err(ProblemError::NeedsExplicitRecession(
                "impulsive piece with a Lagrangian needs an explicit recession".into(),
            )
            .into());
        } else {
            None
        }
    } else {
        None
    };
    if let Some(field) = rec_field {
        let overrides = policy_overrides(&field, &env, &wrt, kappa, policy, FieldRef::Recession)?;
        let jac = field.jacobian_with_signs(&env, &wrt, &|id| overrides.get(&id).copied())?;
        for (t, j) in total.iter_mut().zip(jac.row(0).iter()) {
            *t += j;
        }
    }
    Ok(total)
}

fn policy_overrides(
    field: &NonsmoothField,
    env: &Env,
    wrt: &[Var],
    kappa: f64,
    policy: &SelectionPolicy,
    fref: FieldRef,
) -> Result<BTreeMap<usize, f64>, EvalError> {
    let sites = field.kink_sites(env, wrt, kappa)?;
    Ok(sites
        .into_iter()
        .map(|site| (site.id, policy.sign_for(fref, site.id).slope()))
        .collect())
}

/// The `(1+n+1)×(1+n+1)` transport matrix from the tangent space at `s_k` to
/// the one at the end time: unit time corner, `E = e^{∫M}` state block, and
/// the cost row `[m_t, m_x·E + ∫ ω·e^{∫_s^{s_k} M} ds, 1]`.
#[derive(Clone, Debug)]
pub struct TransportMatrix {
    pub matrix: DMatrix<f64>,
}

pub fn transport_matrix(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    policy: &SelectionPolicy,
    s_k: f64,
    m_t: f64,
    m_x: &[f64],
    cfg: &StepConfig,
    kappa: f64,
) -> Result<TransportMatrix, IntegrateError> {
    let n = problem.dims.n;
    let tr = ep.samples.as_ref().ok_or(IntegrateError::NoSamples)?;
    let s_end = ep.s_end();
    // Joint forward integration of the state y and the matrices
    // V (Ė = MV), W = V⁻¹ (Ẇ = −WM), and the row integral İ = ω·W.
    let (_, y_start, _, _) = tr.state_at(s_k);
    let mut y = y_start;
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut w_inv = DMatrix::<f64>::identity(n, n);
    let mut row = vec![0.0; n];

    let mut s = s_k;
    for (idx, piece) in ep.pieces.iter().enumerate() {
        let piece_start: f64 = ep.pieces[..idx].iter().map(|p| p.duration).sum();
        let piece_end = piece_start + piece.duration;
        if piece_end <= s_k + 1e-15 {
            continue;
        }
        let from = s.max(piece_start);
        let to = piece_end.min(s_end);
        if to <= from {
            continue;
        }
        let h = cfg.step_for(piece.duration);
        let steps = ((to - from) / h).ceil().max(1.0) as usize;
        let dt = (to - from) / steps as f64;
        for _ in 0..steps {
            // One RK4 step of the coupled system; M and ω are evaluated at
            // the stage states.
            let eval =
                |y_: &Vec<f64>| -> Result<(Vec<f64>, DMatrix<f64>, Vec<f64>), IntegrateError> {
                    let (_, ydot, _, _) =
                        extended_dynamics(problem, y_, piece.w0, &piece.w, &piece.alpha)?;
                    let rate = 1.0 + piece.zeta;
                    let m = selected_dynamics_jacobian(
                        problem,
                        y_,
                        piece.w0,
                        &piece.w,
                        &piece.alpha,
                        policy,
                        kappa,
                    )? * rate;
                    let om = selected_lagrangian_gradient(
                        problem,
                        y_,
                        piece.w0,
                        &piece.w,
                        &piece.alpha,
                        policy,
                        kappa,
                    )?
                    .iter()
                    .map(|x| x * rate)
                    .collect();
                    Ok((ydot.iter().map(|x| x * rate).collect(), m, om))
                };
            let step = |y0: &Vec<f64>,
                        v0: &DMatrix<f64>,
                        w0m: &DMatrix<f64>,
                        r0: &Vec<f64>,
                        k: &(Vec<f64>, DMatrix<f64>, Vec<f64>),
                        c: f64| {
                let (ydot, m, om) = k;
                let y1: Vec<f64> = y0.iter().zip(ydot.iter()).map(|(a, b)| a + c * b).collect();
                let v1 = v0 + m * v0 * c;
                let w1 = w0m - w0m * m * c;
                let r1: Vec<f64> = {
                    let om_w: Vec<f64> = (0..n)
                        .map(|j| (0..n).map(|i| om[i] * w0m[(i, j)]).sum::<f64>())
                        .collect();
                    r0.iter().zip(om_w.iter()).map(|(a, b)| a + c * b).collect()
                };
                (y1, v1, w1, r1)
            };
            let k1 = eval(&y)?;
            let (y2, v2, w2, _r2) = step(&y, &v, &w_inv, &row, &k1, dt / 2.0);
            let k2 = eval(&y2)?;
            let (y3, v3, w3, _r3) = step(&y, &v, &w_inv, &row, &k2, dt / 2.0);
            let k3 = eval(&y3)?;
            let (y4, v4, w4, _r4) = step(&y, &v, &w_inv, &row, &k3, dt);
            let k4 = eval(&y4)?;
            // Combine (classic RK4 on each component).
            let combine_vec =
                |base: &Vec<f64>, a: &Vec<f64>, b: &Vec<f64>, c: &Vec<f64>, d: &Vec<f64>| {
                    base.iter()
                        .enumerate()
                        .map(|(i, z)| z + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                        .collect::<Vec<f64>>()
                };
            // Derivatives of V at stages: M_stage * V_stage.
            let dv1 = &k1.1 * &v;
            let dv2 = &k2.1 * &v2;
            let dv3 = &k3.1 * &v3;
            let dv4 = &k4.1 * &v4;
            let dw1 = -(&w_inv) * &k1.1;
            let dw2 = -(&w2) * &k2.1;
            let dw3 = -(&w3) * &k3.1;
            let dw4 = -(&w4) * &k4.1;
            let rowdot = |om: &Vec<f64>, wm: &DMatrix<f64>| -> Vec<f64> {
                (0..n)
                    .map(|j| (0..n).map(|i| om[i] * wm[(i, j)]).sum::<f64>())
                    .collect()
            };
            let dr1 = rowdot(&k1.2, &w_inv);
            let dr2 = rowdot(&k2.2, &w2);
            let dr3 = rowdot(&k3.2, &w3);
            let dr4 = rowdot(&k4.2, &w4);

            y = combine_vec(&y, &k1.0, &k2.0, &k3.0, &k4.0);
            v = &v + (dv1 + dv2 * 2.0 + dv3 * 2.0 + dv4) * (dt / 6.0);
            w_inv = &w_inv + (dw1 + dw2 * 2.0 + dw3 * 2.0 + dw4) * (dt / 6.0);
            row = combine_vec(&row, &dr1, &dr2, &dr3, &dr4);
        }
        s = to;
    }

    // Assemble the block matrix.
    let dim = 1 + n + 1;
    let mut out = DMatrix::<f64>::zeros(dim, dim);
    out[(0, 0)] = 1.0;
    for r in 0..n {
        for c in 0..n {
            out[(1 + r, 1 + c)] = v[(r, c)];
        }
    }
    out[(dim - 1, 0)] = m_t;
    for c in 0..n {
        let mx_e: f64 = (0..n).map(|i| m_x[i] * v[(i, c)]).sum();
        out[(dim - 1, 1 + c)] = mx_e + row[c];
    }
    out[(dim - 1, dim - 1)] = 1.0;
    Ok(TransportMatrix { matrix: out })
}

/// Result of a backward adjoint integration.
#[derive(Clone, Debug)]
pub struct AdjointSolution {
    pub multipliers: Multipliers,
    /// Per-sample distance of the selected `ṗ(s)` from the full set
    /// `−∂ᶜ_y H`; zero for any policy that is a valid selection.
    pub residuals: Vec<(f64, f64)>,
    pub max_residual: f64,
}

/// Integrate the adjoint `ṗ = −p·M(s) + λ·ω(s)` backward from `p(S̄)` under
/// the policy's selection, re-integrating the state backward alongside.
#[allow(clippy::too_many_arguments)]
pub fn solve_adjoint(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    p0: f64,
    p_end: Vec<f64>,
    lambda: f64,
    pi: f64,
    policy: &SelectionPolicy,
    cfg: &StepConfig,
    residual_grid: &[f64],
    genjac_cfg: &GenJacConfig,
) -> Result<AdjointSolution, IntegrateError> {
    let n = problem.dims.n;
    let tr = ep.samples.as_ref().ok_or(IntegrateError::NoSamples)?;
    let s_end = ep.s_end();
    let (_, y_end, _, _) = tr.endpoint();

    // Backward sweep, recording (s, y, p, pdot) at piece boundaries, strided
    // steps, and every requested grid point (hit exactly).
    let mut rec_s: Vec<f64> = Vec::new();
    let mut rec_p: Vec<Vec<f64>> = Vec::new();
    let mut rec_pdot: Vec<Vec<f64>> = Vec::new();
    let mut rec_y: Vec<Vec<f64>> = Vec::new();

    let mut y = y_end.to_vec();
    let mut p = p_end.clone();

    let pdot_at = |y_: &[f64],
                   p_: &[f64],
                   piece: &crate::problem::ExtPiece|
     -> Result<Vec<f64>, IntegrateError> {
        let rate = 1.0 + piece.zeta;
        let m = selected_dynamics_jacobian(
            problem,
            y_,
            piece.w0,
            &piece.w,
            &piece.alpha,
            policy,
            genjac_cfg.kappa,
        )? * rate;
        let om = selected_lagrangian_gradient(
            problem,
            y_,
            piece.w0,
            &piece.w,
            &piece.alpha,
            policy,
            genjac_cfg.kappa,
        )?;
        Ok((0..n)
            .map(|j| {
                let pm: f64 = (0..n).map(|i| p_[i] * m[(i, j)]).sum();
                -pm + lambda * om[j] * rate
            })
            .collect())
    };

    {
        let last = ep.pieces.last().expect("process has no pieces");
        let pd = pdot_at(&y, &p, last)?;
        rec_s.push(s_end);
        rec_p.push(p.clone());
        rec_pdot.push(pd);
        rec_y.push(y.clone());
    }

    let boundaries = ep.breakpoints();
    for (idx, piece) in ep.pieces.iter().enumerate().rev() {
        let start = boundaries[idx];
        let end = boundaries[idx + 1];
        let mut cuts: Vec<f64> = residual_grid
            .iter()
            .copied()
            .filter(|t| *t > start + 1e-15 && *t < end - 1e-15)
            .collect();
        cuts.sort_by(|a, b| b.total_cmp(a)); // descending
        cuts.push(start);
        let h_piece = cfg.step_for(piece.duration);
        let mut seg_from = end;
        for cut in cuts {
            let span = seg_from - cut;
            if span <= 0.0 {
                continue;
            }
            let steps = (span / h_piece).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            let stride = (steps / cfg.samples_per_piece).max(1);
            for k in 0..steps {
                // RK4 on the joint (y, p) system, backward in s.
                let rhs = |yz: &Vec<f64>,
                           pz: &Vec<f64>|
                 -> Result<(Vec<f64>, Vec<f64>), IntegrateError> {
                    let (_, ydot, _, _) =
                        extended_dynamics(problem, yz, piece.w0, &piece.w, &piece.alpha)?;
                    let rate = 1.0 + piece.zeta;
                    let ydot: Vec<f64> = ydot.iter().map(|v| v * rate).collect();
                    let pdot = pdot_at(yz, pz, piece)?;
                    Ok((ydot, pdot))
                };
                let minus = -h;
                let (k1y, k1p) = rhs(&y, &p)?;
                let at = |base: &Vec<f64>, k: &Vec<f64>, c: f64| -> Vec<f64> {
                    base.iter().zip(k.iter()).map(|(a, b)| a + c * b).collect()
                };
                let (k2y, k2p) = rhs(&at(&y, &k1y, minus / 2.0), &at(&p, &k1p, minus / 2.0))?;
                let (k3y, k3p) = rhs(&at(&y, &k2y, minus / 2.0), &at(&p, &k2p, minus / 2.0))?;
                let (k4y, k4p) = rhs(&at(&y, &k3y, minus), &at(&p, &k3p, minus))?;
                let combine =
                    |base: &Vec<f64>, a: &Vec<f64>, b: &Vec<f64>, c: &Vec<f64>, d: &Vec<f64>| {
                        base.iter()
                            .enumerate()
                            .map(|(i, z)| z + minus / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                            .collect::<Vec<f64>>()
                    };
                y = combine(&y, &k1y, &k2y, &k3y, &k4y);
                p = combine(&p, &k1p, &k2p, &k3p, &k4p);
                let here = seg_from - (k + 1) as f64 * h;
                let pnorm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !pnorm.is_finite() || pnorm > cfg.blowup {
                    return Err(IntegrateError::BlowUp(here, cfg.blowup));
                }
                if (k + 1) % stride == 0 || k + 1 == steps {
                    let pd = pdot_at(&y, &p, piece)?;
                    rec_s.push(here);
                    rec_p.push(p.clone());
                    rec_pdot.push(pd);
                    rec_y.push(y.clone());
                }
            }
            seg_from = cut;
        }
    }

    // Flip into ascending order.
    rec_s.reverse();
    rec_p.reverse();
    rec_pdot.reverse();
    rec_y.reverse();

    // Residuals at the requested grid: distance of the selected ṗ from the
    // full hull −∂ᶜ_y H.
    let mut residuals = Vec::with_capacity(residual_grid.len());
    let mut max_residual = 0.0f64;
    for &s in residual_grid {
        let k = nearest_index(&rec_s, s);
        let piece = ep.piece_at(s);
        let hull = state_hamiltonian_hull(
            problem,
            &rec_y[k],
            &rec_p[k],
            lambda,
            piece.w0,
            &piece.w,
            &piece.alpha,
            genjac_cfg,
        )?;
        let minus_pdot: Vec<f64> = rec_pdot[k]
            .iter()
            .map(|v| -v / (1.0 + piece.zeta))
            .collect();
        let r = hull.distance(&minus_pdot);
        max_residual = max_residual.max(r);
        residuals.push((s, r));
    }

    let multipliers = Multipliers {
        p0,
        lambda,
        pi,
        p: CostatePath::Sampled {
            s: rec_s,
            p: rec_p,
            pdot: rec_pdot,
        },
    };
    Ok(AdjointSolution {
        multipliers,
        residuals,
        max_residual,
    })
}

/// Clarke hull of `x ↦ ∂_x H` at a trajectory point (the gradient rows of
/// the combined state part of H, by sign-pattern enumeration).
#[allow(clippy::too_many_arguments)]
pub fn state_hamiltonian_hull(
    problem: &StrictProblem,
    y: &[f64],
    p: &[f64],
    lambda: f64,
    w0: f64,
    w: &[f64],
    a: &[f64],
    genjac_cfg: &GenJacConfig,
) -> Result<crate::genjac::ConvexHullSet, IntegrateError> {
    let field = hamiltonian_state_field(problem, p, lambda, w0, w)?;
    let wrt: Vec<Var> = (0..problem.dims.n).map(Var::X).collect();
    let env = Env::state(y).with_a(a);
    Ok(clarke_jacobian(
        &field,
        &env,
        &wrt,
        Method::Enumeration,
        genjac_cfg,
    )?)
}

fn nearest_index(sorted: &[f64], s: f64) -> usize {
    let k = sorted.partition_point(|&v| v < s);
    if k == 0 {
        return 0;
    }
    if k >= sorted.len() {
        return sorted.len() - 1;
    }
    if (sorted[k] - s).abs() < (sorted[k - 1] - s).abs() {
        k
    } else {
        k - 1
    }
}

/// Verify the adjoint inclusion for a costate given in closed form: the
/// maximum over the grid of `dist(−dp/ds, ∂ᶜ_x H(s))`, with the offending
/// grid point.
pub struct MembershipReport {
    pub max_residual: f64,
    pub argmax_s: f64,
    pub samples: Vec<(f64, f64)>,
}

pub fn verify_adjoint_membership(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    mult: &Multipliers,
    grid: &[f64],
    genjac_cfg: &GenJacConfig,
) -> Result<MembershipReport, IntegrateError> {
    let n = problem.dims.n;
    let tr = ep.samples.as_ref().ok_or(IntegrateError::NoSamples)?;
    let mut samples = Vec::with_capacity(grid.len());
    let mut max_residual = f64::NEG_INFINITY;
    let mut argmax_s = grid.first().copied().unwrap_or(0.0);
    for &s in grid {
        let (p, minus_pdot): (Vec<f64>, Vec<f64>) = match &mult.p {
            CostatePath::Expr(components) => {
                let env = Env::default().with_s(s);
                let mut p = Vec::with_capacity(n);
                let mut md = Vec::with_capacity(n);
                for c in components {
                    let (v, d) = c.eval_dual(&env, Var::S, &|_| None)?;
                    p.push(v);
                    md.push(-d);
                }
                (p, md)
            }
            CostatePath::Sampled { s: grid_s, p, pdot } => {
                let k = nearest_index(grid_s, s);
                (p[k].clone(), pdot[k].iter().map(|v| -v).collect())
            }
            CostatePath::Terminal { .. } => {
                return Err(IntegrateError::UnsupportedCostate(
                    "terminal costate: integrate with solve_adjoint first",
                ))
            }
        };
        let piece = ep.piece_at(s);
        let (_, y, _, _) = tr.state_at(s);
        let hull = state_hamiltonian_hull(
            problem,
            &y,
            &p,
            mult.lambda,
            piece.w0,
            &piece.w,
            &piece.alpha,
            genjac_cfg,
        )?;
        let r = hull.distance(&minus_pdot);
        if r > max_residual {
            max_residual = r;
            argmax_s = s;
        }
        samples.push((s, r));
    }
    Ok(MembershipReport {
        max_residual: max_residual.max(0.0),
        argmax_s,
        samples,
    })
}

/// Midpoint grid with `n` cells over `[0, s_end]`; never touches the ends,
/// matching the almost-everywhere reading of the pointwise conditions.
pub fn midpoint_grid(s_end: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| (j as f64 + 0.5) * s_end / n as f64)
        .collect()
}
