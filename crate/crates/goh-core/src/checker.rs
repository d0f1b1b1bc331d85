//! The five-condition certificate checker and the multiplier feasibility
//! search.
//!
//! Conditions: i) nontriviality `(p₀, p, λ) ≠ 0`; ii) the adjoint
//! differential inclusion `ṗ ∈ −∂ᶜ_x H`; iii) non-transversality
//! `(p₀, p(S̄)) ∈ −λ∂ᶜΨ − ∪𝒯^⊥`; iv) Hamiltonian maximization, tested on
//! the slice `w⁰ + |w| = 1` justified by the degree-1 positive homogeneity
//! of H in `(w⁰, w)`; v) the zero-membership of `p(s)·[g_i, g_j]_set(ȳ(s))`.
//! Pointwise conditions are evaluated on midpoint grids with a
//! measure-fraction threshold, matching their almost-everywhere statements.
//! Reports are deterministic given inputs and seed.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::cones::{ConeError, Multicone};
use crate::exec;
use crate::genjac::{
    clarke_jacobian, covector_interval, goh_zero_membership, setvalued_bracket, GenJacConfig,
    GenJacError, GohVerdict, Interval, Method,
};
use crate::integrate::{
    midpoint_grid, solve_adjoint, solve_forward, verify_adjoint_membership, FieldRef,
    IntegrateError, KinkSign, SelectionPolicy, StepConfig,
};
use crate::lp::{self, LinearProgram, LpOutcome, Rel};
use crate::nsfield::{Env, EvalError, Var};
use crate::problem::{
    hamiltonian, recession_l1, CostatePath, ExtendedProcess, Multipliers, ProblemError,
    StrictProblem,
};
use crate::rng;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    GenJac(#[from] GenJacError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("candidate infeasible: {0}")]
    Infeasible(String),
    #[error("search-space cap exceeded: {0}")]
    SearchCap(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Marginal,
    Skipped,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass | Verdict::Marginal)
    }
}

/// Checker configuration; every tolerance of the acceptance gate is pinned
/// here.
#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub seed: u64,
    /// Midpoint-grid cells for the pointwise conditions.
    pub grid_n: usize,
    pub tol_triv: f64,
    pub tol_adjoint: f64,
    pub tol_transversality: f64,
    pub tol_hamiltonian: f64,
    pub tol_goh: f64,
    /// Fraction of grid points allowed to fail an a.e. condition.
    pub tol_measure: f64,
    /// Quasi-random slice samples for condition iv.
    pub slice_samples: usize,
    /// Mesh points per bounded-control dimension.
    pub a_grid: usize,
    pub bracket_method: Method,
    /// Use the problem's variant fields for bracket computations.
    pub variant: bool,
    pub feasibility_tol: f64,
    pub step: StepConfig,
    pub genjac: GenJacConfig,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            seed: 0,
            grid_n: 200,
            tol_triv: 1e-9,
            tol_adjoint: 1e-6,
            tol_transversality: 1e-6,
            tol_hamiltonian: 1e-6,
            tol_goh: 1e-6,
            tol_measure: 0.01,
            slice_samples: 200,
            a_grid: 5,
            bracket_method: Method::Enumeration,
            variant: false,
            feasibility_tol: 1e-6,
            step: StepConfig::default(),
            genjac: GenJacConfig::default(),
        }
    }
}

impl CheckConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.genjac.seed = seed;
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NontrivialityReport {
    pub verdict: Verdict,
    /// `|p0| + sup_s |p(s)| + λ`.
    pub magnitude: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdjointReport {
    pub verdict: Verdict,
    pub max_residual: f64,
    pub argmax_s: f64,
    pub pass_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransversalityWitness {
    pub cone_index: usize,
    pub m_t: f64,
    pub m_x: Vec<f64>,
    pub xi: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransversalityReport {
    pub verdict: Verdict,
    pub best_residual: f64,
    pub per_cone_residual: Vec<f64>,
    pub witness: Option<TransversalityWitness>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HamiltonianReport {
    pub verdict: Verdict,
    /// Worst of (slice max, |H(candidate)|) over the grid.
    pub worst_gap: f64,
    pub argmax_s: f64,
    pub argmax_control: (f64, Vec<f64>),
    pub candidate_h_at_argmax: f64,
    pub pass_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GohEntry {
    pub s: f64,
    pub lo: f64,
    pub hi: f64,
    pub verdict: GohVerdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct GohPairReport {
    pub i: usize,
    pub j: usize,
    pub pass: bool,
    pub pass_fraction: f64,
    pub entries: Vec<GohEntry>,
    /// Intervals from the other field set (primary vs variant), recorded for
    /// comparison when the problem declares both.
    pub alternate_label: Option<String>,
    pub alternate_entries: Option<Vec<GohEntry>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GohReport {
    pub verdict: Verdict,
    pub skipped_reason: Option<String>,
    pub pairs: Vec<GohPairReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub grid_n: usize,
    pub variant: bool,
    pub bracket_method: Method,
    pub step_h_rel: f64,
    pub step_h_abs: f64,
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Conditions {
    pub nontriviality: NontrivialityReport,
    pub adjoint: AdjointReport,
    pub transversality: TransversalityReport,
    pub hamiltonian_max: HamiltonianReport,
    pub goh: GohReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub report_version: u32,
    pub overall: Verdict,
    pub endpoint: EndpointSummary,
    pub conditions: Conditions,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Serialize)]
pub struct EndpointSummary {
    pub s_end: f64,
    pub y0: f64,
    pub y: Vec<f64>,
    pub running_cost: f64,
    pub final_cost: f64,
    pub total_cost: f64,
    pub beta: f64,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        matches!(self.overall, Verdict::Pass)
    }
}

fn provenance(cfg: &CheckConfig) -> Provenance {
    let mut tolerances = BTreeMap::new();
    tolerances.insert("triviality".into(), cfg.tol_triv);
    tolerances.insert("adjoint".into(), cfg.tol_adjoint);
    tolerances.insert("transversality".into(), cfg.tol_transversality);
    tolerances.insert("hamiltonian".into(), cfg.tol_hamiltonian);
    tolerances.insert("goh".into(), cfg.tol_goh);
    tolerances.insert("measure".into(), cfg.tol_measure);
    tolerances.insert("feasibility".into(), cfg.feasibility_tol);
    tolerances.insert("kink".into(), cfg.genjac.kappa);
    Provenance {
        seed: cfg.seed,
        grid_n: cfg.grid_n,
        variant: cfg.variant,
        bracket_method: cfg.bracket_method,
        step_h_rel: cfg.step.h_rel,
        step_h_abs: cfg.step.h_abs,
        tolerances,
    }
}

/// Condition i: `(p₀, p, λ) ≠ 0` at the triviality tolerance.
pub fn check_nontriviality(
    problem: &StrictProblem,
    mult: &Multipliers,
    grid: &[f64],
    tol: f64,
) -> Result<NontrivialityReport, CheckError> {
    let n = problem.dims.n;
    let mut sup = 0.0f64;
    for &s in grid {
        let p = mult.p_at(s, n)?;
        let norm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        sup = sup.max(norm);
    }
    let magnitude = mult.p0.abs() + sup + mult.lambda;
    Ok(NontrivialityReport {
        verdict: if magnitude > tol {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        magnitude,
    })
}

/// Condition iii: for some cone T of the multicone, feasibility of
/// `(p₀, p(S̄)) = −λ(m_t, m_x) − ξ` with `(m_t, m_x)` in the Clarke hull of Ψ
/// and `ξ ∈ T^⊥`, at residual tolerance (exact rational LP minimizing the
/// sup-norm residual).
pub fn check_transversality(
    problem: &StrictProblem,
    endpoint_t: f64,
    endpoint_y: &[f64],
    mult: &Multipliers,
    multicone: &Multicone,
    cfg: &CheckConfig,
) -> Result<TransversalityReport, CheckError> {
    let n = problem.dims.n;
    let dim = 1 + n;
    let p_end = mult.p_at_end()?;
    let mut target = vec![mult.p0];
    target.extend_from_slice(&p_end);

    // Clarke hull of Ψ with respect to (t, x) at the endpoint.
    let mut wrt: Vec<Var> = vec![Var::T];
    wrt.extend((0..n).map(Var::X));
    let psi_field = crate::nsfield::NonsmoothField::new(problem.dims, vec![problem.psi.clone()]);
    let env = Env::state(endpoint_y).with_t(endpoint_t);
    let psi_hull = clarke_jacobian(&psi_field, &env, &wrt, Method::Enumeration, &cfg.genjac)?;

    let mut best: Option<(usize, f64, TransversalityWitness)> = None;
    let mut per_cone = Vec::with_capacity(multicone.cones.len());
    for (ci, cone) in multicone.cones.iter().enumerate() {
        let polar = cone.polar();
        let gens = polar.generators();
        let nv = psi_hull.vertices.len();
        let nq = gens.rays.len();
        let nl = gens.lines.len();
        // Variables: θ (nv, ≥0, Σθ = 1), c (nq, ≥ 0), d (nl, free), t.
        let nvars = nv + nq + nl + 1;
        let t_idx = nvars - 1;
        let mut prog = LinearProgram::new(nvars);
        for l in 0..nl {
            prog.mark_free(nv + nq + l);
        }
        let mut obj = vec![lp::rat(0.0); nvars];
        obj[t_idx] = lp::rat(1.0);
        prog.set_objective(obj);
        let mut simplex_row = vec![lp::rat(0.0); nvars];
        for slot in simplex_row.iter_mut().take(nv) {
            *slot = lp::rat(1.0);
        }
        prog.add(simplex_row, Rel::Eq, lp::rat(1.0));
        for coord in 0..dim {
            // target + λ·Σθv + Σc q + Σd m ∈ [−t, t].
            let mut coeffs = vec![lp::rat(0.0); nvars];
            for (vi, vert) in psi_hull.vertices.iter().enumerate() {
                coeffs[vi] = lp::rat(mult.lambda * vert[coord]);
            }
            for (qi, q) in gens.rays.iter().enumerate() {
                coeffs[nv + qi] = lp::rat(q[coord]);
            }
            for (li, m) in gens.lines.iter().enumerate() {
                coeffs[nv + nq + li] = lp::rat(m[coord]);
            }
            let mut upper = coeffs.clone();
            upper[t_idx] = lp::rat(-1.0);
            prog.add(upper, Rel::Le, lp::rat(-target[coord]));
            let mut lower = coeffs;
            lower[t_idx] = lp::rat(1.0);
            prog.add(lower, Rel::Ge, lp::rat(-target[coord]));
        }
        let residual = match lp::solve(&prog) {
            LpOutcome::Optimal { x, objective } => {
                let res = lp::rat_to_f64(&objective);
                let theta: Vec<f64> = x[..nv].iter().map(lp::rat_to_f64).collect();
                let c: Vec<f64> = x[nv..nv + nq].iter().map(lp::rat_to_f64).collect();
                let d: Vec<f64> = x[nv + nq..nv + nq + nl]
                    .iter()
                    .map(lp::rat_to_f64)
                    .collect();
                let mut m_vec = vec![0.0; dim];
                for (t, vert) in theta.iter().zip(psi_hull.vertices.iter()) {
                    for (mv, v) in m_vec.iter_mut().zip(vert.iter()) {
                        *mv += t * v;
                    }
                }
                let mut xi = vec![0.0; dim];
                for (cv, q) in c.iter().zip(gens.rays.iter()) {
                    for (x_, qv) in xi.iter_mut().zip(q.iter()) {
                        *x_ += cv * qv;
                    }
                }
                for (dv, m) in d.iter().zip(gens.lines.iter()) {
                    for (x_, mv) in xi.iter_mut().zip(m.iter()) {
                        *x_ += dv * mv;
                    }
                }
                let witness = TransversalityWitness {
                    cone_index: ci,
                    m_t: m_vec[0],
                    m_x: m_vec[1..].to_vec(),
                    xi,
                };
                if best.as_ref().map_or(true, |(_, b, _)| res < *b) {
                    best = Some((ci, res, witness));
                }
                res
            }
            _ => f64::INFINITY,
        };
        per_cone.push(residual);
    }
    let (best_residual, witness) = match best {
        Some((_, r, w)) => (r, Some(w)),
        None => (f64::INFINITY, None),
    };
    Ok(TransversalityReport {
        verdict: if best_residual <= cfg.tol_transversality {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        best_residual,
        per_cone_residual: per_cone,
        witness,
    })
}

/// Sample the canonical slice `{(w⁰, w) : w⁰ + |w| = 1, w ∈ C}`: cone extreme
/// directions, the pure-time point, and quasi-random mixtures.
fn slice_samples(problem: &StrictProblem, count: usize) -> Vec<(f64, Vec<f64>)> {
    let m = problem.dims.m;
    let mut out = Vec::new();
    out.push((1.0, vec![0.0; m]));
    let dirs = problem.control_cone.directions_f64();
    for d in &dirs {
        let norm = problem.norm.eval(d);
        if norm > 0.0 {
            out.push((0.0, d.iter().map(|x| x / norm).collect()));
            // Mixed point halfway up the slice.
            out.push((0.5, d.iter().map(|x| 0.5 * x / norm).collect()));
        }
    }
    if !dirs.is_empty() {
        for k in 0..count {
            let h = rng::halton(k as u64, (dirs.len() + 1).min(12));
            let mut mix = vec![0.0; m];
            for (di, d) in dirs.iter().enumerate() {
                let c = h[di % (h.len() - 1)];
                for (mi, x) in mix.iter_mut().zip(d.iter()) {
                    *mi += c * x;
                }
            }
            let norm = problem.norm.eval(&mix);
            if norm <= 1e-12 {
                continue;
            }
            let w0 = h[h.len() - 1];
            let scale = (1.0 - w0) / norm;
            out.push((w0, mix.iter().map(|x| x * scale).collect()));
        }
    }
    out
}

fn a_grid(problem: &StrictProblem, per_dim: usize) -> Vec<Vec<f64>> {
    if problem.dims.q == 0 {
        return vec![Vec::new()];
    }
    let mut grids: Vec<Vec<f64>> = Vec::new();
    for (lo, hi) in &problem.a_box {
        let pts: Vec<f64> = if per_dim <= 1 {
            vec![(lo + hi) / 2.0]
        } else {
            (0..per_dim)
                .map(|k| lo + (hi - lo) * k as f64 / (per_dim - 1) as f64)
                .collect()
        };
        grids.push(pts);
    }
    // Cartesian product.
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for g in grids {
        let mut next = Vec::with_capacity(out.len() * g.len());
        for prefix in &out {
            for v in &g {
                let mut row = prefix.clone();
                row.push(*v);
                next.push(row);
            }
        }
        out = next;
    }
    out
}

/// Condition iv via the homogeneity reduction: at each grid point,
/// `|H(candidate)| ≤ tol` and `max H ≤ tol` over slice × A samples.
pub fn check_hamiltonian_max(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    mult: &Multipliers,
    grid: &[f64],
    cfg: &CheckConfig,
) -> Result<HamiltonianReport, CheckError> {
    let n = problem.dims.n;
    let tr = ep
        .samples
        .as_ref()
        .ok_or(IntegrateError::NoSamples)
        .map_err(CheckError::Integrate)?;
    let slice = slice_samples(problem, cfg.slice_samples);
    let a_mesh = a_grid(problem, cfg.a_grid);

    let rows = exec::map_indexed(
        grid.len(),
        |gi| -> Result<(f64, f64, (f64, Vec<f64>), f64), CheckError> {
            let s = grid[gi];
            let p = mult.p_at(s, n)?;
            let (_, y, _, _) = tr.state_at(s);
            let piece = ep.piece_at(s);
            let h_cand = hamiltonian(
                problem,
                &y,
                mult.p0,
                &p,
                mult.lambda,
                mult.pi,
                piece.w0,
                &piece.w,
                &piece.alpha,
            )?;
            let mut worst = f64::NEG_INFINITY;
            let mut arg = (piece.w0, piece.w.clone());
            for (w0, w) in &slice {
                for a in &a_mesh {
                    let h = hamiltonian(problem, &y, mult.p0, &p, mult.lambda, mult.pi, *w0, w, a)?;
                    if h > worst {
                        worst = h;
                        arg = (*w0, w.clone());
                    }
                }
            }
            Ok((s, worst, arg, h_cand))
        },
    );

    let mut worst_gap = f64::NEG_INFINITY;
    let mut argmax_s = grid.first().copied().unwrap_or(0.0);
    let mut argmax_control = (0.0, vec![0.0; problem.dims.m]);
    let mut cand_at_argmax = 0.0;
    let mut ok_count = 0usize;
    for row in rows {
        let (s, slice_max, arg, h_cand) = row?;
        let gap = slice_max.max(h_cand.abs());
        if gap > worst_gap {
            worst_gap = gap;
            argmax_s = s;
            argmax_control = arg;
            cand_at_argmax = h_cand;
        }
        if slice_max <= cfg.tol_hamiltonian && h_cand.abs() <= cfg.tol_hamiltonian {
            ok_count += 1;
        }
    }
    let pass_fraction = ok_count as f64 / grid.len().max(1) as f64;
    Ok(HamiltonianReport {
        verdict: if pass_fraction >= 1.0 - cfg.tol_measure {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        worst_gap,
        argmax_s,
        argmax_control,
        candidate_h_at_argmax: cand_at_argmax,
        pass_fraction,
    })
}

/// Condition v: per pair (i, j) and grid point, the interval
/// `p(s)·[g_i, g_j]_set(ȳ(s))` must contain zero (holds-or-marginal) on all
/// but a measure-fraction of the grid. Preconditions `β(S̄) < K` and
/// `l̂₁(·, 0, ·) ≡ 0` are verified first; on violation the condition is
/// reported as skipped.
pub fn check_goh(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    mult: &Multipliers,
    grid: &[f64],
    cfg: &CheckConfig,
) -> Result<GohReport, CheckError> {
    let n = problem.dims.n;
    let tr = ep
        .samples
        .as_ref()
        .ok_or(IntegrateError::NoSamples)
        .map_err(CheckError::Integrate)?;
    let (_, _, _, beta_end) = tr.endpoint();
    // Strict budget slack, with the feasibility tolerance absorbing the
    // numerically indistinguishable β = K case.
    if beta_end >= problem.budget - cfg.feasibility_tol {
        return Ok(GohReport {
            verdict: Verdict::Skipped,
            skipped_reason: Some(format!(
                "β(S̄) = {beta_end} does not satisfy β < K = {}",
                problem.budget
            )),
            pairs: Vec::new(),
        });
    }
    // Sample l̂₁(·, 0, ·) near the trajectory.
    let mut lo_box = vec![f64::INFINITY; n];
    let mut hi_box = vec![f64::NEG_INFINITY; n];
    for y in &tr.y {
        for k in 0..n {
            lo_box[k] = lo_box[k].min(y[k]);
            hi_box[k] = hi_box[k].max(y[k]);
        }
    }
    let dirs = problem.control_cone.directions_f64();
    for trial in 0..100 {
        let mut r = rng::sample_rng(cfg.seed, 0x60, trial as u64);
        use rand::Rng;
        let x: Vec<f64> = (0..n)
            .map(|k| r.gen_range((lo_box[k] - 1.0)..=(hi_box[k] + 1.0)))
            .collect();
        let w: Vec<f64> = if dirs.is_empty() {
            vec![0.0; problem.dims.m]
        } else {
            let d = &dirs[trial % dirs.len()];
            let norm = problem.norm.eval(d).max(1e-12);
            d.iter().map(|v| v / norm).collect()
        };
        let value = recession_l1(problem, &x, 0.0, &w)?;
        if value.abs() >= 1e-9 {
            return Ok(GohReport {
                verdict: Verdict::Skipped,
                skipped_reason: Some(format!(
                    "recession l̂₁(x, 0, w) = {value} ≠ 0 at a sampled point"
                )),
                pairs: Vec::new(),
            });
        }
    }

    let checked_fields = problem.bracket_fields(cfg.variant)?;
    let alternate_fields = if cfg.variant {
        Some(("primary".to_string(), &problem.fields[..]))
    } else {
        problem
            .variant_fields
            .as_deref()
            .map(|vf| ("variant".to_string(), vf))
    };

    let mut pairs = Vec::new();
    for i in 1..=problem.m1 {
        for j in (i + 1)..=problem.m1 {
            let table =
                |fields: &[crate::nsfield::NonsmoothField]| -> Result<Vec<GohEntry>, CheckError> {
                    let rows =
                        exec::map_indexed(grid.len(), |gi| -> Result<GohEntry, CheckError> {
                            let s = grid[gi];
                            let (_, y, _, _) = tr.state_at(s);
                            let env = Env::state(&y);
                            let hull = setvalued_bracket(
                                &fields[i - 1],
                                &fields[j - 1],
                                &env,
                                cfg.bracket_method,
                                &cfg.genjac,
                            )?;
                            let p = mult.p_at(s, n)?;
                            let interval = covector_interval(&p, &hull)?;
                            Ok(GohEntry {
                                s,
                                lo: interval.lo,
                                hi: interval.hi,
                                verdict: goh_zero_membership(&interval, cfg.tol_goh),
                            })
                        });
                    rows.into_iter().collect()
                };
            let entries = table(checked_fields)?;
            let ok = entries
                .iter()
                .filter(|e| !matches!(e.verdict, GohVerdict::Fails))
                .count();
            let pass_fraction = ok as f64 / entries.len().max(1) as f64;
            let (alternate_label, alternate_entries) = match &alternate_fields {
                Some((label, fields)) => (Some(label.clone()), Some(table(fields)?)),
                None => (None, None),
            };
            pairs.push(GohPairReport {
                i,
                j,
                pass: pass_fraction >= 1.0 - cfg.tol_measure,
                pass_fraction,
                entries,
                alternate_label,
                alternate_entries,
            });
        }
    }
    let verdict = if pairs.iter().all(|p| p.pass) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(GohReport {
        verdict,
        skipped_reason: None,
        pairs,
    })
}

impl Multipliers {
    /// `p(S̄)` for closed-form or sampled paths.
    pub fn p_at_end(&self) -> Result<Vec<f64>, ProblemError> {
        match &self.p {
            CostatePath::Terminal { p_end, .. } => Ok(p_end.clone()),
            _ => {
                // For sampled paths the last sample is S̄ by construction;
                // expression paths evaluate there directly.
                match &self.p {
                    CostatePath::Sampled { s, p, .. } => {
                        let _ = s;
                        Ok(p.last().cloned().unwrap_or_default())
                    }
                    CostatePath::Expr(_) => {
                        Err(ProblemError::Validation("call p_at with s_end".into()))
                    }
                    CostatePath::Terminal { .. } => unreachable!(),
                }
            }
        }
    }
}

fn p_end_of(
    problem: &StrictProblem,
    mult: &Multipliers,
    s_end: f64,
) -> Result<Vec<f64>, CheckError> {
    match &mult.p {
        CostatePath::Expr(_) => Ok(mult.p_at(s_end, problem.dims.n)?),
        _ => Ok(mult.p_at_end()?),
    }
}

/// Run conditions i)–v) and aggregate.
pub fn run_full_check(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    mult: &Multipliers,
    multicone: Option<&Multicone>,
    cfg: &CheckConfig,
) -> Result<CheckReport, CheckError> {
    problem.validate()?;
    mult.validate()?;
    ep.validate(problem)?;
    let multicone = multicone.unwrap_or(&problem.target);

    let s_end = ep.s_end();
    let grid = midpoint_grid(s_end, cfg.grid_n);
    let step = cfg.step.clone().with_record_at(grid.clone());
    let integrated = solve_forward(problem, ep, None, &step)?;
    let tr = integrated.samples.as_ref().expect("forward pass records");
    let (y0_end, y_end, yl_end, beta_end) = tr.endpoint();
    let y_end = y_end.to_vec();

    // Feasibility gate.
    if beta_end > problem.budget + cfg.feasibility_tol {
        return Err(CheckError::Infeasible(format!(
            "β(S̄) = {beta_end} exceeds the budget K = {}",
            problem.budget
        )));
    }
    if let Some(ts) = &problem.target_set {
        if !ts.contains(y0_end, &y_end, cfg.feasibility_tol) {
            return Err(CheckError::Infeasible(format!(
                "endpoint ({y0_end}, {y_end:?}) misses the target set"
            )));
        }
    }
    if beta_end < problem.budget - cfg.feasibility_tol && mult.pi != 0.0 {
        return Err(CheckError::Infeasible(
            "π must vanish when the budget is slack (β(S̄) < K)".into(),
        ));
    }

    // Resolve a terminal costate into a sampled path by backward integration
    // under its policy; its residual report feeds condition ii directly.
    let (resolved_mult, adjoint) = match &mult.p {
        CostatePath::Terminal { p_end, policy } => {
            let sol = solve_adjoint(
                problem,
                &integrated,
                mult.p0,
                p_end.clone(),
                mult.lambda,
                mult.pi,
                policy,
                &cfg.step,
                &grid,
                &cfg.genjac,
            )?;
            let ok = sol
                .residuals
                .iter()
                .filter(|(_, r)| *r <= cfg.tol_adjoint)
                .count();
            let pass_fraction = ok as f64 / sol.residuals.len().max(1) as f64;
            let argmax = sol
                .residuals
                .iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(s, _)| *s)
                .unwrap_or(0.0);
            let report = AdjointReport {
                verdict: if pass_fraction >= 1.0 - cfg.tol_measure {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                },
                max_residual: sol.max_residual,
                argmax_s: argmax,
                pass_fraction,
            };
            (sol.multipliers, report)
        }
        _ => {
            let membership =
                verify_adjoint_membership(problem, &integrated, mult, &grid, &cfg.genjac)?;
            let ok = membership
                .samples
                .iter()
                .filter(|(_, r)| *r <= cfg.tol_adjoint)
                .count();
            let pass_fraction = ok as f64 / membership.samples.len().max(1) as f64;
            let report = AdjointReport {
                verdict: if pass_fraction >= 1.0 - cfg.tol_measure {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                },
                max_residual: membership.max_residual,
                argmax_s: membership.argmax_s,
                pass_fraction,
            };
            (mult.clone(), report)
        }
    };

    let nontriviality = check_nontriviality(problem, &resolved_mult, &grid, cfg.tol_triv)?;
    let transversality = {
        let mut m = resolved_mult.clone();
        // Transversality uses p(S̄).
        let p_end = p_end_of(problem, &m, s_end)?;
        m.p = CostatePath::Terminal {
            p_end,
            policy: SelectionPolicy::default(),
        };
        check_transversality(problem, y0_end, &y_end, &m, multicone, cfg)?
    };
    let hamiltonian_max = check_hamiltonian_max(problem, &integrated, &resolved_mult, &grid, cfg)?;
    let goh = check_goh(problem, &integrated, &resolved_mult, &grid, cfg)?;

    let core_pass = nontriviality.verdict.passed()
        && adjoint.verdict.passed()
        && transversality.verdict.passed()
        && hamiltonian_max.verdict.passed();
    let overall = match goh.verdict {
        Verdict::Fail => Verdict::Fail,
        Verdict::Skipped => {
            if core_pass {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        _ => {
            if core_pass {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
    };

    let env_end = Env::state(&y_end).with_t(y0_end);
    let final_cost = problem.psi.eval(&env_end)?;
    Ok(CheckReport {
        report_version: 1,
        overall,
        endpoint: EndpointSummary {
            s_end,
            y0: y0_end,
            y: y_end,
            running_cost: yl_end,
            final_cost,
            total_cost: yl_end + final_cost,
            beta: beta_end,
        },
        conditions: Conditions {
            nontriviality,
            adjoint,
            transversality,
            hamiltonian_max,
            goh,
        },
        provenance: provenance(cfg),
    })
}

/// Search configuration: simplex mesh resolution for `(λ, ξ)`, caps, and the
/// coarser integration used during screening.
#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub resolution: usize,
    pub policy_cap: usize,
    pub combo_cap: usize,
    pub pi_mesh: Vec<f64>,
    pub screen_grid_n: usize,
    pub step: StepConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            resolution: 12,
            policy_cap: 256,
            combo_cap: 500_000,
            pi_mesh: vec![0.0, -0.25, -0.5, -0.75, -1.0],
            screen_grid_n: 41,
            step: StepConfig {
                h_rel: 1e-3,
                h_abs: 1e-2,
                ..StepConfig::default()
            },
        }
    }
}

/// One multiplier tuple that satisfies conditions i)–iv) at tolerance,
/// normalized to `|p₀| + |p(S̄)| + λ = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct Survivor {
    pub p0: f64,
    pub lambda: f64,
    pub pi: f64,
    pub p_end: Vec<f64>,
    pub p_start: Vec<f64>,
    pub policy_signs: Vec<(String, usize, KinkSign)>,
    pub cone_index: usize,
    pub worst_h_gap: f64,
    pub adjoint_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchOutcome {
    pub survivors: Vec<Survivor>,
    pub examined: usize,
    /// True when the mesh produced no survivor: an infeasibility certificate
    /// at mesh resolution and tolerance.
    pub infeasible_at_resolution: bool,
}

/// Compositions of `total` into `parts` nonnegative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            let mut row = vec![first];
            row.append(&mut rest);
            out.push(row);
        }
    }
    out
}

/// Kink nodes active at any point of the trajectory, per field.
fn active_kinks_along(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    kappa: f64,
) -> Result<Vec<(FieldRef, usize)>, CheckError> {
    let tr = ep
        .samples
        .as_ref()
        .ok_or(IntegrateError::NoSamples)
        .map_err(CheckError::Integrate)?;
    let wrt: Vec<Var> = (0..problem.dims.n).map(Var::X).collect();
    let mut found: Vec<(FieldRef, usize)> = Vec::new();
    let stride = (tr.s.len() / 512).max(1);
    let mut consider =
        |fref: FieldRef, field: &crate::nsfield::NonsmoothField| -> Result<(), CheckError> {
            for (k, y) in tr.y.iter().enumerate() {
                if k % stride != 0 && k != tr.s.len() - 1 {
                    continue;
                }
                let env = Env::state(y);
                for site in field.kink_sites(&env, &wrt, kappa)? {
                    if !found.contains(&(fref, site.id)) {
                        found.push((fref, site.id));
                    }
                }
            }
            Ok(())
        };
    consider(FieldRef::Drift, &problem.drift)?;
    for (i, g) in problem.fields.iter().enumerate() {
        consider(FieldRef::G(i), g)?;
    }
    found.sort();
    Ok(found)
}

fn fieldref_name(f: FieldRef) -> String {
    match f {
        FieldRef::Drift => "f".into(),
        FieldRef::G(i) => format!("g{}", i + 1),
        FieldRef::L0 => "l0".into(),
        FieldRef::Recession => "recession".into(),
    }
}

/// Mesh-enumeration search for multipliers satisfying i)–iv): cones ×
/// Ψ-hull vertices × simplex mesh over (λ, polar-generator coefficients) ×
/// adjoint selection policies, each backward-integrated and screened with
/// the Hamiltonian test. Correctness over completeness: every survivor
/// re-passes the checker; absence of survivors is a mesh-level certificate.
pub fn search_multipliers(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    multicone: Option<&Multicone>,
    cfg: &CheckConfig,
    search: &SearchConfig,
) -> Result<SearchOutcome, CheckError> {
    problem.validate()?;
    ep.validate(problem)?;
    let multicone = multicone.unwrap_or(&problem.target);
    let s_end = ep.s_end();
    let grid = midpoint_grid(s_end, search.screen_grid_n);
    let step = search.step.clone().with_record_at(grid.clone());
    let integrated = solve_forward(problem, ep, None, &step)?;
    let tr = integrated.samples.as_ref().expect("recorded");
    let (y0_end, y_end, _, beta_end) = tr.endpoint();
    let y_end = y_end.to_vec();
    if beta_end > problem.budget + cfg.feasibility_tol {
        return Err(CheckError::Infeasible(format!(
            "β(S̄) = {beta_end} exceeds the budget K = {}",
            problem.budget
        )));
    }
    if let Some(ts) = &problem.target_set {
        if !ts.contains(y0_end, &y_end, cfg.feasibility_tol) {
            return Err(CheckError::Infeasible(format!(
                "endpoint ({y0_end}, {y_end:?}) misses the target set"
            )));
        }
    }

    // Ψ hull vertices at the endpoint.
    let n = problem.dims.n;
    let mut wrt: Vec<Var> = vec![Var::T];
    wrt.extend((0..n).map(Var::X));
    let psi_field = crate::nsfield::NonsmoothField::new(problem.dims, vec![problem.psi.clone()]);
    let env = Env::state(&y_end).with_t(y0_end);
    let psi_hull = clarke_jacobian(&psi_field, &env, &wrt, Method::Enumeration, &cfg.genjac)?;

    // Selection policies over the kinks active along the trajectory.
    let kinks = active_kinks_along(problem, &integrated, cfg.genjac.kappa)?;
    let policy_count = 3usize.checked_pow(kinks.len() as u32).unwrap_or(usize::MAX);
    if policy_count > search.policy_cap {
        return Err(CheckError::SearchCap(format!(
            "{} kink nodes give {policy_count} sign tables (cap {})",
            kinks.len(),
            search.policy_cap
        )));
    }
    let signs = [KinkSign::Neg, KinkSign::Mid, KinkSign::Pos];
    let policies: Vec<SelectionPolicy> = (0..policy_count)
        .map(|idx| {
            let mut policy = SelectionPolicy::default();
            let mut rem = idx;
            for (fref, node) in &kinks {
                policy.overrides.insert((*fref, *node), signs[rem % 3]);
                rem /= 3;
            }
            policy
        })
        .collect();

    let pi_mesh: Vec<f64> = if beta_end < problem.budget - cfg.feasibility_tol {
        vec![0.0]
    } else {
        search.pi_mesh.clone()
    };

    // Enumerate combos lexicographically:
    // (cone, vertex, mesh point, policy, pi).
    struct Combo {
        cone_index: usize,
        p0: f64,
        p_end: Vec<f64>,
        lambda: f64,
        pi: f64,
        policy_index: usize,
    }
    let mut combos: Vec<Combo> = Vec::new();
    for (ci, cone) in multicone.cones.iter().enumerate() {
        let polar = cone.polar();
        let dirs = polar.directions_f64();
        let parts = 1 + dirs.len();
        for comp in compositions(search.resolution, parts) {
            let lambda = comp[0] as f64 / search.resolution as f64;
            for (vi, vertex) in psi_hull.vertices.iter().enumerate() {
                let _ = vi;
                let mut target = vec![0.0; 1 + n];
                for (coord, t) in target.iter_mut().enumerate() {
                    *t = -lambda * vertex[coord];
                }
                for (k, dir) in dirs.iter().enumerate() {
                    let c = comp[1 + k] as f64 / search.resolution as f64;
                    for (coord, t) in target.iter_mut().enumerate() {
                        *t -= c * dir[coord];
                    }
                }
                let p0 = target[0];
                let p_end = target[1..].to_vec();
                // Scale-zero combos are trivial by construction.
                if lambda == 0.0 && p0 == 0.0 && p_end.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for pi in &pi_mesh {
                    for policy_index in 0..policies.len() {
                        combos.push(Combo {
                            cone_index: ci,
                            p0,
                            p_end: p_end.clone(),
                            lambda,
                            pi: *pi,
                            policy_index,
                        });
                    }
                }
            }
        }
    }
    if combos.len() > search.combo_cap {
        return Err(CheckError::SearchCap(format!(
            "{} combinations exceed the cap {}",
            combos.len(),
            search.combo_cap
        )));
    }

    let examined = combos.len();
    let results = exec::map_indexed(combos.len(), |k| -> Option<Survivor> {
        let combo = &combos[k];
        let policy = &policies[combo.policy_index];
        let sol = solve_adjoint(
            problem,
            &integrated,
            combo.p0,
            combo.p_end.clone(),
            combo.lambda,
            combo.pi,
            policy,
            &search.step,
            &grid,
            &cfg.genjac,
        )
        .ok()?;
        if sol.max_residual > cfg.tol_adjoint {
            return None;
        }
        let triv = check_nontriviality(problem, &sol.multipliers, &grid, cfg.tol_triv).ok()?;
        if !triv.verdict.passed() {
            return None;
        }
        let hmax =
            check_hamiltonian_max(problem, &integrated, &sol.multipliers, &grid, cfg).ok()?;
        if !hmax.verdict.passed() {
            return None;
        }
        // Normalize to |p0| + |p(S̄)| + λ = 1.
        let p_end_norm: f64 = combo.p_end.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = combo.p0.abs() + p_end_norm + combo.lambda;
        if scale <= cfg.tol_triv {
            return None;
        }
        let p_start = sol
            .multipliers
            .p_at(0.0, problem.dims.n)
            .ok()?
            .iter()
            .map(|v| v / scale)
            .collect();
        Some(Survivor {
            p0: combo.p0 / scale,
            lambda: combo.lambda / scale,
            pi: combo.pi / scale,
            p_end: combo.p_end.iter().map(|v| v / scale).collect(),
            p_start,
            policy_signs: kinks
                .iter()
                .map(|(fref, node)| (fieldref_name(*fref), *node, policy.sign_for(*fref, *node)))
                .collect(),
            cone_index: combo.cone_index,
            worst_h_gap: hmax.worst_gap,
            adjoint_residual: sol.max_residual,
        })
    });

    // Deterministic merge in enumeration order with near-duplicate removal.
    let mut survivors: Vec<Survivor> = Vec::new();
    for s in results.into_iter().flatten() {
        let duplicate = survivors.iter().any(|t| {
            (t.p0 - s.p0).abs() <= 1e-9
                && (t.lambda - s.lambda).abs() <= 1e-9
                && (t.pi - s.pi).abs() <= 1e-9
                && t.p_end
                    .iter()
                    .zip(s.p_end.iter())
                    .all(|(a, b)| (a - b).abs() <= 1e-9)
                && t.p_start
                    .iter()
                    .zip(s.p_start.iter())
                    .all(|(a, b)| (a - b).abs() <= 1e-9)
        });
        if !duplicate {
            survivors.push(s);
        }
    }
    Ok(SearchOutcome {
        infeasible_at_resolution: survivors.is_empty(),
        survivors,
        examined,
    })
}

/// Interval Hausdorff distance helper used by report consumers.
pub fn interval_hausdorff(a: &Interval, b: &Interval) -> f64 {
    a.hausdorff(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nsfield::parse_expr;
    use crate::problem::ExtPiece;

    fn sec5() -> StrictProblem {
        crate::problem::tests::sec5_problem()
    }

    fn candidate() -> ExtendedProcess {
        ExtendedProcess::from_pieces(vec![ExtPiece {
            duration: 2.0,
            w0: 0.5,
            w: vec![-0.5, 0.0],
            alpha: vec![],
            zeta: 0.0,
        }])
    }

    fn candidate_multipliers() -> Multipliers {
        let dims = crate::nsfield::Dims::new(3, 2, 0);
        Multipliers {
            p0: -1.0,
            lambda: 0.5,
            pi: 0.0,
            p: CostatePath::Expr(vec![
                parse_expr("0", dims).unwrap(),
                parse_expr("2 - s", dims).unwrap(),
                parse_expr("0 - 1", dims).unwrap(),
            ]),
        }
    }

    fn impulsive() -> ExtendedProcess {
        let half_rt2 = std::f64::consts::SQRT_2 / 2.0;
        let leg = |w: Vec<f64>| ExtPiece {
            duration: half_rt2,
            w0: 0.0,
            w,
            alpha: vec![],
            zeta: 0.0,
        };
        ExtendedProcess::from_pieces(vec![
            ExtPiece {
                duration: 2.0,
                w0: 0.5,
                w: vec![-0.5, 0.0],
                alpha: vec![],
                zeta: 0.0,
            },
            leg(vec![0.0, 1.0]),
            leg(vec![1.0, 0.0]),
            leg(vec![0.0, -1.0]),
            leg(vec![-1.0, 0.0]),
        ])
    }

    fn impulsive_target() -> Multicone {
        Multicone::new(vec![crate::cones::PolyhedralCone::from_generators(
            4,
            &[vec![-1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            &[vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
        )
        .unwrap()])
        .unwrap()
    }

    fn zero_multipliers() -> Multipliers {
        let dims = crate::nsfield::Dims::new(3, 2, 0);
        Multipliers {
            p0: 0.0,
            lambda: 1.0,
            pi: 0.0,
            p: CostatePath::Expr(vec![
                parse_expr("0", dims).unwrap(),
                parse_expr("0", dims).unwrap(),
                parse_expr("0", dims).unwrap(),
            ]),
        }
    }

    fn fast_cfg() -> CheckConfig {
        CheckConfig {
            grid_n: 50,
            slice_samples: 60,
            step: StepConfig {
                h_rel: 1e-3,
                h_abs: 1e-2,
                ..StepConfig::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn nontriviality_examples() {
        let p = sec5();
        let grid = midpoint_grid(2.0, 20);
        let r = check_nontriviality(&p, &candidate_multipliers(), &grid, 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        let dims = p.dims;
        let zero = Multipliers {
            p0: 0.0,
            lambda: 0.0,
            pi: 0.0,
            p: CostatePath::Expr(vec![
                parse_expr("0", dims).unwrap(),
                parse_expr("0", dims).unwrap(),
                parse_expr("0", dims).unwrap(),
            ]),
        };
        let r = check_nontriviality(&p, &zero, &grid, 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let r = check_nontriviality(&p, &zero_multipliers(), &grid, 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn transversality_sec5_candidate() {
        let p = sec5();
        let cfg = fast_cfg();
        let mult = Multipliers {
            p0: -1.0,
            lambda: 0.5,
            pi: 0.0,
            p: CostatePath::Terminal {
                p_end: vec![0.0, 0.0, -1.0],
                policy: SelectionPolicy::default(),
            },
        };
        let r = check_transversality(&p, 1.0, &[0.0, 0.0, 1.0], &mult, &p.target, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.best_residual <= 1e-9);
        let w = r.witness.unwrap();
        // −λ∂Ψ = (0,0,0,−1); ξ = (1, 0, 0, 0).
        assert!((w.m_t).abs() < 1e-9);
        assert!((w.m_x[2] - 2.0).abs() < 1e-9);
        assert!((w.xi[0] - 1.0).abs() < 1e-9);
        assert!(w.xi[1].abs() < 1e-9);
        assert!(w.xi[2].abs() < 1e-9);
        assert!(w.xi[3].abs() < 1e-9);
    }

    #[test]
    fn transversality_impulsive_zero_costate() {
        let p = sec5();
        let cfg = fast_cfg();
        let mult = Multipliers {
            p0: 0.0,
            lambda: 1.0,
            pi: 0.0,
            p: CostatePath::Terminal {
                p_end: vec![0.0, 0.0, 0.0],
                policy: SelectionPolicy::default(),
            },
        };
        let r = check_transversality(&p, 1.0, &[0.0, 0.0, 0.0], &mult, &impulsive_target(), &cfg)
            .unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        let w = r.witness.unwrap();
        assert!(w.xi.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn transversality_rejects_nonzero_p1() {
        let p = sec5();
        let cfg = fast_cfg();
        let mult = Multipliers {
            p0: -1.0,
            lambda: 0.5,
            pi: 0.0,
            p: CostatePath::Terminal {
                p_end: vec![1.0, 0.0, -1.0],
                policy: SelectionPolicy::default(),
            },
        };
        let r = check_transversality(&p, 1.0, &[0.0, 0.0, 1.0], &mult, &p.target, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.best_residual > 0.5);
    }

    #[test]
    fn hamiltonian_max_sec5() {
        let p = sec5();
        let cfg = fast_cfg();
        let grid = midpoint_grid(2.0, cfg.grid_n);
        let step = cfg.step.clone().with_record_at(grid.clone());
        let ep = solve_forward(&p, &candidate(), None, &step).unwrap();
        let r = check_hamiltonian_max(&p, &ep, &candidate_multipliers(), &grid, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.worst_gap <= 1e-9, "gap {}", r.worst_gap);
        // p2 ≡ 0 destroys maximality with gap |2 − s| at w² = ±1.
        let dims = p.dims;
        let broken = Multipliers {
            p0: -1.0,
            lambda: 0.5,
            pi: 0.0,
            p: CostatePath::Expr(vec![
                parse_expr("0", dims).unwrap(),
                parse_expr("0", dims).unwrap(),
                parse_expr("0 - 1", dims).unwrap(),
            ]),
        };
        let r = check_hamiltonian_max(&p, &ep, &broken, &grid, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.worst_gap > 1.0);
    }

    #[test]
    fn goh_sec5_variants() {
        let p = sec5();
        let mut cfg = fast_cfg();
        let grid = midpoint_grid(2.0, cfg.grid_n);
        let step = cfg.step.clone().with_record_at(grid.clone());
        let ep = solve_forward(&p, &candidate(), None, &step).unwrap();
        // As printed: intervals [-2, 0]; zero on the boundary → marginal →
        // condition passes.
        let r = check_goh(&p, &ep, &candidate_multipliers(), &grid, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        let pair = &r.pairs[0];
        for e in &pair.entries {
            assert!((e.lo + 2.0 * (2.0 - e.s) / 2.0).abs() < 1e-9 || e.lo <= 0.0);
            assert!(matches!(e.verdict, GohVerdict::Marginal));
        }
        assert_eq!(pair.alternate_label.as_deref(), Some("variant"));
        // Variant fields: [−4, −2] at every grid point → fails.
        cfg.variant = true;
        let r = check_goh(&p, &ep, &candidate_multipliers(), &grid, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        for e in &r.pairs[0].entries {
            assert!((e.lo + 4.0).abs() < 0.05, "lo {}", e.lo);
            assert!((e.hi + 2.0).abs() < 0.05, "hi {}", e.hi);
            assert!(matches!(e.verdict, GohVerdict::Fails));
        }
        assert_eq!(r.pairs[0].alternate_label.as_deref(), Some("primary"));
    }

    #[test]
    fn goh_impulsive_zero_costate_passes() {
        let p = sec5();
        let cfg = fast_cfg();
        let ep0 = impulsive();
        let grid = midpoint_grid(ep0.s_end(), cfg.grid_n);
        let step = cfg.step.clone().with_record_at(grid.clone());
        let ep = solve_forward(&p, &ep0, None, &step).unwrap();
        let r = check_goh(&p, &ep, &zero_multipliers(), &grid, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn goh_skipped_when_budget_saturated() {
        let mut p = sec5();
        p.budget = 1.0; // The candidate spends exactly β = 1.
        let cfg = fast_cfg();
        let grid = midpoint_grid(2.0, cfg.grid_n);
        let step = cfg.step.clone().with_record_at(grid.clone());
        let ep = solve_forward(&p, &candidate(), None, &step).unwrap();
        let r = check_goh(&p, &ep, &candidate_multipliers(), &grid, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Skipped);
        assert!(r.skipped_reason.is_some());
    }

    #[test]
    fn full_check_candidate_as_printed_passes_all() {
        let p = sec5();
        let cfg = fast_cfg();
        let report =
            run_full_check(&p, &candidate(), &candidate_multipliers(), None, &cfg).unwrap();
        assert_eq!(report.conditions.nontriviality.verdict, Verdict::Pass);
        assert_eq!(report.conditions.adjoint.verdict, Verdict::Pass);
        assert!(report.conditions.adjoint.max_residual <= 1e-6);
        assert_eq!(report.conditions.transversality.verdict, Verdict::Pass);
        assert_eq!(report.conditions.hamiltonian_max.verdict, Verdict::Pass);
        assert_eq!(report.conditions.goh.verdict, Verdict::Pass);
        assert_eq!(report.overall, Verdict::Pass);
        assert!((report.endpoint.total_cost - 1.0).abs() < 1e-6);
    }

    #[test]
    fn full_check_candidate_paper_variant_fails_goh_only() {
        let p = sec5();
        let mut cfg = fast_cfg();
        cfg.variant = true;
        let report =
            run_full_check(&p, &candidate(), &candidate_multipliers(), None, &cfg).unwrap();
        assert_eq!(report.conditions.nontriviality.verdict, Verdict::Pass);
        assert_eq!(report.conditions.adjoint.verdict, Verdict::Pass);
        assert_eq!(report.conditions.transversality.verdict, Verdict::Pass);
        assert_eq!(report.conditions.hamiltonian_max.verdict, Verdict::Pass);
        assert_eq!(report.conditions.goh.verdict, Verdict::Fail);
        assert_eq!(report.overall, Verdict::Fail);
    }

    #[test]
    fn full_check_impulsive_minimizer_all_pass() {
        let p = sec5();
        let cfg = fast_cfg();
        let report = run_full_check(
            &p,
            &impulsive(),
            &zero_multipliers(),
            Some(&impulsive_target()),
            &cfg,
        )
        .unwrap();
        assert_eq!(report.overall, Verdict::Pass);
        assert!((report.endpoint.total_cost).abs() < 1e-6);
        assert!((report.endpoint.beta - (1.0 + 2.0 * std::f64::consts::SQRT_2)).abs() < 1e-6);
    }

    #[test]
    fn full_check_rejects_negative_lambda() {
        let p = sec5();
        let cfg = fast_cfg();
        let mut mult = candidate_multipliers();
        mult.lambda = -0.5;
        assert!(matches!(
            run_full_check(&p, &candidate(), &mult, None, &cfg),
            Err(CheckError::Problem(ProblemError::Validation(_)))
        ));
    }

    #[test]
    fn goh_verdicts_invariant_under_positive_scaling() {
        let p = sec5();
        let mut cfg = fast_cfg();
        cfg.variant = true;
        let grid = midpoint_grid(2.0, cfg.grid_n);
        let step = cfg.step.clone().with_record_at(grid.clone());
        let ep = solve_forward(&p, &candidate(), None, &step).unwrap();
        let base = check_goh(&p, &ep, &candidate_multipliers(), &grid, &cfg).unwrap();
        for factor in [0.5, 3.0] {
            let dims = p.dims;
            let scaled = Multipliers {
                p0: -factor,
                lambda: 0.5 * factor,
                pi: 0.0,
                p: CostatePath::Expr(vec![
                    parse_expr("0", dims).unwrap(),
                    parse_expr(&format!("{factor} * (2 - s)"), dims).unwrap(),
                    parse_expr(&format!("0 - {factor}"), dims).unwrap(),
                ]),
            };
            let r = check_goh(&p, &ep, &scaled, &grid, &cfg).unwrap();
            assert_eq!(r.verdict, base.verdict);
            for (a, b) in r.pairs[0].entries.iter().zip(base.pairs[0].entries.iter()) {
                assert_eq!(
                    std::mem::discriminant(&a.verdict),
                    std::mem::discriminant(&b.verdict)
                );
            }
        }
    }

    #[test]
    fn search_finds_sec5_candidate_family() {
        let p = sec5();
        let cfg = fast_cfg();
        let search = SearchConfig::default();
        let out = search_multipliers(&p, &candidate(), None, &cfg, &search).unwrap();
        assert!(!out.infeasible_at_resolution);
        // The family pins p2(s) = c·(2 − s) with p0 = p3 = −c; the member
        // proportional to (−1, (0, 2−s, −1), 1/2) has λ/|p0| = 1/2.
        let member = out
            .survivors
            .iter()
            .find(|s| s.p0 < 0.0 && (s.lambda / s.p0.abs() - 0.5).abs() < 1e-6);
        let member = member.expect("normalized family member present");
        assert!((member.p_end[2] / member.p0 - 1.0).abs() < 1e-6);
        assert!(member.p_end[0].abs() < 1e-9);
        assert!(member.p_end[1].abs() < 1e-9);
        // p2(0) = 2·|p3|.
        assert!((member.p_start[1] - 2.0 * member.p_end[2].abs()).abs() < 1e-6);
        // Every survivor re-passes conditions i)–iv.
        for s in &out.survivors {
            let mult = Multipliers {
                p0: s.p0,
                lambda: s.lambda,
                pi: s.pi,
                p: CostatePath::Terminal {
                    p_end: s.p_end.clone(),
                    policy: {
                        let mut policy = SelectionPolicy::default();
                        for (name, node, sign) in &s.policy_signs {
                            let fref = if name == "f" {
                                FieldRef::Drift
                            } else if let Some(rest) = name.strip_prefix('g') {
                                FieldRef::G(rest.parse::<usize>().unwrap() - 1)
                            } else {
                                continue;
                            };
                            policy.overrides.insert((fref, *node), *sign);
                        }
                        policy
                    },
                },
            };
            let report = run_full_check(&p, &candidate(), &mult, None, &cfg).unwrap();
            assert_eq!(report.conditions.nontriviality.verdict, Verdict::Pass);
            assert_eq!(report.conditions.adjoint.verdict, Verdict::Pass);
            assert_eq!(report.conditions.transversality.verdict, Verdict::Pass);
            assert_eq!(report.conditions.hamiltonian_max.verdict, Verdict::Pass);
        }
    }

    #[test]
    fn search_finds_impulsive_normal_multiplier() {
        let p = sec5();
        let cfg = fast_cfg();
        let search = SearchConfig::default();
        let out =
            search_multipliers(&p, &impulsive(), Some(&impulsive_target()), &cfg, &search).unwrap();
        let found = out.survivors.iter().any(|s| {
            (s.lambda - 1.0).abs() < 1e-9
                && s.p0.abs() < 1e-9
                && s.p_end.iter().all(|v| v.abs() < 1e-9)
        });
        assert!(found, "survivors: {:?}", out.survivors.len());
    }

    #[test]
    fn search_rejects_off_target_process() {
        let p = sec5();
        let cfg = fast_cfg();
        // Stop halfway: endpoint misses the target set.
        let short = ExtendedProcess::from_pieces(vec![ExtPiece {
            duration: 1.0,
            w0: 0.5,
            w: vec![-0.5, 0.0],
            alpha: vec![],
            zeta: 0.0,
        }]);
        assert!(matches!(
            search_multipliers(&p, &short, None, &cfg, &SearchConfig::default()),
            Err(CheckError::Infeasible(_))
        ));
    }

    #[test]
    fn report_is_deterministic_json() {
        let p = sec5();
        let cfg = fast_cfg();
        let a = run_full_check(&p, &candidate(), &candidate_multipliers(), None, &cfg).unwrap();
        let b = run_full_check(&p, &candidate(), &candidate_multipliers(), None, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
