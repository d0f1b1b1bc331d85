//! Needle and bracket-like control variations, endpoint maps, variation
//! vectors, and a finite-difference convergence oracle.
//!
//! A needle variation replaces the control on `[s̄−ε, s̄]` by a constant
//! value. A bracket-like variation compresses the reference control at
//! doubled rate into `[s̄−8√ε, s̄−4√ε]` and appends four pure-impulse legs
//! `+e_i, +e_j, −e_i, −e_j` of length `√ε` each, whose first-order endpoint
//! effect is a set-valued bracket direction. The oracle computes difference
//! quotients `(Y(ε e_k) − Y(0))/ε` over an ε schedule and measures their
//! distance to the transported variation-vector hull, certifying the
//! generalized-derivative claim at numerical scale.

use serde::Serialize;
use thiserror::Error;

use crate::genjac::{
    setvalued_bracket, ConvexHullSet, GenJacConfig, GenJacError, HullMeta, Method,
};
use crate::hull::min_norm_point;
use crate::integrate::{
    solve_forward, transport_matrix, IntegrateError, KinkSign, SelectionPolicy, StepConfig,
};
use crate::problem::{
    extended_dynamics, lagrangian_rate, ExtPiece, ExtendedProcess, ProblemError, StrictProblem,
};

#[derive(Debug, Error)]
pub enum VariationError {
    #[error("needle length ε = {eps} must be smaller than s̄ = {sbar}")]
    NeedleTooLong { eps: f64, sbar: f64 },
    #[error("bracket window 8√ε = {window} exceeds s̄ = {sbar}")]
    BracketTooLong { window: f64, sbar: f64 },
    #[error("bracket indices must be distinct and within 1..={m1}, got ({i}, {j})")]
    BadBracketIndices { i: usize, j: usize, m1: usize },
    #[error("variation windows overlap: [{0:.6}, {1:.6}] and [{2:.6}, {3:.6}]")]
    WindowOverlap(f64, f64, f64, f64),
    #[error("variation instants must be strictly increasing")]
    UnorderedInstants,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    GenJac(#[from] GenJacError),
}

/// A needle value or a bracket pair (one-based field indices).
#[derive(Clone, Debug, PartialEq)]
pub enum VariationGenerator {
    Needle {
        w0: f64,
        w: Vec<f64>,
        a: Vec<f64>,
        zeta: f64,
    },
    Bracket {
        i: usize,
        j: usize,
    },
}

impl VariationGenerator {
    pub fn bracket(i: usize, j: usize, m1: usize) -> Result<Self, VariationError> {
        if i == j || i == 0 || j == 0 || i > m1 || j > m1 {
            return Err(VariationError::BadBracketIndices { i, j, m1 });
        }
        Ok(VariationGenerator::Bracket { i, j })
    }

    fn window(&self, eps: f64) -> f64 {
        match self {
            VariationGenerator::Needle { .. } => eps,
            VariationGenerator::Bracket { .. } => 8.0 * eps.sqrt(),
        }
    }
}

/// A perturbed control schedule, with the (possibly shifted) anchor instant
/// and a warning when the anchor had to move off a breakpoint.
#[derive(Clone, Debug)]
pub struct PerturbedSchedule {
    pub pieces: Vec<ExtPiece>,
    pub anchor: f64,
    pub warning: Option<String>,
}

/// Move s̄ off a control breakpoint: to the midpoint of the piece on its
/// left. Non-breakpoint instants pass through unchanged.
fn resolve_anchor(ep: &ExtendedProcess, sbar: f64) -> (f64, Option<String>) {
    let bps = ep.breakpoints();
    for (k, b) in bps.iter().enumerate() {
        if (sbar - b).abs() <= 1e-12 && k > 0 {
            let shifted = (bps[k - 1] + b) / 2.0;
            return (
                shifted,
                Some(format!(
                    "anchor {sbar} sits on a control breakpoint; shifted left to {shifted}"
                )),
            );
        }
    }
    (sbar, None)
}

/// Cut the schedule at `from`/`to` and substitute `replacement` in between.
fn splice(pieces: &[ExtPiece], from: f64, to: f64, replacement: Vec<ExtPiece>) -> Vec<ExtPiece> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    for p in pieces {
        let (a, b) = (acc, acc + p.duration);
        acc = b;
        // Left part before the window.
        if a < from {
            let end = b.min(from);
            if end - a > 1e-15 {
                out.push(ExtPiece {
                    duration: end - a,
                    ..p.clone()
                });
            }
        }
        // Right part after the window.
        if b > to {
            let start = a.max(to);
            if b - start > 1e-15 {
                out.push(ExtPiece {
                    duration: b - start,
                    ..p.clone()
                });
            }
        }
    }
    // Insert the replacement at the right position: after everything ending
    // at or before `from`.
    let mut prefix: Vec<ExtPiece> = Vec::new();
    let mut suffix: Vec<ExtPiece> = Vec::new();
    let mut t = 0.0;
    for p in out {
        if t < from - 1e-15 {
            t += p.duration;
            prefix.push(p);
        } else {
            suffix.push(p);
        }
    }
    prefix.extend(replacement);
    prefix.extend(suffix);
    prefix
}

/// Needle control variation: the constant value on `[s̄−ε, s̄]`.
pub fn apply_needle(
    ep: &ExtendedProcess,
    sbar: f64,
    w0: f64,
    w: &[f64],
    a: &[f64],
    zeta: f64,
    eps: f64,
) -> Result<PerturbedSchedule, VariationError> {
    if eps == 0.0 {
        return Ok(PerturbedSchedule {
            pieces: ep.pieces.clone(),
            anchor: sbar,
            warning: None,
        });
    }
    let (anchor, warning) = resolve_anchor(ep, sbar);
    if eps >= anchor {
        return Err(VariationError::NeedleTooLong { eps, sbar: anchor });
    }
    let replacement = vec![ExtPiece {
        duration: eps,
        w0,
        w: w.to_vec(),
        alpha: a.to_vec(),
        zeta,
    }];
    Ok(PerturbedSchedule {
        pieces: splice(&ep.pieces, anchor - eps, anchor, replacement),
        anchor,
        warning,
    })
}

/// Bracket-like variation: time-compressed doubled control on
/// `[s̄−8√ε, s̄−4√ε]`, then the four impulse legs `+e_i, +e_j, −e_i, −e_j`
/// of length `√ε`.
pub fn apply_bracket(
    ep: &ExtendedProcess,
    sbar: f64,
    i: usize,
    j: usize,
    m: usize,
    eps: f64,
) -> Result<PerturbedSchedule, VariationError> {
    if eps == 0.0 {
        return Ok(PerturbedSchedule {
            pieces: ep.pieces.clone(),
            anchor: sbar,
            warning: None,
        });
    }
    let (anchor, warning) = resolve_anchor(ep, sbar);
    let r = eps.sqrt();
    if 8.0 * r > anchor {
        return Err(VariationError::BracketTooLong {
            window: 8.0 * r,
            sbar: anchor,
        });
    }
    let from = anchor - 8.0 * r;
    let mid = anchor - 4.0 * r;
    let alpha_ref = ep.piece_at(anchor).alpha.clone();
    // Doubled-rate compressed copy of the reference on [from, mid]: the
    // control at σ ∈ [from, mid] is (2w̄⁰, 2w̄)(γ(σ)) with γ(σ) = 2σ − s̄ + 8√ε,
    // so reference breakpoints b map to (b + s̄ − 8√ε)/2.
    let mut replacement = Vec::new();
    let bps = ep.breakpoints();
    let mut seg = from;
    loop {
        let gamma = 2.0 * seg - anchor + 8.0 * r;
        // Reference piece at γ and the next reference breakpoint after γ.
        let piece = ep.piece_at(gamma);
        let next_bp = bps
            .iter()
            .copied()
            .find(|b| *b > gamma + 1e-15)
            .unwrap_or(ep.s_end());
        let seg_end = ((next_bp + anchor - 8.0 * r) / 2.0).min(mid);
        if seg_end - seg > 1e-15 {
            replacement.push(ExtPiece {
                duration: seg_end - seg,
                w0: 2.0 * piece.w0,
                w: piece.w.iter().map(|x| 2.0 * x).collect(),
                alpha: piece.alpha.clone(),
                zeta: piece.zeta,
            });
        }
        if seg_end >= mid - 1e-15 {
            break;
        }
        seg = seg_end;
    }
    // The four impulse legs; w⁰ = 0 freezes y⁰, the a value is irrelevant.
    let unit = |idx: usize, sign: f64| -> ExtPiece {
        let mut w = vec![0.0; m];
        w[idx - 1] = sign;
        ExtPiece {
            duration: r,
            w0: 0.0,
            w,
            alpha: alpha_ref.clone(),
            zeta: 0.0,
        }
    };
    replacement.push(unit(i, 1.0));
    replacement.push(unit(j, 1.0));
    replacement.push(unit(i, -1.0));
    replacement.push(unit(j, -1.0));
    Ok(PerturbedSchedule {
        pieces: splice(&ep.pieces, from, anchor, replacement),
        anchor,
        warning,
    })
}

/// Variation vector `(v⁰, v, vˡ)` as a hull in `R^{1+n+1}` (singleton for
/// needles), plus the `v^ν` component for needles.
#[derive(Clone, Debug)]
pub struct VariationVector {
    pub hull: ConvexHullSet,
    pub v_nu: Option<f64>,
}

pub fn variation_vector(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    sbar: f64,
    generator: &VariationGenerator,
    variant: bool,
    cfg: &GenJacConfig,
) -> Result<VariationVector, VariationError> {
    let n = problem.dims.n;
    let tr = ep
        .samples
        .as_ref()
        .ok_or(IntegrateError::NoSamples)
        .map_err(VariationError::Integrate)?;
    let (anchor, _) = resolve_anchor(ep, sbar);
    let (_, ybar, _, _) = tr.state_at(anchor);
    let piece = ep.piece_at(anchor);
    match generator {
        VariationGenerator::Needle { w0, w, a, zeta } => {
            let scale = 1.0 + zeta;
            let (_, f_new, l_new, _) = extended_dynamics(problem, &ybar, *w0, w, a)?;
            let (_, f_ref, l_ref, _) =
                extended_dynamics(problem, &ybar, piece.w0, &piece.w, &piece.alpha)?;
            let _ = (l_new, l_ref);
            let le_new = lagrangian_rate(problem, &ybar, *w0, w, a)?;
            let le_ref = lagrangian_rate(problem, &ybar, piece.w0, &piece.w, &piece.alpha)?;
            let mut v = Vec::with_capacity(n + 2);
            v.push(w0 * scale - piece.w0);
            for k in 0..n {
                v.push(f_new[k] * scale - f_ref[k]);
            }
            v.push(le_new * scale - le_ref);
            let v_nu = problem.norm.eval(w) * scale - problem.norm.eval(&piece.w);
            Ok(VariationVector {
                hull: ConvexHullSet::singleton(n + 2, 1, v, HullMeta::default()),
                v_nu: Some(v_nu),
            })
        }
        VariationGenerator::Bracket { i, j } => {
            let fields = problem.bracket_fields(variant)?;
            let env = crate::nsfield::Env::state(&ybar);
            let bracket = setvalued_bracket(
                &fields[*i - 1],
                &fields[*j - 1],
                &env,
                Method::Enumeration,
                cfg,
            )?;
            // Pad to {0} × bracket × {0}.
            let points: Vec<Vec<f64>> = bracket
                .vertices
                .iter()
                .map(|v| {
                    let mut padded = Vec::with_capacity(n + 2);
                    padded.push(0.0);
                    padded.extend_from_slice(v);
                    padded.push(0.0);
                    padded
                })
                .collect();
            Ok(VariationVector {
                hull: ConvexHullSet::from_points(n + 2, 1, points, bracket.meta.clone()),
                v_nu: None,
            })
        }
    }
}

/// Apply several variations (disjoint windows) and integrate to the end
/// time; returns the endpoint `(y⁰, y, yˡ, β)(S̄)`.
pub fn endpoint_map(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    variations: &[(f64, VariationGenerator)],
    eps: &[f64],
    step: &StepConfig,
) -> Result<(f64, Vec<f64>, f64, f64), VariationError> {
    assert_eq!(variations.len(), eps.len());
    for k in 1..variations.len() {
        if variations[k].0 <= variations[k - 1].0 {
            return Err(VariationError::UnorderedInstants);
        }
    }
    // Window disjointness.
    for k in 1..variations.len() {
        let (s_prev, g_prev) = &variations[k - 1];
        let (s_k, g_k) = &variations[k];
        let prev_end = *s_prev;
        let this_start = s_k - g_k.window(eps[k]);
        let _ = g_prev;
        if this_start < prev_end - 1e-15 {
            return Err(VariationError::WindowOverlap(
                s_prev - g_prev.window(eps[k - 1]),
                prev_end,
                this_start,
                *s_k,
            ));
        }
    }
    let mut schedule = ep.clone();
    for ((sbar, generator), &e) in variations.iter().zip(eps.iter()) {
        if e == 0.0 {
            continue;
        }
        let perturbed = match generator {
            VariationGenerator::Needle { w0, w, a, zeta } => {
                apply_needle(&schedule, *sbar, *w0, w, a, *zeta, e)?
            }
            VariationGenerator::Bracket { i, j } => {
                apply_bracket(&schedule, *sbar, *i, *j, problem.dims.m, e)?
            }
        };
        schedule = ExtendedProcess {
            pieces: perturbed.pieces,
            canonical: false,
            samples: None,
        };
    }
    let integrated = solve_forward(problem, &schedule, None, step)?;
    let tr = integrated.samples.expect("solve_forward records samples");
    let (y0, y, yl, beta) = tr.endpoint();
    Ok((y0, y.to_vec(), yl, beta))
}

/// One column of the convergence report.
#[derive(Clone, Debug, Serialize)]
pub struct QdqColumn {
    pub index: usize,
    pub generator: String,
    /// `(ε, hull distance of the difference quotient)` rows.
    pub rows: Vec<(f64, f64)>,
    pub final_distance: f64,
    /// Fitted convergence order of needle columns (`None` when the distances
    /// sit at floating-point noise).
    pub rate: Option<f64>,
    pub trend_ok: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct QdqReport {
    pub columns: Vec<QdqColumn>,
    pub tol: f64,
    pub pass: bool,
}

/// Convergence oracle: for each variation, difference quotients over the ε
/// schedule against the transported variation-vector hull.
#[allow(clippy::too_many_arguments)]
pub fn qdq_oracle(
    problem: &StrictProblem,
    ep: &ExtendedProcess,
    variations: &[(f64, VariationGenerator)],
    eps_schedule: &[f64],
    tol: f64,
    variant: bool,
    step: &StepConfig,
    genjac_cfg: &GenJacConfig,
) -> Result<QdqReport, VariationError> {
    let n = problem.dims.n;
    // The columns are evaluated one at a time, but the variation list is a
    // joint family: instants must increase and windows at the largest ε must
    // stay disjoint.
    let eps_max = eps_schedule.iter().copied().fold(0.0, f64::max);
    for k in 1..variations.len() {
        let (s_prev, g_prev) = &variations[k - 1];
        let (s_k, g_k) = &variations[k];
        if s_k <= s_prev {
            return Err(VariationError::UnorderedInstants);
        }
        if s_k - g_k.window(eps_max) < *s_prev - 1e-15 {
            return Err(VariationError::WindowOverlap(
                s_prev - g_prev.window(eps_max),
                *s_prev,
                s_k - g_k.window(eps_max),
                *s_k,
            ));
        }
    }
    let with_samples = if ep.samples.is_some() {
        ep.clone()
    } else {
        solve_forward(problem, ep, None, step)?
    };
    let (y0_ref, y_ref, yl_ref, _) = endpoint_map(problem, ep, &[], &[], step)?;
    let reference: Vec<f64> = std::iter::once(y0_ref)
        .chain(y_ref.iter().copied())
        .chain(std::iter::once(yl_ref))
        .collect();

    let mut columns = Vec::new();
    for (k, (sbar, generator)) in variations.iter().enumerate() {
        let vv = variation_vector(
            problem,
            &with_samples,
            *sbar,
            generator,
            variant,
            genjac_cfg,
        )?;
        // Transported candidate set: hull of Ε'_k(0,0,M_σ,ω_σ) · V over the
        // constant-sign selections σ and the hull vertices V.
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        for sign in [KinkSign::Neg, KinkSign::Mid, KinkSign::Pos] {
            let policy = SelectionPolicy::uniform(sign);
            let transport = transport_matrix(
                problem,
                &with_samples,
                &policy,
                *sbar,
                0.0,
                &vec![0.0; n],
                step,
                genjac_cfg.kappa,
            )?;
            for v in &vv.hull.vertices {
                let mut image = vec![0.0; n + 2];
                for (r, img) in image.iter_mut().enumerate() {
                    *img = (0..n + 2).map(|c| transport.matrix[(r, c)] * v[c]).sum();
                }
                candidates.push(image);
            }
        }
        let rows: Vec<(f64, f64)> = eps_schedule
            .iter()
            .map(|&e| -> Result<(f64, f64), VariationError> {
                let (y0, y, yl, _) =
                    endpoint_map(problem, ep, &[(*sbar, generator.clone())], &[e], step)?;
                let quotient: Vec<f64> = std::iter::once((y0 - reference[0]) / e)
                    .chain((0..n).map(|c| (y[c] - reference[1 + c]) / e))
                    .chain(std::iter::once((yl - reference[n + 1]) / e))
                    .collect();
                let shifted: Vec<Vec<f64>> = candidates
                    .iter()
                    .map(|p| p.iter().zip(quotient.iter()).map(|(a, b)| a - b).collect())
                    .collect();
                let d = {
                    let mn = min_norm_point(&shifted);
                    mn.iter().map(|x| x * x).sum::<f64>().sqrt()
                };
                Ok((e, d))
            })
            .collect::<Result<_, _>>()?;
        let final_distance = rows.last().map(|(_, d)| *d).unwrap_or(f64::INFINITY);
        // Non-increasing within a small floor that absorbs floating noise.
        let floor = 1e-9;
        let trend_ok = rows.windows(2).all(|w| w[1].1 <= w[0].1.max(floor) + floor);
        let rate = fit_rate(&rows);
        let pass = trend_ok && final_distance < tol;
        columns.push(QdqColumn {
            index: k,
            generator: match generator {
                VariationGenerator::Needle { w0, w, .. } => {
                    format!("needle(w0={w0}, w={w:?})")
                }
                VariationGenerator::Bracket { i, j } => format!("bracket({i}, {j})"),
            },
            rows,
            final_distance,
            rate,
            trend_ok,
            pass,
        });
    }
    let pass = columns.iter().all(|c| c.pass);
    Ok(QdqReport { columns, tol, pass })
}

/// Least-squares slope of log(distance) against log(ε); None when the
/// distances are at floating-point noise level.
fn fit_rate(rows: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, d)| *d > 1e-12)
        .map(|(e, d)| (e.ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    Some((m * sxy - sx * sy) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::{Multicone, PolyhedralCone};
    use crate::nsfield::{parse_expr, Dims, NonsmoothField};

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

    /// Smooth toy: g = (1,0), h = (0,x¹), zero drift.
    fn smooth_toy() -> StrictProblem {
        let dims = Dims::new(2, 2, 0);
        let pe = |s: &str| parse_expr(s, dims).unwrap();
        let mut p = sec5();
        p.dims = dims;
        p.m1 = 2;
        p.x0 = vec![0.0, 0.0];
        p.drift = NonsmoothField::new(dims, vec![pe("0"), pe("0")]);
        p.fields = vec![
            NonsmoothField::new(dims, vec![pe("1"), pe("0")]),
            NonsmoothField::new(dims, vec![pe("0"), pe("x1")]),
        ];
        p.variant_fields = None;
        p.psi = pe("0");
        p.control_cone =
            PolyhedralCone::from_generators(2, &[], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        p.target = Multicone::new(vec![PolyhedralCone::from_generators(
            3,
            &[],
            &[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        )
        .unwrap()])
        .unwrap();
        p.target_set = None;
        p
    }

    fn rest_process() -> ExtendedProcess {
        ExtendedProcess::from_pieces(vec![ExtPiece {
            duration: 1.0,
            w0: 1.0,
            w: vec![0.0, 0.0],
            alpha: vec![],
            zeta: 0.0,
        }])
    }

    #[test]
    fn needle_zero_eps_unchanged() {
        let ep = candidate();
        let out = apply_needle(&ep, 1.0, 1.0, &[0.0, 0.0], &[], 0.0, 0.0).unwrap();
        assert_eq!(out.pieces, ep.pieces);
    }

    #[test]
    fn needle_inserts_middle_piece() {
        let ep = candidate();
        let out = apply_needle(&ep, 1.0, 1.0, &[0.0, 0.0], &[], 0.0, 0.1).unwrap();
        assert_eq!(out.pieces.len(), 3);
        assert!((out.pieces[0].duration - 0.9).abs() < 1e-12);
        assert!((out.pieces[1].duration - 0.1).abs() < 1e-12);
        assert_eq!(out.pieces[1].w0, 1.0);
        assert_eq!(out.pieces[1].w, vec![0.0, 0.0]);
        assert!((out.pieces[2].duration - 1.0).abs() < 1e-12);
        let total: f64 = out.pieces.iter().map(|p| p.duration).sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn needle_errors_when_too_long() {
        let ep = candidate();
        assert!(matches!(
            apply_needle(&ep, 0.5, 1.0, &[0.0, 0.0], &[], 0.0, 0.6),
            Err(VariationError::NeedleTooLong { .. })
        ));
    }

    #[test]
    fn needle_at_breakpoint_shifts_left() {
        let ep = ExtendedProcess::from_pieces(vec![
            ExtPiece {
                duration: 1.0,
                w0: 1.0,
                w: vec![0.0, 0.0],
                alpha: vec![],
                zeta: 0.0,
            },
            ExtPiece {
                duration: 1.0,
                w0: 0.5,
                w: vec![0.5, 0.0],
                alpha: vec![],
                zeta: 0.0,
            },
        ]);
        let out = apply_needle(&ep, 1.0, 0.0, &[1.0, 0.0], &[], 0.0, 0.1).unwrap();
        assert!(out.warning.is_some());
        assert!((out.anchor - 0.5).abs() < 1e-12);
    }

    #[test]
    fn disjoint_needles_compose_in_any_order() {
        let p = sec5();
        let ep = candidate();
        let g1 = VariationGenerator::Needle {
            w0: 1.0,
            w: vec![0.0, 0.0],
            a: vec![],
            zeta: 0.0,
        };
        let g2 = VariationGenerator::Needle {
            w0: 0.0,
            w: vec![0.0, 1.0],
            a: vec![],
            zeta: 0.0,
        };
        let step = StepConfig::default();
        let e1 = endpoint_map(
            &p,
            &ep,
            &[(0.5, g1.clone()), (1.5, g2.clone())],
            &[0.05, 0.05],
            &step,
        )
        .unwrap();
        // Apply one at a time in the other order via intermediate schedules.
        let first = apply_needle(&ep, 1.5, 0.0, &[0.0, 1.0], &[], 0.0, 0.05).unwrap();
        let mid = ExtendedProcess {
            pieces: first.pieces,
            canonical: false,
            samples: None,
        };
        let second = apply_needle(&mid, 0.5, 1.0, &[0.0, 0.0], &[], 0.0, 0.05).unwrap();
        let final_ep = ExtendedProcess {
            pieces: second.pieces,
            canonical: false,
            samples: None,
        };
        let integrated = solve_forward(&p, &final_ep, None, &step).unwrap();
        let samples = integrated.samples.unwrap();
        let (y0, y, yl, beta) = samples.endpoint();
        assert!((e1.0 - y0).abs() < 1e-10);
        for (a, b) in e1.1.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((e1.2 - yl).abs() < 1e-10);
        assert!((e1.3 - beta).abs() < 1e-10);
    }

    #[test]
    fn bracket_schedule_structure() {
        let ep = candidate();
        let eps: f64 = 0.01;
        let r = eps.sqrt();
        let out = apply_bracket(&ep, 1.0, 1, 2, 2, eps).unwrap();
        let total: f64 = out.pieces.iter().map(|p| p.duration).sum();
        assert!((total - 2.0).abs() < 1e-12, "window length preserved");
        // Last four pieces before the tail are the impulse legs with w0 = 0.
        // Layout: [0, 1-8r] original, compressed doubled (4r), four legs (r
        // each), then [1, 2] original.
        let n_pieces = out.pieces.len();
        let tail = &out.pieces[n_pieces - 1];
        assert!((tail.duration - 1.0).abs() < 1e-12);
        let legs = &out.pieces[n_pieces - 5..n_pieces - 1];
        for leg in legs {
            assert_eq!(leg.w0, 0.0);
            assert!((leg.duration - r).abs() < 1e-12);
        }
        assert_eq!(legs[0].w, vec![1.0, 0.0]);
        assert_eq!(legs[1].w, vec![0.0, 1.0]);
        assert_eq!(legs[2].w, vec![-1.0, 0.0]);
        assert_eq!(legs[3].w, vec![0.0, -1.0]);
        // Compressed segment carries the doubled control.
        let compressed = &out.pieces[n_pieces - 6];
        assert!((compressed.duration - 4.0 * r).abs() < 1e-12);
        assert!((compressed.w0 - 1.0).abs() < 1e-12);
        assert!((compressed.w[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn bracket_window_error() {
        let ep = candidate();
        assert!(matches!(
            apply_bracket(&ep, 0.5, 1, 2, 2, 0.01),
            Err(VariationError::BracketTooLong { .. })
        ));
    }

    #[test]
    fn bracket_displacement_on_smooth_pair() {
        // Fields (1,0) and (0,x¹): classical bracket (0,1); the endpoint
        // displacement of the variation must be ε·(0,1) + o(ε).
        let p = smooth_toy();
        let ep = rest_process();
        let step = StepConfig::default();
        let (y0_ref, y_ref, _, _) = endpoint_map(&p, &ep, &[], &[], &step).unwrap();
        assert_eq!(y_ref, vec![0.0, 0.0]);
        let generator = VariationGenerator::bracket(1, 2, 2).unwrap();
        for eps in [1e-2, 1e-3, 1e-4] {
            let (y0, y, _, _) =
                endpoint_map(&p, &ep, &[(0.9, generator.clone())], &[eps], &step).unwrap();
            assert!((y0 - y0_ref).abs() < 1e-12, "y0 frozen during legs");
            assert!(
                (y[1] - eps).abs() < 0.05 * eps,
                "eps {eps}: displacement {} vs {eps}",
                y[1]
            );
            assert!(y[0].abs() < 1e-10);
        }
    }

    #[test]
    fn variation_vector_of_reference_needle_is_zero() {
        let p = sec5();
        let ep = solve_forward(&p, &candidate(), None, &StepConfig::default()).unwrap();
        let g = VariationGenerator::Needle {
            w0: 0.5,
            w: vec![-0.5, 0.0],
            a: vec![],
            zeta: 0.0,
        };
        let vv = variation_vector(&p, &ep, 1.0, &g, false, &GenJacConfig::default()).unwrap();
        assert!(vv.hull.is_singleton());
        assert!(vv.hull.vertices[0].iter().all(|v| v.abs() < 1e-9));
        assert!(vv.v_nu.unwrap().abs() < 1e-9);
    }

    #[test]
    fn variation_vector_sec5_needle_formula() {
        // Needle (w0, w) = (1, 0): v = (1/2, (1/2, 0, -1/2), 0).
        let p = sec5();
        let ep = solve_forward(&p, &candidate(), None, &StepConfig::default()).unwrap();
        let g = VariationGenerator::Needle {
            w0: 1.0,
            w: vec![0.0, 0.0],
            a: vec![],
            zeta: 0.0,
        };
        let vv = variation_vector(&p, &ep, 1.0, &g, false, &GenJacConfig::default()).unwrap();
        let v = &vv.hull.vertices[0];
        assert!((v[0] - 0.5).abs() < 1e-9);
        assert!((v[1] - 0.5).abs() < 1e-9);
        assert!(v[2].abs() < 1e-9);
        assert!((v[3] + 0.5).abs() < 1e-9);
        assert!(v[4].abs() < 1e-9);
        // v_nu = |0| - |w̄| = -1/2.
        assert!((vv.v_nu.unwrap() + 0.5).abs() < 1e-9);
    }

    #[test]
    fn variation_vector_sec5_bracket_hulls() {
        let p = sec5();
        let ep = solve_forward(&p, &candidate(), None, &StepConfig::default()).unwrap();
        let g = VariationGenerator::bracket(1, 2, 2).unwrap();
        let vv = variation_vector(&p, &ep, 1.0, &g, false, &GenJacConfig::default()).unwrap();
        let mut thirds: Vec<f64> = vv.hull.vertices.iter().map(|v| v[3]).collect();
        thirds.sort_by(f64::total_cmp);
        assert_eq!(thirds, vec![0.0, 2.0]);
        let vv = variation_vector(&p, &ep, 1.0, &g, true, &GenJacConfig::default()).unwrap();
        let mut thirds: Vec<f64> = vv.hull.vertices.iter().map(|v| v[3]).collect();
        thirds.sort_by(f64::total_cmp);
        assert_eq!(thirds, vec![2.0, 4.0]);
        for v in &vv.hull.vertices {
            assert_eq!(v[0], 0.0);
            assert_eq!(v[4], 0.0);
        }
    }

    #[test]
    fn endpoint_map_zero_eps_is_reference() {
        let p = sec5();
        let ep = candidate();
        let g = VariationGenerator::Needle {
            w0: 1.0,
            w: vec![0.0, 0.0],
            a: vec![],
            zeta: 0.0,
        };
        let step = StepConfig::default();
        let a = endpoint_map(&p, &ep, &[], &[], &step).unwrap();
        let b = endpoint_map(&p, &ep, &[(1.0, g)], &[0.0], &step).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn window_overlap_detected() {
        let p = sec5();
        let ep = candidate();
        let g = VariationGenerator::Needle {
            w0: 1.0,
            w: vec![0.0, 0.0],
            a: vec![],
            zeta: 0.0,
        };
        let err = endpoint_map(
            &p,
            &ep,
            &[(1.0, g.clone()), (1.05, g)],
            &[0.2, 0.2],
            &StepConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, VariationError::WindowOverlap(..)));
    }

    #[test]
    fn additivity_of_disjoint_variations() {
        let p = sec5();
        let ep = candidate();
        let step = StepConfig::default();
        let g1 = VariationGenerator::Needle {
            w0: 1.0,
            w: vec![0.0, 0.0],
            a: vec![],
            zeta: 0.0,
        };
        let g2 = VariationGenerator::Needle {
            w0: 0.0,
            w: vec![0.0, -1.0],
            a: vec![],
            zeta: 0.0,
        };
        let vars = [(0.7, g1), (1.6, g2)];
        let y_0 = endpoint_map(&p, &ep, &vars, &[0.0, 0.0], &step).unwrap();
        for scale in [1e-2, 1e-3] {
            let joint = endpoint_map(&p, &ep, &vars, &[scale, scale], &step).unwrap();
            let only1 = endpoint_map(&p, &ep, &vars, &[scale, 0.0], &step).unwrap();
            let only2 = endpoint_map(&p, &ep, &vars, &[0.0, scale], &step).unwrap();
            let norm: f64 = (0..3)
                .map(|c| {
                    let joint_d = joint.1[c] - y_0.1[c];
                    let sum_d = (only1.1[c] - y_0.1[c]) + (only2.1[c] - y_0.1[c]);
                    (joint_d - sum_d).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            // Remainder is o(|ε|): comfortably below 0.1·|ε| here.
            assert!(
                norm <= 0.1 * (2.0 * scale * scale).sqrt(),
                "{norm} at {scale}"
            );
        }
    }

    #[test]
    fn bracket_legs_freeze_time_and_run_beta_at_unit_rate() {
        let p = sec5();
        let ep = candidate();
        let eps = 0.01;
        let out = apply_bracket(&ep, 1.0, 1, 2, 2, eps).unwrap();
        let perturbed = ExtendedProcess {
            pieces: out.pieces,
            canonical: false,
            samples: None,
        };
        let integrated = solve_forward(&p, &perturbed, None, &StepConfig::default()).unwrap();
        let tr = integrated.samples.unwrap();
        // In the legs window [1-4r, 1], y0 is constant and beta grows at
        // rate 1 exactly.
        let r = eps.sqrt();
        let (y0_a, _, _, beta_a) = tr.state_at(1.0 - 4.0 * r);
        let (y0_b, _, _, beta_b) = tr.state_at(1.0);
        assert!((y0_b - y0_a).abs() < 1e-12);
        assert!((beta_b - beta_a - 4.0 * r).abs() < 1e-9);
    }

    #[test]
    fn reversed_legs_negate_bracket_displacement_on_smooth_pair() {
        let p = smooth_toy();
        let ep = rest_process();
        let step = StepConfig::default();
        let eps = 1e-3;
        let forward = endpoint_map(
            &p,
            &ep,
            &[(0.9, VariationGenerator::bracket(1, 2, 2).unwrap())],
            &[eps],
            &step,
        )
        .unwrap();
        let reversed = endpoint_map(
            &p,
            &ep,
            &[(0.9, VariationGenerator::bracket(2, 1, 2).unwrap())],
            &[eps],
            &step,
        )
        .unwrap();
        // Displacements negate up to o(ε).
        for c in 0..2 {
            let df = forward.1[c];
            let dr = reversed.1[c];
            assert!((df + dr).abs() <= 0.05 * eps, "component {c}: {df} vs {dr}");
        }
    }

    #[test]
    fn qdq_oracle_smooth_toy() {
        let p = smooth_toy();
        let ep = rest_process();
        let step = StepConfig::default();
        let report = qdq_oracle(
            &p,
            &ep,
            &[(0.9, VariationGenerator::bracket(1, 2, 2).unwrap())],
            &[1e-2, 1e-3, 1e-4],
            1e-3,
            false,
            &step,
            &GenJacConfig::default(),
        )
        .unwrap();
        assert!(report.pass, "{:?}", report.columns[0].rows);
        assert!(report.columns[0].final_distance < 1e-3);
    }

    #[test]
    fn qdq_oracle_zero_variation() {
        let p = sec5();
        let ep = candidate();
        let g = VariationGenerator::Needle {
            w0: 0.5,
            w: vec![-0.5, 0.0],
            a: vec![],
            zeta: 0.0,
        };
        let report = qdq_oracle(
            &p,
            &ep,
            &[(1.0, g)],
            &[1e-2, 1e-3],
            1e-4,
            false,
            &StepConfig::default(),
            &GenJacConfig::default(),
        )
        .unwrap();
        assert!(report.pass);
        // The quotient divides step-alignment noise by ε; distances sit at
        // amplified floating noise, far below the tolerance.
        for (_, d) in &report.columns[0].rows {
            assert!(*d < 1e-8, "distance {d}");
        }
    }
}
