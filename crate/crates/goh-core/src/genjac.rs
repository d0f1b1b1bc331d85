//! Clarke generalized Jacobians, set-valued Lie brackets, and their covector
//! projections.
//!
//! Three estimators are provided and kept independent so they can act as
//! oracles for each other:
//!
//! - **enumeration** — hull of the limit Jacobians under every feasible kink
//!   sign pattern (exact for expression fields);
//! - **sampling** — hull of classical Jacobians at points drawn from balls of
//!   shrinking radius, kink-adjacent points rejected;
//! - **mollified** — hull of convolved Jacobians `Df^ε = η_ε * Df` over an ε
//!   schedule, each approximated by Monte-Carlo quadrature with the standard
//!   bump mollifier.
//!
//! Sampling loops are data-parallel with per-sample seeds, so hulls are
//! bit-identical regardless of worker count.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

pub use crate::hull::{ConvexHullSet, HullMeta};

use crate::exec;
use crate::nsfield::{
    enumerate_patterns, sites_tagged, Env, EvalError, NonsmoothField, PatternConfig, PatternError,
    Var,
};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenJacError {
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no samples accepted by the kink-adjacency filter")]
    ZeroAcceptedSamples,
    #[error("dimension mismatch: covector has {covector}, hull has {hull}")]
    DimensionMismatch { covector: usize, hull: usize },
    #[error("method {0} is not defined for set-valued brackets")]
    UnsupportedMethod(&'static str),
    #[error("set-valued brackets need vector fields with n components, got {0}")]
    NotAVectorField(usize),
}

/// Estimator selection for [`clarke_jacobian`] and [`setvalued_bracket`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Enumeration,
    Sampling,
    Mollified,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Enumeration => "enumeration",
            Method::Sampling => "sampling",
            Method::Mollified => "mollified",
        }
    }
}

/// Estimator parameters. Defaults implement the documented schedules:
/// sampling radii `r_k = r0·2^-k`, k = 0..6, 512 samples per radius, hull
/// taken at the smallest radius with ≥ 32 accepted samples; kink-adjacency
/// rejection margin `10κ`; mollifier quadrature with 1024 points per ε.
#[derive(Clone, Debug, Serialize)]
pub struct GenJacConfig {
    pub kappa: f64,
    pub pattern_cap: usize,
    pub feasibility_samples: usize,
    pub enum_radius: f64,
    pub r0: f64,
    pub num_radii: usize,
    pub samples_per_radius: usize,
    pub min_accepted: usize,
    pub reject_margin_factor: f64,
    pub mollified_eps: Vec<f64>,
    pub mollified_points: usize,
    pub seed: u64,
}

impl Default for GenJacConfig {
    fn default() -> Self {
        GenJacConfig {
            kappa: 1e-9,
            pattern_cap: 16,
            feasibility_samples: 64,
            enum_radius: 1e-3,
            r0: 1e-3,
            num_radii: 7,
            samples_per_radius: 512,
            min_accepted: 32,
            reject_margin_factor: 10.0,
            mollified_eps: vec![1e-2, 1e-3, 1e-4],
            mollified_points: 1024,
            seed: 0,
        }
    }
}

impl GenJacConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn pattern_config(&self) -> PatternConfig {
        PatternConfig {
            kappa: self.kappa,
            cap: self.pattern_cap,
            samples: self.feasibility_samples,
            seed: self.seed,
        }
    }
}

/// A closed interval; the image of a vector hull under a covector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "interval endpoints out of order: [{lo}, {hi}]");
        Interval { lo, hi }
    }

    /// Normalize endpoints written in either order.
    pub fn from_endpoints(a: f64, b: f64) -> Self {
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Hausdorff distance between intervals.
    pub fn hausdorff(&self, other: &Interval) -> f64 {
        (self.lo - other.lo).abs().max((self.hi - other.hi).abs())
    }
}

/// Verdict of the zero-membership test behind the Goh condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GohVerdict {
    Holds,
    Marginal,
    Fails,
}

/// Clarke generalized Jacobian of `field` with respect to `wrt` at the point
/// bound in `env`.
pub fn clarke_jacobian(
    field: &NonsmoothField,
    env: &Env,
    wrt: &[Var],
    method: Method,
    cfg: &GenJacConfig,
) -> Result<ConvexHullSet, GenJacError> {
    let rows = field.n_out();
    let cols = wrt.len();
    match method {
        Method::Enumeration => {
            let pats = field.sign_patterns(env, wrt, cfg.enum_radius, &cfg.pattern_config())?;
            let points: Vec<Vec<f64>> = pats.into_iter().map(|(_, jac)| flatten(&jac)).collect();
            Ok(ConvexHullSet::from_points(
                rows,
                cols,
                points,
                HullMeta {
                    estimator: "enumeration".into(),
                    radii: vec![cfg.enum_radius],
                    samples_accepted: 0,
                },
            ))
        }
        Method::Sampling => sampling_hull(env, wrt, cfg, 0x11, |env_y| {
            sampled_jacobian(&[field], env_y, wrt, cfg).map(|jacs| flatten(&jacs[0]))
        }),
        Method::Mollified => mollified_hull(field, env, wrt, cfg),
    }
}

/// Shared sampling driver: draws points from balls of shrinking radius around
/// the `wrt` coordinates, keeps values produced by `eval_at`, and reports the
/// hull at the smallest radius with enough accepted samples.
fn sampling_hull(
    env: &Env,
    wrt: &[Var],
    cfg: &GenJacConfig,
    lane_tag: u64,
    eval_at: impl Fn(&Env) -> Option<Vec<f64>> + Sync,
) -> Result<ConvexHullSet, GenJacError> {
    let center: Vec<f64> = wrt
        .iter()
        .map(|v| var_value(env, *v))
        .collect::<Result<_, _>>()?;
    let mut per_radius: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    for k in 0..cfg.num_radii {
        let radius = cfg.r0 * 0.5f64.powi(k as i32);
        let lane = rng::derive_key(cfg.seed, lane_tag, k as u64);
        let hits = exec::map_indexed(cfg.samples_per_radius, |i| {
            let mut r = rng::sample_rng(cfg.seed, lane, i as u64);
            let y = rng::uniform_in_ball(&mut r, &center, radius);
            let owned = override_vars(env, wrt, &y);
            eval_at(&owned.as_env())
        });
        per_radius.push((radius, hits.into_iter().flatten().collect()));
    }
    // Smallest radius meeting the acceptance threshold; else the radius with
    // the most accepted samples.
    let chosen = per_radius
        .iter()
        .rev()
        .find(|(_, pts)| pts.len() >= cfg.min_accepted)
        .or_else(|| per_radius.iter().max_by_key(|(_, pts)| pts.len()));
    let (radius, points) = chosen.ok_or(GenJacError::ZeroAcceptedSamples)?;
    if points.is_empty() {
        return Err(GenJacError::ZeroAcceptedSamples);
    }
    let dim = points[0].len();
    Ok(ConvexHullSet::from_points(
        dim,
        1,
        points.clone(),
        HullMeta {
            estimator: "sampling".into(),
            radii: vec![*radius],
            samples_accepted: points.len(),
        },
    ))
}

/// Classical Jacobians of all fields at a sample point, or None when any
/// field has a kink argument within the rejection margin.
fn sampled_jacobian(
    fields: &[&NonsmoothField],
    env: &Env,
    wrt: &[Var],
    cfg: &GenJacConfig,
) -> Option<Vec<DMatrix<f64>>> {
    let margin = cfg.kappa * cfg.reject_margin_factor;
    let mut out = Vec::with_capacity(fields.len());
    for f in fields {
        match f.kink_sites(env, wrt, margin) {
            Ok(sites) if sites.is_empty() => {}
            _ => return None,
        }
        match f.jacobian_with_signs(env, wrt, &|_| None) {
            Ok(j) => out.push(j),
            Err(_) => return None,
        }
    }
    Some(out)
}

fn mollified_hull(
    field: &NonsmoothField,
    env: &Env,
    wrt: &[Var],
    cfg: &GenJacConfig,
) -> Result<ConvexHullSet, GenJacError> {
    let rows = field.n_out();
    let cols = wrt.len();
    let center: Vec<f64> = wrt
        .iter()
        .map(|v| var_value(env, *v))
        .collect::<Result<_, _>>()?;
    let mut matrices = Vec::new();
    for (ei, eps) in cfg.mollified_eps.iter().enumerate() {
        let lane = rng::derive_key(cfg.seed, 0x77, ei as u64);
        let terms = exec::map_indexed(cfg.mollified_points, |i| {
            let mut r = rng::sample_rng(cfg.seed, lane, i as u64);
            let offset = rng::uniform_in_ball(&mut r, &vec![0.0; center.len()], *eps);
            let rho2: f64 = offset.iter().map(|o| (o / eps) * (o / eps)).sum();
            if rho2 >= 1.0 {
                return None;
            }
            let weight = (-1.0 / (1.0 - rho2)).exp();
            let y: Vec<f64> = center
                .iter()
                .zip(offset.iter())
                .map(|(c, o)| c - o)
                .collect();
            let owned = override_vars(env, wrt, &y);
            sampled_jacobian(&[field], &owned.as_env(), wrt, cfg)
                .map(|jacs| (weight, flatten(&jacs[0])))
        });
        let mut total = 0.0;
        let mut acc = vec![0.0; rows * cols];
        let mut used = 0usize;
        for term in terms.into_iter().flatten() {
            let (w, jac) = term;
            total += w;
            used += 1;
            for (a, j) in acc.iter_mut().zip(jac.iter()) {
                *a += w * j;
            }
        }
        if used == 0 || total == 0.0 {
            return Err(GenJacError::ZeroAcceptedSamples);
        }
        for a in acc.iter_mut() {
            *a /= total;
        }
        matrices.push(acc);
    }
    Ok(ConvexHullSet::from_points(
        rows,
        cols,
        matrices,
        HullMeta {
            estimator: "mollified".into(),
            radii: cfg.mollified_eps.clone(),
            samples_accepted: cfg.mollified_points,
        },
    ))
}

/// Set-valued Lie bracket `[g, h]` at the point bound in `env`, using the
/// convention `[g,h] = Dh·g − Dg·h`. The result for the swapped pair is the
/// exact vertex-for-vertex negation.
pub fn setvalued_bracket(
    g: &NonsmoothField,
    h: &NonsmoothField,
    env: &Env,
    method: Method,
    cfg: &GenJacConfig,
) -> Result<ConvexHullSet, GenJacError> {
    if g.n_out() != g.dims.n {
        return Err(GenJacError::NotAVectorField(g.n_out()));
    }
    if h.n_out() != h.dims.n {
        return Err(GenJacError::NotAVectorField(h.n_out()));
    }
    // Canonical operand order keeps antisymmetry exact: the hull is computed
    // once and negated for the swapped call.
    let key = |f: &NonsmoothField| -> Vec<String> {
        f.components.iter().map(|c| c.to_string()).collect()
    };
    if key(g) > key(h) {
        return Ok(setvalued_bracket(h, g, env, method, cfg)?.negated());
    }
    let wrt: Vec<Var> = (0..g.dims.n).map(Var::X).collect();
    match method {
        Method::Enumeration => {
            let sites_g = g.kink_sites(env, &wrt, cfg.kappa)?;
            let sites_h = h.kink_sites(env, &wrt, cfg.kappa)?;
            let mut tagged = sites_tagged(&sites_g, 0);
            tagged.extend(sites_tagged(&sites_h, 1));
            let patterns = enumerate_patterns(
                &[g, h],
                env,
                &wrt,
                &tagged,
                cfg.enum_radius,
                &cfg.pattern_config(),
            )?;
            let g_val = g.eval(env)?;
            let h_val = h.eval(env)?;
            let points: Vec<Vec<f64>> = patterns
                .into_iter()
                .map(|(_, jacs)| bracket_value(&jacs[0], &jacs[1], &g_val, &h_val))
                .collect();
            Ok(ConvexHullSet::from_points(
                g.dims.n,
                1,
                points,
                HullMeta {
                    estimator: "enumeration".into(),
                    radii: vec![cfg.enum_radius],
                    samples_accepted: 0,
                },
            ))
        }
        Method::Sampling => sampling_hull(env, &wrt, cfg, 0x22, |env_y| {
            let jacs = sampled_jacobian(&[g, h], env_y, &wrt, cfg)?;
            let g_val = g.eval(env_y).ok()?;
            let h_val = h.eval(env_y).ok()?;
            Some(bracket_value(&jacs[0], &jacs[1], &g_val, &h_val))
        }),
        Method::Mollified => Err(GenJacError::UnsupportedMethod("mollified")),
    }
}

/// `Dh·g − Dg·h`.
fn bracket_value(dg: &DMatrix<f64>, dh: &DMatrix<f64>, g: &[f64], h: &[f64]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|r| {
            let mut acc = 0.0;
            for c in 0..n {
                acc += dh[(r, c)] * g[c] - dg[(r, c)] * h[c];
            }
            acc
        })
        .collect()
}

/// Image of a vector hull under a covector: `[min p·v, max p·v]`.
pub fn covector_interval(p: &[f64], hull: &ConvexHullSet) -> Result<Interval, GenJacError> {
    if p.len() != hull.dim() {
        return Err(GenJacError::DimensionMismatch {
            covector: p.len(),
            hull: hull.dim(),
        });
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in &hull.vertices {
        let val: f64 = p.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        lo = lo.min(val);
        hi = hi.max(val);
    }
    Ok(Interval::new(lo, hi))
}

/// Zero-membership test for a covector-bracket interval: `fails` when 0 lies
/// outside the interval inflated by `tol`, `marginal` when 0 is within `tol`
/// of an endpoint, `holds` when 0 is strictly inside.
pub fn goh_zero_membership(interval: &Interval, tol: f64) -> GohVerdict {
    assert!(tol >= 0.0);
    if 0.0 < interval.lo - tol || 0.0 > interval.hi + tol {
        GohVerdict::Fails
    } else if interval.lo.abs() <= tol || interval.hi.abs() <= tol {
        GohVerdict::Marginal
    } else {
        GohVerdict::Holds
    }
}

fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

fn var_value(env: &Env, v: Var) -> Result<f64, EvalError> {
    // Round-trip through a one-node expression keeps the lookup logic single.
    crate::nsfield::Expr::Var(v).eval(env)
}

/// Owned variable assignment used to perturb arbitrary coordinates.
pub(crate) struct OwnedEnv {
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub w0: Option<f64>,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub a: Vec<f64>,
}

impl OwnedEnv {
    pub fn as_env(&self) -> Env<'_> {
        Env {
            t: self.t,
            s: self.s,
            w0: self.w0,
            x: &self.x,
            u: &self.u,
            a: &self.a,
        }
    }
}

pub(crate) fn override_vars(env: &Env, wrt: &[Var], values: &[f64]) -> OwnedEnv {
    let mut owned = OwnedEnv {
        t: env.t,
        s: env.s,
        w0: env.w0,
        x: env.x.to_vec(),
        u: env.u.to_vec(),
        a: env.a.to_vec(),
    };
    for (v, val) in wrt.iter().zip(values.iter()) {
        match v {
            Var::T => owned.t = Some(*val),
            Var::S => owned.s = Some(*val),
            Var::W0 => owned.w0 = Some(*val),
            Var::X(i) => {
                if owned.x.len() <= *i {
                    owned.x.resize(*i + 1, 0.0);
                }
                owned.x[*i] = *val;
            }
            Var::U(i) => {
                if owned.u.len() <= *i {
                    owned.u.resize(*i + 1, 0.0);
                }
                owned.u[*i] = *val;
            }
            Var::A(i) => {
                if owned.a.len() <= *i {
                    owned.a.resize(*i + 1, 0.0);
                }
                owned.a[*i] = *val;
            }
        }
    }
    owned
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nsfield::{parse_expr, Dims};

    fn field(n: usize, m: usize, comps: &[&str]) -> NonsmoothField {
        let dims = Dims::new(n, m, 0);
        NonsmoothField::new(
            dims,
            comps.iter().map(|c| parse_expr(c, dims).unwrap()).collect(),
        )
    }

    fn sec5_g1() -> NonsmoothField {
        field(3, 2, &["1", "0", "x2 - abs(x2)"])
    }

    fn sec5_g1_variant() -> NonsmoothField {
        field(3, 2, &["1", "0", "abs(x2) - x2"])
    }

    fn sec5_g2() -> NonsmoothField {
        field(3, 2, &["0", "1", "x1 + abs(x1)"])
    }

    fn sorted_scalars(h: &ConvexHullSet, idx: usize) -> Vec<f64> {
        let mut v: Vec<f64> = h.vertices.iter().map(|p| p[idx]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn clarke_of_abs_is_minus_one_to_one() {
        let f = field(1, 0, &["abs(x1)"]);
        let cfg = GenJacConfig::default();
        for method in [Method::Enumeration, Method::Sampling, Method::Mollified] {
            let hull =
                clarke_jacobian(&f, &Env::state(&[0.0]), &[Var::X(0)], method, &cfg).unwrap();
            match method {
                Method::Enumeration => {
                    assert_eq!(sorted_scalars(&hull, 0), vec![-1.0, 1.0]);
                }
                Method::Sampling => {
                    let vs = sorted_scalars(&hull, 0);
                    assert_eq!(vs, vec![-1.0, 1.0]);
                }
                Method::Mollified => {
                    // Each Df^ε lies in [-1, 1]; the hull must too.
                    assert!(hull.vertices.iter().all(|v| v[0].abs() <= 1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn clarke_of_smooth_field_is_singleton() {
        let f = field(2, 0, &["x1^2 + x2", "x1 * x2"]);
        let cfg = GenJacConfig::default();
        let env = Env::state(&[0.5, 2.0]);
        let wrt = [Var::X(0), Var::X(1)];
        let hull = clarke_jacobian(&f, &env, &wrt, Method::Enumeration, &cfg).unwrap();
        assert!(hull.is_singleton());
        assert_eq!(hull.vertices[0], vec![1.0, 1.0, 2.0, 0.5]);
        let sampled = clarke_jacobian(&f, &env, &wrt, Method::Sampling, &cfg).unwrap();
        assert!(hull.hausdorff(&sampled) < 1e-2);
    }

    #[test]
    fn clarke_of_sec5_field_on_the_kink() {
        let g1 = sec5_g1();
        let cfg = GenJacConfig::default();
        let env = Env::state(&[1.0, 0.0, 0.0]);
        let wrt = [Var::X(0), Var::X(1), Var::X(2)];
        let hull = clarke_jacobian(&g1, &env, &wrt, Method::Enumeration, &cfg).unwrap();
        // All rows zero except the (3, 2) entry spanning {0, 2}.
        assert_eq!(hull.vertices.len(), 2);
        let idx = 2 * 3 + 1; // row 3, column 2, row-major
        assert_eq!(sorted_scalars(&hull, idx), vec![0.0, 2.0]);
        for v in &hull.vertices {
            for (i, entry) in v.iter().enumerate() {
                if i != idx {
                    assert_eq!(*entry, 0.0);
                }
            }
        }
    }

    #[test]
    fn bracket_of_constant_and_linear_fields() {
        let g = field(2, 0, &["1", "0"]);
        let h = field(2, 0, &["0", "x1"]);
        let cfg = GenJacConfig::default();
        let hull = setvalued_bracket(&g, &h, &Env::state(&[0.3, -0.7]), Method::Enumeration, &cfg)
            .unwrap();
        assert!(hull.is_singleton());
        assert_eq!(hull.vertices[0], vec![0.0, 1.0]);
    }

    #[test]
    fn bracket_of_field_with_itself_is_zero() {
        let g1 = sec5_g1();
        let cfg = GenJacConfig::default();
        let hull = setvalued_bracket(
            &g1,
            &g1.clone(),
            &Env::state(&[1.0, 0.0, 0.0]),
            Method::Enumeration,
            &cfg,
        )
        .unwrap();
        assert!(hull.is_singleton());
        assert_eq!(hull.vertices[0], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn sec5_bracket_as_printed_and_variant() {
        let cfg = GenJacConfig::default();
        let env = Env::state(&[1.0, 0.0, 0.0]);
        // As printed: third component spans [0, 2].
        let hull =
            setvalued_bracket(&sec5_g1(), &sec5_g2(), &env, Method::Enumeration, &cfg).unwrap();
        assert_eq!(sorted_scalars(&hull, 2), vec![0.0, 2.0]);
        assert!(hull.vertices.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
        // Variant first field: third component spans [2, 4].
        let hull_v = setvalued_bracket(
            &sec5_g1_variant(),
            &sec5_g2(),
            &env,
            Method::Enumeration,
            &cfg,
        )
        .unwrap();
        assert_eq!(sorted_scalars(&hull_v, 2), vec![2.0, 4.0]);
    }

    #[test]
    fn bracket_antisymmetry_is_exact() {
        let cfg = GenJacConfig::default();
        let env = Env::state(&[1.0, 0.0, 0.0]);
        for method in [Method::Enumeration, Method::Sampling] {
            let ab = setvalued_bracket(&sec5_g1(), &sec5_g2(), &env, method, &cfg).unwrap();
            let ba = setvalued_bracket(&sec5_g2(), &sec5_g1(), &env, method, &cfg).unwrap();
            let mut neg: Vec<Vec<f64>> = ba.negated().vertices;
            let mut fwd = ab.vertices.clone();
            neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
            fwd.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(fwd, neg, "method {method:?}");
        }
    }

    #[test]
    fn covector_interval_examples() {
        // Variant bracket hull {0}×{0}×[2,4] against p = (0, p2, -1).
        let hull = ConvexHullSet::from_points(
            3,
            1,
            vec![vec![0.0, 0.0, 2.0], vec![0.0, 0.0, 4.0]],
            HullMeta::default(),
        );
        let i = covector_interval(&[0.0, 2.0, -1.0], &hull).unwrap();
        assert_eq!((i.lo, i.hi), (-4.0, -2.0));
        let i = covector_interval(&[0.0, 0.0, 0.0], &hull).unwrap();
        assert_eq!((i.lo, i.hi), (0.0, 0.0));
        let printed = ConvexHullSet::from_points(
            3,
            1,
            vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 2.0]],
            HullMeta::default(),
        );
        let i = covector_interval(&[0.0, 0.0, -1.0], &printed).unwrap();
        assert_eq!((i.lo, i.hi), (-2.0, 0.0));
        assert!(matches!(
            covector_interval(&[1.0, 0.0], &hull),
            Err(GenJacError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn goh_membership_examples() {
        let tol = 1e-6;
        assert_eq!(
            goh_zero_membership(&Interval::new(-4.0, -2.0), tol),
            GohVerdict::Fails
        );
        assert_eq!(
            goh_zero_membership(&Interval::new(-2.0, 0.0), tol),
            GohVerdict::Marginal
        );
        assert_eq!(
            goh_zero_membership(&Interval::new(-1.0, 1.0), tol),
            GohVerdict::Holds
        );
        assert_eq!(
            goh_zero_membership(&Interval::new(0.0, 0.0), tol),
            GohVerdict::Marginal
        );
    }

    #[test]
    fn covector_positive_scaling_equivariance() {
        let hull = ConvexHullSet::from_points(
            2,
            1,
            vec![vec![1.0, -2.0], vec![-0.5, 3.0], vec![2.0, 2.0]],
            HullMeta::default(),
        );
        let p = [0.7, -1.3];
        let base = covector_interval(&p, &hull).unwrap();
        for alpha in [0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = p.iter().map(|v| alpha * v).collect();
            let i = covector_interval(&scaled, &hull).unwrap();
            assert!((i.lo - alpha * base.lo).abs() < 1e-12);
            assert!((i.hi - alpha * base.hi).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_monotone_in_radius() {
        let g1 = sec5_g1();
        let env = Env::state(&[1.0, 0.0, 0.0]);
        let wrt = [Var::X(0), Var::X(1), Var::X(2)];
        let small = GenJacConfig {
            r0: 1e-4,
            num_radii: 1,
            ..Default::default()
        };
        let large = GenJacConfig {
            r0: 1e-2,
            num_radii: 1,
            ..Default::default()
        };
        let h_small = clarke_jacobian(&g1, &env, &wrt, Method::Sampling, &small).unwrap();
        let h_large = clarke_jacobian(&g1, &env, &wrt, Method::Sampling, &large).unwrap();
        assert!(h_small.contained_in(&h_large, 1e-6));
    }
}
