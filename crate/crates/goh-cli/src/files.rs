//! TOML file schemas and their conversion into core types.
//!
//! Three document kinds: the problem file (dimensions, fields, costs, cone,
//! target), the process file (extended control pieces, optional endpoint
//! target override), and the multiplier file (p0, λ, π, and the costate as
//! expressions in `s` or as a terminal value plus a selection policy).
//! Numeric fields accept integers or floats.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use goh_core::cones::{Multicone, PolyhedralCone};
use goh_core::integrate::{FieldRef, KinkSign, SelectionPolicy};
use goh_core::nsfield::{parse_expr, Dims, Expr, NonsmoothField};
use goh_core::problem::{
    ControlNorm, CostatePath, ExtPiece, ExtendedProcess, Multipliers, StrictPiece, StrictProblem,
    StrictProcess, TargetSet,
};

/// TOML number that may be written as integer or float.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Num {
    I(i64),
    F(f64),
}

impl From<Num> for f64 {
    fn from(n: Num) -> f64 {
        match n {
            Num::I(i) => i as f64,
            Num::F(f) => f,
        }
    }
}

fn vec_f64(v: &[Num]) -> Vec<f64> {
    v.iter().map(|n| f64::from(*n)).collect()
}

fn mat_f64(v: &[Vec<Num>]) -> Vec<Vec<f64>> {
    v.iter().map(|row| vec_f64(row)).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub problem: ProblemSection,
    pub cone: ConeSection,
    #[serde(rename = "A", default)]
    pub a: BoxSection,
    pub target: TargetSection,
    #[serde(default)]
    pub variant: Option<VariantSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub n: usize,
    pub m: usize,
    pub m1: usize,
    pub q: usize,
    pub drift: Vec<String>,
    pub g: Vec<Vec<String>>,
    #[serde(default)]
    pub l0: Option<String>,
    #[serde(default)]
    pub l1: Option<String>,
    #[serde(default)]
    pub recession: Option<String>,
    pub psi: String,
    pub x0: Vec<Num>,
    #[serde(rename = "K")]
    pub budget: Option<Num>,
    #[serde(default)]
    pub norm: Option<String>,
    #[serde(default)]
    pub rho: Option<Num>,
    #[serde(default)]
    pub lipschitz: Option<Num>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConeSection {
    #[serde(default)]
    pub generators: Vec<Vec<Num>>,
    #[serde(default)]
    pub lines: Vec<Vec<Num>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    #[serde(default)]
    pub lower: Vec<Num>,
    #[serde(default)]
    pub upper: Vec<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub cones: Vec<ConeSection>,
    #[serde(default)]
    pub set: Option<TargetSetSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSetSection {
    #[serde(default)]
    pub t_range: Option<Vec<Num>>,
    #[serde(default)]
    pub ball: Option<BallSection>,
    #[serde(default, rename = "box")]
    pub box_bounds: Option<BoxSection>,
    #[serde(default)]
    pub point: Option<Vec<Num>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSection {
    pub center: Vec<Num>,
    pub radius: Num,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSection {
    pub g: Vec<Vec<String>>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessFile {
    #[serde(rename = "piece")]
    pub pieces: Vec<PieceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetOverrideSection>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSection {
    pub duration: Num,
    pub w0: Num,
    pub w: Vec<Num>,
    #[serde(default)]
    pub alpha: Vec<Num>,
    #[serde(default)]
    pub zeta: Option<Num>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TargetOverrideSection {
    pub cones: Vec<ConeOverrideSection>,
}

#[derive(Debug, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConeOverrideSection {
    #[serde(default)]
    pub generators: Vec<Vec<Num>>,
    #[serde(default)]
    pub lines: Vec<Vec<Num>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrictProcessFile {
    #[serde(rename = "piece")]
    pub pieces: Vec<StrictPieceSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrictPieceSection {
    pub duration: Num,
    pub u: Vec<Num>,
    #[serde(default)]
    pub a: Vec<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierFile {
    pub p0: Num,
    pub lambda: Num,
    #[serde(default)]
    pub pi: Option<Num>,
    pub p: CostateSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostateSection {
    #[serde(default)]
    pub expr: Option<Vec<String>>,
    #[serde(default)]
    pub terminal: Option<Vec<Num>>,
    #[serde(default)]
    pub policy: Option<PolicySection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default)]
    pub overrides: Vec<PolicyOverrideSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyOverrideSection {
    pub field: String,
    pub node: usize,
    pub sign: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationsFile {
    #[serde(default)]
    pub eps: Option<Vec<Num>>,
    #[serde(rename = "variation")]
    pub variations: Vec<VariationSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationSection {
    pub s: Num,
    pub kind: String,
    #[serde(default)]
    pub i: Option<usize>,
    #[serde(default)]
    pub j: Option<usize>,
    #[serde(default)]
    pub w0: Option<Num>,
    #[serde(default)]
    pub w: Option<Vec<Num>>,
    #[serde(default)]
    pub alpha: Option<Vec<Num>>,
    #[serde(default)]
    pub zeta: Option<Num>,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_field(dims: Dims, components: &[String], what: &str) -> Result<NonsmoothField> {
    let exprs: Result<Vec<Expr>> = components
        .iter()
        .enumerate()
        .map(|(k, text)| {
            parse_expr(text, dims).with_context(|| format!("{what} component {} (`{text}`)", k + 1))
        })
        .collect();
    Ok(NonsmoothField::new(dims, exprs?))
}

fn cone_from_section(dim: usize, section: &ConeSection) -> Result<PolyhedralCone> {
    Ok(PolyhedralCone::from_generators(
        dim,
        &mat_f64(&section.generators),
        &mat_f64(&section.lines),
    )?)
}

/// Load and validate a problem file.
pub fn load_problem(path: &Path) -> Result<StrictProblem> {
    let file: ProblemFile = read_toml(path)?;
    let p = &file.problem;
    let dims = Dims::new(p.n, p.m, p.q);
    if p.g.len() != p.m {
        bail!("expected {} g fields, found {}", p.m, p.g.len());
    }
    let lipschitz = p.lipschitz.map(f64::from);
    let drift = parse_field(dims, &p.drift, "drift")?;
    let fields: Result<Vec<NonsmoothField>> =
        p.g.iter()
            .enumerate()
            .map(|(i, comps)| {
                parse_field(dims, comps, &format!("g{}", i + 1)).map(|mut f| {
                    f.lipschitz = lipschitz;
                    f
                })
            })
            .collect();
    let variant_fields = match &file.variant {
        Some(v) => {
            let fs: Result<Vec<NonsmoothField>> =
                v.g.iter()
                    .enumerate()
                    .map(|(i, comps)| parse_field(dims, comps, &format!("variant g{}", i + 1)))
                    .collect();
            Some(fs?)
        }
        None => None,
    };
    let parse_opt = |text: &Option<String>, what: &str| -> Result<Option<Expr>> {
        match text {
            Some(t) => Ok(Some(
                parse_expr(t, dims).with_context(|| format!("{what} (`{t}`)"))?,
            )),
            None => Ok(None),
        }
    };
    let control_cone = cone_from_section(p.m, &file.cone)?;
    let target_cones: Result<Vec<PolyhedralCone>> = file
        .target
        .cones
        .iter()
        .map(|c| cone_from_section(1 + p.n, c))
        .collect();
    let target = Multicone::new(target_cones?)?;
    let target_set = match &file.target.set {
        Some(ts) => {
            let t_range = match &ts.t_range {
                Some(r) if r.len() == 2 => Some((f64::from(r[0]), f64::from(r[1]))),
                Some(_) => bail!("target.set.t_range must have two entries"),
                None => None,
            };
            Some(TargetSet {
                t_range,
                ball: ts
                    .ball
                    .as_ref()
                    .map(|b| (vec_f64(&b.center), f64::from(b.radius))),
                box_bounds: ts.box_bounds.as_ref().map(|b| {
                    vec_f64(&b.lower)
                        .into_iter()
                        .zip(vec_f64(&b.upper))
                        .collect()
                }),
                point: ts.point.as_ref().map(|pt| vec_f64(pt)),
            })
        }
        None => None,
    };
    let a_box: Vec<(f64, f64)> = vec_f64(&file.a.lower)
        .into_iter()
        .zip(vec_f64(&file.a.upper))
        .collect();
    if a_box.len() != p.q {
        bail!(
            "A box needs {} lower/upper bounds, found {}",
            p.q,
            a_box.len()
        );
    }
    let norm = match p.norm.as_deref() {
        None | Some("euclidean") => ControlNorm::Euclidean,
        Some("l1") => ControlNorm::L1,
        Some(other) => bail!("unknown norm `{other}` (expected euclidean | l1)"),
    };
    let problem = StrictProblem {
        dims,
        m1: p.m1,
        drift,
        fields: fields?,
        variant_fields,
        l0: parse_opt(&p.l0, "l0")?,
        l1: parse_opt(&p.l1, "l1")?,
        recession: parse_opt(&p.recession, "recession")?,
        psi: parse_expr(&p.psi, dims).context("psi")?,
        x0: vec_f64(&p.x0),
        budget: p.budget.map(f64::from).unwrap_or(f64::INFINITY),
        control_cone,
        a_box,
        target,
        target_set,
        norm,
        rho: p.rho.map(f64::from).unwrap_or(0.2),
    };
    problem.validate()?;
    Ok(problem)
}

/// Load an extended process file; returns the process and an optional
/// endpoint-specific target-multicone override.
pub fn load_process(
    path: &Path,
    problem: &StrictProblem,
) -> Result<(ExtendedProcess, Option<Multicone>)> {
    let file: ProcessFile = read_toml(path)?;
    if file.pieces.is_empty() {
        bail!("process file {} has no pieces", path.display());
    }
    let pieces: Vec<ExtPiece> = file
        .pieces
        .iter()
        .map(|p| ExtPiece {
            duration: f64::from(p.duration),
            w0: f64::from(p.w0),
            w: vec_f64(&p.w),
            alpha: vec_f64(&p.alpha),
            zeta: p.zeta.map(f64::from).unwrap_or(0.0),
        })
        .collect();
    let ep = ExtendedProcess::from_pieces(pieces);
    ep.validate(problem)?;
    let over = match &file.target {
        Some(t) => {
            let cones: Result<Vec<PolyhedralCone>> = t
                .cones
                .iter()
                .map(|c| {
                    Ok(PolyhedralCone::from_generators(
                        1 + problem.dims.n,
                        &mat_f64(&c.generators),
                        &mat_f64(&c.lines),
                    )?)
                })
                .collect();
            Some(Multicone::new(cones?)?)
        }
        None => None,
    };
    Ok((ep, over))
}

/// Load a strict process file (for the extend command).
pub fn load_strict_process(path: &Path, problem: &StrictProblem) -> Result<StrictProcess> {
    let file: StrictProcessFile = read_toml(path)?;
    if file.pieces.is_empty() {
        bail!("strict process file {} has no pieces", path.display());
    }
    let pieces: Vec<StrictPiece> = file
        .pieces
        .iter()
        .map(|p| StrictPiece {
            duration: f64::from(p.duration),
            u: vec_f64(&p.u),
            a: vec_f64(&p.a),
        })
        .collect();
    for (k, piece) in pieces.iter().enumerate() {
        if piece.u.len() != problem.dims.m || piece.a.len() != problem.dims.q {
            bail!("strict piece {k} has wrong control dimensions");
        }
        if !(piece.duration > 0.0) {
            bail!("strict piece {k} has nonpositive duration");
        }
    }
    Ok(StrictProcess { pieces })
}

fn parse_sign(text: &str) -> Result<KinkSign> {
    Ok(match text {
        "neg" | "-" | "-1" => KinkSign::Neg,
        "pos" | "+" | "+1" | "1" => KinkSign::Pos,
        "mid" | "0" => KinkSign::Mid,
        other => bail!("unknown kink sign `{other}` (expected neg | pos | mid)"),
    })
}

fn parse_fieldref(text: &str, problem: &StrictProblem) -> Result<FieldRef> {
    Ok(match text {
        "f" | "drift" => FieldRef::Drift,
        "l0" => FieldRef::L0,
        "recession" => FieldRef::Recession,
        other => {
            let Some(rest) = other.strip_prefix('g') else {
                bail!("unknown field `{other}` in policy (expected f | g<i> | l0 | recession)");
            };
            let i: usize = rest.parse().context("policy field index")?;
            if i == 0 || i > problem.dims.m {
                bail!("policy field g{i} out of range 1..={}", problem.dims.m);
            }
            FieldRef::G(i - 1)
        }
    })
}

/// Load a multiplier file.
pub fn load_multipliers(path: &Path, problem: &StrictProblem) -> Result<Multipliers> {
    let file: MultiplierFile = read_toml(path)?;
    let dims = problem.dims;
    let p = match (&file.p.expr, &file.p.terminal) {
        (Some(exprs), None) => {
            if exprs.len() != dims.n {
                bail!("costate needs {} components, found {}", dims.n, exprs.len());
            }
            let components: Result<Vec<Expr>> = exprs
                .iter()
                .map(|t| parse_expr(t, dims).with_context(|| format!("costate component `{t}`")))
                .collect();
            CostatePath::Expr(components?)
        }
        (None, Some(terminal)) => {
            if terminal.len() != dims.n {
                bail!(
                    "terminal costate needs {} components, found {}",
                    dims.n,
                    terminal.len()
                );
            }
            let mut policy = SelectionPolicy::default();
            if let Some(section) = &file.p.policy {
                if let Some(d) = &section.default {
                    policy.default = parse_sign(d)?;
                }
                for over in &section.overrides {
                    policy.overrides.insert(
                        (parse_fieldref(&over.field, problem)?, over.node),
                        parse_sign(&over.sign)?,
                    );
                }
            }
            CostatePath::Terminal {
                p_end: vec_f64(terminal),
                policy,
            }
        }
        (Some(_), Some(_)) => bail!("costate must be given as `expr` or `terminal`, not both"),
        (None, None) => bail!("costate missing: provide p.expr or p.terminal"),
    };
    let mult = Multipliers {
        p0: f64::from(file.p0),
        lambda: f64::from(file.lambda),
        pi: file.pi.map(f64::from).unwrap_or(0.0),
        p,
    };
    mult.validate()?;
    Ok(mult)
}

/// Load a variations spec file.
pub fn load_variations(
    path: &Path,
    problem: &StrictProblem,
) -> Result<(
    Vec<(f64, goh_core::variations::VariationGenerator)>,
    Option<Vec<f64>>,
)> {
    use goh_core::variations::VariationGenerator;
    let file: VariationsFile = read_toml(path)?;
    let mut out = Vec::new();
    for (k, v) in file.variations.iter().enumerate() {
        let s = f64::from(v.s);
        let generator = match v.kind.as_str() {
            "needle" => VariationGenerator::Needle {
                w0: v.w0.map(f64::from).unwrap_or(0.0),
                w: v.w
                    .as_ref()
                    .map(|w| vec_f64(w))
                    .unwrap_or_else(|| vec![0.0; problem.dims.m]),
                a: v.alpha.as_ref().map(|a| vec_f64(a)).unwrap_or_default(),
                zeta: v.zeta.map(f64::from).unwrap_or(0.0),
            },
            "bracket" => {
                let (Some(i), Some(j)) = (v.i, v.j) else {
                    bail!("variation {k}: bracket needs indices i and j");
                };
                VariationGenerator::bracket(i, j, problem.m1)
                    .map_err(|e| anyhow::anyhow!("variation {k}: {e}"))?
            }
            other => bail!("variation {k}: unknown kind `{other}`"),
        };
        out.push((s, generator));
    }
    let eps = file.eps.map(|e| e.iter().map(|n| f64::from(*n)).collect());
    Ok((out, eps))
}

/// Serialize a problem back into the file format. Expressions print in the
/// grammar, so a reload reconstructs structurally identical trees.
pub fn write_problem(problem: &StrictProblem) -> Result<String> {
    use std::fmt::Write;
    let mut out = String::new();
    let field_strings = |f: &NonsmoothField| -> Vec<String> {
        f.components.iter().map(|c| c.to_string()).collect()
    };
    writeln!(out, "[problem]")?;
    writeln!(out, "n = {}", problem.dims.n)?;
    writeln!(out, "m = {}", problem.dims.m)?;
    writeln!(out, "m1 = {}", problem.m1)?;
    writeln!(out, "q = {}", problem.dims.q)?;
    writeln!(out, "drift = {:?}", field_strings(&problem.drift))?;
    writeln!(out, "g = [")?;
    for g in &problem.fields {
        writeln!(out, "    {:?},", field_strings(g))?;
    }
    writeln!(out, "]")?;
    if let Some(l0) = &problem.l0 {
        writeln!(out, "l0 = {:?}", l0.to_string())?;
    }
    if let Some(l1) = &problem.l1 {
        writeln!(out, "l1 = {:?}", l1.to_string())?;
    }
    if let Some(rec) = &problem.recession {
        writeln!(out, "recession = {:?}", rec.to_string())?;
    }
    writeln!(out, "psi = {:?}", problem.psi.to_string())?;
    writeln!(out, "x0 = {:?}", problem.x0)?;
    if problem.budget.is_finite() {
        writeln!(out, "K = {:?}", problem.budget)?;
    }
    let norm = match problem.norm {
        goh_core::problem::ControlNorm::Euclidean => "euclidean",
        goh_core::problem::ControlNorm::L1 => "l1",
    };
    writeln!(out, "norm = {norm:?}")?;
    writeln!(out, "rho = {:?}", problem.rho)?;
    let write_cone = |out: &mut String, gens: &goh_core::cones::GeneratorsF64| {
        if !gens.rays.is_empty() {
            let _ = writeln!(out, "generators = {:?}", gens.rays);
        }
        if !gens.lines.is_empty() {
            let _ = writeln!(out, "lines = {:?}", gens.lines);
        }
    };
    writeln!(out, "\n[cone]")?;
    write_cone(&mut out, &problem.control_cone.generators());
    writeln!(out, "\n[A]")?;
    let (lower, upper): (Vec<f64>, Vec<f64>) = problem.a_box.iter().copied().unzip();
    writeln!(out, "lower = {lower:?}")?;
    writeln!(out, "upper = {upper:?}")?;
    for cone in &problem.target.cones {
        writeln!(out, "\n[[target.cones]]")?;
        write_cone(&mut out, &cone.generators());
    }
    if let Some(ts) = &problem.target_set {
        writeln!(out, "\n[target.set]")?;
        if let Some((lo, hi)) = ts.t_range {
            writeln!(out, "t_range = [{lo:?}, {hi:?}]")?;
        }
        if let Some((center, radius)) = &ts.ball {
            writeln!(out, "ball = {{ center = {center:?}, radius = {radius:?} }}")?;
        }
        if let Some(bounds) = &ts.box_bounds {
            let (lo, hi): (Vec<f64>, Vec<f64>) = bounds.iter().copied().unzip();
            writeln!(out, "box = {{ lower = {lo:?}, upper = {hi:?} }}")?;
        }
        if let Some(pt) = &ts.point {
            writeln!(out, "point = {pt:?}")?;
        }
    }
    if let Some(variant) = &problem.variant_fields {
        writeln!(out, "\n[variant]")?;
        writeln!(out, "g = [")?;
        for g in variant {
            writeln!(out, "    {:?},", field_strings(g))?;
        }
        writeln!(out, "]")?;
    }
    Ok(out)
}

/// Serialize multipliers back into the file format.
pub fn write_multipliers(mult: &Multipliers) -> Result<String> {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "p0 = {:?}", mult.p0)?;
    writeln!(out, "lambda = {:?}", mult.lambda)?;
    writeln!(out, "pi = {:?}", mult.pi)?;
    writeln!(out, "\n[p]")?;
    match &mult.p {
        CostatePath::Expr(components) => {
            let texts: Vec<String> = components.iter().map(|c| c.to_string()).collect();
            writeln!(out, "expr = {texts:?}")?;
        }
        CostatePath::Terminal { p_end, policy } => {
            writeln!(out, "terminal = {p_end:?}")?;
            writeln!(out, "\n[p.policy]")?;
            let sign_name = |s: KinkSign| match s {
                KinkSign::Neg => "neg",
                KinkSign::Pos => "pos",
                KinkSign::Mid => "mid",
            };
            writeln!(out, "default = {:?}", sign_name(policy.default))?;
            if !policy.overrides.is_empty() {
                let rows: Vec<String> = policy
                    .overrides
                    .iter()
                    .map(|((fref, node), sign)| {
                        let field = match fref {
                            FieldRef::Drift => "f".to_string(),
                            FieldRef::G(i) => format!("g{}", i + 1),
                            FieldRef::L0 => "l0".to_string(),
                            FieldRef::Recession => "recession".to_string(),
                        };
                        format!(
                            "{{ field = {field:?}, node = {node}, sign = {:?} }}",
                            sign_name(*sign)
                        )
                    })
                    .collect();
                writeln!(out, "overrides = [{}]", rows.join(", "))?;
            }
        }
        CostatePath::Sampled { .. } => {
            anyhow::bail!("sampled costate paths do not serialize to the input format")
        }
    }
    Ok(out)
}

/// Serialize an extended process back into the file format.
pub fn write_process(ep: &ExtendedProcess) -> Result<String> {
    let file = ProcessFile {
        pieces: ep
            .pieces
            .iter()
            .map(|p| PieceSection {
                duration: Num::F(p.duration),
                w0: Num::F(p.w0),
                w: p.w.iter().map(|x| Num::F(*x)).collect(),
                alpha: p.alpha.iter().map(|x| Num::F(*x)).collect(),
                zeta: Some(Num::F(p.zeta)),
            })
            .collect(),
        target: None,
    };
    Ok(toml::to_string_pretty(&file)?)
}
