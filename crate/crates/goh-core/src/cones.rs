//! Polyhedral cones and multicones on exact rational arithmetic.
//!
//! A cone is stored by finite generators: rays (conic hull) and lines (full
//! lineality directions). Polars are computed by the double-description
//! method, transversality and separation by exact LP feasibility, so all
//! geometric decisions are tolerance-free; floats only appear at the API
//! boundary and convert exactly into rationals.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::lp::{self, rat, rat_to_f64, LinearProgram, Rat, Rel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("the all-zero generator is not allowed")]
    ZeroGenerator,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("a multicone needs at least one cone")]
    EmptyMulticone,
    #[error("strong-transversality witness search exceeded {0} generator tuples")]
    WitnessSearchCap(usize),
}

/// Closed polyhedral cone `span(lines) + cone(rays)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyhedralCone {
    dim: usize,
    rays: Vec<Vec<Rat>>,
    lines: Vec<Vec<Rat>>,
}

/// Finite family of cones of one ambient dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Multicone {
    pub cones: Vec<PolyhedralCone>,
}

impl Multicone {
    pub fn new(cones: Vec<PolyhedralCone>) -> Result<Self, ConeError> {
        if cones.is_empty() {
            return Err(ConeError::EmptyMulticone);
        }
        let dim = cones[0].dim;
        for c in &cones {
            if c.dim != dim {
                return Err(ConeError::DimensionMismatch {
                    expected: dim,
                    got: c.dim,
                });
            }
        }
        Ok(Multicone { cones })
    }

    pub fn dim(&self) -> usize {
        self.cones[0].dim
    }
}

/// Generator view with f64 coordinates, for serialization and meshing.
#[derive(Clone, Debug, Serialize)]
pub struct GeneratorsF64 {
    pub rays: Vec<Vec<f64>>,
    pub lines: Vec<Vec<f64>>,
}

impl PolyhedralCone {
    /// Build from f64 generators (converted exactly). Zero generators are
    /// rejected; rays and lines are normalized to primitive integer vectors.
    pub fn from_generators(
        dim: usize,
        rays: &[Vec<f64>],
        lines: &[Vec<f64>],
    ) -> Result<Self, ConeError> {
        let conv = |v: &Vec<f64>| -> Result<Vec<Rat>, ConeError> {
            if v.len() != dim {
                return Err(ConeError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            Ok(v.iter().map(|x| rat(*x)).collect())
        };
        let mut r = Vec::new();
        for v in rays {
            let mut g = conv(v)?;
            if is_zero_vec(&g) {
                return Err(ConeError::ZeroGenerator);
            }
            normalize_primitive(&mut g);
            r.push(g);
        }
        let mut l = Vec::new();
        for v in lines {
            let mut g = conv(v)?;
            if is_zero_vec(&g) {
                return Err(ConeError::ZeroGenerator);
            }
            normalize_primitive(&mut g);
            canonical_line_sign(&mut g);
            l.push(g);
        }
        Ok(PolyhedralCone {
            dim,
            rays: dedup_vecs(r),
            lines: dedup_vecs(l),
        })
    }

    /// The trivial cone `{0}`.
    pub fn zero(dim: usize) -> Self {
        PolyhedralCone {
            dim,
            rays: Vec::new(),
            lines: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_trivial(&self) -> bool {
        self.rays.is_empty() && self.lines.is_empty()
    }

    pub fn generators(&self) -> GeneratorsF64 {
        GeneratorsF64 {
            rays: self.rays.iter().map(|r| to_f64_vec(r)).collect(),
            lines: self.lines.iter().map(|l| to_f64_vec(l)).collect(),
        }
    }

    /// All one-sided generator directions: rays plus both signs of lines.
    pub fn directions_f64(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.rays.iter().map(|r| to_f64_vec(r)).collect();
        for l in &self.lines {
            out.push(to_f64_vec(l));
            out.push(to_f64_vec(l).iter().map(|x| -x).collect());
        }
        out
    }

    /// Exact membership `x ∈ C` via conic-combination feasibility.
    pub fn contains(&self, x: &[f64]) -> Result<bool, ConeError> {
        if x.len() != self.dim {
            return Err(ConeError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let target: Vec<Rat> = x.iter().map(|v| rat(*v)).collect();
        Ok(self.contains_rat(&target))
    }

    fn contains_rat(&self, x: &[Rat]) -> bool {
        let gens: Vec<&Vec<Rat>> = self.rays.iter().chain(self.lines.iter()).collect();
        if gens.is_empty() {
            return x.iter().all(|v| v.is_zero());
        }
        let mut prog = LinearProgram::new(gens.len());
        for j in self.rays.len()..gens.len() {
            prog.mark_free(j);
        }
        for coord in 0..self.dim {
            let coeffs: Vec<Rat> = gens.iter().map(|g| g[coord].clone()).collect();
            prog.add(coeffs, Rel::Eq, x[coord].clone());
        }
        lp::feasible_point(&prog).is_some()
    }

    /// Polar cone `{μ : μ·c ≤ 0 for all c in the cone}`, by double
    /// description on the generator inequalities.
    pub fn polar(&self) -> PolyhedralCone {
        let mut ineqs: Vec<Vec<Rat>> = Vec::new();
        for r in &self.rays {
            ineqs.push(r.clone());
        }
        for l in &self.lines {
            ineqs.push(l.clone());
            ineqs.push(l.iter().map(|x| -x).collect());
        }
        let (rays, lines) = cone_from_halfspaces(self.dim, &ineqs);
        PolyhedralCone {
            dim: self.dim,
            rays,
            lines,
        }
    }

    /// Intersection of two cones via their facet representations.
    pub fn intersection(&self, other: &PolyhedralCone) -> PolyhedralCone {
        assert_eq!(self.dim, other.dim);
        let mut ineqs = Vec::new();
        for p in [self.polar(), other.polar()] {
            for q in &p.rays {
                ineqs.push(q.clone());
            }
            for m in &p.lines {
                ineqs.push(m.clone());
                ineqs.push(m.iter().map(|x| -x).collect());
            }
        }
        let (rays, lines) = cone_from_halfspaces(self.dim, &ineqs);
        PolyhedralCone {
            dim: self.dim,
            rays,
            lines,
        }
    }

    /// Mutual-membership equivalence of two generator representations.
    pub fn equivalent_to(&self, other: &PolyhedralCone) -> bool {
        if self.dim != other.dim {
            return false;
        }
        let inside = |a: &PolyhedralCone, b: &PolyhedralCone| -> bool {
            a.rays.iter().all(|r| b.contains_rat(r))
                && a.lines.iter().all(|l| {
                    b.contains_rat(l) && b.contains_rat(&l.iter().map(|x| -x).collect::<Vec<_>>())
                })
        };
        inside(self, other) && inside(other, self)
    }
}

/// Transversality `C1 − C2 = V`, decided by expressing every `±e_i` as a
/// conic combination of `rays(C1) ∪ −rays(C2)` with lines free.
pub fn is_transversal(c1: &PolyhedralCone, c2: &PolyhedralCone) -> Result<bool, ConeError> {
    check_dims(c1, c2)?;
    let dim = c1.dim;
    for coord in 0..dim {
        for sign in [1i64, -1] {
            let mut target = vec![Rat::zero(); dim];
            target[coord] = Rat::from(BigInt::from(sign));
            if !difference_contains(c1, c2, &target) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn difference_contains(c1: &PolyhedralCone, c2: &PolyhedralCone, target: &[Rat]) -> bool {
    // target = Σ c r1 + Σ d l1 − Σ c' r2 − Σ d' l2, c, c' ≥ 0.
    let gens: Vec<(Vec<Rat>, bool)> = c1
        .rays
        .iter()
        .map(|r| (r.clone(), false))
        .chain(c1.lines.iter().map(|l| (l.clone(), true)))
        .chain(
            c2.rays
                .iter()
                .map(|r| (r.iter().map(|x| -x).collect(), false)),
        )
        .chain(c2.lines.iter().map(|l| (l.clone(), true)))
        .collect();
    if gens.is_empty() {
        return target.iter().all(|v| v.is_zero());
    }
    let mut prog = LinearProgram::new(gens.len());
    for (j, (_, free)) in gens.iter().enumerate() {
        if *free {
            prog.mark_free(j);
        }
    }
    for coord in 0..target.len() {
        let coeffs: Vec<Rat> = gens.iter().map(|(g, _)| g[coord].clone()).collect();
        prog.add(coeffs, Rel::Eq, target[coord].clone());
    }
    lp::feasible_point(&prog).is_some()
}

/// A separating form when one exists: nonzero μ with `μ·c1 ≥ 0` on C1 and
/// `μ·c2 ≤ 0` on C2, normalized to `|μ|₁ = 1`. Separation exists iff the
/// cones are not transversal.
pub fn linearly_separated(
    c1: &PolyhedralCone,
    c2: &PolyhedralCone,
) -> Result<Option<Vec<f64>>, ConeError> {
    check_dims(c1, c2)?;
    let dim = c1.dim;
    // The feasible forms make a cone K; K ⊋ {0} iff some coordinate can be
    // pinned to ±1.
    for coord in 0..dim {
        for sign in [1i64, -1] {
            let mut prog = LinearProgram::new(dim);
            for v in 0..dim {
                prog.mark_free(v);
            }
            let add_side = |prog: &mut LinearProgram, cone: &PolyhedralCone, rel: Rel| {
                for r in &cone.rays {
                    prog.add(r.clone(), rel, Rat::zero());
                }
                for l in &cone.lines {
                    prog.add(l.clone(), Rel::Eq, Rat::zero());
                }
            };
            add_side(&mut prog, c1, Rel::Ge);
            add_side(&mut prog, c2, Rel::Le);
            let mut pin = vec![Rat::zero(); dim];
            pin[coord] = Rat::one();
            prog.add(pin, Rel::Eq, Rat::from(BigInt::from(sign)));
            if let Some(mu) = lp::feasible_point(&prog) {
                let norm1: Rat = mu.iter().map(|m| m.abs()).fold(Rat::zero(), |a, b| a + b);
                let out: Vec<f64> = mu.iter().map(|m| rat_to_f64(&(m / &norm1))).collect();
                return Ok(Some(out));
            }
        }
    }
    Ok(None)
}

/// Strong transversality of two multicones: every cone pair transversal, and
/// one linear form μ that is positive somewhere on every pairwise
/// intersection.
pub fn is_strongly_transversal(m1: &Multicone, m2: &Multicone) -> Result<bool, ConeError> {
    if m1.dim() != m2.dim() {
        return Err(ConeError::DimensionMismatch {
            expected: m1.dim(),
            got: m2.dim(),
        });
    }
    let mut candidate_sets: Vec<Vec<Vec<Rat>>> = Vec::new();
    for c1 in &m1.cones {
        for c2 in &m2.cones {
            if !is_transversal(c1, c2)? {
                return Ok(false);
            }
            let inter = c1.intersection(c2);
            // μ c > 0 needs a nonzero element of the intersection; a witness
            // can always be taken among the generators.
            let mut cands: Vec<Vec<Rat>> = inter.rays.clone();
            for l in &inter.lines {
                cands.push(l.clone());
                cands.push(l.iter().map(|x| -x).collect());
            }
            if cands.is_empty() {
                return Ok(false);
            }
            candidate_sets.push(cands);
        }
    }
    // Search for μ with μ·g_k ≥ 1 for one generator choice per pair.
    let total: usize = candidate_sets.iter().map(|c| c.len()).product();
    const CAP: usize = 100_000;
    if total > CAP {
        return Err(ConeError::WitnessSearchCap(CAP));
    }
    let dim = m1.dim();
    let mut choice = vec![0usize; candidate_sets.len()];
    loop {
        let mut prog = LinearProgram::new(dim);
        for v in 0..dim {
            prog.mark_free(v);
        }
        for (k, set) in candidate_sets.iter().enumerate() {
            prog.add(set[choice[k]].clone(), Rel::Ge, Rat::one());
        }
        if lp::feasible_point(&prog).is_some() {
            return Ok(true);
        }
        // Next tuple.
        let mut k = 0;
        loop {
            if k == candidate_sets.len() {
                return Ok(false);
            }
            choice[k] += 1;
            if choice[k] < candidate_sets[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

fn check_dims(c1: &PolyhedralCone, c2: &PolyhedralCone) -> Result<(), ConeError> {
    if c1.dim != c2.dim {
        return Err(ConeError::DimensionMismatch {
            expected: c1.dim,
            got: c2.dim,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Double description: V-representation of {x : a·x ≤ 0 for all a in ineqs}.
// ---------------------------------------------------------------------------

fn cone_from_halfspaces(dim: usize, ineqs: &[Vec<Rat>]) -> (Vec<Vec<Rat>>, Vec<Vec<Rat>>) {
    // Start from the whole space: lineality basis = identity, no rays.
    let mut lines: Vec<Vec<Rat>> = (0..dim)
        .map(|i| {
            let mut e = vec![Rat::zero(); dim];
            e[i] = Rat::one();
            e
        })
        .collect();
    let mut rays: Vec<Vec<Rat>> = Vec::new();

    for a in ineqs {
        debug_assert_eq!(a.len(), dim);
        if is_zero_vec(a) {
            continue;
        }
        let pivot = lines.iter().position(|l| !dot(a, l).is_zero());
        if let Some(pi) = pivot {
            // A line leaves the lineality space and becomes a ray.
            let mut l0 = lines.remove(pi);
            if dot(a, &l0).is_positive() {
                for v in l0.iter_mut() {
                    *v = -v.clone();
                }
            }
            let al0 = dot(a, &l0); // negative
            for l in lines.iter_mut() {
                let c = dot(a, l) / &al0;
                if !c.is_zero() {
                    for (v, p) in l.iter_mut().zip(l0.iter()) {
                        let delta = &c * p;
                        *v -= delta;
                    }
                    normalize_primitive(l);
                    canonical_line_sign(l);
                }
            }
            for r in rays.iter_mut() {
                let c = dot(a, r) / &al0;
                if !c.is_zero() {
                    for (v, p) in r.iter_mut().zip(l0.iter()) {
                        let delta = &c * p;
                        *v -= delta;
                    }
                    normalize_primitive(r);
                }
            }
            normalize_primitive(&mut l0);
            rays.push(l0);
            rays = reduce_rays(dim, rays, &lines);
            continue;
        }
        // All lines orthogonal to a: split the rays.
        let mut keep: Vec<Vec<Rat>> = Vec::new();
        let mut plus: Vec<Vec<Rat>> = Vec::new();
        let mut minus: Vec<Vec<Rat>> = Vec::new();
        for r in rays.into_iter() {
            let ar = dot(a, &r);
            if ar.is_zero() {
                keep.push(r);
            } else if ar.is_positive() {
                plus.push(r);
            } else {
                minus.push(r);
            }
        }
        for p in &plus {
            for n in &minus {
                let ap = dot(a, p);
                let an = dot(a, n);
                let mut w: Vec<Rat> = p
                    .iter()
                    .zip(n.iter())
                    .map(|(pv, nv)| &ap * nv - &an * pv)
                    .collect();
                if !is_zero_vec(&w) {
                    normalize_primitive(&mut w);
                    keep.push(w);
                }
            }
        }
        keep.extend(minus);
        rays = reduce_rays(dim, dedup_vecs(keep), &lines);
    }
    (dedup_vecs(rays), lines)
}

/// Drop rays that are conic combinations of the others (plus the lineality).
fn reduce_rays(dim: usize, rays: Vec<Vec<Rat>>, lines: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    let mut kept = dedup_vecs(rays);
    let mut i = 0;
    while i < kept.len() {
        let candidate = kept[i].clone();
        let others: Vec<Vec<Rat>> = kept
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, r)| r.clone())
            .collect();
        let cone = PolyhedralCone {
            dim,
            rays: others,
            lines: lines.to_vec(),
        };
        if cone.contains_rat(&candidate) {
            kept.remove(i);
        } else {
            i += 1;
        }
    }
    kept
}

fn dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter()
        .zip(b.iter())
        .filter(|(x, y)| !x.is_zero() && !y.is_zero())
        .map(|(x, y)| x * y)
        .fold(Rat::zero(), |acc, v| acc + v)
}

fn is_zero_vec(v: &[Rat]) -> bool {
    v.iter().all(|x| x.is_zero())
}

/// Scale to the primitive integer vector with the same direction.
fn normalize_primitive(v: &mut [Rat]) {
    let mut den = BigInt::one();
    for x in v.iter() {
        den = den.lcm(x.denom());
    }
    let mut nums: Vec<BigInt> = v.iter().map(|x| x.numer() * (&den / x.denom())).collect();
    let mut g = BigInt::zero();
    for n in &nums {
        g = g.gcd(n);
    }
    if g.is_zero() {
        return;
    }
    for n in nums.iter_mut() {
        *n /= &g;
    }
    for (slot, n) in v.iter_mut().zip(nums.into_iter()) {
        *slot = Rat::from(n);
    }
}

/// Lines are direction-free; make the first nonzero entry positive.
fn canonical_line_sign(v: &mut [Rat]) {
    if let Some(first) = v.iter().find(|x| !x.is_zero()) {
        if first.is_negative() {
            for x in v.iter_mut() {
                *x = -x.clone();
            }
        }
    }
}

fn dedup_vecs(v: Vec<Vec<Rat>>) -> Vec<Vec<Rat>> {
    let mut out: Vec<Vec<Rat>> = Vec::with_capacity(v.len());
    for item in v {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

fn to_f64_vec(v: &[Rat]) -> Vec<f64> {
    v.iter().map(rat_to_f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cone(dim: usize, rays: &[&[f64]], lines: &[&[f64]]) -> PolyhedralCone {
        PolyhedralCone::from_generators(
            dim,
            &rays.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            &lines.iter().map(|l| l.to_vec()).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn polar_of_positive_orthant() {
        let c = cone(2, &[&[1.0, 0.0], &[0.0, 1.0]], &[]);
        let p = c.polar();
        let expected = cone(2, &[&[-1.0, 0.0], &[0.0, -1.0]], &[]);
        assert!(p.equivalent_to(&expected));
    }

    #[test]
    fn polar_of_a_line_is_its_orthogonal_complement() {
        let c = cone(2, &[], &[&[1.0, 0.0]]);
        let p = c.polar();
        let expected = cone(2, &[], &[&[0.0, 1.0]]);
        assert!(p.equivalent_to(&expected));
    }

    #[test]
    fn polar_of_target_cone() {
        // R− × R × R × R− → R+ × {0} × {0} × R+.
        let c = cone(
            4,
            &[&[-1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, -1.0]],
            &[&[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0]],
        );
        let p = c.polar();
        let expected = cone(4, &[&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0]], &[]);
        assert!(p.equivalent_to(&expected));
    }

    #[test]
    fn double_polar_recovers_cone() {
        let cases = vec![
            cone(2, &[&[1.0, 0.0], &[1.0, 1.0]], &[]),
            cone(2, &[&[-1.0, 0.0], &[0.0, -1.0]], &[]),
            cone(3, &[&[1.0, 0.0, 0.0]], &[&[0.0, 1.0, 1.0]]),
            cone(2, &[], &[&[1.0, 0.0], &[0.0, 1.0]]),
            PolyhedralCone::zero(3),
        ];
        for c in cases {
            assert!(c.polar().polar().equivalent_to(&c), "failed for {c:?}");
        }
    }

    #[test]
    fn transversality_examples() {
        let line_x = cone(2, &[], &[&[1.0, 0.0]]);
        let line_y = cone(2, &[], &[&[0.0, 1.0]]);
        assert!(is_transversal(&line_x, &line_y).unwrap());
        let quad = cone(2, &[&[1.0, 0.0], &[0.0, 1.0]], &[]);
        assert!(is_transversal(&quad, &quad).unwrap());
        let ray_x = cone(2, &[&[1.0, 0.0]], &[]);
        assert!(!is_transversal(&ray_x, &ray_x).unwrap());
    }

    #[test]
    fn separation_examples() {
        let plus = cone(2, &[&[1.0, 0.0], &[0.0, 1.0]], &[]);
        let minus = cone(2, &[&[-1.0, 0.0], &[0.0, -1.0]], &[]);
        let mu = linearly_separated(&plus, &minus).unwrap().unwrap();
        // μ·c ≥ 0 on C1, ≤ 0 on C2, |μ|₁ = 1.
        assert!(mu[0] >= -1e-9 && mu[1] >= -1e-9);
        assert!((mu[0].abs() + mu[1].abs() - 1.0).abs() < 1e-12);

        let line_x = cone(2, &[], &[&[1.0, 0.0]]);
        let line_y = cone(2, &[], &[&[0.0, 1.0]]);
        assert!(linearly_separated(&line_x, &line_y).unwrap().is_none());

        let ray_x = cone(2, &[&[1.0, 0.0]], &[]);
        let ray_y = cone(2, &[&[0.0, 1.0]], &[]);
        let mu = linearly_separated(&ray_x, &ray_y).unwrap().unwrap();
        assert!(mu[0] >= -1e-9, "μ·e1 ≥ 0 violated: {mu:?}");
        assert!(mu[1] <= 1e-9, "μ·e2 ≤ 0 violated: {mu:?}");
    }

    #[test]
    fn strong_transversality_examples() {
        let line_x = Multicone::new(vec![cone(2, &[], &[&[1.0, 0.0]])]).unwrap();
        let line_y = Multicone::new(vec![cone(2, &[], &[&[0.0, 1.0]])]).unwrap();
        // Transversal but intersecting only at the origin.
        assert!(!is_strongly_transversal(&line_x, &line_y).unwrap());

        let quad = Multicone::new(vec![cone(2, &[&[1.0, 0.0], &[0.0, 1.0]], &[])]).unwrap();
        assert!(is_strongly_transversal(&quad, &quad).unwrap());

        let ray_x = Multicone::new(vec![cone(2, &[&[1.0, 0.0]], &[])]).unwrap();
        // Non-transversal pair.
        assert!(!is_strongly_transversal(&ray_x, &ray_x).unwrap());
    }

    #[test]
    fn membership_is_exact() {
        let c = cone(2, &[&[1.0, 2.0], &[2.0, 1.0]], &[]);
        assert!(c.contains(&[3.0, 3.0]).unwrap());
        assert!(c.contains(&[1.0, 2.0]).unwrap());
        assert!(!c.contains(&[1.0, 2.5]).unwrap());
        assert!(!c.contains(&[-1.0, 0.0]).unwrap());
        assert!(c.contains(&[0.0, 0.0]).unwrap());
    }

    #[test]
    fn zero_generator_rejected() {
        assert!(matches!(
            PolyhedralCone::from_generators(2, &[vec![0.0, 0.0]], &[]),
            Err(ConeError::ZeroGenerator)
        ));
    }

    #[test]
    fn intersection_of_orthants() {
        let quad1 = cone(2, &[&[1.0, 0.0], &[0.0, 1.0]], &[]);
        let quad2 = cone(2, &[&[1.0, 0.0], &[0.0, -1.0]], &[]);
        let inter = quad1.intersection(&quad2);
        let expected = cone(2, &[&[1.0, 0.0]], &[]);
        assert!(inter.equivalent_to(&expected));
    }
}
