//! Dot products after projecting out the span of a set of estimated centers.
//!
//! A center is the mean embedding of a multiset of vertices. Every quantity here is an
//! average of oracle dot products; the averages are evaluated in closed form from the
//! cached query vectors, which gives the same values as looping over member pairs.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{DotEngine, Role};

/// Relative pivot floor used when inverting the Gram matrix of removed centers.
pub const PIVOT_FLOOR: f64 = 1e-10;
/// Allowed deviation of X·X⁻¹ from the identity.
const INVERSE_TOL: f64 = 1e-6;

/// A non-empty multiset of vertices whose mean embedding is a center.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CenterRef {
    members: Vec<u32>,
}

impl CenterRef {
    pub fn new(mut members: Vec<u32>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::usage("a center needs at least one vertex"));
        }
        members.sort_unstable();
        Ok(CenterRef { members })
    }

    /// Members in ascending order, repeated by multiplicity.
    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn multiplicities(&self) -> BTreeMap<u32, u32> {
        let mut m = BTreeMap::new();
        for &v in &self.members {
            *m.entry(v).or_insert(0) += 1;
        }
        m
    }
}

/// Aggregates of one center under one engine.
#[derive(Debug, Clone)]
pub struct CenterSummary {
    size: f64,
    sum_alpha: Vec<f64>,
    sum_psi_alpha: Vec<f64>,
    /// (vertex, multiplicity, self correction α Ψ α′ − α Ψ α)
    diag: Vec<(u32, u32, f64)>,
}

impl CenterSummary {
    pub fn new(engine: &DotEngine<'_>, center: &CenterRef) -> Result<Self> {
        engine.prefetch(center.members(), Role::Primary)?;
        engine.prefetch(center.members(), Role::Mirror)?;
        let s = engine.data().params.s;
        let mut sum_alpha = vec![0.0; s];
        let mut sum_psi_alpha = vec![0.0; s];
        let mut diag = Vec::new();
        for (v, mult) in center.multiplicities() {
            let e = engine.entry(v as usize, Role::Primary)?;
            let w = mult as f64;
            for i in 0..s {
                sum_alpha[i] += w * e.alpha[i];
                sum_psi_alpha[i] += w * e.psi_alpha[i];
            }
            diag.push((v, mult, self_correction(engine, v as usize)?));
        }
        Ok(CenterSummary { size: center.len() as f64, sum_alpha, sum_psi_alpha, diag })
    }

    fn multiplicity(&self, x: u32) -> u32 {
        self.diag.binary_search_by_key(&x, |e| e.0).map(|i| self.diag[i].1).unwrap_or(0)
    }
}

fn self_correction(engine: &DotEngine<'_>, x: usize) -> Result<f64> {
    let p = engine.entry(x, Role::Primary)?;
    let m = engine.entry(x, Role::Mirror)?;
    Ok(dot(&p.alpha, &m.psi_alpha) - dot(&p.alpha, &p.psi_alpha))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean over z ∈ B of ⟨f_x, f_z⟩_apx.
pub fn center_dot(engine: &DotEngine<'_>, x: usize, b: &CenterSummary) -> Result<f64> {
    let e = engine.entry(x, Role::Primary)?;
    let mut v = dot(&e.alpha, &b.sum_psi_alpha);
    let mult = b.multiplicity(x as u32);
    if mult > 0 {
        v += mult as f64 * self_correction(engine, x)?;
    }
    Ok(v / b.size)
}

/// Mean over x ∈ A, y ∈ B of ⟨f_x, f_y⟩_apx.
pub fn center_center(a: &CenterSummary, b: &CenterSummary) -> f64 {
    let mut v = dot(&a.sum_alpha, &b.sum_psi_alpha);
    let (mut i, mut j) = (0, 0);
    while i < a.diag.len() && j < b.diag.len() {
        match a.diag[i].0.cmp(&b.diag[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                v += (a.diag[i].1 as f64) * (b.diag[j].1 as f64) * a.diag[i].2;
                i += 1;
                j += 1;
            }
        }
    }
    v / (a.size * b.size)
}

/// Gram matrix of the removed centers and its inverse.
#[derive(Debug, Clone)]
pub struct SubspaceContext {
    removed: Vec<CenterRef>,
    summaries: Vec<CenterSummary>,
    gram: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl SubspaceContext {
    pub fn removed(&self) -> &[CenterRef] {
        &self.removed
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn len(&self) -> usize {
        self.removed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }

    /// h_x(i) = mean over z ∈ B_i of ⟨f_z, f_x⟩_apx.
    pub fn loadings(&self, inner: &DotEngine<'_>, x: usize) -> Result<DVector<f64>> {
        let vals = self.summaries.iter().map(|b| center_dot(inner, x, b)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    }

    /// g_B(i) = mean over z ∈ B_i, y ∈ B of ⟨f_z, f_y⟩_apx.
    pub fn center_loadings(&self, b: &CenterSummary) -> DVector<f64> {
        DVector::from_iterator(self.summaries.len(), self.summaries.iter().map(|bi| center_center(bi, b)))
    }
}

/// Builds the projection context for `removed` using the inner engine.
pub fn build_subspace(inner: &DotEngine<'_>, removed: &[CenterRef]) -> Result<SubspaceContext> {
    if removed.is_empty() {
        return Err(Error::usage("subspace context needs at least one removed center"));
    }
    let summaries = removed.par_iter().map(|c| CenterSummary::new(inner, c)).collect::<Result<Vec<_>>>()?;
    let r = summaries.len();
    let gram = DMatrix::from_fn(r, r, |i, j| center_center(&summaries[i], &summaries[j]));
    let inverse = linalg::invert(&gram, PIVOT_FLOOR)?;
    let resid = (&gram * &inverse - DMatrix::<f64>::identity(r, r)).abs().max();
    if !(resid <= INVERSE_TOL) {
        return Err(Error::ContextFailure { pivot: resid, floor: INVERSE_TOL });
    }
    Ok(SubspaceContext { removed: removed.to_vec(), summaries, gram, inverse })
}

/// ⟨f_x, Π f_y⟩_apx, where Π projects out the removed centers.
pub fn dot_on_subspace(
    outer: &DotEngine<'_>,
    inner: &DotEngine<'_>,
    x: usize,
    y: usize,
    ctx: Option<&SubspaceContext>,
) -> Result<f64> {
    let base = outer.dot(x, y)?;
    match ctx {
        None => Ok(base),
        Some(ctx) => {
            let hx = ctx.loadings(inner, x)?;
            let hy = ctx.loadings(inner, y)?;
            Ok(base - hx.dot(&(&ctx.inverse * hy)))
        }
    }
}

/// A center projected away from a context, ready for repeated membership tests.
#[derive(Debug, Clone)]
pub struct ProjectedCenter {
    outer: CenterSummary,
    weights: Option<DVector<f64>>,
    norm_raw: f64,
}

impl ProjectedCenter {
    pub fn new(
        outer: &DotEngine<'_>,
        inner: &DotEngine<'_>,
        center: &CenterRef,
        ctx: Option<&SubspaceContext>,
    ) -> Result<Self> {
        let o = CenterSummary::new(outer, center)?;
        let own = center_center(&o, &o);
        let (weights, norm_raw) = match ctx {
            None => (None, own),
            Some(ctx) => {
                let gb = ctx.center_loadings(&CenterSummary::new(inner, center)?);
                let w = &ctx.inverse * &gb;
                let corr = gb.dot(&w);
                (Some(w), own - corr)
            }
        };
        Ok(ProjectedCenter { outer: o, weights, norm_raw })
    }

    /// ‖Π μ̂‖², clamped at zero.
    pub fn norm2(&self) -> f64 {
        self.norm_raw.max(0.0)
    }

    /// The unclamped estimate, which noise can push below zero.
    pub fn norm2_raw(&self) -> f64 {
        self.norm_raw
    }

    /// ⟨f_x, Π μ̂⟩_apx.
    pub fn dot(&self, outer: &DotEngine<'_>, inner: &DotEngine<'_>, x: usize, ctx: Option<&SubspaceContext>) -> Result<f64> {
        let base = center_dot(outer, x, &self.outer)?;
        match (&self.weights, ctx) {
            (Some(w), Some(ctx)) => Ok(base - ctx.loadings(inner, x)?.dot(w)),
            (None, None) => Ok(base),
            _ => Err(Error::usage("projected center used with a different context")),
        }
    }
}

/// ⟨f_x, Π μ̂_B⟩_apx.
pub fn dot_with_projected_center(
    outer: &DotEngine<'_>,
    inner: &DotEngine<'_>,
    x: usize,
    center: &CenterRef,
    ctx: Option<&SubspaceContext>,
) -> Result<f64> {
    ProjectedCenter::new(outer, inner, center, ctx)?.dot(outer, inner, x, ctx)
}

/// ‖Π μ̂_B‖²_apx as (clamped, raw).
pub fn projected_center_norm(
    outer: &DotEngine<'_>,
    inner: &DotEngine<'_>,
    center: &CenterRef,
    ctx: Option<&SubspaceContext>,
) -> Result<(f64, f64)> {
    let p = ProjectedCenter::new(outer, inner, center, ctx)?;
    Ok((p.norm2(), p.norm2_raw()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::padded_cliques;
    use crate::oracle::{initialize_oracle, OracleData, OracleParams};
    use crate::rng::Seed;
    use crate::graph::RegularGraph;

    fn setup() -> (RegularGraph, OracleData) {
        let g = padded_cliques(&[12, 12, 12], 12);
        let p = OracleParams { delta: 0.5, xi: 0.5, t: 6, r_init: 400, r_query: 200, s: 24, m: 3, k: 3 };
        let d = initialize_oracle(&g, &p, Seed::new(5), 1e-12).unwrap();
        (g, d)
    }

    fn mean_dot(e: &DotEngine<'_>, a: &[u32], b: &[u32]) -> f64 {
        let mut s = 0.0;
        for &x in a {
            for &y in b {
                s += e.dot(x as usize, y as usize).unwrap();
            }
        }
        s / (a.len() * b.len()) as f64
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn closed_forms_match_pairwise_loops() {
        let (g, d) = setup();
        let e = DotEngine::new(&g, &d);
        let b1 = CenterRef::new(vec![0, 3, 3, 14]).unwrap();
        let b2 = CenterRef::new(vec![14, 20, 30, 3]).unwrap();
        let s1 = CenterSummary::new(&e, &b1).unwrap();
        let s2 = CenterSummary::new(&e, &b2).unwrap();
        for x in [0usize, 3, 14, 25] {
            assert!(close(center_dot(&e, x, &s1).unwrap(), mean_dot(&e, b1.members(), &[x as u32])));
            assert!(close(center_dot(&e, x, &s1).unwrap(), mean_dot(&e, &[x as u32], b1.members())));
        }
        assert!(close(center_center(&s1, &s2), mean_dot(&e, b1.members(), b2.members())));
        assert!(close(center_center(&s1, &s1), mean_dot(&e, b1.members(), b1.members())));
    }

    #[test]
    fn projection_matches_naive_formula() {
        let (g, d) = setup();
        let e = DotEngine::new(&g, &d);
        let removed = vec![CenterRef::new(vec![0, 1, 2]).unwrap(), CenterRef::new(vec![12, 13]).unwrap()];
        let ctx = build_subspace(&e, &removed).unwrap();
        let x_mat = DMatrix::from_fn(2, 2, |i, j| mean_dot(&e, removed[i].members(), removed[j].members()));
        let inv = x_mat.clone().try_inverse().unwrap();
        let h = |x: u32| DVector::from_fn(2, |i, _| mean_dot(&e, removed[i].members(), &[x]));
        for (x, y) in [(3u32, 4u32), (3, 25), (25, 25), (13, 0)] {
            let naive = e.dot(x as usize, y as usize).unwrap() - h(x).dot(&(&inv * h(y)));
            let got = dot_on_subspace(&e, &e, x as usize, y as usize, Some(&ctx)).unwrap();
            assert!(close(got, naive), "{got} vs {naive}");
        }
        let b = CenterRef::new(vec![24, 25, 26, 2]).unwrap();
        let gb = DVector::from_fn(2, |i, _| mean_dot(&e, removed[i].members(), b.members()));
        for x in [2u32, 5, 25] {
            let naive = mean_dot(&e, &[x], b.members()) - h(x).dot(&(&inv * &gb));
            let got = dot_with_projected_center(&e, &e, x as usize, &b, Some(&ctx)).unwrap();
            assert!(close(got, naive));
        }
        let naive_norm = mean_dot(&e, b.members(), b.members()) - gb.dot(&(&inv * &gb));
        let (clamped, raw) = projected_center_norm(&e, &e, &b, Some(&ctx)).unwrap();
        assert!(close(raw, naive_norm));
        assert_eq!(clamped, raw.max(0.0));
    }

    #[test]
    fn empty_context_is_plain_dot() {
        let (g, d) = setup();
        let e = DotEngine::new(&g, &d);
        for (x, y) in [(0, 1), (5, 5), (3, 30)] {
            assert_eq!(dot_on_subspace(&e, &e, x, y, None).unwrap(), crate::oracle::spectral_dot_product(&g, x, y, &d).unwrap());
        }
        assert!(build_subspace(&e, &[]).is_err());
    }

    #[test]
    fn projected_out_cluster_vanishes() {
        let (g, d) = setup();
        let e = DotEngine::new(&g, &d);
        let removed = vec![CenterRef::new((0..12).collect()).unwrap()];
        let ctx = build_subspace(&e, &removed).unwrap();
        let (n_same, _) = projected_center_norm(&e, &e, &CenterRef::new((0..12).collect()).unwrap(), Some(&ctx)).unwrap();
        let (n_other, _) = projected_center_norm(&e, &e, &CenterRef::new((12..24).collect()).unwrap(), Some(&ctx)).unwrap();
        assert!(n_same < 1e-9 * n_other.max(1e-300) + 1e-12, "{n_same} {n_other}");
        assert!(n_other > 0.0);
    }

    #[test]
    fn duplicate_centers_fail_context() {
        let (g, d) = setup();
        let e = DotEngine::new(&g, &d);
        let c = CenterRef::new(vec![0, 1]).unwrap();
        assert!(matches!(build_subspace(&e, &[c.clone(), c]), Err(Error::ContextFailure { .. })));
    }
}
