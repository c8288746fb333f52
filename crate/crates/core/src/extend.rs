//! Extension of `f` from `Σ_0` to an ambient map `g`.
//!
//! `g(z) = Σ_k ρ_k(q) · (f_k(p) + R_k(p)·q)` with `z = p + q` split along
//! `Σ_0`, cutoffs `ρ_k` in `|q|`, and orthogonal maps `R_k` carrying the
//! direction space of `Σ_0` to the tangent space of `Σ_k` at `f_k(p)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::flow::{BaseGrid, JacobianMode, ParamMap};
use crate::geom::{check_dim, AffinePlane, Matrix, Vector};
use crate::index::KdTree;
use crate::nets::scale;
use crate::unity::smoothstep;

/// `(p, q)` with `p` the orthogonal projection of `z` on `Σ_0` and `q = z − p`.
pub fn split(sigma0: &AffinePlane, z: &Vector) -> (Vector, Vector) {
    let p = sigma0.project(z);
    let q = z - &p;
    (p, q)
}

/// Widest `‖SSᵀ − I‖` accepted by [`project_isometry`].
pub const ISOMETRY_DOMAIN: f64 = 0.5;

/// `H(S) = (SSᵀ)^{−1/2} S`, the orthogonal polar factor of `S`, computed
/// from the symmetric eigendecomposition of `SSᵀ`.
pub fn project_isometry(s: &Matrix) -> Result<Matrix> {
    if !s.is_square() {
        return Err(crate::error::invalid("S", "not square"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("S"));
    }
    let gram = s * s.transpose();
    let eig = gram.symmetric_eigen();
    let deviation = eig.eigenvalues.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max);
    if deviation > ISOMETRY_DOMAIN {
        return Err(Error::ProjectionDomain { deviation });
    }
    let v = &eig.eigenvectors;
    let inv_sqrt = Matrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(v * inv_sqrt * v.transpose() * s)
}

/// `R_0 = I` and `R_{k+1} = H(π_{k+1} R_k π_0 + π⊥_{k+1} R_k π⊥_0)` with
/// `π_k` the orthogonal projector on `T_k`.
pub fn isometry_chain(frames: &[Matrix]) -> Result<Vec<Matrix>> {
    let Some(t0) = frames.first() else {
        return Ok(Vec::new());
    };
    let n = t0.nrows();
    let id = Matrix::identity(n, n);
    let pi0 = t0 * t0.transpose();
    let perp0 = &id - &pi0;
    let mut out = vec![id.clone()];
    for t in &frames[1..] {
        let pi = t * t.transpose();
        let r = out.last().expect("nonempty");
        let s = &pi * r * &pi0 + (&id - &pi) * r * &perp0;
        out.push(project_isometry(&s)?);
    }
    Ok(out)
}

/// `R_0(x), …, R_upto(x)` computed along the trajectory of `x ∈ Σ_0`.
pub fn isometries_along(pm: &ParamMap, x: &Vector, upto: usize) -> Result<(Vec<Vector>, Vec<Matrix>)> {
    let traj = pm.evaluate(x, upto, JacobianMode::Tangent)?;
    let frames = traj.tangent_frames()?;
    let rs = isometry_chain(&frames)?;
    Ok((traj.states, rs))
}

/// `R_k` at the nodes of a grid on `Σ_0`; off-grid queries use the nearest node.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometryField {
    pub grid: BaseGrid,
    /// `rotations[node][k]` for `k = 0..=depth`.
    pub rotations: Vec<Vec<Matrix>>,
    /// Tangent frames `T_k` at the nodes, same layout.
    pub frames: Vec<Vec<Matrix>>,
}

impl IsometryField {
    pub fn build(pm: &ParamMap, grid: BaseGrid) -> Result<Self> {
        check_dim(pm.sigma0().dim(), grid.lower.len())?;
        let nodes = grid.points(pm.sigma0());
        let per_node = nodes
            .par_iter()
            .map(|x| {
                let traj = pm.evaluate(x, pm.depth(), JacobianMode::Tangent)?;
                let frames = traj.tangent_frames()?;
                let rs = isometry_chain(&frames)?;
                Ok((rs, frames))
            })
            .collect::<Result<Vec<_>>>()?;
        let (rotations, frames) = per_node.into_iter().unzip();
        Ok(Self { grid, rotations, frames })
    }

    pub fn depth(&self) -> usize {
        self.rotations.first().map_or(0, |r| r.len().saturating_sub(1))
    }

    /// `R_k` at the node nearest to `x ∈ Σ_0`.
    pub fn lookup(&self, sigma0: &AffinePlane, k: usize, x: &Vector) -> &Matrix {
        let t = sigma0.coords(x);
        &self.rotations[self.grid.nearest(t.as_slice())][k]
    }

    /// `max_x ‖R_{k+1}(x) − R_k(x)‖` per level (spectral norm).
    pub fn increments(&self) -> Vec<f64> {
        (0..self.depth())
            .map(|k| self.rotations.iter().map(|r| (&r[k + 1] - &r[k]).singular_values().max()).fold(0.0, f64::max))
            .collect()
    }
}

/// Cutoffs `ρ_k(y)` in `|y|` for levels `0..=depth`: `ρ_0 = h(|y|)`,
/// `ρ_k = h(|y|/r_k) − h(|y|/r_{k−1})` for `0 < k < K` and
/// `ρ_K = 1 − h(|y|/r_{K−1})`, with `h = 0` on `[0, 1]` and `1` on `[2, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffLadder {
    pub depth: usize,
}

impl CutoffLadder {
    pub fn profile(t: f64) -> f64 {
        smoothstep(t - 1.0).0
    }

    /// Nonzero `(k, ρ_k(y))` given `|y|`, in increasing `k`.
    pub fn weights(&self, norm: f64) -> Vec<(usize, f64)> {
        if self.depth == 0 {
            return vec![(0, 1.0)];
        }
        let h = |k: usize| Self::profile(norm / scale(k));
        let mut out = Vec::with_capacity(3);
        let mut previous = h(0);
        if previous > 0.0 {
            out.push((0, previous));
        }
        for k in 1..self.depth {
            if previous == 1.0 {
                return out;
            }
            let current = h(k);
            if current - previous > 0.0 {
                out.push((k, current - previous));
            }
            previous = current;
        }
        if previous < 1.0 {
            out.push((self.depth, 1.0 - previous));
        }
        out
    }
}

/// Where `g` takes its `R_k` from.
#[derive(Debug, Clone, Copy)]
pub enum Isometries<'a> {
    /// Computed exactly along the trajectory of `p(z)`.
    Exact,
    /// Nearest node of a precomputed field.
    Field(&'a IsometryField),
}

/// The ambient extension `g(z)`.
pub fn extend(pm: &ParamMap, source: Isometries<'_>, z: &Vector) -> Result<Vector> {
    check_dim(pm.ccbp().ambient_dim(), z.len())?;
    let sigma0 = pm.sigma0();
    let (x, y) = split(sigma0, z);
    let weights = CutoffLadder { depth: pm.depth() }.weights(y.norm());
    if weights == [(0, 1.0)] {
        return Ok(z.clone());
    }
    let top = weights.last().expect("weights sum to one").0;
    let mut out = Vector::zeros(z.len());
    match source {
        Isometries::Exact => {
            let (states, rs) = if y.norm() == 0.0 {
                (pm.evaluate(&x, top, JacobianMode::None)?.states, Vec::new())
            } else {
                isometries_along(pm, &x, top)?
            };
            for &(k, w) in &weights {
                out.axpy(w, &states[k], 1.0);
                if !rs.is_empty() {
                    out.axpy(w, &(&rs[k] * &y), 1.0);
                }
            }
        }
        Isometries::Field(field) => {
            if field.depth() < top {
                return Err(crate::error::invalid("field", format!("depth {} below {top}", field.depth())));
            }
            let states = pm.evaluate(&x, top, JacobianMode::None)?.states;
            for &(k, w) in &weights {
                out.axpy(w, &states[k], 1.0);
                out.axpy(w, &(field.lookup(sigma0, k, &x) * &y), 1.0);
            }
        }
    }
    Ok(out)
}

/// Saw-tooth region `Ω_A` over `Σ_0` with respect to a sample of `F_∞`.
#[derive(Debug, Clone)]
pub struct SawTooth {
    a: f64,
    sigma0: AffinePlane,
    f_inf: Vec<Vector>,
    tree: KdTree,
}

/// Half-width of the slab `V` around `Σ_0` inside which the cone test applies.
pub const SAWTOOTH_SLAB: f64 = 40.0;

impl SawTooth {
    pub fn new(a: f64, sigma0: AffinePlane, f_inf: Vec<Vector>) -> Result<Self> {
        if !(a >= 1.0 && a.is_finite()) {
            return Err(crate::error::invalid("A", format!("{a} is below 1")));
        }
        if f_inf.is_empty() {
            return Err(crate::error::invalid("F_inf", "empty sample"));
        }
        for x in &f_inf {
            check_dim(sigma0.ambient_dim(), x.len())?;
        }
        let tree = KdTree::new(&f_inf);
        Ok(Self { a, sigma0, f_inf, tree })
    }

    /// `F_∞` from the preimages on `Σ_0` of the level-`K` centers.
    pub fn from_centers(pm: &ParamMap, a: f64) -> Result<Self> {
        let k = pm.depth();
        let tol = 1e-8 * scale(k);
        let centers = pm.ccbp().centers(k.min(pm.ccbp().levels() - 1));
        let f_inf = centers.par_iter().map(|c| pm.invert_on_base(c, k, tol)).collect::<Result<Vec<_>>>()?;
        Self::new(a, pm.sigma0().clone(), f_inf)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn f_inf(&self) -> &[Vector] {
        &self.f_inf
    }

    pub fn dist_to_f_inf(&self, x: &Vector) -> f64 {
        self.tree.nearest(x.as_slice()).map_or(f64::INFINITY, |(_, d)| d)
    }

    /// `z ∈ Ω_A`: outside the slab, or `|q(z)| > A·dist(p(z), F_∞)`.
    pub fn contains(&self, z: &Vector) -> bool {
        let (p, q) = split(&self.sigma0, z);
        let h = q.norm();
        h >= SAWTOOTH_SLAB || h > self.a * self.dist_to_f_inf(&p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawToothReport {
    pub a: f64,
    pub samples: usize,
    /// `min dist(g(z), E)/|q(z)|` over the samples.
    pub min_margin: f64,
    /// `min dist(g(z), E)`.
    pub min_distance: f64,
    pub worst_point: Vec<f64>,
}

/// Checks `dist(g(z), E) > 0` for sampled `z ∈ Ω_A` and reports the margin
/// relative to `|q(z)|`. Samples outside `Ω_A` are rejected.
pub fn sawtooth_audit(
    pm: &ParamMap,
    source: Isometries<'_>,
    st: &SawTooth,
    cloud: &PointCloud,
    samples: &[Vector],
) -> Result<SawToothReport> {
    let inside: Vec<&Vector> = samples.iter().filter(|z| st.contains(z)).collect();
    if inside.is_empty() {
        return Err(Error::InsufficientSamples("no sample lies in the saw-tooth region".into()));
    }
    let measured = inside
        .par_iter()
        .map(|z| {
            let gz = extend(pm, source, z)?;
            let (_, q) = split(pm.sigma0(), z);
            let dist = cloud.nearest(&gz).map_or(f64::INFINITY, |(_, d)| d);
            Ok((dist / q.norm(), dist))
        })
        .collect::<Result<Vec<_>>>()?;
    let (worst, &(min_margin, _)) =
        measured.iter().enumerate().min_by(|a, b| a.1 .0.total_cmp(&b.1 .0)).expect("nonempty");
    Ok(SawToothReport {
        a: st.a,
        samples: inside.len(),
        min_margin,
        min_distance: measured.iter().map(|m| m.1).fold(f64::INFINITY, f64::min),
        worst_point: inside[worst].iter().cloned().collect(),
    })
}

/// Points above `Σ_0` near `F_∞` drawn inside `Ω_A`: for each sample base
/// point `x` and height fraction `s ∈ (0, 1]`, `z = x + h·ν` with
/// `h = s·max_height` and `ν` cycling through the unit normals of `Σ_0`.
pub fn sawtooth_samples(st: &SawTooth, bases: &[Vector], heights: &[f64]) -> Vec<Vector> {
    let normals = st.sigma0.normal_frame();
    let mut out = Vec::new();
    for (i, x) in bases.iter().enumerate() {
        let nu = normals.column(i % normals.ncols()).into_owned();
        let sign = if (i / normals.ncols()).is_multiple_of(2) { 1.0 } else { -1.0 };
        for &h in heights {
            let z = x + &nu * (sign * h);
            if st.contains(&z) {
                out.push(z);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vector;
    use crate::nets::{build_net, fit_ccbp, FitConfig, FitMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_examples() {
        let axis = AffinePlane::coordinate(2, 1).unwrap();
        let (p, q) = split(&axis, &vector(&[3.0, 4.0]));
        assert_eq!((p, q), (vector(&[3.0, 0.0]), vector(&[0.0, 4.0])));
        let (_, q) = split(&axis, &vector(&[-2.0, 0.0]));
        assert_eq!(q.norm(), 0.0);
    }

    #[test]
    fn split_height_matches_sampled_distance() {
        let plane =
            AffinePlane::new(vector(&[0.1, -0.2, 0.3]), &[vector(&[1.0, 1.0, 0.0]), vector(&[0.0, 1.0, 2.0])]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let z = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let (_, q) = split(&plane, &z);
            let mut best = f64::INFINITY;
            for i in -200..=200 {
                for j in -200..=200 {
                    let t = vector(&[i as f64 * 0.01, j as f64 * 0.01]);
                    best = best.min((plane.point_at(&t) - &z).norm());
                }
            }
            assert!(q.norm() <= best + 1e-12 && best - q.norm() < 5e-3);
        }
    }

    #[test]
    fn isometry_projection_examples() {
        let rot = Matrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        assert!((project_isometry(&rot).unwrap() - &rot).norm() < 1e-15);
        let h = project_isometry(&(Matrix::identity(2, 2) * 1.1)).unwrap();
        assert!((h - Matrix::identity(2, 2)).norm() < 1e-15);
        assert!(matches!(project_isometry(&(Matrix::identity(2, 2) * 2.0)), Err(Error::ProjectionDomain { .. })));
    }

    #[test]
    fn isometry_projection_matches_svd_polar_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = Matrix::identity(3, 3) + Matrix::from_fn(3, 3, |_, _| rng.random_range(-0.08..0.08));
            let h = project_isometry(&s).unwrap();
            let svd = s.clone().svd(true, true);
            let polar = svd.u.unwrap() * svd.v_t.unwrap();
            assert!((&h - polar).norm() < 1e-10);
            assert!((h.transpose() * &h - Matrix::identity(3, 3)).norm() < 1e-12);
        }
    }

    #[test]
    fn cutoff_ladder_sums_to_one_with_few_terms() {
        let ladder = CutoffLadder { depth: 5 };
        for i in 1..4000 {
            let t = 10f64.powf(-6.0 + i as f64 * 7.0 / 4000.0);
            let w = ladder.weights(t);
            assert!(w.len() <= 3);
            assert!((w.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-14);
            for &(k, v) in &w {
                assert!(v > 0.0);
                if (1..5).contains(&k) {
                    assert!(scale(k) < t && t < 20.0 * scale(k));
                }
            }
        }
        assert_eq!(ladder.weights(2.0), vec![(0, 1.0)]);
        assert_eq!(ladder.weights(0.0), vec![(5, 1.0)]);
    }

    fn flat_map() -> ParamMap {
        let pts: Vec<Vector> = (0..=1000).map(|i| vector(&[-0.5 + 2.0 * i as f64 / 1000.0, 0.0])).collect();
        let cloud = PointCloud::new(pts, 1).unwrap();
        let net = build_net(&cloud, 3, |_, _| true);
        let sigma0 = AffinePlane::coordinate(2, 1).unwrap();
        ParamMap::full(fit_ccbp(&cloud, &net, &sigma0, &FitConfig::new(FitMode::L2, 0.1)).unwrap())
    }

    #[test]
    fn flat_configuration_gives_identity_extension() {
        let pm = flat_map();
        let field = IsometryField::build(&pm, BaseGrid::new(vec![0.0], vec![1.0], 0.05).unwrap()).unwrap();
        assert!(field.rotations.iter().flatten().all(|r| (r - Matrix::identity(2, 2)).norm() < 1e-14));
        for z in [vector(&[0.3, 0.0]), vector(&[0.4, 0.015]), vector(&[0.7, -0.3]), vector(&[0.1, 3.0])] {
            for source in [Isometries::Exact, Isometries::Field(&field)] {
                assert!((extend(&pm, source, &z).unwrap() - &z).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sawtooth_membership() {
        let axis = AffinePlane::coordinate(2, 1).unwrap();
        let st = SawTooth::new(2.0, axis, vec![vector(&[0.0, 0.0]), vector(&[1.0, 0.0])]).unwrap();
        assert!(!st.contains(&vector(&[0.5, 0.0])));
        assert!(st.contains(&vector(&[0.5, 1.01])));
        assert!(!st.contains(&vector(&[0.5, 0.99])));
        assert!(st.contains(&vector(&[0.0, 1e-9])));
        assert!(st.contains(&vector(&[7.0, 41.0])));
        assert!(SawTooth::new(2.0, AffinePlane::coordinate(2, 1).unwrap(), Vec::new()).is_err());
    }
}
