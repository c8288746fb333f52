//! Plane fitting and multiscale flatness statistics.
//!
//! β_∞ uses planes through the query point; β_q uses planes through the
//! ball (the fitted plane passes through a weighted centroid of the ball's
//! samples, hence meets it).

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{pairwise_sum, PointCloud};
use crate::error::{Error, Result};
use crate::geom::{
    complement_frame, orthonormalize_columns, plane_local_distance, unit_ball_volume, AffinePlane, Ball, Matrix,
    Vector, MAX_AMBIENT_DIM,
};
use crate::nets::{scale, Ccbp};
use crate::optim::NelderMead;

/// Plane with its fitting objective over the ball's samples.
#[derive(Debug, Clone)]
pub struct PlaneFit {
    pub plane: AffinePlane,
    /// Achieved objective: Σ w·dist² (L2), Σ w·dist^q (IRLS) or sup dist (minimax).
    pub objective: f64,
    pub samples: usize,
}

/// IRLS refinement record.
#[derive(Debug, Clone)]
pub struct IrlsFit {
    pub fit: PlaneFit,
    /// Objective of the L2 initializer under the same power `q`.
    pub initial_objective: f64,
    pub iterations: usize,
    /// False when the iteration cap was reached before the stopping rule.
    pub converged: bool,
    /// Objectives of the accepted iterates, starting with the initializer.
    pub trace: Vec<f64>,
}

/// Eigen-decomposition of a weighted second-moment matrix, sorted descending.
struct Moments {
    center: Vector,
    values: Vec<f64>,
    vectors: Matrix,
}

fn moments(points: &[&Vector], weights: &[f64], center: Option<&Vector>) -> Moments {
    let n = points[0].len();
    let total = pairwise_sum(weights);
    let center = match center {
        Some(c) => c.clone(),
        None => {
            let mut c = Vector::zeros(n);
            for (p, w) in points.iter().zip(weights) {
                c.axpy(*w, p, 1.0);
            }
            c / total
        }
    };
    // Upper triangle accumulated on the stack; n ≤ MAX_AMBIENT_DIM.
    let mut acc = [[0.0f64; MAX_AMBIENT_DIM]; MAX_AMBIENT_DIM];
    let mut v = [0.0f64; MAX_AMBIENT_DIM];
    for (p, w) in points.iter().zip(weights) {
        for i in 0..n {
            v[i] = p[i] - center[i];
        }
        for i in 0..n {
            let wi = w * v[i];
            for j in i..n {
                acc[i][j] += wi * v[j];
            }
        }
    }
    let cov = Matrix::from_fn(n, n, |i, j| if i <= j { acc[i][j] } else { acc[j][i] });
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors =
        Matrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    Moments { center, values, vectors }
}

fn gather<'a>(cloud: &'a PointCloud, ids: &[usize]) -> (Vec<&'a Vector>, Vec<f64>) {
    (ids.iter().map(|&i| cloud.point(i)).collect(), ids.iter().map(|&i| cloud.weight_or_unit(i)).collect())
}

/// Weighted PCA plane; errors when the top `d` directions are not resolved.
fn pca_plane(points: &[&Vector], weights: &[f64], d: usize, radius: f64) -> Result<AffinePlane> {
    if points.len() < d + 1 {
        return Err(Error::RankDeficientSamples { radius, samples: points.len() });
    }
    let m = moments(points, weights, None);
    if !(m.values[0] > 0.0) || m.values[d - 1] <= 1e-14 * m.values[0] {
        return Err(Error::RankDeficientSamples { radius, samples: points.len() });
    }
    AffinePlane::from_frame(m.center, m.vectors.columns(0, d).into_owned())
}

fn power(dist: f64, q: f64) -> f64 {
    if q == 1.0 {
        dist
    } else if q == 2.0 {
        dist * dist
    } else {
        dist.powf(q)
    }
}

/// Distances to `plane` and `Σ w·dist^q`.
fn residuals(plane: &AffinePlane, points: &[&Vector], weights: &[f64], q: f64) -> (Vec<f64>, f64) {
    let dists: Vec<f64> = points.iter().map(|p| plane.dist(p)).collect();
    let terms: Vec<f64> = dists.iter().zip(weights).map(|(r, w)| w * power(*r, q)).collect();
    (dists, pairwise_sum(&terms))
}

fn power_objective(plane: &AffinePlane, points: &[&Vector], weights: &[f64], q: f64) -> f64 {
    residuals(plane, points, weights, q).1
}

/// Least-squares plane of `cloud ∩ B(x, r)` and the sample count, from one
/// pass of weighted moments taken about `x`.
pub(crate) fn l2_plane_in_ball(cloud: &PointCloud, x: &Vector, r: f64) -> Result<(AffinePlane, usize)> {
    let n = x.len();
    let d = cloud.intrinsic_dim();
    let mut count = 0usize;
    let mut total = 0.0;
    let mut first = [0.0f64; MAX_AMBIENT_DIM];
    let mut second = [[0.0f64; MAX_AMBIENT_DIM]; MAX_AMBIENT_DIM];
    let mut v = [0.0f64; MAX_AMBIENT_DIM];
    cloud.for_each_within(x, r, |i, _| {
        let (p, w) = (cloud.point(i), cloud.weight_or_unit(i));
        count += 1;
        total += w;
        for a in 0..n {
            v[a] = p[a] - x[a];
            first[a] += w * v[a];
        }
        for a in 0..n {
            let wa = w * v[a];
            for b in a..n {
                second[a][b] += wa * v[b];
            }
        }
    });
    let deficient = || Error::RankDeficientSamples { radius: r, samples: count };
    if count < d + 1 {
        return Err(deficient());
    }
    let mean: Vec<f64> = first[..n].iter().map(|f| f / total).collect();
    let cov = Matrix::from_fn(n, n, |a, b| {
        let (a, b) = (a.min(b), a.max(b));
        second[a][b] - total * mean[a] * mean[b]
    });
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let (top, last) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[d - 1]]);
    if !(top > 0.0) || last <= 1e-14 * top {
        return Err(deficient());
    }
    let frame =
        Matrix::from_columns(&order[..d].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    let base = Vector::from_fn(n, |a, _| x[a] + mean[a]);
    Ok((AffinePlane::from_frame(base, frame)?, count))
}

/// Weighted least-squares plane through the weighted centroid of `cloud ∩ ball`.
pub fn fit_plane_l2(cloud: &PointCloud, ball: &Ball) -> Result<PlaneFit> {
    crate::geom::check_dim(cloud.ambient_dim(), ball.center.len())?;
    let (plane, samples) = l2_plane_in_ball(cloud, &ball.center, ball.radius)?;
    let ids = cloud.within(&ball.center, ball.radius);
    let (points, weights) = gather(cloud, &ids);
    let objective = power_objective(&plane, &points, &weights, 2.0);
    Ok(PlaneFit { plane, objective, samples })
}

const IRLS_MAX_ITERATIONS: usize = 200;
/// IRLS stops once an iterate lowers the objective by less than this fraction.
const IRLS_RELATIVE_GAIN: f64 = 1e-9;

fn irls(points: &[&Vector], weights: &[f64], d: usize, q: f64, radius: f64) -> Result<IrlsFit> {
    let start = pca_plane(points, weights, d, radius)?;
    let (mut dists, initial_objective) = residuals(&start, points, weights, q);
    let mut best = start;
    let mut best_obj = initial_objective;
    let mut trace = vec![initial_objective];
    let floor = 1e-12 * radius;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < IRLS_MAX_ITERATIONS {
        if best_obj == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let c: Vec<f64> = dists
            .iter()
            .zip(weights)
            .map(|(r, w)| {
                let r = r.max(floor);
                if q == 1.0 {
                    w / r
                } else {
                    w * r.powf(q - 2.0)
                }
            })
            .collect();
        let next = match pca_plane(points, &c, d, radius) {
            Ok(p) => p,
            Err(_) => {
                converged = true;
                break;
            }
        };
        let (next_dists, obj) = residuals(&next, points, weights, q);
        if !(obj < best_obj) {
            converged = true;
            break;
        }
        let gain = best_obj - obj;
        best = next;
        best_obj = obj;
        dists = next_dists;
        trace.push(obj);
        if gain <= IRLS_RELATIVE_GAIN * best_obj {
            converged = true;
            break;
        }
    }
    Ok(IrlsFit {
        fit: PlaneFit { plane: best, objective: best_obj, samples: points.len() },
        initial_objective,
        iterations,
        converged,
        trace,
    })
}

/// IRLS minimization of `Σ w·dist(p, P)` over planes, started from the L2 plane.
/// Accepted iterates never increase the objective.
pub fn fit_plane_l1(cloud: &PointCloud, ball: &Ball) -> Result<IrlsFit> {
    fit_plane_lq(cloud, ball, 1.0)
}

/// IRLS minimization of `Σ w·dist(p, P)^q` with weights `dist^{q−2}`.
pub fn fit_plane_lq(cloud: &PointCloud, ball: &Ball, q: f64) -> Result<IrlsFit> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(crate::error::invalid("q", format!("{q} is not in [1, ∞)")));
    }
    let ids = cloud.within(&ball.center, ball.radius);
    let (points, weights) = gather(cloud, &ids);
    irls(&points, &weights, cloud.intrinsic_dim(), q, ball.radius)
}

/// Sup of distances from the relative vectors (columns of `rel`) to span `u`.
fn sup_residual(u: &Matrix, rel: &Matrix) -> f64 {
    let t = u.tr_mul(rel);
    let res = rel - u * t;
    res.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Approximate minimax plane through `x` for the samples in `B(x, r)`.
///
/// Starts from the centered and uncentered PCA frames and runs Nelder–Mead in
/// the chart `A ↦ orth(U0 + N0·A)`; the reported sup is achieved by the
/// returned plane.
pub fn fit_plane_minimax(cloud: &PointCloud, x: &Vector, r: f64) -> Result<PlaneFit> {
    crate::geom::check_dim(cloud.ambient_dim(), x.len())?;
    let ids = cloud.within(x, r);
    if ids.is_empty() {
        return Err(Error::EmptyBall { radius: r });
    }
    let (points, weights) = gather(cloud, &ids);
    minimax_plane(&points, &weights, x, cloud.intrinsic_dim())
}

fn minimax_plane(points: &[&Vector], weights: &[f64], x: &Vector, d: usize) -> Result<PlaneFit> {
    let n = x.len();
    let rel = Matrix::from_columns(&points.iter().map(|p| *p - x).collect::<Vec<_>>());
    let mut inits: Vec<Matrix> = Vec::new();
    if let Ok(p) = pca_plane(points, weights, d, 0.0) {
        inits.push(p.frame().clone());
    }
    let about_x = moments(points, weights, Some(x));
    inits.push(about_x.vectors.columns(0, d).into_owned());

    let mut best: Option<(Matrix, f64)> = None;
    for u0 in inits {
        let u0 = orthonormalize_columns(&u0)?;
        let n0 = complement_frame(&u0);
        let chart = |params: &[f64]| -> Matrix {
            let a = Matrix::from_column_slice(n - d, d, params);
            orthonormalize_columns(&(&u0 + &n0 * a)).unwrap_or_else(|_| u0.clone())
        };
        let objective = |params: &[f64]| sup_residual(&chart(params), &rel);
        let start = vec![0.0; (n - d) * d];
        let start_value = objective(&start);
        let (u, value) = if start_value == 0.0 {
            (u0.clone(), 0.0)
        } else {
            let m = NelderMead::default().minimize(objective, &start);
            (chart(&m.x), m.value)
        };
        let value = value.min(sup_residual(&u, &rel));
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            let sup = sup_residual(&u, &rel);
            best = Some((u, sup));
        }
    }
    let (u, sup) = best.expect("at least one initializer");
    Ok(PlaneFit { plane: AffinePlane::from_frame(x.clone(), u)?, objective: sup, samples: points.len() })
}

/// `β_∞(x, r)`: sup distance over `E ∩ B(x, r)` to the best plane through `x`, over `r`.
pub fn beta_inf(cloud: &PointCloud, x: &Vector, r: f64) -> Result<f64> {
    Ok(fit_plane_minimax(cloud, x, r)?.objective / r)
}

/// `β_q` together with the plane that achieves it, when more than `d + 1`
/// samples are present; otherwise the samples lie in a common plane and the
/// value is 0.
pub fn beta_q_fit(cloud: &PointCloud, x: &Vector, r: f64, q: f64) -> Result<(f64, Option<AffinePlane>)> {
    crate::geom::check_dim(cloud.ambient_dim(), x.len())?;
    if cloud.weights().is_none() {
        return Err(Error::MissingWeights);
    }
    if !(q >= 1.0 && q.is_finite()) {
        return Err(crate::error::invalid("q", format!("{q} is not in [1, ∞)")));
    }
    let ids = cloud.within(x, r);
    if ids.is_empty() {
        return Err(Error::EmptyBall { radius: r });
    }
    let d = cloud.intrinsic_dim();
    if ids.len() <= d + 1 {
        return Ok((0.0, None));
    }
    let (points, w) = gather(cloud, &ids);
    let fit = if q == 2.0 {
        pca_plane(&points, &w, d, r).map(|plane| PlaneFit {
            objective: power_objective(&plane, &points, &w, 2.0),
            plane,
            samples: points.len(),
        })
    } else {
        irls(&points, &w, d, q, r).map(|f| f.fit)
    };
    match fit {
        Ok(fit) => {
            let normalized = fit.objective / r.powf(q) / r.powi(d as i32);
            Ok((normalized.powf(1.0 / q), Some(fit.plane)))
        }
        Err(Error::RankDeficientSamples { .. }) => Ok((0.0, None)),
        Err(e) => Err(e),
    }
}

/// `β_q(x, r) = (r^{−d} Σ w (dist/r)^q)^{1/q}` for the best L^q plane.
pub fn beta_q(cloud: &PointCloud, x: &Vector, r: f64, q: f64) -> Result<f64> {
    Ok(beta_q_fit(cloud, x, r, q)?.0)
}

/// Truncated Jones-type sums of one base point's profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JonesSums {
    pub j_inf: f64,
    pub j_q: Option<f64>,
    pub j_alpha: f64,
    pub depth: usize,
}

/// Per-scale entries of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub k: usize,
    pub beta_inf: f64,
    pub beta_q: Option<f64>,
    pub alpha_k: Option<f64>,
    pub eps_k: Option<f64>,
    pub eps_prime_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointProfile {
    pub point_id: usize,
    pub scales: Vec<ScaleEntry>,
    pub sums: JonesSums,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    /// Deepest scale index `K`.
    pub depth: usize,
    /// Power of the averaged β; `None` skips it (no weights needed).
    pub q: Option<f64>,
    /// First scale index included in the β_q sum.
    pub j_q_start: usize,
    /// Radius factor of the neighborhood used in α_k.
    pub alpha_radius_factor: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { depth: 6, q: Some(1.0), j_q_start: 3, alpha_radius_factor: 35.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaProfile {
    pub config: ProfileConfig,
    pub points: Vec<PointProfile>,
}

/// Sums of squares of the per-scale entries: `J_∞` over `k ≥ 0`,
/// `J_q` over `k ≥ j_q_start`, `J` over the available α_k.
pub fn jones_sums(entries: &[ScaleEntry], j_q_start: usize) -> JonesSums {
    let j_inf = entries.iter().map(|e| e.beta_inf * e.beta_inf).sum();
    let j_q = if entries.iter().all(|e| e.beta_q.is_some()) {
        Some(entries.iter().filter(|e| e.k >= j_q_start).map(|e| e.beta_q.unwrap().powi(2)).sum())
    } else {
        None
    };
    let j_alpha = entries.iter().filter_map(|e| e.alpha_k).map(|a| a * a).sum();
    JonesSums { j_inf, j_q, j_alpha, depth: entries.iter().map(|e| e.k).max().unwrap_or(0) }
}

/// Distance between family planes, falling back to `dist(x, P)/r` when a plane
/// misses the ball.
fn family_distance(p: &AffinePlane, q: &AffinePlane, x: &Vector, r: f64) -> f64 {
    match plane_local_distance(p, q, x, r) {
        Ok(v) => v,
        Err(_) => p.dist(x).max(q.dist(x)) / r,
    }
}

/// Multiscale profile at the selected base points.
///
/// The plane family is `P_k(x)` = minimax plane through `x` at radius `r_k`;
/// `α_k(x) = d_{x,r_k}(P_{k+1}(x), P_k(x)) + sup_y d_{x,r_k}(P_k(x), P_k(y))`
/// with `y` ranging over base points in `B(x, alpha_radius_factor·r_k)`.
/// `ε_k`, `ε'_k` are evaluated at the base point when a CCBP is supplied.
pub fn beta_profile(
    cloud: &PointCloud,
    base_points: &[usize],
    config: &ProfileConfig,
    ccbp: Option<&Ccbp>,
) -> Result<BetaProfile> {
    if config.q.is_some() && cloud.weights().is_none() {
        return Err(Error::MissingWeights);
    }
    if let Some(&bad) = base_points.iter().find(|&&i| i >= cloud.len()) {
        return Err(crate::error::invalid("base_points", format!("index {bad} out of range")));
    }
    let depth = config.depth;
    // planes[p][k] for k = 0..=depth + 1 (the extra level feeds α_depth).
    let planes: Vec<Vec<PlaneFit>> = base_points
        .par_iter()
        .map(|&i| {
            let x = cloud.point(i);
            (0..=depth + 1).map(|k| fit_plane_minimax(cloud, x, scale(k))).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let base_coords: Vec<Vector> = base_points.iter().map(|&i| cloud.point(i).clone()).collect();
    let base_index = crate::index::KdTree::new(&base_coords);

    let points = (0..base_points.len())
        .into_par_iter()
        .map(|p| -> Result<PointProfile> {
            let x = &base_coords[p];
            let mut scales = Vec::with_capacity(depth + 1);
            for k in 0..=depth {
                let r = scale(k);
                let beta_inf = planes[p][k].objective / r;
                let beta_q = match config.q {
                    Some(q) => Some(beta_q(cloud, x, r, q)?),
                    None => None,
                };
                let pk = &planes[p][k].plane;
                let mut alpha = family_distance(&planes[p][k + 1].plane, pk, x, r);
                let mut neighbor_sup = 0.0f64;
                base_index.for_each_within(x.as_slice(), config.alpha_radius_factor * r, |other, _| {
                    if other != p {
                        neighbor_sup = neighbor_sup.max(family_distance(pk, &planes[other][k].plane, x, r));
                    }
                });
                alpha += neighbor_sup;
                let (eps_k, eps_prime_k) = match ccbp {
                    Some(c) if k < c.levels() => {
                        let e = eps_profiles(c, x, k);
                        (Some(e.eps_k), Some(e.eps_prime_k))
                    }
                    _ => (None, None),
                };
                scales.push(ScaleEntry { k, beta_inf, beta_q, alpha_k: Some(alpha), eps_k, eps_prime_k });
            }
            let sums = jones_sums(&scales, config.j_q_start);
            Ok(PointProfile { point_id: base_points[p], scales, sums })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BetaProfile { config: config.clone(), points })
}

/// Distortion quantities at `y` for level `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsValues {
    pub eps_k: f64,
    pub eps_prime_k: f64,
}

/// `ε_k(y)` and `ε'_k(y)`.
///
/// `ε_k(y) = sup d_{x_i,100r_k}(P_j, P_i)` over level-`k` pairs with
/// `y ∈ 10B_i ∩ 10B_j`; `ε'_k(y) = sup d_{x_{i,l},100r_l}(P_{j,k}, P_{i,l})`
/// over `l ∈ {k−1, k}` (only `l = 0` when `k = 0`) with
/// `y ∈ 10B_{j,k} ∩ 11B_{i,l}`, and `ε'_k(y) = 0` outside `V_k^{10}`.
pub fn eps_profiles(ccbp: &Ccbp, y: &Vector, k: usize) -> EpsValues {
    let rk = scale(k);
    let here = ccbp.centers_within_open(k, y, 10.0 * rk);
    let mut eps_k = 0.0f64;
    for &i in &here {
        for &j in &here {
            if i != j {
                let v = plane_local_distance(ccbp.plane(k, j), ccbp.plane(k, i), ccbp.center(k, i), 100.0 * rk);
                eps_k = eps_k.max(v.unwrap_or(f64::INFINITY));
            }
        }
    }
    let mut eps_prime = 0.0f64;
    let levels: &[usize] = if k == 0 { &[0] } else { &[k - 1, k] };
    for &l in levels {
        let rl = scale(l);
        let others = ccbp.centers_within_open(l, y, 11.0 * rl);
        for &j in &here {
            for &i in &others {
                if l == k && i == j {
                    continue;
                }
                let v = plane_local_distance(ccbp.plane(k, j), ccbp.plane(l, i), ccbp.center(l, i), 100.0 * rl);
                eps_prime = eps_prime.max(v.unwrap_or(f64::INFINITY));
            }
        }
    }
    EpsValues { eps_k, eps_prime_k: eps_prime }
}

/// Carleson statistic with per-scale contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonSum {
    pub value: f64,
    /// `(k, contribution)` for each scale `r_k ≤ r` up to the depth.
    pub per_scale: Vec<(usize, f64)>,
    pub samples: usize,
}

/// `r^{−d} Σ_{y ∈ B(x,r)} Σ_{k: r_k ≤ r, k ≤ depth} w(y)·β_q(y, r_k)²`.
pub fn carleson_sum(cloud: &PointCloud, x: &Vector, r: f64, q: f64, depth: usize) -> Result<CarlesonSum> {
    let weights = cloud.weights().ok_or(Error::MissingWeights)?;
    let ids = cloud.within(x, r);
    if ids.is_empty() {
        return Err(Error::EmptyBall { radius: r });
    }
    let ks: Vec<usize> = (0..=depth).filter(|&k| scale(k) <= r * (1.0 + 1e-12)).collect();
    let d = cloud.intrinsic_dim() as i32;
    let per_point: Vec<Vec<f64>> = ids
        .par_iter()
        .map(|&i| {
            ks.iter()
                .map(|&k| beta_q(cloud, cloud.point(i), scale(k), q).map(|b| weights[i] * b * b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let norm = r.powi(d);
    let per_scale: Vec<(usize, f64)> = ks
        .iter()
        .enumerate()
        .map(|(s, &k)| (k, pairwise_sum(&per_point.iter().map(|v| v[s]).collect::<Vec<_>>()) / norm))
        .collect();
    Ok(CarlesonSum { value: per_scale.iter().map(|(_, v)| v).sum(), per_scale, samples: ids.len() })
}

/// Mass ratio `H^d(E ∩ B(x,r)) / (ω_d r^d)` at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AhlforsRatio {
    pub r: f64,
    pub mass: f64,
    pub ratio: f64,
    /// The ball reaches past the sampled set: its weighted sample centroid is
    /// displaced from `x` by more than `r/4`.
    pub boundary: bool,
}

pub fn ahlfors_ratio(cloud: &PointCloud, x: &Vector, r: f64) -> Result<AhlforsRatio> {
    let weights = cloud.weights().ok_or(Error::MissingWeights)?;
    let ids = cloud.within(x, r);
    if ids.is_empty() {
        return Err(Error::EmptyBall { radius: r });
    }
    let w: Vec<f64> = ids.iter().map(|&i| weights[i]).collect();
    let mass = pairwise_sum(&w);
    let mut centroid = Vector::zeros(x.len());
    for (&i, wi) in ids.iter().zip(&w) {
        centroid.axpy(*wi, cloud.point(i), 1.0);
    }
    centroid /= mass;
    let d = cloud.intrinsic_dim();
    Ok(AhlforsRatio {
        r,
        mass,
        ratio: mass / (unit_ball_volume(d) * r.powi(d as i32)),
        boundary: (centroid - x).norm() > 0.25 * r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhlforsCheck {
    /// Extremes over the non-boundary radii; `None` when all are boundary.
    pub lower_ratio: Option<f64>,
    pub upper_ratio: Option<f64>,
    pub entries: Vec<AhlforsRatio>,
}

/// Mass ratios over several radii; boundary balls are reported but excluded
/// from the extremes.
pub fn ahlfors_check(cloud: &PointCloud, x: &Vector, radii: &[f64]) -> Result<AhlforsCheck> {
    let entries = radii.iter().map(|&r| ahlfors_ratio(cloud, x, r)).collect::<Result<Vec<_>>>()?;
    let interior: Vec<f64> = entries.iter().filter(|e| !e.boundary).map(|e| e.ratio).collect();
    Ok(AhlforsCheck {
        lower_ratio: interior.iter().cloned().reduce(f64::min),
        upper_ratio: interior.iter().cloned().reduce(f64::max),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalScale {
    pub r: f64,
    /// Squared bracket `{r^{−d} Σ w |⟨y−x, n_{x,r}⟩| / r}²`.
    pub integrand: f64,
    /// `|n_{x,r}|` for the averaged normal.
    pub normal_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFunctional {
    pub value: f64,
    pub min_normal_norm: f64,
    pub scales: Vec<NormalScale>,
}

/// Discretized `H(x) = ∫_0^1 {r^{−d} ∫_{B(x,r)} r^{−1}|⟨y−x, n_{x,r}⟩|}² dr/r`
/// on `r = 10^{−i/per_decade}`, `i = 0..=per_decade·depth`, each node weighted by
/// `ln 10 / per_decade`.
pub fn normal_functional(cloud: &PointCloud, x: &Vector, depth: usize, per_decade: usize) -> Result<NormalFunctional> {
    let normals = cloud.normals().ok_or(Error::MissingNormals)?;
    let weights = cloud.weights().ok_or(Error::MissingWeights)?;
    let d = cloud.intrinsic_dim();
    if d + 1 != cloud.ambient_dim() {
        return Err(Error::UnsupportedDimension { ambient: cloud.ambient_dim(), intrinsic: d });
    }
    if per_decade == 0 {
        return Err(crate::error::invalid("per_decade", "must be positive"));
    }
    let step = std::f64::consts::LN_10 / per_decade as f64;
    let mut scales = Vec::new();
    for i in 0..=per_decade * depth {
        let r = 10f64.powf(-(i as f64) / per_decade as f64);
        let ids = cloud.within(x, r);
        if ids.is_empty() {
            return Err(Error::EmptyBall { radius: r });
        }
        let mass = pairwise_sum(&ids.iter().map(|&j| weights[j]).collect::<Vec<_>>());
        let mut avg = Vector::zeros(x.len());
        for &j in &ids {
            avg.axpy(weights[j], &normals[j], 1.0);
        }
        avg /= mass;
        let terms: Vec<f64> = ids.iter().map(|&j| weights[j] * (cloud.point(j) - x).dot(&avg).abs() / r).collect();
        let bracket = pairwise_sum(&terms) / r.powi(d as i32);
        scales.push(NormalScale { r, integrand: bracket * bracket, normal_norm: avg.norm() });
    }
    let value = scales.iter().map(|s| s.integrand * step).sum();
    let min_normal_norm = scales.iter().map(|s| s.normal_norm).fold(f64::INFINITY, f64::min);
    Ok(NormalFunctional { value, min_normal_norm, scales })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vector;
    use approx::assert_abs_diff_eq;

    fn segment(n: usize, len: f64) -> PointCloud {
        let h = len / n as f64;
        let pts = (0..n).map(|i| vector(&[(i as f64 + 0.5) * h - len / 2.0, 0.0])).collect();
        PointCloud::with_weights(pts, vec![h; n], 1).unwrap()
    }

    /// Two rays from the origin at angles ±alpha to the x-axis.
    fn v_shape(alpha: f64, per_ray: usize) -> PointCloud {
        let mut pts = Vec::new();
        for s in [1.0, -1.0] {
            for i in 1..=per_ray {
                let t = i as f64 / per_ray as f64;
                pts.push(vector(&[t * alpha.cos(), s * t * alpha.sin()]));
            }
        }
        let w = vec![1.0 / per_ray as f64; pts.len()];
        PointCloud::with_weights(pts, w, 1).unwrap()
    }

    #[test]
    fn l2_recovers_exact_plane_and_bisector() {
        let cloud = segment(100, 2.0);
        let fit = fit_plane_l2(&cloud, &Ball::new(Vector::zeros(2), 0.5).unwrap()).unwrap();
        assert_eq!(fit.objective, 0.0);
        assert_abs_diff_eq!(fit.plane.frame()[(1, 0)], 0.0, epsilon = 1e-15);
        // Symmetric rays: covariance diag(cos²α·m, sin²α·m) → eigenvector e_x when α < π/4.
        let v = v_shape(0.3, 50);
        let fit = fit_plane_l2(&v, &Ball::new(Vector::zeros(2), 2.0).unwrap()).unwrap();
        assert_abs_diff_eq!(fit.plane.frame()[(1, 0)].abs(), 0.0, epsilon = 1e-12);
        let one = PointCloud::new(vec![vector(&[0.0, 0.0])], 1).unwrap();
        assert!(matches!(
            fit_plane_l2(&one, &Ball::new(Vector::zeros(2), 1.0).unwrap()),
            Err(Error::RankDeficientSamples { .. })
        ));
    }

    #[test]
    fn minimax_v_shape_matches_angle_grid() {
        for alpha in [0.05, 0.2, 0.5] {
            let v = v_shape(alpha, 40);
            let fit = fit_plane_minimax(&v, &Vector::zeros(2), 1.0 + 1e-12).unwrap();
            assert_abs_diff_eq!(fit.objective, alpha.sin(), epsilon = 1e-9);
            let oracle = (0..20000)
                .map(|i| {
                    let phi = std::f64::consts::PI * i as f64 / 20000.0;
                    let nrm = vector(&[-phi.sin(), phi.cos()]);
                    v.points().iter().map(|p| p.dot(&nrm).abs()).fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(fit.objective <= oracle * 1.01 && fit.objective >= oracle * 0.99);
        }
    }

    #[test]
    fn flat_samples_give_zero_betas() {
        let cloud = segment(200, 2.0);
        let x = Vector::zeros(2);
        assert_eq!(beta_inf(&cloud, &x, 0.5).unwrap(), 0.0);
        assert_eq!(beta_q(&cloud, &x, 0.5, 1.0).unwrap(), 0.0);
        assert_eq!(beta_q(&cloud, &x, 0.5, 2.0).unwrap(), 0.0);
        let unweighted = PointCloud::new(cloud.points().to_vec(), 1).unwrap();
        assert_eq!(beta_q(&unweighted, &x, 0.5, 1.0), Err(Error::MissingWeights));
        assert!(matches!(beta_inf(&cloud, &vector(&[5.0, 5.0]), 0.1), Err(Error::EmptyBall { .. })));
    }

    #[test]
    fn l1_beats_l2_with_outliers() {
        let mut pts: Vec<Vector> = (0..190).map(|i| vector(&[-1.0 + 2.0 * i as f64 / 189.0, 0.0])).collect();
        for i in 0..10 {
            pts.push(vector(&[-0.9 + 0.2 * i as f64, 0.8]));
        }
        let cloud = PointCloud::with_weights(pts, vec![0.01; 200], 1).unwrap();
        let ball = Ball::new(Vector::zeros(2), 2.0).unwrap();
        let fit = fit_plane_l1(&cloud, &ball).unwrap();
        assert!(fit.fit.objective < fit.initial_objective);
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
        // The robust fit snaps to the inlier line.
        assert!(fit.fit.objective < 0.0801);
    }

    #[test]
    fn bump_beta_one_matches_direct_sum() {
        // Unit-density segment with a bump of height h on [0.1, 0.1 + l]; at radius r
        // the L1 plane is the base line, so β_1 = r^{−1} Σ w·h / r.
        let (h, l, r) = (1e-3, 0.05, 0.5);
        let n = 20000;
        let step = 2.0 / n as f64;
        let pts: Vec<Vector> = (0..n)
            .map(|i| {
                let x = -1.0 + (i as f64 + 0.5) * step;
                vector(&[x, if (0.1..0.1 + l).contains(&x) { h } else { 0.0 }])
            })
            .collect();
        let cloud = PointCloud::with_weights(pts, vec![step; n], 1).unwrap();
        let got = beta_q(&cloud, &Vector::zeros(2), r, 1.0).unwrap();
        let ids = cloud.within(&Vector::zeros(2), r);
        let direct: f64 = ids.iter().map(|&i| step * cloud.point(i)[1].abs() / r).sum::<f64>() / r;
        assert!((got - direct).abs() <= 0.02 * direct, "{got} vs {direct}");
        assert!((direct - h * l / (r * r)).abs() < 0.01 * direct);
    }

    #[test]
    fn jones_sums_are_sums_of_squares() {
        let entries: Vec<ScaleEntry> = (0..5)
            .map(|k| ScaleEntry {
                k,
                beta_inf: 0.1 * k as f64,
                beta_q: Some(0.05 * k as f64),
                alpha_k: Some(0.01),
                eps_k: None,
                eps_prime_k: None,
            })
            .collect();
        let s = jones_sums(&entries, 3);
        assert_abs_diff_eq!(s.j_inf, 0.01 * (1.0 + 4.0 + 9.0 + 16.0), epsilon = 1e-15);
        assert_abs_diff_eq!(s.j_q.unwrap(), 0.0025 * (9.0 + 16.0), epsilon = 1e-15);
        assert_abs_diff_eq!(s.j_alpha, 5e-4, epsilon = 1e-15);
    }

    #[test]
    fn ahlfors_interior_and_boundary() {
        let cloud = segment(10000, 2.0);
        let inside = ahlfors_ratio(&cloud, &Vector::zeros(2), 0.1).unwrap();
        assert!((inside.ratio - 1.0).abs() < 2e-3 && !inside.boundary);
        let edge = ahlfors_ratio(&cloud, &vector(&[1.0, 0.0]), 0.1).unwrap();
        assert!((edge.ratio - 0.5).abs() < 2e-3 && edge.boundary);
        let check = ahlfors_check(&cloud, &vector(&[0.95, 0.0]), &[0.01, 0.2]).unwrap();
        assert_eq!(check.lower_ratio, check.upper_ratio);
    }
}
