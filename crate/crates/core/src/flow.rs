//! The maps `σ_k`, their compositions `f_k`, Jacobian chains, and numerical
//! checks of the output surfaces `Σ_k = f_k(Σ_0)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::{eps_profiles, fit_plane_minimax};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{check_dim, orthonormalize_columns, AffinePlane, Matrix, Vector};
use crate::index::KdTree;
use crate::nets::{scale, Ccbp};
use crate::unity::partition;

/// Position of a point relative to the balls of one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// In `V_k^8`.
    Core,
    /// In `V_k^{10} \ V_k^8`.
    Transition,
    /// Outside `V_k^{10}`; `σ_k` is the identity there.
    Outside,
}

/// Which derivative information to carry along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    None,
    /// `Df_k · U_0` for the direction frame `U_0` of `Σ_0`.
    Tangent,
    /// Full `n × n` Jacobians `Df_k`.
    Full,
}

/// States `z_k = f_k(z)` for `k = 0..=upto`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: Vector,
    pub states: Vec<Vector>,
    /// `|z_{k+1} − z_k|` for `k < upto`.
    pub displacements: Vec<f64>,
    /// Region of `z_k` with respect to the level-`k` balls, `k < upto`.
    pub regions: Vec<Region>,
    /// `Df_k(z)` (full mode) or `Df_k(z)·U_0` (tangent mode).
    pub jacobians: Option<Vec<Matrix>>,
    /// Bound `Σ_{l ≥ upto} 10 r_l` on the distance from `z_upto` to the limit.
    pub tail_bound: f64,
}

impl Trajectory {
    pub fn end(&self) -> &Vector {
        self.states.last().expect("nonempty trajectory")
    }

    /// Orthonormalized tangent frames `T_k` from a tangent-mode trajectory.
    pub fn tangent_frames(&self) -> Result<Vec<Matrix>> {
        let jac =
            self.jacobians.as_ref().ok_or_else(|| crate::error::invalid("trajectory", "no Jacobians recorded"))?;
        jac.iter().map(orthonormalize_columns).collect()
    }
}

/// Evaluator of `σ_k`, `f_k` and their derivatives for a CCBP.
#[derive(Debug, Clone)]
pub struct ParamMap {
    ccbp: Ccbp,
    depth: usize,
}

impl ParamMap {
    /// Map `f = f_K` with `K = depth` levels of `σ_k` (`k = 0..K−1`).
    pub fn new(ccbp: Ccbp, depth: usize) -> Result<Self> {
        if depth > ccbp.levels() {
            return Err(crate::error::invalid(
                "depth",
                format!("{depth} exceeds the {} available levels", ccbp.levels()),
            ));
        }
        Ok(Self { ccbp, depth })
    }

    /// Uses every level of the CCBP.
    pub fn full(ccbp: Ccbp) -> Self {
        let depth = ccbp.levels();
        Self { ccbp, depth }
    }

    pub fn ccbp(&self) -> &Ccbp {
        &self.ccbp
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn sigma0(&self) -> &AffinePlane {
        self.ccbp.sigma0()
    }

    pub fn region(&self, k: usize, y: &Vector) -> Region {
        if self.ccbp.in_union(k, y, 8.0) {
            Region::Core
        } else if self.ccbp.in_union(k, y, 10.0) {
            Region::Transition
        } else {
            Region::Outside
        }
    }

    /// `σ_k(y) = y + Σ_j θ_{j,k}(y)·(π_{j,k}(y) − y)`.
    pub fn sigma(&self, k: usize, y: &Vector) -> Vector {
        self.step(k, y, None).0
    }

    /// `Dσ_k(y) = I + Σ_j θ_j (Dπ_j − I) + Σ_j (π_j(y) − y) ⊗ ∇θ_j`.
    pub fn dsigma(&self, k: usize, y: &Vector) -> Matrix {
        let n = y.len();
        self.step(k, y, Some(&Matrix::identity(n, n))).1.expect("frame supplied")
    }

    /// `(σ_k(y), Dσ_k(y)·v)` for a matrix of column vectors `v`.
    pub fn step(&self, k: usize, y: &Vector, v: Option<&Matrix>) -> (Vector, Option<Matrix>) {
        let part = partition(&self.ccbp, k, y);
        let mut out = y.clone();
        let mut dv = v.cloned();
        for term in &part.terms {
            let plane = self.ccbp.plane(k, term.index);
            let offset = -plane.perp(y);
            out.axpy(term.theta, &offset, 1.0);
            if let (Some(dv), Some(v)) = (dv.as_mut(), v) {
                let u = plane.frame();
                let tangential = u * u.tr_mul(v);
                *dv += (tangential - v) * term.theta;
                dv.ger(1.0, &offset, &v.tr_mul(&term.grad), 1.0);
            }
        }
        (out, dv)
    }

    /// `f_k(z)` for `k = upto`.
    pub fn image_upto(&self, z: &Vector, upto: usize) -> Vector {
        let mut y = z.clone();
        for k in 0..upto.min(self.depth) {
            y = self.sigma(k, &y);
        }
        y
    }

    /// `f(z) = f_K(z)`.
    pub fn image(&self, z: &Vector) -> Vector {
        self.image_upto(z, self.depth)
    }

    /// Trajectory `z_0 = z`, `z_{k+1} = σ_k(z_k)` for `k < upto`.
    pub fn evaluate(&self, z: &Vector, upto: usize, mode: JacobianMode) -> Result<Trajectory> {
        check_dim(self.ccbp.ambient_dim(), z.len())?;
        if upto > self.depth {
            return Err(crate::error::invalid("upto", format!("{upto} exceeds depth {}", self.depth)));
        }
        let n = z.len();
        let mut jac = match mode {
            JacobianMode::None => None,
            JacobianMode::Tangent => Some(self.sigma0().frame().clone()),
            JacobianMode::Full => Some(Matrix::identity(n, n)),
        };
        let mut states = vec![z.clone()];
        let mut jacobians = jac.as_ref().map(|j| vec![j.clone()]);
        let mut displacements = Vec::with_capacity(upto);
        let mut regions = Vec::with_capacity(upto);
        for k in 0..upto {
            let y = states.last().expect("nonempty");
            regions.push(self.region(k, y));
            let (next, next_jac) = self.step(k, y, jac.as_ref());
            displacements.push((&next - y).norm());
            if let (Some(list), Some(j)) = (jacobians.as_mut(), next_jac.as_ref()) {
                list.push(j.clone());
            }
            jac = next_jac;
            states.push(next);
        }
        Ok(Trajectory {
            start: z.clone(),
            states,
            displacements,
            regions,
            jacobians,
            tail_bound: 10.0 * scale(upto) * 10.0 / 9.0,
        })
    }

    /// Tangent frames `T_k` of `Σ_k` at `f_k(x)` and the states, `k = 0..=K`.
    pub fn tangent_frames(&self, x: &Vector) -> Result<(Vec<Vector>, Vec<Matrix>)> {
        let traj = self.evaluate(x, self.depth, JacobianMode::Tangent)?;
        let frames = traj.tangent_frames()?;
        Ok((traj.states, frames))
    }

    /// Point of `Σ_0` whose level-`k` image is the foot point of `target` on
    /// `Σ_k`: Gauss–Newton on `|f_k(x) − target|²` over `x ∈ Σ_0`, stopped
    /// when the tangential residual is below `tol`.
    pub fn invert_on_base(&self, target: &Vector, k: usize, tol: f64) -> Result<Vector> {
        let sigma0 = self.sigma0();
        let mut t = sigma0.coords(target);
        let residual = |t: &Vector| -> Result<(Trajectory, Vector)> {
            let traj = self.evaluate(&sigma0.point_at(t), k, JacobianMode::Tangent)?;
            let r = traj.end() - target;
            Ok((traj, r))
        };
        let (mut traj, mut r) = residual(&t)?;
        for _ in 0..100 {
            let j = traj.jacobians.as_ref().expect("tangent mode").last().expect("nonempty").clone();
            let g = j.tr_mul(&r);
            if g.norm() <= tol * (j.norm().max(1.0)) {
                return Ok(sigma0.point_at(&t));
            }
            let jtj = j.tr_mul(&j);
            let delta =
                jtj.lu().solve(&g).ok_or_else(|| Error::Numerical("singular tangent Jacobian in inversion".into()))?;
            let mut step = 1.0;
            let mut stalled = false;
            loop {
                let candidate = &t - &delta * step;
                let (ct, cr) = residual(&candidate)?;
                if cr.norm() < r.norm() {
                    t = candidate;
                    traj = ct;
                    r = cr;
                    break;
                }
                if step < 1e-6 {
                    // No descent left above rounding.
                    stalled = true;
                    break;
                }
                step *= 0.5;
            }
            if stalled {
                break;
            }
        }
        let j = traj.jacobians.as_ref().expect("tangent mode").last().expect("nonempty").clone();
        if j.tr_mul(&r).norm() <= tol.sqrt() {
            Ok(sigma0.point_at(&t))
        } else {
            Err(Error::Numerical("base inversion did not converge".into()))
        }
    }
}

/// Regular grid on a window of `Σ_0`, in its tangential coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub pitch: f64,
}

impl BaseGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, pitch: f64) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(crate::error::invalid("grid", "lower and upper bounds disagree"));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(crate::error::invalid("pitch", format!("{pitch} is not positive")));
        }
        Ok(Self { lower, upper, pitch })
    }

    /// Node counts per axis.
    pub fn counts(&self) -> Vec<usize> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| ((u - l) / self.pitch + 1e-9).floor() as usize + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.counts().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tangential coordinates of node `index` (first axis fastest).
    pub fn coords(&self, index: usize) -> Vec<f64> {
        let counts = self.counts();
        let mut rest = index;
        counts
            .iter()
            .zip(&self.lower)
            .map(|(&c, l)| {
                let i = rest % c;
                rest /= c;
                l + i as f64 * self.pitch
            })
            .collect()
    }

    /// Ambient points of all nodes on `sigma0`.
    pub fn points(&self, sigma0: &AffinePlane) -> Vec<Vector> {
        (0..self.len()).map(|i| sigma0.point_at(&Vector::from_vec(self.coords(i)))).collect()
    }

    /// Index of the node nearest to tangential coordinates `t` (clamped).
    pub fn nearest(&self, t: &[f64]) -> usize {
        let counts = self.counts();
        let mut index = 0;
        let mut stride = 1;
        for a in 0..counts.len() {
            let i = ((t[a] - self.lower[a]) / self.pitch).round().clamp(0.0, (counts[a] - 1) as f64) as usize;
            index += i * stride;
            stride *= counts[a];
        }
        index
    }
}

/// `f_K` applied to a grid of `Σ_0`, as a point cloud tagged by grid node.
pub fn sample_surface(pm: &ParamMap, grid: &BaseGrid, upto: usize) -> Result<PointCloud> {
    let base = grid.points(pm.sigma0());
    let images: Vec<Vector> = base.par_iter().map(|x| pm.image_upto(x, upto)).collect();
    PointCloud::new(images, pm.sigma0().dim())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphCheck {
    pub level: usize,
    pub index: usize,
    pub samples: usize,
    /// Worst secant slope `|Δv|/|Δu|` over local pairs with `|Δu| ≥ h`.
    pub lipschitz_estimate: f64,
    /// Pairs with `|Δu| ≤ h/4` and `|Δv| > h/2`.
    pub collisions: usize,
    pub single_valued: bool,
}

/// Checks that `Σ_k ∩ D(x_{j,k}, P_{j,k}, 49r_k)` projects injectively onto
/// `P_{j,k}` at sample resolution `h = r_k / samples_per_r` and estimates the
/// Lipschitz constant of the implied graph.
pub fn graph_check(pm: &ParamMap, k: usize, j: usize, samples_per_r: f64) -> Result<GraphCheck> {
    let ccbp = pm.ccbp();
    if k > pm.depth() || k >= ccbp.levels() || j >= ccbp.centers(k).len() {
        return Err(crate::error::invalid("level", format!("no center ({j},{k})")));
    }
    let rk = scale(k);
    let h = rk / samples_per_r;
    let center = ccbp.center(k, j);
    let plane = ccbp.plane(k, j);
    let half = 49.0 * rk;
    let d = pm.sigma0().dim();
    let x0 = pm.invert_on_base(center, k, 1e-10 * rk)?;
    let t0 = pm.sigma0().coords(&x0);
    let reach = 1.6 * half;
    let grid = BaseGrid::new(t0.iter().map(|c| c - reach).collect(), t0.iter().map(|c| c + reach).collect(), h)?;
    if grid.len() > 4_000_000 {
        return Err(Error::InsufficientSamples(format!("{} grid nodes requested", grid.len())));
    }
    let images: Vec<Vector> = grid.points(pm.sigma0()).par_iter().map(|x| pm.image_upto(x, k)).collect();
    let inside: Vec<(Vector, Vector)> = images
        .iter()
        .filter_map(|y| {
            let u = plane.coords(y);
            let v = plane.perp(y);
            (u.norm() <= half && v.norm() <= half).then_some((u, v))
        })
        .collect();
    let needed = 2usize.pow(d as u32) * 4;
    if inside.len() < needed {
        return Err(Error::InsufficientSamples(format!(
            "{} samples in the box at level {k}, need {needed}",
            inside.len()
        )));
    }
    let us: Vec<Vector> = inside.iter().map(|(u, _)| u.clone()).collect();
    let tree = KdTree::new(&us);
    let results: Vec<(f64, usize)> = (0..inside.len())
        .into_par_iter()
        .map(|a| {
            let mut slope = 0.0f64;
            let mut collisions = 0;
            tree.for_each_within(us[a].as_slice(), 3.0 * h, |b, d2| {
                if b <= a {
                    return;
                }
                let du = d2.sqrt();
                let dv = (&inside[a].1 - &inside[b].1).norm();
                if du <= 0.25 * h && dv > 0.5 * h {
                    collisions += 1;
                }
                if du >= h {
                    slope = slope.max(dv / du);
                }
            });
            (slope, collisions)
        })
        .collect();
    let lipschitz_estimate = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let collisions = results.iter().map(|r| r.1).sum();
    Ok(GraphCheck {
        level: k,
        index: j,
        samples: inside.len(),
        lipschitz_estimate,
        collisions,
        single_valued: collisions == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub sup: f64,
    pub eps: f64,
    pub sup_over_eps: f64,
    pub checked: usize,
    /// Center and radius of the worst ball.
    pub worst_center: Vec<f64>,
    pub worst_radius: f64,
}

/// Two-sided `d_{x,r}(S, P)` between a sampled set and a plane; the plane
/// side is sampled on a grid of pitch `r/plane_steps` in its tangential disc.
pub fn sample_plane_distance(
    sample: &PointCloud,
    plane: &AffinePlane,
    x: &Vector,
    r: f64,
    plane_steps: usize,
) -> Result<f64> {
    let ids = sample.within(x, r);
    if ids.is_empty() {
        return Err(Error::EmptyBall { radius: r });
    }
    let one = ids.iter().map(|&i| plane.dist(sample.point(i))).fold(0.0, f64::max);
    let c = plane.project(x);
    let rho2 = r * r - (&c - x).norm_squared();
    if rho2 < 0.0 {
        return Err(Error::DisjointBall { radius: r, distance: plane.dist(x) });
    }
    let rho = rho2.sqrt();
    let d = plane.dim();
    let steps = plane_steps.max(1) as i64;
    let mut other = 0.0f64;
    let mut idx = vec![-steps; d];
    loop {
        let t = Vector::from_iterator(d, idx.iter().map(|&i| i as f64 * rho / steps as f64));
        if t.norm() <= rho {
            let y = &c + plane.frame() * t;
            if let Some((_, dist)) = sample.nearest(&y) {
                other = other.max(dist);
            }
        }
        let mut a = 0;
        loop {
            if a == d {
                return Ok(one.max(other) / r);
            }
            if idx[a] < steps {
                idx[a] += 1;
                break;
            }
            idx[a] = -steps;
            a += 1;
        }
    }
}

/// Worst `d_{z,t}(Σ, P(z,t))` over the selected sample centers and radii,
/// with `P(z,t)` the minimax plane through `z`.
pub fn flatness_check(sample: &PointCloud, centers: &[usize], radii: &[f64], eps: f64) -> Result<FlatnessReport> {
    let jobs: Vec<(usize, f64)> = centers.iter().flat_map(|&c| radii.iter().map(move |&r| (c, r))).collect();
    let values = jobs
        .par_iter()
        .map(|&(c, r)| {
            let z = sample.point(c);
            let plane = fit_plane_minimax(sample, z, r)?.plane;
            sample_plane_distance(sample, &plane, z, r, 40)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut sup, mut worst) = (0.0f64, 0usize);
    for (i, v) in values.iter().enumerate() {
        if *v > sup {
            sup = *v;
            worst = i;
        }
    }
    let (c, r) = jobs.get(worst).copied().unwrap_or((0, 0.0));
    Ok(FlatnessReport {
        sup,
        eps,
        sup_over_eps: sup / eps,
        checked: jobs.len(),
        worst_center: if jobs.is_empty() { Vec::new() } else { sample.point(c).iter().cloned().collect() },
        worst_radius: r,
    })
}

/// `Σ_{k < K} ε'_k(f_k(z))²`.
pub fn eps_prime_energy(pm: &ParamMap, z: &Vector) -> Result<f64> {
    let traj = pm.evaluate(z, pm.depth(), JacobianMode::None)?;
    Ok((0..pm.depth()).map(|k| eps_profiles(pm.ccbp(), &traj.states[k], k).eps_prime_k.powi(2)).sum())
}

/// Pair sampler on a window of `Σ_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSampling {
    pub count: usize,
    pub min_separation: f64,
    pub max_separation: f64,
    pub seed: u64,
    /// Tangential window on `Σ_0`.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Pairs `(x, y)` in the window with `|x − y|` log-uniform in
/// `[min_separation, max_separation]`.
pub fn sample_base_pairs(sigma0: &AffinePlane, sampling: &PairSampling) -> Result<Vec<(Vector, Vector)>> {
    let d = sigma0.dim();
    check_dim(d, sampling.lower.len())?;
    check_dim(d, sampling.upper.len())?;
    if !(sampling.min_separation > 0.0 && sampling.min_separation <= sampling.max_separation) {
        return Err(crate::error::invalid("separation", "need 0 < min ≤ max"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let (lo, hi) = (sampling.min_separation.ln(), sampling.max_separation.ln());
    let mut pairs = Vec::with_capacity(sampling.count);
    let mut attempts = 0usize;
    while pairs.len() < sampling.count {
        attempts += 1;
        if attempts > 1000 * sampling.count.max(1) {
            return Err(crate::error::invalid("window", "too small for the requested separations"));
        }
        let s = (lo + (hi - lo) * rng.random::<f64>()).exp();
        let dir = loop {
            let v = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let nrm = v.norm();
            if nrm > 1e-3 && nrm <= 1.0 {
                break v / nrm;
            }
        };
        let a = Vector::from_fn(d, |i, _| rng.random_range(sampling.lower[i]..=sampling.upper[i]));
        let b = &a + dir * s;
        if (0..d).all(|i| b[i] >= sampling.lower[i] && b[i] <= sampling.upper[i]) {
            pairs.push((sigma0.point_at(&a), sigma0.point_at(&b)));
        }
    }
    Ok(pairs)
}

/// Power law `C·s^exponent` fitted to an envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub exponent: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub pairs: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `ratio_max / ratio_min`.
    pub spread: f64,
    /// `max(ratio_max, 1/ratio_min)`.
    pub bilipschitz: f64,
    /// Fit through the per-bin maxima of `|Δf|`: `|Δf| ≤ C s^a`.
    pub holder_upper: PowerLaw,
    /// Fit through the per-bin minima of `|Δf|`: `|Δf| ≥ C s^a`.
    pub holder_lower: PowerLaw,
    /// Least squares over all pairs.
    pub holder_fit: PowerLaw,
    pub bins: Vec<DistortionBin>,
}

fn regress(points: &[(f64, f64)]) -> PowerLaw {
    let m = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) =
        points.iter().fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx) * (p.0 - mx)));
    let slope = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    PowerLaw { exponent: slope, constant: (my - slope * mx).exp() }
}

/// Number of logarithmic separation bins in distortion reports.
pub const DISTORTION_BINS: usize = 8;

/// Ratio statistics and Hölder envelopes of `map` on the given pairs.
pub fn distortion(map: impl Fn(&Vector) -> Vector + Sync, pairs: &[(Vector, Vector)]) -> Result<DistortionReport> {
    if pairs.len() < 2 {
        return Err(crate::error::invalid("pairs", "need at least two pairs"));
    }
    let measured: Vec<(f64, f64)> = pairs.par_iter().map(|(a, b)| ((a - b).norm(), (map(a) - map(b)).norm())).collect();
    if measured.iter().any(|(s, _)| !(*s > 0.0)) {
        return Err(crate::error::invalid("pairs", "zero separation"));
    }
    if let Some((_, image)) = measured.iter().find(|(_, i)| !(*i > 0.0 && i.is_finite())) {
        return Err(Error::Numerical(format!("pair image separation {image}")));
    }
    let ratios: Vec<f64> = measured.iter().map(|(s, i)| i / s).collect();
    let ratio_min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio_max = ratios.iter().cloned().fold(0.0, f64::max);
    let smin = measured.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
    let smax = measured.iter().map(|m| m.0).fold(0.0, f64::max);
    if !(smax > smin) {
        return Err(crate::error::invalid("pairs", "all separations coincide"));
    }
    let (lmin, lmax) = (smin.ln(), smax.ln());
    let width = (lmax - lmin) / DISTORTION_BINS as f64;
    let mut bins: Vec<(usize, f64, f64, f64, f64)> = vec![(0, f64::INFINITY, 0.0, 0.0, 0.0); DISTORTION_BINS];
    let mut low_points = [(0.0, f64::INFINITY); DISTORTION_BINS];
    let mut high_points = [(0.0, f64::NEG_INFINITY); DISTORTION_BINS];
    for ((s, img), ratio) in measured.iter().zip(&ratios) {
        let b = (((s.ln() - lmin) / width) as usize).min(DISTORTION_BINS - 1);
        let bin = &mut bins[b];
        bin.0 += 1;
        bin.1 = bin.1.min(*ratio);
        bin.2 = bin.2.max(*ratio);
        let (ls, li) = (s.ln(), img.ln());
        if li - ls < low_points[b].1 - low_points[b].0 || low_points[b].1 == f64::INFINITY {
            low_points[b] = (ls, li);
        }
        if li - ls > high_points[b].1 - high_points[b].0 || high_points[b].1 == f64::NEG_INFINITY {
            high_points[b] = (ls, li);
        }
    }
    let occupied: Vec<usize> = (0..DISTORTION_BINS).filter(|&b| bins[b].0 > 0).collect();
    if occupied.len() < 2 {
        return Err(crate::error::invalid("pairs", "separations occupy a single bin"));
    }
    let highs: Vec<(f64, f64)> = occupied.iter().map(|&b| high_points[b]).collect();
    let lows: Vec<(f64, f64)> = occupied.iter().map(|&b| low_points[b]).collect();
    let all: Vec<(f64, f64)> = measured.iter().map(|(s, i)| (s.ln(), i.ln())).collect();
    Ok(DistortionReport {
        pairs: pairs.len(),
        ratio_min,
        ratio_max,
        spread: ratio_max / ratio_min,
        bilipschitz: ratio_max.max(1.0 / ratio_min),
        holder_upper: regress(&highs),
        holder_lower: regress(&lows),
        holder_fit: regress(&all),
        bins: (0..DISTORTION_BINS)
            .map(|b| DistortionBin {
                lower: (lmin + b as f64 * width).exp(),
                upper: (lmin + (b + 1) as f64 * width).exp(),
                count: bins[b].0,
                ratio_min: if bins[b].0 > 0 { bins[b].1 } else { 0.0 },
                ratio_max: bins[b].2,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vector;
    use crate::nets::{build_net, fit_ccbp, FitConfig, FitMode};

    fn flat_map() -> ParamMap {
        let pts: Vec<Vector> = (0..=2000).map(|i| vector(&[-0.5 + 2.0 * i as f64 / 2000.0, 0.0])).collect();
        let cloud = PointCloud::new(pts, 1).unwrap();
        let net = build_net(&cloud, 3, |_, _| true);
        let sigma0 = AffinePlane::coordinate(2, 1).unwrap();
        let ccbp = fit_ccbp(&cloud, &net, &sigma0, &FitConfig::new(FitMode::L2, 0.1)).unwrap();
        ParamMap::full(ccbp)
    }

    #[test]
    fn flat_configuration_is_identity_on_its_plane() {
        let pm = flat_map();
        for x in [0.0, 0.3217, 1.2] {
            let z = vector(&[x, 0.0]);
            assert_eq!(pm.image(&z), z);
        }
        let far = vector(&[40.0, 30.0]);
        assert_eq!(pm.sigma(0, &far), far);
        assert_eq!(pm.dsigma(0, &far), Matrix::identity(2, 2));
        assert_eq!(pm.region(0, &far), Region::Outside);
        // Where the bumps sum past 1 and all planes agree, σ_k is the projection.
        let y = vector(&[0.5, 0.0005]);
        assert!((pm.sigma(3, &y) - vector(&[0.5, 0.0])).norm() < 1e-15);
        let dp = pm.dsigma(3, &y);
        assert!((dp - Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-10);
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = BaseGrid::new(vec![0.0, -1.0], vec![1.0, 1.0], 0.25).unwrap();
        assert_eq!(g.counts(), vec![5, 9]);
        for i in 0..g.len() {
            assert_eq!(g.nearest(&g.coords(i)), i);
        }
    }

    #[test]
    fn distortion_of_identity_and_scaling() {
        let sigma0 = AffinePlane::coordinate(2, 1).unwrap();
        let sampling = PairSampling {
            count: 500,
            min_separation: 1e-4,
            max_separation: 1.0,
            seed: 3,
            lower: vec![0.0],
            upper: vec![1.0],
        };
        let pairs = sample_base_pairs(&sigma0, &sampling).unwrap();
        let id = distortion(|z| z.clone(), &pairs).unwrap();
        assert!((id.spread - 1.0).abs() < 1e-12 && (id.holder_upper.exponent - 1.0).abs() < 1e-9);
        let twice = distortion(|z| z * 2.0, &pairs).unwrap();
        assert!((twice.bilipschitz - 2.0).abs() < 1e-12);
        assert!(distortion(|z| z.clone(), &pairs[..1]).is_err());
    }

    #[test]
    fn base_inversion_recovers_preimages() {
        let pm = flat_map();
        let x = pm.invert_on_base(&vector(&[0.25, 0.003]), 3, 1e-12).unwrap();
        assert!((x - vector(&[0.25, 0.0])).norm() < 1e-10);
    }
}
