//! Geometric primitives: points, affine planes, balls, boxes and the
//! normalized local Hausdorff distances between planes and sampled sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Ambient point or vector.
pub type Vector = DVector<f64>;
/// Dense matrix; frames are stored column-wise.
pub type Matrix = DMatrix<f64>;

/// Largest supported ambient dimension.
pub const MAX_AMBIENT_DIM: usize = 8;

/// Residual above which a frame is rejected as non-orthonormal.
pub const FRAME_TOLERANCE: f64 = 1e-10;

/// Orthonormality residual treated as exact.
const ROUNDED_FRAME: f64 = 1e-14;

pub fn vector(coords: &[f64]) -> Vector {
    Vector::from_column_slice(coords)
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Max-norm deviation of `uᵀu` from the identity.
pub fn orthonormality_residual(u: &Matrix) -> f64 {
    let gram = u.transpose() * u;
    let d = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Modified Gram–Schmidt with a second orthogonalization pass.
///
/// Returns an `n × d` matrix with orthonormal columns spanning the inputs.
pub fn orthonormalize(vectors: &[Vector]) -> Result<Matrix> {
    let n = vectors.first().map(|v| v.len()).ok_or(Error::RankDeficientFrame)?;
    let mut cols: Vec<Vector> = Vec::with_capacity(vectors.len());
    for v in vectors {
        check_dim(n, v.len())?;
        let original = v.norm();
        if !original.is_finite() {
            return Err(Error::NonFinite("frame"));
        }
        let mut w = v.clone();
        for _pass in 0..2 {
            for c in &cols {
                let proj = c.dot(&w);
                w.axpy(-proj, c, 1.0);
            }
        }
        let norm = w.norm();
        if original == 0.0 || norm <= FRAME_TOLERANCE * original {
            return Err(Error::RankDeficientFrame);
        }
        cols.push(w / norm);
    }
    let u = Matrix::from_columns(&cols);
    let residual = orthonormality_residual(&u);
    if residual > FRAME_TOLERANCE {
        return Err(Error::NonOrthonormalFrame { residual });
    }
    Ok(u)
}

/// Orthonormalizes the columns of `m`.
pub fn orthonormalize_columns(m: &Matrix) -> Result<Matrix> {
    let cols: Vec<Vector> = m.column_iter().map(|c| c.into_owned()).collect();
    orthonormalize(&cols)
}

/// Orthonormal basis of the orthogonal complement of the column space of `u`.
///
/// Standard basis vectors are added greedily by largest residual, so the
/// result is deterministic.
pub fn complement_frame(u: &Matrix) -> Matrix {
    let n = u.nrows();
    let mut basis: Vec<Vector> = u.column_iter().map(|c| c.into_owned()).collect();
    let mut extra: Vec<Vector> = Vec::new();
    while basis.len() < n {
        let mut best: Option<(f64, Vector)> = None;
        for i in 0..n {
            let mut w = Vector::zeros(n);
            w[i] = 1.0;
            for _pass in 0..2 {
                for c in &basis {
                    let proj = c.dot(&w);
                    w.axpy(-proj, c, 1.0);
                }
            }
            let norm = w.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-12) {
                best = Some((norm, w));
            }
        }
        let (norm, w) = best.expect("n > 0");
        let w = w / norm;
        basis.push(w.clone());
        extra.push(w);
    }
    if extra.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&extra)
    }
}

/// A `d`-dimensional affine plane: a base point plus an orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePlane {
    base: Vector,
    frame: Matrix,
}

impl AffinePlane {
    /// Plane through `base` spanned by `directions` (orthonormalized).
    pub fn new(base: Vector, directions: &[Vector]) -> Result<Self> {
        let frame = orthonormalize(directions)?;
        Self::from_orthonormal(base, frame)
    }

    /// Plane from a frame whose columns are already orthonormal to within
    /// [`FRAME_TOLERANCE`]. Frames orthonormal to rounding are kept bit for
    /// bit, so stored planes reload exactly; others are re-orthonormalized.
    pub fn from_frame(base: Vector, frame: Matrix) -> Result<Self> {
        let residual = orthonormality_residual(&frame);
        if !residual.is_finite() || residual > FRAME_TOLERANCE {
            return Err(Error::NonOrthonormalFrame { residual });
        }
        let frame = if residual <= ROUNDED_FRAME { frame } else { orthonormalize_columns(&frame)? };
        Self::from_orthonormal(base, frame)
    }

    fn from_orthonormal(base: Vector, frame: Matrix) -> Result<Self> {
        check_dim(base.len(), frame.nrows())?;
        let (n, d) = frame.shape();
        if n > MAX_AMBIENT_DIM || d == 0 || d >= n {
            return Err(Error::UnsupportedDimension { ambient: n, intrinsic: d });
        }
        if base.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("plane base"));
        }
        Ok(Self { base, frame })
    }

    /// The plane spanned by the first `d` coordinate axes of `R^n`.
    pub fn coordinate(n: usize, d: usize) -> Result<Self> {
        let dirs: Vec<Vector> = (0..d)
            .map(|i| {
                let mut e = Vector::zeros(n);
                if i < n {
                    e[i] = 1.0;
                }
                e
            })
            .collect();
        Self::new(Vector::zeros(n), &dirs)
    }

    pub fn base(&self) -> &Vector {
        &self.base
    }

    /// `n × d` frame with orthonormal columns.
    pub fn frame(&self) -> &Matrix {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.frame.nrows()
    }

    /// Same directions, through `point`.
    pub fn through(&self, point: &Vector) -> AffinePlane {
        AffinePlane { base: point.clone(), frame: self.frame.clone() }
    }

    /// Tangential coordinates `Uᵀ(z − base)`.
    pub fn coords(&self, z: &Vector) -> Vector {
        self.frame.tr_mul(&(z - &self.base))
    }

    /// The point `base + U t`.
    pub fn point_at(&self, t: &Vector) -> Vector {
        &self.base + &self.frame * t
    }

    /// Orthogonal projection onto the plane.
    pub fn project(&self, z: &Vector) -> Vector {
        let w = z - &self.base;
        let t = self.frame.tr_mul(&w);
        &self.base + &self.frame * t
    }

    /// Normal component of `z − base`; `project(z) + perp(z) = z`.
    pub fn perp(&self, z: &Vector) -> Vector {
        let w = z - &self.base;
        let t = self.frame.tr_mul(&w);
        w - &self.frame * t
    }

    pub fn dist(&self, z: &Vector) -> f64 {
        let n = self.base.len();
        let mut w = [0.0f64; MAX_AMBIENT_DIM];
        for i in 0..n {
            w[i] = z[i] - self.base[i];
        }
        let mut r = w;
        for col in self.frame.column_iter() {
            let t: f64 = (0..n).map(|i| col[i] * w[i]).sum();
            for i in 0..n {
                r[i] -= t * col[i];
            }
        }
        r[..n].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Orthogonal projector `U Uᵀ` onto the direction space.
    pub fn projector(&self) -> Matrix {
        &self.frame * self.frame.transpose()
    }

    /// Orthonormal basis of the normal space.
    pub fn normal_frame(&self) -> Matrix {
        complement_frame(&self.frame)
    }
}

/// Orthogonal projection onto `plane`.
pub fn project(plane: &AffinePlane, z: &Vector) -> Result<Vector> {
    check_dim(plane.ambient_dim(), z.len())?;
    Ok(plane.project(z))
}

/// Normal component of `z − base`.
pub fn perp_project(plane: &AffinePlane, z: &Vector) -> Result<Vector> {
    check_dim(plane.ambient_dim(), z.len())?;
    Ok(plane.perp(z))
}

/// Closed ball `B(center, radius)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vector,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(crate::error::invalid("radius", format!("{radius} is not positive")));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, z: &Vector) -> bool {
        (z - &self.center).norm() <= self.radius
    }

    pub fn dilate(&self, factor: f64) -> Ball {
        Ball { center: self.center.clone(), radius: self.radius * factor }
    }
}

/// The box `D(x, P, R)`: tangential and normal `R`-balls around the base of `plane`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub plane: AffinePlane,
    pub half_width: f64,
}

impl BoxRegion {
    pub fn new(plane: AffinePlane, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(crate::error::invalid("half_width", format!("{half_width} is not positive")));
        }
        Ok(Self { plane, half_width })
    }

    /// `(tangential coordinates, normal offset)` of `z` relative to the box.
    pub fn split(&self, z: &Vector) -> (Vector, Vector) {
        (self.plane.coords(z), self.plane.perp(z))
    }

    pub fn contains(&self, z: &Vector) -> bool {
        let (t, v) = self.split(z);
        t.norm() <= self.half_width && v.norm() <= self.half_width
    }
}

/// `max_{|t| ≤ rho} |a + M t|` for an `n × d` matrix `M`.
///
/// The squared norm is a convex quadratic, so the maximum sits on the sphere
/// `|t| = rho`; it is located through the eigendecomposition of `MᵀM` and the
/// secular equation `Σ c_i² / (λ − μ_i)² = rho²` with `λ ≥ μ_max`.
pub(crate) fn max_norm_on_ball(a: &Vector, m: &Matrix, rho: f64) -> f64 {
    if rho <= 0.0 {
        return a.norm();
    }
    let d = m.ncols();
    if d == 1 {
        let col = m.column(0);
        let plus = (a + col * rho).norm();
        let minus = (a - col * rho).norm();
        return plus.max(minus);
    }
    let eig = SymmetricEigen::new(m.transpose() * m);
    let mu = &eig.eigenvalues;
    let v = &eig.eigenvectors;
    let c = v.tr_mul(&m.tr_mul(a));
    let value_at = |coef: &Vector| (a + m * (v * coef)).norm();

    let mu_max = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-13 * mu_max.abs().max(1.0);
    let top: Vec<usize> = (0..d).filter(|&i| mu[i] >= mu_max - tol).collect();
    let c_norm = c.norm();

    let mut best = 0.0f64;
    for &i in &top {
        for sign in [1.0, -1.0] {
            let mut coef = Vector::zeros(d);
            coef[i] = sign * rho;
            best = best.max(value_at(&coef));
        }
    }
    if c_norm == 0.0 {
        return best;
    }

    // Hard case: the linear term vanishes on the top eigenspace.
    let c_top: f64 = top.iter().map(|&i| c[i] * c[i]).sum::<f64>().sqrt();
    if c_top <= 1e-12 * c_norm {
        let mut coef = Vector::zeros(d);
        let mut norm2 = 0.0;
        for i in 0..d {
            if !top.contains(&i) {
                coef[i] = c[i] / (mu_max - mu[i]);
                norm2 += coef[i] * coef[i];
            }
        }
        if norm2 <= rho * rho {
            let i = top[0];
            coef[i] = (rho * rho - norm2).sqrt() * if c[i] < 0.0 { -1.0 } else { 1.0 };
            best = best.max(value_at(&coef));
        }
    }

    let secular = |lambda: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            let gap = lambda - mu[i];
            if gap <= 0.0 {
                if c[i] != 0.0 {
                    return f64::INFINITY;
                }
                continue;
            }
            s += c[i] * c[i] / (gap * gap);
        }
        s
    };
    let mut lo = mu_max;
    let mut hi = mu_max + c_norm / rho;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if secular(mid) > rho * rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut coef = Vector::zeros(d);
    for i in 0..d {
        let gap = hi - mu[i];
        coef[i] = if gap > 0.0 { c[i] / gap } else { 0.0 };
    }
    let cn = coef.norm();
    if cn > 0.0 {
        coef *= rho / cn;
        best = best.max(value_at(&coef));
    }
    best
}

/// `sup { dist(y, to) : y ∈ from ∩ B(x, r) }`, unnormalized.
fn one_sided_plane_sup(from: &AffinePlane, to: &AffinePlane, x: &Vector, r: f64) -> Result<f64> {
    let c = from.project(x);
    let offset = (&c - x).norm();
    let h2 = r * r - offset * offset;
    if h2 < 0.0 {
        return Err(Error::DisjointBall { radius: r, distance: offset });
    }
    let a = to.perp(&c);
    let u_to = to.frame();
    let u_from = from.frame();
    let m = u_from - u_to * u_to.tr_mul(u_from);
    Ok(max_norm_on_ball(&a, &m, h2.sqrt()))
}

/// [`one_sided_plane_sup`] for lines, on the stack.
fn line_sup(from: &AffinePlane, to: &AffinePlane, x: &Vector, r: f64) -> Result<f64> {
    let n = x.len();
    let (b1, u) = (from.base(), from.frame().column(0));
    let (b2, v) = (to.base(), to.frame().column(0));
    let s: f64 = (0..n).map(|i| u[i] * (x[i] - b1[i])).sum();
    let mut c = [0.0f64; MAX_AMBIENT_DIM];
    for i in 0..n {
        c[i] = b1[i] + s * u[i];
    }
    let offset = (0..n).map(|i| (c[i] - x[i]).powi(2)).sum::<f64>().sqrt();
    let h2 = r * r - offset * offset;
    if h2 < 0.0 {
        return Err(Error::DisjointBall { radius: r, distance: offset });
    }
    let h = h2.sqrt();
    let tc: f64 = (0..n).map(|i| v[i] * (c[i] - b2[i])).sum();
    let tu: f64 = (0..n).map(|i| v[i] * u[i]).sum();
    let (mut plus, mut minus) = (0.0, 0.0);
    for i in 0..n {
        let a = c[i] - b2[i] - tc * v[i];
        let m = u[i] - tu * v[i];
        plus += (a + h * m).powi(2);
        minus += (a - h * m).powi(2);
    }
    Ok(plus.max(minus).sqrt())
}

/// Normalized local Hausdorff distance `d_{x,r}(P1, P2)` between two planes.
pub fn plane_local_distance(p1: &AffinePlane, p2: &AffinePlane, x: &Vector, r: f64) -> Result<f64> {
    check_dim(p1.ambient_dim(), p2.ambient_dim())?;
    check_dim(p1.ambient_dim(), x.len())?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(crate::error::invalid("r", format!("{r} is not positive")));
    }
    let (forward, backward) = if p1.dim() == 1 {
        (line_sup(p1, p2, x, r)?, line_sup(p2, p1, x, r)?)
    } else {
        (one_sided_plane_sup(p1, p2, x, r)?, one_sided_plane_sup(p2, p1, x, r)?)
    };
    Ok(forward.max(backward) / r)
}

/// Normalized local Hausdorff distance between two sampled sets.
///
/// One-sided sups run over samples inside the closed ball; nearest distances
/// are taken to the full other sample.
pub fn set_local_distance(a: &PointCloud, b: &PointCloud, x: &Vector, r: f64) -> Result<f64> {
    check_dim(a.ambient_dim(), b.ambient_dim())?;
    check_dim(a.ambient_dim(), x.len())?;
    let in_a = a.within(x, r);
    let in_b = b.within(x, r);
    if in_a.is_empty() || in_b.is_empty() {
        return Err(Error::EmptyBall { radius: r });
    }
    let sup = |ids: &[usize], from: &PointCloud, to: &PointCloud| -> f64 {
        ids.iter()
            .map(|&i| to.nearest(from.point(i)).map(|(_, dist)| dist).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    };
    let forward = sup(&in_a, a, b);
    let backward = sup(&in_b, b, a);
    Ok(forward.max(backward) / r)
}

/// Largest singular value of `(I − U2U2ᵀ)U1`.
fn one_sided_grassmann(u1: &Matrix, u2: &Matrix) -> f64 {
    if u1.ncols() == 1 {
        let (a, b) = (u1.column(0), u2.column(0));
        let t = a.dot(&b);
        return (0..a.len()).map(|i| (a[i] - t * b[i]).powi(2)).sum::<f64>().sqrt();
    }
    let m = u1 - u2 * u2.tr_mul(u1);
    let eig = SymmetricEigen::new(m.transpose() * &m);
    eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}

/// [`grassmann_distance`] for frames known to be orthonormal and of equal shape.
pub(crate) fn frame_sine(v1: &Matrix, v2: &Matrix) -> f64 {
    one_sided_grassmann(v1, v2).max(one_sided_grassmann(v2, v1)).min(1.0)
}

/// Distance between the subspaces spanned by two orthonormal frames:
/// the sine of the largest principal angle.
pub fn grassmann_distance(v1: &Matrix, v2: &Matrix) -> Result<f64> {
    check_dim(v1.nrows(), v2.nrows())?;
    check_dim(v1.ncols(), v2.ncols())?;
    for v in [v1, v2] {
        let residual = orthonormality_residual(v);
        if !residual.is_finite() || residual > FRAME_TOLERANCE {
            return Err(Error::NonOrthonormalFrame { residual });
        }
    }
    let d = one_sided_grassmann(v1, v2).max(one_sided_grassmann(v2, v1));
    Ok(d.clamp(0.0, 1.0))
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    // ω_d = π^{d/2} / Γ(d/2 + 1), by the two-step recursion ω_d = 2π/d · ω_{d−2}.
    let mut omega = if d.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
    while k <= d {
        omega *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    omega
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn x_axis() -> AffinePlane {
        AffinePlane::coordinate(2, 1).unwrap()
    }

    fn rotation2(angle: f64) -> Matrix {
        Matrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()])
    }

    fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vector {
        loop {
            let v = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let norm = v.norm();
            if norm > 0.1 && norm <= 1.0 {
                return v / norm;
            }
        }
    }

    fn random_plane(rng: &mut ChaCha8Rng, n: usize, d: usize, spread: f64) -> AffinePlane {
        let base = Vector::from_fn(n, |_, _| rng.random_range(-spread..spread));
        let dirs: Vec<Vector> = (0..d).map(|_| random_unit(rng, n)).collect();
        AffinePlane::new(base, &dirs).unwrap()
    }

    /// Sampled lower bound for `sup { dist(y, to) : y ∈ from ∩ B(x, r) }`.
    fn sampled_one_sided(from: &AffinePlane, to: &AffinePlane, x: &Vector, r: f64, rng: &mut ChaCha8Rng) -> f64 {
        let c = from.project(x);
        let rho = (r * r - (&c - x).norm_squared()).max(0.0).sqrt();
        let d = from.dim();
        let mut best = 0.0f64;
        for _ in 0..20000 {
            let dir = random_unit(rng, d);
            let y = &c + from.frame() * (dir * rho);
            best = best.max(to.dist(&y));
        }
        best
    }

    #[test]
    fn projections_on_axis() {
        let p = x_axis();
        let z = vector(&[3.0, 4.0]);
        assert_eq!(project(&p, &z).unwrap(), vector(&[3.0, 0.0]));
        assert_eq!(perp_project(&p, &z).unwrap(), vector(&[0.0, 4.0]));
        let on = vector(&[2.5, 0.0]);
        assert_eq!(project(&p, &on).unwrap(), on);
        assert_eq!(perp_project(&p, &on).unwrap(), Vector::zeros(2));
        assert!(project(&p, &vector(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn projection_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let plane = random_plane(&mut rng, 3, 1, 1.0);
            let z = Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let t0 = plane.coords(&z)[0];
            // Dense sample of the line around the true foot point.
            let oracle = (0..=200_000)
                .map(|i| {
                    let t = t0 - 1.0 + 2.0 * i as f64 / 200_000.0;
                    (plane.point_at(&vector(&[t])) - &z).norm()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((plane.dist(&z) - oracle).abs() < 1e-6);
            assert!((plane.perp(&z).norm() - oracle).abs() < 1e-6);
            let sum = plane.project(&z) + plane.perp(&z);
            assert_abs_diff_eq!((sum - &z).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn plane_distance_examples() {
        let p = x_axis();
        let x = Vector::zeros(2);
        assert_eq!(plane_local_distance(&p, &p, &x, 1.0).unwrap(), 0.0);
        let shifted = p.through(&vector(&[0.0, 0.05]));
        assert_abs_diff_eq!(plane_local_distance(&p, &shifted, &x, 1.0).unwrap(), 0.05, epsilon = 1e-15);
        let rotated = AffinePlane::new(x.clone(), &[rotation2(0.1) * vector(&[1.0, 0.0])]).unwrap();
        let exact = plane_local_distance(&p, &rotated, &x, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let oracle =
            sampled_one_sided(&p, &rotated, &x, 1.0, &mut rng).max(sampled_one_sided(&rotated, &p, &x, 1.0, &mut rng));
        assert!((exact - oracle).abs() < 1e-6, "{exact} vs {oracle}");
        assert_abs_diff_eq!(exact, 0.1f64.sin(), epsilon = 1e-14);
        let far = p.through(&vector(&[0.0, 2.0]));
        assert!(matches!(plane_local_distance(&p, &far, &x, 1.0), Err(Error::DisjointBall { .. })));
    }

    #[test]
    fn plane_distance_matches_sampling_in_higher_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, d) in [(3, 2), (4, 2), (5, 3), (4, 3)] {
            for _ in 0..10 {
                let p1 = random_plane(&mut rng, n, d, 0.3);
                let p2 = random_plane(&mut rng, n, d, 0.3);
                let x = Vector::from_fn(n, |_, _| rng.random_range(-0.2..0.2));
                let r = 1.5;
                let exact = match plane_local_distance(&p1, &p2, &x, r) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                let oracle =
                    sampled_one_sided(&p1, &p2, &x, r, &mut rng).max(sampled_one_sided(&p2, &p1, &x, r, &mut rng)) / r;
                assert!(exact >= oracle - 1e-12, "exact {exact} below sample {oracle}");
                assert!(exact - oracle < 2e-2 * exact.max(1e-3), "n={n} d={d}: {exact} vs {oracle}");
                let swapped = plane_local_distance(&p2, &p1, &x, r).unwrap();
                assert_eq!(exact, swapped);
            }
        }
    }

    #[test]
    fn plane_distance_hard_case() {
        // P1 = xy-plane through origin, P2 tilted about the x-axis and shifted along x:
        // the linear term vanishes on the top eigendirection.
        let p1 = AffinePlane::coordinate(3, 2).unwrap();
        let tilt = 0.2f64;
        let p2 = AffinePlane::new(
            vector(&[0.3, 0.0, 0.0]),
            &[vector(&[1.0, 0.0, 0.0]), vector(&[0.0, tilt.cos(), tilt.sin()])],
        )
        .unwrap();
        let x = Vector::zeros(3);
        let got = plane_local_distance(&p1, &p2, &x, 1.0).unwrap();
        assert_abs_diff_eq!(got, tilt.sin(), epsilon = 1e-13);
    }

    #[test]
    fn grassmann_examples() {
        let e1 = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = Matrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(grassmann_distance(&e1, &e1).unwrap(), 0.0);
        assert_abs_diff_eq!(grassmann_distance(&e1, &e2).unwrap(), 1.0, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let phi: f64 = rng.random_range(0.0..1.5);
            let l = Matrix::from_column_slice(2, 1, &[phi.cos(), phi.sin()]);
            let got = grassmann_distance(&e1, &l).unwrap();
            // Maximize dist(v, span e1) over sampled unit v in span l.
            let oracle = (0..1000)
                .map(|i| {
                    let s = -1.0 + 2.0 * i as f64 / 999.0;
                    let v = l.column(0) * s;
                    (v.clone() - e1.column(0) * e1.column(0).dot(&v)).norm()
                })
                .fold(0.0, f64::max);
            assert_abs_diff_eq!(got, phi.sin(), epsilon = 1e-14);
            assert!((got - oracle).abs() < 1e-12);
        }
        let bad = Matrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(grassmann_distance(&bad, &e1).is_err());
    }

    #[test]
    fn orthonormalization_and_complements() {
        let dirs = [vector(&[1.0, 1.0, 0.0]), vector(&[1.0, 0.0, 1.0])];
        let u = orthonormalize(&dirs).unwrap();
        assert!(orthonormality_residual(&u) < 1e-15);
        let nf = complement_frame(&u);
        assert_eq!(nf.shape(), (3, 1));
        assert!((u.transpose() * &nf).norm() < 1e-15);
        assert!(orthonormalize(&[vector(&[1.0, 2.0]), vector(&[2.0, 4.0])]).is_err());
        assert!(AffinePlane::from_frame(Vector::zeros(2), Matrix::from_column_slice(2, 1, &[1.0, 0.1])).is_err());
    }

    #[test]
    fn unit_ball_volumes() {
        assert_abs_diff_eq!(unit_ball_volume(1), 2.0);
        assert_abs_diff_eq!(unit_ball_volume(2), std::f64::consts::PI, epsilon = 1e-15);
        assert_abs_diff_eq!(unit_ball_volume(3), 4.0 / 3.0 * std::f64::consts::PI, epsilon = 1e-14);
    }

    #[test]
    fn boxes() {
        let b = BoxRegion::new(x_axis(), 1.0).unwrap();
        assert!(b.contains(&vector(&[0.9, -0.9])));
        assert!(!b.contains(&vector(&[1.1, 0.0])));
    }
}
