//! Multiscale nets, coherent collections of balls and planes (CCBPs), and
//! audits of their coherence conditions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::{beta_q_fit, fit_plane_minimax, l2_plane_in_ball};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{check_dim, plane_local_distance, AffinePlane, Vector};
use crate::index::UniformGrid;

/// Scale `r_k = 10^{−k}`.
pub fn scale(k: usize) -> f64 {
    10f64.powi(-(k as i32))
}

/// Centers of one level of a net, with the cloud sample each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct NetLevel {
    pub centers: Vec<Vector>,
    pub sources: Vec<Option<usize>>,
}

/// Centers `x_{j,k}` for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleNet {
    ambient_dim: usize,
    levels: Vec<NetLevel>,
}

impl MultiscaleNet {
    pub fn new(ambient_dim: usize, levels: Vec<NetLevel>) -> Result<Self> {
        for level in &levels {
            check_dim(level.centers.len(), level.sources.len())?;
            for c in &level.centers {
                check_dim(ambient_dim, c.len())?;
            }
        }
        Ok(Self { ambient_dim, levels })
    }

    /// Net given by raw center lists (no source samples).
    pub fn from_centers(ambient_dim: usize, levels: Vec<Vec<Vector>>) -> Result<Self> {
        Self::new(
            ambient_dim,
            levels.into_iter().map(|centers| NetLevel { sources: vec![None; centers.len()], centers }).collect(),
        )
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Number of levels, `K + 1`.
    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> &NetLevel {
        &self.levels[k]
    }

    pub fn centers(&self, k: usize) -> &[Vector] {
        &self.levels[k].centers
    }

    pub fn is_empty(&self) -> bool {
        self.levels.iter().all(|l| l.centers.is_empty())
    }
}

/// Indices of the cloud in lexicographic coordinate order, ties by index.
fn lexicographic_order(cloud: &PointCloud) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (cloud.point(a), cloud.point(b));
        pa.iter()
            .zip(pb.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy maximal `r_k`-separated nets of the kept points, `k = 0..=depth`.
///
/// A point is eligible at level `k` when `keep(point, l)` holds for every
/// `l ≤ k`, so the eligible sets are nested.
pub fn build_net(cloud: &PointCloud, depth: usize, keep: impl Fn(usize, usize) -> bool + Sync) -> MultiscaleNet {
    build_net_separated(cloud, depth, 1.0, keep)
}

/// As [`build_net`] with separation `factor·r_k` (`1 ≤ factor < 2`).
pub fn build_net_separated(
    cloud: &PointCloud,
    depth: usize,
    factor: f64,
    keep: impl Fn(usize, usize) -> bool + Sync,
) -> MultiscaleNet {
    let order = lexicographic_order(cloud);
    let mut eligible = vec![true; cloud.len()];
    let mut levels = Vec::with_capacity(depth + 1);
    for k in 0..=depth {
        for (i, e) in eligible.iter_mut().enumerate() {
            *e = *e && keep(i, k);
        }
        let sep = factor * scale(k);
        let mut grid = UniformGrid::new(cloud.ambient_dim(), sep);
        let mut sources = Vec::new();
        for &i in &order {
            if eligible[i] && !grid.any_within_open(cloud.point(i).as_slice(), sep) {
                grid.insert(cloud.point(i).clone());
                sources.push(Some(i));
            }
        }
        levels.push(NetLevel { centers: sources.iter().map(|s| cloud.point(s.unwrap()).clone()).collect(), sources });
    }
    MultiscaleNet { ambient_dim: cloud.ambient_dim(), levels }
}

/// Plane fitting rule for [`fit_ccbp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    L2,
    L1,
    Minimax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub mode: FitMode,
    pub eps: f64,
    /// Fitting ball radius factor for L2 and minimax planes.
    pub fit_radius_factor: f64,
    /// Ball radius factor of the β_1 plane in L1 mode.
    pub l1_radius_factor: f64,
    /// First level that may use an L1 plane.
    pub l1_min_level: usize,
}

impl FitConfig {
    pub fn new(mode: FitMode, eps: f64) -> Self {
        Self { mode, eps, fit_radius_factor: 110.0, l1_radius_factor: 120.0, l1_min_level: 2 }
    }
}

/// Nets, planes through the centers, the model plane `Σ_0` and the budget ε.
#[derive(Debug, Clone)]
pub struct Ccbp {
    net: MultiscaleNet,
    planes: Vec<Vec<AffinePlane>>,
    sigma0: AffinePlane,
    eps: f64,
    grids: Vec<UniformGrid>,
}

/// Per-level grid cell, in units of `r_k`.
const GRID_CELL: f64 = 10.0;

impl Ccbp {
    /// Validates shapes and that each plane passes through its center.
    pub fn new(net: MultiscaleNet, planes: Vec<Vec<AffinePlane>>, sigma0: AffinePlane, eps: f64) -> Result<Self> {
        check_dim(net.levels(), planes.len())?;
        check_dim(net.ambient_dim(), sigma0.ambient_dim())?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(crate::error::invalid("eps", format!("{eps} is not positive")));
        }
        let d = sigma0.dim();
        for (k, level) in planes.iter().enumerate() {
            check_dim(net.centers(k).len(), level.len())?;
            for (j, p) in level.iter().enumerate() {
                check_dim(d, p.dim())?;
                let c = &net.centers(k)[j];
                let offset = p.dist(c);
                if offset > 1e-12 * c.norm().max(1.0) {
                    return Err(crate::error::invalid(
                        "planes",
                        format!("plane ({j},{k}) misses its center by {offset:e}"),
                    ));
                }
            }
        }
        let grids = (0..net.levels())
            .map(|k| {
                let mut g = UniformGrid::new(net.ambient_dim(), GRID_CELL * scale(k));
                for c in net.centers(k) {
                    g.insert(c.clone());
                }
                g
            })
            .collect();
        Ok(Self { net, planes, sigma0, eps, grids })
    }

    /// CCBP whose planes are all parallel to `sigma0`.
    pub fn parallel_to(net: MultiscaleNet, sigma0: AffinePlane, eps: f64) -> Result<Self> {
        let planes = (0..net.levels()).map(|k| net.centers(k).iter().map(|c| sigma0.through(c)).collect()).collect();
        Self::new(net, planes, sigma0, eps)
    }

    pub fn net(&self) -> &MultiscaleNet {
        &self.net
    }

    pub fn levels(&self) -> usize {
        self.net.levels()
    }

    pub fn centers(&self, k: usize) -> &[Vector] {
        self.net.centers(k)
    }

    pub fn center(&self, k: usize, j: usize) -> &Vector {
        &self.net.centers(k)[j]
    }

    pub fn planes(&self, k: usize) -> &[AffinePlane] {
        &self.planes[k]
    }

    pub fn plane(&self, k: usize, j: usize) -> &AffinePlane {
        &self.planes[k][j]
    }

    pub fn sigma0(&self) -> &AffinePlane {
        &self.sigma0
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn ambient_dim(&self) -> usize {
        self.net.ambient_dim()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.sigma0.dim()
    }

    /// Same net and planes with another budget.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.net.clone(), self.planes.clone(), self.sigma0.clone(), eps)
    }

    /// Level-`k` centers with `|x_j − y| ≤ radius`, ascending.
    pub fn centers_within(&self, k: usize, y: &Vector, radius: f64) -> Vec<usize> {
        self.grids[k].within(y.as_slice(), radius)
    }

    /// Level-`k` centers with `|x_j − y| < radius`, ascending.
    pub fn centers_within_open(&self, k: usize, y: &Vector, radius: f64) -> Vec<usize> {
        self.grids[k].within_open(y.as_slice(), radius)
    }

    pub fn for_each_center_within(&self, k: usize, y: &Vector, radius: f64, visit: impl FnMut(usize, f64)) {
        self.grids[k].for_each_within(y.as_slice(), radius, visit)
    }

    /// `y ∈ V_k^λ`, the union of the open balls `B(x_{j,k}, λ r_k)`.
    pub fn in_union(&self, k: usize, y: &Vector, lambda: f64) -> bool {
        self.grids[k].any_within_open(y.as_slice(), lambda * scale(k))
    }
}

fn degenerate(level: usize, index: usize, samples: usize) -> Error {
    Error::DegenerateBall { level, index, samples }
}

/// Fits a plane through every net center.
///
/// L2 and minimax planes use `cloud ∩ B(x, fit_radius_factor·r_k)`. In L1 mode
/// (for a net built with separation `4/3·r_k`), a level `k ≥ l1_min_level`
/// center `x̃` whose `β_1(x̃, l1_radius_factor·r_k) ≤ ε` is replaced by the
/// sample of `B(x̃, r_k/3)` closest to the β_1 plane among those at distance
/// `≥ r_k` from the centers already chosen at that level, and the β_1 plane is
/// translated through it; other centers keep the L2 plane.
pub fn fit_ccbp(cloud: &PointCloud, net: &MultiscaleNet, sigma0: &AffinePlane, config: &FitConfig) -> Result<Ccbp> {
    check_dim(cloud.ambient_dim(), net.ambient_dim())?;
    check_dim(cloud.intrinsic_dim(), sigma0.dim())?;
    let d = cloud.intrinsic_dim();
    let mut levels = Vec::with_capacity(net.levels());
    let mut all_planes = Vec::with_capacity(net.levels());
    for k in 0..net.levels() {
        let rk = scale(k);
        let level = net.level(k);
        let radius = config.fit_radius_factor * rk;
        let counted = |x: &Vector, j: usize| -> Result<()> {
            let samples = cloud.within(x, radius).len();
            if samples < d + 1 {
                Err(degenerate(k, j, samples))
            } else {
                Ok(())
            }
        };
        let l2_plane = |x: &Vector, j: usize| -> Result<AffinePlane> {
            match l2_plane_in_ball(cloud, x, radius) {
                Ok((plane, _)) => Ok(plane.through(x)),
                Err(Error::RankDeficientSamples { samples, .. }) => Err(degenerate(k, j, samples)),
                Err(e) => Err(e),
            }
        };
        match config.mode {
            FitMode::L2 => {
                let planes =
                    level.centers.par_iter().enumerate().map(|(j, x)| l2_plane(x, j)).collect::<Result<Vec<_>>>()?;
                levels.push(level.clone());
                all_planes.push(planes);
            }
            FitMode::Minimax => {
                let planes = level
                    .centers
                    .par_iter()
                    .enumerate()
                    .map(|(j, x)| {
                        counted(x, j)?;
                        Ok(fit_plane_minimax(cloud, x, radius)?.plane)
                    })
                    .collect::<Result<Vec<_>>>()?;
                levels.push(level.clone());
                all_planes.push(planes);
            }
            FitMode::L1 => {
                let use_l1 = k >= config.l1_min_level;
                let candidates: Vec<Option<AffinePlane>> = level
                    .centers
                    .par_iter()
                    .map(|x| -> Result<Option<AffinePlane>> {
                        if !use_l1 {
                            return Ok(None);
                        }
                        match beta_q_fit(cloud, x, config.l1_radius_factor * rk, 1.0)? {
                            (b, Some(plane)) if b <= config.eps => Ok(Some(plane)),
                            _ => Ok(None),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut chosen = UniformGrid::new(cloud.ambient_dim(), rk);
                let mut centers = Vec::with_capacity(level.centers.len());
                let mut sources = Vec::with_capacity(level.centers.len());
                let mut planes = Vec::with_capacity(level.centers.len());
                for (j, x_tilde) in level.centers.iter().enumerate() {
                    match &candidates[j] {
                        Some(plane) => {
                            let mut pool: Vec<(f64, usize)> = cloud
                                .within(x_tilde, rk / 3.0)
                                .into_iter()
                                .map(|i| (plane.dist(cloud.point(i)), i))
                                .collect();
                            pool.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                            let pick = pool
                                .iter()
                                .map(|&(_, i)| i)
                                .find(|&i| !chosen.any_within_open(cloud.point(i).as_slice(), rk));
                            let (center, source) = match pick {
                                Some(i) => (cloud.point(i).clone(), Some(i)),
                                None => (x_tilde.clone(), level.sources[j]),
                            };
                            planes.push(plane.through(&center));
                            chosen.insert(center.clone());
                            centers.push(center);
                            sources.push(source);
                        }
                        None => {
                            planes.push(l2_plane(x_tilde, j)?);
                            chosen.insert(x_tilde.clone());
                            centers.push(x_tilde.clone());
                            sources.push(level.sources[j]);
                        }
                    }
                }
                levels.push(NetLevel { centers, sources });
                all_planes.push(planes);
            }
        }
    }
    let net = MultiscaleNet::new(net.ambient_dim(), levels)?;
    Ccbp::new(net, all_planes, sigma0.clone(), config.eps)
}

/// Location and value of the worst instance of a condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Worst {
    pub value: f64,
    /// Level of the first index.
    pub level: usize,
    /// Level of the second index when it differs from `level`.
    pub other_level: Option<usize>,
    pub indices: Vec<usize>,
    /// Largest principal angle between the two planes, in radians.
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub checked: usize,
    pub worst: Option<Worst>,
    /// Largest principal angle over all checked instances.
    pub worst_angle: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralIssue {
    pub kind: String,
    pub level: usize,
    pub indices: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub eps: f64,
    pub c_audit: f64,
    /// Values are compared against `c_audit·eps`.
    pub threshold: f64,
    pub conditions: Vec<ConditionReport>,
    pub structural: Vec<StructuralIssue>,
    pub pass: bool,
}

impl AuditReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.name == name)
    }

    fn finish(eps: f64, c_audit: f64, conditions: Vec<Accumulator>, structural: Vec<StructuralIssue>) -> Self {
        let threshold = c_audit * eps;
        let conditions: Vec<ConditionReport> = conditions
            .into_iter()
            .map(|a| ConditionReport {
                pass: a.worst.as_ref().is_none_or(|w| w.value <= threshold),
                name: a.name,
                checked: a.checked,
                worst_angle: a.worst_angle,
                worst: a.worst,
            })
            .collect();
        let pass = structural.is_empty() && conditions.iter().all(|c| c.pass);
        Self { eps, c_audit, threshold, conditions, structural, pass }
    }
}

/// Default multiple of ε that audits compare against.
pub const DEFAULT_C_AUDIT: f64 = 25.0;

#[derive(Debug, Clone)]
struct Accumulator {
    name: String,
    checked: usize,
    worst: Option<Worst>,
    worst_angle: f64,
}

impl Accumulator {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), checked: 0, worst: None, worst_angle: 0.0 }
    }

    /// Keeps the first maximum in iteration order.
    fn absorb(&mut self, other: Accumulator) {
        self.checked += other.checked;
        self.worst_angle = self.worst_angle.max(other.worst_angle);
        if let Some(w) = other.worst {
            if self.worst.as_ref().is_none_or(|b| w.value > b.value) {
                self.worst = Some(w);
            }
        }
    }

    fn record(&mut self, value: f64, angle: f64, level: usize, other_level: Option<usize>, indices: &[usize]) {
        self.checked += 1;
        self.worst_angle = self.worst_angle.max(angle);
        if self.worst.as_ref().is_none_or(|b| value > b.value) {
            self.worst = Some(Worst { value, level, other_level, indices: indices.to_vec(), angle });
        }
    }
}

fn principal_angle(p: &AffinePlane, q: &AffinePlane) -> f64 {
    crate::geom::frame_sine(p.frame(), q.frame()).asin()
}

/// Distance used by audits; a plane missing the ball counts as infinitely bad.
fn audit_distance(p: &AffinePlane, q: &AffinePlane, x: &Vector, r: f64) -> f64 {
    plane_local_distance(p, q, x, r).unwrap_or(f64::INFINITY)
}

fn reduce(parts: Vec<Accumulator>, name: &str) -> Accumulator {
    let mut acc = Accumulator::new(name);
    for p in parts {
        acc.absorb(p);
    }
    acc
}

/// Coherence audit of a CCBP: base proximity, same-level, base-link and
/// cross-level plane distances, plus structural checks of separation,
/// nesting and planes through centers.
pub fn audit_ccbp(ccbp: &Ccbp, c_audit: f64) -> AuditReport {
    let sigma0 = ccbp.sigma0();
    let levels = ccbp.levels();

    let mut base = Accumulator::new("base_proximity");
    let mut link = Accumulator::new("base_link");
    if levels > 0 {
        for (j, x) in ccbp.centers(0).iter().enumerate() {
            let dist = sigma0.dist(x);
            base.record(dist, 0.0, 0, None, &[j]);
            if dist <= 2.0 {
                let p = ccbp.plane(0, j);
                link.record(audit_distance(p, sigma0, x, 100.0), principal_angle(p, sigma0), 0, None, &[j]);
            }
        }
    }

    let mut same = Accumulator::new("same_level");
    let mut cross = Accumulator::new("cross_level");
    let mut structural = Vec::new();
    for k in 0..levels {
        let rk = scale(k);
        let centers = ccbp.centers(k);
        let parts: Vec<(Accumulator, Accumulator, Vec<StructuralIssue>)> = (0..centers.len())
            .into_par_iter()
            .map(|j| {
                let xj = &centers[j];
                let mut s = Accumulator::new("same_level");
                let mut c = Accumulator::new("cross_level");
                let mut issues = Vec::new();
                for i in ccbp.centers_within(k, xj, 100.0 * rk) {
                    if i == j {
                        continue;
                    }
                    let (pi, pj) = (ccbp.plane(k, i), ccbp.plane(k, j));
                    s.record(audit_distance(pi, pj, xj, 100.0 * rk), principal_angle(pi, pj), k, None, &[i, j]);
                    let gap = (&centers[i] - xj).norm();
                    if gap < rk && i > j {
                        issues.push(StructuralIssue {
                            kind: "separation".into(),
                            level: k,
                            indices: vec![j, i],
                            value: gap,
                        });
                    }
                }
                if k + 1 < levels {
                    for i in ccbp.centers_within(k + 1, xj, 2.0 * rk) {
                        let (pj, pi) = (ccbp.plane(k, j), ccbp.plane(k + 1, i));
                        c.record(
                            audit_distance(pj, pi, xj, 20.0 * rk),
                            principal_angle(pj, pi),
                            k,
                            Some(k + 1),
                            &[j, i],
                        );
                    }
                }
                if k >= 1 && !ccbp.in_union(k - 1, xj, 2.0) {
                    issues.push(StructuralIssue {
                        kind: "nesting".into(),
                        level: k,
                        indices: vec![j],
                        value: ccbp
                            .centers_within(k - 1, xj, 10.0 * scale(k - 1))
                            .iter()
                            .map(|&i| (ccbp.center(k - 1, i) - xj).norm() / scale(k - 1))
                            .fold(f64::INFINITY, f64::min),
                    });
                }
                let offset = ccbp.plane(k, j).dist(xj);
                if offset > 1e-12 * xj.norm().max(1.0) {
                    issues.push(StructuralIssue {
                        kind: "plane_offset".into(),
                        level: k,
                        indices: vec![j],
                        value: offset,
                    });
                }
                (s, c, issues)
            })
            .collect();
        let mut s_parts = Vec::with_capacity(parts.len());
        let mut c_parts = Vec::with_capacity(parts.len());
        for (s, c, issues) in parts {
            s_parts.push(s);
            c_parts.push(c);
            structural.extend(issues);
        }
        same.absorb(reduce(s_parts, "same_level"));
        cross.absorb(reduce(c_parts, "cross_level"));
    }
    AuditReport::finish(ccbp.eps(), c_audit, vec![base, same, link, cross], structural)
}

/// Plane family `P_k(x)` indexed `[k][point]`, one plane through each point.
pub type PlaneFamily = Vec<Vec<AffinePlane>>;

/// Audit of a plane family on sampled points: same-scale distances
/// `d_{x,100r_k}(P_k(x), P_k(x'))` for `|x − x'| ≤ 100r_k`, cross-scale
/// `d_{x,r_k}(P_k(x), P_{k+1}(x))`, and the base link
/// `d_{x,100}(P_0(x), Σ_0)` when `dist(x, Σ_0) ≤ 2`. Values are compared
/// against `eps` directly.
pub fn audit_family(points: &PointCloud, family: &PlaneFamily, sigma0: &AffinePlane, eps: f64) -> Result<AuditReport> {
    for level in family {
        check_dim(points.len(), level.len())?;
    }
    let mut same = Accumulator::new("same_scale");
    let mut cross = Accumulator::new("cross_scale");
    let mut link = Accumulator::new("base_link");
    for (k, level) in family.iter().enumerate() {
        let rk = scale(k);
        let parts: Vec<(Accumulator, Accumulator)> = (0..points.len())
            .into_par_iter()
            .map(|i| {
                let x = points.point(i);
                let mut s = Accumulator::new("same_scale");
                let mut c = Accumulator::new("cross_scale");
                points.for_each_within(x, 100.0 * rk, |other, _| {
                    if other != i {
                        let (p, q) = (&level[i], &level[other]);
                        s.record(audit_distance(p, q, x, 100.0 * rk), principal_angle(p, q), k, None, &[i, other]);
                    }
                });
                if let Some(next) = family.get(k + 1) {
                    let (p, q) = (&level[i], &next[i]);
                    c.record(audit_distance(p, q, x, rk), principal_angle(p, q), k, Some(k + 1), &[i]);
                }
                (s, c)
            })
            .collect();
        let (s_parts, c_parts): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
        same.absorb(reduce(s_parts, "same_scale"));
        cross.absorb(reduce(c_parts, "cross_scale"));
    }
    if let Some(level0) = family.first() {
        for (i, p) in level0.iter().enumerate() {
            let x = points.point(i);
            if sigma0.dist(x) <= 2.0 {
                link.record(audit_distance(p, sigma0, x, 100.0), principal_angle(p, sigma0), 0, None, &[i]);
            }
        }
    }
    Ok(AuditReport::finish(eps, 1.0, vec![same, cross, link], Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vector;

    fn line_cloud(n: usize) -> PointCloud {
        let pts = (0..=n).map(|i| vector(&[i as f64 / n as f64, 0.0])).collect();
        PointCloud::new(pts, 1).unwrap()
    }

    #[test]
    fn greedy_replay_on_a_line() {
        let cloud = line_cloud(1000);
        let net = build_net(&cloud, 3, |_, _| true);
        let level0: Vec<f64> = net.centers(0).iter().map(|c| c[0]).collect();
        assert_eq!(level0, vec![0.0, 1.0]);
        // Quadratic replay of the greedy rule in lexicographic order.
        for k in 1..=3 {
            let mut replay: Vec<f64> = Vec::new();
            for p in cloud.points() {
                if replay.iter().all(|c| (p[0] - c).abs() >= scale(k)) {
                    replay.push(p[0]);
                }
            }
            let got: Vec<f64> = net.centers(k).iter().map(|c| c[0]).collect();
            assert_eq!(got, replay);
        }
        assert!(build_net(&PointCloud::new(vec![], 1).unwrap(), 2, |_, _| true).is_empty());
        let only_top = build_net(&cloud, 3, |_, k| k == 0);
        assert_eq!(only_top.centers(0).len(), 2);
        assert!((1..=3).all(|k| only_top.centers(k).is_empty()));
    }

    #[test]
    fn nets_are_separated_nested_and_maximal() {
        let cloud = line_cloud(3000);
        let net = build_net(&cloud, 3, |i, k| k < 2 || i % 3 != 0);
        let sigma0 = AffinePlane::coordinate(2, 1).unwrap();
        let ccbp = Ccbp::parallel_to(net.clone(), sigma0, 0.1).unwrap();
        let report = audit_ccbp(&ccbp, DEFAULT_C_AUDIT);
        assert!(report.structural.is_empty(), "{:?}", report.structural);
        for k in 0..=3 {
            for (i, p) in cloud.points().iter().enumerate() {
                if k >= 2 && i % 3 == 0 {
                    continue;
                }
                assert!(net.centers(k).iter().any(|c| (c - p).norm() < scale(k)));
            }
        }
    }

    #[test]
    fn flat_ccbp_audits_clean_and_tilt_fails() {
        let cloud = line_cloud(2000);
        let sigma0 = AffinePlane::coordinate(2, 1).unwrap();
        let net = build_net(&cloud, 2, |_, _| true);
        let ccbp = fit_ccbp(&cloud, &net, &sigma0, &FitConfig::new(FitMode::L2, 0.01)).unwrap();
        let report = audit_ccbp(&ccbp, DEFAULT_C_AUDIT);
        assert!(report.pass);
        assert!(report.conditions.iter().all(|c| c.worst.as_ref().is_none_or(|w| w.value == 0.0)));

        let mut planes: Vec<Vec<AffinePlane>> = (0..3).map(|k| ccbp.planes(k).to_vec()).collect();
        let x = ccbp.center(1, 4).clone();
        let tilt = 0.3f64;
        planes[1][4] = AffinePlane::new(x.clone(), &[vector(&[tilt.cos(), tilt.sin()])]).unwrap();
        let tilted = Ccbp::new(ccbp.net().clone(), planes, sigma0, 0.01).unwrap();
        let report = audit_ccbp(&tilted, 1.0);
        let same = report.condition("same_level").unwrap();
        assert!(!same.pass && !report.pass);
        let worst = same.worst.as_ref().unwrap();
        assert_eq!(worst.level, 1);
        assert!(worst.indices.contains(&4));
        let direct = plane_local_distance(
            tilted.plane(1, worst.indices[0]),
            tilted.plane(1, worst.indices[1]),
            tilted.center(1, worst.indices[1]),
            10.0,
        )
        .unwrap();
        assert_eq!(direct, worst.value);
    }

    #[test]
    fn injected_far_center_breaks_nesting() {
        let cloud = line_cloud(200);
        let net = build_net(&cloud, 1, |_, _| true);
        let mut levels: Vec<Vec<Vector>> = (0..2).map(|k| net.centers(k).to_vec()).collect();
        levels[1].push(vector(&[0.5, 2.5]));
        let net = MultiscaleNet::from_centers(2, levels).unwrap();
        let ccbp = Ccbp::parallel_to(net, AffinePlane::coordinate(2, 1).unwrap(), 0.1).unwrap();
        let report = audit_ccbp(&ccbp, DEFAULT_C_AUDIT);
        assert!(!report.pass);
        assert!(report.structural.iter().any(|s| s.kind == "nesting" && s.level == 1));
    }

    #[test]
    fn degenerate_ball_is_named() {
        let mut pts: Vec<Vector> = (0..=400).map(|i| vector(&[i as f64 / 400.0, 0.0])).collect();
        pts.push(vector(&[0.5, 0.5]));
        let cloud = PointCloud::new(pts, 1).unwrap();
        let net = build_net(&cloud, 3, |_, _| true);
        let err = fit_ccbp(&cloud, &net, &AffinePlane::coordinate(2, 1).unwrap(), &FitConfig::new(FitMode::L2, 0.1))
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateBall { level: 3, samples: 1, .. }), "{err:?}");
    }

    #[test]
    fn audit_is_monotone_in_eps() {
        let cloud = line_cloud(500);
        let net = build_net(&cloud, 1, |_, _| true);
        let mut planes: Vec<Vec<AffinePlane>> = (0..2)
            .map(|k| net.centers(k).iter().map(|c| AffinePlane::coordinate(2, 1).unwrap().through(c)).collect())
            .collect();
        let c = net.centers(1)[3].clone();
        planes[1][3] = AffinePlane::new(c, &[vector(&[1.0, 0.05])]).unwrap();
        let base = Ccbp::new(net, planes, AffinePlane::coordinate(2, 1).unwrap(), 1e-4).unwrap();
        let mut passed = false;
        for eps in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let pass = audit_ccbp(&base.with_eps(eps).unwrap(), 1.0).pass;
            assert!(pass || !passed);
            passed |= pass;
        }
        assert!(passed);
    }
}
