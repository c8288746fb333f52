//! Deterministic test sets with exact measure weights.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::Result;
use crate::geom::{orthonormalize, vector, Vector, MAX_AMBIENT_DIM};

/// Per-generation bump angles of a snowflake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum AngleSchedule {
    /// `α_k = alpha`.
    Constant { alpha: f64 },
    /// `α_k = alpha · ratio^k`.
    Geometric { alpha: f64, ratio: f64 },
    /// Explicit `α_0, …, α_{K−1}`.
    PerGeneration { alphas: Vec<f64> },
}

impl AngleSchedule {
    pub fn angle(&self, k: usize) -> f64 {
        match self {
            Self::Constant { alpha } => *alpha,
            Self::Geometric { alpha, ratio } => alpha * ratio.powi(k as i32),
            Self::PerGeneration { alphas } => alphas.get(k).copied().unwrap_or(0.0),
        }
    }
}

/// Edges whose midpoint has first coordinate in `[lower, upper]` use `alpha`
/// from generation `from_generation` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleBoost {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    #[serde(default)]
    pub from_generation: usize,
}

/// Largest bump angle accepted by [`snowflake`].
pub const MAX_SNOWFLAKE_ANGLE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnowflakeSpec {
    pub generations: usize,
    pub angles: AngleSchedule,
    #[serde(default)]
    pub boost: Option<AngleBoost>,
    #[serde(default = "default_start")]
    pub start: [f64; 2],
    #[serde(default = "default_end")]
    pub end: [f64; 2],
    /// Target spacing of the output samples along the final polyline.
    pub spacing: f64,
}

fn default_start() -> [f64; 2] {
    [0.0, 0.0]
}

fn default_end() -> [f64; 2] {
    [1.0, 0.0]
}

/// Snowflake polyline and its point sample.
#[derive(Debug, Clone)]
pub struct Snowflake {
    pub vertices: Vec<[f64; 2]>,
    /// `Σ α²` over the replacements that produced each final edge.
    pub edge_energy: Vec<f64>,
    pub cloud: PointCloud,
    /// `Σ α²` of the containing edge, per sample.
    pub angle_energy: Vec<f64>,
}

impl Snowflake {
    /// Exact polyline length.
    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt()).sum()
    }
}

/// Replaces every edge `a → b` with `a, a+e/4, a+e/2+(|e| tan α/4)ν, a+3e/4, b`
/// (`ν` the left unit normal) for each generation, then samples each final
/// edge at the midpoints of equal sub-segments with their exact lengths as weights.
pub fn snowflake(spec: &SnowflakeSpec) -> Result<Snowflake> {
    for k in 0..spec.generations {
        let a = spec.angles.angle(k);
        if !(0.0..=MAX_SNOWFLAKE_ANGLE).contains(&a) {
            return Err(crate::error::invalid("angles", format!("α_{k} = {a} outside [0, {MAX_SNOWFLAKE_ANGLE}]")));
        }
    }
    if let Some(b) = &spec.boost {
        if !(0.0..=MAX_SNOWFLAKE_ANGLE).contains(&b.alpha) || !(b.lower <= b.upper) {
            return Err(crate::error::invalid("boost", "angle out of range or empty zone"));
        }
    }
    if !(spec.spacing > 0.0 && spec.spacing.is_finite()) {
        return Err(crate::error::invalid("spacing", format!("{} is not positive", spec.spacing)));
    }
    if spec.start == spec.end {
        return Err(crate::error::invalid("endpoints", "start and end coincide"));
    }
    let mut vertices = vec![spec.start, spec.end];
    let mut energy = vec![0.0];
    for k in 0..spec.generations {
        let mut next = Vec::with_capacity(4 * vertices.len());
        let mut next_energy = Vec::with_capacity(4 * energy.len());
        next.push(vertices[0]);
        for (w, &e_parent) in vertices.windows(2).zip(&energy) {
            let (a, b) = (w[0], w[1]);
            let e = [b[0] - a[0], b[1] - a[1]];
            let mid_x = 0.5 * (a[0] + b[0]);
            let alpha = match &spec.boost {
                Some(z) if k >= z.from_generation && (z.lower..=z.upper).contains(&mid_x) => z.alpha,
                _ => spec.angles.angle(k),
            };
            // |e|·tanα/4 along the left normal (−e_y, e_x)/|e|.
            let lift = alpha.tan() / 4.0;
            let at = |t: f64| [a[0] + t * e[0], a[1] + t * e[1]];
            let peak = [a[0] + 0.5 * e[0] - lift * e[1], a[1] + 0.5 * e[1] + lift * e[0]];
            next.extend([at(0.25), peak, at(0.75), b]);
            next_energy.extend([e_parent + alpha * alpha; 4]);
        }
        vertices = next;
        energy = next_energy;
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut angle_energy = Vec::new();
    for (w, &en) in vertices.windows(2).zip(&energy) {
        let (a, b) = (w[0], w[1]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let m = (len / spec.spacing).ceil().max(1.0) as usize;
        for i in 0..m {
            let t = (i as f64 + 0.5) / m as f64;
            points.push(vector(&[a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]));
            weights.push(len / m as f64);
            angle_energy.push(en);
        }
    }
    Ok(Snowflake { vertices, edge_energy: energy, cloud: PointCloud::with_weights(points, weights, 1)?, angle_energy })
}

/// Closed-form length `|e|·(1/2 + 1/(2 cos α))^K` for a constant angle.
pub fn snowflake_length(chord: f64, alpha: f64, generations: usize) -> f64 {
    chord * (0.5 + 0.5 / alpha.cos()).powi(generations as i32)
}

/// Largest strip half-width accepted by [`mobius`].
pub const MAX_STRIP_WIDTH: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripSpec {
    /// Half-width `τ`.
    pub half_width: f64,
    pub angular_samples: usize,
    pub transverse_samples: usize,
}

/// Strip `(1 + s·c(φ))(cos φ, sin φ, 0) + s·e(φ)·(0, 0, 1)` over the unit
/// circle sampled at cell midpoints, with exact tangent planes, unit
/// normals and area weights.
fn strip(spec: &StripSpec, profile: impl Fn(f64) -> (f64, f64, f64, f64)) -> Result<PointCloud> {
    if !(spec.half_width > 0.0) || spec.angular_samples < 3 || spec.transverse_samples == 0 {
        return Err(crate::error::invalid("strip", "need τ > 0, ≥ 3 angular and ≥ 1 transverse samples"));
    }
    let (na, ns) = (spec.angular_samples, spec.transverse_samples);
    let tau = spec.half_width;
    let (dphi, ds) = (std::f64::consts::TAU / na as f64, 2.0 * tau / ns as f64);
    let cap = na * ns;
    let (mut points, mut weights, mut normals, mut tangents) =
        (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    for i in 0..na {
        let phi = (i as f64 + 0.5) * dphi;
        let (c, dc, e, de) = profile(phi);
        let radial = vector(&[phi.cos(), phi.sin(), 0.0]);
        let around = vector(&[-phi.sin(), phi.cos(), 0.0]);
        let up = vector(&[0.0, 0.0, 1.0]);
        for j in 0..ns {
            let s = -tau + (j as f64 + 0.5) * ds;
            points.push(&radial * (1.0 + s * c) + &up * (s * e));
            let d_s = &radial * c + &up * e;
            let d_phi = &radial * (s * dc) + &around * (1.0 + s * c) + &up * (s * de);
            let cross = d_phi.cross(&d_s);
            weights.push(cross.norm() * dphi * ds);
            normals.push(cross.normalize());
            tangents.push(orthonormalize(&[d_s, d_phi])?);
        }
    }
    PointCloud::build(points, Some(weights), Some(normals), Some(tangents), 2)
}

/// Möbius band: the transverse direction turns by half a turn around the circle.
pub fn mobius(spec: &StripSpec) -> Result<PointCloud> {
    if spec.half_width > MAX_STRIP_WIDTH {
        return Err(crate::error::invalid("half_width", format!("{} exceeds {MAX_STRIP_WIDTH}", spec.half_width)));
    }
    strip(spec, |phi| {
        let (c, e) = ((phi / 2.0).cos(), (phi / 2.0).sin());
        (c, -0.5 * e, e, 0.5 * c)
    })
}

/// Untwisted band whose transverse direction has constant tilt `γ` above
/// the horizontal plane.
pub fn annulus_strip(spec: &StripSpec, tilt: f64) -> Result<PointCloud> {
    let (c, e) = (tilt.cos(), tilt.sin());
    strip(spec, |_| (c, 0.0, e, 0.0))
}

/// One sine wave `amplitude · sin(2π x_1 / wavelength)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude: f64,
    pub wavelength: f64,
}

/// Graph `x_{d+1} = F(x_1)` over `[lower, upper]^d ⊂ R^d ⊂ R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub lower: f64,
    pub upper: f64,
    pub spacing: f64,
    #[serde(default)]
    pub waves: Vec<Wave>,
}

fn grid_cells(lower: f64, upper: f64, spacing: f64) -> Result<(usize, f64)> {
    if !(upper > lower && spacing > 0.0) {
        return Err(crate::error::invalid("grid", "need lower < upper and spacing > 0"));
    }
    let m = ((upper - lower) / spacing).round().max(1.0) as usize;
    Ok((m, (upper - lower) / m as f64))
}

/// Samples at cell midpoints with weights `√(1 + F'(x_1)²)·h^d`.
pub fn graph_set(spec: &GraphSpec) -> Result<PointCloud> {
    let (n, d) = (spec.ambient_dim, spec.intrinsic_dim);
    if d == 0 || d >= n || n > MAX_AMBIENT_DIM {
        return Err(crate::error::Error::UnsupportedDimension { ambient: n, intrinsic: d });
    }
    let (m, h) = grid_cells(spec.lower, spec.upper, spec.spacing)?;
    let total = m
        .checked_pow(d as u32)
        .filter(|t| *t <= 20_000_000)
        .ok_or_else(|| crate::error::invalid("spacing", "too many samples"))?;
    let tau = std::f64::consts::TAU;
    let (mut points, mut weights) = (Vec::with_capacity(total), Vec::with_capacity(total));
    for idx in 0..total {
        let mut rest = idx;
        let mut p = Vector::zeros(n);
        for a in 0..d {
            p[a] = spec.lower + ((rest % m) as f64 + 0.5) * h;
            rest /= m;
        }
        let (value, slope) = spec.waves.iter().fold((0.0, 0.0), |(v, s), w| {
            let arg = tau * p[0] / w.wavelength;
            (v + w.amplitude * arg.sin(), s + w.amplitude * tau / w.wavelength * arg.cos())
        });
        p[d] = value;
        points.push(p);
        weights.push((1.0 + slope * slope).sqrt() * h.powi(d as i32));
    }
    PointCloud::with_weights(points, weights, d)
}

/// Coordinate plane `R^d × {0}` sampled on a cell-midpoint grid.
pub fn flat_set(ambient_dim: usize, intrinsic_dim: usize, lower: f64, upper: f64, spacing: f64) -> Result<PointCloud> {
    graph_set(&GraphSpec { ambient_dim, intrinsic_dim, lower, upper, spacing, waves: Vec::new() })
}

/// Fibonacci points on the unit sphere of `R^3` with outward normals and
/// equal weights `4π/N`.
pub fn sphere(samples: usize) -> Result<PointCloud> {
    if samples < 4 {
        return Err(crate::error::invalid("samples", "need at least 4"));
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let points: Vec<Vector> = (0..samples)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / samples as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            vector(&[r * t.cos(), r * t.sin(), z])
        })
        .collect();
    let normals = points.iter().map(|p| p.normalize()).collect();
    let w = 4.0 * std::f64::consts::PI / samples as f64;
    PointCloud::build(points, Some(vec![w; samples]), Some(normals), None, 2)
}

/// Serialized description of any generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Snowflake(SnowflakeSpec),
    Mobius(StripSpec),
    Annulus {
        #[serde(flatten)]
        strip: StripSpec,
        tilt: f64,
    },
    Graph(GraphSpec),
    Flat {
        ambient_dim: usize,
        intrinsic_dim: usize,
        lower: f64,
        upper: f64,
        spacing: f64,
    },
    Sphere {
        samples: usize,
    },
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<PointCloud> {
        match self {
            Self::Snowflake(s) => Ok(snowflake(s)?.cloud),
            Self::Mobius(s) => mobius(s),
            Self::Annulus { strip, tilt } => annulus_strip(strip, *tilt),
            Self::Graph(g) => graph_set(g),
            Self::Flat { ambient_dim, intrinsic_dim, lower, upper, spacing } => {
                flat_set(*ambient_dim, *intrinsic_dim, *lower, *upper, *spacing)
            }
            Self::Sphere { samples } => sphere(*samples),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::grassmann_distance;

    fn flake(alpha: f64, generations: usize) -> Snowflake {
        snowflake(&SnowflakeSpec {
            generations,
            angles: AngleSchedule::Constant { alpha },
            boost: None,
            start: [0.0, 0.0],
            end: [1.0, 0.0],
            spacing: 1e-3,
        })
        .unwrap()
    }

    #[test]
    fn zero_angle_is_the_segment() {
        let s = flake(0.0, 3);
        assert!(s.cloud.points().iter().all(|p| p[1] == 0.0));
        assert!((crate::cloud::pairwise_sum(s.cloud.weights().unwrap()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_generation_vertices_and_length() {
        let a: f64 = 0.2;
        let s = flake(a, 1);
        let h = a.tan() / 4.0;
        assert_eq!(s.vertices, vec![[0.0, 0.0], [0.25, 0.0], [0.5, h], [0.75, 0.0], [1.0, 0.0]]);
        assert!((s.length() - (0.5 + 0.5 / a.cos())).abs() < 1e-15);
    }

    #[test]
    fn lengths_and_weights_match_closed_form() {
        for (alpha, k) in [(0.1, 4), (0.3, 5), (0.05, 6)] {
            let s = flake(alpha, k);
            let closed = snowflake_length(1.0, alpha, k);
            // Direct summation of the edge lengths.
            let summed: f64 =
                s.vertices.windows(2).map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt()).sum();
            assert!((summed - closed).abs() < 1e-12 * closed);
            let total = crate::cloud::pairwise_sum(s.cloud.weights().unwrap());
            assert!((total - closed).abs() < 1e-12 * closed);
            assert!(s.angle_energy.iter().all(|e| (e - k as f64 * alpha * alpha).abs() < 1e-15));
        }
    }

    #[test]
    fn boost_zone_raises_local_energy() {
        let s = snowflake(&SnowflakeSpec {
            generations: 3,
            angles: AngleSchedule::Constant { alpha: 0.05 },
            boost: Some(AngleBoost { lower: 0.3, upper: 0.7, alpha: 0.25, from_generation: 1 }),
            start: [0.0, 0.0],
            end: [1.0, 0.0],
            spacing: 1e-2,
        })
        .unwrap();
        let lo = s.angle_energy.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.angle_energy.iter().cloned().fold(0.0, f64::max);
        assert!((lo - 3.0 * 0.05f64.powi(2)).abs() < 1e-15);
        assert!((hi - (0.05f64.powi(2) + 2.0 * 0.25f64.powi(2))).abs() < 1e-15);
        let too_steep: SnowflakeSpec =
            serde_json::from_str(r#"{"generations":1,"angles":{"schedule":"constant","alpha":0.4},"spacing":0.1}"#)
                .unwrap();
        assert!(snowflake(&too_steep).is_err());
    }

    #[test]
    fn mobius_geometry() {
        let spec = StripSpec { half_width: 1e-3, angular_samples: 400, transverse_samples: 4 };
        let band = mobius(&spec).unwrap();
        let horizontal = crate::geom::Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let mut worst: f64 = 0.0;
        for (p, t) in band.points().iter().zip(band.tangents().unwrap()) {
            assert!(p[2].abs() <= 1e-3);
            assert!(((p[0].powi(2) + p[1].powi(2)).sqrt() - 1.0).abs() <= 1e-3 + 1e-15);
            worst = worst.max(grassmann_distance(t, &horizontal).unwrap());
        }
        // Near φ = π the band stands vertical.
        assert!(worst > 1.0 - 1e-4);
        let area: f64 = band.weights().unwrap().iter().sum();
        assert!((area - std::f64::consts::TAU * 2e-3).abs() < 1e-8);
        assert!(mobius(&StripSpec { half_width: 0.02, ..spec }).is_err());
    }

    #[test]
    fn annulus_tilt_is_uniform() {
        let band =
            annulus_strip(&StripSpec { half_width: 1e-3, angular_samples: 60, transverse_samples: 2 }, 0.1).unwrap();
        let horizontal = crate::geom::Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        for t in band.tangents().unwrap() {
            assert!((grassmann_distance(t, &horizontal).unwrap() - 0.1f64.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn graphs_and_planes() {
        let flat = flat_set(3, 2, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(flat.len(), 100);
        assert!(flat.points().iter().all(|p| p[2] == 0.0));
        let wave = graph_set(&GraphSpec {
            ambient_dim: 2,
            intrinsic_dim: 1,
            lower: 0.0,
            upper: 1.0,
            spacing: 1e-4,
            waves: vec![Wave { amplitude: 0.01, wavelength: 0.5 }],
        })
        .unwrap();
        assert!(wave.points().iter().all(|p| p[1].abs() <= 0.01));
        let s = sphere(1000).unwrap();
        assert!(s.points().iter().all(|p| (p.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn generator_specs_parse() {
        let spec: GeneratorSpec = serde_json::from_str(
            r#"{"kind":"annulus","half_width":0.001,"angular_samples":10,"transverse_samples":1,"tilt":0.0}"#,
        )
        .unwrap();
        assert_eq!(spec.generate().unwrap().len(), 10);
        let spec: GeneratorSpec = serde_json::from_str(r#"{"kind":"snowflake","generations":2,"angles":{"schedule":"geometric","alpha":0.1,"ratio":0.5},"spacing":0.01}"#).unwrap();
        assert!(spec.generate().unwrap().len() > 100);
        assert!(serde_json::from_str::<GeneratorSpec>(r#"{"kind":"torus"}"#).is_err());
    }
}
