//! Weighted point samples of a `d`-dimensional set in `R^n`.

use crate::error::{Error, Result};
use crate::geom::{check_dim, orthonormality_residual, Matrix, Vector, FRAME_TOLERANCE, MAX_AMBIENT_DIM};
use crate::index::KdTree;

/// Sample of a set `E ⊂ R^n`; weights approximate `H^d` mass per sample.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Vec<Vector>,
    weights: Option<Vec<f64>>,
    normals: Option<Vec<Vector>>,
    tangents: Option<Vec<Matrix>>,
    intrinsic_dim: usize,
    ambient_dim: usize,
    tree: KdTree,
}

impl PointCloud {
    /// Unweighted samples.
    pub fn new(points: Vec<Vector>, intrinsic_dim: usize) -> Result<Self> {
        Self::build(points, None, None, None, intrinsic_dim)
    }

    pub fn with_weights(points: Vec<Vector>, weights: Vec<f64>, intrinsic_dim: usize) -> Result<Self> {
        Self::build(points, Some(weights), None, None, intrinsic_dim)
    }

    /// Full constructor; every optional column must match the point count.
    pub fn build(
        points: Vec<Vector>,
        weights: Option<Vec<f64>>,
        normals: Option<Vec<Vector>>,
        tangents: Option<Vec<Matrix>>,
        intrinsic_dim: usize,
    ) -> Result<Self> {
        let ambient_dim = points.first().map_or(intrinsic_dim + 1, |p| p.len());
        if ambient_dim > MAX_AMBIENT_DIM || intrinsic_dim == 0 || intrinsic_dim >= ambient_dim {
            return Err(Error::UnsupportedDimension { ambient: ambient_dim, intrinsic: intrinsic_dim });
        }
        for p in &points {
            check_dim(ambient_dim, p.len())?;
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("point"));
            }
        }
        if let Some(w) = &weights {
            check_dim(points.len(), w.len())?;
            if let Some(bad) = w.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
                return Err(crate::error::invalid("weights", format!("weight {bad} is not positive")));
            }
        }
        if let Some(normals) = &normals {
            check_dim(points.len(), normals.len())?;
            for nrm in normals {
                check_dim(ambient_dim, nrm.len())?;
                if (nrm.norm() - 1.0).abs() > FRAME_TOLERANCE {
                    return Err(crate::error::invalid("normals", format!("normal of length {}", nrm.norm())));
                }
            }
        }
        if let Some(tangents) = &tangents {
            check_dim(points.len(), tangents.len())?;
            for t in tangents {
                check_dim(ambient_dim, t.nrows())?;
                check_dim(intrinsic_dim, t.ncols())?;
                let residual = orthonormality_residual(t);
                if !(residual <= FRAME_TOLERANCE) {
                    return Err(Error::NonOrthonormalFrame { residual });
                }
            }
        }
        let tree = KdTree::new(&points);
        Ok(Self { points, weights, normals, tangents, intrinsic_dim, ambient_dim, tree })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Vector {
        &self.points[i]
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weight of sample `i`, or 1 when the cloud is unweighted.
    pub fn weight_or_unit(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn normals(&self) -> Option<&[Vector]> {
        self.normals.as_deref()
    }

    pub fn tangents(&self) -> Option<&[Matrix]> {
        self.tangents.as_deref()
    }

    /// Samples in the closed ball `B(x, r)`, ascending.
    pub fn within(&self, x: &Vector, r: f64) -> Vec<usize> {
        self.tree.within(x.as_slice(), r)
    }

    pub fn for_each_within(&self, x: &Vector, r: f64, visit: impl FnMut(usize, f64)) {
        self.tree.for_each_within(x.as_slice(), r, visit)
    }

    /// Nearest sample and its distance.
    pub fn nearest(&self, x: &Vector) -> Option<(usize, f64)> {
        self.tree.nearest(x.as_slice())
    }

    /// Total weight of samples in `B(x, r)`.
    pub fn mass_within(&self, x: &Vector, r: f64) -> f64 {
        let ids = self.within(x, r);
        pairwise_sum(&ids.iter().map(|&i| self.weight_or_unit(i)).collect::<Vec<_>>())
    }

    /// Sub-cloud of the selected samples, preserving optional columns.
    pub fn subset(&self, ids: &[usize]) -> Result<PointCloud> {
        let pick = |i: &usize| self.points[*i].clone();
        PointCloud::build(
            ids.iter().map(pick).collect(),
            self.weights.as_ref().map(|w| ids.iter().map(|&i| w[i]).collect()),
            self.normals.as_ref().map(|n| ids.iter().map(|&i| n[i].clone()).collect()),
            self.tangents.as_ref().map(|t| ids.iter().map(|&i| t[i].clone()).collect()),
            self.intrinsic_dim,
        )
    }

    /// Applies `z ↦ map(z)` to every point; optional columns are dropped
    /// except weights, which are scaled by `weight_scale`.
    pub fn mapped(&self, map: impl Fn(&Vector) -> Vector, weight_scale: f64) -> Result<PointCloud> {
        PointCloud::build(
            self.points.iter().map(map).collect(),
            self.weights.as_ref().map(|w| w.iter().map(|v| v * weight_scale).collect()),
            None,
            None,
            self.intrinsic_dim,
        )
    }
}

/// Pairwise (tree) summation with a fixed topology.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}
