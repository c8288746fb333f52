//! Python bindings: point clouds, planes, β numbers, parameterization maps and audits.
//!
//! Vectors cross the boundary as lists of floats, matrices as lists of rows,
//! and reports as dictionaries.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use reifenberg::beta;
use reifenberg::extend::{self, Isometries};
use reifenberg::flow::ParamMap as CoreMap;
use reifenberg::io::{self, canonical_json};
use reifenberg::nets::{self, FitConfig, FitMode, DEFAULT_C_AUDIT};
use reifenberg::sets::{self, AngleSchedule, GeneratorSpec, SnowflakeSpec};
use reifenberg::{AffinePlane, Matrix, Vector};
use serde_json::Value;

create_exception!(pyreifenberg, ReifenbergError, PyValueError);

fn err(e: reifenberg::Error) -> PyErr {
    ReifenbergError::new_err(e.to_string())
}

fn vector(v: Vec<f64>) -> Vector {
    Vector::from_vec(v)
}

fn list(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(ReifenbergError::new_err("rows differ in length"));
    }
    Ok(Matrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

fn to_python<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (canonical_json(value),))
}

fn parse_document<'a>(text: &str, kind: &str, doc: &'a mut Value) -> PyResult<&'a Value> {
    *doc = io::parse(text).map_err(err)?;
    io::open_document(doc, kind).map_err(err)
}

fn document(kind: &str, data: Value) -> String {
    canonical_json(&io::document(kind, &serde_json::json!({"source": "python"}), data))
}

/// Sampled set with optional measure weights.
#[pyclass(module = "pyreifenberg", frozen)]
struct PointCloud {
    inner: reifenberg::PointCloud,
}

#[pymethods]
impl PointCloud {
    #[new]
    #[pyo3(signature = (points, intrinsic_dim, weights=None))]
    fn new(points: Vec<Vec<f64>>, intrinsic_dim: usize, weights: Option<Vec<f64>>) -> PyResult<Self> {
        let points = points.into_iter().map(vector).collect();
        let inner = reifenberg::PointCloud::build(points, weights, None, None, intrinsic_dim).map_err(err)?;
        Ok(Self { inner })
    }

    /// Cloud from a generator spec given as JSON text, e.g. `{"kind": "sphere", "samples": 100}`.
    #[staticmethod]
    fn generate(spec: &str) -> PyResult<Self> {
        let value = io::parse(spec).map_err(err)?;
        let spec: GeneratorSpec = io::from_value(&value, "$").map_err(err)?;
        Ok(Self { inner: spec.generate().map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let mut doc = Value::Null;
        let data = parse_document(text, "point_cloud", &mut doc)?;
        Ok(Self { inner: io::cloud_from_json(data).map_err(err)? })
    }

    fn to_json(&self) -> String {
        document("point_cloud", io::cloud_to_json(&self.inner))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    #[getter]
    fn intrinsic_dim(&self) -> usize {
        self.inner.intrinsic_dim()
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points().iter().map(list).collect()
    }

    fn weights(&self) -> Option<Vec<f64>> {
        self.inner.weights().map(<[f64]>::to_vec)
    }

    /// Index and distance of the sample nearest to `x`.
    fn nearest(&self, x: Vec<f64>) -> Option<(usize, f64)> {
        self.inner.nearest(&vector(x))
    }

    fn __repr__(&self) -> String {
        format!(
            "PointCloud(len={}, ambient_dim={}, intrinsic_dim={})",
            self.inner.len(),
            self.inner.ambient_dim(),
            self.inner.intrinsic_dim()
        )
    }
}

/// Affine d-plane with an orthonormal frame.
#[pyclass(module = "pyreifenberg", frozen)]
struct Plane {
    inner: AffinePlane,
}

#[pymethods]
impl Plane {
    /// Plane through `base` spanned by `directions`, orthonormalized.
    #[new]
    fn new(base: Vec<f64>, directions: Vec<Vec<f64>>) -> PyResult<Self> {
        let directions: Vec<Vector> = directions.into_iter().map(vector).collect();
        Ok(Self { inner: AffinePlane::new(vector(base), &directions).map_err(err)? })
    }

    /// Span of the first `d` coordinate axes of `R^n`.
    #[staticmethod]
    fn coordinate(n: usize, d: usize) -> PyResult<Self> {
        Ok(Self { inner: AffinePlane::coordinate(n, d).map_err(err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn base(&self) -> Vec<f64> {
        list(self.inner.base())
    }

    /// Frame as an `n × d` list of rows.
    #[getter]
    fn frame(&self) -> Vec<Vec<f64>> {
        rows(self.inner.frame())
    }

    fn project(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&reifenberg::geom::project(&self.inner, &vector(z)).map_err(err)?))
    }

    fn dist(&self, z: Vec<f64>) -> PyResult<f64> {
        let z = vector(z);
        reifenberg::geom::project(&self.inner, &z).map_err(err)?;
        Ok(self.inner.dist(&z))
    }
}

fn fit_mode(name: &str) -> PyResult<FitMode> {
    match name {
        "l2" => Ok(FitMode::L2),
        "l1" => Ok(FitMode::L1),
        "minimax" => Ok(FitMode::Minimax),
        other => Err(ReifenbergError::new_err(format!("unknown fit mode {other:?}"))),
    }
}

/// Parameterization `f = f_K` built from a coherent family of balls and planes.
#[pyclass(module = "pyreifenberg", frozen)]
struct ParamMap {
    inner: CoreMap,
    c_audit: f64,
}

impl ParamMap {
    fn point(&self, z: Vec<f64>) -> PyResult<Vector> {
        let n = self.inner.ccbp().ambient_dim();
        if z.len() != n {
            return Err(err(reifenberg::Error::DimensionMismatch { expected: n, found: z.len() }));
        }
        Ok(vector(z))
    }

    fn level(&self, k: usize) -> PyResult<usize> {
        if k >= self.inner.depth() {
            return Err(ReifenbergError::new_err(format!("level {k} beyond depth {}", self.inner.depth())));
        }
        Ok(k)
    }
}

#[pymethods]
impl ParamMap {
    /// Nets to `depth`, planes fitted in `mode` with budget `eps`.
    #[staticmethod]
    #[pyo3(signature = (cloud, depth, sigma0=None, mode="l2", eps=0.1, c_audit=DEFAULT_C_AUDIT))]
    fn build(
        py: Python<'_>,
        cloud: &PointCloud,
        depth: usize,
        sigma0: Option<&Plane>,
        mode: &str,
        eps: f64,
        c_audit: f64,
    ) -> PyResult<Self> {
        let cloud = &cloud.inner;
        let sigma0 = match sigma0 {
            Some(p) => p.inner.clone(),
            None => AffinePlane::coordinate(cloud.ambient_dim(), cloud.intrinsic_dim()).map_err(err)?,
        };
        let config = FitConfig::new(fit_mode(mode)?, eps);
        let ccbp = py
            .detach(|| {
                let net = nets::build_net(cloud, depth, |_, _| true);
                nets::fit_ccbp(cloud, &net, &sigma0, &config)
            })
            .map_err(err)?;
        Ok(Self { inner: CoreMap::full(ccbp), c_audit })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let mut doc = Value::Null;
        let data = parse_document(text, "param_map", &mut doc)?;
        let (inner, c_audit) = io::map_from_json(data).map_err(err)?;
        Ok(Self { inner, c_audit })
    }

    /// Map document readable by the command-line tool.
    fn to_json(&self) -> String {
        document("param_map", io::map_to_json(&self.inner, self.c_audit))
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.ccbp().eps()
    }

    /// Net centers of level `k`.
    fn centers(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.ccbp().centers(self.level(k)?).iter().map(list).collect())
    }

    /// `f(z)`.
    fn image(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&self.inner.image(&self.point(z)?)))
    }

    /// Ambient extension `g(z)`.
    fn extend(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        let z = self.point(z)?;
        Ok(list(&extend::extend(&self.inner, Isometries::Exact, &z).map_err(err)?))
    }

    /// One step `σ_k(y)`.
    fn sigma(&self, k: usize, y: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&self.inner.sigma(self.level(k)?, &self.point(y)?)))
    }

    /// Jacobian of `σ_k` at `y`, as rows.
    fn dsigma(&self, k: usize, y: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.dsigma(self.level(k)?, &self.point(y)?)))
    }

    /// Compatibility audit against `c_audit·ε`.
    #[pyo3(signature = (c_audit=None))]
    fn audit<'py>(&self, py: Python<'py>, c_audit: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
        let ccbp = self.inner.ccbp();
        let report = py.detach(|| nets::audit_ccbp(ccbp, c_audit.unwrap_or(self.c_audit)));
        to_python(py, &io::to_value(&report))
    }

    fn __repr__(&self) -> String {
        format!("ParamMap(depth={}, eps={})", self.inner.depth(), self.inner.ccbp().eps())
    }
}

/// Constant-angle snowflake over the unit segment.
#[pyfunction]
#[pyo3(signature = (alpha, generations, spacing=1e-4))]
fn snowflake(alpha: f64, generations: usize, spacing: f64) -> PyResult<PointCloud> {
    let spec = SnowflakeSpec {
        generations,
        angles: AngleSchedule::Constant { alpha },
        boost: None,
        start: [0.0, 0.0],
        end: [1.0, 0.0],
        spacing,
    };
    Ok(PointCloud { inner: sets::snowflake(&spec).map_err(err)?.cloud })
}

/// Closed-form snowflake length for chord `chord`.
#[pyfunction]
fn snowflake_length(chord: f64, alpha: f64, generations: usize) -> f64 {
    sets::snowflake_length(chord, alpha, generations)
}

/// `β_∞(x, r)`.
#[pyfunction]
fn beta_inf(py: Python<'_>, cloud: &PointCloud, x: Vec<f64>, r: f64) -> PyResult<f64> {
    let x = vector(x);
    py.detach(|| beta::beta_inf(&cloud.inner, &x, r)).map_err(err)
}

/// `β_q(x, r)`; needs weights.
#[pyfunction]
fn beta_q(py: Python<'_>, cloud: &PointCloud, x: Vec<f64>, r: f64, q: f64) -> PyResult<f64> {
    let x = vector(x);
    py.detach(|| beta::beta_q(&cloud.inner, &x, r, q)).map_err(err)
}

/// Nearest orthogonal matrix `(SSᵀ)^{-1/2}S`, for `S` close to orthogonal.
#[pyfunction]
fn project_isometry(s: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&extend::project_isometry(&matrix(&s)?).map_err(err)?))
}

#[pymodule]
fn pyreifenberg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ReifenbergError", m.py().get_type::<ReifenbergError>())?;
    m.add("__version__", io::LIBRARY_VERSION)?;
    m.add_class::<PointCloud>()?;
    m.add_class::<Plane>()?;
    m.add_class::<ParamMap>()?;
    m.add_function(wrap_pyfunction!(snowflake, m)?)?;
    m.add_function(wrap_pyfunction!(snowflake_length, m)?)?;
    m.add_function(wrap_pyfunction!(beta_inf, m)?)?;
    m.add_function(wrap_pyfunction!(beta_q, m)?)?;
    m.add_function(wrap_pyfunction!(project_isometry, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_cross_as_rows() {
        let m = matrix(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (3, 2));
        assert_eq!(m[(2, 0)], 5.0);
        assert_eq!(rows(&m), vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert!(matrix(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn fit_modes_parse_by_name() {
        assert_eq!(fit_mode("l1").unwrap(), FitMode::L1);
        assert!(fit_mode("L2").is_err());
    }
}
