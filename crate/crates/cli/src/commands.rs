use std::fs;
use std::path::{Path, PathBuf};

use reifenberg::beta::beta_profile;
use reifenberg::extend::{extend, Isometries, IsometryField};
use reifenberg::flow::{distortion, flatness_check, sample_base_pairs, sample_surface, PairSampling, ParamMap};
use reifenberg::io::{
    canonical_json, cloud_from_json, cloud_to_json, config_hash, document, field_from_json, field_to_json, from_value,
    map_from_json, map_to_json, open_document, parse, points_to_json, profile_csv, to_value, LIBRARY_VERSION,
};
use reifenberg::nets::{audit_ccbp, build_net, build_net_separated, fit_ccbp, AuditReport};
use reifenberg::sets::GeneratorSpec;
use reifenberg::{AffinePlane, Matrix, PointCloud, Vector};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{AuditConfig, BetasConfig, BuildConfig, EvalConfig, Queries, ReportConfig, Target};
use crate::error::{CliError, CliResult};

pub const CLOUD_FILE: &str = "cloud.json";
pub const BETAS_FILE: &str = "betas.json";
pub const BETAS_CSV: &str = "betas.csv";
pub const MAP_FILE: &str = "map.json";
pub const FIELD_FILE: &str = "field.json";
pub const AUDIT_FILE: &str = "audit.json";
pub const IMAGES_FILE: &str = "images.json";
pub const REPORT_FILE: &str = "report.json";

/// Options shared by all commands.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub force: bool,
}

/// Provenance echo: command, effective config and digests of the inputs read.
struct Echo {
    command: &'static str,
    config: Value,
    inputs: Map<String, Value>,
}

impl Echo {
    fn new(command: &'static str, config: &impl Serialize) -> Self {
        Self { command, config: to_value(config), inputs: Map::new() }
    }

    fn value(&self) -> Value {
        json!({"command": self.command, "config": self.config, "inputs": self.inputs})
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn input_error(path: &Path) -> impl FnOnce(reifenberg::Error) -> CliError + '_ {
    move |source| CliError::Input { path: path.to_path_buf(), source }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Context {
    fn resolve(&self, path: &Path) -> PathBuf {
        self.config.parent().unwrap_or(Path::new("")).join(path)
    }

    fn read_config<T: DeserializeOwned>(&self) -> CliResult<T> {
        let text = fs::read_to_string(&self.config).map_err(io_error(&self.config))?;
        let value = parse(&text).map_err(input_error(&self.config))?;
        from_value(&value, "$").map_err(input_error(&self.config))
    }

    /// Reads a document of `kind`, recording its digest under `role`.
    fn read_document<T>(
        &self,
        echo: &mut Echo,
        role: &str,
        path: &Path,
        kind: &str,
        load: impl FnOnce(&Value) -> reifenberg::Result<T>,
    ) -> CliResult<T> {
        let full = self.resolve(path);
        let text = fs::read_to_string(&full).map_err(io_error(&full))?;
        echo.inputs.insert(role.to_string(), sha256_hex(text.as_bytes()).into());
        let doc = parse(&text).map_err(input_error(&full))?;
        open_document(&doc, kind).and_then(load).map_err(input_error(&full))
    }

    fn read_map(&self, echo: &mut Echo, path: &Path) -> CliResult<(ParamMap, f64)> {
        self.read_document(echo, "map", path, "param_map", map_from_json)
    }

    fn write_text(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out).map_err(io_error(&self.out))?;
        let path = self.out.join(name);
        fs::write(&path, text).map_err(io_error(&path))?;
        Ok(path)
    }

    fn write_document(&self, name: &str, kind: &str, echo: &Echo, data: Value) -> CliResult<PathBuf> {
        self.write_text(name, &canonical_json(&document(kind, &echo.value(), data)))
    }
}

/// Fails with an audit error unless `--force` was given.
fn enforce_audit(ctx: &Context, audit: &AuditReport) -> CliResult<()> {
    if audit.pass || ctx.force {
        return Ok(());
    }
    Err(CliError::Audit(failed_conditions(audit)))
}

fn failed_conditions(audit: &AuditReport) -> String {
    let mut names: Vec<String> = audit.conditions.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    names.extend(audit.structural.iter().map(|s| s.kind.clone()));
    format!("{} (threshold {})", names.join(", "), audit.threshold)
}

/// Generator spec to point cloud.
pub fn gen(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let spec: GeneratorSpec = ctx.read_config()?;
    let cloud = spec.generate()?;
    let echo = Echo::new("gen", &spec);
    Ok(vec![ctx.write_document(CLOUD_FILE, "point_cloud", &echo, cloud_to_json(&cloud))?])
}

fn read_cloud(ctx: &Context, echo: &mut Echo, path: &Path) -> CliResult<PointCloud> {
    ctx.read_document(echo, "cloud", path, "point_cloud", cloud_from_json)
}

/// Multiscale β profile as JSON and CSV.
pub fn betas(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let cfg: BetasConfig = ctx.read_config()?;
    let mut echo = Echo::new("betas", &cfg);
    let cloud = read_cloud(ctx, &mut echo, &cfg.cloud)?;
    let map = cfg.map.as_ref().map(|m| ctx.read_map(&mut echo, m)).transpose()?;
    let ids: Vec<usize> = match &cfg.base_points {
        Some(ids) => ids.clone(),
        None => (0..cloud.len()).step_by(cfg.stride.max(1)).collect(),
    };
    if let Some(&bad) = ids.iter().find(|&&i| i >= cloud.len()) {
        return Err(CliError::Input {
            path: ctx.config.clone(),
            source: reifenberg::Error::Schema {
                path: "$.base_points".into(),
                reason: format!("index {bad} exceeds the {} samples", cloud.len()),
            },
        });
    }
    let profile = beta_profile(&cloud, &ids, &cfg.profile(), map.as_ref().map(|(pm, _)| pm.ccbp()))?;
    let json_path = ctx.write_document(BETAS_FILE, "beta_profile", &echo, to_value(&profile))?;
    let header = format!("# library_version {LIBRARY_VERSION}\n# config_hash {}\n", config_hash(&echo.value()));
    let csv_path = ctx.write_text(BETAS_CSV, &(header + &profile_csv(&profile)))?;
    Ok(vec![json_path, csv_path])
}

fn model_plane(cfg: &BuildConfig, cloud: &PointCloud) -> reifenberg::Result<AffinePlane> {
    match &cfg.sigma0 {
        None => AffinePlane::coordinate(cloud.ambient_dim(), cloud.intrinsic_dim()),
        Some(p) => {
            let columns: Vec<Vector> = p.frame.iter().map(|c| Vector::from_vec(c.clone())).collect();
            if columns.is_empty() || columns.iter().any(|c| c.len() != p.base.len()) {
                return Err(reifenberg::Error::Schema {
                    path: "$.sigma0.frame".into(),
                    reason: "columns must match the base dimension".into(),
                });
            }
            AffinePlane::from_frame(Vector::from_vec(p.base.clone()), Matrix::from_columns(&columns))
        }
    }
}

/// Nets, planes and the audit; the map is written even when the audit fails.
pub fn build(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let cfg: BuildConfig = ctx.read_config()?;
    let mut echo = Echo::new("build", &cfg);
    let cloud = read_cloud(ctx, &mut echo, &cfg.cloud)?;
    let sigma0 = model_plane(&cfg, &cloud).map_err(input_error(&ctx.config))?;
    let net = match cfg.separation {
        Some(factor) => build_net_separated(&cloud, cfg.depth, factor, |_, _| true),
        None => build_net(&cloud, cfg.depth, |_, _| true),
    };
    let ccbp = fit_ccbp(&cloud, &net, &sigma0, &cfg.fit())?;
    let audit = audit_ccbp(&ccbp, cfg.c_audit);
    let pm = ParamMap::full(ccbp);
    let mut written = vec![
        ctx.write_document(MAP_FILE, "param_map", &echo, map_to_json(&pm, cfg.c_audit))?,
        ctx.write_document(AUDIT_FILE, "audit", &echo, to_value(&audit))?,
    ];
    if let Some(grid) = &cfg.field {
        let field = IsometryField::build(&pm, grid.grid()?)?;
        written.push(ctx.write_document(FIELD_FILE, "isometry_field", &echo, field_to_json(&field))?);
    }
    if !audit.pass {
        return Err(CliError::Audit(failed_conditions(&audit)));
    }
    Ok(written)
}

/// Images of query points under `f` or `g`; refuses maps that fail their audit.
pub fn eval(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let cfg: EvalConfig = ctx.read_config()?;
    let mut echo = Echo::new("eval", &cfg);
    let (pm, c_audit) = ctx.read_map(&mut echo, &cfg.map)?;
    let audit = audit_ccbp(pm.ccbp(), c_audit);
    enforce_audit(ctx, &audit)?;
    let field = cfg
        .field
        .as_ref()
        .map(|f| ctx.read_document(&mut echo, "field", f, "isometry_field", field_from_json))
        .transpose()?;
    let points: Vec<Vector> = match &cfg.queries {
        Queries::Points(list) => list.iter().map(|p| Vector::from_vec(p.clone())).collect(),
        Queries::Cloud(path) => {
            ctx.read_document(&mut echo, "queries", path, "point_cloud", cloud_from_json)?.points().to_vec()
        }
        Queries::Grid(grid) => grid.grid()?.points(pm.sigma0()),
    };
    let n = pm.ccbp().ambient_dim();
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(CliError::Library(reifenberg::Error::DimensionMismatch { expected: n, found: p.len() }));
    }
    let images = match cfg.target {
        Target::F => points.iter().map(|z| Ok(pm.image(z))).collect::<reifenberg::Result<Vec<_>>>()?,
        Target::G => {
            let source = field.as_ref().map_or(Isometries::Exact, Isometries::Field);
            points.iter().map(|z| extend(&pm, source, z)).collect::<reifenberg::Result<Vec<_>>>()?
        }
    };
    let max_displacement = points.iter().zip(&images).map(|(z, w)| (w - z).norm()).fold(0.0, f64::max);
    let data = json!({
        "target": cfg.target,
        "audit_pass": audit.pass,
        "points": points_to_json(&points),
        "images": points_to_json(&images),
        "max_displacement": max_displacement,
    });
    Ok(vec![ctx.write_document(IMAGES_FILE, "images", &echo, data)?])
}

/// Re-audits a stored map.
pub fn audit(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let cfg: AuditConfig = ctx.read_config()?;
    let mut echo = Echo::new("audit", &cfg);
    let (pm, c_audit) = ctx.read_map(&mut echo, &cfg.map)?;
    let audit = audit_ccbp(pm.ccbp(), cfg.c_audit.unwrap_or(c_audit));
    let path = ctx.write_document(AUDIT_FILE, "audit", &echo, to_value(&audit))?;
    if !audit.pass {
        return Err(CliError::Audit(failed_conditions(&audit)));
    }
    Ok(vec![path])
}

/// Audit, distortion of `f` and flatness of its image in one document.
pub fn report(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let mut cfg: ReportConfig = ctx.read_config()?;
    if let (Some(seed), Some(d)) = (ctx.seed, cfg.distortion.as_mut()) {
        d.seed = seed;
    }
    let mut echo = Echo::new("report", &cfg);
    let (pm, c_audit) = ctx.read_map(&mut echo, &cfg.map)?;
    let audit = audit_ccbp(pm.ccbp(), c_audit);
    let distortion_section = match &cfg.distortion {
        None => Value::Null,
        Some(d) => {
            let pairs = sample_base_pairs(
                pm.sigma0(),
                &PairSampling {
                    count: d.count,
                    min_separation: d.min_separation,
                    max_separation: d.max_separation,
                    seed: d.seed,
                    lower: d.lower.clone(),
                    upper: d.upper.clone(),
                },
            )?;
            let report = distortion(|z| pm.image(z), &pairs)?;
            let max_displacement = pairs.iter().map(|(a, _)| (pm.image(a) - a).norm()).fold(0.0, f64::max);
            json!({"f": to_value(&report), "max_displacement": max_displacement})
        }
    };
    let flatness_section = match &cfg.flatness {
        None => Value::Null,
        Some(fc) => {
            let grid = fc.grid.grid()?;
            let surface = sample_surface(&pm, &grid, pm.depth())?;
            let margin = fc.radii.iter().cloned().fold(0.0, f64::max);
            let centers: Vec<usize> = (0..grid.len())
                .step_by(fc.center_stride.max(1))
                .filter(|&i| {
                    let t = grid.coords(i);
                    t.iter().zip(&grid.lower).zip(&grid.upper).all(|((t, l), u)| t - l >= margin && u - t >= margin)
                })
                .collect();
            to_value(&flatness_check(&surface, &centers, &fc.radii, pm.ccbp().eps())?)
        }
    };
    let data = json!({
        "depth": pm.depth(),
        "audit": to_value(&audit),
        "distortion": distortion_section,
        "flatness": flatness_section,
    });
    Ok(vec![ctx.write_document(REPORT_FILE, "report", &echo, data)?])
}
