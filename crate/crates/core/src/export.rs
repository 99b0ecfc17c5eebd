//! CSV and key-value serialization of results.
//!
//! Every artifact opens with `# key: value` header lines (spec hash, seed,
//! tool version) followed by a CSV table with a fixed column order. Floats
//! use the shortest round-trip representation, so identical results give
//! identical bytes.

use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::branches::ContractionReport;
use crate::cycles::{CountRow, Cycle, Repulsion};
use crate::error::{Error, Result};
use crate::measures::PointCloudMeasure;
use crate::mesh::ParamMesh;
use crate::motion::{CycleMotion, NodeStatus, WebApprox};
use crate::proj_geom::PPoint;
use crate::stability::{NodeClass, StabilityGrid};

pub const TOOL_VERSION: &str = concat!("holoweb ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub spec_hash: String,
    pub seed: u64,
}

impl Header {
    pub fn new(spec_hash: impl Into<String>, seed: u64) -> Self {
        Self { spec_hash: spec_hash.into(), seed }
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "# spec_sha256: {}", self.spec_hash)?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# version: {TOOL_VERSION}")
    }
}

/// Ordered `key: value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn extend(&mut self, other: &Summary) {
        self.entries.extend(other.entries.iter().cloned());
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }

    /// Parses `key: value` lines, skipping blanks and `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once(':').ok_or_else(|| Error::Parse(format!("not a key-value line: {line}")))?;
            out.put(k, v.strip_prefix(' ').unwrap_or(v));
        }
        Ok(out)
    }
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename, so
/// readers never see a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path.file_name().ok_or_else(|| Error::Precondition(format!("not a file path: {}", path.display())))?;
    tmp.set_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn lambda_columns(m: usize) -> Vec<String> {
    (1..=m).flat_map(|j| [format!("re_l{j}"), format!("im_l{j}")]).collect()
}

fn lambda_fields(lambda: &[Complex64]) -> Vec<String> {
    lambda.iter().flat_map(|c| [c.re.to_string(), c.im.to_string()]).collect()
}

fn point_columns(k: usize) -> Vec<String> {
    (0..=k).flat_map(|j| [format!("re_x{j}"), format!("im_x{j}")]).collect()
}

fn point_fields(p: &PPoint) -> Vec<String> {
    p.coords().iter().flat_map(|c| [c.re.to_string(), c.im.to_string()]).collect()
}

fn table(header: &Header, columns: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    header.write_to(&mut buf)?;
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(&columns)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn class_name(c: NodeClass) -> &'static str {
    match c {
        NodeClass::Stable => "stable",
        NodeClass::Bifurcation => "bifurcation",
        NodeClass::Indeterminate => "indeterminate",
    }
}

/// Columns: `node`, grid coordinates `g0..`, `re_l1, im_l1, …`, `L`, `chi`,
/// `stencil`, `class`. Missing values are empty fields.
pub fn grid_csv(header: &Header, grid: &StabilityGrid) -> Result<Vec<u8>> {
    let mesh = &grid.mesh;
    let mut cols = vec!["node".to_string()];
    cols.extend((0..mesh.axes().len()).map(|a| format!("g{a}")));
    cols.extend(lambda_columns(mesh.m()));
    cols.extend(["L", "chi", "stencil", "class"].map(String::from));
    let rows = (0..mesh.len()).map(|i| {
        let mut r = vec![i.to_string()];
        r.extend(mesh.coords(i).iter().map(usize::to_string));
        r.extend(lambda_fields(&mesh.node(i)));
        r.push(fmt_opt(grid.lyap[i]));
        r.push(fmt_opt(grid.chi[i]));
        r.push(fmt_opt(grid.stencil[i]));
        r.push(class_name(grid.class[i]).into());
        r
    });
    table(header, cols, rows)
}

/// Parsed grid CSV: grid coordinates and stencil per row.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTable {
    pub coords: Vec<Vec<usize>>,
    pub stencil: Vec<Option<f64>>,
    pub class: Vec<String>,
}

pub fn read_grid_csv(text: &str) -> Result<GridTable> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let heads = rdr.headers()?.clone();
    let col = |name: &str| heads.iter().position(|h| h == name).ok_or_else(|| Error::Parse(format!("missing column {name}")));
    let g: Vec<usize> = heads.iter().enumerate().filter(|(_, h)| h.starts_with('g') && h[1..].parse::<usize>().is_ok()).map(|(i, _)| i).collect();
    let (s, c) = (col("stencil")?, col("class")?);
    if g.is_empty() {
        return Err(Error::Parse("no grid coordinate columns".into()));
    }
    let mut out = GridTable { coords: Vec::new(), stencil: Vec::new(), class: Vec::new() };
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| rec.get(i).ok_or_else(|| Error::Parse(format!("short row: {rec:?}")));
        let coords = g.iter().map(|&i| num(i)?.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))).collect::<Result<_>>()?;
        let st = num(s)?;
        out.coords.push(coords);
        out.stencil.push(if st.is_empty() { None } else { Some(st.parse().map_err(|e: std::num::ParseFloatError| Error::Parse(e.to_string()))?) });
        out.class.push(num(c)?.to_string());
    }
    if out.coords.is_empty() {
        return Err(Error::Parse("grid CSV has no rows".into()));
    }
    Ok(out)
}

fn repulsion_name(r: Repulsion) -> &'static str {
    match r {
        Repulsion::Repelling => "repelling",
        Repulsion::Indeterminate => "indeterminate",
        Repulsion::NotRepelling => "not_repelling",
    }
}

/// One row per cycle point: `cycle`, `index`, `λ`, `period`, point
/// coordinates, multiplier moduli `mod_1..=mod_k`, `repulsion`, `in_julia`,
/// `julia_confidence`.
pub fn cycles_csv(header: &Header, k: usize, m: usize, cycles: &[Cycle]) -> Result<Vec<u8>> {
    let mut cols = vec!["cycle".to_string(), "index".into()];
    cols.extend(lambda_columns(m));
    cols.push("period".into());
    cols.extend(point_columns(k));
    cols.extend((1..=k).map(|j| format!("mod_{j}")));
    cols.extend(["repulsion", "in_julia", "julia_confidence"].map(String::from));
    let rows = cycles.iter().enumerate().flat_map(|(ci, c)| {
        c.points.iter().enumerate().map(move |(j, p)| {
            let mut r = vec![ci.to_string(), j.to_string()];
            r.extend(lambda_fields(&c.lambda));
            r.push(c.period.to_string());
            r.extend(point_fields(p));
            r.extend((0..k).map(|i| c.multipliers.get(i).map_or_else(String::new, |z| z.norm().to_string())));
            r.push(repulsion_name(c.repulsion).into());
            r.push(c.in_julia.to_string());
            r.push(c.julia_confidence.to_string());
            r
        })
    });
    table(header, cols, rows)
}

/// Columns: `n`, `count`, `ratio`.
pub fn count_csv(header: &Header, rows: &[CountRow]) -> Result<Vec<u8>> {
    let cols = ["n", "count", "ratio"].map(String::from).to_vec();
    table(header, cols, rows.iter().map(|r| vec![r.n.to_string(), r.count.to_string(), r.ratio.to_string()]))
}

/// Columns: point coordinates, `weight`.
pub fn measure_csv(header: &Header, measure: &PointCloudMeasure) -> Result<Vec<u8>> {
    let mut cols = point_columns(measure.k);
    cols.push("weight".into());
    let rows = measure.atoms.iter().map(|(p, w)| {
        let mut r = point_fields(p);
        r.push(w.to_string());
        r
    });
    table(header, cols, rows)
}

/// Reads a measure CSV back into `(point, weight)` pairs.
pub fn read_measure_csv(text: &str) -> Result<Vec<(PPoint, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let n = rdr.headers()?.len();
    if n < 5 || n % 2 == 0 {
        return Err(Error::Parse(format!("unexpected measure column count {n}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let vals: Vec<f64> = rec?.iter().map(|s| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))).collect::<Result<_>>()?;
        let coords: Vec<(f64, f64)> = vals[..n - 1].chunks(2).map(|c| (c[0], c[1])).collect();
        out.push((PPoint::from_reals(&coords)?, vals[n - 1]));
    }
    Ok(out)
}

fn status_name(s: NodeStatus) -> &'static str {
    match s {
        NodeStatus::Tracked => "tracked",
        NodeStatus::Collided => "collided",
        NodeStatus::Indeterminate => "indeterminate",
        NodeStatus::Unreached => "unreached",
    }
}

/// One row per (atom, node): `atom`, `period`, `image`, `node`, `λ`,
/// point coordinates, `status`. Untracked rows leave the point empty.
pub fn web_tracks_csv(header: &Header, k: usize, web: &WebApprox) -> Result<Vec<u8>> {
    let mesh: &ParamMesh = &web.mesh;
    let mut cols = ["atom", "period", "image", "node"].map(String::from).to_vec();
    cols.extend(lambda_columns(mesh.m()));
    cols.extend(point_columns(k));
    cols.push("status".into());
    let rows = (0..web.atoms.len()).flat_map(|a| {
        (0..mesh.len()).map(move |i| {
            let mut r = vec![a.to_string(), web.period(a).to_string(), web.f_action[a].to_string(), i.to_string()];
            r.extend(lambda_fields(&mesh.node(i)));
            match web.value(a, i) {
                Some(p) => r.extend(point_fields(p)),
                None => r.extend(std::iter::repeat_n(String::new(), 2 * (k + 1))),
            }
            r.push(status_name(web.motions[web.atoms[a].motion].status[i]).into());
            r
        })
    });
    table(header, cols, rows)
}

/// One row per (motion, cycle point, node): `motion`, `index`, `period`,
/// `node`, `λ`, point coordinates, `status`.
pub fn motions_csv(header: &Header, k: usize, motions: &[CycleMotion]) -> Result<Vec<u8>> {
    let m = motions.first().map_or(0, |mo| mo.mesh.m());
    let mut cols = ["motion", "index", "period", "node"].map(String::from).to_vec();
    cols.extend(lambda_columns(m));
    cols.extend(point_columns(k));
    cols.push("status".into());
    let rows = motions.iter().enumerate().flat_map(|(mi, mo)| {
        (0..mo.period).flat_map(move |j| {
            (0..mo.mesh.len()).map(move |i| {
                let mut r = vec![mi.to_string(), j.to_string(), mo.period.to_string(), i.to_string()];
                r.extend(lambda_fields(&mo.mesh.node(i)));
                match mo.point(i, j) {
                    Some(p) => r.extend(point_fields(p)),
                    None => r.extend(std::iter::repeat_n(String::new(), 2 * (k + 1))),
                }
                r.push(status_name(mo.status[i]).into());
                r
            })
        })
    });
    table(header, cols, rows)
}

/// Columns: `n`, `u_hat`, `radius`, `lipschitz`.
pub fn contraction_csv(header: &Header, report: &ContractionReport) -> Result<Vec<u8>> {
    let cols = ["n", "u_hat", "radius", "lipschitz"].map(String::from).to_vec();
    let rows = (0..report.u_hat.len()).map(|i| {
        vec![
            (i + 1).to_string(),
            report.u_hat[i].to_string(),
            report.radii.get(i).map_or_else(String::new, f64::to_string),
            report.lipschitz.get(i).map_or_else(String::new, f64::to_string),
        ]
    });
    table(header, cols, rows)
}

/// Scalar fields of a contraction report.
pub fn contraction_summary(report: &ContractionReport) -> Summary {
    let mut s = Summary::new();
    s.put("p", report.p)
        .put("r_p", report.r_p)
        .put("guard_radius", report.guard_radius)
        .put("c_p", report.c_p)
        .put("tau", report.tau)
        .put("epsilon", report.epsilon)
        .put("l_prime", report.l_prime)
        .put("rate", report.rate)
        .put("rate_error", report.rate_error)
        .put("rate_theory", report.rate_theory)
        .put("verified", report.verified)
        .put("tempering_alpha", report.tempering.0)
        .put("tempering_beta", report.tempering.1)
        .put("samples_per_node", report.samples_per_node);
    s
}
