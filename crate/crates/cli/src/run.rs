use std::fs;
use std::path::{Path, PathBuf};

use holoweb::branches::{self, BranchChoice, TubeSpec};
use holoweb::cycles;
use holoweb::export::{self, Header, Summary, TOOL_VERSION};
use holoweb::family::validate_family;
use holoweb::measures;
use holoweb::motion::{self, WebOptions};
use holoweb::stability::{self, GridOptions, NodeClass};
use holoweb::{Error, FamilySpec, ParamMesh};
use sha2::{Digest, Sha256};

use crate::config::{Command, RunConfig};
use crate::render;

const DEFAULT_PULLBACK_DEPTH: usize = 12;
const DEFAULT_ORBIT_DEPTH: usize = 20;
const KINGMAN_DEPTH: usize = 50;
const PUSHFORWARD_NODES: usize = 5;
const GRAND_ORBIT_FORWARD: usize = 3;
/// Backward depth of the critical grand orbit; each level multiplies the set
/// by `d^k`.
const GRAND_ORBIT_BACKWARD: [usize; 2] = [3, 1];
const MISIUREWICZ_ITERATES: usize = 4;

/// A failed run: exit status and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_validation() { 1 } else { 2 }, message: e.to_string() }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

/// Single writer for the run's artifacts. Files land through
/// temp-and-rename; on failure everything written so far is removed.
struct Artifacts {
    dir: PathBuf,
    header: Header,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        export::write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn write_summary(&mut self, name: &str, summary: &Summary) -> Result<(), Failure> {
        let mut buf = Vec::new();
        self.header.write_to(&mut buf).map_err(Error::from)?;
        buf.extend_from_slice(summary.render().as_bytes());
        self.write(name, &buf)
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn load(path: &Path) -> Result<(FamilySpec, String), Failure> {
    let text = fs::read(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let spec = FamilySpec::from_toml_str(&String::from_utf8_lossy(&text))?;
    Ok((spec, sha256_hex(&text)))
}

/// Runs one command and returns its summary block.
pub fn dispatch(config: &RunConfig) -> Result<Summary, Failure> {
    let (mut spec, hash) = load(&config.spec)?;
    if let Some(n) = config.mesh {
        if n == 0 {
            return Err(invalid("--mesh must be positive"));
        }
        spec.domain.mesh = n;
    }
    fs::create_dir_all(&config.out).map_err(|e| Failure { code: 2, message: format!("cannot create {}: {e}", config.out.display()) })?;
    let header = Header::new(hash, config.seed);
    let mut out = Artifacts { dir: config.out.clone(), header: header.clone(), written: Vec::new() };
    let mut summary = Summary::new();
    summary.put("spec_sha256", &header.spec_hash).put("seed", config.seed).put("version", TOOL_VERSION).put("command", config.cmd.name());
    match run(config, &spec, &mut out, &mut summary) {
        Ok(()) => {
            summary.put("status", "ok");
            out.write_summary("summary.txt", &summary)?;
            Ok(summary)
        }
        Err(f) => {
            out.discard();
            Err(f)
        }
    }
}

fn run(config: &RunConfig, spec: &FamilySpec, out: &mut Artifacts, summary: &mut Summary) -> Result<(), Failure> {
    let steps: &[Command] = match config.cmd {
        Command::All if spec.m == 0 => &[Command::Validate, Command::Cycles, Command::Branches],
        Command::All => &[Command::Validate, Command::SweepL, Command::Cycles, Command::Web, Command::Branches],
        _ => std::slice::from_ref(&config.cmd),
    };
    for &step in steps {
        let s = match step {
            Command::Validate => validate(spec)?,
            Command::SweepL => sweep(config, spec, out)?,
            Command::Cycles => cycles_cmd(config, spec, out)?,
            Command::Web => web(config, spec, out)?,
            Command::Branches => branches_cmd(config, spec, out)?,
            Command::All => unreachable!(),
        };
        out.write_summary(&format!("{}.txt", step.name()), &s)?;
        summary.extend(&s);
    }
    Ok(())
}

fn validate(spec: &FamilySpec) -> Result<Summary, Failure> {
    let report = validate_family(spec)?;
    if !report.is_valid() {
        return Err(invalid(format!("family is not an endomorphism: {}", report.problems().join("; "))));
    }
    let mut s = Summary::new();
    s.put("validate.k", spec.k).put("validate.d", spec.d).put("validate.m", spec.m).put("validate.probed", report.probed).put("validate.valid", true);
    Ok(s)
}

fn need_parameters(spec: &FamilySpec, what: &str) -> Result<ParamMesh, Failure> {
    if spec.m == 0 {
        return Err(invalid(format!("{what} needs a family with parameters (m ≥ 1)")));
    }
    Ok(ParamMesh::from_domain(&spec.domain)?)
}

fn sweep(config: &RunConfig, spec: &FamilySpec, out: &mut Artifacts) -> Result<Summary, Failure> {
    let mesh = need_parameters(spec, "sweep-L")?;
    let mut opts = GridOptions::new(spec.k);
    opts.lyap.seed = config.seed;
    opts.lyap.depth = config.depth.unwrap_or(DEFAULT_PULLBACK_DEPTH);
    opts.theta = config.theta;
    let grid = stability::harmonicity_grid(spec, &mesh, &opts)?;
    let csv = export::grid_csv(&out.header, &grid)?;
    let png = render::png_bytes(&render::render_grid(&String::from_utf8_lossy(&csv))?)?;
    out.write("grid.csv", &csv)?;
    out.write("grid.png", &png)?;
    let report = stability::classify_report(&grid)?;
    let count = |c: NodeClass| grid.class.iter().filter(|&&x| x == c).count();
    let mut s = Summary::new();
    s.put("sweep.nodes", mesh.len())
        .put("sweep.depth", stability::pullback_depth(spec, opts.lyap.depth))
        .put("sweep.theta", grid.theta)
        .put("sweep.stable", count(NodeClass::Stable))
        .put("sweep.bifurcation", count(NodeClass::Bifurcation))
        .put("sweep.indeterminate", count(NodeClass::Indeterminate))
        .put("sweep.stable_components", report.components)
        .put("sweep.max_stable_stencil", report.max_stable_stencil);
    Ok(s)
}

fn cycles_cmd(config: &RunConfig, spec: &FamilySpec, out: &mut Artifacts) -> Result<Summary, Failure> {
    let n = config.period.max(1);
    let center = spec.domain.center.clone();
    let found = cycles::find_periodic(spec, &center, n)?;
    let rows = cycles::count_audit(spec, &center, n)?;
    out.write("cycles.csv", &export::cycles_csv(&out.header, spec.k, spec.m, &found)?)?;
    out.write("counts.csv", &export::count_csv(&out.header, &rows)?)?;
    let mut s = Summary::new();
    s.put("cycles.period", n)
        .put("cycles.found", found.len())
        .put("cycles.repelling_julia", found.iter().filter(|c| c.is_repelling_julia()).count())
        .put("cycles.count", rows[n - 1].count)
        .put("cycles.ratio", rows[n - 1].ratio)
        .put("cycles.monotone", cycles::is_monotone(&rows));
    if spec.m > 0 {
        let mesh = ParamMesh::from_domain(&spec.domain)?;
        let exact: Vec<&cycles::Cycle> = found.iter().filter(|c| c.period == n && c.is_repelling_julia()).collect();
        let motions: Vec<motion::CycleMotion> = exact.iter().map(|c| motion::track_cycle(spec, c, &mesh)).collect::<Result<_, _>>()?;
        let tracked: usize = motions.iter().map(|m| m.tracked()).sum();
        out.write("motions.csv", &export::motions_csv(&out.header, spec.k, &motions)?)?;
        s.put("cycles.tracked_fraction", tracked as f64 / (motions.len() * mesh.len()).max(1) as f64);
    }
    Ok(s)
}

fn web(config: &RunConfig, spec: &FamilySpec, out: &mut Artifacts) -> Result<Summary, Failure> {
    let mesh = need_parameters(spec, "web")?;
    let web = motion::build_web_levels(spec, &mesh, &[config.period.max(1)], &WebOptions::default())?;
    out.write("web_tracks.csv", &export::web_tracks_csv(&out.header, spec.k, &web)?)?;
    let depth = stability::pullback_depth(spec, config.depth.unwrap_or(DEFAULT_PULLBACK_DEPTH));
    let mut push: f64 = 0.0;
    for node in mesh.subsample(PUSHFORWARD_NODES) {
        let reference = measures::pullback_measure_seeded(spec, &mesh.node(node), depth, config.seed)?;
        push = push.max(motion::pushforward_check(&web, node, &reference)?);
    }
    let inter = motion::graph_intersections(&web, spec)?;
    let probe = motion::grand_orbit_proximity(&web, spec, GRAND_ORBIT_FORWARD, GRAND_ORBIT_BACKWARD[(spec.k - 1).min(1)])?;
    let mut s = Summary::new();
    s.put("web.level", config.period.max(1))
        .put("web.atoms", web.atoms.len())
        .put("web.hole_mass", web.hole_mass)
        .put("web.bijection", web.is_bijection())
        .put("web.equivariance_error", web.equivariance_error(spec)?)
        .put("web.pushforward_max", push)
        .put("web.intersections", inter.intersections.len())
        .put("web.min_separation", inter.min_separation);
    for (i, x) in inter.intersections.iter().enumerate() {
        s.put(format!("web.intersection.{i}"), format!("atoms {} {} lambda {:?} separation {}", x.atoms.0, x.atoms.1, x.lambda, x.separation));
    }
    s.put("web.grand_orbit_min_distance", probe.distances.iter().copied().fold(f64::INFINITY, f64::min))
        .put("web.grand_orbit_suspects", probe.suspect.iter().filter(|&&b| b).count());
    if spec.k == 1 && spec.m == 1 {
        let found = motion::misiurewicz_scan(spec, &mesh, &web, MISIUREWICZ_ITERATES)?;
        s.put("web.misiurewicz", found.len());
        for (i, m) in found.iter().enumerate() {
            s.put(format!("web.misiurewicz.{i}"), format!("lambda {} atom {} iterate {} residual {}", m.lambda[0], m.atom, m.iterate, m.residual));
        }
    } else {
        s.put("web.misiurewicz", "unsupported");
    }
    Ok(s)
}

fn branches_cmd(config: &RunConfig, spec: &FamilySpec, out: &mut Artifacts) -> Result<Summary, Failure> {
    let mesh = ParamMesh::from_domain(&spec.domain)?;
    let depth = config.depth.unwrap_or(DEFAULT_ORBIT_DEPTH).max(2);
    let base = branches::generic_base(spec, &mesh, config.seed)?;
    let orbit = branches::sample_backward_orbit(spec, &mesh, &base, depth, BranchChoice::Random, config.seed)?;
    let radius = branches::admissible_radius(spec, &orbit)?;
    let report = branches::inverse_branch_iterate(spec, &orbit, TubeSpec { radius }, depth)?;
    out.write("contraction.csv", &export::contraction_csv(&out.header, &report)?)?;
    let kingman = branches::kingman_estimate(spec, &mesh, report.p, config.budget.max(2), KINGMAN_DEPTH, config.seed)?;
    let mut s = Summary::new();
    s.put("branches.depth", depth).put("branches.tube_radius", radius).put("branches.relation_error", orbit.relation_error(spec)?);
    for (k, v) in export::contraction_summary(&report).entries() {
        s.put(format!("branches.{k}"), v);
    }
    s.put("branches.kingman", kingman.value)
        .put("branches.kingman_ci_low", kingman.ci.0)
        .put("branches.kingman_ci_high", kingman.ci.1)
        .put("branches.kingman_violation", kingman.violation);
    Ok(s)
}
