use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use holoweb::export::{self, Header, Summary};
use holoweb::family::presets;
use holoweb::stability::{harmonicity_grid, GridOptions, NodeClass};
use holoweb::ParamMesh;
use holoweb_cli::render::render_grid;

fn family(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../families").join(format!("{name}.toml"))
}

fn holoweb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holoweb")).args(args).output().expect("binary runs")
}

fn run(spec: &str, cmd: &str, out: &Path, extra: &[&str]) -> Output {
    let spec = family(spec);
    let mut args = vec!["--spec", spec.to_str().unwrap(), "--cmd", cmd, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    holoweb(&args)
}

#[test]
fn validate_accepts_the_quadratic_family() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("quadratic", "validate", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = Summary::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(summary.get("validate.valid"), Some("true"));
    assert_eq!(summary.get("status"), Some("ok"));
    assert_eq!(summary.get("spec_sha256").map(str::len), Some(64));
}

#[test]
fn validate_names_the_offending_component() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("nonhomogeneous", "validate", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("component 1"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unreadable_or_malformed_specs_are_validation_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = holoweb(&["--spec", missing.to_str().unwrap(), "--cmd", "validate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "k = 1\nd = ").unwrap();
    let out = holoweb(&["--spec", bad.to_str().unwrap(), "--cmd", "validate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_without_parameters_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("chebyshev", "sweep-L", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let flags = ["--mesh", "7", "--depth", "8", "--seed", "42"];
    for dir in [&a, &b] {
        let out = run("quadratic", "sweep-L", dir.path(), &flags);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["grid.csv", "grid.png", "sweep-L.txt", "summary.txt"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let csv = fs::read_to_string(a.path().join("grid.csv")).unwrap();
    assert!(csv.starts_with("# spec_sha256: "));
    assert!(csv.lines().nth(1) == Some("# seed: 42"));
    assert_eq!(csv.lines().nth(3), Some("node,g0,g1,re_l1,im_l1,L,chi,stencil,class"));
    // a different seed changes the stochastic columns
    let c = tempfile::tempdir().unwrap();
    run("quadratic", "sweep-L", c.path(), &["--mesh", "7", "--depth", "8", "--seed", "43"]);
    assert_ne!(fs::read(a.path().join("grid.csv")).unwrap(), fs::read(c.path().join("grid.csv")).unwrap());
}

#[test]
fn full_pipeline_on_a_single_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("chebyshev", "all", dir.path(), &["--period", "3", "--budget", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = Summary::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(summary.get("cycles.count"), Some("8"));
    assert_eq!(summary.get("branches.kingman_violation"), Some("false"));
    let mut names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["branches.txt", "contraction.csv", "counts.csv", "cycles.csv", "cycles.txt", "summary.txt", "validate.txt"]);
    for n in names {
        let text = fs::read_to_string(dir.path().join(&n)).unwrap();
        assert!(text.starts_with("# spec_sha256: ") && text.contains("# version: holoweb "), "{n}");
    }
}

#[test]
fn web_report_on_a_small_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("quadratic", "web", dir.path(), &["--mesh", "5", "--period", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = Summary::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(summary.get("web.atoms"), Some("7"));
    assert_eq!(summary.get("web.intersections"), Some("0"));
    assert_eq!(summary.get("web.misiurewicz"), Some("0"));
    assert!(dir.path().join("web_tracks.csv").exists());
}

fn grid_text(grid: &holoweb::stability::StabilityGrid) -> String {
    String::from_utf8(export::grid_csv(&Header::new("test", 0), grid).unwrap()).unwrap()
}

#[test]
fn quiet_grid_renders_near_black() {
    let spec = presets::quadratic();
    let mesh = ParamMesh::polydisk(&[num_complex::Complex64::new(0.0, 0.0)], 0.2, 7).unwrap();
    let mut opts = GridOptions::new(1);
    opts.lyap.depth = 8;
    opts.chi_steps = 0;
    let grid = harmonicity_grid(&spec, &mesh, &opts).unwrap();
    assert!(grid.class.iter().all(|&c| c == NodeClass::Stable));
    let img = render_grid(&grid_text(&grid)).unwrap();
    assert_eq!(img.dimensions(), (7, 7));
    assert!(img.pixels().all(|p| p.0[0] <= 8));
}

#[test]
fn empty_or_malformed_grids_are_errors() {
    assert!(render_grid("").is_err());
    assert!(render_grid("# seed: 1\nnode,g0,g1,re_l1,im_l1,L,chi,stencil,class\n").is_err());
    assert!(render_grid("node,g0,g1,stencil,class\n0,0,x,1,stable\n").is_err());
}

fn escapes(c: num_complex::Complex64) -> bool {
    let mut z = num_complex::Complex64::new(0.0, 0.0);
    for _ in 0..1000 {
        z = z * z + c;
        if z.norm_sqr() > 4.0 {
            return true;
        }
    }
    false
}

#[test]
fn bright_pixels_follow_the_escape_time_boundary() {
    let n = 25;
    let mesh = ParamMesh::rect((-2.0, 0.6), (-1.3, 1.3), n, n).unwrap();
    let mut opts = GridOptions::new(1);
    opts.lyap.depth = 10;
    opts.chi_steps = 0;
    let grid = harmonicity_grid(&presets::quadratic(), &mesh, &opts).unwrap();
    let img = render_grid(&grid_text(&grid)).unwrap();
    let h = mesh.spacing(0);
    let mut boundary = Vec::new();
    for i in 0..mesh.len() {
        let c = mesh.node(i)[0];
        let mut seen = [false; 2];
        for a in 0..8 {
            for b in 0..8 {
                let off = num_complex::Complex64::new((a as f64 + 0.5) / 8.0 - 0.5, (b as f64 + 0.5) / 8.0 - 0.5) * h;
                seen[usize::from(escapes(c + off))] = true;
            }
        }
        if seen[0] && seen[1] {
            let g = mesh.coords(i);
            boundary.push((g[0] as i64, (n - 1 - g[1]) as i64));
        }
    }
    let bright: Vec<(i64, i64)> = img.enumerate_pixels().filter(|p| p.2 .0[0] >= 128).map(|p| (p.0 as i64, p.1 as i64)).collect();
    assert!(!bright.is_empty());
    let near = bright.iter().filter(|&&(x, y)| boundary.iter().any(|&(a, b)| (a - x).pow(2) + (b - y).pow(2) <= 4)).count();
    assert!(near as f64 >= 0.8 * bright.len() as f64, "{near} of {}", bright.len());
}
