//! End-to-end acceptance checks. One PASS/FAIL line per check; the process
//! exits nonzero if any check fails. An argument filters checks by name.

use std::f64::consts::{LN_2, TAU};
use std::time::Instant;

use holoweb::branches::{
    generic_base, inverse_branch_iterate, kingman_estimate, sample_backward_orbit, temper_sequence, u_hat, BranchChoice, TubeSpec,
};
use holoweb::cycles::{count_audit, find_periodic, is_monotone, Cycle};
use holoweb::export::{self, Header};
use holoweb::family::presets;
use holoweb::measures::{cycle_measure, measure_distance, pullback_measure_seeded};
use holoweb::motion::{
    build_web, build_web_levels, circle_loop, graph_intersections, misiurewicz_scan, monodromy, pushforward_check, track_cycle, NodeStatus,
    WebOptions,
};
use holoweb::stability::{chi_min, harmonicity_grid, lyap_sum, GridOptions, LyapMethod, NodeClass};
use holoweb::{FamilySpec, PPoint, ParamMesh};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), holoweb::Error>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Parameter on the main cardioid with multiplier `mu` at the attracting
/// fixed point.
fn cardioid(mu: Complex64) -> Complex64 {
    mu / 2.0 - mu * mu / 4.0
}

fn random_disk(rng: &mut ChaCha8Rng, r: f64) -> Complex64 {
    Complex64::from_polar(r * rng.random::<f64>().sqrt(), TAU * rng.random::<f64>())
}

/// Green's function of the filled Julia set at the critical value, by
/// escape rate.
fn green_at_critical(cc: Complex64) -> f64 {
    let mut z = cc;
    for n in 0..200 {
        if z.norm() > 1e8 {
            return z.norm().ln() / 2f64.powi(n);
        }
        z = z * z + cc;
    }
    0.0
}

fn escapes(cc: Complex64, iters: usize) -> bool {
    let mut z = c(0.0, 0.0);
    for _ in 0..iters {
        z = z * z + cc;
        if z.norm_sqr() > 4.0 {
            return true;
        }
    }
    false
}

fn lyap_exact() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in 2..=5u32 {
        let l = lyap_sum(&presets::power_map(d), &[], LyapMethod::Pullback)?;
        worst = worst.max((l - (d as f64).ln()).abs());
    }
    let p2 = lyap_sum(&presets::product_map_p2(), &[], LyapMethod::Pullback)?;
    let err2 = (p2 - 2.0 * LN_2).abs();
    Ok((worst <= 1e-3 && err2 <= 5e-3, format!("max |L - ln d| = {worst:.2e} (tol 1e-3), P2 |L - 2 ln 2| = {err2:.2e} (tol 5e-3)")))
}

fn cardioid_flat() -> Outcome {
    let spec = presets::quadratic();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let cc = cardioid(random_disk(&mut rng, 0.95));
        let oracle = LN_2 + green_at_critical(cc);
        worst = worst.max((lyap_sum(&spec, &[cc], LyapMethod::Pullback)? - oracle).abs());
    }
    Ok((worst <= 5e-3, format!("max |L - (ln 2 + G)| over 20 points = {worst:.2e} (tol 5e-3)")))
}

fn exponent_bounds() -> Outcome {
    let spec = presets::quadratic();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bound = LN_2 / 2.0 - 0.02;
    let (mut min_chi, mut min_l) = (f64::INFINITY, f64::INFINITY);
    for i in 0..50 {
        let mu = random_disk(&mut rng, 0.95);
        // main cardioid and the period-two disk
        let cc = if i % 5 == 4 { c(-1.0, 0.0) + mu / 4.0 } else { cardioid(mu) };
        min_chi = min_chi.min(chi_min(&spec, &[cc])?.value);
        min_l = min_l.min(lyap_sum(&spec, &[cc], LyapMethod::Pullback)?);
    }
    Ok((min_chi >= bound && min_l >= bound, format!("min chi = {min_chi:.4}, min L = {min_l:.4}, bound {bound:.4}")))
}

fn cycle_census() -> Outcome {
    let rows = count_audit(&presets::power_map(2), &[], 8)?;
    let exact = rows.iter().all(|r| r.count == (1 << r.n) - 1);
    let counts: Vec<usize> = rows.iter().map(|r| r.count).collect();
    Ok((exact && is_monotone(&rows), format!("counts {counts:?}, last ratio {:.5}, monotone {}", rows[7].ratio, is_monotone(&rows))))
}

fn equidistribution() -> Outcome {
    let spec = presets::quadratic();
    let reference = pullback_measure_seeded(&spec, &[c(0.0, 0.0)], 12, 5)?;
    let at_zero = measure_distance(&cycle_measure(&spec, &[c(0.0, 0.0)], 8)?, &reference)?;
    let l = [c(0.0, 0.1)];
    let reference = pullback_measure_seeded(&spec, &l, 12, 5)?;
    let seq: Vec<f64> = [4, 6, 8].iter().map(|&n| measure_distance(&cycle_measure(&spec, &l, n)?, &reference)).collect::<Result<_, _>>()?;
    let decreasing = seq.windows(2).all(|w| w[1] < w[0]);
    Ok((at_zero <= 0.05 && decreasing, format!("d(c=0, n=8) = {at_zero:.4} (tol 0.05), c=0.1i over n=4,6,8: {seq:.4?}")))
}

fn harmonicity_dichotomy() -> Outcome {
    let spec = presets::quadratic();
    let n = 41;
    let mesh = ParamMesh::rect((-1.6, 0.6), (-1.1, 1.1), n, n)?;
    let grid = harmonicity_grid(&spec, &mesh, &GridOptions::new(1))?;
    let pos = |i: usize| {
        let g = mesh.coords(i);
        (g[0] as i64, g[1] as i64)
    };
    // boundary pixels: the pixel cell holds both escaping and bounded samples
    let h = mesh.spacing(0);
    let sub = 8;
    let mut boundary = Vec::new();
    for i in 0..mesh.len() {
        let center = mesh.node(i)[0];
        let mut seen = [false; 2];
        for a in 0..sub {
            for b in 0..sub {
                let off = c((a as f64 + 0.5) / sub as f64 - 0.5, (b as f64 + 0.5) / sub as f64 - 0.5) * h;
                seen[usize::from(escapes(center + off, 1000))] = true;
            }
        }
        if seen[0] && seen[1] {
            boundary.push(pos(i));
        }
    }
    let mask: Vec<usize> = (0..mesh.len()).filter(|&i| grid.class[i] == NodeClass::Bifurcation).collect();
    let near = mask
        .iter()
        .filter(|&&i| {
            let (x, y) = pos(i);
            boundary.iter().any(|&(a, b)| (a - x).pow(2) + (b - y).pow(2) <= 4)
        })
        .count();
    let frac = near as f64 / mask.len().max(1) as f64;
    let in_cardioid = |cc: Complex64| (1.0 - (1.0 - 4.0 * cc).sqrt()).norm() < 1.0;
    // nodes whose whole stencil lies inside the cardioid
    let interior: Vec<usize> = (0..mesh.len())
        .filter(|&i| {
            let cc = mesh.node(i)[0];
            [c(0.0, 0.0), c(h, 0.0), c(-h, 0.0), c(0.0, h), c(0.0, -h)].iter().all(|&d| in_cardioid(cc + d))
        })
        .collect();
    let unstable = interior.iter().filter(|&&i| grid.class[i] != NodeClass::Stable).count();
    Ok((
        unstable == 0 && !mask.is_empty() && frac >= 0.8,
        format!("{} interior-cardioid nodes, {unstable} not stable; mask {} px, {:.1}% within 2 px of escape-time boundary", interior.len(), mask.len(), 100.0 * frac),
    ))
}

fn finite_cycles(spec: &FamilySpec, l: Complex64, periods: std::ops::RangeInclusive<usize>) -> Result<Vec<Cycle>, holoweb::Error> {
    let mut out = Vec::new();
    for n in periods {
        out.extend(find_periodic(spec, &[l], n)?.into_iter().filter(|cy| cy.period == n && cy.points[0].coords()[1].norm() > 1e-9));
    }
    Ok(out)
}

fn motion_fidelity() -> Outcome {
    let spec = presets::quadratic();
    let mesh = ParamMesh::polydisk(&[c(0.0, 0.0)], 0.2, 21)?;
    let beta = finite_cycles(&spec, c(0.0, 0.0), 1..=1)?.into_iter().find(|cy| (cy.points[0].z() - 1.0).norm() < 1e-9).expect("beta at c = 0");
    let motion = track_cycle(&spec, &beta, &mesh)?;
    let mut err: f64 = 0.0;
    let mut untracked = 0;
    for i in 0..mesh.len() {
        let cc = mesh.node(i)[0];
        match (motion.status[i], motion.point(i, 0)) {
            (NodeStatus::Tracked, Some(p)) => err = err.max((p.z() - (1.0 + (1.0 - 4.0 * cc).sqrt()) / 2.0).norm()),
            _ => untracked += 1,
        }
    }
    let swap = monodromy(&spec, &finite_cycles(&spec, c(0.35, 0.0), 1..=1)?, &circle_loop(&[c(0.25, 0.0)], 0.1, 32))?;
    let mut identity = true;
    let mut total = 0;
    for (center, r) in [(c(0.0, 0.0), 0.15), (c(-0.05, 0.05), 0.12)] {
        let lp = circle_loop(&[center], r, 32);
        let cycles = finite_cycles(&spec, lp[0][0], 1..=4)?;
        total += cycles.len();
        let perm = monodromy(&spec, &cycles, &lp)?;
        identity &= perm.iter().enumerate().all(|(i, &j)| i == j);
    }
    Ok((
        err <= 1e-8 && untracked == 0 && swap == vec![1, 0] && identity,
        format!("beta error {err:.2e} (tol 1e-8), {untracked} untracked; loop around 1/4 gives {swap:?}; {total} cycles of period <= 4 on 2 loops, identity {identity}"),
    ))
}

fn graph_disjointness() -> Outcome {
    let spec = presets::quadratic();
    let mesh = ParamMesh::polydisk(&[c(0.0, 0.0)], 0.2, 21)?;
    let web = build_web_levels(&spec, &mesh, &[3, 4, 5], &WebOptions::default())?;
    let rep = graph_intersections(&web, &spec)?;
    let clean = rep.intersections.is_empty() && rep.min_separation > 1e-3;
    let l0 = c(-0.75, 0.16);
    let mesh = ParamMesh::polydisk(&[l0], 0.2, 21)?;
    let web2 = build_web_levels(&spec, &mesh, &[2], &WebOptions { root: None, max_hole_mass: 1.0 })?;
    let rep2 = graph_intersections(&web2, &spec)?;
    let hit = rep2.intersections.iter().find(|x| {
        let periods = [web2.period(x.atoms.0), web2.period(x.atoms.1)];
        periods.contains(&1) && periods.contains(&2) && (x.lambda[0] - c(-0.75, 0.0)).norm() <= 1e-3 && (x.point.z() - c(-0.5, 0.0)).norm() <= 1e-3
    });
    Ok((
        clean && hit.is_some(),
        format!(
            "periods <= 5: {} atoms, {} intersections, min separation {:.2e}; near -3/4: {} reported, match {}",
            web.atoms.len(),
            rep.intersections.len(),
            rep.min_separation,
            rep2.intersections.len(),
            hit.map_or("none".into(), |x| format!("c = {:.6}, z = {:.6}", x.lambda[0], x.point.z()))
        ),
    ))
}

fn web_structure() -> Outcome {
    let spec = presets::quadratic();
    let mesh = ParamMesh::polydisk(&[c(0.0, 0.0)], 0.2, 5)?;
    let web = build_web(&spec, &mesh, 8)?;
    let wsum: f64 = web.weights.iter().sum();
    let counts = web.preimage_counts(&spec)?;
    let two = counts.iter().all(|&n| n == 2);
    let mut worst: f64 = 0.0;
    for node in mesh.subsample(5) {
        let reference = pullback_measure_seeded(&spec, &mesh.node(node), 12, 5)?;
        worst = worst.max(pushforward_check(&web, node, &reference)?);
    }
    Ok((
        (wsum - 1.0).abs() <= 1e-12 && web.is_bijection() && two && worst <= 0.05,
        format!("{} atoms, |sum w - 1| = {:.1e}, bijection {}, all 2 preimages {two}, max pushforward distance {worst:.4} (tol 0.05)", web.atoms.len(), (wsum - 1.0).abs(), web.is_bijection()),
    ))
}

fn contraction() -> Outcome {
    let point = ParamMesh::point(&[]);
    let spec = presets::quadratic_at(c(0.0, 0.0));
    let base = generic_base(&spec, &point, 21)?;
    let orbit = sample_backward_orbit(&spec, &point, &base, 20, BranchChoice::Random, 21)?;
    let sq = inverse_branch_iterate(&spec, &orbit, TubeSpec { radius: 0.1 }, 20)?;
    let cheb = presets::chebyshev();
    let orbit = sample_backward_orbit(&cheb, &point, &[PPoint::affine1(c(2.0, 0.0))], 20, BranchChoice::Nearest, 21)?;
    let ch = inverse_branch_iterate(&cheb, &orbit, TubeSpec { radius: 0.05 }, 20)?;
    let e_sq = (sq.rate / LN_2 - 1.0).abs();
    let e_ch = (ch.rate / 4f64.ln() - 1.0).abs();

    let spec = presets::quadratic();
    let mesh = ParamMesh::polydisk(&[c(0.0, 0.0)], 0.1, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = f64::NEG_INFINITY;
    for o in 0..10 {
        let base = generic_base(&spec, &mesh, 100 + o)?;
        let orbit = sample_backward_orbit(&spec, &mesh, &base, 20, BranchChoice::Random, 200 + o)?;
        for _ in 0..10 {
            let (m, n) = (rng.random_range(1..=10), rng.random_range(1..=10));
            let lhs = u_hat(&spec, &orbit, m + n, m + n)?;
            let rhs = u_hat(&spec, &orbit, m + n, n)? + u_hat(&spec, &orbit, m, m)?;
            worst = worst.max(lhs - rhs);
        }
    }
    Ok((
        e_sq <= 0.1 && e_ch <= 0.1 && sq.verified && ch.verified && worst <= 1e-9,
        format!(
            "A(c=0) = {:.4} ({:.1}% off ln 2), A(Chebyshev) = {:.4} ({:.1}% off ln 4), verified {}/{}, max subadditivity excess {worst:.1e}",
            sq.rate,
            100.0 * e_sq,
            ch.rate,
            100.0 * e_ch,
            sq.verified,
            ch.verified
        ),
    ))
}

fn kingman_bound() -> Outcome {
    let bound = -LN_2 / 2.0;
    let mut ok = true;
    let mut parts = Vec::new();
    for cc in [c(0.0, 0.0), c(-2.0, 0.0), c(0.0, 0.1)] {
        let k = kingman_estimate(&presets::quadratic_at(cc), &ParamMesh::point(&[]), 1, 32, 50, 9)?;
        ok &= k.value <= bound + 0.05 && k.ci.1 < bound + 0.1;
        parts.push(format!("c={cc}: {:.4} [{:.4}, {:.4}]", k.value, k.ci.0, k.ci.1));
    }
    Ok((ok, format!("{} vs {:.4} / CI above {:.4}", parts.join(", "), bound + 0.05, bound + 0.1)))
}

fn misiurewicz() -> Outcome {
    let spec = presets::quadratic();
    let mesh = ParamMesh::rect((-2.1, -1.9), (-0.02, 0.02), 21, 3)?;
    let web = build_web(&spec, &mesh, 1)?;
    let found = misiurewicz_scan(&spec, &mesh, &web, 4)?;
    let best = found.iter().map(|m| (m.lambda[0] - c(-2.0, 0.0)).norm()).fold(f64::INFINITY, f64::min);
    let mesh = ParamMesh::polydisk(&[c(0.0, 0.0)], 0.2, 11)?;
    let web = build_web(&spec, &mesh, 1)?;
    let disk = misiurewicz_scan(&spec, &mesh, &web, 4)?;
    Ok((best <= 1e-3 && disk.is_empty(), format!("closest candidate to -2 at distance {best:.1e}, {} candidates over |c| <= 0.2", disk.len())))
}

fn tempering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut failures = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..=200);
        let eps = 10f64.powf(rng.random_range(-3.0..0.0));
        let scale = rng.random_range(-5.0..5.0);
        let wiggle = rng.random_range(0.0..3.0);
        let psi: Vec<f64> = (1..=len).map(|n| (scale + wiggle * (n as f64).sqrt() * rng.random_range(-1.0..1.0)).exp()).collect();
        let (a, b) = temper_sequence(&psi, eps)?;
        let holds = a <= 1.0
            && b >= 1.0
            && psi.iter().enumerate().all(|(i, &v)| {
                let g = ((i + 1) as f64 * eps).exp();
                a / g <= v && v <= b * g
            });
        failures += usize::from(!holds);
    }
    Ok((failures == 0, format!("{failures} of 1000 sequences violate the bounds")))
}

fn artifacts(seed: u64) -> Result<Vec<Vec<u8>>, holoweb::Error> {
    let spec = presets::quadratic();
    let h = Header::new("acceptance", seed);
    let mesh = ParamMesh::rect((-1.0, 0.2), (-0.6, 0.6), 7, 7)?;
    let mut opts = GridOptions::new(1);
    opts.lyap.seed = seed;
    opts.lyap.depth = 8;
    let grid = harmonicity_grid(&spec, &mesh, &opts)?;
    let l = [c(0.0, 0.1)];
    let cycles = find_periodic(&spec, &l, 4)?;
    let disk = ParamMesh::polydisk(&[c(0.0, 0.0)], 0.1, 5)?;
    let web = build_web(&spec, &disk, 3)?;
    let point = ParamMesh::point(&[]);
    let fiber = presets::quadratic_at(l[0]);
    let base = generic_base(&fiber, &point, seed)?;
    let orbit = sample_backward_orbit(&fiber, &point, &base, 12, BranchChoice::Random, seed)?;
    let report = inverse_branch_iterate(&fiber, &orbit, TubeSpec { radius: 0.05 }, 12)?;
    Ok(vec![
        export::grid_csv(&h, &grid)?,
        export::cycles_csv(&h, 1, 1, &cycles)?,
        export::count_csv(&h, &count_audit(&spec, &l, 5)?)?,
        export::measure_csv(&h, &pullback_measure_seeded(&spec, &l, 10, seed)?)?,
        export::web_tracks_csv(&h, 1, &web)?,
        export::contraction_csv(&h, &report)?,
    ])
}

fn determinism() -> Outcome {
    let a = artifacts(77)?;
    let b = artifacts(77)?;
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    let bytes: usize = a.iter().map(Vec::len).sum();
    Ok((same == a.len(), format!("{same}/{} CSV artifacts byte-identical ({bytes} bytes)", a.len())))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 14] = [
        ("lyapunov_exactness", lyap_exact),
        ("connectedness_locus_flatness", cardioid_flat),
        ("exponent_lower_bounds", exponent_bounds),
        ("cycle_census", cycle_census),
        ("equidistribution", equidistribution),
        ("harmonicity_dichotomy", harmonicity_dichotomy),
        ("motion_fidelity", motion_fidelity),
        ("graph_disjointness", graph_disjointness),
        ("web_structure", web_structure),
        ("inverse_branch_contraction", contraction),
        ("kingman_bound", kingman_bound),
        ("misiurewicz_detection", misiurewicz),
        ("tempering", tempering),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!("{} {:>2} {name}: {detail} [{:.1}s]", if pass { "PASS" } else { "FAIL" }, i + 1, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
