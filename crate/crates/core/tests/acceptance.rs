//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the lines are always shown. Exits non-zero on a
//! failing criterion only when `DMEM_ACCEPTANCE_STRICT=1`; set
//! `DMEM_ACCEPTANCE_ONLY=3,5` to run a subset.

use std::collections::BTreeSet;
use std::time::Instant;

use dmem_core::concat::{
    self, factorization_experiment, lifetime_bound, mc_experiment, p_n_bound, p_n_recursive,
    threshold,
};
use dmem_core::gadget::{
    basis_state, check_bounds, evolve_full, evolve_target, pure_state, residual_scaling,
};
use dmem_core::toric4d::{lifetime_experiment, static_experiment, StaticConvention};
use dmem_core::toy2d::{majority_lifetime, qubit_lifetime, SpinGrid};
use dmem_core::{
    restricted_mean, Cadence, CellId, ConcatParams, Estimate, GadgetConfig, Grid, Lattice4D, Norm,
    Parallelism, PauliFrame, Proportion, RngStream, Sector, SectorKind, SectorState,
    StabilizerCode, TieRule, ToomParams, ToyParams, Verdict,
};
use num_complex::Complex64;
use rand::Rng;

const PAR: Parallelism = Parallelism(0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let t = threshold(5, 0.2, 1.0);
    outcome(t == 1.6e-3, format!("threshold(5, 0.2, 1) = {t:e}"))
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for gn in [2e-4, 8e-4, 1.6e-3, 3e-3] {
        for (gc, delta, k) in [(1.0, 0.2, 5), (2.0, 0.5, 7), (1.0, 1.0, 1)] {
            let rec = p_n_recursive(6, gn, gc, delta, k);
            for (i, &r) in rec.iter().enumerate() {
                let c = p_n_bound(i as u32 + 1, gn, gc, delta, k);
                worst = worst.max(((c - r) / r).abs());
            }
        }
    }
    let bare = [1e-4, 8e-4, 0.37]
        .iter()
        .all(|&g| lifetime_bound(0, g, 1.0, 0.2, 5) == g);
    outcome(
        worst <= 1e-12 && bare,
        format!("max relative gap {worst:.2e} over n = 1..6; lifetime_bound(M=0) = Γε: {bare}"),
    )
}

fn criterion_3() -> Outcome {
    let code = StabilizerCode::five_qubit();
    let params = ConcatParams::new(1, 1.0, 0.2, 8e-4, 1e5);
    let s = mc_experiment(&code, &params, 2000, 3, PAR).expect("valid parameters");
    let p1 = p_n_bound(1, 8e-4, 1.0, 0.2, 5);
    let bound = lifetime_bound(1, 8e-4, 1.0, 0.2, 5);
    let (h, h_err) = s.has_error[0];
    let has_ok = h - 3.0 * h_err <= p1;
    let rate_ok = s.failure_rate - 3.0 * s.failure_rate_err <= bound;
    outcome(
        has_ok && rate_ok,
        format!(
            "HasError = {h:.5} ± {h_err:.5} vs p1 = {p1:.4}; failure rate = {:.3e} ± {:.1e} vs {bound:.1e} ({} failures)",
            s.failure_rate, s.failure_rate_err, s.n_failures
        ),
    )
}

fn criterion_4() -> Outcome {
    let code = StabilizerCode::five_qubit();
    let mut pass = true;
    let mut parts = Vec::new();
    for gn in [4e-3, 8e-4] {
        let params = ConcatParams::new(2, 1.0, 0.2, gn, 200.0);
        let f = factorization_experiment(&code, &params, 2, 200.0, 20_000, 4, PAR)
            .expect("valid parameters");
        pass &= f.difference.abs() <= 3.0 * f.std_err;
        parts.push(format!(
            "Γn={gn}: ⟨∏E⟩ = {:.3e}, ∏⟨E⟩ = {:.3e}, diff = {:.2}σ",
            f.joint,
            f.product,
            f.difference / f.std_err
        ));
    }
    outcome(
        pass,
        format!("{} (20000 samples, t = 200)", parts.join("; ")),
    )
}

/// First grid point where `upper − lower` turns negative, interpolated from
/// the last positive point before it.
fn crossing(qs: &[f64], lower: &[Proportion], upper: &[Proportion]) -> Option<f64> {
    let d: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(a, b)| b.rate() - a.rate())
        .collect();
    let j = d.iter().position(|&x| x < 0.0)?;
    let i = (0..j).rev().find(|&i| d[i] > 0.0)?;
    let w = d[i] / (d[i] - d[j]);
    Some(qs[i] + w * (qs[j] - qs[i]))
}

fn criterion_5() -> Outcome {
    let qs: Vec<f64> = (2..=16).map(|i| i as f64 * 0.01).collect();
    let mut lines = Vec::new();
    let mut any = false;
    for conv in [StaticConvention::Half, StaticConvention::Full] {
        let curves: Vec<Vec<Proportion>> = [3usize, 5, 7]
            .iter()
            .map(|&n| {
                qs.iter()
                    .map(|&q| static_experiment(n, q, conv, 4 * n, 500, 5, PAR).expect("valid"))
                    .collect()
            })
            .collect();
        let pairs = [(0, 1), (1, 2), (0, 2)];
        let xs: Vec<Option<f64>> = pairs
            .iter()
            .map(|&(a, b)| crossing(&qs, &curves[a], &curves[b]))
            .collect();
        let in_band = xs
            .iter()
            .all(|x| x.is_some_and(|q| (0.04..=0.12).contains(&q)));
        let ordered = xs[2].is_some_and(|star| {
            qs.iter().enumerate().all(|(i, &q)| {
                let (s3, s7) = (&curves[0][i], &curves[2][i]);
                let sigma = (s3.std_err().powi(2) + s7.std_err().powi(2)).sqrt();
                if q < star {
                    s7.rate() - s3.rate() >= -2.0 * sigma
                } else {
                    s3.rate() - s7.rate() >= -2.0 * sigma
                }
            })
        });
        let ok = in_band && ordered;
        any |= ok;
        let fmt = |x: &Option<f64>| x.map_or("none".to_string(), |q| format!("{q:.4}"));
        lines.push(format!(
            "{}: q*(3,5) = {}, q*(5,7) = {}, q*(3,7) = {}, ordering {}",
            conv.name(),
            fmt(&xs[0]),
            fmt(&xs[1]),
            fmt(&xs[2]),
            if ordered { "ok" } else { "broken" }
        ));
    }
    outcome(any, lines.join("; "))
}

struct Lifetime {
    mean: f64,
    err: f64,
    censored: usize,
}

fn toric_lifetime(n: usize, ge: f64, trials: usize, t_max: f64) -> Lifetime {
    let params = ToomParams::new(n, ge, t_max);
    let (est, outs) = lifetime_experiment(&params, trials, 6, PAR).expect("valid parameters");
    let (mean, err) = restricted_mean(&outs, t_max);
    Lifetime {
        mean: mean.expect("trials ran"),
        err: err.unwrap_or(0.0),
        censored: est.n_censored,
    }
}

fn criterion_6() -> Outcome {
    // Restricted means count censored trials at t_max, a lower bound.
    let l3 = toric_lifetime(3, 0.002, 200, 1e6);
    let l5 = toric_lifetime(5, 0.002, 200, 3e5);
    let sigma = (l5.err.powi(2) + 4.0 * l3.err.powi(2)).sqrt();
    let low_ok = l5.mean - 2.0 * l3.mean >= 2.0 * sigma;
    let h3 = toric_lifetime(3, 0.02, 200, 1e5);
    let h5 = toric_lifetime(5, 0.02, 200, 1e5);
    let high_ok = h5.mean <= h3.mean + 2.0 * (h5.err.powi(2) + h3.err.powi(2)).sqrt();
    let grid = [0.002, 0.008, 0.010, 0.012, 0.016, 0.02];
    let mut ratios = vec![(l5.mean / l3.mean).ln()];
    for &ge in &grid[1..grid.len() - 1] {
        let a = toric_lifetime(3, ge, 200, 1e5);
        let b = toric_lifetime(5, ge, 200, 1e5);
        ratios.push((b.mean / a.mean).ln());
    }
    ratios.push((h5.mean / h3.mean).ln());
    let star = ratios.windows(2).zip(grid.windows(2)).find_map(|(r, g)| {
        (r[0] > 0.0 && r[1] <= 0.0).then(|| {
            let w = r[0] / (r[0] - r[1]);
            (g[0].ln() + w * (g[1].ln() - g[0].ln())).exp()
        })
    });
    let cross_ok = star.is_some_and(|s| (0.002..=0.008).contains(&s));
    outcome(
        low_ok && high_ok && cross_ok,
        format!(
            "Γε=0.002: N3 = {:.0} ± {:.0}, N5 ≥ {:.0} ± {:.0} ({} censored at 3e5) [{}]; \
             Γε=0.02: N3 = {:.2} ± {:.2}, N5 = {:.2} ± {:.2} [{}]; crossing Γε* = {} [{}]",
            l3.mean,
            l3.err,
            l5.mean,
            l5.err,
            l5.censored,
            if low_ok { "ok" } else { "fail" },
            h3.mean,
            h3.err,
            h5.mean,
            h5.err,
            if high_ok { "ok" } else { "fail" },
            star.map_or("none".into(), |s| format!("{s:.4}")),
            if cross_ok { "ok" } else { "fail" },
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut single = ToyParams::new(1, 0.01, 0.0, 1e9);
    single.cadence = Cadence::Continuous;
    let e = majority_lifetime(&single, 10_000, 7, PAR).expect("valid");
    let (m, se) = (e.mean.unwrap(), e.std_err.unwrap());
    let exact_ok = (m - 100.0).abs() <= 3.0 * se;

    let ratio_of = |tie: TieRule| {
        let mut p = ToyParams::new(1, 0.01, 0.0, 1e9);
        p.tie = tie;
        let one = majority_lifetime(&p, 2000, 8, PAR)
            .expect("valid")
            .mean
            .unwrap();
        p.n = 2;
        let two = majority_lifetime(&p, 2000, 9, PAR)
            .expect("valid")
            .mean
            .unwrap();
        two / one
    };
    let ratio = ratio_of(TieRule::TieFails);
    let ratio_strict = ratio_of(TieRule::Strict);
    let ratio_ok = (25.0..=100.0).contains(&ratio);

    let base = ToyParams::new(1, 0.1, 5e-5, 1e9);
    let scan = qubit_lifetime(&base, &[1, 2, 3, 4, 5, 6], 400, 10, PAR).expect("valid");
    let gain = scan.gain().unwrap_or(0.0);
    let scan_ok = scan.best_n == Some(4) && gain >= 30.0;
    let qubits: Vec<String> = scan
        .rows
        .iter()
        .map(|r| format!("{:.0}", r.qubit.unwrap_or(f64::NAN)))
        .collect();
    outcome(
        exact_ok && ratio_ok && scan_ok,
        format!(
            "N=1: {m:.2} ± {se:.2} vs 100 [{}]; 2×2/1×1 = {ratio:.1} (strict ties {ratio_strict:.1}) [{}]; \
             qubit lifetimes N=1..6 = [{}], argmax N = {:?}, gain ×{gain:.0} [{}]",
            if exact_ok { "ok" } else { "fail" },
            if ratio_ok { "ok" } else { "fail" },
            qubits.join(", "),
            scan.best_n,
            if scan_ok { "ok" } else { "fail" },
        ),
    )
}

fn criterion_8() -> Outcome {
    let c = |x: f64| Complex64::new(x, 0.0);
    let states = [
        ("excited", basis_state(2, 1)),
        ("ground", basis_state(2, 0)),
        ("plus", pure_state(&[c(1.0), c(1.0)])),
        ("mixed", (basis_state(2, 0) + basis_state(2, 1)) * c(0.5)),
    ];
    let mut trace_fail = Vec::new();
    let mut op_fail = Vec::new();
    let mut inconclusive = 0;
    for e in [0.0, 1.0] {
        for eps in [0.01, 0.05, 0.1] {
            let cfg = GadgetConfig::qubit(eps, e);
            for (name, rho) in &states {
                let full = evolve_full(&cfg, rho).expect("integrator converged");
                let target = evolve_target(&cfg, rho).expect("integrator converged");
                for (norm, fails) in [
                    (Norm::Trace, &mut trace_fail),
                    (Norm::Operator, &mut op_fail),
                ] {
                    let rep = check_bounds(&cfg, &full, &target, norm).expect("same grid");
                    for ineq in &rep.inequalities {
                        match ineq.verdict {
                            Verdict::Holds => {}
                            Verdict::Inconclusive => inconclusive += 1,
                            Verdict::Violated => fails.push(format!(
                                "{} E={e} ε={eps} {name} (+{:.1e} at τ={:.2})",
                                ineq.name,
                                ineq.max_excess(),
                                rep.taus[ineq.worst_index]
                            )),
                        }
                    }
                }
            }
        }
    }
    let mut slopes = Vec::new();
    for e in [0.0, 1.0] {
        let cfg = GadgetConfig::qubit(0.02, e);
        let (_, slope) = residual_scaling(&cfg, &[0.02, 0.04, 0.08], &basis_state(2, 1), 3.0)
            .expect("integrator converged");
        slopes.push(slope);
    }
    let slope_ok = slopes.iter().all(|&s| s >= 3.5);
    let pass = trace_fail.is_empty() && inconclusive == 0 && slope_ok;
    outcome(
        pass,
        format!(
            "trace-norm violations: {} [{}]; operator-norm violations: {}; inconclusive: {inconclusive}; \
             slope beyond τ = 3 ln(1/ε): E=0 {:.2}, E=1 {:.2}",
            trace_fail.len(),
            trace_fail.join("; "),
            op_fail.len(),
            slopes[0],
            slopes[1]
        ),
    )
}

fn boundary_of_boundary(lat: &Lattice4D) -> bool {
    let cubes_ok = (0..lat.num_cubes() as u32).all(|c| {
        let mut parity = vec![false; lat.num_edges()];
        for &f in lat.cube_faces_idx(c) {
            for &e in lat.face_edges_idx(f) {
                parity[e as usize] ^= true;
            }
        }
        !parity.contains(&true)
    });
    // Edge-type and cube-type checks overlap on an even number of faces.
    let commute = (0..lat.num_edges() as u32).all(|e| {
        let faces: BTreeSet<u32> = lat.edge_faces_idx(e).iter().copied().collect();
        (0..lat.num_cubes() as u32).all(|c| {
            lat.cube_faces_idx(c)
                .iter()
                .filter(|f| faces.contains(f))
                .count()
                % 2
                == 0
        })
    });
    cubes_ok && commute
}

fn duality_isomorphism(lat: &Lattice4D) -> bool {
    let faces: Vec<CellId> = (0..lat.num_faces() as u32).map(|f| lat.face(f)).collect();
    let images: BTreeSet<CellId> = faces.iter().map(|&f| lat.reflected_dual(f)).collect();
    images.len() == faces.len()
        && faces.iter().all(|&f| {
            let g = lat.reflected_dual(f);
            let edges = lat.face_edges(f).unwrap();
            let cubes = lat.face_cubes(g).unwrap();
            let lower =
                BTreeSet::from([lat.reflected_dual(edges[0]), lat.reflected_dual(edges[1])]);
            let all: BTreeSet<CellId> = edges.iter().map(|&e| lat.reflected_dual(e)).collect();
            lower == BTreeSet::from([cubes[0], cubes[1]])
                && all == cubes.iter().copied().collect::<BTreeSet<_>>()
        })
}

fn fuzz_toric(n: usize, kind: SectorKind) -> bool {
    let lat = Lattice4D::build(n).unwrap();
    let sector = Sector::new(&lat, kind);
    let mut st = SectorState::new(&sector);
    let mut rng = RngStream::new(90, n as u64);
    let mut ok = true;
    for step in 0..100_000 {
        if st.active_count() > 0 && rng.random_bool(0.5) {
            let r = st.nth_active(rng.random_range(0..st.active_count()));
            st.apply_flip(r);
        } else {
            st.apply_flip(rng.random_range(0..sector.num_faces()));
        }
        if step % 5000 == 0 {
            ok &= st.is_consistent();
        }
    }
    ok && st.is_consistent()
}

fn fuzz_toy(n: usize) -> bool {
    let grid = Grid::new(n).unwrap();
    let mut spins = SpinGrid::new(&grid);
    let mut rng = RngStream::new(91, n as u64);
    let mut ok = true;
    for step in 0..100_000 {
        spins.flip(rng.random_range(0..grid.sites()));
        if step % 5000 == 0 {
            ok &= spins.is_consistent();
        }
    }
    ok && spins.is_consistent()
}

fn fuzz_concat(m: usize) -> bool {
    let code = StabilizerCode::five_qubit();
    let mut frame = PauliFrame::new(&code, m).unwrap();
    let mut rng = RngStream::new(92, m as u64);
    let mut ok = true;
    for step in 0..100_000 {
        if rng.random_bool(0.6) {
            let leaf = rng.random_range(0..frame.num_qubits());
            frame.apply_physical(leaf, rng.random_range(1..4));
        } else {
            let h = rng.random_range(1..=m);
            let i = rng.random_range(0..frame.blocks_at(h));
            frame.recovery_event(h, i);
        }
        if step % 5000 == 0 {
            ok &= frame.is_consistent();
        }
    }
    ok && frame.is_consistent()
}

fn deterministic() -> bool {
    let pars = [Parallelism(1), Parallelism(2), Parallelism(0)];
    let toric: Vec<(Estimate, _)> = pars
        .iter()
        .map(|&p| lifetime_experiment(&ToomParams::new(3, 0.01, 2000.0), 32, 11, p).unwrap())
        .collect();
    let stat: Vec<Proportion> = pars
        .iter()
        .map(|&p| static_experiment(5, 0.08, StaticConvention::Half, 20, 64, 12, p).unwrap())
        .collect();
    let toy: Vec<Estimate> = pars
        .iter()
        .map(|&p| majority_lifetime(&ToyParams::new(3, 0.1, 0.0, 1e6), 64, 13, p).unwrap())
        .collect();
    let code = StabilizerCode::five_qubit();
    let cp = ConcatParams::new(2, 1.0, 0.2, 4e-3, 1000.0);
    let conc: Vec<concat::ConcatSummary> = pars
        .iter()
        .map(|&p| mc_experiment(&code, &cp, 32, 14, p).unwrap())
        .collect();
    toric.windows(2).all(|w| w[0] == w[1])
        && stat.windows(2).all(|w| w[0] == w[1])
        && toy.windows(2).all(|w| w[0] == w[1])
        && conc.windows(2).all(|w| w[0] == w[1])
}

fn criterion_9() -> Outcome {
    let lats: Vec<Lattice4D> = [2, 3]
        .iter()
        .map(|&n| Lattice4D::build(n).unwrap())
        .collect();
    let bob = lats.iter().all(boundary_of_boundary);
    let iso = lats.iter().all(duality_isomorphism);
    let fuzz = [2, 3]
        .iter()
        .all(|&n| fuzz_toric(n, SectorKind::Edge) && fuzz_toric(n, SectorKind::Cube))
        && fuzz_toy(3)
        && fuzz_toy(6)
        && fuzz_concat(2)
        && fuzz_concat(3);
    let distance = StabilizerCode::five_qubit().distance() == 3;
    let det = deterministic();
    outcome(
        bob && iso && fuzz && distance && det,
        format!(
            "boundary-of-boundary {bob}, duality isomorphism {iso}, 1e5-event fuzz {fuzz}, \
             distance 3 {distance}, parallelism-invariant outputs {det}"
        ),
    )
}

fn main() {
    let only: Option<BTreeSet<usize>> = std::env::var("DMEM_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var("DMEM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "concat threshold exactness", criterion_1),
        (2, "concat bound consistency", criterion_2),
        (3, "concat Monte Carlo vs bounds", criterion_3),
        (4, "Enabled factorization", criterion_4),
        (5, "4D static decoder threshold", criterion_5),
        (6, "4D dynamic lifetime", criterion_6),
        (7, "2D toy model", criterion_7),
        (8, "gadget bounds", criterion_8),
        (9, "structural properties", criterion_9),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let status = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id} {status} {name} ({:.1}s): {}",
            start.elapsed().as_secs_f64(),
            out.detail
        );
        if !out.pass {
            failed.push(id);
        }
    }
    println!("acceptance: {} failing {:?}", failed.len(), failed);
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
