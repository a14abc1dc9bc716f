//! One function per experiment subcommand. Each returns its table and a
//! JSON summary; writing files is left to the caller.

use anyhow::Result;
use dmem_core::concat::{
    clamp_bound, factorization_experiment, lifetime_bound, mc_experiment, p_n_bound,
    single_jump_experiment, threshold,
};
use dmem_core::gadget::{
    basis_state, ladder_lowering, log_log_slope, pure_state, random_contraction, random_pure_state,
    verify,
};
use dmem_core::toric4d::{lifetime_experiment, static_experiment};
use dmem_core::toy2d::qubit_lifetime;
use dmem_core::{
    restricted_mean, CMatrix, Cadence, ConcatParams, GadgetConfig, GadgetError, NoiseModel, Norm,
    Parallelism, RngStream, StabilizerCode, StaticConvention, SystemLiouvillian, TieRule,
    ToomParams, ToyParams, Tracked, Verdict,
};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::args::*;
use crate::output::{num, opt, Table};
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Violated,
    Inconclusive,
}

pub struct RunResult {
    pub file: &'static str,
    pub table: Table,
    pub summary: Value,
    pub status: Status,
}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

pub fn toric_lifetime(a: &ToricLifetimeArgs, par: Parallelism) -> Result<RunResult> {
    let mut grid = Vec::new();
    for &n in &a.n {
        for &ge in &a.gamma_eps {
            let p = ToomParams {
                n,
                gamma_c: a.gamma_c,
                gamma_eps: ge,
                check_interval: a.check_interval,
                t_max: a.t_max,
                max_sweeps: a.max_sweeps.unwrap_or(4 * n.max(1)),
                noise: match a.noise {
                    NoiseArg::Depolarizing => NoiseModel::Depolarizing,
                    NoiseArg::Thinned => NoiseModel::Thinned,
                },
                tracked: a.observable.map_or(Tracked::All, Tracked::Single),
            };
            p.validate().map_err(usage)?;
            grid.push(p);
        }
    }
    let mut t = Table::new([
        "N",
        "gamma_eps",
        "mean_lifetime",
        "stderr",
        "n_trials",
        "n_censored",
        "restricted_mean",
        "restricted_stderr",
    ]);
    for p in &grid {
        let (est, outcomes) = lifetime_experiment(p, a.trials.trials, a.trials.seed, par)?;
        let (rm, rs) = restricted_mean(&outcomes, p.t_max);
        eprintln!(
            "N={} gamma_eps={}: mean {} ({} censored)",
            p.n,
            p.gamma_eps,
            opt(est.mean),
            est.n_censored
        );
        t.push(vec![
            p.n.to_string(),
            num(p.gamma_eps),
            opt(est.mean),
            opt(est.std_err),
            est.n_trials.to_string(),
            est.n_censored.to_string(),
            opt(rm),
            opt(rs),
        ]);
    }
    Ok(RunResult {
        file: "lifetime.csv",
        table: t,
        summary: json!({}),
        status: Status::Ok,
    })
}

pub fn toric_static(a: &ToricStaticArgs, par: Parallelism) -> Result<RunResult> {
    let conv = match a.convention {
        ConventionArg::Half => StaticConvention::Half,
        ConventionArg::Full => StaticConvention::Full,
    };
    for &q in &a.q {
        if !(0.0..=1.0).contains(&q) {
            return Err(usage(format!("q = {q} is not a probability")));
        }
    }
    if a.n.contains(&0) {
        return Err(usage("N must be at least 1"));
    }
    let mut t = Table::new(["N", "q", "convention", "success_rate", "stderr", "n_trials"]);
    for &n in &a.n {
        for &q in &a.q {
            let sweeps = a.max_sweeps.unwrap_or(4 * n);
            let p = static_experiment(n, q, conv, sweeps, a.trials.trials, a.trials.seed, par)?;
            eprintln!("N={n} q={q}: success {}", p.rate());
            t.push(vec![
                n.to_string(),
                num(q),
                conv.name().to_string(),
                num(p.rate()),
                num(p.std_err()),
                p.n_trials.to_string(),
            ]);
        }
    }
    Ok(RunResult {
        file: "static.csv",
        table: t,
        summary: json!({}),
        status: Status::Ok,
    })
}

pub fn toy2d(a: &ToyArgs, par: Parallelism) -> Result<RunResult> {
    let cadence = match a.cadence {
        CadenceArg::Periodic => Cadence::Periodic(a.check_interval),
        CadenceArg::Continuous => Cadence::Continuous,
    };
    let tie = match a.tie {
        TieArg::TieFails => TieRule::TieFails,
        TieArg::Strict => TieRule::Strict,
    };
    let mut bases = Vec::new();
    for &gp in &a.gamma_phase {
        for &gd in &a.gamma_dep {
            let base = ToyParams {
                n: 1,
                gamma_c: a.gamma_c,
                gamma_phase: gp,
                gamma_dep: gd,
                t_max: a.t_max,
                cadence,
                tie,
            };
            for &n in &a.n {
                ToyParams { n, ..base }.validate().map_err(usage)?;
            }
            bases.push(base);
        }
    }
    let mut t = Table::new([
        "N",
        "gamma_phase",
        "gamma_dep",
        "majority_lifetime",
        "stderr",
        "parity_lifetime",
        "qubit_lifetime",
        "n_censored",
        "n_trials",
    ]);
    let mut scans = Vec::new();
    for base in &bases {
        let scan = qubit_lifetime(base, &a.n, a.trials.trials, a.trials.seed, par)?;
        for r in &scan.rows {
            t.push(vec![
                r.n.to_string(),
                num(base.gamma_phase),
                num(base.gamma_dep),
                opt(r.majority.mean),
                opt(r.majority.std_err),
                opt(r.parity),
                opt(r.qubit),
                r.majority.n_censored.to_string(),
                r.majority.n_trials.to_string(),
            ]);
        }
        eprintln!(
            "gamma_phase={} gamma_dep={}: best N {:?}",
            base.gamma_phase, base.gamma_dep, scan.best_n
        );
        scans.push(json!({
            "gamma_phase": base.gamma_phase,
            "gamma_dep": base.gamma_dep,
            "best_n": scan.best_n,
            "gain": scan.gain(),
        }));
    }
    Ok(RunResult {
        file: "toy2d.csv",
        table: t,
        summary: json!({ "scans": scans }),
        status: Status::Ok,
    })
}

pub fn concat_bounds(a: &ConcatBoundsArgs) -> Result<RunResult> {
    if a.k == 0 || !(a.delta > 0.0 && a.delta <= 1.0) || !(a.gamma > 0.0) || !(a.gamma_noise >= 0.0)
    {
        return Err(usage(
            "need k ≥ 1, 0 < delta ≤ 1, gamma > 0 and gamma_noise ≥ 0",
        ));
    }
    let top = a.m.iter().copied().max().unwrap_or(0);
    let mut header = vec!["M".to_string(), "threshold".to_string()];
    header.extend((1..=top).map(|n| format!("p_{n}")));
    header.extend(["lifetime_bound".to_string(), "vacuous".to_string()]);
    let mut t = Table::new(header);
    let th = threshold(a.k, a.delta, a.gamma);
    for &m in &a.m {
        let mut row = vec![m.to_string(), num(th)];
        let mut vacuous = false;
        for n in 1..=top {
            if n <= m {
                let (p, v) = clamp_bound(p_n_bound(n, a.gamma_noise, a.gamma, a.delta, a.k));
                vacuous |= v;
                row.push(num(p));
            } else {
                row.push(String::new());
            }
        }
        row.push(num(lifetime_bound(m, a.gamma_noise, a.gamma, a.delta, a.k)));
        row.push(vacuous.to_string());
        t.push(row);
    }
    println!("threshold {th}");
    Ok(RunResult {
        file: "bounds.csv",
        table: t,
        summary: json!({ "threshold": th, "below_threshold": a.gamma_noise < th }),
        status: Status::Ok,
    })
}

pub fn concat_sim(a: &ConcatSimArgs, par: Parallelism) -> Result<RunResult> {
    let code = StabilizerCode::five_qubit();
    let mut grid = Vec::new();
    for &m in &a.m {
        for &gn in &a.gamma_noise {
            let p = ConcatParams::new(m, a.gamma, a.delta, gn, a.t_max);
            p.validate().map_err(usage)?;
            grid.push(p);
        }
    }
    let samples = a.samples.unwrap_or(a.trials.trials);
    if samples < 2 && a.m.iter().any(|&m| m > 0) {
        return Err(usage(
            "the factorization estimate needs at least two samples",
        ));
    }
    let top = a.m.iter().copied().max().unwrap_or(0);
    let mut header = vec!["M".to_string(), "gamma_noise".to_string()];
    for h in 1..=top {
        header.push(format!("has_error_depth_{h}"));
        header.push(format!("has_error_depth_{h}_stderr"));
    }
    header.extend(
        [
            "failure_rate",
            "failure_rate_stderr",
            "factorization_lhs",
            "factorization_rhs",
            "factorization_stderr",
            "n_trials",
            "n_failures",
        ]
        .map(String::from),
    );
    let mut t = Table::new(header);
    for p in &grid {
        let s = mc_experiment(&code, p, a.trials.trials, a.trials.seed, par)?;
        let mut row = vec![p.m.to_string(), num(p.gamma_noise())];
        for h in 0..top {
            match s.has_error.get(h) {
                Some(&(v, e)) => {
                    row.push(num(v));
                    row.push(num(e));
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        row.push(num(s.failure_rate));
        row.push(num(s.failure_rate_err));
        if p.m > 0 {
            let f =
                factorization_experiment(&code, p, p.m, a.t_sample, samples, a.trials.seed, par)?;
            row.extend([num(f.joint), num(f.product), num(f.std_err)]);
        } else {
            row.extend([String::new(), String::new(), String::new()]);
        }
        row.push(s.n_trials.to_string());
        row.push(s.n_failures.to_string());
        eprintln!(
            "M={} gamma_noise={}: failure rate {}",
            p.m,
            p.gamma_noise(),
            s.failure_rate
        );
        t.push(row);
    }
    Ok(RunResult {
        file: "concat.csv",
        table: t,
        summary: json!({}),
        status: Status::Ok,
    })
}

pub fn concat_singlejump(a: &SingleJumpArgs, par: Parallelism) -> Result<RunResult> {
    let code = StabilizerCode::five_qubit();
    let grid: Vec<ConcatParams> =
        a.m.iter()
            .map(|&m| ConcatParams::new(m, a.gamma, 1.0, a.gamma_noise, a.t_max))
            .collect();
    for p in &grid {
        p.validate().map_err(usage)?;
    }
    let mut t = Table::new([
        "M",
        "n_qubits",
        "gamma_noise",
        "mean_lifetime",
        "stderr",
        "failure_rate",
        "failure_rate_stderr",
        "n_trials",
        "n_censored",
    ]);
    let mut rates = Vec::new();
    for p in &grid {
        let s = single_jump_experiment(&code, p, a.trials.trials, a.trials.seed, par)?;
        eprintln!("M={}: failure rate {}", p.m, s.failure_rate);
        rates.push(json!({ "M": p.m, "failure_rate": s.failure_rate }));
        t.push(vec![
            p.m.to_string(),
            5usize.pow(p.m as u32).to_string(),
            num(p.gamma_noise()),
            opt(s.mean_lifetime),
            opt(s.lifetime_err),
            num(s.failure_rate),
            num(s.failure_rate_err),
            s.n_trials.to_string(),
            (s.n_trials - s.n_failures).to_string(),
        ]);
    }
    Ok(RunResult {
        file: "singlejump.csv",
        table: t,
        summary: json!({ "rates": rates }),
        status: Status::Ok,
    })
}

fn initial_state(kind: InitialArg, d: usize, rng: &mut RngStream) -> CMatrix {
    match kind {
        InitialArg::Excited => basis_state(d, d - 1),
        InitialArg::Ground => basis_state(d, 0),
        InitialArg::Plus => pure_state(&vec![Complex64::new(1.0 / (d as f64).sqrt(), 0.0); d]),
        InitialArg::Mixed => CMatrix::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0),
        InitialArg::Random => random_pure_state(d, rng),
    }
}

pub fn gadget_verify(a: &GadgetArgs) -> Result<RunResult> {
    if a.d == 0 {
        return Err(usage("d must be at least 1"));
    }
    let l = match a.l {
        JumpArg::SigmaMinus => ladder_lowering(a.d),
        JumpArg::Random => random_contraction(a.d, &mut RngStream::new(a.seed, 0)),
    };
    let rho = initial_state(a.initial, a.d, &mut RngStream::new(a.seed, 1));
    // Unit-norm shape, rescaled to E ε² for each ε.
    let shape = match (a.lsys, a.e > 0.0) {
        (LsysArg::Zero, _) | (_, false) => SystemLiouvillian::Zero,
        (LsysArg::Auto | LsysArg::Dephasing, true) => SystemLiouvillian::dephasing(a.d, 1.0),
        (LsysArg::Random, true) => {
            SystemLiouvillian::random(a.d, 1.0, &mut RngStream::new(a.seed, 2))
        }
    };
    let norm = match a.norm {
        NormArg::Trace => Norm::Trace,
        NormArg::Operator => Norm::Operator,
    };
    let mut configs = Vec::new();
    for &eps in &a.epsilon {
        let mut cfg = GadgetConfig::qubit(eps, a.e);
        cfg.l = l.clone();
        cfg.l_sys = shape.scaled(a.e * eps * eps);
        cfg.tau_max = a.tau_max;
        cfg.dt = a.dt;
        cfg.sample_every = a.sample_every;
        cfg.validate().map_err(usage)?;
        configs.push(cfg);
    }

    let mut header = vec!["epsilon".to_string(), "tau".to_string()];
    for pre in ["residual", "bound", "pass"] {
        header.extend((1..=4).map(|i| format!("{pre}_{i}")));
    }
    let mut t = Table::new(header);
    let mut status = Status::Ok;
    let mut per_eps = Vec::new();
    let mut scaling = (Vec::new(), Vec::new());
    for cfg in &configs {
        let eps = cfg.epsilon;
        let report = match verify(cfg, &rho, norm) {
            Ok(r) => r,
            Err(e @ GadgetError::NotConverged { .. }) => {
                eprintln!("epsilon={eps}: {e}");
                status = Status::Inconclusive;
                per_eps.push(
                    json!({ "epsilon": eps, "verdict": "not-converged", "error": e.to_string() }),
                );
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let ineq = &report.inequalities;
        for (i, &tau) in report.taus.iter().enumerate() {
            let mut row = vec![num(eps), num(tau)];
            row.extend(ineq.iter().map(|q| num(q.residual[i])));
            row.extend(ineq.iter().map(|q| num(q.bound[i])));
            row.extend(
                ineq.iter()
                    .map(|q| (q.residual[i] <= q.bound[i]).to_string()),
            );
            t.push(row);
        }
        let verdict = report.verdict();
        match verdict {
            Verdict::Violated => status = Status::Violated,
            Verdict::Inconclusive if status == Status::Ok => status = Status::Inconclusive,
            _ => {}
        }
        let window = if eps > 0.0 {
            3.0 * (1.0 / eps).ln()
        } else {
            0.0
        };
        let late = report.final_residual_after(window);
        if eps > 0.0 && late > 0.0 {
            scaling.0.push(eps);
            scaling.1.push(late);
        }
        eprintln!("epsilon={eps}: {}", verdict.name());
        per_eps.push(json!({
            "epsilon": eps,
            "verdict": verdict.name(),
            "inequalities": ineq.iter().map(|q| json!({
                "name": q.name,
                "verdict": q.verdict.name(),
                "max_excess": q.max_excess(),
                "worst_tau": report.taus[q.worst_index],
            })).collect::<Vec<_>>(),
            "integrator_tol": report.integrator_tol,
            "late_residual": late,
        }));
    }
    let slope = (scaling.0.len() >= 2).then(|| log_log_slope(&scaling.0, &scaling.1));
    if let Some(s) = slope {
        println!("residual slope {s}");
    }
    Ok(RunResult {
        file: "gadget.csv",
        table: t,
        summary: json!({ "norm": norm.name(), "epsilons": per_eps, "residual_slope": slope }),
        status,
    })
}
