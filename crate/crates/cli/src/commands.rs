use std::f64::consts::PI;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use shearecho::blowup::{geometric_grid, inflation_point, rho_hat, sobolev_trajectory, BlowupSpec, InflationPoint, NormSeries};
use shearecho::diagnostics::{
    bootstrap_check, bootstrap_sample_times, chain_report, coefficient_bounds, fit_cube_root, lorentzian_line_integral, persistence_check,
    resonant_mass, resonant_time, thresholds, BootstrapReport, ChainReport, FitReport,
};
use shearecho::modes::simulate as run_sim;
use shearecho::wave::{fit_power_law, inviscid_exponent, power_branch_data, solve_wave_ode, verify_f_bound, wave_envelope};
use shearecho::{Params, ThresholdFactors, Traj};

use crate::config::RunConfig;
use crate::output::{num, write_json, Csv};
use crate::CliError;

pub struct Ctx {
    pub cfg: RunConfig,
    pub base: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    seed: u64,
    version: &'a str,
}

fn meta(cmd: &str, seed: u64) -> Meta<'_> {
    Meta {
        command: cmd,
        seed,
        version: env!("CARGO_PKG_VERSION"),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Serialize)]
struct InviscidFit {
    alpha: f64,
    exponent: f64,
    expected: f64,
}

#[derive(Serialize)]
struct WaveSummary<'a> {
    meta: Meta<'a>,
    k_wave: u32,
    f0: f64,
    g0: f64,
    g_constant: bool,
    /// Absent when the decay bound does not apply (`nu = 0`, `alpha != 0` or `g0 = 0`).
    f_bound_ratio: Option<f64>,
    inviscid: Vec<InviscidFit>,
}

pub fn wave(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.params()?;
    let w = cfg.block(&cfg.wave, "wave")?;
    if w.samples < 2 || !(w.t_end > cfg.t_start) {
        return Err(CliError::Config("wave grid is empty: need samples >= 2 and t_end > t_start".into()));
    }
    let g0 = w.g0.unwrap_or_else(|| p.g());
    let n = w.samples - 1;
    let grid: Vec<f64> = (0..=n).map(|i| cfg.t_start + (w.t_end - cfg.t_start) * i as f64 / n as f64).collect();
    let traj = solve_wave_ode(&p, w.k_wave, w.f0, g0, &grid, cfg.rtol, cfg.atol)?;
    let mut csv = Csv::new(&["t", "f", "g"]);
    for s in &traj {
        csv.row(&[num(s.t), num(s.f), num(s.g)]);
    }
    csv.write(&ctx.out, "wave.csv")?;

    let bound_applies = p.nu() > 0.0 && p.alpha() == 0.0 && g0 != 0.0 && w.k_wave == 1 && cfg.t_start == 0.0;
    let f_bound_ratio = if bound_applies { Some(verify_f_bound(&traj, &p, w.f0, g0)?) } else { None };
    let log_grid: Vec<f64> = (0..=300).map(|i| 10f64.powf(1.0 + i as f64 / 100.0)).collect();
    let mut inviscid = Vec::new();
    for &alpha in &w.inviscid_alphas {
        let q = Params::new(0.0, p.c(), alpha)?;
        let (f0, g0) = if alpha == 0.25 { power_branch_data(alpha, log_grid[0]) } else { (0.0, 1.0) };
        let tr = solve_wave_ode(&q, 1, f0, g0, &log_grid, 1e-11, 1e-14)?;
        let env: Vec<(f64, f64)> = wave_envelope(&tr, alpha).into_iter().filter(|&(t, _)| t >= 1e2).collect();
        inviscid.push(InviscidFit {
            alpha,
            exponent: fit_power_law(&env)?,
            expected: 0.5 + inviscid_exponent(alpha),
        });
    }
    write_json(
        &ctx.out,
        "wave_summary.json",
        "shearecho.wave/1",
        &WaveSummary {
            meta: meta("wave", ctx.seed),
            k_wave: w.k_wave,
            f0: w.f0,
            g0,
            g_constant: p.alpha() == 0.0,
            f_bound_ratio,
            inviscid,
        },
    )?;
    Ok(())
}

fn trajectory_csv(traj: &Traj) -> Csv {
    let mut csv = Csv::new(&["t", "l", "theta_re", "theta_im", "G_re", "G_im"]);
    for s in &traj.samples {
        for (i, (th, g)) in s.theta.iter().zip(&s.good).enumerate() {
            csv.row(&[num(s.t), (i + 1).to_string(), num(th.re), num(th.im), num(g.re), num(g.im)]);
        }
    }
    csv
}

#[derive(Serialize)]
struct RunDoc<'a> {
    meta: Meta<'a>,
    config: &'a RunConfig,
    samples: usize,
    accepted_steps: usize,
    rejected_steps: usize,
    min_step: f64,
    max_step: f64,
    thresholds: shearecho::Thresholds,
}

fn run_doc<'a>(ctx: &'a Ctx, cmd: &'a str, traj: &Traj) -> RunDoc<'a> {
    let c = &traj.config;
    RunDoc {
        meta: meta(cmd, ctx.seed),
        config: &ctx.cfg,
        samples: traj.samples.len(),
        accepted_steps: traj.meta.accepted,
        rejected_steps: traj.meta.rejected,
        min_step: traj.meta.min_step,
        max_step: traj.meta.max_step,
        thresholds: thresholds(traj.params.c(), c.eta, ThresholdFactors::default(), c.modes),
    }
}

pub fn simulate(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg.sim(&ctx.base)?;
    let traj = run_sim(&cfg, &ctx.cfg.params()?)?;
    trajectory_csv(&traj).write(&ctx.out, "trajectory.csv")?;
    write_json(&ctx.out, "run.json", "shearecho.run/1", &run_doc(ctx, "simulate", &traj))?;
    Ok(())
}

#[derive(Serialize)]
struct Persistence {
    k3: usize,
    min_ratio: f64,
    bound: f64,
    holds: bool,
}

#[derive(Serialize)]
struct EchoDoc<'a> {
    meta: Meta<'a>,
    chain: ChainReport<f64>,
    bootstrap: Option<BootstrapReport<f64>>,
    persistence: Option<Persistence>,
}

pub fn echo_report(ctx: &Ctx) -> Result<(), CliError> {
    let p = ctx.cfg.params()?;
    let mut cfg = ctx.cfg.sim(&ctx.base)?;
    let echo = ctx.cfg.echo.clone().unwrap_or_default();
    let boot_times = echo.bootstrap_k.map(|k| bootstrap_sample_times(cfg.eta, k, 5.0));
    if let Some(ts) = &boot_times {
        cfg.sample_times.extend(ts.iter().copied().filter(|&t| t >= cfg.t_start && t <= cfg.t_end));
    }
    let traj = run_sim(&cfg, &p)?;
    let chain = chain_report(&traj, ctx.cfg.weight)?;
    let mut csv = Csv::new(&["k", "t_k", "gain_minus", "gain_plus", "predicted", "dominant_mode"]);
    for r in &chain.records {
        csv.row(&[r.k.to_string(), num(r.t_k), opt(r.gain_minus), opt(r.gain_plus), num(r.predicted), r.dominant_mode.to_string()]);
    }
    csv.write(&ctx.out, "chain.csv")?;

    let bootstrap = match (echo.bootstrap_k, boot_times) {
        (Some(k), Some(ts)) => {
            let ts: Vec<f64> = ts.into_iter().filter(|&t| t <= cfg.t_end).collect();
            let rep = bootstrap_check(&traj, k, &ts)?;
            let mut csv = Csv::new(&["t", "b1", "b2", "b3", "b4", "b4_duhamel", "b5"]);
            for r in &rep.records {
                csv.row(&[num(r.t), num(r.b1), num(r.b2), opt(r.b3), num(r.b4), num(r.b4_duhamel), num(r.b5)]);
            }
            csv.write(&ctx.out, "bootstrap.csv")?;
            Some(rep)
        }
        _ => None,
    };
    let persistence = if echo.persistence {
        let k3 = chain.thresholds.k3;
        let min_ratio = persistence_check(&traj, k3)?;
        let bound = (-2.0f64).exp();
        Some(Persistence {
            k3,
            min_ratio,
            bound,
            holds: min_ratio >= bound,
        })
    } else {
        None
    };
    write_json(
        &ctx.out,
        "echo_report.json",
        "shearecho.echo_report/1",
        &EchoDoc {
            meta: meta("echo-report", ctx.seed),
            chain,
            bootstrap,
            persistence,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    meta: Meta<'a>,
    c: f64,
    nu: f64,
    synthetic: bool,
    points: Vec<InflationPoint<f64>>,
    failed: usize,
    fit: FitReport<f64>,
}

pub fn sweep(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.params()?;
    let s = cfg.block(&cfg.sweep, "sweep")?;
    let c = p.c();
    let mut etas = s.etas.clone();
    etas.extend(s.k0.iter().map(|&k| ((k as f64).powi(3) + 1e-3) / (c * PI)));
    if etas.is_empty() {
        return Err(CliError::Config("sweep needs `etas` or `k0`".into()));
    }
    if etas.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(CliError::Config("sweep frequencies must be finite and > 0".into()));
    }
    etas.sort_by(|a, b| a.total_cmp(b));
    etas.dedup();
    let opts = cfg.inflation_options(s.start, s.start_k, s.margin)?;
    let points: Vec<InflationPoint<f64>> = match s.synthetic {
        Some(syn) => etas
            .iter()
            .map(|&eta| {
                let (sim, mode) = shearecho::blowup::inflation_config(c, eta, &opts);
                InflationPoint {
                    eta,
                    start_mode: mode,
                    t_start: sim.t_start,
                    t_end: sim.t_end,
                    modes: sim.modes,
                    psi: Some((syn.slope * (c * eta).cbrt() + syn.intercept).exp()),
                    error: None,
                    viscous_condition: true,
                    accepted_steps: 0,
                }
            })
            .collect(),
        None => etas.par_iter().map(|&eta| inflation_point(&p, eta, &opts).0).collect(),
    };
    let mut csv = Csv::new(&["eta", "c_eta", "start_mode", "psi", "error"]);
    for q in &points {
        let err = q.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        csv.row(&[num(q.eta), num(c * q.eta), q.start_mode.to_string(), opt(q.psi), err]);
    }
    csv.write(&ctx.out, "sweep.csv")?;
    let failed = points.iter().filter(|q| q.psi.is_none()).count();
    if failed * 5 > points.len() {
        return Err(CliError::Numerical(format!("{failed} of {} sweep jobs failed", points.len())));
    }
    let data: Vec<(f64, f64)> = points.iter().filter_map(|q| q.psi.map(|v| (c * q.eta, v))).collect();
    let fit = fit_cube_root(&data)?;
    write_json(
        &ctx.out,
        "fit.json",
        "shearecho.sweep/1",
        &SweepDoc {
            meta: meta("sweep", ctx.seed),
            c,
            nu: p.nu(),
            synthetic: s.synthetic.is_some(),
            points,
            failed,
            fit,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct BlowupDoc<'a> {
    meta: Meta<'a>,
    spec: BlowupSpec<f64>,
    amplitudes: Vec<f64>,
    points: Vec<InflationPoint<f64>>,
    s: Vec<f64>,
    /// `N_s(t_final) / N_s(0)` per entry of `s`.
    growth: Vec<f64>,
    t_final: f64,
}

pub fn blowup(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.params()?;
    let b = cfg.block(&cfg.blowup, "blowup")?;
    if b.points == 0 || !(b.eta_min > 0.0 && b.eta_max >= b.eta_min) || b.grid_points < 2 {
        return Err(CliError::Config("blowup needs points >= 1, 0 < eta_min <= eta_max, grid_points >= 2".into()));
    }
    let etas = geometric_grid(b.eta_min, b.eta_max, b.points);
    let opts = cfg.inflation_options(b.start, b.start_k, b.margin)?;
    let runs: Vec<_> = etas.par_iter().map(|&eta| inflation_point(&p, eta, &opts)).collect();
    let mut points = Vec::new();
    let mut series = Vec::new();
    for (point, traj) in runs {
        match traj {
            Some(t) => series.push(NormSeries::from_trajectory(&t, cfg.weight)?),
            None => {
                return Err(CliError::Numerical(format!(
                    "eta = {}: {}",
                    point.eta,
                    point.error.as_deref().unwrap_or("run failed")
                )))
            }
        }
        points.push(point);
    }
    let psi: Vec<f64> = points.iter().map(|q| q.psi.unwrap_or(f64::NAN)).collect();
    let spec = BlowupSpec::new(b.sigma, etas.clone(), psi)?;
    let amplitudes = spec.amplitudes();
    let mut csv = Csv::new(&["eta", "start_mode", "psi", "rho_hat", "amplitude"]);
    for (i, q) in points.iter().enumerate() {
        csv.row(&[num(q.eta), q.start_mode.to_string(), num(spec.psi[i]), num(rho_hat(b.sigma, q.eta)), num(amplitudes[i])]);
    }
    csv.write(&ctx.out, "psi.csv")?;

    let s_list = if b.s.is_empty() { vec![b.sigma - 1.0, b.sigma, b.sigma + 1.0] } else { b.s.clone() };
    let t_final = series.iter().filter_map(|x| x.times.last().copied()).fold(0.0, f64::max);
    let n = b.grid_points - 1;
    let grid: Vec<f64> = (0..=n).map(|i| t_final * i as f64 / n as f64).collect();
    let norms: Vec<Vec<f64>> = s_list
        .iter()
        .map(|&s| sobolev_trajectory(s, &series, &amplitudes, &grid))
        .collect::<Result<_, _>>()?;
    let header: Vec<String> = std::iter::once("t".to_string()).chain(s_list.iter().map(|s| format!("N_{s}"))).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    for (i, &t) in grid.iter().enumerate() {
        let row: Vec<String> = std::iter::once(num(t)).chain(norms.iter().map(|v| num(v[i]))).collect();
        csv.row(&row);
    }
    csv.write(&ctx.out, "norms.csv")?;
    let growth = norms.iter().map(|v| v[n] / v[0]).collect();
    write_json(
        &ctx.out,
        "blowup.json",
        "shearecho.blowup/1",
        &BlowupDoc {
            meta: meta("blowup", ctx.seed),
            spec,
            amplitudes,
            points,
            s: s_list,
            growth,
            t_final,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct Golden {
    lorentzian_squared: f64,
    lorentzian: f64,
    pass: bool,
}

#[derive(Serialize)]
struct CoeffsDoc<'a> {
    meta: Meta<'a>,
    eta: f64,
    k: usize,
    end: f64,
    golden: Golden,
    resonant_mass: shearecho::diagnostics::ResonantMass<f64>,
    rows: Vec<shearecho::diagnostics::BoundRow<f64>>,
    safety: f64,
    all_within_safety: bool,
}

pub fn check_coeffs(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.params()?;
    let eta = cfg.eta()?;
    let modes = cfg.modes()?;
    let b = cfg.block(&cfg.coeffs, "coeffs")?;
    if b.k == 0 || !(b.safety >= 1.0) {
        return Err(CliError::Config("coeffs.k must be >= 1 and coeffs.safety >= 1".into()));
    }
    let end = b.end.unwrap_or_else(|| resonant_time(eta, b.k - 1));
    let sq = lorentzian_line_integral::<f64>(2)?;
    let pl = lorentzian_line_integral::<f64>(1)?;
    let golden = Golden {
        lorentzian_squared: sq,
        lorentzian: pl,
        pass: (sq - PI / 2.0).abs() <= 1e-8 && (pl - PI).abs() <= 1e-8,
    };
    let mass = resonant_mass(p.c(), eta, b.k)?;
    let rows = coefficient_bounds(p.c(), p.nu(), eta, b.k, modes, end)?;
    let mut csv = Csv::new(&["name", "l", "branch", "value", "bound", "slack", "pass"]);
    for r in &rows {
        let branch = match r.branch {
            Some(shearecho::modes::Branch::Plus) => "plus",
            Some(shearecho::modes::Branch::Minus) => "minus",
            None => "",
        };
        csv.row(&[r.name.to_string(), r.l.to_string(), branch.into(), num(r.value), num(r.bound), num(r.slack), r.pass.to_string()]);
    }
    csv.write(&ctx.out, "coeffs.csv")?;
    let within = rows.iter().all(|r| r.value <= b.safety * r.bound);
    let ok = within && golden.pass && mass.pass != Some(false);
    write_json(
        &ctx.out,
        "coeffs.json",
        "shearecho.coeffs/1",
        &CoeffsDoc {
            meta: meta("check-coeffs", ctx.seed),
            eta,
            k: b.k,
            end,
            golden,
            resonant_mass: mass,
            rows,
            safety: b.safety,
            all_within_safety: within,
        },
    )?;
    if !ok {
        return Err(CliError::Check(format!(
            "coefficient bounds exceeded beyond safety factor {} (see coeffs.csv)",
            b.safety
        )));
    }
    Ok(())
}
