use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::config::{
    field, load_config, BcName, ConfigError, FpConfig, InitConfig, InitialProfile, Loaded, SdeConfig,
    SemilinearConfig,
};
use super::manifest::{csv_table, sha256_hex, Outputs};
use super::{BcArg, CliError};
use crate::bl_metric::{dbl as bl_distance, EmpiricalMeasure};
use crate::expr::Var;
use crate::fpe::{
    check_stationarity_condition, solve_ivp, stationary_closed_form, DensityField, LinearProblem,
};
use crate::markov::{detect_period, detect_strong_period, read_csv_rows, DistributionVector, TransitionMatrix};
use crate::period_map::{build_period_map, decay_check, power_iteration, DENSE_CHECK_MAX};
use crate::sde::{periodicity_diagnostic, sample_laws, BoxDomain, InitialLaw, SdeSystem};
use crate::semilinear::{
    default_pair, monotone_iterate, verify_upper_lower, Kind, MonotoneOptions, SemilinearProblem,
};

const STATIONARITY_TIMES: usize = 64;

fn read_input(path: &Path) -> Result<(String, String), ConfigError> {
    let bytes = std::fs::read(path).map_err(|e| ConfigError::at(path.display().to_string(), e.to_string()))?;
    let digest = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|e| ConfigError::at(path.display().to_string(), e.to_string()))?;
    Ok((text, digest))
}

/// Numeric CSV rows; a non-numeric first line is taken as a header.
fn read_rows(path: &Path) -> Result<(Vec<Vec<f64>>, String), ConfigError> {
    let (text, digest) = read_input(path)?;
    let mut body = text.as_str();
    if let Some(first) = text.lines().find(|l| !l.trim().is_empty()) {
        if first.split(',').any(|f| f.trim().parse::<f64>().is_err()) {
            let start = text.find(first).unwrap_or(0) + first.len();
            body = &text[start..];
        }
    }
    let rows = read_csv_rows(body).map_err(|e| ConfigError::at(path.display().to_string(), e))?;
    Ok((rows, digest))
}

/// Rows `x1,...,xd,weight`.
fn read_measure(path: &Path, dim: Option<usize>) -> Result<(EmpiricalMeasure, String), CliError> {
    let (rows, digest) = read_rows(path)?;
    let at = path.display().to_string();
    let width = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| ConfigError::at(at.clone(), "no rows"))?;
    if width < 2 || rows.iter().any(|r| r.len() != width) {
        return Err(ConfigError::at(at, "rows must all have the form x1,...,xd,weight").into());
    }
    if let Some(d) = dim {
        if width - 1 != d {
            return Err(ConfigError::at(at, format!("expected {d} coordinates per row")).into());
        }
    }
    let mut coords = Vec::with_capacity(rows.len() * (width - 1));
    let mut weights = Vec::with_capacity(rows.len());
    for r in &rows {
        coords.extend_from_slice(&r[..width - 1]);
        weights.push(r[width - 1]);
    }
    Ok((EmpiricalMeasure::from_flat(width - 1, coords, weights)?, digest))
}

/// Splits `--out file.csv` into the directory holding the manifest and the
/// file name.
fn split_out(out: &Path, fallback: &str) -> (PathBuf, String) {
    let dir = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| fallback.into());
    (dir, name)
}

fn sidecar(name: &str, suffix: &str, ext: &str) -> String {
    let stem = Path::new(name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name.into());
    format!("{stem}_{suffix}.{ext}")
}

fn echo<T: serde::Serialize>(loaded: &Loaded<T>) -> Value {
    serde_json::to_value(&loaded.config).unwrap_or(Value::Null)
}

fn profile_csv(centers: &[f64], columns: &[&str], values: &[&[f64]]) -> String {
    let mut header = vec!["x"];
    header.extend_from_slice(columns);
    csv_table(
        &header,
        centers.iter().enumerate().map(|(i, &x)| {
            let mut row = vec![x];
            row.extend(values.iter().map(|v| v[i]));
            row
        }),
    )
}

pub fn markov_check(
    matrix: &Path,
    init: &Path,
    nmax: usize,
    tol: f64,
    row_stochastic: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (rows, matrix_sha) = read_rows(matrix)?;
    let (init_rows, init_sha) = read_rows(init)?;
    let p = TransitionMatrix::from_rows(&rows, row_stochastic)?;
    let x0 = DistributionVector::new(init_rows.into_iter().flatten().collect())?;
    let report = detect_period(&p, &x0, nmax, tol)?;
    let strong = detect_strong_period(&p, nmax, tol)?;
    let Some(out) = out else {
        println!("{}", serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?);
        return Ok(());
    };
    let mut outputs = Outputs::new(out, "markov-check")?;
    outputs.write_json("period_report.json", &report)?;
    outputs.headline("period", report.period);
    outputs.headline("strong", report.strong);
    outputs.headline("strong_period", strong);
    let config = json!({
        "matrix": matrix,
        "matrix_sha256": matrix_sha,
        "init": init,
        "init_sha256": init_sha,
        "nmax": nmax,
        "tol": tol,
        "row_stochastic": row_stochastic,
    });
    outputs.finish(config, Vec::new())?;
    Ok(())
}

pub fn dbl(mu_path: &Path, nu_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let (mu, mu_sha) = read_measure(mu_path, None)?;
    let (nu, nu_sha) = read_measure(nu_path, Some(mu.dim()))?;
    let result = bl_distance(&mu, &nu)?;
    let body = json!({
        "distance": result.distance,
        "mass_mu": mu.mass(),
        "mass_nu": nu.mass(),
        "status": result.status,
        "support": result.support,
        "witness": result.witness,
    });
    let Some(out) = out else {
        println!("{}", serde_json::to_string_pretty(&body).map_err(std::io::Error::other)?);
        return Ok(());
    };
    let mut outputs = Outputs::new(out, "dbl")?;
    outputs.write_json("dbl.json", &body)?;
    outputs.headline("distance", result.distance);
    let config = json!({
        "mu": mu_path,
        "mu_sha256": mu_sha,
        "nu": nu_path,
        "nu_sha256": nu_sha,
    });
    outputs.finish(config, Vec::new())?;
    Ok(())
}

pub fn simulate_sde(config: &Path, out: &Path) -> Result<(), CliError> {
    let mut loaded: Loaded<SdeConfig> = load_config(config)?;
    loaded.config.validate()?;
    loaded.config.resolve();
    let cfg = &loaded.config;
    let tx = [Var::T, Var::X];
    let drift = cfg
        .drift
        .iter()
        .enumerate()
        .map(|(i, s)| field(s, cfg.period_t, &tx, &format!("/drift/{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let sigma = cfg
        .sigma
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, s)| field(s, cfg.period_t, &tx, &format!("/sigma/{i}/{j}")))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let domain = BoxDomain::new(cfg.domain.lower.clone(), cfg.domain.upper.clone())?;
    let sys = SdeSystem::new(drift, sigma, cfg.period_t, domain.clone())?;
    let init = match &cfg.init {
        InitConfig::Point(p) => InitialLaw::Point(p.clone()),
        InitConfig::Csv(p) => InitialLaw::Measure(read_measure(&loaded.resolve(p), Some(sys.dim()))?.0),
    };
    let batch = sample_laws(&sys, &init, cfg.paths, cfg.periods, cfg.dt(), cfg.seed)?;

    let mut outputs = Outputs::new(out, "simulate-sde")?;
    let d = sys.dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("weight".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    for (n, law) in batch.snapshots.iter().enumerate() {
        let rows = (0..law.len()).map(|i| {
            let mut row = law.point(i).to_vec();
            row.push(law.weights()[i]);
            row
        });
        outputs.write(&format!("snapshot_{n:04}.csv"), csv_table(&header, rows).as_bytes())?;
    }
    let reflections: u64 = batch.reflection_counts.iter().sum();
    outputs.headline("paths", batch.paths);
    outputs.headline("snapshots", batch.snapshots.len());
    outputs.headline("reflections", reflections);
    if cfg.diagnostic {
        let report = periodicity_diagnostic(&batch, &domain, cfg.burn_in())?;
        outputs.write_json("diagnostic.json", &report)?;
        outputs.headline("defect_restricted", report.cesaro.restricted);
        outputs.headline("defect_unrestricted", report.cesaro.unrestricted);
        outputs.headline("late_pairwise_max", report.late_pairwise_max);
    }
    outputs.finish(echo(&loaded), loaded.defaults.clone())?;
    Ok(())
}

fn linear_problem(cfg: &FpConfig, bc: BcName) -> Result<LinearProblem, CliError> {
    let coeffs = cfg.operator().build(cfg.period_t)?;
    Ok(LinearProblem::new(cfg.grid()?, coeffs, bc.build(cfg.robin_beta))
        .with_convention(cfg.convention)
        .with_integrator(cfg.integrator)
        .with_shift(cfg.shift)
        .with_ellipticity_floor(cfg.ellipticity_floor))
}

fn load_fp(config: &Path) -> Result<Loaded<FpConfig>, CliError> {
    let mut loaded: Loaded<FpConfig> = load_config(config)?;
    loaded.config.validate()?;
    loaded.config.resolve();
    Ok(loaded)
}

fn initial_density(loaded: &Loaded<FpConfig>, problem: &LinearProblem) -> Result<DensityField, CliError> {
    let grid = problem.grid;
    match &loaded.config.initial {
        InitialProfile::Uniform => Ok(DensityField::uniform(grid)),
        InitialProfile::Expr(s) => {
            let f = field(s, loaded.config.period_t, &[Var::X], "/initial/expr")?;
            let values = grid
                .centers()
                .iter()
                .map(|&x| f.eval(0.0, x))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(DensityField::new(grid, values, 0.0)?)
        }
        InitialProfile::Csv(p) => {
            let (rows, _) = read_rows(&loaded.resolve(p))?;
            let values: Vec<f64> = rows.iter().filter_map(|r| r.last().copied()).collect();
            if values.len() != grid.n_cells() {
                return Err(ConfigError::at(
                    "/initial/csv",
                    format!("{} values for {} cells", values.len(), grid.n_cells()),
                )
                .into());
            }
            Ok(DensityField::new(grid, values, 0.0)?)
        }
    }
}

pub fn fp_solve(config: &Path, out: &Path, snapshots: &[f64]) -> Result<(), CliError> {
    let loaded = load_fp(config)?;
    let cfg = &loaded.config;
    let problem = linear_problem(cfg, cfg.bc)?;
    let p0 = initial_density(&loaded, &problem)?;
    let t1 = cfg.period_t * cfg.periods as f64;
    let nsteps = cfg.steps_per_period()? * cfg.periods;
    if let Some(t) = snapshots.iter().find(|&&t| !(0.0..=t1).contains(&t)) {
        return Err(ConfigError::at("--snapshots", format!("time {t} outside [0, {t1}]")).into());
    }
    let traj = solve_ivp(&problem, &p0, t1, nsteps, snapshots)?;

    let (dir, name) = split_out(out, "density.csv");
    let mut outputs = Outputs::new(dir, "fp-solve")?;
    let centers = problem.grid.centers();
    outputs.write(&name, profile_csv(&centers, &["density"], &[&traj.final_state.values]).as_bytes())?;
    let mut ledger = vec![json!({"time": 0.0, "mass": traj.initial_mass, "min": p0.min()})];
    for (k, s) in traj.snapshots.iter().enumerate() {
        outputs.write(
            &sidecar(&name, &format!("snap{k:03}"), "csv"),
            profile_csv(&centers, &["density"], &[&s.values]).as_bytes(),
        )?;
        ledger.push(json!({"time": s.time, "mass": s.mass, "min": s.min}));
    }
    ledger.push(json!({"time": t1, "mass": traj.final_state.mass(), "min": traj.final_state.min()}));
    outputs.headline("mass_ledger", ledger);
    outputs.headline("max_mass_drift", traj.max_mass_drift);
    outputs.headline("min_value", traj.min_value);
    outputs.headline("positivity_ok", traj.positivity_ok());
    outputs.finish(echo(&loaded), loaded.defaults.clone())?;
    Ok(())
}

pub fn eigen(config: &Path, bc: Option<BcArg>, out: &Path) -> Result<(), CliError> {
    let loaded = load_fp(config)?;
    let cfg = &loaded.config;
    let bc = match bc {
        None => cfg.bc,
        Some(BcArg::Dirichlet) => BcName::Absorbing,
        Some(BcArg::Reflecting) => BcName::Reflecting,
        Some(BcArg::Robin) => BcName::Robin,
    };
    let problem = linear_problem(cfg, bc)?;
    let map = build_period_map(&problem, cfg.period_t, cfg.steps_per_period()?)?;
    let spectral = power_iteration(&map, cfg.tol, cfg.max_iter)?;
    let decay = decay_check(&map, &spectral, cfg.decay_periods);
    let dense_r = if map.dim() <= DENSE_CHECK_MAX {
        map.dense_spectral_radius()
    } else {
        None
    };

    let (dir, name) = split_out(out, "spectral.json");
    let mut outputs = Outputs::new(dir, "eigen")?;
    let vec_name = sidecar(&name, "eigvec", "csv");
    let centers = problem.grid.centers();
    outputs.write(&vec_name, profile_csv(&centers, &["phi"], &[&spectral.eigvec]).as_bytes())?;
    let body = json!({
        "bc": bc,
        "r": spectral.r,
        "mu": spectral.mu,
        "lambda1": spectral.mu,
        "residual": spectral.residual,
        "iterations": spectral.iterations,
        "dense_r": dense_r,
        "decay": decay,
        "eigenvector": vec_name,
    });
    outputs.write_json(&name, &body)?;
    outputs.headline("r", spectral.r);
    outputs.headline("mu", spectral.mu);
    outputs.headline("lambda1", spectral.mu);
    outputs.finish(echo(&loaded), loaded.defaults.clone())?;
    Ok(())
}

pub fn stationary(config: &Path, out: &Path) -> Result<(), CliError> {
    let loaded = load_fp(config)?;
    let cfg = &loaded.config;
    let coeffs = cfg.operator().build(cfg.period_t)?;
    let grid = cfg.grid()?;
    let q = stationary_closed_form(&coeffs, grid, cfg.time)?;
    let times: Vec<f64> = (0..STATIONARITY_TIMES)
        .map(|k| cfg.period_t * k as f64 / STATIONARITY_TIMES as f64)
        .collect();
    let report = check_stationarity_condition(&coeffs, grid, &times)?;

    let (dir, name) = split_out(out, "stationary.csv");
    let mut outputs = Outputs::new(dir, "stationary")?;
    outputs.write(&name, profile_csv(&grid.centers(), &["density"], &[&q.values]).as_bytes())?;
    outputs.write_json(&sidecar(&name, "report", "json"), &report)?;
    outputs.headline("stationarity_residual", report.residual);
    outputs.headline("worst_time", report.worst_time);
    outputs.headline("mass", q.mass());
    outputs.finish(echo(&loaded), loaded.defaults.clone())?;
    Ok(())
}

pub fn semilinear(config: &Path, out: &Path) -> Result<(), CliError> {
    let mut loaded: Loaded<SemilinearConfig> = load_config(config)?;
    loaded.config.validate()?;
    loaded.config.resolve();
    let cfg = &loaded.config;
    let coeffs = cfg.operator().build(cfg.period_t)?;
    let source = field(&cfg.source_f, cfg.period_t, &[Var::T, Var::X, Var::U], "/source_f")?;
    let nsteps = cfg.steps_per_period()?;
    let mut problem = SemilinearProblem::new(
        cfg.grid()?,
        coeffs,
        source,
        cfg.bc.build(cfg.robin_beta),
        cfg.period_t,
        nsteps,
    )?;
    problem.integrator = cfg.integrator;
    let (pair, m0) = default_pair(&problem, cfg.lower_epsilon)?;
    let upper_slack = verify_upper_lower(&problem, &problem.constant_in_time(pair.upper()), Kind::Upper)?;
    let lower_slack = verify_upper_lower(&problem, &problem.constant_in_time(pair.lower()), Kind::Lower)?;
    let opts = MonotoneOptions {
        c: cfg.c,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    };
    let result = monotone_iterate(&problem, &pair, opts)?;

    let mut outputs = Outputs::new(out, "semilinear")?;
    let centers = problem.grid.centers();
    for k in 0..cfg.snapshots {
        let level = k * nsteps / cfg.snapshots;
        let csv = profile_csv(
            &centers,
            &["upper", "lower"],
            &[&result.from_upper.levels[level], &result.from_lower.levels[level]],
        );
        outputs.write(&format!("profile_{k:03}.csv"), csv.as_bytes())?;
    }
    let iterations = |kind: Kind| result.trace.iter().filter(|e| e.start == kind).count();
    let max_u = result
        .from_upper
        .levels
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let body = json!({
        "c": result.c,
        "m0": m0,
        "gap": result.gap,
        "periodicity_residual": result.periodicity_residual(),
        "sandwich_violation": result.sandwich_violation,
        "iterations_upper": iterations(Kind::Upper),
        "iterations_lower": iterations(Kind::Lower),
        "slack": [upper_slack, lower_slack],
        "warnings": result.warnings,
        "profile_times": (0..cfg.snapshots).map(|k| problem.time(k * nsteps / cfg.snapshots)).collect::<Vec<_>>(),
        "trace": result.trace,
    });
    outputs.write_json("trace.json", &body)?;
    outputs.headline("gap", result.gap);
    outputs.headline("periodicity_residual", result.periodicity_residual());
    outputs.headline("c", result.c);
    outputs.headline("max_u", max_u);
    outputs.headline("warnings", &result.warnings);
    outputs.finish(echo(&loaded), loaded.defaults.clone())?;
    Ok(())
}
