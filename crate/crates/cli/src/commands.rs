//! The subcommands. Each writes its payload files into the output
//! directory and returns their names together with an optional check
//! failure; the manifest is written by the caller.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use phi4::frd::{self, decompose, infinite_volume_tables, CovarianceDecomposition};
use phi4::lattice::{OperatorSymbol, TorusSpec};
use phi4::montecarlo::{self, Estimate, Observables};
use phi4::predictor::{self, Direction, PredictionParams, YDistribution};
use phi4::rgflow::{self, FlowParams};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{BackendChoice, ExperimentConfig};
use crate::plot;
use crate::verify;

/// Environment variable naming a directory of reusable decompositions.
pub const CACHE_ENV: &str = "PHI4_CACHE_DIR";

/// Everything a subcommand needs.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub override_budget: bool,
    pub cache_dir: Option<PathBuf>,
}

impl RunContext {
    fn log(&self, msg: impl AsRef<str>) {
        if self.config.output.verbosity > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Payload files written and the failed check, if any.
#[derive(Clone, Debug, Default)]
pub struct CommandOutput {
    pub files: Vec<String>,
    pub failure: Option<String>,
}

impl CommandOutput {
    fn push(&mut self, name: &str) {
        self.files.push(name.to_owned());
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_csv<I>(path: &Path, header: &[String], rows: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn render(ctx: &RunContext, out: &mut CommandOutput, csv_name: &str) -> anyhow::Result<()> {
    let (_, svg) = plot::RENDERINGS.iter().find(|(c, _)| *c == csv_name).expect("known rendering");
    plot::render_one(&ctx.out, csv_name, svg)?;
    out.push(svg);
    Ok(())
}

fn cache_key(config: &ExperimentConfig) -> String {
    let key = json!({ "lattice": config.lattice, "symbol": config.symbol, "backend": config.decompose.backend });
    let digest = Sha256::digest(key.to_string().as_bytes());
    digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

/// Loads the decomposition from the cache directory or computes (and
/// caches) it.
pub fn obtain_decomposition(ctx: &RunContext) -> anyhow::Result<CovarianceDecomposition> {
    let torus = ctx.config.lattice.torus()?;
    let op = ctx.config.symbol.operator()?;
    let backend = ctx.config.decompose.backend.into();
    let cached = ctx.cache_dir.as_ref().map(|d| d.join(format!("frd-{}.bin", cache_key(&ctx.config))));
    if let Some(path) = cached.as_ref().filter(|p| p.exists()) {
        ctx.log(format!("reading cached decomposition {}", path.display()));
        return Ok(frd::io::read_cache(&mut BufReader::new(File::open(path)?))?);
    }
    let decomp = decompose(&op, &torus, backend)?;
    if let Some(path) = cached {
        std::fs::create_dir_all(path.parent().expect("cache file has a parent"))?;
        frd::io::write_cache(&decomp, &mut BufWriter::new(File::create(&path)?))?;
    }
    Ok(decomp)
}

/// Writes the decomposition, its slices and the residual/decay report;
/// fails the check when the exactness residual reaches the threshold.
pub fn cmd_decompose(ctx: &RunContext) -> anyhow::Result<CommandOutput> {
    let cfg = &ctx.config;
    let decomp = obtain_decomposition(ctx)?;
    let mut out = CommandOutput::default();

    let mut w = BufWriter::new(File::create(ctx.path("decomposition.bin"))?);
    frd::io::write_cache(&decomp, &mut w)?;
    w.flush()?;
    out.push("decomposition.bin");
    let mut w = BufWriter::new(File::create(ctx.path("slices.csv"))?);
    frd::io::write_slices_csv(&decomp, &mut w)?;
    w.flush()?;
    out.push("slices.csv");

    let residual = decomp.exactness_residual()?;
    let l = cfg.lattice.l as f64;
    let mut sup = Vec::new();
    for s in &decomp.slices {
        sup.push((s.j, decomp.slice_sup(s.j)?));
    }
    let decay: Vec<_> = sup
        .windows(2)
        .map(|w| json!({ "j": w[0].0, "exponent": (w[0].1 / w[1].1).ln() / l.ln() }))
        .collect();
    let passed = residual < cfg.decompose.threshold;
    write_json(
        &ctx.path("report.json"),
        &json!({
            "lattice": cfg.lattice,
            "symbol": cfg.symbol,
            "backend": cfg.decompose.backend,
            "residual": residual,
            "threshold": cfg.decompose.threshold,
            "passed": passed,
            "t_n": decomp.t_n,
            "q_n": decomp.q_n,
            "neumann_order": decomp.neumann_order,
            "neumann_contraction": decomp.neumann_contraction,
            "min_multiplier": decomp.min_multiplier(),
            "slice_sup": sup.iter().map(|(j, s)| json!({ "j": j, "sup": s })).collect::<Vec<_>>(),
            "decay_exponents": decay,
        }),
    )?;
    out.push("report.json");
    ctx.log(format!("exactness residual {residual:e}"));
    if !passed {
        out.failure = Some(format!("exactness residual {residual:e} is not below the threshold {:e}", cfg.decompose.threshold));
    }
    Ok(out)
}

/// Critical shooting, the critical trajectory and its asymptotic checks.
pub fn cmd_flow(ctx: &RunContext) -> anyhow::Result<CommandOutput> {
    let cfg = &ctx.config;
    let f = &cfg.flow;
    let op = cfg.symbol.operator()?;
    let backend = cfg.decompose.backend.into();
    ctx.log(format!("computing {} infinite-volume scales", f.levels));
    let tables = infinite_volume_tables(&op, cfg.lattice.d, cfg.lattice.l, f.levels, backend)?;
    let params = FlowParams::from_tables(&tables, f.n, f.j_max)?;
    let critical = rgflow::find_critical_nu(&params, f.g0, f.nu_bracket, f.tol)?;
    let trajectory = rgflow::critical_trajectory(&params, f.g0, 1.0, 1.0)?;
    let lambda = rgflow::lambda_limit_flow(&trajectory, &params).ok();
    let asymptote = rgflow::g_asymptote_check(&trajectory, &params, f.rate_fit_end);
    let gamma_total: f64 = params.gamma_zero.iter().take(params.j_max).sum();
    let mut out = CommandOutput::default();

    let mut w = BufWriter::new(File::create(ctx.path("trajectory.csv"))?);
    trajectory.write_csv(&params, &mut w)?;
    w.flush()?;
    drop(w);
    out.push("trajectory.csv");
    write_json(
        &ctx.path("flow.json"),
        &json!({
            "d": cfg.lattice.d,
            "l": cfg.lattice.l,
            "symbol": cfg.symbol,
            "flow": f,
            "beta": tables.betas(f.n),
            "critical": critical,
            "first_order_nu_c": rgflow::first_order_nu_c(&params, f.g0),
            "nu_c_bound": 5.0 * (f.n as f64 + 2.0) * f.g0 * gamma_total,
            "trajectory": { "termination": trajectory.termination, "scales": trajectory.states.len() - 1 },
            "lambda_limit": lambda,
            "g_asymptote": asymptote,
        }),
    )?;
    out.push("flow.json");
    render(ctx, &mut out, "trajectory.csv")?;
    ctx.log(format!("nu_c = {:.15e}", critical.nu_c));
    Ok(out)
}

fn mode_label(m: &[u32]) -> String {
    let parts: Vec<String> = m.iter().map(u32::to_string).collect();
    format!("chi_k{}", parts.join("-"))
}

/// Finite-size-scaling predictions over the configured numbers of scales.
pub fn cmd_predict(ctx: &RunContext) -> anyhow::Result<CommandOutput> {
    let cfg = &ctx.config;
    let p = &cfg.predict;
    let (d, eta, l) = (cfg.lattice.d, cfg.symbol.eta, cfg.lattice.l);
    let modes = if p.modes.is_empty() {
        let mut m = vec![0; d];
        m[0] = 1;
        vec![m]
    } else {
        p.modes.clone()
    };
    let exponent = predictor::chi_volume_exponent(d, eta)?;
    let y = YDistribution::new(p.n)?;
    let mut header: Vec<String> = ["n_scales", "side", "volume", "a_n", "b_n", "c_n", "chi_0"].map(String::from).to_vec();
    header.extend(modes.iter().map(|m| mode_label(m)));
    header.extend(["plateau", "crossover_radius", "chi_exponent"].map(String::from));

    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut constants = None;
    for &n_scales in &p.n_scales {
        let params = PredictionParams { d, eta, n: p.n, g: p.g, l, n_scales };
        let consts = params.constants()?;
        let scales = params.scales()?;
        let side = l.pow(n_scales as u32);
        let volume = (side as f64).powi(d as i32);
        let chi0 = predictor::chi_prediction(&params, &consts, &vec![0; d])?;
        let chik = modes.iter().map(|m| predictor::chi_prediction(&params, &consts, m)).collect::<Result<Vec<_>, _>>()?;
        let plateau = predictor::plateau_level(&params, &consts)?;
        let crossover = predictor::crossover_radius(&params, &consts)?;
        let mut row = vec![n_scales.to_string(), side.to_string(), num(volume), num(scales.a_n), num(scales.b_n), num(scales.c_n), num(chi0)];
        row.extend(chik.iter().map(|v| num(*v)));
        row.extend([num(plateau), num(crossover), num(exponent)]);
        rows.push(row);
        records.push(json!({
            "n_scales": n_scales,
            "side": side,
            "volume": volume,
            "scales": scales,
            "chi_zero": chi0,
            "chi_modes": modes.iter().zip(&chik).map(|(m, v)| json!({ "mode": m, "chi": v })).collect::<Vec<_>>(),
            "plateau": plateau,
            "crossover_radius": crossover,
        }));
        constants = Some(consts);
    }
    let mut out = CommandOutput::default();
    write_csv(&ctx.path("predictions.csv"), &header, rows)?;
    out.push("predictions.csv");
    write_json(
        &ctx.path("predictions.json"),
        &json!({
            "d": d,
            "eta": eta,
            "n": p.n,
            "g": p.g,
            "l": l,
            "upper_critical": predictor::is_upper_critical(d, eta),
            "chi_exponent": exponent,
            "constants": constants,
            "y_moments": {
                "e_y2": y.moment(1, Direction::Unit)?,
                "e_y4": y.moment(2, Direction::Unit)?,
                "e_abs_y2": y.moment(1, Direction::Radial)?,
                "binder": y.binder_ratio()?,
            },
            "predictions": records,
        }),
    )?;
    out.push("predictions.json");
    render(ctx, &mut out, "predictions.csv")?;
    Ok(out)
}

fn estimate_json(e: &Estimate) -> serde_json::Value {
    json!({ "mean": e.mean, "error": e.error, "tau_int": e.tau_int, "effective_samples": e.effective_samples })
}

fn prediction_for(obs: &Observables) -> Option<(PredictionParams, predictor::FssConstants)> {
    let c = &obs.config;
    if !(c.g > 0.0) {
        return None;
    }
    let l = (2..=c.side).find(|l| {
        let mut s = 1;
        while s < c.side {
            s *= l;
        }
        s == c.side
    })?;
    let n_scales = (c.side as f64).log(l as f64).round() as usize;
    let params = PredictionParams { d: c.d, eta: c.eta, n: c.n, g: c.g, l, n_scales };
    let consts = params.constants().ok()?;
    Some((params, consts))
}

/// Monte Carlo run, optional Binder scan and their summaries.
pub fn cmd_mc(ctx: &RunContext) -> anyhow::Result<CommandOutput> {
    let cfg = &ctx.config;
    let mut mc = cfg.mc_config()?;
    mc.override_budget = ctx.override_budget;
    ctx.log(format!("sampling {}^{} sites, n = {}, {} measurements", mc.side, mc.d, mc.n, mc.sweeps));
    let obs = montecarlo::run(&mc)?;
    let mut out = CommandOutput::default();

    let prediction = prediction_for(&obs);
    let plateau = prediction.as_ref().and_then(|(p, c)| predictor::plateau_level(p, c).ok());
    let two_point = obs.two_point_estimates()?;
    write_csv(
        &ctx.path("two_point.csv"),
        &["r", "mean", "error", "tau_int", "plateau"].map(String::from),
        two_point.iter().map(|(r, e)| vec![r.to_string(), num(e.mean), num(e.error), num(e.tau_int), plateau.map_or(String::new(), num)]),
    )?;
    out.push("two_point.csv");

    let mut header = vec!["measurement".to_owned()];
    header.extend((0..mc.n).map(|c| format!("phi_{c}")));
    header.extend(mc.chi_modes.iter().map(|m| mode_label(m)));
    write_csv(
        &ctx.path("series.csv"),
        &header,
        (0..obs.measurements).map(|t| {
            let mut row = vec![t.to_string()];
            row.extend(obs.phi_mean[t * mc.n..(t + 1) * mc.n].iter().map(|v| num(*v)));
            row.extend(obs.chi_series.iter().map(|s| num(s[t])));
            row
        }),
    )?;
    out.push("series.csv");

    let y = YDistribution::new(mc.n)?;
    let phi2 = obs.phi_mean.iter().map(|v| v * v).sum::<f64>() / obs.phi_mean.len() as f64;
    let scale = (phi2 / y.moment(1, Direction::Unit)?).sqrt();
    let histogram = montecarlo::zero_mode_histogram(&obs, scale, cfg.mc.histogram_bins.max(1))?;
    let mut hist_rows = Vec::new();
    for (i, density) in histogram.density.iter().enumerate() {
        let (lo, hi) = (histogram.edges[i], histogram.edges[i + 1]);
        hist_rows.push(vec![num(lo), num(hi), num(*density), num(y.marginal_density(0.5 * (lo + hi))?)]);
    }
    write_csv(&ctx.path("histogram.csv"), &["lo", "hi", "density", "quartic"].map(String::from), hist_rows)?;
    out.push("histogram.csv");

    let chi: Vec<_> = mc
        .chi_modes
        .iter()
        .zip(&obs.chi_series)
        .map(|(m, s)| montecarlo::estimate(s).map(|e| json!({ "mode": m, "chi": estimate_json(&e) })))
        .collect::<Result<_, _>>()?;
    let free_field = if mc.g == 0.0 && obs.spectrum.is_some() {
        let checks = montecarlo::free_field_check(&obs)?;
        let worst = checks.iter().map(|c| c.deviation_sigma.abs()).fold(0.0, f64::max);
        Some(json!({ "classes": checks.len(), "worst_sigma": worst, "checks": checks }))
    } else {
        None
    };
    let predicted = prediction.as_ref().map(|(p, c)| {
        json!({
            "params": p,
            "constants": c,
            "plateau": plateau,
            "chi_zero": predictor::chi_prediction(p, c, &vec![0; p.d]).ok(),
        })
    });

    let scan = match &cfg.mc.scan {
        Some(scan) => {
            let sides: Vec<usize> = scan.n_scales.iter().map(|&k| cfg.lattice.l.pow(k as u32)).collect();
            ctx.log(format!("Binder scan over sides {sides:?} and {} values of nu", scan.nus.len()));
            let result = montecarlo::binder_scan(&mc, &sides, &scan.nus)?;
            write_csv(
                &ctx.path("scan.csv"),
                &["side", "nu", "binder", "binder_error", "chi_zero", "chi_zero_error", "acceptance"].map(String::from),
                result.points.iter().map(|p| {
                    vec![
                        p.side.to_string(),
                        num(p.nu),
                        num(p.binder.mean),
                        num(p.binder.error),
                        num(p.chi_zero.mean),
                        num(p.chi_zero.error),
                        num(p.acceptance),
                    ]
                }),
            )?;
            out.push("scan.csv");
            Some(result)
        }
        None => None,
    };

    write_json(
        &ctx.path("result.json"),
        &json!({
            "config": mc,
            "volume": obs.volume,
            "measurements": obs.measurements,
            "acceptance": obs.acceptance,
            "mean_abs_dh": obs.mean_abs_dh,
            "chi_zero": estimate_json(&obs.chi_zero()?),
            "chi_zero_consistency": obs.chi_zero_consistency(),
            "binder": estimate_json(&obs.binder()?),
            "chi": chi,
            "two_point": two_point.iter().map(|(r, e)| json!({ "r": r, "estimate": estimate_json(e) })).collect::<Vec<_>>(),
            "histogram": {
                "scale": histogram.scale,
                "effective_samples": histogram.effective_samples,
                "insufficient": histogram.insufficient,
            },
            "free_field": free_field,
            "prediction": predicted,
            "scan": scan,
        }),
    )?;
    out.push("result.json");
    for csv_name in ["two_point.csv", "histogram.csv"] {
        render(ctx, &mut out, csv_name)?;
    }
    if scan.is_some() {
        render(ctx, &mut out, "scan.csv")?;
    }
    ctx.log(format!("acceptance {:.3}", obs.acceptance));
    Ok(out)
}

/// Runs the oracle suite and writes `summary.json`.
pub fn cmd_verify(ctx: &RunContext) -> anyhow::Result<CommandOutput> {
    let checks = verify::run_suite(&ctx.config.verify, |name| ctx.log(format!("check {name}")))?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    write_json(&ctx.path("summary.json"), &json!({ "passed": failed.is_empty(), "failed": failed, "checks": checks }))?;
    let mut out = CommandOutput { files: vec!["summary.json".into()], failure: None };
    if !failed.is_empty() {
        out.failure = Some(format!("failed checks: {}", failed.join(", ")));
    }
    Ok(out)
}

/// Re-renders every chart from the CSV files in the output directory.
pub fn cmd_report(ctx: &RunContext) -> anyhow::Result<CommandOutput> {
    let files = plot::render_dir(&ctx.out)?;
    if files.is_empty() {
        return Err(crate::UsageError(format!("no recognised CSV files in {}", ctx.out.display())).into());
    }
    Ok(CommandOutput { files, failure: None })
}

/// Backend-specific decomposition used by the verify suite.
pub(crate) fn decompose_on(d: usize, l: usize, n: usize, op: &OperatorSymbol, backend: BackendChoice) -> anyhow::Result<CovarianceDecomposition> {
    Ok(decompose(op, &TorusSpec::new(d, l, n)?, backend.into())?)
}
