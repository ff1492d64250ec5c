//! Subcommand implementations. Each writes its artifacts into the output
//! directory and returns nothing on success.

use std::fs;
use std::path::{Path, PathBuf};

use momentfit::dist::SpecDoc;
use momentfit::inference::{
    map_estimate, maximize, mcmc, pooled_moments, profile, Experiment, MleResult, ProfileOptions, ProfileResult,
    SnapshotData,
};
use momentfit::models::BuiltinModel;
use momentfit::oracle::{compare_marginal, empirical_moments, sample_outputs_with, z_scores, OnFailure};
use momentfit::rng::{stream_rng, Purpose};
use momentfit::surrogate::{CopulaTable, OutputMoments};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Resolved, RunConfig};
use crate::error::CliError;

/// Output directory plus the provenance stamped into every artifact.
pub struct Artifacts {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl Artifacts {
    pub fn new(dir: &Path, hash: String, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash,
            seed,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(format!("writing {}", p.display()), e))
    }

    /// JSON object with `config_hash` and `seed` added to `payload`.
    pub fn json<T: Serialize>(&self, name: &str, payload: &T) -> Result<(), CliError> {
        let mut v = serde_json::to_value(payload)?;
        if let Value::Object(m) = &mut v {
            m.insert("config_hash".into(), json!(self.hash));
            m.insert("seed".into(), json!(self.seed));
        }
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV preceded by a `#` provenance line.
    pub fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut buf = format!("# config_hash={} seed={}\n", self.hash, self.seed).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush().map_err(|e| CliError::io(name, e))?;
        }
        self.write(name, &buf)
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn load_data(cfg: &RunConfig) -> Result<SnapshotData, CliError> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::missing_data("`data` must name a CSV file (create one with `generate`)"))?;
    if !path.exists() {
        return Err(CliError::missing_data(format!("data file {} does not exist", path.display())));
    }
    Ok(SnapshotData::load(path)?)
}

fn experiment(cfg: &RunConfig, r: &Resolved) -> Result<Experiment<BuiltinModel>, CliError> {
    let forward = r.forward(cfg)?;
    let data = load_data(cfg)?;
    Ok(Experiment::new(forward, data)?)
}

pub fn generate(r: &Resolved, out: &Artifacts) -> Result<(), CliError> {
    let spec = r.encoding.decode(&r.xi)?;
    let mut rng = stream_rng(out.seed, Purpose::Data, 0);
    let data = SnapshotData::simulate(&r.problem, &spec, r.n_per_time, &mut rng)?;
    let mut buf = format!("# config_hash={} seed={}\n", out.hash, out.seed).into_bytes();
    data.write_csv(&mut buf)?;
    out.write("data.csv", &buf)
}

#[derive(Serialize)]
struct FitReport<'a> {
    names: Vec<String>,
    xi: &'a [f64],
    natural: Vec<f64>,
    loglik: f64,
    spec: SpecDoc,
    starts: &'a [momentfit::inference::StartReport],
}

fn fit_mle(cfg: &RunConfig, r: &Resolved, exp: &Experiment<BuiltinModel>, seed: u64) -> Result<MleResult, CliError> {
    Ok(maximize(|x| exp.value(x), &r.xi, &exp.bounds(), cfg.fit.starts, seed, &cfg.fit.optimizer)?)
}

fn fit_report<'a>(r: &Resolved, mle: &'a MleResult) -> Result<FitReport<'a>, CliError> {
    Ok(FitReport {
        names: r.encoding.names(),
        xi: &mle.xi,
        natural: r.encoding.natural(&mle.xi),
        loglik: mle.loglik,
        spec: SpecDoc::from(&r.encoding.decode(&mle.xi)?),
        starts: &mle.starts,
    })
}

pub fn fit(cfg: &RunConfig, r: &Resolved, out: &Artifacts) -> Result<(), CliError> {
    let exp = experiment(cfg, r)?;
    let mle = fit_mle(cfg, r, &exp, out.seed)?;
    out.json("fit.json", &fit_report(r, &mle)?)
}

pub fn profiles(cfg: &RunConfig, r: &Resolved, out: &Artifacts) -> Result<(), CliError> {
    let exp = experiment(cfg, r)?;
    let mle = fit_mle(cfg, r, &exp, out.seed)?;
    let names = if cfg.profile.parameters.is_empty() {
        r.encoding.names()
    } else {
        cfg.profile.parameters.clone()
    };
    let opts = ProfileOptions {
        points: cfg.profile.points,
        range: None,
        optimizer: cfg.profile.optimizer.clone(),
    };
    let mut results: Vec<ProfileResult> = Vec::new();
    for name in &names {
        let i = r
            .encoding
            .index_of(name)
            .ok_or_else(|| CliError::schema(format!("profile parameter `{name}` is not a slot")))?;
        results.push(profile(|x| exp.value(x), &mle.xi, mle.loglik, &exp.bounds(), i, name, &opts)?);
    }
    let mut rows = Vec::new();
    for p in &results {
        for pt in &p.points {
            rows.push(vec![p.name.clone(), num(pt.phi), pt.value.map(num).unwrap_or_default()]);
        }
    }
    out.csv("profile.csv", &["parameter", "phi", "value"].map(String::from), &rows)?;
    out.json(
        "profile.json",
        &json!({ "mle": fit_report(r, &mle)?, "profiles": results }),
    )
}

pub fn sample(cfg: &RunConfig, r: &Resolved, out: &Artifacts) -> Result<(), CliError> {
    let exp = experiment(cfg, r)?;
    let bounds = exp.bounds();
    let chains = mcmc(|x| exp.value(x), Some(&r.xi), &bounds, &cfg.mcmc, out.seed)?;
    let names = r.encoding.names();
    let mut header: Vec<String> = ["chain", "iteration", "log_post"].map(String::from).to_vec();
    header.extend(names.iter().cloned());
    let mut rows = Vec::new();
    for c in &chains {
        for (k, (x, lp)) in c.samples.iter().zip(&c.log_post).enumerate() {
            let mut row = vec![c.index.to_string(), k.to_string(), num(*lp)];
            row.extend(x.iter().map(|&v| num(v)));
            rows.push(row);
        }
    }
    out.csv("chains.csv", &header, &rows)?;
    let (map, map_loglik) = map_estimate(|x| exp.value(x), &chains, &bounds, &cfg.fit.optimizer)?;
    let (mean, cov) = pooled_moments(&chains, cfg.mcmc.burn_in);
    let summary: Vec<Value> = chains
        .iter()
        .map(|c| {
            json!({
                "chain": c.index,
                "start": c.start,
                "acceptance_rate": c.acceptance_rate(),
                "window_acceptance": c.window_acceptance,
                "adaptation": c.adaptation,
            })
        })
        .collect();
    out.json(
        "mcmc_summary.json",
        &json!({
            "names": names,
            "chains": summary,
            "burn_in": cfg.mcmc.burn_in,
            "posterior_mean": mean,
            "posterior_cov": cov,
            "map": map,
            "map_loglik": map_loglik,
        }),
    )
}

/// Range covering every component's bulk at one time.
fn grid_range(per_component: &[&OutputMoments], i: usize, width: f64) -> (f64, f64) {
    per_component.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
        let sd = m.var(i).sqrt();
        (lo.min(m.mu[i] - width * sd), hi.max(m.mu[i] + width * sd))
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

pub fn density(cfg: &RunConfig, r: &Resolved, out: &Artifacts) -> Result<(), CliError> {
    let forward = r.forward(cfg)?;
    let surrogates = forward.surrogates(&r.xi)?;
    let moments = forward.moments(&r.xi)?;
    let times = &r.problem.plan.times;
    let q = r.problem.n_outputs();
    let mut rows = Vec::new();
    let mut joint = Vec::new();
    for (t, d) in surrogates.iter().enumerate() {
        let comps: Vec<&OutputMoments> = moments.iter().map(|(_, m)| &m[t]).collect();
        let ranges: Vec<(f64, f64)> = (0..q).map(|i| grid_range(&comps, i, cfg.density.width)).collect();
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            for y in linspace(lo, hi, cfg.density.points) {
                rows.push(vec![num(times[t]), (i + 1).to_string(), num(y), num(d.marginal_logpdf(i, y).exp())]);
            }
        }
        if q == 2 {
            let (g1, g2) = (
                linspace(ranges[0].0, ranges[0].1, cfg.density.joint_points),
                linspace(ranges[1].0, ranges[1].1, cfg.density.joint_points),
            );
            for &a in &g1 {
                for &b in &g2 {
                    joint.push(vec![num(times[t]), num(a), num(b), num(d.logpdf(&[a, b]).exp())]);
                }
            }
        }
    }
    out.csv("density.csv", &["time", "output", "y", "density"].map(String::from), &rows)?;
    if q == 2 {
        out.csv("density_joint.csv", &["time", "y1", "y2", "density"].map(String::from), &joint)?;
    }
    Ok(())
}

pub fn copula_table(cfg: &RunConfig, out: &Artifacts) -> Result<(), CliError> {
    let table = CopulaTable::build(cfg.copula.clone())?;
    let path = cfg.copula_table.clone().unwrap_or_else(|| out.path("copula_table.bin"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(format!("creating {}", parent.display()), e))?;
    }
    table.save(&path)?;
    out.json("copula_table.json", &json!({ "path": path, "grid": cfg.copula }))
}

/// Moments of a mixture from those of its components.
fn mixture_moments(parts: &[(f64, &OutputMoments)]) -> OutputMoments {
    let n = parts[0].1.n();
    let mut mu = vec![0.0; n];
    for (w, m) in parts {
        for i in 0..n {
            mu[i] += w * m.mu[i];
        }
    }
    let mut sigma = vec![0.0; n * n];
    let mut third = vec![0.0; n];
    for (w, m) in parts {
        for i in 0..n {
            let di = m.mu[i] - mu[i];
            for j in 0..n {
                sigma[i * n + j] += w * (m.cov(i, j) + di * (m.mu[j] - mu[j]));
            }
            let v = m.var(i);
            third[i] += w * (m.omega[i] * v.powf(1.5) + 3.0 * v * di + di.powi(3));
        }
    }
    let omega = (0..n).map(|i| third[i] / sigma[i * n + i].powf(1.5)).collect();
    OutputMoments {
        mu,
        sigma,
        omega,
        jittered: parts.iter().any(|(_, m)| m.jittered),
    }
}

pub fn validate(cfg: &RunConfig, r: &Resolved, out: &Artifacts) -> Result<(), CliError> {
    let forward = r.forward(cfg)?;
    let spec = forward.decode(&r.xi)?;
    let moments = forward.moments(&r.xi)?;
    let surrogates = forward.surrogates(&r.xi)?;
    let v = &cfg.validate;
    let set = sample_outputs_with(&r.problem, &spec, v.samples, out.seed, OnFailure::Skip)?;
    let fresh = sample_outputs_with(&r.problem, &spec, v.ks_samples, out.seed.wrapping_add(1), OnFailure::Skip)?;
    let mut per_time = Vec::new();
    for (t, d) in surrogates.iter().enumerate() {
        let parts: Vec<(f64, &OutputMoments)> = moments.iter().map(|(w, m)| (*w, &m[t])).collect();
        let predicted = mixture_moments(&parts);
        let empirical = empirical_moments(&set.block(t), v.groups)?;
        let z = z_scores(&predicted, &empirical);
        let marginals: Vec<_> = (0..d.dim())
            .map(|i| {
                compare_marginal(&fresh.column(t, i), |y| d.marginal_cdf(i, y), |y| d.marginal_logpdf(i, y))
            })
            .collect();
        per_time.push(json!({
            "time": r.problem.plan.times[t],
            "predicted": predicted,
            "empirical": empirical.moments,
            "standard_error": empirical.se,
            "degenerate": empirical.degenerate,
            "z": z,
            "max_z": z.iter().copied().fold(0.0, f64::max),
            "marginals": marginals,
        }));
    }
    out.json(
        "validate.json",
        &json!({
            "surrogate": r.kind,
            "samples": set.len(),
            "skipped_draws": set.skipped.len() + fresh.skipped.len(),
            "times": per_time,
        }),
    )
}
