//! Monte Carlo ground truth: exact sampling of model outputs, empirical
//! moments with jackknife errors, Kolmogorov–Smirnov tests and kernel
//! density estimates.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{DistSpec, Sampler};
use crate::error::{Error, Result};
use crate::models::{Model, Problem};
use crate::rng::{stream_rng, Purpose};
use crate::surrogate::OutputMoments;

const CHUNK: usize = 4096;

/// Simulated outputs: `n` rows of `n_times * q` values (all times of one
/// parameter draw on a row).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub model: String,
    pub times: Vec<f64>,
    pub q: usize,
    pub seed: u64,
    pub xi: Option<Vec<f64>>,
    pub values: Vec<f64>,
    /// Draws dropped under [`OnFailure::Skip`], by draw index.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<usize>,
}

/// What to do with a parameter draw for which the model cannot be solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnFailure {
    #[default]
    Error,
    /// Drop the draw and record its index.
    Skip,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.values.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> usize {
        self.times.len() * self.q
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.width();
        &self.values[n * w..(n + 1) * w]
    }

    /// Output `j` at time index `i` over all rows.
    pub fn column(&self, i: usize, j: usize) -> Vec<f64> {
        let c = i * self.q + j;
        self.values.iter().skip(c).step_by(self.width()).copied().collect()
    }

    /// The `q` outputs at time index `i`, one vector per row.
    pub fn block(&self, i: usize) -> Vec<Vec<f64>> {
        (0..self.len()).map(|n| self.row(n)[i * self.q..(i + 1) * self.q].to_vec()).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["sample".to_string()];
        for t in &self.times {
            for j in 1..=self.q {
                header.push(format!("y{j}@t={t}"));
            }
        }
        wr.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
        for n in 0..self.len() {
            let mut rec = vec![n.to_string()];
            rec.extend(self.row(n).iter().map(|v| format!("{v:e}")));
            wr.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Draw `n` parameter vectors exactly from `spec` and evaluate the model.
/// Chunks use their own streams, so results do not depend on the thread
/// count.
pub fn sample_outputs<M: Model>(problem: &Problem<M>, spec: &DistSpec, n: usize, seed: u64) -> Result<SampleSet> {
    sample_outputs_with(problem, spec, n, seed, OnFailure::Error)
}

/// [`sample_outputs`] with a choice of failure handling.
pub fn sample_outputs_with<M: Model>(
    problem: &Problem<M>,
    spec: &DistSpec,
    n: usize,
    seed: u64,
    on_failure: OnFailure,
) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let sampler = Sampler::new(spec)?;
    if sampler.dim() != problem.dim() {
        return Err(Error::Config(format!(
            "distribution has {} parameters, the problem needs {}",
            sampler.dim(),
            problem.dim()
        )));
    }
    let chunks: Vec<usize> = (0..n.div_ceil(CHUNK)).collect();
    let parts = chunks
        .par_iter()
        .map(|&c| {
            let mut rng = stream_rng(seed, Purpose::Oracle, c as u64);
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut theta = vec![0.0; sampler.dim()];
            let mut out = Vec::with_capacity((hi - lo) * problem.n_times() * problem.n_outputs());
            let mut skipped = Vec::new();
            for k in lo..hi {
                sampler.sample(&mut rng, &mut theta);
                match problem.outputs(&theta) {
                    Ok(y) => out.extend(y),
                    Err(_) if on_failure == OnFailure::Skip => skipped.push(k),
                    Err(e) => {
                        return Err(Error::Sample {
                            index: k,
                            source: Box::new(e),
                        })
                    }
                }
            }
            Ok((out, skipped))
        })
        .collect::<Result<Vec<_>>>()?;
    let (values, skipped): (Vec<Vec<f64>>, Vec<Vec<usize>>) = parts.into_iter().unzip();
    Ok(SampleSet {
        model: problem.model.name().to_string(),
        times: problem.plan.times.clone(),
        q: problem.n_outputs(),
        seed,
        xi: None,
        values: values.concat(),
        skipped: skipped.concat(),
    })
}

/// Sample moments of one time block with jackknife standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub moments: OutputMoments,
    pub se: OutputMoments,
    /// Columns with zero sample variance (their skewness is reported as 0).
    pub degenerate: Vec<bool>,
    pub n: usize,
}

#[derive(Clone, Default)]
struct Sums {
    n: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
}

impl Sums {
    fn new(q: usize) -> Self {
        Self {
            n: 0.0,
            s1: vec![0.0; q],
            s2: vec![0.0; q * q],
            s3: vec![0.0; q],
        }
    }

    fn add(&mut self, y: &[f64]) {
        let q = y.len();
        self.n += 1.0;
        for i in 0..q {
            self.s1[i] += y[i];
            self.s3[i] += y[i] * y[i] * y[i];
            for j in 0..q {
                self.s2[i * q + j] += y[i] * y[j];
            }
        }
    }

    fn minus(&self, o: &Sums) -> Sums {
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Sums {
            n: self.n - o.n,
            s1: sub(&self.s1, &o.s1),
            s2: sub(&self.s2, &o.s2),
            s3: sub(&self.s3, &o.s3),
        }
    }

    /// (mean, unbiased covariance, skewness) of the shifted data.
    fn estimate(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let q = self.s1.len();
        let n = self.n;
        let m: Vec<f64> = self.s1.iter().map(|s| s / n).collect();
        let mut cov = vec![0.0; q * q];
        for i in 0..q {
            for j in 0..q {
                cov[i * q + j] = (self.s2[i * q + j] - n * m[i] * m[j]) / (n - 1.0);
            }
        }
        let skew = (0..q)
            .map(|i| {
                let m2 = self.s2[i * q + i] / n - m[i] * m[i];
                let m3 = self.s3[i] / n - 3.0 * m[i] * self.s2[i * q + i] / n + 2.0 * m[i].powi(3);
                if m2 > 0.0 {
                    m3 / m2.powf(1.5)
                } else {
                    0.0
                }
            })
            .collect();
        (m, cov, skew)
    }
}

/// Mean, unbiased covariance and standardized third central moment of the
/// rows, with delete-a-group jackknife standard errors over `groups`
/// contiguous groups.
pub fn empirical_moments(rows: &[Vec<f64>], groups: usize) -> Result<EmpiricalMoments> {
    let n = rows.len();
    if n < 10 {
        return Err(Error::Data(format!("need at least 10 samples for moments (got {n})")));
    }
    let q = rows[0].len();
    let g = groups.clamp(2, n);
    // shift by a pilot mean so the power sums do not cancel
    let pilot: Vec<f64> = (0..q).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n as f64).collect();
    let mut parts = vec![Sums::new(q); g];
    let mut shifted = vec![0.0; q];
    for (k, r) in rows.iter().enumerate() {
        for i in 0..q {
            shifted[i] = r[i] - pilot[i];
        }
        parts[k * g / n].add(&shifted);
    }
    let mut total = Sums::new(q);
    for p in &parts {
        total.n += p.n;
        for (a, b) in total.s1.iter_mut().zip(&p.s1) {
            *a += b;
        }
        for (a, b) in total.s2.iter_mut().zip(&p.s2) {
            *a += b;
        }
        for (a, b) in total.s3.iter_mut().zip(&p.s3) {
            *a += b;
        }
    }
    let (m, cov, skew) = total.estimate();
    let flat = |(m, c, s): (Vec<f64>, Vec<f64>, Vec<f64>)| -> Vec<f64> { m.into_iter().chain(c).chain(s).collect() };
    let full = flat((m.clone(), cov.clone(), skew.clone()));
    let loo: Vec<Vec<f64>> = parts.iter().map(|p| flat(total.minus(p).estimate())).collect();
    let k = full.len();
    let gf = g as f64;
    let se: Vec<f64> = (0..k)
        .map(|c| {
            let mean = loo.iter().map(|v| v[c]).sum::<f64>() / gf;
            ((gf - 1.0) / gf * loo.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>()).sqrt()
        })
        .collect();
    let degenerate: Vec<bool> = (0..q).map(|i| !(cov[i * q + i] > 0.0)).collect();
    Ok(EmpiricalMoments {
        moments: OutputMoments {
            mu: m.iter().zip(&pilot).map(|(a, b)| a + b).collect(),
            sigma: cov,
            omega: skew,
            jittered: false,
        },
        se: OutputMoments {
            mu: se[..q].to_vec(),
            sigma: se[q..q + q * q].to_vec(),
            omega: se[q + q * q..].to_vec(),
            jittered: false,
        },
        degenerate,
        n,
    })
}

/// Largest deviation of each entry of `predicted` from `empirical`, in
/// standard errors. Entries with zero standard error compare exactly.
pub fn z_scores(predicted: &OutputMoments, empirical: &EmpiricalMoments) -> Vec<f64> {
    let z = |p: f64, e: f64, se: f64| {
        if se > 0.0 {
            (p - e).abs() / se
        } else if p == e {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let e = &empirical.moments;
    let s = &empirical.se;
    let mut out = Vec::new();
    for (a, (b, c)) in predicted.mu.iter().zip(e.mu.iter().zip(&s.mu)) {
        out.push(z(*a, *b, *c));
    }
    for (a, (b, c)) in predicted.sigma.iter().zip(e.sigma.iter().zip(&s.sigma)) {
        out.push(z(*a, *b, *c));
    }
    for (a, (b, c)) in predicted.omega.iter().zip(e.omega.iter().zip(&s.omega)) {
        out.push(z(*a, *b, *c));
    }
    out
}

/// Kolmogorov distribution tail `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-300 || term < 1e-17 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS statistic and p-value, with Stephens' finite-sample
/// scaling of the asymptotic distribution.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &v) in x.iter().enumerate() {
        let f = cdf(v).clamp(0.0, 1.0);
        d = d.max(((k + 1) as f64 / n - f).abs()).max((f - k as f64 / n).abs());
    }
    let en = n.sqrt();
    (d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))
}

/// `cdf` is non-decreasing on `points` evenly spaced nodes of `[lo, hi]`.
pub fn is_monotone<F: Fn(f64) -> f64>(cdf: F, lo: f64, hi: f64, points: usize) -> bool {
    let mut prev = f64::NEG_INFINITY;
    for k in 0..points {
        let v = cdf(lo + (hi - lo) * k as f64 / (points - 1).max(1) as f64);
        if v.is_nan() || v < prev {
            return false;
        }
        prev = v;
    }
    true
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let quant = |p: f64| {
        let h = p * (n - 1.0);
        let i = h.floor() as usize;
        let j = (i + 1).min(s.len() - 1);
        s[i] + (h - i as f64) * (s[j] - s[i])
    };
    let iqr = quant(0.75) - quant(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian kernel density estimate on `grid`.
pub fn kde(samples: &[f64], grid: &[f64], bandwidth: f64) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let norm = 1.0 / (n * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let reach = 9.0 * bandwidth;
    grid.iter()
        .map(|&g| {
            let lo = s.partition_point(|&v| v < g - reach);
            let hi = s.partition_point(|&v| v <= g + reach);
            s[lo..hi]
                .iter()
                .map(|&v| {
                    let z = (g - v) / bandwidth;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect()
}

/// Local maxima of a density on a grid that rise at least `prominence`
/// times the global maximum above the lowest point separating them from
/// any higher peak.
pub fn count_modes(density: &[f64], prominence: f64) -> usize {
    let n = density.len();
    let top = density.iter().copied().fold(0.0, f64::max);
    if n == 0 || top <= 0.0 {
        return 0;
    }
    let mut count = 0;
    for k in 0..n {
        let v = density[k];
        let left = k == 0 || density[k - 1] < v;
        let right = k == n - 1 || density[k + 1] <= v;
        if !(left && right) {
            continue;
        }
        // walk both ways to the nearest higher point, tracking the dip
        let dip = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
            let mut low = v;
            for i in range {
                if density[i] > v {
                    return Some(low);
                }
                low = low.min(density[i]);
            }
            None
        };
        let l = dip(&mut (0..k).rev());
        let r = dip(&mut (k + 1..n));
        let base = match (l, r) {
            (None, None) => 0.0,
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (Some(a), Some(b)) => a.max(b),
        };
        if v - base >= prominence * top {
            count += 1;
        }
    }
    count
}

/// Comparison of a surrogate marginal with simulated outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub n: usize,
    pub ks_d: f64,
    pub ks_p: f64,
    pub cdf_monotone: bool,
    pub sample_modes: usize,
    pub surrogate_modes: usize,
    pub bimodality_mismatch: bool,
}

/// KS test and mode comparison of samples against a surrogate marginal.
pub fn compare_marginal<C, P>(samples: &[f64], cdf: C, logpdf: P) -> MarginalReport
where
    C: Fn(f64) -> f64,
    P: Fn(f64) -> f64,
{
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo).max(1e-12);
    let grid: Vec<f64> = (0..512).map(|k| lo - pad + (hi - lo + 2.0 * pad) * k as f64 / 511.0).collect();
    let cdf_monotone = is_monotone(&cdf, lo - pad, hi + pad, 1000);
    let (ks_d, ks_p) = ks_statistic(samples, &cdf);
    let dens = kde(samples, &grid, silverman_bandwidth(samples));
    let sur: Vec<f64> = grid.iter().map(|&x| logpdf(x).exp()).collect();
    let sample_modes = count_modes(&dens, 0.05);
    let surrogate_modes = count_modes(&sur, 0.05);
    MarginalReport {
        n: samples.len(),
        ks_d,
        ks_p,
        cdf_monotone,
        sample_modes,
        surrogate_modes,
        bimodality_mismatch: (sample_modes > 1) != (surrogate_modes > 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{degenerate, normal, AtomicSpec};
    use crate::models::{Logistic, Noise, ObservationPlan, Output};
    use crate::special::norm_cdf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn logistic(spec: Vec<crate::dist::Component>) -> (Problem<Logistic>, DistSpec) {
        let plan = ObservationPlan {
            times: vec![0.0, 10.0],
            outputs: vec![Output {
                state: 0,
                noise: Noise::Additive(3),
            }],
        };
        let names = ["r0", "lambda", "R", "eps"].map(String::from).to_vec();
        (Problem::new(Logistic, plan, names).unwrap(), DistSpec::Atomic(AtomicSpec::independent(spec)))
    }

    #[test]
    fn degenerate_spec_repeats_the_point() {
        let (p, s) = logistic(vec![
            degenerate("r0", 50.0),
            degenerate("lambda", 1.0),
            degenerate("R", 300.0),
            degenerate("eps", 0.0),
        ]);
        let set = sample_outputs(&p, &s, 5000, 1).unwrap();
        let want = p.outputs(&[50.0, 1.0, 300.0, 0.0]).unwrap();
        assert!((0..set.len()).all(|n| set.row(n) == &want[..]));
        let em = empirical_moments(&set.block(1), 200).unwrap();
        assert!(em.degenerate[0] && em.moments.sigma[0] == 0.0);
    }

    #[test]
    fn same_seed_same_samples() {
        let (p, s) = logistic(vec![
            normal("r0", 50.0, 3.0),
            normal("lambda", 1.0, 0.05),
            normal("R", 300.0, 20.0),
            normal("eps", 0.0, 4.0),
        ]);
        let a = sample_outputs(&p, &s, 10_000, 5).unwrap();
        assert_eq!(a, sample_outputs(&p, &s, 10_000, 5).unwrap());
        assert_ne!(a.values, sample_outputs(&p, &s, 10_000, 6).unwrap().values);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10_001);
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..200_000)
            .map(|_| vec![rng.sample::<f64, _>(StandardNormal), 3.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)])
            .collect();
        let e = empirical_moments(&rows, 200).unwrap();
        let want = OutputMoments {
            mu: vec![0.0, 3.0],
            sigma: vec![1.0, 0.0, 0.0, 4.0],
            omega: vec![0.0, 0.0],
            jittered: false,
        };
        let z = z_scores(&want, &e);
        assert!(z.iter().all(|&z| z < 5.0), "{z:?}");
        // the jackknife error of a mean is close to sd / sqrt(n)
        assert!((e.se.mu[1] / (2.0 / 200_000f64.sqrt()) - 1.0).abs() < 0.25);
    }

    #[test]
    fn ks_limits() {
        let xs: Vec<f64> = (0..100).map(|k| -10.0 - k as f64).collect();
        let (d, p) = ks_statistic(&xs, |x| if x < 0.0 { 0.0 } else { 1.0 - (-x).exp() });
        assert_eq!(d, 1.0);
        assert!(p < 1e-20);
        // exact quantiles give D = 1/(2n)
        let n = 1000;
        let ys: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect();
        let (d, p) = ks_statistic(&ys, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        assert!(p > 0.999);
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let zs: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(ks_statistic(&zs, norm_cdf).1 > 0.01);
        assert!(ks_statistic(&zs, |x| norm_cdf(x - 0.5)).1 < 1e-6);
    }

    #[test]
    fn kde_and_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bi: Vec<f64> = (0..20_000)
            .map(|k| rng.sample::<f64, _>(StandardNormal) + if k % 2 == 0 { -4.0 } else { 4.0 })
            .collect();
        let grid: Vec<f64> = (0..400).map(|k| -10.0 + 20.0 * k as f64 / 399.0).collect();
        let d = kde(&bi, &grid, silverman_bandwidth(&bi));
        let mass: f64 = d.iter().sum::<f64>() * 20.0 / 399.0;
        assert!((mass - 1.0).abs() < 1e-3);
        assert_eq!(count_modes(&d, 0.05), 2);
        let uni: Vec<f64> = bi.iter().take(10_000).map(|x| x.abs()).collect();
        let u = kde(&uni, &grid, silverman_bandwidth(&uni));
        assert_eq!(count_modes(&u, 0.05), 1);
        let r = compare_marginal(&bi, |x| norm_cdf(x / 4.1), |x| -0.5 * (x / 4.1).powi(2) - 4.1f64.ln() - 0.919);
        assert!(r.bimodality_mismatch && r.cdf_monotone && r.ks_p < 1e-6);
    }
}
