//! Gaussian-copula correlation table for pairs of shifted-gamma marginals.
//!
//! A Gaussian copula with parameter `rho_tilde` joining two standardized
//! gamma marginals induces a Pearson correlation `F(rho_tilde)` that is
//! smaller in magnitude. The table stores the inverse map, so that the
//! surrogate reproduces the propagated correlation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gamma_quantile, gauss_hermite, ln_gamma, norm_cdf, norm_logpdf, norm_sf};

const MAGIC: &[u8; 9] = b"MFCOPULA\n";
const VERSION: u32 = 1;
const SKEW_MAX: f64 = 2.0;
const Z_RANGE: f64 = 16.0;
const Z_STEP: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopulaGrid {
    /// Nodes per skewness axis on `[0, 2]`.
    pub n_skew: usize,
    /// Nodes on the target correlation axis `[-rho_max, rho_max]`.
    pub n_rho: usize,
    pub rho_max: f64,
    /// Gauss-Hermite nodes per dimension of the forward quadrature.
    pub quad_nodes: usize,
    /// Forward-map evaluation points on `[-forward_max, forward_max]`.
    pub n_forward: usize,
    pub forward_max: f64,
}

impl Default for CopulaGrid {
    fn default() -> Self {
        Self {
            n_skew: 21,
            n_rho: 41,
            rho_max: 0.99,
            quad_nodes: 64,
            n_forward: 401,
            forward_max: 0.999,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    grid: CopulaGrid,
    len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CopulaTable {
    grid: CopulaGrid,
    /// `values[(i1 * n_skew + i2) * n_rho + ir]`.
    values: Vec<f64>,
}

/// Standardized gamma quantile `g(z) = (Q(Phi(z)) - k) / sqrt(k)` on a
/// uniform grid, evaluated by cubic Hermite interpolation.
struct Standardized {
    identity: bool,
    g: Vec<f64>,
    dg: Vec<f64>,
}

impl Standardized {
    fn new(omega: f64) -> Self {
        if omega.abs() < 1e-12 {
            return Self {
                identity: true,
                g: Vec::new(),
                dg: Vec::new(),
            };
        }
        let k = 4.0 / (omega * omega);
        let sk = k.sqrt();
        let lg = ln_gamma(k);
        let n = (2.0 * Z_RANGE / Z_STEP).round() as usize + 1;
        let mut g = Vec::with_capacity(n);
        let mut dg = Vec::with_capacity(n);
        for i in 0..n {
            let z = -Z_RANGE + i as f64 * Z_STEP;
            let x = gamma_quantile(k, norm_cdf(z), norm_sf(z));
            let ln_pdf = (k - 1.0) * x.ln() - x - lg;
            g.push((x - k) / sk);
            dg.push((norm_logpdf(z) - ln_pdf).exp() / sk);
        }
        Self {
            identity: false,
            g,
            dg,
        }
    }

    #[inline]
    fn eval(&self, z: f64) -> f64 {
        if self.identity {
            return z;
        }
        let n = self.g.len();
        let u = (z + Z_RANGE) / Z_STEP;
        if u <= 0.0 {
            return self.g[0] + self.dg[0] * (z + Z_RANGE);
        }
        if u >= (n - 1) as f64 {
            return self.g[n - 1] + self.dg[n - 1] * (z - Z_RANGE);
        }
        let i = u as usize;
        let t = u - i as f64;
        let (y0, y1) = (self.g[i], self.g[i + 1]);
        let (d0, d1) = (self.dg[i] * Z_STEP, self.dg[i + 1] * Z_STEP);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * d1
    }
}

struct Quadrature {
    z: Vec<f64>,
    w: Vec<f64>,
}

impl Quadrature {
    fn new(n: usize) -> Self {
        let (z, w) = gauss_hermite(n);
        Self { z, w }
    }

    fn mean_sd(&self, g: &Standardized) -> (f64, f64) {
        let (mut m, mut m2) = (0.0, 0.0);
        for (z, w) in self.z.iter().zip(&self.w) {
            let v = g.eval(*z);
            m += w * v;
            m2 += w * v * v;
        }
        (m, (m2 - m * m).sqrt())
    }

    /// Pearson correlation of `(g1(Z1), g2(Z2))` with `corr(Z1, Z2) = r`.
    fn correlation(&self, g1: &Standardized, g2: &Standardized, r: f64) -> f64 {
        let (m1, s1) = self.mean_sd(g1);
        let (m2, s2) = self.mean_sd(g2);
        let c = (1.0 - r * r).max(0.0).sqrt();
        let mut acc = 0.0;
        for (zi, wi) in self.z.iter().zip(&self.w) {
            let a = g1.eval(*zi) - m1;
            let inner: f64 = self.z.iter().zip(&self.w).map(|(zj, wj)| wj * g2.eval(r * zi + c * zj)).sum();
            acc += wi * a * (inner - m2);
        }
        acc / (s1 * s2)
    }
}

/// Pearson correlation induced by a Gaussian copula with parameter
/// `rho_tilde` between standardized gamma marginals of skewness `omega1`
/// and `omega2` (non-negative).
pub fn forward_correlation(omega1: f64, omega2: f64, rho_tilde: f64, quad_nodes: usize) -> f64 {
    let q = Quadrature::new(quad_nodes);
    q.correlation(&Standardized::new(omega1), &Standardized::new(omega2), rho_tilde)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Invert a nondecreasing piecewise-linear map given at `(x, y)` nodes;
/// targets beyond the attainable range saturate at the end nodes.
fn invert(x: &[f64], y: &[f64], target: f64) -> f64 {
    let n = x.len();
    if target <= y[0] {
        return x[0];
    }
    if target >= y[n - 1] {
        return x[n - 1];
    }
    let i = y.partition_point(|&v| v <= target).clamp(1, n - 1);
    let (y0, y1) = (y[i - 1], y[i]);
    if y1 <= y0 {
        return x[i - 1];
    }
    x[i - 1] + (x[i] - x[i - 1]) * (target - y0) / (y1 - y0)
}

impl CopulaTable {
    pub fn build(grid: CopulaGrid) -> Result<Self> {
        if grid.n_skew < 2 || grid.n_rho < 2 || grid.n_forward < 3 || grid.quad_nodes < 2 {
            return Err(Error::TableBuild("grid needs at least two nodes per axis".into()));
        }
        if !(grid.rho_max > 0.0 && grid.rho_max < 1.0 && grid.forward_max > 0.0 && grid.forward_max < 1.0) {
            return Err(Error::TableBuild("correlation bounds must lie in (0, 1)".into()));
        }
        let skews = linspace(0.0, SKEW_MAX, grid.n_skew);
        let margins: Vec<Standardized> = skews.par_iter().map(|&w| Standardized::new(w)).collect();
        let quad = Quadrature::new(grid.quad_nodes);
        let forward = linspace(-grid.forward_max, grid.forward_max, grid.n_forward);
        let targets = linspace(-grid.rho_max, grid.rho_max, grid.n_rho);

        let pairs: Vec<(usize, usize)> =
            (0..grid.n_skew).flat_map(|i| (i..grid.n_skew).map(move |j| (i, j))).collect();
        let slices: Vec<Result<Vec<f64>>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let f: Vec<f64> = forward.iter().map(|&r| quad.correlation(&margins[i], &margins[j], r)).collect();
                if let Some(k) = f.windows(2).position(|w| w[1] < w[0] - 1e-12) {
                    return Err(Error::TableBuild(format!(
                        "forward map not monotone at skewness ({}, {}), rho_tilde = {}; raise quad_nodes",
                        skews[i], skews[j], forward[k]
                    )));
                }
                Ok(targets.iter().map(|&t| if t == 0.0 { 0.0 } else { invert(&forward, &f, t) }).collect())
            })
            .collect();

        let (ns, nr) = (grid.n_skew, grid.n_rho);
        let mut values = vec![0.0; ns * ns * nr];
        for (&(i, j), slice) in pairs.iter().zip(slices) {
            let slice = slice?;
            values[(i * ns + j) * nr..(i * ns + j + 1) * nr].copy_from_slice(&slice);
            values[(j * ns + i) * nr..(j * ns + i + 1) * nr].copy_from_slice(&slice);
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &CopulaGrid {
        &self.grid
    }

    pub fn skew_nodes(&self) -> Vec<f64> {
        linspace(0.0, SKEW_MAX, self.grid.n_skew)
    }

    pub fn rho_nodes(&self) -> Vec<f64> {
        linspace(-self.grid.rho_max, self.grid.rho_max, self.grid.n_rho)
    }

    /// Stored value at grid node `(i1, i2, ir)`.
    pub fn node(&self, i1: usize, i2: usize, ir: usize) -> f64 {
        self.values[(i1 * self.grid.n_skew + i2) * self.grid.n_rho + ir]
    }

    /// Copula parameter reproducing correlation `rho` between marginals of
    /// signed skewness `omega1`, `omega2`.
    pub fn rho(&self, omega1: f64, omega2: f64, rho: f64) -> f64 {
        let s = if (omega1 < 0.0) != (omega2 < 0.0) { -1.0 } else { 1.0 };
        let g = &self.grid;
        let r = (s * rho).clamp(-g.rho_max, g.rho_max);
        let axis = |x: f64, lo: f64, hi: f64, n: usize| {
            let u = ((x - lo) / (hi - lo) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
            let i = (u as usize).min(n - 2);
            (i, u - i as f64)
        };
        let (a, ta) = axis(omega1.abs(), 0.0, SKEW_MAX, g.n_skew);
        let (b, tb) = axis(omega2.abs(), 0.0, SKEW_MAX, g.n_skew);
        let (c, tc) = axis(r, -g.rho_max, g.rho_max, g.n_rho);
        let mut acc = 0.0;
        for (da, wa) in [(0, 1.0 - ta), (1, ta)] {
            for (db, wb) in [(0, 1.0 - tb), (1, tb)] {
                for (dc, wc) in [(0, 1.0 - tc), (1, tc)] {
                    let w = wa * wb * wc;
                    if w != 0.0 {
                        acc += w * self.node(a + da, b + db, c + dc);
                    }
                }
            }
        }
        s * acc
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            version: VERSION,
            grid: self.grid.clone(),
            len: self.values.len(),
        })?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 9];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::TableFormat("bad magic bytes".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len);
        if len > 1 << 20 {
            return Err(Error::TableFormat(format!("header length {len} is implausible")));
        }
        let mut header = vec![0u8; len as usize];
        r.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header).map_err(|e| Error::TableFormat(e.to_string()))?;
        if header.version != VERSION {
            return Err(Error::TableFormat(format!("unsupported version {}", header.version)));
        }
        let g = &header.grid;
        if header.len != g.n_skew * g.n_skew * g.n_rho || g.n_skew < 2 || g.n_rho < 2 {
            return Err(Error::TableFormat("value count does not match the grid".into()));
        }
        let mut values = Vec::with_capacity(header.len);
        let mut buf = [0u8; 8];
        for _ in 0..header.len {
            r.read_exact(&mut buf).map_err(|_| Error::TableFormat("truncated value block".into()))?;
            values.push(f64::from_le_bytes(buf));
        }
        if r.read(&mut buf)? != 0 {
            return Err(Error::TableFormat("trailing bytes after value block".into()));
        }
        Ok(Self {
            grid: header.grid,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
