//! Input parameter distributions and their central-moment tensors.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::DenseTensor;

/// Below this skewness a shifted gamma is treated as normal.
pub const SKEW_FALLBACK: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub enum Marginal<T = f64> {
    Normal { mean: T, sd: T },
    ShiftedGamma { mean: T, sd: T, skew: T },
    Uniform { mean: T, sd: T },
    Degenerate { value: T },
}

impl<T: Real> Marginal<T> {
    pub fn mean(&self) -> T {
        match *self {
            Marginal::Normal { mean, .. }
            | Marginal::ShiftedGamma { mean, .. }
            | Marginal::Uniform { mean, .. } => mean,
            Marginal::Degenerate { value } => value,
        }
    }

    pub fn sd(&self) -> T {
        match *self {
            Marginal::Normal { sd, .. }
            | Marginal::ShiftedGamma { sd, .. }
            | Marginal::Uniform { sd, .. } => sd,
            Marginal::Degenerate { .. } => T::zero(),
        }
    }

    /// Second, third and fourth central moments.
    pub fn central_moments(&self) -> (T, T, T) {
        let sd = self.sd();
        let v = sd * sd;
        match *self {
            Marginal::Normal { .. } => (v, T::zero(), v * v * 3.0),
            Marginal::ShiftedGamma { skew, .. } => {
                (v, skew * v * sd, v * v * (skew * skew * 1.5 + 3.0))
            }
            Marginal::Uniform { .. } => (v, T::zero(), v * v * 1.8),
            Marginal::Degenerate { .. } => (T::zero(), T::zero(), T::zero()),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Marginal::Normal { .. } => "normal",
            Marginal::ShiftedGamma { .. } => "shifted_gamma",
            Marginal::Uniform { .. } => "uniform",
            Marginal::Degenerate { .. } => "degenerate",
        }
    }

    fn to_f64(&self) -> Marginal<f64> {
        match *self {
            Marginal::Normal { mean, sd } => Marginal::Normal {
                mean: mean.value(),
                sd: sd.value(),
            },
            Marginal::ShiftedGamma { mean, sd, skew } => Marginal::ShiftedGamma {
                mean: mean.value(),
                sd: sd.value(),
                skew: skew.value(),
            },
            Marginal::Uniform { mean, sd } => Marginal::Uniform {
                mean: mean.value(),
                sd: sd.value(),
            },
            Marginal::Degenerate { value } => Marginal::Degenerate {
                value: value.value(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component<T = f64> {
    pub name: String,
    pub marginal: Marginal<T>,
}

/// Correlation between two normal components, by component index.
#[derive(Clone, Debug, PartialEq)]
pub struct Correlation<T = f64> {
    pub a: usize,
    pub b: usize,
    pub rho: T,
}

/// A distribution without mixture structure.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicSpec<T = f64> {
    pub components: Vec<Component<T>>,
    pub correlations: Vec<Correlation<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch<T = f64> {
    pub weight: T,
    pub spec: DistSpec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DistSpec<T = f64> {
    Atomic(AtomicSpec<T>),
    Mixture(Vec<Branch<T>>),
}

impl<T: Real> AtomicSpec<T> {
    pub fn independent(components: Vec<Component<T>>) -> Self {
        Self {
            components,
            correlations: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.components.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    pub fn mean(&self) -> Vec<T> {
        self.components.iter().map(|c| c.marginal.mean()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, c) in self.components.iter().enumerate() {
            let field = |f: &str| format!("parameters[{i}].{f}");
            if !seen.insert(c.name.as_str()) {
                return Err(Error::spec(field("name"), format!("duplicate name `{}`", c.name)));
            }
            let m = &c.marginal;
            if !m.mean().value().is_finite() {
                return Err(Error::spec(field("mean"), "must be finite"));
            }
            let sd = m.sd().value();
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(Error::spec(field("sd"), format!("must be finite and >= 0 (got {sd})")));
            }
            if let Marginal::ShiftedGamma { skew, .. } = m {
                if !skew.value().is_finite() {
                    return Err(Error::spec(field("skew"), "must be finite"));
                }
            }
        }
        let d = self.dim();
        let mut pairs = HashSet::new();
        for (k, c) in self.correlations.iter().enumerate() {
            let field = format!("correlation[{k}]");
            if c.a >= d || c.b >= d || c.a == c.b {
                return Err(Error::spec(field, "must name two distinct parameters"));
            }
            for idx in [c.a, c.b] {
                if !matches!(self.components[idx].marginal, Marginal::Normal { .. }) {
                    return Err(Error::spec(
                        field,
                        format!(
                            "`{}` is {}; correlation is only supported between normal parameters",
                            self.components[idx].name,
                            self.components[idx].marginal.family()
                        ),
                    ));
                }
            }
            if !pairs.insert((c.a.min(c.b), c.a.max(c.b))) {
                return Err(Error::spec(field, "pair listed twice"));
            }
            let r = c.rho.value();
            if !(r.is_finite() && r.abs() <= 1.0) {
                return Err(Error::spec(format!("{field}.rho"), format!("must lie in [-1, 1] (got {r})")));
            }
        }
        if !self.correlations.is_empty() {
            let mut c = DMatrix::<f64>::identity(d, d);
            for e in &self.correlations {
                c[(e.a, e.b)] = e.rho.value();
                c[(e.b, e.a)] = e.rho.value();
            }
            let min_eig = c.symmetric_eigenvalues().min();
            if min_eig < -1e-12 {
                return Err(Error::spec(
                    "correlation",
                    format!("correlation matrix is not positive semi-definite (eigenvalue {min_eig:.3e})"),
                ));
            }
        }
        Ok(())
    }

    /// Indices of components with positive variance.
    pub fn random_indices(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.components[i].marginal.sd().value() > 0.0)
            .collect()
    }

    pub fn to_f64(&self) -> AtomicSpec<f64> {
        AtomicSpec {
            components: self
                .components
                .iter()
                .map(|c| Component {
                    name: c.name.clone(),
                    marginal: c.marginal.to_f64(),
                })
                .collect(),
            correlations: self
                .correlations
                .iter()
                .map(|c| Correlation {
                    a: c.a,
                    b: c.b,
                    rho: c.rho.value(),
                })
                .collect(),
        }
    }
}

impl<T: Real> DistSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistSpec::Atomic(a) => a.validate(),
            DistSpec::Mixture(branches) => {
                if branches.is_empty() {
                    return Err(Error::spec("mixture", "needs at least one branch"));
                }
                let mut total = 0.0;
                for (i, b) in branches.iter().enumerate() {
                    let w = b.weight.value();
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(Error::spec(format!("mixture[{i}].weight"), format!("must be >= 0 (got {w})")));
                    }
                    total += w;
                    b.spec.validate()?;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::spec("mixture", format!("weights sum to {total}, expected 1")));
                }
                let flat = mixture_components(self)?;
                let names = flat[0].1.names();
                if flat.iter().any(|(_, s)| s.names() != names) {
                    return Err(Error::spec("mixture", "branches must list the same parameters in the same order"));
                }
                Ok(())
            }
        }
    }

    /// Parameter names in component order (of the first branch for mixtures).
    pub fn names(&self) -> Vec<String> {
        match self {
            DistSpec::Atomic(a) => a.names().into_iter().map(String::from).collect(),
            DistSpec::Mixture(b) => b.first().map(|b| b.spec.names()).unwrap_or_default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names().len()
    }

    pub fn is_mixture(&self) -> bool {
        matches!(self, DistSpec::Mixture(_))
    }

    pub fn to_f64(&self) -> DistSpec<f64> {
        match self {
            DistSpec::Atomic(a) => DistSpec::Atomic(a.to_f64()),
            DistSpec::Mixture(b) => DistSpec::Mixture(
                b.iter()
                    .map(|b| Branch {
                        weight: b.weight.value(),
                        spec: b.spec.to_f64(),
                    })
                    .collect(),
            ),
        }
    }
}

impl Marginal<f64> {
    /// The same marginal over another scalar type.
    pub fn lift<T: Real>(&self) -> Marginal<T> {
        match *self {
            Marginal::Normal { mean, sd } => Marginal::Normal {
                mean: T::cst(mean),
                sd: T::cst(sd),
            },
            Marginal::ShiftedGamma { mean, sd, skew } => Marginal::ShiftedGamma {
                mean: T::cst(mean),
                sd: T::cst(sd),
                skew: T::cst(skew),
            },
            Marginal::Uniform { mean, sd } => Marginal::Uniform {
                mean: T::cst(mean),
                sd: T::cst(sd),
            },
            Marginal::Degenerate { value } => Marginal::Degenerate { value: T::cst(value) },
        }
    }
}

impl AtomicSpec<f64> {
    pub fn lift<T: Real>(&self) -> AtomicSpec<T> {
        AtomicSpec {
            components: self
                .components
                .iter()
                .map(|c| Component {
                    name: c.name.clone(),
                    marginal: c.marginal.lift(),
                })
                .collect(),
            correlations: self
                .correlations
                .iter()
                .map(|c| Correlation {
                    a: c.a,
                    b: c.b,
                    rho: T::cst(c.rho),
                })
                .collect(),
        }
    }
}

impl DistSpec<f64> {
    pub fn lift<T: Real>(&self) -> DistSpec<T> {
        match self {
            DistSpec::Atomic(a) => DistSpec::Atomic(a.lift()),
            DistSpec::Mixture(b) => DistSpec::Mixture(
                b.iter()
                    .map(|b| Branch {
                        weight: T::cst(b.weight),
                        spec: b.spec.lift(),
                    })
                    .collect(),
            ),
        }
    }
}

/// Flatten (possibly nested) mixtures into weighted atomic components.
pub fn mixture_components<T: Real>(spec: &DistSpec<T>) -> Result<Vec<(T, AtomicSpec<T>)>> {
    fn walk<T: Real>(spec: &DistSpec<T>, w: T, out: &mut Vec<(T, AtomicSpec<T>)>) -> Result<()> {
        match spec {
            DistSpec::Atomic(a) => out.push((w, a.clone())),
            DistSpec::Mixture(branches) => {
                let total: f64 = branches.iter().map(|b| b.weight.value()).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::spec("mixture", format!("weights sum to {total}, expected 1")));
                }
                for b in branches {
                    walk(&b.spec, w * b.weight, out)?;
                }
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(spec, T::one(), &mut out)?;
    Ok(out)
}

/// Mean and central-moment tensors of an input distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct InputMoments<T = f64> {
    pub mean: Vec<T>,
    pub v: DenseTensor<T>,
    pub s: DenseTensor<T>,
    pub k: DenseTensor<T>,
}

impl<T: Real> InputMoments<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Moments of the sub-vector `idx` of the parameters.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        let d = idx.len();
        let mut v = DenseTensor::zeros(&[d, d]);
        let mut s = DenseTensor::zeros(&[d, d, d]);
        let mut k = DenseTensor::zeros(&[d, d, d, d]);
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                v.set(&[a, b], self.v.get(&[ia, ib]));
                for (c, &ic) in idx.iter().enumerate() {
                    s.set(&[a, b, c], self.s.get(&[ia, ib, ic]));
                    for (e, &ie) in idx.iter().enumerate() {
                        k.set(&[a, b, c, e], self.k.get(&[ia, ib, ic, ie]));
                    }
                }
            }
        }
        Self {
            mean: idx.iter().map(|&i| self.mean[i]).collect(),
            v,
            s,
            k,
        }
    }
}

/// Exact central moments of an atomic distribution.
pub fn moments_of<T: Real>(spec: &AtomicSpec<T>) -> Result<InputMoments<T>> {
    spec.validate()?;
    let d = spec.dim();
    let mut v = DenseTensor::zeros(&[d, d]);
    let mut s = DenseTensor::zeros(&[d, d, d]);
    let mut k = DenseTensor::zeros(&[d, d, d, d]);
    let cm: Vec<(T, T, T)> = spec.components.iter().map(|c| c.marginal.central_moments()).collect();
    for (a, m) in cm.iter().enumerate() {
        v.set(&[a, a], m.0);
        s.set(&[a, a, a], m.1);
    }
    for c in &spec.correlations {
        let sa = spec.components[c.a].marginal.sd();
        let sb = spec.components[c.b].marginal.sd();
        let cov = c.rho * sa * sb;
        v.set(&[c.a, c.b], cov);
        v.set(&[c.b, c.a], cov);
    }
    // Pairings over V, exact for the Gaussian block and for products of
    // independent components; non-Gaussian diagonals corrected afterwards.
    let vd = v.data().to_vec();
    let kd = k.data_mut();
    let mut o = 0;
    for a in 0..d {
        for b in 0..d {
            let vab = vd[a * d + b];
            for c in 0..d {
                let vac = vd[a * d + c];
                let vbc = vd[b * d + c];
                for e in 0..d {
                    kd[o] = vab * vd[c * d + e] + vac * vd[b * d + e] + vd[a * d + e] * vbc;
                    o += 1;
                }
            }
        }
    }
    for (a, m) in cm.iter().enumerate() {
        if !matches!(spec.components[a].marginal, Marginal::Normal { .. }) {
            k.set(&[a, a, a, a], m.2);
        }
    }
    Ok(InputMoments {
        mean: spec.mean(),
        v,
        s,
        k,
    })
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

/// Exact sampler for a validated `DistSpec<f64>`.
#[derive(Clone, Debug)]
pub struct Sampler {
    branches: Vec<(f64, AtomicSampler)>,
}

#[derive(Clone, Debug)]
struct AtomicSampler {
    marginals: Vec<Marginal>,
    mean: Vec<f64>,
    /// Correlated normal block: indices and lower Cholesky factor of the covariance.
    block: Vec<usize>,
    chol: Vec<f64>,
    gammas: Vec<Option<(Gamma<f64>, f64)>>,
}

impl Sampler {
    pub fn new(spec: &DistSpec) -> Result<Self> {
        spec.validate()?;
        let branches = mixture_components(spec)?
            .into_iter()
            .map(|(w, a)| Ok((w, AtomicSampler::new(&a)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { branches })
    }

    pub fn dim(&self) -> usize {
        self.branches[0].1.marginals.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut idx = 0;
        if self.branches.len() > 1 {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            idx = self.branches.len() - 1;
            for (i, (w, _)) in self.branches.iter().enumerate() {
                acc += w;
                if u < acc {
                    idx = i;
                    break;
                }
            }
        }
        self.branches[idx].1.sample(rng, out);
    }
}

impl AtomicSampler {
    fn new(spec: &AtomicSpec) -> Result<Self> {
        let mut in_block = vec![false; spec.dim()];
        for c in &spec.correlations {
            in_block[c.a] = true;
            in_block[c.b] = true;
        }
        let block: Vec<usize> = (0..spec.dim()).filter(|&i| in_block[i]).collect();
        let m = block.len();
        let mut chol = Vec::new();
        if m > 0 {
            let mut cov = DMatrix::<f64>::zeros(m, m);
            for (i, &a) in block.iter().enumerate() {
                let sa = spec.components[a].marginal.sd();
                cov[(i, i)] = sa * sa;
                for c in &spec.correlations {
                    let other = if c.a == a {
                        c.b
                    } else if c.b == a {
                        c.a
                    } else {
                        continue;
                    };
                    let j = block.iter().position(|&x| x == other).unwrap_or(i);
                    cov[(i, j)] = c.rho * sa * spec.components[other].marginal.sd();
                }
            }
            // Semi-definite blocks (|rho| = 1 or zero sd) get a tiny ridge.
            let l = match cov.clone().cholesky() {
                Some(c) => c.l(),
                None => {
                    let ridge = 1e-12 * cov.diagonal().max().max(f64::MIN_POSITIVE);
                    (cov + DMatrix::identity(m, m) * ridge)
                        .cholesky()
                        .ok_or_else(|| Error::spec("correlation", "covariance is not factorizable"))?
                        .l()
                }
            };
            chol = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
        }
        let gammas = spec
            .components
            .iter()
            .map(|c| match c.marginal {
                Marginal::ShiftedGamma { sd, skew, .. } if skew.abs() >= SKEW_FALLBACK && sd > 0.0 => {
                    let shape = 4.0 / (skew * skew);
                    let scale = sd * skew.abs() / 2.0;
                    Gamma::new(shape, scale)
                        .map(|g| Some((g, shape * scale)))
                        .map_err(|e| Error::spec(c.name.clone(), e.to_string()))
                }
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            marginals: spec.components.iter().map(|c| c.marginal.clone()).collect(),
            mean: spec.mean(),
            block,
            chol,
            gammas,
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (i, m) in self.marginals.iter().enumerate() {
            out[i] = match *m {
                Marginal::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
                Marginal::ShiftedGamma { mean, sd, skew } => match &self.gammas[i] {
                    Some((g, gmean)) => mean + skew.signum() * (g.sample(rng) - gmean),
                    None => mean + sd * rng.sample::<f64, _>(StandardNormal),
                },
                Marginal::Uniform { mean, sd } => {
                    let h = 3f64.sqrt() * sd;
                    mean - h + 2.0 * h * rng.random::<f64>()
                }
                Marginal::Degenerate { value } => value,
            };
        }
        let m = self.block.len();
        if m > 0 {
            let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            for (i, &a) in self.block.iter().enumerate() {
                let mut x = self.mean[a];
                for (j, zj) in z.iter().enumerate().take(i + 1) {
                    x += self.chol[i * m + j] * zj;
                }
                out[a] = x;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    ShiftedGamma,
    Uniform,
    Degenerate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDoc {
    pub name: String,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationDoc {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDoc {
    pub weight: f64,
    pub spec: SpecDoc,
}

/// Serialized form of a [`DistSpec`]: either `parameters` (with optional
/// `correlation`) or `mixture`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDoc {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<ParamDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlation: Vec<CorrelationDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mixture: Vec<BranchDoc>,
}

impl TryFrom<&SpecDoc> for DistSpec {
    type Error = Error;

    fn try_from(doc: &SpecDoc) -> Result<Self> {
        if !doc.mixture.is_empty() {
            if !doc.parameters.is_empty() || !doc.correlation.is_empty() {
                return Err(Error::spec("mixture", "cannot be combined with `parameters`"));
            }
            let branches = doc
                .mixture
                .iter()
                .map(|b| {
                    Ok(Branch {
                        weight: b.weight,
                        spec: DistSpec::try_from(&b.spec)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let spec = DistSpec::Mixture(branches);
            spec.validate()?;
            return Ok(spec);
        }
        if doc.parameters.is_empty() {
            return Err(Error::spec("parameters", "at least one parameter is required"));
        }
        let mut components = Vec::with_capacity(doc.parameters.len());
        for (i, p) in doc.parameters.iter().enumerate() {
            let need = |v: Option<f64>, f: &str| {
                v.ok_or_else(|| Error::spec(format!("parameters[{i}].{f}"), format!("required for family {:?}", p.family)))
            };
            let forbid = |v: Option<f64>, f: &str| match v {
                Some(_) => Err(Error::spec(format!("parameters[{i}].{f}"), format!("not used by family {:?}", p.family))),
                None => Ok(()),
            };
            let marginal = match p.family {
                Family::Normal | Family::Uniform => {
                    forbid(p.skew, "skew")?;
                    forbid(p.value, "value")?;
                    let (mean, sd) = (need(p.mean, "mean")?, need(p.sd, "sd")?);
                    if p.family == Family::Normal {
                        Marginal::Normal { mean, sd }
                    } else {
                        Marginal::Uniform { mean, sd }
                    }
                }
                Family::ShiftedGamma => {
                    forbid(p.value, "value")?;
                    Marginal::ShiftedGamma {
                        mean: need(p.mean, "mean")?,
                        sd: need(p.sd, "sd")?,
                        skew: need(p.skew, "skew")?,
                    }
                }
                Family::Degenerate => {
                    forbid(p.sd, "sd")?;
                    forbid(p.skew, "skew")?;
                    let value = match (p.value, p.mean) {
                        (Some(v), None) | (None, Some(v)) => v,
                        _ => return Err(Error::spec(format!("parameters[{i}].value"), "give exactly one of `value` or `mean`")),
                    };
                    Marginal::Degenerate { value }
                }
            };
            components.push(Component {
                name: p.name.clone(),
                marginal,
            });
        }
        let mut atomic = AtomicSpec::independent(components);
        for (k, c) in doc.correlation.iter().enumerate() {
            let find = |n: &str| {
                atomic
                    .index_of(n)
                    .ok_or_else(|| Error::spec(format!("correlation[{k}]"), format!("unknown parameter `{n}`")))
            };
            let (a, b) = (find(&c.a)?, find(&c.b)?);
            atomic.correlations.push(Correlation { a, b, rho: c.rho });
        }
        atomic.validate()?;
        Ok(DistSpec::Atomic(atomic))
    }
}

impl From<&DistSpec> for SpecDoc {
    fn from(spec: &DistSpec) -> Self {
        match spec {
            DistSpec::Mixture(branches) => SpecDoc {
                mixture: branches
                    .iter()
                    .map(|b| BranchDoc {
                        weight: b.weight,
                        spec: SpecDoc::from(&b.spec),
                    })
                    .collect(),
                ..Default::default()
            },
            DistSpec::Atomic(a) => SpecDoc {
                parameters: a
                    .components
                    .iter()
                    .map(|c| {
                        let mut p = ParamDoc {
                            name: c.name.clone(),
                            family: Family::Normal,
                            mean: None,
                            sd: None,
                            skew: None,
                            value: None,
                        };
                        match c.marginal {
                            Marginal::Normal { mean, sd } => {
                                p.mean = Some(mean);
                                p.sd = Some(sd);
                            }
                            Marginal::Uniform { mean, sd } => {
                                p.family = Family::Uniform;
                                p.mean = Some(mean);
                                p.sd = Some(sd);
                            }
                            Marginal::ShiftedGamma { mean, sd, skew } => {
                                p.family = Family::ShiftedGamma;
                                p.mean = Some(mean);
                                p.sd = Some(sd);
                                p.skew = Some(skew);
                            }
                            Marginal::Degenerate { value } => {
                                p.family = Family::Degenerate;
                                p.value = Some(value);
                            }
                        }
                        p
                    })
                    .collect(),
                correlation: a
                    .correlations
                    .iter()
                    .map(|c| CorrelationDoc {
                        a: a.components[c.a].name.clone(),
                        b: a.components[c.b].name.clone(),
                        rho: c.rho,
                    })
                    .collect(),
                mixture: Vec::new(),
            },
        }
    }
}

impl DistSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SpecDoc = serde_json::from_str(s)?;
        DistSpec::try_from(&doc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpecDoc::from(self))?)
    }
}

/// Shorthand constructors.
pub fn normal(name: &str, mean: f64, sd: f64) -> Component {
    Component {
        name: name.into(),
        marginal: Marginal::Normal { mean, sd },
    }
}

pub fn shifted_gamma(name: &str, mean: f64, sd: f64, skew: f64) -> Component {
    Component {
        name: name.into(),
        marginal: Marginal::ShiftedGamma { mean, sd, skew },
    }
}

pub fn uniform(name: &str, mean: f64, sd: f64) -> Component {
    Component {
        name: name.into(),
        marginal: Marginal::Uniform { mean, sd },
    }
}

pub fn degenerate(name: &str, value: f64) -> Component {
    Component {
        name: name.into(),
        marginal: Marginal::Degenerate { value },
    }
}
