//! Hyperparameter vectors: which entries of a template distribution are
//! free, and in which coordinates they are searched.

use serde::{Deserialize, Serialize};

use crate::dist::{AtomicSpec, DistSpec, Marginal};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Mean,
    Sd,
    Skew,
    Corr,
    /// Weight of branch 0 of a two-branch mixture; branch 1 gets `1 - w`.
    Weight,
}

/// Map from the natural value to the encoded coordinate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    Log,
    Atanh,
}

impl Transform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Atanh => x.atanh(),
        }
    }

    pub fn inverse<T: Real>(self, u: T) -> T {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp(),
            Transform::Atanh => u.tanh(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    /// Label of the encoded coordinate, e.g. `ln_sigma_R`.
    pub name: String,
    pub target: Target,
    /// Component the slot acts on (unused for weights).
    #[serde(default)]
    pub param: String,
    /// Second component of a correlation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub with: Option<String>,
    /// Restrict to one top-level mixture branch; all branches otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<usize>,
    #[serde(default)]
    pub transform: Transform,
    /// Bounds on the natural (untransformed) value.
    pub bounds: [f64; 2],
}

impl Slot {
    pub fn new(name: &str, target: Target, param: &str, transform: Transform, bounds: [f64; 2]) -> Self {
        Self {
            name: name.into(),
            target,
            param: param.into(),
            with: None,
            branch: None,
            transform,
            bounds,
        }
    }

    pub fn with(mut self, other: &str) -> Self {
        self.with = Some(other.into());
        self
    }

    pub fn in_branch(mut self, b: usize) -> Self {
        self.branch = Some(b);
        self
    }
}

/// A template distribution plus the ordered list of free coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    template: DistSpec,
    slots: Vec<Slot>,
}

fn each_atomic<T>(
    spec: &mut DistSpec<T>,
    branch: Option<usize>,
    f: &mut dyn FnMut(&mut AtomicSpec<T>) -> Result<()>,
) -> Result<()> {
    match (spec, branch) {
        (DistSpec::Atomic(a), None) => f(a),
        (DistSpec::Mixture(b), None) => b.iter_mut().try_for_each(|b| each_atomic(&mut b.spec, None, f)),
        (DistSpec::Mixture(b), Some(i)) => {
            let n = b.len();
            let br = b
                .get_mut(i)
                .ok_or_else(|| Error::Config(format!("branch {i} out of range (mixture has {n})")))?;
            each_atomic(&mut br.spec, None, f)
        }
        (DistSpec::Atomic(_), Some(i)) => Err(Error::Config(format!("branch {i} given but the template is not a mixture"))),
    }
}

fn apply<T: Real>(spec: &mut DistSpec<T>, slot: &Slot, value: T) -> Result<()> {
    if slot.target == Target::Weight {
        return match spec {
            DistSpec::Mixture(b) if b.len() == 2 => {
                b[0].weight = value;
                b[1].weight = T::one() - value;
                Ok(())
            }
            _ => Err(Error::Config(format!("slot `{}`: weights need a two-branch mixture", slot.name))),
        };
    }
    let bad = |why: &str| Error::Config(format!("slot `{}`: {why}", slot.name));
    each_atomic(spec, slot.branch, &mut |a| {
        let i = a.index_of(&slot.param).ok_or_else(|| bad(&format!("unknown parameter `{}`", slot.param)))?;
        if slot.target == Target::Corr {
            let other = slot.with.as_deref().ok_or_else(|| bad("correlation needs `with`"))?;
            let j = a.index_of(other).ok_or_else(|| bad(&format!("unknown parameter `{other}`")))?;
            let c = a
                .correlations
                .iter_mut()
                .find(|c| (c.a, c.b) == (i, j) || (c.a, c.b) == (j, i))
                .ok_or_else(|| bad("the template declares no such correlation"))?;
            c.rho = value;
            return Ok(());
        }
        let m = &mut a.components[i].marginal;
        match (slot.target, m) {
            (Target::Mean, Marginal::Degenerate { value: v }) => *v = value,
            (
                Target::Mean,
                Marginal::Normal { mean, .. } | Marginal::ShiftedGamma { mean, .. } | Marginal::Uniform { mean, .. },
            ) => *mean = value,
            (Target::Sd, Marginal::Normal { sd, .. } | Marginal::ShiftedGamma { sd, .. } | Marginal::Uniform { sd, .. }) => {
                *sd = value
            }
            (Target::Skew, Marginal::ShiftedGamma { skew, .. }) => *skew = value,
            (t, m) => return Err(bad(&format!("{t:?} does not apply to a {} parameter", m.family()))),
        }
        Ok(())
    })
}

fn read(spec: &DistSpec, slot: &Slot) -> Result<f64> {
    let mut copy = spec.clone();
    if slot.target == Target::Weight {
        return match spec {
            DistSpec::Mixture(b) if b.len() == 2 => Ok(b[0].weight),
            _ => Err(Error::Config(format!("slot `{}`: weights need a two-branch mixture", slot.name))),
        };
    }
    let mut first = None;
    each_atomic(&mut copy, slot.branch, &mut |a| {
        first.get_or_insert_with(|| a.clone());
        Ok(())
    })?;
    let a = first.ok_or_else(|| Error::Config(format!("slot `{}`: empty template", slot.name)))?;
    let i = a
        .index_of(&slot.param)
        .ok_or_else(|| Error::Config(format!("slot `{}`: unknown parameter `{}`", slot.name, slot.param)))?;
    Ok(match (slot.target, &a.components[i].marginal) {
        (Target::Corr, _) => {
            let j = slot.with.as_deref().and_then(|w| a.index_of(w)).unwrap_or(usize::MAX);
            a.correlations
                .iter()
                .find(|c| (c.a, c.b) == (i, j) || (c.a, c.b) == (j, i))
                .map(|c| c.rho)
                .unwrap_or(0.0)
        }
        (Target::Mean, m) => m.mean(),
        (Target::Sd, m) => m.sd(),
        (Target::Skew, Marginal::ShiftedGamma { skew, .. }) => *skew,
        (Target::Skew, _) => 0.0,
        (Target::Weight, _) => unreachable!(),
    })
}

impl Encoding {
    pub fn new(template: DistSpec, slots: Vec<Slot>) -> Result<Self> {
        template.validate()?;
        let mut names = std::collections::HashSet::new();
        for s in &slots {
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!("slot name `{}` used twice", s.name)));
            }
            let [lo, hi] = s.bounds;
            let (a, b) = (s.transform.forward(lo), s.transform.forward(hi));
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Config(format!(
                    "slot `{}`: bounds {:?} are invalid under the {:?} transform",
                    s.name, s.bounds, s.transform
                )));
            }
            // resolves against the template
            let mut t = template.clone();
            apply(&mut t, s, read(&template, s)?)?;
        }
        Ok(Self { template, slots })
    }

    pub fn template(&self) -> &DistSpec {
        &self.template
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.slots.iter().map(|s| s.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    /// Bounds in encoded coordinates.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.slots
            .iter()
            .map(|s| (s.transform.forward(s.bounds[0]), s.transform.forward(s.bounds[1])))
            .collect()
    }

    pub fn decode<T: Real>(&self, xi: &[T]) -> Result<DistSpec<T>> {
        if xi.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                left: vec![self.dim()],
                right: vec![xi.len()],
            });
        }
        let mut spec = self.template.lift::<T>();
        for (s, &u) in self.slots.iter().zip(xi) {
            apply(&mut spec, s, s.transform.inverse(u))?;
        }
        Ok(spec)
    }

    /// Encoded coordinates of `spec`, which must share the template's shape.
    pub fn encode(&self, spec: &DistSpec) -> Result<Vec<f64>> {
        self.slots.iter().map(|s| Ok(s.transform.forward(read(spec, s)?))).collect()
    }

    /// Encoded coordinates of the template itself.
    pub fn initial(&self) -> Result<Vec<f64>> {
        self.encode(&self.template)
    }

    /// Natural values of each coordinate.
    pub fn natural(&self, xi: &[f64]) -> Vec<f64> {
        self.slots.iter().zip(xi).map(|(s, &u)| s.transform.inverse(u)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{normal, shifted_gamma, Branch, Correlation};
    use approx::assert_relative_eq;

    fn logistic_template() -> DistSpec {
        let mut a = AtomicSpec::independent(vec![
            normal("r0", 50.0, 3.0),
            normal("lambda", 1.0, 0.05),
            normal("R", 300.0, 20.0),
            normal("eps", 0.0, 4.0),
        ]);
        a.correlations.push(Correlation { a: 1, b: 2, rho: 0.0 });
        DistSpec::Atomic(a)
    }

    fn slots() -> Vec<Slot> {
        vec![
            Slot::new("mu_R", Target::Mean, "R", Transform::Identity, [250.0, 350.0]),
            Slot::new("ln_sigma_R", Target::Sd, "R", Transform::Log, [0.1, 100.0]),
            Slot::new("rho", Target::Corr, "lambda", Transform::Identity, [-0.9, 0.9]).with("R"),
        ]
    }

    #[test]
    fn round_trip() {
        let e = Encoding::new(logistic_template(), slots()).unwrap();
        let xi = vec![310.0, 2.5, 0.4];
        let spec = e.decode(&xi).unwrap();
        let back = e.encode(&spec).unwrap();
        for (a, b) in xi.iter().zip(&back) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
        let DistSpec::Atomic(a) = &spec else { panic!() };
        assert_relative_eq!(a.components[2].marginal.sd(), 2.5f64.exp());
        assert_eq!(a.correlations[0].rho, 0.4);
        assert_relative_eq!(e.initial().unwrap()[1], 20f64.ln());
        assert_relative_eq!(e.bounds()[1].0, 0.1f64.ln());
    }

    #[test]
    fn rejects_bad_slots() {
        let t = logistic_template();
        let mut s = slots();
        s.push(Slot::new("skew", Target::Skew, "R", Transform::Identity, [-1.0, 1.0]));
        assert!(Encoding::new(t.clone(), s).is_err());
        let s = vec![Slot::new("x", Target::Mean, "nope", Transform::Identity, [0.0, 1.0])];
        assert!(Encoding::new(t.clone(), s).is_err());
        let s = vec![Slot::new("x", Target::Sd, "R", Transform::Log, [0.0, 1.0])];
        assert!(Encoding::new(t, s).is_err());
    }

    #[test]
    fn mixture_slots() {
        let branch = |m: f64| Branch {
            weight: 0.5,
            spec: DistSpec::Atomic(AtomicSpec::independent(vec![normal("lambda", m, 0.05), shifted_gamma("R", 300.0, 20.0, 0.0)])),
        };
        let t = DistSpec::Mixture(vec![branch(0.9), branch(1.1)]);
        let s = vec![
            Slot::new("w", Target::Weight, "", Transform::Identity, [0.0, 1.0]),
            Slot::new("mu_1", Target::Mean, "lambda", Transform::Identity, [0.5, 1.5]).in_branch(0),
            Slot::new("mu_R", Target::Mean, "R", Transform::Identity, [250.0, 350.0]),
            Slot::new("omega_R", Target::Skew, "R", Transform::Identity, [-1.0, 1.0]),
        ];
        let e = Encoding::new(t, s).unwrap();
        let spec = e.decode(&[0.4, 0.8, 290.0, 0.3]).unwrap();
        let DistSpec::Mixture(b) = &spec else { panic!() };
        assert_eq!(b[0].weight, 0.4);
        assert_relative_eq!(b[1].weight, 0.6);
        let DistSpec::Atomic(a0) = &b[0].spec else { panic!() };
        let DistSpec::Atomic(a1) = &b[1].spec else { panic!() };
        assert_eq!(a0.components[0].marginal.mean(), 0.8);
        assert_eq!(a1.components[0].marginal.mean(), 1.1);
        assert_eq!(a1.components[1].marginal.mean(), 290.0);
        assert_eq!(e.encode(&spec).unwrap(), vec![0.4, 0.8, 290.0, 0.3]);
    }
}
