//! From a parameter distribution to per-time output moments and surrogate
//! densities.

use std::sync::Arc;

use crate::dist::{mixture_components, moments_of, AtomicSpec, DistSpec};
use crate::dual::eval_with_derivs_on;
use crate::encoding::Encoding;
use crate::error::{Error, Result};
use crate::models::{Model, Problem};
use crate::real::Real;
use crate::surrogate::{fit_surrogate, mixture_surrogate, propagate, CopulaTable, OutputMoments, SurrogateDensity, SurrogateKind};

/// Output moments at every observation time for an atomic distribution.
pub fn moments_at<M: Model, T: Real>(problem: &Problem<M>, spec: &AtomicSpec<T>) -> Result<Vec<OutputMoments<T>>> {
    if spec.dim() != problem.dim() {
        return Err(Error::Config(format!(
            "distribution has {} parameters, the problem needs {}",
            spec.dim(),
            problem.dim()
        )));
    }
    let input = moments_of(spec)?;
    let active = spec.random_indices();
    let derivs = eval_with_derivs_on(|x| problem.outputs(x), &spec.mean(), &active)?;
    let input = input.restrict(&active);
    let q = problem.n_outputs();
    (0..problem.n_times())
        .map(|i| {
            let block: Vec<usize> = (i * q..(i + 1) * q).collect();
            propagate(&input, &derivs.select(&block))
        })
        .collect()
}

/// Mixture weights and per-time output moments for every atomic component.
pub fn component_moments<M: Model, T: Real>(
    problem: &Problem<M>,
    spec: &DistSpec<T>,
) -> Result<Vec<(T, Vec<OutputMoments<T>>)>> {
    mixture_components(spec)?
        .into_iter()
        .map(|(w, a)| Ok((w, moments_at(problem, &a)?)))
        .collect()
}

/// Per-time surrogate densities; mixtures are propagated per component and
/// mixed afterwards.
pub fn surrogates<M: Model>(
    problem: &Problem<M>,
    spec: &DistSpec,
    kind: SurrogateKind,
    table: Option<&CopulaTable>,
) -> Result<Vec<SurrogateDensity>> {
    let comps = component_moments(problem, spec)?;
    if let [(_, moments)] = &comps[..] {
        return moments.iter().map(|m| fit_surrogate(kind, m, table)).collect();
    }
    (0..problem.n_times())
        .map(|i| {
            let parts = comps
                .iter()
                .map(|(w, ms)| Ok((*w, fit_surrogate(kind, &ms[i], table)?)))
                .collect::<Result<Vec<_>>>()?;
            mixture_surrogate(parts)
        })
        .collect()
}

/// A problem, a hyperparameter encoding and a surrogate choice: everything
/// needed to turn a hyperparameter vector into densities.
#[derive(Clone)]
pub struct Forward<M> {
    pub problem: Problem<M>,
    pub encoding: Encoding,
    pub kind: SurrogateKind,
    pub table: Option<Arc<CopulaTable>>,
}

impl<M: Model> Forward<M> {
    pub fn new(problem: Problem<M>, encoding: Encoding, kind: SurrogateKind, table: Option<Arc<CopulaTable>>) -> Result<Self> {
        let names = encoding.template().names();
        if names != problem.names {
            return Err(Error::Config(format!(
                "distribution parameters {names:?} do not match the problem parameters {:?}",
                problem.names
            )));
        }
        Ok(Self {
            problem,
            encoding,
            kind,
            table,
        })
    }

    pub fn decode(&self, xi: &[f64]) -> Result<DistSpec> {
        self.encoding.decode(xi)
    }

    pub fn surrogates(&self, xi: &[f64]) -> Result<Vec<SurrogateDensity>> {
        let spec = self.decode(xi)?;
        surrogates(&self.problem, &spec, self.kind, self.table.as_deref())
    }

    pub fn moments(&self, xi: &[f64]) -> Result<Vec<(f64, Vec<OutputMoments>)>> {
        component_moments(&self.problem, &self.decode(xi)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{degenerate, normal, Branch};
    use crate::models::{LinearTwoPool, Logistic, Noise, ObservationPlan, Output};
    use approx::assert_relative_eq;

    fn logistic_problem() -> Problem<Logistic> {
        let plan = ObservationPlan {
            times: vec![0.0, 4.0, 10.0],
            outputs: vec![Output {
                state: 0,
                noise: Noise::Additive(3),
            }],
        };
        let names = ["r0", "lambda", "R", "eps"].map(String::from).to_vec();
        Problem::new(Logistic, plan, names).unwrap()
    }

    #[test]
    fn degenerate_spec_gives_point_values() {
        let p = logistic_problem();
        let spec = AtomicSpec::independent(vec![
            degenerate("r0", 50.0),
            degenerate("lambda", 1.0),
            degenerate("R", 300.0),
            degenerate("eps", 0.0),
        ]);
        let ms = moments_at(&p, &spec).unwrap();
        let truth = p.outputs(&[50.0, 1.0, 300.0, 0.0]).unwrap();
        for (m, y) in ms.iter().zip(&truth) {
            assert_relative_eq!(m.mu[0], *y, max_relative = 1e-12);
            assert!(m.jittered && m.var(0) < 1e-5 * y * y);
        }
    }

    #[test]
    fn additive_noise_at_time_zero() {
        // r(0) = r0 exactly, so only the two variances add
        let p = logistic_problem();
        let spec = AtomicSpec::independent(vec![
            normal("r0", 50.0, 3.0),
            normal("lambda", 1.0, 0.05),
            normal("R", 300.0, 20.0),
            normal("eps", 0.0, 4.0),
        ]);
        let m = &moments_at(&p, &spec).unwrap()[0];
        assert_relative_eq!(m.mu[0], 50.0, epsilon = 1e-9);
        assert_relative_eq!(m.var(0), 25.0, epsilon = 1e-9);
        assert!(m.omega[0].abs() < 1e-9);
    }

    #[test]
    fn mixtures_mix_per_component() {
        let plan = ObservationPlan {
            times: vec![1.0, 3.0],
            outputs: vec![Output {
                state: 1,
                noise: Noise::None,
            }],
        };
        let names = ["k1", "k21", "k2", "x0"].map(String::from).to_vec();
        let p = Problem::new(LinearTwoPool, plan, names).unwrap();
        let comp = |k21: f64| {
            DistSpec::Atomic(AtomicSpec::independent(vec![
                degenerate("k1", 0.7),
                normal("k21", k21, 0.05),
                degenerate("k2", 0.4),
                degenerate("x0", 1.0),
            ]))
        };
        let mix = DistSpec::Mixture(vec![
            Branch { weight: 0.4, spec: comp(0.5) },
            Branch { weight: 0.6, spec: comp(0.7) },
        ]);
        let d = surrogates(&p, &mix, SurrogateKind::Normal, None).unwrap();
        let a = surrogates(&p, &comp(0.5), SurrogateKind::Normal, None).unwrap();
        let b = surrogates(&p, &comp(0.7), SurrogateKind::Normal, None).unwrap();
        for i in 0..2 {
            for y in [0.1, 0.2, 0.3] {
                let want = (0.4 * a[i].logpdf(&[y]).exp() + 0.6 * b[i].logpdf(&[y]).exp()).ln();
                assert_relative_eq!(d[i].logpdf(&[y]), want, max_relative = 1e-12);
            }
        }
    }
}
