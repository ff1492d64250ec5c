//! Dynamical models and observation processes.
//!
//! The parameter vector `theta` of a [`Problem`] lists the model's
//! dynamical parameters first, in [`Model::param_names`] order, followed by
//! noise components referenced from the [`ObservationPlan`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::real::Real;

pub trait Model: Send + Sync {
    fn name(&self) -> &str;
    fn param_names(&self) -> Vec<String>;
    fn state_dim(&self) -> usize;
    /// States at each of `times` (ascending, `>= 0`).
    fn solve<S: Real>(&self, theta: &[S], times: &[f64]) -> Result<Vec<Vec<S>>>;

    fn n_params(&self) -> usize {
        self.param_names().len()
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Logistic growth of a radius, `r' = (lambda / 3) r (1 - r / R)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Logistic;

pub fn logistic<S: Real>(t: f64, r0: S, lambda: S, cap: S) -> Result<S> {
    if !(r0.value() > 0.0 && cap.value() > 0.0) {
        return Err(Error::Domain(format!(
            "logistic requires r0 > 0 and R > 0 (got r0 = {}, R = {})",
            r0.value(),
            cap.value()
        )));
    }
    Ok(cap / ((cap / r0 - 1.0) * (lambda * (-t / 3.0)).exp() + 1.0))
}

impl Model for Logistic {
    fn name(&self) -> &str {
        "logistic"
    }
    fn param_names(&self) -> Vec<String> {
        names(&["r0", "lambda", "R"])
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn solve<S: Real>(&self, p: &[S], times: &[f64]) -> Result<Vec<Vec<S>>> {
        times.iter().map(|&t| Ok(vec![logistic(t, p[0], p[1], p[2])?])).collect()
    }
}

/// Logistic growth with a strong Allee threshold `A`,
/// `r' = (lambda / 3) r (r / A - 1)(1 - r / R)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Allee {
    pub ode: OdeOptions,
}

impl Model for Allee {
    fn name(&self) -> &str {
        "allee"
    }
    fn param_names(&self) -> Vec<String> {
        names(&["r0", "lambda", "R", "A"])
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn solve<S: Real>(&self, p: &[S], times: &[f64]) -> Result<Vec<Vec<S>>> {
        let (lambda, cap, a) = (p[1], p[2], p[3]);
        if !(cap.value() > 0.0 && a.value() > 0.0) {
            return Err(Error::Domain("allee requires R > 0 and A > 0".into()));
        }
        let rate = lambda / 3.0;
        integrate(
            |_, y: &[S], dy: &mut [S]| {
                let r = y[0];
                dy[0] = rate * r * (r / a - 1.0) * (-(r / cap) + 1.0);
            },
            0.0,
            &[p[0]],
            times,
            &self.ode,
        )
    }
}

/// Two pools with linear transfer: `x1' = -(k21 + k1) x1`,
/// `x2' = k21 x1 - k2 x2`, `x1(0) = x0`, `x2(0) = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LinearTwoPool;

pub const NEAR_SINGULAR: f64 = 1e-8;

pub fn linear_two_pool<S: Real>(t: f64, k1: S, k21: S, k2: S, x0: S) -> (S, S) {
    let a = k21 + k1;
    let ea = (a * -t).exp();
    let x1 = x0 * ea;
    let gap = k2 - a;
    let x2 = if gap.value().abs() < NEAR_SINGULAR {
        // limit as k2 -> k21 + k1, first-order in the gap
        k21 * x0 * ea * t * (-(gap * (t / 2.0)) + 1.0)
    } else {
        k21 * x0 * (ea - (k2 * -t).exp()) / gap
    };
    (x1, x2)
}

impl Model for LinearTwoPool {
    fn name(&self) -> &str {
        "linear_two_pool"
    }
    fn param_names(&self) -> Vec<String> {
        names(&["k1", "k21", "k2", "x0"])
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn solve<S: Real>(&self, p: &[S], times: &[f64]) -> Result<Vec<Vec<S>>> {
        Ok(times
            .iter()
            .map(|&t| {
                let (x1, x2) = linear_two_pool(t, p[0], p[1], p[2], p[3]);
                vec![x1, x2]
            })
            .collect())
    }
}

/// Two pools with Michaelis-Menten transfer `k21 x1 / (V21 + x1)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct NonlinearTwoPool {
    pub ode: OdeOptions,
}

impl Model for NonlinearTwoPool {
    fn name(&self) -> &str {
        "nonlinear_two_pool"
    }
    fn param_names(&self) -> Vec<String> {
        names(&["k1", "k21", "V21", "k2", "x0"])
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn solve<S: Real>(&self, p: &[S], times: &[f64]) -> Result<Vec<Vec<S>>> {
        let (k1, k21, v21, k2, x0) = (p[0], p[1], p[2], p[3], p[4]);
        if !(v21.value() + x0.value() > 0.0) {
            return Err(Error::Domain("nonlinear_two_pool requires V21 + x1 > 0".into()));
        }
        integrate(
            |_, x: &[S], dx: &mut [S]| {
                let flux = k21 * x[0] / (v21 + x[0]);
                dx[0] = -(flux + k1 * x[0]);
                dx[1] = flux - k2 * x[1];
            },
            0.0,
            &[x0, S::zero()],
            times,
            &self.ode,
        )
    }
}

/// Right-hand side of a user-supplied ODE.
pub trait OdeSystem: Send + Sync {
    fn name(&self) -> &str;
    fn param_names(&self) -> Vec<String>;
    fn state_dim(&self) -> usize;
    fn initial<S: Real>(&self, theta: &[S]) -> Vec<S>;
    fn rhs<S: Real>(&self, t: f64, x: &[S], theta: &[S], dx: &mut [S]);
}

/// Adapter integrating an [`OdeSystem`] with the shared RK45 solver.
#[derive(Clone, Debug, Default)]
pub struct UserOde<O> {
    pub system: O,
    pub ode: OdeOptions,
}

impl<O: OdeSystem> Model for UserOde<O> {
    fn name(&self) -> &str {
        self.system.name()
    }
    fn param_names(&self) -> Vec<String> {
        self.system.param_names()
    }
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }
    fn solve<S: Real>(&self, p: &[S], times: &[f64]) -> Result<Vec<Vec<S>>> {
        let x0 = self.system.initial(p);
        integrate(|t, x: &[S], dx: &mut [S]| self.system.rhs(t, x, p, dx), 0.0, &x0, times, &self.ode)
    }
}

impl<M: Model> Model for Arc<M> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn param_names(&self) -> Vec<String> {
        (**self).param_names()
    }
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn solve<S: Real>(&self, theta: &[S], times: &[f64]) -> Result<Vec<Vec<S>>> {
        (**self).solve(theta, times)
    }
}

/// The built-in models behind one type, for configuration-driven use.
#[derive(Clone, Debug)]
pub enum BuiltinModel {
    Logistic(Logistic),
    Allee(Allee),
    LinearTwoPool(LinearTwoPool),
    NonlinearTwoPool(NonlinearTwoPool),
}

impl BuiltinModel {
    pub fn by_name(name: &str, ode: OdeOptions) -> Result<Self> {
        Ok(match name {
            "logistic" => Self::Logistic(Logistic),
            "allee" => Self::Allee(Allee { ode }),
            "linear_two_pool" => Self::LinearTwoPool(LinearTwoPool),
            "nonlinear_two_pool" => Self::NonlinearTwoPool(NonlinearTwoPool { ode }),
            other => {
                return Err(Error::Config(format!(
                    "unknown model `{other}` (expected logistic, allee, linear_two_pool or nonlinear_two_pool)"
                )))
            }
        })
    }
}

impl Model for BuiltinModel {
    fn name(&self) -> &str {
        match self {
            Self::Logistic(m) => m.name(),
            Self::Allee(m) => m.name(),
            Self::LinearTwoPool(m) => m.name(),
            Self::NonlinearTwoPool(m) => m.name(),
        }
    }
    fn param_names(&self) -> Vec<String> {
        match self {
            Self::Logistic(m) => m.param_names(),
            Self::Allee(m) => m.param_names(),
            Self::LinearTwoPool(m) => m.param_names(),
            Self::NonlinearTwoPool(m) => m.param_names(),
        }
    }
    fn state_dim(&self) -> usize {
        match self {
            Self::Logistic(m) => m.state_dim(),
            Self::Allee(m) => m.state_dim(),
            Self::LinearTwoPool(m) => m.state_dim(),
            Self::NonlinearTwoPool(m) => m.state_dim(),
        }
    }
    fn solve<S: Real>(&self, theta: &[S], times: &[f64]) -> Result<Vec<Vec<S>>> {
        match self {
            Self::Logistic(m) => m.solve(theta, times),
            Self::Allee(m) => m.solve(theta, times),
            Self::LinearTwoPool(m) => m.solve(theta, times),
            Self::NonlinearTwoPool(m) => m.solve(theta, times),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum Noise {
    None,
    Additive(usize),
    Multiplicative(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub state: usize,
    pub noise: Noise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationPlan {
    pub times: Vec<f64>,
    pub outputs: Vec<Output>,
}

impl ObservationPlan {
    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }
}

/// Apply an observation process to a model state.
pub fn observe<S: Real>(state: &[S], outputs: &[Output], theta: &[S]) -> Vec<S> {
    outputs
        .iter()
        .map(|o| {
            let y = state[o.state];
            match o.noise {
                Noise::None => y,
                Noise::Additive(i) => y + theta[i],
                Noise::Multiplicative(i) => y * theta[i],
            }
        })
        .collect()
}

/// A model bound to an observation plan and a parameter naming.
#[derive(Clone, Debug)]
pub struct Problem<M> {
    pub model: M,
    pub plan: ObservationPlan,
    pub names: Vec<String>,
}

impl<M: Model> Problem<M> {
    /// `names` is the full parameter list: the model's parameters first,
    /// then any noise components.
    pub fn new(model: M, plan: ObservationPlan, names: Vec<String>) -> Result<Self> {
        let p = model.n_params();
        let expected = model.param_names();
        if names.len() < p || names[..p] != expected[..] {
            return Err(Error::Config(format!(
                "parameters must start with the {} parameters {:?} in order (got {:?})",
                model.name(),
                expected,
                names
            )));
        }
        if plan.times.is_empty() || plan.outputs.is_empty() {
            return Err(Error::Config("observation plan needs times and outputs".into()));
        }
        if plan.times.windows(2).any(|w| w[1] <= w[0]) || plan.times[0] < 0.0 {
            return Err(Error::Config("observation times must be non-negative and strictly ascending".into()));
        }
        let mut used = Vec::new();
        for (j, o) in plan.outputs.iter().enumerate() {
            if o.state >= model.state_dim() {
                return Err(Error::Config(format!("output {j} observes state {} of {}", o.state, model.state_dim())));
            }
            if let Noise::Additive(i) | Noise::Multiplicative(i) = o.noise {
                if i < p || i >= names.len() {
                    return Err(Error::Config(format!(
                        "output {j}: noise index {i} must refer to a non-dynamical parameter ({p}..{})",
                        names.len()
                    )));
                }
                if used.contains(&i) {
                    return Err(Error::Config(format!("noise component `{}` used twice", names[i])));
                }
                used.push(i);
            }
        }
        Ok(Self { model, plan, names })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_times(&self) -> usize {
        self.plan.times.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.plan.n_outputs()
    }

    /// Stacked outputs `[f(t_1), f(t_2), ...]`, each block of length
    /// `n_outputs`.
    pub fn outputs<S: Real>(&self, theta: &[S]) -> Result<Vec<S>> {
        let p = self.model.n_params();
        let states = self.model.solve(&theta[..p], &self.plan.times)?;
        let mut out = Vec::with_capacity(states.len() * self.n_outputs());
        for x in &states {
            out.extend(observe(x, &self.plan.outputs, theta));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::eval_with_derivs;
    use approx::assert_relative_eq;

    fn fd_check<F: Fn(&[f64]) -> Vec<f64>, G>(f: F, g: G, theta: &[f64], rel: f64)
    where
        G: FnOnce(&[crate::Dual2]) -> Result<Vec<crate::Dual2>>,
    {
        let d = eval_with_derivs(g, theta).unwrap();
        for a in 0..theta.len() {
            let h = 1e-5 * theta[a].abs().max(1e-3);
            let mut p = theta.to_vec();
            let mut m = theta.to_vec();
            p[a] += h;
            m[a] -= h;
            let (fp, fm) = (f(&p), f(&m));
            for i in 0..fp.len() {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let scale = fd.abs().max(1e-3 * d.value[i].abs()).max(1e-12);
                assert!((d.grad[i][a] - fd).abs() <= rel * scale, "output {i} param {a}: {} vs {fd}", d.grad[i][a]);
            }
        }
    }

    #[test]
    fn logistic_limits() {
        for t in [0.0, 1.0, 7.0] {
            assert_relative_eq!(logistic(t, 300.0, 1.0, 300.0).unwrap(), 300.0, epsilon = 1e-12);
        }
        assert_relative_eq!(logistic(0.0, 50.0, 1.0, 300.0).unwrap(), 50.0, epsilon = 1e-12);
        assert!((logistic(1e4, 50.0, 1.0, 300.0).unwrap() - 300.0).abs() < 1e-8);
        assert!(matches!(logistic(1.0, -1.0, 1.0, 300.0), Err(Error::Domain(_))));
    }

    #[test]
    fn logistic_closed_form_matches_rk45() {
        let opts = OdeOptions::default();
        let (r0, l, cap) = (50.0, 1.0, 300.0);
        let times: Vec<f64> = (0..8).map(|i| 2.0 * i as f64).collect();
        let num = integrate(|_, y: &[f64], dy: &mut [f64]| dy[0] = l / 3.0 * y[0] * (1.0 - y[0] / cap), 0.0, &[r0], &times, &opts)
            .unwrap();
        for (t, y) in times.iter().zip(&num) {
            let exact = logistic(*t, r0, l, cap).unwrap();
            assert!((y[0] - exact).abs() <= 1e-8 * exact);
        }
    }

    #[test]
    fn logistic_derivatives_match_finite_differences() {
        let theta = [50.0, 1.0, 300.0];
        fd_check(
            |p| vec![logistic(10.0, p[0], p[1], p[2]).unwrap()],
            |x| Ok(vec![logistic(10.0, x[0], x[1], x[2])?]),
            &theta,
            1e-6,
        );
    }

    #[test]
    fn allee_branches() {
        let m = Allee::default();
        let eq = m.solve(&[50.0, 3.0, 300.0, 50.0], &[1.0, 10.0]).unwrap();
        assert!(eq.iter().all(|x| (x[0] - 50.0).abs() < 1e-9));
        let down = m.solve(&[49.0, 3.0, 300.0, 50.0], &[20.0]).unwrap();
        assert!(down[0][0] < 1.0, "{}", down[0][0]);
        let up = m.solve(&[51.0, 3.0, 300.0, 50.0], &[20.0]).unwrap();
        assert!(up[0][0] > 299.0, "{}", up[0][0]);
    }

    #[test]
    fn allee_derivatives_match_finite_differences() {
        let m = Allee::default();
        fd_check(
            |p| vec![m.solve(p, &[5.0]).unwrap()[0][0]],
            |x| Ok(vec![m.solve(x, &[5.0])?[0][0]]),
            &[51.0, 3.0, 300.0, 50.0],
            1e-5,
        );
    }

    #[test]
    fn linear_two_pool_cases() {
        let (x1, x2) = linear_two_pool(0.0, 0.7, 0.6, 0.4, 1.0);
        assert_eq!((x1, x2), (1.0, 0.0));
        for t in [0.5, 3.0, 7.0] {
            assert_eq!(linear_two_pool(t, 0.7, 0.0, 0.4, 1.0).1, 0.0);
        }
        let p = [0.7, 0.6, 0.4, 2.0];
        let times = [0.5, 1.5, 2.5, 3.5, 5.0, 7.0];
        let num = integrate(
            |_, x: &[f64], dx: &mut [f64]| {
                dx[0] = -(p[1] + p[0]) * x[0];
                dx[1] = p[1] * x[0] - p[2] * x[1];
            },
            0.0,
            &[p[3], 0.0],
            &times,
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in times.iter().zip(&num) {
            let (x1, x2) = linear_two_pool(*t, p[0], p[1], p[2], p[3]);
            // relative to the scale of the input dose
            assert!((x1 - y[0]).abs() < 1e-8 * p[3]);
            assert!((x2 - y[1]).abs() < 1e-8 * p[3]);
        }
    }

    #[test]
    fn linear_two_pool_singular_limit_is_continuous() {
        let t = 3.0;
        let at = linear_two_pool(t, 0.1, 0.3, 0.4, 1.0).1;
        let near = linear_two_pool(t, 0.1, 0.3, 0.4 + 1e-6, 1.0).1;
        assert_relative_eq!(at, 0.3 * t * (-0.4 * t).exp(), max_relative = 1e-12);
        assert_relative_eq!(at, near, max_relative = 1e-5);
        let d = eval_with_derivs(|x| Ok(vec![linear_two_pool(t, x[0], x[1], x[2], x[3]).1]), &[0.1, 0.3, 0.4, 1.0]).unwrap();
        assert!(d.grad[0].iter().all(|g| g.is_finite()));
        assert!(d.hess[0].data().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn nonlinear_two_pool_properties() {
        let m = NonlinearTwoPool::default();
        let theta = [0.1, 0.6, 5.0, 0.4, 1.0];
        let times: Vec<f64> = (0..=20).map(|i| 0.5 * i as f64).collect();
        let out = m.solve(&theta, &times).unwrap();
        assert_eq!(out[0], vec![1.0, 0.0]);
        for w in out.windows(2) {
            assert!(w[1][0] + w[1][1] <= w[0][0] + w[0][1] + 1e-12);
        }
        let fine = NonlinearTwoPool {
            ode: OdeOptions {
                rtol: 5e-9,
                atol: 5e-11,
                ..Default::default()
            },
        };
        let a = m.solve(&theta, &[10.0]).unwrap();
        let b = fine.solve(&theta, &[10.0]).unwrap();
        for i in 0..2 {
            assert!((a[0][i] - b[0][i]).abs() <= 1e-6 * b[0][i].abs());
        }
    }

    #[test]
    fn nonlinear_two_pool_derivatives_match_finite_differences() {
        let m = NonlinearTwoPool::default();
        let theta = [0.1, 0.6, 5.0, 0.4, 1.0];
        fd_check(
            |p| m.solve(p, &[2.0, 10.0]).unwrap().concat(),
            |x| Ok(m.solve(x, &[2.0, 10.0])?.concat()),
            &theta,
            1e-5,
        );
    }

    #[test]
    fn observation_processes() {
        let outs = [
            Output { state: 0, noise: Noise::Additive(1) },
            Output { state: 0, noise: Noise::Multiplicative(2) },
        ];
        assert_eq!(observe(&[4.0], &outs, &[9.0, 0.0, 1.0]), vec![4.0, 4.0]);
        let d = eval_with_derivs(|x| Ok(observe(&[x[0]], &outs[1..], x)), &[4.0, 0.0, 1.5]).unwrap();
        assert_eq!(d.grad[0][2], 4.0);
    }

    #[test]
    fn problem_validates_names_and_noise() {
        let plan = ObservationPlan {
            times: vec![1.0],
            outputs: vec![Output { state: 0, noise: Noise::Additive(3) }],
        };
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(Problem::new(Logistic, plan.clone(), names(&["r0", "lambda", "R", "eps"])).is_ok());
        assert!(Problem::new(Logistic, plan.clone(), names(&["lambda", "r0", "R", "eps"])).is_err());
        let bad = ObservationPlan {
            outputs: vec![Output { state: 0, noise: Noise::Additive(1) }],
            ..plan
        };
        assert!(Problem::new(Logistic, bad, names(&["r0", "lambda", "R", "eps"])).is_err());
    }

    struct Decay;
    impl OdeSystem for Decay {
        fn name(&self) -> &str {
            "decay"
        }
        fn param_names(&self) -> Vec<String> {
            vec!["k".into(), "y0".into()]
        }
        fn state_dim(&self) -> usize {
            1
        }
        fn initial<S: Real>(&self, theta: &[S]) -> Vec<S> {
            vec![theta[1]]
        }
        fn rhs<S: Real>(&self, _t: f64, x: &[S], theta: &[S], dx: &mut [S]) {
            dx[0] = -(theta[0] * x[0]);
        }
    }

    #[test]
    fn user_ode_registration() {
        let m = UserOde { system: Decay, ode: OdeOptions::default() };
        let y = m.solve(&[0.5, 2.0], &[2.0]).unwrap();
        assert_relative_eq!(y[0][0], 2.0 * (-1.0f64).exp(), max_relative = 1e-8);
        fd_check(|p| m.solve(p, &[2.0]).unwrap().concat(), |x| Ok(m.solve(x, &[2.0])?.concat()), &[0.5, 2.0], 1e-5);
    }
}
