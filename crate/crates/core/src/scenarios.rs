//! Case-study presets: model, observation plan, true distribution and
//! the inferred hyperparameters with their prior box.

use std::sync::Arc;

use crate::dist::{degenerate, normal, shifted_gamma, AtomicSpec, Branch, Component, Correlation, DistSpec};
use crate::encoding::{Encoding, Slot, Target, Transform};
use crate::error::{Error, Result};
use crate::models::{BuiltinModel, Noise, ObservationPlan, Output, Problem};
use crate::ode::OdeOptions;
use crate::pipeline::Forward;
use crate::surrogate::{CopulaTable, SurrogateKind};

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub problem: Problem<BuiltinModel>,
    pub truth: DistSpec,
    pub slots: Vec<Slot>,
    /// Observations per time in the synthetic data.
    pub n_per_time: usize,
    pub kind: SurrogateKind,
}

pub const SCENARIOS: &[&str] = &[
    "logistic",
    "logistic_correlated",
    "logistic_skewed",
    "logistic_mixture",
    "logistic_normal_only",
    "logistic_correlated_only",
    "logistic_skewed_only",
    "allee",
    "linear_two_pool",
    "nonlinear_two_pool",
    "nonlinear_two_pool_single",
];

fn id() -> Transform {
    Transform::Identity
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn plan(times: Vec<f64>, outputs: Vec<(usize, Noise)>) -> ObservationPlan {
    ObservationPlan {
        times,
        outputs: outputs.into_iter().map(|(state, noise)| Output { state, noise }).collect(),
    }
}

fn logistic_times() -> Vec<f64> {
    (0..8).map(|i| 2.0 * i as f64).collect()
}

fn logistic_problem(noisy: bool, times: Vec<f64>) -> Problem<BuiltinModel> {
    let model = BuiltinModel::by_name("logistic", OdeOptions::default()).expect("builtin");
    if noisy {
        Problem::new(model, plan(times, vec![(0, Noise::Additive(3))]), names(&["r0", "lambda", "R", "eps"]))
    } else {
        Problem::new(model, plan(times, vec![(0, Noise::None)]), names(&["r0", "lambda", "R"]))
    }
    .expect("valid logistic problem")
}

fn logistic_components(lambda: Component, noisy: bool) -> Vec<Component> {
    let mut c = vec![normal("r0", 50.0, 3.0), lambda, normal("R", 300.0, 20.0)];
    if noisy {
        c.push(normal("eps", 0.0, 4.0));
    }
    c
}

fn logistic_slots(noisy: bool) -> Vec<Slot> {
    let mut s = vec![
        Slot::new("mu_r0", Target::Mean, "r0", id(), [30.0, 70.0]),
        Slot::new("mu_lambda", Target::Mean, "lambda", id(), [0.5, 1.5]),
        Slot::new("mu_R", Target::Mean, "R", id(), [250.0, 350.0]),
        Slot::new("ln_sigma_r0", Target::Sd, "r0", Transform::Log, [0.01, 30.0]),
        Slot::new("ln_sigma_lambda", Target::Sd, "lambda", Transform::Log, [1e-4, 0.5]),
        Slot::new("ln_sigma_R", Target::Sd, "R", Transform::Log, [0.1, 100.0]),
    ];
    if noisy {
        s.push(Slot::new("ln_sigma_eps", Target::Sd, "eps", Transform::Log, [0.01, 20.0]));
    }
    s
}

fn atomic(c: Vec<Component>) -> DistSpec {
    DistSpec::Atomic(AtomicSpec::independent(c))
}

impl Scenario {
    pub fn by_name(name: &str) -> Result<Self> {
        let kind_gamma = SurrogateKind::Gamma;
        let s = match name {
            "logistic" => Scenario {
                name: name.into(),
                problem: logistic_problem(true, logistic_times()),
                truth: atomic(logistic_components(normal("lambda", 1.0, 0.05), true)),
                slots: logistic_slots(true),
                n_per_time: 10,
                kind: kind_gamma,
            },
            "logistic_correlated" => {
                let mut a = AtomicSpec::independent(logistic_components(normal("lambda", 1.0, 0.05), true));
                a.correlations.push(Correlation { a: 1, b: 2, rho: 0.6 });
                let mut slots = logistic_slots(true);
                slots.push(Slot::new("rho_lambda_R", Target::Corr, "lambda", id(), [-0.9, 0.9]).with("R"));
                Scenario {
                    name: name.into(),
                    problem: logistic_problem(true, logistic_times()),
                    truth: DistSpec::Atomic(a),
                    slots,
                    n_per_time: 1000,
                    kind: kind_gamma,
                }
            }
            "logistic_skewed" => {
                let mut slots = logistic_slots(true);
                slots.push(Slot::new("omega_lambda", Target::Skew, "lambda", id(), [-2.0, 1.0]));
                Scenario {
                    name: name.into(),
                    problem: logistic_problem(true, logistic_times()),
                    truth: atomic(logistic_components(shifted_gamma("lambda", 1.0, 0.05, -1.5), true)),
                    slots,
                    n_per_time: 1000,
                    kind: kind_gamma,
                }
            }
            "logistic_mixture" => {
                let branch = |w: f64, m: f64| Branch {
                    weight: w,
                    spec: atomic(logistic_components(normal("lambda", m, 0.05), true)),
                };
                let mut slots = vec![
                    Slot::new("w", Target::Weight, "", id(), [0.01, 0.99]),
                    Slot::new("mu_lambda_1", Target::Mean, "lambda", id(), [0.5, 1.5]).in_branch(0),
                    Slot::new("mu_lambda_2", Target::Mean, "lambda", id(), [0.5, 1.5]).in_branch(1),
                ];
                slots.extend(logistic_slots(true).into_iter().filter(|s| s.name != "mu_lambda"));
                Scenario {
                    name: name.into(),
                    problem: logistic_problem(true, logistic_times()),
                    truth: DistSpec::Mixture(vec![branch(0.4, 0.9), branch(0.6, 1.1)]),
                    slots,
                    n_per_time: 1000,
                    kind: SurrogateKind::Normal,
                }
            }
            // noiseless single-time settings for comparing surrogate shapes
            "logistic_normal_only" | "logistic_correlated_only" | "logistic_skewed_only" => {
                let comps = if name == "logistic_skewed_only" {
                    vec![
                        shifted_gamma("r0", 50.0, 3.0, 0.2),
                        shifted_gamma("lambda", 1.0, 0.05, 1.0),
                        shifted_gamma("R", 300.0, 20.0, -1.0),
                    ]
                } else {
                    logistic_components(normal("lambda", 1.0, 0.05), false)
                };
                let mut a = AtomicSpec::independent(comps);
                if name == "logistic_correlated_only" {
                    a.correlations.push(Correlation { a: 1, b: 2, rho: 0.6 });
                }
                Scenario {
                    name: name.into(),
                    problem: logistic_problem(false, vec![4.0]),
                    truth: DistSpec::Atomic(a),
                    slots: logistic_slots(false),
                    n_per_time: 1000,
                    kind: kind_gamma,
                }
            }
            "allee" => {
                let model = BuiltinModel::by_name("allee", OdeOptions::default())?;
                Scenario {
                    name: name.into(),
                    problem: Problem::new(model, plan(vec![5.0], vec![(0, Noise::None)]), names(&["r0", "lambda", "R", "A"]))?,
                    truth: atomic(vec![
                        normal("r0", 51.0, 1.0),
                        degenerate("lambda", 3.0),
                        degenerate("R", 300.0),
                        degenerate("A", 50.0),
                    ]),
                    slots: vec![
                        Slot::new("mu_r0", Target::Mean, "r0", id(), [40.0, 60.0]),
                        Slot::new("ln_sigma_r0", Target::Sd, "r0", Transform::Log, [0.01, 10.0]),
                    ],
                    n_per_time: 10_000,
                    kind: kind_gamma,
                }
            }
            "linear_two_pool" => {
                let model = BuiltinModel::by_name("linear_two_pool", OdeOptions::default())?;
                Scenario {
                    name: name.into(),
                    problem: Problem::new(
                        model,
                        plan(vec![0.5, 1.5, 2.5, 3.5, 5.0, 7.0], vec![(1, Noise::Multiplicative(4))]),
                        names(&["k1", "k21", "k2", "x0", "eps"]),
                    )?,
                    truth: atomic(vec![
                        degenerate("k1", 0.7),
                        normal("k21", 0.6, 0.1),
                        degenerate("k2", 0.4),
                        degenerate("x0", 1.0),
                        normal("eps", 1.0, 0.01),
                    ]),
                    slots: vec![
                        Slot::new("mu_1", Target::Mean, "k1", id(), [0.3, 1.2]),
                        Slot::new("mu_21", Target::Mean, "k21", id(), [0.2, 1.2]),
                        Slot::new("mu_2", Target::Mean, "k2", id(), [0.1, 0.8]),
                        Slot::new("ln_sigma_21", Target::Sd, "k21", Transform::Log, [1e-3, 1.0]),
                        Slot::new("ln_sigma", Target::Sd, "eps", Transform::Log, [1e-4, 0.5]),
                    ],
                    n_per_time: 20,
                    kind: kind_gamma,
                }
            }
            "nonlinear_two_pool" | "nonlinear_two_pool_single" => {
                let model = BuiltinModel::by_name("nonlinear_two_pool", OdeOptions::default())?;
                let (times, n) = if name == "nonlinear_two_pool" {
                    (vec![2.0, 4.0, 6.0, 8.0, 10.0], 20)
                } else {
                    (vec![10.0], 100)
                };
                Scenario {
                    name: name.into(),
                    problem: Problem::new(
                        model,
                        plan(times, vec![(0, Noise::Multiplicative(5)), (1, Noise::Additive(6))]),
                        names(&["k1", "k21", "V21", "k2", "x0", "eps1", "eps2"]),
                    )?,
                    truth: atomic(vec![
                        degenerate("k1", 0.1),
                        normal("k21", 0.6, 0.1),
                        normal("V21", 5.0, 1.0),
                        degenerate("k2", 0.4),
                        degenerate("x0", 1.0),
                        normal("eps1", 1.0, 0.01),
                        normal("eps2", 0.0, 0.01),
                    ]),
                    slots: vec![
                        Slot::new("mu_1", Target::Mean, "k1", id(), [0.01, 0.5]),
                        Slot::new("mu_21", Target::Mean, "k21", id(), [0.1, 2.0]),
                        Slot::new("mu_V21", Target::Mean, "V21", id(), [0.5, 20.0]),
                        Slot::new("mu_2", Target::Mean, "k2", id(), [0.05, 1.5]),
                        Slot::new("ln_sigma_21", Target::Sd, "k21", Transform::Log, [1e-3, 1.0]),
                        Slot::new("ln_sigma_V21", Target::Sd, "V21", Transform::Log, [1e-2, 10.0]),
                        Slot::new("ln_sigma_1", Target::Sd, "eps1", Transform::Log, [1e-4, 0.5]),
                        Slot::new("ln_sigma_2", Target::Sd, "eps2", Transform::Log, [1e-4, 0.5]),
                    ],
                    n_per_time: n,
                    kind: kind_gamma,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario `{other}` (known: {})",
                    SCENARIOS.join(", ")
                )))
            }
        };
        Ok(s)
    }

    pub fn encoding(&self) -> Result<Encoding> {
        Encoding::new(self.truth.clone(), self.slots.clone())
    }

    pub fn xi_true(&self) -> Vec<f64> {
        self.encoding().and_then(|e| e.initial()).expect("preset slots resolve")
    }

    pub fn forward(&self, kind: SurrogateKind, table: Option<Arc<CopulaTable>>) -> Result<Forward<BuiltinModel>> {
        Forward::new(self.problem.clone(), self.encoding()?, kind, table)
    }

    /// Whether the gamma surrogate needs a copula table here.
    pub fn needs_table(&self) -> bool {
        self.problem.n_outputs() == 2
    }
}
