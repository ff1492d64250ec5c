//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use momentfit::inference::{Experiment, SnapshotData};
use momentfit::models::BuiltinModel;
use momentfit::rng::{stream_rng, Purpose};
use momentfit::scenarios::Scenario;
use momentfit::surrogate::{CopulaGrid, CopulaTable, SurrogateKind};

/// Preset experiment with data simulated at the truth, plus the true
/// encoded hyperparameters.
pub fn experiment(name: &str, kind: SurrogateKind, table: Option<Arc<CopulaTable>>) -> (Experiment<BuiltinModel>, Vec<f64>) {
    let s = Scenario::by_name(name).expect("known scenario");
    let table = if s.needs_table() {
        Some(table.unwrap_or_else(|| Arc::new(CopulaTable::build(CopulaGrid::default()).expect("copula table"))))
    } else {
        None
    };
    let fw = s.forward(kind, table).expect("forward map");
    let mut rng = stream_rng(1, Purpose::Data, 0);
    let data = SnapshotData::simulate(&s.problem, &s.truth, s.n_per_time, &mut rng).expect("simulated data");
    (Experiment::new(fw, data).expect("experiment"), s.xi_true())
}
