//! Finite-difference verification of analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::param::{Gradients, ParamId, ParamStore};
use crate::error::Result;

/// A scalar function of the parameters in a store, with its gradient.
pub trait Objective {
    fn value(&self, store: &ParamStore) -> Result<f64>;
    fn gradient(&self, store: &ParamStore) -> Result<Gradients>;
}

/// Objective defined by a closure that builds the loss in a fresh graph.
pub struct GraphObjective<F>(pub F);

impl<F> Objective for GraphObjective<F>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    fn value(&self, store: &ParamStore) -> Result<f64> {
        let mut g = Graph::new(store);
        let loss = (self.0)(&mut g)?;
        Ok(g.value(loss).data()[0])
    }

    fn gradient(&self, store: &ParamStore) -> Result<Gradients> {
        let mut g = Graph::new(store);
        let loss = (self.0)(&mut g)?;
        g.backward(loss)
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub h: f64,
    /// Fraction of all scalar coordinates to probe.
    pub sample_fraction: f64,
    pub min_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            sample_fraction: 0.05,
            min_coords: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and finite-difference derivative at the worst coordinate.
    pub worst_values: (f64, f64),
}

/// Max relative error between analytic and central-difference gradients
/// over a random coordinate sample.
pub fn grad_check(store: &mut ParamStore, obj: &impl Objective, cfg: &GradCheckConfig) -> Result<f64> {
    grad_check_report(store, obj, cfg).map(|r| r.max_rel_err)
}

pub fn grad_check_report(
    store: &mut ParamStore,
    obj: &impl Objective,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let analytic = obj.gradient(store)?;

    let mut coords: Vec<(ParamId, usize)> = Vec::new();
    for id in store.ids() {
        for i in 0..store.value(id).len() {
            coords.push((id, i));
        }
    }
    let total = coords.len();
    let wanted = ((cfg.sample_fraction * total as f64).ceil() as usize)
        .max(cfg.min_coords)
        .min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, total, wanted).into_vec();
    picked.sort_unstable();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: picked.len(),
        worst: None,
        worst_values: (0.0, 0.0),
    };
    for idx in picked {
        let (id, i) = coords[idx];
        let orig = store.value(id).data()[i];
        store.get_mut(id).value.data_mut()[i] = orig + cfg.h;
        let plus = obj.value(store)?;
        store.get_mut(id).value.data_mut()[i] = orig - cfg.h;
        let minus = obj.value(store)?;
        store.get_mut(id).value.data_mut()[i] = orig;

        let numeric = (plus - minus) / (2.0 * cfg.h);
        let a = analytic.coord(id, i);
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        let err = (a - numeric).abs() / denom;
        if err > report.max_rel_err || !err.is_finite() {
            report.max_rel_err = err;
            report.worst = Some((store.get(id).name.clone(), i));
            report.worst_values = (a, numeric);
        }
    }
    Ok(report)
}
