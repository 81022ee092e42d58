use super::{Graph, NodeId, ParamStore};
use crate::Result;

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Relative error `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks every coordinate of every parameter in `store` against
/// `(f(x + eps) - f(x - eps)) / (2 eps)`.
///
/// `build` must append a scalar-valued computation to the graph it is given
/// and return the loss node; it is called once for the analytic pass and
/// twice per coordinate. Parameter values are restored afterwards and the
/// store's gradients hold the analytic result.
pub fn finite_diff_check<F>(store: &mut ParamStore, mut build: F, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    store.zero_grads();
    let mut graph = Graph::new();
    let loss = build(&mut graph, store)?;
    graph.backward(loss, store)?;

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, store)?;
        Ok(g.value(l).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).values[i];
            store.get_mut(id).values[i] = orig + eps;
            let plus = eval(store)?;
            store.get_mut(id).values[i] = orig - eps;
            let minus = eval(store)?;
            store.get_mut(id).values[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(store.get(id).grad[i], numeric);
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name.clone(), i));
            }
        }
    }
    Ok(report)
}
