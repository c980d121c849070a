use super::{Graph, NodeId, ParamStore, TensorError};

/// Denominator floor so that gradients which are zero up to rounding do not
/// blow up the ratio.
const REL_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

fn eval_loss<F>(loss_fn: &mut F, store: &ParamStore) -> Result<f64, TensorError>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<NodeId, TensorError>,
{
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, store)?;
    g.value(loss).item().ok_or_else(|| TensorError::NotScalar {
        node: loss.index(),
        shape: g.value(loss).shape().to_vec(),
    })
}

/// Compares [`Graph::backward`] against central differences for every
/// element of every parameter. The loss closure rebuilds the graph from the
/// current store on each call.
pub fn check_gradients<F>(store: &mut ParamStore, eps: f64, mut loss_fn: F) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<NodeId, TensorError>,
{
    let analytic = {
        let mut g = Graph::new();
        let loss = loss_fn(&mut g, store)?;
        g.backward(loss, store)?
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + eps;
            let plus = eval_loss(&mut loss_fn, store)?;
            store.get_mut(id).data_mut()[k] = orig - eps;
            let minus = eval_loss(&mut loss_fn, store)?;
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic.get(id).data()[k], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err.max(report.max_rel_error);
                report.worst = Some((store.name(id).to_string(), k));
            }
        }
    }
    Ok(report)
}
