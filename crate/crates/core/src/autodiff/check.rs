use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::Result;

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-4;

/// Largest relative difference between the tape gradient and central
/// differences of step `eps`, over every scalar in `params`.
///
/// `f` builds a scalar loss on a fresh graph. Perturbations are applied to
/// `params` in place and undone.
pub fn grad_check<F>(params: &mut ParamStore<f64>, eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(&*params);
        let out = f(&mut g)?;
        g.backward(out)?
    };
    let eval = |p: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new(p);
        let out = f(&mut g)?;
        Ok(g.value(out).data()[0])
    };
    let mut worst = 0.0f64;
    for id in 0..params.len() {
        for k in 0..params.get(id).data().len() {
            let orig = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = orig + eps;
            let up = eval(params)?;
            params.get_mut(id).data_mut()[k] = orig - eps;
            let down = eval(params)?;
            params.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.tensors[id].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
