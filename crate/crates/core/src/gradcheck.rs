//! Central finite-difference checks of tape gradients.

use crate::error::Result;
use crate::tensor::{ParamStore, Tape, Var};

/// Per-parameter comparison between analytic and numeric gradients.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-6)` over the
    /// checked coordinates. The floor keeps parameters whose true gradient
    /// vanishes (a key bias under softmax) from reporting round-off as error.
    pub rel_error: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients of `loss` with central differences of
/// step `h` for every coordinate of every parameter in `store` (or at most
/// `max_per_param` evenly spaced coordinates when given).
pub fn check_store<F>(store: &mut ParamStore, h: f64, max_per_param: Option<usize>, loss: F) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    check_model(store, |s| s, h, max_per_param, loss)
}

/// Like [`check_store`] for a model that owns its parameters: `store_of`
/// selects the store to perturb and `loss` evaluates the whole model.
pub fn check_model<M, S, F>(model: &mut M, store_of: S, h: f64, max_per_param: Option<usize>, loss: F) -> Result<Vec<GradCheck>>
where
    S: Fn(&mut M) -> &mut ParamStore,
    F: Fn(&mut Tape, &M) -> Result<Var>,
{
    store_of(model).zero_grad();
    let mut tape = Tape::new();
    let l = loss(&mut tape, model)?;
    let grads = tape.backward(l)?;
    store_of(model).accumulate(&tape, &grads);

    let eval = |model: &M| -> Result<f64> {
        let mut t = Tape::new();
        let l = loss(&mut t, model)?;
        Ok(t.value(l).item())
    };

    let ids: Vec<_> = store_of(model).ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let n = store_of(model).get(id).value.numel();
        let coords: Vec<usize> = match max_per_param {
            Some(m) if m < n => (0..m).map(|i| i * n / m).collect(),
            _ => (0..n).collect(),
        };
        let analytic: Vec<f64> = coords.iter().map(|&c| store_of(model).get(id).grad.data()[c]).collect();
        let mut numeric = Vec::with_capacity(coords.len());
        for &c in &coords {
            let orig = store_of(model).get(id).value.data()[c];
            store_of(model).get_mut(id).value.data_mut()[c] = orig + h;
            let up = eval(model)?;
            store_of(model).get_mut(id).value.data_mut()[c] = orig - h;
            let down = eval(model)?;
            store_of(model).get_mut(id).value.data_mut()[c] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        out.push(GradCheck { name: store_of(model).get(id).name.clone(), rel_error: diff / na.max(nn).max(1e-6), checked: coords.len() });
    }
    Ok(out)
}

/// Largest relative error of a report, with the offending parameter.
pub fn worst(report: &[GradCheck]) -> (f64, String) {
    report.iter().map(|g| (g.rel_error, g.name.clone())).fold((0.0, String::new()), |a, b| if b.0 > a.0 { b } else { a })
}
