use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

const STEP: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-8;

/// Compares tape gradients of `loss` with central finite differences over
/// every trainable scalar in `store`. Returns the largest relative error
/// `|a - f| / max(1e-8, |a| + |f|)`.
pub fn grad_check<F>(store: &mut ParamStore, loss: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    let eval = |s: &ParamStore| {
        let mut t = Tape::new();
        let l = loss(&mut t, s);
        t.value(l).item()
    };
    let mut tape = Tape::new();
    let l = loss(&mut tape, store);
    let grads = tape.backward(l);

    let names: Vec<String> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(n, _)| n.clone())
        .collect();
    let mut worst: f64 = 0.0;
    for name in names {
        let key = store.key(&name);
        let analytic = grads
            .get(&key)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; store.value(&name).len()]);
        for (k, &a) in analytic.iter().enumerate() {
            let orig = store.value(&name).data()[k];
            set(store, &name, k, orig + STEP);
            let up = eval(store);
            set(store, &name, k, orig - STEP);
            let down = eval(store);
            set(store, &name, k, orig);
            let f = (up - down) / (2.0 * STEP);
            if !a.is_finite() || !f.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {key}[{k}]")));
            }
            let r = (a - f).abs() / REL_FLOOR.max(a.abs() + f.abs());
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

fn set(store: &mut ParamStore, name: &str, k: usize, v: f64) {
    store.value_mut(name).data_mut()[k] = v;
}
