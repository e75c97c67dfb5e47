//! Central-difference verification of analytic gradients.

use rand::RngExt;
use rand_chacha::ChaCha12Rng;

use super::store::{ParamId, ParamStore};
use super::tape::{Tape, TensorId};
use super::TensorError;

/// Compare analytic gradients of a scalar-valued computation against central
/// finite differences on `samples` randomly chosen parameter coordinates.
///
/// `build` must construct the same deterministic forward pass on any tape it
/// is given (dropout disabled, batch norm in eval mode). Returns the maximum
/// relative error `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn gradient_check<F>(
    store: &mut ParamStore,
    mut build: F,
    samples: usize,
    eps: f64,
    rng: &mut ChaCha12Rng,
) -> Result<f64, TensorError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<TensorId, TensorError>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    tape.backward(loss, store)?;

    let coords = sample_coords(store, samples, rng);
    let mut max_err = 0.0f64;
    for (pid, ix) in coords {
        let analytic = store.grad(pid)[ix];
        let orig = store.value(pid)[ix];
        store.value_mut(pid)[ix] = orig + eps;
        let plus = eval(&mut build, store)?;
        store.value_mut(pid)[ix] = orig - eps;
        let minus = eval(&mut build, store)?;
        store.value_mut(pid)[ix] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        if std::env::var_os("TFEGNN_GRADCHECK_DEBUG").is_some() && err > 1e-4 {
            eprintln!(
                "gradcheck: {}[{}] analytic={:e} numeric={:e} err={:e}",
                store.name(pid),
                ix,
                analytic,
                numeric,
                err
            );
        }
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}

fn eval<F>(build: &mut F, store: &ParamStore) -> Result<f64, TensorError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<TensorId, TensorError>,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    Ok(tape.value(loss)[0])
}

fn sample_coords(
    store: &ParamStore,
    samples: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<(ParamId, usize)> {
    let trainable = store.trainable_ids();
    let total: usize = trainable.iter().map(|&id| store.value(id).len()).sum();
    if total == 0 {
        return Vec::new();
    }
    if samples >= total {
        return trainable
            .iter()
            .flat_map(|&id| (0..store.value(id).len()).map(move |i| (id, i)))
            .collect();
    }
    (0..samples)
        .map(|_| {
            let mut flat = rng.random_range(0..total);
            for &id in &trainable {
                let len = store.value(id).len();
                if flat < len {
                    return (id, flat);
                }
                flat -= len;
            }
            unreachable!("flat index within total")
        })
        .collect()
}
