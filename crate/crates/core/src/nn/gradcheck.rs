//! Central finite-difference gradient checker.
//!
//! The closure rebuilds the forward graph from a store, so the analytic path
//! (tape backward) and the numeric path (perturbed forwards) stay independent.

use crate::nn::store::ParamStore;
use crate::nn::tape::{NodeId, Tape};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
}

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compare analytic gradients of a scalar-valued graph against central
/// differences over every parameter coordinate.
pub fn grad_check<F>(store: &ParamStore, build: F, h: f64) -> GradCheckReport
where
    F: Fn(&mut Tape, &ParamStore) -> NodeId,
{
    let analytic = {
        let mut tape = Tape::new();
        let root = build(&mut tape, store);
        tape.backward(root)
    };

    let eval = |s: &ParamStore| -> f64 {
        let mut tape = Tape::new();
        let root = build(&mut tape, s);
        tape.scalar_value(root)
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        coords_checked: 0,
    };
    let mut scratch = store.clone();
    let names: Vec<String> = store.names().map(String::from).collect();
    for name in &names {
        let n = store.value(name).len();
        for i in 0..n {
            let orig = store.value(name).data[i];
            scratch.get_mut(name).value.data[i] = orig + h;
            let f_plus = eval(&scratch);
            scratch.get_mut(name).value.data[i] = orig - h;
            let f_minus = eval(&scratch);
            scratch.get_mut(name).value.data[i] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic
                .by_name
                .get(name)
                .map(|g| g.data[i])
                .unwrap_or(0.0);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::store::uniform_init;
    use crate::nn::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_model_is_exact() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![0.7, -1.3, 2.0]));
        let report = grad_check(
            &store,
            |tape, s| {
                let w = tape.param(s, "w");
                let x = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
                let y = tape.mul(w, x);
                let m = tape.constant(Tensor::matrix(3, 3, vec![1.0; 9]).unwrap());
                let z = tape.matvec(m, y).unwrap();
                let z0 = tape.row(z, 0);
                tape.lin_comb(vec![(z0, 1.0)])
            },
            DEFAULT_STEP,
        );
        assert!(report.max_rel_err < 1e-9, "{report:?}");
    }

    #[test]
    fn nonlinear_chain_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        store.insert("w", uniform_init(&mut rng, &[4, 3], 0.8));
        store.insert("b", uniform_init(&mut rng, &[3], 0.8));
        let report = grad_check(
            &store,
            |tape, s| {
                let w = tape.param(s, "w");
                let b = tape.param(s, "b");
                let x = tape.constant(Tensor::vector(vec![0.3, -0.5, 0.9, 0.1]));
                let a = tape.affine(x, w, b).unwrap();
                let t = tape.tanh(a);
                let sg = tape.sigmoid(t);
                let lp = tape.log_softmax_pick(sg, 0.7, 1).unwrap();
                let l0 = tape.row(a, 0);
                let bce = tape.logistic_loss(l0, 1.0, 2.5);
                tape.lin_comb(vec![(lp, 1.0), (bce, 0.5)])
            },
            DEFAULT_STEP,
        );
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn stop_grad_reports_zero_upstream() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.5]));
        let mut tape = Tape::new();
        let w = tape.param(&store, "w");
        let s = tape.stop_grad(w);
        let y = tape.mul(s, s);
        let root = tape.lin_comb(vec![(y, 1.0)]);
        let grads = tape.backward(root);
        assert!(grads.by_name.get("w").is_none());
    }
}
