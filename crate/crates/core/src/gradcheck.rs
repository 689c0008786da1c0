//! Central finite-difference oracle for verifying analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::Params;
use crate::tensor::Tensor;

/// Re-draw every parameter uniformly in `[-range, range)`. Gradient checks
/// run at O(1) parameter scale: at training-time initialization many paths
/// carry gradients below the finite-difference noise floor
/// (~|loss|·machine-epsilon / step).
pub fn randomize_params(params: &mut Params, range: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let shape = params.value(id).shape().to_vec();
        *params.value_mut(id) = Tensor::uniform(shape, -range, range, &mut rng);
    }
}

/// Central differences (f(x+h) − f(x−h)) / 2h for every component of every
/// parameter. `f` must evaluate the scalar loss from the parameter set
/// alone; it is called 2·N times for N total components.
pub fn central_difference_gradients<F>(params: &mut Params, mut f: F, step: f64) -> Vec<Tensor>
where
    F: FnMut(&Params) -> f64,
{
    let ids: Vec<_> = params.ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let len = params.value(id).len();
        let mut grad = Tensor::zeros(params.value(id).shape().to_vec());
        for k in 0..len {
            let orig = params.value(id).data()[k];
            params.value_mut(id).data_mut()[k] = orig + step;
            let plus = f(params);
            params.value_mut(id).data_mut()[k] = orig - step;
            let minus = f(params);
            params.value_mut(id).data_mut()[k] = orig;
            grad.data_mut()[k] = (plus - minus) / (2.0 * step);
        }
        out.push(grad);
    }
    out
}

/// Relative error with the guarded denominator max(1e-8, |a| + |b|).
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Largest elementwise relative error between two gradient lists, together
/// with the index of the offending parameter.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> (f64, usize) {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = (0.0, 0);
    for (idx, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (av, nv) in a.data().iter().zip(n.data()) {
            let e = relative_error(*av, *nv);
            if e > worst.0 {
                worst = (e, idx);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::tensor::Tensor;

    #[test]
    fn matches_analytic_gradient_on_composite_graph() {
        // Exercises matvec, row, concat, lincomb, stack, index, scale,
        // softmax, dot, mul, log in one loss.
        let mut params = Params::new();
        let m = params.add("m", Tensor::new(vec![2, 3], vec![0.3, -0.1, 0.5, 0.2, 0.4, -0.6]));
        let e = params.add("e", Tensor::new(vec![2, 2], vec![0.1, -0.2, 0.3, 0.4]));
        let w = params.add("w", Tensor::vector(vec![0.5, -0.7]));

        let loss = |p: &Params| {
            let mut g = Graph::new(p);
            let mn = g.param(m);
            let en = g.param(e);
            let wn = g.param(w);
            let x = g.constant(Tensor::vector(vec![1.0, -1.0, 0.5]));
            let y = g.matvec(mn, x);
            let r0 = g.row(en, 0);
            let r1 = g.row(en, 1);
            let t = g.tanh(y);
            let s = g.sigmoid(r0);
            let prod = g.mul(t, s);
            let cat = g.concat(prod, r1);
            let quarter = g.scale_const(cat, 0.25);
            let i0 = g.index(quarter, 0);
            let i2 = g.index(quarter, 2);
            let sm_in = g.stack(&[i0, i2]);
            let sm = g.softmax(sm_in);
            let mix = g.lincomb(sm, &[wn, r1]);
            let d = g.dot(mix, wn);
            let sq = g.mul(d, d);
            let one = g.scalar(1.0);
            let pos = g.add(sq, one);
            let lg = g.log_floored(pos, 1e-12);
            let total = g.sum(lg);
            g.value(total).item()
        };

        let analytic = {
            let mut g = Graph::new(&params);
            // rebuild identical graph and take gradients
            let l = {
                let mn = g.param(m);
                let en = g.param(e);
                let wn = g.param(w);
                let x = g.constant(Tensor::vector(vec![1.0, -1.0, 0.5]));
                let y = g.matvec(mn, x);
                let r0 = g.row(en, 0);
                let r1 = g.row(en, 1);
                let t = g.tanh(y);
                let s = g.sigmoid(r0);
                let prod = g.mul(t, s);
                let cat = g.concat(prod, r1);
                let quarter = g.scale_const(cat, 0.25);
                let i0 = g.index(quarter, 0);
                let i2 = g.index(quarter, 2);
                let sm_in = g.stack(&[i0, i2]);
                let sm = g.softmax(sm_in);
                let mix = g.lincomb(sm, &[wn, r1]);
                let d = g.dot(mix, wn);
                let sq = g.mul(d, d);
                let one = g.scalar(1.0);
                let pos = g.add(sq, one);
                let lg = g.log_floored(pos, 1e-12);
                g.sum(lg)
            };
            let gs = g.backward(l).unwrap();
            params.ids().map(|id| gs.get(id).clone()).collect::<Vec<_>>()
        };

        let numeric = central_difference_gradients(&mut params, loss, 1e-5);
        let (err, _) = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-7, "max relative error {err}");
    }
}
