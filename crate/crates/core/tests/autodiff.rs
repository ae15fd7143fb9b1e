use proptest::prelude::*;
use qasa::autodiff::{Tape, Tensor, Var};

type Build = fn(&mut Tape, Var) -> Var;

/// Central-difference check of d f / d x for a scalar-valued graph `f`.
fn fd_check(f: Build, x0: &Tensor, tol: f64) {
    let mut tape = Tape::new();
    let x = tape.param(x0.clone());
    let y = f(&mut tape, x);
    let g = tape.backward(y).unwrap().wrt(x);
    let h = 1e-6;
    for i in 0..x0.numel() {
        let eval = |delta: f64| {
            let mut xs = x0.clone();
            xs.data_mut()[i] += delta;
            let mut t = Tape::new();
            let v = t.constant(xs);
            let out = f(&mut t, v);
            t.value(out).item()
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let an = g.data()[i];
        assert!(
            (fd - an).abs() <= tol * (1.0 + fd.abs()),
            "element {i}: analytic {an} vs numeric {fd}"
        );
    }
}

fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn layer_norm_plain(t: &mut Tape, x: Var, eps: f64) -> Var {
    let d = t.value(x).last_dim();
    let g = t.constant(Tensor::full(&[d], 1.0));
    let b = t.constant(Tensor::zeros(&[d]));
    t.layer_norm(x, g, b, eps).unwrap()
}

#[test]
fn composite_graph_gradients_match_finite_differences() {
    let x0 = Tensor::matrix(3, 4, (0..12).map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0).collect()).unwrap();
    let graphs: [(&str, Build); 4] = [
        ("layer_norm", |t, x| {
            let y = layer_norm_plain(t, x, 1e-5);
            let w = t.constant(Tensor::matrix(3, 4, (0..12).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap());
            let p = t.mul(y, w).unwrap();
            t.sum(p)
        }),
        ("softmax_attention", |t, x| {
            let xt = t.transpose(x).unwrap();
            let s = t.matmul(x, xt).unwrap();
            let a = t.softmax_last(s).unwrap();
            let o = t.matmul(a, x).unwrap();
            let o = t.tanh(o);
            t.mean(o)
        }),
        ("gelu_slices", |t, x| {
            let g = t.gelu(x);
            let last = t.slice_last_timestep(g).unwrap();
            let cols = t.slice_cols(g, 1, 2).unwrap();
            let a = t.sum(last);
            let b = t.sum(cols);
            let b = t.scale(b, 0.5);
            t.add(a, b).unwrap()
        }),
        ("bias_concat", |t, x| {
            let bias = t.constant(Tensor::vector(vec![0.1, -0.2, 0.3, 0.0]));
            let y = t.add_bias(x, bias).unwrap();
            let z = t.concat_rows(&[y, x]).unwrap();
            let q = t.mul(z, z).unwrap();
            t.mean(q)
        }),
    ];
    for (name, f) in graphs {
        eprintln!("checking {name}");
        fd_check(f, &x0, 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn layer_norm_rows_are_standardized(x in matrix_strategy(5, 8)) {
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let y = layer_norm_plain(&mut t, v, 0.0);
        for r in 0..5 {
            let row = x.row(r);
            let m = row.iter().sum::<f64>() / 8.0;
            prop_assume!(row.iter().map(|a| (a - m).powi(2)).sum::<f64>() > 1e-6);
            let out = t.value(y).row(r);
            let mean = out.iter().sum::<f64>() / 8.0;
            let var = out.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 8.0;
            prop_assert!(mean.abs() < 1e-12, "row {r} mean {mean}");
            prop_assert!((var - 1.0).abs() < 1e-10, "row {r} variance {var}");
        }
    }

    #[test]
    fn softmax_rows_are_distributions(x in matrix_strategy(4, 6)) {
        let mut t = Tape::new();
        let v = t.constant(x);
        let s = t.softmax_last(v).unwrap();
        for r in 0..4 {
            let row = t.value(s).row(r);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p <= 1.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
