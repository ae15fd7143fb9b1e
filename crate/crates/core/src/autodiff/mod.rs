//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod tape;
mod tensor;

pub use tape::{gelu_grad_scalar, gelu_scalar, Gradients, Jacobian, Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::rng::SeedStream;

    fn rand_tensor(rng: &mut SeedStream, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
    }

    /// Central differences of a scalar function of one tensor.
    fn fd_grad(x: &Tensor, h: f64, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
        (0..x.numel())
            .map(|i| {
                let mut p = x.clone();
                p.data_mut()[i] += h;
                let mut m = x.clone();
                m.data_mut()[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_grad_close(analytic: &[f64], numeric: &[f64], rel: f64, abs: f64) {
        for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            let scale = a.abs().max(n.abs());
            if scale < 1e-2 {
                assert!((a - n).abs() < abs, "entry {i}: analytic {a} vs fd {n}");
            } else {
                assert!((a - n).abs() / scale < rel, "entry {i}: analytic {a} vs fd {n}");
            }
        }
    }

    #[test]
    fn matmul_examples() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = t.constant(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[3.0, 4.0, 5.0, 6.0]);

        let a = t.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = t.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        match t.matmul(a, b) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = SeedStream::new(3, 0);
        let a0 = rand_tensor(&mut rng, &[3, 3]);
        let b0 = rand_tensor(&mut rng, &[3, 3]);
        let mut t = Tape::new();
        let a = t.param(a0.clone());
        let b = t.constant(b0.clone());
        let c = t.matmul(a, b).unwrap();
        let s = t.sum(c);
        let g = t.backward(s).unwrap().wrt(a);
        let fd = fd_grad(&a0, 1e-6, |x| {
            let mut t = Tape::new();
            let a = t.constant(x.clone());
            let b = t.constant(b0.clone());
            let c = t.matmul(a, b).unwrap();
            t.value(c).sum()
        });
        for (x, y) in g.data().iter().zip(&fd) {
            assert!((x - y).abs() / x.abs().max(1e-12) < 1e-6);
        }
    }

    #[test]
    fn layer_norm_examples() {
        let mut t = Tape::new();
        let g = t.constant(Tensor::full(&[3], 1.0));
        let b = t.constant(Tensor::zeros(&[3]));
        let x = t.constant(Tensor::vector(vec![1.0, 1.0, 1.0]));
        let y = t.layer_norm(x, g, b, LAYER_NORM_EPS).unwrap();
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 0.0]);

        let g = t.constant(Tensor::full(&[2], 1.0));
        let b = t.constant(Tensor::zeros(&[2]));
        let x = t.constant(Tensor::vector(vec![0.0, 2.0]));
        let y = t.layer_norm(x, g, b, 0.0).unwrap();
        assert_eq!(t.value(y).data(), &[-1.0, 1.0]);
    }

    #[test]
    fn layer_norm_rejects_empty_last_axis() {
        let mut t = Tape::new();
        let g = t.constant(Tensor::zeros(&[0]));
        let b = t.constant(Tensor::zeros(&[0]));
        let x = t.constant(Tensor::zeros(&[2, 0]));
        assert!(matches!(
            t.layer_norm(x, g, b, LAYER_NORM_EPS),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn layer_norm_gradient_matches_finite_differences() {
        let mut rng = SeedStream::new(4, 0);
        let x0 = rand_tensor(&mut rng, &[4]);
        let w = rand_tensor(&mut rng, &[4]);
        let gain0 = rand_tensor(&mut rng, &[4]);
        let bias0 = rand_tensor(&mut rng, &[4]);
        let eval = |x: &Tensor, tape: &mut Tape, rg: bool| {
            let x = tape.leaf(x.clone(), rg);
            let g = tape.constant(gain0.clone());
            let b = tape.constant(bias0.clone());
            let wv = tape.constant(w.clone());
            let y = tape.layer_norm(x, g, b, LAYER_NORM_EPS).unwrap();
            let p = tape.mul(y, wv).unwrap();
            (x, tape.sum(p))
        };
        let mut t = Tape::new();
        let (x, loss) = eval(&x0, &mut t, true);
        let g = t.backward(loss).unwrap().wrt(x);
        let fd = fd_grad(&x0, 1e-6, |xp| {
            let mut t = Tape::new();
            let (_, l) = eval(xp, &mut t, false);
            t.value(l).item()
        });
        assert_grad_close(g.data(), &fd, 1e-5, 1e-8);
    }

    #[test]
    fn softmax_examples() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![0.0, 0.0]));
        let y = t.softmax_last(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5]);
        let x = t.constant(Tensor::vector(vec![1000.0, 1000.0]));
        let y = t.softmax_last(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5]);

        let mut rng = SeedStream::new(5, 0);
        for _ in 0..50 {
            let x = t.constant(rand_tensor(&mut rng, &[3, 8]));
            let y = t.softmax_last(x).unwrap();
            for row in t.value(y).data().chunks(8) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn gelu_examples() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
        assert!((gelu_grad_scalar(0.0) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn elementwise_examples() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::scalar(0.0));
        let y = t.tanh(z);
        assert_eq!(t.value(y).item(), 0.0);

        let x = t.constant(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let zeros = t.constant(Tensor::zeros(&[3, 2]));
        let s = t.add(x, zeros).unwrap();
        assert_eq!(t.value(s), t.value(x));
        let last = t.slice_last_timestep(x).unwrap();
        assert_eq!(t.value(last).data(), &[5.0, 6.0]);

        let bad = t.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(t.add(x, bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn backward_examples() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let s = t.sum(x);
        assert_eq!(t.backward(s).unwrap().wrt(x).data(), &[1.0, 1.0, 1.0]);

        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq);
        let half = t.scale(s, 0.5);
        assert_eq!(t.backward(half).unwrap().wrt(x).data(), &[1.0, -2.0, 3.0]);

        let y = t.add(x, x).unwrap();
        let s = t.sum(y);
        assert_eq!(t.backward(s).unwrap().wrt(x).data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unused_params_get_zero_and_constants_get_none() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]));
        let unused = t.param(Tensor::zeros(&[2, 2]));
        let c = t.constant(Tensor::vector(vec![1.0, 1.0]));
        let y = t.mul(x, c).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(unused).unwrap(), Tensor::zeros(&[2, 2]));
        assert!(g.get(c).is_none());
    }

    #[test]
    fn custom_node_linear_map_matches_native_scale_bitwise() {
        let mut rng = SeedStream::new(8, 0);
        let x0 = rand_tensor(&mut rng, &[5]);
        let w = rand_tensor(&mut rng, &[5]);

        let mut t = Tape::new();
        let x = t.param(x0.clone());
        let wv = t.constant(w.clone());
        let y = t.scale(x, 2.0);
        let p = t.mul(y, wv).unwrap();
        let l = t.sum(p);
        let native = t.backward(l).unwrap().wrt(x);

        let mut t = Tape::new();
        let x = t.param(x0.clone());
        let wv = t.constant(w.clone());
        let y = t
            .custom(&[x], |vals| {
                let out = Tensor::vector(vals[0].data().iter().map(|v| 2.0 * v).collect());
                let n = vals[0].numel();
                let mut j = vec![0.0; n * n];
                for i in 0..n {
                    j[i * n + i] = 2.0;
                }
                Ok((out, vec![Jacobian::Dense(j)]))
            })
            .unwrap();
        let p = t.mul(y, wv).unwrap();
        let l = t.sum(p);
        let custom = t.backward(l).unwrap().wrt(x);
        assert_eq!(native.data(), custom.data());
    }

    #[test]
    fn custom_node_zero_jacobian_annihilates() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]));
        let y = t
            .custom(&[x], |vals| Ok((vals[0].clone(), vec![Jacobian::Dense(vec![0.0; 4])])))
            .unwrap();
        let s = t.sum(y);
        assert_eq!(t.backward(s).unwrap().wrt(x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn custom_node_rejects_bad_jacobian_shape() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]));
        let r = t.custom(&[x], |vals| Ok((vals[0].clone(), vec![Jacobian::Dense(vec![0.0; 3])])));
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn replay_is_bitwise_deterministic() {
        let run = || {
            let mut rng = SeedStream::new(11, 0);
            let mut t = Tape::new();
            let a = t.param(rand_tensor(&mut rng, &[4, 6]));
            let b = t.param(rand_tensor(&mut rng, &[6, 3]));
            let c = t.matmul(a, b).unwrap();
            let s = t.softmax_last(c).unwrap();
            let g = t.gelu(s);
            let l = t.sum(g);
            let gr = t.backward(l).unwrap();
            (gr.wrt(a), gr.wrt(b))
        };
        assert_eq!(run(), run());
    }

    /// Composite of every primitive, checked against central differences.
    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut rng = SeedStream::new(12, 0);
        let x0 = rand_tensor(&mut rng, &[4, 6]);
        let w0 = rand_tensor(&mut rng, &[6, 6]);
        let b0 = rand_tensor(&mut rng, &[6]);
        let build = |t: &mut Tape, xv: &Tensor, rg: bool| {
            let x = t.leaf(xv.clone(), rg);
            let w = t.constant(w0.clone());
            let b = t.constant(b0.clone());
            let h = t.matmul(x, w).unwrap();
            let h = t.add_bias(h, b).unwrap();
            let g = t.gelu(h);
            let ln = t.layer_norm(g, b, b, LAYER_NORM_EPS).unwrap();
            let left = t.slice_cols(ln, 0, 3).unwrap();
            let right = t.slice_cols(ln, 3, 3).unwrap();
            let rt = t.transpose(right).unwrap();
            let att = t.matmul(left, rt).unwrap();
            let att = t.scale(att, 0.7);
            let sm = t.softmax_last(att).unwrap();
            let v = t.matmul(sm, right).unwrap();
            let cat = t.concat_cols(&[v, left]).unwrap();
            let top = t.slice_rows(cat, 0, 2).unwrap();
            let bot = t.slice_rows(cat, 2, 2).unwrap();
            let stacked = t.concat_rows(&[bot, top]).unwrap();
            let th = t.tanh(stacked);
            let sh = t.add_const(th, 0.3);
            let picked = t.gather_rows(sh, &[3, 1, 1]).unwrap();
            let sq = t.mul(picked, picked).unwrap();
            let r = t.reshape(sq, vec![18]).unwrap();
            let m = t.mean(r);
            let last = t.slice_last_timestep(x).unwrap();
            let s2 = t.sum(last);
            let tot = t.sub(m, s2).unwrap();
            (x, tot)
        };
        let mut t = Tape::new();
        let (x, loss) = build(&mut t, &x0, true);
        let g = t.backward(loss).unwrap().wrt(x);
        let fd = fd_grad(&x0, 1e-5, |xp| {
            let mut t = Tape::new();
            let (_, l) = build(&mut t, xp, false);
            t.value(l).item()
        });
        assert_grad_close(g.data(), &fd, 1e-4, 1e-6);
    }
}
