//! Finite-difference gradient checks for every primitive op.
//!
//! The oracle is independent of the backward pass: it re-evaluates the loss
//! through fresh forward passes at perturbed inputs and forms the central
//! difference (f(x+h) - f(x-h)) / 2h. Analytic gradients from `backward`
//! must match within a relative error of 1e-6 per op in isolation and 1e-4
//! for composed networks.

use ganlm::tensor::{Mode, Rng, Tape, Tensor};

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Central finite differences of `f` w.r.t. one input slot.
fn fd_grad(f: &dyn Fn(&[Vec<f64>]) -> f64, inputs: &[Vec<f64>], slot: usize) -> Vec<f64> {
    let mut grads = vec![0.0; inputs[slot].len()];
    for i in 0..inputs[slot].len() {
        let mut plus = inputs.to_vec();
        plus[slot][i] += H;
        let mut minus = inputs.to_vec();
        minus[slot][i] -= H;
        grads[i] = (f(&plus) - f(&minus)) / (2.0 * H);
    }
    grads
}

/// Check analytic vs finite-difference gradients for all input slots.
///
/// `build` runs the op under test on fresh tensors with the given values and
/// returns a scalar loss; `shapes` gives one shape per input slot.
fn check_grads(
    name: &str,
    shapes: &[Vec<usize>],
    build: &dyn Fn(&mut Tape, &[Tensor]) -> Tensor,
    tol: f64,
    rng: &mut Rng,
    avoid_near_zero: bool,
) {
    let inputs: Vec<Vec<f64>> = shapes
        .iter()
        .map(|shape| {
            let n: usize = shape.iter().product();
            (0..n)
                .map(|_| loop {
                    let v = (rng.next_f64() - 0.5) * 4.0;
                    if !avoid_near_zero || v.abs() > 0.05 {
                        return v;
                    }
                })
                .collect()
        })
        .collect();

    let eval = |vals: &[Vec<f64>]| -> f64 {
        let mut tape = Tape::inference();
        let tensors: Vec<Tensor> = vals
            .iter()
            .zip(shapes.iter())
            .map(|(v, s)| Tensor::constant(s.clone(), v.clone()))
            .collect();
        build(&mut tape, &tensors).item()
    };

    let mut tape = Tape::new();
    let tensors: Vec<Tensor> = inputs
        .iter()
        .zip(shapes.iter())
        .map(|(v, s)| Tensor::param(s.clone(), v.clone()))
        .collect();
    let loss = build(&mut tape, &tensors);
    tape.backward(&loss).unwrap();

    for slot in 0..shapes.len() {
        let analytic = tensors[slot].grad().expect("grad populated");
        let numeric = fd_grad(&eval, &inputs, slot);
        for (i, (&a, &n)) in analytic.iter().zip(numeric.iter()).enumerate() {
            let err = rel_err(a, n);
            assert!(
                err < tol,
                "{name} slot {slot} element {i}: analytic {a} vs fd {n} (rel err {err:.2e})"
            );
        }
    }
}

/// Weighted sum against fixed coefficients, so every output element
/// contributes a distinct gradient signal.
fn weighted_sum(tape: &mut Tape, t: &Tensor, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let coeffs: Vec<f64> = (0..t.numel()).map(|_| rng.next_f64() + 0.5).collect();
    let c = Tensor::constant(t.shape(), coeffs);
    let prod = tape.hadamard(t, &c).unwrap();
    tape.sum_all(&prod)
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut rng = Rng::new(101);
    check_grads(
        "matmul",
        &[vec![3, 4], vec![4, 2]],
        &|tape, t| {
            let c = tape.matmul(&t[0], &t[1]).unwrap();
            tape.sum_all(&c)
        },
        1e-6,
        &mut rng,
        false,
    );
    // weighted variant catches transposition mistakes
    check_grads(
        "matmul/weighted",
        &[vec![2, 5], vec![5, 3]],
        &|tape, t| {
            let c = tape.matmul(&t[0], &t[1]).unwrap();
            weighted_sum(tape, &c, 7)
        },
        1e-6,
        &mut rng,
        false,
    );
}

#[test]
fn bmm_gradients_match_finite_differences() {
    let mut rng = Rng::new(102);
    check_grads(
        "bmm",
        &[vec![2, 3, 4], vec![2, 4, 2]],
        &|tape, t| {
            let c = tape.bmm(&t[0], &t[1]).unwrap();
            weighted_sum(tape, &c, 8)
        },
        1e-6,
        &mut rng,
        false,
    );
}

#[test]
fn elementwise_gradients_match_finite_differences() {
    let mut rng = Rng::new(103);
    check_grads(
        "add/broadcast",
        &[vec![3, 4], vec![4]],
        &|tape, t| {
            let c = tape.add(&t[0], &t[1]).unwrap();
            weighted_sum(tape, &c, 9)
        },
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "sub",
        &[vec![2, 3], vec![2, 3]],
        &|tape, t| {
            let c = tape.sub(&t[0], &t[1]).unwrap();
            weighted_sum(tape, &c, 10)
        },
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "hadamard",
        &[vec![6], vec![6]],
        &|tape, t| {
            let c = tape.hadamard(&t[0], &t[1]).unwrap();
            weighted_sum(tape, &c, 11)
        },
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "scale",
        &[vec![5]],
        &|tape, t| {
            let c = tape.scale(&t[0], -2.5);
            weighted_sum(tape, &c, 12)
        },
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "mean_all",
        &[vec![4, 2]],
        &|tape, t| tape.mean_all(&t[0]),
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "mean_axis0",
        &[vec![5, 3]],
        &|tape, t| {
            let c = tape.mean_axis0(&t[0]).unwrap();
            weighted_sum(tape, &c, 13)
        },
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "l2_norm_sq",
        &[vec![7]],
        &|tape, t| tape.l2_norm_sq(&t[0]),
        1e-6,
        &mut rng,
        false,
    );
}

#[test]
fn activation_gradients_match_finite_differences() {
    let mut rng = Rng::new(104);
    check_grads(
        "leaky_relu",
        &[vec![8]],
        &|tape, t| {
            let c = tape.leaky_relu(&t[0], 0.2);
            weighted_sum(tape, &c, 14)
        },
        1e-6,
        &mut rng,
        true, // keep inputs away from the kink at 0
    );
    check_grads(
        "gelu",
        &[vec![8]],
        &|tape, t| {
            let c = tape.gelu(&t[0]);
            weighted_sum(tape, &c, 15)
        },
        1e-6,
        &mut rng,
        false,
    );
}

#[test]
fn normalization_gradients_match_finite_differences() {
    let mut rng = Rng::new(105);
    check_grads(
        "layer_norm",
        &[vec![3, 4], vec![4], vec![4]],
        &|tape, t| {
            let c = tape.layer_norm(&t[0], &t[1], &t[2]).unwrap();
            weighted_sum(tape, &c, 16)
        },
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "softmax",
        &[vec![2, 5]],
        &|tape, t| {
            let c = tape.softmax(&t[0], 1).unwrap();
            weighted_sum(tape, &c, 17)
        },
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "softmax/axis0",
        &[vec![4, 3]],
        &|tape, t| {
            let c = tape.softmax(&t[0], 0).unwrap();
            weighted_sum(tape, &c, 18)
        },
        1e-6,
        &mut rng,
        false,
    );
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = Rng::new(106);
    check_grads(
        "cross_entropy",
        &[vec![4, 3]],
        &|tape, t| {
            tape.cross_entropy_from_logits(&t[0], &[0, 2, 1, -1], &[true, true, true, false])
                .unwrap()
        },
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "neg_mean_log_class_mass/real",
        &[vec![4, 3]],
        &|tape, t| tape.neg_mean_log_class_mass(&t[0], &[0, 1]).unwrap(),
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "neg_mean_log_class_mass/fake",
        &[vec![4, 3]],
        &|tape, t| tape.neg_mean_log_class_mass(&t[0], &[2]).unwrap(),
        1e-6,
        &mut rng,
        false,
    );
}

#[test]
fn shape_op_gradients_match_finite_differences() {
    let mut rng = Rng::new(107);
    check_grads(
        "reshape+permute",
        &[vec![2, 3, 4]],
        &|tape, t| {
            let p = tape.permute(&t[0], &[1, 2, 0]).unwrap();
            let r = tape.reshape(&p, vec![6, 4]).unwrap();
            weighted_sum(tape, &r, 19)
        },
        1e-6,
        &mut rng,
        false,
    );
    check_grads(
        "select_rows",
        &[vec![4, 3]],
        &|tape, t| {
            let s = tape.select_rows(&t[0], &[1, 3, 1]).unwrap();
            weighted_sum(tape, &s, 20)
        },
        1e-6,
        &mut rng,
        false,
    );
}

#[test]
fn dropout_gradients_match_finite_differences() {
    // the dropout mask is a function of the rng seed, so re-seeding
    // reproduces the same mask for every finite-difference evaluation
    let mut rng = Rng::new(108);
    check_grads(
        "dropout",
        &[vec![10]],
        &|tape, t| {
            let mut drop_rng = Rng::new(555);
            let d = tape.dropout(&t[0], 0.3, &mut drop_rng, Mode::Train);
            weighted_sum(tape, &d, 21)
        },
        1e-6,
        &mut rng,
        false,
    );
}

#[test]
fn composed_mlp_gradients_match_finite_differences() {
    // two-layer perceptron with layer norm, gelu, and a softmax cross-entropy
    // head: checks that chained backward rules compose correctly
    let mut rng = Rng::new(109);
    check_grads(
        "mlp",
        &[vec![2, 4], vec![4, 4], vec![4], vec![4], vec![4], vec![4, 3]],
        &|tape, t| {
            let h = tape.matmul(&t[0], &t[1]).unwrap();
            let h = tape.add(&h, &t[2]).unwrap();
            let h = tape.layer_norm(&h, &t[3], &t[4]).unwrap();
            let h = tape.gelu(&h);
            let logits = tape.matmul(&h, &t[5]).unwrap();
            tape.cross_entropy_from_logits(&logits, &[1, 2], &[true, true])
                .unwrap()
        },
        1e-4,
        &mut rng,
        false,
    );
}
