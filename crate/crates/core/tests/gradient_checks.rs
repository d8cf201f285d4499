//! Central finite-difference checks (step 1e-5, relative error < 1e-4) of
//! every hand-written backward pass.

use synthgrad::analysis::reconstruct_loss;
use synthgrad::network::{
    loss_backward, loss_forward, Activation, AdamConfig, Architecture, BatchNorm, Dense, LossKind, Mode, Network,
};
use synthgrad::sg::{SgKind, SgModule};
use synthgrad::{Matrix, Rng};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn numeric<S: Clone>(base: &S, slot: impl Fn(&mut S) -> &mut Matrix, f: impl Fn(&S) -> f64) -> Matrix {
    let mut probe = base.clone();
    let shape = slot(&mut probe).shape();
    let mut out = Matrix::zeros(shape.0, shape.1);
    for i in 0..out.len() {
        let orig = slot(&mut probe).data()[i];
        slot(&mut probe).data_mut()[i] = orig + STEP;
        let up = f(&probe);
        slot(&mut probe).data_mut()[i] = orig - STEP;
        let down = f(&probe);
        slot(&mut probe).data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * STEP);
    }
    out
}

fn assert_close(label: &str, analytic: &Matrix, numeric: &Matrix) {
    let scale = analytic.frobenius_norm().max(numeric.frobenius_norm());
    let err = analytic.sub(numeric).unwrap().frobenius_norm();
    let rel = if scale < 1e-12 { err } else { err / scale };
    assert!(rel < TOL, "{label}: relative error {rel:.3e}");
}

/// A random linear functional turns a matrix-valued map into a scalar.
fn probe_weights(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::gaussian(rng, rows, cols)
}

fn one_hot(rng: &mut Rng, rows: usize, classes: usize) -> Matrix {
    let mut y = Matrix::zeros(rows, classes);
    for r in 0..rows {
        y.set(r, rng.below(classes), 1.0);
    }
    y
}

#[test]
pub fn dense_layer() {
    let mut rng = Rng::new(1);
    let layer = Dense::new(4, 3, &mut rng, AdamConfig::default());
    let x = Matrix::gaussian(&mut rng, 5, 4);
    let r = probe_weights(&mut rng, 5, 3);
    let (_, cache) = layer.forward(&x).unwrap();
    let (dx, grads) = layer.backward(&cache, &r).unwrap();
    let objective = |l: &Dense, x: &Matrix| l.forward(x).unwrap().0.dot(&r).unwrap();
    assert_close("dense input", &dx, &numeric(&x, |m| m, |x| objective(&layer, x)));
    assert_close("dense w", &grads.w, &numeric(&layer, |l| &mut l.w.value, |l| objective(l, &x)));
    assert_close("dense b", &grads.b, &numeric(&layer, |l| &mut l.b.value, |l| objective(l, &x)));
}

#[test]
pub fn activations() {
    let mut rng = Rng::new(2);
    // Keep relu inputs away from the kink.
    let x = Matrix::gaussian(&mut rng, 6, 4).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let r = probe_weights(&mut rng, 6, 4);
    for act in [Activation::Relu, Activation::Sigmoid] {
        let (_, cache) = act.forward(&x);
        let dx = act.backward(&cache, &r).unwrap();
        let num = numeric(&x, |m| m, |x| act.apply(x).dot(&r).unwrap());
        assert_close(&format!("{act:?}"), &dx, &num);
    }
}

#[test]
pub fn batchnorm_both_modes() {
    let mut rng = Rng::new(3);
    let mut bn = BatchNorm::new(3, AdamConfig::default());
    bn.gamma.value = Matrix::gaussian(&mut rng, 1, 3);
    bn.beta.value = Matrix::gaussian(&mut rng, 1, 3);
    bn.running_mean = Matrix::gaussian(&mut rng, 1, 3);
    bn.running_var = Matrix::filled(1, 3, 0.7);
    let x = Matrix::gaussian(&mut rng, 7, 3).scale(2.0);
    let r = probe_weights(&mut rng, 7, 3);
    for mode in [Mode::Train, Mode::Eval] {
        let (_, cache) = bn.forward(&x, mode).unwrap();
        let (dx, grads) = bn.backward(&cache, &r).unwrap();
        let objective = |b: &BatchNorm, x: &Matrix| b.forward(x, mode).unwrap().0.dot(&r).unwrap();
        assert_close("bn input", &dx, &numeric(&x, |m| m, |x| objective(&bn, x)));
        assert_close("bn gamma", &grads.gamma, &numeric(&bn, |b| &mut b.gamma.value, |b| objective(b, &x)));
        assert_close("bn beta", &grads.beta, &numeric(&bn, |b| &mut b.beta.value, |b| objective(b, &x)));
    }
}

#[test]
pub fn losses() {
    let mut rng = Rng::new(4);
    let p = Matrix::gaussian(&mut rng, 5, 3);
    let y_real = Matrix::gaussian(&mut rng, 5, 3);
    let y_hot = one_hot(&mut rng, 5, 3);
    for (kind, y) in [(LossKind::Mse, &y_real), (LossKind::LogLoss, &y_hot)] {
        let analytic = loss_backward(kind, &p, y).unwrap();
        let num = numeric(&p, |m| m, |p| loss_forward(kind, p, y).unwrap());
        assert_close(&format!("{kind:?}"), &analytic, &num);
    }
}

fn randomized_module(kind: SgKind, rng: &mut Rng, dim_h: usize, dim_y: usize) -> SgModule {
    let mut sg = SgModule::new(kind, dim_h, dim_y, AdamConfig::default());
    for p in [sg.a.as_mut(), sg.b.as_mut(), sg.d.as_mut()].into_iter().flatten() {
        let (r, c) = p.value.shape();
        p.value = Matrix::gaussian(rng, r, c).scale(0.5);
    }
    sg.c.value = Matrix::gaussian(rng, 1, dim_h).scale(0.5);
    sg
}

const KINDS: [SgKind; 5] = [SgKind::Linear, SgKind::Sigmoid, SgKind::ActivationOnly, SgKind::LabelOnly, SgKind::Constant];

#[test]
pub fn synthetic_gradient_parameters() {
    let mut rng = Rng::new(5);
    for kind in KINDS {
        let sg = randomized_module(kind, &mut rng, 4, 3);
        let h = Matrix::gaussian(&mut rng, 6, 4);
        let y = one_hot(&mut rng, 6, 3);
        let t = Matrix::gaussian(&mut rng, 6, 4);
        let (_, grads) = sg.loss_and_grads(&h, &y, &t).unwrap();
        let objective = |m: &SgModule| m.loss_and_grads(&h, &y, &t).unwrap().0;
        if let Some(ga) = &grads.a {
            assert_close("sg a", ga, &numeric(&sg, |m| &mut m.a.as_mut().unwrap().value, objective));
        }
        if let Some(gb) = &grads.b {
            assert_close("sg b", gb, &numeric(&sg, |m| &mut m.b.as_mut().unwrap().value, objective));
        }
        if let Some(gd) = &grads.d {
            assert_close("sg d", gd, &numeric(&sg, |m| &mut m.d.as_mut().unwrap().value, objective));
        }
        assert_close("sg c", &grads.c, &numeric(&sg, |m| &mut m.c.value, objective));
        assert_eq!(grads.a.is_some(), kind.uses_h());
        assert_eq!(grads.b.is_some(), kind.uses_y());
    }
}

#[test]
pub fn synthetic_gradient_input_gradient() {
    // Per-sample gradient of ‖SG − t‖², as used by SGProp.
    let mut rng = Rng::new(6);
    for kind in KINDS {
        let sg = randomized_module(kind, &mut rng, 3, 2);
        let h = Matrix::gaussian(&mut rng, 5, 3);
        let y = one_hot(&mut rng, 5, 2);
        let t = Matrix::gaussian(&mut rng, 5, 3);
        let analytic = sg.input_grad(&h, &y, &t).unwrap();
        let num = numeric(&h, |m| m, |h| sg.forward(h, &y).unwrap().sub(&t).unwrap().sum_sq());
        assert_close(&format!("{kind} input"), &analytic, &num);
    }
}

#[test]
pub fn reconstructed_loss_differentiates_to_the_module() {
    let mut rng = Rng::new(7);
    for kind in [SgKind::Linear, SgKind::ActivationOnly, SgKind::LabelOnly, SgKind::Constant] {
        let mut sg = randomized_module(kind, &mut rng, 4, 2);
        if let Some(a) = sg.a.as_mut() {
            a.value = a.value.add(&a.value.transpose()).unwrap().scale(0.5);
        }
        let h = Matrix::gaussian(&mut rng, 5, 4);
        let y = one_hot(&mut rng, 5, 2);
        let num = numeric(&h, |m| m, |h| reconstruct_loss(&sg, h, &y).unwrap().iter().sum());
        assert_close(&format!("{kind} reconstruct"), &sg.forward(&h, &y).unwrap(), &num);
    }
}

#[test]
pub fn three_layer_network() {
    let mut rng = Rng::new(8);
    for (loss, batchnorm) in [(LossKind::Mse, true), (LossKind::LogLoss, true), (LossKind::Mse, false)] {
        let arch = Architecture {
            layer_dims: vec![4, 5, 5, 3],
            activation: Some(Activation::Sigmoid),
            batchnorm,
            order: Default::default(),
            loss,
        };
        let net = Network::new(arch, &mut rng, AdamConfig::default()).unwrap();
        let x = Matrix::gaussian(&mut rng, 6, 4);
        let y = match loss {
            LossKind::Mse => Matrix::gaussian(&mut rng, 6, 3),
            LossKind::LogLoss => one_hot(&mut rng, 6, 3),
        };
        let pass = net.forward(&x, Mode::Train).unwrap();
        let (dx, grads) = net.backward(&pass, &y).unwrap();
        let objective = |n: &Network, x: &Matrix| {
            let p = n.forward(x, Mode::Train).unwrap();
            n.loss(&p, &y).unwrap()
        };
        assert_close("net input", &dx, &numeric(&x, |m| m, |x| objective(&net, x)));
        for k in 0..3 {
            let w = numeric(&net, |n| &mut n.blocks[k].dense.w.value, |n| objective(n, &x));
            assert_close(&format!("block {k} w"), &grads[k].dense.w, &w);
            let b = numeric(&net, |n| &mut n.blocks[k].dense.b.value, |n| objective(n, &x));
            assert_close(&format!("block {k} b"), &grads[k].dense.b, &b);
        }
    }
}

#[test]
pub fn linear_sg_fits_squared_error_gradient() {
    // For ½‖h − y‖² the true gradient h − y lies in the linear family, so
    // fitting drives A → I, B → −I, C → 0.
    let mut rng = Rng::new(9);
    let mut sg = SgModule::new(SgKind::Linear, 3, 3, AdamConfig::with_lr(0.01));
    let h = Matrix::gaussian(&mut rng, 64, 3);
    let y = Matrix::gaussian(&mut rng, 64, 3);
    let t = h.sub(&y).unwrap();
    for _ in 0..4000 {
        sg.train_step(&h, &y, &t).unwrap();
    }
    let (loss, _) = sg.loss_and_grads(&h, &y, &t).unwrap();
    assert!(loss < 1e-8, "fit loss {loss}");
    assert!(sg.a.as_ref().unwrap().value.max_abs_diff(&Matrix::identity(3)).unwrap() < 1e-3);
    assert!(sg.b.as_ref().unwrap().value.max_abs_diff(&Matrix::identity(3).scale(-1.0)).unwrap() < 1e-3);
}
