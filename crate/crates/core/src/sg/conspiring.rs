use serde::{Deserialize, Serialize};

use super::SgModule;
use crate::linalg::{Matrix, Rng};
use crate::{Error, Result};

/// Column of the unified "conspiring gradients" table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum MethodKind {
    Backprop,
    Sg,
    SgProp { alpha: f64 },
    Fa,
    Dfa,
    Kickback,
}

impl MethodKind {
    pub fn label(self) -> &'static str {
        match self {
            MethodKind::Backprop => "backprop",
            MethodKind::Sg => "sg",
            MethodKind::SgProp { .. } => "sg-prop",
            MethodKind::Fa => "fa",
            MethodKind::Dfa => "dfa",
            MethodKind::Kickback => "kickback",
        }
    }

    pub fn trains_sg(self) -> bool {
        matches!(self, MethodKind::Sg | MethodKind::SgProp { .. })
    }

    /// Locking metadata. SG+prop is marked locked: it is only unlocked
    /// between modules, not within the segment it backpropagates through.
    pub fn flags(self) -> LockingFlags {
        let (update_locked, backward_locked, direct_error) = match self {
            MethodKind::Sg => (false, false, false),
            MethodKind::SgProp { .. } => (true, true, false),
            MethodKind::Backprop => (true, true, false),
            MethodKind::Dfa => (true, false, true),
            MethodKind::Fa => (true, true, false),
            MethodKind::Kickback => (true, false, true),
        };
        LockingFlags {
            update_locked,
            backward_locked,
            direct_error,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockingFlags {
    pub update_locked: bool,
    pub backward_locked: bool,
    pub direct_error: bool,
}

/// A conspiring-gradients method together with its frozen feedback matrix.
///
/// The feedback matrix has the forward orientation (`dim_h × dim_target`),
/// so the delivered signal is `target_grad · Aᵀ`. It is set once at
/// construction and only readable afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMethod {
    kind: MethodKind,
    feedback: Option<Matrix>,
}

impl GradientMethod {
    pub fn backprop() -> Self {
        Self::plain(MethodKind::Backprop)
    }

    pub fn sg() -> Self {
        Self::plain(MethodKind::Sg)
    }

    pub fn sg_prop(alpha: f64) -> Self {
        Self::plain(MethodKind::SgProp { alpha })
    }

    pub fn kickback() -> Self {
        Self::plain(MethodKind::Kickback)
    }

    pub fn fa(feedback: Matrix) -> Self {
        GradientMethod {
            kind: MethodKind::Fa,
            feedback: Some(feedback),
        }
    }

    pub fn dfa(feedback: Matrix) -> Self {
        GradientMethod {
            kind: MethodKind::Dfa,
            feedback: Some(feedback),
        }
    }

    /// Random feedback with entries `N(0, 1/dim_h)`.
    pub fn random_feedback(rng: &mut Rng, dim_h: usize, dim_target: usize) -> Matrix {
        Matrix::gaussian(rng, dim_h, dim_target).scale(1.0 / (dim_h.max(1) as f64).sqrt())
    }

    fn plain(kind: MethodKind) -> Self {
        GradientMethod { kind, feedback: None }
    }

    pub fn kind(&self) -> MethodKind {
        self.kind
    }

    pub fn feedback(&self) -> Option<&Matrix> {
        self.feedback.as_ref()
    }

    pub fn flags(&self) -> LockingFlags {
        self.kind.flags()
    }

    fn feedback_or_err(&self) -> Result<&Matrix> {
        self.feedback.as_ref().ok_or(Error::MissingContext {
            method: self.kind.label(),
            what: "feedback matrix",
        })
    }
}

/// Quantities a method may read. Gradients share the units of the SG
/// output (per-sample rows); the caller handles any batch scaling.
#[derive(Clone, Copy, Debug, Default)]
pub struct SignalContext<'a> {
    /// `dL/dh` at the boundary itself.
    pub grad_h: Option<&'a Matrix>,
    /// `dL/dp` at the network output.
    pub grad_output: Option<&'a Matrix>,
    /// `dL/dg` at the next layer's pre-activation.
    pub grad_next: Option<&'a Matrix>,
    pub sg: Option<&'a SgModule>,
}

fn need<'a, T>(v: Option<&'a T>, method: &GradientMethod, what: &'static str) -> Result<&'a T> {
    v.ok_or(Error::MissingContext {
        method: method.kind.label(),
        what,
    })
}

fn ones(rows: usize, cols: usize) -> Matrix {
    Matrix::filled(rows, cols, 1.0)
}

/// The table's `SG(h, y)` row.
pub fn sg_output(method: &GradientMethod, h: &Matrix, y: &Matrix, ctx: &SignalContext) -> Result<Matrix> {
    match method.kind {
        MethodKind::Sg | MethodKind::SgProp { .. } => need(ctx.sg, method, "sg module")?.forward(h, y),
        MethodKind::Backprop => Ok(h.clone()),
        MethodKind::Fa | MethodKind::Dfa => h.matmul(method.feedback_or_err()?),
        MethodKind::Kickback => {
            let p = need(ctx.grad_output, method, "output gradient")?;
            h.matmul(&ones(h.cols(), p.cols()))
        }
    }
}

/// The table's "SG target" row.
pub fn sg_target(method: &GradientMethod, ctx: &SignalContext) -> Result<Matrix> {
    Ok(match method.kind {
        MethodKind::Sg | MethodKind::SgProp { .. } => need(ctx.grad_h, method, "boundary gradient")?.clone(),
        MethodKind::Backprop => need(ctx.grad_h, method, "boundary gradient")?.scale(-1.0),
        MethodKind::Fa => need(ctx.grad_next, method, "next-layer gradient")?.scale(-1.0),
        MethodKind::Dfa | MethodKind::Kickback => need(ctx.grad_output, method, "output gradient")?.scale(-1.0),
    })
}

/// The table's `L_SG(t, s)` row, summed over every entry of the batch:
/// `‖t − s‖²` for SG and SG+prop, `−⟨t, s⟩` for the rest.
pub fn conspiring_sg_loss(method: &GradientMethod, t: &Matrix, s: &Matrix) -> Result<f64> {
    if method.kind.trains_sg() {
        Ok(t.sub(s)?.sum_sq())
    } else {
        Ok(-t.dot(s)?)
    }
}

/// The table's `dL/dh-hat` row: the signal handed to the segment below `h`.
pub fn conspiring_signal(method: &GradientMethod, h: &Matrix, y: &Matrix, ctx: &SignalContext) -> Result<Matrix> {
    match method.kind {
        MethodKind::Backprop => Ok(need(ctx.grad_h, method, "boundary gradient")?.clone()),
        MethodKind::Sg => need(ctx.sg, method, "sg module")?.forward(h, y),
        MethodKind::SgProp { alpha } => {
            let sg = need(ctx.sg, method, "sg module")?;
            let target = need(ctx.grad_h, method, "boundary gradient")?;
            let mut out = sg.forward(h, y)?;
            out.axpy(alpha, &sg.input_grad(h, y, target)?)?;
            Ok(out)
        }
        MethodKind::Fa => need(ctx.grad_next, method, "next-layer gradient")?.matmul_t(method.feedback_or_err()?),
        MethodKind::Dfa => need(ctx.grad_output, method, "output gradient")?.matmul_t(method.feedback_or_err()?),
        MethodKind::Kickback => {
            let p = need(ctx.grad_output, method, "output gradient")?;
            p.matmul_t(&ones(h.cols(), p.cols()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{AdamConfig, Dense};
    use crate::sg::SgKind;

    fn all_kinds() -> [MethodKind; 6] {
        [
            MethodKind::Sg,
            MethodKind::SgProp { alpha: 1.0 },
            MethodKind::Backprop,
            MethodKind::Dfa,
            MethodKind::Fa,
            MethodKind::Kickback,
        ]
    }

    #[test]
    fn locking_table() {
        // columns: SG, SG+prop, Backprop, DFA, FA, Kickback
        let update = [false, true, true, true, true, true];
        let backward = [false, true, true, false, true, false];
        let direct = [false, false, false, true, false, true];
        for (i, kind) in all_kinds().into_iter().enumerate() {
            let f = kind.flags();
            assert_eq!(f.update_locked, update[i], "{kind:?}");
            assert_eq!(f.backward_locked, backward[i], "{kind:?}");
            assert_eq!(f.direct_error, direct[i], "{kind:?}");
        }
    }

    #[test]
    fn kickback_is_dfa_with_ones() {
        let mut rng = Rng::new(3);
        let h = Matrix::gaussian(&mut rng, 5, 4);
        let y = Matrix::zeros(5, 3);
        let gp = Matrix::gaussian(&mut rng, 5, 3);
        let ctx = SignalContext {
            grad_output: Some(&gp),
            ..Default::default()
        };
        let kb = conspiring_signal(&GradientMethod::kickback(), &h, &y, &ctx).unwrap();
        let dfa = conspiring_signal(&GradientMethod::dfa(Matrix::filled(4, 3, 1.0)), &h, &y, &ctx).unwrap();
        assert_eq!(kb, dfa);
    }

    #[test]
    fn fa_with_forward_weights_is_backprop() {
        let mut rng = Rng::new(4);
        let layer = Dense::new(4, 3, &mut rng, AdamConfig::default());
        let h = Matrix::gaussian(&mut rng, 6, 4);
        let (_, cache) = layer.forward(&h).unwrap();
        let gg = Matrix::gaussian(&mut rng, 6, 3);
        let (truth, _) = layer.backward(&cache, &gg).unwrap();
        let ctx = SignalContext {
            grad_next: Some(&gg),
            ..Default::default()
        };
        let fa = conspiring_signal(&GradientMethod::fa(layer.w.value.clone()), &h, &Matrix::zeros(6, 1), &ctx).unwrap();
        assert!(fa.max_abs_diff(&truth).unwrap() < 1e-12);
    }

    #[test]
    fn missing_context_is_reported() {
        let h = Matrix::zeros(2, 2);
        let err = conspiring_signal(&GradientMethod::backprop(), &h, &h, &SignalContext::default()).unwrap_err();
        assert!(matches!(err, Error::MissingContext { method: "backprop", .. }));
        let err = conspiring_signal(&GradientMethod::sg(), &h, &h, &SignalContext::default()).unwrap_err();
        assert!(matches!(err, Error::MissingContext { method: "sg", .. }));
    }

    #[test]
    fn sg_losses_on_trivial_inputs() {
        let t = Matrix::row_vector(vec![1.0, 0.0]);
        let s = Matrix::row_vector(vec![0.0, 1.0]);
        assert_eq!(conspiring_sg_loss(&GradientMethod::sg(), &t, &t).unwrap(), 0.0);
        assert_eq!(conspiring_sg_loss(&GradientMethod::backprop(), &t, &s).unwrap(), 0.0);
    }

    /// For the four inner-product columns the loss is linear in `h`, so a
    /// unit difference recovers the gradient without truncation error.
    #[test]
    fn inner_product_columns_differentiate_to_their_signal() {
        let mut rng = Rng::new(5);
        let (n, dh, dp) = (3, 4, 2);
        let h = Matrix::gaussian(&mut rng, n, dh);
        let y = Matrix::zeros(n, dp);
        let gh = Matrix::gaussian(&mut rng, n, dh);
        let gp = Matrix::gaussian(&mut rng, n, dp);
        let gg = Matrix::gaussian(&mut rng, n, 5);
        let ctx = SignalContext {
            grad_h: Some(&gh),
            grad_output: Some(&gp),
            grad_next: Some(&gg),
            sg: None,
        };
        let methods = [
            GradientMethod::backprop(),
            GradientMethod::fa(GradientMethod::random_feedback(&mut rng, dh, 5)),
            GradientMethod::dfa(GradientMethod::random_feedback(&mut rng, dh, dp)),
            GradientMethod::kickback(),
        ];
        for m in &methods {
            let t = sg_target(m, &ctx).unwrap();
            let loss = |h: &Matrix| conspiring_sg_loss(m, &t, &sg_output(m, h, &y, &ctx).unwrap()).unwrap();
            let base = loss(&h);
            let signal = conspiring_signal(m, &h, &y, &ctx).unwrap();
            for i in 0..n {
                for j in 0..dh {
                    let mut hp = h.clone();
                    hp.set(i, j, h.get(i, j) + 1.0);
                    let d = loss(&hp) - base;
                    assert!((d - signal.get(i, j)).abs() < 1e-10, "{:?} ({i},{j})", m.kind());
                }
            }
        }
    }

    #[test]
    fn sg_columns_use_module_output() {
        let mut rng = Rng::new(6);
        let h = Matrix::gaussian(&mut rng, 4, 3);
        let y = Matrix::gaussian(&mut rng, 4, 2);
        let mut sg = SgModule::new(SgKind::Linear, 3, 2, AdamConfig::default());
        sg.a.as_mut().unwrap().value = Matrix::gaussian(&mut rng, 3, 3);
        let gh = Matrix::gaussian(&mut rng, 4, 3);
        let ctx = SignalContext {
            grad_h: Some(&gh),
            sg: Some(&sg),
            ..Default::default()
        };
        let plain = conspiring_signal(&GradientMethod::sg(), &h, &y, &ctx).unwrap();
        assert_eq!(plain, sg.forward(&h, &y).unwrap());
        let zero_alpha = conspiring_signal(&GradientMethod::sg_prop(0.0), &h, &y, &ctx).unwrap();
        assert_eq!(zero_alpha, plain);
        let prop = conspiring_signal(&GradientMethod::sg_prop(0.5), &h, &y, &ctx).unwrap();
        let extra = sg.input_grad(&h, &y, &gh).unwrap().scale(0.5);
        assert!(prop.sub(&plain).unwrap().max_abs_diff(&extra).unwrap() < 1e-12);
    }
}
