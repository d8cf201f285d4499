use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::network::{load_param, push_param, sigmoid, AdamConfig, Param};
use crate::{Error, Result};

/// Parameterisation of a synthetic-gradient module `SG(h, y) ≈ dL/dh`.
///
/// | kind              | output                       |
/// |-------------------|------------------------------|
/// | `linear`          | `h A + y B + C`              |
/// | `sigmoid`         | `d ⊙ σ(h A) + y B + C`       |
/// | `activation-only` | `h A + C`                    |
/// | `label-only`      | `y B + C`                    |
/// | `constant`        | `C`                          |
///
/// Every parameter starts at zero, so a fresh module predicts exactly 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SgKind {
    Linear,
    Sigmoid,
    ActivationOnly,
    LabelOnly,
    Constant,
}

impl SgKind {
    pub fn uses_h(self) -> bool {
        matches!(self, SgKind::Linear | SgKind::Sigmoid | SgKind::ActivationOnly)
    }

    pub fn uses_y(self) -> bool {
        matches!(self, SgKind::Linear | SgKind::Sigmoid | SgKind::LabelOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            SgKind::Linear => "linear",
            SgKind::Sigmoid => "sigmoid",
            SgKind::ActivationOnly => "activation-only",
            SgKind::LabelOnly => "label-only",
            SgKind::Constant => "constant",
        }
    }
}

impl std::fmt::Display for SgKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgModule {
    kind: SgKind,
    dim_h: usize,
    dim_y: usize,
    pub a: Option<Param>,
    pub b: Option<Param>,
    pub c: Param,
    pub d: Option<Param>,
}

/// Gradients of the SG fitting loss with respect to the module parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SgGrads {
    pub a: Option<Matrix>,
    pub b: Option<Matrix>,
    pub c: Matrix,
    pub d: Option<Matrix>,
}

impl SgGrads {
    pub fn sum_sq(&self) -> f64 {
        self.c.sum_sq()
            + [&self.a, &self.b, &self.d]
                .iter()
                .filter_map(|m| m.as_ref().map(Matrix::sum_sq))
                .sum::<f64>()
    }
}

struct Parts {
    out: Matrix,
    sig: Option<Matrix>,
}

impl SgModule {
    pub fn new(kind: SgKind, dim_h: usize, dim_y: usize, adam: AdamConfig) -> Self {
        let zeros = |r, c| Param::new(Matrix::zeros(r, c), adam);
        SgModule {
            kind,
            dim_h,
            dim_y,
            a: kind.uses_h().then(|| zeros(dim_h, dim_h)),
            b: kind.uses_y().then(|| zeros(dim_y, dim_h)),
            c: zeros(1, dim_h),
            d: (kind == SgKind::Sigmoid).then(|| zeros(1, dim_h)),
        }
    }

    pub fn kind(&self) -> SgKind {
        self.kind
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn set_lr(&mut self, lr: f64) {
        for p in self.params_mut() {
            p.set_lr(lr);
        }
    }

    fn check(&self, h: &Matrix, y: &Matrix) -> Result<()> {
        if h.cols() != self.dim_h {
            return Err(Error::Shape {
                op: "sg input h",
                left: h.shape(),
                right: (h.rows(), self.dim_h),
            });
        }
        if y.cols() != self.dim_y || y.rows() != h.rows() {
            return Err(Error::Shape {
                op: "sg input y",
                left: y.shape(),
                right: (h.rows(), self.dim_y),
            });
        }
        Ok(())
    }

    fn parts(&self, h: &Matrix, y: &Matrix) -> Result<Parts> {
        self.check(h, y)?;
        let mut out = Matrix::zeros(h.rows(), self.dim_h).add_row(&self.c.value)?;
        let mut sig = None;
        if let Some(b) = &self.b {
            out.add_assign(&y.matmul(&b.value)?)?;
        }
        if let Some(a) = &self.a {
            let z = h.matmul(&a.value)?;
            match &self.d {
                Some(d) => {
                    let s = z.map(sigmoid);
                    let mut scaled = s.clone();
                    for r in 0..scaled.rows() {
                        scaled.row_mut(r).iter_mut().zip(d.value.data()).for_each(|(x, w)| *x *= w);
                    }
                    out.add_assign(&scaled)?;
                    sig = Some(s);
                }
                None => out.add_assign(&z)?,
            }
        }
        Ok(Parts { out, sig })
    }

    /// Predicted per-sample gradient `SG(h, y)`, same shape as `h`.
    pub fn forward(&self, h: &Matrix, y: &Matrix) -> Result<Matrix> {
        Ok(self.parts(h, y)?.out)
    }

    /// Backpropagates `delta = dLoss/dSG` to the parameters and to `h`.
    fn backprop(&self, h: &Matrix, y: &Matrix, parts: &Parts, delta: &Matrix) -> Result<(SgGrads, Matrix)> {
        let mut grads = SgGrads {
            a: None,
            b: None,
            c: delta.sum_rows(),
            d: None,
        };
        if self.b.is_some() {
            grads.b = Some(y.t_matmul(delta)?);
        }
        let mut grad_h = Matrix::zeros(h.rows(), self.dim_h);
        if let Some(a) = &self.a {
            let dz = match (&self.d, &parts.sig) {
                (Some(d), Some(s)) => {
                    grads.d = Some(delta.hadamard(s)?.sum_rows());
                    let mut dz = delta.clone();
                    for r in 0..dz.rows() {
                        let srow = s.row(r);
                        for (j, v) in dz.row_mut(r).iter_mut().enumerate() {
                            *v *= d.value.data()[j] * srow[j] * (1.0 - srow[j]);
                        }
                    }
                    dz
                }
                _ => delta.clone(),
            };
            grads.a = Some(h.t_matmul(&dz)?);
            grad_h = dz.matmul_t(&a.value)?;
        }
        Ok((grads, grad_h))
    }

    /// Batch-mean fitting loss `(1/n) Σ ‖SG(h_i, y_i) − t_i‖²` and its
    /// parameter gradients; the target is a constant.
    pub fn loss_and_grads(&self, h: &Matrix, y: &Matrix, target: &Matrix) -> Result<(f64, SgGrads)> {
        if target.shape() != h.shape() {
            return Err(Error::Shape {
                op: "sg target",
                left: target.shape(),
                right: h.shape(),
            });
        }
        target.check_finite("sg target")?;
        let parts = self.parts(h, y)?;
        let diff = parts.out.sub(target)?;
        let n = h.rows().max(1) as f64;
        let loss = diff.sum_sq() / n;
        let delta = diff.scale(2.0 / n);
        let (grads, _) = self.backprop(h, y, &parts, &delta)?;
        Ok((loss, grads))
    }

    /// Row-wise `d‖SG(h_i, y_i) − t_i‖² / dh_i` (per-sample, not averaged).
    pub fn input_grad(&self, h: &Matrix, y: &Matrix, target: &Matrix) -> Result<Matrix> {
        let parts = self.parts(h, y)?;
        let delta = parts.out.sub(target)?.scale(2.0);
        Ok(self.backprop(h, y, &parts, &delta)?.1)
    }

    pub fn apply(&mut self, grads: &SgGrads, name: &str) -> Result<()> {
        self.c.step(&grads.c, &format!("{name}.c"))?;
        for (p, g, tag) in [
            (self.a.as_mut(), grads.a.as_ref(), "a"),
            (self.b.as_mut(), grads.b.as_ref(), "b"),
            (self.d.as_mut(), grads.d.as_ref(), "d"),
        ] {
            match (p, g) {
                (Some(p), Some(g)) => p.step(g, &format!("{name}.{tag}"))?,
                (None, None) => {}
                _ => return Err(Error::Invalid(format!("{name}.{tag}: gradient does not match module kind"))),
            }
        }
        Ok(())
    }

    /// One Adam step towards `target`; returns the pre-step fitting loss.
    pub fn train_step(&mut self, h: &Matrix, y: &Matrix, target: &Matrix) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(h, y, target)?;
        self.apply(&grads, "sg")?;
        Ok(loss)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.c];
        out.extend(self.a.as_mut());
        out.extend(self.b.as_mut());
        out.extend(self.d.as_mut());
        out
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Matrix)> {
        let mut out = Vec::new();
        for (tag, p) in [("a", &self.a), ("b", &self.b), ("d", &self.d)] {
            if let Some(p) = p {
                push_param(&mut out, &format!("{prefix}.{tag}"), p);
            }
        }
        push_param(&mut out, &format!("{prefix}.c"), &self.c);
        out
    }

    pub fn load_named(&mut self, prefix: &str, lookup: &dyn Fn(&str) -> Option<Matrix>) -> Result<()> {
        for (tag, p) in [("a", &mut self.a), ("b", &mut self.b), ("d", &mut self.d)] {
            if let Some(p) = p {
                load_param(lookup, &format!("{prefix}.{tag}"), p)?;
            }
        }
        load_param(lookup, &format!("{prefix}.c"), &mut self.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    fn batch(seed: u64, n: usize, dh: usize, dy: usize) -> (Matrix, Matrix) {
        let mut rng = Rng::new(seed);
        (Matrix::gaussian(&mut rng, n, dh), Matrix::gaussian(&mut rng, n, dy))
    }

    #[test]
    fn zero_initialised_modules_predict_zero() {
        let (h, y) = batch(1, 6, 4, 3);
        for kind in [
            SgKind::Linear,
            SgKind::Sigmoid,
            SgKind::ActivationOnly,
            SgKind::LabelOnly,
            SgKind::Constant,
        ] {
            let sg = SgModule::new(kind, 4, 3, AdamConfig::default());
            assert_eq!(sg.forward(&h, &y).unwrap(), Matrix::zeros(6, 4), "{kind}");
        }
    }

    #[test]
    fn identity_linear_module_echoes_h() {
        let (h, y) = batch(2, 5, 3, 2);
        let mut sg = SgModule::new(SgKind::Linear, 3, 2, AdamConfig::default());
        sg.a.as_mut().unwrap().value = Matrix::identity(3);
        assert_eq!(sg.forward(&h, &y).unwrap(), h);
    }

    #[test]
    fn constant_module_ignores_inputs() {
        let mut sg = SgModule::new(SgKind::Constant, 3, 2, AdamConfig::default());
        sg.c.value = Matrix::row_vector(vec![0.5, -1.0, 2.0]);
        let (h1, y1) = batch(3, 4, 3, 2);
        let (h2, y2) = batch(4, 4, 3, 2);
        assert_eq!(sg.forward(&h1, &y1).unwrap(), sg.forward(&h2, &y2).unwrap());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let sg = SgModule::new(SgKind::Linear, 3, 2, AdamConfig::default());
        let (h, y) = batch(5, 4, 2, 2);
        assert!(matches!(sg.forward(&h, &y), Err(Error::Shape { .. })));
    }

    #[test]
    fn fitting_the_current_output_is_a_no_op() {
        let (h, y) = batch(6, 8, 3, 3);
        let mut sg = SgModule::new(SgKind::Linear, 3, 3, AdamConfig::default());
        let mut rng = Rng::new(60);
        sg.a.as_mut().unwrap().value = Matrix::gaussian(&mut rng, 3, 3);
        let before = sg.clone();
        let target = sg.forward(&h, &y).unwrap();
        let loss = sg.train_step(&h, &y, &target).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(sg.a.as_ref().unwrap().value, before.a.as_ref().unwrap().value);
        assert_eq!(sg.c.value, before.c.value);
    }

    #[test]
    fn non_finite_target_is_rejected() {
        let (h, y) = batch(7, 4, 2, 2);
        let mut sg = SgModule::new(SgKind::Linear, 2, 2, AdamConfig::default());
        let mut t = Matrix::zeros(4, 2);
        t.set(0, 0, f64::NAN);
        assert!(matches!(sg.train_step(&h, &y, &t), Err(Error::NonFinite(_))));
    }

    #[test]
    fn constant_module_converges_to_target_mean() {
        let (h, y) = batch(8, 20, 2, 2);
        let mut rng = Rng::new(80);
        let t = Matrix::gaussian(&mut rng, 20, 2);
        let mean = t.mean_rows();
        let mut sg = SgModule::new(SgKind::Constant, 2, 2, AdamConfig::with_lr(0.05));
        for _ in 0..3000 {
            sg.train_step(&h, &y, &t).unwrap();
        }
        assert!(sg.c.value.max_abs_diff(&mean).unwrap() < 1e-6);
    }

    #[test]
    fn ablations_ignore_the_missing_input() {
        let mut rng = Rng::new(9);
        let (h, y) = batch(9, 5, 3, 2);
        let (h2, y2) = batch(10, 5, 3, 2);
        let mut act = SgModule::new(SgKind::ActivationOnly, 3, 2, AdamConfig::default());
        act.a.as_mut().unwrap().value = Matrix::gaussian(&mut rng, 3, 3);
        act.c.value = Matrix::gaussian(&mut rng, 1, 3);
        assert_eq!(act.forward(&h, &y).unwrap(), act.forward(&h, &y2).unwrap());
        let mut lab = SgModule::new(SgKind::LabelOnly, 3, 2, AdamConfig::default());
        lab.b.as_mut().unwrap().value = Matrix::gaussian(&mut rng, 2, 3);
        assert_eq!(lab.forward(&h, &y).unwrap(), lab.forward(&h2, &y).unwrap());
    }
}
