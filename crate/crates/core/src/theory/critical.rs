use serde::{Deserialize, Serialize};

/// The one-dimensional training set of the counterexample.
pub const CRITICAL_POINT_DATA: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

/// `f(x) = a x + b` trained on `L = Σ |a x_i + b|` through a constant SG `c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalPointState {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticalPointConfig {
    pub a0: f64,
    pub b0: f64,
    pub lr_main: f64,
    /// Plain gradient descent on `c`.
    pub lr_sg: f64,
    pub iterations: usize,
    /// Update `(a, b)` with the true subgradient instead of the SG.
    pub use_true_grad: bool,
}

impl Default for CriticalPointConfig {
    fn default() -> Self {
        CriticalPointConfig {
            a0: 1.0,
            b0: 0.0,
            lr_main: 1e-3,
            lr_sg: 0.1,
            iterations: 2000,
            use_true_grad: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalPointRow {
    pub iteration: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub true_grad_a: f64,
    pub true_grad_b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPointVerdict {
    pub sg_final: CriticalPointState,
    /// True subgradient `(∂L/∂a, ∂L/∂b)` at the SG run's terminal point.
    pub true_grad: [f64; 2],
    pub true_grad_norm: f64,
    /// `‖c · ∂h/∂(a, b)‖` summed over the data.
    pub sg_param_grad_norm: f64,
    /// `|∂L_SG/∂c|`.
    pub sg_fit_grad: f64,
    /// SG mode only: the terminal point is an SG equilibrium but not a
    /// critical point of `L`.
    pub spurious: bool,
    pub reference_final: CriticalPointState,
    pub sg_trajectory: Vec<CriticalPointRow>,
    pub reference_trajectory: Vec<CriticalPointRow>,
}

impl CriticalPointVerdict {
    pub fn summary(&self) -> String {
        if self.spurious {
            format!("spurious equilibrium reached; true grad norm {:.1}", self.true_grad_norm)
        } else {
            format!(
                "no spurious equilibrium; final a={:.6} b={:.6} c={:.6}",
                self.sg_final.a, self.sg_final.b, self.sg_final.c
            )
        }
    }
}

/// Subgradient of `|·|` with `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn true_grad(a: f64, b: f64) -> [f64; 2] {
    CRITICAL_POINT_DATA.iter().fold([0.0, 0.0], |[ga, gb], &x| {
        let s = sign(a * x + b);
        [ga + s * x, gb + s]
    })
}

/// `∂/∂c` of the fit loss `½ mean_i (c − sign(a x_i + b))²`.
fn fit_grad(st: &CriticalPointState) -> f64 {
    let n = CRITICAL_POINT_DATA.len() as f64;
    CRITICAL_POINT_DATA.iter().map(|&x| st.c - sign(st.a * x + st.b)).sum::<f64>() / n
}

fn trajectory(cfg: &CriticalPointConfig, use_true: bool) -> Vec<CriticalPointRow> {
    let mut st = CriticalPointState { a: cfg.a0, b: cfg.b0, c: 0.0 };
    let mut rows = Vec::with_capacity(cfg.iterations + 1);
    for t in 0..=cfg.iterations {
        let [ga, gb] = true_grad(st.a, st.b);
        rows.push(CriticalPointRow {
            iteration: t,
            a: st.a,
            b: st.b,
            c: st.c,
            true_grad_a: ga,
            true_grad_b: gb,
        });
        if t == cfg.iterations {
            break;
        }
        let (da, db) = if use_true {
            (ga, gb)
        } else {
            let sx: f64 = CRITICAL_POINT_DATA.iter().sum();
            (st.c * sx, st.c * CRITICAL_POINT_DATA.len() as f64)
        };
        let dc = fit_grad(&st);
        st.a -= cfg.lr_main * da;
        st.b -= cfg.lr_main * db;
        st.c -= cfg.lr_sg * dc;
    }
    rows
}

/// Runs the SG-decoupled system (or, with `use_true_grad`, true
/// subgradient descent) alongside a true-subgradient reference from the
/// same start.
pub fn critical_point_demo(cfg: &CriticalPointConfig) -> CriticalPointVerdict {
    let sg_trajectory = trajectory(cfg, cfg.use_true_grad);
    let reference_trajectory = trajectory(cfg, true);
    let end = |rows: &[CriticalPointRow]| {
        let r = rows.last().expect("trajectory holds the initial row");
        CriticalPointState { a: r.a, b: r.b, c: r.c }
    };
    let sg_final = end(&sg_trajectory);
    let true_grad = true_grad(sg_final.a, sg_final.b);
    let true_grad_norm = true_grad[0].hypot(true_grad[1]);
    let sx: f64 = CRITICAL_POINT_DATA.iter().sum();
    let sg_param_grad_norm = (sg_final.c * sx).hypot(sg_final.c * CRITICAL_POINT_DATA.len() as f64);
    let sg_fit_grad = fit_grad(&sg_final).abs();
    CriticalPointVerdict {
        spurious: !cfg.use_true_grad && sg_param_grad_norm < 1e-6 && sg_fit_grad < 1e-6 && true_grad_norm >= 1.0,
        sg_final,
        true_grad,
        true_grad_norm,
        sg_param_grad_norm,
        sg_fit_grad,
        reference_final: end(&reference_trajectory),
        sg_trajectory,
        reference_trajectory,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subgradient_at_identity_map() {
        assert_eq!(true_grad(1.0, 0.0), [6.0, 0.0]);
        assert_eq!(true_grad(0.0, 0.0), [0.0, 0.0]);
    }

    #[test]
    fn sg_run_stalls_at_a_spurious_point() {
        let v = critical_point_demo(&CriticalPointConfig::default());
        assert!(v.spurious);
        assert!((v.sg_final.a - 1.0).abs() < 0.5);
        assert!(v.sg_final.b.abs() < 1e-3 && v.sg_final.c.abs() < 1e-3);
        assert!((v.true_grad_norm - 6.0).abs() < 1e-6);
        assert_eq!(v.summary(), "spurious equilibrium reached; true grad norm 6.0");
        assert!(v.reference_final.a.abs() < 1e-2 && v.reference_final.b.abs() < 1e-2);
    }

    #[test]
    fn sg_relaxes_from_an_offset_bias() {
        let v = critical_point_demo(&CriticalPointConfig { b0: 1.5, iterations: 20_000, ..Default::default() });
        assert!(v.sg_final.b.abs() <= 1.0 && v.sg_final.c.abs() < 1e-3);
    }

    #[test]
    fn true_gradient_mode_reaches_the_minimum() {
        let v = critical_point_demo(&CriticalPointConfig { use_true_grad: true, ..Default::default() });
        assert!(!v.spurious);
        assert!(v.sg_final.a.abs() < 1e-2 && v.sg_final.b.abs() < 1e-2);
    }
}
