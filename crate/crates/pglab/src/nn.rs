//! Minimal differentiable function approximators.
//!
//! Three closed architecture families — dense linear maps, diagonal linear
//! maps, and small tanh MLPs with a linear output layer — each with exact
//! reverse-mode gradients with respect to both parameters and inputs (as
//! vector-Jacobian products), plus an Adam optimizer and a finite-difference
//! verifier. No general computation graph: keeping the families closed makes
//! every gradient exactly testable.
//!
//! All parameters live in one flat `Vec<f64>` per approximator; layouts are
//! documented on [`Architecture`].

use crate::error::{ensure_finite, Error, Result};
use crate::rng::Seed;
use rand::Rng;

/// The supported function families.
///
/// Flat parameter layouts:
/// * `Linear { inputs: m, outputs: n }` — row-major `W` (n×m) followed by
///   bias `b` (n); `out = W·x + b`.
/// * `DiagLinear { dim: d }` — `w` (d), no bias; `out_i = w_i · x_i`.
///   Used where the learnable map must be exactly one weight per coordinate
///   (e.g. a per-axis linear feedback gain).
/// * `Mlp { inputs, hidden, outputs }` — a stack of dense layers with tanh
///   after every hidden layer and a linear final layer; each layer stores
///   row-major `W` then `b`, layers concatenated first-to-last.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Architecture {
    Linear { inputs: usize, outputs: usize },
    DiagLinear { dim: usize },
    Mlp { inputs: usize, hidden: Vec<usize>, outputs: usize },
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Linear { inputs, .. } => *inputs,
            Architecture::DiagLinear { dim } => *dim,
            Architecture::Mlp { inputs, .. } => *inputs,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Architecture::Linear { outputs, .. } => *outputs,
            Architecture::DiagLinear { dim } => *dim,
            Architecture::Mlp { outputs, .. } => *outputs,
        }
    }

    /// Layer widths from input to output (a single entry pair for Linear).
    fn layer_widths(&self) -> Vec<usize> {
        match self {
            Architecture::Linear { inputs, outputs } => vec![*inputs, *outputs],
            Architecture::DiagLinear { dim } => vec![*dim, *dim],
            Architecture::Mlp {
                inputs,
                hidden,
                outputs,
            } => {
                let mut w = Vec::with_capacity(hidden.len() + 2);
                w.push(*inputs);
                w.extend_from_slice(hidden);
                w.push(*outputs);
                w
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Architecture::DiagLinear { dim } => *dim,
            _ => {
                let w = self.layer_widths();
                w.windows(2).map(|lw| lw[1] * lw[0] + lw[1]).sum()
            }
        }
    }
}

/// A function approximator: an architecture plus its flat parameter vector.
/// `forward` is a pure function of `(params, input)`.
#[derive(Debug, Clone)]
pub struct Approximator {
    pub arch: Architecture,
    pub params: Vec<f64>,
}

impl Approximator {
    pub fn new(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::dim("approximator params", arch.param_count(), params.len()));
        }
        ensure_finite("approximator params", &params)?;
        Ok(Approximator { arch, params })
    }

    /// All-zero parameters.
    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.param_count();
        Approximator {
            arch,
            params: vec![0.0; n],
        }
    }

    /// Standard initialization: per-layer uniform weights scaled by
    /// 1/sqrt(fan_in), zero biases. Deterministic given the seed.
    pub fn init(arch: Architecture, seed: Seed) -> Self {
        let mut rng = seed.rng();
        let mut params = vec![0.0; arch.param_count()];
        match &arch {
            Architecture::DiagLinear { dim } => {
                for p in params.iter_mut().take(*dim) {
                    *p = rng.random_range(-1.0..1.0);
                }
            }
            _ => {
                let widths = arch.layer_widths();
                let mut off = 0;
                for lw in widths.windows(2) {
                    let (m, n) = (lw[0], lw[1]);
                    let bound = 1.0 / (m as f64).sqrt();
                    for p in params.iter_mut().skip(off).take(n * m) {
                        *p = rng.random_range(-bound..bound);
                    }
                    off += n * m + n; // biases stay zero
                }
            }
        }
        Approximator { arch, params }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.arch.input_dim() {
            return Err(Error::dim("approximator input", self.arch.input_dim(), input.len()));
        }
        Ok(())
    }

    /// Evaluate the function. Deterministic: identical `(params, input)`
    /// produce bit-identical output.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        match &self.arch {
            Architecture::DiagLinear { dim } => {
                Ok((0..*dim).map(|i| self.params[i] * input[i]).collect())
            }
            _ => {
                let widths = self.arch.layer_widths();
                let n_layers = widths.len() - 1;
                let mut act = input.to_vec();
                let mut off = 0;
                for (l, lw) in widths.windows(2).enumerate() {
                    let (m, n) = (lw[0], lw[1]);
                    let w = &self.params[off..off + n * m];
                    let b = &self.params[off + n * m..off + n * m + n];
                    let mut next = vec![0.0; n];
                    for i in 0..n {
                        let mut z = b[i];
                        let row = &w[i * m..(i + 1) * m];
                        for j in 0..m {
                            z += row[j] * act[j];
                        }
                        // tanh on hidden layers only; the last layer is linear
                        next[i] = if l + 1 < n_layers { z.tanh() } else { z };
                    }
                    act = next;
                    off += n * m + n;
                }
                Ok(act)
            }
        }
    }

    /// One reverse pass computing both vector-Jacobian products:
    /// `(Jp^T·cot, Jx^T·cot)` where `Jp = ∂out/∂params`, `Jx = ∂out/∂input`.
    pub fn backward(&self, input: &[f64], cotangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(input)?;
        if cotangent.len() != self.arch.output_dim() {
            return Err(Error::dim("cotangent", self.arch.output_dim(), cotangent.len()));
        }
        match &self.arch {
            Architecture::DiagLinear { dim } => {
                let mut gp = vec![0.0; *dim];
                let mut gx = vec![0.0; *dim];
                for i in 0..*dim {
                    gp[i] = cotangent[i] * input[i];
                    gx[i] = cotangent[i] * self.params[i];
                }
                Ok((gp, gx))
            }
            _ => {
                let widths = self.arch.layer_widths();
                let n_layers = widths.len() - 1;
                // Forward pass storing every layer's post-activation output.
                let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
                acts.push(input.to_vec());
                let mut offsets = Vec::with_capacity(n_layers);
                let mut off = 0;
                for (l, lw) in widths.windows(2).enumerate() {
                    let (m, n) = (lw[0], lw[1]);
                    offsets.push(off);
                    let w = &self.params[off..off + n * m];
                    let b = &self.params[off + n * m..off + n * m + n];
                    let prev = &acts[l];
                    let mut next = vec![0.0; n];
                    for i in 0..n {
                        let mut z = b[i];
                        let row = &w[i * m..(i + 1) * m];
                        for j in 0..m {
                            z += row[j] * prev[j];
                        }
                        next[i] = if l + 1 < n_layers { z.tanh() } else { z };
                    }
                    acts.push(next);
                    off += n * m + n;
                }
                // Backward pass. `delta` is the gradient wrt the layer's
                // pre-activation; for tanh, dz = da·(1−a²) using the stored
                // post-activation a.
                let mut grad_p = vec![0.0; self.params.len()];
                let mut delta = cotangent.to_vec();
                for l in (0..n_layers).rev() {
                    let (m, n) = (widths[l], widths[l + 1]);
                    let off = offsets[l];
                    if l + 1 < n_layers {
                        let a = &acts[l + 1];
                        for i in 0..n {
                            delta[i] *= 1.0 - a[i] * a[i];
                        }
                    }
                    let prev = &acts[l];
                    for i in 0..n {
                        let wrow = off + i * m;
                        for j in 0..m {
                            grad_p[wrow + j] = delta[i] * prev[j];
                        }
                        grad_p[off + n * m + i] = delta[i];
                    }
                    // Propagate to the previous layer's activations.
                    let w = &self.params[off..off + n * m];
                    let mut down = vec![0.0; m];
                    for i in 0..n {
                        let row = &w[i * m..(i + 1) * m];
                        for j in 0..m {
                            down[j] += row[j] * delta[i];
                        }
                    }
                    delta = down;
                }
                Ok((grad_p, delta))
            }
        }
    }

    /// `(∂out/∂params)^T · cotangent`.
    pub fn grad_params(&self, input: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        Ok(self.backward(input, cotangent)?.0)
    }

    /// `(∂out/∂input)^T · cotangent`.
    pub fn grad_input(&self, input: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        Ok(self.backward(input, cotangent)?.1)
    }

    /// Verify the analytic gradients against central finite differences of
    /// `sum(forward(·))` (i.e. cotangent of ones), over every parameter and
    /// input coordinate. Returns the maximum relative error
    /// `|analytic − fd| / max(1, |analytic|)`.
    pub fn finite_diff_check(&self, input: &[f64], h: f64) -> Result<f64> {
        if h <= 0.0 {
            return Err(Error::InvalidArg(format!("finite_diff_check requires h > 0, got {h}")));
        }
        let ones = vec![1.0; self.arch.output_dim()];
        let (gp, gx) = self.backward(input, &ones)?;
        let mut max_err = 0.0f64;

        let sum_out = |a: &Approximator, x: &[f64]| -> Result<f64> {
            Ok(a.forward(x)?.iter().sum())
        };

        let mut probe = self.clone();
        for i in 0..self.params.len() {
            let orig = probe.params[i];
            probe.params[i] = orig + h;
            let fp = sum_out(&probe, input)?;
            probe.params[i] = orig - h;
            let fm = sum_out(&probe, input)?;
            probe.params[i] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let err = (gp[i] - fd).abs() / gp[i].abs().max(1.0);
            max_err = max_err.max(err);
        }
        let mut x = input.to_vec();
        for j in 0..x.len() {
            let orig = x[j];
            x[j] = orig + h;
            let fp = sum_out(self, &x)?;
            x[j] = orig - h;
            let fm = sum_out(self, &x)?;
            x[j] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let err = (gx[j] - fd).abs() / gx[j].abs().max(1.0);
            max_err = max_err.max(err);
        }
        Ok(max_err)
    }
}

/// Bias-corrected Adam. `step` applies a descent update on the supplied
/// gradient; callers maximizing an objective pass the negated gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, dim: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if grad.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::dim("adam step", self.m.len(), grad.len().max(params.len())));
        }
        ensure_finite("adam gradient", grad)?;
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_identity_2d() -> Approximator {
        // W = I2, b = 0
        Approximator::new(
            Architecture::Linear { inputs: 2, outputs: 2 },
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn linear_identity_forward() {
        let f = linear_identity_2d();
        let out = f.forward(&[0.5, 0.5]).unwrap();
        assert_eq!(out, vec![0.5, 0.5], "identity map must return its input");
    }

    #[test]
    fn mlp_all_zero_weights_outputs_zero() {
        let f = Approximator::zeros(Architecture::Mlp {
            inputs: 3,
            hidden: vec![4, 4],
            outputs: 2,
        });
        let out = f.forward(&[1.0, -2.0, 0.3]).unwrap();
        assert_eq!(out, vec![0.0, 0.0], "tanh(0)=0 must propagate through zero layers");
    }

    #[test]
    fn mlp_2_2_1_matches_hand_evaluation() {
        // Layer 1: W=[[0.3,-0.2],[0.5,0.1]], b=[0.1,-0.3];
        // layer 2: W=[[0.7,-0.4]], b=[0.2]; input (1,-1).
        // Hand evaluation: z1=(0.6,0.1), out = 0.7*tanh(0.6) - 0.4*tanh(0.1) + 0.2.
        let f = Approximator::new(
            Architecture::Mlp { inputs: 2, hidden: vec![2], outputs: 1 },
            vec![0.3, -0.2, 0.5, 0.1, 0.1, -0.3, 0.7, -0.4, 0.2],
        )
        .unwrap();
        let out = f.forward(&[1.0, -1.0]).unwrap();
        assert!(
            (out[0] - 0.53606749904864237).abs() < 1e-15,
            "hand-computed forward mismatch: got {}",
            out[0]
        );
    }

    #[test]
    fn linear_grad_params_is_input_and_one() {
        // Scalar output wᵀx + b, cotangent 1: ∂/∂w = x, ∂/∂b = 1.
        let f = Approximator::new(
            Architecture::Linear { inputs: 3, outputs: 1 },
            vec![0.4, -0.6, 2.0, 0.7],
        )
        .unwrap();
        let x = [1.5, -2.5, 0.25];
        let gp = f.grad_params(&x, &[1.0]).unwrap();
        assert_eq!(&gp[..3], &x[..], "weight gradient must equal the input");
        assert_eq!(gp[3], 1.0, "bias gradient must be 1");
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let f = Approximator::init(
            Architecture::Mlp { inputs: 2, hidden: vec![4], outputs: 3 },
            Seed::new(11),
        );
        let (gp, gx) = f.backward(&[0.3, -0.8], &[0.0, 0.0, 0.0]).unwrap();
        assert!(gp.iter().all(|&g| g == 0.0), "VJP is linear in the cotangent");
        assert!(gx.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_grad_input_is_w_transpose_u() {
        // W = [[1,2],[3,4]], u = (5, 7) → Wᵀu = (1*5+3*7, 2*5+4*7) = (26, 38).
        let f = Approximator::new(
            Architecture::Linear { inputs: 2, outputs: 2 },
            vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0],
        )
        .unwrap();
        let gx = f.grad_input(&[9.0, -9.0], &[5.0, 7.0]).unwrap();
        assert_eq!(gx, vec![26.0, 38.0]);
    }

    #[test]
    fn constant_network_has_zero_input_gradient() {
        // Zero output-layer weights make the function constant in its input.
        let mut f = Approximator::init(
            Architecture::Mlp { inputs: 2, hidden: vec![4], outputs: 1 },
            Seed::new(5),
        );
        let n_out_params = 4 + 1; // last layer: W (1x4) + b (1)
        let len = f.params.len();
        for p in f.params[len - n_out_params..len - 1].iter_mut() {
            *p = 0.0;
        }
        let gx = f.grad_input(&[0.7, -0.2], &[1.0]).unwrap();
        assert_eq!(gx, vec![0.0, 0.0]);
    }

    #[test]
    fn diag_linear_forward_and_grads() {
        let f = Approximator::new(Architecture::DiagLinear { dim: 2 }, vec![2.0, -3.0]).unwrap();
        assert_eq!(f.forward(&[1.0, 1.0]).unwrap(), vec![2.0, -3.0]);
        let (gp, gx) = f.backward(&[5.0, 6.0], &[1.0, 1.0]).unwrap();
        assert_eq!(gp, vec![5.0, 6.0], "∂(w_i x_i)/∂w_i = x_i");
        assert_eq!(gx, vec![2.0, -3.0], "∂(w_i x_i)/∂x_i = w_i");
    }

    #[test]
    fn finite_diff_check_linear_is_essentially_exact() {
        let f = Approximator::init(Architecture::Linear { inputs: 3, outputs: 2 }, Seed::new(2));
        let err = f.finite_diff_check(&[0.1, -0.2, 0.9], 1e-5).unwrap();
        assert!(err < 1e-9, "linear maps are exact under central differences, err={err}");
    }

    #[test]
    fn finite_diff_check_deep_mlp() {
        let f = Approximator::init(
            Architecture::Mlp { inputs: 2, hidden: vec![64, 64], outputs: 1 },
            Seed::new(3),
        );
        let err = f.finite_diff_check(&[0.4, -1.1], 1e-5).unwrap();
        assert!(err < 1e-5, "analytic MLP gradients must match finite differences, err={err}");
    }

    #[test]
    fn finite_diff_check_rejects_nonpositive_h() {
        let f = linear_identity_2d();
        assert!(f.finite_diff_check(&[0.0, 0.0], 0.0).is_err());
        assert!(f.finite_diff_check(&[0.0, 0.0], -1e-5).is_err());
    }

    #[test]
    fn finite_diff_check_many_random_cases() {
        // 100 random (params, input) draws per architecture family.
        let archs = vec![
            Architecture::Linear { inputs: 3, outputs: 2 },
            Architecture::DiagLinear { dim: 2 },
            Architecture::Mlp { inputs: 2, hidden: vec![8, 8], outputs: 2 },
        ];
        for arch in archs {
            for case in 0..100u64 {
                let f = Approximator::init(arch.clone(), Seed::new(1000).child(case));
                let mut rng = Seed::new(2000).child(case).rng();
                let x: Vec<f64> =
                    (0..arch.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let err = f.finite_diff_check(&x, 1e-5).unwrap();
                assert!(err < 1e-5, "case {case} of {arch:?}: rel err {err}");
            }
        }
    }

    #[test]
    fn forward_is_pure() {
        let f = Approximator::init(
            Architecture::Mlp { inputs: 2, hidden: vec![16], outputs: 2 },
            Seed::new(8),
        );
        let a = f.forward(&[0.25, -0.75]).unwrap();
        let b = f.forward(&[0.25, -0.75]).unwrap();
        assert_eq!(a, b, "identical (params, input) must give bit-identical output");
    }

    #[test]
    fn dimension_mismatches_are_hard_errors() {
        let f = linear_identity_2d();
        assert!(f.forward(&[1.0]).is_err(), "short input must be rejected");
        assert!(f.backward(&[1.0, 2.0], &[1.0]).is_err(), "short cotangent must be rejected");
        assert!(
            Approximator::new(Architecture::DiagLinear { dim: 3 }, vec![1.0]).is_err(),
            "param count mismatch must be rejected"
        );
    }

    #[test]
    fn init_biases_are_zero_and_weights_bounded() {
        let arch = Architecture::Mlp { inputs: 4, hidden: vec![8], outputs: 2 };
        let f = Approximator::init(arch, Seed::new(77));
        // Layer 1: W 8x4 then b 8; layer 2: W 2x8 then b 2.
        let b1 = &f.params[32..40];
        let b2 = &f.params[40 + 16..40 + 18];
        assert!(b1.iter().chain(b2).all(|&b| b == 0.0), "biases must initialize to zero");
        assert!(f.params[..32].iter().all(|&w| w.abs() <= 0.5), "fan-in 4 bound is 1/2");
        assert!(f.params[40..56].iter().all(|&w| w.abs() <= 1.0 / (8f64).sqrt()));
    }

    #[test]
    fn adam_first_step_closed_form() {
        // Bias correction makes step 1 equal to -lr * g/(|g|+eps).
        let mut params = vec![1.0, -2.0];
        let grad = vec![3.0, -0.5];
        let mut opt = Adam::new(0.01, 2);
        opt.step(&mut params, &grad).unwrap();
        for i in 0..2 {
            let expected = [1.0, -2.0][i] - 0.01 * grad[i] / (grad[i].abs() + 1e-8);
            assert!(
                (params[i] - expected).abs() < 1e-12,
                "step-1 closed form violated at coord {i}: {} vs {expected}",
                params[i]
            );
        }
    }

    #[test]
    fn adam_zero_grad_leaves_params_unchanged() {
        // From a fresh state the moments stay zero, so nothing moves.
        let mut params = vec![0.3, 0.4];
        let mut opt = Adam::new(0.1, 2);
        opt.step(&mut params, &[0.0, 0.0]).unwrap();
        opt.step(&mut params, &[0.0, 0.0]).unwrap();
        assert_eq!(params, vec![0.3, 0.4], "zero gradients must not move parameters");
    }

    #[test]
    fn adam_two_steps_match_hand_recursion() {
        // Independent recomputation of the moment recursion for a constant
        // gradient, kept separate from the implementation.
        let (lr, g) = (0.1, 2.0);
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let mut p_expected = 1.0;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1_pow(b1, t));
            let vh = v / (1.0 - b1_pow(b2, t));
            p_expected -= lr * mh / (vh.sqrt() + eps);
        }
        fn b1_pow(b: f64, t: u32) -> f64 {
            b.powi(t as i32)
        }

        let mut params = vec![1.0];
        let mut opt = Adam::new(lr, 1);
        opt.step(&mut params, &[g]).unwrap();
        opt.step(&mut params, &[g]).unwrap();
        assert!(
            (params[0] - p_expected).abs() < 1e-15,
            "two-step Adam mismatch: {} vs {p_expected}",
            params[0]
        );
        // Constant gradient ⇒ motion at essentially -lr per step.
        assert!((params[0] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut params = vec![0.0];
        let mut opt = Adam::new(0.1, 1);
        assert!(opt.step(&mut params, &[f64::NAN]).is_err());
    }
}
