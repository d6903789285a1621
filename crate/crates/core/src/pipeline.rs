//! Single-token transformer-block forward pass built on the fused kernel,
//! with a per-operation timing breakdown.
//!
//! The block runs RMSNorm, the fused QKV projection, a single-token
//! attention identity (softmax over one key is 1.0, so the value projection
//! passes through), the O projection, a residual add, RMSNorm, the fused
//! gate/up projection, SiLU gating, the down projection, and a final
//! residual add. Activations travel as (re, im) pairs; the elementwise
//! stages act on each component independently, and by default block inputs
//! carry `x_im = 0`, exercising the widely-linear path degenerately.

use crate::kernels::{dim_err, ActivationPair, KernelError, KernelVariant, WidelyLinearLayer};
use crate::parallel::parallel_fused_with;
use serde::Serialize;
use std::time::Instant;

/// Default RMS normalization epsilon.
pub const RMSNORM_EPS: f32 = 1e-5;

/// One transformer block's weights. Dimension chain, with `d = d_model` and
/// `f = d_ff`: qkv is `3d x d`, o is `d x d`, gate_up is `2f x d`, down is
/// `d x f`; both gamma vectors have length `d`.
#[derive(Debug, Clone)]
pub struct BlockWeights {
    qkv: WidelyLinearLayer,
    o: WidelyLinearLayer,
    gate_up: WidelyLinearLayer,
    down: WidelyLinearLayer,
    rms_gamma_attn: Vec<f32>,
    rms_gamma_mlp: Vec<f32>,
}

impl BlockWeights {
    pub fn new(
        qkv: WidelyLinearLayer,
        o: WidelyLinearLayer,
        gate_up: WidelyLinearLayer,
        down: WidelyLinearLayer,
        rms_gamma_attn: Vec<f32>,
        rms_gamma_mlp: Vec<f32>,
    ) -> Result<Self, KernelError> {
        let d = o.n();
        let f = down.m_logical();
        let checks = [
            ("qkv.n", qkv.n(), 3 * d),
            ("qkv.m", qkv.m_logical(), d),
            ("o.m", o.m_logical(), d),
            ("gate_up.n", gate_up.n(), 2 * f),
            ("gate_up.m", gate_up.m_logical(), d),
            ("down.n", down.n(), d),
            ("gamma_attn.len", rms_gamma_attn.len(), d),
            ("gamma_mlp.len", rms_gamma_mlp.len(), d),
        ];
        for (what, got, expect) in checks {
            if got != expect {
                return Err(dim_err(format!("{what} = {got}, expected {expect}")));
            }
        }
        Ok(BlockWeights {
            qkv,
            o,
            gate_up,
            down,
            rms_gamma_attn,
            rms_gamma_mlp,
        })
    }

    pub fn d_model(&self) -> usize {
        self.o.n()
    }

    pub fn d_ff(&self) -> usize {
        self.down.m_logical()
    }

    pub fn qkv(&self) -> &WidelyLinearLayer {
        &self.qkv
    }

    pub fn o(&self) -> &WidelyLinearLayer {
        &self.o
    }

    pub fn gate_up(&self) -> &WidelyLinearLayer {
        &self.gate_up
    }

    pub fn down(&self) -> &WidelyLinearLayer {
        &self.down
    }
}

/// `y_i = x_i * gamma_i / sqrt(mean(x^2) + eps)`.
pub fn rmsnorm(x: &[f32], gamma: &[f32], eps: f32) -> Result<Vec<f32>, KernelError> {
    if x.len() != gamma.len() {
        return Err(dim_err(format!(
            "rmsnorm input length {} != gamma length {}",
            x.len(),
            gamma.len()
        )));
    }
    let mean_sq = x.iter().map(|v| v * v).sum::<f32>() / x.len() as f32;
    let inv_rms = 1.0 / (mean_sq + eps).sqrt();
    Ok(x.iter().zip(gamma).map(|(v, g)| v * g * inv_rms).collect())
}

/// `y_i = x_i / (1 + exp(-x_i))`.
pub fn silu(x: &[f32]) -> Vec<f32> {
    x.iter().map(|&v| v / (1.0 + (-v).exp())).collect()
}

/// One timed stage of the block forward.
#[derive(Debug, Clone, Serialize)]
pub struct BreakdownRow {
    pub operation: &'static str,
    pub elapsed_us: f64,
    pub fraction_percent: f64,
    pub mul_free: bool,
}

struct StageTimer {
    rows: Vec<(&'static str, f64, bool)>,
    t0: Instant,
}

impl StageTimer {
    fn new() -> Self {
        StageTimer {
            rows: Vec::new(),
            t0: Instant::now(),
        }
    }

    fn mark(&mut self, operation: &'static str, mul_free: bool) {
        let elapsed = self.t0.elapsed().as_nanos() as f64 / 1000.0;
        self.rows.push((operation, elapsed, mul_free));
        self.t0 = Instant::now();
    }

    fn finish(self) -> Vec<BreakdownRow> {
        let total: f64 = self.rows.iter().map(|r| r.1).sum();
        self.rows
            .into_iter()
            .map(|(operation, elapsed_us, mul_free)| BreakdownRow {
                operation,
                elapsed_us,
                fraction_percent: if total > 0.0 {
                    100.0 * elapsed_us / total
                } else {
                    0.0
                },
                mul_free,
            })
            .collect()
    }
}

fn pair_for(
    layer: &WidelyLinearLayer,
    re: &[f32],
    im: &[f32],
) -> Result<ActivationPair, KernelError> {
    ActivationPair::from_logical(re, im, layer.m_padded())
}

fn add_inplace(acc_re: &mut [f32], acc_im: &mut [f32], y_re: &[f32], y_im: &[f32]) {
    for (a, y) in acc_re.iter_mut().zip(y_re) {
        *a += y;
    }
    for (a, y) in acc_im.iter_mut().zip(y_im) {
        *a += y;
    }
}

/// Run one block over a single token's activations with the fastest kernel
/// variant the CPU supports. Returns the output pair (padded to the block's
/// input width) and the per-stage breakdown.
pub fn block_forward(
    weights: &BlockWeights,
    x: &ActivationPair,
    workers: usize,
) -> Result<(ActivationPair, Vec<BreakdownRow>), KernelError> {
    block_forward_with(KernelVariant::best_available(), weights, x, workers)
}

/// As [`block_forward`] under an explicit kernel variant.
pub fn block_forward_with(
    variant: KernelVariant,
    weights: &BlockWeights,
    x: &ActivationPair,
    workers: usize,
) -> Result<(ActivationPair, Vec<BreakdownRow>), KernelError> {
    let d = weights.d_model();
    let f = weights.d_ff();
    if x.padded_len() < d {
        return Err(dim_err(format!(
            "block input length {} < d_model {}",
            x.padded_len(),
            d
        )));
    }
    let x_re = &x.x_re()[..d];
    let x_im = &x.x_im()[..d];
    let mut timer = StageTimer::new();

    let h_re = rmsnorm(x_re, &weights.rms_gamma_attn, RMSNORM_EPS)?;
    let h_im = rmsnorm(x_im, &weights.rms_gamma_attn, RMSNORM_EPS)?;
    timer.mark("rmsnorm_attn", false);

    let qkv_in = pair_for(&weights.qkv, &h_re, &h_im)?;
    let qkv_out = parallel_fused_with(variant, &weights.qkv, &qkv_in, workers)?;
    timer.mark("qkv_proj", true);

    // Single token, empty history: attention reduces to the value projection.
    let v_re = &qkv_out.y_re[2 * d..3 * d];
    let v_im = &qkv_out.y_im[2 * d..3 * d];
    timer.mark("attention_identity", false);

    let o_in = pair_for(&weights.o, v_re, v_im)?;
    let o_out = parallel_fused_with(variant, &weights.o, &o_in, workers)?;
    timer.mark("o_proj", true);

    let mut a_re = x_re.to_vec();
    let mut a_im = x_im.to_vec();
    add_inplace(&mut a_re, &mut a_im, &o_out.y_re, &o_out.y_im);
    timer.mark("residual_attn", true);

    let h2_re = rmsnorm(&a_re, &weights.rms_gamma_mlp, RMSNORM_EPS)?;
    let h2_im = rmsnorm(&a_im, &weights.rms_gamma_mlp, RMSNORM_EPS)?;
    timer.mark("rmsnorm_mlp", false);

    let gu_in = pair_for(&weights.gate_up, &h2_re, &h2_im)?;
    let gu_out = parallel_fused_with(variant, &weights.gate_up, &gu_in, workers)?;
    timer.mark("gate_up_proj", true);

    let mut mlp_re = silu(&gu_out.y_re[..f]);
    for (g, u) in mlp_re.iter_mut().zip(&gu_out.y_re[f..2 * f]) {
        *g *= u;
    }
    let mut mlp_im = silu(&gu_out.y_im[..f]);
    for (g, u) in mlp_im.iter_mut().zip(&gu_out.y_im[f..2 * f]) {
        *g *= u;
    }
    timer.mark("silu_gate", false);

    let down_in = pair_for(&weights.down, &mlp_re, &mlp_im)?;
    let down_out = parallel_fused_with(variant, &weights.down, &down_in, workers)?;
    timer.mark("down_proj", true);

    add_inplace(&mut a_re, &mut a_im, &down_out.y_re, &down_out.y_im);
    timer.mark("residual_mlp", true);

    let out = pair_for(&weights.qkv, &a_re, &a_im)?;
    Ok((out, timer.finish()))
}

/// Analytic share of elementwise arithmetic spent in the fused GEMVs, under
/// a fixed op-accounting convention: GEMVs contribute `8 * n * m` add/sub
/// slots each; RMSNorm costs `4d + 3` per vector, SiLU 4 per element (exp,
/// add, divide, times x) plus 1 for the gate product, residual adds 1 per
/// element; the single-token attention identity costs nothing. Elementwise
/// stages run once per activation component.
pub fn op_dominance(d_model: usize, d_ff: usize) -> f64 {
    let d = d_model as u128;
    let f = d_ff as u128;
    // qkv (3d x d), o (d x d), gate_up (2f x d), down (d x f)
    let gemv = 8 * (3 * d * d + d * d + 2 * f * d + d * f);
    let rmsnorm = 2 * 2 * (4 * d + 3);
    let silu_gate = 2 * 5 * f;
    let residual = 2 * 2 * d;
    let other = rmsnorm + silu_gate + residual;
    gemv as f64 / (gemv + other) as f64
}

/// Fixed-width text table of a breakdown.
pub fn breakdown_table(rows: &[BreakdownRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<20} {:>12} {:>10}  {}\n",
        "operation", "elapsed_us", "fraction", "mul_free"
    ));
    let total: f64 = rows.iter().map(|r| r.elapsed_us).sum();
    for r in rows {
        out.push_str(&format!(
            "{:<20} {:>12.1} {:>9.1}%  {}\n",
            r.operation,
            r.elapsed_us,
            r.fraction_percent,
            if r.mul_free { "yes" } else { "no" }
        ));
    }
    out.push_str(&format!(
        "{:<20} {:>12.1} {:>9.1}%\n",
        "total", total, 100.0
    ));
    out
}

pub fn breakdown_csv_header() -> &'static str {
    "operation,elapsed_us,fraction_percent,mul_free"
}

pub fn breakdown_csv(rows: &[BreakdownRow]) -> String {
    let mut out = String::from(breakdown_csv_header());
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.operation, r.elapsed_us, r.fraction_percent, r.mul_free
        ));
    }
    out
}
