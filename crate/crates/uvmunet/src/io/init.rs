//! Seeded weight initialization.
//!
//! One SplitMix64 stream, consumed in the canonical tensor order (the order
//! [`NetWeights::named_tensors`] enumerates), fills every learned tensor with
//! uniform(-s, s), s = 1/sqrt(fan_in). Three kinds of tensors do not draw
//! from the stream: LayerNorm affine parameters start at the identity
//! (gamma 1, beta 0), adjustment factors start at the configured value, and
//! the state-matrix logs get the fixed log-spaced ramp. The step-size
//! projection bias draws from the stream but through its own rule: softplus
//! of the bias must land in [1e-3, 1e-1], log-uniformly.
//!
//! SplitMix64 is trivially portable, which keeps golden weight files
//! reproducible from any other implementation of the same recipe.

use crate::blocks::{
    ConvKind, MambaConfig, MambaWeights, PvmConfig, PvmWeights, Ss2dConfig, VmKind, VssWeights,
};
use crate::net::{NetConfig, NetWeights, StageVm};
use crate::tensor::Tensor;

/// SplitMix64 generator (Steele, Lea, Flood 2014).
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_unit() * (hi - lo)
    }
}

/// Smallest and largest initial step size: softplus(dt_proj_bias) lands
/// log-uniformly in this range.
pub const DT_INIT_MIN: f64 = 1e-3;
pub const DT_INIT_MAX: f64 = 1e-1;

fn fill_uniform(t: &mut Tensor, rng: &mut SplitMix64, fan_in: usize) {
    let s = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.next_range(-s, s) as f32;
    }
}

/// `A_log[d][n] = ln(n+1)`, so the state matrix `-exp(A_log)` spans the
/// negative ramp -1..-d_state on every channel.
fn fill_a_log(t: &mut Tensor) {
    let n = *t.shape().last().expect("a_log is rank >= 1");
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        *v = ((i % n + 1) as f32).ln();
    }
}

/// Draw dt log-uniformly from [DT_INIT_MIN, DT_INIT_MAX] and store the bias
/// softplus maps back onto it: bias = ln(exp(dt) - 1).
fn fill_dt_bias(t: &mut Tensor, rng: &mut SplitMix64) {
    let (lo, hi) = (DT_INIT_MIN.ln(), DT_INIT_MAX.ln());
    for v in t.data_mut() {
        let dt = rng.next_range(lo, hi).exp();
        *v = (dt.exp_m1()).ln() as f32;
    }
}

/// Seeded Mamba block weights (see the module docs for the recipe).
pub fn init_mamba_weights(cfg: &MambaConfig, kind: ConvKind, rng: &mut SplitMix64) -> MambaWeights {
    let mut w = MambaWeights::zeros(cfg, kind);
    fill_uniform(&mut w.in_proj, rng, cfg.d_model);
    let conv_fan = match kind {
        ConvKind::Dense => cfg.d_inner() * cfg.d_conv,
        ConvKind::Depthwise => cfg.d_conv,
    };
    fill_uniform(w.conv_kernel.tensor_mut(), rng, conv_fan);
    fill_uniform(&mut w.conv_bias, rng, conv_fan);
    fill_uniform(&mut w.x_proj, rng, cfg.d_inner());
    fill_uniform(&mut w.dt_proj_weight, rng, cfg.dt_rank);
    fill_dt_bias(&mut w.dt_proj_bias, rng);
    fill_a_log(&mut w.a_log);
    fill_uniform(&mut w.d_skip, rng, 1);
    fill_uniform(&mut w.out_proj, rng, cfg.d_inner());
    w
}

/// Seeded VSS block weights.
pub fn init_vss_weights(cfg: &Ss2dConfig, kind: ConvKind, rng: &mut SplitMix64) -> VssWeights {
    let mut w = VssWeights::zeros(cfg, kind);
    fill_uniform(&mut w.in_proj, rng, cfg.d_model);
    let conv_fan = match kind {
        ConvKind::Dense => cfg.d_inner() * cfg.d_conv * cfg.d_conv,
        ConvKind::Depthwise => cfg.d_conv * cfg.d_conv,
    };
    fill_uniform(w.conv_kernel.tensor_mut(), rng, conv_fan);
    fill_uniform(&mut w.conv_bias, rng, conv_fan);
    fill_uniform(&mut w.x_proj, rng, cfg.d_inner());
    fill_uniform(&mut w.dt_proj_weight, rng, cfg.dt_rank);
    fill_dt_bias(&mut w.dt_proj_bias, rng);
    fill_a_log(&mut w.a_log);
    fill_uniform(&mut w.ds, rng, 1);
    // out_norm stays at the identity
    fill_uniform(&mut w.out_proj, rng, cfg.d_inner());
    w
}

/// Seeded parallel-layer weights with independent branch bundles.
pub fn init_pvm_weights(
    cfg: &PvmConfig,
    conv: ConvKind,
    theta_init: f32,
    rng: &mut SplitMix64,
) -> PvmWeights {
    let mut w = PvmWeights::zeros(cfg, conv);
    let branch = cfg.branch_channels();
    w.branches = match cfg.kind {
        VmKind::Mamba1d => crate::blocks::BranchWeights::Mamba(
            (0..cfg.parallelism)
                .map(|_| init_mamba_weights(&MambaConfig::new(branch), conv, rng))
                .collect(),
        ),
        VmKind::Ss2d => crate::blocks::BranchWeights::Vss(
            (0..cfg.parallelism)
                .map(|_| init_vss_weights(&Ss2dConfig::new(branch), conv, rng))
                .collect(),
        ),
    };
    w.thetas = vec![theta_init; cfg.parallelism];
    fill_uniform(&mut w.proj, rng, cfg.channels);
    w
}

fn init_stage_vm(vm: &mut StageVm, branch: usize, rng: &mut SplitMix64) {
    match vm {
        StageVm::Mamba(m) => {
            *m = init_mamba_weights(&MambaConfig::new(branch), ConvKind::Depthwise, rng);
        }
        StageVm::Vss(v) => {
            *v = init_vss_weights(&Ss2dConfig::new(branch), ConvKind::Depthwise, rng);
        }
    }
}

/// Deterministic network weights for `seed`: same seed, bitwise-identical
/// bundle.
pub fn init_weights(cfg: &NetConfig, seed: u64) -> NetWeights {
    let mut rng = SplitMix64::new(seed);
    let mut w = NetWeights::zeros(cfg);
    for (conv, &(ci, _)) in w.enc_convs.iter_mut().zip(cfg.enc_conv_dims().iter()) {
        fill_uniform(&mut conv.kernel, &mut rng, ci * 9);
        fill_uniform(&mut conv.bias, &mut rng, ci * 9);
    }
    for (stage, &(ci, _)) in w.enc_pvms.iter_mut().zip(cfg.enc_pvm_dims().iter()) {
        init_stage_vm(&mut stage.vm, ci / cfg.parallelism, &mut rng);
        fill_uniform(&mut stage.proj, &mut rng, ci);
    }
    for (stage, &(ci, _)) in w.dec_pvms.iter_mut().zip(cfg.dec_pvm_dims().iter()) {
        init_stage_vm(&mut stage.vm, ci / cfg.parallelism, &mut rng);
        fill_uniform(&mut stage.proj, &mut rng, ci);
    }
    for (conv, &(ci, _)) in w.dec_convs.iter_mut().zip(cfg.dec_conv_dims().iter()) {
        fill_uniform(&mut conv.kernel, &mut rng, ci * 9);
        fill_uniform(&mut conv.bias, &mut rng, ci * 9);
    }
    let head_fan = cfg.channels[0];
    fill_uniform(&mut w.head_kernel, &mut rng, head_fan);
    fill_uniform(&mut w.head_bias, &mut rng, head_fan);
    let sab_fan = 2 * crate::net::SAB_KERNEL * crate::net::SAB_KERNEL;
    fill_uniform(&mut w.sab_kernel, &mut rng, sab_fan);
    fill_uniform(&mut w.sab_bias, &mut rng, sab_fan);
    let s = cfg.bridge_descriptor_len();
    for (fw, fb) in &mut w.cab_fcs {
        fill_uniform(fw, &mut rng, s);
        fill_uniform(fb, &mut rng, s);
    }
    w
}
