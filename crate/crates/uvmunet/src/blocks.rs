//! The blocks built on the scan kernel: the Mamba block, the residual
//! Vision Mamba unit with adjustment factor, the SS2D/VSS block with its
//! four-direction scan expansion, and the Parallel Vision Mamba layer.
//!
//! The internal convolution exists in two layouts. The dense layout
//! (`[d_inner, d_inner, k]`, cross-channel) matches the parameter analysis
//! the census module reproduces term for term; the depthwise layout
//! (`[d_inner, k]`, per-channel) is the one the assembled network uses, where
//! the whole-model parameter budget is calibrated. Both run through the same
//! forward pipeline; only the convolution step differs.

use crate::error::{Error, Result};
use crate::scan::{discretize, scan_parallel, ssm_output};
use crate::tensor::{self, Tensor};
use rayon::prelude::*;

/// Chunk width used by the blocks when invoking the parallel scan.
pub const DEFAULT_SCAN_CHUNK: usize = 64;

/// Epsilon for every layer normalization inside the blocks.
pub const LN_EPS: f32 = 1e-5;

/// Default step-size rank: `d_model/16`, floor division, never below 1.
pub fn default_dt_rank(d_model: usize) -> usize {
    (d_model / 16).max(1)
}

// ---------------------------------------------------------------------------
// Mamba block
// ---------------------------------------------------------------------------

/// Hyperparameters of a 1-D Mamba block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MambaConfig {
    /// Input channel count.
    pub d_model: usize,
    /// Expansion multiplier for the internal projection width.
    pub expand: usize,
    /// Per-channel state dimension of the SSM.
    pub d_state: usize,
    /// Width of the internal causal convolution.
    pub d_conv: usize,
    /// Rank of the step-size projection.
    pub dt_rank: usize,
}

impl MambaConfig {
    /// Defaults: expand 2, d_state 16, d_conv 4, dt_rank = d_model/16 (min 1).
    pub fn new(d_model: usize) -> Self {
        MambaConfig {
            d_model,
            expand: 2,
            d_state: 16,
            d_conv: 4,
            dt_rank: default_dt_rank(d_model),
        }
    }

    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    /// Output width of the intermediate projection: dt_rank + 2·d_state.
    pub fn x_proj_width(&self) -> usize {
        self.dt_rank + 2 * self.d_state
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0
            || self.expand == 0
            || self.d_state == 0
            || self.d_conv == 0
            || self.dt_rank == 0
        {
            return Err(Error::Config(format!(
                "all Mamba hyperparameters must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Layout of the internal 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    /// Cross-channel kernel `[d_inner, d_inner, k]`.
    Dense,
    /// Per-channel kernel `[d_inner, k]`.
    Depthwise,
}

/// Kernel storage for the two convolution layouts.
#[derive(Clone, Debug, PartialEq)]
pub enum Conv1dKernel {
    Dense(Tensor),
    Depthwise(Tensor),
}

impl Conv1dKernel {
    pub fn tensor(&self) -> &Tensor {
        match self {
            Conv1dKernel::Dense(t) | Conv1dKernel::Depthwise(t) => t,
        }
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        match self {
            Conv1dKernel::Dense(t) | Conv1dKernel::Depthwise(t) => t,
        }
    }

    fn apply(&self, x: &Tensor, bias: &Tensor, pad: usize) -> Result<Tensor> {
        match self {
            Conv1dKernel::Dense(k) => tensor::conv1d(x, k, bias, pad),
            Conv1dKernel::Depthwise(k) => tensor::conv1d_depthwise(x, k, bias, pad),
        }
    }
}

/// Parameter bundle of one Mamba block.
#[derive(Clone, Debug, PartialEq)]
pub struct MambaWeights {
    /// `[d_model, 2·d_inner]`, bias-free; one matrix feeds both branches.
    pub in_proj: Tensor,
    pub conv_kernel: Conv1dKernel,
    /// `[d_inner]`
    pub conv_bias: Tensor,
    /// `[d_inner, dt_rank + 2·d_state]`, bias-free.
    pub x_proj: Tensor,
    /// `[dt_rank, d_inner]`
    pub dt_proj_weight: Tensor,
    /// `[d_inner]`
    pub dt_proj_bias: Tensor,
    /// `[d_inner, d_state]`; the state matrix is `-exp(A_log)`.
    pub a_log: Tensor,
    /// `[d_inner]` skip gains.
    pub d_skip: Tensor,
    /// `[d_inner, d_model]`, bias-free.
    pub out_proj: Tensor,
}

impl MambaWeights {
    /// All-zero bundle with the shapes dictated by `cfg` and `kind`.
    pub fn zeros(cfg: &MambaConfig, kind: ConvKind) -> Self {
        let di = cfg.d_inner();
        let kernel = match kind {
            ConvKind::Dense => Conv1dKernel::Dense(Tensor::zeros(&[di, di, cfg.d_conv])),
            ConvKind::Depthwise => Conv1dKernel::Depthwise(Tensor::zeros(&[di, cfg.d_conv])),
        };
        MambaWeights {
            in_proj: Tensor::zeros(&[cfg.d_model, 2 * di]),
            conv_kernel: kernel,
            conv_bias: Tensor::zeros(&[di]),
            x_proj: Tensor::zeros(&[di, cfg.x_proj_width()]),
            dt_proj_weight: Tensor::zeros(&[cfg.dt_rank, di]),
            dt_proj_bias: Tensor::zeros(&[di]),
            a_log: Tensor::zeros(&[di, cfg.d_state]),
            d_skip: Tensor::zeros(&[di]),
            out_proj: Tensor::zeros(&[di, cfg.d_model]),
        }
    }

    pub fn conv_kind(&self) -> ConvKind {
        match self.conv_kernel {
            Conv1dKernel::Dense(_) => ConvKind::Dense,
            Conv1dKernel::Depthwise(_) => ConvKind::Depthwise,
        }
    }

    /// Total element count of every tensor in the bundle.
    pub fn param_count(&self) -> u64 {
        self.tensors().iter().map(|t| t.len() as u64).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.in_proj,
            self.conv_kernel.tensor(),
            &self.conv_bias,
            &self.x_proj,
            &self.dt_proj_weight,
            &self.dt_proj_bias,
            &self.a_log,
            &self.d_skip,
            &self.out_proj,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.in_proj,
            self.conv_kernel.tensor_mut(),
            &mut self.conv_bias,
            &mut self.x_proj,
            &mut self.dt_proj_weight,
            &mut self.dt_proj_bias,
            &mut self.a_log,
            &mut self.d_skip,
            &mut self.out_proj,
        ]
    }
}

/// Runs the per-direction S6 path shared by the 1-D block and the 2-D scan:
/// project to (dt_raw, B, C), softplus the projected step, discretize, scan,
/// and read out with the skip gain. `u` is `[d_inner, L]` post-activation.
#[allow(clippy::too_many_arguments)]
fn s6_path(
    u: &Tensor,
    x_proj: &Tensor,
    dt_proj_weight: &Tensor,
    dt_proj_bias: &Tensor,
    a_log: &Tensor,
    d_skip: &Tensor,
    dt_rank: usize,
    d_state: usize,
) -> Result<Tensor> {
    let u_tokens = tensor::transpose2(u)?; // [L, d_inner]
    let x_dbl = tensor::matmul(&u_tokens, x_proj)?;
    let dt_raw = tensor::col_range(&x_dbl, 0, dt_rank)?;
    let b = tensor::col_range(&x_dbl, dt_rank, dt_rank + d_state)?;
    let c = tensor::col_range(&x_dbl, dt_rank + d_state, dt_rank + 2 * d_state)?;
    // f32 softplus underflows to 0 below about -87; the discretization
    // requires dt strictly positive
    let dt = tensor::linear(&dt_raw, dt_proj_weight, Some(dt_proj_bias))?
        .map(|v| tensor::softplus_scalar(v).max(f32::MIN_POSITIVE));
    let dt = tensor::transpose2(&dt)?; // [d_inner, L]
    let a = a_log.map(|v| -v.exp());
    let b = tensor::transpose2(&b)?; // [d_state, L]
    let c = tensor::transpose2(&c)?;
    let (a_bar, b_term) = discretize(&dt, &a, &b, u)?;
    let h = scan_parallel(&a_bar, &b_term, DEFAULT_SCAN_CHUNK)?;
    ssm_output(&h, &c, d_skip, u)
}

/// Forward pass of the Mamba block over a `[L, d_model]` sequence.
///
/// Pipeline: in_proj splits into (u, z); u goes through the causal
/// convolution and SiLU, then the S6 selective scan; the result is gated by
/// silu(z) and projected back to d_model.
pub fn mamba_forward(cfg: &MambaConfig, w: &MambaWeights, x: &Tensor) -> Result<Tensor> {
    cfg.validate()?;
    if x.rank() != 2 || x.shape()[1] != cfg.d_model {
        return Err(Error::dim(
            "mamba_forward",
            format!(
                "input {:?} does not match d_model {}",
                x.shape(),
                cfg.d_model
            ),
        ));
    }
    let di = cfg.d_inner();
    let xz = tensor::matmul(x, &w.in_proj)?;
    let u = tensor::col_range(&xz, 0, di)?;
    let z = tensor::col_range(&xz, di, 2 * di)?;

    let u = tensor::transpose2(&u)?; // [d_inner, L]
    let u = w.conv_kernel.apply(&u, &w.conv_bias, cfg.d_conv - 1)?;
    let u = tensor::silu(&u);

    let y = s6_path(
        &u,
        &w.x_proj,
        &w.dt_proj_weight,
        &w.dt_proj_bias,
        &w.a_log,
        &w.d_skip,
        cfg.dt_rank,
        cfg.d_state,
    )?;

    let gated = tensor::mul(&tensor::transpose2(&y)?, &tensor::silu(&z))?;
    tensor::matmul(&gated, &w.out_proj)
}

/// Residual Vision Mamba unit: `mamba_forward(x) + theta·x`.
pub fn vm_forward(cfg: &MambaConfig, w: &MambaWeights, theta: f32, x: &Tensor) -> Result<Tensor> {
    let y = mamba_forward(cfg, w, x)?;
    tensor::add(&y, &x.scale(theta))
}

// ---------------------------------------------------------------------------
// SS2D / VSS block
// ---------------------------------------------------------------------------

/// Hyperparameters of the 2-D selective-scan (VSS) block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ss2dConfig {
    pub d_model: usize,
    pub expand: usize,
    pub d_state: usize,
    /// Width of the internal 2-D convolution (3 here, padded to preserve H×W).
    pub d_conv: usize,
    pub dt_rank: usize,
    /// Scan-direction count.
    pub k: usize,
}

impl Ss2dConfig {
    /// Defaults: expand 2, d_state 16, d_conv 3, dt_rank = d_model/16 (min 1), K = 4.
    pub fn new(d_model: usize) -> Self {
        Ss2dConfig {
            d_model,
            expand: 2,
            d_state: 16,
            d_conv: 3,
            dt_rank: default_dt_rank(d_model),
            k: 4,
        }
    }

    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    pub fn x_proj_width(&self) -> usize {
        self.dt_rank + 2 * self.d_state
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.expand == 0 || self.d_state == 0 || self.dt_rank == 0 {
            return Err(Error::Config(format!(
                "all SS2D hyperparameters must be >= 1, got {self:?}"
            )));
        }
        if self.k != 4 {
            return Err(Error::Config(format!(
                "the four-direction scan requires K = 4, got {}",
                self.k
            )));
        }
        if self.d_conv % 2 != 1 {
            return Err(Error::Config(format!(
                "d_conv must be odd to preserve H×W, got {}",
                self.d_conv
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Conv2dKernel {
    /// `[d_inner, d_inner, k, k]`
    Dense(Tensor),
    /// `[d_inner, k, k]`
    Depthwise(Tensor),
}

impl Conv2dKernel {
    pub fn tensor(&self) -> &Tensor {
        match self {
            Conv2dKernel::Dense(t) | Conv2dKernel::Depthwise(t) => t,
        }
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        match self {
            Conv2dKernel::Dense(t) | Conv2dKernel::Depthwise(t) => t,
        }
    }

    fn apply(&self, x: &Tensor, bias: &Tensor, pad: usize) -> Result<Tensor> {
        match self {
            Conv2dKernel::Dense(k) => tensor::conv2d(x, k, bias, pad),
            Conv2dKernel::Depthwise(k) => tensor::conv2d_depthwise(x, k, bias, pad),
        }
    }
}

/// Parameter bundle of one VSS block. The S6 projections come in K-fold
/// stacks, one slice per scan direction.
#[derive(Clone, Debug, PartialEq)]
pub struct VssWeights {
    /// `[d_model, 2·d_inner]`, bias-free.
    pub in_proj: Tensor,
    pub conv_kernel: Conv2dKernel,
    /// `[d_inner]`
    pub conv_bias: Tensor,
    /// `[K, d_inner, dt_rank + 2·d_state]`
    pub x_proj: Tensor,
    /// `[K, dt_rank, d_inner]`
    pub dt_proj_weight: Tensor,
    /// `[K, d_inner]`
    pub dt_proj_bias: Tensor,
    /// `[K·d_inner, d_state]`
    pub a_log: Tensor,
    /// `[K·d_inner]`
    pub ds: Tensor,
    /// `[d_inner]` each; normalization after the scan merge.
    pub out_norm_gamma: Tensor,
    pub out_norm_beta: Tensor,
    /// `[d_inner, d_model]`, bias-free.
    pub out_proj: Tensor,
}

impl VssWeights {
    pub fn zeros(cfg: &Ss2dConfig, kind: ConvKind) -> Self {
        let di = cfg.d_inner();
        let kernel = match kind {
            ConvKind::Dense => {
                Conv2dKernel::Dense(Tensor::zeros(&[di, di, cfg.d_conv, cfg.d_conv]))
            }
            ConvKind::Depthwise => {
                Conv2dKernel::Depthwise(Tensor::zeros(&[di, cfg.d_conv, cfg.d_conv]))
            }
        };
        VssWeights {
            in_proj: Tensor::zeros(&[cfg.d_model, 2 * di]),
            conv_kernel: kernel,
            conv_bias: Tensor::zeros(&[di]),
            x_proj: Tensor::zeros(&[cfg.k, di, cfg.x_proj_width()]),
            dt_proj_weight: Tensor::zeros(&[cfg.k, cfg.dt_rank, di]),
            dt_proj_bias: Tensor::zeros(&[cfg.k, di]),
            a_log: Tensor::zeros(&[cfg.k * di, cfg.d_state]),
            ds: Tensor::zeros(&[cfg.k * di]),
            out_norm_gamma: Tensor::zeros(&[di]),
            out_norm_beta: Tensor::zeros(&[di]),
            out_proj: Tensor::zeros(&[di, cfg.d_model]),
        }
    }

    pub fn param_count(&self) -> u64 {
        self.tensors().iter().map(|t| t.len() as u64).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.in_proj,
            self.conv_kernel.tensor(),
            &self.conv_bias,
            &self.x_proj,
            &self.dt_proj_weight,
            &self.dt_proj_bias,
            &self.a_log,
            &self.ds,
            &self.out_norm_gamma,
            &self.out_norm_beta,
            &self.out_proj,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.in_proj,
            self.conv_kernel.tensor_mut(),
            &mut self.conv_bias,
            &mut self.x_proj,
            &mut self.dt_proj_weight,
            &mut self.dt_proj_bias,
            &mut self.a_log,
            &mut self.ds,
            &mut self.out_norm_gamma,
            &mut self.out_norm_beta,
            &mut self.out_proj,
        ]
    }
}

/// Expands a `[C,H,W]` grid into the four directional sequences `[4,C,H·W]`:
/// row-major, reversed row-major, column-major, reversed column-major.
pub fn scan_expand(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::dim(
            "scan_expand",
            format!("expects [C,H,W], got {:?}", x.shape()),
        ));
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let l = h * w;
    let mut out = vec![0.0f32; 4 * c * l];
    for ch in 0..c {
        let src = &x.data()[ch * l..(ch + 1) * l];
        for t in 0..l {
            let row_major = src[t];
            let col_major = src[(t % h) * w + t / h];
            out[ch * l + t] = row_major;
            out[(c + ch) * l + (l - 1 - t)] = row_major;
            out[(2 * c + ch) * l + t] = col_major;
            out[(3 * c + ch) * l + (l - 1 - t)] = col_major;
        }
    }
    Tensor::new(&[4, c, l], out)
}

/// Re-indexes each directional sequence back to grid order and sums the four
/// grids: the inverse bookkeeping of [`scan_expand`], so that merging an
/// unmodified expansion yields exactly 4·x.
pub fn scan_merge(seqs: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    if seqs.rank() != 3 || seqs.shape()[0] != 4 {
        return Err(Error::dim(
            "scan_merge",
            format!("expects [4,C,L], got {:?}", seqs.shape()),
        ));
    }
    let (c, l) = (seqs.shape()[1], seqs.shape()[2]);
    if h * w != l {
        return Err(Error::dim(
            "scan_merge",
            format!("grid {h}x{w} does not cover sequence length {l}"),
        ));
    }
    let mut out = vec![0.0f32; c * l];
    let data = seqs.data();
    for ch in 0..c {
        for t in 0..l {
            // grid position of sequence index t per direction
            let p_row = t;
            let p_col = (t % h) * w + t / h;
            out[ch * l + p_row] += data[ch * l + t];
            out[ch * l + p_row] += data[(c + ch) * l + (l - 1 - t)];
            out[ch * l + p_col] += data[(2 * c + ch) * l + t];
            out[ch * l + p_col] += data[(3 * c + ch) * l + (l - 1 - t)];
        }
    }
    Tensor::new(&[c, h, w], out)
}

/// `[L,C] tokens -> [C,H,W] grid` (row-major token order).
pub fn tokens_to_grid(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    if x.rank() != 2 || x.shape()[0] != h * w {
        return Err(Error::dim(
            "tokens_to_grid",
            format!("tokens {:?} do not cover grid {h}x{w}", x.shape()),
        ));
    }
    tensor::transpose2(x)?.reshape(&[x.shape()[1], h, w])
}

/// `[C,H,W] grid -> [L,C] tokens` (row-major token order).
pub fn grid_to_tokens(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::dim(
            "grid_to_tokens",
            format!("expects [C,H,W], got {:?}", x.shape()),
        ));
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    tensor::transpose2(&x.reshape(&[c, h * w])?)
}

/// Forward pass of the VSS block over a `[H,W,C]` feature map.
///
/// One projection feeds two branches: the gate branch is silu(z); the scan
/// branch runs the 2-D convolution, SiLU, the four-direction selective scan
/// (each direction with its own projection slices), scan merge, and layer
/// normalization. The gated product goes through the output projection.
pub fn vss_forward(cfg: &Ss2dConfig, w: &VssWeights, x: &Tensor) -> Result<Tensor> {
    cfg.validate()?;
    if x.rank() != 3 || x.shape()[2] != cfg.d_model {
        return Err(Error::dim(
            "vss_forward",
            format!(
                "input {:?} does not match d_model {}",
                x.shape(),
                cfg.d_model
            ),
        ));
    }
    let (h, wd, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let l = h * wd;
    let di = cfg.d_inner();

    let tokens = x.reshape(&[l, c])?;
    let xz = tensor::matmul(&tokens, &w.in_proj)?;
    let u = tensor::col_range(&xz, 0, di)?;
    let z = tensor::col_range(&xz, di, 2 * di)?;

    let grid = tokens_to_grid(&u, h, wd)?;
    let grid = w
        .conv_kernel
        .apply(&grid, &w.conv_bias, (cfg.d_conv - 1) / 2)?;
    let grid = tensor::silu(&grid);

    let seqs = scan_expand(&grid)?;
    let dir_outputs: Vec<Tensor> = (0..cfg.k)
        .into_par_iter()
        .map(|k| {
            let u_k = tensor::plane(&seqs, k)?;
            let y = s6_path(
                &u_k,
                &tensor::plane(&w.x_proj, k)?,
                &tensor::plane(&w.dt_proj_weight, k)?,
                &tensor::plane(&w.dt_proj_bias, k)?,
                &tensor::rows(&w.a_log, k * di, (k + 1) * di)?,
                &tensor::rows(&w.ds, k * di, (k + 1) * di)?,
                cfg.dt_rank,
                cfg.d_state,
            )?;
            Ok(y)
        })
        .collect::<Result<_>>()?;

    let mut stacked = Vec::with_capacity(4 * di * l);
    for y in &dir_outputs {
        stacked.extend_from_slice(y.data());
    }
    let merged = scan_merge(&Tensor::new(&[4, di, l], stacked)?, h, wd)?;

    let merged_tokens = grid_to_tokens(&merged)?;
    let normed = tensor::layernorm(&merged_tokens, &w.out_norm_gamma, &w.out_norm_beta, LN_EPS)?;
    let gated = tensor::mul(&normed, &tensor::silu(&z))?;
    let out = tensor::matmul(&gated, &w.out_proj)?;
    out.reshape(&[h, wd, c])
}

// ---------------------------------------------------------------------------
// Parallel Vision Mamba layer
// ---------------------------------------------------------------------------

/// Which block runs inside each branch of the parallel layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VmKind {
    Mamba1d,
    Ss2d,
}

/// Configuration of the Parallel Vision Mamba layer: `channels` are split
/// into `parallelism` contiguous groups, each handled by its own residual
/// Vision Mamba unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PvmConfig {
    pub channels: usize,
    pub parallelism: usize,
    pub kind: VmKind,
}

impl PvmConfig {
    pub fn new(channels: usize, parallelism: usize, kind: VmKind) -> Self {
        PvmConfig {
            channels,
            parallelism,
            kind,
        }
    }

    pub fn branch_channels(&self) -> usize {
        self.channels / self.parallelism
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4].contains(&self.parallelism) {
            return Err(Error::Config(format!(
                "parallelism must be 1, 2 or 4, got {}",
                self.parallelism
            )));
        }
        if self.channels == 0 || !self.channels.is_multiple_of(self.parallelism) {
            return Err(Error::Config(format!(
                "channels {} not divisible into {} branches",
                self.channels, self.parallelism
            )));
        }
        Ok(())
    }
}

/// Per-branch weight bundles; one independent unit per channel group.
#[derive(Clone, Debug, PartialEq)]
pub enum BranchWeights {
    Mamba(Vec<MambaWeights>),
    Vss(Vec<VssWeights>),
}

impl BranchWeights {
    pub fn len(&self) -> usize {
        match self {
            BranchWeights::Mamba(v) => v.len(),
            BranchWeights::Vss(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn param_count(&self) -> u64 {
        match self {
            BranchWeights::Mamba(v) => v.iter().map(|w| w.param_count()).sum(),
            BranchWeights::Vss(v) => v.iter().map(|w| w.param_count()).sum(),
        }
    }
}

/// Parameter bundle of the parallel layer: the two outer LayerNorms, the
/// branch units with their adjustment factors, and the output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct PvmWeights {
    pub ln_in_gamma: Tensor,
    pub ln_in_beta: Tensor,
    pub branches: BranchWeights,
    /// Adjustment factor of each branch's residual path.
    pub thetas: Vec<f32>,
    pub ln_out_gamma: Tensor,
    pub ln_out_beta: Tensor,
    /// `[channels, channels]`, bias-free.
    pub proj: Tensor,
}

impl PvmWeights {
    /// All-zero bundle except identity LayerNorms (gamma 1) and unit thetas.
    pub fn zeros(cfg: &PvmConfig, conv: ConvKind) -> Self {
        let c = cfg.channels;
        let bc = cfg.branch_channels();
        let branches = match cfg.kind {
            VmKind::Mamba1d => BranchWeights::Mamba(
                (0..cfg.parallelism)
                    .map(|_| MambaWeights::zeros(&MambaConfig::new(bc), conv))
                    .collect(),
            ),
            VmKind::Ss2d => BranchWeights::Vss(
                (0..cfg.parallelism)
                    .map(|_| VssWeights::zeros(&Ss2dConfig::new(bc), conv))
                    .collect(),
            ),
        };
        PvmWeights {
            ln_in_gamma: Tensor::full(&[c], 1.0),
            ln_in_beta: Tensor::zeros(&[c]),
            branches,
            thetas: vec![1.0; cfg.parallelism],
            ln_out_gamma: Tensor::full(&[c], 1.0),
            ln_out_beta: Tensor::zeros(&[c]),
            proj: Tensor::zeros(&[c, c]),
        }
    }

    /// Element count including the scalar thetas.
    pub fn param_count(&self) -> u64 {
        self.branches.param_count()
            + self.thetas.len() as u64
            + (self.ln_in_gamma.len()
                + self.ln_in_beta.len()
                + self.ln_out_gamma.len()
                + self.ln_out_beta.len()
                + self.proj.len()) as u64
    }
}

/// Forward pass of the parallel layer over a `[H,W,C]` feature map:
/// LN, split into `p` channel groups, an independent residual VM per group,
/// concat in original order, LN, projection. The 1-D kind flattens H·W
/// row-major into the sequence; the SS2D kind runs the VSS block per group.
pub fn pvm_forward(cfg: &PvmConfig, w: &PvmWeights, x: &Tensor) -> Result<Tensor> {
    cfg.validate()?;
    if x.rank() != 3 || x.shape()[2] != cfg.channels {
        return Err(Error::dim(
            "pvm_forward",
            format!(
                "input {:?} does not match channels {}",
                x.shape(),
                cfg.channels
            ),
        ));
    }
    if w.branches.len() != cfg.parallelism || w.thetas.len() != cfg.parallelism {
        return Err(Error::Config(format!(
            "expected {} branch bundles, got {}",
            cfg.parallelism,
            w.branches.len()
        )));
    }
    let (h, wd, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let tokens = x.reshape(&[h * wd, c])?;
    let normed = tensor::layernorm(&tokens, &w.ln_in_gamma, &w.ln_in_beta, LN_EPS)?;
    let groups = tensor::split_cols(&normed, cfg.parallelism)?;

    let outputs: Vec<Tensor> = groups
        .par_iter()
        .enumerate()
        .map(|(i, group)| {
            let theta = w.thetas[i];
            match (&w.branches, cfg.kind) {
                (BranchWeights::Mamba(units), VmKind::Mamba1d) => {
                    let bcfg = MambaConfig::new(cfg.branch_channels());
                    vm_forward(&bcfg, &units[i], theta, group)
                }
                (BranchWeights::Vss(units), VmKind::Ss2d) => {
                    let bcfg = Ss2dConfig::new(cfg.branch_channels());
                    let grid = group.reshape(&[h, wd, cfg.branch_channels()])?;
                    let y = vss_forward(&bcfg, &units[i], &grid)?;
                    let y = y.reshape(&[h * wd, cfg.branch_channels()])?;
                    tensor::add(&y, &group.scale(theta))
                }
                _ => Err(Error::Config(
                    "branch weight kind does not match configured kind".to_string(),
                )),
            }
        })
        .collect::<Result<_>>()?;

    let refs: Vec<&Tensor> = outputs.iter().collect();
    let merged = tensor::concat_cols(&refs)?;
    let normed = tensor::layernorm(&merged, &w.ln_out_gamma, &w.ln_out_beta, LN_EPS)?;
    let projected = tensor::matmul(&normed, &w.proj)?;
    projected.reshape(&[h, wd, c])
}
