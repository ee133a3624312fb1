//! The full U-shaped segmentation network: a 6-stage encoder/decoder with
//! plain convolution stages for shallow features, parallel Vision Mamba
//! stages for deep features, spatial/channel attention bridges on the skip
//! path, and a 1×1 sigmoid head. Forward inference only.
//!
//! Stage layout (spatial size for a 256×256 input):
//!
//! ```text
//! enc1 conv 3->c1   @256  pool -> skip1 @128
//! enc2 conv c1->c2  @128  pool -> skip2 @64
//! enc3 conv c2->c3  @64   pool -> skip3 @32
//! enc4 pvm  c3->c4  @32   pool -> skip4 @16
//! enc5 pvm  c4->c5  @16   pool -> skip5 @8
//! enc6 pvm  c5->c6  @8         (bottleneck)
//! dec1 pvm  c6->c5  @8    + skip5
//! dec2 pvm  c5->c4  @8    up -> @16  + skip4
//! dec3 pvm  c4->c3  @16   up -> @32  + skip3
//! dec4 conv c3->c2  @32   up -> @64  + skip2
//! dec5 conv c2->c1  @64   up -> @128 + skip1
//! head 1x1  c1->1   @128  up -> @256, sigmoid
//! ```
//!
//! Each stage block runs at the resolution it receives and the decoder
//! upsamples afterwards, keeping the compute budget dominated by the early
//! convolutions rather than by full-resolution decoding.
//!
//! The network's Vision Mamba stages share one block across the `p` channel
//! groups of a stage (the groups all have the same width, and one set of
//! block weights serves them all), with a per-group adjustment factor. The
//! blocks carry the depthwise convolution layout. This is the composition
//! whose parameter budget the accounting module reproduces stage by stage.

use crate::blocks::{
    grid_to_tokens, mamba_forward, tokens_to_grid, vss_forward, ConvKind, MambaConfig,
    MambaWeights, Ss2dConfig, VmKind, VssWeights, LN_EPS,
};
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Kernel width of the shared dilated convolution in the spatial bridge.
pub const SAB_KERNEL: usize = 7;
pub const SAB_DILATION: usize = 3;
pub const SAB_PAD: usize = 9;

/// Network hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetConfig {
    /// The six stage widths, strictly increasing.
    pub channels: [usize; 6],
    /// Input spatial size (H, W), both divisible by 32.
    pub input_size: (usize, usize),
    pub in_channels: usize,
    /// Branch count of every Vision Mamba stage (1, 2 or 4).
    pub parallelism: usize,
    pub inner_kind: VmKind,
    /// Whether the skip path applies the attention bridges.
    pub bridge_enabled: bool,
    pub theta_init: f32,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            channels: [8, 16, 24, 32, 48, 64],
            input_size: (256, 256),
            in_channels: 3,
            parallelism: 4,
            inner_kind: VmKind::Mamba1d,
            bridge_enabled: true,
            theta_init: 1.0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.channels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "channels must be strictly increasing, got {:?}",
                self.channels
            )));
        }
        if ![1, 2, 4].contains(&self.parallelism) {
            return Err(Error::Config(format!(
                "parallelism must be 1, 2 or 4, got {}",
                self.parallelism
            )));
        }
        // stages 4-6 and their decoder mirrors split c3..c6 into p groups
        for &c in &self.channels[2..] {
            if c % self.parallelism != 0 {
                return Err(Error::Config(format!(
                    "stage width {c} not divisible by parallelism {}",
                    self.parallelism
                )));
            }
        }
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(Error::Config(format!(
                "input size {h}x{w} must be divisible by 32 (five downsamples)"
            )));
        }
        if self.in_channels == 0 {
            return Err(Error::Config("in_channels must be >= 1".to_string()));
        }
        Ok(())
    }

    /// (in, out) widths of the three encoder conv stages.
    pub fn enc_conv_dims(&self) -> [(usize, usize); 3] {
        let c = &self.channels;
        [(self.in_channels, c[0]), (c[0], c[1]), (c[1], c[2])]
    }

    /// (in, out) widths of the three encoder Vision Mamba stages.
    pub fn enc_pvm_dims(&self) -> [(usize, usize); 3] {
        let c = &self.channels;
        [(c[2], c[3]), (c[3], c[4]), (c[4], c[5])]
    }

    /// (in, out) widths of the three decoder Vision Mamba stages.
    pub fn dec_pvm_dims(&self) -> [(usize, usize); 3] {
        let c = &self.channels;
        [(c[5], c[4]), (c[4], c[3]), (c[3], c[2])]
    }

    /// (in, out) widths of the two decoder conv stages.
    pub fn dec_conv_dims(&self) -> [(usize, usize); 2] {
        let c = &self.channels;
        [(c[2], c[1]), (c[1], c[0])]
    }

    /// Total width of the pooled skip descriptor feeding the channel bridge.
    pub fn bridge_descriptor_len(&self) -> usize {
        self.channels[..5].iter().sum()
    }
}

/// One convolution stage: 3×3 kernel plus bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvStageWeights {
    /// `[c_out, c_in, 3, 3]`
    pub kernel: Tensor,
    /// `[c_out]`
    pub bias: Tensor,
}

impl ConvStageWeights {
    fn zeros(c_in: usize, c_out: usize) -> Self {
        ConvStageWeights {
            kernel: Tensor::zeros(&[c_out, c_in, 3, 3]),
            bias: Tensor::zeros(&[c_out]),
        }
    }
}

/// The block shared by the branches of one Vision Mamba stage.
#[derive(Clone, Debug, PartialEq)]
pub enum StageVm {
    Mamba(MambaWeights),
    Vss(VssWeights),
}

/// One Vision Mamba stage of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct PvmStageWeights {
    /// `[c_in]` each.
    pub ln_in_gamma: Tensor,
    pub ln_in_beta: Tensor,
    /// Shared block over `c_in / p` channels, depthwise convolution layout.
    pub vm: StageVm,
    /// `[p]` adjustment factors, one per branch.
    pub thetas: Tensor,
    /// `[c_in]` each.
    pub ln_out_gamma: Tensor,
    pub ln_out_beta: Tensor,
    /// `[c_in, c_out]`, bias-free.
    pub proj: Tensor,
}

impl PvmStageWeights {
    fn zeros(cfg: &NetConfig, c_in: usize, c_out: usize) -> Self {
        let branch = c_in / cfg.parallelism;
        let vm = match cfg.inner_kind {
            VmKind::Mamba1d => StageVm::Mamba(MambaWeights::zeros(
                &MambaConfig::new(branch),
                ConvKind::Depthwise,
            )),
            VmKind::Ss2d => StageVm::Vss(VssWeights::zeros(
                &Ss2dConfig::new(branch),
                ConvKind::Depthwise,
            )),
        };
        PvmStageWeights {
            ln_in_gamma: Tensor::full(&[c_in], 1.0),
            ln_in_beta: Tensor::zeros(&[c_in]),
            vm,
            thetas: Tensor::full(&[cfg.parallelism], cfg.theta_init),
            ln_out_gamma: Tensor::full(&[c_in], 1.0),
            ln_out_beta: Tensor::zeros(&[c_in]),
            proj: Tensor::zeros(&[c_in, c_out]),
        }
    }
}

/// Immutable parameter bundle of the whole network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetWeights {
    pub enc_convs: Vec<ConvStageWeights>,
    pub enc_pvms: Vec<PvmStageWeights>,
    pub dec_pvms: Vec<PvmStageWeights>,
    pub dec_convs: Vec<ConvStageWeights>,
    /// `[1, c1, 1, 1]` and `[1]`.
    pub head_kernel: Tensor,
    pub head_bias: Tensor,
    /// `[1, 2, 7, 7]` and `[1]`; one dilated convolution shared by all stages.
    pub sab_kernel: Tensor,
    pub sab_bias: Tensor,
    /// Per-stage fully connected gates `([S, c_i], [c_i])` over the shared
    /// pooled descriptor of length S.
    pub cab_fcs: Vec<(Tensor, Tensor)>,
}

impl NetWeights {
    /// All-zero bundle (identity LayerNorms, configured thetas) with every
    /// shape dictated by `cfg`.
    pub fn zeros(cfg: &NetConfig) -> Self {
        let s = cfg.bridge_descriptor_len();
        NetWeights {
            enc_convs: cfg
                .enc_conv_dims()
                .iter()
                .map(|&(i, o)| ConvStageWeights::zeros(i, o))
                .collect(),
            enc_pvms: cfg
                .enc_pvm_dims()
                .iter()
                .map(|&(i, o)| PvmStageWeights::zeros(cfg, i, o))
                .collect(),
            dec_pvms: cfg
                .dec_pvm_dims()
                .iter()
                .map(|&(i, o)| PvmStageWeights::zeros(cfg, i, o))
                .collect(),
            dec_convs: cfg
                .dec_conv_dims()
                .iter()
                .map(|&(i, o)| ConvStageWeights::zeros(i, o))
                .collect(),
            head_kernel: Tensor::zeros(&[1, cfg.channels[0], 1, 1]),
            head_bias: Tensor::zeros(&[1]),
            sab_kernel: Tensor::zeros(&[1, 2, SAB_KERNEL, SAB_KERNEL]),
            sab_bias: Tensor::zeros(&[1]),
            cab_fcs: cfg.channels[..5]
                .iter()
                .map(|&c| (Tensor::zeros(&[s, c]), Tensor::zeros(&[c])))
                .collect(),
        }
    }

    /// Canonical (name, tensor) enumeration: definition order, which is also
    /// the order the seeded initializer consumes its stream in.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        for (i, c) in self.enc_convs.iter().enumerate() {
            out.push((format!("enc{}.conv.weight", i + 1), &c.kernel));
            out.push((format!("enc{}.conv.bias", i + 1), &c.bias));
        }
        for (i, p) in self.enc_pvms.iter().enumerate() {
            push_pvm_stage(&mut out, &format!("enc{}", i + 4), p);
        }
        for (i, p) in self.dec_pvms.iter().enumerate() {
            push_pvm_stage(&mut out, &format!("dec{}", i + 1), p);
        }
        for (i, c) in self.dec_convs.iter().enumerate() {
            out.push((format!("dec{}.conv.weight", i + 4), &c.kernel));
            out.push((format!("dec{}.conv.bias", i + 4), &c.bias));
        }
        out.push(("head.weight".to_string(), &self.head_kernel));
        out.push(("head.bias".to_string(), &self.head_bias));
        out.push(("sab.conv.weight".to_string(), &self.sab_kernel));
        out.push(("sab.conv.bias".to_string(), &self.sab_bias));
        for (i, (w, b)) in self.cab_fcs.iter().enumerate() {
            out.push((format!("cab.fc{}.weight", i + 1), w));
            out.push((format!("cab.fc{}.bias", i + 1), b));
        }
        out
    }

    /// Mutable twin of [`NetWeights::named_tensors`], same order.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (i, c) in self.enc_convs.iter_mut().enumerate() {
            out.push((format!("enc{}.conv.weight", i + 1), &mut c.kernel));
            out.push((format!("enc{}.conv.bias", i + 1), &mut c.bias));
        }
        for (i, p) in self.enc_pvms.iter_mut().enumerate() {
            push_pvm_stage_mut(&mut out, &format!("enc{}", i + 4), p);
        }
        for (i, p) in self.dec_pvms.iter_mut().enumerate() {
            push_pvm_stage_mut(&mut out, &format!("dec{}", i + 1), p);
        }
        for (i, c) in self.dec_convs.iter_mut().enumerate() {
            out.push((format!("dec{}.conv.weight", i + 4), &mut c.kernel));
            out.push((format!("dec{}.conv.bias", i + 4), &mut c.bias));
        }
        out.push(("head.weight".to_string(), &mut self.head_kernel));
        out.push(("head.bias".to_string(), &mut self.head_bias));
        out.push(("sab.conv.weight".to_string(), &mut self.sab_kernel));
        out.push(("sab.conv.bias".to_string(), &mut self.sab_bias));
        for (i, (w, b)) in self.cab_fcs.iter_mut().enumerate() {
            out.push((format!("cab.fc{}.weight", i + 1), w));
            out.push((format!("cab.fc{}.bias", i + 1), b));
        }
        out
    }

    /// Total element count of every tensor in the bundle.
    pub fn param_count(&self) -> u64 {
        self.named_tensors()
            .iter()
            .map(|(_, t)| t.len() as u64)
            .sum()
    }
}

fn push_pvm_stage<'a>(out: &mut Vec<(String, &'a Tensor)>, stage: &str, p: &'a PvmStageWeights) {
    out.push((format!("{stage}.ln_in.gamma"), &p.ln_in_gamma));
    out.push((format!("{stage}.ln_in.beta"), &p.ln_in_beta));
    match &p.vm {
        StageVm::Mamba(m) => {
            out.push((format!("{stage}.vm.in_proj"), &m.in_proj));
            out.push((format!("{stage}.vm.conv.weight"), m.conv_kernel.tensor()));
            out.push((format!("{stage}.vm.conv.bias"), &m.conv_bias));
            out.push((format!("{stage}.vm.x_proj"), &m.x_proj));
            out.push((format!("{stage}.vm.dt_proj.weight"), &m.dt_proj_weight));
            out.push((format!("{stage}.vm.dt_proj.bias"), &m.dt_proj_bias));
            out.push((format!("{stage}.vm.a_log"), &m.a_log));
            out.push((format!("{stage}.vm.d_skip"), &m.d_skip));
            out.push((format!("{stage}.vm.out_proj"), &m.out_proj));
        }
        StageVm::Vss(v) => {
            out.push((format!("{stage}.vm.in_proj"), &v.in_proj));
            out.push((format!("{stage}.vm.conv.weight"), v.conv_kernel.tensor()));
            out.push((format!("{stage}.vm.conv.bias"), &v.conv_bias));
            out.push((format!("{stage}.vm.x_proj"), &v.x_proj));
            out.push((format!("{stage}.vm.dt_proj.weight"), &v.dt_proj_weight));
            out.push((format!("{stage}.vm.dt_proj.bias"), &v.dt_proj_bias));
            out.push((format!("{stage}.vm.a_log"), &v.a_log));
            out.push((format!("{stage}.vm.ds"), &v.ds));
            out.push((format!("{stage}.vm.out_norm.gamma"), &v.out_norm_gamma));
            out.push((format!("{stage}.vm.out_norm.beta"), &v.out_norm_beta));
            out.push((format!("{stage}.vm.out_proj"), &v.out_proj));
        }
    }
    out.push((format!("{stage}.theta"), &p.thetas));
    out.push((format!("{stage}.ln_out.gamma"), &p.ln_out_gamma));
    out.push((format!("{stage}.ln_out.beta"), &p.ln_out_beta));
    out.push((format!("{stage}.proj"), &p.proj));
}

fn push_pvm_stage_mut<'a>(
    out: &mut Vec<(String, &'a mut Tensor)>,
    stage: &str,
    p: &'a mut PvmStageWeights,
) {
    out.push((format!("{stage}.ln_in.gamma"), &mut p.ln_in_gamma));
    out.push((format!("{stage}.ln_in.beta"), &mut p.ln_in_beta));
    match &mut p.vm {
        StageVm::Mamba(m) => {
            out.push((format!("{stage}.vm.in_proj"), &mut m.in_proj));
            out.push((
                format!("{stage}.vm.conv.weight"),
                m.conv_kernel.tensor_mut(),
            ));
            out.push((format!("{stage}.vm.conv.bias"), &mut m.conv_bias));
            out.push((format!("{stage}.vm.x_proj"), &mut m.x_proj));
            out.push((format!("{stage}.vm.dt_proj.weight"), &mut m.dt_proj_weight));
            out.push((format!("{stage}.vm.dt_proj.bias"), &mut m.dt_proj_bias));
            out.push((format!("{stage}.vm.a_log"), &mut m.a_log));
            out.push((format!("{stage}.vm.d_skip"), &mut m.d_skip));
            out.push((format!("{stage}.vm.out_proj"), &mut m.out_proj));
        }
        StageVm::Vss(v) => {
            out.push((format!("{stage}.vm.in_proj"), &mut v.in_proj));
            out.push((
                format!("{stage}.vm.conv.weight"),
                v.conv_kernel.tensor_mut(),
            ));
            out.push((format!("{stage}.vm.conv.bias"), &mut v.conv_bias));
            out.push((format!("{stage}.vm.x_proj"), &mut v.x_proj));
            out.push((format!("{stage}.vm.dt_proj.weight"), &mut v.dt_proj_weight));
            out.push((format!("{stage}.vm.dt_proj.bias"), &mut v.dt_proj_bias));
            out.push((format!("{stage}.vm.a_log"), &mut v.a_log));
            out.push((format!("{stage}.vm.ds"), &mut v.ds));
            out.push((format!("{stage}.vm.out_norm.gamma"), &mut v.out_norm_gamma));
            out.push((format!("{stage}.vm.out_norm.beta"), &mut v.out_norm_beta));
            out.push((format!("{stage}.vm.out_proj"), &mut v.out_proj));
        }
    }
    out.push((format!("{stage}.theta"), &mut p.thetas));
    out.push((format!("{stage}.ln_out.gamma"), &mut p.ln_out_gamma));
    out.push((format!("{stage}.ln_out.beta"), &mut p.ln_out_beta));
    out.push((format!("{stage}.proj"), &mut p.proj));
}

// ---------------------------------------------------------------------------
// Stage blocks
// ---------------------------------------------------------------------------

/// Convolution stage: 3×3 conv (pad 1), ReLU, 2×2 max pooling.
pub fn conv_block(x: &Tensor, w: &ConvStageWeights) -> Result<Tensor> {
    let y = tensor::conv2d(x, &w.kernel, &w.bias, 1)?;
    tensor::maxpool2(&tensor::relu(&y))
}

/// Decoder twin of [`conv_block`]: conv + ReLU without pooling.
fn conv_stage_no_pool(x: &Tensor, w: &ConvStageWeights) -> Result<Tensor> {
    Ok(tensor::relu(&tensor::conv2d(x, &w.kernel, &w.bias, 1)?))
}

/// Vision Mamba stage over a `[C,H,W]` feature map: LN, split into `p`
/// groups, the shared residual block per group, concat, LN, projection to
/// the stage's output width.
pub fn pvm_stage_forward(cfg: &NetConfig, w: &PvmStageWeights, x: &Tensor) -> Result<Tensor> {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let p = cfg.parallelism;
    if c % p != 0 {
        return Err(Error::Config(format!(
            "stage width {c} not divisible by parallelism {p}"
        )));
    }
    let branch = c / p;
    let tokens = grid_to_tokens(x)?;
    let normed = tensor::layernorm(&tokens, &w.ln_in_gamma, &w.ln_in_beta, LN_EPS)?;
    let groups = tensor::split_cols(&normed, p)?;
    let mut outs = Vec::with_capacity(p);
    for (i, group) in groups.iter().enumerate() {
        let theta = w.thetas.data()[i];
        let y = match &w.vm {
            StageVm::Mamba(m) => {
                let bcfg = MambaConfig::new(branch);
                let y = mamba_forward(&bcfg, m, group)?;
                tensor::add(&y, &group.scale(theta))?
            }
            StageVm::Vss(v) => {
                let bcfg = Ss2dConfig::new(branch);
                let grid = group.reshape(&[h, wd, branch])?;
                let y = vss_forward(&bcfg, v, &grid)?.reshape(&[h * wd, branch])?;
                tensor::add(&y, &group.scale(theta))?
            }
        };
        outs.push(y);
    }
    let refs: Vec<&Tensor> = outs.iter().collect();
    let merged = tensor::concat_cols(&refs)?;
    let normed = tensor::layernorm(&merged, &w.ln_out_gamma, &w.ln_out_beta, LN_EPS)?;
    let projected = tensor::matmul(&normed, &w.proj)?;
    tokens_to_grid(&projected, h, wd)
}

// ---------------------------------------------------------------------------
// Attention bridges
// ---------------------------------------------------------------------------

/// Spatial attention bridge. Per stage: channelwise max and mean maps are
/// stacked to `[2,H,W]`, pushed through the one shared dilated 7×7
/// convolution and a sigmoid; the gate multiplies the feature and the
/// original feature is added back.
pub fn sab(features: &[Tensor], kernel: &Tensor, bias: &Tensor) -> Result<Vec<Tensor>> {
    if features.is_empty() {
        return Err(Error::dim("sab", "needs at least one stage".to_string()));
    }
    features
        .iter()
        .map(|f| {
            let (c, h, w) = (f.shape()[0], f.shape()[1], f.shape()[2]);
            let plane = h * w;
            let mut pooled = vec![0.0f32; 2 * plane];
            for pos in 0..plane {
                let mut maxv = f32::NEG_INFINITY;
                let mut sum = 0.0f64;
                for ch in 0..c {
                    let v = f.data()[ch * plane + pos];
                    maxv = maxv.max(v);
                    sum += v as f64;
                }
                pooled[pos] = maxv;
                pooled[plane + pos] = (sum / c as f64) as f32;
            }
            let pooled = Tensor::new(&[2, h, w], pooled)?;
            let gate = tensor::sigmoid(&tensor::conv2d_dilated(
                &pooled,
                kernel,
                bias,
                SAB_PAD,
                SAB_DILATION,
            )?);
            let mut out = f.clone();
            for ch in 0..c {
                for pos in 0..plane {
                    let v = f.data()[ch * plane + pos];
                    out.data_mut()[ch * plane + pos] = v * gate.data()[pos] + v;
                }
            }
            Ok(out)
        })
        .collect()
}

/// Channel attention bridge. All stages are globally average pooled and
/// concatenated into one shared descriptor; each stage's fully connected
/// layer maps the descriptor to that stage's width, and the sigmoid gate
/// scales the channels with a residual add.
pub fn cab(features: &[Tensor], fcs: &[(Tensor, Tensor)]) -> Result<Vec<Tensor>> {
    if features.is_empty() || features.len() != fcs.len() {
        return Err(Error::dim(
            "cab",
            format!(
                "feature count {} does not match gate count {}",
                features.len(),
                fcs.len()
            ),
        ));
    }
    let mut descriptor = Vec::new();
    for f in features {
        descriptor.extend_from_slice(tensor::avgpool_global(f)?.data());
    }
    let z = Tensor::new(&[1, descriptor.len()], descriptor)?;
    features
        .iter()
        .zip(fcs)
        .map(|(f, (w, b))| {
            let gate = tensor::sigmoid(&tensor::linear(&z, w, Some(b))?);
            let (c, h, wd) = (f.shape()[0], f.shape()[1], f.shape()[2]);
            let plane = h * wd;
            let mut out = f.clone();
            for ch in 0..c {
                let g = gate.data()[ch];
                for pos in 0..plane {
                    let v = f.data()[ch * plane + pos];
                    out.data_mut()[ch * plane + pos] = v * g + v;
                }
            }
            Ok(out)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Full forward pass
// ---------------------------------------------------------------------------

/// Runs the network on one `[in_channels, H, W]` image and returns the
/// `[1, H, W]` probability map (all values in `[0,1]`).
pub fn net_forward(cfg: &NetConfig, w: &NetWeights, image: &Tensor) -> Result<Tensor> {
    cfg.validate()?;
    let (h, wd) = cfg.input_size;
    if image.shape() != [cfg.in_channels, h, wd] {
        return Err(Error::dim(
            "net_forward",
            format!(
                "image {:?} does not match configured {}x{}x{}",
                image.shape(),
                cfg.in_channels,
                h,
                wd
            ),
        ));
    }

    // encoder
    let mut x = image.clone();
    let mut skips: Vec<Tensor> = Vec::with_capacity(5);
    for conv in &w.enc_convs {
        x = conv_block(&x, conv)?;
        skips.push(x.clone());
    }
    for (i, pvm) in w.enc_pvms.iter().enumerate() {
        x = pvm_stage_forward(cfg, pvm, &x)?;
        if i < 2 {
            x = tensor::maxpool2(&x)?;
            skips.push(x.clone());
        }
    }

    // bridge over the five skip tensors
    if cfg.bridge_enabled {
        skips = sab(&skips, &w.sab_kernel, &w.sab_bias)?;
        skips = cab(&skips, &w.cab_fcs)?;
    }

    // decoder
    x = pvm_stage_forward(cfg, &w.dec_pvms[0], &x)?;
    x = tensor::add(&x, &skips[4])?;
    x = pvm_stage_forward(cfg, &w.dec_pvms[1], &x)?;
    x = tensor::add(&tensor::upsample2_nearest(&x)?, &skips[3])?;
    x = pvm_stage_forward(cfg, &w.dec_pvms[2], &x)?;
    x = tensor::add(&tensor::upsample2_nearest(&x)?, &skips[2])?;
    x = conv_stage_no_pool(&x, &w.dec_convs[0])?;
    x = tensor::add(&tensor::upsample2_nearest(&x)?, &skips[1])?;
    x = conv_stage_no_pool(&x, &w.dec_convs[1])?;
    x = tensor::add(&tensor::upsample2_nearest(&x)?, &skips[0])?;

    // head at half resolution, then the final upsample and sigmoid
    let logits = tensor::conv2d(&x, &w.head_kernel, &w.head_bias, 0)?;
    Ok(tensor::sigmoid(&tensor::upsample2_nearest(&logits)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_fill(shape: &[usize], seed: &mut u64) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                *seed = seed
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((*seed >> 33) as f64 / (1u64 << 31) as f64 - 0.5) as f32
            })
            .collect();
        Tensor::new(shape, data).unwrap()
    }

    fn toy_config() -> NetConfig {
        NetConfig {
            input_size: (32, 32),
            ..NetConfig::default()
        }
    }

    #[test]
    fn conv_block_zero_weights_zero_output() {
        let w = ConvStageWeights::zeros(3, 8);
        let mut seed = 3;
        let x = lcg_fill(&[3, 8, 8], &mut seed);
        let y = conv_block(&x, &w).unwrap();
        assert_eq!(y.shape(), &[8, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_block_delta_kernel_keeps_constant_input() {
        let mut w = ConvStageWeights::zeros(1, 1);
        // center tap of the 3x3 kernel
        w.kernel.data_mut()[4] = 1.0;
        let x = Tensor::full(&[1, 4, 4], 2.5);
        let y = conv_block(&x, &w).unwrap();
        assert_eq!(y, Tensor::full(&[1, 2, 2], 2.5));
    }

    #[test]
    fn conv_block_matches_composition_of_primitives() {
        let mut seed = 7;
        let w = ConvStageWeights {
            kernel: lcg_fill(&[4, 3, 3, 3], &mut seed),
            bias: lcg_fill(&[4], &mut seed),
        };
        let x = lcg_fill(&[3, 8, 8], &mut seed);
        let got = conv_block(&x, &w).unwrap();
        let want = tensor::maxpool2(&tensor::relu(
            &tensor::conv2d(&x, &w.kernel, &w.bias, 1).unwrap(),
        ))
        .unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn sab_constant_feature_gives_constant_gate() {
        let mut seed = 11;
        let kernel = lcg_fill(&[1, 2, 7, 7], &mut seed);
        let bias = lcg_fill(&[1], &mut seed);
        let f = Tensor::full(&[3, 8, 8], 0.7);
        let out = sab(&[f], &kernel, &bias).unwrap();
        // interior positions see the full kernel support and share one value;
        // border positions differ only through zero padding
        let v = out[0].at(&[0, 4, 4]);
        assert!((out[0].at(&[1, 4, 4]) - v).abs() <= 1e-7);
        assert!((out[0].at(&[2, 3, 3]) - v).abs() <= 1e-7);
    }

    #[test]
    fn sab_shared_weights_commute_with_stage_order() {
        let mut seed = 13;
        let kernel = lcg_fill(&[1, 2, 7, 7], &mut seed);
        let bias = lcg_fill(&[1], &mut seed);
        let a = lcg_fill(&[2, 8, 8], &mut seed);
        let b = lcg_fill(&[3, 4, 4], &mut seed);
        let fwd = sab(&[a.clone(), b.clone()], &kernel, &bias).unwrap();
        let rev = sab(&[b, a], &kernel, &bias).unwrap();
        assert_eq!(fwd[0], rev[1]);
        assert_eq!(fwd[1], rev[0]);
    }

    #[test]
    fn cab_zero_weights_scale_features_by_1_5() {
        let cfg = toy_config();
        let w = NetWeights::zeros(&cfg);
        let mut seed = 17;
        let features: Vec<Tensor> = cfg.channels[..5]
            .iter()
            .map(|&c| lcg_fill(&[c, 4, 4], &mut seed))
            .collect();
        let out = cab(&features, &w.cab_fcs).unwrap();
        for (o, f) in out.iter().zip(&features) {
            for (ov, fv) in o.data().iter().zip(f.data()) {
                assert!((ov - 1.5 * fv).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn cab_gates_stay_in_unit_interval() {
        let cfg = toy_config();
        let mut seed = 19;
        let mut w = NetWeights::zeros(&cfg);
        for (fw, fb) in &mut w.cab_fcs {
            *fw = lcg_fill(fw.shape(), &mut seed);
            *fb = lcg_fill(fb.shape(), &mut seed);
        }
        let features: Vec<Tensor> = cfg.channels[..5]
            .iter()
            .map(|&c| lcg_fill(&[c, 4, 4], &mut seed))
            .collect();
        let out = cab(&features, &w.cab_fcs).unwrap();
        // the residual form bounds each output by (1..2)·feature
        for (o, f) in out.iter().zip(&features) {
            for (ov, fv) in o.data().iter().zip(f.data()) {
                let ratio = ov / fv;
                assert!(ratio > 1.0 && ratio < 2.0, "ratio {ratio}");
            }
        }
    }

    #[test]
    fn net_forward_contract_at_toy_scale() {
        let cfg = toy_config();
        let w = NetWeights::zeros(&cfg);
        let mut seed = 23;
        let img = lcg_fill(&[3, 32, 32], &mut seed);
        let y = net_forward(&cfg, &w, &img).unwrap();
        assert_eq!(y.shape(), &[1, 32, 32]);
        assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn net_forward_rejects_mismatched_image() {
        let cfg = toy_config();
        let w = NetWeights::zeros(&cfg);
        let img = Tensor::zeros(&[3, 64, 64]);
        assert!(matches!(
            net_forward(&cfg, &w, &img),
            Err(Error::Dim { .. })
        ));
    }

    #[test]
    fn bridge_toggle_changes_values_not_shapes() {
        let mut cfg = toy_config();
        let mut seed = 29;
        let mut w = NetWeights::zeros(&cfg);
        for (_, t) in w.named_tensors_mut() {
            *t = lcg_fill(t.shape(), &mut seed).scale(0.2);
        }
        // thetas back to a sane residual factor
        for p in w.enc_pvms.iter_mut().chain(w.dec_pvms.iter_mut()) {
            p.thetas = Tensor::full(&[cfg.parallelism], 1.0);
        }
        let img = lcg_fill(&[3, 32, 32], &mut seed);
        cfg.bridge_enabled = true;
        let with = net_forward(&cfg, &w, &img).unwrap();
        cfg.bridge_enabled = false;
        let without = net_forward(&cfg, &w, &img).unwrap();
        assert_eq!(with.shape(), without.shape());
        assert_ne!(with, without);
    }

    #[test]
    fn config_validation_catches_bad_setups() {
        let not_increasing = NetConfig {
            channels: [8, 16, 24, 32, 48, 48],
            ..NetConfig::default()
        };
        assert!(not_increasing.validate().is_err());

        let bad_parallelism = NetConfig {
            parallelism: 3,
            ..NetConfig::default()
        };
        assert!(bad_parallelism.validate().is_err());

        let indivisible = NetConfig {
            channels: [8, 16, 24, 30, 48, 64], // 30 % 4 != 0
            ..NetConfig::default()
        };
        assert!(indivisible.validate().is_err());

        let bad_size = NetConfig {
            input_size: (100, 100),
            ..NetConfig::default()
        };
        assert!(bad_size.validate().is_err());
    }
}
