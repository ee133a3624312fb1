//! Exact integer parameter census and closed-form FLOP estimation.
//!
//! Two families of reports live here and they are not interchangeable:
//!
//! * [`mamba_params`], [`ss2d_params`] and [`pvm_params`] reproduce the
//!   block-level parameter analysis term by term. The analysis treats the
//!   internal convolution as a dense cross-channel layer
//!   (`d_conv·d_inner² + d_inner`), and the parallel layer as `p`
//!   independent branch bundles. These reports match the element counts of
//!   the standalone block bundles with the dense convolution layout.
//!
//! * [`model_params`] counts the assembled network exactly as
//!   [`crate::net::NetWeights`] instantiates it: depthwise convolutions
//!   inside the Vision Mamba stages and one shared block per stage. Every
//!   item is named after the corresponding weight tensor so any deviation
//!   from a published total is attributable line by line.
//!
//! All counts are exact integers; no tolerance anywhere.

use crate::blocks::{default_dt_rank, MambaConfig, Ss2dConfig, VmKind};
use crate::error::{Error, Result};
use crate::net::{NetConfig, SAB_KERNEL};
use serde::Serialize;

/// Itemized parameter census with an exact integer total.
#[derive(Clone, Debug, Serialize)]
pub struct ParamReport {
    /// What was counted (block name or model description).
    pub label: String,
    /// (term name, element count) in presentation order.
    pub items: Vec<(String, u64)>,
    pub total: u64,
    /// Optional comparison base; enables the reduction figures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<u64>,
}

impl ParamReport {
    fn new(label: impl Into<String>, items: Vec<(String, u64)>) -> Self {
        let total = items.iter().map(|(_, c)| *c).sum();
        ParamReport {
            label: label.into(),
            items,
            total,
            baseline: None,
        }
    }

    pub fn with_baseline(mut self, baseline: u64) -> Self {
        self.baseline = Some(baseline);
        self
    }

    /// `1 - total/baseline`, when a baseline is set.
    pub fn reduction_fraction(&self) -> Option<f64> {
        self.baseline.map(|b| 1.0 - self.total as f64 / b as f64)
    }

    pub fn item(&self, name: &str) -> Option<u64> {
        self.items.iter().find(|(n, _)| n == name).map(|(_, c)| *c)
    }

    /// Aligned two-column text rendering.
    pub fn to_text(&self) -> String {
        let width = self
            .items
            .iter()
            .map(|(n, _)| n.len())
            .chain(std::iter::once("total".len()))
            .max()
            .unwrap_or(0);
        let mut s = format!("{}\n", self.label);
        for (name, count) in &self.items {
            s.push_str(&format!("  {name:<width$}  {count:>12}\n"));
        }
        s.push_str(&format!("  {:<width$}  {:>12}\n", "total", self.total));
        if let Some(b) = self.baseline {
            let f = self.reduction_fraction().unwrap_or(0.0);
            s.push_str(&format!("  {:<width$}  {b:>12}\n", "baseline"));
            s.push_str(&format!(
                "  {:<width$}  {:>11.4}% (rounded {:.1}%)\n",
                "reduction",
                f * 100.0,
                (f * 1000.0).round() / 10.0
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("term,count\n");
        for (name, count) in &self.items {
            s.push_str(&format!("{name},{count}\n"));
        }
        s.push_str(&format!("total,{}\n", self.total));
        s
    }
}

// ---------------------------------------------------------------------------
// Block-level analysis
// ---------------------------------------------------------------------------

/// Term-by-term census of one Mamba block under the analysis convention
/// (dense internal convolution).
pub fn mamba_params(cfg: &MambaConfig) -> ParamReport {
    let d = cfg.d_model as u64;
    let di = cfg.d_inner() as u64;
    let n = cfg.d_state as u64;
    let r = cfg.dt_rank as u64;
    let k = cfg.d_conv as u64;
    ParamReport::new(
        format!("mamba block (d_model={})", cfg.d_model),
        vec![
            ("in_proj".to_string(), d * di * 2),
            ("out_proj".to_string(), di * d),
            ("x_proj".to_string(), di * (r + 2 * n)),
            ("dt_proj".to_string(), r * di + di),
            ("conv1d".to_string(), k * di * di + di),
            ("A_logs".to_string(), di * n),
            ("D".to_string(), di),
        ],
    )
}

/// Term-by-term census of one VSS (SS2D) block under the analysis
/// convention (dense internal convolution, K-fold projection stacks).
pub fn ss2d_params(cfg: &Ss2dConfig) -> ParamReport {
    let d = cfg.d_model as u64;
    let di = cfg.d_inner() as u64;
    let n = cfg.d_state as u64;
    let r = cfg.dt_rank as u64;
    let k = cfg.d_conv as u64;
    let dirs = cfg.k as u64;
    ParamReport::new(
        format!("ss2d block (d_model={})", cfg.d_model),
        vec![
            ("in_proj".to_string(), d * di * 2),
            ("out_proj".to_string(), di * d),
            ("out_norm".to_string(), 2 * di),
            ("x_proj x4".to_string(), dirs * di * (r + 2 * n)),
            ("dt_proj x4".to_string(), dirs * (r * di + di)),
            ("conv2d".to_string(), k * k * di * di + di),
            ("A_logs".to_string(), dirs * di * n),
            ("Ds".to_string(), dirs * di),
        ],
    )
}

/// Census of the parallel layer: `p` independent branch bundles over `C/p`
/// channels plus the outer LayerNorms, per-branch adjustment factors, and
/// the C×C projection.
pub fn pvm_params(channels: usize, parallelism: usize, kind: VmKind) -> Result<ParamReport> {
    if parallelism == 0 || !channels.is_multiple_of(parallelism) {
        return Err(Error::Config(format!(
            "channels {channels} not divisible into {parallelism} branches"
        )));
    }
    let branch = channels / parallelism;
    let block_total = match kind {
        VmKind::Mamba1d => mamba_params(&MambaConfig::new(branch)).total,
        VmKind::Ss2d => ss2d_params(&Ss2dConfig::new(branch)).total,
    };
    let c = channels as u64;
    let p = parallelism as u64;
    Ok(ParamReport::new(
        format!("pvm layer (C={channels}, p={parallelism})"),
        vec![
            ("branches".to_string(), p * block_total),
            ("theta".to_string(), p),
            ("layernorm_in".to_string(), 2 * c),
            ("layernorm_out".to_string(), 2 * c),
            ("projection".to_string(), c * c),
        ],
    ))
}

// ---------------------------------------------------------------------------
// Whole-model census
// ---------------------------------------------------------------------------

fn conv_stage_items(items: &mut Vec<(String, u64)>, stage: &str, c_in: usize, c_out: usize) {
    let (ci, co) = (c_in as u64, c_out as u64);
    items.push((format!("{stage}.conv.weight"), co * ci * 9));
    items.push((format!("{stage}.conv.bias"), co));
}

/// Items of one network Vision Mamba stage: shared depthwise-conv block over
/// `c_in / p` channels, per-branch thetas, two LayerNorms, projection to
/// `c_out`.
fn pvm_stage_items(
    items: &mut Vec<(String, u64)>,
    stage: &str,
    c_in: usize,
    c_out: usize,
    p: usize,
    kind: VmKind,
) {
    let c = c_in as u64;
    items.push((format!("{stage}.ln_in.gamma"), c));
    items.push((format!("{stage}.ln_in.beta"), c));
    let d = (c_in / p) as u64;
    let di = 2 * d;
    let n = 16u64;
    let r = default_dt_rank(c_in / p) as u64;
    match kind {
        VmKind::Mamba1d => {
            let k = 4u64;
            items.push((format!("{stage}.vm.in_proj"), d * di * 2));
            items.push((format!("{stage}.vm.conv.weight"), di * k));
            items.push((format!("{stage}.vm.conv.bias"), di));
            items.push((format!("{stage}.vm.x_proj"), di * (r + 2 * n)));
            items.push((format!("{stage}.vm.dt_proj.weight"), r * di));
            items.push((format!("{stage}.vm.dt_proj.bias"), di));
            items.push((format!("{stage}.vm.a_log"), di * n));
            items.push((format!("{stage}.vm.d_skip"), di));
            items.push((format!("{stage}.vm.out_proj"), di * d));
        }
        VmKind::Ss2d => {
            let k = 3u64;
            let dirs = 4u64;
            items.push((format!("{stage}.vm.in_proj"), d * di * 2));
            items.push((format!("{stage}.vm.conv.weight"), di * k * k));
            items.push((format!("{stage}.vm.conv.bias"), di));
            items.push((format!("{stage}.vm.x_proj"), dirs * di * (r + 2 * n)));
            items.push((format!("{stage}.vm.dt_proj.weight"), dirs * r * di));
            items.push((format!("{stage}.vm.dt_proj.bias"), dirs * di));
            items.push((format!("{stage}.vm.a_log"), dirs * di * n));
            items.push((format!("{stage}.vm.ds"), dirs * di));
            items.push((format!("{stage}.vm.out_norm.gamma"), di));
            items.push((format!("{stage}.vm.out_norm.beta"), di));
            items.push((format!("{stage}.vm.out_proj"), di * d));
        }
    }
    items.push((format!("{stage}.theta"), p as u64));
    items.push((format!("{stage}.ln_out.gamma"), c));
    items.push((format!("{stage}.ln_out.beta"), c));
    items.push((format!("{stage}.proj"), c * c_out as u64));
}

/// Whole-model parameter census, itemized per weight tensor.
pub fn model_params(cfg: &NetConfig) -> Result<ParamReport> {
    cfg.validate()?;
    let mut items = Vec::new();
    for (i, &(ci, co)) in cfg.enc_conv_dims().iter().enumerate() {
        conv_stage_items(&mut items, &format!("enc{}", i + 1), ci, co);
    }
    for (i, &(ci, co)) in cfg.enc_pvm_dims().iter().enumerate() {
        pvm_stage_items(
            &mut items,
            &format!("enc{}", i + 4),
            ci,
            co,
            cfg.parallelism,
            cfg.inner_kind,
        );
    }
    for (i, &(ci, co)) in cfg.dec_pvm_dims().iter().enumerate() {
        pvm_stage_items(
            &mut items,
            &format!("dec{}", i + 1),
            ci,
            co,
            cfg.parallelism,
            cfg.inner_kind,
        );
    }
    for (i, &(ci, co)) in cfg.dec_conv_dims().iter().enumerate() {
        let (ci, co) = (ci as u64, co as u64);
        items.push((format!("dec{}.conv.weight", i + 4), co * ci * 9));
        items.push((format!("dec{}.conv.bias", i + 4), co));
    }
    items.push(("head.weight".to_string(), cfg.channels[0] as u64));
    items.push(("head.bias".to_string(), 1));
    items.push((
        "sab.conv.weight".to_string(),
        2 * (SAB_KERNEL * SAB_KERNEL) as u64,
    ));
    items.push(("sab.conv.bias".to_string(), 1));
    let s = cfg.bridge_descriptor_len() as u64;
    for (i, &c) in cfg.channels[..5].iter().enumerate() {
        items.push((format!("cab.fc{}.weight", i + 1), s * c as u64));
        items.push((format!("cab.fc{}.bias", i + 1), c as u64));
    }
    Ok(ParamReport::new(
        format!(
            "model (channels {:?}, p={}, {})",
            cfg.channels,
            cfg.parallelism,
            match cfg.inner_kind {
                VmKind::Mamba1d => "mamba-1d",
                VmKind::Ss2d => "ss2d",
            }
        ),
        items,
    ))
}

// ---------------------------------------------------------------------------
// FLOP estimation
// ---------------------------------------------------------------------------

/// How multiply–accumulates convert to FLOPs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum FlopConvention {
    /// One MAC counts as one FLOP.
    #[serde(rename = "macs")]
    Macs,
    /// One MAC counts as two FLOPs (multiply + add).
    #[serde(rename = "2macs")]
    #[default]
    MacsTimes2,
}

impl FlopConvention {
    pub fn factor(self) -> u64 {
        match self {
            FlopConvention::Macs => 1,
            FlopConvention::MacsTimes2 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FlopConvention::Macs => "macs",
            FlopConvention::MacsTimes2 => "2macs",
        }
    }
}

/// Itemized FLOP estimate. Items are multiply–accumulate counts of the
/// weight-bearing operations (convolutions and linear projections), the
/// convention common profilers apply; the scan recurrence, activations,
/// normalizations and pooling carry no weights and are excluded.
#[derive(Clone, Debug, Serialize)]
pub struct FlopReport {
    pub label: String,
    /// (term, MAC count).
    pub items: Vec<(String, u64)>,
    pub total_macs: u64,
    pub convention: FlopConvention,
}

impl FlopReport {
    pub fn total_flops(&self) -> u64 {
        self.total_macs * self.convention.factor()
    }

    pub fn total_gflops(&self) -> f64 {
        self.total_flops() as f64 / 1e9
    }

    pub fn to_text(&self) -> String {
        let width = self
            .items
            .iter()
            .map(|(n, _)| n.len())
            .chain(std::iter::once("total".len()))
            .max()
            .unwrap_or(0);
        let mut s = format!("{} (convention: {})\n", self.label, self.convention.name());
        for (name, macs) in &self.items {
            s.push_str(&format!("  {name:<width$}  {macs:>12} MACs\n"));
        }
        s.push_str(&format!(
            "  {:<width$}  {:>12} MACs = {:.4} GFLOPs\n",
            "total",
            self.total_macs,
            self.total_gflops()
        ));
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("term,macs\n");
        for (name, macs) in &self.items {
            s.push_str(&format!("{name},{macs}\n"));
        }
        s.push_str(&format!("total,{}\n", self.total_macs));
        s
    }
}

/// Per-token MACs of the shared branch block of a Vision Mamba stage.
fn vm_macs_per_token(c_in: usize, p: usize, kind: VmKind) -> u64 {
    let d = (c_in / p) as u64;
    let di = 2 * d;
    let n = 16u64;
    let r = default_dt_rank(c_in / p) as u64;
    match kind {
        VmKind::Mamba1d => {
            let k = 4u64;
            d * di * 2 + di * k + di * (r + 2 * n) + r * di + di * d
        }
        VmKind::Ss2d => {
            let k = 3u64;
            let dirs = 4u64;
            // each token is visited once per scan direction by the
            // projections, once in total by the input conv and projections
            d * di * 2 + di * k * k + dirs * (di * (r + 2 * n) + r * di) + di * d
        }
    }
}

/// Closed-form FLOP estimate of one forward pass at `cfg.input_size`.
pub fn model_flops(cfg: &NetConfig, convention: FlopConvention) -> Result<FlopReport> {
    cfg.validate()?;
    let (h, w) = cfg.input_size;
    let mut items = Vec::new();

    // encoder convs run at the resolution they receive (pooling follows)
    let enc_res = [(h, w), (h / 2, w / 2), (h / 4, w / 4)];
    for (i, (&(ci, co), &(rh, rw))) in cfg.enc_conv_dims().iter().zip(&enc_res).enumerate() {
        items.push((format!("enc{}.conv", i + 1), (co * rh * rw * ci * 9) as u64));
    }
    // vision mamba stages
    let pvm_res = [(h / 8, w / 8), (h / 16, w / 16), (h / 32, w / 32)];
    for (i, (&(ci, co), &(rh, rw))) in cfg.enc_pvm_dims().iter().zip(&pvm_res).enumerate() {
        let l = (rh * rw) as u64;
        let per_token = vm_macs_per_token(ci, cfg.parallelism, cfg.inner_kind);
        items.push((
            format!("enc{}.vm", i + 4),
            cfg.parallelism as u64 * l * per_token,
        ));
        items.push((format!("enc{}.proj", i + 4), l * (ci * co) as u64));
    }
    let dec_pvm_res = [(h / 32, w / 32), (h / 32, w / 32), (h / 16, w / 16)];
    for (i, (&(ci, co), &(rh, rw))) in cfg.dec_pvm_dims().iter().zip(&dec_pvm_res).enumerate() {
        let l = (rh * rw) as u64;
        let per_token = vm_macs_per_token(ci, cfg.parallelism, cfg.inner_kind);
        items.push((
            format!("dec{}.vm", i + 1),
            cfg.parallelism as u64 * l * per_token,
        ));
        items.push((format!("dec{}.proj", i + 1), l * (ci * co) as u64));
    }
    let dec_conv_res = [(h / 8, w / 8), (h / 4, w / 4)];
    for (i, (&(ci, co), &(rh, rw))) in cfg.dec_conv_dims().iter().zip(&dec_conv_res).enumerate() {
        items.push((format!("dec{}.conv", i + 4), (co * rh * rw * ci * 9) as u64));
    }
    items.push((
        "head.conv".to_string(),
        (cfg.channels[0] * (h / 2) * (w / 2)) as u64,
    ));
    if cfg.bridge_enabled {
        let skip_res = [
            (h / 2, w / 2),
            (h / 4, w / 4),
            (h / 8, w / 8),
            (h / 16, w / 16),
            (h / 32, w / 32),
        ];
        let sab: u64 = skip_res
            .iter()
            .map(|&(rh, rw)| (2 * SAB_KERNEL * SAB_KERNEL * rh * rw) as u64)
            .sum();
        items.push(("sab.conv".to_string(), sab));
        let s = cfg.bridge_descriptor_len() as u64;
        let cab: u64 = cfg.channels[..5].iter().map(|&c| s * c as u64).sum();
        items.push(("cab.fc".to_string(), cab));
    }

    let total_macs = items.iter().map(|(_, m)| *m).sum();
    Ok(FlopReport {
        label: format!(
            "model (channels {:?}, p={}, input {}x{})",
            cfg.channels, cfg.parallelism, h, w
        ),
        items,
        total_macs,
        convention,
    })
}
