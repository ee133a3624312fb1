//! Straight-line scalar reimplementations of the three block forward
//! passes, written directly from the pipeline definitions in f64 with plain
//! index arithmetic. They share no code with the library's tensor ops or
//! scan kernel; they read only the raw weight buffers.

use uvmunet::blocks::{
    BranchWeights, Conv1dKernel, Conv2dKernel, MambaConfig, MambaWeights, PvmConfig, PvmWeights,
    Ss2dConfig, VssWeights,
};

fn sigmoid64(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu64(x: f64) -> f64 {
    x * sigmoid64(x)
}

fn softplus64(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else {
        (1.0 + x.exp()).ln()
    }
}

/// The S6 path: projections to (dt_raw, B, C), softplus step, recurrence,
/// readout. `u` is the post-activation sequence in channel-major `[di][l]`
/// order; the output uses the same layout.
#[allow(clippy::too_many_arguments)]
fn s6(
    u: &[f64],
    di: usize,
    l: usize,
    r: usize,
    n: usize,
    x_proj: &[f32],
    dt_w: &[f32],
    dt_b: &[f32],
    a_log: &[f32],
    d_skip: &[f32],
) -> Vec<f64> {
    let m = r + 2 * n;
    let mut xdbl = vec![0.0f64; l * m];
    for t in 0..l {
        for mm in 0..m {
            let mut acc = 0.0;
            for i in 0..di {
                acc += u[i * l + t] * x_proj[i * m + mm] as f64;
            }
            xdbl[t * m + mm] = acc;
        }
    }
    let mut dt = vec![0.0f64; l * di];
    for t in 0..l {
        for i in 0..di {
            let mut acc = dt_b[i] as f64;
            for rr in 0..r {
                acc += xdbl[t * m + rr] * dt_w[rr * di + i] as f64;
            }
            dt[t * di + i] = softplus64(acc);
        }
    }
    let mut y = vec![0.0f64; di * l];
    for i in 0..di {
        for nn in 0..n {
            let a = -(a_log[i * n + nn] as f64).exp();
            let mut h = 0.0f64;
            for t in 0..l {
                let step = dt[t * di + i];
                let b = xdbl[t * m + r + nn];
                let c = xdbl[t * m + r + n + nn];
                h = (step * a).exp() * h + step * b * u[i * l + t];
                y[i * l + t] += c * h;
            }
        }
        for t in 0..l {
            y[i * l + t] += d_skip[i] as f64 * u[i * l + t];
        }
    }
    y
}

/// Mamba block over `x` given as `[l][d]` rows; returns `[l][d]` rows.
pub fn mamba(cfg: &MambaConfig, w: &MambaWeights, x: &[f64], l: usize) -> Vec<f64> {
    let d = cfg.d_model;
    let di = cfg.d_inner();
    let (r, n, k) = (cfg.dt_rank, cfg.d_state, cfg.d_conv);
    let inp = w.in_proj.data();
    let mut u = vec![0.0f64; di * l];
    let mut z = vec![0.0f64; l * di];
    for t in 0..l {
        for j in 0..di {
            let mut au = 0.0;
            let mut az = 0.0;
            for c in 0..d {
                let xv = x[t * d + c];
                au += xv * inp[c * 2 * di + j] as f64;
                az += xv * inp[c * 2 * di + di + j] as f64;
            }
            u[j * l + t] = au;
            z[t * di + j] = az;
        }
    }
    let bias = w.conv_bias.data();
    let mut uc = vec![0.0f64; di * l];
    match &w.conv_kernel {
        Conv1dKernel::Dense(kt) => {
            let kd = kt.data();
            for o in 0..di {
                for t in 0..l {
                    let mut acc = bias[o] as f64;
                    for c in 0..di {
                        for j in 0..k {
                            let p = t as isize + j as isize - (k as isize - 1);
                            if p >= 0 {
                                acc += kd[(o * di + c) * k + j] as f64 * u[c * l + p as usize];
                            }
                        }
                    }
                    uc[o * l + t] = acc;
                }
            }
        }
        Conv1dKernel::Depthwise(kt) => {
            let kd = kt.data();
            for o in 0..di {
                for t in 0..l {
                    let mut acc = bias[o] as f64;
                    for j in 0..k {
                        let p = t as isize + j as isize - (k as isize - 1);
                        if p >= 0 {
                            acc += kd[o * k + j] as f64 * u[o * l + p as usize];
                        }
                    }
                    uc[o * l + t] = acc;
                }
            }
        }
    }
    let us: Vec<f64> = uc.iter().map(|&v| silu64(v)).collect();
    let y = s6(
        &us,
        di,
        l,
        r,
        n,
        w.x_proj.data(),
        w.dt_proj_weight.data(),
        w.dt_proj_bias.data(),
        w.a_log.data(),
        w.d_skip.data(),
    );
    let op = w.out_proj.data();
    let mut out = vec![0.0f64; l * d];
    for t in 0..l {
        for c in 0..d {
            let mut acc = 0.0;
            for i in 0..di {
                acc += y[i * l + t] * silu64(z[t * di + i]) * op[i * d + c] as f64;
            }
            out[t * d + c] = acc;
        }
    }
    out
}

/// VSS block over `x` given as `[h][w][c]` values; returns the same layout.
pub fn vss(cfg: &Ss2dConfig, w: &VssWeights, x: &[f64], h: usize, wd: usize) -> Vec<f64> {
    let c = cfg.d_model;
    let di = cfg.d_inner();
    let (r, n) = (cfg.dt_rank, cfg.d_state);
    let kk = cfg.d_conv;
    let pad = (kk - 1) as isize / 2;
    let l = h * wd;
    let inp = w.in_proj.data();
    let mut u = vec![0.0f64; di * l];
    let mut z = vec![0.0f64; l * di];
    for t in 0..l {
        for j in 0..di {
            let mut au = 0.0;
            let mut az = 0.0;
            for ci in 0..c {
                let xv = x[t * c + ci];
                au += xv * inp[ci * 2 * di + j] as f64;
                az += xv * inp[ci * 2 * di + di + j] as f64;
            }
            u[j * l + t] = au;
            z[t * di + j] = az;
        }
    }
    let bias = w.conv_bias.data();
    let mut g = vec![0.0f64; di * l];
    match &w.conv_kernel {
        Conv2dKernel::Dense(kt) => {
            let kd = kt.data();
            for o in 0..di {
                for yy in 0..h {
                    for xx in 0..wd {
                        let mut acc = bias[o] as f64;
                        for ci in 0..di {
                            for ky in 0..kk {
                                for kx in 0..kk {
                                    let iy = yy as isize + ky as isize - pad;
                                    let ix = xx as isize + kx as isize - pad;
                                    if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < wd
                                    {
                                        acc += kd[((o * di + ci) * kk + ky) * kk + kx] as f64
                                            * u[ci * l + iy as usize * wd + ix as usize];
                                    }
                                }
                            }
                        }
                        g[o * l + yy * wd + xx] = acc;
                    }
                }
            }
        }
        Conv2dKernel::Depthwise(kt) => {
            let kd = kt.data();
            for o in 0..di {
                for yy in 0..h {
                    for xx in 0..wd {
                        let mut acc = bias[o] as f64;
                        for ky in 0..kk {
                            for kx in 0..kk {
                                let iy = yy as isize + ky as isize - pad;
                                let ix = xx as isize + kx as isize - pad;
                                if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < wd {
                                    acc += kd[(o * kk + ky) * kk + kx] as f64
                                        * u[o * l + iy as usize * wd + ix as usize];
                                }
                            }
                        }
                        g[o * l + yy * wd + xx] = acc;
                    }
                }
            }
        }
    }
    let g: Vec<f64> = g.iter().map(|&v| silu64(v)).collect();

    // four directional sequences: row-major, its reverse, column-major, its
    // reverse; each runs its own S6 slice and scatters back to grid order
    let m = r + 2 * n;
    let mut merged = vec![0.0f64; di * l];
    for dir in 0..4usize {
        let grid_pos = |t: usize| -> usize {
            match dir {
                0 => t,
                1 => l - 1 - t,
                2 => (t % h) * wd + t / h,
                _ => {
                    let s = l - 1 - t;
                    (s % h) * wd + s / h
                }
            }
        };
        let mut seq = vec![0.0f64; di * l];
        for i in 0..di {
            for t in 0..l {
                seq[i * l + t] = g[i * l + grid_pos(t)];
            }
        }
        let y = s6(
            &seq,
            di,
            l,
            r,
            n,
            &w.x_proj.data()[dir * di * m..(dir + 1) * di * m],
            &w.dt_proj_weight.data()[dir * r * di..(dir + 1) * r * di],
            &w.dt_proj_bias.data()[dir * di..(dir + 1) * di],
            &w.a_log.data()[dir * di * n..(dir + 1) * di * n],
            &w.ds.data()[dir * di..(dir + 1) * di],
        );
        for i in 0..di {
            for t in 0..l {
                merged[i * l + grid_pos(t)] += y[i * l + t];
            }
        }
    }

    // layer normalization over the di axis per token, then gate and project
    let gamma = w.out_norm_gamma.data();
    let beta = w.out_norm_beta.data();
    let op = w.out_proj.data();
    let mut out = vec![0.0f64; l * c];
    for t in 0..l {
        let mut mean = 0.0;
        for i in 0..di {
            mean += merged[i * l + t];
        }
        mean /= di as f64;
        let mut var = 0.0;
        for i in 0..di {
            var += (merged[i * l + t] - mean).powi(2);
        }
        var /= di as f64;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for ci in 0..c {
            let mut acc = 0.0;
            for i in 0..di {
                let normed = (merged[i * l + t] - mean) * inv * gamma[i] as f64 + beta[i] as f64;
                acc += normed * silu64(z[t * di + i]) * op[i * c + ci] as f64;
            }
            out[t * c + ci] = acc;
        }
    }
    out
}

fn layernorm_rows(x: &[f64], rows: usize, c: usize, gamma: &[f32], beta: &[f32]) -> Vec<f64> {
    let mut out = vec![0.0f64; rows * c];
    for t in 0..rows {
        let row = &x[t * c..(t + 1) * c];
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for j in 0..c {
            out[t * c + j] = (row[j] - mean) * inv * gamma[j] as f64 + beta[j] as f64;
        }
    }
    out
}

/// Parallel layer over `x` given as `[h][w][c]` values (1-D branch kind);
/// returns the same layout.
pub fn pvm(cfg: &PvmConfig, w: &PvmWeights, x: &[f64], h: usize, wd: usize) -> Vec<f64> {
    let c = cfg.channels;
    let p = cfg.parallelism;
    let bc = c / p;
    let l = h * wd;
    let normed = layernorm_rows(x, l, c, w.ln_in_gamma.data(), w.ln_in_beta.data());
    let units = match &w.branches {
        BranchWeights::Mamba(units) => units,
        BranchWeights::Vss(_) => panic!("oracle covers the 1-D branch kind"),
    };
    let bcfg = MambaConfig::new(bc);
    let mut merged = vec![0.0f64; l * c];
    for (b, unit) in units.iter().enumerate() {
        let mut group = vec![0.0f64; l * bc];
        for t in 0..l {
            for j in 0..bc {
                group[t * bc + j] = normed[t * c + b * bc + j];
            }
        }
        let y = mamba(&bcfg, unit, &group, l);
        let theta = w.thetas[b] as f64;
        for t in 0..l {
            for j in 0..bc {
                merged[t * c + b * bc + j] = y[t * bc + j] + theta * group[t * bc + j];
            }
        }
    }
    let normed = layernorm_rows(&merged, l, c, w.ln_out_gamma.data(), w.ln_out_beta.data());
    let proj = w.proj.data();
    let mut out = vec![0.0f64; l * c];
    for t in 0..l {
        for j in 0..c {
            let mut acc = 0.0;
            for i in 0..c {
                acc += normed[t * c + i] * proj[i * c + j] as f64;
            }
            out[t * c + j] = acc;
        }
    }
    out
}
