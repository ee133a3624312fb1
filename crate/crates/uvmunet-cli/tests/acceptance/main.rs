//! Acceptance suite. Each test covers one numbered criterion, pins its
//! tolerance in code, and prints a single pass line (failures panic with the
//! offending numbers). Run with `--nocapture` to see the lines.

mod oracles;

use std::process::Command;
use std::time::Instant;
use uvmunet::accounting::{
    mamba_params, model_flops, model_params, pvm_params, ss2d_params, FlopConvention,
};
use uvmunet::blocks::{
    mamba_forward, pvm_forward, vm_forward, vss_forward, ConvKind, MambaConfig, MambaWeights,
    PvmConfig, Ss2dConfig, VmKind,
};
use uvmunet::io::init::{init_mamba_weights, init_pvm_weights, init_vss_weights, SplitMix64};
use uvmunet::io::{init_weights, pnm};
use uvmunet::metrics::{acc, confusion, dsc, se, sp, ConfusionCounts};
use uvmunet::net::{net_forward, NetConfig, NetWeights};
use uvmunet::scan::{scan_parallel, scan_sequential};
use uvmunet::tensor::{concat_cols, split_cols, Tensor};

fn fill(rng: &mut SplitMix64, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.next_range(lo, hi) as f32).collect();
    Tensor::new(shape, data).unwrap()
}

/// Max absolute deviation normalized by the larger of the two magnitudes.
fn rel_err(got: &Tensor, want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let mag = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(
        got.data()
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs() as f64)),
    ) + 1e-12;
    got.data()
        .iter()
        .zip(want)
        .fold(0.0f64, |m, (g, w)| m.max((*g as f64 - w).abs()))
        / mag
}

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

#[test]
fn criterion_01_reference_integer_reproduction() {
    let t0 = Instant::now();
    assert_eq!(mamba_params(&MambaConfig::new(1024)).total, 23_435_264);
    assert_eq!(mamba_params(&MambaConfig::new(256)).total, 1_484_288);
    assert_eq!(ss2d_params(&Ss2dConfig::new(1024)).total, 45_504_512);
    assert_eq!(ss2d_params(&Ss2dConfig::new(256)).total, 2_921_984);
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 01 PASS: 23435264 / 1484288 / 45504512 / 2921984 exact in {elapsed:?}");
}

#[test]
fn criterion_02_reduction_percentages() {
    let m_large = mamba_params(&MambaConfig::new(1024)).total;
    let m_small = mamba_params(&MambaConfig::new(256)).total;
    let red_m = 1.0 - m_small as f64 / m_large as f64;
    assert!(
        (red_m - 0.937).abs() < 0.0005,
        "mamba reduction {:.4}% not within 93.70% +- 0.05pp",
        red_m * 100.0
    );
    let s_large = ss2d_params(&Ss2dConfig::new(1024)).total;
    let s_small = ss2d_params(&Ss2dConfig::new(256)).total;
    let red_s = 1.0 - s_small as f64 / s_large as f64;
    assert!(
        (red_s - 0.936).abs() < 0.0005,
        "ss2d reduction {:.4}% not within 93.60% +- 0.05pp",
        red_s * 100.0
    );
    let quad = pvm_params(1024, 4, VmKind::Mamba1d).unwrap();
    let single = pvm_params(1024, 1, VmKind::Mamba1d).unwrap();
    let ratio = quad.item("branches").unwrap() as f64 / single.item("branches").unwrap() as f64;
    assert!(
        (ratio - 0.2534).abs() <= 0.0005,
        "branch ratio {ratio:.5} not within 0.2534 +- 0.0005"
    );
    println!(
        "criterion 02 PASS: reductions {:.4}% / {:.4}%, branch ratio {ratio:.4} (rounds to 0.252)",
        red_m * 100.0,
        red_s * 100.0
    );
}

#[test]
fn criterion_03_whole_model_census() {
    let default_total = model_params(&NetConfig::default()).unwrap().total;
    assert!(
        (44_000..=54_000).contains(&default_total),
        "default census {default_total} outside [0.044M, 0.054M]"
    );

    let total_at = |channels: [usize; 6], p: usize| {
        model_params(&NetConfig {
            channels,
            parallelism: p,
            ..NetConfig::default()
        })
        .unwrap()
        .total as f64
    };
    let base = [8, 16, 24, 32, 48, 64];
    let r21 = total_at(base, 2) / total_at(base, 1) * 100.0;
    let r41 = total_at(base, 4) / total_at(base, 1) * 100.0;
    assert!(
        (r21 - 51.47).abs() <= 3.0,
        "p2/p1 ratio {r21:.2}% vs 51.47% +- 3pp"
    );
    assert!(
        (r41 - 36.03).abs() <= 3.0,
        "p4/p1 ratio {r41:.2}% vs 36.03% +- 3pp"
    );

    let within = |value: f64, published_m: f64| {
        (value - published_m * 1e6).abs() <= 0.10 * published_m * 1e6
    };
    let t6a1 = total_at([16, 32, 64, 128, 256, 512], 1);
    let t6a4 = total_at([16, 32, 64, 128, 256, 512], 4);
    let t6b1 = total_at([32, 64, 128, 256, 512, 1024], 1);
    let t6b4 = total_at([32, 64, 128, 256, 512, 1024], 4);
    assert!(within(t6a1, 3.479), "{t6a1} vs 3.479M +- 10%");
    assert!(within(t6a4, 0.848), "{t6a4} vs 0.848M +- 10%");
    assert!(within(t6b1, 13.607), "{t6b1} vs 13.607M +- 10%");
    assert!(within(t6b4, 3.305), "{t6b4} vs 3.305M +- 10%");

    // deviations stay attributable: items must cover the total exactly
    let report = model_params(&NetConfig::default()).unwrap();
    let sum: u64 = report.items.iter().map(|(_, c)| c).sum();
    assert_eq!(sum, report.total);

    println!(
        "criterion 03 PASS: default {default_total} (0.049M), ratios {r21:.2}%/{r41:.2}%, \
         table-6 {:.3}M/{:.3}M/{:.3}M/{:.3}M",
        t6a1 / 1e6,
        t6a4 / 1e6,
        t6b1 / 1e6,
        t6b4 / 1e6
    );
}

#[test]
fn criterion_04_gflops_estimate() {
    let report = model_flops(&NetConfig::default(), FlopConvention::Macs).unwrap();
    let gflops = report.total_gflops();
    assert_eq!(report.convention, FlopConvention::Macs);
    assert!(
        (0.045..=0.075).contains(&gflops),
        "{gflops:.4} GFLOPs outside 0.060 +- 25%"
    );
    println!(
        "criterion 04 PASS: {gflops:.4} GFLOPs under convention '{}' (published 0.060)",
        report.convention.name()
    );
}

#[test]
fn criterion_05_scan_oracle_equivalence() {
    let t0 = Instant::now();
    let lengths = [1usize, 2, 7, 64, 1024, 4096];
    let mut rng = SplitMix64::new(0xACCE55);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let l = lengths[case % lengths.len()];
        let d = 1 + (rng.next_u64() % 8) as usize;
        let a = fill(&mut rng, &[d, 16, l], 0.0, 1.0);
        let b = fill(&mut rng, &[d, 16, l], -1.0, 1.0);
        let want = scan_sequential(&a, &b).unwrap();
        let denom = want
            .data()
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs() as f64))
            + 1e-12;
        for chunk in [1usize, 7, 64, l] {
            let got = scan_parallel(&a, &b, chunk).unwrap();
            let dev = got
                .data()
                .iter()
                .zip(want.data())
                .fold(0.0f64, |m, (x, y)| m.max((*x as f64 - *y as f64).abs()))
                / denom;
            assert!(
                dev <= 1e-5,
                "case {case} L={l} chunk={chunk}: rel dev {dev}"
            );
            worst = worst.max(dev);
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "suite took {elapsed:?}");
    println!("criterion 05 PASS: 100 cases, worst rel dev {worst:.2e}, {elapsed:?}");
}

#[test]
fn criterion_06_block_oracles() {
    let mut worst = 0.0f64;
    // mamba, both convolution layouts, d_model 4 and 8, including L=1
    for d in [4usize, 8] {
        for kind in [ConvKind::Dense, ConvKind::Depthwise] {
            let cfg = MambaConfig::new(d);
            let mut rng = SplitMix64::new(0x600D + d as u64);
            let w = init_mamba_weights(&cfg, kind, &mut rng);
            for l in [1usize, 6] {
                let x = fill(&mut rng, &[l, d], -0.5, 0.5);
                let got = mamba_forward(&cfg, &w, &x).unwrap();
                let want = oracles::mamba(&cfg, &w, &to_f64(&x), l);
                let err = rel_err(&got, &want);
                assert!(err <= 1e-5, "mamba d={d} {kind:?} L={l}: rel err {err}");
                worst = worst.max(err);
            }
        }
    }
    // vss on grids up to 4x4, including the 1x1 pointwise degeneration
    for d in [4usize, 8] {
        for kind in [ConvKind::Dense, ConvKind::Depthwise] {
            let cfg = Ss2dConfig::new(d);
            let mut rng = SplitMix64::new(0x55D2 + d as u64);
            let w = init_vss_weights(&cfg, kind, &mut rng);
            for (h, wd) in [(1usize, 1usize), (2, 2), (3, 4)] {
                let x = fill(&mut rng, &[h, wd, d], -0.5, 0.5);
                let got = vss_forward(&cfg, &w, &x).unwrap();
                let want = oracles::vss(&cfg, &w, &to_f64(&x), h, wd);
                let err = rel_err(&got, &want);
                assert!(err <= 1e-5, "vss d={d} {kind:?} {h}x{wd}: rel err {err}");
                worst = worst.max(err);
            }
        }
    }
    // pvm with branch widths 4 and 8
    for (c, p) in [(16usize, 4usize), (32, 4), (8, 2)] {
        let cfg = PvmConfig::new(c, p, VmKind::Mamba1d);
        let mut rng = SplitMix64::new(0x9A7 + c as u64);
        let w = init_pvm_weights(&cfg, ConvKind::Dense, 1.0, &mut rng);
        let x = fill(&mut rng, &[2, 2, c], -0.5, 0.5);
        let got = pvm_forward(&cfg, &w, &x).unwrap();
        let want = oracles::pvm(&cfg, &w, &to_f64(&x), 2, 2);
        let err = rel_err(&got, &want);
        assert!(err <= 1e-5, "pvm C={c} p={p}: rel err {err}");
        worst = worst.max(err);
    }
    println!("criterion 06 PASS: block oracles agree, worst rel err {worst:.2e}");
}

#[test]
fn criterion_07_structural_invariants() {
    // concat-of-split identity
    let mut rng = SplitMix64::new(0x57AC);
    let x = fill(&mut rng, &[6, 8], -1.0, 1.0);
    for p in [1usize, 2, 4] {
        let parts = split_cols(&x, p).unwrap();
        let refs: Vec<&Tensor> = parts.iter().collect();
        assert_eq!(concat_cols(&refs).unwrap(), x, "p={p}");
    }

    // residual isolation: zeroed block leaves exactly theta*x
    let cfg = MambaConfig::new(8);
    let w = MambaWeights::zeros(&cfg, ConvKind::Dense);
    let xin = fill(&mut rng, &[5, 8], -1.0, 1.0);
    for theta in [0.25f32, 1.0] {
        let y = vm_forward(&cfg, &w, theta, &xin).unwrap();
        assert_eq!(y, xin.scale(theta), "theta={theta}");
    }

    // channel conservation through the parallel layer
    for p in [1usize, 2, 4] {
        let pcfg = PvmConfig::new(8, p, VmKind::Mamba1d);
        let pw = init_pvm_weights(&pcfg, ConvKind::Dense, 1.0, &mut rng);
        let grid = fill(&mut rng, &[2, 2, 8], -1.0, 1.0);
        let out = pvm_forward(&pcfg, &pw, &grid).unwrap();
        assert_eq!(out.shape(), grid.shape(), "p={p}");
    }

    // network output contract at 256x256 and 32x32
    for size in [256usize, 32] {
        let ncfg = NetConfig {
            input_size: (size, size),
            ..NetConfig::default()
        };
        let nw = init_weights(&ncfg, 4);
        let img = fill(&mut rng, &[3, size, size], 0.0, 1.0);
        let y = net_forward(&ncfg, &nw, &img).unwrap();
        assert_eq!(y.shape(), &[1, size, size]);
        assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
    println!(
        "criterion 07 PASS: split/concat, residual isolation, channel conservation, net contract"
    );
}

#[test]
fn criterion_08_census_identity() {
    let mut rng = SplitMix64::new(0xCE9505);
    for d in [8usize, 16, 64, 256] {
        let mcfg = MambaConfig::new(d);
        assert_eq!(
            mamba_params(&mcfg).total,
            init_mamba_weights(&mcfg, ConvKind::Dense, &mut rng).param_count(),
            "mamba d={d}"
        );
        let scfg = Ss2dConfig::new(d);
        assert_eq!(
            ss2d_params(&scfg).total,
            init_vss_weights(&scfg, ConvKind::Dense, &mut rng).param_count(),
            "ss2d d={d}"
        );
    }
    for p in [1usize, 2, 4] {
        let pcfg = PvmConfig::new(64, p, VmKind::Mamba1d);
        assert_eq!(
            pvm_params(64, p, VmKind::Mamba1d).unwrap().total,
            init_pvm_weights(&pcfg, ConvKind::Dense, 1.0, &mut rng).param_count(),
            "pvm p={p}"
        );
    }
    for channels in [
        [8usize, 16, 24, 32, 48, 64],
        [16, 32, 64, 128, 256, 512],
        [32, 64, 128, 256, 512, 1024],
    ] {
        for p in [1usize, 2, 4] {
            let cfg = NetConfig {
                channels,
                parallelism: p,
                ..NetConfig::default()
            };
            assert_eq!(
                model_params(&cfg).unwrap().total,
                NetWeights::zeros(&cfg).param_count(),
                "net {channels:?} p={p}"
            );
        }
    }
    println!("criterion 08 PASS: analytic census equals instantiated element counts exactly");
}

#[test]
fn criterion_09_metrics_against_brute_force() {
    let mut rng = SplitMix64::new(0x3E7B1C5);
    for case in 0..200 {
        let pred = fill(&mut rng, &[1, 16, 16], 0.0, 1.0);
        let truth =
            fill(&mut rng, &[1, 16, 16], 0.0, 1.0).map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
        let got = confusion(&pred, &truth, 0.5).unwrap();
        let mut want = ConfusionCounts::default();
        for i in 0..256 {
            let p = pred.data()[i] >= 0.5;
            let t = truth.data()[i] == 1.0;
            match (p, t) {
                (true, true) => want.tp += 1,
                (false, false) => want.tn += 1,
                (true, false) => want.fp += 1,
                (false, true) => want.fn_ += 1,
            }
        }
        assert_eq!(got, want, "case {case}");
        // formulas against direct ratios, exact
        assert_eq!(
            dsc(&got),
            2.0 * want.tp as f64 / (2 * want.tp + want.fp + want.fn_) as f64
        );
        assert_eq!(se(&got), want.tp as f64 / (want.tp + want.fn_) as f64);
        assert_eq!(sp(&got), want.tn as f64 / (want.tn + want.fp) as f64);
        assert_eq!(acc(&got), (want.tp + want.tn) as f64 / 256.0);
    }
    let fixture = ConfusionCounts {
        tp: 2,
        tn: 0,
        fp: 1,
        fn_: 1,
    };
    assert!((dsc(&fixture) - 0.6667).abs() <= 1e-4);
    println!("criterion 09 PASS: 200 brute-force cases exact, DSC fixture 0.6667");
}

#[test]
fn criterion_10_determinism() {
    let bin = env!("CARGO_BIN_EXE_uvmunet");

    // selftest: byte-identical stdout, all green, within the time budget
    let t0 = Instant::now();
    let run1 = Command::new(bin).arg("selftest").output().unwrap();
    let selftest_time = t0.elapsed();
    let run2 = Command::new(bin).arg("selftest").output().unwrap();
    assert!(run1.status.success(), "selftest failed: {run1:?}");
    assert_eq!(
        run1.stdout, run2.stdout,
        "selftest stdout differs between runs"
    );
    assert!(
        selftest_time.as_secs_f64() < 60.0,
        "selftest took {selftest_time:?}"
    );
    let text = String::from_utf8_lossy(&run1.stdout);
    assert!(!text.contains("FAIL"), "{text}");

    // infer: same seed and inputs give byte-identical maps
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"input_size": [32, 32], "seed": 5}"#).unwrap();
    let mut rng = SplitMix64::new(0x1A6E);
    let image = fill(&mut rng, &[3, 32, 32], 0.0, 1.0);
    let image_path = dir.path().join("input.ppm");
    pnm::write_ppm(&image_path, &image).unwrap();
    let outs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("map{i}.pgm"));
            let status = Command::new(bin)
                .args(["infer", "--config"])
                .arg(&config)
                .arg("--image")
                .arg(&image_path)
                .arg("--out")
                .arg(&out)
                .status()
                .unwrap();
            assert!(status.success());
            std::fs::read(&out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1], "infer outputs differ between runs");
    println!(
        "criterion 10 PASS: selftest ({selftest_time:?}) and infer byte-identical across runs"
    );
}
