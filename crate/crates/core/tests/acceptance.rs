//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use airway::metrics::{dsc, evaluate_case, precision};
use airway::morphology::{connected_components, keep_largest_component, skeletonize};
use airway::nnmath::{
    all_losses, branch_loss, centerline_loss, dropout_backward, dropout_forward, dropout_mask, total_loss, BranchMode,
    CenterlineVariant, LossWeights, Smooth,
};
use airway::preprocess::{extract_patches, plan_patches, reassemble, DEFAULT_PATCH};
use airway::synthgen::{generate_tree, perturb, point_segment_distance, Perturbation, TreeSpec};
use airway::tree::{build_skeleton_graph, decompose_branches, label_branches, RootPolicy};
use airway::uncertainty::{aggregate, PredictionStack};
use airway::volume::{load_volume, save_volume, threshold, Connectivity, Role, Shape, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_shape(rng: &mut ChaCha8Rng, max: usize) -> Shape {
    [rng.random_range(1..=max), rng.random_range(1..=max), rng.random_range(1..=max)]
}

fn random_labels(rng: &mut ChaCha8Rng) -> Volume {
    let shape = random_shape(rng, 8);
    let n: usize = shape.iter().product();
    let k = rng.random_range(1..=5u32);
    let mut data: Vec<f32> = (0..n).map(|_| rng.random_range(0..=k) as f32).collect();
    if data.iter().all(|v| *v == 0.0) {
        data[0] = 1.0;
    }
    Volume::new(shape, [1.0; 3], data, Role::Label).unwrap()
}

fn random_prob(rng: &mut ChaCha8Rng, shape: Shape) -> Volume {
    let n: usize = shape.iter().product();
    Volume::new(shape, [1.0; 3], (0..n).map(|_| rng.random::<f32>()).collect(), Role::Probability).unwrap()
}

// ---------- oracles ----------

fn branch_oracle(pred: &Volume, labels: &Volume, s: f64, mode: BranchMode) -> f64 {
    let max = labels.data().iter().fold(0.0f32, |m, v| m.max(*v)) as u32;
    let mut ratios = Vec::new();
    let (mut all_hit, mut all_size) = (0.0f64, 0.0f64);
    for b in 1..=max {
        let (mut hit, mut size) = (0.0f64, 0.0f64);
        for i in 0..labels.len() {
            let g = if labels.data()[i] as u32 == b { 1.0 } else { 0.0 };
            hit += pred.data()[i] as f64 * g;
            size += g;
        }
        if size > 0.0 {
            ratios.push((hit + s) / (size + s));
            all_hit += hit;
            all_size += size;
        }
    }
    match mode {
        BranchMode::PerBranchMean => 1.0 - ratios.iter().sum::<f64>() / ratios.len() as f64,
        BranchMode::Global => 1.0 - (all_hit + s) / (all_size + s),
    }
}

fn centerline_oracle(pred: &Volume, labels: &Volume, t: f32, s: f64, variant: CenterlineVariant) -> f64 {
    let gt_mask = Volume::binary_from_fn(labels.shape(), [1.0; 3], |i| labels.get(i) != 0.0);
    let e_gt = skeletonize(&gt_mask).unwrap();
    let e_pred = match variant {
        CenterlineVariant::SkeletonProduct => {
            let bin = Volume::binary_from_fn(pred.shape(), [1.0; 3], |i| pred.get(i) >= t);
            skeletonize(&bin).unwrap().data().iter().map(|v| *v as f64).collect::<Vec<_>>()
        }
        CenterlineVariant::CenterlineRecall => pred.data().iter().map(|v| *v as f64).collect(),
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..pred.len() {
        let g = e_gt.data()[i] as f64;
        num += e_pred[i] * g;
        den += g;
    }
    1.0 - (num + s) / (den + s)
}

/// Recursive-stack flood fill with offsets enumerated from their L1 norm.
fn flood_fill_oracle(mask: &Volume, max_l1: i32) -> Vec<u32> {
    let [nz, ny, nx] = mask.shape();
    let mut offs = Vec::new();
    for dz in -1i32..=1 {
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                let l1 = dz.abs() + dy.abs() + dx.abs();
                if l1 > 0 && l1 <= max_l1 {
                    offs.push((dz, dy, dx));
                }
            }
        }
    }
    let mut labels = vec![0u32; mask.len()];
    let mut next = 0;
    for start in 0..mask.len() {
        if mask.data()[start] == 0.0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        let mut stack = vec![start];
        labels[start] = next;
        while let Some(i) = stack.pop() {
            let (z, y, x) = ((i / (ny * nx)) as i32, ((i / nx) % ny) as i32, (i % nx) as i32);
            for &(dz, dy, dx) in &offs {
                let (a, b, c) = (z + dz, y + dy, x + dx);
                if a < 0 || b < 0 || c < 0 || a >= nz as i32 || b >= ny as i32 || c >= nx as i32 {
                    continue;
                }
                let j = (a as usize * ny + b as usize) * nx + c as usize;
                if mask.data()[j] != 0.0 && labels[j] == 0 {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
    }
    labels
}

// ---------- criteria ----------

fn ac1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = Smooth::default();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let labels = random_labels(&mut rng);
        let pred = random_prob(&mut rng, labels.shape());
        for mode in [BranchMode::PerBranchMean, BranchMode::Global] {
            let got = branch_loss(&pred, &labels, s, mode).unwrap();
            worst = worst.max((got - branch_oracle(&pred, &labels, s.value(), mode)).abs());
        }
        for variant in [CenterlineVariant::SkeletonProduct, CenterlineVariant::CenterlineRecall] {
            let got = centerline_loss(&pred, &labels, 0.5, s, variant).unwrap();
            worst = worst.max((got - centerline_oracle(&pred, &labels, 0.5, s.value(), variant)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 10.0,
        format!("200 volumes, max |diff| {worst:.2e} (tol 1e-9), {secs:.2} s (limit 10 s)"),
    )
}

fn ac2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = [0.2, 0.2, 0.3, 0.3];
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
        let hand = 0.2 * c[0] + 0.2 * c[1] + 0.3 * c[2] + 0.3 * c[3];
        let got = total_loss(c[0], c[1], c[2], c[3], LossWeights(w)).unwrap();
        worst = worst.max((got - hand).abs());
    }
    let zero = total_loss(0.0, 0.0, 0.0, 0.0, LossWeights(w)).unwrap();

    // perfect prediction on a synthetic tree: every term vanishes except the
    // clamped BCE floor -ln(1 - 1e-7)
    let tree = generate_tree(&TreeSpec {
        depth: 2,
        ..TreeSpec::default()
    })
    .unwrap();
    let labels = label_branches(&tree.mask, &tree.table).unwrap();
    let pred = tree.mask.clone().into_role(Role::Probability).unwrap();
    let l = all_losses(
        &pred,
        &labels,
        LossWeights(w),
        BranchMode::PerBranchMean,
        CenterlineVariant::SkeletonProduct,
        0.5,
        Smooth::default(),
    )
    .unwrap();
    let floor = 0.2 * -(1.0f64 - 1e-7).ln();
    let perfect_ok = l.total <= floor + 1e-9;
    outcome(
        worst <= 1e-12 && zero == 0.0 && perfect_ok,
        format!(
            "max |diff| {worst:.2e} (tol 1e-12); all-zero components -> {zero}; perfect tree prediction -> {:.3e} (BCE clamp floor {floor:.3e})",
            l.total
        ),
    )
}

fn ac3() -> Outcome {
    // dyadic inputs keep every f32 operation exact, so the difference quotient carries no rounding
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let eps = 2f32.powi(-13);
    let mut worst = 0.0f64;
    for t in 0..100 {
        let shape = random_shape(&mut rng, 6);
        let n: usize = shape.iter().product();
        let p = rng.random_range(1..=16) as f64 / 16.0;
        let m = dropout_mask(shape, p.max(0.5), t).unwrap();
        let x: Vec<f32> = (0..n).map(|_| rng.random_range(-256..=256) as f32 / 64.0).collect();
        let xv = Volume::new(shape, [1.0; 3], x.clone(), Role::Intensity).unwrap();
        let ones = xv.with_data(vec![1.0; n], Role::Intensity).unwrap();
        let grad = dropout_backward(&ones, &m, p).unwrap();
        let plus = dropout_forward(&xv.with_data(x.iter().map(|v| v + eps).collect(), Role::Intensity).unwrap(), &m, p).unwrap();
        let minus = dropout_forward(&xv.with_data(x.iter().map(|v| v - eps).collect(), Role::Intensity).unwrap(), &m, p).unwrap();
        for i in 0..n {
            let fd = (plus.data()[i] as f64 - minus.data()[i] as f64) / (2.0 * eps as f64);
            worst = worst.max((fd - grad.data()[i] as f64).abs());
        }
    }
    outcome(worst <= 1e-6, format!("100 tensors, max |fd - backward| {worst:.2e} (tol 1e-6)"))
}

fn ac4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = random_prob(&mut rng, [5, 6, 7]);
    let stack = PredictionStack::new(vec![base.clone(); 7]).unwrap();
    let s = aggregate(&stack).unwrap();
    let identical_ok = s.variance.data().iter().all(|v| *v == 0.0) && s.out == s.mean && s.mean.data() == base.data();

    let zero = Volume::zeros([2, 2, 2], [1.0; 3], Role::Probability);
    let one = Volume::filled([2, 2, 2], [1.0; 3], Role::Probability, 1.0);
    let s2 = aggregate(&PredictionStack::new(vec![zero, one]).unwrap()).unwrap();
    let pair_ok = s2.mean.data().iter().all(|v| *v == 0.5) && s2.variance.data().iter().all(|v| *v == 0.25);
    outcome(
        identical_ok && pair_ok,
        format!("identical stack: var==0 & out==mean bit-exact {identical_ok}; {{0,1}} stack -> 0.5/0.25 exact {pair_ok}"),
    )
}

fn ac5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let shape = random_shape(&mut rng, 8);
        let density: f64 = rng.random_range(0.1..0.7);
        let mask = Volume::binary_from_fn(shape, [1.0; 3], |_| rng.random_bool(density));
        for (conn, l1) in [(Connectivity::Face6, 1), (Connectivity::Edge18, 2), (Connectivity::Vertex26, 3)] {
            let got = connected_components(&mask, conn).unwrap();
            let want = flood_fill_oracle(&mask, l1);
            let got_labels: Vec<u32> = got.labels.data().iter().map(|v| *v as u32).collect();
            if got_labels != want {
                mismatches += 1;
            }
        }
    }
    let tree = generate_tree(&TreeSpec::default()).unwrap();
    let noisy = perturb(&tree.mask, &tree.table, Perturbation::AddNoiseComponent { size: 200, seed: 9 }).unwrap();
    let restored = keep_largest_component(&noisy, Connectivity::Vertex26).unwrap();
    let restore_ok = restored == tree.mask && noisy != tree.mask;
    outcome(
        mismatches == 0 && restore_ok,
        format!("3000 labelings, {mismatches} mismatches; noise blob removed and tree restored bit-exactly: {restore_ok}"),
    )
}

fn ac6() -> Outcome {
    let start = Instant::now();
    let mut count_fail = Vec::new();
    let mut worst_cheb = 0i64;
    let mut worst_tip = 0.0f64;
    let mut worst_euclid = 0.0f64;
    let mut slowest = 0.0f64;
    let mut trees = 0;
    for depth in 0..=4u32 {
        for seed in 0..5u64 {
            let t0 = Instant::now();
            let spec = TreeSpec {
                depth,
                seed,
                volume_shape: [128, 128, 128],
                root_length_vox: 28.0,
                length_decay: 0.8,
                root_radius_vox: 4.5,
                radius_decay: 0.82,
                ..TreeSpec::default()
            };
            assert!(spec.radius_at(depth) >= 2.0 && spec.min_separation_vox >= 4.0);
            let tree = generate_tree(&spec).unwrap();
            let skeleton = skeletonize(&tree.mask).unwrap();
            let graph = build_skeleton_graph(&skeleton).unwrap();
            let table = decompose_branches(&graph, spec.spacing, RootPolicy::MinZ).unwrap();
            slowest = slowest.max(t0.elapsed().as_secs_f64());
            trees += 1;
            let expected = (1usize << (depth + 1)) - 1;
            if table.len() != expected {
                count_fail.push(format!("d{depth}/s{seed}: {} != {expected}", table.len()));
            }

            let axis: Vec<[i64; 3]> = tree
                .centerline
                .foreground_indices()
                .into_iter()
                .map(|i| tree.centerline.unflatten(i).map(|c| c as i64))
                .collect();
            for i in skeleton.foreground_indices() {
                let v = skeleton.unflatten(i).map(|c| c as i64);
                let p = v.map(|c| c as f64);
                let euclid = tree
                    .axes
                    .iter()
                    .map(|(a, b)| point_segment_distance(p, a.map(|c| c as f64), b.map(|c| c as f64)))
                    .fold(f64::INFINITY, f64::min);
                worst_euclid = worst_euclid.max(euclid);
                let cheb = axis
                    .iter()
                    .map(|q| (0..3).map(|k| (q[k] - v[k]).abs()).max().unwrap())
                    .min()
                    .unwrap();
                if cheb <= 1 {
                    continue;
                }
                // overshoot into a rounded end cap: measured against that branch's radius
                let tip = tree
                    .table
                    .branches
                    .iter()
                    .filter(|b| b.children.is_empty())
                    .map(|b| {
                        let (_, end) = tree.axes[b.id as usize - 1];
                        let d = (0..3).map(|k| ((v[k] - end[k]) as f64).powi(2)).sum::<f64>().sqrt();
                        d / spec.radius_at(b.generation)
                    })
                    .fold(f64::INFINITY, f64::min);
                worst_tip = worst_tip.max(tip);
                worst_cheb = worst_cheb.max(cheb);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = count_fail.is_empty() && worst_tip <= 1.0 && slowest < 60.0;
    outcome(
        pass,
        format!(
            "{trees} trees at 128^3 (depth 0-4): count mismatches {count_fail:?}; every non-tip skeleton voxel within 1 voxel (Chebyshev) of the rasterized axis; tip overshoot <= {worst_tip:.2} x radius of the axis end (limit 1.0); raw Euclidean distance to continuous axes max {worst_euclid:.2}; slowest tree {slowest:.2} s (limit 60 s), total {secs:.1} s"
        ),
    )
}

fn ac7() -> Outcome {
    // exhaustive 2x2x2 pairs against direct TP/FP/FN counting
    let mut bad = 0;
    let masks: Vec<Volume> = (0u32..256)
        .map(|bits| Volume::binary_from_fn([2, 2, 2], [1.0; 3], |[z, y, x]| bits >> (z * 4 + y * 2 + x) & 1 == 1))
        .collect();
    for (pb, p) in masks.iter().enumerate() {
        for (gb, g) in masks.iter().enumerate() {
            let tp = (pb & gb).count_ones() as f64;
            let fp = (pb & !gb & 0xff).count_ones() as f64;
            let fn_ = (!pb & gb & 0xff).count_ones() as f64;
            let want_dsc = if tp + fp + fn_ == 0.0 { 1.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
            let want_prec = if tp + fp == 0.0 {
                if tp + fn_ == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                tp / (tp + fp)
            };
            if dsc(p, g).unwrap() != want_dsc || precision(p, g).unwrap() != want_prec {
                bad += 1;
            }
        }
    }

    // DropBranch on a 3-branch tree
    let tree = generate_tree(&TreeSpec {
        depth: 1,
        ..TreeSpec::default()
    })
    .unwrap();
    let gt = &tree.mask;
    let dropped = perturb(gt, &tree.table, Perturbation::DropBranch(3)).unwrap();
    let report = evaluate_case("drop3", &dropped.clone().into_role(Role::Probability).unwrap(), gt, 0.5, false, 0.8).unwrap();
    let bd_ok = (report.bd - 2.0 / 3.0).abs() <= 1e-12;

    // centerline length fraction outside the dropped region, weights from brute-force neighbor steps
    let skeleton = skeletonize(gt).unwrap();
    let sk: Vec<[usize; 3]> = skeleton.foreground_indices().into_iter().map(|i| skeleton.unflatten(i)).collect();
    let (mut kept, mut total) = (0.0f64, 0.0f64);
    for a in &sk {
        let steps: Vec<f64> = sk
            .iter()
            .filter(|b| *b != a && (0..3).all(|k| a[k].abs_diff(b[k]) <= 1))
            .map(|b| (0..3).map(|k| (a[k] as f64 - b[k] as f64).powi(2)).sum::<f64>().sqrt())
            .collect();
        let w = steps.iter().sum::<f64>() / steps.len() as f64;
        total += w;
        if dropped.get(*a) != 0.0 {
            kept += w;
        }
    }
    let td_want = kept / total;
    let td_ok = (report.td - td_want).abs() <= 1e-12;
    outcome(
        bad == 0 && bd_ok && td_ok,
        format!(
            "65536 mask pairs, {bad} mismatches; DropBranch(3): BD {:.12} (want 2/3), TD {:.6} vs oracle {td_want:.6} (dropped fraction {:.6})",
            report.bd,
            report.td,
            1.0 - td_want
        ),
    )
}

fn run_cli(args: &[&str], threads: &str) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_airway"))
        .args(["--threads", threads])
        .args(args)
        .output()
        .expect("spawn airway");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn ac8() -> Outcome {
    let corpus = tempfile::tempdir().unwrap();
    let c = corpus.path();
    let spec = TreeSpec {
        depth: 2,
        seed: 4,
        volume_shape: [64, 64, 64],
        root_length_vox: 18.0,
        root_radius_vox: 3.0,
        radius_decay: 0.85,
        ..TreeSpec::default()
    };
    std::fs::write(c.join("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    let tree = generate_tree(&spec).unwrap();
    save_volume(&tree.mask, &c.join("mask.mhd")).unwrap();
    let labels = label_branches(&tree.mask, &tree.table).unwrap();
    save_volume(&labels, &c.join("labels.mhd")).unwrap();
    let noisy = perturb(&tree.mask, &tree.table, Perturbation::AddNoiseComponent { size: 40, seed: 2 }).unwrap();
    save_volume(&noisy, &c.join("noisy.mhd")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let soft = |rng: &mut ChaCha8Rng, m: &Volume| {
        let data = m.data().iter().map(|v| (0.7 * v + 0.3 * rng.random::<f32>()).clamp(0.0, 1.0)).collect();
        m.with_data(data, Role::Probability).unwrap()
    };
    std::fs::create_dir_all(c.join("pred")).unwrap();
    std::fs::create_dir_all(c.join("gt")).unwrap();
    std::fs::create_dir_all(c.join("mc")).unwrap();
    for (k, op) in [Perturbation::ErodeOnce, Perturbation::DropBranch(4), Perturbation::DropBranch(2)].into_iter().enumerate() {
        let damaged = perturb(&tree.mask, &tree.table, op).unwrap();
        save_volume(&soft(&mut rng, &damaged), &c.join(format!("pred/case{k}.mhd"))).unwrap();
        save_volume(&tree.mask, &c.join(format!("gt/case{k}.mhd"))).unwrap();
    }
    for k in 0..5 {
        save_volume(&soft(&mut rng, &tree.mask), &c.join(format!("mc/p{k}.mhd"))).unwrap();
    }
    let ct = {
        let data = (0..tree.mask.len()).map(|_| rng.random_range(-1000.0f32..400.0)).collect();
        tree.mask.with_data(data, Role::Intensity).unwrap()
    };
    save_volume(&ct, &c.join("ct.mhd")).unwrap();

    let p = |s: &str| c.join(s).display().to_string();
    let cases: Vec<(&str, Vec<String>)> = vec![
        ("synth", vec!["synth".into(), "--spec".into(), p("spec.json"), "--out-dir".into(), "{out}/synth".into()]),
        (
            "preprocess",
            vec![
                "preprocess".into(),
                "--in".into(),
                p("ct.mhd"),
                "--out-dir".into(),
                "{out}/patches".into(),
                "--patch".into(),
                "32,32,32".into(),
                "--stride".into(),
                "24,24,24".into(),
                "--normalize".into(),
            ],
        ),
        ("augment", vec!["augment".into(), "--in".into(), p("ct.mhd"), "--out".into(), "{out}/aug.mhd".into(), "--ops-out".into(), "{out}/ops.json".into()]),
        ("postprocess", vec!["postprocess".into(), "--in".into(), p("noisy.mhd"), "--out".into(), "{out}/clean.mhd".into()]),
        (
            "evaluate",
            vec![
                "evaluate".into(),
                "--pred".into(),
                p("pred"),
                "--gt".into(),
                p("gt"),
                "--postprocess".into(),
                "--csv".into(),
                "{out}/m.csv".into(),
                "--json".into(),
                "{out}/m.json".into(),
            ],
        ),
        (
            "uncertainty",
            vec!["uncertainty".into(), "--pred-glob".into(), p("mc/*.mhd"), "--out-dir".into(), "{out}/unc".into(), "--tau".into(), "0.01".into()],
        ),
        ("skeletonize", vec!["skeletonize".into(), "--in".into(), p("mask.mhd"), "--out".into(), "{out}/skel.mhd".into()]),
        (
            "branches",
            vec![
                "branches".into(),
                "--in".into(),
                p("mask.mhd"),
                "--labels-out".into(),
                "{out}/labels.mhd".into(),
                "--table-out".into(),
                "{out}/table.json".into(),
            ],
        ),
        (
            "loss",
            vec!["loss".into(), "--pred".into(), p("pred/case1.mhd"), "--gt-labels".into(), p("labels.mhd"), "--json".into(), "{out}/loss.json".into()],
        ),
    ];

    let mut failures = Vec::new();
    let mut files = 0;
    for (name, args) in &cases {
        let mut runs = Vec::new();
        for (run, threads) in [(0, "1"), (1, "1"), (2, "4"), (3, "0")] {
            let out = tempfile::tempdir().unwrap();
            std::fs::create_dir_all(out.path()).unwrap();
            let args: Vec<String> = args.iter().map(|a| a.replace("{out}", &out.path().display().to_string())).collect();
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            let (code, stdout) = run_cli(&refs, threads);
            if code != 0 {
                failures.push(format!("{name} run {run} exit {code}"));
            }
            runs.push((snapshot(out.path()), stdout));
        }
        files += runs[0].0.len();
        if runs[0].0.is_empty() {
            failures.push(format!("{name} wrote nothing"));
        }
        if runs.iter().any(|r| r != &runs[0]) {
            failures.push(format!("{name} differs across runs/threads"));
        }
    }
    // reassemble depends on preprocess output
    let out = tempfile::tempdir().unwrap();
    let o = out.path().display().to_string();
    run_cli(&["preprocess", "--in", &p("ct.mhd"), "--out-dir", &format!("{o}/patches"), "--patch", "32,32,32", "--stride", "24,24,24"], "1");
    let mut rebuilt = Vec::new();
    for threads in ["1", "4"] {
        let target = format!("{o}/re{threads}.mhd");
        let (code, _) = run_cli(&["reassemble", "--grid", &format!("{o}/patches/grid.json"), "--out", &target], threads);
        if code != 0 {
            failures.push(format!("reassemble exit {code}"));
        }
        rebuilt.push(std::fs::read(format!("{o}/re{threads}.raw")).unwrap_or_default());
    }
    if rebuilt[0] != rebuilt[1] || rebuilt[0] != std::fs::read(c.join("ct.raw")).unwrap() {
        failures.push("reassemble output not reproducible or not identical to input".into());
    }
    outcome(
        failures.is_empty(),
        format!(
            "10 subcommands x 4 runs (--threads 1,1,4,0): {files} output files compared byte-for-byte; failures {failures:?}"
        ),
    )
}

fn ac9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir = tempfile::tempdir().unwrap();
    let mut io_ok = true;
    for (k, role) in [Role::Intensity, Role::Probability, Role::Binary, Role::Label].into_iter().enumerate() {
        let shape = random_shape(&mut rng, 12);
        let spacing = [rng.random_range(0.3..3.0), rng.random_range(0.3..3.0), rng.random_range(0.3..3.0)];
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n)
            .map(|_| match role {
                Role::Intensity => rng.random_range(-2000.0f32..3000.0),
                Role::Probability => rng.random::<f32>(),
                Role::Binary => rng.random_range(0..2) as f32,
                Role::Label => rng.random_range(0..40) as f32,
            })
            .collect();
        let v = Volume::new(shape, spacing, data, role).unwrap();
        let path = dir.path().join(format!("v{k}.mhd"));
        save_volume(&v, &path).unwrap();
        io_ok &= load_volume(&path, Some(role)).unwrap() == v;
    }

    let shape = [150, 100, 200];
    let n: usize = shape.iter().product();
    let ct = Volume::new(shape, [0.7, 0.6, 0.6], (0..n).map(|_| rng.random_range(-1000.0f32..1000.0)).collect(), Role::Intensity).unwrap();
    let grid = plan_patches(shape, DEFAULT_PATCH, DEFAULT_PATCH).unwrap();
    let exact = reassemble(&extract_patches(&ct, &grid).unwrap(), &grid).unwrap() == ct;

    let prob = random_prob(&mut rng, shape);
    let overlap = plan_patches(shape, DEFAULT_PATCH, [100, 60, 100]).unwrap();
    let back = reassemble(&extract_patches(&prob, &overlap).unwrap(), &overlap).unwrap();
    let err = back.data().iter().zip(prob.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    let bin = threshold(&prob, 0.5).unwrap();
    let bin_back = reassemble(&extract_patches(&bin, &overlap).unwrap(), &overlap).unwrap();
    outcome(
        io_ok && exact && err <= 1e-6 && bin_back == bin,
        format!(
            "MHD roundtrip (4 roles) {io_ok}; stride == patch {DEFAULT_PATCH:?} ({} patches) identity {exact}; overlap ({} patches) max error {err:.1e} (tol 1e-6)",
            grid.origins.len(),
            overlap.origins.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 9] = [
        ("AC1", "loss oracle equivalence", ac1),
        ("AC2", "total loss linearity", ac2),
        ("AC3", "dropout gradient check", ac3),
        ("AC4", "MC aggregation fidelity", ac4),
        ("AC5", "connected components", ac5),
        ("AC6", "skeleton/tree recovery", ac6),
        ("AC7", "metric sanity", ac7),
        ("AC8", "pipeline determinism", ac8),
        ("AC9", "I/O and patching roundtrips", ac9),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("[{}] {id} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
