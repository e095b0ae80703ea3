//! Acceptance suite: one PASS/FAIL line per criterion. The exit status is
//! nonzero when a property criterion (1-5, 8) fails; the toy-scale
//! ablation orderings (6, 7) are reported without gating.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use matchdet::attention::{
    construct_two_component_pair, cross_attention, weighted_attention, weighted_attention_var, ws_attention,
    FeatureGrid, TwoComponentSpec,
};
use matchdet::geometry::{
    auc, corner_error, estimate_dlt, ransac_homography, Correspondence, Homography, Point2, RansacParams,
};
use matchdet::harness::{run_gradient_suite, AblationReport, ABLATION_CSV, ABLATION_JSON};
use matchdet::matchhead::{apply_box_filter, dual_softmax, mnn_select, ScoreMatrix};
use matchdet::numerics::{cosine_rows, softmax_rows, Matrix, Tape};
use matchdet::weightgen::WeightMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let report = run_gradient_suite(100, 0).expect("gradient suite runs");
    let secs = start.elapsed().as_secs_f64();
    let worst = report.entries.iter().map(|e| e.max_relative_error).fold(0.0, f64::max);
    let min_instances = report.entries.iter().map(|e| e.instances).min().unwrap_or(0);
    let failing: Vec<&str> = report.entries.iter().filter(|e| !e.passed).map(|e| e.op.as_str()).collect();
    outcome(
        failing.is_empty() && min_instances >= 100 && secs < 60.0,
        format!(
            "{} ops x {min_instances} instances, max rel. error {worst:.2e}, {secs:.1}s, failing {failing:?}",
            report.entries.len()
        ),
    )
}

fn reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (nq, nk, d, dv) = (rng.gen_range(1..12), rng.gen_range(1..12), rng.gen_range(1..9), rng.gen_range(1..9));
        let (q, k, v) = (uniform(&mut rng, nq, d), uniform(&mut rng, nk, d), uniform(&mut rng, nk, dv));
        let mut t = Tape::new();
        let (vq, vk, vv) = (t.constant(q.clone()), t.constant(k.clone()), t.constant(v.clone()));
        let plain = cross_attention(&mut t, vq, vk, vv).unwrap();
        let (oq, ok) = (t.constant(Matrix::filled(nq, 1, 1.0)), t.constant(Matrix::filled(nk, 1, 1.0)));
        let weighted = weighted_attention_var(&mut t, vq, vk, vv, oq, ok).unwrap();
        worst = worst.max(t.value(plain).max_abs_diff(t.value(weighted)).unwrap());
        // the value-level path against an explicit softmax(QK^T)V
        let direct = softmax_rows(&q.matmul(&k.transpose()).unwrap()).matmul(&v).unwrap();
        let (gq, gk) = (FeatureGrid::new(1, nq, q).unwrap(), FeatureGrid::new(1, nk, k).unwrap());
        let gv = FeatureGrid::new(1, nk, v).unwrap();
        let via_maps = weighted_attention(&gq, &gk, &gv, &WeightMap::uniform(1, nq, 1.0), &WeightMap::uniform(1, nk, 1.0))
            .unwrap();
        worst = worst.max(via_maps.values().max_abs_diff(&direct).unwrap());
    }
    outcome(worst <= 1e-12, format!("50 shapes, max |diff| {worst:.2e}"))
}

fn two_component() -> Outcome {
    let (h, w, c) = (4, 4, 8);
    let fg: Vec<usize> = (0..8).collect();
    let mut lines = Vec::new();
    let mut ok = true;
    for v in [0.2, 0.4, 0.6, 0.8] {
        let spec = TwoComponentSpec {
            v,
            u: v,
            c,
            h,
            w,
            fg_cells: fg.clone(),
        };
        let (ct, cr) = construct_two_component_pair(&spec, 17).unwrap();
        let m = WeightMap::new(h, w, (0..h * w).map(|i| if i < 8 { 2.0 } else { 1.0 }).collect()).unwrap();
        let at = weighted_attention(&ct, &cr, &cr, &m, &m).unwrap();
        let ar = weighted_attention(&cr, &ct, &ct, &m, &m).unwrap();
        let bt = ct.values().add(at.values()).unwrap();
        let br = cr.values().add(ar.values()).unwrap();
        let mean_fg = |m: &Matrix| fg.iter().map(|&i| m.get(i, 0)).sum::<f64>() / fg.len() as f64;
        let before = mean_fg(&cosine_rows(ct.values(), cr.values()).unwrap());
        let after = mean_fg(&cosine_rows(&bt, &br).unwrap());
        ok &= after > before;

        let out = ws_attention(&ct, &cr, &cr, &m, &m).unwrap();
        let norm = |m: &Matrix, i: usize| m.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        let growth = |i: usize| norm(out.values(), i) / norm(ct.values(), i);
        let fg_growth = (0..8).map(growth).sum::<f64>() / 8.0;
        let bg_growth = (8..16).map(growth).sum::<f64>() / 8.0;
        ok &= fg_growth > bg_growth;
        if v >= 0.5 {
            ok &= fg_growth >= 1.0 + v * v / 2.0;
        }
        lines.push(format!("v={v}: cos {before:.3}->{after:.3}, norm growth fg {fg_growth:.3} bg {bg_growth:.3}"));
    }
    outcome(ok, lines.join("; "))
}

fn random_homography(rng: &mut ChaCha8Rng) -> Homography {
    let mut m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for row in m.iter_mut().take(2) {
        row[0] += rng.gen_range(-0.2..0.2);
        row[1] += rng.gen_range(-0.2..0.2);
        row[2] = rng.gen_range(-8.0..8.0);
    }
    m[2][0] = rng.gen_range(-1e-3..1e-3);
    m[2][1] = rng.gen_range(-1e-3..1e-3);
    Homography::new(m).unwrap()
}

fn point(rng: &mut ChaCha8Rng) -> Point2 {
    Point2::new(rng.gen_range(0.0..64.0), rng.gen_range(0.0..64.0))
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let h = random_homography(&mut rng);
        let corrs: Vec<Correspondence> = (0..12)
            .map(|_| {
                let p = point(&mut rng);
                Correspondence::new(p, h.apply(p).unwrap())
            })
            .collect();
        let est = estimate_dlt(&corrs).unwrap();
        for c in &corrs {
            worst = worst.max(est.apply(c.reference).unwrap().distance(c.target));
        }
    }
    let mut good = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let h = random_homography(&mut rng);
        let mut corrs: Vec<Correspondence> = (0..70)
            .map(|_| {
                let p = point(&mut rng);
                Correspondence::new(p, h.apply(p).unwrap())
            })
            .collect();
        corrs.extend((0..30).map(|_| Correspondence::new(point(&mut rng), point(&mut rng))));
        let params = RansacParams {
            iters: 1000,
            inlier_px: 3.0,
            seed: trial,
            ..RansacParams::default()
        };
        if let Ok(fit) = ransac_homography(&corrs, &params) {
            if corner_error(&fit.homography, &h, 64.0, 64.0) < 0.5 {
                good += 1;
            }
        }
    }
    let inf = f64::INFINITY;
    let cases: [(&[f64], f64, f64); 5] = [
        (&[0.0, 1.5, 3.0, inf], 3.0, 0.375),
        (&[1.5], 3.0, 0.5),
        (&[0.0, 0.0], 5.0, 1.0),
        (&[10.0, 20.0, inf], 10.0, 0.0),
        (&[1.0, 2.0, 3.0], 4.0, 0.5),
    ];
    let auc_exact = cases.iter().all(|&(e, t, want)| auc(e, t).unwrap() == want);
    outcome(
        worst < 1e-9 && good >= 95 && auc_exact,
        format!("DLT max reprojection {worst:.2e} px over 500; RANSAC {good}/100 under 0.5 px; AUC closed forms exact: {auc_exact}"),
    )
}

fn brute_mnn(p: &Matrix, theta: f64) -> Vec<(usize, usize)> {
    let (n, m) = p.shape();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let v = p.get(i, j);
            let row_ok = (0..m).all(|k| p.get(i, k) < v || (p.get(i, k) == v && k >= j));
            let col_ok = (0..n).all(|k| p.get(k, j) < v || (p.get(k, j) == v && k >= i));
            if row_ok && col_ok && v >= theta {
                out.push((i, j));
            }
        }
    }
    out
}

fn pairs(p: &Matrix, theta: f64) -> Vec<(usize, usize)> {
    mnn_select(p, theta).unwrap().pairs.iter().map(|m| (m.i, m.j)).collect()
}

fn match_head() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut bounds, mut injective, mut invariant) = (true, true, true);
    for _ in 0..1000 {
        let (n, m) = (rng.gen_range(1..10), rng.gen_range(1..10));
        let s = Matrix::from_fn(n, m, |_, _| rng.gen_range(-20.0..20.0));
        let p = dual_softmax(&ScoreMatrix { s: s.clone(), tau: 1.0 });
        let rows = softmax_rows(&s);
        let cols = softmax_rows(&s.transpose()).transpose();
        for i in 0..n {
            for j in 0..m {
                let v = p.get(i, j);
                bounds &= (0.0..=1.0).contains(&v) && v <= rows.get(i, j) && v <= cols.get(i, j);
            }
        }
        let set = pairs(&p, 0.0);
        let mut is: Vec<usize> = set.iter().map(|x| x.0).collect();
        let mut js: Vec<usize> = set.iter().map(|x| x.1).collect();
        is.sort_unstable();
        is.dedup();
        js.sort_unstable();
        js.dedup();
        injective &= is.len() == set.len() && js.len() == set.len();
        let c = rng.gen_range(0.1..5.0);
        let f = apply_box_filter(&p, &WeightMap::uniform(1, n, c), &WeightMap::uniform(1, m, c)).unwrap();
        invariant &= pairs(&f, 0.0) == set;
        for i in 0..n {
            let am = |x: &Matrix| (0..m).fold(0, |b, j| if x.get(i, j) > x.get(i, b) { j } else { b });
            invariant &= am(&p) == am(&f);
        }
    }
    let alphabet = [0.1, 0.5, 0.9];
    let mut oracle = true;
    for code in 0..3u64.pow(12) {
        let mut c = code;
        let p = Matrix::from_fn(3, 4, |_, _| {
            let v = alphabet[(c % 3) as usize];
            c /= 3;
            v
        });
        oracle &= pairs(&p, 0.3) == brute_mnn(&p, 0.3);
    }
    for _ in 0..20_000 {
        let p = Matrix::from_fn(6, 6, |_, _| alphabet[rng.gen_range(0..3)]);
        oracle &= pairs(&p, 0.0) == brute_mnn(&p, 0.0);
    }
    outcome(
        bounds && injective && invariant && oracle,
        format!(
            "1000 matrices: bounds {bounds}, injective {injective}, box-filter invariant {invariant}; \
             MNN oracle {oracle} (substitute: all 3^12 3x4 matrices + 20000 random 6x6, since 3^36 6x6 is infeasible)"
        ),
    )
}

fn ablate(out: &Path, threads: usize) -> (f64, i32) {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_matchdet"))
        .args([
            "ablate",
            "--variants",
            "mdbase,wam,wam-boxfilter,wam-wsam,matchdet",
            "--settings",
            "gtboxr,preboxr,noboxr",
            "--seeds",
            "5",
            "--seed",
            "0",
            "--assert",
            "--out",
        ])
        .arg(out)
        .env("RUST_LOG", "warn")
        .env("RAYON_NUM_THREADS", threads.to_string())
        .status()
        .expect("ablate runs");
    (start.elapsed().as_secs_f64(), status.code().unwrap_or(-1))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gradient suite", gradients()),
        (2, "all-ones weighted attention equals cross attention", reduction()),
        (3, "two-component attention analysis", two_component()),
        (4, "geometry oracles", geometry()),
        (5, "match-head properties", match_head()),
    ];

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (secs, code_a) = ablate(&a, 1);
    let report: AblationReport =
        serde_json::from_str(&std::fs::read_to_string(a.join(ABLATION_JSON)).unwrap()).unwrap();
    let checks = report.ordering_checks();
    let detail = |names: &[&str]| {
        checks
            .iter()
            .filter(|c| names.contains(&c.name.as_str()))
            .map(|c| c.detail.clone())
            .collect::<Vec<_>>()
            .join("; ")
    };
    let passed = |names: &[&str]| {
        checks
            .iter()
            .filter(|c| names.contains(&c.name.as_str()))
            .all(|c| c.passed == Some(true))
    };
    let modules = ["modules_auc3", "modules_ap"];
    let settings = ["settings_auc3", "settings_ap"];
    results.push((
        6,
        "directional module ablation",
        outcome(
            passed(&modules) && secs < 1800.0,
            format!("{}; ablation wall time {secs:.0}s", detail(&modules)),
        ),
    ));
    results.push((7, "setting ordering", outcome(passed(&settings), detail(&settings))));

    let (_, code_b) = ablate(&b, 4);
    let same = std::fs::read(a.join(ABLATION_CSV)).unwrap() == std::fs::read(b.join(ABLATION_CSV)).unwrap();
    results.push((
        8,
        "repeated ablate runs are byte-identical",
        outcome(same && code_a == code_b, format!("{ABLATION_CSV} identical across 1 and 4 threads: {same}, exit codes {code_a}/{code_b}")),
    ));

    let mut gating_ok = true;
    for (n, name, o) in &results {
        if ![6, 7].contains(n) {
            gating_ok &= o.passed;
        }
        println!("{} {n}. {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if !gating_ok {
        std::process::exit(1);
    }
}
