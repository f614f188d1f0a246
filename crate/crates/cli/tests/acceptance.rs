//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.
//!
//!     cargo test -p geomtensor-cli --test acceptance

mod common;

use std::fs;
use std::time::{Duration, Instant};

use common::{check_case, fixture, golden_cases, run_bin, scratch};
use geomtensor::autodiff::grad_atomic;
use geomtensor::document::graph_from_json;
use geomtensor::geometry::{decompose_transform, merge_horizontal, merge_vertical, raster_execute, Transform, View};
use geomtensor::graph::{geometric_pass, module_run, module_split, session_run};
use geomtensor::kernels::{conv2d, count_multiplies, matmul, AlgorithmVariant, Workload};
use geomtensor::search::{backend_power, optimize_tile, select_backend, BackendSpec};
use geomtensor::{Error, Tensor};
use geomtensor_cli::{cmd_train, Optimizer, TrainOptions};
use geomtensor_oracle::fd::{max_abs_diff, op_gradients, output_shape};
use geomtensor_oracle::gen::{
    gradient_case, random_catalog, random_control_flow_graph, random_graph, random_tensor, random_transform,
    random_workload, GRADIENT_CASES, TRANSFORM_KINDS,
};
use geomtensor_oracle::interp::{self, Nd};
use geomtensor_oracle::{close, cost, eval_graph, rel_err};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

fn bits(t: &Tensor) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn workload_arithmetic() -> Outcome {
    let start = Instant::now();
    let r = run_bin(&["workload", "--aop", "61", "--top", "45", "--cop", "16", "--fop", "2", "--backends", "16"]);
    ensure(r.code == 0, || format!("exit {}", r.code))?;
    let field = |name: &str| r.stdout.lines().find_map(|l| l.strip_prefix(name)).map(str::trim).unwrap_or("");
    let (naive, geo, red) = (field("naive:"), field("geometric:"), field("reduction:"));
    ensure(naive == "1954" && geo == "1055", || format!("naive {naive}, geometric {geo}"))?;
    let pct: f64 = red.trim_end_matches('%').parse().map_err(|_| format!("reduction `{red}`"))?;
    ensure((pct - 46.0).abs() <= 0.5, || format!("reduction {pct}%"))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("naive={naive} geometric={geo} reduction={red}"))
}

fn decomposition_soundness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for kind in TRANSFORM_KINDS {
        for case in 0..200 {
            let (t, shapes) = random_transform(&mut rng, kind);
            let xs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut rng, s)).collect();
            let r = decompose_transform(&t, &shapes).map_err(|e| format!("{kind} case {case}: {e}"))?;
            let got = raster_execute(&r, &xs.iter().collect::<Vec<_>>()).map_err(|e| e.to_string())?;
            let nds: Vec<Nd> = xs.iter().map(Nd::from_tensor).collect();
            let want = interp::transform(&t, &nds.iter().collect::<Vec<_>>())?.to_tensor();
            ensure(got.shape() == want.shape() && bits(&got) == bits(&want), || format!("{kind} case {case}: {t:?}"))?;
        }
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("{} kinds x 200 cases bitwise equal", TRANSFORM_KINDS.len()))
}

fn merging_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    // vertical: a single-region full-cover producer followed by a permutation
    for case in 0..100 {
        let (p, shapes) = random_transform(&mut rng, ["transpose", "reverse", "slice", "reshape"][case % 4]);
        let pr = decompose_transform(&p, &shapes).map_err(|e| e.to_string())?;
        let mut perm: Vec<usize> = (0..pr.out_shape.len()).collect();
        perm.shuffle(&mut rng);
        let cr = decompose_transform(&Transform::Transpose { perm }, std::slice::from_ref(&pr.out_shape))
            .map_err(|e| e.to_string())?;
        let m = merge_vertical(&pr, &cr).ok_or_else(|| format!("vertical case {case} did not merge"))?;
        let x = random_tensor(&mut rng, &shapes[0]);
        let two = raster_execute(&cr, &[&raster_execute(&pr, &[&x]).unwrap()]).unwrap();
        ensure(bits(&raster_execute(&m, &[&x]).unwrap()) == bits(&two), || format!("vertical case {case}"))?;
    }
    // horizontal: two identical rasters over the same sources
    for case in 0..100 {
        let kind = TRANSFORM_KINDS[case % TRANSFORM_KINDS.len()];
        let (t, shapes) = random_transform(&mut rng, kind);
        let a = decompose_transform(&t, &shapes).map_err(|e| e.to_string())?;
        let b = decompose_transform(&t, &shapes).map_err(|e| e.to_string())?;
        let m = merge_horizontal(&a, &b).ok_or_else(|| format!("horizontal case {case} did not merge"))?;
        let xs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut rng, s)).collect();
        let refs: Vec<&Tensor> = xs.iter().collect();
        let merged = raster_execute(&m, &refs).unwrap();
        for single in [&a, &b] {
            ensure(bits(&merged) == bits(&raster_execute(single, &refs).unwrap()), || {
                format!("horizontal case {case}")
            })?;
        }
    }
    let names = ["identity.json", "mlp.json", "if_graph.json", "conv.json", "empty.json", "linreg.json"];
    for name in names {
        let g = graph_from_json(&fs::read_to_string(fixture(name)).unwrap()).map_err(|e| e.to_string())?;
        let once = geometric_pass(&g).map_err(|e| e.to_string())?;
        ensure(geometric_pass(&once).map_err(|e| e.to_string())? == once, || format!("pass not idempotent on {name}"))?;
    }
    Ok(format!("100 vertical + 100 horizontal bitwise equal; pass idempotent on {} fixtures", names.len()))
}

fn slicing_example() -> Outcome {
    let r = decompose_transform(&Transform::Slice { begin: vec![1, 0], size: vec![1, 4] }, &[vec![2, 4]])
        .map_err(|e| e.to_string())?;
    ensure(r.regions.len() == 1, || format!("{} regions", r.regions.len()))?;
    let v = &r.regions[0].src_view;
    ensure(*v == View::new(4, vec![4, 1]), || format!("src view {v:?}"))?;
    let x = Tensor::new(vec![2, 4], (0..8).map(|i| i as f32).collect()).unwrap();
    let y = raster_execute(&r, &[&x]).map_err(|e| e.to_string())?;
    ensure(y.data() == [4.0, 5.0, 6.0, 7.0], || format!("got {:?}", y.data()))?;
    Ok("src strides (4,1), offset 4, second row".into())
}

fn tile_optimality() -> Outcome {
    let start = Instant::now();
    let dims = [1, 2, 4, 8, 16, 32, 64];
    let mut checked = 0;
    for a in dims {
        for e in dims {
            for b in dims {
                for nr in 3..=32 {
                    let got = optimize_tile(a, e, b, nr).ok();
                    let want = cost::tile_argmin(a, e, b, nr);
                    ensure(got == want, || format!("({a},{e},{b}) N_r={nr}: {got:?} vs {want:?}"))?;
                    checked += 1;
                }
            }
        }
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!("{checked} grid points, zero mismatches"))
}

fn power_heuristics() -> Outcome {
    let fp16 = backend_power(&BackendSpec::cpu("a", 2.0, true, 16, 4));
    let plain = backend_power(&BackendSpec::cpu("b", 2.0, false, 16, 4));
    let gpu = backend_power(&BackendSpec::gpu("g", 1.25e12, 0.0, 16, 4));
    ensure(fp16 == 32e9 && plain == 16e9 && gpu == 1.25e12, || format!("{fp16} {plain} {gpu}"))?;
    Ok("32 / 16 G-ops/s, gpu passthrough".into())
}

fn selection_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    for case in 0..500 {
        let catalog = random_catalog(&mut rng, 6);
        let ops: Vec<Workload> = (0..rng.gen_range(0..=20)).map(|_| random_workload(&mut rng)).collect();
        let (want, _) = cost::select(&ops, &catalog);
        let got = match select_backend(&ops, &catalog) {
            Ok(sel) => Some(sel.winner),
            Err(Error::NoBackend) => None,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        ensure(got == want, || format!("case {case}: {got:?} vs {want:?}"))?;
    }
    within(start, Duration::from_secs(30))?;
    Ok("500 instances, zero mismatches".into())
}

fn kernel_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let mut worst_s = 0.0f64;
    for n in [1, 2, 3, 7, 16, 31, 32, 33, 48, 63, 64] {
        let a = random_tensor(&mut rng, &[n, n]);
        let b = random_tensor(&mut rng, &[n, n]);
        let direct = matmul(&a, &b, AlgorithmVariant::Direct).unwrap();
        for cutoff in [2, 4, 16] {
            let s = matmul(&a, &b, AlgorithmVariant::Strassen { cutoff }).unwrap();
            worst_s = worst_s.max(rel_err(s.data(), direct.data()));
        }
        for (te, tb) in [(1, 1), (2, 3), (4, 4), (8, 2)] {
            let t = matmul(&a, &b, AlgorithmVariant::Tiled { te, tb }).unwrap();
            ensure(bits(&t) == bits(&direct), || format!("tiled {te}x{tb} differs at n={n}"))?;
        }
    }
    ensure(worst_s < 1e-5, || format!("strassen rel err {worst_s:e}"))?;
    let mut worst_w = 0.0f64;
    for _ in 0..30 {
        let c = rng.gen_range(1..=4);
        let (h, w) = (rng.gen_range(3..=16), rng.gen_range(3..=16));
        let x = random_tensor(&mut rng, &[1, c, h, w]);
        let o = rng.gen_range(1..=4);
        let k = random_tensor(&mut rng, &[o, c, 3, 3]);
        let pad = rng.gen_range(0..=1);
        let direct = conv2d(&x, &k, 1, pad, AlgorithmVariant::Direct).unwrap();
        for m in [2, 6] {
            let wino = conv2d(&x, &k, 1, pad, AlgorithmVariant::Winograd { m }).unwrap();
            worst_w = worst_w.max(rel_err(wino.data(), direct.data()));
        }
    }
    ensure(worst_w < 1e-4, || format!("winograd rel err {worst_w:e}"))?;

    let a = random_tensor(&mut rng, &[2, 2]);
    let (_, s) = count_multiplies(|| matmul(&a, &a, AlgorithmVariant::Strassen { cutoff: 1 }).unwrap());
    let (_, d) = count_multiplies(|| matmul(&a, &a, AlgorithmVariant::Direct).unwrap());
    ensure((s, d) == (7, 8), || format!("strassen counts {s} vs {d}"))?;
    let x = random_tensor(&mut rng, &[1, 1, 4, 4]);
    let k = random_tensor(&mut rng, &[1, 1, 3, 3]);
    let (_, wino) = count_multiplies(|| conv2d(&x, &k, 1, 0, AlgorithmVariant::Winograd { m: 2 }).unwrap());
    let (_, direct) = count_multiplies(|| conv2d(&x, &k, 1, 0, AlgorithmVariant::Direct).unwrap());
    ensure((wino, direct) == (16, 36), || format!("winograd counts {wino} vs {direct}"))?;
    Ok(format!("strassen {worst_s:.1e}, winograd {worst_w:.1e}, tiled exact, counts 7/8 and 16/36"))
}

fn graph_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1009);
    let catalog = [BackendSpec::cpu("small", 1.0, false, 3, 1), BackendSpec::cpu("wide", 3.0, true, 32, 8)];
    for case in 0..200 {
        let gen = random_graph(&mut rng, 6);
        let want = eval_graph(&gen.graph, &gen.inputs)?;
        for spec in &catalog {
            let got = session_run(&gen.graph, &gen.inputs, std::slice::from_ref(spec)).map_err(|e| e.to_string())?;
            for o in &gen.graph.outputs {
                let err = rel_err(got.outputs[o].data(), want[o].data());
                ensure(close(got.outputs[o].data(), want[o].data(), 1e-5), || {
                    format!("session case {case} on {}: {o} err {err:e}", spec.name)
                })?;
            }
        }
    }
    for case in 0..50 {
        let gen = random_control_flow_graph(&mut rng);
        let want = eval_graph(&gen.graph, &gen.inputs)?;
        let prog = module_split(&gen.graph).map_err(|e| e.to_string())?;
        let got = module_run(&prog, &gen.inputs, &catalog).map_err(|e| e.to_string())?;
        for o in &gen.graph.outputs {
            ensure(close(got[o].data(), want[o].data(), 1e-5), || format!("module case {case}: {o}"))?;
        }
        match session_run(&gen.graph, &gen.inputs, &[]) {
            Err(Error::Mode(_)) => {}
            other => return Err(format!("session accepted control flow in case {case}: {:?}", other.err())),
        }
    }
    Ok("200 session + 50 module graphs within 1e-5; control flow rejected".into())
}

fn gradient_checks() -> Outcome {
    let mut worst = 0.0f64;
    for case in GRADIENT_CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(1010 + case.len() as u64);
        for n in 0..50 {
            let (kind, xs) = gradient_case(&mut rng, case);
            let w = random_tensor(&mut rng, &output_shape(&kind, &xs));
            let refs: Vec<&Tensor> = xs.iter().collect();
            let got = grad_atomic(&kind, &refs, &w).map_err(|e| format!("{case}: {e}"))?;
            let want = op_gradients(&kind, &xs, &w, 1e-3);
            for (g, fd) in got.iter().zip(&want) {
                let err = max_abs_diff(g.data(), fd);
                worst = worst.max(err);
                ensure(err < 1e-3, || format!("{case} instance {n}: max abs error {err:e}"))?;
            }
        }
    }
    let opts = TrainOptions { optimizer: Optimizer::Sgd, lr: 0.05, steps: 200 };
    let mut log = String::new();
    let curve = cmd_train(
        &fixture("linreg.json"),
        &fixture("linreg_data.json"),
        &opts,
        &scratch("acceptance_w.json"),
        &mut log,
    )
    .map_err(|e| e.to_string())?;
    let mse = *curve.last().unwrap();
    ensure(mse < 1e-3, || format!("training MSE {mse:e}"))?;
    Ok(format!("{} cases x 50, worst {worst:.1e}; linreg MSE {mse:.1e} after 200 SGD steps", GRADIENT_CASES.len()))
}

fn cli_goldens() -> Outcome {
    let cases = golden_cases("acceptance");
    for c in &cases {
        check_case(c)?;
    }
    Ok(format!("{} golden runs reproduced", cases.len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("workload arithmetic", workload_arithmetic),
        ("decomposition soundness", decomposition_soundness),
        ("merging soundness", merging_soundness),
        ("slicing example", slicing_example),
        ("tile optimizer optimality", tile_optimality),
        ("backend power heuristics", power_heuristics),
        ("selection optimality", selection_optimality),
        ("kernel variant agreement", kernel_agreement),
        ("end-to-end graph equivalence", graph_equivalence),
        ("gradient checks", gradient_checks),
        ("cli golden files", cli_goldens),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({detail}) [{t:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{t:.2?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
