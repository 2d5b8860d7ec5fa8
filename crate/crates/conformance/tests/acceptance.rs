//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use firma::data::{load_digits_csv, synth_blobs, LabeledDataset};
use firma::metrics::{comm_cost, gini, rounds_to_threshold};
use firma::nn::{init_model, loss_and_grads, CheckpointLayout, ModelDims, ParamGroup};
use firma::protocols::{prepare_federation, run_experiment, EvalConfig, Method, ProtocolConfig};
use firma::ring::{
    blend, calibrated_retention, coverage_check, fib_weights, gate_and_interpolate, has_improving_move, ring_cost,
    two_opt, BlendWeights, GammaSchedule, GateConfig, MixingMatrix, PHI,
};
use firma::sweep::{ExperimentManifest, Scenario, DATA_DIR_ENV};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

const EXACT: f64 = 1e-10;
const SEEDS: [u64; 3] = [0, 1, 2];
const DESK_CLIENTS: usize = 5;
const DESK_ROUNDS: usize = 10;

struct Report {
    lines: Vec<(String, bool, String)>,
}

impl Report {
    fn check(&mut self, id: &str, pass: bool, detail: impl Into<String>) {
        let detail = detail.into();
        println!("{} {:<4} {}", if pass { "PASS" } else { "FAIL" }, id, detail);
        self.lines.push((id.to_string(), pass, detail));
    }
}

fn fibonacci_identity(rep: &mut Report) {
    let w = fib_weights();
    let sum_err = (w.alpha + w.beta - 1.0).abs();
    let ratio_err = (w.alpha / w.beta - PHI).abs();
    let alpha_err = (w.alpha - 0.618_033_988_7).abs();
    rep.check(
        "1",
        sum_err < EXACT && ratio_err < EXACT && alpha_err < EXACT,
        format!("alpha={:.12} beta={:.12} |a+b-1|={sum_err:.1e} |a/b-phi|={ratio_err:.1e}", w.alpha, w.beta),
    );
}

fn gating_normalization(rep: &mut Report) {
    let w = fib_weights();
    let (lo_l, hi_l) = (w.alpha / 2.0, w.alpha / 2.0 + 0.5);
    let (lo_r, hi_r) = (w.beta / 2.0, w.beta / 2.0 + 0.5);
    let mut rng = firma::seed::rng(2024);
    let (mut active, mut worst_sum, mut out_of_band) = (0, 0.0f64, 0);
    for _ in 0..10_000 {
        let (a_l, a_r, tau) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
        let g = gate_and_interpolate(a_l, a_r, GateConfig { tau, ..GateConfig::default() });
        if g.self_retention_used {
            continue;
        }
        active += 1;
        worst_sum = worst_sum.max((g.a_left + g.a_right - 1.0).abs());
        let slack = 1e-12;
        if g.a_left < lo_l - slack || g.a_left > hi_l + slack || g.a_right < lo_r - slack || g.a_right > hi_r + slack {
            out_of_band += 1;
        }
    }
    rep.check(
        "2",
        worst_sum <= 1e-12 && out_of_band == 0,
        format!(
            "{active} non-retaining draws, max |sum-1|={worst_sum:.1e}, {out_of_band} outside [{lo_l:.3},{hi_l:.3}]/[{lo_r:.3},{hi_r:.3}]"
        ),
    );
}

fn equal_accuracy_weights(rep: &mut Report) {
    let w = fib_weights();
    let g = gate_and_interpolate(0.8, 0.8, GateConfig::default());
    let (el, er) = (w.alpha / 2.0 + 0.25, w.beta / 2.0 + 0.25);
    let pass = (g.a_left - el).abs() < EXACT
        && (g.a_right - er).abs() < EXACT
        && (g.a_left - 0.5590).abs() < 5e-5
        && (g.a_right - 0.4410).abs() < 5e-5;
    rep.check("3", pass, format!("(a_L, a_R) = ({:.10}, {:.10})", g.a_left, g.a_right));
}

fn retention_calibration(rep: &mut Report) {
    let w = fib_weights();
    let (mut worst_pow, mut worst_blend) = (0.0f64, 0.0f64);
    for g in 1..=19 {
        let gamma_r = g as f64 * 0.05;
        for k in 1..=16usize {
            let g_in = calibrated_retention(gamma_r, k).unwrap();
            worst_pow = worst_pow.max((g_in.powi(k as i32) - gamma_r).abs());
            // Frozen neighbours at 3 and -2, own value starting at 1.
            let mut x = vec![1.0];
            for _ in 0..k {
                x = blend(&x, &[3.0], &[-2.0], BlendWeights::Fibonacci, g_in).unwrap();
            }
            let expected = gamma_r + (1.0 - gamma_r) * (3.0 * w.alpha - 2.0 * w.beta);
            worst_blend = worst_blend.max((x[0] - expected).abs());
        }
    }
    rep.check(
        "4",
        worst_pow <= 1e-12 && worst_blend <= 1e-12,
        format!("max |g_in^K - g_r|={worst_pow:.1e}, max multi-pass error={worst_blend:.1e}"),
    );
}

fn anneal_endpoints(rep: &mut Report) {
    let cfg = ProtocolConfig::for_method(Method::FibFlPlusPlus, 5, 30);
    let s = GammaSchedule {
        start: cfg.gamma_start,
        end: cfg.gamma_end,
        warmup: cfg.warmup_rounds(),
        rounds: cfg.rounds,
    };
    let first = s.gamma_at(s.warmup + 1).unwrap();
    let last = s.gamma_at(s.rounds).unwrap();
    let r_eff = s.rounds - s.warmup - 1;
    let mid = s.gamma_at(s.warmup + 1 + r_eff / 2).unwrap();
    let pass = r_eff.is_multiple_of(2) && (first - 0.4).abs() < EXACT && (last - 0.05).abs() < EXACT && (mid - 0.225).abs() < EXACT;
    rep.check(
        "5",
        pass,
        format!("R=30 W={}: first={first:.12} mid={mid:.12} last={last:.12}", s.warmup),
    );
}

fn spectral(rep: &mut Report) {
    let (mut exact_one, mut worst_rho, mut worst_oracle) = (true, 0.0f64, 0.0f64);
    for n in 3..=32 {
        for g in 1..=19 {
            let gamma = g as f64 * 0.05;
            let mix = MixingMatrix::fibonacci(n, gamma).unwrap();
            let lambda = mix.eigenvalues();
            exact_one &= lambda[0].re == 1.0 && lambda[0].im == 0.0;
            worst_rho = worst_rho.max(mix.spectral_radius_excluding_one());
            let m = DMatrix::from_row_iterator(n, n, mix.dense().iter().copied());
            let mut oracle: Vec<_> = m.complex_eigenvalues().iter().copied().collect();
            for l in &lambda {
                let (idx, dist) = oracle
                    .iter()
                    .enumerate()
                    .map(|(i, o)| (i, (o - l).norm()))
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .unwrap();
                worst_oracle = worst_oracle.max(dist);
                oracle.swap_remove(idx);
            }
        }
    }
    rep.check(
        "6",
        exact_one && worst_rho < 1.0 && worst_oracle < EXACT,
        format!("lambda_0 exactly 1: {exact_one}, max rho={worst_rho:.6}, max oracle distance={worst_oracle:.1e}"),
    );
}

fn coverage(rep: &mut Report) {
    let mut failures = Vec::new();
    for n in 2..=32usize {
        let k = n.div_ceil(2);
        let mix = MixingMatrix::fibonacci(n, 0.5).unwrap();
        let m = DMatrix::from_row_iterator(n, n, mix.dense().iter().copied());
        let oracle = m.pow(k as u32).iter().all(|&x| x > 0.0);
        if !(coverage_check(&mix, k) && oracle) {
            failures.push(n);
        }
    }
    rep.check("7", failures.is_empty(), format!("N=2..32 with K=ceil(N/2); failing N: {failures:?}"));
}

fn exhaustive_best(h: &[Vec<f64>]) -> f64 {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], h: &[Vec<f64>], best: &mut f64) {
        if prefix.len() == used.len() {
            *best = best.min(ring_cost(prefix, h));
            return;
        }
        for c in 1..used.len() {
            if !used[c] {
                used[c] = true;
                prefix.push(c);
                rec(prefix, used, h, best);
                prefix.pop();
                used[c] = false;
            }
        }
    }
    let mut used = vec![false; h.len()];
    used[0] = true;
    let mut best = f64::INFINITY;
    rec(&mut vec![0], &mut used, h, &mut best);
    best
}

fn two_opt_quality(rep: &mut Report) {
    let mut rng = firma::seed::rng(8);
    let (mut stuck, mut optimal, mut worst_gap) = (0, 0, 0.0f64);
    for _ in 0..100 {
        let n = rng.gen_range(3..=8);
        let h: Vec<Vec<f64>> = (0..n).map(|_| (0..10).map(|_| rng.gen::<f64>().powi(4)).collect()).collect();
        let o = two_opt(&h);
        if has_improving_move(&o.sigma, &h) {
            stuck += 1;
        }
        let gap = o.cost - exhaustive_best(&h);
        worst_gap = worst_gap.max(gap);
        if gap <= 1e-12 {
            optimal += 1;
        }
    }
    let fixture: Vec<Vec<f64>> = (0..10)
        .map(|i| {
            let mut v = vec![0.003; 10];
            v[i / 2] = 0.97;
            v
        })
        .collect();
    let savings = two_opt(&fixture).savings_fraction().unwrap();
    rep.check(
        "8",
        stuck == 0 && savings > 0.9,
        format!(
            "no improving move left: {}/100; globally optimal: {optimal}/100 (max gap {worst_gap:.3e}); skew fixture savings {:.1}%",
            100 - stuck,
            savings * 100.0
        ),
    );
}

fn ledger_closed_forms(rep: &mut Report) {
    let data = synth_blobs(400, 12, 4, 0.08, 5).unwrap();
    let mut bad = Vec::new();
    let mut cases: Vec<ProtocolConfig> = Method::ALL.iter().map(|&m| ProtocolConfig::for_method(m, 4, 5)).collect();
    let mut warm = ProtocolConfig::for_method(Method::FibFlPlusPlus, 4, 5);
    warm.warmup = Some(1);
    cases.push(warm);
    for mut cfg in cases {
        cfg.hidden = 16;
        cfg.embed = 8;
        cfg.local_epochs = 1;
        cfg.extractor_epochs = 2;
        let spec = firma::data::PartitionSpec {
            scheme: firma::data::PartitionScheme::label_skew(1),
            n_clients: 4,
            seed: 1,
        };
        let out = run_experiment(&data, &spec, &cfg, &EvalConfig::default(), "ls1").unwrap();
        let fed = &out.federation;
        let (p, p_e) = (fed.dims.model_len(), fed.dims.extractor_len());
        for r in &out.records {
            let expected = comm_cost(cfg.method, 4, p, p_e, cfg.gossip_passes(), r.round <= cfg.warmup_rounds());
            if r.params_tx != expected || fed.ledger.params_in_round(r.round) != expected {
                bad.push(format!("{} r{}", cfg.method.as_str(), r.round));
            }
        }
    }
    rep.check("9", bad.is_empty(), format!("7 five-round runs, mismatching rounds: {bad:?}"));
}

fn gradient_check(rep: &mut Report) {
    let dims = ModelDims {
        input: 7,
        hidden: 9,
        embed: 6,
        classes: 4,
    };
    let (mut ext, mut head) = init_model(dims, 42).unwrap();
    let mut rng = firma::seed::rng(7);
    let x = Array2::from_shape_fn((5, dims.input), |_| rng.gen_range(-1.0..1.0));
    let labels = vec![0, 3, 1, 2, 3];
    let (_, grads) = loss_and_grads(&ext, &head, x.view(), &labels, ParamGroup::Both).unwrap();
    let mut analytic = grads.extractor.unwrap();
    analytic.extend_from_slice(&grads.head.unwrap());
    let pe = ext.len();
    let total = pe + head.len();
    let h = 1e-6;
    let mut numeric = vec![0.0; total];
    for (k, slot) in numeric.iter_mut().enumerate() {
        let mut eval = |delta: f64| {
            let p = if k < pe { &mut ext.as_mut_slice()[k] } else { &mut head.as_mut_slice()[k - pe] };
            *p += delta;
            let (loss, _) = loss_and_grads(&ext, &head, x.view(), &labels, ParamGroup::Head).unwrap();
            let p = if k < pe { &mut ext.as_mut_slice()[k] } else { &mut head.as_mut_slice()[k - pe] };
            *p -= delta;
            loss
        };
        *slot = (eval(h) - eval(-h)) / (2.0 * h);
    }
    let layout = CheckpointLayout::new(dims);
    let mut worst = (String::new(), 0.0f64);
    for (i, t) in layout.tensors.iter().enumerate() {
        let end = layout.tensors.get(i + 1).map_or(total, |n| n.offset);
        let (a, b) = (&analytic[t.offset..end], &numeric[t.offset..end]);
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
        let err = diff / norm.max(1e-12);
        if err >= worst.1 {
            worst = (t.name.clone(), err);
        }
    }
    rep.check(
        "11",
        worst.1 < 1e-5,
        format!("{} tensors, worst relative error {:.2e} ({})", layout.tensors.len(), worst.1, worst.0),
    );
}

struct DeskRun {
    method: Method,
    scenario: String,
    seed: u64,
    means: Vec<f64>,
    final_gini: f64,
    head_tx_after_warmup: usize,
    external_head_changes: usize,
}

fn digits() -> LabeledDataset {
    let path = match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join("digits.csv"),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/digits.csv"),
    };
    load_digits_csv(path).expect("digits dataset")
}

fn desk_manifest(seed: u64, scenarios: Vec<Scenario>) -> ExperimentManifest {
    let mut m = ExperimentManifest::full_grid(firma::sweep::DatasetKind::Digits, None, DESK_CLIENTS, DESK_ROUNDS);
    m.seed = seed;
    m.scenarios = scenarios;
    m
}

fn desk_sweep(data: &LabeledDataset) -> Vec<DeskRun> {
    let plans: Vec<_> = SEEDS
        .iter()
        .flat_map(|&s| {
            desk_manifest(s, vec![Scenario::LabelSkew(1), Scenario::Dirichlet(0.1)])
                .expand()
                .into_iter()
                .map(move |p| (s, p))
        })
        .collect();
    plans
        .par_iter()
        .map(|(seed, plan)| {
            let mut protocol = plan.protocol.clone();
            protocol.parallel = false;
            let name = plan.scenario.to_string();
            let out = run_experiment(data, &plan.partition, &protocol, &plan.eval, &name).unwrap();
            let w = protocol.warmup_rounds();
            let fed = &out.federation;
            DeskRun {
                method: plan.method,
                scenario: name,
                seed: *seed,
                means: out.records.iter().map(|r| r.mean_accuracy).collect(),
                final_gini: gini(&out.final_accuracies),
                head_tx_after_warmup: fed.ledger.entries.iter().filter(|t| t.round > w && t.includes_head).count(),
                external_head_changes: fed.audit.external_changes_after(w),
            }
        })
        .collect()
}

struct Table {
    acc: BTreeMap<(String, &'static str), f64>,
    gini: BTreeMap<(String, &'static str), f64>,
    curve: BTreeMap<(String, &'static str), Vec<f64>>,
    r50: BTreeMap<(String, &'static str), Vec<Option<usize>>>,
}

fn tabulate(runs: &[DeskRun]) -> Table {
    let mut t = Table {
        acc: BTreeMap::new(),
        gini: BTreeMap::new(),
        curve: BTreeMap::new(),
        r50: BTreeMap::new(),
    };
    let k = SEEDS.len() as f64;
    for r in runs {
        let key = (r.scenario.clone(), r.method.as_str());
        *t.acc.entry(key.clone()).or_default() += r.means.last().copied().unwrap_or(0.0) / k;
        *t.gini.entry(key.clone()).or_default() += r.final_gini / k;
        let c = t.curve.entry(key.clone()).or_insert_with(|| vec![0.0; r.means.len()]);
        for (a, m) in c.iter_mut().zip(&r.means) {
            *a += m / k;
        }
        t.r50.entry(key).or_default().push(rounds_to_threshold(&r.means, 0.5));
    }
    t
}

fn empirical(rep: &mut Report, runs: &[DeskRun], elapsed: f64) {
    let t = tabulate(runs);
    for scenario in ["ls1", "dir0.1"] {
        let row: Vec<String> = Method::ALL
            .iter()
            .map(|m| {
                let key = (scenario.to_string(), m.as_str());
                format!("{}={:.3}/g{:.3}", m.as_str(), t.acc[&key], t.gini[&key])
            })
            .collect();
        println!("     {scenario:<7} {}", row.join(" "));
    }
    let acc = |s: &str, m: Method| t.acc[&(s.to_string(), m.as_str())];
    let r50 = |s: &str, m: Method| rounds_to_threshold(&t.curve[&(s.to_string(), m.as_str())], 0.5);
    let per_seed = |s: &str, m: Method| format!("{:?}", t.r50[&(s.to_string(), m.as_str())]);

    let (pp, fa) = (acc("ls1", Method::FibFlPlusPlus), acc("ls1", Method::FedAvg));
    rep.check(
        "12a",
        pp >= 0.90 && (pp - fa).abs() <= 0.03,
        format!("LS1 FibFL++ {pp:.4} (need >= 0.90), FedAvg {fa:.4}, gap {:+.2}pp (need within 3pp)", (pp - fa) * 100.0),
    );

    let fa = acc("dir0.1", Method::FedAvg);
    let runner_up = Method::ALL
        .iter()
        .filter(|&&m| m != Method::FedAvg)
        .map(|&m| (m, acc("dir0.1", m)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    rep.check(
        "12b",
        fa - runner_up.1 >= 0.20,
        format!(
            "Dir0.1 FedAvg {fa:.4}, best other {} {:.4}, margin {:.1}pp (need >= 20pp)",
            runner_up.0.as_str(),
            runner_up.1,
            (fa - runner_up.1) * 100.0
        ),
    );

    let (g_rep, g_avg) = (
        t.gini[&("dir0.1".to_string(), Method::FedRep.as_str())],
        t.gini[&("dir0.1".to_string(), Method::FedAvg.as_str())],
    );
    rep.check(
        "12c",
        g_rep - g_avg >= 0.2,
        format!("Dir0.1 Gini FedRep {g_rep:.4} vs FedAvg {g_avg:.4}, difference {:.4} (need >= 0.2)", g_rep - g_avg),
    );

    let (a3, a2, a1) = (acc("dir0.1", Method::FibFlPlusPlus), acc("dir0.1", Method::FibFlPlus), acc("dir0.1", Method::FibFl));
    rep.check(
        "12d",
        a3 >= a2 && a2 >= a1 - 0.02,
        format!("Dir0.1 FibFL++ {a3:.4} >= FibFL+ {a2:.4} >= FibFL {a1:.4} - 2pp"),
    );

    let inf = |r: Option<usize>| r.unwrap_or(usize::MAX);
    let (r1, r2, r3) = (r50("ls1", Method::FibFl), r50("ls1", Method::FibFlPlus), r50("ls1", Method::FibFlPlusPlus));
    rep.check(
        "12e",
        inf(r1) <= 2 && inf(r2) <= 2 && inf(r3) >= inf(r1).max(inf(r2)),
        format!(
            "LS1 R50 on seed-averaged curves: FibFL {r1:?} FibFL+ {r2:?} FibFL++ {r3:?} (per seed {} / {} / {})",
            per_seed("ls1", Method::FibFl),
            per_seed("ls1", Method::FibFlPlus),
            per_seed("ls1", Method::FibFlPlusPlus)
        ),
    );
    println!("     desk sweep: {} runs in {elapsed:.0}s", runs.len());
}

fn head_privacy(rep: &mut Report, runs: &[DeskRun]) {
    let mut leaks = Vec::new();
    let mut private = 0;
    for r in runs.iter().filter(|r| r.method.is_fib_family()) {
        private += 1;
        if r.head_tx_after_warmup > 0 || r.external_head_changes > 0 {
            leaks.push(format!("{} {} seed {}", r.method.as_str(), r.scenario, r.seed));
        }
    }
    rep.check(
        "10",
        leaks.is_empty() && private > 0,
        format!("{private} FibFL-family desk runs; runs with head transmissions or outside head changes: {leaks:?}"),
    );
}

fn ring_savings(rep: &mut Report, data: &LabeledDataset) {
    let mut iid = Vec::new();
    let mut dir = Vec::new();
    for &seed in &SEEDS {
        let m = desk_manifest(seed, vec![Scenario::Iid, Scenario::Dirichlet(0.1)]);
        for plan in m.expand().into_iter().filter(|p| p.method == Method::FibFlPlusPlus) {
            let name = plan.scenario.to_string();
            let fed = prepare_federation(data, &plan.partition, &plan.protocol, &plan.eval, &name).unwrap();
            let s = fed.ring.savings_fraction().unwrap_or(0.0);
            if plan.scenario == Scenario::Iid {
                iid.push(s);
            } else {
                dir.push(s);
            }
        }
    }
    let pct = |v: &[f64]| v.iter().map(|x| format!("{:.1}%", x * 100.0)).collect::<Vec<_>>().join(", ");
    rep.check(
        "13",
        iid.iter().all(|&s| s < 0.10) && dir.iter().all(|&s| s > 0.50),
        format!("IID savings [{}] (need < 10%), Dir0.1 savings [{}] (need > 50%)", pct(&iid), pct(&dir)),
    );
}

fn main() {
    let mut rep = Report { lines: Vec::new() };
    fibonacci_identity(&mut rep);
    gating_normalization(&mut rep);
    equal_accuracy_weights(&mut rep);
    retention_calibration(&mut rep);
    anneal_endpoints(&mut rep);
    spectral(&mut rep);
    coverage(&mut rep);
    two_opt_quality(&mut rep);
    ledger_closed_forms(&mut rep);
    gradient_check(&mut rep);

    let data = digits();
    let start = Instant::now();
    let runs = desk_sweep(&data);
    let elapsed = start.elapsed().as_secs_f64();
    head_privacy(&mut rep, &runs);
    empirical(&mut rep, &runs, elapsed);
    ring_savings(&mut rep, &data);

    let failed: Vec<&str> = rep.lines.iter().filter(|l| !l.1).map(|l| l.0.as_str()).collect();
    println!(
        "acceptance: {} passed, {} failed {:?}",
        rep.lines.len() - failed.len(),
        failed.len(),
        failed
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
