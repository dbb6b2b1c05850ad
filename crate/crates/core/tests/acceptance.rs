//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to
//! stderr (uncaptured) and then asserts its verdict.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use strh2::bench::{gen_delay_fom, gen_msd_chain, gen_ph_random, gen_random_stable};
use strh2::h2metric::{self, auto_grid, GridOptions};
use strh2::linalg::{c, CMat, RMat, C64};
use strh2::optcond::{residual_delay, residual_general_diag, residual_ph_with, residual_second_order, residual_second_order_2d, residual_unstructured, ConditionReport};
use strh2::rng::SplitMix64;
use strh2::scalarfun::CoefficientFunction;
use strh2::spectra::{delay_poles, lambert_w, residue_double, residue_simple, Analytic};
use strh2::structopt::{
    certify, make_parameterization, reduce, second_order_modal, unstructured_from_state_space, MinimizeOptions, Objective,
    ParamOptions, Parameterization, ReduceOptions, Rom, Structure,
};
use strh2::sysmodel::{
    is_normal, load_model, ph_modal_data, DelayROM, DiagonalStructuredROM, Model, PhModalData, SecondOrderFOM, StateSpaceFOM,
    TransferEvaluator,
};

fn verdict(id: usize, name: &str, ok: bool, detail: String, elapsed: Duration, limit: Duration) {
    let within = elapsed <= limit;
    let status = if ok && within { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {id:>2} {status}  {name}: {detail} ({:.2} s of {} s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
    assert!(within, "criterion {id} ({name}) exceeded {} s", limit.as_secs());
}

fn corpus(name: &str) -> Model {
    load_model(&Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/corpus")).join(name)).unwrap()
}

fn rmat(g: &mut SplitMix64, rows: usize, cols: usize) -> RMat {
    RMat::from_fn(rows, cols, |_, _| g.normal())
}

fn cmat(g: &mut SplitMix64, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(g.normal(), g.normal()))
}

fn residual(report: &ConditionReport, id: &str, index: &[usize]) -> CMat {
    let r = report.get(id, index).unwrap_or_else(|| panic!("missing {id} {index:?}"));
    CMat::from_column_slice(r.residual.len(), 1, &r.residual)
}

fn max_rel<'a>(report: &'a ConditionReport, ids: &'a [&str]) -> f64 {
    report.records.iter().filter(|r| ids.contains(&r.id.as_str())).map(|r| r.rel).fold(0.0, f64::max)
}

/// FOM and parameterization for one random gradient instance.
fn gradient_instance(g: &mut SplitMix64, s: Structure) -> (Box<dyn TransferEvaluator>, Parameterization) {
    let r = 1 + g.next_u64() as usize % 3;
    let n = r + 1 + g.next_u64() as usize % (10 - r);
    let m = 1 + g.next_u64() as usize % 2;
    let p = if s == Structure::PortHamiltonian { m } else { 1 + g.next_u64() as usize % 2 };
    let seed = g.next_u64();
    let pairs = Some(g.next_u64() as usize % (r / 2 + 1));
    let (fom, opts): (Box<dyn TransferEvaluator>, ParamOptions) = match s {
        Structure::Unstructured => (Box::new(gen_random_stable(n, m, p, seed).unwrap()), ParamOptions { pairs, tau: None }),
        Structure::SecondOrder => {
            let chain = gen_msd_chain(n, 0.2, 0.05, seed).unwrap();
            let fom = SecondOrderFOM::new(Some(chain.m), chain.e, chain.k, rmat(g, n, m), rmat(g, p, n)).unwrap();
            (Box::new(fom), ParamOptions::default())
        }
        Structure::PortHamiltonian => (Box::new(gen_ph_random(n, m, seed).unwrap()), ParamOptions::default()),
        Structure::Delay => {
            let base = gen_delay_fom(n, 0.5, seed).unwrap();
            let fom = StateSpaceFOM::new(None, base.a, rmat(g, n, m), rmat(g, p, n), base.delay).unwrap();
            (Box::new(fom), ParamOptions { pairs, tau: Some(0.5) })
        }
    };
    (fom, make_parameterization(s, r, m, p, &opts).unwrap())
}

fn random_feasible_theta(g: &mut SplitMix64, param: &Parameterization) -> Vec<f64> {
    let mut scale = 0.5;
    loop {
        let theta: Vec<f64> = (0..param.dim()).map(|_| scale * g.normal()).collect();
        if param.unpack(&theta).is_ok() {
            return theta;
        }
        scale *= 0.9;
    }
}

#[test]
fn c01_gradient_correctness() {
    let start = Instant::now();
    let mut g = SplitMix64::new(101);
    let mut worst = 0.0f64;
    let mut count = 0;
    for s in Structure::ALL {
        for _ in 0..20 {
            let (fom, param) = gradient_instance(&mut g, s);
            let theta = random_feasible_theta(&mut g, &param);
            let rom = param.unpack(&theta).unwrap();
            let grid = auto_grid(&[fom.as_ref(), &rom], &GridOptions::default()).unwrap();
            let obj = Objective::new(fom.as_ref(), &param, grid).unwrap();
            for row in obj.gradient_check(&param, &theta, 1e-4).unwrap() {
                worst = worst.max(row.relative_error);
                count += 1;
            }
        }
    }
    verdict(1, "gradient correctness", worst < 1e-5, format!("max rel. error {worst:.2e} over {count} coordinates"), start.elapsed(), Duration::from_secs(60));
}

fn polynomial(coeffs: &[C64]) -> CoefficientFunction {
    // highest degree first
    let d = coeffs.len() - 1;
    CoefficientFunction::linear_combination(coeffs.iter().enumerate().map(|(i, a)| (*a, CoefficientFunction::monomial((d - i) as u32))).collect())
        .unwrap()
}

fn from_roots(roots: &[C64], lead: C64) -> Vec<C64> {
    let mut p = vec![lead];
    for r in roots {
        let mut q = vec![c(0.0, 0.0); p.len() + 1];
        for (i, a) in p.iter().enumerate() {
            q[i] += a;
            q[i + 1] -= a * r;
        }
        p = q;
    }
    p
}

fn contour_residue(f: impl Fn(C64) -> C64, center: C64, radius: f64) -> C64 {
    let n = 256;
    let mut acc = c(0.0, 0.0);
    for k in 0..n {
        let e = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
        acc += f(center + e * radius) * e * radius;
    }
    acc / n as f64
}

#[test]
fn c02_residue_oracle() {
    let start = Instant::now();
    let mut g = SplitMix64::new(102);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let deg = 2 + g.next_u64() as usize % 4;
        let roots: Vec<C64> = (0..deg).map(|_| c(g.uniform_in(-3.0, 3.0), g.uniform_in(-3.0, 3.0))).collect();
        let h = polynomial(&from_roots(&roots, c(g.normal(), g.normal())));
        let num: Vec<C64> = (0..1 + g.next_u64() as usize % 4).map(|_| c(g.normal(), g.normal())).collect();
        let gf = polynomial(&num);
        let at = roots[0];
        let gap = roots[1..].iter().map(|z| (z - at).norm()).fold(f64::INFINITY, f64::min);
        let radius = 0.4 * gap;
        let simple = residue_simple(&gf, &h, at).unwrap();
        let double = residue_double(&gf, &h, at).unwrap();
        let want_simple = contour_residue(|s| gf.value(s) / h.value(s), at, radius);
        let want_double = contour_residue(|s| gf.value(s) / (h.value(s) * h.value(s)), at, radius);
        worst = worst.max((simple - want_simple).norm() / want_simple.norm());
        worst = worst.max((double - want_double).norm() / want_double.norm());
    }
    verdict(2, "residue oracle", worst < 1e-8, format!("max rel. error {worst:.2e} on 50 functions"), start.elapsed(), Duration::from_secs(5));
}

#[test]
fn c03_lambert_w_identity() {
    let start = Instant::now();
    let mut g = SplitMix64::new(103);
    let mut worst_w = 0.0f64;
    for _ in 0..200 {
        let z = C64::from_polar(10f64.powf(g.uniform_in(-3.0, 3.0)), g.uniform_in(-std::f64::consts::PI, std::f64::consts::PI));
        for k in -2..=2 {
            let w = lambert_w(k, z).unwrap();
            worst_w = worst_w.max((w * w.exp() - z).norm() / z.norm());
        }
    }
    let mut worst_pole = 0.0f64;
    let mut poles = 0;
    for _ in 0..50 {
        let mu = c(-g.uniform_in(0.5, 3.0), g.uniform_in(-2.0, 2.0));
        let sigma = c(g.uniform_in(-0.4, 0.4), g.uniform_in(-0.4, 0.4)) * mu.re.abs();
        let tau = g.uniform_in(0.2, 2.0);
        let set = delay_poles(mu, sigma, tau, 2).unwrap();
        for lam in set.poles {
            worst_pole = worst_pole.max((lam - mu - sigma * (-tau * lam).exp()).norm());
            poles += 1;
        }
    }
    let ok = worst_w < 1e-11 && worst_pole < 1e-10;
    verdict(3, "Lambert W identity", ok, format!("max |We^W − z|/|z| {worst_w:.2e}, max pole residual {worst_pole:.2e} over {poles} poles"), start.elapsed(), Duration::from_secs(5));
}

#[test]
fn c04_general_diagonal_specializes() {
    let start = Instant::now();
    let mut g = SplitMix64::new(104);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (m, p) = (1 + g.next_u64() as usize % 2, 1 + g.next_u64() as usize % 2);
        let fom = gen_random_stable(6, m, p, g.next_u64()).unwrap();
        let r = 1 + g.next_u64() as usize % 3;
        let poles: Vec<C64> = (0..r).map(|_| c(-g.uniform_in(0.3, 3.0), g.uniform_in(-3.0, 3.0))).collect();
        let rom = DiagonalStructuredROM::pole_residue(&poles, cmat(&mut g, r, m), cmat(&mut g, p, r)).unwrap();
        let u = residual_unstructured(&fom, &rom).unwrap();
        let d = residual_general_diag(&fom, &rom, &h2metric::rational_pole_sets(&rom).unwrap()).unwrap();
        for l in 0..r {
            // a_ℓ = s − λ_ℓ with terms (s, −1): the Hermite record of the `−1` term is −H′
            for (uid, did, dix, sign) in [("lti-right", "diag-right", vec![l], 1.0), ("lti-left", "diag-left", vec![l], 1.0), ("lti-hermite", "diag-hermite", vec![l, 1], -1.0)] {
                let a = residual(&u, uid, &[l]);
                let b = residual(&d, did, &dix) * c(sign, 0.0);
                worst = worst.max((&a - &b).norm() / (1.0 + a.norm()));
                worst = worst.max((u.get(uid, &[l]).unwrap().rel - d.get(did, &dix).unwrap().rel).abs());
            }
        }
    }
    verdict(4, "general diagonal conditions specialize", worst < 1e-10, format!("max discrepancy {worst:.2e} on 20 pairs"), start.elapsed(), Duration::from_secs(60));
}

fn reduce_opts(restarts: usize, seed: u64) -> ReduceOptions {
    ReduceOptions { restarts, seed, minimize: MinimizeOptions { grad_tol: 1e-9, ..MinimizeOptions::default() }, ..ReduceOptions::default() }
}

#[test]
fn c05_unstructured_optimize_then_certify() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut all_converged = true;
    for seed in 1..=5 {
        let fom = corpus(&format!("random-n10-s{seed}.json"));
        assert_eq!((fom.order(), fom.inputs(), fom.outputs()), (10, 1, 1));
        let out = reduce(&fom, Structure::Unstructured, 2, &reduce_opts(20, seed)).unwrap();
        all_converged &= out.best.converged();
        let rep = certify(&fom, &out.best.model).unwrap();
        worst = worst.max(max_rel(&rep, &["lti-right", "lti-left", "lti-hermite"]));
    }
    let ok = worst < 1e-6 && all_converged;
    verdict(5, "unstructured optimize-then-certify", ok, format!("max rel. residual {worst:.2e} on 5 FOMs, all converged: {all_converged}"), start.elapsed(), Duration::from_secs(600));
}

#[test]
fn c06_second_order_optimize_then_certify() {
    let start = Instant::now();
    let fom = corpus("msd-chain-3-s1.json");
    let out = reduce(&fom, Structure::SecondOrder, 1, &reduce_opts(10, 0)).unwrap();
    let Rom::SecondOrder(rom) = &out.best.model else { panic!("second-order reduction returned another structure") };
    let soc = residual_second_order(&fom, rom).unwrap();
    let sobh = residual_second_order_2d(&fom, rom).unwrap();
    let worst = max_rel(&soc, &["soc1", "soc2", "soc3", "soc4"]);
    let mut gap = 0.0f64;
    for i in 0..rom.order() {
        for (k, sign) in [(1, 1.0), (2, 1.0), (3, 1.0), (4, -1.0)] {
            let a = residual(&soc, &format!("soc{k}"), &[i]);
            let b = residual(&sobh, &format!("sobh{k}"), &[i]) * c(sign, 0.0);
            gap = gap.max((&a - &b).norm());
            gap = gap.max((soc.get(&format!("soc{k}"), &[i]).unwrap().rel - sobh.get(&format!("sobh{k}"), &[i]).unwrap().rel).abs());
        }
    }
    let ok = worst < 1e-5 && gap < 1e-12;
    verdict(6, "second-order optimize-then-certify", ok, format!("max rel. residual {worst:.2e}, soc/sobh gap {gap:.2e}"), start.elapsed(), Duration::from_secs(300));
}

#[test]
fn c07_ph_optimize_then_certify() {
    let start = Instant::now();
    let fom = corpus("ph-n8-s1.json");
    assert_eq!((fom.order(), fom.inputs()), (8, 1));
    let out = reduce(&fom, Structure::PortHamiltonian, 2, &reduce_opts(10, 0)).unwrap();
    let Rom::PortHamiltonian(rom) = &out.best.model else { panic!("pH reduction returned another structure") };
    let md = ph_modal_data(rom).unwrap();
    let rep = residual_ph_with(&fom, rom, &md).unwrap();
    let worst = max_rel(&rep, &["ph-pair", "ph-hermite", "ph-tangential"]);
    let a = rom.system_matrix();
    let normal = is_normal(&a);
    let worst_normal = max_rel(&rep, &["ph-normal-1", "ph-normal-2"]);

    let mut g = SplitMix64::new(107);
    let base = residual(&rep, "ph-tangential", &[]);
    let mut drift = 0.0f64;
    for _ in 0..10 {
        let mut t = md.t.clone();
        for j in 0..t.ncols() {
            let gamma = c(g.normal(), g.normal()) * 3.0;
            t.column_mut(j).iter_mut().for_each(|x| *x *= gamma);
        }
        let scaled = PhModalData::with_vectors(md.lambda.clone(), t, &rom.b, md.normal).unwrap();
        let again = residual_ph_with(&fom, rom, &scaled).unwrap();
        drift = drift.max((&base - residual(&again, "ph-tangential", &[])).norm() / (1.0 + base.norm()));
    }
    let ok = worst < 1e-5 && (!normal || worst_normal < 1e-5) && drift < 1e-10;
    verdict(
        7,
        "port-Hamiltonian optimize-then-certify",
        ok,
        format!("max rel. residual {worst:.2e}, J−R normal: {normal} ({worst_normal:.2e}), rescaling drift {drift:.2e}"),
        start.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn c08_delay_optimize_then_certify() {
    let start = Instant::now();
    let fom = corpus("delay-n6-s1.json");
    let Model::StateSpace(ss) = &fom else { panic!("delay FOMs are stored in state-space form") };
    assert_eq!(ss.delay.as_ref().map(|d| d.1), Some(0.5));
    let opts = ReduceOptions { params: ParamOptions { pairs: None, tau: Some(0.5) }, ..reduce_opts(10, 0) };
    let out = reduce(&fom, Structure::Delay, 1, &opts).unwrap();
    let Rom::Delay(rom) = &out.best.model else { panic!("delay reduction returned another structure") };
    let rep = residual_delay(&fom, rom, None).unwrap();
    let worst = max_rel(&rep, &["td-cond1", "td-cond2", "td-cond3", "td-cond4"]);
    let mut gap = 0.0f64;
    for i in 0..rom.order() {
        let sum = residual(&rep, "td-cond3", &[i]) + residual(&rep, "td-cond4", &[i]);
        let merged = residual(&rep, "td-merged", &[i]);
        gap = gap.max((sum - merged).norm() / rep.get("td-merged", &[i]).unwrap().scale);
    }
    let window = rep.truncation.as_ref().map(|t| t.window).unwrap_or(0);
    let ok = worst < 1e-4 && gap < 1e-12;
    verdict(8, "delay optimize-then-certify", ok, format!("max rel. residual {worst:.2e} (window {window}), merged gap {gap:.2e}"), start.elapsed(), Duration::from_secs(900));
}

#[test]
fn c09_metric_consistency() {
    let start = Instant::now();
    let mut g = SplitMix64::new(109);
    let mut worst_norm = 0.0f64;
    for i in 0..20 {
        let n = 1 + i % 20;
        let fom = gen_random_stable(n, 1 + i % 2, 1 + (i / 2) % 2, g.next_u64()).unwrap();
        let grid = auto_grid(&[&fom], &GridOptions::default()).unwrap();
        let quad = h2metric::h2_norm_sq_quadrature(&fom, &grid).unwrap().value.sqrt();
        let gram = h2metric::h2_norm_gramian(&fom).unwrap();
        worst_norm = worst_norm.max((quad - gram).abs() / gram);
    }
    let mut inner_ok = true;
    let mut worst_inner = 0.0f64;
    for _ in 0..20 {
        let fom = gen_random_stable(6, 2, 1, g.next_u64()).unwrap();
        let r = 3;
        let poles: Vec<C64> = (0..r).map(|_| c(-g.uniform_in(0.3, 3.0), g.uniform_in(-3.0, 3.0))).collect();
        let rom = DiagonalStructuredROM::pole_residue(&poles, cmat(&mut g, r, 2), cmat(&mut g, 1, r)).unwrap();
        let by_residues = h2metric::h2_inner_rational(&rom, &fom).unwrap();
        let grid = auto_grid(&[&fom as &dyn TransferEvaluator, &rom], &GridOptions::default()).unwrap();
        let vals: Vec<C64> = grid
            .nodes
            .iter()
            .map(|w| {
                let s = c(0.0, *w);
                (fom.eval(s).unwrap().adjoint() * rom.eval(s).unwrap()).trace()
            })
            .collect();
        let mut quad = c(0.0, 0.0);
        for (v, w) in vals.iter().zip(&grid.weights) {
            quad += v * *w;
        }
        quad /= 2.0 * std::f64::consts::PI;
        let edge = vals[0].norm().max(vals[vals.len() - 1].norm());
        let bound = grid.tail * edge + 1e-12 * (1.0 + by_residues.norm());
        let diff = (quad - by_residues).norm();
        worst_inner = worst_inner.max(diff);
        inner_ok &= diff <= bound;
    }
    let ok = worst_norm < 1e-4 && inner_ok;
    verdict(9, "metric consistency", ok, format!("max norm discrepancy {worst_norm:.2e}, max inner-product gap {worst_inner:.2e} (within tail bound: {inner_ok})"), start.elapsed(), Duration::from_secs(60));
}

#[test]
fn c10_self_certification() {
    let start = Instant::now();
    let mut g = SplitMix64::new(110);
    let mut worst_grad = 0.0f64;
    let mut worst_rep = 0.0f64;
    let mut seen = Vec::new();

    let ss = gen_random_stable(4, 2, 2, 11).unwrap();
    let chain = gen_msd_chain(3, 0.1, 0.05, 12).unwrap();
    let ph = gen_ph_random(3, 2, 13).unwrap();
    // one conjugate pair and one real mode
    let (mu0, s0) = (c(-g.uniform_in(0.8, 2.0), g.uniform_in(0.5, 1.5)), c(g.uniform_in(-0.3, 0.3), g.uniform_in(-0.3, 0.3)));
    let (b0, c0) = (c(g.normal(), g.normal()), c(g.normal(), g.normal()));
    let mu = vec![mu0, mu0.conj(), c(-g.uniform_in(0.8, 2.0), 0.0)];
    let sigma = vec![s0, s0.conj(), c(g.uniform_in(-0.3, 0.3), 0.0)];
    let bd = CMat::from_column_slice(3, 1, &[b0, b0.conj(), c(g.normal(), 0.0)]);
    let cd = CMat::from_row_slice(1, 3, &[c0, c0.conj(), c(g.normal(), 0.0)]);
    let delay = DelayROM::new(mu, sigma, 0.5, bd, cd).unwrap();

    let cases: Vec<(Model, Rom)> = vec![
        (Model::StateSpace(ss.clone()), unstructured_from_state_space(&ss).unwrap()),
        (Model::SecondOrder(chain.clone()), Rom::SecondOrder(second_order_modal(&chain).unwrap())),
        (Model::PortHamiltonian(ph.clone()), Rom::PortHamiltonian(ph)),
        (Model::Delay(delay.clone()), Rom::Delay(delay)),
    ];
    for (fom, rom) in &cases {
        let (pairs, tau) = match rom {
            Rom::Unstructured { pairs, .. } => (Some(*pairs), None),
            Rom::Delay(d) => (None, Some(d.tau)),
            _ => (None, None),
        };
        let param = make_parameterization(rom.structure(), rom.order(), fom.inputs(), fom.outputs(), &ParamOptions { pairs, tau }).unwrap();
        let theta = param.pack(rom).unwrap();
        let grid = auto_grid(&[fom as &dyn TransferEvaluator, rom], &GridOptions::default()).unwrap();
        let obj = Objective::new(fom, &param, grid).unwrap();
        let grad = obj.evaluate(&param, &theta).unwrap().grad_norm();
        let rep = certify(fom, rom).unwrap();
        worst_grad = worst_grad.max(grad);
        worst_rep = worst_rep.max(rep.max_relative());
        seen.push(rom.structure().tag());
    }
    let ok = worst_grad < 1e-10 && worst_rep < 1e-10;
    verdict(10, "self-certification", ok, format!("max gradient norm {worst_grad:.2e}, max rel. residual {worst_rep:.2e} over {}", seen.join("/")), start.elapsed(), Duration::from_secs(60));
}
