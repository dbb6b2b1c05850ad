use proptest::prelude::*;

use super::*;
use crate::h2metric::{auto_grid, build_grid, GridOptions};
use crate::linalg::frobenius;
use crate::rng::SplitMix64;
use crate::testutil::{random_ph, rmat, stable_fom};
use crate::wirtinger::five_point;

fn param(structure: Structure, r: usize, m: usize, p: usize, pairs: Option<usize>) -> Parameterization {
    make_parameterization(structure, r, m, p, &ParamOptions { pairs, tau: Some(0.5) }).unwrap()
}

/// Random `θ` with moderate poles and small delay coefficients.
fn random_theta(g: &mut SplitMix64, pr: &Parameterization) -> Vec<f64> {
    let mut t: Vec<f64> = (0..pr.dim()).map(|_| 0.6 * g.normal()).collect();
    if pr.structure == Structure::Delay {
        for b in pr.blocks() {
            let w = if b.pair { 2 } else { 1 };
            for j in 0..w {
                t[b.offset + w + j] *= 0.3;
            }
        }
    }
    t
}

fn all_params() -> Vec<Parameterization> {
    vec![
        param(Structure::Unstructured, 3, 1, 1, None),
        param(Structure::Unstructured, 2, 2, 2, Some(0)),
        param(Structure::Unstructured, 2, 2, 1, Some(1)),
        param(Structure::SecondOrder, 2, 1, 1, None),
        param(Structure::SecondOrder, 3, 2, 2, None),
        param(Structure::PortHamiltonian, 2, 1, 1, None),
        param(Structure::PortHamiltonian, 3, 2, 2, None),
        param(Structure::Delay, 1, 1, 1, None),
        param(Structure::Delay, 3, 1, 2, None),
    ]
}

fn transfer_gap(a: &dyn TransferEvaluator, b: &dyn TransferEvaluator) -> f64 {
    [0.0, 0.3, 1.7, 6.0]
        .iter()
        .map(|w| {
            let s = c(0.05, *w);
            frobenius(&(a.eval(s).unwrap() - b.eval(s).unwrap())) / frobenius(&a.eval(s).unwrap()).max(1e-300)
        })
        .fold(0.0, f64::max)
}

#[test]
fn dimensions() {
    assert_eq!(param(Structure::PortHamiltonian, 2, 1, 1, None).dim(), 6);
    assert_eq!(param(Structure::SecondOrder, 2, 1, 1, None).dim(), 8);
    assert_eq!(param(Structure::Unstructured, 2, 1, 1, None).dim(), 4);
    assert_eq!(param(Structure::Unstructured, 2, 1, 1, Some(0)).dim(), 4);
    assert_eq!(param(Structure::Unstructured, 3, 2, 2, None).dim(), (2 + 2 + 4) + (1 + 1 + 2));
    assert_eq!(param(Structure::Delay, 1, 1, 1, None).dim(), 3);
    assert!(make_parameterization(Structure::PortHamiltonian, 2, 1, 2, &ParamOptions::default()).is_err());
    assert!(make_parameterization(Structure::Delay, 2, 1, 1, &ParamOptions::default()).is_err());
    assert!(make_parameterization(Structure::Unstructured, 2, 1, 1, &ParamOptions { pairs: Some(2), tau: None }).is_err());
    assert!(make_parameterization(Structure::Unstructured, 0, 1, 1, &ParamOptions::default()).is_err());
    for s in Structure::ALL {
        assert_eq!(s.tag().parse::<Structure>().unwrap(), s);
        assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
    }
}

fn model_distance(a: &Rom, b: &Rom) -> f64 {
    let cd = |x: &CMat, y: &CMat| frobenius(&(x - y)) / frobenius(x).max(1.0);
    let rd = |x: &RMat, y: &RMat| (x - y).norm() / x.norm().max(1.0);
    let vd = |x: &[C64], y: &[C64]| x.iter().zip(y).map(|(u, v)| (u - v).norm() / u.norm().max(1.0)).fold(0.0, f64::max);
    match (a, b) {
        (Rom::Unstructured { rom: x, .. }, Rom::Unstructured { rom: y, .. }) => {
            vd(&x.first_order_poles().unwrap(), &y.first_order_poles().unwrap()).max(cd(&x.b, &y.b)).max(cd(&x.c, &y.c))
        }
        (Rom::SecondOrder(x), Rom::SecondOrder(y)) => rd(&x.to_fom().e, &y.to_fom().e)
            .max(rd(&x.to_fom().k, &y.to_fom().k))
            .max(rd(&x.b, &y.b))
            .max(rd(&x.c, &y.c)),
        (Rom::PortHamiltonian(x), Rom::PortHamiltonian(y)) => rd(&x.j, &y.j).max(rd(&x.r, &y.r)).max(rd(&x.b, &y.b)),
        (Rom::Delay(x), Rom::Delay(y)) => vd(&x.mu, &y.mu).max(vd(&x.sigma, &y.sigma)).max(cd(&x.b, &y.b)).max(cd(&x.c, &y.c)),
        _ => f64::INFINITY,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pack_unpack_round_trip(seed in any::<u64>(), which in 0usize..9) {
        let pr = &all_params()[which];
        let mut g = SplitMix64::new(seed);
        let theta = random_theta(&mut g, pr);
        let rom = pr.unpack(&theta).unwrap();
        let again = pr.unpack(&pr.pack(&rom).unwrap()).unwrap();
        prop_assert!(model_distance(&rom, &again) < 1e-14, "{}", model_distance(&rom, &again));
    }

    #[test]
    fn unpacked_models_are_feasible(seed in any::<u64>(), which in 0usize..9) {
        let pr = &all_params()[which];
        let mut g = SplitMix64::new(seed);
        let theta: Vec<f64> = (0..pr.dim()).map(|_| 2.0 * g.normal()).collect();
        match pr.unpack(&theta) {
            Ok(Rom::Unstructured { rom, .. }) => prop_assert!(rom.first_order_poles().unwrap().iter().all(|z| z.re < 0.0)),
            Ok(Rom::SecondOrder(so)) => prop_assert!(so.e.iter().chain(&so.k).all(|x| *x > 0.0)),
            Ok(Rom::PortHamiltonian(ph)) => {
                prop_assert!((&ph.j + ph.j.transpose()).norm() == 0.0);
                prop_assert!(nalgebra::SymmetricEigen::new(ph.r.clone()).eigenvalues.iter().all(|x| *x > 0.0));
            }
            Ok(Rom::Delay(d)) => {
                for i in 0..d.order() {
                    let ps = crate::spectra::delay_poles(d.mu[i], d.sigma[i], d.tau, 3).unwrap();
                    prop_assert!(ps.poles.iter().all(|z| z.re < 0.0));
                }
            }
            // delay parameters with an unstable principal pole are rejected
            Err(e) => prop_assert!(pr.structure == Structure::Delay && matches!(e, Error::UnstablePole(_)), "{e}"),
        }
    }
}

fn fom_for(g: &mut SplitMix64, pr: &Parameterization) -> Box<dyn TransferEvaluator> {
    match pr.structure {
        Structure::PortHamiltonian => Box::new(random_ph(g, 5, pr.m, 0.2)),
        _ => Box::new(stable_fom(g, 6, pr.m, pr.p)),
    }
}

#[test]
fn fast_path_matches_general_wirtinger_path() {
    let mut g = SplitMix64::new(11);
    for pr in all_params() {
        let fom = fom_for(&mut g, &pr);
        let grid = build_grid(1.3, 2048, 2).unwrap();
        let obj = Objective::new(fom.as_ref(), &pr, grid).unwrap();
        for _ in 0..3 {
            let theta = random_theta(&mut g, &pr);
            let fast = obj.evaluate(&pr, &theta).unwrap();
            let general = obj.evaluate_general(&pr, &theta).unwrap();
            let direct = obj.cost_direct(&pr.unpack(&theta).unwrap()).unwrap();
            assert!((fast.cost - general.cost).abs() <= 1e-12 * general.cost.max(1e-300), "{:?}", pr.structure);
            assert!((fast.cost - direct).abs() <= 1e-12 * direct);
            let scale = general.grad_norm().max(1e-300);
            for (a, b) in fast.gradient.iter().zip(&general.gradient) {
                assert!((a - b).abs() <= 1e-10 * scale, "{:?}: {a} vs {b}", pr.structure);
            }
        }
    }
}

#[test]
fn chain_rule_matches_finite_differences() {
    let mut g = SplitMix64::new(12);
    for pr in all_params() {
        let fom = fom_for(&mut g, &pr);
        let grid = build_grid(1.3, 2048, 2).unwrap();
        let obj = Objective::new(fom.as_ref(), &pr, grid).unwrap();
        let theta = random_theta(&mut g, &pr);
        let e = obj.evaluate(&pr, &theta).unwrap();
        let floor = 1e-8 * e.grad_norm();
        for k in 0..pr.dim() {
            let fd = five_point(
                |h| {
                    let mut t = theta.clone();
                    t[k] += h;
                    Ok(obj.evaluate(&pr, &t).unwrap().cost)
                },
                1e-4,
            )
            .unwrap();
            let rel = (fd - e.gradient[k]).abs() / fd.abs().max(e.gradient[k].abs()).max(floor);
            assert!(rel < 1e-5, "{:?} coordinate {k}: {} vs {fd}", pr.structure, e.gradient[k]);
        }
    }
}

#[test]
fn ph_fallback_for_defective_matrices() {
    // J − R with a Jordan block has no modal basis; the general path takes over
    let j = RMat::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0]);
    let r = RMat::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
    let ph = PHModel::new(j, r, RMat::from_row_slice(2, 1, &[1.0, 0.3])).unwrap();
    assert!(modal_basis(&RMat::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0])).is_none());
    let pr = param(Structure::PortHamiltonian, 2, 1, 1, None);
    let mut g = SplitMix64::new(13);
    let fom = stable_fom(&mut g, 4, 1, 1);
    let obj = Objective::new(&fom, &pr, build_grid(1.0, 1024, 2).unwrap()).unwrap();
    let theta = pr.pack(&Rom::PortHamiltonian(ph)).unwrap();
    let fast = obj.evaluate(&pr, &theta).unwrap();
    let general = obj.evaluate_general(&pr, &theta).unwrap();
    for (a, b) in fast.gradient.iter().zip(&general.gradient) {
        assert!((a - b).abs() < 1e-10 * general.grad_norm());
    }
}

#[test]
fn real_realization_preserves_the_transfer_function() {
    let mut g = SplitMix64::new(14);
    for pr in [param(Structure::Unstructured, 3, 2, 2, None), param(Structure::Unstructured, 4, 1, 1, None)] {
        let rom = pr.unpack(&random_theta(&mut g, &pr)).unwrap();
        let Model::StateSpace(ss) = rom.to_model() else { panic!("state-space file") };
        assert!(transfer_gap(&rom, &ss) < 1e-13);
        let back = Rom::from_model(Structure::Unstructured, &Model::StateSpace(ss)).unwrap();
        assert!(transfer_gap(&rom, &back) < 1e-11);
        let theta = pr.pack(&back).unwrap();
        assert!(transfer_gap(&rom, &pr.unpack(&theta).unwrap()) < 1e-11);
    }
}

fn rayleigh(g: &mut SplitMix64, n: usize) -> SecondOrderFOM {
    let q = rmat(g, n, n);
    let k = &q * q.transpose() + RMat::identity(n, n);
    let e = RMat::identity(n, n) * 0.3 + &k * 0.05;
    SecondOrderFOM::new(None, e, k, rmat(g, n, 1), rmat(g, 1, n)).unwrap()
}

#[test]
fn modal_form_reproduces_proportionally_damped_models() {
    let mut g = SplitMix64::new(15);
    let fom = rayleigh(&mut g, 4);
    let modal = second_order_modal(&fom).unwrap();
    assert!(transfer_gap(&fom, &modal) < 1e-12);
    let mut bad = fom.clone();
    bad.e[(0, 1)] += 0.3;
    bad.e[(1, 0)] += 0.3;
    assert!(second_order_modal(&bad).is_err());
}

fn assert_self_reduction(fom: &dyn TransferEvaluator, pr: &Parameterization, rom: &Rom) {
    let grid = auto_grid(&[fom], &GridOptions::default()).unwrap();
    let theta = pr.pack(rom).unwrap();
    let res = minimize(fom, pr, &theta, &grid, &MinimizeOptions::default()).unwrap();
    assert_eq!(res.termination, Termination::GradientTolerance, "{:?}", pr.structure);
    assert_eq!(res.iterations, 0);
    assert!(res.cost < 1e-12, "{}", res.cost);
}

#[test]
fn full_order_model_is_a_stationary_point() {
    let mut g = SplitMix64::new(16);
    let fom = stable_fom(&mut g, 4, 1, 1);
    let rom = unstructured_from_state_space(&fom).unwrap();
    let Rom::Unstructured { pairs, .. } = rom else { unreachable!() };
    assert_self_reduction(&fom, &param(Structure::Unstructured, 4, 1, 1, Some(pairs)), &rom);

    let so = rayleigh(&mut g, 3);
    assert_self_reduction(&so, &param(Structure::SecondOrder, 3, 1, 1, None), &Rom::SecondOrder(second_order_modal(&so).unwrap()));

    let ph = random_ph(&mut g, 3, 1, 0.3);
    assert_self_reduction(&ph, &param(Structure::PortHamiltonian, 3, 1, 1, None), &Rom::PortHamiltonian(ph.clone()));

    let d = DelayROM::new(vec![c(-1.0, 0.0)], vec![c(0.3, 0.0)], 0.5, CMat::from_element(1, 1, c(1.0, 0.0)), CMat::from_element(1, 1, c(0.7, 0.0))).unwrap();
    let pr = param(Structure::Delay, 1, 1, 1, None);
    let grid = build_grid(1.0, 4096, 2).unwrap();
    let res = minimize(&d, &pr, &pr.pack(&Rom::Delay(d.clone())).unwrap(), &grid, &MinimizeOptions::default()).unwrap();
    assert!(res.converged() && res.iterations == 0 && res.cost < 1e-12);
}

#[test]
fn unstable_delay_steps_are_rejected() {
    let pr = param(Structure::Delay, 1, 1, 1, None);
    // μ = −0.5, σ = 2: the principal pole is unstable
    let theta = vec![(0.5f64).ln(), 2.0, 1.0];
    assert!(matches!(pr.unpack(&theta), Err(Error::UnstablePole(_))));
    let fom = crate::testutil::first_order(1.0);
    let obj = Objective::new(&fom, &pr, build_grid(1.0, 1024, 2).unwrap()).unwrap();
    assert!(obj.evaluate(&pr, &theta).is_none());
    assert!(minimize_objective(&obj, &pr, &theta, &MinimizeOptions::default()).is_err());
}

#[test]
fn reduction_converges_and_certifies() {
    let mut g = SplitMix64::new(17);
    let fom = stable_fom(&mut g, 6, 1, 1);
    let opts = ReduceOptions { restarts: 4, seed: 3, ..Default::default() };
    let out = reduce(&fom, Structure::Unstructured, 2, &opts).unwrap();
    assert_eq!(out.runs.len(), 4);
    let best = &out.best;
    assert!(best.converged(), "{:?} {}", best.termination, best.grad_norm);
    for w in best.trace.windows(2) {
        assert!(w[1].cost <= w[0].cost);
    }
    let report = certify(&fom, &best.model).unwrap();
    assert!(report.passed(1e-6), "{}", report.table(1e-6));
    // the objective's cost agrees with an independent quadrature of the result
    let direct = crate::h2metric::h2_error_quadrature(&fom, &best.model, &out.grid).unwrap().value;
    assert!((direct - best.cost).abs() < 1e-12 * direct.max(1e-300));
}

#[test]
fn second_order_reduction_of_a_rayleigh_model() {
    let mut g = SplitMix64::new(18);
    let fom = rayleigh(&mut g, 3);
    let out = reduce(&fom, Structure::SecondOrder, 1, &ReduceOptions { restarts: 4, seed: 1, ..Default::default() }).unwrap();
    assert!(out.best.converged(), "{}", out.best.grad_norm);
    let report = certify(&fom, &out.best.model).unwrap();
    assert!(report.passed(1e-5), "{}", report.table(1e-5));
}

#[test]
fn ph_reduction_certifies() {
    let mut g = SplitMix64::new(19);
    let fom = random_ph(&mut g, 6, 1, 0.1);
    let out = reduce(&fom, Structure::PortHamiltonian, 2, &ReduceOptions { restarts: 4, seed: 2, ..Default::default() }).unwrap();
    assert!(out.best.converged(), "{}", out.best.grad_norm);
    let report = certify(&fom, &out.best.model).unwrap();
    assert!(report.passed(1e-5), "{}", report.table(1e-5));
}

#[test]
fn optimize_result_json_omits_the_model() {
    let mut g = SplitMix64::new(20);
    let fom = stable_fom(&mut g, 4, 1, 1);
    let out = reduce(&fom, Structure::Unstructured, 1, &ReduceOptions { restarts: 2, ..Default::default() }).unwrap();
    let v: serde_json::Value = serde_json::to_value(&out.best).unwrap();
    assert_eq!(v["structure"], "unstructured");
    assert!(v["trace"].as_array().unwrap().len() == out.best.trace.len());
    assert!(v.get("model").is_none());
    assert!(["gradient-tolerance", "max-iterations", "line-search-failure"].contains(&v["termination"].as_str().unwrap()));
}

#[test]
fn packing_rejects_models_outside_the_family() {
    // two unrelated complex modes are not a real system with a conjugate pair
    let cm = |v: &[C64], r, k| CMat::from_column_slice(r, k, v);
    let mu = vec![c(-1.0, 0.5), c(-2.0, 1.0)];
    let d = DelayROM::new(mu, vec![c(0.1, 0.0); 2], 0.5, cm(&[c(1.0, 0.0); 2], 2, 1), cm(&[c(1.0, 0.0); 2], 1, 2)).unwrap();
    let pr = param(Structure::Delay, 2, 1, 1, Some(1));
    assert!(matches!(pr.pack(&Rom::Delay(d)), Err(Error::UnsupportedStructure(_))));

    let mut g = SplitMix64::new(31);
    let theta = random_theta(&mut g, &pr);
    let back = pr.pack(&pr.unpack(&theta).unwrap()).unwrap();
    assert!(back.iter().zip(&theta).all(|(a, b)| (a - b).abs() < 1e-12));
}
