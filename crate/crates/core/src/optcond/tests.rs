use proptest::prelude::*;

use super::*;
use crate::h2metric::{auto_grid, build_grid, rational_pole_sets, GridOptions, DELAY_NODES};
use crate::linalg::{to_complex, RMat};
use crate::rng::SplitMix64;
use crate::spectra::delay_poles;
use crate::sysmodel::{state_space_to_diagonal, DelayROM, SecondOrderFOM, StateSpaceFOM, ZeroTransfer};
use crate::testutil::{cmat, random_ph, random_pole_residue, rmat, stable_fom};
use crate::wirtinger::gradients;

fn random_so_rom(g: &mut SplitMix64, r: usize, m: usize, p: usize) -> SecondOrderROM {
    let e = (0..r).map(|_| g.uniform_in(0.2, 1.5)).collect();
    let k = (0..r).map(|_| g.uniform_in(0.5, 4.0)).collect();
    SecondOrderROM::new(e, k, rmat(g, r, m), rmat(g, p, r)).unwrap()
}

fn rayleigh_fom(g: &mut SplitMix64, n: usize) -> SecondOrderFOM {
    let q = rmat(g, n, n);
    let k = &q * q.transpose() + RMat::identity(n, n);
    let e = RMat::identity(n, n) * 0.3 + &k * 0.05;
    SecondOrderFOM::new(None, e, k, rmat(g, n, 1), rmat(g, 1, n)).unwrap()
}

fn delay_fom(g: &mut SplitMix64, n: usize, tau: f64) -> StateSpaceFOM {
    let base = stable_fom(g, n, 1, 1);
    let ad = rmat(g, n, n);
    let ad = &ad * (0.3 * base.a.norm() / ad.norm() * 0.3);
    StateSpaceFOM::new(None, base.a.clone(), base.b.clone(), base.c.clone(), Some((ad, tau))).unwrap()
}

fn assert_zero(report: &ConditionReport, tol: f64) {
    assert!(!report.records.is_empty());
    for r in &report.records {
        assert!(r.rel < tol, "{} {:?}: rel {} abs {}", r.id, r.index, r.rel, r.abs);
    }
}

fn residual_of(report: &ConditionReport, id: &str, index: &[usize]) -> CMat {
    let r = report.get(id, index).unwrap_or_else(|| panic!("missing {id} {index:?}"));
    CMat::from_column_slice(r.residual.len(), 1, &r.residual)
}

#[test]
fn record_normalization() {
    let l = CMat::from_element(1, 1, c(3.0, 0.0));
    let r = CMat::from_element(1, 1, c(0.0, 4.0));
    let rec = ConditionRecord::from_sides("x", vec![0], &l, &r);
    assert!((rec.abs - 5.0).abs() < 1e-15);
    assert!((rec.scale - 7.0).abs() < 1e-12);
    assert!((rec.rel - 5.0 / 7.0).abs() < 1e-12);
    assert_eq!(rec.residual, vec![c(3.0, -4.0)]);
    let z = CMat::zeros(2, 1);
    let rec = ConditionRecord::from_sides("z", vec![], &z, &z);
    assert_eq!((rec.abs, rec.rel), (0.0, 0.0));
}

#[test]
fn report_verdict_json_and_table() {
    let l = CMat::from_element(1, 1, c(1.0, 0.0));
    let r = CMat::from_element(1, 1, c(1.0 + 1e-7, 0.0));
    let rep = ConditionReport::new(ConditionFamily::SecondOrder, vec![ConditionRecord::from_sides("soc1", vec![0], &l, &r)]);
    assert!(rep.passed(1e-6) && !rep.passed(1e-8));
    let back: ConditionReport = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(back, rep);
    assert!(rep.to_json().contains("\"second-order\""));
    let t = rep.table(1e-8);
    assert!(t.contains("soc1") && t.contains("FAIL") && t.lines().count() == 3);
}

#[test]
fn unstructured_self_certification_and_failure() {
    let mut g = SplitMix64::new(11);
    let fom = stable_fom(&mut g, 4, 2, 2);
    let d = state_space_to_diagonal(&fom).unwrap().rom;
    let rep = residual_unstructured(&fom, &d).unwrap();
    assert_eq!(rep.records.len(), 12);
    assert_zero(&rep, 1e-10);

    let rom = random_pole_residue(&mut g, 2, 2, 2);
    let rep = residual_unstructured(&fom, &rom).unwrap();
    assert!(rep.max_relative() > 1e-2 && !rep.passed(1e-6));
}

#[test]
fn unstructured_rejects_bad_roms() {
    let one = CMat::from_element(2, 1, c(1.0, 0.0));
    let row = CMat::from_element(1, 2, c(1.0, 0.0));
    let z = ZeroTransfer { outputs: 1, inputs: 1 };
    let same = DiagonalStructuredROM::pole_residue(&[c(-1.0, 0.0), c(-1.0, 0.0)], one.clone(), row.clone()).unwrap();
    assert!(matches!(residual_unstructured(&z, &same), Err(Error::DisjointnessViolation { first: 0, second: 1 })));
    let unstable = DiagonalStructuredROM::pole_residue(&[c(-1.0, 0.0), c(0.5, 0.0)], one.clone(), row.clone()).unwrap();
    assert!(matches!(residual_unstructured(&z, &unstable), Err(Error::UnstablePole(_))));
    let so = random_so_rom(&mut SplitMix64::new(1), 2, 1, 1).to_diagonal();
    assert!(matches!(residual_unstructured(&z, &so), Err(Error::UnsupportedStructure(_))));
}

#[test]
fn general_diag_reduces_to_unstructured() {
    let mut g = SplitMix64::new(12);
    for _ in 0..20 {
        let fom = stable_fom(&mut g, 6, 2, 1);
        let rom = random_pole_residue(&mut g, 3, 2, 1);
        let u = residual_unstructured(&fom, &rom).unwrap();
        let d = residual_general_diag(&fom, &rom, &rational_pole_sets(&rom).unwrap()).unwrap();
        for l in 0..3 {
            // a_ℓ = s − λ: a' = 1, a'' = 0, and the `−1` term carries −H'
            let pairs = [("lti-right", "diag-right", vec![l], 1.0), ("lti-left", "diag-left", vec![l], 1.0), ("lti-hermite", "diag-hermite", vec![l, 1], -1.0)];
            for (uid, did, dix, sign) in pairs {
                let a = residual_of(&u, uid, &[l]);
                let b = residual_of(&d, did, &dix) * c(sign, 0.0);
                assert!((&a - &b).norm() <= 1e-10 * (1.0 + a.norm()), "{uid}");
                let (ra, rb) = (u.get(uid, &[l]).unwrap(), d.get(did, &dix).unwrap());
                assert!((ra.rel - rb.rel).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn general_diag_self_certification_and_disjointness() {
    let mut g = SplitMix64::new(13);
    let rom = random_so_rom(&mut g, 2, 1, 2);
    let diag = rom.to_diagonal();
    let sets = rational_pole_sets(&diag).unwrap();
    assert_zero(&residual_general_diag(&rom.to_fom(), &diag, &sets).unwrap(), 1e-10);
    let mut dup = sets.clone();
    dup[1].poles[0] = dup[0].poles[1];
    assert!(matches!(residual_general_diag(&rom, &diag, &dup), Err(Error::DisjointnessViolation { first: 0, second: 1 })));
}

#[test]
fn quadratic_hermite_matches_second_order_combination() {
    let mut g = SplitMix64::new(14);
    for _ in 0..10 {
        let fom = rayleigh_fom(&mut g, 5);
        let rom = random_so_rom(&mut g, 2, 1, 1);
        let diag = rom.to_diagonal();
        let rep = residual_general_diag(&fom, &diag, &rational_pole_sets(&diag).unwrap()).unwrap();
        let (plus, minus) = second_order_factorization(&rom).unwrap();
        for i in 0..2 {
            let kappa = 1.0 / (plus[i] - minus[i]);
            let kb = kappa.conj();
            let (sp, sm) = (-plus[i].conj(), -minus[i].conj());
            let side = |t: &dyn TransferEvaluator| {
                (t.eval_derivative(sp).unwrap() + t.eval_derivative(sm).unwrap()) * (kb * kb)
                    + (t.eval(sp).unwrap() - t.eval(sm).unwrap()) * (2.0 * kb * kb * kb)
            };
            let bv = CVec::from_iterator(1, rom.b.row(i).iter().map(|x| c(*x, 0.0)));
            let cv = CVec::from_iterator(1, rom.c.column(i).iter().map(|x| c(*x, 0.0)));
            let want = bi(&cv, &side(&fom), &bv) - bi(&cv, &side(&rom), &bv);
            let got = residual_of(&rep, "diag-hermite", &[i, 2]);
            assert!((&want - &got).norm() < 1e-10 * (1.0 + want.norm()), "{want} vs {got}");
        }
    }
}

#[test]
fn second_order_self_certification_and_failure() {
    let mut g = SplitMix64::new(15);
    let rom = random_so_rom(&mut g, 3, 2, 2);
    let fom = rom.to_fom();
    let a = residual_second_order(&fom, &rom).unwrap();
    let b = residual_second_order_2d(&fom, &rom).unwrap();
    assert_eq!((a.records.len(), b.records.len()), (12, 12));
    assert_zero(&a, 1e-10);
    assert_zero(&b, 1e-10);
    let other = rayleigh_fom(&mut g, 4);
    let small = random_so_rom(&mut g, 1, 1, 1);
    assert!(!residual_second_order(&other, &small).unwrap().passed(1e-3));
}

#[test]
fn second_order_sobh4_is_negated_soc4() {
    let mut g = SplitMix64::new(16);
    let fom = rayleigh_fom(&mut g, 4);
    let rom = random_so_rom(&mut g, 2, 1, 1);
    let a = residual_second_order(&fom, &rom).unwrap();
    let b = residual_second_order_2d(&fom, &rom).unwrap();
    for i in 0..2 {
        for k in 1..=3 {
            assert_eq!(residual_of(&a, &format!("soc{k}"), &[i]), residual_of(&b, &format!("sobh{k}"), &[i]));
        }
        assert_eq!(residual_of(&a, "soc4", &[i]), -residual_of(&b, "sobh4", &[i]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn soc_and_sobh_agree_record_for_record(seed in any::<u64>(), r in 1usize..4) {
        let mut g = SplitMix64::new(seed);
        let fom = rayleigh_fom(&mut g, 5);
        let rom = random_so_rom(&mut g, r, 1, 1);
        let a = residual_second_order(&fom, &rom).unwrap();
        let b = residual_second_order_2d(&fom, &rom).unwrap();
        prop_assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            prop_assert!((x.abs - y.abs).abs() < 1e-12);
            prop_assert!((x.rel - y.rel).abs() < 1e-12);
            prop_assert_eq!(&x.index, &y.index);
        }
    }

    #[test]
    fn relative_residuals_are_bounded_by_one(seed in any::<u64>()) {
        let mut g = SplitMix64::new(seed);
        let fom = stable_fom(&mut g, 4, 1, 2);
        let rom = random_pole_residue(&mut g, 2, 1, 2);
        let rep = residual_general_diag(&fom, &rom, &rational_pole_sets(&rom).unwrap()).unwrap();
        for rec in &rep.records {
            prop_assert!(rec.rel >= 0.0 && rec.rel <= 1.0 + 1e-15);
            prop_assert!(rec.abs <= rec.scale);
        }
    }
}

#[test]
fn l2_stationarity_matches_gradient_norms() {
    let mut g = SplitMix64::new(17);
    let fom = stable_fom(&mut g, 5, 2, 1);
    let mut models = vec![fom.to_param_sep(), random_pole_residue(&mut g, 3, 2, 1).to_param_sep()];
    let mut a = cmat(&mut g, 2, 2) * c(0.3, 0.0);
    a[(0, 0)] -= 1.2;
    a[(1, 1)] -= 0.8;
    models.push(ParamSepModel::new(
        vec![(crate::scalarfun::CoefficientFunction::monomial(1), CMat::identity(2, 2)), (crate::scalarfun::CoefficientFunction::real(-1.0), a)],
        vec![(crate::scalarfun::CoefficientFunction::one(), cmat(&mut g, 2, 2))],
        vec![(crate::scalarfun::CoefficientFunction::one(), cmat(&mut g, 1, 2))],
    )
    .unwrap());
    let grid = build_grid(1.5, 2048, 2).unwrap();
    for (n, rom) in models.iter().enumerate() {
        let rep = residual_l2_stationarity(&fom, rom, &grid).unwrap();
        let gb = gradients(&fom, rom, &grid).unwrap();
        let check = |id: &str, mats: &[CMat], sign: f64| {
            for (t, m) in mats.iter().enumerate() {
                let rec = rep.get(id, &[t]).unwrap();
                assert!((rec.abs - m.norm()).abs() <= 1e-10 * (1.0 + m.norm()), "{id}[{t}]");
                let res = CMat::from_column_slice(m.nrows(), m.ncols(), &rec.residual);
                assert!((res * c(sign, 0.0) - m).norm() <= 1e-10 * (1.0 + m.norm()));
            }
        };
        check("cond-A", &gb.d_a, 1.0);
        check("cond-B", &gb.d_b, -1.0);
        check("cond-C", &gb.d_c, -1.0);
        if n == 0 {
            assert!(rep.max_absolute() < 1e-12);
        }
        let has_diag = rep.with_id("cond-A-diag").count();
        assert_eq!(has_diag, if n == 1 { 2 * 3 } else { 0 });
        if n == 1 {
            let restricted = crate::wirtinger::diag_restrict(&gb);
            for t in 0..2 {
                for d in 0..3 {
                    let got = residual_of(&rep, "cond-A-diag", &[t, d])[(0, 0)];
                    assert!((got - restricted.d_a[t][(d, d)]).norm() < 1e-10 * (1.0 + got.norm()));
                }
            }
        }
    }
}

#[test]
fn diagonal_gradients_are_negated_residuals() {
    let mut g = SplitMix64::new(18);
    let fom = stable_fom(&mut g, 6, 2, 2);
    let rom = random_pole_residue(&mut g, 3, 2, 2);
    let grid = auto_grid(&[&fom, &rom], &GridOptions { nodes: Some(8192), ..Default::default() }).unwrap();
    let gb = gradients(&fom, &rom.to_param_sep(), &grid).unwrap();
    let rep = residual_general_diag(&fom, &rom, &rational_pole_sets(&rom).unwrap()).unwrap();
    let scale = gb.norm();
    for l in 0..3 {
        let dc = gb.d_c[0].column(l).into_owned();
        assert!((&dc + residual_of(&rep, "diag-right", &[l]).column(0)).norm() < 1e-8 * scale);
        let db = gb.d_b[0].row(l).transpose();
        assert!((db + residual_of(&rep, "diag-left", &[l]).column(0)).norm() < 1e-8 * scale);
        for i in 0..2 {
            let want = -residual_of(&rep, "diag-hermite", &[l, i])[(0, 0)];
            assert!((gb.d_a[i][(l, l)] - want).norm() < 1e-8 * scale);
        }
    }
}

#[test]
fn ph_self_certification_and_record_counts() {
    let mut g = SplitMix64::new(19);
    let model = random_ph(&mut g, 3, 2, 0.2);
    let rep = residual_ph(&model, &model).unwrap();
    assert_eq!(rep.with_id("ph-pair").count(), 9);
    assert_eq!(rep.with_id("ph-hermite").count(), 3);
    assert_eq!(rep.with_id("ph-tangential").count(), 1);
    assert_zero(&rep, 1e-10);
    for i in 0..3 {
        assert_eq!(rep.get("ph-pair", &[i, i]).unwrap().abs, 0.0);
    }

    let fom = random_ph(&mut g, 6, 2, 0.2);
    assert!(!residual_ph(&fom, &model).unwrap().passed(1e-3));
}

#[test]
fn ph_normal_records_and_g_form() {
    // J − R normal: R = ρI commutes with any skew J
    let mut g = SplitMix64::new(20);
    let q = rmat(&mut g, 3, 3);
    let model = PHModel::new((&q - q.transpose()) * 0.5, RMat::identity(3, 3) * 0.4, rmat(&mut g, 3, 1)).unwrap();
    let fom = random_ph(&mut g, 5, 1, 0.3);
    let rep = residual_ph(&fom, &model).unwrap();
    assert_eq!(rep.with_id("ph-normal-1").count(), 3);
    for i in 0..3 {
        assert_eq!(residual_of(&rep, "ph-normal-1", &[i]), residual_of(&rep, "phg1", &[i]));
        assert_eq!(residual_of(&rep, "ph-normal-2", &[i]), residual_of(&rep, "phg3", &[i]));
        let (a, b) = (rep.get("phg1", &[i]).unwrap(), rep.get("phg2", &[i]).unwrap());
        assert!((a.abs - b.abs).abs() < 1e-14 * (1.0 + a.abs));
        // c_i = b_i when T is unitary
        let md = ph_modal_data(&model).unwrap();
        assert!((&md.c[i] - &md.b[i]).norm() < 1e-10);
    }
    assert_zero(&residual_ph(&model, &model).unwrap(), 1e-10);
    assert_eq!(residual_ph(&fom, &fom).unwrap().with_id("ph-normal-1").count(), 0);
}

#[test]
fn ph_tangential_invariant_under_eigenvector_scaling() {
    let mut g = SplitMix64::new(21);
    let fom = random_ph(&mut g, 6, 1, 0.2);
    let model = random_ph(&mut g, 3, 1, 0.2);
    let md = ph_modal_data(&model).unwrap();
    let base = residual_ph_with(&fom, &model, &md).unwrap();
    for _ in 0..5 {
        let mut t = md.t.clone();
        for j in 0..3 {
            let gamma = c(g.normal(), g.normal()) * 3.0;
            for x in t.column_mut(j).iter_mut() {
                *x *= gamma;
            }
        }
        let md2 = PhModalData::with_vectors(md.lambda.clone(), t, &model.b, md.normal).unwrap();
        let rep = residual_ph_with(&fom, &model, &md2).unwrap();
        let (a, b) = (base.get("ph-tangential", &[]).unwrap(), rep.get("ph-tangential", &[]).unwrap());
        let da: CMat = CMat::from_column_slice(a.residual.len(), 1, &a.residual);
        let db: CMat = CMat::from_column_slice(b.residual.len(), 1, &b.residual);
        assert!((da - db).norm() < 1e-10 * (1.0 + a.abs));
        assert!((a.rel - b.rel).abs() < 1e-10);
    }
}

#[test]
fn ph_tangential_is_the_b_gradient() {
    let mut g = SplitMix64::new(22);
    let fom = random_ph(&mut g, 5, 2, 0.3);
    let model = random_ph(&mut g, 2, 2, 0.3);
    let grid = build_grid(1.5, 8192, 2).unwrap();
    let gb = gradients(&fom, &model.to_param_sep(), &grid).unwrap();
    let want = -(&gb.d_c[0] + gb.d_b[0].adjoint());
    let rep = residual_ph(&fom, &model).unwrap();
    let rec = rep.get("ph-tangential", &[]).unwrap();
    let got = CMat::from_column_slice(2, 2, &rec.residual);
    assert!((&got - &want).norm() < 1e-8 * (1.0 + want.norm()), "{got} vs {want}");
}

fn random_delay_rom(g: &mut SplitMix64, r: usize, tau: f64) -> DelayROM {
    let mu = (0..r).map(|_| c(-g.uniform_in(0.8, 2.0), 0.0)).collect();
    let sigma = (0..r).map(|_| c(g.uniform_in(-0.4, 0.4), 0.0)).collect();
    DelayROM::new(mu, sigma, tau, to_complex(&rmat(g, r, 1)), to_complex(&rmat(g, 1, r))).unwrap()
}

#[test]
fn delay_merged_is_sum_of_hermite_pair() {
    let mut g = SplitMix64::new(23);
    let fom = delay_fom(&mut g, 4, 0.5);
    let rom = random_delay_rom(&mut g, 2, 0.5);
    for window in [Some(16), None] {
        let rep = residual_delay(&fom, &rom, window).unwrap();
        assert_eq!(rep.records.len(), 10);
        let t = rep.truncation.as_ref().unwrap();
        assert_eq!(t.extrapolated, window.is_none());
        for i in 0..2 {
            let sum = residual_of(&rep, "td-cond3", &[i]) + residual_of(&rep, "td-cond4", &[i]);
            let merged = residual_of(&rep, "td-merged", &[i]);
            let scale = rep.get("td-merged", &[i]).unwrap().scale;
            assert!((sum - merged).norm() < 1e-12 * scale);
        }
    }
}

#[test]
fn delay_without_delay_term_is_unstructured() {
    let mut g = SplitMix64::new(24);
    let fom = stable_fom(&mut g, 4, 1, 1);
    let rom = DelayROM::new(vec![c(-0.7, 0.0), c(-1.9, 0.0)], vec![c(0.0, 0.0); 2], 0.5, cmat(&mut g, 2, 1), cmat(&mut g, 1, 2)).unwrap();
    let rep = residual_delay(&fom, &rom, None).unwrap();
    assert!(rep.truncation.is_none());
    let pr = DiagonalStructuredROM::pole_residue(&rom.mu, rom.b.clone(), rom.c.clone()).unwrap();
    let u = residual_unstructured(&fom, &pr).unwrap();
    for i in 0..2 {
        assert!((residual_of(&rep, "td-cond1", &[i]) - residual_of(&u, "lti-right", &[i])).norm() < 1e-12);
        assert!((residual_of(&rep, "td-cond2", &[i]) - residual_of(&u, "lti-left", &[i])).norm() < 1e-12);
        assert!((residual_of(&rep, "td-cond3", &[i]) - residual_of(&u, "lti-hermite", &[i])).norm() < 1e-12);
        assert!(rep.get("td-cond4", &[i]).unwrap().abs < 1e-14);
    }

    // the same first-order system as its own ROM
    let a = RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![-0.7, -1.9]));
    let b = rmat(&mut g, 2, 1);
    let cm = rmat(&mut g, 1, 2);
    let own = StateSpaceFOM::new(None, a, b.clone(), cm.clone(), None).unwrap();
    let rom = DelayROM::new(vec![c(-0.7, 0.0), c(-1.9, 0.0)], vec![c(0.0, 0.0); 2], 0.5, to_complex(&b), to_complex(&cm)).unwrap();
    assert_zero(&residual_delay(&own, &rom, None).unwrap(), 1e-10);
}

#[test]
fn delay_self_certification() {
    let mut g = SplitMix64::new(25);
    let rom = random_delay_rom(&mut g, 2, 0.5);
    let a = RMat::from_diagonal(&nalgebra::DVector::from_iterator(2, rom.mu.iter().map(|z| z.re)));
    let ad = RMat::from_diagonal(&nalgebra::DVector::from_iterator(2, rom.sigma.iter().map(|z| z.re)));
    let own = StateSpaceFOM::new(None, a, crate::linalg::real_part(&rom.b), crate::linalg::real_part(&rom.c), Some((ad, 0.5))).unwrap();
    assert_zero(&residual_delay(&own, &rom, Some(32)).unwrap(), 1e-10);
    assert_zero(&residual_delay(&own, &rom, None).unwrap(), 1e-10);
}

#[test]
fn delay_conditions_match_general_diagonal_form() {
    let mut g = SplitMix64::new(26);
    let fom = delay_fom(&mut g, 3, 0.5);
    let rom = random_delay_rom(&mut g, 2, 0.5);
    let window = 12;
    let sets: Vec<PoleSet> = (0..2)
        .map(|l| {
            let mut s = delay_poles(rom.mu[l], rom.sigma[l], rom.tau, window).unwrap();
            s.index = l;
            s
        })
        .collect();
    let general = residual_general_diag(&fom, &rom.to_diagonal(), &sets).unwrap();
    let td = residual_delay(&fom, &rom, Some(window)).unwrap();
    for l in 0..2 {
        let close = |a: CMat, b: CMat| assert!((&a - &b).norm() < 1e-9 * (1.0 + a.norm()), "{a} vs {b}");
        close(residual_of(&general, "diag-right", &[l]), residual_of(&td, "td-cond1", &[l]));
        close(residual_of(&general, "diag-left", &[l]), residual_of(&td, "td-cond2", &[l]));
        close(residual_of(&general, "diag-hermite", &[l, 1]), -residual_of(&td, "td-cond3", &[l]));
        let ts = (rom.sigma[l] * rom.tau).conj();
        close(residual_of(&general, "diag-hermite", &[l, 2]) * ts, -residual_of(&td, "td-cond4", &[l]));
    }
}

#[test]
fn delay_adaptive_sums_match_quadrature_gradients() {
    let mut g = SplitMix64::new(27);
    let fom = delay_fom(&mut g, 3, 0.5);
    let rom = random_delay_rom(&mut g, 1, 0.5);
    let grid = auto_grid(&[&fom, &rom], &GridOptions { nodes: Some(DELAY_NODES), ..Default::default() }).unwrap();
    let gb = gradients(&fom, &rom.to_diagonal().to_param_sep(), &grid).unwrap();
    let rep = residual_delay(&fom, &rom, None).unwrap();
    let tol = 1e-5 * gb.norm();
    let td = |id: &str| residual_of(&rep, id, &[0])[(0, 0)];
    assert!((gb.d_c[0][(0, 0)] + td("td-cond1")).norm() < tol);
    assert!((gb.d_b[0][(0, 0)] + td("td-cond2")).norm() < tol);
    assert!((gb.d_a[1][(0, 0)] - td("td-cond3")).norm() < tol);
    let ts = (rom.sigma[0] * rom.tau).conj();
    assert!((gb.d_a[2][(0, 0)] * ts - td("td-cond4")).norm() < tol * ts.norm().max(1.0));
}

