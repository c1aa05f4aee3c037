mod common;

use blocksweep::anova::{build_table, expected_ss, projector_ss, Layout};
use blocksweep::fdist::f_upper_tail;
use blocksweep::model::{indicator_matrix, sweep_mean, Factor};
use blocksweep::spectral::projector_from_design;
use blocksweep::sweep::sequential_sweep;
use blocksweep::{BlockDesign, DenseMatrix, Error, ModelTerm};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn terms(d: &BlockDesign) -> Vec<ModelTerm> {
    vec![
        indicator_matrix(&d.block_factor(), d.n).unwrap(),
        indicator_matrix(&d.treatment_factor(), d.n).unwrap(),
    ]
}

fn quad(p: &DMatrix<f64>, y: &[f64]) -> f64 {
    let v = DVector::from_column_slice(y);
    (v.transpose() * p * &v)[(0, 0)]
}

#[test]
fn f_tail_matches_quadrature_on_the_grid() {
    for (f, d1, d2) in f_grid() {
        let ours = f_upper_tail(f, d1, d2).unwrap();
        let oracle = f_tail_quadrature(f, d1, d2);
        assert!(
            (ours - oracle).abs() < 1e-6,
            "F({d1},{d2}) at {f}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn f_tail_special_values() {
    assert!((f_upper_tail(1.0, 1, 1).unwrap() - 0.5).abs() < 1e-10);
    // F(d, d) has median 1
    for d in 1..20 {
        assert!((f_upper_tail(1.0, d, d).unwrap() - 0.5).abs() < 1e-10);
    }
    assert_eq!(f_upper_tail(0.0, 3, 4).unwrap(), 1.0);
    assert_eq!(f_upper_tail(f64::INFINITY, 3, 4).unwrap(), 0.0);
    assert!(matches!(f_upper_tail(1.0, 0, 4), Err(Error::InvalidDf { .. })));
}

proptest! {
    #[test]
    fn f_tail_reciprocal_symmetry(f in 0.01f64..50.0, d1 in 1usize..30, d2 in 1usize..30) {
        let a = f_upper_tail(f, d1, d2).unwrap();
        let b = f_upper_tail(1.0 / f, d2, d1).unwrap();
        prop_assert!((a - (1.0 - b)).abs() < 1e-12);
    }

    #[test]
    fn f_tail_is_decreasing(f in 0.01f64..50.0, step in 0.01f64..5.0, d1 in 1usize..30, d2 in 1usize..30) {
        let a = f_upper_tail(f, d1, d2).unwrap();
        let b = f_upper_tail(f + step, d1, d2).unwrap();
        prop_assert!(b <= a + 1e-15);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn pairs_strata_and_oracle() {
    let d = pairs();
    let y = [10.2, 11.9, 9.4, 12.8, 10.1, 12.3, 11.0, 13.5];
    let ystar = sweep_mean(&y).unwrap();
    let out = sequential_sweep(&terms(&d), &ystar, tol()).unwrap();
    let table = build_table(Layout::BlockStrata, &out, true, tol()).unwrap();

    assert_eq!(table.strata.len(), 2);
    assert_eq!(table.strata[0].name, "block");
    assert_eq!(table.strata[1].name, "block.plots");
    let block = &table.strata[0].rows[0];
    let trt = table.row("treatment (adj.)").unwrap();
    let res = table.row("Residual").unwrap();
    assert_eq!((block.df, trt.df, res.df, table.total.df), (3, 3, 1, 7));

    // projectors of [1 Z], [1 Z X] from a pivoted QR
    let full = full_design(&d);
    let p_full = oracle_projector(&full);
    let p_block = oracle_projector(&full.columns(0, 1 + d.b).into_owned());
    let p_mean = DMatrix::from_element(d.n, d.n, 1.0 / d.n as f64);
    let ss_block = quad(&(&p_block - &p_mean), &y);
    let ss_trt = quad(&(&p_full - &p_block), &y);
    let rss = quad(&(DMatrix::identity(d.n, d.n) - &p_full), &y);
    assert!((block.ss - ss_block).abs() < 1e-9);
    assert!((trt.ss - ss_trt).abs() < 1e-9);
    assert!((res.ss - rss).abs() < 1e-9);
    let f = (ss_trt / 3.0) / (rss / 1.0);
    assert!((trt.f.unwrap() - f).abs() < 1e-6 * f);
    assert!((trt.p.unwrap() - f_upper_tail(f, 3, 1).unwrap()).abs() < 1e-9);
    assert!(block.f.is_none());
}

#[test]
fn one_way_units_table() {
    let f = Factor::new("variety", vec![0, 0, 0, 1, 1, 1, 2, 2, 2], 3);
    let y = [4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 1.0, 2.0, 3.0];
    let ystar = sweep_mean(&y).unwrap();
    let out = sequential_sweep(&[indicator_matrix(&f, 9).unwrap()], &ystar, tol()).unwrap();
    let table = build_table(Layout::Units, &out, true, tol()).unwrap();
    let row = table.row("variety").unwrap();
    // group means 5, 8, 2 around 5: SS = 3 * (0 + 9 + 9)
    assert_eq!(row.df, 2);
    assert!((row.ss - 54.0).abs() < 1e-10);
    let res = table.row("Residual").unwrap();
    assert_eq!(res.df, 6);
    assert!((res.ss - 6.0).abs() < 1e-10);
    assert!((row.f.unwrap() - 27.0).abs() < 1e-9);
    assert!(build_table(Layout::BlockStrata, &out, true, tol()).is_err());
}

#[test]
fn constant_response_gives_zero_table_without_f() {
    let d = fano();
    let ystar = sweep_mean(&vec![3.25; d.n]).unwrap();
    let out = sequential_sweep(&terms(&d), &ystar, tol()).unwrap();
    let table = build_table(Layout::BlockStrata, &out, true, tol()).unwrap();
    assert!(table.rows().all(|r| r.ss == 0.0 && r.f.is_none()));
    assert!(table.diagnostics.iter().any(|m| m.contains("zero")));
}

#[test]
fn disconnected_design_is_refused() {
    let d = BlockDesign::from_block_contents(&[vec![0, 1], vec![0, 1], vec![2, 3], vec![2, 3]])
        .unwrap();
    let mut r = rng(1);
    let y = centered_normal(&mut r, d.n);
    let out = sequential_sweep(&terms(&d), &y, tol()).unwrap();
    assert!(matches!(
        build_table(Layout::BlockStrata, &out, false, tol()),
        Err(Error::DisconnectedDesign)
    ));
}

#[test]
fn expected_sums_of_squares_ignore_block_effects() {
    let d = fano();
    let t = terms(&d);
    let out = sequential_sweep(&t, &vec![0.0; d.n], tol()).unwrap();
    let ptt = &out.fits[1].projector;
    let design = t[0].design.hcat(&t[1].design);
    let mut r = rng(4);
    let tau = normal_vec(&mut r, d.v);
    let e1 = {
        let pi: Vec<f64> = normal_vec(&mut r, d.b).into_iter().chain(tau.clone()).collect();
        expected_ss(ptt, &design, &pi, 2.0).unwrap()
    };
    let e2 = {
        let pi: Vec<f64> = normal_vec(&mut r, d.b)
            .into_iter()
            .map(|v| 50.0 * v)
            .chain(tau.clone())
            .collect();
        expected_ss(ptt, &design, &pi, 2.0).unwrap()
    };
    assert!((e1 - e2).abs() < 1e-8);
    // residual: tr(R) sigma^2 whatever the parameters
    let resid = ptt
        .complement()
        .matrix()
        .sub(&projector_from_design(&DenseMatrix::ones(d.n, 1).hcat(&t[0].design), tol())
            .unwrap()
            .matrix()
            .clone());
    let resid = blocksweep::Projector::from_matrix(resid, tol()).unwrap();
    assert_eq!(resid.rank(), 8);
    let pi: Vec<f64> = normal_vec(&mut r, d.b + d.v);
    let e = expected_ss(&resid, &design, &pi, 2.0).unwrap();
    assert!((e - 16.0).abs() < 1e-8);
    let y = normal_vec(&mut r, d.n);
    assert!((projector_ss(&resid, &y) - projector_ss(&resid, &sweep_mean(&y).unwrap())).abs() < 1e-10);
}

#[test]
fn extra_factor_between_blocks_and_treatments() {
    // rows within a complete block design fitted before treatments
    let d = rcbd(4, 4);
    let rows: Vec<usize> = (0..d.n).map(|h| (h % 4 + h / 4) % 4).collect();
    let row_term = indicator_matrix(&Factor::new("row", rows, 4), d.n).unwrap();
    let t = terms(&d);
    let mut r = rng(9);
    let y = centered_normal(&mut r, d.n);
    let out = sequential_sweep(&[t[0].clone(), row_term, t[1].clone()], &y, tol()).unwrap();
    let table = build_table(Layout::BlockStrata, &out, true, tol()).unwrap();
    let labels: Vec<&str> = table.strata[1].rows.iter().map(|r| r.source.as_str()).collect();
    assert_eq!(labels, vec!["row (adj.)", "treatment (adj.)", "Residual"]);
    let dfs: Vec<usize> = table.strata[1].rows.iter().map(|r| r.df).collect();
    assert_eq!(dfs, vec![3, 3, 6]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tables_are_additive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = random_connected_design(&mut r);
        let y = normal_vec(&mut r, d.n);
        let ystar = sweep_mean(&y).unwrap();
        let out = sequential_sweep(&terms(&d), &ystar, tol()).unwrap();
        let table = build_table(Layout::BlockStrata, &out, true, tol()).unwrap();
        let df: usize = table.rows().map(|r| r.df).sum();
        prop_assert_eq!(df, d.n - 1);
        let ss: f64 = table.rows().map(|r| r.ss).sum();
        prop_assert!((ss - table.total.ss).abs() <= 1e-8 * table.total.ss);
        prop_assert!(table.rows().all(|r| r.ss >= 0.0));
    }
}
