#![allow(dead_code)]

use blocksweep::design::{incidence, is_connected};
use blocksweep::model::{indicator_matrix, sweep_mean};
use blocksweep::{BlockDesign, DenseMatrix, Tolerance};
use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn tol() -> Tolerance {
    Tolerance::default()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Four blocks of two: {1,3}, {2,4}, {2,3}, {1,4}.
pub fn pairs() -> BlockDesign {
    BlockDesign::from_block_contents(&[vec![0, 2], vec![1, 3], vec![1, 2], vec![0, 3]]).unwrap()
}

/// The seven-treatment BIB with blocks of three, lambda = 1.
pub fn fano() -> BlockDesign {
    let one_based = [
        [1, 2, 4],
        [2, 3, 5],
        [3, 4, 6],
        [4, 5, 7],
        [5, 6, 1],
        [6, 7, 2],
        [7, 1, 3],
    ];
    let blocks: Vec<Vec<usize>> = one_based
        .iter()
        .map(|b| b.iter().map(|t| t - 1).collect())
        .collect();
    BlockDesign::from_block_contents(&blocks).unwrap()
}

/// Randomized complete block design with `b` blocks of all `v` treatments.
pub fn rcbd(v: usize, b: usize) -> BlockDesign {
    let blocks: Vec<Vec<usize>> = (0..b).map(|_| (0..v).collect()).collect();
    BlockDesign::from_block_contents(&blocks).unwrap()
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn na_max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Column-pivoted Householder QR of `x`: the orthonormal basis `Q1` of
/// the column space, the leading `rank` rows of `R` and the permutation
/// matrix, so that `x * perm = Q1 * R1`.
fn pivoted_qr(x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let diag_max = (0..r.nrows().min(r.ncols())).fold(0.0f64, |m, i| m.max(r[(i, i)].abs()));
    let rank = (0..r.nrows().min(r.ncols()))
        .filter(|&i| r[(i, i)].abs() > 1e-9 * diag_max.max(1.0))
        .count();
    let mut perm = DMatrix::<f64>::identity(x.ncols(), x.ncols());
    qr.p().permute_columns(&mut perm);
    let q1 = qr.q().columns(0, rank).into_owned();
    let r1 = r.rows(0, rank).into_owned();
    (q1, r1, perm)
}

/// Projector onto the column space of `x`, from a pivoted QR.
pub fn oracle_projector(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (q1, _, _) = pivoted_qr(x);
    &q1 * q1.transpose()
}

pub fn oracle_rank(x: &DMatrix<f64>) -> usize {
    pivoted_qr(x).0.ncols()
}

/// `[1 | Z | X]` for a block design, as an nalgebra matrix.
pub fn full_design(d: &BlockDesign) -> DMatrix<f64> {
    let z = indicator_matrix(&d.block_factor(), d.n).unwrap().design;
    let x = indicator_matrix(&d.treatment_factor(), d.n).unwrap().design;
    to_na(&DenseMatrix::ones(d.n, 1).hcat(&z).hcat(&x))
}

/// Treatment effects from the Moore-Penrose solution of the full model
/// `[1 Z X]`, centered. With `W P = Q1 R1` the minimum-norm solution is
/// `P R1' (R1 R1')^-1 Q1' y`, which equals `(W'W)^+ W'y`.
pub fn oracle_effects(d: &BlockDesign, y: &[f64]) -> Vec<f64> {
    let w = full_design(d);
    let (q1, r1, perm) = pivoted_qr(&w);
    let z = q1.transpose() * nalgebra::DVector::from_column_slice(y);
    let rrt = &r1 * r1.transpose();
    let u = rrt.cholesky().unwrap().solve(&z);
    let beta = perm * r1.transpose() * u;
    let tau: Vec<f64> = (0..d.v).map(|i| beta[1 + d.b + i]).collect();
    let mean = tau.iter().sum::<f64>() / d.v as f64;
    tau.iter().map(|t| t - mean).collect()
}

pub fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn centered_normal(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    sweep_mean(&normal_vec(rng, n)).unwrap()
}

/// `(v, k, r)` with `vr = bk`, `v <= 8`, `b <= 10`, `r >= 2`.
fn design_parameters() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for v in 3..=8 {
        for k in 2..=v {
            for r in 2..=10 {
                if (v * r) % k == 0 && v * r / k <= 10 {
                    out.push((v, k, r));
                }
            }
        }
    }
    out
}

/// Random connected equal-replicate, equal-block-size design with
/// `v <= 8` and `b <= 10`: `r` shuffled copies of the treatments are cut
/// into consecutive blocks, rejecting disconnected results.
pub fn random_connected_design(rng: &mut impl Rng) -> BlockDesign {
    let params = design_parameters();
    loop {
        let &(v, k, r) = params.choose(rng).unwrap();
        let mut units = Vec::with_capacity(v * r);
        for _ in 0..r {
            let mut perm: Vec<usize> = (0..v).collect();
            perm.shuffle(rng);
            units.extend(perm);
        }
        let blocks: Vec<Vec<usize>> = units.chunks(k).map(|c| c.to_vec()).collect();
        let d = BlockDesign::from_block_contents(&blocks).unwrap();
        if is_connected(&incidence(&d)) {
            return d;
        }
    }
}

/// Random `n x p` matrix; about half the time one column is replaced by a
/// combination of others, or a zero/one indicator layout is used, so rank
/// deficiency is common.
pub fn random_design_matrix(rng: &mut impl Rng) -> DenseMatrix {
    let n = rng.random_range(2..=12);
    let p = rng.random_range(1..=6);
    match rng.random_range(0..3) {
        0 => DenseMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng)),
        1 => {
            let mut m = DenseMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng));
            if p >= 2 {
                let a: f64 = rng.random_range(-2.0..2.0);
                for i in 0..n {
                    m[(i, p - 1)] = a * m[(i, 0)] + m[(i, 1)];
                }
            }
            m
        }
        _ => {
            // indicator columns with an added intercept: always deficient
            let levels: Vec<usize> = (0..n).map(|_| rng.random_range(0..p)).collect();
            let ind = DenseMatrix::from_fn(n, p, |i, j| if levels[i] == j { 1.0 } else { 0.0 });
            DenseMatrix::ones(n, 1).hcat(&ind)
        }
    }
}

/// Random symmetric `n x n` matrix `Q diag(l) Q'` with a random orthogonal
/// `Q`, some zero eigenvalues and the rest of either sign, magnitude in
/// `[0.1, 5]`. Returns the matrix and its rank.
pub fn random_symmetric(rng: &mut impl Rng) -> (DenseMatrix, usize) {
    let n = rng.random_range(1..=8);
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    let zeros = rng.random_range(0..=n.min(3));
    let mut values: Vec<f64> = (0..n)
        .map(|i| {
            if i < zeros {
                0.0
            } else {
                let mag: f64 = rng.random_range(0.1..5.0);
                if rng.random_bool(0.5) { mag } else { -mag }
            }
        })
        .collect();
    values.shuffle(rng);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values));
    let h: DMatrix<f64> = &q * d * q.transpose();
    let h = (&h + h.transpose()) * 0.5;
    (from_na(&h), n - zeros)
}

/// `Gamma(m / 2)` from `Gamma(1/2) = sqrt(pi)`, `Gamma(1) = 1` and
/// `Gamma(x + 1) = x Gamma(x)`.
pub fn gamma_half(m: usize) -> f64 {
    assert!(m >= 1);
    let (mut x, mut g) = if m.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (0.5, std::f64::consts::PI.sqrt())
    };
    while x < m as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, depth: u32) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f((a + b) / 2.0) + f(b))
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, whole: f64, depth: u32) -> f64 {
        let m = (a + b) / 2.0;
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, eps / 2.0, left, depth - 1) + rec(f, m, b, eps / 2.0, right, depth - 1)
    }
    rec(f, a, b, eps, simpson(f, a, b), depth)
}

/// Upper tail of F(d1, d2) at `f` by numerical integration of the density.
/// Substituting `x = s^2` removes the `x^(d1/2 - 1)` singularity at zero.
pub fn f_tail_quadrature(f: f64, d1: usize, d2: usize) -> f64 {
    let (a, b) = (d1 as f64 / 2.0, d2 as f64 / 2.0);
    let beta = gamma_half(d1) * gamma_half(d2) / gamma_half(d1 + d2);
    let ratio = d1 as f64 / d2 as f64;
    let c = 2.0 * ratio.powf(a) / beta;
    let g = move |s: f64| {
        let s2 = s * s;
        c * s.powi(d1 as i32 - 1) * (1.0 + ratio * s2).powf(-(a + b))
    };
    1.0 - adaptive_simpson(&g, 0.0, f.sqrt(), 1e-13, 50)
}

/// The fixed 20-point grid used for the F tail comparison.
pub fn f_grid() -> Vec<(f64, usize, usize)> {
    (0..20)
        .map(|i| {
            let d1 = 1 + (3 * i) % 10;
            let d2 = 1 + (7 * i + 2) % 10;
            let f = 0.1 * 100f64.powf(i as f64 / 19.0);
            (f, d1, d2)
        })
        .collect()
}
