//! Generators, dense oracles and property checks shared by the integration
//! suites and the acceptance run.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mlvb::data::{Depth, Groups, MultilevelDataset};
use mlvb::distributions::special::integrate_interval;
use mlvb::eval::{accuracy_index, f1_score, simulate, SimConfig, SizeRule};
use mlvb::linalg::{
    solve_three_level, solve_two_level, ThreeLevelGroup, ThreeLevelSparseSystem, ThreeLevelSubgroup, TwoLevelBlock,
    TwoLevelSparseSystem,
};
use mlvb::mfvb::{PriorFamily, RandomQ, VariationalState};
use mlvb::savs::savs;

pub const FAMILIES: [PriorFamily; 4] =
    [PriorFamily::Gaussian, PriorFamily::Laplace, PriorFamily::Horseshoe, PriorFamily::Neg { lambda: 0.25 }];

pub fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn jitter(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(k, |_, _| 0.5 + rng.random::<f64>()))
}

/// A = CᵀC + D for a random nested design C, so A is SPD with exactly the
/// two-level block pattern.
pub fn random_two_level(rng: &mut ChaCha8Rng, p: usize, q: usize, m: usize) -> TwoLevelSparseSystem {
    let mut a11 = jitter(rng, p);
    let groups = (0..m)
        .map(|_| {
            let o = rng.random_range(1..=4);
            let (x, z) = (gauss(rng, o, p), gauss(rng, o, q));
            a11 += x.transpose() * &x;
            TwoLevelBlock {
                a2: gauss(rng, q, 1).column(0).into_owned(),
                a22: z.transpose() * &z + jitter(rng, q),
                a12: x.transpose() * &z,
            }
        })
        .collect();
    TwoLevelSparseSystem { a1: gauss(rng, p, 1).column(0).into_owned(), a11, groups }
}

pub fn random_three_level(
    rng: &mut ChaCha8Rng,
    p: usize,
    q1: usize,
    q2: usize,
    ns: &[usize],
) -> ThreeLevelSparseSystem {
    let mut a11 = jitter(rng, p);
    let groups = ns
        .iter()
        .map(|&n| {
            let mut a12 = DMatrix::zeros(p, q1);
            let mut a22 = jitter(rng, q1);
            let subgroups = (0..n)
                .map(|_| {
                    let o = rng.random_range(1..=4);
                    let (x, z1, z2) = (gauss(rng, o, p), gauss(rng, o, q1), gauss(rng, o, q2));
                    a11 += x.transpose() * &x;
                    a12 += x.transpose() * &z1;
                    a22 += z1.transpose() * &z1;
                    ThreeLevelSubgroup {
                        a2: gauss(rng, q2, 1).column(0).into_owned(),
                        a22: z2.transpose() * &z2 + jitter(rng, q2),
                        a12: x.transpose() * &z2,
                        a12_group: z1.transpose() * &z2,
                    }
                })
                .collect();
            ThreeLevelGroup { a2: gauss(rng, q1, 1).column(0).into_owned(), a22, a12, subgroups }
        })
        .collect();
    ThreeLevelSparseSystem { a1: gauss(rng, p, 1).column(0).into_owned(), a11, groups }
}

/// ‖a − b‖ / ‖b‖ in the Frobenius norm; the absolute difference when b = 0.
pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

fn rel_m(a: &DMatrix<f64>, b: nalgebra::DMatrixView<f64>) -> f64 {
    rel(a.as_slice(), b.clone_owned().as_slice())
}

fn asym(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

/// Worst errors of a sparse solve against the dense oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleError {
    /// Worst blockwise relative error of x and of the inverse blocks.
    pub block: f64,
    /// ‖Ax − a‖ / ‖a‖
    pub residual: f64,
    /// Largest |M − Mᵀ| over the diagonal inverse blocks.
    pub asymmetry: f64,
}

impl OracleError {
    pub fn worst(self, o: OracleError) -> OracleError {
        OracleError {
            block: self.block.max(o.block),
            residual: self.residual.max(o.residual),
            asymmetry: self.asymmetry.max(o.asymmetry),
        }
    }
}

fn dense_oracle(a: &DMatrix<f64>, rhs: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let inv = a.clone().lu().try_inverse().expect("oracle matrix is invertible");
    let x = &inv * rhs;
    (inv, x)
}

pub fn two_level_oracle_error(sys: &TwoLevelSparseSystem) -> OracleError {
    let sol = solve_two_level(sys).expect("SPD system solves");
    let (p, q) = (sys.p(), sys.q());
    let a = sys.assemble_dense();
    let rhs = sys.assemble_rhs();
    let (inv, x) = dense_oracle(&a, &rhs);
    let mut block = rel(sol.x1.as_slice(), &x.as_slice()[..p]).max(rel_m(&sol.ainv11, inv.view((0, 0), (p, p))));
    let mut asymmetry = asym(&sol.ainv11);
    for (i, g) in sol.groups.iter().enumerate() {
        let at = p + i * q;
        block = block
            .max(rel(g.x2.as_slice(), &x.as_slice()[at..at + q]))
            .max(rel_m(&g.ainv22, inv.view((at, at), (q, q))))
            .max(rel_m(&g.ainv12, inv.view((0, at), (p, q))));
        asymmetry = asymmetry.max(asym(&g.ainv22));
    }
    let residual = (&a * sol.stacked_x() - &rhs).norm() / rhs.norm();
    OracleError { block, residual, asymmetry }
}

pub fn three_level_oracle_error(sys: &ThreeLevelSparseSystem) -> OracleError {
    let sol = solve_three_level(sys).expect("SPD system solves");
    let (p, q1, q2) = (sys.p(), sys.q1(), sys.q2());
    let a = sys.assemble_dense();
    let rhs = sys.assemble_rhs();
    let (inv, x) = dense_oracle(&a, &rhs);
    let xs = x.as_slice();
    let mut block = rel(sol.x1.as_slice(), &xs[..p]).max(rel_m(&sol.ainv11, inv.view((0, 0), (p, p))));
    let mut asymmetry = asym(&sol.ainv11);
    let mut at = p;
    for g in &sol.groups {
        let gi = at;
        block = block
            .max(rel(g.x2.as_slice(), &xs[gi..gi + q1]))
            .max(rel_m(&g.ainv22, inv.view((gi, gi), (q1, q1))))
            .max(rel_m(&g.ainv12, inv.view((0, gi), (p, q1))));
        asymmetry = asymmetry.max(asym(&g.ainv22));
        at += q1;
        for s in &g.subgroups {
            block = block
                .max(rel(s.x2.as_slice(), &xs[at..at + q2]))
                .max(rel_m(&s.ainv22, inv.view((at, at), (q2, q2))))
                .max(rel_m(&s.ainv12, inv.view((0, at), (p, q2))))
                .max(rel_m(&s.ainv12_group, inv.view((gi, at), (q1, q2))));
            asymmetry = asymmetry.max(asym(&s.ainv22));
            at += q2;
        }
    }
    let residual = (&a * sol.stacked_x() - &rhs).norm() / rhs.norm();
    OracleError { block, residual, asymmetry }
}

/// The two-level system with the same unknowns as a three-level system
/// whose groups each hold one subgroup, u_i = [u^L1_i; u^L2_i1].
pub fn merge_single_subgroups(three: &ThreeLevelSparseSystem) -> TwoLevelSparseSystem {
    let p = three.a1.len();
    TwoLevelSparseSystem {
        a1: three.a1.clone(),
        a11: three.a11.clone(),
        groups: three
            .groups
            .iter()
            .map(|g| {
                assert_eq!(g.subgroups.len(), 1, "one subgroup per group expected");
                let s = &g.subgroups[0];
                let (q1, q2) = (g.a2.len(), s.a2.len());
                let q = q1 + q2;
                let mut a22 = DMatrix::zeros(q, q);
                a22.view_mut((0, 0), (q1, q1)).copy_from(&g.a22);
                a22.view_mut((0, q1), (q1, q2)).copy_from(&s.a12_group);
                a22.view_mut((q1, 0), (q2, q1)).copy_from(&s.a12_group.transpose());
                a22.view_mut((q1, q1), (q2, q2)).copy_from(&s.a22);
                let mut a12 = DMatrix::zeros(p, q);
                a12.columns_mut(0, q1).copy_from(&g.a12);
                a12.columns_mut(q1, q2).copy_from(&s.a12);
                let a2 = DVector::from_iterator(q, g.a2.iter().chain(s.a2.iter()).copied());
                TwoLevelBlock { a2, a22, a12 }
            })
            .collect(),
    }
}

/// A random system of either depth within p, q, q1, q2 ≤ 4, m ≤ 5, n_i ≤ 4.
pub fn random_system_error(rng: &mut ChaCha8Rng, three: bool) -> OracleError {
    let p = rng.random_range(1..=4);
    let m = rng.random_range(1..=5);
    if three {
        let (q1, q2) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let ns: Vec<usize> = (0..m).map(|_| rng.random_range(1..=4)).collect();
        three_level_oracle_error(&random_three_level(rng, p, q1, q2, &ns))
    } else {
        let q = rng.random_range(1..=4);
        two_level_oracle_error(&random_two_level(rng, p, q, m))
    }
}

/// A small simulated model with random shape, a few S columns and a random
/// mix of signals and nulls. Designs whose XᵀX has condition number above
/// 1e6 are redrawn: with a diffuse prior the two sweep implementations then
/// differ by amplified round-off rather than by algebra.
pub fn random_model(rng: &mut ChaCha8Rng, depth: Depth) -> MultilevelDataset {
    loop {
        let p_s = rng.random_range(1..=6);
        let beta_s =
            (0..p_s).map(|_| if rng.random::<f64>() < 0.5 { 0.0 } else { rng.random_range(-2.0..2.0) }).collect();
        let cfg = SimConfig {
            depth,
            m: rng.random_range(3..=6),
            n: SizeRule::Uniform { lo: 1, hi: 3 },
            o: SizeRule::Uniform { lo: 6, hi: 10 },
            beta_s,
            seed: rng.random(),
            ..SimConfig::default()
        };
        let ds = simulate(&cfg).expect("valid design").0;
        if condition_number(&ds) < 1e6 {
            return ds;
        }
    }
}

pub fn condition_number(ds: &MultilevelDataset) -> f64 {
    let p = ds.p();
    let mut xtx = DMatrix::zeros(p, p);
    ds.for_each_block(|_, x| xtx += x.transpose() * x);
    let e = xtx.symmetric_eigenvalues();
    e.max() / e.min()
}

/// Worst blockwise relative difference between two states, with the name of
/// the block where it occurs.
pub fn state_difference(a: &VariationalState, b: &VariationalState) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for ((name, x), (_, y)) in a.parameter_blocks().iter().zip(b.parameter_blocks().iter()) {
        let r = rel(x, y);
        if !(r <= worst.0) {
            worst = (r, name.clone());
        }
    }
    worst
}

fn is_spd(m: &DMatrix<f64>) -> bool {
    asym(m) <= 1e-10 * m.abs().max().max(1.0) && nalgebra::Cholesky::new(m.clone()).is_some()
}

/// SPD covariance blocks, positive λ's, SPD Λ's and unchanged ξ's.
pub fn check_state(state: &VariationalState, xi0: &[f64]) -> Result<(), String> {
    if !is_spd(&state.sigma_beta) {
        return Err("Sigma_q(beta) is not SPD".into());
    }
    let mut covs: Vec<&DMatrix<f64>> = Vec::new();
    match &state.random {
        RandomQ::Two(gs) => covs.extend(gs.iter().map(|g| &g.sigma)),
        RandomQ::Three(gs) => {
            for g in gs {
                covs.push(&g.sigma);
                covs.extend(g.subgroups.iter().map(|s| &s.sigma));
            }
        }
    }
    if let Some(i) = covs.iter().position(|s| !is_spd(s)) {
        return Err(format!("Sigma_q(u) block {i} is not SPD"));
    }
    for (name, s) in
        [("sigsq", &state.sigsq), ("a_sigsq", &state.a_sigsq), ("tausq", &state.tausq), ("a_tausq", &state.a_tausq)]
    {
        if !(s.lambda > 0.0 && s.lambda.is_finite()) {
            return Err(format!("lambda_q({name}) = {}", s.lambda));
        }
    }
    for (name, v) in [("lambda_zeta", &state.zeta.lambda), ("lambda_a_zeta", &state.zeta.lambda_a)] {
        if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(format!("{name} has a nonpositive entry"));
        }
    }
    for (l, c) in state.cov.iter().enumerate() {
        if !is_spd(&c.lambda_sigma) || !is_spd(&c.lambda_a) {
            return Err(format!("Lambda at level {l} is not SPD"));
        }
    }
    if state.xi_constants() != xi0 {
        return Err("xi constants changed".into());
    }
    Ok(())
}

/// Sign preservation, shrinkage and monotonicity in |μ| for one coefficient.
pub fn check_savs(mu: f64, norm_sq: f64, scale: f64) -> Result<(), String> {
    let r = savs(&[mu, mu * scale], &[norm_sq, norm_sq]).map_err(|e| e.to_string())?;
    let s = r.mu_star[0];
    if s != 0.0 && s.signum() != mu.signum() {
        return Err(format!("sign flipped: mu {mu} -> {s}"));
    }
    if r.gamma[0] != (s != 0.0) {
        return Err("gamma disagrees with the sparsified estimate".into());
    }
    if r.gamma[0] && !(s.abs() < mu.abs()) {
        return Err(format!("no shrinkage: mu {mu} -> {s}"));
    }
    if scale >= 1.0 && r.gamma[0] && !r.gamma[1] {
        return Err(format!("selection not monotone: {mu} kept, {} dropped", mu * scale));
    }
    Ok(())
}

/// Two random normal mixtures tabulated on a shared grid.
pub fn random_density_pair(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let grid: Vec<f64> = (0..2001).map(|k| -30.0 + 60.0 * k as f64 / 2000.0).collect();
    let mix = |rng: &mut ChaCha8Rng| {
        let parts: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=3))
            .map(|_| (rng.random_range(0.1..1.0), rng.random_range(-5.0..5.0), rng.random_range(0.5..3.0)))
            .collect();
        let total: f64 = parts.iter().map(|p| p.0).sum();
        grid.iter()
            .map(|&x| {
                parts
                    .iter()
                    .map(|&(w, m, s)| {
                        w / total * (-0.5 * ((x - m) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
                    })
                    .sum()
            })
            .collect::<Vec<f64>>()
    };
    let a = mix(rng);
    let b = mix(rng);
    (grid, a, b)
}

pub fn check_accuracy_symmetry(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let (grid, a, b) = random_density_pair(rng);
    let ab = accuracy_index(&grid, &a, &b).map_err(|e| e.to_string())?;
    let ba = accuracy_index(&grid, &b, &a).map_err(|e| e.to_string())?;
    let aa = accuracy_index(&grid, &a, &a).map_err(|e| e.to_string())?;
    if ab != ba {
        return Err(format!("asymmetric: {ab} vs {ba}"));
    }
    if !(0.0..=100.0).contains(&ab) {
        return Err(format!("out of range: {ab}"));
    }
    if aa != 100.0 {
        return Err(format!("self accuracy {aa}"));
    }
    Ok(())
}

pub fn check_f1_permutation(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = rng.random_range(1..=40);
    let gamma: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let truth: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let pg: Vec<bool> = perm.iter().map(|&i| gamma[i]).collect();
    let pt: Vec<bool> = perm.iter().map(|&i| truth[i]).collect();
    let a = f1_score(&gamma, &truth).map_err(|e| e.to_string())?;
    let b = f1_score(&pg, &pt).map_err(|e| e.to_string())?;
    if a != b {
        return Err(format!("{a:?} vs {b:?}"));
    }
    let nonzero = truth.iter().filter(|t| **t).count();
    if a.tp + a.fn_ != nonzero || a.tn + a.fp != n - nonzero || !(0.0..=100.0).contains(&a.f1) {
        return Err(format!("inconsistent counts {a:?}"));
    }
    Ok(())
}

/// Distribution function at sorted points `t`, by quadrature of `pdf`
/// between consecutive points starting from a known value `f0` at `t0`.
pub fn cdf_at<F: Fn(f64) -> f64>(pdf: &F, t0: f64, f0: f64, t: &[f64]) -> Vec<f64> {
    let split = t.partition_point(|&x| x < t0);
    let mut out = vec![0.0; t.len()];
    let (mut at, mut acc) = (t0, f0);
    for k in split..t.len() {
        acc += integrate_interval(pdf, at, t[k]);
        out[k] = acc;
        at = t[k];
    }
    let (mut at, mut acc) = (t0, f0);
    for k in (0..split).rev() {
        acc -= integrate_interval(pdf, t[k], at);
        out[k] = acc;
        at = t[k];
    }
    out
}

/// Kolmogorov–Smirnov distance of `draws` from a distribution with density
/// `pdf` and F(t0) = f0, evaluated at 2000 order statistics.
pub fn ks_distance<F: Fn(f64) -> f64>(draws: &mut [f64], pdf: &F, t0: f64, f0: f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len();
    let ranks: Vec<usize> = (1..=2000).map(|k| (k * n / 2000).max(1)).collect();
    let pts: Vec<f64> = ranks.iter().map(|&r| draws[r - 1]).collect();
    let f = cdf_at(pdf, t0, f0, &pts);
    ranks
        .iter()
        .zip(&f)
        .map(|(&r, &fv)| (r as f64 / n as f64 - fv).abs().max(((r - 1) as f64 / n as f64 - fv).abs()))
        .fold(0.0, f64::max)
}

/// Pearson χ² p-value of `draws` against the density on fixed bins
/// `edges` (open-ended outer bins), merging bins until each expects ≥ 20.
pub fn binned_chisq_pvalue<F: Fn(f64) -> f64>(draws: &[f64], pdf: &F, t0: f64, f0: f64, edges: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n = draws.len() as f64;
    let f = cdf_at(pdf, t0, f0, edges);
    let mut probs = vec![f[0]];
    probs.extend(f.windows(2).map(|w| w[1] - w[0]));
    probs.push(1.0 - f[f.len() - 1]);
    let mut counts = vec![0usize; probs.len()];
    for &d in draws {
        counts[edges.partition_point(|&e| e < d)] += 1;
    }
    let (mut stat, mut bins) = (0.0, 0);
    let (mut e_acc, mut o_acc) = (0.0, 0usize);
    for (p, c) in probs.iter().zip(&counts) {
        e_acc += p * n;
        o_acc += c;
        if e_acc >= 20.0 {
            stat += (o_acc as f64 - e_acc).powi(2) / e_acc;
            bins += 1;
            e_acc = 0.0;
            o_acc = 0;
        }
    }
    if e_acc > 0.0 {
        stat += (o_acc as f64 - e_acc).powi(2) / e_acc.max(1e-300);
        bins += 1;
    }
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

pub fn depth_name(ds: &MultilevelDataset) -> &'static str {
    match ds.groups {
        Groups::Two { .. } => "two-level",
        Groups::Three { .. } => "three-level",
    }
}

/// Result of drawing 10⁵ values through a scale-mixture hierarchy and
/// comparing them with the closed-form density.
#[derive(Debug, Clone)]
pub struct MixtureCheck {
    pub name: &'static str,
    pub ks: f64,
    pub chisq_pvalue: f64,
}

impl MixtureCheck {
    pub fn passed(&self) -> bool {
        self.ks < 0.01 && self.chisq_pvalue > 1e-3
    }
}

/// Laplace, Horseshoe and NEG as normal scale mixtures, and the half-t as
/// the square root of an Inverse-χ² mixture, each at unit scale.
pub fn mixture_checks(rng: &mut ChaCha8Rng) -> Vec<MixtureCheck> {
    use mlvb::distributions::sample::{gamma, inv_chisq, inv_gamma, normal};
    use mlvb::distributions::Density;
    const N: usize = 100_000;
    let lambda = 0.25;
    let nu = 3.0;
    let symmetric: Vec<f64> = (0..=60).map(|k| -6.0 + 0.2 * k as f64).collect();
    let positive: Vec<f64> = (1..=60).map(|k| 0.1 * k as f64).collect();
    let mut out = Vec::new();
    let mut run = |name: &'static str, draw: &mut dyn FnMut() -> f64, d: Density, t0: f64, f0: f64, edges: &[f64]| {
        let mut draws: Vec<f64> = (0..N).map(|_| draw()).collect();
        let pdf = |x: f64| d.pdf(x).unwrap_or(0.0);
        let chisq_pvalue = binned_chisq_pvalue(&draws, &pdf, t0, f0, edges);
        let ks = ks_distance(&mut draws, &pdf, t0, f0);
        out.push(MixtureCheck { name, ks, chisq_pvalue });
    };
    run(
        "laplace",
        &mut || normal(rng) / inv_gamma(rng, 1.0, 0.5).sqrt(),
        Density::Laplace { mu: 0.0, sigma: 1.0 },
        0.0,
        0.5,
        &symmetric,
    );
    run(
        "horseshoe",
        &mut || {
            let c = gamma(rng, 0.5, 1.0);
            normal(rng) / gamma(rng, 0.5, c).sqrt()
        },
        Density::Horseshoe { mu: 0.0, sigma: 1.0 },
        0.0,
        0.5,
        &symmetric,
    );
    run(
        "neg",
        &mut || {
            let a = gamma(rng, lambda, 1.0);
            normal(rng) / inv_gamma(rng, 1.0, a).sqrt()
        },
        Density::Neg { mu: 0.0, sigma: 1.0, lambda },
        0.0,
        0.5,
        &symmetric,
    );
    run(
        "half-t",
        &mut || {
            let a = inv_chisq(rng, 1.0, 1.0 / nu);
            inv_chisq(rng, nu, 1.0 / a).sqrt()
        },
        Density::HalfT { sigma: 1.0, nu },
        0.0,
        0.0,
        &positive,
    );
    out
}

/// Worst blockwise difference between a two-level state and the state of
/// its three-level embedding, over the parameters the two fits share: β,
/// the group-level effects, the error and global scales, the level-1
/// covariance and the local scales.
pub fn shared_difference(two: &VariationalState, three: &VariationalState) -> (f64, String) {
    let a = two.parameter_blocks();
    let b = three.parameter_blocks();
    let find = |name: &str| b.iter().find(|(n, _)| n == name).map(|(_, v)| v);
    let mut worst = (0.0, String::new());
    for (name, x) in &a {
        let partner =
            name.replace("mu_u[", "mu_u1[").replace("sigma_u[", "sigma_u1[").replace("cov_beta_u[", "cov_beta_u1[");
        let y = find(&partner).unwrap_or_else(|| panic!("no counterpart for {name}"));
        let r = rel(x, y);
        if !(r <= worst.0) {
            worst = (r, name.clone());
        }
    }
    worst
}

/// Mean of `d` with a batch-means standard error over 50 batches.
pub fn batch_mean_se(d: &[f64]) -> (f64, f64) {
    let k = d.len() / 50;
    let b: Vec<f64> = d.chunks_exact(k).map(|c| c.iter().sum::<f64>() / k as f64).collect();
    let m = b.iter().sum::<f64>() / b.len() as f64;
    let v = b.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b.len() - 1) as f64;
    (m, (v / b.len() as f64).sqrt())
}

/// One Rao–Blackwell comparison: the mean of f(draw) − E{f | rest} and its
/// standard error.
#[derive(Debug, Clone)]
pub struct ConjugacyCheck {
    pub name: &'static str,
    pub shift: f64,
    pub se: f64,
}

impl ConjugacyCheck {
    pub fn passed(&self) -> bool {
        self.shift.abs() < 3.0 * self.se
    }
}

/// E(ln x) for x ~ Inverse-χ²(ξ, λ): ln(λ/2) − ψ(ξ/2).
fn ln_inv_chisq_mean(xi: f64, lambda: f64) -> f64 {
    (0.5 * lambda).ln() - statrs::function::gamma::digamma(0.5 * xi)
}

/// Gibbs run on one group with a random intercept and one S covariate. For
/// each block, the average of a draw minus its closed-form conditional
/// expectation given the other recorded values must vanish.
pub fn gibbs_conjugacy(seed: u64, iters: usize) -> Vec<ConjugacyCheck> {
    use mlvb::data::Group2;
    use mlvb::gibbs::{gibbs_fit, GibbsOptions};
    use mlvb::mfvb::PriorConfig;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let o = 40;
    let s = gauss(&mut rng, o, 1);
    let y = DVector::from_fn(o, |i, _| 0.5 + 1.2 * s[(i, 0)] + 0.7 + rng.sample::<f64, _>(StandardNormal));
    let mut x = DMatrix::from_element(o, 2, 1.0);
    x.set_column(1, &s.column(0));
    let ds = MultilevelDataset {
        p_r: 1,
        p_a: 0,
        p_s: 1,
        names: vec!["(Intercept)".into(), "s".into()],
        intercept: true,
        groups: Groups::Two {
            q: 1,
            groups: vec![Group2 { id: "1".into(), y: y.clone(), x: x.clone(), z: DMatrix::from_element(o, 1, 1.0) }],
        },
    };
    let cfg = PriorConfig { family: "horseshoe".into(), s_sigma: 1.0, ..PriorConfig::default() };
    let prior = cfg.build(&ds).unwrap();
    let opts = GibbsOptions { iters, warmup: 2_000, thin: 1, seed, record_groups: 1, record_auxiliary: true };
    let post = gibbs_fit(&ds, &prior, &opts).unwrap();
    let col = |n: &str| post.column(n).unwrap_or_else(|| panic!("no column {n}"));
    let (b0, b1, u, sigsq, tausq, zeta, sigma, a_sigsq, a_tausq, a_sigma) = (
        col("(Intercept)"),
        col("s"),
        col("u[1][0]"),
        col("sigsq"),
        col("tausq"),
        col("zeta[1]"),
        col("Sigma1[0,0]"),
        col("a_sigsq"),
        col("a_tausq"),
        col("a_Sigma1[0]"),
    );
    let mut c = DMatrix::from_element(o, 3, 1.0);
    c.set_column(1, &s.column(0));
    let ctc = c.transpose() * &c;
    let cty = c.transpose() * &y;
    let (nu, n) = (prior.nu_sigsq, o as f64);
    let nu_sigma = prior.cov[0].nu;
    let mut d: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(post.len())).collect();
    for t in 0..post.len() {
        let mut prec = &ctc / sigsq[t];
        prec[(0, 0)] += 1.0 / cfg.beta_variance;
        prec[(1, 1)] += zeta[t] / tausq[t];
        prec[(2, 2)] += 1.0 / sigma[t];
        let mean = prec.cholesky().unwrap().solve(&(&cty / sigsq[t]));
        d[0].push(b0[t] - mean[0]);
        d[1].push(b1[t] - mean[1]);
        d[2].push(u[t] - mean[2]);
        let theta = DVector::from_row_slice(&[b0[t], b1[t], u[t]]);
        let rss = (&y - &c * theta).norm_squared();
        d[3].push(sigsq[t].ln() - ln_inv_chisq_mean(nu + n, 1.0 / a_sigsq[t] + rss));
        d[4].push(tausq[t].ln() - ln_inv_chisq_mean(2.0, 1.0 / a_tausq[t] + zeta[t] * b1[t] * b1[t]));
        d[5].push(sigma[t].ln() - ln_inv_chisq_mean(nu_sigma + 1.0, 1.0 / a_sigma[t] + u[t] * u[t]));
    }
    ["beta intercept", "beta S", "u", "log sigsq", "log tausq", "log Sigma"]
        .into_iter()
        .zip(d)
        .map(|(name, v)| {
            let (shift, se) = batch_mean_se(&v);
            ConjugacyCheck { name, shift, se }
        })
        .collect()
}
