//! Gibbs sampler for the same model, drawing each block from its full
//! conditional. The joint (β, u) draw reuses the multilevel sparse
//! factorization, so one scan costs about as much as one streamlined sweep.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Groups, MultilevelDataset};
use crate::distributions::sample::{gamma, inv_chisq, inv_gaussian, inverse_wishart, normal};
use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::mfvb::{Engine, PriorFamily, PriorSpec, SystemWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GibbsOptions {
    /// Total scans, warmup included.
    pub iters: usize,
    pub warmup: usize,
    pub thin: usize,
    pub seed: u64,
    /// Number of leading groups whose random effects are recorded.
    pub record_groups: usize,
    /// Also record the auxiliary variables a_σ², a_τ² and a_Σ.
    pub record_auxiliary: bool,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        GibbsOptions { iters: 10_000, warmup: 2_000, thin: 5, seed: 1, record_groups: 3, record_auxiliary: false }
    }
}

/// Retained draws, one column per recorded scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    pub iters: usize,
    pub warmup: usize,
    pub thin: usize,
    pub seed: u64,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|k| self.draws[k].as_slice())
    }

    /// Write draws as CSV with one column per parameter.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.names)?;
        for r in 0..self.len() {
            w.write_record(self.draws.iter().map(|c| c[r].to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Names of recorded covariance entries, e.g. `Sigma1[0,1]`.
pub fn covariance_entry_name(level: usize, i: usize, j: usize) -> String {
    format!("Sigma{}[{i},{j}]", level + 1)
}

#[derive(Clone)]
struct Chain {
    beta: DVector<f64>,
    u1: Vec<DVector<f64>>,
    u2: Vec<Vec<DVector<f64>>>,
    sigsq: f64,
    a_sigsq: f64,
    tausq: f64,
    a_tausq: f64,
    zeta: DVector<f64>,
    a_zeta: DVector<f64>,
    sigma: Vec<DMatrix<f64>>,
    a_sigma: Vec<DVector<f64>>,
}

/// Error-variance step: σ² | rest then a_σ² | rest, given the residual sum
/// of squares over `n` observations.
pub(crate) fn draw_error_variance(
    rng: &mut ChaCha8Rng,
    prior: &PriorSpec,
    a_sigsq: f64,
    n: usize,
    rss: f64,
) -> (f64, f64) {
    let sigsq = inv_chisq(rng, prior.nu_sigsq + n as f64, 1.0 / a_sigsq + rss);
    let a = inv_chisq(rng, prior.nu_sigsq + 1.0, 1.0 / sigsq + 1.0 / (prior.nu_sigsq * prior.s_sigsq.powi(2)));
    (sigsq, a)
}

/// Model constants shared by every scan.
struct Sampler<'a> {
    engine: Engine<'a>,
    prior: &'a PriorSpec,
    /// Random-effect dimension per level.
    qs: Vec<usize>,
    /// Number of random-effect vectors per level.
    counts: Vec<usize>,
    lambda_a: Vec<DVector<f64>>,
    /// Offset of the S block in β.
    off: usize,
}

impl<'a> Sampler<'a> {
    fn new(ds: &'a MultilevelDataset, prior: &'a PriorSpec) -> Result<Self> {
        let engine = Engine::new(ds, prior)?;
        let (qs, counts) = match &ds.groups {
            Groups::Two { q, groups } => (vec![*q], vec![groups.len()]),
            Groups::Three { q1, q2, groups } => {
                (vec![*q1, *q2], vec![groups.len(), groups.iter().map(|g| g.subgroups.len()).sum()])
            }
        };
        let lambda_a = prior.cov.iter().map(|c| c.lambda_a().diagonal()).collect();
        Ok(Sampler { engine, prior, qs, counts, lambda_a, off: ds.p_r + ds.p_a })
    }

    fn start(&self) -> Chain {
        let ds = self.engine.dataset();
        Chain {
            beta: DVector::zeros(ds.p()),
            u1: Vec::new(),
            u2: Vec::new(),
            sigsq: 1.0,
            a_sigsq: 1.0,
            tausq: 1.0,
            a_tausq: 1.0,
            zeta: DVector::from_element(ds.p_s, 1.0),
            a_zeta: DVector::from_element(ds.p_s, 1.0),
            sigma: self.qs.iter().map(|&q| DMatrix::identity(q, q)).collect(),
            a_sigma: self.qs.iter().map(|&q| DVector::from_element(q, 1.0)).collect(),
        }
    }

    /// One systematic scan over every full conditional.
    fn scan(&self, rng: &mut ChaCha8Rng, c: &mut Chain) -> Result<()> {
        let (engine, prior) = (&self.engine, self.prior);
        let ds = engine.dataset();
        let sigma_inv = c
            .sigma
            .iter()
            .map(|s| spd_inverse(s).ok_or_else(|| Error::NumericalBreakdown("Sigma draw is not SPD".into())))
            .collect::<Result<Vec<_>>>()?;
        let w =
            SystemWeights { recip_sigsq: 1.0 / c.sigsq, sigma_inv, recip_tausq: 1.0 / c.tausq, zeta: c.zeta.clone() };
        let mut z = || normal(rng);

        // (β, u) | rest, with the random-effect outer products collected
        let mut rss = 0.0;
        let mut outer: Vec<DMatrix<f64>> = self.qs.iter().map(|&q| DMatrix::zeros(q, q)).collect();
        match &ds.groups {
            Groups::Two { groups, .. } => {
                let (beta, us) = engine.two_level_system(&w)?.factor()?.sample(&mut z)?;
                for (g, u) in groups.iter().zip(&us) {
                    rss += (&g.y - &g.x * &beta - &g.z * u).norm_squared();
                    outer[0] += u * u.transpose();
                }
                c.beta = beta;
                c.u1 = us;
            }
            Groups::Three { groups, .. } => {
                let sys = engine.three_level_system(&w)?;
                let (beta, us) = sys.factor()?.sample(&mut z)?;
                c.u1.clear();
                c.u2.clear();
                for (g, (u1, u2s)) in groups.iter().zip(us) {
                    outer[0] += &u1 * u1.transpose();
                    for (s, u2) in g.subgroups.iter().zip(&u2s) {
                        rss += (&s.y - &s.x * &beta - &s.z1 * &u1 - &s.z2 * u2).norm_squared();
                        outer[1] += u2 * u2.transpose();
                    }
                    c.u1.push(u1);
                    c.u2.push(u2s);
                }
                c.beta = beta;
            }
        }

        let (sigsq, a_sigsq) = draw_error_variance(rng, prior, c.a_sigsq, ds.n_obs(), rss);
        c.sigsq = sigsq;
        c.a_sigsq = a_sigsq;

        if prior.family.is_global_local() {
            let p_s = c.zeta.len();
            let b2: Vec<f64> = (0..p_s).map(|h| c.beta[self.off + h].powi(2)).collect();
            let wss: f64 = (0..p_s).map(|h| c.zeta[h] * b2[h]).sum();
            c.tausq = inv_chisq(rng, p_s as f64 + 1.0, 1.0 / c.a_tausq + wss);
            c.a_tausq = inv_chisq(rng, 2.0, 1.0 / c.tausq + 1.0 / prior.s_tausq.powi(2));
            for h in 0..p_s {
                let b2 = b2[h].max(f64::MIN_POSITIVE);
                match prior.family {
                    PriorFamily::Laplace => {
                        c.zeta[h] = inv_gaussian(rng, (c.tausq / b2).sqrt(), 1.0);
                    }
                    PriorFamily::Horseshoe => {
                        c.zeta[h] = gamma(rng, 1.0, 0.5 * b2 / c.tausq + c.a_zeta[h]);
                        c.a_zeta[h] = gamma(rng, 1.0, c.zeta[h] + 1.0);
                    }
                    PriorFamily::Neg { lambda } => {
                        let mean = (2.0 * c.a_zeta[h] * c.tausq / b2).sqrt();
                        c.zeta[h] = inv_gaussian(rng, mean, 2.0 * c.a_zeta[h]);
                        c.a_zeta[h] = gamma(rng, lambda + 1.0, 1.0 / c.zeta[h] + 1.0);
                    }
                    PriorFamily::Gaussian => unreachable!(),
                }
                if !(c.zeta[h] > 0.0 && c.zeta[h].is_finite()) {
                    return Err(Error::NumericalBreakdown(format!("zeta[{h}] = {}", c.zeta[h])));
                }
            }
        }

        for (l, &q) in self.qs.iter().enumerate() {
            let prior_scale = DMatrix::from_diagonal(&c.a_sigma[l].map(|a| 1.0 / a));
            let nu = prior.cov[l].nu;
            let df = nu + self.counts[l] as f64 + q as f64 - 1.0;
            c.sigma[l] = inverse_wishart(rng, df, &(prior_scale + &outer[l]))?;
            let inv =
                spd_inverse(&c.sigma[l]).ok_or_else(|| Error::NumericalBreakdown("Sigma draw is not SPD".into()))?;
            for k in 0..q {
                c.a_sigma[l][k] = inv_chisq(rng, nu + q as f64, inv[(k, k)] + self.lambda_a[l][k]);
            }
        }
        Ok(())
    }
}

pub fn gibbs_fit(ds: &MultilevelDataset, prior: &PriorSpec, opts: &GibbsOptions) -> Result<PosteriorSamples> {
    if opts.thin == 0 || opts.iters <= opts.warmup {
        return Err(Error::InvalidParameter("need thin >= 1 and iters > warmup".into()));
    }
    let sampler = Sampler::new(ds, prior)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let p_s = ds.p_s;
    let gl = prior.family.is_global_local();
    let qs = sampler.qs.clone();
    let mut c = sampler.start();

    let mut names: Vec<String> = ds.names.clone();
    names.push("sigsq".into());
    if gl {
        names.push("tausq".into());
        names.extend((1..=p_s).map(|h| format!("zeta[{h}]")));
    }
    for (l, &q) in qs.iter().enumerate() {
        for i in 0..q {
            for j in i..q {
                names.push(covariance_entry_name(l, i, j));
            }
        }
    }
    let recorded = opts.record_groups.min(ds.m());
    match &ds.groups {
        Groups::Two { groups, q } => {
            for g in &groups[..recorded] {
                names.extend((0..*q).map(|k| format!("u[{}][{k}]", g.id)));
            }
        }
        Groups::Three { groups, q1, q2 } => {
            for g in &groups[..recorded] {
                names.extend((0..*q1).map(|k| format!("uL1[{}][{k}]", g.id)));
                let s = &g.subgroups[0];
                names.extend((0..*q2).map(|k| format!("uL2[{},{}][{k}]", g.id, s.id)));
            }
        }
    }
    if opts.record_auxiliary {
        names.push("a_sigsq".into());
        if gl {
            names.push("a_tausq".into());
        }
        for (l, &q) in qs.iter().enumerate() {
            names.extend((0..q).map(|k| format!("a_Sigma{}[{k}]", l + 1)));
        }
    }
    let keep = (opts.iters - opts.warmup) / opts.thin;
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(keep); names.len()];

    for it in 0..opts.iters {
        sampler.scan(&mut rng, &mut c).map_err(|e| e.at_iteration(it + 1))?;
        if it >= opts.warmup && (it + 1 - opts.warmup).is_multiple_of(opts.thin) {
            let mut row: Vec<f64> = c.beta.iter().copied().collect();
            row.push(c.sigsq);
            if gl {
                row.push(c.tausq);
                row.extend(c.zeta.iter());
            }
            for (l, &q) in qs.iter().enumerate() {
                for i in 0..q {
                    for j in i..q {
                        row.push(c.sigma[l][(i, j)]);
                    }
                }
            }
            for i in 0..recorded {
                row.extend(c.u1[i].iter());
                if let Some(u2) = c.u2.get(i) {
                    row.extend(u2[0].iter());
                }
            }
            if opts.record_auxiliary {
                row.push(c.a_sigsq);
                if gl {
                    row.push(c.a_tausq);
                }
                for a in &c.a_sigma {
                    row.extend(a.iter());
                }
            }
            for (col, v) in draws.iter_mut().zip(row) {
                col.push(v);
            }
        }
    }
    Ok(PosteriorSamples { names, draws, iters: opts.iters, warmup: opts.warmup, thin: opts.thin, seed: opts.seed })
}

/// Gaussian kernel density estimate of `draws` on `grid`, with Silverman's
/// rule-of-thumb bandwidth 0.9 min(sd, IQR/1.34) n^(-1/5).
pub fn kde_marginal(draws: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let n = draws.len();
    if n < 100 {
        return Err(Error::TooFewDraws(n));
    }
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |p: f64| {
        let h = p * (n - 1) as f64;
        let (lo, frac) = (h.floor() as usize, h - h.floor());
        sorted[lo] + frac * (sorted[(lo + 1).min(n - 1)] - sorted[lo])
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::TooFewDraws(0));
    }
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let cutoff = 8.0 * h;
    Ok(grid
        .iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&d| d < x - cutoff);
            let hi = sorted.partition_point(|&d| d <= x + cutoff);
            sorted[lo..hi].iter().map(|&d| (-0.5 * ((x - d) / h).powi(2)).exp()).sum::<f64>() * norm
        })
        .collect())
}

/// Write any table of named columns as CSV.
pub fn write_columns(path: impl AsRef<Path>, names: &[String], cols: &[Vec<f64>]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", names.join(","))?;
    let rows = cols.first().map_or(0, Vec::len);
    for r in 0..rows {
        let line: Vec<String> = cols.iter().map(|c| c[r].to_string()).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    Ok(())
}
