//! Seeded Monte Carlo experiments: stationarity statistics, reverse-interval
//! concentration, end-to-end rate-distortion runs, lossless rate
//! concentration, and Gauss-source statistics. Identical configs produce
//! identical reports; blocks run in parallel with per-block derived seeds
//! and are aggregated in block order.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{cmp_pow2, dyadic, entropy, log2_rat, rat_from_str, rat_to_f64, Rat};
use crate::lossless::{
    build_memoryless, cf_convergents, cf_digits, fundamental_interval, RepresentativeGrid,
};
use crate::lossy::{
    block_distortion, build_pm_dual, decode_block, delta_interval, encode,
    functional_representation, CodecParams, DistortionMeasure, JointPMF, ScanOrder,
};
use crate::serialize::{
    model_from_dto, BlockRecord, ExperimentConfig, ExperimentKind, Report,
};
use crate::source::{SourceModel, State, Symbol};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Per-block generator, independent across blocks for a fixed master seed.
pub fn block_rng(seed: u64, block: usize) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(seed ^ splitmix64(block as u64 + 1)))
}

/// Uniform dyadic state with `b` fraction bits per coordinate, resampled
/// whenever a coordinate lands on a partition boundary.
pub fn sample_initial_state(model: &SourceModel, rng: &mut ChaCha12Rng, b: u64) -> State {
    let theta = loop {
        let t = dyadic(rng.gen_biguint(b), b);
        if model.sigma0(&t).is_ok() {
            break t;
        }
    };
    let phi = loop {
        let p = dyadic(rng.gen_biguint(b), b);
        if model.sigma1(&p).is_ok() {
            break p;
        }
    };
    State { theta, phi }
}

/// Exact categorical inversion over half-open cells of the cumulative pmf:
/// `u` is a 64-bit dyadic in [0,1).
fn categorical(cum: &[Rat], u: &Rat) -> Symbol {
    for j in 1..cum.len() {
        if *u < cum[j] {
            return j - 1;
        }
    }
    cum.len() - 2
}

fn cumulative(p: &[Rat]) -> Vec<Rat> {
    let mut cum = Vec::with_capacity(p.len() + 1);
    let mut acc = Rat::zero();
    cum.push(acc.clone());
    for w in p {
        acc += w;
        cum.push(acc.clone());
    }
    cum
}

/// i.i.d. block from the pmf whose cumulative is `cum`.
pub fn sample_iid_block(cum: &[Rat], rng: &mut ChaCha12Rng, n: usize) -> Vec<Symbol> {
    (0..n)
        .map(|_| categorical(cum, &dyadic(BigUint::from(rng.next_u64()), 64)))
        .collect()
}

fn tv(emp: &[f64], p: &[f64]) -> f64 {
    0.5 * emp.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone)]
struct PairCounts {
    xy: Vec<u64>,
    y: Vec<u64>,
    yy: Vec<u64>,
    x2_y1: Vec<u64>,
    z: Vec<u64>,
    zx: Vec<u64>,
    total: u64,
}

impl PairCounts {
    fn new(nx: usize, ny: usize, nz: usize) -> Self {
        PairCounts {
            xy: vec![0; nx * ny],
            y: vec![0; ny],
            yy: vec![0; ny * ny],
            x2_y1: vec![0; nx * ny],
            z: vec![0; nz],
            zx: vec![0; nz * nx],
            total: 0,
        }
    }

    fn merge(mut self, other: PairCounts) -> PairCounts {
        let add = |a: &mut Vec<u64>, b: &[u64]| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        };
        add(&mut self.xy, &other.xy);
        add(&mut self.y, &other.y);
        add(&mut self.yy, &other.yy);
        add(&mut self.x2_y1, &other.x2_y1);
        add(&mut self.z, &other.z);
        add(&mut self.zx, &other.zx);
        self.total += other.total;
        self
    }
}

/// Trajectory statistics of the stationary process: total-variation
/// distances of the empirical laws against the model's exact laws, measured
/// over `samples` independent two-step trajectories from uniform initial
/// states.
pub fn verify_lemma3(
    model: &SourceModel,
    pmf: &JointPMF,
    samples: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>> {
    let nx = pmf.x_len();
    let ny = pmf.y_len();
    let nz = model.z_alphabet;
    let counts = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = block_rng(seed, i);
            let mut c = PairCounts::new(nx, ny, nz);
            loop {
                let s0 = sample_initial_state(model, &mut rng, 128);
                let Ok(t) = model.trajectory(&s0, 2) else {
                    continue;
                };
                c.xy[t.x[0] * ny + t.y[0]] += 1;
                c.y[t.y[0]] += 1;
                c.yy[t.y[0] * ny + t.y[1]] += 1;
                c.x2_y1[t.x[1] * ny + t.y[0]] += 1;
                c.z[t.z[0]] += 1;
                c.zx[t.z[0] * nx + t.x[0]] += 1;
                c.total = 1;
                break;
            }
            c
        })
        .reduce(
            || PairCounts::new(nx, ny, nz),
            |a, b| a.merge(b),
        );
    let total = counts.total as f64;
    let emp = |v: &[u64]| -> Vec<f64> { v.iter().map(|&c| c as f64 / total).collect() };
    let p_xy: Vec<f64> = (0..nx)
        .flat_map(|x| (0..ny).map(move |y| (x, y)))
        .map(|(x, y)| rat_to_f64(pmf.prob(x, y)))
        .collect();
    let p_y: Vec<f64> = pmf.p_y().iter().map(rat_to_f64).collect();
    let p_x: Vec<f64> = pmf.p_x().iter().map(rat_to_f64).collect();
    let p_yy: Vec<f64> = p_y
        .iter()
        .flat_map(|a| p_y.iter().map(move |b| a * b))
        .collect();
    let p_x2y1: Vec<f64> = p_x
        .iter()
        .flat_map(|a| p_y.iter().map(move |b| a * b))
        .collect();
    let p_z: Vec<f64> = (0..nz)
        .map(|j| rat_to_f64(&model.phi_partition.cell_length(j)))
        .collect();
    let p_zx: Vec<f64> = p_z
        .iter()
        .flat_map(|a| p_x.iter().map(move |b| a * b))
        .collect();
    let mut out = BTreeMap::new();
    out.insert("tv_xy".into(), tv(&emp(&counts.xy), &p_xy));
    out.insert("tv_y".into(), tv(&emp(&counts.y), &p_y));
    out.insert("tv_y_pairs".into(), tv(&emp(&counts.yy), &p_yy));
    out.insert("tv_x_next_y_prev".into(), tv(&emp(&counts.x2_y1), &p_x2y1));
    out.insert("tv_z".into(), tv(&emp(&counts.z), &p_z));
    out.insert("tv_zx".into(), tv(&emp(&counts.zx), &p_zx));
    out.insert(
        "tv_max".into(),
        out.values().cloned().fold(0.0f64, f64::max),
    );
    out.insert("samples".into(), total);
    Ok(out)
}

/// Reverse-interval concentration over `blocks` sampled trajectories:
/// fraction of blocks whose interval exceeds `2^{-n rate}`, fraction whose
/// initial theta escapes the interval, and the mean normalized log-length.
pub fn verify_theorem1(
    model: &SourceModel,
    rate: &Rat,
    epsilon: &Rat,
    n: usize,
    blocks: usize,
    precision: u64,
    seed: u64,
) -> Result<(Vec<BlockRecord>, BTreeMap<String, f64>)> {
    let p = rate.numer().to_i64().ok_or_else(|| Error::Parse("rate too large".into()))?;
    let q = rate.denom().to_u64().ok_or_else(|| Error::Parse("rate too large".into()))?;
    let per_block: Result<Vec<(BlockRecord, bool)>> = (0..blocks)
        .into_par_iter()
        .map(|i| {
            let mut rng = block_rng(seed, i);
            let (s0, y) = loop {
                let s0 = sample_initial_state(model, &mut rng, precision);
                match model.trajectory(&s0, n) {
                    Ok(t) => break (s0, t.y),
                    Err(Error::BoundaryAtStep { .. }) | Err(Error::BoundaryPoint(_)) => continue,
                    Err(e) => return Err(e),
                }
            };
            let delta = delta_interval(model, &y, epsilon)?;
            let len = delta.length();
            // exceeds iff |delta| > 2^{-n p/q}, decided exactly
            let exceeds =
                cmp_pow2(&len, -(n as i64) * p, q) == std::cmp::Ordering::Greater;
            let inside = delta.contains(&s0.theta);
            Ok((
                BlockRecord {
                    block: i,
                    success: inside,
                    m: "0".into(),
                    log2_delta_len: log2_rat(&len),
                    distortion: None,
                    companion_attempts: 0,
                },
                exceeds,
            ))
        })
        .collect();
    let per_block = per_block?;
    let records: Vec<BlockRecord> = per_block.iter().map(|(r, _)| r.clone()).collect();
    let b = blocks as f64;
    let frac_exceeds = per_block.iter().filter(|(_, e)| *e).count() as f64 / b;
    let frac_outside = records.iter().filter(|r| !r.success).count() as f64 / b;
    let mean_rate = records
        .iter()
        .map(|r| -r.log2_delta_len / n as f64)
        .sum::<f64>()
        / b;
    let mut agg = BTreeMap::new();
    agg.insert("frac_delta_exceeds".into(), frac_exceeds);
    agg.insert("frac_theta_outside".into(), frac_outside);
    agg.insert("mean_normalized_log_delta".into(), mean_rate);
    Ok((records, agg))
}

/// End-to-end lossy blocks: sample the source i.i.d., encode, decode with
/// feedforward replay, account distortion exactly per block.
pub fn rd_experiment(
    model: &SourceModel,
    pmf: &JointPMF,
    params: &CodecParams,
    blocks: usize,
    seed: u64,
) -> Result<(Vec<BlockRecord>, BTreeMap<String, f64>)> {
    let cum = cumulative(&pmf.p_y());
    let d = DistortionMeasure::hamming(pmf.x_len().max(pmf.y_len()));
    let records: Result<Vec<BlockRecord>> = (0..blocks)
        .into_par_iter()
        .map(|i| {
            let mut rng = block_rng(seed, i);
            let y = sample_iid_block(&cum, &mut rng, params.n);
            let enc = encode(model, &y, params)?;
            let distortion = if enc.success {
                let x_hat = decode_block(model, &enc.m, &y, params)?;
                Some(rat_to_f64(&block_distortion(&x_hat, &y, &d)?))
            } else {
                None
            };
            Ok(BlockRecord {
                block: i,
                success: enc.success,
                m: enc.m.to_string(),
                log2_delta_len: log2_rat(&enc.delta.length()),
                distortion,
                companion_attempts: enc.attempts,
            })
        })
        .collect();
    let records = records?;
    let successes: Vec<&BlockRecord> = records.iter().filter(|r| r.success).collect();
    let b = blocks as f64;
    let mut agg = BTreeMap::new();
    agg.insert("success_rate".into(), successes.len() as f64 / b);
    agg.insert(
        "mean_distortion".into(),
        if successes.is_empty() {
            0.0
        } else {
            successes.iter().filter_map(|r| r.distortion).sum::<f64>() / successes.len() as f64
        },
    );
    agg.insert(
        "mean_companion_attempts".into(),
        records.iter().map(|r| r.companion_attempts as f64).sum::<f64>() / b,
    );
    let grid = RepresentativeGrid::new(params.n, &params.rate)?;
    agg.insert(
        "effective_rate".into(),
        log2_rat(&Rat::from_integer(BigInt::from(grid.m_count.clone()))) / params.n as f64,
    );
    Ok((records, agg))
}

/// Lossless fundamental-interval rate statistic over sampled blocks.
pub fn lossless_rate_experiment(
    p_y: &[Rat],
    n: usize,
    blocks: usize,
    seed: u64,
) -> Result<(Vec<BlockRecord>, BTreeMap<String, f64>)> {
    let model = build_memoryless(p_y)?;
    let cum = cumulative(p_y);
    let h = entropy(p_y);
    let records: Result<Vec<BlockRecord>> = (0..blocks)
        .into_par_iter()
        .map(|i| {
            let mut rng = block_rng(seed, i);
            let y = sample_iid_block(&cum, &mut rng, n);
            let len = fundamental_interval(&model, &y)?.length();
            Ok(BlockRecord {
                block: i,
                success: true,
                m: "0".into(),
                log2_delta_len: log2_rat(&len),
                distortion: None,
                companion_attempts: 0,
            })
        })
        .collect();
    let records = records?;
    let stats: Vec<f64> = records
        .iter()
        .map(|r| -r.log2_delta_len / n as f64)
        .collect();
    let b = blocks as f64;
    let mut agg = BTreeMap::new();
    agg.insert("entropy".into(), h);
    agg.insert("mean_rate".into(), stats.iter().sum::<f64>() / b);
    agg.insert(
        "frac_within_0_05".into(),
        stats.iter().filter(|s| (*s - h).abs() <= 0.05).count() as f64 / b,
    );
    Ok((records, agg))
}

/// One application of the continued-fraction shift to `p/q` in (0,1).
fn gauss_step(p: BigUint, q: BigUint) -> (BigUint, BigUint) {
    // theta = p/q -> 1/theta - floor(1/theta) = (q mod p)/p
    let r = &q % &p;
    (r, p)
}

/// Gauss-source statistics: sup-norm distance between the empirical CDF of
/// the state after `cdf_steps` iterations and `log2(1+t)`, plus the mean
/// normalized log-denominator of the order-`n` convergent.
pub fn gauss_experiment(
    cdf_samples: usize,
    cdf_steps: usize,
    levy_n: usize,
    levy_trajectories: usize,
    seed: u64,
) -> Result<(Vec<BlockRecord>, BTreeMap<String, f64>)> {
    let b_cdf = 64 + 4 * cdf_steps as u64;
    let mut thetas: Vec<f64> = (0..cdf_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = block_rng(seed, i);
            loop {
                let k = rng.gen_biguint(b_cdf);
                if k.is_zero() {
                    continue;
                }
                let mut p = k;
                let mut q = BigUint::one() << b_cdf;
                let mut ok = true;
                for _ in 0..cdf_steps {
                    if p.is_zero() {
                        ok = false;
                        break;
                    }
                    let (np, nq) = gauss_step(p, q);
                    p = np;
                    q = nq;
                }
                if ok && !p.is_zero() {
                    return rat_to_f64(&Rat::new(p.into(), q.into()));
                }
            }
        })
        .collect();
    thetas.sort_by(f64::total_cmp);
    let nn = thetas.len() as f64;
    let mut sup = 0.0f64;
    for (i, t) in thetas.iter().enumerate() {
        let f = (1.0 + t).log2();
        sup = sup.max((i as f64 / nn - f).abs());
        sup = sup.max(((i + 1) as f64 / nn - f).abs());
    }
    let b_levy = 64 + 4 * levy_n as u64;
    let records: Vec<BlockRecord> = (0..levy_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = block_rng(seed.wrapping_add(0x5eed), i);
            let stat = loop {
                let k = rng.gen_biguint(b_levy);
                if k.is_zero() {
                    continue;
                }
                let theta = dyadic(k, b_levy);
                let digits = cf_digits(&theta, levy_n);
                if digits.len() < levy_n || digits.iter().any(|&d| d == 0) {
                    continue;
                }
                let (_, q) = cf_convergents(&digits).expect("positive digits");
                // the growth constant pi^2/(12 ln 2) is the limit of the
                // normalized natural log of the convergent denominator
                break log2_rat(&Rat::from_integer(q.abs())) * std::f64::consts::LN_2
                    / levy_n as f64;
            };
            BlockRecord {
                block: i,
                success: true,
                m: "0".into(),
                log2_delta_len: stat,
                distortion: None,
                companion_attempts: 0,
            }
        })
        .collect();
    let mean_levy =
        records.iter().map(|r| r.log2_delta_len).sum::<f64>() / levy_trajectories as f64;
    let mut agg = BTreeMap::new();
    agg.insert("ecdf_sup_distance".into(), sup);
    agg.insert("mean_levy_stat".into(), mean_levy);
    let levy_target = std::f64::consts::PI.powi(2) * std::f64::consts::LOG2_E / 12.0;
    agg.insert("levy_target".into(), levy_target);
    agg.insert("entropy_rate_target".into(), 2.0 * levy_target);
    Ok((records, agg))
}

fn pmf_from_config(cfg: &ExperimentConfig) -> Result<JointPMF> {
    let rows = cfg
        .p_xy
        .as_ref()
        .ok_or_else(|| Error::Parse("config missing p_xy".into()))?;
    let p: Result<Vec<Vec<Rat>>> = rows
        .iter()
        .map(|r| r.iter().map(|s| rat_from_str(s)).collect())
        .collect();
    JointPMF::new(p?)
}

fn model_from_config(cfg: &ExperimentConfig, pmf: &JointPMF) -> Result<SourceModel> {
    match &cfg.model {
        Some(dto) => model_from_dto(dto),
        None => {
            let fr = functional_representation(pmf)?;
            build_pm_dual(pmf, &fr)
        }
    }
}

fn codec_params_from_config(cfg: &ExperimentConfig) -> Result<CodecParams> {
    Ok(CodecParams {
        n: cfg.n,
        rate: cfg.rate_rat()?,
        epsilon: rat_from_str(cfg.epsilon.as_deref().unwrap_or("1/20"))?,
        delta_typ: rat_from_str(cfg.delta_typ.as_deref().unwrap_or("1/20"))?,
        search_budget: cfg.search_budget.unwrap_or(4096),
        scan_order: ScanOrder::LeastIndex,
    })
}

/// Run one configured experiment to a full report. `model_file` references
/// must be resolved into `cfg.model` by the caller beforehand.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    if cfg.blocks == 0 {
        return Err(Error::Parse("blocks must be at least 1".into()));
    }
    let (records, mut aggregates) = match cfg.kind {
        ExperimentKind::Lemma3 => {
            let pmf = pmf_from_config(cfg)?;
            let model = model_from_config(cfg, &pmf)?;
            let agg = verify_lemma3(&model, &pmf, cfg.samples.unwrap_or(100_000), cfg.seed)?;
            (Vec::new(), agg)
        }
        ExperimentKind::Theorem1 => {
            let pmf = pmf_from_config(cfg)?;
            let model = model_from_config(cfg, &pmf)?;
            let mut out = verify_theorem1(
                &model,
                &cfg.rate_rat()?,
                &rat_from_str(cfg.epsilon.as_deref().unwrap_or("1/20"))?,
                cfg.n,
                cfg.blocks,
                cfg.precision(),
                cfg.seed,
            )?;
            out.1
                .insert("mutual_information".into(), pmf.mutual_information());
            out
        }
        ExperimentKind::RateDistortion => {
            let pmf = pmf_from_config(cfg)?;
            let model = model_from_config(cfg, &pmf)?;
            let params = codec_params_from_config(cfg)?;
            let mut out = rd_experiment(&model, &pmf, &params, cfg.blocks, cfg.seed)?;
            out.1
                .insert("mutual_information".into(), pmf.mutual_information());
            out
        }
        ExperimentKind::LosslessRate => {
            let p: Result<Vec<Rat>> = cfg
                .p_y
                .as_ref()
                .ok_or_else(|| Error::Parse("config missing p_y".into()))?
                .iter()
                .map(|s| rat_from_str(s))
                .collect();
            lossless_rate_experiment(&p?, cfg.n, cfg.blocks, cfg.seed)?
        }
        ExperimentKind::Gauss => gauss_experiment(
            cfg.samples.unwrap_or(100_000),
            50,
            cfg.n,
            cfg.blocks,
            cfg.seed,
        )?,
    };
    aggregates.insert("n".into(), cfg.n as f64);
    let assertion_results = cfg
        .assertions
        .iter()
        .map(|a| {
            let ok = aggregates.get(&a.stat).is_some_and(|v| a.holds(*v));
            (a.stat.clone(), ok)
        })
        .collect();
    Ok(Report {
        kind: cfg.kind,
        seed: cfg.seed,
        n: cfg.n,
        blocks: cfg.blocks,
        records,
        aggregates,
        assertion_results,
    })
}
