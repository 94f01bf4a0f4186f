//! Independent reference implementations and fuzz generators.

use std::sync::Arc;

use ood_core::dist::{DiscreteDomain, FiniteDistribution, LabeledInDistribution};
use ood_core::Scenario64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// One kind of point: integer in/out weights and a class split.
#[derive(Clone, Debug)]
struct PointType {
    w_in: u32,
    w_out: u32,
    split: Vec<u32>,
}

#[derive(Clone, Copy, Debug)]
pub struct FuzzShape {
    pub min_n: usize,
    pub max_n: usize,
    pub max_k: usize,
    /// Every point carries both in- and out-mass.
    pub full_support: bool,
}

/// Random scenario built from a small pool of point types.
///
/// Points of one type get bit-identical masses, so mathematical ties stay
/// exact. Distinct types have coprime `(w_in, w_out)` pairs, so their
/// likelihood ratios differ by far more than rounding error.
pub fn scenario(rng: &mut ChaCha8Rng, shape: FuzzShape) -> Scenario64 {
    let n = rng.gen_range(shape.min_n..=shape.max_n);
    let k = rng.gen_range(2..=shape.max_k);
    let lo = if shape.full_support { 1 } else { 0 };
    let mut pairs = Vec::new();
    for a in lo..=12u32 {
        for b in lo..=12u32 {
            if (a, b) != (0, 0) && gcd(a, b) == 1 {
                pairs.push((a, b));
            }
        }
    }
    let pool_size = rng.gen_range(2..=pairs.len().min(24));
    let chosen: Vec<(u32, u32)> = pairs.choose_multiple(rng, pool_size).copied().collect();
    // one split per in-weight, so equal in-weights give bit-identical marginals
    let splits: Vec<Vec<u32>> = (0..=12)
        .map(|_| {
            let mut split: Vec<u32> = (0..k).map(|_| rng.gen_range(0..=3)).collect();
            if split.iter().all(|&c| c == 0) {
                split[rng.gen_range(0..k)] = 1;
            }
            split
        })
        .collect();
    let mut types: Vec<PointType> = chosen
        .into_iter()
        .map(|(w_in, w_out)| PointType { w_in, w_out, split: splits[w_in as usize].clone() })
        .collect();
    if !shape.full_support {
        // guarantee both supports and allow dead points
        types.push(PointType { w_in: 1, w_out: 0, split: splits[1].clone() });
        types.push(PointType { w_in: 0, w_out: 1, split: splits[0].clone() });
        types.push(PointType { w_in: 0, w_out: 0, split: splits[0].clone() });
    }
    let mut assign: Vec<usize> = (0..n).map(|_| rng.gen_range(0..types.len())).collect();
    if !types.iter().zip(0..).any(|(t, i)| t.w_in > 0 && assign.contains(&i)) {
        assign[0] = types.iter().position(|t| t.w_in > 0).unwrap();
    }
    if !types.iter().zip(0..).any(|(t, i)| t.w_out > 0 && assign.contains(&i)) {
        let last = n - 1;
        assign[last] = types.iter().position(|t| t.w_out > 0).unwrap();
        if !assign.iter().any(|&i| types[i].w_in > 0) {
            assign[0] = types.iter().position(|t| t.w_in > 0).unwrap();
        }
    }

    let w_in: f64 = assign.iter().map(|&i| types[i].w_in as f64).sum();
    let w_out: f64 = assign.iter().map(|&i| types[i].w_out as f64).sum();
    let domain = Arc::new(DiscreteDomain::indexed(n).unwrap());
    let mut joint = vec![0.0; k * n];
    for (x, &i) in assign.iter().enumerate() {
        let t = &types[i];
        let total: u32 = t.split.iter().sum();
        for c in 0..k {
            joint[c * n + x] = t.w_in as f64 * t.split[c] as f64 / (total as f64 * w_in);
        }
    }
    let out: Vec<f64> = assign.iter().map(|&i| types[i].w_out as f64 / w_out).collect();
    let prior = rng.gen_range(1..=9) as f64 / 10.0;
    Scenario64::new(
        LabeledInDistribution::new(domain.clone(), k, joint).unwrap(),
        FiniteDistribution::new(domain, out).unwrap(),
        prior,
    )
    .unwrap()
}

/// Scores from a coarse grid (plenty of ties) with occasional `+∞`.
pub fn positive_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.gen_bool(0.05) { f64::INFINITY } else { rng.gen_range(1..=20) as f64 / 7.0 })
        .collect()
}

/// Sample with heavy ties and both infinities.
pub fn tied_sample(rng: &mut ChaCha8Rng, n: usize, levels: i32) -> Vec<f64> {
    (0..n)
        .map(|_| match rng.gen_range(0..20) {
            0 => f64::INFINITY,
            1 => f64::NEG_INFINITY,
            _ => rng.gen_range(0..levels) as f64 * 0.25,
        })
        .collect()
}

/// AUC as a double loop over all in/out pairs.
pub fn pairwise_auc(in_s: &[f64], out_s: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in in_s {
        for &b in out_s {
            if a > b {
                twice += 2;
            } else if a == b {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * in_s.len() * out_s.len()) as f64
}

/// FPR at TPR `q` by trying every in-score as threshold and keeping the
/// largest one whose TPR reaches `q`.
pub fn enumerated_fpr(in_s: &[f64], out_s: &[f64], q: f64) -> f64 {
    let n = in_s.len() as f64;
    let mut best = f64::NEG_INFINITY;
    let mut found = false;
    for &t in in_s {
        let tpr = in_s.iter().filter(|&&s| s >= t).count() as f64;
        if tpr >= q * n - 1e-12 * n && (!found || t > best) {
            best = t;
            found = true;
        }
    }
    out_s.iter().filter(|&&s| s >= best).count() as f64 / out_s.len() as f64
}

/// Population AUC as a double sum over support points.
pub fn double_sum_auc(s: &Scenario64, score: &[f64]) -> f64 {
    let a = s.in_dist().marginal();
    let b = s.out_dist().mass();
    let mut total = 0.0;
    for x in 0..s.len() {
        for z in 0..s.len() {
            let w = a[x] * b[z];
            if w == 0.0 {
                continue;
            }
            if score[x] > score[z] {
                total += w;
            } else if score[x] == score[z] {
                total += 0.5 * w;
            }
        }
    }
    total
}

/// Population FPR at TPR `q` by threshold enumeration.
pub fn enumerated_fpr_exact(s: &Scenario64, score: &[f64], q: f64) -> f64 {
    let a = s.in_dist().marginal();
    let b = s.out_dist().mass();
    let support: Vec<usize> = (0..s.len()).filter(|&x| a[x] > 0.0 || b[x] > 0.0).collect();
    let mut best = f64::NEG_INFINITY;
    for &x in &support {
        let t = score[x];
        let tpr: f64 = support.iter().filter(|&&z| score[z] >= t).map(|&z| a[z]).sum();
        if tpr >= q - 1e-12 && t > best {
            best = t;
        }
    }
    support.iter().filter(|&&z| score[z] >= best).map(|&z| b[z]).sum()
}

/// Pairwise check that `f` and `g` order every pair of indices the same way.
pub fn same_order(f: &[f64], g: &[f64]) -> bool {
    (0..f.len()).all(|i| (0..f.len()).all(|j| f[i].partial_cmp(&f[j]) == g[i].partial_cmp(&g[j])))
}
