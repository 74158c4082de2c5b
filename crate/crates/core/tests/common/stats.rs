//! Straight-line statistics used as oracles for the analysis module.

use std::collections::BTreeSet;

use zcnas::space::{Architecture, SpaceSpec};

/// Rank by counting: `1 + #less + (#equal − 1)/2`.
pub fn brute_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let less = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn brute_spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (brute_ranks(xs), brute_ranks(ys));
    let n = xs.len() as f64;
    let mut mx = 0.0;
    for v in &rx {
        mx += v;
    }
    mx /= n;
    let mut my = 0.0;
    for v in &ry {
        my += v;
    }
    my /= n;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for i in 0..xs.len() {
        a += (rx[i] - mx) * (ry[i] - my);
        b += (rx[i] - mx) * (rx[i] - mx);
        c += (ry[i] - my) * (ry[i] - my);
    }
    (a / (b * c).sqrt()).clamp(-1.0, 1.0)
}

/// Ordering by value descending, then name ascending, via a full sort of
/// `(−value, name)` keys.
pub fn brute_top(values: &[f64], names: &[String], k: usize) -> BTreeSet<usize> {
    let mut keyed: Vec<(f64, &String, usize)> = values.iter().zip(names).enumerate().map(|(i, (v, n))| (-v, n, i)).collect();
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
    keyed.iter().take(k).map(|x| x.2).collect()
}

/// Cluster statistics from a Hamming-distance scan over `all`: returns
/// `(top_match %, avg cluster size, mean local rho, undefined rho count)`.
pub fn brute_clusters(
    space: &SpaceSpec,
    all: &[Architecture],
    acc: &[f64],
    proxy: &[Option<f64>],
    centers: &[Architecture],
) -> (f64, f64, Option<f64>, usize) {
    let (mut matches, mut usable, mut rhos, mut size) = (0usize, 0usize, Vec::new(), 0usize);
    for c in centers {
        let members: Vec<usize> = (0..all.len()).filter(|&i| all[i].hamming(c) <= 1).collect();
        size += members.len();
        let kept: Vec<usize> = members.into_iter().filter(|&i| proxy[i].is_some()).collect();
        if kept.is_empty() {
            continue;
        }
        usable += 1;
        let n: Vec<String> = kept.iter().map(|&i| space.to_string(&all[i])).collect();
        let p: Vec<f64> = kept.iter().map(|&i| proxy[i].unwrap()).collect();
        let a: Vec<f64> = kept.iter().map(|&i| acc[i]).collect();
        let pick = *brute_top(&p, &n, 1).iter().next().unwrap();
        if a.iter().all(|&x| x <= a[pick]) {
            matches += 1;
        }
        let pv = p.iter().all(|&x| x == p[0]);
        let av = a.iter().all(|&x| x == a[0]);
        if kept.len() >= 2 && !pv && !av {
            rhos.push(brute_spearman(&p, &a));
        }
    }
    let top = if usable == 0 { 0.0 } else { 100.0 * matches as f64 / usable as f64 };
    let mut sum = 0.0;
    for r in &rhos {
        sum += r;
    }
    let local = (!rhos.is_empty()).then(|| sum / rhos.len() as f64);
    (top, size as f64 / centers.len() as f64, local, usable - rhos.len())
}
