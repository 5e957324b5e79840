//! Summaries of sampled partitions.

use crate::error::{GgmError, Result};

/// Relabels so that clusters are numbered `0..k` by decreasing size, ties
/// broken by first member.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut first = std::collections::BTreeMap::<usize, (usize, usize)>::new();
    for (i, l) in labels.iter().enumerate() {
        let entry = first.entry(*l).or_insert((0, i));
        entry.0 += 1;
    }
    let mut order: Vec<(usize, usize, usize)> =
        first.into_iter().map(|(l, (size, at))| (l, size, at)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let mut map = std::collections::BTreeMap::new();
    for (new, (old, _, _)) in order.into_iter().enumerate() {
        map.insert(old, new);
    }
    labels.iter().map(|l| map[l]).collect()
}

pub fn cluster_count(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Fraction of sampled partitions placing each pair together.
pub fn co_clustering(samples: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
    let n = samples
        .first()
        .ok_or_else(|| GgmError::InvalidArgument("no partitions to summarize".into()))?
        .len();
    let mut m = vec![vec![0.0; n]; n];
    for s in samples {
        if s.len() != n {
            return Err(GgmError::DimensionMismatch {
                expected: n,
                found: s.len(),
            });
        }
        for i in 0..n {
            for j in i..n {
                if s[i] == s[j] {
                    m[i][j] += 1.0;
                }
            }
        }
    }
    let total = samples.len() as f64;
    for i in 0..n {
        for j in i..n {
            m[i][j] /= total;
            m[j][i] = m[i][j];
        }
    }
    Ok(m)
}

/// Binder loss (equal costs) of `labels` against a co-clustering matrix.
pub fn binder_loss(labels: &[usize], co: &[Vec<f64>]) -> f64 {
    let n = labels.len();
    let mut loss = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let together = if labels[i] == labels[j] { 1.0 } else { 0.0 };
            loss += (together - co[i][j]).powi(2);
        }
    }
    loss
}

/// The sampled partition with the smallest Binder loss, in canonical labels.
/// Ties go to the earliest sample.
pub fn point_partition(samples: &[Vec<usize>]) -> Result<Vec<usize>> {
    let co = co_clustering(samples)?;
    let mut best: Option<(f64, &Vec<usize>)> = None;
    for s in samples {
        let loss = binder_loss(s, &co);
        if best.is_none_or(|(b, _)| loss < b) {
            best = Some((loss, s));
        }
    }
    Ok(canonical_labels(best.expect("samples are nonempty").1))
}

/// Permutation of `0..k` sending each label of `sample` to the label of
/// `reference` it overlaps most, matched greedily by overlap size. Labels left
/// unmatched take the remaining slots in ascending order.
pub fn align_to(sample: &[usize], reference: &[usize], k: usize) -> Vec<usize> {
    let mut overlap = vec![vec![0usize; k]; k];
    for (a, b) in sample.iter().zip(reference) {
        overlap[*a][*b] += 1;
    }
    let mut pairs: Vec<(usize, usize, usize)> = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .map(|(a, b)| (overlap[a][b], a, b))
        .filter(|(o, _, _)| *o > 0)
        .collect();
    pairs.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut map = vec![usize::MAX; k];
    let mut taken = vec![false; k];
    for (_, a, b) in pairs {
        if map[a] == usize::MAX && !taken[b] {
            map[a] = b;
            taken[b] = true;
        }
    }
    let mut free = (0..k).filter(|b| !taken[*b]);
    for m in map.iter_mut().filter(|m| **m == usize::MAX) {
        *m = free.next().expect("as many free slots as unmatched labels");
    }
    map
}
