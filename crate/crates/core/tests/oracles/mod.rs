//! Reference computations used by the integration and acceptance tests.
//! None of these call into the library beyond plain data types.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Random table of `n` tokens around a few cluster directions, so that some
/// pairs land above a 0.75 similarity and many below.
pub fn random_table(rng: &mut ChaCha8Rng, n: usize, dims: usize) -> Vec<(String, Vec<f32>)> {
    let clusters = rng.gen_range(2..=6);
    let centers: Vec<Vec<f32>> = (0..clusters)
        .map(|_| (0..dims).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
        .collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let c = &centers[rng.gen_range(0..clusters)];
        let spread = rng.gen_range(0.05f32..0.9);
        let v: Vec<f32> = c.iter().map(|x| x + spread * rng.gen_range(-1.0f32..1.0)).collect();
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        out.push((format!("t{i:03}"), v));
    }
    out
}

/// `{t not in lexicon : max over sources s of cos(t, s) >= threshold}`.
pub fn brute_expansion(
    table: &[(String, Vec<f32>)],
    sources: &BTreeSet<String>,
    lexicon: &BTreeSet<String>,
    threshold: f64,
) -> BTreeSet<String> {
    let vec_of: HashMap<&str, &[f32]> = table.iter().map(|(t, v)| (t.as_str(), v.as_slice())).collect();
    let mut out = BTreeSet::new();
    for (t, v) in table {
        if lexicon.contains(t) {
            continue;
        }
        let best = sources
            .iter()
            .filter_map(|s| vec_of.get(s.as_str()))
            .map(|s| cosine(v, s))
            .fold(f64::NEG_INFINITY, f64::max);
        if best >= threshold {
            out.insert(t.clone());
        }
    }
    out
}

/// Brute-force modularity over an explicit edge list.
pub fn modularity(n: usize, edges: &[(usize, usize, f64)], comm: &[usize], gamma: f64) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v, w) in edges {
        a[u][v] += w;
        a[v][u] += w;
    }
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if comm[i] == comm[j] {
                q += a[i][j] - gamma * k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Calls `f` with every set partition of `0..n` as a restricted growth string.
pub fn for_each_partition(n: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, n: usize, f: &mut impl FnMut(&[usize])) {
        if i == n {
            f(cur);
            return;
        }
        for c in 0..=max + 1 {
            cur.push(c);
            rec(i + 1, max.max(c), cur, n, f);
            cur.pop();
        }
    }
    if n == 0 {
        f(&[]);
        return;
    }
    let mut cur = vec![0];
    rec(1, 0, &mut cur, n, f);
}

/// Best modularity over all partitions, with every optimal partition.
pub fn best_partitions(n: usize, edges: &[(usize, usize, f64)], gamma: f64) -> (f64, Vec<Vec<usize>>) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = Vec::new();
    for_each_partition(n, &mut |p| {
        let q = modularity(n, edges, p, gamma);
        if q > best + 1e-12 {
            best = q;
            arg = vec![p.to_vec()];
        } else if (q - best).abs() <= 1e-12 {
            arg.push(p.to_vec());
        }
    });
    (best, arg)
}

/// True when two assignments induce the same grouping.
pub fn same_grouping(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// Two blocks of `size` nodes; intra-block pairs linked with `p_in`, across
/// with `p_out`. Nodes `0..size` form block 0.
pub fn planted_two_blocks(seed: u64, size: usize, p_in: f64, p_out: f64) -> Vec<(usize, usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..2 * size {
        for v in u + 1..2 * size {
            let p = if (u < size) == (v < size) { p_in } else { p_out };
            if rng.gen_bool(p) {
                edges.push((u, v, 1.0));
            }
        }
    }
    edges
}

/// Damerau-Levenshtein distances from `a` to every string over `0..alpha` of
/// length up to `max_len`, by walking the string trie one DP row per symbol.
pub fn dl_from_all(a: &[u8], alpha: u8, max_len: usize, visit: &mut impl FnMut(&[u8], usize)) {
    let n = a.len();
    let w = n + 2;
    let inf = n + max_len + 1;
    let mut h = vec![0usize; (max_len + 2) * w];
    h[..w].fill(inf);
    for j in 0..=n {
        h[w + j + 1] = j;
    }
    h[w] = inf;
    let mut last = vec![0usize; alpha as usize];
    let mut b = Vec::with_capacity(max_len);
    visit(&b, n);
    walk(a, alpha, max_len, &mut h, w, inf, &mut last, &mut b, visit);
}

#[allow(clippy::too_many_arguments)]
fn walk(
    a: &[u8],
    alpha: u8,
    max_len: usize,
    h: &mut [usize],
    w: usize,
    inf: usize,
    last: &mut [usize],
    b: &mut Vec<u8>,
    visit: &mut impl FnMut(&[u8], usize),
) {
    if b.len() == max_len {
        return;
    }
    let i = b.len() + 1;
    for c in 0..alpha {
        h[(i + 1) * w] = inf;
        h[(i + 1) * w + 1] = i;
        let mut db = 0;
        for j in 1..=a.len() {
            let i1 = last[a[j - 1] as usize];
            let j1 = db;
            let cost = if a[j - 1] == c {
                db = j;
                0
            } else {
                1
            };
            let v = (h[i * w + j] + cost)
                .min(h[(i + 1) * w + j] + 1)
                .min(h[i * w + j + 1] + 1)
                .min(h[i1 * w + j1] + (i - i1 - 1) + 1 + (j - j1 - 1));
            h[(i + 1) * w + j + 1] = v;
        }
        b.push(c);
        visit(b, h[(i + 1) * w + a.len() + 1]);
        let saved = last[c as usize];
        last[c as usize] = i;
        walk(a, alpha, max_len, h, w, inf, last, b, visit);
        last[c as usize] = saved;
        b.pop();
    }
}

/// All strings over `0..alpha` up to `max_len`, shortest first.
pub fn all_strings(alpha: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..alpha {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Shortest edit paths under insert/delete/substitute/adjacent swap, by BFS
/// over strings of length at most `space_len`. Returns distances from every
/// string up to `max_len` to every other string up to `max_len`.
pub fn edit_graph_distances(alpha: u8, max_len: usize, space_len: usize) -> HashMap<(Vec<u8>, Vec<u8>), usize> {
    let space = all_strings(alpha, space_len);
    let index: HashMap<Vec<u8>, usize> = space.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let neighbors = |s: &[u8]| -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        for i in 0..s.len() {
            let mut t = s.to_vec();
            t.remove(i);
            out.push(t);
            for c in 0..alpha {
                if c != s[i] {
                    let mut t = s.to_vec();
                    t[i] = c;
                    out.push(t);
                }
            }
            if i + 1 < s.len() && s[i] != s[i + 1] {
                let mut t = s.to_vec();
                t.swap(i, i + 1);
                out.push(t);
            }
        }
        if s.len() < space_len {
            for i in 0..=s.len() {
                for c in 0..alpha {
                    let mut t = s.to_vec();
                    t.insert(i, c);
                    out.push(t);
                }
            }
        }
        out
    };
    let adj: Vec<Vec<usize>> = space.iter().map(|s| neighbors(s).iter().map(|t| index[t]).collect()).collect();
    let mut out = HashMap::new();
    for (si, s) in space.iter().enumerate() {
        if s.len() > max_len {
            continue;
        }
        let mut dist = vec![usize::MAX; space.len()];
        dist[si] = 0;
        let mut q = VecDeque::from([si]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        for (ti, t) in space.iter().enumerate() {
            if t.len() <= max_len {
                out.insert((s.clone(), t.clone()), dist[ti]);
            }
        }
    }
    out
}

pub fn letters(s: &[u8]) -> String {
    s.iter().map(|&c| (b'a' + c) as char).collect()
}

/// Full-matrix Damerau-Levenshtein over characters, textbook form with a
/// per-symbol last-row map.
pub fn textbook_dl(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let inf = n + m;
    let mut d = vec![vec![0usize; m + 2]; n + 2];
    d[0][0] = inf;
    for i in 0..=n {
        d[i + 1][0] = inf;
        d[i + 1][1] = i;
    }
    for j in 0..=m {
        d[0][j + 1] = inf;
        d[1][j + 1] = j;
    }
    let mut da: HashMap<char, usize> = HashMap::new();
    for i in 1..=n {
        let mut db = 0;
        for j in 1..=m {
            let i1 = *da.get(&b[j - 1]).unwrap_or(&0);
            let j1 = db;
            let cost = usize::from(a[i - 1] != b[j - 1]);
            if cost == 0 {
                db = j;
            }
            d[i + 1][j + 1] = (d[i][j] + cost)
                .min(d[i + 1][j] + 1)
                .min(d[i][j + 1] + 1)
                .min(d[i1][j1] + (i - i1 - 1) + 1 + (j - j1 - 1));
        }
        da.insert(a[i - 1], i);
    }
    d[n + 1][m + 1]
}
