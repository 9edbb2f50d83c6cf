//! Caption metrics computed by enumeration.

pub type Sentence = Vec<String>;

/// Occurrences of `gram` in `s`, by scanning every offset.
fn occurrences(s: &[String], gram: &[String]) -> usize {
    if gram.len() > s.len() {
        return 0;
    }
    (0..=s.len() - gram.len())
        .filter(|&i| &s[i..i + gram.len()] == gram)
        .count()
}

/// Distinct n-grams of `s` in first-seen order.
fn distinct(s: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    if s.len() >= n {
        for i in 0..=s.len() - n {
            let g = s[i..i + n].to_vec();
            if !out.contains(&g) {
                out.push(g);
            }
        }
    }
    out
}

/// Corpus BLEU-1..max_n without smoothing.
pub fn bleu(cands: &[Sentence], refs: &[Vec<Sentence>], max_n: usize) -> Vec<f64> {
    let mut clipped = vec![0usize; max_n + 1];
    let mut counted = vec![0usize; max_n + 1];
    let mut c_len = 0usize;
    let mut r_len = 0usize;
    for (cand, group) in cands.iter().zip(refs) {
        c_len += cand.len();
        let mut best = group[0].len();
        for r in group {
            let d_new = (r.len() as i64 - cand.len() as i64).abs();
            let d_old = (best as i64 - cand.len() as i64).abs();
            if d_new < d_old || (d_new == d_old && r.len() < best) {
                best = r.len();
            }
        }
        r_len += best;
        for n in 1..=max_n {
            for g in distinct(cand, n) {
                let in_cand = occurrences(cand, &g);
                let in_refs = group.iter().map(|r| occurrences(r, &g)).max().unwrap();
                clipped[n] += in_cand.min(in_refs);
                counted[n] += in_cand;
            }
        }
    }
    let bp = if c_len == 0 {
        0.0
    } else if c_len < r_len {
        (1.0 - r_len as f64 / c_len as f64).exp()
    } else {
        1.0
    };
    (1..=max_n)
        .map(|n| {
            let precisions: Vec<f64> = (1..=n)
                .map(|k| {
                    if counted[k] == 0 {
                        0.0
                    } else {
                        clipped[k] as f64 / counted[k] as f64
                    }
                })
                .collect();
            if precisions.contains(&0.0) {
                0.0
            } else {
                bp * (precisions.iter().map(|p| p.ln()).sum::<f64>() / n as f64).exp()
            }
        })
        .collect()
}

fn is_subsequence(sub: &[&String], s: &[String]) -> bool {
    let mut it = s.iter();
    sub.iter().all(|x| it.any(|y| y == *x))
}

/// Longest common subsequence by trying every subsequence of the shorter side.
fn lcs_brute(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 20, "brute-force LCS limited to 20 tokens");
    let mut best = 0;
    for bits in 0u32..(1u32 << short.len()) {
        let k = bits.count_ones() as usize;
        if k <= best {
            continue;
        }
        let sub: Vec<&String> = (0..short.len())
            .filter(|i| bits & (1 << i) != 0)
            .map(|i| &short[i])
            .collect();
        if is_subsequence(&sub, long) {
            best = k;
        }
    }
    best
}

pub fn rouge_l(cands: &[Sentence], refs: &[Vec<Sentence>]) -> f64 {
    let beta2 = 1.2f64 * 1.2;
    let scores: Vec<f64> = cands
        .iter()
        .zip(refs)
        .map(|(c, group)| {
            group
                .iter()
                .map(|r| {
                    let l = lcs_brute(c, r) as f64;
                    if l == 0.0 {
                        return 0.0;
                    }
                    let p = l / c.len() as f64;
                    let rec = l / r.len() as f64;
                    ((1.0 + beta2) * p * rec) / (rec + beta2 * p)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// All one-to-one exact alignments, as `(candidate index, reference index)`
/// pairs in candidate order.
fn alignments(
    c: &[String],
    r: &[String],
    i: usize,
    used: &mut Vec<bool>,
    cur: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
) {
    if i == c.len() {
        out.push(cur.clone());
        return;
    }
    alignments(c, r, i + 1, used, cur, out);
    for j in 0..r.len() {
        if !used[j] && r[j] == c[i] {
            used[j] = true;
            cur.push((i, j));
            alignments(c, r, i + 1, used, cur, out);
            cur.pop();
            used[j] = false;
        }
    }
}

fn chunks(alignment: &[(usize, usize)]) -> usize {
    if alignment.is_empty() {
        return 0;
    }
    1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

fn meteor_pair(c: &[String], r: &[String]) -> f64 {
    let mut all = Vec::new();
    alignments(c, r, 0, &mut vec![false; r.len()], &mut Vec::new(), &mut all);
    let m = all.iter().map(Vec::len).max().unwrap_or(0);
    if m == 0 {
        return 0.0;
    }
    let ch = all.iter().filter(|a| a.len() == m).map(|a| chunks(a)).min().unwrap();
    let (m, ch) = (m as f64, ch as f64);
    let p = m / c.len() as f64;
    let rec = m / r.len() as f64;
    let f = 10.0 * p * rec / (rec + 9.0 * p);
    f * (1.0 - 0.5 * (ch / m).powi(3))
}

pub fn meteor(cands: &[Sentence], refs: &[Vec<Sentence>]) -> f64 {
    let scores: Vec<f64> = cands
        .iter()
        .zip(refs)
        .map(|(c, group)| group.iter().map(|r| meteor_pair(c, r)).fold(0.0, f64::max))
        .collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// CIDEr-D with document frequencies over the reference groups.
pub fn cider_d(cands: &[Sentence], refs: &[Vec<Sentence>]) -> f64 {
    let sigma = 6.0f64;
    let n_docs = refs.len() as f64;
    let df = |g: &[String]| -> f64 {
        refs.iter()
            .filter(|group| group.iter().any(|r| occurrences(r, g) > 0))
            .count() as f64
    };
    let weight = |s: &[String], g: &[String]| -> f64 { occurrences(s, g) as f64 * (n_docs.ln() - df(g).max(1.0).ln()) };
    let mut total = 0.0;
    for (c, group) in cands.iter().zip(refs) {
        let mut score = 0.0;
        for r in group {
            let delta = c.len() as f64 - r.len() as f64;
            let penalty = (-(delta * delta) / (2.0 * sigma * sigma)).exp();
            for n in 1..=4 {
                let cg = distinct(c, n);
                let rg = distinct(r, n);
                let norm_c = cg.iter().map(|g| weight(c, g).powi(2)).sum::<f64>().sqrt();
                let norm_r = rg.iter().map(|g| weight(r, g).powi(2)).sum::<f64>().sqrt();
                let mut dot = 0.0;
                for g in &cg {
                    let (wc, wr) = (weight(c, g), weight(r, g));
                    dot += wc.min(wr) * wr;
                }
                if norm_c > 0.0 && norm_r > 0.0 {
                    dot /= norm_c * norm_r;
                }
                score += dot * penalty;
            }
        }
        total += score / 4.0 / group.len() as f64 * 10.0;
    }
    total / cands.len() as f64
}
