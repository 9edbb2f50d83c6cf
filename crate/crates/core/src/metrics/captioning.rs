//! Corpus caption metrics: BLEU-1..4, ROUGE-L, an exact-match METEOR and
//! CIDEr-D.
//!
//! Every function takes one token list per candidate and a non-empty group of
//! reference token lists per candidate, index-aligned.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Tokens = Vec<String>;

pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_SIGMA: f64 = 6.0;
pub const CIDER_MAX_N: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptionScores {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub cider_d: f64,
}

fn check_corpus(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if candidates.len() != references.len() {
        return Err(Error::CorpusShape(format!(
            "{} candidates but {} reference groups",
            candidates.len(),
            references.len()
        )));
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(Error::CorpusShape(format!("reference group {i} is empty")));
    }
    Ok(())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU for orders `1..=max_n`. Entry `k` is BLEU-(k+1).
pub fn bleu(candidates: &[Tokens], references: &[Vec<Tokens>], max_n: usize) -> Result<Vec<f64>> {
    check_corpus(candidates, references)?;
    if max_n == 0 {
        return Err(Error::InvalidParameter("BLEU order must be at least 1".into()));
    }
    let mut matched = vec![0u64; max_n];
    let mut total = vec![0u64; max_n];
    let (mut cand_len, mut ref_len) = (0u64, 0u64);

    for (cand, refs) in candidates.iter().zip(references) {
        cand_len += cand.len() as u64;
        // closest reference length, shorter one on ties
        let closest = refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| ((l as i64 - cand.len() as i64).abs(), l))
            .unwrap();
        ref_len += closest as u64;

        for n in 1..=max_n {
            let counts = ngram_counts(cand, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let slot = max_ref.entry(g).or_insert(0);
                    *slot = (*slot).max(c);
                }
            }
            for (g, c) in &counts {
                matched[n - 1] += (*c).min(max_ref.get(g).copied().unwrap_or(0)) as u64;
                total[n - 1] += *c as u64;
            }
        }
    }

    let brevity = if cand_len == 0 {
        0.0
    } else if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    let mut log_sum = 0.0;
    let mut out = Vec::with_capacity(max_n);
    let mut zero = false;
    for n in 1..=max_n {
        let (m, t) = (matched[n - 1], total[n - 1]);
        if m == 0 || t == 0 {
            zero = true;
        } else {
            log_sum += (m as f64 / t as f64).ln();
        }
        out.push(if zero {
            0.0
        } else {
            brevity * (log_sum / n as f64).exp()
        });
    }
    Ok(out)
}

/// BLEU-1 through BLEU-4.
pub fn bleu4(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<[f64; 4]> {
    let b = bleu(candidates, references, 4)?;
    Ok([b[0], b[1], b[2], b[3]])
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_pair(cand: &[String], reference: &[String]) -> f64 {
    let lcs = lcs_len(cand, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / cand.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// ROUGE-L F-measure per candidate, best over its references.
pub fn rouge_l_per_candidate(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<Vec<f64>> {
    check_corpus(candidates, references)?;
    Ok(candidates
        .iter()
        .zip(references)
        .map(|(c, refs)| refs.iter().map(|r| rouge_pair(c, r)).fold(0.0, f64::max))
        .collect())
}

pub fn rouge_l(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<f64> {
    Ok(mean(&rouge_l_per_candidate(candidates, references)?))
}

/// Among one-to-one exact unigram alignments of maximum size, the largest
/// number of adjacent candidate positions whose aligned reference positions
/// are also adjacent. Returns `(matches, continuations)`.
fn best_alignment(cand: &[String], reference: &[String]) -> (usize, usize) {
    let mut target: HashMap<&str, usize> = HashMap::new();
    {
        let mut cc: HashMap<&str, usize> = HashMap::new();
        let mut rc: HashMap<&str, usize> = HashMap::new();
        for t in cand {
            *cc.entry(t).or_insert(0) += 1;
        }
        for t in reference {
            *rc.entry(t).or_insert(0) += 1;
        }
        for (w, &c) in &cc {
            if let Some(&r) = rc.get(w) {
                target.insert(w, c.min(r));
            }
        }
    }
    let m: usize = target.values().sum();
    if m == 0 {
        return (0, 0);
    }
    // reference positions per word
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, t) in reference.iter().enumerate() {
        positions.entry(t).or_default().push(j);
    }
    let options: Vec<&[usize]> = cand
        .iter()
        .map(|t| {
            if target.contains_key(t.as_str()) {
                positions[t.as_str()].as_slice()
            } else {
                &[][..]
            }
        })
        .collect();
    // matchable candidate positions from i onwards
    let mut remaining = vec![0usize; cand.len() + 1];
    for i in (0..cand.len()).rev() {
        remaining[i] = remaining[i + 1] + usize::from(!options[i].is_empty());
    }

    struct Search<'a> {
        options: &'a [&'a [usize]],
        remaining: &'a [usize],
        m: usize,
        memo: HashMap<(usize, Vec<u64>, usize), Option<usize>>,
    }

    impl Search<'_> {
        // prev = aligned reference position of candidate i-1, plus one; 0 if unaligned
        fn go(&mut self, i: usize, used: &mut Vec<u64>, count: usize, prev: usize) -> Option<usize> {
            if count + self.remaining[i] < self.m {
                return None;
            }
            if i == self.options.len() {
                return (count == self.m).then_some(0);
            }
            let key = (i, used.clone(), prev);
            if let Some(&v) = self.memo.get(&key) {
                return v;
            }
            let mut best = self.go(i + 1, used, count, 0);
            for &j in self.options[i] {
                let (w, bit) = (j / 64, 1u64 << (j % 64));
                if used[w] & bit != 0 {
                    continue;
                }
                used[w] |= bit;
                let bonus = usize::from(prev != 0 && prev == j);
                if let Some(v) = self.go(i + 1, used, count + 1, j + 1) {
                    best = Some(best.map_or(v + bonus, |b: usize| b.max(v + bonus)));
                }
                used[w] &= !bit;
            }
            self.memo.insert(key, best);
            best
        }
    }

    let words = reference.len().div_ceil(64).max(1);
    let mut search = Search {
        options: &options,
        remaining: &remaining,
        m,
        memo: HashMap::new(),
    };
    let mut used = vec![0u64; words];
    let continuations = search.go(0, &mut used, 0, 0).expect("a maximum matching always exists");
    (m, continuations)
}

/// Exact-match METEOR for one candidate against one reference.
pub fn meteor_pair(cand: &[String], reference: &[String]) -> f64 {
    let (m, continuations) = best_alignment(cand, reference);
    if m == 0 {
        return 0.0;
    }
    let chunks = (m - continuations) as f64;
    let m = m as f64;
    let p = m / cand.len() as f64;
    let r = m / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks / m).powi(3);
    f * (1.0 - penalty)
}

pub fn meteor_lite_per_candidate(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<Vec<f64>> {
    check_corpus(candidates, references)?;
    Ok(candidates
        .iter()
        .zip(references)
        .map(|(c, refs)| refs.iter().map(|r| meteor_pair(c, r)).fold(0.0, f64::max))
        .collect())
}

/// METEOR without stemming or synonym matching.
pub fn meteor_lite(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<f64> {
    Ok(mean(&meteor_lite_per_candidate(candidates, references)?))
}

struct TfIdf<'a> {
    vectors: Vec<HashMap<&'a [String], f64>>,
    norms: Vec<f64>,
    length: usize,
}

fn tfidf<'a>(tokens: &'a [String], df: &[HashMap<&'a [String], usize>], log_docs: f64) -> TfIdf<'a> {
    let mut vectors = Vec::with_capacity(CIDER_MAX_N);
    let mut norms = Vec::with_capacity(CIDER_MAX_N);
    for n in 1..=CIDER_MAX_N {
        let v: HashMap<&[String], f64> = ngram_counts(tokens, n)
            .into_iter()
            .map(|(g, tf)| {
                let d = df[n - 1].get(g).copied().unwrap_or(0).max(1) as f64;
                (g, tf as f64 * (log_docs - d.ln()))
            })
            .collect();
        norms.push(v.values().map(|x| x * x).sum::<f64>().sqrt());
        vectors.push(v);
    }
    TfIdf {
        vectors,
        norms,
        length: tokens.len(),
    }
}

fn cider_sim(hyp: &TfIdf<'_>, reference: &TfIdf<'_>) -> f64 {
    let delta = hyp.length as f64 - reference.length as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    (0..CIDER_MAX_N)
        .map(|n| {
            let mut val: f64 = hyp.vectors[n]
                .iter()
                .map(|(g, &vh)| {
                    let vr = reference.vectors[n].get(g).copied().unwrap_or(0.0);
                    vh.min(vr) * vr
                })
                .sum();
            if hyp.norms[n] != 0.0 && reference.norms[n] != 0.0 {
                val /= hyp.norms[n] * reference.norms[n];
            }
            val * penalty
        })
        .sum()
}

/// CIDEr-D per candidate. Document frequencies come from the reference groups
/// of this corpus, one document per group.
pub fn cider_d_per_candidate(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<Vec<f64>> {
    check_corpus(candidates, references)?;
    let mut df: Vec<HashMap<&[String], usize>> = vec![HashMap::new(); CIDER_MAX_N];
    for refs in references {
        for n in 1..=CIDER_MAX_N {
            let grams: HashSet<&[String]> = refs.iter().flat_map(|r| ngram_counts(r, n).into_keys()).collect();
            for g in grams {
                *df[n - 1].entry(g).or_insert(0) += 1;
            }
        }
    }
    let log_docs = (references.len() as f64).ln();
    Ok(candidates
        .iter()
        .zip(references)
        .map(|(cand, refs)| {
            let hyp = tfidf(cand, &df, log_docs);
            let total: f64 = refs.iter().map(|r| cider_sim(&hyp, &tfidf(r, &df, log_docs))).sum();
            total / CIDER_MAX_N as f64 / refs.len() as f64 * 10.0
        })
        .collect())
}

pub fn cider_d(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<f64> {
    Ok(mean(&cider_d_per_candidate(candidates, references)?))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn caption_scores(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<CaptionScores> {
    let [b1, b2, b3, b4] = bleu4(candidates, references)?;
    Ok(CaptionScores {
        b1,
        b2,
        b3,
        b4,
        meteor: meteor_lite(candidates, references)?,
        rouge_l: rouge_l(candidates, references)?,
        cider_d: cider_d(candidates, references)?,
    })
}
