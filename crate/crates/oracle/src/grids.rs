//! Label grids and histograms.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};

/// Component ids by breadth-first flood fill, numbered in raster-scan order
/// of each component's first pixel.
pub fn flood_fill(grid: &[u8], w: usize, h: usize, eight: bool) -> Vec<u32> {
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    for start in 0..w * h {
        if grid[start] == 0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (x, y) = ((p % w) as i64, (p / w) as i64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if grid[q] != 0 && labels[q] == 0 {
                        labels[q] = next;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    labels
}

/// `(tp, fp, fn, tn)` by looping over pixels.
pub fn confusion(gt: &[u8], pred: &[u8]) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for i in 0..gt.len() {
        if gt[i] == 1 && pred[i] == 1 {
            tp += 1;
        } else if gt[i] == 0 && pred[i] == 1 {
            fp += 1;
        } else if gt[i] == 1 && pred[i] == 0 {
            fn_ += 1;
        } else {
            tn += 1;
        }
    }
    (tp, fp, fn_, tn)
}

/// Exhaustive Otsu: for every edge `k` in `1..bins`, computes
/// `w0 * w1 * (mu0 - mu1)^2` exactly with bin-center means over `[min, max]`
/// and returns the first edge attaining the maximum.
pub fn otsu_edge(hist: &[u64], min: f64, max: f64) -> usize {
    let bins = hist.len();
    let int = |v: u64| BigRational::from_integer(BigInt::from(v));
    let lo = BigRational::from_f64(min).unwrap();
    let width = (BigRational::from_f64(max).unwrap() - &lo) / int(bins as u64);
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let centers: Vec<BigRational> = (0..bins).map(|i| &lo + &width * (int(i as u64) + &half)).collect();
    let total_n: u64 = hist.iter().sum();
    let total_s: BigRational = hist.iter().zip(&centers).map(|(&c, x)| x * int(c)).sum();
    let total = int(total_n);

    let mut best_k = 1;
    let mut best = BigRational::from_integer(BigInt::from(-1));
    let (mut n0, mut s0) = (0u64, BigRational::zero());
    for k in 1..bins {
        n0 += hist[k - 1];
        s0 += &centers[k - 1] * int(hist[k - 1]);
        let n1 = total_n - n0;
        let var = if n0 == 0 || n1 == 0 {
            BigRational::zero()
        } else {
            let mu0 = &s0 / int(n0);
            let mu1 = (&total_s - &s0) / int(n1);
            let d = mu0 - mu1;
            (int(n0) / &total) * (int(n1) / &total) * &d * &d
        };
        if var > best {
            best = var;
            best_k = k;
        }
    }
    best_k
}

/// Square-window erosion or dilation by direct neighbourhood scan; pixels
/// outside the grid are background.
pub fn morph_brute(grid: &[u8], w: usize, h: usize, r: usize, erode: bool) -> Vec<u8> {
    let r = r as i64;
    let mut out = vec![0u8; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut all = true;
            let mut any = false;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    let v = nx >= 0
                        && ny >= 0
                        && nx < w as i64
                        && ny < h as i64
                        && grid[(ny * w as i64 + nx) as usize] != 0;
                    all &= v;
                    any |= v;
                }
            }
            out[(y * w as i64 + x) as usize] = u8::from(if erode { all } else { any });
        }
    }
    out
}
