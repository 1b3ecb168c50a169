//! Slow, direct reference implementations used to check the library.
//! Written from the definitions without reusing any library code.
#![allow(dead_code)]

/// SplitMix64 stream for fixtures.
pub struct Fixture(pub u64);

impl Fixture {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.range(lo, hi)).collect()
    }
}

/// Single-channel 3D cross-correlation of `x [t, h, w]` with `k [kt, kh, kw]`:
/// valid in time, zero-padded "same" in space (leading pad `(k-1)/2`).
pub fn conv3d_same_space_valid_time(
    x: &[f64],
    (t, h, w): (usize, usize, usize),
    k: &[f64],
    (kt, kh, kw): (usize, usize, usize),
) -> Vec<f64> {
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let to = t + 1 - kt;
    let mut out = vec![0.0; to * h * w];
    for ot in 0..to {
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for a in 0..kt {
                    for b in 0..kh {
                        for c in 0..kw {
                            let (y, z) = (i as isize + b as isize - ph as isize, j as isize + c as isize - pw as isize);
                            if y < 0 || z < 0 || y >= h as isize || z >= w as isize {
                                continue;
                            }
                            acc += k[(a * kh + b) * kw + c] * x[((ot + a) * h + y as usize) * w + z as usize];
                        }
                    }
                }
                out[(ot * h + i) * w + j] = acc;
            }
        }
    }
    out
}

pub fn mse(o: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..o.len() {
        s += (o[i] - p[i]).powi(2);
    }
    s / o.len() as f64
}

pub fn mae(o: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..o.len() {
        s += (o[i] - p[i]).abs();
    }
    s / o.len() as f64
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample covariance over sample standard deviations.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
    let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    cov / (sx * sy)
}

pub fn nse(o: &[f64], p: &[f64]) -> f64 {
    let m = mean(o);
    let num: f64 = o.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = o.iter().map(|a| (a - m).powi(2)).sum();
    1.0 - num / den
}

/// Willmott's d.
pub fn ioa(o: &[f64], p: &[f64]) -> f64 {
    let m = mean(o);
    let num: f64 = o.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = o.iter().zip(p).map(|(a, b)| ((b - m).abs() + (a - m).abs()).powi(2)).sum();
    1.0 - num / den
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Skip,
    Ok,
    Over,
    Under,
}

/// Event labels: relevant when the observation is at least `min` and has not
/// fallen since the previous step; then compared against `±b`.
pub fn labels(o: &[f64], p: &[f64], min: f64, b: f64) -> Vec<Label> {
    let mut out = vec![Label::Skip; o.len()];
    for t in 1..o.len() {
        if o[t] < min || o[t] < o[t - 1] {
            continue;
        }
        let d = p[t] - o[t];
        out[t] = if d > b {
            Label::Over
        } else if d < -b {
            Label::Under
        } else {
            Label::Ok
        };
    }
    out
}

/// Every event statistic as a flat list, in the order of the library's
/// report columns from `t_relevant` to `error_median`.
pub fn event_stats(o: &[f64], p: &[f64], min: f64, b: f64, years: f64) -> Vec<f64> {
    let l = labels(o, p, min, b);
    let n = |x: Label| l.iter().filter(|&&y| y == x).count() as f64;
    let (ok, over, under) = (n(Label::Ok), n(Label::Over), n(Label::Under));
    let total = o.len() as f64;
    let rel = ok + over + under;
    let mut errs: Vec<f64> = (0..o.len())
        .filter(|&t| matches!(l[t], Label::Over | Label::Under))
        .map(|t| (p[t] - o[t]).abs())
        .collect();
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sum: f64 = errs.iter().sum();
    let k = errs.len();
    let (avg, max, median) = if k == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let med = if k.is_multiple_of(2) { 0.5 * (errs[k / 2 - 1] + errs[k / 2]) } else { errs[(k - 1) / 2] };
        (sum / k as f64, errs[k - 1], med)
    };
    vec![
        rel,
        total - rel,
        ok,
        over,
        under,
        100.0 * ok / total,
        100.0 * under / total,
        100.0 * over / total,
        ok / years,
        under / years,
        over / years,
        rel / years,
        sum,
        avg,
        max,
        median,
    ]
}
