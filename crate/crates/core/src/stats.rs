//! Small numeric helpers shared by the learners and the analytics.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Least-squares slope of `ys` against `0, 1, ..., n-1`.
pub fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let xm = (n - 1) as f64 / 2.0;
    let ym = mean(ys);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Tercile bin of `x` against the empirical distribution `reference`.
///
/// Cut points are the nearest-rank 1/3 and 2/3 quantiles, `v[ceil(n/3) - 1]`
/// and `v[ceil(2n/3) - 1]` of the sorted reference. Returns 0 below the lower
/// cut, 2 above the upper cut and 1 otherwise. An empty or constant reference
/// is degenerate and maps to 1. Runs in O(n) by counting instead of sorting.
pub fn tercile(x: f64, reference: &[f64]) -> u8 {
    let n = reference.len();
    if n == 0 {
        return 1;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut le = 0usize;
    let mut lt = 0usize;
    for &v in reference {
        lo = lo.min(v);
        hi = hi.max(v);
        if v <= x {
            le += 1;
            if v < x {
                lt += 1;
            }
        }
    }
    if lo == hi {
        return 1;
    }
    let k1 = n.div_ceil(3) - 1;
    let k2 = (2 * n).div_ceil(3) - 1;
    // x < v[k] iff fewer than k + 1 reference values are <= x.
    if le <= k1 {
        0
    } else if lt > k2 {
        2
    } else {
        1
    }
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Average ranks (1-based), ties share the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let (mx, my) = (mean(&rx), mean(&ry));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Append-only history exposing its last `cap` entries as a contiguous slice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trailing {
    buf: Vec<f64>,
    cap: usize,
}

impl Trailing {
    pub fn new(cap: usize) -> Self {
        Trailing {
            buf: Vec::with_capacity(2 * cap.max(1)),
            cap: cap.max(1),
        }
    }

    pub fn push(&mut self, x: f64) {
        if self.buf.len() == 2 * self.cap {
            self.buf.drain(..self.cap);
        }
        self.buf.push(x);
    }

    pub fn as_slice(&self) -> &[f64] {
        let n = self.buf.len();
        &self.buf[n.saturating_sub(self.cap)..]
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }
}
