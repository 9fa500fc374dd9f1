//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use reshare_core::{Cascade, KernelParams, MarkedEvent, ModelType};

pub fn test_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

// 15-point Kronrod nodes/weights and embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = half * XGK[j];
        let s = f(center - x) + f(center + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod quadrature of `f` on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, err: f64, tol: f64, depth: u32) -> f64 {
        if err <= tol || depth > 50 || (b - a) < 1e-14 * (1.0 + a.abs()) {
            return whole;
        }
        let m = 0.5 * (a + b);
        let (l, el) = gk15(f, a, m);
        let (r, er) = gk15(f, m, b);
        rec(f, a, m, l, el, tol * 0.5, depth + 1) + rec(f, m, b, r, er, tol * 0.5, depth + 1)
    }
    let (whole, err) = gk15(&f, a, b);
    let tol = (rel_tol * whole.abs()).max(1e-300);
    rec(&f, a, b, whole, err, tol, 0)
}

/// Integral split at the given breakpoints (e.g. event times).
pub fn integrate_piecewise<F: Fn(f64) -> f64>(f: F, breaks: &[f64], rel_tol: f64) -> f64 {
    breaks
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], rel_tol))
        .sum()
}

/// Central finite difference of `f` in coordinate `i` with a relative step.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize) -> f64 {
    let h = 1e-6 * x[i].abs().max(1e-3);
    let mut up = x.to_vec();
    let mut dn = x.to_vec();
    up[i] += h;
    dn[i] -= h;
    (f(&up) - f(&dn)) / (2.0 * h)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

/// Random interior parameters for a family.
pub fn random_params(rng: &mut impl Rng, family: ModelType, max_size: usize) -> KernelParams {
    let mut p = KernelParams::exp(rng.gen_range(0.05..1.5), rng.gen_range(0.1..3.0));
    if family.is_power_law() {
        p.c = Some(rng.gen_range(0.2..5.0));
    }
    if family.is_marked() {
        p.beta = Some(rng.gen_range(0.05..1.2));
    }
    if family.is_hawkesn() {
        p.n = Some(max_size as f64 + rng.gen_range(0.5..40.0));
    }
    p
}

/// Random cascade with strictly increasing times (no ties) and marks.
pub fn random_cascade(rng: &mut impl Rng, id: &str, max_events: usize, marked: bool) -> Cascade {
    let n = rng.gen_range(1..=max_events);
    let mut t = 0.0;
    let mut events = vec![MarkedEvent::new(0.0, if marked { rng.gen_range(1.0..200.0) } else { 1.0 })];
    for _ in 1..n {
        t += rng.gen_range(0.01..3.0);
        let m = if marked { rng.gen_range(1.0..200.0) } else { 1.0 };
        events.push(MarkedEvent::new(t, m));
    }
    let horizon = t + rng.gen_range(0.1..5.0);
    Cascade::new(id, events, Some(horizon)).unwrap()
}

/// Naive kernel `m^β φ(dt)` written directly from the formulas.
pub fn naive_kernel(family: ModelType, p: &KernelParams, dt: f64, mark: f64) -> f64 {
    let base = if family.is_power_law() {
        p.kappa * (dt + p.c.unwrap()).powf(-(1.0 + p.theta))
    } else {
        p.kappa * p.theta * (-p.theta * dt).exp()
    };
    let beta = p.beta.unwrap_or(0.0);
    base * mark.powf(beta)
}

/// Naive intensity: explicit loop over the strict past with HawkesN damping.
pub fn naive_intensity(family: ModelType, p: &KernelParams, c: &Cascade, t: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for e in c.events() {
        if e.time < t {
            sum += naive_kernel(family, p, t - e.time, e.magnitude);
            count += 1;
        }
    }
    if let (true, Some(n)) = (family.is_hawkesn(), p.n) {
        sum *= (1.0 - count as f64 / n).max(0.0);
    }
    sum
}

/// Naive NLL: double loop for log-intensities, quadrature compensator.
pub fn naive_nll(family: ModelType, p: &KernelParams, c: &Cascade) -> f64 {
    let mut breaks: Vec<f64> = c.times().collect();
    breaks.push(c.observation_time());
    breaks.dedup();
    let comp = integrate_piecewise(|s| naive_intensity(family, p, c, s), &breaks, 1e-12);
    let log_sum: f64 = c
        .events()
        .iter()
        .skip(1)
        .map(|e| naive_intensity(family, p, c, e.time).ln())
        .sum();
    comp - log_sum
}

/// Largest per-component gradient error, relative to `max(|fd_i|, 1e-3 ‖fd‖∞)`.
pub fn gradient_rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / f.abs().max(1e-3 * scale).max(1e-12))
        .fold(0.0, f64::max)
}

/// Finite-difference gradient of the single-cascade NLL at `p`.
pub fn fd_gradient(family: ModelType, p: &KernelParams, c: &Cascade) -> Vec<f64> {
    let x = p.to_vector(family).unwrap();
    (0..x.len())
        .map(|i| {
            central_difference(
                |v| {
                    let q = KernelParams::from_vector(family, v).unwrap();
                    reshare_core::likelihood::neg_log_likelihood(&q, family, c)
                        .unwrap()
                        .nll
                },
                &x,
                i,
            )
        })
        .collect()
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Two-sided Mann-Whitney U test p-value (normal approximation with tie
/// correction).
pub fn mann_whitney_p(a: &[f64], b: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut rank_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        rank_a += avg * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let u = rank_a - n1 * (n1 + 1.0) / 2.0;
    let mu = n1 * n2 / 2.0;
    let nn = n1 + n2;
    let var = n1 * n2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (u - mu).abs() / var.sqrt();
    libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Columns rescaled to zero mean and unit variance; constant columns dropped.
pub fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let cols = rows[0].len();
    let mut keep = Vec::new();
    for j in 0..cols {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 1e-12 * mean.abs().max(1.0) {
            keep.push((j, mean, sd));
        }
    }
    rows.iter()
        .map(|r| keep.iter().map(|&(j, m, s)| (r[j] - m) / s).collect())
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> (Vec<usize>, f64) {
    let nearest = |p: &[f64], centers: &[Vec<f64>]| -> (usize, f64) {
        centers
            .iter()
            .enumerate()
            .map(|(k, c)| (k, dist2(p, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    };
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..300 {
        let new: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        if new == labels {
            break;
        }
        labels = new;
        for (k, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (d, c) in center.iter_mut().enumerate() {
                *c = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let inertia = points.iter().map(|p| nearest(p, &centers).1).sum();
    (labels, inertia)
}

/// 2-means: k-means++ seeding, Lloyd iterations, best of `restarts` by
/// inertia.
pub fn two_means(points: &[Vec<f64>], restarts: usize, seed: u64) -> Vec<usize> {
    let mut rng = test_rng(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..restarts {
        let first = points[rng.gen_range(0..points.len())].clone();
        let d: Vec<f64> = points.iter().map(|p| dist2(p, &first)).collect();
        let total: f64 = d.iter().sum();
        let mut r = rng.gen_range(0.0..total);
        let mut second = points.len() - 1;
        for (i, di) in d.iter().enumerate() {
            if r < *di {
                second = i;
                break;
            }
            r -= di;
        }
        let run = lloyd(points, vec![first, points[second].clone()]);
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    best.unwrap().0
}

/// Fraction of points whose cluster's majority class matches their own.
pub fn purity(labels: &[usize], truth: &[usize]) -> f64 {
    let mut counts = [[0usize; 2]; 2];
    for (&l, &t) in labels.iter().zip(truth) {
        counts[l][t] += 1;
    }
    let hit: usize = counts.iter().map(|c| c[0].max(c[1])).sum();
    hit as f64 / labels.len() as f64
}

/// Linear-interpolation quantile by explicit rank arithmetic.
pub fn oracle_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = 1.0 + (v.len() as f64 - 1.0) * q;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo >= v.len() {
        return v[v.len() - 1];
    }
    v[lo - 1] + frac * (v[lo] - v[lo - 1])
}
