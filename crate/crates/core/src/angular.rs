//! Angular momentum coupling coefficients.
//!
//! Quantum numbers are passed as doubled integers (`2j`, `2m`) so that
//! half-integer values stay exact.

fn factorial(n: i64) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn triangle(two_a: i64, two_b: i64, two_c: i64) -> Option<f64> {
    let s = [two_a + two_b - two_c, two_a - two_b + two_c, -two_a + two_b + two_c];
    if s.iter().any(|&x| x < 0 || x % 2 != 0) {
        return None;
    }
    let total = two_a + two_b + two_c;
    if total % 2 != 0 {
        return None;
    }
    Some(
        factorial(s[0] / 2) * factorial(s[1] / 2) * factorial(s[2] / 2)
            / factorial(total / 2 + 1),
    )
}

/// Clebsch-Gordan coefficient `<j1 m1; j2 m2 | J M>` (Condon-Shortley phase).
pub fn clebsch_gordan(two_j1: i64, two_m1: i64, two_j2: i64, two_m2: i64, two_j: i64, two_m: i64) -> f64 {
    if two_m1 + two_m2 != two_m {
        return 0.0;
    }
    if two_m1.abs() > two_j1 || two_m2.abs() > two_j2 || two_m.abs() > two_j {
        return 0.0;
    }
    if (two_j1 + two_m1) % 2 != 0 || (two_j2 + two_m2) % 2 != 0 || (two_j + two_m) % 2 != 0 {
        return 0.0;
    }
    let Some(delta) = triangle(two_j1, two_j2, two_j) else {
        return 0.0;
    };
    let pre = ((two_j + 1) as f64
        * delta
        * factorial((two_j1 + two_m1) / 2)
        * factorial((two_j1 - two_m1) / 2)
        * factorial((two_j2 + two_m2) / 2)
        * factorial((two_j2 - two_m2) / 2)
        * factorial((two_j + two_m) / 2)
        * factorial((two_j - two_m) / 2))
        .sqrt();
    let mut sum = 0.0;
    for k in 0.. {
        let d = [
            k,
            (two_j1 + two_j2 - two_j) / 2 - k,
            (two_j1 - two_m1) / 2 - k,
            (two_j2 + two_m2) / 2 - k,
            (two_j - two_j2 + two_m1) / 2 + k,
            (two_j - two_j1 - two_m2) / 2 + k,
        ];
        if d[1] < 0 || d[2] < 0 || d[3] < 0 {
            break;
        }
        if d.iter().any(|&x| x < 0) {
            continue;
        }
        let term = 1.0 / d.iter().map(|&x| factorial(x)).product::<f64>();
        sum += if k % 2 == 0 { term } else { -term };
    }
    pre * sum
}

/// Wigner 6-j symbol `{j1 j2 j3; j4 j5 j6}` via the Racah formula.
pub fn wigner_6j(two: [i64; 6]) -> f64 {
    let [a, b, c, d, e, f] = two;
    let triads = [(a, b, c), (a, e, f), (d, b, f), (d, e, c)];
    let mut deltas = 1.0;
    for &(x, y, z) in &triads {
        match triangle(x, y, z) {
            Some(t) => deltas *= t,
            None => return 0.0,
        }
    }
    let sums = [a + b + c, a + e + f, d + b + f, d + e + c].map(|s| s / 2);
    let maxes = [a + b + d + e, a + c + d + f, b + c + e + f].map(|s| s / 2);
    let lo = *sums.iter().max().unwrap();
    let hi = *maxes.iter().min().unwrap();
    let mut sum = 0.0;
    for t in lo..=hi {
        let mut den = 1.0;
        for s in sums {
            den *= factorial(t - s);
        }
        for m in maxes {
            den *= factorial(m - t);
        }
        let term = factorial(t + 1) / den;
        sum += if t % 2 == 0 { term } else { -term };
    }
    deltas.sqrt() * sum
}

/// Relative hyperfine transition strength `S_FF'` of a `J -> J'` line with
/// nuclear spin `I`; sums to one over `F'` for fixed `F`.
pub fn hyperfine_strength(two_j: i64, two_jp: i64, two_i: i64, two_f: i64, two_fp: i64) -> f64 {
    let w = wigner_6j([two_j, two_jp, 2, two_fp, two_f, two_i]);
    (two_fp + 1) as f64 * (two_j + 1) as f64 * w * w
}
