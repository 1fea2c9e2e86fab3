//! Reference implementations written directly from the definitions, without
//! log space or any code from the library.
#![allow(dead_code)]

#[derive(Debug, Clone)]
pub enum OracleBet {
    Fixed(f64),
    Grid(Vec<f64>),
    TwoSided {
        plus: Vec<f64>,
        minus: Vec<f64>,
        beta: f64,
    },
}

pub fn constant_weights(d: usize) -> Vec<f64> {
    vec![1.0 / d as f64; d]
}

pub fn square_weights(d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=d)
        .map(|k| {
            let f = k as f64 / (d + 1) as f64;
            if 3.0 * f <= 1.0 {
                (1.0 / 3.0 - f) * (1.0 / 3.0 - f)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// `M_t(mu)` as a plain product; `+inf` once `mu` is impossible.
pub fn capital(prefix: &[f64], n: usize, mu: f64, u: f64, bet: &OracleBet) -> f64 {
    let tol = 1e-9 * (n as f64 * u).max(1.0);
    let mut sum = 0.0;
    let d_of = |w: &Vec<f64>| w.len();
    let (mut plus, mut minus, mut single) = match bet {
        OracleBet::Fixed(_) => (vec![], vec![], 1.0),
        OracleBet::Grid(w) => (vec![1.0; d_of(w)], vec![], 1.0),
        OracleBet::TwoSided { plus, minus, .. } => {
            (vec![1.0; plus.len()], vec![1.0; minus.len()], 1.0)
        }
    };
    for (i, &x) in prefix.iter().enumerate() {
        let unseen = (n - i) as f64;
        let needed = n as f64 * mu - sum;
        let needed_after = needed - x;
        if needed < -tol
            || needed > u * unseen + tol
            || needed_after < -tol
            || needed_after > u * (unseen - 1.0) + tol
        {
            return f64::INFINITY;
        }
        let c = (needed / unseen).clamp(0.0, u);
        let plus_live = needed > tol;
        let minus_live = u * unseen - needed > tol;
        match bet {
            OracleBet::Fixed(lambda) => {
                if plus_live {
                    let l = lambda.min(1.0 / c);
                    single *= 1.0 + l * (x - c);
                }
            }
            OracleBet::Grid(_) | OracleBet::TwoSided { .. } => {
                let d = plus.len() as f64;
                if plus_live {
                    for (k, m) in plus.iter_mut().enumerate() {
                        let l = (k + 1) as f64 / ((d + 1.0) * c);
                        *m *= 1.0 + l * (x - c);
                    }
                }
                let dm = minus.len() as f64;
                if minus_live {
                    for (k, m) in minus.iter_mut().enumerate() {
                        let l = (k + 1) as f64 / ((dm + 1.0) * (u - c));
                        *m *= 1.0 - l * (x - c);
                    }
                }
            }
        }
        sum += x;
    }
    let mix = |w: &Vec<f64>, m: &Vec<f64>| w.iter().zip(m).map(|(a, b)| a * b).sum::<f64>();
    match bet {
        OracleBet::Fixed(_) => single,
        OracleBet::Grid(w) => mix(w, &plus),
        OracleBet::TwoSided {
            plus: wp,
            minus: wm,
            beta,
        } => beta * mix(wp, &plus) + (1.0 - beta) * mix(wm, &minus),
    }
}

/// Every multiset over `{0, 1/2, 1}` of size `n`, as `(zeros, halves, ones)`.
pub fn ternary_populations(n: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for zeros in 0..=n {
        for halves in 0..=(n - zeros) {
            out.push((zeros, halves, n - zeros - halves));
        }
    }
    out
}

/// Smallest `t` with `prod_{i<=t} factor(i) >= 1 / alpha`, by direct products.
pub fn first_crossing(factors: impl IntoIterator<Item = f64>, alpha: f64) -> Option<usize> {
    let mut wealth = 1.0;
    for (i, f) in factors.into_iter().enumerate() {
        wealth *= f;
        if wealth >= 1.0 / alpha {
            return Some(i + 1);
        }
    }
    None
}
