//! Composite Gauss–Legendre quadrature on half-lines, evaluated in log space.

const NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Past this abscissa a half-line integral that has not decayed is declared divergent.
pub const DIVERGENCE_HORIZON: f64 = 1e9;

/// Relative size (in nats) below which a new segment stops the integration.
const STOP_MARGIN: f64 = 46.0;

pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn ln_segment(phi: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut terms = [0.0; 8];
    for k in 0..8 {
        terms[k] = phi(mid + half * NODES[k]) + (WEIGHTS[k] * half).ln();
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// `ln ∫_start^end exp(φ(u)) du`.
///
/// With `end = None` the integral runs to infinity and stops once a segment
/// on a decreasing stretch is negligible; it returns `+inf` if the horizon is
/// reached first. Segments never straddle an entry of `breaks`.
pub fn ln_integral(phi: &dyn Fn(f64) -> f64, start: f64, end: Option<f64>, breaks: &[f64]) -> f64 {
    let mut total = f64::NEG_INFINITY;
    let mut u = start;
    let mut next = breaks.partition_point(|&b| b <= u);
    loop {
        if let Some(e) = end {
            if u >= e {
                break;
            }
        }
        let mut v = u + 0.25 + 0.01 * u.abs();
        if let Some(e) = end {
            v = v.min(e);
        }
        if next < breaks.len() && breaks[next] < v {
            v = breaks[next];
        }
        while next < breaks.len() && breaks[next] <= v {
            next += 1;
        }
        let seg = ln_segment(phi, u, v);
        total = log_add(total, seg);
        if end.is_none() {
            if phi(v) < phi(u) && seg < total - STOP_MARGIN {
                break;
            }
            if v > DIVERGENCE_HORIZON {
                return f64::INFINITY;
            }
        }
        u = v;
    }
    total
}

/// `∫_start^∞ f(t) dt` for a positive, smooth, eventually decaying integrand.
pub fn half_line_integral(f: &dyn Fn(f64) -> f64, start: f64) -> f64 {
    let phi = |t: f64| f(t).ln();
    ln_integral(&phi, start, None, &[]).exp()
}
