//! Adaptive Gauss–Kronrod quadrature on finite and infinite intervals.
//!
//! The engine applies the 21-point Kronrod extension of the 10-point Gauss
//! rule with global bisection of the worst subinterval. Semi-infinite ranges
//! are mapped onto `(0, 1]` by `x = a ± (1 - s) / s`, and caller-declared
//! breakpoints (jumps or kinks of the integrand) always become subinterval
//! endpoints so that no rule straddles a discontinuity.

use crate::error::{Error, Result};

// Kronrod abscissae on [0, 1], descending; odd indices are the Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_146,
];

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subintervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-13,
            max_subintervals: 2000,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub subintervals: usize,
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Identity,
    /// `[a, +inf)` via `x = a + (1 - s) / s`.
    Upper(f64),
    /// `(-inf, b]` via `x = b - (1 - s) / s`.
    Lower(f64),
}

impl Map {
    #[inline]
    fn eval<F: Fn(f64) -> f64>(&self, f: &F, s: f64) -> f64 {
        match *self {
            Map::Identity => f(s),
            Map::Upper(a) => {
                let fx = f(a + (1.0 - s) / s);
                if fx == 0.0 {
                    0.0
                } else {
                    fx / (s * s)
                }
            }
            Map::Lower(b) => {
                let fx = f(b - (1.0 - s) / s);
                if fx == 0.0 {
                    0.0
                } else {
                    fx / (s * s)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    map: Map,
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    floor: f64,
}

/// One application of the 21-point Kronrod rule on `[lo, hi]`.
/// Returns `(value, error_estimate)`.
fn qk21<F: Fn(f64) -> f64>(f: &F, map: Map, lo: f64, hi: f64) -> (f64, f64, f64) {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let abs_half = half.abs();

    let fc = map.eval(f, centre);
    let mut res_gauss = 0.0;
    let mut res_kronrod = WGK[10] * fc;
    let mut res_abs = res_kronrod.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];

    for j in 0..5 {
        let jtw = 2 * j + 1;
        let absc = half * XGK[jtw];
        let f1 = map.eval(f, centre - absc);
        let f2 = map.eval(f, centre + absc);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_gauss += WG[j] * (f1 + f2);
        res_kronrod += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let absc = half * XGK[jtwm1];
        let f1 = map.eval(f, centre - absc);
        let f2 = map.eval(f, centre + absc);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_kronrod += WGK[jtwm1] * (f1 + f2);
        res_abs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }

    let mean = 0.5 * res_kronrod;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let value = res_kronrod * half;
    res_abs *= abs_half;
    res_asc *= abs_half;
    let mut err = ((res_kronrod - res_gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * res_abs;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(floor);
    }
    (value, err, floor)
}

/// Integrates `f` over `[a, b]` (either end may be infinite).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_with_breaks(f, a, b, &[], opts)
}

/// Integrates `f` over `[a, b]`, forcing subinterval boundaries at `breaks`.
/// Breakpoints outside `(a, b)` are ignored. Reversed limits flip the sign.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::invalid("integration limits", "NaN limit"));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
            subintervals: 0,
        });
    }
    if a > b {
        let r = integrate_with_breaks(f, b, a, breaks, opts)?;
        return Ok(QuadResult {
            value: -r.value,
            ..r
        });
    }

    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x.is_finite() && x > a && x < b)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    // A doubly infinite range needs at least one finite anchor.
    if a == f64::NEG_INFINITY && b == f64::INFINITY && cuts.is_empty() {
        cuts.push(0.0);
    }

    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(a);
    nodes.extend(cuts);
    nodes.push(b);

    let mut pieces: Vec<Piece> = Vec::new();
    for w in nodes.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (map, s_lo, s_hi) = if lo == f64::NEG_INFINITY {
            (Map::Lower(hi), 0.0, 1.0)
        } else if hi == f64::INFINITY {
            (Map::Upper(lo), 0.0, 1.0)
        } else {
            (Map::Identity, lo, hi)
        };
        let (value, error, floor) = qk21(&f, map, s_lo, s_hi);
        pieces.push(Piece {
            map,
            lo: s_lo,
            hi: s_hi,
            value,
            error,
            floor,
        });
    }
    let mut evaluations = 21 * pieces.len();

    loop {
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        let total_err: f64 = pieces.iter().map(|p| p.error).sum();
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::Integration {
                estimate: total,
                error_bound: total_err,
            });
        }
        // Errors at the rounding floor of every piece cannot be reduced.
        let floor: f64 = pieces.iter().map(|p| p.floor).sum();
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= target || total_err <= 2.0 * floor {
            return Ok(QuadResult {
                value: total,
                error: total_err,
                evaluations,
                subintervals: pieces.len(),
            });
        }
        if pieces.len() >= opts.max_subintervals {
            return Err(Error::Integration {
                estimate: total,
                error_bound: total_err,
            });
        }

        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one piece");
        let p = pieces[worst];
        let mid = 0.5 * (p.lo + p.hi);
        if !(mid > p.lo && mid < p.hi) || (p.hi - p.lo) <= 8.0 * f64::EPSILON * p.hi.abs().max(p.lo.abs()) {
            // Roundoff-limited: the worst piece cannot be refined further.
            return Err(Error::Integration {
                estimate: total,
                error_bound: total_err,
            });
        }
        let (v1, e1, f1) = qk21(&f, p.map, p.lo, mid);
        let (v2, e2, f2) = qk21(&f, p.map, mid, p.hi);
        evaluations += 42;
        pieces[worst] = Piece {
            hi: mid,
            value: v1,
            error: e1,
            floor: f1,
            ..p
        };
        pieces.push(Piece {
            lo: mid,
            value: v2,
            error: e2,
            floor: f2,
            ..p
        });
    }
}
