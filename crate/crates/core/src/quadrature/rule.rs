//! The Gauss-Kronrod 7-15 rule and its single-panel application.

use super::{BatchIntegrand, Counters};
use crate::{Error, Result};

/// Gauss-Kronrod 7-15 nodes and weights on `[-1, 1]`, nodes ascending.
/// The Gauss nodes are the odd-indexed Kronrod nodes.
#[derive(Debug, Clone, Copy)]
pub struct Gk15Rule {
    pub nodes: [f64; 15],
    pub kronrod_weights: [f64; 15],
    /// Weights for `nodes[1], nodes[3], …, nodes[13]`.
    pub gauss_weights: [f64; 7],
}

// Positive half of the published QUADPACK tables (descending abscissae).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

pub const GK15: Gk15Rule = {
    let mut nodes = [0.0; 15];
    let mut kronrod_weights = [0.0; 15];
    let mut i = 0;
    while i < 15 {
        if i < 8 {
            nodes[i] = -XGK[i];
            kronrod_weights[i] = WGK[i];
        } else {
            nodes[i] = XGK[14 - i];
            kronrod_weights[i] = WGK[14 - i];
        }
        i += 1;
    }
    Gk15Rule {
        nodes,
        kronrod_weights,
        gauss_weights: [WG[0], WG[1], WG[2], WG[3], WG[2], WG[1], WG[0]],
    }
};

/// How panel abscissae relate to the integrand's argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mapping {
    /// The panel lives in `t`.
    Identity,
    /// The panel lives in `u ∈ [0, 1)`, with `t = u/(1-u)`.
    Rational,
}

/// One GK15 panel: per-component Kronrod and Gauss sums and the scaled error.
#[derive(Debug, Clone)]
pub(crate) struct Panel {
    pub a: f64,
    pub b: f64,
    pub kronrod: Vec<f64>,
    pub gauss: Vec<f64>,
    pub error: f64,
}

/// Scratch space reused across panels of one integration.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    args: Vec<f64>,
    jacobian: Vec<f64>,
    values: Vec<f64>,
}

/// QUADPACK error scaling of `|K - G|` using the panel's absolute and
/// mean-deviation integrals.
fn rescale_error(raw: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = raw.abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    err
}

/// Evaluate one panel with a single batch call. The Gauss estimate reuses
/// the odd-indexed Kronrod values; the integrand is not called again.
pub(crate) fn apply<F: BatchIntegrand + ?Sized>(
    f: &mut F,
    a: f64,
    b: f64,
    mapping: Mapping,
    ws: &mut Workspace,
    counters: &mut Counters,
) -> Result<Panel> {
    let comps = f.components();
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    ws.args.clear();
    ws.jacobian.clear();
    for &x in &GK15.nodes {
        let s = center + half * x;
        match mapping {
            Mapping::Identity => {
                ws.args.push(s);
                ws.jacobian.push(1.0);
            }
            Mapping::Rational => {
                let w = 1.0 - s;
                ws.args.push(s / w);
                ws.jacobian.push(1.0 / (w * w));
            }
        }
    }
    ws.values.clear();
    ws.values.resize(15 * comps, 0.0);
    f.evaluate(&ws.args, &mut ws.values)?;
    counters.batch_calls += 1;
    counters.subintervals += 1;
    counters.node_evaluations += 15;

    for (i, row) in ws.values.chunks_exact_mut(comps).enumerate() {
        for v in row.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { at: ws.args[i] });
            }
            *v *= ws.jacobian[i];
        }
    }

    let mut kronrod = vec![0.0; comps];
    let mut gauss = vec![0.0; comps];
    let mut error: f64 = 0.0;
    for c in 0..comps {
        let value = |i: usize| ws.values[i * comps + c];
        let mut k = 0.0;
        let mut g = 0.0;
        let mut res_abs = 0.0;
        for i in 0..15 {
            let v = value(i);
            k += GK15.kronrod_weights[i] * v;
            res_abs += GK15.kronrod_weights[i] * v.abs();
            if i % 2 == 1 {
                g += GK15.gauss_weights[i / 2] * v;
            }
        }
        let mean = 0.5 * k;
        let res_asc: f64 = (0..15).map(|i| GK15.kronrod_weights[i] * (value(i) - mean).abs()).sum();
        let scale = half.abs();
        kronrod[c] = k * half;
        gauss[c] = g * half;
        error = error.max(rescale_error((k - g) * half, res_abs * scale, res_asc * scale));
    }
    Ok(Panel { a, b, kronrod, gauss, error })
}
