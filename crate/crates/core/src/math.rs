//! `f64` helpers backed by `libm` so the crate stays `no_std`.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Log-sum-exp over the entries selected by `mask`; `-inf` when nothing is selected.
pub fn masked_logsumexp(logits: &[f64], mask: &[bool]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (l, &m) in logits.iter().zip(mask) {
        if m && *l > max {
            max = *l;
        }
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut sum = 0.0;
    for (l, &m) in logits.iter().zip(mask) {
        if m {
            sum += exp(*l - max);
        }
    }
    max + ln(sum)
}

/// Softmax restricted to `mask`; masked-out entries get probability zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> alloc::vec::Vec<f64> {
    let lse = masked_logsumexp(logits, mask);
    logits
        .iter()
        .zip(mask)
        .map(|(l, &m)| if m { exp(*l - lse) } else { 0.0 })
        .collect()
}
