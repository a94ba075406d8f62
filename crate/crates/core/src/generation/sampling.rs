use rand::Rng;

use crate::corpus::TagId;

/// Temperatures below this are treated as greedy decoding.
pub const GREEDY_TEMPERATURE: f64 = 1e-6;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(dist: &[f64]) -> TagId {
    let mut best = 0;
    for (j, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = j;
        }
    }
    best as TagId
}

/// Draws one outcome from `dist^(1/temperature)`, renormalized.
///
/// `dist` must have some positive mass. Below [`GREEDY_TEMPERATURE`] this is
/// the argmax.
pub fn sample<R: Rng + ?Sized>(dist: &[f64], temperature: f64, rng: &mut R) -> TagId {
    if temperature < GREEDY_TEMPERATURE {
        return argmax(dist);
    }
    let weights: Vec<f64> = if temperature == 1.0 {
        dist.to_vec()
    } else {
        let top = dist[argmax(dist) as usize].ln();
        dist.iter()
            .map(|&p| if p > 0.0 { ((p.ln() - top) / temperature).exp() } else { 0.0 })
            .collect()
    };
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = j;
        if u < acc {
            return j as TagId;
        }
    }
    last as TagId
}
