//! Split-R-hat and effective sample size for one scalar quantity observed
//! over several chains of equal length.

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..n], &c[n..2 * n]])
        .collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Between/within variance terms of the split chains: `(W, var+)`.
fn variance_terms(parts: &[&[f64]]) -> (f64, f64) {
    let n = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = parts.iter().map(|p| var(p)).sum::<f64>() / parts.len() as f64;
    let b = n * var(&means);
    (w, (n - 1.0) / n * w + b / n)
}

/// Potential scale reduction factor computed on half-chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    if parts.len() < 2 || parts[0].len() < 2 {
        return f64::NAN;
    }
    let (w, var_plus) = variance_terms(&parts);
    if w == 0.0 {
        return if var_plus == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone positive
/// sequence, computed on half-chains.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    if parts.len() < 2 || parts[0].len() < 4 {
        return f64::NAN;
    }
    let m = parts.len() as f64;
    let n = parts[0].len();
    let total = m * n as f64;
    let (w, var_plus) = variance_terms(&parts);
    if w == 0.0 || var_plus == 0.0 {
        return total;
    }
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let rho = |lag: usize| -> f64 {
        let mean_acov = parts
            .iter()
            .zip(&means)
            .map(|(p, &mu)| autocov(p, mu, lag))
            .sum::<f64>()
            / m;
        1.0 - (w - mean_acov) / var_plus
    };
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = rho(2 * k) + rho(2 * k + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        sum_pairs += pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / total.log10().max(1.0));
    total / tau
}
