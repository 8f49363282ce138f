//! Three-point finite differences on nonuniform nodes.

/// Weights `(first, second)` for the stencil `(z - hm, z, z + hp)`.
pub fn three_point_weights(hm: f64, hp: f64) -> ([f64; 3], [f64; 3]) {
    let s = hm + hp;
    let first = [-hp / (hm * s), (hp - hm) / (hm * hp), hm / (hp * s)];
    let second = [2.0 / (hm * s), -2.0 / (hm * hp), 2.0 / (hp * s)];
    (first, second)
}

/// Second-order first derivative, one-sided at the ends.
pub fn gradient(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    assert!(n >= 3 && values.len() == n);
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let (w, _) = three_point_weights(nodes[i] - nodes[i - 1], nodes[i + 1] - nodes[i]);
        out[i] = w[0] * values[i - 1] + w[1] * values[i] + w[2] * values[i + 1];
    }
    let (h1, h2) = (nodes[1] - nodes[0], nodes[2] - nodes[1]);
    out[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * values[0] + (h1 + h2) / (h1 * h2) * values[1]
        - h1 / (h2 * (h1 + h2)) * values[2];
    let (h1, h2) = (nodes[n - 1] - nodes[n - 2], nodes[n - 2] - nodes[n - 3]);
    out[n - 1] = (2.0 * h1 + h2) / (h1 * (h1 + h2)) * values[n - 1] - (h1 + h2) / (h1 * h2) * values[n - 2]
        + h1 / (h2 * (h1 + h2)) * values[n - 3];
    out
}

/// Second derivative at interior nodes; end entries are zero.
pub fn second_derivative(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    assert!(n >= 3 && values.len() == n);
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let (_, w) = three_point_weights(nodes[i] - nodes[i - 1], nodes[i + 1] - nodes[i]);
        out[i] = w[0] * values[i - 1] + w[1] * values[i] + w[2] * values[i + 1];
    }
    out
}
