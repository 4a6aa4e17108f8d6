/// Least-squares projection of `values` onto nondecreasing sequences
/// (pool adjacent violators, unit weights).
pub fn pool_adjacent_violators(values: &[f64]) -> Vec<f64> {
    // Each block: (sum, count).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 <= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("len > 1");
            *last = (s0 + s1, c0 + c1);
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        let mean = s / c as f64;
        out.extend(std::iter::repeat_n(mean, c));
    }
    out
}
