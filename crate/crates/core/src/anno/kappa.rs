use super::AnnoError;

/// Fleiss' kappa for an items x categories count matrix in which every item
/// was rated by the same number of raters.
pub fn fleiss_kappa(matrix: &[Vec<u32>]) -> Result<f64, AnnoError> {
    let first = matrix.first().ok_or(AnnoError::EmptyMatrix)?;
    let n: u32 = first.iter().sum();
    for (i, row) in matrix.iter().enumerate() {
        let sum: u32 = row.iter().sum();
        if row.len() != first.len() || sum != n {
            return Err(AnnoError::RaggedMatrix { row: i, raters: sum, expected: n });
        }
    }
    if n < 2 {
        return Err(AnnoError::RaggedMatrix { row: 0, raters: n, expected: 2 });
    }
    kappa_unbalanced(matrix)
}

/// The same statistic when items have differing rater counts (each at least
/// two): per-item agreement uses that item's own count and category
/// proportions are pooled over all ratings.
pub fn kappa_unbalanced(matrix: &[Vec<u32>]) -> Result<f64, AnnoError> {
    let k = matrix.first().ok_or(AnnoError::EmptyMatrix)?.len();
    let mut totals = vec![0f64; k];
    let mut ratings = 0f64;
    let mut p_bar = 0f64;
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != k {
            return Err(AnnoError::RaggedMatrix { row: i, raters: row.iter().sum(), expected: 0 });
        }
        let n_i: f64 = row.iter().map(|&c| c as f64).sum();
        if n_i < 2.0 {
            return Err(AnnoError::RaggedMatrix { row: i, raters: n_i as u32, expected: 2 });
        }
        let sq: f64 = row.iter().map(|&c| (c as f64) * (c as f64)).sum();
        p_bar += (sq - n_i) / (n_i * (n_i - 1.0));
        for (t, &c) in totals.iter_mut().zip(row) {
            *t += c as f64;
        }
        ratings += n_i;
    }
    p_bar /= matrix.len() as f64;
    let p_e: f64 = totals.iter().map(|t| (t / ratings).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(AnnoError::DegenerateAgreement);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}
