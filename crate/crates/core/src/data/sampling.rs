use rand::Rng;

use super::DataError;

/// Draws `count` negatives uniformly, with replacement, from the real items
/// `1..num_items` other than `positive`.
pub fn sample_negatives<R: Rng>(
    positive: u32,
    count: usize,
    num_items: usize,
    rng: &mut R,
) -> Result<Vec<u32>, DataError> {
    if num_items <= 2 {
        return Err(DataError::Sampling(format!("need at least two real items to sample negatives, V={num_items}")));
    }
    if count >= num_items - 1 {
        return Err(DataError::Sampling(format!("{count} negatives requested from V={num_items}")));
    }
    if positive == 0 || positive as usize >= num_items {
        return Err(DataError::Sampling(format!("positive {positive} is not a real item of V={num_items}")));
    }
    // num_items - 2 candidates: every real item except the positive
    let span = num_items as u32 - 2;
    Ok((0..count)
        .map(|_| {
            let draw = rng.gen_range(1..=span);
            if draw >= positive {
                draw + 1
            } else {
                draw
            }
        })
        .collect())
}
