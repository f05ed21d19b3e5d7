use rand::Rng;

use super::ForgeError;
use crate::util::rng_for;

/// Draws a query id uniformly from `batch` excluding the entry at `index`.
pub fn sample_easy_negative(batch: &[String], index: usize, seed: u64) -> Result<String, ForgeError> {
    if batch.len() < 2 {
        return Err(ForgeError::BatchTooSmall(batch.len()));
    }
    let mut rng = rng_for(seed, &["easy", &index.to_string(), &batch[index]]);
    let mut pick = rng.gen_range(0..batch.len() - 1);
    if pick >= index {
        pick += 1;
    }
    Ok(batch[pick].clone())
}
