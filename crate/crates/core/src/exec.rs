//! Data-parallel execution over independent work items (task rollouts,
//! grid cells) with a sequential fallback.
//!
//! The `parallel` cargo feature gates the rayon dependency; the `parallel`
//! runtime flag selects the path when the feature is compiled in. Output
//! order always matches input order, so results are identical between the
//! two paths whenever each item owns its RNG stream.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether the parallel path was compiled in.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// Map `f` over `items` with their indices, in parallel when requested and
/// available, sequentially otherwise.
pub fn map_indexed<T, R, F>(parallel: bool, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = parallel;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..64).collect();
        let seq = map_indexed(false, &items, |i, x| i as u64 + x * 2);
        let par = map_indexed(true, &items, |i, x| i as u64 + x * 2);
        assert_eq!(seq, par);
        assert_eq!(seq[5], 15);
    }

    #[test]
    fn paths_agree_with_per_item_rng() {
        use crate::rng::SplitRng;
        use rand::Rng;
        let root = SplitRng::new(77);
        let items: Vec<u64> = (0..16).collect();
        let run = |parallel: bool| {
            map_indexed(parallel, &items, |i, _| {
                let mut rng = root.child(i as u64);
                (0..10).map(|_| rng.random::<f64>()).sum::<f64>()
            })
        };
        assert_eq!(run(false), run(true));
    }
}
