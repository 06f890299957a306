//! Data-parallel execution helpers.
//!
//! With the `parallel` feature (default) the work runs on rayon; without it
//! the same chunk schedule runs on the calling thread. Chunk boundaries are
//! derived from the data, never from the thread count, and reductions are
//! folded in chunk order, so both builds produce bit-identical results.

/// Number of samples per parallel task in batch-level loops.
pub const BATCH_CHUNK: usize = 16;

/// Run `f(chunk_index, chunk)` over `data` split into `chunk_len`-sized
/// pieces (last one may be short). Chunks are disjoint `&mut` slices.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
            f(i, chunk);
        }
    }
}

/// Map `f` over `0..n` tasks, collecting results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential version of [`map_indexed`], always available; the benches use
/// it as the single-thread baseline.
pub fn map_indexed_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Number of chunks needed to cover `n` items at `chunk_len` apiece.
pub fn chunk_count(n: usize, chunk_len: usize) -> usize {
    n.div_ceil(chunk_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_disjointly() {
        let mut data = vec![0u32; 37];
        for_each_chunk_mut(&mut data, 8, |i, chunk| {
            for x in chunk {
                *x += 1 + i as u32;
            }
        });
        // Every element written exactly once, chunk ids in order.
        let expected: Vec<u32> = (0..37).map(|j| 1 + (j / 8) as u32).collect();
        assert_eq!(data, expected);
    }

    #[test]
    fn map_indexed_is_index_ordered() {
        let out = map_indexed(10, |i| i * i);
        assert_eq!(out, (0..10).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(out, map_indexed_seq(10, |i| i * i));
    }
}
