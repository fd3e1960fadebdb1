//! In-process partitioned map-reduce: contiguous partitions, one thread per
//! partition, reduction in partition order.

use std::ops::Range;
use std::thread;

/// Splits `0..len` into `parts` contiguous ranges whose sizes differ by at most one.
/// Larger ranges come first. Empty ranges are omitted.
pub fn even_ranges(len: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.max(1);
    let base = len / parts;
    let extra = len % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        if size == 0 {
            break;
        }
        out.push(start..start + size);
        start += size;
    }
    out
}

/// Maps each partition of `data` on its own thread and folds the partial
/// results left to right in partition order. Returns `None` for empty input.
pub fn map_reduce<T, R, M, F>(data: &[T], workers: usize, map: M, reduce: F) -> Option<R>
where
    T: Sync,
    R: Send,
    M: Fn(&[T]) -> R + Sync,
    F: Fn(R, R) -> R,
{
    let ranges = even_ranges(data.len(), workers);
    if ranges.len() <= 1 {
        return ranges.into_iter().next().map(|r| map(&data[r]));
    }
    let partials: Vec<R> = thread::scope(|s| {
        let handles: Vec<_> = ranges
            .into_iter()
            .map(|r| {
                let part = &data[r];
                let map = &map;
                s.spawn(move || map(part))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("partition worker panicked"))
            .collect()
    });
    partials.into_iter().reduce(reduce)
}

/// Applies `f` to every element with `workers` threads, preserving order.
pub fn par_map<T, R, F>(data: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    map_reduce(
        data,
        workers,
        |part| part.iter().map(&f).collect::<Vec<R>>(),
        |mut a, b| {
            a.extend(b);
            a
        },
    )
    .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_even() {
        assert_eq!(even_ranges(10, 3), vec![0..4, 4..7, 7..10]);
        assert_eq!(even_ranges(2, 4), vec![0..1, 1..2]);
        assert!(even_ranges(0, 3).is_empty());
        assert_eq!(even_ranges(5, 0), vec![0..5]);
    }

    #[test]
    fn map_reduce_matches_sequential() {
        let data: Vec<u64> = (1..=1001).collect();
        for w in 1..9 {
            let s = map_reduce(&data, w, |p| p.iter().sum::<u64>(), |a, b| a + b);
            assert_eq!(s, Some(501_501));
            assert_eq!(par_map(&data, w, |x| x * 2), data.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
        assert_eq!(map_reduce(&[] as &[u64], 4, |p| p.len(), |a, b| a + b), None);
    }
}
