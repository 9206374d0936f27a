//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature the items are spread over the current rayon
//! pool; without it they run in sequence. Results come back in input order
//! either way, so callers see identical output regardless of thread count.

#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Applies a fallible `f` to every item and fails on the first error in
/// input order.
pub fn try_map_ordered<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map_ordered(items, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        let out = map_ordered(&items, |x| x * x);
        assert!(out.iter().enumerate().all(|(i, &v)| v == (i * i) as u64));
    }

    #[test]
    fn reports_first_error_in_order() {
        let items: Vec<i32> = (0..100).collect();
        let out: Result<Vec<i32>, i32> =
            try_map_ordered(&items, |&x| if x % 30 == 29 { Err(x) } else { Ok(x) });
        assert_eq!(out, Err(29));
    }
}
