use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

/// Runs `work(0..n)` on up to `width` scoped threads and returns the outputs
/// in index order. `progress(done, n)` is called on the calling thread.
pub fn run_ordered<T: Send>(
    n: usize,
    width: usize,
    work: impl Fn(usize) -> T + Sync,
    progress: &mut dyn FnMut(usize, usize),
) -> Vec<T> {
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    thread::scope(|s| {
        for _ in 0..width.max(1).min(n) {
            let tx = tx.clone();
            let (next, work) = (&next, &work);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n || tx.send((i, work(i))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (done, (i, out)) in rx.into_iter().enumerate() {
            slots[i] = Some(out);
            progress(done + 1, n);
        }
    });
    slots.into_iter().map(|s| s.expect("every index reports back")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_index_order() {
        let out = run_ordered(100, 7, |i| i * i, &mut |_, _| {});
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn zero_items() {
        let out: Vec<u8> = run_ordered(0, 4, |_| unreachable!(), &mut |_, _| unreachable!());
        assert!(out.is_empty());
    }
}
