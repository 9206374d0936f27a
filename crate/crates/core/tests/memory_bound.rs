//! Peak heap use of the core-matrix squeeze must scale with (m + n)·r_src,
//! not with m·n.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use lora_squeeze::{gaussian_matrix, squeeze_efficient, CoreSvd, LoraFactorPair, SqueezeMethod};

struct Tracking;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Tracking {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::SeqCst);
    }
}

#[global_allocator]
static GLOBAL: Tracking = Tracking;

#[test]
fn efficient_squeeze_peak_memory_is_rank_bound() {
    let (m, n, r) = (4096usize, 4096usize, 64usize);
    let pair = LoraFactorPair::new(
        "big",
        gaussian_matrix(m, r, 1).unwrap(),
        gaussian_matrix(r, n, 2).unwrap(),
    )
    .unwrap();

    let baseline = CURRENT.load(Ordering::SeqCst);
    PEAK.store(baseline, Ordering::SeqCst);
    let (out, _) = squeeze_efficient(&pair, 8, &SqueezeMethod::Efficient(CoreSvd::Full)).unwrap();
    let peak_extra = PEAK.load(Ordering::SeqCst) - baseline;
    drop(out);

    let bound_elements = (m + n) * r + r * r;
    let c = 4;
    let limit = c * bound_elements * std::mem::size_of::<f64>();
    let dense = m * n * std::mem::size_of::<f64>();
    println!("peak auxiliary {peak_extra} bytes; limit {limit} (c = {c}); dense product {dense}");
    assert!(peak_extra <= limit, "peak {peak_extra} exceeds {limit}");
    assert!(peak_extra < dense / 4);
}
