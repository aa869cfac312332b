//! Walk the rotating cache through bucket creation, rollover, sweeping and
//! a stale token left behind by a crashed rotator.

use std::fs;
use std::time::{Duration, Instant};

use raclib::cache::{bucket_name, CachePolicy, DiskCache};

fn main() -> raclib::Result<()> {
    let root = tempfile::tempdir()?;
    let policy = CachePolicy {
        retry_delay: Duration::from_millis(200),
        ..CachePolicy::default()
    };
    let cache = DiskCache::new(root.path(), policy)?;

    let t = 1_650_000_123;
    println!("epoch {t} -> bucket {}", bucket_name(t)?);
    for now in [t, t + 10, t + 1_000, t + 2_000, t + 3_000] {
        let outcome = cache.ensure_bucket(now)?;
        println!("{now}: {outcome:?}, buckets on disk {:?}", cache.buckets()?);
    }

    fs::write(cache.token().path(), "crashed rotator")?;
    let t0 = Instant::now();
    let outcome = cache.ensure_bucket(t + 4_000)?;
    println!(
        "stale token: {outcome:?} after {:.2?}, token held now: {}",
        t0.elapsed(),
        cache.token().is_held()
    );
    Ok(())
}
