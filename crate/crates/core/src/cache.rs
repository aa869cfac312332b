//! Rotating disk cache in front of a library, guarded by a token file.
//!
//! Cache directories are named by epoch seconds with the last three digits
//! removed, so a new bucket starts every 1000 seconds. A bucket lives for
//! 2000 seconds: lookups consult the current and the previous bucket, and
//! the process that creates a new bucket deletes everything older.
//!
//! Bucket creation is serialized across processes by a `token` file in the
//! cache root, taken with an exclusive create. A process that cannot take
//! the token sleeps one second and checks for the bucket again; after the
//! second failed wait it assumes the holder died, recreates the token and
//! proceeds as owner.

use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::library::Library;

pub const EPOCH_FLOOR: u64 = 1_000_000_000;
pub const DEFAULT_BUCKET_WIDTH: u64 = 1000;
pub const DEFAULT_BUCKET_TTL: u64 = 2000;
pub const TOKEN_FILE: &str = "token";

/// Cache directory name for `now`: the epoch seconds without their last
/// three digits.
pub fn bucket_name(now: u64) -> Result<String> {
    CachePolicy::default().bucket_of(now).map(|b| b.to_string())
}

pub fn epoch_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct CachePolicy {
    pub bucket_width: u64,
    pub bucket_ttl: u64,
    /// Sleep between token attempts.
    pub retry_delay: Duration,
    /// Failed waits before a held token is treated as stale.
    pub max_waits: u32,
}

impl Default for CachePolicy {
    fn default() -> Self {
        CachePolicy {
            bucket_width: DEFAULT_BUCKET_WIDTH,
            bucket_ttl: DEFAULT_BUCKET_TTL,
            retry_delay: Duration::from_secs(1),
            max_waits: 2,
        }
    }
}

impl CachePolicy {
    pub fn new(bucket_width: u64, bucket_ttl: u64) -> Result<Self> {
        if bucket_width == 0 || bucket_ttl < bucket_width {
            return Err(Error::Config(format!(
                "bucket ttl ({bucket_ttl}) must be at least the bucket width ({bucket_width}), which must be positive"
            )));
        }
        Ok(CachePolicy {
            bucket_width,
            bucket_ttl,
            ..Default::default()
        })
    }

    pub fn bucket_of(&self, now: u64) -> Result<u64> {
        if now < EPOCH_FLOOR {
            return Err(Error::EpochTooEarly(now));
        }
        Ok(now / self.bucket_width)
    }

    /// Number of buckets (current included) that are still live.
    pub fn live_buckets(&self) -> u64 {
        (self.bucket_ttl / self.bucket_width).max(1)
    }

    /// Oldest bucket id kept when `current` is the newest.
    pub fn oldest_live(&self, current: u64) -> u64 {
        current.saturating_sub(self.live_buckets() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsureOutcome {
    /// This call took the token and created the bucket.
    Created,
    /// The bucket was already there.
    Existed,
    /// Another process created the bucket while this one waited.
    Waited,
    /// The token looked stale; this call broke it and created the bucket.
    Forced,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct SweepReport {
    pub deleted: Vec<u64>,
    pub failed: Vec<(u64, String)>,
}

/// The inter-process token. Held while the guard lives.
#[derive(Debug)]
pub struct TokenLock {
    path: PathBuf,
}

#[derive(Debug)]
pub struct TokenGuard {
    path: PathBuf,
    stamp: String,
}

static TOKEN_SEQ: AtomicU64 = AtomicU64::new(0);

fn unique_stamp() -> String {
    format!(
        "{} {} {}",
        std::process::id(),
        TOKEN_SEQ.fetch_add(1, Ordering::Relaxed),
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0)
    )
}

impl TokenLock {
    pub fn new(cache_root: &Path) -> Self {
        TokenLock {
            path: cache_root.join(TOKEN_FILE),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_held(&self) -> bool {
        self.path.exists()
    }

    /// Take the token if nobody holds it.
    pub fn try_acquire(&self) -> Result<Option<TokenGuard>> {
        match OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&self.path)
        {
            Ok(f) => Ok(Some(self.stamp(f)?)),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Recreate the token regardless of its current holder.
    pub fn force(&self) -> Result<TokenGuard> {
        match fs::remove_file(&self.path) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        let f = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(&self.path)?;
        self.stamp(f)
    }

    fn stamp(&self, mut f: File) -> Result<TokenGuard> {
        let stamp = unique_stamp();
        f.write_all(stamp.as_bytes())?;
        Ok(TokenGuard {
            path: self.path.clone(),
            stamp,
        })
    }
}

impl Drop for TokenGuard {
    fn drop(&mut self) {
        // Only remove the token if it is still ours; a forced takeover may
        // have replaced it.
        let mut current = String::new();
        let ours = File::open(&self.path)
            .and_then(|mut f| f.read_to_string(&mut current))
            .map(|_| current == self.stamp)
            .unwrap_or(false);
        if ours {
            let _ = fs::remove_file(&self.path);
        }
    }
}

/// Where a delivered payload came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Cache,
    Library,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Cache => "cache",
            Source::Library => "library",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
    policy: CachePolicy,
}

static TEMP_SEQ: AtomicU64 = AtomicU64::new(0);

impl DiskCache {
    pub fn new(root: impl AsRef<Path>, policy: CachePolicy) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(DiskCache { root, policy })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn policy(&self) -> &CachePolicy {
        &self.policy
    }

    pub fn token(&self) -> TokenLock {
        TokenLock::new(&self.root)
    }

    pub fn bucket_dir(&self, bucket: u64) -> PathBuf {
        self.root.join(bucket.to_string())
    }

    /// Bucket ids currently present in the cache root, ascending.
    pub fn buckets(&self) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if !name.is_empty() && name.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(id) = name.parse() {
                    out.push(id);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Make sure the bucket for `now` exists, following the token protocol.
    pub fn ensure_bucket(&self, now: u64) -> Result<EnsureOutcome> {
        let current = self.policy.bucket_of(now)?;
        let dir = self.bucket_dir(current);
        if dir.is_dir() {
            return Ok(EnsureOutcome::Existed);
        }
        let token = self.token();
        for _ in 0..self.policy.max_waits {
            if let Some(guard) = token.try_acquire()? {
                self.rotate(current, now)?;
                drop(guard);
                return Ok(EnsureOutcome::Created);
            }
            thread::sleep(self.policy.retry_delay);
            if dir.is_dir() {
                return Ok(EnsureOutcome::Waited);
            }
        }
        log::warn!(
            "{}: token still held after {} waits, taking it over",
            self.root.display(),
            self.policy.max_waits
        );
        let guard = token.force()?;
        self.rotate(current, now)?;
        drop(guard);
        Ok(EnsureOutcome::Forced)
    }

    fn rotate(&self, current: u64, now: u64) -> Result<()> {
        match fs::create_dir(self.bucket_dir(current)) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {}
            Err(e) => return Err(e.into()),
        }
        let report = self.sweep_old_buckets(now)?;
        for (bucket, reason) in &report.failed {
            log::warn!("could not delete cache bucket {bucket}: {reason}");
        }
        Ok(())
    }

    /// Delete buckets past their lifetime. The caller should hold the token.
    pub fn sweep_old_buckets(&self, now: u64) -> Result<SweepReport> {
        let current = self.policy.bucket_of(now)?;
        let oldest = self.policy.oldest_live(current);
        let mut report = SweepReport::default();
        for bucket in self.buckets()? {
            if bucket >= oldest {
                continue;
            }
            match fs::remove_dir_all(self.bucket_dir(bucket)) {
                Ok(()) => report.deleted.push(bucket),
                Err(e) if e.kind() == ErrorKind::NotFound => {}
                Err(e) => report.failed.push((bucket, e.to_string())),
            }
        }
        Ok(report)
    }

    pub fn file_name(title: &str, page: &str) -> String {
        format!("{title}_{page}.jpg")
    }

    /// Cached bytes from the newest live bucket holding them.
    pub fn lookup(&self, title: &str, page: &str, now: u64) -> Result<Option<Vec<u8>>> {
        let current = self.policy.bucket_of(now)?;
        let name = Self::file_name(title, page);
        for bucket in (self.policy.oldest_live(current)..=current).rev() {
            match fs::read(self.bucket_dir(bucket).join(&name)) {
                Ok(bytes) => return Ok(Some(bytes)),
                Err(e) if e.kind() == ErrorKind::NotFound => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(None)
    }

    /// Write into the current bucket under a temporary name, then rename so
    /// readers only ever see complete files.
    pub fn insert(&self, title: &str, page: &str, bytes: &[u8], now: u64) -> Result<PathBuf> {
        let dir = self.bucket_dir(self.policy.bucket_of(now)?);
        let name = Self::file_name(title, page);
        let tmp = dir.join(format!(
            ".{name}.{}.{}.tmp",
            std::process::id(),
            TEMP_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let result = (|| -> Result<PathBuf> {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            drop(f);
            let dest = dir.join(&name);
            fs::rename(&tmp, &dest)?;
            Ok(dest)
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result
    }
}

/// A validated `(title, page)` request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryRequest {
    pub title: String,
    pub page: String,
}

impl DeliveryRequest {
    pub fn new(title: &str, page: &str) -> Result<Self> {
        for token in [title, page] {
            let bad = token.is_empty()
                || token.starts_with('.')
                || token
                    .chars()
                    .any(|c| c.is_whitespace() || c.is_control() || c == '/' || c == '\\');
            if bad {
                return Err(Error::InvalidToken(token.to_string()));
            }
        }
        Ok(DeliveryRequest {
            title: title.to_string(),
            page: page.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Delivery {
    pub bytes: Vec<u8>,
    pub source: Source,
    pub elapsed: Duration,
}

/// Resolves requests through the cache, falling back to the library.
#[derive(Debug)]
pub struct Resolver {
    library: Library,
    cache: DiskCache,
}

impl Resolver {
    pub fn new(library: Library, cache: DiskCache) -> Self {
        Resolver { library, cache }
    }

    pub fn library(&self) -> &Library {
        &self.library
    }

    pub fn cache(&self) -> &DiskCache {
        &self.cache
    }

    pub fn resolve_image(&self, request: &DeliveryRequest, now: u64) -> Result<Delivery> {
        let started = Instant::now();
        let (title, page) = (request.title.as_str(), request.page.as_str());

        let bucket_ready = match self.cache.ensure_bucket(now) {
            Ok(_) => true,
            Err(e @ Error::EpochTooEarly(_)) => return Err(e),
            Err(e) => {
                log::warn!("cache unavailable, serving from library: {e}");
                false
            }
        };

        if bucket_ready {
            match self.cache.lookup(title, page, now) {
                Ok(Some(bytes)) => {
                    return Ok(Delivery {
                        bytes,
                        source: Source::Cache,
                        elapsed: started.elapsed(),
                    })
                }
                Ok(None) => {}
                Err(e) => log::warn!("cache read failed for {title} {page}: {e}"),
            }
        }

        let bytes = self.library.fetch(title, page)?;
        if bucket_ready {
            if let Err(e) = self.cache.insert(title, page, &bytes, now) {
                log::warn!("could not cache {title} {page}: {e}");
            }
        }
        Ok(Delivery {
            bytes,
            source: Source::Library,
            elapsed: started.elapsed(),
        })
    }
}
