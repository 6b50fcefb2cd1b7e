//! Manifest-driven image fetching: HTTP(S) downloads and local copies with
//! checksum verification, quarantine of bad files, skip-if-verified
//! idempotence, and a global rate limit across worker threads.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use crate::error::Result;

use super::manifest::{DatasetManifest, ManifestEntry};

#[derive(Debug, Clone)]
pub struct FetchOptions {
    /// Global request budget in requests per second (network fetches only).
    pub rate_limit: f64,
    /// Worker thread count.
    pub parallelism: usize,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            rate_limit: 4.0,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchStatus {
    Fetched,
    Skipped,
    Failed(String),
}

/// Per-id outcome summary of a fetch run.
#[derive(Debug, Clone, Default)]
pub struct FetchReport {
    pub fetched: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
}

impl FetchReport {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.fetched.len(), self.skipped.len(), self.failed.len())
    }
}

struct RateLimiter {
    min_interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(per_second: f64) -> Self {
        let per_second = per_second.max(1e-3);
        RateLimiter {
            min_interval: Duration::from_secs_f64(1.0 / per_second),
            next: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.min_interval;
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// File extension for the destination, taken from the source path.
fn extension_of(source: &str) -> String {
    let trimmed = source.split(['?', '#']).next().unwrap_or(source);
    Path::new(trimmed)
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_else(|| "png".to_string())
}

/// Destination path for a manifest entry inside `dest_dir`.
pub fn dest_path(dest_dir: &Path, entry: &ManifestEntry) -> PathBuf {
    dest_dir.join(format!("{}.{}", entry.id, extension_of(&entry.source_url)))
}

fn quarantine(dest_dir: &Path, file: &Path, bytes: Option<&[u8]>) -> std::io::Result<()> {
    let qdir = dest_dir.join("quarantine");
    fs::create_dir_all(&qdir)?;
    let target = qdir.join(file.file_name().unwrap_or_default());
    match bytes {
        Some(b) => fs::write(&target, b)?,
        None => {
            fs::rename(file, &target)?;
        }
    }
    Ok(())
}

fn http_get(url: &str, limiter: &RateLimiter) -> std::result::Result<Vec<u8>, String> {
    limiter.acquire();
    let mut response = ureq::get(url).call().map_err(|e| e.to_string())?;
    response
        .body_mut()
        .with_config()
        .limit(512 * 1024 * 1024)
        .read_to_vec()
        .map_err(|e| e.to_string())
}

fn fetch_entry(entry: &ManifestEntry, dest_dir: &Path, limiter: &RateLimiter) -> FetchStatus {
    if entry.id.contains(['/', '\\']) {
        return FetchStatus::Failed("id contains a path separator".into());
    }
    let dest = dest_path(dest_dir, entry);

    if dest.exists() {
        match &entry.sha256 {
            None => return FetchStatus::Skipped,
            Some(want) => match fs::read(&dest) {
                Ok(bytes) if sha256_hex(&bytes) == want.to_ascii_lowercase() => {
                    return FetchStatus::Skipped;
                }
                Ok(_) => {
                    // stale or corrupt local file: move it aside and refetch
                    if let Err(e) = quarantine(dest_dir, &dest, None) {
                        return FetchStatus::Failed(format!("quarantine failed: {e}"));
                    }
                }
                Err(e) => return FetchStatus::Failed(format!("cannot read existing file: {e}")),
            },
        }
    }

    let source = entry.source_url.as_str();
    let bytes = if source.starts_with("http://") || source.starts_with("https://") {
        match http_get(source, limiter) {
            Ok(b) => b,
            Err(e) => return FetchStatus::Failed(format!("download failed: {e}")),
        }
    } else {
        let path = source.strip_prefix("file://").unwrap_or(source);
        match fs::read(path) {
            Ok(b) => b,
            Err(e) => return FetchStatus::Failed(format!("local read failed: {e}")),
        }
    };

    if let Some(want) = &entry.sha256 {
        if sha256_hex(&bytes) != want.to_ascii_lowercase() {
            return match quarantine(dest_dir, &dest, Some(&bytes)) {
                Ok(()) => FetchStatus::Failed("checksum mismatch (quarantined)".into()),
                Err(e) => FetchStatus::Failed(format!("checksum mismatch; quarantine failed: {e}")),
            };
        }
    }
    if let Err(e) = fs::write(&dest, &bytes) {
        return FetchStatus::Failed(format!("write failed: {e}"));
    }
    FetchStatus::Fetched
}

/// Downloads every manifest entry into `dest_dir/<id>.<ext>`. Entries with
/// matching files already present are skipped; failures are recorded per
/// entry and never abort the run. Re-running after success performs zero
/// transfers.
pub fn fetch_images(
    manifest: &DatasetManifest,
    dest_dir: &Path,
    opts: &FetchOptions,
) -> Result<FetchReport> {
    fs::create_dir_all(dest_dir)?;
    let limiter = RateLimiter::new(opts.rate_limit);
    let n = manifest.entries.len();
    let outcomes: Mutex<Vec<Option<FetchStatus>>> = Mutex::new(vec![None; n]);
    let cursor = AtomicUsize::new(0);
    let workers = opts.parallelism.clamp(1, n.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let status = fetch_entry(&manifest.entries[i], dest_dir, &limiter);
                outcomes.lock().expect("outcome lock")[i] = Some(status);
            });
        }
    });

    let mut report = FetchReport::default();
    for (entry, status) in manifest.entries.iter().zip(outcomes.into_inner().unwrap()) {
        match status.expect("every entry processed") {
            FetchStatus::Fetched => report.fetched.push(entry.id.clone()),
            FetchStatus::Skipped => report.skipped.push(entry.id.clone()),
            FetchStatus::Failed(reason) => report.failed.push((entry.id.clone(), reason)),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::manifest::Split;
    use tempfile::tempdir;

    fn local_entry(id: &str, path: &Path, sha: Option<String>) -> ManifestEntry {
        ManifestEntry {
            id: id.to_string(),
            source_url: path.display().to_string(),
            sha256: sha,
            split: Split::Unassigned,
        }
    }

    #[test]
    fn empty_manifest_reports_zeroes() {
        let dir = tempdir().unwrap();
        let m = DatasetManifest::new(vec![]).unwrap();
        let r = fetch_images(&m, dir.path(), &FetchOptions::default()).unwrap();
        assert_eq!(r.counts(), (0, 0, 0));
    }

    #[test]
    fn local_copies_are_byte_identical_and_idempotent() {
        let src_dir = tempdir().unwrap();
        let dest_dir = tempdir().unwrap();
        let mut entries = Vec::new();
        for i in 0..3 {
            let p = src_dir.path().join(format!("src{i}.png"));
            let payload: Vec<u8> = (0..100).map(|b| (b * (i + 1)) as u8).collect();
            fs::write(&p, &payload).unwrap();
            entries.push(local_entry(&format!("img{i}"), &p, Some(sha256_hex(&payload))));
        }
        let m = DatasetManifest::new(entries).unwrap();

        let r = fetch_images(&m, dest_dir.path(), &FetchOptions::default()).unwrap();
        assert_eq!(r.counts(), (3, 0, 0));
        for (i, entry) in m.entries.iter().enumerate() {
            let src = fs::read(src_dir.path().join(format!("src{i}.png"))).unwrap();
            let dst = fs::read(dest_path(dest_dir.path(), entry)).unwrap();
            assert_eq!(src, dst);
        }

        // second run: everything verified-present, nothing fetched
        let r2 = fetch_images(&m, dest_dir.path(), &FetchOptions::default()).unwrap();
        assert_eq!(r2.counts(), (0, 3, 0));
    }

    #[test]
    fn checksum_mismatch_quarantines_and_fails() {
        let src_dir = tempdir().unwrap();
        let dest_dir = tempdir().unwrap();
        let p = src_dir.path().join("src.png");
        fs::write(&p, b"actual content").unwrap();
        let m = DatasetManifest::new(vec![local_entry("bad", &p, Some("00".repeat(32)))]).unwrap();
        let r = fetch_images(&m, dest_dir.path(), &FetchOptions::default()).unwrap();
        assert_eq!(r.counts(), (0, 0, 1));
        assert!(r.failed[0].1.contains("checksum"));
        // no destination file, quarantined copy exists
        assert!(!dest_path(dest_dir.path(), &m.entries[0]).exists());
        assert!(dest_dir.path().join("quarantine").join("bad.png").exists());
    }

    #[test]
    fn missing_source_marks_failed_and_continues() {
        let src_dir = tempdir().unwrap();
        let dest_dir = tempdir().unwrap();
        let good = src_dir.path().join("ok.png");
        fs::write(&good, b"fine").unwrap();
        let m = DatasetManifest::new(vec![
            local_entry("gone", Path::new("/definitely/not/here.png"), None),
            local_entry("ok", &good, None),
        ])
        .unwrap();
        let r = fetch_images(&m, dest_dir.path(), &FetchOptions::default()).unwrap();
        assert_eq!(r.counts(), (1, 0, 1));
        assert_eq!(r.failed[0].0, "gone");
        assert_eq!(r.fetched[0], "ok");
    }
}
