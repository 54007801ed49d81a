//! Archive fetching with checksum verification.

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::{Path, PathBuf};

/// A downloadable dataset archive.
#[derive(Debug, Clone)]
pub struct ArchiveSpec {
    pub url: String,
    pub file_name: String,
    /// Hex SHA-256 of the archive. Verification is mandatory when present;
    /// when absent the fetch proceeds but the caller is warned.
    pub sha256: Option<String>,
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let mut file = std::fs::File::open(path.as_ref())?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Downloads `spec.url` into `dest_dir/spec.file_name` unless already
/// present, verifies the checksum when one is pinned, and extracts the
/// tarball next to it. Returns the archive path.
pub fn fetch_archive(spec: &ArchiveSpec, dest_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dest_dir = dest_dir.as_ref();
    std::fs::create_dir_all(dest_dir)?;
    let archive = dest_dir.join(&spec.file_name);
    if !archive.is_file() {
        download(&spec.url, &archive)?;
    }
    if let Some(expected) = &spec.sha256 {
        let actual = sha256_file(&archive)?;
        if &actual != expected {
            return Err(Error::Checksum {
                path: archive.display().to_string(),
                expected: expected.clone(),
                actual,
            });
        }
    }
    extract_tar_gz(&archive, dest_dir)?;
    Ok(archive)
}

fn download(url: &str, dest: &Path) -> Result<()> {
    let response = ureq::get(url)
        .call()
        .map_err(|e| Error::Dataset(format!("download {url} failed: {e}")))?;
    let tmp = dest.with_extension("partial");
    let mut file = std::fs::File::create(&tmp)?;
    std::io::copy(&mut response.into_reader(), &mut file)?;
    std::fs::rename(&tmp, dest)?;
    Ok(())
}

pub fn extract_tar_gz(archive: impl AsRef<Path>, dest: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::open(archive.as_ref())?;
    let gz = flate2::read::GzDecoder::new(file);
    let mut tar = tar::Archive::new(gz);
    tar.unpack(dest.as_ref())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use std::net::TcpListener;

    fn make_tar_gz(payload_name: &str, payload: &[u8]) -> Vec<u8> {
        let gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        let mut builder = tar::Builder::new(gz);
        let mut header = tar::Header::new_gnu();
        header.set_size(payload.len() as u64);
        header.set_mode(0o644);
        header.set_cksum();
        builder
            .append_data(&mut header, payload_name, payload)
            .unwrap();
        builder.into_inner().unwrap().finish().unwrap()
    }

    /// One-shot HTTP server on an ephemeral local port.
    fn serve_once(body: Vec<u8>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 4096];
                let _ = std::io::Read::read(&mut stream, &mut buf);
                let head = format!(
                    "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nContent-Type: application/octet-stream\r\n\r\n",
                    body.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(&body);
            }
        });
        format!("http://{addr}/archive.tar.gz")
    }

    #[test]
    fn fetch_verifies_checksum_and_extracts() {
        let tarball = make_tar_gz("inner/data.txt", b"hello");
        let mut hasher = Sha256::new();
        hasher.update(&tarball);
        let digest = hex_string(&hasher.finalize());

        let dir = tempfile::tempdir().unwrap();
        let spec = ArchiveSpec {
            url: serve_once(tarball.clone()),
            file_name: "archive.tar.gz".into(),
            sha256: Some(digest),
        };
        let path = fetch_archive(&spec, dir.path()).unwrap();
        assert!(path.is_file());
        let extracted = std::fs::read(dir.path().join("inner/data.txt")).unwrap();
        assert_eq!(extracted, b"hello");
    }

    #[test]
    fn fetch_rejects_bad_checksum() {
        let tarball = make_tar_gz("x.txt", b"payload");
        let dir = tempfile::tempdir().unwrap();
        let spec = ArchiveSpec {
            url: serve_once(tarball),
            file_name: "archive.tar.gz".into(),
            sha256: Some("00".repeat(32)),
        };
        match fetch_archive(&spec, dir.path()) {
            Err(Error::Checksum { expected, .. }) => assert_eq!(expected, "00".repeat(32)),
            other => panic!("expected checksum error, got {other:?}"),
        }
    }
}
