//! Serve a packed collection over HTTP and request the same page twice.
//!
//! ```text
//! cargo run --example image_server
//! ```

use std::fs;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;

use raclib::cache::{CachePolicy, DiskCache, Resolver};
use raclib::library::{self, Library};
use raclib::server;

fn get(addr: SocketAddr, path: &str) -> std::io::Result<(String, Vec<u8>)> {
    let mut stream = TcpStream::connect(addr)?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")?;
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw)?;
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header end");
    let head = String::from_utf8_lossy(&raw[..split]).into_owned();
    Ok((head, raw[split + 4..].to_vec()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = tempfile::tempdir()?;
    let scans = work.path().join("scans");
    fs::create_dir_all(&scans)?;
    for page in 1..=20 {
        let mut bytes = vec![0xFF, 0xD8, 0xFF, 0xE0];
        bytes.resize(10_000 + page * 777, page as u8);
        fs::write(scans.join(format!("Atlas1901_{page:04}.jpg")), bytes)?;
    }
    library::pack(&scans, work.path().join("lib"), "Atlas1901", 1024, None)?;

    let resolver = Arc::new(Resolver::new(
        Library::open(work.path().join("lib"))?,
        DiskCache::new(work.path().join("cache"), CachePolicy::default())?,
    ));

    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = runtime.spawn(server::serve_on(listener, resolver, async {
        let _ = stopped.await;
    }));
    println!("listening on {addr}");

    for _ in 0..2 {
        let (head, body) = get(addr, "/image?title=Atlas1901&page=0007")?;
        let source = head
            .lines()
            .find_map(|l| l.strip_prefix("x-raclib-source: "))
            .unwrap_or("?");
        println!("{} / source={source} / {} bytes", head.lines().next().unwrap_or(""), body.len());
    }
    let (head, _) = get(addr, "/image?title=Atlas1901&page=9999")?;
    println!("unknown page: {}", head.lines().next().unwrap_or(""));

    let _ = stop.send(());
    runtime.block_on(server)??;
    Ok(())
}
