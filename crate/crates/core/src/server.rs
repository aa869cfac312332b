//! HTTP front end for a [`Resolver`].
//!
//! - `GET /image?title=<t>&page=<p>`: 200 with the payload, 404 if unknown,
//!   400 if malformed. Responses carry `X-RacLib-Source: cache|library` and
//!   `X-RacLib-Millis`.
//! - `GET /health`: 200.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;

use crate::cache::{epoch_now, DeliveryRequest, DiskCache, Resolver};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::library::Library;

pub const SOURCE_HEADER: &str = "x-raclib-source";
pub const MILLIS_HEADER: &str = "x-raclib-millis";

/// Content type from the payload's leading bytes.
pub fn sniff_content_type(bytes: &[u8]) -> &'static str {
    match bytes {
        [0x89, b'P', b'N', b'G', ..] => "image/png",
        [b'G', b'I', b'F', b'8', ..] => "image/gif",
        [b'R', b'I', b'F', b'F', _, _, _, _, b'W', b'E', b'B', b'P', ..] => "image/webp",
        [b'%', b'P', b'D', b'F', ..] => "application/pdf",
        _ => "image/jpeg",
    }
}

pub fn router(resolver: Arc<Resolver>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/image", get(image))
        .with_state(resolver)
}

async fn health() -> &'static str {
    "ok\n"
}

async fn image(
    State(resolver): State<Arc<Resolver>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let (Some(title), Some(page)) = (params.get("title"), params.get("page")) else {
        return (StatusCode::BAD_REQUEST, "title and page are required\n").into_response();
    };
    let request = match DeliveryRequest::new(title, page) {
        Ok(r) => r,
        Err(e) => return (StatusCode::BAD_REQUEST, format!("{e}\n")).into_response(),
    };

    let resolved =
        tokio::task::spawn_blocking(move || resolver.resolve_image(&request, epoch_now())).await;
    match resolved {
        Ok(Ok(delivery)) => {
            let mut response = (
                StatusCode::OK,
                [(header::CONTENT_TYPE, sniff_content_type(&delivery.bytes))],
                delivery.bytes,
            )
                .into_response();
            let headers = response.headers_mut();
            headers.insert(
                SOURCE_HEADER,
                HeaderValue::from_static(delivery.source.as_str()),
            );
            let millis = format!("{:.3}", delivery.elapsed.as_secs_f64() * 1000.0);
            if let Ok(v) = HeaderValue::from_str(&millis) {
                headers.insert(MILLIS_HEADER, v);
            }
            response
        }
        Ok(Err(e)) if e.is_not_found() => (StatusCode::NOT_FOUND, format!("{e}\n")).into_response(),
        Ok(Err(e @ Error::InvalidToken(_))) => {
            (StatusCode::BAD_REQUEST, format!("{e}\n")).into_response()
        }
        Ok(Err(e)) => {
            log::error!("delivery failed: {e}");
            (StatusCode::INTERNAL_SERVER_ERROR, format!("{e}\n")).into_response()
        }
        Err(e) => {
            log::error!("resolver task failed: {e}");
            StatusCode::INTERNAL_SERVER_ERROR.into_response()
        }
    }
}

/// Open the library and cache named by `config`.
pub fn resolver_from_config(config: &Config) -> Result<Resolver> {
    if !config.library_dir.is_dir() {
        return Err(Error::Config(format!(
            "library directory {} does not exist",
            config.library_dir.display()
        )));
    }
    let library = Library::open(&config.library_dir)?;
    let cache = DiskCache::new(&config.cache_root, config.cache_policy()?)?;
    Ok(Resolver::new(library, cache))
}

/// Serve on an already-bound listener until `shutdown` resolves.
pub async fn serve_on<F>(listener: TcpListener, resolver: Arc<Resolver>, shutdown: F) -> Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(resolver))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Bind `0.0.0.0:<port>` and serve until Ctrl-C.
pub async fn serve(config: &Config) -> Result<()> {
    let resolver = Arc::new(resolver_from_config(config)?);
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = TcpListener::bind(addr).await?;
    log::info!(
        "serving {} collection(s) from {} on {}",
        resolver.library().collections().len(),
        config.library_dir.display(),
        listener.local_addr()?
    );
    serve_on(listener, resolver, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
