//! Runs the background-removal service.
//!
//! ```text
//! cargo run -p basnet-service --example serve -- service.json
//! cargo run -p basnet-service --example serve -- --demo
//! ```
//!
//! `--demo` writes a small randomly initialised checkpoint to a temporary
//! directory and serves that, which is enough to exercise the API:
//!
//! ```text
//! curl -s -X POST -H 'Content-Type: image/png' --data-binary @photo.png \
//!     'http://127.0.0.1:8080/v1/remove' -o cutout.png
//! curl -s -X POST -H 'Content-Type: application/json' \
//!     -d '{"image_url": "https://example.com/photo.jpg"}' \
//!     'http://127.0.0.1:8080/v1/remove?response_mode=stored_url'
//! curl -s http://127.0.0.1:8080/v1/health
//! ```

use basnet::model::{BasNet, ModelConfig};
use basnet_service::{Server, ServiceConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let arg = std::env::args().nth(1);
    let _scratch;
    let config = match arg.as_deref() {
        Some("--demo") => {
            let dir = tempfile::tempdir()?;
            let ck = dir.path().join("demo");
            BasNet::new(&ModelConfig::default().with_width_divisor(16), 0)?.save(&ck)?;
            let cfg = ServiceConfig {
                model_path: ck,
                storage_root: dir.path().join("storage"),
                input_size: 128,
                ..ServiceConfig::default()
            };
            _scratch = dir;
            cfg
        }
        Some(path) => ServiceConfig::from_file(path.as_ref())?,
        None => ServiceConfig::default(),
    };
    let server = Server::bind(config).await?;
    println!("serving on http://{}", server.addr);
    server.run().await?;
    Ok(())
}
