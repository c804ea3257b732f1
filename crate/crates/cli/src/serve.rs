use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use vqlens_study::{Study, StudyConfig};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub listen: String,
    pub study: StudyConfig,
    pub static_dir: Option<PathBuf>,
}

/// Runs the study service until Ctrl-C. Prints `listening on http://<addr>`
/// once the socket is bound, which matters when the port is 0.
pub fn serve_study(opts: ServeOptions) -> Result<(), CliError> {
    let study = Arc::new(Study::open(&opts.study)?);
    let addr: SocketAddr = opts
        .listen
        .parse()
        .map_err(|_| CliError::Config(format!("bad listen address {:?}", opts.listen)))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let bound = listener.local_addr()?;
        {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "listening on http://{bound}")?;
            stdout.flush()?;
        }
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        vqlens_study::serve(listener, study, opts.static_dir, shutdown).await?;
        Ok(())
    })
}
