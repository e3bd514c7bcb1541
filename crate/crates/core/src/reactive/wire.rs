//! Line-based wire mode: update blocks in, `Answer:` lines out.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;

use thiserror::Error;

use super::online::parse_online;
use super::server::{render_answer, ReactiveServer};

#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
}

const STOP: &str = "#stop.";

/// Serves one client on `endpoint`: either `stdio` or a `host:port` to
/// listen on.
pub fn serve(endpoint: &str, server: &mut ReactiveServer) -> Result<(), WireError> {
    if endpoint == "stdio" {
        let stdin = io::stdin();
        let stdout = io::stdout();
        return serve_stream(server, stdin.lock(), stdout.lock());
    }
    let listener = TcpListener::bind(endpoint)?;
    let (stream, _) = listener.accept()?;
    let reader = BufReader::new(stream.try_clone()?);
    serve_stream(server, reader, stream)
}

/// Reads update blocks from `input` and writes one `Answer:` line per
/// block. Stops at `#stop.` or end of input. Any error is reported as an
/// `Error:` line, after which the session ends.
pub fn serve_stream<R: BufRead, W: Write>(
    server: &mut ReactiveServer,
    input: R,
    mut output: W,
) -> Result<(), WireError> {
    let mut block = String::new();
    for line in input.lines() {
        let line = line?;
        let trimmed = line.trim();
        if block.is_empty() && trimmed == STOP {
            return Ok(());
        }
        if block.is_empty() && (trimmed.is_empty() || trimmed.starts_with('%')) {
            continue;
        }
        block.push_str(&line);
        block.push('\n');
        if !trimmed.ends_with("#endstep.") {
            continue;
        }
        let reply = parse_online(&block)
            .map_err(|e| e.to_string())
            .and_then(|u| server.feed(&u).map_err(|e| e.to_string()))
            .and_then(|_| server.get_answer().map_err(|e| e.to_string()));
        block.clear();
        match reply {
            Ok(answer) => {
                writeln!(output, "{}", render_answer(&answer.model))?;
                output.flush()?;
            }
            Err(msg) => {
                writeln!(output, "Error: {msg}")?;
                output.flush()?;
                return Err(WireError::Protocol(msg));
            }
        }
    }
    if block.trim().is_empty() {
        Ok(())
    } else {
        let msg = "input ended inside an update block".to_string();
        writeln!(output, "Error: {msg}")?;
        Err(WireError::Protocol(msg))
    }
}
