//! Line-oriented TCP front end for [`Session`]; one thread per connection.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use super::session::{Session, SessionContext};
use crate::error::{Error, Result};

/// Serves one connection until the peer closes it. The scene greeting is
/// sent first; every received line is answered with zero or more lines.
pub fn handle_connection(stream: TcpStream, ctx: Arc<SessionContext>) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    let mut session = Session::new(ctx);
    writeln!(writer, "{}", session.greeting().to_line())?;
    writer.flush()?;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut buf = String::new();
        for msg in session.handle_line(&line) {
            buf.push_str(&msg.to_line());
            buf.push('\n');
        }
        writer.write_all(buf.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

/// Accepts connections forever, each handled on its own thread.
pub fn serve(listener: TcpListener, ctx: Arc<SessionContext>) -> Result<()> {
    let addr = listener.local_addr().map_err(|e| Error::io("listener", e))?;
    log::info!("serving sessions on {addr}");
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let ctx = Arc::clone(&ctx);
        thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            if let Err(e) = handle_connection(stream, ctx) {
                log::warn!("session {peer} ended: {e}");
            }
        });
    }
    Ok(())
}

/// Binds `addr` and serves on a background thread. Returns the bound
/// address (useful with port 0).
pub fn spawn(addr: &str, ctx: Arc<SessionContext>) -> Result<std::net::SocketAddr> {
    let listener = TcpListener::bind(addr).map_err(|e| Error::io(addr, e))?;
    let local = listener.local_addr().map_err(|e| Error::io(addr, e))?;
    thread::spawn(move || serve(listener, ctx));
    Ok(local)
}
