//! TCP front end for the protocol: one thread and one environment per
//! connection.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use netsim_core::optimize::EnvConfig;
use netsim_core::scenario::Scenario;

use crate::protocol::{code, Message, Session};

/// Runs one conversation until `close` or EOF. Each response is written as
/// one complete line with a single write.
pub fn handle<R: BufRead, W: Write>(mut reader: R, mut writer: W, mut session: Session) -> std::io::Result<()> {
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        let (reply, close) = match std::str::from_utf8(&buf) {
            Ok(line) if line.trim().is_empty() => continue,
            Ok(line) => session.handle_line(line.trim_end_matches(['\r', '\n'])),
            Err(e) => (Message::error(code::PARSE, format!("line is not UTF-8: {e}")), false),
        };
        let mut out = reply.to_line();
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
        if close {
            return Ok(());
        }
    }
}

fn connection(stream: TcpStream, scenario: Scenario, cfg: EnvConfig) -> std::io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    handle(reader, stream, Session::new(scenario, cfg))
}

/// Accepts connections forever.
pub fn serve(listener: TcpListener, scenario: Scenario, cfg: EnvConfig) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let scn = scenario.clone();
        thread::spawn(move || {
            // a failed socket only ends its own connection
            let _ = connection(stream, scn, cfg);
        });
    }
    Ok(())
}
