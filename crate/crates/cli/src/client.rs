//! Blocking protocol client used by the networked subcommands.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use rigserve_core::protocol::{Command, Request, Response, ServerMessage};

use crate::CliError;

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
}

impl Client {
    pub fn connect(addr: &str) -> Result<Self, CliError> {
        let conn = |e: std::io::Error| CliError::Connect(format!("{addr}: {e}"));
        let sock = addr
            .to_socket_addrs()
            .map_err(conn)?
            .next()
            .ok_or_else(|| CliError::Connect(format!("{addr}: no address")))?;
        let stream = TcpStream::connect_timeout(&sock, Duration::from_secs(3)).map_err(conn)?;
        stream.set_nodelay(true).map_err(conn)?;
        let writer = stream.try_clone().map_err(conn)?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
            next_id: 1,
        })
    }

    /// Sends one command and waits for its response, skipping frames.
    pub fn call(&mut self, command: Command) -> Result<Response, CliError> {
        let id = self.next_id;
        self.next_id += 1;
        self.send(&Request::new(id, command))?;
        loop {
            match self.read()? {
                ServerMessage::Response(r) if r.id == Some(id) => return Ok(r),
                ServerMessage::Goodbye { reason } => {
                    return Err(CliError::Connect(format!("server said goodbye: {reason}")))
                }
                _ => continue,
            }
        }
    }

    pub fn send(&mut self, req: &Request) -> Result<(), CliError> {
        let line = req.to_line() + "\n";
        self.writer
            .write_all(line.as_bytes())
            .map_err(|e| CliError::Connect(e.to_string()))
    }

    pub fn read(&mut self) -> Result<ServerMessage, CliError> {
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|e| CliError::Connect(e.to_string()))?;
        if n == 0 {
            return Err(CliError::Connect("server closed the connection".into()));
        }
        ServerMessage::from_line(line.trim_end())
            .map_err(|e| CliError::Connect(format!("unreadable server message: {e}")))
    }
}
