use std::io::{BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::imaging::Image;

use super::providers::{DenoiseRequest, Denoiser, DepthProvider, DepthRequest};
use super::wire::{read_frame, write_frame, Frame};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

struct Running {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    replies: Receiver<Result<Frame>>,
}

/// A model served by a child process over stdin/stdout frames.
///
/// A denoise request is three frames (noised image, `[t, ᾱ]`, conditioning
/// bytes) and a depth request is one frame (RGB image); either expects one
/// frame back. The child is started on first use and restarted after a
/// failure.
pub struct SubprocessProvider {
    argv: Vec<String>,
    pub timeout: Duration,
    running: Option<Running>,
}

impl SubprocessProvider {
    pub fn new(program: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut argv = vec![program.into()];
        argv.extend(args.into_iter().map(Into::into));
        Self {
            argv,
            timeout: DEFAULT_TIMEOUT,
            running: None,
        }
    }

    /// Whitespace-separated program and arguments; no shell quoting.
    pub fn from_command_line(cmd: &str) -> Result<Self> {
        let mut parts = cmd.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty subprocess command".into()))?;
        Ok(Self::new(program, parts))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn spawn(&self) -> Result<Running> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::PriorUnavailable(format!("cannot start {:?}: {e}", self.argv[0])))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped"));
        let stdout = child.stdout.take().expect("piped");
        let (tx, replies) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let msg = match read_frame(&mut reader) {
                    Ok(Some(f)) => Ok(f),
                    Ok(None) => Err(Error::PriorUnavailable("provider process closed its output".into())),
                    Err(e) => Err(e),
                };
                let stop = msg.is_err();
                if tx.send(msg).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Running { child, stdin, replies })
    }

    fn shutdown(&mut self) {
        if let Some(mut r) = self.running.take() {
            let _ = r.child.kill();
            let _ = r.child.wait();
        }
    }

    /// Sends `frames` as one request and returns the single reply frame.
    pub fn roundtrip(&mut self, frames: &[Frame]) -> Result<Frame> {
        if self.running.is_none() {
            self.running = Some(self.spawn()?);
        }
        let running = self.running.as_mut().expect("spawned above");
        let sent = frames
            .iter()
            .try_for_each(|f| write_frame(&mut running.stdin, f))
            .and_then(|_| running.stdin.flush());
        if let Err(e) = sent {
            self.shutdown();
            return Err(Error::PriorUnavailable(format!("writing request failed: {e}")));
        }
        let reply = match running.replies.recv_timeout(self.timeout) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => Err(Error::ProviderTimeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(Error::PriorUnavailable("provider reader stopped".into())),
        };
        if reply.is_err() {
            self.shutdown();
        }
        reply
    }
}

impl Drop for SubprocessProvider {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl Denoiser for SubprocessProvider {
    fn kind(&self) -> &'static str {
        "subprocess"
    }

    fn predict(&mut self, req: &DenoiseRequest<'_>) -> Result<Image<f64>> {
        let frames = [
            Frame::from_image(&req.noised.cast()),
            Frame::from_floats(&[req.t as f32, req.alpha_bar as f32]),
            Frame::from_bytes(req.conditioning),
        ];
        let out = self.roundtrip(&frames)?.into_image()?;
        if !out.same_shape(req.noised) {
            return Err(Error::MalformedFrame(format!(
                "denoiser replied {}x{}x{}, expected {}x{}x{}",
                out.width, out.height, out.channels, req.noised.width, req.noised.height, req.noised.channels
            )));
        }
        Ok(out.cast())
    }
}

impl DepthProvider for SubprocessProvider {
    fn kind(&self) -> &'static str {
        "subprocess"
    }

    fn predict(&mut self, req: &DepthRequest<'_>) -> Result<Image<f32>> {
        let out = self.roundtrip(&[Frame::from_image(req.image)])?.into_image()?;
        if (out.width, out.height, out.channels) != (req.image.width, req.image.height, 1) {
            return Err(Error::MalformedFrame(format!(
                "depth provider replied {}x{}x{}, expected {}x{}x1",
                out.width, out.height, out.channels, req.image.width, req.image.height
            )));
        }
        Ok(out)
    }
}
