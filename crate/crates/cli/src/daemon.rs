// Marker intake over a local stream socket: one JSON message per line in,
// one ack per line out. Every connection shares the run's ledger; the
// ledger mutex is the single writer.

use std::io::{self, BufRead, BufReader, Write};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, warn};

use carbonledger::protocol::{MarkerSession, SessionEvent};
use carbonledger::{EnergyLedger, SampleLog};

pub struct MarkerDaemon {
    path: PathBuf,
    shutdown: Arc<AtomicBool>,
    accept_loop: Option<JoinHandle<()>>,
}

impl MarkerDaemon {
    /// Binds `path` and serves until [`MarkerDaemon::shutdown`]. A `stop`
    /// message from any client is forwarded on `stopped`.
    pub fn spawn(
        path: &Path,
        ledger: Arc<Mutex<EnergyLedger>>,
        samples: SampleLog,
        stopped: Sender<()>,
    ) -> io::Result<Self> {
        if path.exists() {
            // Only replace a stale socket, never a regular file.
            if UnixStream::connect(path).is_ok() {
                return Err(io::Error::new(
                    io::ErrorKind::AddrInUse,
                    format!("{} is already being served", path.display()),
                ));
            }
            std::fs::remove_file(path)?;
        }
        let listener = UnixListener::bind(path)?;
        listener.set_nonblocking(true)?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = shutdown.clone();
        let accept_loop = thread::spawn(move || {
            while !flag.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let ledger = ledger.clone();
                        let samples = samples.clone();
                        let stopped = stopped.clone();
                        thread::spawn(move || {
                            if let Err(e) = serve(stream, ledger, samples, stopped) {
                                debug!("marker connection closed: {e}");
                            }
                        });
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(10));
                    }
                    Err(e) => {
                        warn!("marker socket accept failed: {e}");
                        thread::sleep(Duration::from_millis(50));
                    }
                }
            }
        });
        Ok(Self {
            path: path.to_path_buf(),
            shutdown,
            accept_loop: Some(accept_loop),
        })
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.accept_loop.take() {
            let _ = handle.join();
        }
        let _ = std::fs::remove_file(&self.path);
    }
}

impl Drop for MarkerDaemon {
    fn drop(&mut self) {
        self.stop();
    }
}

fn serve(
    stream: UnixStream,
    ledger: Arc<Mutex<EnergyLedger>>,
    samples: SampleLog,
    stopped: Sender<()>,
) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    let mut session = MarkerSession::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (ack, event) = {
            let mut ledger = ledger.lock().unwrap_or_else(|e| e.into_inner());
            session.handle_line(&line, &mut ledger, || samples.snapshot())
        };
        writer.write_all(ack.to_line().as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if event == SessionEvent::Stop {
            let _ = stopped.send(());
        }
    }
    Ok(())
}
