//! Process-level launchers for microbenchmark instances and service versions.

use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use crate::faults::IssueConfig;
use crate::jsonl;
use crate::micro::{InstanceJob, InstanceLauncher, LaunchError, MeasurementSample};
use crate::service::dataset::DatasetConfig;
use crate::service::http_server::BackgroundServer;
use crate::service::BookingService;

/// Line a `serve` process prints once it accepts connections.
pub const LISTENING_PREFIX: &str = "listening on ";

/// Runs each instance run in a fresh `perflab micro-instance` process.
pub struct SubprocessLauncher {
    pub exe: PathBuf,
    pub work_dir: PathBuf,
}

impl InstanceLauncher for SubprocessLauncher {
    fn launch(&self, job: &InstanceJob) -> Result<Vec<MeasurementSample>, LaunchError> {
        std::fs::create_dir_all(&self.work_dir)?;
        let job_path = self.work_dir.join(format!("instance-{}.job.json", job.instance_run));
        let out_path = self.work_dir.join(format!("instance-{}.samples.jsonl", job.instance_run));
        std::fs::write(&job_path, serde_json::to_vec_pretty(job)?)?;
        let status = Command::new(&self.exe)
            .arg("micro-instance")
            .arg("--job")
            .arg(&job_path)
            .arg("--out")
            .arg(&out_path)
            .stdin(Stdio::null())
            .status()?;
        if !status.success() {
            return Err(LaunchError::Process(format!("micro-instance exited with {status}")));
        }
        Ok(jsonl::read(&out_path)?)
    }
}

/// Entry point of the `micro-instance` subcommand.
pub fn run_instance_job(job_path: &Path, out_path: &Path) -> Result<usize, LaunchError> {
    let job: InstanceJob = serde_json::from_slice(&std::fs::read(job_path)?)?;
    let samples = crate::micro::InProcessLauncher::new().launch(&job)?;
    jsonl::write(out_path, &samples)?;
    Ok(samples.len())
}

/// A running service version; stopped on drop.
pub trait ServiceHandle: Send {
    fn addr(&self) -> SocketAddr;
}

pub trait ServiceLauncher {
    fn start(&self, issue: IssueConfig, dataset: &DatasetConfig) -> std::io::Result<Box<dyn ServiceHandle>>;
}

pub struct InProcessServices;

impl ServiceHandle for BackgroundServer {
    fn addr(&self) -> SocketAddr {
        BackgroundServer::addr(self)
    }
}

impl ServiceLauncher for InProcessServices {
    fn start(&self, issue: IssueConfig, dataset: &DatasetConfig) -> std::io::Result<Box<dyn ServiceHandle>> {
        let svc = BookingService::from_dataset(dataset, issue).map_err(std::io::Error::other)?;
        Ok(Box::new(BackgroundServer::start(Arc::new(svc), 0)?))
    }
}

/// Starts `perflab serve` child processes on ephemeral ports.
pub struct SubprocessServices {
    pub exe: PathBuf,
}

struct ChildService {
    child: Child,
    addr: SocketAddr,
}

impl ServiceHandle for ChildService {
    fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for ChildService {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl ServiceLauncher for SubprocessServices {
    fn start(&self, issue: IssueConfig, dataset: &DatasetConfig) -> std::io::Result<Box<dyn ServiceHandle>> {
        let mut child = Command::new(&self.exe)
            .arg("serve")
            .args(["--port", "0"])
            .args(["--issue", issue.kind.as_str()])
            .args(["--severity", &issue.severity.to_string()])
            .args(["--airports", &dataset.airport_count.to_string()])
            .args(["--flights", &dataset.flight_count.to_string()])
            .args(["--seats", &dataset.seats_per_flight.to_string()])
            .args(["--users", &dataset.user_count.to_string()])
            .args(["--dataset-seed", &dataset.rng_seed.to_string()])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdout = child.stdout.take().expect("piped stdout");
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line)?;
        let addr = line
            .trim()
            .strip_prefix(LISTENING_PREFIX)
            .and_then(|a| a.parse().ok());
        match addr {
            Some(addr) => Ok(Box::new(ChildService { child, addr })),
            None => {
                let _ = child.kill();
                let _ = child.wait();
                Err(std::io::Error::other(format!("service did not report its address: {line:?}")))
            }
        }
    }
}
