//! Flows evaluated outside this crate.
//!
//! Subprocess protocol: the child reads one JSON object per line on stdin and
//! answers with one JSON object per line on stdout, in request order.
//!
//! | request                     | response                               |
//! |-----------------------------|----------------------------------------|
//! | `{"x": [..], "y": [..]}`    | `{"z": [..], "inverse_log_det": v}`    |
//! | `{"x": [..], "z": [..]}`    | `{"y": [..]}`                          |
//!
//! Any response carrying an `"error"` string fails the call.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::ConditionalFlow;
use crate::error::{Error, Result};
use crate::norm_laws::Latent;
use crate::scalar::Real;

fn key<T: Real>(a: &[T], b: &[T]) -> Vec<u64> {
    a.iter().chain(b).map(|v| v.to_f64_lossy().to_bits()).collect()
}

/// Flow known only at a finite set of precomputed evaluations.
///
/// Lookups are exact on the bit patterns of the inputs; anything else is an error.
#[derive(Debug, Clone)]
pub struct TabulatedFlow<T: Real> {
    dim: usize,
    latent: Latent,
    inverse: HashMap<Vec<u64>, (Vec<T>, T)>,
    forward: HashMap<Vec<u64>, Vec<T>>,
    name: String,
}

impl<T: Real> TabulatedFlow<T> {
    pub fn new(dim: usize, latent: Latent, name: impl Into<String>) -> Self {
        Self {
            dim,
            latent,
            inverse: HashMap::new(),
            forward: HashMap::new(),
            name: name.into(),
        }
    }

    /// Records `T^{-1}(y; x) = z` with its log-determinant; also usable forward.
    pub fn insert(&mut self, x: &[T], y: &[T], z: &[T], inverse_log_det: T) {
        self.inverse.insert(key(x, y), (z.to_vec(), inverse_log_det));
        self.forward.insert(key(x, z), y.to_vec());
    }

    pub fn len(&self) -> usize {
        self.inverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inverse.is_empty()
    }
}

impl<T: Real> ConditionalFlow<T> for TabulatedFlow<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn latent(&self) -> Latent {
        self.latent
    }

    fn forward(&self, z: &[T], x: &[T]) -> Result<Vec<T>> {
        self.forward
            .get(&key(x, z))
            .cloned()
            .ok_or_else(|| Error::Unsupported("forward pass at an untabulated latent".into()))
    }

    fn inverse(&self, y: &[T], x: &[T]) -> Result<(Vec<T>, T)> {
        self.inverse
            .get(&key(x, y))
            .cloned()
            .ok_or_else(|| Error::Flow("no tabulated evaluation for this (x, y)".into()))
    }

    fn id(&self) -> String {
        self.name.clone()
    }
}

#[derive(Serialize)]
struct InverseRequest<'a, T> {
    x: &'a [T],
    y: &'a [T],
}

#[derive(Serialize)]
struct ForwardRequest<'a, T> {
    x: &'a [T],
    z: &'a [T],
}

#[derive(Deserialize)]
#[serde(bound = "T: Real")]
struct Response<T> {
    #[serde(default)]
    z: Option<Vec<T>>,
    #[serde(default)]
    y: Option<Vec<T>>,
    #[serde(default)]
    inverse_log_det: Option<T>,
    #[serde(default)]
    error: Option<String>,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Flow served by a child process speaking the line protocol above.
pub struct SubprocessFlow {
    dim: usize,
    latent: Latent,
    command: String,
    pipe: Mutex<Pipe>,
}

impl SubprocessFlow {
    pub fn spawn(program: &str, args: &[String], dim: usize, latent: Latent) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().ok_or_else(|| Error::Flow("child has no stdin".into()))?;
        let stdout = BufReader::new(child.stdout.take().ok_or_else(|| Error::Flow("child has no stdout".into()))?);
        Ok(Self {
            dim,
            latent,
            command: std::iter::once(program)
                .chain(args.iter().map(String::as_str))
                .collect::<Vec<_>>()
                .join(" "),
            pipe: Mutex::new(Pipe { child, stdin, stdout }),
        })
    }

    fn call<T: Real, Q: Serialize>(&self, request: &Q) -> Result<Response<T>> {
        let mut pipe = self.pipe.lock().map_err(|_| Error::Flow("subprocess lock poisoned".into()))?;
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        pipe.stdin.write_all(line.as_bytes())?;
        pipe.stdin.flush()?;
        let mut reply = String::new();
        if pipe.stdout.read_line(&mut reply)? == 0 {
            return Err(Error::Flow(format!("`{}` closed its output", self.command)));
        }
        let resp: Response<T> = serde_json::from_str(&reply)?;
        if let Some(e) = resp.error {
            return Err(Error::Flow(format!("`{}`: {e}", self.command)));
        }
        Ok(resp)
    }
}

impl Drop for SubprocessFlow {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}

impl<T: Real> ConditionalFlow<T> for SubprocessFlow {
    fn dim(&self) -> usize {
        self.dim
    }

    fn latent(&self) -> Latent {
        self.latent
    }

    fn forward(&self, z: &[T], x: &[T]) -> Result<Vec<T>> {
        let resp: Response<T> = self.call::<T, _>(&ForwardRequest { x, z })?;
        let y = resp.y.ok_or_else(|| Error::Flow("forward response without `y`".into()))?;
        if y.len() != self.dim {
            return Err(Error::Flow(format!("forward returned {} values, expected {}", y.len(), self.dim)));
        }
        Ok(y)
    }

    fn inverse(&self, y: &[T], x: &[T]) -> Result<(Vec<T>, T)> {
        let resp: Response<T> = self.call::<T, _>(&InverseRequest { x, y })?;
        match (resp.z, resp.inverse_log_det) {
            (Some(z), Some(ild)) if z.len() == self.dim => Ok((z, ild)),
            _ => Err(Error::Flow(
                "inverse response needs `z` of the flow dimension and `inverse_log_det`".into(),
            )),
        }
    }

    fn id(&self) -> String {
        format!("subprocess:{}", self.command)
    }
}
