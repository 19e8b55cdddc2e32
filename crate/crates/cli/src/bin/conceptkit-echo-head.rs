//! Reference adapter for the external head protocol: serves the affine head
//! `x W + b` read from NPY files. Fault flags make it misbehave on purpose so
//! the client's error handling can be exercised.

use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::Deserialize;
use serde_json::json;

use conceptkit::io::{read_matrix, read_vector};
use conceptkit::Matrix;

#[derive(Parser)]
#[command(about = "Affine head adapter speaking the conceptkit head protocol")]
struct Args {
    /// Weight matrix, inputs × classes.
    #[arg(long)]
    weights: PathBuf,
    /// Bias vector, one entry per class.
    #[arg(long)]
    bias: PathBuf,
    /// Answer every request with an id that was never sent.
    #[arg(long)]
    wrong_id: bool,
    /// Hold each even-numbered request and answer it after the next one.
    #[arg(long)]
    swap_pairs: bool,
    /// Reply to the first request with a line that is not JSON.
    #[arg(long)]
    garbage: bool,
    /// Read requests but never answer them.
    #[arg(long)]
    hang: bool,
    /// Advertise one input more than the weights have.
    #[arg(long)]
    bad_hello_dim: bool,
    /// Answer every request with a protocol error message.
    #[arg(long)]
    error_reply: bool,
}

#[derive(Deserialize)]
struct Request {
    #[serde(rename = "type")]
    kind: String,
    id: u64,
    activations: Vec<Vec<f64>>,
}

fn logits(w: &Matrix<f64>, b: &[f64], activations: &[Vec<f64>]) -> Vec<Vec<f64>> {
    activations
        .iter()
        .map(|x| {
            (0..w.cols())
                .map(|c| x.iter().enumerate().map(|(i, &v)| v * w[(i, c)]).sum::<f64>() + b[c])
                .collect()
        })
        .collect()
}

fn run(args: &Args) -> Result<(), String> {
    let w: Matrix<f64> = read_matrix(&args.weights).map_err(|e| e.to_string())?;
    let b: Vec<f64> = read_vector(&args.bias).map_err(|e| e.to_string())?;
    if b.len() != w.cols() {
        return Err(format!("bias has {} entries, weights {} classes", b.len(), w.cols()));
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut send = |value: serde_json::Value| -> Result<(), String> {
        writeln!(out, "{value}").and_then(|_| out.flush()).map_err(|e| e.to_string())
    };
    let p = w.rows() + usize::from(args.bad_hello_dim);
    send(json!({"type": "hello", "p": p, "c": w.cols()}))?;

    let mut held: Option<serde_json::Value> = None;
    let mut first = true;
    for line in io::stdin().lock().lines() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                send(json!({"type": "error", "id": null, "message": format!("malformed request: {e}")}))?;
                continue;
            }
        };
        if request.kind != "eval" {
            send(json!({"type": "error", "id": request.id, "message": "unknown request type"}))?;
            continue;
        }
        if args.hang {
            continue;
        }
        if args.garbage && first {
            first = false;
            writeln!(io::stdout(), "this is not json").map_err(|e| e.to_string())?;
            io::stdout().flush().map_err(|e| e.to_string())?;
            continue;
        }
        first = false;
        if args.error_reply {
            send(json!({"type": "error", "id": request.id, "message": "refusing on purpose"}))?;
            continue;
        }
        if request.activations.iter().any(|r| r.len() != w.rows()) {
            send(json!({"type": "error", "id": request.id, "message": "activation row has the wrong length"}))?;
            continue;
        }
        let id = if args.wrong_id { request.id + 1_000_000 } else { request.id };
        let reply = json!({"type": "result", "id": id, "logits": logits(&w, &b, &request.activations)});
        if args.swap_pairs {
            match held.take() {
                None => held = Some(reply),
                Some(earlier) => {
                    send(reply)?;
                    send(earlier)?;
                }
            }
        } else {
            send(reply)?;
        }
    }
    if let Some(earlier) = held {
        send(earlier)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
