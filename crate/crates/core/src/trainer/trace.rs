use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::diffcore::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Generator iteration (1-based).
    pub iteration: usize,
    /// Last discriminator step of the iteration.
    pub real_term: f64,
    pub fake_term: f64,
    pub disc_loss: f64,
    /// Fake term seen by the generator step.
    pub gen_fake_term: f64,
    pub entropy_beta: f64,
    pub entropy_gamma: f64,
    pub disc_grad_norm: f64,
    pub gen_grad_norm: f64,
    pub gp: f64,
    /// Set when a snapshot was taken at this iteration.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snapshot: Option<usize>,
}

impl TraceRow {
    /// Name of the first non-finite field, if any.
    pub fn non_finite_field(&self) -> Option<&'static str> {
        [
            ("real_term", self.real_term),
            ("fake_term", self.fake_term),
            ("disc_loss", self.disc_loss),
            ("gen_fake_term", self.gen_fake_term),
            ("entropy_beta", self.entropy_beta),
            ("entropy_gamma", self.entropy_gamma),
            ("disc_grad_norm", self.disc_grad_norm),
            ("gen_grad_norm", self.gen_grad_norm),
            ("gp", self.gp),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(k, _)| k)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainingTrace {
    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.rows {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Generated samples at one generator iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub samples: Matrix,
}

impl Snapshot {
    /// CSV point cloud; columns `x,y` in 2D and `x0,x1,…` otherwise.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.samples.cols();
        let header: Vec<String> = if d == 2 {
            vec!["x".into(), "y".into()]
        } else {
            (0..d).map(|j| format!("x{j}")).collect()
        };
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.samples.rows() {
            let row: Vec<String> = self.samples.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
