//! Text checkpoint of controller weights.
//!
//! ```text
//! graphnas-controller 1
//! tensor <name> <rows> <cols>
//! <rows·cols whitespace-separated values, row-major>
//! ...
//! end
//! ```
//!
//! Tensors appear in the controller's parameter order. Values are written
//! with shortest round-trip formatting, so save/load is exact for `f64`.

use std::fmt::Write as _;

use super::Controller;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &str = "graphnas-controller";
pub const VERSION: u32 = 1;

impl<T: Scalar> Controller<T> {
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        for (name, t) in self.names.iter().zip(&self.params) {
            writeln!(out, "tensor {name} {} {}", t.rows(), t.cols()).expect("write to string");
            let vals: Vec<String> = t.data().iter().map(|v| v.as_f64().to_string()).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    /// Replaces the weights with those in `text`. Names and shapes must
    /// match this controller's layout exactly.
    pub fn load_checkpoint(&mut self, text: &str) -> Result<()> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = text.lines();
        match lines.next().map(|l| l.split_whitespace().collect::<Vec<_>>()) {
            Some(h) if h.len() == 2 && h[0] == MAGIC => {
                let v: u32 = h[1].parse().map_err(|_| bad(format!("bad version `{}`", h[1])))?;
                if v != VERSION {
                    return Err(bad(format!("unsupported version {v}, expected {VERSION}")));
                }
            }
            other => return Err(bad(format!("missing `{MAGIC}` header, found {other:?}"))),
        }
        let mut loaded = Vec::with_capacity(self.params.len());
        for (name, current) in self.names.iter().zip(&self.params) {
            let head: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
            if head.len() != 4 || head[0] != "tensor" {
                return Err(bad(format!("expected `tensor {name} ..`, found {head:?}")));
            }
            if head[1] != name {
                return Err(bad(format!("expected tensor `{name}`, found `{}`", head[1])));
            }
            let dims: Vec<usize> = head[2..]
                .iter()
                .map(|d| d.parse().map_err(|_| bad(format!("tensor `{name}`: bad dimension `{d}`"))))
                .collect::<Result<_>>()?;
            if dims != current.shape() {
                return Err(bad(format!("tensor `{name}`: shape {dims:?}, controller has {:?}", current.shape())));
            }
            let values: Vec<T> = lines
                .next()
                .unwrap_or("")
                .split_whitespace()
                .map(|v| v.parse::<f64>().map(T::lit).map_err(|_| bad(format!("tensor `{name}`: bad value `{v}`"))))
                .collect::<Result<_>>()?;
            if values.len() != current.numel() {
                return Err(bad(format!("tensor `{name}`: {} values for {} entries", values.len(), current.numel())));
            }
            loaded.push(Tensor::new(dims, values)?);
        }
        if lines.next().map(str::trim) != Some("end") {
            return Err(bad("missing `end` marker".into()));
        }
        self.params = loaded;
        Ok(())
    }
}
