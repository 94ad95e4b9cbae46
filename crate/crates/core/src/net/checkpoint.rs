//! Plain-text network checkpoints.
//!
//! ```text
//! AMRPG-NET 1
//! input_dim <n>
//! head gaussian|categorical
//! memory_steps <k>
//! recurrent_layers <r>
//! start_state none|<k>
//! layer <in> <out> <activation> <bias 0|1>      (one line per layer)
//! params <count>
//! matrix <rows> <cols>
//! <row values separated by spaces>              (one line per row)
//! end
//! ```
//!
//! Values are written in `{:e}` form, which round-trips `f64` exactly.

use std::io::{BufRead, Write};

use super::{HeadKind, LayerSpec, PolicyNet};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CHECKPOINT_MAGIC: &str = "AMRPG-NET 1";

pub fn write_checkpoint<W: Write>(net: &PolicyNet, mut w: W) -> Result<()> {
    writeln!(w, "{CHECKPOINT_MAGIC}")?;
    writeln!(w, "input_dim {}", net.input_dim())?;
    let head = match net.head_kind() {
        HeadKind::Gaussian => "gaussian",
        HeadKind::Categorical => "categorical",
    };
    writeln!(w, "head {head}")?;
    writeln!(w, "memory_steps {}", net.memory_steps())?;
    writeln!(w, "recurrent_layers {}", net.n_recurrent())?;
    match net.start_state() {
        Some(k) => writeln!(w, "start_state {k}")?,
        None => writeln!(w, "start_state none")?,
    }
    for l in net.layers() {
        writeln!(
            w,
            "layer {} {} {} {}",
            l.input_dim,
            l.output_dim,
            l.activation,
            u8::from(l.bias)
        )?;
    }
    writeln!(w, "params {}", net.params().len())?;
    for p in net.params() {
        writeln!(w, "matrix {} {}", p.rows(), p.cols())?;
        for r in p.row_iter() {
            let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
    }
    writeln!(w, "end")?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of checkpoint")),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    /// Reads `key value...` and returns the value tokens.
    fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let l = self.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`, found `{l}`")));
        }
        Ok(it.map(str::to_owned).collect())
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let v = self.keyed(key)?;
        match v.as_slice() {
            [x] => x.parse().map_err(|_| self.err(format!("bad integer `{x}`"))),
            _ => Err(self.err(format!("`{key}` takes one value"))),
        }
    }
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<PolicyNet> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let magic = lines.next()?;
    if magic.trim() != CHECKPOINT_MAGIC {
        return Err(lines.err(format!("bad magic `{magic}`")));
    }
    let input_dim = lines.keyed_usize("input_dim")?;
    let head = match lines.keyed("head")?.as_slice() {
        [h] if h == "gaussian" => HeadKind::Gaussian,
        [h] if h == "categorical" => HeadKind::Categorical,
        other => return Err(lines.err(format!("bad head {other:?}"))),
    };
    let memory_steps = lines.keyed_usize("memory_steps")?;
    let n_recurrent = lines.keyed_usize("recurrent_layers")?;
    let start_state = match lines.keyed("start_state")?.as_slice() {
        [s] if s == "none" => None,
        [s] => Some(s.parse::<usize>().map_err(|_| lines.err(format!("bad start state `{s}`")))?),
        _ => return Err(lines.err("`start_state` takes one value")),
    };

    let mut layers = Vec::new();
    let n_params = loop {
        let l = lines.next()?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["layer", i, o, act, bias] => {
                let parse = |s: &str| s.parse::<usize>().map_err(|_| lines.err(format!("bad dim `{s}`")));
                layers.push(LayerSpec {
                    input_dim: parse(i)?,
                    output_dim: parse(o)?,
                    activation: act.parse().map_err(|e: Error| lines.err(e.to_string()))?,
                    bias: *bias == "1",
                });
            }
            ["params", n] => break n.parse::<usize>().map_err(|_| lines.err("bad param count"))?,
            _ => return Err(lines.err(format!("unexpected `{l}`"))),
        }
    };

    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let dims = lines.keyed("matrix")?;
        let (rows, cols) = match dims.as_slice() {
            [r, c] => (
                r.parse::<usize>().map_err(|_| lines.err("bad rows"))?,
                c.parse::<usize>().map_err(|_| lines.err("bad cols"))?,
            ),
            _ => return Err(lines.err("`matrix` takes rows and cols")),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = lines.next()?;
            let before = data.len();
            for tok in l.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|_| lines.err(format!("bad number `{tok}`")))?,
                );
            }
            if data.len() - before != cols {
                return Err(lines.err(format!("expected {cols} values")));
            }
        }
        params.push(Matrix::from_vec(rows, cols, data)?);
    }
    if lines.next()?.trim() != "end" {
        return Err(lines.err("missing `end`"));
    }

    let shell = PolicyNet::zeros(input_dim, layers.clone(), n_recurrent, head, memory_steps)?
        .with_start_state(start_state)?;
    shell.with_layers_and_params(layers, params)
}
