//! Text checkpoint of [`NetworkParams`].
//!
//! ```text
//! stablesgd-checkpoint 1
//! n 3
//! d 2
//! l 2
//! mode trainable
//! activation relu
//! bias true
//! columns
//! <w_1> ... <w_d> [<b>] [<c_1> ... <c_l>]     (one line per unit)
//! ```
//!
//! The matrix is stored column-major with one parameter column per line,
//! whitespace separated. Values are written in shortest round-trip decimal
//! form, so save/load is lossless. `b` is present only when `bias true`, and
//! `c` only in trainable mode (the fixed second layer is `1/n`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::net::{Activation, NetworkParams, SecondLayer};
use crate::scalar::Scalar;

const MAGIC: &str = "stablesgd-checkpoint 1";

pub fn to_text<T: Scalar>(params: &NetworkParams<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "n {}", params.n());
    let _ = writeln!(out, "d {}", params.d());
    let _ = writeln!(out, "l {}", params.l());
    let _ = writeln!(out, "mode {}", params.mode().name());
    let _ = writeln!(out, "activation {}", params.activation().name());
    let _ = writeln!(out, "bias {}", params.has_bias());
    out.push_str("columns\n");
    for i in 0..params.n() {
        let col = params.column(i);
        let line: Vec<String> = col.iter().map(|v| v.to_f64_lossy().to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn parse_err(source_name: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        message: message.into(),
    }
}

pub fn from_text<T: Scalar>(text: &str, source_name: &str) -> Result<NetworkParams<T>> {
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| parse_err(source_name, 0, format!("unexpected end of file, expected {what}")))
    };
    let (_, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(parse_err(source_name, 1, format!("expected {MAGIC:?}")));
    }
    let mut field = |key: &str| -> Result<(usize, String)> {
        let (no, line) = next(key)?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some(k), Some(v)) if k == key => Ok((no + 1, v.to_string())),
            _ => Err(parse_err(source_name, no + 1, format!("expected `{key} <value>`"))),
        }
    };
    let num = |(no, v): (usize, String)| {
        v.parse::<usize>()
            .map_err(|_| parse_err(source_name, no, format!("{v:?} is not a count")))
    };
    let n = num(field("n")?)?;
    let d = num(field("d")?)?;
    let l = num(field("l")?)?;
    let (no, mode) = field("mode")?;
    let mode = SecondLayer::from_str(&mode).map_err(|e| parse_err(source_name, no, e.to_string()))?;
    let (no, act) = field("activation")?;
    let activation = Activation::from_str(&act).map_err(|e| parse_err(source_name, no, e.to_string()))?;
    let (no, bias) = field("bias")?;
    let bias = bool::from_str(&bias).map_err(|_| parse_err(source_name, no, "bias must be true or false"))?;
    let (no, marker) = next("columns")?;
    if marker.trim() != "columns" {
        return Err(parse_err(source_name, no + 1, "expected `columns`"));
    }

    let p = d + usize::from(bias) + if mode == SecondLayer::Trainable { l } else { 0 };
    let mut w = Array2::<T>::zeros((n, d));
    let mut b = Array1::<T>::zeros(n);
    let mut c = Array2::<T>::zeros((n, l));
    for i in 0..n {
        let (no, line) = next("a parameter column")?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(source_name, no + 1, format!("{t:?} is not a number")))
            })
            .collect::<Result<_>>()?;
        if values.len() != p {
            return Err(parse_err(
                source_name,
                no + 1,
                format!("column has {} entries, expected {p}", values.len()),
            ));
        }
        let mut it = values.into_iter().map(T::of);
        for v in w.row_mut(i).iter_mut() {
            *v = it.next().expect("length checked");
        }
        if bias {
            b[i] = it.next().expect("length checked");
        }
        for v in c.row_mut(i).iter_mut().take(if mode == SecondLayer::Trainable { l } else { 0 }) {
            *v = it.next().expect("length checked");
        }
    }
    let b = bias.then_some(b);
    match mode {
        SecondLayer::Fixed => NetworkParams::fixed(w, b, l, activation),
        SecondLayer::Trainable => NetworkParams::new(w, b, Some(c), mode, activation),
    }
}

pub fn save<T: Scalar>(params: &NetworkParams<T>, path: &Path) -> Result<()> {
    fs::write(path, to_text(params)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<NetworkParams<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_lossless() {
        let net = NetworkParams::new(
            array![[0.1, -1.0 / 3.0], [1e-300, 7.0]],
            Some(array![std::f64::consts::PI, 0.0]),
            Some(array![[2.5, -0.2], [1e10, 3.0]]),
            SecondLayer::Trainable,
            Activation::Tanh,
        )
        .unwrap();
        let back: NetworkParams<f64> = from_text(&to_text(&net), "mem").unwrap();
        assert_eq!(back, net);

        let fixed = NetworkParams::fixed(array![[0.5], [0.25]], None, 3, Activation::Sigmoid).unwrap();
        let back: NetworkParams<f64> = from_text(&to_text(&fixed), "mem").unwrap();
        assert_eq!(back, fixed);
    }

    #[test]
    fn malformed_column_names_its_line() {
        let net = NetworkParams::<f64>::zeros(2, 2, 2, SecondLayer::Trainable, Activation::Relu, true).unwrap();
        let text = to_text(&net).replacen("0 0 0 0 0\n", "0 0 0\n", 1);
        match from_text::<f64>(&text, "ck") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
            other => panic!("{other:?}"),
        }
        assert!(from_text::<f64>("nonsense\n", "ck").is_err());
    }
}
