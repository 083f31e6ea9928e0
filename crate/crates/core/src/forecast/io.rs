//! Flat-file model serialization.
//!
//! Header line `rnn,H,I,O` or `mlp,<in> <out> <activation>,...` (one field
//! per layer), followed by the parameter blocks separated by blank lines:
//! each matrix row-major one row per line, each bias as a single row.
//! Floats use the shortest round-tripping decimal form, so a load after a
//! save reproduces every forecast exactly.

use super::net::{Activation, Matrix, MlpParams, RnnParams};
use super::{ForecastError, PolicyModel};
use std::fmt::Write as _;
use std::path::Path;

pub fn save_model_to_string(model: &PolicyModel) -> Result<String, ForecastError> {
    match model {
        PolicyModel::Linear => Err(ForecastError::ModelFormat(
            "linear models are refit at every activation and have no saved form".into(),
        )),
        PolicyModel::Rnn(rnn) => {
            let mut out = format!("rnn,{},{},{}\n", rnn.hidden, rnn.input, rnn.output);
            write_matrix(&mut out, &rnn.w_s);
            write_row(&mut out, &rnn.b_s);
            write_matrix(&mut out, &rnn.w_o);
            write_row(&mut out, &rnn.b_o);
            Ok(out)
        }
        PolicyModel::Mlp(mlp) => {
            let mut header = String::from("mlp");
            for layer in mlp.layers() {
                let _ = write!(
                    header,
                    ",{} {} {}",
                    layer.weights.cols(),
                    layer.weights.rows(),
                    layer.activation.name()
                );
            }
            header.push('\n');
            let mut out = header;
            for layer in mlp.layers() {
                write_matrix(&mut out, &layer.weights);
                write_row(&mut out, &layer.bias);
            }
            Ok(out)
        }
    }
}

pub fn save_model(model: &PolicyModel, path: &Path) -> Result<(), ForecastError> {
    std::fs::write(path, save_model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<PolicyModel, ForecastError> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| ForecastError::ModelFormat(format!("{}: {e}", path.display())))?;
    load_model_from_str(&body)
}

pub fn load_model_from_str(body: &str) -> Result<PolicyModel, ForecastError> {
    let mut lines = body.lines();
    let header = lines.next().ok_or_else(|| ForecastError::ModelFormat("empty file".into()))?;
    let fields: Vec<&str> = header.split(',').collect();
    let mut blocks = BlockReader { lines };
    match fields[0] {
        "rnn" => {
            if fields.len() != 4 {
                return Err(ForecastError::ModelFormat("rnn header needs kind,H,I,O".into()));
            }
            let h = parse_dim(fields[1])?;
            let i = parse_dim(fields[2])?;
            let o = parse_dim(fields[3])?;
            let w_s = blocks.matrix(h, h + i)?;
            let b_s = blocks.row(h)?;
            let w_o = blocks.matrix(o, h + i)?;
            let b_o = blocks.row(o)?;
            Ok(PolicyModel::Rnn(RnnParams::new(h, i, o, w_s, b_s, w_o, b_o)?))
        }
        "mlp" => {
            if fields.len() < 2 {
                return Err(ForecastError::ModelFormat("mlp header needs layer specs".into()));
            }
            let mut layers = Vec::new();
            for spec in &fields[1..] {
                let parts: Vec<&str> = spec.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(ForecastError::ModelFormat(format!(
                        "layer spec must be '<in> <out> <activation>', got {spec:?}"
                    )));
                }
                let cols = parse_dim(parts[0])?;
                let rows = parse_dim(parts[1])?;
                let act = Activation::parse(parts[2])?;
                let weights = blocks.matrix(rows, cols)?;
                let bias = blocks.row(rows)?;
                layers.push((weights, bias, act));
            }
            Ok(PolicyModel::Mlp(MlpParams::new(layers)?))
        }
        other => Err(ForecastError::ModelFormat(format!("unknown model kind {other:?}"))),
    }
}

fn write_matrix(out: &mut String, m: &Matrix) {
    for r in 0..m.rows() {
        let row: Vec<String> =
            (0..m.cols()).map(|c| format!("{}", m.at(r, c))).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out.push('\n');
}

fn write_row(out: &mut String, v: &[f64]) {
    let row: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    let _ = writeln!(out, "{}", row.join(" "));
    out.push('\n');
}

fn parse_dim(s: &str) -> Result<usize, ForecastError> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| ForecastError::ModelFormat(format!("bad dimension {s:?}")))
}

struct BlockReader<'a> {
    lines: std::str::Lines<'a>,
}

impl BlockReader<'_> {
    /// Reads `rows` non-blank lines of `cols` floats, then the blank
    /// separator line if present.
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix, ForecastError> {
        let mut parsed_rows = Vec::with_capacity(rows);
        for _ in 0..rows {
            let line = self
                .next_content_line()
                .ok_or_else(|| ForecastError::ModelFormat("unexpected end of file".into()))?;
            let row = parse_floats(line)?;
            if row.len() != cols {
                return Err(ForecastError::ModelFormat(format!(
                    "expected {cols} values per row, got {}",
                    row.len()
                )));
            }
            parsed_rows.push(row);
        }
        Ok(Matrix::from_rows(&parsed_rows))
    }

    fn row(&mut self, len: usize) -> Result<Vec<f64>, ForecastError> {
        let line = self
            .next_content_line()
            .ok_or_else(|| ForecastError::ModelFormat("unexpected end of file".into()))?;
        let row = parse_floats(line)?;
        if row.len() != len {
            return Err(ForecastError::ModelFormat(format!(
                "expected {len} values, got {}",
                row.len()
            )));
        }
        Ok(row)
    }

    fn next_content_line(&mut self) -> Option<&str> {
        for line in self.lines.by_ref() {
            if !line.trim().is_empty() {
                return Some(line);
            }
        }
        None
    }
}

fn parse_floats(line: &str) -> Result<Vec<f64>, ForecastError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| ForecastError::ModelFormat(format!("bad float {tok:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::GradientModel;

    #[test]
    fn rnn_roundtrip_preserves_forecasts_exactly() {
        let rnn = RnnParams::seeded(6, 1, 1, 77);
        let text = save_model_to_string(&PolicyModel::Rnn(rnn.clone())).unwrap();
        let PolicyModel::Rnn(loaded) = load_model_from_str(&text).unwrap() else {
            panic!("expected rnn");
        };
        let window: Vec<f64> = (0..20).map(|i| (i as f64 * 0.31).sin().abs()).collect();
        let a = rnn.forward_window(&window).unwrap();
        let b = loaded.forward_window(&window).unwrap();
        assert_eq!(a, b);
        assert_eq!(rnn.param_vector(), loaded.param_vector());
    }

    #[test]
    fn mlp_roundtrip_preserves_forecasts_exactly() {
        let mlp = MlpParams::seeded(10, &[8, 4], 13);
        let text = save_model_to_string(&PolicyModel::Mlp(mlp.clone())).unwrap();
        let PolicyModel::Mlp(loaded) = load_model_from_str(&text).unwrap() else {
            panic!("expected mlp");
        };
        let window: Vec<f64> = (0..10).map(|i| (i as f64 * 0.17).cos().abs()).collect();
        assert_eq!(mlp.forward_window(&window).unwrap(), loaded.forward_window(&window).unwrap());
    }

    #[test]
    fn header_shape() {
        let rnn = PolicyModel::Rnn(RnnParams::zeros(2, 1, 1));
        let text = save_model_to_string(&rnn).unwrap();
        assert!(text.starts_with("rnn,2,1,1\n"));
        let mlp = PolicyModel::Mlp(MlpParams::seeded(4, &[3], 1));
        let text = save_model_to_string(&mlp).unwrap();
        assert!(text.starts_with("mlp,4 3 relu,3 1 relu\n"));
    }

    #[test]
    fn linear_has_no_saved_form() {
        assert!(save_model_to_string(&PolicyModel::Linear).is_err());
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(load_model_from_str("").is_err());
        assert!(load_model_from_str("gru,4,1,1\n").is_err());
        assert!(load_model_from_str("rnn,2,1\n").is_err());
        assert!(load_model_from_str("rnn,2,1,1\n1 2 3\n").is_err()); // truncated
        assert!(load_model_from_str("rnn,1,1,1\n1 x\n\n0\n\n1 0\n\n0\n").is_err());
    }
}
