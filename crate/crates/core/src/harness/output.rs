//! CSV writers and age-bin aggregation.
//!
//! Every numeric cell is written as `{:.16e}` (17 significant digits), so a
//! value read back parses to the same double.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::demography::AgeGrid;
use crate::error::{Error, Result};
use crate::quadrature::trapezoid;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Write a header and numeric rows.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    write_rows_to(BufWriter::new(File::create(path)?), header, rows)
}

pub fn write_rows_to<W, I, R>(sink: W, header: &[&str], rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        let row = row.as_ref();
        if row.len() != header.len() {
            return Err(Error::LengthMismatch {
                what: "csv row",
                expected: header.len(),
                got: row.len(),
            });
        }
        w.write_record(row.iter().map(|&v| fmt(v)))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format field: one `(t, coordinate, value)` row per node and time.
pub fn write_field<'a, I>(
    path: &Path,
    coord_name: &str,
    value_name: &str,
    coords: &[f64],
    frames: I,
) -> Result<()>
where
    I: IntoIterator<Item = (f64, &'a [f64])>,
{
    let rows = frames
        .into_iter()
        .flat_map(|(t, values)| coords.iter().zip(values).map(move |(&c, &v)| [t, c, v]));
    write_rows(path, &["t", coord_name, value_name], rows)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(file)?;
    file.flush()?;
    Ok(())
}

fn node_index(edge: f64, grid: &AgeGrid) -> Result<usize> {
    if !(0.0..=grid.max_age()).contains(&edge) {
        return Err(Error::AgeDomain {
            age: edge,
            max: grid.max_age(),
        });
    }
    let x = edge / grid.step();
    let j = x.round();
    if (x - j).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "bin edge {edge} is not a grid node"
        )));
    }
    // the right end of the domain is represented by the last node
    Ok((j as usize).min(grid.len() - 1))
}

/// Integrals of `field * weight` over consecutive age bins `[e_m, e_{m+1})`.
///
/// Edges must be increasing grid nodes (or `L`). Each bin is a trapezoid sum
/// over its own nodes, so the bins add up exactly to the integral over their
/// union. `weight = None` integrates the field itself.
pub fn aggregate_age_bins(
    field: &[f64],
    weight: Option<&[f64]>,
    edges: &[f64],
    grid: &AgeGrid,
) -> Result<Vec<f64>> {
    if field.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "binned field",
            expected: grid.len(),
            got: field.len(),
        });
    }
    let values: Vec<f64> = match weight {
        Some(w) if w.len() != grid.len() => {
            return Err(Error::LengthMismatch {
                what: "bin weight",
                expected: grid.len(),
                got: w.len(),
            })
        }
        Some(w) => field.iter().zip(w).map(|(f, w)| f * w).collect(),
        None => field.to_vec(),
    };
    if edges.len() < 2 {
        return Err(Error::InvalidParameter(
            "at least two bin edges are needed".into(),
        ));
    }
    let idx = edges
        .iter()
        .map(|&e| node_index(e, grid))
        .collect::<Result<Vec<_>>>()?;
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!(
            "bin edges must increase: {edges:?}"
        )));
    }
    Ok(idx
        .windows(2)
        .map(|w| trapezoid(&values[w[0]..=w[1]], grid.step()))
        .collect())
}

/// `m + 1` equally spaced edges over `[0, L]`.
pub fn uniform_bin_edges(grid: &AgeGrid, m: usize) -> Vec<f64> {
    let per = grid.len() / m;
    (0..=m)
        .map(|b| {
            if b == m {
                grid.max_age()
            } else {
                grid.node(b * per)
            }
        })
        .collect()
}

/// Class-model counterpart: `sum N_k i_k` over the classes inside each bin.
/// Bin edges must coincide with class edges.
pub fn aggregate_classes(
    values: &[f64],
    population: &[f64],
    class_edges: &[f64],
    bin_edges: &[f64],
) -> Result<Vec<f64>> {
    let find = |e: f64| {
        class_edges
            .iter()
            .position(|&c| (c - e).abs() <= 1e-9 * class_edges[class_edges.len() - 1])
            .ok_or_else(|| Error::InvalidParameter(format!("bin edge {e} is not a class edge")))
    };
    let idx = bin_edges
        .iter()
        .map(|&e| find(e))
        .collect::<Result<Vec<_>>>()?;
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!(
            "bin edges must increase: {bin_edges:?}"
        )));
    }
    Ok(idx
        .windows(2)
        .map(|w| (w[0]..w[1]).map(|k| population[k] * values[k]).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_gives_zero_bins() {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        let bins = aggregate_age_bins(&vec![0.0; 100], None, &uniform_bin_edges(&grid, 10), &grid)
            .unwrap();
        assert_eq!(bins, vec![0.0; 10]);
    }

    #[test]
    fn edges_off_grid_rejected() {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        let f = vec![1.0; 100];
        assert!(matches!(
            aggregate_age_bins(&f, None, &[0.0, 1.5], &grid),
            Err(Error::AgeDomain { .. })
        ));
        assert!(aggregate_age_bins(&f, None, &[0.0, 0.005], &grid).is_err());
        assert!(aggregate_age_bins(&f, None, &[0.5, 0.2], &grid).is_err());
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn class_bins() {
        let edges = [0.0, 0.25, 0.5, 0.75, 1.0];
        let bins =
            aggregate_classes(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], &edges, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(bins, vec![3.0, 7.0]);
    }
}
