//! Run artifacts: draws CSV files, JSON summaries and run metadata.
//!
//! Draws files always carry a header. Weighted draws use the columns
//! `theta_1..theta_p, stat_1..stat_d, w_importance, w_kernel, w`; chain
//! output uses `chain, iteration, theta_1..theta_p`. Floats are written in
//! the shortest form that round-trips, so identical runs give identical
//! bytes.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::posterior::WeightedDraw;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

fn fmt_f64(x: f64) -> String {
    format!("{}", x)
}

pub fn write_weighted_draws<W: Write>(out: W, draws: &[WeightedDraw]) -> Result<()> {
    let p = draws.first().map_or(0, |d| d.theta.len());
    let d = draws.first().map_or(0, |d| d.stats.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=p).map(|k| format!("theta_{}", k)).collect();
    header.extend((1..=d).map(|k| format!("stat_{}", k)));
    header.extend(["w_importance", "w_kernel", "w"].map(String::from));
    w.write_record(&header)?;
    for draw in draws {
        let weights = [draw.w_importance, draw.w_kernel, draw.w];
        let row = draw.theta.iter().chain(&draw.stats).chain(&weights).map(|&x| fmt_f64(x));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a weighted-draws file. Columns are matched by header name.
pub fn read_weighted_draws<R: Read>(input: R) -> Result<Vec<WeightedDraw>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let theta_cols: Vec<usize> = column_indices(&headers, "theta_");
    let stat_cols: Vec<usize> = column_indices(&headers, "stat_");
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InputFormat {
                line: 1,
                msg: format!("missing column `{}`", name),
            })
    };
    let wi = find("w_importance").ok();
    let wk = find("w_kernel").ok();
    let ww = find("w")?;
    if theta_cols.is_empty() {
        return Err(Error::InputFormat {
            line: 1,
            msg: "no theta_ columns".into(),
        });
    }
    let mut draws = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::InputFormat {
                    line,
                    msg: format!("column {} is not a number", c + 1),
                })
        };
        draws.push(WeightedDraw {
            theta: theta_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?,
            stats: stat_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?,
            w_importance: wi.map(num).transpose()?.unwrap_or(1.0),
            w_kernel: wk.map(num).transpose()?.unwrap_or(1.0),
            w: num(ww)?,
        });
    }
    Ok(draws)
}

fn column_indices(headers: &csv::StringRecord, prefix: &str) -> Vec<usize> {
    let mut cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(c, h)| h.strip_prefix(prefix)?.parse::<usize>().ok().map(|k| (k, c)))
        .collect();
    cols.sort();
    cols.into_iter().map(|(_, c)| c).collect()
}

/// Chain draws as `chain, iteration, theta_*`; iterations count from 1
/// after burn-in.
pub fn write_chain_draws<W: Write>(out: W, chains: &[Vec<Vec<f64>>]) -> Result<()> {
    let p = chains
        .iter()
        .find_map(|c| c.first())
        .map_or(0, |t| t.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend((1..=p).map(|k| format!("theta_{}", k)));
    w.write_record(&header)?;
    for (c, chain) in chains.iter().enumerate() {
        for (it, theta) in chain.iter().enumerate() {
            let mut row = vec![(c + 1).to_string(), (it + 1).to_string()];
            row.extend(theta.iter().map(|&x| fmt_f64(x)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Equal-weight draws (rejection ABC or pooled chains) as weighted draws.
pub fn equal_weights(thetas: &[Vec<f64>]) -> Vec<WeightedDraw> {
    let w = 1.0 / thetas.len().max(1) as f64;
    thetas
        .iter()
        .map(|t| WeightedDraw {
            theta: t.clone(),
            stats: Vec::new(),
            w_importance: 1.0,
            w_kernel: 1.0,
            w,
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

pub fn write_draws_file(path: &Path, draws: &[WeightedDraw]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_weighted_draws(std::io::BufWriter::new(f), draws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_round_trip_exactly() {
        let draws = vec![
            WeightedDraw {
                theta: vec![-3.25, 0.1 + 0.2],
                stats: vec![78.0, 1.0 / 3.0],
                w_importance: 1e-300,
                w_kernel: 0.5,
                w: 0.25,
            },
            WeightedDraw {
                theta: vec![1.0, -0.0],
                stats: vec![0.0, 2.0],
                w_importance: 3.0,
                w_kernel: 1.0,
                w: 0.75,
            },
        ];
        let mut buf = Vec::new();
        write_weighted_draws(&mut buf, &draws).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta_1,theta_2,stat_1,stat_2,w_importance,w_kernel,w\n"));
        let back = read_weighted_draws(&buf[..]).unwrap();
        assert_eq!(back, draws);
    }

    #[test]
    fn chain_file_layout() {
        let mut buf = Vec::new();
        write_chain_draws(&mut buf, &[vec![vec![1.0, 2.0]], vec![vec![3.0, 4.5]]]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "chain,iteration,theta_1,theta_2\n1,1,1,2\n2,1,3,4.5\n"
        );
    }
}
