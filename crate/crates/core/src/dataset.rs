//! Structured-text container for map datasets and transfer-tensor families.
//!
//! ```text
//! fcstt-data 1
//! record = L
//! preset = resonant-level-small
//! d = 2
//! input_basis = matrix-units
//! output_basis = matrix-units
//! dt = 2.0000000000000000e-2
//! steps = 400
//! lambdas = 0.0000000000000000e0 3.0000000000000000e-1
//! noise = none
//! fields = lambda_index n alpha beta re im
//! end
//! 0 1 0 0 1.0000000000000000e0 0.0000000000000000e0
//! ...
//! ```
//!
//! Records are ordered by `lambda_index`, then `n`, then `alpha`, then `beta`.
//! For record type `L`, `n` is the time step and the value is
//! `L_{beta alpha} = Tr[Y_beta^dag Lambda_n(X_alpha)]`. For record type `T`, `n`
//! is the lag and the value is the superoperator entry `T_n[beta, alpha]`;
//! the header then also carries `cutoff` and `smoothing`, and the bases are
//! the matrix units. Floats use 17 significant digits, which round-trips
//! every `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{c64, ComplexMatrix, SuperOperator};
use crate::stats::{fmt_f64, write_text};
use crate::tomography::{BasisKind, MapDataset, NoiseSpec};
use crate::transfer::{MapProvenance, TransferTensor, TtFamily};

const MAGIC: &str = "fcstt-data 1";
const FIELDS: &str = "lambda_index n alpha beta re im";

/// Transfer-tensor families for several counting fields, sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TtBundle {
    pub preset: String,
    pub families: Vec<TtFamily>,
}

fn header_line(out: &mut String, key: &str, value: impl std::fmt::Display) {
    writeln!(out, "{key} = {value}").expect("string write");
}

fn lambdas_text(lambdas: &[f64]) -> String {
    lambdas.iter().map(|l| fmt_f64(*l)).collect::<Vec<_>>().join(" ")
}

fn noise_text(noise: Option<NoiseSpec>) -> String {
    match noise {
        None => "none".into(),
        Some(n) => format!("{} {}", fmt_f64(n.sigma), n.seed),
    }
}

fn push_record(out: &mut String, li: usize, n: usize, alpha: usize, beta: usize, re: f64, im: f64) {
    writeln!(out, "{li} {n} {alpha} {beta} {} {}", fmt_f64(re), fmt_f64(im)).expect("string write");
}

pub fn dataset_to_string(ds: &MapDataset) -> String {
    let mut out = format!("{MAGIC}\n");
    header_line(&mut out, "record", "L");
    header_line(&mut out, "preset", &ds.preset);
    header_line(&mut out, "d", ds.d);
    header_line(&mut out, "input_basis", ds.input_basis);
    header_line(&mut out, "output_basis", ds.output_basis);
    header_line(&mut out, "dt", fmt_f64(ds.dt));
    header_line(&mut out, "steps", ds.n_steps);
    header_line(&mut out, "lambdas", lambdas_text(&ds.lambdas));
    header_line(&mut out, "noise", noise_text(ds.noise));
    header_line(&mut out, "fields", FIELDS);
    out.push_str("end\n");
    let d2 = ds.d * ds.d;
    for (li, series) in ds.data.iter().enumerate() {
        for (k, l) in series.iter().enumerate() {
            for alpha in 0..d2 {
                for beta in 0..d2 {
                    let v = l[(beta, alpha)];
                    push_record(&mut out, li, k + 1, alpha, beta, v.re, v.im);
                }
            }
        }
    }
    out
}

pub fn bundle_to_string(b: &TtBundle) -> Result<String> {
    let first = b.families.first().ok_or_else(|| Error::Incomplete("empty transfer-tensor bundle".into()))?;
    if b.families.iter().any(|f| f.cutoff() != first.cutoff() || f.dt != first.dt || f.smoothing != first.smoothing)
    {
        return Err(Error::Incomplete("families in a bundle must share cutoff, time step and smoothing".into()));
    }
    let d = first.hilbert_dim();
    let lambdas: Vec<f64> = b.families.iter().map(|f| f.lambda).collect();
    let mut out = format!("{MAGIC}\n");
    header_line(&mut out, "record", "T");
    header_line(&mut out, "preset", &b.preset);
    header_line(&mut out, "d", d);
    header_line(&mut out, "input_basis", BasisKind::MatrixUnits);
    header_line(&mut out, "output_basis", BasisKind::MatrixUnits);
    header_line(&mut out, "dt", fmt_f64(first.dt));
    header_line(&mut out, "steps", first.cutoff());
    header_line(&mut out, "lambdas", lambdas_text(&lambdas));
    header_line(&mut out, "noise", "none");
    header_line(&mut out, "cutoff", first.cutoff());
    header_line(&mut out, "smoothing", first.smoothing);
    header_line(&mut out, "fields", FIELDS);
    out.push_str("end\n");
    let d2 = d * d;
    for (li, f) in b.families.iter().enumerate() {
        for t in &f.tensors {
            for alpha in 0..d2 {
                for beta in 0..d2 {
                    let v = t.sup.matrix()[(beta, alpha)];
                    push_record(&mut out, li, t.lag, alpha, beta, v.re, v.im);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_dataset(ds: &MapDataset, path: &Path) -> Result<()> {
    write_text(path, &dataset_to_string(ds))
}

pub fn write_bundle(b: &TtBundle, path: &Path) -> Result<()> {
    write_text(path, &bundle_to_string(b)?)
}

struct Parsed {
    record: String,
    preset: String,
    d: usize,
    input_basis: BasisKind,
    output_basis: BasisKind,
    dt: f64,
    steps: usize,
    lambdas: Vec<f64>,
    noise: Option<NoiseSpec>,
    cutoff: Option<usize>,
    smoothing: Option<usize>,
    /// `blocks[lambda_index][n - 1][(beta, alpha)]`.
    blocks: Vec<Vec<ComplexMatrix>>,
}

fn parse(text: &str, path: &Path) -> Result<Parsed> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(err(1, format!("expected '{MAGIC}'"))),
    }
    let mut header = std::collections::BTreeMap::new();
    let mut end_line = 0;
    for (no, line) in lines.by_ref() {
        let line = line.trim();
        if line == "end" {
            end_line = no;
            break;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| err(no, format!("expected 'key = value', got '{line}'")))?;
        if header.insert(k.trim().to_string(), (no, v.trim().to_string())).is_some() {
            return Err(err(no, format!("duplicate key '{}'", k.trim())));
        }
    }
    if end_line == 0 {
        return Err(err(0, "missing 'end' after the header".into()));
    }
    let get = |key: &str| -> Result<(usize, String)> {
        header.get(key).cloned().ok_or_else(|| err(end_line, format!("missing header key '{key}'")))
    };
    let num = |key: &str| -> Result<usize> {
        let (no, v) = get(key)?;
        v.parse().map_err(|_| err(no, format!("'{key}' must be a non-negative integer")))
    };
    let float = |no: usize, v: &str| -> Result<f64> { v.parse().map_err(|_| err(no, format!("bad number '{v}'"))) };
    let basis = |key: &str| -> Result<BasisKind> {
        let (no, v) = get(key)?;
        v.parse().map_err(|e: Error| err(no, e.to_string()))
    };

    let (no, record) = get("record")?;
    if record != "L" && record != "T" {
        return Err(err(no, format!("unknown record type '{record}'")));
    }
    let (no, fields) = get("fields")?;
    if fields != FIELDS {
        return Err(err(no, format!("fields must be '{FIELDS}'")));
    }
    let d = num("d")?;
    let steps = num("steps")?;
    let (no, dt) = get("dt")?;
    let dt = float(no, &dt)?;
    let (no, lam) = get("lambdas")?;
    let lambdas = lam.split_whitespace().map(|v| float(no, v)).collect::<Result<Vec<_>>>()?;
    let (no, nz) = get("noise")?;
    let noise = match nz.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["none"] => None,
        [s, seed] => Some(NoiseSpec {
            sigma: float(no, s)?,
            seed: seed.parse().map_err(|_| err(no, format!("bad noise seed '{seed}'")))?,
        }),
        _ => return Err(err(no, "noise must be 'none' or '<sigma> <seed>'".into())),
    };
    let (cutoff, smoothing) =
        if record == "T" { (Some(num("cutoff")?), Some(num("smoothing")?)) } else { (None, None) };
    let known = [
        "record", "preset", "d", "input_basis", "output_basis", "dt", "steps", "lambdas", "noise", "fields", "cutoff",
        "smoothing",
    ];
    if let Some((k, (no, _))) = header.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        return Err(err(*no, format!("unknown header key '{k}'")));
    }
    if d == 0 || d > 64 {
        return Err(err(end_line, format!("unsupported dimension d = {d}")));
    }

    let d2 = d * d;
    let mut blocks = vec![vec![ComplexMatrix::zeros(d2, d2); steps]; lambdas.len()];
    let mut expected = (0usize, 1usize, 0usize, 0usize);
    let total = lambdas.len() * steps * d2 * d2;
    let mut count = 0usize;
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 6 {
            return Err(err(no, format!("expected 6 fields, got {}", parts.len())));
        }
        let idx = |i: usize| -> Result<usize> {
            parts[i].parse().map_err(|_| err(no, format!("bad index '{}'", parts[i])))
        };
        let key = (idx(0)?, idx(1)?, idx(2)?, idx(3)?);
        if count >= total || key != expected {
            return Err(err(
                no,
                format!(
                    "record {:?} out of order or out of range (expected {:?})",
                    key,
                    if count < total { Some(expected) } else { None }
                ),
            ));
        }
        blocks[key.0][key.1 - 1][(key.3, key.2)] = c64(float(no, parts[4])?, float(no, parts[5])?);
        count += 1;
        expected.3 += 1;
        if expected.3 == d2 {
            expected.3 = 0;
            expected.2 += 1;
            if expected.2 == d2 {
                expected.2 = 0;
                expected.1 += 1;
                if expected.1 > steps {
                    expected.1 = 1;
                    expected.0 += 1;
                }
            }
        }
    }
    if count != total {
        return Err(Error::Incomplete(format!("{}: {count} of {total} records present", path.display())));
    }
    Ok(Parsed {
        record,
        preset: get("preset")?.1,
        d,
        input_basis: basis("input_basis")?,
        output_basis: basis("output_basis")?,
        dt,
        steps,
        lambdas,
        noise,
        cutoff,
        smoothing,
        blocks,
    })
}

pub fn dataset_from_str(text: &str, path: &Path) -> Result<MapDataset> {
    let p = parse(text, path)?;
    if p.record != "L" {
        return Err(Error::Parse { path: path.to_path_buf(), line: 2, msg: "expected record type L".into() });
    }
    let ds = MapDataset {
        preset: p.preset,
        d: p.d,
        input_basis: p.input_basis,
        output_basis: p.output_basis,
        lambdas: p.lambdas,
        dt: p.dt,
        n_steps: p.steps,
        noise: p.noise,
        data: p.blocks,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn bundle_from_str(text: &str, path: &Path) -> Result<TtBundle> {
    let p = parse(text, path)?;
    if p.record != "T" {
        return Err(Error::Parse { path: path.to_path_buf(), line: 2, msg: "expected record type T".into() });
    }
    let smoothing = p.smoothing.unwrap_or(0);
    let families = p
        .lambdas
        .iter()
        .zip(p.blocks)
        .map(|(&lambda, blocks)| {
            let tensors = blocks
                .into_iter()
                .enumerate()
                .map(|(i, m)| Ok(TransferTensor { sup: SuperOperator::new(m)?, lambda, lag: i + 1, dt: p.dt }))
                .collect::<Result<Vec<_>>>()?;
            Ok(TtFamily {
                tensors,
                lambda,
                dt: p.dt,
                smoothing,
                provenance: if smoothing > 0 { MapProvenance::Smoothed { window: smoothing } } else { MapProvenance::Raw },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if p.cutoff != Some(p.steps) {
        return Err(Error::Parse { path: path.to_path_buf(), line: 0, msg: "cutoff must equal steps".into() });
    }
    Ok(TtBundle { preset: p.preset, families })
}

pub fn read_dataset(path: &Path) -> Result<MapDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    dataset_from_str(&text, path)
}

pub fn read_bundle(path: &Path) -> Result<TtBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    bundle_from_str(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MapDataset {
        let mut k = 0.0f64;
        let mut next = || {
            k += 1.0;
            c64((k * 0.37).sin() / 3.0, -(k * 1.1).cos() * 1e-7)
        };
        let data = (0..2).map(|_| (0..3).map(|_| ComplexMatrix::from_fn(4, 4, |_, _| next())).collect()).collect();
        MapDataset {
            preset: "resonant-level-small".into(),
            d: 2,
            input_basis: BasisKind::Pauli,
            output_basis: BasisKind::MatrixUnits,
            lambdas: vec![-0.01, 0.3],
            dt: 0.02,
            n_steps: 3,
            noise: Some(NoiseSpec { sigma: 1e-3, seed: 42 }),
            data,
        }
    }

    #[test]
    fn dataset_round_trip_is_bit_stable() {
        let ds = sample();
        let text = dataset_to_string(&ds);
        let back = dataset_from_str(&text, Path::new("mem")).unwrap();
        assert_eq!(back, ds);
        assert_eq!(dataset_to_string(&back), text);
        assert_eq!(text.lines().filter(|l| l.split_whitespace().count() == 6).count(), ds.n_records());
    }

    #[test]
    fn bundle_round_trip() {
        let ds = sample();
        let fam = |li: usize| TtFamily {
            tensors: ds.data[li]
                .iter()
                .enumerate()
                .map(|(i, m)| TransferTensor { sup: SuperOperator::new(m.clone()).unwrap(), lambda: ds.lambdas[li], lag: i + 1, dt: 0.02 })
                .collect(),
            lambda: ds.lambdas[li],
            dt: 0.02,
            smoothing: 6,
            provenance: MapProvenance::Smoothed { window: 6 },
        };
        let b = TtBundle { preset: "p".into(), families: vec![fam(0), fam(1)] };
        let text = bundle_to_string(&b).unwrap();
        assert_eq!(bundle_from_str(&text, Path::new("mem")).unwrap(), b);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let text = dataset_to_string(&sample());
        let p = Path::new("mem");
        let truncated: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        assert!(matches!(dataset_from_str(&truncated, p), Err(Error::Incomplete(_))));
        let swapped = text.replacen("0 1 0 1 ", "0 1 1 0 ", 1);
        assert!(matches!(dataset_from_str(&swapped, p), Err(Error::Parse { .. })));
        let extra = text.replacen("noise =", "colour = blue\nnoise =", 1);
        assert!(matches!(dataset_from_str(&extra, p), Err(Error::Parse { .. })));
        assert!(matches!(dataset_from_str("hello", p), Err(Error::Parse { line: 1, .. })));
        assert!(bundle_from_str(&text, p).is_err());
    }
}
