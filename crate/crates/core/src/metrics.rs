//! Pairwise discordance metrics between device channels.
//!
//! All four metrics are symmetric in the two devices. CORR and PAWN are
//! normalized correlations in `[0, 1]`; ROOK and KING mix PAWN with an
//! energy term weighted by `omega`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricTag {
    Corr,
    Pawn,
    Rook,
    King,
}

impl MetricTag {
    pub const ALL: [MetricTag; 4] = [
        MetricTag::Corr,
        MetricTag::Pawn,
        MetricTag::Rook,
        MetricTag::King,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricTag::Corr => "CORR",
            MetricTag::Pawn => "PAWN",
            MetricTag::Rook => "ROOK",
            MetricTag::King => "KING",
        }
    }
}

impl fmt::Display for MetricTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CORR" => Ok(MetricTag::Corr),
            "PAWN" => Ok(MetricTag::Pawn),
            "ROOK" => Ok(MetricTag::Rook),
            "KING" => Ok(MetricTag::King),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// A metric together with its energy weight (ignored by CORR and PAWN).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricKind {
    pub tag: MetricTag,
    pub omega: f64,
}

impl MetricKind {
    pub fn new(tag: MetricTag, omega: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::invalid(format!(
                "omega must lie in [0, 1], got {omega}"
            )));
        }
        Ok(MetricKind { tag, omega })
    }
}

/// Normalized magnitude of the inner product of two complex row slices.
fn normalized_corr<'a>(
    a: impl Iterator<Item = &'a num_complex::Complex64> + Clone,
    b: impl Iterator<Item = &'a num_complex::Complex64> + Clone,
) -> Result<f64> {
    let na: f64 = a.clone().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.clone().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid(
            "zero-norm channel row; correlation undefined",
        ));
    }
    let ip: num_complex::Complex64 = a.zip(b).map(|(x, y)| x * y.conj()).sum();
    Ok(ip.norm() / (na * nb))
}

fn check_dims(hj: &ChannelMatrix, hl: &ChannelMatrix) -> Result<()> {
    if hj.entries.shape() != hl.entries.shape() {
        return Err(Error::invalid("channel matrices differ in shape"));
    }
    Ok(())
}

/// CORR: correlation of the vectorized channels.
pub fn corr(hj: &ChannelMatrix, hl: &ChannelMatrix) -> Result<f64> {
    check_dims(hj, hl)?;
    // nalgebra storage is column-major; any common ordering vectorizes both alike
    normalized_corr(hj.entries.iter(), hl.entries.iter())
}

/// PAWN: mean row-to-row correlation over all `n_rx^2` row pairs.
pub fn pawn(hj: &ChannelMatrix, hl: &ChannelMatrix) -> Result<f64> {
    check_dims(hj, hl)?;
    let n = hj.n_rx();
    let mut acc = 0.0;
    for r1 in 0..n {
        for r2 in 0..n {
            acc += normalized_corr(hj.entries.row(r1).iter(), hl.entries.row(r2).iter())?;
        }
    }
    Ok(acc / (n * n) as f64)
}

/// Evaluates one metric on a device pair. `e_max` is the largest channel
/// energy in the population and is only read by KING.
pub fn pairwise_metric(
    kind: MetricKind,
    hj: &ChannelMatrix,
    hl: &ChannelMatrix,
    e_max: f64,
) -> Result<f64> {
    let w = kind.omega;
    match kind.tag {
        MetricTag::Corr => corr(hj, hl),
        MetricTag::Pawn => pawn(hj, hl),
        MetricTag::Rook => {
            let p = pawn(hj, hl)?;
            let (ej, el) = (hj.energy(), hl.energy());
            Ok(w * (ej - el).abs() / (ej + el) + (1.0 - w) * p)
        }
        MetricTag::King => {
            if !(e_max > 0.0) {
                return Err(Error::invalid(
                    "KING needs a positive population energy maximum",
                ));
            }
            let p = pawn(hj, hl)?;
            let (ej, el) = (hj.energy(), hl.energy());
            Ok(w * ((e_max - ej) / e_max + (e_max - el) / e_max) + (1.0 - w) * p)
        }
    }
}

/// Symmetric `K x K` matrix of pairwise discordances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscordanceMatrix {
    k: usize,
    values: Vec<f64>,
}

impl DiscordanceMatrix {
    /// Builds from a full row-major matrix; symmetry and a zero diagonal are enforced.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("discordance matrix must be square"));
        }
        for j in 0..k {
            if rows[j][j] != 0.0 {
                return Err(Error::invalid(format!(
                    "diagonal entry ({j},{j}) must be 0"
                )));
            }
            for l in 0..k {
                let v = rows[j][l];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "entry ({j},{l}) must be finite and nonnegative"
                    )));
                }
                if v != rows[l][j] {
                    return Err(Error::invalid(format!(
                        "entries ({j},{l}) and ({l},{j}) differ"
                    )));
                }
            }
        }
        Ok(DiscordanceMatrix {
            k,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, j: usize, l: usize) -> f64 {
        self.values[j * self.k + l]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.k.max(1))
            .map(|r| r.to_vec())
            .collect()
    }

    /// Full symmetric form, one row per line, comma separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        for row in self.values.chunks(self.k.max(1)) {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("theta entry `{f}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}

/// Largest channel energy (squared Frobenius norm) over the population.
pub fn max_energy(channels: &[ChannelMatrix]) -> f64 {
    channels.iter().map(|c| c.energy()).fold(0.0, f64::max)
}

/// Discordance of every device pair under `kind`.
pub fn discordance_matrix(
    channels: &[ChannelMatrix],
    kind: MetricKind,
) -> Result<DiscordanceMatrix> {
    let k = channels.len();
    if k < 2 {
        return Err(Error::invalid("discordance needs at least two channels"));
    }
    let shape = channels[0].entries.shape();
    if channels.iter().any(|c| c.entries.shape() != shape) {
        return Err(Error::invalid("channels must share dimensions"));
    }
    let e_max = max_energy(channels);
    let mut values = vec![0.0; k * k];
    for j in 0..k {
        for l in (j + 1)..k {
            let v = pairwise_metric(kind, &channels[j], &channels[l], e_max)?;
            values[j * k + l] = v;
            values[l * k + j] = v;
        }
    }
    Ok(DiscordanceMatrix { k, values })
}
