//! Random sensing instances and the vec / Kronecker primitives.
//!
//! Random draws use ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`. Independent parts of one instance (signal, `A`, `B`) are
//! drawn from separate ChaCha streams of the same seed, so each part is
//! reproducible on its own. Normal variates come from `rand_distr::StandardNormal`
//! (ziggurat sampling); bit-reproducibility holds for this implementation and
//! these crate versions.
//!
//! `vec` is column-major and 0-based everywhere: entry `(i, j)` of an
//! `n1 x n2` matrix sits at position `j * n1 + i`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream ids used to split one seed into independent draws.
pub mod stream {
    pub const SIGNAL: u64 = 0;
    pub const SENSING_A: u64 = 1;
    pub const SENSING_B: u64 = 2;
    pub const SENSING_VECTOR: u64 = 3;
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amplitude {
    UnitSigns,
    #[default]
    StandardGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub n: usize,
    pub k: usize,
    pub amplitude: Amplitude,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    #[default]
    Gaussian,
    Rademacher,
}

/// Entry law for a sensing matrix: variance `1/rows` in both cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensingEnsemble {
    pub kind: EnsembleKind,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

/// Draws a signal with exactly `k` nonzeros on a uniformly random support.
pub fn gen_sparse_signal(spec: &SignalSpec) -> Result<DVector<f64>> {
    gen_sparse_signal_with(spec, &mut rng_for(spec.seed, stream::SIGNAL))
}

pub(crate) fn gen_sparse_signal_with(
    spec: &SignalSpec,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    if spec.k > spec.n {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds signal length {}",
            spec.k, spec.n
        )));
    }
    let mut x = DVector::zeros(spec.n);
    let mut support = index::sample(rng, spec.n, spec.k).into_vec();
    support.sort_unstable();
    for i in support {
        x[i] = loop {
            let v: f64 = match spec.amplitude {
                Amplitude::UnitSigns => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Amplitude::StandardGaussian => rng.sample(StandardNormal),
            };
            // a zero draw would break the exact-k contract
            if v != 0.0 {
                break v;
            }
        };
    }
    Ok(x)
}

pub fn gen_sensing_matrix(ens: &SensingEnsemble) -> Result<DMatrix<f64>> {
    gen_sensing_matrix_with(ens, &mut rng_for(ens.seed, stream::SENSING_VECTOR))
}

pub(crate) fn gen_sensing_matrix_with(
    ens: &SensingEnsemble,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    if ens.rows == 0 || ens.cols == 0 {
        return Err(Error::Dimension(format!(
            "sensing matrix must be nonempty, got {}x{}",
            ens.rows, ens.cols
        )));
    }
    let scale = 1.0 / (ens.rows as f64).sqrt();
    // filled column-major, matching nalgebra storage
    let m = match ens.kind {
        EnsembleKind::Gaussian => DMatrix::from_fn(ens.rows, ens.cols, |_, _| {
            scale * rng.sample::<f64, _>(StandardNormal)
        }),
        EnsembleKind::Rademacher => DMatrix::from_fn(ens.rows, ens.cols, |_, _| {
            if rng.random::<bool>() {
                scale
            } else {
                -scale
            }
        }),
    };
    Ok(m)
}

pub fn vec(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

pub fn unvec(x: &[f64], n1: usize, n2: usize) -> Result<DMatrix<f64>> {
    if x.len() != n1 * n2 {
        return Err(Error::Dimension(format!(
            "cannot reshape length {} into {n1}x{n2}",
            x.len()
        )));
    }
    Ok(DMatrix::from_column_slice(n1, n2, x))
}

/// `B ⊗ A`: block `(i, j)` is `A · b_ij`.
pub fn kron(b: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m1, n1) = a.shape();
    let (m2, n2) = b.shape();
    let mut u = DMatrix::zeros(m1 * m2, n1 * n2);
    for j2 in 0..n2 {
        for i2 in 0..m2 {
            let bij = b[(i2, j2)];
            if bij == 0.0 {
                continue;
            }
            for j1 in 0..n1 {
                for i1 in 0..m1 {
                    u[(i2 * m1 + i1, j2 * n1 + j1)] = a[(i1, j1)] * bij;
                }
            }
        }
    }
    u
}

/// `Y = A · X · Bᵀ`
pub fn apply_kcs(a: &DMatrix<f64>, x: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != x.nrows() || x.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "A is {}x{}, X is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            x.nrows(),
            x.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a * x * b.transpose())
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorInstance {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub x0: DVector<f64>,
    pub seed: u64,
}

impl VectorInstance {
    pub fn new(a: DMatrix<f64>, x0: DVector<f64>, seed: u64) -> Result<Self> {
        if a.ncols() != x0.len() {
            return Err(Error::Dimension(format!(
                "A has {} columns but x0 has length {}",
                a.ncols(),
                x0.len()
            )));
        }
        let y = &a * &x0;
        Ok(VectorInstance { a, y, x0, seed })
    }

    /// Draws an `m x n` matrix with entry law `kind` and a `k`-sparse signal, both from `seed`.
    pub fn random(
        m: usize,
        n: usize,
        k: usize,
        kind: EnsembleKind,
        amplitude: Amplitude,
        seed: u64,
    ) -> Result<Self> {
        let a = gen_sensing_matrix(&SensingEnsemble {
            kind,
            rows: m,
            cols: n,
            seed,
        })?;
        let x0 = gen_sparse_signal(&SignalSpec {
            n,
            k,
            amplitude,
            seed,
        })?;
        Self::new(a, x0, seed)
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn k(&self) -> usize {
        self.x0.iter().filter(|v| **v != 0.0).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KcsInstance {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub x0: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub seed: u64,
}

impl KcsInstance {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, x0: DMatrix<f64>, seed: u64) -> Result<Self> {
        let y = apply_kcs(&a, &x0, &b)?;
        Ok(KcsInstance { a, b, x0, y, seed })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn random(
        m1: usize,
        n1: usize,
        m2: usize,
        n2: usize,
        k: usize,
        kind: EnsembleKind,
        amplitude: Amplitude,
        seed: u64,
    ) -> Result<Self> {
        let a = gen_sensing_matrix_with(
            &SensingEnsemble {
                kind,
                rows: m1,
                cols: n1,
                seed,
            },
            &mut rng_for(seed, stream::SENSING_A),
        )?;
        let b = gen_sensing_matrix_with(
            &SensingEnsemble {
                kind,
                rows: m2,
                cols: n2,
                seed,
            },
            &mut rng_for(seed, stream::SENSING_B),
        )?;
        let x = gen_sparse_signal(&SignalSpec {
            n: n1 * n2,
            k,
            amplitude,
            seed,
        })?;
        Self::new(a, b, unvec(x.as_slice(), n1, n2)?, seed)
    }

    /// The equivalent vector problem measured with `U = B ⊗ A`.
    pub fn to_vector(&self) -> VectorInstance {
        let u = kron(&self.b, &self.a);
        let x0 = vec(&self.x0);
        let y = vec(&self.y);
        VectorInstance {
            a: u,
            y,
            x0,
            seed: self.seed,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.a.nrows(),
            self.a.ncols(),
            self.b.nrows(),
            self.b.ncols(),
        )
    }

    pub fn k(&self) -> usize {
        self.x0.iter().filter(|v| **v != 0.0).count()
    }
}

/// Either instance form, as read back from an instance file.
#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Vector(VectorInstance),
    Kcs(KcsInstance),
}

// Instance file format (whitespace separated, one logical record per line):
//
//   m n k seed
//   [kcs m1 n1 m2 n2]            only for Kronecker instances
//   <matrix rows, row-major>     A (m rows); for kcs: A (m1 rows) then B (m2 rows)
//   y                            m values; for kcs: vec(Y)
//   x0                           n values; for kcs: vec(X0)
//
// Floats are written with Rust's shortest round-trip formatting.

fn push_row(out: &mut String, vals: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in vals {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v:?}").unwrap();
    }
    out.push('\n');
}

fn push_matrix(out: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        push_row(out, m.row(i).iter().copied());
    }
}

impl Instance {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            Instance::Vector(v) => {
                writeln!(out, "{} {} {} {}", v.m(), v.n(), v.k(), v.seed).unwrap();
                push_matrix(&mut out, &v.a);
                push_row(&mut out, v.y.iter().copied());
                push_row(&mut out, v.x0.iter().copied());
            }
            Instance::Kcs(kc) => {
                let (m1, n1, m2, n2) = kc.dims();
                writeln!(out, "{} {} {} {}", m1 * m2, n1 * n2, kc.k(), kc.seed).unwrap();
                writeln!(out, "kcs {m1} {n1} {m2} {n2}").unwrap();
                push_matrix(&mut out, &kc.a);
                push_matrix(&mut out, &kc.b);
                push_row(&mut out, kc.y.iter().copied());
                push_row(&mut out, kc.x0.iter().copied());
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Instance> {
        let mut cur = Lines {
            lines: text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| (i + 1, l))
                .collect(),
            pos: 0,
        };
        let (hl, header) = cur.next()?;
        let h = parse_usizes(header, hl, 4)?;
        let (m, n, k, seed) = (h[0], h[1], h[2], h[3] as u64);

        if let Some(rest) = cur.peek().and_then(|l| l.trim_start().strip_prefix("kcs")) {
            let d = parse_usizes(rest, hl + 1, 4)?;
            cur.pos += 1;
            let (m1, n1, m2, n2) = (d[0], d[1], d[2], d[3]);
            if m1 * m2 != m || n1 * n2 != n {
                return Err(Error::Parse {
                    line: hl + 1,
                    msg: format!("kcs dims {m1}x{n1}, {m2}x{n2} disagree with header {m} {n}"),
                });
            }
            let a = cur.matrix(m1, n1)?;
            let b = cur.matrix(m2, n2)?;
            let y = cur.floats(m)?;
            let x0 = cur.floats(n)?;
            let inst = KcsInstance {
                a,
                b,
                x0: unvec(&x0, n1, n2)?,
                y: unvec(&y, m1, m2)?,
                seed,
            };
            check_k(inst.k(), k)?;
            Ok(Instance::Kcs(inst))
        } else {
            let a = cur.matrix(m, n)?;
            let y = DVector::from_vec(cur.floats(m)?);
            let x0 = DVector::from_vec(cur.floats(n)?);
            let inst = VectorInstance { a, y, x0, seed };
            check_k(inst.k(), k)?;
            Ok(Instance::Vector(inst))
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Instance> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Instance::parse(&text)
    }
}

struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        let last = self.lines.last().map_or(1, |l| l.0);
        let item = self.lines.get(self.pos).copied().ok_or(Error::Parse {
            line: last,
            msg: "unexpected end of file".into(),
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).map(|l| l.1)
    }

    fn floats(&mut self, count: usize) -> Result<Vec<f64>> {
        let (ln, line) = self.next()?;
        parse_floats(line, ln, count)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.floats(cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
}

fn check_k(actual: usize, header: usize) -> Result<()> {
    if actual != header {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header says k = {header} but x0 has {actual} nonzeros"),
        });
    }
    Ok(())
}

fn parse_usizes(line: &str, ln: usize, count: usize) -> Result<Vec<usize>> {
    let v = line
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>().map_err(|e| Error::Parse {
                line: ln,
                msg: format!("{t:?}: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if v.len() != count {
        return Err(Error::Parse {
            line: ln,
            msg: format!("expected {count} integers, found {}", v.len()),
        });
    }
    Ok(v)
}

fn parse_floats(line: &str, ln: usize, count: usize) -> Result<Vec<f64>> {
    let v = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|e| Error::Parse {
                line: ln,
                msg: format!("{t:?}: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if v.len() != count {
        return Err(Error::Parse {
            line: ln,
            msg: format!("expected {count} values, found {}", v.len()),
        });
    }
    Ok(v)
}
