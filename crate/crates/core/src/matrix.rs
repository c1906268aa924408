//! Dense row-major matrices and their norms, plus the text interchange
//! format used by the CLI.

use crate::error::{Error, Result};
use crate::lapack::{self, Trans};
use std::fmt::Write as _;
use std::path::Path;

/// Rectangular real matrix stored row-major. Every entry is finite; this is
/// checked at construction and on file ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// The four norms used throughout: Frobenius, entrywise max, largest row
/// l2 norm, largest column l2 norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub frobenius: f64,
    pub entrywise_max: f64,
    pub two_inf: f64,
    pub two_inf_transpose: f64,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix dimensions must be positive, got {rows} x {cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "entry count {} does not match {rows} x {cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data).expect("from_fn produced an invalid matrix")
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn min_dim(&self) -> usize {
        self.rows.min(self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(v.is_finite());
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Column-major copy of the entries (LAPACK layout).
    pub(crate) fn to_colmajor(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[i + j * self.rows] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub(crate) fn from_colmajor(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        assert_eq!(data.len(), rows * cols);
        let mut out = vec![0.0; rows * cols];
        for j in 0..cols {
            for i in 0..rows {
                out[i * cols + j] = data[i + j * rows];
            }
        }
        Self::new(rows, cols, out)
    }

    /// op(self) * op(other) where `ta`/`tb` request transposition.
    pub fn mul(&self, ta: bool, other: &Self, tb: bool) -> Result<Self> {
        let (m, ka) = if ta {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        };
        let (kb, n) = if tb {
            (other.cols, other.rows)
        } else {
            (other.rows, other.cols)
        };
        if ka != kb {
            return Err(Error::Dimension(format!(
                "product inner dimensions {ka} != {kb}"
            )));
        }
        // A row-major buffer read column-major is the transpose, so the
        // product is computed as C^T = op(B)^T op(A)^T on the raw buffers.
        let mut c = vec![0.0; m * n];
        lapack::gemm(
            if tb { Trans::Yes } else { Trans::No },
            if ta { Trans::Yes } else { Trans::No },
            &other.data,
            other.cols,
            other.rows,
            &self.data,
            self.cols,
            self.rows,
            1.0,
            0.0,
            &mut c,
        )?;
        Self::new(m, n, c)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.mul(false, other, false)
    }

    /// self - other.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self::new(self.rows, self.cols, data)
    }

    pub fn scale(&self, s: f64) -> Self {
        let data = self.data.iter().map(|a| a * s).collect();
        Self::new(self.rows, self.cols, data).expect("scaling by a finite factor")
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "shape mismatch: {} x {} vs {} x {}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn norms(&self) -> Norms {
        // Flat row-major accumulation, matching the elementwise definition.
        let mut fro2 = 0.0f64;
        let mut emax = 0.0f64;
        let mut two_inf = 0.0f64;
        let mut col2 = vec![0.0f64; self.cols];
        for i in 0..self.rows {
            let mut row2 = 0.0f64;
            for j in 0..self.cols {
                let x = self.data[i * self.cols + j];
                fro2 += x * x;
                row2 += x * x;
                col2[j] += x * x;
                emax = emax.max(x.abs());
            }
            two_inf = two_inf.max(row2);
        }
        let two_inf_t = col2.iter().cloned().fold(0.0f64, f64::max);
        Norms {
            frobenius: fro2.sqrt(),
            entrywise_max: emax,
            two_inf: two_inf.sqrt(),
            two_inf_transpose: two_inf_t.sqrt(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.norms().frobenius
    }

    pub fn entrywise_max(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// || self - other ||_inf without materializing the difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// || self - other ||_F without materializing the difference.
    pub fn frobenius_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut s = 0.0;
        for (a, b) in self.data.iter().zip(&other.data) {
            let d = a - b;
            s += d * d;
        }
        Ok(s.sqrt())
    }

    /// Serialize in the text interchange format: a "rows cols" header line,
    /// then one line per row with entries at full round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.rows * self.cols * 24 + 16);
        let _ = writeln!(out, "{} {}", self.rows, self.cols);
        for i in 0..self.rows {
            let row = self.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{:.16e}", v);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parse the text interchange format. `line_offset` shifts reported line
    /// numbers when the matrix block is embedded in a larger file.
    pub fn from_text_lines<'a>(
        lines: &mut impl Iterator<Item = (usize, &'a str)>,
    ) -> Result<Self> {
        let (lineno, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing matrix header line"))?;
        let mut it = header.split_whitespace();
        let rows: usize = it
            .next()
            .ok_or_else(|| Error::parse(lineno, "expected 'rows cols'"))?
            .parse()
            .map_err(|_| Error::parse(lineno, "invalid row count"))?;
        let cols: usize = it
            .next()
            .ok_or_else(|| Error::parse(lineno, "expected 'rows cols'"))?
            .parse()
            .map_err(|_| Error::parse(lineno, "invalid column count"))?;
        if it.next().is_some() {
            return Err(Error::parse(lineno, "trailing tokens after 'rows cols'"));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (lineno, line) = lines
                .next()
                .ok_or_else(|| Error::parse(lineno, "matrix body ended early"))?;
            let mut count = 0;
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("invalid number '{tok}'")))?;
                data.push(v);
                count += 1;
            }
            if count != cols {
                return Err(Error::parse(
                    lineno,
                    format!("expected {cols} entries, found {count}"),
                ));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        Self::from_text_lines(&mut lines)
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
