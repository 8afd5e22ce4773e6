//! JSON documents for zippers, measures and spectra. Complex numbers are `[re, im]`
//! pairs and matrices are row-major nested arrays of them.

use crate::error::{Error, Result};
use crate::matrix_core::{zeros, CMatrix};
use crate::measures::{Atom, MatrixMeasure};
use crate::scattering::build_block;
use crate::zipper::{Flavor, SpectralPoint, SpectrumResult, Zipper};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type ComplexPair = [f64; 2];
pub type MatrixDoc = Vec<Vec<ComplexPair>>;

pub fn matrix_to_doc(m: &CMatrix) -> MatrixDoc {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_doc(doc: &MatrixDoc, l: usize, what: &str) -> Result<CMatrix> {
    if doc.len() != l || doc.iter().any(|r| r.len() != l) {
        return Err(Error::InvalidInput(format!("{what} must be a {l}×{l} matrix")));
    }
    let mut m = zeros(l, l);
    for (i, row) in doc.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            m[(i, j)] = Complex64::new(c[0], c[1]);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDoc {
    pub n: usize,
    pub alpha: MatrixDoc,
    pub u: MatrixDoc,
    pub v: MatrixDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipperDoc {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub flavor: String,
    #[serde(rename = "boundary_U", default, skip_serializing_if = "Option::is_none")]
    pub boundary_u: Option<MatrixDoc>,
    #[serde(rename = "boundary_V", default, skip_serializing_if = "Option::is_none")]
    pub boundary_v: Option<MatrixDoc>,
    pub blocks: Vec<BlockDoc>,
}

impl ZipperDoc {
    pub fn from_zipper(z: &Zipper) -> ZipperDoc {
        ZipperDoc {
            l: z.l(),
            n: z.n(),
            flavor: z.flavor().name().to_string(),
            boundary_u: z.boundary_u().map(matrix_to_doc),
            boundary_v: z.boundary_v().map(matrix_to_doc),
            blocks: z
                .blocks()
                .map(|(n, b)| BlockDoc { n, alpha: matrix_to_doc(b.alpha()), u: matrix_to_doc(b.u()), v: matrix_to_doc(b.v()) })
                .collect(),
        }
    }

    pub fn to_zipper(&self) -> Result<Zipper> {
        let flavor =
            Flavor::parse(&self.flavor).ok_or_else(|| Error::InvalidInput(format!("unknown flavor {:?}", self.flavor)))?;
        let l = self.l;
        let u = self.boundary_u.as_ref().map(|m| matrix_from_doc(m, l, "boundary_U")).transpose()?;
        let v = self.boundary_v.as_ref().map(|m| matrix_from_doc(m, l, "boundary_V")).transpose()?;
        let mut blocks = BTreeMap::new();
        for b in &self.blocks {
            let block = build_block(
                &matrix_from_doc(&b.alpha, l, "alpha")?,
                &matrix_from_doc(&b.u, l, "u")?,
                &matrix_from_doc(&b.v, l, "v")?,
                0.0,
            )?;
            if blocks.insert(b.n, block).is_some() {
                return Err(Error::InvalidInput(format!("block {} given twice", b.n)));
            }
        }
        Zipper::new(flavor, self.n, u, v, blocks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomDoc {
    pub xi: ComplexPair,
    pub weight: MatrixDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDoc {
    #[serde(rename = "L")]
    pub l: usize,
    pub atoms: Vec<AtomDoc>,
}

impl MeasureDoc {
    pub fn from_measure(mu: &MatrixMeasure) -> MeasureDoc {
        MeasureDoc {
            l: mu.l(),
            atoms: mu.atoms().iter().map(|a| AtomDoc { xi: [a.xi.re, a.xi.im], weight: matrix_to_doc(&a.weight) }).collect(),
        }
    }

    pub fn to_measure(&self) -> Result<MatrixMeasure> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Ok(Atom { xi: Complex64::new(a.xi[0], a.xi[1]), weight: matrix_from_doc(&a.weight, self.l, "weight")? }))
            .collect::<Result<Vec<_>>>()?;
        MatrixMeasure::new(self.l, atoms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPointDoc {
    pub theta: f64,
    pub multiplicity: usize,
}

pub fn spectrum_to_doc(s: &SpectrumResult) -> Vec<SpectralPointDoc> {
    s.points.iter().map(|p| SpectralPointDoc { theta: p.theta, multiplicity: p.multiplicity }).collect()
}

pub fn spectrum_from_doc(doc: &[SpectralPointDoc]) -> SpectrumResult {
    SpectrumResult { points: doc.iter().map(|p| SpectralPoint { theta: p.theta, multiplicity: p.multiplicity }).collect() }
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })
}

fn render<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

pub fn zipper_to_json(z: &Zipper) -> String {
    render(&ZipperDoc::from_zipper(z))
}

pub fn zipper_from_json(text: &str) -> Result<Zipper> {
    parse::<ZipperDoc>(text)?.to_zipper()
}

pub fn measure_to_json(mu: &MatrixMeasure) -> String {
    render(&MeasureDoc::from_measure(mu))
}

pub fn measure_from_json(text: &str) -> Result<MatrixMeasure> {
    parse::<MeasureDoc>(text)?.to_measure()
}

pub fn spectrum_to_json(s: &SpectrumResult) -> String {
    render(&spectrum_to_doc(s))
}

pub fn spectrum_from_json(text: &str) -> Result<SpectrumResult> {
    Ok(spectrum_from_doc(&parse::<Vec<SpectralPointDoc>>(text)?))
}

/// Serializes any report structure with the same conventions.
pub fn to_json<T: Serialize>(value: &T) -> String {
    render(value)
}
