//! Brascamp–Lieb data `(B, p)` and their structural checks.
//!
//! A datum is an ambient dimension `d` together with `m` surjections
//! `B_j : R^d -> R^{d_j}` and Lebesgue exponents `p_j ∈ [1, ∞]`. Most of the
//! machinery works with the reciprocal exponents `q_j = 1/p_j`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BlError, Result};
use crate::linalg::{self, Mat};

/// Tolerance on the scaling condition `d = Σ q_j d_j`.
pub const SCALING_TOL: f64 = 1e-12;
/// Tolerance on subcriticality defects.
pub const DEFECT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub map: Mat,
    pub p: f64,
}

impl Factor {
    pub fn dim(&self) -> usize {
        self.map.nrows()
    }

    pub fn q(&self) -> f64 {
        if self.p.is_infinite() {
            0.0
        } else {
            1.0 / self.p
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datum {
    d: usize,
    factors: Vec<Factor>,
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(BlError::Exponent(format!(
            "exponent p = {p} outside the range [1, inf]"
        )));
    }
    Ok(())
}

impl Datum {
    pub fn new(d: usize, factors: Vec<(Mat, f64)>) -> Result<Self> {
        if d == 0 {
            return Err(BlError::Dimension(
                "ambient dimension must be positive".into(),
            ));
        }
        if factors.is_empty() {
            return Err(BlError::Dimension(
                "a datum needs at least one factor".into(),
            ));
        }
        let mut out = Vec::with_capacity(factors.len());
        for (j, (map, p)) in factors.into_iter().enumerate() {
            check_exponent(p)?;
            if map.ncols() != d {
                return Err(BlError::Dimension(format!(
                    "factor {j}: map has {} columns, expected d = {d}",
                    map.ncols()
                )));
            }
            let dj = map.nrows();
            if dj == 0 || dj > d {
                return Err(BlError::Dimension(format!(
                    "factor {j}: target dimension {dj} not in [1, {d}]"
                )));
            }
            if linalg::numerical_rank(&map) != dj {
                return Err(BlError::Invalid(format!(
                    "factor {j}: map is not surjective (rank < {dj})"
                )));
            }
            out.push(Factor { map, p });
        }
        Ok(Datum { d, factors: out })
    }

    /// Datum whose maps are the linear functionals `x ↦ ⟨x, v_j⟩`.
    pub fn rank_one(vectors: &[Vec<f64>], exponents: &[f64]) -> Result<Self> {
        if vectors.len() != exponents.len() || vectors.is_empty() {
            return Err(BlError::Dimension(
                "vectors/exponents length mismatch".into(),
            ));
        }
        let d = vectors[0].len();
        let factors = vectors
            .iter()
            .zip(exponents)
            .map(|(v, &p)| {
                if v.len() != d {
                    return Err(BlError::Dimension("vectors of unequal length".into()));
                }
                Ok((Mat::from_row_slice(1, d, v), p))
            })
            .collect::<Result<Vec<_>>>()?;
        Datum::new(d, factors)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn map(&self, j: usize) -> &Mat {
        &self.factors[j].map
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(Factor::dim).collect()
    }

    pub fn exponents(&self) -> Vec<f64> {
        self.factors.iter().map(|f| f.p).collect()
    }

    pub fn q(&self) -> Vec<f64> {
        self.factors.iter().map(Factor::q).collect()
    }

    pub fn is_rank_one(&self) -> bool {
        self.factors.iter().all(|f| f.dim() == 1)
    }

    /// Same maps, different exponents.
    pub fn with_exponents(&self, exponents: &[f64]) -> Result<Self> {
        if exponents.len() != self.m() {
            return Err(BlError::Dimension("exponent count mismatch".into()));
        }
        Datum::new(
            self.d,
            self.factors
                .iter()
                .zip(exponents)
                .map(|(f, &p)| (f.map.clone(), p))
                .collect(),
        )
    }

    /// Errors unless every exponent lies in the open interval `(1, 2)`.
    pub fn require_open_unit_two(&self) -> Result<()> {
        for (j, f) in self.factors.iter().enumerate() {
            if !(f.p > 1.0 && f.p < 2.0) {
                return Err(BlError::Exponent(format!(
                    "factor {j}: p = {} must lie strictly between 1 and 2",
                    f.p
                )));
            }
        }
        Ok(())
    }
}

/// Orthonormal rows spanning a subspace of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    d: usize,
    rows: Mat,
}

impl SubspaceBasis {
    /// Orthonormalizes the span of the given rows.
    pub fn span(rows: &Mat) -> Self {
        SubspaceBasis {
            d: rows.ncols(),
            rows: linalg::row_space_basis(rows),
        }
    }

    pub fn from_orthonormal(rows: Mat) -> Result<Self> {
        let k = rows.nrows();
        let gram = &rows * rows.transpose();
        if (gram - Mat::identity(k, k)).abs().max() > 1e-12 {
            return Err(BlError::Invalid("basis rows are not orthonormal".into()));
        }
        Ok(SubspaceBasis {
            d: rows.ncols(),
            rows,
        })
    }

    pub fn zero(d: usize) -> Self {
        SubspaceBasis {
            d,
            rows: Mat::zeros(0, d),
        }
    }

    pub fn full(d: usize) -> Self {
        SubspaceBasis {
            d,
            rows: Mat::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.nrows()
    }

    pub fn ambient(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> &Mat {
        &self.rows
    }

    pub fn projection(&self) -> Mat {
        self.rows.transpose() * &self.rows
    }

    pub fn same_subspace(&self, other: &SubspaceBasis) -> bool {
        self.dim() == other.dim() && (self.projection() - other.projection()).abs().max() < 1e-8
    }
}

impl Serialize for SubspaceBasis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            dim: usize,
            ambient: usize,
            basis: Vec<Vec<f64>>,
        }
        Repr {
            dim: self.dim(),
            ambient: self.d,
            basis: linalg::mat_to_rows(&self.rows),
        }
        .serialize(s)
    }
}

/// `d − Σ_j q_j d_j`.
pub fn scaling_defect(datum: &Datum) -> f64 {
    datum.d as f64
        - datum
            .factors
            .iter()
            .map(|f| f.q() * f.dim() as f64)
            .sum::<f64>()
}

/// `Σ_j q_j dim(B_j V) − dim V`.
pub fn subcriticality_defect(datum: &Datum, v: &SubspaceBasis) -> f64 {
    let k = v.dim();
    if k == 0 {
        return 0.0;
    }
    let vt = v.rows.transpose();
    let image_dims: f64 = datum
        .factors
        .iter()
        .map(|f| {
            // v is orthonormal, so the threshold is relative to ‖B_j‖
            let tol = linalg::RANK_TOL * linalg::op_norm(&f.map);
            f.q() * linalg::rank_above(&(&f.map * &vt), tol) as f64
        })
        .sum();
    image_dims - k as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateOpts {
    pub max_dim: usize,
    pub random_per_dim: usize,
    pub seed: u64,
}

impl CandidateOpts {
    pub fn for_datum(datum: &Datum) -> Self {
        CandidateOpts {
            max_dim: datum.d(),
            random_per_dim: 200,
            seed: 0,
        }
    }
}

const MAX_ROW_SUBSETS: usize = 50_000;

fn push_unique(out: &mut Vec<SubspaceBasis>, cand: SubspaceBasis) {
    if !out.iter().any(|s| s.same_subspace(&cand)) {
        out.push(cand);
    }
}

/// Candidate subspaces for the subcriticality test: row spans of subsets of
/// all map rows, kernel intersections of subfamilies, and seeded random
/// subspaces, deduplicated by projection.
pub fn candidate_subspaces(
    datum: &Datum,
    opts: CandidateOpts,
) -> std::vec::IntoIter<SubspaceBasis> {
    let d = datum.d;
    let max_dim = opts.max_dim.min(d);
    let mut out = vec![SubspaceBasis::zero(d)];

    let all_rows: Vec<_> = datum
        .factors
        .iter()
        .flat_map(|f| (0..f.dim()).map(move |i| f.map.row(i).into_owned()))
        .collect();

    // row-subset spans, smallest subsets first
    let mut visited = 0usize;
    'sizes: for size in 1..=all_rows.len().min(max_dim.max(1)) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            visited += 1;
            if visited > MAX_ROW_SUBSETS {
                break 'sizes;
            }
            let rows: Vec<_> = idx.iter().map(|&i| all_rows[i].clone()).collect();
            let span = SubspaceBasis::span(&Mat::from_rows(&rows));
            if span.dim() > 0 && span.dim() <= max_dim {
                push_unique(&mut out, span);
            }
            // next combination
            let n = all_rows.len();
            let mut i = size;
            while i > 0 && idx[i - 1] == n - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for k in i..size {
                idx[k] = idx[k - 1] + 1;
            }
        }
    }

    // kernel intersections
    let m = datum.m().min(16);
    for mask in 1u32..(1u32 << m) {
        let stacked: Vec<_> = (0..m)
            .filter(|j| mask & (1 << j) != 0)
            .flat_map(|j| {
                let f = &datum.factors[j];
                (0..f.dim()).map(move |i| f.map.row(i).into_owned())
            })
            .collect();
        let kernel = linalg::null_space_basis(&Mat::from_rows(&stacked));
        if kernel.nrows() > 0 && kernel.nrows() <= max_dim {
            push_unique(&mut out, SubspaceBasis { d, rows: kernel });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for k in 1..=max_dim {
        if k == d {
            push_unique(&mut out, SubspaceBasis::full(d));
            continue;
        }
        for _ in 0..opts.random_per_dim {
            let q = linalg::random_orthogonal(d, &mut rng);
            let rows = q.rows(0, k).into_owned();
            // random subspaces are generic, no need to dedup against each other
            out.push(SubspaceBasis { d, rows });
        }
    }
    out.into_iter()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Finiteness {
    InfiniteWithWitness,
    FeasibleOnCandidates,
    CertifiedFinite,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityVerdict {
    pub tag: Finiteness,
    pub scaling_defect: f64,
    /// Smallest subcriticality defect over the nonzero candidates.
    pub worst_defect: f64,
    pub witness: Option<SubspaceBasis>,
    pub candidates_checked: usize,
}

pub fn classify_finiteness(datum: &Datum, opts: CandidateOpts) -> FeasibilityVerdict {
    let sd = scaling_defect(datum);
    let mut worst = f64::INFINITY;
    let mut worst_space = None;
    let mut checked = 0;
    for v in candidate_subspaces(datum, opts) {
        if v.dim() == 0 {
            continue;
        }
        checked += 1;
        let def = subcriticality_defect(datum, &v);
        if def < worst {
            worst = def;
            worst_space = Some(v);
        }
    }
    if sd.abs() > SCALING_TOL {
        return FeasibilityVerdict {
            tag: Finiteness::InfiniteWithWitness,
            scaling_defect: sd,
            worst_defect: worst,
            witness: Some(SubspaceBasis::full(datum.d)),
            candidates_checked: checked,
        };
    }
    if worst < -DEFECT_TOL {
        return FeasibilityVerdict {
            tag: Finiteness::InfiniteWithWitness,
            scaling_defect: sd,
            worst_defect: worst,
            witness: worst_space,
            candidates_checked: checked,
        };
    }
    let tag = if datum.is_rank_one() {
        Finiteness::CertifiedFinite
    } else {
        Finiteness::FeasibleOnCandidates
    };
    FeasibilityVerdict {
        tag,
        scaling_defect: sd,
        worst_defect: worst,
        witness: None,
        candidates_checked: checked,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Simplicity {
    Simple,
    NotSimpleWithWitness,
    SimpleOnCandidates,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimplicityVerdict {
    pub tag: Simplicity,
    /// Smallest defect over nonzero proper candidate subspaces (∞ if none).
    pub min_proper_defect: f64,
    pub witness: Option<SubspaceBasis>,
}

pub fn classify_simplicity(datum: &Datum, opts: CandidateOpts) -> SimplicityVerdict {
    let sd = scaling_defect(datum);
    let mut min_def = f64::INFINITY;
    let mut witness = None;
    for v in candidate_subspaces(datum, opts) {
        if v.dim() == 0 || v.dim() == datum.d {
            continue;
        }
        let def = subcriticality_defect(datum, &v);
        if def < min_def {
            min_def = def;
            witness = Some(v);
        }
    }
    if sd.abs() > SCALING_TOL {
        return SimplicityVerdict {
            tag: Simplicity::NotSimpleWithWitness,
            min_proper_defect: min_def,
            witness: Some(SubspaceBasis::full(datum.d)),
        };
    }
    if min_def <= DEFECT_TOL {
        return SimplicityVerdict {
            tag: Simplicity::NotSimpleWithWitness,
            min_proper_defect: min_def,
            witness,
        };
    }
    let tag = if datum.is_rank_one() {
        Simplicity::Simple
    } else {
        Simplicity::SimpleOnCandidates
    };
    SimplicityVerdict {
        tag,
        min_proper_defect: min_def,
        witness: None,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GeometricCheck {
    pub geometric: bool,
    /// max_j ‖B_j B_jᵀ − I‖
    pub isometry_residual: f64,
    /// ‖Σ_j q_j B_jᵀ B_j − I‖
    pub frame_residual: f64,
}

pub fn is_geometric(datum: &Datum, tol: f64) -> GeometricCheck {
    let d = datum.d;
    let mut iso: f64 = 0.0;
    let mut frame = Mat::zeros(d, d);
    for f in &datum.factors {
        let dj = f.dim();
        iso = iso.max(linalg::sym_op_norm(
            &(&f.map * f.map.transpose() - Mat::identity(dj, dj)),
        ));
        frame += f.map.transpose() * &f.map * f.q();
    }
    let frame_residual = linalg::sym_op_norm(&(frame - Mat::identity(d, d)));
    GeometricCheck {
        geometric: iso <= tol && frame_residual <= tol,
        isometry_residual: iso,
        frame_residual,
    }
}

/// Builds a datum from exponents in the `q`-convention (`f_j^{q_j}` inside
/// the integral, `L^1` norms outside). A nonnegative input `f` there is the
/// input `f^{p_j}` here; both formulations share the same optimal constant.
pub fn from_q_convention(maps: Vec<Mat>, q: &[f64]) -> Result<Datum> {
    if maps.len() != q.len() {
        return Err(BlError::Dimension("maps/exponents length mismatch".into()));
    }
    let d = maps.first().map(|m| m.ncols()).unwrap_or(0);
    let factors = maps
        .into_iter()
        .zip(q)
        .map(|(m, &qj)| {
            if !(0.0..=1.0).contains(&qj) {
                return Err(BlError::Exponent(format!("q = {qj} outside [0, 1]")));
            }
            let p = if qj == 0.0 { f64::INFINITY } else { 1.0 / qj };
            Ok((m, p))
        })
        .collect::<Result<Vec<_>>>()?;
    Datum::new(d, factors)
}

// ---- JSON file schema ------------------------------------------------------

/// Exponent as it appears in files: a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FileExponent(pub f64);

impl Serialize for FileExponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for FileExponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(FileExponent(x)),
            Raw::Str(s) if s == "inf" || s == "infinity" => Ok(FileExponent(f64::INFINITY)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "exponent must be a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorFile {
    pub matrix: Vec<Vec<f64>>,
    pub p: FileExponent,
    /// Optional declared target dimension `d_j`; checked against the rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumFile {
    pub d: usize,
    pub factors: Vec<FactorFile>,
}

impl DatumFile {
    pub fn into_datum(self) -> Result<Datum> {
        let d = self.d;
        let mut factors = Vec::with_capacity(self.factors.len());
        for (j, f) in self.factors.into_iter().enumerate() {
            let field = format!("factors[{j}]");
            if let Some(dim) = f.dim {
                if dim != f.matrix.len() {
                    return Err(BlError::config(
                        format!("{field}.matrix"),
                        format!("has {} rows but dim = {dim}", f.matrix.len()),
                    ));
                }
            }
            if f.matrix.iter().any(|r| r.len() != d) {
                return Err(BlError::config(
                    format!("{field}.matrix"),
                    format!("every row must have d = {d} entries"),
                ));
            }
            check_exponent(f.p.0)
                .map_err(|e| BlError::config(format!("{field}.p"), e.to_string()))?;
            factors.push((linalg::mat_from_rows(&f.matrix, d)?, f.p.0));
        }
        Datum::new(d, factors)
    }
}

impl From<&Datum> for DatumFile {
    fn from(datum: &Datum) -> Self {
        DatumFile {
            d: datum.d,
            factors: datum
                .factors
                .iter()
                .map(|f| FactorFile {
                    matrix: linalg::mat_to_rows(&f.map),
                    p: FileExponent(f.p),
                    dim: None,
                })
                .collect(),
        }
    }
}

impl Serialize for Datum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DatumFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Datum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        DatumFile::deserialize(d)?
            .into_datum()
            .map_err(serde::de::Error::custom)
    }
}

/// True when every `d` of the vectors are linearly independent.
pub fn general_position(vectors: &[Vec<f64>]) -> bool {
    let Some(first) = vectors.first() else {
        return true;
    };
    let d = first.len();
    if vectors.len() < d {
        return linalg::numerical_rank(&Mat::from_fn(vectors.len(), d, |i, j| vectors[i][j]))
            == vectors.len();
    }
    let mut idx: Vec<usize> = (0..d).collect();
    let n = vectors.len();
    loop {
        let m = Mat::from_fn(d, d, |i, j| vectors[idx[i]][j]);
        if linalg::numerical_rank(&m) < d {
            return false;
        }
        let mut i = d;
        while i > 0 && idx[i - 1] == n - d + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return true;
        }
        idx[i - 1] += 1;
        for k in i..d {
            idx[k] = idx[k - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn opts(d: &Datum) -> CandidateOpts {
        CandidateOpts {
            random_per_dim: 50,
            ..CandidateOpts::for_datum(d)
        }
    }

    #[test]
    fn scaling_defect_examples() {
        assert!(scaling_defect(&catalog::loomis_whitney()).abs() < 1e-15);
        assert!(scaling_defect(&catalog::holder_pair(2.0, 2.0)).abs() < 1e-15);
        assert!(scaling_defect(&catalog::frame_120()).abs() < 1e-12);
    }

    #[test]
    fn subcriticality_examples() {
        let lw = catalog::loomis_whitney();
        let e1 = SubspaceBasis::span(&Mat::from_row_slice(1, 2, &[1.0, 0.0]));
        assert!(subcriticality_defect(&lw, &e1).abs() < 1e-15);

        let h = catalog::holder_pair(2.0, 2.0);
        assert!(subcriticality_defect(&h, &SubspaceBasis::full(1)).abs() < 1e-15);

        let f = catalog::frame_120();
        let v1 = SubspaceBasis::span(f.map(0));
        assert!((subcriticality_defect(&f, &v1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn candidates_loomis_whitney() {
        let lw = catalog::loomis_whitney();
        let c: Vec<_> = candidate_subspaces(
            &lw,
            CandidateOpts {
                max_dim: 2,
                random_per_dim: 0,
                seed: 0,
            },
        )
        .collect();
        assert_eq!(c.len(), 4);
        let dims: Vec<_> = c.iter().map(SubspaceBasis::dim).collect();
        assert_eq!(dims.iter().filter(|&&k| k == 1).count(), 2);
        assert!(dims.contains(&0) && dims.contains(&2));

        let h = catalog::holder_pair(2.0, 2.0);
        let c: Vec<_> = candidate_subspaces(
            &h,
            CandidateOpts {
                max_dim: 1,
                random_per_dim: 0,
                seed: 0,
            },
        )
        .collect();
        assert_eq!(c.len(), 2);

        let f = catalog::frame_120();
        let ones = candidate_subspaces(
            &f,
            CandidateOpts {
                max_dim: 2,
                random_per_dim: 0,
                seed: 0,
            },
        )
        .filter(|v| v.dim() == 1)
        .count();
        assert!(ones >= 3);
    }

    #[test]
    fn finiteness_verdicts() {
        let lw = catalog::loomis_whitney();
        assert_eq!(
            classify_finiteness(&lw, opts(&lw)).tag,
            Finiteness::CertifiedFinite
        );

        let lw2 = lw.with_exponents(&[2.0, 2.0]).unwrap();
        let v = classify_finiteness(&lw2, opts(&lw2));
        assert_eq!(v.tag, Finiteness::InfiniteWithWitness);
        assert!((v.scaling_defect - 1.0).abs() < 1e-15);

        let f = catalog::frame_120();
        assert_eq!(
            classify_finiteness(&f, opts(&f)).tag,
            Finiteness::CertifiedFinite
        );

        let sup = catalog::supercritical_line();
        let v = classify_finiteness(&sup, opts(&sup));
        assert_eq!(v.tag, Finiteness::InfiniteWithWitness);
        assert!(v.worst_defect < -0.4);
        assert_eq!(v.witness.unwrap().dim(), 1);

        let mixed = catalog::random_planes(3, 4, 11);
        assert_eq!(
            classify_finiteness(&mixed, opts(&mixed)).tag,
            Finiteness::FeasibleOnCandidates
        );
    }

    #[test]
    fn simplicity_verdicts() {
        let f = catalog::frame_120();
        let v = classify_simplicity(&f, opts(&f));
        assert_eq!(v.tag, Simplicity::Simple);
        assert!(v.min_proper_defect >= 1.0 / 3.0 - 1e-12);

        let lw = catalog::loomis_whitney();
        let v = classify_simplicity(&lw, opts(&lw));
        assert_eq!(v.tag, Simplicity::NotSimpleWithWitness);
        assert!(v.min_proper_defect.abs() < 1e-12);

        let h = catalog::holder_pair(2.0, 2.0);
        assert_eq!(classify_simplicity(&h, opts(&h)).tag, Simplicity::Simple);

        let mixed = catalog::random_planes(3, 4, 11);
        assert_eq!(
            classify_simplicity(&mixed, opts(&mixed)).tag,
            Simplicity::SimpleOnCandidates
        );
    }

    #[test]
    fn geometric_examples() {
        assert!(is_geometric(&catalog::loomis_whitney(), 1e-12).geometric);
        let g = is_geometric(
            &catalog::loomis_whitney()
                .with_exponents(&[2.0, 2.0])
                .unwrap(),
            1e-12,
        );
        assert!(!g.geometric);
        assert!((g.frame_residual - 0.5).abs() < 1e-15);
        assert!(is_geometric(&catalog::frame_120(), 1e-12).geometric);
    }

    #[test]
    fn q_convention() {
        let maps = vec![Mat::identity(1, 1), Mat::identity(1, 1)];
        let d = from_q_convention(maps.clone(), &[0.5, 0.5]).unwrap();
        assert_eq!(d.exponents(), vec![2.0, 2.0]);
        let d = from_q_convention(maps.clone(), &[0.0, 1.0]).unwrap();
        assert!(d.exponents()[0].is_infinite());
        assert!(from_q_convention(maps, &[1.5, 0.5]).is_err());
        let three = vec![Mat::identity(1, 1); 3];
        let d = from_q_convention(three, &[2.0 / 3.0; 3]).unwrap();
        assert!(d.exponents().iter().all(|&p| (p - 1.5).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_data() {
        assert!(Datum::new(2, vec![(Mat::from_row_slice(1, 2, &[0.0, 0.0]), 2.0)]).is_err());
        assert!(Datum::new(2, vec![(Mat::from_row_slice(1, 2, &[1.0, 0.0]), 0.5)]).is_err());
        assert!(Datum::new(2, vec![(Mat::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), 2.0)]).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let text = r#"{"d": 2, "factors": [{"matrix": [[0, 1]], "p": 1}, {"matrix": [[1, 0]], "p": "inf"}]}"#;
        let d: Datum = serde_json::from_str(text).unwrap();
        assert!(d.exponents()[1].is_infinite());
        let back: Datum = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);

        let bad = r#"{"d": 2, "factors": [{"matrix": [[0, 1]], "p": 1, "dim": 2}]}"#;
        let err = serde_json::from_str::<DatumFile>(bad)
            .unwrap()
            .into_datum()
            .unwrap_err();
        assert!(err.to_string().contains("factors[0].matrix"));
        let bad_p = r#"{"d": 1, "factors": [{"matrix": [[1]], "p": 0.5}]}"#;
        let err = serde_json::from_str::<DatumFile>(bad_p)
            .unwrap()
            .into_datum()
            .unwrap_err();
        assert!(err.to_string().contains("[1, inf]"));
    }

    #[test]
    fn general_position_detection() {
        assert!(general_position(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0]
        ]));
        assert!(!general_position(&[
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![1.0, 1.0]
        ]));
    }
}
