//! The search subspace of a boosting step.
//!
//! Only outer-step directions persist between boosting steps; they live in a
//! [`DirectionBuffer`] of capacity `M`. Anchor, momentum and gradient
//! directions are rebuilt every step as unit vectors and never count toward
//! `M`.

use std::collections::VecDeque;

use log::{debug, warn};
use thiserror::Error;

use crate::linalg::{axpy, dot, norm, scaled, sub};

/// Transient directions shorter than this are dropped from the subspace.
pub const MIN_DIRECTION_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubspaceError {
    #[error("direction buffer capacity must be at least 1")]
    ZeroCapacity,
    #[error("anchor period must be at least 1")]
    ZeroPeriod,
    #[error("cannot replace the newest direction of an empty buffer")]
    EmptyBuffer,
    #[error("direction has length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("direction contains non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Added,
    /// The buffer was full; the oldest direction was evicted.
    Evicted,
    /// The direction had zero norm and was not stored.
    SkippedZero,
}

/// FIFO of at most `capacity` directions, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionBuffer {
    dirs: VecDeque<Vec<f64>>,
    capacity: usize,
    dim: usize,
}

impl DirectionBuffer {
    pub fn new(capacity: usize, dim: usize) -> Result<Self, SubspaceError> {
        if capacity == 0 {
            return Err(SubspaceError::ZeroCapacity);
        }
        Ok(Self {
            dirs: VecDeque::with_capacity(capacity + 1),
            capacity,
            dim,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn newest(&self) -> Option<&[f64]> {
        self.dirs.back().map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.dirs.iter().map(Vec::as_slice)
    }

    fn check(&self, dir: &[f64]) -> Result<(), SubspaceError> {
        if dir.len() != self.dim {
            return Err(SubspaceError::Length {
                expected: self.dim,
                got: dir.len(),
            });
        }
        if !crate::linalg::all_finite(dir) {
            return Err(SubspaceError::NonFinite);
        }
        Ok(())
    }

    /// Append `dir` as the newest direction, evicting the oldest when the
    /// buffer would exceed its capacity. Zero vectors are not stored.
    pub fn push(&mut self, dir: Vec<f64>) -> Result<PushOutcome, SubspaceError> {
        self.check(&dir)?;
        if dir.iter().all(|&v| v == 0.0) {
            warn!("skipping zero-norm direction");
            return Ok(PushOutcome::SkippedZero);
        }
        self.dirs.push_back(dir);
        if self.dirs.len() > self.capacity {
            self.dirs.pop_front();
            Ok(PushOutcome::Evicted)
        } else {
            Ok(PushOutcome::Added)
        }
    }

    pub fn replace_newest(&mut self, dir: Vec<f64>) -> Result<(), SubspaceError> {
        self.check(&dir)?;
        match self.dirs.back_mut() {
            Some(slot) => {
                *slot = dir;
                Ok(())
            }
            None => Err(SubspaceError::EmptyBuffer),
        }
    }
}

/// A past parameter vector refreshed every `period` boosting steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub point: Vec<f64>,
    pub period: usize,
}

impl Anchor {
    pub fn new(point: Vec<f64>, period: usize) -> Result<Self, SubspaceError> {
        if period == 0 {
            return Err(SubspaceError::ZeroPeriod);
        }
        Ok(Self { point, period })
    }
}

/// Reset every anchor whose period divides the 1-based boost index `k` to
/// `x`. Returns how many anchors were reset.
pub fn update_anchors(anchors: &mut [Anchor], k: usize, x: &[f64]) -> usize {
    let mut reset = 0;
    for anchor in anchors.iter_mut().filter(|a| k.is_multiple_of(a.period)) {
        anchor.point.clear();
        anchor.point.extend_from_slice(x);
        reset += 1;
    }
    reset
}

/// Exponentially weighted sum `m <- mu * m + p` of realized outer steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumDirection {
    pub m: Vec<f64>,
    pub mu: f64,
}

impl MomentumDirection {
    pub fn new(dim: usize, mu: f64) -> Self {
        Self { m: vec![0.0; dim], mu }
    }

    pub fn update(&mut self, p: &[f64]) {
        for (m, p) in self.m.iter_mut().zip(p) {
            *m = self.mu * *m + p;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    History,
    Cumulative,
    Anchor,
    Momentum,
    Gradient,
}

impl ColumnKind {
    pub fn is_transient(self) -> bool {
        matches!(self, ColumnKind::Anchor | ColumnKind::Momentum | ColumnKind::Gradient)
    }
}

/// The `n x d` matrix `P`, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceMatrix {
    columns: Vec<Vec<f64>>,
    kinds: Vec<ColumnKind>,
    dim: usize,
}

impl SubspaceMatrix {
    pub fn from_columns(dim: usize, columns: Vec<(ColumnKind, Vec<f64>)>) -> Result<Self, SubspaceError> {
        let mut out = Self {
            columns: Vec::with_capacity(columns.len()),
            kinds: Vec::with_capacity(columns.len()),
            dim,
        };
        for (kind, col) in columns {
            if col.len() != dim {
                return Err(SubspaceError::Length {
                    expected: dim,
                    got: col.len(),
                });
            }
            out.kinds.push(kind);
            out.columns.push(col);
        }
        Ok(out)
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of columns `d`.
    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn columns(&self) -> impl Iterator<Item = (ColumnKind, &[f64])> {
        self.kinds.iter().copied().zip(self.columns.iter().map(Vec::as_slice))
    }

    /// `P * alpha`
    pub fn combine(&self, alpha: &[f64]) -> Vec<f64> {
        assert_eq!(alpha.len(), self.ncols());
        let mut out = vec![0.0; self.dim];
        for (a, col) in alpha.iter().zip(&self.columns) {
            axpy(*a, col, &mut out);
        }
        out
    }

    /// `x + P * alpha`
    pub fn offset_from(&self, x: &[f64], alpha: &[f64]) -> Vec<f64> {
        assert_eq!(alpha.len(), self.ncols());
        let mut out = x.to_vec();
        for (a, col) in alpha.iter().zip(&self.columns) {
            axpy(*a, col, &mut out);
        }
        out
    }

    /// `P^T * g`
    pub fn project(&self, g: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|c| dot(c, g)).collect()
    }
}

/// Optional enrichments for [`assemble`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Enrichments<'a> {
    pub anchors: &'a [Anchor],
    pub momentum: Option<&'a MomentumDirection>,
    pub gradient: Option<&'a [f64]>,
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n.is_finite() && n >= MIN_DIRECTION_NORM).then(|| scaled(v, 1.0 / n))
}

/// Build `P` for one boosting step at the point `x`.
///
/// Buffer directions are used as stored, oldest first; when `fresh_cumulative`
/// is set the newest one is tagged [`ColumnKind::Cumulative`]. Then come the
/// normalized anchor directions `x - a_i`, the normalized momentum vector and
/// the normalized gradient. Transient directions of negligible norm are
/// dropped.
pub fn assemble(buf: &DirectionBuffer, fresh_cumulative: bool, x: &[f64], extra: Enrichments<'_>) -> SubspaceMatrix {
    let mut cols = Vec::with_capacity(buf.len() + extra.anchors.len() + 2);
    let last = buf.len().wrapping_sub(1);
    for (i, d) in buf.iter().enumerate() {
        let kind = if fresh_cumulative && i == last {
            ColumnKind::Cumulative
        } else {
            ColumnKind::History
        };
        cols.push((kind, d.to_vec()));
    }
    let mut push_unit = |kind: ColumnKind, v: &[f64]| match unit(v) {
        Some(u) => cols.push((kind, u)),
        None => debug!("dropping degenerate {kind:?} direction"),
    };
    for anchor in extra.anchors {
        push_unit(ColumnKind::Anchor, &sub(x, &anchor.point));
    }
    if let Some(md) = extra.momentum {
        push_unit(ColumnKind::Momentum, &md.m);
    }
    if let Some(g) = extra.gradient {
        push_unit(ColumnKind::Gradient, g);
    }
    SubspaceMatrix::from_columns(x.len(), cols).expect("all columns have the parameter length")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn buffer(m: usize) -> DirectionBuffer {
        DirectionBuffer::new(m, 2).unwrap()
    }

    #[test]
    fn push_evicts_oldest() {
        let mut b = buffer(2);
        assert_eq!(b.push(vec![1.0, 0.0]).unwrap(), PushOutcome::Added);
        assert_eq!(b.push(vec![2.0, 0.0]).unwrap(), PushOutcome::Added);
        assert_eq!(b.push(vec![3.0, 0.0]).unwrap(), PushOutcome::Evicted);
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![&[2.0, 0.0][..], &[3.0, 0.0][..]]);

        let mut b = buffer(3);
        b.push(vec![1.0, 1.0]).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn zero_direction_is_skipped() {
        let mut b = buffer(3);
        b.push(vec![1.0, 1.0]).unwrap();
        assert_eq!(b.push(vec![0.0, 0.0]).unwrap(), PushOutcome::SkippedZero);
        assert_eq!(b.len(), 1);
        assert!(matches!(b.push(vec![1.0]), Err(SubspaceError::Length { .. })));
        assert!(matches!(b.push(vec![f64::NAN, 1.0]), Err(SubspaceError::NonFinite)));
        assert!(DirectionBuffer::new(0, 2).is_err());
    }

    #[test]
    fn replace_newest_examples() {
        let mut b = buffer(3);
        assert_eq!(b.replace_newest(vec![1.0, 1.0]), Err(SubspaceError::EmptyBuffer));
        b.push(vec![1.0, 0.0]).unwrap();
        b.push(vec![2.0, 0.0]).unwrap();
        b.replace_newest(vec![3.0, 0.0]).unwrap();
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![&[1.0, 0.0][..], &[3.0, 0.0][..]]);
        b.replace_newest(vec![4.0, 0.0]).unwrap();
        assert_eq!(b.newest(), Some(&[4.0, 0.0][..]));
        assert_eq!(b.len(), 2);

        let mut b = buffer(3);
        b.push(vec![5.0, 6.0]).unwrap();
        let before = b.clone();
        b.replace_newest(vec![5.0, 6.0]).unwrap();
        assert_eq!(b, before);
    }

    #[test]
    fn anchor_schedule() {
        let mut anchors = vec![Anchor::new(vec![0.0], 3).unwrap()];
        let resets: Vec<usize> = (1..=6).filter(|&k| update_anchors(&mut anchors, k, &[k as f64]) == 1).collect();
        assert_eq!(resets, vec![3, 6]);
        assert_eq!(anchors[0].point, vec![6.0]);

        let mut every = vec![Anchor::new(vec![0.0], 1).unwrap()];
        assert!((1..=5).all(|k| update_anchors(&mut every, k, &[0.0]) == 1));

        let mut paper: Vec<Anchor> = [500, 250, 100, 50, 20].iter().map(|&r| Anchor::new(vec![0.0], r).unwrap()).collect();
        update_anchors(&mut paper, 100, &[1.0]);
        let moved: Vec<usize> = paper.iter().filter(|a| a.point == [1.0]).map(|a| a.period).collect();
        assert_eq!(moved, vec![100, 50, 20]);
        assert!(Anchor::new(vec![], 0).is_err());
    }

    #[test]
    fn momentum_recurrence() {
        let mut md = MomentumDirection::new(2, 0.9);
        md.update(&[1.0, 0.0]);
        assert_eq!(md.m, vec![1.0, 0.0]);
        md.update(&[0.0, 1.0]);
        assert_eq!(md.m, vec![0.9, 1.0]);

        let mut md = MomentumDirection::new(2, 0.0);
        md.update(&[1.0, 2.0]);
        md.update(&[3.0, -1.0]);
        assert_eq!(md.m, vec![3.0, -1.0]);
    }

    #[test]
    fn assemble_examples() {
        let mut b = buffer(4);
        b.push(vec![1.0, 2.0]).unwrap();
        let p = assemble(&b, true, &[0.0, 0.0], Enrichments::default());
        assert_eq!(p.ncols(), 1);
        assert_eq!(p.column(0), &[1.0, 2.0]);
        assert_eq!(p.kinds(), &[ColumnKind::Cumulative]);

        b.push(vec![0.5, 0.5]).unwrap();
        let anchors = [Anchor::new(vec![1.0, 1.0], 5).unwrap()];
        let p = assemble(&b, true, &[4.0, 5.0], Enrichments { anchors: &anchors, ..Default::default() });
        assert_eq!(p.kinds(), &[ColumnKind::History, ColumnKind::Cumulative, ColumnKind::Anchor]);
        assert!((p.column(2)[0] - 0.6).abs() < 1e-15 && (p.column(2)[1] - 0.8).abs() < 1e-15);

        let anchors = [Anchor::new(vec![4.0, 5.0], 5).unwrap()];
        let p = assemble(&b, true, &[4.0, 5.0], Enrichments { anchors: &anchors, ..Default::default() });
        assert_eq!(p.ncols(), 2);
    }

    #[test]
    fn assemble_enrichments_are_unit() {
        let mut b = buffer(2);
        b.push(vec![3.0, -1.0]).unwrap();
        let mut md = MomentumDirection::new(2, 0.5);
        md.update(&[2.0, 2.0]);
        let g = [0.0, -7.0];
        let p = assemble(&b, false, &[1.0, 1.0], Enrichments { anchors: &[], momentum: Some(&md), gradient: Some(&g) });
        assert_eq!(p.kinds(), &[ColumnKind::History, ColumnKind::Momentum, ColumnKind::Gradient]);
        for (kind, col) in p.columns() {
            if kind.is_transient() {
                assert!((norm(col) - 1.0).abs() < 1e-12);
            }
        }
        let again = assemble(&b, false, &[1.0, 1.0], Enrichments { anchors: &[], momentum: Some(&md), gradient: Some(&g) });
        assert_eq!(p, again);

        let zero_m = MomentumDirection::new(2, 0.9);
        let p = assemble(&b, false, &[1.0, 1.0], Enrichments { momentum: Some(&zero_m), ..Default::default() });
        assert_eq!(p.ncols(), 1);
    }

    #[test]
    fn matrix_products() {
        let p = SubspaceMatrix::from_columns(2, vec![(ColumnKind::History, vec![1.0, 2.0]), (ColumnKind::Anchor, vec![0.0, 1.0])]).unwrap();
        assert_eq!(p.combine(&[2.0, 1.0]), vec![2.0, 5.0]);
        assert_eq!(p.offset_from(&[1.0, 1.0], &[2.0, 1.0]), vec![3.0, 6.0]);
        assert_eq!(p.project(&[1.0, 1.0]), vec![3.0, 1.0]);
        assert!(SubspaceMatrix::from_columns(2, vec![(ColumnKind::History, vec![1.0])]).is_err());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Push(f64),
        Replace(f64),
    }

    proptest! {
        #[test]
        fn buffer_never_exceeds_capacity(m in 1usize..6, ops in proptest::collection::vec(prop_oneof![
            (-3.0f64..3.0).prop_map(Op::Push),
            (-3.0f64..3.0).prop_map(Op::Replace),
        ], 0..60)) {
            let mut b = DirectionBuffer::new(m, 2).unwrap();
            for op in ops {
                match op {
                    Op::Push(v) => { b.push(vec![v, 1.0]).unwrap(); }
                    Op::Replace(v) => { let _ = b.replace_newest(vec![v, 0.0]); }
                }
                prop_assert!(b.len() <= m);
            }
        }

        #[test]
        fn anchor_resets_count(period in 1usize..50, k_max in 1usize..400) {
            let mut a = vec![Anchor::new(vec![0.0], period).unwrap()];
            let n: usize = (1..=k_max).map(|k| update_anchors(&mut a, k, &[0.0])).sum();
            prop_assert_eq!(n, k_max / period);
        }
    }
}
