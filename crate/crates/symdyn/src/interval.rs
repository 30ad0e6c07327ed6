//! Open intervals, rectangles, unit partitions, and piecewise one-dimensional
//! maps of the unit interval, all over exact rationals.
//!
//! Two map flavors exist:
//! - `PiecewiseAffine` in one of two modes: a continuous nondecreasing
//!   bijection of the unit interval onto itself, or a branch-expanding map
//!   where every piece covers the full unit interval.
//! - `Gauss`, the map `t -> 1/t mod 1` with countably many branches computed
//!   on demand.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{rat, Rat};

/// An open subinterval of the closed unit interval: `0 <= lo < hi <= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpenInterval {
    lo: Rat,
    hi: Rat,
}

impl OpenInterval {
    pub fn new(lo: Rat, hi: Rat) -> Result<Self> {
        if lo.is_negative() || lo >= hi || hi > Rat::one() {
            return Err(Error::Parse(format!(
                "not a valid open subinterval of (0,1): ({lo}, {hi})"
            )));
        }
        Ok(OpenInterval { lo, hi })
    }

    pub fn unit() -> Self {
        OpenInterval {
            lo: Rat::zero(),
            hi: Rat::one(),
        }
    }

    pub fn lo(&self) -> &Rat {
        &self.lo
    }

    pub fn hi(&self) -> &Rat {
        &self.hi
    }

    pub fn length(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn midpoint(&self) -> Rat {
        (&self.hi + &self.lo) / rat(2, 1)
    }

    /// Strict interior membership.
    pub fn contains(&self, x: &Rat) -> bool {
        *x > self.lo && *x < self.hi
    }

    /// `other` is a subset of `self` (endpoints allowed to coincide).
    pub fn contains_interval(&self, other: &OpenInterval) -> bool {
        other.lo >= self.lo && other.hi <= self.hi
    }

    pub fn intersect(&self, other: &OpenInterval) -> Option<OpenInterval> {
        let lo = if self.lo >= other.lo { self.lo.clone() } else { other.lo.clone() };
        let hi = if self.hi <= other.hi { self.hi.clone() } else { other.hi.clone() };
        if lo < hi {
            Some(OpenInterval { lo, hi })
        } else {
            None
        }
    }
}

/// An open axis-aligned rectangle in the unit square.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpenRectangle {
    pub theta_side: OpenInterval,
    pub phi_side: OpenInterval,
}

impl OpenRectangle {
    pub fn area(&self) -> Rat {
        self.theta_side.length() * self.phi_side.length()
    }
}

/// An ordered open partition of the unit interval: disjoint open cells,
/// arranged left to right, whose lengths sum to exactly 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitPartition {
    /// `len + 1` endpoints, `0 = e_0 < e_1 < ... < e_n = 1`.
    endpoints: Vec<Rat>,
}

impl UnitPartition {
    pub fn from_lengths(lengths: &[Rat]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::InvalidDistribution("empty partition".into()));
        }
        let mut endpoints = Vec::with_capacity(lengths.len() + 1);
        let mut acc = Rat::zero();
        endpoints.push(acc.clone());
        for len in lengths {
            if !len.is_positive() {
                return Err(Error::InvalidDistribution(format!(
                    "non-positive cell length {len}"
                )));
            }
            acc += len;
            endpoints.push(acc.clone());
        }
        if acc != Rat::one() {
            return Err(Error::InvalidDistribution(format!(
                "cell lengths sum to {acc}, not 1"
            )));
        }
        Ok(UnitPartition { endpoints })
    }

    pub fn from_endpoints(endpoints: Vec<Rat>) -> Result<Self> {
        if endpoints.len() < 2
            || endpoints[0] != Rat::zero()
            || *endpoints.last().unwrap() != Rat::one()
            || endpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidDistribution(
                "endpoints must increase strictly from 0 to 1".into(),
            ));
        }
        Ok(UnitPartition { endpoints })
    }

    pub fn num_cells(&self) -> usize {
        self.endpoints.len() - 1
    }

    pub fn endpoints(&self) -> &[Rat] {
        &self.endpoints
    }

    pub fn cell(&self, i: usize) -> OpenInterval {
        OpenInterval {
            lo: self.endpoints[i].clone(),
            hi: self.endpoints[i + 1].clone(),
        }
    }

    pub fn cells(&self) -> Vec<OpenInterval> {
        (0..self.num_cells()).map(|i| self.cell(i)).collect()
    }

    pub fn cell_length(&self, i: usize) -> Rat {
        &self.endpoints[i + 1] - &self.endpoints[i]
    }

    /// Index of the open cell strictly containing `x`.
    pub fn cell_index(&self, x: &Rat) -> Result<usize> {
        if *x <= Rat::zero() || *x >= Rat::one() {
            return Err(Error::BoundaryPoint(x.to_string()));
        }
        // binary search over interior endpoints
        let mut lo = 0usize;
        let mut hi = self.num_cells();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if *x < self.endpoints[mid + 1] {
                hi = mid;
            } else if *x > self.endpoints[mid + 1] {
                lo = mid + 1;
            } else {
                return Err(Error::BoundaryPoint(x.to_string()));
            }
        }
        if *x == self.endpoints[lo] {
            return Err(Error::BoundaryPoint(x.to_string()));
        }
        Ok(lo)
    }
}

/// One affine piece of a piecewise map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffinePiece {
    pub domain: OpenInterval,
    pub slope: Rat,
    pub intercept: Rat,
}

impl AffinePiece {
    fn apply(&self, x: &Rat) -> Rat {
        &self.slope * x + &self.intercept
    }

    fn value_at_lo(&self) -> Rat {
        self.apply(self.domain.lo())
    }

    fn value_at_hi(&self) -> Rat {
        self.apply(self.domain.hi())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    /// Continuous, nondecreasing, onto the unit interval. Flat (zero-slope)
    /// pieces are admitted so that degenerate channels collapse cleanly to
    /// the one-dimensional construction.
    MonotoneBijection,
    /// Each piece maps its open domain onto the full open unit interval,
    /// increasing.
    BranchExpanding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntervalMap {
    PiecewiseAffine {
        pieces: Vec<AffinePiece>,
        mode: MapMode,
    },
    /// `t -> 1/t - i` on the branch `(1/(i+1), 1/i)`; branch indices are
    /// unbounded and computed from `floor(1/t)`.
    Gauss,
}

impl IntervalMap {
    /// Build a monotone map from `(domain, slope, intercept)` pieces. The
    /// domains must tile the unit interval in order; the map must be
    /// continuous, nondecreasing, with `f(0)=0` and `f(1)=1`.
    pub fn monotone(pieces: Vec<AffinePiece>) -> Result<Self> {
        validate_contiguous(&pieces)?;
        let mut prev = Rat::zero();
        for p in &pieces {
            if p.slope.is_negative() {
                return Err(Error::Parse("monotone map with negative slope".into()));
            }
            if p.value_at_lo() != prev {
                return Err(Error::Parse(format!(
                    "discontinuity at {}: {} != {}",
                    p.domain.lo(),
                    p.value_at_lo(),
                    prev
                )));
            }
            prev = p.value_at_hi();
        }
        if prev != Rat::one() {
            return Err(Error::Parse("monotone map does not reach 1".into()));
        }
        Ok(IntervalMap::PiecewiseAffine {
            pieces: canonical_pieces(pieces),
            mode: MapMode::MonotoneBijection,
        })
    }

    /// Build the branch-expanding map whose piece `i` is the increasing
    /// affine bijection of partition cell `i` onto the unit interval.
    pub fn expanding_from_partition(partition: &UnitPartition) -> Self {
        let pieces = (0..partition.num_cells())
            .map(|i| {
                let dom = partition.cell(i);
                let len = dom.length();
                let slope = Rat::one() / &len;
                let intercept = -dom.lo() / &len;
                AffinePiece {
                    domain: dom,
                    slope,
                    intercept,
                }
            })
            .collect();
        IntervalMap::PiecewiseAffine {
            pieces,
            mode: MapMode::BranchExpanding,
        }
    }

    pub fn identity() -> Self {
        IntervalMap::PiecewiseAffine {
            pieces: vec![AffinePiece {
                domain: OpenInterval::unit(),
                slope: Rat::one(),
                intercept: Rat::zero(),
            }],
            mode: MapMode::MonotoneBijection,
        }
    }

    pub fn num_pieces(&self) -> usize {
        match self {
            IntervalMap::PiecewiseAffine { pieces, .. } => pieces.len(),
            IntervalMap::Gauss => usize::MAX,
        }
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        match self {
            IntervalMap::PiecewiseAffine { pieces, .. } => pieces,
            IntervalMap::Gauss => panic!("gauss map has no explicit pieces"),
        }
    }

    pub fn mode(&self) -> MapMode {
        match self {
            IntervalMap::PiecewiseAffine { mode, .. } => *mode,
            IntervalMap::Gauss => MapMode::BranchExpanding,
        }
    }

    /// Branch index of the piece strictly containing `x`.
    pub fn branch_of(&self, x: &Rat) -> Result<usize> {
        match self {
            IntervalMap::PiecewiseAffine { pieces, .. } => {
                locate_piece(pieces, x)
            }
            IntervalMap::Gauss => gauss_branch(x),
        }
    }

    /// Exact image of a non-boundary point.
    pub fn eval(&self, x: &Rat) -> Result<Rat> {
        match self {
            IntervalMap::PiecewiseAffine { pieces, .. } => {
                let i = locate_piece(pieces, x)?;
                Ok(pieces[i].apply(x))
            }
            IntervalMap::Gauss => {
                let i = gauss_branch(x)?;
                let inv = x.recip();
                Ok(inv - Rat::from_integer(BigInt::from(i)))
            }
        }
    }

    /// Exact preimage of an open interval.
    ///
    /// For monotone maps pass `branch = None`: the global preimage is taken
    /// (flat pieces whose value falls inside the target are absorbed into
    /// it). For branch-expanding and Gauss maps select the piece with
    /// `branch = Some(i)`.
    pub fn branch_preimage(
        &self,
        target: &OpenInterval,
        branch: Option<usize>,
    ) -> Result<OpenInterval> {
        match (self, branch) {
            (IntervalMap::PiecewiseAffine { pieces, mode }, None) => {
                if *mode != MapMode::MonotoneBijection {
                    return Err(Error::InvalidBranch(usize::MAX));
                }
                let lo = inv_left(pieces, target.lo());
                let hi = inv_right(pieces, target.hi());
                OpenInterval::new(lo, hi)
            }
            (IntervalMap::PiecewiseAffine { pieces, mode }, Some(j)) => {
                if *mode != MapMode::BranchExpanding || j >= pieces.len() {
                    return Err(Error::InvalidBranch(j));
                }
                let p = &pieces[j];
                // piece j is an increasing bijection of its domain onto (0,1)
                let lo = (target.lo() - &p.intercept) / &p.slope;
                let hi = (target.hi() - &p.intercept) / &p.slope;
                OpenInterval::new(lo, hi)
            }
            (IntervalMap::Gauss, Some(i)) => {
                if i == 0 {
                    return Err(Error::InvalidBranch(i));
                }
                // branch i is decreasing: t = 1/(i + v)
                let i = Rat::from_integer(BigInt::from(i));
                let lo = (&i + target.hi()).recip();
                let hi = (&i + target.lo()).recip();
                OpenInterval::new(lo, hi)
            }
            (IntervalMap::Gauss, None) => Err(Error::InvalidBranch(usize::MAX)),
        }
    }

    /// Composition `outer . inner` of two monotone piecewise-affine maps,
    /// in canonical form. Piece count is at most
    /// `pieces(outer) + pieces(inner) - 1`.
    pub fn compose_monotone(outer: &IntervalMap, inner: &IntervalMap) -> Result<IntervalMap> {
        let (op, oi) = match (outer, inner) {
            (
                IntervalMap::PiecewiseAffine { pieces: op, mode: MapMode::MonotoneBijection },
                IntervalMap::PiecewiseAffine { pieces: ip, mode: MapMode::MonotoneBijection },
            ) => (op, ip),
            _ => return Err(Error::InvalidBranch(usize::MAX)),
        };
        let mut out = Vec::new();
        for p in oi {
            let v0 = p.value_at_lo();
            let v1 = p.value_at_hi();
            if p.slope.is_zero() {
                out.push(AffinePiece {
                    domain: p.domain.clone(),
                    slope: Rat::zero(),
                    intercept: monotone_value_at(op, &v0),
                });
                continue;
            }
            // subdivide p by the outer cut points falling strictly inside its image
            let mut cuts: Vec<Rat> = vec![p.domain.lo().clone()];
            for q in op.iter().skip(1) {
                let w = q.domain.lo();
                if *w > v0 && *w < v1 {
                    cuts.push((w - &p.intercept) / &p.slope);
                }
            }
            cuts.push(p.domain.hi().clone());
            for w in cuts.windows(2) {
                let dom = OpenInterval::new(w[0].clone(), w[1].clone())?;
                let mid = dom.midpoint();
                let v_mid = p.apply(&mid);
                let oj = &op[locate_piece_closed(op, &v_mid)];
                out.push(AffinePiece {
                    domain: dom,
                    slope: &oj.slope * &p.slope,
                    intercept: &oj.slope * &p.intercept + &oj.intercept,
                });
            }
        }
        Ok(IntervalMap::PiecewiseAffine {
            pieces: canonical_pieces(out),
            mode: MapMode::MonotoneBijection,
        })
    }
}

fn validate_contiguous(pieces: &[AffinePiece]) -> Result<()> {
    if pieces.is_empty() {
        return Err(Error::Parse("map with no pieces".into()));
    }
    if !pieces[0].domain.lo().is_zero() || !pieces.last().unwrap().domain.hi().is_one() {
        return Err(Error::Parse("piece domains do not span (0,1)".into()));
    }
    for w in pieces.windows(2) {
        if w[0].domain.hi() != w[1].domain.lo() {
            return Err(Error::Parse("piece domains are not contiguous".into()));
        }
    }
    Ok(())
}

/// Merge adjacent pieces with identical slope and intercept.
fn canonical_pieces(pieces: Vec<AffinePiece>) -> Vec<AffinePiece> {
    let mut out: Vec<AffinePiece> = Vec::with_capacity(pieces.len());
    for p in pieces {
        if let Some(last) = out.last_mut() {
            if last.slope == p.slope
                && last.intercept == p.intercept
                && last.domain.hi() == p.domain.lo()
            {
                last.domain =
                    OpenInterval::new(last.domain.lo().clone(), p.domain.hi().clone()).unwrap();
                continue;
            }
        }
        out.push(p);
    }
    out
}

/// Piece index whose open domain strictly contains `x`; boundary otherwise.
fn locate_piece(pieces: &[AffinePiece], x: &Rat) -> Result<usize> {
    if !x.is_positive() || *x >= Rat::one() {
        return Err(Error::BoundaryPoint(x.to_string()));
    }
    let mut lo = 0usize;
    let mut hi = pieces.len();
    while lo < hi {
        let mid = (lo + hi) / 2;
        let d = &pieces[mid].domain;
        if x <= d.lo() {
            if x == d.lo() {
                return Err(Error::BoundaryPoint(x.to_string()));
            }
            hi = mid;
        } else if x >= d.hi() {
            if x == d.hi() {
                return Err(Error::BoundaryPoint(x.to_string()));
            }
            lo = mid + 1;
        } else {
            return Ok(mid);
        }
    }
    Err(Error::BoundaryPoint(x.to_string()))
}

/// Piece index whose closed domain contains `x` (ties resolved leftward);
/// only used where continuity makes the answer value-independent.
fn locate_piece_closed(pieces: &[AffinePiece], x: &Rat) -> usize {
    for (i, p) in pieces.iter().enumerate() {
        if x <= p.domain.hi() {
            return i;
        }
    }
    pieces.len() - 1
}

fn monotone_value_at(pieces: &[AffinePiece], x: &Rat) -> Rat {
    pieces[locate_piece_closed(pieces, x)].apply(x)
}

/// `sup { t in [0,1] : f(t) <= a }` for a continuous nondecreasing onto map.
fn inv_left(pieces: &[AffinePiece], a: &Rat) -> Rat {
    let mut result = Rat::zero();
    for p in pieces {
        let v_lo = p.value_at_lo();
        let v_hi = p.value_at_hi();
        if v_hi <= *a {
            result = p.domain.hi().clone();
            continue;
        }
        if v_lo >= *a {
            break;
        }
        // slope > 0 here since v_lo < a < v_hi
        result = (a - &p.intercept) / &p.slope;
        break;
    }
    result
}

/// `inf { t in [0,1] : f(t) >= b }`.
fn inv_right(pieces: &[AffinePiece], b: &Rat) -> Rat {
    for p in pieces {
        let v_lo = p.value_at_lo();
        let v_hi = p.value_at_hi();
        if v_hi < *b {
            continue;
        }
        if v_lo >= *b {
            return p.domain.lo().clone();
        }
        return (b - &p.intercept) / &p.slope;
    }
    Rat::one()
}

fn gauss_branch(x: &Rat) -> Result<usize> {
    if !x.is_positive() || *x >= Rat::one() {
        return Err(Error::BoundaryPoint(x.to_string()));
    }
    // Branches are taken right-closed: x = 1/k belongs to branch k, emitting
    // the final digit of a terminating expansion (the next state is then 0
    // and the trajectory ends). This matches the Euclid convention for
    // rational continued fractions.
    let inv = x.recip();
    let floor = inv.floor().to_integer();
    // branches are indexed by positive integers; alphabet indices usize
    let i: usize = floor
        .try_into()
        .map_err(|_| Error::Parse("gauss branch overflow".into()))?;
    Ok(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use proptest::prelude::*;

    /// The Bernoulli/Hamming theta map for symbol 0 at distortion D:
    /// slope 2(1-D) on (0,1/2), slope 2D with intercept 1-2D on (1/2,1).
    pub(crate) fn hamming_t0_sym0(d: Rat) -> IntervalMap {
        let one = Rat::one();
        let two = rat(2, 1);
        IntervalMap::monotone(vec![
            AffinePiece {
                domain: OpenInterval::new(rat(0, 1), rat(1, 2)).unwrap(),
                slope: &two * (&one - &d),
                intercept: rat(0, 1),
            },
            AffinePiece {
                domain: OpenInterval::new(rat(1, 2), rat(1, 1)).unwrap(),
                slope: &two * &d,
                intercept: &one - &two * &d,
            },
        ])
        .unwrap()
    }

    #[test]
    fn eval_hamming_left_branch() {
        let f = hamming_t0_sym0(rat(1, 4));
        assert_eq!(f.eval(&rat(1, 4)).unwrap(), rat(3, 8));
    }

    #[test]
    fn eval_identity() {
        let f = IntervalMap::identity();
        assert_eq!(f.eval(&rat(2, 7)).unwrap(), rat(2, 7));
    }

    #[test]
    fn eval_gauss() {
        let f = IntervalMap::Gauss;
        assert_eq!(f.eval(&rat(2, 5)).unwrap(), rat(1, 2));
        assert_eq!(f.branch_of(&rat(2, 5)).unwrap(), 2);
    }

    #[test]
    fn eval_boundary_rejected() {
        let f = hamming_t0_sym0(rat(1, 4));
        assert!(matches!(f.eval(&rat(1, 2)), Err(Error::BoundaryPoint(_))));
        let g = IntervalMap::Gauss;
        // right-closed gauss branch: 1/3 emits digit 3 and maps to the
        // terminal state 0, which no further step accepts
        assert_eq!(g.eval(&rat(1, 3)).unwrap(), rat(0, 1));
        assert!(matches!(g.eval(&rat(0, 1)), Err(Error::BoundaryPoint(_))));
    }

    #[test]
    fn preimage_hamming() {
        let f = hamming_t0_sym0(rat(1, 4));
        let pre = f
            .branch_preimage(&OpenInterval::new(rat(1, 8), rat(7, 8)).unwrap(), None)
            .unwrap();
        assert_eq!(*pre.lo(), rat(1, 12));
        assert_eq!(*pre.hi(), rat(3, 4));

        let pre = f
            .branch_preimage(&OpenInterval::new(rat(0, 1), rat(3, 4)).unwrap(), None)
            .unwrap();
        assert_eq!(*pre.lo(), rat(0, 1));
        assert_eq!(*pre.hi(), rat(1, 2));
    }

    #[test]
    fn preimage_expanding_branch_is_its_domain() {
        let part = UnitPartition::from_lengths(&[rat(1, 2), rat(1, 2)]).unwrap();
        let f = IntervalMap::expanding_from_partition(&part);
        let pre = f.branch_preimage(&OpenInterval::unit(), Some(1)).unwrap();
        assert_eq!(*pre.lo(), rat(1, 2));
        assert_eq!(*pre.hi(), rat(1, 1));
        assert!(matches!(
            f.branch_preimage(&OpenInterval::unit(), Some(2)),
            Err(Error::InvalidBranch(2))
        ));
    }

    #[test]
    fn compose_identity_is_noop() {
        let f = hamming_t0_sym0(rat(1, 4));
        let g = IntervalMap::compose_monotone(&IntervalMap::identity(), &f).unwrap();
        assert_eq!(g, f);
        let h = IntervalMap::compose_monotone(&f, &IntervalMap::identity()).unwrap();
        assert_eq!(h, f);
    }

    #[test]
    fn compose_self_evaluates_twice() {
        let f = hamming_t0_sym0(rat(1, 4));
        let ff = IntervalMap::compose_monotone(&f, &f).unwrap();
        assert_eq!(ff.eval(&rat(1, 4)).unwrap(), rat(9, 16));
        assert!(ff.num_pieces() <= 3);
    }

    #[test]
    fn partition_integrity() {
        let p = UnitPartition::from_lengths(&[rat(1, 3), rat(1, 6), rat(1, 2)]).unwrap();
        let total: Rat = (0..3).map(|i| p.cell_length(i)).sum();
        assert_eq!(total, Rat::one());
        assert!(UnitPartition::from_lengths(&[rat(1, 3), rat(1, 3)]).is_err());
    }

    #[test]
    fn cell_index_boundary() {
        let p = UnitPartition::from_lengths(&[rat(1, 2), rat(1, 2)]).unwrap();
        assert_eq!(p.cell_index(&rat(1, 4)).unwrap(), 0);
        assert_eq!(p.cell_index(&rat(3, 4)).unwrap(), 1);
        assert!(p.cell_index(&rat(1, 2)).is_err());
    }

    fn arb_monotone_map() -> impl Strategy<Value = IntervalMap> {
        // random 2..5-piece monotone maps with strictly increasing breakpoints
        // in both domain and range, built from small rationals
        (2usize..5).prop_flat_map(|k| {
            let coords = prop::collection::vec((1u32..40, 1u32..40), 2 * (k - 1));
            coords.prop_map(move |raw| {
                let mut xs: Vec<Rat> = raw[..k - 1]
                    .iter()
                    .map(|(a, b)| rat(*a as i64, (*a + *b) as i64))
                    .collect();
                let mut ys: Vec<Rat> = raw[k - 1..]
                    .iter()
                    .map(|(a, b)| rat(*a as i64, (*a + *b) as i64))
                    .collect();
                xs.sort();
                xs.dedup();
                ys.sort();
                ys.dedup();
                let n = xs.len().min(ys.len());
                let mut dx = vec![Rat::zero()];
                dx.extend(xs.into_iter().take(n));
                dx.push(Rat::one());
                let mut dy = vec![Rat::zero()];
                dy.extend(ys.into_iter().take(n));
                dy.push(Rat::one());
                let pieces = (0..dx.len() - 1)
                    .map(|i| {
                        let slope = (&dy[i + 1] - &dy[i]) / (&dx[i + 1] - &dx[i]);
                        let intercept = &dy[i] - &slope * &dx[i];
                        AffinePiece {
                            domain: OpenInterval::new(dx[i].clone(), dx[i + 1].clone()).unwrap(),
                            slope,
                            intercept,
                        }
                    })
                    .collect();
                IntervalMap::monotone(pieces).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn round_trip_preimage_contains_point(f in arb_monotone_map(), num in 1i64..97) {
            let x = rat(num, 97);
            if let Ok(y) = f.eval(&x) {
                let eta = rat(1, 1000);
                let lo = if y > eta { &y - &eta } else { Rat::zero() };
                let hi = if &y + &eta < Rat::one() { &y + &eta } else { Rat::one() };
                let pre = f.branch_preimage(&OpenInterval::new(lo, hi).unwrap(), None).unwrap();
                prop_assert!(pre.contains(&x) || *pre.lo() == x || *pre.hi() == x);
            }
        }

        #[test]
        fn composition_commutes_with_eval(
            f in arb_monotone_map(),
            g in arb_monotone_map(),
            num in 1i64..101,
        ) {
            let x = rat(num, 101);
            let comp = IntervalMap::compose_monotone(&f, &g).unwrap();
            if let (Ok(via_comp), Ok(gy)) = (comp.eval(&x), g.eval(&x)) {
                if let Ok(via_steps) = f.eval(&gy) {
                    prop_assert_eq!(via_comp, via_steps);
                }
            }
        }

        #[test]
        fn composition_piece_bound(f in arb_monotone_map(), g in arb_monotone_map()) {
            let comp = IntervalMap::compose_monotone(&f, &g).unwrap();
            prop_assert!(comp.num_pieces() <= f.num_pieces() + g.num_pieces() - 1);
        }

        #[test]
        fn preimage_of_preimage_matches_composition(
            f in arb_monotone_map(),
            g in arb_monotone_map(),
        ) {
            // pulling a target through f then g equals pulling through f.g
            let target = OpenInterval::new(rat(1, 5), rat(4, 5)).unwrap();
            let step1 = f.branch_preimage(&target, None).unwrap();
            let step2 = g.branch_preimage(&step1, None).unwrap();
            let comp = IntervalMap::compose_monotone(&f, &g).unwrap();
            let direct = comp.branch_preimage(&target, None).unwrap();
            prop_assert_eq!(step2, direct);
        }
    }
}
