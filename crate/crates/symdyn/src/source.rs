//! The two-dimensional dynamical source: state evolution, symbol extraction,
//! trajectories, and fundamental sets.
//!
//! The theta component evolves by `theta' = T0(theta, y)` where `y` is the
//! emitted symbol; the phi component evolves by the branch-expanding map
//! `phi' = T1(phi)` regardless of theta.

use num_traits::One;

use crate::error::{Error, Result};
use crate::exact::Rat;
use crate::interval::{IntervalMap, OpenInterval, OpenRectangle, UnitPartition};

/// Symbols are 0-based dense indices into alphabet tables. The Gauss source
/// uses the positive integers directly (index 0 never occurs there).
pub type Symbol = usize;

/// The output table `xi : X x Z -> Y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XiTable {
    /// `xi(x, z) = x`, used by the lossless builders and the Gauss source
    /// where the x alphabet may be unbounded.
    IdentityInX,
    /// Dense table indexed `[x][z]`.
    Table(Vec<Vec<Symbol>>),
}

impl XiTable {
    pub fn apply(&self, x: Symbol, z: Symbol) -> Symbol {
        match self {
            XiTable::IdentityInX => x,
            XiTable::Table(t) => t[x][z],
        }
    }
}

/// The theta dynamics, one of the two shapes used by the constructions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThetaMap {
    /// One monotone bijection per output symbol `y` (the lossy scheme).
    PerSymbol(Vec<IntervalMap>),
    /// A single branch-expanding map whose branch at `theta` is the cell
    /// index of `theta` (memoryless lossless Example-style), or the Gauss
    /// map.
    Shared(IntervalMap),
}

impl ThetaMap {
    /// The map to apply when the current output symbol is `y`.
    pub fn map_for(&self, y: Symbol) -> Result<&IntervalMap> {
        match self {
            ThetaMap::PerSymbol(maps) => {
                maps.get(y).ok_or(Error::InvalidBranch(y))
            }
            ThetaMap::Shared(map) => Ok(map),
        }
    }
}

/// A full two-dimensional dynamical source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceModel {
    /// |X|; `None` means the countable Gauss alphabet.
    pub x_alphabet: Option<usize>,
    pub z_alphabet: usize,
    /// |Y|; `None` for the Gauss source.
    pub y_alphabet: Option<usize>,
    /// Theta-axis partition, absent for the Gauss source (branches are
    /// computed from the map itself).
    pub theta_partition: Option<UnitPartition>,
    pub phi_partition: UnitPartition,
    pub xi: XiTable,
    pub t0: ThetaMap,
    /// Branch-expanding, independent of theta.
    pub t1: IntervalMap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub theta: Rat,
    pub phi: Rat,
}

/// A finite disjoint union of open product rectangles in the unit square.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FundamentalSet {
    pub rectangles: Vec<OpenRectangle>,
}

/// One step of the source: symbols emitted from the current state, then the
/// state advanced.
pub struct StepOutput {
    pub next: State,
    pub y: Symbol,
    pub x: Symbol,
    pub z: Symbol,
}

#[derive(Debug)]
pub struct Trajectory {
    pub y: Vec<Symbol>,
    pub x: Vec<Symbol>,
    pub z: Vec<Symbol>,
    pub states: Vec<State>,
}

impl SourceModel {
    /// Symbol of the theta coordinate (`sigma_0`).
    pub fn sigma0(&self, theta: &Rat) -> Result<Symbol> {
        match &self.theta_partition {
            Some(p) => p.cell_index(theta),
            None => {
                // Gauss: branch index of the shared map
                match &self.t0 {
                    ThetaMap::Shared(map) => map.branch_of(theta),
                    ThetaMap::PerSymbol(_) => unreachable!("gauss source uses a shared map"),
                }
            }
        }
    }

    /// Symbol of the phi coordinate (`sigma_1`).
    pub fn sigma1(&self, phi: &Rat) -> Result<Symbol> {
        self.phi_partition.cell_index(phi)
    }

    pub fn step(&self, s: &State) -> Result<StepOutput> {
        let x = self.sigma0(&s.theta)?;
        let z = self.sigma1(&s.phi)?;
        let y = self.xi.apply(x, z);
        let next_theta = self.t0.map_for(y)?.eval(&s.theta)?;
        let next_phi = self.t1.eval(&s.phi)?;
        Ok(StepOutput {
            next: State {
                theta: next_theta,
                phi: next_phi,
            },
            y,
            x,
            z,
        })
    }

    pub fn trajectory(&self, s0: &State, n: usize) -> Result<Trajectory> {
        let mut y = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n + 1);
        states.push(s0.clone());
        let mut s = s0.clone();
        for k in 0..n {
            let out = self.step(&s).map_err(|e| match e {
                Error::BoundaryPoint(_) => Error::BoundaryAtStep { step: k },
                other => other,
            })?;
            y.push(out.y);
            x.push(out.x);
            z.push(out.z);
            s = out.next;
            states.push(s.clone());
        }
        Ok(Trajectory { y, x, z, states })
    }

    /// The theta map actually applied at a point whose symbol is `y`:
    /// for per-symbol dynamics the monotone map of `y`; for shared dynamics
    /// the expanding map restricted to branch `y`. `theta_preimage` pulls an
    /// interval back through one step accordingly.
    fn theta_preimage(&self, target: &OpenInterval, y: Symbol) -> Result<OpenInterval> {
        match &self.t0 {
            ThetaMap::PerSymbol(maps) => maps
                .get(y)
                .ok_or(Error::InvalidBranch(y))?
                .branch_preimage(target, None),
            ThetaMap::Shared(map) => map.branch_preimage(target, Some(y)),
        }
    }

    /// All theta-intervals whose points share a depth-`n` x-itinerary
    /// compatible with driving symbols `y`, together with that itinerary.
    ///
    /// Computed backward: at each depth the incoming interval family is a
    /// partition of the unit interval, pulled back through the (bijective)
    /// step map and split against the theta partition. Empty intersections
    /// are dropped, which keeps the family at no more than
    /// `n(|X|-1) + 1` members.
    pub fn theta_itineraries(&self, y: &[Symbol]) -> Result<Vec<(OpenInterval, Vec<Symbol>)>> {
        let part = self
            .theta_partition
            .as_ref()
            .ok_or_else(|| Error::Parse("theta itineraries need a finite partition".into()))?;
        let mut level: Vec<(OpenInterval, Vec<Symbol>)> = vec![(OpenInterval::unit(), vec![])];
        for &yk in y.iter().rev() {
            let mut next = Vec::new();
            for (interval, path) in &level {
                let pulled = self.theta_preimage(interval, yk)?;
                for i in 0..part.num_cells() {
                    if let Some(piece) = pulled.intersect(&part.cell(i)) {
                        let mut p = Vec::with_capacity(path.len() + 1);
                        p.push(i);
                        p.extend_from_slice(path);
                        next.push((piece, p));
                    }
                }
            }
            next.sort_by(|a, b| a.0.lo().cmp(b.0.lo()));
            level = next;
        }
        Ok(level)
    }

    /// Feasible z symbols for an (x, y) pair: `{ z : xi(x, z) = y }`.
    pub fn feasible_z(&self, x: Symbol, y: Symbol) -> Vec<Symbol> {
        (0..self.z_alphabet)
            .filter(|&z| self.xi.apply(x, z) == y)
            .collect()
    }

    /// The nested phi-interval realizing a z-itinerary: all phi_1 whose
    /// phi-trajectory visits cells `z_1..z_n` in order.
    pub fn phi_interval(&self, z: &[Symbol]) -> Result<OpenInterval> {
        let mut interval = OpenInterval::unit();
        for &zk in z.iter().rev() {
            interval = self.t1.branch_preimage(&interval, Some(zk))?;
        }
        Ok(interval)
    }

    /// The fundamental set of `y`: all initial states whose source sequence
    /// begins with `y`. Requires finite alphabets and affine maps.
    ///
    /// Per theta-itinerary, the compatible z-itineraries are the product of
    /// the per-step feasible sets; each contributes one rectangle.
    pub fn fundamental_set(&self, y: &[Symbol]) -> Result<FundamentalSet> {
        let mut rectangles = Vec::new();
        for (theta_side, x_path) in self.theta_itineraries(y)? {
            let feas: Vec<Vec<Symbol>> = x_path
                .iter()
                .zip(y)
                .map(|(&x, &yk)| self.feasible_z(x, yk))
                .collect();
            if feas.iter().any(|f| f.is_empty()) {
                continue;
            }
            let mut z_path = vec![0usize; y.len()];
            self.collect_phi_rectangles(&theta_side, &feas, 0, &mut z_path, &mut rectangles)?;
        }
        Ok(FundamentalSet { rectangles })
    }

    fn collect_phi_rectangles(
        &self,
        theta_side: &OpenInterval,
        feas: &[Vec<Symbol>],
        depth: usize,
        z_path: &mut Vec<Symbol>,
        out: &mut Vec<OpenRectangle>,
    ) -> Result<()> {
        if depth == feas.len() {
            out.push(OpenRectangle {
                theta_side: theta_side.clone(),
                phi_side: self.phi_interval(z_path)?,
            });
            return Ok(());
        }
        for &z in &feas[depth] {
            z_path[depth] = z;
            self.collect_phi_rectangles(theta_side, feas, depth + 1, z_path, out)?;
        }
        Ok(())
    }

    /// Number of distinct theta projections of `fundamental_set(y)` without
    /// enumerating z-itineraries (each feasible theta-itinerary contributes
    /// exactly one projection interval).
    pub fn theta_projection_count(&self, y: &[Symbol]) -> Result<usize> {
        let mut count = 0;
        for (_, x_path) in self.theta_itineraries(y)? {
            let feasible = x_path
                .iter()
                .zip(y)
                .all(|(&x, &yk)| !self.feasible_z(x, yk).is_empty());
            if feasible {
                count += 1;
            }
        }
        Ok(count)
    }
}

impl FundamentalSet {
    /// Deduplicated, sorted list of distinct theta-side intervals.
    pub fn theta_projections(&self) -> Vec<OpenInterval> {
        let mut sides: Vec<OpenInterval> = self
            .rectangles
            .iter()
            .map(|r| r.theta_side.clone())
            .collect();
        sides.sort();
        sides.dedup();
        sides
    }

    /// Exact Lebesgue measure (sum of rectangle areas).
    pub fn measure(&self) -> Rat {
        self.rectangles.iter().map(|r| r.area()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rectangles.is_empty()
    }

    /// Whether the given state lies inside one of the rectangles.
    pub fn contains(&self, theta: &Rat, phi: &Rat) -> bool {
        self.rectangles
            .iter()
            .any(|r| r.theta_side.contains(theta) && r.phi_side.contains(phi))
    }
}

/// All symbol sequences of length `n` over an alphabet of the given size.
pub fn all_sequences(alphabet: usize, n: usize) -> Vec<Vec<Symbol>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::with_capacity(out.len() * alphabet);
        for seq in &out {
            for s in 0..alphabet {
                let mut e = seq.clone();
                e.push(s);
                next.push(e);
            }
        }
        out = next;
    }
    out
}

/// Exact partition check: the fundamental sets of all y^n are disjoint and
/// their measures sum to 1. Used by tests; exposed for the harness's
/// exact-mode cross-checks.
pub fn fundamental_sets_partition_total(model: &SourceModel, n: usize) -> Result<Rat> {
    let y_alpha = model
        .y_alphabet
        .ok_or_else(|| Error::Parse("partition check needs a finite Y alphabet".into()))?;
    let mut total = Rat::from_integer(0.into());
    for y in all_sequences(y_alpha, n) {
        total += model.fundamental_set(&y)?.measure();
    }
    let _ = Rat::one();
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, Rat};
    use crate::interval::{AffinePiece, IntervalMap, OpenInterval, UnitPartition};
    use num_traits::One;

    /// The Bernoulli/Hamming model of distortion D, built directly from the
    /// displayed formulas (the builder in `lossy` must reproduce this).
    pub(crate) fn hamming_model(d: Rat) -> SourceModel {
        let one = Rat::one();
        let two = rat(2, 1);
        let theta_partition = UnitPartition::from_lengths(&[rat(1, 2), rat(1, 2)]).unwrap();
        let phi_partition =
            UnitPartition::from_lengths(&[&one - &d, d.clone()]).unwrap();
        let t0_y0 = IntervalMap::monotone(vec![
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
        .unwrap();
        let t0_y1 = IntervalMap::monotone(vec![
            AffinePiece {
                domain: OpenInterval::new(rat(0, 1), rat(1, 2)).unwrap(),
                slope: &two * &d,
                intercept: rat(0, 1),
            },
            AffinePiece {
                domain: OpenInterval::new(rat(1, 2), rat(1, 1)).unwrap(),
                slope: &two * (&one - &d),
                intercept: &two * &d - &one,
            },
        ])
        .unwrap();
        let t1 = IntervalMap::expanding_from_partition(&phi_partition);
        SourceModel {
            x_alphabet: Some(2),
            z_alphabet: 2,
            y_alphabet: Some(2),
            theta_partition: Some(theta_partition),
            phi_partition,
            xi: XiTable::Table(vec![vec![0, 1], vec![1, 0]]),
            t0: ThetaMap::PerSymbol(vec![t0_y0, t0_y1]),
            t1,
        }
    }

    /// Memoryless one-dimensional source with cell lengths p.
    fn memoryless_model(p: &[Rat]) -> SourceModel {
        let part = UnitPartition::from_lengths(p).unwrap();
        let phi_partition = UnitPartition::from_lengths(&[Rat::one()]).unwrap();
        let t1 = IntervalMap::expanding_from_partition(&phi_partition);
        SourceModel {
            x_alphabet: Some(p.len()),
            z_alphabet: 1,
            y_alphabet: Some(p.len()),
            theta_partition: Some(part.clone()),
            phi_partition,
            xi: XiTable::IdentityInX,
            t0: ThetaMap::Shared(IntervalMap::expanding_from_partition(&part)),
            t1,
        }
    }

    #[test]
    fn step_hamming_example() {
        let m = hamming_model(rat(1, 4));
        let out = m
            .step(&State {
                theta: rat(1, 4),
                phi: rat(1, 2),
            })
            .unwrap();
        assert_eq!(out.x, 0);
        assert_eq!(out.z, 0);
        assert_eq!(out.y, 0);
        assert_eq!(out.next.theta, rat(3, 8));
        assert_eq!(out.next.phi, rat(2, 3));
    }

    #[test]
    fn step_noiseless_y_equals_x() {
        let m = memoryless_model(&[rat(1, 2), rat(1, 2)]);
        for num in [1i64, 3, 5, 7] {
            let out = m
                .step(&State {
                    theta: rat(num, 8),
                    phi: rat(1, 3),
                })
                .unwrap();
            assert_eq!(out.y, out.x);
        }
    }

    #[test]
    fn step_uniform_binary_doubling() {
        let m = memoryless_model(&[rat(1, 2), rat(1, 2)]);
        let out = m
            .step(&State {
                theta: rat(11, 16),
                phi: rat(1, 3),
            })
            .unwrap();
        assert_eq!(out.x, 1);
        assert_eq!(out.y, 1);
        assert_eq!(out.next.theta, rat(3, 8));
    }

    #[test]
    fn trajectory_uniform_binary_expansion() {
        let m = memoryless_model(&[rat(1, 2), rat(1, 2)]);
        // 23/32 = 0.10111b; 11/16 itself hits the endpoint 1/2 at step 4
        // because its expansion terminates, so an interior continuation is
        // used for the depth-4 read
        let t = m
            .trajectory(
                &State {
                    theta: rat(23, 32),
                    phi: rat(1, 3),
                },
                4,
            )
            .unwrap();
        assert_eq!(t.y, vec![1, 0, 1, 1]);
        assert_eq!(t.states.len(), 5);
        let t3 = m
            .trajectory(
                &State {
                    theta: rat(11, 16),
                    phi: rat(1, 3),
                },
                3,
            )
            .unwrap();
        assert_eq!(t3.y, vec![1, 0, 1]);
    }

    #[test]
    fn trajectory_hamming_n1() {
        let m = hamming_model(rat(1, 4));
        let t = m
            .trajectory(
                &State {
                    theta: rat(1, 4),
                    phi: rat(1, 2),
                },
                1,
            )
            .unwrap();
        assert_eq!(t.y, vec![0]);
    }

    #[test]
    fn trajectory_boundary_reports_step() {
        let m = memoryless_model(&[rat(1, 2), rat(1, 2)]);
        // theta = 3/8 -> 3/4 -> 1/2 boundary at step 2
        let err = m
            .trajectory(
                &State {
                    theta: rat(3, 8),
                    phi: rat(1, 3),
                },
                4,
            )
            .unwrap_err();
        assert!(matches!(err, Error::BoundaryAtStep { step: 2 }));
    }

    #[test]
    fn fundamental_set_hamming_y0() {
        let d = rat(1, 4);
        let m = hamming_model(d.clone());
        let f = m.fundamental_set(&[0]).unwrap();
        assert_eq!(f.rectangles.len(), 2);
        // {(0,1/2) x (0,3/4), (1/2,1) x (3/4,1)}
        let expect0 = OpenRectangle {
            theta_side: OpenInterval::new(rat(0, 1), rat(1, 2)).unwrap(),
            phi_side: OpenInterval::new(rat(0, 1), rat(3, 4)).unwrap(),
        };
        let expect1 = OpenRectangle {
            theta_side: OpenInterval::new(rat(1, 2), rat(1, 1)).unwrap(),
            phi_side: OpenInterval::new(rat(3, 4), rat(1, 1)).unwrap(),
        };
        assert!(f.rectangles.contains(&expect0));
        assert!(f.rectangles.contains(&expect1));
        assert_eq!(f.measure(), rat(1, 2));
        assert_eq!(f.theta_projections().len(), 2);
    }

    #[test]
    fn fundamental_set_noiseless_is_interval_cross_unit() {
        let m = memoryless_model(&[rat(2, 3), rat(1, 3)]);
        let f = m.fundamental_set(&[0, 1]).unwrap();
        assert_eq!(f.rectangles.len(), 1);
        assert_eq!(f.rectangles[0].phi_side, OpenInterval::unit());
        assert_eq!(
            f.rectangles[0].theta_side,
            OpenInterval::new(rat(4, 9), rat(2, 3)).unwrap()
        );
        assert_eq!(f.measure(), rat(2, 9));
    }

    #[test]
    fn fundamental_measure_product_law_depth3() {
        let m = hamming_model(rat(1, 4));
        for y in all_sequences(2, 3) {
            let f = m.fundamental_set(&y).unwrap();
            assert_eq!(f.measure(), rat(1, 8), "measure mismatch for {y:?}");
        }
    }

    #[test]
    fn theta_projection_counts() {
        let m = hamming_model(rat(1, 4));
        // n=1: exactly |X| projections
        assert_eq!(m.theta_projection_count(&[0]).unwrap(), 2);
        assert_eq!(m.theta_projection_count(&[1]).unwrap(), 2);
        // n=3: at most 3*(2-1)+1 = 4
        for y in all_sequences(2, 3) {
            let cnt = m.theta_projection_count(&y).unwrap();
            assert!(cnt <= 4, "count {cnt} for {y:?}");
            // matches the projection count of the full fundamental set
            let f = m.fundamental_set(&y).unwrap();
            assert_eq!(f.theta_projections().len(), cnt);
        }
    }

    #[test]
    fn empty_set_projections_and_measure() {
        let f = FundamentalSet { rectangles: vec![] };
        assert!(f.theta_projections().is_empty());
        assert_eq!(f.measure(), rat(0, 1));
    }

    #[test]
    fn partition_property_depth4() {
        let m = hamming_model(rat(1, 10));
        assert_eq!(fundamental_sets_partition_total(&m, 4).unwrap(), Rat::one());
        // disjointness via membership: a sampled point belongs to exactly
        // one fundamental set
        let theta = rat(137, 512);
        let phi = rat(41, 128);
        let mut hits = 0;
        for y in all_sequences(2, 4) {
            if m.fundamental_set(&y).unwrap().contains(&theta, &phi) {
                hits += 1;
            }
        }
        assert_eq!(hits, 1);
    }

    #[test]
    fn membership_consistency() {
        let m = hamming_model(rat(1, 4));
        for (tn, pn) in [(137i64, 41i64), (301, 99), (777, 1001)] {
            let s0 = State {
                theta: rat(tn, 1024),
                phi: rat(pn, 2048),
            };
            let t = m.trajectory(&s0, 5).unwrap();
            let f = m.fundamental_set(&t.y).unwrap();
            assert!(f.contains(&s0.theta, &s0.phi));
            // and a midpoint of each rectangle reproduces the sequence
            for r in &f.rectangles {
                let s = State {
                    theta: r.theta_side.midpoint(),
                    phi: r.phi_side.midpoint(),
                };
                if let Ok(t2) = m.trajectory(&s, 5) {
                    assert_eq!(t2.y, t.y);
                }
            }
        }
    }
}
