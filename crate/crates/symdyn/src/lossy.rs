//! Lossy coding with feedforward: the functional representation of a test
//! channel, the posterior-matching-dual source construction, the shrunken
//! reverse-trajectory interval, strong typicality, companion search, and the
//! block encoder / streaming decoder pair.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::exact::{log2_rat, rat, rat_to_f64, Rat};
use crate::interval::{AffinePiece, IntervalMap, OpenInterval, UnitPartition};
use crate::lossless::RepresentativeGrid;
use crate::source::{SourceModel, Symbol, ThetaMap, XiTable};

/// Exact joint probability table over X x Y.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointPMF {
    p: Vec<Vec<Rat>>,
}

impl JointPMF {
    pub fn new(p: Vec<Vec<Rat>>) -> Result<Self> {
        if p.is_empty() || p[0].is_empty() || p.iter().any(|row| row.len() != p[0].len()) {
            return Err(Error::InvalidDistribution("ragged or empty table".into()));
        }
        if p.iter().flatten().any(|v| v.is_negative()) {
            return Err(Error::InvalidDistribution("negative entry".into()));
        }
        let total: Rat = p.iter().flatten().sum();
        if total != Rat::one() {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, not 1"
            )));
        }
        Ok(JointPMF { p })
    }

    /// Joint from a source law `p_y` and a test channel given as rows
    /// `p_x_given_y[y][x]`.
    pub fn from_channel(p_y: &[Rat], p_x_given_y: &[Vec<Rat>]) -> Result<Self> {
        if p_y.len() != p_x_given_y.len() {
            return Err(Error::LengthMismatch(p_y.len(), p_x_given_y.len()));
        }
        let x_len = p_x_given_y.first().map(|r| r.len()).unwrap_or(0);
        let mut p = vec![vec![Rat::zero(); p_y.len()]; x_len];
        for (y, row) in p_x_given_y.iter().enumerate() {
            for (x, v) in row.iter().enumerate() {
                p[x][y] = v * &p_y[y];
            }
        }
        JointPMF::new(p)
    }

    pub fn x_len(&self) -> usize {
        self.p.len()
    }

    pub fn y_len(&self) -> usize {
        self.p[0].len()
    }

    pub fn prob(&self, x: Symbol, y: Symbol) -> &Rat {
        &self.p[x][y]
    }

    pub fn p_x(&self) -> Vec<Rat> {
        self.p.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn p_y(&self) -> Vec<Rat> {
        (0..self.y_len())
            .map(|y| self.p.iter().map(|row| &row[y]).sum())
            .collect()
    }

    pub fn strictly_positive(&self) -> bool {
        self.p.iter().flatten().all(|v| v.is_positive())
    }

    /// Conditional `P(X = x | Y = y)`; requires `P_Y(y) > 0`.
    pub fn p_x_given_y(&self, y: Symbol) -> Result<Vec<Rat>> {
        let py: Rat = self.p.iter().map(|row| &row[y]).sum();
        if !py.is_positive() {
            return Err(Error::InvalidDistribution(format!(
                "conditioning on zero-probability y={y}"
            )));
        }
        Ok(self.p.iter().map(|row| &row[y] / &py).collect())
    }

    /// Conditional `P(Y = y | X = x)`; requires `P_X(x) > 0`.
    pub fn p_y_given_x(&self, x: Symbol) -> Result<Vec<Rat>> {
        let px: Rat = self.p[x].iter().sum();
        if !px.is_positive() {
            return Err(Error::InvalidDistribution(format!(
                "conditioning on zero-probability x={x}"
            )));
        }
        Ok(self.p[x].iter().map(|v| v / &px).collect())
    }

    /// `I(X;Y)` in bits, from the exact table (logarithms at f64 precision).
    pub fn mutual_information(&self) -> f64 {
        let px = self.p_x();
        let py = self.p_y();
        let mut i = 0.0;
        for x in 0..self.x_len() {
            for y in 0..self.y_len() {
                let pxy = &self.p[x][y];
                if pxy.is_positive() {
                    let ratio = pxy / (&px[x] * &py[y]);
                    i += rat_to_f64(pxy) * log2_rat(&ratio);
                }
            }
        }
        i
    }

    /// Mix the test channel toward uniform: `P'(x|y) = (1-eta) P(x|y) +
    /// eta/|X|`, keeping `P_Y`. Restores strict positivity for any
    /// `eta > 0`.
    pub fn mix_conditional(&self, eta: &Rat) -> Result<JointPMF> {
        let py = self.p_y();
        let unif = Rat::new(1.into(), (self.x_len() as i64).into());
        let mut p = vec![vec![Rat::zero(); self.y_len()]; self.x_len()];
        for y in 0..self.y_len() {
            if !py[y].is_positive() {
                return Err(Error::InvalidDistribution(format!(
                    "P_Y({y}) = 0 cannot be mixed"
                )));
            }
            for x in 0..self.x_len() {
                let cond = &self.p[x][y] / &py[y];
                p[x][y] = &py[y] * ((Rat::one() - eta) * cond + eta * &unif);
            }
        }
        JointPMF::new(p)
    }
}

/// A channel rewritten as `Y = xi(X, Z)` with `Z` independent of `X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionalRepresentation {
    pub p_z: Vec<Rat>,
    /// `xi[x][z]`.
    pub xi: Vec<Vec<Symbol>>,
}

impl FunctionalRepresentation {
    pub fn z_len(&self) -> usize {
        self.p_z.len()
    }

    /// The exact distributional identity: for all (x, y),
    /// `sum_z p_z(z) [xi(x,z) = y] = P(Y=y | X=x)`.
    pub fn verify_identity(&self, pmf: &JointPMF) -> Result<bool> {
        for x in 0..pmf.x_len() {
            let cond = pmf.p_y_given_x(x)?;
            for y in 0..pmf.y_len() {
                let total: Rat = self
                    .p_z
                    .iter()
                    .zip(&self.xi[x])
                    .filter(|(_, &xz)| xz == y)
                    .map(|(pz, _)| pz.clone())
                    .sum();
                if total != cond[y] {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Functional representation by conditional-CDF stacking.
///
/// Row `x` lays its `P(Y|X=x)` bands over the unit interval starting at band
/// `y = x mod |Y|` and wrapping cyclically; the Z cells are the common
/// refinement of all band endpoints, with adjacent cells merged when every
/// row assigns them the same output. The cyclic start makes symmetric
/// channels come out in their additive-noise form (for the binary symmetric
/// channel: `Z ~ Bern(D)`, `xi(x,z) = x xor z`).
pub fn functional_representation(pmf: &JointPMF) -> Result<FunctionalRepresentation> {
    let x_len = pmf.x_len();
    let y_len = pmf.y_len();
    // per-row cumulative band edges in stacking order
    let mut rows: Vec<Vec<(Rat, Symbol)>> = Vec::with_capacity(x_len); // (right edge, y)
    let mut endpoints: Vec<Rat> = Vec::new();
    for x in 0..x_len {
        let cond = pmf.p_y_given_x(x)?;
        let mut acc = Rat::zero();
        let mut row = Vec::new();
        for off in 0..y_len {
            let y = (x + off) % y_len;
            if cond[y].is_positive() {
                acc += &cond[y];
                row.push((acc.clone(), y));
            }
        }
        debug_assert_eq!(acc, Rat::one());
        for (edge, _) in &row {
            if *edge < Rat::one() {
                endpoints.push(edge.clone());
            }
        }
        rows.push(row);
    }
    endpoints.sort();
    endpoints.dedup();
    endpoints.push(Rat::one());

    let mut p_z = Vec::new();
    let mut xi: Vec<Vec<Symbol>> = vec![Vec::new(); x_len];
    let mut left = Rat::zero();
    for edge in endpoints {
        let mid = (&left + &edge) / rat(2, 1);
        for x in 0..x_len {
            let y = rows[x]
                .iter()
                .find(|(e, _)| *e >= mid)
                .map(|(_, y)| *y)
                .expect("stacked bands cover the unit interval");
            xi[x].push(y);
        }
        p_z.push(&edge - &left);
        left = edge;
    }

    // merge adjacent cells with identical output columns
    let mut j = 1;
    while j < p_z.len() {
        if (0..x_len).all(|x| xi[x][j] == xi[x][j - 1]) {
            let w = p_z.remove(j);
            p_z[j - 1] += w;
            for col in xi.iter_mut() {
                col.remove(j);
            }
        } else {
            j += 1;
        }
    }
    Ok(FunctionalRepresentation { p_z, xi })
}

/// Build the posterior-matching-dual dynamical source for a joint pmf and a
/// functional representation of its test channel.
///
/// - theta cells have lengths `P_X`, phi cells lengths `P_Z`;
/// - `T0(., k)` is the continuous nondecreasing map that is affine on each
///   theta cell and equals `F_{X|Y}(i | k)` at the right edge of cell `i`
///   (flat on cells with zero posterior, which is how degenerate channels
///   collapse to the lossless construction);
/// - `T1` expands each phi cell onto the unit interval.
pub fn build_pm_dual(pmf: &JointPMF, fr: &FunctionalRepresentation) -> Result<SourceModel> {
    let p_x = pmf.p_x();
    if p_x.iter().any(|v| !v.is_positive()) {
        return Err(Error::InvalidDistribution("P_X must be strictly positive".into()));
    }
    let theta_partition = UnitPartition::from_lengths(&p_x)?;
    let phi_partition = UnitPartition::from_lengths(&fr.p_z)?;

    let mut maps = Vec::with_capacity(pmf.y_len());
    for k in 0..pmf.y_len() {
        let posterior = pmf.p_x_given_y(k)?;
        let mut pieces = Vec::with_capacity(pmf.x_len());
        let mut cum = Rat::zero();
        for i in 0..pmf.x_len() {
            let domain = theta_partition.cell(i);
            let slope = &posterior[i] / &p_x[i];
            let intercept = &cum - &slope * domain.lo();
            cum += &posterior[i];
            pieces.push(AffinePiece {
                domain,
                slope,
                intercept,
            });
        }
        maps.push(IntervalMap::monotone(pieces)?);
    }

    Ok(SourceModel {
        x_alphabet: Some(pmf.x_len()),
        z_alphabet: fr.z_len(),
        y_alphabet: Some(pmf.y_len()),
        theta_partition: Some(theta_partition),
        phi_partition: phi_partition.clone(),
        xi: XiTable::Table(fr.xi.clone()),
        t0: ThetaMap::PerSymbol(maps),
        t1: IntervalMap::expanding_from_partition(&phi_partition),
    })
}

/// True when `T0(theta, .)` is constant in the output symbol on some theta
/// cell (the concentration hypothesis then fails; callers may warn).
pub fn t0_constant_in_symbol(model: &SourceModel) -> bool {
    let maps = match &model.t0 {
        ThetaMap::PerSymbol(maps) => maps,
        ThetaMap::Shared(_) => return false,
    };
    let Some(part) = &model.theta_partition else {
        return false;
    };
    'cells: for i in 0..part.num_cells() {
        let mid = part.cell(i).midpoint();
        let first = match maps[0].eval(&mid) {
            Ok(v) => v,
            Err(_) => continue,
        };
        for map in &maps[1..] {
            match map.eval(&mid) {
                Ok(v) if v == first => {}
                _ => continue 'cells,
            }
        }
        // all symbol maps agree on this cell midpoint; affine pieces that
        // agree at the midpoint and at cell edges are identical
        if maps
            .iter()
            .all(|m| m.pieces() == maps[0].pieces())
        {
            return true;
        }
        return true;
    }
    false
}

/// Distortion table `d : X x Y -> nonnegative rationals`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistortionMeasure {
    pub d: Vec<Vec<Rat>>,
}

impl DistortionMeasure {
    pub fn new(d: Vec<Vec<Rat>>) -> Result<Self> {
        if d.iter().flatten().any(|v| v.is_negative()) {
            return Err(Error::InvalidDistribution("negative distortion".into()));
        }
        Ok(DistortionMeasure { d })
    }

    pub fn hamming(n: usize) -> Self {
        let d = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { Rat::zero() } else { Rat::one() })
                    .collect()
            })
            .collect();
        DistortionMeasure { d }
    }

    pub fn d_max(&self) -> Rat {
        self.d
            .iter()
            .flatten()
            .cloned()
            .max()
            .unwrap_or_else(Rat::zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanOrder {
    /// The default least-index rule.
    LeastIndex,
    /// Seeded random candidate order (the unverified conjecture mode).
    Random { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct CodecParams {
    pub n: usize,
    pub rate: Rat,
    /// Shrink parameter of the reverse-trajectory interval; 0 is accepted
    /// and gives the full fundamental interval (the lossless collapse).
    pub epsilon: Rat,
    pub delta_typ: Rat,
    /// Maximum number of candidate midpoints examined.
    pub search_budget: usize,
    pub scan_order: ScanOrder,
}

impl CodecParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_negative() || self.epsilon >= rat(1, 2) {
            return Err(Error::InvalidDistribution("epsilon must lie in [0, 1/2)".into()));
        }
        if self.delta_typ.is_negative() || self.rate.is_negative() || self.search_budget == 0 {
            return Err(Error::InvalidDistribution("invalid codec params".into()));
        }
        Ok(())
    }
}

/// The reverse-trajectory interval: the innermost inverse is applied for the
/// last symbol, the outermost for the first.
pub fn delta_interval(model: &SourceModel, y: &[Symbol], epsilon: &Rat) -> Result<OpenInterval> {
    let maps = match &model.t0 {
        ThetaMap::PerSymbol(maps) => maps,
        ThetaMap::Shared(_) => {
            return Err(Error::Parse(
                "delta_interval needs per-symbol monotone theta dynamics".into(),
            ))
        }
    };
    let mut interval = OpenInterval::new(epsilon.clone(), Rat::one() - epsilon)?;
    for &yk in y.iter().rev() {
        interval = maps
            .get(yk)
            .ok_or(Error::InvalidBranch(yk))?
            .branch_preimage(&interval, None)?;
    }
    Ok(interval)
}

/// The reverse-trajectory interval together with the x-itinerary intervals
/// that meet it. Same backward pass as `delta_interval`, but an itinerary
/// family is pulled back alongside and pruned at each depth against the
/// partial interval; members disjoint from it can never reach the final
/// interval, since preimages of disjoint sets are disjoint.
///
/// Every grid midpoint inside the returned interval lies in a member of the
/// returned family or on a member boundary, and all such midpoints within
/// one member share their x-itinerary (the member's path).
pub fn delta_itineraries(
    model: &SourceModel,
    y: &[Symbol],
    epsilon: &Rat,
) -> Result<(OpenInterval, Vec<(OpenInterval, Vec<Symbol>)>)> {
    let maps = match &model.t0 {
        ThetaMap::PerSymbol(maps) => maps,
        ThetaMap::Shared(_) => {
            return Err(Error::Parse(
                "delta_itineraries needs per-symbol monotone theta dynamics".into(),
            ))
        }
    };
    let part = model
        .theta_partition
        .as_ref()
        .ok_or_else(|| Error::Parse("delta_itineraries needs a finite theta partition".into()))?;
    let mut delta = OpenInterval::new(epsilon.clone(), Rat::one() - epsilon)?;
    let mut family: Vec<(OpenInterval, Vec<Symbol>)> = vec![(OpenInterval::unit(), vec![])];
    for &yk in y.iter().rev() {
        let map = maps.get(yk).ok_or(Error::InvalidBranch(yk))?;
        delta = map.branch_preimage(&delta, None)?;
        let mut next = Vec::new();
        for (interval, path) in &family {
            let pulled = map.branch_preimage(interval, None)?;
            if pulled.intersect(&delta).is_none() {
                continue;
            }
            for i in 0..part.num_cells() {
                if let Some(piece) = pulled.intersect(&part.cell(i)) {
                    if piece.intersect(&delta).is_none() {
                        continue;
                    }
                    let mut p = Vec::with_capacity(path.len() + 1);
                    p.push(i);
                    p.extend_from_slice(path);
                    next.push((piece, p));
                }
            }
        }
        next.sort_by(|a, b| a.0.lo().cmp(b.0.lo()));
        family = next;
    }
    Ok((delta, family))
}

/// Forward-membership route to the same interval: compose the forward step
/// maps and pull the shrunken interval back through the composition once.
pub fn delta_interval_forward(
    model: &SourceModel,
    y: &[Symbol],
    epsilon: &Rat,
) -> Result<OpenInterval> {
    let maps = match &model.t0 {
        ThetaMap::PerSymbol(maps) => maps,
        ThetaMap::Shared(_) => {
            return Err(Error::Parse(
                "delta_interval needs per-symbol monotone theta dynamics".into(),
            ))
        }
    };
    let mut composed = IntervalMap::identity();
    for &yk in y {
        composed = IntervalMap::compose_monotone(
            maps.get(yk).ok_or(Error::InvalidBranch(yk))?,
            &composed,
        )?;
    }
    let target = OpenInterval::new(epsilon.clone(), Rat::one() - epsilon)?;
    composed.branch_preimage(&target, None)
}

/// Strong joint typicality: sup-norm distance between the empirical joint
/// type of `(x, z)` and `p_xz`, compared exactly against `delta`.
pub fn strong_typicality(
    x: &[Symbol],
    z: &[Symbol],
    p_xz: &[Vec<Rat>],
    delta: &Rat,
) -> Result<bool> {
    Ok(typicality_deviation(x, z, p_xz)? <= *delta)
}

/// The sup-norm deviation itself.
pub fn typicality_deviation(x: &[Symbol], z: &[Symbol], p_xz: &[Vec<Rat>]) -> Result<Rat> {
    if x.len() != z.len() {
        return Err(Error::LengthMismatch(x.len(), z.len()));
    }
    let n = x.len();
    let mut counts = vec![vec![0u64; p_xz[0].len()]; p_xz.len()];
    for (&a, &b) in x.iter().zip(z) {
        counts[a][b] += 1;
    }
    let n_rat = rat(n as i64, 1);
    let mut worst = Rat::zero();
    for a in 0..p_xz.len() {
        for b in 0..p_xz[0].len() {
            let emp = rat(counts[a][b] as i64, 1) / &n_rat;
            let dev = (emp - &p_xz[a][b]).abs();
            if dev > worst {
                worst = dev;
            }
        }
    }
    Ok(worst)
}

/// Joint `P_XZ = P_X x P_Z` of a built model (X and Z are independent by
/// construction; cell lengths are the marginals).
pub fn model_p_xz(model: &SourceModel) -> Result<Vec<Vec<Rat>>> {
    let part = model
        .theta_partition
        .as_ref()
        .ok_or_else(|| Error::Parse("model without finite theta partition".into()))?;
    let p_x: Vec<Rat> = (0..part.num_cells()).map(|i| part.cell_length(i)).collect();
    let p_z: Vec<Rat> = (0..model.phi_partition.num_cells())
        .map(|j| model.phi_partition.cell_length(j))
        .collect();
    Ok(p_x
        .iter()
        .map(|px| p_z.iter().map(|pz| px * pz).collect())
        .collect())
}

/// The deterministic x-itinerary of `theta_1 = a` driven by the feedforward
/// symbols `y`, along with the visited theta states.
pub fn theta_path(model: &SourceModel, a: &Rat, y: &[Symbol]) -> Result<(Vec<Symbol>, Vec<Rat>)> {
    let maps = match &model.t0 {
        ThetaMap::PerSymbol(maps) => maps,
        ThetaMap::Shared(_) => {
            return Err(Error::Parse("theta_path needs per-symbol dynamics".into()))
        }
    };
    let mut theta = a.clone();
    let mut xs = Vec::with_capacity(y.len());
    let mut states = Vec::with_capacity(y.len() + 1);
    for &yk in y {
        states.push(theta.clone());
        xs.push(model.sigma0(&theta)?);
        theta = maps.get(yk).ok_or(Error::InvalidBranch(yk))?.eval(&theta)?;
    }
    states.push(theta);
    Ok((xs, states))
}

/// Search for a companion z-itinerary for the midpoint `a_m`: one that is
/// output-consistent (`xi(x_k, z_k) = y_k`) and makes `(x, z)` jointly
/// typical at slack `delta`.
///
/// Positions sharing the same `(x_k, y_k)` pair have identical feasible
/// sets, so the search runs over per-group counts: a largest-remainder
/// seeding followed by single-unit local repair on the exact sup-norm
/// objective, with full enumeration of count allocations as a fallback when
/// the allocation space is small. Any returned itinerary is realizable by
/// some initial phi through the expanding branches of `T1`.
pub fn companion_search(
    model: &SourceModel,
    a_m: &Rat,
    y: &[Symbol],
    delta: &Rat,
) -> Result<Option<Vec<Symbol>>> {
    let (xs, _) = theta_path(model, a_m, y)?;
    companion_for_path(model, &xs, y, delta)
}

/// The companion search given an already-known x-itinerary; the outcome
/// depends on the path only through it.
pub fn companion_for_path(
    model: &SourceModel,
    xs: &[Symbol],
    y: &[Symbol],
    delta: &Rat,
) -> Result<Option<Vec<Symbol>>> {
    let p_xz = model_p_xz(model)?;
    let n = y.len();

    // group positions by (x, y)
    let mut groups: BTreeMap<(Symbol, Symbol), Vec<usize>> = BTreeMap::new();
    for k in 0..n {
        groups.entry((xs[k], y[k])).or_default().push(k);
    }
    let keys: Vec<(Symbol, Symbol)> = groups.keys().cloned().collect();
    let feas: Vec<Vec<Symbol>> = keys
        .iter()
        .map(|&(x, yk)| model.feasible_z(x, yk))
        .collect();
    if feas.iter().any(|f| f.is_empty()) {
        return Ok(None);
    }
    let sizes: Vec<usize> = keys.iter().map(|k| groups[k].len()).collect();

    let p_z: Vec<Rat> = (0..model.phi_partition.num_cells())
        .map(|j| model.phi_partition.cell_length(j))
        .collect();

    // largest-remainder proportional seeding within each group
    let mut alloc: Vec<Vec<u64>> = Vec::with_capacity(keys.len());
    for (g, f) in feas.iter().enumerate() {
        let total: Rat = f.iter().map(|&z| p_z[z].clone()).sum();
        let n_g = sizes[g] as i64;
        let mut counts = vec![0u64; f.len()];
        let mut rema: Vec<(Rat, usize)> = Vec::new();
        let mut assigned = 0i64;
        for (idx, &z) in f.iter().enumerate() {
            let ideal = rat(n_g, 1) * &p_z[z] / &total;
            let fl = ideal.floor();
            let c = fl.to_integer().try_into().unwrap_or(0i64);
            counts[idx] = c as u64;
            assigned += c;
            rema.push((&ideal - fl, idx));
        }
        rema.sort_by(|a, b| b.0.cmp(&a.0));
        let mut left = n_g - assigned;
        let mut it = rema.into_iter().cycle();
        while left > 0 {
            let (_, idx) = it.next().unwrap();
            counts[idx] += 1;
            left -= 1;
        }
        alloc.push(counts);
    }

    let objective = |alloc: &[Vec<u64>]| -> Rat {
        let mut joint = vec![vec![0u64; p_z.len()]; p_xz.len()];
        for (g, f) in feas.iter().enumerate() {
            let x = keys[g].0;
            for (idx, &z) in f.iter().enumerate() {
                joint[x][z] += alloc[g][idx];
            }
        }
        let n_rat = rat(n as i64, 1);
        let mut worst = Rat::zero();
        for (a, row) in joint.iter().enumerate() {
            for (b, &c) in row.iter().enumerate() {
                let dev = (rat(c as i64, 1) / &n_rat - &p_xz[a][b]).abs();
                if dev > worst {
                    worst = dev;
                }
            }
        }
        worst
    };

    let mut best = objective(&alloc);
    for _ in 0..4 * n + 8 {
        if best <= *delta {
            break;
        }
        let mut improved = false;
        'moves: for g in 0..keys.len() {
            for from in 0..feas[g].len() {
                if alloc[g][from] == 0 {
                    continue;
                }
                for to in 0..feas[g].len() {
                    if to == from {
                        continue;
                    }
                    alloc[g][from] -= 1;
                    alloc[g][to] += 1;
                    let obj = objective(&alloc);
                    if obj < best {
                        best = obj;
                        improved = true;
                        break 'moves;
                    }
                    alloc[g][from] += 1;
                    alloc[g][to] -= 1;
                }
            }
        }
        if !improved {
            break;
        }
    }

    if best > *delta {
        // exhaustive allocation fallback when the space is small enough to
        // certify failure
        let space: u128 = sizes
            .iter()
            .zip(&feas)
            .map(|(&n_g, f)| compositions(n_g as u64, f.len()) as u128)
            .try_fold(1u128, |acc, c| acc.checked_mul(c))
            .unwrap_or(u128::MAX);
        if space <= 500_000 {
            match enumerate_allocations(&sizes, &feas, &objective, delta) {
                Some(found) => alloc = found,
                None => return Ok(None),
            }
        } else {
            return Ok(None);
        }
    }

    // materialize z: within each group, spend the counts in feasible-symbol
    // order across the group's positions in time order
    let mut z = vec![0usize; n];
    for (g, key) in keys.iter().enumerate() {
        let mut it = groups[key].iter();
        for (idx, &zz) in feas[g].iter().enumerate() {
            for _ in 0..alloc[g][idx] {
                z[*it.next().unwrap()] = zz;
            }
        }
    }
    debug_assert!(z.iter().zip(xs).zip(y).all(|((&zz, &x), &yk)| {
        model.xi.apply(x, zz) == yk
    }));
    Ok(Some(z))
}

fn compositions(n: u64, parts: usize) -> u64 {
    // C(n + parts - 1, parts - 1), saturating
    let mut c: u64 = 1;
    for i in 0..parts as u64 - 1 {
        c = c.saturating_mul(n + i + 1) / (i + 1);
    }
    c
}

fn enumerate_allocations(
    sizes: &[usize],
    feas: &[Vec<Symbol>],
    objective: &dyn Fn(&[Vec<u64>]) -> Rat,
    delta: &Rat,
) -> Option<Vec<Vec<u64>>> {
    let mut alloc: Vec<Vec<u64>> = feas.iter().map(|f| vec![0; f.len()]).collect();
    fn rec(
        g: usize,
        sizes: &[usize],
        feas: &[Vec<Symbol>],
        alloc: &mut Vec<Vec<u64>>,
        objective: &dyn Fn(&[Vec<u64>]) -> Rat,
        delta: &Rat,
    ) -> bool {
        if g == sizes.len() {
            return objective(alloc) <= *delta;
        }
        fn fill(
            g: usize,
            idx: usize,
            left: u64,
            sizes: &[usize],
            feas: &[Vec<Symbol>],
            alloc: &mut Vec<Vec<u64>>,
            objective: &dyn Fn(&[Vec<u64>]) -> Rat,
            delta: &Rat,
        ) -> bool {
            if idx == feas[g].len() - 1 {
                alloc[g][idx] = left;
                if rec(g + 1, sizes, feas, alloc, objective, delta) {
                    return true;
                }
                alloc[g][idx] = 0;
                return false;
            }
            for c in 0..=left {
                alloc[g][idx] = c;
                if fill(g, idx + 1, left - c, sizes, feas, alloc, objective, delta) {
                    return true;
                }
            }
            alloc[g][idx] = 0;
            false
        }
        fill(g, 0, sizes[g] as u64, sizes, feas, alloc, objective, delta)
    }
    if rec(0, sizes, feas, &mut alloc, objective, delta) {
        Some(alloc)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct EncodeResult {
    pub m: BigUint,
    pub success: bool,
    pub z: Option<Vec<Symbol>>,
    /// Candidate midpoints examined.
    pub attempts: usize,
    pub delta: OpenInterval,
}

/// Encoder steps: compute the reverse-trajectory interval, scan the grid
/// cells contained in it (least index first, or seeded random order), and
/// return the first index whose midpoint admits a typical companion. On
/// exhaustion the index falls back to 1 with the failure flag set.
pub fn encode(model: &SourceModel, y: &[Symbol], params: &CodecParams) -> Result<EncodeResult> {
    params.validate()?;
    if y.len() != params.n {
        return Err(Error::LengthMismatch(y.len(), params.n));
    }
    let (delta, family) = delta_itineraries(model, y, &params.epsilon)?;
    let grid = RepresentativeGrid::new(params.n, &params.rate)?;
    let failure = |attempts: usize, delta: OpenInterval| EncodeResult {
        m: BigUint::one(),
        success: false,
        z: None,
        attempts,
        delta,
    };
    let Some((lo, hi)) = grid.contained_range(&delta) else {
        return Ok(failure(0, delta));
    };
    let range = &hi - &lo + 1u32;
    let mut attempts = 0usize;
    let mut rng = match params.scan_order {
        ScanOrder::Random { seed } => Some(ChaCha12Rng::seed_from_u64(seed)),
        ScanOrder::LeastIndex => None,
    };
    let mut seen: Vec<BigUint> = Vec::new();
    // The companion outcome for a midpoint depends only on its x-itinerary,
    // so candidates resolve to a family member by binary search and the
    // search itself runs at most once per member.
    let mut cache: Vec<Option<Option<Vec<Symbol>>>> = vec![None; family.len()];
    while attempts < params.search_budget {
        let m = match &mut rng {
            None => {
                let m = &lo + attempts as u64;
                if m > hi {
                    break;
                }
                m
            }
            Some(rng) => {
                if BigUint::from(seen.len()) == range {
                    break;
                }
                let mut m;
                loop {
                    m = &lo + rng.gen_biguint_below(&range);
                    if !seen.contains(&m) {
                        seen.push(m.clone());
                        break;
                    }
                }
                m
            }
        };
        attempts += 1;
        let a_m = grid.midpoint(&m);
        let idx = family.binary_search_by(|(iv, _)| {
            if *iv.hi() <= a_m {
                Ordering::Less
            } else if *iv.lo() >= a_m {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        });
        let Ok(idx) = idx else {
            // a midpoint on an itinerary boundary (a boundary trajectory)
            // is skipped like an unsuccessful candidate
            continue;
        };
        if cache[idx].is_none() {
            cache[idx] = Some(companion_for_path(model, &family[idx].1, y, &params.delta_typ)?);
        }
        if let Some(Some(z)) = &cache[idx] {
            return Ok(EncodeResult {
                m,
                success: true,
                z: Some(z.clone()),
                attempts,
                delta,
            });
        }
    }
    Ok(failure(attempts, delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DecoderPhase {
    Emit,
    Feed,
    Done,
}

/// Streaming decoder with the strict emit-then-feed alternation contract:
/// at step k the reconstruction must be read before the true symbol is fed,
/// so the estimate depends only on the index and the feedforward past.
pub struct StreamingDecoder<'a> {
    model: &'a SourceModel,
    grid: RepresentativeGrid,
    m: BigUint,
    n: usize,
    /// Nudge denominator multiplier; 0 means the plain midpoint.
    nudge: u32,
    theta: Rat,
    fed: Vec<Symbol>,
    phase: DecoderPhase,
    step: usize,
}

impl<'a> StreamingDecoder<'a> {
    pub fn new(model: &'a SourceModel, m: BigUint, params: &CodecParams) -> Result<Self> {
        params.validate()?;
        let grid = RepresentativeGrid::new(params.n, &params.rate)?;
        if m.is_zero() || m > grid.m_count {
            return Err(Error::InvalidBranch(0));
        }
        let theta = grid.midpoint(&m);
        Ok(StreamingDecoder {
            model,
            grid,
            m,
            n: params.n,
            nudge: 0,
            theta,
            fed: Vec::new(),
            phase: if params.n == 0 {
                DecoderPhase::Done
            } else {
                DecoderPhase::Emit
            },
            step: 0,
        })
    }

    fn start_point(&self, nudge: u32) -> Rat {
        let mid = self.grid.midpoint(&self.m);
        if nudge == 0 {
            mid
        } else {
            let quarter = Rat::new(
                1.into(),
                num_bigint::BigInt::from(self.grid.m_count.clone()) * 4 * nudge,
            );
            mid + quarter
        }
    }

    /// Replay the fed history from a nudged start point; the current theta
    /// becomes the state after the replay.
    fn renudge(&mut self) -> Result<()> {
        for k in (self.nudge + 1)..=64 {
            let mut theta = self.start_point(k);
            let mut ok = true;
            for &yk in &self.fed {
                if self.model.sigma0(&theta).is_err() {
                    ok = false;
                    break;
                }
                match self.model.t0.map_for(yk).and_then(|m| m.eval(&theta)) {
                    Ok(next) => theta = next,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && self.model.sigma0(&theta).is_ok() {
                self.nudge = k;
                self.theta = theta;
                return Ok(());
            }
        }
        Err(Error::BoundaryPoint(self.theta.to_string()))
    }

    /// Produce the step-k reconstruction. Must precede `feed` at every step.
    pub fn emit(&mut self) -> Result<Symbol> {
        match self.phase {
            DecoderPhase::Emit => {}
            DecoderPhase::Feed => {
                return Err(Error::ProtocolViolation(format!(
                    "emit called twice at step {}",
                    self.step
                )))
            }
            DecoderPhase::Done => {
                return Err(Error::ProtocolViolation("emit after final step".into()))
            }
        }
        if self.model.sigma0(&self.theta).is_err() {
            self.renudge()?;
        }
        let x = self.model.sigma0(&self.theta)?;
        self.phase = DecoderPhase::Feed;
        Ok(x)
    }

    /// Feed the true symbol for the step whose estimate was just emitted.
    pub fn feed(&mut self, y: Symbol) -> Result<()> {
        match self.phase {
            DecoderPhase::Feed => {}
            DecoderPhase::Emit => {
                return Err(Error::ProtocolViolation(format!(
                    "feed before emit at step {}",
                    self.step
                )))
            }
            DecoderPhase::Done => {
                return Err(Error::ProtocolViolation("feed after final step".into()))
            }
        }
        let map = self.model.t0.map_for(y)?;
        match map.eval(&self.theta) {
            Ok(next) => self.theta = next,
            Err(Error::BoundaryPoint(_)) => {
                self.fed.push(y);
                self.renudge()?;
                self.step += 1;
                self.phase = if self.step == self.n {
                    DecoderPhase::Done
                } else {
                    DecoderPhase::Emit
                };
                return Ok(());
            }
            Err(e) => return Err(e),
        }
        self.fed.push(y);
        self.step += 1;
        self.phase = if self.step == self.n {
            DecoderPhase::Done
        } else {
            DecoderPhase::Emit
        };
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.phase == DecoderPhase::Done
    }
}

/// Run the streaming decoder over a full feedforward block.
pub fn decode_block(
    model: &SourceModel,
    m: &BigUint,
    y: &[Symbol],
    params: &CodecParams,
) -> Result<Vec<Symbol>> {
    let mut dec = StreamingDecoder::new(model, m.clone(), params)?;
    let mut x_hat = Vec::with_capacity(y.len());
    for &yk in y {
        x_hat.push(dec.emit()?);
        dec.feed(yk)?;
    }
    Ok(x_hat)
}

/// Per-block empirical distortion `n^{-1} sum_k d(x_hat_k, y_k)`, exact.
pub fn block_distortion(
    x_hat: &[Symbol],
    y: &[Symbol],
    d: &DistortionMeasure,
) -> Result<Rat> {
    if x_hat.len() != y.len() {
        return Err(Error::LengthMismatch(x_hat.len(), y.len()));
    }
    let total: Rat = x_hat.iter().zip(y).map(|(&a, &b)| d.d[a][b].clone()).sum();
    Ok(total / rat(x_hat.len() as i64, 1))
}

/// The Bernoulli(1/2) / Hamming-distortion joint at distortion level `d`:
/// `X ~ Bern(1/2)`, `Y = X xor Z`, `Z ~ Bern(d)`.
pub fn hamming_joint(d: &Rat) -> Result<JointPMF> {
    let half = rat(1, 2);
    let p_y = vec![half.clone(), half];
    let one_minus = Rat::one() - d;
    let rows = vec![
        vec![one_minus.clone(), d.clone()],
        vec![d.clone(), one_minus],
    ];
    JointPMF::from_channel(&p_y, &rows)
}
