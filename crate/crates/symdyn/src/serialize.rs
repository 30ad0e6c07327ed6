//! JSON interchange for models, experiment configs, and reports. Rationals
//! travel as exact "num/den" strings; round trips are bit-exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{rat_from_str, rat_to_string, Rat};
use crate::interval::{AffinePiece, IntervalMap, MapMode, OpenInterval, UnitPartition};
use crate::source::{SourceModel, Symbol, ThetaMap, XiTable};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PieceDto {
    /// `[lo, hi]` of the open domain, as rational strings.
    pub domain: [String; 2],
    pub slope: String,
    pub intercept: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapDto {
    Monotone { pieces: Vec<PieceDto> },
    Expanding { pieces: Vec<PieceDto> },
    Gauss,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XiDto {
    IdentityInX,
    Table { table: Vec<Vec<Symbol>> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaMapDto {
    PerSymbol { maps: Vec<MapDto> },
    Shared { map: MapDto },
}

/// The on-disk shape of a [`SourceModel`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SourceModelDto {
    pub x_alphabet: Option<usize>,
    pub z_alphabet: usize,
    pub y_alphabet: Option<usize>,
    /// Partition endpoints including 0 and 1, as rational strings; absent
    /// for the Gauss source.
    pub theta_partition: Option<Vec<String>>,
    pub phi_partition: Vec<String>,
    pub xi: XiDto,
    pub t0: ThetaMapDto,
    pub t1: MapDto,
}

fn piece_to_dto(p: &AffinePiece) -> PieceDto {
    PieceDto {
        domain: [rat_to_string(p.domain.lo()), rat_to_string(p.domain.hi())],
        slope: rat_to_string(&p.slope),
        intercept: rat_to_string(&p.intercept),
    }
}

fn piece_from_dto(p: &PieceDto) -> Result<AffinePiece> {
    Ok(AffinePiece {
        domain: OpenInterval::new(rat_from_str(&p.domain[0])?, rat_from_str(&p.domain[1])?)?,
        slope: rat_from_str(&p.slope)?,
        intercept: rat_from_str(&p.intercept)?,
    })
}

fn map_to_dto(m: &IntervalMap) -> MapDto {
    match m {
        IntervalMap::Gauss => MapDto::Gauss,
        IntervalMap::PiecewiseAffine { pieces, mode } => {
            let pieces = pieces.iter().map(piece_to_dto).collect();
            match mode {
                MapMode::MonotoneBijection => MapDto::Monotone { pieces },
                MapMode::BranchExpanding => MapDto::Expanding { pieces },
            }
        }
    }
}

fn map_from_dto(m: &MapDto) -> Result<IntervalMap> {
    match m {
        MapDto::Gauss => Ok(IntervalMap::Gauss),
        MapDto::Monotone { pieces } => {
            let pieces: Result<Vec<_>> = pieces.iter().map(piece_from_dto).collect();
            IntervalMap::monotone(pieces?)
        }
        MapDto::Expanding { pieces } => {
            // rebuild through the partition of piece domains so the
            // expanding-map invariants are revalidated
            let pieces: Result<Vec<_>> = pieces.iter().map(piece_from_dto).collect();
            let pieces = pieces?;
            let mut endpoints: Vec<Rat> = pieces.iter().map(|p| p.domain.lo().clone()).collect();
            endpoints.push(
                pieces
                    .last()
                    .ok_or_else(|| Error::Parse("empty expanding map".into()))?
                    .domain
                    .hi()
                    .clone(),
            );
            let part = UnitPartition::from_endpoints(endpoints)?;
            let rebuilt = IntervalMap::expanding_from_partition(&part);
            if rebuilt.pieces() != pieces.as_slice() {
                return Err(Error::Parse(
                    "expanding map pieces are not branch bijections of their cells".into(),
                ));
            }
            Ok(rebuilt)
        }
    }
}

fn partition_to_dto(p: &UnitPartition) -> Vec<String> {
    p.endpoints().iter().map(rat_to_string).collect()
}

fn partition_from_dto(endpoints: &[String]) -> Result<UnitPartition> {
    let pts: Result<Vec<Rat>> = endpoints.iter().map(|s| rat_from_str(s)).collect();
    UnitPartition::from_endpoints(pts?)
}

pub fn model_to_dto(model: &SourceModel) -> SourceModelDto {
    SourceModelDto {
        x_alphabet: model.x_alphabet,
        z_alphabet: model.z_alphabet,
        y_alphabet: model.y_alphabet,
        theta_partition: model.theta_partition.as_ref().map(partition_to_dto),
        phi_partition: partition_to_dto(&model.phi_partition),
        xi: match &model.xi {
            XiTable::IdentityInX => XiDto::IdentityInX,
            XiTable::Table(t) => XiDto::Table { table: t.clone() },
        },
        t0: match &model.t0 {
            ThetaMap::PerSymbol(maps) => ThetaMapDto::PerSymbol {
                maps: maps.iter().map(map_to_dto).collect(),
            },
            ThetaMap::Shared(map) => ThetaMapDto::Shared {
                map: map_to_dto(map),
            },
        },
        t1: map_to_dto(&model.t1),
    }
}

pub fn model_from_dto(dto: &SourceModelDto) -> Result<SourceModel> {
    Ok(SourceModel {
        x_alphabet: dto.x_alphabet,
        z_alphabet: dto.z_alphabet,
        y_alphabet: dto.y_alphabet,
        theta_partition: dto
            .theta_partition
            .as_ref()
            .map(|e| partition_from_dto(e))
            .transpose()?,
        phi_partition: partition_from_dto(&dto.phi_partition)?,
        xi: match &dto.xi {
            XiDto::IdentityInX => XiTable::IdentityInX,
            XiDto::Table { table } => XiTable::Table(table.clone()),
        },
        t0: match &dto.t0 {
            ThetaMapDto::PerSymbol { maps } => {
                let maps: Result<Vec<_>> = maps.iter().map(map_from_dto).collect();
                ThetaMap::PerSymbol(maps?)
            }
            ThetaMapDto::Shared { map } => ThetaMap::Shared(map_from_dto(map)?),
        },
        t1: map_from_dto(&dto.t1)?,
    })
}

pub fn model_to_json(model: &SourceModel) -> String {
    serde_json::to_string_pretty(&model_to_dto(model)).expect("model serialization")
}

pub fn model_from_json(text: &str) -> Result<SourceModel> {
    let dto: SourceModelDto =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    model_from_dto(&dto)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Lemma3,
    Theorem1,
    RateDistortion,
    LosslessRate,
    Gauss,
}

/// One pass/fail assertion over a named aggregate statistic.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Assertion {
    pub stat: String,
    /// "le" or "ge".
    pub op: String,
    pub value: f64,
}

impl Assertion {
    pub fn holds(&self, observed: f64) -> bool {
        match self.op.as_str() {
            "le" => observed <= self.value,
            "ge" => observed >= self.value,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Inline model; mutually exclusive with `model_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<SourceModelDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<String>,
    /// Memoryless output pmf for the lossless-rate experiment, rational
    /// strings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_y: Option<Vec<String>>,
    /// Inline joint `P_XY[x][y]` for the lossy experiments, rational strings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_xy: Option<Vec<Vec<String>>>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_typ: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_budget: Option<usize>,
    pub blocks: usize,
    pub seed: u64,
    /// Fraction bits of sampled initial states; defaults to `64 + 4n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_bits: Option<u64>,
    /// Sample count for the Lemma-3 trajectory statistics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Report path stem; `<stem>.json` and `<stem>.csv` are written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

impl ExperimentConfig {
    pub fn rate_rat(&self) -> Result<Rat> {
        rat_from_str(
            self.rate
                .as_deref()
                .ok_or_else(|| Error::Parse("config missing rate".into()))?,
        )
    }

    pub fn precision(&self) -> u64 {
        self.precision_bits.unwrap_or(64 + 4 * self.n as u64)
    }
}

/// One per-block record; `m` is decimal since indices overflow u64 at
/// moderate `nR`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BlockRecord {
    pub block: usize,
    pub success: bool,
    pub m: String,
    pub log2_delta_len: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<f64>,
    pub companion_attempts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub n: usize,
    pub blocks: usize,
    pub records: Vec<BlockRecord>,
    /// Named aggregates, deterministic order.
    pub aggregates: std::collections::BTreeMap<String, f64>,
    /// Assertion outcomes in config order: `(stat, holds)`.
    pub assertion_results: Vec<(String, bool)>,
}

impl Report {
    pub fn all_assertions_pass(&self) -> bool {
        self.assertion_results.iter().all(|(_, ok)| *ok)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    pub fn records_to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "block",
            "success",
            "m",
            "log2_delta_len",
            "distortion",
            "companion_attempts",
        ])
        .expect("csv header");
        for r in &self.records {
            w.write_record([
                r.block.to_string(),
                r.success.to_string(),
                r.m.clone(),
                format!("{:.12}", r.log2_delta_len),
                r.distortion.map(|d| format!("{:.12}", d)).unwrap_or_default(),
                r.companion_attempts.to_string(),
            ])
            .expect("csv record");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
    }
}

pub fn config_from_json(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::lossy::{build_pm_dual, functional_representation, hamming_joint};

    #[test]
    fn model_round_trip_bit_exact() {
        let pmf = hamming_joint(&rat(1, 4)).unwrap();
        let fr = functional_representation(&pmf).unwrap();
        let model = build_pm_dual(&pmf, &fr).unwrap();
        let text = model_to_json(&model);
        let back = model_from_json(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(model_to_json(&back), text);
    }

    #[test]
    fn gauss_model_round_trip() {
        let model = crate::lossless::build_gauss();
        let back = model_from_json(&model_to_json(&model)).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn memoryless_model_round_trip() {
        let model = crate::lossless::build_memoryless(&[rat(2, 3), rat(1, 3)]).unwrap();
        let back = model_from_json(&model_to_json(&model)).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rationals_survive_as_strings() {
        let pmf = hamming_joint(&rat(1, 10)).unwrap();
        let fr = functional_representation(&pmf).unwrap();
        let model = build_pm_dual(&pmf, &fr).unwrap();
        let text = model_to_json(&model);
        assert!(text.contains("\"1/10\"") || text.contains("\"9/10\""));
    }

    #[test]
    fn bad_expanding_pieces_rejected() {
        let text = r#"{
            "x_alphabet": 2, "z_alphabet": 1, "y_alphabet": 2,
            "theta_partition": ["0", "1/2", "1"],
            "phi_partition": ["0", "1"],
            "xi": {"kind": "identity_in_x"},
            "t0": {"kind": "shared", "map": {"kind": "expanding", "pieces": [
                {"domain": ["0", "1/2"], "slope": "1", "intercept": "0"},
                {"domain": ["1/2", "1"], "slope": "2", "intercept": "-1"}
            ]}},
            "t1": {"kind": "expanding", "pieces": [
                {"domain": ["0", "1"], "slope": "1", "intercept": "0"}
            ]}
        }"#;
        assert!(model_from_json(text).is_err());
    }

    #[test]
    fn config_parses_with_defaults() {
        let text = r#"{
            "kind": "rate_distortion",
            "p_xy": [["3/8", "1/8"], ["1/8", "3/8"]],
            "n": 128, "rate": "27/100", "epsilon": "1/20",
            "delta_typ": "1/20", "search_budget": 4096,
            "blocks": 10, "seed": 7,
            "assertions": [{"stat": "success_rate", "op": "ge", "value": 0.8}]
        }"#;
        let cfg = config_from_json(text).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::RateDistortion);
        assert_eq!(cfg.precision(), 64 + 4 * 128);
        assert_eq!(cfg.rate_rat().unwrap(), rat(27, 100));
        assert!(cfg.assertions[0].holds(0.9));
        assert!(!cfg.assertions[0].holds(0.7));
    }

    #[test]
    fn csv_has_expected_columns() {
        let report = Report {
            kind: ExperimentKind::RateDistortion,
            seed: 1,
            n: 4,
            blocks: 1,
            records: vec![BlockRecord {
                block: 0,
                success: true,
                m: "12".into(),
                log2_delta_len: -1.5,
                distortion: Some(0.25),
                companion_attempts: 3,
            }],
            aggregates: Default::default(),
            assertion_results: vec![],
        };
        let csv = report.records_to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "block,success,m,log2_delta_len,distortion,companion_attempts"
        );
        assert!(lines.next().unwrap().starts_with("0,true,12,"));
    }
}
