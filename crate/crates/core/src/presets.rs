//! The 15-variable annual-screening layout used as the canonical schema.

use crate::mask::{Block, BlockKind, BlockOrder};
use crate::panel::{PanelSchema, Role, ValueType, Variable};

pub const INTERVENTION: &str = "Health-guidance";
pub const OUTCOMES: [&str; 5] = ["BMI", "SBP", "DBP", "HbA1c", "LDL"];
pub const MEDICATION: [&str; 3] = ["Drug-HT", "Drug-DM", "Drug-LDL"];
pub const LIFESTYLE: [&str; 3] = ["Smoke", "Exercise", "Alcohol"];
pub const BACKGROUND: [&str; 2] = ["Age", "Sex"];
pub const BASELINE: &str = "Check_num.";
pub const TIME_LABELS: [i32; 4] = [2020, 2021, 2022, 2023];

pub fn paper_schema() -> PanelSchema {
    let mut vars = vec![Variable::new(INTERVENTION, Role::Intervention, ValueType::Binary)];
    vars.extend(
        OUTCOMES
            .iter()
            .map(|n| Variable::new(*n, Role::Outcome, ValueType::Continuous)),
    );
    vars.extend(
        MEDICATION
            .iter()
            .chain(LIFESTYLE.iter())
            .map(|n| Variable::new(*n, Role::ExogenousInput, ValueType::Binary)),
    );
    vars.push(Variable::new("Age", Role::ExogenousInput, ValueType::Continuous));
    vars.push(Variable::new("Sex", Role::ExogenousInput, ValueType::Binary));
    vars.push(Variable::new(BASELINE, Role::BaselineOnly, ValueType::Categorical));
    PanelSchema::new(vars, TIME_LABELS.to_vec()).expect("preset schema is valid")
}

/// Intervention, demographics and attendance history first; medication and
/// lifestyle as two mutually unordered blocks; outcomes last.
pub fn paper_blocks() -> BlockOrder {
    let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    BlockOrder {
        blocks: vec![
            Block {
                name: "guidance".into(),
                kind: BlockKind::Intervention,
                rank: 0,
                members: vec![INTERVENTION.into()],
            },
            Block {
                name: "background".into(),
                kind: BlockKind::Background,
                rank: 0,
                members: names(&BACKGROUND),
            },
            Block {
                name: "attendance".into(),
                kind: BlockKind::Baseline,
                rank: 0,
                members: vec![BASELINE.into()],
            },
            Block {
                name: "medication".into(),
                kind: BlockKind::Medication,
                rank: 1,
                members: names(&MEDICATION),
            },
            Block {
                name: "lifestyle".into(),
                kind: BlockKind::Lifestyle,
                rank: 1,
                members: names(&LIFESTYLE),
            },
            Block {
                name: "outcomes".into(),
                kind: BlockKind::Outcome,
                rank: 2,
                members: names(&OUTCOMES),
            },
        ],
    }
}
