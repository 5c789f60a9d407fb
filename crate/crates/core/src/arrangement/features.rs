//! Pairwise spatial-relation sentences between grid cells.

use std::cmp::Ordering;

use super::{ArrangementTask, Cell, Grid, COLS, ROWS};
use crate::domain::FeatureSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Horizontal {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Depth {
    /// Farther from the camera (smaller row index).
    Behind,
    Beyond,
}

/// Relation of a subject cell to an object cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Relation {
    pub horizontal: Option<Horizontal>,
    pub depth: Option<Depth>,
}

impl Relation {
    pub fn between(subject: Cell, object: Cell) -> Option<Relation> {
        let horizontal = match subject.col.cmp(&object.col) {
            Ordering::Less => Some(Horizontal::Left),
            Ordering::Greater => Some(Horizontal::Right),
            Ordering::Equal => None,
        };
        let depth = match subject.row.cmp(&object.row) {
            Ordering::Less => Some(Depth::Behind),
            Ordering::Greater => Some(Depth::Beyond),
            Ordering::Equal => None,
        };
        (horizontal.is_some() || depth.is_some()).then_some(Relation { horizontal, depth })
    }

    pub fn phrase(self) -> &'static str {
        use Depth::*;
        use Horizontal::*;
        match (self.horizontal, self.depth) {
            (Some(Left), None) => "to the left of",
            (Some(Right), None) => "to the right of",
            (None, Some(Behind)) => "behind",
            (None, Some(Beyond)) => "beyond",
            (Some(Left), Some(Behind)) => "to the left of and behind",
            (Some(Left), Some(Beyond)) => "to the left of and beyond",
            (Some(Right), Some(Behind)) => "to the right of and behind",
            (Some(Right), Some(Beyond)) => "to the right of and beyond",
            (None, None) => unreachable!("identical cells have no relation"),
        }
    }

    pub fn inverse(self) -> Relation {
        Relation {
            horizontal: self.horizontal.map(|h| match h {
                Horizontal::Left => Horizontal::Right,
                Horizontal::Right => Horizontal::Left,
            }),
            depth: self.depth.map(|d| match d {
                Depth::Behind => Depth::Beyond,
                Depth::Beyond => Depth::Behind,
            }),
        }
    }

    // longest phrases first so compound relations win
    const ALL: [Relation; 8] = {
        use Depth::*;
        use Horizontal::*;
        [
            Relation { horizontal: Some(Right), depth: Some(Behind) },
            Relation { horizontal: Some(Right), depth: Some(Beyond) },
            Relation { horizontal: Some(Left), depth: Some(Behind) },
            Relation { horizontal: Some(Left), depth: Some(Beyond) },
            Relation { horizontal: Some(Right), depth: None },
            Relation { horizontal: Some(Left), depth: None },
            Relation { horizontal: None, depth: Some(Behind) },
            Relation { horizontal: None, depth: Some(Beyond) },
        ]
    };
}

/// How a cell is named in a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Referent {
    Object(String),
    Position(char),
}

impl Referent {
    fn of(grid: &Grid, cell: Cell) -> Referent {
        match grid.at(cell) {
            Some(o) => Referent::Object(o.name.clone()),
            None => Referent::Position(cell.letter()),
        }
    }

    fn parse(text: &str) -> Option<Referent> {
        if let Some(name) = text.strip_prefix("the ") {
            return (!name.is_empty()).then(|| Referent::Object(name.to_owned()));
        }
        let letter = text.strip_prefix("position ")?;
        let mut chars = letter.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if Cell::from_letter(c).is_some() => Some(Referent::Position(c)),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Referent::Object(name) => format!("the {name}"),
            Referent::Position(letter) => format!("position {letter}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RelationFeature {
    pub subject: Referent,
    pub relation: Relation,
    pub object: Referent,
}

impl RelationFeature {
    pub fn text(&self) -> String {
        format!("{} is {} {}.", self.subject.render(), self.relation.phrase(), self.object.render())
    }
}

/// Inverse of [`RelationFeature::text`].
pub fn parse_feature(text: &str) -> Option<RelationFeature> {
    let body = text.trim().strip_suffix('.')?;
    let (subject, rest) = body.split_once(" is ")?;
    let subject = Referent::parse(subject)?;
    Relation::ALL.iter().find_map(|&relation| {
        let object = rest.strip_prefix(relation.phrase())?.strip_prefix(' ')?;
        Some(RelationFeature { subject: subject.clone(), relation, object: Referent::parse(object)? })
    })
}

/// One sentence per ordered pair of distinct cells, sorted by text.
pub fn generate_features(grid: &Grid) -> FeatureSet {
    let mut texts = Vec::with_capacity(ROWS * COLS * (ROWS * COLS - 1));
    for a in Cell::all() {
        for b in Cell::all() {
            if let Some(relation) = Relation::between(a, b) {
                let feature = RelationFeature { subject: Referent::of(grid, a), relation, object: Referent::of(grid, b) };
                texts.push(feature.text());
            }
        }
    }
    texts.sort_unstable();
    FeatureSet::new(texts).expect("relation sentences are distinct and non-empty")
}

/// Task relevance of a relation sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureRole {
    /// Horizontal relation between targets or a target and an empty cell.
    Relevant,
    /// Mentions a non-target object.
    Distractor,
    Neutral,
}

pub fn classify_feature(text: &str, task: &ArrangementTask) -> Option<FeatureRole> {
    let f = parse_feature(text)?;
    let is_target = |r: &Referent| matches!(r, Referent::Object(n) if task.is_target(n));
    let is_distractor = |r: &Referent| matches!(r, Referent::Object(n) if !task.is_target(n));
    Some(if is_distractor(&f.subject) || is_distractor(&f.object) {
        FeatureRole::Distractor
    } else if f.relation.horizontal.is_some() && (is_target(&f.subject) || is_target(&f.object)) {
        FeatureRole::Relevant
    } else {
        FeatureRole::Neutral
    })
}
