//! Tabletop rearrangement on a 2x5 grid.
//!
//! Row 0 is the back row (farther from the camera) and row 1 the front row.
//! Every cell carries a fixed letter: columns are lettered left to right,
//! back cell before front cell, so column 0 is `A`/`B` and column 4 is
//! `I`/`J`. Empty cells are addressed by their letter.

mod expert;
mod features;
mod scene;

pub use expert::{expert_policy, inversions, optimal_distance};
pub use features::{classify_feature, generate_features, parse_feature, FeatureRole, Referent, Relation, RelationFeature};
pub use scene::{sample_scene, Split, Vocabulary};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ActionLabel, TaskSpec};

pub const ROWS: usize = 2;
pub const COLS: usize = 5;
pub const CELLS: usize = ROWS * COLS;
pub const DEFAULT_BUDGET: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("grid must have exactly {CELLS} cells, got {0}")]
    CellCount(usize),
    #[error("object {0:?} appears more than once on the grid")]
    DuplicateObject(String),
    #[error("invalid object name {0:?}")]
    BadObjectName(String),
    #[error("the grid has no empty cell")]
    NoEmptyCell,
    #[error("inadmissible move: {0}")]
    Inadmissible(String),
    #[error("target {0:?} is not on the grid")]
    MissingTarget(String),
    #[error("a task needs between 2 and 4 distinct targets, got {0}")]
    TargetCount(usize),
    #[error("{objects} objects leave no empty cell (at most {} fit)", CELLS - 1)]
    Capacity { objects: usize },
    #[error("vocabulary has {available} names but the scene needs {needed}")]
    VocabularyTooSmall { available: usize, needed: usize },
    #[error("the grid already satisfies the task")]
    AlreadySolved,
    #[error("no move makes progress towards the goal")]
    Stuck,
    #[error("cannot parse action {0:?}")]
    BadAction(String),
    #[error("cannot parse arrangement task id {0:?}")]
    BadTaskId(String),
}

/// A grid position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        debug_assert!(row < ROWS && col < COLS);
        Self { row, col }
    }

    /// Reading-order index (row-major).
    pub fn index(self) -> usize {
        self.row * COLS + self.col
    }

    pub fn from_index(index: usize) -> Self {
        Self::new(index / COLS, index % COLS)
    }

    pub fn letter(self) -> char {
        (b'A' + (self.col * ROWS + self.row) as u8) as char
    }

    pub fn from_letter(letter: char) -> Option<Self> {
        let code = (letter as u32).checked_sub('A' as u32)? as usize;
        (code < CELLS).then(|| Self::new(code % ROWS, code / ROWS))
    }

    pub fn all() -> impl Iterator<Item = Cell> {
        (0..CELLS).map(Cell::from_index)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "position {}", self.letter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawObject")]
pub struct ObjectLabel {
    pub name: String,
}

#[derive(Deserialize)]
struct RawObject {
    name: String,
}

impl TryFrom<RawObject> for ObjectLabel {
    type Error = EnvError;

    fn try_from(raw: RawObject) -> Result<Self, Self::Error> {
        ObjectLabel::new(raw.name)
    }
}

impl ObjectLabel {
    /// Names are lowercase words separated by single spaces; they must not
    /// begin with `position` so they never read as an empty cell.
    pub fn new(name: impl Into<String>) -> Result<Self, EnvError> {
        let name = name.into();
        let words_ok =
            !name.is_empty() && name.split(' ').all(|w| !w.is_empty() && w.chars().all(|c| c.is_ascii_lowercase() || c == '-'));
        if !words_ok || name.split(' ').next() == Some("position") {
            return Err(EnvError::BadObjectName(name));
        }
        Ok(Self { name })
    }
}

impl fmt::Display for ObjectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "the {}", self.name)
    }
}

/// Occupancy of the 2x5 table grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridRecord", into = "GridRecord")]
pub struct Grid {
    cells: [Option<ObjectLabel>; CELLS],
}

#[derive(Serialize, Deserialize)]
struct GridRecord {
    rows: usize,
    cols: usize,
    cells: Vec<Option<String>>,
    #[serde(default)]
    empty_names: Vec<char>,
}

impl TryFrom<GridRecord> for Grid {
    type Error = EnvError;

    fn try_from(rec: GridRecord) -> Result<Self, Self::Error> {
        if rec.rows != ROWS || rec.cols != COLS {
            return Err(EnvError::CellCount(rec.rows * rec.cols));
        }
        Grid::from_cells(rec.cells)
    }
}

impl From<Grid> for GridRecord {
    fn from(g: Grid) -> Self {
        GridRecord {
            rows: ROWS,
            cols: COLS,
            empty_names: g.empty_cells().map(Cell::letter).collect(),
            cells: g.cells.into_iter().map(|c| c.map(|o| o.name)).collect(),
        }
    }
}

impl Grid {
    pub fn empty() -> Self {
        Self { cells: Default::default() }
    }

    /// Builds a grid from cells in reading order (`None` = empty).
    pub fn from_cells<I, S>(cells: I) -> Result<Self, EnvError>
    where
        I: IntoIterator<Item = Option<S>>,
        S: Into<String>,
    {
        let cells: Vec<Option<String>> = cells.into_iter().map(|c| c.map(Into::into)).collect();
        if cells.len() != CELLS {
            return Err(EnvError::CellCount(cells.len()));
        }
        let mut grid = Grid::empty();
        for (i, name) in cells.into_iter().enumerate() {
            if let Some(name) = name {
                grid.place(Cell::from_index(i), ObjectLabel::new(name)?)?;
            }
        }
        Ok(grid)
    }

    /// Puts an object into a cell, replacing whatever was there.
    pub fn place(&mut self, cell: Cell, object: ObjectLabel) -> Result<(), EnvError> {
        if self.find(&object).is_some_and(|c| c != cell) {
            return Err(EnvError::DuplicateObject(object.name));
        }
        self.cells[cell.index()] = Some(object);
        Ok(())
    }

    pub fn at(&self, cell: Cell) -> Option<&ObjectLabel> {
        self.cells[cell.index()].as_ref()
    }

    pub fn find(&self, object: &ObjectLabel) -> Option<Cell> {
        self.cells.iter().position(|c| c.as_ref() == Some(object)).map(Cell::from_index)
    }

    pub fn find_name(&self, name: &str) -> Option<Cell> {
        self.cells.iter().position(|c| c.as_ref().is_some_and(|o| o.name == name)).map(Cell::from_index)
    }

    /// Objects with their cells, in reading order.
    pub fn objects(&self) -> impl Iterator<Item = (Cell, &ObjectLabel)> {
        self.cells.iter().enumerate().filter_map(|(i, c)| c.as_ref().map(|o| (Cell::from_index(i), o)))
    }

    /// Empty cells in letter order.
    pub fn empty_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let mut cells: Vec<Cell> = Cell::all().filter(|&c| self.at(c).is_none()).collect();
        cells.sort_by_key(|c| c.letter());
        cells.into_iter()
    }

    pub fn object_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Every object paired with every empty cell: objects in reading order,
    /// then destinations by letter.
    pub fn admissible_actions(&self) -> Result<Vec<MoveAction>, EnvError> {
        let empties: Vec<Cell> = self.empty_cells().collect();
        if empties.is_empty() {
            return Err(EnvError::NoEmptyCell);
        }
        Ok(self
            .objects()
            .flat_map(|(_, o)| empties.iter().map(move |d| MoveAction { object: o.clone(), destination: d.letter() }))
            .collect())
    }

    /// Moves an object to an empty cell, returning the new grid.
    pub fn apply(&self, action: &MoveAction) -> Result<Grid, EnvError> {
        let from =
            self.find(&action.object).ok_or_else(|| EnvError::Inadmissible(format!("{} is not on the table", action.object)))?;
        let to = Cell::from_letter(action.destination)
            .ok_or_else(|| EnvError::Inadmissible(format!("there is no position {}", action.destination)))?;
        if let Some(occupant) = self.at(to) {
            return Err(EnvError::Inadmissible(format!("position {} is occupied by {}", action.destination, occupant)));
        }
        let mut next = self.clone();
        next.cells[to.index()] = next.cells[from.index()].take();
        Ok(next)
    }

    /// True iff the targets' columns strictly increase in task order.
    pub fn is_success(&self, task: &ArrangementTask) -> Result<bool, EnvError> {
        let cols = self.target_columns(task)?;
        Ok(cols.windows(2).all(|w| w[0] < w[1]))
    }

    pub fn target_columns(&self, task: &ArrangementTask) -> Result<Vec<usize>, EnvError> {
        task.targets.iter().map(|t| self.find(t).map(|c| c.col).ok_or_else(|| EnvError::MissingTarget(t.name.clone()))).collect()
    }
}

/// `move the <object> to position <letter>.`
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MoveAction {
    pub object: ObjectLabel,
    pub destination: char,
}

impl MoveAction {
    pub fn label(&self) -> ActionLabel {
        ActionLabel { text: self.to_string() }
    }

    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let bad = || EnvError::BadAction(text.to_owned());
        let rest = text.trim().strip_prefix("move the ").ok_or_else(bad)?;
        let rest = rest.strip_suffix('.').unwrap_or(rest);
        let (name, dest) = rest.rsplit_once(" to position ").ok_or_else(bad)?;
        let mut letters = dest.chars();
        let (Some(letter), None) = (letters.next(), letters.next()) else {
            return Err(bad());
        };
        Cell::from_letter(letter).ok_or_else(bad)?;
        Ok(Self { object: ObjectLabel::new(name).map_err(|_| bad())?, destination: letter })
    }
}

impl fmt::Display for MoveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "move {} to position {}.", self.object, self.destination)
    }
}

/// Order `targets` left to right (by column) within `budget` moves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArrangementTask {
    pub targets: Vec<ObjectLabel>,
    pub budget: usize,
}

const TASK_ID_PREFIX: &str = "arrange:";

impl ArrangementTask {
    pub fn new<I, S>(targets: I) -> Result<Self, EnvError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let targets = targets.into_iter().map(ObjectLabel::new).collect::<Result<Vec<_>, _>>()?;
        let mut names: Vec<&str> = targets.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if !(2..=4).contains(&targets.len()) || names.len() != targets.len() {
            return Err(EnvError::TargetCount(names.len()));
        }
        Ok(Self { targets, budget: DEFAULT_BUDGET })
    }

    pub fn task_spec(&self) -> TaskSpec {
        let names: Vec<&str> = self.targets.iter().map(|t| t.name.as_str()).collect();
        TaskSpec {
            id: format!("{TASK_ID_PREFIX}{}", names.join(",")),
            description: format!("arrange the objects in the order: {}", names.join(", ")),
        }
    }

    /// Recovers the task from an id produced by [`ArrangementTask::task_spec`].
    pub fn from_task_id(id: &str) -> Result<Self, EnvError> {
        let names = id.strip_prefix(TASK_ID_PREFIX).ok_or_else(|| EnvError::BadTaskId(id.to_owned()))?;
        Self::new(names.split(','))
    }

    pub fn is_target(&self, name: &str) -> bool {
        self.targets.iter().any(|t| t.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(cells: [Option<&str>; CELLS]) -> Grid {
        Grid::from_cells(cells).unwrap()
    }

    #[test]
    fn letters_are_fixed_per_cell() {
        assert_eq!(Cell::new(0, 0).letter(), 'A');
        assert_eq!(Cell::new(1, 0).letter(), 'B');
        assert_eq!(Cell::new(0, 2).letter(), 'E');
        assert_eq!(Cell::new(0, 3).letter(), 'G');
        assert_eq!(Cell::new(1, 4).letter(), 'J');
        for c in Cell::all() {
            assert_eq!(Cell::from_letter(c.letter()), Some(c));
        }
        assert_eq!(Cell::from_letter('K'), None);
    }

    #[test]
    fn action_counts() {
        let mut cells: [Option<&str>; CELLS] = [None; CELLS];
        let names = ["a", "b", "c", "d", "e", "f", "g", "h", "i"];
        for (i, n) in names.iter().enumerate() {
            cells[i] = Some(n);
        }
        assert_eq!(grid(cells).admissible_actions().unwrap().len(), 9);
        cells[7] = None;
        cells[8] = None;
        assert_eq!(grid(cells).admissible_actions().unwrap().len(), 21);
        let mut one = [None; CELLS];
        one[3] = Some("ball");
        assert_eq!(grid(one).admissible_actions().unwrap().len(), 9);
    }

    #[test]
    fn full_grid_has_no_actions() {
        let names = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let g = Grid::from_cells(names.map(Some)).unwrap();
        assert_eq!(g.admissible_actions(), Err(EnvError::NoEmptyCell));
    }

    #[test]
    fn admissible_order_is_object_then_letter() {
        let mut cells = [None; CELLS];
        cells[Cell::new(1, 0).index()] = Some("soda");
        cells[Cell::new(0, 3).index()] = Some("ball");
        let g = grid(cells);
        let acts = g.admissible_actions().unwrap();
        assert_eq!(acts[0].to_string(), "move the ball to position A.");
        assert_eq!(acts[1].to_string(), "move the ball to position C.");
        assert_eq!(acts.len(), 16);
        assert_eq!(acts[8].to_string(), "move the soda to position A.");
    }

    #[test]
    fn apply_and_undo() {
        let mut cells = [None; CELLS];
        cells[0] = Some("ball");
        let g = grid(cells);
        let dest = Cell::new(1, 4);
        let mv = MoveAction { object: ObjectLabel::new("ball").unwrap(), destination: dest.letter() };
        let moved = g.apply(&mv).unwrap();
        assert_eq!(moved.find_name("ball"), Some(dest));
        assert!(moved.at(Cell::new(0, 0)).is_none());
        let back = moved.apply(&MoveAction { object: mv.object.clone(), destination: 'A' }).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn apply_onto_occupied_cell_fails() {
        let mut cells = [None; CELLS];
        cells[0] = Some("ball");
        cells[1] = Some("soda");
        let g = grid(cells);
        let err = g
            .apply(&MoveAction { object: ObjectLabel::new("ball").unwrap(), destination: Cell::new(0, 1).letter() })
            .unwrap_err();
        assert!(matches!(err, EnvError::Inadmissible(ref m) if m.contains("occupied")));
        let err = g.apply(&MoveAction { object: ObjectLabel::new("kiwi").unwrap(), destination: 'B' }).unwrap_err();
        assert!(matches!(err, EnvError::Inadmissible(ref m) if m.contains("not on the table")));
    }

    #[test]
    fn success_ignores_rows() {
        let task = ArrangementTask::new(["ball", "soda", "doughnut"]).unwrap();
        let mut cells = [None; CELLS];
        cells[Cell::new(1, 0).index()] = Some("ball");
        cells[Cell::new(0, 2).index()] = Some("soda");
        cells[Cell::new(1, 4).index()] = Some("doughnut");
        cells[Cell::new(0, 0).index()] = Some("apple");
        assert!(grid(cells).is_success(&task).unwrap());

        let mut bad = [None; CELLS];
        bad[Cell::new(0, 2).index()] = Some("ball");
        bad[Cell::new(0, 0).index()] = Some("soda");
        bad[Cell::new(0, 4).index()] = Some("doughnut");
        assert!(!grid(bad).is_success(&task).unwrap());
    }

    #[test]
    fn same_column_targets_fail_for_every_placement() {
        // exhaustive over placements of two targets
        let task = ArrangementTask::new(["ball", "soda"]).unwrap();
        for a in Cell::all() {
            for b in Cell::all().filter(|&b| b != a) {
                let mut cells = [None; CELLS];
                cells[a.index()] = Some("ball");
                cells[b.index()] = Some("soda");
                let expected = a.col < b.col;
                assert_eq!(grid(cells).is_success(&task).unwrap(), expected, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn missing_target_is_an_error() {
        let task = ArrangementTask::new(["ball", "soda"]).unwrap();
        let mut cells = [None; CELLS];
        cells[0] = Some("ball");
        assert_eq!(grid(cells).is_success(&task), Err(EnvError::MissingTarget("soda".into())));
    }

    #[test]
    fn action_text_round_trips() {
        let mv = MoveAction::parse("move the water bottle to position C.").unwrap();
        assert_eq!(mv.object.name, "water bottle");
        assert_eq!(mv.destination, 'C');
        assert_eq!(mv.to_string(), "move the water bottle to position C.");
        assert!(MoveAction::parse("move the ball to position Z.").is_err());
        assert!(MoveAction::parse("throw the ball").is_err());
    }

    #[test]
    fn task_ids_round_trip() {
        let task = ArrangementTask::new(["ball", "water bottle"]).unwrap();
        let spec = task.task_spec();
        assert_eq!(spec.description, "arrange the objects in the order: ball, water bottle");
        assert_eq!(ArrangementTask::from_task_id(&spec.id).unwrap(), task);
        assert!(ArrangementTask::new(["ball"]).is_err());
        assert!(ArrangementTask::new(["ball", "ball"]).is_err());
    }

    #[test]
    fn grid_record_round_trips() {
        let mut cells = [None; CELLS];
        cells[2] = Some("ball");
        cells[7] = Some("water bottle");
        let g = grid(cells);
        let json = serde_json::to_string(&g).unwrap();
        assert!(json.contains("\"empty_names\""));
        let back: Grid = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }
}
