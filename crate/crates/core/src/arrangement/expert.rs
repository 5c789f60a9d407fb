//! Synthesized expert for the arrangement task.
//!
//! The expert follows shortest plans. Distances to the nearest successful
//! arrangement are tabulated once per (target count, distractor count) over an
//! abstract state where distractors are interchangeable, so a move is chosen
//! by table lookups only. Among optimal moves the expert prefers moving a
//! target over a distractor, then the fewest remaining column inversions,
//! then targets in task order, then the lowest destination letter. A
//! distractor moves only when every shortest plan needs it: some scenes have
//! no target-only solution at all.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};

use super::{ArrangementTask, Cell, EnvError, Grid, MoveAction, CELLS};

const EMPTY: u8 = 0;
const DISTRACTOR: u8 = 1;
const FIRST_TARGET: u8 = 2;

type Abstract = [u8; CELLS];

struct DistanceTable {
    distance: HashMap<Abstract, u8>,
}

fn abstract_state(grid: &Grid, task: &ArrangementTask) -> Result<Abstract, EnvError> {
    let mut state = [EMPTY; CELLS];
    for (cell, object) in grid.objects() {
        state[cell.index()] = match task.targets.iter().position(|t| t == object) {
            Some(i) => FIRST_TARGET + i as u8,
            None => DISTRACTOR,
        };
    }
    for t in &task.targets {
        if grid.find(t).is_none() {
            return Err(EnvError::MissingTarget(t.name.clone()));
        }
    }
    Ok(state)
}

fn abstract_success(state: &Abstract, targets: usize) -> bool {
    let mut cols = [usize::MAX; 4];
    for (i, &v) in state.iter().enumerate() {
        if v >= FIRST_TARGET {
            cols[(v - FIRST_TARGET) as usize] = Cell::from_index(i).col;
        }
    }
    cols[..targets].windows(2).all(|w| w[0] < w[1])
}

fn neighbours(state: &Abstract) -> impl Iterator<Item = Abstract> + '_ {
    (0..CELLS).filter(|&from| state[from] != EMPTY).flat_map(move |from| {
        (0..CELLS).filter(|&to| state[to] == EMPTY).map(move |to| {
            let mut next = *state;
            next.swap(from, to);
            next
        })
    })
}

fn enumerate_states(targets: usize, distractors: usize) -> Vec<Abstract> {
    fn fill(state: &mut Abstract, pos: usize, remaining: &mut [usize], out: &mut Vec<Abstract>) {
        if pos == CELLS {
            out.push(*state);
            return;
        }
        for code in 0..remaining.len() {
            if remaining[code] > 0 {
                remaining[code] -= 1;
                state[pos] = code as u8;
                fill(state, pos + 1, remaining, out);
                remaining[code] += 1;
            }
        }
    }
    let mut remaining = vec![CELLS - targets - distractors, distractors];
    remaining.extend(std::iter::repeat_n(1, targets));
    let mut out = Vec::new();
    fill(&mut [EMPTY; CELLS], 0, &mut remaining, &mut out);
    out
}

impl DistanceTable {
    fn build(targets: usize, distractors: usize) -> Self {
        let states = enumerate_states(targets, distractors);
        let mut distance = HashMap::with_capacity(states.len());
        let mut queue = VecDeque::new();
        for s in states {
            if abstract_success(&s, targets) {
                distance.insert(s, 0u8);
                queue.push_back(s);
            }
        }
        // moves are reversible, so a multi-source search from the goal set
        // yields distances-to-goal
        while let Some(s) = queue.pop_front() {
            let d = distance[&s];
            for n in neighbours(&s) {
                distance.entry(n).or_insert_with(|| {
                    queue.push_back(n);
                    d + 1
                });
            }
        }
        Self { distance }
    }

    fn shared(targets: usize, distractors: usize) -> Arc<DistanceTable> {
        type Cache = Mutex<HashMap<(usize, usize), Arc<DistanceTable>>>;
        static TABLES: OnceLock<Cache> = OnceLock::new();
        let tables = TABLES.get_or_init(Default::default);
        if let Some(t) = tables.lock().expect("table cache poisoned").get(&(targets, distractors)) {
            return Arc::clone(t);
        }
        let table = Arc::new(Self::build(targets, distractors));
        tables.lock().expect("table cache poisoned").entry((targets, distractors)).or_insert(table).clone()
    }
}

/// Number of target pairs whose columns are not strictly increasing in task
/// order.
pub fn inversions(grid: &Grid, task: &ArrangementTask) -> Result<usize, EnvError> {
    let cols = grid.target_columns(task)?;
    let mut count = 0;
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            if cols[i] >= cols[j] {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Minimum number of moves to a successful arrangement, or `None` when the
/// goal is unreachable (no empty cell).
pub fn optimal_distance(grid: &Grid, task: &ArrangementTask) -> Result<Option<usize>, EnvError> {
    let state = abstract_state(grid, task)?;
    if grid.object_count() >= CELLS {
        return Ok(abstract_success(&state, task.targets.len()).then_some(0));
    }
    let distractors = grid.object_count() - task.targets.len();
    let table = DistanceTable::shared(task.targets.len(), distractors);
    Ok(table.distance.get(&state).map(|&d| d as usize))
}

/// The next expert move. Fails when the grid already satisfies the task or
/// when no move gets closer to the goal.
pub fn expert_policy(grid: &Grid, task: &ArrangementTask) -> Result<MoveAction, EnvError> {
    if grid.is_success(task)? {
        return Err(EnvError::AlreadySolved);
    }
    let actions = grid.admissible_actions()?;
    let current = optimal_distance(grid, task)?.ok_or(EnvError::Stuck)?;

    let mover_rank = |mv: &MoveAction| {
        task.targets
            .iter()
            .position(|t| *t == mv.object)
            .unwrap_or(task.targets.len() + grid.find(&mv.object).map_or(0, Cell::index))
    };
    let mut best: Option<((bool, usize, usize, char), MoveAction)> = None;
    for mv in actions {
        let next = grid.apply(&mv)?;
        if optimal_distance(&next, task)? != Some(current - 1) {
            continue;
        }
        let moves_distractor = !task.targets.contains(&mv.object);
        let key = (moves_distractor, inversions(&next, task)?, mover_rank(&mv), mv.destination);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, mv));
        }
    }
    best.map(|(_, mv)| mv).ok_or(EnvError::Stuck)
}
