use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ArrangementTask, Cell, EnvError, Grid, ObjectLabel, CELLS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Disjoint object-name pools for training and held-out scenes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let words = |w: &[&str]| w.iter().map(|s| s.to_string()).collect();
        Self {
            train: words(&[
                "apple",
                "ball",
                "banana",
                "bottle",
                "cup",
                "doughnut",
                "lemon",
                "orange",
                "soda",
                "sponge",
                "toothpaste",
                "water bottle",
            ]),
            test: words(&[
                "candle",
                "eraser",
                "kiwi",
                "lime",
                "marker",
                "mug",
                "notebook",
                "pear",
                "remote control",
                "spoon",
                "stapler",
                "tape measure",
            ]),
        }
    }
}

impl Vocabulary {
    pub fn pool(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Checks names are valid and the pools share no word, so a held-out
    /// name never partially matches a training name.
    pub fn validate(&self) -> Result<(), EnvError> {
        let mut train_words = std::collections::HashSet::new();
        for name in &self.train {
            ObjectLabel::new(name.clone())?;
            train_words.extend(name.split(' '));
        }
        for name in &self.test {
            ObjectLabel::new(name.clone())?;
            if let Some(w) = name.split(' ').find(|w| train_words.contains(w)) {
                return Err(EnvError::BadObjectName(format!("{name} (shares {w:?} with train pool)")));
            }
        }
        Ok(())
    }
}

/// Places `n_targets + n_distractors` distinct objects uniformly at random
/// and draws a target order that the initial layout does not satisfy.
pub fn sample_scene<R: Rng + ?Sized>(
    rng: &mut R,
    n_targets: usize,
    n_distractors: usize,
    vocabulary: &Vocabulary,
    split: Split,
) -> Result<(Grid, ArrangementTask), EnvError> {
    if !(2..=4).contains(&n_targets) {
        return Err(EnvError::TargetCount(n_targets));
    }
    let objects = n_targets + n_distractors;
    if objects >= CELLS {
        return Err(EnvError::Capacity { objects });
    }
    let pool = vocabulary.pool(split);
    if pool.len() < objects {
        return Err(EnvError::VocabularyTooSmall { available: pool.len(), needed: objects });
    }
    loop {
        let names: Vec<&String> = pool.choose_multiple(rng, objects).collect();
        let mut cells: Vec<usize> = (0..CELLS).collect();
        cells.shuffle(rng);
        let mut grid = Grid::empty();
        for (name, &cell) in names.iter().zip(&cells) {
            grid.place(Cell::from_index(cell), ObjectLabel::new(name.as_str())?)?;
        }
        let mut targets: Vec<&String> = names[..n_targets].to_vec();
        targets.shuffle(rng);
        let task = ArrangementTask::new(targets.into_iter().cloned())?;
        if !grid.is_success(&task)? {
            return Ok((grid, task));
        }
    }
}
