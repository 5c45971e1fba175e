//! Square mazes with five deterministic actions.
//!
//! Cell `(row, col)` is state `row * n + col`. `h_walls[r][c]` separates
//! `(r, c)` from `(r, c + 1)` and `v_walls[r][c]` separates `(r, c)` from
//! `(r + 1, c)`. Walls block in both directions.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Environment;

pub const ACTION_NAMES: [&str; 5] = ["up", "down", "left", "right", "stay"];
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const STAY: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MazeJson", into = "MazeJson")]
pub struct Maze {
    n: usize,
    gamma: f64,
    h_walls: Vec<Vec<bool>>,
    v_walls: Vec<Vec<bool>>,
}

#[derive(Serialize, Deserialize)]
struct MazeJson {
    n: usize,
    gamma: f64,
    h_walls: Vec<Vec<bool>>,
    v_walls: Vec<Vec<bool>>,
}

impl TryFrom<MazeJson> for Maze {
    type Error = Error;

    fn try_from(j: MazeJson) -> Result<Self> {
        Maze::new(j.n, j.gamma, j.h_walls, j.v_walls)
    }
}

impl From<Maze> for MazeJson {
    fn from(m: Maze) -> Self {
        MazeJson {
            n: m.n,
            gamma: m.gamma,
            h_walls: m.h_walls,
            v_walls: m.v_walls,
        }
    }
}

fn check_shape(walls: &[Vec<bool>], rows: usize, cols: usize, what: &str) -> Result<()> {
    if walls.len() != rows || walls.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidEnvironment(format!("{what} must be {rows}x{cols}")));
    }
    Ok(())
}

impl Maze {
    pub fn new(n: usize, gamma: f64, h_walls: Vec<Vec<bool>>, v_walls: Vec<Vec<bool>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidEnvironment("maze needs at least one cell".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidEnvironment(format!("discount {gamma} outside (0, 1)")));
        }
        check_shape(&h_walls, n, n - 1, "h_walls")?;
        check_shape(&v_walls, n - 1, n, "v_walls")?;
        Ok(Maze {
            n,
            gamma,
            h_walls,
            v_walls,
        })
    }

    pub fn open(n: usize, gamma: f64) -> Result<Self> {
        Maze::new(n, gamma, vec![vec![false; n.saturating_sub(1)]; n], vec![vec![false; n]; n.saturating_sub(1)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h_walls(&self) -> &[Vec<bool>] {
        &self.h_walls
    }

    pub fn v_walls(&self) -> &[Vec<bool>] {
        &self.v_walls
    }

    pub fn num_edges(&self) -> usize {
        2 * self.n * (self.n - 1)
    }

    pub fn num_walls(&self) -> usize {
        self.h_walls.iter().chain(&self.v_walls).flatten().filter(|&&w| w).count()
    }

    /// Sets the wall between two orthogonally adjacent cells.
    pub fn set_wall(&mut self, a: (usize, usize), b: (usize, usize), present: bool) -> Result<()> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let n = self.n;
        if hi.0 >= n || hi.1 >= n {
            return Err(Error::Domain(format!("cell {hi:?} outside a {n}x{n} maze")));
        }
        if lo.0 == hi.0 && lo.1 + 1 == hi.1 {
            self.h_walls[lo.0][lo.1] = present;
        } else if lo.1 == hi.1 && lo.0 + 1 == hi.0 {
            self.v_walls[lo.0][lo.1] = present;
        } else {
            return Err(Error::Domain(format!("cells {a:?} and {b:?} are not adjacent")));
        }
        Ok(())
    }

    /// Cell reached from `(row, col)` under `action`.
    pub fn step(&self, row: usize, col: usize, action: usize) -> (usize, usize) {
        let n = self.n;
        match action {
            UP if row > 0 && !self.v_walls[row - 1][col] => (row - 1, col),
            DOWN if row + 1 < n && !self.v_walls[row][col] => (row + 1, col),
            LEFT if col > 0 && !self.h_walls[row][col - 1] => (row, col - 1),
            RIGHT if col + 1 < n && !self.h_walls[row][col] => (row, col + 1),
            _ => (row, col),
        }
    }

    pub fn compile(&self) -> Environment {
        let n = self.n;
        let next: Vec<Vec<usize>> = (0..ACTION_NAMES.len())
            .map(|a| {
                (0..n * n)
                    .map(|s| {
                        let (r, c) = self.step(s / n, s % n, a);
                        r * n + c
                    })
                    .collect()
            })
            .collect();
        let names = ACTION_NAMES.iter().map(|s| s.to_string()).collect();
        Environment::deterministic(names, &next, self.gamma).expect("maze dynamics are valid")
    }

    pub fn to_ascii(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Maze {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.n;
        writeln!(f, "+{}", "--+".repeat(n))?;
        for r in 0..n {
            let mut line = String::from("|");
            for c in 0..n {
                line.push_str("  ");
                line.push(if c + 1 == n || self.h_walls[r][c] { '|' } else { ' ' });
            }
            writeln!(f, "{line}")?;
            let mut floor = String::from("+");
            for c in 0..n {
                floor.push_str(if r + 1 == n || self.v_walls[r][c] { "--" } else { "  " });
                floor.push('+');
            }
            writeln!(f, "{floor}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MazeDistribution {
    /// Every interior edge walled independently with probability `p`.
    Uniform { p: f64 },
    /// Per-row probability for the edges inside each row and per-column
    /// probability for the edges inside each column, drawn uniformly.
    Varied,
}

impl Default for MazeDistribution {
    fn default() -> Self {
        MazeDistribution::Uniform { p: 0.5 }
    }
}

impl MazeDistribution {
    pub fn uniform() -> Self {
        Self::default()
    }
}

pub fn sample_maze(dist: MazeDistribution, n: usize, gamma: f64, seed: u64) -> Result<Maze> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_maze_with(dist, n, gamma, &mut rng)
}

pub fn sample_maze_with<G: Rng>(dist: MazeDistribution, n: usize, gamma: f64, rng: &mut G) -> Result<Maze> {
    if n == 0 {
        return Err(Error::InvalidEnvironment("maze needs at least one cell".into()));
    }
    let (row_p, col_p) = match dist {
        MazeDistribution::Uniform { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("wall probability {p} outside [0, 1]")));
            }
            (vec![p; n], vec![p; n])
        }
        MazeDistribution::Varied => {
            let rows: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let cols: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            (rows, cols)
        }
    };
    let h_walls = (0..n)
        .map(|r| (0..n - 1).map(|_| rng.gen::<f64>() < row_p[r]).collect())
        .collect();
    let v_walls = (0..n - 1)
        .map(|_| (0..n).map(|c| rng.gen::<f64>() < col_p[c]).collect())
        .collect();
    Maze::new(n, gamma, h_walls, v_walls)
}

/// Mazes of one size and discount drawn from one distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazeUniverse {
    pub n: usize,
    pub gamma: f64,
    pub dist: MazeDistribution,
}

impl MazeUniverse {
    pub fn num_states(&self) -> usize {
        self.n * self.n
    }

    pub fn sample(&self, seed: u64) -> Result<Maze> {
        sample_maze(self.dist, self.n, self.gamma, seed)
    }
}
