use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repeated_irl::gridworld::{sample_maze_with, Maze, MazeDistribution};
use repeated_irl::stats::mean;

fn wall_fractions(dist: MazeDistribution, n: usize, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    (0..count)
        .map(|_| {
            let m: Maze = sample_maze_with(dist, n, 0.8, &mut rng).unwrap();
            m.num_walls() as f64 / m.num_edges() as f64
        })
        .collect()
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

#[test]
fn both_distributions_wall_half_the_edges() {
    for dist in [MazeDistribution::uniform(), MazeDistribution::Varied] {
        let m = mean(&wall_fractions(dist, 10, 2000));
        assert!((m - 0.5).abs() < 0.02, "{dist:?}: {m}");
    }
}

#[test]
fn varied_mazes_spread_more() {
    let uniform = variance(&wall_fractions(MazeDistribution::uniform(), 10, 2000));
    let varied = variance(&wall_fractions(MazeDistribution::Varied, 10, 2000));
    assert!(varied / uniform > 1.5, "{varied} / {uniform}");
}

#[test]
fn varied_rows_share_a_density() {
    // within one varied maze, edges of the same row are correlated: the
    // spread of per-row wall counts exceeds the binomial spread
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10;
    let mut per_row = Vec::new();
    for _ in 0..500 {
        let m = sample_maze_with(MazeDistribution::Varied, n, 0.8, &mut rng).unwrap();
        per_row.extend(m.h_walls().iter().map(|r| r.iter().filter(|&&w| w).count() as f64));
    }
    // Binomial(9, 1/2) variance is 2.25
    assert!(variance(&per_row) > 2.0 * 2.25, "{}", variance(&per_row));
}
