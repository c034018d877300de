use interface_gen::geometry::{CartesianGrid2D, Field, Grid, RadialGrid};
use interface_gen::reaction::{Cubic, NoReaction};
use interface_gen::solver::{run, DiffusionOperator, ReactionStepper, SolverConfig, BOUND_SLACK};
use proptest::prelude::*;

fn radial(n: usize) -> Grid {
    Grid::Radial(RadialGrid::new(2, 1.0, n).unwrap())
}

fn boxed(n: usize) -> Grid {
    Grid::Cartesian(CartesianGrid2D::new(2.0, 2.0, n, n).unwrap())
}

/// Smooth bump values at the cell centers, zero near the boundary.
fn bump(grid: &Grid, height: f64, width: f64, shift: f64) -> Field {
    let pts: Vec<f64> = match grid {
        Grid::Radial(g) => g.centers.clone(),
        Grid::Cartesian(g) => (0..grid.len())
            .map(|k| {
                let [x, y] = g.center(k);
                ((x - 1.0).powi(2) + (y - 1.0).powi(2)).sqrt()
            })
            .collect(),
    };
    Field(
        pts.iter()
            .map(|&r| {
                let s = 1.0 - ((r - shift).max(0.0) / width).powi(2);
                if s > 0.0 {
                    height * s * s * s
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mass_is_conserved_without_reaction(
        height in 0.1f64..1.5,
        width in 0.2f64..0.6,
        shift in 0.0f64..0.2,
        boxed_grid in any::<bool>(),
    ) {
        let grid = if boxed_grid { boxed(24) } else { radial(48) };
        let u0 = bump(&grid, height, width, shift);
        let cfg = SolverConfig::new(2, 0.05, 2e-3).with_snapshots(vec![0.0, 2e-3]);
        let out = run(&cfg, NoReaction, &grid, &u0).unwrap();
        let (m0, m1) = (out.snapshots[0].field.mass(&grid), out.snapshots[1].field.mass(&grid));
        prop_assert!((m1 - m0).abs() <= 1e-12 * m0);
        prop_assert!(out.stats.min_value >= 0.0);
    }

    #[test]
    fn bound_holds_with_reaction(
        height in 0.1f64..1.4,
        width in 0.2f64..0.6,
        eps in 0.03f64..0.1,
    ) {
        let grid = radial(48);
        let u0 = bump(&grid, height, width, 0.0);
        let t_end = eps * eps * eps.ln().abs() / 0.21;
        let cfg = SolverConfig::new(2, eps, t_end).with_snapshots(vec![t_end]);
        let out = run(&cfg, Cubic::default(), &grid, &u0).unwrap();
        let bound = u0.sup_norm().max(1.0);
        prop_assert_eq!(out.stats.bound, bound);
        prop_assert!(out.stats.max_value <= bound + BOUND_SLACK);
        prop_assert!(out.stats.min_value >= -BOUND_SLACK);
    }

    #[test]
    fn ordered_data_stay_ordered(
        height in 0.4f64..1.0,
        width in 0.25f64..0.6,
        drop in 0.0f64..0.3,
        narrow in 0.0f64..0.1,
    ) {
        let grid = radial(64);
        let upper = bump(&grid, height, width, 0.0);
        let lower = bump(&grid, height * (1.0 - drop), width - narrow, 0.0);
        for (a, b) in lower.0.iter().zip(&upper.0) {
            prop_assume!(a <= b);
        }
        let eps = 0.05;
        let op = DiffusionOperator::new(&grid);
        let dt = op.cfl_dt(2, 0.4, upper.sup_norm().max(1.0));
        let stepper = ReactionStepper::new(Cubic::default(), eps, 0.1, upper.sup_norm().max(1.0));
        let (mut lo, mut hi) = (lower.0, upper.0);
        let mut scratch = Vec::new();
        for _ in 0..400 {
            for u in [&mut lo, &mut hi] {
                stepper.apply(u, 0.5 * dt);
                op.apply(u, 2, dt, &mut scratch);
                stepper.apply(u, 0.5 * dt);
            }
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(a - b <= 1e-12);
            }
        }
    }
}

#[test]
fn zero_data_stay_zero() {
    let grid = radial(32);
    let cfg = SolverConfig::new(2, 0.05, 1e-3).with_snapshots(vec![1e-3]);
    let out = run(&cfg, Cubic::default(), &grid, &Field::zeros(grid.len())).unwrap();
    assert!(out.snapshots[0].field.0.iter().all(|&v| v == 0.0));
}

#[test]
fn compact_support_spreads_at_finite_speed() {
    let grid = radial(128);
    let u0 = bump(&grid, 0.8, 0.3, 0.0);
    let t = 1e-3;
    let cfg = SolverConfig::new(2, 0.05, t).with_snapshots(vec![t]);
    let out = run(&cfg, NoReaction, &grid, &u0).unwrap();
    let support = |f: &Field| f.0.iter().rposition(|&v| v > 0.0).unwrap();
    let (s0, s1) = (support(&u0), support(&out.snapshots[0].field));
    assert!(s1 >= s0);
    // degenerate diffusion leaves the far field untouched
    assert!(out.snapshots[0].field.0[s1 + 1..].iter().all(|&v| v == 0.0));
    assert!(s1 < grid.len() - 8);
}
