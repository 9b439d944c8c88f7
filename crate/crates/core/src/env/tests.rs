use proptest::prelude::*;

use super::*;

fn quick_tunnel() -> TunnelConfig {
    TunnelConfig {
        particle_count: 24,
        burst_count: 1,
        max_steps: 120,
        domain_size: [3.2, 1.6, 2.0],
        seed: 5,
        ..TunnelConfig::default()
    }
}

fn desk_env(shape: Shape, pooling: [usize; 2]) -> EnvConfig {
    EnvConfig {
        design: DesignConfig {
            source: DesignSource::Synth {
                shape,
                width: 16,
                length: 16,
                amplitude: 0.5,
            },
            h_max: 16,
            voxel_size: 0.1,
            frozen: Vec::new(),
        },
        control_grid: [4, 4],
        pooling,
        episode_length: 3,
        baseline_seeds: 2,
        ..EnvConfig::default()
    }
}

fn make(shape: Shape) -> WindTunnelEnv {
    WindTunnelEnv::new(desk_env(shape, [8, 8]), quick_tunnel()).unwrap()
}

#[test]
fn observation_dimension() {
    let mut env = WindTunnelEnv::new(desk_env(Shape::Wedge, [16, 16]), quick_tunnel()).unwrap();
    assert_eq!(env.observation_dim(), 260);
    assert_eq!(env.reset().unwrap().len(), 260);
}

#[test]
fn reset_is_repeatable_and_self_normalised() {
    let mut env = make(Shape::Wedge);
    let first = env.reset().unwrap();
    env.act(&[0.7; 16]).unwrap();
    let second = env.reset().unwrap();
    assert_eq!(first, second);
    assert_eq!(&first[64..], &[1.0; 4]);
    assert!(first.iter().all(|v| v.is_finite()));
    assert_eq!(env.observe(), first);
}

#[test]
fn constant_grid_pools_to_equal_slots() {
    let mut env = make(Shape::Box);
    let obs = env.reset().unwrap();
    assert!(obs[..64].iter().all(|&v| v == 0.5));
}

#[test]
fn flat_grid_disables_division_by_zero_terms() {
    let mut env = make(Shape::Flat);
    env.reset().unwrap();
    let base = env.baseline().unwrap().metrics;
    assert_eq!(base[2], 0.0);
    assert_eq!(base[3], 0.0);
    let t = env.act(&[1.0; 16]).unwrap();
    assert!(t.reward.is_finite());
    assert!(t.observation.iter().all(|v| v.is_finite()));
    assert_eq!(t.observation[64 + 2], 1.0);
}

#[test]
fn zero_action_keeps_the_design() {
    let mut env = make(Shape::Wedge);
    env.reset().unwrap();
    let before = env.grid().clone();
    env.act(&[0.0; 16]).unwrap();
    assert_eq!(env.grid(), &before);
}

#[test]
fn zero_action_at_a_baseline_seed_scores_zero() {
    let mut config = desk_env(Shape::Wedge, [8, 8]);
    config.baseline_seeds = 1;
    let mut env = WindTunnelEnv::new(config, quick_tunnel()).unwrap();
    env.reset().unwrap();
    let base = env.baseline().unwrap().metrics;
    let again = run_simulation(env.grid(), &quick_tunnel()).unwrap().metrics();
    assert_eq!(again, base);
    for mode in ObjectiveMode::ALL {
        assert_eq!(reward(again, base, mode, &RewardWeights::default()), 0.0);
    }
}

#[test]
fn fully_masked_design_never_changes() {
    let mut config = desk_env(Shape::Wedge, [8, 8]);
    config.design.frozen = vec![[0, 0, 16, 16]];
    let mut env = WindTunnelEnv::new(config, quick_tunnel()).unwrap();
    env.reset().unwrap();
    let before = env.grid().clone();
    for a in [1.0, -1.0, 0.3] {
        env.act(&[a; 16]).unwrap();
        assert_eq!(env.grid(), &before);
    }
}

#[test]
fn full_positive_action_raises_each_column_by_max_delta() {
    let mut env = make(Shape::Wedge);
    env.reset().unwrap();
    let before = env.grid().clone();
    env.act(&[1.0; 16]).unwrap();
    for (&h0, &h1) in before.heights().iter().zip(env.grid().heights()) {
        assert_eq!(h1, (h0 + 2).min(16));
    }
    // Out-of-range components are clamped.
    let mid = env.grid().clone();
    env.act(&[-40.0; 16]).unwrap();
    for (&h0, &h1) in mid.heights().iter().zip(env.grid().heights()) {
        assert_eq!(h1, h0.saturating_sub(2));
    }
}

#[test]
fn episodes_end_after_the_configured_length() {
    let mut env = make(Shape::Wedge);
    env.reset().unwrap();
    let done: Vec<bool> = (0..3).map(|_| env.act(&[0.0; 16]).unwrap().done).collect();
    assert_eq!(done, vec![false, false, true]);
}

#[test]
fn acting_before_reset_fails() {
    let mut env = make(Shape::Wedge);
    assert!(env.act(&[0.0; 16]).is_err());
    env.reset().unwrap();
    assert!(matches!(env.act(&[0.0; 3]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn reward_examples() {
    let base = [4.0, 2.0, 3.0, 100.0];
    let w = RewardWeights::default();
    for mode in ObjectiveMode::ALL {
        assert_eq!(reward(base, base, mode, &w), 0.0);
    }
    let r = reward([4.0, 2.2, 3.0, 100.0], base, ObjectiveMode::Ke, &w);
    assert!((r - 0.1).abs() < 1e-12);
    let r = reward([3.6, 2.0, 3.0, 100.0], base, ObjectiveMode::KeDf, &w);
    assert!((r - 0.1).abs() < 1e-12);
    // Drag is ignored in KE mode, collisions outside the full mode.
    assert_eq!(reward([3.6, 2.0, 1.0, 100.0], base, ObjectiveMode::Ke, &w), 0.0);
    assert!((reward([4.0, 2.0, 1.5, 100.0], base, ObjectiveMode::KeDfVcc, &w) - 0.5).abs() < 1e-12);
    // Height changes cost in both directions.
    let up = reward([4.0, 2.0, 3.0, 120.0], base, ObjectiveMode::Ke, &w);
    let down = reward([4.0, 2.0, 3.0, 80.0], base, ObjectiveMode::Ke, &w);
    assert!((up + 0.02).abs() < 1e-12);
    assert_eq!(up, down);
}

#[test]
fn upsampling() {
    let field = [1.0, 2.0, 3.0, 4.0];
    let up = upsample_bilinear(&field, 2, 2, 5, 3).unwrap();
    assert_eq!(up[0], 1.0);
    assert_eq!(up[4], 2.0);
    assert_eq!(up[10], 3.0);
    assert_eq!(up[14], 4.0);
    assert_eq!(up[7], 2.5);
    assert_eq!(upsample_bilinear(&[0.25], 1, 1, 4, 4).unwrap(), vec![0.25; 16]);
    assert!(upsample_bilinear(&field, 3, 2, 5, 3).is_err());
}

#[test]
fn config_validation_names_fields() {
    let tunnel = quick_tunnel();
    let field = |config: EnvConfig| match WindTunnelEnv::new(config, tunnel.clone()) {
        Err(Error::InvalidConfig { field, .. }) => field,
        other => panic!("expected a config error, got {other:?}"),
    };
    let base = desk_env(Shape::Wedge, [8, 8]);
    assert_eq!(
        field(EnvConfig {
            control_grid: [17, 4],
            ..base.clone()
        }),
        "env.control_grid"
    );
    assert_eq!(
        field(EnvConfig {
            pooling: [8, 32],
            ..base.clone()
        }),
        "env.pooling"
    );
    assert_eq!(
        field(EnvConfig {
            max_delta: 0.5,
            ..base.clone()
        }),
        "env.max_delta"
    );
    let weights = RewardWeights {
        w_h: 0.0,
        ..RewardWeights::default()
    };
    assert_eq!(
        field(EnvConfig {
            weights,
            ..base.clone()
        }),
        "env.weights.w_h"
    );
    let tunnel = TunnelConfig {
        air_speed: 130.0,
        ..quick_tunnel()
    };
    assert!(matches!(
        WindTunnelEnv::new(base, tunnel),
        Err(Error::InvalidConfig { field, .. }) if field == "tunnel.air_speed"
    ));
}

#[test]
fn config_json() {
    let config = desk_env(Shape::HalfCylinder, [8, 8]);
    let text = serde_json::to_string(&config).unwrap();
    assert!(text.contains("\"kind\":\"synth\""));
    assert!(text.contains("\"half-cylinder\""));
    assert!(text.contains("\"ke_df_vcc\""));
    assert_eq!(serde_json::from_str::<EnvConfig>(&text).unwrap(), config);
    assert_eq!(serde_json::from_str::<EnvConfig>("{}").unwrap(), EnvConfig::default());
    assert!(serde_json::from_str::<EnvConfig>(r#"{"episode_lenght": 3}"#).is_err());
    let m: ObjectiveMode = "ke_df".parse().unwrap();
    assert_eq!(m, ObjectiveMode::KeDf);
    assert!("all".parse::<ObjectiveMode>().is_err());
}

#[test]
fn pooling_averages_blocks() {
    let heights: Vec<u32> = (0..16).collect();
    let grid = VoxelGrid::new(4, 4, 20, 0.1, heights).unwrap();
    let pooled = pool_heights(&grid, 2, 2);
    // Block (0,0) holds 0, 1, 4, 5.
    assert_eq!(pooled[0], 2.5 / 20.0);
    assert_eq!(pooled[3], 12.5 / 20.0);
    assert_eq!(pool_heights(&grid, 4, 4)[5], 5.0 / 20.0);
}

proptest! {
    #[test]
    fn reward_is_monotone(
        ke in 0.1f64..10.0, df in 0.1f64..10.0, c in 0.1f64..10.0, bump in 0.01f64..1.0,
    ) {
        let base = [5.0, 5.0, 5.0, 50.0];
        let w = RewardWeights::default();
        let at = |m: [f64; 4]| reward(m, base, ObjectiveMode::KeDfVcc, &w);
        let m = [df, ke, c, 50.0];
        prop_assert!(at([df, ke + bump, c, 50.0]) > at(m));
        prop_assert!(at([df + bump, ke, c, 50.0]) < at(m));
        prop_assert!(at([df, ke, c + bump, 50.0]) < at(m));
    }

    #[test]
    fn upsampled_constants_stay_constant(v in -1.0f64..1.0, kx in 1usize..5, ky in 1usize..5) {
        let up = upsample_bilinear(&vec![v; kx * ky], kx, ky, 9, 7).unwrap();
        prop_assert!(up.iter().all(|u| (u - v).abs() < 1e-12));
    }

    #[test]
    fn upsampling_stays_within_the_control_range(field in prop::collection::vec(-1.0f64..1.0, 9)) {
        let up = upsample_bilinear(&field, 3, 3, 11, 6).unwrap();
        let lo = field.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(up.iter().all(|&u| u >= lo - 1e-12 && u <= hi + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn masked_columns_survive_any_actions(actions in prop::collection::vec(prop::collection::vec(-1.5f64..1.5, 16), 1..6)) {
        let mut config = desk_env(Shape::Wedge, [8, 8]);
        config.design.frozen = vec![[2, 3, 9, 7], [12, 0, 16, 2]];
        let mut env = WindTunnelEnv::new(config, TunnelConfig { particle_count: 4, ..quick_tunnel() }).unwrap();
        env.reset().unwrap();
        let original = env.grid().clone();
        for a in &actions {
            env.act(a).unwrap();
            for y in 0..16 {
                for x in 0..16 {
                    if env.mask().is_frozen(x, y) {
                        prop_assert_eq!(env.grid().height(x, y), original.height(x, y));
                    }
                }
            }
        }
    }
}
