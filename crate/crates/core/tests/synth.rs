use raincast_core::grid_io::{parse_rpg_stack, write_rpg_stack};
use raincast_core::preprocess::{rain_level_correlation, Mode};
use raincast_core::synth::*;

#[test]
fn same_seed_same_bytes() {
    let storm = StormSpec::default();
    let a = gen_dataset(&storm, &ReservoirSpec::default(), 600, 32, 8, Mode::Residual).unwrap();
    let b = gen_dataset(&storm, &ReservoirSpec::default(), 600, 32, 8, Mode::Residual).unwrap();
    let bytes = write_rpg_stack(&a.raw_frames).unwrap();
    assert_eq!(bytes, write_rpg_stack(&b.raw_frames).unwrap());
    assert_eq!(a.levels, b.levels);
    assert_eq!(parse_rpg_stack(&bytes).unwrap(), a.raw_frames);

    let other = StormSpec { seed: 43, ..storm };
    let c = gen_dataset(&other, &ReservoirSpec::default(), 600, 32, 8, Mode::Residual).unwrap();
    assert_ne!(c.levels, a.levels);
}

#[test]
fn level_grid_lines_up_with_frames() {
    let ds = gen_dataset(&StormSpec::default(), &ReservoirSpec::default(), 100, 4, 2, Mode::Absolute).unwrap();
    assert_eq!(ds.frames.len(), 100);
    assert_eq!(ds.levels.len(), 100);
    for (i, f) in ds.frames.iter().enumerate() {
        assert_eq!(f.timestamp, ds.levels.time_at(i));
    }
    assert!(ds.levels.values.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn rain_explains_change_better_than_level() {
    let ds = gen_dataset(&StormSpec::default(), &ReservoirSpec::default(), 6000, 32, 8, Mode::Residual).unwrap();
    let (level, change) = rain_level_correlation(&ds.rain_mean, &ds.levels.values, 8).unwrap();
    assert!(change > level, "corr with change {change}, with level {level}");
}
