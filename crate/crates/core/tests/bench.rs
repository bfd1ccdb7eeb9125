use std::path::Path;

use heatcloak::bench::{compare_runs, grid_for, Preset, Recipe, Scenario};

fn short_paper_2d() -> Scenario {
    let mut s = Scenario::preset(Preset::Paper2d);
    s.grid.n_bulk = 40;
    s.grid.n_defect = 6;
    s.time.t_final = 3.0;
    s.time.dt = 0.25;
    s.analysis.plateau_span = 3;
    s
}

#[test]
fn example_scenario_file_matches_preset() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/paper-2d.toml");
    let s = Scenario::from_file(&path).unwrap();
    assert_eq!(s, Scenario::preset(Preset::Paper2d));
}

#[test]
fn partial_scenario_keeps_preset_values() {
    let s = Scenario::from_toml_str("preset = \"layered-fig2\"\n[time]\ndt = 0.02\n").unwrap();
    let base = Scenario::preset(Preset::LayeredFig2);
    assert_eq!(s.time.dt, 0.02);
    assert_eq!(s.time.t_final, base.time.t_final);
    assert_eq!(s.grid, base.grid);
}

#[test]
fn identical_coefficients_give_zero_gap() {
    let s = short_paper_2d();
    let grid = grid_for(&s, Recipe::Defect, 0.1).unwrap();
    let data = s.problem_data().unwrap();
    let def = s.coefficients(Recipe::Defect, 0.1).unwrap();
    let g = compare_runs(&s, &grid, &data, &def, &def, 0.1).unwrap();
    assert!(g.raw_gap.iter().all(|&v| v == 0.0));
    assert!(g.mean_free_gap.iter().all(|&v| v == 0.0));
}

#[test]
fn normalized_gap_is_invariant_under_data_scaling() {
    let s = short_paper_2d();
    let grid = grid_for(&s, Recipe::Defect, 0.1).unwrap();
    let data = s.problem_data().unwrap();
    let hom = s.coefficients(Recipe::Homogeneous, 0.1).unwrap();
    let def = s.coefficients(Recipe::Defect, 0.1).unwrap();
    let a = compare_runs(&s, &grid, &data, &hom, &def, 0.1).unwrap();
    let b = compare_runs(&s, &grid, &data.scaled(7.5), &hom, &def, 0.1).unwrap();
    assert!((b.data_norm / a.data_norm - 7.5).abs() < 1e-12);
    for (x, y) in a.normalized.iter().zip(&b.normalized) {
        assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-300), "{x} vs {y}");
    }
    assert!(a.raw_gap.iter().skip(1).all(|&v| v > 0.0));
}
