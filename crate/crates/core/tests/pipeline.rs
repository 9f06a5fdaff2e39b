use dlrc_core::diagnostics::{all_hard_pass, verify_run};
use dlrc_core::game::generate_dense_game;
use dlrc_core::{
    parse_metrics_csv, write_metrics_csv, GameSource, GeneratorParams, HyperParams, MarkovGame, RunConfig, Trainer,
};

#[test]
fn saved_game_trains_and_verifies() {
    let dir = std::env::temp_dir().join(format!("dlrc-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("game.json");
    let game = generate_dense_game(11, &[2, 3], 3, 2).unwrap();
    game.save(&path).unwrap();
    assert_eq!(MarkovGame::load(&path).unwrap(), game);

    let config = RunConfig {
        game: GameSource::File(path),
        rounds: 300,
        hyperparams: HyperParams::theoretical(2, 2, 3),
        record_history: true,
        metric_stride: 1,
        seed: 11,
    };
    let trainer = Trainer::new(config).unwrap();
    let game = trainer.game().clone();
    let config = trainer.config().clone();
    let result = trainer.run().unwrap();
    let reports = verify_run(&game, &config, &result, 5).unwrap();
    let failed: Vec<_> = reports.iter().filter(|r| r.hard && !r.pass).collect();
    assert!(all_hard_pass(&reports), "{failed:?}");

    let csv = write_metrics_csv(game.horizon(), &result.metrics).unwrap();
    assert_eq!(parse_metrics_csv(&csv).unwrap(), result.metrics);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn three_player_run_verifies() {
    let mut gen = GeneratorParams::paper(4);
    gen.num_players = 3;
    gen.num_states = 3;
    gen.num_actions = 3;
    let config = RunConfig {
        game: GameSource::Generated(gen),
        rounds: 200,
        hyperparams: HyperParams::theoretical(2, 3, 3),
        record_history: true,
        metric_stride: 7,
        seed: 4,
    };
    let trainer = Trainer::new(config).unwrap();
    let game = trainer.game().clone();
    let config = trainer.config().clone();
    let result = trainer.run().unwrap();
    assert_eq!(result.metrics.last().unwrap().round, 200);
    assert!(all_hard_pass(&verify_run(&game, &config, &result, 9).unwrap()));
}
