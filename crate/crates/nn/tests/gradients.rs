use ademiner_nn::gradcheck::suite;

#[test]
fn every_op_matches_finite_differences() {
    for case in suite::cases() {
        let worst = suite::worst_error(&case, 20, 11).unwrap();
        assert!(worst <= 1e-4, "{}: relative error {worst:e}", case.name);
    }
}

#[test]
#[ignore = "slow sweep over many seeds"]
fn sweep_seeds() {
    for seed in 0..20 {
        for case in suite::cases() {
            let worst = suite::worst_error(&case, 100, seed).unwrap();
            println!("seed {seed} {}: {worst:e}", case.name);
            assert!(worst <= 1e-4, "{}: relative error {worst:e}", case.name);
        }
    }
}
