//! Public-API round trips across modules.

use oscfield::covariance::CovarianceModel;
use oscfield::embedding::{EmbeddingOperator, GridSpec, SpectrumDump};
use oscfield::estimators::{mlmc_estimate, MlmcOptions, ProblemSpec, Qoi, SmoothingRule, Study};
use oscfield::fem::{assemble_and_solve, qoi_point, DarcyProblem, Forcing, SolverOptions};
use oscfield::rng::rng_stream;

#[test]
fn spectrum_dump_survives_a_file_round_trip() {
    let grid = GridSpec::square(2, 8).unwrap();
    let model = CovarianceModel::matern(1.0, 0.2, 1.5).unwrap();
    let op = EmbeddingOperator::build(&grid, &model).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spectrum.bin");
    SpectrumDump::of(&op).write(&path).unwrap();
    let back = SpectrumDump::read(&path).unwrap().into_operator().unwrap();
    let xi = rng_stream(1, 0, 0).take(op.size());
    assert_eq!(op.sample_field(&xi).unwrap(), back.sample_field(&xi).unwrap());
}

#[test]
fn sampled_field_feeds_the_solver() {
    let grid = GridSpec::square(2, 16).unwrap();
    let op = EmbeddingOperator::build(&grid, &CovarianceModel::exponential(1.0, 0.3, 1.0).unwrap()).unwrap();
    let z = op.sample_field(&rng_stream(5, 0, 0).take(op.size())).unwrap();
    let sol = assemble_and_solve(&DarcyProblem::new(z, Forcing::Constant(1.0)).unwrap(), &SolverOptions::default()).unwrap();
    assert!(sol.residual <= 1e-10);
    let q = qoi_point(&sol, [0.5, 0.5]).unwrap();
    assert!(q > 0.0 && q.is_finite());
}

#[test]
fn smoothed_mlmc_truncates_every_level() {
    let study = Study::new(ProblemSpec::new(
        CovarianceModel::exponential(1.0, 0.3, 1.0).unwrap(),
        Qoi::Point { x: 0.5, y: 0.5 },
    ));
    let opts = MlmcOptions {
        smoothing: SmoothingRule::HalfSpectrum,
        pilot: 20,
        ..MlmcOptions::default()
    };
    let r = mlmc_estimate(&study, &opts, 5e-2, 1).unwrap();
    // Level 0 samples the smoothed field; the finest level only its coarse partner.
    assert!(r.levels.iter().all(|l| l.k_trunc == l.m * l.m * 2));
    assert!(r.levels.windows(2).all(|w| w[1].m == 2 * w[0].m));
}
