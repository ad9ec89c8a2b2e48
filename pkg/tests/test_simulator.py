import numpy as np
import pytest

from pathmv.coefficients import (
    ConstantCoefficientModel,
    DiracInitial,
    GaussianInitial,
    InitialLaw,
    MeanFieldOU,
    MeanFieldOUParams,
)
from pathmv.errors import (
    ConfigurationError,
    DomainError,
    GridDomainError,
    LineageMismatchError,
    SimulationDivergedError,
    UnsupportedInputError,
)
from pathmv.grid import make_grid
from pathmv.simulator import (
    BrownianDriver,
    ParticleEnsemble,
    continuous_eval,
    coupled_pair,
    ensemble_sup_moment,
    euler_step,
    load_ensemble,
    load_ensemble_csv,
    path_modulus,
    save_ensemble,
    save_ensemble_csv,
    simulate,
    strong_error,
)


def brownian_only_model():
    return ConstantCoefficientModel(drift=[0.0], diffusion=[[1.0]])


def test_driver_streams_do_not_depend_on_particle_count():
    grid = make_grid(1.0, 8)
    d = BrownianDriver(99, 2, grid)
    few = d.increments_matrix(3)
    many = d.increments_matrix(7)
    assert np.array_equal(few, many[:3])
    for i in range(3):
        assert np.array_equal(d.increments(i), few[i])


def test_driver_replicates_and_tags_are_independent():
    grid = make_grid(1.0, 8)
    base = BrownianDriver(99, 1, grid, replicate=0)
    other = BrownianDriver(99, 1, grid, replicate=1)
    assert not np.array_equal(base.increments(0), other.increments(0))
    init = base.initial_normals(1, 8)[0]
    inc = base.increments(0)[:, 0] / np.sqrt(grid.step)
    assert not np.array_equal(init, inc)


def test_driver_rerun_is_bitwise_stable():
    grid = make_grid(1.0, 16)
    d = BrownianDriver(2024, 3, grid, subdivision=2, replicate=5)
    assert np.array_equal(d.increments_matrix(4), d.increments_matrix(4))


def test_driver_refinement_block_sums_are_exact():
    grid = make_grid(1.0, 8)
    for r in (2, 4, 8):
        coarse = BrownianDriver(7, 2, grid, subdivision=r)
        fine = BrownianDriver(7, 2, grid.refine(r))
        for i in range(3):
            blocks = fine.increments(i).reshape(grid.n_steps, r, 2).sum(axis=1)
            assert np.array_equal(coarse.increments(i), blocks)


def test_initial_normals_do_not_depend_on_grid():
    a = BrownianDriver(11, 1, make_grid(1.0, 8))
    b = BrownianDriver(11, 1, make_grid(1.0, 512), subdivision=2)
    assert np.array_equal(a.initial_normals(5, 2), b.initial_normals(5, 2))


def test_driver_validation():
    grid = make_grid(1.0, 4)
    with pytest.raises(ConfigurationError):
        BrownianDriver(-1, 1, grid)
    with pytest.raises(ConfigurationError):
        BrownianDriver(2 ** 64, 1, grid)
    with pytest.raises(ConfigurationError):
        BrownianDriver(1, 0, grid)
    with pytest.raises(ConfigurationError):
        BrownianDriver(1, 1, grid, subdivision=0)
    with pytest.raises(ConfigurationError):
        BrownianDriver(1, 1, grid, replicate=-1)


def test_ensemble_validation(rng):
    grid = make_grid(1.0, 4)
    with pytest.raises(GridDomainError):
        ParticleEnsemble(grid, rng.normal(size=(3, 4, 1)), "m", 1)
    with pytest.raises(DomainError):
        ParticleEnsemble(grid, rng.normal(size=(0, 5, 1)), "m", 1)
    with pytest.raises(DomainError):
        ParticleEnsemble(grid, rng.normal(size=(3, 5)), "m", 1)
    with pytest.raises(GridDomainError):
        ParticleEnsemble(grid, rng.normal(size=(3, 5, 1)), "m", 1, filled=9)
    ens = ParticleEnsemble(grid, rng.normal(size=(3, 5, 1)), "m", 1, filled=2)
    assert not ens.is_complete
    with pytest.raises(GridDomainError):
        ens.measure_at_knot(3)


def test_simulate_rerun_is_bitwise_stable():
    model = MeanFieldOU()
    grid = make_grid(1.0, 16)
    a = simulate(model, grid, 20, seed=5)
    b = simulate(model, grid, 20, seed=5)
    assert np.array_equal(a.states, b.states)
    c = simulate(model, grid, 20, seed=5, replicate=3)
    assert not np.array_equal(a.states, c.states)


def test_euler_step_loop_matches_simulate():
    model = MeanFieldOU()
    grid = make_grid(1.0, 8)
    full = simulate(model, grid, 6, seed=17)
    driver = BrownianDriver(17, 1, grid)
    states = np.empty((6, 9, 1))
    states[:, 0, :] = full.states[:, 0, :]
    ens = ParticleEnsemble(grid, states, model.model_id, 17, filled=0)
    while not ens.is_complete:
        euler_step(ens, model, driver)
    assert np.array_equal(ens.states, full.states)


def test_euler_step_lineage_checks():
    model = MeanFieldOU()
    grid = make_grid(1.0, 4)
    ens = ParticleEnsemble(grid, np.zeros((2, 5, 1)), model.model_id, 3, filled=0)
    with pytest.raises(LineageMismatchError):
        euler_step(ens, ConstantCoefficientModel(), BrownianDriver(3, 1, grid))
    with pytest.raises(LineageMismatchError):
        euler_step(ens, model, BrownianDriver(4, 1, grid))
    with pytest.raises(LineageMismatchError):
        euler_step(ens, model, BrownianDriver(3, 1, make_grid(1.0, 8)))
    with pytest.raises(LineageMismatchError):
        euler_step(ens, model, BrownianDriver(3, 2, grid))
    done = ParticleEnsemble(grid, np.zeros((2, 5, 1)), model.model_id, 3)
    with pytest.raises(GridDomainError):
        euler_step(done, model, BrownianDriver(3, 1, grid))


def test_zero_coefficients_leave_states_in_place():
    model = ConstantCoefficientModel(drift=[0.0, 0.0], diffusion=np.zeros((2, 2)))
    grid = make_grid(1.0, 32)
    law = GaussianInitial([1.0, -2.0], 0.5)
    ens = simulate(model, grid, 10, seed=3, initial=law)
    for m in range(33):
        assert np.array_equal(ens.states[:, m, :], ens.states[:, 0, :])


def test_constant_drift_is_exact():
    v = np.array([0.7, -0.2])
    model = ConstantCoefficientModel(drift=v, diffusion=np.zeros((2, 2)))
    grid = make_grid(1.0, 64)
    ens = simulate(model, grid, 4, seed=3, initial=DiracInitial([0.5, 0.5]))
    for m in range(65):
        want = np.array([0.5, 0.5]) + grid.knot(m) * v
        assert np.max(np.abs(ens.states[:, m, :] - want)) <= 1e-14


def test_brownian_only_run_reproduces_increment_sums():
    grid = make_grid(1.0, 128)
    model = brownian_only_model()
    ens = simulate(model, grid, 8, seed=21, initial=DiracInitial([0.0]))
    driver = BrownianDriver(21, 1, grid)
    db = driver.increments_matrix(8)
    partial = np.cumsum(db[:, :, 0], axis=1)
    assert np.max(np.abs(ens.states[:, 1:, 0] - partial)) <= 1e-14


def test_coupled_pair_shares_initial_column():
    model = MeanFieldOU()
    grid = make_grid(1.0, 8)
    coarse, fine = coupled_pair(model, grid, 4, 30, seed=9)
    assert np.array_equal(coarse.states[:, 0, :], fine.states[:, 0, :])
    assert fine.n_steps == 32
    with pytest.raises(ConfigurationError):
        coupled_pair(model, grid, 1, 4, seed=9)


def test_coupled_errors_decrease_with_resolution():
    params = MeanFieldOUParams(a=-1.0, c=0.5, s=0.1, s_lin=0.4)
    model = MeanFieldOU(params)
    errors = []
    for m_steps in (8, 16, 32):
        coarse, fine = coupled_pair(model, make_grid(1.0, m_steps), 2, 400, seed=77)
        est, _ = strong_error(coarse, fine, p=2.0)
        errors.append(est)
    assert all(e > 0.0 for e in errors)
    assert errors[0] > errors[1] > errors[2]


def test_strong_error_shifted_pair():
    grid = make_grid(1.0, 4)
    base = np.zeros((3, 5, 1))
    shifted = base + 0.25
    a = ParticleEnsemble(grid, base, "m", 1)
    b = ParticleEnsemble(grid, shifted, "m", 1)
    est, se = strong_error(a, b, p=2.0)
    assert est == pytest.approx(0.25, abs=1e-15)
    assert se == 0.0


def test_strong_error_matches_nested_python_max():
    model = MeanFieldOU()
    coarse, fine = coupled_pair(model, make_grid(1.0, 8), 2, 12, seed=44)
    est, _ = strong_error(coarse, fine, p=3.0)
    total = 0.0
    for i in range(12):
        worst = 0.0
        for m in range(9):
            diff = fine.states[i, 2 * m, :] - coarse.states[i, m, :]
            worst = max(worst, float(np.linalg.norm(diff)))
        total += worst ** 3.0
    want = (total / 12) ** (1.0 / 3.0)
    assert abs(est - want) <= 1e-14


def test_strong_error_lineage_errors(rng):
    grid = make_grid(1.0, 4)
    states = rng.normal(size=(3, 5, 1))
    a = ParticleEnsemble(grid, states, "m", 1)
    cases = [
        ParticleEnsemble(grid, states, "other", 1),
        ParticleEnsemble(grid, rng.normal(size=(4, 5, 1)), "m", 1),
        ParticleEnsemble(grid, rng.normal(size=(3, 5, 2)), "m", 1),
        ParticleEnsemble(grid, states, "m", 2),
        ParticleEnsemble(grid, states, "m", 1, replicate=4),
        ParticleEnsemble(make_grid(2.0, 4), states, "m", 1),
        ParticleEnsemble(make_grid(1.0, 6), rng.normal(size=(3, 7, 1)), "m", 1),
    ]
    for other in cases:
        with pytest.raises(LineageMismatchError):
            strong_error(a, other)
    incomplete = ParticleEnsemble(grid, states, "m", 1, filled=2)
    with pytest.raises(DomainError):
        strong_error(a, incomplete)
    with pytest.raises(DomainError):
        strong_error(a, a, p=0.5)


def test_path_modulus_constant_drift():
    v = 0.6
    model = ConstantCoefficientModel(drift=[v], diffusion=[[0.0]])
    grid = make_grid(1.0, 16)
    ens = simulate(model, grid, 5, seed=2, initial=DiracInitial([0.0]))
    est, se = path_modulus(ens, p=2.0)
    assert est == pytest.approx(grid.step * v, abs=1e-15)
    assert se == 0.0


def test_path_modulus_needs_two_steps():
    ens = ParticleEnsemble(make_grid(1.0, 1), np.zeros((2, 2, 1)), "m", 1)
    with pytest.raises(GridDomainError):
        path_modulus(ens)


def test_path_modulus_fine_window_dominates_knot_mode():
    model = brownian_only_model()
    coarse, fine = coupled_pair(model, make_grid(1.0, 8), 4, 50, seed=13)
    knot_est, _ = path_modulus(coarse, p=2.0)
    window_est, _ = path_modulus(coarse, p=2.0, fine=fine)
    assert window_est >= knot_est - 1e-15


def test_path_modulus_fine_window_matches_python(rng):
    model = MeanFieldOU()
    coarse, fine = coupled_pair(model, make_grid(1.0, 4), 2, 6, seed=23)
    est, _ = path_modulus(coarse, p=2.0, fine=fine)
    total = 0.0
    for i in range(6):
        worst = 0.0
        for m in range(4):
            for j in range(3):
                diff = fine.states[i, 2 * m + j, :] - coarse.states[i, m, :]
                worst = max(worst, float(np.linalg.norm(diff)))
        total += worst ** 2.0
    want = np.sqrt(total / 6)
    assert abs(est - want) <= 1e-14


def test_ensemble_sup_moment_matches_python(rng):
    grid = make_grid(1.0, 6)
    states = rng.normal(size=(9, 7, 2))
    ens = ParticleEnsemble(grid, states, "m", 1)
    est, _ = ensemble_sup_moment(ens, p=4.0)
    per = np.linalg.norm(states, axis=2).max(axis=1)
    want = (np.mean(per ** 4.0)) ** 0.25
    assert abs(est - want) <= 1e-13


def test_divergence_is_reported_with_location():
    model = ConstantCoefficientModel(drift=[1e308], diffusion=[[0.0]])
    grid = make_grid(4.0, 4)
    with pytest.raises(SimulationDivergedError) as err:
        simulate(model, grid, 3, seed=1, initial=DiracInitial([0.0]))
    assert err.value.step == 2
    assert err.value.model_id == "constant"
    assert 0 <= err.value.particle < 3
    assert "constant" in str(err.value)


def test_divergent_initial_draw_is_step_zero():
    class BadLaw(InitialLaw):
        dim = 1
        n_normals = 0

        def transform(self, z):
            out = np.zeros((z.shape[0], 1))
            out[0, 0] = np.inf
            return out

    model = ConstantCoefficientModel(drift=[0.0])
    with pytest.raises(SimulationDivergedError) as err:
        simulate(model, make_grid(1.0, 2), 3, seed=1, initial=BadLaw())
    assert err.value.step == 0
    assert err.value.particle == 0


def test_simulate_driver_mismatch():
    model = MeanFieldOU()
    grid = make_grid(1.0, 4)
    with pytest.raises(LineageMismatchError):
        simulate(model, grid, 2, seed=1, driver=BrownianDriver(1, 1, make_grid(1.0, 8)))
    with pytest.raises(LineageMismatchError):
        simulate(model, grid, 2, seed=1, driver=BrownianDriver(1, 3, grid))
    with pytest.raises(ConfigurationError):
        simulate(model, grid, 0, seed=1)
    with pytest.raises(ConfigurationError):
        simulate(model, grid, 2, seed=1, initial=GaussianInitial([0.0, 0.0], 1.0))


def test_continuous_eval_matches_view():
    model = MeanFieldOU()
    ens = simulate(model, make_grid(1.0, 8), 4, seed=6)
    ts = np.linspace(0.0, 1.0, 17)
    for i in range(4):
        assert np.array_equal(continuous_eval(ens, i, ts), ens.view(i).eval(ts))


def test_deterministic_mean_field_converges_at_first_order():
    # all particles identical and noise off collapses the system to the
    # scalar equation x' = (a + c) x, solved by exp((a + c) t)
    params = MeanFieldOUParams(a=-1.0, c=0.5, s=0.0)
    model = MeanFieldOU(params)
    exact = np.exp(-0.5)
    hs, errs = [], []
    for m_steps in (8, 16, 32, 64, 128):
        grid = make_grid(1.0, m_steps)
        ens = simulate(model, grid, 2, seed=1, initial=DiracInitial([1.0]))
        errs.append(abs(float(ens.states[0, -1, 0]) - exact))
        hs.append(grid.step)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.05)


def test_binary_round_trip(tmp_path):
    model = MeanFieldOU()
    ens = simulate(model, make_grid(1.0, 8), 5, seed=41, replicate=2)
    target = tmp_path / "ens.bin"
    save_ensemble(ens, target)
    back = load_ensemble(target)
    assert np.array_equal(back.states, ens.states)
    assert back.model_id == ens.model_id
    assert back.grid == ens.grid
    assert (back.seed, back.replicate, back.filled) == (41, 2, 8)


def test_binary_load_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOPE" + b"\x00" * 100)
    with pytest.raises(UnsupportedInputError):
        load_ensemble(bad)
    model = MeanFieldOU()
    ens = simulate(model, make_grid(1.0, 4), 3, seed=1)
    target = tmp_path / "trunc.bin"
    save_ensemble(ens, target)
    blob = target.read_bytes()
    target.write_bytes(blob[:-16])
    with pytest.raises(DomainError):
        load_ensemble(target)


def test_csv_round_trip(tmp_path):
    model = MeanFieldOU()
    ens = simulate(model, make_grid(1.0, 6), 4, seed=77)
    target = tmp_path / "ens.csv"
    save_ensemble_csv(ens, target)
    back = load_ensemble_csv(target)
    assert np.array_equal(back.states, ens.states)
    assert back.model_id == ens.model_id
    assert back.grid == ens.grid
    assert back.seed == 77
