import numpy as np
import pytest

from ilsurrogate.data import N_DESIGN, DesignParams, MinMaxScaler, fit_scaler, generate_synthetic
from ilsurrogate.deeponet import PDeepONetModel, predict, predict_curve, train_two_stage
from ilsurrogate.errors import DataError
from ilsurrogate.nn import MlpModel, TrainConfig
from ilsurrogate.polynomial import COEFF_NAMES, eval_poly

from conftest import DESIGN, make_dataset

FREQS = np.linspace(0.1, 20, 12)
CONST = np.array([0.1, 0.01, 0.001])


def random_designs(n, seed):
    rng = np.random.default_rng(seed)
    return np.array(DESIGN) * rng.uniform(0.8, 1.25, size=(n, N_DESIGN))


@pytest.fixture(scope="module")
def trained():
    ds = generate_synthetic(30, FREQS, seed=1, noise_sd=0.05)
    return ds, train_two_stage(ds, "nnls", TrainConfig(epochs=300, batch_size=16, seed=0))


def fixed_output_model(coeffs):
    """Unconstrained model whose branch ignores its input and emits ``coeffs``."""
    coeff_scaler = MinMaxScaler(COEFF_NAMES, [0, 0, 0], [2, 2, 2])
    bias = coeff_scaler.transform(np.asarray(coeffs, dtype=float))
    branch = MlpModel((N_DESIGN, 3), (), "identity", (np.zeros((3, N_DESIGN)),), (bias,))
    ds = generate_synthetic(4, [0.5, 1.0], seed=0)
    return PDeepONetModel(branch, coeff_scaler, fit_scaler(ds), "unconstrained")


class TestTrainTwoStage:
    def test_two_part_timing(self, trained):
        _, res = trained
        assert len(res.stage_seconds) == 2
        assert all(t >= 0 for t in res.stage_seconds)

    def test_constant_coefficients_learned(self):
        train_designs, test_designs = random_designs(200, 0), random_designs(20, 1)
        ds = make_dataset(train_designs, FREQS, lambda d, f: float(eval_poly(CONST, f)))
        res = train_two_stage(ds, "nnls", TrainConfig(epochs=3000, batch_size=200, learning_rate=3e-3, seed=0))
        np.testing.assert_allclose(res.fits.coefficients, np.tile(CONST, (200, 1)), rtol=1e-8)
        model = res.model
        pred_norm = model.coeff_scaler.transform(model.coefficients(test_designs))
        true_norm = model.coeff_scaler.transform(np.tile(CONST, (20, 1)))
        assert np.mean((pred_norm - true_norm) ** 2) < 1e-4

    def test_deterministic(self):
        ds = generate_synthetic(8, FREQS, seed=2)
        cfg = TrainConfig(epochs=20, batch_size=4, seed=3)
        a = train_two_stage(ds, "nnls", cfg).model
        b = train_two_stage(ds, "nnls", cfg).model
        assert a.to_dict() == b.to_dict()

    def test_stage_separation(self):
        ds = generate_synthetic(8, FREQS, seed=2)
        a = train_two_stage(ds, "nnls", TrainConfig(epochs=5, batch_size=4, seed=0))
        b = train_two_stage(ds, "nnls", TrainConfig(epochs=5, batch_size=4, seed=9))
        assert [r for _, r in a.fits.fits] == [r for _, r in b.fits.fits]
        assert not np.array_equal(a.model.branch.weights[0], b.model.branch.weights[0])

    def test_no_fittable_curves_aborts(self):
        ds = make_dataset(random_designs(5, 0), [1.0, 2.0], lambda d, f: f)
        from ilsurrogate.errors import FitError

        with pytest.raises(FitError):
            train_two_stage(ds, "nnls", TrainConfig(epochs=1))

    def test_needs_two_curves(self):
        ds = generate_synthetic(1, FREQS, seed=0)
        with pytest.raises(DataError):
            train_two_stage(ds, "nnls", TrainConfig(epochs=1, batch_size=1), scaler=fit_scaler(generate_synthetic(3, FREQS)))

    def test_unconstrained_mode(self):
        ds = generate_synthetic(10, FREQS, seed=5)
        res = train_two_stage(ds, "ols", TrainConfig(epochs=10, batch_size=5), "unconstrained")
        assert res.model.positivity_mode == "unconstrained"
        assert res.model.branch.output_activation == "identity"
        assert predict(res.model, DesignParams(*DESIGN), 0.0) == 0.0

    def test_softplus_scaler_has_zero_min(self, trained):
        _, res = trained
        assert np.all(res.model.coeff_scaler.min == 0)


class TestPredict:
    def test_dc_is_zero(self, trained):
        _, res = trained
        for d in random_designs(20, 3):
            assert predict(res.model, DesignParams.from_array(d), 0.0) == 0.0
        assert predict(fixed_output_model([1.0, -2.0, 3.0]), DesignParams(*DESIGN), 0.0) == 0.0

    def test_composition(self):
        model = fixed_output_model([1.0, 0.0, 0.0])
        assert predict(model, DesignParams(*DESIGN), 2.0) == 2.0

    def test_positivity_sweep(self, trained):
        _, res = trained
        rng = np.random.default_rng(0)
        n = 100_000
        designs = np.array(DESIGN) * rng.uniform(0.05, 20.0, size=(n, N_DESIGN))
        designs[:, 5] = np.maximum(designs[:, 5], 1.0)
        freqs = rng.uniform(0, 1000, size=n)
        il = res.model.predict_rows(np.column_stack([designs, freqs]))
        assert np.sum(il < 0) == 0

    def test_non_finite_rejected(self, trained):
        _, res = trained
        with pytest.raises(ValueError):
            res.model.predict_rows([[*DESIGN, np.nan]])
        with pytest.raises(ValueError):
            predict(res.model, DesignParams(*DESIGN), np.inf)

    def test_consistency_with_eval_poly(self, trained):
        _, res = trained
        d = DesignParams(*DESIGN)
        coeffs = res.model.coefficients(d.as_array())
        for f in (0.3, 5.0, 17.0):
            assert predict(res.model, d, f) == eval_poly(coeffs, f)

    def test_round_trip(self, trained, tmp_path):
        _, res = trained
        res.model.save(tmp_path / "m.json")
        from ilsurrogate.surrogate import load_model

        back = load_model(tmp_path / "m.json")
        x = np.column_stack([random_designs(5, 1), np.linspace(0, 10, 5)])
        np.testing.assert_array_equal(back.predict_rows(x), res.model.predict_rows(x))


class TestPredictCurve:
    def test_singleton(self, trained):
        _, res = trained
        d = DesignParams(*DESIGN)
        assert predict_curve(res.model, d, [3.0]) == [(3.0, predict(res.model, d, 3.0))]

    def test_sorted_non_negative(self, trained):
        _, res = trained
        out = predict_curve(res.model, DesignParams(*DESIGN), np.linspace(0, 50, 101))
        assert [f for f, _ in out] == np.linspace(0, 50, 101).tolist()
        assert all(v >= 0 for _, v in out)

    def test_reproduces_stage_one_fit(self, trained):
        ds, res = trained
        model, fits = res.model, res.fits
        stage1 = fits.coefficients
        learned = model.coefficients(fits.designs)
        delta = np.abs(learned - stage1)
        for k, (params, report) in enumerate(fits.fits):
            curve = np.array([v for _, v in predict_curve(model, params, FREQS)])
            fitted = eval_poly(report.coeffs, FREQS)
            # |sum_i (da_i) w^i| <= sum_i |da_i| w^i
            bound = delta[k, 0] * FREQS + delta[k, 1] * FREQS**2 + delta[k, 2] * FREQS**3
            assert np.all(np.abs(curve - fitted) <= bound + 1e-12)
        # the regression itself should be reasonably close on training designs
        assert np.mean(model.coeff_scaler.transform(learned) - model.coeff_scaler.transform(stage1)) ** 2 < 0.05
