import json

import numpy as np
import pytest

from ilsurrogate.data import DesignParams, MinMaxScaler, SplitSpec, fit_scaler, generate_synthetic, group_curves, split
from ilsurrogate.deeponet import train_two_stage
from ilsurrogate.errors import DataError, ScalerMismatchError
from ilsurrogate.evaluation import (
    COMPARE_COLUMNS,
    EvalReport,
    compare,
    evaluate,
    frequency_profile,
    low_band_violations,
    parse_comparison_csv,
)
from ilsurrogate.nn import TrainConfig
from ilsurrogate.surrogate import load_model, train_surrogate

from conftest import DESIGN

FREQS = np.linspace(0.1, 20, 10)


class LookupModel:
    """Returns a fixed function of the rows; used as a stand-in model."""

    method = "nn"

    def __init__(self, scaler, fn):
        self.input_scaler = scaler
        self.fn = fn

    def predict_rows(self, features, timings=None):
        if timings is not None:
            timings.append(0.0)
        return self.fn(np.atleast_2d(features))


@pytest.fixture(scope="module")
def data():
    ds = generate_synthetic(12, FREQS, seed=0)
    train, test = split(ds, SplitSpec(0.8, 0))
    return ds, train, test, fit_scaler(train)


def reference_reports():
    return [
        EvalReport("pdeeponet", 0.0151, 0.0146, (46.05, 379.50), (0.012, 0.076), 0, 1406, 0.0, 0.01),
        EvalReport("nn", 0.0150, 0.0145, 603.71, 0.021, 40, 1406, 40 / 1406, -0.3),
        EvalReport("pdnn", 0.0150, 0.0145, 1851.32, 0.021, 0, 1406, 0.0, 0.002),
    ]


class TestEvaluate:
    def test_perfect_model(self, data):
        ds, train, test, scaler = data
        lookup = {tuple(r): y for r, y in zip(ds.features, ds.labels)}
        model = LookupModel(scaler, lambda x: np.array([lookup[tuple(r)] for r in x]))
        rep = evaluate(model, test, scaler, train_set=train)
        assert rep.test_mse == 0.0 and rep.train_mse == 0.0
        assert rep.n_negative == 0 and rep.negative_rate == 0.0
        assert rep.n_evaluations == len(test)

    def test_constant_zero_model(self, data):
        _, _, test, scaler = data
        model = LookupModel(scaler, lambda x: np.zeros(len(x)))
        rep = evaluate(model, test, scaler)
        lo, hi = scaler.min[-1], scaler.max[-1]
        expected = np.mean(((0.0 - lo) / (hi - lo) * 2 - (test.labels - lo) / (hi - lo) * 2) ** 2)
        assert rep.test_mse == pytest.approx(expected, abs=1e-12)
        assert rep.min_prediction_db == 0.0 and rep.n_negative == 0

    def test_negative_count_strict(self, data):
        _, _, test, scaler = data
        vals = np.where(np.arange(len(test)) % 3 == 0, -1e-9, 0.0)
        rep = evaluate(LookupModel(scaler, lambda x: vals[: len(x)]), test, scaler)
        assert rep.n_negative == int(np.sum(vals < 0))
        assert rep.negative_rate == rep.n_negative / len(test)

    def test_scaler_mismatch(self, data):
        _, _, test, scaler = data
        other = MinMaxScaler(tuple(f"x{i}" for i in range(9)), scaler.min, scaler.max)
        with pytest.raises(ScalerMismatchError):
            evaluate(LookupModel(scaler, lambda x: np.zeros(len(x))), test, other)

    def test_matches_final_trace(self, data):
        _, train, _, scaler = data
        model, trace, _ = train_surrogate(train, "nn", TrainConfig(epochs=3, batch_size=16), scaler)
        rep = evaluate(model, train, scaler)
        assert abs(rep.test_mse - trace.final.mse) <= 1e-9

    def test_audit_independent_of_scaler(self, data):
        _, train, test, scaler = data
        model, _, _ = train_surrogate(train, "nn", TrainConfig(epochs=2, batch_size=16), scaler)
        wide = MinMaxScaler(scaler.feature_names, scaler.min - 1.0, scaler.max * 3)
        a, b = evaluate(model, test, scaler), evaluate(model, test, wide)
        assert (a.n_negative, a.min_prediction_db) == (b.n_negative, b.min_prediction_db)
        assert a.test_mse != b.test_mse

    def test_two_part_inference_time(self, data):
        _, train, test, scaler = data
        res = train_two_stage(train, "nnls", TrainConfig(epochs=5, batch_size=4), scaler=scaler)
        rep = evaluate(res.model, test, scaler, train_time_s=res.stage_seconds)
        assert isinstance(rep.infer_time_s, tuple) and len(rep.infer_time_s) == 2
        assert rep.method == "pdeeponet"

    def test_report_json_round_trip(self, tmp_path):
        for rep in reference_reports():
            rep.save(tmp_path / "r.json")
            assert json.loads((tmp_path / "r.json").read_text())["schema"] == "evalreport/1"
            assert EvalReport.load(tmp_path / "r.json") == rep

    def test_report_schema_checked(self, tmp_path):
        (tmp_path / "r.json").write_text(json.dumps({"schema": "other"}))
        with pytest.raises(DataError):
            EvalReport.load(tmp_path / "r.json")


class TestCompare:
    def test_single(self):
        table = compare(reference_reports()[:1])
        assert len(table.reports) == 1
        assert len(table.csv.strip().splitlines()) == 2

    def test_reference_layout(self):
        text = compare(reference_reports()).text
        lines = text.splitlines()
        assert "Training set" in lines[0] and "Test set" in lines[0]
        assert lines[1].count("MSE") == 2 and lines[1].count("Time (s)") == 2
        rows = [l for l in lines if l.split("|")[0].strip() in ("NN", "PDNN", "PDeepONet")]
        assert [r.split("|")[0].strip() for r in rows] == ["NN", "PDNN", "PDeepONet"]
        cells = [c.strip() for c in rows[0].split("|")]
        assert cells[:5] == ["NN", "0.0150", "603.71", "0.0145", "0.021"]
        pdo = [c.strip() for c in rows[2].split("|")]
        assert pdo[2] == "46.05+379.50 = 425.55"
        assert pdo[4] == "0.012+0.076 = 0.088"

    def test_csv_shape(self):
        lines = compare(reference_reports()).csv.strip().splitlines()
        assert lines[0].split(",") == list(COMPARE_COLUMNS)
        assert len(lines) == 4
        assert [l.split(",")[0] for l in lines[1:]] == ["nn", "pdnn", "pdeeponet"]
        assert all(len(l.split(",")) == len(COMPARE_COLUMNS) for l in lines)

    def test_csv_lossless(self):
        rng = np.random.default_rng(0)
        reports = [
            EvalReport("nn", rng.random(), rng.random(), rng.random() * 1e3, rng.random() * 1e-5, 3, 10, 0.3, -rng.random()),
            EvalReport("pdeeponet", rng.random(), rng.random(), (1e-7 * rng.random(), rng.random()), (2.5e-5, 1e-20),
                       0, 10, 0.0, rng.random()),
        ]
        parsed = parse_comparison_csv(compare(reports).csv)
        for row, rep in zip(parsed, reports):
            for key in COMPARE_COLUMNS:
                assert row[key] == getattr(rep, key)

    def test_json_and_files(self, tmp_path):
        paths = compare(reference_reports()).write(tmp_path / "cmp")
        assert [p.suffix for p in paths] == [".txt", ".csv", ".json"]
        d = json.loads(paths[2].read_text())
        assert [r["method"] for r in d["reports"]] == ["nn", "pdnn", "pdeeponet"]

    def test_empty(self):
        with pytest.raises(ValueError):
            compare([])


class TestFrequencyProfile:
    def test_without_truth(self, data):
        _, _, _, scaler = data
        model = LookupModel(scaler, lambda x: x[:, 7] - 1.0)
        text = frequency_profile(model, DesignParams(*DESIGN), [0.5, 1.0, 2.0])
        lines = text.strip().splitlines()
        assert lines[0] == "frequency_ghz,prediction_db,violation"
        assert [l.split(",")[-1] for l in lines[1:]] == ["1", "0", "0"]

    def test_with_truth(self, data):
        ds, _, _, scaler = data
        curve = group_curves(ds)[0][0]
        model = LookupModel(scaler, lambda x: np.zeros(len(x)))
        text = frequency_profile(model, curve.params, curve.frequencies, curve)
        lines = text.strip().splitlines()
        assert lines[0] == "frequency_ghz,prediction_db,truth_db,violation"
        assert [float(l.split(",")[2]) for l in lines[1:]] == curve.insertion_loss.tolist()

    def test_pdeeponet_no_violations(self, data):
        _, train, _, scaler = data
        model = train_two_stage(train, "nnls", TrainConfig(epochs=20, batch_size=4), scaler=scaler).model
        text = frequency_profile(model, DesignParams(*DESIGN), np.linspace(0, 100, 201))
        assert all(l.endswith(",0") for l in text.strip().splitlines()[1:])

    def test_baseline_low_band_violation(self, benchmark_run):
        run = benchmark_run
        nn = load_model(run["workdir"] / "nn.json")
        from ilsurrogate.pipeline import load_split

        _, test = load_split(run["data"], SplitSpec(0.8, 0))
        count, edge = low_band_violations(nn, test)
        assert count >= 1
        # the violating rows also show up in a per-design profile at the lowest grid frequency
        pred = nn.predict_rows(test.features)
        worst = test.features[np.argmin(pred)]
        text = frequency_profile(nn, DesignParams.from_array(worst[:7]), [worst[7]])
        assert text.strip().splitlines()[1].endswith(",1")
        assert worst[7] <= edge
