from __future__ import annotations

import json

import numpy as np
import pytest

from plotkit import FigureSpec, SchemaError, curve_data, render, rolling_mean
from plotkit.cli import main


def rounds_csv(path, strategy, worst, losses=None):
    losses = losses or [0.5] * len(worst)
    lines = ["# schema=1", "round,strategy,selected_ids,test_loss,acc_g0_0,worst_group_acc"]
    for i, (w, l) in enumerate(zip(worst, losses), start=1):
        lines.append(f"{i},{strategy},0|1,{l},{w},{w}")
    path.write_text("\n".join(lines) + "\n")
    return path


def metrics_json(path, name, val=0.0):
    obj = {"name": name, "gci": val, "cci": val, "gai": val, "cai": val, "gsc": val, "csc": val}
    path.write_text(json.dumps(obj))
    return path


def sweep_csv(path):
    lines = ["recipe,strategy,seed,final_worst_group_acc,final_test_loss"]
    for strategy in ("uniform", "feddiverse"):
        for seed in (1, 2, 3):
            lines.append(f"gsc24,{strategy},{seed},0.{seed},0.5")
    path.write_text("\n".join(lines) + "\n")
    return path


class TestRollingMean:
    def test_identity_windows(self):
        v = np.array([0.1, 0.4, 0.2, 0.9])
        assert np.array_equal(rolling_mean(v, 0), v)
        assert np.array_equal(rolling_mean(v, 1), v)

    def test_window_two(self):
        out = rolling_mean(np.array([0.0, 1.0, 1.0]), 2)
        assert np.allclose(out, [0.0, 0.5, 1.0])


class TestCurveData:
    def test_identity_smoothing_matches_csv(self, tmp_path):
        worst = [0.0, 0.1, 0.25, 0.3]
        f = rounds_csv(tmp_path / "a.csv", "uniform", worst)
        curves = curve_data([f], smooth=1)
        rounds, mean, std = curves["uniform"]
        assert np.array_equal(mean, np.array(worst))
        assert np.array_equal(std, np.zeros(4))
        assert np.array_equal(rounds, np.arange(1, 5))

    def test_band_over_seeds(self, tmp_path):
        f1 = rounds_csv(tmp_path / "s1.csv", "uniform", [0.0, 0.2])
        f2 = rounds_csv(tmp_path / "s2.csv", "uniform", [0.2, 0.4])
        _, mean, std = curve_data([f1, f2], smooth=1)["uniform"]
        assert np.allclose(mean, [0.1, 0.3])
        assert np.allclose(std, [0.1, 0.1])

    def test_mismatched_rounds_rejected(self, tmp_path):
        f1 = rounds_csv(tmp_path / "s1.csv", "uniform", [0.0, 0.2])
        f2 = rounds_csv(tmp_path / "s2.csv", "uniform", [0.2, 0.4, 0.6])
        with pytest.raises(SchemaError):
            curve_data([f1, f2], smooth=1)


class TestSchemaValidation:
    def test_missing_marker(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("round,strategy,worst_group_acc\n1,u,0.5\n")
        with pytest.raises(SchemaError, match="schema=1"):
            curve_data([p], smooth=1)

    def test_missing_column_named(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("# schema=1\nround,strategy,test_loss\n1,u,0.5\n")
        with pytest.raises(SchemaError, match="worst_group_acc"):
            curve_data([p], smooth=1)

    def test_metrics_missing_key(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text('{"name": "x", "gci": 0.1}')
        spec = FigureSpec("metric_bars", (str(p),), str(tmp_path / "o.png"))
        with pytest.raises(SchemaError, match="cci"):
            render(spec)


class TestRendering:
    def test_metric_bars_zero_profile(self, tmp_path):
        m = metrics_json(tmp_path / "bal.json", "balanced", 0.0)
        out = render(FigureSpec("metric_bars", (str(m),), str(tmp_path / "bars.png")))
        assert out.exists() and out.stat().st_size > 0

    def test_learning_curves_two_strategies(self, tmp_path):
        files = []
        for strategy in ("uniform", "feddiverse"):
            for seed in (1, 2, 3):
                worst = list(np.linspace(0, 0.5 + 0.1 * seed, 6))
                files.append(
                    str(rounds_csv(tmp_path / f"{strategy}{seed}.csv", strategy, worst))
                )
        out = render(
            FigureSpec("learning_curves", tuple(files), str(tmp_path / "curves.png"))
        )
        assert out.exists() and out.stat().st_size > 0

    def test_sweep_table(self, tmp_path):
        s = sweep_csv(tmp_path / "sweep.csv")
        out = render(FigureSpec("sweep_table", (str(s),), str(tmp_path / "table.png")))
        assert out.exists()

    def test_rendering_is_deterministic(self, tmp_path):
        m = metrics_json(tmp_path / "m.json", "r", 0.3)
        a = render(FigureSpec("metric_bars", (str(m),), str(tmp_path / "a.png")))
        b = render(FigureSpec("metric_bars", (str(m),), str(tmp_path / "b.png")))
        assert a.read_bytes() == b.read_bytes()


class TestCli:
    def test_end_to_end(self, tmp_path, capsys):
        f = rounds_csv(tmp_path / "r.csv", "uniform", [0.1, 0.2, 0.3])
        out = tmp_path / "fig.png"
        assert main(["learning_curves", str(f), "-o", str(out), "--smooth", "1"]) == 0
        assert out.exists()
        capsys.readouterr()

    def test_schema_error_exit(self, tmp_path, capsys):
        p = tmp_path / "bad.csv"
        p.write_text("no schema\n")
        assert main(["learning_curves", str(p), "-o", str(tmp_path / "x.png")]) == 1
        capsys.readouterr()
