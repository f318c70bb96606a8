import pathlib

import numpy as np
import pytest

from bankplots import PlotJob, SchemaError, kde_curve, read_table, render
from bankplots.cli import run_cli
from bankplots.kde import silverman_bandwidth

FIXTURES = pathlib.Path(__file__).resolve().parents[1] / "fixtures"

RENDER_CASES = [
    ("paths", ["grid.csv", "events.csv"]),
    ("fan", ["fan.csv"]),
    ("histogram", ["histogram.csv"]),
    ("density", ["snapshot.csv"]),
]


class TestRendering:
    @pytest.mark.parametrize("kind,names", RENDER_CASES)
    def test_all_kinds_render_from_fixtures(self, tmp_path, kind, names):
        out = tmp_path / f"{kind}.png"
        job = PlotJob(kind, tuple(str(FIXTURES / n) for n in names), str(out))
        assert render(job) == str(out)
        assert out.stat().st_size > 1000
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_paths_without_events_file(self, tmp_path):
        out = tmp_path / "p.png"
        render(PlotJob("paths", (str(FIXTURES / "grid.csv"),), str(out)))
        assert out.exists()

    def test_empty_events_log_renders(self, tmp_path):
        ev = tmp_path / "events.csv"
        ev.write_text("t,kind,id,reserve\n")
        out = tmp_path / "p.png"
        render(PlotJob("paths", (str(FIXTURES / "grid.csv"), str(ev)),
                       str(out)))
        assert out.exists()

    def test_deterministic_and_atomic_overwrite(self, tmp_path):
        out = tmp_path / "fan.png"
        job = PlotJob("fan", (str(FIXTURES / "fan.csv"),), str(out))
        render(job)
        first = out.read_bytes()
        render(job)
        assert out.read_bytes() == first
        assert list(tmp_path.glob("*.png")) == [out]

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown figure kind"):
            PlotJob("scatter", (str(FIXTURES / "fan.csv"),), "x.png")

    def test_style_changes_output(self, tmp_path):
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        src = (str(FIXTURES / "snapshot.csv"),)
        render(PlotJob("density", src, str(a)))
        render(PlotJob("density", src, str(b), {"bandwidth": 0.5}))
        assert a.read_bytes() != b.read_bytes()


class TestSchemas:
    def test_header_mismatch_reports_diff(self, tmp_path):
        bad = tmp_path / "fan.csv"
        bad.write_text("t,N,mean,q05,q95,bound\n0,5,1,1,1,1\n")
        with pytest.raises(SchemaError) as exc:
            read_table(str(bad), "fan")
        msg = str(exc.value)
        assert "missing columns: limit, null_count" in msg
        assert "unexpected columns: bound" in msg

    def test_reordered_header_rejected(self, tmp_path):
        bad = tmp_path / "grid.csv"
        bad.write_text("t,S,N,m\n")
        with pytest.raises(SchemaError, match="column order"):
            read_table(str(bad), "grid")

    def test_blank_cells_preserved(self):
        table = read_table(str(FIXTURES / "fan.csv"), "fan")
        assert set(table) == {"t", "N", "mean", "q05", "q95", "limit",
                              "null_count"}

    def test_ragged_row_rejected(self, tmp_path):
        bad = tmp_path / "histogram.csv"
        bad.write_text("N,run,d_N\n5,0\n")
        with pytest.raises(SchemaError, match="row with 2 cells"):
            read_table(str(bad), "histogram")


class TestKde:
    def snapshot_groups(self):
        table = read_table(str(FIXTURES / "snapshot.csv"), "snapshot")
        t = np.array([float(v) for v in table["t"]])
        x = np.array([float(v) for v in table["reserve"]])
        return {tv: x[t == tv] for tv in np.unique(t)}

    def test_density_integrates_to_one_per_snapshot(self):
        for tv, samples in self.snapshot_groups().items():
            grid, dens = kde_curve(samples)
            mass = np.trapezoid(dens, grid)
            assert abs(mass - 1.0) < 1e-3, f"t={tv}: mass {mass}"

    def test_explicit_bandwidth_honoured(self):
        rng = np.random.default_rng(5)
        x = rng.exponential(size=400)
        g1, d1 = kde_curve(x, bandwidth=0.05)
        g2, d2 = kde_curve(x, bandwidth=0.8)
        # narrower kernel gives a higher peak
        assert d1.max() > d2.max()
        assert abs(np.trapezoid(d1, g1) - 1.0) < 1e-3
        assert abs(np.trapezoid(d2, g2) - 1.0) < 1e-3

    def test_silverman_scaling(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=1000)
        h = silverman_bandwidth(x)
        assert 0.9 * x.std(ddof=1) * 1000 ** -0.2 == pytest.approx(h, rel=0.2)


class TestCli:
    def test_cli_renders(self, tmp_path):
        out = tmp_path / "out.png"
        code = run_cli(["density", "--in", str(FIXTURES / "snapshot.csv"),
                        "--out", str(out), "--style", "bandwidth=0.3"])
        assert code == 0
        assert out.exists()

    def test_cli_schema_mismatch_nonzero(self, tmp_path, capsys):
        bad = tmp_path / "fan.csv"
        bad.write_text("a,b\n1,2\n")
        out = tmp_path / "out.png"
        code = run_cli(["fan", "--in", str(bad), "--out", str(out)])
        assert code == 2
        assert not out.exists()
        assert "missing columns" in capsys.readouterr().err

    def test_cli_missing_file_nonzero(self, tmp_path):
        code = run_cli(["fan", "--in", str(tmp_path / "nope.csv"),
                        "--out", str(tmp_path / "o.png")])
        assert code == 2

    def test_cli_bad_style_nonzero(self, tmp_path):
        code = run_cli(["fan", "--in", str(FIXTURES / "fan.csv"),
                        "--out", str(tmp_path / "o.png"),
                        "--style", "oops"])
        assert code == 2
