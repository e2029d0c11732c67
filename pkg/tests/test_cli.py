import csv
import math
import subprocess
import sys

import pytest

from gmcs import cli
from gmcs.cli import (
    ConfigFileError,
    SweepSpec,
    leakage_report,
    main,
    parse_config,
    parse_config_text,
    run_calibrate,
    run_keyrate_sweep,
)
from gmcs.keyrate import SystemParameters

FAST = "n_frames = 2\ncalib_n_frames = 2\n"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _kv(path):
    return dict(line.split("=", 1) for line in path.read_text().splitlines())


class TestParseConfig:
    def test_empty_gives_defaults(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("")
        cfg = parse_config(p)
        assert cfg.scenario.params == SystemParameters(16.9, 0.758, 0.44, 0.898)
        assert parse_config(None).values == cfg.values

    def test_int_value(self):
        assert parse_config_text("frame_size = 4000\n").scenario.frame_size == 4000

    def test_comments_and_blanks(self):
        cfg = parse_config_text("# header\n\nV_A = 20  # inline\n")
        assert cfg.scenario.params.V_A == 20

    def test_lists(self):
        cfg = parse_config_text("sweep_betas = 1, 0.9\nsweep_models = general\n")
        assert cfg.sweep.betas == (1.0, 0.9)
        assert cfg.sweep.models == ("general",)

    def test_out_of_range(self):
        with pytest.raises(ConfigFileError) as exc:
            parse_config_text("G = 1.5\n")
        assert "G must lie in (0,1]" in str(exc.value)
        assert exc.value.key == "G" and exc.value.line == 1

    @pytest.mark.parametrize(
        "text, key, line",
        [
            ("bogus = 1\n", "bogus", 1),
            ("\nV_A = abc\n", "V_A", 2),
            ("n_frames = 0\n", "n_frames", 1),
            ("seed = -3\n", "seed", 1),
            ("sweep_models = neither\n", "sweep_models", 1),
        ],
    )
    def test_errors_name_key_and_line(self, text, key, line):
        with pytest.raises(ConfigFileError) as exc:
            parse_config_text(text)
        assert exc.value.key == key and exc.value.line == line
        assert f"key={key}" in str(exc.value)

    def test_missing_equals(self):
        with pytest.raises(ConfigFileError) as exc:
            parse_config_text("V_A 16.9\n")
        assert exc.value.line == 1

    def test_count_mismatch(self):
        with pytest.raises(ConfigFileError):
            parse_config_text("x_count = 10\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigFileError):
            parse_config(tmp_path / "absent.txt")

    def test_sweep_spec(self):
        with pytest.raises(ConfigFileError):
            SweepSpec(0, 1, 0, (1.0,), ("general",))
        with pytest.raises(ConfigFileError):
            SweepSpec(2, 1, 0.5, (1.0,), ("general",))
        assert SweepSpec(0, 1, 0.5, (1.0,), ("general",)).distances() == [0.0, 0.5, 1.0]


@pytest.fixture(scope="module")
def sweep_rows():
    cfg = parse_config(None)
    sc = cfg.scenario
    sweep = SweepSpec(0.0, 20.0, 0.05, (1.0, 0.898), ("general", "realistic"))
    return run_keyrate_sweep(sweep, sc.params, sc.epsilon_A, sc.n_el, sc.N_leak)


class TestKeyrateSweep:
    def _curve(self, rows, model, beta):
        return [(r[0], r[6]) for r in rows if r[2] == model and r[3] == beta]

    def test_general_zero_crossing_near_5km(self, sweep_rows):
        curve = self._curve(sweep_rows, "general", 0.898)
        first_zero = next(d for d, r in curve if r == 0.0)
        assert 5.0 <= first_zero <= 6.0

    def test_realistic_dominates(self, sweep_rows):
        gen = dict(self._curve(sweep_rows, "general", 0.898))
        rea = dict(self._curve(sweep_rows, "realistic", 0.898))
        assert all(rea[d] >= gen[d] for d in gen)

    @pytest.mark.parametrize("model", ["general", "realistic"])
    @pytest.mark.parametrize("beta", [1.0, 0.898])
    def test_monotone_in_distance(self, sweep_rows, model, beta):
        rates = [r for _, r in self._curve(sweep_rows, model, beta)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_row_order(self, sweep_rows):
        keys = [(r[0], r[2], r[3]) for r in sweep_rows]
        assert keys == sorted(keys, key=lambda k: (k[0], k[1], -k[2]))

    def test_lossless_noiseless_point(self):
        params = SystemParameters(V_A=16.9, G=1.0, eta=1.0, beta=1.0)
        rows = run_keyrate_sweep(SweepSpec(0, 0, 1, (1.0,), ("general",)), params, 0.0, 0.0, 0.0)
        (row,) = rows
        V = 17.9
        I_AB = 0.5 * math.log2(V)
        I_BE = 0.5 * math.log2(V * (1 / V))
        assert row[4] == pytest.approx(I_AB, rel=1e-12)
        assert row[5] == pytest.approx(I_BE, abs=1e-12)
        assert row[6] == pytest.approx(I_AB, rel=1e-12)


class TestLeakageMode:
    def test_report_values(self):
        d = dict(leakage_report(parse_config(None)))
        # sigma_t from a 100 ns FWHM is 60.06 ns, not exactly 60 ns
        assert d["time.delay_s"] == pytest.approx(407.6e-9, abs=1e-9)
        assert d["time_pol.delay_s"] == pytest.approx(341.0e-9, abs=1e-9)
        assert d["freq.alpha"] < 1e-90
        assert d["dc.N_leak"] == pytest.approx(0.02, abs=0.001)
        assert d["dc.extinction_ratio_db"] == pytest.approx(71, abs=0.5)

    def test_cli_writes_file(self, tmp_path, capsys):
        assert main(["leakage", "--out", str(tmp_path)]) == 0
        kv = _kv(tmp_path / "leakage.txt")
        assert float(kv["time.fiber_length_m"]) == pytest.approx(81.5, abs=0.5)
        out = capsys.readouterr().out
        assert "ns" in out and "fiber" in out


class TestKeyrateMode:
    def test_csv(self, tmp_path, capsys):
        assert main(["keyrate", "--out", str(tmp_path)]) == 0
        rows = _rows(tmp_path / "keyrate.csv")
        assert list(rows[0]) == list(cli.KEYRATE_HEADER)
        assert len(rows) == 101 * 4
        raw = (tmp_path / "keyrate.csv").read_bytes()
        assert b"\r\n" not in raw
        assert "R_realistic(beta=0.898)" in capsys.readouterr().out

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["keyrate", "--out", str(a)])
        main(["keyrate", "--out", str(b)])
        assert (a / "keyrate.csv").read_bytes() == (b / "keyrate.csv").read_bytes()


class TestSimulateMode:
    def test_reference(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path)]) == 0
        kv = _kv(tmp_path / "report.txt")
        assert float(kv["chi"]) == pytest.approx(2.25, abs=3 * float(kv["chi_se"]))
        assert float(kv["R_realistic_beta_0.898"]) == pytest.approx(0.30, abs=0.03)
        assert len(_rows(tmp_path / "session.csv")) == 40000
        assert (tmp_path / "session_truth.txt").exists()
        assert len(_rows(tmp_path / "frames.csv")) == 10

    def test_zero_excess(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("delta = 0\nn_el = 0\nn_le_eff = 0\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        kv = _kv(tmp_path / "report.txt")
        assert float(kv["epsilon"]) == pytest.approx(0.0, abs=3 * float(kv["epsilon_se"]))
        assert float(kv["chi"]) == pytest.approx(2.00, abs=3 * float(kv["chi_se"]))

    def test_n_frames_zero(self, tmp_path, capsys):
        cfg = tmp_path / "c.txt"
        cfg.write_text("n_frames = 0\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err
        assert err.startswith("error: config:") and err.count("\n") == 1

    def test_deterministic_csv(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text(FAST)
        for d in ("a", "b"):
            main(["simulate", "--config", str(cfg), "--out", str(tmp_path / d), "--seed", "5"])
        for name in ("session.csv", "report.txt", "frames.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_env_override(self, tmp_path, monkeypatch):
        cfg = tmp_path / "c.txt"
        cfg.write_text(FAST + "seed = 1\n")
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "cfg")])
        monkeypatch.setenv("GMCS_SEED", "2")
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "env")])
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "cli"), "--seed", "1"])
        a, b, c = (_kv(tmp_path / d / "session_truth.txt")["rng_seed"] for d in ("cfg", "env", "cli"))
        assert (a, b, c) == ("1", "2", "1")

    def test_bad_env_seed(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("GMCS_SEED", "x")
        assert main(["keyrate", "--out", str(tmp_path)]) == 2
        assert "GMCS_SEED" in capsys.readouterr().err


class TestCalibrateMode:
    def test_reference(self, tmp_path):
        assert main(["calibrate", "--out", str(tmp_path)]) == 0
        kv = _kv(tmp_path / "report.txt")
        assert float(kv["epsilon_A"]) == pytest.approx(0.056, abs=0.006)

    def test_zero_delta(self):
        cal = run_calibrate(parse_config_text("delta = 0\n"))
        assert cal.epsilon_A(16.9) == pytest.approx(0.0, abs=3 * 16.9 * cal.delta_se)

    def test_higher_variance_agrees(self):
        a = run_calibrate(parse_config_text("calib_V_A = 40000\n"))
        b = run_calibrate(parse_config_text("calib_V_A = 80000\n"))
        assert b.delta == pytest.approx(a.delta, rel=0.10)

    def test_low_variance_rejected(self):
        with pytest.raises(ConfigFileError):
            parse_config_text("calib_V_A = 100\n")


def test_module_entry_point_error_is_single_line(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("G = 1.5\n")
    r = subprocess.run(
        [sys.executable, "-m", "gmcs", "keyrate", "--config", str(cfg), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert r.returncode != 0
    assert r.stderr == "error: config: key=G line=1 G must lie in (0,1]\n"
