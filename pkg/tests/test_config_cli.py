import json

import pytest

from ntaverify.cli import main, run
from ntaverify.config import ConfigError, ExperimentConfig, parse_config, parse_config_string
from ntaverify.plotting import render_svg


class TestConfig:
    def test_defaults(self):
        cfg = parse_config_string("")
        assert cfg.domain.name == "sawtooth" and cfg.aperture == 4.0
        assert cfg.alpha == 8.0 and cfg.sweep.p_grid == [2.0, 3.0, 4.0, 8.0, 16.0]

    def test_values_parsed(self):
        cfg = parse_config_string("[domain]\nname = flat\ndim = 3\n[sweep]\np_grid = 2, 5 9\n"
                                  "[run]\nseed = 9\njobs = 2\n")
        assert cfg.domain.dim == 3 and cfg.sweep.p_grid == [2.0, 5.0, 9.0]
        assert cfg.seed == 9 and cfg.jobs == 2
        assert cfg.lipschitz == 0.0

    def test_aperture_below_bound(self):
        with pytest.raises(ConfigError, match=r"cone.aperture: aperture must exceed 1\+2M = 2"):
            parse_config_string("[cone]\naperture = 1.5\n")

    def test_grid_not_increasing(self):
        with pytest.raises(ConfigError, match="sweep.p_grid: grid not increasing"):
            parse_config_string("[sweep]\np_grid = 2 4 3\n")

    def test_errors_collected(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_string("[domain]\nh = 0.5\n[sweep]\nalpha = 2\ngamma = 2\n"
                                "p_extrapolate = 1.5\n")
        msg = str(exc.value)
        for part in ("domain.h", "sweep.alpha", "sweep.p_extrapolate"):
            assert part in msg

    def test_unknown_keys_and_sections(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config_string("[bogus]\nx = 1\n")
        with pytest.raises(ConfigError, match="domain.colour: unknown parameter"):
            parse_config_string("[domain]\ncolour = red\n")
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_config_string("[domain]\ndim = two\n")

    def test_levels_against_beta(self):
        with pytest.raises(ConfigError, match="beta"):
            parse_config_string("[sweep]\nlevels = 2 3\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "missing.ini")

    def test_digest_tracks_content(self):
        a, b = ExperimentConfig(), ExperimentConfig()
        assert a.digest() == b.digest()
        b.seed = 1
        assert a.digest() != b.digest()

    def test_profile_domain(self, tmp_path):
        prof = tmp_path / "p.txt"
        prof.write_text("dimension 2\ntruncation_radius 1\nknots\n-2 0\n0 0\n2 1\n")
        ini = tmp_path / "c.ini"
        ini.write_text(f"[domain]\nname = profile\nprofile = {prof}\n")
        dom = parse_config(ini).build_domain()
        assert dom.lipschitz == 0.5


class TestCli:
    def test_validate(self, tmp_path, capsys):
        ini = tmp_path / "c.ini"
        ini.write_text("[domain]\nname = flat\n")
        assert main(["validate", "--config", str(ini)]) == 0
        assert "configuration ok" in capsys.readouterr().out

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        ini = tmp_path / "bad.ini"
        ini.write_text("[cone]\naperture = 0.5\n")
        assert main(["validate", "--config", str(ini)]) == 2
        assert "aperture" in capsys.readouterr().err

    def test_run_writes_artifacts(self, tmp_path, capsys):
        out = tmp_path / "hardy"
        assert main(["run", "hardy", "--out", str(out), "--seed", "3"]) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["checks.csv", "hardy.csv", "manifest.json", "run.log"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["passed"] and manifest["seed"] == 3
        assert len(manifest["checks"]) == 4
        assert "started" not in manifest
        assert "hardy: PASS" in capsys.readouterr().out

    def test_failure_marker(self, tmp_path):
        cfg = parse_config_string("[budgets]\ncacciopoli = 0.01\n")
        out = tmp_path / "c"
        manifest = run(cfg, "cacciopoli", str(out))
        assert not manifest.passed
        assert "cacciopoli" in (out / "FAILED").read_text()

    def test_unknown_experiment(self):
        with pytest.raises(SystemExit):
            main(["run", "nonsense"])


class TestPlotting:
    def test_deterministic(self):
        series = [("a", [2, 3, 4], [1.0, 1.5, 1.2]), ("b", [2, 3], [0.5, float("inf")])]
        one = render_svg(series, [(4.0, "endpoint")], "p", "ratio")
        two = render_svg(series, [(4.0, "endpoint")], "p", "ratio")
        assert one == two
        assert one.startswith("<svg") and "endpoint" in one and one.count("<circle") == 4

    def test_empty_series(self):
        with pytest.raises(ValueError, match="empty"):
            render_svg([("a", [], [])])


def test_blank_optional_value_means_default():
    cfg = parse_config_string("[cone]\nheight =\n[sweep]\nalpha =\n")
    assert cfg.cone.height is None and cfg.alpha == 8.0
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config_string("[sweep]\ngamma =\n")
