import subprocess
import sys
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from ergomix.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, EXIT_RUNTIME, main
from ergomix.config import (DEFAULT_SEED, EXPERIMENTS, ConfigError, ExperimentConfig, Numerics,
                            parse_config, serialize)

MINIMAL = "[map]\nfamily = farey\n[experiment]\nname = glm2\n"


def test_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.numerics.grid_size == 4096 and cfg.numerics.n_max == 200
    assert cfg.numerics.N_samples == 100000 and cfg.seed == DEFAULT_SEED == 20180901


def test_alpha_range_named():
    with pytest.raises(ConfigError, match=r"alpha.*\(0,1\)"):
        parse_config("[map]\nfamily = t_alpha\nalpha = 1.5\n[experiment]\nname = glm2\n")


@pytest.mark.parametrize("text,key", [
    ("[map]\nfamily = farey\ncolour = red\n[experiment]\nname = glm2\n", "colour"),
    ("[map]\nfamily = farey\n[experiment]\nname = glm3\n", "glm3"),
    ("[map]\nfamily = farey\n[experiment]\nname = glm2\n[numerics]\nn_max = ten\n", "n_max"),
    ("[experiment]\nname = glm2\n", "map"),
    ("[map]\nfamily = farey\n", "experiment"),
    ("[map]\nfamily = farey\n[experiment]\nname = glm2\n[numerics]\ntheta_grid = 1:0:3\n",
     "theta_grid"),
    ("[map]\nfamily = farey\nalpha = 0.3\n[experiment]\nname = glm2\n", "alpha"),
])
def test_invalid_configs_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


def test_comments_are_ignored():
    cfg = parse_config("# a run\n[map]\nfamily = farey  # the map\n[experiment]\nname = llm\n")
    assert cfg.experiment == "llm"


@given(st.sampled_from(EXPERIMENTS), st.integers(0, 2 ** 64 - 1),
       st.floats(0.01, 0.99), st.integers(16, 10000), st.floats(1e-30, 10.0),
       st.sampled_from(["sqrt", "1", "10"]))
def test_round_trip(name, seed, alpha, grid, delta, ks):
    cfg = ExperimentConfig("t_alpha", name, alpha=alpha, seed=seed,
                           numerics=Numerics(grid_size=grid, delta=delta, k_schedule=ks),
                           output_dir="/tmp/x y")
    assert parse_config(serialize(cfg)) == cfg


def _write(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


def test_glm2_end_to_end(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["--config", cfg, "--output", str(tmp_path / "o")]) == EXIT_PASS
    csv = (tmp_path / "o" / "glm2.csv").read_text().splitlines()
    assert csv[0] == "n,c_n,target,residual" and len(csv) == 202
    assert "overall PASS" in (tmp_path / "o" / "summary.txt").read_text()
    prov = (tmp_path / "o" / "provenance.txt").read_text()
    assert "seed 20180901" in prov and "numpy" in prov


def test_check_assumptions_farey_fails(tmp_path):
    cfg = _write(tmp_path, "[map]\nfamily = farey\n[experiment]\nname = check_assumptions\n")
    assert main(["--config", cfg, "--output", str(tmp_path / "o")]) == EXIT_FAIL
    assert "FAIL A2" in (tmp_path / "o" / "summary.txt").read_text()


def test_config_error_exit(tmp_path):
    cfg = _write(tmp_path, "[map]\nfamily = t_alpha\nalpha = 2\n[experiment]\nname = glm2\n")
    assert main(["--config", cfg]) == EXIT_CONFIG
    assert main(["--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG


def test_runtime_error_exit(tmp_path):
    # the plateau construction lives on the unit interval
    cfg = _write(tmp_path, "[map]\nfamily = pm_halfline\n[experiment]\nname = slicing_bound\n")
    assert main(["--config", cfg, "--output", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert "ERROR" in (tmp_path / "o" / "summary.txt").read_text()


def test_seed_override_and_determinism(tmp_path):
    text = ("[map]\nfamily = farey\n[experiment]\nname = hitting_residues\n"
            "[numerics]\nN_samples = 3000\nn_max = 30\n")
    cfg = _write(tmp_path, text)
    outs = []
    for run in ("a", "b", "c"):
        seed = "99" if run == "c" else "5"
        main(["--config", cfg, "--output", str(tmp_path / run), "--seed", seed])
        outs.append((tmp_path / run / "hitting_residues.csv").read_bytes())
    assert outs[0] == outs[1] and outs[0] != outs[2]


def test_console_script(tmp_path):
    cfg = _write(tmp_path, "[map]\nfamily = pm_halfline\n[experiment]\nname = invariant_density\n")
    proc = subprocess.run([sys.executable, "-m", "ergomix.cli", "--config", cfg,
                           "--output", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == EXIT_PASS, proc.stderr
