from pathlib import Path

import pytest

from qlwave.cli import load_config

CONFIGS = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.yaml"))


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.grid.spacing > 0


def test_node_count_sets_spacing(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("grid: {rstar_min: 0.0, rstar_max: 10.0, n: 101}\n")
    cfg = load_config(p)
    assert abs(cfg.grid.spacing - 0.1) < 1e-15
    assert cfg.scaled(2).grid.n == 201
